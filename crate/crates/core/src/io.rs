//! JSON formats for matrices, instances and reports.
//!
//! A matrix is `{"rows":R,"cols":C,"entries":[[re,im],...]}` in row-major
//! order. An instance file bundles `a`, `b`, `c`, `alpha` and optional
//! `p_a`/`p_b`.

use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::problem::{embed_rectangular, Roots, SylvesterInstance};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<[f64; 2]>,
}

impl MatrixJson {
    pub fn from_matrix<R: Real>(m: &CMatrix<R>) -> Self {
        MatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            entries: linalg::to_row_major(m)
                .into_iter()
                .map(|z| [z.re.as_f64(), z.im.as_f64()])
                .collect(),
        }
    }

    pub fn to_matrix<R: Real>(&self) -> Result<CMatrix<R>> {
        let data: Vec<Complex<R>> = self
            .entries
            .iter()
            .map(|[re, im]| Complex::new(R::of(*re), R::of(*im)))
            .collect();
        linalg::from_row_major(self.rows, self.cols, data)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub a: MatrixJson,
    pub b: MatrixJson,
    pub c: MatrixJson,
    /// Defaults to `‖C‖` when absent.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub p_a: Option<MatrixJson>,
    #[serde(default)]
    pub p_b: Option<MatrixJson>,
}

impl InstanceFile {
    pub fn from_instance<R: Real>(inst: &SylvesterInstance<R>) -> Self {
        InstanceFile {
            a: MatrixJson::from_matrix(&inst.a),
            b: MatrixJson::from_matrix(&inst.b),
            c: MatrixJson::from_matrix(&inst.c),
            alpha: Some(inst.alpha.as_f64()),
            p_a: inst.roots.as_ref().map(|r| MatrixJson::from_matrix(&r.p_a)),
            p_b: inst.roots.as_ref().map(|r| MatrixJson::from_matrix(&r.p_b)),
        }
    }
}

/// A loaded instance with the bookkeeping of its normalization.
#[derive(Clone, Debug)]
pub struct LoadedInstance<R: Real> {
    pub instance: SylvesterInstance<R>,
    /// `A, B, C, α` were divided by this factor (1 when untouched).
    pub scale: f64,
    /// Rows of the original `C` when it was rectangular.
    pub rect_rows: Option<usize>,
    pub c_pad: Option<f64>,
}

fn parse_error(what: &str, e: serde_json::Error) -> Error {
    Error::Parse(format!("{what}: {e} (line {}, column {})", e.line(), e.column()))
}

pub fn parse_instance<R: Real>(text: &str) -> Result<LoadedInstance<R>> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| parse_error("instance", e))?;
    let a = file.a.to_matrix::<R>()?;
    let b = file.b.to_matrix::<R>()?;
    let c = file.c.to_matrix::<R>()?;
    let alpha = match file.alpha {
        Some(v) => R::of(v),
        None => linalg::spectral_norm(&c),
    };
    let roots = match (file.p_a, file.p_b) {
        (Some(pa), Some(pb)) => Some(Roots {
            p_a: pa.to_matrix()?,
            p_b: pb.to_matrix()?,
        }),
        (None, None) => None,
        _ => return Err(Error::InvalidInstance("p_a and p_b must be given together".into())),
    };
    if a.nrows() != b.nrows() && roots.is_none() && a.is_square() && b.is_square() {
        let emb = embed_rectangular(&a, &b, &c, alpha, None)?;
        return Ok(LoadedInstance {
            instance: emb.instance,
            scale: emb.scale,
            rect_rows: Some(emb.m),
            c_pad: Some(emb.c_pad),
        });
    }
    let (instance, scale) = SylvesterInstance::normalized(a, b, c, alpha, roots)?;
    Ok(LoadedInstance {
        instance,
        scale,
        rect_rows: None,
        c_pad: None,
    })
}

pub fn load_instance<R: Real>(path: &Path) -> Result<LoadedInstance<R>> {
    let text = std::fs::read_to_string(path)?;
    parse_instance(&text)
}

pub fn instance_to_json<R: Real>(inst: &SylvesterInstance<R>) -> Result<String> {
    serde_json::to_string_pretty(&InstanceFile::from_instance(inst))
        .map_err(|e| Error::Parse(e.to_string()))
}

pub fn parse_matrix<R: Real>(text: &str) -> Result<CMatrix<R>> {
    let m: MatrixJson = serde_json::from_str(text).map_err(|e| parse_error("matrix", e))?;
    m.to_matrix()
}

pub fn matrix_to_json<R: Real>(m: &CMatrix<R>) -> Result<String> {
    serde_json::to_string(&MatrixJson::from_matrix(m)).map_err(|e| Error::Parse(e.to_string()))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = to_json_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
