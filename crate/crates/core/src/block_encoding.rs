//! Explicit block-encoding unitaries for desk-scale checks.
//!
//! Register order is `(LCU ancilla, C ancilla, system)` with the first index
//! most significant, so the projector `Π` onto all-zero ancillas selects
//! the leading `N × N` block.

use num_complex::Complex;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, DEFAULT_ELEMENT_CAP};
use crate::lcu::LcuProgram;
use crate::scalar::{cabs, from_c64, Real};

#[derive(Clone, Debug)]
pub struct BlockEncoding<R: Real> {
    pub unitary: CMatrix<R>,
    /// Dimension of the range of `Π`.
    pub block_dim: usize,
    /// Normalization: the leading block approximates `target / alpha`.
    pub alpha: f64,
}

impl<R: Real> BlockEncoding<R> {
    pub fn dim(&self) -> usize {
        self.unitary.nrows()
    }

    pub fn unitarity_defect(&self) -> f64 {
        linalg::unitarity_defect(&self.unitary).as_f64()
    }
}

/// PREPARE/SELECT data for an LCU, with `V′ = V†·D_φ`.
#[derive(Clone, Debug)]
pub struct LcuCircuit<R: Real> {
    pub prepare: CMatrix<R>,
    /// `(L_i, R_i)` in ancilla order; padding slots hold identities.
    pub select_terms: Vec<(CMatrix<R>, CMatrix<R>)>,
    /// `e^{i arg x_i}`, one per ancilla slot.
    pub phases: Vec<Complex<R>>,
    pub unprime: CMatrix<R>,
    /// `Σ|x_i|`.
    pub l1: f64,
}

impl<R: Real> LcuCircuit<R> {
    pub fn ancilla_dim(&self) -> usize {
        self.prepare.nrows()
    }
}

/// `[[M, √(I−MM†)], [√(I−M†M), −M†]]` with `M = C/α`.
pub fn dilate<R: Real>(c: &CMatrix<R>, alpha: f64) -> Result<BlockEncoding<R>> {
    if !c.is_square() {
        return Err(Error::NotSquare {
            rows: c.nrows(),
            cols: c.ncols(),
        });
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let norm = linalg::spectral_norm(c).as_f64();
    if norm > alpha * (1.0 + R::tol(1e-12).as_f64()) {
        return Err(Error::Precondition(format!(
            "dilation needs ||C|| <= alpha, got {norm} > {alpha}"
        )));
    }
    let n = c.nrows();
    let m = linalg::scale_real(c, R::of(1.0 / alpha));
    let md = m.adjoint();
    let eye = linalg::identity::<R>(n);
    let floor = 256.0 * n as f64 * R::MACHINE_EPS;
    let top = linalg::psd_sqrt_floor(&(&eye - &m * &md), floor)?;
    let bottom = linalg::psd_sqrt_floor(&(&eye - &md * &m), floor)?;
    let mut u = linalg::zeros::<R>(2 * n, 2 * n);
    u.view_mut((0, 0), (n, n)).copy_from(&m);
    u.view_mut((0, n), (n, n)).copy_from(&top);
    u.view_mut((n, 0), (n, n)).copy_from(&bottom);
    u.view_mut((n, n), (n, n)).copy_from(&(-md));
    Ok(BlockEncoding {
        unitary: u,
        block_dim: n,
        alpha,
    })
}

/// Unit vector with entries `√(w_i/Σw)`, padded with zeros to `dim`
/// (or to the next power of two when `dim` is `None`).
pub fn prepare_state<R: Real>(weights: &[f64], dim: Option<usize>) -> Result<CVector<R>> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidParameter("weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("all weights are zero".into()));
    }
    let dim = dim.unwrap_or_else(|| weights.len().max(1).next_power_of_two());
    if dim < weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights do not fit in dimension {dim}",
            weights.len()
        )));
    }
    let mut v = CVector::<R>::zeros(dim);
    for (i, w) in weights.iter().enumerate() {
        v[i] = Complex::new(R::of((w / total).sqrt()), R::zero());
    }
    Ok(v)
}

/// A unitary whose first column is `state`: the Householder reflection
/// exchanging `e₀` and `state` (identity when they coincide).
pub fn prepare_unitary<R: Real>(state: &CVector<R>) -> Result<CMatrix<R>> {
    let d = state.len();
    let nrm = state.norm().as_f64();
    if (nrm - 1.0).abs() > R::tol(1e-10).as_f64() {
        return Err(Error::InvalidParameter(format!("state norm {nrm} is not 1")));
    }
    // A global phase on state[0] would break the reflection; make s₀ real.
    let s0 = state[0];
    let a0 = cabs(s0);
    let rot = if a0 > R::zero() {
        Complex::new(s0.re / a0, -s0.im / a0)
    } else {
        Complex::one()
    };
    let s = state.map(|z| z * rot);
    let mut v = s.clone();
    v[0] -= Complex::one();
    let vn = v.norm_squared();
    let mut h = linalg::identity::<R>(d);
    if vn.as_f64() > R::MACHINE_EPS * R::MACHINE_EPS {
        let two = Complex::new(R::of(2.0) / vn, R::zero());
        h -= &v * v.adjoint() * two;
    }
    // Undo the phase so H e₀ = state.
    let back = rot.conj();
    Ok(h.map(|z| z * back))
}

/// `(V†⊗I)(Σ_i |i⟩⟨i|⊗U_i)(V⊗I)` for `M = Σ w_i U_i` with `w_i ≥ 0`; the
/// leading block is `M / Σw`.
pub fn block_encode_lcu<R: Real>(weights: &[f64], unitaries: &[CMatrix<R>]) -> Result<BlockEncoding<R>> {
    if weights.len() != unitaries.len() || unitaries.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} unitaries",
            weights.len(),
            unitaries.len()
        )));
    }
    let d = unitaries[0].nrows();
    if unitaries.iter().any(|u| u.nrows() != d || u.ncols() != d) {
        return Err(Error::DimensionMismatch("unitaries must share one square shape".into()));
    }
    let v = prepare_unitary(&prepare_state::<R>(weights, None)?)?;
    let k = v.nrows();
    let eye = linalg::identity::<R>(d);
    let blocks: Vec<CMatrix<R>> = (0..k).map(|i| unitaries.get(i).cloned().unwrap_or_else(|| eye.clone())).collect();
    let total: f64 = weights.iter().sum();
    Ok(BlockEncoding {
        unitary: sandwich(&v.adjoint(), &blocks, &v, DEFAULT_ELEMENT_CAP)?,
        block_dim: d,
        alpha: total,
    })
}

/// `W_{ab} = Σ_i V′_{ai} V_{ib} S_i` for block-diagonal `S`.
fn sandwich<R: Real>(
    vp: &CMatrix<R>,
    blocks: &[CMatrix<R>],
    v: &CMatrix<R>,
    cap: usize,
) -> Result<CMatrix<R>> {
    let k = v.nrows();
    let d = blocks[0].nrows();
    let dim = k * d;
    if dim.saturating_mul(dim) > cap {
        return Err(Error::ElementCap {
            requested: dim.saturating_mul(dim),
            cap,
        });
    }
    let mut w = linalg::zeros::<R>(dim, dim);
    for a in 0..k {
        for b in 0..k {
            let mut acc = linalg::zeros::<R>(d, d);
            for (i, s) in blocks.iter().enumerate() {
                let f = vp[(a, i)] * v[(i, b)];
                if f.is_zero() {
                    continue;
                }
                acc += s.map(|z| z * f);
            }
            w.view_mut((a * d, b * d), (d, d)).copy_from(&acc);
        }
    }
    Ok(w)
}

/// PREPARE/SELECT data for a program.
pub fn lcu_circuit<R: Real>(program: &LcuProgram<R>) -> Result<LcuCircuit<R>> {
    let g = &program.generators;
    let mut weights = Vec::new();
    let mut select = Vec::new();
    let mut phases = Vec::new();
    program.try_for_each_term(|t| -> Result<()> {
        weights.push(t.coeff.norm());
        let ph = if t.coeff.norm() > 0.0 {
            t.coeff / t.coeff.norm()
        } else {
            num_complex::Complex64::one()
        };
        phases.push(from_c64::<R>(ph));
        select.push((g.unitary(&t.left)?, g.unitary(&t.right)?));
        Ok(())
    })?;
    let l1: f64 = weights.iter().sum();
    let v = prepare_unitary(&prepare_state::<R>(&weights, None)?)?;
    let k = v.nrows();
    let n = g.n();
    while select.len() < k {
        select.push((linalg::identity(n), linalg::identity(n)));
        phases.push(Complex::one());
    }
    let mut unprime = v.adjoint();
    for (j, ph) in phases.iter().enumerate() {
        let col = unprime.column(j) * *ph;
        unprime.set_column(j, &col);
    }
    Ok(LcuCircuit {
        prepare: v,
        select_terms: select,
        phases,
        unprime,
        l1,
    })
}

/// `W = (V′⊗I)·(Σ_i |i⟩⟨i| ⊗ (I⊗L_i)·U_C·(I⊗R_i))·(V⊗I)`; the leading
/// block is `(1/x) Σ x_i L_i (C/α) R_i` with `x = y·α`.
pub fn assemble<R: Real>(program: &LcuProgram<R>, u_c: &BlockEncoding<R>) -> Result<BlockEncoding<R>> {
    assemble_capped(program, u_c, DEFAULT_ELEMENT_CAP)
}

pub fn assemble_capped<R: Real>(
    program: &LcuProgram<R>,
    u_c: &BlockEncoding<R>,
    cap: usize,
) -> Result<BlockEncoding<R>> {
    let n = program.generators.n();
    if u_c.block_dim != n || u_c.dim() % n != 0 {
        return Err(Error::DimensionMismatch(format!(
            "C encoding has block {} and size {}, system is {n}",
            u_c.block_dim,
            u_c.dim()
        )));
    }
    // Refuse before building unitaries when the result cannot fit.
    let k = (program.term_count() as usize).max(1).next_power_of_two();
    let dim = k.saturating_mul(u_c.dim());
    if dim.saturating_mul(dim) > cap {
        return Err(Error::ElementCap {
            requested: dim.saturating_mul(dim),
            cap,
        });
    }
    let circuit = lcu_circuit(program)?;
    assemble_circuit(&circuit, u_c, program.alpha, cap)
}

/// Assembly from prepared circuit data.
pub fn assemble_circuit<R: Real>(
    circuit: &LcuCircuit<R>,
    u_c: &BlockEncoding<R>,
    alpha: f64,
    cap: usize,
) -> Result<BlockEncoding<R>> {
    let anc = u_c.dim() / u_c.block_dim;
    let blocks: Vec<CMatrix<R>> = circuit
        .select_terms
        .iter()
        .map(|(l, r)| {
            let el = linalg::identity::<R>(anc).kronecker(l);
            let er = linalg::identity::<R>(anc).kronecker(r);
            el * &u_c.unitary * er
        })
        .collect();
    Ok(BlockEncoding {
        unitary: sandwich(&circuit.unprime, &blocks, &circuit.prepare, cap)?,
        block_dim: u_c.block_dim,
        alpha: circuit.l1 * alpha,
    })
}

/// Same block with every phase folded into `L_i` and `V′ = V†`.
pub fn assemble_phase_in_select<R: Real>(
    program: &LcuProgram<R>,
    u_c: &BlockEncoding<R>,
) -> Result<BlockEncoding<R>> {
    let mut circuit = lcu_circuit(program)?;
    for ((l, _), ph) in circuit.select_terms.iter_mut().zip(circuit.phases.iter_mut()) {
        *l = l.map(|z| z * *ph);
        *ph = Complex::one();
    }
    circuit.unprime = circuit.prepare.adjoint();
    assemble_circuit(&circuit, u_c, program.alpha, DEFAULT_ELEMENT_CAP)
}

/// Leading `block_dim × block_dim` submatrix.
pub fn extract_block<R: Real>(be: &BlockEncoding<R>) -> CMatrix<R> {
    be.unitary.view((0, 0), (be.block_dim, be.block_dim)).into_owned()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub block_err: f64,
    pub unitarity_defect: f64,
    pub eps: f64,
    pub unitarity_tol: f64,
    pub pass: bool,
}

pub const UNITARITY_TOL: f64 = 1e-10;

/// `‖extract_block(be) − target‖` and the unitarity defect, each against
/// its tolerance.
pub fn verify_block_encoding<R: Real>(
    be: &BlockEncoding<R>,
    target: &CMatrix<R>,
    eps: f64,
) -> Result<BlockCheck> {
    if target.nrows() != be.block_dim || target.ncols() != be.block_dim {
        return Err(Error::DimensionMismatch(format!(
            "target is {}x{}, block is {}",
            target.nrows(),
            target.ncols(),
            be.block_dim
        )));
    }
    let block_err = linalg::spectral_norm(&(extract_block(be) - target)).as_f64();
    let unitarity_defect = be.unitarity_defect();
    let unitarity_tol = R::tol(UNITARITY_TOL).as_f64();
    Ok(BlockCheck {
        block_err,
        unitarity_defect,
        eps,
        unitarity_tol,
        pass: block_err <= eps && unitarity_defect <= unitarity_tol,
    })
}
