//! Sylvester instances `AX + XB = C`, their reductions, and case selection.

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::scalar::{cabs, Real};

/// Which solution identity applies to an instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseTag {
    Normal,
    PositiveHermitianPart,
    BZero,
    PositiveWithRoots,
    GeneralChebyshev,
}

impl CaseTag {
    pub const ALL: [CaseTag; 5] = [
        CaseTag::Normal,
        CaseTag::PositiveHermitianPart,
        CaseTag::BZero,
        CaseTag::PositiveWithRoots,
        CaseTag::GeneralChebyshev,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CaseTag::Normal => "normal",
            CaseTag::PositiveHermitianPart => "positive-hermitian-part",
            CaseTag::BZero => "b-zero",
            CaseTag::PositiveWithRoots => "positive-with-roots",
            CaseTag::GeneralChebyshev => "general-chebyshev",
        }
    }

    /// Accepts the kebab-case name plus a few short aliases.
    pub fn parse(s: &str) -> Option<CaseTag> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Some(CaseTag::Normal),
            "positive-hermitian-part" | "pos-herm" | "posherm" | "lyapunov" => {
                Some(CaseTag::PositiveHermitianPart)
            }
            "b-zero" | "bzero" => Some(CaseTag::BZero),
            "positive-with-roots" | "positive" => Some(CaseTag::PositiveWithRoots),
            "general-chebyshev" | "general" | "chebyshev" => Some(CaseTag::GeneralChebyshev),
            _ => None,
        }
    }
}

impl std::fmt::Display for CaseTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Square roots `P_A² = A`, `P_B² = B`.
#[derive(Clone, Debug, PartialEq)]
pub struct Roots<R: Real> {
    pub p_a: CMatrix<R>,
    pub p_b: CMatrix<R>,
}

/// An instance of `AX + XB = C` with `‖A‖, ‖B‖ ≤ 1/2` and `‖C‖ ≤ α`.
#[derive(Clone, Debug, PartialEq)]
pub struct SylvesterInstance<R: Real> {
    pub a: CMatrix<R>,
    pub b: CMatrix<R>,
    pub c: CMatrix<R>,
    pub alpha: R,
    pub roots: Option<Roots<R>>,
}

const NORM_SLACK: f64 = 1e-12;
const ROOT_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-10;
pub const NORMALITY_TOL: f64 = 1e-10;
pub const BZERO_TOL: f64 = 1e-14;
pub const SINGULAR_TOL: f64 = 1e-12;

impl<R: Real> SylvesterInstance<R> {
    pub fn new(
        a: CMatrix<R>,
        b: CMatrix<R>,
        c: CMatrix<R>,
        alpha: R,
        roots: Option<Roots<R>>,
    ) -> Result<Self> {
        let inst = SylvesterInstance {
            a,
            b,
            c,
            alpha,
            roots,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Builds an instance after dividing `A, B, C, α` by
    /// `s = max(1, 2‖A‖, 2‖B‖)`, which leaves the solution unchanged.
    /// Roots are divided by `√s`. Returns the instance and `s`.
    pub fn normalized(
        a: CMatrix<R>,
        b: CMatrix<R>,
        c: CMatrix<R>,
        alpha: R,
        roots: Option<Roots<R>>,
    ) -> Result<(Self, f64)> {
        check_shapes(&a, &b, &c)?;
        let two = R::of(2.0);
        let s = R::one()
            .max(two * linalg::spectral_norm(&a))
            .max(two * linalg::spectral_norm(&b));
        if s == R::one() {
            return Ok((Self::new(a, b, c, alpha, roots)?, 1.0));
        }
        let inv = R::one() / s;
        let rinv = R::one() / s.sqrt();
        let roots = roots.map(|r| Roots {
            p_a: linalg::scale_real(&r.p_a, rinv),
            p_b: linalg::scale_real(&r.p_b, rinv),
        });
        let inst = Self::new(
            linalg::scale_real(&a, inv),
            linalg::scale_real(&b, inv),
            linalg::scale_real(&c, inv),
            alpha * inv,
            roots,
        )?;
        Ok((inst, s.as_f64()))
    }

    pub fn validate(&self) -> Result<()> {
        check_shapes(&self.a, &self.b, &self.c)?;
        for (m, what) in [(&self.a, "A"), (&self.b, "B"), (&self.c, "C")] {
            if !linalg::is_finite(m) {
                return Err(Error::NonFinite(what));
            }
        }
        if !self.alpha.is_finite() || self.alpha < R::zero() {
            return Err(Error::InvalidInstance("alpha must be finite and non-negative".into()));
        }
        let half = R::of(0.5) + R::tol(NORM_SLACK);
        let na = linalg::spectral_norm(&self.a);
        let nb = linalg::spectral_norm(&self.b);
        if na > half || nb > half {
            return Err(Error::InvalidInstance(format!(
                "norms must be at most 1/2, got |A| = {:.6}, |B| = {:.6}",
                na.as_f64(),
                nb.as_f64()
            )));
        }
        let nc = linalg::spectral_norm(&self.c);
        if nc > self.alpha + R::tol(NORM_SLACK) * R::one().max(self.alpha) {
            return Err(Error::InvalidInstance(format!(
                "|C| = {:.6} exceeds alpha = {:.6}",
                nc.as_f64(),
                self.alpha.as_f64()
            )));
        }
        if let Some(r) = &self.roots {
            let n = self.n();
            for (p, m, what) in [(&r.p_a, &self.a, "p_a"), (&r.p_b, &self.b, "p_b")] {
                if p.nrows() != n || p.ncols() != n {
                    return Err(Error::DimensionMismatch(format!("{what} must be {n}x{n}")));
                }
                let defect = linalg::spectral_norm(&(p * p - m));
                if defect > R::tol(ROOT_TOL) {
                    return Err(Error::InvalidInstance(format!(
                        "{what} squared differs from its matrix by {:.3e}",
                        defect.as_f64()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn with_c(&self, c: CMatrix<R>) -> Result<Self> {
        let alpha = self.alpha.max(linalg::spectral_norm(&c));
        Self::new(self.a.clone(), self.b.clone(), c, alpha, self.roots.clone())
    }
}

fn check_shapes<R: Real>(a: &CMatrix<R>, b: &CMatrix<R>, c: &CMatrix<R>) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if b.nrows() != n || b.ncols() != n || c.nrows() != n || c.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "A is {n}x{n} but B is {}x{} and C is {}x{}",
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInstance("empty matrices".into()));
    }
    Ok(())
}

/// `Q = A ⊗ I + I ⊗ Bᵀ` for square or rectangular-coupled pairs
/// (A is M×M, B is N×N).
pub fn q_of<R: Real>(a: &CMatrix<R>, b: &CMatrix<R>) -> Result<CMatrix<R>> {
    let im = linalg::identity::<R>(a.nrows());
    let i_n = linalg::identity::<R>(b.nrows());
    Ok(linalg::kron(a, &i_n)? + linalg::kron(&im, &b.transpose())?)
}

pub fn build_q<R: Real>(inst: &SylvesterInstance<R>) -> Result<CMatrix<R>> {
    q_of(&inst.a, &inst.b)
}

/// `κ = 1/σ_min(Q)`.
pub fn kappa<R: Real>(inst: &SylvesterInstance<R>) -> Result<f64> {
    kappa_of_q(&build_q(inst)?)
}

pub fn kappa_of_q<R: Real>(q: &CMatrix<R>) -> Result<f64> {
    let smin = linalg::smallest_singular(q).as_f64();
    if smin <= SINGULAR_TOL {
        return Err(Error::SingularQ(smin));
    }
    Ok(1.0 / smin)
}

/// `Q`, `κ`, and the eigenvalues `γ_j` of A and `λ_k` of B.
#[derive(Clone, Debug)]
pub struct SpectralData<R: Real> {
    pub q: CMatrix<R>,
    pub kappa: f64,
    pub eigs_a: Vec<Complex<R>>,
    pub eigs_b: Vec<Complex<R>>,
}

pub fn eigenvalues<R: Real>(m: &CMatrix<R>) -> Result<Vec<Complex<R>>> {
    if m.nrows() == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    if linalg::is_hermitian(m, 1e-12) {
        let e = linalg::hermitian_eigen(m)?;
        return Ok(e.values.into_iter().map(|v| Complex::new(v, R::zero())).collect());
    }
    let schur = m.clone().schur();
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

pub fn spectral_data<R: Real>(inst: &SylvesterInstance<R>) -> Result<SpectralData<R>> {
    let q = build_q(inst)?;
    let kappa = kappa_of_q(&q)?;
    Ok(SpectralData {
        q,
        kappa,
        eigs_a: eigenvalues(&inst.a)?,
        eigs_b: eigenvalues(&inst.b)?,
    })
}

/// `‖[Q, Q†]‖` without forming `Q`.
///
/// `[Q, Q†] = [A, A†] ⊗ I + I ⊗ ([B, B†]ᵀ)*`-type sum of commuting Hermitian
/// terms, so its norm is `max |μ_i − ν_j|` over eigenvalues μ of `[A, A†]`
/// and ν of `[B, B†]`.
pub fn q_commutator_norm<R: Real>(a: &CMatrix<R>, b: &CMatrix<R>) -> Result<f64> {
    let ca = linalg::commutator(a, &a.adjoint());
    let cb = linalg::commutator(b, &b.adjoint());
    let mu = linalg::hermitian_eigen(&ca)?.values;
    let nu = linalg::hermitian_eigen(&cb)?.values;
    let mut best = R::zero();
    for &m in &mu {
        for &v in &nu {
            best = best.max((m - v).abs());
        }
    }
    Ok(best.as_f64())
}

fn min_eig<R: Real>(m: &CMatrix<R>) -> Result<f64> {
    Ok(linalg::hermitian_eigen(m)?
        .values
        .first()
        .map(|v| v.as_f64())
        .unwrap_or(0.0))
}

/// `λ_min(Q_H) = λ_min(A_H) + λ_min(B_H)`.
pub fn min_eig_q_h<R: Real>(inst: &SylvesterInstance<R>) -> Result<f64> {
    let (ah, _) = linalg::herm_split(&inst.a)?;
    let (bh, _) = linalg::herm_split(&inst.b)?;
    Ok(min_eig(&ah)? + min_eig(&bh)?)
}

/// Case classification with priority
/// BZero > PositiveWithRoots > Normal > PositiveHermitianPart > GeneralChebyshev.
pub fn classify<R: Real>(inst: &SylvesterInstance<R>) -> Result<CaseTag> {
    if linalg::spectral_norm(&inst.b).as_f64() <= BZERO_TOL {
        return Ok(CaseTag::BZero);
    }
    if inst.roots.is_some()
        && linalg::is_hermitian(&inst.a, 1e-12)
        && linalg::is_hermitian(&inst.b, 1e-12)
        && min_eig(&inst.a)? + min_eig(&inst.b)? > POSITIVITY_TOL
    {
        return Ok(CaseTag::PositiveWithRoots);
    }
    if q_commutator_norm(&inst.a, &inst.b)? <= NORMALITY_TOL {
        return Ok(CaseTag::Normal);
    }
    if min_eig_q_h(inst)? > POSITIVITY_TOL {
        return Ok(CaseTag::PositiveHermitianPart);
    }
    Ok(CaseTag::GeneralChebyshev)
}

/// Square instance produced from a rectangular `M×N` problem.
#[derive(Clone, Debug)]
pub struct RectEmbedding<R: Real> {
    pub instance: SylvesterInstance<R>,
    /// Factor the padded problem was divided by to restore `‖A'‖ ≤ 1/2`.
    pub scale: f64,
    /// The padding constant placed on the new diagonal block.
    pub c_pad: f64,
    /// κ of the original rectangular operator.
    pub kappa_rect: f64,
    /// κ of the padded operator before rescaling.
    pub kappa_padded: f64,
    pub m: usize,
}

/// Default padding constant `1 + 2/κ + 0.1`.
pub fn default_c_pad(kappa: f64) -> f64 {
    1.0 + 2.0 / kappa + 0.1
}

/// Pads `AX + XB = C` with `A` M×M, `B` N×N, `C` M×N (M ≤ N) to the N×N
/// problem `A' = diag(A, c_pad I)`, `C' = [C; 0]`, whose solution is
/// `[X; 0]`. The result is rescaled to satisfy the norm bound.
pub fn embed_rectangular<R: Real>(
    a: &CMatrix<R>,
    b: &CMatrix<R>,
    c: &CMatrix<R>,
    alpha: R,
    c_pad: Option<f64>,
) -> Result<RectEmbedding<R>> {
    let (m, n) = (a.nrows(), b.nrows());
    if a.ncols() != m || b.ncols() != n {
        return Err(Error::DimensionMismatch("A and B must be square".into()));
    }
    if c.nrows() != m || c.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "C must be {m}x{n}, got {}x{}",
            c.nrows(),
            c.ncols()
        )));
    }
    if m > n {
        return Err(Error::InvalidInstance(format!(
            "M = {m} > N = {n}; transpose the problem first"
        )));
    }
    let kappa_rect = kappa_of_q(&q_of(a, b)?)?;
    if m == n {
        let (instance, scale) =
            SylvesterInstance::normalized(a.clone(), b.clone(), c.clone(), alpha, None)?;
        return Ok(RectEmbedding {
            instance,
            scale,
            c_pad: c_pad.unwrap_or(0.0),
            kappa_rect,
            kappa_padded: kappa_rect,
            m,
        });
    }
    let pad = c_pad.unwrap_or_else(|| default_c_pad(kappa_rect));
    if !(pad > 1.0 + 1.0 / kappa_rect) {
        return Err(Error::InvalidParameter(format!(
            "c_pad = {pad} must exceed 1 + 1/kappa = {}",
            1.0 + 1.0 / kappa_rect
        )));
    }
    let mut a2 = linalg::zeros::<R>(n, n);
    a2.view_mut((0, 0), (m, m)).copy_from(a);
    for i in m..n {
        a2[(i, i)] = Complex::new(R::of(pad), R::zero());
    }
    let c2 = linalg::embed_top_left(c, n, n);
    let kappa_padded = kappa_of_q(&q_of(&a2, b)?)?;
    let (instance, scale) = SylvesterInstance::normalized(a2, b.clone(), c2, alpha, None)?;
    Ok(RectEmbedding {
        instance,
        scale,
        c_pad: pad,
        kappa_rect,
        kappa_padded,
        m,
    })
}

/// `A ↦ [[0, A], [A†, 0]]`, `C ↦ [[C, 0], [0, 0]]`, `B = 0`. The original
/// solution `A⁻¹C` sits in the lower-left block of the dilated solution.
pub fn hermitian_dilation<R: Real>(inst: &SylvesterInstance<R>) -> Result<SylvesterInstance<R>> {
    if linalg::spectral_norm(&inst.b).as_f64() > BZERO_TOL {
        return Err(Error::Precondition("hermitian dilation requires B = 0".into()));
    }
    let n = inst.n();
    let mut a2 = linalg::zeros::<R>(2 * n, 2 * n);
    a2.view_mut((0, n), (n, n)).copy_from(&inst.a);
    a2.view_mut((n, 0), (n, n)).copy_from(&inst.a.adjoint());
    let c2 = linalg::embed_top_left(&inst.c, 2 * n, 2 * n);
    SylvesterInstance::new(a2, linalg::zeros(2 * n, 2 * n), c2, inst.alpha, None)
}

/// The lower-left `n×n` block of a dilated solution.
pub fn undilate_solution<R: Real>(x: &CMatrix<R>, n: usize) -> CMatrix<R> {
    x.view((n, 0), (n, n)).into_owned()
}

/// Multiplies `A, B, C` by a unit phase; roots pick up its principal root.
pub fn phase_normalize<R: Real>(
    inst: &SylvesterInstance<R>,
    phase: Complex<R>,
) -> Result<SylvesterInstance<R>> {
    if (cabs(phase) - R::one()).abs().as_f64() > 1e-14_f64.max(10.0 * R::MACHINE_EPS) {
        return Err(Error::InvalidParameter("phase must have unit modulus".into()));
    }
    let root_phase = {
        let theta = phase.im.atan2(phase.re) * R::of(0.5);
        Complex::new(theta.cos(), theta.sin())
    };
    let roots = inst.roots.as_ref().map(|r| Roots {
        p_a: linalg::scale(&r.p_a, root_phase),
        p_b: linalg::scale(&r.p_b, root_phase),
    });
    SylvesterInstance::new(
        linalg::scale(&inst.a, phase),
        linalg::scale(&inst.b, phase),
        linalg::scale(&inst.c, phase),
        inst.alpha,
        roots,
    )
}

/// Convenience constructor for a 1×1 instance.
pub fn scalar_instance(a: f64, b: f64, c: f64) -> Result<SylvesterInstance<f64>> {
    let m = |v: f64| DMatrix::from_element(1, 1, Complex::new(v, 0.0));
    SylvesterInstance::new(m(a), m(b), m(c), c.abs(), None)
}
