//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are `nalgebra::DMatrix<Complex<R>>`. Vectorization is row-major:
//! `vec(F)[j * cols + k] = F[j, k]`, which makes
//! `(A ⊗ Bᵀ) vec(X) = vec(A X B)` and therefore
//! `(A ⊗ I + I ⊗ Bᵀ) vec(X) = vec(AX + XB)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{cabs, cexp, cplx, is_finite_c, Real};

pub type CMatrix<R> = DMatrix<Complex<R>>;
pub type CVector<R> = DVector<Complex<R>>;

/// Default cap on the number of entries a Kronecker product may produce.
pub const DEFAULT_ELEMENT_CAP: usize = 1 << 24;
/// Default spectral-norm cutoff accepted by [`mat_exp`].
pub const DEFAULT_EXP_CUTOFF: f64 = 1e4;

pub fn from_row_major<R: Real>(
    rows: usize,
    cols: usize,
    entries: Vec<Complex<R>>,
) -> Result<CMatrix<R>> {
    if entries.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "{} entries for a {rows}x{cols} matrix",
            entries.len()
        )));
    }
    if !entries.iter().all(|z| is_finite_c(*z)) {
        return Err(Error::NonFinite("matrix entries"));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &entries))
}

/// Row-major entries, the inverse of [`from_row_major`].
pub fn to_row_major<R: Real>(m: &CMatrix<R>) -> Vec<Complex<R>> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn identity<R: Real>(n: usize) -> CMatrix<R> {
    DMatrix::identity(n, n)
}

pub fn zeros<R: Real>(rows: usize, cols: usize) -> CMatrix<R> {
    DMatrix::zeros(rows, cols)
}

pub fn is_finite<R: Real>(m: &CMatrix<R>) -> bool {
    m.iter().all(|z| is_finite_c(*z))
}

fn ensure_finite<R: Real>(m: &CMatrix<R>, what: &'static str) -> Result<()> {
    if is_finite(m) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn ensure_square<R: Real>(m: &CMatrix<R>) -> Result<usize> {
    if m.nrows() == m.ncols() {
        Ok(m.nrows())
    } else {
        Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

pub fn scale<R: Real>(m: &CMatrix<R>, s: Complex<R>) -> CMatrix<R> {
    m.map(|z| z * s)
}

pub fn scale_real<R: Real>(m: &CMatrix<R>, s: R) -> CMatrix<R> {
    m.map(|z| Complex::new(z.re * s, z.im * s))
}

/// Kronecker product with the default element cap.
pub fn kron<R: Real>(a: &CMatrix<R>, b: &CMatrix<R>) -> Result<CMatrix<R>> {
    kron_capped(a, b, DEFAULT_ELEMENT_CAP)
}

/// Kronecker product; entry `(i·rb + k, j·cb + l)` is `a[i,j]·b[k,l]`.
pub fn kron_capped<R: Real>(a: &CMatrix<R>, b: &CMatrix<R>, cap: usize) -> Result<CMatrix<R>> {
    let rows = a.nrows().checked_mul(b.nrows());
    let cols = a.ncols().checked_mul(b.ncols());
    let requested = rows.zip(cols).and_then(|(r, c)| r.checked_mul(c));
    match requested {
        Some(n) if n <= cap => {}
        _ => {
            return Err(Error::ElementCap {
                requested: requested.unwrap_or(usize::MAX),
                cap,
            })
        }
    }
    let (rb, cb) = (b.nrows(), b.ncols());
    let mut out = DMatrix::zeros(a.nrows() * rb, a.ncols() * cb);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let aij = a[(i, j)];
            if aij == Complex::new(R::zero(), R::zero()) {
                continue;
            }
            for l in 0..cb {
                for k in 0..rb {
                    out[(i * rb + k, j * cb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    Ok(out)
}

/// Row-major flattening, matching `|F⟩⟩ = Σ f_jk |j,k⟩`.
pub fn vec<R: Real>(f: &CMatrix<R>) -> CVector<R> {
    DVector::from_vec(to_row_major(f))
}

pub fn unvec<R: Real>(v: &CVector<R>, rows: usize, cols: usize) -> Result<CMatrix<R>> {
    if v.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} cannot be reshaped to {rows}x{cols}",
            v.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, v.as_slice()))
}

/// Splits `M = M_H + i M_S` with both parts Hermitian.
pub fn herm_split<R: Real>(m: &CMatrix<R>) -> Result<(CMatrix<R>, CMatrix<R>)> {
    ensure_square(m)?;
    let adj = m.adjoint();
    let half = R::of(0.5);
    let h = (m + &adj).map(|z| Complex::new(z.re * half, z.im * half));
    // (M - M†) / (2i) = -i (M - M†) / 2
    let s = (m - &adj).map(|z| Complex::new(z.im * half, -z.re * half));
    Ok((h, s))
}

pub fn fro_norm<R: Real>(m: &CMatrix<R>) -> R {
    let mut acc = R::zero();
    for z in m.iter() {
        acc += z.re * z.re + z.im * z.im;
    }
    acc.sqrt()
}

pub fn singular_values<R: Real>(m: &CMatrix<R>) -> Vec<R> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<R> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// Largest singular value.
pub fn spectral_norm<R: Real>(m: &CMatrix<R>) -> R {
    if m.is_empty() {
        return R::zero();
    }
    // Cheap exits keep the hot paths (norm of zero / scalar) off the SVD.
    if m.nrows() == 1 && m.ncols() == 1 {
        return cabs(m[(0, 0)]);
    }
    singular_values(m).first().copied().unwrap_or_else(R::zero)
}

/// Smallest singular value of a square matrix (or `min(rows, cols)`-th one).
pub fn smallest_singular<R: Real>(m: &CMatrix<R>) -> R {
    if m.nrows() == 1 && m.ncols() == 1 {
        return cabs(m[(0, 0)]);
    }
    singular_values(m).last().copied().unwrap_or_else(R::zero)
}

pub fn one_norm<R: Real>(m: &CMatrix<R>) -> R {
    let mut best = R::zero();
    for j in 0..m.ncols() {
        let mut s = R::zero();
        for i in 0..m.nrows() {
            s += cabs(m[(i, j)]);
        }
        best = best.max(s);
    }
    best
}

pub fn commutator<R: Real>(a: &CMatrix<R>, b: &CMatrix<R>) -> CMatrix<R> {
    a * b - b * a
}

/// `‖M − M†‖`.
pub fn hermitian_defect<R: Real>(m: &CMatrix<R>) -> R {
    spectral_norm(&(m - m.adjoint()))
}

pub fn is_hermitian<R: Real>(m: &CMatrix<R>, tol: f64) -> bool {
    m.nrows() == m.ncols() && hermitian_defect(m) <= R::tol(tol) * R::one().max(spectral_norm(m))
}

/// `‖U†U − I‖`.
pub fn unitarity_defect<R: Real>(u: &CMatrix<R>) -> R {
    let n = u.ncols();
    spectral_norm(&(u.adjoint() * u - identity::<R>(n)))
}

/// Normality test `‖[M, M†]‖ ≤ 1e-12 · max(1, ‖M‖²)`.
pub fn is_normal<R: Real>(m: &CMatrix<R>) -> bool {
    is_normal_tol(m, 1e-12)
}

pub fn is_normal_tol<R: Real>(m: &CMatrix<R>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let adj = m.adjoint();
    let c = commutator(m, &adj);
    let nm = spectral_norm(m);
    spectral_norm(&c) <= R::tol(tol) * R::one().max(nm * nm)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermitianEigen<R: Real> {
    pub values: Vec<R>,
    pub vectors: CMatrix<R>,
}

impl<R: Real> HermitianEigen<R> {
    /// Rebuilds `U f(Λ) U†` for a scalar function of the eigenvalues.
    pub fn apply_fn(&self, f: impl Fn(R) -> Complex<R>) -> CMatrix<R> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let fj = f(self.values[j]);
            for i in 0..n {
                scaled[(i, j)] *= fj;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// Hermitian eigendecomposition; the input is symmetrized first.
pub fn hermitian_eigen<R: Real>(m: &CMatrix<R>) -> Result<HermitianEigen<R>> {
    let n = ensure_square(m)?;
    ensure_finite(m, "hermitian eigen input")?;
    if n == 0 {
        return Ok(HermitianEigen {
            values: vec![],
            vectors: zeros(0, 0),
        });
    }
    let half = R::of(0.5);
    let sym = (m + m.adjoint()).map(|z| Complex::new(z.re * half, z.im * half));
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermitianEigen { values, vectors })
}

/// Unitary eigendecomposition of a normal matrix: `M = U diag(values) U†`.
#[derive(Clone, Debug)]
pub struct NormalEigen<R: Real> {
    pub values: Vec<Complex<R>>,
    pub vectors: CMatrix<R>,
}

/// Diagonalizes a normal matrix through a generic Hermitian combination of
/// its Hermitian and skew parts, which share an eigenbasis. Fails if the
/// resulting basis does not diagonalize `m` to `1e-10 · max(1, ‖m‖)`.
pub fn normal_eigen<R: Real>(m: &CMatrix<R>) -> Result<NormalEigen<R>> {
    let n = ensure_square(m)?;
    let (h, s) = herm_split(m)?;
    let scale_m = R::one().max(spectral_norm(m));
    // Two irrational mixing weights; the second retries accidental degeneracy.
    for theta in [0.577_215_664_901_532_9_f64, 1.414_213_562_373_095_1] {
        let mix = &h + scale_real(&s, R::of(theta));
        let eig = hermitian_eigen(&mix)?;
        let u = &eig.vectors;
        let d = u.adjoint() * m * u;
        let mut off = d.clone();
        for i in 0..n {
            off[(i, i)] = Complex::new(R::zero(), R::zero());
        }
        if spectral_norm(&off) <= R::tol(1e-10) * scale_m {
            let values = (0..n).map(|i| d[(i, i)]).collect();
            return Ok(NormalEigen {
                values,
                vectors: u.clone(),
            });
        }
    }
    Err(Error::Numerical(
        "matrix is not normal enough for a unitary eigendecomposition".into(),
    ))
}

/// Matrix exponential with the default cutoff.
pub fn mat_exp<R: Real>(m: &CMatrix<R>) -> Result<CMatrix<R>> {
    mat_exp_with(m, DEFAULT_EXP_CUTOFF)
}

/// Matrix exponential. Normal inputs go through their unitary eigenbasis;
/// others use scaling and squaring with the degree-13 Padé approximant.
pub fn mat_exp_with<R: Real>(m: &CMatrix<R>, cutoff: f64) -> Result<CMatrix<R>> {
    let n = ensure_square(m)?;
    ensure_finite(m, "matrix exponential input")?;
    if n == 0 {
        return Ok(zeros(0, 0));
    }
    let norm = spectral_norm(m).as_f64();
    if norm > cutoff {
        return Err(Error::ExpCutoff { norm, cutoff });
    }
    if n == 1 {
        return Ok(DMatrix::from_element(1, 1, cexp(m[(0, 0)])));
    }
    if is_normal(m) {
        if let Ok(eig) = normal_eigen(m) {
            let mut scaled = eig.vectors.clone();
            for j in 0..n {
                let e = cexp(eig.values[j]);
                for i in 0..n {
                    scaled[(i, j)] *= e;
                }
            }
            return Ok(scaled * eig.vectors.adjoint());
        }
    }
    pade13(m)
}

// Higham (2005) degree-13 coefficients.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn pade13<R: Real>(m: &CMatrix<R>) -> Result<CMatrix<R>> {
    let n = m.nrows();
    let norm1 = one_norm(m).as_f64();
    let squarings = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = scale_real(m, R::of(2f64.powi(-squarings)));
    let b = |k: usize| Complex::new(R::of(PADE13[k]), R::zero());
    let id = identity::<R>(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (scale(&a6, b(13)) + scale(&a4, b(11)) + scale(&a2, b(9)))
        + scale(&a6, b(7))
        + scale(&a4, b(5))
        + scale(&a2, b(3))
        + scale(&id, b(1));
    let u = &a * u_inner;
    let v = &a6 * (scale(&a6, b(12)) + scale(&a4, b(10)) + scale(&a2, b(8)))
        + scale(&a6, b(6))
        + scale(&a4, b(4))
        + scale(&a2, b(2))
        + scale(&id, b(0));
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::Numerical("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if !is_finite(&r) {
        return Err(Error::NonFinite("matrix exponential output"));
    }
    Ok(r)
}

/// `e^{-i t H}` for Hermitian `H` through its eigendecomposition.
pub fn unitary_evolution<R: Real>(eig: &HermitianEigen<R>, t: R) -> CMatrix<R> {
    eig.apply_fn(|lam| crate::scalar::phase(lam * t))
}

/// Hermitian PSD square root; eigenvalues down to `-1e-10` are clamped to 0.
pub fn psd_sqrt<R: Real>(m: &CMatrix<R>) -> Result<CMatrix<R>> {
    psd_sqrt_floor(m, 0.0)
}

/// [`psd_sqrt`] with eigenvalues at or below `floor` treated as zero.
///
/// Rounding noise of size `u` in a near-null eigenvalue becomes `√u` after
/// the square root, so callers assembling unitaries pass a floor of a few
/// hundred ulps.
pub fn psd_sqrt_floor<R: Real>(m: &CMatrix<R>, floor: f64) -> Result<CMatrix<R>> {
    ensure_square(m)?;
    let scale_m = R::one().max(spectral_norm(m));
    let defect = hermitian_defect(m);
    if defect > R::tol(1e-12) * scale_m {
        return Err(Error::NotHermitian(defect.as_f64()));
    }
    let eig = hermitian_eigen(m)?;
    if let Some(&lo) = eig.values.first() {
        if lo < -R::tol(1e-10) {
            return Err(Error::NotPsd(lo.as_f64()));
        }
    }
    let floor = R::of(floor);
    Ok(eig.apply_fn(|lam| {
        let v = if lam <= floor { R::zero() } else { lam.sqrt() };
        Complex::new(v, R::zero())
    }))
}

/// Dense solve `M x = rhs` by LU with partial pivoting.
pub fn solve<R: Real>(m: &CMatrix<R>, rhs: &CVector<R>) -> Result<CVector<R>> {
    let n = ensure_square(m)?;
    if rhs.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "rhs of length {} for a {n}x{n} system",
            rhs.len()
        )));
    }
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::Numerical("singular system".into()))
}

/// Embeds `m` as the top-left block of an otherwise zero matrix.
pub fn embed_top_left<R: Real>(m: &CMatrix<R>, rows: usize, cols: usize) -> CMatrix<R> {
    let mut out = zeros(rows, cols);
    out.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
    out
}

/// Checks that `Q = A ⊗ I + I ⊗ Bᵀ` satisfies `Q vec(X) = vec(AX + XB)` on a
/// fixed non-symmetric probe. Pipelines run this before trusting any `Q`.
pub fn vec_convention_self_test<R: Real>() -> Result<()> {
    let e = |re: f64, im: f64| cplx::<R>(re, im);
    let a = DMatrix::from_row_slice(2, 2, &[e(0.1, 0.2), e(-0.3, 0.05), e(0.25, -0.1), e(0.4, 0.0)]);
    let b = DMatrix::from_row_slice(2, 2, &[e(0.0, 0.3), e(0.2, 0.0), e(-0.15, 0.1), e(0.05, -0.2)]);
    let x = DMatrix::from_row_slice(2, 2, &[e(1.0, 0.0), e(2.0, -1.0), e(-0.5, 0.5), e(0.3, 0.7)]);
    let i2 = identity::<R>(2);
    let q = kron(&a, &i2)? + kron(&i2, &b.transpose())?;
    let lhs = &q * vec(&x);
    let rhs = vec(&(&a * &x + &x * &b));
    let defect = (lhs - rhs).norm().as_f64();
    if defect > R::tol(1e-12).as_f64() {
        return Err(Error::SelfTest(defect));
    }
    Ok(())
}
