//! Instance generators: random case-targeted instances and the Poisson problem.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::problem::{self, classify, CaseTag, Roots, SylvesterInstance};

type M = CMatrix<f64>;

/// Entries with real and imaginary parts uniform in `[−1, 1)`.
pub fn random_cmatrix(rng: &mut (impl Rng + ?Sized), rows: usize, cols: usize) -> M {
    DMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

/// Haar-like unitary from the QR factor of a random matrix.
pub fn random_unitary(rng: &mut (impl Rng + ?Sized), n: usize) -> M {
    let z = random_cmatrix(rng, n, n);
    let qr = z.qr();
    let (q, r) = (qr.q(), qr.r());
    // Fix column phases so the distribution does not depend on QR sign choices.
    let mut q = q;
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Random Hermitian matrix of unit spectral norm.
pub fn random_hermitian_unit(rng: &mut (impl Rng + ?Sized), n: usize) -> M {
    let z = random_cmatrix(rng, n, n);
    let h = (&z + z.adjoint()).map(|v| v * 0.5);
    let nrm = linalg::spectral_norm(&h);
    if nrm > 0.0 {
        h.map(|v| v / nrm)
    } else {
        linalg::identity(n)
    }
}

fn with_eigenvalues(u: &M, values: &[Complex64]) -> M {
    let mut d = u.clone();
    for (j, &v) in values.iter().enumerate() {
        for i in 0..u.nrows() {
            d[(i, j)] *= v;
        }
    }
    d * u.adjoint()
}

fn unit_c(rng: &mut (impl Rng + ?Sized), n: usize) -> (M, f64) {
    let c = random_cmatrix(rng, n, n);
    let nrm = linalg::spectral_norm(&c);
    (c.map(|v| v / nrm), 1.0)
}

/// Random square instance with `‖A‖, ‖B‖` uniform in `[0.1, 0.5]` and
/// `α = ‖C‖`.
pub fn random_instance<G: Rng + ?Sized>(rng: &mut G, n: usize) -> Result<SylvesterInstance<f64>> {
    let scaled = |rng: &mut G| {
        let m = random_cmatrix(rng, n, n);
        let s = rng.random_range(0.1..0.5) / linalg::spectral_norm(&m);
        m.map(|v| v * s)
    };
    let a = scaled(rng);
    let b = scaled(rng);
    let c = random_cmatrix(rng, n, n);
    let alpha = linalg::spectral_norm(&c);
    SylvesterInstance::new(a, b, c, alpha, None)
}

/// Magnitudes from `lo` to `hi` with the endpoints included.
fn spread(rng: &mut (impl Rng + ?Sized), n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => rng.random_range(lo..=hi),
        })
        .collect()
}

/// Bisects `f(μ) = κ(μ)` towards `target` on `[lo, hi]`, with κ assumed
/// decreasing in μ.
fn bisect_kappa(
    target: f64,
    mut lo: f64,
    mut hi: f64,
    f: impl Fn(f64) -> Result<SylvesterInstance<f64>>,
) -> Result<SylvesterInstance<f64>> {
    let kappa_at = |mu: f64| -> f64 {
        f(mu)
            .ok()
            .and_then(|i| problem::kappa(&i).ok())
            .unwrap_or(f64::INFINITY)
    };
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if kappa_at(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    f(0.5 * (lo + hi))
}

/// A random instance of the requested case with `κ` close to `kappa_target`.
pub fn gen_random<G: Rng + ?Sized>(
    case: CaseTag,
    n: usize,
    kappa_target: f64,
    rng: &mut G,
) -> Result<SylvesterInstance<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    if !(kappa_target >= 2.0) {
        return Err(Error::InvalidParameter(format!(
            "kappa target must be at least 2 (norms are capped at 1/2), got {kappa_target}"
        )));
    }
    let k = kappa_target;
    let inst = match case {
        CaseTag::BZero => {
            let mags = spread(rng, n, 1.0 / k, 0.5);
            let vals: Vec<Complex64> = mags
                .iter()
                .enumerate()
                .map(|(i, &m)| Complex64::new(if i % 2 == 0 { m } else { -m }, 0.0))
                .collect();
            let u = random_unitary(rng, n);
            let (c, alpha) = unit_c(rng, n);
            SylvesterInstance::new(with_eigenvalues(&u, &vals), linalg::zeros(n, n), c, alpha, None)?
        }
        CaseTag::Normal => {
            let lo = 1.0 / (2.0 * k);
            let side = |rng: &mut G| {
                let vals: Vec<Complex64> = (0..n)
                    .map(|i| {
                        if i == 0 {
                            return Complex64::new(lo, 0.0);
                        }
                        let re = rng.random_range(lo..0.45);
                        let im_max = (0.2025 - re * re).max(0.0).sqrt();
                        Complex64::new(re, rng.random_range(-im_max..=im_max))
                    })
                    .collect();
                let u = random_unitary(rng, n);
                with_eigenvalues(&u, &vals)
            };
            let a = side(rng);
            let b = side(rng);
            let (c, alpha) = unit_c(rng, n);
            SylvesterInstance::new(a, b, c, alpha, None)?
        }
        CaseTag::PositiveWithRoots => {
            let lo = 1.0 / (2.0 * k);
            let side = |rng: &mut G| {
                let vals: Vec<Complex64> =
                    spread(rng, n, lo, 0.5).into_iter().map(|v| Complex64::new(v, 0.0)).collect();
                let roots: Vec<Complex64> = vals.iter().map(|v| v.sqrt()).collect();
                let u = random_unitary(rng, n);
                (with_eigenvalues(&u, &vals), with_eigenvalues(&u, &roots))
            };
            let (a, p_a) = side(rng);
            let (b, p_b) = side(rng);
            let (c, alpha) = unit_c(rng, n);
            SylvesterInstance::new(a, b, c, alpha, Some(Roots { p_a, p_b }))?
        }
        CaseTag::PositiveHermitianPart => {
            if n < 2 {
                return Err(Error::InvalidParameter(
                    "a non-normal instance needs n >= 2".into(),
                ));
            }
            let part = |rng: &mut G| {
                let vals: Vec<Complex64> =
                    (0..n).map(|_| Complex64::new(rng.random_range(0.0..0.05), 0.0)).collect();
                let p = with_eigenvalues(&random_unitary(rng, n), &vals);
                let kk = random_hermitian_unit(rng, n).map(|v| v * 0.1);
                p + kk.map(|v| v * Complex64::new(0.0, 1.0))
            };
            let na = part(rng);
            let nb = part(rng);
            let (c, alpha) = unit_c(rng, n);
            let build = |mu: f64| {
                let shift = linalg::scale_real(&linalg::identity::<f64>(n), mu);
                SylvesterInstance::new(&na + &shift, &nb + &shift, c.clone(), alpha, None)
            };
            let hi = 0.5 - linalg::spectral_norm(&na).max(linalg::spectral_norm(&nb));
            bisect_kappa(k, 1e-6, hi, build)?
        }
        CaseTag::GeneralChebyshev => {
            if n < 2 {
                return Err(Error::InvalidParameter(
                    "a non-normal instance needs n >= 2".into(),
                ));
            }
            let b_shift = 0.02;
            let mut upper = random_cmatrix(rng, n, n);
            for i in 0..n {
                for j in 0..=i {
                    upper[(i, j)] = Complex64::new(0.0, 0.0);
                }
            }
            let un = linalg::spectral_norm(&upper);
            let upper = upper.map(|v| v * (0.05 / un));
            let u = random_unitary(rng, n);
            let build = |s: f64| {
                let mut d = upper.clone();
                for i in 0..n {
                    d[(i, i)] = Complex64::new(if i % 2 == 0 { s } else { -s }, 0.0);
                }
                let a = &u * d * u.adjoint();
                let b = linalg::scale_real(&linalg::identity::<f64>(n), b_shift);
                let c = linalg::identity::<f64>(n);
                SylvesterInstance::new(a, b, c, 1.0, None)
            };
            bisect_kappa(k, b_shift + 1e-6, 0.45, build)?
        }
    };
    let got = classify(&inst)?;
    if got != case {
        return Err(Error::InvalidInstance(format!(
            "generated instance classifies as {got}, not {case}"
        )));
    }
    let kappa = problem::kappa(&inst)?;
    if (kappa - kappa_target).abs() > 0.2 * kappa_target {
        return Err(Error::InvalidInstance(format!(
            "could not reach kappa {kappa_target}; got {kappa:.4}"
        )));
    }
    Ok(inst)
}

/// Largest Poisson grid accepted (its `Q` has `n⁴` entries).
pub const POISSON_MAX_N: usize = 64;

/// `P²X + XP² = C` on an `n×n` grid: `A = B = L/(2‖L‖)` for the Dirichlet
/// second-difference Laplacian `L`, roots `√A`, and
/// `C_jk = sin(π(j+1)/(n+1)) sin(π(k+1)/(n+1))`.
pub fn gen_poisson(n: usize) -> Result<SylvesterInstance<f64>> {
    if n < 2 {
        return Err(Error::InvalidParameter("Poisson grid needs n >= 2".into()));
    }
    if n > POISSON_MAX_N {
        return Err(Error::ElementCap {
            requested: n.pow(4),
            cap: linalg::DEFAULT_ELEMENT_CAP,
        });
    }
    let l = laplacian(n);
    let a = linalg::scale_real(&l, 1.0 / (2.0 * linalg::spectral_norm(&l)));
    let p = linalg::psd_sqrt(&a)?;
    let h = PI / (n as f64 + 1.0);
    let c = DMatrix::from_fn(n, n, |j, k| {
        Complex64::new(((j + 1) as f64 * h).sin() * ((k + 1) as f64 * h).sin(), 0.0)
    });
    let alpha = linalg::spectral_norm(&c);
    SylvesterInstance::new(a.clone(), a, c, alpha, Some(Roots { p_a: p.clone(), p_b: p }))
}

/// Dirichlet second-difference matrix `tridiag(−1, 2, −1)`.
pub fn laplacian(n: usize) -> M {
    DMatrix::from_fn(n, n, |i, j| {
        let v = if i == j {
            2.0
        } else if i.abs_diff(j) == 1 {
            -1.0
        } else {
            0.0
        };
        Complex64::new(v, 0.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::oracle_solve;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for n in 1..=5 {
            assert!(linalg::unitarity_defect(&random_unitary(&mut rng, n)) < 1e-12);
        }
    }

    #[test]
    fn random_cases_hit_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for case in CaseTag::ALL {
            for (n, k) in [(2usize, 2.5f64), (3, 5.0), (4, 10.0)] {
                let inst = gen_random(case, n, k, &mut rng).unwrap_or_else(|e| panic!("{case} {n} {k}: {e}"));
                assert_eq!(classify(&inst).unwrap(), case);
                let kappa = problem::kappa(&inst).unwrap();
                assert!((kappa - k).abs() <= 0.2 * k, "{case}: {kappa}");
            }
        }
    }

    #[test]
    fn bzero_two_by_two_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = gen_random(CaseTag::BZero, 2, 2.0, &mut rng).unwrap();
        let e = linalg::hermitian_eigen(&inst.a).unwrap().values;
        assert!((e[0] + 0.5).abs() < 1e-12 && (e[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn normal_kappa_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = gen_random(CaseTag::Normal, 4, 10.0, &mut rng).unwrap();
        let k = problem::kappa(&inst).unwrap();
        assert!((8.0..=12.0).contains(&k), "{k}");
    }

    #[test]
    fn same_seed_same_instance() {
        for case in CaseTag::ALL {
            let a = gen_random(case, 3, 4.0, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
            let b = gen_random(case, 3, 4.0, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn poisson_two_by_two() {
        let l = laplacian(2);
        let e = linalg::hermitian_eigen(&l).unwrap().values;
        assert!((e[0] - 1.0).abs() < 1e-12 && (e[1] - 3.0).abs() < 1e-12);
        let inst = gen_poisson(2).unwrap();
        // A has eigenvalues {1/6, 1/2}, so λ_min(Q) = 1/3.
        assert!((problem::kappa(&inst).unwrap() - 3.0).abs() < 1e-10);
        assert_eq!(classify(&inst).unwrap(), CaseTag::PositiveWithRoots);
    }

    #[test]
    fn poisson_kappa_growth() {
        let k4 = problem::kappa(&gen_poisson(4).unwrap()).unwrap();
        let k8 = problem::kappa(&gen_poisson(8).unwrap()).unwrap();
        // Closed form: κ = λ_max / λ_min with λ_k = 4 sin²(πk / 2(n+1)).
        let closed = |n: usize| {
            let s = |k: usize| (PI * k as f64 / (2.0 * (n as f64 + 1.0))).sin().powi(2);
            s(n) / s(1)
        };
        assert!((k4 - closed(4)).abs() < 1e-9 && (k8 - closed(8)).abs() < 1e-9);
        assert!((k8 / k4 - 4.0).abs() <= 1.0, "{}", k8 / k4);
    }

    #[test]
    fn poisson_zero_source() {
        let inst = gen_poisson(4).unwrap();
        let z = inst.with_c(linalg::zeros(4, 4)).unwrap();
        assert_eq!(linalg::fro_norm(&oracle_solve(&z).unwrap()), 0.0);
    }

    #[test]
    fn poisson_rejects_bad_sizes() {
        assert!(gen_poisson(1).is_err());
        assert!(matches!(gen_poisson(65), Err(Error::ElementCap { .. })));
    }
}
