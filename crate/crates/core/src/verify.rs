//! Ground-truth solves, error metrics, property checks and the cost estimator.

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::Constants;
use crate::error::{Error, Result};
use crate::generate::{random_cmatrix, random_hermitian_unit};
use crate::lcu::LcuProgram;
use crate::linalg::{self, CMatrix};
use crate::problem::{build_q, kappa_of_q, CaseTag, SylvesterInstance};
use crate::scalar::{from_c64, Real};

/// `X = unvec(Q⁻¹ vec C)` by dense LU.
pub fn oracle_solve<R: Real>(inst: &SylvesterInstance<R>) -> Result<CMatrix<R>> {
    let q = build_q(inst)?;
    kappa_of_q(&q)?;
    let n = inst.n();
    let x = linalg::solve(&q, &linalg::vec(&inst.c))?;
    linalg::unvec(&x, n, n)
}

/// `‖AX̂ + X̂B − C‖ / max(‖C‖, 1e-300)`.
pub fn residual<R: Real>(inst: &SylvesterInstance<R>, x_hat: &CMatrix<R>) -> Result<f64> {
    let n = inst.n();
    if x_hat.nrows() != n || x_hat.ncols() != n {
        return Err(Error::DimensionMismatch(format!("X̂ must be {n}x{n}")));
    }
    let r = &inst.a * x_hat + x_hat * &inst.b - &inst.c;
    let den = linalg::spectral_norm(&inst.c).as_f64().max(1e-300);
    Ok(linalg::spectral_norm(&r).as_f64() / den)
}

/// Which test decided a pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PassCriterion {
    /// `mult_err·√N ≤ ε`.
    MultiplicativeError,
    /// `residual_rel ≤ ε`.
    Residual,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub residual_rel: Option<f64>,
    pub spectral_err: Option<f64>,
    pub mult_err: Option<f64>,
    pub eps_target: f64,
    pub x_used: Option<f64>,
    pub kappa_alpha: f64,
    pub q_est: f64,
    pub g_est: f64,
    pub pass: bool,
    pub criterion: PassCriterion,
    pub calibrated_constants: Option<Constants>,
    pub kernel_normalization: Option<f64>,
}

/// Error metrics of `x_hat` against the oracle solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionErrors {
    pub residual_rel: f64,
    pub spectral_err: f64,
    pub mult_err: f64,
    pub pass: bool,
    pub criterion: PassCriterion,
}

impl SolutionErrors {
    /// `min(mult_err·√N, residual_rel)`, the quantity compared with ε.
    pub fn score(&self, n: usize) -> f64 {
        (self.mult_err * (n as f64).sqrt()).min(self.residual_rel)
    }
}

pub fn solution_errors<R: Real>(
    inst: &SylvesterInstance<R>,
    x_hat: &CMatrix<R>,
    x_oracle: &CMatrix<R>,
    eps: f64,
) -> Result<SolutionErrors> {
    let residual_rel = residual(inst, x_hat)?;
    let spectral_err = linalg::spectral_norm(&(x_hat - x_oracle)).as_f64();
    let xn = linalg::spectral_norm(x_oracle).as_f64();
    let mult_err = if xn > 0.0 {
        spectral_err / xn
    } else if spectral_err == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let sqrt_n = (inst.n() as f64).sqrt();
    let criterion = if mult_err * sqrt_n <= eps {
        PassCriterion::MultiplicativeError
    } else if residual_rel <= eps {
        PassCriterion::Residual
    } else {
        PassCriterion::None
    };
    Ok(SolutionErrors {
        residual_rel,
        spectral_err,
        mult_err,
        pass: criterion != PassCriterion::None,
        criterion,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub draws: usize,
    pub failures: usize,
    /// Largest `‖X − X′‖ / (ε√N‖X‖)` seen; must stay ≤ 1.
    pub max_ratio: f64,
}

/// Draws `E` with `‖E‖ = eps_mult`, forms `X′ = unvec((I − E) Q⁻¹ vec C)` and
/// checks `‖X − X′‖ ≤ eps_mult·√N·‖X‖`.
pub fn frobenius_transfer_check<R: Real>(
    inst: &SylvesterInstance<R>,
    eps_mult: f64,
    draws: usize,
    rng: &mut impl Rng,
) -> Result<TransferReport> {
    let x = oracle_solve(inst)?;
    let n = inst.n();
    let vx = linalg::vec(&x);
    let xn = linalg::spectral_norm(&x).as_f64();
    let mut report = TransferReport {
        draws,
        failures: 0,
        max_ratio: 0.0,
    };
    for _ in 0..draws {
        let e = random_cmatrix(rng, n * n, n * n).map(|z| from_c64::<R>(z));
        let en = linalg::spectral_norm(&e);
        let e = linalg::scale_real(&e, R::of(eps_mult) / en);
        let xp = linalg::unvec(&(&vx - &e * &vx), n, n)?;
        let diff = linalg::spectral_norm(&(&x - &xp)).as_f64();
        let bound = eps_mult * (n as f64).sqrt() * xn;
        let ratio = if bound > 0.0 { diff / bound } else { 0.0 };
        report.max_ratio = report.max_ratio.max(ratio);
        if diff > bound * (1.0 + 1e-12) + 1e-300 {
            report.failures += 1;
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub draws: usize,
    pub failures: usize,
    /// Largest `‖(X̂′ − X̂)/x‖` seen.
    pub max_change: f64,
    /// Largest per-unitary perturbation `‖U e^{iH} − U‖` used.
    pub max_unitary_shift: f64,
}

/// Right-multiplies every evolution by `e^{iH}` with `H` Hermitian and
/// `‖e^{iH} − I‖ = 2 sin(‖H‖/2) = eps/4`, then compares `X̂/x` before and
/// after. The triangle inequality bounds the change by `eps/2`.
pub fn evolution_perturbation_check<R: Real>(
    program: &LcuProgram<R>,
    c: &CMatrix<R>,
    eps: f64,
    draws: usize,
    rng: &mut impl Rng,
) -> Result<PerturbationReport> {
    let terms = program.collect_terms();
    let g = &program.generators;
    let n = g.n();
    let pairs: Vec<(CMatrix<R>, CMatrix<R>)> = terms
        .iter()
        .map(|t| Ok((g.unitary_expm(&t.left)?, g.unitary_expm(&t.right)?)))
        .collect::<Result<_>>()?;
    let x = program.rescale;
    let combine = |ps: &[(CMatrix<R>, CMatrix<R>)]| -> CMatrix<R> {
        let mut out = linalg::zeros::<R>(n, n);
        for (t, (l, r)) in terms.iter().zip(ps) {
            out += linalg::scale(&(l * c * r), from_c64(t.coeff));
        }
        out
    };
    let base = combine(&pairs);
    let h_norm = 2.0 * (eps / 8.0).asin();
    let mut report = PerturbationReport {
        draws,
        failures: 0,
        max_change: 0.0,
        max_unitary_shift: 0.0,
    };
    for _ in 0..draws {
        let mut perturbed = Vec::with_capacity(pairs.len());
        for (l, r) in &pairs {
            let mut kick = || -> Result<CMatrix<R>> {
                let h = random_hermitian_unit(rng, n).map(|z| from_c64::<R>(z));
                let ih = linalg::scale(&h, Complex::new(R::zero(), R::of(h_norm)));
                linalg::mat_exp(&ih)
            };
            let kl = kick()?;
            let kr = kick()?;
            let lp = l * kl;
            let rp = r * kr;
            let shift = linalg::spectral_norm(&(&lp - l))
                .max(linalg::spectral_norm(&(&rp - r)))
                .as_f64();
            report.max_unitary_shift = report.max_unitary_shift.max(shift);
            perturbed.push((lp, rp));
        }
        let change = if x > 0.0 {
            linalg::spectral_norm(&(combine(&perturbed) - &base)).as_f64() / x
        } else {
            0.0
        };
        report.max_change = report.max_change.max(change);
        if change > eps {
            report.failures += 1;
        }
    }
    Ok(report)
}

/// Query-cost estimate with every hidden constant set to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityEstimate {
    pub case: CaseTag,
    pub q_est: f64,
    pub g_est: f64,
    /// `x` predicted by the formula, including the factor α.
    pub x_formula: f64,
    pub formula: String,
    /// For the general case, the guaranteed coefficient bound `(8/3)·2^{2j₀+2}`.
    pub chebyshev_bound: Option<f64>,
}

pub fn complexity_estimate(
    case: CaseTag,
    kappa: f64,
    n_dim: usize,
    c_norm: f64,
    alpha: f64,
    epsilon: f64,
    beta: f64,
) -> Result<ComplexityEstimate> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(kappa >= 1.0 - 1e-12) {
        return Err(Error::InvalidParameter(format!("kappa must be >= 1, got {kappa}")));
    }
    let n = n_dim.max(1) as f64;
    let ka = kappa * alpha;
    let est = |q: f64, x: f64, formula: &str| ComplexityEstimate {
        case,
        q_est: q,
        g_est: q,
        x_formula: x,
        formula: formula.to_string(),
        chebyshev_bound: None,
    };
    Ok(match case {
        CaseTag::Normal => est(
            kappa * (kappa * n / epsilon).ln(),
            ka * (n / epsilon).ln().max(0.0).sqrt(),
            "Q = G = kappa*ln(kappa*N/eps); x = kappa*alpha*sqrt(ln(N/eps))",
        ),
        CaseTag::PositiveHermitianPart => {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::InvalidParameter(format!("beta must lie in (0, 1), got {beta}")));
            }
            let l = (kappa * c_norm / epsilon).ln().max(0.0);
            est(
                kappa * l.powf(1.0 + 1.0 / beta),
                ka * l,
                "Q = G = kappa*ln^(1+1/beta)(kappa*|C|/eps); x = kappa*alpha*ln(kappa*|C|/eps)",
            )
        }
        CaseTag::BZero => est(
            kappa * (1.0 / epsilon).ln(),
            ka * (1.0 / epsilon).ln().sqrt(),
            "Q = G = kappa*ln(1/eps); x = kappa*alpha*sqrt(ln(1/eps))",
        ),
        CaseTag::PositiveWithRoots => est(
            kappa.sqrt() * (kappa * n / epsilon).ln(),
            ka * (n / epsilon).ln(),
            "Q = G = sqrt(kappa)*ln(kappa*N/eps); x = kappa*alpha*ln(N/eps)",
        ),
        CaseTag::GeneralChebyshev => {
            let (_, j0) = crate::chebyshev::plan_sizes(kappa, epsilon)?;
            let bound = 8.0 / 3.0 * 2f64.powi(2 * j0 as i32 + 2);
            ComplexityEstimate {
                case,
                q_est: bound,
                g_est: bound,
                x_formula: ka * bound,
                formula: format!(
                    "exponential: coefficient bound (8/3)*2^(2*j0+2) with j0 = {j0}"
                ),
                chebyshev_bound: Some(bound),
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{gen_random, random_instance};
    use crate::lcu::{synth_bzero, EvolutionSpec, Generators, LcuTerm, Side};
    use crate::discretization::ManualParams;
    use crate::problem::scalar_instance;
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> CMatrix<f64> {
        let mut m = linalg::zeros(v.len(), v.len());
        for (i, &x) in v.iter().enumerate() {
            m[(i, i)] = Complex64::new(x, 0.0);
        }
        m
    }

    #[test]
    fn oracle_examples() {
        let s = scalar_instance(0.25, 0.25, 1.0).unwrap();
        assert!((oracle_solve(&s).unwrap()[(0, 0)] - 2.0).norm() < 1e-14);
        let s = SylvesterInstance::new(diag(&[0.5, -0.5]), linalg::zeros(2, 2), linalg::identity(2), 1.0, None).unwrap();
        let x = oracle_solve(&s).unwrap();
        assert!(linalg::spectral_norm(&(x - diag(&[2.0, -2.0]))) < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_instance(&mut rng, 3).unwrap();
        let x = oracle_solve(&s).unwrap();
        assert!(residual(&s, &x).unwrap() <= 1e-10);
    }

    #[test]
    fn residual_of_zero_is_one() {
        let s = scalar_instance(0.25, 0.25, 1.0).unwrap();
        let z = DMatrix::from_element(1, 1, Complex64::new(0.0, 0.0));
        assert!((residual(&s, &z).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn transfer_check_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_instance(&mut rng, 3).unwrap();
        let r = frobenius_transfer_check(&s, 0.0, 2, &mut rng).unwrap();
        assert_eq!(r.max_ratio, 0.0);
        let x = oracle_solve(&s).unwrap();
        let xp = linalg::scale_real(&x, 1.0 - 0.1);
        let diff = linalg::spectral_norm(&(&x - &xp));
        assert!((diff - 0.1 * linalg::spectral_norm(&x)).abs() < 1e-12);
        let r = frobenius_transfer_check(&s, 0.1, 20, &mut rng).unwrap();
        assert_eq!(r.failures, 0);
        assert!(r.max_ratio <= 1.0);
    }

    #[test]
    fn perturbation_check_examples() {
        let s = SylvesterInstance::new(diag(&[0.5, -0.5]), linalg::zeros(2, 2), linalg::identity(2), 1.0, None).unwrap();
        let p = ManualParams::new(4, 2).build(CaseTag::BZero).unwrap();
        let prog = synth_bzero(&s, &p, 100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = evolution_perturbation_check(&prog, &s.c, 0.1, 20, &mut rng).unwrap();
        assert_eq!(r.failures, 0);
        assert!(r.max_change <= 0.05 + 1e-12, "{}", r.max_change);
        assert!((r.max_unitary_shift - 0.025).abs() < 1e-10, "{}", r.max_unitary_shift);

        let g = Generators::from_instance(&s, CaseTag::BZero).unwrap();
        let t = LcuTerm {
            coeff: Complex64::new(1.0, 0.0),
            left: EvolutionSpec::new(1.0, 0.0, 0.3, Side::Left),
            right: EvolutionSpec::identity(Side::Right),
        };
        let one = LcuProgram::from_terms(CaseTag::BZero, g, vec![t], 1.0);
        let r = evolution_perturbation_check(&one, &s.c, 1e-14, 3, &mut rng).unwrap();
        assert!(r.max_change < 1e-13);
        let r = evolution_perturbation_check(&one, &s.c, 0.2, 5, &mut rng).unwrap();
        assert!(r.max_change <= 0.1 + 1e-12);
    }

    #[test]
    fn complexity_examples() {
        let e = complexity_estimate(CaseTag::BZero, 10.0, 2, 1.0, 1.0, 0.01, 0.5).unwrap();
        assert!((e.q_est - 46.0517).abs() < 1e-3);
        let e = complexity_estimate(CaseTag::Normal, 10.0, 4, 1.0, 1.0, 0.01, 0.5).unwrap();
        assert!((e.q_est - 82.94).abs() < 1e-2);
        let pos = complexity_estimate(CaseTag::PositiveWithRoots, 100.0, 16, 1.0, 1.0, 0.01, 0.5).unwrap();
        let nor = complexity_estimate(CaseTag::Normal, 100.0, 16, 1.0, 1.0, 0.01, 0.5).unwrap();
        assert!((pos.q_est / nor.q_est - 0.1).abs() < 1e-12);
        let g = complexity_estimate(CaseTag::GeneralChebyshev, 2.0, 2, 1.0, 1.0, 0.01, 0.5).unwrap();
        assert_eq!(g.chebyshev_bound, Some(8.0 / 3.0 * 2f64.powi(32)));
    }

    #[test]
    fn complexity_monotone() {
        for case in CaseTag::ALL {
            let mut last = 0.0;
            for kappa in [2.0, 3.0, 5.0, 8.0] {
                let e = complexity_estimate(case, kappa, 4, 1.0, 1.0, 0.05, 0.5).unwrap();
                assert!(e.q_est > last, "{case}");
                last = e.q_est;
            }
            let mut last = 0.0;
            for eps in [0.2, 0.1, 0.01, 0.001] {
                let e = complexity_estimate(case, 2.0, 4, 1.0, 1.0, eps, 0.5).unwrap();
                assert!(e.q_est >= last, "{case}");
                last = e.q_est;
            }
        }
    }

    #[test]
    fn solution_errors_pick_criterion() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s = gen_random(CaseTag::Normal, 2, 4.0, &mut rng).unwrap();
        let x = oracle_solve(&s).unwrap();
        let e = solution_errors(&s, &x, &x, 0.1).unwrap();
        assert!(e.pass);
        assert_eq!(e.criterion, PassCriterion::MultiplicativeError);
        let z = linalg::zeros(2, 2);
        let e = solution_errors(&s, &z, &x, 0.1).unwrap();
        assert!(!e.pass);
    }
}
