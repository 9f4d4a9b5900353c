//! Empirical search for the grid constants `c₁..c₄`.
//!
//! Each round tries four single moves (double `c₃` or `c₄`, halve `c₁` or
//! `c₂`) and two trades that halve one step constant while doubling the
//! other, and keeps the candidate with the lowest error, preferring fewer
//! terms on ties. Trades keep the term count roughly fixed, which matters
//! once the grid sits at the budget. Before the first round the grid is
//! coarsened until it fits the term budget.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discretization::{calibrate_kernel, params_for, Constants, DiscretizationParams, KernelSpec};
use crate::error::{Error, Result};
use crate::lcu::{eval_h_scalar, eval_h_scalar_lchs, reconstruct, synthesize, SignConvention};
use crate::problem::{kappa, CaseTag, SylvesterInstance};
use crate::scalar::Real;
use crate::verify::{oracle_solve, solution_errors};

pub const DEFAULT_ROUNDS: usize = 12;
const MAX_COARSEN: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Move {
    Start,
    Coarsen,
    LongerTime,
    WiderFrequency,
    FinerTime,
    FinerFrequency,
    /// Halve `c₁`, double `c₂`.
    TradeToTime,
    /// Halve `c₂`, double `c₁`.
    TradeToFrequency,
}

const MOVES: [Move; 6] = [
    Move::LongerTime,
    Move::WiderFrequency,
    Move::FinerTime,
    Move::FinerFrequency,
    Move::TradeToTime,
    Move::TradeToFrequency,
];

fn apply_move(c: Constants, m: Move) -> Constants {
    let mut c = c;
    match m {
        Move::LongerTime => c.c3 *= 2.0,
        Move::WiderFrequency => c.c4 *= 2.0,
        Move::FinerTime => c.c1 /= 2.0,
        Move::FinerFrequency => c.c2 /= 2.0,
        Move::TradeToTime => {
            c.c1 /= 2.0;
            c.c2 *= 2.0;
        }
        Move::TradeToFrequency => {
            c.c1 *= 2.0;
            c.c2 /= 2.0;
        }
        Move::Start | Move::Coarsen => {}
    }
    c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStep {
    pub round: usize,
    pub action: Move,
    pub constants: Constants,
    pub error: f64,
    pub terms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub params: DiscretizationParams,
    pub constants: Constants,
    pub error: f64,
    pub target: f64,
    /// Refinement rounds used (0 when the starting grid already passed).
    pub rounds: usize,
    pub kernel: Option<KernelSpec>,
    pub history: Vec<CalibrationStep>,
}

#[derive(Clone, Debug)]
pub struct CalibrationOptions {
    pub rounds: usize,
    pub term_budget: u64,
    pub beta: f64,
    pub kernel: Option<KernelSpec>,
    pub convention: SignConvention,
    pub start: Constants,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            rounds: DEFAULT_ROUNDS,
            term_budget: crate::lcu::DEFAULT_TERM_BUDGET,
            beta: 0.5,
            kernel: None,
            convention: SignConvention::Standard,
            start: Constants::default(),
        }
    }
}

/// Outcome of a single evaluation: the error metric and the term count.
type Eval = (f64, u64);

/// The generic greedy loop. `grid` builds parameters from constants and
/// `eval` measures them.
fn search(
    target: f64,
    opts: &CalibrationOptions,
    kernel: Option<KernelSpec>,
    grid: impl Fn(Constants) -> Result<DiscretizationParams>,
    mut eval: impl FnMut(&DiscretizationParams) -> Result<f64>,
) -> Result<CalibrationOutcome> {
    let budget = opts.term_budget;
    let (mut c, mut p, coarsen_steps) = fit_budget(&grid, opts.start, budget)?;
    let mut history: Vec<CalibrationStep> = coarsen_steps
        .into_iter()
        .map(|(constants, terms)| CalibrationStep {
            round: 0,
            action: Move::Coarsen,
            constants,
            error: f64::NAN,
            terms,
        })
        .collect();
    let mut cur: Eval = (eval(&p)?, p.term_count());
    history.push(CalibrationStep {
        round: 0,
        action: Move::Start,
        constants: c,
        error: cur.0,
        terms: cur.1,
    });
    let mut best_err = cur.0;
    let mut round = 0;
    while !(cur.0 <= target) {
        if round >= opts.rounds {
            return Err(Error::BudgetExhausted {
                rounds: round,
                best_error: best_err,
                target,
            });
        }
        round += 1;
        let mut pick: Option<(Eval, Move, Constants, DiscretizationParams)> = None;
        for m in MOVES {
            let cand = apply_move(c, m);
            let cp = match grid(cand) {
                Ok(cp) => cp,
                Err(Error::InvalidParameter(_)) => continue,
                Err(e) => return Err(e),
            };
            let terms = cp.term_count();
            if terms > budget {
                continue;
            }
            let err = match eval(&cp) {
                Ok(e) => e,
                Err(e) if e.is_budget() => continue,
                Err(e) => return Err(e),
            };
            let better = match &pick {
                None => true,
                Some(((be, bt), ..)) => err < *be || (err == *be && terms < *bt),
            };
            if better {
                pick = Some(((err, terms), m, cand, cp));
            }
        }
        let Some((ev, m, cand, cp)) = pick else {
            return Err(Error::BudgetExhausted {
                rounds: round,
                best_error: best_err,
                target,
            });
        };
        history.push(CalibrationStep {
            round,
            action: m,
            constants: cand,
            error: ev.0,
            terms: ev.1,
        });
        cur = ev;
        c = cand;
        p = cp;
        best_err = best_err.min(cur.0);
    }
    Ok(CalibrationOutcome {
        params: p,
        constants: c,
        error: cur.0,
        target,
        rounds: round,
        kernel,
        history,
    })
}

/// Doubles `c₂` and `c₁` alternately until the grid fits `budget`.
/// Returns the constants, the grid and each intermediate `(constants, terms)`.
pub fn fit_budget(
    grid: impl Fn(Constants) -> Result<DiscretizationParams>,
    start: Constants,
    budget: u64,
) -> Result<(Constants, DiscretizationParams, Vec<(Constants, u64)>)> {
    let mut c = start;
    let mut p = grid(c)?;
    let mut steps = Vec::new();
    while p.term_count() > budget {
        if steps.len() >= MAX_COARSEN {
            return Err(Error::TermBudgetExceeded {
                terms: p.term_count(),
                budget,
            });
        }
        if steps.len() % 2 == 0 {
            c.c2 *= 2.0;
        } else {
            c.c1 *= 2.0;
        }
        p = grid(c)?;
        steps.push((c, p.term_count()));
    }
    Ok((c, p, steps))
}

fn kernel_for(case: CaseTag, opts: &CalibrationOptions) -> Result<Option<KernelSpec>> {
    match case {
        CaseTag::PositiveHermitianPart => Ok(Some(match &opts.kernel {
            Some(k) => k.clone(),
            None => calibrate_kernel(opts.beta)?,
        })),
        _ => Ok(None),
    }
}

/// Calibrates against the dense oracle: the error is
/// `min(mult_err·√N, residual_rel)` of the closed-form reconstruction.
pub fn calibrate<R: Real>(
    inst: &SylvesterInstance<R>,
    case: CaseTag,
    epsilon: f64,
    opts: &CalibrationOptions,
) -> Result<CalibrationOutcome> {
    let k = kappa(inst)?;
    let x_oracle = oracle_solve(inst)?;
    let c_norm = crate::linalg::spectral_norm(&inst.c).as_f64();
    let kernel = kernel_for(case, opts)?;
    let n = inst.n();
    search(
        epsilon,
        opts,
        kernel.clone(),
        |c| params_for(case, k, c_norm, epsilon, opts.beta, c),
        |p| {
            let prog = synthesize(inst, case, p, kernel.clone(), opts.convention, opts.term_budget)?;
            let x = reconstruct(&prog, &inst.c)?;
            Ok(solution_errors(inst, &x, &x_oracle, epsilon)?.score(n))
        },
    )
}

/// Scalar spectrum used by [`calibrate_spectrum`].
#[derive(Clone, Debug, PartialEq)]
pub enum SpectrumPoints {
    /// Eigenvalues of a Hermitian `A` (BZero).
    Real(Vec<f64>),
    /// Eigenvalues `q = λ_a + λ_b` of `Q` (Normal and positive-Hermitian-part).
    Complex(Vec<Complex64>),
    /// Root eigenvalue pairs `(p_a, p_b)` (PositiveWithRoots).
    Roots(Vec<(f64, f64)>),
}

/// `max |q·h(q) − 1|` over the points.
pub fn spectrum_error(
    case: CaseTag,
    points: &SpectrumPoints,
    params: &DiscretizationParams,
    kernel: Option<&KernelSpec>,
    convention: SignConvention,
) -> Result<f64> {
    let mut worst = 0.0f64;
    let mut record = |q: Complex64, h: Complex64| {
        let e = (q * h - 1.0).norm();
        worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) };
    };
    match (case, points) {
        (CaseTag::BZero, SpectrumPoints::Real(ls)) => {
            for &l in ls {
                record(Complex64::new(l, 0.0), eval_h_scalar(case, l, 0.0, params)?);
            }
        }
        (CaseTag::Normal, SpectrumPoints::Complex(qs)) => {
            for &q in qs {
                record(q, eval_h_scalar(case, q.re, q.im, params)?);
            }
        }
        (CaseTag::PositiveHermitianPart, SpectrumPoints::Complex(qs)) => {
            let kernel = kernel.ok_or_else(|| Error::Precondition("missing kernel".into()))?;
            for &q in qs {
                record(q, eval_h_scalar_lchs(q, params, kernel, convention));
            }
        }
        (CaseTag::PositiveWithRoots, SpectrumPoints::Roots(ps)) => {
            for &(a, b) in ps {
                record(Complex64::new(a * a + b * b, 0.0), eval_h_scalar(case, a, b, params)?);
            }
        }
        _ => {
            return Err(Error::InvalidParameter(format!(
                "spectrum points do not fit case {case}"
            )))
        }
    }
    Ok(worst)
}

/// Calibrates on scalar eigenvalues with the closed-form evaluators.
pub fn calibrate_spectrum(
    case: CaseTag,
    kappa: f64,
    c_norm: f64,
    points: &SpectrumPoints,
    epsilon: f64,
    opts: &CalibrationOptions,
) -> Result<CalibrationOutcome> {
    let kernel = kernel_for(case, opts)?;
    search(
        epsilon,
        opts,
        kernel.clone(),
        |c| params_for(case, kappa, c_norm, epsilon, opts.beta, c),
        |p| spectrum_error(case, points, p, kernel.as_ref(), opts.convention),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::gen_random;
    use crate::linalg;
    use crate::problem::scalar_instance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_terminates_quickly() {
        let inst = scalar_instance(0.25, 0.25, 1.0).unwrap();
        let out = calibrate(&inst, CaseTag::Normal, 0.05, &CalibrationOptions::default()).unwrap();
        assert!(out.rounds <= 3, "{:?}", out.history);
        assert!(out.error <= 0.05);
    }

    #[test]
    fn coarse_target_needs_at_most_one_round() {
        // With unit constants t_R = κ√ln 2 ≈ 1.7 at κ = 2, which leaves a
        // first-round error near 0.9; one doubling of c₃ reaches 0.5.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let inst = gen_random(CaseTag::BZero, 2, 2.0, &mut rng).unwrap();
        let out = calibrate(&inst, CaseTag::BZero, 0.5, &CalibrationOptions::default()).unwrap();
        assert!(out.rounds <= 1, "{:?}", out.history);
        assert!(out.error <= 0.5);
    }

    #[test]
    fn singular_is_rejected_up_front() {
        let z = linalg::zeros::<f64>(2, 2);
        let inst = SylvesterInstance::new(z.clone(), z, linalg::identity(2), 1.0, None).unwrap();
        assert!(matches!(
            calibrate(&inst, CaseTag::BZero, 0.1, &CalibrationOptions::default()),
            Err(Error::SingularQ(_))
        ));
    }

    #[test]
    fn exhaustion_reports_best() {
        let inst = scalar_instance(0.25, 0.25, 1.0).unwrap();
        let opts = CalibrationOptions {
            rounds: 1,
            ..CalibrationOptions::default()
        };
        match calibrate(&inst, CaseTag::Normal, 1e-6, &opts) {
            Err(Error::BudgetExhausted { rounds, best_error, target }) => {
                assert_eq!(rounds, 1);
                assert!(best_error.is_finite() && best_error > target);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bzero_spectrum_reaches_target() {
        let pts: Vec<f64> = (0..20)
            .map(|i| 0.5 + 0.5 * i as f64 / 19.0)
            .flat_map(|l| [l, -l])
            .collect();
        let out = calibrate_spectrum(
            CaseTag::BZero,
            2.0,
            1.0,
            &SpectrumPoints::Real(pts.clone()),
            0.01,
            &CalibrationOptions::default(),
        )
        .unwrap();
        let err = spectrum_error(CaseTag::BZero, &SpectrumPoints::Real(pts), &out.params, None, SignConvention::Standard).unwrap();
        assert!(err <= 0.01);
    }

    #[test]
    fn budget_coarsening() {
        let grid = |c| params_for(CaseTag::BZero, 2.0, 1.0, 0.01, 0.5, c);
        let full = grid(Constants::default()).unwrap().term_count();
        assert!(full > 1000);
        let (c, p, steps) = fit_budget(grid, Constants::default(), 1000).unwrap();
        assert!(p.term_count() <= 1000);
        assert!(!steps.is_empty());
        assert!(c.c1 >= 1.0 && c.c2 > 1.0);
        assert!(fit_budget(grid, Constants::default(), 0).is_err());
    }
}
