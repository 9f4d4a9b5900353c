//! End-to-end runs: load or generate, classify, parametrize, calibrate,
//! synthesize, apply, verify, and optionally assemble the full unitary.

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::block_encoding::{assemble_capped, dilate, extract_block, BlockCheck, UNITARITY_TOL};
use crate::calibration::{calibrate, CalibrationOptions, CalibrationOutcome, DEFAULT_ROUNDS};
use crate::chebyshev::{solve_general, ChebPlan};
use crate::discretization::{calibrate_kernel, DiscretizationParams, KernelSpec, ManualParams};
use crate::error::Error;
use crate::generate::{gen_poisson, gen_random};
use crate::io::{load_instance, LoadedInstance};
use crate::lcu::{apply_lcu, synthesize, SignConvention, DEFAULT_TERM_BUDGET};
use crate::linalg::{self, DEFAULT_ELEMENT_CAP};
use crate::problem::{classify, kappa, CaseTag, SylvesterInstance};
use crate::verify::{complexity_estimate, oracle_solve, solution_errors, ComplexityEstimate, PassCriterion, VerificationReport};

/// Environment variable overriding [`DEFAULT_TERM_BUDGET`].
pub const TERM_BUDGET_ENV: &str = "QSYLV_TERM_BUDGET";

/// Largest constructed block-encoding, in matrix elements.
pub const FULL_UNITARY_CAP: usize = DEFAULT_ELEMENT_CAP;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    LcuOnly,
    FullUnitary,
    Chebyshev,
    Estimate,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "lcu-only" | "lcu" => Some(Mode::LcuOnly),
            "full-unitary" | "full" | "unitary" => Some(Mode::FullUnitary),
            "chebyshev" | "cheb" => Some(Mode::Chebyshev),
            "estimate" => Some(Mode::Estimate),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Source {
    File { path: PathBuf },
    Random { case: CaseTag, n: usize, kappa: f64, seed: u64 },
    Poisson { n: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub source: Source,
    pub epsilon: f64,
    pub beta: f64,
    pub mode: Mode,
    pub term_budget: u64,
    pub manual: Option<ManualParams>,
    /// Forces a method instead of the classified one.
    pub case: Option<CaseTag>,
    pub rounds: usize,
    pub convention: SignConvention,
}

impl RunConfig {
    pub fn new(source: Source, epsilon: f64) -> Self {
        RunConfig {
            source,
            epsilon,
            beta: 0.5,
            mode: Mode::LcuOnly,
            term_budget: DEFAULT_TERM_BUDGET,
            manual: None,
            case: None,
            rounds: DEFAULT_ROUNDS,
            convention: SignConvention::Standard,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidParameter(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        Ok(())
    }
}

/// Term budget from [`TERM_BUDGET_ENV`], or the default.
pub fn term_budget_from_env() -> Result<u64, Error> {
    match std::env::var(TERM_BUDGET_ENV) {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::Parse(format!("{TERM_BUDGET_ENV} must be a non-negative integer, got {v:?}"))),
        Err(_) => Ok(DEFAULT_TERM_BUDGET),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Config,
    Load,
    Classify,
    Parametrize,
    Calibrate,
    Synthesize,
    Apply,
    Verify,
    Assemble,
    Chebyshev,
    Estimate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned));
        f.write_str(s.as_deref().unwrap_or("unknown"))
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        exit_code(&self.error)
    }
}

/// 2 for usage and parse problems, 3 for budget and feasibility.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse(_)
        | Error::Io(_)
        | Error::InvalidParameter(_)
        | Error::InvalidInstance(_)
        | Error::DimensionMismatch(_)
        | Error::NotSquare { .. }
        | Error::NonFinite(_) => 2,
        _ => 3,
    }
}

trait Tag<T> {
    fn at(self, stage: Stage) -> Result<T, StageError>;
}

impl<T> Tag<T> for Result<T, Error> {
    fn at(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramSummary {
    pub params: DiscretizationParams,
    pub term_count: u64,
    /// `y`.
    pub l1: f64,
    pub l1_split: f64,
    pub max_evolution_time: f64,
    pub kernel: Option<KernelSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevSummary {
    pub b: usize,
    pub j0: usize,
    pub coeff_l1: f64,
    pub coeff_bound: f64,
    pub within_bound: bool,
}

impl From<&ChebPlan> for ChebyshevSummary {
    fn from(p: &ChebPlan) -> Self {
        ChebyshevSummary {
            b: p.b,
            j0: p.j0,
            coeff_l1: p.coeff_l1,
            coeff_bound: p.coeff_bound,
            within_bound: p.within_bound,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitaryReport {
    pub dim: usize,
    pub ancilla_dim: usize,
    /// Whether the grid was coarsened to fit the element cap.
    pub shrunk: bool,
    /// `‖extract_block(W) − apply_lcu/x‖`.
    pub structural_err: f64,
    pub check: BlockCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub case: CaseTag,
    pub classified: CaseTag,
    pub n: usize,
    pub kappa: f64,
    pub epsilon: f64,
    pub beta: f64,
    pub alpha: f64,
    /// Normalization factor applied to `A, B, C, α` on load.
    pub scale: f64,
    pub rect_rows: Option<usize>,
    pub x_used: Option<f64>,
    pub kappa_alpha: f64,
    pub estimate: ComplexityEstimate,
    pub program: Option<ProgramSummary>,
    pub calibration: Option<CalibrationOutcome>,
    pub chebyshev: Option<ChebyshevSummary>,
    pub unitary: Option<UnitaryReport>,
    pub verification: Option<VerificationReport>,
    pub pass: bool,
    pub wall_time: f64,
}

impl RunReport {
    /// JSON with `wall_time` removed, for reproducibility checks.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).unwrap_or(serde_json::Value::Null);
        if let Some(obj) = v.as_object_mut() {
            obj.remove("wall_time");
        }
        serde_json::to_string(&v).unwrap_or_default()
    }
}

pub fn load_source(source: &Source) -> Result<LoadedInstance<f64>, Error> {
    let plain = |instance: SylvesterInstance<f64>| LoadedInstance {
        instance,
        scale: 1.0,
        rect_rows: None,
        c_pad: None,
    };
    match source {
        Source::File { path } => load_instance(path),
        Source::Random { case, n, kappa, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            gen_random(*case, *n, *kappa, &mut rng).map(plain)
        }
        Source::Poisson { n } => gen_poisson(*n).map(plain),
    }
}

/// Coarsens a grid, keeping `t_R` and `ω_J`, until the assembled unitary
/// fits `cap` elements. Returns the grid and whether it changed.
pub fn shrink_for_unitary(
    p: &DiscretizationParams,
    encoding_dim: usize,
    cap: usize,
) -> (DiscretizationParams, bool) {
    let fits = |p: &DiscretizationParams| {
        let k = (p.term_count() as usize).max(1).next_power_of_two();
        let d = k.saturating_mul(encoding_dim);
        d.saturating_mul(d) <= cap
    };
    let mut p = p.clone();
    let mut shrunk = false;
    let mut turn = 0usize;
    while !fits(&p) && (p.r_count > 1 || p.j_count > 0) {
        shrunk = true;
        if (turn % 2 == 0 && p.r_count > 1) || p.j_count == 0 {
            p.r_count = p.r_count.div_ceil(2);
            p.delta_t *= 2.0;
        } else {
            p.j_count /= 2;
            p.delta_omega *= 2.0;
        }
        turn += 1;
    }
    (p, shrunk)
}

pub fn run(config: &RunConfig) -> Result<RunReport, StageError> {
    let started = Instant::now();
    config.validate().at(Stage::Config)?;
    let loaded = load_source(&config.source).at(Stage::Load)?;
    let mut report = run_instance(config, &loaded)?;
    report.wall_time = started.elapsed().as_secs_f64();
    Ok(report)
}

/// [`run`] on an already loaded instance.
pub fn run_instance(config: &RunConfig, loaded: &LoadedInstance<f64>) -> Result<RunReport, StageError> {
    let started = Instant::now();
    let eps = config.epsilon;
    let inst = &loaded.instance;
    let n = inst.n();
    let classified = classify(inst).at(Stage::Classify)?;
    let case = config.case.unwrap_or(classified);
    let k = kappa(inst).at(Stage::Classify)?;
    let alpha = inst.alpha;
    let c_norm = linalg::spectral_norm(&inst.c);
    let estimate = complexity_estimate(case, k, n, c_norm, alpha, eps, config.beta).at(Stage::Estimate)?;
    let mut report = RunReport {
        mode: config.mode,
        case,
        classified,
        n,
        kappa: k,
        epsilon: eps,
        beta: config.beta,
        alpha,
        scale: loaded.scale,
        rect_rows: loaded.rect_rows,
        x_used: None,
        kappa_alpha: k * alpha,
        estimate: estimate.clone(),
        program: None,
        calibration: None,
        chebyshev: None,
        unitary: None,
        verification: None,
        pass: true,
        wall_time: 0.0,
    };
    if config.mode == Mode::Estimate {
        report.wall_time = started.elapsed().as_secs_f64();
        return Ok(report);
    }

    let x_oracle = oracle_solve(inst).at(Stage::Verify)?;
    let verification = |x_hat: &crate::linalg::CMatrix<f64>, x_used: Option<f64>, cal: Option<&CalibrationOutcome>, kernel: Option<&KernelSpec>| {
        let e = solution_errors(inst, x_hat, &x_oracle, eps)?;
        Ok::<_, Error>(VerificationReport {
            residual_rel: Some(e.residual_rel),
            spectral_err: Some(e.spectral_err),
            mult_err: Some(e.mult_err),
            eps_target: eps,
            x_used,
            kappa_alpha: k * alpha,
            q_est: estimate.q_est,
            g_est: estimate.g_est,
            pass: e.pass,
            criterion: e.criterion,
            calibrated_constants: cal.map(|c| c.constants),
            kernel_normalization: kernel.map(|k| k.normalization),
        })
    };

    if config.mode == Mode::Chebyshev || case == CaseTag::GeneralChebyshev {
        if config.mode != Mode::Chebyshev {
            return Err(StageError {
                stage: Stage::Synthesize,
                error: Error::Precondition(
                    "the instance has no LCU structure; run with --mode chebyshev".into(),
                ),
            });
        }
        let (x_hat, plan) = solve_general(inst, eps).at(Stage::Chebyshev)?;
        let v = verification(&x_hat, None, None, None).at(Stage::Verify)?;
        report.pass = v.pass;
        report.chebyshev = Some(ChebyshevSummary::from(&plan));
        report.verification = Some(v);
        report.wall_time = started.elapsed().as_secs_f64();
        return Ok(report);
    }

    let kernel = match case {
        CaseTag::PositiveHermitianPart => Some(calibrate_kernel(config.beta).at(Stage::Calibrate)?),
        _ => None,
    };
    let params = match &config.manual {
        Some(m) => {
            let mut m = *m;
            if m.beta.is_none() {
                m.beta = Some(config.beta);
            }
            m.build(case).at(Stage::Parametrize)?
        }
        None => {
            let opts = CalibrationOptions {
                rounds: config.rounds,
                term_budget: config.term_budget,
                beta: config.beta,
                kernel: kernel.clone(),
                convention: config.convention,
                ..CalibrationOptions::default()
            };
            let out = calibrate(inst, case, eps, &opts).at(Stage::Calibrate)?;
            let p = out.params.clone();
            report.calibration = Some(out);
            p
        }
    };

    let (params, shrunk) = if config.mode == Mode::FullUnitary {
        shrink_for_unitary(&params, 2 * n, FULL_UNITARY_CAP)
    } else {
        (params, false)
    };
    let program = synthesize(inst, case, &params, kernel.clone(), config.convention, config.term_budget)
        .at(Stage::Synthesize)?;
    report.program = Some(ProgramSummary {
        params: params.clone(),
        term_count: program.term_count(),
        l1: program.l1,
        l1_split: program.l1_split,
        max_evolution_time: params.max_evolution_time(),
        kernel: kernel.clone(),
    });
    report.x_used = Some(program.rescale);
    let x_hat = apply_lcu(&program, &inst.c).at(Stage::Apply)?;

    let v = if config.mode == Mode::FullUnitary {
        let uc = dilate(&inst.c, alpha).at(Stage::Assemble)?;
        let be = assemble_capped(&program, &uc, FULL_UNITARY_CAP).at(Stage::Assemble)?;
        let block = extract_block(&be);
        let x = program.rescale;
        let structural_err = linalg::spectral_norm(&(&block - linalg::scale_real(&x_hat, 1.0 / x)));
        let target = linalg::scale_real(&x_oracle, 1.0 / x);
        let check = crate::block_encoding::verify_block_encoding(&be, &target, eps / x.max(1.0))
            .at(Stage::Verify)?;
        let x_block = linalg::scale_real(&block, x);
        let mut v = verification(&x_block, Some(x), report.calibration.as_ref(), kernel.as_ref()).at(Stage::Verify)?;
        let structural_ok = structural_err <= 1e-10 && check.unitarity_defect <= 1e3 * UNITARITY_TOL;
        if !structural_ok {
            v.pass = false;
            v.criterion = PassCriterion::None;
        }
        report.unitary = Some(UnitaryReport {
            dim: be.dim(),
            ancilla_dim: be.dim() / (2 * n),
            shrunk,
            structural_err,
            check,
        });
        v
    } else {
        verification(&x_hat, Some(program.rescale), report.calibration.as_ref(), kernel.as_ref())
            .at(Stage::Verify)?
    };
    report.pass = v.pass;
    report.verification = Some(v);
    report.wall_time = started.elapsed().as_secs_f64();
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kappa: f64,
    pub epsilon: f64,
    pub y: f64,
    pub x: f64,
    pub mult_err: f64,
    pub residual: f64,
    pub q_est: f64,
    pub term_count: u64,
    pub max_evolution_time: f64,
    pub pass: bool,
    pub wall_time: f64,
}

pub const DEFAULT_SWEEP_KAPPAS: [f64; 4] = [2.0, 5.0, 10.0, 20.0];

pub const CSV_HEADER: &str =
    "kappa,epsilon,y,x,mult_err,residual,q_est,term_count,max_evolution_time,pass,wall_time";

impl SweepRow {
    pub fn from_report(target_kappa: f64, r: &RunReport) -> Self {
        let v = r.verification.as_ref();
        let p = r.program.as_ref();
        SweepRow {
            kappa: target_kappa,
            epsilon: r.epsilon,
            y: p.map_or(f64::NAN, |p| p.l1),
            x: r.x_used.unwrap_or(f64::NAN),
            mult_err: v.and_then(|v| v.mult_err).unwrap_or(f64::NAN),
            residual: v.and_then(|v| v.residual_rel).unwrap_or(f64::NAN),
            q_est: r.estimate.q_est,
            term_count: p.map_or(0, |p| p.term_count),
            max_evolution_time: p.map_or(f64::NAN, |p| p.max_evolution_time),
            pass: r.pass,
            wall_time: r.wall_time,
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.kappa,
            self.epsilon,
            self.y,
            self.x,
            self.mult_err,
            self.residual,
            self.q_est,
            self.term_count,
            self.max_evolution_time,
            self.pass,
            self.wall_time
        )
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Runs `base` once per κ. Random sources regenerate at each κ with the
/// same seed; Poisson sources take `n` from the list instead.
pub fn sweep(base: &RunConfig, kappas: &[f64]) -> Result<Vec<SweepRow>, StageError> {
    let mut rows = Vec::with_capacity(kappas.len());
    for &kap in kappas {
        let source = match &base.source {
            Source::Random { case, n, seed, .. } => Source::Random {
                case: *case,
                n: *n,
                kappa: kap,
                seed: *seed,
            },
            other => {
                return Err(StageError {
                    stage: Stage::Config,
                    error: Error::InvalidParameter(format!(
                        "sweep needs a random generator source, got {other:?}"
                    )),
                })
            }
        };
        let cfg = RunConfig {
            source,
            ..base.clone()
        };
        let report = run(&cfg)?;
        rows.push(SweepRow::from_report(kap, &report));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::scalar_instance;

    fn scalar_loaded() -> LoadedInstance<f64> {
        LoadedInstance {
            instance: scalar_instance(0.25, 0.25, 1.0).unwrap(),
            scale: 1.0,
            rect_rows: None,
            c_pad: None,
        }
    }

    #[test]
    fn scalar_lcu_only() {
        let cfg = RunConfig::new(Source::Poisson { n: 2 }, 0.05);
        let r = run_instance(&cfg, &scalar_loaded()).unwrap();
        assert!(r.pass);
        assert!(r.verification.unwrap().residual_rel.unwrap() <= 0.05);
        assert!(r.x_used.is_some() && r.kappa_alpha > 0.0);
    }

    #[test]
    fn estimate_mode_skips_synthesis() {
        let mut cfg = RunConfig::new(
            Source::Random {
                case: CaseTag::Normal,
                n: 4,
                kappa: 10.0,
                seed: 1,
            },
            0.01,
        );
        cfg.mode = Mode::Estimate;
        let r = run(&cfg).unwrap();
        assert!(r.program.is_none() && r.verification.is_none());
        let want = r.kappa * (r.kappa * 4.0 / 0.01).ln();
        assert!((r.estimate.q_est - want).abs() < 1e-9);
    }

    #[test]
    fn full_unitary_manual() {
        let mut cfg = RunConfig::new(
            Source::Random {
                case: CaseTag::BZero,
                n: 2,
                kappa: 2.0,
                seed: 3,
            },
            0.1,
        );
        cfg.mode = Mode::FullUnitary;
        cfg.manual = Some(ManualParams::new(4, 2));
        let r = run(&cfg).unwrap();
        let u = r.unitary.unwrap();
        assert!(u.structural_err <= 1e-10);
        assert!(u.check.unitarity_defect <= 1e-9);
        assert!(!u.shrunk);
    }

    #[test]
    fn shrink_fits_cap() {
        let p = crate::discretization::params_bzero(10.0, 0.01).unwrap();
        let (q, shrunk) = shrink_for_unitary(&p, 4, 1 << 16);
        assert!(shrunk);
        let k = (q.term_count() as usize).next_power_of_two();
        assert!((k * 4).pow(2) <= 1 << 16);
        assert!((q.r_count as f64 * q.delta_t) >= p.t_r_max * 0.99);
    }

    #[test]
    fn stage_tags_and_exit_codes() {
        let mut cfg = RunConfig::new(Source::Poisson { n: 1 }, 0.1);
        let e = run(&cfg).unwrap_err();
        assert_eq!(e.stage, Stage::Load);
        cfg.epsilon = 2.0;
        let e = run(&cfg).unwrap_err();
        assert_eq!(e.stage, Stage::Config);
        assert_eq!(e.exit_code(), 2);
        let budget = StageError {
            stage: Stage::Synthesize,
            error: Error::TermBudgetExceeded { terms: 10, budget: 1 },
        };
        assert_eq!(budget.exit_code(), 3);
        assert!(budget.to_string().starts_with("[synthesize]"));
    }

    #[test]
    fn deterministic_reports() {
        let cfg = RunConfig::new(
            Source::Random {
                case: CaseTag::BZero,
                n: 2,
                kappa: 2.0,
                seed: 9,
            },
            0.1,
        );
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.deterministic_json(), b.deterministic_json());
        assert!(!a.deterministic_json().contains("wall_time"));
    }

    #[test]
    fn general_needs_chebyshev_mode() {
        let mut cfg = RunConfig::new(
            Source::Random {
                case: CaseTag::GeneralChebyshev,
                n: 2,
                kappa: 2.0,
                seed: 4,
            },
            0.01,
        );
        let e = run(&cfg).unwrap_err();
        assert_eq!(e.stage, Stage::Synthesize);
        cfg.mode = Mode::Chebyshev;
        let r = run(&cfg).unwrap();
        assert!(r.pass, "{r:?}");
        let (b, _) = crate::chebyshev::plan_sizes(r.kappa, 0.01).unwrap();
        assert_eq!(r.chebyshev.unwrap().b, b);
    }

    #[test]
    fn csv_shape() {
        let cfg = RunConfig::new(
            Source::Random {
                case: CaseTag::BZero,
                n: 2,
                kappa: 2.0,
                seed: 2,
            },
            0.1,
        );
        let rows = sweep(&cfg, &[2.0, 5.0]).unwrap();
        let csv = sweep_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].split(',').count(), CSV_HEADER.split(',').count());
    }
}
