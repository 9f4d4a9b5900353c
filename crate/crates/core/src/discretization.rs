//! Quadrature grids for the four LCU constructions and the kernels they use.
//!
//! Times are `t_r = r·δ_t` for `r = 0..R` and frequencies `ω_j = j·δ_ω` for
//! `j = −J..=J`. All logarithms are natural.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::CaseTag;

/// Free constants `c₁..c₄` scaling `δ_t`, `δ_ω`, `t_R`, `ω_J` respectively.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            c4: 1.0,
        }
    }
}

impl Constants {
    pub fn as_array(&self) -> [f64; 4] {
        [self.c1, self.c2, self.c3, self.c4]
    }

    pub fn from_array(c: [f64; 4]) -> Self {
        Constants {
            c1: c[0],
            c2: c[1],
            c3: c[2],
            c4: c[3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationParams {
    pub rule: CaseTag,
    pub delta_t: f64,
    pub delta_omega: f64,
    pub t_r_max: f64,
    pub omega_j_max: f64,
    pub r_count: usize,
    pub j_count: usize,
    pub constants: Constants,
    pub beta: Option<f64>,
    /// Set when the grid came from user-supplied values rather than formulas.
    pub manual: bool,
}

impl DiscretizationParams {
    /// `t_r` for `r = 0..R`.
    pub fn time(&self, r: usize) -> f64 {
        r as f64 * self.delta_t
    }

    /// `ω_j` for `j = −J..=J`.
    pub fn omega(&self, j: i64) -> f64 {
        j as f64 * self.delta_omega
    }

    pub fn omegas(&self) -> Vec<f64> {
        let j = self.j_count as i64;
        (-j..=j).map(|k| self.omega(k)).collect()
    }

    /// Number of LCU terms the grid produces for its case.
    pub fn term_count(&self) -> u64 {
        let r = self.r_count as u64;
        let w = 2 * self.j_count as u64 + 1;
        match self.rule {
            CaseTag::Normal | CaseTag::PositiveWithRoots => r.saturating_mul(w.saturating_mul(w)),
            _ => r.saturating_mul(w),
        }
    }

    /// The longest evolution time the program asks for.
    pub fn max_evolution_time(&self) -> f64 {
        match self.rule {
            CaseTag::PositiveWithRoots => (2.0 * self.t_r_max).sqrt() * self.omega_j_max,
            CaseTag::PositiveHermitianPart => self.t_r_max * self.omega_j_max.max(1.0),
            _ => self.t_r_max * self.omega_j_max,
        }
    }

    /// Whether the frequency step is fine enough to avoid aliasing.
    pub fn aliasing_ok(&self) -> bool {
        let period = 2.0 * PI / self.delta_omega;
        match self.rule {
            CaseTag::PositiveWithRoots => period >= 2.0 * (2.0 * self.t_r_max).sqrt(),
            CaseTag::GeneralChebyshev => true,
            _ => period >= 2.0 * self.t_r_max,
        }
    }

    pub fn check_budget(&self, budget: u64) -> Result<()> {
        let terms = self.term_count();
        if terms > budget {
            return Err(Error::TermBudgetExceeded { terms, budget });
        }
        Ok(())
    }
}

fn check_common(kappa: f64, epsilon: f64) -> Result<()> {
    if !(kappa.is_finite() && kappa >= 1.0 - 1e-12) {
        return Err(Error::InvalidParameter(format!("kappa must be >= 1, got {kappa}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    Ok(())
}

fn check_constants(c: &Constants) -> Result<()> {
    if c.as_array().iter().all(|v| v.is_finite() && *v > 0.0) {
        Ok(())
    } else {
        Err(Error::InvalidParameter("constants must be positive".into()))
    }
}

fn ceil_count(x: f64) -> Result<usize> {
    if !x.is_finite() || x < 0.0 || x > 1e15 {
        return Err(Error::InvalidParameter(format!("grid size {x:.3e} out of range")));
    }
    Ok(x.ceil() as usize)
}

/// Builds the grid from a closure mapping constants to
/// `(δ_t, δ_ω, t_R, ω_J)`, halving c₂ until the aliasing guard holds.
fn assemble(
    rule: CaseTag,
    constants: Constants,
    beta: Option<f64>,
    formulas: impl Fn(&Constants) -> (f64, f64, f64, f64),
) -> Result<DiscretizationParams> {
    check_constants(&constants)?;
    let mut c = constants;
    for _ in 0..200 {
        let (dt, dw, tr, wj) = formulas(&c);
        let p = DiscretizationParams {
            rule,
            delta_t: dt,
            delta_omega: dw,
            t_r_max: tr,
            omega_j_max: wj,
            r_count: ceil_count(tr / dt)?,
            j_count: ceil_count(wj / dw)?,
            constants: c,
            beta,
            manual: false,
        };
        if p.aliasing_ok() {
            return Ok(p);
        }
        c.c2 *= 0.5;
    }
    Err(Error::Numerical("aliasing guard could not be satisfied".into()))
}

pub fn params_normal(kappa: f64, epsilon: f64) -> Result<DiscretizationParams> {
    params_normal_with(kappa, epsilon, Constants::default())
}

/// `δ_t = c₁ε/√ln(κ/ε)`, `δ_ω = c₂/(κ√ln(1/ε))`, `t_R = c₃κ√ln(1/ε)`,
/// `ω_J = c₄√ln(κ/ε)`.
pub fn params_normal_with(kappa: f64, epsilon: f64, c: Constants) -> Result<DiscretizationParams> {
    check_common(kappa, epsilon)?;
    let l1 = (1.0 / epsilon).ln().sqrt();
    let lk = (kappa / epsilon).ln().sqrt();
    assemble(CaseTag::Normal, c, None, |c| {
        (
            c.c1 * epsilon / lk,
            c.c2 / (kappa * l1),
            c.c3 * kappa * l1,
            c.c4 * lk,
        )
    })
}

pub fn params_pos_herm(
    kappa: f64,
    c_norm: f64,
    epsilon: f64,
    beta: f64,
) -> Result<DiscretizationParams> {
    params_pos_herm_with(kappa, c_norm, epsilon, beta, Constants::default())
}

/// `δ_t = c₁ε/(κ‖C‖)`, `t_R = c₃κ ln(κ‖C‖/ε)`, `ω_J = c₄ ln^{1/β}(t_R‖C‖/ε)`,
/// `δ_ω = c₂ε/(ω_J‖C‖t_R²)`, evaluated in that order.
pub fn params_pos_herm_with(
    kappa: f64,
    c_norm: f64,
    epsilon: f64,
    beta: f64,
    c: Constants,
) -> Result<DiscretizationParams> {
    check_common(kappa, epsilon)?;
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter(format!("beta must lie in (0, 1), got {beta}")));
    }
    if !(c_norm > 0.0 && c_norm.is_finite()) {
        return Err(Error::InvalidParameter("|C| must be positive".into()));
    }
    let lt = (kappa * c_norm / epsilon).ln().max(f64::MIN_POSITIVE);
    assemble(CaseTag::PositiveHermitianPart, c, Some(beta), |c| {
        let tr = c.c3 * kappa * lt;
        let wj = c.c4 * (tr * c_norm / epsilon).ln().max(f64::MIN_POSITIVE).powf(1.0 / beta);
        let dw = c.c2 * epsilon / (wj * c_norm * tr * tr);
        (c.c1 * epsilon / (kappa * c_norm), dw, tr, wj)
    })
}

pub fn params_bzero(kappa: f64, epsilon: f64) -> Result<DiscretizationParams> {
    params_bzero_with(kappa, epsilon, Constants::default())
}

/// `δ_t = c₁ε/√ln(1/ε)`, `δ_ω = c₂/(κ√ln(1/ε))`, `t_R = c₃κ√ln(1/ε)`,
/// `ω_J = c₄√ln(1/ε)`.
pub fn params_bzero_with(kappa: f64, epsilon: f64, c: Constants) -> Result<DiscretizationParams> {
    check_common(kappa, epsilon)?;
    let l1 = (1.0 / epsilon).ln().sqrt();
    assemble(CaseTag::BZero, c, None, |c| {
        (
            c.c1 * epsilon / l1,
            c.c2 / (kappa * l1),
            c.c3 * kappa * l1,
            c.c4 * l1,
        )
    })
}

pub fn params_positive(kappa: f64, epsilon: f64) -> Result<DiscretizationParams> {
    params_positive_with(kappa, epsilon, Constants::default())
}

/// `δ_t = c₁ε`, `δ_ω = c₂/√(κ ln(1/ε))`, `t_R = c₃κ ln(1/ε)`,
/// `ω_J = c₄√ln(κ/ε)`.
pub fn params_positive_with(
    kappa: f64,
    epsilon: f64,
    c: Constants,
) -> Result<DiscretizationParams> {
    check_common(kappa, epsilon)?;
    let l1 = (1.0 / epsilon).ln();
    let lk = (kappa / epsilon).ln().sqrt();
    assemble(CaseTag::PositiveWithRoots, c, None, |c| {
        (
            c.c1 * epsilon,
            c.c2 / (kappa * l1).sqrt(),
            c.c3 * kappa * l1,
            c.c4 * lk,
        )
    })
}

/// Dispatches to the formula set for `case`.
pub fn params_for(
    case: CaseTag,
    kappa: f64,
    c_norm: f64,
    epsilon: f64,
    beta: f64,
    c: Constants,
) -> Result<DiscretizationParams> {
    match case {
        CaseTag::Normal => params_normal_with(kappa, epsilon, c),
        CaseTag::PositiveHermitianPart => params_pos_herm_with(kappa, c_norm, epsilon, beta, c),
        CaseTag::BZero => params_bzero_with(kappa, epsilon, c),
        CaseTag::PositiveWithRoots => params_positive_with(kappa, epsilon, c),
        CaseTag::GeneralChebyshev => Err(Error::Precondition(
            "the general case has no quadrature grid".into(),
        )),
    }
}

/// User-supplied grid: `R`, `J` and step sizes; cutoffs follow as
/// `t_R = R·δ_t`, `ω_J = J·δ_ω`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManualParams {
    pub r_count: usize,
    pub j_count: usize,
    #[serde(default = "half")]
    pub delta_t: f64,
    #[serde(default = "half")]
    pub delta_omega: f64,
    #[serde(default)]
    pub beta: Option<f64>,
}

fn half() -> f64 {
    0.5
}

impl ManualParams {
    pub fn new(r_count: usize, j_count: usize) -> Self {
        ManualParams {
            r_count,
            j_count,
            delta_t: 0.5,
            delta_omega: 0.5,
            beta: None,
        }
    }

    pub fn build(&self, rule: CaseTag) -> Result<DiscretizationParams> {
        if !(self.delta_t > 0.0 && self.delta_omega > 0.0) {
            return Err(Error::InvalidParameter("manual step sizes must be positive".into()));
        }
        let beta = match rule {
            CaseTag::PositiveHermitianPart => Some(self.beta.unwrap_or(0.5)),
            _ => None,
        };
        let p = DiscretizationParams {
            rule,
            delta_t: self.delta_t,
            delta_omega: self.delta_omega,
            t_r_max: self.r_count as f64 * self.delta_t,
            omega_j_max: self.j_count as f64 * self.delta_omega,
            r_count: self.r_count,
            j_count: self.j_count,
            constants: Constants::default(),
            beta,
            manual: true,
        };
        if !p.aliasing_ok() {
            return Err(Error::InvalidParameter(format!(
                "manual grid aliases: 2π/δω = {:.4} is too small for t_R = {:.4}",
                2.0 * PI / p.delta_omega,
                p.t_r_max
            )));
        }
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// `e^{−ω²/2}`.
    Gaussian,
    /// `ω e^{−ω²/2}`.
    HermiteOne,
    /// `(1/2π) e^{−(1+iω)^β} / (1 ∓ iω)`.
    LchsBeta,
}

/// Sign in the `1 ∓ iω` denominator of the LCHS kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelSign {
    /// `1/(1 − iω)`.
    Minus,
    /// `1/(1 + iω)`.
    Plus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub beta: Option<f64>,
    pub normalization: f64,
    pub sign: KernelSign,
    /// Worst scalar error measured when the normalization was fitted.
    pub calibration_error: Option<f64>,
}

impl KernelSpec {
    pub fn gaussian() -> Self {
        KernelSpec {
            kind: KernelKind::Gaussian,
            beta: None,
            normalization: 1.0,
            sign: KernelSign::Minus,
            calibration_error: None,
        }
    }

    pub fn hermite_one() -> Self {
        KernelSpec {
            kind: KernelKind::HermiteOne,
            ..Self::gaussian()
        }
    }

    pub fn lchs(beta: f64, normalization: f64, sign: KernelSign) -> Self {
        KernelSpec {
            kind: KernelKind::LchsBeta,
            beta: Some(beta),
            normalization,
            sign,
            calibration_error: None,
        }
    }

    pub fn eval(&self, omega: f64) -> Complex64 {
        let raw = match self.kind {
            KernelKind::Gaussian => Complex64::new((-omega * omega / 2.0).exp(), 0.0),
            KernelKind::HermiteOne => Complex64::new(omega * (-omega * omega / 2.0).exp(), 0.0),
            KernelKind::LchsBeta => lchs_raw(omega, self.beta.unwrap_or(0.5), self.sign),
        };
        raw * self.normalization
    }
}

fn lchs_raw(omega: f64, beta: f64, sign: KernelSign) -> Complex64 {
    let s = match sign {
        KernelSign::Minus => -1.0,
        KernelSign::Plus => 1.0,
    };
    let denom = Complex64::new(1.0, s * omega);
    let decay = (-Complex64::new(1.0, omega).powf(beta)).exp();
    decay / denom / (2.0 * PI)
}

/// Unnormalized `f̂(ω) = (1/2π) e^{−(1+iω)^β} / (1 − iω)`.
pub fn lchs_kernel(omega: f64, beta: f64) -> Complex64 {
    lchs_raw(omega, beta, KernelSign::Minus)
}

/// `|f̂(ω)| = e^{−(ω²+1)^{β/2} cos(β atan ω)} / (2π √(ω²+1))`.
pub fn lchs_modulus(omega: f64, beta: f64) -> f64 {
    let r2 = omega * omega + 1.0;
    (-(r2.powf(beta / 2.0)) * (beta * omega.atan()).cos()).exp() / (2.0 * PI * r2.sqrt())
}

/// Grid used to fit the LCHS normalization.
pub const KERNEL_FIT_DELTA: f64 = 0.1;
pub const KERNEL_FIT_J: i64 = 1000;
/// Times at which the fitted kernel is checked against `e^{−t}`.
pub const KERNEL_CHECK_TIMES: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 5.0];

/// `δ_ω Σ_j k(ω_j) e^{−iω_j t}` for `j = −J..=J`.
pub fn kernel_quadrature(kernel: &KernelSpec, t: f64, delta_omega: f64, j_max: i64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for j in -j_max..=j_max {
        let w = j as f64 * delta_omega;
        acc += kernel.eval(w) * Complex64::from_polar(1.0, -w * t);
    }
    acc * delta_omega
}

/// Fits the LCHS normalization by least squares of the scalar identity
/// `e^{−t} = ∫ f̂(ω) e^{−iωt} dω` on `t ∈ [0, 5]`, for both denominator
/// signs, and keeps the sign with the smaller worst-case residual.
pub fn calibrate_kernel(beta: f64) -> Result<KernelSpec> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter(format!("beta must lie in (0, 1), got {beta}")));
    }
    let fit_times: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
    let mut best: Option<KernelSpec> = None;
    for sign in [KernelSign::Minus, KernelSign::Plus] {
        let unit = KernelSpec::lchs(beta, 1.0, sign);
        let g: Vec<Complex64> = fit_times
            .iter()
            .map(|&t| kernel_quadrature(&unit, t, KERNEL_FIT_DELTA, KERNEL_FIT_J))
            .collect();
        let num: f64 = g.iter().zip(&fit_times).map(|(z, t)| z.re * (-t).exp()).sum();
        let den: f64 = g.iter().map(|z| z.norm_sqr()).sum();
        if !(den > 0.0) {
            continue;
        }
        let normalization = num / den;
        if !(normalization > 0.0) {
            continue;
        }
        let mut spec = KernelSpec::lchs(beta, normalization, sign);
        let err = KERNEL_CHECK_TIMES
            .iter()
            .map(|&t| {
                (kernel_quadrature(&spec, t, KERNEL_FIT_DELTA, KERNEL_FIT_J) - (-t).exp()).norm()
            })
            .fold(0.0, f64::max);
        spec.calibration_error = Some(err);
        if best.map_or(true, |b| err < b.calibration_error.unwrap_or(f64::INFINITY)) {
            best = Some(spec);
        }
    }
    best.ok_or_else(|| Error::Numerical("kernel normalization fit failed".into()))
}

/// `(δ_ω/√2π) Σ_j e^{−ω_j²/2} − 1`, summed outward until terms drop
/// below 1e-18, with compensated summation.
pub fn comb_check(delta_omega: f64) -> f64 {
    let mut sum = 1.0; // j = 0 term
    let mut comp = 0.0;
    let mut j = 1u64;
    loop {
        let w = j as f64 * delta_omega;
        let term = 2.0 * (-w * w / 2.0).exp();
        if term < 1e-18 {
            break;
        }
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        j += 1;
    }
    sum * delta_omega / (2.0 * PI).sqrt() - 1.0
}

/// `2 Σ_{k≥1} e^{−(2πk/δ_ω)²/2}`.
pub fn comb_rhs(delta_omega: f64) -> f64 {
    let mut acc = 0.0;
    for k in 1..1000 {
        let x = 2.0 * PI * k as f64 / delta_omega;
        let term = (-x * x / 2.0).exp();
        if term == 0.0 {
            break;
        }
        acc += 2.0 * term;
    }
    acc
}

/// Truncated Hubbard–Stratonovich sum
/// `(δ_ω/√2π) Σ_{|j|≤J} e^{−ω_j²/2} e^{−iω_j√(2t) p}`, approximating `e^{−tp²}`.
pub fn hubbard_stratonovich(p: f64, t: f64, delta_omega: f64, j_max: usize) -> Complex64 {
    let s = (2.0 * t).sqrt() * p;
    let mut acc = Complex64::new(0.0, 0.0);
    let j = j_max as i64;
    for k in -j..=j {
        let w = k as f64 * delta_omega;
        acc += Complex64::from_polar((-w * w / 2.0).exp(), -w * s);
    }
    acc * (delta_omega / (2.0 * PI).sqrt())
}
