//! Polynomial approximation of `Q⁻¹` for instances with no structure to
//! exploit, and the coefficient growth that makes it expensive.
//!
//! `1/x` on `[1/κ, 1]` is replaced by an odd polynomial
//! `Σ_k ξ_k x^{2k+1}` of degree `2j₀+1`, which on matrices becomes
//! `Σ_k ξ_k Q†(QQ†)^k` and acts on `C` through `L†(M) = A†M + MB†` and
//! `L(M) = AM + MB` without forming `Q`.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{Num, One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::problem::{kappa, SylvesterInstance};
use crate::scalar::{from_c64, Real};

/// Largest `j₀` a plan may request.
pub const DEFAULT_MAX_J0: usize = 60;
/// `b` up to which binomial tails are cross-checked with exact integers.
pub const EXACT_TAIL_MAX_B: usize = 30;

/// Coefficients of `x^{2k+1}` in `T_{2j+1}(x)` for `k = 0..=j`, from
/// `T_{n+1} = 2xT_n − T_{n−1}` in checked 128-bit integers.
pub fn cheb_odd_coeffs(j: usize) -> Result<Vec<i128>> {
    let n = 2 * j + 1;
    let mut prev: Vec<i128> = vec![1];
    let mut cur: Vec<i128> = vec![0, 1];
    for _ in 1..n {
        let mut next = vec![0i128; cur.len() + 1];
        for (i, &c) in cur.iter().enumerate() {
            next[i + 1] = c.checked_mul(2).ok_or(Error::CoefficientOverflow(j))?;
        }
        for (i, &c) in prev.iter().enumerate() {
            next[i] = next[i].checked_sub(c).ok_or(Error::CoefficientOverflow(j))?;
        }
        prev = cur;
        cur = next;
    }
    Ok((0..=j).map(|k| cur[2 * k + 1]).collect())
}

/// `Σ_k |T_{2j+1, 2k+1}|`.
pub fn cheb_abs_sum(j: usize) -> Result<i128> {
    let coeffs = cheb_odd_coeffs(j)?;
    coeffs
        .iter()
        .try_fold(0i128, |acc, c| acc.checked_add(c.abs()))
        .ok_or(Error::CoefficientOverflow(j))
}

/// The closed form `2^{2j+1} − 1` proposed for [`cheb_abs_sum`].
pub fn power_of_two_sum(j: usize) -> i128 {
    (1i128 << (2 * j + 1)) - 1
}

/// `|T_n(i)| = ((1+√2)^n + (1−√2)^n)/2`, which equals the absolute
/// coefficient sum of `T_n`; computed by `u_n = 2u_{n−1} + u_{n−2}`.
pub fn cheb_abs_sum_closed(n: usize) -> i128 {
    let (mut a, mut b) = (1i128, 1i128);
    for _ in 1..n {
        let c = 2 * b + a;
        a = b;
        b = c;
    }
    if n == 0 {
        1
    } else {
        b
    }
}

/// `b = ⌈κ² ln(κ/ε)⌉` and `j₀ = ⌈√(b ln(4b/ε))⌉`.
pub fn plan_sizes(kappa: f64, epsilon: f64) -> Result<(usize, usize)> {
    if !(kappa >= 1.0 - 1e-12 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!("kappa must be >= 1, got {kappa}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let b = (kappa * kappa * (kappa / epsilon).ln()).ceil().max(1.0);
    let j0 = (b * (4.0 * b / epsilon).ln()).sqrt().ceil();
    if b > 1e9 {
        return Err(Error::ChebyshevBudget {
            required: j0 as usize,
            budget: DEFAULT_MAX_J0,
        });
    }
    Ok((b as usize, j0 as usize))
}

/// `w_j = Σ_{i=j+1}^{b} C(2b, b+i)/4^b` for `j = 0..=j0`, through log-gamma
/// with compensated summation from the far tail inwards.
pub fn binomial_tails(b: usize, j0: usize) -> Vec<f64> {
    let bf = b as f64;
    let ln_norm = ln_gamma(2.0 * bf + 1.0) - 2.0 * bf * std::f64::consts::LN_2;
    let term = |i: usize| -> f64 {
        let i = i as f64;
        (ln_norm - ln_gamma(bf + i + 1.0) - ln_gamma(bf - i + 1.0)).exp()
    };
    let mut tails = vec![0.0; j0 + 1];
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    // Suffix sums: tails[j] = Σ_{i > j} term(i); entries with j ≥ b stay 0.
    for i in (1..=b).rev() {
        let y = term(i) - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        if i - 1 <= j0 {
            tails[i - 1] = sum;
        }
    }
    tails
}

/// Exact tails as rationals.
pub fn binomial_tails_exact(b: usize, j0: usize) -> Vec<BigRational> {
    let two_b = 2 * b;
    // Row of C(2b, ·) by the multiplicative recurrence.
    let mut row = vec![BigInt::one(); two_b + 1];
    for k in 1..=two_b {
        row[k] = &row[k - 1] * BigInt::from(two_b - k + 1) / BigInt::from(k);
    }
    let denom = BigInt::one() << (2 * b);
    let mut tails = vec![BigRational::zero(); j0 + 1];
    let mut acc = BigInt::zero();
    for i in (1..=b).rev() {
        acc += &row[b + i];
        if i - 1 <= j0 {
            tails[i - 1] = BigRational::new(acc.clone(), denom.clone());
        }
    }
    tails
}

/// Exact tails in `u128` for small `b`, as `(numerator, 4^b)`.
pub fn binomial_tails_u128(b: usize, j0: usize) -> Option<(Vec<u128>, u128)> {
    if b > EXACT_TAIL_MAX_B {
        return None;
    }
    let two_b = 2 * b as u128;
    let mut row = vec![1u128; 2 * b + 1];
    for k in 1..=2 * b {
        row[k] = row[k - 1] * (two_b - k as u128 + 1) / k as u128;
    }
    let mut tails = vec![0u128; j0 + 1];
    let mut acc = 0u128;
    for i in (1..=b).rev() {
        acc += row[b + i];
        if i - 1 <= j0 {
            tails[i - 1] = acc;
        }
    }
    Some((tails, 1u128 << (2 * b)))
}

/// Sign pattern used when expanding the Chebyshev series into monomials.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XiSign {
    /// `(−1)^j`, which reproduces `Σ_j (−1)^j w_j T_{2j+1}(x)`.
    Alternating,
    /// `(−1)^{j+k}`, kept for comparison.
    AlternatingJk,
}

/// `ξ_k = 4 Σ_{j=k}^{j0} s(j,k) w_j T_{2j+1,2k+1}`.
pub fn xi_coefficients(tails: &[f64], sign: XiSign) -> Result<Vec<f64>> {
    let j0 = tails.len().saturating_sub(1);
    let mut xi = vec![0.0; j0 + 1];
    for (j, &w) in tails.iter().enumerate() {
        let coeffs = cheb_odd_coeffs(j)?;
        for (k, &t) in coeffs.iter().enumerate() {
            let s = match sign {
                XiSign::Alternating => j % 2,
                XiSign::AlternatingJk => (j + k) % 2,
            };
            let s = if s == 0 { 1.0 } else { -1.0 };
            xi[k] += 4.0 * s * w * t as f64;
        }
    }
    Ok(xi)
}

pub fn xi_coefficients_exact(tails: &[BigRational]) -> Result<Vec<BigRational>> {
    let j0 = tails.len().saturating_sub(1);
    let mut xi = vec![BigRational::zero(); j0 + 1];
    let four = BigRational::from_integer(BigInt::from(4));
    for (j, w) in tails.iter().enumerate() {
        let coeffs = cheb_odd_coeffs(j)?;
        for (k, &t) in coeffs.iter().enumerate() {
            let mut v = &four * w * BigRational::from_integer(BigInt::from(t));
            if j % 2 == 1 {
                v = -v;
            }
            xi[k] += v;
        }
    }
    Ok(xi)
}

/// `Σ_k ξ_k x^{2k+1}` by Horner's rule in `x²`, for any ring.
pub fn eval_odd_series<T: Num + Clone>(xi: &[T], x: T) -> T {
    let x2 = x.clone() * x.clone();
    let mut acc = T::zero();
    for c in xi.iter().rev() {
        acc = acc * x2.clone() + c.clone();
    }
    acc * x
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChebPlan {
    pub kappa: f64,
    pub epsilon: f64,
    pub b: usize,
    pub j0: usize,
    pub tails: Vec<f64>,
    pub xi: Vec<f64>,
    /// `Σ|ξ_k|`.
    pub coeff_l1: f64,
    /// Guaranteed upper bound `(8/3)·2^{2j₀+2}`.
    pub coeff_bound: f64,
    /// Whether `coeff_l1` stayed below `coeff_bound`.
    pub within_bound: bool,
}

impl ChebPlan {
    /// Scalar defect `|ξ(q) − 1/q|` with `ξ(q) = Σ_k ξ_k q̄ (q q̄)^k`.
    pub fn scalar_error(&self, q: Complex64) -> f64 {
        let y = q.norm_sqr();
        let mut p = 0.0;
        for c in self.xi.iter().rev() {
            p = p * y + c;
        }
        (q.conj() * p - 1.0 / q).norm()
    }
}

pub fn build_plan(kappa: f64, epsilon: f64) -> Result<ChebPlan> {
    build_plan_with(kappa, epsilon, DEFAULT_MAX_J0)
}

pub fn build_plan_with(kappa: f64, epsilon: f64, max_j0: usize) -> Result<ChebPlan> {
    let (b, j0) = plan_sizes(kappa, epsilon)?;
    if j0 > max_j0 {
        return Err(Error::ChebyshevBudget {
            required: j0,
            budget: max_j0,
        });
    }
    let tails = binomial_tails(b, j0);
    let xi = xi_coefficients(&tails, XiSign::Alternating)?;
    let coeff_l1: f64 = xi.iter().map(|v| v.abs()).sum();
    let coeff_bound = 8.0 / 3.0 * 2f64.powi(2 * j0 as i32 + 2);
    Ok(ChebPlan {
        kappa,
        epsilon,
        b,
        j0,
        tails,
        xi,
        coeff_l1,
        coeff_bound,
        within_bound: coeff_l1 < coeff_bound,
    })
}

/// Exact monomial coefficients for `(κ, ε)`.
pub fn exact_xi(kappa: f64, epsilon: f64) -> Result<Vec<BigRational>> {
    let (b, j0) = plan_sizes(kappa, epsilon)?;
    xi_coefficients_exact(&binomial_tails_exact(b, j0))
}

/// `|Σ_k ξ_k x^{2k+1} − 1/x|` evaluated in exact rational arithmetic at a
/// real point, then rounded.
pub fn exact_scalar_error(xi: &[BigRational], x: f64) -> Result<f64> {
    let xr = BigRational::from_float(x)
        .ok_or_else(|| Error::InvalidParameter("non-finite evaluation point".into()))?;
    let v = eval_odd_series(xi, xr.clone()) - xr.recip();
    let v = if v < BigRational::zero() { -v } else { v };
    Ok(v.to_f64().unwrap_or(f64::INFINITY))
}

/// Maximum number of nested `L`/`L†` applications.
pub const MAX_POWER: usize = 10_000;

fn l_map<R: Real>(inst: &SylvesterInstance<R>, m: &CMatrix<R>) -> CMatrix<R> {
    &inst.a * m + m * &inst.b
}

fn l_adj_map<R: Real>(inst: &SylvesterInstance<R>, m: &CMatrix<R>) -> CMatrix<R> {
    inst.a.adjoint() * m + m * inst.b.adjoint()
}

/// `unvec(Q†(QQ†)^k vec C)`, computed as `L†` followed by `k` rounds of
/// `L` then `L†`.
pub fn apply_power<R: Real>(inst: &SylvesterInstance<R>, k: usize) -> Result<CMatrix<R>> {
    if k > MAX_POWER {
        return Err(Error::ChebyshevBudget {
            required: k,
            budget: MAX_POWER,
        });
    }
    let mut m = l_adj_map(inst, &inst.c);
    for _ in 0..k {
        m = l_adj_map(inst, &l_map(inst, &m));
    }
    Ok(m)
}

/// `X̂ = Σ_k ξ_k Q†(QQ†)^k` applied to `C`.
///
/// Fails with [`Error::PrecisionLoss`] when `Σ|ξ_k|` times the machine
/// epsilon exceeds the target, since cancellation then swamps the result.
pub fn solve_general<R: Real>(
    inst: &SylvesterInstance<R>,
    epsilon: f64,
) -> Result<(CMatrix<R>, ChebPlan)> {
    let k = kappa(inst)?;
    let plan = build_plan(k, epsilon)?;
    if plan.coeff_l1 * R::MACHINE_EPS > epsilon {
        return Err(Error::PrecisionLoss {
            coeff_l1: plan.coeff_l1,
            epsilon,
        });
    }
    let mut m = l_adj_map(inst, &inst.c);
    let n = inst.n();
    let mut x = linalg::zeros::<R>(n, n);
    for (idx, &xi) in plan.xi.iter().enumerate() {
        if idx > 0 {
            m = l_adj_map(inst, &l_map(inst, &m));
        }
        x += linalg::scale(&m, from_c64(Complex64::new(xi, 0.0)));
    }
    Ok((x, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{gen_random, random_cmatrix};
    use crate::lcu::{reconstruct, synth_bzero};
    use crate::discretization::{params_bzero_with, Constants};
    use crate::problem::{build_q, scalar_instance, CaseTag};
    use crate::verify::oracle_solve;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn low_order_coefficients() {
        assert_eq!(cheb_odd_coeffs(0).unwrap(), vec![1]);
        assert_eq!(cheb_odd_coeffs(1).unwrap(), vec![-3, 4]);
        assert_eq!(cheb_odd_coeffs(2).unwrap(), vec![5, -20, 16]);
        assert_eq!(cheb_abs_sum(1).unwrap(), 7);
        assert_eq!(power_of_two_sum(1), 7);
    }

    #[test]
    fn abs_sum_is_value_at_imaginary_unit() {
        // 1, 7, 41, 239: the power-of-two form only matches for j ≤ 1.
        assert_eq!(cheb_abs_sum(2).unwrap(), 41);
        assert_eq!(cheb_abs_sum(3).unwrap(), 239);
        assert_ne!(cheb_abs_sum(2).unwrap(), power_of_two_sum(2));
        for j in 0..=30 {
            assert_eq!(cheb_abs_sum(j).unwrap(), cheb_abs_sum_closed(2 * j + 1), "j={j}");
        }
    }

    #[test]
    fn overflow_is_reported() {
        assert!(cheb_odd_coeffs(42).is_ok());
        assert!(matches!(cheb_odd_coeffs(70), Err(Error::CoefficientOverflow(70))));
    }

    #[test]
    fn plan_sizes_examples() {
        assert_eq!(plan_sizes(2.0, 0.01).unwrap(), (22, 15));
        assert_eq!(plan_sizes(3.0, 0.01).unwrap(), (52, 23));
        assert_eq!(plan_sizes(4.0, 0.01).unwrap(), (96, 32));
        assert_eq!(plan_sizes(5.0, 0.01).unwrap(), (156, 42));
        assert!(plan_sizes(2.0, 1.0).is_err());
    }

    #[test]
    fn tails_are_decreasing_probabilities() {
        let t = binomial_tails(52, 23);
        for w in t.windows(2) {
            assert!(w[0] > w[1]);
        }
        assert!(t.iter().all(|&w| w > 0.0 && w < 1.0));
        assert!(t[0] < 0.5);
    }

    #[test]
    fn tails_match_exact_integers() {
        for b in [1usize, 5, 22, 30] {
            let j0 = b + 2;
            let float = binomial_tails(b, j0);
            let (num, den) = binomial_tails_u128(b, j0).unwrap();
            let big = binomial_tails_exact(b, j0);
            for j in 0..=j0 {
                let exact = num[j] as f64 / den as f64;
                assert!((float[j] - exact).abs() <= 1e-12 * exact.max(1e-300), "b={b} j={j}");
                assert!((big[j].to_f64().unwrap() - exact).abs() <= 1e-15 * exact.max(1e-300));
            }
        }
        assert!(binomial_tails_u128(31, 3).is_none());
    }

    #[test]
    fn scalar_accuracy_with_alternating_sign() {
        let plan = build_plan(2.0, 0.01).unwrap();
        assert_eq!((plan.b, plan.j0), (22, 15));
        for i in 0..100 {
            let x = 0.5 + 0.5 * i as f64 / 99.0;
            assert!((eval_odd_series(&plan.xi, x) - 1.0 / x).abs() <= 0.01);
        }
        let jk = xi_coefficients(&plan.tails, XiSign::AlternatingJk).unwrap();
        let bad = (eval_odd_series(&jk, 0.75) - 1.0 / 0.75).abs();
        assert!(bad > 1.0, "{bad}");
    }

    #[test]
    fn exact_evaluation_survives_cancellation() {
        let xi = exact_xi(4.0, 0.01).unwrap();
        let plan = build_plan(4.0, 0.01).unwrap();
        let mut worst_exact = 0.0f64;
        let mut worst_float = 0.0f64;
        for i in 0..20 {
            let x = 0.25 + 0.75 * i as f64 / 19.0;
            worst_exact = worst_exact.max(exact_scalar_error(&xi, x).unwrap());
            worst_float = worst_float.max((eval_odd_series(&plan.xi, x) - 1.0 / x).abs());
        }
        assert!(worst_exact <= 0.01, "{worst_exact}");
        assert!(worst_float > 1.0, "{worst_float}");
    }

    #[test]
    fn coefficient_growth() {
        let l1: Vec<f64> = [2.0, 3.0, 4.0, 5.0]
            .iter()
            .map(|&k| build_plan(k, 0.01).unwrap().coeff_l1)
            .collect();
        for w in l1.windows(2) {
            assert!(w[1] > 1e3 * w[0]);
        }
        assert!(l1[2] > 10.0 * l1[0]);
        assert!(build_plan(2.0, 0.01).unwrap().within_bound);
        assert!(!build_plan(5.0, 0.01).unwrap().within_bound);
    }

    #[test]
    fn budget_is_enforced() {
        assert!(matches!(
            build_plan_with(5.0, 0.01, 40),
            Err(Error::ChebyshevBudget { required: 42, budget: 40 })
        ));
    }

    #[test]
    fn apply_power_matches_vectorized() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let inst = crate::generate::random_instance(&mut rng, 2).unwrap();
        let q = build_q(&inst).unwrap();
        let qa = q.adjoint();
        let vc = linalg::vec(&inst.c);
        let k0 = apply_power(&inst, 0).unwrap();
        assert!(linalg::spectral_norm(&(&k0 - (inst.a.adjoint() * &inst.c + &inst.c * inst.b.adjoint()))) < 1e-14);
        let k1 = apply_power(&inst, 1).unwrap();
        let want = linalg::unvec(&(&qa * (&q * (&qa * &vc))), 2, 2).unwrap();
        assert!(linalg::spectral_norm(&(k1 - want)) < 1e-10);
        let z = crate::problem::SylvesterInstance::new(linalg::zeros(2, 2), linalg::zeros(2, 2), random_cmatrix(&mut rng, 2, 2), 2.0, None).unwrap();
        for k in 0..3 {
            assert_eq!(linalg::fro_norm(&apply_power(&z, k).unwrap()), 0.0);
        }
    }

    #[test]
    fn scalar_solve() {
        let s = scalar_instance(0.25, 0.25, 1.0).unwrap();
        let (x, _) = solve_general(&s, 0.1).unwrap();
        assert!((x[(0, 0)] - 2.0).norm() <= 0.1 * 2.0);
        let z = s.with_c(linalg::zeros(1, 1)).unwrap();
        let (x, _) = solve_general(&z, 0.1).unwrap();
        assert_eq!(x[(0, 0)].norm(), 0.0);
    }

    #[test]
    fn matches_bzero_lcu() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let inst = gen_random(CaseTag::BZero, 2, 2.0, &mut rng).unwrap();
        let (xc, _) = solve_general(&inst, 0.01).unwrap();
        let p = params_bzero_with(2.0, 0.01, Constants { c3: 2.0, c4: 2.0, ..Constants::default() }).unwrap();
        let prog = synth_bzero(&inst, &p, 10_000_000).unwrap();
        let xl = reconstruct(&prog, &inst.c).unwrap();
        let xo = oracle_solve(&inst).unwrap();
        let scale = linalg::spectral_norm(&xo);
        assert!(linalg::spectral_norm(&(&xc - &xl)) <= 0.04 * scale);
    }

    #[test]
    fn precision_guard() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let inst = gen_random(CaseTag::BZero, 2, 4.0, &mut rng).unwrap();
        assert!(matches!(solve_general(&inst, 0.01), Err(Error::PrecisionLoss { .. })));
    }
}
