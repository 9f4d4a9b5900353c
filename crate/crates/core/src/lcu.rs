//! LCU programs `X̂ = Σ_i x_i L_i C R_i` for the four quadrature cases.
//!
//! A term's left and right factors are evolutions
//! `exp(−i·time·(h·M_H + s·M_S))` generated by the Hermitian and skew parts
//! of `A` (left) or `B` (right); in the case with roots `M_H` is the root.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::{Complex, Complex64};
use serde::ser::{SerializeSeq, SerializeStruct};
use serde::{Deserialize, Serialize, Serializer};

use crate::discretization::{DiscretizationParams, KernelSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::problem::{CaseTag, SylvesterInstance};
use crate::scalar::{from_c64, Real};

/// Default cap on the number of terms a program may contain.
pub const DEFAULT_TERM_BUDGET: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Left,
    Right,
}

/// `exp(−i·time·(h_weight·M_H + s_weight·M_S))` on one side of `C`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSpec {
    pub h_weight: f64,
    pub s_weight: f64,
    pub time: f64,
    pub side: Side,
}

impl EvolutionSpec {
    pub fn new(h_weight: f64, s_weight: f64, time: f64, side: Side) -> Self {
        EvolutionSpec {
            h_weight,
            s_weight,
            time,
            side,
        }
    }

    pub fn identity(side: Side) -> Self {
        Self::new(0.0, 0.0, 0.0, side)
    }

    pub fn is_identity(&self) -> bool {
        self.time == 0.0 || (self.h_weight == 0.0 && self.s_weight == 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcuTerm {
    pub coeff: Complex64,
    pub left: EvolutionSpec,
    pub right: EvolutionSpec,
}

/// Which form of the sign conventions a program follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignConvention {
    /// Skew parts enter the positive-Hermitian-part evolutions with `+`.
    #[default]
    Standard,
    /// The alternative reading with `−M_S`, kept for comparison runs.
    Flipped,
}

impl SignConvention {
    fn skew_sign(self) -> f64 {
        match self {
            SignConvention::Standard => 1.0,
            SignConvention::Flipped => -1.0,
        }
    }
}

/// Hermitian generators on both sides.
#[derive(Clone, Debug)]
pub struct Generators<R: Real> {
    pub a_h: CMatrix<R>,
    pub a_s: CMatrix<R>,
    pub b_h: CMatrix<R>,
    pub b_s: CMatrix<R>,
}

impl<R: Real> Generators<R> {
    pub fn from_instance(inst: &SylvesterInstance<R>, case: CaseTag) -> Result<Self> {
        let n = inst.n();
        match case {
            CaseTag::PositiveWithRoots => {
                let roots = inst
                    .roots
                    .as_ref()
                    .ok_or_else(|| Error::Precondition("positive case needs roots P_A, P_B".into()))?;
                for (p, what) in [(&roots.p_a, "P_A"), (&roots.p_b, "P_B")] {
                    if !linalg::is_hermitian(p, 1e-10) {
                        return Err(Error::Precondition(format!("{what} must be Hermitian")));
                    }
                }
                Ok(Generators {
                    a_h: roots.p_a.clone(),
                    a_s: linalg::zeros(n, n),
                    b_h: roots.p_b.clone(),
                    b_s: linalg::zeros(n, n),
                })
            }
            CaseTag::BZero => {
                let (a_h, a_s) = linalg::herm_split(&inst.a)?;
                if linalg::spectral_norm(&a_s).as_f64() > 1e-12 {
                    return Err(Error::Precondition(
                        "B = 0 case needs Hermitian A; apply the Hermitian dilation first".into(),
                    ));
                }
                Ok(Generators {
                    a_h,
                    a_s: linalg::zeros(n, n),
                    b_h: linalg::zeros(n, n),
                    b_s: linalg::zeros(n, n),
                })
            }
            _ => {
                let (a_h, a_s) = linalg::herm_split(&inst.a)?;
                let (b_h, b_s) = linalg::herm_split(&inst.b)?;
                Ok(Generators { a_h, a_s, b_h, b_s })
            }
        }
    }

    pub fn n(&self) -> usize {
        self.a_h.nrows()
    }

    fn side(&self, side: Side) -> (&CMatrix<R>, &CMatrix<R>) {
        match side {
            Side::Left => (&self.a_h, &self.a_s),
            Side::Right => (&self.b_h, &self.b_s),
        }
    }

    /// The generator `h·M_H + s·M_S` of a spec (before the time factor).
    pub fn generator(&self, spec: &EvolutionSpec) -> CMatrix<R> {
        let (h, s) = self.side(spec.side);
        linalg::scale_real(h, R::of(spec.h_weight)) + linalg::scale_real(s, R::of(spec.s_weight))
    }

    /// Dense unitary of a spec.
    pub fn unitary(&self, spec: &EvolutionSpec) -> Result<CMatrix<R>> {
        let n = self.n();
        if spec.is_identity() {
            return Ok(linalg::identity(n));
        }
        let g = self.generator(spec);
        let eig = linalg::hermitian_eigen(&g)?;
        Ok(linalg::unitary_evolution(&eig, R::of(spec.time)))
    }

    /// Same as [`Generators::unitary`] but through the general matrix
    /// exponential, used as an independent reference.
    pub fn unitary_expm(&self, spec: &EvolutionSpec) -> Result<CMatrix<R>> {
        let g = self.generator(spec);
        let minus_it = Complex::new(R::zero(), -R::of(spec.time));
        linalg::mat_exp(&linalg::scale(&g, minus_it))
    }
}

#[derive(Clone, Debug)]
pub enum TermSet {
    /// Terms listed one by one.
    Explicit(Vec<LcuTerm>),
    /// Terms generated on demand from the program's grid.
    Grid,
}

#[derive(Clone, Debug)]
pub struct LcuProgram<R: Real> {
    pub case: CaseTag,
    pub params: Option<DiscretizationParams>,
    pub kernel: Option<KernelSpec>,
    pub convention: SignConvention,
    pub generators: Generators<R>,
    pub terms: TermSet,
    /// `y = Σ|coeff|`.
    pub l1: f64,
    /// L1 norm with the two-frequency weight `|ω − iω′|` split as `|ω| + |ω′|`.
    pub l1_split: f64,
    pub alpha: f64,
    /// `x = y·α`.
    pub rescale: f64,
}

fn gauss(w: f64) -> f64 {
    (-w * w / 2.0).exp()
}

/// `Σ_{r=0}^{R−1} e^{−irθ}` in the stable form
/// `e^{−i(R−1)θ/2} sin(Rθ/2)/sin(θ/2)`, with limit `R` at `θ ∈ 2πℤ`.
pub fn geometric_sum(theta: f64, r_count: usize) -> Complex64 {
    let r = r_count as f64;
    if r_count == 0 {
        return Complex64::new(0.0, 0.0);
    }
    let half = theta / 2.0;
    let den = half.sin();
    if den.abs() < 1e-14 {
        // e^{−irθ} = 1 for every r when θ is a multiple of 2π.
        return Complex64::new(r, 0.0);
    }
    Complex64::from_polar((r * half).sin() / den, -(r - 1.0) * half)
}

impl<R: Real> LcuProgram<R> {
    /// A program from an explicit term list.
    pub fn from_terms(
        case: CaseTag,
        generators: Generators<R>,
        terms: Vec<LcuTerm>,
        alpha: f64,
    ) -> Self {
        let l1: f64 = terms.iter().map(|t| t.coeff.norm()).sum();
        LcuProgram {
            case,
            params: None,
            kernel: None,
            convention: SignConvention::Standard,
            generators,
            terms: TermSet::Explicit(terms),
            l1,
            l1_split: l1,
            alpha,
            rescale: l1 * alpha,
        }
    }

    pub fn term_count(&self) -> u64 {
        match &self.terms {
            TermSet::Explicit(v) => v.len() as u64,
            TermSet::Grid => self.params.as_ref().map_or(0, |p| p.term_count()),
        }
    }

    /// Visits every term in grid order, stopping at the first error.
    pub fn try_for_each_term<E>(&self, mut f: impl FnMut(LcuTerm) -> std::result::Result<(), E>) -> std::result::Result<(), E> {
        let p = match (&self.terms, &self.params) {
            (TermSet::Explicit(v), _) => {
                for t in v {
                    f(*t)?;
                }
                return Ok(());
            }
            (TermSet::Grid, Some(p)) => p,
            (TermSet::Grid, None) => return Ok(()),
        };
        let (dt, dw) = (p.delta_t, p.delta_omega);
        let jmax = p.j_count as i64;
        let sigma = self.convention.skew_sign();
        for r in 0..p.r_count {
            let t = p.time(r);
            match self.case {
                CaseTag::Normal => {
                    let pre = Complex64::new(0.0, dt * dw * dw / (2.0 * PI));
                    for j in -jmax..=jmax {
                        let w = p.omega(j);
                        for jp in -jmax..=jmax {
                            let wp = p.omega(jp);
                            let coeff = pre * Complex64::new(w, -wp) * (gauss(w) * gauss(wp));
                            f(LcuTerm {
                                coeff,
                                left: EvolutionSpec::new(w, wp, t, Side::Left),
                                right: EvolutionSpec::new(w, wp, t, Side::Right),
                            })?;
                        }
                    }
                }
                CaseTag::PositiveHermitianPart => {
                    let kernel = self.kernel.unwrap_or_else(KernelSpec::gaussian);
                    for j in -jmax..=jmax {
                        let w = p.omega(j);
                        f(LcuTerm {
                            coeff: kernel.eval(w) * (dt * dw),
                            left: EvolutionSpec::new(w, sigma, t, Side::Left),
                            right: EvolutionSpec::new(w, sigma, t, Side::Right),
                        })?;
                    }
                }
                CaseTag::BZero => {
                    let pre = dt * dw / (2.0 * PI).sqrt();
                    for j in -jmax..=jmax {
                        let w = p.omega(j);
                        f(LcuTerm {
                            coeff: Complex64::new(0.0, pre * w * gauss(w)),
                            left: EvolutionSpec::new(w, 0.0, t, Side::Left),
                            right: EvolutionSpec::identity(Side::Right),
                        })?;
                    }
                }
                CaseTag::PositiveWithRoots => {
                    let pre = dt * dw * dw / (2.0 * PI);
                    let s = (2.0 * t).sqrt();
                    for j in -jmax..=jmax {
                        let w = p.omega(j);
                        for jp in -jmax..=jmax {
                            let wp = p.omega(jp);
                            f(LcuTerm {
                                coeff: Complex64::new(pre * gauss(w) * gauss(wp), 0.0),
                                left: EvolutionSpec::new(w, 0.0, s, Side::Left),
                                right: EvolutionSpec::new(wp, 0.0, s, Side::Right),
                            })?;
                        }
                    }
                }
                CaseTag::GeneralChebyshev => {}
            }
        }
        Ok(())
    }

    pub fn for_each_term(&self, mut f: impl FnMut(LcuTerm)) {
        let _ = self.try_for_each_term::<()>(|t| {
            f(t);
            Ok(())
        });
    }

    /// All terms as a vector. Only sensible for small programs.
    pub fn collect_terms(&self) -> Vec<LcuTerm> {
        let mut out = Vec::with_capacity(self.term_count().min(1 << 20) as usize);
        self.for_each_term(|t| out.push(t));
        out
    }
}

fn grid_program<R: Real>(
    inst: &SylvesterInstance<R>,
    case: CaseTag,
    params: &DiscretizationParams,
    kernel: Option<KernelSpec>,
    convention: SignConvention,
    term_budget: u64,
) -> Result<LcuProgram<R>> {
    if params.rule != case {
        return Err(Error::InvalidParameter(format!(
            "grid built for {} used for {}",
            params.rule, case
        )));
    }
    params.check_budget(term_budget)?;
    let generators = Generators::from_instance(inst, case)?;
    let (l1, l1_split) = grid_l1(case, params, kernel.as_ref());
    let alpha = inst.alpha.as_f64();
    Ok(LcuProgram {
        case,
        params: Some(params.clone()),
        kernel,
        convention,
        generators,
        terms: TermSet::Grid,
        l1,
        l1_split,
        alpha,
        rescale: l1 * alpha,
    })
}

/// Closed-form `Σ|coeff|` over a grid, plus the split variant.
pub fn grid_l1(
    case: CaseTag,
    p: &DiscretizationParams,
    kernel: Option<&KernelSpec>,
) -> (f64, f64) {
    let r = p.r_count as f64;
    let (dt, dw) = (p.delta_t, p.delta_omega);
    let ws = p.omegas();
    match case {
        CaseTag::Normal => {
            let mut exact = 0.0;
            let mut split = 0.0;
            for &w in &ws {
                for &wp in &ws {
                    let g = gauss(w) * gauss(wp);
                    exact += w.hypot(wp) * g;
                    split += (w.abs() + wp.abs()) * g;
                }
            }
            let pre = r * dt * dw * dw / (2.0 * PI);
            (pre * exact, pre * split)
        }
        CaseTag::PositiveHermitianPart => {
            let k = kernel.copied().unwrap_or_else(KernelSpec::gaussian);
            let s: f64 = ws.iter().map(|&w| k.eval(w).norm()).sum();
            let y = r * dt * dw * s;
            (y, y)
        }
        CaseTag::BZero => {
            let s: f64 = ws.iter().map(|&w| w.abs() * gauss(w)).sum();
            let y = r * dt * dw / (2.0 * PI).sqrt() * s;
            (y, y)
        }
        CaseTag::PositiveWithRoots => {
            let g: f64 = ws.iter().map(|&w| gauss(w)).sum();
            let y = r * dt * dw * dw / (2.0 * PI) * g * g;
            (y, y)
        }
        CaseTag::GeneralChebyshev => (0.0, 0.0),
    }
}

/// `(i/2π)δ_tδ_ω² Σ_{r,j,j′} (ω_j − iω_{j′}) e^{−(ω_j²+ω_{j′}²)/2}` with
/// evolutions `e^{−it_r(ω_j A_H + ω_{j′} A_S)}` and
/// `e^{−it_r(ω_j B_H + ω_{j′} B_S)}`.
pub fn synth_normal<R: Real>(
    inst: &SylvesterInstance<R>,
    params: &DiscretizationParams,
    term_budget: u64,
) -> Result<LcuProgram<R>> {
    grid_program(inst, CaseTag::Normal, params, None, SignConvention::Standard, term_budget)
}

/// `δ_tδ_ω Σ_{r,j} f̂(ω_j)` with evolutions `e^{−i(ω_j A_H + A_S)t_r}` and
/// `e^{−i(ω_j B_H + B_S)t_r}`.
pub fn synth_pos_herm<R: Real>(
    inst: &SylvesterInstance<R>,
    params: &DiscretizationParams,
    kernel: KernelSpec,
    convention: SignConvention,
    term_budget: u64,
) -> Result<LcuProgram<R>> {
    grid_program(
        inst,
        CaseTag::PositiveHermitianPart,
        params,
        Some(kernel),
        convention,
        term_budget,
    )
}

/// Dispatches to the synthesizer for `case`; the kernel is required for
/// the positive-Hermitian-part case and ignored otherwise.
pub fn synthesize<R: Real>(
    inst: &SylvesterInstance<R>,
    case: CaseTag,
    params: &DiscretizationParams,
    kernel: Option<KernelSpec>,
    convention: SignConvention,
    term_budget: u64,
) -> Result<LcuProgram<R>> {
    match case {
        CaseTag::PositiveHermitianPart => {
            let kernel = kernel.ok_or_else(|| {
                Error::Precondition("the positive-Hermitian-part case needs a calibrated kernel".into())
            })?;
            synth_pos_herm(inst, params, kernel, convention, term_budget)
        }
        CaseTag::GeneralChebyshev => Err(Error::Precondition(
            "the general case is solved by the Chebyshev series, not an LCU grid".into(),
        )),
        _ => grid_program(inst, case, params, None, SignConvention::Standard, term_budget),
    }
}

/// `(i/√2π)δ_tδ_ω Σ_{r,j} ω_j e^{−ω_j²/2} e^{−it_rω_j A}` on the left only.
pub fn synth_bzero<R: Real>(
    inst: &SylvesterInstance<R>,
    params: &DiscretizationParams,
    term_budget: u64,
) -> Result<LcuProgram<R>> {
    grid_program(inst, CaseTag::BZero, params, None, SignConvention::Standard, term_budget)
}

/// `(1/2π)δ_tδ_ω² Σ_{r,j,j′} e^{−(ω_j²+ω_{j′}²)/2}` with evolutions
/// `e^{−iω_j√(2t_r)P_A}` and `e^{−iω_{j′}√(2t_r)P_B}`.
pub fn synth_positive<R: Real>(
    inst: &SylvesterInstance<R>,
    params: &DiscretizationParams,
    term_budget: u64,
) -> Result<LcuProgram<R>> {
    grid_program(
        inst,
        CaseTag::PositiveWithRoots,
        params,
        None,
        SignConvention::Standard,
        term_budget,
    )
}

pub fn l1_norm<R: Real>(program: &LcuProgram<R>) -> f64 {
    program.l1
}

// ---------------------------------------------------------------------------
// Dense application
// ---------------------------------------------------------------------------

/// Eigenbasis for one side, either shared by all directions (commuting
/// generators) or specific to one direction `(h, s)/‖(h, s)‖`.
struct Basis<R: Real> {
    u: CMatrix<R>,
    u_adj: CMatrix<R>,
    /// `(α_k, β_k)` for a joint basis, `(λ_k, 0)` for a direction basis.
    values: Vec<(f64, f64)>,
    joint: bool,
}

impl<R: Real> Basis<R> {
    fn phases(&self, spec: &EvolutionSpec, out: &mut Vec<Complex64>) {
        out.clear();
        if spec.is_identity() {
            out.resize(self.values.len(), Complex64::new(1.0, 0.0));
            return;
        }
        if self.joint {
            for &(a, b) in &self.values {
                let th = spec.time * (spec.h_weight * a + spec.s_weight * b);
                out.push(Complex64::from_polar(1.0, -th));
            }
        } else {
            let n = spec.h_weight.hypot(spec.s_weight);
            for &(l, _) in &self.values {
                out.push(Complex64::from_polar(1.0, -spec.time * n * l));
            }
        }
    }
}

struct SideCache<'a, R: Real> {
    h: &'a CMatrix<R>,
    s: &'a CMatrix<R>,
    bases: Vec<Basis<R>>,
    index: HashMap<(u64, u64), usize>,
    joint: bool,
}

fn joint_basis<R: Real>(h: &CMatrix<R>, s: &CMatrix<R>) -> Option<Basis<R>> {
    let scale = R::one().max(linalg::spectral_norm(h) * linalg::spectral_norm(s));
    if linalg::spectral_norm(&linalg::commutator(h, s)) > R::tol(1e-12) * scale {
        return None;
    }
    let m = h + linalg::scale(s, Complex::new(R::zero(), R::one()));
    let eig = linalg::normal_eigen(&m).ok()?;
    let u = eig.vectors;
    let u_adj = u.adjoint();
    let dh = &u_adj * h * &u;
    let ds = &u_adj * s * &u;
    let values = (0..u.nrows())
        .map(|k| (dh[(k, k)].re.as_f64(), ds[(k, k)].re.as_f64()))
        .collect();
    Some(Basis {
        u,
        u_adj,
        values,
        joint: true,
    })
}

impl<'a, R: Real> SideCache<'a, R> {
    fn new(h: &'a CMatrix<R>, s: &'a CMatrix<R>) -> Self {
        let mut cache = SideCache {
            h,
            s,
            bases: Vec::new(),
            index: HashMap::new(),
            joint: false,
        };
        if let Some(b) = joint_basis(h, s) {
            cache.bases.push(b);
            cache.joint = true;
        }
        cache
    }

    fn basis_for(&mut self, spec: &EvolutionSpec) -> Result<usize> {
        if self.joint {
            return Ok(0);
        }
        let n = spec.h_weight.hypot(spec.s_weight);
        let key = if spec.is_identity() || n == 0.0 {
            (u64::MAX, u64::MAX)
        } else {
            ((spec.h_weight / n).to_bits(), (spec.s_weight / n).to_bits())
        };
        if let Some(&i) = self.index.get(&key) {
            return Ok(i);
        }
        let dim = self.h.nrows();
        let basis = if key == (u64::MAX, u64::MAX) {
            Basis {
                u: linalg::identity(dim),
                u_adj: linalg::identity(dim),
                values: vec![(0.0, 0.0); dim],
                joint: false,
            }
        } else {
            let g = linalg::scale_real(self.h, R::of(spec.h_weight / n))
                + linalg::scale_real(self.s, R::of(spec.s_weight / n));
            let eig = linalg::hermitian_eigen(&g)?;
            let u_adj = eig.vectors.adjoint();
            Basis {
                u: eig.vectors,
                u_adj,
                values: eig.values.iter().map(|v| (v.as_f64(), 0.0)).collect(),
                joint: false,
            }
        };
        self.bases.push(basis);
        self.index.insert(key, self.bases.len() - 1);
        Ok(self.bases.len() - 1)
    }
}

/// `Σ coeff · L · C · R`, evaluated in eigenbases: terms sharing a pair of
/// bases are accumulated into one elementwise weight matrix
/// `W[k,l] = Σ coeff·e^{−iθ_k}e^{−iφ_l}` applied to `U_L† C U_R`.
pub fn apply_lcu<R: Real>(program: &LcuProgram<R>, c: &CMatrix<R>) -> Result<CMatrix<R>> {
    let g = &program.generators;
    let n = g.n();
    if c.nrows() != n || c.ncols() != n {
        return Err(Error::DimensionMismatch(format!("C must be {n}x{n}")));
    }
    let mut left = SideCache::new(&g.a_h, &g.a_s);
    let mut right = SideCache::new(&g.b_h, &g.b_s);
    let mut groups: HashMap<(usize, usize), usize> = HashMap::new();
    let mut weights: Vec<((usize, usize), Vec<Complex64>)> = Vec::new();
    let mut pl = Vec::with_capacity(n);
    let mut pr = Vec::with_capacity(n);
    program.try_for_each_term(|t| -> Result<()> {
        if t.coeff == Complex64::new(0.0, 0.0) {
            return Ok(());
        }
        let li = left.basis_for(&t.left)?;
        let ri = right.basis_for(&t.right)?;
        left.bases[li].phases(&t.left, &mut pl);
        right.bases[ri].phases(&t.right, &mut pr);
        let gi = *groups.entry((li, ri)).or_insert_with(|| {
            weights.push(((li, ri), vec![Complex64::new(0.0, 0.0); n * n]));
            weights.len() - 1
        });
        let w = &mut weights[gi].1;
        for k in 0..n {
            let a = t.coeff * pl[k];
            let row = &mut w[k * n..(k + 1) * n];
            for (l, slot) in row.iter_mut().enumerate() {
                *slot += a * pr[l];
            }
        }
        Ok(())
    })?;
    let mut out = linalg::zeros::<R>(n, n);
    for ((li, ri), w) in &weights {
        let bl = &left.bases[*li];
        let br = &right.bases[*ri];
        let mut m = &bl.u_adj * c * &br.u;
        for k in 0..n {
            for l in 0..n {
                m[(k, l)] *= from_c64::<R>(w[k * n + l]);
            }
        }
        out += &bl.u * m * &br.u_adj;
    }
    Ok(out)
}

/// Term-by-term `Σ coeff · exp(left) · C · exp(right)` with every
/// exponential computed by the general matrix exponential.
pub fn apply_lcu_dense<R: Real>(
    program: &LcuProgram<R>,
    c: &CMatrix<R>,
    term_budget: u64,
) -> Result<CMatrix<R>> {
    let terms = program.term_count();
    if terms > term_budget {
        return Err(Error::TermBudgetExceeded {
            terms,
            budget: term_budget,
        });
    }
    let g = &program.generators;
    let n = g.n();
    let mut out = linalg::zeros::<R>(n, n);
    program.try_for_each_term(|t| -> Result<()> {
        let l = g.unitary_expm(&t.left)?;
        let r = g.unitary_expm(&t.right)?;
        out += linalg::scale(&(l * c * r), from_c64(t.coeff));
        Ok(())
    })?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Scalar evaluators and closed-form reconstruction
// ---------------------------------------------------------------------------

/// `h` at a scalar eigenvalue using the closed-form r-sum.
///
/// * Normal: `(λ_h, λ_s)` are the real and imaginary parts of `q`.
/// * BZero: `λ_h` is the eigenvalue, `λ_s` is ignored.
/// * PositiveWithRoots: `(λ_h, λ_s)` are the root eigenvalues `(p_a, p_b)`.
pub fn eval_h_scalar(
    case: CaseTag,
    lam_h: f64,
    lam_s: f64,
    params: &DiscretizationParams,
) -> Result<Complex64> {
    let (dt, dw) = (params.delta_t, params.delta_omega);
    let r = params.r_count;
    let ws = params.omegas();
    match case {
        CaseTag::Normal => {
            let mut acc = Complex64::new(0.0, 0.0);
            for &w in &ws {
                let gw = gauss(w);
                for &wp in &ws {
                    let weight = Complex64::new(w, -wp) * (gw * gauss(wp));
                    acc += weight * geometric_sum(dt * (w * lam_h + wp * lam_s), r);
                }
            }
            Ok(acc * Complex64::new(0.0, dt * dw * dw / (2.0 * PI)))
        }
        CaseTag::BZero => {
            let mut acc = Complex64::new(0.0, 0.0);
            for &w in &ws {
                acc += geometric_sum(dt * w * lam_h, r) * (w * gauss(w));
            }
            Ok(acc * Complex64::new(0.0, dt * dw / (2.0 * PI).sqrt()))
        }
        CaseTag::PositiveWithRoots => {
            let gsum = |x: f64| -> Complex64 {
                let mut acc = Complex64::new(0.0, 0.0);
                for &w in &ws {
                    acc += Complex64::from_polar(gauss(w), -w * x);
                }
                acc * (dw / (2.0 * PI).sqrt())
            };
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..r {
                let s = (2.0 * params.time(k)).sqrt();
                acc += gsum(s * lam_h) * gsum(s * lam_s);
            }
            Ok(acc * dt)
        }
        other => Err(Error::Precondition(format!(
            "no scalar closed form for the {other} case"
        ))),
    }
}

/// `δ_tδ_ω Σ_j f̂(ω_j) Σ_r e^{−it_r(ω_j q_H ± q_S)}` for scalar `q`.
pub fn eval_h_scalar_lchs(
    q: Complex64,
    params: &DiscretizationParams,
    kernel: &KernelSpec,
    convention: SignConvention,
) -> Complex64 {
    let sigma = convention.skew_sign();
    let mut acc = Complex64::new(0.0, 0.0);
    for w in params.omegas() {
        acc += kernel.eval(w) * geometric_sum(params.delta_t * (w * q.re + sigma * q.im), params.r_count);
    }
    acc * (params.delta_t * params.delta_omega)
}

/// `U [(U† C V) ∘ H] V†`.
fn sandwich<R: Real>(
    u: &CMatrix<R>,
    v: &CMatrix<R>,
    c: &CMatrix<R>,
    h: impl Fn(usize, usize) -> Complex64,
) -> CMatrix<R> {
    let mut m = u.adjoint() * c * v;
    for k in 0..m.nrows() {
        for l in 0..m.ncols() {
            m[(k, l)] *= from_c64::<R>(h(k, l));
        }
    }
    u * m * v.adjoint()
}

/// `X̂` for a grid program, using the scalar closed forms in eigenbases
/// where the structure allows and [`apply_lcu`] otherwise.
pub fn reconstruct<R: Real>(program: &LcuProgram<R>, c: &CMatrix<R>) -> Result<CMatrix<R>> {
    let params = match (&program.terms, &program.params) {
        (TermSet::Grid, Some(p)) => p,
        _ => return apply_lcu(program, c),
    };
    let g = &program.generators;
    match program.case {
        CaseTag::Normal | CaseTag::BZero | CaseTag::PositiveWithRoots => {
            let (Some(bl), Some(br)) = (joint_basis(&g.a_h, &g.a_s), joint_basis(&g.b_h, &g.b_s))
            else {
                return apply_lcu(program, c);
            };
            let mut table = vec![Complex64::new(0.0, 0.0); bl.values.len() * br.values.len()];
            let nr = br.values.len();
            for (k, &(ah, as_)) in bl.values.iter().enumerate() {
                for (l, &(bh, bs)) in br.values.iter().enumerate() {
                    table[k * nr + l] = match program.case {
                        CaseTag::Normal => eval_h_scalar(CaseTag::Normal, ah + bh, as_ + bs, params)?,
                        CaseTag::BZero => eval_h_scalar(CaseTag::BZero, ah, 0.0, params)?,
                        _ => eval_h_scalar(CaseTag::PositiveWithRoots, ah, bh, params)?,
                    };
                }
            }
            Ok(sandwich(&bl.u, &br.u, c, |k, l| table[k * nr + l]))
        }
        CaseTag::PositiveHermitianPart => {
            let kernel = program.kernel.unwrap_or_else(KernelSpec::gaussian);
            let sigma = program.convention.skew_sign();
            let n = g.n();
            let mut out = linalg::zeros::<R>(n, n);
            let pre = params.delta_t * params.delta_omega;
            for w in params.omegas() {
                let coeff = kernel.eval(w) * pre;
                let gl = linalg::scale_real(&g.a_h, R::of(w)) + linalg::scale_real(&g.a_s, R::of(sigma));
                let gr = linalg::scale_real(&g.b_h, R::of(w)) + linalg::scale_real(&g.b_s, R::of(sigma));
                let el = linalg::hermitian_eigen(&gl)?;
                let er = linalg::hermitian_eigen(&gr)?;
                let term = sandwich(&el.vectors, &er.vectors, c, |k, l| {
                    let th = params.delta_t * (el.values[k].as_f64() + er.values[l].as_f64());
                    coeff * geometric_sum(th, params.r_count)
                });
                out += term;
            }
            Ok(out)
        }
        CaseTag::GeneralChebyshev => Err(Error::Precondition(
            "the general case has no LCU program".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

struct TermStream<'a, R: Real>(&'a LcuProgram<R>);

impl<R: Real> Serialize for TermStream<'_, R> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.0.term_count() as usize))?;
        self.0.try_for_each_term(|t| seq.serialize_element(&t))?;
        seq.end()
    }
}

impl<R: Real> Serialize for LcuProgram<R> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("LcuProgram", 10)?;
        st.serialize_field("case", &self.case)?;
        st.serialize_field("params", &self.params)?;
        st.serialize_field("kernel", &self.kernel)?;
        st.serialize_field("convention", &self.convention)?;
        st.serialize_field("dimension", &self.generators.n())?;
        st.serialize_field("term_count", &self.term_count())?;
        st.serialize_field("l1", &self.l1)?;
        st.serialize_field("l1_split", &self.l1_split)?;
        st.serialize_field("alpha", &self.alpha)?;
        st.serialize_field("rescale", &self.rescale)?;
        st.serialize_field("terms", &TermStream(self))?;
        st.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{
        calibrate_kernel, params_bzero, params_bzero_with, params_normal_with,
        params_positive_with, Constants, ManualParams,
    };
    use crate::generate::{gen_random, random_cmatrix};
    use crate::problem::{scalar_instance, Roots};
    use crate::verify::oracle_solve;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type M = CMatrix<f64>;

    fn diag(v: &[f64]) -> M {
        let mut m = linalg::zeros(v.len(), v.len());
        for (i, &x) in v.iter().enumerate() {
            m[(i, i)] = Complex64::new(x, 0.0);
        }
        m
    }

    fn bzero_diag() -> SylvesterInstance<f64> {
        SylvesterInstance::new(diag(&[0.5, -0.5]), linalg::zeros(2, 2), linalg::identity(2), 1.0, None)
            .unwrap()
    }

    #[test]
    fn geometric_sum_matches_direct() {
        for &th in &[0.0, 1e-9, 0.3, -1.7, 2.0 * PI, 4.0 * PI + 1e-3] {
            for r in [0usize, 1, 2, 7, 50] {
                let direct: Complex64 = (0..r).map(|k| Complex64::from_polar(1.0, -(k as f64) * th)).sum();
                let closed = geometric_sum(th, r);
                assert!((direct - closed).norm() < 1e-9 * (r as f64).max(1.0), "θ={th} R={r}");
            }
        }
        assert_eq!(geometric_sum(0.0, 9), Complex64::new(9.0, 0.0));
    }

    #[test]
    fn single_identity_term_returns_c() {
        let inst = bzero_diag();
        let g = Generators::from_instance(&inst, CaseTag::BZero).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = random_cmatrix(&mut rng, 2, 2);
        let t = LcuTerm {
            coeff: Complex64::new(1.0, 0.0),
            left: EvolutionSpec::identity(Side::Left),
            right: EvolutionSpec::identity(Side::Right),
        };
        let p = LcuProgram::from_terms(CaseTag::BZero, g.clone(), vec![t], 1.0);
        assert!(linalg::spectral_norm(&(apply_lcu(&p, &c).unwrap() - &c)) < 1e-14);
        let evo = EvolutionSpec::new(0.7, 0.0, 1.3, Side::Left);
        let t1 = LcuTerm { coeff: Complex64::new(0.5, 0.2), left: evo, right: EvolutionSpec::identity(Side::Right) };
        let t2 = LcuTerm { coeff: -t1.coeff, ..t1 };
        let p = LcuProgram::from_terms(CaseTag::BZero, g, vec![t1, t2], 1.0);
        assert!(linalg::fro_norm(&apply_lcu(&p, &c).unwrap()) < 1e-14);
        assert!((p.l1 - 2.0 * t1.coeff.norm()).abs() < 1e-15);
    }

    #[test]
    fn empty_program_is_zero() {
        let inst = bzero_diag();
        let p = ManualParams::new(0, 2).build(CaseTag::BZero).unwrap();
        let prog = synth_bzero(&inst, &p, DEFAULT_TERM_BUDGET).unwrap();
        assert_eq!(prog.term_count(), 0);
        assert_eq!(prog.l1, 0.0);
        assert_eq!(linalg::fro_norm(&apply_lcu(&prog, &inst.c).unwrap()), 0.0);
        let empty = LcuProgram::from_terms(CaseTag::BZero, prog.generators.clone(), vec![], 1.0);
        assert_eq!(l1_norm(&empty), 0.0);
    }

    #[test]
    fn bzero_diag_inverse() {
        let inst = bzero_diag();
        let c = Constants { c3: 2.0, c4: 2.0, ..Constants::default() };
        let p = params_bzero_with(2.0, 0.01, c).unwrap();
        let prog = synth_bzero(&inst, &p, DEFAULT_TERM_BUDGET).unwrap();
        let x = reconstruct(&prog, &inst.c).unwrap();
        let want = diag(&[2.0, -2.0]);
        assert!(linalg::spectral_norm(&(&x - &want)) <= 0.01 * 2.0, "{x}");
        let grouped = apply_lcu(&prog, &inst.c).unwrap();
        assert!(linalg::spectral_norm(&(&grouped - &x)) < 1e-10);
        let h = eval_h_scalar(CaseTag::BZero, 0.5, 0.0, &p).unwrap();
        assert!((h * 0.5 - 1.0).norm() <= 0.01);
        let hm = eval_h_scalar(CaseTag::BZero, -0.5, 0.0, &p).unwrap();
        assert!((h + hm).norm() < 1e-12);
    }

    #[test]
    fn bzero_l1_matches_gaussian_moment() {
        let p = params_bzero(10.0, 0.01).unwrap();
        let (y, _) = grid_l1(CaseTag::BZero, &p, None);
        // First absolute moment of the Gaussian truncated at ω_J.
        let w = p.omega_j_max;
        let moment = 2.0 * (1.0 - (-w * w / 2.0).exp()) / (2.0 * PI).sqrt();
        let want = p.r_count as f64 * p.delta_t * moment;
        assert!((y - want).abs() < 0.03 * want, "{y} vs {want}");
    }

    #[test]
    fn positive_l1_close_to_time_cutoff() {
        let p = params_positive_with(4.0, 0.1, Constants::default()).unwrap();
        let (y, _) = grid_l1(CaseTag::PositiveWithRoots, &p, None);
        let m: f64 = p.omegas().iter().map(|&w| gauss(w)).sum::<f64>() * p.delta_omega / (2.0 * PI).sqrt();
        let want = p.r_count as f64 * p.delta_t * m * m;
        assert!((y - want).abs() < 1e-9 * want, "{y} vs {want}");
        assert!(y <= p.t_r_max + p.delta_t);
    }

    #[test]
    fn normal_scalar_matches_bzero_marginal() {
        let pn = params_normal_with(2.0, 0.01, Constants::default()).unwrap();
        let pb = DiscretizationParams { rule: CaseTag::BZero, ..pn.clone() };
        let hn = eval_h_scalar(CaseTag::Normal, 0.5, 0.0, &pn).unwrap();
        let hb = eval_h_scalar(CaseTag::BZero, 0.5, 0.0, &pb).unwrap();
        let marginal: f64 = pn.omegas().iter().map(|&w| gauss(w)).sum::<f64>() * pn.delta_omega / (2.0 * PI).sqrt();
        assert!(marginal > 0.8 && marginal < 1.0);
        // The ω′ part of the Normal weight integrates to zero against a
        // symmetric grid when λ_s = 0, leaving the BZero sum times the marginal.
        assert!((hn - hb * marginal).norm() < 1e-10 * hn.norm().max(1.0), "{hn} vs {hb}");
    }

    #[test]
    fn scalar_instances_recover_two() {
        let inst = scalar_instance(0.25, 0.25, 1.0).unwrap();
        let pn = params_normal_with(2.0, 0.05, Constants { c3: 2.0, c4: 2.0, ..Constants::default() }).unwrap();
        let prog = synth_normal(&inst, &pn, DEFAULT_TERM_BUDGET).unwrap();
        let x = reconstruct(&prog, &inst.c).unwrap()[(0, 0)];
        assert!((x - 2.0).norm() <= 0.05 * 2.0, "{x}");

        let rinst = SylvesterInstance::new(
            inst.a.clone(),
            inst.b.clone(),
            inst.c.clone(),
            1.0,
            Some(Roots { p_a: diag(&[0.5]), p_b: diag(&[0.5]) }),
        )
        .unwrap();
        let pp = params_positive_with(2.0, 0.05, Constants::default()).unwrap();
        let prog = synth_positive(&rinst, &pp, DEFAULT_TERM_BUDGET).unwrap();
        let x = reconstruct(&prog, &rinst.c).unwrap()[(0, 0)];
        assert!((x - 2.0).norm() <= 0.05 * 2.0, "{x}");

        let kernel = calibrate_kernel(0.5).unwrap();
        let q = Complex64::new(0.5, 0.0);
        let pk = crate::discretization::params_pos_herm_with(
            2.0,
            1.0,
            0.05,
            0.5,
            Constants { c2: 256.0, ..Constants::default() },
        )
        .unwrap();
        let h = eval_h_scalar_lchs(q, &pk, &kernel, SignConvention::Standard);
        assert!((h * q - 1.0).norm() <= 0.05, "{h}");
    }

    #[test]
    fn zero_c_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inst = gen_random(CaseTag::Normal, 2, 3.0, &mut rng).unwrap();
        let p = params_normal_with(3.0, 0.2, Constants::default()).unwrap();
        let prog = synth_normal(&inst, &p, DEFAULT_TERM_BUDGET).unwrap();
        let z = linalg::zeros::<f64>(2, 2);
        assert_eq!(linalg::fro_norm(&apply_lcu(&prog, &z).unwrap()), 0.0);
        assert_eq!(linalg::fro_norm(&reconstruct(&prog, &z).unwrap()), 0.0);
    }

    #[test]
    fn grouped_matches_dense_on_small_programs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let manual = ManualParams::new(3, 2);
        for case in [CaseTag::Normal, CaseTag::PositiveHermitianPart, CaseTag::BZero, CaseTag::PositiveWithRoots] {
            let inst = gen_random(case, 2, 3.0, &mut rng).unwrap();
            let p = manual.build(case).unwrap();
            let prog = match case {
                CaseTag::Normal => synth_normal(&inst, &p, 1000).unwrap(),
                CaseTag::BZero => synth_bzero(&inst, &p, 1000).unwrap(),
                CaseTag::PositiveWithRoots => synth_positive(&inst, &p, 1000).unwrap(),
                _ => synth_pos_herm(&inst, &p, calibrate_kernel(0.5).unwrap(), SignConvention::Standard, 1000).unwrap(),
            };
            let dense = apply_lcu_dense(&prog, &inst.c, 1000).unwrap();
            let grouped = apply_lcu(&prog, &inst.c).unwrap();
            let closed = reconstruct(&prog, &inst.c).unwrap();
            let tol = 1e-10 * prog.l1.max(1.0) * linalg::spectral_norm(&inst.c).max(1.0);
            assert!(linalg::spectral_norm(&(&dense - &grouped)) < tol, "{case}");
            assert!(linalg::spectral_norm(&(&dense - &closed)) < tol, "{case}");
            let explicit = LcuProgram::from_terms(case, prog.generators.clone(), prog.collect_terms(), prog.alpha);
            assert!((explicit.l1 - prog.l1).abs() <= 1e-12 * prog.l1.max(1.0), "{case}");
        }
    }

    #[test]
    fn normal_random_instance_meets_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let inst = gen_random(CaseTag::Normal, 2, 3.0, &mut rng).unwrap();
        let kappa = crate::problem::kappa(&inst).unwrap();
        let p = params_normal_with(kappa, 0.1, Constants { c3: 2.0, ..Constants::default() }).unwrap();
        let prog = synth_normal(&inst, &p, DEFAULT_TERM_BUDGET).unwrap();
        let x = reconstruct(&prog, &inst.c).unwrap();
        let xo = oracle_solve(&inst).unwrap();
        let err = linalg::spectral_norm(&(&x - &xo));
        assert!(err <= 0.1 * 2f64.sqrt() * linalg::spectral_norm(&xo), "{err}");
    }

    #[test]
    fn term_budget_enforced() {
        let inst = bzero_diag();
        let p = params_bzero(10.0, 0.01).unwrap();
        assert!(matches!(
            synth_bzero(&inst, &p, 100),
            Err(Error::TermBudgetExceeded { .. })
        ));
        let pn = params_normal_with(10.0, 0.01, Constants::default()).unwrap();
        assert!(pn.term_count() > 100);
    }

    #[test]
    fn bzero_requires_hermitian_a() {
        let a = DMatrix::from_row_slice(2, 2, &[Complex64::new(0.0, 0.0), Complex64::new(0.5, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)]);
        let inst = SylvesterInstance::new(a, linalg::zeros(2, 2), linalg::identity(2), 1.0, None).unwrap();
        let p = ManualParams::new(2, 1).build(CaseTag::BZero).unwrap();
        assert!(matches!(synth_bzero(&inst, &p, 100), Err(Error::Precondition(_))));
        let p = ManualParams::new(2, 1).build(CaseTag::PositiveWithRoots).unwrap();
        assert!(matches!(synth_positive(&inst, &p, 100), Err(Error::Precondition(_))));
    }

    #[test]
    fn serialization_streams_terms() {
        let inst = bzero_diag();
        let p = ManualParams::new(2, 1).build(CaseTag::BZero).unwrap();
        let prog = synth_bzero(&inst, &p, 100).unwrap();
        let v: serde_json::Value = serde_json::to_value(&prog).unwrap();
        assert_eq!(v["terms"].as_array().unwrap().len(), 6);
        assert_eq!(v["term_count"], 6);
        assert_eq!(v["terms"][0]["left"]["side"], "left");
    }

    #[test]
    fn f32_apply_agrees_with_f64() {
        let inst = bzero_diag();
        let p = ManualParams::new(4, 2).build(CaseTag::BZero).unwrap();
        let prog = synth_bzero(&inst, &p, 100).unwrap();
        let x64 = apply_lcu(&prog, &inst.c).unwrap();
        let conv = |m: &M| m.map(|z| Complex::new(z.re as f32, z.im as f32));
        let inst32 = SylvesterInstance::<f32>::new(conv(&inst.a), conv(&inst.b), conv(&inst.c), 1.0, None).unwrap();
        let prog32 = synth_bzero(&inst32, &p, 100).unwrap();
        let x32 = apply_lcu(&prog32, &inst32.c).unwrap();
        for (a, b) in x64.iter().zip(x32.iter()) {
            assert!((a.re - b.re as f64).abs() < 1e-5 && (a.im - b.im as f64).abs() < 1e-5);
        }
    }
}
