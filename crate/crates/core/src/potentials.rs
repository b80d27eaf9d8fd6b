//! Local potentials `S_j`, the Frenkel-Kontorova family, the periodic action
//! `W_{p,q}` with folded derivatives, and Morse approximations.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::lattice::{norm1, Configuration, PeriodLattice, Stencil};
use crate::linalg::sym_eigenvalues;

/// Central finite-difference step of the fallback derivatives.
pub const FD_STEP: f64 = 1e-5;

/// One term `cos·cos(2π h ξ) + sin·sin(2π h ξ)` of a trigonometric series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub harmonic: u32,
    pub cos: f64,
    pub sin: f64,
}

/// A finite 1-periodic trigonometric series.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigSeries {
    pub terms: Vec<TrigTerm>,
}

impl TrigSeries {
    pub fn zero() -> Self {
        TrigSeries { terms: Vec::new() }
    }

    /// `V(ξ) = k/(8π²) cos 2πξ`, whose oscillation is `k/(4π²)`.
    pub fn standard(k: f64) -> Self {
        TrigSeries { terms: vec![TrigTerm { harmonic: 1, cos: k / (8.0 * PI * PI), sin: 0.0 }] }
    }

    /// Random series of the given degree with `Σ(|cos|+|sin|) = amplitude`.
    pub fn random(degree: u32, amplitude: f64, rng: &mut impl Rng) -> Self {
        let mut terms: Vec<TrigTerm> = (1..=degree)
            .map(|h| TrigTerm { harmonic: h, cos: rng.gen_range(-1.0..1.0), sin: rng.gen_range(-1.0..1.0) })
            .collect();
        let total: f64 = terms.iter().map(|t| t.cos.abs() + t.sin.abs()).sum();
        if total > 0.0 {
            for t in &mut terms {
                t.cos *= amplitude / total;
                t.sin *= amplitude / total;
            }
        }
        TrigSeries { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.cos == 0.0 && (t.harmonic == 0 || t.sin == 0.0))
    }

    pub fn max_harmonic(&self) -> u32 {
        self.terms.iter().map(|t| t.harmonic).max().unwrap_or(0)
    }

    /// `Σ(|cos| + |sin|)`, a bound on `sup |V|`.
    pub fn amplitude(&self) -> f64 {
        self.terms.iter().map(|t| t.cos.abs() + t.sin.abs()).sum()
    }

    pub fn value(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                if t.harmonic == 0 {
                    return t.cos;
                }
                let a = 2.0 * PI * t.harmonic as f64 * x;
                t.cos * a.cos() + t.sin * a.sin()
            })
            .sum()
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let w = 2.0 * PI * t.harmonic as f64;
                let a = w * x;
                w * (-t.cos * a.sin() + t.sin * a.cos())
            })
            .sum()
    }

    pub fn d2(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let w = 2.0 * PI * t.harmonic as f64;
                let a = w * x;
                -w * w * (t.cos * a.cos() + t.sin * a.sin())
            })
            .sum()
    }

    fn refine_extremum(&self, mut x: f64) -> f64 {
        for _ in 0..30 {
            let h = self.d2(x);
            if h == 0.0 {
                break;
            }
            let step = self.d1(x) / h;
            if !step.is_finite() || step.abs() > 0.05 {
                break;
            }
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x
    }

    /// `(min, max)` of the series over one period.
    pub fn extrema(&self) -> (f64, f64) {
        let samples = 512 * (self.max_harmonic().max(1) as usize);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut xlo, mut xhi) = (0.0, 0.0);
        for s in 0..samples {
            let x = s as f64 / samples as f64;
            let v = self.value(x);
            if v < lo {
                lo = v;
                xlo = x;
            }
            if v > hi {
                hi = v;
                xhi = x;
            }
        }
        let rl = self.value(self.refine_extremum(xlo));
        let rh = self.value(self.refine_extremum(xhi));
        (lo.min(rl), hi.max(rh))
    }

    /// `osc V = max V - min V`.
    pub fn oscillation(&self) -> f64 {
        let (lo, hi) = self.extrema();
        hi - lo
    }

    /// `max_ξ |V''(ξ) + c|`, by sampling with Newton refinement.
    pub fn max_abs_d2_shifted(&self, c: f64) -> f64 {
        let samples = 512 * (self.max_harmonic().max(1) as usize);
        let mut best = c.abs();
        let mut at = 0.0;
        for s in 0..samples {
            let x = s as f64 / samples as f64;
            let v = (self.d2(x) + c).abs();
            if v > best {
                best = v;
                at = x;
            }
        }
        // refine on V''' = 0 by secant steps on the third derivative
        let d3 = |x: f64| (self.d2(x + 1e-6) - self.d2(x - 1e-6)) / 2e-6;
        let mut x = at;
        for _ in 0..20 {
            let h = (d3(x + 1e-6) - d3(x - 1e-6)) / 2e-6;
            if h == 0.0 {
                break;
            }
            let step = d3(x) / h;
            if !step.is_finite() || step.abs() > 0.01 {
                break;
            }
            x -= step;
        }
        best.max((self.d2(x) + c).abs())
    }
}

/// Frenkel-Kontorova data: lattice dimension and onsite potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FkSpec {
    pub d: usize,
    pub v: TrigSeries,
}

impl FkSpec {
    pub fn standard(d: usize, k: f64) -> Self {
        FkSpec { d, v: TrigSeries::standard(k) }
    }

    pub fn free(d: usize) -> Self {
        FkSpec { d, v: TrigSeries::zero() }
    }
}

/// The site energy `S_0` evaluated on windows in [`Stencil`] order.
///
/// Only `energy` is required. The derivative defaults are central finite
/// differences with step [`FD_STEP`]. `hessian` reports entries through the
/// sink, each ordered pair `(i, k)` of the full symmetric matrix at most once.
pub trait SiteEnergy: Send + Sync {
    fn name(&self) -> String;
    fn parameters(&self) -> serde_json::Value;
    fn dim(&self) -> usize;
    fn range(&self) -> usize;
    fn energy(&self, st: &Stencil, w: &[f64]) -> f64;

    fn gradient(&self, st: &Stencil, w: &[f64], out: &mut [f64]) {
        let mut y = w.to_vec();
        for k in 0..w.len() {
            y[k] = w[k] + FD_STEP;
            let ep = self.energy(st, &y);
            y[k] = w[k] - FD_STEP;
            let em = self.energy(st, &y);
            y[k] = w[k];
            out[k] += (ep - em) / (2.0 * FD_STEP);
        }
    }

    fn hessian(&self, st: &Stencil, w: &[f64], sink: &mut dyn FnMut(usize, usize, f64)) {
        let n = w.len();
        let mut y = w.to_vec();
        let mut gp = vec![0.0; n];
        let mut gm = vec![0.0; n];
        let mut h = vec![0.0; n * n];
        for k in 0..n {
            gp.iter_mut().for_each(|v| *v = 0.0);
            gm.iter_mut().for_each(|v| *v = 0.0);
            y[k] = w[k] + FD_STEP;
            self.gradient(st, &y, &mut gp);
            y[k] = w[k] - FD_STEP;
            self.gradient(st, &y, &mut gm);
            y[k] = w[k];
            for i in 0..n {
                h[i * n + k] = (gp[i] - gm[i]) / (2.0 * FD_STEP);
            }
        }
        for i in 0..n {
            for k in 0..n {
                let v = 0.5 * (h[i * n + k] + h[k * n + i]);
                if v != 0.0 {
                    sink(i, k, v);
                }
            }
        }
    }

    fn fk(&self) -> Option<&FkSpec> {
        None
    }
}

/// A shift-invariant family `{S_j}` given by its site energy `S_0`.
#[derive(Clone)]
pub struct LocalPotential {
    site: Arc<dyn SiteEnergy>,
    stencil: Arc<Stencil>,
}

impl fmt::Debug for LocalPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LocalPotential")
            .field("name", &self.site.name())
            .field("range", &self.site.range())
            .finish()
    }
}

impl LocalPotential {
    pub fn new(site: Arc<dyn SiteEnergy>) -> Self {
        let stencil = Arc::new(Stencil::new(site.dim(), site.range()));
        LocalPotential { site, stencil }
    }

    pub fn name(&self) -> String {
        self.site.name()
    }

    pub fn parameters(&self) -> serde_json::Value {
        self.site.parameters()
    }

    pub fn dim(&self) -> usize {
        self.site.dim()
    }

    pub fn range(&self) -> usize {
        self.site.range()
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    /// Frenkel-Kontorova data when the potential is of that form.
    pub fn fk(&self) -> Option<&FkSpec> {
        self.site.fk()
    }

    pub fn energy(&self, w: &[f64]) -> f64 {
        self.site.energy(&self.stencil, w)
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; w.len()];
        self.site.gradient(&self.stencil, w, &mut g);
        g
    }

    pub fn gradient_into(&self, w: &[f64], out: &mut [f64]) {
        self.site.gradient(&self.stencil, w, out);
    }

    pub fn hessian_entries(&self, w: &[f64], sink: &mut dyn FnMut(usize, usize, f64)) {
        self.site.hessian(&self.stencil, w, sink);
    }

    /// Dense `|stencil| × |stencil|` Hessian of `S_0`.
    pub fn hessian(&self, w: &[f64]) -> DMatrix<f64> {
        let n = w.len();
        let mut h = DMatrix::zeros(n, n);
        self.site.hessian(&self.stencil, w, &mut |i, k, v| h[(i, k)] += v);
        h
    }
}

struct FkSite {
    spec: FkSpec,
}

impl SiteEnergy for FkSite {
    fn name(&self) -> String {
        "frenkel_kontorova".into()
    }

    fn parameters(&self) -> serde_json::Value {
        json!({ "d": self.spec.d, "V": self.spec.v.terms })
    }

    fn dim(&self) -> usize {
        self.spec.d
    }

    fn range(&self) -> usize {
        1
    }

    fn energy(&self, st: &Stencil, w: &[f64]) -> f64 {
        let c = 1.0 / (8.0 * self.spec.d as f64);
        let bonds: f64 = st.neighbors().iter().map(|&n| (w[n] - w[0]).powi(2)).sum();
        self.spec.v.value(w[0]) + c * bonds
    }

    fn gradient(&self, st: &Stencil, w: &[f64], out: &mut [f64]) {
        let c = 1.0 / (4.0 * self.spec.d as f64);
        out[0] += self.spec.v.d1(w[0]);
        for &n in st.neighbors() {
            let u = c * (w[n] - w[0]);
            out[0] -= u;
            out[n] += u;
        }
    }

    fn hessian(&self, st: &Stencil, w: &[f64], sink: &mut dyn FnMut(usize, usize, f64)) {
        let c = 1.0 / (4.0 * self.spec.d as f64);
        sink(0, 0, self.spec.v.d2(w[0]) + c * st.neighbors().len() as f64);
        for &n in st.neighbors() {
            sink(0, n, -c);
            sink(n, 0, -c);
            sink(n, n, c);
        }
    }

    fn fk(&self) -> Option<&FkSpec> {
        Some(&self.spec)
    }
}

/// `S_j(x) = V(x_j) + (1/8d) Σ_{||k-j||=1} (x_k - x_j)²` with analytic
/// derivatives.
pub fn fk_potential(spec: FkSpec) -> LocalPotential {
    LocalPotential::new(Arc::new(FkSite { spec }))
}

/// Onsite series plus harmonic nearest-neighbour bonds of weight `coupling`,
/// evaluated through the finite-difference derivative fallback.
struct CustomSite {
    d: usize,
    v: TrigSeries,
    coupling: f64,
}

impl SiteEnergy for CustomSite {
    fn name(&self) -> String {
        "custom".into()
    }

    fn parameters(&self) -> serde_json::Value {
        json!({ "d": self.d, "V": self.v.terms, "coupling": self.coupling })
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn range(&self) -> usize {
        1
    }

    fn energy(&self, st: &Stencil, w: &[f64]) -> f64 {
        let bonds: f64 = st.neighbors().iter().map(|&n| (w[n] - w[0]).powi(2)).sum();
        self.v.value(w[0]) + self.coupling / (8.0 * self.d as f64) * bonds
    }
}

/// Energy-only potential: onsite `V` plus nearest-neighbour bonds scaled by
/// `coupling`; derivatives come from central differences.
pub fn custom_potential(d: usize, v: TrigSeries, coupling: f64) -> LocalPotential {
    LocalPotential::new(Arc::new(CustomSite { d, v, coupling }))
}

struct OnsiteSum {
    base: LocalPotential,
    v: TrigSeries,
}

impl SiteEnergy for OnsiteSum {
    fn name(&self) -> String {
        format!("{}+onsite", self.base.name())
    }

    fn parameters(&self) -> serde_json::Value {
        json!({ "base": { "name": self.base.name(), "parameters": self.base.parameters() }, "V": self.v.terms })
    }

    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn range(&self) -> usize {
        self.base.range()
    }

    fn energy(&self, _st: &Stencil, w: &[f64]) -> f64 {
        self.base.energy(w) + self.v.value(w[0])
    }

    fn gradient(&self, _st: &Stencil, w: &[f64], out: &mut [f64]) {
        self.base.gradient_into(w, out);
        out[0] += self.v.d1(w[0]);
    }

    fn hessian(&self, _st: &Stencil, w: &[f64], sink: &mut dyn FnMut(usize, usize, f64)) {
        let mut diag = Some(self.v.d2(w[0]));
        self.base.hessian_entries(w, &mut |i, k, v| {
            if i == 0 && k == 0 {
                sink(0, 0, v + diag.take().unwrap_or(0.0));
            } else {
                sink(i, k, v);
            }
        });
        if let Some(d) = diag {
            sink(0, 0, d);
        }
    }
}

/// `S_j + V(x_j)`: an extra onsite series on top of any local potential.
pub fn with_onsite(base: &LocalPotential, v: TrigSeries) -> LocalPotential {
    LocalPotential::new(Arc::new(OnsiteSum { base: base.clone(), v }))
}

/// Energy given by a closure; derivatives come from central differences.
pub struct ClosureSite<F> {
    pub name: String,
    pub d: usize,
    pub range: usize,
    pub f: F,
}

impl<F> SiteEnergy for ClosureSite<F>
where
    F: Fn(&Stencil, &[f64]) -> f64 + Send + Sync,
{
    fn name(&self) -> String {
        self.name.clone()
    }

    fn parameters(&self) -> serde_json::Value {
        json!({})
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn range(&self) -> usize {
        self.range
    }

    fn energy(&self, st: &Stencil, w: &[f64]) -> f64 {
        (self.f)(st, w)
    }
}

/// `f(u) = u·atan(u)`.
fn pair_f(u: f64) -> (f64, f64, f64) {
    let a = u.atan();
    let s = 1.0 + u * u;
    (u * a, a + u / s, 2.0 / (s * s))
}

/// Parameters of a Morse approximation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorseApproxSpec {
    pub n: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub degree: u32,
}

struct MorseSite {
    base: LocalPotential,
    /// Morse-stencil position of each base-stencil entry.
    base_map: Vec<usize>,
    /// Morse-stencil positions of the offsets `B_p`.
    pairs: Vec<usize>,
    spec: MorseApproxSpec,
    g: TrigSeries,
    d: usize,
    range: usize,
}

impl MorseSite {
    fn base_window(&self, w: &[f64]) -> Vec<f64> {
        self.base_map.iter().map(|&m| w[m]).collect()
    }
}

impl SiteEnergy for MorseSite {
    fn name(&self) -> String {
        format!("morse({})", self.base.name())
    }

    fn parameters(&self) -> serde_json::Value {
        json!({
            "base": self.base.parameters(),
            "base_name": self.base.name(),
            "n": self.spec.n,
            "epsilon": self.spec.epsilon,
            "seed": self.spec.seed,
            "degree": self.spec.degree,
            "g": self.g.terms,
        })
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn range(&self) -> usize {
        self.range
    }

    fn energy(&self, _st: &Stencil, w: &[f64]) -> f64 {
        let mut e = self.base.energy(&self.base_window(w)) + self.g.value(w[0]);
        let inv = 1.0 / self.spec.n;
        for (a, &i) in self.pairs.iter().enumerate() {
            for &k in &self.pairs[a + 1..] {
                e += inv * pair_f(w[k] - w[i]).0;
            }
        }
        e
    }

    fn gradient(&self, _st: &Stencil, w: &[f64], out: &mut [f64]) {
        let bg = self.base.gradient(&self.base_window(w));
        for (b, &m) in self.base_map.iter().enumerate() {
            out[m] += bg[b];
        }
        out[0] += self.g.d1(w[0]);
        let inv = 1.0 / self.spec.n;
        for (a, &i) in self.pairs.iter().enumerate() {
            for &k in &self.pairs[a + 1..] {
                let g = inv * pair_f(w[k] - w[i]).1;
                out[k] += g;
                out[i] -= g;
            }
        }
    }

    fn hessian(&self, _st: &Stencil, w: &[f64], sink: &mut dyn FnMut(usize, usize, f64)) {
        let map = &self.base_map;
        self.base.hessian_entries(&self.base_window(w), &mut |i, k, v| sink(map[i], map[k], v));
        sink(0, 0, self.g.d2(w[0]));
        let inv = 1.0 / self.spec.n;
        for (a, &i) in self.pairs.iter().enumerate() {
            for &k in &self.pairs[a + 1..] {
                let h = inv * pair_f(w[k] - w[i]).2;
                sink(i, i, h);
                sink(k, k, h);
                sink(i, k, -h);
                sink(k, i, -h);
            }
        }
    }

    fn fk(&self) -> Option<&FkSpec> {
        None
    }
}

/// Default onsite degree of the Morse perturbation for a lattice.
///
/// Harmonics below `|B_p|` can cancel along the translation direction of a
/// degenerate family, so the degree reaches past it.
pub fn default_morse_degree(lattice: &PeriodLattice) -> u32 {
    (2 * lattice.size()).max(4) as u32
}

/// `S_j^n = S_j + (1/n) Σ_{i<k ∈ j+B_p} (x_k-x_i) atan(x_k-x_i) + g(x_j)` with
/// `g` a random trigonometric polynomial of amplitude at most `epsilon`.
pub fn morse_approximation(
    pot: &LocalPotential,
    lattice: &PeriodLattice,
    n: f64,
    seed: u64,
    epsilon: f64,
) -> Result<LocalPotential> {
    morse_approximation_with_degree(pot, lattice, n, seed, epsilon, default_morse_degree(lattice))
}

pub fn morse_approximation_with_degree(
    pot: &LocalPotential,
    lattice: &PeriodLattice,
    n: f64,
    seed: u64,
    epsilon: f64,
    degree: u32,
) -> Result<LocalPotential> {
    if n < 1.0 || !n.is_finite() {
        return Err(Error::InvalidArgument(format!("monotonization parameter n = {n} must be >= 1")));
    }
    if epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon = {epsilon} must be positive")));
    }
    if lattice.dim() != pot.dim() {
        return Err(Error::Dimension("lattice and potential dimensions differ".into()));
    }
    let d = pot.dim();
    let range = pot.range().max(lattice.domain_radius());
    let stencil = Stencil::new(d, range);
    let base_map = pot
        .stencil()
        .offsets()
        .iter()
        .map(|o| stencil.position(o).expect("base stencil is contained in the enlarged one"))
        .collect();
    let pairs = lattice
        .fundamental_domain()
        .iter()
        .map(|o| stencil.position(o).expect("B_p is contained in the enlarged stencil"))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = TrigSeries::random(degree, epsilon, &mut rng);
    let site = MorseSite {
        base: pot.clone(),
        base_map,
        pairs,
        spec: MorseApproxSpec { n, epsilon, seed, degree },
        g,
        d,
        range,
    };
    let out = LocalPotential::new(Arc::new(site));
    let report = verify_conditions(&out, 32, (-3.0, 3.0));
    if !report.all_pass() {
        return Err(Error::Precondition(format!("perturbed potential violates conditions: {}", report.summary())));
    }
    Ok(out)
}

/// Outcome of one sampled condition.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionCheck {
    pub pass: bool,
    pub value: f64,
    pub witness: Option<String>,
}

impl ConditionCheck {
    fn ok(value: f64) -> Self {
        ConditionCheck { pass: true, value, witness: None }
    }
}

/// Sampled report on the structural conditions of a local potential.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionsReport {
    /// Finite range (structural).
    pub a_finite_range: ConditionCheck,
    /// Vertical periodicity `S_0(w + 1) = S_0(w)`.
    pub b_periodicity: ConditionCheck,
    /// Growth along nearest-neighbour differences.
    pub c_coercivity: ConditionCheck,
    /// Sign pattern of mixed second derivatives; `value` is `λ_emp`.
    pub d_monotonicity: ConditionCheck,
    /// Bounded second derivatives; `value` is `C_emp`.
    pub e_bounded_second: ConditionCheck,
    pub lambda_emp: f64,
    pub c_emp: f64,
}

impl ConditionsReport {
    pub fn all_pass(&self) -> bool {
        self.a_finite_range.pass
            && self.b_periodicity.pass
            && self.c_coercivity.pass
            && self.d_monotonicity.pass
            && self.e_bounded_second.pass
    }

    pub fn summary(&self) -> String {
        let f = |c: &ConditionCheck| if c.pass { "pass" } else { "FAIL" };
        format!(
            "A {} B {} C {} D {} (lambda {:.3e}) E {} (C {:.3e})",
            f(&self.a_finite_range),
            f(&self.b_periodicity),
            f(&self.c_coercivity),
            f(&self.d_monotonicity),
            self.lambda_emp,
            f(&self.e_bounded_second),
            self.c_emp
        )
    }
}

const CONDITIONS_SEED: u64 = 0x5eed_c0de;

/// Samples `sample_budget` random windows with entries in `bx` and checks
/// conditions A to E. This is a report, not a certificate.
pub fn verify_conditions(pot: &LocalPotential, sample_budget: usize, bx: (f64, f64)) -> ConditionsReport {
    let budget = sample_budget.max(1);
    let st = pot.stencil();
    let n = st.len();
    let mut rng = ChaCha8Rng::seed_from_u64(CONDITIONS_SEED);
    let (lo, hi) = (bx.0.min(bx.1), bx.0.max(bx.1));
    let width = (hi - lo).max(1.0);

    let mut b = ConditionCheck::ok(0.0);
    let mut c = ConditionCheck::ok(f64::INFINITY);
    let mut dcheck = ConditionCheck::ok(f64::INFINITY);
    let mut e = ConditionCheck::ok(0.0);
    let mut lambda = f64::INFINITY;
    let mut cmax = 0.0f64;
    let mut worst_offdiag = f64::NEG_INFINITY;

    for s in 0..budget {
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
        let s0 = pot.energy(&w);

        let shifted: Vec<f64> = w.iter().map(|v| v + 1.0).collect();
        let dev = (pot.energy(&shifted) - s0).abs();
        if dev > b.value {
            b.value = dev;
        }
        if dev > 1e-9 * (1.0 + s0.abs()) && b.pass {
            b.pass = false;
            b.witness = Some(format!("sample {s}: |S(w+1) - S(w)| = {dev:.3e}"));
        }

        for &nb in st.neighbors() {
            for sign in [1.0, -1.0] {
                let mut y = w.clone();
                y[nb] = w[0] + sign * width / 2.0;
                let half = pot.energy(&y);
                y[nb] = w[0] + sign * width;
                let full = pot.energy(&y);
                let growth = full - half;
                if growth < c.value {
                    c.value = growth;
                }
                if growth <= 0.0 && c.pass {
                    c.pass = false;
                    c.witness = Some(format!("sample {s}, neighbour {nb}: no growth ({growth:.3e})"));
                }
            }
        }

        let h = pot.hessian(&w);
        for i in 0..n {
            for k in 0..n {
                let v = h[(i, k)];
                cmax = cmax.max(v.abs());
                if i != k && v > worst_offdiag {
                    worst_offdiag = v;
                    if v > 1e-12 && dcheck.pass {
                        dcheck.pass = false;
                        dcheck.witness = Some(format!("sample {s}: d2S/dx{i}dx{k} = {v:.3e} > 0"));
                    }
                }
            }
        }
        for &nb in st.neighbors() {
            lambda = lambda.min(-h[(0, nb)]);
        }
    }
    if st.neighbors().is_empty() {
        lambda = 0.0;
    }
    if !(lambda > 0.0) && dcheck.pass {
        dcheck.pass = false;
        dcheck.witness = Some(format!("nearest-neighbour coupling not strictly negative (lambda = {lambda:.3e})"));
    }
    dcheck.value = lambda;
    e.value = cmax;
    if !cmax.is_finite() {
        e.pass = false;
        e.witness = Some("non-finite second derivative".into());
    }
    ConditionsReport {
        a_finite_range: ConditionCheck::ok(pot.range() as f64),
        b_periodicity: b,
        c_coercivity: c,
        d_monotonicity: dcheck,
        e_bounded_second: e,
        lambda_emp: lambda,
        c_emp: cmax,
    }
}

/// Closed-form `C_emp` of a Frenkel-Kontorova potential:
/// `max(max_ξ |V''(ξ) + 1/2|, 1/(4d))`.
pub fn fk_second_derivative_bound(spec: &FkSpec) -> f64 {
    spec.v.max_abs_d2_shifted(0.5).max(1.0 / (4.0 * spec.d as f64))
}

/// Value, folded gradient and folded Hessian of `W_{p,q}`.
#[derive(Clone, Debug)]
pub struct ActionDerivatives {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

/// `W_{p,q}(x) = Σ_{j∈B_p} S_j(x)` with precomputed window folding tables.
#[derive(Clone)]
pub struct PeriodicAction {
    pot: LocalPotential,
    lattice: PeriodLattice,
    /// Per site `j` and stencil offset `o`: domain position and additive
    /// offset of `x_{j+o}`.
    table: Vec<(usize, f64)>,
    width: usize,
}

impl fmt::Debug for PeriodicAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicAction").field("pot", &self.pot).field("lattice", &self.lattice).finish()
    }
}

impl PeriodicAction {
    pub fn new(pot: &LocalPotential, lattice: &PeriodLattice) -> Result<Self> {
        if pot.dim() != lattice.dim() {
            return Err(Error::Dimension(format!(
                "potential has d = {}, lattice has d = {}",
                pot.dim(),
                lattice.dim()
            )));
        }
        let st = pot.stencil();
        let width = st.len();
        let mut table = Vec::with_capacity(lattice.size() * width);
        for j in lattice.fundamental_domain() {
            for o in st.offsets() {
                let idx: Vec<i64> = j.iter().zip(o).map(|(a, b)| a + b).collect();
                table.push(lattice.fold(&idx));
            }
        }
        Ok(PeriodicAction { pot: pot.clone(), lattice: lattice.clone(), table, width })
    }

    pub fn potential(&self) -> &LocalPotential {
        &self.pot
    }

    pub fn lattice(&self) -> &PeriodLattice {
        &self.lattice
    }

    /// Number of degrees of freedom.
    pub fn n(&self) -> usize {
        self.lattice.size()
    }

    fn window(&self, x: &[f64], site: usize, buf: &mut [f64]) {
        let row = &self.table[site * self.width..(site + 1) * self.width];
        for (b, &(pos, off)) in buf.iter_mut().zip(row) {
            *b = x[pos] + off;
        }
    }

    /// `S_j(x)` for each `j ∈ B_p`.
    pub fn site_energies(&self, x: &[f64]) -> Vec<f64> {
        let mut buf = vec![0.0; self.width];
        (0..self.n())
            .map(|s| {
                self.window(x, s, &mut buf);
                self.pot.energy(&buf)
            })
            .collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.site_energies(x).iter().sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.gradient_into(x, &mut out);
        out
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut buf = vec![0.0; self.width];
        let mut g = vec![0.0; self.width];
        for s in 0..self.n() {
            self.window(x, s, &mut buf);
            g.iter_mut().for_each(|v| *v = 0.0);
            self.pot.gradient_into(&buf, &mut g);
            let row = &self.table[s * self.width..(s + 1) * self.width];
            for (gv, &(pos, _)) in g.iter().zip(row) {
                out[pos] += gv;
            }
        }
    }

    pub fn value_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.value(x), self.gradient(x))
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        let mut h = DMatrix::zeros(n, n);
        let mut buf = vec![0.0; self.width];
        for s in 0..n {
            self.window(x, s, &mut buf);
            let row = &self.table[s * self.width..(s + 1) * self.width];
            self.pot.hessian_entries(&buf, &mut |i, k, v| h[(row[i].0, row[k].0)] += v);
        }
        h
    }

    /// Per-site Hessians `∂_{o,o'} S_j` on the stencil, with the folding row.
    pub fn site_hessians(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        let mut buf = vec![0.0; self.width];
        (0..self.n())
            .map(|s| {
                self.window(x, s, &mut buf);
                self.pot.hessian(&buf)
            })
            .collect()
    }

    /// Domain positions of the stencil around site `s`.
    pub fn fold_row(&self, s: usize) -> Vec<usize> {
        self.table[s * self.width..(s + 1) * self.width].iter().map(|t| t.0).collect()
    }

    pub fn derivatives(&self, x: &[f64]) -> ActionDerivatives {
        ActionDerivatives { value: self.value(x), gradient: self.gradient(x), hessian: self.hessian(x) }
    }

    /// `Σ (∂_i W)²`.
    pub fn defect(&self, x: &[f64]) -> f64 {
        self.gradient(x).iter().map(|g| g * g).sum()
    }
}

/// `W_{p,q}`, its folded gradient and Hessian at `config`.
pub fn action_derivatives(pot: &LocalPotential, config: &Configuration) -> Result<ActionDerivatives> {
    Ok(PeriodicAction::new(pot, config.lattice())?.derivatives(config.values()))
}

/// `A(x) = Σ_{i∈B_p} (∂_i W(x))²`.
pub fn stationarity_defect(pot: &LocalPotential, config: &Configuration) -> Result<f64> {
    Ok(PeriodicAction::new(pot, config.lattice())?.defect(config.values()))
}

/// Outcome of [`is_morse`].
#[derive(Clone, Debug, Serialize)]
pub struct MorseVerdict {
    pub morse: bool,
    pub min_abs_eigenvalue: f64,
    /// Index into the critical list of the most degenerate point.
    pub worst: usize,
}

/// Whether every Hessian eigenvalue at every listed critical point exceeds
/// `tol` in absolute value.
pub fn is_morse(
    pot: &LocalPotential,
    lattice: &PeriodLattice,
    criticals: &[Configuration],
    tol: f64,
) -> Result<MorseVerdict> {
    if criticals.is_empty() {
        return Err(Error::InvalidArgument("empty critical list; search for critical points first".into()));
    }
    let action = PeriodicAction::new(pot, lattice)?;
    let mut verdict = MorseVerdict { morse: true, min_abs_eigenvalue: f64::INFINITY, worst: 0 };
    for (idx, c) in criticals.iter().enumerate() {
        if c.lattice() != lattice {
            return Err(Error::LatticeMismatch);
        }
        let defect = action.defect(c.values());
        if defect > tol * tol {
            return Err(Error::Precondition(format!("critical point {idx} has defect {defect:.3e} > tol^2")));
        }
        let m = sym_eigenvalues(&action.hessian(c.values()))
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if m < verdict.min_abs_eigenvalue {
            verdict.min_abs_eigenvalue = m;
            verdict.worst = idx;
        }
    }
    verdict.morse = verdict.min_abs_eigenvalue > tol;
    Ok(verdict)
}

/// Largest `||k||` of a window offset used by the potential on a lattice.
pub fn interaction_diameter(pot: &LocalPotential) -> i64 {
    pot.stencil().offsets().iter().map(|o| norm1(o)).max().unwrap_or(0)
}
