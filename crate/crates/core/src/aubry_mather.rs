//! Aubry-Mather sets at rational rotation vectors, their gaps, the
//! renormalized gap action and stationary solutions inside gaps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::ghost::GhostCircle;
use crate::lattice::{compare, compare_with_tol, Configuration, ConfigurationRecord, OrderRelation, PeriodLattice, Rational};
use crate::minimizers::{minimize_action, newton_critical, verify_global_minimizer, CriticalPoint};
use crate::ode::{integrate, Control, Dopri5Options};
use crate::potentials::{fk_potential, with_onsite, FkSpec, LocalPotential, PeriodicAction, TrigSeries};

pub const POS_TOL: f64 = 1e-8;
pub const GAP_TOL: f64 = 1e-6;
/// Samples of a Γ-segment required before a foliation verdict.
pub const FOLIATION_SAMPLES: usize = 64;
pub const PERCIVAL_BOUND: &str = "63/64";
pub const STANDARD_FORM_THRESHOLD: &str = "k > 8π²";

/// Distinct translates of a minimizer over one vertical period, by level.
#[derive(Clone, Debug)]
pub struct AubryMatherSet {
    pub generator: CriticalPoint,
    pub elements: Vec<Configuration>,
    pub levels: Vec<Rational>,
    pub lattice: PeriodLattice,
}

impl AubryMatherSet {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "generator": self.generator.record(),
            "levels": self.levels.iter().map(|l| format!("{}/{}", l.numer(), l.denom())).collect::<Vec<_>>(),
            "elements": self.elements.iter().map(ConfigurationRecord::from).collect::<Vec<_>>(),
        })
    }
}

/// `{τ_{k,l} x}` over the shift classes, ordered by level and checked to be
/// strictly ordered including the wrap to `x + 1`.
pub fn orbit_closure(x: &CriticalPoint, lattice: &PeriodLattice) -> Result<AubryMatherSet> {
    if x.config.lattice() != lattice {
        return Err(Error::LatticeMismatch);
    }
    if !lattice.is_principal() {
        return Err(Error::Precondition("orbit closure needs principal periods".into()));
    }
    let mut elements: Vec<Configuration> = Vec::new();
    let mut levels = Vec::new();
    for c in lattice.shift_classes() {
        let t = x.config.shift(&c.k, c.l);
        if elements.iter().all(|e| e.sup_distance(&t) > 1e-12) {
            elements.push(t);
            levels.push(c.level);
        }
    }
    for i in 0..elements.len() {
        let b = if i + 1 < elements.len() { elements[i + 1].clone() } else { elements[0].offset(1.0) };
        if compare(&elements[i], &b)? != OrderRelation::StrictlyBelow {
            return Err(Error::AubryViolation);
        }
    }
    Ok(AubryMatherSet { generator: x.clone(), elements, levels, lattice: lattice.clone() })
}

/// Order interval between consecutive Aubry-Mather elements.
#[derive(Clone, Debug)]
pub struct Gap {
    pub y_minus: Configuration,
    pub y_plus: Configuration,
    pub width: f64,
    pub site_widths: Vec<f64>,
}

impl Gap {
    pub fn new(y_minus: Configuration, y_plus: Configuration) -> Result<Self> {
        if y_minus.lattice() != y_plus.lattice() {
            return Err(Error::LatticeMismatch);
        }
        let site_widths: Vec<f64> = y_plus.values().iter().zip(y_minus.values()).map(|(a, b)| a - b).collect();
        let width = site_widths.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Gap { y_minus, y_plus, width, site_widths })
    }

    /// Whether `y⁻ ≤ y ≤ y⁺` up to `tol`.
    pub fn contains(&self, y: &Configuration, tol: f64) -> Result<bool> {
        Ok(compare_with_tol(&self.y_minus, y, tol)?.is_le() && compare_with_tol(y, &self.y_plus, tol)?.is_le())
    }
}

/// Minimizes `W` with `x_0` pinned, by the projected gradient flow.
fn pinned_minimum(action: &PeriodicAction, y: &[f64]) -> Result<Vec<f64>> {
    let o = action.lattice().origin();
    let opts = Dopri5Options { atol: 1e-11, rtol: 1e-11, ..Default::default() };
    let out = integrate(
        |x, dx| {
            action.gradient_into(x, dx);
            dx.iter_mut().for_each(|v| *v = -*v);
            dx[o] = 0.0;
        },
        y,
        1e5,
        &opts,
        |_, x| {
            let mut g = action.gradient(x);
            g[o] = 0.0;
            if g.iter().map(|v| v * v).sum::<f64>() < 1e-22 {
                Control::Stop
            } else {
                Control::Continue
            }
        },
    )?;
    Ok(out.y)
}

/// Whether the order interval is filled by minimizers: the pinned minimum at
/// its midpoint is stationary with the minimal action.
fn filled_by_minimizers(action: &PeriodicAction, lo: &Configuration, hi: &Configuration) -> Result<bool> {
    let w_min = action.value(lo.values());
    let mid = lo.lerp(hi, 0.5)?;
    let y = pinned_minimum(action, mid.values())?;
    let excess = action.value(&y) - w_min;
    Ok(excess.abs() <= POS_TOL * w_min.abs().max(1.0) && action.defect(&y) <= POS_TOL * POS_TOL)
}

/// Consecutive pairs of `M` (including the wrap to the generator `+ 1`)
/// whose width exceeds `gap_tol` and which are not filled by a continuum of
/// minimizers.
pub fn detect_gaps(pot: &LocalPotential, m: &AubryMatherSet, gap_tol: f64) -> Result<Vec<Gap>> {
    if m.is_empty() {
        return Err(Error::InvalidArgument("empty Aubry-Mather set".into()));
    }
    let action = PeriodicAction::new(pot, &m.lattice)?;
    let n = m.elements.len();
    let mut gaps = Vec::new();
    for i in 0..n {
        let lo = m.elements[i].clone();
        let hi = if i + 1 < n { m.elements[i + 1].clone() } else { m.elements[0].offset(1.0) };
        let gap = Gap::new(lo, hi)?;
        if gap.width <= gap_tol {
            continue;
        }
        if filled_by_minimizers(&action, &gap.y_minus, &gap.y_plus)? {
            continue;
        }
        gaps.push(gap);
    }
    Ok(gaps)
}

/// `Σ_{i ∈ Z^d/H_ω} |y⁺_i - y⁻_i|` with the bound `≤ 1`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SummabilityReport {
    pub sum: f64,
    pub verdict: bool,
}

pub fn gap_summability_check(gap: &Gap, lattice: &PeriodLattice) -> Result<SummabilityReport> {
    if gap.y_minus.lattice() != lattice {
        return Err(Error::LatticeMismatch);
    }
    let sum: f64 = lattice.quotient_representatives().iter().map(|&a| gap.site_widths[a].abs()).sum();
    Ok(SummabilityReport { sum, verdict: sum <= 1.0 + 1e-9 })
}

/// `W_{[y⁻,y⁺]}(y) = Σ_{j ∈ Z^d/H_ω} (S_j(y) - S_j(y⁻))`.
pub fn renormalized_action(pot: &LocalPotential, gap: &Gap, y: &Configuration) -> Result<f64> {
    let action = PeriodicAction::new(pot, y.lattice())?;
    renormalized_with(&action, gap, y)
}

fn renormalized_with(action: &PeriodicAction, gap: &Gap, y: &Configuration) -> Result<f64> {
    if y.lattice() != gap.y_minus.lattice() {
        return Err(Error::LatticeMismatch);
    }
    if !gap.contains(y, 1e-9)? {
        return Err(Error::OutsideInterval);
    }
    let sy = action.site_energies(y.values());
    let sm = action.site_energies(gap.y_minus.values());
    Ok(action.lattice().quotient_representatives().iter().map(|&a| sy[a] - sm[a]).sum())
}

/// What [`gap_solution`] found inside a gap.
#[derive(Clone, Debug)]
pub enum GapOutcome {
    /// A stationary configuration in the gap that is not a global minimizer.
    NonMinimizing { point: CriticalPoint, w_gap: f64, worst_margin: f64 },
    /// The sampled segment consists of stationary minimizers.
    Foliated { samples: usize, max_w_gap: f64, max_defect: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct GapSolutionParams {
    pub samples: usize,
    pub pos_tol: f64,
    /// Stationarity threshold; defects are compared with `tol²`.
    pub tol: f64,
    pub verify_trials: usize,
    pub seed: u64,
}

impl Default for GapSolutionParams {
    fn default() -> Self {
        GapSolutionParams { samples: 129, pos_tol: POS_TOL, tol: 1e-8, verify_trials: 32, seed: 7 }
    }
}

/// Maximizes the renormalized action along `Γ ∩ [y⁻, y⁺]` and classifies the
/// result.
pub fn gap_solution(pot: &LocalPotential, gamma: &GhostCircle, gap: &Gap, params: &GapSolutionParams) -> Result<GapOutcome> {
    let lattice = gap.y_minus.lattice();
    if &gamma.lattice != lattice {
        return Err(Error::LatticeMismatch);
    }
    let action = PeriodicAction::new(pot, lattice)?;
    let (a, b) = (gap.y_minus.x0(), gap.y_plus.x0());
    for (end, xi) in [(&gap.y_minus, a), (&gap.y_plus, b)] {
        let on = gamma.evaluate(xi)?;
        if on.sup_distance(end) > 1e-6 {
            return Err(Error::Precondition(format!("gap endpoint at x_0 = {xi} is not on the ghost circle")));
        }
    }
    let ns = params.samples.max(FOLIATION_SAMPLES);
    let sampled: Vec<(Configuration, f64, f64)> = (0..=ns)
        .into_par_iter()
        .map(|s| {
            let xi = a + (b - a) * s as f64 / ns as f64;
            let c = gamma.evaluate(xi)?;
            let w = renormalized_with(&action, gap, &c).or_else(|e| match e {
                // interpolation can leave the interval by rounding at the ends
                Error::OutsideInterval => Ok(f64::NEG_INFINITY),
                e => Err(e),
            })?;
            let defect = action.defect(c.values());
            Ok((c, w, defect))
        })
        .collect::<Result<_>>()?;
    let (best, max_w) = sampled
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s.1 > acc.1 { (i, s.1) } else { acc });
    if max_w > params.pos_tol {
        // the saddles stored on Γ are the exact candidates; samples are seeds
        let mut seeds: Vec<Vec<f64>> = gamma
            .critical_points()
            .into_iter()
            .flat_map(|c| (-1..=1).map(move |v| c.vertical(v)))
            .filter(|c| c.x0() > a && c.x0() < b)
            .map(|c| c.config.into_values())
            .collect();
        seeds.push(sampled[best].0.values().to_vec());
        let mut found: Option<(CriticalPoint, f64)> = None;
        for s in seeds {
            let Some(v) = newton_critical(&action, &s, params.tol * 1e-2, 60) else { continue };
            let c = Configuration::new(lattice.clone(), v)?;
            let Ok(w) = renormalized_with(&action, gap, &c) else { continue };
            let cp = CriticalPoint::evaluate_with(&action, &c);
            if action.defect(c.values()) <= params.tol * params.tol
                && w > params.pos_tol
                && found.as_ref().is_none_or(|f| w > f.1)
            {
                found = Some((cp, w));
            }
        }
        let (point, w_gap) = found.ok_or_else(|| Error::Polish("gap maximizer did not polish to a stationary point".into()))?;
        let report = verify_global_minimizer(pot, &point, 1, params.verify_trials, params.seed)?;
        if report.verdict {
            return Err(Error::Precondition("gap solution passed the global-minimizer test".into()));
        }
        return Ok(GapOutcome::NonMinimizing { point, w_gap, worst_margin: report.worst_margin });
    }
    let max_defect = sampled.iter().map(|s| s.2).fold(0.0, f64::max);
    if max_defect <= params.tol * params.tol {
        Ok(GapOutcome::Foliated { samples: sampled.len(), max_w_gap: max_w, max_defect })
    } else {
        Err(Error::Polish(format!(
            "segment neither carries positive renormalized action nor is stationary (max defect {max_defect:.3e})"
        )))
    }
}

/// Gap report record for JSON output.
pub fn gap_report_json(gap: &Gap, outcome: Option<&GapOutcome>) -> Result<serde_json::Value> {
    let l1 = gap_summability_check(gap, gap.y_minus.lattice())?;
    let solution = match outcome {
        Some(GapOutcome::NonMinimizing { point, w_gap, worst_margin }) => json!({
            "config": point.record(),
            "W_gap": w_gap,
            "index": point.index,
            "worst_margin": worst_margin,
        }),
        Some(GapOutcome::Foliated { samples, max_w_gap, max_defect }) => json!({
            "foliation_verdict": { "samples": samples, "max_W_gap": max_w_gap, "max_defect": max_defect }
        }),
        None => serde_json::Value::Null,
    };
    Ok(json!({
        "y_minus": ConfigurationRecord::from(&gap.y_minus),
        "y_plus": ConfigurationRecord::from(&gap.y_plus),
        "width": gap.width,
        "l1_sum": l1.sum,
        "solution": solution,
    }))
}

/// Verdict of the oscillation criterion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OscillationVerdict {
    /// `osc V` exceeds the threshold: no connected minimizer family exists.
    GapsMustExist,
    /// `osc V` is below the threshold; the criterion says nothing.
    Silent,
}

/// Cross-check of the criterion by [`detect_gaps`] on the full potential.
#[derive(Clone, Debug, Serialize)]
pub struct GapCrossCheck {
    pub gaps: usize,
    pub max_width: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OscillationReport {
    pub osc_v: f64,
    pub threshold: f64,
    /// `"fk"` for the `2d` bound or `"sampled"` for `(2r+1)^d · N`.
    pub threshold_kind: String,
    pub sampled_oscillation: Option<f64>,
    pub verdict: OscillationVerdict,
    pub standard_form_threshold: String,
    pub standard_form_k: f64,
    pub percival_bound: String,
    pub cross_check: GapCrossCheck,
}

/// Sampled oscillation of `S_0` over Birkhoff configurations
/// `x_i = φ(⟨ω,i⟩ + ξ)` with monotone lifts `φ(s) = s + a sin(2πs)/2π`.
fn sampled_site_oscillation(pot: &LocalPotential, samples: usize, seed: u64) -> f64 {
    let st = pot.stencil();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![0.0; st.len()];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..samples {
        let omega: Vec<f64> = (0..st.dim()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let xi = rng.gen_range(0.0..1.0);
        let a = rng.gen_range(-0.99..=0.99);
        for (slot, off) in st.offsets().iter().enumerate() {
            let s = xi + off.iter().zip(&omega).map(|(k, o)| *k as f64 * o).sum::<f64>();
            w[slot] = s + a * (std::f64::consts::TAU * s).sin() / std::f64::consts::TAU;
        }
        let e = pot.energy(&w);
        lo = lo.min(e);
        hi = hi.max(e);
    }
    hi - lo
}

/// Oscillation test for `pot_base + V`: the FK bound `osc V > 2d`, or the
/// sampled bound for other interactions, cross-checked by gap detection.
pub fn oscillation_gap_criterion(pot_base: &LocalPotential, v: &TrigSeries, lattice: &PeriodLattice) -> Result<OscillationReport> {
    let d = pot_base.dim();
    let osc_v = v.oscillation();
    let (full, threshold, kind, sampled) = match pot_base.fk() {
        Some(_) => (fk_potential(FkSpec { d, v: v.clone() }), 2.0 * d as f64, "fk", None),
        None => {
            let n = sampled_site_oscillation(pot_base, 4096, 0x05c1_11a7);
            let m = ((2 * pot_base.range() + 1) as f64).powi(d as i32) * n;
            (with_onsite(pot_base, v.clone()), m, "sampled", Some(n))
        }
    };
    let verdict = if osc_v > threshold { OscillationVerdict::GapsMustExist } else { OscillationVerdict::Silent };
    let min = minimize_action(&full, lattice, 16, 1)?;
    let am = orbit_closure(&min, lattice)?;
    let gaps = detect_gaps(&full, &am, GAP_TOL)?;
    let max_width = gaps.iter().map(|g| g.width).fold(0.0, f64::max);
    Ok(OscillationReport {
        osc_v,
        threshold,
        threshold_kind: kind.into(),
        sampled_oscillation: sampled,
        verdict,
        standard_form_threshold: STANDARD_FORM_THRESHOLD.into(),
        standard_form_k: 8.0 * std::f64::consts::PI.powi(2),
        percival_bound: PERCIVAL_BOUND.into(),
        cross_check: GapCrossCheck { gaps: gaps.len(), max_width },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minimizers::minimize_action;
    use crate::potentials::TrigTerm;
    use std::f64::consts::PI;

    fn fk1() -> LocalPotential {
        fk_potential(FkSpec::standard(1, 1.0))
    }

    fn scalar_gap() -> (LocalPotential, PeriodLattice, AubryMatherSet, Vec<Gap>) {
        let pot = fk1();
        let lat = PeriodLattice::one_dim(1, 0).unwrap();
        let min = minimize_action(&pot, &lat, 8, 1).unwrap();
        let am = orbit_closure(&min, &lat).unwrap();
        let gaps = detect_gaps(&pot, &am, GAP_TOL).unwrap();
        (pot, lat, am, gaps)
    }

    #[test]
    fn scalar_aubry_mather_and_gap() {
        let (pot, lat, am, gaps) = scalar_gap();
        assert_eq!(am.len(), 1);
        assert!((am.elements[0].values()[0] - 0.5).abs() < 1e-10);
        assert_eq!(gaps.len(), 1);
        assert!((gaps[0].width - 1.0).abs() < 1e-10);
        let l1 = gap_summability_check(&gaps[0], &lat).unwrap();
        assert!((l1.sum - 1.0).abs() < 1e-8 && l1.verdict);
        let mid = Configuration::new(lat.clone(), vec![1.0]).unwrap();
        let w = renormalized_action(&pot, &gaps[0], &mid).unwrap();
        assert!((w - 1.0 / (4.0 * PI * PI)).abs() < 1e-10);
        assert_eq!(renormalized_action(&pot, &gaps[0], &gaps[0].y_minus).unwrap(), 0.0);
        assert!(renormalized_action(&pot, &gaps[0], &gaps[0].y_plus).unwrap().abs() < 1e-12);
        let out = Configuration::new(lat, vec![2.0]).unwrap();
        assert!(matches!(renormalized_action(&pot, &gaps[0], &out), Err(Error::OutsideInterval)));
    }

    #[test]
    fn two_site_closure_levels() {
        let pot = fk1();
        let lat = PeriodLattice::one_dim(2, -1).unwrap();
        let min = minimize_action(&pot, &lat, 8, 1).unwrap();
        let am = orbit_closure(&min, &lat).unwrap();
        assert_eq!(am.len(), 2);
        assert_eq!(am.levels, vec![Rational::new(0, 1), Rational::new(1, 2)]);
        let gaps = detect_gaps(&pot, &am, GAP_TOL).unwrap();
        assert_eq!(gaps.len(), 2);
        for g in &gaps {
            assert!(g.width > 0.0);
            assert!(gap_summability_check(g, &lat).unwrap().verdict);
        }
    }

    #[test]
    fn free_chain_has_no_gaps() {
        let pot = fk_potential(FkSpec::free(1));
        let lat = PeriodLattice::one_dim(2, -1).unwrap();
        let cp = CriticalPoint::evaluate(&pot, &Configuration::linear(&lat, 0.1)).unwrap();
        let am = orbit_closure(&cp, &lat).unwrap();
        assert_eq!(am.len(), 2);
        assert!((am.elements[1].x0() - am.elements[0].x0() - 0.5).abs() < 1e-12);
        assert!(detect_gaps(&pot, &am, GAP_TOL).unwrap().is_empty());
    }

    #[test]
    fn degenerate_gap_sums_to_zero() {
        let lat = PeriodLattice::one_dim(1, 0).unwrap();
        let y = Configuration::new(lat.clone(), vec![0.3]).unwrap();
        let g = Gap::new(y.clone(), y).unwrap();
        assert_eq!(gap_summability_check(&g, &lat).unwrap().sum, 0.0);
    }

    #[test]
    fn scalar_gap_solution_is_the_saddle() {
        let (pot, lat, _am, gaps) = scalar_gap();
        let gc = crate::ghost::assemble_ghost_circle(&pot, &lat, &Default::default()).unwrap();
        match gap_solution(&pot, &gc, &gaps[0], &GapSolutionParams::default()).unwrap() {
            GapOutcome::NonMinimizing { point, w_gap, .. } => {
                assert!((point.x0() - 1.0).abs() < 1e-10);
                assert!((w_gap - 1.0 / (4.0 * PI * PI)).abs() < 1e-10);
                assert_eq!(point.index, 1);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn free_chain_gap_solution_is_foliated() {
        let pot = fk_potential(FkSpec::free(1));
        let lat = PeriodLattice::one_dim(2, -1).unwrap();
        let members: Vec<Configuration> = (0..64).map(|i| Configuration::linear(&lat, i as f64 / 64.0)).collect();
        let gc = GhostCircle::from_family(&pot, &lat, members).unwrap();
        let gap = Gap::new(Configuration::linear(&lat, 0.0), Configuration::linear(&lat, 0.5)).unwrap();
        match gap_solution(&pot, &gc, &gap, &GapSolutionParams::default()).unwrap() {
            GapOutcome::Foliated { samples, max_w_gap, .. } => {
                assert!(samples >= FOLIATION_SAMPLES);
                assert!(max_w_gap.abs() < 1e-12);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn two_site_gap_solution_is_mountain_pass() {
        let pot = fk1();
        let lat = PeriodLattice::one_dim(2, -1).unwrap();
        let min = minimize_action(&pot, &lat, 8, 1).unwrap();
        let am = orbit_closure(&min, &lat).unwrap();
        let gaps = detect_gaps(&pot, &am, GAP_TOL).unwrap();
        let gc = crate::ghost::assemble_ghost_circle(&pot, &lat, &Default::default()).unwrap();
        match gap_solution(&pot, &gc, &gaps[0], &GapSolutionParams::default()).unwrap() {
            GapOutcome::NonMinimizing { point, w_gap, .. } => {
                assert_eq!(point.index, 1);
                assert!(w_gap > POS_TOL);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn oscillation_criterion_fk() {
        let v = TrigSeries { terms: vec![TrigTerm { harmonic: 1, cos: 1.25, sin: 0.0 }] };
        let base = fk_potential(FkSpec::free(1));
        for (p, q) in [(1, 0), (2, -1)] {
            let lat = PeriodLattice::one_dim(p, q).unwrap();
            let r = oscillation_gap_criterion(&base, &v, &lat).unwrap();
            assert!((r.osc_v - 2.5).abs() < 1e-12);
            assert_eq!(r.verdict, OscillationVerdict::GapsMustExist);
            assert!(r.cross_check.gaps > 0 && r.cross_check.max_width > 1e-3);
            assert_eq!(r.percival_bound, "63/64");
            assert_eq!(r.standard_form_threshold, "k > 8π²");
        }
        let lat = PeriodLattice::one_dim(2, -1).unwrap();
        let r = oscillation_gap_criterion(&base, &TrigSeries::zero(), &lat).unwrap();
        assert_eq!(r.verdict, OscillationVerdict::Silent);
        assert_eq!(r.cross_check.gaps, 0);
    }

    #[test]
    fn oscillation_criterion_sampled_bound() {
        let base = crate::potentials::custom_potential(1, TrigSeries::zero(), 1.0);
        let lat = PeriodLattice::one_dim(1, 0).unwrap();
        let r = oscillation_gap_criterion(&base, &TrigSeries::standard(1.0), &lat).unwrap();
        assert_eq!(r.threshold_kind, "sampled");
        assert!(r.threshold > 0.0);
        assert_eq!(r.verdict, OscillationVerdict::Silent);
    }
}
