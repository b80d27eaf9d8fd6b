//! Dormand-Prince 5(4) integrator with continuous (dense) output for
//! autonomous systems `y' = f(y)`.

use crate::error::{Error, Result};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrator settings. Tolerances are per component:
/// `|err_i| <= atol + rtol·max(|y_i|, |y_i^new|)` in RMS.
#[derive(Clone, Copy, Debug)]
pub struct Dopri5Options {
    pub atol: f64,
    pub rtol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Dopri5Options { atol: 1e-9, rtol: 1e-9, h_max: f64::INFINITY, max_steps: 10_000_000 }
    }
}

/// Continuous extension of one accepted step on `[t0, t0 + h]`.
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    rc: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// State at `t ∈ [t0, t0 + h]`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.rc[0].len()];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let th = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.rc;
        for i in 0..out.len() {
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
    }
}

/// Whether integration continues after a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Summary of an integration.
#[derive(Clone, Debug)]
pub struct OdeOutcome {
    pub y: Vec<f64>,
    pub t: f64,
    pub steps: usize,
    pub rejected: usize,
    /// True when the callback stopped integration before `t_end`.
    pub stopped: bool,
}

fn rms_error(err: &[f64], y0: &[f64], y1: &[f64], o: &Dopri5Options) -> f64 {
    let n = err.len().max(1) as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sk = o.atol + o.rtol * a.abs().max(b.abs());
            (e / sk).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

fn initial_step<F: FnMut(&[f64], &mut [f64])>(f: &mut F, y0: &[f64], f0: &[f64], o: &Dopri5Options, span: f64) -> f64 {
    let n = y0.len();
    let sk: Vec<f64> = y0.iter().map(|y| o.atol + o.rtol * y.abs()).collect();
    let nrm = |v: &[f64]| (v.iter().zip(&sk).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt();
    let dnf = nrm(f0);
    let dny = nrm(y0);
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { 0.01 * dny / dnf };
    h = h.min(o.h_max).min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, d)| y + h * d).collect();
    let mut f1 = vec![0.0; n];
    f(&y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let der2 = nrm(&diff) / h;
    let der12 = dnf.max(der2);
    let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(0.2) };
    (100.0 * h).min(h1).min(o.h_max).min(span)
}

/// Integrates `y' = f(y)` from `t = 0` to `t_end`. `on_step` sees every
/// accepted step together with the new state and may stop the integration.
pub fn integrate<F, C>(mut f: F, y0: &[f64], t_end: f64, o: &Dopri5Options, mut on_step: C) -> Result<OdeOutcome>
where
    F: FnMut(&[f64], &mut [f64]),
    C: FnMut(&DenseStep, &[f64]) -> Control,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut outcome = OdeOutcome { y: y.clone(), t, steps: 0, rejected: 0, stopped: false };
    if t_end <= 0.0 || n == 0 {
        return Ok(outcome);
    }
    let mut k1 = vec![0.0; n];
    f(&y, &mut k1);
    let mut h = initial_step(&mut f, &y, &k1, o, t_end);
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut ys = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut fac_old = 1e-4f64;
    let mut last_rejected = false;

    while t < t_end {
        if outcome.steps + outcome.rejected >= o.max_steps {
            return Err(Error::TooManySteps(o.max_steps));
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        for i in 0..n {
            ys[i] = y[i] + h * A21 * k1[i];
        }
        f(&ys, &mut k2);
        for i in 0..n {
            ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(&ys, &mut k3);
        for i in 0..n {
            ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(&ys, &mut k4);
        for i in 0..n {
            ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(&ys, &mut k5);
        for i in 0..n {
            ys[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(&ys, &mut k6);
        for i in 0..n {
            y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(&y1, &mut k7);
        for i in 0..n {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let e = rms_error(&err, &y, &y1, o);
        if !e.is_finite() {
            h *= 0.1;
            outcome.rejected += 1;
            last_rejected = true;
            continue;
        }
        // PI step-size control.
        let fac11 = e.powf(0.17);
        let mut fac = fac11 / fac_old.powf(0.04) / 0.9;
        fac = fac.clamp(0.2, 10.0);
        let h_new = h / fac;
        if e <= 1.0 {
            fac_old = e.max(1e-4);
            let rc = {
                let mut r2 = vec![0.0; n];
                let mut r3 = vec![0.0; n];
                let mut r4 = vec![0.0; n];
                let mut r5 = vec![0.0; n];
                for i in 0..n {
                    let ydiff = y1[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    r2[i] = ydiff;
                    r3[i] = bspl;
                    r4[i] = ydiff - h * k7[i] - bspl;
                    r5[i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                [y.clone(), r2, r3, r4, r5]
            };
            let step = DenseStep { t0: t, h, rc };
            t = if last { t_end } else { t + h };
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            outcome.steps += 1;
            let ctl = on_step(&step, &y);
            let mut next = h_new.min(o.h_max);
            if last_rejected {
                next = next.min(h);
            }
            last_rejected = false;
            h = next;
            if ctl == Control::Stop {
                outcome.stopped = t < t_end;
                break;
            }
        } else {
            h /= (fac11 / 0.9).min(5.0);
            outcome.rejected += 1;
            last_rejected = true;
        }
    }
    outcome.y = y;
    outcome.t = t;
    Ok(outcome)
}

/// Five-point Gauss-Legendre nodes on `[0,1]` and weights.
pub const GAUSS5: [(f64, f64); 5] = [
    (0.046_910_077_030_668_004, 0.118_463_442_528_094_54),
    (0.230_765_344_947_158_45, 0.239_314_335_249_683_23),
    (0.5, 0.284_444_444_444_444_45),
    (0.769_234_655_052_841_6, 0.239_314_335_249_683_23),
    (0.953_089_922_969_332, 0.118_463_442_528_094_54),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let o = Dopri5Options { atol: 1e-12, rtol: 1e-12, ..Default::default() };
        let out = integrate(|y, d| d[0] = -y[0], &[1.0], 2.0, &o, |_, _| Control::Continue).unwrap();
        assert!((out.y[0] - (-2.0f64).exp()).abs() < 1e-11);
        assert_eq!(out.t, 2.0);
    }

    #[test]
    fn dense_output_is_accurate() {
        let o = Dopri5Options { atol: 1e-10, rtol: 1e-10, ..Default::default() };
        let mut worst = 0.0f64;
        integrate(
            |y, d| {
                d[0] = y[1];
                d[1] = -y[0];
            },
            &[1.0, 0.0],
            6.0,
            &o,
            |s, _| {
                for th in [0.1, 0.37, 0.5, 0.81] {
                    let t = s.t0 + th * s.h;
                    let v = s.eval(t);
                    worst = worst.max((v[0] - t.cos()).abs()).max((v[1] + t.sin()).abs());
                }
                Control::Continue
            },
        )
        .unwrap();
        assert!(worst < 1e-8, "dense error {worst}");
    }

    #[test]
    fn gauss_weights_sum_to_one() {
        let s: f64 = GAUSS5.iter().map(|(_, w)| w).sum();
        assert!((s - 1.0).abs() < 1e-15);
        // exact for degree 9
        let i: f64 = GAUSS5.iter().map(|(x, w)| w * x.powi(9)).sum();
        assert!((i - 0.1).abs() < 1e-15);
    }
}
