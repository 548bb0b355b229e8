//! Dormand–Prince 5(4) integrator with PI step-size control and the
//! fourth-order continuous extension of accepted steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, IntegrationError, Result};

/// Tolerances and budgets for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-10, max_step: f64::INFINITY, max_steps: 100_000 }
    }
}

impl IntegratorConfig {
    pub fn with_tolerance(tol: f64) -> Self {
        Self { abs_tol: tol, rel_tol: tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.abs_tol > 0.0
            && self.rel_tol > 0.0
            && self.max_step > 0.0
            && self.max_steps > 0
            && self.abs_tol.is_finite()
            && self.rel_tol.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid integrator configuration {self:?}")))
        }
    }
}

/// A first-order system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), IntegrationError>;

    /// Number of leading components that enter the local error estimate.
    fn error_dims(&self) -> usize {
        self.dim()
    }
}

/// Counters of one integration run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Continuous extension over the last accepted step `[t_old, t_old + h]`.
pub struct DenseStep<'a> {
    pub t_old: f64,
    pub h: f64,
    rcont: &'a [Vec<f64>; 5],
}

impl DenseStep<'_> {
    pub fn t_new(&self) -> f64 {
        self.t_old + self.h
    }

    /// State at `t`, which should lie in the step.
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let theta = (t - self.t_old) / self.h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = self.rcont;
        for i in 0..out.len() {
            out[i] = r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
        }
    }

    /// Start-of-step state.
    pub fn y_old(&self) -> &[f64] {
        &self.rcont[0]
    }
}

/// What the observer wants after seeing an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Result of [`Dopri5::integrate`]; the state array passed in holds the
/// final state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub t: f64,
    pub stopped: bool,
    pub stats: IntegrationStats,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
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

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN_INV: f64 = 1.0 / 0.2;
const FAC_MAX_INV: f64 = 1.0 / 10.0;

/// Reusable integrator workspace.
pub struct Dopri5 {
    n: usize,
    k: [Vec<f64>; 7],
    y1: Vec<f64>,
    ytmp: Vec<f64>,
    rcont: [Vec<f64>; 5],
}

impl Dopri5 {
    pub fn new(n: usize) -> Self {
        let v = || vec![0.0; n];
        Self {
            n,
            k: [v(), v(), v(), v(), v(), v(), v()],
            y1: v(),
            ytmp: v(),
            rcont: [v(), v(), v(), v(), v()],
        }
    }

    /// Integrate `y` from `t0` to `t_end` (either direction). The observer
    /// sees every accepted step and may stop the run early, in which case
    /// `y` holds the state at the end of that step.
    pub fn integrate<S, F>(
        &mut self,
        sys: &S,
        t0: f64,
        y: &mut [f64],
        t_end: f64,
        cfg: &IntegratorConfig,
        mut observer: F,
    ) -> Result<Outcome, IntegrationError>
    where
        S: OdeSystem + ?Sized,
        F: FnMut(&DenseStep<'_>) -> Control,
    {
        assert_eq!(sys.dim(), self.n, "system dimension differs from workspace");
        assert_eq!(y.len(), self.n, "state dimension differs from workspace");
        let mut stats = IntegrationStats::default();
        let mut t = t0;
        if t_end == t0 {
            return Ok(Outcome { t, stopped: false, stats });
        }
        let dir = (t_end - t0).signum();
        let span = (t_end - t0).abs();
        let max_step = cfg.max_step.min(span);

        sys.rhs(t, y, &mut self.k[0])?;
        stats.rhs_evals += 1;
        let mut h = self.initial_step(sys, t, y, dir, max_step, cfg, &mut stats)?;
        let mut fac_old: f64 = 1e-4;
        let mut last_rejected = false;
        let mut last = false;

        loop {
            if stats.accepted + stats.rejected >= cfg.max_steps {
                return Err(IntegrationError::MaxSteps { max_steps: cfg.max_steps, reached: t, partial: None });
            }
            if h.abs() <= 1e-14 * t.abs().max(1.0) {
                return Err(IntegrationError::StepUnderflow { at: t });
            }
            if (t + 1.01 * h - t_end) * dir >= 0.0 {
                h = t_end - t;
                last = true;
            }

            let err = match self.trial_step(sys, t, y, h, cfg, &mut stats) {
                Ok(err) if err.is_finite() => err,
                Ok(_) | Err(_) if h.abs() > 1e-12 * t.abs().max(1.0) => {
                    // Stage evaluated outside the admissible range: shrink.
                    h *= 0.25;
                    last = false;
                    last_rejected = true;
                    stats.rejected += 1;
                    continue;
                }
                Ok(_) => return Err(IntegrationError::NonFinite { at: t }),
                Err(e) => return Err(e),
            };

            let fac11 = err.powf(EXPO1);
            let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(FAC_MAX_INV, FAC_MIN_INV);
            let mut h_new = h / fac;

            if err <= 1.0 {
                fac_old = err.max(1e-4);
                stats.accepted += 1;
                self.build_dense(h);
                let step = DenseStep { t_old: t, h, rcont: &self.rcont };
                let control = observer(&step);
                t = if last { t_end } else { t + h };
                y.copy_from_slice(&self.y1);
                self.k.swap(0, 6);
                if last || control == Control::Stop {
                    return Ok(Outcome { t, stopped: control == Control::Stop && !last, stats });
                }
                if h_new.abs() > max_step {
                    h_new = dir * max_step;
                }
                if last_rejected {
                    h_new = dir * h_new.abs().min(h.abs());
                }
                last_rejected = false;
            } else {
                h_new = h / FAC_MIN_INV.min(fac11 / SAFETY);
                last_rejected = true;
                last = false;
                stats.rejected += 1;
            }
            h = h_new;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn initial_step<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        t: f64,
        y: &[f64],
        dir: f64,
        max_step: f64,
        cfg: &IntegratorConfig,
        stats: &mut IntegrationStats,
    ) -> Result<f64, IntegrationError> {
        let n = self.n as f64;
        let mut dnf = 0.0;
        let mut dny = 0.0;
        for i in 0..self.n {
            let sk = cfg.abs_tol + cfg.rel_tol * y[i].abs();
            dnf += (self.k[0][i] / sk).powi(2);
            dny += (y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
        h = h.min(max_step);
        for i in 0..self.n {
            self.ytmp[i] = y[i] + dir * h * self.k[0][i];
        }
        let mut der2 = 0.0;
        if sys.rhs(t + dir * h, &self.ytmp, &mut self.k[1]).is_ok() {
            stats.rhs_evals += 1;
            for i in 0..self.n {
                let sk = cfg.abs_tol + cfg.rel_tol * y[i].abs();
                der2 += ((self.k[1][i] - self.k[0][i]) / sk).powi(2);
            }
            der2 = (der2 / n).sqrt() / h;
        }
        let der12 = der2.abs().max((dnf / n).sqrt());
        let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(0.2) };
        Ok(dir * (100.0 * h).min(h1).min(max_step))
    }

    /// Stages 2..7 from `k[0]`; returns the scaled error norm.
    fn trial_step<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        t: f64,
        y: &[f64],
        h: f64,
        cfg: &IntegratorConfig,
        stats: &mut IntegrationStats,
    ) -> Result<f64, IntegrationError> {
        let n = self.n;
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let ytmp = &mut self.ytmp;
        let y1 = &mut self.y1;
        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        sys.rhs(t + C2 * h, ytmp, k2)?;
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.rhs(t + C3 * h, ytmp, k3)?;
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.rhs(t + C4 * h, ytmp, k4)?;
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.rhs(t + C5 * h, ytmp, k5)?;
        for i in 0..n {
            ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        sys.rhs(t + h, ytmp, k6)?;
        for i in 0..n {
            y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        sys.rhs(t + h, y1, k7)?;
        stats.rhs_evals += 6;

        let mut err = 0.0;
        let controlled = sys.error_dims();
        for i in 0..controlled {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y1[i].abs());
            err += (e / sk).powi(2);
        }
        // Stash the start state for the dense output.
        self.rcont[0].copy_from_slice(y);
        Ok((err / controlled as f64).sqrt())
    }

    fn build_dense(&mut self, h: f64) {
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let [r1, r2, r3, r4, r5] = &mut self.rcont;
        for i in 0..self.n {
            let ydiff = self.y1[i] - r1[i];
            let bspl = h * k1[i] - ydiff;
            r2[i] = ydiff;
            r3[i] = bspl;
            r4[i] = ydiff - h * k7[i] - bspl;
            r5[i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Oscillator;
    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), IntegrationError> {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        }
    }

    struct Blowup;
    impl OdeSystem for Blowup {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), IntegrationError> {
            if y[0] > 1e3 {
                return Err(IntegrationError::Range { exponent: y[0], at: t });
            }
            dy[0] = y[0] * y[0];
            Ok(())
        }
    }

    #[test]
    fn harmonic_oscillator_accuracy() {
        let mut ws = Dopri5::new(2);
        let mut y = [1.0, 0.0];
        let cfg = IntegratorConfig::default();
        let out = ws.integrate(&Oscillator, 0.0, &mut y, 10.0, &cfg, |_| Control::Continue).unwrap();
        assert_eq!(out.t, 10.0);
        assert!((y[0] - 10f64.cos()).abs() < 1e-9);
        assert!((y[1] + 10f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn backward_integration() {
        let mut ws = Dopri5::new(2);
        let mut y = [1.0, 0.0];
        let cfg = IntegratorConfig::default();
        ws.integrate(&Oscillator, 0.0, &mut y, -3.0, &cfg, |_| Control::Continue).unwrap();
        assert!((y[0] - 3f64.cos()).abs() < 1e-9);
        assert!((y[1] - 3f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn dense_output_is_accurate() {
        let mut ws = Dopri5::new(2);
        let mut y = [1.0, 0.0];
        let cfg = IntegratorConfig::with_tolerance(1e-12);
        let mut worst: f64 = 0.0;
        let mut buf = [0.0; 2];
        ws.integrate(&Oscillator, 0.0, &mut y, 6.0, &cfg, |step| {
            for j in 1..4 {
                let t = step.t_old + step.h * j as f64 / 4.0;
                step.eval(t, &mut buf);
                worst = worst.max((buf[0] - t.cos()).abs());
            }
            Control::Continue
        })
        .unwrap();
        assert!(worst < 1e-9, "dense error {worst}");
    }

    #[test]
    fn step_budget_is_enforced() {
        let mut ws = Dopri5::new(2);
        let mut y = [1.0, 0.0];
        let cfg = IntegratorConfig { max_steps: 3, ..IntegratorConfig::default() };
        let err = ws.integrate(&Oscillator, 0.0, &mut y, 100.0, &cfg, |_| Control::Continue).unwrap_err();
        assert!(matches!(err, IntegrationError::MaxSteps { .. }));
    }

    #[test]
    fn range_failure_surfaces() {
        // y' = y² from y(0) = 1 blows up at t = 1.
        let mut ws = Dopri5::new(1);
        let mut y = [1.0];
        let cfg = IntegratorConfig::default();
        let err = ws.integrate(&Blowup, 0.0, &mut y, 2.0, &cfg, |_| Control::Continue).unwrap_err();
        assert!(matches!(err, IntegrationError::Range { .. } | IntegrationError::StepUnderflow { .. }));
    }

    #[test]
    fn observer_can_stop() {
        let mut ws = Dopri5::new(2);
        let mut y = [1.0, 0.0];
        let cfg = IntegratorConfig { max_step: 0.5, ..IntegratorConfig::default() };
        let out = ws.integrate(&Oscillator, 0.0, &mut y, 10.0, &cfg, |s| {
            if s.t_new() > 2.0 { Control::Stop } else { Control::Continue }
        })
        .unwrap();
        assert!(out.stopped);
        assert!(out.t > 2.0 && out.t <= 2.5 + 1e-12);
        assert!((y[0] - out.t.cos()).abs() < 1e-9);
    }
}
