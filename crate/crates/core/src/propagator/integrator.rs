//! Embedded Dormand-Prince 5(4) Runge-Kutta with PI step-size control.

use crate::error::{Error, Result};
use crate::C64;

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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    /// Smallest step allowed before giving up.
    pub min_step: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            initial_step: 1e-3,
            max_step: 0.5,
            min_step: 1e-13,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub step_size: f64,
    pub previous_error: f64,
}

/// Result of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accepted {
    pub t: f64,
    pub h_used: f64,
    pub error: f64,
}

pub struct Dopri5 {
    settings: IntegratorSettings,
    h: f64,
    err_old: f64,
    fsal: Option<Vec<C64>>,
    k: [Vec<C64>; 7],
    y_stage: Vec<C64>,
    y_new: Vec<C64>,
    pub stats: StepStats,
}

fn axpy_stage(out: &mut [C64], y: &[C64], h: f64, terms: &[(f64, &[C64])]) {
    for i in 0..y.len() {
        let mut acc = C64::new(0.0, 0.0);
        for &(a, k) in terms {
            acc += k[i] * a;
        }
        out[i] = y[i] + acc * h;
    }
}

impl Dopri5 {
    pub fn new(settings: IntegratorSettings, len: usize) -> Self {
        let zero = vec![C64::new(0.0, 0.0); len];
        Self {
            h: settings.initial_step.min(settings.max_step),
            settings,
            err_old: 1e-4,
            fsal: None,
            k: std::array::from_fn(|_| zero.clone()),
            y_stage: zero.clone(),
            y_new: zero,
            stats: StepStats::default(),
        }
    }

    /// Proposed size of the next step.
    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn set_step_size(&mut self, h: f64) {
        self.h = h.min(self.settings.max_step);
    }

    /// Step-size controller memory, enough to continue bit-identically
    /// from a canonical state.
    pub fn controller(&self) -> ControllerState {
        ControllerState {
            step_size: self.h,
            previous_error: self.err_old,
        }
    }

    pub fn restore_controller(&mut self, c: ControllerState) {
        self.h = c.step_size.min(self.settings.max_step);
        self.err_old = c.previous_error;
    }

    /// Forget the cached derivative after `y` was modified externally.
    pub fn invalidate(&mut self) {
        self.fsal = None;
    }

    fn error_norm(&self, y: &[C64], err: &[C64]) -> f64 {
        let s = &self.settings;
        let mut sum = 0.0;
        for i in 0..y.len() {
            let scale = s.abs_tol + s.rel_tol * y[i].norm().max(self.y_new[i].norm());
            sum += (err[i].norm() / scale).powi(2);
        }
        (sum / y.len().max(1) as f64).sqrt()
    }

    /// Advance `y` from `t` by one accepted step of at most `t_limit - t`.
    /// Rejected attempts are retried with smaller steps.
    pub fn step<F>(&mut self, f: &mut F, t: f64, y: &mut [C64], t_limit: f64) -> Result<Accepted>
    where
        F: FnMut(f64, &[C64], &mut [C64]) -> Result<()>,
    {
        let n = y.len();
        if self.fsal.is_none() {
            let mut k1 = vec![C64::new(0.0, 0.0); n];
            f(t, y, &mut k1)?;
            self.stats.evaluations += 1;
            self.fsal = Some(k1);
        }
        self.k[0].copy_from_slice(self.fsal.as_ref().unwrap());
        let mut reject_streak = false;
        loop {
            let remaining = t_limit - t;
            let clamped = self.h >= remaining;
            let h = if clamped { remaining } else { self.h };
            if h < self.settings.min_step.max(1e-15 * t.abs()) && !clamped {
                return Err(Error::StepUnderflow { time: t, step: h });
            }
            let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
            axpy_stage(&mut self.y_stage, y, h, &[(A21, k1)]);
            f(t + C2 * h, &self.y_stage, k2)?;
            axpy_stage(&mut self.y_stage, y, h, &[(A31, k1), (A32, k2)]);
            f(t + C3 * h, &self.y_stage, k3)?;
            axpy_stage(&mut self.y_stage, y, h, &[(A41, k1), (A42, k2), (A43, k3)]);
            f(t + C4 * h, &self.y_stage, k4)?;
            axpy_stage(&mut self.y_stage, y, h, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]);
            f(t + C5 * h, &self.y_stage, k5)?;
            axpy_stage(&mut self.y_stage, y, h, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]);
            f(t + h, &self.y_stage, k6)?;
            axpy_stage(&mut self.y_new, y, h, &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
            f(t + h, &self.y_new, k7)?;
            self.stats.evaluations += 6;
            let mut err = vec![C64::new(0.0, 0.0); n];
            for i in 0..n {
                err[i] = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            }
            let e = self.error_norm(y, &err);
            if !e.is_finite() {
                return Err(Error::Propagation {
                    time: t,
                    reason: "non-finite error estimate".into(),
                });
            }
            if e <= 1.0 {
                let fac = (SAFETY * e.max(1e-10).powf(-ALPHA) * self.err_old.powf(BETA)).clamp(FAC_MIN, FAC_MAX);
                let fac = if reject_streak { fac.min(1.0) } else { fac };
                self.err_old = e.max(1e-4);
                // a step shortened to hit t_limit keeps the unclamped proposal
                if !clamped || fac < 1.0 {
                    self.h = (h * fac).min(self.settings.max_step);
                }
                y.copy_from_slice(&self.y_new);
                self.fsal.as_mut().unwrap().copy_from_slice(&self.k[6]);
                self.stats.accepted += 1;
                let t_new = if clamped { t_limit } else { t + h };
                return Ok(Accepted { t: t_new, h_used: h, error: e });
            }
            self.stats.rejected += 1;
            reject_streak = true;
            self.h = h * (SAFETY * e.powf(-ALPHA)).max(FAC_MIN);
        }
    }
}
