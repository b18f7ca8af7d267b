//! Weighted error norm and PID step size control with an arctan limiter.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("tolerances must be nonnegative with a positive sum (abs = {abs}, rel = {rel})")]
    InvalidTolerances { abs: f64, rel: f64 },
    #[error("error weight vanishes in component {index}")]
    DegenerateWeight { index: usize },
    #[error("state dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("accept threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerances {
    pub fn new(abs: f64, rel: f64) -> Result<Self, ControllerError> {
        if !(abs >= 0.0 && rel >= 0.0 && abs + rel > 0.0) {
            return Err(ControllerError::InvalidTolerances { abs, rel });
        }
        Ok(Tolerances { abs, rel })
    }

    /// Same value for the absolute and relative tolerance.
    pub fn uniform(tol: f64) -> Result<Self, ControllerError> {
        Self::new(tol, tol)
    }
}

/// Root-mean-square of the componentwise differences, each scaled by
/// `abs + rel * max(|u_i|, |û_i|)`.
pub fn weighted_error_norm(u: &[f64], u_hat: &[f64], tol: Tolerances) -> Result<f64, ControllerError> {
    if u.len() != u_hat.len() {
        return Err(ControllerError::DimensionMismatch(u.len(), u_hat.len()));
    }
    let mut sum = 0.0;
    for (i, (&x, &y)) in u.iter().zip(u_hat).enumerate() {
        let scale = tol.abs + tol.rel * x.abs().max(y.abs());
        if scale == 0.0 {
            return Err(ControllerError::DegenerateWeight { index: i });
        }
        let e = (x - y) / scale;
        sum += e * e;
    }
    Ok((sum / u.len().max(1) as f64).sqrt())
}

/// PID gains `β1, β2, β3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        PidGains {
            beta1: 0.60,
            beta2: -0.20,
            beta3: 0.0,
        }
    }
}

/// Settings that do not depend on the integration interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub gains: PidGains,
    /// Steps whose factor falls below this value are rejected.
    pub accept_threshold: f64,
    /// Lower bound applied to the error norm before inversion.
    pub w_floor: f64,
    /// `dt_min = dt_min_rel * (t_end - t0)` unless overridden.
    pub dt_min: Option<f64>,
    pub dt_max: Option<f64>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            gains: PidGains::default(),
            accept_threshold: 0.81,
            w_floor: 1e-10,
            dt_min: None,
            dt_max: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub dt_new: f64,
    pub accept: bool,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub gains: PidGains,
    /// Order used in the exponents `β_i / p`.
    pub order: u32,
    /// ε_n
    pub eps_prev: f64,
    /// ε_{n-1}
    pub eps_prev2: f64,
    pub dt: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub accept_threshold: f64,
    pub w_floor: f64,
}

impl ControllerState {
    /// Fresh controller for an integration over `span = t_end - t0`.
    pub fn new(cfg: &ControllerConfig, order: u32, dt0: f64, span: f64) -> Result<Self, ControllerError> {
        if !(cfg.accept_threshold > 0.0 && cfg.accept_threshold < 1.0) {
            return Err(ControllerError::InvalidThreshold(cfg.accept_threshold));
        }
        let dt_min = cfg.dt_min.unwrap_or(1e-14 * span);
        let dt_max = cfg.dt_max.unwrap_or(span);
        Ok(ControllerState {
            gains: cfg.gains,
            order: order.max(1),
            eps_prev: 1.0,
            eps_prev2: 1.0,
            dt: dt0.clamp(dt_min, dt_max),
            dt_min,
            dt_max,
            accept_threshold: cfg.accept_threshold,
            w_floor: cfg.w_floor,
        })
    }

    /// Limiter factor for a new error norm without touching the state.
    pub fn factor_for(&self, w_new: f64, p: u32) -> f64 {
        let eps = self.inverse_error(w_new);
        let p = p.max(1) as f64;
        let g = self.gains;
        let x = eps.powf(g.beta1 / p) * self.eps_prev.powf(g.beta2 / p) * self.eps_prev2.powf(g.beta3 / p);
        1.0 + (x - 1.0).atan()
    }

    fn inverse_error(&self, w_new: f64) -> f64 {
        if w_new.is_nan() || w_new == f64::INFINITY {
            0.0
        } else {
            1.0 / w_new.max(self.w_floor)
        }
    }

    /// Decides acceptance of the step just taken with `self.dt` and sets the
    /// step size for the next attempt. The error history only advances on
    /// acceptance.
    pub fn propose_step(&mut self, w_new: f64, p: u32) -> Proposal {
        let factor = self.factor_for(w_new, p);
        let accept = factor >= self.accept_threshold;
        let dt_new = (factor * self.dt).clamp(self.dt_min, self.dt_max);
        if accept {
            self.eps_prev2 = self.eps_prev;
            self.eps_prev = self.inverse_error(w_new);
        }
        self.dt = dt_new;
        Proposal { dt_new, accept, factor }
    }
}

/// Automatic initial step following Hairer, Nørsett & Wanner (II.4).
///
/// `f0` is `f(u0)`; `rhs` is called exactly once more.
pub fn initial_step_size<E>(
    mut rhs: impl FnMut(&[f64], &mut [f64]) -> Result<(), E>,
    u0: &[f64],
    f0: &[f64],
    order: u32,
    tol: Tolerances,
) -> Result<f64, E> {
    let n = u0.len().max(1) as f64;
    let scale: Vec<f64> = u0.iter().map(|x| tol.abs + tol.rel * x.abs()).collect();
    let rms = |v: &[f64]| -> f64 {
        (v.iter()
            .zip(&scale)
            .map(|(x, s)| if *s > 0.0 { (x / s).powi(2) } else { 0.0 })
            .sum::<f64>()
            / n)
            .sqrt()
    };
    let d0 = rms(u0);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let u1: Vec<f64> = u0.iter().zip(f0).map(|(u, f)| u + h0 * f).collect();
    let mut f1 = vec![0.0; u0.len()];
    rhs(&u1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / (order as f64 + 1.0))
    };
    Ok((100.0 * h0).min(h1))
}
