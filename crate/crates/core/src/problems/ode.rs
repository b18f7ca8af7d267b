use super::{Problem, ReferencePolicy, RhsError};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::E;

fn norm_sq(u: &[f64]) -> f64 {
    u[0] * u[0] + u[1] * u[1]
}

/// `u1' = -u2, u2' = u1` with `η = ‖u‖²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct HarmonicOscillator;

impl Problem for HarmonicOscillator {
    fn name(&self) -> &str {
        "harmonic_oscillator"
    }

    fn dim(&self) -> usize {
        2
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![1.0, 0.0]
    }

    fn rhs(&self, u: &[f64], du: &mut [f64]) -> Result<(), RhsError> {
        du[0] = -u[1];
        du[1] = u[0];
        Ok(())
    }

    fn entropy(&self, u: &[f64]) -> f64 {
        norm_sq(u)
    }

    fn entropy_grad(&self, u: &[f64], grad: &mut [f64]) {
        grad[0] = 2.0 * u[0];
        grad[1] = 2.0 * u[1];
    }

    fn exact(&self, t: f64) -> Option<Vec<f64>> {
        Some(vec![t.cos(), t.sin()])
    }
}

/// Harmonic oscillator with the vector field scaled by `‖u‖⁻²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NonlinearOscillator;

impl Problem for NonlinearOscillator {
    fn name(&self) -> &str {
        "nonlinear_oscillator"
    }

    fn dim(&self) -> usize {
        2
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![1.0, 0.0]
    }

    fn rhs(&self, u: &[f64], du: &mut [f64]) -> Result<(), RhsError> {
        let r2 = norm_sq(u);
        if r2 == 0.0 {
            return Err(RhsError::Singular);
        }
        du[0] = -u[1] / r2;
        du[1] = u[0] / r2;
        Ok(())
    }

    fn entropy(&self, u: &[f64]) -> f64 {
        norm_sq(u)
    }

    fn entropy_grad(&self, u: &[f64], grad: &mut [f64]) {
        grad[0] = 2.0 * u[0];
        grad[1] = 2.0 * u[1];
    }

    fn exact(&self, t: f64) -> Option<Vec<f64>> {
        Some(vec![t.cos(), t.sin()])
    }
}

/// `u1' = -sin(u2), u2' = u1` with `η = u1²/2 - cos(u2)`.
#[derive(Debug, Clone, Copy)]
pub struct NonlinearPendulum {
    u0: [f64; 2],
}

impl NonlinearPendulum {
    pub fn new(u0: [f64; 2]) -> Self {
        NonlinearPendulum { u0 }
    }
}

impl Default for NonlinearPendulum {
    fn default() -> Self {
        Self::new([1.5, 0.0])
    }
}

impl Problem for NonlinearPendulum {
    fn name(&self) -> &str {
        "nonlinear_pendulum"
    }

    fn dim(&self) -> usize {
        2
    }

    fn initial_state(&self) -> Vec<f64> {
        self.u0.to_vec()
    }

    fn rhs(&self, u: &[f64], du: &mut [f64]) -> Result<(), RhsError> {
        du[0] = -u[1].sin();
        du[1] = u[0];
        Ok(())
    }

    fn entropy(&self, u: &[f64]) -> f64 {
        0.5 * u[0] * u[0] - u[1].cos()
    }

    fn entropy_grad(&self, u: &[f64], grad: &mut [f64]) {
        grad[0] = u[0];
        grad[1] = u[1].sin();
    }

    fn reference_policy(&self) -> ReferencePolicy {
        ReferencePolicy::Rk4 { max_dt: 1e-5 }
    }
}

/// Harmonic oscillator with angular velocity `ω(t) = 1 + sin(t)/2`.
///
/// State is `(u1, u2, t)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BoundedTimeDependentOscillator;

impl BoundedTimeDependentOscillator {
    fn omega(t: f64) -> f64 {
        1.0 + 0.5 * t.sin()
    }
}

impl Problem for BoundedTimeDependentOscillator {
    fn name(&self) -> &str {
        "bounded_time_dependent_oscillator"
    }

    fn dim(&self) -> usize {
        3
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![1.0, 0.0, 0.0]
    }

    fn rhs(&self, u: &[f64], du: &mut [f64]) -> Result<(), RhsError> {
        let w = Self::omega(u[2]);
        du[0] = -w * u[1];
        du[1] = w * u[0];
        du[2] = 1.0;
        Ok(())
    }

    fn entropy(&self, u: &[f64]) -> f64 {
        norm_sq(u)
    }

    fn entropy_grad(&self, u: &[f64], grad: &mut [f64]) {
        grad[0] = 2.0 * u[0];
        grad[1] = 2.0 * u[1];
        grad[2] = 0.0;
    }

    /// Rotation by `θ(t) = t - cos(t)/2 + 1/2`, which is the sum-of-angles
    /// form of the published solution.
    fn exact(&self, t: f64) -> Option<Vec<f64>> {
        let theta = t - 0.5 * t.cos() + 0.5;
        Some(vec![theta.cos(), theta.sin(), t])
    }

    /// Error in the oscillator components only.
    fn error_norm(&self, u: &[f64], v: &[f64]) -> f64 {
        ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2)).sqrt() / 2f64.sqrt()
    }

    fn sample_state(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(0.0..100.0)]
    }
}

/// `u1' = -exp(u2), u2' = exp(u1)` with `η = exp(u1) + exp(u2)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConservedExponentialEntropy;

fn log_add_exp(x: f64, y: f64) -> f64 {
    let m = x.max(y);
    m + (-(x - y).abs()).exp().ln_1p()
}

impl ConservedExponentialEntropy {
    /// `e^{1/2} + e`, the rate in the closed-form solution and also `η(u0)`.
    pub fn rate() -> f64 {
        0.5f64.exp() + E
    }
}

impl Problem for ConservedExponentialEntropy {
    fn name(&self) -> &str {
        "conserved_exponential_entropy"
    }

    fn dim(&self) -> usize {
        2
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![1.0, 0.5]
    }

    fn rhs(&self, u: &[f64], du: &mut [f64]) -> Result<(), RhsError> {
        du[0] = -u[1].exp();
        du[1] = u[0].exp();
        Ok(())
    }

    fn entropy(&self, u: &[f64]) -> f64 {
        u[0].exp() + u[1].exp()
    }

    fn entropy_grad(&self, u: &[f64], grad: &mut [f64]) {
        grad[0] = u[0].exp();
        grad[1] = u[1].exp();
    }

    /// The published `u2` has unbalanced parentheses; the form used here is
    /// `log(e^{at} a / (e^{1/2} + e^{at}))` with `a = e^{1/2} + e`, the only
    /// reading that satisfies the ODE and the initial condition.
    fn exact(&self, t: f64) -> Option<Vec<f64>> {
        if t == 0.0 {
            return Some(self.initial_state());
        }
        let a = Self::rate();
        let denom = log_add_exp(0.5, a * t);
        let u1 = (E + 1.5f64.exp()).ln() - denom;
        let u2 = a * t + a.ln() - denom;
        Some(vec![u1, u2])
    }
}

/// `u' = 0`, used to check bookkeeping.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroField;

impl Problem for ZeroField {
    fn name(&self) -> &str {
        "zero"
    }

    fn dim(&self) -> usize {
        2
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![1.0, -0.5]
    }

    fn rhs(&self, _u: &[f64], du: &mut [f64]) -> Result<(), RhsError> {
        du.fill(0.0);
        Ok(())
    }

    fn entropy(&self, u: &[f64]) -> f64 {
        norm_sq(u)
    }

    fn entropy_grad(&self, u: &[f64], grad: &mut [f64]) {
        grad[0] = 2.0 * u[0];
        grad[1] = 2.0 * u[1];
    }

    fn exact(&self, _t: f64) -> Option<Vec<f64>> {
        Some(self.initial_state())
    }
}
