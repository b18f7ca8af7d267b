//! Test problems with a conserved entropy functional.
//!
//! All problems are autonomous. A time-dependent vector field carries the
//! clock as an extra state component with derivative 1; its entropy does not
//! depend on that component.

mod bbm;
mod dg;
mod ode;

pub use bbm::{soliton_amplitude, soliton_wavenumber, BbmFourier, BbmInvariant, FourierGrid, SOLITON_SPEED};
pub use dg::{DgsemGrid, LinearAdvectionDg};
pub use ode::{
    BoundedTimeDependentOscillator, ConservedExponentialEntropy, HarmonicOscillator, NonlinearOscillator,
    NonlinearPendulum, ZeroField,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RhsError {
    #[error("right-hand side is singular at the given state")]
    Singular,
    #[error("right-hand side produced a non-finite value")]
    NonFinite,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("unknown problem `{0}`")]
    Unknown(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// How the error of a run is measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferencePolicy {
    /// Closed-form solution from [`Problem::exact`].
    Analytical,
    /// Fixed-step classical RK4 with steps no longer than `max_dt`.
    Rk4 { max_dt: f64 },
    /// Unrelaxed adaptive DP5 run with `abs = rel = tol`.
    AdaptiveDp5 { tol: f64 },
}

/// An autonomous ODE `u' = f(u)` with an entropy `η` satisfying `η'(u) f(u) = 0`.
///
/// Implementations must be pure: `rhs`, `entropy` and friends may be called
/// concurrently from several integrations.
pub trait Problem: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn t0(&self) -> f64 {
        0.0
    }

    fn initial_state(&self) -> Vec<f64>;

    fn rhs(&self, u: &[f64], du: &mut [f64]) -> Result<(), RhsError>;

    fn entropy(&self, u: &[f64]) -> f64;

    fn entropy_grad(&self, u: &[f64], grad: &mut [f64]);

    /// Closed-form solution, if one is known.
    fn exact(&self, _t: f64) -> Option<Vec<f64>> {
        None
    }

    fn reference_policy(&self) -> ReferencePolicy {
        ReferencePolicy::Analytical
    }

    /// Discrete L2 distance used for reporting errors.
    fn error_norm(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = u.len().max(1) as f64;
        (u.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n).sqrt()
    }

    /// Random state near the initial condition for identity checks.
    fn sample_state(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.initial_state()
            .iter()
            .map(|x| x + rng.gen_range(-0.5..0.5))
            .collect()
    }
}

/// Grid and initial-condition knobs exposed by the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemOptions {
    pub pendulum_u0: [f64; 2],
    pub dg_elements: usize,
    pub dg_degree: usize,
    pub fourier_modes: usize,
}

impl Default for ProblemOptions {
    fn default() -> Self {
        ProblemOptions {
            pendulum_u0: [1.5, 0.0],
            dg_elements: 8,
            dg_degree: 5,
            fourier_modes: 64,
        }
    }
}

pub const PROBLEM_NAMES: &[&str] = &[
    "harmonic_oscillator",
    "nonlinear_oscillator",
    "nonlinear_pendulum",
    "bounded_time_dependent_oscillator",
    "conserved_exponential_entropy",
    "advection_dg",
    "bbm_quadratic",
    "bbm_cubic",
    "zero",
];

pub fn by_name(name: &str, opts: &ProblemOptions) -> Result<Box<dyn Problem>, ProblemError> {
    Ok(match name {
        "harmonic_oscillator" => Box::new(HarmonicOscillator),
        "nonlinear_oscillator" => Box::new(NonlinearOscillator),
        "nonlinear_pendulum" => Box::new(NonlinearPendulum::new(opts.pendulum_u0)),
        "bounded_time_dependent_oscillator" => Box::new(BoundedTimeDependentOscillator),
        "conserved_exponential_entropy" => Box::new(ConservedExponentialEntropy),
        "advection_dg" => Box::new(LinearAdvectionDg::new(DgsemGrid::new(opts.dg_elements, opts.dg_degree, 2.0)?)),
        "bbm_quadratic" => Box::new(BbmFourier::new(
            FourierGrid::new(opts.fourier_modes, 0.0, 2.0)?,
            BbmInvariant::Quadratic,
        )),
        "bbm_cubic" => Box::new(BbmFourier::new(
            FourierGrid::new(opts.fourier_modes, 0.0, 2.0)?,
            BbmInvariant::Cubic,
        )),
        "zero" => Box::new(ZeroField),
        other => return Err(ProblemError::Unknown(other.to_string())),
    })
}

/// Largest relative violation of `η'(u) f(u) = 0` over `samples` random states,
/// measured against `‖η'(u)‖ ‖f(u)‖`.
pub fn max_conservation_defect(problem: &dyn Problem, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = problem.dim();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let u = problem.sample_state(&mut rng);
        if problem.rhs(&u, &mut f).is_err() {
            continue;
        }
        problem.entropy_grad(&u, &mut g);
        let dot: f64 = f.iter().zip(&g).map(|(a, b)| a * b).sum();
        let scale = f.iter().map(|x| x * x).sum::<f64>().sqrt() * g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if scale > 0.0 {
            worst = worst.max(dot.abs() / scale);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_builds_every_problem() {
        let opts = ProblemOptions::default();
        for name in PROBLEM_NAMES {
            let p = by_name(name, &opts).unwrap();
            assert_eq!(p.name(), *name);
            assert_eq!(p.initial_state().len(), p.dim());
        }
        assert!(matches!(by_name("lorenz", &opts), Err(ProblemError::Unknown(_))));
    }

    #[test]
    fn conservation_identity_at_random_states() {
        let opts = ProblemOptions::default();
        for name in PROBLEM_NAMES {
            let p = by_name(name, &opts).unwrap();
            let defect = max_conservation_defect(p.as_ref(), 1000, 7);
            assert!(defect <= 1e-12, "{name}: {defect:e}");
        }
    }

    #[test]
    fn exact_solutions_start_at_initial_state() {
        let opts = ProblemOptions::default();
        for name in PROBLEM_NAMES {
            let p = by_name(name, &opts).unwrap();
            if let Some(e) = p.exact(p.t0()) {
                if p.reference_policy() == ReferencePolicy::Analytical {
                    let u0 = p.initial_state();
                    let d = p.error_norm(&e, &u0);
                    assert!(d <= 1e-15, "{name}: {d:e}");
                }
            }
        }
    }
}
