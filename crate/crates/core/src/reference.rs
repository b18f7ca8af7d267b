//! Exact or high-accuracy reference states used to measure run errors.

use crate::controller::Tolerances;
use crate::problems::{Problem, ReferencePolicy, RhsError};
use crate::stepper::{integrate, IntegrateOptions, Strategy};
use crate::tableau::Tableau;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error("problem `{0}` has no closed-form solution")]
    NoExactSolution(String),
    #[error(transparent)]
    Rhs(#[from] RhsError),
    #[error("reference integration failed: {0}")]
    Integration(String),
    #[error("invalid reference tolerance {0}")]
    Tolerance(f64),
}

/// State of `problem` at time `t`, according to its reference policy.
pub fn reference_solution(problem: &dyn Problem, t: f64) -> Result<Vec<f64>, ReferenceError> {
    match problem.reference_policy() {
        ReferencePolicy::Analytical => problem
            .exact(t)
            .ok_or_else(|| ReferenceError::NoExactSolution(problem.name().to_string())),
        ReferencePolicy::Rk4 { max_dt } => rk4_fixed(problem, t, max_dt),
        ReferencePolicy::AdaptiveDp5 { tol } => {
            let t0 = problem.t0();
            if t == t0 {
                return Ok(problem.initial_state());
            }
            let tol = Tolerances::uniform(tol).map_err(|_| ReferenceError::Tolerance(tol))?;
            let opts = IntegrateOptions {
                compute_error: false,
                ..IntegrateOptions::adaptive(t, tol)
            };
            let rec = integrate(problem, &Tableau::dp5(), Strategy::Baseline, &opts);
            match rec.failure {
                None => Ok(rec.u_final),
                Some(f) => Err(ReferenceError::Integration(f.to_string())),
            }
        }
    }
}

/// Classical RK4 from `t0` to `t` in equal steps no longer than `max_dt`.
pub fn rk4_fixed(problem: &dyn Problem, t: f64, max_dt: f64) -> Result<Vec<f64>, ReferenceError> {
    let t0 = problem.t0();
    let mut u = problem.initial_state();
    let span = t - t0;
    if span <= 0.0 {
        return Ok(u);
    }
    let steps = (span / max_dt).ceil().max(1.0) as u64;
    let h = span / steps as f64;
    let n = u.len();
    let (mut k1, mut k2, mut k3, mut k4, mut y) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for _ in 0..steps {
        problem.rhs(&u, &mut k1)?;
        for i in 0..n {
            y[i] = u[i] + 0.5 * h * k1[i];
        }
        problem.rhs(&y, &mut k2)?;
        for i in 0..n {
            y[i] = u[i] + 0.5 * h * k2[i];
        }
        problem.rhs(&y, &mut k3)?;
        for i in 0..n {
            y[i] = u[i] + h * k3[i];
        }
        problem.rhs(&y, &mut k4)?;
        for i in 0..n {
            u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{HarmonicOscillator, NonlinearPendulum};

    #[test]
    fn pendulum_reference_is_self_consistent() {
        let p = NonlinearPendulum::default();
        let coarse = rk4_fixed(&p, 10.0, 1e-5).unwrap();
        let fine = rk4_fixed(&p, 10.0, 0.5e-5).unwrap();
        let d = ((coarse[0] - fine[0]).powi(2) + (coarse[1] - fine[1]).powi(2)).sqrt();
        assert!(d < 1e-10, "{d:e}");
        let eta0 = p.entropy(&p.initial_state());
        assert!((p.entropy(&fine) - eta0).abs() < 1e-12);
    }

    #[test]
    fn rk4_oracle_matches_rotation() {
        let u = rk4_fixed(&HarmonicOscillator, 3.0, 1e-3).unwrap();
        assert!((u[0] - 3f64.cos()).abs() < 1e-11 && (u[1] - 3f64.sin()).abs() < 1e-11);
    }
}
