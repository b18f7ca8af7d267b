//! Single steps and the outer integration loop for the baseline scheme and
//! the three ways of combining relaxation with an FSAL pair.

use crate::controller::{initial_step_size, weighted_error_norm, ControllerConfig, ControllerError, ControllerState, Tolerances};
use crate::problems::{Problem, RhsError};
use crate::reference::{reference_solution, ReferenceError};
use crate::relaxation::{relaxed_state, solve_gamma, RelaxationConfig};
use crate::tableau::Tableau;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("unknown option `{value}` for {what}")]
    UnknownOption { what: &'static str, value: String },
}

/// First-stage approximation used by FSAL-R after relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FsalRStage1 {
    /// Reuse `f(u^{n+1})`.
    Simple,
    /// `f(u^n_γ) + γ (f(u^{n+1}) - f(u^n_γ))`.
    #[default]
    Interpolation,
}

/// Embedded solution used by R-FSAL.
///
/// V1 and V3 use `f(u^{n+1}_γ)` for the last embedded stage, V2 and V4 the
/// back-interpolated `f(u^n_γ) + (f(u^{n+1}_γ) - f(u^n_γ)) / γ`. V3 and V4
/// scale the embedded increment by `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RFsalEmbedded {
    V1,
    V2,
    V3,
    #[default]
    V4,
}

/// Pair of states handed to the error norm by R-FSAL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RFsalCompare {
    /// `u^{n+1}` against `û^{n+1}`.
    C1,
    /// `u^{n+1}_γ` against the relaxed `û^{n+1}_γ`.
    C2,
    /// `u^{n+1}_γ` against `û^{n+1}`.
    #[default]
    C3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Plain embedded pair, no relaxation.
    Baseline,
    /// Relax accepted steps and recompute the first stage of the next step.
    Naive,
    /// Relax accepted steps and approximate the next first stage.
    FsalR(FsalRStage1),
    /// Relax before step size control and evaluate the FSAL stage at the
    /// relaxed point.
    RFsal {
        embedded: RFsalEmbedded,
        compare: RFsalCompare,
    },
}

impl Strategy {
    pub const NAMES: [&'static str; 4] = ["baseline", "naive", "fsal-r", "r-fsal"];

    pub fn fsal_r() -> Self {
        Strategy::FsalR(FsalRStage1::default())
    }

    pub fn r_fsal() -> Self {
        Strategy::RFsal {
            embedded: RFsalEmbedded::default(),
            compare: RFsalCompare::default(),
        }
    }

    /// Builds a strategy from its name and the variant options that apply to it.
    pub fn from_parts(
        name: &str,
        stage1: FsalRStage1,
        embedded: RFsalEmbedded,
        compare: RFsalCompare,
    ) -> Result<Self, StrategyError> {
        match name {
            "baseline" => Ok(Strategy::Baseline),
            "naive" => Ok(Strategy::Naive),
            "fsal-r" | "fsalr" => Ok(Strategy::FsalR(stage1)),
            "r-fsal" | "rfsal" => Ok(Strategy::RFsal { embedded, compare }),
            other => Err(StrategyError::UnknownStrategy(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Naive => "naive",
            Strategy::FsalR(_) => "fsal-r",
            Strategy::RFsal { .. } => "r-fsal",
        }
    }

    /// Variant label for CSV output, `-` when the strategy has none.
    pub fn variant(&self) -> String {
        match self {
            Strategy::Baseline | Strategy::Naive => "-".to_string(),
            Strategy::FsalR(s) => s.to_string(),
            Strategy::RFsal { embedded, compare } => format!("{embedded}-{compare}"),
        }
    }

    pub fn relaxes(&self) -> bool {
        !matches!(self, Strategy::Baseline)
    }

    pub fn needs_fsal_pair(&self) -> bool {
        matches!(self, Strategy::FsalR(_) | Strategy::RFsal { .. })
    }

    /// Every relaxation strategy and variant combination.
    pub fn all_relaxation() -> Vec<Strategy> {
        let mut out = vec![
            Strategy::Naive,
            Strategy::FsalR(FsalRStage1::Simple),
            Strategy::FsalR(FsalRStage1::Interpolation),
        ];
        for embedded in [RFsalEmbedded::V1, RFsalEmbedded::V2, RFsalEmbedded::V3, RFsalEmbedded::V4] {
            for compare in [RFsalCompare::C1, RFsalCompare::C2, RFsalCompare::C3] {
                out.push(Strategy::RFsal { embedded, compare });
            }
        }
        out
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Baseline | Strategy::Naive => f.write_str(self.name()),
            _ => write!(f, "{}({})", self.name(), self.variant()),
        }
    }
}

impl fmt::Display for FsalRStage1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FsalRStage1::Simple => "simple",
            FsalRStage1::Interpolation => "interpolation",
        })
    }
}

impl fmt::Display for RFsalEmbedded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RFsalEmbedded::V1 => "v1",
            RFsalEmbedded::V2 => "v2",
            RFsalEmbedded::V3 => "v3",
            RFsalEmbedded::V4 => "v4",
        })
    }
}

impl fmt::Display for RFsalCompare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RFsalCompare::C1 => "c1",
            RFsalCompare::C2 => "c2",
            RFsalCompare::C3 => "c3",
        })
    }
}

impl FromStr for FsalRStage1 {
    type Err = StrategyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "simple" => Ok(FsalRStage1::Simple),
            "interpolation" | "interp" => Ok(FsalRStage1::Interpolation),
            _ => Err(StrategyError::UnknownOption {
                what: "fsal-r first stage",
                value: s.to_string(),
            }),
        }
    }
}

impl FromStr for RFsalEmbedded {
    type Err = StrategyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "v1" | "1" => Ok(RFsalEmbedded::V1),
            "v2" | "2" => Ok(RFsalEmbedded::V2),
            "v3" | "3" => Ok(RFsalEmbedded::V3),
            "v4" | "4" => Ok(RFsalEmbedded::V4),
            _ => Err(StrategyError::UnknownOption {
                what: "r-fsal embedded variant",
                value: s.to_string(),
            }),
        }
    }
}

impl FromStr for RFsalCompare {
    type Err = StrategyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "c1" | "1" => Ok(RFsalCompare::C1),
            "c2" | "2" => Ok(RFsalCompare::C2),
            "c3" | "3" => Ok(RFsalCompare::C3),
            _ => Err(StrategyError::UnknownOption {
                what: "r-fsal comparison",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error(transparent)]
    Rhs(#[from] RhsError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("{strategy} requires an FSAL pair, `{method}` is not one")]
    NeedsFsal { strategy: &'static str, method: &'static str },
    #[error("adaptive stepping requires embedded weights, `{0}` has none")]
    NeedsEmbedded(&'static str),
    #[error("state dimension {got} does not match problem dimension {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Stage derivatives, candidate update and `f` call count of one step.
pub type Stages = (Vec<Vec<f64>>, Vec<f64>, u64);

/// Evaluates the stages of one explicit RK step and the main update.
///
/// Only the stages needed for `u^{n+1}` are evaluated, which for FSAL pairs
/// excludes the final `f(u^{n+1})` stage. When `k1` is given it is used as
/// the first stage instead of calling `f`. Returns the stages, the
/// candidate, and the number of `f` calls made.
pub fn rk_stages<E>(
    mut f: impl FnMut(&[f64], &mut [f64]) -> Result<(), E>,
    u_start: &[f64],
    dt: f64,
    tableau: &Tableau,
    k1: Option<&[f64]>,
) -> Result<Stages, E> {
    let n = u_start.len();
    let m = tableau.main_stage_count();
    let mut k = vec![vec![0.0; n]; m];
    let mut y = vec![0.0; n];
    let mut u_cand = vec![0.0; n];
    let calls = stages_into(&mut f, u_start, dt, tableau, k1, &mut k, &mut y, &mut u_cand)?;
    Ok((k, u_cand, calls))
}

#[allow(clippy::too_many_arguments)]
fn stages_into<E>(
    f: &mut impl FnMut(&[f64], &mut [f64]) -> Result<(), E>,
    u: &[f64],
    dt: f64,
    tableau: &Tableau,
    k1: Option<&[f64]>,
    k: &mut [Vec<f64>],
    y: &mut [f64],
    u_cand: &mut [f64],
) -> Result<u64, E> {
    let m = tableau.main_stage_count();
    let a = tableau.a();
    let mut calls = 0;
    match k1 {
        Some(cached) => k[0].copy_from_slice(cached),
        None => {
            f(u, &mut k[0])?;
            calls += 1;
        }
    }
    for (i, row) in a.iter().enumerate().take(m).skip(1) {
        y.copy_from_slice(u);
        let (done, rest) = k.split_at_mut(i);
        for (kj, &aij) in done.iter().zip(row) {
            if aij != 0.0 {
                for (yv, kv) in y.iter_mut().zip(kj) {
                    *yv += dt * aij * kv;
                }
            }
        }
        f(y, &mut rest[0])?;
        calls += 1;
    }
    combine(u, dt, &tableau.b()[..m], &k[..m], None, u_cand);
    Ok(calls)
}

/// `out = base + dt (Σ w_i k_i + extra.0 * extra.1)`.
fn combine(base: &[f64], dt: f64, w: &[f64], k: &[Vec<f64>], extra: Option<(f64, &[f64])>, out: &mut [f64]) {
    for (idx, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (wi, ki) in w.iter().zip(k) {
            acc += wi * ki[idx];
        }
        if let Some((we, ke)) = extra {
            acc += we * ke[idx];
        }
        *o = base[idx] + dt * acc;
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub gamma: f64,
    pub t_new: f64,
    pub dt_used: f64,
    pub dt_next: f64,
    /// Weighted error norm, absent in fixed-step mode.
    pub error_norm: Option<f64>,
    pub rhs_calls: u64,
    pub relaxation_fallback: bool,
    /// `‖cached k^1 - f(u^{n+1}_γ)‖₂` when cache diagnostics are enabled and
    /// the strategy approximates the first stage.
    pub cache_error: Option<f64>,
}

/// State of one integration: current solution, FSAL cache and workspace.
pub struct Integrator<'a> {
    problem: &'a dyn Problem,
    tableau: &'a Tableau,
    strategy: Strategy,
    relaxation: RelaxationConfig,
    tolerances: Option<Tolerances>,
    diagnose_cache: bool,
    t: f64,
    u: Vec<f64>,
    cache: Option<Vec<f64>>,
    k: Vec<Vec<f64>>,
    y: Vec<f64>,
    u_cand: Vec<f64>,
    u_hat: Vec<f64>,
    u_gamma: Vec<f64>,
    fsal: Vec<f64>,
    scratch: Vec<f64>,
    rhs_calls: u64,
}

impl<'a> Integrator<'a> {
    /// `tolerances` selects adaptive mode; `None` means every step is accepted.
    pub fn new(
        problem: &'a dyn Problem,
        tableau: &'a Tableau,
        strategy: Strategy,
        relaxation: RelaxationConfig,
        tolerances: Option<Tolerances>,
    ) -> Result<Self, StepError> {
        if strategy.needs_fsal_pair() && !tableau.is_fsal() {
            return Err(StepError::NeedsFsal {
                strategy: strategy.name(),
                method: tableau.name(),
            });
        }
        if tolerances.is_some() && tableau.b_hat().is_none() {
            return Err(StepError::NeedsEmbedded(tableau.name()));
        }
        let n = problem.dim();
        let u = problem.initial_state();
        if u.len() != n {
            return Err(StepError::Dimension {
                expected: n,
                got: u.len(),
            });
        }
        Ok(Integrator {
            problem,
            tableau,
            strategy,
            relaxation,
            tolerances,
            diagnose_cache: false,
            t: problem.t0(),
            u,
            cache: None,
            k: vec![vec![0.0; n]; tableau.main_stage_count()],
            y: vec![0.0; n],
            u_cand: vec![0.0; n],
            u_hat: vec![0.0; n],
            u_gamma: vec![0.0; n],
            fsal: vec![0.0; n],
            scratch: vec![0.0; n],
            rhs_calls: 0,
        })
    }

    /// Evaluates `f` at the cached-stage point after each approximation to
    /// report its error. These calls are not counted.
    pub fn with_cache_diagnostics(mut self, on: bool) -> Self {
        self.diagnose_cache = on;
        self
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &[f64] {
        &self.u
    }

    pub fn rhs_calls(&self) -> u64 {
        self.rhs_calls
    }

    pub fn cached_stage(&self) -> Option<&[f64]> {
        self.cache.as_deref()
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    fn eval(&mut self, which: Slot) -> Result<(), RhsError> {
        self.rhs_calls += 1;
        let (src, dst) = match which {
            Slot::FsalAtCandidate => (&self.u_cand, &mut self.fsal),
            Slot::FsalAtRelaxed => (&self.u_gamma, &mut self.fsal),
            Slot::Current => (&self.u, &mut self.scratch),
        };
        self.problem.rhs(src, dst)
    }

    /// `f(u^n)` for the initial step heuristic, cached as the first stage.
    fn seed_cache(&mut self) -> Result<(), RhsError> {
        if self.cache.is_none() && self.tableau.is_fsal() {
            self.eval(Slot::Current)?;
            self.cache = Some(self.scratch.clone());
        }
        Ok(())
    }

    fn relax(&mut self) -> (f64, bool) {
        let problem = self.problem;
        match solve_gamma(&self.u, &self.u_cand, |v| problem.entropy(v), &self.relaxation) {
            Ok(r) => {
                relaxed_state(&self.u, &self.u_cand, r.gamma, &mut self.u_gamma);
                (r.gamma, false)
            }
            Err(_) => {
                self.u_gamma.copy_from_slice(&self.u_cand);
                (1.0, true)
            }
        }
    }

    fn main_stages(&mut self, dt: f64) -> Result<(), RhsError> {
        let problem = self.problem;
        let mut calls = 0u64;
        let mut f = |x: &[f64], out: &mut [f64]| {
            calls += 1;
            problem.rhs(x, out)
        };
        let cached = if self.tableau.is_fsal() { self.cache.as_deref() } else { None };
        let res = stages_into(&mut f, &self.u, dt, self.tableau, cached, &mut self.k, &mut self.y, &mut self.u_cand);
        self.rhs_calls += calls;
        res.map(|_| ())
    }

    /// `û = u^n + scale dt (Σ b̂_i k_i + b̂_{s+1} last)`.
    fn embedded(&mut self, dt: f64, scale: f64, last: &[f64]) {
        let b_hat = self.tableau.b_hat().expect("checked in new");
        let m = self.tableau.main_stage_count();
        let w_last = self.tableau.fsal_weight();
        combine(&self.u, scale * dt, &b_hat[..m], &self.k, Some((w_last, last)), &mut self.u_hat);
    }

    fn decide(
        &self,
        a: &[f64],
        b: &[f64],
        controller: Option<&mut ControllerState>,
        dt: f64,
    ) -> Result<(bool, f64, Option<f64>), ControllerError> {
        match (controller, self.tolerances) {
            (Some(ctrl), Some(tol)) => {
                let w = weighted_error_norm(a, b, tol)?;
                ctrl.dt = dt;
                let order = self.controller_order();
                let prop = ctrl.propose_step(w, order);
                Ok((prop.accept, prop.dt_new, Some(w)))
            }
            _ => Ok((true, dt, None)),
        }
    }

    /// `min(p, p̂ + 1)`.
    pub fn controller_order(&self) -> u32 {
        let p = self.tableau.order();
        self.tableau.embedded_order().map_or(p, |q| p.min(q + 1))
    }

    /// Attempts one step of size `dt`. With a controller the step may be
    /// rejected, in which case the state is unchanged and `dt_next` is the
    /// size to retry with.
    pub fn step(&mut self, dt: f64, controller: Option<&mut ControllerState>) -> Result<StepOutcome, StepError> {
        let before = self.rhs_calls;
        let adaptive = controller.is_some() && self.tolerances.is_some();
        let mut out = match self.strategy {
            Strategy::Baseline | Strategy::Naive | Strategy::FsalR(_) => self.step_after_control(dt, controller, adaptive)?,
            Strategy::RFsal { embedded, compare } => self.step_rfsal(dt, controller, embedded, compare)?,
        };
        out.rhs_calls = self.rhs_calls - before;
        Ok(out)
    }

    /// Baseline, naive and FSAL-R share everything up to the controller
    /// decision; they differ in what happens to an accepted step.
    fn step_after_control(
        &mut self,
        dt: f64,
        controller: Option<&mut ControllerState>,
        adaptive: bool,
    ) -> Result<StepOutcome, StepError> {
        self.seed_cache()?;
        self.main_stages(dt)?;
        let fsal_pair = self.tableau.is_fsal();
        let needs_fsal = fsal_pair && (adaptive || !matches!(self.strategy, Strategy::Naive));
        if needs_fsal {
            self.eval(Slot::FsalAtCandidate)?;
        }
        let (accepted, dt_next, w) = if adaptive {
            let last = self.fsal.clone();
            self.embedded(dt, 1.0, &last);
            let (u_c, u_h) = (self.u_cand.clone(), self.u_hat.clone());
            self.decide(&u_c, &u_h, controller, dt)?
        } else {
            (true, dt, None)
        };
        let mut outcome = StepOutcome {
            accepted,
            gamma: 1.0,
            t_new: self.t,
            dt_used: dt,
            dt_next,
            error_norm: w,
            rhs_calls: 0,
            relaxation_fallback: false,
            cache_error: None,
        };
        if !accepted {
            return Ok(outcome);
        }
        match self.strategy {
            Strategy::Baseline => {
                self.u.copy_from_slice(&self.u_cand);
                self.t += dt;
                self.cache = fsal_pair.then(|| self.fsal.clone());
            }
            Strategy::Naive => {
                let (gamma, fallback) = self.relax();
                self.u.copy_from_slice(&self.u_gamma);
                self.t += gamma * dt;
                self.cache = None;
                outcome.gamma = gamma;
                outcome.relaxation_fallback = fallback;
            }
            Strategy::FsalR(stage1) => {
                let (gamma, fallback) = self.relax();
                let approx: Vec<f64> = match stage1 {
                    FsalRStage1::Simple => self.fsal.clone(),
                    FsalRStage1::Interpolation => self.k[0]
                        .iter()
                        .zip(&self.fsal)
                        .map(|(k1, kf)| k1 + gamma * (kf - k1))
                        .collect(),
                };
                if self.diagnose_cache {
                    let mut exact = vec![0.0; approx.len()];
                    self.problem.rhs(&self.u_gamma, &mut exact)?;
                    outcome.cache_error = Some(euclid(&approx, &exact));
                }
                self.u.copy_from_slice(&self.u_gamma);
                self.t += gamma * dt;
                self.cache = Some(approx);
                outcome.gamma = gamma;
                outcome.relaxation_fallback = fallback;
            }
            Strategy::RFsal { .. } => unreachable!("handled by step_rfsal"),
        }
        outcome.t_new = self.t;
        Ok(outcome)
    }

    fn step_rfsal(
        &mut self,
        dt: f64,
        controller: Option<&mut ControllerState>,
        embedded: RFsalEmbedded,
        compare: RFsalCompare,
    ) -> Result<StepOutcome, StepError> {
        self.seed_cache()?;
        self.main_stages(dt)?;
        let (gamma, fallback) = self.relax();
        self.eval(Slot::FsalAtRelaxed)?;
        let mut w = None;
        let mut accepted = true;
        let mut dt_next = dt;
        if self.tolerances.is_some() && controller.is_some() {
            let last: Vec<f64> = match embedded {
                RFsalEmbedded::V1 | RFsalEmbedded::V3 => self.fsal.clone(),
                RFsalEmbedded::V2 | RFsalEmbedded::V4 => self.k[0]
                    .iter()
                    .zip(&self.fsal)
                    .map(|(k1, kg)| k1 + (kg - k1) / gamma)
                    .collect(),
            };
            let scale = match embedded {
                RFsalEmbedded::V1 | RFsalEmbedded::V2 => 1.0,
                RFsalEmbedded::V3 | RFsalEmbedded::V4 => gamma,
            };
            self.embedded(dt, scale, &last);
            let (a, b) = match compare {
                RFsalCompare::C1 => (self.u_cand.clone(), self.u_hat.clone()),
                RFsalCompare::C2 => {
                    let mut hat_gamma = vec![0.0; self.u.len()];
                    relaxed_state(&self.u, &self.u_hat, gamma, &mut hat_gamma);
                    (self.u_gamma.clone(), hat_gamma)
                }
                RFsalCompare::C3 => (self.u_gamma.clone(), self.u_hat.clone()),
            };
            let decision = self.decide(&a, &b, controller, dt)?;
            accepted = decision.0;
            dt_next = decision.1;
            w = decision.2;
        }
        let mut outcome = StepOutcome {
            accepted,
            gamma,
            t_new: self.t,
            dt_used: dt,
            dt_next,
            error_norm: w,
            rhs_calls: 0,
            relaxation_fallback: fallback,
            cache_error: None,
        };
        if accepted {
            self.u.copy_from_slice(&self.u_gamma);
            self.t += gamma * dt;
            self.cache = Some(self.fsal.clone());
            outcome.t_new = self.t;
        }
        Ok(outcome)
    }
}

#[derive(Clone, Copy)]
enum Slot {
    FsalAtCandidate,
    FsalAtRelaxed,
    Current,
}

/// Fixed step size or embedded-pair control.
#[derive(Debug, Clone, PartialEq)]
pub enum StepControl {
    Fixed { dt: f64 },
    Adaptive {
        tol: Tolerances,
        controller: ControllerConfig,
        /// Initial step; the automatic heuristic is used when absent.
        dt0: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrateOptions {
    pub t_end: f64,
    pub control: StepControl,
    pub relaxation: RelaxationConfig,
    pub max_steps: u64,
    /// Measure the final error against the exact or reference solution.
    pub compute_error: bool,
    pub record_trajectory: bool,
    pub diagnose_cache: bool,
}

impl IntegrateOptions {
    pub fn fixed(t_end: f64, dt: f64) -> Self {
        IntegrateOptions {
            t_end,
            control: StepControl::Fixed { dt },
            relaxation: RelaxationConfig::default(),
            max_steps: 10_000_000,
            compute_error: true,
            record_trajectory: false,
            diagnose_cache: false,
        }
    }

    pub fn adaptive(t_end: f64, tol: Tolerances) -> Self {
        IntegrateOptions {
            control: StepControl::Adaptive {
                tol,
                controller: ControllerConfig::default(),
                dt0: None,
            },
            ..Self::fixed(t_end, 0.0)
        }
    }

    /// The step size for fixed runs, the absolute tolerance for adaptive ones.
    pub fn tol_or_dt(&self) -> f64 {
        match &self.control {
            StepControl::Fixed { dt } => *dt,
            StepControl::Adaptive { tol, .. } => tol.abs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    /// A failure that the experiment anticipates; excluded from comparisons.
    ExpectedFailure,
    Failed,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::ExpectedFailure => "expected-failure",
            RunStatus::Failed => "failed",
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FailureKind {
    #[error("maximum number of steps ({0}) reached")]
    MaxSteps(u64),
    #[error("step size collapsed to {dt:e} at t = {t}")]
    DtCollapse { t: f64, dt: f64 },
    #[error("non-finite solution at t = {t}")]
    Divergence { t: f64 },
    #[error("step failed at t = {t}: {source}")]
    Step { t: f64, source: StepError },
    #[error("reference solution unavailable: {0}")]
    Reference(ReferenceError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub u: Vec<f64>,
    pub gamma: f64,
    pub dt: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub problem: String,
    pub method: String,
    pub strategy: String,
    pub variant: String,
    pub tol_or_dt: f64,
    /// NaN when not computed or the run failed.
    pub final_error: f64,
    /// `max_n |η(u^n) - η(u^0)|`.
    pub entropy_drift: f64,
    pub rhs_calls: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub status: RunStatus,
    pub runtime_ns: u128,
    pub t_final: f64,
    pub u_final: Vec<f64>,
    pub relaxation_fallbacks: u64,
    /// `max_n |γ_n - 1|` over accepted steps, excluding a clipped final step.
    pub gamma_deviation: f64,
    /// Largest first-stage approximation error, with cache diagnostics on.
    pub max_cache_error: Option<f64>,
    pub failure: Option<FailureKind>,
    pub trajectory: Vec<TrajectoryPoint>,
}

impl RunRecord {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

/// Integrates `problem` from its initial state to `opts.t_end`.
///
/// The last step is clipped to land on `t_end`; relaxation then rescales it,
/// so the actual final time is reported in `t_final` and the error is
/// measured there. Failures produce a record with `status = Failed`.
pub fn integrate(problem: &dyn Problem, tableau: &Tableau, strategy: Strategy, opts: &IntegrateOptions) -> RunRecord {
    let start = Instant::now();
    let mut rec = RunRecord {
        problem: problem.name().to_string(),
        method: tableau.name().to_string(),
        strategy: strategy.name().to_string(),
        variant: strategy.variant(),
        tol_or_dt: opts.tol_or_dt(),
        final_error: f64::NAN,
        entropy_drift: 0.0,
        rhs_calls: 0,
        accepted: 0,
        rejected: 0,
        gamma_min: f64::NAN,
        gamma_max: f64::NAN,
        status: RunStatus::Ok,
        runtime_ns: 0,
        t_final: problem.t0(),
        u_final: Vec::new(),
        relaxation_fallbacks: 0,
        gamma_deviation: 0.0,
        max_cache_error: None,
        failure: None,
        trajectory: Vec::new(),
    };
    if let Err(failure) = run_loop(problem, tableau, strategy, opts, &mut rec) {
        rec.failure = Some(failure);
        rec.status = RunStatus::Failed;
    }
    if rec.failure.is_none() && opts.compute_error {
        match reference_solution(problem, rec.t_final) {
            Ok(reference) => rec.final_error = problem.error_norm(&rec.u_final, &reference),
            Err(e) => {
                rec.failure = Some(FailureKind::Reference(e));
                rec.status = RunStatus::Failed;
            }
        }
    }
    rec.runtime_ns = start.elapsed().as_nanos();
    rec
}

fn run_loop(
    problem: &dyn Problem,
    tableau: &Tableau,
    strategy: Strategy,
    opts: &IntegrateOptions,
    rec: &mut RunRecord,
) -> Result<(), FailureKind> {
    let t0 = problem.t0();
    let span = opts.t_end - t0;
    let tolerances = match &opts.control {
        StepControl::Fixed { .. } => None,
        StepControl::Adaptive { tol, .. } => Some(*tol),
    };
    let step_err = |t: f64| move |source: StepError| FailureKind::Step { t, source };
    let mut integ = Integrator::new(problem, tableau, strategy, opts.relaxation, tolerances)
        .map_err(step_err(t0))?
        .with_cache_diagnostics(opts.diagnose_cache);
    let eta0 = problem.entropy(integ.state());
    let record_point = |rec: &mut RunRecord, integ: &Integrator, gamma: f64, dt: f64| {
        if opts.record_trajectory {
            rec.trajectory.push(TrajectoryPoint {
                t: integ.t(),
                u: integ.state().to_vec(),
                gamma,
                dt,
                entropy: problem.entropy(integ.state()),
            });
        }
    };
    record_point(rec, &integ, 1.0, 0.0);

    let mut controller = match &opts.control {
        StepControl::Fixed { .. } => None,
        StepControl::Adaptive { tol, controller, dt0 } => {
            let dt0 = match dt0 {
                Some(h) => *h,
                None => {
                    integ.seed_cache().map_err(|e| step_err(t0)(e.into()))?;
                    let f0 = match integ.cached_stage() {
                        Some(k) => k.to_vec(),
                        None => {
                            integ.eval(Slot::Current).map_err(|e| step_err(t0)(e.into()))?;
                            integ.scratch.clone()
                        }
                    };
                    let mut extra = 0;
                    let h = initial_step_size(
                        |x: &[f64], out: &mut [f64]| {
                            extra += 1;
                            problem.rhs(x, out)
                        },
                        integ.state(),
                        &f0,
                        tableau.order(),
                        *tol,
                    )
                    .map_err(|e| step_err(t0)(e.into()))?;
                    integ.rhs_calls += extra;
                    h
                }
            };
            let order = integ.controller_order();
            Some(ControllerState::new(controller, order, dt0, span).map_err(|e| step_err(t0)(e.into()))?)
        }
    };
    let mut dt = match (&opts.control, &controller) {
        (StepControl::Fixed { dt }, _) => *dt,
        (_, Some(c)) => c.dt,
        _ => unreachable!(),
    };
    let dt_min = controller.as_ref().map_or(0.0, |c| c.dt_min);
    let done_eps = 1e-12 * span.abs();

    let mut steps = 0u64;
    let mut gamma_min = f64::INFINITY;
    let mut gamma_max = f64::NEG_INFINITY;
    let mut max_cache: Option<f64> = None;
    loop {
        let remaining = opts.t_end - integ.t();
        if remaining <= done_eps {
            break;
        }
        if steps >= opts.max_steps {
            finish(rec, &integ, gamma_min, gamma_max, max_cache);
            return Err(FailureKind::MaxSteps(opts.max_steps));
        }
        steps += 1;
        let last = dt >= remaining;
        let h = if last { remaining } else { dt };
        let out = match integ.step(h, controller.as_mut()) {
            Ok(o) => o,
            Err(e) => {
                finish(rec, &integ, gamma_min, gamma_max, max_cache);
                return Err(step_err(integ.t())(e));
            }
        };
        if out.relaxation_fallback && out.accepted {
            rec.relaxation_fallbacks += 1;
        }
        if out.accepted {
            rec.accepted += 1;
            if !integ.state().iter().all(|v| v.is_finite()) || !integ.t().is_finite() {
                finish(rec, &integ, gamma_min, gamma_max, max_cache);
                return Err(FailureKind::Divergence { t: integ.t() });
            }
            gamma_min = gamma_min.min(out.gamma);
            gamma_max = gamma_max.max(out.gamma);
            // a clipped final step can be arbitrarily short, and its γ is
            // then dominated by round-off in the entropy
            if !last {
                rec.gamma_deviation = rec.gamma_deviation.max((out.gamma - 1.0).abs());
            }
            if let Some(e) = out.cache_error {
                max_cache = Some(max_cache.map_or(e, |m: f64| m.max(e)));
            }
            let drift = (problem.entropy(integ.state()) - eta0).abs();
            if drift.is_nan() {
                finish(rec, &integ, gamma_min, gamma_max, max_cache);
                return Err(FailureKind::Divergence { t: integ.t() });
            }
            rec.entropy_drift = rec.entropy_drift.max(drift);
            record_point(rec, &integ, out.gamma, h);
            if last {
                break;
            }
            if controller.is_some() {
                dt = out.dt_next;
            }
        } else {
            rec.rejected += 1;
            if h <= dt_min || !out.dt_next.is_finite() {
                finish(rec, &integ, gamma_min, gamma_max, max_cache);
                return Err(FailureKind::DtCollapse { t: integ.t(), dt: h });
            }
            dt = out.dt_next;
        }
        if controller.is_some() && integ.t() + dt == integ.t() {
            finish(rec, &integ, gamma_min, gamma_max, max_cache);
            return Err(FailureKind::DtCollapse { t: integ.t(), dt });
        }
    }
    finish(rec, &integ, gamma_min, gamma_max, max_cache);
    Ok(())
}

fn finish(rec: &mut RunRecord, integ: &Integrator, gamma_min: f64, gamma_max: f64, max_cache: Option<f64>) {
    rec.rhs_calls = integ.rhs_calls();
    rec.t_final = integ.t();
    rec.u_final = integ.state().to_vec();
    if gamma_min.is_finite() {
        rec.gamma_min = gamma_min;
        rec.gamma_max = gamma_max;
    }
    rec.max_cache_error = max_cache;
}
