//! Projected gradient descent for the three learning modes.
//!
//! * `T`: learn `K0` alone; `min E(K0) + lambda1 tr(K0)` over PSD `K0`.
//! * `MKL`: learn only the weights; `min E(sum mu_i K_i) + lambda2 |mu|_1`
//!   over `mu >= 0`, with `K0` frozen at zero.
//! * `AK`: learn both; `min E(K0 + sum mu_i K_i) + lambda1 tr(K0) + lambda2 |mu|_1`.
//!
//! Each iteration takes a gradient step on `K0` (with `lambda1 I` added to
//! the gradient) and on `mu` (with `lambda2 1` added), projects `K0` onto the
//! PSD cone, clamps `mu` at zero and recomposes `K''`. With `adaptive_step`
//! a step that raises the objective is undone and retried at half the step
//! size; accepted steps grow the step size by 1%.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{compose_ak, project_psd, AuxKernelBank, KernelMatrix};
use crate::losses::{LossKind, TripletGeometry};
use crate::triplets::{detect_conflicts, ComparisonGraph, TripletSet};

const STEP_GROWTH: f64 = 1.01;
const STEP_SHRINK: f64 = 0.5;
/// Backtracking gives up (and reports convergence) once the step size has
/// shrunk by this factor without finding a non-increasing step.
const MIN_STEP_RATIO: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    T,
    Mkl,
    Ak,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::T => "t",
            Mode::Mkl => "mkl",
            Mode::Ak => "ak",
        }
    }

    fn learns_k0(self) -> bool {
        self != Mode::Mkl
    }

    fn learns_mu(self) -> bool {
        self != Mode::T
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t" => Ok(Mode::T),
            "mkl" => Ok(Mode::Mkl),
            "ak" => Ok(Mode::Ak),
            other => Err(Error::InvalidArgument(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub loss: LossKind,
    pub mode: Mode,
    /// Trace penalty on `K0`; ignored in MKL mode.
    pub lambda1: f64,
    /// l1 penalty on `mu`; ignored in T mode.
    pub lambda2: f64,
    /// Initial step size.
    pub eta: f64,
    pub max_iters: usize,
    /// Stop once `|f_t - f_{t-1}| / max(1, |f_{t-1}|)` drops below this.
    pub rel_tol: f64,
    /// Echoed into model files. The descent itself is deterministic.
    pub seed: u64,
    pub adaptive_step: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Ste,
            mode: Mode::Ak,
            lambda1: 0.01,
            lambda2: 0.01,
            eta: 1.0,
            max_iters: 1000,
            rel_tol: 1e-6,
            seed: 0,
            adaptive_step: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} must be finite and >= 0, got {v}"
                )))
            }
        };
        nonneg("lambda1", self.lambda1)?;
        nonneg("lambda2", self.lambda2)?;
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub k0: KernelMatrix,
    /// Auxiliary kernels with the learned weights (empty in T mode).
    pub bank: AuxKernelBank,
    /// `K0 + sum mu_i K_i`.
    pub composed: KernelMatrix,
    /// Objective before the first step, then after every accepted step.
    pub objective_history: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    /// Step size at exit.
    pub step_size: f64,
}

impl ModelState {
    pub fn n(&self) -> usize {
        self.k0.n()
    }

    pub fn weights(&self) -> &[f64] {
        self.bank.weights()
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.objective_history.last().copied()
    }
}

/// What an observer sees after each accepted iteration.
#[derive(Debug)]
pub struct IterationSnapshot<'a> {
    pub iteration: usize,
    pub k0: &'a DMatrix<f64>,
    pub mu: &'a [f64],
    pub objective: f64,
    pub step_size: f64,
}

/// Starting point: `K0 = I` (zero in MKL mode) and `mu = 1/A`. In T mode the
/// auxiliary kernels are dropped.
pub fn initialize(n: usize, bank: &AuxKernelBank, cfg: &SolverConfig) -> Result<ModelState> {
    if n < 2 {
        return Err(Error::InvalidSize(format!(
            "need at least 2 objects, got {n}"
        )));
    }
    if bank.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: bank.n(),
        });
    }
    let bank = match cfg.mode {
        Mode::T => AuxKernelBank::empty(n),
        Mode::Mkl if bank.is_empty() => {
            return Err(Error::InvalidInput(
                "MKL mode needs at least one auxiliary kernel".into(),
            ))
        }
        _ => {
            let a = bank.len();
            bank.clone().with_weights(vec![1.0 / a as f64; a])?
        }
    };
    let k0 = match cfg.mode {
        Mode::Mkl => KernelMatrix::zeros(n),
        _ => KernelMatrix::identity(n),
    };
    let composed = compose_ak(&k0, &bank)?;
    Ok(ModelState {
        k0,
        bank,
        composed,
        objective_history: Vec::new(),
        iterations_run: 0,
        converged: false,
        step_size: cfg.eta,
    })
}

fn penalised(geometry: &TripletGeometry, k0: &DMatrix<f64>, mu: &[f64], cfg: &SolverConfig) -> f64 {
    let mut value = geometry.value(cfg.loss, k0, mu);
    if cfg.mode.learns_k0() {
        value += cfg.lambda1 * k0.trace();
    }
    if cfg.mode.learns_mu() {
        value += cfg.lambda2 * mu.iter().sum::<f64>();
    }
    value
}

/// `E(K'') + lambda1 tr(K0) + lambda2 sum(mu)`, honouring the mode's ignored
/// penalties.
pub fn objective(state: &ModelState, set: &TripletSet, cfg: &SolverConfig) -> Result<f64> {
    let geometry = TripletGeometry::new(&state.bank, set)?;
    Ok(penalised(
        &geometry,
        state.k0.matrix(),
        state.weights(),
        cfg,
    ))
}

pub fn fit(
    n: usize,
    set: &TripletSet,
    bank: &AuxKernelBank,
    cfg: &SolverConfig,
) -> Result<ModelState> {
    fit_observed(n, set, bank, cfg, |_| {})
}

pub fn fit_observed(
    n: usize,
    set: &TripletSet,
    bank: &AuxKernelBank,
    cfg: &SolverConfig,
    observer: impl FnMut(&IterationSnapshot<'_>),
) -> Result<ModelState> {
    cfg.validate()?;
    let state = initialize(n, bank, cfg)?;
    fit_from(state, set, cfg, observer)
}

/// Runs the descent starting from `state` (for example the result of a fit
/// at neighbouring hyperparameters).
pub fn fit_from(
    state: ModelState,
    set: &TripletSet,
    cfg: &SolverConfig,
    mut observer: impl FnMut(&IterationSnapshot<'_>),
) -> Result<ModelState> {
    cfg.validate()?;
    let n = state.n();
    if set.is_empty() {
        return Err(Error::InvalidInput(
            "cannot fit an empty triplet set".into(),
        ));
    }
    if set.n() > n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: set.n(),
        });
    }
    if !ComparisonGraph::from_triplets(set).is_acyclic() {
        return Err(Error::Conflict(detect_conflicts(set)));
    }

    let geometry = TripletGeometry::new(&state.bank, set)?;
    let ModelState { k0, mut bank, .. } = state;
    let mut k0 = k0.into_matrix();
    let mut mu = bank.weights().to_vec();

    let mut current = penalised(&geometry, &k0, &mu, cfg);
    if !current.is_finite() {
        return Err(Error::Divergence {
            iteration: 0,
            value: current,
        });
    }
    let mut history = vec![current];
    let mut eta = cfg.eta;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iters {
        let eval = geometry.evaluate(cfg.loss, &k0, &mu);
        let mut accepted = None;
        loop {
            let candidate = take_step(&k0, &mu, &eval.grad_k0, &eval.grad_mu, eta, cfg)?;
            let value = match &candidate {
                Some((k, m)) => penalised(&geometry, k, m, cfg),
                None => f64::NAN,
            };
            if !cfg.adaptive_step {
                if !value.is_finite() {
                    return Err(Error::Divergence {
                        iteration: iterations + 1,
                        value,
                    });
                }
                accepted = candidate.map(|c| (c, value));
                break;
            }
            if value.is_finite() && value <= current {
                accepted = candidate.map(|c| (c, value));
                break;
            }
            eta *= STEP_SHRINK;
            if eta < cfg.eta * MIN_STEP_RATIO {
                break;
            }
        }
        let Some(((next_k0, next_mu), value)) = accepted else {
            // No descent step at any usable step size: stationary.
            converged = true;
            break;
        };
        if cfg.adaptive_step {
            eta *= STEP_GROWTH;
        }
        iterations += 1;
        let previous = current;
        k0 = next_k0;
        mu = next_mu;
        current = value;
        history.push(current);
        observer(&IterationSnapshot {
            iteration: iterations,
            k0: &k0,
            mu: &mu,
            objective: current,
            step_size: eta,
        });
        if (previous - current).abs() / previous.abs().max(1.0) < cfg.rel_tol {
            converged = true;
            break;
        }
    }

    bank.set_weights(mu)?;
    let k0 = KernelMatrix::from_parts(k0, true);
    let composed = compose_ak(&k0, &bank)?;
    Ok(ModelState {
        k0,
        bank,
        composed,
        objective_history: history,
        iterations_run: iterations,
        converged,
        step_size: eta,
    })
}

/// One projected step; `None` when the raw step is not finite.
#[allow(clippy::type_complexity)]
fn take_step(
    k0: &DMatrix<f64>,
    mu: &[f64],
    grad_k0: &DMatrix<f64>,
    grad_mu: &[f64],
    eta: f64,
    cfg: &SolverConfig,
) -> Result<Option<(DMatrix<f64>, Vec<f64>)>> {
    let next_k0 = if cfg.mode.learns_k0() {
        let mut raw = k0 - grad_k0 * eta;
        for i in 0..raw.nrows() {
            raw[(i, i)] -= eta * cfg.lambda1;
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        project_psd(&raw)?.into_matrix()
    } else {
        k0.clone()
    };
    let next_mu: Vec<f64> = if cfg.mode.learns_mu() {
        mu.iter()
            .zip(grad_mu)
            .map(|(m, g)| (m - eta * (g + cfg.lambda2)).max(0.0))
            .collect()
    } else {
        mu.to_vec()
    };
    if next_mu.iter().any(|v| !v.is_finite()) {
        return Ok(None);
    }
    Ok(Some((next_k0, next_mu)))
}
