//! Synthetic learning-curve study.
//!
//! Seven independent 2-D feature spaces are drawn uniformly from the unit
//! square. The ground truth kernel weights the clean linear kernels of
//! spaces 0..=3 by (1/2, 1/4, 1/6, 1/12); spaces 1..=6 are perturbed with
//! Gaussian noise and become the auxiliary kernels, so kernels 1-3 carry
//! signal and 4-6 carry none. Space 0 is only reachable through `K0`.
//!
//! Triplets come in rounds where every object is the head exactly once.
//! Each trial splits the round pool into train, validation and test rounds;
//! models are fit on a growing number of training rounds with
//! hyperparameters chosen on a proportionally growing validation set.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    center_columns, linear_kernel, numerical_rank, unit_trace_normalize, AuxKernelBank,
    KernelMatrix,
};
use crate::losses::LossKind;
use crate::solver::{fit, Mode, SolverConfig};
use crate::triplets::{error_rate, Triplet, TripletSet};

pub const FEATURE_SPACES: usize = 7;
pub const SPACE_DIM: usize = 2;
/// Spaces feeding the ground truth, in weight order.
pub const TRUTH_SPACES: usize = 4;

// Independent RNG streams derived from one seed.
const STREAM_FEATURES: u64 = 0;
const STREAM_ROUNDS: u64 = 1;
const STREAM_SPLITS: u64 = 2;

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    /// Standard deviation of the per-coordinate Gaussian perturbation.
    pub noise_sigma: f64,
    pub seed: u64,
    pub truth_weights: Vec<f64>,
    /// Center features before forming linear kernels.
    pub center: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 100,
            noise_sigma: 0.1,
            seed: 0,
            truth_weights: vec![1.0 / 2.0, 1.0 / 4.0, 1.0 / 6.0, 1.0 / 12.0],
            center: false,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InvalidSize(format!(
                "need at least 3 objects, got {}",
                self.n
            )));
        }
        if self.truth_weights.len() != TRUTH_SPACES {
            return Err(Error::DimensionMismatch {
                expected: TRUTH_SPACES,
                found: self.truth_weights.len(),
            });
        }
        if self
            .truth_weights
            .iter()
            .any(|w| !(*w > 0.0 && w.is_finite()))
        {
            return Err(Error::InvalidArgument(
                "truth weights must be positive".into(),
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    /// Clean feature spaces, each `n x 2`.
    pub features: Vec<DMatrix<f64>>,
    pub truth: KernelMatrix,
    /// Unit-trace linear kernels of the perturbed spaces 1..=6.
    pub bank: AuxKernelBank,
}

impl SyntheticData {
    pub fn n(&self) -> usize {
        self.truth.n()
    }

    pub fn oracle(&self) -> TruthOracle<'_> {
        TruthOracle { truth: &self.truth }
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = seeded(spec.seed, STREAM_FEATURES);
    let features: Vec<DMatrix<f64>> = (0..FEATURE_SPACES)
        .map(|_| DMatrix::from_fn(n, SPACE_DIM, |_, _| rng.random_range(0.0..1.0)))
        .collect();
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::InvalidArgument(format!("noise distribution: {e}")))?;
    let kernel_of = |f: &DMatrix<f64>| {
        if spec.center {
            linear_kernel(&center_columns(f))
        } else {
            linear_kernel(f)
        }
    };

    let mut truth = DMatrix::zeros(n, n);
    for (f, &w) in features.iter().zip(&spec.truth_weights) {
        truth += kernel_of(f).matrix() * w;
    }
    let truth = KernelMatrix::new(truth)?;

    let mut aux = Vec::with_capacity(FEATURE_SPACES - 1);
    for f in &features[1..] {
        let perturbed = f.map(|x| x + noise.sample(&mut rng));
        aux.push(unit_trace_normalize(&kernel_of(&perturbed))?);
    }
    let bank = AuxKernelBank::uniform(n, aux)?;
    Ok(SyntheticData {
        features,
        truth,
        bank,
    })
}

/// Answers triplet queries by comparing distances under a fixed kernel.
#[derive(Clone, Copy, Debug)]
pub struct TruthOracle<'a> {
    truth: &'a KernelMatrix,
}

impl<'a> TruthOracle<'a> {
    pub fn new(truth: &'a KernelMatrix) -> Self {
        Self { truth }
    }

    pub fn n(&self) -> usize {
        self.truth.n()
    }

    /// Which of `b`, `c` is closer to `head`; `None` on an exact tie.
    pub fn answer(&self, head: usize, b: usize, c: usize) -> Option<Triplet> {
        let dab = self.truth.distance(head, b);
        let dac = self.truth.distance(head, c);
        if dab < dac {
            Some(Triplet {
                head,
                near: b,
                far: c,
            })
        } else if dac < dab {
            Some(Triplet {
                head,
                near: c,
                far: b,
            })
        } else {
            None
        }
    }
}

/// One triplet per head object, indexed by head.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Round {
    pub triplets: Vec<Triplet>,
}

/// `count` rounds with no unordered `{b, c}` question repeated for a head.
pub fn make_rounds(oracle: &TruthOracle<'_>, count: usize, seed: u64) -> Result<Vec<Round>> {
    let n = oracle.n();
    if n < 3 {
        return Err(Error::InvalidSize(format!(
            "need at least 3 objects, got {n}"
        )));
    }
    let mut rng = seeded(seed, STREAM_ROUNDS);
    let mut columns: Vec<Vec<Triplet>> = Vec::with_capacity(n);
    for head in 0..n {
        let others: Vec<usize> = (0..n).filter(|&x| x != head).collect();
        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(others.len() * others.len() / 2);
        for (i, &b) in others.iter().enumerate() {
            for &c in &others[i + 1..] {
                pairs.push((b, c));
            }
        }
        pairs.shuffle(&mut rng);
        let answered: Vec<Triplet> = pairs
            .into_iter()
            .filter_map(|(b, c)| oracle.answer(head, b, c))
            .take(count)
            .collect();
        if answered.len() < count {
            return Err(Error::Exhausted(format!(
                "object {head} has only {} untied questions, {count} rounds requested",
                answered.len()
            )));
        }
        columns.push(answered);
    }
    Ok((0..count)
        .map(|r| Round {
            triplets: columns.iter().map(|col| col[r]).collect(),
        })
        .collect())
}

fn rounds_to_set(n: usize, rounds: &[Round]) -> Result<TripletSet> {
    TripletSet::from_triplets(n, rounds.iter().flat_map(|r| r.triplets.iter().copied()))
}

#[derive(Clone, Debug)]
pub struct TrialSplit {
    pub n: usize,
    pub train: Vec<Round>,
    pub validation: Vec<Round>,
    pub test: TripletSet,
}

impl TrialSplit {
    pub fn train_set(&self, rounds: usize) -> Result<TripletSet> {
        rounds_to_set(self.n, &self.train[..rounds.min(self.train.len())])
    }

    pub fn validation_set(&self, rounds: usize) -> Result<TripletSet> {
        rounds_to_set(
            self.n,
            &self.validation[..rounds.min(self.validation.len())],
        )
    }
}

/// Random assignment of whole rounds to train, validation and test.
pub fn split_rounds(
    n: usize,
    rounds: &[Round],
    train: usize,
    validation: usize,
    seed: u64,
) -> Result<TrialSplit> {
    if train + validation >= rounds.len() {
        return Err(Error::InvalidArgument(format!(
            "{train} train + {validation} validation rounds leave no test rounds out of {}",
            rounds.len()
        )));
    }
    let mut order: Vec<usize> = (0..rounds.len()).collect();
    order.shuffle(&mut seeded(seed, STREAM_SPLITS));
    let pick = |idx: &[usize]| idx.iter().map(|&i| rounds[i].clone()).collect::<Vec<_>>();
    Ok(TrialSplit {
        n,
        train: pick(&order[..train]),
        validation: pick(&order[train..train + validation]),
        test: rounds_to_set(n, &pick(&order[train + validation..]))?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Method {
    pub mode: Mode,
    pub loss: LossKind,
}

impl Method {
    pub fn label(&self) -> String {
        format!("{}-{}", self.loss.as_str(), self.mode.as_str())
    }

    pub fn all() -> Vec<Method> {
        let mut out = Vec::new();
        for loss in [LossKind::Ste, LossKind::Gnmds] {
            for mode in [Mode::T, Mode::Mkl, Mode::Ak] {
                out.push(Method { mode, loss });
            }
        }
        out
    }
}

/// How AK's two hyperparameters are searched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AkSearch {
    /// Every `(lambda1, lambda2)` pair.
    Grid,
    /// `lambda1` over the grid with `lambda2` at the first grid value, then
    /// `lambda2` over the rest of the grid at the chosen `lambda1`.
    Line,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub synthetic: SyntheticSpec,
    pub trials: usize,
    pub rounds: usize,
    pub train_rounds: usize,
    pub validation_rounds: usize,
    /// Number of points on the learning curve.
    pub subsets: usize,
    pub methods: Vec<Method>,
    /// Candidate values for both regularizers, in selection order.
    pub lambda_grid: Vec<f64>,
    pub ak_search: AkSearch,
    /// Step size, iteration and tolerance settings shared by every fit;
    /// mode, loss and lambdas are set per fit.
    pub solver: SolverConfig,
    /// Relative eigenvalue threshold for reporting the rank of `K0`.
    pub rank_tol: f64,
}

pub fn default_lambda_grid() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((-4..=2).map(|k| 10f64.powi(k)))
        .collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticSpec::default(),
            trials: 10,
            rounds: 100,
            train_rounds: 20,
            validation_rounds: 10,
            subsets: 10,
            methods: Method::all(),
            lambda_grid: default_lambda_grid(),
            ak_search: AkSearch::Line,
            solver: SolverConfig::default(),
            rank_tol: 1e-6,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        self.solver.validate()?;
        if self.subsets == 0 || self.train_rounds < self.subsets {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= subsets <= train_rounds, got {} subsets and {} train rounds",
                self.subsets, self.train_rounds
            )));
        }
        if self.validation_rounds < self.subsets {
            return Err(Error::InvalidArgument(format!(
                "need at least one validation round per subset, got {}",
                self.validation_rounds
            )));
        }
        if self.train_rounds + self.validation_rounds >= self.rounds {
            return Err(Error::InvalidArgument("no rounds left for testing".into()));
        }
        if self.lambda_grid.is_empty()
            || self
                .lambda_grid
                .iter()
                .any(|l| !(*l >= 0.0 && l.is_finite()))
        {
            return Err(Error::InvalidArgument(
                "lambda grid must be non-empty, finite and >= 0".into(),
            ));
        }
        if self.rank_tol.is_nan() || self.rank_tol <= 0.0 {
            return Err(Error::InvalidArgument("rank_tol must be positive".into()));
        }
        Ok(())
    }

    /// Training and validation rounds used at learning-curve point `subset`
    /// (1-based).
    pub fn rounds_at(&self, subset: usize) -> (usize, usize) {
        (
            subset * self.train_rounds / self.subsets,
            subset * self.validation_rounds / self.subsets,
        )
    }

    pub fn record_count(&self) -> usize {
        self.trials * self.subsets * self.methods.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub trial: usize,
    pub subset: usize,
    pub method: Method,
    pub training_triplets: usize,
    /// `"ok"`, or the error that stopped this cell.
    pub status: String,
    pub test_error: f64,
    pub validation_error: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu: Vec<f64>,
    pub rank_k0: usize,
}

impl ExperimentRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

struct Cell<'a> {
    trial: usize,
    subset: usize,
    method: Method,
    split: &'a TrialSplit,
}

struct Candidate {
    lambda1: f64,
    lambda2: f64,
    validation_error: f64,
    composed: KernelMatrix,
    k0: KernelMatrix,
    mu: Vec<f64>,
}

fn fit_candidate(
    cfg: &ExperimentConfig,
    method: Method,
    bank: &AuxKernelBank,
    train: &TripletSet,
    validation: &TripletSet,
    lambda1: f64,
    lambda2: f64,
) -> Result<Candidate> {
    let solver = SolverConfig {
        mode: method.mode,
        loss: method.loss,
        lambda1,
        lambda2,
        ..cfg.solver.clone()
    };
    let state = fit(bank.n(), train, bank, &solver)?;
    Ok(Candidate {
        lambda1,
        lambda2,
        validation_error: error_rate(validation, &state.composed)?,
        mu: state.weights().to_vec(),
        composed: state.composed,
        k0: state.k0,
    })
}

/// Keeps the first candidate with the lowest validation error.
fn search(
    candidates: impl IntoIterator<Item = (f64, f64)>,
    mut eval: impl FnMut(f64, f64) -> Result<Candidate>,
) -> Result<Candidate> {
    let mut best: Option<Candidate> = None;
    for (l1, l2) in candidates {
        let c = eval(l1, l2)?;
        if best
            .as_ref()
            .is_none_or(|b| c.validation_error < b.validation_error)
        {
            best = Some(c);
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("empty hyperparameter grid".into()))
}

fn select(
    cfg: &ExperimentConfig,
    method: Method,
    bank: &AuxKernelBank,
    train: &TripletSet,
    validation: &TripletSet,
) -> Result<Candidate> {
    let grid = &cfg.lambda_grid;
    let eval = |l1, l2| fit_candidate(cfg, method, bank, train, validation, l1, l2);
    match method.mode {
        Mode::T => search(grid.iter().map(|&l1| (l1, 0.0)), eval),
        Mode::Mkl => search(grid.iter().map(|&l2| (0.0, l2)), eval),
        Mode::Ak => match cfg.ak_search {
            AkSearch::Grid => search(
                grid.iter()
                    .flat_map(|&l1| grid.iter().map(move |&l2| (l1, l2))),
                eval,
            ),
            AkSearch::Line => {
                let first = search(grid.iter().map(|&l1| (l1, grid[0])), eval)?;
                let l1 = first.lambda1;
                let second = search(grid.iter().skip(1).map(|&l2| (l1, l2)), eval);
                match second {
                    Ok(s) if s.validation_error < first.validation_error => Ok(s),
                    Ok(_) => Ok(first),
                    Err(e) => Err(e),
                }
            }
        },
    }
}

fn run_cell(cfg: &ExperimentConfig, data: &SyntheticData, cell: &Cell<'_>) -> ExperimentRecord {
    let (train_rounds, validation_rounds) = cfg.rounds_at(cell.subset);
    let mut record = ExperimentRecord {
        trial: cell.trial,
        subset: cell.subset,
        method: cell.method,
        training_triplets: 0,
        status: "ok".into(),
        test_error: f64::NAN,
        validation_error: f64::NAN,
        lambda1: f64::NAN,
        lambda2: f64::NAN,
        mu: Vec::new(),
        rank_k0: 0,
    };
    let outcome = (|| -> Result<()> {
        let train = cell.split.train_set(train_rounds)?;
        let validation = cell.split.validation_set(validation_rounds)?;
        record.training_triplets = train.len();
        let best = select(cfg, cell.method, &data.bank, &train, &validation)?;
        record.test_error = error_rate(&cell.split.test, &best.composed)?;
        record.validation_error = best.validation_error;
        record.lambda1 = best.lambda1;
        record.lambda2 = best.lambda2;
        record.rank_k0 = numerical_rank(&best.k0, cfg.rank_tol)?;
        record.mu = best.mu;
        Ok(())
    })();
    if let Err(e) = outcome {
        record.status = e.to_string();
    }
    record
}

/// Every (trial, subset, method) cell, ordered by trial, then subset, then
/// method. Cells run in parallel; the output does not depend on scheduling.
pub fn run_learning_curve(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let data = generate_synthetic(&cfg.synthetic)?;
    let rounds = make_rounds(&data.oracle(), cfg.rounds, cfg.synthetic.seed)?;
    let splits = (0..cfg.trials)
        .map(|trial| {
            split_rounds(
                data.n(),
                &rounds,
                cfg.train_rounds,
                cfg.validation_rounds,
                cfg.synthetic.seed.wrapping_add(trial as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<Cell<'_>> = splits
        .iter()
        .enumerate()
        .flat_map(|(trial, split)| {
            (1..=cfg.subsets).flat_map(move |subset| {
                cfg.methods.iter().map(move |&method| Cell {
                    trial,
                    subset,
                    method,
                    split,
                })
            })
        })
        .collect();
    Ok(cells
        .par_iter()
        .map(|cell| run_cell(cfg, &data, cell))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuSummary {
    pub method: Method,
    pub subset: usize,
    pub trials: usize,
    pub mean_mu: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub method: Method,
    pub subset: usize,
    pub trials: usize,
    pub failed: usize,
    pub mean_test_error: f64,
    pub mean_rank_k0: f64,
}

/// Groups records by (method, subset), methods in order of first
/// appearance and subsets ascending.
fn grouped(records: &[ExperimentRecord]) -> Vec<((Method, usize), Vec<&ExperimentRecord>)> {
    let mut methods: Vec<Method> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let mut out = Vec::new();
    for m in methods {
        let mut subsets: Vec<usize> = records
            .iter()
            .filter(|r| r.method == m)
            .map(|r| r.subset)
            .collect();
        subsets.sort_unstable();
        subsets.dedup();
        for s in subsets {
            let group = records
                .iter()
                .filter(|r| r.method == m && r.subset == s)
                .collect();
            out.push(((m, s), group));
        }
    }
    out
}

/// Mean learned weights per (method, subset) over successful MKL and AK
/// records.
pub fn mu_recovery_report(records: &[ExperimentRecord]) -> Vec<MuSummary> {
    grouped(records)
        .into_iter()
        .filter(|((m, _), _)| m.mode != Mode::T)
        .filter_map(|((method, subset), group)| {
            let ok: Vec<_> = group.into_iter().filter(|r| r.is_ok()).collect();
            let width = ok.first()?.mu.len();
            let mut mean = vec![0.0; width];
            for r in &ok {
                for (acc, v) in mean.iter_mut().zip(&r.mu) {
                    *acc += v;
                }
            }
            mean.iter_mut().for_each(|v| *v /= ok.len() as f64);
            Some(MuSummary {
                method,
                subset,
                trials: ok.len(),
                mean_mu: mean,
            })
        })
        .collect()
}

/// Mean test error and `K0` rank per (method, subset); failed cells are
/// counted but excluded from the means.
pub fn error_summary(records: &[ExperimentRecord]) -> Vec<ErrorSummary> {
    grouped(records)
        .into_iter()
        .map(|((method, subset), group)| {
            let ok: Vec<_> = group.iter().filter(|r| r.is_ok()).collect();
            let count = ok.len() as f64;
            ErrorSummary {
                method,
                subset,
                trials: ok.len(),
                failed: group.len() - ok.len(),
                mean_test_error: ok.iter().map(|r| r.test_error).sum::<f64>() / count,
                mean_rank_k0: ok.iter().map(|r| r.rank_k0 as f64).sum::<f64>() / count,
            }
        })
        .collect()
}
