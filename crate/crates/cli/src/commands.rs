use std::io::Write;
use std::path::{Path, PathBuf};

use rckl::kernels::unit_trace_normalize;
use rckl::solver::{fit, SolverConfig};
use rckl::synthbench::{
    error_summary, generate_synthetic, make_rounds, mu_recovery_report, run_learning_curve,
    split_rounds, ExperimentConfig, ExperimentRecord,
};
use rckl::triplets::{
    adversarial_order, detect_conflicts, error_rate, inferred_triplets, total_triplet_count,
    transitive_closure,
};
use rckl::{AuxKernelBank, KernelMatrix, TripletSet};

use crate::error::{CliError, CliResult};
use crate::fmt_g;
use crate::formats::{
    format_triplets, read_kernel, read_triplets, write_kernel, write_records, write_triplets,
    ModelFile,
};

fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn join_g(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| fmt_g(*v))
        .collect::<Vec<_>>()
        .join(", ")
}

pub struct TrainRequest<'a> {
    pub triplets: &'a Path,
    pub kernels: &'a [PathBuf],
    /// Rescale each auxiliary kernel to unit trace on load.
    pub normalize_kernels: bool,
    pub config: SolverConfig,
    pub model_out: &'a Path,
}

fn load_bank(paths: &[PathBuf], normalize: bool) -> CliResult<Option<AuxKernelBank>> {
    let mut kernels: Vec<KernelMatrix> = Vec::with_capacity(paths.len());
    for path in paths {
        let k = read_kernel(path)?;
        let k = if normalize {
            unit_trace_normalize(&k)?
        } else {
            k
        };
        if let Some(first) = kernels.first() {
            if first.n() != k.n() {
                return Err(rckl::Error::DimensionMismatch {
                    expected: first.n(),
                    found: k.n(),
                }
                .into());
            }
        }
        kernels.push(k);
    }
    match kernels.first() {
        None => Ok(None),
        Some(k) => Ok(Some(AuxKernelBank::uniform(k.n(), kernels)?)),
    }
}

pub fn train(req: &TrainRequest<'_>, out: &mut dyn Write) -> CliResult<ModelFile> {
    let set = read_triplets(req.triplets)?;
    let bank = load_bank(req.kernels, req.normalize_kernels)?;
    let n = match &bank {
        Some(b) => b.n(),
        None => set.n(),
    };
    if set.n() > n {
        return Err(rckl::Error::DimensionMismatch {
            expected: n,
            found: set.n(),
        }
        .into());
    }
    let set = set.with_n(n)?;
    let bank = bank.unwrap_or_else(|| AuxKernelBank::empty(n));
    let state = fit(n, &set, &bank, &req.config)?;
    let model = ModelFile::from_state(&state, &req.config);
    model.write(req.model_out)?;

    let train_error = error_rate(&set, &state.composed)?;
    let mut text = format!(
        "objects: {n}\ntriplets: {}\nkernels: {}\niterations: {} ({})\n",
        set.len(),
        bank.len(),
        state.iterations_run,
        if state.converged {
            "converged"
        } else {
            "iteration limit"
        },
    );
    if let Some(f) = state.final_objective() {
        text.push_str(&format!("objective: {}\n", fmt_g(f)));
    }
    text.push_str(&format!("train error: {}\n", fmt_g(train_error)));
    if !state.weights().is_empty() {
        text.push_str(&format!("mu: {}\n", join_g(state.weights())));
    }
    text.push_str(&format!("model: {}\n", req.model_out.display()));
    emit(out, &text)?;
    Ok(model)
}

/// Error rate of the model's composed kernel; printed at full precision.
pub fn evaluate(model: &Path, triplets: &Path, out: &mut dyn Write) -> CliResult<f64> {
    let model = ModelFile::read(model)?;
    let k = model.composed_kernel()?;
    let set = read_triplets(triplets)?;
    if set.n() > k.n() {
        return Err(rckl::Error::DimensionMismatch {
            expected: k.n(),
            found: set.n(),
        }
        .into());
    }
    let rate = error_rate(&set, &k)?;
    emit(out, &format!("{rate}\n"))?;
    Ok(rate)
}

pub fn count(n: usize, out: &mut dyn Write) -> CliResult<()> {
    emit(out, &format!("{}\n", total_triplet_count(n)?))
}

pub fn closure(
    triplets: &Path,
    inferred_only: bool,
    dest: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let set = read_triplets(triplets)?;
    let report = detect_conflicts(&set);
    if !report.is_empty() {
        return Err(rckl::Error::Conflict(report).into());
    }
    let result = if inferred_only {
        inferred_triplets(&set)
    } else {
        transitive_closure(&set)
    };
    match dest {
        Some(path) => write_triplets(path, &result),
        None => emit(out, &format_triplets(&result)),
    }
}

pub fn conflicts(triplets: &Path, out: &mut dyn Write) -> CliResult<()> {
    let set = read_triplets(triplets)?;
    let report = detect_conflicts(&set);
    if report.is_empty() {
        emit(out, "no conflicts\n")
    } else {
        Err(rckl::Error::Conflict(report).into())
    }
}

pub fn adversarial(
    n: usize,
    seed: u64,
    verify: bool,
    dest: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let order = adversarial_order(n, seed)?;
    let set = TripletSet::from_triplets(n, order.iter().copied())?;
    match dest {
        Some(path) => write_triplets(path, &set)?,
        None => emit(out, &format_triplets(&set))?,
    }
    if verify {
        let mut prefix = TripletSet::new(n);
        let mut clean = true;
        for t in &order {
            prefix.insert(*t)?;
            if !inferred_triplets(&prefix).is_empty() {
                clean = false;
                break;
            }
        }
        emit(out, &format!("all prefixes closure-empty: {clean}\n"))?;
        if !clean {
            return Err(CliError::Verification(format!(
                "a prefix of the n={n} order implies further triplets"
            )));
        }
    }
    Ok(())
}

pub fn summarize(records: &[ExperimentRecord]) -> String {
    let mut text = String::from("method\tsubset\ttrain\ttrials\tfailed\ttest_error\trank_k0\n");
    for s in error_summary(records) {
        let train = records
            .iter()
            .find(|r| r.method == s.method && r.subset == s.subset && r.is_ok())
            .map_or(0, |r| r.training_triplets);
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            s.method.label(),
            s.subset,
            train,
            s.trials,
            s.failed,
            fmt_g(s.mean_test_error),
            fmt_g(s.mean_rank_k0),
        ));
    }
    let mus = mu_recovery_report(records);
    if !mus.is_empty() {
        text.push_str("\nmethod\tsubset\tmean mu\n");
        for m in mus {
            text.push_str(&format!(
                "{}\t{}\t{}\n",
                m.method.label(),
                m.subset,
                join_g(&m.mean_mu)
            ));
        }
    }
    text
}

pub fn experiment(
    cfg: &ExperimentConfig,
    dest: &Path,
    out: &mut dyn Write,
) -> CliResult<Vec<ExperimentRecord>> {
    let records = run_learning_curve(cfg)?;
    write_records(dest, &records)?;
    emit(out, &summarize(&records))?;
    Ok(records)
}

/// Writes the synthetic kernels and one trial's triplet files to `dir`.
pub fn generate(
    cfg: &ExperimentConfig,
    trial: usize,
    subset: usize,
    dir: &Path,
    out: &mut dyn Write,
) -> CliResult<()> {
    cfg.validate()?;
    if subset == 0 || subset > cfg.subsets {
        return Err(CliError::Config(format!(
            "subset must be in 1..={}",
            cfg.subsets
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let data = generate_synthetic(&cfg.synthetic)?;
    let rounds = make_rounds(&data.oracle(), cfg.rounds, cfg.synthetic.seed)?;
    let split = split_rounds(
        data.n(),
        &rounds,
        cfg.train_rounds,
        cfg.validation_rounds,
        cfg.synthetic.seed.wrapping_add(trial as u64),
    )?;
    let (train_rounds, validation_rounds) = cfg.rounds_at(subset);

    write_kernel(&dir.join("truth.csv"), &data.truth)?;
    let mut written = vec!["truth.csv".to_string()];
    for (i, k) in data.bank.kernels().iter().enumerate() {
        let name = format!("aux_{}.csv", i + 1);
        write_kernel(&dir.join(&name), k)?;
        written.push(name);
    }
    for (name, set) in [
        ("train.txt", split.train_set(train_rounds)?),
        ("validation.txt", split.validation_set(validation_rounds)?),
        ("test.txt", split.test.clone()),
    ] {
        write_triplets(&dir.join(name), &set)?;
        written.push(format!("{name} ({} triplets)", set.len()));
    }
    let mut text = String::new();
    for w in written {
        text.push_str(&format!("wrote {}\n", dir.join(w).display()));
    }
    emit(out, &text)
}
