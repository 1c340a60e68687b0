//! On-disk formats.
//!
//! * Triplet files: one `a,b,c` per line (0-based), `#` starts a comment, and
//!   an optional `# n=<count>` line fixes the number of objects.
//! * Kernel files: CSV; the first record is `n`, followed by `n` rows of `n`
//!   floats. Matrices must be symmetric to within [`KERNEL_SYMMETRY_TOL`].
//! * Model files: one JSON document.
//! * Experiment records: CSV with a header row.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rckl::solver::{ModelState, SolverConfig};
use rckl::synthbench::{ExperimentRecord, Method};
use rckl::{KernelMatrix, Triplet, TripletSet};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const KERNEL_SYMMETRY_TOL: f64 = 1e-9;

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn parse_triplets(path: &Path, text: &str) -> CliResult<TripletSet> {
    let mut declared: Option<(usize, u64)> = None;
    let mut triplets: Vec<(Triplet, u64)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx as u64 + 1;
        let (body, comment) = match raw.split_once('#') {
            Some((b, c)) => (b.trim(), Some(c.trim())),
            None => (raw.trim(), None),
        };
        if let Some(value) = comment.and_then(|c| c.strip_prefix("n=")) {
            if !body.is_empty() {
                return Err(CliError::parse(
                    path,
                    line,
                    "object count must be on its own line",
                ));
            }
            if declared.is_some() {
                return Err(CliError::parse(path, line, "object count declared twice"));
            }
            let n = value
                .trim()
                .parse()
                .map_err(|_| CliError::parse(path, line, format!("bad object count '{value}'")))?;
            declared = Some((n, line));
            continue;
        }
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(CliError::parse(
                path,
                line,
                format!("expected 3 comma-separated indices, found {}", fields.len()),
            ));
        }
        let mut idx = [0usize; 3];
        for (slot, field) in idx.iter_mut().zip(&fields) {
            *slot = field
                .parse()
                .map_err(|_| CliError::parse(path, line, format!("bad index '{field}'")))?;
        }
        let t = Triplet::new(idx[0], idx[1], idx[2])
            .map_err(|e| CliError::parse(path, line, e.to_string()))?;
        triplets.push((t, line));
    }
    let max_index = triplets.iter().map(|(t, _)| t.max_index()).max();
    let n = match declared {
        Some((n, line)) => {
            if let Some(m) = max_index.filter(|&m| m >= n) {
                return Err(CliError::parse(
                    path,
                    line,
                    format!("declared n={n} but index {m} appears"),
                ));
            }
            n
        }
        None => max_index.map_or(0, |m| m + 1),
    };
    let mut set = TripletSet::new(n);
    for (t, line) in triplets {
        if !set
            .insert(t)
            .map_err(|e| CliError::parse(path, line, e.to_string()))?
        {
            return Err(CliError::parse(
                path,
                line,
                format!("duplicate triplet {t}"),
            ));
        }
    }
    Ok(set)
}

pub fn read_triplets(path: &Path) -> CliResult<TripletSet> {
    parse_triplets(path, &read_text(path)?)
}

pub fn format_triplets(set: &TripletSet) -> String {
    let mut out = format!("# n={}\n", set.n());
    for t in set {
        out.push_str(&format!("{},{},{}\n", t.head, t.near, t.far));
    }
    out
}

pub fn write_triplets(path: &Path, set: &TripletSet) -> CliResult<()> {
    write_text(path, &format_triplets(set))
}

pub fn parse_kernel(path: &Path, text: &str) -> CliResult<KernelMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let line_of = |r: &csv::StringRecord| r.position().map_or(0, |p| p.line());
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line());
        CliError::parse(path, line, e.to_string())
    };

    let header = records
        .next()
        .ok_or_else(|| CliError::parse(path, 1, "empty kernel file"))?
        .map_err(csv_err)?;
    if header.len() != 1 {
        return Err(CliError::parse(
            path,
            line_of(&header),
            "first record must be n alone",
        ));
    }
    let n: usize = header[0].parse().map_err(|_| {
        CliError::parse(path, line_of(&header), format!("bad size '{}'", &header[0]))
    })?;
    let mut m = DMatrix::zeros(n, n);
    let mut row = 0;
    for record in records {
        let record = record.map_err(csv_err)?;
        let line = line_of(&record);
        if row == n {
            return Err(CliError::parse(path, line, format!("more than {n} rows")));
        }
        if record.len() != n {
            return Err(CliError::parse(
                path,
                line,
                format!("expected {n} values, found {}", record.len()),
            ));
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| CliError::parse(path, line, format!("bad number '{field}'")))?;
            if !v.is_finite() {
                return Err(CliError::parse(
                    path,
                    line,
                    format!("non-finite value '{field}'"),
                ));
            }
            m[(row, col)] = v;
        }
        row += 1;
    }
    if row != n {
        return Err(CliError::parse(
            path,
            0,
            format!("expected {n} rows, found {row}"),
        ));
    }
    let asym = rckl::kernels::max_asymmetry(&m);
    if asym > KERNEL_SYMMETRY_TOL {
        return Err(CliError::parse(
            path,
            0,
            format!("matrix is not symmetric (max |K - K^T| = {asym:e})"),
        ));
    }
    Ok(KernelMatrix::symmetrized(&m)?)
}

pub fn read_kernel(path: &Path) -> CliResult<KernelMatrix> {
    parse_kernel(path, &read_text(path)?)
}

pub fn format_kernel(k: &KernelMatrix) -> String {
    let n = k.n();
    let mut out = format!("{n}\n");
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| format!("{:e}", k.get(i, j))).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_kernel(path: &Path, k: &KernelMatrix) -> CliResult<()> {
    write_text(path, &format_kernel(k))
}

/// A fitted model as stored on disk. Matrices are row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n: usize,
    pub k0: Vec<f64>,
    pub mu: Vec<f64>,
    pub composed: Vec<f64>,
    pub config: SolverConfig,
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn row_major(k: &KernelMatrix) -> Vec<f64> {
    let n = k.n();
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| k.get(i, j))
        .collect()
}

impl ModelFile {
    pub fn from_state(state: &ModelState, config: &SolverConfig) -> Self {
        Self {
            n: state.n(),
            k0: row_major(&state.k0),
            mu: state.weights().to_vec(),
            composed: row_major(&state.composed),
            config: config.clone(),
            objective_history: state.objective_history.clone(),
            iterations: state.iterations_run,
            converged: state.converged,
        }
    }

    fn matrix(&self, name: &str, values: &[f64]) -> CliResult<KernelMatrix> {
        if values.len() != self.n * self.n {
            return Err(CliError::Config(format!(
                "model field '{name}' has {} values, expected {}",
                values.len(),
                self.n * self.n
            )));
        }
        Ok(KernelMatrix::new(DMatrix::from_row_slice(
            self.n, self.n, values,
        ))?)
    }

    pub fn composed_kernel(&self) -> CliResult<KernelMatrix> {
        self.matrix("composed", &self.composed)
    }

    pub fn k0_kernel(&self) -> CliResult<KernelMatrix> {
        self.matrix("k0", &self.k0)
    }

    pub fn to_json(&self) -> CliResult<String> {
        let mut s = serde_json::to_string(self)
            .map_err(|e| CliError::Config(format!("cannot encode model: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(path: &Path, text: &str) -> CliResult<Self> {
        serde_json::from_str(text)
            .map_err(|e| CliError::parse(path, e.line() as u64, e.to_string()))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        Self::from_json(path, &read_text(path)?)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_text(path, &self.to_json()?)
    }
}

const RECORD_FIXED: [&str; 10] = [
    "trial",
    "subset",
    "method",
    "loss",
    "status",
    "training_triplets",
    "test_error",
    "validation_error",
    "lambda1",
    "lambda2",
];

fn float_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn write_records_to<W: Write>(out: W, records: &[ExperimentRecord]) -> CliResult<()> {
    let width = records.iter().map(|r| r.mu.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| CliError::Config(format!("cannot write records: {e}"));
    let mut header: Vec<String> = RECORD_FIXED.iter().map(|s| s.to_string()).collect();
    header.extend((1..=width).map(|i| format!("mu_{i}")));
    header.push("rank_k0".into());
    w.write_record(&header).map_err(to_err)?;
    for r in records {
        let mut row = vec![
            r.trial.to_string(),
            r.subset.to_string(),
            r.method.mode.as_str().to_string(),
            r.method.loss.as_str().to_string(),
            r.status.clone(),
            r.training_triplets.to_string(),
            float_cell(r.test_error),
            float_cell(r.validation_error),
            float_cell(r.lambda1),
            float_cell(r.lambda2),
        ];
        row.extend((0..width).map(|i| r.mu.get(i).map_or(String::new(), |v| float_cell(*v))));
        row.push(r.rank_k0.to_string());
        w.write_record(&row).map_err(to_err)?;
    }
    w.flush()
        .map_err(|e| CliError::Config(format!("cannot write records: {e}")))?;
    Ok(())
}

pub fn format_records(records: &[ExperimentRecord]) -> CliResult<String> {
    let mut buf = Vec::new();
    write_records_to(&mut buf, records)?;
    String::from_utf8(buf).map_err(|e| CliError::Config(e.to_string()))
}

pub fn write_records(path: &Path, records: &[ExperimentRecord]) -> CliResult<()> {
    write_text(path, &format_records(records)?)
}

pub fn parse_records(path: &Path, text: &str) -> CliResult<Vec<ExperimentRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| CliError::parse(path, 1, e.to_string()))?
        .clone();
    let width = header.len().saturating_sub(RECORD_FIXED.len() + 1);
    let fixed_ok = header.iter().zip(RECORD_FIXED).all(|(h, want)| h == want);
    if !fixed_ok || header.get(header.len().saturating_sub(1)) != Some("rank_k0") {
        return Err(CliError::parse(path, 1, "unexpected record header"));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            CliError::parse(path, e.position().map_or(0, |p| p.line()), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |what: &str, v: &str| CliError::parse(path, line, format!("bad {what} '{v}'"));
        let int = |i: usize| {
            record[i]
                .parse::<usize>()
                .map_err(|_| bad(RECORD_FIXED[i], &record[i]))
        };
        let float = |i: usize| -> CliResult<f64> {
            if record[i].is_empty() {
                Ok(f64::NAN)
            } else {
                record[i].parse().map_err(|_| bad(&header[i], &record[i]))
            }
        };
        let mode = record[2].parse().map_err(|_| bad("method", &record[2]))?;
        let loss = record[3].parse().map_err(|_| bad("loss", &record[3]))?;
        let mut mu = Vec::new();
        for i in RECORD_FIXED.len()..RECORD_FIXED.len() + width {
            if !record[i].is_empty() {
                mu.push(float(i)?);
            }
        }
        let last = header.len() - 1;
        out.push(ExperimentRecord {
            trial: int(0)?,
            subset: int(1)?,
            method: Method { mode, loss },
            status: record[4].to_string(),
            training_triplets: int(5)?,
            test_error: float(6)?,
            validation_error: float(7)?,
            lambda1: float(8)?,
            lambda2: float(9)?,
            mu,
            rank_k0: record[last]
                .parse()
                .map_err(|_| bad("rank_k0", &record[last]))?,
        });
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> CliResult<Vec<ExperimentRecord>> {
    parse_records(path, &read_text(path)?)
}
