use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;
use rckl::synthbench::{ExperimentRecord, Method};
use rckl::{KernelMatrix, LossKind, Mode, TripletSet};
use rckl_cli::config::RunConfig;
use rckl_cli::formats::{
    format_kernel, format_records, format_triplets, parse_kernel, parse_records, parse_triplets,
    ModelFile,
};
use tempfile::TempDir;

fn rckl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rckl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_single_triplet_without_kernels() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "t.txt", "# n=4\n0,1,2\n");
    let model = dir.path().join("m.json");
    let o = rckl(&[
        "train",
        "--triplets",
        s(&t),
        "--mode",
        "t",
        "--out",
        s(&model),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("train error: 0\n"), "{}", stdout(&o));
    let e = rckl(&["evaluate", "--model", s(&model), "--triplets", s(&t)]);
    assert_eq!(stdout(&e).trim(), "0");
}

#[test]
fn train_rejects_conflicts() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "t.txt", "1,2,3\n1,3,2\n");
    let o = rckl(&[
        "train",
        "--triplets",
        s(&t),
        "--mode",
        "t",
        "--out",
        s(&dir.path().join("m")),
    ]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.starts_with("E_CONFLICT"), "{err}");
    assert!(err.contains("(1,2,3)") && err.contains("(1,3,2)"), "{err}");
}

#[test]
fn evaluate_mirrors_error_rate_cases() {
    let dir = TempDir::new().unwrap();
    // Points on a line at 0, 1, 3, 7: no ties among distances from any head.
    let x = [0.0, 1.0, 3.0, 7.0];
    let k = KernelMatrix::new(DMatrix::from_fn(4, 4, |i, j| x[i] * x[j])).unwrap();
    let model = ModelFile {
        n: 4,
        k0: k.matrix().transpose().iter().copied().collect(),
        mu: vec![],
        composed: k.matrix().transpose().iter().copied().collect(),
        config: Default::default(),
        objective_history: vec![1.0],
        iterations: 0,
        converged: true,
    };
    let mpath = dir.path().join("m.json");
    model.write(&mpath).unwrap();

    let satisfied = write(&dir, "a.txt", "0,1,2\n3,2,0\n1,0,3\n");
    let o = rckl(&[
        "evaluate",
        "--model",
        s(&mpath),
        "--triplets",
        s(&satisfied),
    ]);
    assert_eq!(stdout(&o).trim(), "0");

    let both = write(&dir, "b.txt", "0,1,2\n0,2,1\n3,2,0\n3,0,2\n");
    let o = rckl(&["evaluate", "--model", s(&mpath), "--triplets", s(&both)]);
    assert_eq!(stdout(&o).trim(), "0.5");

    let identity = ModelFile {
        k0: DMatrix::<f64>::identity(4, 4).iter().copied().collect(),
        composed: DMatrix::<f64>::identity(4, 4).iter().copied().collect(),
        ..model
    };
    identity.write(&mpath).unwrap();
    let o = rckl(&[
        "evaluate",
        "--model",
        s(&mpath),
        "--triplets",
        s(&satisfied),
    ]);
    assert_eq!(stdout(&o).trim(), "1");

    let empty = write(&dir, "e.txt", "# nothing\n");
    let o = rckl(&["evaluate", "--model", s(&mpath), "--triplets", s(&empty)]);
    assert!(stderr(&o).starts_with("E_INPUT"), "{}", stderr(&o));
}

#[test]
fn triplet_tools() {
    let o = rckl(&["triplets", "count", "100"]);
    assert_eq!(stdout(&o), "485100\n");

    let dir = TempDir::new().unwrap();
    // a=0, b=1, c=2: {(a,b,c), (c,a,b)} implies (b,a,c).
    let t = write(&dir, "t.txt", "0,1,2\n2,0,1\n");
    let o = rckl(&["triplets", "closure", s(&t), "--inferred-only"]);
    assert_eq!(stdout(&o), "# n=3\n1,0,2\n");

    let o = rckl(&["triplets", "conflicts", s(&t)]);
    assert_eq!(stdout(&o), "no conflicts\n");
    let c = write(&dir, "c.txt", "0,1,2\n0,2,1\n");
    let o = rckl(&["triplets", "conflicts", s(&c)]);
    assert!(stderr(&o).starts_with("E_CONFLICT"));

    let o = rckl(&["triplets", "adversarial", "4", "--seed", "7", "--verify"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.first(), Some(&"# n=4"));
    assert_eq!(
        lines.iter().filter(|l| l.split(',').count() == 3).count(),
        12
    );
    assert_eq!(lines.last(), Some(&"all prefixes closure-empty: true"));
}

#[test]
fn errors_carry_stable_prefixes() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.txt", "0,1,2\n# fine\n0,1\n");
    let o = rckl(&["triplets", "conflicts", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(
        err.starts_with("E_PARSE") && err.contains("bad.txt:3:"),
        "{err}"
    );

    let k = write(&dir, "k.csv", "3\n1,0,0\n0,1,0\n0,0,1\n");
    let t = write(&dir, "t.txt", "0,1,5\n");
    let o = rckl(&[
        "train",
        "--triplets",
        s(&t),
        "--kernel",
        s(&k),
        "--normalize-kernels",
        "--out",
        s(&dir.path().join("m")),
    ]);
    assert!(stderr(&o).starts_with("E_DIM"), "{}", stderr(&o));

    let asym = write(&dir, "a.csv", "2\n1,0.5\n0.4,1\n");
    let o = rckl(&[
        "train",
        "--triplets",
        s(&t),
        "--kernel",
        s(&asym),
        "--out",
        "x",
    ]);
    assert!(stderr(&o).starts_with("E_PARSE"), "{}", stderr(&o));

    let cfg = write(&dir, "c.json", "{\"solver\": {\"etaa\": 1}}");
    let o = rckl(&[
        "train",
        "--triplets",
        s(&t),
        "--config",
        s(&cfg),
        "--out",
        "x",
    ]);
    assert!(stderr(&o).starts_with("E_PARSE"), "{}", stderr(&o));

    let cfg = write(&dir, "c2.json", "{\"solver\": {\"eta\": -1}}");
    let o = rckl(&[
        "train",
        "--triplets",
        s(&t),
        "--config",
        s(&cfg),
        "--out",
        "x",
    ]);
    assert!(stderr(&o).starts_with("E_CONFIG"), "{}", stderr(&o));

    let t = write(&dir, "t3.txt", "0,1,2\n3,4,5\n1,2,3\n");
    let o = rckl(&[
        "train",
        "--triplets",
        s(&t),
        "--mode",
        "t",
        "--eta",
        "1e300",
        "--lambda1",
        "1e10",
        "--max-iters",
        "3",
        "--config",
        s(&write(
            &dir,
            "f.json",
            "{\"solver\": {\"adaptive_step\": false}}",
        )),
        "--out",
        s(&dir.path().join("m")),
    ]);
    assert!(stderr(&o).starts_with("E_DIVERGE"), "{}", stderr(&o));
}

#[test]
fn train_with_kernels_reports_weights() {
    let dir = TempDir::new().unwrap();
    let k1 = write(&dir, "k1.csv", "4\n1,0,0,0\n0,2,0,0\n0,0,3,0\n0,0,0,4\n");
    let k2 = write(
        &dir,
        "k2.csv",
        "4\n# a comment\n1,1,0,0\n1,1,0,0\n0,0,1,1\n0,0,1,1\n",
    );
    let t = write(&dir, "t.txt", "0,1,2\n2,3,0\n");
    let model = dir.path().join("m.json");
    let o = rckl(&[
        "train",
        "--triplets",
        s(&t),
        "--kernel",
        s(&k1),
        "--kernel",
        s(&k2),
        "--normalize-kernels",
        "--mode",
        "mkl",
        "--loss",
        "gnmds",
        "--out",
        s(&model),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("kernels: 2\n"));
    assert!(stdout(&o).contains("mu: "));
    let m = ModelFile::read(&model).unwrap();
    assert_eq!(m.mu.len(), 2);
    assert_eq!(m.config.mode, Mode::Mkl);
    assert!(m.k0.iter().all(|v| *v == 0.0));

    // Not unit trace and not normalized: rejected.
    let o = rckl(&[
        "train",
        "--triplets",
        s(&t),
        "--kernel",
        s(&k1),
        "--out",
        s(&model),
    ]);
    assert!(stderr(&o).starts_with("E_INPUT"), "{}", stderr(&o));
}

#[test]
fn formats_round_trip_byte_identical() {
    let p = Path::new("mem");
    let text = "# n=6\n0,1,2\n5,4,3\n2,0,1\n";
    let set = parse_triplets(p, text).unwrap();
    assert_eq!(format_triplets(&set), text);
    assert_eq!(
        format_triplets(&parse_triplets(p, &format_triplets(&set)).unwrap()),
        text
    );

    let m = DMatrix::from_fn(3, 3, |i, j| {
        1.0 / (1.0 + i as f64 + j as f64) + 1e-17 * (i * j) as f64
    });
    let k = KernelMatrix::symmetrized(&m).unwrap();
    let once = format_kernel(&k);
    let back = parse_kernel(p, &once).unwrap();
    assert_eq!(back.matrix(), k.matrix());
    assert_eq!(format_kernel(&back), once);

    let state_model = ModelFile {
        n: 2,
        k0: vec![0.1, 1.0 / 3.0, 1.0 / 3.0, 2.0],
        mu: vec![std::f64::consts::PI],
        composed: vec![0.7, 0.2, 0.2, 1e-300],
        config: Default::default(),
        objective_history: vec![3.0, 2.5, 2.4999999999999996],
        iterations: 2,
        converged: false,
    };
    let json = state_model.to_json().unwrap();
    let back = ModelFile::from_json(p, &json).unwrap();
    assert_eq!(back, state_model);
    assert_eq!(back.to_json().unwrap(), json);

    let records = vec![
        ExperimentRecord {
            trial: 0,
            subset: 1,
            method: Method {
                mode: Mode::T,
                loss: LossKind::Ste,
            },
            training_triplets: 200,
            status: "ok".into(),
            test_error: 0.1234,
            validation_error: 0.2,
            lambda1: 1e-4,
            lambda2: 0.0,
            mu: vec![],
            rank_k0: 12,
        },
        ExperimentRecord {
            trial: 0,
            subset: 1,
            method: Method {
                mode: Mode::Ak,
                loss: LossKind::Gnmds,
            },
            training_triplets: 0,
            status: "conflicting triplets: (0,1,2) vs (0,2,1), \"quoted\"".into(),
            test_error: f64::NAN,
            validation_error: f64::NAN,
            lambda1: f64::NAN,
            lambda2: f64::NAN,
            mu: vec![1.5, 0.0],
            rank_k0: 0,
        },
    ];
    let csv = format_records(&records).unwrap();
    assert!(csv.starts_with(
        "trial,subset,method,loss,status,training_triplets,test_error,validation_error,lambda1,lambda2,mu_1,mu_2,rank_k0\n"
    ));
    let back = parse_records(p, &csv).unwrap();
    assert_eq!(format_records(&back).unwrap(), csv);
    assert_eq!(back[0], records[0]);
    assert_eq!(back[1].status, records[1].status);
    assert!(back[1].test_error.is_nan());
}

#[test]
fn triplet_parse_errors() {
    let p = Path::new("f");
    assert!(parse_triplets(p, "0,1,1\n").is_err());
    assert!(parse_triplets(p, "0,1,2\n0,1,2\n").is_err());
    assert!(parse_triplets(p, "# n=3\n0,1,3\n").is_err());
    assert!(parse_triplets(p, "# n=3\n# n=4\n").is_err());
    assert!(parse_triplets(p, "a,b,c\n").is_err());
    let set = parse_triplets(p, "  0 , 1 , 2  # trailing comment\n\n").unwrap();
    assert_eq!(
        set,
        TripletSet::from_triplets(3, [rckl::Triplet::new(0, 1, 2).unwrap()]).unwrap()
    );
}

#[test]
fn default_config_document_round_trips() {
    let cfg = RunConfig::default();
    let text = cfg.to_json();
    assert_eq!(RunConfig::parse(Path::new("c"), &text).unwrap(), cfg);
    assert_eq!(RunConfig::parse(Path::new("c"), "{}").unwrap(), cfg);
}

#[test]
fn generate_then_train_and_evaluate() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "c.json",
        r#"{"experiment": {"synthetic": {"n": 20, "seed": 4}, "rounds": 12, "train_rounds": 2,
            "validation_rounds": 1, "subsets": 1}}"#,
    );
    let out = dir.path().join("data");
    let o = rckl(&[
        "generate",
        "--config",
        s(&cfg),
        "--out-dir",
        s(&out),
        "--subset",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "truth.csv",
        "aux_1.csv",
        "aux_6.csv",
        "train.txt",
        "validation.txt",
        "test.txt",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let model = dir.path().join("m.json");
    let mut args = vec!["train", "--triplets"];
    let train = out.join("train.txt");
    args.push(s(&train));
    let kernels: Vec<PathBuf> = (1..=6).map(|i| out.join(format!("aux_{i}.csv"))).collect();
    for k in &kernels {
        args.push("--kernel");
        args.push(s(k));
    }
    args.extend(["--max-iters", "50", "--out", s(&model)]);
    let o = rckl(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let test = out.join("test.txt");
    let o = rckl(&["evaluate", "--model", s(&model), "--triplets", s(&test)]);
    let rate: f64 = stdout(&o).trim().parse().unwrap();
    assert!((0.0..=1.0).contains(&rate));
}
