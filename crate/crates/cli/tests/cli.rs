//! End-to-end checks of the `handwave` binary: exit codes, artifact layout,
//! determinism, and that `experiment` is exactly the staged commands chained.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_handwave"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary spawns");
    assert!(
        out.status.success(),
        "handwave {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Tiny-but-trainable dataset knobs shared by the pipeline tests.
const TINY: &[&str] = &["--per-class", "8", "--epochs", "1", "--batch", "4"];

fn with_tiny(args: &[&str]) -> Vec<String> {
    args.iter().chain(TINY).map(|s| s.to_string()).collect()
}

#[test]
fn gradcheck_exit_codes() {
    let out = run_ok(&["gradcheck", "selu", "--trials", "2"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("selu: PASS"));

    let out = bin().args(["gradcheck", "no-such-layer"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unknown layer"), "stderr: {err}");
    // the registry listing names at least the exotic layers
    assert!(err.contains("deform-conv") && err.contains("pnorm-pool"), "stderr: {err}");

    let out = bin().args(["gradcheck"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

fn read_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(str::to_string)
        .collect()
}

/// Strip the wall-clock columns (median_infer_us, train_s) out of a results row.
fn without_timing(line: &str) -> String {
    let cells: Vec<&str> = line.split(',').collect();
    assert_eq!(cells.len(), 21, "row: {line}");
    cells
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != 18 && *i != 19)
        .map(|(_, c)| *c)
        .collect::<Vec<_>>()
        .join(",")
}

#[test]
fn experiment_layout_and_rerun_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let exp1 = dir.path().join("exp1");
    let exp2 = dir.path().join("exp2");
    let mut args = with_tiny(&["experiment", "--seeds", "1,2"]);
    for exp in [&exp1, &exp2] {
        let mut a = args.clone();
        a.push("--out".into());
        a.push(exp.to_str().unwrap().into());
        run_ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
    }

    // layout: config echo, both stages, one run dir per (axis, seed)
    for p in ["config.json", "frames/manifest.json", "images/manifest.json", "results.csv"] {
        assert!(exp1.join(p).exists(), "missing {p}");
    }
    for axis in ["cnn", "dedcgan-deformable-selu"] {
        for seed in ["1", "2"] {
            let run = exp1.join("runs").join(axis).join(seed);
            assert!(run.join("manifest.json").exists(), "missing run {axis}/{seed}");
            assert!(run.join("losses.csv").exists());
        }
    }

    // 2 axes x 2 seeds + 2 summary rows
    let rows = read_lines(&exp1.join("results.csv"));
    assert_eq!(rows.len(), 1 + 4 + 2);
    assert_eq!(rows[0], "config_hash,axis,arch,kernel,activation,transform,seed,n_train,n_val,n_test,params,epochs,d_loss,g_loss,acc_val,acc_test,recalls,confusion,median_infer_us,train_s,delta");
    let summaries: Vec<&String> = rows.iter().filter(|r| r.contains(",median,")).collect();
    assert_eq!(summaries.len(), 2);
    // delta filled only on summary rows; cnn's own delta is 0
    for r in &rows[1..] {
        let cells: Vec<&str> = r.split(',').collect();
        if cells[6] == "median" {
            assert!(!cells[20].is_empty(), "summary delta empty: {r}");
        } else {
            assert!(cells[20].is_empty(), "data row has delta: {r}");
        }
    }
    let cnn_summary = summaries.iter().find(|r| r.starts_with(&format!("{},cnn", rows[1].split(',').next().unwrap()))).unwrap();
    assert!(cnn_summary.ends_with(",0"), "cnn delta: {cnn_summary}");

    // rerun is byte-identical once wall-clock columns are dropped
    let a = read_lines(&exp1.join("results.csv"));
    let b = read_lines(&exp2.join("results.csv"));
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(&b).skip(1) {
        assert_eq!(without_timing(ra), without_timing(rb));
    }
    // and the trained weights themselves match bit for bit
    let p = "runs/cnn/1/params/cnn.head.weight.dgt";
    assert_eq!(fs::read(exp1.join(p)).unwrap(), fs::read(exp2.join(p)).unwrap());
}

#[test]
fn experiment_equals_staged_commands() {
    let dir = tempfile::tempdir().unwrap();
    let exp = dir.path().join("exp");
    let mut args = with_tiny(&["experiment", "--seeds", "3"]);
    args.extend(["--out".into(), exp.to_str().unwrap().to_string()]);
    run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());

    let frames = dir.path().join("frames");
    let images = dir.path().join("images");
    let ckpt = dir.path().join("ckpt");
    let mut args = with_tiny(&["synth"]);
    args.extend(["--out".into(), frames.to_str().unwrap().to_string()]);
    run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let mut args = with_tiny(&["tfa", frames.to_str().unwrap()]);
    args.extend(["--out".into(), images.to_str().unwrap().to_string()]);
    run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let mut args = with_tiny(&["train", images.to_str().unwrap(), "--axis", "cnn", "--train-seed", "3"]);
    args.extend(["--out".into(), ckpt.to_str().unwrap().to_string()]);
    run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());

    // stage outputs are byte-identical to what experiment materialized
    assert_eq!(
        fs::read(frames.join("manifest.json")).unwrap(),
        fs::read(exp.join("frames/manifest.json")).unwrap()
    );
    assert_eq!(
        fs::read(images.join("samples/000000.dgt")).unwrap(),
        fs::read(exp.join("images/samples/000000.dgt")).unwrap()
    );
    let run = exp.join("runs/cnn/3");
    assert_eq!(
        fs::read(ckpt.join("manifest.json")).unwrap(),
        fs::read(run.join("manifest.json")).unwrap()
    );
    for entry in fs::read_dir(ckpt.join("params")).unwrap() {
        let name = entry.unwrap().file_name();
        let a = fs::read(ckpt.join("params").join(&name)).unwrap();
        let b = fs::read(run.join("params").join(&name)).unwrap();
        assert_eq!(a, b, "params differ: {name:?}");
    }
}

#[test]
fn eval_and_gen_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    let images = dir.path().join("images");
    let ckpt = dir.path().join("gan");

    let mut args = with_tiny(&["synth"]);
    args.extend(["--out".into(), frames.to_str().unwrap().to_string()]);
    run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let mut args = with_tiny(&["tfa", frames.to_str().unwrap()]);
    args.extend(["--out".into(), images.to_str().unwrap().to_string()]);
    run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let mut args = with_tiny(&["train", images.to_str().unwrap(), "--axis", "dedcgan"]);
    args.extend(["--out".into(), ckpt.to_str().unwrap().to_string()]);
    run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());

    // eval: CSV carries the pinned header, config hash first
    let csv = dir.path().join("eval.csv");
    let mut args = with_tiny(&["eval", ckpt.to_str().unwrap(), images.to_str().unwrap(), "--split", "val"]);
    args.extend(["--out".into(), csv.to_str().unwrap().to_string()]);
    run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let rows = read_lines(&csv);
    assert_eq!(rows.len(), 2);
    assert_eq!(
        rows[0],
        "config_hash,model,split,n,accuracy,recalls,confusion,median_infer_us,params"
    );
    assert_eq!(rows[1].split(',').next().unwrap().len(), 12);
    assert!(rows[1].contains(",val,8,"), "row: {}", rows[1]);

    // gen: deterministic DGT tensors plus PGM previews
    let s1 = dir.path().join("s1");
    let s2 = dir.path().join("s2");
    for s in [&s1, &s2] {
        run_ok(&["gen", ckpt.to_str().unwrap(), "--n", "3", "--seed", "7", "--out", s.to_str().unwrap()]);
    }
    for i in 0..3 {
        assert!(s1.join(format!("sample_{i:03}.pgm")).exists());
        assert_eq!(
            fs::read(s1.join(format!("sample_{i:03}.dgt"))).unwrap(),
            fs::read(s2.join(format!("sample_{i:03}.dgt"))).unwrap()
        );
    }
    let pgm = fs::read(s1.join("sample_000.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n128 64\n255\n"), "pgm header wrong");
    assert_eq!(pgm.len(), b"P5\n128 64\n255\n".len() + 128 * 64);

    // bench: two rows, pinned columns, repeats scale sanely
    let bcsv = dir.path().join("bench.csv");
    run_ok(&[
        "bench",
        ckpt.to_str().unwrap(),
        ckpt.to_str().unwrap(),
        "--repeats",
        "10",
        "--warmup",
        "2",
        "--out",
        bcsv.to_str().unwrap(),
    ]);
    let rows = read_lines(&bcsv);
    assert_eq!(rows[0], "config_hash,model,median_ms,p10_ms,p90_ms,params");
    assert_eq!(rows.len(), 3);
}
