use std::fs;
use std::path::{Path, PathBuf};

use haloforge_cli::{execute, CliError, RunConfig};

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn halo(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("halo").chain(args.iter().copied());
    let code = execute(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL: &str = "\
model = advection
n = 16
steps = 4
[exec]
ranks = 2
threads = 2
[output]
snapshot_every = 2
";

#[test]
fn shipped_configs_round_trip_canonically() {
    for name in ["advection.cfg", "mhd.cfg", "model.cfg"] {
        let text = fs::read_to_string(repo("configs").join(name)).unwrap();
        let parsed = RunConfig::parse(&text).unwrap();
        let canon = parsed.to_canonical();
        let again = RunConfig::parse(&canon).unwrap();
        assert_eq!(parsed, again, "{name}");
        assert_eq!(again.to_canonical(), canon, "{name}");
    }
}

#[test]
fn run_snapshots_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let (code, _, err) = halo(&["run", "--config", &cfg, "--out", dir.to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
    }
    for file in ["snapshot_000002.json", "snapshot_000002.bin", "snapshot_000004.json", "snapshot_000004.bin"] {
        let x = fs::read(a.join(file)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.join(file)).unwrap(), "{file}");
    }
    let (header, data) = haloforge_cli::snapshot::read(&a.join("snapshot_000004.json")).unwrap();
    assert_eq!(data.len(), 16 * 16 * 16);
    assert_eq!(header.variables, ["q"]);
    assert_eq!(header.byte_order, "little");
    let embedded = RunConfig::parse(&header.config).unwrap();
    assert_eq!(embedded, RunConfig::parse(SMALL).unwrap());
    let metrics = fs::read_to_string(a.join("metrics.kv")).unwrap();
    assert!(metrics.starts_with("# [problem]\n"));
    assert!(metrics.contains("region.halo_exchange.count"));
}

#[test]
fn run_snapshot_does_not_depend_on_the_decomposition() {
    let tmp = tempfile::tempdir().unwrap();
    let mut bins = Vec::new();
    for (i, exec) in ["ranks = 1\nthreads = 1", "ranks = 4\nthreads = 3\nschedule = guided\nbackend = concurrent"]
        .iter()
        .enumerate()
    {
        let cfg = write_config(tmp.path(), &format!("model = mhd\nn = 16\nsteps = 3\n[exec]\n{exec}\n"));
        let out = tmp.path().join(format!("o{i}"));
        let (code, _, err) = halo(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
        bins.push(fs::read(out.join("snapshot_000003.bin")).unwrap());
    }
    assert_eq!(bins[0], bins[1]);
}

#[test]
fn seed_flag_perturbs_the_initial_state() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "model = advection\nn = 16\nsteps = 0\n");
    let mut bins = Vec::new();
    for seed in ["0", "7"] {
        let out = tmp.path().join(seed);
        let (code, _, err) = halo(&["run", "--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
        bins.push(fs::read(out.join("snapshot_000000.bin")).unwrap());
    }
    assert_ne!(bins[0], bins[1]);
}

#[test]
fn sweep_with_one_thread_has_unit_speedup() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "model = advection\nn = 16\nsteps = 2\n");
    let out = tmp.path().join("out");
    let (code, _, err) = halo(&["sweep", "--config", &cfg, "--threads", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(out.join("sweep.csv"))
        .unwrap();
    let idx = reader.headers().unwrap().iter().position(|h| h == "speedup").unwrap();
    let speedups: Vec<f64> = reader.records().map(|r| r.unwrap()[idx].parse().unwrap()).collect();
    assert_eq!(speedups, [1.0, 1.0]);
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(text.contains("# model = advection"));
}

#[test]
fn model_writes_curves_and_reports_sweet_spots() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = repo("configs/model.cfg");
    let (code, stdout, err) = halo(&["model", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("28 ranks/node at 32 nodes (896 cores)"), "{stdout}");
    assert!(stdout.contains("4 ranks/node at 128 nodes (3584 cores)"), "{stdout}");
    let csv = fs::read_to_string(tmp.path().join("scaling.csv")).unwrap();
    assert!(csv.contains("ranks_per_node,nodes,cores,sec_per_iter,compute,comm,serial"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 11);
    let dat = fs::read_to_string(tmp.path().join("scaling_hybrid.dat")).unwrap();
    let points: Vec<&str> = dat.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(points.len(), 5);
    assert!(points.iter().all(|l| l.split(' ').count() == 2));
}

#[test]
fn report_prints_improvements() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = repo("data/compiler_timings.csv");
    let (code, stdout, _) = halo(&["report", "--csv", csv.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.contains("12.39"), "{stdout}");
    assert!(stdout.contains("15.79"), "{stdout}");
    assert!(fs::read_to_string(tmp.path().join("report.csv")).unwrap().contains("# source = "));
}

#[test]
fn exit_codes_by_failure_class() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(halo(&["run"]).0, 1);
    assert_eq!(halo(&["frobnicate"]).0, 1);
    assert_eq!(halo(&["verify", "--suite", "nope", "--out", out]).0, 1);
    let (code, stdout, _) = halo(&["--help"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("sweep"));

    let bad = write_config(tmp.path(), "model = mhd\nn = 16\nsteps = 1\n[exec]\nthread = 4\n");
    let (code, _, err) = halo(&["run", "--config", &bad, "--out", out]);
    assert_eq!(code, 2);
    assert!(err.contains("line 5") && err.contains("`thread`"), "{err}");
    assert_eq!(halo(&["run", "--config", "/no/such/file.cfg", "--out", out]).0, 2);
    let sweep = write_config(tmp.path(), "model = advection\nn = 16\nsteps = 1\n");
    assert_eq!(halo(&["sweep", "--config", &sweep, "--ranks", "16", "--out", out]).0, 2);

    let broken = tmp.path().join("broken.csv");
    fs::write(&broken, "label,grid,cores,sec_per_iter\n").unwrap();
    assert_eq!(halo(&["report", "--csv", broken.to_str().unwrap(), "--out", out]).0, 3);

    assert_eq!(CliError::Verification("x".into()).exit_code(), 4);
}

#[test]
fn verify_quick_suites_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, stdout, err) = halo(&[
        "verify", "--suite", "grid", "--suite", "perf", "--suite", "model", "--out", tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stdout}{err}");
    assert!(!stdout.contains("FAIL"));
    assert!(stdout.contains("perf.compiler_improvements"));
    assert!(stdout.trim_end().ends_with("0 failed"));
}
