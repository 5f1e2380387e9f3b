use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use haloforge::grid::decompose;
use haloforge::model::CalibrationTarget;
use haloforge::{
    calibrate, compare_scaling, run, serial_fraction, speedup, CurvePoint, ExecConfig, MetricsReport, Mode,
    Simulation,
};
use serde::Serialize;

use crate::config::{ConfigError, ReportFormat, RunConfig};
use crate::error::CliError;
use crate::report::{parse_timings, render_table, speedup_table, write_report_csv};
use crate::snapshot;
use crate::verify::{run_suite, Suite};

pub const CORE_BUDGET_VAR: &str = "HALOFORGE_CORE_BUDGET";

/// Streams and invocation-wide options shared by every command.
pub struct Context<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Context<'_> {
    fn say(&mut self, text: impl AsRef<str>) -> Result<(), CliError> {
        self.out
            .write_all(text.as_ref().as_bytes())
            .map_err(CliError::io("<stdout>"))
    }

    fn warn(&mut self, text: impl AsRef<str>) {
        let _ = writeln!(self.err, "warning: {}", text.as_ref());
    }

    /// `--out`, else the config's output directory.
    fn output_dir(&self, config: Option<&RunConfig>) -> Result<PathBuf, CliError> {
        let dir = match (&self.out_dir, config) {
            (Some(d), _) => d.clone(),
            (None, Some(c)) => PathBuf::from(&c.output.dir),
            (None, None) => PathBuf::from("out"),
        };
        fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
        Ok(dir)
    }
}

pub fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
    let mut config = RunConfig::parse(&text)?;
    if let (Some(seed), Some(p)) = (seed, config.problem.as_mut()) {
        p.seed = seed;
    }
    Ok(config)
}

/// Cores the machine offers unless the environment says otherwise.
fn core_budget() -> Result<usize, CliError> {
    match std::env::var(CORE_BUDGET_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .ok()
            .filter(|&b: &usize| b > 0)
            .ok_or_else(|| CliError::Usage(format!("{CORE_BUDGET_VAR} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn commented(text: &str) -> String {
    text.lines().map(|l| format!("# {l}\n")).collect()
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(CliError::io(path))
}

#[derive(Serialize)]
struct RunMetrics<'a> {
    config: &'a str,
    steps: u64,
    time: f64,
    last_dt: Option<f64>,
    metrics: &'a MetricsReport,
}

pub fn run_command(ctx: &mut Context, config_path: &Path) -> Result<(), CliError> {
    let config = load_config(config_path, ctx.seed)?;
    let p = config.require_problem()?.clone();
    let problem = p.to_problem()?;
    let exec = config.exec.to_exec_config();
    if let Some(w) = exec.oversubscription(core_budget()?) {
        ctx.warn(w);
    }
    let dir = ctx.output_dir(Some(&config))?;
    let canonical = config.to_canonical();

    let mut sim = Simulation::new(problem, exec)?;
    let every = config.output.snapshot_every;
    let mut written = Vec::new();
    let mut last_dt = None;
    for _ in 0..p.steps {
        let d = sim.step()?;
        last_dt = Some(d.dt);
        if every > 0 && d.step % every == 0 {
            written.push(snapshot::write(&dir, &sim.assemble(), d.step, d.time, &canonical)?);
        }
    }
    if every == 0 || p.steps % every != 0 {
        written.push(snapshot::write(&dir, &sim.assemble(), sim.steps_taken(), sim.time(), &canonical)?);
    }

    let metrics = sim.metrics();
    let metrics_path = match config.output.format {
        ReportFormat::Kv => {
            let path = dir.join("metrics.kv");
            let mut text = commented(&canonical);
            let _ = writeln!(text, "time = {}", sim.time());
            text.push_str(&metrics.to_kv());
            write_file(&path, &text)?;
            path
        }
        ReportFormat::Json => {
            let path = dir.join("metrics.json");
            let body = RunMetrics {
                config: &canonical,
                steps: sim.steps_taken(),
                time: sim.time(),
                last_dt,
                metrics: &metrics,
            };
            let mut text = serde_json::to_string_pretty(&body)?;
            text.push('\n');
            write_file(&path, &text)?;
            path
        }
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} {:?} on {} ranks x {} threads: {} steps to t = {:.6}",
        p.model_kind().name(),
        p.n,
        exec.ranks,
        exec.threads_per_rank,
        sim.steps_taken(),
        sim.time()
    );
    let _ = writeln!(
        s,
        "sec/iter {:.6}  spin {:.3}  comm {:.3}",
        metrics.sec_per_iter, metrics.spin_fraction, metrics.comm_fraction
    );
    for path in written.iter().chain([&metrics_path]) {
        let _ = writeln!(s, "wrote {}", path.display());
    }
    ctx.say(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub mode: &'static str,
    pub ranks: usize,
    pub threads: usize,
    pub cores: usize,
    pub sec_per_iter: f64,
    pub speedup: f64,
    pub spin_fraction: f64,
    pub comm_fraction: f64,
    /// Inverse Amdahl fit; empty unless the reference pair is one core.
    pub serial_fraction: Option<f64>,
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Optimized => "optimized",
        Mode::Baseline => "baseline",
    }
}

pub fn sweep_command(
    ctx: &mut Context,
    config_path: &Path,
    threads: Option<Vec<usize>>,
    ranks: Option<Vec<usize>>,
) -> Result<(), CliError> {
    let config = load_config(config_path, ctx.seed)?;
    let p = config.require_problem()?.clone();
    let problem = p.to_problem()?;
    let threads = threads.unwrap_or_else(|| vec![config.exec.threads]);
    let ranks = ranks.unwrap_or_else(|| vec![config.exec.ranks]);
    if threads.is_empty() || ranks.is_empty() || threads.contains(&0) || ranks.contains(&0) {
        return Err(CliError::Usage("--threads and --ranks take non-empty lists of positive counts".into()));
    }
    if p.steps == 0 {
        return Err(ConfigError::new("sweep needs steps >= 1 to time anything").into());
    }
    for &r in &ranks {
        decompose(r, &problem.grid)
            .map_err(|e| ConfigError::new(format!("grid {:?} cannot be split over {r} ranks: {e}", p.n)))?;
    }
    let budget = core_budget()?;
    let base = config.exec.to_exec_config();
    let dir = ctx.output_dir(Some(&config))?;

    let widest = ExecConfig {
        ranks: *ranks.iter().max().expect("non-empty"),
        threads_per_rank: *threads.iter().max().expect("non-empty"),
        ..base
    };
    if let Some(w) = widest.oversubscription(budget) {
        ctx.warn(w);
    }

    let mut rows = Vec::new();
    for mode in [Mode::Baseline, Mode::Optimized] {
        let mut reference: Option<(f64, usize)> = None;
        for &r in &ranks {
            for &t in &threads {
                let exec = ExecConfig {
                    ranks: r,
                    threads_per_rank: t,
                    mode,
                    ..base
                };
                let m = run(problem.clone(), exec, p.steps)?.metrics;
                let (t_ref, cores_ref) = *reference.get_or_insert((m.sec_per_iter, r * t));
                let s = speedup(t_ref, m.sec_per_iter)?.ratio;
                let fit = (cores_ref == 1 && r * t > 1)
                    .then(|| serial_fraction(s, r * t).ok())
                    .flatten();
                rows.push(SweepRow {
                    mode: mode_name(mode),
                    ranks: r,
                    threads: t,
                    cores: r * t,
                    sec_per_iter: m.sec_per_iter,
                    speedup: s,
                    spin_fraction: m.spin_fraction,
                    comm_fraction: m.comm_fraction,
                    serial_fraction: fit,
                });
            }
        }
    }

    let csv_path = dir.join("sweep.csv");
    write_csv(&csv_path, &config.to_canonical(), &rows)?;
    let mut written = vec![csv_path];
    for mode in [Mode::Baseline, Mode::Optimized] {
        let path = dir.join(format!("sweep_{}.dat", mode_name(mode)));
        let mut text = commented(&config.to_canonical());
        text.push_str("# cores speedup\n");
        for r in rows.iter().filter(|r| r.mode == mode_name(mode)) {
            let _ = writeln!(text, "{} {}", r.cores, r.speedup);
        }
        write_file(&path, &text)?;
        written.push(path);
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:>5} {:>7} {:>12} {:>8} {:>6} {:>6} {:>7}",
        "mode", "ranks", "threads", "sec/iter", "speedup", "spin", "comm", "serial"
    );
    for r in &rows {
        let fit = r.serial_fraction.map_or_else(|| "-".into(), |f| format!("{f:.3}"));
        let _ = writeln!(
            s,
            "{:<10} {:>5} {:>7} {:>12.6} {:>8.3} {:>6.3} {:>6.3} {:>7}",
            r.mode, r.ranks, r.threads, r.sec_per_iter, r.speedup, r.spin_fraction, r.comm_fraction, fit
        );
    }
    for path in &written {
        let _ = writeln!(s, "wrote {}", path.display());
    }
    ctx.say(s)
}

/// CSV with the producing config as leading `#` lines.
fn write_csv<T: Serialize>(path: &Path, canonical: &str, rows: &[T]) -> Result<(), CliError> {
    let mut body = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut body);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(CliError::io(path))?;
    }
    let mut text = commented(canonical);
    text.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    write_file(path, &text)
}

#[derive(Serialize)]
struct ScalingRow {
    ranks_per_node: usize,
    nodes: usize,
    cores: usize,
    sec_per_iter: f64,
    compute: f64,
    comm: f64,
    serial: f64,
    comm_latency: f64,
    comm_bandwidth: f64,
    comm_collective: f64,
}

impl ScalingRow {
    fn new(p: &CurvePoint, cores_per_node: usize) -> Self {
        Self {
            ranks_per_node: p.ranks_per_node,
            nodes: p.nodes,
            cores: p.cores(cores_per_node),
            sec_per_iter: p.sec_per_iter,
            compute: p.compute,
            comm: p.comm,
            serial: p.serial,
            comm_latency: p.comm_terms.latency,
            comm_bandwidth: p.comm_terms.bandwidth,
            comm_collective: p.comm_terms.collective,
        }
    }
}

pub fn model_command(ctx: &mut Context, config_path: &Path, fit: bool) -> Result<(), CliError> {
    let mut config = load_config(config_path, ctx.seed)?;
    let dir = ctx.output_dir(Some(&config))?;
    let mut s = String::new();
    if fit {
        let m = &config.model;
        let target = CalibrationTarget {
            n: m.n,
            nodes: m.nodes.clone(),
            pure_rpn: m.pure_rpn,
            hybrid_rpn: m.hybrid_rpn,
            ..CalibrationTarget::default()
        };
        let cal = calibrate(&m.constants, &target)?;
        let _ = writeln!(
            s,
            "calibrated sync_rounds = {:.1} (feasible {:.1} .. {:.1})",
            cal.constants.sync_rounds, cal.feasible.0, cal.feasible.1
        );
        config.model.constants = cal.constants;
    }
    let m = &config.model;
    let cpn = m.constants.cores_per_node;
    let cmp = compare_scaling(m.pure_rpn, m.hybrid_rpn, &m.constants, m.n, &m.nodes)?;
    let canonical = config.to_canonical();

    let rows: Vec<ScalingRow> = cmp.pure.iter().chain(&cmp.hybrid).map(|p| ScalingRow::new(p, cpn)).collect();
    let csv_path = dir.join("scaling.csv");
    write_csv(&csv_path, &canonical, &rows)?;
    let mut written = vec![csv_path];
    for (name, curve) in [("pure", &cmp.pure), ("hybrid", &cmp.hybrid)] {
        let path = dir.join(format!("scaling_{name}.dat"));
        let mut text = commented(&canonical);
        text.push_str("# nodes sec_per_iter\n");
        for p in curve {
            let _ = writeln!(text, "{} {}", p.nodes, p.sec_per_iter);
        }
        write_file(&path, &text)?;
        written.push(path);
    }

    let _ = writeln!(s, "{:>6} {:>14} {:>14}", "nodes", format!("rpn {}", m.pure_rpn), format!("rpn {}", m.hybrid_rpn));
    for (a, b) in cmp.pure.iter().zip(&cmp.hybrid) {
        let _ = writeln!(s, "{:>6} {:>14.6} {:>14.6}", a.nodes, a.sec_per_iter, b.sec_per_iter);
    }
    let _ = writeln!(
        s,
        "sweet spot: {} ranks/node at {} nodes ({} cores), {} ranks/node at {} nodes ({} cores)",
        m.pure_rpn,
        cmp.pure_sweet_spot,
        cmp.pure_sweet_spot * cpn,
        m.hybrid_rpn,
        cmp.hybrid_sweet_spot,
        cmp.hybrid_sweet_spot * cpn
    );
    match cmp.crossover {
        Some(n) => {
            let _ = writeln!(s, "crossover: hybrid faster from {n} nodes");
        }
        None => {
            let _ = writeln!(s, "crossover: none in range");
        }
    }
    match cmp.comm_ratio {
        Some(r) => {
            let _ = writeln!(s, "comm ratio at sweet spots (pure / hybrid): {r:.3}");
        }
        None => {
            let _ = writeln!(s, "comm ratio: undefined (hybrid comm is zero)");
        }
    }
    for path in &written {
        let _ = writeln!(s, "wrote {}", path.display());
    }
    ctx.say(s)
}

pub fn report_command(ctx: &mut Context, csv_path: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(csv_path).map_err(CliError::io(csv_path))?;
    let rows = speedup_table(&parse_timings(&text)?)?;
    let dir = ctx.output_dir(None)?;
    let out = dir.join("report.csv");
    write_report_csv(&out, csv_path, &rows)?;
    let mut s = render_table(&rows);
    let _ = writeln!(s, "wrote {}", out.display());
    ctx.say(s)
}

pub fn verify_command(ctx: &mut Context, suites: &[String]) -> Result<(), CliError> {
    let selected: Vec<Suite> = if suites.is_empty() {
        Suite::ALL.to_vec()
    } else {
        suites
            .iter()
            .map(|name| {
                Suite::from_name(name).ok_or_else(|| {
                    let known: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
                    CliError::Usage(format!("unknown suite {name:?} (known: {})", known.join(", ")))
                })
            })
            .collect::<Result<_, _>>()?
    };
    let (mut passed, mut failed) = (0, Vec::new());
    for suite in selected {
        let mut io_error = None;
        let checks = run_suite(suite, &mut |c| {
            if let Err(e) = writeln!(ctx.out, "{}", c.line()).and_then(|_| ctx.out.flush()) {
                io_error.get_or_insert(e);
            }
        });
        if let Some(e) = io_error {
            return Err(CliError::io("<stdout>")(e));
        }
        for c in checks {
            if c.passed() {
                passed += 1;
            } else {
                failed.push(c.name);
            }
        }
    }
    ctx.say(format!("{passed} passed, {} failed\n", failed.len()))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}
