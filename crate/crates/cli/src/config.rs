//! Run configuration: a line-oriented `key = value` format with
//! `[section]` headers and `#` comments.
//!
//! ```text
//! # keys before the first header belong to [problem]
//! model = mhd          # advection | mhd            (required)
//! n = 32               # one value or three         (required)
//! steps = 100          #                            (required)
//! initial = smooth     # default: sine (advection), smooth (mhd)
//! cfl = 0.4
//! gamma = 1.6666666666666667
//! velocity = 1, 1, 1
//! seed = 0             # 0 disables the perturbation
//!
//! [exec]
//! ranks = 1
//! threads = 1
//! schedule = static    # static | guided
//! min_chunk = 1
//! mode = optimized     # optimized | baseline
//! backend = sequential # sequential | concurrent
//!
//! [output]
//! dir = out
//! snapshot_every = 0   # 0 writes the final snapshot only
//! format = kv          # kv | json
//!
//! [model]
//! a = 2e-7             # also s, latency, beta, sync_rounds, cores_per_node,
//! n = 1024             # bytes_per_value, vars, halo, messages, nodes,
//! nodes = 16, 32       # pure_rpn, hybrid_rpn
//! ```
//!
//! Unknown sections and keys are errors. [`RunConfig::to_canonical`]
//! writes every key in a fixed order; parsing it back gives an equal
//! config and re-serializing gives identical text.

use std::collections::HashSet;
use std::fmt::{self, Write as _};

use haloforge::exec::InitialCondition;
use haloforge::grid::decompose;
use haloforge::{ExecConfig, GlobalGrid, Mode, ModelKind, Problem, RankBackend, ScalingConstants, Schedule};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "config line {line}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }

    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModelChoice {
    Advection,
    Mhd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemSection {
    pub model: ModelChoice,
    pub n: [usize; 3],
    pub initial: InitialCondition,
    pub cfl: f64,
    pub steps: u64,
    pub gamma: f64,
    pub velocity: [f64; 3],
    pub seed: u64,
}

impl ProblemSection {
    pub fn model_kind(&self) -> ModelKind {
        match self.model {
            ModelChoice::Advection => ModelKind::Advection {
                velocity: self.velocity,
            },
            ModelChoice::Mhd => ModelKind::IdealMhd { gamma: self.gamma },
        }
    }

    pub fn to_problem(&self) -> Result<Problem, ConfigError> {
        let grid = GlobalGrid::new(self.n).map_err(|e| ConfigError::new(e.to_string()))?;
        Problem::new(self.model_kind(), grid, self.initial, self.cfl)
            .map(|p| p.with_seed(self.seed))
            .map_err(|e| ConfigError::new(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExecSection {
    pub ranks: usize,
    pub threads: usize,
    pub guided: bool,
    pub min_chunk: usize,
    pub mode: Mode,
    pub backend: RankBackend,
}

impl Default for ExecSection {
    fn default() -> Self {
        Self {
            ranks: 1,
            threads: 1,
            guided: false,
            min_chunk: 1,
            mode: Mode::Optimized,
            backend: RankBackend::Sequential,
        }
    }
}

impl ExecSection {
    pub fn to_exec_config(&self) -> ExecConfig {
        ExecConfig {
            ranks: self.ranks,
            threads_per_rank: self.threads,
            schedule: if self.guided {
                Schedule::Guided {
                    min_chunk: self.min_chunk,
                }
            } else {
                Schedule::Static
            },
            mode: self.mode,
            backend: self.backend,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReportFormat {
    Kv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSection {
    pub dir: String,
    pub snapshot_every: u64,
    pub format: ReportFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            snapshot_every: 0,
            format: ReportFormat::Kv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSection {
    pub constants: ScalingConstants,
    pub n: usize,
    pub nodes: Vec<usize>,
    pub pure_rpn: usize,
    pub hybrid_rpn: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            constants: ScalingConstants::default(),
            n: 1024,
            nodes: vec![16, 32, 64, 128, 256],
            pure_rpn: 28,
            hybrid_rpn: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// Absent in model-only configs.
    pub problem: Option<ProblemSection>,
    pub exec: ExecSection,
    pub output: OutputSection,
    pub model: ModelSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Section {
    Problem,
    Exec,
    Output,
    Model,
}

impl Section {
    fn name(self) -> &'static str {
        match self {
            Section::Problem => "problem",
            Section::Exec => "exec",
            Section::Output => "output",
            Section::Model => "model",
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Section::Problem => &["model", "n", "initial", "cfl", "steps", "gamma", "velocity", "seed"],
            Section::Exec => &["ranks", "threads", "schedule", "min_chunk", "mode", "backend"],
            Section::Output => &["dir", "snapshot_every", "format"],
            Section::Model => &[
                "a",
                "s",
                "latency",
                "beta",
                "sync_rounds",
                "cores_per_node",
                "bytes_per_value",
                "vars",
                "halo",
                "messages",
                "n",
                "nodes",
                "pure_rpn",
                "hybrid_rpn",
            ],
        }
    }
}

/// Keys of the problem section as first seen, before defaults.
#[derive(Default)]
struct ProblemDraft {
    model: Option<ModelChoice>,
    n: Option<[usize; 3]>,
    initial: Option<InitialCondition>,
    cfl: Option<f64>,
    steps: Option<u64>,
    gamma: Option<f64>,
    velocity: Option<[f64; 3]>,
    seed: Option<u64>,
    first_line: Option<usize>,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("`{key}` expects a number, got {value:?}"))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, String> {
    value
        .split(',')
        .map(|item| parse_num(key, item.trim()))
        .collect()
}

fn parse_triple<T: std::str::FromStr + Copy>(key: &str, value: &str) -> Result<[T; 3], String> {
    match parse_list::<T>(key, value)?.as_slice() {
        [x] => Ok([*x; 3]),
        [x, y, z] => Ok([*x, *y, *z]),
        other => Err(format!("`{key}` expects 1 or 3 values, got {}", other.len())),
    }
}

fn parse_choice<T: Copy>(key: &str, value: &str, options: &[(&str, T)]) -> Result<T, String> {
    options
        .iter()
        .find(|(name, _)| *name == value)
        .map(|(_, v)| *v)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            format!("`{key}` must be one of {}, got {value:?}", names.join(" | "))
        })
}

const MODELS: [(&str, ModelChoice); 2] = [("advection", ModelChoice::Advection), ("mhd", ModelChoice::Mhd)];
const MODES: [(&str, Mode); 2] = [("optimized", Mode::Optimized), ("baseline", Mode::Baseline)];
const BACKENDS: [(&str, RankBackend); 2] = [
    ("sequential", RankBackend::Sequential),
    ("concurrent", RankBackend::Concurrent),
];
const SCHEDULES: [(&str, bool); 2] = [("static", false), ("guided", true)];
const FORMATS: [(&str, ReportFormat); 2] = [("kv", ReportFormat::Kv), ("json", ReportFormat::Json)];

fn name_of<T: PartialEq>(options: &[(&'static str, T)], value: &T) -> &'static str {
    options.iter().find(|(_, v)| v == value).map(|(n, _)| *n).expect("every variant is named")
}

/// Shortest exact representation; exponent form for very small or large
/// magnitudes.
fn fmt_f64(x: f64) -> String {
    if x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e7) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn fmt_list<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn suggestion(section: Section, key: &str) -> String {
    let close = section
        .keys()
        .iter()
        .find(|k| k.starts_with(key) || key.starts_with(*k))
        .map(|k| format!(" (did you mean `{k}`?)"));
    close.unwrap_or_default()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut section = Section::Problem;
        let mut seen: HashSet<(Section, String)> = HashSet::new();
        let mut draft = ProblemDraft::default();
        let mut exec = ExecSection::default();
        let mut output = OutputSection::default();
        let mut model = ModelSection::default();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(line_no, format!("malformed section header {line:?}")))?
                    .trim();
                section = match name {
                    "problem" => Section::Problem,
                    "exec" => Section::Exec,
                    "output" => Section::Output,
                    "model" => Section::Model,
                    other => {
                        return Err(ConfigError::at(
                            line_no,
                            format!("unknown section [{other}] (expected problem, exec, output or model)"),
                        ))
                    }
                };
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| ConfigError::at(line_no, format!("expected `key = value`, got {line:?}")))?;
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::at(line_no, format!("expected `key = value`, got {line:?}")));
            }
            if !section.keys().contains(&key) {
                return Err(ConfigError::at(
                    line_no,
                    format!(
                        "unknown key `{key}` in [{}]{}",
                        section.name(),
                        suggestion(section, key)
                    ),
                ));
            }
            if !seen.insert((section, key.to_owned())) {
                return Err(ConfigError::at(
                    line_no,
                    format!("duplicate key `{key}` in [{}]", section.name()),
                ));
            }
            let result = match section {
                Section::Problem => {
                    draft.first_line.get_or_insert(line_no);
                    set_problem(&mut draft, key, value)
                }
                Section::Exec => set_exec(&mut exec, key, value),
                Section::Output => set_output(&mut output, key, value),
                Section::Model => set_model(&mut model, key, value),
            };
            result.map_err(|m| ConfigError::at(line_no, m))?;
        }

        let problem = match draft.first_line {
            None => None,
            Some(_) => Some(finish_problem(draft)?),
        };
        let config = RunConfig {
            problem,
            exec,
            output,
            model,
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks that do not depend on a single key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let e = &self.exec;
        if e.ranks == 0 || e.threads == 0 || e.min_chunk == 0 {
            return Err(ConfigError::new("ranks, threads and min_chunk must be at least 1"));
        }
        if let Some(p) = &self.problem {
            if !p.initial.supports(&p.model_kind()) {
                return Err(ConfigError::new(format!(
                    "initial condition `{}` is not defined for model `{}`",
                    p.initial.name(),
                    name_of(&MODELS, &p.model)
                )));
            }
            let problem = p.to_problem()?;
            decompose(e.ranks, &problem.grid).map_err(|err| {
                ConfigError::new(format!("grid {:?} cannot be split over {} ranks: {err}", p.n, e.ranks))
            })?;
        }
        let m = &self.model;
        m.constants
            .validate()
            .map_err(|err| ConfigError::new(format!("[model] {err}")))?;
        if m.nodes.is_empty() || m.nodes.contains(&0) {
            return Err(ConfigError::new("[model] nodes must be a non-empty list of positive counts"));
        }
        for rpn in [m.pure_rpn, m.hybrid_rpn] {
            if rpn == 0 || m.constants.cores_per_node % rpn != 0 {
                return Err(ConfigError::new(format!(
                    "[model] ranks per node {rpn} must divide cores_per_node {}",
                    m.constants.cores_per_node
                )));
            }
        }
        Ok(())
    }

    /// Every key in a fixed order.
    pub fn to_canonical(&self) -> String {
        let mut s = String::new();
        if let Some(p) = &self.problem {
            let _ = writeln!(s, "[problem]");
            let _ = writeln!(s, "model = {}", name_of(&MODELS, &p.model));
            let _ = writeln!(s, "n = {}", fmt_list(&p.n));
            let _ = writeln!(s, "initial = {}", p.initial.name());
            let _ = writeln!(s, "cfl = {}", fmt_f64(p.cfl));
            let _ = writeln!(s, "steps = {}", p.steps);
            let _ = writeln!(s, "gamma = {}", fmt_f64(p.gamma));
            let v: Vec<String> = p.velocity.iter().map(|&x| fmt_f64(x)).collect();
            let _ = writeln!(s, "velocity = {}", v.join(", "));
            let _ = writeln!(s, "seed = {}", p.seed);
            let _ = writeln!(s);
        }
        let e = &self.exec;
        let _ = writeln!(s, "[exec]");
        let _ = writeln!(s, "ranks = {}", e.ranks);
        let _ = writeln!(s, "threads = {}", e.threads);
        let _ = writeln!(s, "schedule = {}", name_of(&SCHEDULES, &e.guided));
        let _ = writeln!(s, "min_chunk = {}", e.min_chunk);
        let _ = writeln!(s, "mode = {}", name_of(&MODES, &e.mode));
        let _ = writeln!(s, "backend = {}", name_of(&BACKENDS, &e.backend));
        let _ = writeln!(s);
        let o = &self.output;
        let _ = writeln!(s, "[output]");
        let _ = writeln!(s, "dir = {}", o.dir);
        let _ = writeln!(s, "snapshot_every = {}", o.snapshot_every);
        let _ = writeln!(s, "format = {}", name_of(&FORMATS, &o.format));
        let _ = writeln!(s);
        let m = &self.model;
        let c = &m.constants;
        let _ = writeln!(s, "[model]");
        let _ = writeln!(s, "a = {}", fmt_f64(c.a));
        let _ = writeln!(s, "s = {}", fmt_f64(c.s));
        let _ = writeln!(s, "latency = {}", fmt_f64(c.latency));
        let _ = writeln!(s, "beta = {}", fmt_f64(c.beta));
        let _ = writeln!(s, "sync_rounds = {}", fmt_f64(c.sync_rounds));
        let _ = writeln!(s, "cores_per_node = {}", c.cores_per_node);
        let _ = writeln!(s, "bytes_per_value = {}", c.bytes_per_value);
        let _ = writeln!(s, "vars = {}", c.vars);
        let _ = writeln!(s, "halo = {}", c.halo);
        let _ = writeln!(s, "messages = {}", fmt_f64(c.messages));
        let _ = writeln!(s, "n = {}", m.n);
        let _ = writeln!(s, "nodes = {}", fmt_list(&m.nodes));
        let _ = writeln!(s, "pure_rpn = {}", m.pure_rpn);
        let _ = writeln!(s, "hybrid_rpn = {}", m.hybrid_rpn);
        s
    }

    pub fn require_problem(&self) -> Result<&ProblemSection, ConfigError> {
        self.problem
            .as_ref()
            .ok_or_else(|| ConfigError::new("missing [problem] section (model, n and steps are required)"))
    }
}

fn set_problem(d: &mut ProblemDraft, key: &str, value: &str) -> Result<(), String> {
    match key {
        "model" => d.model = Some(parse_choice(key, value, &MODELS)?),
        "n" => d.n = Some(parse_triple(key, value)?),
        "initial" => {
            d.initial = Some(InitialCondition::from_name(value).ok_or_else(|| {
                format!(
                    "unknown initial condition {value:?} (known: {})",
                    InitialCondition::NAMES.join(", ")
                )
            })?)
        }
        "cfl" => d.cfl = Some(parse_num(key, value)?),
        "steps" => d.steps = Some(parse_num(key, value)?),
        "gamma" => d.gamma = Some(parse_num(key, value)?),
        "velocity" => d.velocity = Some(parse_triple(key, value)?),
        "seed" => d.seed = Some(parse_num(key, value)?),
        _ => unreachable!("keys are checked against the section list"),
    }
    Ok(())
}

fn finish_problem(d: ProblemDraft) -> Result<ProblemSection, ConfigError> {
    let missing = |key: &str| ConfigError::new(format!("missing required key `{key}` in [problem]"));
    let model = d.model.ok_or_else(|| missing("model"))?;
    let n = d.n.ok_or_else(|| missing("n"))?;
    let steps = d.steps.ok_or_else(|| missing("steps"))?;
    let mut p = ProblemSection {
        model,
        n,
        initial: InitialCondition::Uniform,
        cfl: d.cfl.unwrap_or(0.4),
        steps,
        gamma: d.gamma.unwrap_or(5.0 / 3.0),
        velocity: d.velocity.unwrap_or([1.0; 3]),
        seed: d.seed.unwrap_or(0),
    };
    p.initial = d.initial.unwrap_or_else(|| InitialCondition::default_for(&p.model_kind()));
    Ok(p)
}

fn set_exec(e: &mut ExecSection, key: &str, value: &str) -> Result<(), String> {
    match key {
        "ranks" => e.ranks = parse_num(key, value)?,
        "threads" => e.threads = parse_num(key, value)?,
        "schedule" => e.guided = parse_choice(key, value, &SCHEDULES)?,
        "min_chunk" => e.min_chunk = parse_num(key, value)?,
        "mode" => e.mode = parse_choice(key, value, &MODES)?,
        "backend" => e.backend = parse_choice(key, value, &BACKENDS)?,
        _ => unreachable!("keys are checked against the section list"),
    }
    Ok(())
}

fn set_output(o: &mut OutputSection, key: &str, value: &str) -> Result<(), String> {
    match key {
        "dir" => o.dir = value.to_owned(),
        "snapshot_every" => o.snapshot_every = parse_num(key, value)?,
        "format" => o.format = parse_choice(key, value, &FORMATS)?,
        _ => unreachable!("keys are checked against the section list"),
    }
    Ok(())
}

fn set_model(m: &mut ModelSection, key: &str, value: &str) -> Result<(), String> {
    let c = &mut m.constants;
    match key {
        "a" => c.a = parse_num(key, value)?,
        "s" => c.s = parse_num(key, value)?,
        "latency" => c.latency = parse_num(key, value)?,
        "beta" => c.beta = parse_num(key, value)?,
        "sync_rounds" => c.sync_rounds = parse_num(key, value)?,
        "cores_per_node" => c.cores_per_node = parse_num(key, value)?,
        "bytes_per_value" => c.bytes_per_value = parse_num(key, value)?,
        "vars" => c.vars = parse_num(key, value)?,
        "halo" => c.halo = parse_num(key, value)?,
        "messages" => c.messages = parse_num(key, value)?,
        "n" => m.n = parse_num(key, value)?,
        "nodes" => m.nodes = parse_list(key, value)?,
        "pure_rpn" => m.pure_rpn = parse_num(key, value)?,
        "hybrid_rpn" => m.hybrid_rpn = parse_num(key, value)?,
        _ => unreachable!("keys are checked against the section list"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::parse("model = advection\nn = 32\nsteps = 20\n").unwrap();
        let p = c.problem.as_ref().unwrap();
        assert_eq!(p.cfl, 0.4);
        assert_eq!(p.gamma, 5.0 / 3.0);
        assert_eq!(p.initial, InitialCondition::Sine);
        assert_eq!(p.n, [32; 3]);
        let e = c.exec.to_exec_config();
        assert_eq!((e.ranks, e.threads_per_rank, e.schedule), (1, 1, Schedule::Static));
        assert_eq!(e.mode, Mode::Optimized);
    }

    #[test]
    fn unknown_key_names_line_and_key() {
        let text = "model = mhd\nn = 16\nsteps = 1\n[exec]\nthread = 4\n";
        let err = RunConfig::parse(text).unwrap_err();
        assert_eq!(err.line, Some(5));
        assert!(err.message.contains("`thread`"), "{err}");
        assert!(err.to_string().contains("did you mean `threads`"), "{err}");
    }

    #[test]
    fn syntax_and_constraint_errors() {
        assert_eq!(RunConfig::parse("model advection").unwrap_err().line, Some(1));
        assert_eq!(RunConfig::parse("[solver]\n").unwrap_err().line, Some(1));
        assert_eq!(RunConfig::parse("model = euler\n").unwrap_err().line, Some(1));
        let dup = RunConfig::parse("model = mhd\nmodel = mhd\n").unwrap_err();
        assert_eq!(dup.line, Some(2));
        let missing = RunConfig::parse("model = mhd\nn = 16\n").unwrap_err();
        assert!(missing.message.contains("`steps`"));
        let small = RunConfig::parse("model = mhd\nn = 8\nsteps = 1\n[exec]\nranks = 2\n").unwrap_err();
        assert!(small.message.contains("axis"), "{small}");
        let ic = RunConfig::parse("model = mhd\nn = 8\nsteps = 1\ninitial = sine\n").unwrap_err();
        assert!(ic.message.contains("not defined"));
    }

    #[test]
    fn model_only_config() {
        let c = RunConfig::parse("[model]\nsync_rounds = 300\nnodes = 8, 16\n").unwrap();
        assert!(c.problem.is_none());
        assert_eq!(c.model.nodes, vec![8, 16]);
        assert!(c.require_problem().is_err());
        let bad = RunConfig::parse("[model]\npure_rpn = 5\n").unwrap_err();
        assert!(bad.message.contains("divide"));
    }

    #[test]
    fn canonical_round_trip() {
        let text = "\
# full config
model = advection
n = 32, 16, 24
initial = sine_x
cfl = 0.2
steps = 7
velocity = 1, -0.5, 0.125
seed = 9

[exec]
ranks = 4
threads = 3
schedule = guided
min_chunk = 2
mode = baseline
backend = concurrent

[output]
dir = results/a
snapshot_every = 5
format = json

[model]
a = 3.5e-7
beta = 1e-10
nodes = 4, 8
";
        let a = RunConfig::parse(text).unwrap();
        let canon = a.to_canonical();
        let b = RunConfig::parse(&canon).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.to_canonical(), canon);
        assert_eq!(fmt_f64(2e-7).parse::<f64>().unwrap(), 2e-7);
        assert_eq!(fmt_f64(5.0 / 3.0).parse::<f64>().unwrap(), 5.0 / 3.0);
    }
}
