//! Configuration sweeps over instance sets.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use minlp_core::json::parse_model;
use minlp_core::oa::{solve, Algorithm, SolveResult, SolverOptions, SubproblemScale};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Config {
    pub algorithm: Algorithm,
    pub convexify: bool,
    pub scale: SubproblemScale,
}

pub fn algorithm_token(a: Algorithm) -> &'static str {
    match a {
        Algorithm::OA => "oa",
        Algorithm::LpNlpBB => "lpnlp",
        Algorithm::GOA => "goa",
        Algorithm::GLpNlpBB => "glpnlp",
    }
}

impl Config {
    pub fn new(algorithm: Algorithm) -> Self {
        Config {
            algorithm,
            convexify: false,
            scale: SubproblemScale::Reduced,
        }
    }

    pub fn convexified(algorithm: Algorithm, scale: SubproblemScale) -> Self {
        Config {
            algorithm,
            convexify: true,
            scale,
        }
    }

    pub fn options(&self, settings: &RunSettings) -> SolverOptions {
        SolverOptions {
            convexify: self.convexify,
            subproblem_scale: self.scale,
            eps_abs: settings.eps_abs,
            eps_rel: settings.eps_rel,
            time_limit: settings.time_limit.map(Duration::from_secs_f64),
            ..SolverOptions::new(self.algorithm)
        }
    }

    pub fn label(&self) -> String {
        self.options(&RunSettings::default()).label()
    }

    /// Flags for `minlp solve` selecting this configuration.
    pub fn cli_args(&self) -> Vec<String> {
        let mut v = vec!["--alg".to_string(), algorithm_token(self.algorithm).to_string()];
        if self.convexify {
            v.push("--convexify".into());
            v.push("--scale".into());
            v.push(if self.scale == SubproblemScale::Reduced { "r" } else { "c" }.into());
        }
        v
    }
}

fn parse_algorithm(s: &str) -> Option<Algorithm> {
    match s {
        "oa" => Some(Algorithm::OA),
        "lpnlp" | "lp/nlp-b&b" => Some(Algorithm::LpNlpBB),
        "goa" => Some(Algorithm::GOA),
        "glpnlp" | "glp/nlp-b&b" => Some(Algorithm::GLpNlpBB),
        _ => None,
    }
}

/// Parses a comma-separated list such as `oa,c-oa(r),C-LP/NLP-B&B(c),goa`.
/// A `c-` prefix turns convexification on; the scale suffix is `(r)`,
/// `(c)`, `-r` or `-c` and defaults to reduced.
pub fn parse_configs(spec: &str) -> Result<Vec<Config>> {
    let mut out = Vec::new();
    for raw in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let bad = || BenchError::Config(raw.to_string());
        let lower = raw.to_ascii_lowercase();
        let (convexify, rest) = match lower.strip_prefix("c-") {
            Some(r) => (true, r),
            None => (false, lower.as_str()),
        };
        let mut scale = SubproblemScale::Reduced;
        let mut name = rest;
        for (suffix, s) in [
            ("(r)", SubproblemScale::Reduced),
            ("(c)", SubproblemScale::Complete),
            ("-r", SubproblemScale::Reduced),
            ("-c", SubproblemScale::Complete),
        ] {
            if let Some(n) = rest.strip_suffix(suffix) {
                if !convexify {
                    return Err(bad());
                }
                name = n;
                scale = s;
                break;
            }
        }
        let algorithm = parse_algorithm(name).ok_or_else(bad)?;
        out.push(Config {
            algorithm,
            convexify,
            scale,
        });
    }
    if out.is_empty() {
        return Err(BenchError::Config(spec.to_string()));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub time_limit: Option<f64>,
    pub eps_abs: f64,
    pub eps_rel: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        let d = SolverOptions::default();
        RunSettings {
            time_limit: d.time_limit.map(|t| t.as_secs_f64()),
            eps_abs: d.eps_abs,
            eps_rel: d.eps_rel,
        }
    }
}

impl RunSettings {
    fn cli_args(&self) -> Vec<String> {
        let mut v = vec![
            "--eps-abs".to_string(),
            self.eps_abs.to_string(),
            "--eps-rel".to_string(),
            self.eps_rel.to_string(),
        ];
        if let Some(t) = self.time_limit {
            v.push("--time-limit".into());
            v.push(t.to_string());
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance: String,
    pub config: String,
    pub status: String,
    pub objective: f64,
    pub lb: f64,
    pub ub: f64,
    /// Fixed-integer subproblems solved.
    pub iterations: usize,
    pub time_s: f64,
}

impl RunRecord {
    pub fn solved(&self) -> bool {
        self.status == "Optimal"
    }

    fn error(instance: String, config: String, time_s: f64, e: &dyn std::fmt::Display) -> Self {
        log::warn!("{instance} / {config}: {e}");
        RunRecord {
            instance,
            config,
            status: "Error".into(),
            objective: f64::NAN,
            lb: f64::NEG_INFINITY,
            ub: f64::INFINITY,
            iterations: 0,
            time_s,
        }
    }

    pub fn from_result(instance: String, config: String, r: &SolveResult) -> Self {
        RunRecord {
            instance,
            config,
            status: r.status.to_string(),
            objective: r.objective,
            lb: r.bounds.lb,
            ub: r.bounds.ub,
            iterations: r.nlp_solves,
            time_s: r.time_s,
        }
    }
}

/// The fields of `minlp solve --json` output that a record needs. Infinite
/// values arrive as `null`.
#[derive(Deserialize)]
struct Summary {
    status: String,
    objective: Option<f64>,
    bounds: SummaryBounds,
    nlp_solves: usize,
    time_s: f64,
}

#[derive(Deserialize)]
struct SummaryBounds {
    lb: Option<f64>,
    ub: Option<f64>,
}

#[derive(Clone, Debug)]
pub enum Runner {
    InProcess,
    /// Each solve in a child process of this executable.
    Isolated(PathBuf),
}

pub fn instance_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Loads the model and warns when it lacks discrete or continuous variables.
fn check_instance(path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(crate::error::io_err(path))?;
    let m = parse_model(&text)?;
    if !m.has_discrete() || m.continuous_vars().next().is_none() {
        log::warn!(
            "{}: instances should have at least one discrete and one continuous variable",
            path.display()
        );
    }
    Ok(())
}

pub fn run_one(path: &Path, config: &Config, settings: &RunSettings, runner: &Runner) -> RunRecord {
    let name = instance_name(path);
    let label = config.label();
    let start = Instant::now();
    match runner {
        Runner::InProcess => {
            let res = std::fs::read_to_string(path)
                .map_err(crate::error::io_err(path))
                .and_then(|t| Ok(parse_model(&t)?))
                .and_then(|m| Ok(solve(&m, &config.options(settings))?));
            match res {
                Ok(r) => RunRecord::from_result(name, label, &r),
                Err(e) => RunRecord::error(name, label, start.elapsed().as_secs_f64(), &e),
            }
        }
        Runner::Isolated(exe) => {
            let out = Command::new(exe)
                .arg("solve")
                .arg(path)
                .args(config.cli_args())
                .args(settings.cli_args())
                .arg("--json")
                .output();
            let elapsed = start.elapsed().as_secs_f64();
            let out = match out {
                Ok(o) => o,
                Err(e) => return RunRecord::error(name, label, elapsed, &e),
            };
            if out.status.code() == Some(1) {
                let msg = String::from_utf8_lossy(&out.stderr).trim().to_string();
                return RunRecord::error(name, label, elapsed, &msg);
            }
            match serde_json::from_slice::<Summary>(&out.stdout) {
                Ok(s) => RunRecord {
                    instance: name,
                    config: label,
                    status: s.status,
                    objective: s.objective.unwrap_or(f64::NAN),
                    lb: s.bounds.lb.unwrap_or(f64::NEG_INFINITY),
                    ub: s.bounds.ub.unwrap_or(f64::INFINITY),
                    iterations: s.nlp_solves,
                    time_s: s.time_s,
                },
                Err(e) => RunRecord::error(name, label, elapsed, &e),
            }
        }
    }
}

/// Runs every (instance, configuration) pair on `jobs` workers. Rows come
/// back ordered by instance, then configuration, whatever the scheduling.
pub fn run_bench(
    instances: &[PathBuf],
    configs: &[Config],
    settings: &RunSettings,
    runner: &Runner,
    jobs: usize,
) -> Vec<RunRecord> {
    for p in instances {
        if let Err(e) = check_instance(p) {
            log::warn!("{}: {e}", p.display());
        }
    }
    let pairs: Vec<(usize, usize)> = (0..instances.len())
        .flat_map(|i| (0..configs.len()).map(move |c| (i, c)))
        .collect();
    let slots: Mutex<Vec<Option<RunRecord>>> = Mutex::new(vec![None; pairs.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(i, c)) = pairs.get(k) else { break };
                let rec = run_one(&instances[i], &configs[c], settings, runner);
                slots.lock().expect("no worker panics while holding the lock")[k] = Some(rec);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every pair ran"))
        .collect()
}

pub fn write_records(w: impl Write, records: &[RunRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| BenchError::Io {
        path: "csv output".into(),
        source: e,
    })?;
    Ok(())
}

pub fn read_records(r: impl Read) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    for col in ["instance", "config", "status", "objective", "lb", "ub", "iterations", "time_s"] {
        if !headers.iter().any(|h| h == col) {
            return Err(BenchError::MissingColumn(col.into()));
        }
    }
    rd.deserialize().map(|r| r.map_err(BenchError::from)).collect()
}
