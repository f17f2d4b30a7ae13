//! Config-driven experiment runs.
//!
//! A run reads a TOML file such as
//!
//! ```toml
//! seed = 7
//! map = "rational1d: num=[1,0,-2] den=[0,0,1]"
//! observables = ["dist_to([0.5,1])", "chordal_re(0,1)"]
//! tasks = ["degrees", "sample", "norms", "correlate", "clt"]
//!
//! [sampler]
//! method = "backward"
//! burn_in = 40
//! n = 10000
//! start = "[0.3, 1]"
//!
//! [norms]
//! grid_n = 10000
//! lip_pairs = 4000
//!
//! [correlate]
//! n_max = 8
//!
//! [clt]
//! n_block = 1000
//! trajectories = 2000
//! ```
//!
//! and writes CSV/JSON artifacts plus `manifest.json` into the output
//! directory. Tasks run in the order degrees, sample, norms, then
//! correlate, transfer and clt; all random streams derive from `seed`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::dynamics::DynMap;
use crate::error::{EqdError, Result};
use crate::grammar::Cursor;
use crate::measure::{self, Method, SampleSet};
use crate::observables::{lipschitz_estimate, star_norm_p1, Observable};
use crate::projective::ProjPoint;
use crate::stats::{self, CorrelationSeries};
use crate::transfer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Degrees,
    Sample,
    Norms,
    Correlate,
    Transfer,
    Clt,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Degrees => "degrees",
            Task::Sample => "sample",
            Task::Norms => "norms",
            Task::Correlate => "correlate",
            Task::Transfer => "transfer",
            Task::Clt => "clt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    /// `backward`, `tree` or `fubini_study`.
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Sample count (backward, fubini_study).
    pub n: Option<usize>,
    /// Tree depth (tree).
    pub depth: Option<usize>,
    /// Start point as a homogeneous coordinate list, e.g. `"[0.3+0.1j, 1]"`.
    pub start: Option<String>,
}

fn default_method() -> String {
    "backward".into()
}

fn default_burn_in() -> usize {
    measure::DEFAULT_BURN_IN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelateConfig {
    pub n_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltConfig {
    pub n_block: usize,
    pub trajectories: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    pub nodes: usize,
    #[serde(default = "default_truncation")]
    pub n_trunc: usize,
}

fn default_truncation() -> usize {
    transfer::DEFAULT_TRUNCATION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormsConfig {
    pub grid_n: usize,
    #[serde(default = "default_lip_pairs")]
    pub lip_pairs: usize,
}

fn default_lip_pairs() -> usize {
    4000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub map: String,
    #[serde(default)]
    pub observables: Vec<String>,
    pub tasks: Vec<Task>,
    /// Output directory, relative to the working directory.
    pub output: Option<String>,
    pub sampler: Option<SamplerConfig>,
    pub correlate: Option<CorrelateConfig>,
    pub clt: Option<CltConfig>,
    pub transfer: Option<TransferConfig>,
    pub norms: Option<NormsConfig>,
}

/// Default start point, away from the exceptional sets of the examples.
fn default_start(dim: usize) -> Vec<num_complex::Complex64> {
    use num_complex::Complex64 as C;
    if dim == 1 {
        vec![C::new(0.37, 0.21), C::new(1.0, 0.0)]
    } else {
        vec![C::new(0.37, 0.21), C::new(-0.28, 0.44), C::new(1.0, 0.0)]
    }
}

impl ExperimentConfig {
    /// Parse and validate a TOML config.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let pos = e.span().map_or(0, |s| s.start);
            EqdError::parse_at(text, pos, e.message().to_string())
        })?;
        cfg.validate(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn field_pos(text: &str, key: &str) -> usize {
        text.lines()
            .scan(0usize, |off, line| {
                let start = *off;
                *off += line.len() + 1;
                Some((start, line))
            })
            .find(|(_, l)| l.trim_start().starts_with(key))
            .map_or(0, |(s, l)| s + (l.len() - l.trim_start().len()))
    }

    fn validate(&self, text: &str) -> Result<()> {
        let at = |key: &str, msg: String| EqdError::parse_at(text, Self::field_pos(text, key), msg);
        let map = self.dyn_map().map_err(|e| at("map", format!("map: {e}")))?;
        for spec in &self.observables {
            let o = Observable::parse(spec).map_err(|e| at("observables", format!("observable '{spec}': {e}")))?;
            o.check_dim(map.dim())
                .map_err(|e| at("observables", format!("observable '{spec}': {e}")))?;
        }
        let needs_obs = [Task::Correlate, Task::Transfer, Task::Clt, Task::Norms];
        if self.observables.is_empty() && self.tasks.iter().any(|t| needs_obs.contains(t)) {
            return Err(at("tasks", "tasks need at least one observable".into()));
        }
        let need = |task: Task, present: bool, section: &str| -> Result<()> {
            if self.tasks.contains(&task) && !present {
                Err(at("tasks", format!("task '{}' needs a [{section}] section", task.name())))
            } else {
                Ok(())
            }
        };
        let sampled = self.tasks.iter().any(|t| matches!(t, Task::Sample | Task::Correlate | Task::Clt));
        if sampled {
            let s = self
                .sampler
                .as_ref()
                .ok_or_else(|| at("tasks", "sampling tasks need a [sampler] section".into()))?;
            let method: Method = s.method.parse().map_err(|e| at("method", format!("{e}")))?;
            match method {
                Method::Tree if s.depth.is_none() => return Err(at("[sampler]", "tree sampling needs depth".into())),
                Method::Backward | Method::FubiniStudy if s.n.is_none() => {
                    return Err(at("[sampler]", "sampler needs n".into()))
                }
                _ => {}
            }
            self.start_point(map.dim()).map_err(|e| at("start", format!("start: {e}")))?;
        }
        need(Task::Correlate, self.correlate.is_some(), "correlate")?;
        need(Task::Clt, self.clt.is_some(), "clt")?;
        need(Task::Transfer, self.transfer.is_some(), "transfer")?;
        need(Task::Norms, self.norms.is_some(), "norms")?;
        Ok(())
    }

    /// The same config with only `task` and the tasks it depends on.
    pub fn restricted_to(&self, task: Task) -> Result<ExperimentConfig> {
        let mut tasks = vec![Task::Degrees, task];
        if matches!(task, Task::Correlate | Task::Clt) {
            tasks.push(Task::Sample);
        }
        if task == Task::Correlate && self.norms.is_some() {
            tasks.push(Task::Norms);
        }
        tasks.sort();
        tasks.dedup();
        let cfg = ExperimentConfig {
            tasks,
            ..self.clone()
        };
        cfg.validate("")?;
        Ok(cfg)
    }

    pub fn dyn_map(&self) -> Result<DynMap> {
        self.map.parse()
    }

    fn start_point(&self, dim: usize) -> Result<ProjPoint> {
        let coords = match self.sampler.as_ref().and_then(|s| s.start.as_deref()) {
            Some(s) => {
                let mut cur = Cursor::new(s);
                let v = cur.complex_list()?;
                cur.expect_end()?;
                v
            }
            None => default_start(dim),
        };
        if coords.len() != dim + 1 {
            return Err(EqdError::DimMismatch {
                expected: dim,
                got: coords.len().saturating_sub(1),
            });
        }
        ProjPoint::normalize(&coords)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskRecord {
    pub task: String,
    /// `ok`, `failed` or `skipped`.
    pub status: String,
    pub error: Option<String>,
    pub artifacts: Vec<Artifact>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub version: String,
    pub seed: u64,
    pub map_hash: String,
    pub d_t: u64,
    pub hypothesis: bool,
    pub hypothesis_margin: f64,
    pub workers: usize,
    pub tasks: Vec<TaskRecord>,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn failed(&self) -> Option<&TaskRecord> {
        self.tasks.iter().find(|t| t.status == "failed")
    }
}

/// Float formatting used in every CSV: 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

struct Writer {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Writer {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.artifacts.push(Artifact {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    fn json(&mut self, name: &str, v: &Value) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v).map_err(|e| EqdError::Io(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }
}

#[derive(Default)]
struct State {
    samples: Option<SampleSet>,
    /// `(‖φ‖_*, ‖φ‖_∞)` per observable, when computed.
    norms: BTreeMap<usize, (Option<f64>, Option<f64>)>,
}

/// Run `config`, writing artifacts into `out`.
///
/// A violated hypothesis stops the run after the degree report and returns
/// `HypothesisViolated`; other task failures are recorded in the manifest.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    std::fs::create_dir_all(out)?;
    let map = config.dyn_map()?;
    let observables: Vec<Observable> = config
        .observables
        .iter()
        .map(|s| Observable::parse(s))
        .collect::<Result<_>>()?;
    let report = map.degrees();
    let (hypothesis, margin) = map.check_hypothesis();
    let mut manifest = RunManifest {
        config: config.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        map_hash: map.spec_hash(),
        d_t: report.d_t,
        hypothesis,
        hypothesis_margin: margin,
        workers: rayon::current_num_threads(),
        tasks: Vec::new(),
        wall_time_s: 0.0,
    };

    let mut tasks = config.tasks.clone();
    tasks.sort();
    tasks.dedup();
    let mut state = State::default();
    for task in tasks {
        let t0 = Instant::now();
        let mut w = Writer {
            dir: out.to_path_buf(),
            artifacts: Vec::new(),
        };
        let sample_missing = matches!(task, Task::Correlate | Task::Clt) && state.samples.is_none();
        let result = if !hypothesis && task != Task::Degrees {
            Err(EqdError::HypothesisViolated { margin })
        } else if sample_missing {
            if config.tasks.contains(&Task::Sample) {
                // sampling failed earlier
                manifest.tasks.push(TaskRecord {
                    task: task.name().into(),
                    status: "skipped".into(),
                    error: Some("no samples available".into()),
                    artifacts: vec![],
                    wall_time_s: 0.0,
                });
                continue;
            }
            sample(config, &map, &mut state, None)
                .and_then(|_| run_task(task, config, &map, &observables, &mut state, &mut w))
        } else {
            run_task(task, config, &map, &observables, &mut state, &mut w)
        };
        let record = TaskRecord {
            task: task.name().into(),
            status: if result.is_ok() { "ok" } else { "failed" }.into(),
            error: result.as_ref().err().map(|e| e.to_string()),
            artifacts: w.artifacts,
            wall_time_s: t0.elapsed().as_secs_f64(),
        };
        manifest.tasks.push(record);
        if let Err(EqdError::HypothesisViolated { .. }) = result {
            break;
        }
    }
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| EqdError::Io(e.to_string()))?;
    std::fs::write(out.join("manifest.json"), text + "\n")?;
    if !hypothesis {
        return Err(EqdError::HypothesisViolated { margin });
    }
    Ok(manifest)
}

fn run_task(
    task: Task,
    config: &ExperimentConfig,
    map: &DynMap,
    observables: &[Observable],
    state: &mut State,
    w: &mut Writer,
) -> Result<()> {
    match task {
        Task::Degrees => degrees(map, w),
        Task::Sample => sample(config, map, state, Some(w)),
        Task::Norms => norms(config, map, observables, state, w),
        Task::Correlate => correlate(config, map, observables, state, w),
        Task::Transfer => transfer_task(config, map, observables, w),
        Task::Clt => clt(config, map, observables, state, w),
    }
}

/// JSON degree report of a map.
pub fn degree_json(map: &DynMap) -> Value {
    let r = map.degrees();
    let (ok, margin) = map.check_hypothesis();
    json!({
        "map": map.to_string(),
        "family": format!("{:?}", map.family()),
        "dim": map.dim(),
        "algebraic_degree": map.algebraic_degree(),
        "d_t": r.d_t,
        "d_list": r.d_list,
        "delta_base": r.delta.base,
        "delta_exact": r.delta.exact,
        "hypothesis": ok,
        "hypothesis_margin": margin,
    })
}

fn degrees(map: &DynMap, w: &mut Writer) -> Result<()> {
    w.json("degrees.json", &degree_json(map))
}

fn sample(config: &ExperimentConfig, map: &DynMap, state: &mut State, w: Option<&mut Writer>) -> Result<()> {
    let s = config
        .sampler
        .as_ref()
        .ok_or_else(|| EqdError::Invalid("missing [sampler] section".into()))?;
    let start = config.start_point(map.dim())?;
    let set = match s.method.parse::<Method>()? {
        Method::Backward => measure::backward_orbit_sample(map, &start, s.burn_in, s.n.unwrap_or(0), config.seed)?,
        Method::Tree => measure::pullback_tree(map, &start, s.depth.unwrap_or(0))?,
        Method::FubiniStudy => measure::fubini_study_sample(map.dim(), s.n.unwrap_or(0), config.seed),
    };
    if let Some(w) = w {
        let mut buf = Vec::new();
        set.write_to(&mut buf)?;
        w.write("samples.eqd", &buf)?;
    }
    state.samples = Some(set);
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map_or("NaN".into(), num)
}

fn norms(
    config: &ExperimentConfig,
    map: &DynMap,
    observables: &[Observable],
    state: &mut State,
    w: &mut Writer,
) -> Result<()> {
    let nc = config.norms.as_ref().expect("validated");
    let mut csv = String::from("index,observable,lip_est,lip_lower_bound,star_norm,mean,sup_bound,excluded_fraction\n");
    for (i, o) in observables.iter().enumerate() {
        let lip = lipschitz_estimate(o, map.dim(), nc.lip_pairs, config.seed);
        let star = if map.dim() == 1 { star_norm_p1(o, nc.grid_n).ok() } else { None };
        let sup = o.sup_bound();
        // on P² the ‖·‖_* infimum is not computed; sup + Lip stands in
        let star_value = match (map.dim(), star) {
            (1, Some(s)) => Some(s.value),
            (2, _) => sup.map(|s| s + lip.value).filter(|v| v.is_finite()),
            _ => None,
        };
        state.norms.insert(i, (star_value, sup));
        let _ = writeln!(
            csv,
            "{i},\"{}\",{},{},{},{},{},{}",
            o.spec(),
            num(lip.value),
            lip.lower_bound,
            opt(star.map(|s| s.value)),
            opt(star.map(|s| s.mean)),
            opt(sup),
            opt(star.map(|s| s.excluded_fraction)),
        );
    }
    w.write("norms.csv", csv.as_bytes())
}

fn sup_over(mu: &SampleSet, o: &Observable) -> f64 {
    mu.points().iter().map(|p| o.eval(p).abs()).filter(|v| v.is_finite()).fold(0.0, f64::max)
}

fn fit_json(series: &CorrelationSeries) -> Value {
    match stats::decay_fit(series) {
        Ok(f) => json!({"rate": f.rate, "rate_ci": [f.rate_ci.0, f.rate_ci.1], "floor_index": f.floor_index, "used": f.used}),
        Err(e) => json!({"error": e.to_string(), "floor_index": series.floor_index()}),
    }
}

fn correlate(
    config: &ExperimentConfig,
    map: &DynMap,
    observables: &[Observable],
    state: &mut State,
    w: &mut Writer,
) -> Result<()> {
    let n_max = config.correlate.as_ref().expect("validated").n_max;
    let mu = state.samples.as_ref().expect("sampled");
    let mut summary = Vec::new();
    for (i, psi) in observables.iter().enumerate() {
        let psi_sup = state
            .norms
            .get(&i)
            .and_then(|n| n.1)
            .unwrap_or_else(|| sup_over(mu, psi));
        for (j, phi) in observables.iter().enumerate() {
            let series = stats::correlation_series(map, mu, psi, phi, n_max)?;
            let phi_star = state.norms.get(&j).and_then(|n| n.0);
            let check = phi_star
                .ok_or_else(|| EqdError::NormUnavailable("run the norms task for ‖φ‖_*".into()))
                .and_then(|s| stats::mixing_bound_check(&series, map, s, psi_sup));
            let mut csv = String::from("n,corr,stderr,bound,ratio\n");
            for (k, e) in series.entries.iter().enumerate() {
                let (bound, ratio) = match &check {
                    Ok(c) => (Some(c.entries[k].bound), Some(c.entries[k].ratio)),
                    Err(_) => (None, None),
                };
                let _ = writeln!(csv, "{},{},{},{},{}", e.n, num(e.corr), num(e.stderr), opt(bound), opt(ratio));
            }
            w.write(&format!("correlate_{i}_{j}.csv"), csv.as_bytes())?;
            summary.push(json!({
                "psi": psi.spec(),
                "phi": phi.spec(),
                "dropped": series.meta.dropped,
                "phi_mean": series.meta.phi_mean,
                "decay_fit": fit_json(&series),
                "mixing": match &check {
                    Ok(c) => json!({"a_emp": c.a_emp, "exponent_violation": c.exponent_violation}),
                    Err(e) => json!({"error": e.to_string()}),
                },
            }));
        }
    }
    w.json("correlate_summary.json", &Value::Array(summary))
}

fn transfer_task(config: &ExperimentConfig, map: &DynMap, observables: &[Observable], w: &mut Writer) -> Result<()> {
    let tc = config.transfer.as_ref().expect("validated");
    let mut summary = Vec::new();
    for (i, o) in observables.iter().enumerate() {
        let t = transfer::decompose(map, o, tc.n_trunc, tc.nodes, config.seed)?;
        w.write(&format!("transfer_{i}.csv"), t.to_csv().as_bytes())?;
        summary.push(json!({
            "observable": o.spec(),
            "c_phi": t.c_phi,
            "c_phi_stderr": t.c_phi_stderr,
            "scheme": t.quadrature.scheme,
            "nodes": t.quadrature.nodes,
            "seed": t.quadrature.seed,
            "leaf_cap": t.quadrature.leaf_cap,
            "subsampled": t.quadrature.subsampled,
            "flagged_fibers": t.quadrature.flagged_fibers,
        }));
    }
    w.json("transfer_summary.json", &Value::Array(summary))
}

fn clt(
    config: &ExperimentConfig,
    map: &DynMap,
    observables: &[Observable],
    state: &mut State,
    w: &mut Writer,
) -> Result<()> {
    let cc = config.clt.as_ref().expect("validated");
    let mu = state.samples.as_ref().expect("sampled");
    for (i, o) in observables.iter().enumerate() {
        let r = stats::birkhoff_clt(map, mu, o, cc.n_block, cc.trajectories, config.seed)?;
        let mut csv = String::from("trajectory_stat\n");
        for s in &r.stats {
            csv.push_str(&num(*s));
            csv.push('\n');
        }
        w.write(&format!("clt_{i}_stats.csv"), csv.as_bytes())?;
        w.json(
            &format!("clt_{i}.json"),
            &json!({
                "observable": o.spec(),
                "sigma2_gk": r.sigma2_gk,
                "sigma2_emp": r.sigma2_emp,
                "ks_stat": r.ks_stat,
                "ks_p": r.ks_p,
                "degenerate": r.degenerate,
                "sigma2_gk_stderr": r.sigma2_gk_stderr,
                "sigma2_emp_stderr": r.sigma2_emp_stderr,
                "n_block": r.n_block,
                "trajectories": r.trajectories,
                "dropped": r.dropped,
                "centering": r.centering,
            }),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: &str = r#"
seed = 1
map = "rational1d: num=[1,0,0] den=[0,0,1]"
tasks = ["degrees"]
"#;

    #[test]
    fn degrees_only_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::parse(SQUARE).unwrap();
        let m = run(&cfg, dir.path()).unwrap();
        assert_eq!(m.d_t, 2);
        assert!(m.hypothesis);
        assert_eq!(m.hypothesis_margin, 1.0);
        assert_eq!(m.tasks[0].status, "ok");
        assert!(dir.path().join("manifest.json").exists());
    }

    #[test]
    fn config_errors_have_positions() {
        match ExperimentConfig::parse("seed = 1\nmap = \"rational1d: num=[1,0,0] den=[0,0,1]\"\ntasks = [\"bogus\"]\n") {
            Err(EqdError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        // seed is mandatory
        assert!(ExperimentConfig::parse("map = \"rational1d: num=[1,0,0] den=[0,0,1]\"\ntasks = []\n").is_err());
        // bad map spec points at the map line
        match ExperimentConfig::parse("seed = 1\ntasks = []\nmap = \"rational1d: num=[1,0,x] den=[0,0,1]\"\n") {
            Err(EqdError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        // missing task section
        assert!(ExperimentConfig::parse(&format!("{SQUARE}observables = [\"cos_arg(1)\"]\n").replace(
            "tasks = [\"degrees\"]",
            "tasks = [\"transfer\"]"
        ))
        .is_err());
    }

    #[test]
    fn hypothesis_violation_aborts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::parse(
            "seed = 1\nmap = \"monomial2d: A=[[2,1],[1,1]]\"\ntasks = [\"degrees\", \"sample\"]\n[sampler]\nn = 10\n",
        )
        .unwrap();
        assert!(matches!(run(&cfg, dir.path()), Err(EqdError::HypothesisViolated { .. })));
        assert!(dir.path().join("degrees.json").exists());
    }
}
