//! Experiment configuration, seeded multi-run execution, CSV traces and
//! summaries.
//!
//! A run writes `<output>/<variant>/seed-<n>.csv` per seed and
//! `<output>/summary.json`. Each trace starts with a `#` line holding the
//! run's metadata as JSON, followed by a CSV header and one row per step.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domains::{
    build_hard_toggle, build_stock_trading, build_toggle, HardToggleConfig, StockTradingConfig,
    ToggleConfig,
};
use crate::fmdp::{from_domain_file, DomainFileError, FactoredMdp};
use crate::fsee::{run_fsee, run_passive, ExperimentTrace, FseeConfig, FseeError, Phase, TraceRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("domain file {path}: {source}")]
    Domain {
        path: PathBuf,
        #[source]
        source: DomainFileError,
    },
    #[error("{variant} seed {seed}: {source}")]
    Run {
        variant: Variant,
        seed: u64,
        #[source]
        source: FseeError,
    },
    #[error("trace {path}: {msg}")]
    Trace { path: String, msg: String },
    #[error("summary: {0}")]
    Summary(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum DomainConfig {
    Toggle(ToggleConfig),
    HardToggle(HardToggleConfig),
    StockTrading(StockTradingConfig),
    /// A JSON domain file; relative paths resolve against the config file.
    File {
        path: PathBuf,
    },
}

impl DomainConfig {
    pub fn label(&self) -> String {
        match self {
            DomainConfig::Toggle(c) if !c.include_unnecessary => "toggle-necessary".into(),
            DomainConfig::Toggle(_) => "toggle".into(),
            DomainConfig::HardToggle(c) => format!("hard-toggle-{}", c.n_features),
            DomainConfig::StockTrading(c) => {
                format!("stock-trading-{}x{}", c.sectors, c.stocks_per_sector)
            }
            DomainConfig::File { path } => path.display().to_string(),
        }
    }

    pub fn build(&self) -> Result<FactoredMdp, HarnessError> {
        Ok(match self {
            DomainConfig::Toggle(c) => build_toggle(c),
            DomainConfig::HardToggle(c) => {
                if c.n_features < 3 {
                    return Err(HarnessError::Config(
                        "hard-toggle needs n_features >= 3".into(),
                    ));
                }
                build_hard_toggle(c)
            }
            DomainConfig::StockTrading(c) => {
                if c.sectors == 0
                    || c.stocks_per_sector == 0
                    || c.rise_base < 0.0
                    || c.rise_slope < 0.0
                    || c.rise_base + c.rise_slope > 1.0
                {
                    return Err(HarnessError::Config(
                        "stock-trading needs positive sizes and rise_base + rise_slope <= 1".into(),
                    ));
                }
                build_stock_trading(c)
            }
            DomainConfig::File { path } => {
                let text = fs::read_to_string(path).map_err(io_err(path))?;
                from_domain_file(&text).map_err(|source| HarnessError::Domain {
                    path: path.clone(),
                    source,
                })?
            }
        })
    }

    /// The same domain with only its necessary features, where known.
    pub fn necessary_only(&self) -> Option<DomainConfig> {
        match self {
            DomainConfig::Toggle(_) => Some(DomainConfig::Toggle(ToggleConfig {
                include_unnecessary: false,
            })),
            DomainConfig::StockTrading(_) => Some(self.clone()),
            DomainConfig::HardToggle(_) | DomainConfig::File { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Fsee,
    PassiveFs,
    NoFs,
    Oracle,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Fsee => "fsee",
            Variant::PassiveFs => "passive-fs",
            Variant::NoFs => "no-fs",
            Variant::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Variant::Fsee,
            Variant::PassiveFs,
            Variant::NoFs,
            Variant::Oracle,
        ]
        .into_iter()
        .find(|v| v.as_str() == s)
    }

    fn is_passive(self) -> bool {
        !matches!(self, Variant::Fsee)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainConfig,
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub agent: FseeConfig,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    /// Steps per run for the passive variants.
    #[serde(default)]
    pub total_steps: Option<usize>,
    /// Reward windows `(start, end]` reported in the summary.
    #[serde(default)]
    pub windows: Vec<(u64, u64)>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: &str| Err(HarnessError::Config(msg.into()));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.variants.is_empty() {
            return bad("variants must not be empty");
        }
        let mut seen = self.variants.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.variants.len() {
            return bad("variants must not repeat");
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("seeds must not repeat");
        }
        if self.variants.iter().any(|v| v.is_passive()) && self.total_steps.is_none() {
            return bad("total_steps is required for passive-fs, no-fs and oracle");
        }
        if self.variants.contains(&Variant::Oracle) && self.domain.necessary_only().is_none() {
            return bad("oracle needs a domain whose necessary features are known (toggle or stock-trading)");
        }
        if let Some(&(a, b)) = self.windows.iter().find(|(a, b)| a >= b) {
            return Err(HarnessError::Config(format!("window ({a}, {b}] is empty")));
        }
        let a = &self.agent;
        if a.m == 0 {
            return bad("agent.m must be at least 1");
        }
        if !(a.epsilon1 > 0.0 && a.epsilon1 < 1.0) {
            return bad("agent.epsilon1 must lie in (0, 1)");
        }
        if !(a.delta1 > 0.0 && a.delta1 < 1.0) {
            return bad("agent.delta1 must lie in (0, 1)");
        }
        if a.episode_steps == 0 {
            return bad("agent.episode_steps must be at least 1");
        }
        Ok(())
    }

    fn meta(&self, variant: Variant, seed: u64) -> TraceMeta {
        let domain = match variant {
            Variant::Oracle => self
                .domain
                .necessary_only()
                .unwrap_or_else(|| self.domain.clone()),
            _ => self.domain.clone(),
        };
        TraceMeta {
            domain: self.domain.label(),
            run_domain: domain.label(),
            variant,
            seed,
            schedule: if variant.is_passive() {
                self.agent.increment_schedule.clone()
            } else {
                Vec::new()
            },
            windows: self.windows.clone(),
        }
    }
}

/// Parses a TOML experiment config. Relative `output` and domain file paths
/// are resolved against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
    if let DomainConfig::File { path } = &mut cfg.domain {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
    if cfg.output.is_relative() {
        cfg.output = base.join(&cfg.output);
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base).map_err(|e| match e {
        HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceMeta {
    pub domain: String,
    /// Domain the agent actually ran on (differs for the oracle).
    pub run_domain: String,
    pub variant: Variant,
    pub seed: u64,
    pub schedule: Vec<usize>,
    pub windows: Vec<(u64, u64)>,
}

pub const TRACE_COLUMNS: [&str; 9] = [
    "step",
    "k",
    "phase",
    "state",
    "action",
    "reward",
    "cumulative_reward",
    "active_features",
    "events",
];

/// Positional decimal with 17 significant digits, which round-trips every
/// finite `f64`.
pub fn format_decimal(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let point = exp + 1;
    let body = if point <= 0 {
        format!("0.{}{}", "0".repeat((-point) as usize), digits)
    } else if point as usize >= digits.len() {
        format!("{}{}", digits, "0".repeat(point as usize - digits.len()))
    } else {
        let (int, frac) = digits.split_at(point as usize);
        format!("{int}.{frac}")
    };
    let body = if body.contains('.') {
        body.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        body
    };
    format!("{sign}{body}")
}

pub fn write_trace(meta: &TraceMeta, trace: &ExperimentTrace) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "# {}",
        serde_json::to_string(meta).expect("meta serializes")
    )
    .unwrap();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(TRACE_COLUMNS).expect("in-memory write");
    for r in &trace.rows {
        assert!(
            r.events.iter().all(|e| !e.contains(';')),
            "event names must not contain ';'"
        );
        w.write_record([
            r.step.to_string(),
            r.k.to_string(),
            r.phase.as_str().to_string(),
            r.state.clone(),
            r.action.clone(),
            format_decimal(r.reward),
            format_decimal(r.cumulative_reward),
            r.active_features.to_string(),
            r.events.join(";"),
        ])
        .expect("in-memory write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf8 csv"));
    out
}

pub fn parse_trace(text: &str, label: &str) -> Result<(TraceMeta, ExperimentTrace), HarnessError> {
    let err = |msg: String| HarnessError::Trace {
        path: label.to_string(),
        msg,
    };
    let (first, rest) = text
        .split_once('\n')
        .ok_or_else(|| err("missing metadata line".into()))?;
    let meta_json = first
        .strip_prefix("# ")
        .ok_or_else(|| err("missing metadata line".into()))?;
    let meta: TraceMeta =
        serde_json::from_str(meta_json).map_err(|e| err(format!("metadata: {e}")))?;
    let mut reader = csv::ReaderBuilder::new().from_reader(rest.as_bytes());
    let header = reader.headers().map_err(|e| err(e.to_string()))?.clone();
    if header.iter().ne(TRACE_COLUMNS) {
        return Err(err(format!(
            "unexpected header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let line = i + 3;
        let field = |j: usize| rec.get(j).unwrap_or_default();
        let num = |j: usize| -> Result<f64, HarnessError> {
            field(j).parse::<f64>().map_err(|_| {
                err(format!(
                    "line {line}: bad {} {:?}",
                    TRACE_COLUMNS[j],
                    field(j)
                ))
            })
        };
        let int = |j: usize| -> Result<u64, HarnessError> {
            field(j).parse::<u64>().map_err(|_| {
                err(format!(
                    "line {line}: bad {} {:?}",
                    TRACE_COLUMNS[j],
                    field(j)
                ))
            })
        };
        let phase = Phase::parse(field(2))
            .ok_or_else(|| err(format!("line {line}: bad phase {:?}", field(2))))?;
        let row = TraceRow {
            step: int(0)?,
            k: int(1)? as usize,
            phase,
            state: field(3).to_string(),
            action: field(4).to_string(),
            reward: num(5)?,
            cumulative_reward: num(6)?,
            active_features: int(7)? as usize,
            events: if field(8).is_empty() {
                Vec::new()
            } else {
                field(8).split(';').map(str::to_string).collect()
            },
        };
        if row.step != i as u64 + 1 {
            return Err(err(format!(
                "line {line}: step {} out of sequence",
                row.step
            )));
        }
        rows.push(row);
    }
    let trace = ExperimentTrace { rows };
    check_cumulative(&trace).map_err(err)?;
    Ok((meta, trace))
}

fn check_cumulative(trace: &ExperimentTrace) -> Result<(), String> {
    let mut sum = 0.0;
    for r in &trace.rows {
        sum += r.reward;
        if (sum - r.cumulative_reward).abs() > 1e-9 * sum.abs().max(1.0) {
            return Err(format!(
                "step {}: cumulative reward {} disagrees with running sum {sum}",
                r.step, r.cumulative_reward
            ));
        }
    }
    Ok(())
}

pub fn trace_path(out: &Path, variant: Variant, seed: u64) -> PathBuf {
    out.join(variant.as_str()).join(format!("seed-{seed}.csv"))
}

/// Runs one variant on one seed.
pub fn run_one(
    cfg: &ExperimentConfig,
    variant: Variant,
    seed: u64,
) -> Result<ExperimentTrace, HarnessError> {
    let mut agent = cfg.agent.clone();
    agent.seed = seed;
    let wrap = |source| HarnessError::Run {
        variant,
        seed,
        source,
    };
    let outcome = match variant {
        Variant::Fsee => run_fsee(cfg.domain.build()?, &agent).map_err(wrap)?,
        Variant::PassiveFs | Variant::NoFs | Variant::Oracle => {
            agent.superset_test = variant != Variant::NoFs;
            let domain = match variant {
                Variant::Oracle => cfg
                    .domain
                    .necessary_only()
                    .ok_or_else(|| HarnessError::Config("oracle domain unavailable".into()))?,
                _ => cfg.domain.clone(),
            };
            let steps = cfg
                .total_steps
                .ok_or_else(|| HarnessError::Config("total_steps missing".into()))?;
            run_passive(domain.build()?, &agent, steps).map_err(wrap)?
        }
    };
    Ok(outcome.trace)
}

/// Runs every variant and seed in parallel, writes the traces and the
/// summary, and returns the summary.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Summary, HarnessError> {
    cfg.validate()?;
    let jobs: Vec<(Variant, u64)> = cfg
        .variants
        .iter()
        .flat_map(|&v| cfg.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let results: Vec<(TraceMeta, ExperimentTrace)> = jobs
        .par_iter()
        .map(|&(variant, seed)| {
            let trace = run_one(cfg, variant, seed)?;
            let meta = cfg.meta(variant, seed);
            let path = trace_path(&cfg.output, variant, seed);
            let dir = path.parent().expect("trace dir");
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            fs::write(&path, write_trace(&meta, &trace)).map_err(io_err(&path))?;
            Ok((meta, trace))
        })
        .collect::<Result<_, HarnessError>>()?;
    let summary = summarize(&results)?;
    let path = cfg.output.join("summary.json");
    fs::write(&path, summary.to_json()).map_err(io_err(&path))?;
    Ok(summary)
}

/// Reads every `<variant>/seed-<n>.csv` under `dir`.
pub fn read_traces(dir: &Path) -> Result<Vec<(TraceMeta, ExperimentTrace)>, HarnessError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let sub = entry.path();
        if !sub.is_dir() || Variant::parse(&entry.file_name().to_string_lossy()).is_none() {
            continue;
        }
        for f in fs::read_dir(&sub).map_err(io_err(&sub))? {
            let f = f.map_err(io_err(&sub))?.path();
            let name = f
                .file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .to_string();
            if name.starts_with("seed-") && name.ends_with(".csv") {
                files.push(f);
            }
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(HarnessError::Summary(format!(
            "no traces under {}",
            dir.display()
        )));
    }
    files
        .iter()
        .map(|f| {
            let text = fs::read_to_string(f).map_err(io_err(f))?;
            parse_trace(&text, &f.display().to_string())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation across seeds; 0 for a single seed.
    pub stddev: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Option<Stat> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len();
        // Mean shifted by the first value.
        let mean = xs[0] + xs.iter().map(|x| x - xs[0]).sum::<f64>() / n as f64;
        let stddev = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, stddev, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStat {
    pub start: u64,
    pub end: u64,
    /// Per-seed mean immediate reward, aggregated across seeds. Absent when
    /// no trace reaches the window.
    pub reward: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationStat {
    pub feature: String,
    pub min: u64,
    pub max: u64,
    pub mean: f64,
    /// Seeds that eliminated the feature at least once.
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub windows: Vec<WindowStat>,
    pub final_cumulative: Stat,
    pub steps: Stat,
    /// First elimination step per feature, over the seeds that eliminated it.
    pub first_elimination: Vec<EliminationStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub domain: String,
    pub schedule: Vec<usize>,
    pub variants: Vec<VariantSummary>,
}

/// Mean reward of the rows with `start < step <= end`, if any.
pub fn window_mean(trace: &ExperimentTrace, start: u64, end: u64) -> Option<f64> {
    let xs: Vec<f64> = trace
        .rows
        .iter()
        .filter(|r| r.step > start && r.step <= end)
        .map(|r| r.reward)
        .collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Step of the first `eliminate:<feature>` event per feature.
pub fn first_eliminations(trace: &ExperimentTrace) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for r in &trace.rows {
        for e in &r.events {
            if let Some(f) = e.strip_prefix("eliminate:") {
                out.entry(f.to_string()).or_insert(r.step);
            }
        }
    }
    out
}

pub fn summarize(traces: &[(TraceMeta, ExperimentTrace)]) -> Result<Summary, HarnessError> {
    let Some((first, _)) = traces.first() else {
        return Err(HarnessError::Summary("no traces".into()));
    };
    for (meta, _) in traces {
        if meta.domain != first.domain {
            return Err(HarnessError::Summary(format!(
                "domain mismatch: {} vs {}",
                meta.domain, first.domain
            )));
        }
        if meta.windows != first.windows {
            return Err(HarnessError::Summary(
                "traces were run with different windows".into(),
            ));
        }
    }
    let schedules: Vec<&Vec<usize>> = traces
        .iter()
        .filter(|(m, _)| m.variant.is_passive())
        .map(|(m, _)| &m.schedule)
        .collect();
    if schedules.windows(2).any(|w| w[0] != w[1]) {
        return Err(HarnessError::Summary(
            "traces were run with different increment schedules".into(),
        ));
    }
    let mut by_variant: BTreeMap<Variant, Vec<(u64, &ExperimentTrace)>> = BTreeMap::new();
    for (meta, trace) in traces {
        by_variant
            .entry(meta.variant)
            .or_default()
            .push((meta.seed, trace));
    }
    let mut variants = Vec::new();
    for (variant, mut runs) in by_variant {
        runs.sort_by_key(|(s, _)| *s);
        if runs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(HarnessError::Summary(format!("{variant}: duplicate seed")));
        }
        let windows = first
            .windows
            .iter()
            .map(|&(start, end)| {
                let xs: Vec<f64> = runs
                    .iter()
                    .filter_map(|(_, t)| window_mean(t, start, end))
                    .collect();
                WindowStat {
                    start,
                    end,
                    reward: Stat::of(&xs),
                }
            })
            .collect();
        let finals: Vec<f64> = runs
            .iter()
            .map(|(_, t)| t.rows.last().map_or(0.0, |r| r.cumulative_reward))
            .collect();
        let steps: Vec<f64> = runs.iter().map(|(_, t)| t.rows.len() as f64).collect();
        let mut elim: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        for (_, t) in &runs {
            for (f, step) in first_eliminations(t) {
                elim.entry(f).or_default().push(step);
            }
        }
        let first_elimination = elim
            .into_iter()
            .map(|(feature, steps)| EliminationStat {
                min: *steps.iter().min().expect("nonempty"),
                max: *steps.iter().max().expect("nonempty"),
                mean: steps.iter().sum::<u64>() as f64 / steps.len() as f64,
                seeds: steps.len(),
                feature,
            })
            .collect();
        variants.push(VariantSummary {
            variant,
            seeds: runs.iter().map(|(s, _)| *s).collect(),
            windows,
            final_cumulative: Stat::of(&finals).expect("nonempty"),
            steps: Stat::of(&steps).expect("nonempty"),
            first_elimination,
        });
    }
    Ok(Summary {
        domain: first.domain.clone(),
        schedule: schedules.first().map(|s| s.to_vec()).unwrap_or_default(),
        variants,
    })
}

impl Summary {
    pub fn variant(&self, v: Variant) -> Option<&VariantSummary> {
        self.variants.iter().find(|s| s.variant == v)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes") + "\n"
    }

    /// Plain-text comparison table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "domain {}  schedule {:?}", self.domain, self.schedule).unwrap();
        let mut header = format!("{:<12}{:>6}", "variant", "seeds");
        if let Some(v) = self.variants.first() {
            for w in &v.windows {
                write!(header, "{:>22}", format!("reward ({},{}]", w.start, w.end)).unwrap();
            }
        }
        write!(header, "{:>24}", "final cumulative").unwrap();
        writeln!(out, "{header}").unwrap();
        for v in &self.variants {
            write!(out, "{:<12}{:>6}", v.variant.as_str(), v.seeds.len()).unwrap();
            for w in &v.windows {
                let cell = match &w.reward {
                    Some(s) => format!("{:.4} ± {:.4}", s.mean, s.stddev),
                    None => "absent".into(),
                };
                write!(out, "{cell:>22}").unwrap();
            }
            let c = &v.final_cumulative;
            writeln!(out, "{:>24}", format!("{:.2} ± {:.2}", c.mean, c.stddev)).unwrap();
        }
        for v in &self.variants {
            for e in &v.first_elimination {
                writeln!(
                    out,
                    "{} first eliminates {} at step min {} / mean {:.1} / max {} ({} of {} seeds)",
                    v.variant,
                    e.feature,
                    e.min,
                    e.mean,
                    e.max,
                    e.seeds,
                    v.seeds.len()
                )
                .unwrap();
            }
        }
        out
    }
}
