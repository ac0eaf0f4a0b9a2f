//! The simulation-study harness: scenarios x conditions x methods x
//! replications, with percent bias, empirical SE, and RMSE of the
//! control-group RMST expressed as percentages of the quadrature truth.
//!
//! Replication streams derive from (base seed, scenario, condition,
//! replication index) and dataset generation never depends on the method
//! list, so adding or removing methods leaves other cells bit-identical and
//! results do not depend on the thread budget.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use crate::adjust::{
    atse_adjust, eca_estimate, itt_estimate, oracle_estimate, tse_adjust, Covariate, Method,
    RecensorPolicy,
};
use crate::error::{Error, Result};
use crate::sim::{simulate_external, simulate_rct, true_control_rmst, Condition, ScenarioSpec};
use crate::stream::{tag, StreamKey};
use crate::survival::RmstPolicy;

/// Output rendering format for the metrics table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
    Md,
}

impl OutputFormat {
    pub fn name(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
            OutputFormat::Md => "md",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "md" => Ok(OutputFormat::Md),
            other => Err(Error::Config(format!("unknown output format `{other}`"))),
        }
    }
}

/// Full study configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub scenarios: Vec<u8>,
    pub conditions: Vec<Condition>,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub base_seed: u64,
    /// Worker threads; 0 uses the default pool size.
    pub threads: usize,
    pub rmst_policy: RmstPolicy,
    pub recensor: RecensorPolicy,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
}

/// The method roster evaluated by default.
pub fn default_methods() -> Vec<Method> {
    vec![
        Method::Oracle,
        Method::Itt,
        Method::Tse,
        Method::Eca,
        Method::Atse { c: 1.0 },
        Method::Atse { c: 4.0 },
        Method::Atse { c: 8.0 },
    ]
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            scenarios: vec![1],
            conditions: vec![Condition::A, Condition::B, Condition::C],
            methods: default_methods(),
            replications: 200,
            base_seed: 0,
            threads: 0,
            rmst_policy: RmstPolicy::hybrid(),
            recensor: RecensorPolicy::SwitchersOnly,
            format: OutputFormat::Csv,
            out: None,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("method list must be nonempty".into()));
        }
        if self.scenarios.is_empty() || self.conditions.is_empty() {
            return Err(Error::Config("scenario and condition lists must be nonempty".into()));
        }
        for &s in &self.scenarios {
            if !(1..=8).contains(&s) {
                return Err(Error::Config(format!("scenario {s} out of range 1..=8")));
            }
        }
        for m in &self.methods {
            if let Method::Atse { c } = m {
                if c.is_nan() || *c <= 0.0 {
                    return Err(Error::Config(format!("atse decay factor must be positive, got {c}")));
                }
            }
        }
        Ok(())
    }
}

/// Per-method control RMST estimates from one replication; `None` marks a
/// method failure (non-identifiable or non-convergent fit).
#[derive(Debug, Clone)]
pub struct ReplicationOutcome {
    pub estimates: Vec<Option<f64>>,
}

/// Simulate one RCT and one external dataset from the replication stream
/// and run every method on them.
pub fn run_replication(
    spec: &ScenarioSpec,
    methods: &[Method],
    recensor: RecensorPolicy,
    rmst_policy: RmstPolicy,
    key: &StreamKey,
) -> Result<ReplicationOutcome> {
    let rct = simulate_rct(spec, key)?;
    let external = simulate_external(spec, key)?;
    let t_star = spec.enddate;
    let covariates = Covariate::defaults();
    let estimates = methods
        .iter()
        .map(|method| {
            let result = match method {
                Method::Itt => itt_estimate(&rct, rmst_policy, t_star),
                Method::Oracle => oracle_estimate(&rct, rmst_policy, t_star),
                Method::Tse => tse_adjust(&rct, &covariates, recensor, rmst_policy, t_star),
                Method::Atse { c } => atse_adjust(
                    &rct,
                    &external,
                    &covariates,
                    *c,
                    recensor,
                    rmst_policy,
                    t_star,
                ),
                Method::Eca => {
                    eca_estimate(&rct, &external, &covariates, rmst_policy, t_star)
                }
            };
            result.ok().map(|r| r.control_rmst)
        })
        .collect();
    Ok(ReplicationOutcome { estimates })
}

/// Performance measures as percentages of the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub bias_pct: f64,
    pub se_pct: f64,
    pub rmse_pct: f64,
}

/// Percent bias, empirical SE (sample standard deviation, divisor n-1), and
/// RMSE of `estimates` against `truth`, each as a percentage of `truth`.
pub fn performance_metrics(estimates: &[f64], truth: f64) -> Result<Metrics> {
    if estimates.is_empty() {
        return Err(Error::EmptyInput("no estimates"));
    }
    if truth.is_nan() || truth <= 0.0 {
        return Err(Error::InvalidSpec(format!("truth must be positive, got {truth}")));
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let sd = if estimates.len() > 1 {
        (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mse = estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / n;
    Ok(Metrics {
        bias_pct: 100.0 * (mean - truth) / truth,
        se_pct: 100.0 * sd / truth,
        rmse_pct: 100.0 * mse.sqrt() / truth,
    })
}

/// One cell of the results table.
#[derive(Debug, Clone, Serialize)]
pub struct StudyCell {
    pub scenario: u8,
    pub condition: char,
    pub method: String,
    /// NaN when every replicate failed.
    pub bias_pct: f64,
    pub se_pct: f64,
    pub rmse_pct: f64,
    pub failures: usize,
    pub replications: usize,
    pub truth: f64,
}

/// One raw per-replication estimate (the plotting data surface).
#[derive(Debug, Clone, Serialize)]
pub struct RawEstimate {
    pub scenario: u8,
    pub condition: char,
    pub replication: usize,
    pub method: String,
    pub estimate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub cells: Vec<StudyCell>,
    pub raw: Vec<RawEstimate>,
}

/// Run the full study grid.
pub fn run_study(config: &StudyConfig) -> Result<StudyOutput> {
    config.validate()?;
    if config.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| run_study_inner(config))
    } else {
        run_study_inner(config)
    }
}

fn condition_index(condition: Condition) -> u64 {
    match condition {
        Condition::A => 0,
        Condition::B => 1,
        Condition::C => 2,
    }
}

fn run_study_inner(config: &StudyConfig) -> Result<StudyOutput> {
    let base = StreamKey::new(config.base_seed);
    let mut cells = Vec::new();
    let mut raw = Vec::new();
    for &scenario in &config.scenarios {
        let preset = ScenarioSpec::preset(scenario)?;
        for &condition in &config.conditions {
            let spec = ScenarioSpec { condition, ..preset.clone() };
            let truth = true_control_rmst(&spec, spec.enddate)?;
            let outcomes: Vec<Result<ReplicationOutcome>> = (0..config.replications)
                .into_par_iter()
                .map(|replication| {
                    let key = base.derive(&[
                        tag::STUDY,
                        u64::from(scenario),
                        condition_index(condition),
                        replication as u64,
                    ]);
                    run_replication(&spec, &config.methods, config.recensor, config.rmst_policy, &key)
                })
                .collect();
            let mut per_rep = Vec::with_capacity(outcomes.len());
            for outcome in outcomes {
                per_rep.push(outcome?);
            }

            for (m, method) in config.methods.iter().enumerate() {
                let label = method.label();
                let successes: Vec<f64> =
                    per_rep.iter().filter_map(|o| o.estimates[m]).collect();
                let failures = config.replications - successes.len();
                let metrics = if successes.is_empty() {
                    Metrics { bias_pct: f64::NAN, se_pct: f64::NAN, rmse_pct: f64::NAN }
                } else {
                    performance_metrics(&successes, truth)?
                };
                cells.push(StudyCell {
                    scenario,
                    condition: condition.letter(),
                    method: label.clone(),
                    bias_pct: metrics.bias_pct,
                    se_pct: metrics.se_pct,
                    rmse_pct: metrics.rmse_pct,
                    failures,
                    replications: config.replications,
                    truth,
                });
                for (replication, outcome) in per_rep.iter().enumerate() {
                    raw.push(RawEstimate {
                        scenario,
                        condition: condition.letter(),
                        replication,
                        method: label.clone(),
                        estimate: outcome.estimates[m],
                    });
                }
            }
        }
    }
    Ok(StudyOutput { cells, raw })
}

fn fmt_metric(v: f64, decimals: usize) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v:.decimals$}")
    }
}

impl StudyOutput {
    fn cell(&self, scenario: u8, condition: char, method: &str) -> Option<&StudyCell> {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.condition == condition && c.method == method)
    }

    fn grid_axes(&self) -> (Vec<u8>, Vec<char>, Vec<String>) {
        let mut scenarios = Vec::new();
        let mut conditions = Vec::new();
        let mut methods = Vec::new();
        for c in &self.cells {
            if !scenarios.contains(&c.scenario) {
                scenarios.push(c.scenario);
            }
            if !conditions.contains(&c.condition) {
                conditions.push(c.condition);
            }
            if !methods.contains(&c.method) {
                methods.push(c.method.clone());
            }
        }
        (scenarios, conditions, methods)
    }

    /// Wide CSV: one row per (scenario, method); metric-major columns per
    /// condition, matching the results-table layout.
    pub fn render_csv(&self) -> String {
        let (scenarios, conditions, methods) = self.grid_axes();
        let mut out = String::from("scenario,method");
        for metric in ["bias_pct", "se_pct", "rmse_pct", "failures"] {
            for c in &conditions {
                out.push_str(&format!(",{metric}_{c}"));
            }
        }
        out.push('\n');
        for &s in &scenarios {
            for m in &methods {
                out.push_str(&format!("{s},{m}"));
                for pick in 0..4 {
                    for &c in &conditions {
                        let cell = self.cell(s, c, m);
                        let text = match (cell, pick) {
                            (Some(cell), 0) => fmt_metric(cell.bias_pct, 6),
                            (Some(cell), 1) => fmt_metric(cell.se_pct, 6),
                            (Some(cell), 2) => fmt_metric(cell.rmse_pct, 6),
                            (Some(cell), 3) => cell.failures.to_string(),
                            (None, _) => "NA".to_string(),
                            _ => unreachable!(),
                        };
                        out.push(',');
                        out.push_str(&text);
                    }
                }
                out.push('\n');
            }
        }
        out
    }

    /// Markdown tables, one per scenario.
    pub fn render_md(&self) -> String {
        let (scenarios, conditions, methods) = self.grid_axes();
        let mut out = String::new();
        for &s in &scenarios {
            let truth = self
                .cells
                .iter()
                .find(|c| c.scenario == s)
                .map(|c| c.truth)
                .unwrap_or(f64::NAN);
            out.push_str(&format!(
                "## Scenario {s} (true control RMST {:.2} days)\n\n",
                truth
            ));
            out.push_str("| method |");
            for metric in ["bias %", "SE %", "RMSE %"] {
                for c in &conditions {
                    out.push_str(&format!(" {metric} {c} |"));
                }
            }
            out.push('\n');
            out.push_str("|---|");
            for _ in 0..(3 * conditions.len()) {
                out.push_str("---|");
            }
            out.push('\n');
            for m in &methods {
                out.push_str(&format!("| {m} |"));
                for pick in 0..3 {
                    for &c in &conditions {
                        let text = match (self.cell(s, c, m), pick) {
                            (Some(cell), 0) => fmt_metric(cell.bias_pct, 2),
                            (Some(cell), 1) => fmt_metric(cell.se_pct, 2),
                            (Some(cell), 2) => fmt_metric(cell.rmse_pct, 2),
                            (None, _) => "NA".to_string(),
                            _ => unreachable!(),
                        };
                        out.push_str(&format!(" {text} |"));
                    }
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }

    pub fn render_json(&self) -> String {
        // Serialize is derived with a fixed field order; output is
        // deterministic.
        serde_json::to_string_pretty(&self.cells).expect("cells serialize") + "\n"
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.render_csv(),
            OutputFormat::Json => self.render_json(),
            OutputFormat::Md => self.render_md(),
        }
    }

    /// Long CSV of every per-replication estimate (empty on failure).
    pub fn render_replicates_csv(&self) -> String {
        let mut out = String::from("scenario,condition,replication,method,estimate\n");
        for r in &self.raw {
            let estimate = r.estimate.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.scenario, r.condition, r.replication, r.method, estimate
            ));
        }
        out
    }
}
