//! Percentile bootstrap over the entire adjustment pipeline.
//!
//! Each replicate resamples subjects with replacement within strata
//! (RCT control, RCT experimental, external), reruns the full adjustment,
//! and extracts the estimand. Replicates with non-identifiable fits are
//! dropped and counted rather than retried; the call fails when more than
//! 10% of replicates fail. Replicate streams derive from (seed, replicate
//! index), so intervals are reproducible and schedule-independent.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::adjust::AdjustmentResult;
use crate::error::{Error, Result};
use crate::sim::{SubjectRecord, TrialDataset};
use crate::stream::{tag, StreamKey};

/// Bootstrap configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapSpec {
    /// Number of replicates, at least 1.
    pub replicates: usize,
    /// Confidence level in (0, 1).
    pub level: f64,
    /// Resample within (source, arm) strata, preserving stratum sizes.
    /// When false the RCT is resampled as a single stratum.
    pub stratified: bool,
    pub seed: u64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        Self { replicates: 500, level: 0.95, stratified: true, seed: 0 }
    }
}

impl BootstrapSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::Config("bootstrap replicates must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!(
                "confidence level must be in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }
}

/// Percentile interval result.
#[derive(Debug, Clone, Serialize)]
pub struct BootstrapCi {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    #[serde(rename = "B")]
    pub replicates: usize,
    pub failures: usize,
}

/// Resample `subjects` with replacement within each stratum, preserving
/// stratum sizes exactly. Strata are arm groups when `stratified`, else the
/// whole dataset.
fn resample(dataset: &TrialDataset, stratified: bool, rng: &mut ChaCha8Rng) -> TrialDataset {
    let mut subjects: Vec<SubjectRecord> = Vec::with_capacity(dataset.subjects.len());
    let strata: Vec<Vec<&SubjectRecord>> = if stratified {
        let mut experimental = Vec::new();
        let mut control = Vec::new();
        for s in &dataset.subjects {
            if s.arm == 1 {
                experimental.push(s);
            } else {
                control.push(s);
            }
        }
        [experimental, control].into_iter().filter(|v| !v.is_empty()).collect()
    } else {
        vec![dataset.subjects.iter().collect()]
    };
    for stratum in strata {
        for _ in 0..stratum.len() {
            let pick = rng.random_range(0..stratum.len());
            subjects.push(stratum[pick].clone());
        }
    }
    TrialDataset { subjects, source: dataset.source, enddate: dataset.enddate }
}

/// Bootstrap the full adjustment pipeline and return the percentile
/// interval of the extracted estimand.
///
/// `run` executes the adjustment on (resampled) data; `extract` reads the
/// estimand off the result (for the study estimand, the control RMST).
pub fn bootstrap_ci<F, G>(
    rct: &TrialDataset,
    external: Option<&TrialDataset>,
    run: F,
    extract: G,
    spec: &BootstrapSpec,
) -> Result<BootstrapCi>
where
    F: Fn(&TrialDataset, Option<&TrialDataset>) -> Result<AdjustmentResult> + Sync,
    G: Fn(&AdjustmentResult) -> f64 + Sync,
{
    spec.validate()?;
    let point = extract(&run(rct, external)?);

    let key = StreamKey::new(spec.seed);
    let outcomes: Vec<Option<f64>> = (0..spec.replicates)
        .into_par_iter()
        .map(|replicate| {
            let mut rng = key.derive(&[tag::BOOTSTRAP, replicate as u64]).rng();
            let rct_sample = resample(rct, spec.stratified, &mut rng);
            let external_sample = external.map(|ds| resample(ds, false, &mut rng));
            run(&rct_sample, external_sample.as_ref()).ok().map(|r| extract(&r))
        })
        .collect();

    let mut values: Vec<f64> = outcomes.iter().filter_map(|v| *v).collect();
    let failures = spec.replicates - values.len();
    if 10 * failures > spec.replicates {
        return Err(Error::ExcessiveBootstrapFailures {
            failures,
            replicates: spec.replicates,
        });
    }
    values.sort_by(f64::total_cmp);
    let alpha = 1.0 - spec.level;
    let lower = percentile(&values, alpha / 2.0);
    let upper = percentile(&values, 1.0 - alpha / 2.0);
    Ok(BootstrapCi {
        point,
        lower,
        upper,
        level: spec.level,
        replicates: spec.replicates,
        failures,
    })
}

/// Linear-interpolation empirical percentile of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}
