//! The five analysis methods for the control-group RMST estimand.
//!
//! - `itt_estimate` / `oracle_estimate`: naive analyses of the observed
//!   (switching-contaminated) and counterfactual no-switching outcomes.
//! - `tse_adjust`: two-stage estimation. A Weibull AFT of post-progression
//!   survival on the switch indicator and covariates is fit to RCT control
//!   subjects with observed progression; switchers' PPS times are divided by
//!   the estimated acceleration factor, optionally re-censored, and adjusted
//!   OS is rebuilt as observed progression plus adjusted PPS.
//! - `atse_adjust`: augmented TSE. A dissimilarity AFT comparing
//!   non-switching RCT controls with the external cohort yields `rho_hat`;
//!   every external subject receives weight `exp(-c * |rho_hat|)` and joins
//!   the switch-effect model as down-weighted non-switching controls. The
//!   adjusted dataset contains RCT subjects only.
//! - `eca_estimate`: the external cohort replaces the RCT control arm, with
//!   odds-of-participation weights from a propensity model fit on the pooled
//!   RCT and external covariate data.
//!
//! Control subjects without observed progression have no post-progression
//! exposure to model; they pass through with their observed (censored)
//! outcome. Post-progression times of zero (death at the progression visit)
//! are floored to half a day for model fitting only.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{fit_logistic, fit_weibull_aft, AftFit, DesignRow};
use crate::sim::{SubjectRecord, TrialDataset};
use crate::survival::{km_estimate, rmst, RmstMode, RmstPolicy, SurvivalObservation};

/// Floor applied to nonpositive post-progression times before model
/// fitting; below the visit-grid resolution.
pub const PPS_FIT_FLOOR_DAYS: f64 = 0.5;

/// Re-censoring scope after counterfactual adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecensorPolicy {
    Off,
    SwitchersOnly,
    AllControl,
}

impl RecensorPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            RecensorPolicy::Off => "off",
            RecensorPolicy::SwitchersOnly => "switchers-only",
            RecensorPolicy::AllControl => "all-control",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(RecensorPolicy::Off),
            "switchers-only" => Ok(RecensorPolicy::SwitchersOnly),
            "all-control" => Ok(RecensorPolicy::AllControl),
            other => Err(Error::Config(format!("unknown re-censoring policy `{other}`"))),
        }
    }
}

/// Measured covariates available to the estimators. The simulated datasets
/// carry a single measured prognostic factor; the unmeasured factor is never
/// exposed here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Covariate {
    BadProg,
}

impl Covariate {
    pub fn value(&self, subject: &SubjectRecord) -> f64 {
        match self {
            Covariate::BadProg => f64::from(subject.badprog),
        }
    }

    /// Default adjustment set.
    pub fn defaults() -> Vec<Covariate> {
        vec![Covariate::BadProg]
    }
}

/// Analysis method tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Itt,
    Oracle,
    Tse,
    Atse { c: f64 },
    Eca,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Itt => "itt",
            Method::Oracle => "oracle",
            Method::Tse => "tse",
            Method::Atse { .. } => "atse",
            Method::Eca => "eca",
        }
    }

    /// Column label for study tables, e.g. `atse_c4`.
    pub fn label(&self) -> String {
        match self {
            Method::Atse { c } => {
                if *c == c.trunc() && c.abs() < 1e12 {
                    format!("atse_c{}", *c as i64)
                } else {
                    format!("atse_c{c}")
                }
            }
            other => other.name().to_string(),
        }
    }
}

/// One row of an adjusted analysis dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedRow {
    pub id: u64,
    pub arm: u8,
    pub time: f64,
    pub status: bool,
    pub weight: f64,
}

/// Relative treatment effect on the adjusted dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelativeEffect {
    /// `exp` of the randomized-arm coefficient in a Weibull AFT of adjusted
    /// OS; values above 1 mean longer survival on the experimental arm.
    pub acceleration_factor: f64,
    /// RMST(experimental) - RMST(control) at the configured horizon.
    pub drmst: f64,
}

/// Output of one adjustment method.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentResult {
    pub method: Method,
    /// Adjusted analysis rows. For RCT-based methods: both arms, control
    /// adjusted. For the external-control analysis: weighted external rows.
    pub adjusted: Vec<AdjustedRow>,
    /// Log acceleration factor for switching; absent when the control arm
    /// has no switchers with observed progression.
    pub mu_hat: Option<f64>,
    pub mu_se: Option<f64>,
    /// Log acceleration factor for trial membership (dissimilarity).
    pub rho_hat: Option<f64>,
    pub rho_se: Option<f64>,
    /// Weight assigned to every external subject.
    pub external_weight: Option<f64>,
    /// Weight-discounted count of external events entering the switch model.
    pub effective_external_events: Option<f64>,
    pub control_rmst: f64,
    pub relative: Option<RelativeEffect>,
    pub recensor: RecensorPolicy,
    pub t_star: f64,
}

/// JSON diagnostics document.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub mu_hat: Option<f64>,
    pub mu_se: Option<f64>,
    pub rho_hat: Option<f64>,
    pub rho_se: Option<f64>,
    pub external_weight: Option<f64>,
    pub effective_external_events: Option<f64>,
    pub recensor_policy: String,
    pub control_rmst: f64,
    pub t_star: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_effect: Option<RelativeEffect>,
}

impl AdjustmentResult {
    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            method: self.method.name().to_string(),
            c: match self.method {
                Method::Atse { c } => Some(c),
                _ => None,
            },
            mu_hat: self.mu_hat,
            mu_se: self.mu_se,
            rho_hat: self.rho_hat,
            rho_se: self.rho_se,
            external_weight: self.external_weight,
            effective_external_events: self.effective_external_events,
            recensor_policy: self.recensor.name().to_string(),
            control_rmst: self.control_rmst,
            t_star: self.t_star,
            relative_effect: self.relative,
        }
    }
}

/// Counterfactual post-progression survival: switchers' PPS divided by the
/// switching acceleration factor, non-switchers unchanged.
pub fn counterfactual_pps(pps: f64, switched: bool, mu_hat: f64) -> f64 {
    debug_assert!(pps >= 0.0);
    if switched {
        pps / mu_hat.exp()
    } else {
        pps
    }
}

/// One control-arm post-progression observation entering re-censoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPpsRow {
    /// Counterfactual post-progression time.
    pub pps: f64,
    pub event: bool,
    /// Administrative PPS censoring horizon: `max(0, enddate - ttp)`.
    pub horizon: f64,
    pub switched: bool,
}

/// Truncate counterfactual PPS times at the shrunken horizon
/// `min(tau, tau * exp(-mu_hat))` for the rows covered by the policy,
/// marking truncated rows censored.
pub fn recensor(rows: &mut [ControlPpsRow], mu_hat: f64, policy: RecensorPolicy) {
    if policy == RecensorPolicy::Off {
        return;
    }
    let shrink = (-mu_hat).exp().min(1.0);
    for row in rows.iter_mut() {
        let covered = match policy {
            RecensorPolicy::Off => false,
            RecensorPolicy::SwitchersOnly => row.switched,
            RecensorPolicy::AllControl => true,
        };
        if !covered {
            continue;
        }
        let horizon = row.horizon * shrink;
        if row.pps > horizon {
            row.pps = horizon;
            row.event = false;
        }
    }
}

/// Post-progression response for model fitting, floored away from zero.
fn fit_pps(subject: &SubjectRecord) -> f64 {
    if subject.pps <= 0.0 {
        PPS_FIT_FLOOR_DAYS
    } else {
        subject.pps
    }
}

fn covariate_values(covariates: &[Covariate], subject: &SubjectRecord) -> Vec<f64> {
    covariates.iter().map(|c| c.value(subject)).collect()
}

/// Weighted KM RMST of a set of observations under the given policy; in
/// `Weibull`/`Hybrid` modes the tail model is an intercept-only Weibull AFT
/// fit to the same sample.
pub(crate) fn estimate_rmst(
    observations: &[SurvivalObservation],
    policy: RmstPolicy,
    t_star: f64,
) -> Result<f64> {
    let curve = km_estimate(observations)?;
    let needs_fit = match policy.mode {
        RmstMode::KmOnly => false,
        RmstMode::Weibull => true,
        RmstMode::Hybrid => curve.needs_extension(t_star),
    };
    let tail: Option<AftFit> = if needs_fit {
        let rows: Vec<DesignRow> = observations
            .iter()
            .filter(|o| o.weight > 0.0)
            .map(|o| DesignRow::survival(o.time, o.event, Vec::new()).with_weight(o.weight))
            .collect();
        Some(fit_weibull_aft(&rows)?)
    } else {
        None
    };
    rmst(&curve, t_star, policy, tail.as_ref())
}

/// Observed-outcome observations for the control arm.
fn control_observations(rct: &TrialDataset, oracle: bool) -> Vec<SurvivalObservation> {
    rct.control_subjects()
        .map(|s| {
            if oracle {
                SurvivalObservation::new(s.os_noswitch, s.os_noswitch_status)
            } else {
                SurvivalObservation::new(s.os_observed, s.os_observed_status)
            }
        })
        .collect()
}

fn passthrough_rows(rct: &TrialDataset, oracle: bool) -> Vec<AdjustedRow> {
    rct.subjects
        .iter()
        .map(|s| AdjustedRow {
            id: s.id,
            arm: s.arm,
            time: if oracle { s.os_noswitch } else { s.os_observed },
            status: if oracle { s.os_noswitch_status } else { s.os_observed_status },
            weight: 1.0,
        })
        .collect()
}

/// Intention-to-treat analysis of the observed outcomes.
pub fn itt_estimate(
    rct: &TrialDataset,
    rmst_policy: RmstPolicy,
    t_star: f64,
) -> Result<AdjustmentResult> {
    let control_rmst = estimate_rmst(&control_observations(rct, false), rmst_policy, t_star)?;
    Ok(AdjustmentResult {
        method: Method::Itt,
        adjusted: passthrough_rows(rct, false),
        mu_hat: None,
        mu_se: None,
        rho_hat: None,
        rho_se: None,
        external_weight: None,
        effective_external_events: None,
        control_rmst,
        relative: None,
        recensor: RecensorPolicy::Off,
        t_star,
    })
}

/// The same analysis on the counterfactual no-switching outcomes: the
/// simulation-truth benchmark.
pub fn oracle_estimate(
    rct: &TrialDataset,
    rmst_policy: RmstPolicy,
    t_star: f64,
) -> Result<AdjustmentResult> {
    let control_rmst = estimate_rmst(&control_observations(rct, true), rmst_policy, t_star)?;
    Ok(AdjustmentResult {
        method: Method::Oracle,
        adjusted: passthrough_rows(rct, true),
        mu_hat: None,
        mu_se: None,
        rho_hat: None,
        rho_se: None,
        external_weight: None,
        effective_external_events: None,
        control_rmst,
        relative: None,
        recensor: RecensorPolicy::Off,
        t_star,
    })
}

/// Design rows for the switch-effect model: switch indicator first, then
/// the covariates.
fn switch_model_row(subject: &SubjectRecord, covariates: &[Covariate], weight: f64) -> DesignRow {
    let mut covs = Vec::with_capacity(covariates.len() + 1);
    covs.push(f64::from(subject.switched));
    covs.extend(covariate_values(covariates, subject));
    DesignRow::survival(fit_pps(subject), subject.pps_status, covs).with_weight(weight)
}

/// Rebuild the adjusted control arm from a fitted switching effect.
fn adjusted_control_rows(
    controls: &[&SubjectRecord],
    mu_hat: f64,
    policy: RecensorPolicy,
) -> Vec<AdjustedRow> {
    let mut pps_rows: Vec<ControlPpsRow> = Vec::new();
    for s in controls.iter().filter(|s| s.ttp_status) {
        pps_rows.push(ControlPpsRow {
            pps: counterfactual_pps(s.pps, s.switched, mu_hat),
            event: s.pps_status,
            horizon: (s.enddate - s.ttp).max(0.0),
            switched: s.switched,
        });
    }
    recensor(&mut pps_rows, mu_hat, policy);

    let mut rows = Vec::with_capacity(controls.len());
    let mut progressed = pps_rows.into_iter();
    for s in controls {
        if s.ttp_status {
            let adjusted = progressed.next().expect("one PPS row per progressed subject");
            rows.push(AdjustedRow {
                id: s.id,
                arm: 0,
                time: s.ttp + adjusted.pps,
                status: adjusted.event,
                weight: 1.0,
            });
        } else {
            rows.push(AdjustedRow {
                id: s.id,
                arm: 0,
                time: s.os_observed,
                status: s.os_observed_status,
                weight: 1.0,
            });
        }
    }
    rows
}

/// Shared core of TSE and ATSE: fit the switch-effect model (with optional
/// down-weighted external rows), rebuild the adjusted RCT dataset, and
/// estimate the control RMST.
#[allow(clippy::too_many_arguments)]
fn switch_adjust_core(
    rct: &TrialDataset,
    external_step2: &[&SubjectRecord],
    external_weight: f64,
    covariates: &[Covariate],
    policy: RecensorPolicy,
    rmst_policy: RmstPolicy,
    t_star: f64,
    method: Method,
) -> Result<AdjustmentResult> {
    let controls: Vec<&SubjectRecord> = rct.control_subjects().collect();
    let step_controls: Vec<&SubjectRecord> =
        controls.iter().copied().filter(|s| s.ttp_status).collect();
    let has_switch_rows = step_controls.iter().any(|s| s.switched);

    let (mu_hat, mu_se, adjusted_controls) = if has_switch_rows {
        let mut rows: Vec<DesignRow> = step_controls
            .iter()
            .map(|s| switch_model_row(s, covariates, 1.0))
            .collect();
        rows.extend(
            external_step2
                .iter()
                .map(|s| switch_model_row(s, covariates, external_weight)),
        );
        let fit = fit_weibull_aft(&rows)?;
        let mu = fit.coefficients[0];
        (
            Some(mu),
            Some(fit.coefficient_se(0)),
            adjusted_control_rows(&controls, mu, policy),
        )
    } else {
        // No switchers with observed progression: the adjustment is
        // degenerate and the observed control arm passes through unchanged.
        let rows = controls
            .iter()
            .map(|s| AdjustedRow {
                id: s.id,
                arm: 0,
                time: s.os_observed,
                status: s.os_observed_status,
                weight: 1.0,
            })
            .collect();
        (None, None, rows)
    };

    let control_obs: Vec<SurvivalObservation> = adjusted_controls
        .iter()
        .map(|r| SurvivalObservation::new(r.time, r.status))
        .collect();
    let control_rmst = estimate_rmst(&control_obs, rmst_policy, t_star)?;

    let mut adjusted = Vec::with_capacity(rct.subjects.len());
    let mut adjusted_iter = adjusted_controls.into_iter();
    for s in &rct.subjects {
        if s.arm == 1 {
            adjusted.push(AdjustedRow {
                id: s.id,
                arm: 1,
                time: s.os_observed,
                status: s.os_observed_status,
                weight: 1.0,
            });
        } else {
            adjusted.push(adjusted_iter.next().expect("one adjusted row per control"));
        }
    }

    Ok(AdjustmentResult {
        method,
        adjusted,
        mu_hat,
        mu_se,
        rho_hat: None,
        rho_se: None,
        external_weight: None,
        effective_external_events: None,
        control_rmst,
        relative: None,
        recensor: policy,
        t_star,
    })
}

/// Two-stage estimation on the RCT alone.
pub fn tse_adjust(
    rct: &TrialDataset,
    covariates: &[Covariate],
    policy: RecensorPolicy,
    rmst_policy: RmstPolicy,
    t_star: f64,
) -> Result<AdjustmentResult> {
    switch_adjust_core(
        rct,
        &[],
        0.0,
        covariates,
        policy,
        rmst_policy,
        t_star,
        Method::Tse,
    )
}

/// Dissimilarity model output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dissimilarity {
    /// Log acceleration factor for trial membership among non-switchers.
    pub rho_hat: f64,
    pub rho_se: f64,
    /// `exp(-c * |rho_hat|)`, the weight given to every external subject.
    pub weight: f64,
}

/// Fit the dissimilarity AFT comparing non-switching RCT controls with the
/// external cohort (both restricted to observed progression), and derive the
/// external weight `exp(-c * |rho_hat|)`.
pub fn atse_dissimilarity(
    rct: &TrialDataset,
    external: &TrialDataset,
    covariates: &[Covariate],
    c: f64,
) -> Result<Dissimilarity> {
    let rct_rows: Vec<&SubjectRecord> = rct
        .control_subjects()
        .filter(|s| !s.switched && s.ttp_status)
        .collect();
    let ext_rows: Vec<&SubjectRecord> =
        external.subjects.iter().filter(|s| s.ttp_status).collect();
    if rct_rows.is_empty() || ext_rows.is_empty() {
        return Err(Error::NonIdentifiable(
            "dissimilarity model needs progressed subjects in both cohorts",
        ));
    }
    if !rct_rows.iter().any(|s| s.pps_status) || !ext_rows.iter().any(|s| s.pps_status) {
        return Err(Error::NonIdentifiable(
            "dissimilarity model needs events in both cohorts",
        ));
    }

    let membership_row = |s: &SubjectRecord, member: f64| -> DesignRow {
        let mut covs = Vec::with_capacity(covariates.len() + 1);
        covs.push(member);
        covs.extend(covariate_values(covariates, s));
        DesignRow::survival(fit_pps(s), s.pps_status, covs)
    };
    let mut rows: Vec<DesignRow> = rct_rows.iter().map(|s| membership_row(s, 1.0)).collect();
    rows.extend(ext_rows.iter().map(|s| membership_row(s, 0.0)));
    let fit = fit_weibull_aft(&rows)?;
    let rho_hat = fit.coefficients[0];
    Ok(Dissimilarity {
        rho_hat,
        rho_se: fit.coefficient_se(0),
        weight: (-c * rho_hat.abs()).exp(),
    })
}

/// Augmented two-stage estimation: TSE whose switch-effect model borrows
/// down-weighted external subjects as extra non-switching controls. The
/// adjusted dataset contains RCT subjects only. With no usable external
/// rows the result reduces to `tse_adjust`.
#[allow(clippy::too_many_arguments)]
pub fn atse_adjust(
    rct: &TrialDataset,
    external: &TrialDataset,
    covariates: &[Covariate],
    c: f64,
    policy: RecensorPolicy,
    rmst_policy: RmstPolicy,
    t_star: f64,
) -> Result<AdjustmentResult> {
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::InvalidSpec(format!("decay factor must be positive, got {c}")));
    }
    let method = Method::Atse { c };
    let ext_rows: Vec<&SubjectRecord> =
        external.subjects.iter().filter(|s| s.ttp_status).collect();
    if ext_rows.is_empty() {
        return switch_adjust_core(
            rct,
            &[],
            0.0,
            covariates,
            policy,
            rmst_policy,
            t_star,
            method,
        );
    }

    let dissimilarity = atse_dissimilarity(rct, external, covariates, c)?;
    let mut result = switch_adjust_core(
        rct,
        &ext_rows,
        dissimilarity.weight,
        covariates,
        policy,
        rmst_policy,
        t_star,
        method,
    )?;
    let external_events = ext_rows.iter().filter(|s| s.pps_status).count() as f64;
    result.rho_hat = Some(dissimilarity.rho_hat);
    result.rho_se = Some(dissimilarity.rho_se);
    result.external_weight = Some(dissimilarity.weight);
    result.effective_external_events = Some(dissimilarity.weight * external_events);
    Ok(result)
}

/// External-control-arm analysis: a propensity model for trial membership
/// is fit on the pooled RCT (both arms) and external rows; external
/// subjects receive odds weights `e / (1 - e)` and the weighted external
/// survival replaces the RCT control arm, which is ignored.
pub fn eca_estimate(
    rct: &TrialDataset,
    external: &TrialDataset,
    covariates: &[Covariate],
    rmst_policy: RmstPolicy,
    t_star: f64,
) -> Result<AdjustmentResult> {
    let mut rows: Vec<DesignRow> = Vec::with_capacity(rct.subjects.len() + external.subjects.len());
    for s in &rct.subjects {
        rows.push(DesignRow::binary(true, covariate_values(covariates, s)));
    }
    for s in &external.subjects {
        rows.push(DesignRow::binary(false, covariate_values(covariates, s)));
    }
    let propensity = fit_logistic(&rows)?;

    let adjusted: Vec<AdjustedRow> = external
        .subjects
        .iter()
        .map(|s| {
            // e / (1 - e) = exp(lp)
            let weight = propensity.linear_predictor(&covariate_values(covariates, s)).exp();
            AdjustedRow {
                id: s.id,
                arm: 0,
                time: s.os_observed,
                status: s.os_observed_status,
                weight,
            }
        })
        .collect();

    let obs: Vec<SurvivalObservation> = adjusted
        .iter()
        .map(|r| SurvivalObservation::weighted(r.time, r.status, r.weight))
        .collect();
    let control_rmst = estimate_rmst(&obs, rmst_policy, t_star)?;

    Ok(AdjustmentResult {
        method: Method::Eca,
        adjusted,
        mu_hat: None,
        mu_se: None,
        rho_hat: None,
        rho_se: None,
        external_weight: None,
        effective_external_events: None,
        control_rmst,
        relative: None,
        recensor: RecensorPolicy::Off,
        t_star,
    })
}

/// Relative treatment effect on an adjusted dataset: acceleration factor
/// from a Weibull AFT on the randomized arm, and the difference in RMST.
pub fn relative_effect(
    adjusted: &[AdjustedRow],
    rmst_policy: RmstPolicy,
    t_star: f64,
) -> Result<RelativeEffect> {
    for arm in [0u8, 1u8] {
        if !adjusted.iter().any(|r| r.arm == arm && r.status && r.weight > 0.0) {
            return Err(Error::NonIdentifiable("each arm needs at least one event"));
        }
    }
    let rows: Vec<DesignRow> = adjusted
        .iter()
        .map(|r| {
            DesignRow::survival(r.time, r.status, vec![f64::from(r.arm)]).with_weight(r.weight)
        })
        .collect();
    let fit = fit_weibull_aft(&rows)?;
    let arm_obs = |arm: u8| -> Vec<SurvivalObservation> {
        adjusted
            .iter()
            .filter(|r| r.arm == arm)
            .map(|r| SurvivalObservation::weighted(r.time, r.status, r.weight))
            .collect()
    };
    let control = estimate_rmst(&arm_obs(0), rmst_policy, t_star)?;
    let experimental = estimate_rmst(&arm_obs(1), rmst_policy, t_star)?;
    Ok(RelativeEffect {
        acceleration_factor: fit.coefficients[0].exp(),
        drmst: experimental - control,
    })
}
