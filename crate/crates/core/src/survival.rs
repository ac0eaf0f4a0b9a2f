//! Nonparametric weighted survival estimation and restricted mean survival
//! time (RMST) with explicit extrapolation policies.
//!
//! The estimator is the weighted product-limit (Kaplan-Meier) estimator. At
//! tied times, events are processed before censorings: rows censored at `t`
//! are still at risk for events at `t`. Zero-weight rows are dropped before
//! estimation.

use crate::error::{Error, Result};
use crate::fit::AftFit;
use crate::quad;

/// One time-to-event observation with a nonnegative case weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalObservation {
    /// Follow-up time in days; must be positive.
    pub time: f64,
    /// True for an event, false for right-censoring.
    pub event: bool,
    /// Nonnegative case weight.
    pub weight: f64,
}

impl SurvivalObservation {
    pub fn new(time: f64, event: bool) -> Self {
        Self { time, event, weight: 1.0 }
    }

    pub fn weighted(time: f64, event: bool, weight: f64) -> Self {
        Self { time, event, weight }
    }
}

/// RMST integration mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmstMode {
    /// Integrate the KM step function only.
    KmOnly,
    /// Integrate a fitted Weibull survival function over the whole horizon.
    Weibull,
    /// KM step integral up to the last follow-up, then the fitted Weibull
    /// tail rescaled for continuity at the junction.
    Hybrid,
}

/// What to do in `KmOnly` mode when the curve ends before `t_star` with
/// positive survival.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailBehavior {
    Error,
    /// Carry the last survival value flat to `t_star`.
    Extend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RmstPolicy {
    pub mode: RmstMode,
    pub on_short_follow_up: TailBehavior,
}

impl RmstPolicy {
    pub fn km_strict() -> Self {
        Self { mode: RmstMode::KmOnly, on_short_follow_up: TailBehavior::Error }
    }

    pub fn km_extend() -> Self {
        Self { mode: RmstMode::KmOnly, on_short_follow_up: TailBehavior::Extend }
    }

    pub fn hybrid() -> Self {
        Self { mode: RmstMode::Hybrid, on_short_follow_up: TailBehavior::Extend }
    }

    pub fn weibull() -> Self {
        Self { mode: RmstMode::Weibull, on_short_follow_up: TailBehavior::Extend }
    }
}

/// A right-continuous weighted Kaplan-Meier curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    /// Distinct event times, ascending.
    times: Vec<f64>,
    /// Survival value immediately after each event time.
    survival: Vec<f64>,
    /// Weight at risk just before each event time.
    at_risk: Vec<f64>,
    /// Event weight at each event time.
    events: Vec<f64>,
    /// Largest follow-up time over all rows (events or censorings).
    max_follow_up: f64,
}

impl SurvivalCurve {
    pub fn event_times(&self) -> &[f64] {
        &self.times
    }

    pub fn survival_values(&self) -> &[f64] {
        &self.survival
    }

    pub fn at_risk(&self) -> &[f64] {
        &self.at_risk
    }

    pub fn event_mass(&self) -> &[f64] {
        &self.events
    }

    pub fn max_follow_up(&self) -> f64 {
        self.max_follow_up
    }

    /// Step-function value at `t` (right-continuous; 1 before the first
    /// event time).
    pub fn survival_at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&u| u <= t) {
            0 => 1.0,
            k => self.survival[k - 1],
        }
    }

    /// Survival at the end of follow-up.
    pub fn final_survival(&self) -> f64 {
        self.survival.last().copied().unwrap_or(1.0)
    }

    /// True when the step function is undefined on part of `[0, t_star]`:
    /// follow-up ends earlier with positive survival remaining.
    pub fn needs_extension(&self, t_star: f64) -> bool {
        self.max_follow_up < t_star && self.final_survival() > 0.0
    }

    /// Exact rectangle integral of the step function over `[0, upto]`.
    /// `upto` must not exceed the region where the curve is defined; the
    /// caller checks that.
    fn step_integral(&self, upto: f64) -> f64 {
        let mut total = 0.0;
        let mut prev_t = 0.0;
        let mut prev_s = 1.0;
        for (&t, &s) in self.times.iter().zip(&self.survival) {
            if t >= upto {
                break;
            }
            total += prev_s * (t - prev_t);
            prev_t = t;
            prev_s = s;
        }
        total + prev_s * (upto - prev_t)
    }
}

/// Weighted product-limit estimator.
///
/// With all weights 1 and no censoring this is the empirical survival
/// function. Weighted estimation with integer weights matches the estimator
/// on the row-replicated dataset exactly.
pub fn km_estimate(observations: &[SurvivalObservation]) -> Result<SurvivalCurve> {
    let mut rows: Vec<&SurvivalObservation> = Vec::with_capacity(observations.len());
    for obs in observations {
        if !obs.time.is_finite() || obs.time <= 0.0 {
            return Err(Error::InvalidObservation(format!(
                "time must be positive and finite, got {}",
                obs.time
            )));
        }
        if !obs.weight.is_finite() || obs.weight < 0.0 {
            return Err(Error::InvalidObservation(format!(
                "weight must be nonnegative and finite, got {}",
                obs.weight
            )));
        }
        if obs.weight > 0.0 {
            rows.push(obs);
        }
    }
    if observations.is_empty() {
        return Err(Error::EmptyInput("no survival observations"));
    }
    if rows.is_empty() {
        return Err(Error::ZeroTotalWeight);
    }
    rows.sort_by(|a, b| a.time.total_cmp(&b.time));

    let max_follow_up = rows.last().map(|r| r.time).unwrap_or(0.0);
    let mut times = Vec::new();
    let mut survival = Vec::new();
    let mut at_risk_col = Vec::new();
    let mut event_col = Vec::new();

    // Suffix weights: weight at risk just before each distinct time. Rows
    // censored at t stay in the risk set for events at t.
    let mut at_risk: f64 = rows.iter().map(|r| r.weight).sum();
    let mut s = 1.0;
    let mut i = 0;
    while i < rows.len() {
        let t = rows[i].time;
        let mut event_mass = 0.0;
        let mut removed = 0.0;
        while i < rows.len() && rows[i].time == t {
            if rows[i].event {
                event_mass += rows[i].weight;
            }
            removed += rows[i].weight;
            i += 1;
        }
        if event_mass > 0.0 {
            s *= 1.0 - event_mass / at_risk;
            times.push(t);
            survival.push(s);
            at_risk_col.push(at_risk);
            event_col.push(event_mass);
        }
        at_risk -= removed;
    }

    Ok(SurvivalCurve {
        times,
        survival,
        at_risk: at_risk_col,
        events: event_col,
        max_follow_up,
    })
}

/// Restricted mean survival time: the integral of the (possibly
/// tail-extended) survival function over `[0, t_star]`.
///
/// `tail_fit` supplies the Weibull used by the `Weibull` and `Hybrid` modes;
/// it is evaluated at zero covariates (fit it intercept-only on the same
/// sample). The step-function body is integrated exactly; parametric pieces
/// use adaptive quadrature.
pub fn rmst(
    curve: &SurvivalCurve,
    t_star: f64,
    policy: RmstPolicy,
    tail_fit: Option<&AftFit>,
) -> Result<f64> {
    if !t_star.is_finite() || t_star <= 0.0 {
        return Err(Error::InvalidObservation(format!(
            "t_star must be positive and finite, got {t_star}"
        )));
    }
    match policy.mode {
        RmstMode::KmOnly => {
            if curve.needs_extension(t_star) {
                match policy.on_short_follow_up {
                    TailBehavior::Error => Err(Error::ExtrapolationRequired {
                        follow_up: curve.max_follow_up(),
                        survival: curve.final_survival(),
                        t_star,
                    }),
                    TailBehavior::Extend => Ok(curve.step_integral(t_star)),
                }
            } else {
                Ok(curve.step_integral(t_star))
            }
        }
        RmstMode::Weibull => {
            let fit = tail_fit.ok_or(Error::MissingTailFit)?;
            let tol = (1e-6 * t_star).min(1e-3);
            quad::integrate(&|t| fit.baseline_survival(t), 0.0, t_star, tol)
        }
        RmstMode::Hybrid => {
            if !curve.needs_extension(t_star) {
                return Ok(curve.step_integral(t_star));
            }
            let fit = tail_fit.ok_or(Error::MissingTailFit)?;
            let junction = curve.max_follow_up();
            let body = curve.step_integral(junction);
            let s_w_junction = fit.baseline_survival(junction);
            if !s_w_junction.is_finite() || s_w_junction <= 0.0 {
                return Err(Error::NonFinite { what: "tail survival at junction" });
            }
            let rescale = curve.final_survival() / s_w_junction;
            let tol = (1e-6 * t_star).min(1e-3);
            let tail = quad::integrate(&|t| fit.baseline_survival(t), junction, t_star, tol)?;
            Ok(body + rescale * tail)
        }
    }
}

/// Mean of `min(time, t_star)`. On fully uncensored data this equals the
/// KM-only RMST; it serves as the independent oracle for that identity.
pub fn truncated_mean(times: &[f64], t_star: f64) -> Result<f64> {
    if times.is_empty() {
        return Err(Error::EmptyInput("no times"));
    }
    Ok(times.iter().map(|&t| t.min(t_star)).sum::<f64>() / times.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obs(time: f64, event: bool) -> SurvivalObservation {
        SurvivalObservation::new(time, event)
    }

    #[test]
    fn empirical_survival_without_censoring() {
        let curve = km_estimate(&[obs(100.0, true), obs(200.0, true), obs(300.0, true)]).unwrap();
        assert_eq!(curve.event_times(), &[100.0, 200.0, 300.0]);
        let s = curve.survival_values();
        assert!((s[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((s[2] - 0.0).abs() < 1e-15);
    }

    #[test]
    fn single_censored_subject_stays_at_one() {
        let curve = km_estimate(&[obs(50.0, false)]).unwrap();
        assert!(curve.event_times().is_empty());
        assert_eq!(curve.survival_at(49.0), 1.0);
        assert_eq!(curve.max_follow_up(), 50.0);
    }

    #[test]
    fn weight_two_equals_duplicated_row() {
        let weighted = km_estimate(&[
            SurvivalObservation::weighted(100.0, true, 2.0),
            obs(250.0, false),
            obs(300.0, true),
        ])
        .unwrap();
        let replicated = km_estimate(&[
            obs(100.0, true),
            obs(100.0, true),
            obs(250.0, false),
            obs(300.0, true),
        ])
        .unwrap();
        assert_eq!(weighted, replicated);
    }

    #[test]
    fn ties_process_events_before_censorings() {
        // The censored row at 100 is still at risk for the event at 100.
        let curve = km_estimate(&[obs(100.0, true), obs(100.0, false)]).unwrap();
        assert_eq!(curve.at_risk(), &[2.0]);
        assert!((curve.survival_values()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_rows_are_dropped() {
        let curve = km_estimate(&[obs(10.0, true), SurvivalObservation::weighted(5.0, true, 0.0)])
            .unwrap();
        assert_eq!(curve.event_times(), &[10.0]);
        assert_eq!(curve.survival_values(), &[0.0]);
    }

    #[test]
    fn empty_and_zero_weight_inputs_error() {
        assert!(matches!(km_estimate(&[]), Err(Error::EmptyInput(_))));
        let all_zero = [SurvivalObservation::weighted(5.0, true, 0.0)];
        assert!(matches!(km_estimate(&all_zero), Err(Error::ZeroTotalWeight)));
    }

    #[test]
    fn nonpositive_time_rejected() {
        assert!(km_estimate(&[obs(0.0, true)]).is_err());
        assert!(km_estimate(&[obs(-1.0, true)]).is_err());
    }

    #[test]
    fn rmst_of_flat_curve_is_t_star() {
        let curve = km_estimate(&[obs(400.0, false), obs(500.0, false)]).unwrap();
        let v = rmst(&curve, 250.0, RmstPolicy::km_strict(), None).unwrap();
        assert_eq!(v, 250.0);
    }

    #[test]
    fn rmst_truncated_mean_example() {
        let curve = km_estimate(&[obs(100.0, true), obs(200.0, true), obs(300.0, true)]).unwrap();
        let v = rmst(&curve, 250.0, RmstPolicy::km_strict(), None).unwrap();
        assert!((v - 550.0 / 3.0).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn rmst_errors_when_follow_up_too_short() {
        let curve = km_estimate(&[obs(50.0, false)]).unwrap();
        let err = rmst(&curve, 100.0, RmstPolicy::km_strict(), None).unwrap_err();
        assert!(matches!(err, Error::ExtrapolationRequired { .. }));
        // Flat extension is available on request.
        let v = rmst(&curve, 100.0, RmstPolicy::km_extend(), None).unwrap();
        assert_eq!(v, 100.0);
    }

    #[test]
    fn rmst_after_curve_hits_zero_needs_no_extension() {
        let curve = km_estimate(&[obs(100.0, true)]).unwrap();
        let v = rmst(&curve, 400.0, RmstPolicy::km_strict(), None).unwrap();
        assert_eq!(v, 100.0);
    }

    #[test]
    fn truncated_mean_examples() {
        let v = truncated_mean(&[100.0, 200.0, 300.0], 250.0).unwrap();
        assert!((v - 550.0 / 3.0).abs() < 1e-12);
        assert_eq!(truncated_mean(&[10.0], 5.0).unwrap(), 5.0);
        assert!(truncated_mean(&[], 5.0).is_err());
    }

    #[test]
    fn hybrid_without_extension_matches_km() {
        let rows = [obs(100.0, true), obs(200.0, true), obs(300.0, true)];
        let curve = km_estimate(&rows).unwrap();
        let km = rmst(&curve, 250.0, RmstPolicy::km_strict(), None).unwrap();
        let hy = rmst(&curve, 250.0, RmstPolicy::hybrid(), None).unwrap();
        assert_eq!(km, hy);
    }

    proptest! {
        #[test]
        fn rmst_bounded_by_t_star(
            times in proptest::collection::vec(0.5f64..500.0, 1..40),
            events in proptest::collection::vec(any::<bool>(), 40),
            t_star in 1.0f64..600.0,
        ) {
            let rows: Vec<SurvivalObservation> = times
                .iter()
                .zip(&events)
                .map(|(&t, &e)| obs(t, e))
                .collect();
            let curve = km_estimate(&rows).unwrap();
            let v = rmst(&curve, t_star, RmstPolicy::km_extend(), None).unwrap();
            prop_assert!(v >= 0.0);
            prop_assert!(v <= t_star + 1e-12);
        }

        #[test]
        fn km_is_permutation_invariant(
            times in proptest::collection::vec(0.5f64..500.0, 2..30),
            events in proptest::collection::vec(any::<bool>(), 30),
            seed in any::<u64>(),
        ) {
            let mut rows: Vec<SurvivalObservation> = times
                .iter()
                .zip(&events)
                .map(|(&t, &e)| obs(t, e))
                .collect();
            let forward = km_estimate(&rows).unwrap();
            // Deterministic shuffle driven by the seed.
            let mut state = seed;
            for i in (1..rows.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                rows.swap(i, j);
            }
            let shuffled = km_estimate(&rows).unwrap();
            prop_assert_eq!(forward, shuffled);
        }

        #[test]
        fn integer_weights_equal_replication(
            spec in proptest::collection::vec((0.5f64..300.0, any::<bool>(), 1u32..4), 1..20),
        ) {
            let weighted: Vec<SurvivalObservation> = spec
                .iter()
                .map(|&(t, e, w)| SurvivalObservation::weighted(t, e, w as f64))
                .collect();
            let mut replicated = Vec::new();
            for &(t, e, w) in &spec {
                for _ in 0..w {
                    replicated.push(obs(t, e));
                }
            }
            prop_assert_eq!(km_estimate(&weighted).unwrap(), km_estimate(&replicated).unwrap());
        }

        #[test]
        fn uncensored_rmst_equals_truncated_mean(
            times in proptest::collection::vec(0.5f64..500.0, 1..40),
            t_star in 1.0f64..600.0,
        ) {
            let rows: Vec<SurvivalObservation> =
                times.iter().map(|&t| obs(t, true)).collect();
            let curve = km_estimate(&rows).unwrap();
            let v = rmst(&curve, t_star, RmstPolicy::km_extend(), None).unwrap();
            let oracle = truncated_mean(&times, t_star).unwrap();
            let denom = oracle.abs().max(1e-12);
            prop_assert!((v - oracle).abs() / denom <= 1e-9);
        }
    }
}
