//! Acceptance suite. Each test prints one PASS/FAIL line for its criterion
//! (visible with `--nocapture`) and then asserts every sub-check.

use atse::adjust::{
    atse_adjust, itt_estimate, oracle_estimate, tse_adjust, Covariate, RecensorPolicy,
};
use atse::bootstrap::{bootstrap_ci, BootstrapSpec};
use atse::fit::{aft_log_likelihood, fit_weibull_aft, DesignRow};
use atse::sim::{
    simulate_external, simulate_rct, true_control_rmst, Condition, ScenarioSpec, Source,
    TrialDataset,
};
use atse::stream::StreamKey;
use atse::study::{default_methods, run_study, OutputFormat, StudyConfig};
use atse::survival::{km_estimate, rmst, truncated_mean, RmstPolicy, SurvivalObservation};
use rand::Rng;

struct Criterion {
    id: &'static str,
    description: &'static str,
    checks: Vec<(String, bool)>,
}

impl Criterion {
    fn new(id: &'static str, description: &'static str) -> Self {
        Self { id, description, checks: Vec::new() }
    }

    fn check(&mut self, name: impl Into<String>, ok: bool) {
        self.checks.push((name.into(), ok));
    }

    fn finish(self) {
        let ok = self.checks.iter().all(|c| c.1);
        println!(
            "ACCEPTANCE {}: {} — {}",
            self.id,
            if ok { "PASS" } else { "FAIL" },
            self.description
        );
        for (name, good) in &self.checks {
            println!("    [{}] {name}", if *good { "ok" } else { "FAIL" });
        }
        assert!(ok, "acceptance criterion {} failed", self.id);
    }
}

#[test]
fn criterion_1_truth_calibration() {
    let mut c = Criterion::new("1", "truth calibration and Monte Carlo agreement");
    let spec = ScenarioSpec::default();

    let long = true_control_rmst(&spec, 5000.0).unwrap();
    c.check(format!("truth(5000) = {long:.4} within 472.75 +/- 0.5"), (long - 472.75).abs() <= 0.5);
    let short = true_control_rmst(&spec, 546.0).unwrap();
    c.check(format!("truth(546) = {short:.4} within 368.60 +/- 0.5"), (short - 368.60).abs() <= 0.5);

    // 100,000 control subjects; truncated mean of no-switch OS vs quadrature.
    let mc_spec = ScenarioSpec {
        rct_size: 100_000,
        allocation: (1, 1_000_000),
        ..ScenarioSpec::default()
    };
    let ds = simulate_rct(&mc_spec, &StreamKey::new(108)).unwrap();
    for (t_star, truth) in [(5000.0, long), (546.0, short)] {
        let mc: f64 = ds.subjects.iter().map(|s| s.os_noswitch.min(t_star)).sum::<f64>()
            / ds.subjects.len() as f64;
        let rel = (mc - truth).abs() / truth;
        c.check(
            format!("monte carlo truncated mean at t*={t_star}: rel err {rel:.5} <= 0.01"),
            rel <= 0.01,
        );
    }
    c.finish();
}

#[test]
fn criterion_2_table_pattern_reproduction() {
    let mut crit = Criterion::new("2", "scenario 1 table patterns at R = 500");
    let config = StudyConfig {
        scenarios: vec![1],
        conditions: vec![Condition::A, Condition::B, Condition::C],
        methods: default_methods(),
        replications: 500,
        base_seed: 20_260_808,
        threads: 0,
        rmst_policy: RmstPolicy::hybrid(),
        recensor: RecensorPolicy::SwitchersOnly,
        format: OutputFormat::Csv,
        out: None,
    };
    let output = run_study(&config).unwrap();
    let cell = |condition: char, method: &str| -> &atse::study::StudyCell {
        output
            .cells
            .iter()
            .find(|c| c.condition == condition && c.method == method)
            .unwrap_or_else(|| panic!("missing cell {condition}/{method}"))
    };

    // Condition A.
    let itt = cell('A', "itt").bias_pct;
    crit.check(format!("A: ITT bias {itt:.2} in [3.5, 6.5]"), (3.5..=6.5).contains(&itt));
    for method in ["tse", "eca", "atse_c1", "atse_c4", "atse_c8"] {
        let bias = cell('A', method).bias_pct;
        crit.check(format!("A: |{method} bias {bias:.2}| <= 1.5"), bias.abs() <= 1.5);
    }
    let se1 = cell('A', "atse_c1").se_pct;
    let se8 = cell('A', "atse_c8").se_pct;
    let se_tse = cell('A', "tse").se_pct;
    crit.check(
        format!("A: SE ordering {se1:.2} <= {se8:.2} <= {se_tse:.2} (0.5 slack)"),
        se1 <= se8 + 0.5 && se8 <= se_tse + 0.5,
    );

    // Condition B.
    let eca_b = cell('B', "eca").bias_pct;
    crit.check(format!("B: ECA bias {eca_b:.2} in [3, 7]"), (3.0..=7.0).contains(&eca_b));
    for method in ["atse_c1", "atse_c4", "atse_c8"] {
        let bias = cell('B', method).bias_pct;
        crit.check(
            format!("B: ECA bias {eca_b:.2} exceeds {method} bias {bias:.2}"),
            eca_b > bias,
        );
    }

    // Condition C.
    let tse_c = cell('C', "tse").bias_pct;
    let atse1_c = cell('C', "atse_c1").bias_pct;
    crit.check(format!("C: TSE bias {tse_c:.2} positive"), tse_c > 0.0);
    crit.check(
        format!("C: TSE bias {tse_c:.2} >= ATSE(c=1) bias {atse1_c:.2}"),
        tse_c >= atse1_c,
    );

    // Oracle sanity across every cell at this replication count, and the
    // contamination direction: ITT sits strictly above Oracle.
    for condition in ['A', 'B', 'C'] {
        let oracle = cell(condition, "oracle").bias_pct;
        crit.check(
            format!("{condition}: |oracle bias| {oracle:.2} <= 1"),
            oracle.abs() <= 1.0,
        );
        let itt_bias = cell(condition, "itt").bias_pct;
        crit.check(
            format!("{condition}: ITT bias {itt_bias:.2} exceeds oracle bias {oracle:.2}"),
            itt_bias > oracle,
        );
    }
    for cell in &output.cells {
        crit.check(
            format!("{}/{}: no failed replicates", cell.condition, cell.method),
            cell.failures == 0,
        );
    }
    crit.finish();
}

#[test]
fn criterion_3_estimator_recovery() {
    let mut crit = Criterion::new("3", "estimator recovery at n = 50,000");
    let covariates = Covariate::defaults();

    let spec = ScenarioSpec { rct_size: 50_000, omega: 1.1, ..ScenarioSpec::default() };
    let rct = simulate_rct(&spec, &StreamKey::new(271_828)).unwrap();
    let tse = tse_adjust(
        &rct,
        &covariates,
        RecensorPolicy::SwitchersOnly,
        RmstPolicy::hybrid(),
        5000.0,
    )
    .unwrap();
    let mu = tse.mu_hat.unwrap();
    let mu_se = tse.mu_se.unwrap();
    let target = 1.1f64.ln();
    crit.check(
        format!("TSE mu_hat {mu:.4} within 3 SE ({mu_se:.4}) of log 1.1 = {target:.4}"),
        (mu - target).abs() <= 3.0 * mu_se,
    );

    // Distribution-matched external data: same covariate and unmeasured
    // factor distributions as the RCT, no switching impact difference.
    let matched_spec = ScenarioSpec {
        external_size: 50_000,
        external_badprog_prob: spec.rct_badprog_prob,
        ..spec.clone()
    };
    let external = simulate_external(&matched_spec, &StreamKey::new(314_159)).unwrap();
    let atse = atse_adjust(
        &rct,
        &external,
        &covariates,
        1.0,
        RecensorPolicy::SwitchersOnly,
        RmstPolicy::hybrid(),
        5000.0,
    )
    .unwrap();
    let rho = atse.rho_hat.unwrap();
    let rho_se = atse.rho_se.unwrap();
    crit.check(
        format!("ATSE rho_hat {rho:.4} within 3 SE ({rho_se:.4}) of 0"),
        rho.abs() <= 3.0 * rho_se,
    );
    let w = atse.external_weight.unwrap();
    crit.check(format!("ATSE external weight {w:.4} >= 0.9 at c = 1"), w >= 0.9);
    crit.finish();
}

#[test]
fn criterion_4_degeneration_identities() {
    let mut crit = Criterion::new("4", "degeneration identities");
    let covariates = Covariate::defaults();
    let policy = RecensorPolicy::SwitchersOnly;
    let rmst_policy = RmstPolicy::hybrid();

    // ATSE with an empty external dataset equals TSE exactly.
    let spec = ScenarioSpec::default();
    let key = StreamKey::new(7);
    let rct = simulate_rct(&spec, &key).unwrap();
    let empty = TrialDataset::empty(Source::External, spec.enddate);
    let tse = tse_adjust(&rct, &covariates, policy, rmst_policy, 5000.0).unwrap();
    let atse = atse_adjust(&rct, &empty, &covariates, 4.0, policy, rmst_policy, 5000.0).unwrap();
    crit.check(
        "empty external: mu_hat identical".to_string(),
        tse.mu_hat == atse.mu_hat,
    );
    crit.check(
        "empty external: adjusted rows identical".to_string(),
        tse.adjusted == atse.adjusted,
    );
    crit.check(
        "empty external: control RMST identical".to_string(),
        tse.control_rmst == atse.control_rmst,
    );

    // c = 1e6 with non-trivial dissimilarity matches TSE's mu_hat to 1e-6.
    let spec_b = ScenarioSpec { condition: Condition::B, ..ScenarioSpec::default() };
    let key_b = StreamKey::new(0);
    let rct_b = simulate_rct(&spec_b, &key_b).unwrap();
    let external_b = simulate_external(&spec_b, &key_b).unwrap();
    let tse_b = tse_adjust(&rct_b, &covariates, policy, rmst_policy, 5000.0).unwrap();
    let atse_b =
        atse_adjust(&rct_b, &external_b, &covariates, 1e6, policy, rmst_policy, 5000.0).unwrap();
    let rho = atse_b.rho_hat.unwrap();
    crit.check(format!("fixture dissimilarity |rho| {rho:.4} >= 0.01"), rho.abs() >= 0.01);
    let diff = (tse_b.mu_hat.unwrap() - atse_b.mu_hat.unwrap()).abs();
    crit.check(format!("c = 1e6: |mu_tse - mu_atse| = {diff:.2e} <= 1e-6"), diff <= 1e-6);

    // ITT equals Oracle when switching has no impact.
    let null_spec = ScenarioSpec { omega: 1.0, ..ScenarioSpec::default() };
    let rct_null = simulate_rct(&null_spec, &StreamKey::new(9)).unwrap();
    let itt = itt_estimate(&rct_null, rmst_policy, 5000.0).unwrap();
    let oracle = oracle_estimate(&rct_null, rmst_policy, 5000.0).unwrap();
    crit.check(
        "omega = 1: ITT control RMST equals Oracle exactly".to_string(),
        itt.control_rmst == oracle.control_rmst,
    );
    crit.finish();
}

fn gradient_fixture(n: usize, seed: u64) -> Vec<DesignRow> {
    let mut rng = StreamKey::new(seed).rng();
    (0..n)
        .map(|_| {
            let x1: f64 = rng.random::<f64>() * 2.0 - 1.0;
            let x2: f64 = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
            let u: f64 = rng.random::<f64>();
            let t = 80.0 * (1.0 + 0.4 * x1) * (-u.ln()).max(1e-6);
            let event = rng.random::<f64>() >= 0.3;
            DesignRow::survival(t, event, vec![x1, x2])
                .with_weight(0.5 + 2.0 * rng.random::<f64>())
        })
        .collect()
}

#[test]
fn criterion_5_numerical_kernel_suite() {
    let mut crit = Criterion::new("5", "numerical kernel suite");

    // Analytic AFT gradient vs central finite differences on 50 fixtures.
    let mut worst_rel = 0.0f64;
    for seed in 0..50u64 {
        let rows = gradient_fixture(35, seed);
        let mut rng = StreamKey::new(seed ^ 0x5eed).rng();
        let theta = vec![
            4.0 + rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
            0.4 * (rng.random::<f64>() - 0.5),
        ];
        let (_, analytic) = aft_log_likelihood(&rows, &theta).unwrap();
        for j in 0..theta.len() {
            let step = 1e-6;
            let mut plus = theta.clone();
            plus[j] += step;
            let mut minus = theta.clone();
            minus[j] -= step;
            let (vp, _) = aft_log_likelihood(&rows, &plus).unwrap();
            let (vm, _) = aft_log_likelihood(&rows, &minus).unwrap();
            let fd = (vp - vm) / (2.0 * step);
            worst_rel = worst_rel.max((analytic[j] - fd).abs() / fd.abs().max(1e-8));
        }
    }
    crit.check(format!("gradient check: worst relative error {worst_rel:.2e} <= 1e-4"), worst_rel <= 1e-4);

    // Weighted fit equals replicated-row fit to 1e-8.
    let base = gradient_fixture(60, 1234);
    let weighted: Vec<DesignRow> = base
        .iter()
        .enumerate()
        .map(|(i, r)| {
            DesignRow::survival(r.response, r.event, r.covariates.clone())
                .with_weight((1 + i % 3) as f64)
        })
        .collect();
    let mut replicated = Vec::new();
    for (i, r) in base.iter().enumerate() {
        for _ in 0..(1 + i % 3) {
            replicated.push(DesignRow::survival(r.response, r.event, r.covariates.clone()));
        }
    }
    let fw = fit_weibull_aft(&weighted).unwrap();
    let fr = fit_weibull_aft(&replicated).unwrap();
    let coef_diff = fw
        .coefficients
        .iter()
        .zip(&fr.coefficients)
        .map(|(a, b)| (a - b).abs())
        .fold((fw.intercept - fr.intercept).abs().max((fw.scale - fr.scale).abs()), f64::max);
    crit.check(format!("weighted = replicated fit: max diff {coef_diff:.2e} <= 1e-8"), coef_diff <= 1e-8);

    // Exponential special case: 50,000 uncensored draws with mean 100.
    let mut rng = StreamKey::new(17).rng();
    let rows: Vec<DesignRow> = (0..50_000)
        .map(|_| {
            let u: f64 = rng.random::<f64>();
            DesignRow::survival((-100.0 * (1.0 - u).ln()).max(1e-9), true, vec![])
        })
        .collect();
    let fit = fit_weibull_aft(&rows).unwrap();
    crit.check(
        format!(
            "exponential recovery: intercept {:.4} within 3 SE of log 100 = {:.4}",
            fit.intercept,
            100f64.ln()
        ),
        (fit.intercept - 100f64.ln()).abs() <= 3.0 * fit.intercept_se(),
    );
    crit.check(
        format!("exponential recovery: scale {:.4} within 3 SE of 1", fit.scale),
        (fit.scale - 1.0).abs() <= 3.0 * fit.scale_se(),
    );

    // KM RMST equals the truncated-mean oracle on uncensored data.
    let mut worst = 0.0f64;
    let mut rng = StreamKey::new(4321).rng();
    for _ in 0..200 {
        let n = 1 + rng.random_range(0..60);
        let times: Vec<f64> = (0..n).map(|_| 0.5 + 600.0 * rng.random::<f64>()).collect();
        let t_star = 1.0 + 700.0 * rng.random::<f64>();
        let obs: Vec<SurvivalObservation> =
            times.iter().map(|&t| SurvivalObservation::new(t, true)).collect();
        let curve = km_estimate(&obs).unwrap();
        let km = rmst(&curve, t_star, RmstPolicy::km_extend(), None).unwrap();
        let oracle = truncated_mean(&times, t_star).unwrap();
        worst = worst.max((km - oracle).abs() / oracle.abs().max(1e-12));
    }
    crit.check(format!("KM/RMST vs truncated mean: worst rel err {worst:.2e} <= 1e-9"), worst <= 1e-9);
    crit.finish();
}

#[test]
fn criterion_6_bootstrap_coverage() {
    let mut crit = Criterion::new("6", "bootstrap coverage of the oracle control RMST");
    let spec = ScenarioSpec::preset(1).unwrap();
    let truth = true_control_rmst(&spec, spec.enddate).unwrap();
    let outer = 200;
    let mut covered = 0;
    for replication in 0..outer {
        let key = StreamKey::new(606_060).derive(&[replication]);
        let rct = simulate_rct(&spec, &key).unwrap();
        let ci = bootstrap_ci(
            &rct,
            None,
            |ds, _| oracle_estimate(ds, RmstPolicy::hybrid(), spec.enddate),
            |r| r.control_rmst,
            &BootstrapSpec { replicates: 500, level: 0.95, stratified: true, seed: replication },
        )
        .unwrap();
        if ci.lower <= truth && truth <= ci.upper {
            covered += 1;
        }
    }
    let rate = 100.0 * covered as f64 / outer as f64;
    crit.check(
        format!("coverage {covered}/{outer} = {rate:.1}% within 95% +/- 4 points"),
        (182..=198).contains(&covered),
    );
    crit.finish();
}

#[test]
fn criterion_7_study_determinism() {
    let mut crit = Criterion::new("7", "study output determinism across seeds and threads");
    let config = |threads: usize| StudyConfig {
        scenarios: vec![1],
        conditions: vec![Condition::A, Condition::B],
        methods: default_methods(),
        replications: 12,
        base_seed: 99,
        threads,
        rmst_policy: RmstPolicy::hybrid(),
        recensor: RecensorPolicy::SwitchersOnly,
        format: OutputFormat::Csv,
        out: None,
    };
    let single = run_study(&config(1)).unwrap();
    let pooled = run_study(&config(8)).unwrap();
    let again = run_study(&config(8)).unwrap();

    for format in [OutputFormat::Csv, OutputFormat::Json, OutputFormat::Md] {
        crit.check(
            format!("{} identical for thread budgets 1 vs 8", format.name()),
            single.render(format) == pooled.render(format),
        );
        crit.check(
            format!("{} identical across repeated runs", format.name()),
            pooled.render(format) == again.render(format),
        );
    }
    crit.check(
        "replicate CSV identical for thread budgets 1 vs 8".to_string(),
        single.render_replicates_csv() == pooled.render_replicates_csv(),
    );
    crit.finish();
}
