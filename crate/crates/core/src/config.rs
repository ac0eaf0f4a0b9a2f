//! Flat key-value configuration files.
//!
//! One `key = value` pair per line; `#` starts a comment; unknown and
//! duplicate keys are rejected. Scenario files address every data-generating
//! field; study files address the full study grid.

use std::path::PathBuf;

use crate::adjust::{Method, RecensorPolicy};
use crate::error::{Error, Result};
use crate::sim::{Condition, ScenarioSpec, SwitchLevel};
use crate::study::{OutputFormat, StudyConfig};
use crate::survival::{RmstMode, RmstPolicy, TailBehavior};

fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {line_no}: expected `key = value`, got `{line}`"))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if pairs.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!("line {line_no}: duplicate key `{key}`")));
        }
        pairs.push((key, value));
    }
    Ok(pairs)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Config(format!("`{key}` has invalid value `{value}`")))
}

fn parse_allocation(value: &str) -> Result<(u32, u32)> {
    let (a, b) = value
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("allocation must look like `2:1`, got `{value}`")))?;
    Ok((parse_num("allocation", a.trim())?, parse_num("allocation", b.trim())?))
}

/// Parse a scenario configuration, starting from the calibrated defaults.
pub fn scenario_from_config(text: &str) -> Result<ScenarioSpec> {
    let mut spec = ScenarioSpec::default();
    for (key, value) in parse_pairs(text)? {
        match key.as_str() {
            "pmix" => spec.pmix = parse_num(&key, &value)?,
            "lambda1" => spec.lambda1 = parse_num(&key, &value)?,
            "lambda2" => spec.lambda2 = parse_num(&key, &value)?,
            "gamma1" => spec.gamma1 = parse_num(&key, &value)?,
            "gamma2" => spec.gamma2 = parse_num(&key, &value)?,
            "delta1" => spec.delta1 = parse_num(&key, &value)?,
            "delta2" => spec.delta2 = parse_num(&key, &value)?,
            "delta3" => spec.delta3 = parse_num(&key, &value)?,
            "omega" => spec.omega = parse_num(&key, &value)?,
            "switching" => spec.switching = SwitchLevel::parse(&value)?,
            "condition" => spec.condition = Condition::parse(&value)?,
            "rct_size" => spec.rct_size = parse_num(&key, &value)?,
            "allocation" => spec.allocation = parse_allocation(&value)?,
            "external_size" => spec.external_size = parse_num(&key, &value)?,
            "rct_badprog_prob" => spec.rct_badprog_prob = parse_num(&key, &value)?,
            "external_badprog_prob" => spec.external_badprog_prob = parse_num(&key, &value)?,
            "visit_interval" => spec.visit_interval = parse_num(&key, &value)?,
            "enddate" => spec.enddate = parse_num(&key, &value)?,
            "time_scale" => spec.time_scale = parse_num(&key, &value)?,
            other => return Err(Error::Config(format!("unknown scenario key `{other}`"))),
        }
    }
    spec.validate()?;
    Ok(spec)
}

pub fn parse_rmst_policy(mode: &str, tail: Option<&str>) -> Result<RmstPolicy> {
    let mode = match mode {
        "km" => RmstMode::KmOnly,
        "weibull" => RmstMode::Weibull,
        "hybrid" => RmstMode::Hybrid,
        other => return Err(Error::Config(format!("unknown rmst mode `{other}`"))),
    };
    let on_short_follow_up = match tail {
        None => TailBehavior::Extend,
        Some("extend") => TailBehavior::Extend,
        Some("error") => TailBehavior::Error,
        Some(other) => return Err(Error::Config(format!("unknown rmst tail behavior `{other}`"))),
    };
    Ok(RmstPolicy { mode, on_short_follow_up })
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|v| !v.is_empty())
}

/// Parse a study configuration. Method names expand `atse` over the
/// `atse_c` list (default 1, 4, 8).
pub fn study_from_config(text: &str) -> Result<StudyConfig> {
    let mut config = StudyConfig::default();
    let pairs = parse_pairs(text)?;

    let mut atse_c: Vec<f64> = vec![1.0, 4.0, 8.0];
    let mut method_names: Option<Vec<String>> = None;
    let mut rmst_mode: Option<String> = None;
    let mut rmst_tail: Option<String> = None;

    for (key, value) in pairs {
        match key.as_str() {
            "scenarios" => {
                config.scenarios = split_list(&value)
                    .map(|v| parse_num::<u8>("scenarios", v))
                    .collect::<Result<_>>()?;
            }
            "conditions" => {
                config.conditions =
                    split_list(&value).map(Condition::parse).collect::<Result<_>>()?;
            }
            "methods" => {
                method_names = Some(split_list(&value).map(str::to_string).collect());
            }
            "atse_c" => {
                atse_c = split_list(&value)
                    .map(|v| parse_num::<f64>("atse_c", v))
                    .collect::<Result<_>>()?;
            }
            "replications" => config.replications = parse_num(&key, &value)?,
            "seed" => config.base_seed = parse_num(&key, &value)?,
            "threads" => config.threads = parse_num(&key, &value)?,
            "rmst" => rmst_mode = Some(value),
            "rmst_tail" => rmst_tail = Some(value),
            "recensor" => config.recensor = RecensorPolicy::parse(&value)?,
            "format" => config.format = OutputFormat::parse(&value)?,
            "out" => config.out = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown study key `{other}`"))),
        }
    }

    if let Some(mode) = rmst_mode {
        config.rmst_policy = parse_rmst_policy(&mode, rmst_tail.as_deref())?;
    } else if let Some(tail) = rmst_tail {
        config.rmst_policy = parse_rmst_policy("hybrid", Some(&tail))?;
    }

    if let Some(names) = method_names {
        let mut methods = Vec::new();
        for name in names {
            match name.as_str() {
                "oracle" => methods.push(Method::Oracle),
                "itt" => methods.push(Method::Itt),
                "tse" => methods.push(Method::Tse),
                "eca" => methods.push(Method::Eca),
                "atse" => methods.extend(atse_c.iter().map(|&c| Method::Atse { c })),
                other => return Err(Error::Config(format!("unknown method `{other}`"))),
            }
        }
        config.methods = methods;
    } else {
        config.methods = {
            let mut methods = vec![Method::Oracle, Method::Itt, Method::Tse, Method::Eca];
            methods.extend(atse_c.iter().map(|&c| Method::Atse { c }));
            methods
        };
    }

    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_defaults_and_overrides() {
        let spec = scenario_from_config("").unwrap();
        assert_eq!(spec, ScenarioSpec::default());

        let spec = scenario_from_config(
            "# a preset\ndelta1 = -0.5\nswitching = high\nenddate = 546\ncondition = B\n",
        )
        .unwrap();
        assert_eq!(spec.delta1, -0.5);
        assert_eq!(spec.switching, SwitchLevel::High);
        assert_eq!(spec.enddate, 546.0);
        assert_eq!(spec.condition, Condition::B);
    }

    #[test]
    fn every_scenario_key_is_addressable() {
        let text = "pmix = 0.4\nlambda1 = 1.5\nlambda2 = 30\ngamma1 = 2\ngamma2 = 3\n\
                    delta1 = -0.3\ndelta2 = 0.25\ndelta3 = -0.25\nomega = 1.2\n\
                    switching = high\ncondition = C\nrct_size = 400\nallocation = 3:2\n\
                    external_size = 150\nrct_badprog_prob = 0.45\nexternal_badprog_prob = 0.8\n\
                    visit_interval = 14\nenddate = 700\ntime_scale = 900\n";
        let spec = scenario_from_config(text).unwrap();
        assert_eq!(spec.pmix, 0.4);
        assert_eq!(spec.allocation, (3, 2));
        assert_eq!(spec.rct_size, 400);
        assert_eq!(spec.time_scale, 900.0);
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        assert!(matches!(
            scenario_from_config("bogus = 1\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            scenario_from_config("pmix = 0.5\npmix = 0.6\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(scenario_from_config("pmix 0.5\n"), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(scenario_from_config("pmix = 1.5\n").is_err());
        assert!(scenario_from_config("lambda1 = -2\n").is_err());
        assert!(scenario_from_config("omega = 0\n").is_err());
    }

    #[test]
    fn study_config_parses() {
        let text = "scenarios = 1, 5\nconditions = A, C\nmethods = oracle, tse, atse\n\
                    atse_c = 2, 6\nreplications = 12\nseed = 9\nthreads = 2\n\
                    rmst = km\nrmst_tail = extend\nrecensor = all-control\nformat = md\n\
                    out = results.md\n";
        let config = study_from_config(text).unwrap();
        assert_eq!(config.scenarios, vec![1, 5]);
        assert_eq!(config.conditions, vec![Condition::A, Condition::C]);
        assert_eq!(
            config.methods,
            vec![
                Method::Oracle,
                Method::Tse,
                Method::Atse { c: 2.0 },
                Method::Atse { c: 6.0 }
            ]
        );
        assert_eq!(config.replications, 12);
        assert_eq!(config.base_seed, 9);
        assert_eq!(config.threads, 2);
        assert_eq!(config.rmst_policy.mode, RmstMode::KmOnly);
        assert_eq!(config.recensor, RecensorPolicy::AllControl);
        assert_eq!(config.format, OutputFormat::Md);
        assert_eq!(config.out, Some(PathBuf::from("results.md")));
    }

    #[test]
    fn study_defaults_expand_atse_roster() {
        let config = study_from_config("replications = 3\n").unwrap();
        let labels: Vec<String> = config.methods.iter().map(|m| m.label()).collect();
        assert_eq!(
            labels,
            vec!["oracle", "itt", "tse", "eca", "atse_c1", "atse_c4", "atse_c8"]
        );
    }

    #[test]
    fn study_rejects_bad_grid() {
        assert!(study_from_config("scenarios = 9\n").is_err());
        assert!(study_from_config("replications = 0\n").is_err());
        assert!(study_from_config("methods = voodoo\n").is_err());
        assert!(study_from_config("atse_c = -1\nmethods = atse\n").is_err());
    }
}
