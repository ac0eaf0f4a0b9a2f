//! The shipped scenario config files must parse to the built-in presets.

use std::fs;
use std::path::PathBuf;

use atse::config::scenario_from_config;
use atse::sim::ScenarioSpec;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_files_match_built_in_presets() {
    for scenario in 1..=8u8 {
        let path = configs_dir().join(format!("scenario{scenario}.cfg"));
        let text = fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let parsed = scenario_from_config(&text).unwrap();
        let preset = ScenarioSpec::preset(scenario).unwrap();
        assert_eq!(parsed, preset, "scenario {scenario} file drifted from the preset");
    }
}

#[test]
fn study_demo_config_parses() {
    let path = configs_dir().join("study_demo.cfg");
    let text = fs::read_to_string(&path).unwrap();
    let config = atse::config::study_from_config(&text).unwrap();
    assert_eq!(config.scenarios, vec![1]);
    assert_eq!(config.methods.len(), 7);
    assert_eq!(config.replications, 200);
}
