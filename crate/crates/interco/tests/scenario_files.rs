//! The bundled scenario files must load to exactly the same specs the
//! in-code builders produce, and the file form must round-trip.

use std::path::PathBuf;

use interco::scenario::{load_scenario, write_scenario};
use interco::scenarios::{self, Level};

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

#[test]
fn bundled_files_match_builders() {
    let cases = [
        ("table1.json", Level::Low, Level::Low),
        ("table1_high_demand_var.json", Level::High, Level::Low),
        ("table1_high_fuel_vol.json", Level::Low, Level::High),
        ("table1_high_both.json", Level::High, Level::High),
    ];
    for (file, demand, fuel) in cases {
        let loaded = load_scenario(scenario_path(file)).unwrap();
        let built = scenarios::table1_config(demand, fuel, 4.0);
        assert_eq!(loaded, built, "{file} drifted from the builder");
    }
}

#[test]
fn table1_normalizes_paper_units() {
    let s = load_scenario(scenario_path("table1.json")).unwrap();
    assert_eq!(s.market_a.alpha, 0.56);
    assert_eq!(s.market_b.alpha, 0.89);
    // beta stated per GW in the file, stored per MW.
    assert_eq!(s.market_a.beta, -1e-5);
    assert_eq!(s.market_a.technologies[0].capacity_const, 48_000.0);
    assert_eq!(s.coupling.flow_max, 4_000.0);
}

#[test]
fn save_and_reload_round_trips() {
    let spec = scenarios::table1_config(Level::High, Level::High, 7.5);
    let dir = std::env::temp_dir().join(format!("interco-roundtrip-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("scenario.json");
    write_scenario(&spec, &path).unwrap();
    let reloaded = load_scenario(&path).unwrap();
    assert_eq!(spec, reloaded);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn loader_reports_distinct_error_kinds() {
    // Syntax error -> parse.
    let dir = std::env::temp_dir().join(format!("interco-errs-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad_syntax = dir.join("bad.json");
    std::fs::write(&bad_syntax, "{ not json").unwrap();
    match load_scenario(&bad_syntax) {
        Err(interco::Error::Parse(_)) => {}
        other => panic!("expected parse error, got {other:?}"),
    }

    // Positive lower flow bound -> validation, naming the field.
    let text = std::fs::read_to_string(scenario_path("table1.json")).unwrap();
    let bent = text.replace("\"flow_min\": -4.0", "\"flow_min\": 2.0");
    let bad_coupling = dir.join("coupling.json");
    std::fs::write(&bad_coupling, bent).unwrap();
    match load_scenario(&bad_coupling) {
        Err(interco::Error::Validation { field, .. }) => assert!(field.contains("coupling")),
        other => panic!("expected validation error, got {other:?}"),
    }

    // Non-PSD correlation -> validation naming the matrix.
    let corr = r#""correlation": [
        [1.0, 0.99, 0.99, 0.0, 0.0, 0.0],
        [0.99, 1.0, -0.99, 0.0, 0.0, 0.0],
        [0.99, -0.99, 1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 1.0]],"#;
    let bent = text.replace("\"numerics\": {", &format!("{corr}\n  \"numerics\": {{"));
    let bad_corr = dir.join("corr.json");
    std::fs::write(&bad_corr, bent).unwrap();
    match load_scenario(&bad_corr) {
        Err(interco::Error::Validation { field, .. }) => assert!(field.contains("correlation")),
        other => panic!("expected validation error, got {other:?}"),
    }
    std::fs::remove_dir_all(&dir).ok();
}
