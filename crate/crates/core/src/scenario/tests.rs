use super::*;
use crate::features::{BuiltEnvVector, ConfounderVector};
use proptest::prelude::*;

fn table(ybar: f64, effects: &[(&str, f64)]) -> EffectTable {
    EffectTable::new(ybar, effects.iter().map(|(k, v)| (k.to_string(), *v)).collect())
}

fn alloc(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn profile(id: &str, rail: Option<f64>, ring: bool) -> NeighborhoodProfile {
    NeighborhoodProfile {
        neighborhood_id: id.into(),
        outcome_y: 2.0,
        n_households_sampled: 20,
        low_support: false,
        confounders: ConfounderVector::from_array([0.0; 9]),
        built_env_raw: BuiltEnvVector::from_array([0.0; 8]),
        treatment: [0.0; 8],
        centroid: (52.5, 13.4),
        inside_or_on_ringbahn: ring,
        rail_walk_min: rail,
    }
}

#[test]
fn hand_example_minus_25_percent() {
    let t = table(2.0, &[("a", -0.5), ("b", 0.5)]);
    let r = evaluate_scenario(&Scenario::new("s", alloc(&[("a", 100)])), &t).unwrap();
    assert_eq!(r.induced_mean_emissions, 1.5);
    assert_eq!(r.relative_to_average, -0.25);
    let r = evaluate_scenario(&Scenario::new("s", alloc(&[("a", 7), ("b", 7)])), &t).unwrap();
    assert_eq!(r.relative_to_average, 0.0);
}

#[test]
fn remainder_goes_to_lowest_effect_first() {
    let t = table(2.0, &[("a", 0.3), ("b", -0.1), ("c", 0.0)]);
    let s = even_split("x", &["a", "b", "c"], 10, &t).unwrap();
    assert_eq!(s.allocations, alloc(&[("a", 3), ("b", 4), ("c", 3)]));
    let ids: Vec<String> = (0..20).map(|i| format!("n{i:02}")).collect();
    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let t = EffectTable::new(1.0, ids.iter().map(|i| (i.clone(), 0.0)).collect());
    let s = even_split("x", &refs, 64_000, &t).unwrap();
    assert!(s.allocations.values().all(|&u| u == 3_200));
}

#[test]
fn ties_break_by_id() {
    let t = table(1.0, &[("b", 0.0), ("a", 0.0)]);
    let s = even_split("x", &["b", "a"], 3, &t).unwrap();
    assert_eq!(s.allocations, alloc(&[("a", 2), ("b", 1)]));
}

#[test]
fn errors() {
    let t = table(2.0, &[("a", -0.5)]);
    let s = Scenario::new("s", alloc(&[("a", 1), ("zz", 2)]));
    assert_eq!(
        evaluate_scenario(&s, &t),
        Err(ScenarioError::UnknownNeighborhood(vec!["zz".into()]))
    );
    assert_eq!(
        evaluate_scenario(&Scenario::new("s", alloc(&[("a", 0)])), &t),
        Err(ScenarioError::NoUnits("s".into()))
    );
    assert_eq!(even_split("e", &[], 5, &t), Err(ScenarioError::EmptyTargetSet("e".into())));
    assert_eq!(
        optimize_allocation(&t, 5, 2),
        Err(ScenarioError::TooFewNeighborhoods { n: 1, k: 2 })
    );
}

#[test]
fn optimum_with_k_equal_n_is_uniform() {
    let t = table(2.0, &[("a", 0.4), ("b", -0.2), ("c", 0.1), ("d", 0.0)]);
    let s = optimize_allocation(&t, 400, 4).unwrap();
    assert!(s.allocations.values().all(|&u| u == 100));
}

#[test]
fn no_station_within_walk_limit_is_empty_target_set() {
    let profiles: Vec<_> = (0..3).map(|i| profile(&format!("n{i}"), Some(12.0), true)).collect();
    let t = table(2.0, &[("n0", 0.1), ("n1", 0.2), ("n2", 0.3)]);
    let planned = Scenario::new("Planned", alloc(&[("n0", 10)]));
    let params = PresetParams {
        optimum_k: 2,
        ..PresetParams::default()
    };
    assert_eq!(
        preset_scenarios(&profiles, &t, &planned, &params),
        Err(ScenarioError::EmptyTargetSet("TOD_rail".into()))
    );
}

#[test]
fn presets_select_targets_and_conserve_units() {
    let profiles = vec![
        profile("n0", Some(3.0), true),
        profile("n1", Some(6.99), false),
        profile("n2", Some(7.0), true),
        profile("n3", None, false),
    ];
    let t = table(2.0, &[("n0", 0.2), ("n1", -0.4), ("n2", 0.1), ("n3", -0.3)]);
    let planned = Scenario::new("Planned", alloc(&[("n0", 5), ("n2", 6)]));
    let params = PresetParams {
        optimum_k: 2,
        ..PresetParams::default()
    };
    let p = preset_scenarios(&profiles, &t, &planned, &params).unwrap();
    let names: Vec<&str> = p.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["Planned", "TOD_rail", "Ringbahn", "Optimum"]);
    assert_eq!(p[1].allocations, alloc(&[("n0", 5), ("n1", 6)]));
    assert_eq!(p[2].allocations, alloc(&[("n0", 5), ("n2", 6)]));
    assert_eq!(p[3].allocations, alloc(&[("n1", 6), ("n3", 5)]));
    for s in &p {
        assert_eq!(s.total_units(), 11);
    }
    let report = evaluate_all(&p, &t).unwrap();
    let optimum = report.get("Optimum").unwrap().induced_mean_emissions;
    assert!(report.scenarios.iter().all(|s| optimum <= s.induced_mean_emissions));
}

#[test]
fn scenario_file_round_trip_and_run() {
    let doc = r#"{"scenarios":[{"name":"Planned","allocations":{"n0":4,"n3":4}},
        {"name":"Extra","allocations":{"n2":1}}]}"#;
    let file = ScenarioFile::from_json(doc).unwrap();
    assert_eq!(file.schema_version, SCENARIO_SCHEMA_VERSION);
    let profiles = vec![profile("n0", Some(1.0), true), profile("n2", Some(2.0), false), profile("n3", None, true)];
    let t = table(2.0, &[("n0", 0.2), ("n2", 0.1), ("n3", -0.3)]);
    let params = PresetParams {
        optimum_k: 1,
        ..PresetParams::default()
    };
    let report = run_scenarios(&file, &profiles, &t, &params).unwrap();
    let names: Vec<&str> = report.scenarios.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["Planned", "TOD_rail", "Ringbahn", "Optimum", "Extra"]);
    assert!((report.get("Optimum").unwrap().relative_to_average + 0.15).abs() < 1e-12);
    let units_only = ScenarioFile::from_json(r#"{"units": 9}"#).unwrap();
    let report = run_scenarios(&units_only, &profiles, &t, &params).unwrap();
    assert_eq!(report.scenarios.len(), 3);
    let none = ScenarioFile::from_json("{}").unwrap();
    assert_eq!(run_scenarios(&none, &profiles, &t, &params), Err(ScenarioError::NoPlannedUnits));
    assert!(matches!(ScenarioFile::from_json("{\"units\": -3}"), Err(ScenarioError::Document(_))));
}

#[test]
fn geojson_carries_effects_and_units() {
    let t = table(2.0, &[("a", -0.5), ("b", 0.5)]);
    let report = evaluate_all(&[Scenario::new("S", alloc(&[("a", 3)]))], &t).unwrap();
    let relative: BTreeMap<String, f64> = [("a".to_string(), -0.25)].into();
    let geom = json!({"type": "Point", "coordinates": [13.4, 52.5]});
    let g = to_geojson([("a", Some(&geom)), ("b", None)], &t, &relative, &report);
    let f = &g["features"];
    assert_eq!(f[0]["properties"]["units_S"], 3);
    assert_eq!(f[0]["properties"]["relative_effect"], -0.25);
    assert_eq!(f[1]["properties"]["units_S"], 0);
    assert_eq!(f[1]["properties"]["total_effect"], 0.5);
    assert!(f[1]["geometry"].is_null());
}

/// Induced mean of an even split with the lowest-first remainder rule,
/// computed without the library's helpers.
fn even_split_mean(ybar: f64, effects: &mut [f64], units: u64) -> f64 {
    effects.sort_by(f64::total_cmp);
    let k = effects.len() as u64;
    let mut sum = 0.0;
    for (i, e) in effects.iter().enumerate() {
        let u = units / k + u64::from((i as u64) < units % k);
        sum += u as f64 * (ybar + e);
    }
    sum / units as f64
}

proptest! {
    #[test]
    fn optimum_matches_exhaustive_subset_search(
        effects in prop::collection::vec(-1.0f64..1.0, 8),
        units in 3u64..5000,
    ) {
        let ids: Vec<String> = (0..8).map(|i| format!("n{i}")).collect();
        let t = EffectTable::new(2.0, ids.iter().cloned().zip(effects.iter().copied()).collect());
        let mut best = f64::INFINITY;
        for mask in 0u32..256 {
            if mask.count_ones() != 3 {
                continue;
            }
            let mut sub: Vec<f64> = (0..8).filter(|i| mask & (1 << i) != 0).map(|i| effects[i]).collect();
            best = best.min(even_split_mean(2.0, &mut sub, units));
        }
        let opt = evaluate_scenario(&optimize_allocation(&t, units, 3).unwrap(), &t).unwrap();
        prop_assert!((opt.induced_mean_emissions - best).abs() < 1e-12);
        prop_assert!(opt.induced_mean_emissions <= best + 1e-12);
    }

    #[test]
    fn evaluation_is_linear_in_allocations(
        effects in prop::collection::vec(-1.0f64..1.0, 5),
        a in prop::collection::vec(0u64..100, 5),
        b in prop::collection::vec(0u64..100, 5),
    ) {
        prop_assume!(a.iter().sum::<u64>() > 0 && b.iter().sum::<u64>() > 0);
        let ids: Vec<String> = (0..5).map(|i| format!("n{i}")).collect();
        let t = EffectTable::new(1.7, ids.iter().cloned().zip(effects).collect());
        let mk = |v: &[u64]| Scenario::new("s", ids.iter().cloned().zip(v.iter().copied()).collect());
        let sum: Vec<u64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let (ra, rb, rs) = (
            evaluate_scenario(&mk(&a), &t).unwrap(),
            evaluate_scenario(&mk(&b), &t).unwrap(),
            evaluate_scenario(&mk(&sum), &t).unwrap(),
        );
        let (ua, ub) = (ra.total_units as f64, rb.total_units as f64);
        let want = (ua * ra.induced_mean_emissions + ub * rb.induced_mean_emissions) / (ua + ub);
        prop_assert!((rs.induced_mean_emissions - want).abs() < 1e-12);
        let conserved: u64 = rs.contributions.iter().map(|c| c.units).sum();
        prop_assert_eq!(conserved, rs.total_units);
    }

    #[test]
    fn even_split_conserves_units(
        effects in prop::collection::vec(-1.0f64..1.0, 1..30),
        units in 0u64..100_000,
    ) {
        let ids: Vec<String> = (0..effects.len()).map(|i| format!("n{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let t = EffectTable::new(1.0, ids.iter().cloned().zip(effects).collect());
        let s = even_split("x", &refs, units, &t).unwrap();
        prop_assert_eq!(s.total_units(), units);
        let max = *s.allocations.values().max().unwrap();
        let min = *s.allocations.values().min().unwrap();
        prop_assert!(max - min <= 1);
    }
}
