use std::collections::BTreeMap;
use std::process::Command;

use causal_transfer::experiment::config::{BarrierSpec, SuiteConfig};
use causal_transfer::experiment::results::{read_results, Metric, ResultRow};
use causal_transfer::experiment::suite::run_suite;
use causal_transfer::scenario::ScenarioKind;

/// The default suite with budgets cut down; row structure does not depend
/// on them.
fn small() -> SuiteConfig {
    let mut cfg = SuiteConfig::default_suite();
    cfg.discovery_episodes = 60;
    cfg.evaluation_episodes = 8;
    cfg
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_causal-transfer"))
}

#[test]
fn default_shape_counts_rows() {
    let out = run_suite(&small(), 1).unwrap();
    let count = |m: Metric| out.rows.iter().filter(|r| r.metric == m).count();
    assert_eq!(count(Metric::Ofpr), 48);
    assert_eq!(count(Metric::DeltaCk), 16);
    assert!(count(Metric::GapClosure) <= 16);
    assert_eq!(out.cells.len(), 16);
    for r in &out.rows {
        assert_eq!(r.seed, 7);
        if r.metric != Metric::GapClosure {
            assert_eq!(r.n, 8);
        }
    }
}

#[test]
fn no_barrier_makes_every_trained_agent_optimal() {
    let mut cfg = small();
    cfg.barriers = vec![BarrierSpec {
        id: "None".into(),
        kind: ScenarioKind::None,
    }];
    let out = run_suite(&cfg, 1).unwrap();
    for r in out.rows.iter().filter(|r| r.metric == Metric::Ofpr) {
        if r.subject == "Rand" {
            assert!(r.mean < 1.0, "{r:?}");
        } else {
            assert_eq!(r.mean, 1.0, "{r:?}");
            assert_eq!(r.failures, 0);
        }
    }
    for r in out.rows.iter().filter(|r| r.metric == Metric::DeltaCk) {
        assert_eq!(r.mean, 0.0);
    }
    assert!(out.models.iter().all(|(_, m)| m.is_empty()));
}

#[test]
fn removing_a_barrier_leaves_other_rows_alone() {
    let cfg = small();
    let full = run_suite(&cfg, 1).unwrap();
    let mut reduced_cfg = cfg.clone();
    reduced_cfg.barriers.retain(|b| b.id != "ReverseU");
    let reduced = run_suite(&reduced_cfg, 1).unwrap();
    let kept: Vec<&ResultRow> = full.rows.iter().filter(|r| r.barrier != "ReverseU").collect();
    let reduced: Vec<&ResultRow> = reduced.rows.iter().collect();
    assert_eq!(kept, reduced);
}

#[test]
fn thread_count_does_not_change_output() {
    let cfg = small();
    let a = run_suite(&cfg, 1).unwrap();
    let b = run_suite(&cfg, 3).unwrap();
    assert_eq!(a.results_csv(), b.results_csv());
    assert_eq!(a.meta, b.meta);
}

#[test]
fn other_master_seed_changes_results() {
    let cfg = small();
    let mut other = cfg.clone();
    other.master_seed = 8;
    assert_ne!(run_suite(&cfg, 1).unwrap().results_csv(), run_suite(&other, 1).unwrap().results_csv());
}

#[test]
fn cli_run_writes_all_artifacts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("suite.toml");
    std::fs::write(&config_path, toml::to_string(&small()).unwrap()).unwrap();

    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let status = bin()
            .args(["run", "--config"])
            .arg(&config_path)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        let mut files = BTreeMap::new();
        for sub in ["", "models", "figures"] {
            for entry in std::fs::read_dir(out.join(sub)).unwrap() {
                let path = entry.unwrap().path();
                if path.is_file() {
                    let rel = path.strip_prefix(&out).unwrap().to_path_buf();
                    files.insert(rel, std::fs::read(&path).unwrap());
                }
            }
        }
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    let names: Vec<String> = outputs[0].keys().map(|p| p.display().to_string()).collect();
    for expected in ["results.csv", "meta.txt", "figures/ofpr_pick.svg", "figures/delta_ck.svg"] {
        assert!(names.iter().any(|n| n == expected), "missing {expected} in {names:?}");
    }
    assert_eq!(names.iter().filter(|n| n.starts_with("models/")).count(), 16);

    let csv = &outputs[0][std::path::Path::new("results.csv")];
    let rows = read_results(csv.as_slice()).unwrap();
    assert_eq!(rows.iter().filter(|r| r.metric == Metric::Ofpr).count(), 48);

    let svg = String::from_utf8(outputs[0][std::path::Path::new("figures/ofpr_pick.svg")].clone()).unwrap();
    assert_eq!(svg.matches(r#"class="series""#).count(), 4);
}

#[test]
fn cli_seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("suite.toml");
    let mut cfg = small();
    cfg.barriers.truncate(1);
    std::fs::write(&config_path, toml::to_string(&cfg).unwrap()).unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--seed", "99", "--jobs", "1", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let rows = read_results(std::fs::File::open(out.join("results.csv")).unwrap()).unwrap();
    assert!(rows.iter().all(|r| r.seed == 99));
}

#[test]
fn cli_plot_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("results.csv");
    let out = run_suite(&small(), 1).unwrap();
    std::fs::write(&csv, out.results_csv()).unwrap();
    let figs = dir.path().join("figs");
    let status = bin().args(["plot", "--csv"]).arg(&csv).arg("--out").arg(&figs).status().unwrap();
    assert!(status.success());
    assert!(figs.join("ofpr_pick.svg").exists() && figs.join("delta_ck.svg").exists());

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "barrier,goal_scenario,subject,metric,mean,std,n,seed,failures\n").unwrap();
    let nothing = dir.path().join("nothing");
    let status = bin().args(["plot", "--csv"]).arg(&empty).arg("--out").arg(&nothing).status().unwrap();
    assert!(!status.success());
    assert!(!nothing.exists());

    let good = dir.path().join("good.toml");
    std::fs::write(&good, toml::to_string(&small()).unwrap()).unwrap();
    assert!(bin().args(["validate", "--config"]).arg(&good).status().unwrap().success());

    let mut broken = small();
    broken.goal_scenarios[0].learner.goal = broken.geometry.wall.anchor;
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, toml::to_string(&broken).unwrap()).unwrap();
    assert!(!bin().args(["validate", "--config"]).arg(&bad).status().unwrap().success());
}
