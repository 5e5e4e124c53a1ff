use std::path::Path;
use std::process::{Command, Output};

use flushlab_cli::{parse_str, Kind, Scenario};

fn flushlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flushlab"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scenario_file(dir: &Path, text: &str) -> String {
    let p = dir.join("scenario.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn minimal_file_gets_documented_defaults() {
    let s = parse_str("[scaling]\neps = 0.05\n").unwrap();
    assert_eq!(s.scaling.eps, 0.05);
    assert_eq!(s.scaling.t_final, 3.0);
    assert_eq!(s.scaling.eta, 1e-3);
    assert_eq!(s.scaling.k, 2);
    assert_eq!((s.grid.nx, s.grid.ny), (256, 128));
    assert_eq!(s.datum.width, 0.12);
    assert_eq!(s.decay.ms, vec![0, 1, 2, 3]);
    assert_eq!(s.ablate.eps, vec![0.2, 0.1, 0.05]);
    assert_eq!(s.run, Scenario::default().run);
}

#[test]
fn unknown_key_is_named() {
    let e = parse_str("[scaling]\nepsilonn = 0.1\n").unwrap_err();
    assert!(e.message.contains("epsilonn"), "{e}");
    assert!(e.message.contains("line 2, column 1"), "{e}");
}

#[test]
fn eps_out_of_range_is_rejected() {
    let e = parse_str("[scaling]\neps = 1.5\n").unwrap_err();
    assert_eq!(e.field.as_deref(), Some("scaling"));
    assert!(e.message.contains("1.5") && e.message.contains("(0, 1)"), "{e}");
}

#[test]
fn syntax_error_reports_position() {
    let e = parse_str("[grid]\nnx = = 3\n").unwrap_err();
    assert!(e.message.starts_with("line 2, column"), "{e}");
}

#[test]
fn resolved_scenario_round_trips() {
    let s = parse_str("kind = \"ablation\"\n[ablate]\neps = [0.3, 0.2]\n").unwrap();
    assert_eq!(s.kind, Some(Kind::Ablation));
    let echoed = toml::to_string(&s).unwrap();
    assert_eq!(parse_str(&echoed).unwrap(), s);
}

#[test]
fn malformed_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario_file(dir.path(), "[scaling\neps = 0.1\n");
    let o = flushlab(&["decay", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn unknown_key_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario_file(dir.path(), "[scaling]\nepsilonn = 0.1\n");
    let o = flushlab(&["flush", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epsilonn"), "{}", stderr(&o));
}

#[test]
fn kind_mismatch_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario_file(dir.path(), "kind = \"flush-sim\"\n");
    let o = flushlab(&["decay", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kind"), "{}", stderr(&o));
}

#[test]
fn missing_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = flushlab(&["scale", "--config", "nope.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

const SMALL_DECAY: &str = "\
[decay]
ms = [0, 1]
moment_checks = 2
window = [10.0, 100.0]

[run.profile]
early_points = 24
per_decade = 8
t_max_factor = 200.0
";

#[test]
fn decay_writes_artifacts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario_file(dir.path(), SMALL_DECAY);
    let mut tables = Vec::new();
    for (out, workers) in [("a", "1"), ("b", "2")] {
        let o = flushlab(
            &["decay", "--config", &cfg, "--out", out, "--workers", workers, "--seed", "7"],
            dir.path(),
        );
        let code = o.status.code().unwrap();
        assert!(code == 0 || code == 1, "{}", stderr(&o));
        let out = dir.path().join(out);
        for f in ["decay.csv", "moments.csv", "profile_m0.csv", "base_flow_m1.csv", "summary.txt"] {
            assert!(out.join(f).exists(), "{f}");
        }
        let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
        assert!(summary.starts_with("check,value,criterion,pass"));
        assert_eq!(code == 0, !summary.contains(",false"));
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["seed"], 7);
        assert_eq!(manifest["scenario"]["scaling"]["eps"], 0.1);
        assert_eq!(manifest["scenario"]["run"]["profile"]["z_order"], 16);
        tables.push(
            ["decay.csv", "moments.csv", "summary.csv"]
                .map(|f| std::fs::read(out.join(f)).unwrap()),
        );
    }
    assert_eq!(tables[0], tables[1]);
}
