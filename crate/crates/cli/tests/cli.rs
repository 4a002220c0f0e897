use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn optproxy(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optproxy"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("OPTPROXY_OUT")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> PathBuf {
    let o = optproxy(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(String::from_utf8(o.stdout).unwrap().trim())
}

fn error_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|_| panic!("stderr is not JSON: {}", String::from_utf8_lossy(&o.stderr)))
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn gen_is_deterministic_apart_from_meta() {
    let tmp = TempDir::new().unwrap();
    let args = ["gen", "--network", "case3", "--n", "30", "--seed", "4", "--problem", "dcopf"];
    let a = ok(&tmp.path().join("a"), &args);
    let b = ok(&tmp.path().join("b"), &args);
    assert_eq!(a.file_name(), b.file_name());
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        if x.ends_with("meta.json") {
            continue;
        }
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("meta.json")).unwrap()).unwrap();
    assert!(meta["timings_seconds"]["generate"].is_number());
    assert_eq!(meta["command"], "gen");
}

#[test]
fn bad_config_exits_one_with_json() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "network = \"case3\"\nno_such_key = 1\n").unwrap();
    let o = optproxy(tmp.path(), &["--config", cfg.to_str().unwrap(), "gen"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["error"], "config");

    let o = optproxy(tmp.path(), &["gen", "--network", "nosuch"]);
    assert_eq!(o.status.code(), Some(1));
    let o = optproxy(tmp.path(), &["train", "--network", "case3", "--model", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["exit_code"], 1);
}

#[test]
fn config_file_values_are_used() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "network = \"case3\"\n[dataset]\nn_instances = 12\nproblem = \"dcopf\"\nlabels = false\n").unwrap();
    let dir = ok(tmp.path(), &["--config", cfg.to_str().unwrap(), "--run", "cfg", "gen"]);
    assert!(dir.ends_with("cfg"));
    let s: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["sampled"], 12);
    assert_eq!(s["labeled"], false);
}

#[test]
fn replayed_oracle_has_zero_gap() {
    let tmp = TempDir::new().unwrap();
    let g = ok(tmp.path(), &["gen", "--network", "case3", "--n", "60", "--problem", "dcopf"]);
    let ds = g.join("dataset");
    let ds = ds.to_str().unwrap();
    let e = ok(tmp.path(), &["eval", "--network", "case3", "--dataset", ds, "--replay"]);
    let rows = csv_rows(&e.join("eval.csv"));
    let col = |name: &str| rows[0].iter().position(|h| h == name).unwrap();
    let gap: f64 = rows[1][col("max_gap")].parse().unwrap();
    let feas: f64 = rows[1][col("feasibility_rate")].parse().unwrap();
    assert!(gap.abs() < 1e-9 && feas == 1.0, "{rows:?}");

    let d = ok(tmp.path(), &["eval", "--network", "case3", "--dataset", ds, "--replay", "--dual"]);
    let rows = csv_rows(&d.join("dual_gap.csv"));
    let max: f64 = rows[1][rows[0].iter().position(|h| h == "max").unwrap()].parse().unwrap();
    assert!(max.abs() < 1e-6, "{rows:?}");
}

#[test]
fn dataset_for_another_grid_is_a_schema_error() {
    let tmp = TempDir::new().unwrap();
    let g = ok(tmp.path(), &["gen", "--network", "case3", "--n", "10", "--problem", "dcopf"]);
    let ds = g.join("dataset");
    let o = optproxy(
        tmp.path(),
        &["eval", "--network", "case3", "--line-limit", "l1_3=1", "--dataset", ds.to_str().unwrap(), "--replay"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "schema");
}

#[test]
fn risk_curves_have_one_row_per_step() {
    let tmp = TempDir::new().unwrap();
    let r = ok(tmp.path(), &["risk", "--network", "case30", "--scenarios", "2", "--horizon", "5"]);
    assert_eq!(csv_rows(&r.join("risk.csv")).len(), 6);
    let rep = ok(tmp.path(), &["report", r.to_str().unwrap()]);
    assert_eq!(csv_rows(&rep.join("risk_curves.csv")).len(), 6);
    assert!(std::fs::read_to_string(rep.join("risk_curves.svg")).unwrap().contains("<polyline"));
}

#[test]
fn report_rejects_missing_columns() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("ra"), tmp.path().join("rb"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    std::fs::write(a.join("eval.csv"), "architecture,mean_gap\ne2elr,0.01\n").unwrap();
    std::fs::write(b.join("eval.csv"), "architecture\nnaive\n").unwrap();
    let o = optproxy(&tmp.path().join("out"), &["report", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = error_json(&o);
    assert_eq!(err["error"], "schema");
    assert!(err["message"].as_str().unwrap().contains("mean_gap"));
}

#[test]
fn train_then_eval_round_trips_the_model() {
    let tmp = TempDir::new().unwrap();
    let g = ok(tmp.path(), &["gen", "--network", "case30", "--n", "60", "--problem", "ed", "--seed", "2"]);
    let ds = g.join("dataset");
    let ds = ds.to_str().unwrap();
    let t = ok(tmp.path(), &["train", "--network", "case30", "--dataset", ds, "--model", "e2elr", "--epochs", "3"]);
    assert!(t.join("history.csv").is_file());
    let model = t.join("model.json");
    let e = ok(tmp.path(), &["eval", "--network", "case30", "--dataset", ds, "--model-file", model.to_str().unwrap()]);
    assert!(t.join("eval.csv").is_file());
    assert_eq!(std::fs::read(t.join("eval.csv")).unwrap(), std::fs::read(e.join("eval.csv")).unwrap());
    let o = optproxy(
        tmp.path(),
        &["eval", "--network", "case30", "--dataset", ds, "--model-file", model.to_str().unwrap(), "--dual"],
    );
    assert_eq!(o.status.code(), Some(1));
}
