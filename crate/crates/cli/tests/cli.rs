use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ginimon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ginimon"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: TempDir::new().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn write(&self, name: &str, text: &str) -> String {
        fs::write(self.path(name), text).unwrap();
        self.s(name)
    }

    /// Two-group synthetic portfolio with true-frequency predictions.
    fn portfolio(&self, name: &str, n: usize, seed: u64) -> String {
        let spec = self.write(
            &format!("{name}.cfg"),
            &format!("n={n}\nseed={seed}\ngroup=low,0.5,0.05\ngroup=high,0.5,0.15\n"),
        );
        let out = self.s(name);
        let o = ginimon(&["simulate", "--spec", &spec, "--output", &out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    }
}

fn group_claims(path: &Path, group: &str) -> u64 {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap())
        .filter(|rec| &rec[0] == group)
        .map(|rec| rec[2].parse::<u64>().unwrap())
        .sum()
}

#[test]
fn gini_prints_result_json() {
    let ws = Workspace::new();
    let data = ws.portfolio("p.csv", 2000, 1);
    let o = ginimon(&[
        "gini",
        "--input",
        &data,
        "--tie",
        "average-extremes",
        "--weighting",
        "count",
        "--deviance",
    ]);
    assert_eq!(code(&o), 0);
    let j = stdout_json(&o);
    let v = j["value"].as_f64().unwrap();
    assert!(v > 0.0 && v < 1.0);
    assert_eq!(j["tie_policy"], "average_of_extremes");
    assert_eq!(j["weighting"], "count_weighting");
    assert_eq!(j["n"], 2000);
    assert!(j["poisson_deviance_loss"].as_f64().unwrap() > 0.0);
}

#[test]
fn monitor_flags_injected_drift_with_exit_ten() {
    let ws = Workspace::new();
    let holdout = ws.portfolio("holdout.csv", 5000, 3);
    let scenario = ws.write(
        "s.cfg",
        "source_covariate=group\nsource_values=high\ntarget_covariate=group\ntarget_values=low\ntransfer_count=60\nseed=4\n",
    );
    let drifted = ws.s("2024.csv");
    assert_eq!(
        code(&ginimon(&[
            "inject",
            "--scenario",
            &scenario,
            "--input",
            &holdout,
            "--output",
            &drifted
        ])),
        0
    );
    let report = ws.s("report.json");
    let args = [
        "monitor",
        "--old",
        &holdout,
        "--new",
        &drifted,
        "--B",
        "1000",
        "--seed",
        "7",
        "--alpha",
        "0.05",
        "--no-preaggregate",
        "--keep-replicates",
        "--output",
        &report,
    ];
    let o = ginimon(&args);
    assert_eq!(code(&o), 10, "{}", String::from_utf8_lossy(&o.stderr));
    let j: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(j["reject"], true);
    assert_eq!(j["B"], 1000);
    assert!(j["z"].as_f64().unwrap() < -1.96);

    // Same holdout on both sides: no drift.
    let o = ginimon(&[
        "monitor",
        "--old",
        &holdout,
        "--new",
        &holdout,
        "--B",
        "200",
        "--seed",
        "7",
        "--alpha",
        "0.05",
        "--no-preaggregate",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["reject"], false);

    // Report reads the JSON back without recomputing.
    let hist = ws.s("hist.csv");
    let o = ginimon(&[
        "report",
        "--input",
        &report,
        "--histogram",
        &hist,
        "--bins",
        "12",
    ]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().ends_with(",true"));
    let h = fs::read_to_string(&hist).unwrap();
    assert_eq!(h.lines().count(), 13);
    let total: usize = h
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 1000);
}

#[test]
fn inject_moves_exactly_the_requested_claims() {
    let ws = Workspace::new();
    let data = ws.portfolio("p.csv", 20_000, 9);
    let scenario = ws.write(
        "s2.cfg",
        "# move 150 claims\nsource_covariate=group\nsource_values=high\ntarget_covariate=group\ntarget_values=low\ntransfer_count=150\nseed=2\n",
    );
    let out = ws.s("out.csv");
    let o = ginimon(&[
        "inject",
        "--scenario",
        &scenario,
        "--input",
        &data,
        "--output",
        &out,
    ]);
    assert_eq!(code(&o), 0);
    let j = stdout_json(&o);
    assert_eq!(j["total_before"], j["total_after"]);
    assert_eq!(
        group_claims(Path::new(&data), "high") - 150,
        group_claims(Path::new(&out), "high")
    );
    assert_eq!(
        group_claims(Path::new(&data), "low") + 150,
        group_claims(Path::new(&out), "low")
    );
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let ws = Workspace::new();
    let data = ws.portfolio("p.csv", 3000, 5);
    let again = ws.portfolio("q.csv", 3000, 5);
    assert_eq!(fs::read(&data).unwrap(), fs::read(&again).unwrap());
    let run = |name: &str| {
        let out = ws.s(name);
        let o = ginimon(&[
            "bootstrap",
            "--input",
            &data,
            "--B",
            "300",
            "--seed",
            "11",
            "--no-preaggregate",
            "--output",
            &out,
            "--replicates-csv",
            &ws.s(&format!("{name}.csv")),
        ]);
        assert_eq!(code(&o), 0);
        (
            fs::read(&out).unwrap(),
            fs::read(ws.path(&format!("{name}.csv"))).unwrap(),
        )
    };
    assert_eq!(run("a.json"), run("b.json"));
}

#[test]
fn glm_round_trip_through_files() {
    let ws = Workspace::new();
    let data = ws.portfolio("p.csv", 4000, 6);
    let design = ws.write("design.cfg", "categorical=group\nreference=group:low\n");
    let model = ws.s("model.json");
    let cols = [
        "--covariate-cols",
        "group",
        "--prediction-col",
        "prediction",
    ];
    let mut args = vec![
        "fit-glm", "--input", &data, "--design", &design, "--output", &model,
    ];
    args.extend(cols);
    assert_eq!(code(&ginimon(&args)), 0);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(m["columns"][1], "group=high");
    assert_eq!(m["convergence"]["converged"], true);

    let predicted = ws.s("pred.csv");
    let calibration = ws.s("cal.csv");
    let o = ginimon(&[
        "predict",
        "--model",
        &model,
        "--input",
        &data,
        "--output",
        &predicted,
        "--balance-correct",
        "unique",
        "--calibration",
        &calibration,
        "--bins",
        "4",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cal = fs::read_to_string(&calibration).unwrap();
    assert!(cal.starts_with("bin,records,exposure,response,observed_frequency,predicted_frequency"));

    let cap = ws.s("cap.csv");
    assert_eq!(
        code(&ginimon(&[
            "cap", "--input", &predicted, "--output", &cap, "--tie", "best"
        ])),
        0
    );
    let c = fs::read_to_string(&cap).unwrap();
    assert!(c.starts_with("alpha,cap\n0,0\n"));
    assert!(c.trim_end().ends_with("1,1"));
}

#[test]
fn aggregate_and_time_split() {
    let ws = Workspace::new();
    let data = ws.portfolio("p.csv", 500, 2);
    let agg = ws.s("agg.csv");
    assert_eq!(
        code(&ginimon(&["aggregate", "--input", &data, "--output", &agg])),
        0
    );
    assert_eq!(fs::read_to_string(&agg).unwrap().lines().count(), 3);
    let split = ws.s("split.csv");
    assert_eq!(
        code(&ginimon(&[
            "aggregate",
            "--input",
            &data,
            "--output",
            &split,
            "--time-split"
        ])),
        0
    );
    assert_eq!(
        group_claims(Path::new(&split), "high"),
        group_claims(Path::new(&data), "high")
    );
}

#[test]
fn schedule_writes_one_file_per_period() {
    let ws = Workspace::new();
    let data = ws.portfolio("p.csv", 4000, 8);
    let scenario = ws.write(
        "s.cfg",
        "source_covariate=group\nsource_values=high\ntarget_covariate=group\ntarget_values=low\ntransfer_count=40\nseed=1\n",
    );
    let dir = ws.s("periods");
    let o = ginimon(&[
        "schedule",
        "--scenario",
        &scenario,
        "--input",
        &data,
        "--kind",
        "incremental",
        "--periods",
        "4",
        "--output-dir",
        &dir,
    ]);
    assert_eq!(code(&o), 0);
    let base = group_claims(Path::new(&data), "high");
    for k in 1..=4u64 {
        let p = ws.path("periods").join(format!("period-{k}.csv"));
        assert_eq!(base - group_claims(&p, "high"), 10 * k);
    }
}

#[test]
fn test_subcommand_uses_saved_null() {
    let ws = Workspace::new();
    let null = ws.write(
        "null.json",
        r#"{"mean": 0.3779, "sd": 0.0109, "replicates": 10000, "n": 64978}"#,
    );
    let o = ginimon(&[
        "test",
        "--null",
        &null,
        "--gini-new",
        "0.3518",
        "--alpha",
        "0.05",
    ]);
    assert_eq!(code(&o), 10);
    let j = stdout_json(&o);
    assert!((j["z"].as_f64().unwrap() - (0.3518 - 0.3779) / 0.0109).abs() < 1e-12);
    let o = ginimon(&[
        "test",
        "--null",
        &null,
        "--gini-new",
        "0.3638",
        "--alpha",
        "0.05",
    ]);
    assert_eq!(code(&o), 0);
}

#[test]
fn exit_codes_follow_error_classes() {
    let ws = Workspace::new();
    // usage
    assert_eq!(code(&ginimon(&["gini"])), 1);
    assert_eq!(code(&ginimon(&["nonsense"])), 1);
    let data = ws.portfolio("p.csv", 200, 1);
    assert_eq!(
        code(&ginimon(&["gini", "--input", &data, "--tie", "sideways"])),
        1
    );
    assert_eq!(
        code(&ginimon(&["test", "--null", &data, "--gini-new", "0.3"])),
        1
    );
    // data
    assert_eq!(
        code(&ginimon(&["gini", "--input", &ws.s("missing.csv")])),
        2
    );
    let bad = ws.write("bad.csv", "g,exposure,response,prediction\na,0,1,0.1\n");
    assert_eq!(code(&ginimon(&["gini", "--input", &bad])), 2);
    // degeneracy
    let flat = ws.write(
        "flat.csv",
        "g,exposure,response,prediction\na,1,1,0.1\nb,1,1,0.2\n",
    );
    let o = ginimon(&["gini", "--input", &flat]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    // help
    let o = ginimon(&["--help"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("Exit codes"));
}
