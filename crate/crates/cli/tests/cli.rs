use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_maxent-merge"));
    c.env_remove("MAXENT_MERGE_JOBS");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn schema_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas").join(format!("{name}.schema.json"))
}

fn assert_schema(name: &str, doc: &Value) {
    let schema = read_json(&schema_path(name));
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| format!("{e} at {}", e.instance_path())).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

const BINARY_X: &str = r#"{"variables":[{"name":"X","domain":["0","1"]}]}"#;
const HEADER: &str = "feature_id,kind,scope,condition,target,slack\n";

#[test]
fn bernoulli_fit_matches_closed_form() {
    let d = TempDir::new().unwrap();
    write(d.path(), "v.json", BINARY_X);
    write(d.path(), "c.csv", &format!("{HEADER}x,mean,X,,0.8,0\n"));
    let o = run(d.path(), &["fit", "--constraints", "c.csv", "--variables", "v.json", "--tol", "1e-10", "-o", "s.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = read_json(&d.path().join("s.json"));
    assert_schema("solution", &s);
    let lambda = s["multipliers"][0]["value"].as_f64().unwrap();
    assert!((lambda - 4f64.ln()).abs() < 1e-4, "{lambda}");
    assert_eq!(s["converged"], Value::Bool(true));
}

#[test]
fn empty_constraints_give_the_uniform_solution() {
    let d = TempDir::new().unwrap();
    write(
        d.path(),
        "v.json",
        r#"{"variables":[{"name":"A","domain":["0","1"]},{"name":"B","domain":["x","y","z"]}]}"#,
    );
    write(d.path(), "c.csv", HEADER);
    let o = run(d.path(), &["fit", "--constraints", "c.csv", "--variables", "v.json", "-o", "s.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = read_json(&d.path().join("s.json"));
    let alpha = s["log_partition"]["alpha"].as_f64().unwrap();
    assert!((alpha - 6f64.ln()).abs() < 1e-12);
}

#[test]
fn malformed_input_exits_2_with_location() {
    let d = TempDir::new().unwrap();
    write(d.path(), "v.json", BINARY_X);
    write(d.path(), "dup.csv", &format!("{HEADER}x,mean,X,,0.8,0\nx,mean,X,,0.7,0\n"));
    let o = run(d.path(), &["fit", "--constraints", "dup.csv", "--variables", "v.json", "-o", "s.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("conflicting targets"));

    write(d.path(), "bad.csv", &format!("{HEADER}x,mean,X,,0.8,0\nx,mean,X,,oops,0\n"));
    let o = run(d.path(), &["fit", "--constraints", "bad.csv", "--variables", "v.json", "-o", "s.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bad.csv:3:"), "{}", stderr(&o));

    write(d.path(), "v_bad.json", "{\n  \"variables\": [\n    {\"name\": 1}\n  ]\n}");
    write(d.path(), "c.csv", HEADER);
    let o = run(d.path(), &["fit", "--constraints", "c.csv", "--variables", "v_bad.json", "-o", "s.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("v_bad.json:3:"), "{}", stderr(&o));
}

#[test]
fn non_convergence_exits_3_and_still_writes_the_solution() {
    let d = TempDir::new().unwrap();
    write(d.path(), "v.json", BINARY_X);
    write(d.path(), "c.csv", &format!("{HEADER}x,mean,X,,0.999,0\n"));
    let o = run(
        d.path(),
        &["fit", "--constraints", "c.csv", "--variables", "v.json", "--max-iterations", "2", "--tol", "1e-12", "-o", "s.json"],
    );
    assert_eq!(code(&o), 3);
    let s = read_json(&d.path().join("s.json"));
    assert_schema("solution", &s);
    assert_eq!(s["converged"], Value::Bool(false));
}

fn two_cause_fit(d: &Path) {
    write(
        d,
        "v.json",
        r#"{"variables":[{"name":"Y","domain":["0","1"]},{"name":"GDP","domain":["0","1"]},{"name":"HDI","domain":["0","1"]}]}"#,
    );
    write(
        d,
        "c.csv",
        &format!("{HEADER}y,cond_mean,Y,GDP=0,0.3,0\ny,cond_mean,Y,GDP=1,0.6,0\ny,cond_mean,Y,HDI=0,0.45,0\ny,cond_mean,Y,HDI=1,0.45,0\n"),
    );
    write(d, "px.csv", "GDP,HDI,p\n0,0,0.25\n0,1,0.25\n1,0,0.25\n1,1,0.25\n");
    let o = run(
        d,
        &[
            "fit", "--constraints", "c.csv", "--variables", "v.json", "--mode", "conditional", "--target", "Y",
            "--cause-marginal", "px.csv", "--tol", "1e-9", "-o", "s.json",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn edge_report_table_and_json() {
    let d = TempDir::new().unwrap();
    two_cause_fit(d.path());
    let o = run(d.path(), &["edges", "--solution", "s.json", "--target", "Y", "--threshold", "0.15"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    let gdp = table.lines().find(|l| l.starts_with("GDP")).unwrap();
    let hdi = table.lines().find(|l| l.starts_with("HDI")).unwrap();
    assert!(gdp.ends_with('✓') && hdi.ends_with('✗'), "{table}");

    let o = run(d.path(), &["edges", "--solution", "s.json", "--format", "json", "-o", "e.json"]);
    assert_eq!(code(&o), 0);
    let e = read_json(&d.path().join("e.json"));
    assert_schema("edge-report", &e);
    assert_eq!(e["decisions"][1]["verdict"], "no-edge");

    let o = run(d.path(), &["edges", "--solution", "s.json", "--target", "GDP"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn edges_on_a_joint_fit_is_an_input_error() {
    let d = TempDir::new().unwrap();
    write(d.path(), "v.json", BINARY_X);
    write(d.path(), "c.csv", &format!("{HEADER}x,mean,X,,0.8,0\n"));
    assert_eq!(code(&run(d.path(), &["fit", "--constraints", "c.csv", "--variables", "v.json", "-o", "s.json"])), 0);
    let o = run(d.path(), &["edges", "--solution", "s.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("wrong mode"));
}

#[test]
fn ace_bounds_collapse_and_point() {
    let d = TempDir::new().unwrap();
    two_cause_fit(d.path());
    write(d.path(), "pair.csv", "GDP,Y,p\n0,0,0.35\n0,1,0.15\n1,0,0.2\n1,1,0.3\n");
    write(d.path(), "adj.csv", "GDP,HDI,p\n0,0,0.25\n0,1,0.25\n1,0,0.25\n1,1,0.25\n");
    let o = run(
        d.path(),
        &[
            "ace", "--variables", "v.json", "--pair", "pair.csv", "--adjustment", "adj.csv", "--treatment", "GDP", "--target", "Y",
            "--solution", "s.json", "-o", "ace.json",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let a = read_json(&d.path().join("ace.json"));
    assert_schema("ace-output", &a);
    // treatment independent of the adjustment set: bounds collapse onto the point value
    let (lo, hi) = (a["lower"].as_f64().unwrap(), a["upper"].as_f64().unwrap());
    let point = a["point_estimate"].as_f64().unwrap();
    assert!((lo - 0.3).abs() < 1e-12 && (hi - 0.3).abs() < 1e-12);
    assert!((point - 0.3).abs() < 1e-6);
    assert_eq!(a["within_bounds"], Value::Bool(true));

    write(d.path(), "adj_bad.csv", "GDP,HDI,p\n0,0,0.4\n0,1,0.25\n1,0,0.1\n1,1,0.25\n");
    let o = run(
        d.path(),
        &["ace", "--variables", "v.json", "--pair", "pair.csv", "--adjustment", "adj_bad.csv", "--treatment", "GDP", "--target", "Y"],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("marginals disagree"));
}

/// Every file in `dir`, with the manifest's wall time blanked.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let mut bytes = fs::read(&p).unwrap();
            if name == "manifest.json" {
                let mut v: Value = serde_json::from_slice(&bytes).unwrap();
                v["wall_time_seconds"] = Value::Null;
                bytes = serde_json::to_vec(&v).unwrap();
            }
            (name, bytes)
        })
        .collect();
    files.sort();
    files
}

fn check_manifest(dir: &Path) {
    let m = read_json(&dir.join("manifest.json"));
    assert_schema("run-manifest", &m);
    let listed: Vec<&str> = m["artifacts"].as_array().unwrap().iter().map(|a| a["path"].as_str().unwrap()).collect();
    let mut present: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    present.sort();
    let mut listed_sorted: Vec<String> = listed.iter().map(|s| s.to_string()).collect();
    listed_sorted.sort();
    assert_eq!(present, listed_sorted);
    for a in m["artifacts"].as_array().unwrap() {
        let bytes = fs::read(dir.join(a["path"].as_str().unwrap())).unwrap();
        use sha2::Digest;
        assert_eq!(a["sha256"].as_str().unwrap(), hex::encode(sha2::Sha256::digest(&bytes)));
    }
}

fn twice(args: &[&str], jobs: [&str; 2]) -> (TempDir, Vec<(String, Vec<u8>)>) {
    let d = TempDir::new().unwrap();
    let mut snaps = Vec::new();
    for (k, j) in jobs.iter().enumerate() {
        let out = format!("out{k}");
        let mut full: Vec<&str> = args.to_vec();
        full.extend(["--out-dir", &out, "--jobs", j]);
        let o = run(d.path(), &full);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        check_manifest(&d.path().join(&out));
        snaps.push(snapshot(&d.path().join(&out)));
    }
    assert_eq!(snaps[0], snaps[1], "outputs differ between runs of {args:?}");
    (d, snaps.remove(0))
}

#[test]
fn simulate_is_deterministic() {
    let (d, files) = twice(&["simulate", "--family", "b", "--n", "50", "--reps", "2", "--seed", "7", "--force", "X1=1"], ["1", "3"]);
    assert_eq!(files.len(), 5);
    let inst = read_json(&d.path().join("out0/instance_0000.json"));
    assert_schema("instance", &inst);
    assert_eq!(inst["edges"][0], Value::Bool(true));
    let sample = fs::read_to_string(d.path().join("out0/sample_0001.csv")).unwrap();
    assert_eq!(sample.lines().count(), 51);
    assert_eq!(sample.lines().next().unwrap(), "X0,X1,X2,X3,X4,X5");
}

#[test]
fn roc_is_deterministic_and_valid() {
    let (d, _) = twice(&["roc", "--family", "a", "--reps", "12", "--n", "300", "--seed", "3"], ["1", "4"]);
    let s = read_json(&d.path().join("out0/summary.json"));
    assert_schema("roc-summary", &s);
    let roc = fs::read_to_string(d.path().join("out0/roc.csv")).unwrap();
    assert_eq!(roc.lines().count(), 102);
    let (d2, _) = twice(&["roc", "--family", "c", "--reps", "4", "--exact", "--mode", "estimated", "--seed", "1"], ["2", "2"]);
    assert_schema("roc-summary", &read_json(&d2.path().join("out0/summary.json")));
}

#[test]
fn tpr_vs_ace_is_deterministic_and_valid() {
    let (d, _) = twice(&["tpr-vs-ace", "--family", "a", "--reps", "20", "--n", "300", "--bins", "4"], ["1", "2"]);
    let s = read_json(&d.path().join("out0/summary.json"));
    assert_schema("tpr-summary", &s);
    assert_eq!(s["bins"].as_array().unwrap().len(), 4);
}

#[test]
fn ace_fig_is_deterministic_and_valid() {
    let (d, _) = twice(&["ace-fig", "--variants", "3", "--seed", "5"], ["1", "3"]);
    let t = read_json(&d.path().join("out0/ace_fig.json"));
    assert_schema("ace-fig", &t);
    assert_eq!(t["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn zero_reps_is_an_input_error() {
    let d = TempDir::new().unwrap();
    for cmd in ["roc", "tpr-vs-ace", "simulate"] {
        let o = run(d.path(), &[cmd, "--family", "a", "--reps", "0", "--out-dir", "x"]);
        assert_eq!(code(&o), 2, "{cmd}: {}", stderr(&o));
    }
    let o = run(d.path(), &["ace-fig", "--variants", "0", "--out-dir", "x"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn all_reps_dropped_exits_4() {
    let d = TempDir::new().unwrap();
    let o = run(
        d.path(),
        &["roc", "--family", "a", "--reps", "3", "--n", "200", "--max-iterations", "1", "--tol", "1e-12", "--out-dir", "x"],
    );
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn variables_schema_accepts_the_examples() {
    let v: Value = serde_json::from_str(BINARY_X).unwrap();
    assert_schema("variables", &v);
}
