use std::process::Command;

use serde_json::Value;
use thermoset::cli::main_with;
use thermoset::config::builtin;

struct Run {
    code: u8,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("thermoset").chain(args.iter().copied());
    let code = main_with(argv, &mut out, &mut err);
    Run { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn json(args: &[&str]) -> Value {
    let r = run(args);
    assert_eq!(r.code, 0, "{args:?}: {}", r.stderr);
    serde_json::from_str(&r.stdout).unwrap()
}

fn binary(args: &[&str], threads: Option<&str>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_thermoset"));
    cmd.args(args).env_remove("THERMOSET_THREADS");
    if let Some(t) = threads {
        cmd.env("THERMOSET_THREADS", t);
    }
    cmd.output().unwrap()
}

#[test]
fn dimension_of_thirds() {
    let v = json(&["dimension", "--system", "cantor-thirds"]);
    let t0 = v["results"]["t0"].as_f64().unwrap();
    assert!((t0 - 2f64.ln() / 3f64.ln()).abs() < 1e-7);
    assert_eq!(v["command"], "dimension");
    assert_eq!(v["parameters"]["depth"], 8);
    assert_eq!(v["defaults"]["bowen_tol"], 1e-9);
    assert_eq!(v["fingerprint"].as_str().unwrap(), builtin("cantor-thirds").unwrap().fingerprint());
}

#[test]
fn periodic_classes_on_paper_example() {
    let v = json(&["periodic", "--system", "paper-example", "--max-period", "1"]);
    let pts = v["results"]["points"].as_array().unwrap();
    assert_eq!(pts.len(), 2);
    assert_eq!(pts[0]["class"], "Parabolic");
    assert_eq!(pts[0]["x"], 0.0);
    assert_eq!(pts[1]["class"], "Expanding");
    assert!((pts[1]["multiplier"].as_f64().unwrap() - 10.0).abs() < 1e-8);
}

#[test]
fn keys_are_sorted() {
    let r = run(&["validate", "--system", "golden-mean-thirds"]);
    let top: Vec<&str> = r
        .stdout
        .lines()
        .filter(|l| l.starts_with("  \"") && !l.starts_with("   "))
        .map(|l| l.trim().split('"').nth(1).unwrap())
        .collect();
    let mut sorted = top.clone();
    sorted.sort();
    assert_eq!(top, sorted);
    assert_eq!(top.len(), 8);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["frobnicate"]).code, 2);
    assert_eq!(run(&["dimension", "--format", "xml"]).code, 2);
    assert_eq!(run(&["dimension", "--method", "magic"]).code, 2);
    assert_eq!(run(&["refine", "--system", "/nonexistent/system.json"]).code, 2);
    assert_eq!(run(&["refine", "--depth", "0"]).code, 2);
    assert_eq!(run(&["subshift", "--repair", "--components"]).code, 2);
    let r = run(&["subshift", "--cut", "1.x"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("invalid word"), "{}", r.stderr);
}

#[test]
fn computation_errors_exit_1() {
    let r = run(&["dimension", "--system", "paper-example", "--method", "periodic", "--depth", "4"]);
    assert_eq!(r.code, 1, "{}", r.stderr);
    assert!(r.stderr.contains("pressure stays positive"));
}

#[test]
fn help_exits_0() {
    let r = run(&["--help"]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("dimension"));
}

#[test]
fn csv_headers_follow_column_contracts() {
    let cases: &[(&[&str], &str)] = &[
        (&["refine", "--depth", "3"], "word,left,right,length,deriv_mid"),
        (&["pressure", "--t-grid", "0,0.5"], "t,lower,upper,method,depth"),
        (&["hyperbolic", "--x", "0.25", "--steps", "5"], "k,x_k,branch,logderiv_partial"),
        (&["periodic", "--max-period", "2"], "word,period,x,multiplier,class"),
        (&["gaps", "--system", "parabolic-b2", "--count", "100"], "k,x_k,D_k"),
        (&["dimension"], "t0,t_lo,t_hi,method,depth"),
        (&["conformal", "--depth", "3"], "word,left,right,mass"),
    ];
    for (args, header) in cases {
        let mut argv = args.to_vec();
        argv.extend(["--format", "csv"]);
        let r = run(&argv);
        assert_eq!(r.code, 0, "{argv:?}: {}", r.stderr);
        assert_eq!(r.stdout.lines().next(), Some(*header), "{argv:?}");
    }
}

#[test]
fn pressure_csv_rows() {
    let r = run(&["pressure", "--t-grid", "0,1", "--depth", "4", "--method", "cylinder", "-f", "csv"]);
    let rows: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(rows.len(), 3);
    let fields: Vec<&str> = rows[1].split(',').collect();
    assert!((fields[1].parse::<f64>().unwrap() - 2f64.ln()).abs() < 1e-12);
    assert_eq!(fields[3], "cylinder");
    assert_eq!(fields[4], "4");
}

#[test]
fn subshift_operations() {
    let v = json(&["subshift", "--system", "golden-mean-thirds", "--components"]);
    assert_eq!(v["results"]["output"].as_array().unwrap().len(), 1);
    assert_eq!(v["results"]["input"]["transitive"], true);
    let v = json(&["subshift", "--system", "golden-mean-thirds", "--cut", "2.2"]);
    let out = &v["results"]["output"][0];
    assert_eq!(out["forbidden"], serde_json::json!([[1, 1], [2, 2]]));
    assert_eq!(out["nodes"], 2);
}

#[test]
fn gaps_report_on_quadratic_model() {
    let v = json(&["gaps", "--system", "parabolic-b2", "--count", "20000", "--side", "+"]);
    let beta = v["results"]["power_law"]["beta"].as_f64().unwrap();
    assert!((beta - 2.0).abs() < 0.05, "{beta}");
    assert_eq!(v["results"]["gaps"], 20001);
}

#[test]
fn hyperbolic_reports_landing() {
    let v = json(&["hyperbolic", "--system", "paper-example", "--x", "0.9", "--steps", "20"]);
    assert_eq!(v["results"]["membership"]["verdict"], "LikelyNotInH");
}

#[test]
fn config_file_matches_builtin() {
    let cfg = builtin("nonlinear-perturbed").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("system.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let from_file = json(&["validate", "--system", path.to_str().unwrap()]);
    let from_builtin = json(&["validate", "--system", "nonlinear-perturbed"]);
    assert_eq!(from_file, from_builtin);
}

#[test]
fn bad_config_names_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"branches\": []\n}\n").unwrap();
    let r = run(&["validate", "--system", path.to_str().unwrap()]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("interval"), "{}", r.stderr);
}

#[test]
fn warnings_go_to_stderr() {
    let r = run(&["validate", "--system", "cantor-thirds"]);
    assert!(r.stderr.starts_with("warning: "));
    assert!(!r.stdout.contains("warning: "));
}

#[test]
fn reports_are_byte_identical_across_thread_counts() {
    let args = ["pressure", "--system", "nonlinear-perturbed", "--depth", "8", "--t-grid", "0,0.3,0.63"];
    let one = binary(&args, Some("1"));
    let four = binary(&args, Some("4"));
    let again = binary(&[&args[..], &["--threads", "3"]].concat(), None);
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(one.stdout, again.stdout);
}

#[test]
fn bad_thread_env_is_a_usage_error() {
    let out = binary(&["validate"], Some("many"));
    assert_eq!(out.status.code(), Some(2));
}
