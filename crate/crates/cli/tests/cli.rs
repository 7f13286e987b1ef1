use std::path::Path;
use std::process::{Command, Output};

use serde::de::DeserializeOwned;
use serde_json::Value;
use tempfile::TempDir;

use trilinear::assembly::PredictionReport;
use trilinear::enumeration::count_height;
use trilinear::form::random_generic_form;
use trilinear::{CountReport, CountVariant, TrilinearForm};
use trilinear_cli::{
    ArcReport, BbReport, FiberDensityReport, FiberReport, OscReport, SeriesReport, SigmaInfReport,
    SigmaPReport, CSV_HEADER, EXIT_BUDGET, EXIT_INVALID,
};

fn manin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manin"))
        .args(args)
        .env_remove("MANIN_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_form(dir: &TempDir, n: usize, seed: u64) -> String {
    let path = dir.path().join(format!("form_{n}_{seed}.json"));
    let out = manin(&[
        "gen",
        "--n",
        &n.to_string(),
        "--bound",
        "3",
        "--seed",
        &seed.to_string(),
        "--out",
        path.to_str().unwrap(),
    ]);
    stdout(&out);
    path.to_str().unwrap().to_string()
}

fn strip_seconds(mut v: Value) -> Value {
    if let Value::Object(map) = &mut v {
        map.remove("seconds");
        for (_, child) in map.iter_mut() {
            *child = strip_seconds(child.take());
        }
    } else if let Value::Array(items) = &mut v {
        for item in items.iter_mut() {
            *item = strip_seconds(item.take());
        }
    }
    v
}

fn round_trip<T: DeserializeOwned + serde::Serialize>(text: &str) -> T {
    let parsed: T = serde_json::from_str(text).expect("report parses back");
    let again = serde_json::to_string_pretty(&parsed).unwrap();
    assert_eq!(again.trim_end(), text.trim_end());
    parsed
}

#[test]
fn gen_matches_library() {
    let out = manin(&["gen", "--n", "1", "--bound", "3", "--seed", "1"]);
    let text = stdout(&out);
    let form = TrilinearForm::from_json(&text).unwrap();
    assert_eq!(form, random_generic_form(1, 3, 1).unwrap());
}

#[test]
fn height_count_matches_library() {
    let dir = TempDir::new().unwrap();
    let path = write_form(&dir, 1, 1);
    let text = stdout(&manin(&[
        "count", "--form", &path, "--mode", "height", "--B", "12", "--primitive",
    ]));
    let report: CountReport = serde_json::from_str(&text).unwrap();
    let form = random_generic_form(1, 3, 1).unwrap();
    let lib = count_height(&form, 12, true, CountVariant::All).unwrap();
    assert_eq!(report.count, lib.count);
    assert_eq!(report.bounds, lib.bounds);
    assert_eq!(report.form_id, form.form_id());
}

#[test]
fn box_count_with_variant_and_csv() {
    let dir = TempDir::new().unwrap();
    let path = write_form(&dir, 1, 2);
    let csv = dir.path().join("counts.csv");
    let csv_s = csv.to_str().unwrap();
    for p in ["2", "3"] {
        stdout(&manin(&[
            "count", "--form", &path, "--mode", "box", "--P1", p, "--P2", p, "--P3", p, "--variant", "u",
            "--csv", csv_s,
        ]));
    }
    let mut reader = csv::Reader::from_path(&csv).unwrap();
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER.to_vec());
    let rows: Vec<_> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[1][2], "3");
    assert_eq!(&rows[1][5], "");
    assert_eq!(&rows[0][1], "u(lambda=1)");
}

#[test]
fn shell_mode_needs_all_radii() {
    let dir = TempDir::new().unwrap();
    let path = write_form(&dir, 1, 1);
    let out = manin(&["count", "--form", &path, "--mode", "shell", "--l1", "1", "--l2", "2"]);
    assert_eq!(out.status.code(), Some(EXIT_INVALID));
    let text = stdout(&manin(&[
        "count", "--form", &path, "--mode", "shell", "--l1", "1", "--l2", "2", "--l3", "3",
    ]));
    let report: CountReport = round_trip(&text);
    let form = random_generic_form(1, 3, 1).unwrap();
    assert_eq!(report.count, trilinear::enumeration::h_function(&form, 1, 2, 3, CountVariant::All).unwrap());
}

#[test]
fn malformed_form_exits_two_with_location() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"n\": 1,\n  \"coeffs\": [ {\"i\": 0, \"j\": 0, \"q\": 1, \"a\": 2} ]\n}\n").unwrap();
    let out = manin(&["series", "--form", bad.to_str().unwrap(), "--Q", "3"]);
    assert_eq!(out.status.code(), Some(EXIT_INVALID));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("`q`"), "{err}");

    std::fs::write(&bad, "{\"n\": 1, \"coeffs\": [{\"i\": 5, \"j\": 0, \"k\": 0, \"a\": 1}]}").unwrap();
    let out = manin(&["series", "--form", bad.to_str().unwrap(), "--Q", "3"]);
    assert_eq!(out.status.code(), Some(EXIT_INVALID));
    assert!(String::from_utf8_lossy(&out.stderr).contains("coeffs[0]"));

    let out = manin(&["series", "--form", dir.path().join("missing.json").to_str().unwrap(), "--Q", "3"]);
    assert_eq!(out.status.code(), Some(EXIT_INVALID));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(manin(&["--bogus"]).status.code(), Some(EXIT_INVALID));
    assert_eq!(manin(&["frobnicate"]).status.code(), Some(EXIT_INVALID));
    assert_eq!(manin(&["gen", "--n", "1"]).status.code(), Some(EXIT_INVALID));
    assert_eq!(manin(&["--help"]).status.code(), Some(0));
}

#[test]
fn validation_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let path = write_form(&dir, 1, 1);
    let out = manin(&["count", "--form", &path, "--mode", "height", "--B", "4", "--variant", "u", "--lambda", "7"]);
    assert_eq!(out.status.code(), Some(EXIT_INVALID));
    let out = manin(&["sigma-p", "--form", &path, "--p", "4"]);
    assert_eq!(out.status.code(), Some(EXIT_INVALID));
    let out = manin(&["arcs", "--alpha", "0.3", "--q", "3", "--a", "3", "--theta", "0.1", "--P", "100"]);
    assert_eq!(out.status.code(), Some(EXIT_INVALID));
    let out = manin(&["--threads", "0", "series", "--form", &path, "--Q", "2"]);
    assert_eq!(out.status.code(), Some(EXIT_INVALID));
}

#[test]
fn budget_errors_exit_three() {
    let dir = TempDir::new().unwrap();
    let path = write_form(&dir, 1, 1);
    let out = manin(&["sigma-p", "--form", &path, "--p", "5", "--rmax", "3", "--budget", "100"]);
    assert_eq!(out.status.code(), Some(EXIT_BUDGET));
    assert!(String::from_utf8_lossy(&out.stderr).contains("partial"));
    let out = manin(&["count", "--form", &path, "--mode", "box", "--P1", "500", "--P2", "500", "--P3", "500"]);
    assert_eq!(out.status.code(), Some(EXIT_BUDGET));
}

#[test]
fn output_is_deterministic_across_threads() {
    let dir = TempDir::new().unwrap();
    let path = write_form(&dir, 1, 3);
    let runs: Vec<(Vec<&str>, bool)> = vec![
        (vec!["count", "--form", &path, "--mode", "height", "--B", "10"], true),
        (vec!["count", "--form", &path, "--mode", "box", "--P1", "3", "--P2", "2", "--P3", "4", "--variant", "nprime"], true),
        (vec!["sigma-inf", "--form", &path, "--method", "both", "--phi", "2", "--samples", "4e3", "--seed", "9"], false),
        (vec!["sigma-p", "--form", &path, "--p", "3", "--rmax", "2"], false),
        (vec!["series", "--form", &path, "--Q", "6"], false),
    ];
    for (args, has_seconds) in runs {
        let mut outputs = Vec::new();
        for threads in ["1", "3"] {
            let mut full = vec!["--threads", threads];
            full.extend(args.iter().copied());
            outputs.push(stdout(&manin(&full)));
        }
        if has_seconds {
            let a: Value = serde_json::from_str(&outputs[0]).unwrap();
            let b: Value = serde_json::from_str(&outputs[1]).unwrap();
            assert_eq!(strip_seconds(a), strip_seconds(b), "{args:?}");
        } else {
            assert_eq!(outputs[0], outputs[1], "{args:?}");
        }
    }
}

#[test]
fn env_thread_default_is_honoured() {
    let dir = TempDir::new().unwrap();
    let path = write_form(&dir, 1, 1);
    let bad = Command::new(env!("CARGO_BIN_EXE_manin"))
        .args(["series", "--form", &path, "--Q", "2"])
        .env("MANIN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_INVALID));
    let ok = Command::new(env!("CARGO_BIN_EXE_manin"))
        .args(["series", "--form", &path, "--Q", "2"])
        .env("MANIN_THREADS", "2")
        .output()
        .unwrap();
    assert!(ok.status.success());
}

#[test]
fn reports_round_trip() {
    let dir = TempDir::new().unwrap();
    let path = write_form(&dir, 1, 1);
    let p = path.as_str();

    let fiber: FiberReport = round_trip(&stdout(&manin(&[
        "fiber", "--form", p, "--x=-1,2", "--y", "1,1", "--P3", "50",
    ])));
    assert_eq!(fiber.bvec.values.len(), 2);
    assert!(fiber.exact > 0);

    let series: SeriesReport = round_trip(&stdout(&manin(&["series", "--form", p, "--Q", "4"])));
    assert_eq!(series.series.q_max, 4);

    let osc: OscReport = round_trip(&stdout(&manin(&[
        "osc", "--form", p, "--phi", "2", "--samples", "2000", "--seed", "3", "--beta", "0.25",
    ])));
    assert!(osc.i_beta.is_some());
    assert_eq!(osc.quad.seed, 3);

    let arcs: ArcReport = round_trip(&stdout(&manin(&[
        "arcs", "--alpha", "0.3333", "--q", "3", "--a", "1", "--theta", "0.05", "--P", "1000",
        "--form", p, "--H1", "3", "--H2", "3", "--Hinv", "0.5",
    ])));
    assert!(arcs.in_major_arc);
    assert!(arcs.m3.is_some());

    let sp: SigmaPReport = round_trip(&stdout(&manin(&["sigma-p", "--form", p, "--p", "2", "--rmax", "2"])));
    assert_eq!(sp.density.seq.len(), 3);

    let si: SigmaInfReport = round_trip(&stdout(&manin(&[
        "sigma-inf", "--form", p, "--method", "leray", "--samples", "2000",
    ])));
    assert!(si.density.leray.is_some() && si.density.sinc.is_none());

    let fd: FiberDensityReport = round_trip(&stdout(&manin(&[
        "fiber-density", "--form", p, "--x", "1,1", "--Q", "4", "--phi", "2", "--samples", "2000",
    ])));
    assert_eq!(fd.density.x, vec![1, 1]);

    let bb: BbReport = round_trip(&stdout(&manin(&["bb-sum", "--form", p, "--P", "6", "--fit", "3,4,5,6"])));
    assert_eq!(bb.fit_points.len(), 4);
    assert!(bb.fit.is_some());

    let count: CountReport = round_trip(&stdout(&manin(&[
        "count", "--form", p, "--mode", "height", "--B", "6", "--variant", "n1",
    ])));
    assert_eq!(count.variant, CountVariant::N1 { lambda: 1 });
}

#[test]
fn bb_sum_matches_height_count() {
    let dir = TempDir::new().unwrap();
    let path = write_form(&dir, 1, 4);
    let bb: BbReport = serde_json::from_str(&stdout(&manin(&["bb-sum", "--form", &path, "--P", "9"]))).unwrap();
    let form = random_generic_form(1, 3, 4).unwrap();
    assert_eq!(bb.sum, count_height(&form, 9, false, CountVariant::All).unwrap().count);
}

#[test]
fn predict_and_compare_write_files() {
    let dir = TempDir::new().unwrap();
    let path = write_form(&dir, 1, 1);
    let out_path = dir.path().join("report.json");
    let common = [
        "--pmax", "5", "--Q", "4", "--phi", "2", "--samples", "4000", "--seed", "5",
    ];
    let mut args = vec!["predict", "--form", path.as_str()];
    args.extend(common);
    let predicted: PredictionReport = round_trip(&stdout(&manin(&args)));
    assert!(predicted.comparisons.is_empty());

    let mut args = vec!["compare", "--form", path.as_str(), "--B", "4,8", "--out", out_path.to_str().unwrap()];
    args.extend(common);
    let out = manin(&args);
    assert!(stdout(&out).is_empty());
    let text = std::fs::read_to_string(&out_path).unwrap();
    let report: PredictionReport = round_trip(&text);
    assert_eq!(report.comparisons.len(), 2);
    assert_eq!(report.c_v, predicted.c_v);
    assert!(Path::new(&out_path).exists());
}
