//! End-to-end tests running the `shrinkbound` binary.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use shrinkbound::bounds;
use shrinkbound::model::{Dataset, HeterogeneityPrior, Study};
use shrinkbound::posterior::{self, IntervalKind, TauPosterior};
use shrinkbound::quad::QuadratureSettings;

fn data_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shrinkbound"))
        .args(args)
        .env_remove("SHRINKBOUND_QUAD_TOL")
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

#[test]
fn analyze_cjd_reproduces_published_row() {
    let cjd = data_path("cjd.csv");
    let out = run(&["analyze", "--data", cjd.to_str().unwrap(), "--prior", "half-normal:0.5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("39.5"), "{text}");
    assert!(text.contains("-0.370"), "{text}");
    assert!(text.contains("[-1.157, 0.477]"), "{text}");
    assert!(text.contains("38.9"), "{text}");
    assert!(text.contains("13.5"), "{text}");
}

#[test]
fn analyze_acidosis_reproduces_published_row() {
    let path = data_path("acidosis.csv");
    let out = run(&["analyze", "--data", path.to_str().unwrap(), "--prior", "half-normal:0.5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("74.0"), "{text}");
    assert!(text.contains("-0.495"), "{text}");
    // endpoints to the published values within the table tolerance
    let json_out = run(&[
        "analyze",
        "--data",
        path.to_str().unwrap(),
        "--prior",
        "half-normal:0.5",
        "--format",
        "json",
    ]);
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&json_out)).unwrap();
    let row = &parsed["studies"][1];
    assert!((row["lo"].as_f64().unwrap() - (-0.986)).abs() < 0.02);
    assert!((row["hi"].as_f64().unwrap() - 0.005).abs() < 0.02);
}

#[test]
fn analyze_single_study_file_gives_plain_normal_summary() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("single.csv");
    let mut file = std::fs::File::create(&path).unwrap();
    writeln!(file, "study,y,sigma").unwrap();
    writeln!(file, "randomized,-0.173,0.631").unwrap();
    drop(file);

    let out = run(&["analyze", "--data", path.to_str().unwrap(), "--prior", "half-normal:0.5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("100.0"), "{text}");
    assert!(text.contains("-0.173"), "{text}");
    assert!(text.contains("[-1.410, 1.064]"), "{text}");
}

#[test]
fn analyze_json_round_trips_against_the_library() {
    let path = data_path("cjd.csv");
    let out = run(&[
        "analyze",
        "--data",
        path.to_str().unwrap(),
        "--prior",
        "half-normal:0.5",
        "--format",
        "json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();

    let dataset = Dataset::new(vec![
        Study::new("observational", -0.499, 0.249).unwrap(),
        Study::new("randomized", -0.173, 0.631).unwrap(),
    ])
    .unwrap();
    let prior = HeterogeneityPrior::half_normal(0.5).unwrap();
    let settings = QuadratureSettings::default();
    let tp = TauPosterior::fit(&dataset, &prior, &settings).unwrap();
    let result = posterior::shrinkage_result(&tp, 0.95, IntervalKind::Shortest).unwrap();
    let bounds_report = bounds::bounds_report(&dataset, true, &prior, &settings).unwrap();

    for (j, study) in result.studies.iter().enumerate() {
        let row = &parsed["studies"][j];
        assert_eq!(row["label"].as_str().unwrap(), study.label);
        assert_eq!(row["mean"].as_f64().unwrap(), study.mean);
        assert_eq!(row["sd"].as_f64().unwrap(), study.sd);
        assert_eq!(row["lo"].as_f64().unwrap(), study.lo);
        assert_eq!(row["hi"].as_f64().unwrap(), study.hi);
        assert_eq!(
            row["weight"].as_f64().unwrap(),
            bounds_report.studies[j].actual_weight.unwrap()
        );
        assert_eq!(
            row["fe_weight"].as_f64().unwrap(),
            bounds_report.studies[j].fe_weight
        );
    }
    assert_eq!(
        parsed["overall"]["mean"].as_f64().unwrap(),
        result.overall.mean
    );
}

#[test]
fn analyze_target_filters_rows() {
    let path = data_path("cjd.csv");
    let out = run(&[
        "analyze",
        "--data",
        path.to_str().unwrap(),
        "--prior",
        "half-normal:0.5",
        "--target",
        "randomized",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("randomized"));
    // only the study table row is filtered; the header block still names the file
    assert!(!text.lines().any(|l| l.trim_start().starts_with("1  observational")));

    let out = run(&[
        "analyze",
        "--data",
        path.to_str().unwrap(),
        "--prior",
        "half-normal:0.5",
        "--target",
        "nonexistent",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn analyze_oracle_flag_reports_small_differences() {
    let path = data_path("cjd.csv");
    let out = run(&[
        "analyze",
        "--data",
        path.to_str().unwrap(),
        "--prior",
        "half-normal:0.5",
        "--oracle",
        "--format",
        "json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let max_diff = parsed["oracle"]["max_abs_difference"].as_f64().unwrap();
    assert!(max_diff < 1e-3, "oracle disagreement {max_diff}");
}

#[test]
fn bounds_sigmas_reports_fe_and_coincidence() {
    let out = run(&["bounds", "--sigmas", "0.8,0.2", "--prior", "half-normal:0.5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("5.9"), "{text}");
    assert!(text.contains("29.4"), "{text}");
    assert!(text.contains('-'), "{text}");
}

#[test]
fn bounds_data_reports_actual_weights() {
    let path = data_path("cjd.csv");
    let out = run(&[
        "bounds",
        "--data",
        path.to_str().unwrap(),
        "--prior",
        "half-normal:1.0",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("52.1"), "{text}");
    assert!(text.contains("53.1"), "{text}");
}

#[test]
fn bounds_symmetric_sigmas_split_evenly() {
    let out = run(&["bounds", "--sigmas", "1,1", "--prior", "half-normal:0.5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.matches("50.0").count(), 2, "{text}");
}

#[test]
fn sweep_delta_grid_matches_coincidence_at_zero() {
    let out = run(&[
        "sweep",
        "--sigmas",
        "0.8,0.2",
        "--prior",
        "half-normal:0.5",
        "--delta",
        "-3:3:0.5",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            assert_eq!(line, "delta,weight,mean,lo,hi");
            continue;
        }
        let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        rows.push((fields[0], fields[1]));
    }
    assert_eq!(rows.len(), 13);
    let zero_weight = rows.iter().find(|(d, _)| *d == 0.0).unwrap().1;
    assert!((zero_weight - 0.29).abs() < 0.01, "weight at zero {zero_weight}");
    for (_, w) in &rows {
        assert!(*w >= zero_weight - 1e-10);
    }

    let out = run(&[
        "sweep",
        "--sigmas",
        "0.8,0.2",
        "--prior",
        "half-normal:0.5",
        "--delta",
        "0:0:1",
    ]);
    assert_eq!(stdout(&out).lines().count(), 2);
}

#[test]
fn sweep_defaults_to_the_fig1_delta_grid() {
    let out = run(&["sweep", "--sigmas", "0.8,0.2", "--prior", "half-normal:0.5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    // default grid -3:3:0.05 gives 121 rows plus the header
    assert_eq!(text.lines().count(), 122, "{}", text.lines().count());
    assert!(text.starts_with("delta,weight,mean,lo,hi\n"));
}

#[test]
fn analyze_is_deterministic_and_interval_kinds_differ() {
    let path = data_path("cjd.csv");
    let args = [
        "analyze",
        "--data",
        path.to_str().unwrap(),
        "--prior",
        "half-normal:0.5",
        "--format",
        "json",
    ];
    let a = stdout(&run(&args));
    let b = stdout(&run(&args));
    assert_eq!(a, b, "repeated runs must agree byte for byte");

    let central = run(&[
        "analyze",
        "--data",
        path.to_str().unwrap(),
        "--prior",
        "half-normal:0.5",
        "--interval",
        "central",
        "--format",
        "json",
    ]);
    let central: serde_json::Value = serde_json::from_str(&stdout(&central)).unwrap();
    let shortest: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(central["interval"], "central");
    assert_eq!(shortest["interval"], "shortest");
    let c_lo = central["studies"][1]["lo"].as_f64().unwrap();
    let s_lo = shortest["studies"][1]["lo"].as_f64().unwrap();
    // the CJD posterior is skewed, so the two kinds differ visibly
    assert!((c_lo - s_lo).abs() > 0.01, "central {c_lo} vs shortest {s_lo}");
}

#[test]
fn bounds_json_format_round_trips() {
    let path = data_path("cjd.csv");
    let out = run(&[
        "bounds",
        "--data",
        path.to_str().unwrap(),
        "--prior",
        "half-normal:0.5",
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(parsed["prior"], "half-normal(0.5)");
    let s = &parsed["studies"][1];
    let fe = s["fe_weight"].as_f64().unwrap();
    let coincidence = s["coincidence_weight"].as_f64().unwrap();
    let actual = s["actual_weight"].as_f64().unwrap();
    assert!(fe < coincidence && coincidence < actual);
}

#[test]
fn sweep_scales_reproduces_cjd_coincidence_ladder() {
    let out = run(&[
        "sweep",
        "--sigmas",
        "0.249,0.631",
        "--scales",
        "0.5,1.0",
        "--target",
        "2",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let weights: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!((weights[0] - 0.389).abs() < 0.005, "{weights:?}");
    assert!((weights[1] - 0.521).abs() < 0.005, "{weights:?}");
}

#[test]
fn forest_writes_three_row_svg_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let path = data_path("cjd.csv");
    let svg_a = dir.path().join("a.svg");
    let svg_b = dir.path().join("b.svg");
    for svg in [&svg_a, &svg_b] {
        let out = run(&[
            "forest",
            "--data",
            path.to_str().unwrap(),
            "--prior",
            "half-normal:0.5",
            "--out",
            svg.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let a = std::fs::read(&svg_a).unwrap();
    let b = std::fs::read(&svg_b).unwrap();
    assert_eq!(a, b, "forest output must be byte-deterministic");

    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.matches("<polygon").count(), 1, "one shrinkage diamond");
    assert_eq!(
        text.matches("class=\"marker\"").count(),
        2,
        "two study markers"
    );
    assert!(text.contains("shrinkage (randomized)"));

    // studies-only plot
    let svg_c = dir.path().join("c.svg");
    let out = run(&[
        "forest",
        "--data",
        path.to_str().unwrap(),
        "--prior",
        "half-normal:0.5",
        "--target",
        "none",
        "--out",
        svg_c.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&svg_c).unwrap();
    assert_eq!(text.matches("<polygon").count(), 0);
    assert_eq!(text.matches("class=\"marker\"").count(), 2);
}

#[test]
fn exit_codes_follow_the_contract() {
    // usage: unknown flag
    let out = run(&["analyze", "--nonsense"]);
    assert_eq!(out.status.code(), Some(1));

    // usage: malformed prior and grid
    let out = run(&["bounds", "--sigmas", "1,1", "--prior", "gamma:1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&[
        "sweep",
        "--sigmas",
        "1,1",
        "--prior",
        "half-normal:0.5",
        "--delta",
        "oops",
    ]);
    assert_eq!(out.status.code(), Some(1));

    // data: missing file
    let out = run(&["analyze", "--data", "/nonexistent.csv", "--prior", "half-normal:0.5"]);
    assert_eq!(out.status.code(), Some(2));

    // help and version exit cleanly
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let out = run(&["--version"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn parse_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "study,y,sigma\na,-0.1,0.5\nb,0.2,0\n").unwrap();
    let out = run(&["analyze", "--data", path.to_str().unwrap(), "--prior", "half-normal:0.5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("sigma"), "{err}");

    std::fs::write(&path, "study,y,sigma\na,-0.1,0.5\na,0.2,0.4\n").unwrap();
    let out = run(&["analyze", "--data", path.to_str().unwrap(), "--prior", "half-normal:0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("duplicate"), "{}", stderr(&out));

    std::fs::write(&path, "study,y\na,-0.1\n").unwrap();
    let out = run(&["analyze", "--data", path.to_str().unwrap(), "--prior", "half-normal:0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sigma"), "{}", stderr(&out));
}

#[test]
fn json_dataset_input_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cjd.json");
    std::fs::write(
        &path,
        r#"[{"study": "observational", "y": -0.499, "sigma": 0.249},
            {"study": "randomized", "y": -0.173, "sigma": 0.631}]"#,
    )
    .unwrap();
    let out = run(&["analyze", "--data", path.to_str().unwrap(), "--prior", "half-normal:0.5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("39.5"));
}

#[test]
fn quad_tol_env_var_is_honored_and_validated() {
    let path = data_path("cjd.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_shrinkbound"))
        .args(["analyze", "--data", path.to_str().unwrap(), "--prior", "half-normal:0.5"])
        .env("SHRINKBOUND_QUAD_TOL", "1e-6")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("39.5"));

    let out = Command::new(env!("CARGO_BIN_EXE_shrinkbound"))
        .args(["analyze", "--data", path.to_str().unwrap(), "--prior", "half-normal:0.5"])
        .env("SHRINKBOUND_QUAD_TOL", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_with_code_three() {
    // a uniform prior with an astronomically wide support leaves the
    // posterior mass unresolvable at the subdivision cap
    let path = data_path("cjd.csv");
    let out = run(&["analyze", "--data", path.to_str().unwrap(), "--prior", "uniform:1e300"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn analyze_csv_format_carries_full_precision() {
    let path = data_path("cjd.csv");
    let out = run(&[
        "analyze",
        "--data",
        path.to_str().unwrap(),
        "--prior",
        "half-normal:0.5",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "index,study,y,sigma,fe_weight,coincidence_weight,weight,mean,sd,lo,hi"
    );
    let second = lines.nth(1).unwrap();
    let weight: f64 = second.split(',').nth(6).unwrap().parse().unwrap();
    assert!((weight - 0.3955).abs() < 0.001, "{weight}");
}
