use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn phdtrack(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phdtrack"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = phdtrack(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Bundled-size map, truth and reports in `dir`.
fn setup(dir: &Path) {
    ok(dir, &["genmap", "--seed", "2", "--out", "map.txt"]);
    ok(
        dir,
        &[
            "simulate",
            "--map",
            "map.txt",
            "--seed",
            "4",
            "--truth",
            "truth.csv",
            "--reports",
            "reports.csv",
        ],
    );
}

fn summary_value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from {text}"))
        .to_string()
}

#[test]
fn out_of_range_miss_probability_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let out = phdtrack(
        dir.path(),
        &[
            "track",
            "--map",
            "map.txt",
            "--reports",
            "reports.csv",
            "--pfn",
            "1.5",
            "--out",
            "t.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--pfn"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = phdtrack(dir.path(), &["genmap", "--out", "m.txt", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_fails_at_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let out = phdtrack(
        dir.path(),
        &[
            "track",
            "--map",
            "absent.txt",
            "--reports",
            "absent.csv",
            "--pfn",
            "0.1",
            "--out",
            "t.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.txt"));
}

#[test]
fn malformed_reports_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "genmap", "--out", "map.txt", "--width", "20", "--height", "20",
        ],
    );
    fs::write(
        dir.path().join("bad.csv"),
        "step,obs_id,x,y,speed,heading,sx,sy,ss,sh\n0,0,1,2,3\n",
    )
    .unwrap();
    let out = phdtrack(
        dir.path(),
        &[
            "track",
            "--map",
            "map.txt",
            "--reports",
            "bad.csv",
            "--pfn",
            "0.1",
            "--out",
            "t.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("line: 2"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn tracking_then_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    ok(
        d,
        &[
            "track",
            "--map",
            "map.txt",
            "--reports",
            "reports.csv",
            "--pfn",
            "0.1",
            "--seed",
            "4",
            "--out",
            "tracks.csv",
            "--timing",
            "timing.csv",
        ],
    );
    ok(
        d,
        &[
            "eval",
            "--truth",
            "truth.csv",
            "--tracks",
            "tracks.csv",
            "--out",
            "metrics.csv",
            "--summary",
            "summary.txt",
            "--ospa",
            "500",
        ],
    );

    let tracks = fs::read_to_string(d.join("tracks.csv")).unwrap();
    assert!(tracks.starts_with("step,n_hat,peak_idx,peak_x,peak_y,peak_mass\n"));
    let timing = fs::read_to_string(d.join("timing.csv")).unwrap();
    assert_eq!(timing.lines().count(), 170);

    let summary = fs::read_to_string(d.join("summary.txt")).unwrap();
    assert_eq!(summary_value(&summary, "steps"), "169");
    let median: f64 = summary_value(&summary, "median_error").parse().unwrap();
    assert!(median < 100.0, "{summary}");
    assert!(summary_value(&summary, "ospa_mean").parse::<f64>().unwrap() <= 500.0);
}

#[test]
fn perfect_tracks_score_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    // Tracks that put one peak on every true vehicle.
    let truth = fs::read_to_string(d.join("truth.csv")).unwrap();
    let mut rows: Vec<(usize, String, String)> = truth
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[2].to_string(), f[3].to_string())
        })
        .collect();
    rows.sort_by_key(|r| r.0);
    let mut tracks = String::from("step,n_hat,peak_idx,peak_x,peak_y,peak_mass\n");
    for step in 0..169 {
        let here: Vec<_> = rows.iter().filter(|r| r.0 == step).collect();
        if here.is_empty() {
            tracks.push_str(&format!("{step},0,-1,,,\n"));
        }
        for (i, r) in here.iter().enumerate() {
            tracks.push_str(&format!("{step},{},{i},{},{},1\n", here.len(), r.1, r.2));
        }
    }
    fs::write(d.join("perfect.csv"), tracks).unwrap();
    ok(
        d,
        &[
            "eval",
            "--truth",
            "truth.csv",
            "--tracks",
            "perfect.csv",
            "--out",
            "m.csv",
            "--summary",
            "s.txt",
        ],
    );
    let summary = fs::read_to_string(d.join("s.txt")).unwrap();
    assert_eq!(
        summary_value(&summary, "median_error")
            .parse::<f64>()
            .unwrap(),
        0.0
    );
    assert_eq!(
        summary_value(&summary, "cardinality_fraction")
            .parse::<f64>()
            .unwrap(),
        1.0
    );
    assert_eq!(summary_value(&summary, "track_losses"), "0");
}

const ONE_VEHICLE: &str = "dt = 5\nsteps = 60\np_fn = 0.1\nsigma_r = 50, 50, 1, 0.39269908169872414\n\n\
vehicle 0\nappear = 0\ndisappear = 60\nspeed_mean = 8.3\nspeed_std = 0.1\nwaypoints = 2000,2000; 2000,8000\n";

#[test]
fn bootstrap_filter_follows_a_single_vehicle() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["genmap", "--out", "map.txt"]);
    fs::write(d.join("one.txt"), ONE_VEHICLE).unwrap();
    ok(
        d,
        &[
            "simulate",
            "--map",
            "map.txt",
            "--scenario",
            "one.txt",
            "--seed",
            "3",
            "--truth",
            "truth.csv",
            "--reports",
            "reports.csv",
        ],
    );
    let track = [
        "track",
        "--map",
        "map.txt",
        "--reports",
        "reports.csv",
        "--pfn",
        "0.1",
        "--filter",
        "bootstrap",
        "--out",
        "b.csv",
    ];
    ok(d, &[&track[..], &["--dump-particles"]].concat());
    assert!(d.join("b.particles.csv").exists());
    ok(
        d,
        &[
            "eval",
            "--truth",
            "truth.csv",
            "--tracks",
            "b.csv",
            "--out",
            "m.csv",
            "--summary",
            "s.txt",
        ],
    );
    let summary = fs::read_to_string(d.join("s.txt")).unwrap();
    assert!(
        summary_value(&summary, "median_error")
            .parse::<f64>()
            .unwrap()
            < 100.0,
        "{summary}"
    );

    let out = phdtrack(d, &[&track[..], &["--mixture", "m.csv"]].concat());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bootstrap_filter_reports_the_step_it_cannot_explain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let out = phdtrack(
        d,
        &[
            "track",
            "--map",
            "map.txt",
            "--reports",
            "reports.csv",
            "--pfn",
            "0.1",
            "--filter",
            "bootstrap",
            "--out",
            "b.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("step ") && stderr.contains("all weights are zero"),
        "{stderr}"
    );
}

#[test]
fn same_seed_same_tracks() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    for (out, seed) in [("a.csv", "1"), ("b.csv", "1"), ("c.csv", "2")] {
        ok(
            d,
            &[
                "track",
                "--map",
                "map.txt",
                "--reports",
                "reports.csv",
                "--pfn",
                "0.1",
                "--seed",
                seed,
                "--out",
                out,
            ],
        );
    }
    let a = fs::read(d.join("a.csv")).unwrap();
    assert_eq!(a, fs::read(d.join("b.csv")).unwrap());
    assert_ne!(a, fs::read(d.join("c.csv")).unwrap());
}

#[test]
fn scenario_file_round_trips_through_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["genmap", "--out", "map.txt"]);
    ok(d, &["scenario", "--out", "scenario.txt"]);
    ok(
        d,
        &[
            "simulate",
            "--map",
            "map.txt",
            "--scenario",
            "scenario.txt",
            "--seed",
            "4",
            "--truth",
            "t1.csv",
            "--reports",
            "r1.csv",
        ],
    );
    ok(
        d,
        &[
            "simulate",
            "--map",
            "map.txt",
            "--seed",
            "4",
            "--truth",
            "t2.csv",
            "--reports",
            "r2.csv",
        ],
    );
    assert_eq!(
        fs::read(d.join("t1.csv")).unwrap(),
        fs::read(d.join("t2.csv")).unwrap()
    );
    assert_eq!(
        fs::read(d.join("r1.csv")).unwrap(),
        fs::read(d.join("r2.csv")).unwrap()
    );
}
