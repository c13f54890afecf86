//! End-to-end runs of the `lidarsim` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lidarsim_core::io::{encode_pcd, to_json, PcdEncoding};
use lidarsim_core::metrics::{InfraLob, NucParams};
use lidarsim_core::scene::SemanticLabel;
use lidarsim_core::sensor::LidarPoint;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lidarsim"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .to_str()
        .unwrap()
        .to_string()
}

fn scene_path() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenes/intersection.json")
        .to_str()
        .unwrap()
        .to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn road(x: f64, y: f64) -> LidarPoint {
    LidarPoint {
        position: [x, y, 0.0],
        intensity: 0.3,
        timestamp: 0.0,
        label: SemanticLabel::Road,
        is_ghost: false,
        channel: 0,
    }
}

fn write_lob(dir: &Path, half: f64) -> PathBuf {
    let lob = InfraLob {
        center: [0.0, 0.0],
        half_extents: [half, half],
        yaw: 0.0,
        z_band: [-1.0, 1.0],
    };
    let p = dir.join("lob.json");
    std::fs::write(&p, to_json(&lob)).unwrap();
    p
}

fn write_cloud(dir: &Path, pts: &[LidarPoint]) -> PathBuf {
    let p = dir.join("cloud.pcd");
    std::fs::write(&p, encode_pcd(pts, PcdEncoding::Binary)).unwrap();
    p
}

fn stdout_json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn simulate_empty_scene() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--preset", "velodyne_vlp16", "--out", s(dir.path()), "--format", "ascii"]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("frame_000000.pcd")).unwrap();
    assert!(text.contains("\nPOINTS 0\n"));
    assert!(dir.path().join("frames.json").is_file());
}

fn simulate_to(dir: &Path, extra: &[&str]) -> Vec<u8> {
    let scene = scene_path();
    let mut args = vec![
        "simulate",
        "--scene",
        &scene,
        "--preset",
        "velodyne_vlp16",
        "--pose",
        "10,10,5,0,0.1,0.3",
        "--frames",
        "2",
        "--seed",
        "99",
        "--out",
        s(dir),
    ];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut bytes = std::fs::read(dir.join("frame_000000.pcd")).unwrap();
    bytes.extend(std::fs::read(dir.join("frame_000001.pcd")).unwrap());
    bytes
}

#[test]
fn simulate_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let x = simulate_to(a.path(), &[]);
    let y = simulate_to(b.path(), &[]);
    assert_eq!(x, y);
    assert_eq!(
        std::fs::read(a.path().join("frames.json")).unwrap(),
        std::fs::read(b.path().join("frames.json")).unwrap()
    );
    let text = String::from_utf8_lossy(&x[..400]).to_string();
    assert!(!text.contains("POINTS 0\n"), "{text}");
}

#[test]
fn static_distortion_matches_off() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let on = simulate_to(a.path(), &["--distortion", "32"]);
    let off = simulate_to(b.path(), &["--distortion", "off"]);
    assert_eq!(on, off);
}

#[test]
fn simulate_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--preset", "velodyne_vlp16", "--distortion", "0", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["simulate", "--preset", "velodyne_vlp16", "--pose", "1,2,3", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    let bad_scene = dir.path().join("bad.json");
    std::fs::write(&bad_scene, "{\"materials\": []}").unwrap();
    let o = run(&["simulate", "--scene", s(&bad_scene), "--preset", "velodyne_vlp16", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("geometry"));
}

#[test]
fn simulate_with_a_measured_pattern_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("pattern.csv");
    std::fs::write(
        &table,
        "t,azimuth_rad,elevation_rad,channel\n0,0,-0.5,0\n0.001,1.5,-0.6,1\n0.002,3.0,-0.7,2\n",
    )
    .unwrap();
    let scene = scene_path();
    let out = dir.path().join("out");
    let o = run(&[
        "simulate", "--scene", &scene, "--preset", "velodyne_vlp16", "--pattern-table", s(&table), "--pose",
        "0,0,5,0,0,0", "--ghost", "off", "--format", "ascii", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("frame_000000.pcd")).unwrap();
    assert!(text.contains("\nPOINTS 3\n"), "{text}");

    std::fs::write(&table, "t,azimuth_rad,elevation_rad,channel\n0.002,0,-0.5,0\n0.001,0,-0.5,0\n").unwrap();
    let o = run(&[
        "simulate", "--scene", &scene, "--preset", "velodyne_vlp16", "--pattern-table", s(&table), "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_then_metrics_in_world_frame() {
    let dir = tempfile::tempdir().unwrap();
    let scene = scene_path();
    let o = run(&[
        "simulate", "--scene", &scene, "--preset", "ouster_os1_64", "--pose", "14,14,5,0,0,0", "--world", "--out",
        s(dir.path()),
    ]);
    assert!(o.status.success());
    let cloud = dir.path().join("frame_000000.pcd");
    let lob = data("intersection_lob.json");
    let report = stdout_json(&run(&["metrics", "--cloud", s(&cloud), "--lob", &lob, "--seed", "1"]));
    assert!(report["infra_d"].as_f64().unwrap() > 1.0);
    assert!(report["infra_nuc"].as_f64().unwrap() > 0.0);
    assert_eq!(report["config"]["nuc"]["disks"], 100);
}

#[test]
fn metrics_density_example() {
    let dir = tempfile::tempdir().unwrap();
    let pts: Vec<LidarPoint> = (0..500).map(|i| road(-4.9 + (i % 25) as f64 * 0.4, -4.9 + (i / 25) as f64 * 0.5)).collect();
    let cloud = write_cloud(dir.path(), &pts);
    let lob = write_lob(dir.path(), 5.0);
    let out = dir.path().join("report.json");
    let o = run(&["metrics", "--cloud", s(&cloud), "--lob", s(&lob), "--out", s(&out)]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["infra_d"].as_f64().unwrap(), 5.0);
    assert_eq!(report["point_count"], 500);
}

/// A point covered by disk `i` only, in world coordinates.
fn exclusive(centers: &[[f64; 2]], r: f64, i: usize) -> Option<[f64; 2]> {
    let c = centers[i];
    (0..400).find_map(|k| {
        let a = k as f64 * 0.7;
        let rho = r * 0.9 * (k % 20) as f64 / 20.0;
        let q = [c[0] + rho * a.cos(), c[1] + rho * a.sin()];
        let covering = centers
            .iter()
            .filter(|o| (q[0] - o[0]).powi(2) + (q[1] - o[1]).powi(2) <= r * r * 0.99)
            .count();
        let clear = centers
            .iter()
            .filter(|o| (q[0] - o[0]).powi(2) + (q[1] - o[1]).powi(2) <= r * r * 1.01)
            .count();
        (covering == 1 && clear == 1).then_some(q)
    })
}

#[test]
fn metrics_closed_forms_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let lob_path = write_lob(dir.path(), 50.0);
    let lob = InfraLob {
        center: [0.0, 0.0],
        half_extents: [50.0, 50.0],
        yaw: 0.0,
        z_band: [-1.0, 1.0],
    };
    let params = NucParams {
        disks: 100,
        disk_ratio: 0.01,
        seed: 42,
    };
    let centers = params.disk_centers(&lob).unwrap();
    let r = params.disk_radius(&lob);
    let q = (0..100).find_map(|i| exclusive(&centers, r, i)).unwrap();
    let cloud = write_cloud(dir.path(), &vec![road(q[0], q[1]); 300]);
    let args = ["--disks", "100", "--disk-ratio", "0.01", "--seed", "42", "--labels", "road"];
    let mut full = vec!["metrics", "--cloud", s(&cloud), "--lob", s(&lob_path)];
    full.extend_from_slice(&args);
    let report = stdout_json(&run(&full));
    let nuc = report["infra_nuc"].as_f64().unwrap();
    assert!((nuc - 99f64.sqrt()).abs() < 1e-9, "{nuc}");

    // Uniform-exact: with D = 10 and p = 0.01, five points per disk and N = 500.
    let sparse = NucParams { disks: 10, ..params };
    let centers = sparse.disk_centers(&lob).unwrap();
    let mut pts = Vec::new();
    for i in 0..10 {
        let q = exclusive(&centers, r, i).expect("exclusive area");
        pts.extend(std::iter::repeat_n(road(q[0], q[1]), 5));
    }
    let outside = (-49..=49)
        .flat_map(|x| (-49..=49).map(move |y| [x as f64, y as f64]))
        .find(|q| centers.iter().all(|c| (q[0] - c[0]).powi(2) + (q[1] - c[1]).powi(2) > r * r * 1.01))
        .unwrap();
    pts.extend(std::iter::repeat_n(road(outside[0], outside[1]), 450));
    let cloud = write_cloud(dir.path(), &pts);
    let report = stdout_json(&run(&[
        "metrics", "--cloud", s(&cloud), "--lob", s(&lob_path), "--disks", "10", "--disk-ratio", "0.01", "--seed", "42",
    ]));
    assert_eq!(report["infra_nuc"].as_f64().unwrap(), 0.0);
}

#[test]
fn metrics_empty_region_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = write_cloud(dir.path(), &[road(100.0, 100.0)]);
    let lob = write_lob(dir.path(), 5.0);
    let o = run(&["metrics", "--cloud", s(&cloud), "--lob", s(&lob)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("undefined"));
}

fn sweep_spec(dir: &Path) -> PathBuf {
    let spec = serde_json::json!({
        "lob": {"center": [0, 0], "half_extents": [15, 15], "yaw": 0, "z_band": [-0.3, 0.3]},
        "grid": {
            "anchors": [
                {"preset": "velodyne_vlp16", "position": [14, 14, 5], "roll": [0], "pitch": [0, 0.2, 0.6], "yaw": [-2.3]},
                {"preset": "velodyne_vlp16", "position": [-14, -14, 5], "roll": [0], "pitch": [0, 0.2, 0.6], "yaw": [0.8]}
            ],
            "sensor_counts": [1]
        }
    });
    let p = dir.join("spec.json");
    std::fs::write(&p, spec.to_string()).unwrap();
    p
}

fn sweep_into(spec: &Path, out: &Path, extra: &[&str]) -> String {
    let scene = scene_path();
    let mut args = vec!["sweep", "--scene", &scene, "--spec", s(spec), "--seed", "3", "--out-dir", s(out)];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read_to_string(out.join("leaderboard.csv")).unwrap()
}

#[test]
fn sweep_leaderboard() {
    let dir = tempfile::tempdir().unwrap();
    let spec = sweep_spec(dir.path());
    let a = sweep_into(&spec, &dir.path().join("a"), &[]);
    let b = sweep_into(&spec, &dir.path().join("b"), &[]);
    assert_eq!(a, b);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "candidate_id,InfraD,InfraNUC,score,rank");
    assert_eq!(lines.len(), 7);
    let ranks: Vec<usize> = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(ranks, (1..=6).collect::<Vec<_>>());
    assert_eq!(std::fs::read_dir(dir.path().join("a/reports")).unwrap().count(), 6);

    let dens = sweep_into(&spec, &dir.path().join("c"), &["--weights", "1,0"]);
    let d: Vec<f64> = dens.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(d.windows(2).all(|w| w[0] >= w[1]), "{d:?}");
}

#[test]
fn presets_commands() {
    let o = run(&["presets", "list", "--json"]);
    let list = stdout_json(&o);
    assert_eq!(list.as_array().unwrap().len(), 14);
    let o = run(&["presets", "show", "livox_mid40"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("\"w1_rad_per_s\": 763.8"));
    assert_eq!(run(&["presets", "show", "nope"]).status.code(), Some(2));
    assert_eq!(run(&["presets"]).status.code(), Some(1));
}

#[test]
fn evaluate_bundled_request() {
    let req = data("evaluate_request.json");
    let a = run(&["evaluate", "--request", &req]);
    let b = run(&["evaluate", "--request", &req]);
    assert_eq!(a.stdout, b.stdout);
    let v = stdout_json(&a);
    assert_eq!(v["seed"], 7);
    assert_eq!(v["preview"]["positions"].as_array().unwrap().len(), 5000);
}
