//! Frame-level properties: distortion, ghosting, determinism.

use lidarsim_core::beam::PatternConfig;
use lidarsim_core::ghost::GhostConfig;
use lidarsim_core::io::{encode_pcd, PcdEncoding};
use lidarsim_core::motion::{DistortionConfig, Pose, Trajectory};
use lidarsim_core::scene::{GeometrySpec, MaterialSurface, Scene, SceneDescription, SemanticLabel};
use lidarsim_core::sensor::{simulate_frame, LidarFamily, LidarModel, SimOptions};
use lidarsim_core::Vec3;
use proptest::prelude::*;

fn forward_mems(pps: f64) -> LidarModel {
    LidarModel {
        name: "forward".into(),
        family: LidarFamily::SolidState,
        source: "test".into(),
        pattern: PatternConfig::MemsLissajous {
            az_amplitude_deg: 20.0,
            el_amplitude_deg: 10.0,
            f_x: 110.0,
            f_y: 100.0,
            phase_deg: 45.0,
            points_per_second: pps,
            frame_rate: 10.0,
        },
        range_min: 0.5,
        range_max: 200.0,
        range_noise_sigma: 0.0,
        dropout_probability: 0.0,
        ghost: GhostConfig::disabled(),
    }
}

fn wall(x: f64, smoothness: f64) -> Scene {
    Scene::build(&SceneDescription {
        materials: vec![MaterialSurface::new("wall", smoothness, 0.5, SemanticLabel::Building)],
        geometry: vec![GeometrySpec::Box {
            center: [x + 0.5, 0.0, 0.0],
            size: [1.0, 400.0, 400.0],
            yaw: 0.0,
            material: "wall".into(),
        }],
    })
    .unwrap()
}

fn options(distortion: DistortionConfig) -> SimOptions {
    SimOptions {
        distortion,
        ..SimOptions::default()
    }
}

#[test]
fn approaching_wall_thickens_by_the_subframe_law() {
    let scene = wall(30.0, 0.1);
    let traj = Trajectory::linear(Pose::identity(), Vec3::new(20.0, 0.0, 0.0), 0.0, 1.0).unwrap();
    let frame = simulate_frame(&scene, &forward_mems(20_000.0), &traj, 0, &options(DistortionConfig::subframes(32)), 1).unwrap();
    let xs: Vec<f64> = frame.points.iter().map(|p| p.position[0]).collect();
    let spread = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
    let expected = 20.0 * 0.1 * 31.0 / 32.0;
    assert!((spread - expected).abs() < 1e-9, "spread {spread}");
    assert_eq!(frame.subframe_poses.len(), 32);
    let off = simulate_frame(&scene, &forward_mems(20_000.0), &traj, 0, &options(DistortionConfig::off()), 1).unwrap();
    let xs: Vec<f64> = off.points.iter().map(|p| p.position[0]).collect();
    let spread = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 1e-9);
}

#[test]
fn finer_subframes_approach_continuous_spread() {
    let scene = wall(30.0, 0.1);
    let traj = Trajectory::linear(Pose::identity(), Vec3::new(20.0, 0.0, 0.0), 0.0, 1.0).unwrap();
    let spread = |d: DistortionConfig| {
        let f = simulate_frame(&scene, &forward_mems(20_000.0), &traj, 0, &options(d), 1).unwrap();
        let xs: Vec<f64> = f.points.iter().map(|p| p.position[0]).collect();
        xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min)
    };
    let s4 = spread(DistortionConfig::subframes(4));
    let s64 = spread(DistortionConfig::subframes(64));
    let cont = spread(DistortionConfig::per_point());
    assert!((s4 - 1.5).abs() < 1e-9, "{s4}");
    assert!(s4 < s64 && s64 < cont && cont <= 2.0);
}

#[test]
fn ghost_ratio_zero_equals_disabled() {
    let scene = wall(10.0, 0.99);
    let mut model = forward_mems(20_000.0);
    model.range_noise_sigma = 0.02;
    model.dropout_probability = 0.1;
    let traj = Trajectory::Static(Pose::identity());
    let a = simulate_frame(&scene, &model, &traj, 0, &SimOptions::default(), 3).unwrap();
    model.ghost = GhostConfig {
        enabled: true,
        smoothness_threshold: 0.9,
        trigger_ratio: 0.0,
    };
    let b = simulate_frame(&scene, &model, &traj, 0, &SimOptions::default(), 3).unwrap();
    assert_eq!(encode_pcd(&a.points, PcdEncoding::Binary), encode_pcd(&b.points, PcdEncoding::Binary));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn static_pose_distortion_is_a_no_op(
        x in -5.0f64..5.0, y in -5.0f64..5.0, yaw in -3.0f64..3.0, n in 1u32..64, seed in 0u64..1000,
    ) {
        let scene = wall(30.0, 0.1);
        let mut model = forward_mems(5_000.0);
        model.range_noise_sigma = 0.03;
        model.dropout_probability = 0.05;
        let traj = Trajectory::Static(Pose::from_xyz_rpy(x, y, 1.0, 0.0, 0.0, yaw * 0.1));
        let on = simulate_frame(&scene, &model, &traj, 2, &options(DistortionConfig::subframes(n)), seed).unwrap();
        let off = simulate_frame(&scene, &model, &traj, 2, &options(DistortionConfig::off()), seed).unwrap();
        prop_assert_eq!(&on.points, &off.points);
    }

    #[test]
    fn same_seed_same_frame(seed in 0u64..1000) {
        let scene = wall(12.0, 0.95);
        let mut model = forward_mems(5_000.0);
        model.range_noise_sigma = 0.03;
        model.ghost = GhostConfig::default();
        let traj = Trajectory::Static(Pose::identity());
        let a = simulate_frame(&scene, &model, &traj, 0, &SimOptions::default(), seed).unwrap();
        let b = simulate_frame(&scene, &model, &traj, 0, &SimOptions::default(), seed).unwrap();
        prop_assert_eq!(a.points, b.points);
    }
}
