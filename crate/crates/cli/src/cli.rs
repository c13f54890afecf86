//! Command-line front end.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lidarsim_core::beam::PatternConfig;
use lidarsim_core::ghost::GhostConfig;
use lidarsim_core::io::{
    encode_pcd, from_json, load_scene, parse_lob, parse_pattern_csv, parse_trajectory_csv, read_point_cloud, read_text, to_json,
    write_text, PcdEncoding,
};
use lidarsim_core::metrics::{compute_metrics, LabelFilter, MetricConfig, NucParams, DEFAULT_DISKS, DEFAULT_DISK_RATIO};
use lidarsim_core::motion::{DistortionConfig, Pose, Trajectory};
use lidarsim_core::presets::{builtin_preset_text, load_lidar_preset, preset_catalog};
use lidarsim_core::scene::Scene;
use lidarsim_core::sensor::{simulate_frame, PointCloudFrame, SimOptions};
use lidarsim_core::sweep::{leaderboard_csv, run_sweep, SweepSpec, Weights};

use crate::eval::{evaluate_request, parse_request, SceneContext};
use crate::service::{serve, AppState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "lidarsim", version, about = "LiDAR simulation and infrastructure placement evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate frames of one sensor and write PCD files plus frame metadata.
    Simulate(SimulateArgs),
    /// Compute InfraD and InfraNUC of a world-frame cloud.
    Metrics(MetricsArgs),
    /// Evaluate and rank a set of placement candidates.
    Sweep(SweepArgs),
    /// Run one evaluate request (same JSON as POST /api/evaluate).
    Evaluate(EvaluateArgs),
    /// Start the HTTP evaluation service.
    Serve(ServeArgs),
    /// Inspect the built-in LiDAR catalog.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum PresetAction {
    List {
        #[arg(long)]
        json: bool,
    },
    Show {
        name: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Toggle {
    On,
    Off,
}

fn parse_toggle(s: &str) -> Result<Toggle, String> {
    match s {
        "on" => Ok(Toggle::On),
        "off" => Ok(Toggle::Off),
        _ => Err(format!("expected on or off, got `{s}`")),
    }
}

fn parse_distortion(s: &str) -> Result<DistortionConfig, String> {
    match s {
        "off" => Ok(DistortionConfig::off()),
        "per-point" => Ok(DistortionConfig::per_point()),
        n => match n.parse::<u32>() {
            Ok(0) | Err(_) => Err(format!("expected off, per-point or a positive sub-frame count, got `{n}`")),
            Ok(k) => Ok(DistortionConfig::subframes(k)),
        },
    }
}

fn parse_pose(s: &str) -> Result<Pose, String> {
    let v: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    match v.as_deref() {
        Ok([x, y, z, r, p, w]) if [x, y, z, r, p, w].iter().all(|a| a.is_finite()) => {
            Ok(Pose::from_xyz_rpy(*x, *y, *z, *r, *p, *w))
        }
        _ => Err(format!("expected x,y,z,roll,pitch,yaw (meters, radians), got `{s}`")),
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scene JSON; omitted means an empty scene.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Built-in preset name or preset JSON path.
    #[arg(long)]
    pub preset: String,
    /// Measured scan table `t,azimuth_rad,elevation_rad,channel` replacing the preset's pattern.
    #[arg(long)]
    pub pattern_table: Option<PathBuf>,
    /// Static pose `x,y,z,roll,pitch,yaw`.
    #[arg(long, value_parser = parse_pose, conflicts_with = "trajectory")]
    pub pose: Option<Pose>,
    /// Keyframe CSV `t,x,y,z,roll,pitch,yaw`.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub frames: u64,
    /// `off`, `per-point`, or a sub-frame count.
    #[arg(long, default_value = "off", value_parser = parse_distortion)]
    pub distortion: DistortionConfig,
    /// `off` disables ghosting; `on` enables it with the preset's threshold and ratio.
    #[arg(long, default_value = "on", value_parser = parse_toggle)]
    pub ghost: Toggle,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write points in the world frame instead of the frame-start sensor frame.
    #[arg(long)]
    pub world: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "binary")]
    pub format: PcdEncoding,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// World-frame PCD.
    #[arg(long)]
    pub cloud: PathBuf,
    /// InfraLOB JSON.
    #[arg(long)]
    pub lob: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DISKS)]
    pub disks: usize,
    #[arg(long, default_value_t = DEFAULT_DISK_RATIO)]
    pub disk_ratio: f64,
    /// Labels counted for InfraNUC: `all` or a comma list.
    #[arg(long, default_value = "road", value_parser = LabelFilter::parse)]
    pub labels: LabelFilter,
    /// Labels counted for InfraD.
    #[arg(long, default_value = "all", value_parser = LabelFilter::parse)]
    pub density_labels: LabelFilter,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub spec: PathBuf,
    /// `w_d,w_u`; overrides the weights in the sweep file.
    #[arg(long)]
    pub weights: Option<Weights>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub request: PathBuf,
    /// Default scene for requests without one; the bundled intersection otherwise.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Scene served to every request; the bundled intersection otherwise.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
}

/// Bad invocation that clap cannot detect; exits with the usage code.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_DATA
        }
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Metrics(a) => metrics(a),
        Command::Sweep(a) => sweep(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Serve(a) => serve_cmd(a),
        Command::Presets { action } => presets(action),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => Ok(write_text(p, text)?),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn scene_or_empty(path: Option<&Path>) -> Result<Scene> {
    match path {
        Some(p) => Ok(load_scene(p)?),
        None => Ok(Scene::empty()),
    }
}

#[derive(Serialize)]
struct SimulationMeta<'a> {
    preset: &'a str,
    seed: u64,
    distortion: DistortionConfig,
    ghost: GhostConfig,
    world_frame: bool,
    files: Vec<String>,
    frames: Vec<PointCloudFrame>,
}

fn simulate(a: SimulateArgs) -> Result<()> {
    if a.frames == 0 {
        return Err(UsageError("--frames must be at least 1".into()).into());
    }
    let scene = scene_or_empty(a.scene.as_deref())?;
    let mut model = load_lidar_preset(&a.preset)?;
    model.ghost.enabled = a.ghost == Toggle::On;
    if let Some(path) = &a.pattern_table {
        let samples = parse_pattern_csv(&read_text(path)?)?;
        model.pattern = PatternConfig::Table {
            frame_rate: 1.0 / model.frame_period(),
            samples,
        };
        model.validate()?;
    }
    let trajectory = match (&a.pose, &a.trajectory) {
        (Some(p), None) => Trajectory::Static(*p),
        (None, Some(path)) => parse_trajectory_csv(&read_text(path)?)?,
        (None, None) => Trajectory::Static(Pose::identity()),
        (Some(_), Some(_)) => return Err(UsageError("--pose and --trajectory are exclusive".into()).into()),
    };
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let options = SimOptions {
        distortion: a.distortion,
        ..SimOptions::default()
    };
    let mut files = Vec::new();
    let mut frames = Vec::new();
    for k in 0..a.frames {
        let frame = simulate_frame(&scene, &model, &trajectory, k, &options, a.seed)
            .with_context(|| format!("frame {k}"))?;
        let points = if a.world { frame.to_world() } else { frame.points.clone() };
        let name = format!("frame_{k:06}.pcd");
        let path = a.out.join(&name);
        std::fs::write(&path, encode_pcd(&points, a.format)).with_context(|| format!("writing {}", path.display()))?;
        log::info!("{}: {} points", name, points.len());
        files.push(name);
        frames.push(frame);
    }
    let meta = SimulationMeta {
        preset: &model.name,
        seed: a.seed,
        distortion: a.distortion,
        ghost: model.ghost,
        world_frame: a.world,
        files,
        frames,
    };
    write_text(&a.out.join("frames.json"), &to_json(&meta))?;
    Ok(())
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let cloud = read_point_cloud(&a.cloud)?;
    let lob = parse_lob(&read_text(&a.lob)?).context("reading --lob")?;
    let config = MetricConfig {
        nuc: NucParams {
            disks: a.disks,
            disk_ratio: a.disk_ratio,
            seed: a.seed,
        },
        density_labels: a.density_labels,
        uniformity_labels: a.labels,
    };
    let report = compute_metrics(&cloud, &lob, &config)?;
    emit(a.out.as_deref(), &to_json(&report))?;
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    let mut spec: SweepSpec = from_json("sweep spec", &read_text(&a.spec)?)?;
    if let Some(w) = a.weights {
        spec.weights = w;
    }
    let result = run_sweep(&scene, &spec, a.seed)?;
    let reports_dir = a.out_dir.join("reports");
    std::fs::create_dir_all(&reports_dir).with_context(|| format!("creating {}", reports_dir.display()))?;
    write_text(&a.out_dir.join("leaderboard.csv"), &leaderboard_csv(&result.leaderboard))?;
    write_text(&a.out_dir.join("sweep.json"), &to_json(&result))?;
    for r in &result.reports {
        write_text(&reports_dir.join(format!("{}.json", r.candidate_id)), &to_json(r))?;
    }
    for e in &result.leaderboard {
        log::info!("#{} {} score {:.4}", e.rank, e.candidate_id, e.score);
    }
    Ok(())
}

fn context_for(scene: Option<&Path>) -> Result<SceneContext> {
    Ok(match scene {
        Some(p) => SceneContext {
            id: p
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| anyhow!("scene path has no file name"))?
                .to_string(),
            scene: load_scene(p)?,
        },
        None => SceneContext::bundled(),
    })
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let ctx = context_for(a.scene.as_deref())?;
    let body = std::fs::read(&a.request).with_context(|| format!("reading {}", a.request.display()))?;
    let req = parse_request(&body)?;
    let resp = evaluate_request(&ctx, &req)?;
    emit(a.out.as_deref(), &resp.to_json())?;
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let ctx = context_for(a.scene.as_deref())?;
    log::info!("scene `{}` with {} triangles", ctx.id, ctx.scene.triangles().len());
    let state = Arc::new(AppState { ctx });
    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    rt.block_on(serve(state, (a.host, a.port).into()))
        .context("serving")?;
    Ok(())
}

fn presets(action: PresetAction) -> Result<()> {
    match action {
        PresetAction::List { json } => {
            let cat = preset_catalog();
            if json {
                emit(None, &to_json(&cat))?;
            } else {
                let mut s = String::new();
                for p in &cat {
                    let family = serde_json::to_value(p.family).expect("family serializes");
                    s.push_str(&format!(
                        "{:<18} {:<13} {:>5.1} Hz\n",
                        p.name,
                        family.as_str().unwrap_or_default(),
                        1.0 / p.frame_period
                    ));
                }
                emit(None, &s)?;
            }
        }
        PresetAction::Show { name } => match builtin_preset_text(&name) {
            Some(text) => emit(None, text)?,
            None => {
                let m = load_lidar_preset(&name)?;
                emit(None, &lidarsim_core::presets::preset_to_json(&m))?;
            }
        },
    }
    Ok(())
}
