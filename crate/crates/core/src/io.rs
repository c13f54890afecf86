//! File formats: JSON scenes and reports, CSV trajectories and pattern tables, PCD clouds.

use std::fmt::Write as _;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::beam::BeamSample;
use crate::metrics::InfraLob;
use crate::motion::{MotionError, Pose, Trajectory};
use crate::scene::{Scene, SceneDescription, SceneError, SemanticLabel};
use crate::sensor::LidarPoint;

#[derive(Debug, Error)]
pub enum IoError {
    /// serde_json errors carry the line and column of the failure.
    #[error("{what}: {source}")]
    Json {
        what: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed PCD header: {0}")]
    PcdHeader(String),
    #[error("PCD data line {line}: {msg}")]
    PcdRecord { line: usize, msg: String },
    #[error("truncated PCD payload: header declares {declared} points, found {found}")]
    PcdTruncated { declared: usize, found: usize },
    #[error("{what}, record {record}: {msg}")]
    Csv { what: String, record: usize, msg: String },
    #[error("trajectory: {0}")]
    Trajectory(#[from] MotionError),
    #[error("{0}")]
    Invalid(String),
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(file_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(file_err(path))
}

/// Strict JSON decode; unknown or missing fields are errors.
pub fn from_json<T: DeserializeOwned>(what: &str, text: &str) -> Result<T, IoError> {
    serde_json::from_str(text).map_err(|source| IoError::Json {
        what: what.to_string(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes to JSON");
    s.push('\n');
    s
}

// ---------------------------------------------------------------- scenes

/// Parses a scene file and checks that every geometry item names a declared material.
pub fn parse_scene(text: &str) -> Result<SceneDescription, IoError> {
    let desc: SceneDescription = from_json("scene", text)?;
    Scene::build(&desc)?;
    Ok(desc)
}

pub fn load_scene(path: &Path) -> Result<Scene, IoError> {
    let desc = parse_scene(&read_text(path)?)?;
    Ok(Scene::build(&desc)?)
}

pub fn scene_to_json(desc: &SceneDescription) -> String {
    to_json(desc)
}

/// Four-way urban intersection: 30 m wide roads between four corner blocks, one glass facade.
pub fn sample_intersection() -> SceneDescription {
    parse_scene(include_str!("../scenes/intersection.json")).expect("bundled scene is valid")
}

pub fn parse_lob(text: &str) -> Result<InfraLob, IoError> {
    let lob: InfraLob = from_json("lob", text)?;
    lob.validate().map_err(|e| IoError::Invalid(e.to_string()))?;
    Ok(lob)
}

// ---------------------------------------------------------------- PCD

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PcdEncoding {
    #[default]
    Ascii,
    Binary,
}

impl std::str::FromStr for PcdEncoding {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ascii" => Ok(PcdEncoding::Ascii),
            "binary" => Ok(PcdEncoding::Binary),
            other => Err(format!("unknown PCD encoding `{other}` (expected ascii or binary)")),
        }
    }
}

const PCD_FIELDS: &str = "x y z intensity timestamp label ghost channel";
const PCD_SIZE: &str = "4 4 4 4 4 4 4 4";
const PCD_TYPE: &str = "F F F F F U U U";
const PCD_COUNT: &str = "1 1 1 1 1 1 1 1";
const PCD_RECORD_BYTES: usize = 32;

fn pcd_header(n: usize, encoding: PcdEncoding) -> String {
    let data = match encoding {
        PcdEncoding::Ascii => "ascii",
        PcdEncoding::Binary => "binary",
    };
    format!(
        "# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\nFIELDS {PCD_FIELDS}\nSIZE {PCD_SIZE}\nTYPE {PCD_TYPE}\nCOUNT {PCD_COUNT}\nWIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\nDATA {data}\n"
    )
}

/// Serializes points at PCD precision (4-byte floats and unsigned integers).
pub fn encode_pcd(points: &[LidarPoint], encoding: PcdEncoding) -> Vec<u8> {
    let mut out = pcd_header(points.len(), encoding).into_bytes();
    match encoding {
        PcdEncoding::Ascii => {
            let mut line = String::new();
            for p in points {
                line.clear();
                let _ = writeln!(
                    line,
                    "{} {} {} {} {} {} {} {}",
                    p.position[0] as f32,
                    p.position[1] as f32,
                    p.position[2] as f32,
                    p.intensity as f32,
                    p.timestamp as f32,
                    p.label.code(),
                    p.is_ghost as u32,
                    p.channel
                );
                out.extend_from_slice(line.as_bytes());
            }
        }
        PcdEncoding::Binary => {
            out.reserve(points.len() * PCD_RECORD_BYTES);
            for p in points {
                for v in [p.position[0], p.position[1], p.position[2], p.intensity, p.timestamp] {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
                for v in [p.label.code(), p.is_ghost as u32, p.channel] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    out
}

pub fn write_point_cloud(points: &[LidarPoint], path: &Path, encoding: PcdEncoding) -> Result<(), IoError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(file_err(path))?);
    f.write_all(&encode_pcd(points, encoding)).map_err(file_err(path))?;
    f.flush().map_err(file_err(path))
}

pub fn read_point_cloud(path: &Path) -> Result<Vec<LidarPoint>, IoError> {
    let f = std::fs::File::open(path).map_err(file_err(path))?;
    decode_pcd(std::io::BufReader::new(f))
}

fn point_from_parts(xyzit: [f32; 5], label: u32, ghost: u32, channel: u32) -> Result<LidarPoint, String> {
    let label = SemanticLabel::from_code(label).ok_or_else(|| format!("unknown label code {label}"))?;
    let is_ghost = match ghost {
        0 => false,
        1 => true,
        g => return Err(format!("ghost flag must be 0 or 1, got {g}")),
    };
    Ok(LidarPoint {
        position: [xyzit[0] as f64, xyzit[1] as f64, xyzit[2] as f64],
        intensity: xyzit[3] as f64,
        timestamp: xyzit[4] as f64,
        label,
        is_ghost,
        channel,
    })
}

/// Reads the layout written by [`encode_pcd`]; other field layouts are rejected.
pub fn decode_pcd<R: BufRead>(mut reader: R) -> Result<Vec<LidarPoint>, IoError> {
    let bad = |m: String| IoError::PcdHeader(m);
    const KEYS: [&str; 10] = [
        "VERSION", "FIELDS", "SIZE", "TYPE", "COUNT", "WIDTH", "HEIGHT", "VIEWPOINT", "POINTS", "DATA",
    ];
    let mut values: Vec<String> = Vec::with_capacity(KEYS.len());
    let mut line = String::new();
    while values.len() < KEYS.len() {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| bad(format!("read error: {e}")))?;
        if n == 0 {
            return Err(bad(format!("missing {} line", KEYS[values.len()])));
        }
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, rest) = trimmed.split_once(char::is_whitespace).unwrap_or((trimmed, ""));
        let expected = KEYS[values.len()];
        if key != expected {
            return Err(bad(format!("expected {expected}, found `{key}`")));
        }
        values.push(rest.split_whitespace().collect::<Vec<_>>().join(" "));
    }
    let check = |i: usize, want: &str| {
        if values[i] != want {
            Err(bad(format!("{} must be `{want}`, got `{}`", KEYS[i], values[i])))
        } else {
            Ok(())
        }
    };
    if !matches!(values[0].as_str(), "0.7" | ".7") {
        return Err(bad(format!("unsupported VERSION `{}`", values[0])));
    }
    check(1, PCD_FIELDS)?;
    check(2, PCD_SIZE)?;
    check(3, PCD_TYPE)?;
    check(4, PCD_COUNT)?;
    let num = |i: usize| {
        values[i]
            .parse::<usize>()
            .map_err(|_| bad(format!("{} must be a non-negative integer, got `{}`", KEYS[i], values[i])))
    };
    let (width, height, declared) = (num(5)?, num(6)?, num(8)?);
    if width.checked_mul(height) != Some(declared) {
        return Err(bad(format!("WIDTH*HEIGHT = {width}*{height} does not equal POINTS {declared}")));
    }
    let mut points = Vec::with_capacity(declared.min(1 << 24));
    match values[9].as_str() {
        "ascii" => {
            let mut lineno = 0;
            let mut buf = String::new();
            while points.len() < declared {
                buf.clear();
                let n = reader
                    .read_line(&mut buf)
                    .map_err(|e| IoError::PcdRecord { line: lineno, msg: e.to_string() })?;
                if n == 0 {
                    break;
                }
                lineno += 1;
                if buf.trim().is_empty() {
                    continue;
                }
                let rec = |msg: String| IoError::PcdRecord { line: lineno, msg };
                let tok: Vec<&str> = buf.split_whitespace().collect();
                if tok.len() != 8 {
                    return Err(rec(format!("expected 8 values, found {}", tok.len())));
                }
                let mut f = [0f32; 5];
                for (k, t) in tok[..5].iter().enumerate() {
                    f[k] = t.parse().map_err(|_| rec(format!("bad float `{t}`")))?;
                }
                let mut u = [0u32; 3];
                for (k, t) in tok[5..].iter().enumerate() {
                    u[k] = t.parse().map_err(|_| rec(format!("bad unsigned `{t}`")))?;
                }
                points.push(point_from_parts(f, u[0], u[1], u[2]).map_err(rec)?);
            }
            if points.len() < declared {
                return Err(IoError::PcdTruncated {
                    declared,
                    found: points.len(),
                });
            }
        }
        "binary" => {
            let mut payload = Vec::new();
            reader
                .take((declared * PCD_RECORD_BYTES) as u64)
                .read_to_end(&mut payload)
                .map_err(|e| IoError::PcdRecord { line: 0, msg: e.to_string() })?;
            if payload.len() < declared * PCD_RECORD_BYTES {
                return Err(IoError::PcdTruncated {
                    declared,
                    found: payload.len() / PCD_RECORD_BYTES,
                });
            }
            for (i, rec) in payload.chunks_exact(PCD_RECORD_BYTES).enumerate() {
                let word = |k: usize| [rec[4 * k], rec[4 * k + 1], rec[4 * k + 2], rec[4 * k + 3]];
                let f = [0, 1, 2, 3, 4].map(|k| f32::from_le_bytes(word(k)));
                let u = [5, 6, 7].map(|k| u32::from_le_bytes(word(k)));
                points.push(
                    point_from_parts(f, u[0], u[1], u[2]).map_err(|msg| IoError::PcdRecord { line: i + 1, msg })?,
                );
            }
        }
        other => return Err(bad(format!("unsupported DATA `{other}` (ascii or binary)"))),
    }
    Ok(points)
}

// ---------------------------------------------------------------- CSV

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes())
}

fn check_header(what: &str, rdr: &mut csv::Reader<&[u8]>, want: &[&str]) -> Result<(), IoError> {
    let header = rdr.headers().map_err(|e| IoError::Csv {
        what: what.into(),
        record: 0,
        msg: e.to_string(),
    })?;
    let got: Vec<&str> = header.iter().collect();
    if got != want {
        return Err(IoError::Csv {
            what: what.into(),
            record: 0,
            msg: format!("header must be `{}`, got `{}`", want.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn csv_rows<T: DeserializeOwned>(what: &str, text: &str, header: &[&str]) -> Result<Vec<T>, IoError> {
    let mut rdr = csv_reader(text);
    check_header(what, &mut rdr, header)?;
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| IoError::Csv {
                what: what.into(),
                record: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

const TRAJECTORY_HEADER: [&str; 7] = ["t", "x", "y", "z", "roll", "pitch", "yaw"];

/// Keyframes `t,x,y,z,roll,pitch,yaw` (seconds, meters, radians).
pub fn parse_trajectory_csv(text: &str) -> Result<Trajectory, IoError> {
    let rows: Vec<[f64; 7]> = csv_rows("trajectory", text, &TRAJECTORY_HEADER)?;
    let keyframes = rows
        .into_iter()
        .map(|[t, x, y, z, r, p, w]| (t, Pose::from_xyz_rpy(x, y, z, r, p, w)))
        .collect();
    Ok(Trajectory::keyframes(keyframes)?)
}

pub fn trajectory_to_csv(keyframes: &[(f64, Pose)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRAJECTORY_HEADER).expect("in-memory write");
    for (t, pose) in keyframes {
        let (r, p, y) = pose.rpy();
        let v = pose.translation;
        w.serialize([*t, v.x, v.y, v.z, r, p, y]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

const PATTERN_HEADER: [&str; 4] = ["t", "azimuth_rad", "elevation_rad", "channel"];

/// Tabulated beam pattern `t,azimuth_rad,elevation_rad,channel`.
pub fn parse_pattern_csv(text: &str) -> Result<Vec<BeamSample>, IoError> {
    let rows: Vec<(f64, f64, f64, u32)> = csv_rows("pattern table", text, &PATTERN_HEADER)?;
    Ok(rows
        .into_iter()
        .map(|(t, azimuth, elevation, channel)| BeamSample {
            azimuth,
            elevation,
            t_offset: t,
            channel,
        })
        .collect())
}

pub fn pattern_to_csv(samples: &[BeamSample]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(PATTERN_HEADER).expect("in-memory write");
    for s in samples {
        w.serialize((s.t_offset, s.azimuth, s.elevation, s.channel)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}
