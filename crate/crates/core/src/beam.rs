//! Emission schedules for the supported scanner families.
//!
//! Every generator returns exactly one frame of [`BeamSample`]s ordered by `t_offset`.
//! Angles are radians: azimuth from sensor +x, counter-clockwise about +z, and elevation
//! above the sensor's horizontal plane.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum PatternError {
    #[error("channel count must be at least 1")]
    ZeroChannels,
    #[error("upper FOV ({upper}) must exceed lower FOV ({lower})")]
    InvalidFov { upper: f64, lower: f64 },
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be non-negative and finite, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("elevation table is empty")]
    EmptyTable,
    #[error("elevation table must be strictly increasing (entry {index})")]
    UnsortedTable { index: usize },
    #[error("elevation table entry {index} ({value} rad) lies outside [-pi/2, pi/2]")]
    ElevationOutOfRange { index: usize, value: f64 },
    #[error("pattern row {index}: timestamp decreases")]
    DecreasingTimestamp { index: usize },
    #[error("pattern row {index}: non-finite value")]
    NonFiniteRow { index: usize },
    #[error("pattern row {index}: t_offset {t} outside the frame period {period}")]
    OutsideFrame { index: usize, t: f64, period: f64 },
}

/// One scheduled laser emission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSample {
    pub azimuth: f64,
    pub elevation: f64,
    pub t_offset: f64,
    pub channel: u32,
}

impl BeamSample {
    /// Unit emission direction in the sensor frame.
    pub fn direction(&self) -> Vec3 {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        Vec3::new(ce * ca, ce * sa, se)
    }
}

/// One frame of samples together with the frame period they were generated for.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPattern {
    pub samples: Vec<BeamSample>,
    pub frame_period: f64,
}

impl BeamPattern {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), PatternError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(PatternError::NonPositive { name, value })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<(), PatternError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(PatternError::Negative { name, value })
    }
}

/// Column-major surround schedule: every column fires all elevations at the same instant.
fn surround_columns(elevations: &[f64], points_per_second: f64, rotation_frequency: f64) -> Vec<BeamSample> {
    let channels = elevations.len();
    let per_frame = (points_per_second / rotation_frequency).floor() as usize;
    let columns = per_frame.div_ceil(channels);
    let step = TAU / columns.max(1) as f64;
    let column_period = channels as f64 / points_per_second;
    (0..per_frame)
        .map(|i| {
            let (col, ch) = (i / channels, i % channels);
            BeamSample {
                azimuth: col as f64 * step,
                elevation: elevations[ch],
                t_offset: col as f64 * column_period,
                channel: ch as u32,
            }
        })
        .collect()
}

/// Rotating scanner with `channels` elevations evenly spaced over `[fov_lower, fov_upper]`.
///
/// A single channel sits at the middle of the FOV.
pub fn surround_uniform_pattern(
    channels: u32,
    fov_upper: f64,
    fov_lower: f64,
    points_per_second: f64,
    rotation_frequency: f64,
) -> Result<BeamPattern, PatternError> {
    if channels == 0 {
        return Err(PatternError::ZeroChannels);
    }
    if !(fov_upper > fov_lower) {
        return Err(PatternError::InvalidFov {
            upper: fov_upper,
            lower: fov_lower,
        });
    }
    positive("points_per_second", points_per_second)?;
    positive("rotation_frequency", rotation_frequency)?;
    let elevations: Vec<f64> = if channels == 1 {
        vec![0.5 * (fov_upper + fov_lower)]
    } else {
        let spacing = (fov_upper - fov_lower) / (channels - 1) as f64;
        (0..channels)
            .map(|i| if i + 1 == channels { fov_upper } else { fov_lower + i as f64 * spacing })
            .collect()
    };
    Ok(BeamPattern {
        samples: surround_columns(&elevations, points_per_second, rotation_frequency),
        frame_period: 1.0 / rotation_frequency,
    })
}

/// Rotating scanner whose channel elevations come from a per-channel table (ascending).
pub fn surround_nonuniform_pattern(
    elevation_table: &[f64],
    points_per_second: f64,
    rotation_frequency: f64,
) -> Result<BeamPattern, PatternError> {
    if elevation_table.is_empty() {
        return Err(PatternError::EmptyTable);
    }
    for (index, &value) in elevation_table.iter().enumerate() {
        if !(-FRAC_PI_2..=FRAC_PI_2).contains(&value) {
            return Err(PatternError::ElevationOutOfRange { index, value });
        }
        if index > 0 && !(value > elevation_table[index - 1]) {
            return Err(PatternError::UnsortedTable { index });
        }
    }
    positive("points_per_second", points_per_second)?;
    positive("rotation_frequency", rotation_frequency)?;
    Ok(BeamPattern {
        samples: surround_columns(elevation_table, points_per_second, rotation_frequency),
        frame_period: 1.0 / rotation_frequency,
    })
}

/// Scan pattern of a two-axis MEMS mirror.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lissajous {
    pub az_amplitude: f64,
    pub el_amplitude: f64,
    pub f_x: f64,
    pub f_y: f64,
    pub phase: f64,
    pub points_per_second: f64,
    pub frame_rate: f64,
}

impl Lissajous {
    fn validate(&self) -> Result<(), PatternError> {
        positive("az_amplitude", self.az_amplitude)?;
        positive("el_amplitude", self.el_amplitude)?;
        positive("f_x", self.f_x)?;
        positive("f_y", self.f_y)?;
        positive("points_per_second", self.points_per_second)?;
        positive("frame_rate", self.frame_rate)
    }

    /// Mirror deflection `(azimuth, elevation)` at absolute scan time `t`.
    pub fn at(&self, t: f64) -> (f64, f64) {
        (
            self.az_amplitude * (TAU * self.f_x * t + self.phase).sin(),
            self.el_amplitude * (TAU * self.f_y * t).sin(),
        )
    }
}

pub fn mems_lissajous_pattern(params: &Lissajous) -> Result<BeamPattern, PatternError> {
    lissajous_frame(params, 0.0)
}

fn lissajous_frame(params: &Lissajous, scan_start: f64) -> Result<BeamPattern, PatternError> {
    params.validate()?;
    let count = (params.points_per_second / params.frame_rate).floor() as usize;
    let samples = (0..count)
        .map(|k| {
            let t_offset = k as f64 / params.points_per_second;
            let (azimuth, elevation) = params.at(scan_start + t_offset);
            BeamSample {
                azimuth,
                elevation,
                t_offset,
                channel: 0,
            }
        })
        .collect();
    Ok(BeamPattern {
        samples,
        frame_period: 1.0 / params.frame_rate,
    })
}

/// Paraxial two-prism Risley scanner: the deflection is the vector sum of two rotating
/// deflections of magnitude `d1` and `d2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Risley {
    pub w1: f64,
    pub w2: f64,
    pub d1: f64,
    pub d2: f64,
    pub phase1: f64,
    pub phase2: f64,
    pub points_per_second: f64,
    pub frame_rate: f64,
}

impl Risley {
    fn validate(&self) -> Result<(), PatternError> {
        non_negative("d1", self.d1)?;
        non_negative("d2", self.d2)?;
        positive("points_per_second", self.points_per_second)?;
        positive("frame_rate", self.frame_rate)
    }

    /// Deflection `(azimuth, elevation)` at absolute scan time `t`.
    pub fn at(&self, t: f64) -> (f64, f64) {
        let (s1, c1) = (self.w1 * t + self.phase1).sin_cos();
        let (s2, c2) = (self.w2 * t + self.phase2).sin_cos();
        (self.d1 * c1 + self.d2 * c2, self.d1 * s1 + self.d2 * s2)
    }
}

pub fn risley_pattern(params: &Risley) -> Result<BeamPattern, PatternError> {
    risley_frame(params, 0.0)
}

fn risley_frame(params: &Risley, scan_start: f64) -> Result<BeamPattern, PatternError> {
    params.validate()?;
    let count = (params.points_per_second / params.frame_rate).floor() as usize;
    let samples = (0..count)
        .map(|k| {
            let t_offset = k as f64 / params.points_per_second;
            let (azimuth, elevation) = params.at(scan_start + t_offset);
            BeamSample {
                azimuth,
                elevation,
                t_offset,
                channel: 0,
            }
        })
        .collect();
    Ok(BeamPattern {
        samples,
        frame_period: 1.0 / params.frame_rate,
    })
}

/// Adopts vendor per-point rows verbatim after validating them.
pub fn load_pattern_table(rows: &[BeamSample]) -> Result<Vec<BeamSample>, PatternError> {
    for (index, r) in rows.iter().enumerate() {
        if ![r.t_offset, r.azimuth, r.elevation].iter().all(|v| v.is_finite()) {
            return Err(PatternError::NonFiniteRow { index });
        }
        if index > 0 && r.t_offset < rows[index - 1].t_offset {
            return Err(PatternError::DecreasingTimestamp { index });
        }
    }
    Ok(rows.to_vec())
}

/// How a pattern continues from one frame to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Continuation {
    /// Every frame replays the same pattern.
    #[default]
    Restart,
    /// Oscillating scanners keep their phase running across frames. Surround and table
    /// patterns are unaffected.
    Continue,
}

/// Scan pattern parameters as stored in preset files. Datasheet angles are degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PatternConfig {
    SurroundUniform {
        channels: u32,
        fov_upper_deg: f64,
        fov_lower_deg: f64,
        points_per_second: f64,
        rotation_frequency: f64,
    },
    SurroundNonUniform {
        elevation_table_deg: Vec<f64>,
        points_per_second: f64,
        rotation_frequency: f64,
    },
    MemsLissajous {
        az_amplitude_deg: f64,
        el_amplitude_deg: f64,
        f_x: f64,
        f_y: f64,
        phase_deg: f64,
        points_per_second: f64,
        frame_rate: f64,
    },
    RisleyPrism {
        w1_rad_per_s: f64,
        w2_rad_per_s: f64,
        d1_deg: f64,
        d2_deg: f64,
        phase1_deg: f64,
        phase2_deg: f64,
        points_per_second: f64,
        frame_rate: f64,
    },
    Table {
        frame_rate: f64,
        samples: Vec<BeamSample>,
    },
}

impl PatternConfig {
    pub fn frame_period(&self) -> f64 {
        match self {
            PatternConfig::SurroundUniform { rotation_frequency, .. }
            | PatternConfig::SurroundNonUniform { rotation_frequency, .. } => 1.0 / rotation_frequency,
            PatternConfig::MemsLissajous { frame_rate, .. }
            | PatternConfig::RisleyPrism { frame_rate, .. }
            | PatternConfig::Table { frame_rate, .. } => 1.0 / frame_rate,
        }
    }

    pub fn lissajous(&self) -> Option<Lissajous> {
        match *self {
            PatternConfig::MemsLissajous {
                az_amplitude_deg,
                el_amplitude_deg,
                f_x,
                f_y,
                phase_deg,
                points_per_second,
                frame_rate,
            } => Some(Lissajous {
                az_amplitude: az_amplitude_deg.to_radians(),
                el_amplitude: el_amplitude_deg.to_radians(),
                f_x,
                f_y,
                phase: phase_deg.to_radians(),
                points_per_second,
                frame_rate,
            }),
            _ => None,
        }
    }

    pub fn risley(&self) -> Option<Risley> {
        match *self {
            PatternConfig::RisleyPrism {
                w1_rad_per_s,
                w2_rad_per_s,
                d1_deg,
                d2_deg,
                phase1_deg,
                phase2_deg,
                points_per_second,
                frame_rate,
            } => Some(Risley {
                w1: w1_rad_per_s,
                w2: w2_rad_per_s,
                d1: d1_deg.to_radians(),
                d2: d2_deg.to_radians(),
                phase1: phase1_deg.to_radians(),
                phase2: phase2_deg.to_radians(),
                points_per_second,
                frame_rate,
            }),
            _ => None,
        }
    }

    /// The pattern of frame 0.
    pub fn generate(&self) -> Result<BeamPattern, PatternError> {
        self.generate_frame(0, Continuation::Restart)
    }

    pub fn generate_frame(&self, frame_index: u64, continuation: Continuation) -> Result<BeamPattern, PatternError> {
        let scan_start = match continuation {
            Continuation::Restart => 0.0,
            Continuation::Continue => frame_index as f64 * self.frame_period(),
        };
        match self {
            PatternConfig::SurroundUniform {
                channels,
                fov_upper_deg,
                fov_lower_deg,
                points_per_second,
                rotation_frequency,
            } => surround_uniform_pattern(
                *channels,
                fov_upper_deg.to_radians(),
                fov_lower_deg.to_radians(),
                *points_per_second,
                *rotation_frequency,
            ),
            PatternConfig::SurroundNonUniform {
                elevation_table_deg,
                points_per_second,
                rotation_frequency,
            } => {
                let table: Vec<f64> = elevation_table_deg.iter().map(|d| d.to_radians()).collect();
                surround_nonuniform_pattern(&table, *points_per_second, *rotation_frequency)
            }
            PatternConfig::MemsLissajous { .. } => {
                lissajous_frame(&self.lissajous().expect("lissajous variant"), scan_start)
            }
            PatternConfig::RisleyPrism { .. } => risley_frame(&self.risley().expect("risley variant"), scan_start),
            PatternConfig::Table { frame_rate, samples } => {
                positive("frame_rate", *frame_rate)?;
                let samples = load_pattern_table(samples)?;
                let period = 1.0 / frame_rate;
                if let Some((index, s)) = samples
                    .iter()
                    .enumerate()
                    .find(|(_, s)| s.t_offset < 0.0 || s.t_offset >= period)
                {
                    return Err(PatternError::OutsideFrame {
                        index,
                        t: s.t_offset,
                        period,
                    });
                }
                Ok(BeamPattern {
                    samples,
                    frame_period: period,
                })
            }
        }
    }
}
