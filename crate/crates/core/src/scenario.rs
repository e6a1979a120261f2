//! Text scene descriptions: a flat `key = value` format with `#` comments,
//! parsed into a [`SceneSpec`]. One file describes one scene, so benchmark
//! inputs can live next to the code and diff cleanly.
//!
//! ```text
//! duration_s = 2.0
//! propeller.rpm = 6000
//! motion.kind = constant_velocity
//! motion.vx = 40
//! motion.vy = 0
//! ```
//!
//! Unknown and duplicate keys are errors: a typo in a benchmark input
//! should fail loudly, not silently fall back to a default.

use std::collections::HashMap;
use thiserror::Error;

use crate::events::SensorGeometry;
use crate::synth::{AccelSegment, MotionProfile, RpmProfile, SceneSpec, SynthError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("missing required key '{0}'")]
    MissingKey(String),
    #[error("key '{key}': {message}")]
    BadValue { key: String, message: String },
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// Splits `key = value` lines, trimming whitespace and stripping `#`
/// comments. Returns pairs in file order; duplicate keys and lines without
/// `=` are errors. Shared by scenario files and run configuration files.
pub fn parse_kv_lines(text: &str) -> Result<Vec<(String, String)>, ScenarioError> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(ScenarioError::Parse {
                line: line_no,
                message: format!("expected 'key = value', got '{line}'"),
            });
        };
        let key = line[..eq].trim().to_string();
        let value = line[eq + 1..].trim().to_string();
        if key.is_empty() {
            return Err(ScenarioError::Parse { line: line_no, message: "empty key".into() });
        }
        if pairs.iter().any(|(k, _)| *k == key) {
            return Err(ScenarioError::Parse {
                line: line_no,
                message: format!("duplicate key '{key}'"),
            });
        }
        pairs.push((key, value));
    }
    Ok(pairs)
}

struct KeyMap {
    values: HashMap<String, String>,
}

impl KeyMap {
    fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, ScenarioError>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| ScenarioError::BadValue {
                key: key.to_string(),
                message: format!("'{raw}': {e}"),
            }),
        }
    }

    fn require<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, ScenarioError>
    where
        T::Err: std::fmt::Display,
    {
        self.take_parsed(key)?.ok_or_else(|| ScenarioError::MissingKey(key.to_string()))
    }

    fn or_default<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, ScenarioError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take_parsed(key)?.unwrap_or(default))
    }
}

fn parse_rpm_profile(key: &str, raw: &str) -> Result<RpmProfile, ScenarioError> {
    let mut segments = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        let Some((t, rpm)) = part.split_once(':') else {
            return Err(ScenarioError::BadValue {
                key: key.to_string(),
                message: format!("segment '{part}' should be 't:rpm'"),
            });
        };
        let parse = |s: &str| {
            s.trim().parse::<f64>().map_err(|e| ScenarioError::BadValue {
                key: key.to_string(),
                message: format!("'{s}': {e}"),
            })
        };
        segments.push((parse(t)?, parse(rpm)?));
    }
    Ok(RpmProfile::new(segments)?)
}

fn parse_accel_segments(key: &str, raw: &str) -> Result<Vec<AccelSegment>, ScenarioError> {
    let mut segments = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        let fields: Vec<&str> = part.split(':').collect();
        if fields.len() != 3 {
            return Err(ScenarioError::BadValue {
                key: key.to_string(),
                message: format!("segment '{part}' should be 'duration:ax:ay'"),
            });
        }
        let parse = |s: &str| {
            s.trim().parse::<f64>().map_err(|e| ScenarioError::BadValue {
                key: key.to_string(),
                message: format!("'{s}': {e}"),
            })
        };
        segments.push(AccelSegment {
            duration_s: parse(fields[0])?,
            ax: parse(fields[1])?,
            ay: parse(fields[2])?,
        });
    }
    Ok(segments)
}

/// Parses a scenario file into a scene description.
///
/// Required keys: `duration_s` and exactly one of `propeller.rpm` or
/// `propeller.rpm_profile` (`t:rpm` pairs, comma separated). Everything
/// else has a default; `motion.kind` defaults to `static` at the sensor
/// center. Motion keys not used by the chosen kind are rejected.
pub fn parse_scenario(text: &str) -> Result<SceneSpec, ScenarioError> {
    let pairs = parse_kv_lines(text)?;
    let mut map = KeyMap { values: pairs.into_iter().collect() };

    let width: u16 = map.or_default("geometry.width", 1280)?;
    let height: u16 = map.or_default("geometry.height", 720)?;
    let geometry = SensorGeometry::new(width, height);
    let duration_s: f64 = map.require("duration_s")?;
    let fps: f64 = map.or_default("fps", 30.0)?;
    let seed: u64 = map.or_default("seed", 0)?;
    let box_w: f64 = map.or_default("box.w", 40.0)?;
    let box_h: f64 = map.or_default("box.h", 40.0)?;
    let noise_rate_hz: f64 = map.or_default("noise.rate_hz", 0.0)?;

    let blades: u32 = map.or_default("propeller.blades", 2)?;
    let blade_len_px: f64 = map.or_default("propeller.blade_len_px", 8.0)?;
    let blade_width_rad: f64 = map.or_default("propeller.blade_width_rad", 0.05)?;
    let jitter_us: u32 = map.or_default("propeller.jitter_us", 0)?;
    let rpm: Option<f64> = map.take_parsed("propeller.rpm")?;
    let rpm_profile_raw = map.take("propeller.rpm_profile");
    let profile = match (rpm, rpm_profile_raw) {
        (Some(r), None) => RpmProfile::constant(r)?,
        (None, Some(raw)) => parse_rpm_profile("propeller.rpm_profile", &raw)?,
        (None, None) => return Err(ScenarioError::MissingKey("propeller.rpm".into())),
        (Some(_), Some(_)) => {
            return Err(ScenarioError::BadValue {
                key: "propeller.rpm_profile".into(),
                message: "conflicts with propeller.rpm; give one".into(),
            })
        }
    };

    let kind = map.take("motion.kind").unwrap_or_else(|| "static".to_string());
    let x0: f64 = map.or_default("motion.x0", f64::from(width) / 2.0)?;
    let y0: f64 = map.or_default("motion.y0", f64::from(height) / 2.0)?;
    let motion = match kind.as_str() {
        "static" => MotionProfile::Static { x: x0, y: y0 },
        "constant_velocity" => MotionProfile::ConstantVelocity {
            x: x0,
            y: y0,
            vx: map.require("motion.vx")?,
            vy: map.require("motion.vy")?,
        },
        "circular" => MotionProfile::Circular {
            cx: x0,
            cy: y0,
            radius: map.require("motion.radius")?,
            period_s: map.require("motion.period_s")?,
            phase_rad: map.or_default("motion.phase_rad", 0.0)?,
        },
        "sinusoidal" => MotionProfile::Sinusoidal {
            x: x0,
            y: y0,
            amp_x: map.require("motion.amp_x")?,
            amp_y: map.require("motion.amp_y")?,
            freq_x_hz: map.require("motion.freq_x_hz")?,
            freq_y_hz: map.require("motion.freq_y_hz")?,
        },
        "piecewise_accel" => {
            let raw = map
                .take("motion.accel_segments")
                .ok_or_else(|| ScenarioError::MissingKey("motion.accel_segments".into()))?;
            MotionProfile::PiecewiseAccel {
                x: x0,
                y: y0,
                vx: map.require("motion.vx0")?,
                vy: map.require("motion.vy0")?,
                segments: parse_accel_segments("motion.accel_segments", &raw)?,
            }
        }
        other => {
            return Err(ScenarioError::BadValue {
                key: "motion.kind".into(),
                message: format!(
                    "'{other}' is not one of static, constant_velocity, circular, sinusoidal, piecewise_accel"
                ),
            })
        }
    };

    if let Some(stray) = map.values.keys().next() {
        return Err(ScenarioError::UnknownKey(stray.clone()));
    }

    Ok(SceneSpec {
        geometry,
        duration_s,
        fps,
        box_w,
        box_h,
        blades,
        blade_len_px,
        blade_width_rad,
        profile,
        jitter_us,
        motion,
        noise_rate_hz,
        seed,
    })
}
