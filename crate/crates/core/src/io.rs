//! Readers and writers for the on-disk formats.
//!
//! Everything here is line-oriented CSV with a mandatory header, except the
//! packed binary event format. Parsers report the 1-based line (or byte
//! offset, for binary) of the first defect and refuse the rest of the file;
//! a half-ingested stream is worse than no stream.

use std::io::{BufRead, Read, Write};

use thiserror::Error;

use crate::events::{
    AnnotationError, BoundingBoxObservation, Event, EventStream, Polarity, SensorGeometry,
    StreamError,
};
use crate::eval::{AggregateRow, ResultRow};
use crate::kalman::{ForecastEmission, Trajectory, TrajectoryPoint};
use crate::rpm::RpmEstimate;

/// Magic bytes opening a binary event file.
pub const BINARY_MAGIC: [u8; 4] = *b"EVT0";
/// Header: magic, u16 width, u16 height, 8 reserved bytes.
pub const BINARY_HEADER_LEN: usize = 16;
/// Record: u64 t_us, u16 x, u16 y, u8 polarity, little-endian throughout.
pub const BINARY_RECORD_LEN: usize = 13;

pub const EVENT_CSV_HEADER: &str = "t_us,x,y,p";
pub const ANNOTATION_CSV_HEADER: &str = "t_us,track_id,x_min,y_min,w,h";
pub const RPM_CSV_HEADER: &str = "t_us,rpm,period_ms,support,valid";
pub const FORECAST_CSV_HEADER: &str = "t_emit_us,horizon_s,t_pred_us,cx,cy";
pub const GROUND_TRUTH_CSV_HEADER: &str = "t_us,cx,cy";
pub const RESULTS_CSV_HEADER: &str = "sequence_id,metric,horizon_s,value_px";
pub const AGGREGATE_CSV_HEADER: &str = "metric,horizon_s,mean,median,p5,p25,p75,p95";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("bad magic {found:?}, expected {BINARY_MAGIC:?}")]
    BadMagic { found: [u8; 4] },
    #[error("binary file truncated: partial record at byte offset {offset}")]
    Truncated { offset: usize },
    #[error("invalid polarity byte {value} at byte offset {offset}")]
    BadPolarityByte { offset: usize, value: u8 },
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error("{0}")]
    Unsupported(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse { line, message: message.into() }
}

fn expect_header(got: Option<std::io::Result<String>>, want: &str) -> Result<(), IoError> {
    match got {
        Some(Ok(line)) if line.trim_end() == want => Ok(()),
        Some(Ok(line)) => Err(parse_err(1, format!("expected header '{want}', got '{line}'"))),
        Some(Err(e)) => Err(IoError::Io(e)),
        None => Err(parse_err(1, format!("empty file, expected header '{want}'"))),
    }
}

fn split_fields(line: &str, n: usize, lineno: usize) -> Result<Vec<&str>, IoError> {
    let fields: Vec<&str> = line.trim_end().split(',').collect();
    if fields.len() != n {
        return Err(parse_err(lineno, format!("expected {n} fields, got {}", fields.len())));
    }
    Ok(fields)
}

fn field<T: std::str::FromStr>(s: &str, name: &str, lineno: usize) -> Result<T, IoError> {
    s.trim().parse::<T>().map_err(|_| parse_err(lineno, format!("invalid {name} '{s}'")))
}

/// Parses `t_us,x,y,p` rows into a validated stream.
pub fn parse_event_csv<R: BufRead>(
    reader: R,
    geometry: SensorGeometry,
) -> Result<EventStream, IoError> {
    let mut lines = reader.lines();
    expect_header(lines.next(), EVENT_CSV_HEADER)?;
    let mut events = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f = split_fields(&line, 4, lineno)?;
        let t_us: u64 = field(f[0], "t_us", lineno)?;
        let x: u16 = field(f[1], "x", lineno)?;
        let y: u16 = field(f[2], "y", lineno)?;
        let p: u8 = field(f[3], "p", lineno)?;
        let polarity = Polarity::from_bit(p)
            .ok_or_else(|| parse_err(lineno, format!("invalid p '{p}', expected 0 or 1")))?;
        events.push(Event { t_us, x, y, polarity });
    }
    Ok(EventStream::new(geometry, events)?)
}

pub fn write_event_csv<W: Write>(mut w: W, stream: &EventStream) -> std::io::Result<()> {
    writeln!(w, "{EVENT_CSV_HEADER}")?;
    for e in stream.events() {
        writeln!(w, "{},{},{},{}", e.t_us, e.x, e.y, e.polarity.as_bit())?;
    }
    Ok(())
}

/// Parses the packed binary event format from an in-memory buffer.
///
/// Allocates exactly once: the output vector, sized from the record count in
/// the buffer length. Reserved header bytes are ignored so the format can
/// grow without breaking old readers.
pub fn parse_event_binary_slice(bytes: &[u8]) -> Result<EventStream, IoError> {
    if bytes.len() < BINARY_HEADER_LEN {
        return Err(IoError::Truncated { offset: bytes.len() });
    }
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[..4]);
    if magic != BINARY_MAGIC {
        return Err(IoError::BadMagic { found: magic });
    }
    let width = u16::from_le_bytes([bytes[4], bytes[5]]);
    let height = u16::from_le_bytes([bytes[6], bytes[7]]);
    let body = &bytes[BINARY_HEADER_LEN..];
    let n = body.len() / BINARY_RECORD_LEN;
    if !body.len().is_multiple_of(BINARY_RECORD_LEN) {
        return Err(IoError::Truncated { offset: BINARY_HEADER_LEN + n * BINARY_RECORD_LEN });
    }
    let mut events = Vec::with_capacity(n);
    for (i, rec) in body.chunks_exact(BINARY_RECORD_LEN).enumerate() {
        let t_us = u64::from_le_bytes(rec[0..8].try_into().unwrap());
        let x = u16::from_le_bytes([rec[8], rec[9]]);
        let y = u16::from_le_bytes([rec[10], rec[11]]);
        let polarity = Polarity::from_bit(rec[12]).ok_or(IoError::BadPolarityByte {
            offset: BINARY_HEADER_LEN + i * BINARY_RECORD_LEN + 12,
            value: rec[12],
        })?;
        events.push(Event { t_us, x, y, polarity });
    }
    Ok(EventStream::new(SensorGeometry { width, height }, events)?)
}

pub fn parse_event_binary<R: Read>(mut reader: R) -> Result<EventStream, IoError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    parse_event_binary_slice(&bytes)
}

pub fn write_event_binary<W: Write>(mut w: W, stream: &EventStream) -> std::io::Result<()> {
    let g = stream.geometry();
    w.write_all(&BINARY_MAGIC)?;
    w.write_all(&g.width.to_le_bytes())?;
    w.write_all(&g.height.to_le_bytes())?;
    w.write_all(&[0u8; 8])?;
    for e in stream.events() {
        w.write_all(&e.t_us.to_le_bytes())?;
        w.write_all(&e.x.to_le_bytes())?;
        w.write_all(&e.y.to_le_bytes())?;
        w.write_all(&[e.polarity.as_bit()])?;
    }
    Ok(())
}

/// Parses `t_us,track_id,x_min,y_min,w,h` rows. Boxes are clamped to the
/// sensor exactly as [`BoundingBoxObservation::new`] does.
pub fn parse_annotations<R: BufRead>(
    reader: R,
    geometry: SensorGeometry,
) -> Result<Vec<BoundingBoxObservation>, IoError> {
    let mut lines = reader.lines();
    expect_header(lines.next(), ANNOTATION_CSV_HEADER)?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f = split_fields(&line, 6, lineno)?;
        let t_us: u64 = field(f[0], "t_us", lineno)?;
        let track_id: u32 = field(f[1], "track_id", lineno)?;
        let x_min: f64 = field(f[2], "x_min", lineno)?;
        let y_min: f64 = field(f[3], "y_min", lineno)?;
        let w: f64 = field(f[4], "w", lineno)?;
        let h: f64 = field(f[5], "h", lineno)?;
        out.push(BoundingBoxObservation::new(t_us, track_id, x_min, y_min, w, h, geometry)?);
    }
    Ok(out)
}

pub fn write_annotations<W: Write>(
    mut w: W,
    annotations: &[BoundingBoxObservation],
) -> std::io::Result<()> {
    writeln!(w, "{ANNOTATION_CSV_HEADER}")?;
    for b in annotations {
        writeln!(w, "{},{},{},{},{},{}", b.t_us, b.track_id, b.x_min, b.y_min, b.w, b.h)?;
    }
    Ok(())
}

pub fn parse_rpm_series<R: BufRead>(reader: R) -> Result<Vec<RpmEstimate>, IoError> {
    let mut lines = reader.lines();
    expect_header(lines.next(), RPM_CSV_HEADER)?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f = split_fields(&line, 5, lineno)?;
        let valid_raw: u8 = field(f[4], "valid", lineno)?;
        let valid = match valid_raw {
            0 => false,
            1 => true,
            v => return Err(parse_err(lineno, format!("invalid valid flag '{v}'"))),
        };
        out.push(RpmEstimate {
            t_us: field(f[0], "t_us", lineno)?,
            rpm: field(f[1], "rpm", lineno)?,
            period_ms: field(f[2], "period_ms", lineno)?,
            support: field(f[3], "support", lineno)?,
            valid,
        });
    }
    Ok(out)
}

pub fn write_rpm_series<W: Write>(mut w: W, series: &[RpmEstimate]) -> std::io::Result<()> {
    writeln!(w, "{RPM_CSV_HEADER}")?;
    for e in series {
        writeln!(
            w,
            "{},{},{},{},{}",
            e.t_us,
            e.rpm,
            e.period_ms,
            e.support,
            u8::from(e.valid)
        )?;
    }
    Ok(())
}

/// Parses forecast rows back into per-emission trajectories. Rows sharing
/// `(t_emit_us, horizon_s)` must be contiguous and in prediction-time order,
/// which is how [`write_forecasts`] lays them out.
pub fn parse_forecasts<R: BufRead>(reader: R) -> Result<Vec<ForecastEmission>, IoError> {
    let mut lines = reader.lines();
    expect_header(lines.next(), FORECAST_CSV_HEADER)?;
    let mut out: Vec<ForecastEmission> = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f = split_fields(&line, 5, lineno)?;
        let t_emit_us: u64 = field(f[0], "t_emit_us", lineno)?;
        let horizon_s: f64 = field(f[1], "horizon_s", lineno)?;
        let point = TrajectoryPoint {
            t_us: field(f[2], "t_pred_us", lineno)?,
            cx: field(f[3], "cx", lineno)?,
            cy: field(f[4], "cy", lineno)?,
        };
        let extends_last = out
            .last()
            .map(|e: &ForecastEmission| e.t_emit_us == t_emit_us && e.horizon_s == horizon_s)
            .unwrap_or(false);
        if extends_last {
            let last = out.last_mut().unwrap();
            last.trajectory
                .push(point)
                .map_err(|e| parse_err(lineno, e.to_string()))?;
        } else {
            out.push(ForecastEmission {
                t_emit_us,
                horizon_s,
                trajectory: Trajectory::from_points(vec![point])
                    .map_err(|e| parse_err(lineno, e.to_string()))?,
            });
        }
    }
    Ok(out)
}

pub fn write_forecasts<W: Write>(
    mut w: W,
    emissions: &[ForecastEmission],
) -> std::io::Result<()> {
    writeln!(w, "{FORECAST_CSV_HEADER}")?;
    for e in emissions {
        for p in e.trajectory.points() {
            writeln!(w, "{},{},{},{},{}", e.t_emit_us, e.horizon_s, p.t_us, p.cx, p.cy)?;
        }
    }
    Ok(())
}

/// Parses a ground-truth center series (`t_us,cx,cy`), time-sorted or not;
/// callers that need ordering sort afterwards.
pub fn parse_ground_truth<R: BufRead>(reader: R) -> Result<Vec<TrajectoryPoint>, IoError> {
    let mut lines = reader.lines();
    expect_header(lines.next(), GROUND_TRUTH_CSV_HEADER)?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f = split_fields(&line, 3, lineno)?;
        out.push(TrajectoryPoint {
            t_us: field(f[0], "t_us", lineno)?,
            cx: field(f[1], "cx", lineno)?,
            cy: field(f[2], "cy", lineno)?,
        });
    }
    Ok(out)
}

pub fn write_ground_truth<W: Write>(mut w: W, points: &[TrajectoryPoint]) -> std::io::Result<()> {
    writeln!(w, "{GROUND_TRUTH_CSV_HEADER}")?;
    for p in points {
        writeln!(w, "{},{},{}", p.t_us, p.cx, p.cy)?;
    }
    Ok(())
}

pub fn write_results_csv<W: Write>(mut w: W, rows: &[ResultRow]) -> std::io::Result<()> {
    writeln!(w, "{RESULTS_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.sequence_id, r.metric, r.horizon_s, r.value_px)?;
    }
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(mut w: W, rows: &[AggregateRow]) -> std::io::Result<()> {
    writeln!(w, "{AGGREGATE_CSV_HEADER}")?;
    for r in rows {
        let s = &r.stats;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.metric, r.horizon_s, s.mean, s.median, s.p5, s.p25, s.p75, s.p95
        )?;
    }
    Ok(())
}

/// Converts one recording from the public FRED drone-tracking release into
/// the native event + annotation formats.
///
/// Not implemented yet: pinning the container layout needs a copy of the
/// dataset, which this build environment does not ship. The function exists
/// so the CLI surface is stable once the data is available.
pub fn convert_fred_recording(_recording_dir: &std::path::Path) -> Result<(), IoError> {
    Err(IoError::Unsupported(
        "FRED conversion requires dataset access; no recordings are bundled".into(),
    ))
}
