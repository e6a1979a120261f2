//! Core event-stream and annotation types shared by every stage.

use thiserror::Error;

/// Contrast polarity of a single event.
///
/// `On` marks a brightness increase, `Off` a decrease. A propeller blade
/// sweeping across a pixel produces one of each per passage, which is what
/// the rotation-rate estimator keys on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }

    pub fn as_bit(self) -> u8 {
        match self {
            Polarity::Off => 0,
            Polarity::On => 1,
        }
    }
}

/// One camera event: timestamp in microseconds, pixel coordinates, polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub t_us: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

/// Sensor resolution. Pixel coordinates are valid in `[0, width) x [0, height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorGeometry {
    pub width: u16,
    pub height: u16,
}

impl SensorGeometry {
    pub fn new(width: u16, height: u16) -> Self {
        SensorGeometry { width, height }
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }
}

impl Default for SensorGeometry {
    fn default() -> Self {
        SensorGeometry { width: 1280, height: 720 }
    }
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("event {index} at t={t_us}us precedes event {} at t={prev_us}us", index - 1)]
    OutOfOrder { index: usize, t_us: u64, prev_us: u64 },
    #[error("event {index} at ({x},{y}) lies outside the {width}x{height} sensor")]
    OutOfBounds { index: usize, x: u16, y: u16, width: u16, height: u16 },
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("bounding box at t={t_us}us has non-positive size {w}x{h}")]
    EmptyBox { t_us: u64, w: f64, h: f64 },
    #[error("bounding box at t={t_us}us lies entirely outside the {width}x{height} sensor")]
    OutsideSensor { t_us: u64, width: u16, height: u16 },
    #[error("observations for track {track_id} are not in chronological order at t={t_us}us")]
    OutOfOrder { track_id: u32, t_us: u64 },
}

/// Axis-aligned bounding box observed at one annotation timestamp.
///
/// Boxes are clamped to the sensor on construction; `clamped` records whether
/// any clamping happened so downstream code can tell partially visible
/// targets from fully visible ones. A box whose intersection with the sensor
/// is empty is rejected rather than clamped to nothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBoxObservation {
    pub t_us: u64,
    pub track_id: u32,
    pub x_min: f64,
    pub y_min: f64,
    pub w: f64,
    pub h: f64,
    pub clamped: bool,
}

impl BoundingBoxObservation {
    pub fn new(
        t_us: u64,
        track_id: u32,
        x_min: f64,
        y_min: f64,
        w: f64,
        h: f64,
        geometry: SensorGeometry,
    ) -> Result<Self, AnnotationError> {
        let positive = w > 0.0 && h > 0.0;
        if !positive {
            return Err(AnnotationError::EmptyBox { t_us, w, h });
        }
        let sw = f64::from(geometry.width);
        let sh = f64::from(geometry.height);
        let x0 = x_min.max(0.0);
        let y0 = y_min.max(0.0);
        let x1 = (x_min + w).min(sw);
        let y1 = (y_min + h).min(sh);
        if x1 <= x0 || y1 <= y0 {
            return Err(AnnotationError::OutsideSensor {
                t_us,
                width: geometry.width,
                height: geometry.height,
            });
        }
        let clamped = x0 != x_min || y0 != y_min || x1 != x_min + w || y1 != y_min + h;
        Ok(BoundingBoxObservation {
            t_us,
            track_id,
            x_min: x0,
            y_min: y0,
            w: x1 - x0,
            h: y1 - y0,
            clamped,
        })
    }

    /// Box center, the measurement fed to the forecasters.
    pub fn center(&self) -> (f64, f64) {
        (self.x_min + self.w / 2.0, self.y_min + self.h / 2.0)
    }

    /// Whether integer pixel `(x, y)` falls inside the box. Edges count as
    /// inside on both sides so a box of width 1 still covers one column.
    pub fn contains_pixel(&self, x: u16, y: u16) -> bool {
        let xf = f64::from(x);
        let yf = f64::from(y);
        xf >= self.x_min && xf <= self.x_min + self.w && yf >= self.y_min && yf <= self.y_min + self.h
    }
}

/// A chronologically ordered event stream tied to one sensor geometry.
#[derive(Debug, Clone)]
pub struct EventStream {
    geometry: SensorGeometry,
    events: Vec<Event>,
}

impl EventStream {
    /// Validates ordering (non-decreasing timestamps) and pixel bounds.
    pub fn new(geometry: SensorGeometry, events: Vec<Event>) -> Result<Self, StreamError> {
        let mut prev = 0u64;
        for (index, e) in events.iter().enumerate() {
            if index > 0 && e.t_us < prev {
                return Err(StreamError::OutOfOrder { index, t_us: e.t_us, prev_us: prev });
            }
            if !geometry.contains(e.x, e.y) {
                return Err(StreamError::OutOfBounds {
                    index,
                    x: e.x,
                    y: e.y,
                    width: geometry.width,
                    height: geometry.height,
                });
            }
            prev = e.t_us;
        }
        Ok(EventStream { geometry, events })
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events with `t_start <= t < t_end`, located by binary search.
    pub fn between(&self, t_start_us: u64, t_end_us: u64) -> &[Event] {
        if t_end_us <= t_start_us {
            return &[];
        }
        let lo = self.events.partition_point(|e| e.t_us < t_start_us);
        let hi = self.events.partition_point(|e| e.t_us < t_end_us);
        &self.events[lo..hi]
    }
}

/// Events inside both the half-open time window `[t_start, t_end)` and the
/// given bounding box, in stream order.
pub fn window_events<'a>(
    stream: &'a EventStream,
    t_start_us: u64,
    t_end_us: u64,
    bbox: &'a BoundingBoxObservation,
) -> impl Iterator<Item = &'a Event> {
    stream
        .between(t_start_us, t_end_us)
        .iter()
        .filter(move |e| bbox.contains_pixel(e.x, e.y))
}

/// Observations of one track in chronological order, with strictly
/// increasing timestamps enforced.
pub fn track_observations(
    annotations: &[BoundingBoxObservation],
    track_id: u32,
) -> Result<Vec<BoundingBoxObservation>, AnnotationError> {
    let mut out: Vec<BoundingBoxObservation> =
        annotations.iter().copied().filter(|b| b.track_id == track_id).collect();
    out.sort_by_key(|b| b.t_us);
    for pair in out.windows(2) {
        if pair[1].t_us <= pair[0].t_us {
            return Err(AnnotationError::OutOfOrder { track_id, t_us: pair[1].t_us });
        }
    }
    Ok(out)
}

/// Distinct track ids present in an annotation set, ascending.
pub fn track_ids(annotations: &[BoundingBoxObservation]) -> Vec<u32> {
    let mut ids: Vec<u32> = annotations.iter().map(|b| b.track_id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}
