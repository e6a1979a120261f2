//! Propeller rotation-rate estimation from raw events.
//!
//! A spinning blade sweeping a pixel fires one ON event when its edge
//! arrives and one OFF event when it leaves. The time from an OFF to the
//! next ON on the same pixel is one blade period (minus the blade's own
//! transit time, which is small for thin blades). The estimator:
//!
//! 1. counts events per pixel over a trailing window and keeps only the
//!    most active pixels (the blade disk dominates everything else),
//! 2. records OFF-to-ON intervals per kept pixel,
//! 3. accumulates the intervals in a fixed-width histogram with time-based
//!    eviction, and reads the blade period off the fullest bin.
//!
//! Rotation rate in RPM then follows from the blade count: a two-blade prop
//! crosses a pixel twice per revolution.

use std::collections::{HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::events::{BoundingBoxObservation, Event, EventStream, Polarity, window_events};

/// Histogram bin width in milliseconds.
pub const BIN_WIDTH_MS: f64 = 0.1;
/// Number of histogram bins; periods at or above `NUM_BINS * BIN_WIDTH_MS`
/// (25.6 ms, i.e. below ~1172 RPM for two blades) are out of range.
pub const NUM_BINS: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum RpmError {
    #[error("period must be positive, got {0} ms")]
    NonPositivePeriod(f64),
    #[error("rpm must be positive, got {0}")]
    NonPositiveRpm(f64),
    #[error("blade count must be at least 1")]
    ZeroBlades,
    #[error("percentile must lie in (0, 100], got {0}")]
    BadPercentile(f64),
    #[error("trailing window must be positive")]
    ZeroWindow,
    #[error("minimum support must be at least 1")]
    ZeroSupport,
}

/// Tuning knobs for the streaming estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpmConfig {
    /// Percentile (nearest-rank, over pixels with at least one event) above
    /// which a pixel counts as propeller. 70 keeps the blade disk and drops
    /// airframe edges.
    pub percentile: f64,
    /// Blades per propeller; scales period to revolutions.
    pub blades: u32,
    /// Trailing window for both the activity map and histogram retention.
    pub window_us: u64,
    /// Fullest-bin population below which an estimate is reported invalid.
    pub min_support: u32,
}

impl Default for RpmConfig {
    fn default() -> Self {
        RpmConfig { percentile: 70.0, blades: 2, window_us: 100_000, min_support: 5 }
    }
}

impl RpmConfig {
    pub fn validate(&self) -> Result<(), RpmError> {
        if !(self.percentile > 0.0 && self.percentile <= 100.0) {
            return Err(RpmError::BadPercentile(self.percentile));
        }
        if self.blades == 0 {
            return Err(RpmError::ZeroBlades);
        }
        if self.window_us == 0 {
            return Err(RpmError::ZeroWindow);
        }
        if self.min_support == 0 {
            return Err(RpmError::ZeroSupport);
        }
        Ok(())
    }
}

/// Per-pixel event counts over one time window, restricted to a bounding box.
#[derive(Debug, Clone)]
pub struct FrequencyMap {
    x0: u16,
    y0: u16,
    w_px: usize,
    h_px: usize,
    counts: Vec<u32>,
}

impl FrequencyMap {
    /// Counts events in `[t_start, t_end)` falling inside `bbox`.
    pub fn build(
        stream: &EventStream,
        t_start_us: u64,
        t_end_us: u64,
        bbox: &BoundingBoxObservation,
    ) -> Self {
        let x0 = bbox.x_min.floor() as u16;
        let y0 = bbox.y_min.floor() as u16;
        let x1 = (bbox.x_min + bbox.w).floor() as u16;
        let y1 = (bbox.y_min + bbox.h).floor() as u16;
        let w_px = usize::from(x1 - x0) + 1;
        let h_px = usize::from(y1 - y0) + 1;
        let mut counts = vec![0u32; w_px * h_px];
        for e in window_events(stream, t_start_us, t_end_us, bbox) {
            let ix = usize::from(e.x - x0);
            let iy = usize::from(e.y - y0);
            counts[iy * w_px + ix] += 1;
        }
        FrequencyMap { x0, y0, w_px, h_px, counts }
    }

    pub fn count_at(&self, x: u16, y: u16) -> u32 {
        if x < self.x0 || y < self.y0 {
            return 0;
        }
        let ix = usize::from(x - self.x0);
        let iy = usize::from(y - self.y0);
        if ix >= self.w_px || iy >= self.h_px {
            return 0;
        }
        self.counts[iy * self.w_px + ix]
    }

    /// Pixels with at least one event, with their counts, in row-major order.
    pub fn active_pixels(&self) -> impl Iterator<Item = ((u16, u16), u32)> + '_ {
        self.counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| {
            let x = self.x0 + (i % self.w_px) as u16;
            let y = self.y0 + (i / self.w_px) as u16;
            ((x, y), c)
        })
    }
}

/// Nearest-rank percentile of a set of counts. Returns `None` for an empty
/// set. With `n` values, the rank is `ceil(p/100 * n)`, clamped to `[1, n]`.
pub fn percentile_threshold(counts: &[u32], percentile: f64) -> Option<u32> {
    if counts.is_empty() {
        return None;
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let rank = ((percentile / 100.0) * n as f64).ceil() as usize;
    let rank = rank.clamp(1, n);
    Some(sorted[rank - 1])
}

/// Set of pixels classified as propeller.
#[derive(Debug, Clone, Default)]
pub struct PixelMask {
    pixels: HashSet<(u16, u16)>,
}

impl PixelMask {
    pub fn contains(&self, x: u16, y: u16) -> bool {
        self.pixels.contains(&(x, y))
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Pixels whose event count reaches the nearest-rank percentile threshold,
/// computed over active pixels only. Quiet pixels neither vote on the
/// threshold nor pass it.
pub fn threshold_propeller_pixels(map: &FrequencyMap, percentile: f64) -> PixelMask {
    let counts: Vec<u32> = map.active_pixels().map(|(_, c)| c).collect();
    let Some(threshold) = percentile_threshold(&counts, percentile) else {
        return PixelMask::default();
    };
    let pixels = map
        .active_pixels()
        .filter(|&(_, c)| c >= threshold)
        .map(|(p, _)| p)
        .collect();
    PixelMask { pixels }
}

/// Per-pixel polarity transition state: the latest OFF timestamp, consumed
/// by the next ON to produce one period sample.
#[derive(Debug, Clone, Default)]
pub struct TransitionTracker {
    last_off_us: HashMap<(u16, u16), u64>,
}

impl TransitionTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds one event. An OFF stores its timestamp for the pixel; an ON
    /// returns the elapsed time since the stored OFF, in milliseconds. The
    /// stored OFF stays until the next OFF overwrites it, so an ON burst
    /// yields several nearby samples that land in the same bin.
    pub fn record(&mut self, e: &Event) -> Option<f64> {
        let key = (e.x, e.y);
        match e.polarity {
            Polarity::Off => {
                self.last_off_us.insert(key, e.t_us);
                None
            }
            Polarity::On => {
                let t_off = *self.last_off_us.get(&key)?;
                debug_assert!(e.t_us >= t_off, "stream order guarantees on >= off");
                Some((e.t_us - t_off) as f64 / 1000.0)
            }
        }
    }

    /// Drops state for pixels no longer in the mask, so a pixel that drifts
    /// out of the propeller region cannot pair a stale OFF with a later ON.
    pub fn retain_mask(&mut self, mask: &PixelMask) {
        self.last_off_us.retain(|&(x, y), _| mask.contains(x, y));
    }

    pub fn len(&self) -> usize {
        self.last_off_us.len()
    }

    pub fn is_empty(&self) -> bool {
        self.last_off_us.is_empty()
    }
}

/// Winning histogram bin, reported as the bin-center period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominantPeriod {
    pub period_ms: f64,
    pub bin: usize,
    pub support: u32,
}

/// Fixed-width period histogram with time-based eviction.
///
/// Entries carry the timestamp of the ON event that produced them; `evict`
/// drops entries strictly older than the retention window so the readout
/// tracks rotation-rate changes with bounded latency.
#[derive(Debug, Clone)]
pub struct PeriodHistogram {
    bins: Vec<u32>,
    fifo: VecDeque<(u64, u16)>,
    retention_us: u64,
}

impl PeriodHistogram {
    pub fn new(retention_us: u64) -> Self {
        PeriodHistogram { bins: vec![0; NUM_BINS], fifo: VecDeque::new(), retention_us }
    }

    /// Files one period sample. Returns `false` (and stores nothing) for
    /// periods outside `[0, NUM_BINS * BIN_WIDTH_MS)` or non-finite input.
    pub fn insert(&mut self, t_us: u64, period_ms: f64) -> bool {
        if !period_ms.is_finite() || period_ms < 0.0 {
            return false;
        }
        // Scaling by 1/BIN_WIDTH_MS via multiplication: dividing by 0.1
        // nudges exact multiples below the bin boundary (4.9/0.1 < 49).
        let scaled = (period_ms * 10.0).floor();
        if scaled >= NUM_BINS as f64 {
            return false;
        }
        let bin = scaled as usize;
        self.bins[bin] += 1;
        self.fifo.push_back((t_us, bin as u16));
        true
    }

    /// Drops entries older than the retention window relative to `now_us`.
    /// An entry exactly at the boundary survives.
    pub fn evict(&mut self, now_us: u64) {
        let cutoff = now_us.saturating_sub(self.retention_us);
        while let Some(&(t, bin)) = self.fifo.front() {
            if t >= cutoff {
                break;
            }
            self.fifo.pop_front();
            self.bins[usize::from(bin)] -= 1;
        }
    }

    /// Fullest bin; ties resolve to the shorter period. `None` when empty.
    pub fn dominant(&self) -> Option<DominantPeriod> {
        let (bin, &support) = self
            .bins
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
        if support == 0 {
            return None;
        }
        Some(DominantPeriod { period_ms: (bin as f64 + 0.5) * BIN_WIDTH_MS, bin, support })
    }

    pub fn total(&self) -> u32 {
        self.fifo.len() as u32
    }
}

/// Blade period in milliseconds to rotation rate in RPM.
pub fn period_to_rpm(period_ms: f64, blades: u32) -> Result<f64, RpmError> {
    if blades == 0 {
        return Err(RpmError::ZeroBlades);
    }
    let positive = period_ms > 0.0;
    if !positive {
        return Err(RpmError::NonPositivePeriod(period_ms));
    }
    Ok(60_000.0 / (period_ms * f64::from(blades)))
}

/// Rotation rate in RPM to blade period in milliseconds.
pub fn rpm_to_period(rpm: f64, blades: u32) -> Result<f64, RpmError> {
    if blades == 0 {
        return Err(RpmError::ZeroBlades);
    }
    let positive = rpm > 0.0;
    if !positive {
        return Err(RpmError::NonPositiveRpm(rpm));
    }
    Ok(60_000.0 / (rpm * f64::from(blades)))
}

/// One rotation-rate readout at an annotation timestamp. Invalid readouts
/// (support below the configured minimum, or an empty histogram) carry zero
/// rpm and period so the serialized form stays unambiguous.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpmEstimate {
    pub t_us: u64,
    pub rpm: f64,
    pub period_ms: f64,
    pub support: u32,
    pub valid: bool,
}

/// Runs the full estimator along one annotated track.
///
/// At each box timestamp: rebuild the activity map over the trailing window
/// inside the current box, refresh the propeller mask, drop transition state
/// for pixels that left the mask, feed events that arrived since the
/// previous box (for the first box, the whole trailing window), evict stale
/// histogram entries, and read out the dominant period.
pub fn estimate_rpm_stream(
    stream: &EventStream,
    track_boxes: &[BoundingBoxObservation],
    cfg: &RpmConfig,
) -> Result<Vec<RpmEstimate>, RpmError> {
    cfg.validate()?;
    let mut tracker = TransitionTracker::new();
    let mut hist = PeriodHistogram::new(cfg.window_us);
    let mut prev_t: Option<u64> = None;
    let mut out = Vec::with_capacity(track_boxes.len());
    for bbox in track_boxes {
        let t = bbox.t_us;
        let win_start = t.saturating_sub(cfg.window_us);
        let map = FrequencyMap::build(stream, win_start, t, bbox);
        let mask = threshold_propeller_pixels(&map, cfg.percentile);
        tracker.retain_mask(&mask);
        let chunk_start = prev_t.unwrap_or(win_start);
        for e in window_events(stream, chunk_start, t, bbox) {
            if mask.contains(e.x, e.y) {
                if let Some(period_ms) = tracker.record(e) {
                    hist.insert(e.t_us, period_ms);
                }
            }
        }
        hist.evict(t);
        let estimate = match hist.dominant() {
            Some(d) if d.support >= cfg.min_support => RpmEstimate {
                t_us: t,
                rpm: period_to_rpm(d.period_ms, cfg.blades)?,
                period_ms: d.period_ms,
                support: d.support,
                valid: true,
            },
            Some(d) => {
                RpmEstimate { t_us: t, rpm: 0.0, period_ms: 0.0, support: d.support, valid: false }
            }
            None => RpmEstimate { t_us: t, rpm: 0.0, period_ms: 0.0, support: 0, valid: false },
        };
        out.push(estimate);
        prev_t = Some(t);
    }
    Ok(out)
}
