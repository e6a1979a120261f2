//! Closed-form synthetic scenes: spinning propellers that emit events, and
//! drone tracks with exactly known centers.
//!
//! The propeller model is a set of angular sectors (blades) rotating about
//! a center. A pixel inside the blade disk fires ON when a leading edge
//! reaches its angle and OFF when the trailing edge leaves it. Crossing
//! times come from inverting the piecewise-linear cumulative rotation
//! angle, so event timing is exact to the microsecond rounding of the
//! timestamps, and every downstream estimate can be checked against the
//! profile that generated the data.
//!
//! Caveat of the sector model: the OFF-to-ON interval on a pixel is the
//! blade period minus the blade's own transit time. Narrow blades make
//! that bias negligible, which is how the precision tests configure it.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::f64::consts::TAU;
use thiserror::Error;

use crate::eval::GroundTruthLookup;
use crate::events::{
    AnnotationError, BoundingBoxObservation, Event, EventStream, Polarity, SensorGeometry,
    StreamError,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("rpm profile needs at least one segment")]
    EmptyProfile,
    #[error("rpm profile must start at t=0, got {0} s")]
    ProfileStartNonZero(f64),
    #[error("rpm profile segment times must strictly increase (offender at {0} s)")]
    ProfileTimesNotIncreasing(f64),
    #[error("rpm must be positive and finite, got {0}")]
    BadRpm(f64),
    #[error("blade length must be at least 2 px, got {0}")]
    BladeTooShort(f64),
    #[error("blade count must be at least 1")]
    ZeroBlades,
    #[error("blade width must lie in (0, {max} rad) for this blade count, got {width}")]
    BadBladeWidth { width: f64, max: f64 },
    #[error("duration must be positive and finite, got {0} s")]
    BadDuration(f64),
    #[error("frame rate must be positive and finite, got {0}")]
    BadFps(f64),
    #[error("box size must be positive, got {w}x{h}")]
    BadBoxSize { w: f64, h: f64 },
    #[error("noise rate must be non-negative and finite, got {0}")]
    BadNoiseRate(f64),
    #[error("motion span {span_x}x{span_y} px does not fit the sensor with margin {margin}")]
    PathTooLarge { span_x: f64, span_y: f64, margin: f64 },
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

/// Piecewise-constant rotation-rate schedule. Each entry is (start time in
/// seconds, RPM); the last segment extends indefinitely.
#[derive(Debug, Clone, PartialEq)]
pub struct RpmProfile {
    /// (t_start_s, rpm), validated strictly increasing with t[0] == 0.
    segments: Vec<(f64, f64)>,
    /// Cumulative rotation angle at each segment start, radians.
    cum_angle: Vec<f64>,
}

fn omega_rad_s(rpm: f64) -> f64 {
    rpm / 60.0 * TAU
}

impl RpmProfile {
    pub fn new(segments: Vec<(f64, f64)>) -> Result<Self, SynthError> {
        let Some(&(t0, _)) = segments.first() else {
            return Err(SynthError::EmptyProfile);
        };
        if t0 != 0.0 {
            return Err(SynthError::ProfileStartNonZero(t0));
        }
        for pair in segments.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(SynthError::ProfileTimesNotIncreasing(pair[1].0));
            }
        }
        for &(_, rpm) in &segments {
            if !(rpm > 0.0 && rpm.is_finite()) {
                return Err(SynthError::BadRpm(rpm));
            }
        }
        let mut cum_angle = Vec::with_capacity(segments.len());
        let mut acc = 0.0;
        for (i, &(t, rpm)) in segments.iter().enumerate() {
            cum_angle.push(acc);
            if let Some(&(t_next, _)) = segments.get(i + 1) {
                acc += omega_rad_s(rpm) * (t_next - t);
            }
        }
        Ok(RpmProfile { segments, cum_angle })
    }

    pub fn constant(rpm: f64) -> Result<Self, SynthError> {
        Self::new(vec![(0.0, rpm)])
    }

    pub fn segments(&self) -> &[(f64, f64)] {
        &self.segments
    }

    /// Rate in force at time `t_s` (clamped below to the first segment).
    pub fn rpm_at(&self, t_s: f64) -> f64 {
        let idx = self.segments.iter().rposition(|&(t, _)| t <= t_s).unwrap_or(0);
        self.segments[idx].1
    }

    /// Cumulative rotation angle at `t_s >= 0`, radians.
    pub fn angle_at(&self, t_s: f64) -> f64 {
        let t_s = t_s.max(0.0);
        let idx = self.segments.iter().rposition(|&(t, _)| t <= t_s).unwrap_or(0);
        let (t_start, rpm) = self.segments[idx];
        self.cum_angle[idx] + omega_rad_s(rpm) * (t_s - t_start)
    }

    /// Inverse of [`angle_at`](Self::angle_at): the unique time at which the
    /// cumulative angle reaches `angle >= 0`.
    pub fn time_at_angle(&self, angle: f64) -> f64 {
        let angle = angle.max(0.0);
        let idx = self.cum_angle.iter().rposition(|&a| a <= angle).unwrap_or(0);
        let (t_start, rpm) = self.segments[idx];
        t_start + (angle - self.cum_angle[idx]) / omega_rad_s(rpm)
    }
}

/// Geometry and schedule of one simulated propeller.
#[derive(Debug, Clone, PartialEq)]
pub struct PropellerSpec {
    /// Rotation center in sensor coordinates.
    pub center: (f64, f64),
    /// Blade length in pixels; the event-producing disk radius.
    pub blade_len_px: f64,
    pub blades: u32,
    /// Angular width of each blade sector, radians.
    pub blade_width_rad: f64,
    pub profile: RpmProfile,
    /// Uniform timestamp jitter half-width in microseconds (0 disables).
    pub jitter_us: u32,
    pub seed: u64,
}

impl PropellerSpec {
    fn validate(&self) -> Result<(), SynthError> {
        let long_enough = self.blade_len_px >= 2.0;
        if !long_enough {
            return Err(SynthError::BladeTooShort(self.blade_len_px));
        }
        if self.blades == 0 {
            return Err(SynthError::ZeroBlades);
        }
        let max_width = TAU / f64::from(self.blades);
        if !(self.blade_width_rad > 0.0 && self.blade_width_rad < max_width) {
            return Err(SynthError::BadBladeWidth {
                width: self.blade_width_rad,
                max: max_width,
            });
        }
        Ok(())
    }
}

fn round_us(t_s: f64) -> u64 {
    (t_s * 1e6).round() as u64
}

/// Generates the event stream of one static propeller over `[0, duration_s]`,
/// time-sorted. Pixels closer than 1 px to the center are skipped: the hub
/// never uncovers, so it would produce no transitions on real hardware
/// either.
pub fn simulate_propeller_events(
    spec: &PropellerSpec,
    geometry: SensorGeometry,
    duration_s: f64,
) -> Result<Vec<Event>, SynthError> {
    spec.validate()?;
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(SynthError::BadDuration(duration_s));
    }
    let (cx, cy) = spec.center;
    let r = spec.blade_len_px;
    let total_angle = spec.profile.angle_at(duration_s);
    let sector = TAU / f64::from(spec.blades);

    let x_lo = ((cx - r).floor().max(0.0)) as u16;
    let x_hi = ((cx + r).ceil().min(f64::from(geometry.width) - 1.0)).max(0.0) as u16;
    let y_lo = ((cy - r).floor().max(0.0)) as u16;
    let y_hi = ((cy + r).ceil().min(f64::from(geometry.height) - 1.0)).max(0.0) as u16;

    let mut events = Vec::new();
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let dx = f64::from(x) - cx;
            let dy = f64::from(y) - cy;
            let rho = dx.hypot(dy);
            if rho < 1.0 || rho > r {
                continue;
            }
            let phi = dy.atan2(dx).rem_euclid(TAU);
            // Cumulative angles at which some leading edge reaches phi.
            let base = phi.rem_euclid(sector);
            let mut a = base;
            while a <= total_angle {
                events.push(Event {
                    t_us: round_us(spec.profile.time_at_angle(a)),
                    x,
                    y,
                    polarity: Polarity::On,
                });
                let a_off = a + spec.blade_width_rad;
                if a_off <= total_angle {
                    events.push(Event {
                        t_us: round_us(spec.profile.time_at_angle(a_off)),
                        x,
                        y,
                        polarity: Polarity::Off,
                    });
                }
                a += sector;
            }
        }
    }
    events.sort_by_key(|e| e.t_us);

    if spec.jitter_us > 0 {
        let j = i64::from(spec.jitter_us);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for e in &mut events {
            let offset = rng.random_range(-j..=j);
            e.t_us = (e.t_us as i64 + offset).max(0) as u64;
        }
        events.sort_by_key(|e| e.t_us);
    }
    Ok(events)
}

/// Appends uniformly distributed background events (in time, position, and
/// polarity) and re-sorts. Returns how many were added:
/// `round(rate_hz * duration_s)`.
pub fn add_noise_events(
    events: &mut Vec<Event>,
    geometry: SensorGeometry,
    rate_hz: f64,
    duration_s: f64,
    seed: u64,
) -> Result<usize, SynthError> {
    if !(rate_hz >= 0.0 && rate_hz.is_finite()) {
        return Err(SynthError::BadNoiseRate(rate_hz));
    }
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(SynthError::BadDuration(duration_s));
    }
    let n = (rate_hz * duration_s).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_end = round_us(duration_s);
    for _ in 0..n {
        events.push(Event {
            t_us: rng.random_range(0..t_end),
            x: rng.random_range(0..geometry.width),
            y: rng.random_range(0..geometry.height),
            polarity: if rng.random_range(0..2u8) == 1 { Polarity::On } else { Polarity::Off },
        });
    }
    events.sort_by_key(|e| e.t_us);
    Ok(n)
}

/// One segment of piecewise-constant acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelSegment {
    pub duration_s: f64,
    pub ax: f64,
    pub ay: f64,
}

/// Analytic center motion. Every variant is evaluable in closed form at any
/// time, so ground truth carries no integration error.
#[derive(Debug, Clone, PartialEq)]
pub enum MotionProfile {
    Static { x: f64, y: f64 },
    ConstantVelocity { x: f64, y: f64, vx: f64, vy: f64 },
    Circular { cx: f64, cy: f64, radius: f64, period_s: f64, phase_rad: f64 },
    Sinusoidal { x: f64, y: f64, amp_x: f64, amp_y: f64, freq_x_hz: f64, freq_y_hz: f64 },
    /// Piecewise-constant acceleration from an initial velocity; beyond the
    /// last segment the motion continues at the final velocity.
    PiecewiseAccel { x: f64, y: f64, vx: f64, vy: f64, segments: Vec<AccelSegment> },
}

/// A motion profile packaged as an evaluable path.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionPath {
    profile: MotionProfile,
}

impl MotionPath {
    pub fn new(profile: MotionProfile) -> Self {
        MotionPath { profile }
    }

    pub fn profile(&self) -> &MotionProfile {
        &self.profile
    }

    /// Center position at `t_s` (clamped below to 0).
    pub fn position(&self, t_s: f64) -> (f64, f64) {
        let t = t_s.max(0.0);
        match &self.profile {
            MotionProfile::Static { x, y } => (*x, *y),
            MotionProfile::ConstantVelocity { x, y, vx, vy } => (x + vx * t, y + vy * t),
            MotionProfile::Circular { cx, cy, radius, period_s, phase_rad } => {
                let a = TAU * t / period_s + phase_rad;
                (cx + radius * a.cos(), cy + radius * a.sin())
            }
            MotionProfile::Sinusoidal { x, y, amp_x, amp_y, freq_x_hz, freq_y_hz } => (
                x + amp_x * (TAU * freq_x_hz * t).sin(),
                y + amp_y * (TAU * freq_y_hz * t).sin(),
            ),
            MotionProfile::PiecewiseAccel { x, y, vx, vy, segments } => {
                let (mut px, mut py, mut vx, mut vy) = (*x, *y, *vx, *vy);
                let mut remaining = t;
                for seg in segments {
                    let tau = remaining.min(seg.duration_s);
                    px += vx * tau + 0.5 * seg.ax * tau * tau;
                    py += vy * tau + 0.5 * seg.ay * tau * tau;
                    vx += seg.ax * tau;
                    vy += seg.ay * tau;
                    remaining -= tau;
                    if remaining <= 0.0 {
                        return (px, py);
                    }
                }
                (px + vx * remaining, py + vy * remaining)
            }
        }
    }

    /// Exact axis-aligned bounds of the path over `[0, t_end_s]`.
    pub fn bounds(&self, t_end_s: f64) -> ((f64, f64), (f64, f64)) {
        match &self.profile {
            MotionProfile::Static { x, y } => ((*x, *x), (*y, *y)),
            MotionProfile::ConstantVelocity { .. } => {
                let (x0, y0) = self.position(0.0);
                let (x1, y1) = self.position(t_end_s);
                ((x0.min(x1), x0.max(x1)), (y0.min(y1), y0.max(y1)))
            }
            MotionProfile::Circular { cx, cy, radius, .. } => {
                let r = radius.abs();
                ((cx - r, cx + r), (cy - r, cy + r))
            }
            MotionProfile::Sinusoidal { x, y, amp_x, amp_y, .. } => {
                ((x - amp_x.abs(), x + amp_x.abs()), (y - amp_y.abs(), y + amp_y.abs()))
            }
            MotionProfile::PiecewiseAccel { x, y, vx, vy, segments } => {
                let (mut px, mut py, mut cvx, mut cvy) = (*x, *y, *vx, *vy);
                let (mut min_x, mut max_x, mut min_y, mut max_y) = (*x, *x, *y, *y);
                let mut remaining = t_end_s;
                let scan = |p0: f64, v: f64, a: f64, tau: f64, lo: &mut f64, hi: &mut f64| {
                    // Quadratic extrema on [0, tau]: endpoints plus the
                    // vertex -v/a when it falls inside.
                    let mut consider = |t: f64| {
                        let p = p0 + v * t + 0.5 * a * t * t;
                        *lo = lo.min(p);
                        *hi = hi.max(p);
                    };
                    consider(tau);
                    if a != 0.0 {
                        let t_v = -v / a;
                        if t_v > 0.0 && t_v < tau {
                            consider(t_v);
                        }
                    }
                };
                for seg in segments {
                    if remaining <= 0.0 {
                        break;
                    }
                    let tau = remaining.min(seg.duration_s);
                    scan(px, cvx, seg.ax, tau, &mut min_x, &mut max_x);
                    scan(py, cvy, seg.ay, tau, &mut min_y, &mut max_y);
                    px += cvx * tau + 0.5 * seg.ax * tau * tau;
                    py += cvy * tau + 0.5 * seg.ay * tau * tau;
                    cvx += seg.ax * tau;
                    cvy += seg.ay * tau;
                    remaining -= tau;
                }
                if remaining > 0.0 {
                    scan(px, cvx, 0.0, remaining, &mut min_x, &mut max_x);
                    scan(py, cvy, 0.0, remaining, &mut min_y, &mut max_y);
                }
                ((min_x, max_x), (min_y, max_y))
            }
        }
    }

    /// Same path translated so its bounds over `[0, t_end_s]` sit centered
    /// in the sensor; errors if the motion span plus margin does not fit.
    pub fn recentered(
        self,
        geometry: SensorGeometry,
        margin_px: f64,
        t_end_s: f64,
    ) -> Result<MotionPath, SynthError> {
        let ((min_x, max_x), (min_y, max_y)) = self.bounds(t_end_s);
        let span_x = max_x - min_x;
        let span_y = max_y - min_y;
        let w = f64::from(geometry.width);
        let h = f64::from(geometry.height);
        if span_x + 2.0 * margin_px > w || span_y + 2.0 * margin_px > h {
            return Err(SynthError::PathTooLarge { span_x, span_y, margin: margin_px });
        }
        let dx = (w - span_x) / 2.0 - min_x;
        let dy = (h - span_y) / 2.0 - min_y;
        Ok(self.translated(dx, dy))
    }

    pub fn translated(mut self, dx: f64, dy: f64) -> MotionPath {
        match &mut self.profile {
            MotionProfile::Static { x, y }
            | MotionProfile::ConstantVelocity { x, y, .. }
            | MotionProfile::Sinusoidal { x, y, .. }
            | MotionProfile::PiecewiseAccel { x, y, .. } => {
                *x += dx;
                *y += dy;
            }
            MotionProfile::Circular { cx, cy, .. } => {
                *cx += dx;
                *cy += dy;
            }
        }
        self
    }
}

impl GroundTruthLookup for MotionPath {
    fn center_at(&self, t_us: u64) -> Option<(f64, f64)> {
        Some(self.position(t_us as f64 / 1e6))
    }
}

/// Annotation track sampled from a path at a fixed frame rate.
#[derive(Debug, Clone)]
pub struct SimulatedTrack {
    pub annotations: Vec<BoundingBoxObservation>,
    /// Whether any box had to be clamped to the sensor edge; when true the
    /// box centers no longer equal the path positions everywhere.
    pub any_clamped: bool,
}

/// Boxes of size `box_w x box_h` centered on the path, at frames
/// `k / fps` for `k = 0 ..= floor(duration * fps)`.
pub fn simulate_track(
    path: &MotionPath,
    box_w: f64,
    box_h: f64,
    fps: f64,
    duration_s: f64,
    track_id: u32,
    geometry: SensorGeometry,
) -> Result<SimulatedTrack, SynthError> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(SynthError::BadFps(fps));
    }
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(SynthError::BadDuration(duration_s));
    }
    if !(box_w > 0.0 && box_h > 0.0) {
        return Err(SynthError::BadBoxSize { w: box_w, h: box_h });
    }
    let frames = (duration_s * fps + 1e-9).floor() as u64;
    let mut annotations = Vec::with_capacity(frames as usize + 1);
    let mut any_clamped = false;
    for k in 0..=frames {
        let t_s = k as f64 / fps;
        let t_us = round_us(t_s);
        let (cx, cy) = path.position(t_s);
        let b = BoundingBoxObservation::new(
            t_us,
            track_id,
            cx - box_w / 2.0,
            cy - box_h / 2.0,
            box_w,
            box_h,
            geometry,
        )?;
        any_clamped |= b.clamped;
        annotations.push(b);
    }
    Ok(SimulatedTrack { annotations, any_clamped })
}

/// Gaussian perturbation of box positions (sizes untouched), for benchmarks
/// that want realistic annotation noise while keeping the clean path as
/// ground truth. Standard Box-Muller from a seeded generator.
pub fn jitter_annotations(
    annotations: &[BoundingBoxObservation],
    sigma_px: f64,
    seed: u64,
    geometry: SensorGeometry,
) -> Result<Vec<BoundingBoxObservation>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = move || {
        let u1: f64 = rng.random_range(f64::EPSILON..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    };
    annotations
        .iter()
        .map(|b| {
            Ok(BoundingBoxObservation::new(
                b.t_us,
                b.track_id,
                b.x_min + sigma_px * gauss(),
                b.y_min + sigma_px * gauss(),
                b.w,
                b.h,
                geometry,
            )?)
        })
        .collect()
}

/// Complete scene description: a propeller riding a motion path, watched by
/// a boxed annotation track, with optional background noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub geometry: SensorGeometry,
    pub duration_s: f64,
    pub fps: f64,
    pub box_w: f64,
    pub box_h: f64,
    pub blades: u32,
    pub blade_len_px: f64,
    pub blade_width_rad: f64,
    pub profile: RpmProfile,
    pub jitter_us: u32,
    pub motion: MotionProfile,
    /// Background noise in events per second over the whole sensor.
    pub noise_rate_hz: f64,
    pub seed: u64,
}

/// A generated scene: the event stream, the annotation track, and the exact
/// path for ground-truth queries.
#[derive(Debug, Clone)]
pub struct SimulatedScene {
    pub stream: EventStream,
    pub track: SimulatedTrack,
    pub path: MotionPath,
}

/// Generates a scene. Propeller events are produced in the path's initial
/// frame and shifted by the integer-rounded path displacement at each
/// event's timestamp; events leaving the sensor are dropped.
pub fn simulate_scene(spec: &SceneSpec) -> Result<SimulatedScene, SynthError> {
    let path = MotionPath::new(spec.motion.clone());
    let origin = path.position(0.0);
    let prop = PropellerSpec {
        center: origin,
        blade_len_px: spec.blade_len_px,
        blades: spec.blades,
        blade_width_rad: spec.blade_width_rad,
        profile: spec.profile.clone(),
        jitter_us: spec.jitter_us,
        seed: spec.seed,
    };
    let raw = simulate_propeller_events(&prop, spec.geometry, spec.duration_s)?;
    let mut events: Vec<Event> = raw
        .into_iter()
        .filter_map(|e| {
            let (px, py) = path.position(e.t_us as f64 / 1e6);
            let dx = (px - origin.0).round() as i64;
            let dy = (py - origin.1).round() as i64;
            let x = i64::from(e.x) + dx;
            let y = i64::from(e.y) + dy;
            if x < 0 || y < 0 || x >= i64::from(spec.geometry.width) || y >= i64::from(spec.geometry.height)
            {
                return None;
            }
            Some(Event { t_us: e.t_us, x: x as u16, y: y as u16, polarity: e.polarity })
        })
        .collect();
    if spec.noise_rate_hz > 0.0 {
        add_noise_events(
            &mut events,
            spec.geometry,
            spec.noise_rate_hz,
            spec.duration_s,
            // Separate stream from the jitter draw so toggling jitter does
            // not reshuffle the noise.
            spec.seed ^ 0x9E37_79B9_7F4A_7C15,
        )?;
    }
    let stream = EventStream::new(spec.geometry, events)?;
    let track = simulate_track(
        &path,
        spec.box_w,
        spec.box_h,
        spec.fps,
        spec.duration_s,
        0,
        spec.geometry,
    )?;
    Ok(SimulatedScene { stream, track, path })
}

/// Reference rotation-rate reading, independent of the histogram pipeline:
/// collects every per-pixel OFF-to-ON interval in the window, scans
/// candidate periods on a 0.01 ms grid scoring each by how many intervals
/// fall within 0.05 ms, and returns the median of the top-scoring
/// candidates. `None` below 10 intervals.
pub fn oracle_rpm(events: &[Event], blades: u32, t_start_us: u64, t_end_us: u64) -> Option<f64> {
    let lo = events.partition_point(|e| e.t_us < t_start_us);
    let hi = events.partition_point(|e| e.t_us < t_end_us);
    let mut last_off: HashMap<(u16, u16), u64> = HashMap::new();
    let mut gaps_ms: Vec<f64> = Vec::new();
    for e in &events[lo..hi] {
        match e.polarity {
            Polarity::Off => {
                last_off.insert((e.x, e.y), e.t_us);
            }
            Polarity::On => {
                if let Some(&t_off) = last_off.get(&(e.x, e.y)) {
                    gaps_ms.push((e.t_us - t_off) as f64 / 1000.0);
                }
            }
        }
    }
    if gaps_ms.len() < 10 {
        return None;
    }
    gaps_ms.sort_by(f64::total_cmp);
    let mut best_score = 0usize;
    let mut best_candidates: Vec<f64> = Vec::new();
    let mut t = 0.05f64;
    while t < 25.6 {
        let lo_idx = gaps_ms.partition_point(|&g| g < t - 0.05);
        let hi_idx = gaps_ms.partition_point(|&g| g <= t + 0.05);
        let score = hi_idx - lo_idx;
        if score > best_score {
            best_score = score;
            best_candidates.clear();
            best_candidates.push(t);
        } else if score == best_score && score > 0 {
            best_candidates.push(t);
        }
        t += 0.01;
    }
    if best_score == 0 {
        return None;
    }
    let period_ms = best_candidates[best_candidates.len() / 2];
    Some(60_000.0 / (period_ms * f64::from(blades)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn profile_angle_and_inverse_agree() {
        let p = RpmProfile::constant(6_000.0).unwrap();
        let omega = omega_rad_s(6_000.0);
        assert_relative_eq!(p.angle_at(1.0), omega, epsilon = 1e-12);
        assert_relative_eq!(p.time_at_angle(omega / 2.0), 0.5, epsilon = 1e-12);
        assert_eq!(p.rpm_at(0.0), 6_000.0);

        let step = RpmProfile::new(vec![(0.0, 6_000.0), (1.0, 12_000.0)]).unwrap();
        assert_eq!(step.rpm_at(0.5), 6_000.0);
        assert_eq!(step.rpm_at(1.0), 12_000.0);
        let a = step.angle_at(1.5);
        assert_relative_eq!(a, omega + omega_rad_s(12_000.0) * 0.5, epsilon = 1e-9);
        assert_relative_eq!(step.time_at_angle(a), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn profile_validation() {
        assert!(RpmProfile::new(vec![]).is_err());
        assert!(RpmProfile::new(vec![(0.5, 100.0)]).is_err());
        assert!(RpmProfile::new(vec![(0.0, 100.0), (0.0, 200.0)]).is_err());
        assert!(RpmProfile::new(vec![(0.0, -5.0)]).is_err());
        assert!(RpmProfile::constant(0.0).is_err());
    }

    fn thin_prop(rpm: f64, seed: u64) -> PropellerSpec {
        PropellerSpec {
            center: (32.0, 32.0),
            blade_len_px: 6.0,
            blades: 2,
            blade_width_rad: 1e-4,
            profile: RpmProfile::constant(rpm).unwrap(),
            jitter_us: 0,
            seed,
        }
    }

    #[test]
    fn pixel_on_axis_fires_every_half_revolution() {
        // 6000 RPM, two blades: a blade edge crosses each pixel every 5 ms.
        // The pixel at angle zero sees its first ON at t = 0.
        let g = SensorGeometry::new(64, 64);
        let events = simulate_propeller_events(&thin_prop(6_000.0, 0), g, 0.5).unwrap();
        let ons: Vec<u64> = events
            .iter()
            .filter(|e| e.x == 38 && e.y == 32 && e.polarity == Polarity::On)
            .map(|e| e.t_us)
            .collect();
        assert!(ons.len() >= 99, "got {} ONs", ons.len());
        for (k, &t) in ons.iter().enumerate() {
            assert_eq!(t, k as u64 * 5_000);
        }
        // Matching OFFs exist and never precede their ON.
        let offs = events
            .iter()
            .filter(|e| e.x == 38 && e.y == 32 && e.polarity == Polarity::Off)
            .count();
        assert!(offs >= ons.len() - 1);
    }

    #[test]
    fn events_cover_only_the_annulus() {
        let g = SensorGeometry::new(64, 64);
        let spec = thin_prop(12_000.0, 0);
        let events = simulate_propeller_events(&spec, g, 0.1).unwrap();
        assert!(!events.is_empty());
        for e in &events {
            let dx = f64::from(e.x) - 32.0;
            let dy = f64::from(e.y) - 32.0;
            let rho = dx.hypot(dy);
            assert!((1.0..=6.0).contains(&rho), "event at rho {rho}");
        }
        // Sorted stream, accepted by the validating constructor.
        EventStream::new(g, events).unwrap();
    }

    #[test]
    fn jitter_preserves_order_and_determinism() {
        let g = SensorGeometry::new(64, 64);
        let mut spec = thin_prop(9_000.0, 42);
        spec.jitter_us = 20;
        let a = simulate_propeller_events(&spec, g, 0.2).unwrap();
        let b = simulate_propeller_events(&spec, g, 0.2).unwrap();
        assert_eq!(a, b);
        for pair in a.windows(2) {
            assert!(pair[0].t_us <= pair[1].t_us);
        }
        // Jitter actually moved something relative to the clean stream.
        spec.jitter_us = 0;
        let clean = simulate_propeller_events(&spec, g, 0.2).unwrap();
        assert_ne!(a, clean);
        assert_eq!(a.len(), clean.len());
    }

    #[test]
    fn propeller_validation() {
        let g = SensorGeometry::new(64, 64);
        let mut s = thin_prop(6_000.0, 0);
        s.blade_len_px = 1.0;
        assert!(matches!(
            simulate_propeller_events(&s, g, 0.1),
            Err(SynthError::BladeTooShort(_))
        ));
        let mut s = thin_prop(6_000.0, 0);
        s.blades = 0;
        assert!(matches!(simulate_propeller_events(&s, g, 0.1), Err(SynthError::ZeroBlades)));
        let mut s = thin_prop(6_000.0, 0);
        s.blade_width_rad = TAU; // wider than the sector
        assert!(matches!(
            simulate_propeller_events(&s, g, 0.1),
            Err(SynthError::BadBladeWidth { .. })
        ));
        let s = thin_prop(6_000.0, 0);
        assert!(matches!(
            simulate_propeller_events(&s, g, 0.0),
            Err(SynthError::BadDuration(_))
        ));
    }

    #[test]
    fn noise_events_fill_sensor_deterministically() {
        let g = SensorGeometry::new(100, 80);
        let mut a = Vec::new();
        let n = add_noise_events(&mut a, g, 1_000.0, 2.0, 7).unwrap();
        assert_eq!(n, 2_000);
        assert_eq!(a.len(), 2_000);
        let mut b = Vec::new();
        add_noise_events(&mut b, g, 1_000.0, 2.0, 7).unwrap();
        assert_eq!(a, b);
        for e in &a {
            assert!(g.contains(e.x, e.y));
            assert!(e.t_us < 2_000_000);
        }
        for pair in a.windows(2) {
            assert!(pair[0].t_us <= pair[1].t_us);
        }
        // Both polarities occur.
        assert!(a.iter().any(|e| e.polarity == Polarity::On));
        assert!(a.iter().any(|e| e.polarity == Polarity::Off));
    }

    #[test]
    fn motion_paths_evaluate_in_closed_form() {
        let cv = MotionPath::new(MotionProfile::ConstantVelocity {
            x: 10.0,
            y: 20.0,
            vx: 5.0,
            vy: -2.0,
        });
        assert_eq!(cv.position(2.0), (20.0, 16.0));

        let circ = MotionPath::new(MotionProfile::Circular {
            cx: 100.0,
            cy: 100.0,
            radius: 50.0,
            period_s: 4.0,
            phase_rad: 0.0,
        });
        let (x, y) = circ.position(1.0); // quarter turn
        assert_relative_eq!(x, 100.0, epsilon = 1e-9);
        assert_relative_eq!(y, 150.0, epsilon = 1e-9);

        let accel = MotionPath::new(MotionProfile::PiecewiseAccel {
            x: 0.0,
            y: 0.0,
            vx: 10.0,
            vy: 0.0,
            segments: vec![AccelSegment { duration_s: 2.0, ax: 5.0, ay: 1.0 }],
        });
        // Inside the segment: x = 10t + 2.5t^2.
        assert_eq!(accel.position(2.0), (30.0, 2.0));
        // Past the segment: continue at v = (20, 2).
        assert_eq!(accel.position(3.0), (50.0, 4.0));
    }

    #[test]
    fn piecewise_bounds_catch_interior_extrema() {
        // Launch left, decelerate: turning point at t = 1 (x = -5), then
        // return. Endpoints alone would miss the minimum.
        let path = MotionPath::new(MotionProfile::PiecewiseAccel {
            x: 0.0,
            y: 0.0,
            vx: -10.0,
            vy: 0.0,
            segments: vec![AccelSegment { duration_s: 4.0, ax: 10.0, ay: 0.0 }],
        });
        let ((min_x, max_x), _) = path.bounds(4.0);
        assert_relative_eq!(min_x, -5.0, epsilon = 1e-9);
        assert_relative_eq!(max_x, 40.0, epsilon = 1e-9);
    }

    #[test]
    fn recentered_fits_or_errors() {
        let g = SensorGeometry::new(200, 100);
        let path = MotionPath::new(MotionProfile::ConstantVelocity {
            x: 0.0,
            y: 0.0,
            vx: 50.0,
            vy: 10.0,
        });
        let fitted = path.clone().recentered(g, 10.0, 2.0).unwrap();
        let ((min_x, max_x), (min_y, max_y)) = fitted.bounds(2.0);
        assert!(min_x >= 10.0 && max_x <= 190.0);
        assert!(min_y >= 10.0 && max_y <= 90.0);
        assert_relative_eq!((min_x + max_x) / 2.0, 100.0, epsilon = 1e-9);

        let too_fast = MotionPath::new(MotionProfile::ConstantVelocity {
            x: 0.0,
            y: 0.0,
            vx: 500.0,
            vy: 0.0,
        });
        assert!(matches!(
            too_fast.recentered(g, 10.0, 2.0),
            Err(SynthError::PathTooLarge { .. })
        ));
    }

    #[test]
    fn track_sampling_grid_and_clamping() {
        let g = SensorGeometry::new(200, 200);
        let path = MotionPath::new(MotionProfile::Static { x: 100.0, y: 100.0 });
        let track = simulate_track(&path, 40.0, 30.0, 30.0, 1.0, 3, g).unwrap();
        assert_eq!(track.annotations.len(), 31);
        assert!(!track.any_clamped);
        assert_eq!(track.annotations[0].t_us, 0);
        assert_eq!(track.annotations[1].t_us, 33_333);
        assert_eq!(track.annotations[30].t_us, 1_000_000);
        assert_eq!(track.annotations[7].track_id, 3);
        assert_eq!(track.annotations[7].center(), (100.0, 100.0));

        let edge = MotionPath::new(MotionProfile::Static { x: 5.0, y: 100.0 });
        let track = simulate_track(&edge, 40.0, 30.0, 30.0, 0.1, 0, g).unwrap();
        assert!(track.any_clamped);
    }

    #[test]
    fn jittered_annotations_keep_grid_and_size() {
        let g = SensorGeometry::new(200, 200);
        let path = MotionPath::new(MotionProfile::Static { x: 100.0, y: 100.0 });
        let track = simulate_track(&path, 40.0, 30.0, 30.0, 1.0, 0, g).unwrap();
        let jittered = jitter_annotations(&track.annotations, 1.5, 9, g).unwrap();
        assert_eq!(jittered.len(), track.annotations.len());
        let mut moved = 0;
        for (a, b) in track.annotations.iter().zip(&jittered) {
            assert_eq!(a.t_us, b.t_us);
            assert_eq!(a.w, b.w);
            if (a.x_min - b.x_min).abs() > 1e-12 {
                moved += 1;
            }
        }
        assert!(moved > 25, "jitter moved only {moved} boxes");
        // Same seed reproduces.
        let again = jitter_annotations(&track.annotations, 1.5, 9, g).unwrap();
        assert_eq!(jittered, again);
    }

    #[test]
    fn scene_translates_events_with_the_path() {
        let profile = RpmProfile::constant(6_000.0).unwrap();
        let spec = SceneSpec {
            geometry: SensorGeometry::new(128, 64),
            duration_s: 1.0,
            fps: 30.0,
            box_w: 24.0,
            box_h: 24.0,
            blades: 2,
            blade_len_px: 6.0,
            blade_width_rad: 1e-4,
            profile,
            jitter_us: 0,
            motion: MotionProfile::ConstantVelocity { x: 30.0, y: 32.0, vx: 40.0, vy: 0.0 },
            noise_rate_hz: 0.0,
            seed: 5,
        };
        let scene = simulate_scene(&spec).unwrap();
        assert!(!scene.track.any_clamped);
        // Events near the end of the second sit around the translated
        // center, not the origin.
        let late: Vec<&Event> =
            scene.stream.events().iter().filter(|e| e.t_us > 900_000).collect();
        assert!(!late.is_empty());
        for e in late {
            let (cx, _) = scene.path.position(e.t_us as f64 / 1e6);
            assert!((f64::from(e.x) - cx).abs() <= 7.0, "event x {} vs center {}", e.x, cx);
        }
        // The path is its own ground-truth lookup.
        assert_eq!(scene.path.center_at(0), Some((30.0, 32.0)));
    }

    #[test]
    fn oracle_recovers_known_rate() {
        let g = SensorGeometry::new(64, 64);
        for rpm in [3_000.0, 6_000.0, 15_000.0] {
            let events = simulate_propeller_events(&thin_prop(rpm, 1), g, 0.4).unwrap();
            let got = oracle_rpm(&events, 2, 0, 400_000).unwrap();
            let rel = (got - rpm).abs() / rpm;
            assert!(rel < 0.02, "oracle {got} vs true {rpm}");
        }
        // Too little data refuses to answer.
        assert_eq!(oracle_rpm(&[], 2, 0, 1_000_000), None);
    }

    proptest! {
        /// Per-pixel ON-to-ON spacing equals the blade period to within the
        /// microsecond rounding of the two timestamps.
        #[test]
        fn on_to_on_spacing_matches_blade_period(rpm in 2_400.0f64..24_000.0) {
            let g = SensorGeometry::new(64, 64);
            let events = simulate_propeller_events(&thin_prop(rpm, 0), g, 0.25).unwrap();
            let period_us = 60e6 / (rpm * 2.0);
            let mut per_pixel: HashMap<(u16, u16), u64> = HashMap::new();
            let mut checked = 0usize;
            for e in &events {
                if e.polarity != Polarity::On {
                    continue;
                }
                if let Some(prev) = per_pixel.insert((e.x, e.y), e.t_us) {
                    let gap = (e.t_us - prev) as f64;
                    prop_assert!((gap - period_us).abs() <= 1.0 + 1e-6,
                        "gap {} vs period {}", gap, period_us);
                    checked += 1;
                }
            }
            prop_assert!(checked > 100);
        }

        /// The generated stream is always time-sorted and in bounds, jitter
        /// or not.
        #[test]
        fn generated_streams_are_valid(rpm in 2_400.0f64..24_000.0, jitter in 0u32..30) {
            let g = SensorGeometry::new(48, 48);
            let mut spec = thin_prop(rpm, 11);
            spec.center = (24.0, 24.0);
            spec.jitter_us = jitter;
            let events = simulate_propeller_events(&spec, g, 0.12).unwrap();
            prop_assert!(EventStream::new(g, events).is_ok());
        }
    }
}
