//! Constant-velocity Kalman filtering with rotation-rate-modulated process
//! noise, plus fixed-grid forecasting.
//!
//! State is `(cx, cy, vx, vy)` in pixels and pixels/second. The measurement
//! is the full state: box center position plus the finite-difference
//! velocity of successive centers, so the velocity component of the
//! measurement noise grows as `1/dt^2` relative to the position noise.
//!
//! The one non-textbook ingredient is the process-noise scale
//!
//! ```text
//! alpha_v = max(0.5, 1 + 2 r + max(0, r_dot))
//! ```
//!
//! where `r` is the propeller rate normalized into `[0, 1]` over the
//! operating range and `r_dot` its clamped trend. Spin-up forecasts a
//! maneuver before the box center moves; inflating the process noise right
//! then lets the filter re-converge faster once the center does move.

use nalgebra::{Matrix4, Vector4};
use thiserror::Error;

use crate::events::BoundingBoxObservation;
use crate::rpm::RpmEstimate;

pub const DEFAULT_RPM_LO: f64 = 2_300.0;
pub const DEFAULT_RPM_HI: f64 = 30_000.0;
/// Divisor applied to the raw normalized-rate slope (1/s) before clamping
/// to [-1, 1]; a full-range spin-up over 2 s saturates the trend term.
pub const DEFAULT_R_DOT_SCALE: f64 = 2.0;
/// Initial covariance: loose enough to let the first updates dominate.
pub const INIT_POS_VAR: f64 = 10.0;
pub const INIT_VEL_VAR: f64 = 100.0;

#[derive(Debug, Error, PartialEq)]
pub enum KalmanError {
    #[error("time must advance: state at {state_us}us, requested {requested_us}us")]
    NonIncreasingTime { state_us: u64, requested_us: u64 },
    #[error("measurement at {measurement_us}us does not match state time {state_us}us")]
    MeasurementTimeMismatch { state_us: u64, measurement_us: u64 },
    #[error("measurement spacing must be positive, got {0} s")]
    BadMeasurementDt(f64),
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("covariance is not symmetric (max asymmetry {0})")]
    AsymmetricCovariance(f64),
    #[error("covariance has negative diagonal entry {0}")]
    NegativeVariance(f64),
    #[error("process noise scale must be positive, got {0}")]
    BadAlpha(f64),
    #[error("rpm range requires 0 < lo < hi, got [{lo}, {hi}]")]
    BadRpmRange { lo: f64, hi: f64 },
    #[error("noise intensities must be positive")]
    BadNoiseConfig,
    #[error("forecast horizon must be positive, got {0} s")]
    BadHorizon(f64),
    #[error("forecast step must be positive, got {0} s")]
    BadStep(f64),
    #[error("horizons must be non-empty and strictly ascending")]
    BadHorizonList,
    #[error("r_dot scale must be positive, got {0}")]
    BadRDotScale(f64),
    #[error("track needs at least {needed} observations, got {got}")]
    TrackTooShort { needed: usize, got: usize },
    #[error("trajectory must be non-empty")]
    EmptyTrajectory,
    #[error("trajectory timestamps must strictly increase (offender at {t_us}us)")]
    NonIncreasingTrajectory { t_us: u64 },
    #[error("normalized rate {0} outside [0, 1]")]
    RateOutOfRange(f64),
    #[error("rate trend {0} outside [-1, 1]")]
    TrendOutOfRange(f64),
}

/// Process noise intensities (continuous, per second) and position
/// measurement variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub q_cx: f64,
    pub q_cy: f64,
    pub q_vx: f64,
    pub q_vy: f64,
    pub r_pos: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { q_cx: 1.0, q_cy: 1.0, q_vx: 10.0, q_vy: 10.0, r_pos: 1.0 }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), KalmanError> {
        let ok = self.q_cx > 0.0
            && self.q_cy > 0.0
            && self.q_vx > 0.0
            && self.q_vy > 0.0
            && self.r_pos > 0.0;
        if ok { Ok(()) } else { Err(KalmanError::BadNoiseConfig) }
    }
}

/// Which block of the process noise the modulation scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScaleScope {
    /// Scale the whole diagonal.
    #[default]
    Full,
    /// Scale only the velocity intensities; position noise stays at base.
    VelocityOnly,
}

/// Operating range used to normalize raw RPM into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpmRange {
    lo: f64,
    hi: f64,
}

impl RpmRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self, KalmanError> {
        if !(lo > 0.0 && hi > lo) {
            return Err(KalmanError::BadRpmRange { lo, hi });
        }
        Ok(RpmRange { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Clamped affine map of `rpm` onto `[0, 1]`.
    pub fn normalize(&self, rpm: f64) -> f64 {
        ((rpm - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }
}

impl Default for RpmRange {
    fn default() -> Self {
        RpmRange { lo: DEFAULT_RPM_LO, hi: DEFAULT_RPM_HI }
    }
}

/// Process-noise scale from normalized rate and clamped trend.
///
/// Panics if the inputs are outside their documented ranges; callers obtain
/// them from [`RpmRange::normalize`] and [`compute_r_dot`], which clamp.
pub fn compute_alpha_v(r: f64, r_dot: f64) -> f64 {
    assert!((0.0..=1.0).contains(&r), "normalized rate {r} outside [0, 1]");
    assert!((-1.0..=1.0).contains(&r_dot), "rate trend {r_dot} outside [-1, 1]");
    (1.0 + 2.0 * r + r_dot.max(0.0)).max(0.5)
}

/// Clamped trend of the normalized rate between two samples `dt_s` apart.
pub fn compute_r_dot(r_prev: f64, r_now: f64, dt_s: f64, scale: f64) -> f64 {
    assert!(dt_s > 0.0, "sample spacing must be positive");
    assert!(scale > 0.0, "trend scale must be positive");
    ((r_now - r_prev) / dt_s / scale).clamp(-1.0, 1.0)
}

/// Tracks the normalized rotation rate and its trend across a stream of
/// (possibly invalid) rate estimates.
///
/// Before any valid estimate the rate is held at 0.5 with zero trend, the
/// center of the operating range: with no rotation signal the filter runs
/// with `alpha_v = 2` rather than pretending the props are idle. Invalid
/// estimates hold the previous rate; the trend then decays to zero.
#[derive(Debug, Clone)]
pub struct ModulationTracker {
    range: RpmRange,
    r_dot_scale: f64,
    r: f64,
    r_dot: f64,
    prev: Option<(u64, f64)>,
}

impl ModulationTracker {
    pub fn new(range: RpmRange, r_dot_scale: f64) -> Result<Self, KalmanError> {
        let positive = r_dot_scale > 0.0;
        if !positive {
            return Err(KalmanError::BadRDotScale(r_dot_scale));
        }
        Ok(ModulationTracker { range, r_dot_scale, r: 0.5, r_dot: 0.0, prev: None })
    }

    /// Feeds one estimate; `None` marks an invalid readout.
    pub fn observe(&mut self, t_us: u64, rpm: Option<f64>) {
        let r_now = match rpm {
            Some(v) => self.range.normalize(v),
            None => self.r,
        };
        if let Some((t_prev, r_prev)) = self.prev {
            if t_us > t_prev {
                let dt_s = (t_us - t_prev) as f64 / 1e6;
                self.r_dot = compute_r_dot(r_prev, r_now, dt_s, self.r_dot_scale);
            }
        }
        self.prev = Some((t_us, r_now));
        self.r = r_now;
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn r_dot(&self) -> f64 {
        self.r_dot
    }

    pub fn alpha_v(&self) -> f64 {
        compute_alpha_v(self.r, self.r_dot)
    }
}

/// Full-state measurement: box center plus finite-difference velocity, with
/// the spacing that produced the velocity (it sets the velocity variance).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub t_us: u64,
    pub cx: f64,
    pub cy: f64,
    pub vx: f64,
    pub vy: f64,
    pub dt_meas_s: f64,
}

/// Builds a measurement at `curr` from two chronological box observations.
pub fn measurement_from_boxes(
    prev: &BoundingBoxObservation,
    curr: &BoundingBoxObservation,
) -> Result<Measurement, KalmanError> {
    if curr.t_us <= prev.t_us {
        return Err(KalmanError::NonIncreasingTime {
            state_us: prev.t_us,
            requested_us: curr.t_us,
        });
    }
    let dt_s = (curr.t_us - prev.t_us) as f64 / 1e6;
    let (pcx, pcy) = prev.center();
    let (cx, cy) = curr.center();
    Ok(Measurement {
        t_us: curr.t_us,
        cx,
        cy,
        vx: (cx - pcx) / dt_s,
        vy: (cy - pcy) / dt_s,
        dt_meas_s: dt_s,
    })
}

fn transition(dt_s: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt_s;
    f[(1, 3)] = dt_s;
    f
}

fn scaled_process_noise(
    noise: &NoiseConfig,
    alpha_v: f64,
    dt_s: f64,
    scope: ScaleScope,
) -> Matrix4<f64> {
    let (a_pos, a_vel) = match scope {
        ScaleScope::Full => (alpha_v, alpha_v),
        ScaleScope::VelocityOnly => (1.0, alpha_v),
    };
    Matrix4::from_diagonal(&Vector4::new(
        a_pos * noise.q_cx * dt_s,
        a_pos * noise.q_cy * dt_s,
        a_vel * noise.q_vx * dt_s,
        a_vel * noise.q_vy * dt_s,
    ))
}

/// Filter state at a point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub t_us: u64,
    pub x: Vector4<f64>,
    pub p: Matrix4<f64>,
}

impl FilterState {
    /// Validates that `p` is symmetric (to 1e-9, scaled) with a non-negative
    /// diagonal.
    pub fn new(t_us: u64, x: Vector4<f64>, p: Matrix4<f64>) -> Result<Self, KalmanError> {
        let mut max_asym = 0.0f64;
        for i in 0..4 {
            for j in (i + 1)..4 {
                let scale = p[(i, j)].abs().max(p[(j, i)].abs()).max(1.0);
                max_asym = max_asym.max((p[(i, j)] - p[(j, i)]).abs() / scale);
            }
        }
        if max_asym > 1e-9 {
            return Err(KalmanError::AsymmetricCovariance(max_asym));
        }
        for i in 0..4 {
            if p[(i, i)] < 0.0 {
                return Err(KalmanError::NegativeVariance(p[(i, i)]));
            }
        }
        Ok(FilterState { t_us, x, p })
    }

    /// State with the stock initial covariance, positioned and moving per
    /// the given measurement.
    pub fn from_measurement(m: &Measurement) -> Self {
        FilterState {
            t_us: m.t_us,
            x: Vector4::new(m.cx, m.cy, m.vx, m.vy),
            p: Matrix4::from_diagonal(&Vector4::new(
                INIT_POS_VAR,
                INIT_POS_VAR,
                INIT_VEL_VAR,
                INIT_VEL_VAR,
            )),
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x[0], self.x[1])
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.x[2], self.x[3])
    }

    /// Time propagation to `t_us` under the constant-velocity model with
    /// process noise `alpha_v * Q_base * dt` (scope selects which diagonal
    /// entries see `alpha_v`).
    pub fn predict_to(
        &mut self,
        t_us: u64,
        alpha_v: f64,
        noise: &NoiseConfig,
        scope: ScaleScope,
    ) -> Result<(), KalmanError> {
        if t_us <= self.t_us {
            return Err(KalmanError::NonIncreasingTime { state_us: self.t_us, requested_us: t_us });
        }
        if !(alpha_v > 0.0 && alpha_v.is_finite()) {
            return Err(KalmanError::BadAlpha(alpha_v));
        }
        let dt_s = (t_us - self.t_us) as f64 / 1e6;
        let f = transition(dt_s);
        self.x = f * self.x;
        self.p = f * self.p * f.transpose() + scaled_process_noise(noise, alpha_v, dt_s, scope);
        self.p = (self.p + self.p.transpose()) * 0.5;
        self.t_us = t_us;
        Ok(())
    }

    /// Measurement update in Joseph form, which keeps the covariance
    /// positive semi-definite under roundoff. The measurement maps the full
    /// state one-to-one; its velocity variance is `2 r_pos / dt^2`, the
    /// variance of a difference of two position measurements divided by dt.
    pub fn update(&mut self, m: &Measurement, noise: &NoiseConfig) -> Result<(), KalmanError> {
        if m.t_us != self.t_us {
            return Err(KalmanError::MeasurementTimeMismatch {
                state_us: self.t_us,
                measurement_us: m.t_us,
            });
        }
        let positive_dt = m.dt_meas_s > 0.0;
        if !positive_dt {
            return Err(KalmanError::BadMeasurementDt(m.dt_meas_s));
        }
        let r_vel = 2.0 * noise.r_pos / (m.dt_meas_s * m.dt_meas_s);
        let r = Matrix4::from_diagonal(&Vector4::new(noise.r_pos, noise.r_pos, r_vel, r_vel));
        let z = Vector4::new(m.cx, m.cy, m.vx, m.vy);
        let s = self.p + r;
        let s_inv = s.try_inverse().ok_or(KalmanError::SingularInnovation)?;
        let k = self.p * s_inv;
        self.x += k * (z - self.x);
        let ikh = Matrix4::identity() - k;
        self.p = ikh * self.p * ikh.transpose() + k * r * k.transpose();
        self.p = (self.p + self.p.transpose()) * 0.5;
        Ok(())
    }
}

/// One forecast sample: predicted center at an absolute timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t_us: u64,
    pub cx: f64,
    pub cy: f64,
}

/// Non-empty, strictly time-ordered sequence of predicted centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn from_points(points: Vec<TrajectoryPoint>) -> Result<Self, KalmanError> {
        if points.is_empty() {
            return Err(KalmanError::EmptyTrajectory);
        }
        for pair in points.windows(2) {
            if pair[1].t_us <= pair[0].t_us {
                return Err(KalmanError::NonIncreasingTrajectory { t_us: pair[1].t_us });
            }
        }
        Ok(Trajectory { points })
    }

    pub fn push(&mut self, p: TrajectoryPoint) -> Result<(), KalmanError> {
        if p.t_us <= self.last().t_us {
            return Err(KalmanError::NonIncreasingTrajectory { t_us: p.t_us });
        }
        self.points.push(p);
        Ok(())
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectory is non-empty")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Relative forecast offsets: multiples of `step_s` strictly inside the
/// horizon, then the horizon itself, so the final sample always lands
/// exactly on the requested lead time.
pub fn forecast_offsets_s(horizon_s: f64, step_s: f64) -> Result<Vec<f64>, KalmanError> {
    if !(horizon_s > 0.0 && horizon_s.is_finite()) {
        return Err(KalmanError::BadHorizon(horizon_s));
    }
    if !(step_s > 0.0 && step_s.is_finite()) {
        return Err(KalmanError::BadStep(step_s));
    }
    // The subtraction absorbs float residue in horizon/step so an exact
    // multiple (0.4 / (1/30) = 12.000000000000002) stays 12 steps.
    let n = ((horizon_s / step_s - 1e-9).ceil()).max(1.0) as usize;
    let mut offsets = Vec::with_capacity(n);
    for k in 1..=n {
        offsets.push(if k == n { horizon_s } else { step_s * k as f64 });
    }
    Ok(offsets)
}

/// Rolls the state forward over the forecast grid without measurement
/// updates, holding `alpha_v` fixed, and returns every intermediate state.
pub fn forecast_states(
    state: &FilterState,
    alpha_v: f64,
    noise: &NoiseConfig,
    scope: ScaleScope,
    horizon_s: f64,
    step_s: f64,
) -> Result<Vec<FilterState>, KalmanError> {
    let offsets = forecast_offsets_s(horizon_s, step_s)?;
    let mut rolled = state.clone();
    let mut out = Vec::with_capacity(offsets.len());
    for off in offsets {
        let t_abs = state.t_us + (off * 1e6).round() as u64;
        rolled.predict_to(t_abs, alpha_v, noise, scope)?;
        out.push(rolled.clone());
    }
    Ok(out)
}

/// Predicted center positions over the forecast grid.
pub fn forecast(
    state: &FilterState,
    alpha_v: f64,
    noise: &NoiseConfig,
    scope: ScaleScope,
    horizon_s: f64,
    step_s: f64,
) -> Result<Trajectory, KalmanError> {
    let states = forecast_states(state, alpha_v, noise, scope, horizon_s, step_s)?;
    Trajectory::from_points(
        states
            .iter()
            .map(|s| TrajectoryPoint { t_us: s.t_us, cx: s.x[0], cy: s.x[1] })
            .collect(),
    )
}

/// Whether the filter's process noise listens to the rotation signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProcessNoiseMode {
    /// `alpha_v` from the rotation-rate tracker.
    #[default]
    RpmModulated,
    /// `alpha_v` pinned to 1; the plain constant-velocity filter.
    Fixed,
}

/// Everything the streaming forecaster needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecasterConfig {
    pub noise: NoiseConfig,
    pub scope: ScaleScope,
    pub rpm_range: RpmRange,
    pub r_dot_scale: f64,
    pub horizons_s: Vec<f64>,
    pub step_s: f64,
    pub mode: ProcessNoiseMode,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        ForecasterConfig {
            noise: NoiseConfig::default(),
            scope: ScaleScope::default(),
            rpm_range: RpmRange::default(),
            r_dot_scale: DEFAULT_R_DOT_SCALE,
            horizons_s: vec![0.4, 0.8],
            step_s: 1.0 / 30.0,
            mode: ProcessNoiseMode::default(),
        }
    }
}

impl ForecasterConfig {
    pub fn validate(&self) -> Result<(), KalmanError> {
        self.noise.validate()?;
        let positive_scale = self.r_dot_scale > 0.0;
        if !positive_scale {
            return Err(KalmanError::BadRDotScale(self.r_dot_scale));
        }
        if self.horizons_s.is_empty() {
            return Err(KalmanError::BadHorizonList);
        }
        for h in &self.horizons_s {
            if !(*h > 0.0 && h.is_finite()) {
                return Err(KalmanError::BadHorizon(*h));
            }
        }
        for pair in self.horizons_s.windows(2) {
            if pair[1] <= pair[0] {
                return Err(KalmanError::BadHorizonList);
            }
        }
        if !(self.step_s > 0.0 && self.step_s.is_finite()) {
            return Err(KalmanError::BadStep(self.step_s));
        }
        Ok(())
    }

    pub fn max_horizon_s(&self) -> f64 {
        *self.horizons_s.last().expect("validated config has horizons")
    }
}

/// One forecast emitted at an annotation frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastEmission {
    pub t_emit_us: u64,
    pub horizon_s: f64,
    pub trajectory: Trajectory,
}

/// Runs the filter along one annotated track, emitting a forecast per
/// configured horizon at every update frame that still has the full maximum
/// horizon of track left ahead of it.
///
/// Frame schedule: the state initializes from the first two boxes (position
/// and finite-difference velocity at the second box), then every later box
/// contributes a predict + update cycle. Rotation estimates are consumed up
/// to each frame's timestamp; the `alpha_v` in force at a frame also holds
/// through that frame's forecast rollout.
pub fn run_forecaster(
    boxes: &[BoundingBoxObservation],
    rpm_series: &[RpmEstimate],
    cfg: &ForecasterConfig,
) -> Result<Vec<ForecastEmission>, KalmanError> {
    cfg.validate()?;
    if boxes.len() < 2 {
        return Err(KalmanError::TrackTooShort { needed: 2, got: boxes.len() });
    }
    for pair in boxes.windows(2) {
        if pair[1].t_us <= pair[0].t_us {
            return Err(KalmanError::NonIncreasingTime {
                state_us: pair[0].t_us,
                requested_us: pair[1].t_us,
            });
        }
    }
    let mut tracker = ModulationTracker::new(cfg.rpm_range, cfg.r_dot_scale)?;
    let mut rpm_idx = 0usize;
    let mut feed_until = |tracker: &mut ModulationTracker, t_us: u64| {
        while rpm_idx < rpm_series.len() && rpm_series[rpm_idx].t_us <= t_us {
            let s = &rpm_series[rpm_idx];
            tracker.observe(s.t_us, s.valid.then_some(s.rpm));
            rpm_idx += 1;
        }
    };

    let init = measurement_from_boxes(&boxes[0], &boxes[1])?;
    let mut state = FilterState::from_measurement(&init);
    if cfg.mode == ProcessNoiseMode::RpmModulated {
        feed_until(&mut tracker, state.t_us);
    }

    let max_h_us = (cfg.max_horizon_s() * 1e6).round() as u64;
    let last_t = boxes.last().expect("len checked").t_us;
    let mut out = Vec::new();
    for k in 2..boxes.len() {
        let t_k = boxes[k].t_us;
        let alpha_v = match cfg.mode {
            ProcessNoiseMode::RpmModulated => {
                feed_until(&mut tracker, t_k);
                tracker.alpha_v()
            }
            ProcessNoiseMode::Fixed => 1.0,
        };
        state.predict_to(t_k, alpha_v, &cfg.noise, cfg.scope)?;
        let m = measurement_from_boxes(&boxes[k - 1], &boxes[k])?;
        state.update(&m, &cfg.noise)?;
        if t_k + max_h_us <= last_t {
            for &h in &cfg.horizons_s {
                out.push(ForecastEmission {
                    t_emit_us: t_k,
                    horizon_s: h,
                    trajectory: forecast(&state, alpha_v, &cfg.noise, cfg.scope, h, cfg.step_s)?,
                });
            }
        }
    }
    Ok(out)
}
