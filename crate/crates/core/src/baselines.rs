//! Reference predictors every evaluation compares against.
//!
//! Both baselines consume exactly the same annotated track as the modulated
//! filter and emit forecasts on the same time grid, so metric differences
//! come from the predictors and nothing else.

use thiserror::Error;

use crate::events::BoundingBoxObservation;
use crate::kalman::{
    self, ForecastEmission, ForecasterConfig, KalmanError, ProcessNoiseMode, Trajectory,
    TrajectoryPoint, forecast_offsets_s,
};

/// Poses consumed by the linear extrapolator.
pub const LINEAR_HISTORY: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("linear extrapolation needs exactly {LINEAR_HISTORY} poses, got {0}")]
    WrongHistoryLength(usize),
    #[error("pose timestamps must strictly increase (offender at {t_us}us)")]
    DuplicateTimestamp { t_us: u64 },
    #[error(transparent)]
    Kalman(#[from] KalmanError),
}

/// Straight-line forecast from the last four poses.
///
/// The velocity is the mean of the three successive difference quotients,
/// not the end-to-end slope; on an uneven time grid those differ, and the
/// mean weights each gap equally.
pub fn linear_extrapolate(
    history: &[TrajectoryPoint],
    horizon_s: f64,
    step_s: f64,
) -> Result<Trajectory, BaselineError> {
    if history.len() != LINEAR_HISTORY {
        return Err(BaselineError::WrongHistoryLength(history.len()));
    }
    let mut vx_sum = 0.0;
    let mut vy_sum = 0.0;
    for pair in history.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.t_us <= a.t_us {
            return Err(BaselineError::DuplicateTimestamp { t_us: b.t_us });
        }
        let dt_s = (b.t_us - a.t_us) as f64 / 1e6;
        vx_sum += (b.cx - a.cx) / dt_s;
        vy_sum += (b.cy - a.cy) / dt_s;
    }
    let n = (LINEAR_HISTORY - 1) as f64;
    let (vx, vy) = (vx_sum / n, vy_sum / n);
    let anchor = history.last().expect("length checked");
    let points = forecast_offsets_s(horizon_s, step_s)?
        .into_iter()
        .map(|off| TrajectoryPoint {
            t_us: anchor.t_us + (off * 1e6).round() as u64,
            cx: anchor.cx + vx * off,
            cy: anchor.cy + vy * off,
        })
        .collect();
    Ok(Trajectory::from_points(points)?)
}

/// Runs the linear extrapolator along a track with the same emission
/// schedule as the filter-based forecasters: one emission per configured
/// horizon at every frame that has seen enough history and still has the
/// full maximum horizon of track ahead.
pub fn run_linear(
    boxes: &[BoundingBoxObservation],
    horizons_s: &[f64],
    step_s: f64,
) -> Result<Vec<ForecastEmission>, BaselineError> {
    if horizons_s.is_empty() {
        return Err(BaselineError::Kalman(KalmanError::BadHorizonList));
    }
    let max_h_us = (horizons_s.last().expect("non-empty") * 1e6).round() as u64;
    let last_t = match boxes.last() {
        Some(b) => b.t_us,
        None => return Ok(Vec::new()),
    };
    let poses: Vec<TrajectoryPoint> = boxes
        .iter()
        .map(|b| {
            let (cx, cy) = b.center();
            TrajectoryPoint { t_us: b.t_us, cx, cy }
        })
        .collect();
    let mut out = Vec::new();
    for k in (LINEAR_HISTORY - 1)..poses.len() {
        let t_k = poses[k].t_us;
        if t_k + max_h_us > last_t {
            continue;
        }
        let history = &poses[k + 1 - LINEAR_HISTORY..=k];
        for &h in horizons_s {
            out.push(ForecastEmission {
                t_emit_us: t_k,
                horizon_s: h,
                trajectory: linear_extrapolate(history, h, step_s)?,
            });
        }
    }
    Ok(out)
}

/// The unmodulated filter: identical pipeline, `alpha_v` pinned at 1.
pub fn run_vanilla_kalman(
    boxes: &[BoundingBoxObservation],
    cfg: &ForecasterConfig,
) -> Result<Vec<ForecastEmission>, KalmanError> {
    let cfg = ForecasterConfig { mode: ProcessNoiseMode::Fixed, ..cfg.clone() };
    kalman::run_forecaster(boxes, &[], &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::SensorGeometry;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pose(t_us: u64, cx: f64, cy: f64) -> TrajectoryPoint {
        TrajectoryPoint { t_us, cx, cy }
    }

    #[test]
    fn velocity_is_mean_of_quotients_not_endpoint_slope() {
        // Uneven grid chosen so the two velocity definitions disagree:
        // quotients are +10, -20, +5 px/s (mean -5/3), endpoint slope +5/3.
        let history = [
            pose(0, 0.0, 0.0),
            pose(100_000, 1.0, 0.0),   // quotient +10
            pose(200_000, -1.0, 0.0),  // quotient -20
            pose(600_000, 1.0, 0.0),   // quotient +5
        ];
        let traj = linear_extrapolate(&history, 1.0, 1.0).unwrap();
        // Mean of (+10, -20, +5) is -5/3; endpoint slope is +5/3.
        let expected_vx = (10.0 - 20.0 + 5.0) / 3.0;
        let p = traj.last();
        assert_relative_eq!(p.cx, 1.0 + expected_vx * 1.0, epsilon = 1e-12);
        assert_eq!(p.cy, 0.0);
    }

    #[test]
    fn rejects_wrong_history_or_duplicate_times() {
        let h3 = [pose(0, 0.0, 0.0), pose(1, 0.0, 0.0), pose(2, 0.0, 0.0)];
        assert!(matches!(
            linear_extrapolate(&h3, 1.0, 1.0),
            Err(BaselineError::WrongHistoryLength(3))
        ));
        let dup = [
            pose(0, 0.0, 0.0),
            pose(10, 0.0, 0.0),
            pose(10, 0.0, 0.0),
            pose(20, 0.0, 0.0),
        ];
        assert!(matches!(
            linear_extrapolate(&dup, 1.0, 1.0),
            Err(BaselineError::DuplicateTimestamp { t_us: 10 })
        ));
    }

    #[test]
    fn exact_on_constant_velocity_input() {
        let history = [
            pose(0, 0.0, 100.0),
            pose(33_333, 1.0, 99.0),
            pose(66_666, 2.0, 98.0),
            pose(99_999, 3.0, 97.0),
        ];
        let traj = linear_extrapolate(&history, 0.4, 1.0 / 30.0).unwrap();
        assert_eq!(traj.len(), 12);
        let vx = 1.0 / 0.033333;
        // Positions are evaluated at the exact grid offsets; only the
        // timestamps are rounded to whole microseconds.
        for (k, p) in traj.points().iter().enumerate() {
            let off = if k + 1 == traj.len() { 0.4 } else { (k + 1) as f64 / 30.0 };
            assert_relative_eq!(p.cx, 3.0 + vx * off, epsilon = 1e-9);
            assert_relative_eq!(p.cy, 97.0 - vx * off, epsilon = 1e-9);
        }
    }

    #[test]
    fn run_linear_schedule_matches_filter_schedule() {
        let g = SensorGeometry::default();
        let boxes: Vec<BoundingBoxObservation> = (0..60)
            .map(|k| {
                let t = k as u64 * 33_333;
                BoundingBoxObservation::new(t, 0, 100.0, 100.0, 20.0, 20.0, g).unwrap()
            })
            .collect();
        let emissions = run_linear(&boxes, &[0.4, 0.8], 1.0 / 30.0).unwrap();
        let last_t = boxes.last().unwrap().t_us;
        let first_emit = emissions.iter().map(|e| e.t_emit_us).min().unwrap();
        // The linear baseline needs four poses, so it starts one frame after
        // the filter's first update frame.
        assert_eq!(first_emit, boxes[3].t_us);
        for e in &emissions {
            assert!(e.t_emit_us + 800_000 <= last_t);
        }
        // Static input forecasts the same static point.
        for e in &emissions {
            let p = e.trajectory.last();
            assert_eq!((p.cx, p.cy), (110.0, 110.0));
        }
    }

    proptest! {
        /// On a uniform time grid the mean of the three quotients equals the
        /// endpoint slope; the two formulations agree there and only there.
        #[test]
        fn uniform_grid_mean_equals_endpoint_slope(
            x0 in -100.0f64..100.0,
            x1 in -100.0f64..100.0,
            x2 in -100.0f64..100.0,
            x3 in -100.0f64..100.0,
            dt_us in 1_000u64..100_000,
        ) {
            let history = [
                pose(0, x0, 0.0),
                pose(dt_us, x1, 0.0),
                pose(2 * dt_us, x2, 0.0),
                pose(3 * dt_us, x3, 0.0),
            ];
            let traj = linear_extrapolate(&history, 1.0, 1.0).unwrap();
            let dt_s = dt_us as f64 / 1e6;
            let endpoint_vx = (x3 - x0) / (3.0 * dt_s);
            let predicted = traj.last().cx;
            prop_assert!((predicted - (x3 + endpoint_vx)).abs() < 1e-6,
                "predicted {} vs endpoint-slope {}", predicted, x3 + endpoint_vx);
        }
    }
}
