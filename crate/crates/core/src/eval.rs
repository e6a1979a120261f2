//! Forecast scoring: displacement errors per emission, percentile summaries
//! across emissions and sequences.
//!
//! ADE is the mean Euclidean distance between a predicted trajectory and
//! ground truth sampled on the same timestamp grid; FDE is the distance at
//! the final (horizon) point only. Grid alignment happens before scoring:
//! the ground-truth lookup resolves each predicted timestamp, and the
//! metric functions then demand exactly matching grids.

use thiserror::Error;

use crate::events::BoundingBoxObservation;
use crate::kalman::{ForecastEmission, Trajectory, TrajectoryPoint};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("trajectory grids differ: prediction has {pred} points, ground truth {gt}")]
    GridLengthMismatch { pred: usize, gt: usize },
    #[error("trajectory grids differ at index {index}: {pred_us}us vs {gt_us}us")]
    GridTimeMismatch { index: usize, pred_us: u64, gt_us: u64 },
    #[error("no ground truth within tolerance of {t_us}us")]
    MissingGroundTruth { t_us: u64 },
    #[error("cannot aggregate an empty value set")]
    EmptyValues,
    #[error("ground truth samples must strictly increase in time")]
    UnsortedGroundTruth,
}

/// Source of true center positions at arbitrary timestamps.
pub trait GroundTruthLookup {
    fn center_at(&self, t_us: u64) -> Option<(f64, f64)>;
}

/// Ground truth known only at sample points (annotation frames). A query
/// resolves to the nearest sample within `tol_us`; ties break to the
/// earlier sample.
#[derive(Debug, Clone)]
pub struct SampledGroundTruth {
    samples: Vec<TrajectoryPoint>,
    tol_us: u64,
}

impl SampledGroundTruth {
    pub fn from_points(mut samples: Vec<TrajectoryPoint>, tol_us: u64) -> Result<Self, EvalError> {
        samples.sort_by_key(|p| p.t_us);
        for pair in samples.windows(2) {
            if pair[1].t_us <= pair[0].t_us {
                return Err(EvalError::UnsortedGroundTruth);
            }
        }
        Ok(SampledGroundTruth { samples, tol_us })
    }

    /// Annotation-box centers as ground truth, the usual case when no
    /// separate truth channel exists.
    pub fn from_boxes(boxes: &[BoundingBoxObservation], tol_us: u64) -> Result<Self, EvalError> {
        let samples = boxes
            .iter()
            .map(|b| {
                let (cx, cy) = b.center();
                TrajectoryPoint { t_us: b.t_us, cx, cy }
            })
            .collect();
        Self::from_points(samples, tol_us)
    }
}

impl GroundTruthLookup for SampledGroundTruth {
    fn center_at(&self, t_us: u64) -> Option<(f64, f64)> {
        if self.samples.is_empty() {
            return None;
        }
        let idx = self.samples.partition_point(|p| p.t_us < t_us);
        let mut best: Option<(u64, &TrajectoryPoint)> = None;
        for cand in [idx.checked_sub(1), Some(idx)].into_iter().flatten() {
            if let Some(p) = self.samples.get(cand) {
                let dist = p.t_us.abs_diff(t_us);
                let closer = match best {
                    None => true,
                    Some((d, _)) => dist < d,
                };
                if closer {
                    best = Some((dist, p));
                }
            }
        }
        let (dist, p) = best?;
        (dist <= self.tol_us).then_some((p.cx, p.cy))
    }
}

/// Ground truth resampled onto a prediction's timestamp grid.
pub fn ground_truth_on_grid(
    pred: &Trajectory,
    lookup: &dyn GroundTruthLookup,
) -> Result<Trajectory, EvalError> {
    let points = pred
        .points()
        .iter()
        .map(|p| {
            let (cx, cy) =
                lookup.center_at(p.t_us).ok_or(EvalError::MissingGroundTruth { t_us: p.t_us })?;
            Ok(TrajectoryPoint { t_us: p.t_us, cx, cy })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(Trajectory::from_points(points).expect("pred grid is strictly increasing"))
}

fn check_grids(pred: &Trajectory, gt: &Trajectory) -> Result<(), EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::GridLengthMismatch { pred: pred.len(), gt: gt.len() });
    }
    for (index, (p, g)) in pred.points().iter().zip(gt.points()).enumerate() {
        if p.t_us != g.t_us {
            return Err(EvalError::GridTimeMismatch { index, pred_us: p.t_us, gt_us: g.t_us });
        }
    }
    Ok(())
}

/// Average displacement error over identical timestamp grids, in pixels.
pub fn ade(pred: &Trajectory, gt: &Trajectory) -> Result<f64, EvalError> {
    check_grids(pred, gt)?;
    let sum: f64 = pred
        .points()
        .iter()
        .zip(gt.points())
        .map(|(p, g)| (p.cx - g.cx).hypot(p.cy - g.cy))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Final displacement error: distance at the last grid point, in pixels.
pub fn fde(pred: &Trajectory, gt: &Trajectory) -> Result<f64, EvalError> {
    check_grids(pred, gt)?;
    let (p, g) = (pred.last(), gt.last());
    Ok((p.cx - g.cx).hypot(p.cy - g.cy))
}

/// Per-horizon error samples for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonScores {
    pub horizon_s: f64,
    pub ade_values: Vec<f64>,
    pub fde_values: Vec<f64>,
}

impl HorizonScores {
    pub fn ade_mean(&self) -> f64 {
        mean(&self.ade_values)
    }

    pub fn fde_mean(&self) -> f64 {
        mean(&self.fde_values)
    }
}

/// Scores for one sequence, one entry per horizon, horizons ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceResult {
    pub sequence_id: String,
    pub horizons: Vec<HorizonScores>,
}

/// Row of the per-sequence results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sequence_id: String,
    pub metric: String,
    pub horizon_s: f64,
    pub value_px: f64,
}

/// Row of the aggregate summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub metric: String,
    pub horizon_s: f64,
    pub stats: Stats,
}

impl SequenceResult {
    /// Per-sequence mean rows, `ade` first then `fde`, horizons ascending.
    pub fn rows(&self) -> Vec<ResultRow> {
        let mut rows = Vec::with_capacity(self.horizons.len() * 2);
        for metric in ["ade", "fde"] {
            for h in &self.horizons {
                let value_px = match metric {
                    "ade" => h.ade_mean(),
                    _ => h.fde_mean(),
                };
                rows.push(ResultRow {
                    sequence_id: self.sequence_id.clone(),
                    metric: metric.to_string(),
                    horizon_s: h.horizon_s,
                    value_px,
                });
            }
        }
        rows
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Scores every emission of one sequence against ground truth. Every
/// predicted timestamp must resolve; a forecast that outruns the truth is a
/// harness bug, not a skippable sample.
pub fn evaluate_sequence(
    sequence_id: &str,
    emissions: &[ForecastEmission],
    lookup: &dyn GroundTruthLookup,
) -> Result<SequenceResult, EvalError> {
    let mut horizons: Vec<f64> = Vec::new();
    for e in emissions {
        if !horizons.contains(&e.horizon_s) {
            horizons.push(e.horizon_s);
        }
    }
    horizons.sort_by(f64::total_cmp);
    let mut scores: Vec<HorizonScores> = horizons
        .into_iter()
        .map(|horizon_s| HorizonScores { horizon_s, ade_values: vec![], fde_values: vec![] })
        .collect();
    for e in emissions {
        let gt = ground_truth_on_grid(&e.trajectory, lookup)?;
        let slot = scores
            .iter_mut()
            .find(|s| s.horizon_s == e.horizon_s)
            .expect("horizon list built from emissions");
        slot.ade_values.push(ade(&e.trajectory, &gt)?);
        slot.fde_values.push(fde(&e.trajectory, &gt)?);
    }
    Ok(SequenceResult { sequence_id: sequence_id.to_string(), horizons: scores })
}

/// Summary statistics over a value set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub p5: f64,
    pub p25: f64,
    pub p75: f64,
    pub p95: f64,
}

/// Percentile with linear interpolation between order statistics: rank
/// `q/100 * (n-1)` into the sorted values, fractional ranks interpolated.
pub fn percentile_linear(sorted: &[f64], q: f64) -> Result<f64, EvalError> {
    if sorted.is_empty() {
        return Err(EvalError::EmptyValues);
    }
    debug_assert!((0.0..=100.0).contains(&q));
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 || lo + 1 >= sorted.len() {
        return Ok(sorted[lo]);
    }
    Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
}

impl Stats {
    pub fn describe(values: &[f64]) -> Result<Stats, EvalError> {
        if values.is_empty() {
            return Err(EvalError::EmptyValues);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Stats {
            mean: mean(values),
            median: percentile_linear(&sorted, 50.0)?,
            p5: percentile_linear(&sorted, 5.0)?,
            p25: percentile_linear(&sorted, 25.0)?,
            p75: percentile_linear(&sorted, 75.0)?,
            p95: percentile_linear(&sorted, 95.0)?,
        })
    }
}

/// Emission timestamps present in every run. Comparing methods on the
/// intersection keeps a method with a longer warmup from being scored on
/// frames the others never saw.
pub fn common_emission_times(runs: &[&[ForecastEmission]]) -> Vec<u64> {
    let Some((first, rest)) = runs.split_first() else {
        return Vec::new();
    };
    let mut times: Vec<u64> = first.iter().map(|e| e.t_emit_us).collect();
    times.sort_unstable();
    times.dedup();
    for run in rest {
        let mut present: Vec<u64> = run.iter().map(|e| e.t_emit_us).collect();
        present.sort_unstable();
        present.dedup();
        times.retain(|t| present.binary_search(t).is_ok());
    }
    times
}

/// Emissions whose emit time is in `times` (which must be sorted).
pub fn filter_emissions_to(
    emissions: &[ForecastEmission],
    times: &[u64],
) -> Vec<ForecastEmission> {
    emissions
        .iter()
        .filter(|e| times.binary_search(&e.t_emit_us).is_ok())
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn traj(points: &[(u64, f64, f64)]) -> Trajectory {
        Trajectory::from_points(
            points.iter().map(|&(t_us, cx, cy)| TrajectoryPoint { t_us, cx, cy }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn ade_fde_hand_values() {
        let pred = traj(&[(10, 0.0, 0.0), (20, 10.0, 0.0), (30, 20.0, 0.0)]);
        let gt = traj(&[(10, 3.0, 4.0), (20, 10.0, 0.0), (30, 20.0, 5.0)]);
        // Distances: 5, 0, 5.
        assert_relative_eq!(ade(&pred, &gt).unwrap(), 10.0 / 3.0, epsilon = 1e-12);
        assert_eq!(fde(&pred, &gt).unwrap(), 5.0);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let pred = traj(&[(10, 0.0, 0.0), (20, 0.0, 0.0)]);
        let short = traj(&[(10, 0.0, 0.0)]);
        assert!(matches!(ade(&pred, &short), Err(EvalError::GridLengthMismatch { .. })));
        let shifted = traj(&[(10, 0.0, 0.0), (21, 0.0, 0.0)]);
        assert!(matches!(
            fde(&pred, &shifted),
            Err(EvalError::GridTimeMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn sampled_lookup_resolves_within_tolerance() {
        let gt = SampledGroundTruth::from_points(
            vec![
                TrajectoryPoint { t_us: 0, cx: 0.0, cy: 0.0 },
                TrajectoryPoint { t_us: 33_333, cx: 1.0, cy: 1.0 },
                TrajectoryPoint { t_us: 66_667, cx: 2.0, cy: 2.0 },
            ],
            16_666,
        )
        .unwrap();
        assert_eq!(gt.center_at(33_333), Some((1.0, 1.0)));
        assert_eq!(gt.center_at(33_340), Some((1.0, 1.0)));
        // Equidistant between samples, one microsecond past the tolerance.
        assert_eq!(gt.center_at(50_000), None);
        assert_eq!(gt.center_at(49_999), Some((1.0, 1.0)));
        assert_eq!(gt.center_at(50_001), Some((2.0, 2.0)));
        assert_eq!(gt.center_at(99_999), None); // beyond tolerance of the last sample
        assert_eq!(gt.center_at(0), Some((0.0, 0.0)));

        assert!(SampledGroundTruth::from_points(
            vec![
                TrajectoryPoint { t_us: 5, cx: 0.0, cy: 0.0 },
                TrajectoryPoint { t_us: 5, cx: 1.0, cy: 1.0 },
            ],
            10,
        )
        .is_err());
    }

    #[test]
    fn percentiles_interpolate_linearly() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = Stats::describe(&values).unwrap();
        assert_relative_eq!(s.mean, 50.5, epsilon = 1e-12);
        assert_relative_eq!(s.median, 50.5, epsilon = 1e-12);
        assert_relative_eq!(s.p5, 5.95, epsilon = 1e-12);
        assert_relative_eq!(s.p25, 25.75, epsilon = 1e-12);
        assert_relative_eq!(s.p75, 75.25, epsilon = 1e-12);
        assert_relative_eq!(s.p95, 95.05, epsilon = 1e-12);

        let one = Stats::describe(&[7.0]).unwrap();
        assert_eq!(one.median, 7.0);
        assert_eq!(one.p5, 7.0);
        assert_eq!(one.p95, 7.0);

        let two = Stats::describe(&[1.0, 3.0]).unwrap();
        assert_eq!(two.median, 2.0);
        assert!(Stats::describe(&[]).is_err());
    }

    #[test]
    fn evaluate_sequence_groups_by_horizon() {
        let lookup = SampledGroundTruth::from_points(
            (0..10)
                .map(|k| TrajectoryPoint { t_us: k * 10_000, cx: k as f64, cy: 0.0 })
                .collect(),
            5_000,
        )
        .unwrap();
        let em = |t0: u64, h: f64, err: f64| ForecastEmission {
            t_emit_us: t0,
            horizon_s: h,
            trajectory: traj(&[
                (t0 + 10_000, (t0 + 10_000) as f64 / 10_000.0 + err, 0.0),
                (t0 + 20_000, (t0 + 20_000) as f64 / 10_000.0 + err, 0.0),
            ]),
        };
        let emissions = vec![
            em(0, 0.8, 1.0),
            em(0, 0.4, 2.0),
            em(10_000, 0.4, 4.0),
        ];
        let res = evaluate_sequence("seq", &emissions, &lookup).unwrap();
        assert_eq!(res.horizons.len(), 2);
        assert_eq!(res.horizons[0].horizon_s, 0.4);
        assert_relative_eq!(res.horizons[0].ade_mean(), 3.0, epsilon = 1e-12);
        assert_relative_eq!(res.horizons[1].fde_mean(), 1.0, epsilon = 1e-12);
        let rows = res.rows();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].metric, "ade");
        assert_eq!(rows[0].horizon_s, 0.4);
    }

    #[test]
    fn missing_ground_truth_is_an_error() {
        let lookup = SampledGroundTruth::from_points(
            vec![TrajectoryPoint { t_us: 0, cx: 0.0, cy: 0.0 }],
            1_000,
        )
        .unwrap();
        let e = ForecastEmission {
            t_emit_us: 0,
            horizon_s: 0.4,
            trajectory: traj(&[(400_000, 0.0, 0.0)]),
        };
        assert!(matches!(
            evaluate_sequence("seq", &[e], &lookup),
            Err(EvalError::MissingGroundTruth { t_us: 400_000 })
        ));
    }

    #[test]
    fn common_times_intersect_runs() {
        let em = |t: u64| ForecastEmission {
            t_emit_us: t,
            horizon_s: 0.4,
            trajectory: traj(&[(t + 1, 0.0, 0.0)]),
        };
        let a = vec![em(10), em(20), em(30)];
        let b = vec![em(20), em(30), em(40)];
        let times = common_emission_times(&[&a, &b]);
        assert_eq!(times, vec![20, 30]);
        let filtered = filter_emissions_to(&a, &times);
        assert_eq!(filtered.len(), 2);
        assert!(common_emission_times(&[]).is_empty());
    }

    proptest! {
        /// ADE equals the independently accumulated mean of point distances,
        /// and FDE equals the last distance.
        #[test]
        fn metrics_match_direct_summation(
            pts in prop::collection::vec((0.0f64..500.0, 0.0f64..500.0, 0.0f64..500.0, 0.0f64..500.0), 1..40)
        ) {
            let pred = Trajectory::from_points(
                pts.iter().enumerate()
                    .map(|(i, &(px, py, _, _))| TrajectoryPoint { t_us: i as u64 * 1000, cx: px, cy: py })
                    .collect()
            ).unwrap();
            let gt = Trajectory::from_points(
                pts.iter().enumerate()
                    .map(|(i, &(_, _, gx, gy))| TrajectoryPoint { t_us: i as u64 * 1000, cx: gx, cy: gy })
                    .collect()
            ).unwrap();
            let mut acc = 0.0;
            let mut last = 0.0;
            for &(px, py, gx, gy) in &pts {
                let d = ((px - gx).powi(2) + (py - gy).powi(2)).sqrt();
                acc += d;
                last = d;
            }
            prop_assert!((ade(&pred, &gt).unwrap() - acc / pts.len() as f64).abs() < 1e-9);
            prop_assert!((fde(&pred, &gt).unwrap() - last).abs() < 1e-9);
        }

        /// Percentiles of a sorted set are monotone in q and bracketed by
        /// the extremes.
        #[test]
        fn percentiles_are_monotone(mut values in prop::collection::vec(-1e3f64..1e3, 1..50)) {
            values.sort_by(f64::total_cmp);
            let qs = [0.0, 5.0, 25.0, 50.0, 75.0, 95.0, 100.0];
            let mut prev = f64::NEG_INFINITY;
            for q in qs {
                let v = percentile_linear(&values, q).unwrap();
                prop_assert!(v >= prev);
                prop_assert!(v >= values[0] && v <= *values.last().unwrap());
                prev = v;
            }
        }
    }
}
