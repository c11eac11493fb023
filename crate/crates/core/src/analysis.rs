//! Post-processing of trajectory records into convergence figures, and the
//! cross-method agreement check between series and polynomial transforms.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::design::{poly_transform, FilterDesign, PolyTransform, SeriesTransform, Transform};
use crate::error::{Error, Result};
use crate::observer::TrajectoryRecord;
use crate::system::LinearPolySystem;

/// Errors at or below this are treated as arithmetic noise and skipped by
/// the regression.
pub const NOISE_FLOOR: f64 = 1e-14;
pub const MIN_WINDOW_ROWS: usize = 10;
pub const DEFAULT_WINDOW: [f64; 2] = [0.5, 3.0];
/// Relative rounding allowance added to the tail bound in unicity verdicts.
pub const UNICITY_ROUNDING: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    /// Slope of `log10(err)` against time.
    pub slope_log10_per_time: f64,
    pub regression_window: [f64; 2],
    pub r_squared: f64,
    /// Smallest error over the whole run.
    pub error_floor: f64,
    pub final_error: f64,
}

fn in_window(t: f64, t0: f64, t1: f64) -> bool {
    // Time stamps are k·dt; allow for rounding at the window edges.
    let slack = 1e-9 * t0.abs().max(t1.abs()).max(1.0);
    t >= t0 - slack && t <= t1 + slack
}

/// Least-squares fit of `log10(err)` on `t` over `[t0, t1]`.
pub fn convergence_report(traj: &TrajectoryRecord, t0: f64, t1: f64) -> Result<ConvergenceReport> {
    if t1.partial_cmp(&t0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidArgument(format!("window [{t0}, {t1}] is empty")));
    }
    let window: Vec<_> = traj.rows.iter().filter(|r| in_window(r.t, t0, t1)).collect();
    if window.len() < MIN_WINDOW_ROWS {
        return Err(Error::EmptyWindow {
            t0,
            t1,
            rows: window.len(),
            required: MIN_WINDOW_ROWS,
        });
    }
    let points: Vec<(f64, f64)> = window
        .iter()
        .filter(|r| r.err > NOISE_FLOOR)
        .map(|r| (r.t, r.err.log10()))
        .collect();
    if points.len() < 2 {
        return Err(Error::AllZeroError);
    }

    let n = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_y)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_t;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    // Flat data (up to rounding in the mean) is fit exactly by a zero slope.
    let flat = syy <= 1e-20 * n * mean_y.abs().max(1.0).powi(2);
    let r_squared = if flat {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };

    let errors = traj.errors();
    Ok(ConvergenceReport {
        slope_log10_per_time: slope,
        regression_window: [t0, t1],
        r_squared,
        error_floor: errors.iter().copied().fold(f64::INFINITY, f64::min),
        final_error: *errors.last().expect("window is non-empty"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

/// Order statistics of the error on `[t0, end]`.
pub fn oscillation_band(traj: &TrajectoryRecord, t0: f64) -> Result<Band> {
    let end = traj.rows.last().map_or(f64::NEG_INFINITY, |r| r.t);
    let mut tail: Vec<f64> = traj
        .rows
        .iter()
        .filter(|r| in_window(r.t, t0, end))
        .map(|r| r.err)
        .collect();
    if tail.is_empty() {
        return Err(Error::EmptyWindow {
            t0,
            t1: end,
            rows: 0,
            required: 1,
        });
    }
    tail.sort_by(f64::total_cmp);
    let mid = tail.len() / 2;
    let median = if tail.len() % 2 == 1 {
        tail[mid]
    } else {
        0.5 * (tail[mid - 1] + tail[mid])
    };
    Ok(Band {
        min: tail[0],
        median,
        max: tail[tail.len() - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnicityReport {
    /// `(x, |T_N(x) − M P_d(x)|)` per sample.
    pub deviations: Vec<(Vec<f64>, f64)>,
    pub max_deviation: f64,
    pub tail_bound: f64,
    /// `UNICITY_ROUNDING · (1 + max |T_N(x)|)`.
    pub rounding_floor: f64,
    /// `max_deviation ≤ tail_bound + rounding_floor`.
    pub pass: bool,
}

/// Compares a truncated series transform against a polynomial transform at
/// points drawn from the plant's initial box.
pub fn compare_transforms(
    series: &SeriesTransform,
    poly: &PolyTransform,
    sample_count: usize,
    seed: u64,
) -> Result<UnicityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampling_box = series.system().initial_box().clone();
    let mut deviations = Vec::with_capacity(sample_count);
    let mut max_deviation: f64 = 0.0;
    let mut max_value: f64 = 0.0;
    for _ in 0..sample_count {
        let x = sampling_box.sample(&mut rng);
        let a = series.eval(&x)?;
        let b = poly.eval(&x)?;
        let dev = a
            .iter()
            .zip(&b)
            .map(|(u, v)| (u - v).norm_sqr())
            .sum::<f64>()
            .sqrt();
        max_deviation = max_deviation.max(dev);
        max_value = max_value.max(a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
        deviations.push((x, dev));
    }
    let tail_bound = series.own_tail_bound();
    let rounding_floor = UNICITY_ROUNDING * (1.0 + max_value);
    Ok(UnicityReport {
        deviations,
        max_deviation,
        tail_bound,
        rounding_floor,
        pass: max_deviation <= tail_bound + rounding_floor,
    })
}

/// Builds both the Sylvester solution and the order-`n` truncated series for
/// one plant and filter, then reports how far they disagree.
pub fn unicity_report(
    sys: Arc<LinearPolySystem>,
    filter: &FilterDesign,
    n: usize,
    sample_count: usize,
    seed: u64,
) -> Result<UnicityReport> {
    let poly = poly_transform(&sys, filter)?;
    let series = SeriesTransform::new(sys, filter.clone(), n, 0.05)?;
    compare_transforms(&series, &poly, sample_count, seed)
}
