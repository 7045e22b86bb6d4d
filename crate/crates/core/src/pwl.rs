//! Piecewise-linear waveforms for transient current sources.

use crate::error::{Error, Result};

/// Piecewise-linear waveform defined by (time [s], value [A]) breakpoints.
/// Evaluation clamps to the first/last value outside the defined span.
#[derive(Debug, Clone, PartialEq)]
pub struct PwlSource {
    points: Vec<(f64, f64)>,
}

impl PwlSource {
    /// Breakpoint times must be finite and strictly increasing.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("PWL source has no breakpoints".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidInput(format!(
                    "PWL breakpoints must be strictly increasing in time ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if points.iter().any(|&(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::InvalidInput(
                "PWL breakpoints must be finite".into(),
            ));
        }
        Ok(PwlSource { points })
    }

    /// Constant waveform.
    pub fn constant(value: f64) -> Self {
        PwlSource {
            points: vec![(0.0, value)],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Linear interpolation between breakpoints, clamped outside the span.
    pub fn eval(&self, t: f64) -> f64 {
        let pts = &self.points;
        if t <= pts[0].0 {
            return pts[0].1;
        }
        if t >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        // partition_point: first index with point time > t
        let hi = pts.partition_point(|&(pt, _)| pt <= t);
        let (t0, v0) = pts[hi - 1];
        let (t1, v1) = pts[hi];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Multiplies every value by `k`.
    pub fn scale(&mut self, k: f64) {
        for p in &mut self.points {
            p.1 *= k;
        }
    }

    /// Exact integral over the defined span (trapezoid per segment).
    pub fn integral(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
            .sum()
    }

    /// Largest absolute value (attained at a breakpoint).
    pub fn max_abs(&self) -> f64 {
        self.points.iter().map(|&(_, v)| v.abs()).fold(0.0, f64::max)
    }
}

/// Sorted, deduplicated union of breakpoint times.
pub fn union_breakpoints(sources: &[PwlSource]) -> Vec<f64> {
    let mut ts: Vec<f64> = sources
        .iter()
        .flat_map(|s| s.points().iter().map(|&(t, _)| t))
        .collect();
    ts.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    ts.dedup();
    ts
}

/// Sum of all sources at time `t`.
pub fn eval_sum(sources: &[PwlSource], t: f64) -> f64 {
    sources.iter().map(|s| s.eval(t)).sum()
}

/// Largest |sum| over all time. The sum of clamped PWL functions is
/// itself PWL with kinks only at union breakpoints, so scanning
/// breakpoints is exact.
pub fn max_abs_sum(sources: &[PwlSource]) -> f64 {
    union_breakpoints(sources)
        .iter()
        .map(|&t| eval_sum(sources, t).abs())
        .fold(0.0, f64::max)
}
