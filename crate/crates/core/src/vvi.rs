//! Voltage violation integral (VVI): time-integrated excursion of node
//! voltages outside a tolerance band, and the voltage-domain reward.

use serde::Serialize;

use crate::decap::CapacityTotals;
use crate::error::{Error, Result};
use crate::transient::TransientSolution;

/// Tolerance band for supply voltages [V].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VviSpec {
    pub v_min: f64,
    pub v_max: f64,
}

impl VviSpec {
    /// Band as fractions of the nominal supply (e.g. 0.95/1.05).
    pub fn from_fractions(vdd: f64, lo_frac: f64, hi_frac: f64) -> Result<Self> {
        if !(vdd > 0.0) || !(lo_frac > 0.0) || !(hi_frac > lo_frac) {
            return Err(Error::InvalidParameter(format!(
                "bad tolerance band {lo_frac}..{hi_frac} around {vdd}"
            )));
        }
        Ok(VviSpec {
            v_min: vdd * lo_frac,
            v_max: vdd * hi_frac,
        })
    }

    fn excess(&self, v: f64) -> f64 {
        (v - self.v_max).max(0.0) + (self.v_min - v).max(0.0)
    }
}

/// Integral of the out-of-band excess of one sampled trace [V*s].
///
/// The trace is treated as piecewise-linear between samples; each
/// segment is split at band crossings before trapezoid integration, so
/// the result is exact for PWL traces.
pub fn compute_vvi(times: &[f64], trace: &[f64], spec: &VviSpec) -> f64 {
    assert_eq!(times.len(), trace.len());
    let mut total = 0.0;
    for k in 1..times.len() {
        let (t0, v0) = (times[k - 1], trace[k - 1]);
        let (t1, v1) = (times[k], trace[k]);
        let mut cuts: Vec<(f64, f64)> = vec![(t0, v0), (t1, v1)];
        for level in [spec.v_min, spec.v_max] {
            if (v0 < level && v1 > level) || (v0 > level && v1 < level) {
                let tc = t0 + (t1 - t0) * (level - v0) / (v1 - v0);
                cuts.push((tc, level));
            }
        }
        cuts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));
        for w in cuts.windows(2) {
            total += 0.5 * (spec.excess(w[0].1) + spec.excess(w[1].1)) * (w[1].0 - w[0].0);
        }
    }
    total
}

/// Per-node VVI over one transient run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VviReport {
    /// (node label, VVI [V*s]) in trace order.
    pub entries: Vec<(String, f64)>,
    /// Sum over nodes [V*s].
    pub total: f64,
    /// Nodes with nonzero VVI.
    pub violating_nodes: usize,
}

impl VviReport {
    pub fn from_solution(sol: &TransientSolution, spec: &VviSpec) -> Self {
        let entries: Vec<(String, f64)> = sol
            .labels
            .iter()
            .zip(&sol.traces)
            .map(|(l, tr)| (l.clone(), compute_vvi(&sol.times, tr, spec)))
            .collect();
        let total = entries.iter().map(|e| e.1).sum();
        let violating_nodes = entries.iter().filter(|e| e.1 > 0.0).count();
        VviReport {
            entries,
            total,
            violating_nodes,
        }
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(l, _)| l == label)
            .map(|&(_, v)| v)
    }

    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let mut s = String::from("node,vvi_vs\n");
        for (l, v) in &self.entries {
            let _ = writeln!(s, "{l},{v}");
        }
        let _ = writeln!(s, "TOTAL,{}", self.total);
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Voltage-domain reward.
///
/// `ratio` compares the current total VVI to the episode's initial
/// total. Above the tolerance `gamma` the reward is 1 - ratio
/// (non-positive for ratio >= 1); at or below it, a capacitance-saving
/// bonus takes over. A zero initial VVI leaves the ratio undefined.
pub fn time_reward(
    current: &VviReport,
    initial: &VviReport,
    totals: &CapacityTotals,
    gamma: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be in [0, 1], got {gamma}"
        )));
    }
    if initial.total == 0.0 {
        return Err(Error::UndefinedRatio(
            "initial layout has zero voltage violation; nothing to reduce".into(),
        ));
    }
    let ratio = current.total / initial.total;
    if ratio > gamma {
        Ok(1.0 - ratio)
    } else {
        let frac = if totals.c_mos_max > 0.0 {
            totals.c_mos / totals.c_mos_max
        } else {
            0.0
        };
        Ok((1.0 - gamma) + (1.0 - frac))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> VviSpec {
        VviSpec::from_fractions(1.2, 0.95, 1.05).unwrap()
    }

    #[test]
    fn band_from_fractions() {
        let s = spec();
        assert!((s.v_min - 1.14).abs() < 1e-15);
        assert!((s.v_max - 1.26).abs() < 1e-15);
    }

    #[test]
    fn in_band_trace_has_zero_vvi() {
        let s = spec();
        let times: Vec<f64> = (0..100).map(|k| k as f64 * 1e-12).collect();
        let trace = vec![1.2; 100];
        assert_eq!(compute_vvi(&times, &trace, &s), 0.0);
        // touching the boundary is still zero
        let edge = vec![s.v_min; 100];
        assert_eq!(compute_vvi(&times, &edge, &s), 0.0);
    }

    #[test]
    fn rectangle_dip_integrates_exactly() {
        // dip 0.01 V below the band floor for 1 ns, with one-step ramps
        // starting exactly at the boundary: area is 0.01 * 1e-9
        let s = spec();
        let dt = 1e-12;
        let low = s.v_min - 0.01;
        // flat top 1e-9 - dt plus two half-ramps of dt/2 each
        let times = vec![0.0, 1e-9, 1e-9 + dt, 2e-9, 2e-9 + dt, 3e-9];
        let trace = vec![s.v_min, s.v_min, low, low, s.v_min, s.v_min];
        let v = compute_vvi(&times, &trace, &s);
        assert!((v - 1e-11).abs() < 1e-22, "vvi {v}");
    }

    #[test]
    fn triangle_dip_uses_crossing_interpolation() {
        // coarse samples: in-band, 0.01 below floor, in-band; the exact
        // PWL area requires splitting at the two band crossings
        let s = spec();
        let e = 0.01;
        let half = 1e-9;
        let times = vec![0.0, half, 2.0 * half];
        let trace = vec![s.v_min + e, s.v_min - e, s.v_min + e];
        let v = compute_vvi(&times, &trace, &s);
        let exact = e * half / 2.0;
        assert!((v - exact).abs() < 1e-24, "vvi {v} vs {exact}");
    }

    #[test]
    fn overshoot_and_undershoot_add() {
        let s = spec();
        let times = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let under = vec![s.v_min, s.v_min - 0.02, s.v_min, s.v_min, s.v_min];
        let over = vec![s.v_max, s.v_max, s.v_max, s.v_max + 0.04, s.v_max];
        let both = vec![
            s.v_min,
            s.v_min - 0.02,
            (s.v_min + s.v_max) / 2.0,
            s.v_max + 0.04,
            s.v_max,
        ];
        let vu = compute_vvi(&times, &under, &s);
        let vo = compute_vvi(&times, &over, &s);
        assert!((vu - 0.02).abs() < 1e-15);
        assert!((vo - 0.04).abs() < 1e-15);
        // mixed trace crosses the band interior, so its VVI is smaller
        // than the sum but each excursion is still counted
        let vb = compute_vvi(&times, &both, &s);
        assert!(vb > 0.0 && vb < vu + vo);
    }

    fn report(total_entries: &[f64]) -> VviReport {
        VviReport {
            entries: total_entries
                .iter()
                .enumerate()
                .map(|(i, &v)| (format!("n{i}"), v))
                .collect(),
            total: total_entries.iter().sum(),
            violating_nodes: total_entries.iter().filter(|&&v| v > 0.0).count(),
        }
    }

    fn totals(frac: f64) -> CapacityTotals {
        CapacityTotals {
            c_mos: frac * 1e-9,
            c_mim: 0.0,
            c_mos_max: 1e-9,
            c_mim_max: 1e-9,
        }
    }

    #[test]
    fn reward_above_tolerance_penalizes_ratio() {
        let init = report(&[2e-11]);
        let cur = report(&[1e-11]);
        // ratio 0.5 with gamma 0.1: reward 0.5
        let r = time_reward(&cur, &init, &totals(1.0), 0.1).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        // worse than initial: negative
        let worse = report(&[3e-11]);
        let r = time_reward(&worse, &init, &totals(0.0), 0.1).unwrap();
        assert!((r + 0.5).abs() < 1e-12);
    }

    #[test]
    fn reward_below_tolerance_adds_saving_bonus() {
        let init = report(&[2e-11]);
        let cur = report(&[1e-12]); // ratio 0.05 <= gamma 0.1
        let r = time_reward(&cur, &init, &totals(0.25), 0.1).unwrap();
        assert!((r - (0.9 + 0.75)).abs() < 1e-12);
    }

    #[test]
    fn reward_gamma_zero_requires_exact_elimination() {
        let init = report(&[2e-11]);
        let tiny = report(&[1e-20]);
        let r = time_reward(&tiny, &init, &totals(0.0), 0.0).unwrap();
        assert!(r < 1.0); // still in the penalty branch
        let zero = report(&[0.0]);
        let r = time_reward(&zero, &init, &totals(0.0), 0.0).unwrap();
        assert!((r - 2.0).abs() < 1e-12); // (1-0) + (1-0)
    }

    #[test]
    fn reward_undefined_for_clean_initial_state() {
        let init = report(&[0.0]);
        let cur = report(&[0.0]);
        assert!(matches!(
            time_reward(&cur, &init, &totals(0.0), 0.1),
            Err(Error::UndefinedRatio(_))
        ));
    }

    #[test]
    fn report_counts_violating_nodes() {
        let r = report(&[0.0, 1e-12, 0.0, 3e-12]);
        assert_eq!(r.violating_nodes, 2);
        assert!((r.total - 4e-12).abs() < 1e-24);
        let csv = r.to_csv();
        assert!(csv.starts_with("node,vvi_vs\n"));
        assert!(csv.contains("TOTAL,"));
    }
}
