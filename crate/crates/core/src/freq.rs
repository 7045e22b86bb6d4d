//! Target impedance mask and the impedance-domain reward.

use serde::{Deserialize, Serialize};

use crate::ac::AcSolution;
use crate::decap::CapacityTotals;
use crate::error::{Error, Result};

/// Inputs defining the target impedance mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    /// Supply voltage [V]
    pub vdd: f64,
    /// Allowed ripple as a fraction of vdd (e.g. 0.05)
    pub ripple: f64,
    /// Peak power budget [W]
    pub p_max: f64,
    /// Fastest switching edge [s]; sets the mask knee at 0.35 / t_r
    pub t_r: f64,
}

impl TargetSpec {
    pub fn new(vdd: f64, ripple: f64, p_max: f64, t_r: f64) -> Result<Self> {
        let s = TargetSpec {
            vdd,
            ripple,
            p_max,
            t_r,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("vdd", self.vdd),
            ("p_max", self.p_max),
            ("t_r", self.t_r),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.ripple > 0.0 && self.ripple < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "ripple must be in (0, 1), got {}",
                self.ripple
            )));
        }
        Ok(())
    }

    /// Worst-case transient current draw [A]: half the average-power
    /// current at vdd.
    pub fn i_ref(&self) -> f64 {
        self.p_max / (2.0 * self.vdd)
    }

    /// Mask corner frequency [Hz], the knee of the switching spectrum.
    pub fn f_knee(&self) -> f64 {
        0.35 / self.t_r
    }

    /// Flat mask value below the knee [ohm].
    pub fn z_flat(&self) -> f64 {
        self.vdd * self.ripple / self.i_ref()
    }

    /// Target impedance at frequency `f` [ohm]: flat below the knee,
    /// rising 20 dB/decade above it.
    pub fn target_impedance(&self, f: f64) -> f64 {
        let zf = self.z_flat();
        let fk = self.f_knee();
        if f <= fk {
            zf
        } else {
            zf * (f / fk)
        }
    }
}

/// Mask comparison over one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskReport {
    /// Worst excess |Z| - Z_target over ports, per sweep point [ohm];
    /// negative where compliant.
    pub excess: Vec<f64>,
    /// Count of sweep points with positive excess.
    pub violation_count: usize,
    /// Largest excess [ohm] and the frequency where it occurs.
    pub worst_excess: f64,
    pub worst_freq: f64,
}

impl MaskReport {
    pub fn is_compliant(&self) -> bool {
        self.violation_count == 0
    }
}

/// Compares every port's |Z| against the mask at every sweep point.
pub fn mask_violation(sol: &AcSolution, spec: &TargetSpec) -> MaskReport {
    let mut excess = Vec::with_capacity(sol.freqs.len());
    let mut violation_count = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_freq = sol.freqs.first().copied().unwrap_or(0.0);
    for (i, &f) in sol.freqs.iter().enumerate() {
        let e = sol.worst_mag(i) - spec.target_impedance(f);
        if e > 0.0 {
            violation_count += 1;
        }
        if e > worst {
            worst = e;
            worst_freq = f;
        }
        excess.push(e);
    }
    MaskReport {
        excess,
        violation_count,
        worst_excess: worst,
        worst_freq,
    }
}

/// Split of the compliance bonus between MOS and MIM savings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            alpha: 0.5,
            beta: 0.5,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 || (self.alpha + self.beta - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "reward weights must be non-negative and sum to 1, got {} + {}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Impedance-domain reward.
///
/// While any sweep point violates the mask the reward is the negative
/// sum of per-frequency worst excesses (clamped at zero), so every
/// violation costs. Once compliant, the reward switches to a positive
/// capacitance-saving bonus weighted by `weights`.
pub fn freq_reward(report: &MaskReport, totals: &CapacityTotals, weights: &RewardWeights) -> f64 {
    if !report.is_compliant() {
        return -report.excess.iter().map(|&e| e.max(0.0)).sum::<f64>();
    }
    let frac = |used: f64, max: f64| if max > 0.0 { used / max } else { 0.0 };
    weights.alpha * (1.0 - frac(totals.c_mos, totals.c_mos_max))
        + weights.beta * (1.0 - frac(totals.c_mim, totals.c_mim_max))
}
