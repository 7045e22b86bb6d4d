//! Electrical parameters of the 2.5D power delivery network.
//!
//! All values describe one unit cell (1 mm x 1 mm tile) of a power grid,
//! or one vertical connection stack. Everything is SI: ohms, henries,
//! farads, volts, amperes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-unit-cell and per-connection electrical parameters.
///
/// A "unit cell" is a 1 mm x 1 mm tile of a power grid; neighboring cells
/// are joined by a series R-L link and every cell carries a shunt
/// capacitance to ground. Vertical connections (microbumps, TSV + C4 bump
/// stacks) are aggregated per unit cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdnParams {
    // ===== on-chip grid =====
    /// Chip grid link resistance [ohm]
    pub r_chip: f64,
    /// Chip grid link inductance [H]
    pub l_chip: f64,
    /// Chip intrinsic shunt capacitance per unit cell [F]
    pub c_chip: f64,

    // ===== interposer grid =====
    /// Interposer grid link resistance [ohm]
    pub r_intp: f64,
    /// Interposer grid link inductance [H]
    pub l_intp: f64,
    /// Interposer intrinsic shunt capacitance per unit cell [F]
    pub c_intp: f64,

    // ===== vertical connections =====
    /// Single TSV resistance [ohm]
    pub r_tsv: f64,
    /// Single TSV inductance [H]
    pub l_tsv: f64,
    /// Single TSV capacitance to ground [F]
    pub c_tsv: f64,
    /// Single C4 bump resistance [ohm]
    pub r_bump: f64,
    /// Single C4 bump inductance [H]
    pub l_bump: f64,
    /// Single microbump resistance [ohm]
    pub r_ubump: f64,
    /// Single microbump inductance [H]
    pub l_ubump: f64,
    /// Parallel bumps (or TSVs) aggregated per unit cell connection
    pub bumps_per_cell: usize,

    // ===== decap technology =====
    /// MOS decap density [F/m^2] (14.4 fF/um^2 for the 55 nm preset)
    pub mos_cap_density: f64,
    /// MOS decap ESR-capacitance product [ohm*F]; esr(C) = mos_esr_per_f / C
    pub mos_esr_per_f: f64,
    /// MIM decap density [F/m^2] (5 fF/um^2 for the 55 nm preset)
    pub mim_cap_density: f64,
    /// MIM decap ESR [ohm]; metal fingers, taken as ideal by default
    pub mim_esr: f64,
    /// Capacitance added per MOS placement level [F]
    pub mos_step: f64,
    /// Capacitance added per MIM placement level [F]
    pub mim_step: f64,
    /// Highest placement level per site (levels are integers in 0..=max)
    pub max_level: u8,

    // ===== loss model =====
    /// Dielectric loss tangent of shunt capacitances (dimensionless)
    pub tan_delta: f64,

    // ===== supply =====
    /// Supply voltage [V]
    pub vdd: f64,
}

impl PdnParams {
    /// 55 nm-class 2.5D stack: four-core RISC-V system on an 11x11 mm
    /// interposer. Grid values are per 1 mm unit cell; vertical values are
    /// per single bump/TSV with 25 in parallel per cell (200 um pitch).
    pub fn rocket64_55nm() -> Self {
        PdnParams {
            r_chip: 19.11e-3,
            l_chip: 8.8e-12,
            c_chip: 17.7e-15,
            r_intp: 34.2e-3,
            l_intp: 0.63e-12,
            c_intp: 2.79e-12,
            r_tsv: 5.57e-3,
            l_tsv: 30e-12,
            c_tsv: 0.24e-12,
            r_bump: 13.85e-3,
            l_bump: 2.77e-12,
            r_ubump: 0.2e-3,
            l_ubump: 5.69e-12,
            bumps_per_cell: 25,
            mos_cap_density: 14.4e-3, // 14.4 fF/um^2 = 14.4e-3 F/m^2
            mos_esr_per_f: 24e-12,    // 24 ohm/pF
            mim_cap_density: 5.0e-3,  // 5 fF/um^2
            mim_esr: 0.0,
            mos_step: 50e-12,
            mim_step: 200e-12,
            max_level: 10,
            tan_delta: 0.02,
            vdd: 1.2,
        }
    }

    /// Largest MOS capacitance one on-chip site can hold [F].
    pub fn mos_site_max(&self) -> f64 {
        self.mos_step * self.max_level as f64
    }

    /// Largest MIM capacitance one interposer site can hold [F].
    pub fn mim_site_max(&self) -> f64 {
        self.mim_step * self.max_level as f64
    }

    /// ESR of a MOS decap of capacitance `c` [ohm]. Poly gate resistance
    /// scales inversely with area, hence with capacitance.
    pub fn mos_esr(&self, c: f64) -> f64 {
        self.mos_esr_per_f / c
    }

    /// Checks positivity and range constraints; returns self for chaining.
    pub fn validate(&self) -> Result<&Self> {
        let positive = [
            ("r_chip", self.r_chip),
            ("l_chip", self.l_chip),
            ("c_chip", self.c_chip),
            ("r_intp", self.r_intp),
            ("l_intp", self.l_intp),
            ("c_intp", self.c_intp),
            ("r_tsv", self.r_tsv),
            ("l_tsv", self.l_tsv),
            ("c_tsv", self.c_tsv),
            ("r_bump", self.r_bump),
            ("l_bump", self.l_bump),
            ("r_ubump", self.r_ubump),
            ("l_ubump", self.l_ubump),
            ("mos_cap_density", self.mos_cap_density),
            ("mos_esr_per_f", self.mos_esr_per_f),
            ("mim_cap_density", self.mim_cap_density),
            ("mos_step", self.mos_step),
            ("mim_step", self.mim_step),
            ("vdd", self.vdd),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.mim_esr < 0.0 || !self.mim_esr.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "mim_esr must be non-negative, got {}",
                self.mim_esr
            )));
        }
        if self.tan_delta < 0.0 || !self.tan_delta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "tan_delta must be non-negative, got {}",
                self.tan_delta
            )));
        }
        if self.bumps_per_cell == 0 {
            return Err(Error::InvalidParameter(
                "bumps_per_cell must be at least 1".into(),
            ));
        }
        if self.max_level == 0 {
            return Err(Error::InvalidParameter(
                "max_level must be at least 1".into(),
            ));
        }
        Ok(self)
    }
}
