//! Decap placement state: integer levels per unit cell.
//!
//! Every available cell holds a level in 0..=max_level; the placed
//! capacitance is level * step for the cell's technology (MOS on chip,
//! MIM on the interposer).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floorplan::{Floorplan, Layer, UdcSite};
use crate::params::PdnParams;

/// Placement levels over one grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelGrid {
    rows: usize,
    cols: usize,
    levels: Vec<u8>,
}

impl LevelGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        LevelGrid {
            rows,
            cols,
            levels: vec![0; rows * cols],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.levels[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, level: u8) {
        self.levels[row * self.cols + col] = level;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Sum of all levels.
    pub fn level_sum(&self) -> u64 {
        self.levels.iter().map(|&v| v as u64).sum()
    }

    fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows)
            .map(|r| self.levels[r * self.cols..(r + 1) * self.cols].to_vec())
            .collect()
    }

    fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidInput("level matrix is empty".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput(
                "level matrix rows have unequal lengths".into(),
            ));
        }
        Ok(LevelGrid {
            rows: rows.len(),
            cols,
            levels: rows.iter().flatten().copied().collect(),
        })
    }
}

/// MIM and MOS capacitance totals against the floorplan's capacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityTotals {
    /// Placed on-chip MOS capacitance [F]
    pub c_mos: f64,
    /// Placed interposer MIM capacitance [F]
    pub c_mim: f64,
    /// MOS capacitance if every available chip site were at max level [F]
    pub c_mos_max: f64,
    /// MIM capacitance if every available interposer site were at max level [F]
    pub c_mim_max: f64,
}

/// Full placement state: one MIM grid plus one MOS grid per chiplet
/// (chiplet declaration order).
#[derive(Debug, Clone, PartialEq)]
pub struct DecapLayout {
    pub mim: LevelGrid,
    pub mos: Vec<LevelGrid>,
}

/// Serialized form: `{"mim": [[...]], "mos": {"<chiplet>": [[...]]}}`.
#[derive(Serialize, Deserialize)]
struct LayoutFile {
    mim: Vec<Vec<u8>>,
    mos: BTreeMap<String, Vec<Vec<u8>>>,
}

impl DecapLayout {
    pub fn empty(fp: &Floorplan) -> Self {
        DecapLayout {
            mim: LevelGrid::zeros(fp.intp_rows, fp.intp_cols),
            mos: fp
                .chiplets
                .iter()
                .map(|c| LevelGrid::zeros(c.rows, c.cols))
                .collect(),
        }
    }

    /// Every available site at max level.
    pub fn saturated(fp: &Floorplan, params: &PdnParams) -> Self {
        let mut l = Self::empty(fp);
        for site in fp.freq_sites() {
            l.set_level(site, params.max_level);
        }
        l
    }

    pub fn level(&self, site: UdcSite) -> u8 {
        match site.layer {
            Layer::Interposer => self.mim.get(site.row, site.col),
            Layer::Chip(i) => self.mos[i].get(site.row, site.col),
        }
    }

    pub fn set_level(&mut self, site: UdcSite, level: u8) {
        match site.layer {
            Layer::Interposer => self.mim.set(site.row, site.col, level),
            Layer::Chip(i) => self.mos[i].set(site.row, site.col, level),
        }
    }

    /// Applies a level delta, clamped to [0, max_level].
    pub fn nudge(&mut self, site: UdcSite, delta: i8, max_level: u8) {
        let cur = self.level(site) as i16;
        let next = (cur + delta as i16).clamp(0, max_level as i16);
        self.set_level(site, next as u8);
    }

    /// Shape, range, and space-matrix compliance.
    pub fn validate(&self, fp: &Floorplan, params: &PdnParams) -> Result<()> {
        if self.mim.rows != fp.intp_rows || self.mim.cols != fp.intp_cols {
            return Err(Error::LayoutViolation(format!(
                "MIM grid is {}x{}, interposer is {}x{}",
                self.mim.rows, self.mim.cols, fp.intp_rows, fp.intp_cols
            )));
        }
        if self.mos.len() != fp.chiplets.len() {
            return Err(Error::LayoutViolation(format!(
                "layout has {} MOS grids, floorplan has {} chiplets",
                self.mos.len(),
                fp.chiplets.len()
            )));
        }
        let check_grid = |grid: &LevelGrid,
                          space: &crate::floorplan::SpaceMatrix,
                          what: &str|
         -> Result<()> {
            for r in 0..grid.rows {
                for c in 0..grid.cols {
                    let lvl = grid.get(r, c);
                    if lvl > params.max_level {
                        return Err(Error::LayoutViolation(format!(
                            "{what} cell ({r},{c}) level {lvl} exceeds max {}",
                            params.max_level
                        )));
                    }
                    if lvl > 0 && !space.available(r, c) {
                        return Err(Error::LayoutViolation(format!(
                            "{what} cell ({r},{c}) is occupied but holds level {lvl}"
                        )));
                    }
                }
            }
            Ok(())
        };
        check_grid(&self.mim, &fp.intp_space, "interposer")?;
        for (grid, ch) in self.mos.iter().zip(&fp.chiplets) {
            if grid.rows != ch.rows || grid.cols != ch.cols {
                return Err(Error::LayoutViolation(format!(
                    "MOS grid for {:?} is {}x{}, die is {}x{}",
                    ch.name, grid.rows, grid.cols, ch.rows, ch.cols
                )));
            }
            check_grid(grid, &ch.space, &ch.name)?;
        }
        Ok(())
    }

    /// Placed totals and floorplan capacity [F].
    pub fn capacity(&self, fp: &Floorplan, params: &PdnParams) -> CapacityTotals {
        let c_mos = self.mos.iter().map(|g| g.level_sum() as f64).sum::<f64>() * params.mos_step;
        let c_mim = self.mim.level_sum() as f64 * params.mim_step;
        CapacityTotals {
            c_mos,
            c_mim,
            c_mos_max: fp.n_chip_sites() as f64 * params.mos_site_max(),
            c_mim_max: fp.n_interposer_sites() as f64 * params.mim_site_max(),
        }
    }

    pub fn to_json(&self, fp: &Floorplan) -> String {
        let file = LayoutFile {
            mim: self.mim.to_rows(),
            mos: fp
                .chiplets
                .iter()
                .zip(&self.mos)
                .map(|(c, g)| (c.name.clone(), g.to_rows()))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("layout serializes")
    }

    /// Parses and validates a layout file against the floorplan.
    pub fn from_json(s: &str, fp: &Floorplan, params: &PdnParams) -> Result<Self> {
        let file: LayoutFile = serde_json::from_str(s)
            .map_err(|e| Error::InvalidInput(format!("layout JSON: {e}")))?;
        let mut mos = Vec::with_capacity(fp.chiplets.len());
        for ch in &fp.chiplets {
            let rows = file.mos.get(&ch.name).ok_or_else(|| {
                Error::InvalidInput(format!("layout is missing MOS grid for {:?}", ch.name))
            })?;
            mos.push(LevelGrid::from_rows(rows)?);
        }
        for name in file.mos.keys() {
            if fp.chiplet_index(name).is_none() {
                return Err(Error::InvalidInput(format!(
                    "layout has MOS grid for unknown chiplet {name:?}"
                )));
            }
        }
        let layout = DecapLayout {
            mim: LevelGrid::from_rows(&file.mim)?,
            mos,
        };
        layout.validate(fp, params)?;
        Ok(layout)
    }
}
