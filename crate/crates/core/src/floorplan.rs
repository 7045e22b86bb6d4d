//! Floorplan geometry: interposer, chiplets, TSV sites, probe ports.
//!
//! Grids are indexed (row, col), row-major, one cell per 1 mm x 1 mm
//! unit cell. A space matrix marks which cells may receive a decap
//! (1 = available, 0 = occupied by logic or otherwise prohibited).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which power grid a cell belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layer {
    Interposer,
    /// Index into `Floorplan::chiplets`.
    Chip(usize),
}

/// One decap-capable unit cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UdcSite {
    pub layer: Layer,
    pub row: usize,
    pub col: usize,
}

/// Decap availability per cell of one grid; 1 = available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u8>>", into = "Vec<Vec<u8>>")]
pub struct SpaceMatrix {
    rows: usize,
    cols: usize,
    cells: Vec<u8>,
}

impl SpaceMatrix {
    pub fn from_rows(rows: Vec<Vec<u8>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidFloorplan("space matrix is empty".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidFloorplan(
                "space matrix rows have unequal lengths".into(),
            ));
        }
        for row in &rows {
            for &v in row {
                if v > 1 {
                    return Err(Error::InvalidFloorplan(format!(
                        "space matrix entries must be 0 or 1, got {v}"
                    )));
                }
            }
        }
        Ok(SpaceMatrix {
            rows: rows.len(),
            cols,
            cells: rows.into_iter().flatten().collect(),
        })
    }

    /// All-available matrix of the given shape.
    pub fn all_available(rows: usize, cols: usize) -> Self {
        SpaceMatrix {
            rows,
            cols,
            cells: vec![1; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn available(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.cols + col] == 1
    }

    /// Number of available cells.
    pub fn available_count(&self) -> usize {
        self.cells.iter().filter(|&&v| v == 1).count()
    }
}

impl TryFrom<Vec<Vec<u8>>> for SpaceMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<u8>>) -> Result<Self> {
        SpaceMatrix::from_rows(rows)
    }
}

impl From<SpaceMatrix> for Vec<Vec<u8>> {
    fn from(m: SpaceMatrix) -> Vec<Vec<u8>> {
        (0..m.rows)
            .map(|r| m.cells[r * m.cols..(r + 1) * m.cols].to_vec())
            .collect()
    }
}

/// One die stacked on the interposer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chiplet {
    pub name: String,
    /// Top-left interposer cell the die covers (row, col).
    pub origin: (usize, usize),
    pub rows: usize,
    pub cols: usize,
    /// MOS decap availability, `rows` x `cols`.
    pub space: SpaceMatrix,
    /// On-die cells carrying I/O drivers; must lie on the die boundary.
    pub io_edge_sites: Vec<(usize, usize)>,
}

/// Voltage observation point on a chiplet grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePort {
    pub chiplet: String,
    pub row: usize,
    pub col: usize,
}

/// Complete 2.5D system geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Floorplan {
    pub intp_rows: usize,
    pub intp_cols: usize,
    /// MIM decap availability on the interposer, `intp_rows` x `intp_cols`.
    pub intp_space: SpaceMatrix,
    /// Interposer cells carrying a TSV + C4 bump stack down to the supply.
    pub tsv_sites: Vec<(usize, usize)>,
    pub chiplets: Vec<Chiplet>,
    pub probe_ports: Vec<ProbePort>,
}

impl Floorplan {
    /// Checks geometric consistency; every constructor path must call this.
    pub fn validate(&self) -> Result<()> {
        if self.intp_rows == 0 || self.intp_cols == 0 {
            return Err(Error::InvalidFloorplan(
                "interposer grid has a zero dimension".into(),
            ));
        }
        if self.intp_space.rows != self.intp_rows || self.intp_space.cols != self.intp_cols {
            return Err(Error::InvalidFloorplan(format!(
                "interposer space matrix is {}x{}, grid is {}x{}",
                self.intp_space.rows, self.intp_space.cols, self.intp_rows, self.intp_cols
            )));
        }
        if self.tsv_sites.is_empty() {
            return Err(Error::InvalidFloorplan(
                "at least one TSV site is required to reach the supply".into(),
            ));
        }
        let mut seen_tsv = std::collections::HashSet::new();
        for &(r, c) in &self.tsv_sites {
            if r >= self.intp_rows || c >= self.intp_cols {
                return Err(Error::InvalidFloorplan(format!(
                    "TSV site ({r},{c}) is outside the {}x{} interposer",
                    self.intp_rows, self.intp_cols
                )));
            }
            if !seen_tsv.insert((r, c)) {
                return Err(Error::InvalidFloorplan(format!(
                    "duplicate TSV site ({r},{c})"
                )));
            }
        }

        let mut names = std::collections::HashSet::new();
        let mut covered: Vec<Option<usize>> = vec![None; self.intp_rows * self.intp_cols];
        for (i, ch) in self.chiplets.iter().enumerate() {
            if ch.name.is_empty() {
                return Err(Error::InvalidFloorplan("chiplet with empty name".into()));
            }
            if !names.insert(ch.name.clone()) {
                return Err(Error::InvalidFloorplan(format!(
                    "duplicate chiplet name {:?}",
                    ch.name
                )));
            }
            if ch.rows == 0 || ch.cols == 0 {
                return Err(Error::InvalidFloorplan(format!(
                    "chiplet {:?} has a zero dimension",
                    ch.name
                )));
            }
            let (or, oc) = ch.origin;
            if or + ch.rows > self.intp_rows || oc + ch.cols > self.intp_cols {
                return Err(Error::InvalidFloorplan(format!(
                    "chiplet {:?} at ({or},{oc}) size {}x{} exceeds the {}x{} interposer",
                    ch.name, ch.rows, ch.cols, self.intp_rows, self.intp_cols
                )));
            }
            for r in 0..ch.rows {
                for c in 0..ch.cols {
                    let cell = &mut covered[(or + r) * self.intp_cols + (oc + c)];
                    if let Some(other) = *cell {
                        return Err(Error::InvalidFloorplan(format!(
                            "chiplets {:?} and {:?} overlap at interposer cell ({},{})",
                            self.chiplets[other].name,
                            ch.name,
                            or + r,
                            oc + c
                        )));
                    }
                    *cell = Some(i);
                }
            }
            if ch.space.rows != ch.rows || ch.space.cols != ch.cols {
                return Err(Error::InvalidFloorplan(format!(
                    "chiplet {:?} space matrix is {}x{}, die is {}x{}",
                    ch.name, ch.space.rows, ch.space.cols, ch.rows, ch.cols
                )));
            }
            let mut seen_io = std::collections::HashSet::new();
            for &(r, c) in &ch.io_edge_sites {
                if r >= ch.rows || c >= ch.cols {
                    return Err(Error::InvalidFloorplan(format!(
                        "chiplet {:?} I/O site ({r},{c}) is outside its {}x{} die",
                        ch.name, ch.rows, ch.cols
                    )));
                }
                let on_edge = r == 0 || c == 0 || r == ch.rows - 1 || c == ch.cols - 1;
                if !on_edge {
                    return Err(Error::InvalidFloorplan(format!(
                        "chiplet {:?} I/O site ({r},{c}) is not on the die boundary",
                        ch.name
                    )));
                }
                if !seen_io.insert((r, c)) {
                    return Err(Error::InvalidFloorplan(format!(
                        "chiplet {:?} has duplicate I/O site ({r},{c})",
                        ch.name
                    )));
                }
            }
        }

        for p in &self.probe_ports {
            let Some(ch) = self.chiplets.iter().find(|c| c.name == p.chiplet) else {
                return Err(Error::InvalidFloorplan(format!(
                    "probe port references unknown chiplet {:?}",
                    p.chiplet
                )));
            };
            if p.row >= ch.rows || p.col >= ch.cols {
                return Err(Error::InvalidFloorplan(format!(
                    "probe port ({},{}) is outside chiplet {:?}",
                    p.row, p.col, p.chiplet
                )));
            }
        }
        Ok(())
    }

    pub fn chiplet_index(&self, name: &str) -> Option<usize> {
        self.chiplets.iter().position(|c| c.name == name)
    }

    /// On-chip decap sites: chiplets in declaration order, cells row-major,
    /// available cells only. This order is the canonical MOS action order.
    pub fn chip_sites(&self) -> Vec<UdcSite> {
        let mut out = Vec::new();
        for (i, ch) in self.chiplets.iter().enumerate() {
            for r in 0..ch.rows {
                for c in 0..ch.cols {
                    if ch.space.available(r, c) {
                        out.push(UdcSite {
                            layer: Layer::Chip(i),
                            row: r,
                            col: c,
                        });
                    }
                }
            }
        }
        out
    }

    /// Interposer decap sites, row-major, available cells only. Canonical
    /// MIM action order.
    pub fn interposer_sites(&self) -> Vec<UdcSite> {
        let mut out = Vec::new();
        for r in 0..self.intp_rows {
            for c in 0..self.intp_cols {
                if self.intp_space.available(r, c) {
                    out.push(UdcSite {
                        layer: Layer::Interposer,
                        row: r,
                        col: c,
                    });
                }
            }
        }
        out
    }

    /// Action order for impedance-domain optimization: all chip sites,
    /// then all interposer sites.
    pub fn freq_sites(&self) -> Vec<UdcSite> {
        let mut v = self.chip_sites();
        v.extend(self.interposer_sites());
        v
    }

    /// Action order for voltage-domain optimization: chip sites only
    /// (the interposer MIM distribution stays frozen).
    pub fn time_sites(&self) -> Vec<UdcSite> {
        self.chip_sites()
    }

    pub fn n_chip_sites(&self) -> usize {
        self.chiplets
            .iter()
            .map(|c| c.space.available_count())
            .sum()
    }

    pub fn n_interposer_sites(&self) -> usize {
        self.intp_space.available_count()
    }

    /// Reference four-core system: 11x11 interposer, four 3x3 CPU dies at
    /// the corners, a memory controller top-center, a NoC die in the middle.
    /// TSV stacks ring the interposer boundary; each CPU center cell is
    /// logic (no decap space) and carries the observation port.
    pub fn rocket64() -> Self {
        let cpu_space = SpaceMatrix::from_rows(vec![vec![1, 1, 1], vec![1, 0, 1], vec![1, 1, 1]])
            .expect("static");
        // I/O drivers sit on the two die edges facing the interposer center:
        // the full horizontal edge at `edge_row` plus the full vertical edge
        // at `edge_col` (5 cells on a 3x3 die, shared corner counted once).
        let io_l = |edge_row: usize, edge_col: usize| -> Vec<(usize, usize)> {
            let mut v: Vec<(usize, usize)> = (0..3).map(|c| (edge_row, c)).collect();
            v.extend((0..3).map(|r| (r, edge_col)));
            v.sort();
            v.dedup();
            v
        };
        let chiplet = |name: &str, origin: (usize, usize), space: SpaceMatrix, io| Chiplet {
            name: name.into(),
            origin,
            rows: 3,
            cols: 3,
            space,
            io_edge_sites: io,
        };
        let full = SpaceMatrix::all_available(3, 3);
        let mut tsv = Vec::new();
        for c in 0..11 {
            tsv.push((0usize, c));
        }
        for r in 1..10 {
            tsv.push((r, 0));
            tsv.push((r, 10));
        }
        for c in 0..11 {
            tsv.push((10, c));
        }
        let fp = Floorplan {
            intp_rows: 11,
            intp_cols: 11,
            intp_space: SpaceMatrix::all_available(11, 11),
            tsv_sites: tsv,
            chiplets: vec![
                chiplet("cpu0", (0, 0), cpu_space.clone(), io_l(2, 2)),
                chiplet("cpu1", (0, 8), cpu_space.clone(), io_l(2, 0)),
                chiplet("cpu2", (8, 0), cpu_space.clone(), io_l(0, 2)),
                chiplet("cpu3", (8, 8), cpu_space.clone(), io_l(0, 0)),
                chiplet("mem", (0, 4), full.clone(), io_l(2, 2)),
                chiplet("noc", (4, 4), full, io_l(0, 2)),
            ],
            probe_ports: ["cpu0", "cpu1", "cpu2", "cpu3"]
                .iter()
                .map(|n| ProbePort {
                    chiplet: (*n).into(),
                    row: 1,
                    col: 1,
                })
                .collect(),
        };
        fp.validate().expect("reference floorplan is consistent");
        fp
    }
}
