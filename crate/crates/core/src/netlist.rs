//! Circuit netlist: nodes, branches, and the builders that turn a
//! floorplan into a hierarchical power-grid model.
//!
//! Node 0 is always ground. Grid nodes are labeled and addressable by
//! (layer, row, col); auxiliary structure nodes (supply, TSV midpoints)
//! carry labels only.

use std::collections::HashMap;

use crate::decap::DecapLayout;
use crate::error::{Error, Result};
use crate::floorplan::{Floorplan, Layer, UdcSite};
use crate::params::PdnParams;

pub type NodeId = usize;
pub const GROUND: NodeId = 0;

/// Two-terminal element between nodes `a` and `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchKind {
    /// Plain resistor [ohm].
    Res(f64),
    /// Series resistor-inductor link [ohm, H]; adds one auxiliary
    /// current unknown enforcing v_a - v_b = (r + jwL) i.
    RlLink { r: f64, l: f64 },
    /// Ideal capacitor [F].
    Cap(f64),
    /// Capacitor with dielectric loss: shunt conductance
    /// G(f) = 2*pi*f*c*tan_delta in parallel with c. The conductance is
    /// frequency-dependent in AC analysis and frozen at a stated
    /// evaluation frequency for transient runs.
    LossyCap { c: f64, tan_delta: f64 },
    /// Decap cell: ESR in series with a capacitor [ohm, F].
    SeriesRc { r: f64, c: f64 },
    /// Ideal DC voltage source, v_a - v_b = volts; adds one auxiliary
    /// current unknown.
    VSrc { volts: f64 },
}

impl BranchKind {
    /// Does this element introduce an auxiliary current unknown?
    pub fn has_aux(&self) -> bool {
        matches!(self, BranchKind::RlLink { .. } | BranchKind::VSrc { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub kind: BranchKind,
    pub a: NodeId,
    pub b: NodeId,
}

/// Voltage observation point.
#[derive(Debug, Clone, PartialEq)]
pub struct Port {
    pub node: NodeId,
    pub label: String,
}

/// Which unit-cell parameter set a standalone grid uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitCell {
    Chip,
    Interposer,
}

#[derive(Debug, Clone, Default)]
pub struct Netlist {
    labels: Vec<String>,
    branches: Vec<Branch>,
    grid_nodes: HashMap<(Layer, usize, usize), NodeId>,
    ports: Vec<Port>,
    supply: Option<NodeId>,
}

impl Netlist {
    /// Empty netlist holding only the ground node.
    pub fn new() -> Self {
        Netlist {
            labels: vec!["gnd".into()],
            ..Default::default()
        }
    }

    pub fn add_node(&mut self, label: impl Into<String>) -> NodeId {
        self.labels.push(label.into());
        self.labels.len() - 1
    }

    pub fn add_branch(&mut self, kind: BranchKind, a: NodeId, b: NodeId) {
        debug_assert!(a < self.labels.len() && b < self.labels.len());
        self.branches.push(Branch { kind, a, b });
    }

    pub fn add_port(&mut self, node: NodeId, label: impl Into<String>) {
        self.ports.push(Port {
            node,
            label: label.into(),
        });
    }

    /// Total node count including ground.
    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn ports(&self) -> &[Port] {
        &self.ports
    }

    pub fn supply_node(&self) -> Option<NodeId> {
        self.supply
    }

    pub fn label(&self, node: NodeId) -> &str {
        &self.labels[node]
    }

    /// Grid node lookup; `None` if the coordinate was never stamped.
    pub fn grid_node(&self, layer: Layer, row: usize, col: usize) -> Option<NodeId> {
        self.grid_nodes.get(&(layer, row, col)).copied()
    }

    pub fn site_node(&self, site: UdcSite) -> Option<NodeId> {
        self.grid_node(site.layer, site.row, site.col)
    }

    /// Number of auxiliary current unknowns (inductive links + sources).
    pub fn aux_count(&self) -> usize {
        self.branches.iter().filter(|b| b.kind.has_aux()).count()
    }

    fn grid_label(&self, fp: Option<&Floorplan>, layer: Layer, r: usize, c: usize) -> String {
        match (layer, fp) {
            (Layer::Interposer, _) => format!("intp_r{r}c{c}"),
            (Layer::Chip(i), Some(fp)) => format!("{}_r{r}c{c}", fp.chiplets[i].name),
            (Layer::Chip(i), None) => format!("chip{i}_r{r}c{c}"),
        }
    }

    /// Stamps a rows x cols power grid: one node per cell, series R-L
    /// links between 4-neighbors, one lossy shunt capacitor per cell.
    fn stamp_grid(
        &mut self,
        fp: Option<&Floorplan>,
        layer: Layer,
        rows: usize,
        cols: usize,
        r_link: f64,
        l_link: f64,
        c_shunt: f64,
        tan_delta: f64,
    ) {
        for r in 0..rows {
            for c in 0..cols {
                let label = self.grid_label(fp, layer, r, c);
                let id = self.add_node(label);
                self.grid_nodes.insert((layer, r, c), id);
            }
        }
        let node = |s: &Self, r: usize, c: usize| s.grid_nodes[&(layer, r, c)];
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    let (a, b) = (node(self, r, c), node(self, r, c + 1));
                    self.add_branch(BranchKind::RlLink { r: r_link, l: l_link }, a, b);
                }
                if r + 1 < rows {
                    let (a, b) = (node(self, r, c), node(self, r + 1, c));
                    self.add_branch(BranchKind::RlLink { r: r_link, l: l_link }, a, b);
                }
            }
        }
        for r in 0..rows {
            for c in 0..cols {
                let n = node(self, r, c);
                self.add_branch(
                    BranchKind::LossyCap {
                        c: c_shunt,
                        tan_delta,
                    },
                    n,
                    GROUND,
                );
            }
        }
    }

    /// Standalone single-layer power grid (no vertical structure, no
    /// supply). Useful for grid-level verification.
    pub fn unit_cell_grid(rows: usize, cols: usize, cell: UnitCell, params: &PdnParams) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidFloorplan(
                "grid dimensions must be positive".into(),
            ));
        }
        params.validate()?;
        let mut n = Netlist::new();
        let (layer, r, l, c) = match cell {
            UnitCell::Chip => (Layer::Chip(0), params.r_chip, params.l_chip, params.c_chip),
            UnitCell::Interposer => (
                Layer::Interposer,
                params.r_intp,
                params.l_intp,
                params.c_intp,
            ),
        };
        n.stamp_grid(None, layer, rows, cols, r, l, c, params.tan_delta);
        Ok(n)
    }

    /// Full 2.5D stack: interposer grid, chiplet grids, aggregated
    /// microbump connections, TSV + C4 bump stacks to a single supply
    /// node driven by an ideal source at vdd.
    ///
    /// Vertical elements aggregate `bumps_per_cell` parallel bumps per
    /// connection: R and L divide by the count, C multiplies.
    pub fn assemble_hierarchy(fp: &Floorplan, params: &PdnParams) -> Result<Self> {
        fp.validate()?;
        params.validate()?;
        let nb = params.bumps_per_cell as f64;
        let mut n = Netlist::new();
        let supply = n.add_node("supply");
        n.supply = Some(supply);

        n.stamp_grid(
            Some(fp),
            Layer::Interposer,
            fp.intp_rows,
            fp.intp_cols,
            params.r_intp,
            params.l_intp,
            params.c_intp,
            params.tan_delta,
        );
        for (i, ch) in fp.chiplets.iter().enumerate() {
            n.stamp_grid(
                Some(fp),
                Layer::Chip(i),
                ch.rows,
                ch.cols,
                params.r_chip,
                params.l_chip,
                params.c_chip,
                params.tan_delta,
            );
        }
        // Microbump aggregate under every chiplet cell.
        for (i, ch) in fp.chiplets.iter().enumerate() {
            for r in 0..ch.rows {
                for c in 0..ch.cols {
                    let top = n.grid_nodes[&(Layer::Chip(i), r, c)];
                    let below = n.grid_nodes[&(Layer::Interposer, ch.origin.0 + r, ch.origin.1 + c)];
                    n.add_branch(
                        BranchKind::RlLink {
                            r: params.r_ubump / nb,
                            l: params.l_ubump / nb,
                        },
                        top,
                        below,
                    );
                }
            }
        }
        // TSV + C4 bump stack per site: interposer -> TSV -> midpoint
        // (with TSV capacitance to ground) -> bump -> supply.
        for &(r, c) in &fp.tsv_sites {
            let intp = n.grid_nodes[&(Layer::Interposer, r, c)];
            let mid = n.add_node(format!("tsv_r{r}c{c}"));
            n.add_branch(
                BranchKind::RlLink {
                    r: params.r_tsv / nb,
                    l: params.l_tsv / nb,
                },
                intp,
                mid,
            );
            n.add_branch(BranchKind::Cap(params.c_tsv * nb), mid, GROUND);
            n.add_branch(
                BranchKind::RlLink {
                    r: params.r_bump / nb,
                    l: params.l_bump / nb,
                },
                mid,
                supply,
            );
        }
        n.add_branch(BranchKind::VSrc { volts: params.vdd }, supply, GROUND);

        for p in &fp.probe_ports {
            let i = fp.chiplet_index(&p.chiplet).expect("validated");
            let node = n.grid_nodes[&(Layer::Chip(i), p.row, p.col)];
            n.add_port(node, format!("{}_r{}c{}", p.chiplet, p.row, p.col));
        }
        Ok(n)
    }

    /// Adds one decap branch per placed site. The layout is validated
    /// first; sites at level 0 add nothing. MOS ESR scales inversely with
    /// the placed capacitance, MIM ESR is a technology constant.
    pub fn apply_decaps(
        &mut self,
        layout: &DecapLayout,
        fp: &Floorplan,
        params: &PdnParams,
    ) -> Result<()> {
        layout.validate(fp, params)?;
        for site in fp.freq_sites() {
            let level = layout.level(site);
            if level == 0 {
                continue;
            }
            let node = self.site_node(site).ok_or_else(|| {
                Error::LayoutViolation(format!(
                    "site ({:?},{},{}) has no node in this netlist",
                    site.layer, site.row, site.col
                ))
            })?;
            let (r, c) = match site.layer {
                Layer::Chip(_) => {
                    let c = level as f64 * params.mos_step;
                    (params.mos_esr(c), c)
                }
                Layer::Interposer => (params.mim_esr, level as f64 * params.mim_step),
            };
            self.add_branch(BranchKind::SeriesRc { r, c }, node, GROUND);
        }
        Ok(())
    }

    /// Human-readable branch listing, one element per line.
    pub fn to_listing(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "# nodes {} (incl. ground)", self.node_count());
        let _ = writeln!(
            s,
            "# branches {} (aux unknowns {})",
            self.branches.len(),
            self.aux_count()
        );
        for b in &self.branches {
            let (a, bb) = (self.label(b.a), self.label(b.b));
            let _ = match b.kind {
                BranchKind::Res(r) => writeln!(s, "R {a} {bb} r={r}"),
                BranchKind::RlLink { r, l } => writeln!(s, "RL {a} {bb} r={r} l={l}"),
                BranchKind::Cap(c) => writeln!(s, "C {a} {bb} c={c}"),
                BranchKind::LossyCap { c, tan_delta } => {
                    writeln!(s, "CLOSS {a} {bb} c={c} tand={tan_delta}")
                }
                BranchKind::SeriesRc { r, c } => writeln!(s, "RCDECAP {a} {bb} r={r} c={c}"),
                BranchKind::VSrc { volts } => writeln!(s, "V {a} {bb} v={volts}"),
            };
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> PdnParams {
        PdnParams::rocket64_55nm()
    }

    fn count_kind(n: &Netlist, f: impl Fn(&BranchKind) -> bool) -> usize {
        n.branches().iter().filter(|b| f(&b.kind)).count()
    }

    #[test]
    fn single_cell_chip_grid() {
        let n = Netlist::unit_cell_grid(1, 1, UnitCell::Chip, &params()).unwrap();
        assert_eq!(n.node_count(), 2); // ground + 1 cell
        assert_eq!(n.branches().len(), 1);
        match n.branches()[0].kind {
            BranchKind::LossyCap { c, tan_delta } => {
                assert!((c - 17.7e-15).abs() < 1e-24);
                assert!((tan_delta - 0.02).abs() < 1e-15);
            }
            ref k => panic!("expected shunt cap, got {k:?}"),
        }
    }

    #[test]
    fn two_by_two_interposer_grid() {
        let n = Netlist::unit_cell_grid(2, 2, UnitCell::Interposer, &params()).unwrap();
        assert_eq!(n.node_count(), 5);
        let links: Vec<_> = n
            .branches()
            .iter()
            .filter_map(|b| match b.kind {
                BranchKind::RlLink { r, l } => Some((r, l)),
                _ => None,
            })
            .collect();
        assert_eq!(links.len(), 4);
        for (r, l) in links {
            assert!((r - 34.2e-3).abs() < 1e-12);
            assert!((l - 0.63e-12).abs() < 1e-24);
        }
        assert_eq!(count_kind(&n, |k| matches!(k, BranchKind::LossyCap { .. })), 4);
    }

    #[test]
    fn one_by_three_grid_has_two_links() {
        let n = Netlist::unit_cell_grid(1, 3, UnitCell::Chip, &params()).unwrap();
        assert_eq!(count_kind(&n, |k| matches!(k, BranchKind::RlLink { .. })), 2);
    }

    #[test]
    fn zero_dimension_grid_rejected() {
        assert!(Netlist::unit_cell_grid(0, 3, UnitCell::Chip, &params()).is_err());
    }

    #[test]
    fn bare_interposer_hierarchy_is_valid() {
        let fp = Floorplan {
            intp_rows: 2,
            intp_cols: 2,
            intp_space: crate::floorplan::SpaceMatrix::all_available(2, 2),
            tsv_sites: vec![(0, 0)],
            chiplets: vec![],
            probe_ports: vec![],
        };
        let n = Netlist::assemble_hierarchy(&fp, &params()).unwrap();
        // gnd + supply + 4 grid + 1 tsv mid
        assert_eq!(n.node_count(), 7);
        assert_eq!(count_kind(&n, |k| matches!(k, BranchKind::VSrc { .. })), 1);
    }

    #[test]
    fn reference_hierarchy_counts() {
        let fp = Floorplan::rocket64();
        let n = Netlist::assemble_hierarchy(&fp, &params()).unwrap();
        // gnd + supply + 121 interposer + 54 chip + 40 TSV midpoints
        assert_eq!(n.node_count(), 217);
        let links = count_kind(&n, |k| matches!(k, BranchKind::RlLink { .. }));
        // interposer 220, chip 6*12, ubump 54, tsv 40*2
        assert_eq!(links, 220 + 72 + 54 + 80);
        assert_eq!(count_kind(&n, |k| matches!(k, BranchKind::Cap(_))), 40);
        assert_eq!(
            count_kind(&n, |k| matches!(k, BranchKind::LossyCap { .. })),
            121 + 54
        );
        assert_eq!(n.aux_count(), 220 + 72 + 54 + 80 + 1);
        assert_eq!(n.ports().len(), 4);
        // Microbump aggregate: 25 bumps in parallel per cell.
        let ub = n
            .branches()
            .iter()
            .find_map(|b| match b.kind {
                BranchKind::RlLink { r, l } if (l - 5.69e-12 / 25.0).abs() < 1e-20 => Some((r, l)),
                _ => None,
            })
            .expect("microbump link present");
        assert!((ub.0 - 0.2e-3 / 25.0).abs() < 1e-12);
    }

    #[test]
    fn assembly_is_deterministic() {
        let fp = Floorplan::rocket64();
        let a = Netlist::assemble_hierarchy(&fp, &params()).unwrap();
        let b = Netlist::assemble_hierarchy(&fp, &params()).unwrap();
        assert_eq!(a.to_listing(), b.to_listing());
    }

    #[test]
    fn apply_decaps_empty_layout_is_identity() {
        let fp = Floorplan::rocket64();
        let mut n = Netlist::assemble_hierarchy(&fp, &params()).unwrap();
        let before = n.branches().len();
        n.apply_decaps(&DecapLayout::empty(&fp), &fp, &params()).unwrap();
        assert_eq!(n.branches().len(), before);
    }

    #[test]
    fn apply_decaps_single_site() {
        let fp = Floorplan::rocket64();
        let p = params();
        let mut n = Netlist::assemble_hierarchy(&fp, &p).unwrap();
        let mut layout = DecapLayout::empty(&fp);
        let site = fp.chip_sites()[0];
        layout.set_level(site, 1);
        let before = n.branches().len();
        n.apply_decaps(&layout, &fp, &p).unwrap();
        assert_eq!(n.branches().len(), before + 1);
        match n.branches().last().unwrap().kind {
            BranchKind::SeriesRc { r, c } => {
                // one MOS level: 50 pF with 24 ohm/pF ESR scaling
                assert!((c - 50e-12).abs() < 1e-24);
                assert!((r - 0.48).abs() < 1e-12);
            }
            ref k => panic!("expected decap branch, got {k:?}"),
        }
    }

    #[test]
    fn apply_decaps_level_caps_at_site_max() {
        let fp = Floorplan::rocket64();
        let p = params();
        let mut n = Netlist::assemble_hierarchy(&fp, &p).unwrap();
        let mut layout = DecapLayout::empty(&fp);
        layout.set_level(fp.interposer_sites()[0], 10);
        n.apply_decaps(&layout, &fp, &p).unwrap();
        match n.branches().last().unwrap().kind {
            BranchKind::SeriesRc { r, c } => {
                assert!((c - 2000e-12).abs() < 1e-22);
                assert_eq!(r, 0.0); // MIM is ideal in this preset
            }
            ref k => panic!("expected decap branch, got {k:?}"),
        }
    }

    #[test]
    fn apply_decaps_rejects_occupied_cell() {
        let fp = Floorplan::rocket64();
        let p = params();
        let mut n = Netlist::assemble_hierarchy(&fp, &p).unwrap();
        let mut layout = DecapLayout::empty(&fp);
        layout.mos[0].set(1, 1, 3); // cpu0 logic cell
        assert!(matches!(
            n.apply_decaps(&layout, &fp, &p),
            Err(Error::LayoutViolation(_))
        ));
    }

    #[test]
    fn disjoint_decap_application_commutes() {
        let fp = Floorplan::rocket64();
        let p = params();
        let sites = fp.freq_sites();
        let mut a = DecapLayout::empty(&fp);
        a.set_level(sites[0], 4);
        a.set_level(sites[60], 9);
        let mut b = DecapLayout::empty(&fp);
        b.set_level(sites[10], 2);
        let mut combined = a.clone();
        combined.set_level(sites[10], 2);

        let mut two_step = Netlist::assemble_hierarchy(&fp, &p).unwrap();
        two_step.apply_decaps(&a, &fp, &p).unwrap();
        two_step.apply_decaps(&b, &fp, &p).unwrap();
        let mut one_step = Netlist::assemble_hierarchy(&fp, &p).unwrap();
        one_step.apply_decaps(&combined, &fp, &p).unwrap();

        let key = |b: &Branch| format!("{:?}", b);
        let mut x: Vec<_> = two_step.branches().iter().map(key).collect();
        let mut y: Vec<_> = one_step.branches().iter().map(key).collect();
        x.sort();
        y.sort();
        assert_eq!(x, y);
    }

    proptest! {
        #[test]
        fn grid_link_count_closed_form(rows in 1usize..6, cols in 1usize..6) {
            let n = Netlist::unit_cell_grid(rows, cols, UnitCell::Interposer, &params()).unwrap();
            let links = count_kind(&n, |k| matches!(k, BranchKind::RlLink { .. }));
            prop_assert_eq!(links, 2 * rows * cols - rows - cols);
            prop_assert_eq!(n.node_count(), rows * cols + 1);
            let shunts = count_kind(&n, |k| matches!(k, BranchKind::LossyCap { .. }));
            prop_assert_eq!(shunts, rows * cols);
        }
    }
}
