//! Modified nodal analysis: unknown ordering, sparsity pattern, and
//! value stamping for AC, DC, and transient-companion systems.
//!
//! Unknown vector layout: node voltages for nodes 1..N-1 (ground is
//! eliminated), then one auxiliary current per inductive link or
//! voltage source, in branch order. Branch currents flow a -> b; an
//! auxiliary row for branch k reads v_a - v_b - z_k * i_k = e_k.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::netlist::{Branch, BranchKind, Netlist, NodeId, GROUND};

/// Stamp target slots (indices into the CSC value array) for one branch.
/// `None` marks a position eliminated with the ground node.
#[derive(Debug, Clone, Copy)]
enum Stamp {
    /// Two-terminal admittance: (a,a), (a,b), (b,a), (b,b).
    Shunt {
        aa: Option<usize>,
        ab: Option<usize>,
        ba: Option<usize>,
        bb: Option<usize>,
    },
    /// Branch with auxiliary current x: KCL entries (a,x), (b,x),
    /// constitutive row entries (x,a), (x,b), (x,x).
    Aux {
        ax: Option<usize>,
        bx: Option<usize>,
        xa: Option<usize>,
        xb: Option<usize>,
        xx: usize,
        aux: usize,
    },
}

/// Assembled sparsity pattern plus per-branch stamp slots.
#[derive(Debug, Clone)]
pub struct MnaSystem {
    node_count: usize,
    dim: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    stamps: Vec<Stamp>,
    branches: Vec<Branch>,
    diag_slot_of_node: Vec<Option<usize>>,
}

/// Complex admittance of a two-terminal element at frequency `f` [Hz].
pub(crate) fn ac_admittance(kind: &BranchKind, f: f64) -> Complex64 {
    let w = 2.0 * std::f64::consts::PI * f;
    match *kind {
        BranchKind::Res(r) => Complex64::new(1.0 / r, 0.0),
        BranchKind::Cap(c) => Complex64::new(0.0, w * c),
        BranchKind::LossyCap { c, tan_delta } => Complex64::new(w * c * tan_delta, w * c),
        BranchKind::SeriesRc { r, c } => {
            // y = jwC / (1 + jwRC)
            let jwc = Complex64::new(0.0, w * c);
            jwc / (Complex64::new(1.0, 0.0) + jwc * r)
        }
        BranchKind::RlLink { .. } | BranchKind::VSrc { .. } => {
            unreachable!("aux branches have no shunt admittance")
        }
    }
}

impl MnaSystem {
    pub fn new(netlist: &Netlist) -> Result<Self> {
        let node_count = netlist.node_count();
        if node_count <= 1 || netlist.branches().is_empty() {
            return Err(Error::InvalidInput(
                "empty netlist: nothing to assemble".into(),
            ));
        }
        // Every node must reach ground through some branch, otherwise the
        // system is singular; report the first offender by label.
        let mut adj: Vec<Vec<NodeId>> = vec![Vec::new(); node_count];
        for b in netlist.branches() {
            adj[b.a].push(b.b);
            adj[b.b].push(b.a);
        }
        let mut seen = vec![false; node_count];
        let mut queue = vec![GROUND];
        seen[GROUND] = true;
        while let Some(n) = queue.pop() {
            for &m in &adj[n] {
                if !seen[m] {
                    seen[m] = true;
                    queue.push(m);
                }
            }
        }
        if let Some(first) = seen.iter().position(|&s| !s) {
            return Err(Error::SingularSystem(format!(
                "node '{}' is not connected to ground",
                netlist.label(first)
            )));
        }

        let branches: Vec<Branch> = netlist.branches().to_vec();
        let mut aux_of_branch = vec![None; branches.len()];
        let mut n_aux = 0;
        for (i, b) in branches.iter().enumerate() {
            if b.kind.has_aux() {
                aux_of_branch[i] = Some(n_aux);
                n_aux += 1;
            }
        }
        let dim = node_count - 1 + n_aux;
        let var_of = |n: NodeId| -> Option<usize> { (n != GROUND).then(|| n - 1) };
        let aux_var = |k: usize| node_count - 1 + k;

        // Collect pattern entries as (col, row).
        let mut entries: Vec<(usize, usize)> = Vec::new();
        for (i, b) in branches.iter().enumerate() {
            let (va, vb) = (var_of(b.a), var_of(b.b));
            match aux_of_branch[i] {
                None => {
                    if let Some(a) = va {
                        entries.push((a, a));
                    }
                    if let Some(bb) = vb {
                        entries.push((bb, bb));
                    }
                    if let (Some(a), Some(bb)) = (va, vb) {
                        entries.push((bb, a));
                        entries.push((a, bb));
                    }
                }
                Some(k) => {
                    let x = aux_var(k);
                    if let Some(a) = va {
                        entries.push((x, a));
                        entries.push((a, x));
                    }
                    if let Some(bb) = vb {
                        entries.push((x, bb));
                        entries.push((bb, x));
                    }
                    entries.push((x, x));
                }
            }
        }
        entries.sort_unstable();
        entries.dedup();

        let mut col_ptr = vec![0usize; dim + 1];
        for &(c, _) in &entries {
            col_ptr[c + 1] += 1;
        }
        for i in 0..dim {
            col_ptr[i + 1] += col_ptr[i];
        }
        let row_idx: Vec<usize> = entries.iter().map(|&(_, r)| r).collect();

        let slot = |col: usize, row: usize| -> usize {
            let lo = col_ptr[col];
            let hi = col_ptr[col + 1];
            lo + row_idx[lo..hi]
                .binary_search(&row)
                .expect("pattern entry exists")
        };

        let mut stamps = Vec::with_capacity(branches.len());
        for (i, b) in branches.iter().enumerate() {
            let (va, vb) = (var_of(b.a), var_of(b.b));
            let s = match aux_of_branch[i] {
                None => Stamp::Shunt {
                    aa: va.map(|a| slot(a, a)),
                    bb: vb.map(|bb| slot(bb, bb)),
                    ab: match (va, vb) {
                        (Some(a), Some(bb)) => Some(slot(bb, a)),
                        _ => None,
                    },
                    ba: match (va, vb) {
                        (Some(a), Some(bb)) => Some(slot(a, bb)),
                        _ => None,
                    },
                },
                Some(k) => {
                    let x = aux_var(k);
                    Stamp::Aux {
                        ax: va.map(|a| slot(x, a)),
                        bx: vb.map(|bb| slot(x, bb)),
                        xa: va.map(|a| slot(a, x)),
                        xb: vb.map(|bb| slot(bb, x)),
                        xx: slot(x, x),
                        aux: x,
                    }
                }
            };
            stamps.push(s);
        }

        let diag_slot_of_node = (0..node_count)
            .map(|n| {
                var_of(n).and_then(|v| {
                    let lo = col_ptr[v];
                    let hi = col_ptr[v + 1];
                    row_idx[lo..hi].binary_search(&v).ok().map(|p| lo + p)
                })
            })
            .collect();

        Ok(MnaSystem {
            node_count,
            dim,
            col_ptr,
            row_idx,
            stamps,
            branches,
            diag_slot_of_node,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    /// Unknown index of a non-ground node's voltage.
    pub fn var_of_node(&self, node: NodeId) -> usize {
        debug_assert!(node != GROUND && node < self.node_count);
        node - 1
    }

    /// Unknown index of a branch's auxiliary current, if it has one.
    pub fn aux_var_of_branch(&self, branch: usize) -> Option<usize> {
        match self.stamps[branch] {
            Stamp::Aux { aux, .. } => Some(aux),
            _ => None,
        }
    }

    /// Value-array slot of the (node, node) diagonal entry, if present.
    /// Decap restamping during optimization adds admittance here.
    pub fn diag_slot(&self, node: NodeId) -> Option<usize> {
        self.diag_slot_of_node[node]
    }

    fn add_shunt<T>(s: &Stamp, y: T, vals: &mut [T])
    where
        T: Copy + std::ops::AddAssign + std::ops::Neg<Output = T>,
    {
        let Stamp::Shunt { aa, ab, ba, bb } = *s else {
            unreachable!("shunt stamp expected");
        };
        if let Some(i) = aa {
            vals[i] += y;
        }
        if let Some(i) = bb {
            vals[i] += y;
        }
        if let Some(i) = ab {
            vals[i] += -y;
        }
        if let Some(i) = ba {
            vals[i] += -y;
        }
    }

    fn add_aux<T>(s: &Stamp, z: T, one: T, vals: &mut [T])
    where
        T: Copy + std::ops::AddAssign + std::ops::Neg<Output = T>,
    {
        let Stamp::Aux { ax, bx, xa, xb, xx, .. } = *s else {
            unreachable!("aux stamp expected");
        };
        // KCL: +i leaves a, enters b.
        if let Some(i) = ax {
            vals[i] += one;
        }
        if let Some(i) = bx {
            vals[i] += -one;
        }
        // Constitutive: v_a - v_b - z*i = e.
        if let Some(i) = xa {
            vals[i] += one;
        }
        if let Some(i) = xb {
            vals[i] += -one;
        }
        vals[xx] += -z;
    }

    /// Complex values at frequency `f` [Hz]. Voltage sources are shorted
    /// (small-signal analysis rides on the DC operating point).
    pub fn values_ac(&self, f: f64) -> Vec<Complex64> {
        let mut vals = vec![Complex64::new(0.0, 0.0); self.nnz()];
        self.stamp_ac_into(f, &mut vals);
        vals
    }

    pub fn stamp_ac_into(&self, f: f64, vals: &mut [Complex64]) {
        let w = 2.0 * std::f64::consts::PI * f;
        vals.fill(Complex64::new(0.0, 0.0));
        let one = Complex64::new(1.0, 0.0);
        for (b, s) in self.branches.iter().zip(&self.stamps) {
            match b.kind {
                BranchKind::RlLink { r, l } => {
                    Self::add_aux(s, Complex64::new(r, w * l), one, vals);
                }
                BranchKind::VSrc { .. } => {
                    Self::add_aux(s, Complex64::new(0.0, 0.0), one, vals);
                }
                ref k => Self::add_shunt(s, ac_admittance(k, f), vals),
            }
        }
    }

    /// Real conductance values for the DC operating point. Capacitors are
    /// open; dielectric loss contributes a fixed conductance evaluated at
    /// `loss_eval_hz` (pass 0 for ideal capacitors).
    pub fn values_dc(&self, loss_eval_hz: f64) -> Vec<f64> {
        let wl = 2.0 * std::f64::consts::PI * loss_eval_hz;
        let mut vals = vec![0.0; self.nnz()];
        for (b, s) in self.branches.iter().zip(&self.stamps) {
            match b.kind {
                BranchKind::Res(r) => Self::add_shunt(s, 1.0 / r, vals.as_mut_slice()),
                BranchKind::Cap(_) | BranchKind::SeriesRc { .. } => {}
                BranchKind::LossyCap { c, tan_delta } => {
                    if wl > 0.0 {
                        Self::add_shunt(s, wl * c * tan_delta, vals.as_mut_slice());
                    }
                }
                BranchKind::RlLink { r, .. } => Self::add_aux(s, r, 1.0, vals.as_mut_slice()),
                BranchKind::VSrc { .. } => Self::add_aux(s, 0.0, 1.0, vals.as_mut_slice()),
            }
        }
        vals
    }

    /// Real trapezoidal-companion values for timestep `dt` [s]. The matrix
    /// is constant across steps; history terms go to the RHS. Dielectric
    /// loss is frozen at `loss_eval_hz`.
    pub fn values_transient(&self, dt: f64, loss_eval_hz: f64) -> Vec<f64> {
        let wl = 2.0 * std::f64::consts::PI * loss_eval_hz;
        let mut vals = vec![0.0; self.nnz()];
        for (b, s) in self.branches.iter().zip(&self.stamps) {
            match b.kind {
                BranchKind::Res(r) => Self::add_shunt(s, 1.0 / r, vals.as_mut_slice()),
                // series R-C companion; r = 0 covers the ideal capacitor
                BranchKind::Cap(c) => {
                    Self::add_shunt(s, companion_g(0.0, c, dt), vals.as_mut_slice())
                }
                BranchKind::SeriesRc { r, c } => {
                    Self::add_shunt(s, companion_g(r, c, dt), vals.as_mut_slice())
                }
                BranchKind::LossyCap { c, tan_delta } => {
                    let mut g = companion_g(0.0, c, dt);
                    if wl > 0.0 {
                        g += wl * c * tan_delta;
                    }
                    Self::add_shunt(s, g, vals.as_mut_slice());
                }
                BranchKind::RlLink { r, l } => {
                    Self::add_aux(s, r + 2.0 * l / dt, 1.0, vals.as_mut_slice())
                }
                BranchKind::VSrc { .. } => Self::add_aux(s, 0.0, 1.0, vals.as_mut_slice()),
            }
        }
        vals
    }
}

/// Trapezoidal equivalent conductance of a series R-C branch.
pub(crate) fn companion_g(r: f64, c: f64, dt: f64) -> f64 {
    1.0 / (r + dt / (2.0 * c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::Netlist;

    fn dense_from(sys: &MnaSystem, vals: &[Complex64]) -> Vec<Vec<Complex64>> {
        let n = sys.dim();
        let mut m = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for col in 0..n {
            for k in sys.col_ptr[col]..sys.col_ptr[col + 1] {
                m[sys.row_idx[k]][col] = vals[k];
            }
        }
        m
    }

    #[test]
    fn resistor_divider_pattern_and_values() {
        // gnd -R1- n1 -R2- n2, R to ground at n2
        let mut n = Netlist::new();
        let n1 = n.add_node("n1");
        let n2 = n.add_node("n2");
        n.add_branch(BranchKind::Res(2.0), n1, GROUND);
        n.add_branch(BranchKind::Res(4.0), n1, n2);
        n.add_branch(BranchKind::Res(8.0), n2, GROUND);
        let sys = MnaSystem::new(&n).unwrap();
        assert_eq!(sys.dim(), 2);
        let m = dense_from(&sys, &sys.values_ac(0.0));
        // G11 = 1/2 + 1/4, G12 = G21 = -1/4, G22 = 1/4 + 1/8
        assert!((m[0][0].re - 0.75).abs() < 1e-15);
        assert!((m[0][1].re + 0.25).abs() < 1e-15);
        assert!((m[1][0].re + 0.25).abs() < 1e-15);
        assert!((m[1][1].re - 0.375).abs() < 1e-15);
    }

    #[test]
    fn inductive_link_adds_aux_row() {
        let mut n = Netlist::new();
        let n1 = n.add_node("n1");
        let n2 = n.add_node("n2");
        n.add_branch(BranchKind::RlLink { r: 1.0, l: 1e-9 }, n1, n2);
        n.add_branch(BranchKind::Res(1.0), n2, GROUND);
        n.add_branch(BranchKind::Res(1.0), n1, GROUND);
        let sys = MnaSystem::new(&n).unwrap();
        assert_eq!(sys.dim(), 3);
        let f = 1e9;
        let m = dense_from(&sys, &sys.values_ac(f));
        let w = 2.0 * std::f64::consts::PI * f;
        // aux row: v1 - v2 - (r + jwl) i = 0
        assert!((m[2][0].re - 1.0).abs() < 1e-15);
        assert!((m[2][1].re + 1.0).abs() < 1e-15);
        assert!((m[2][2].re + 1.0).abs() < 1e-15);
        assert!((m[2][2].im + w * 1e-9).abs() < 1e-6);
        // KCL columns carry the aux current
        assert!((m[0][2].re - 1.0).abs() < 1e-15);
        assert!((m[1][2].re + 1.0).abs() < 1e-15);
    }

    #[test]
    fn lossy_cap_conductance_scales_with_frequency() {
        let mut n = Netlist::new();
        let n1 = n.add_node("n1");
        n.add_branch(
            BranchKind::LossyCap {
                c: 1e-12,
                tan_delta: 0.02,
            },
            n1,
            GROUND,
        );
        let sys = MnaSystem::new(&n).unwrap();
        let v1 = sys.values_ac(1e9);
        let v2 = sys.values_ac(2e9);
        assert!((v2[0].re / v1[0].re - 2.0).abs() < 1e-12);
        assert!((v2[0].im / v1[0].im - 2.0).abs() < 1e-12);
        assert!((v1[0].re / v1[0].im - 0.02).abs() < 1e-12);
    }

    #[test]
    fn empty_netlist_rejected() {
        let n = Netlist::new();
        assert!(matches!(MnaSystem::new(&n), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn floating_node_named_in_error() {
        let mut n = Netlist::new();
        let n1 = n.add_node("n1");
        n.add_node("orphan");
        n.add_branch(BranchKind::Res(1.0), n1, GROUND);
        match MnaSystem::new(&n) {
            Err(Error::SingularSystem(msg)) => assert!(msg.contains("orphan"), "{msg}"),
            other => panic!("expected singular system, got {other:?}"),
        }
    }

    #[test]
    fn series_rc_admittance_limits() {
        // at low f, y -> jwC; at high f, y -> 1/r
        let kind = BranchKind::SeriesRc { r: 10.0, c: 1e-9 };
        let lo = ac_admittance(&kind, 1.0);
        let w = 2.0 * std::f64::consts::PI;
        assert!((lo.im - w * 1e-9).abs() / (w * 1e-9) < 1e-3);
        let hi = ac_admittance(&kind, 1e12);
        assert!((hi.re - 0.1).abs() / 0.1 < 1e-3);
    }

    #[test]
    fn transient_companion_matches_hand_values() {
        let dt = 1e-12;
        // ideal cap: g = 2C/dt
        assert!((companion_g(0.0, 1e-12, dt) - 2.0).abs() < 1e-12);
        // series RC: g = 1/(r + dt/2C)
        let g = companion_g(3.0, 1e-12, dt);
        assert!((g - 1.0 / 3.5).abs() < 1e-12);
    }
}
