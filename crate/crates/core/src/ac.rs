//! Frequency-domain analysis: port impedance over a log sweep.
//!
//! Port impedance is measured by injecting a unit AC current into the
//! port node (supply sources shorted) and reading the node voltage.

use num_complex::Complex64;

use crate::decap::DecapLayout;
use crate::error::{Error, Result};
use crate::floorplan::{Floorplan, Layer, UdcSite};
use crate::mna::{ac_admittance, MnaSystem};
use crate::netlist::{BranchKind, Netlist};
use crate::par;
use crate::params::PdnParams;
use crate::solve::SparsePattern;

/// Impedance magnitude results over a frequency sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AcSolution {
    /// Sweep frequencies [Hz], ascending.
    pub freqs: Vec<f64>,
    pub port_labels: Vec<String>,
    /// `z[i][p]`: impedance of port `p` at `freqs[i]` [ohm].
    pub z: Vec<Vec<Complex64>>,
}

impl AcSolution {
    /// |Z| of port `p` at sweep point `i`.
    pub fn mag(&self, i: usize, p: usize) -> f64 {
        self.z[i][p].norm()
    }

    /// Worst |Z| across ports at sweep point `i`.
    pub fn worst_mag(&self, i: usize) -> f64 {
        (0..self.port_labels.len())
            .map(|p| self.mag(i, p))
            .fold(0.0, f64::max)
    }

    /// CSV with one row per frequency; optional target-mask column.
    pub fn to_csv(&self, target: Option<&dyn Fn(f64) -> f64>) -> String {
        use std::fmt::Write;
        let mut s = String::from("freq_hz");
        for l in &self.port_labels {
            let _ = write!(s, ",z_mag_{l}");
        }
        if target.is_some() {
            s.push_str(",z_target");
        }
        s.push('\n');
        for (i, &f) in self.freqs.iter().enumerate() {
            let _ = write!(s, "{f}");
            for p in 0..self.port_labels.len() {
                let _ = write!(s, ",{}", self.mag(i, p));
            }
            if let Some(t) = target {
                let _ = write!(s, ",{}", t(f));
            }
            s.push('\n');
        }
        s
    }
}

/// Logarithmic sweep with `points_per_decade` points starting at
/// `f_start`; `f_stop` is appended exactly if not already hit.
pub fn log_sweep(f_start: f64, f_stop: f64, points_per_decade: usize) -> Vec<f64> {
    assert!(f_start > 0.0 && f_stop > f_start && points_per_decade > 0);
    let mut freqs = Vec::new();
    let step = 1.0 / points_per_decade as f64;
    let mut k = 0usize;
    loop {
        let f = f_start * 10f64.powf(k as f64 * step);
        if f >= f_stop {
            break;
        }
        freqs.push(f);
        k += 1;
    }
    if *freqs.last().unwrap() < f_stop {
        freqs.push(f_stop);
    }
    freqs
}

/// Default analysis band: 0.1 GHz to 20 GHz, 100 points per decade.
pub fn default_sweep() -> Vec<f64> {
    log_sweep(0.1e9, 20e9, 100)
}

struct AcProblem {
    sys: MnaSystem,
    pattern: SparsePattern,
    port_vars: Vec<usize>,
    port_labels: Vec<String>,
}

impl AcProblem {
    fn new(netlist: &Netlist) -> Result<Self> {
        if netlist.ports().is_empty() {
            return Err(Error::InvalidInput(
                "netlist has no ports to measure".into(),
            ));
        }
        let sys = MnaSystem::new(netlist)?;
        let pattern = SparsePattern::new(sys.dim(), sys.col_ptr().to_vec(), sys.row_idx().to_vec())?;
        let port_vars = netlist
            .ports()
            .iter()
            .map(|p| sys.var_of_node(p.node))
            .collect();
        let port_labels = netlist.ports().iter().map(|p| p.label.clone()).collect();
        Ok(AcProblem {
            sys,
            pattern,
            port_vars,
            port_labels,
        })
    }

    /// Solves all ports at one frequency given pre-stamped values.
    fn solve_values(&self, vals: &[Complex64]) -> Result<Vec<Complex64>> {
        let k = self.port_vars.len();
        let dim = self.sys.dim();
        let factored = self.pattern.factor(vals)?;
        let mut rhs = vec![Complex64::new(0.0, 0.0); dim * k];
        for (j, &v) in self.port_vars.iter().enumerate() {
            rhs[j * dim + v] = Complex64::new(1.0, 0.0);
        }
        factored.solve_in_place(&mut rhs, k)?;
        Ok((0..k).map(|j| rhs[j * dim + self.port_vars[j]]).collect())
    }

    fn solve_at(&self, f: f64) -> Result<Vec<Complex64>> {
        self.solve_values(&self.sys.values_ac(f))
    }
}

fn collect_rows(
    freqs: &[f64],
    rows: Vec<Result<Vec<Complex64>>>,
    labels: Vec<String>,
) -> Result<AcSolution> {
    let mut z = Vec::with_capacity(rows.len());
    for r in rows {
        z.push(r?);
    }
    Ok(AcSolution {
        freqs: freqs.to_vec(),
        port_labels: labels,
        z,
    })
}

/// Port impedances over a sweep; one factorization per frequency,
/// frequencies processed in parallel when the `parallel` feature is on.
pub fn ac_port_impedance(netlist: &Netlist, freqs: &[f64]) -> Result<AcSolution> {
    let p = AcProblem::new(netlist)?;
    let rows = par::map(freqs, |&f| p.solve_at(f));
    collect_rows(freqs, rows, p.port_labels)
}

/// Sequential variant of [`ac_port_impedance`].
pub fn ac_port_impedance_serial(netlist: &Netlist, freqs: &[f64]) -> Result<AcSolution> {
    let p = AcProblem::new(netlist)?;
    let rows = par::map_serial(freqs, |&f| p.solve_at(f));
    collect_rows(freqs, rows, p.port_labels)
}

/// Full port-to-port transfer impedance matrix at one frequency:
/// entry (i, j) is the voltage at port i per unit current into port j.
pub fn port_impedance_matrix(netlist: &Netlist, f: f64) -> Result<Vec<Vec<Complex64>>> {
    let p = AcProblem::new(netlist)?;
    let k = p.port_vars.len();
    let dim = p.sys.dim();
    let factored = p.pattern.factor(&p.sys.values_ac(f))?;
    let mut rhs = vec![Complex64::new(0.0, 0.0); dim * k];
    for (j, &v) in p.port_vars.iter().enumerate() {
        rhs[j * dim + v] = Complex64::new(1.0, 0.0);
    }
    factored.solve_in_place(&mut rhs, k)?;
    Ok((0..k)
        .map(|i| (0..k).map(|j| rhs[j * dim + p.port_vars[i]]).collect())
        .collect())
}

#[derive(Debug, Clone, Copy)]
enum SiteTech {
    Mos,
    Mim,
}

/// Reusable impedance evaluator for decap optimization.
///
/// Decap branches only touch node diagonals that the base grid already
/// populates (every cell has a shunt capacitor), so the sparsity pattern
/// and its symbolic factorization are computed once; each layout
/// evaluation restamps cached per-frequency base values plus one
/// admittance per placed site and refactorizes numerically.
pub struct AcEngine {
    problem: AcProblem,
    fp: Floorplan,
    params: PdnParams,
    freqs: Vec<f64>,
    base_vals: Vec<Vec<Complex64>>,
    sites: Vec<UdcSite>,
    site_slots: Vec<usize>,
    site_tech: Vec<SiteTech>,
}

impl AcEngine {
    /// `base` must be the decap-free hierarchy for `fp`.
    pub fn new(
        base: &Netlist,
        fp: &Floorplan,
        params: &PdnParams,
        freqs: Vec<f64>,
    ) -> Result<Self> {
        let problem = AcProblem::new(base)?;
        let sites = fp.freq_sites();
        let mut site_slots = Vec::with_capacity(sites.len());
        let mut site_tech = Vec::with_capacity(sites.len());
        for &s in &sites {
            let node = base.site_node(s).ok_or_else(|| {
                Error::InvalidInput("base netlist does not cover the floorplan".into())
            })?;
            let slot = problem.sys.diag_slot(node).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "node '{}' has no diagonal entry to restamp",
                    base.label(node)
                ))
            })?;
            site_slots.push(slot);
            site_tech.push(match s.layer {
                Layer::Chip(_) => SiteTech::Mos,
                Layer::Interposer => SiteTech::Mim,
            });
        }
        let base_vals = par::map(&freqs, |&f| problem.sys.values_ac(f));
        Ok(AcEngine {
            problem,
            fp: fp.clone(),
            params: params.clone(),
            freqs,
            base_vals,
            sites,
            site_slots,
            site_tech,
        })
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn port_labels(&self) -> &[String] {
        &self.problem.port_labels
    }

    fn decap_rc(&self, tech: SiteTech, level: u8) -> (f64, f64) {
        match tech {
            SiteTech::Mos => {
                let c = level as f64 * self.params.mos_step;
                (self.params.mos_esr(c), c)
            }
            SiteTech::Mim => (self.params.mim_esr, level as f64 * self.params.mim_step),
        }
    }

    fn placed_sites(&self, layout: &DecapLayout) -> Result<Vec<(usize, u8)>> {
        layout.validate(&self.fp, &self.params)?;
        Ok((0..self.sites.len())
            .filter_map(|i| {
                let lvl = layout.level(self.sites[i]);
                (lvl > 0).then_some((i, lvl))
            })
            .collect())
    }

    fn solve_index(&self, i: usize, placed: &[(usize, u8)]) -> Result<Vec<Complex64>> {
        let f = self.freqs[i];
        let mut vals = self.base_vals[i].clone();
        for &(s, lvl) in placed {
            let (r, c) = self.decap_rc(self.site_tech[s], lvl);
            vals[self.site_slots[s]] += ac_admittance(&BranchKind::SeriesRc { r, c }, f);
        }
        self.problem.solve_values(&vals)
    }

    /// Impedance of the base hierarchy with `layout` applied.
    pub fn evaluate(&self, layout: &DecapLayout) -> Result<AcSolution> {
        let placed = self.placed_sites(layout)?;
        let idx: Vec<usize> = (0..self.freqs.len()).collect();
        let rows = par::map(&idx, |&i| self.solve_index(i, &placed));
        collect_rows(&self.freqs, rows, self.problem.port_labels.clone())
    }

    /// Sequential variant of [`evaluate`](Self::evaluate).
    pub fn evaluate_serial(&self, layout: &DecapLayout) -> Result<AcSolution> {
        let placed = self.placed_sites(layout)?;
        let idx: Vec<usize> = (0..self.freqs.len()).collect();
        let rows = par::map_serial(&idx, |&i| self.solve_index(i, &placed));
        collect_rows(&self.freqs, rows, self.problem.port_labels.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{BranchKind, Netlist, GROUND};

    #[test]
    fn capacitor_impedance_magnitude() {
        // |Z| of 1 nF at f = 1/(2*pi*1e-9) Hz is exactly 1 ohm
        let mut n = Netlist::new();
        let a = n.add_node("a");
        n.add_branch(BranchKind::Cap(1e-9), a, GROUND);
        n.add_port(a, "a");
        let f = 1.0 / (2.0 * std::f64::consts::PI * 1e-9);
        let sol = ac_port_impedance(&n, &[f]).unwrap();
        assert!((sol.mag(0, 0) - 1.0).abs() < 1e-12);
        // phase: pure capacitor -> -90 degrees
        assert!(sol.z[0][0].re.abs() < 1e-12);
        assert!((sol.z[0][0].im + 1.0).abs() < 1e-12);
    }

    #[test]
    fn series_rlc_resonance_is_resistive() {
        // R-L-C from port to ground through internal nodes; at
        // f0 = 1/(2*pi*sqrt(LC)) the reactances cancel and Z = R.
        let (r, l, c) = (1.0, 1e-9, 1e-12);
        let mut n = Netlist::new();
        let p = n.add_node("p");
        let m = n.add_node("m");
        n.add_branch(BranchKind::RlLink { r, l }, p, m);
        n.add_branch(BranchKind::Cap(c), m, GROUND);
        n.add_port(p, "p");
        let f0 = 1.0 / (2.0 * std::f64::consts::PI * (l * c).sqrt());
        let sol = ac_port_impedance(&n, &[f0]).unwrap();
        assert!((sol.z[0][0].re - r).abs() < 1e-9);
        assert!(sol.z[0][0].im.abs() < 1e-9);
    }

    #[test]
    fn shorted_source_grounds_the_port() {
        // port -R- supply with VSrc to ground: AC shorts the source,
        // so Z = R exactly
        let mut n = Netlist::new();
        let p = n.add_node("p");
        let s = n.add_node("s");
        n.add_branch(BranchKind::Res(3.0), p, s);
        n.add_branch(BranchKind::VSrc { volts: 1.2 }, s, GROUND);
        n.add_port(p, "p");
        let sol = ac_port_impedance(&n, &[1e9]).unwrap();
        assert!((sol.z[0][0].re - 3.0).abs() < 1e-12);
        assert!(sol.z[0][0].im.abs() < 1e-12);
    }

    #[test]
    fn sweep_is_sorted_and_hits_endpoint() {
        let f = default_sweep();
        assert!(f.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*f.last().unwrap(), 20e9);
        assert_eq!(f[0], 0.1e9);
        // ~100/decade over 2.3 decades
        assert!(f.len() >= 230 && f.len() <= 232, "{}", f.len());
    }

    #[test]
    fn serial_and_parallel_sweeps_agree() {
        let fp = Floorplan::rocket64();
        let p = PdnParams::rocket64_55nm();
        let n = Netlist::assemble_hierarchy(&fp, &p).unwrap();
        let freqs = log_sweep(1e9, 10e9, 3);
        let a = ac_port_impedance(&n, &freqs).unwrap();
        let b = ac_port_impedance_serial(&n, &freqs).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn engine_matches_fresh_assembly() {
        let fp = Floorplan::rocket64();
        let p = PdnParams::rocket64_55nm();
        let base = Netlist::assemble_hierarchy(&fp, &p).unwrap();
        let freqs = log_sweep(0.5e9, 15e9, 4);
        let engine = AcEngine::new(&base, &fp, &p, freqs.clone()).unwrap();

        let mut layout = DecapLayout::empty(&fp);
        let sites = fp.freq_sites();
        layout.set_level(sites[0], 3);
        layout.set_level(sites[20], 10);
        layout.set_level(sites[80], 7);
        let fast = engine.evaluate(&layout).unwrap();

        let mut full = base.clone();
        full.apply_decaps(&layout, &fp, &p).unwrap();
        let slow = ac_port_impedance(&full, &freqs).unwrap();

        for i in 0..freqs.len() {
            for pt in 0..fast.port_labels.len() {
                let d = (fast.z[i][pt] - slow.z[i][pt]).norm();
                assert!(d < 1e-12 * slow.z[i][pt].norm().max(1e-6), "f {i} port {pt}: {d}");
            }
        }
    }

    #[test]
    fn reciprocity_of_transfer_impedance() {
        let fp = Floorplan::rocket64();
        let p = PdnParams::rocket64_55nm();
        let n = Netlist::assemble_hierarchy(&fp, &p).unwrap();
        let z = port_impedance_matrix(&n, 3.3e9).unwrap();
        for i in 0..z.len() {
            for j in 0..i {
                let d = (z[i][j] - z[j][i]).norm();
                assert!(d < 1e-12 * z[i][j].norm(), "({i},{j}): {d}");
            }
        }
    }

    #[test]
    fn passivity_at_ports() {
        let fp = Floorplan::rocket64();
        let p = PdnParams::rocket64_55nm();
        let n = Netlist::assemble_hierarchy(&fp, &p).unwrap();
        let sol = ac_port_impedance(&n, &log_sweep(0.1e9, 20e9, 10)).unwrap();
        for row in &sol.z {
            for z in row {
                assert!(z.re >= -1e-12, "non-passive port impedance {z}");
            }
        }
    }
}
