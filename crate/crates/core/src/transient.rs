//! Time-domain analysis: trapezoidal integration of the power grid
//! under piecewise-linear load currents.
//!
//! The run starts from the DC operating point with all load sources
//! off; with a fixed timestep the companion matrix is factorized once
//! and every step is a single sparse triangular solve.

use crate::error::{Error, Result};
use crate::mna::{companion_g, MnaSystem};
use crate::netlist::{BranchKind, Netlist, NodeId, GROUND};
use crate::pwl::PwlSource;
use crate::solve::SparsePattern;

/// Transient run configuration.
#[derive(Debug, Clone, Copy)]
pub struct TransientOpts {
    /// Fixed timestep [s].
    pub dt: f64,
    /// Analysis window [s]; steps = round(t_end / dt).
    pub t_end: f64,
    /// Frequency at which dielectric loss conductance is frozen [Hz];
    /// 0 disables loss.
    pub loss_eval_hz: f64,
}

/// Node-voltage traces on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientSolution {
    pub dt: f64,
    /// Sample times [s], `times[k] = k * dt`, including t = 0.
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    /// `traces[m][k]`: voltage of monitored node `m` at `times[k]` [V].
    pub traces: Vec<Vec<f64>>,
}

impl TransientSolution {
    pub fn trace(&self, label: &str) -> Option<&[f64]> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.traces[i].as_slice())
    }

    /// CSV with one row per sample time.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let mut s = String::from("time_s");
        for l in &self.labels {
            let _ = write!(s, ",v_{l}");
        }
        s.push('\n');
        for (k, &t) in self.times.iter().enumerate() {
            let _ = write!(s, "{t}");
            for tr in &self.traces {
                let _ = write!(s, ",{}", tr[k]);
            }
            s.push('\n');
        }
        s
    }
}

/// Per-branch integration state.
enum BranchState {
    /// Series R-C (ideal C has r = 0): internal capacitor voltage and
    /// branch current.
    RcShunt { r: f64, c: f64, v_c: f64, i: f64 },
    /// Inductive link: branch voltage and current at the previous step.
    Rl { r: f64, l: f64, v_ab: f64, i: f64 },
    VSrc { volts: f64 },
    Static,
}

/// Trapezoidal transient solve. `sources` are load currents drawn from
/// a node to ground; `monitored` selects which node voltages to record.
pub fn transient_solve(
    netlist: &Netlist,
    sources: &[(NodeId, PwlSource)],
    monitored: &[NodeId],
    opts: &TransientOpts,
) -> Result<TransientSolution> {
    if !(opts.dt > 0.0) || !opts.dt.is_finite() {
        return Err(Error::InvalidInput(format!(
            "timestep must be positive, got {}",
            opts.dt
        )));
    }
    if !(opts.t_end > 0.0) || !opts.t_end.is_finite() {
        return Err(Error::InvalidInput(format!(
            "analysis window must be positive, got {}",
            opts.t_end
        )));
    }
    let n_steps = (opts.t_end / opts.dt).round() as usize;
    if n_steps == 0 {
        return Err(Error::InvalidInput(
            "analysis window shorter than one timestep".into(),
        ));
    }
    for &(node, _) in sources {
        if node == GROUND || node >= netlist.node_count() {
            return Err(Error::InvalidInput(format!(
                "load source attached to invalid node {node}"
            )));
        }
    }

    let sys = MnaSystem::new(netlist)?;
    let dim = sys.dim();
    let pattern = SparsePattern::new(dim, sys.col_ptr().to_vec(), sys.row_idx().to_vec())?;

    // DC operating point: capacitors open, loads off, supplies active.
    let dc = pattern.factor(&sys.values_dc(opts.loss_eval_hz))?;
    let mut x = vec![0.0f64; dim];
    for (bi, b) in netlist.branches().iter().enumerate() {
        if let BranchKind::VSrc { volts } = b.kind {
            x[sys.aux_var_of_branch(bi).expect("source has aux")] = volts;
        }
    }
    dc.solve_in_place(&mut x, 1)?;

    let volt_at = |x: &[f64], n: NodeId| -> f64 {
        if n == GROUND {
            0.0
        } else {
            x[sys.var_of_node(n)]
        }
    };

    // Initialize branch states from the operating point.
    let dt = opts.dt;
    let mut states: Vec<BranchState> = Vec::with_capacity(netlist.branches().len());
    for (bi, b) in netlist.branches().iter().enumerate() {
        let v_ab = volt_at(&x, b.a) - volt_at(&x, b.b);
        let st = match b.kind {
            BranchKind::Cap(c) => BranchState::RcShunt {
                r: 0.0,
                c,
                v_c: v_ab,
                i: 0.0,
            },
            BranchKind::LossyCap { c, .. } => BranchState::RcShunt {
                r: 0.0,
                c,
                v_c: v_ab,
                i: 0.0,
            },
            BranchKind::SeriesRc { r, c } => BranchState::RcShunt {
                r,
                c,
                v_c: v_ab,
                i: 0.0,
            },
            BranchKind::RlLink { r, l } => BranchState::Rl {
                r,
                l,
                v_ab,
                i: x[sys.aux_var_of_branch(bi).expect("link has aux")],
            },
            BranchKind::VSrc { volts } => BranchState::VSrc { volts },
            BranchKind::Res(_) => BranchState::Static,
        };
        states.push(st);
    }

    let factored = pattern.factor(&sys.values_transient(dt, opts.loss_eval_hz))?;

    let labels: Vec<String> = monitored.iter().map(|&n| netlist.label(n).into()).collect();
    let mut traces: Vec<Vec<f64>> = monitored
        .iter()
        .map(|&n| {
            let mut t = Vec::with_capacity(n_steps + 1);
            t.push(volt_at(&x, n));
            t
        })
        .collect();

    let branches = netlist.branches();
    let mut rhs = vec![0.0f64; dim];
    for step in 1..=n_steps {
        let t = step as f64 * dt;
        rhs.fill(0.0);
        for (bi, st) in states.iter().enumerate() {
            let b = &branches[bi];
            match *st {
                BranchState::RcShunt { r, c, v_c, i } => {
                    let g = companion_g(r, c, dt);
                    let i_h = g * (v_c + dt / (2.0 * c) * i);
                    if b.a != GROUND {
                        rhs[sys.var_of_node(b.a)] += i_h;
                    }
                    if b.b != GROUND {
                        rhs[sys.var_of_node(b.b)] -= i_h;
                    }
                }
                BranchState::Rl { r, l, v_ab, i } => {
                    let aux = sys.aux_var_of_branch(bi).expect("link has aux");
                    rhs[aux] = -v_ab + (r - 2.0 * l / dt) * i;
                }
                BranchState::VSrc { volts } => {
                    let aux = sys.aux_var_of_branch(bi).expect("source has aux");
                    rhs[aux] = volts;
                }
                BranchState::Static => {}
            }
        }
        for (node, src) in sources {
            rhs[sys.var_of_node(*node)] -= src.eval(t);
        }

        let mut xn = rhs.clone();
        factored
            .solve_in_place(&mut xn, 1)
            .map_err(|_| Error::Divergence { step, time_s: t })?;

        // Advance branch states.
        for (bi, st) in states.iter_mut().enumerate() {
            let b = &branches[bi];
            let v_new = volt_at(&xn, b.a) - volt_at(&xn, b.b);
            match st {
                BranchState::RcShunt { r, c, v_c, i } => {
                    let g = companion_g(*r, *c, dt);
                    let i_h = g * (*v_c + dt / (2.0 * *c) * *i);
                    let i_new = g * v_new - i_h;
                    *v_c += dt / (2.0 * *c) * (i_new + *i);
                    *i = i_new;
                }
                BranchState::Rl { v_ab, i, .. } => {
                    *i = xn[sys.aux_var_of_branch(bi).expect("link has aux")];
                    *v_ab = v_new;
                }
                _ => {}
            }
        }
        if states.iter().any(|s| match s {
            BranchState::RcShunt { v_c, i, .. } => !v_c.is_finite() || !i.is_finite(),
            BranchState::Rl { v_ab, i, .. } => !v_ab.is_finite() || !i.is_finite(),
            _ => false,
        }) {
            return Err(Error::Divergence { step, time_s: t });
        }

        x = xn;
        for (m, &n) in monitored.iter().enumerate() {
            traces[m].push(volt_at(&x, n));
        }
    }

    Ok(TransientSolution {
        dt,
        times: (0..=n_steps).map(|k| k as f64 * dt).collect(),
        labels,
        traces,
    })
}

/// Sequential multi-run helper: solves the same netlist under several
/// source sets (e.g. current-profile batches), parallelized over runs.
pub fn transient_batch(
    netlist: &Netlist,
    source_sets: &[Vec<(NodeId, PwlSource)>],
    monitored: &[NodeId],
    opts: &TransientOpts,
) -> Vec<Result<TransientSolution>> {
    crate::par::map(source_sets, |srcs| {
        transient_solve(netlist, srcs, monitored, opts)
    })
}

/// Sequential variant of [`transient_batch`].
pub fn transient_batch_serial(
    netlist: &Netlist,
    source_sets: &[Vec<(NodeId, PwlSource)>],
    monitored: &[NodeId],
    opts: &TransientOpts,
) -> Vec<Result<TransientSolution>> {
    crate::par::map_serial(source_sets, |srcs| {
        transient_solve(netlist, srcs, monitored, opts)
    })
}
