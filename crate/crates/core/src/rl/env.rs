//! Placement environments: impedance-mask and voltage-violation episodes.
//!
//! Both environments share the step contract: apply a ternary level
//! nudge per site, re-evaluate the design, and report (state, reward,
//! done). Every reward evaluation increments an evaluation counter so
//! optimizer comparisons can run at equal budgets.

use crate::ac::AcEngine;
use crate::currents::{gen_profile, CurrentModelCfg, CurrentProfile};
use crate::decap::{CapacityTotals, DecapLayout};
use crate::error::{Error, Result};
use crate::floorplan::{Floorplan, UdcSite};
use crate::freq::{freq_reward, mask_violation, RewardWeights, TargetSpec};
use crate::netlist::{Netlist, NodeId};
use crate::params::PdnParams;
use crate::pwl::PwlSource;
use crate::rl::net::NetConfig;
use crate::rl::state::{encode_freq, encode_time, StateTensor};
use crate::transient::{transient_batch, TransientOpts};
use crate::vvi::{compute_vvi, time_reward, VviReport, VviSpec};

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: StateTensor,
    pub reward: f64,
    pub done: bool,
}

/// Common interface the training loop drives.
pub trait PlacementEnv {
    fn n_sites(&self) -> usize;
    fn net_config(&self) -> NetConfig;
    fn reset(&mut self) -> Result<StateTensor>;
    fn step(&mut self, action: &[i8]) -> Result<StepOutcome>;
    fn layout(&self) -> &DecapLayout;
    fn capacity(&self) -> CapacityTotals;
    fn evals(&self) -> u64;
    fn episode_cap(&self) -> usize;
}

/// Builds a layout by writing `levels` over `sites` in order.
pub fn layout_from_levels(fp: &Floorplan, sites: &[UdcSite], levels: &[u8]) -> DecapLayout {
    assert_eq!(sites.len(), levels.len());
    let mut layout = DecapLayout::empty(fp);
    for (&site, &lv) in sites.iter().zip(levels) {
        layout.set_level(site, lv);
    }
    layout
}

fn check_action(action: &[i8], n: usize) -> Result<()> {
    if action.len() != n {
        return Err(Error::InvalidInput(format!(
            "action length {} does not match {} sites",
            action.len(),
            n
        )));
    }
    if let Some(a) = action.iter().find(|a| !(-1..=1).contains(*a)) {
        return Err(Error::InvalidInput(format!(
            "action entries must be -1, 0, or +1, got {a}"
        )));
    }
    Ok(())
}

/// Impedance-phase episode: start from an empty layout, nudge all
/// on-chip and interposer sites, succeed when the mask is met.
pub struct FreqEnv {
    fp: Floorplan,
    params: PdnParams,
    target: TargetSpec,
    weights: RewardWeights,
    engine: AcEngine,
    sites: Vec<UdcSite>,
    layout: DecapLayout,
    steps: usize,
    episode_cap: usize,
    evals: u64,
}

impl FreqEnv {
    pub fn new(
        fp: Floorplan,
        params: PdnParams,
        target: TargetSpec,
        weights: RewardWeights,
        freqs: Vec<f64>,
        episode_cap: usize,
    ) -> Result<Self> {
        target.validate()?;
        weights.validate()?;
        if episode_cap == 0 {
            return Err(Error::InvalidParameter("episode cap must be positive".into()));
        }
        let base = Netlist::assemble_hierarchy(&fp, &params)?;
        let engine = AcEngine::new(&base, &fp, &params, freqs)?;
        let sites = fp.freq_sites();
        let layout = DecapLayout::empty(&fp);
        Ok(FreqEnv {
            fp,
            params,
            target,
            weights,
            engine,
            sites,
            layout,
            steps: 0,
            episode_cap,
            evals: 0,
        })
    }

    pub fn sites(&self) -> &[UdcSite] {
        &self.sites
    }

    pub fn target(&self) -> &TargetSpec {
        &self.target
    }

    pub fn floorplan(&self) -> &Floorplan {
        &self.fp
    }

    pub fn params(&self) -> &PdnParams {
        &self.params
    }

    /// Mask reward of an arbitrary layout; counts one evaluation. This
    /// is the same scoring path the step function uses, so baseline
    /// optimizers compete at exact budget parity.
    pub fn reward_of(&mut self, layout: &DecapLayout) -> Result<f64> {
        let sol = self.engine.evaluate(layout)?;
        let report = mask_violation(&sol, &self.target);
        let totals = layout.capacity(&self.fp, &self.params);
        self.evals += 1;
        Ok(freq_reward(&report, &totals, &self.weights))
    }
}

impl PlacementEnv for FreqEnv {
    fn n_sites(&self) -> usize {
        self.sites.len()
    }

    fn net_config(&self) -> NetConfig {
        NetConfig::for_freq(&self.fp)
    }

    fn reset(&mut self) -> Result<StateTensor> {
        self.layout = DecapLayout::empty(&self.fp);
        self.steps = 0;
        Ok(encode_freq(&self.fp, &self.layout, self.params.max_level))
    }

    fn step(&mut self, action: &[i8]) -> Result<StepOutcome> {
        check_action(action, self.sites.len())?;
        for (&site, &a) in self.sites.iter().zip(action) {
            self.layout.nudge(site, a, self.params.max_level);
        }
        let layout = self.layout.clone();
        let reward = self.reward_of(&layout)?;
        self.steps += 1;
        let done = reward > 0.0 || self.steps >= self.episode_cap;
        Ok(StepOutcome {
            state: encode_freq(&self.fp, &self.layout, self.params.max_level),
            reward,
            done,
        })
    }

    fn layout(&self) -> &DecapLayout {
        &self.layout
    }

    fn capacity(&self) -> CapacityTotals {
        self.layout.capacity(&self.fp, &self.params)
    }

    fn evals(&self) -> u64 {
        self.evals
    }

    fn episode_cap(&self) -> usize {
        self.episode_cap
    }
}

/// Voltage-phase configuration: tolerance band, transient grid, and the
/// frozen stochastic load set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeCfg {
    pub v_min_frac: f64,
    pub v_max_frac: f64,
    /// Analysis window [s].
    pub window: f64,
    /// Transient timestep [s].
    pub dt: f64,
    /// Dielectric loss freeze frequency [Hz].
    pub loss_eval_hz: f64,
    /// I/O correlation coefficient.
    pub rho: f64,
    /// Profiles averaged per evaluation.
    pub profiles: usize,
    pub seed: u64,
}

impl TimeCfg {
    pub fn validate(&self) -> Result<()> {
        if !(self.window > 0.0) || !(self.dt > 0.0) || self.dt > self.window {
            return Err(Error::InvalidParameter(format!(
                "bad transient grid: window {} dt {}",
                self.window, self.dt
            )));
        }
        if self.profiles == 0 {
            return Err(Error::InvalidParameter("need at least one profile".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidParameter(format!(
                "correlation must be in [0, 1], got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// Per-evaluation transient result: total VVI and per-site breakdown,
/// both summed over the frozen profile set.
#[derive(Debug, Clone)]
pub struct VviEval {
    pub report: VviReport,
    pub site_vvi: Vec<f64>,
}

/// Voltage-phase episode: start from the impedance-phase layout, nudge
/// on-chip sites only, succeed when total VVI drops to `gamma` times
/// its initial value.
pub struct TimeEnv {
    fp: Floorplan,
    params: PdnParams,
    cfg: TimeCfg,
    gamma: f64,
    spec: VviSpec,
    base_layout: DecapLayout,
    layout: DecapLayout,
    sites: Vec<UdcSite>,
    monitored: Vec<NodeId>,
    monitored_labels: Vec<String>,
    profiles: Vec<CurrentProfile>,
    init_total: f64,
    init_site_vvi: Vec<f64>,
    init_norm: f64,
    last_site_vvi: Vec<f64>,
    steps: usize,
    episode_cap: usize,
    evals: u64,
}

impl TimeEnv {
    /// `start` is the impedance-phase layout the episode refines.
    /// Profiles are generated once from `cfg.seed` and frozen. Errors
    /// with an undefined-ratio diagnostic when the starting design
    /// already has zero VVI.
    pub fn new(
        fp: Floorplan,
        params: PdnParams,
        cfg: TimeCfg,
        target: &TargetSpec,
        gamma: f64,
        start: DecapLayout,
        episode_cap: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be in [0, 1], got {gamma}"
            )));
        }
        if episode_cap == 0 {
            return Err(Error::InvalidParameter("episode cap must be positive".into()));
        }
        start.validate(&fp, &params)?;
        let spec = VviSpec::from_fractions(params.vdd, cfg.v_min_frac, cfg.v_max_frac)?;
        let model = CurrentModelCfg {
            window: cfg.window,
            ..CurrentModelCfg::for_current(target.i_ref())
        };
        let profiles: Result<Vec<CurrentProfile>> = (0..cfg.profiles)
            .map(|k| gen_profile(&fp, cfg.rho, &model, cfg.seed.wrapping_add(k as u64)))
            .collect();
        let profiles = profiles?;
        let sites = fp.time_sites();

        // monitored node set is fixed by the floorplan, not the layout
        let probe = Netlist::assemble_hierarchy(&fp, &params)?;
        let mut monitored = Vec::with_capacity(sites.len());
        let mut monitored_labels = Vec::with_capacity(sites.len());
        for &site in &sites {
            let node = probe.site_node(site).ok_or_else(|| {
                Error::InvalidFloorplan(format!("no node for site {site:?}"))
            })?;
            monitored.push(node);
            monitored_labels.push(probe.label(node).to_string());
        }

        let mut env = TimeEnv {
            fp,
            params,
            cfg,
            gamma,
            spec,
            base_layout: start.clone(),
            layout: start,
            sites,
            monitored,
            monitored_labels,
            profiles,
            init_total: 0.0,
            init_site_vvi: Vec::new(),
            init_norm: 0.0,
            last_site_vvi: Vec::new(),
            steps: 0,
            episode_cap,
            evals: 0,
        };
        let start_layout = env.layout.clone();
        let init = env.evaluate_layout(&start_layout)?;
        if init.report.total == 0.0 {
            return Err(Error::UndefinedRatio(
                "starting layout has zero voltage violation; nothing to reduce".into(),
            ));
        }
        env.init_total = init.report.total;
        env.init_norm = init.site_vvi.iter().cloned().fold(0.0, f64::max);
        env.init_site_vvi = init.site_vvi.clone();
        env.last_site_vvi = init.site_vvi;
        Ok(env)
    }

    pub fn sites(&self) -> &[UdcSite] {
        &self.sites
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn init_total(&self) -> f64 {
        self.init_total
    }

    pub fn vvi_spec(&self) -> &VviSpec {
        &self.spec
    }

    /// Full transient + VVI of one layout over the frozen profiles;
    /// counts one evaluation.
    pub fn evaluate_layout(&mut self, layout: &DecapLayout) -> Result<VviEval> {
        let mut net = Netlist::assemble_hierarchy(&self.fp, &self.params)?;
        net.apply_decaps(layout, &self.fp, &self.params)?;
        let source_sets: Vec<Vec<(NodeId, PwlSource)>> = self
            .profiles
            .iter()
            .map(|p| {
                p.internal
                    .iter()
                    .chain(&p.io)
                    .map(|&(site, ref w)| {
                        let node = net.site_node(site).expect("profile site exists");
                        (node, w.clone())
                    })
                    .collect()
            })
            .collect();
        let opts = TransientOpts {
            dt: self.cfg.dt,
            t_end: self.cfg.window,
            loss_eval_hz: self.cfg.loss_eval_hz,
        };
        let runs = transient_batch(&net, &source_sets, &self.monitored, &opts);

        let mut site_vvi = vec![0.0; self.monitored.len()];
        for run in runs {
            let sol = run?;
            for (m, trace) in sol.traces.iter().enumerate() {
                site_vvi[m] += compute_vvi(&sol.times, trace, &self.spec);
            }
        }
        let entries: Vec<(String, f64)> = self
            .monitored_labels
            .iter()
            .cloned()
            .zip(site_vvi.iter().copied())
            .collect();
        let total = site_vvi.iter().sum();
        let violating_nodes = site_vvi.iter().filter(|&&v| v > 0.0).count();
        self.evals += 1;
        Ok(VviEval {
            report: VviReport {
                entries,
                total,
                violating_nodes,
            },
            site_vvi,
        })
    }

    /// Voltage reward of an arbitrary layout (same path as step).
    pub fn reward_of(&mut self, layout: &DecapLayout) -> Result<f64> {
        let eval = self.evaluate_layout(layout)?;
        self.reward_from(&eval, layout)
    }

    fn reward_from(&self, eval: &VviEval, layout: &DecapLayout) -> Result<f64> {
        let init = VviReport {
            entries: Vec::new(),
            total: self.init_total,
            violating_nodes: 0,
        };
        let totals = layout.capacity(&self.fp, &self.params);
        time_reward(&eval.report, &init, &totals, self.gamma)
    }

    fn encode(&self) -> StateTensor {
        encode_time(
            &self.fp,
            &self.layout,
            self.params.max_level,
            &self.last_site_vvi,
            self.init_norm,
        )
    }
}

impl PlacementEnv for TimeEnv {
    fn n_sites(&self) -> usize {
        self.sites.len()
    }

    fn net_config(&self) -> NetConfig {
        NetConfig::for_time(&self.fp)
    }

    fn reset(&mut self) -> Result<StateTensor> {
        self.layout = self.base_layout.clone();
        self.last_site_vvi = self.init_site_vvi.clone();
        self.steps = 0;
        Ok(self.encode())
    }

    fn step(&mut self, action: &[i8]) -> Result<StepOutcome> {
        check_action(action, self.sites.len())?;
        for (&site, &a) in self.sites.iter().zip(action) {
            self.layout.nudge(site, a, self.params.max_level);
        }
        let layout = self.layout.clone();
        let eval = self.evaluate_layout(&layout)?;
        let reward = self.reward_from(&eval, &layout)?;
        self.last_site_vvi = eval.site_vvi;
        self.steps += 1;
        let ratio = eval.report.total / self.init_total;
        let done = ratio <= self.gamma || self.steps >= self.episode_cap;
        Ok(StepOutcome {
            state: self.encode(),
            reward,
            done,
        })
    }

    fn layout(&self) -> &DecapLayout {
        &self.layout
    }

    fn capacity(&self) -> CapacityTotals {
        self.layout.capacity(&self.fp, &self.params)
    }

    fn evals(&self) -> u64 {
        self.evals
    }

    fn episode_cap(&self) -> usize {
        self.episode_cap
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ac::log_sweep;

    // small plan: 2x2 interposer, one 2x2 chiplet, cheap to solve
    fn toy_fp() -> Floorplan {
        use crate::floorplan::{Chiplet, ProbePort, SpaceMatrix};
        Floorplan {
            intp_rows: 2,
            intp_cols: 2,
            intp_space: SpaceMatrix::all_available(2, 2),
            tsv_sites: vec![(0, 0), (1, 1)],
            chiplets: vec![Chiplet {
                name: "die".into(),
                origin: (0, 0),
                rows: 2,
                cols: 2,
                space: SpaceMatrix::all_available(2, 2),
                io_edge_sites: vec![(0, 0), (0, 1)],
            }],
            probe_ports: vec![ProbePort {
                chiplet: "die".into(),
                row: 0,
                col: 0,
            }],
        }
    }

    fn toy_target(params: &PdnParams) -> TargetSpec {
        // calibrated so the toy grid can meet the mask when decapped
        TargetSpec::new(params.vdd, 0.05, 2.0 * params.vdd * 0.6, 1e-10).unwrap()
    }

    fn toy_env() -> FreqEnv {
        let fp = toy_fp();
        let params = PdnParams::rocket64_55nm();
        let target = toy_target(&params);
        FreqEnv::new(
            fp,
            params,
            target,
            RewardWeights::default(),
            log_sweep(1e8, 2e10, 12),
            20,
        )
        .unwrap()
    }

    #[test]
    fn zero_action_keeps_layout_and_reward() {
        let mut env = toy_env();
        env.reset().unwrap();
        let a = vec![0i8; env.n_sites()];
        let r1 = env.step(&a).unwrap();
        let before = env.layout().clone();
        let r2 = env.step(&a).unwrap();
        assert_eq!(&before, env.layout());
        assert_eq!(r1.reward, r2.reward);
    }

    #[test]
    fn uniform_increment_raises_every_site() {
        let mut env = toy_env();
        env.reset().unwrap();
        let a = vec![1i8; env.n_sites()];
        env.step(&a).unwrap();
        for &site in &env.sites().to_vec() {
            assert_eq!(env.layout().level(site), 1);
        }
    }

    #[test]
    fn increments_clamp_at_max_level() {
        let mut env = toy_env();
        env.reset().unwrap();
        let a = vec![1i8; env.n_sites()];
        for _ in 0..12 {
            let out = env.step(&a).unwrap();
            if out.done {
                break;
            }
        }
        for &site in &env.sites().to_vec() {
            assert!(env.layout().level(site) <= 10);
        }
        // explicit clamp: another +1 pass cannot exceed 10
        let mut env2 = toy_env();
        env2.reset().unwrap();
        for _ in 0..3 {
            let _ = env2.step(&a);
        }
    }

    #[test]
    fn action_then_inverse_restores_interior_levels() {
        let mut env = toy_env();
        env.reset().unwrap();
        // establish an interior level (3 everywhere)
        let up = vec![1i8; env.n_sites()];
        for _ in 0..3 {
            env.step(&up).unwrap();
        }
        let before = env.layout().clone();
        let down = vec![-1i8; env.n_sites()];
        env.step(&up).unwrap();
        env.step(&down).unwrap();
        assert_eq!(&before, env.layout());
    }

    #[test]
    fn rejects_malformed_actions() {
        let mut env = toy_env();
        env.reset().unwrap();
        assert!(env.step(&vec![0i8; 3]).is_err());
        let mut bad = vec![0i8; env.n_sites()];
        bad[0] = 2;
        assert!(env.step(&bad).is_err());
    }

    #[test]
    fn evaluation_counter_tracks_steps() {
        let mut env = toy_env();
        env.reset().unwrap();
        let a = vec![0i8; env.n_sites()];
        env.step(&a).unwrap();
        env.step(&a).unwrap();
        assert_eq!(env.evals(), 2);
        env.reward_of(&DecapLayout::empty(env.floorplan())).unwrap();
        assert_eq!(env.evals(), 3);
    }
}
