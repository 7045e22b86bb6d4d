//! Reference optimizers: a genetic algorithm and generalized simulated
//! annealing over integer decap levels.
//!
//! Both minimize a caller-supplied cost (negated reward) over genomes
//! of per-site levels in 0..=max_level, stop after exactly `budget`
//! cost evaluations, and record the running best after every
//! evaluation so methods can be compared at equal budgets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Cost closure: genome of levels -> scalar to minimize.
pub type CostFn<'a> = dyn FnMut(&[u8]) -> Result<f64> + 'a;

/// Running best after each evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostPoint {
    /// 1-based evaluation index.
    pub eval: u64,
    pub best_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best_genome: Vec<u8>,
    pub best_cost: f64,
    pub history: Vec<CostPoint>,
    pub evals: u64,
}

/// History CSV: evaluation index and running best cost.
pub fn history_to_csv(history: &[CostPoint]) -> String {
    use std::fmt::Write;
    let mut s = String::from("eval,best_cost\n");
    for p in history {
        let _ = writeln!(s, "{},{}", p.eval, p.best_cost);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaConfig {
    pub population: usize,
    /// Tournament size for parent selection.
    pub tournament: usize,
    pub crossover_rate: f64,
    /// Per-gene probability of a uniform level reset.
    pub mutation_rate: f64,
    /// Individuals copied unchanged into the next generation.
    pub elitism: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 64,
            tournament: 3,
            crossover_rate: 0.9,
            mutation_rate: 0.05,
            elitism: 1,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidParameter(
                "population must be at least 2".into(),
            ));
        }
        if self.tournament == 0 || self.tournament > self.population {
            return Err(Error::InvalidParameter(format!(
                "tournament size {} out of range for population {}",
                self.tournament, self.population
            )));
        }
        for (name, r) in [
            ("crossover rate", self.crossover_rate),
            ("mutation rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidParameter(format!("{name} {r} not in [0, 1]")));
            }
        }
        if self.elitism >= self.population {
            return Err(Error::InvalidParameter(
                "elitism must leave room for offspring".into(),
            ));
        }
        Ok(())
    }
}

struct Tracker {
    best_genome: Vec<u8>,
    best_cost: f64,
    history: Vec<CostPoint>,
    evals: u64,
    budget: u64,
}

impl Tracker {
    fn new(budget: u64) -> Self {
        Tracker {
            best_genome: Vec::new(),
            best_cost: f64::INFINITY,
            history: Vec::new(),
            evals: 0,
            budget,
        }
    }

    fn exhausted(&self) -> bool {
        self.evals >= self.budget
    }

    fn eval(&mut self, cost: &mut CostFn, genome: &[u8]) -> Result<f64> {
        debug_assert!(!self.exhausted());
        let c = cost(genome)?;
        self.evals += 1;
        if c < self.best_cost {
            self.best_cost = c;
            self.best_genome = genome.to_vec();
        }
        self.history.push(CostPoint {
            eval: self.evals,
            best_cost: self.best_cost,
        });
        Ok(c)
    }

    fn finish(self) -> SearchResult {
        SearchResult {
            best_genome: self.best_genome,
            best_cost: self.best_cost,
            history: self.history,
            evals: self.evals,
        }
    }
}

fn random_genome<R: Rng>(rng: &mut R, n: usize, max_level: u8) -> Vec<u8> {
    (0..n).map(|_| rng.gen_range(0..=max_level)).collect()
}

/// Tournament / uniform-crossover / reset-mutation genetic search.
/// Stops after exactly `budget` cost evaluations; offspring beyond the
/// budget are discarded unevaluated.
pub fn ga_optimize(
    cost: &mut CostFn,
    n_genes: usize,
    max_level: u8,
    budget: u64,
    cfg: &GaConfig,
    seed: u64,
) -> Result<SearchResult> {
    cfg.validate()?;
    if n_genes == 0 || budget == 0 {
        return Err(Error::InvalidParameter(
            "need at least one gene and a positive budget".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tracker = Tracker::new(budget);

    let mut pop: Vec<Vec<u8>> = Vec::with_capacity(cfg.population);
    let mut costs: Vec<f64> = Vec::with_capacity(cfg.population);
    for _ in 0..cfg.population {
        if tracker.exhausted() {
            break;
        }
        let g = random_genome(&mut rng, n_genes, max_level);
        let c = tracker.eval(cost, &g)?;
        pop.push(g);
        costs.push(c);
    }

    while !tracker.exhausted() {
        // rank for elitism
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| costs[a].partial_cmp(&costs[b]).expect("finite costs"));
        let mut next: Vec<Vec<u8>> = order
            .iter()
            .take(cfg.elitism)
            .map(|&i| pop[i].clone())
            .collect();
        let mut next_costs: Vec<f64> = order.iter().take(cfg.elitism).map(|&i| costs[i]).collect();

        let mut select = |rng: &mut ChaCha8Rng| -> usize {
            let mut best = rng.gen_range(0..pop.len());
            for _ in 1..cfg.tournament {
                let j = rng.gen_range(0..pop.len());
                if costs[j] < costs[best] {
                    best = j;
                }
            }
            best
        };

        while next.len() < cfg.population && !tracker.exhausted() {
            let a = select(&mut rng);
            let b = select(&mut rng);
            let mut child: Vec<u8> = if rng.gen::<f64>() < cfg.crossover_rate {
                pop[a]
                    .iter()
                    .zip(&pop[b])
                    .map(|(&x, &y)| if rng.gen::<bool>() { x } else { y })
                    .collect()
            } else {
                pop[a].clone()
            };
            for g in &mut child {
                if rng.gen::<f64>() < cfg.mutation_rate {
                    *g = rng.gen_range(0..=max_level);
                }
            }
            let c = tracker.eval(cost, &child)?;
            next.push(child);
            next_costs.push(c);
        }
        if next.len() < cfg.population {
            break; // budget ran out mid-generation
        }
        pop = next;
        costs = next_costs;
    }
    Ok(tracker.finish())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaConfig {
    /// Initial visiting temperature.
    pub t0: f64,
    /// Visiting distribution parameter, in (1, 3).
    pub qv: f64,
    /// Acceptance parameter, < 1 (more negative = pickier).
    pub qa: f64,
    /// Re-anneal when temperature falls below `t0 * restart_ratio`.
    pub restart_ratio: f64,
}

impl Default for DaConfig {
    fn default() -> Self {
        DaConfig {
            t0: 5230.0,
            qv: 2.62,
            qa: -5.0,
            restart_ratio: 2e-5,
        }
    }
}

impl DaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "initial temperature must be positive, got {}",
                self.t0
            )));
        }
        if !(self.qv > 1.0 && self.qv < 3.0) {
            return Err(Error::InvalidParameter(format!(
                "visiting parameter must be in (1, 3), got {}",
                self.qv
            )));
        }
        if !(self.qa < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "acceptance parameter must be below 1, got {}",
                self.qa
            )));
        }
        if !(self.restart_ratio > 0.0 && self.restart_ratio < 1.0) {
            return Err(Error::InvalidParameter(
                "restart ratio must be in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Natural log of |gamma(x)| (Lanczos approximation, reflection for
/// x < 0.5).
pub(crate) fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // ln|G(x)| = ln(pi / |sin(pi x)|) - ln|G(1 - x)|
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin().abs()).ln()
            - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut acc = C[0];
    for (i, &c) in C.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Heavy-tailed visiting displacement (distorted Cauchy-Lorentz).
fn visit_step<R: Rng>(rng: &mut R, temperature: f64, qv: f64) -> f64 {
    const TAIL_LIMIT: f64 = 1e8;
    let pi = std::f64::consts::PI;
    let factor1 = (temperature.ln() / (qv - 1.0)).exp();
    let factor2 = ((4.0 - qv) * (qv - 1.0).ln()).exp();
    let factor3 = ((2.0 - qv) * 2.0f64.ln() / (qv - 1.0)).exp();
    let factor4 = pi.sqrt() * factor1 * factor2 / (factor3 * (3.0 - qv));
    let factor5 = 1.0 / (qv - 1.0) - 0.5;
    let d1 = 2.0 - factor5;
    let factor6 = pi * (1.0 - factor5) / (pi * (1.0 - factor5)).sin() / ln_gamma(d1).exp();
    let sigmax = (-(qv - 1.0) * (factor6 / factor4).ln() / (3.0 - qv)).exp();

    let gauss = |rng: &mut R| -> f64 {
        // Box-Muller from two uniforms
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen::<f64>();
        (-2.0 * u1.ln()).sqrt() * (2.0 * pi * u2).cos()
    };
    let x = sigmax * gauss(rng);
    let y = gauss(rng);
    let den = ((qv - 1.0) * y.abs().ln() / (3.0 - qv)).exp();
    let v = x / den;
    if v > TAIL_LIMIT {
        TAIL_LIMIT * rng.gen::<f64>()
    } else if v < -TAIL_LIMIT {
        -TAIL_LIMIT * rng.gen::<f64>()
    } else {
        v
    }
}

/// Visiting-temperature schedule: `t0` at step 0, decaying like
/// `step^-(qv-1)`.
pub(crate) fn visit_temperature(t0: f64, qv: f64, step: u64) -> f64 {
    let t1 = ((qv - 1.0) * 2.0f64.ln()).exp() - 1.0;
    let t2 = ((qv - 1.0) * ((step + 2) as f64).ln()).exp() - 1.0;
    t0 * t1 / t2
}

/// Generalized acceptance probability for a worse candidate.
pub(crate) fn accept_probability(delta_e: f64, t_accept: f64, qa: f64) -> f64 {
    if delta_e <= 0.0 {
        return 1.0;
    }
    let base = 1.0 - (1.0 - qa) * delta_e / t_accept;
    if base <= 0.0 {
        0.0
    } else {
        (base.ln() / (1.0 - qa)).exp()
    }
}

fn wrap(v: f64, hi: f64) -> f64 {
    let w = v.rem_euclid(hi);
    if w >= hi {
        0.0 // guard the representable-boundary case
    } else {
        w
    }
}

fn decode(x: &[f64], max_level: u8) -> Vec<u8> {
    x.iter()
        .map(|&v| (v.floor() as i64).clamp(0, max_level as i64) as u8)
        .collect()
}

/// Generalized simulated annealing over integer levels, run on a
/// continuous internal state in [0, max_level + 1) that decodes by
/// flooring. Each temperature step proposes one all-coordinate move
/// and one single-coordinate move per gene; worse candidates pass a
/// temperature-scheduled generalized acceptance test.
pub fn da_optimize(
    cost: &mut CostFn,
    n_genes: usize,
    max_level: u8,
    budget: u64,
    cfg: &DaConfig,
    seed: u64,
) -> Result<SearchResult> {
    cfg.validate()?;
    if n_genes == 0 || budget == 0 {
        return Err(Error::InvalidParameter(
            "need at least one gene and a positive budget".into(),
        ));
    }
    let hi = max_level as f64 + 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tracker = Tracker::new(budget);

    let mut x: Vec<f64> = (0..n_genes).map(|_| rng.gen_range(0.0..hi)).collect();
    let mut e = tracker.eval(cost, &decode(&x, max_level))?;

    let mut step: u64 = 0;
    'outer: while !tracker.exhausted() {
        let temperature = visit_temperature(cfg.t0, cfg.qv, step);
        if temperature < cfg.t0 * cfg.restart_ratio {
            // re-anneal from a fresh random state
            step = 0;
            x = (0..n_genes).map(|_| rng.gen_range(0.0..hi)).collect();
            e = tracker.eval(cost, &decode(&x, max_level))?;
            continue;
        }
        for j in 0..(2 * n_genes) {
            if tracker.exhausted() {
                break 'outer;
            }
            let mut cand = x.clone();
            if j < n_genes {
                for v in cand.iter_mut() {
                    *v = wrap(*v + visit_step(&mut rng, temperature, cfg.qv), hi);
                }
            } else {
                let d = j - n_genes;
                cand[d] = wrap(cand[d] + visit_step(&mut rng, temperature, cfg.qv), hi);
            }
            let ec = tracker.eval(cost, &decode(&cand, max_level))?;
            let t_accept = temperature / (j as f64 + 1.0);
            let p = accept_probability(ec - e, t_accept, cfg.qa);
            if p >= 1.0 || rng.gen::<f64>() <= p {
                x = cand;
                e = ec;
            }
        }
        step += 1;
    }
    Ok(tracker.finish())
}
