//! Seeded stochastic load-current model.
//!
//! Internal switching currents: one positive triangular pulse train per
//! on-chip cell, globally rescaled so the aggregate never exceeds the
//! worst-case draw. I/O currents: zero-mean bipolar trains on each die's
//! I/O edge cells, built as a correlation mixture of one shared and one
//! independent train per source.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::floorplan::{Floorplan, Layer, UdcSite};
use crate::pwl::{max_abs_sum, union_breakpoints, PwlSource};

/// Current-model knobs; amplitudes derive from the worst-case draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentModelCfg {
    /// Analysis window the trains fill [s].
    pub window: f64,
    /// Worst-case transient current [A]; caps the internal aggregate and
    /// the I/O aggregate.
    pub i_ref: f64,
    /// Pulse width range [s].
    pub w_min: f64,
    pub w_max: f64,
    /// I/O component amplitude as a fraction of i_ref.
    pub io_amp_frac: f64,
    /// Pulses per internal source (inclusive range).
    pub pulses_min: usize,
    pub pulses_max: usize,
}

impl CurrentModelCfg {
    /// Default shape parameters for a given worst-case draw.
    pub fn for_current(i_ref: f64) -> Self {
        CurrentModelCfg {
            window: 2e-9,
            i_ref,
            w_min: 50e-12,
            w_max: 300e-12,
            io_amp_frac: 0.05,
            pulses_min: 2,
            pulses_max: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window > 0.0 && self.i_ref > 0.0) {
            return Err(Error::InvalidParameter(
                "current model needs positive window and i_ref".into(),
            ));
        }
        if !(self.w_min > 0.0 && self.w_max >= self.w_min && self.w_max < self.window) {
            return Err(Error::InvalidParameter(format!(
                "bad pulse width range [{}, {}] for window {}",
                self.w_min, self.w_max, self.window
            )));
        }
        if !(self.io_amp_frac > 0.0 && self.io_amp_frac <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "io_amp_frac must be in (0, 1], got {}",
                self.io_amp_frac
            )));
        }
        if self.pulses_min == 0 || self.pulses_max < self.pulses_min {
            return Err(Error::InvalidParameter(
                "bad pulses-per-source range".into(),
            ));
        }
        Ok(())
    }
}

/// One seeded draw of the load model.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentProfile {
    /// Internal switching source per on-chip cell (every cell, decap
    /// space or not), chiplets in declaration order, cells row-major.
    pub internal: Vec<(UdcSite, PwlSource)>,
    /// I/O source per die I/O edge cell, same ordering discipline.
    pub io: Vec<(UdcSite, PwlSource)>,
    pub rho: f64,
    pub seed: u64,
}

fn all_chip_cells(fp: &Floorplan) -> Vec<UdcSite> {
    let mut v = Vec::new();
    for (i, ch) in fp.chiplets.iter().enumerate() {
        for r in 0..ch.rows {
            for c in 0..ch.cols {
                v.push(UdcSite {
                    layer: Layer::Chip(i),
                    row: r,
                    col: c,
                });
            }
        }
    }
    v
}

fn io_cells(fp: &Floorplan) -> Vec<UdcSite> {
    let mut v = Vec::new();
    for (i, ch) in fp.chiplets.iter().enumerate() {
        for &(r, c) in &ch.io_edge_sites {
            v.push(UdcSite {
                layer: Layer::Chip(i),
                row: r,
                col: c,
            });
        }
    }
    v
}

/// Sums triangular pulses into one PWL train. Each pulse is
/// (start, width, peak); the sum is evaluated at the union of all pulse
/// kink times, which is exact for piecewise-linear summands.
fn pulses_to_pwl(pulses: &[(f64, f64, f64)], window: f64) -> PwlSource {
    let tri = |t: f64, &(s, w, a): &(f64, f64, f64)| -> f64 {
        if t <= s || t >= s + w {
            0.0
        } else if t <= s + w / 2.0 {
            a * (t - s) / (w / 2.0)
        } else {
            a * (s + w - t) / (w / 2.0)
        }
    };
    let mut ts: Vec<f64> = vec![0.0, window];
    for &(s, w, _) in pulses {
        ts.extend([s, s + w / 2.0, s + w]);
    }
    ts.retain(|&t| (0.0..=window).contains(&t));
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup();
    let pts: Vec<(f64, f64)> = ts
        .into_iter()
        .map(|t| (t, pulses.iter().map(|p| tri(t, p)).sum()))
        .collect();
    PwlSource::new(pts).expect("pulse kinks are ordered")
}

/// Positive pulse train for one internal source.
fn internal_train(rng: &mut ChaCha8Rng, cfg: &CurrentModelCfg) -> PwlSource {
    let n = rng.gen_range(cfg.pulses_min..=cfg.pulses_max);
    let pulses: Vec<(f64, f64, f64)> = (0..n)
        .map(|_| {
            let w = rng.gen_range(cfg.w_min..=cfg.w_max);
            let s = rng.gen_range(0.0..=(cfg.window - w));
            let a = rng.gen_range(0.2..=1.0) * cfg.i_ref;
            (s, w, a)
        })
        .collect();
    pulses_to_pwl(&pulses, cfg.window)
}

/// Zero-mean bipolar train: mirrored positive/negative triangle pairs
/// placed left to right; each complete pair integrates to exactly zero.
fn bipolar_train(rng: &mut ChaCha8Rng, cfg: &CurrentModelCfg, amp: f64) -> PwlSource {
    let mut pulses: Vec<(f64, f64, f64)> = Vec::new();
    let mut t = 0.0;
    loop {
        let w = rng.gen_range(cfg.w_min..=cfg.w_max);
        let a = rng.gen_range(0.3..=1.0) * amp;
        let gap1 = rng.gen_range(0.0..=cfg.w_max);
        let gap2 = rng.gen_range(0.0..=cfg.w_max);
        let end = t + gap1 + w + gap2 + w;
        if end > cfg.window {
            break;
        }
        pulses.push((t + gap1, w, a));
        pulses.push((t + gap1 + w + gap2, w, -a));
        t = end;
    }
    pulses_to_pwl(&pulses, cfg.window)
}

/// Internal switching currents for every on-chip cell. The aggregate is
/// rescaled so its peak equals i_ref when the raw draw exceeds it.
pub fn gen_internal_currents(
    fp: &Floorplan,
    cfg: &CurrentModelCfg,
    seed: u64,
) -> Result<Vec<(UdcSite, PwlSource)>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = all_chip_cells(fp);
    let mut sources: Vec<PwlSource> = cells
        .iter()
        .map(|_| internal_train(&mut rng, cfg))
        .collect();
    let peak = max_abs_sum(&sources);
    if peak > cfg.i_ref {
        let k = cfg.i_ref / peak;
        for s in &mut sources {
            s.scale(k);
        }
    }
    Ok(cells.into_iter().zip(sources).collect())
}

/// I/O currents on every die's I/O edge cells. Each source mixes one
/// system-wide shared train with its own independent train:
/// sqrt(rho) * shared + sqrt(1 - rho) * independent. The aggregate is
/// rescaled to stay within i_ref in magnitude.
pub fn gen_io_currents(
    fp: &Floorplan,
    rho: f64,
    cfg: &CurrentModelCfg,
    seed: u64,
) -> Result<Vec<(UdcSite, PwlSource)>> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!(
            "correlation must be in [0, 1], got {rho}"
        )));
    }
    let cells = io_cells(fp);
    let amp = cfg.io_amp_frac * cfg.i_ref;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let shared_seed = master.next_u64();
    let indep_seeds: Vec<u64> = (0..cells.len()).map(|_| master.next_u64()).collect();
    let shared = bipolar_train(&mut ChaCha8Rng::seed_from_u64(shared_seed), cfg, amp);
    let (ks, ki) = (rho.sqrt(), (1.0 - rho).sqrt());
    let mut sources: Vec<PwlSource> = indep_seeds
        .iter()
        .map(|&s| {
            let indep = bipolar_train(&mut ChaCha8Rng::seed_from_u64(s), cfg, amp);
            let ts = union_breakpoints(&[shared.clone(), indep.clone()]);
            let pts: Vec<(f64, f64)> = ts
                .into_iter()
                .map(|t| (t, ks * shared.eval(t) + ki * indep.eval(t)))
                .collect();
            PwlSource::new(pts).expect("union breakpoints are ordered")
        })
        .collect();
    let peak = max_abs_sum(&sources);
    if peak > cfg.i_ref {
        let k = cfg.i_ref / peak;
        for s in &mut sources {
            s.scale(k);
        }
    }
    Ok(cells.into_iter().zip(sources).collect())
}

/// Complete seeded profile: internal and I/O trains. The two groups use
/// decorrelated seed streams derived from `seed`.
pub fn gen_profile(
    fp: &Floorplan,
    rho: f64,
    cfg: &CurrentModelCfg,
    seed: u64,
) -> Result<CurrentProfile> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let internal_seed = master.next_u64();
    let io_seed = master.next_u64();
    Ok(CurrentProfile {
        internal: gen_internal_currents(fp, cfg, internal_seed)?,
        io: gen_io_currents(fp, rho, cfg, io_seed)?,
        rho,
        seed,
    })
}

/// Mean pairwise Pearson correlation of the sources sampled on a
/// uniform grid over the window.
pub fn mean_pairwise_correlation(sources: &[PwlSource], window: f64, samples: usize) -> f64 {
    if sources.len() < 2 {
        return 1.0;
    }
    let grid: Vec<f64> = (0..samples)
        .map(|k| window * k as f64 / (samples - 1) as f64)
        .collect();
    let traces: Vec<Vec<f64>> = sources
        .iter()
        .map(|s| grid.iter().map(|&t| s.eval(t)).collect())
        .collect();
    let stats = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let v = x.iter().map(|&a| (a - m) * (a - m)).sum::<f64>();
        (m, v)
    };
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..traces.len() {
        for j in 0..i {
            let (mi, vi) = stats(&traces[i]);
            let (mj, vj) = stats(&traces[j]);
            if vi == 0.0 || vj == 0.0 {
                continue;
            }
            let cov: f64 = traces[i]
                .iter()
                .zip(&traces[j])
                .map(|(&a, &b)| (a - mi) * (b - mj))
                .sum();
            sum += cov / (vi * vj).sqrt();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}
