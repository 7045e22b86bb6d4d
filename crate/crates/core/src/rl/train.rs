//! Training loops with a shared evaluation budget and best-layout tracking.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decap::DecapLayout;
use crate::error::Result;
use crate::rl::env::PlacementEnv;
use crate::rl::net::PolicyValueNet;
use crate::rl::ppo::{action_logp, ppo_update, sample_action, Adam, PpoConfig, Transition, UpdateStats};

/// Budgeted training run description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainCfg {
    /// Maximum reward evaluations (environment steps, plus any the
    /// environment spent at construction).
    pub budget: u64,
    pub seed: u64,
    pub ppo: PpoConfig,
}

/// One reward-curve row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Reward at the episode's last step.
    pub reward: f64,
    /// Best single-step reward seen so far in the run.
    pub best_reward: f64,
    /// Placed totals of the episode's final layout [F].
    pub c_mos: f64,
    pub c_mim: f64,
}

/// Outcome of a training run.
pub struct TrainResult {
    pub best_layout: DecapLayout,
    pub best_reward: f64,
    pub curve: Vec<EpisodeRecord>,
    pub updates: Vec<UpdateStats>,
    pub episodes: usize,
    pub net: PolicyValueNet,
}

/// Seeded PPO training against any placement environment. Episodes run
/// to their done flag; updates fire once at least `ppo.rollout`
/// transitions are buffered; the run stops when the environment's
/// evaluation counter reaches the budget (finishing the batch in hand).
pub fn train<E: PlacementEnv>(env: &mut E, cfg: &TrainCfg) -> Result<TrainResult> {
    cfg.ppo.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = PolicyValueNet::new(env.net_config(), &mut rng)?;
    let mut opt = Adam::new(net.param_count(), cfg.ppo.lr);

    let mut best_reward = f64::NEG_INFINITY;
    let mut best_layout = env.layout().clone();
    let mut curve = Vec::new();
    let mut updates = Vec::new();
    let mut buffer: Vec<Transition> = Vec::new();
    let mut episode = 0usize;

    while env.evals() < cfg.budget {
        let mut state = env.reset()?;
        loop {
            let fwd = net.forward(&state)?;
            let action = sample_action(&fwd.logits, &mut rng);
            let logp_old = action_logp(&fwd.logits, &action);
            let out = env.step(&action)?;
            buffer.push(Transition {
                state,
                action,
                logp_old,
                reward: out.reward,
                done: out.done,
            });
            if out.reward > best_reward {
                best_reward = out.reward;
                best_layout = env.layout().clone();
            }
            state = out.state;
            if out.done || env.evals() >= cfg.budget {
                break;
            }
        }
        // the episode pushed at least one transition; its last entry is
        // this episode's final step
        let last_reward = buffer.last().map(|t| t.reward).unwrap_or(0.0);
        let totals = env.capacity();
        curve.push(EpisodeRecord {
            episode,
            reward: last_reward,
            best_reward,
            c_mos: totals.c_mos,
            c_mim: totals.c_mim,
        });
        episode += 1;
        if buffer.len() >= cfg.ppo.rollout {
            updates.push(ppo_update(&mut net, &mut opt, &buffer, &cfg.ppo)?);
            buffer.clear();
        }
    }
    if !buffer.is_empty() {
        updates.push(ppo_update(&mut net, &mut opt, &buffer, &cfg.ppo)?);
    }

    Ok(TrainResult {
        best_layout,
        best_reward,
        curve,
        updates,
        episodes: episode,
        net,
    })
}

/// Reward-curve CSV: one row per episode.
pub fn curve_to_csv(curve: &[EpisodeRecord]) -> String {
    use std::fmt::Write;
    let mut s = String::from("episode,reward,best_reward,c_mos_f,c_mim_f\n");
    for r in curve {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.episode, r.reward, r.best_reward, r.c_mos, r.c_mim
        );
    }
    s
}
