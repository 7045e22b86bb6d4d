//! Clipped-surrogate policy optimization over factorized site actions.
//!
//! Each placement site carries an independent three-way categorical
//! (lower / keep / raise); the joint log-probability is the sum over
//! sites. Updates maximize the clipped surrogate, minimize the value
//! mean-squared error against discounted reward-to-go, and add an
//! entropy bonus. Advantages are plain `return - value`, held fixed
//! across the update epochs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rl::net::PolicyValueNet;
use crate::rl::state::StateTensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoConfig {
    /// Clip half-width for the probability ratio.
    pub clip: f64,
    pub discount: f64,
    pub lr: f64,
    /// Gradient passes per collected batch.
    pub epochs: usize,
    /// Minimum transitions per batch; collection finishes the episode
    /// in progress.
    pub rollout: usize,
    pub entropy_weight: f64,
    pub value_coef: f64,
    /// Per-episode step cap.
    pub episode_cap: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip: 0.2,
            discount: 0.99,
            lr: 3e-4,
            epochs: 4,
            rollout: 512,
            entropy_weight: 0.01,
            value_coef: 0.5,
            episode_cap: 50,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "clip ratio must be in (0, 1), got {}",
                self.clip
            )));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "discount must be in (0, 1], got {}",
                self.discount
            )));
        }
        if !(self.lr > 0.0) || !(self.entropy_weight >= 0.0) || !(self.value_coef >= 0.0) {
            return Err(Error::InvalidParameter(
                "learning rate must be positive and loss weights non-negative".into(),
            ));
        }
        if self.epochs == 0 || self.rollout == 0 || self.episode_cap == 0 {
            return Err(Error::InvalidParameter(
                "epochs, rollout, and episode cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One environment step as stored in a rollout.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: StateTensor,
    /// Per-site choice in {-1, 0, +1}.
    pub action: Vec<i8>,
    /// Joint log-probability under the policy that sampled the action.
    pub logp_old: f64,
    pub reward: f64,
    pub done: bool,
}

/// Diagnostics from one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    /// Mean clipped surrogate on the first pass (ratio = 1 there).
    pub first_surrogate: f64,
    pub mean_advantage: f64,
    /// Means over all epochs.
    pub surrogate: f64,
    pub value_mse: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(params.len(), grad.len());
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Stable log-softmax of one logit triple.
pub fn log_softmax3(z: &[f64]) -> [f64; 3] {
    let m = z[0].max(z[1]).max(z[2]);
    let lse = m + ((z[0] - m).exp() + (z[1] - m).exp() + (z[2] - m).exp()).ln();
    [z[0] - lse, z[1] - lse, z[2] - lse]
}

pub fn softmax3(z: &[f64]) -> [f64; 3] {
    let ls = log_softmax3(z);
    [ls[0].exp(), ls[1].exp(), ls[2].exp()]
}

/// Joint log-probability: sum of per-site categorical log-probs.
pub fn action_logp(logits: &[f64], action: &[i8]) -> f64 {
    debug_assert_eq!(logits.len(), 3 * action.len());
    action
        .iter()
        .enumerate()
        .map(|(k, &a)| log_softmax3(&logits[3 * k..3 * k + 3])[(a + 1) as usize])
        .sum()
}

/// Joint entropy: sum of per-site categorical entropies.
pub fn policy_entropy(logits: &[f64]) -> f64 {
    logits
        .chunks_exact(3)
        .map(|z| {
            let ls = log_softmax3(z);
            -(ls[0].exp() * ls[0] + ls[1].exp() * ls[1] + ls[2].exp() * ls[2])
        })
        .sum()
}

/// Samples one choice per site from the categorical heads.
pub fn sample_action<R: Rng>(logits: &[f64], rng: &mut R) -> Vec<i8> {
    logits
        .chunks_exact(3)
        .map(|z| {
            let p = softmax3(z);
            let u: f64 = rng.gen();
            if u < p[0] {
                -1
            } else if u < p[0] + p[1] {
                0
            } else {
                1
            }
        })
        .collect()
}

/// Pessimistic clipped surrogate term for one transition.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    unclipped.min(clipped)
}

/// Discounted reward-to-go, resetting at episode ends.
pub fn discounted_returns(rewards: &[f64], dones: &[bool], discount: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), dones.len());
    let mut out = vec![0.0; rewards.len()];
    let mut run = 0.0;
    for t in (0..rewards.len()).rev() {
        if dones[t] {
            run = 0.0;
        }
        run = rewards[t] + discount * run;
        out[t] = run;
    }
    out
}

/// Loss components from one pass (means over the batch).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub surrogate: f64,
    pub value_mse: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Evaluates the full PPO loss and its parameter gradient at the
/// current parameters. Loss = -surrogate + value_coef * value MSE
/// - entropy_weight * entropy, all batch means.
pub fn ppo_loss_and_grad(
    net: &PolicyValueNet,
    batch: &[Transition],
    returns: &[f64],
    advantages: &[f64],
    cfg: &PpoConfig,
) -> Result<(LossParts, Vec<f64>)> {
    assert_eq!(batch.len(), returns.len());
    assert_eq!(batch.len(), advantages.len());
    let n = batch.len() as f64;
    let mut grad = vec![0.0; net.param_count()];
    let mut surrogate = 0.0;
    let mut value_mse = 0.0;
    let mut entropy_sum = 0.0;
    let mut clipped_n = 0usize;
    let mut kl = 0.0;

    for ((tr, &ret), &adv) in batch.iter().zip(returns).zip(advantages) {
        let fwd = net.forward(&tr.state)?;
        let logp = action_logp(&fwd.logits, &tr.action);
        let ratio = (logp - tr.logp_old).exp();
        let ent = policy_entropy(&fwd.logits);
        let surr = clipped_surrogate(ratio, adv, cfg.clip);
        let verr = fwd.value - ret;

        surrogate += surr;
        value_mse += verr * verr;
        entropy_sum += ent;
        kl += tr.logp_old - logp;
        let unclipped_active = ratio * adv <= ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * adv;
        if !unclipped_active {
            clipped_n += 1;
        }

        // d(loss)/dlogits for this sample, scaled by 1/n
        let mut dlogits = vec![0.0; fwd.logits.len()];
        // surrogate branch: d(-ratio*adv)/dlogp = -ratio*adv when the
        // unclipped term is the active min, else 0
        let dlogp_coef = if unclipped_active { -ratio * adv / n } else { 0.0 };
        for (k, &a) in tr.action.iter().enumerate() {
            let z = &fwd.logits[3 * k..3 * k + 3];
            let p = softmax3(z);
            let ls = log_softmax3(z);
            let site_h = -(p[0] * ls[0] + p[1] * ls[1] + p[2] * ls[2]);
            let ai = (a + 1) as usize;
            for j in 0..3 {
                let onehot = if j == ai { 1.0 } else { 0.0 };
                // dlogp/dz_j = onehot - p_j
                let mut d = dlogp_coef * (onehot - p[j]);
                // dH/dz_j = -p_j (log p_j + H); loss carries -entropy_weight*H
                d += cfg.entropy_weight / n * p[j] * (ls[j] + site_h);
                dlogits[3 * k + j] = d;
            }
        }
        let dvalue = cfg.value_coef * 2.0 * verr / n;
        net.backward(&fwd, &dlogits, dvalue, &mut grad);
    }

    let parts = LossParts {
        total: -surrogate / n + cfg.value_coef * value_mse / n - cfg.entropy_weight * entropy_sum / n,
        surrogate: surrogate / n,
        value_mse: value_mse / n,
        entropy: entropy_sum / n,
        clip_fraction: clipped_n as f64 / n,
        approx_kl: kl / n,
    };
    if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericFault(format!(
            "non-finite update (surrogate {}, value mse {}, entropy {}, mean advantage {})",
            parts.surrogate,
            parts.value_mse,
            parts.entropy,
            advantages.iter().sum::<f64>() / n
        )));
    }
    Ok((parts, grad))
}

/// Runs `cfg.epochs` gradient passes over one collected batch.
///
/// Returns and advantages are computed once against the pre-update
/// value estimates and stay fixed across epochs.
pub fn ppo_update(
    net: &mut PolicyValueNet,
    opt: &mut Adam,
    batch: &[Transition],
    cfg: &PpoConfig,
) -> Result<UpdateStats> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty rollout batch".into()));
    }
    let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
    let dones: Vec<bool> = batch.iter().map(|t| t.done).collect();
    let returns = discounted_returns(&rewards, &dones, cfg.discount);
    let mut advantages = Vec::with_capacity(batch.len());
    for (tr, &ret) in batch.iter().zip(&returns) {
        advantages.push(ret - net.forward(&tr.state)?.value);
    }

    let n = batch.len() as f64;
    let mut stats = UpdateStats {
        first_surrogate: 0.0,
        mean_advantage: advantages.iter().sum::<f64>() / n,
        surrogate: 0.0,
        value_mse: 0.0,
        entropy: 0.0,
        clip_fraction: 0.0,
        approx_kl: 0.0,
    };
    for epoch in 0..cfg.epochs {
        let (parts, grad) = ppo_loss_and_grad(net, batch, &returns, &advantages, cfg)?;
        if epoch == 0 {
            stats.first_surrogate = parts.surrogate;
        }
        stats.surrogate += parts.surrogate / cfg.epochs as f64;
        stats.value_mse += parts.value_mse / cfg.epochs as f64;
        stats.entropy += parts.entropy / cfg.epochs as f64;
        stats.clip_fraction += parts.clip_fraction / cfg.epochs as f64;
        stats.approx_kl += parts.approx_kl / cfg.epochs as f64;
        opt.step(&mut net.params, &grad);
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::net::NetConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_cfg() -> NetConfig {
        NetConfig {
            in_channels: 2,
            h: 2,
            w: 2,
            n_sites: 2,
            conv1_channels: 2,
            conv2_channels: 3,
            fc_units: 4,
        }
    }

    fn rand_state<R: Rng>(cfg: &NetConfig, rng: &mut R) -> StateTensor {
        let mut x = StateTensor::zeros(cfg.in_channels, cfg.h, cfg.w);
        for v in &mut x.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        x
    }

    fn make_batch(net: &PolicyValueNet, len: usize, seed: u64) -> Vec<Transition> {
        let cfg = net.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len)
            .map(|i| {
                let state = rand_state(&cfg, &mut rng);
                let fwd = net.forward(&state).unwrap();
                let action = sample_action(&fwd.logits, &mut rng);
                let logp_old = action_logp(&fwd.logits, &action);
                Transition {
                    state,
                    action,
                    logp_old,
                    reward: rng.gen_range(-1.0..1.0),
                    done: i % 5 == 4,
                }
            })
            .collect()
    }

    #[test]
    fn returns_reset_at_episode_ends() {
        let r = [1.0, 2.0, 3.0, 4.0];
        let d = [false, true, false, false];
        let g = 0.5;
        let out = discounted_returns(&r, &d, g);
        assert!((out[3] - 4.0).abs() < 1e-15);
        assert!((out[2] - (3.0 + 0.5 * 4.0)).abs() < 1e-15);
        assert!((out[1] - 2.0).abs() < 1e-15); // episode boundary
        assert!((out[0] - (1.0 + 0.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn surrogate_clip_fixtures() {
        let e = 0.2;
        // ratio 1: clip inactive, surrogate equals the advantage
        assert_eq!(clipped_surrogate(1.0, 0.7, e), 0.7);
        assert_eq!(clipped_surrogate(1.0, -0.3, e), -0.3);
        // positive advantage, ratio beyond 1+eps: clipped
        let s = clipped_surrogate(1.0 + 2.0 * e, 2.0, e);
        assert!((s - (1.0 + e) * 2.0).abs() < 1e-15);
        // negative advantage, ratio below 1-eps: pessimistic min picks
        // the clipped (more negative) branch
        let s = clipped_surrogate(1.0 - 2.0 * e, -1.0, e);
        assert!((s - (1.0 - e) * -1.0).abs() < 1e-15);
    }

    #[test]
    fn factorized_logp_is_sum_of_site_terms() {
        let logits = vec![0.3, -0.1, 0.9, -0.5, 0.0, 0.2];
        let action = vec![1i8, -1];
        let direct = log_softmax3(&logits[0..3])[2] + log_softmax3(&logits[3..6])[0];
        assert!((action_logp(&logits, &action) - direct).abs() < 1e-15);
    }

    #[test]
    fn zero_net_is_uniform() {
        let cfg = tiny_cfg();
        let net = PolicyValueNet::zeroed(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fwd = net.forward(&rand_state(&cfg, &mut rng)).unwrap();
        let lp = action_logp(&fwd.logits, &[0, 1]);
        assert!((lp - 2.0 * (1.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((policy_entropy(&fwd.logits) - 2.0 * 3.0f64.ln()).abs() < 1e-12);
        // sampling is roughly uniform
        let mut counts = [0usize; 3];
        for _ in 0..3000 {
            for a in sample_action(&fwd.logits, &mut rng) {
                counts[(a + 1) as usize] += 1;
            }
        }
        for c in counts {
            assert!((c as f64 / 6000.0 - 1.0 / 3.0).abs() < 0.05, "{counts:?}");
        }
    }

    #[test]
    fn loss_gradient_matches_central_differences() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = PolicyValueNet::new(cfg, &mut rng).unwrap();
        let batch = make_batch(&net, 6, 12);
        let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
        let dones: Vec<bool> = batch.iter().map(|t| t.done).collect();
        let pcfg = PpoConfig {
            rollout: 6,
            ..PpoConfig::default()
        };
        let returns = discounted_returns(&rewards, &dones, pcfg.discount);
        let advantages: Vec<f64> = batch
            .iter()
            .zip(&returns)
            .map(|(t, &r)| r - net.forward(&t.state).unwrap().value)
            .collect();
        // nudge parameters so ratios leave 1 and both clip branches occur
        for p in net.params.iter_mut() {
            *p += 0.01 * (*p).signum();
        }
        let (_, grad) = ppo_loss_and_grad(&net, &batch, &returns, &advantages, &pcfg).unwrap();

        let h = 1e-6;
        let mut worst = 0.0f64;
        for i in 0..net.param_count() {
            let orig = net.params[i];
            net.params[i] = orig + h;
            let up = ppo_loss_and_grad(&net, &batch, &returns, &advantages, &pcfg)
                .unwrap()
                .0
                .total;
            net.params[i] = orig - h;
            let dn = ppo_loss_and_grad(&net, &batch, &returns, &advantages, &pcfg)
                .unwrap()
                .0
                .total;
            net.params[i] = orig;
            let fd = (up - dn) / (2.0 * h);
            let denom = fd.abs().max(grad[i].abs()).max(1e-7);
            worst = worst.max((fd - grad[i]).abs() / denom);
        }
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }

    #[test]
    fn first_pass_ratio_is_one_and_surrogate_equals_mean_advantage() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut net = PolicyValueNet::new(cfg, &mut rng).unwrap();
        let batch = make_batch(&net, 8, 22);
        let mut opt = Adam::new(net.param_count(), 1e-3);
        let stats = ppo_update(&mut net, &mut opt, &batch, &PpoConfig::default()).unwrap();
        assert!(
            (stats.first_surrogate - stats.mean_advantage).abs() < 1e-10,
            "first-pass surrogate {} vs mean advantage {}",
            stats.first_surrogate,
            stats.mean_advantage
        );
    }

    #[test]
    fn zero_advantages_leave_policy_head_untouched() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let net = PolicyValueNet::new(cfg, &mut rng).unwrap();
        // rewards/dones arranged so returns equal the value predictions:
        // easiest is to zero advantages directly through the loss API
        let batch = make_batch(&net, 5, 32);
        let returns: Vec<f64> = batch
            .iter()
            .map(|t| net.forward(&t.state).unwrap().value)
            .collect();
        let advantages = vec![0.0; batch.len()];
        let pcfg = PpoConfig {
            entropy_weight: 0.0,
            ..PpoConfig::default()
        };
        let (_, grad) = ppo_loss_and_grad(&net, &batch, &returns, &advantages, &pcfg).unwrap();
        for name in ["pol_w", "pol_b"] {
            let s = net.segment(name);
            assert!(
                grad[s.offset..s.offset + s.len()].iter().all(|&g| g == 0.0),
                "{name} surrogate gradient should vanish"
            );
        }
        // value path still carries signal when returns differ
        let (_, grad) =
            ppo_loss_and_grad(&net, &batch, &vec![1.0; batch.len()], &advantages, &pcfg).unwrap();
        let s = net.segment("val_w");
        assert!(grad[s.offset..s.offset + s.len()].iter().any(|&g| g != 0.0));
    }

    #[test]
    fn huge_clip_one_epoch_equals_plain_policy_gradient() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let net0 = PolicyValueNet::new(cfg, &mut rng).unwrap();
        let batch = make_batch(&net0, 10, 42);
        let pcfg = PpoConfig {
            clip: 1e18, // clip disabled; bypasses validate() on purpose
            epochs: 1,
            entropy_weight: 0.0,
            ..PpoConfig::default()
        };
        let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
        let dones: Vec<bool> = batch.iter().map(|t| t.done).collect();
        let returns = discounted_returns(&rewards, &dones, pcfg.discount);

        // reference: vanilla policy gradient of -mean(logp * adv) plus
        // the value loss, assembled without any ratio machinery
        let mut pg = vec![0.0; net0.param_count()];
        let n = batch.len() as f64;
        let mut advantages = Vec::new();
        for (tr, &ret) in batch.iter().zip(&returns) {
            advantages.push(ret - net0.forward(&tr.state).unwrap().value);
        }
        for ((tr, &ret), &adv) in batch.iter().zip(&returns).zip(&advantages) {
            let fwd = net0.forward(&tr.state).unwrap();
            let mut dlogits = vec![0.0; fwd.logits.len()];
            for (k, &a) in tr.action.iter().enumerate() {
                let p = softmax3(&fwd.logits[3 * k..3 * k + 3]);
                let ai = (a + 1) as usize;
                for j in 0..3 {
                    let onehot = if j == ai { 1.0 } else { 0.0 };
                    dlogits[3 * k + j] = -adv / n * (onehot - p[j]);
                }
            }
            let dvalue = pcfg.value_coef * 2.0 * (fwd.value - ret) / n;
            net0.backward(&fwd, &dlogits, dvalue, &mut pg);
        }
        let mut ref_net = net0.clone();
        let mut ref_opt = Adam::new(ref_net.param_count(), pcfg.lr);
        ref_opt.step(&mut ref_net.params, &pg);

        let mut ppo_net = net0.clone();
        let mut ppo_opt = Adam::new(ppo_net.param_count(), pcfg.lr);
        ppo_update(&mut ppo_net, &mut ppo_opt, &batch, &pcfg).unwrap();

        let worst = ref_net
            .params
            .iter()
            .zip(&ppo_net.params)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-10, "parameter divergence {worst}");
    }

    #[test]
    fn non_finite_parameters_abort_with_numeric_fault() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let mut net = PolicyValueNet::new(cfg, &mut rng).unwrap();
        let batch = make_batch(&net, 4, 52);
        net.params[0] = f64::NAN;
        let mut opt = Adam::new(net.param_count(), 1e-3);
        assert!(matches!(
            ppo_update(&mut net, &mut opt, &batch, &PpoConfig::default()),
            Err(Error::NumericFault(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        for bad in [
            PpoConfig {
                clip: 0.0,
                ..PpoConfig::default()
            },
            PpoConfig {
                clip: 1.0,
                ..PpoConfig::default()
            },
            PpoConfig {
                discount: 0.0,
                ..PpoConfig::default()
            },
            PpoConfig {
                epochs: 0,
                ..PpoConfig::default()
            },
            PpoConfig {
                lr: -1.0,
                ..PpoConfig::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
