//! PPO with factored discrete actions over per-parameter grid moves.
//!
//! The policy emits three logits per parameter ({-1, 0, +1} step);
//! actions factorize, so a joint log-probability is the sum over
//! parameters. Policy and value are separate tanh MLPs trained with
//! clipped-surrogate updates on GAE advantages. Everything runs on
//! explicit hand-written adjoints like the rest of the crate, and the
//! whole loss is finite-difference checked in the tests.

use serde::{Deserialize, Serialize};

use crate::model::SurrogateCheckpoint;
use crate::numerics::{Adam, AdamConfig, Linear, Parameter, Rng, Route, Tensor};

use super::{EnvCore, SizingError, SizingTask};

const POLICY_SALT: u64 = 0x706f_6c69;
const COLLECT_SALT: u64 = 0x636f_6c6c;

/// PPO hyperparameters. The environment-side knobs (episode horizon,
/// success bonus) live here too since they shape the returns the
/// optimizer sees.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PPOConfig {
    /// Width of both hidden layers in the policy and value networks.
    pub hidden: usize,
    pub clip: f64,
    pub discount: f64,
    pub gae_lambda: f64,
    /// Episodes collected per update.
    pub rollout_episodes: usize,
    pub epochs_per_update: usize,
    pub entropy_bonus: f64,
    pub lr: f64,
    /// Steps before an episode is truncated.
    pub horizon: usize,
    /// Added to the reward on the step that satisfies all constraints.
    pub success_bonus: f64,
}

impl Default for PPOConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            clip: 0.2,
            discount: 0.99,
            gae_lambda: 0.95,
            rollout_episodes: 16,
            epochs_per_update: 4,
            entropy_bonus: 0.01,
            lr: 3e-4,
            horizon: 25,
            success_bonus: 10.0,
        }
    }
}

impl PPOConfig {
    pub fn validate(&self) -> Result<(), SizingError> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(SizingError::BadTask(format!(
                "clip ratio {} outside (0, 1)",
                self.clip
            )));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(SizingError::BadTask(format!(
                "discount {} outside (0, 1]",
                self.discount
            )));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(SizingError::BadTask(format!(
                "GAE lambda {} outside [0, 1]",
                self.gae_lambda
            )));
        }
        if self.horizon == 0 || self.rollout_episodes == 0 || self.epochs_per_update == 0 {
            return Err(SizingError::BadTask(
                "horizon, rollout episodes, and epochs must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Policy and value networks for one task's observation/action shape.
#[derive(Debug, Clone)]
pub struct Policy {
    pub pi: Vec<Linear>,
    pub vf: Vec<Linear>,
    pub obs_dim: usize,
    pub n_params: usize,
}

impl Policy {
    pub fn new(obs_dim: usize, n_params: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = Rng::child(seed, POLICY_SALT);
        let mlp = |rng: &mut Rng, out: usize, head_std: f64| {
            vec![
                Linear::new(obs_dim, hidden, (1.0 / obs_dim as f64).sqrt(), rng),
                Linear::new(hidden, hidden, (1.0 / hidden as f64).sqrt(), rng),
                Linear::new(hidden, out, head_std, rng),
            ]
        };
        // A tiny head keeps the initial policy near uniform so early
        // probability ratios hover around 1.
        let pi = mlp(&mut rng, 3 * n_params, 0.01);
        let vf = mlp(&mut rng, 1, (1.0 / hidden as f64).sqrt());
        Self {
            pi,
            vf,
            obs_dim,
            n_params,
        }
    }

    pub fn param_slots(&mut self) -> Vec<(String, &mut Parameter)> {
        let mut out = Vec::new();
        for (tag, net) in [("pi", &mut self.pi), ("vf", &mut self.vf)] {
            for (l, lin) in net.iter_mut().enumerate() {
                out.push((format!("{tag}.layer{l}.weight"), &mut lin.weight));
                out.push((format!("{tag}.layer{l}.bias"), &mut lin.bias));
            }
        }
        out
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.param_slots() {
            p.zero_grad();
        }
    }

    pub fn logits(&self, obs: &Tensor) -> Tensor {
        mlp_forward(&self.pi, obs).0
    }

    pub fn values(&self, obs: &Tensor) -> Vec<f64> {
        mlp_forward(&self.vf, obs).0.data().to_vec()
    }
}

/// Post-activation inputs of every layer, kept for the backward pass.
struct MlpTrace {
    xs: Vec<Tensor>,
}

fn mlp_forward(layers: &[Linear], x: &Tensor) -> (Tensor, MlpTrace) {
    let mut xs = vec![x.clone()];
    let mut h = x.clone();
    for (l, lin) in layers.iter().enumerate() {
        h = lin.forward(&h, Route::Fast);
        if l + 1 < layers.len() {
            for v in h.data_mut().iter_mut() {
                *v = v.tanh();
            }
            xs.push(h.clone());
        }
    }
    (h, MlpTrace { xs })
}

fn mlp_backward(layers: &mut [Linear], trace: &MlpTrace, d_out: &Tensor) {
    let mut dy = d_out.clone();
    for l in (0..layers.len()).rev() {
        let mut dx = layers[l].backward(&trace.xs[l], &dy);
        if l > 0 {
            // The stored input of this layer is tanh of the previous
            // pre-activation; its derivative is 1 - tanh^2.
            for (g, &a) in dx.data_mut().iter_mut().zip(trace.xs[l].data()) {
                *g *= 1.0 - a * a;
            }
        }
        dy = dx;
    }
}

/// Per-group softmax over chunks of three logits.
/// Returns probabilities (same shape) and per-row (log-prob of the
/// taken action, entropy summed over groups).
fn softmax_stats(logits: &Tensor, actions: &[usize], n_params: usize) -> (Tensor, Vec<f64>, Vec<f64>) {
    let rows = logits.rows();
    let mut probs = Tensor::zeros(&[rows, 3 * n_params]);
    let mut logps = vec![0.0; rows];
    let mut entropies = vec![0.0; rows];
    for r in 0..rows {
        let row = logits.row(r);
        let p_row = probs.row_mut(r);
        for g in 0..n_params {
            let z = &row[3 * g..3 * g + 3];
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps = [(z[0] - m).exp(), (z[1] - m).exp(), (z[2] - m).exp()];
            let total: f64 = exps.iter().sum();
            let mut h = 0.0;
            for i in 0..3 {
                let p = exps[i] / total;
                p_row[3 * g + i] = p;
                if p > 0.0 {
                    h -= p * p.ln();
                }
            }
            let a = actions[r * n_params + g];
            logps[r] += (z[a] - m) - total.ln();
            entropies[r] += h;
        }
    }
    (probs, logps, entropies)
}

fn sample_group(probs: &[f64], rng: &mut Rng) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Samples one action vector (categories in 0..3 per parameter) from a
/// logits row. Returns the actions and their joint log-probability.
pub fn sample_actions(logits_row: &[f64], n_params: usize, rng: &mut Rng) -> (Vec<usize>, f64) {
    let mut actions = Vec::with_capacity(n_params);
    let mut logp = 0.0;
    for g in 0..n_params {
        let z = &logits_row[3 * g..3 * g + 3];
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps = [(z[0] - m).exp(), (z[1] - m).exp(), (z[2] - m).exp()];
        let total: f64 = exps.iter().sum();
        let probs = [exps[0] / total, exps[1] / total, exps[2] / total];
        let a = sample_group(&probs, rng);
        logp += (z[a] - m) - total.ln();
        actions.push(a);
    }
    (actions, logp)
}

/// Highest-probability action per parameter.
pub fn greedy_actions(logits_row: &[f64], n_params: usize) -> Vec<usize> {
    (0..n_params)
        .map(|g| {
            let z = &logits_row[3 * g..3 * g + 3];
            let mut best = 0;
            for i in 1..3 {
                if z[i] > z[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

pub fn moves_from(actions: &[usize]) -> Vec<i8> {
    actions.iter().map(|&a| a as i8 - 1).collect()
}

/// One term of the clipped surrogate objective. Returns the objective
/// value and whether the unclipped branch carries the gradient.
pub fn clipped_objective(ratio: f64, advantage: f64, clip: f64) -> (f64, bool) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (unclipped, true)
    } else {
        (clipped, false)
    }
}

/// Generalized advantage estimation over one episode.
/// `terminal_value` is the value bootstrap past the last step: zero
/// for terminal success, V(s_T) for horizon truncation.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    terminal_value: f64,
    discount: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let t = rewards.len();
    assert_eq!(values.len(), t, "one value per reward");
    let mut advantages = vec![0.0; t];
    let mut acc = 0.0;
    for i in (0..t).rev() {
        let next_v = if i + 1 < t { values[i + 1] } else { terminal_value };
        let delta = rewards[i] + discount * next_v - values[i];
        acc = delta + discount * lambda * acc;
        advantages[i] = acc;
    }
    let returns: Vec<f64> = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

/// Flattened transitions from a set of episodes.
pub struct Batch {
    pub obs: Tensor,
    /// Flattened action categories, `n_params` per transition row.
    pub actions: Vec<usize>,
    pub logp_old: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Mean undiscounted episode return, the training diagnostic.
    pub mean_return: f64,
}

/// Accumulates one episode's transitions in collection order.
pub struct EpisodeSink {
    obs: Vec<Vec<f64>>,
    actions: Vec<usize>,
    logp: Vec<f64>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    terminal_value: f64,
    total_reward: f64,
}

impl EpisodeSink {
    #[allow(clippy::new_without_default)]
    pub fn new() -> Self {
        Self {
            obs: Vec::new(),
            actions: Vec::new(),
            logp: Vec::new(),
            rewards: Vec::new(),
            values: Vec::new(),
            terminal_value: 0.0,
            total_reward: 0.0,
        }
    }

    pub fn push(
        &mut self,
        obs_row: Vec<f64>,
        actions: Vec<usize>,
        logp: f64,
        reward: f64,
        value: f64,
    ) {
        self.obs.push(obs_row);
        self.actions.extend(actions);
        self.logp.push(logp);
        self.rewards.push(reward);
        self.values.push(value);
        self.total_reward += reward;
    }

    /// Marks the episode as horizon-truncated, bootstrapping the tail
    /// from the critic's estimate of the final state.
    pub fn truncate_with(&mut self, value: f64) {
        self.terminal_value = value;
    }
}

/// Flattens finished episodes into one update batch, running GAE per
/// episode and normalizing advantages across the whole batch.
pub fn batch_from_sinks(
    episodes: Vec<EpisodeSink>,
    obs_dim: usize,
    config: &PPOConfig,
) -> Batch {
    let total: usize = episodes.iter().map(|e| e.rewards.len()).sum();
    let mut obs = Vec::with_capacity(total * obs_dim);
    let mut actions = Vec::new();
    let mut logp_old = Vec::with_capacity(total);
    let mut advantages = Vec::with_capacity(total);
    let mut returns = Vec::with_capacity(total);
    let mut return_sum = 0.0;
    let n_eps = episodes.len().max(1);
    for ep in &episodes {
        let (adv, ret) = gae(
            &ep.rewards,
            &ep.values,
            ep.terminal_value,
            config.discount,
            config.gae_lambda,
        );
        for row in &ep.obs {
            obs.extend_from_slice(row);
        }
        actions.extend_from_slice(&ep.actions);
        logp_old.extend_from_slice(&ep.logp);
        advantages.extend(adv);
        returns.extend(ret);
        return_sum += ep.total_reward;
    }
    // Normalized advantages keep the update scale independent of the
    // reward magnitude.
    let n = advantages.len().max(1) as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for a in advantages.iter_mut() {
        *a = (*a - mean) / std;
    }
    Batch {
        obs: Tensor::from_vec(&[total, obs_dim], obs).expect("observation matrix"),
        actions,
        logp_old,
        advantages,
        returns,
        mean_return: return_sum / n_eps as f64,
    }
}

/// Steps a set of surrogate-backed episodes in lockstep, batching the
/// decoder rollouts across all still-running episodes.
pub fn collect_surrogate_batch(
    policy: &Policy,
    ckpt: &SurrogateCheckpoint,
    task: &SizingTask,
    config: &PPOConfig,
    rng: &mut Rng,
) -> Result<Batch, SizingError> {
    let n_eps = config.rollout_episodes;
    let mut cores = Vec::with_capacity(n_eps);
    let mut sinks: Vec<EpisodeSink> = (0..n_eps).map(|_| EpisodeSink::new()).collect();
    let starts: Vec<Vec<usize>> = (0..n_eps).map(|_| task.random_indices(rng)).collect();
    let start_designs: Vec<Vec<f64>> = starts.iter().map(|idx| task.design_of(idx)).collect();
    let rollouts = ckpt.rollout_batch(&start_designs, &[], Route::Fast)?;
    for (idx, report) in starts.into_iter().zip(rollouts.reports) {
        let mut core = EnvCore::new(task.clone(), config.horizon, config.success_bonus)?;
        core.reset_with(idx, &report.means);
        cores.push(core);
    }

    let mut alive: Vec<usize> = (0..n_eps).collect();
    while !alive.is_empty() {
        let obs_rows: Vec<Vec<f64>> = alive.iter().map(|&e| cores[e].observation()).collect();
        let obs = Tensor::from_vec(
            &[alive.len(), policy.obs_dim],
            obs_rows.concat(),
        )
        .expect("observation rows");
        let logits = policy.logits(&obs);
        let values = policy.values(&obs);

        let mut sampled = Vec::with_capacity(alive.len());
        for row in 0..alive.len() {
            let (actions, logp) = sample_actions(logits.row(row), policy.n_params, rng);
            sampled.push((actions, logp));
        }

        let next_indices: Vec<Vec<usize>> = alive
            .iter()
            .zip(&sampled)
            .map(|(&e, (actions, _))| cores[e].apply_action(&moves_from(actions)))
            .collect();
        let designs: Vec<Vec<f64>> = next_indices.iter().map(|idx| task.design_of(idx)).collect();
        let rollouts = ckpt.rollout_batch(&designs, &[], Route::Fast)?;

        let mut still = Vec::with_capacity(alive.len());
        for (row, ((&e, idx), report)) in alive
            .iter()
            .zip(next_indices)
            .zip(rollouts.reports)
            .enumerate()
        {
            let step = cores[e].absorb(idx, &report.means);
            let (actions, logp) = sampled[row].clone();
            sinks[e].push(obs_rows[row].clone(), actions, logp, step.reward, values[row]);
            if step.done {
                // Success ends the episode with no future value; a
                // horizon truncation bootstraps from the critic.
                if !step.met {
                    let final_obs = Tensor::from_vec(
                        &[1, policy.obs_dim],
                        cores[e].observation(),
                    )
                    .expect("final observation");
                    sinks[e].truncate_with(policy.values(&final_obs)[0]);
                }
            } else {
                still.push(e);
            }
        }
        alive = still;
    }
    Ok(batch_from_sinks(sinks, policy.obs_dim, config))
}

/// Loss components of one update epoch.
#[derive(Debug, Clone, Copy)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Fraction of transitions where the clip bound carried the
    /// objective instead of the raw ratio.
    pub clip_fraction: f64,
}

/// One clipped-surrogate epoch over the whole batch, updating both
/// networks in place.
pub fn ppo_update(
    policy: &mut Policy,
    batch: &Batch,
    config: &PPOConfig,
    adam_pi: &mut Adam,
    adam_vf: &mut Adam,
) -> Result<UpdateStats, SizingError> {
    let rows = batch.obs.rows();
    let n = policy.n_params;
    let (logits, pi_trace) = mlp_forward(&policy.pi, &batch.obs);
    let (v_out, vf_trace) = mlp_forward(&policy.vf, &batch.obs);
    let (probs, logp_new, entropies) = softmax_stats(&logits, &batch.actions, n);

    let mut d_logits = Tensor::zeros(logits.shape());
    let mut policy_loss = 0.0;
    let mut clipped_rows = 0usize;
    let scale = 1.0 / rows as f64;
    for r in 0..rows {
        let ratio = (logp_new[r] - batch.logp_old[r]).exp();
        let adv = batch.advantages[r];
        let (surr, unclipped_active) = clipped_objective(ratio, adv, config.clip);
        policy_loss -= surr * scale;
        if !unclipped_active {
            clipped_rows += 1;
        }
        let d_row = d_logits.row_mut(r);
        let p_row = probs.row(r);
        // d(-surr)/dlogit: through ratio when the unclipped branch is
        // active, zero when the clip bound absorbs it. The entropy
        // bonus always contributes.
        let coef = if unclipped_active { -ratio * adv * scale } else { 0.0 };
        for g in 0..n {
            let a = batch.actions[r * n + g];
            let group = &p_row[3 * g..3 * g + 3];
            let mut h = 0.0;
            for &p in group {
                if p > 0.0 {
                    h -= p * p.ln();
                }
            }
            for i in 0..3 {
                let p = group[i];
                let onehot = if i == a { 1.0 } else { 0.0 };
                let mut d = coef * (onehot - p);
                if p > 0.0 {
                    d += config.entropy_bonus * scale * p * (p.ln() + h);
                }
                d_row[3 * g + i] = d;
            }
        }
    }
    let entropy = entropies.iter().sum::<f64>() * scale;
    policy_loss -= config.entropy_bonus * entropy;

    let mut d_v = Tensor::zeros(v_out.shape());
    let mut value_loss = 0.0;
    for r in 0..rows {
        let err = v_out.at(r, 0) - batch.returns[r];
        value_loss += err * err * scale;
        d_v.set(r, 0, 2.0 * err * scale);
    }

    if !policy_loss.is_finite() || !value_loss.is_finite() {
        return Err(SizingError::PolicyDiverged {
            policy_loss,
            value_loss,
        });
    }

    policy.zero_grads();
    mlp_backward(&mut policy.pi, &pi_trace, &d_logits);
    mlp_backward(&mut policy.vf, &vf_trace, &d_v);
    let mut pi_params: Vec<&mut Parameter> = policy
        .pi
        .iter_mut()
        .flat_map(|l| [&mut l.weight, &mut l.bias])
        .collect();
    adam_pi.step(config.lr, &mut pi_params);
    let mut vf_params: Vec<&mut Parameter> = policy
        .vf
        .iter_mut()
        .flat_map(|l| [&mut l.weight, &mut l.bias])
        .collect();
    adam_vf.step(config.lr, &mut vf_params);

    Ok(UpdateStats {
        policy_loss,
        value_loss,
        entropy,
        clip_fraction: clipped_rows as f64 * scale,
    })
}

/// Trains a policy purely inside the surrogate. Touches no real
/// simulations by construction: nothing here holds a simulator.
pub fn ppo_train_in_surrogate(
    task: &SizingTask,
    ckpt: &SurrogateCheckpoint,
    config: &PPOConfig,
    iterations: usize,
) -> Result<Policy, SizingError> {
    config.validate()?;
    task.validate()?;
    let mut policy = new_policy_for(task, config)?;
    let mut adam_pi = Adam::new(AdamConfig::default());
    let mut adam_vf = Adam::new(AdamConfig::default());
    let mut rng = Rng::child(task.seed, COLLECT_SALT);
    for _ in 0..iterations {
        let batch = collect_surrogate_batch(&policy, ckpt, task, config, &mut rng)?;
        for _ in 0..config.epochs_per_update {
            ppo_update(&mut policy, &batch, config, &mut adam_pi, &mut adam_vf)?;
        }
    }
    Ok(policy)
}

/// Continues training an existing policy; used when the surrogate has
/// just been fine-tuned and the policy must adapt to it.
pub fn ppo_refresh(
    policy: &mut Policy,
    task: &SizingTask,
    ckpt: &SurrogateCheckpoint,
    config: &PPOConfig,
    iterations: usize,
    rng: &mut Rng,
) -> Result<(), SizingError> {
    let mut adam_pi = Adam::new(AdamConfig::default());
    let mut adam_vf = Adam::new(AdamConfig::default());
    for _ in 0..iterations {
        let batch = collect_surrogate_batch(policy, ckpt, task, config, rng)?;
        for _ in 0..config.epochs_per_update {
            ppo_update(policy, &batch, config, &mut adam_pi, &mut adam_vf)?;
        }
    }
    Ok(())
}

pub fn new_policy_for(task: &SizingTask, config: &PPOConfig) -> Result<Policy, SizingError> {
    task.validate()?;
    let topo = &task.topology;
    let obs_dim = topo.n_params() + 2 * topo.n_metrics();
    Ok(Policy::new(obs_dim, topo.n_params(), config.hidden, task.seed))
}

/// Mean undiscounted surrogate-episode return of a policy (greedy
/// decode) or of uniform-random actions when no policy is given.
/// Episode starts are drawn from `seed`, so two calls with the same
/// seed compare policies on identical starts.
pub fn evaluate_policy_return(
    policy: Option<&Policy>,
    ckpt: &SurrogateCheckpoint,
    task: &SizingTask,
    config: &PPOConfig,
    episodes: usize,
    seed: u64,
) -> Result<f64, SizingError> {
    let n = task.topology.n_params();
    // Starts and random actions come from separate streams so the
    // start sequence really is identical across paired calls.
    let mut start_rng = Rng::child(seed, 0x6576_616c);
    let mut act_rng = Rng::child(seed, 0x6163_7473);
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut core = EnvCore::new(task.clone(), config.horizon, config.success_bonus)?;
        let start = task.random_indices(&mut start_rng);
        let report = ckpt.rollout(&task.design_of(&start), &[])?;
        core.reset_with(start, &report.means);
        loop {
            let actions = match policy {
                Some(p) => {
                    let obs =
                        Tensor::from_vec(&[1, p.obs_dim], core.observation()).expect("obs row");
                    greedy_actions(p.logits(&obs).row(0), n)
                }
                None => (0..n).map(|_| act_rng.below(3)).collect(),
            };
            let idx = core.apply_action(&moves_from(&actions));
            let report = ckpt.rollout(&task.design_of(&idx), &[])?;
            let step = core.absorb(idx, &report.means);
            total += step.reward;
            if step.done {
                break;
            }
        }
    }
    Ok(total / episodes.max(1) as f64)
}

/// A candidate endpoint produced by deploying the greedy policy inside
/// the surrogate: where the episode ended and what the surrogate's
/// uncertainty heads think of that point.
#[derive(Debug, Clone)]
pub struct Endpoint {
    pub indices: Vec<usize>,
    pub design: Vec<f64>,
    pub fom_mean: f64,
    pub fom_std: f64,
}

impl Endpoint {
    /// Optimistic score for a minimized figure of merit: mean minus
    /// beta standard deviations. Beta 0 reduces to the mean.
    pub fn score(&self, beta: f64) -> f64 {
        self.fom_mean - beta * self.fom_std
    }
}

/// Runs greedy episodes in the surrogate and returns their endpoints
/// with head-spread FoM statistics.
pub fn deploy_endpoints(
    policy: &Policy,
    ckpt: &SurrogateCheckpoint,
    task: &SizingTask,
    config: &PPOConfig,
    episodes: usize,
    rng: &mut Rng,
) -> Result<Vec<Endpoint>, SizingError> {
    let spec = &task.fom;
    let n = task.topology.n_params();
    let mut endpoints = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut core = EnvCore::new(task.clone(), config.horizon, config.success_bonus)?;
        let start = task.random_indices(rng);
        let report = ckpt.rollout(&task.design_of(&start), &[])?;
        core.reset_with(start, &report.means);
        let last_report = loop {
            let obs = Tensor::from_vec(&[1, policy.obs_dim], core.observation()).expect("obs row");
            let actions = greedy_actions(policy.logits(&obs).row(0), n);
            let idx = core.apply_action(&moves_from(&actions));
            let report = ckpt.rollout(&task.design_of(&idx), &[])?;
            let step = core.absorb(idx, &report.means);
            if step.done {
                break report;
            }
        };
        let indices = core.indices().to_vec();
        let design = task.design_of(&indices);
        let mut foms = Vec::with_capacity(last_report.per_head.len());
        for head in &last_report.per_head {
            let perf = crate::circuits::PerformanceVector {
                values: head.clone(),
            };
            foms.push(crate::circuits::fom(spec, &perf)?);
        }
        let k = foms.len() as f64;
        let mean = foms.iter().sum::<f64>() / k;
        let var = foms.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / k;
        endpoints.push(Endpoint {
            indices,
            design,
            fom_mean: mean,
            fom_std: var.sqrt(),
        });
    }
    Ok(endpoints)
}
