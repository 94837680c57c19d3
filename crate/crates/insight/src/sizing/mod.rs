//! Device sizing as reinforcement learning: a PPO agent walks a
//! parameter grid, trained inside the surrogate and checked against
//! the real oracle under a strict simulation budget.
//!
//! Two regimes share one environment. The model-based loop trains the
//! policy entirely on surrogate predictions and spends real
//! simulations only to verify candidate endpoints, fine-tuning the
//! surrogate on every miss. The baseline trains the same PPO agent
//! directly on the oracle, paying one real simulation per step. All
//! real evaluations flow through [`RealSimulator`], the single choke
//! point that charges the budget counter.

pub mod ppo;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuits::{
    constraints_met, evaluate_oracle, fom, CircuitError, CircuitTopology, DesignPoint, FoMSpec,
    PerformanceVector, TechnologyProfile,
};
use crate::data::Dataset;
use crate::model::{ModelError, SurrogateCheckpoint};
use crate::numerics::{Adam, AdamConfig, Rng, Tensor};
use crate::train::{TrainError, TrainRunConfig};

pub use ppo::{
    clipped_objective, collect_surrogate_batch, deploy_endpoints, evaluate_policy_return,
    gae, greedy_actions, moves_from, new_policy_for, ppo_refresh, ppo_train_in_surrogate,
    ppo_update, sample_actions, Batch, Endpoint, PPOConfig, Policy, UpdateStats,
};

const DEPLOY_SALT: u64 = 0x6465_706c;
const REFRESH_SALT: u64 = 0x7266_7273;
const MIX_SALT: u64 = 0x6d69_7878;
const BASELINE_SALT: u64 = 0x6261_7365;

#[derive(Debug, Error)]
pub enum SizingError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("real-simulation budget of {budget} exhausted")]
    BudgetExhausted { budget: u64 },
    #[error("bad sizing task: {0}")]
    BadTask(String),
    #[error("policy update diverged: policy loss {policy_loss}, value loss {value_loss}")]
    PolicyDiverged { policy_loss: f64, value_loss: f64 },
}

/// One sizing problem: a topology, a process, a figure of merit with
/// target thresholds, a search grid, and a budget of real simulations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizingTask {
    pub topology: CircuitTopology,
    pub technology: TechnologyProfile,
    pub fom: FoMSpec,
    /// Grid points per parameter; point `i` of parameter `p` sits at
    /// `lower + i * (upper - lower) / (count - 1)`, so the grid always
    /// stays inside the parameter bounds.
    pub grid: Vec<usize>,
    pub budget: u64,
    pub seed: u64,
}

impl SizingTask {
    pub fn validate(&self) -> Result<(), SizingError> {
        if self.budget == 0 {
            return Err(SizingError::BadTask("budget must be >= 1".into()));
        }
        if self.grid.len() != self.topology.n_params() {
            return Err(SizingError::BadTask(format!(
                "{} grid sizes for {} parameters",
                self.grid.len(),
                self.topology.n_params()
            )));
        }
        if let Some(p) = self.grid.iter().position(|&c| c < 2) {
            return Err(SizingError::BadTask(format!(
                "parameter {p} needs at least 2 grid points"
            )));
        }
        let m = self.topology.n_metrics();
        let mut indices = vec![self.fom.objective];
        indices.extend(self.fom.constraints.iter().map(|c| c.metric));
        if let Some(&bad) = indices.iter().find(|&&i| i >= m) {
            return Err(SizingError::BadTask(format!(
                "figure of merit references metric {bad}, schema has {m}"
            )));
        }
        Ok(())
    }

    /// Design values at the given grid indices.
    pub fn design_of(&self, indices: &[usize]) -> Vec<f64> {
        self.topology
            .params
            .iter()
            .zip(indices)
            .zip(&self.grid)
            .map(|((p, &i), &count)| {
                p.lower + i as f64 * (p.upper - p.lower) / (count - 1) as f64
            })
            .collect()
    }

    pub fn random_indices(&self, rng: &mut Rng) -> Vec<usize> {
        self.grid.iter().map(|&count| rng.below(count)).collect()
    }

    pub fn midpoint_indices(&self) -> Vec<usize> {
        self.grid.iter().map(|&count| count / 2).collect()
    }

    /// Reference anchor per metric for observation scaling: the first
    /// constraint threshold, the objective scale for the objective
    /// metric, zero for metrics the task never references.
    fn metric_anchors(&self) -> Vec<f64> {
        let m = self.topology.n_metrics();
        let mut anchors = vec![0.0; m];
        for c in self.fom.constraints.iter().rev() {
            anchors[c.metric] = c.threshold;
        }
        anchors[self.fom.objective] = self.fom.objective_scale;
        anchors
    }
}

/// Bounded relative distance of a value from an anchor, in [-1, 1].
/// Sign tells which side of the anchor the value sits on.
fn rel(value: f64, anchor: f64) -> f64 {
    (value - anchor) / (value.abs() + anchor.abs() + 1e-30)
}

/// Snapshot of an episode: grid position, where the metrics stand
/// relative to the targets, the (constant) encoded targets, and the
/// step count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub indices: Vec<usize>,
    pub metrics_norm: Vec<f64>,
    pub targets_norm: Vec<f64>,
    pub step: usize,
}

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
    /// Whether all constraints were met at the new point, according
    /// to whichever metric source drove the step.
    pub met: bool,
}

/// Grid-walking episode logic shared by the surrogate and oracle
/// environments. The caller supplies the metrics at each visited
/// design; everything else (clamping, reward, termination) is
/// identical on both sides, which is what makes the two step
/// operations comparable.
#[derive(Debug, Clone)]
pub struct EnvCore {
    pub task: SizingTask,
    horizon: usize,
    success_bonus: f64,
    anchors: Vec<f64>,
    state: EnvState,
    fom_now: f64,
    done: bool,
}

impl EnvCore {
    pub fn new(task: SizingTask, horizon: usize, success_bonus: f64) -> Result<Self, SizingError> {
        task.validate()?;
        let anchors = task.metric_anchors();
        let targets_norm: Vec<f64> = anchors.iter().map(|&a| rel(a, 0.0)).collect();
        let m = task.topology.n_metrics();
        Ok(Self {
            state: EnvState {
                indices: task.midpoint_indices(),
                metrics_norm: vec![0.0; m],
                targets_norm,
                step: 0,
            },
            anchors,
            task,
            horizon,
            success_bonus,
            fom_now: f64::INFINITY,
            done: false,
        })
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn indices(&self) -> &[usize] {
        &self.state.indices
    }

    pub fn design(&self) -> Vec<f64> {
        self.task.design_of(&self.state.indices)
    }

    pub fn fom_now(&self) -> f64 {
        self.fom_now
    }

    /// Starts an episode at the given grid point with its metrics.
    pub fn reset_with(&mut self, indices: Vec<usize>, metrics: &[f64]) -> EnvState {
        let perf = PerformanceVector {
            values: metrics.to_vec(),
        };
        self.fom_now = fom(&self.task.fom, &perf).expect("validated metric indices");
        self.state.indices = indices;
        self.state.metrics_norm = self.encode_metrics(metrics);
        self.state.step = 0;
        self.done = false;
        self.state.clone()
    }

    fn encode_metrics(&self, metrics: &[f64]) -> Vec<f64> {
        metrics
            .iter()
            .zip(&self.anchors)
            .map(|(&v, &a)| rel(v, a))
            .collect()
    }

    /// Flat observation for the policy: grid coordinates scaled to
    /// [-1, 1], then the metric and target encodings.
    pub fn observation(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(
            self.state.indices.len() + 2 * self.state.metrics_norm.len(),
        );
        for (&i, &count) in self.state.indices.iter().zip(&self.task.grid) {
            out.push(2.0 * i as f64 / (count - 1) as f64 - 1.0);
        }
        out.extend_from_slice(&self.state.metrics_norm);
        out.extend_from_slice(&self.state.targets_norm);
        out
    }

    /// Applies per-parameter moves of -1, 0, or +1 grid steps,
    /// clamping at the grid edges.
    pub fn apply_action(&self, action: &[i8]) -> Vec<usize> {
        assert_eq!(action.len(), self.state.indices.len(), "one move per parameter");
        self.state
            .indices
            .iter()
            .zip(action)
            .zip(&self.task.grid)
            .map(|((&i, &mv), &count)| {
                (i as i64 + mv as i64).clamp(0, count as i64 - 1) as usize
            })
            .collect()
    }

    /// Commits a step: the new grid point and the metrics measured
    /// there. Reward is the drop in figure of merit plus the success
    /// bonus when every constraint is satisfied; the episode ends on
    /// success or when the horizon runs out.
    pub fn absorb(&mut self, indices: Vec<usize>, metrics: &[f64]) -> StepOutcome {
        assert!(!self.done, "episode already finished");
        let perf = PerformanceVector {
            values: metrics.to_vec(),
        };
        let fom_new = fom(&self.task.fom, &perf).expect("validated metric indices");
        let met = constraints_met(&self.task.fom, &perf).expect("validated metric indices");
        let mut reward = self.fom_now - fom_new;
        if met {
            reward += self.success_bonus;
        }
        self.fom_now = fom_new;
        self.state.indices = indices;
        self.state.metrics_norm = self.encode_metrics(metrics);
        self.state.step += 1;
        self.done = met || self.state.step >= self.horizon;
        StepOutcome {
            state: self.state.clone(),
            reward,
            done: self.done,
            met,
        }
    }
}

/// Counts real oracle evaluations against a hard budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationCounter {
    budget: u64,
    used: u64,
}

impl SimulationCounter {
    pub fn new(budget: u64) -> Self {
        Self { budget, used: 0 }
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn remaining(&self) -> u64 {
        self.budget - self.used
    }

    fn charge(&mut self) -> Result<(), SizingError> {
        if self.used >= self.budget {
            return Err(SizingError::BudgetExhausted {
                budget: self.budget,
            });
        }
        self.used += 1;
        Ok(())
    }
}

/// The only path to the real oracle. Every evaluation charges the
/// counter exactly once before running, so the count and the number
/// of oracle calls cannot drift apart.
#[derive(Debug, Clone)]
pub struct RealSimulator {
    pub topology: CircuitTopology,
    pub technology: TechnologyProfile,
    counter: SimulationCounter,
}

impl RealSimulator {
    pub fn new(topology: CircuitTopology, technology: TechnologyProfile, budget: u64) -> Self {
        Self {
            topology,
            technology,
            counter: SimulationCounter::new(budget),
        }
    }

    pub fn counter(&self) -> &SimulationCounter {
        &self.counter
    }

    pub fn evaluate(&mut self, design: &[f64]) -> Result<PerformanceVector, SizingError> {
        self.counter.charge()?;
        let point = DesignPoint {
            values: design.to_vec(),
        };
        Ok(evaluate_oracle(&self.topology, &self.technology, &point)?)
    }
}

/// Episode environment whose metrics come from surrogate rollouts.
pub struct SurrogateEnv<'a> {
    pub core: EnvCore,
    pub ckpt: &'a SurrogateCheckpoint,
}

impl<'a> SurrogateEnv<'a> {
    pub fn new(
        task: SizingTask,
        ckpt: &'a SurrogateCheckpoint,
        horizon: usize,
        success_bonus: f64,
    ) -> Result<Self, SizingError> {
        Ok(Self {
            core: EnvCore::new(task, horizon, success_bonus)?,
            ckpt,
        })
    }

    pub fn reset(&mut self, indices: Vec<usize>) -> Result<EnvState, SizingError> {
        let design = self.core.task.design_of(&indices);
        let report = self.ckpt.rollout(&design, &[])?;
        Ok(self.core.reset_with(indices, &report.means))
    }
}

/// One surrogate-predicted step; costs zero real simulations.
pub fn surrogate_step(
    env: &mut SurrogateEnv,
    action: &[i8],
) -> Result<(EnvState, f64, bool), SizingError> {
    let indices = env.core.apply_action(action);
    let design = env.core.task.design_of(&indices);
    let report = env.ckpt.rollout(&design, &[])?;
    let out = env.core.absorb(indices, &report.means);
    Ok((out.state, out.reward, out.done))
}

/// Episode environment whose metrics come from the real oracle.
pub struct OracleEnv {
    pub core: EnvCore,
}

impl OracleEnv {
    pub fn new(task: SizingTask, horizon: usize, success_bonus: f64) -> Result<Self, SizingError> {
        Ok(Self {
            core: EnvCore::new(task, horizon, success_bonus)?,
        })
    }

    /// Resetting measures the start point, which costs one simulation.
    pub fn reset(
        &mut self,
        indices: Vec<usize>,
        sim: &mut RealSimulator,
    ) -> Result<EnvState, SizingError> {
        let design = self.core.task.design_of(&indices);
        let perf = sim.evaluate(&design)?;
        Ok(self.core.reset_with(indices, &perf.values))
    }
}

/// Same step contract as [`surrogate_step`], but the metrics come from
/// the oracle and the counter is charged exactly once.
pub fn oracle_step(
    env: &mut OracleEnv,
    action: &[i8],
    sim: &mut RealSimulator,
) -> Result<(EnvState, f64, bool), SizingError> {
    let indices = env.core.apply_action(action);
    let design = env.core.task.design_of(&indices);
    let perf = sim.evaluate(&design)?;
    let out = env.core.absorb(indices, &perf.values);
    Ok((out.state, out.reward, out.done))
}

/// One line of the run log: a real simulation or a fine-tune round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RunRecord {
    RealSim {
        sim: u64,
        design: Vec<f64>,
        metrics: Vec<f64>,
        fom: f64,
        met: bool,
    },
    FineTune {
        round: usize,
        buffer_rows: usize,
        mixed_rows: usize,
        train_loss: f64,
    },
}

/// Outcome of a sizing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizingResult {
    pub success: bool,
    pub real_sims: u64,
    pub final_design: Vec<f64>,
    pub final_metrics: Option<PerformanceVector>,
    /// Real figure of merit at each real simulation, in order.
    pub fom_trace: Vec<f64>,
    pub finetune_rounds: usize,
    pub records: Vec<RunRecord>,
}

/// Knobs of the model-based loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InsightMConfig {
    pub ppo: PPOConfig,
    /// PPO updates before the first real check.
    pub initial_iterations: usize,
    /// PPO updates after each surrogate fine-tune.
    pub refresh_iterations: usize,
    /// Greedy episodes whose endpoints compete for the real check.
    pub deploy_episodes: usize,
    /// Uncertainty weight in endpoint scoring; 0 ranks by mean alone.
    pub ucb_beta: f64,
    /// Fine-tune after every failed check regardless of the gap.
    pub always_finetune: bool,
    /// Surrogate-vs-real FoM gap that forces a fine-tune even when
    /// `always_finetune` is off.
    pub fom_tolerance: f64,
    /// Training knobs for each fine-tune round.
    pub finetune: TrainRunConfig,
    /// Pre-training rows mixed into fine-tuning, as a multiple of the
    /// replay buffer size.
    pub pretrain_multiple: usize,
}

impl Default for InsightMConfig {
    fn default() -> Self {
        Self {
            ppo: PPOConfig::default(),
            initial_iterations: 30,
            refresh_iterations: 8,
            deploy_episodes: 12,
            ucb_beta: 0.5,
            always_finetune: true,
            fom_tolerance: 0.1,
            finetune: TrainRunConfig {
                epochs: 15,
                batch_size: 16,
                lr: 3e-4,
                lr_min: 3e-5,
                cosine_horizon_epochs: 15,
                val_fraction: 0.0,
                patience: 0,
                mask_keep: 1.0,
                seed: 0,
            },
            pretrain_multiple: 4,
        }
    }
}

/// Model-based sizing: train the policy in the surrogate, spend one
/// real simulation per round on the most promising endpoint, fine-tune
/// the surrogate on every miss, and stop at the first real success or
/// when the budget runs out.
pub fn insight_m_run(
    task: &SizingTask,
    ckpt: &SurrogateCheckpoint,
    config: &InsightMConfig,
    pretrain: &Dataset,
) -> Result<SizingResult, SizingError> {
    task.validate()?;
    config.ppo.validate()?;
    let mut sim = RealSimulator::new(task.topology.clone(), task.technology.clone(), task.budget);
    let mut ckpt = ckpt.clone();
    let mut policy = ppo_train_in_surrogate(task, &ckpt, &config.ppo, config.initial_iterations)?;
    let mut deploy_rng = Rng::child(task.seed, DEPLOY_SALT);
    let mut refresh_rng = Rng::child(task.seed, REFRESH_SALT);
    let mut mix_rng = Rng::child(task.seed, MIX_SALT);

    let mut buffer_designs: Vec<Vec<f64>> = Vec::new();
    let mut buffer_metrics: Vec<Vec<f64>> = Vec::new();
    let mut records = Vec::new();
    let mut fom_trace = Vec::new();
    let mut finetune_rounds = 0usize;
    let mut best: Option<(f64, Vec<f64>, PerformanceVector)> = None;

    loop {
        if sim.counter().remaining() == 0 {
            break;
        }
        let endpoints =
            deploy_endpoints(&policy, &ckpt, task, &config.ppo, config.deploy_episodes, &mut deploy_rng)?;
        let chosen = endpoints
            .iter()
            .min_by(|a, b| a.score(config.ucb_beta).total_cmp(&b.score(config.ucb_beta)))
            .expect("at least one deploy episode")
            .clone();
        let perf = sim.evaluate(&chosen.design)?;
        let real_fom = fom(&task.fom, &perf)?;
        let met = constraints_met(&task.fom, &perf)?;
        records.push(RunRecord::RealSim {
            sim: sim.counter().used(),
            design: chosen.design.clone(),
            metrics: perf.values.clone(),
            fom: real_fom,
            met,
        });
        fom_trace.push(real_fom);
        if best.as_ref().is_none_or(|(f, _, _)| real_fom < *f) {
            best = Some((real_fom, chosen.design.clone(), perf.clone()));
        }
        if met {
            return Ok(SizingResult {
                success: true,
                real_sims: sim.counter().used(),
                final_design: chosen.design,
                final_metrics: Some(perf),
                fom_trace,
                finetune_rounds,
                records,
            });
        }

        buffer_designs.push(chosen.design.clone());
        buffer_metrics.push(perf.values.clone());
        if sim.counter().remaining() == 0 {
            break;
        }

        let gap = (chosen.fom_mean - real_fom).abs();
        if config.always_finetune || gap > config.fom_tolerance {
            finetune_rounds += 1;
            let mixed = mix_pretrain(
                pretrain,
                config.pretrain_multiple * buffer_designs.len(),
                &mut mix_rng,
            );
            let mut designs = buffer_designs.clone();
            let mut metrics = buffer_metrics.clone();
            designs.extend(mixed.0);
            metrics.extend(mixed.1);
            let round_data = Dataset {
                topology: task.topology.clone(),
                technology: task.technology.name.clone(),
                seed: task.seed,
                designs,
                metrics,
            };
            let run = TrainRunConfig {
                seed: task.seed ^ finetune_rounds as u64,
                ..config.finetune.clone()
            };
            let (tuned, history) = crate::train::finetune_keep_stats(&ckpt, &round_data, &run)?;
            ckpt = tuned;
            records.push(RunRecord::FineTune {
                round: finetune_rounds,
                buffer_rows: buffer_designs.len(),
                mixed_rows: round_data.len() - buffer_designs.len(),
                train_loss: history.last().map_or(f64::NAN, |h| h.train_loss),
            });
            ppo_refresh(
                &mut policy,
                task,
                &ckpt,
                &config.ppo,
                config.refresh_iterations,
                &mut refresh_rng,
            )?;
        }
    }

    let (final_design, final_metrics) = match best {
        Some((_, d, p)) => (d, Some(p)),
        None => (task.design_of(&task.midpoint_indices()), None),
    };
    Ok(SizingResult {
        success: false,
        real_sims: sim.counter().used(),
        final_design,
        final_metrics,
        fom_trace,
        finetune_rounds,
        records,
    })
}

/// Uniform subsample of pre-training rows, without replacement when
/// possible.
fn mix_pretrain(pretrain: &Dataset, want: usize, rng: &mut Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = pretrain.len();
    if n == 0 || want == 0 {
        return (Vec::new(), Vec::new());
    }
    let take = want.min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let mut designs = Vec::with_capacity(take);
    let mut metrics = Vec::with_capacity(take);
    for &i in &idx[..take] {
        designs.push(pretrain.designs[i].clone());
        metrics.push(pretrain.metrics[i].clone());
    }
    (designs, metrics)
}

/// PPO trained directly on the oracle: every episode reset and step
/// charges one real simulation. Stops at the first real success or
/// when the budget is gone.
pub fn pure_ppo_baseline(task: &SizingTask, config: &PPOConfig) -> Result<SizingResult, SizingError> {
    task.validate()?;
    config.validate()?;
    let mut sim = RealSimulator::new(task.topology.clone(), task.technology.clone(), task.budget);
    let mut policy = new_policy_for(task, config)?;
    let mut adam_pi = Adam::new(AdamConfig::default());
    let mut adam_vf = Adam::new(AdamConfig::default());
    let mut rng = Rng::child(task.seed, BASELINE_SALT);
    let mut records = Vec::new();
    let mut fom_trace = Vec::new();
    let mut best: Option<(f64, Vec<f64>, PerformanceVector)> = None;

    let mut episodes: Vec<ppo::EpisodeSink> = Vec::new();
    'run: loop {
        let mut env = OracleEnv::new(task.clone(), config.horizon, config.success_bonus)?;
        let start = task.random_indices(&mut rng);
        let start_design = task.design_of(&start);
        let perf = match sim.evaluate(&start_design) {
            Ok(p) => p,
            Err(SizingError::BudgetExhausted { .. }) => break 'run,
            Err(e) => return Err(e),
        };
        log_real_sim(&task.fom, &sim, &start_design, &perf, &mut records, &mut fom_trace, &mut best)?;
        if constraints_met(&task.fom, &perf)? {
            return Ok(success_result(sim, start_design, perf, fom_trace, records));
        }
        env.core.reset_with(start, &perf.values);

        let mut sink = ppo::EpisodeSink::new();
        loop {
            let obs = core_observation_tensor(&env.core, policy.obs_dim);
            let logits = policy.logits(&obs);
            let value = policy.values(&obs)[0];
            let (actions, logp) = sample_actions(logits.row(0), policy.n_params, &mut rng);
            let indices = env.core.apply_action(&moves_from(&actions));
            let design = task.design_of(&indices);
            let perf = match sim.evaluate(&design) {
                Ok(p) => p,
                Err(SizingError::BudgetExhausted { .. }) => break 'run,
                Err(e) => return Err(e),
            };
            log_real_sim(&task.fom, &sim, &design, &perf, &mut records, &mut fom_trace, &mut best)?;
            let out = env.core.absorb(indices, &perf.values);
            sink.push(obs.data().to_vec(), actions, logp, out.reward, value);
            if out.met {
                return Ok(success_result(sim, design, perf, fom_trace, records));
            }
            if out.done {
                let final_obs = core_observation_tensor(&env.core, policy.obs_dim);
                sink.truncate_with(policy.values(&final_obs)[0]);
                break;
            }
        }
        episodes.push(sink);
        if episodes.len() >= config.rollout_episodes {
            let batch = ppo::batch_from_sinks(std::mem::take(&mut episodes), policy.obs_dim, config);
            for _ in 0..config.epochs_per_update {
                ppo_update(&mut policy, &batch, config, &mut adam_pi, &mut adam_vf)?;
            }
        }
    }

    let (final_design, final_metrics) = match best {
        Some((_, d, p)) => (d, Some(p)),
        None => (task.design_of(&task.midpoint_indices()), None),
    };
    Ok(SizingResult {
        success: false,
        real_sims: sim.counter().used(),
        final_design,
        final_metrics,
        fom_trace,
        finetune_rounds: 0,
        records,
    })
}

fn core_observation_tensor(core: &EnvCore, obs_dim: usize) -> Tensor {
    Tensor::from_vec(&[1, obs_dim], core.observation()).expect("observation row")
}

#[allow(clippy::too_many_arguments)]
fn log_real_sim(
    spec: &FoMSpec,
    sim: &RealSimulator,
    design: &[f64],
    perf: &PerformanceVector,
    records: &mut Vec<RunRecord>,
    fom_trace: &mut Vec<f64>,
    best: &mut Option<(f64, Vec<f64>, PerformanceVector)>,
) -> Result<(), SizingError> {
    let f = fom(spec, perf)?;
    let met = constraints_met(spec, perf)?;
    records.push(RunRecord::RealSim {
        sim: sim.counter().used(),
        design: design.to_vec(),
        metrics: perf.values.clone(),
        fom: f,
        met,
    });
    fom_trace.push(f);
    if best.as_ref().is_none_or(|(b, _, _)| f < *b) {
        *best = Some((f, design.to_vec(), perf.clone()));
    }
    Ok(())
}

fn success_result(
    sim: RealSimulator,
    design: Vec<f64>,
    perf: PerformanceVector,
    fom_trace: Vec<f64>,
    records: Vec<RunRecord>,
) -> SizingResult {
    SizingResult {
        success: true,
        real_sims: sim.counter().used(),
        final_design: design,
        final_metrics: Some(perf),
        fom_trace,
        finetune_rounds: 0,
        records,
    }
}
