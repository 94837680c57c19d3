//! Experiment configuration: one TOML file per run.
//!
//! Every knob that affects results lives here; command-line flags only
//! override the seed and choose output locations. Parsing is strict,
//! unknown keys are errors, missing keys fall back to the defaults
//! below, and the SHA-256 of the file's bytes is stamped into every
//! artifact the run produces, so a report can always be traced back to
//! the exact configuration that made it.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use insight::circuits::{
    technology, topology, CircuitTopology, Constraint, Direction, FoMSpec, TechnologyProfile,
};
use insight::model::{FcEnsembleConfig, InsightConfig};
use insight::sizing::{InsightMConfig, PPOConfig, SizingTask};
use insight::train::TrainRunConfig;

/// A parsed configuration file plus the hash of its raw bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub run: RunConfig,
    pub hash: String,
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let bytes = fs::read(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let run: RunConfig = toml::from_str(
        std::str::from_utf8(&bytes).context("config is not valid UTF-8")?,
    )
    .with_context(|| format!("parsing config {}", path.display()))?;
    let hash = format!("{:x}", Sha256::digest(&bytes));
    Ok(LoadedConfig { run, hash })
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub topology: TopologySection,
    pub technology: TechnologySection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub sizing: SizingSection,
    pub report: ReportSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologySection {
    pub name: String,
}

impl Default for TopologySection {
    fn default() -> Self {
        Self {
            name: "ota2_nmos".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TechnologySection {
    pub name: String,
}

impl Default for TechnologySection {
    fn default() -> Self {
        Self {
            name: "synth45".into(),
        }
    }
}

/// Mirrors [`InsightConfig`] field by field.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_hidden: usize,
    pub uncertainty_heads: usize,
    pub ln_eps: f64,
    pub init_std: f64,
    pub fc: FcSection,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = InsightConfig::default();
        Self {
            d_model: d.d_model,
            heads: d.heads,
            layers: d.layers,
            ff_hidden: d.ff_hidden,
            uncertainty_heads: d.uncertainty_heads,
            ln_eps: d.ln_eps,
            init_std: d.init_std,
            fc: FcSection::default(),
        }
    }
}

impl ModelSection {
    pub fn insight(&self) -> InsightConfig {
        InsightConfig {
            d_model: self.d_model,
            heads: self.heads,
            layers: self.layers,
            ff_hidden: self.ff_hidden,
            uncertainty_heads: self.uncertainty_heads,
            ln_eps: self.ln_eps,
            init_std: self.init_std,
        }
    }
}

/// The fully connected ensemble baseline used by `sweep`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FcSection {
    pub members: usize,
    pub hidden_layers: usize,
    pub hidden_dim: usize,
}

impl Default for FcSection {
    fn default() -> Self {
        let d = FcEnsembleConfig::default();
        Self {
            members: d.members,
            hidden_layers: d.hidden_layers,
            hidden_dim: d.hidden_dim,
        }
    }
}

impl FcSection {
    pub fn ensemble(&self) -> FcEnsembleConfig {
        FcEnsembleConfig {
            members: self.members,
            hidden_layers: self.hidden_layers,
            hidden_dim: self.hidden_dim,
        }
    }
}

/// Mirrors [`TrainRunConfig`]; `seed` doubles as the run seed for every
/// command unless `--seed` overrides it.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub cosine_horizon_epochs: usize,
    pub val_fraction: f64,
    pub patience: usize,
    pub mask_keep: f64,
    pub seed: u64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let d = TrainRunConfig::default();
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            lr: d.lr,
            lr_min: d.lr_min,
            cosine_horizon_epochs: d.cosine_horizon_epochs,
            val_fraction: d.val_fraction,
            patience: d.patience,
            mask_keep: d.mask_keep,
            seed: d.seed,
        }
    }
}

impl TrainingSection {
    pub fn run(&self, seed: u64) -> TrainRunConfig {
        TrainRunConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            lr_min: self.lr_min,
            cosine_horizon_epochs: self.cosine_horizon_epochs,
            val_fraction: self.val_fraction,
            patience: self.patience,
            mask_keep: self.mask_keep,
            seed,
        }
    }
}

/// The sizing problem and both optimizer loops.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SizingSection {
    pub budget: u64,
    /// Uniform grid resolution, used for every parameter unless `grid`
    /// lists one count per parameter.
    pub grid_points: usize,
    pub grid: Vec<usize>,
    pub objective: String,
    pub objective_direction: String,
    pub objective_weight: f64,
    pub objective_scale: f64,
    pub constraints: Vec<ConstraintSection>,
    pub initial_iterations: usize,
    pub refresh_iterations: usize,
    pub deploy_episodes: usize,
    pub ucb_beta: f64,
    pub always_finetune: bool,
    pub fom_tolerance: f64,
    pub pretrain_multiple: usize,
    pub ppo: PpoSection,
    pub finetune: FinetuneSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSection {
    pub metric: String,
    pub direction: String,
    pub threshold: f64,
    pub weight: f64,
}

impl Default for SizingSection {
    fn default() -> Self {
        Self {
            budget: 100,
            grid_points: 5,
            grid: Vec::new(),
            objective: "i_q".into(),
            objective_direction: "at_most".into(),
            objective_weight: 1.0,
            objective_scale: 1.0,
            constraints: vec![
                ConstraintSection {
                    metric: "dc_gain".into(),
                    direction: "at_least".into(),
                    threshold: 55.0,
                    weight: 1.0,
                },
                ConstraintSection {
                    metric: "ugbw".into(),
                    direction: "at_least".into(),
                    threshold: 80.0,
                    weight: 1.0,
                },
                ConstraintSection {
                    metric: "phase_margin".into(),
                    direction: "at_least".into(),
                    threshold: 60.0,
                    weight: 1.0,
                },
            ],
            initial_iterations: 30,
            refresh_iterations: 8,
            deploy_episodes: 12,
            ucb_beta: 0.5,
            always_finetune: true,
            fom_tolerance: 0.1,
            pretrain_multiple: 4,
            ppo: PpoSection::default(),
            finetune: FinetuneSection::default(),
        }
    }
}

/// Mirrors [`PPOConfig`].
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoSection {
    pub hidden: usize,
    pub clip: f64,
    pub discount: f64,
    pub gae_lambda: f64,
    pub rollout_episodes: usize,
    pub epochs_per_update: usize,
    pub entropy_bonus: f64,
    pub lr: f64,
    pub horizon: usize,
    pub success_bonus: f64,
}

impl Default for PpoSection {
    fn default() -> Self {
        let d = PPOConfig::default();
        Self {
            hidden: d.hidden,
            clip: d.clip,
            discount: d.discount,
            gae_lambda: d.gae_lambda,
            rollout_episodes: d.rollout_episodes,
            epochs_per_update: d.epochs_per_update,
            entropy_bonus: d.entropy_bonus,
            lr: d.lr,
            horizon: d.horizon,
            success_bonus: d.success_bonus,
        }
    }
}

impl PpoSection {
    pub fn ppo(&self) -> PPOConfig {
        PPOConfig {
            hidden: self.hidden,
            clip: self.clip,
            discount: self.discount,
            gae_lambda: self.gae_lambda,
            rollout_episodes: self.rollout_episodes,
            epochs_per_update: self.epochs_per_update,
            entropy_bonus: self.entropy_bonus,
            lr: self.lr,
            horizon: self.horizon,
            success_bonus: self.success_bonus,
        }
    }
}

/// Training knobs for each surrogate fine-tune round inside the
/// model-based loop.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub cosine_horizon_epochs: usize,
    pub mask_keep: f64,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        let d = InsightMConfig::default().finetune;
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            lr: d.lr,
            lr_min: d.lr_min,
            cosine_horizon_epochs: d.cosine_horizon_epochs,
            mask_keep: d.mask_keep,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    /// Output directory; `--out` and `$INSIGHT_OUT_DIR` take
    /// precedence in that order.
    pub out_dir: Option<String>,
    /// Topologies covered by `sweep`, in row order.
    pub sweep_topologies: Vec<String>,
    /// Default `train:test` size list for `sweep`.
    pub sweep_sizes: String,
    /// Batch size whose amortized latency `bench` reports.
    pub bench_batch: usize,
    /// Repetitions behind each latency figure.
    pub bench_rounds: usize,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            out_dir: None,
            sweep_topologies: vec![
                "ota2_nmos".into(),
                "ota2_pmos".into(),
                "tia2".into(),
                "tia3".into(),
                "comparator".into(),
                "level_shifter".into(),
            ],
            sweep_sizes: "300:100,1500:500,3000:1000".into(),
            bench_batch: 1000,
            bench_rounds: 5,
        }
    }
}

impl RunConfig {
    pub fn topology(&self) -> Result<CircuitTopology> {
        Ok(topology(&self.topology.name)?)
    }

    pub fn technology(&self) -> Result<TechnologyProfile> {
        Ok(technology(&self.technology.name)?)
    }

    /// Resolves the `[sizing]` section against the topology's schema,
    /// turning metric names into indices and the grid specification
    /// into one count per parameter.
    pub fn sizing_task(&self, seed: u64) -> Result<SizingTask> {
        let topo = self.topology()?;
        let s = &self.sizing;
        let grid = if s.grid.is_empty() {
            vec![s.grid_points; topo.n_params()]
        } else {
            s.grid.clone()
        };
        let fom = FoMSpec {
            objective: metric_index(&topo, &s.objective)?,
            objective_weight: s.objective_weight,
            objective_direction: direction(&s.objective_direction)?,
            objective_scale: s.objective_scale,
            constraints: s
                .constraints
                .iter()
                .map(|c| {
                    Ok(Constraint {
                        metric: metric_index(&topo, &c.metric)?,
                        direction: direction(&c.direction)?,
                        threshold: c.threshold,
                        weight: c.weight,
                    })
                })
                .collect::<Result<_>>()?,
        };
        Ok(SizingTask {
            topology: topo,
            technology: self.technology()?,
            fom,
            grid,
            budget: s.budget,
            seed,
        })
    }

    pub fn insight_m(&self) -> InsightMConfig {
        let s = &self.sizing;
        let f = &s.finetune;
        InsightMConfig {
            ppo: s.ppo.ppo(),
            initial_iterations: s.initial_iterations,
            refresh_iterations: s.refresh_iterations,
            deploy_episodes: s.deploy_episodes,
            ucb_beta: s.ucb_beta,
            always_finetune: s.always_finetune,
            fom_tolerance: s.fom_tolerance,
            finetune: TrainRunConfig {
                epochs: f.epochs,
                batch_size: f.batch_size,
                lr: f.lr,
                lr_min: f.lr_min,
                cosine_horizon_epochs: f.cosine_horizon_epochs,
                val_fraction: 0.0,
                patience: 0,
                mask_keep: f.mask_keep,
                seed: 0,
            },
            pretrain_multiple: s.pretrain_multiple,
        }
    }

    /// Parses a `train:test,train:test,…` size list.
    pub fn sweep_sizes(&self, arg: Option<&str>) -> Result<Vec<(usize, usize)>> {
        let text = arg.unwrap_or(&self.report.sweep_sizes);
        let mut out = Vec::new();
        for part in text.split(',').filter(|p| !p.trim().is_empty()) {
            let (a, b) = part
                .trim()
                .split_once(':')
                .with_context(|| format!("size '{part}' is not train:test"))?;
            out.push((
                a.parse().with_context(|| format!("train count '{a}'"))?,
                b.parse().with_context(|| format!("test count '{b}'"))?,
            ));
        }
        if out.is_empty() {
            bail!("no sweep sizes given");
        }
        Ok(out)
    }
}

fn metric_index(topo: &CircuitTopology, name: &str) -> Result<usize> {
    topo.schema
        .metrics
        .iter()
        .position(|m| m.name == name)
        .with_context(|| {
            format!(
                "metric '{name}' not in topology '{}' (has: {})",
                topo.name,
                topo.schema
                    .metrics
                    .iter()
                    .map(|m| m.name.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })
}

fn direction(text: &str) -> Result<Direction> {
    match text {
        "at_most" => Ok(Direction::AtMost),
        "at_least" => Ok(Direction::AtLeast),
        other => bail!("direction '{other}' is neither at_most nor at_least"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn load_text(text: &str) -> Result<LoadedConfig> {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(text.as_bytes()).unwrap();
        load(file.path())
    }

    #[test]
    fn empty_config_gets_all_defaults() {
        let loaded = load_text("").unwrap();
        assert_eq!(loaded.run.topology.name, "ota2_nmos");
        assert_eq!(loaded.run.model.insight(), InsightConfig::default());
        assert_eq!(loaded.run.training.seed, 0);
        let task = loaded.run.sizing_task(0).unwrap();
        assert_eq!(task.grid, vec![5; 8]);
        assert_eq!(task.fom.objective, 0);
        assert_eq!(task.fom.constraints.len(), 3);
    }

    #[test]
    fn partial_sections_keep_defaults_for_missing_keys() {
        let loaded = load_text("[training]\nepochs = 7\n").unwrap();
        assert_eq!(loaded.run.training.epochs, 7);
        assert_eq!(loaded.run.training.lr, TrainRunConfig::default().lr);
        assert_eq!(
            loaded.run.training.batch_size,
            TrainRunConfig::default().batch_size
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = load_text("[training]\nlearning_rate = 0.1\n").unwrap_err();
        assert!(format!("{err:#}").contains("learning_rate"));
    }

    #[test]
    fn hash_tracks_file_bytes() {
        let a = load_text("[topology]\nname = \"tia2\"\n").unwrap();
        let b = load_text("[topology]\nname = \"tia3\"\n").unwrap();
        assert_ne!(a.hash, b.hash);
        assert_eq!(a.hash.len(), 64);
    }

    #[test]
    fn metric_names_resolve_to_schema_indices() {
        let text = r#"
[sizing]
objective = "ugbw"
objective_direction = "at_least"

[[sizing.constraints]]
metric = "i_q"
direction = "at_most"
threshold = 1.5
weight = 2.0
"#;
        let loaded = load_text(text).unwrap();
        let task = loaded.run.sizing_task(7).unwrap();
        assert_eq!(task.fom.objective, 2);
        assert_eq!(task.fom.constraints.len(), 1);
        assert_eq!(task.fom.constraints[0].metric, 0);
        assert_eq!(task.seed, 7);
    }

    #[test]
    fn bad_metric_and_direction_names_error_clearly() {
        let bad_metric = load_text("[sizing]\nobjective = \"gain_margin\"\n")
            .unwrap()
            .run
            .sizing_task(0)
            .unwrap_err();
        assert!(format!("{bad_metric:#}").contains("gain_margin"));

        let bad_dir = load_text("[sizing]\nobjective_direction = \"minimize\"\n")
            .unwrap()
            .run
            .sizing_task(0)
            .unwrap_err();
        assert!(format!("{bad_dir:#}").contains("minimize"));
    }

    #[test]
    fn sweep_size_lists_parse_and_validate() {
        let cfg = load_text("").unwrap().run;
        assert_eq!(
            cfg.sweep_sizes(None).unwrap(),
            vec![(300, 100), (1500, 500), (3000, 1000)]
        );
        assert_eq!(cfg.sweep_sizes(Some("40:10")).unwrap(), vec![(40, 10)]);
        assert!(cfg.sweep_sizes(Some("40-10")).is_err());
        assert!(cfg.sweep_sizes(Some("")).is_err());
    }
}
