//! `insight eval`: score a checkpoint on a dataset and write the
//! per-metric R-squared/MSE breakdown.

use std::path::Path;

use anyhow::{bail, Context, Result};
use insight::model::{load_any, CheckpointKind};
use insight::train::{evaluate_ensemble, evaluate_surrogate, EvalMode, EvalReport};

use super::{load_dataset, Ctx};
use crate::artifacts::{cell_f64, Csv, Table};

pub fn run(ctx: &Ctx, checkpoint: &Path, data: &Path, mode: EvalMode) -> Result<()> {
    let dataset = load_dataset(data)?;
    let kind = load_any(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let report = match kind {
        CheckpointKind::Surrogate(ckpt) => evaluate_surrogate(&ckpt, &dataset, mode)?,
        CheckpointKind::Ensemble(ensemble) => {
            if !matches!(mode, EvalMode::TeacherForced) {
                bail!("ensemble checkpoints have no autoregressive context; only teacher mode applies");
            }
            evaluate_ensemble(&ensemble, &dataset)?
        }
    };

    let header = ["metric", "r2", "mse", "included", "n_samples", "wall_seconds"];
    let mut csv = Csv::new(&ctx.prov(), &header);
    let mut table = Table::new(&header);
    for i in 0..report.metric_names.len() {
        let row = [
            report.metric_names[i].clone(),
            cell_f64(report.per_metric_r2[i]),
            cell_f64(report.per_metric_mse[i]),
            report.included[i].to_string(),
            String::new(),
            String::new(),
        ];
        csv.row(&row);
        table.row(row.to_vec());
    }
    let agg = [
        "aggregate".to_string(),
        cell_f64(report.aggregate_r2),
        cell_f64(report.aggregate_mse),
        String::new(),
        report.n_samples.to_string(),
        cell_f64(report.wall_seconds),
    ];
    csv.row(&agg);
    table.row(agg.to_vec());
    csv.save(&ctx.path("eval.csv"))?;

    if !ctx.quiet {
        print!("{}", table.render());
    }
    warn(ctx, &report);
    Ok(())
}

fn warn(ctx: &Ctx, report: &EvalReport) {
    for w in &report.warnings {
        ctx.say(&format!("warning: {w}"));
    }
}
