//! `insight size` and `insight baseline`: run the sizing task from the
//! config, either through the model-based loop (real simulations spent
//! only on candidate checks and fine-tune labels) or through PPO
//! trained directly on the metered oracle.

use std::path::Path;

use anyhow::{bail, Result};
use insight::circuits::fom;
use insight::data::Dataset;
use insight::sizing::{insight_m_run, pure_ppo_baseline, RunRecord, SizingResult, SizingTask};
use serde::Serialize;

use super::{load_dataset, load_surrogate, Ctx};
use crate::artifacts::{write_json, write_jsonl};

/// What lands in sizing.json / baseline.json; the step-by-step records
/// go to the .jsonl file next to it.
#[derive(Serialize)]
struct Summary {
    topology: String,
    technology: String,
    budget: u64,
    success: bool,
    real_sims: u64,
    finetune_rounds: usize,
    final_design: Vec<f64>,
    final_metrics: Option<Vec<f64>>,
    final_fom: Option<f64>,
    fom_trace: Vec<f64>,
}

fn summarize(task: &SizingTask, result: &SizingResult) -> Result<Summary> {
    let final_fom = match &result.final_metrics {
        Some(perf) => Some(fom(&task.fom, perf)?),
        None => None,
    };
    Ok(Summary {
        topology: task.topology.name.clone(),
        technology: task.technology.name.clone(),
        budget: task.budget,
        success: result.success,
        real_sims: result.real_sims,
        finetune_rounds: result.finetune_rounds,
        final_design: result.final_design.clone(),
        final_metrics: result.final_metrics.as_ref().map(|p| p.values.clone()),
        final_fom,
        fom_trace: result.fom_trace.clone(),
    })
}

fn narrate(ctx: &Ctx, records: &[RunRecord]) {
    for record in records {
        match record {
            RunRecord::RealSim { sim, fom, met, .. } => {
                ctx.say(&format!("sim {sim}: fom {fom:.6} met={met}"));
            }
            RunRecord::FineTune {
                round,
                buffer_rows,
                mixed_rows,
                train_loss,
            } => {
                ctx.say(&format!(
                    "fine-tune {round}: {buffer_rows} measured + {mixed_rows} replayed rows, loss {train_loss:.6}"
                ));
            }
        }
    }
}

fn report(ctx: &Ctx, task: &SizingTask, result: &SizingResult, stem: &str) -> Result<()> {
    narrate(ctx, &result.records);
    write_jsonl(
        &ctx.path(&format!("{stem}_log.jsonl")),
        &ctx.prov(),
        &result.records,
    )?;
    let summary = summarize(task, result)?;
    write_json(&ctx.path(&format!("{stem}.json")), &ctx.prov(), &summary)?;
    ctx.say(&format!(
        "{}: {} after {} real simulations ({} fine-tune rounds)",
        stem,
        if result.success { "success" } else { "failure" },
        result.real_sims,
        result.finetune_rounds
    ));
    Ok(())
}

pub fn run(ctx: &Ctx, checkpoint: &Path, data: Option<&Path>) -> Result<()> {
    let task = ctx.run.sizing_task(ctx.seed)?;
    let ckpt = load_surrogate(checkpoint)?;
    if ckpt.metadata.topology != task.topology.name {
        bail!(
            "checkpoint was trained on {} but the task targets {}",
            ckpt.metadata.topology,
            task.topology.name
        );
    }
    let pretrain = match data {
        Some(path) => load_dataset(path)?,
        // Without pre-training rows, fine-tuning sees only measured ones.
        None => Dataset {
            topology: task.topology.clone(),
            technology: task.technology.name.clone(),
            seed: 0,
            designs: Vec::new(),
            metrics: Vec::new(),
        },
    };
    let result = insight_m_run(&task, &ckpt, &ctx.run.insight_m(), &pretrain)?;
    report(ctx, &task, &result, "sizing")
}

pub fn baseline(ctx: &Ctx) -> Result<()> {
    let task = ctx.run.sizing_task(ctx.seed)?;
    let result = pure_ppo_baseline(&task, &ctx.run.sizing.ppo.ppo())?;
    report(ctx, &task, &result, "baseline")
}
