//! `insight train`: fit the surrogate, save the checkpoint and the
//! per-epoch loss history.

use std::path::Path;

use anyhow::Result;
use insight::train::{train_insight, transfer_finetune};

use super::{load_dataset, load_surrogate, Ctx};
use crate::artifacts::{cell_f64, Csv, TOOL_VERSION};

pub fn run(ctx: &Ctx, data: &Path, warm_start: Option<&Path>) -> Result<()> {
    let dataset = load_dataset(data)?;
    let run = ctx.run.training.run(ctx.seed);
    let (mut ckpt, history) = match warm_start {
        None => train_insight(&dataset, &ctx.run.model.insight(), &run)?,
        Some(source) => transfer_finetune(&load_surrogate(source)?, &dataset, &run)?,
    };
    ckpt.metadata.config_hash = ctx.hash.clone();
    ckpt.metadata.tool_version = TOOL_VERSION.to_string();

    let ckpt_path = ctx.path("checkpoint.bin");
    ckpt.save(&ckpt_path)?;

    let mut csv = Csv::new(&ctx.prov(), &["epoch", "lr", "train_loss", "val_loss"]);
    for e in &history {
        csv.row(&[
            e.epoch.to_string(),
            cell_f64(e.lr),
            cell_f64(e.train_loss),
            cell_f64(e.val_loss),
        ]);
    }
    csv.save(&ctx.path("history.csv"))?;

    ctx.say(&format!(
        "trained {} epochs on {} rows: train_loss {:.6}, val_loss {:.6} -> {}",
        history.len(),
        dataset.len(),
        ckpt.metadata.final_train_loss,
        ckpt.metadata.final_val_loss,
        ckpt_path.display()
    ));
    Ok(())
}
