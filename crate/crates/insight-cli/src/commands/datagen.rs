//! `insight datagen`: sample designs, label them with the oracle,
//! write the rows as a dataset file.

use std::fs;

use anyhow::{Context, Result};
use insight::data::{build_dataset, render_dataset};

use super::Ctx;

pub fn run(ctx: &Ctx, n: usize, file: &str) -> Result<()> {
    let topology = ctx.run.topology()?;
    let tech = ctx.run.technology()?;
    let dataset = build_dataset(&topology, &tech, n, ctx.seed)?;

    // Provenance rides as a comment line right after the metadata
    // header, where readers of the format skip it.
    let text = render_dataset(&dataset);
    let (meta, rest) = text.split_once('\n').expect("rendered dataset has a header");
    let annotated = format!("{meta}\n{}\n{rest}", ctx.prov().comment_line());

    let path = ctx.path(file);
    fs::write(&path, annotated).with_context(|| format!("writing {}", path.display()))?;
    ctx.say(&format!(
        "{} rows of {} on {} -> {}",
        dataset.len(),
        topology.name,
        tech.name,
        path.display()
    ));
    Ok(())
}
