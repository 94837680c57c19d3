//! `insight gradcheck`: finite-difference audit of the analytic
//! gradients through the full model configured in `[model]`, run at a
//! small 4-parameter, 3-metric layout so every block is cheap to probe.

use anyhow::{bail, Result};
use insight::model::{GradProbe, SequenceLayout, Surrogate};
use insight::numerics::GradCheckConfig;

use super::Ctx;
use crate::artifacts::{cell_f64, Csv, Table};

pub fn run(ctx: &Ctx) -> Result<()> {
    let layout = SequenceLayout {
        n_params: 4,
        n_metrics: 3,
        metric_names: vec!["y1".into(), "y2".into(), "y3".into()],
    };
    let model = Surrogate::new(ctx.run.model.insight(), layout, ctx.seed)?;
    let mut probe = GradProbe::new(model, 2, ctx.seed);
    let report = probe.run_check(GradCheckConfig {
        seed: ctx.seed,
        ..GradCheckConfig::default()
    });

    let header = [
        "block",
        "len",
        "checked",
        "max_rel_error",
        "worst_index",
        "analytic",
        "numeric",
    ];
    let mut csv = Csv::new(&ctx.prov(), &header);
    let mut table = Table::new(&header);
    for b in &report.blocks {
        let row = [
            b.name.clone(),
            b.len.to_string(),
            b.checked.to_string(),
            cell_f64(b.max_rel_error),
            b.worst_index.to_string(),
            cell_f64(b.analytic),
            cell_f64(b.numeric),
        ];
        csv.row(&row);
        table.row(row.to_vec());
    }
    csv.save(&ctx.path("gradcheck.csv"))?;

    if !ctx.quiet {
        print!("{}", table.render());
    }
    ctx.say(&format!(
        "max relative error {:.3e} across {} blocks (tolerance {:.0e})",
        report.max_rel_error,
        report.blocks.len(),
        report.tolerance
    ));
    if !report.passed() {
        bail!(
            "gradient check failed: max relative error {:.3e} exceeds {:.0e}",
            report.max_rel_error,
            report.tolerance
        );
    }
    ctx.say("gradient check passed");
    Ok(())
}
