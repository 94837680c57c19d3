//! `insight sweep`: the size-sweep table. For every (topology, size)
//! cell, draw one dataset, train the surrogate and the FC ensemble on
//! the same split, and score both on the same held-out rows.

use std::time::Instant;

use anyhow::Result;
use insight::circuits::topology;
use insight::data::{build_dataset, split};
use insight::numerics::derive_seed;
use insight::train::{evaluate_ensemble, evaluate_surrogate, train_fc_ensemble, train_insight, EvalMode};

use super::Ctx;
use crate::artifacts::{cell_f64, Csv, Table};

// Keeps per-cell child streams away from salts used elsewhere.
const CELL_SALT: u64 = 0x7377_6570;

pub fn run(ctx: &Ctx, sizes: Option<&str>) -> Result<()> {
    let sizes = ctx.run.sweep_sizes(sizes)?;
    let tech = ctx.run.technology()?;
    let header = [
        "topology",
        "train_n",
        "test_n",
        "insight_r2",
        "insight_mse",
        "fc_r2",
        "fc_mse",
        "insight_seconds",
        "fc_seconds",
    ];
    let mut csv = Csv::new(&ctx.prov(), &header);
    let mut table = Table::new(&header);

    let mut cell = 0u64;
    for name in &ctx.run.report.sweep_topologies {
        let topo = topology(name)?;
        for &(train_n, test_n) in &sizes {
            // One seed per cell drives sampling, the split, and both
            // trainings, so cells are independent of each other and of
            // row order.
            let seed = derive_seed(ctx.seed, CELL_SALT + cell);
            cell += 1;
            let run = ctx.run.training.run(seed);
            let data = build_dataset(&topo, &tech, train_n + test_n, seed)?;
            let (train_set, test_set) = split(&data, train_n, test_n, seed)?;

            let started = Instant::now();
            let (ckpt, _) = train_insight(&train_set, &ctx.run.model.insight(), &run)?;
            let insight_report = evaluate_surrogate(&ckpt, &test_set, EvalMode::TeacherForced)?;
            let insight_seconds = started.elapsed().as_secs_f64();

            let started = Instant::now();
            let (ensemble, _) = train_fc_ensemble(&train_set, &ctx.run.model.fc.ensemble(), &run)?;
            let fc_report = evaluate_ensemble(&ensemble, &test_set)?;
            let fc_seconds = started.elapsed().as_secs_f64();

            let row = [
                name.clone(),
                train_n.to_string(),
                test_n.to_string(),
                cell_f64(insight_report.aggregate_r2),
                cell_f64(insight_report.aggregate_mse),
                cell_f64(fc_report.aggregate_r2),
                cell_f64(fc_report.aggregate_mse),
                cell_f64(insight_seconds),
                cell_f64(fc_seconds),
            ];
            csv.row(&row);
            table.row(row.to_vec());
            ctx.say(&format!(
                "{name} {train_n}:{test_n}  insight r2 {:.4}  fc r2 {:.4}",
                insight_report.aggregate_r2, fc_report.aggregate_r2
            ));
        }
    }
    csv.save(&ctx.path("sweep.csv"))?;
    if !ctx.quiet {
        print!("{}", table.render());
    }
    Ok(())
}
