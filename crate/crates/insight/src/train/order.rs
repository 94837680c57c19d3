//! Decode-order selection for a topology's metrics.
//!
//! The autoregressive decoder predicts metrics one at a time, each
//! conditioned on the ones before it, so cheap quantities should come
//! first and anything computed from another metric must come after
//! its sources. Ordering is a topological sort over the declared
//! `derived_from` edges, breaking ties by analysis cost (DC before
//! AC before transient) and then by schema position.

use crate::circuits::CircuitTopology;

use super::TrainError;

/// Returns metric indices into `topology.schema.metrics` in decode order.
pub fn order_metrics(topology: &CircuitTopology) -> Result<Vec<usize>, TrainError> {
    let metrics = &topology.schema.metrics;
    let index_of = |name: &str| metrics.iter().position(|m| m.name == name);

    let mut deps: Vec<Vec<usize>> = Vec::with_capacity(metrics.len());
    for metric in metrics {
        let mut row = Vec::with_capacity(metric.derived_from.len());
        for src in &metric.derived_from {
            let Some(i) = index_of(src) else {
                return Err(TrainError::Order(format!(
                    "{}: metric {} derives from unknown metric {}",
                    topology.name, metric.name, src
                )));
            };
            row.push(i);
        }
        deps.push(row);
    }

    let mut placed = vec![false; metrics.len()];
    let mut out = Vec::with_capacity(metrics.len());
    while out.len() < metrics.len() {
        // Among metrics whose sources are all placed, take the one
        // with the cheapest analysis class, then the earliest schema
        // position.
        let next = (0..metrics.len())
            .filter(|&i| !placed[i] && deps[i].iter().all(|&s| placed[s]))
            .min_by_key(|&i| (metrics[i].class.rank(), i));
        let Some(i) = next else {
            let stuck: Vec<&str> = (0..metrics.len())
                .filter(|&i| !placed[i])
                .map(|i| metrics[i].name.as_str())
                .collect();
            return Err(TrainError::Order(format!(
                "{}: dependency cycle among metrics [{}]",
                topology.name,
                stuck.join(", ")
            )));
        };
        placed[i] = true;
        out.push(i);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{topology, MetricClass, MetricDescriptor};

    fn names(topo: &CircuitTopology, order: &[usize]) -> Vec<String> {
        order.iter().map(|&i| topo.schema.metrics[i].name.clone()).collect()
    }

    #[test]
    fn amplifier_leads_with_bias_current() {
        let topo = topology("ota2_nmos").unwrap();
        let order = order_metrics(&topo).unwrap();
        assert_eq!(
            names(&topo, &order),
            ["i_q", "dc_gain", "ugbw", "phase_margin"]
        );
    }

    #[test]
    fn level_shifter_orders_dc_before_transient() {
        let topo = topology("level_shifter").unwrap();
        let order = order_metrics(&topo).unwrap();
        assert_eq!(
            names(&topo, &order),
            ["dc_power", "ratio", "avg_delay", "delay_balance"]
        );
    }

    #[test]
    fn single_metric_maps_to_itself() {
        let mut topo = topology("comparator").unwrap();
        topo.schema.metrics.truncate(1);
        assert_eq!(order_metrics(&topo).unwrap(), [0]);
    }

    #[test]
    fn derivation_overrides_class_rank() {
        let mut topo = topology("comparator").unwrap();
        // A DC metric that depends on a transient one must still wait
        // for it.
        topo.schema.metrics = vec![
            MetricDescriptor {
                name: "settle".into(),
                unit: "s".into(),
                positive: true,
                log_scale: true,
                class: MetricClass::Transient,
                derived_from: vec![],
            },
            MetricDescriptor {
                name: "late_dc".into(),
                unit: "W".into(),
                positive: true,
                log_scale: true,
                class: MetricClass::Dc,
                derived_from: vec!["settle".into()],
            },
        ];
        assert_eq!(order_metrics(&topo).unwrap(), [0, 1]);
    }

    #[test]
    fn ties_keep_schema_position() {
        let mut topo = topology("level_shifter").unwrap();
        for m in topo.schema.metrics.iter_mut() {
            m.class = MetricClass::Dc;
            m.derived_from.clear();
        }
        assert_eq!(order_metrics(&topo).unwrap(), [0, 1, 2, 3]);
    }

    #[test]
    fn cycles_and_unknown_sources_are_errors() {
        let mut topo = topology("comparator").unwrap();
        topo.schema.metrics[0].derived_from = vec!["avg_delay".into()];
        topo.schema.metrics[1].derived_from = vec!["dc_power".into()];
        let err = order_metrics(&topo).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");

        let mut topo = topology("comparator").unwrap();
        topo.schema.metrics[0].derived_from = vec!["ghost".into()];
        let err = order_metrics(&topo).unwrap_err();
        assert!(err.to_string().contains("unknown"), "{err}");
    }

    #[test]
    fn every_builtin_topology_orders_cleanly() {
        for name in crate::circuits::topology_names() {
            let topo = topology(name).unwrap();
            let order = order_metrics(&topo).unwrap();
            let mut seen = vec![false; topo.schema.metrics.len()];
            for &i in &order {
                for src in &topo.schema.metrics[i].derived_from {
                    let j = topo
                        .schema
                        .metrics
                        .iter()
                        .position(|m| &m.name == src)
                        .unwrap();
                    assert!(seen[j], "{name}: {src} decoded after its dependent");
                }
                seen[i] = true;
            }
            assert!(seen.iter().all(|&s| s), "{name}: order dropped a metric");
        }
    }
}
