//! Behavioral circuit models: the ground truth this crate learns from.
//!
//! Each benchmark topology gets a closed-form first-order model
//! (square-law transconductance, pole/zero phase margins, RC delays)
//! instead of a transistor-level simulation. The models are smooth,
//! deterministic, and keep the parameter-metric coupling structure
//! that makes surrogate training and sizing interesting. Topologies
//! and technology profiles are addressable by name through a registry.

pub mod tech;
pub mod topologies;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tech::{technology, technology_names, DeviceClass, TechnologyProfile};
pub use topologies::{evaluate_oracle, topology, topology_names};

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("unknown topology '{0}'")]
    UnknownTopology(String),
    #[error("unknown technology '{0}'")]
    UnknownTechnology(String),
    #[error("design has {got} values, topology '{topology}' expects {expected}")]
    DimensionMismatch {
        topology: String,
        expected: usize,
        got: usize,
    },
    #[error("parameter '{param}' = {value} outside [{lower}, {upper}]")]
    OutOfBounds {
        param: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("metric index {index} out of range for {len} metrics")]
    BadMetricIndex { index: usize, len: usize },
}

/// One tunable design parameter: bounds plus the grid step the sizing
/// agent moves on. The step always divides the range exactly.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParameterDescriptor {
    pub name: String,
    pub unit: String,
    pub lower: f64,
    pub upper: f64,
    pub step: f64,
}

impl ParameterDescriptor {
    /// Number of grid points, endpoints included.
    pub fn grid_points(&self) -> usize {
        ((self.upper - self.lower) / self.step).round() as usize + 1
    }
}

/// Physical analysis class of a metric, ordered by how much circuit
/// behavior it summarizes: operating point, then small-signal, then
/// time-domain.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum MetricClass {
    Dc,
    Ac,
    Transient,
}

impl MetricClass {
    pub fn rank(self) -> usize {
        match self {
            MetricClass::Dc => 0,
            MetricClass::Ac => 1,
            MetricClass::Transient => 2,
        }
    }
}

/// One performance metric. `positive` marks physically positive
/// quantities (currents, bandwidths, delays); `log_scale` marks
/// decade-spanning metrics that should be log10-transformed before
/// normalization. `derived_from` names metrics this one is computed
/// from or strongly determined by; the decode order keeps sources
/// ahead of whatever they feed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricDescriptor {
    pub name: String,
    pub unit: String,
    pub positive: bool,
    pub log_scale: bool,
    pub class: MetricClass,
    pub derived_from: Vec<String>,
}

/// Ordered metric list. The order is the autoregressive decode order:
/// metrics that help predict later ones come first.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricSchema {
    pub metrics: Vec<MetricDescriptor>,
}

impl MetricSchema {
    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.metrics.iter().map(|m| m.name.as_str()).collect()
    }
}

/// Dispatch tag for the closed-form evaluator of a topology.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum EvalFn {
    Ota2Nmos,
    Ota2Pmos,
    Tia2,
    Tia3,
    Comparator,
    LevelShifter,
}

/// A benchmark circuit: parameter space, metric schema, evaluator tag.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CircuitTopology {
    pub name: String,
    pub params: Vec<ParameterDescriptor>,
    pub schema: MetricSchema,
    pub eval_fn: EvalFn,
}

impl CircuitTopology {
    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_metrics(&self) -> usize {
        self.schema.len()
    }

    /// Verifies a design's length and bounds.
    pub fn check_design(&self, design: &DesignPoint) -> Result<(), CircuitError> {
        if design.values.len() != self.params.len() {
            return Err(CircuitError::DimensionMismatch {
                topology: self.name.clone(),
                expected: self.params.len(),
                got: design.values.len(),
            });
        }
        for (p, &v) in self.params.iter().zip(&design.values) {
            if !(p.lower..=p.upper).contains(&v) || !v.is_finite() {
                return Err(CircuitError::OutOfBounds {
                    param: p.name.clone(),
                    value: v,
                    lower: p.lower,
                    upper: p.upper,
                });
            }
        }
        Ok(())
    }

    /// Midpoint of every parameter range.
    pub fn midpoint(&self) -> DesignPoint {
        DesignPoint {
            values: self.params.iter().map(|p| 0.5 * (p.lower + p.upper)).collect(),
        }
    }

    /// Nearest grid point, clamped into bounds.
    pub fn snap_to_grid(&self, values: &[f64]) -> DesignPoint {
        let values = self
            .params
            .iter()
            .zip(values)
            .map(|(p, &v)| {
                let k = ((v - p.lower) / p.step).round();
                let k = k.clamp(0.0, (p.grid_points() - 1) as f64);
                // Rounding in lower + k*step can overshoot the bound by
                // an ulp; clamp back inside.
                (p.lower + k * p.step).clamp(p.lower, p.upper)
            })
            .collect();
        DesignPoint { values }
    }
}

/// A point in a topology's parameter space, ordered like its
/// parameter descriptors.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DesignPoint {
    pub values: Vec<f64>,
}

/// Metric values ordered like the topology's schema.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PerformanceVector {
    pub values: Vec<f64>,
}

/// Which side of a threshold satisfies a constraint.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AtMost,
    AtLeast,
}

/// One design constraint, scaled so f = 0 at the threshold and f ≤ 0
/// exactly when the constraint is satisfied.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Constraint {
    pub metric: usize,
    pub direction: Direction,
    pub threshold: f64,
    pub weight: f64,
}

impl Constraint {
    /// Signed, threshold-normalized violation.
    pub fn violation(&self, value: f64) -> f64 {
        let scale = self.threshold.abs().max(1e-12);
        match self.direction {
            Direction::AtMost => (value - self.threshold) / scale,
            Direction::AtLeast => (self.threshold - value) / scale,
        }
    }
}

/// Scalar figure of merit: a weighted objective plus saturating
/// constraint penalties. Lower is better.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FoMSpec {
    pub objective: usize,
    pub objective_weight: f64,
    pub objective_direction: Direction,
    /// Divides the objective metric so its contribution is O(1).
    pub objective_scale: f64,
    pub constraints: Vec<Constraint>,
}

impl FoMSpec {
    fn check_indices(&self, perf: &PerformanceVector) -> Result<(), CircuitError> {
        let len = perf.values.len();
        let bad = |index: usize| CircuitError::BadMetricIndex { index, len };
        if self.objective >= len {
            return Err(bad(self.objective));
        }
        for c in &self.constraints {
            if c.metric >= len {
                return Err(bad(c.metric));
            }
        }
        Ok(())
    }

    /// Objective term f0: directional, scaled, lower is better.
    pub fn objective_value(&self, perf: &PerformanceVector) -> f64 {
        let v = perf.values[self.objective] / self.objective_scale;
        match self.objective_direction {
            Direction::AtMost => v,
            Direction::AtLeast => -v,
        }
    }
}

/// w0·f0 + Σ min(1, max(0, wi·fi)). Each violated constraint adds at
/// most 1, so no single violation can dominate the objective.
pub fn fom(spec: &FoMSpec, perf: &PerformanceVector) -> Result<f64, CircuitError> {
    spec.check_indices(perf)?;
    let mut total = spec.objective_weight * spec.objective_value(perf);
    for c in &spec.constraints {
        let f = c.violation(perf.values[c.metric]);
        total += (c.weight * f).clamp(0.0, 1.0);
    }
    Ok(total)
}

/// True iff every constraint is satisfied; the threshold itself counts
/// as satisfied.
pub fn constraints_met(spec: &FoMSpec, perf: &PerformanceVector) -> Result<bool, CircuitError> {
    spec.check_indices(perf)?;
    Ok(spec
        .constraints
        .iter()
        .all(|c| c.violation(perf.values[c.metric]) <= 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perf(values: &[f64]) -> PerformanceVector {
        PerformanceVector {
            values: values.to_vec(),
        }
    }

    // Constraints pinned so the violation equals a target value: with
    // threshold 1 and direction AtMost, a metric of 1 + t has f = t.
    fn constraint(weight: f64) -> Constraint {
        Constraint {
            metric: 1,
            direction: Direction::AtMost,
            threshold: 1.0,
            weight,
        }
    }

    #[test]
    fn satisfied_constraints_leave_only_the_objective() {
        let spec = FoMSpec {
            objective: 0,
            objective_weight: 1.0,
            objective_direction: Direction::AtMost,
            objective_scale: 1.0,
            constraints: vec![constraint(1.0), constraint(5.0)],
        };
        // f0 = 2, both constraints at metric 0.5 <= 1 so fi < 0.
        let p = perf(&[2.0, 0.5]);
        assert_eq!(fom(&spec, &p).unwrap(), 2.0);
        assert!(constraints_met(&spec, &p).unwrap());
    }

    #[test]
    fn violation_saturates_at_one() {
        let spec = FoMSpec {
            objective: 0,
            objective_weight: 0.0,
            objective_direction: Direction::AtMost,
            objective_scale: 1.0,
            constraints: vec![constraint(1.0)],
        };
        // f = 50 with weight 1: the penalty clamps to exactly 1.
        let p = perf(&[0.0, 51.0]);
        assert_eq!(fom(&spec, &p).unwrap(), 1.0);
        assert!(!constraints_met(&spec, &p).unwrap());
    }

    #[test]
    fn mixed_terms_sum_like_the_formula() {
        // w0=0.5, f0=-1; constraint terms wi*fi = {0.3, -0.2, 2.5}
        // -> -0.5 + 0.3 + 0 + 1 = 0.8.
        let constraints = (1..=3)
            .map(|metric| Constraint {
                metric,
                direction: Direction::AtMost,
                threshold: 1.0,
                weight: 1.0,
            })
            .collect();
        let spec = FoMSpec {
            objective: 0,
            objective_weight: 0.5,
            objective_direction: Direction::AtMost,
            objective_scale: 1.0,
            constraints,
        };
        let p = perf(&[-1.0, 1.3, 0.8, 3.5]);
        let value = fom(&spec, &p).unwrap();
        assert!((value - 0.8).abs() < 1e-12, "got {value}");
    }

    #[test]
    fn boundary_counts_as_satisfied() {
        let spec = FoMSpec {
            objective: 0,
            objective_weight: 1.0,
            objective_direction: Direction::AtMost,
            objective_scale: 1.0,
            constraints: vec![constraint(1.0)],
        };
        let p = perf(&[0.0, 1.0]);
        assert!(constraints_met(&spec, &p).unwrap());
        assert_eq!(fom(&spec, &p).unwrap(), 0.0);
    }

    #[test]
    fn empty_constraint_list_is_met() {
        let spec = FoMSpec {
            objective: 0,
            objective_weight: 1.0,
            objective_direction: Direction::AtLeast,
            objective_scale: 2.0,
            constraints: vec![],
        };
        let p = perf(&[3.0]);
        assert!(constraints_met(&spec, &p).unwrap());
        assert_eq!(fom(&spec, &p).unwrap(), -1.5);
    }

    #[test]
    fn bad_metric_index_is_rejected() {
        let spec = FoMSpec {
            objective: 5,
            objective_weight: 1.0,
            objective_direction: Direction::AtMost,
            objective_scale: 1.0,
            constraints: vec![],
        };
        assert!(fom(&spec, &perf(&[1.0])).is_err());
    }

    #[test]
    fn randomized_constraints_agree_with_brute_force() {
        use crate::numerics::Rng;
        let mut rng = Rng::seed_from(99);
        for _ in 0..200 {
            let m = 1 + rng.below(4);
            let n_cons = rng.below(4);
            let constraints: Vec<Constraint> = (0..n_cons)
                .map(|_| Constraint {
                    metric: rng.below(m),
                    direction: if rng.uniform() < 0.5 {
                        Direction::AtMost
                    } else {
                        Direction::AtLeast
                    },
                    threshold: rng.range(-5.0, 5.0),
                    weight: rng.range(0.1, 3.0),
                })
                .collect();
            let spec = FoMSpec {
                objective: rng.below(m),
                objective_weight: rng.range(-2.0, 2.0),
                objective_direction: Direction::AtMost,
                objective_scale: 1.0,
                constraints,
            };
            let p = perf(&(0..m).map(|_| rng.range(-10.0, 10.0)).collect::<Vec<_>>());

            let expected = spec.constraints.iter().all(|c| {
                let v = p.values[c.metric];
                match c.direction {
                    Direction::AtMost => v <= c.threshold,
                    Direction::AtLeast => v >= c.threshold,
                }
            });
            assert_eq!(constraints_met(&spec, &p).unwrap(), expected);

            // Constraint penalties stay within [0, count].
            let total = fom(&spec, &p).unwrap();
            let objective = spec.objective_weight * spec.objective_value(&p);
            let penalty = total - objective;
            assert!(penalty >= -1e-12 && penalty <= spec.constraints.len() as f64 + 1e-12);
        }
    }
}
