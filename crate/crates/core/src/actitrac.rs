//! Active trace clustering.
//!
//! Clusters are built one at a time from the variants not yet assigned:
//!
//! 1. *Selection.* The most frequent unassigned variant seeds the cluster.
//!    A candidate window (the first `window` fraction of the other
//!    unassigned variants, fixed when the cluster starts) is scanned either
//!    in canonical order or nearest-first by mean feature distance to the
//!    current members. A candidate is accepted when the model re-mined on
//!    members plus candidate keeps the weighted fitness at or above target.
//! 2. *Look-ahead.* With the selection model frozen, every other unassigned
//!    variant that individually replays at or above target joins.
//! 3. *Residual resolution.* A cluster smaller than `min_cluster_size`
//!    traces is dissolved: its seed goes to the residual pool, the rest
//!    return to the unassigned set.
//!
//! The loop stops at `max_clusters` or when nothing is left; whatever
//! remains joins the residual.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{canonical_order, TraceVariant};
use crate::procmodel::{FitnessEvaluator, MiningParams, ProcessModel};
use crate::repeats::{euclidean, FeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Frequency,
    Distance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringConfig {
    pub target_fitness: f64,
    pub max_clusters: usize,
    /// Counted in traces (summed variant frequencies).
    pub min_cluster_size: usize,
    pub window: f64,
    pub sampling: Sampling,
    pub mining: MiningParams,
    /// Reject, during selection, candidates with no activity in common with
    /// the cluster's current members.
    pub require_shared_activity: bool,
    /// Divide feature counts by trace length before computing distances.
    pub normalize_features: bool,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            target_fitness: 0.95,
            max_clusters: 24,
            min_cluster_size: 4,
            window: 0.5,
            sampling: Sampling::Distance,
            mining: MiningParams::default(),
            require_shared_activity: true,
            normalize_features: false,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.target_fitness) {
            return Err(Error::Config(format!(
                "target_fitness must be in [0, 1], got {}",
                self.target_fitness
            )));
        }
        if !(self.window > 0.0 && self.window <= 1.0) {
            return Err(Error::Config(format!(
                "window must be in (0, 1], got {}",
                self.window
            )));
        }
        if self.min_cluster_size == 0 {
            return Err(Error::Config("min_cluster_size must be at least 1".into()));
        }
        self.mining.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster<M = ProcessModel> {
    /// 1-based, in order of creation.
    pub id: usize,
    /// Members in canonical variant order.
    pub members: Vec<TraceVariant>,
    pub model: M,
    pub fitness: f64,
}

impl<M> Cluster<M> {
    pub fn trace_count(&self) -> usize {
        self.members.iter().map(|v| v.frequency).sum()
    }

    pub fn case_ids(&self) -> impl Iterator<Item = &str> {
        self.members
            .iter()
            .flat_map(|v| v.member_case_ids.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult<M = ProcessModel> {
    pub clusters: Vec<Cluster<M>>,
    /// Unassigned variants in canonical order.
    pub residual: Vec<TraceVariant>,
}

impl<M> ClusteringResult<M> {
    pub fn residual_trace_count(&self) -> usize {
        self.residual.iter().map(|v| v.frequency).sum()
    }

    pub fn trace_count(&self) -> usize {
        self.clusters
            .iter()
            .map(Cluster::trace_count)
            .sum::<usize>()
            + self.residual_trace_count()
    }
}

fn activity_set(v: &TraceVariant) -> BTreeSet<&str> {
    v.activities.iter().map(String::as_str).collect()
}

/// Runs the three-phase clustering. `vectors[i]` must describe
/// `variants[i]`; the variants may come in any order and are processed in
/// canonical order. Candidate distances and look-ahead fitness are evaluated
/// on the current rayon pool; the result does not depend on its size.
pub fn cluster<E: FitnessEvaluator>(
    variants: &[TraceVariant],
    config: &ClusteringConfig,
    evaluator: &E,
    vectors: &[FeatureVector],
) -> Result<ClusteringResult<E::Model>> {
    config.validate()?;
    if vectors.len() != variants.len() {
        return Err(Error::Dimension {
            left: variants.len(),
            right: vectors.len(),
        });
    }
    let mut order: Vec<usize> = (0..variants.len()).collect();
    order.sort_by(|&a, &b| canonical_order(&variants[a], &variants[b]).then(a.cmp(&b)));

    let mut unassigned: Vec<usize> = order;
    let mut residual_pool: Vec<usize> = Vec::new();
    let mut clusters: Vec<Cluster<E::Model>> = Vec::new();

    while clusters.len() < config.max_clusters && !unassigned.is_empty() {
        let seed = unassigned[0];
        let rest = &unassigned[1..];
        let window_len = ((config.window * rest.len() as f64).ceil() as usize).min(rest.len());
        let mut candidates: Vec<usize> = rest[..window_len].to_vec();

        let mut members = vec![seed];
        let mut activities = activity_set(&variants[seed]);
        let mut model = evaluator.mine(&[&variants[seed]])?;

        // Sum of distances from each candidate to the current members; the
        // mean differs only by the common member count.
        let mut distance_sums: Vec<f64> = match config.sampling {
            Sampling::Distance => distances_to(&candidates, seed, vectors)?,
            Sampling::Frequency => Vec::new(),
        };

        while !candidates.is_empty() {
            let pick = match config.sampling {
                Sampling::Frequency => 0,
                Sampling::Distance => nearest(&distance_sums),
            };
            let candidate = candidates.remove(pick);
            if config.sampling == Sampling::Distance {
                distance_sums.remove(pick);
            }
            let variant = &variants[candidate];
            if config.require_shared_activity
                && !variant
                    .activities
                    .iter()
                    .any(|a| activities.contains(a.as_str()))
            {
                continue;
            }
            let trial_members: Vec<&TraceVariant> = members
                .iter()
                .chain(std::iter::once(&candidate))
                .map(|&i| &variants[i])
                .collect();
            let trial = evaluator.mine(&trial_members)?;
            if evaluator.log_fitness(&trial_members, &trial) >= config.target_fitness {
                members.push(candidate);
                activities.extend(variant.activities.iter().map(String::as_str));
                model = trial;
                if config.sampling == Sampling::Distance {
                    let added = distances_to(&candidates, candidate, vectors)?;
                    for (sum, d) in distance_sums.iter_mut().zip(added) {
                        *sum += d;
                    }
                }
            }
        }

        let outside: Vec<usize> = unassigned
            .iter()
            .copied()
            .filter(|i| !members.contains(i))
            .collect();
        let look_ahead: Vec<bool> = outside
            .par_iter()
            .map(|&i| evaluator.trace_fitness(&variants[i], &model) >= config.target_fitness)
            .collect();
        members.extend(
            outside
                .iter()
                .zip(look_ahead)
                .filter_map(|(&i, fits)| fits.then_some(i)),
        );

        let member_set: BTreeSet<usize> = members.iter().copied().collect();
        let ordered: Vec<&TraceVariant> = unassigned
            .iter()
            .filter(|i| member_set.contains(i))
            .map(|&i| &variants[i])
            .collect();
        let size: usize = ordered.iter().map(|v| v.frequency).sum();
        let fitness = evaluator.log_fitness(&ordered, &model);

        if size >= config.min_cluster_size && fitness >= config.target_fitness {
            let members: Vec<TraceVariant> = ordered.into_iter().cloned().collect();
            clusters.push(Cluster {
                id: clusters.len() + 1,
                members,
                model,
                fitness,
            });
            unassigned.retain(|i| !member_set.contains(i));
        } else {
            residual_pool.push(seed);
            unassigned.remove(0);
        }
    }

    residual_pool.extend(unassigned);
    let mut residual: Vec<TraceVariant> = residual_pool
        .into_iter()
        .map(|i| variants[i].clone())
        .collect();
    residual.sort_by(canonical_order);
    Ok(ClusteringResult { clusters, residual })
}

fn distances_to(
    candidates: &[usize],
    member: usize,
    vectors: &[FeatureVector],
) -> Result<Vec<f64>> {
    candidates
        .par_iter()
        .map(|&c| euclidean(&vectors[c], &vectors[member]))
        .collect()
}

/// Index of the smallest value; the first one wins ties.
fn nearest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}
