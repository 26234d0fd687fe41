//! Directly-follows process models with dependency filtering, and the replay
//! fitness used to score traces against them.
//!
//! A pair `(a, b)` observed `c(a,b)` times is kept as an edge when
//! `c(a,b) >= min_pair_observations` and its dependency
//! `(c(a,b) - c(b,a)) / (c(a,b) + c(b,a) + 1)` reaches the threshold. For a
//! self-loop the two counts coincide, so its dependency is `c / (c + 1)`.
//!
//! Replaying a trace of length `n` performs `n + 1` checks (first activity is
//! a start, each consecutive pair is an edge, last activity is an end); the
//! fitness is the fraction that pass.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::TraceVariant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiningParams {
    pub dependency_threshold: f64,
    pub min_pair_observations: usize,
}

impl Default for MiningParams {
    fn default() -> Self {
        MiningParams {
            dependency_threshold: 0.5,
            min_pair_observations: 1,
        }
    }
}

impl MiningParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dependency_threshold) {
            return Err(Error::Config(format!(
                "dependency_threshold must be in [0, 1), got {}",
                self.dependency_threshold
            )));
        }
        if self.min_pair_observations == 0 {
            return Err(Error::Config(
                "min_pair_observations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

pub type Pair = (String, String);

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProcessModel {
    pub edges: BTreeSet<Pair>,
    pub starts: BTreeSet<String>,
    pub ends: BTreeSet<String>,
    /// Directly-follows observations, including pairs filtered out of `edges`.
    #[serde(with = "pair_counts")]
    pub counts: BTreeMap<Pair, usize>,
    pub start_counts: BTreeMap<String, usize>,
    pub end_counts: BTreeMap<String, usize>,
}

impl ProcessModel {
    pub fn count(&self, a: &str, b: &str) -> usize {
        // BTreeMap<(String, String), _> cannot be queried with borrowed
        // halves, so scan the range for `a`.
        self.counts
            .range((a.to_owned(), String::new())..)
            .take_while(|((x, _), _)| x == a)
            .find(|((_, y), _)| y == b)
            .map_or(0, |(_, &c)| c)
    }

    pub fn dependency(&self, a: &str, b: &str) -> f64 {
        dependency(self.count(a, b), self.count(b, a), a == b)
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        self.edges
            .range((a.to_owned(), b.to_owned())..=(a.to_owned(), b.to_owned()))
            .next()
            .is_some()
    }

    pub fn activities(&self) -> BTreeSet<&str> {
        self.counts
            .keys()
            .flat_map(|(a, b)| [a.as_str(), b.as_str()])
            .chain(self.starts.iter().map(String::as_str))
            .chain(self.ends.iter().map(String::as_str))
            .collect()
    }
}

/// JSON object keys must be strings, so pair counts travel as
/// `[from, to, count]` triples.
mod pair_counts {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Pair;

    pub fn serialize<S: Serializer>(map: &BTreeMap<Pair, usize>, s: S) -> Result<S::Ok, S::Error> {
        let triples: Vec<(&str, &str, usize)> = map
            .iter()
            .map(|((a, b), &c)| (a.as_str(), b.as_str(), c))
            .collect();
        triples.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Pair, usize>, D::Error> {
        let triples = Vec::<(String, String, usize)>::deserialize(d)?;
        Ok(triples.into_iter().map(|(a, b, c)| ((a, b), c)).collect())
    }
}

fn dependency(ab: usize, ba: usize, self_loop: bool) -> f64 {
    if self_loop {
        ab as f64 / (ab as f64 + 1.0)
    } else {
        (ab as f64 - ba as f64) / (ab as f64 + ba as f64 + 1.0)
    }
}

/// Mines a model from variants, weighting every observation by the
/// variant's frequency.
pub fn mine<'a, I>(variants: I, params: &MiningParams) -> Result<ProcessModel>
where
    I: IntoIterator<Item = &'a TraceVariant>,
{
    let mut model = ProcessModel::default();
    let mut any = false;
    for v in variants {
        let (Some(first), Some(last)) = (v.activities.first(), v.activities.last()) else {
            continue;
        };
        any = true;
        let f = v.frequency;
        *model.start_counts.entry(first.clone()).or_default() += f;
        *model.end_counts.entry(last.clone()).or_default() += f;
        for w in v.activities.windows(2) {
            *model
                .counts
                .entry((w[0].clone(), w[1].clone()))
                .or_default() += f;
        }
    }
    if !any {
        return Err(Error::Empty(
            "cannot mine a model from an empty variant set",
        ));
    }
    model.starts = model.start_counts.keys().cloned().collect();
    model.ends = model.end_counts.keys().cloned().collect();
    model.edges = model
        .counts
        .iter()
        .filter(|((a, b), &c)| {
            let reverse = model.count(b, a);
            c >= params.min_pair_observations
                && dependency(c, reverse, a == b) >= params.dependency_threshold
        })
        .map(|(pair, _)| pair.clone())
        .collect();
    Ok(model)
}

/// Fraction of the `n + 1` start/transition/end checks that pass. An empty
/// trace scores 0.
pub fn replay_fitness(activities: &[String], model: &ProcessModel) -> f64 {
    let (Some(first), Some(last)) = (activities.first(), activities.last()) else {
        return 0.0;
    };
    let checks = activities.len() + 1;
    let mut passed =
        usize::from(model.starts.contains(first)) + usize::from(model.ends.contains(last));
    passed += activities
        .windows(2)
        .filter(|w| model.has_edge(&w[0], &w[1]))
        .count();
    if passed == checks {
        1.0
    } else {
        passed as f64 / checks as f64
    }
}

/// Frequency-weighted mean replay fitness.
pub fn log_fitness<'a, I>(variants: I, model: &ProcessModel) -> Result<f64>
where
    I: IntoIterator<Item = &'a TraceVariant>,
{
    let mut weighted = 0.0;
    let mut total = 0usize;
    for v in variants {
        weighted += v.frequency as f64 * replay_fitness(&v.activities, model);
        total += v.frequency;
    }
    if total == 0 {
        return Err(Error::Empty("cannot score an empty variant set"));
    }
    Ok(weighted / total as f64)
}

/// Discovers a model from a group of variants and scores variants against
/// it. The clustering engine only talks to this trait.
pub trait FitnessEvaluator: Sync {
    type Model: Clone + Send + Sync;

    fn mine(&self, variants: &[&TraceVariant]) -> Result<Self::Model>;

    fn trace_fitness(&self, variant: &TraceVariant, model: &Self::Model) -> f64;

    fn log_fitness(&self, variants: &[&TraceVariant], model: &Self::Model) -> f64 {
        let total: usize = variants.iter().map(|v| v.frequency).sum();
        if total == 0 {
            return 0.0;
        }
        let weighted: f64 = variants
            .iter()
            .map(|v| v.frequency as f64 * self.trace_fitness(v, model))
            .sum();
        weighted / total as f64
    }
}

/// Directly-follows mining with replay fitness.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DirectlyFollows {
    pub params: MiningParams,
}

impl FitnessEvaluator for DirectlyFollows {
    type Model = ProcessModel;

    fn mine(&self, variants: &[&TraceVariant]) -> Result<ProcessModel> {
        mine(variants.iter().copied(), &self.params)
    }

    fn trace_fitness(&self, variant: &TraceVariant, model: &ProcessModel) -> f64 {
        replay_fitness(&variant.activities, model)
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering: one node per activity, edges labelled with their
/// observation count and dependency, plus start/end markers.
pub fn to_dot(model: &ProcessModel, name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{}\" {{", dot_escape(name));
    out.push_str("  rankdir=LR;\n");
    out.push_str("  node [shape=box, style=rounded];\n");
    out.push_str("  \"__start\" [label=\"\", shape=circle, style=filled, fillcolor=green];\n");
    out.push_str("  \"__end\" [label=\"\", shape=doublecircle, style=filled, fillcolor=red];\n");
    for a in model.activities() {
        let _ = writeln!(out, "  \"{0}\" [label=\"{0}\"];", dot_escape(a));
    }
    for (a, c) in &model.start_counts {
        let _ = writeln!(
            out,
            "  \"__start\" -> \"{}\" [label=\"{c}\"];",
            dot_escape(a)
        );
    }
    for (a, b) in &model.edges {
        let _ = writeln!(
            out,
            "  \"{}\" -> \"{}\" [label=\"{} ({:.3})\"];",
            dot_escape(a),
            dot_escape(b),
            model.count(a, b),
            model.dependency(a, b)
        );
    }
    for (a, c) in &model.end_counts {
        let _ = writeln!(out, "  \"{}\" -> \"__end\" [label=\"{c}\"];", dot_escape(a));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|x| x.to_string()).collect()
    }

    fn variant(xs: &[&str], freq: usize) -> TraceVariant {
        TraceVariant::new(s(xs), (0..freq).map(|i| format!("{xs:?}-{i}")).collect())
    }

    fn params(threshold: f64) -> MiningParams {
        MiningParams {
            dependency_threshold: threshold,
            min_pair_observations: 1,
        }
    }

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|x| x.to_string()).collect()
    }

    fn pairs(xs: &[(&str, &str)]) -> BTreeSet<Pair> {
        xs.iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    #[test]
    fn mine_single_trace() {
        let m = mine([&variant(&["a", "b", "c"], 1)], &params(0.4)).unwrap();
        assert_eq!(m.edges, pairs(&[("a", "b"), ("b", "c")]));
        assert_eq!(m.dependency("a", "b"), 0.5);
        assert_eq!(m.starts, set(&["a"]));
        assert_eq!(m.ends, set(&["c"]));
    }

    #[test]
    fn model_json_round_trip() {
        let m = mine(
            [&variant(&["a", "b", "c"], 3), &variant(&["a", "c"], 1)],
            &params(0.5),
        )
        .unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains(r#"["a","b",3]"#), "{json}");
        assert_eq!(serde_json::from_str::<ProcessModel>(&json).unwrap(), m);
    }

    #[test]
    fn mine_contradicting_pairs() {
        let m = mine(
            [&variant(&["a", "b"], 1), &variant(&["b", "a"], 1)],
            &params(0.4),
        )
        .unwrap();
        assert_eq!(m.dependency("a", "b"), 0.0);
        assert!(m.edges.is_empty());
        assert_eq!(m.starts, set(&["a", "b"]));
        assert_eq!(m.ends, set(&["a", "b"]));
    }

    #[test]
    fn mine_empty_is_an_error() {
        assert!(mine(std::iter::empty(), &MiningParams::default()).is_err());
    }

    #[test]
    fn min_pair_observations_filters_rare_pairs() {
        let m = mine(
            [&variant(&["a", "b"], 3), &variant(&["c", "d"], 1)],
            &MiningParams {
                dependency_threshold: 0.0,
                min_pair_observations: 2,
            },
        )
        .unwrap();
        assert_eq!(m.edges, pairs(&[("a", "b")]));
    }

    #[test]
    fn self_loops_use_the_loop_dependency() {
        let m = mine([&variant(&["a", "a", "b"], 1)], &MiningParams::default()).unwrap();
        assert_eq!(m.dependency("a", "a"), 0.5);
        assert!(m.has_edge("a", "a"));
        assert_eq!(replay_fitness(&s(&["a", "a", "b"]), &m), 1.0);
    }

    fn ab_model() -> ProcessModel {
        ProcessModel {
            edges: pairs(&[("a", "b")]),
            starts: set(&["a"]),
            ends: set(&["b"]),
            ..ProcessModel::default()
        }
    }

    #[test]
    fn replay_examples() {
        let abc = variant(&["a", "b", "c"], 1);
        let own = mine([&abc], &MiningParams::default()).unwrap();
        assert_eq!(replay_fitness(&abc.activities, &own), 1.0);
        assert_eq!(replay_fitness(&s(&["b", "a"]), &ab_model()), 0.0);
        assert_eq!(replay_fitness(&s(&["a", "b", "x"]), &ab_model()), 0.5);
        // a single activity has two checks
        let a_only = ProcessModel {
            starts: set(&["a"]),
            ..ProcessModel::default()
        };
        assert_eq!(replay_fitness(&s(&["a"]), &a_only), 0.5);
    }

    #[test]
    fn log_fitness_examples() {
        let v = variant(&["a", "b", "c"], 3);
        let m = mine([&v], &MiningParams::default()).unwrap();
        assert_eq!(log_fitness([&v], &m).unwrap(), 1.0);

        let full = variant(&["a", "b"], 3);
        let half = variant(&["a", "b", "x"], 1);
        assert_eq!(log_fitness([&full, &half], &ab_model()).unwrap(), 0.875);

        let heavier = variant(&["a", "b", "x"], 5);
        assert!(log_fitness([&full, &heavier], &ab_model()).unwrap() < 0.875);
        assert!(log_fitness(std::iter::empty(), &ab_model()).is_err());
    }

    #[test]
    fn evaluator_matches_free_functions() {
        let a = variant(&["a", "b"], 3);
        let b = variant(&["a", "b", "x"], 1);
        let eval = DirectlyFollows::default();
        let m = eval.mine(&[&a, &b]).unwrap();
        assert_eq!(m, mine([&a, &b], &MiningParams::default()).unwrap());
        assert_eq!(
            eval.log_fitness(&[&a, &b], &m),
            log_fitness([&a, &b], &m).unwrap()
        );
    }

    #[test]
    fn params_validation() {
        assert!(MiningParams::default().validate().is_ok());
        assert!(params(1.0).validate().is_err());
        assert!(params(-0.1).validate().is_err());
        let zero = MiningParams {
            min_pair_observations: 0,
            ..MiningParams::default()
        };
        assert!(zero.validate().is_err());
    }

    #[test]
    fn dot_lists_edges_with_counts() {
        let m = mine([&variant(&["a", "b\"q", "c"], 2)], &MiningParams::default()).unwrap();
        let dot = to_dot(&m, "cluster 1");
        assert!(dot.starts_with("digraph \"cluster 1\" {"));
        assert!(dot.contains("\"a\" -> \"b\\\"q\" [label=\"2 (0.667)\"];"));
        assert!(dot.contains("\"__start\" -> \"a\" [label=\"2\"];"));
        assert!(dot.contains("\"c\" -> \"__end\""));
        assert!(dot.trim_end().ends_with('}'));
    }
}
