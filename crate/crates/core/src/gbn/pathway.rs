//! Multi-hop causal pathways built by chaining per-target models.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::model::CausalModel;
use crate::data::SeriesKey;
use crate::error::{Error, Result};

/// A trained model together with held-out accuracies of the full model and
/// of its local-only counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayNodeModel {
    pub model: CausalModel,
    pub local_accuracy: f64,
    pub full_accuracy: f64,
}

impl PathwayNodeModel {
    /// The node's own history predicts it better than its causers do.
    pub fn local_wins(&self) -> bool {
        self.local_accuracy > self.full_accuracy
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayEdge {
    pub cause: SeriesKey,
    pub effect: SeriesKey,
    /// Distance of the effect from the root, plus one.
    pub hop: usize,
    /// `(cluster, weight)` for every cluster whose parents contain the cause.
    pub weights: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayGraph {
    pub root: SeriesKey,
    pub nodes: Vec<SeriesKey>,
    pub edges: Vec<PathwayEdge>,
}

/// Breadth-first expansion from `root` through each model's neighbor
/// parents, up to `max_hops`. A node whose local-only model is more accurate
/// is not expanded.
pub fn expand_pathway(models: &BTreeMap<SeriesKey, PathwayNodeModel>, root: &SeriesKey, max_hops: usize) -> Result<PathwayGraph> {
    let mut nodes = vec![root.clone()];
    let mut seen: BTreeSet<SeriesKey> = BTreeSet::from([root.clone()]);
    let mut edges = Vec::new();
    let mut queue = VecDeque::from([(root.clone(), 0usize)]);
    while let Some((node, depth)) = queue.pop_front() {
        if depth >= max_hops {
            continue;
        }
        let entry = models.get(&node).ok_or_else(|| Error::MissingModel(node.to_string()))?;
        if entry.local_wins() {
            continue;
        }
        let m = &entry.model;
        for cause in m.neighbor_series() {
            let weights: Vec<(usize, f64)> = m
                .clusters
                .iter()
                .enumerate()
                .filter(|(_, c)| c.parents.neighbors.contains(&cause))
                .map(|(k, _)| (k, m.cluster_weights[k]))
                .collect();
            edges.push(PathwayEdge {
                cause: cause.clone(),
                effect: node.clone(),
                hop: depth + 1,
                weights,
            });
            if seen.insert(cause.clone()) {
                nodes.push(cause.clone());
                queue.push_back((cause, depth + 1));
            }
        }
    }
    Ok(PathwayGraph {
        root: root.clone(),
        nodes,
        edges,
    })
}

impl PathwayGraph {
    /// Graphviz rendering; edge labels give cluster weights in percent.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph pathway {\n  rankdir=LR;\n");
        for n in &self.nodes {
            let shape = if *n == self.root { "doublecircle" } else { "circle" };
            let _ = writeln!(out, "  \"{n}\" [shape={shape}];");
        }
        for e in &self.edges {
            let label: Vec<String> = e.weights.iter().map(|(k, w)| format!("k{k}:{:.1}%", w * 100.0)).collect();
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}\", hop={}];",
                e.cause,
                e.effect,
                label.join(" "),
                e.hop
            );
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
