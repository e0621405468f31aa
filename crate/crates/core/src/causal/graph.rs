use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub feature: String,
    pub in_degree: usize,
    pub out_degree: usize,
    /// Max-minus-min acceptance rate across the feature's values, in [0, 1].
    pub spd_range: f64,
    pub sensitive: bool,
    pub target: bool,
    pub unfair: bool,
    /// Normalized model importance; only present in the model view.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub importance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: String,
    pub dst: String,
    /// Aggregated absolute weight on standardized data.
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub converged: bool,
    pub h: f64,
    pub omega: f64,
    pub lambda: f64,
    pub dropped_rows: usize,
    /// Edges that pointed out of the target and were flipped toward it.
    #[serde(default)]
    pub reoriented: Vec<(String, String)>,
    /// Thresholded edges discarded to keep the feature graph acyclic.
    #[serde(default)]
    pub dropped_for_cycles: Vec<(String, String)>,
    #[serde(default)]
    pub fingerprint: String,
    pub strength_units: String,
}

impl GraphMeta {
    pub fn new(omega: f64, lambda: f64) -> Self {
        Self {
            converged: true,
            h: 0.0,
            omega,
            lambda,
            dropped_rows: 0,
            reoriented: Vec::new(),
            dropped_for_cycles: Vec::new(),
            fingerprint: String::new(),
            strength_units: "max absolute standardized weight".into(),
        }
    }
}

/// Feature-level causal graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    pub meta: GraphMeta,
}

impl CausalGraph {
    /// Graph on `features` with the given edges (indices into `features`).
    pub fn from_edges(
        features: &[String],
        target: Option<&str>,
        edges: &[(usize, usize, f64)],
        meta: GraphMeta,
    ) -> Self {
        let nodes = features
            .iter()
            .map(|f| GraphNode {
                feature: f.clone(),
                in_degree: 0,
                out_degree: 0,
                spd_range: 0.0,
                sensitive: false,
                target: Some(f.as_str()) == target,
                unfair: false,
                importance: None,
            })
            .collect();
        let mut g = Self {
            nodes,
            edges: edges
                .iter()
                .map(|&(s, d, w)| GraphEdge {
                    src: features[s].clone(),
                    dst: features[d].clone(),
                    strength: w,
                })
                .collect(),
            meta,
        };
        g.recompute_degrees();
        g
    }

    pub fn recompute_degrees(&mut self) {
        for n in &mut self.nodes {
            n.in_degree = 0;
            n.out_degree = 0;
        }
        let pos: BTreeMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.feature.as_str(), i))
            .collect();
        let mut deg = vec![(0, 0); self.nodes.len()];
        for e in &self.edges {
            deg[pos[e.src.as_str()]].1 += 1;
            deg[pos[e.dst.as_str()]].0 += 1;
        }
        for (n, (i, o)) in self.nodes.iter_mut().zip(deg) {
            n.in_degree = i;
            n.out_degree = o;
        }
    }

    pub fn node(&self, feature: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.feature == feature)
    }

    pub fn node_mut(&mut self, feature: &str) -> Option<&mut GraphNode> {
        self.nodes.iter_mut().find(|n| n.feature == feature)
    }

    pub fn has_edge(&self, src: &str, dst: &str) -> bool {
        self.edges.iter().any(|e| e.src == src && e.dst == dst)
    }

    pub fn target(&self) -> Option<&str> {
        self.nodes.iter().find(|n| n.target).map(|n| n.feature.as_str())
    }

    /// Kahn topological order of node names, or `None` if there is a cycle.
    pub fn topological_order(&self) -> Option<Vec<String>> {
        let idx: BTreeMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.feature.as_str(), i))
            .collect();
        let mut indeg = vec![0usize; self.nodes.len()];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            let (s, d) = (idx[e.src.as_str()], idx[e.dst.as_str()]);
            out[s].push(d);
            indeg[d] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..self.nodes.len()).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(i) = ready.pop_first() {
            order.push(self.nodes[i].feature.clone());
            for &j in &out[i] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.insert(j);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }
}

fn reaches(adj: &[Vec<usize>], from: usize, to: usize) -> bool {
    let mut stack = vec![from];
    let mut seen = vec![false; adj.len()];
    while let Some(v) = stack.pop() {
        if v == to {
            return true;
        }
        if std::mem::replace(&mut seen[v], true) {
            continue;
        }
        stack.extend(adj[v].iter().copied());
    }
    false
}

/// Collapse encoded-column weights to a feature graph.
///
/// Feature strength `a -> b` is the max `|W[i, j]|` over encoded columns `i`
/// of `a` and `j` of `b`; edges below `omega` are discarded. Edges leaving
/// the target are flipped to point at it. Remaining two-cycles keep the
/// stronger direction, and any longer cycle is broken by inserting edges in
/// descending strength and skipping those that would close a cycle.
pub fn aggregate_to_features(
    w: &DMatrix<f64>,
    column_map: &[usize],
    features: &[String],
    target: Option<&str>,
    omega: f64,
    mut meta: GraphMeta,
) -> Result<CausalGraph> {
    if w.nrows() != column_map.len() || w.ncols() != column_map.len() {
        return Err(Error::Validation(format!(
            "weight matrix is {}x{} but {} encoded columns were given",
            w.nrows(),
            w.ncols(),
            column_map.len()
        )));
    }
    if let Some(&bad) = column_map.iter().find(|&&f| f >= features.len()) {
        return Err(Error::Validation(format!("column map references feature {bad}")));
    }
    let k = features.len();
    let target_idx = target.and_then(|t| features.iter().position(|f| f == t));
    let mut strength = vec![vec![0.0f64; k]; k];
    for i in 0..w.nrows() {
        for j in 0..w.ncols() {
            let (a, b) = (column_map[i], column_map[j]);
            if a != b {
                strength[a][b] = strength[a][b].max(w[(i, j)].abs());
            }
        }
    }
    let mut kept = vec![vec![0.0f64; k]; k];
    for a in 0..k {
        for b in 0..k {
            if a == b || strength[a][b] < omega || strength[a][b] == 0.0 {
                continue;
            }
            if Some(a) == target_idx {
                meta.reoriented.push((features[a].clone(), features[b].clone()));
                kept[b][a] = kept[b][a].max(strength[a][b]);
            } else {
                kept[a][b] = kept[a][b].max(strength[a][b]);
            }
        }
    }
    let mut candidates = Vec::new();
    for a in 0..k {
        for b in 0..k {
            if kept[a][b] == 0.0 {
                continue;
            }
            let reverse = kept[b][a];
            if reverse > kept[a][b] || (reverse == kept[a][b] && b < a) {
                meta.dropped_for_cycles.push((features[a].clone(), features[b].clone()));
                continue;
            }
            candidates.push((a, b, kept[a][b]));
        }
    }
    candidates.sort_by(|x, y| y.2.total_cmp(&x.2).then((x.0, x.1).cmp(&(y.0, y.1))));
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut edges = Vec::new();
    for (a, b, s) in candidates {
        if reaches(&adj, b, a) {
            meta.dropped_for_cycles.push((features[a].clone(), features[b].clone()));
            continue;
        }
        adj[a].push(b);
        edges.push((a, b, s));
    }
    edges.sort_by_key(|&(a, b, _)| (a, b));
    Ok(CausalGraph::from_edges(features, target, &edges, meta))
}

/// Induced subgraph on `keep` plus the target.
pub fn drill_down(graph: &CausalGraph, keep: &[String]) -> CausalGraph {
    let keep: BTreeSet<&str> = keep.iter().map(String::as_str).collect();
    let retained = |f: &str, is_target: bool| is_target || keep.contains(f);
    let nodes: Vec<GraphNode> = graph
        .nodes
        .iter()
        .filter(|n| retained(&n.feature, n.target))
        .cloned()
        .collect();
    let names: BTreeSet<&str> = nodes.iter().map(|n| n.feature.as_str()).collect();
    let edges = graph
        .edges
        .iter()
        .filter(|e| names.contains(e.src.as_str()) && names.contains(e.dst.as_str()))
        .cloned()
        .collect();
    let mut out = CausalGraph {
        nodes,
        edges,
        meta: graph.meta.clone(),
    };
    out.recompute_degrees();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    fn meta() -> GraphMeta {
        GraphMeta::new(0.3, 0.05)
    }

    #[test]
    fn singleton_weight() {
        let mut w = DMatrix::zeros(2, 2);
        w[(0, 1)] = 0.8;
        let g = aggregate_to_features(&w, &[0, 1], &names(&["a", "b"]), None, 0.3, meta()).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].strength, 0.8);
        assert_eq!(g.node("a").unwrap().out_degree, 1);
        assert_eq!(g.node("b").unwrap().in_degree, 1);
    }

    #[test]
    fn max_over_encoded_columns() {
        // feature a has columns 0 and 1, b has column 2
        let mut w = DMatrix::zeros(3, 3);
        w[(0, 2)] = 0.4;
        w[(1, 2)] = -0.9;
        w[(0, 1)] = 5.0; // within-feature weight is ignored
        let g = aggregate_to_features(&w, &[0, 0, 1], &names(&["a", "b"]), None, 0.3, meta()).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].strength, 0.9);
    }

    #[test]
    fn target_edges_point_inward() {
        let mut w = DMatrix::zeros(2, 2);
        w[(1, 0)] = 0.5;
        let g = aggregate_to_features(&w, &[0, 1], &names(&["x", "y"]), Some("y"), 0.3, meta()).unwrap();
        assert!(g.has_edge("x", "y"));
        assert_eq!(g.node("y").unwrap().out_degree, 0);
        assert_eq!(g.meta.reoriented, vec![("y".to_string(), "x".to_string())]);
    }

    #[test]
    fn cycles_broken_by_strength() {
        // a -> b (0.9), b -> c (0.8), c -> a (0.5) at feature level
        let mut w = DMatrix::zeros(3, 3);
        w[(0, 1)] = 0.9;
        w[(1, 2)] = 0.8;
        w[(2, 0)] = 0.5;
        let g = aggregate_to_features(&w, &[0, 1, 2], &names(&["a", "b", "c"]), None, 0.3, meta()).unwrap();
        assert!(g.is_acyclic());
        assert_eq!(g.edges.len(), 2);
        assert!(!g.has_edge("c", "a"));
    }

    #[test]
    fn drill_down_induced() {
        let mut w = DMatrix::zeros(3, 3);
        w[(0, 2)] = 0.9;
        w[(1, 2)] = 0.8;
        w[(0, 1)] = 0.5;
        let f = names(&["age", "income", "result"]);
        let g = aggregate_to_features(&w, &[0, 1, 2], &f, Some("result"), 0.3, meta()).unwrap();
        assert_eq!(drill_down(&g, &f), g);
        let sub = drill_down(&g, &names(&["age"]));
        assert_eq!(sub.nodes.len(), 2);
        assert_eq!(sub.edges.len(), 1);
        assert_eq!(sub.node("age").unwrap().out_degree, 1);
        assert!(sub.node("age").unwrap().out_degree <= g.node("age").unwrap().out_degree);
        assert_eq!(drill_down(&sub, &names(&["age"])), sub);
        let empty = drill_down(&g, &[]);
        assert_eq!(empty.nodes.len(), 1);
        assert!(empty.nodes[0].target);
    }
}
