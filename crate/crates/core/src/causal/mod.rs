//! Causal structure learning over encoded features and the feature-level graph.

mod acyclicity;
mod graph;
mod learn;

pub use acyclicity::{acyclicity, acyclicity_with_grad};
pub use graph::{aggregate_to_features, drill_down, CausalGraph, GraphEdge, GraphMeta, GraphNode};
pub use learn::{
    learn_structure, learn_structure_with, solve_subproblem, AugmentedObjective, InnerTrace,
    LeastSquares, StructuralZeros, StructureConfig, StructureResult,
};

use crate::data::DataTable;
use crate::encoding::encode_all;
use crate::error::Result;
use crate::metrics::spd_range;

/// Encode every column, learn a weighted DAG, and collapse it to features.
/// Node `spd_range` values come from the recorded outcomes.
pub fn learn_feature_graph(table: &DataTable, cfg: &StructureConfig) -> Result<CausalGraph> {
    let encoded = encode_all(table)?;
    let zeros = StructuralZeros::within_groups(&encoded.column_map());
    let result = learn_structure_with(&encoded.x, cfg, &zeros)?;
    let mut meta = GraphMeta::new(cfg.edge_threshold, cfg.l1_penalty);
    meta.converged = result.converged;
    meta.h = result.h;
    meta.dropped_rows = encoded.dropped_rows;
    let mut graph = aggregate_to_features(
        &result.w,
        &encoded.column_map(),
        &encoded.encoder.features,
        table.target_name(),
        cfg.edge_threshold,
        meta,
    )?;
    if table.target_name().is_some() {
        for node in &mut graph.nodes {
            node.spd_range = if node.target {
                0.0
            } else {
                spd_range(table, &node.feature, None)?
            };
        }
    }
    Ok(graph)
}
