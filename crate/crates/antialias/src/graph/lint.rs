//! Aliasing-critical-path detection and the low-pass capacity check.
//!
//! For every node that subsamples (stride >= 2) the lint walks its
//! predecessors back to the nearest nonlinearity, skip join, or the
//! input, whichever is closest. The nodes collected on the way are the
//! ones that must supply anti-aliasing capacity before the subsampling
//! happens.

use serde::{Deserialize, Serialize};

use super::ir::{LayerGraph, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Nonlinearity,
    SkipJoin,
    Input,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPath {
    pub subsample_node: String,
    /// Ordered ids from just after the boundary (exclusive) to the
    /// subsampling node (inclusive).
    pub path: Vec<String>,
    pub boundary_kind: BoundaryKind,
    pub has_capacity: bool,
    /// Largest trainable conv kernel on the path, 0 if none.
    pub max_trainable_kernel: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LintReport {
    pub paths: Vec<CriticalPath>,
    pub violations: Vec<String>,
    pub recommendations: Vec<String>,
}

impl LintReport {
    pub fn violation_paths(&self) -> impl Iterator<Item = &CriticalPath> {
        self.paths.iter().filter(|p| !p.has_capacity)
    }
}

/// True when some node on the path can represent a low-pass filter: a
/// trainable conv with kernel size >= 2, or a fixed blur. A path holding
/// only 1x1 convolutions has no capacity; a size-1 filter can only
/// represent an impulse.
pub fn capacity_check(g: &LayerGraph, path: &[String]) -> bool {
    path.iter().filter_map(|id| g.node(id)).any(|n| {
        (n.kind == NodeKind::Conv && n.trainable && n.kernel_size >= 2)
            || (n.kind == NodeKind::Blur && n.kernel_size >= 2)
    })
}

/// One critical path per subsampling node. Skip-connection branches get
/// their own paths because each strided node on a branch is traced
/// independently.
pub fn find_critical_paths(g: &LayerGraph) -> Vec<CriticalPath> {
    let mut out = Vec::new();
    for id in g.topo_order() {
        let node = g.node(&id).expect("topo order only yields known ids");
        if !node.is_strided() {
            continue;
        }
        let mut path = vec![id.clone()];
        let mut cursor = id.clone();
        let boundary = loop {
            let preds = g.predecessors(&cursor);
            // only add nodes have more than one predecessor and they
            // terminate the walk below
            let pred = preds[0];
            match pred.kind {
                NodeKind::Activation => break BoundaryKind::Nonlinearity,
                NodeKind::Add => break BoundaryKind::SkipJoin,
                NodeKind::Input => break BoundaryKind::Input,
                NodeKind::Output => unreachable!("output cannot precede a node"),
                _ => {
                    path.insert(0, pred.id.clone());
                    cursor = pred.id.clone();
                }
            }
        };
        let has_capacity = capacity_check(g, &path);
        let max_trainable_kernel = path
            .iter()
            .filter_map(|pid| g.node(pid))
            .filter(|n| n.kind == NodeKind::Conv && n.trainable)
            .map(|n| n.kernel_size)
            .max()
            .unwrap_or(0);
        out.push(CriticalPath {
            subsample_node: id,
            path,
            boundary_kind: boundary,
            has_capacity,
            max_trainable_kernel,
        });
    }
    out
}

/// Full lint pass: paths, capacity violations, and per-violation rewrite
/// suggestions.
pub fn lint(g: &LayerGraph) -> LintReport {
    let paths = find_critical_paths(g);
    let violations: Vec<String> = paths
        .iter()
        .filter(|p| !p.has_capacity)
        .map(|p| p.subsample_node.clone())
        .collect();
    let recommendations = violations
        .iter()
        .map(|id| {
            format!(
                "`{id}` subsamples but its critical path cannot represent a low-pass \
                 filter; insert a fixed blur (post variant) before the stride"
            )
        })
        .collect();
    LintReport {
        paths,
        violations,
        recommendations,
    }
}
