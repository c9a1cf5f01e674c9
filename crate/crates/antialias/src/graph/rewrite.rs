//! The four filter-placement rewrites (plus the after-activation baseline
//! variant). Each rewrite inserts fixed blur nodes around targeted
//! subsampling operations without touching any trainable parameter, and
//! every variant preserves the graph's overall downsampling factor.

use serde::{Deserialize, Serialize};

use super::ir::{LayerGraph, LayerNode, NodeKind};
use super::lint::{find_critical_paths, BoundaryKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Blur (stride 1) before the strided layer, which keeps its stride.
    Pre,
    /// Strided layer drops to stride 1; a strided blur follows it, before
    /// the nonlinearity.
    Post,
    /// Both insertions; the trailing blur carries the stride.
    PrePost,
    /// Enlarged receptive field: the strided blur precedes the layer,
    /// which drops to stride 1.
    Erf,
    /// Baseline comparator: strided blur after the following
    /// nonlinearity.
    Zhang,
}

impl Variant {
    pub fn all() -> [Variant; 5] {
        [
            Variant::Pre,
            Variant::Post,
            Variant::PrePost,
            Variant::Erf,
            Variant::Zhang,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Pre => "pre",
            Variant::Post => "post",
            Variant::PrePost => "prepost",
            Variant::Erf => "erf",
            Variant::Zhang => "zhang",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pre" => Ok(Variant::Pre),
            "post" => Ok(Variant::Post),
            "prepost" => Ok(Variant::PrePost),
            "erf" => Ok(Variant::Erf),
            "zhang" => Ok(Variant::Zhang),
            other => Err(Error::invalid(format!("unknown rewrite variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Only subsampling nodes whose critical path lacks low-pass capacity.
    ViolationsOnly,
    /// Every subsampling node except those fed directly by the input
    /// (the stem conv, which already has capacity in its large kernel).
    AllStrided,
    /// Every subsampling node, the stem included.
    Conv1Too,
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "violations_only" => Ok(Policy::ViolationsOnly),
            "all_strided" => Ok(Policy::AllStrided),
            "conv1_too" => Ok(Policy::Conv1Too),
            other => Err(Error::invalid(format!("unknown rewrite policy `{other}`"))),
        }
    }
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::ViolationsOnly => "violations_only",
            Policy::AllStrided => "all_strided",
            Policy::Conv1Too => "conv1_too",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rewrite {
    pub graph: LayerGraph,
    /// Ids of the subsampling nodes that were rewritten. Empty when the
    /// graph already carries blurs at every targeted position, so
    /// re-running the same rewrite is a no-op.
    pub rewritten: Vec<String>,
}

struct GraphEditor {
    nodes: Vec<LayerNode>,
    edges: Vec<(String, String)>,
}

impl GraphEditor {
    fn node_mut(&mut self, id: &str) -> &mut LayerNode {
        self.nodes
            .iter_mut()
            .find(|n| n.id == id)
            .expect("editing a known node")
    }

    fn insert_before(&mut self, target: &str, node: LayerNode) {
        let id = node.id.clone();
        for e in self.edges.iter_mut().filter(|(_, to)| to == target) {
            e.1 = id.clone();
        }
        self.edges.push((id, target.to_string()));
        self.nodes.push(node);
    }

    fn insert_after(&mut self, target: &str, node: LayerNode) {
        let id = node.id.clone();
        for e in self.edges.iter_mut().filter(|(from, _)| from == target) {
            e.0 = id.clone();
        }
        self.edges.push((target.to_string(), id));
        self.nodes.push(node);
    }
}

fn blur_node(id: String, kernel_size: usize, stride: usize) -> LayerNode {
    LayerNode {
        id,
        kind: NodeKind::Blur,
        kernel_size,
        stride,
        trainable: false,
        activation: None,
        channels: None,
    }
}

/// The node after which the `zhang` variant places its blur: the first
/// activation following `target` through pass-through nodes, or `target`
/// itself when no such activation exists (e.g. on a skip branch).
fn following_activation(g: &LayerGraph, target: &str) -> String {
    let mut cursor = target.to_string();
    loop {
        let succs = g.successors(&cursor);
        if succs.len() != 1 {
            return target.to_string();
        }
        match succs[0].kind {
            NodeKind::Activation => return succs[0].id.clone(),
            NodeKind::Norm => cursor = succs[0].id.clone(),
            _ => return target.to_string(),
        }
    }
}

/// Apply `variant` at every subsampling node selected by `policy`.
/// Nodes already adjacent to a blur are left alone, so the rewrite is
/// idempotent.
pub fn rewrite(
    g: &LayerGraph,
    variant: Variant,
    kernel_size: usize,
    policy: Policy,
) -> Result<Rewrite> {
    if !matches!(kernel_size, 3 | 5 | 7) {
        return Err(Error::invalid(format!(
            "blur kernel size must be 3, 5, or 7, got {kernel_size}"
        )));
    }
    let paths = find_critical_paths(g);
    let mut targets = Vec::new();
    for p in &paths {
        let node = g.node(&p.subsample_node).expect("path nodes exist");
        if node.kind == NodeKind::Blur {
            continue;
        }
        let adjacent_blur = g
            .predecessors(&node.id)
            .iter()
            .chain(g.successors(&node.id).iter())
            .any(|n| n.kind == NodeKind::Blur);
        if adjacent_blur {
            continue;
        }
        let selected = match policy {
            Policy::ViolationsOnly => !p.has_capacity,
            Policy::AllStrided => p.boundary_kind != BoundaryKind::Input,
            Policy::Conv1Too => true,
        };
        if selected {
            targets.push(node.id.clone());
        }
    }

    let mut editor = GraphEditor {
        nodes: g.nodes.clone(),
        edges: g.edges.clone(),
    };
    for id in &targets {
        let stride = g.node(id).unwrap().stride;
        let pre_id = format!("{id}_blur_pre");
        let post_id = format!("{id}_blur_post");
        match variant {
            Variant::Pre => {
                editor.insert_before(id, blur_node(pre_id, kernel_size, 1));
            }
            Variant::Post => {
                editor.node_mut(id).stride = 1;
                editor.insert_after(id, blur_node(post_id, kernel_size, stride));
            }
            Variant::PrePost => {
                editor.node_mut(id).stride = 1;
                editor.insert_before(id, blur_node(pre_id, kernel_size, 1));
                editor.insert_after(id, blur_node(post_id, kernel_size, stride));
            }
            Variant::Erf => {
                editor.node_mut(id).stride = 1;
                editor.insert_before(id, blur_node(pre_id, kernel_size, stride));
            }
            Variant::Zhang => {
                editor.node_mut(id).stride = 1;
                let anchor = following_activation(g, id);
                editor.insert_after(&anchor, blur_node(post_id, kernel_size, stride));
            }
        }
    }
    let graph = LayerGraph::new(editor.nodes, editor.edges)?;
    Ok(Rewrite {
        graph,
        rewritten: targets,
    })
}
