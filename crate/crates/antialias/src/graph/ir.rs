//! Layer-graph intermediate representation: typed nodes with kernel size
//! and stride attributes, parsed from JSON and validated up front. Graphs
//! are immutable after construction; rewrites build new graphs.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Input,
    Output,
    Conv,
    Maxpool,
    Activation,
    Add,
    Blur,
    /// Per-channel standardization with learned affine. Linear for lint
    /// purposes: transparent to critical-path tracing.
    Norm,
    Globalavgpool,
    Linear,
}

impl NodeKind {
    /// Nodes that neither create high frequencies nor terminate a
    /// critical path.
    pub fn is_lint_transparent(&self) -> bool {
        matches!(
            self,
            NodeKind::Conv
                | NodeKind::Maxpool
                | NodeKind::Blur
                | NodeKind::Norm
                | NodeKind::Globalavgpool
                | NodeKind::Linear
        )
    }

    pub fn can_subsample(&self) -> bool {
        matches!(self, NodeKind::Conv | NodeKind::Maxpool | NodeKind::Blur)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Gelu,
    Swish,
}

impl ActivationKind {
    pub fn to_activation(self) -> crate::activations::Activation {
        match self {
            ActivationKind::Relu => crate::activations::Activation::Relu,
            ActivationKind::Gelu => crate::activations::Activation::Gelu,
            ActivationKind::Swish => crate::activations::Activation::swish(),
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNode {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default = "one")]
    pub kernel_size: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub trainable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<ActivationKind>,
    /// Output channels for conv, output features for linear.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<usize>,
}

impl LayerNode {
    pub fn is_strided(&self) -> bool {
        self.kind.can_subsample() && self.stride >= 2
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerGraph {
    pub nodes: Vec<LayerNode>,
    pub edges: Vec<(String, String)>,
}

impl LayerGraph {
    pub fn new(nodes: Vec<LayerNode>, edges: Vec<(String, String)>) -> Result<Self> {
        let g = LayerGraph { nodes, edges };
        g.validate()?;
        Ok(g)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let g: LayerGraph = serde_json::from_str(text)?;
        g.validate()?;
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialization cannot fail")
    }

    pub fn node(&self, id: &str) -> Option<&LayerNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn predecessors(&self, id: &str) -> Vec<&LayerNode> {
        self.edges
            .iter()
            .filter(|(_, to)| to == id)
            .filter_map(|(from, _)| self.node(from))
            .collect()
    }

    pub fn successors(&self, id: &str) -> Vec<&LayerNode> {
        self.edges
            .iter()
            .filter(|(from, _)| from == id)
            .filter_map(|(_, to)| self.node(to))
            .collect()
    }

    pub fn input(&self) -> &LayerNode {
        self.nodes
            .iter()
            .find(|n| n.kind == NodeKind::Input)
            .expect("validated graph has an input")
    }

    pub fn output(&self) -> &LayerNode {
        self.nodes
            .iter()
            .find(|n| n.kind == NodeKind::Output)
            .expect("validated graph has an output")
    }

    /// Node ids in a deterministic topological order.
    pub fn topo_order(&self) -> Vec<String> {
        let mut in_deg: HashMap<&str, usize> = self.nodes.iter().map(|n| (n.id.as_str(), 0)).collect();
        for (_, to) in &self.edges {
            *in_deg.get_mut(to.as_str()).unwrap() += 1;
        }
        // declaration order as tie-break keeps the order stable
        let mut ready: Vec<&str> = self
            .nodes
            .iter()
            .filter(|n| in_deg[n.id.as_str()] == 0)
            .map(|n| n.id.as_str())
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(id) = ready.first().copied() {
            ready.remove(0);
            order.push(id.to_string());
            for (from, to) in &self.edges {
                if from == id {
                    let d = in_deg.get_mut(to.as_str()).unwrap();
                    *d -= 1;
                    if *d == 0 {
                        ready.push(to.as_str());
                        ready.sort_by_key(|r| self.index(r));
                    }
                }
            }
        }
        order
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for n in &self.nodes {
            if !seen.insert(n.id.as_str()) {
                return Err(Error::graph(&n.id, "duplicate node id"));
            }
            if n.stride < 1 {
                return Err(Error::graph(&n.id, "stride must be >= 1"));
            }
            if n.kernel_size < 1 {
                return Err(Error::graph(&n.id, "kernel_size must be >= 1"));
            }
            if n.kind == NodeKind::Blur && n.trainable {
                return Err(Error::graph(&n.id, "blur nodes are never trainable"));
            }
        }
        for (from, to) in &self.edges {
            if self.node(from).is_none() {
                return Err(Error::graph(from, "edge references unknown node"));
            }
            if self.node(to).is_none() {
                return Err(Error::graph(to, "edge references unknown node"));
            }
        }
        let inputs: Vec<_> = self.nodes.iter().filter(|n| n.kind == NodeKind::Input).collect();
        let outputs: Vec<_> = self.nodes.iter().filter(|n| n.kind == NodeKind::Output).collect();
        if inputs.len() != 1 {
            return Err(Error::invalid(format!(
                "graph must have exactly one input node, found {}",
                inputs.len()
            )));
        }
        if outputs.len() != 1 {
            return Err(Error::invalid(format!(
                "graph must have exactly one output node, found {}",
                outputs.len()
            )));
        }
        self.check_acyclic()?;
        // reachability from the input
        let mut reached = HashSet::new();
        let mut stack = vec![inputs[0].id.as_str()];
        while let Some(id) = stack.pop() {
            if !reached.insert(id) {
                continue;
            }
            for s in self.successors(id) {
                stack.push(s.id.as_str());
            }
        }
        for n in &self.nodes {
            if !reached.contains(n.id.as_str()) {
                return Err(Error::graph(&n.id, "node not reachable from input"));
            }
        }
        for n in &self.nodes {
            let preds = self.predecessors(&n.id).len();
            match n.kind {
                NodeKind::Add if preds != 2 => {
                    return Err(Error::graph(
                        &n.id,
                        format!("add node must have exactly 2 predecessors, has {preds}"),
                    ));
                }
                NodeKind::Input if preds != 0 => {
                    return Err(Error::graph(&n.id, "input node must have no predecessors"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn check_acyclic(&self) -> Result<()> {
        // iterative DFS with colors; reports the back edge on failure
        #[derive(Clone, Copy, PartialEq)]
        enum Color {
            White,
            Gray,
            Black,
        }
        let mut color: HashMap<&str, Color> =
            self.nodes.iter().map(|n| (n.id.as_str(), Color::White)).collect();
        for start in &self.nodes {
            if color[start.id.as_str()] != Color::White {
                continue;
            }
            let mut stack: Vec<(&str, usize)> = vec![(start.id.as_str(), 0)];
            color.insert(start.id.as_str(), Color::Gray);
            while let Some(&(id, succ_idx)) = stack.last() {
                let succs = self.successors(id);
                if succ_idx < succs.len() {
                    stack.last_mut().unwrap().1 += 1;
                    let next = succs[succ_idx].id.as_str();
                    match color[next] {
                        Color::Gray => {
                            return Err(Error::graph(
                                next,
                                format!("cycle detected via back edge {id} -> {next}"),
                            ));
                        }
                        Color::White => {
                            color.insert(next, Color::Gray);
                            stack.push((next, 0));
                        }
                        Color::Black => {}
                    }
                } else {
                    color.insert(id, Color::Black);
                    stack.pop();
                }
            }
        }
        Ok(())
    }
}
