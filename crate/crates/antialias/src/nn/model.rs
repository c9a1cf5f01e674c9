//! Executes a [`LayerGraph`] as a trainable network: parameter storage,
//! forward pass with per-node traces, and full backpropagation.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::filters::Kernel;
use crate::graph::{LayerGraph, NodeKind};
use crate::nn::ops::{self, NormCache, PoolCache};
use crate::nn::tensor::Tensor;
use crate::{Error, Result};

/// Trainable state attached to one graph node.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeParams {
    Conv { w: Tensor, b: Vec<f64> },
    Norm { gamma: Vec<f64>, beta: Vec<f64> },
    Linear { w: Vec<f64>, b: Vec<f64> },
}

impl NodeParams {
    pub fn flat(&self) -> Vec<&[f64]> {
        match self {
            NodeParams::Conv { w, b } => vec![&w.data, b],
            NodeParams::Norm { gamma, beta } => vec![gamma, beta],
            NodeParams::Linear { w, b } => vec![w, b],
        }
    }

    pub fn flat_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            NodeParams::Conv { w, b } => vec![&mut w.data, b],
            NodeParams::Norm { gamma, beta } => vec![gamma, beta],
            NodeParams::Linear { w, b } => vec![w, b],
        }
    }

    pub fn numel(&self) -> usize {
        self.flat().iter().map(|s| s.len()).sum()
    }

    fn zeros_like(&self) -> NodeParams {
        match self {
            NodeParams::Conv { w, b } => NodeParams::Conv {
                w: Tensor::zeros(w.shape),
                b: vec![0.0; b.len()],
            },
            NodeParams::Norm { gamma, beta } => NodeParams::Norm {
                gamma: vec![0.0; gamma.len()],
                beta: vec![0.0; beta.len()],
            },
            NodeParams::Linear { w, b } => NodeParams::Linear {
                w: vec![0.0; w.len()],
                b: vec![0.0; b.len()],
            },
        }
    }
}

/// Per-node gradients, same shapes as the parameters.
#[derive(Debug, Clone, Default)]
pub struct Gradients(pub BTreeMap<String, NodeParams>);

impl Gradients {
    pub fn add_assign(&mut self, other: &Gradients) {
        for (id, g) in &other.0 {
            match self.0.get_mut(id) {
                Some(mine) => {
                    for (a, b) in mine.flat_mut().into_iter().zip(g.flat()) {
                        for (x, y) in a.iter_mut().zip(b) {
                            *x += y;
                        }
                    }
                }
                None => {
                    self.0.insert(id.clone(), g.clone());
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.0.values_mut() {
            for chunk in g.flat_mut() {
                for v in chunk.iter_mut() {
                    *v *= s;
                }
            }
        }
    }
}

enum Aux {
    Pool(PoolCache),
    Norm(NormCache),
}

pub struct ForwardCache {
    /// Output of every node, keyed by id.
    pub outputs: BTreeMap<String, Tensor>,
    aux: BTreeMap<String, Aux>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub graph: LayerGraph,
    order: Vec<String>,
    pub params: BTreeMap<String, NodeParams>,
    pub blur_kernels: BTreeMap<String, Kernel>,
    pub input_channels: usize,
    /// Output channels per node.
    pub channels: BTreeMap<String, usize>,
}

impl Model {
    /// Build a model for `graph`, initializing trainable parameters from
    /// `seed` (He-normal for convs, identity affine for norms).
    pub fn new(graph: LayerGraph, input_channels: usize, seed: u64) -> Result<Model> {
        let order = graph.topo_order();
        let mut channels: BTreeMap<String, usize> = BTreeMap::new();
        for id in &order {
            let node = graph.node(id).unwrap();
            let in_ch = match node.kind {
                NodeKind::Input => input_channels,
                _ => {
                    let preds = graph.predecessors(id);
                    let first = channels[&preds[0].id];
                    if preds.len() > 1 && preds.iter().any(|p| channels[&p.id] != first) {
                        return Err(Error::graph(id, "add inputs have mismatched channels"));
                    }
                    first
                }
            };
            let out_ch = match node.kind {
                NodeKind::Conv => node.channels.unwrap_or(in_ch),
                NodeKind::Linear => node
                    .channels
                    .ok_or_else(|| Error::graph(id, "linear node needs `channels`"))?,
                _ => in_ch,
            };
            channels.insert(id.clone(), out_ch);
        }

        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        let mut blur_kernels = BTreeMap::new();
        for id in &order {
            let node = graph.node(id).unwrap();
            let in_ch = match node.kind {
                NodeKind::Input => input_channels,
                _ => channels[&graph.predecessors(id)[0].id],
            };
            let out_ch = channels[id];
            match node.kind {
                NodeKind::Conv => {
                    let k = node.kernel_size;
                    let fan_in = (in_ch * k * k) as f64;
                    let dist = Normal::new(0.0, (2.0 / fan_in).sqrt()).unwrap();
                    let data: Vec<f64> =
                        (0..out_ch * in_ch * k * k).map(|_| dist.sample(&mut rng)).collect();
                    params.insert(
                        id.clone(),
                        NodeParams::Conv {
                            w: Tensor::from_vec([out_ch, in_ch, k, k], data)?,
                            b: vec![0.0; out_ch],
                        },
                    );
                }
                NodeKind::Norm => {
                    params.insert(
                        id.clone(),
                        NodeParams::Norm {
                            gamma: vec![1.0; out_ch],
                            beta: vec![0.0; out_ch],
                        },
                    );
                }
                NodeKind::Linear => {
                    let dist = Normal::new(0.0, (2.0 / in_ch as f64).sqrt()).unwrap();
                    params.insert(
                        id.clone(),
                        NodeParams::Linear {
                            w: (0..out_ch * in_ch).map(|_| dist.sample(&mut rng)).collect(),
                            b: vec![0.0; out_ch],
                        },
                    );
                }
                NodeKind::Blur => {
                    blur_kernels
                        .insert(id.clone(), Kernel::binomial(node.kernel_size)?.normalized());
                }
                _ => {}
            }
        }
        Ok(Model {
            graph,
            order,
            params,
            blur_kernels,
            input_channels,
            channels,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(|p| p.numel()).sum()
    }

    /// All trainable values flattened in deterministic (id, chunk) order.
    pub fn param_vector(&self) -> Vec<f64> {
        self.params
            .values()
            .flat_map(|p| p.flat().into_iter().flatten().copied().collect::<Vec<_>>())
            .collect()
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<ForwardCache> {
        if x.shape[1] != self.input_channels {
            return Err(Error::Shape(format!(
                "expected {} input channels, got {}",
                self.input_channels, x.shape[1]
            )));
        }
        let mut outputs: BTreeMap<String, Tensor> = BTreeMap::new();
        let mut aux: BTreeMap<String, Aux> = BTreeMap::new();
        for id in &self.order {
            let node = self.graph.node(id).unwrap();
            let preds = self.graph.predecessors(id);
            let out = match node.kind {
                NodeKind::Input => x.clone(),
                NodeKind::Output => outputs[&preds[0].id].clone(),
                NodeKind::Conv => {
                    let NodeParams::Conv { w, b } = &self.params[id] else {
                        unreachable!()
                    };
                    ops::conv2d_forward(&outputs[&preds[0].id], w, b, node.stride)?
                }
                NodeKind::Maxpool => {
                    let (out, cache) =
                        ops::maxpool_forward(&outputs[&preds[0].id], node.kernel_size, node.stride);
                    aux.insert(id.clone(), Aux::Pool(cache));
                    out
                }
                NodeKind::Blur => {
                    ops::blur_forward(&outputs[&preds[0].id], &self.blur_kernels[id], node.stride)
                }
                NodeKind::Activation => {
                    let a = node
                        .activation
                        .ok_or_else(|| Error::graph(id, "activation node needs `activation`"))?;
                    ops::activation_forward(&outputs[&preds[0].id], a.to_activation())
                }
                NodeKind::Add => {
                    let a = &outputs[&preds[0].id];
                    let b = &outputs[&preds[1].id];
                    if a.shape != b.shape {
                        return Err(Error::graph(
                            id,
                            format!("add inputs {:?} vs {:?}", a.shape, b.shape),
                        ));
                    }
                    Tensor {
                        shape: a.shape,
                        data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
                    }
                }
                NodeKind::Norm => {
                    let NodeParams::Norm { gamma, beta } = &self.params[id] else {
                        unreachable!()
                    };
                    let (out, cache) = ops::norm_forward(&outputs[&preds[0].id], gamma, beta);
                    aux.insert(id.clone(), Aux::Norm(cache));
                    out
                }
                NodeKind::Globalavgpool => ops::global_avg_pool_forward(&outputs[&preds[0].id]),
                NodeKind::Linear => {
                    let NodeParams::Linear { w, b } = &self.params[id] else {
                        unreachable!()
                    };
                    ops::linear_forward(&outputs[&preds[0].id], w, b, self.channels[id])?
                }
            };
            debug_assert!(out.all_finite(), "non-finite values after node {id}");
            outputs.insert(id.clone(), out);
        }
        Ok(ForwardCache { outputs, aux })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let cache = self.forward_cached(x)?;
        Ok(cache.outputs[&self.graph.output().id].clone())
    }

    /// Forward pass keeping every intermediate feature map, for the
    /// aliasing measurements.
    pub fn forward_trace(&self, x: &Tensor) -> Result<BTreeMap<String, Tensor>> {
        Ok(self.forward_cached(x)?.outputs)
    }

    /// Backpropagate `grad_logits` through the cached forward pass.
    /// Returns parameter gradients and the gradient w.r.t. the input.
    pub fn backward(&self, x: &Tensor, cache: &ForwardCache, grad_logits: &Tensor) -> (Gradients, Tensor) {
        let mut grads = Gradients::default();
        let mut out_grads: BTreeMap<String, Tensor> = BTreeMap::new();
        out_grads.insert(self.graph.output().id.clone(), grad_logits.clone());
        let mut grad_input = Tensor::zeros(x.shape);
        for id in self.order.iter().rev() {
            let Some(g) = out_grads.remove(id) else {
                continue;
            };
            let node = self.graph.node(id).unwrap();
            let preds = self.graph.predecessors(id);
            let push = |pid: &str, t: Tensor, out_grads: &mut BTreeMap<String, Tensor>| {
                match out_grads.get_mut(pid) {
                    Some(acc) => {
                        for (a, b) in acc.data.iter_mut().zip(&t.data) {
                            *a += b;
                        }
                    }
                    None => {
                        out_grads.insert(pid.to_string(), t);
                    }
                }
            };
            match node.kind {
                NodeKind::Input => {
                    for (a, b) in grad_input.data.iter_mut().zip(&g.data) {
                        *a += b;
                    }
                }
                NodeKind::Output => push(&preds[0].id, g, &mut out_grads),
                NodeKind::Conv => {
                    let NodeParams::Conv { w, .. } = &self.params[id] else {
                        unreachable!()
                    };
                    let input = &cache.outputs[&preds[0].id];
                    let (gx, gw, gb) = ops::conv2d_backward(input, w, node.stride, &g);
                    grads.0.insert(id.clone(), NodeParams::Conv { w: gw, b: gb });
                    push(&preds[0].id, gx, &mut out_grads);
                }
                NodeKind::Maxpool => {
                    let Aux::Pool(pc) = &cache.aux[id] else { unreachable!() };
                    push(&preds[0].id, ops::maxpool_backward(pc, &g), &mut out_grads);
                }
                NodeKind::Blur => {
                    let input = &cache.outputs[&preds[0].id];
                    let gx = ops::blur_backward(input.shape, &self.blur_kernels[id], node.stride, &g);
                    push(&preds[0].id, gx, &mut out_grads);
                }
                NodeKind::Activation => {
                    let input = &cache.outputs[&preds[0].id];
                    let a = node.activation.unwrap().to_activation();
                    push(&preds[0].id, ops::activation_backward(input, a, &g), &mut out_grads);
                }
                NodeKind::Add => {
                    push(&preds[0].id, g.clone(), &mut out_grads);
                    push(&preds[1].id, g, &mut out_grads);
                }
                NodeKind::Norm => {
                    let NodeParams::Norm { gamma, .. } = &self.params[id] else {
                        unreachable!()
                    };
                    let Aux::Norm(nc) = &cache.aux[id] else { unreachable!() };
                    let input = &cache.outputs[&preds[0].id];
                    let (gx, ggamma, gbeta) = ops::norm_backward(input, gamma, nc, &g);
                    grads.0.insert(
                        id.clone(),
                        NodeParams::Norm {
                            gamma: ggamma,
                            beta: gbeta,
                        },
                    );
                    push(&preds[0].id, gx, &mut out_grads);
                }
                NodeKind::Globalavgpool => {
                    let input = &cache.outputs[&preds[0].id];
                    push(
                        &preds[0].id,
                        ops::global_avg_pool_backward(input.shape, &g),
                        &mut out_grads,
                    );
                }
                NodeKind::Linear => {
                    let NodeParams::Linear { w, .. } = &self.params[id] else {
                        unreachable!()
                    };
                    let input = &cache.outputs[&preds[0].id];
                    let (gx, gw, gb) = ops::linear_backward(input, w, &g);
                    grads.0.insert(id.clone(), NodeParams::Linear { w: gw, b: gb });
                    push(&preds[0].id, gx, &mut out_grads);
                }
            }
        }
        // nodes without gradients contribute zeros
        for (id, p) in &self.params {
            grads.0.entry(id.clone()).or_insert_with(|| p.zeros_like());
        }
        (grads, grad_input)
    }
}
