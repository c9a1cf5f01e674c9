//! Model checkpoints: a flat little-endian `f64` blob plus a JSON
//! manifest that records the graph, the input channel count, and the
//! offset/shape of every parameter chunk.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graph::LayerGraph;
use crate::nn::model::{Model, NodeParams};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    node: String,
    role: String,
    /// Offset into the blob, in f64 elements.
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    graph: serde_json::Value,
    input_channels: usize,
    tensors: Vec<TensorEntry>,
}

fn roles(p: &NodeParams) -> Vec<&'static str> {
    match p {
        NodeParams::Conv { .. } => vec!["weight", "bias"],
        NodeParams::Norm { .. } => vec!["gamma", "beta"],
        NodeParams::Linear { .. } => vec!["weight", "bias"],
    }
}

/// Write `model` to `bin_path` (raw f64 values) and `manifest_path`.
pub fn save(model: &Model, bin_path: &Path, manifest_path: &Path) -> Result<()> {
    let mut blob: Vec<u8> = Vec::new();
    let mut tensors = Vec::new();
    let mut offset = 0usize;
    for (id, p) in &model.params {
        for (chunk, role) in p.flat().into_iter().zip(roles(p)) {
            for v in chunk {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            tensors.push(TensorEntry {
                node: id.clone(),
                role: role.to_string(),
                offset,
                len: chunk.len(),
            });
            offset += chunk.len();
        }
    }
    let manifest = Manifest {
        graph: serde_json::to_value(&model.graph)?,
        input_channels: model.input_channels,
        tensors,
    };
    fs::write(bin_path, &blob)?;
    fs::write(manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Rebuild a model from a checkpoint pair written by [`save`].
pub fn load(bin_path: &Path, manifest_path: &Path) -> Result<Model> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    let graph = LayerGraph::parse(&manifest.graph.to_string())?;
    let blob = fs::read(bin_path)?;
    let format_err = |reason: &str| Error::Format {
        path: bin_path.display().to_string(),
        reason: reason.to_string(),
    };
    if blob.len() % 8 != 0 {
        return Err(format_err("blob length not a multiple of 8"));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let mut model = Model::new(graph, manifest.input_channels, 0)?;
    for entry in &manifest.tensors {
        let p = model
            .params
            .get_mut(&entry.node)
            .ok_or_else(|| Error::graph(&entry.node, "manifest names a node without parameters"))?;
        let role_index = roles(p)
            .iter()
            .position(|r| *r == entry.role)
            .ok_or_else(|| format_err(&format!("unknown role `{}` for `{}`", entry.role, entry.node)))?;
        let chunk = p.flat_mut().swap_remove(role_index);
        if chunk.len() != entry.len {
            return Err(format_err(&format!(
                "size mismatch for {}:{} ({} vs {})",
                entry.node,
                entry.role,
                entry.len,
                chunk.len()
            )));
        }
        let end = entry.offset + entry.len;
        if end > values.len() {
            return Err(format_err("tensor entry extends past blob end"));
        }
        chunk.copy_from_slice(&values[entry.offset..end]);
    }
    if !model.param_vector().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("checkpoint contains non-finite values".into()));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures;
    use crate::nn::tensor::Tensor;

    #[test]
    fn round_trip_preserves_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("model.bin");
        let man = dir.path().join("model.json");
        let model = Model::new(fixtures::micro_resnet(), 1, 42).unwrap();
        save(&model, &bin, &man).unwrap();
        let loaded = load(&bin, &man).unwrap();
        assert_eq!(model.param_vector(), loaded.param_vector());
        let x = Tensor::from_vec(
            [1, 1, 32, 32],
            (0..1024).map(|i| (i as f64 * 0.37).sin()).collect(),
        )
        .unwrap();
        assert_eq!(
            model.forward(&x).unwrap().data,
            loaded.forward(&x).unwrap().data
        );
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("model.bin");
        let man = dir.path().join("model.json");
        let model = Model::new(fixtures::micro_resnet(), 1, 1).unwrap();
        save(&model, &bin, &man).unwrap();
        let blob = fs::read(&bin).unwrap();
        fs::write(&bin, &blob[..blob.len() / 2 / 8 * 8]).unwrap();
        assert!(load(&bin, &man).is_err());
    }
}
