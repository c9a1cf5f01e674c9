//! Evaluation harnesses: notch-band degradation curves, synthetic
//! corruption robustness with CE/mCE, shift consistency, and direct
//! feature-map aliasing measurements.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::filters::{convolve_same_2d, Kernel, Padding};
use crate::graph::NodeKind;
use crate::nn::ops::predict_classes;
use crate::nn::{evaluate, Dataset, Model};
use crate::spectral::{aliasing_energy2d, notch_filter, Image2d};
use crate::{Error, Result};

pub const NUM_SEVERITIES: usize = 5;
pub const DEFAULT_BANDS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    GaussianNoise,
    DefocusBlur,
    Contrast,
    Pixelate,
    Quantize,
}

impl CorruptionKind {
    pub fn all() -> [CorruptionKind; 5] {
        [
            CorruptionKind::GaussianNoise,
            CorruptionKind::DefocusBlur,
            CorruptionKind::Contrast,
            CorruptionKind::Pixelate,
            CorruptionKind::Quantize,
        ]
    }

    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "gaussian_noise",
            CorruptionKind::DefocusBlur => "defocus_blur",
            CorruptionKind::Contrast => "contrast",
            CorruptionKind::Pixelate => "pixelate",
            CorruptionKind::Quantize => "quantize",
        }
    }
}

/// Severity parameter tables, one entry per severity 1..=5, each
/// monotone in strength.
const NOISE_SIGMA: [f64; 5] = [0.04, 0.06, 0.08, 0.11, 0.15];
const BLUR_PASSES: [usize; 5] = [1, 2, 3, 5, 8];
const CONTRAST_SCALE: [f64; 5] = [0.75, 0.60, 0.45, 0.30, 0.20];
const PIXELATE_FACTOR: [usize; 5] = [2, 3, 4, 6, 8];
const QUANTIZE_LEVELS: [usize; 5] = [12, 8, 6, 4, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corruption {
    pub kind: CorruptionKind,
    pub severity: usize,
}

impl Corruption {
    pub fn new(kind: CorruptionKind, severity: usize) -> Result<Corruption> {
        if !(1..=NUM_SEVERITIES).contains(&severity) {
            return Err(Error::invalid(format!(
                "severity {severity} out of range 1..={NUM_SEVERITIES}"
            )));
        }
        Ok(Corruption { kind, severity })
    }
}

/// Apply a corruption. Deterministic given `seed`; only noise kinds
/// consume randomness.
pub fn corrupt(img: &Image2d, c: Corruption, seed: u64) -> Result<Image2d> {
    let s = c.severity;
    if !(1..=NUM_SEVERITIES).contains(&s) {
        return Err(Error::invalid(format!("severity {s} out of range")));
    }
    let t = s - 1;
    let out = match c.kind {
        CorruptionKind::GaussianNoise => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let dist = Normal::new(0.0, NOISE_SIGMA[t]).unwrap();
            let data = img.data.iter().map(|v| v + dist.sample(&mut rng)).collect();
            Image2d::new(img.height, img.width, data)?
        }
        CorruptionKind::DefocusBlur => {
            let kern = Kernel::binomial(3)?.normalized();
            let mut cur = img.clone();
            for _ in 0..BLUR_PASSES[t] {
                cur = convolve_same_2d(&cur, &kern, Padding::Reflect)?;
            }
            cur
        }
        CorruptionKind::Contrast => {
            let mean = img.data.iter().sum::<f64>() / img.data.len() as f64;
            let c = CONTRAST_SCALE[t];
            let data = img.data.iter().map(|v| (v - mean) * c + mean).collect();
            Image2d::new(img.height, img.width, data)?
        }
        CorruptionKind::Pixelate => {
            // nearest-neighbor down then up: each pixel takes the value
            // of its block representative, replicating spectra by
            // construction
            let f = PIXELATE_FACTOR[t];
            let mut data = Vec::with_capacity(img.width * img.height);
            for y in 0..img.height {
                for x in 0..img.width {
                    data.push(img.at(y / f * f, x / f * f));
                }
            }
            Image2d::new(img.height, img.width, data)?
        }
        CorruptionKind::Quantize => {
            let levels = QUANTIZE_LEVELS[t] as f64;
            let data = img
                .data
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * (levels - 1.0)).round() / (levels - 1.0))
                .collect();
            Image2d::new(img.height, img.width, data)?
        }
    };
    Ok(out)
}

/// Apply `f` to every image, keeping labels.
fn map_dataset(dataset: &Dataset, f: impl Fn(usize, &Image2d) -> Result<Image2d> + Sync) -> Result<Dataset> {
    let images = dataset
        .images
        .par_iter()
        .enumerate()
        .map(|(i, img)| f(i, img))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        images,
        labels: dataset.labels.clone(),
        size: dataset.size,
    })
}

/// Accuracy per notch band: band `b` of `n_bands` is zeroed from each
/// test image at inference time, the model itself is untouched.
pub fn notch_eval(model: &Model, dataset: &Dataset, n_bands: usize) -> Result<Vec<f64>> {
    (0..n_bands)
        .map(|band| {
            let filtered = map_dataset(dataset, |_, img| notch_filter(img, band, n_bands))?;
            evaluate(model, &filtered, 32)
        })
        .collect()
}

/// Top-1 error (1 − accuracy) for one corruption kind at each severity.
pub fn corruption_error_curve(
    model: &Model,
    dataset: &Dataset,
    kind: CorruptionKind,
    seed: u64,
) -> Result<[f64; NUM_SEVERITIES]> {
    let mut errs = [0.0; NUM_SEVERITIES];
    for s in 1..=NUM_SEVERITIES {
        let c = Corruption::new(kind, s)?;
        // one stream per (kind, severity, image) so corruption of image i
        // does not depend on dataset ordering elsewhere
        let corrupted = map_dataset(dataset, |i, img| {
            corrupt(img, c, seed ^ (kind as u64) << 32 ^ (s as u64) << 24 ^ i as u64)
        })?;
        errs[s - 1] = 1.0 - evaluate(model, &corrupted, 32)?;
    }
    Ok(errs)
}

/// CE = Σ_s err_model / Σ_s err_ref.
pub fn corruption_error(err_model: &[f64], err_ref: &[f64]) -> Result<f64> {
    if err_model.len() != NUM_SEVERITIES || err_ref.len() != NUM_SEVERITIES {
        return Err(Error::invalid("expected one error per severity 1..=5"));
    }
    let denom: f64 = err_ref.iter().sum();
    if denom <= 0.0 {
        return Err(Error::invalid(
            "reference error sum is zero; CE undefined",
        ));
    }
    Ok(err_model.iter().sum::<f64>() / denom)
}

/// Mean corruption error over the corruption set.
pub fn mce(ces: &[f64]) -> Result<f64> {
    if ces.is_empty() {
        return Err(Error::invalid("mCE of an empty corruption set"));
    }
    Ok(ces.iter().sum::<f64>() / ces.len() as f64)
}

fn circular_shift(img: &Image2d, dy: usize, dx: usize) -> Image2d {
    let (h, w) = (img.height, img.width);
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            data.push(img.at((y + h - dy % h) % h, (x + w - dx % w) % w));
        }
    }
    Image2d::new(h, w, data).expect("shift preserves finiteness")
}

/// Fraction of images whose argmax prediction survives a random circular
/// shift with components in `[1, max_shift]`. `max_shift == 0` is 1.0 by
/// definition.
pub fn shift_consistency(
    model: &Model,
    dataset: &Dataset,
    max_shift: usize,
    seed: u64,
) -> Result<f64> {
    if max_shift == 0 {
        return Ok(1.0);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let shifts: Vec<(usize, usize)> = (0..dataset.len())
        .map(|_| (rng.gen_range(1..=max_shift), rng.gen_range(1..=max_shift)))
        .collect();
    let shifted = map_dataset(dataset, |i, img| {
        let (dy, dx) = shifts[i];
        Ok(circular_shift(img, dy, dx))
    })?;
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let consistent: usize = indices
        .chunks(32)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|chunk| -> Result<usize> {
            let (xa, _) = dataset.batch(chunk);
            let (xb, _) = shifted.batch(chunk);
            let pa = predict_classes(&model.forward(&xa)?);
            let pb = predict_classes(&model.forward(&xb)?);
            Ok(pa.iter().zip(&pb).filter(|(a, b)| a == b).count())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(consistent as f64 / dataset.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub clean_accuracy: f64,
    pub per_band_accuracy: Vec<f64>,
    pub per_corruption_ce: BTreeMap<String, f64>,
    pub mce: f64,
    pub shift_consistency: f64,
}

/// Full evaluation against a frozen reference model that plays the CE
/// normalization role.
pub fn full_eval(
    model: &Model,
    reference: &Model,
    dataset: &Dataset,
    n_bands: usize,
    seed: u64,
) -> Result<EvalReport> {
    let clean_accuracy = evaluate(model, dataset, 32)?;
    let per_band_accuracy = notch_eval(model, dataset, n_bands)?;
    let mut per_corruption_ce = BTreeMap::new();
    for kind in CorruptionKind::all() {
        let em = corruption_error_curve(model, dataset, kind, seed)?;
        let er = corruption_error_curve(reference, dataset, kind, seed)?;
        per_corruption_ce.insert(kind.name().to_string(), corruption_error(&em, &er)?);
    }
    let ces: Vec<f64> = per_corruption_ce.values().copied().collect();
    let report = EvalReport {
        clean_accuracy,
        per_band_accuracy,
        mce: mce(&ces)?,
        per_corruption_ce,
        shift_consistency: shift_consistency(model, dataset, 4, seed)?,
    };
    Ok(report)
}

/// Aliasing energy entering each subsampling node, one entry per
/// stride >= 2 node, averaged over the channels of the first sample.
/// Blur nodes are measured jointly with their kernel so the number
/// reflects what actually folds after the blur.
pub fn subsample_aliasing(model: &Model, x: &crate::nn::Tensor) -> Result<BTreeMap<String, f64>> {
    let trace = model.forward_trace(x)?;
    let mut out = BTreeMap::new();
    for node in &model.graph.nodes {
        if node.stride < 2 {
            continue;
        }
        let matters = matches!(
            node.kind,
            NodeKind::Conv | NodeKind::Maxpool | NodeKind::Blur
        );
        if !matters {
            continue;
        }
        let pred = &model.graph.predecessors(&node.id)[0].id;
        let input = &trace[pred];
        let [_, c, h, w] = input.shape;
        let kern = model.blur_kernels.get(&node.id);
        let mut total = 0.0;
        for ci in 0..c {
            let img = Image2d::new(h, w, input.plane(0, ci).to_vec())?;
            total += aliasing_energy2d(&img, node.stride, kern)?;
        }
        out.insert(node.id.clone(), total / c as f64);
    }
    Ok(out)
}
