//! File formats: CSV for signals, images, spectra and plot series; JSON
//! run manifests; a minimal SVG line-chart writer so plots need no
//! external tooling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::nn::Dataset;
use crate::spectral::{Image2d, Signal1d, Spectrum};
use crate::{Error, Result};

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Row-major CSV with a `# shape: HxW` header line.
pub fn write_image_csv(path: &Path, img: &Image2d) -> Result<()> {
    let mut out = format!("# shape: {}x{}\n", img.height, img.width);
    for r in 0..img.height {
        let row: Vec<String> = img.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_image_csv(path: &Path) -> Result<Image2d> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| format_err(path, "empty file"))?;
    let dims = header
        .strip_prefix("# shape: ")
        .ok_or_else(|| format_err(path, "missing `# shape: HxW` header"))?;
    let (h, w) = dims
        .split_once('x')
        .ok_or_else(|| format_err(path, "malformed shape header"))?;
    let h: usize = h.trim().parse().map_err(|_| format_err(path, "bad height"))?;
    let w: usize = w.trim().parse().map_err(|_| format_err(path, "bad width"))?;
    let mut data = Vec::with_capacity(h * w);
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| format_err(path, format!("bad number `{field}`")))?;
            data.push(v);
        }
    }
    if data.len() != h * w {
        return Err(format_err(
            path,
            format!("expected {} values, found {}", h * w, data.len()),
        ));
    }
    Image2d::new(h, w, data)
}

/// A 1-D signal is stored as a 1xN image.
pub fn write_signal_csv(path: &Path, signal: &Signal1d) -> Result<()> {
    write_image_csv(path, &Image2d::new(1, signal.0.len(), signal.0.clone())?)
}

pub fn read_signal_csv(path: &Path) -> Result<Signal1d> {
    let img = read_image_csv(path)?;
    Signal1d::new(img.data)
}

/// Spectrum CSV with columns `bin,re,im,magnitude`.
pub fn write_spectrum_csv(path: &Path, spec: &Spectrum) -> Result<()> {
    let mut out = String::from("bin,re,im,magnitude\n");
    for (i, c) in spec.coefficients.iter().enumerate() {
        writeln!(out, "{},{},{},{}", i, c.re, c.im, c.norm()).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

/// Generic numeric plot series: one header row, then one row per point.
pub fn write_series_csv(path: &Path, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        if row.len() != columns.len() {
            return Err(Error::invalid("row width does not match column count"));
        }
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Dataset cache: one flattened image per row plus a labels file.
pub fn write_dataset_csv(images_path: &Path, labels_path: &Path, ds: &Dataset) -> Result<()> {
    let mut out = format!("# shape: {}x{}\n", ds.size, ds.size);
    for img in &ds.images {
        let row: Vec<String> = img.data.iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(images_path, out)?;
    let labels: Vec<String> = ds.labels.iter().map(|l| l.to_string()).collect();
    fs::write(labels_path, labels.join("\n") + "\n")?;
    Ok(())
}

pub fn read_dataset_csv(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(images_path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| format_err(images_path, "empty file"))?;
    let dims = header
        .strip_prefix("# shape: ")
        .ok_or_else(|| format_err(images_path, "missing shape header"))?;
    let (h, w) = dims
        .split_once('x')
        .ok_or_else(|| format_err(images_path, "malformed shape header"))?;
    let h: usize = h.trim().parse().map_err(|_| format_err(images_path, "bad height"))?;
    let w: usize = w.trim().parse().map_err(|_| format_err(images_path, "bad width"))?;
    if h != w {
        return Err(format_err(images_path, "dataset images must be square"));
    }
    let mut images = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let data = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| format_err(images_path, format!("bad number `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        images.push(Image2d::new(h, w, data)?);
    }
    let labels = fs::read_to_string(labels_path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<usize>()
                .map_err(|_| format_err(labels_path, format!("bad label `{l}`")))
        })
        .collect::<Result<Vec<usize>>>()?;
    if labels.len() != images.len() {
        return Err(format_err(labels_path, "label count != image count"));
    }
    Ok(Dataset {
        images,
        labels,
        size: h,
    })
}

/// Run provenance recorded next to every artifact directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub flags: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> RunManifest {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            flags: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn flag(mut self, key: &str, value: impl ToString) -> Self {
        self.flags.insert(key.to_string(), value.to_string());
        self
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(
            path.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
        );
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// SHA-256 of a file's bytes, for determinism checks.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(format!("{:x}", h.finalize()))
}

/// Minimal multi-series SVG line chart. Data-only plotting: fixed
/// canvas, linear axes spanning the data range, one polyline per series.
pub fn write_svg_chart(
    path: &Path,
    title: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> Result<()> {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    let points: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    if points.is_empty() {
        return Err(Error::invalid("cannot chart empty series"));
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &points {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n\
         <line x1=\"{M}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{}\" stroke=\"black\"/>\n",
        W / 2.0,
        H - M,
        W - M,
        H - M,
        H - M,
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path_points: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            path_points.join(" ")
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{name}</text>",
            W - M + 4.0,
            M + 14.0 * i as f64,
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{make_dataset, DatasetKind};
    use crate::spectral::dft1d;

    #[test]
    fn image_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.csv");
        let img = Image2d::new(3, 4, (0..12).map(|i| i as f64 * 0.5 - 2.0).collect()).unwrap();
        write_image_csv(&p, &img).unwrap();
        let back = read_image_csv(&p).unwrap();
        assert_eq!(back.height, 3);
        assert_eq!(back.width, 4);
        assert_eq!(back.data, img.data);
    }

    #[test]
    fn signal_and_spectrum_csv() {
        let dir = tempfile::tempdir().unwrap();
        let s = Signal1d::new((0..8).map(|i| (i as f64).sin()).collect()).unwrap();
        let sp = dir.path().join("sig.csv");
        write_signal_csv(&sp, &s).unwrap();
        assert_eq!(read_signal_csv(&sp).unwrap().0, s.0);
        let spec = dft1d(&s).unwrap();
        let cp = dir.path().join("spec.csv");
        write_spectrum_csv(&cp, &spec).unwrap();
        let text = std::fs::read_to_string(&cp).unwrap();
        assert!(text.starts_with("bin,re,im,magnitude\n"));
        assert_eq!(text.lines().count(), 9);
    }

    #[test]
    fn dataset_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = make_dataset(DatasetKind::Textures, 20, 16, 3).unwrap();
        let ip = dir.path().join("images.csv");
        let lp = dir.path().join("labels.txt");
        write_dataset_csv(&ip, &lp, &ds).unwrap();
        let back = read_dataset_csv(&ip, &lp).unwrap();
        assert_eq!(back.hash(), ds.hash());
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "1,2,3\n").unwrap();
        assert!(read_image_csv(&p).is_err());
        std::fs::write(&p, "# shape: 2x2\n1,2\n3,oops\n").unwrap();
        assert!(read_image_csv(&p).is_err());
        std::fs::write(&p, "# shape: 2x2\n1,2\n").unwrap();
        assert!(read_image_csv(&p).is_err());
    }

    #[test]
    fn manifest_and_hash_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("m1.json");
        let p2 = dir.path().join("m2.json");
        let m = RunManifest::new("lint", 7).flag("graph", "g.json");
        m.write(&p1).unwrap();
        m.write(&p2).unwrap();
        assert_eq!(file_sha256(&p1).unwrap(), file_sha256(&p2).unwrap());
    }

    #[test]
    fn svg_chart_is_wellformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("chart.svg");
        let series = vec![
            ("a".to_string(), vec![(0.0, 0.0), (1.0, 1.0)]),
            ("b".to_string(), vec![(0.0, 1.0), (1.0, 0.0)]),
        ];
        write_svg_chart(&p, "demo", &series).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.trim_end().ends_with("</svg>"));
        assert_eq!(text.matches("<polyline").count(), 2);
    }
}
