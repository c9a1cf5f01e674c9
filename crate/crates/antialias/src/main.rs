//! Command-line entry point. Every analysis and experiment in the
//! library is exposed as a subcommand writing CSV/JSON artifacts under
//! an output directory, with a manifest recording versions, seeds and
//! flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use antialias::activations::{harmonic_decay_exponent, spectral_leakage, Activation};
use antialias::bench::{
    corruption_error, corruption_error_curve, full_eval, notch_eval, shift_consistency,
    CorruptionKind, EvalReport,
};
use antialias::filters::{binomial_psd_closed_form, Kernel, PsdForm};
use antialias::graph::{lint, rewrite, LayerGraph, Policy, Variant};
use antialias::io::{
    write_dataset_csv, write_series_csv, write_spectrum_csv, write_svg_chart, RunManifest,
};
use antialias::nn::{
    checkpoint, evaluate, make_dataset, train, DatasetKind, Model, TrainConfig,
};
use antialias::spectral::{dft1d, fold_spectrum, subsample, Signal1d};
use antialias::Result;

#[derive(Parser)]
#[command(name = "antialias", version, about = "Frequency analysis and anti-aliased CNN toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export binomial kernel taps and their power spectrum sweep.
    FilterPsd(FilterPsdArgs),
    /// Demonstrate spectrum folding under subsampling on a two-tone signal.
    AliasDemo(AliasDemoArgs),
    /// Harmonic spectra of ReLU/GELU/Swish responses to a pure sinusoid.
    ActivationSpectra(ActivationSpectraArgs),
    /// Report aliasing critical paths and capacity violations of a layer graph.
    Lint(LintArgs),
    /// Insert anti-aliasing blurs into a layer graph.
    Rewrite(RewriteArgs),
    /// Train a model on a procedural dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint: notch bands, corruptions, shift consistency.
    Eval(EvalArgs),
    /// Train baseline plus every variant/policy cell and emit a comparison table.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct FilterPsdArgs {
    /// Kernel size (3, 5, or 7).
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Number of frequency samples over [0, pi].
    #[arg(long, default_value_t = 128)]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AliasDemoArgs {
    /// Signal length.
    #[arg(long, default_value_t = 64)]
    samples: usize,
    /// Subsampling stride.
    #[arg(long, default_value_t = 2)]
    stride: usize,
    /// Cycles of the in-band tone.
    #[arg(long, default_value_t = 3)]
    low: usize,
    /// Cycles of the aliasing tone (above the subsampled Nyquist).
    #[arg(long, default_value_t = 27)]
    high: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ActivationSpectraArgs {
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 0.0)]
    offset: f64,
    /// Fundamental cycles over the sample window.
    #[arg(long, default_value_t = 4)]
    cycles: usize,
    #[arg(long, default_value_t = 256)]
    samples: usize,
    #[arg(long, default_value_t = 16)]
    max_harmonic: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LintArgs {
    /// Graph JSON file.
    graph: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RewriteArgs {
    /// Graph JSON file.
    graph: PathBuf,
    #[arg(long, default_value = "post")]
    variant: String,
    /// Blur kernel size.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value = "violations_only")]
    policy: String,
    /// Write the rewritten graph here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Graph JSON file; the bundled micro ResNet when omitted.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Blur placement applied before training (none = baseline).
    #[arg(long, default_value = "none")]
    variant: String,
    #[arg(long, default_value = "violations_only")]
    policy: String,
    /// Blur kernel size.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "textures")]
    dataset: String,
    #[arg(long, default_value_t = 1000)]
    train_size: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    learning_rate: f64,
    /// Also cache the training set as CSV under the output directory.
    #[arg(long)]
    cache_dataset: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint manifest (model.json with a sibling model.bin).
    #[arg(long)]
    model: PathBuf,
    /// Reference checkpoint for CE normalization; the model itself when omitted.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Which suite to run.
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 16)]
    bands: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "textures")]
    dataset: String,
    #[arg(long, default_value_t = 500)]
    test_size: usize,
    #[arg(long, default_value_t = 4)]
    max_shift: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "textures")]
    dataset: String,
    #[arg(long, default_value_t = 500)]
    train_size: usize,
    #[arg(long, default_value_t = 200)]
    test_size: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    /// Blur kernel size used by every rewrite.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 16)]
    bands: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let (name, result) = match cli.command {
        Command::FilterPsd(a) => ("filter-psd", cmd_filter_psd(a)),
        Command::AliasDemo(a) => ("alias-demo", cmd_alias_demo(a)),
        Command::ActivationSpectra(a) => ("activation-spectra", cmd_activation_spectra(a)),
        Command::Lint(a) => ("lint", cmd_lint(a)),
        Command::Rewrite(a) => ("rewrite", cmd_rewrite(a)),
        Command::Train(a) => ("train", cmd_train(a)),
        Command::Eval(a) => ("eval", cmd_eval(a)),
        Command::Pipeline(a) => ("pipeline", cmd_pipeline(a)),
    };
    if let Err(e) = result {
        let payload = json!({
            "error": e.to_string(),
            "context": { "command": name },
        });
        eprintln!("{payload}");
        std::process::exit(1);
    }
}

fn ensure_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn cmd_filter_psd(a: FilterPsdArgs) -> Result<()> {
    ensure_out(&a.out)?;
    let kern = Kernel::binomial(a.k)?;
    let taps: Vec<Vec<f64>> = kern
        .taps()
        .iter()
        .enumerate()
        .map(|(i, t)| vec![i as f64, *t])
        .collect();
    let taps_path = a.out.join("taps.csv");
    write_series_csv(&taps_path, &["tap", "value"], &taps)?;

    // sweep [0, pi]; the ideal stride-2 filter is the unit rectangle up
    // to pi/2, included as a reference series
    let norm = kern.normalized();
    let mut rows = Vec::with_capacity(a.samples);
    for i in 0..a.samples {
        let w = std::f64::consts::PI * i as f64 / (a.samples - 1).max(1) as f64;
        let mag = norm.psd_at(w);
        let closed = binomial_psd_closed_form(a.k, w, PsdForm::Corrected)?
            / binomial_psd_closed_form(a.k, 0.0, PsdForm::Corrected)?;
        let ideal = if w <= std::f64::consts::FRAC_PI_2 { 1.0 } else { 0.0 };
        rows.push(vec![w, mag, closed, ideal]);
    }
    let psd_path = a.out.join("psd.csv");
    write_series_csv(&psd_path, &["w", "magnitude", "closed_form", "ideal_stride2"], &rows)?;
    let chart = a.out.join("psd.svg");
    write_svg_chart(
        &chart,
        &format!("binomial k={} magnitude response", a.k),
        &[
            ("measured".into(), rows.iter().map(|r| (r[0], r[1])).collect()),
            ("ideal stride 2".into(), rows.iter().map(|r| (r[0], r[3])).collect()),
        ],
    )?;

    let mut manifest = RunManifest::new("filter-psd", 0)
        .flag("k", a.k)
        .flag("samples", a.samples);
    manifest.record_output(&taps_path);
    manifest.record_output(&psd_path);
    manifest.record_output(&chart);
    manifest.write(&a.out.join("manifest.json"))
}

fn cmd_alias_demo(a: AliasDemoArgs) -> Result<()> {
    ensure_out(&a.out)?;
    let n = a.samples;
    let signal = Signal1d::new(
        (0..n)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                (a.low as f64 * t).sin() + 0.5 * (a.high as f64 * t).sin()
            })
            .collect(),
    )?;
    let spec = dft1d(&signal)?;
    let folded = fold_spectrum(&spec, a.stride)?;
    let sub_spec = dft1d(&subsample(&signal, a.stride)?)?;
    let orig_path = a.out.join("original_spectrum.csv");
    let folded_path = a.out.join("folded_spectrum.csv");
    let sub_path = a.out.join("subsampled_spectrum.csv");
    write_spectrum_csv(&orig_path, &spec)?;
    write_spectrum_csv(&folded_path, &folded)?;
    write_spectrum_csv(&sub_path, &sub_spec)?;
    write_svg_chart(
        &a.out.join("spectra.svg"),
        "spectrum folding under subsampling",
        &[
            (
                "original".into(),
                spec.psd().iter().enumerate().map(|(i, p)| (i as f64, *p)).collect(),
            ),
            (
                "subsampled".into(),
                sub_spec.psd().iter().enumerate().map(|(i, p)| (i as f64, *p)).collect(),
            ),
        ],
    )?;
    let mut manifest = RunManifest::new("alias-demo", 0)
        .flag("samples", n)
        .flag("stride", a.stride)
        .flag("low", a.low)
        .flag("high", a.high);
    manifest.record_output(&orig_path);
    manifest.record_output(&folded_path);
    manifest.record_output(&sub_path);
    manifest.write(&a.out.join("manifest.json"))
}

fn cmd_activation_spectra(a: ActivationSpectraArgs) -> Result<()> {
    ensure_out(&a.out)?;
    let freq = a.cycles as f64 / a.samples as f64;
    let mut rows = Vec::new();
    let mut exponents = BTreeMap::new();
    let mut series = Vec::new();
    for act in [Activation::Relu, Activation::Gelu, Activation::swish()] {
        let profile = spectral_leakage(act, freq, a.samples, a.amplitude, a.offset, a.max_harmonic)?;
        for (m, p) in profile.power.iter().enumerate() {
            rows.push(vec![
                match act {
                    Activation::Relu => 0.0,
                    Activation::Gelu => 1.0,
                    Activation::Swish { .. } => 2.0,
                },
                m as f64,
                *p,
            ]);
        }
        if let Ok(slope) = harmonic_decay_exponent(&profile, 3, 8.min(a.max_harmonic)) {
            exponents.insert(act.name().to_string(), slope);
        }
        series.push((
            act.name().to_string(),
            profile
                .power
                .iter()
                .enumerate()
                .skip(1)
                .map(|(m, p)| (m as f64, p.max(1e-12).log10()))
                .collect(),
        ));
    }
    // activation encoded as 0=relu 1=gelu 2=swish in the numeric CSV;
    // a labeled copy goes in the JSON
    let csv_path = a.out.join("harmonics.csv");
    write_series_csv(&csv_path, &["activation", "harmonic", "power"], &rows)?;
    let json_path = a.out.join("decay_exponents.json");
    fs::write(&json_path, serde_json::to_string_pretty(&exponents)? + "\n")?;
    let chart = a.out.join("harmonics.svg");
    write_svg_chart(&chart, "log10 harmonic power", &series)?;
    let mut manifest = RunManifest::new("activation-spectra", 0)
        .flag("amplitude", a.amplitude)
        .flag("offset", a.offset)
        .flag("cycles", a.cycles)
        .flag("samples", a.samples)
        .flag("max_harmonic", a.max_harmonic);
    manifest.record_output(&csv_path);
    manifest.record_output(&json_path);
    manifest.record_output(&chart);
    manifest.write(&a.out.join("manifest.json"))
}

fn cmd_lint(a: LintArgs) -> Result<()> {
    let graph = LayerGraph::parse(&fs::read_to_string(&a.graph)?)?;
    let report = lint(&graph);
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match a.out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_variant(s: &str) -> Result<Variant> {
    s.parse()
}

fn parse_policy(s: &str) -> Result<Policy> {
    s.parse()
}

fn cmd_rewrite(a: RewriteArgs) -> Result<()> {
    let graph = LayerGraph::parse(&fs::read_to_string(&a.graph)?)?;
    let rw = rewrite(&graph, parse_variant(&a.variant)?, a.k, parse_policy(&a.policy)?)?;
    let text = rw.graph.to_json() + "\n";
    match a.out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn load_graph(path: &Option<PathBuf>) -> Result<LayerGraph> {
    match path {
        Some(p) => LayerGraph::parse(&fs::read_to_string(p)?),
        None => Ok(antialias::graph::fixtures::micro_resnet()),
    }
}

fn build_model(
    graph: LayerGraph,
    variant: &str,
    policy: &str,
    k: usize,
    seed: u64,
) -> Result<Model> {
    let graph = if variant == "none" {
        graph
    } else {
        rewrite(&graph, parse_variant(variant)?, k, parse_policy(policy)?)?.graph
    };
    Model::new(graph, 1, seed)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    ensure_out(&a.out)?;
    let kind: DatasetKind = a.dataset.parse()?;
    let dataset = make_dataset(kind, a.train_size, 32, a.seed)?;
    let model = build_model(load_graph(&a.graph)?, &a.variant, &a.policy, a.k, a.seed)?;
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let result = train(model, &dataset, &config)?;

    let bin = a.out.join("model.bin");
    let man = a.out.join("model.json");
    checkpoint::save(&result.model, &bin, &man)?;
    let metrics_path = a.out.join("metrics.json");
    let metrics = json!({
        "loss_curve": result.loss_curve,
        "train_accuracy": result.train_accuracy,
        "dataset_hash": dataset.hash(),
        "config": config,
    });
    fs::write(&metrics_path, serde_json::to_string_pretty(&metrics)? + "\n")?;
    if a.cache_dataset {
        write_dataset_csv(&a.out.join("images.csv"), &a.out.join("labels.txt"), &dataset)?;
    }
    let mut manifest = RunManifest::new("train", a.seed)
        .flag("variant", &a.variant)
        .flag("policy", &a.policy)
        .flag("k", a.k)
        .flag("epochs", a.epochs)
        .flag("dataset", &a.dataset)
        .flag("train_size", a.train_size);
    manifest.record_output(&bin);
    manifest.record_output(&man);
    manifest.record_output(&metrics_path);
    manifest.write(&a.out.join("manifest.json"))
}

fn load_checkpoint(manifest: &Path) -> Result<Model> {
    let bin = manifest.with_extension("bin");
    checkpoint::load(&bin, manifest)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    ensure_out(&a.out)?;
    let model = load_checkpoint(&a.model)?;
    let reference = match &a.reference {
        Some(p) => load_checkpoint(p)?,
        None => model.clone(),
    };
    let kind: DatasetKind = a.dataset.parse()?;
    // held-out seed offset so the test set never repeats training data
    let dataset = make_dataset(kind, a.test_size, 32, a.seed ^ 0x7e57)?;

    let report: serde_json::Value = match a.suite.as_str() {
        "notch" => {
            let accs = notch_eval(&model, &dataset, a.bands)?;
            let rows: Vec<Vec<f64>> = accs.iter().enumerate().map(|(b, v)| vec![b as f64, *v]).collect();
            write_series_csv(&a.out.join("notch.csv"), &["band", "accuracy"], &rows)?;
            json!({ "per_band_accuracy": accs })
        }
        "corrupt" => {
            let mut ces = BTreeMap::new();
            let mut rows = Vec::new();
            for kind in CorruptionKind::all() {
                let em = corruption_error_curve(&model, &dataset, kind, a.seed)?;
                let er = corruption_error_curve(&reference, &dataset, kind, a.seed)?;
                ces.insert(kind.name().to_string(), corruption_error(&em, &er)?);
                for (s, e) in em.iter().enumerate() {
                    rows.push(vec![kind as usize as f64, (s + 1) as f64, *e]);
                }
            }
            write_series_csv(&a.out.join("corruptions.csv"), &["corruption", "severity", "error"], &rows)?;
            json!({ "per_corruption_ce": ces })
        }
        "shift" => {
            let c = shift_consistency(&model, &dataset, a.max_shift, a.seed)?;
            json!({ "shift_consistency": c })
        }
        "all" => {
            let report = full_eval(&model, &reference, &dataset, a.bands, a.seed)?;
            write_eval_csv(&a.out, &report)?;
            serde_json::to_value(&report)?
        }
        other => {
            return Err(antialias::Error::invalid(format!(
                "unknown suite `{other}` (expected notch|corrupt|shift|all)"
            )))
        }
    };
    let report_path = a.out.join("report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
    let mut manifest = RunManifest::new("eval", a.seed)
        .flag("suite", &a.suite)
        .flag("bands", a.bands)
        .flag("dataset", &a.dataset)
        .flag("test_size", a.test_size);
    manifest.record_output(&report_path);
    manifest.write(&a.out.join("manifest.json"))
}

fn write_eval_csv(dir: &Path, report: &EvalReport) -> Result<()> {
    let rows: Vec<Vec<f64>> = report
        .per_band_accuracy
        .iter()
        .enumerate()
        .map(|(b, v)| vec![b as f64, *v])
        .collect();
    write_series_csv(&dir.join("notch.csv"), &["band", "accuracy"], &rows)?;
    Ok(())
}

fn cmd_pipeline(a: PipelineArgs) -> Result<()> {
    ensure_out(&a.out)?;
    let kind: DatasetKind = a.dataset.parse()?;
    let train_set = make_dataset(kind, a.train_size, 32, a.seed)?;
    let test_set = make_dataset(kind, a.test_size, 32, a.seed ^ 0x7e57)?;
    let config = TrainConfig {
        epochs: a.epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };

    let base_graph = antialias::graph::fixtures::micro_resnet();
    let baseline = train(Model::new(base_graph.clone(), 1, a.seed)?, &train_set, &config)?;
    let baseline_acc = evaluate(&baseline.model, &test_set, 32)?;
    let reports_dir = a.out.join("reports");
    fs::create_dir_all(&reports_dir)?;
    let baseline_report = full_eval(&baseline.model, &baseline.model, &test_set, a.bands, a.seed)?;
    fs::write(
        reports_dir.join("baseline.json"),
        serde_json::to_string_pretty(&baseline_report)? + "\n",
    )?;

    // Table rows are placement policies, columns are blur variants.
    let policies = [Policy::ViolationsOnly, Policy::AllStrided, Policy::Conv1Too];
    let mut table: Vec<Vec<f64>> = Vec::new();
    let mut cells = BTreeMap::new();
    for (pi, policy) in policies.iter().enumerate() {
        let mut row = vec![pi as f64];
        for variant in Variant::all() {
            let graph = rewrite(&base_graph, variant, a.k, *policy)?.graph;
            let trained = train(Model::new(graph, 1, a.seed)?, &train_set, &config)?;
            let acc = evaluate(&trained.model, &test_set, 32)?;
            row.push(acc);
            let name = format!("{}_{}", policy.name(), variant.name());
            let report = full_eval(&trained.model, &baseline.model, &test_set, a.bands, a.seed)?;
            fs::write(
                reports_dir.join(format!("{name}.json")),
                serde_json::to_string_pretty(&report)? + "\n",
            )?;
            cells.insert(name, acc);
        }
        table.push(row);
    }
    let table_path = a.out.join("table.csv");
    write_series_csv(
        &table_path,
        &["policy", "pre", "post", "prepost", "erf", "zhang"],
        &table,
    )?;
    let summary_path = a.out.join("summary.json");
    let summary = json!({
        "baseline_accuracy": baseline_acc,
        "cells": cells,
        "policy_rows": ["violations_only", "all_strided", "conv1_too"],
    });
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")?;

    let mut manifest = RunManifest::new("pipeline", a.seed)
        .flag("dataset", &a.dataset)
        .flag("train_size", a.train_size)
        .flag("test_size", a.test_size)
        .flag("epochs", a.epochs)
        .flag("k", a.k)
        .flag("bands", a.bands);
    manifest.record_output(&table_path);
    manifest.record_output(&summary_path);
    manifest.write(&a.out.join("manifest.json"))
}
