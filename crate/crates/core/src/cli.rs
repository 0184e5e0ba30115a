//! Command-line frontend.
//!
//! Exit codes: 0 on success, 1 on runtime or data errors, 2 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::Error;
use crate::filter::Threshold;
use crate::graph::{build_rag, wavepool, Aggregation, RagGraph};
use crate::imageio::{self, pad_image, CifarBatch, IdxPair, Image, OverlayOptions, PadMode};
use crate::mesh::{calibrate_multiplier, superpixel_image_detailed, SuperpixelMesh};
use crate::metrics::{self, mean_std, GroundTruthSegmentation};

#[derive(Debug, Parser)]
#[command(
    name = "wavemesh",
    version,
    about = "Wavelet quadtree superpixels and region adjacency graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Superpixel one image and write its mesh and graph.
    Superpixel(SuperpixelArgs),
    /// Superpixel a dataset and write per-image graphs plus statistics.
    Batch(BatchArgs),
    /// Apply quadtree pooling steps to a mesh/graph pair.
    Pool(PoolArgs),
    /// Achievable segmentation accuracy and explained variation against ground truth.
    Metrics(MetricsArgs),
    /// Find the threshold multiplier that hits a target mean cell count.
    Calibrate(CalibrateArgs),
    /// Cell-count statistics over a mesh directory or a dataset.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    Mnist,
    FashionMnist,
    Cifar10,
    Dir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggArg {
    Max,
    Mean,
}

impl From<AggArg> for Aggregation {
    fn from(a: AggArg) -> Self {
        match a {
            AggArg::Max => Aggregation::Max,
            AggArg::Mean => Aggregation::Mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PadArg {
    Edge,
    Zero,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetKind>,
    /// IDX image file (mnist, fashion-mnist).
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// IDX label file (mnist, fashion-mnist).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// CIFAR-10 batch file or image directory.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub limit: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SuperpixelArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// `zero` pads with black and keeps the whole padded square as content.
    #[arg(long, value_enum, default_value_t = PadArg::Edge)]
    pub pad: PadArg,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Also write an overlay PNG.
    #[arg(long)]
    pub render: bool,
    /// Also write nodes/edges CSV files.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// Mesh JSON.
    #[arg(long)]
    pub input: PathBuf,
    /// Graph JSON built on that mesh.
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub levels: u64,
    #[arg(long, value_enum, default_value_t = AggArg::Max)]
    pub agg: AggArg,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Image file or directory of images.
    #[arg(long)]
    pub input: PathBuf,
    /// Ground-truth file (.seg or label image) or directory keyed by image stem.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Calibrate lambda to this mean cell count first.
    #[arg(long)]
    pub target_count: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub limit: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report JSON path; per-image CSV goes next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long)]
    pub target_count: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub iters: usize,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Run(e) => write!(f, "error: {e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parse `args` and run the selected command, returning the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            match e {
                CliError::Usage(_) => 2,
                CliError::Run(_) => 1,
            }
        }
    }
}

pub fn execute(cmd: Command, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::Superpixel(a) => cmd_superpixel(&a, out),
        Command::Batch(a) => cmd_batch(&a, out),
        Command::Pool(a) => cmd_pool(&a, out),
        Command::Metrics(a) => cmd_metrics(&a, out),
        Command::Calibrate(a) => cmd_calibrate(&a, out),
        Command::Stats(a) => cmd_stats(&a, out),
    }
}

fn check_lambda(lambda: f64) -> CliResult<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(usage(format!("--lambda must be a finite value >= 0, got {lambda}")));
    }
    Ok(())
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::Run(Error::io(path, e)))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Run(Error::io(path, e)))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Run(Error::io(path, e)))
}

fn emit(out: &mut dyn Write, value: &serde_json::Value) -> CliResult<()> {
    writeln!(out, "{value}").map_err(|e| CliError::Run(Error::io("<stdout>", e)))
}

fn thread_pool(threads: Option<u64>) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0) as usize)
        .build()
        .map_err(|e| CliError::Run(Error::invalid(format!("thread pool: {e}"))))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

#[derive(Serialize)]
struct ThresholdReport {
    value: f64,
    variance: f64,
    iterations: usize,
    multiplier: f64,
}

impl From<&Threshold> for ThresholdReport {
    fn from(t: &Threshold) -> Self {
        Self {
            value: t.value,
            variance: t.variance,
            iterations: t.iterations,
            multiplier: t.multiplier,
        }
    }
}

fn thresholds_json(ts: &[Threshold]) -> serde_json::Value {
    json!(ts.iter().map(ThresholdReport::from).collect::<Vec<_>>())
}

pub fn cmd_superpixel(a: &SuperpixelArgs, out: &mut dyn Write) -> CliResult<()> {
    check_lambda(a.lambda)?;
    let raw = imageio::load_png_or_pgm(&a.input)?;
    let image = match a.pad {
        PadArg::Edge => pad_image(&raw, PadMode::Edge),
        PadArg::Zero => pad_image(&raw, PadMode::Zero).uncropped(),
    };
    let sp = superpixel_image_detailed(&image, a.lambda)?;
    let graph = build_rag(&sp.mesh, &image)?;

    create_dir(&a.out_dir)?;
    let name = stem(&a.input);
    write_file(&a.out_dir.join(format!("{name}.mesh.json")), sp.mesh.to_json()?)?;
    write_file(&a.out_dir.join(format!("{name}.graph.json")), graph.to_json()?)?;
    if a.csv {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        graph.write_nodes_csv(&mut nodes).expect("writing to a Vec");
        graph.write_edges_csv(&mut edges).expect("writing to a Vec");
        write_file(&a.out_dir.join(format!("{name}.nodes.csv")), nodes)?;
        write_file(&a.out_dir.join(format!("{name}.edges.csv")), edges)?;
    }
    if a.render {
        let png = imageio::render_overlay(&image, &sp.mesh, &OverlayOptions::default())?;
        write_file(&a.out_dir.join(format!("{name}.overlay.png")), png)?;
    }
    emit(
        out,
        &json!({
            "input": a.input.display().to_string(),
            "width": raw.width(),
            "height": raw.height(),
            "side": image.width(),
            "lambda": a.lambda,
            "cells": sp.mesh.len(),
            "edges": graph.edges.len(),
            "thresholds": thresholds_json(&sp.thresholds),
        }),
    )
}

/// One dataset item, already padded for the pipeline.
pub struct Sample {
    pub name: String,
    pub label: Option<u8>,
    pub image: Image,
}

fn pick_indices(len: usize, limit: Option<u64>, seed: Option<u64>) -> Vec<usize> {
    let n = limit.map_or(len, |l| (l as usize).min(len));
    match seed {
        Some(seed) if n < len => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut idx = rand::seq::index::sample(&mut rng, len, n).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..n).collect(),
    }
}

fn image_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Run(Error::io(dir, e)))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm" | "ppm" | "pnm"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Load (a subset of) a dataset. `seed` switches from "first `limit`" to a
/// seeded random subset of size `limit`.
pub fn load_dataset(d: &DatasetArgs, seed: Option<u64>) -> CliResult<Vec<Sample>> {
    let kind = d.dataset.ok_or_else(|| usage("--dataset is required"))?;
    match kind {
        DatasetKind::Mnist | DatasetKind::FashionMnist => {
            let (Some(images), Some(labels)) = (&d.images, &d.labels) else {
                return Err(usage("--images and --labels are required for IDX datasets"));
            };
            let pair = IdxPair::open(images, labels)?;
            pick_indices(pair.len(), d.limit, seed)
                .into_iter()
                .map(|i| {
                    let (img, label) = pair.get(i)?;
                    Ok(Sample {
                        name: format!("{i:06}"),
                        label: Some(label),
                        image: pad_image(&img, PadMode::Zero).uncropped(),
                    })
                })
                .collect()
        }
        DatasetKind::Cifar10 => {
            let path = d
                .input
                .as_ref()
                .or(d.images.as_ref())
                .ok_or_else(|| usage("--input (CIFAR-10 batch file) is required"))?;
            let batch = CifarBatch::open(path)?;
            pick_indices(batch.len(), d.limit, seed)
                .into_iter()
                .map(|i| {
                    let (img, label) = batch.get(i)?;
                    Ok(Sample {
                        name: format!("{i:06}"),
                        label: Some(label),
                        image: img,
                    })
                })
                .collect()
        }
        DatasetKind::Dir => {
            let dir = d
                .input
                .as_ref()
                .ok_or_else(|| usage("--input (image directory) is required"))?;
            let files = image_files(dir)?;
            pick_indices(files.len(), d.limit, seed)
                .into_iter()
                .map(|i| {
                    let img = imageio::load_png_or_pgm(&files[i])?;
                    Ok(Sample {
                        name: stem(&files[i]),
                        label: None,
                        image: pad_image(&img, PadMode::Edge),
                    })
                })
                .collect()
        }
    }
}

struct Processed {
    mesh: SuperpixelMesh,
    graph: RagGraph,
    thresholds: Vec<Threshold>,
}

fn process_all(samples: &[Sample], lambda: f64, threads: Option<u64>) -> CliResult<Vec<Processed>> {
    let pool = thread_pool(threads)?;
    let results: Vec<crate::Result<Processed>> = pool.install(|| {
        samples
            .par_iter()
            .map(|s| {
                let sp = superpixel_image_detailed(&s.image, lambda)?;
                let graph = build_rag(&sp.mesh, &s.image)?;
                Ok(Processed {
                    mesh: sp.mesh,
                    graph,
                    thresholds: sp.thresholds,
                })
            })
            .collect()
    });
    Ok(results.into_iter().collect::<crate::Result<Vec<_>>>()?)
}

fn count_summary(counts: &[usize]) -> serde_json::Value {
    let (mean, std) = mean_std(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
    json!({
        "mean": mean,
        "std": std,
        "min": counts.iter().min(),
        "max": counts.iter().max(),
    })
}

pub fn cmd_batch(a: &BatchArgs, out: &mut dyn Write) -> CliResult<()> {
    check_lambda(a.lambda)?;
    let samples = load_dataset(&a.data, None)?;
    if samples.is_empty() {
        return Err(CliError::Run(Error::invalid("dataset is empty")));
    }
    let processed = process_all(&samples, a.lambda, a.threads)?;

    let mesh_dir = a.out_dir.join("meshes");
    let graph_dir = a.out_dir.join("graphs");
    create_dir(&mesh_dir)?;
    create_dir(&graph_dir)?;
    let mut index = String::from("name,label,cells,edges,iterations\n");
    for (s, p) in samples.iter().zip(&processed) {
        write_file(&mesh_dir.join(format!("{}.json", s.name)), p.mesh.to_json()?)?;
        write_file(&graph_dir.join(format!("{}.json", s.name)), p.graph.to_json()?)?;
        let iters = p.thresholds.iter().map(|t| t.iterations).max().unwrap_or(0);
        let label = s.label.map(|l| l.to_string()).unwrap_or_default();
        index.push_str(&format!(
            "{},{},{},{},{}\n",
            s.name,
            label,
            p.mesh.len(),
            p.graph.edges.len(),
            iters
        ));
    }
    write_file(&a.out_dir.join("index.csv"), index)?;

    let meshes: Vec<SuperpixelMesh> = processed.iter().map(|p| p.mesh.clone()).collect();
    let stats = metrics::mesh_stats(&meshes)?;
    let iterations: Vec<usize> = processed
        .iter()
        .flat_map(|p| p.thresholds.iter().map(|t| t.iterations))
        .collect();
    let report = json!({
        "dataset": format!("{:?}", a.data.dataset.expect("checked by load_dataset")).to_lowercase(),
        "lambda": a.lambda,
        "images": samples.len(),
        "counts": count_summary(&stats.per_image_counts),
        "size_histogram": stats.size_histogram,
        "clipped": stats.clipped,
        "threshold_iterations": {
            "max": iterations.iter().max(),
            "mean": iterations.iter().sum::<usize>() as f64 / iterations.len() as f64,
        },
    });
    write_file(
        &a.out_dir.join("stats.json"),
        serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n",
    )?;
    emit(
        out,
        &json!({ "images": samples.len(), "counts": report["counts"].clone() }),
    )
}

pub fn cmd_pool(a: &PoolArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut mesh = SuperpixelMesh::from_json(&read_text(&a.input)?)
        .map_err(|e| CliError::Run(Error::format(&a.input, e.to_string())))?;
    let mut graph = RagGraph::from_json(&read_text(&a.graph)?)
        .map_err(|e| CliError::Run(Error::format(&a.graph, e.to_string())))?;
    create_dir(&a.out_dir)?;
    let mut counts = vec![mesh.len()];
    for level in 1..=a.levels {
        let (m, g, assign) = wavepool(&mesh, &graph, a.agg.into())?;
        write_file(&a.out_dir.join(format!("level_{level}.mesh.json")), m.to_json()?)?;
        write_file(&a.out_dir.join(format!("level_{level}.graph.json")), g.to_json()?)?;
        write_file(
            &a.out_dir.join(format!("level_{level}.assignment.json")),
            serde_json::to_string(&assign).map_err(Error::from)?,
        )?;
        counts.push(m.len());
        mesh = m;
        graph = g;
    }
    emit(
        out,
        &json!({ "agg": Aggregation::from(a.agg).to_string(), "nodes": counts }),
    )
}

fn find_gt(gt: &Path, name: &str) -> CliResult<PathBuf> {
    if gt.is_file() {
        return Ok(gt.to_path_buf());
    }
    ["seg", "png", "pgm"]
        .iter()
        .map(|ext| gt.join(format!("{name}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| CliError::Run(Error::format(gt, format!("no ground truth for `{name}`"))))
}

pub fn cmd_metrics(a: &MetricsArgs, out: &mut dyn Write) -> CliResult<()> {
    check_lambda(a.lambda)?;
    let samples = if a.input.is_dir() {
        let d = DatasetArgs {
            dataset: Some(DatasetKind::Dir),
            images: None,
            labels: None,
            input: Some(a.input.clone()),
            limit: a.limit,
        };
        load_dataset(&d, Some(a.seed))?
    } else {
        let img = imageio::load_png_or_pgm(&a.input)?;
        vec![Sample {
            name: stem(&a.input),
            label: None,
            image: pad_image(&img, PadMode::Edge),
        }]
    };
    if samples.is_empty() {
        return Err(CliError::Run(Error::invalid("no input images")));
    }
    let gts = samples
        .iter()
        .map(|s| Ok(GroundTruthSegmentation::load(find_gt(&a.gt, &s.name)?)?))
        .collect::<CliResult<Vec<_>>>()?;

    let lambda = match a.target_count {
        Some(t) => {
            let images: Vec<Image> = samples.iter().map(|s| s.image.clone()).collect();
            thread_pool(a.threads)?.install(|| calibrate_multiplier(&images, t, 20))?
        }
        None => a.lambda,
    };
    let processed = process_all(&samples, lambda, a.threads)?;

    let mut rows = String::from("name,cells,asa,ev\n");
    let (mut asas, mut evs, mut counts) = (Vec::new(), Vec::new(), Vec::new());
    for ((s, p), gt) in samples.iter().zip(&processed).zip(&gts) {
        let asa = metrics::asa(&p.mesh, gt)?;
        let ev = metrics::explained_variation(&p.mesh, &s.image)?;
        rows.push_str(&format!("{},{},{},{}\n", s.name, p.mesh.len(), asa, ev));
        asas.push(asa);
        evs.push(ev);
        counts.push(p.mesh.len() as f64);
    }
    let summary = |v: &[f64]| {
        let (m, s) = mean_std(v);
        json!({ "mean": m, "std": s })
    };
    let report = json!({
        "images": samples.len(),
        "lambda": lambda,
        "asa": summary(&asas),
        "ev": summary(&evs),
        "counts": summary(&counts),
    });
    if let Some(path) = &a.out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        write_file(path, serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n")?;
        write_file(&path.with_extension("csv"), rows)?;
    }
    emit(out, &report)
}

pub fn cmd_calibrate(a: &CalibrateArgs, out: &mut dyn Write) -> CliResult<()> {
    if a.target_count.is_nan() || a.target_count < 1.0 {
        return Err(usage("--target-count must be >= 1"));
    }
    let samples = load_dataset(&a.data, Some(a.seed))?;
    if samples.is_empty() {
        return Err(CliError::Run(Error::invalid("dataset is empty")));
    }
    let images: Vec<Image> = samples.into_iter().map(|s| s.image).collect();
    let pool = thread_pool(a.threads)?;
    let lambda = pool.install(|| calibrate_multiplier(&images, a.target_count, a.iters))?;
    let counts: Vec<usize> = pool.install(|| {
        images
            .par_iter()
            .map(|img| crate::mesh::superpixel_image(img, lambda).map(|m| m.len()))
            .collect::<crate::Result<_>>()
    })?;
    emit(
        out,
        &json!({
            "lambda": lambda,
            "target_count": a.target_count,
            "mean_count": counts.iter().sum::<usize>() as f64 / counts.len() as f64,
            "images": images.len(),
        }),
    )
}

fn mesh_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let dir = if dir.join("meshes").is_dir() {
        dir.join("meshes")
    } else {
        dir.to_path_buf()
    };
    let entries = fs::read_dir(&dir).map_err(|e| CliError::Run(Error::io(&dir, e)))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn cmd_stats(a: &StatsArgs, out: &mut dyn Write) -> CliResult<()> {
    check_lambda(a.lambda)?;
    let from_dir = a.data.dataset.is_none() || (a.data.dataset == Some(DatasetKind::Dir) && is_mesh_dir(&a.data));
    let meshes: Vec<SuperpixelMesh> = if from_dir {
        let dir = a
            .data
            .input
            .as_ref()
            .ok_or_else(|| usage("--input (mesh directory) or --dataset is required"))?;
        let files = mesh_files(dir)?;
        let n = a.data.limit.map_or(files.len(), |l| (l as usize).min(files.len()));
        files[..n]
            .iter()
            .map(|f| {
                SuperpixelMesh::from_json(&read_text(f)?).map_err(|e| CliError::Run(Error::format(f, e.to_string())))
            })
            .collect::<CliResult<_>>()?
    } else {
        let samples = load_dataset(&a.data, Some(a.seed))?;
        process_all(&samples, a.lambda, a.threads)?
            .into_iter()
            .map(|p| p.mesh)
            .collect()
    };
    let stats = metrics::mesh_stats(&meshes)?;
    let report = json!({
        "images": meshes.len(),
        "counts": count_summary(&stats.per_image_counts),
        "size_histogram": stats.size_histogram,
        "clipped": stats.clipped,
        "per_image_counts": stats.per_image_counts,
    });
    if let Some(path) = &a.out {
        write_file(path, serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n")?;
    }
    emit(out, &report)
}

fn is_mesh_dir(d: &DatasetArgs) -> bool {
    d.input
        .as_ref()
        .is_some_and(|p| p.join("meshes").is_dir() || mesh_files(p).is_ok_and(|f| !f.is_empty()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(args.iter().copied(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn missing_file_exits_one() {
        let dir = tempfile::tempdir().unwrap();
        let (code, _, err) = run_args(&[
            "wavemesh",
            "superpixel",
            "--input",
            "/nonexistent/none.png",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code, 1);
        assert!(err.contains("none.png"));
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(
            run_args(&[
                "wavemesh",
                "batch",
                "--dataset",
                "mnist",
                "--limit",
                "0",
                "--out-dir",
                "x"
            ])
            .0,
            2
        );
        assert_eq!(run_args(&["wavemesh", "frobnicate"]).0, 2);
        assert_eq!(run_args(&["wavemesh", "batch", "--out-dir", "/tmp/none"]).0, 2);
        let (code, _, _) = run_args(&["wavemesh", "superpixel", "--input", "x.png", "--lambda", "-1"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_args(&["wavemesh", "--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("superpixel"));
    }

    #[test]
    fn seeded_indices_are_stable() {
        let a = pick_indices(1000, Some(10), Some(7));
        assert_eq!(a, pick_indices(1000, Some(10), Some(7)));
        assert_ne!(a, pick_indices(1000, Some(10), Some(8)));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(pick_indices(5, Some(10), Some(1)), vec![0, 1, 2, 3, 4]);
        assert_eq!(pick_indices(50, Some(3), None), vec![0, 1, 2]);
    }
}
