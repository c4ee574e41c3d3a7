//! `airylab` command-line front end. Every artifact is CSV or one of the
//! library's binary formats; plots are left to external tools.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use airylab::codebook::{BeamParams, Codebook, CodebookSpec};
use airylab::dataset::{self, DatasetManifest, PatternNoise, ReceiverSampling, TrainingRecord};
use airylab::eval::{self, EvalRow, Metric};
use airylab::field::dump::FieldDump;
use airylab::field::{ApertureField, PropagationOptions, Propagator};
use airylab::nn::{Network, NetworkWeights};
use airylab::scenario::{blockage_ratio, build_grid, Region, ScenarioConfig};
use airylab::search::{self, Method, SearchResult};
use airylab::trajectory;

#[derive(Parser, Debug)]
#[command(name = "airylab", version, about = "Near-field Airy-beam simulation and beam training")]
struct Cli {
    /// Scenario JSON; defaults to the built-in 255-element setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Codebook spec JSON; defaults to 255×10×51 over the standard ranges.
    #[arg(long, global = true)]
    codebook: Option<PathBuf>,
    /// AMPW0001 weights file.
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
    /// Output path; stdout when omitted and the artifact is text.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for propagation sweeps.
    #[arg(long, global = true, env = "ABL_JOBS")]
    jobs: Option<usize>,
    /// Row zero-padding factor of the angular-spectrum FFT.
    #[arg(long, global = true, default_value_t = 2)]
    padding: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Propagate one codeword and dump the field or one slice.
    Field(FieldArgs),
    /// Caustic trajectory of one codeword as CSV.
    Caustic(BeamArgs),
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Run one beam-training method over a set of receivers.
    Sweep(SweepArgs),
    /// Network predictions for dataset records or receivers.
    Infer(InferArgs),
    /// Aggregate sweep results into metric tables.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct BeamArgs {
    #[arg(long, allow_hyphen_values = true)]
    theta: f64,
    /// Focal distance; omit for a steering beam.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    c: f64,
    /// Aperture samples for the caustic.
    #[arg(long, default_value_t = 401)]
    samples: usize,
}

#[derive(Args, Debug)]
struct FieldArgs {
    #[command(flatten)]
    beam: BeamArgs,
    /// Write only the column nearest to this x, as CSV.
    #[arg(long)]
    slice_x: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum DatasetCommand {
    /// Label receivers by exhaustive search and write an ABTD0001 file.
    Gen(GenArgs),
    /// Seeded train/validation/test partition as JSON.
    Split(InputArgs),
    /// Re-sweep a sample of records and compare labels and gains.
    Audit(AuditArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Receiver area as `x0,x1,y0,y1`; defaults to the region minus x = 0.
    #[arg(long, allow_hyphen_values = true)]
    area: Option<String>,
    /// Take every n-th grid cell of the area.
    #[arg(long, conflicts_with = "random_count")]
    lattice_stride: Option<usize>,
    /// Draw this many uniform receivers.
    #[arg(long)]
    random_count: Option<usize>,
    /// Per-component standard deviation of pattern noise.
    #[arg(long)]
    noise_sigma: Option<f64>,
}

#[derive(Args, Debug)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long)]
    input: PathBuf,
    /// Fraction of records to re-sweep.
    #[arg(long, default_value_t = 0.05)]
    fraction: f64,
}

#[derive(Args, Debug, Clone)]
struct ReceiverArgs {
    /// Receiver `x,y`; repeatable.
    #[arg(long = "receiver", allow_hyphen_values = true)]
    receivers: Vec<String>,
    /// Take receivers (and patterns) from an ABTD0001 file.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Which split of the dataset: train, val, test or all.
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[command(flatten)]
    receivers: ReceiverArgs,
    /// Candidate counts per task for the learned methods.
    #[arg(long, default_value = "3,3,5")]
    k: String,
    /// Move the first obstacle over `x0,x1,y0,y1,step`.
    #[arg(long, allow_hyphen_values = true)]
    obstacle_lattice: Option<String>,
    /// Comma-separated y-extents for the first obstacle; 0 removes it.
    #[arg(long)]
    obstacle_heights: Option<String>,
    /// Also write per-measurement gain traces here.
    #[arg(long)]
    traces: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[command(flatten)]
    receivers: ReceiverArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, value_parser = parse_metric)]
    metric: Metric,
    /// Sweep result CSVs.
    #[arg(long)]
    results: Vec<PathBuf>,
    /// Trace CSVs for the overhead curve.
    #[arg(long)]
    traces: Vec<PathBuf>,
    /// Obstacle center `x,y` for the distance bins.
    #[arg(long, allow_hyphen_values = true)]
    obstacle: Option<String>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Run(airylab::Error),
}

impl From<airylab::Error> for CliError {
    fn from(e: airylab::Error) -> Self {
        match e {
            airylab::Error::Config(m) => CliError::Usage(m),
            e => CliError::Run(e),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Run(e.into())
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: airylab::Error| e.to_string())
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse().map_err(|e: airylab::Error| e.to_string())
}

fn parse_floats(s: &str, n: usize, what: &str) -> CliResult<Vec<f64>> {
    let v: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    match v {
        Ok(v) if v.len() == n => Ok(v),
        _ => usage(format!("{what} expects {n} comma-separated numbers, got {s:?}")),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',').map(|t| t.trim().parse::<T>()).collect::<Result<_, _>>().or_else(|_| usage(format!("bad {what} list {s:?}")))
}

fn parse_point(s: &str) -> CliResult<(f64, f64)> {
    let v = parse_floats(s, 2, "a point")?;
    Ok((v[0], v[1]))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

struct Context<'a> {
    cli: &'a Cli,
    config: ScenarioConfig,
    seed: u64,
}

impl Context<'_> {
    fn propagator(&self, config: &ScenarioConfig) -> CliResult<Propagator> {
        let grid = build_grid(config)?;
        let options = PropagationOptions { padding_factor: self.cli.padding, ..Default::default() };
        Ok(Propagator::with_options(config, &grid, options)?)
    }

    fn codebook_spec(&self) -> CliResult<CodebookSpec> {
        match &self.cli.codebook {
            Some(p) => Ok(CodebookSpec::load(p)?),
            None => Ok(CodebookSpec::standard()),
        }
    }

    fn codebook(&self, spec: &CodebookSpec) -> CliResult<Codebook> {
        let c = &self.config;
        Ok(Codebook::new(spec, c.n_antennas, c.wavenumber(), c.antenna_spacing())?)
    }

    fn network(&self) -> CliResult<Network> {
        let Some(path) = &self.cli.weights else {
            return usage("--weights is required");
        };
        Ok(Network::new(NetworkWeights::load(path)?)?)
    }

    fn text_out(&self) -> CliResult<Box<dyn Write>> {
        Ok(match &self.cli.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }

    fn file_out(&self) -> CliResult<BufWriter<File>> {
        match &self.cli.out {
            Some(p) => Ok(BufWriter::new(File::create(p)?)),
            None => usage("--out is required for binary output"),
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return usage("--jobs must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let config = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::standard(),
    };
    config.validate()?;
    let seed = cli.seed.unwrap_or(0);
    info!("scenario {} seed {}", config.hash_hex(), seed);
    let ctx = Context { cli, config, seed };
    match &cli.command {
        Command::Field(a) => field(&ctx, a),
        Command::Caustic(a) => caustic(&ctx, a),
        Command::Dataset(DatasetCommand::Gen(a)) => dataset_gen(&ctx, a),
        Command::Dataset(DatasetCommand::Split(a)) => dataset_split(&ctx, a),
        Command::Dataset(DatasetCommand::Audit(a)) => dataset_audit(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
        Command::Infer(a) => infer(&ctx, a),
        Command::Eval(a) => evaluate(&ctx, a),
    }
}

fn beam(a: &BeamArgs) -> CliResult<BeamParams> {
    let p = BeamParams::new(a.theta, a.r.unwrap_or(f64::INFINITY), a.c);
    p.validate()?;
    Ok(p)
}

fn field(ctx: &Context, a: &FieldArgs) -> CliResult<()> {
    let params = beam(&a.beam)?;
    let c = &ctx.config;
    let cw = airylab::codebook::make_codeword(params, c.n_antennas, c.wavenumber(), c.antenna_spacing())?;
    let prop = ctx.propagator(c)?;
    let aperture = ApertureField::from(&cw);
    match a.slice_x {
        Some(x) => {
            let grid = prop.grid();
            let Some((col, _)) = grid.index_of(x, grid.y(0)) else {
                return usage(format!("x = {x} is outside the grid"));
            };
            let slice = prop.slices(&aperture, &[col])?.remove(0);
            let mut w = csv::Writer::from_writer(ctx.text_out()?);
            w.write_record(["x", "y", "re", "im", "gain"]).map_err(csv_err)?;
            for (row, v) in slice.values.iter().enumerate() {
                let rec = [slice.x, grid.y(row), v.re, v.im, v.norm_sqr()].map(|f| f.to_string());
                w.write_record(rec).map_err(csv_err)?;
            }
            w.flush()?;
        }
        None => {
            let mut out = ctx.file_out()?;
            let dump = FieldDump::from_slices(prop.grid(), &prop.all_slices(&aperture)?)?;
            dump.write_to(&mut out)?;
            out.flush()?;
            info!("wrote {}×{} field", dump.rows, dump.cols);
        }
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Run(airylab::Error::Io(e.into()))
}

fn caustic(ctx: &Context, a: &BeamArgs) -> CliResult<()> {
    let params = beam(a)?;
    let c = &ctx.config;
    let points = trajectory::caustic_curve(&params, c.wavenumber(), c.aperture() / 2.0, a.samples)?;
    info!(
        "{} of {} caustic points valid; curving range {:.3} m",
        points.iter().filter(|p| p.valid).count(),
        points.len(),
        trajectory::max_range(&params, c.wavenumber(), c.aperture())
    );
    trajectory::write_caustic_csv(ctx.text_out()?, &points)?;
    Ok(())
}

fn dataset_gen(ctx: &Context, a: &GenArgs) -> CliResult<()> {
    let prop = ctx.propagator(&ctx.config)?;
    let area = match &a.area {
        Some(s) => {
            let v = parse_floats(s, 4, "--area")?;
            Region { x_min: v[0], x_max: v[1], y_min: v[2], y_max: v[3] }
        }
        None => {
            let r = ctx.config.region;
            Region { x_min: r.x_min.max(prop.grid().step_x), ..r }
        }
    };
    let sampling = match (a.lattice_stride, a.random_count) {
        (Some(stride), None) => ReceiverSampling::Lattice { area, stride },
        (None, Some(count)) => ReceiverSampling::Random { area, count, seed: ctx.seed },
        _ => return usage("give exactly one of --lattice-stride or --random-count"),
    };
    let mut out = ctx.file_out()?;
    let spec = ctx.codebook_spec()?;
    let codebook = ctx.codebook(&spec)?;
    let receivers = dataset::sample_receivers(&prop, &sampling)?;
    info!("labeling {} receivers over {} codewords", receivers.len(), codebook.len());
    let noise = a.noise_sigma.map(|sigma| PatternNoise { sigma, seed: ctx.seed.wrapping_add(1) });
    let (records, manifest) = dataset::generate_dataset(&prop, &codebook, &spec, &receivers, noise, ctx.seed)?;
    dataset::write_records(&mut out, &manifest, &records)?;
    out.flush()?;
    info!("wrote {} records", records.len());
    Ok(())
}

fn read_dataset(path: &Path) -> CliResult<(DatasetManifest, Vec<TrainingRecord>)> {
    Ok(dataset::read_records(BufReader::new(File::open(path)?))?)
}

fn dataset_split(ctx: &Context, a: &InputArgs) -> CliResult<()> {
    let (manifest, records) = read_dataset(&a.input)?;
    let seed = ctx.cli.seed.unwrap_or(manifest.seed);
    info!("splitting {} records with seed {seed}", records.len());
    let split = dataset::split_dataset(records.len(), seed)?;
    let mut out = ctx.text_out()?;
    serde_json::to_writer_pretty(&mut out, &split).map_err(airylab::Error::from)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn dataset_audit(ctx: &Context, a: &AuditArgs) -> CliResult<()> {
    let (manifest, records) = read_dataset(&a.input)?;
    if !(a.fraction > 0.0 && a.fraction <= 1.0) {
        return usage("--fraction must lie in (0, 1]");
    }
    let prop = ctx.propagator(&ctx.config)?;
    let codebook = ctx.codebook(&manifest.codebook)?;
    let report = dataset::audit(&prop, &codebook, &manifest, &records, a.fraction, ctx.seed)?;
    println!("checked {} of {} records, {} mismatches", report.checked, records.len(), report.mismatches.len());
    if report.mismatches.is_empty() {
        Ok(())
    } else {
        Err(CliError::Run(airylab::Error::Input(format!("records {:?} disagree with a re-sweep", report.mismatches))))
    }
}

/// Receivers and, when read from a dataset, their stored patterns.
fn receivers(ctx: &Context, a: &ReceiverArgs) -> CliResult<(Vec<(f64, f64)>, Option<Vec<TrainingRecord>>)> {
    match (&a.dataset, a.receivers.is_empty()) {
        (Some(_), false) => usage("give either --receiver or --dataset"),
        (None, true) => usage("no receivers: give --receiver or --dataset"),
        (None, false) => Ok((a.receivers.iter().map(|s| parse_point(s)).collect::<CliResult<_>>()?, None)),
        (Some(path), true) => {
            let (manifest, records) = read_dataset(path)?;
            if manifest.scenario_hash != ctx.config.hash_hex() {
                warn!("dataset scenario {} differs from the current scenario", manifest.scenario_hash);
            }
            let keep: Vec<usize> = if a.split == "all" {
                (0..records.len()).collect()
            } else {
                let split = dataset::split_dataset(records.len(), manifest.seed)?;
                match a.split.as_str() {
                    "train" => split.train,
                    "val" => split.val,
                    "test" => split.test,
                    other => return usage(format!("unknown split {other:?}")),
                }
            };
            let picked: Vec<TrainingRecord> = keep.iter().map(|&k| records[k].clone()).collect();
            Ok((picked.iter().map(|r| r.receiver).collect(), Some(picked)))
        }
    }
}

/// One simulated scenario with the first obstacle's center and height, as
/// reported in result rows.
struct Variant {
    config: ScenarioConfig,
    center: Option<(f64, f64)>,
    height: f64,
}

/// Scenario variants for the obstacle lattice and height sweeps.
fn variants(base: &ScenarioConfig, a: &SweepArgs) -> CliResult<Vec<Variant>> {
    let first = base.obstacles.first();
    if a.obstacle_lattice.is_none() && a.obstacle_heights.is_none() {
        let (center, height) = (first.map(|o| o.center), first.map_or(0.0, |o| o.dims.1));
        return Ok(vec![Variant { config: base.clone(), center, height }]);
    }
    let Some(first) = first else {
        return usage("obstacle sweeps need a scenario with at least one obstacle");
    };
    let centers = match &a.obstacle_lattice {
        None => vec![first.center],
        Some(s) => {
            let v = parse_floats(s, 5, "--obstacle-lattice")?;
            if !(v[4] > 0.0) || v[1] < v[0] || v[3] < v[2] {
                return usage("obstacle lattice needs x0 ≤ x1, y0 ≤ y1 and a positive step");
            }
            let step = v[4];
            let axis = |lo: f64, hi: f64| -> Vec<f64> {
                let n = ((hi - lo) / step + 1e-9).floor() as usize;
                (0..=n).map(|k| lo + k as f64 * step).collect()
            };
            let ys = axis(v[2], v[3]);
            axis(v[0], v[1]).into_iter().flat_map(|x| ys.iter().map(move |&y| (x, y))).collect()
        }
    };
    let heights: Vec<f64> = match &a.obstacle_heights {
        None => vec![first.dims.1],
        Some(s) => parse_list(s, "height")?,
    };
    let mut out = Vec::with_capacity(centers.len() * heights.len());
    for &center in &centers {
        for &height in &heights {
            let mut config = base.clone();
            if height == 0.0 {
                config.obstacles.remove(0);
            } else {
                config.obstacles[0].center = center;
                config.obstacles[0].dims.1 = height;
            }
            config.validate()?;
            out.push(Variant { config, center: Some(center), height });
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct SweepRow {
    method: &'static str,
    x: f64,
    y: f64,
    l1: usize,
    l2: usize,
    l3: usize,
    theta: f64,
    r: f64,
    c: f64,
    gain: f64,
    overhead: usize,
    blockage: f64,
    height: f64,
    cx: Option<f64>,
    cy: Option<f64>,
}

#[derive(Serialize)]
struct TraceRow {
    method: &'static str,
    x: f64,
    y: f64,
    cx: Option<f64>,
    cy: Option<f64>,
    height: f64,
    n: usize,
    gain: f64,
}

fn sweep(ctx: &Context, a: &SweepArgs) -> CliResult<()> {
    let (points, records) = receivers(ctx, &a.receivers)?;
    let spec = ctx.codebook_spec()?;
    let focus = matches!(a.method, Method::FocusBs | Method::FocusDl);
    let spec = if focus { spec.focusing() } else { spec };
    let codebook = ctx.codebook(&spec)?;
    let k: Vec<usize> = parse_list(&a.k, "candidate count")?;
    let network = match a.method {
        Method::AiryDl | Method::FocusDl => Some(ctx.network()?),
        _ => None,
    };
    let k = network.as_ref().map(|n| k[..n.descriptor().tasks().min(k.len())].to_vec()).unwrap_or(k);
    let variants = variants(&ctx.config, a)?;
    if variants.len() > 1 && records.is_some() {
        warn!("stored dataset patterns are ignored under obstacle sweeps");
    }
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for Variant { config, center, height } in &variants {
        let prop = ctx.propagator(config)?;
        info!("{} over {} receivers, scenario {}", a.method, points.len(), config.hash_hex());
        let results: Vec<SearchResult> = match a.method {
            Method::AiryBs | Method::FocusBs => {
                let flat: Vec<usize> = (0..codebook.len()).collect();
                search::sweep_batch(&prop, &codebook, &flat, &points)?
            }
            Method::AiryHier => search::hierarchical_batch(&prop, &codebook, &points)?,
            Method::AiryDl | Method::FocusDl => {
                let net = network.as_ref().expect("network loaded for learned methods");
                let patterns = match (&records, variants.len()) {
                    (Some(recs), 1) => recs
                        .iter()
                        .map(|r| search::BeamPattern { values: r.pattern_f64(), receiver: r.receiver })
                        .collect(),
                    _ => search::dft_patterns(&prop, &points)?,
                };
                search::dl_batch(&prop, net, &codebook, &patterns, &k)?
            }
        };
        let (cx, cy, height) = (center.map(|c| c.0), center.map(|c| c.1), *height);
        for (&rx, r) in points.iter().zip(&results) {
            rows.push(SweepRow {
                method: a.method.name(),
                x: rx.0,
                y: rx.1,
                l1: r.index.0,
                l2: r.index.1,
                l3: r.index.2,
                theta: r.params.theta,
                r: r.params.r,
                c: r.params.c,
                gain: r.gain,
                overhead: r.overhead,
                blockage: blockage_ratio(config, rx)?,
                height,
                cx,
                cy,
            });
            if a.traces.is_some() {
                for (n, &gain) in r.trace.iter().enumerate() {
                    let method = a.method.name();
                    traces.push(TraceRow { method, x: rx.0, y: rx.1, cx, cy, height, n: n + 1, gain });
                }
            }
        }
    }
    let mut w = csv::Writer::from_writer(ctx.text_out()?);
    for row in &rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    if let Some(path) = &a.traces {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        for row in &traces {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush()?;
    }
    let mean = rows.iter().map(|r| r.gain).sum::<f64>() / rows.len() as f64;
    let overheads: Vec<usize> = rows.iter().map(|r| r.overhead).collect();
    let overhead = if overheads.iter().all(|&o| o == overheads[0]) {
        overheads[0].to_string()
    } else {
        format!("{}..{}", overheads.iter().min().unwrap(), overheads.iter().max().unwrap())
    };
    eprintln!("{}: {} results, mean gain {mean:.6e}, overhead {overhead}", a.method, rows.len());
    Ok(())
}

#[derive(Serialize)]
struct InferRow {
    x: f64,
    y: f64,
    label: String,
    predicted: String,
    confidence: String,
}

fn infer(ctx: &Context, a: &InferArgs) -> CliResult<()> {
    let network = ctx.network()?;
    let (points, records) = receivers(ctx, &a.receivers)?;
    let patterns: Vec<Vec<num_complex::Complex64>> = match &records {
        Some(recs) => recs.iter().map(|r| r.pattern_f64()).collect(),
        None => {
            let prop = ctx.propagator(&ctx.config)?;
            search::dft_patterns(&prop, &points)?.into_iter().map(|p| p.values).collect()
        }
    };
    let tasks = network.descriptor().tasks();
    let mut hits = vec![0usize; tasks];
    let mut w = csv::Writer::from_writer(ctx.text_out()?);
    for (i, (&rx, pattern)) in points.iter().zip(&patterns).enumerate() {
        let probs = network.forward(pattern)?;
        let pred = probs.argmax();
        let label = records.as_ref().map(|r| {
            let l = r[i].labels;
            [l.0, l.1, l.2]
        });
        if let Some(l) = label {
            for t in 0..tasks.min(3) {
                hits[t] += usize::from(pred[t] == l[t]);
            }
        }
        let join = |v: Vec<String>| v.join(" ");
        w.serialize(InferRow {
            x: rx.0,
            y: rx.1,
            label: label.map(|l| join(l[..tasks.min(3)].iter().map(|v| v.to_string()).collect())).unwrap_or_default(),
            predicted: join(pred.iter().map(|v| v.to_string()).collect()),
            confidence: join(pred.iter().zip(&probs.tasks).map(|(&p, t)| format!("{:.6}", t[p])).collect()),
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    if records.is_some() && !points.is_empty() {
        let acc: Vec<String> = hits.iter().map(|&h| format!("{:.4}", h as f64 / points.len() as f64)).collect();
        eprintln!("top-1 accuracy per task: {}", acc.join(" "));
    }
    Ok(())
}

fn read_rows(paths: &[PathBuf]) -> CliResult<Vec<EvalRow>> {
    let mut rows = Vec::new();
    for p in paths {
        let mut r = csv::Reader::from_path(p).map_err(csv_err)?;
        for row in r.deserialize() {
            rows.push(row.map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?);
        }
    }
    Ok(rows)
}

#[derive(serde::Deserialize)]
struct TraceIn {
    method: String,
    x: f64,
    y: f64,
    cx: Option<f64>,
    cy: Option<f64>,
    height: f64,
    n: usize,
    gain: f64,
}

fn evaluate(ctx: &Context, a: &EvalArgs) -> CliResult<()> {
    if a.metric == Metric::OverheadCurve {
        if a.traces.is_empty() {
            return usage("overhead-curve needs --traces");
        }
        // one trace per (method, receiver, scenario variant), in file order
        let mut by_method: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
        for p in &a.traces {
            let mut r = csv::Reader::from_path(p).map_err(csv_err)?;
            for row in r.deserialize() {
                let t: TraceIn = row.map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                let list = by_method.entry(t.method.clone()).or_default();
                if t.n == 1 {
                    list.push(Vec::new());
                }
                match list.last_mut() {
                    Some(trace) if trace.len() + 1 == t.n => trace.push(t.gain),
                    _ => {
                        return usage(format!(
                            "{}: trace for ({}, {}) at {:?}/{:?} h={} is out of order",
                            p.display(),
                            t.x,
                            t.y,
                            t.cx,
                            t.cy,
                            t.height
                        ))
                    }
                }
            }
        }
        let curves = by_method
            .into_iter()
            .map(|(m, traces)| Ok((m, eval::mean_overhead_curve(&traces)?)))
            .collect::<airylab::Result<Vec<_>>>()?;
        eval::write_curve_csv(ctx.text_out()?, &curves)?;
        return Ok(());
    }
    if a.results.is_empty() {
        return usage(format!("metric {} needs --results", a.metric.name()));
    }
    let rows = read_rows(&a.results)?;
    let mut out = ctx.text_out()?;
    match a.metric {
        Metric::Cdf => eval::write_cdf_csv(&mut out, &rows)?,
        Metric::PositionHeatmap => eval::write_heatmap_csv(&mut out, &eval::heatmap_cells(&rows)?)?,
        metric => {
            let center = match &a.obstacle {
                Some(s) => Some(parse_point(s)?),
                None => ctx.config.obstacles.first().map(|o| o.center),
            };
            eval::write_bins_csv(&mut out, &eval::evaluate(metric, &rows, center)?)?;
        }
    }
    out.flush()?;
    Ok(())
}
