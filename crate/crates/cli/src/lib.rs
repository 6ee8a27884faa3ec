//! `flare` command-line front end: dataset synthesis, mask export, glow and
//! ghost removal, and metric evaluation with JSON reports.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use flare_core::formation::{synth_pair, OpticalConfig};
use flare_core::io::{load_image, save_image_gamma, save_mask};
use flare_core::metrics::{psnr, ssim};
use flare_core::pipeline::{db_opt, deghost, run as run_pipeline, PipelineConfig, RunOptions, RunReport, Stages};
use flare_core::rng::RNG_ALGORITHM;
use flare_core::scenes::night_scene;
use flare_core::{FlareError, ImageBuffer};

pub mod files;

use files::{base_stem, ensure_dir, expand_inputs, file_stem, find_image, guard_outputs, list_images};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Pipeline {
        context: String,
        #[source]
        source: FlareError,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Pipeline { .. } => 1,
        }
    }

    fn pipeline(context: impl Into<String>, source: FlareError) -> Self {
        CliError::Pipeline { context: context.into(), source }
    }
}

#[derive(Debug, Parser)]
#[command(name = "flare", version, about = "Nighttime lens flare synthesis and removal")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON file with optics, light, bol, inpaint, solver and stages sections.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for synthesis and the solver; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Directory of ground-truth images paired by stem.
    #[arg(long, global = true, value_name = "DIR")]
    pub gt: Option<PathBuf>,
    /// Number of images processed in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Print the aggregate report as JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    /// Also write masks and intermediate layers.
    #[arg(long, global = true)]
    pub debug_dumps: bool,
    /// Record wall-clock time per stage in reports (makes them non-reproducible).
    #[arg(long, global = true)]
    pub timings: bool,
    /// Image files are gamma-encoded (x^(1/2.2)); decode on load, encode on save.
    #[arg(long, global = true)]
    pub gamma: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Add synthetic glow and ghost flare to clean images.
    Synth {
        inputs: Vec<PathBuf>,
        /// Generate this many procedural night scenes instead of (or besides) inputs.
        #[arg(long, value_name = "N")]
        procedural: Option<usize>,
        /// Side length of procedural scenes.
        #[arg(long, default_value_t = 128)]
        size: usize,
    },
    /// Write the detected light-source and ghost masks.
    Masks { inputs: Vec<PathBuf> },
    /// Remove glow only (ghost stage disabled).
    Deglow { inputs: Vec<PathBuf> },
    /// Remove ghosts only, writing the inpainted image.
    Deghost { inputs: Vec<PathBuf> },
    /// Joint glow and ghost removal.
    Joint { inputs: Vec<PathBuf> },
    /// Compare a results directory with `--gt`.
    Eval { results: PathBuf },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Masks { .. } => "masks",
            Command::Deglow { .. } => "deglow",
            Command::Deghost { .. } => "deghost",
            Command::Joint { .. } => "joint",
            Command::Eval { .. } => "eval",
        }
    }
}

/// Metadata written next to every synthesized pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthMeta {
    pub stem: String,
    pub seed: u64,
    pub gamma: f64,
    pub rng: String,
    pub optics: OpticalConfig,
    pub source_area: usize,
    pub ghost_area: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSummary {
    pub input: String,
    pub components: usize,
    pub source_area: usize,
    pub ghost_area: usize,
    pub threshold: f64,
}

/// Aggregate report of a removal command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub command: String,
    pub images: Vec<RunReport>,
    #[serde(with = "db_opt")]
    pub mean_psnr_in: Option<f64>,
    #[serde(with = "db_opt")]
    pub mean_psnr_out: Option<f64>,
    pub mean_ssim_in: Option<f64>,
    pub mean_ssim_out: Option<f64>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub result: String,
    pub ground_truth: String,
    #[serde(with = "db_opt")]
    pub psnr: Option<f64>,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    #[serde(with = "db_opt")]
    pub mean_psnr: Option<f64>,
    pub mean_ssim: Option<f64>,
    pub unmatched: Vec<String>,
    pub warnings: usize,
}

/// What a command produced, for printing.
#[derive(Debug, Clone)]
pub enum Outcome {
    Synth(Vec<SynthMeta>),
    Masks(Vec<MaskSummary>),
    Batch(BatchReport),
    Eval(EvalReport),
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let json = cli.common.json;
    match execute(&cli) {
        Ok(outcome) => {
            print_outcome(&outcome, json);
            match &outcome {
                Outcome::Batch(b) if !b.failures.is_empty() => 1,
                _ => 0,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses `args` (including the program name) and runs the command without printing.
pub fn execute_args<I, T>(args: I) -> Result<Outcome, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    execute(&cli)
}

/// Loads the config file (if any) and applies flag overrides.
pub fn load_config(common: &Common) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.solver.seed = seed;
    }
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let common = &cli.common;
    if common.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let cfg = load_config(common)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Synth { inputs, procedural, size } => cmd_synth(common, &cfg, inputs, *procedural, *size).map(Outcome::Synth),
        Command::Masks { inputs } => cmd_masks(common, &cfg, inputs).map(Outcome::Masks),
        Command::Deghost { inputs } => cmd_deghost(common, &cfg, inputs).map(Outcome::Batch),
        Command::Deglow { inputs } => {
            let cfg = PipelineConfig { stages: Stages { ghost: false, ..cfg.stages }, ..cfg.clone() };
            cmd_remove(common, &cfg, inputs, "deglow").map(Outcome::Batch)
        }
        Command::Joint { inputs } => cmd_remove(common, &cfg, inputs, "joint").map(Outcome::Batch),
        Command::Eval { results } => cmd_eval(common, results).map(Outcome::Eval),
    })
}

fn out_dir(common: &Common) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn load(path: &Path, common: &Common) -> Result<ImageBuffer, CliError> {
    load_image(path, common.gamma).map_err(|e| CliError::pipeline(format!("loading {}", path.display()), e))
}

fn save(img: &ImageBuffer, path: &Path, common: &Common) -> Result<(), CliError> {
    save_image_gamma(img, path, common.gamma).map_err(|e| CliError::pipeline(format!("writing {}", path.display()), e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::pipeline(format!("writing {}", path.display()), FlareError::Io { path: path.into(), source: e }))
}

/// Clean sources for `synth`: input files first, then procedural scenes.
enum CleanSource {
    File(PathBuf),
    Scene(u64),
}

pub fn cmd_synth(
    common: &Common,
    cfg: &PipelineConfig,
    inputs: &[PathBuf],
    procedural: Option<usize>,
    size: usize,
) -> Result<Vec<SynthMeta>, CliError> {
    let base_seed = common.seed.unwrap_or(cfg.solver.seed);
    let mut sources: Vec<(String, u64, CleanSource)> = expand_inputs(inputs)?
        .into_iter()
        .enumerate()
        .map(|(i, p)| (file_stem(&p), base_seed + i as u64, CleanSource::File(p)))
        .collect();
    let offset = sources.len() as u64;
    for k in 0..procedural.unwrap_or(0) as u64 {
        let seed = base_seed + offset + k;
        sources.push((format!("scene_{seed:03}"), seed, CleanSource::Scene(seed)));
    }
    if sources.is_empty() {
        return Err(CliError::Usage("synth needs input images or --procedural N".into()));
    }
    if size < cfg.optics.kernel_size {
        return Err(CliError::Usage(format!("--size {size} is smaller than the scatter kernel ({})", cfg.optics.kernel_size)));
    }
    let out = out_dir(common);
    let planned: Vec<PathBuf> = sources
        .iter()
        .flat_map(|(stem, _, _)| ["flare.png", "gt.png", "meta.json"].map(|s| out.join(format!("{stem}_{s}"))))
        .collect();
    guard_outputs(&planned, common.force)?;
    ensure_dir(&out)?;

    sources
        .par_iter()
        .map(|(stem, seed, src)| {
            let clean = match src {
                CleanSource::File(p) => load(p, common)?,
                CleanSource::Scene(s) => night_scene(*s, size, size),
            };
            let pair = synth_pair(&clean, &cfg.optics, *seed).map_err(|e| CliError::pipeline(format!("synthesizing {stem}"), e))?;
            save(&pair.flared, &out.join(format!("{stem}_flare.png")), common)?;
            save(&pair.clean, &out.join(format!("{stem}_gt.png")), common)?;
            if common.debug_dumps {
                dump_mask(&pair.scene.source_mask, &out.join(format!("{stem}_ms.png")))?;
                dump_mask(&pair.scene.ghost_mask, &out.join(format!("{stem}_mr.png")))?;
            }
            let meta = SynthMeta {
                stem: stem.clone(),
                seed: *seed,
                gamma: pair.gamma,
                rng: RNG_ALGORITHM.to_string(),
                optics: cfg.optics.clone(),
                source_area: pair.scene.source_mask.area(),
                ghost_area: pair.scene.ghost_mask.area(),
            };
            write_json(&meta, &out.join(format!("{stem}_meta.json")))?;
            Ok(meta)
        })
        .collect()
}

fn dump_mask(mask: &flare_core::Mask, path: &Path) -> Result<(), CliError> {
    save_mask(mask, path).map_err(|e| CliError::pipeline(format!("writing {}", path.display()), e))
}

fn required_inputs(inputs: &[PathBuf], command: &str) -> Result<Vec<PathBuf>, CliError> {
    let files = expand_inputs(inputs)?;
    if files.is_empty() {
        return Err(CliError::Usage(format!("{command} needs at least one input image")));
    }
    Ok(files)
}

pub fn cmd_masks(common: &Common, cfg: &PipelineConfig, inputs: &[PathBuf]) -> Result<Vec<MaskSummary>, CliError> {
    let files = required_inputs(inputs, "masks")?;
    let out = out_dir(common);
    let planned: Vec<PathBuf> = files
        .iter()
        .flat_map(|p| ["ms.png", "mr.png"].map(|s| out.join(format!("{}_{s}", base_stem(p)))))
        .chain([out.join("masks_report.json")])
        .collect();
    guard_outputs(&planned, common.force)?;
    ensure_dir(&out)?;
    let rows = files
        .par_iter()
        .map(|p| {
            let stem = base_stem(p);
            let r = load(p, common)?;
            let det = flare_core::light::extract_light_mask(&r, cfg.light.percentile, cfg.light.min_area)
                .map_err(|e| CliError::pipeline(&stem, e.in_stage("light-source")))?;
            let m_r = flare_core::pipeline::ghost_region(&r, &det.mask, cfg)
                .map_err(|e| CliError::pipeline(&stem, e.in_stage("ghost-mask")))?;
            dump_mask(&det.mask, &out.join(format!("{stem}_ms.png")))?;
            dump_mask(&m_r, &out.join(format!("{stem}_mr.png")))?;
            Ok(MaskSummary {
                input: p.display().to_string(),
                components: det.components.len(),
                source_area: det.mask.area(),
                ghost_area: m_r.area(),
                threshold: det.threshold_used,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    write_json(&rows, &out.join("masks_report.json"))?;
    Ok(rows)
}

fn ground_truth_for(common: &Common, stem: &str) -> Result<Option<ImageBuffer>, CliError> {
    let Some(dir) = &common.gt else { return Ok(None) };
    match find_image(dir, &[format!("{stem}_gt"), stem.to_string()]) {
        Some(p) => load(&p, common).map(Some),
        None => {
            log::warn!("no ground truth for {stem} in {}", dir.display());
            Ok(None)
        }
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn batch_report(command: &str, results: Vec<Result<RunReport, CliError>>) -> BatchReport {
    let mut images = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rep) => images.push(rep),
            Err(e) => {
                log::error!("{e}");
                failures.push(e.to_string());
            }
        }
    }
    BatchReport {
        command: command.to_string(),
        mean_psnr_in: mean(images.iter().map(|r| r.psnr_in)),
        mean_psnr_out: mean(images.iter().map(|r| r.psnr_out)),
        mean_ssim_in: mean(images.iter().map(|r| r.ssim_in)),
        mean_ssim_out: mean(images.iter().map(|r| r.ssim_out)),
        images,
        failures,
    }
}

/// `joint` and `deglow`: the full solver, with the stages set in `cfg`.
pub fn cmd_remove(common: &Common, cfg: &PipelineConfig, inputs: &[PathBuf], command: &str) -> Result<BatchReport, CliError> {
    let files = required_inputs(inputs, command)?;
    let out = out_dir(common);
    let report_path = out.join(format!("{command}_report.json"));
    let planned: Vec<PathBuf> = files
        .iter()
        .flat_map(|p| ["D.png", "L.png", "y.png", "report.json"].map(|s| out.join(format!("{}_{s}", base_stem(p)))))
        .chain([report_path.clone()])
        .collect();
    guard_outputs(&planned, common.force)?;
    ensure_dir(&out)?;

    let results: Vec<Result<RunReport, CliError>> = files
        .par_iter()
        .map(|p| {
            let stem = base_stem(p);
            let r = load(p, common)?;
            let gt = ground_truth_for(common, &stem)?;
            let opts = RunOptions {
                input_name: p.display().to_string(),
                ground_truth: gt.as_ref(),
                timings: common.timings,
                on_fill: None,
            };
            let res = run_pipeline(&r, cfg, opts).map_err(|e| CliError::pipeline(&stem, e))?;
            save(&res.scene.ideal, &out.join(format!("{stem}_D.png")), common)?;
            save(&res.scene.glow.clamp01(), &out.join(format!("{stem}_L.png")), common)?;
            save(&res.target, &out.join(format!("{stem}_y.png")), common)?;
            if common.debug_dumps {
                dump_mask(&res.scene.source_mask, &out.join(format!("{stem}_ms.png")))?;
                dump_mask(&res.scene.ghost_mask, &out.join(format!("{stem}_mr.png")))?;
                save(&res.light_map.clamp01(), &out.join(format!("{stem}_lightmap.png")), common)?;
            }
            write_json(&res.report, &out.join(format!("{stem}_report.json")))?;
            log::info!("{stem}: done");
            Ok(res.report)
        })
        .collect();
    let report = batch_report(command, results);
    write_json(&report, &report_path)?;
    Ok(report)
}

/// `deghost`: inpainting only; `y` is the output.
pub fn cmd_deghost(common: &Common, cfg: &PipelineConfig, inputs: &[PathBuf]) -> Result<BatchReport, CliError> {
    let files = required_inputs(inputs, "deghost")?;
    let out = out_dir(common);
    let report_path = out.join("deghost_report.json");
    let planned: Vec<PathBuf> = files
        .iter()
        .map(|p| out.join(format!("{}_y.png", base_stem(p))))
        .chain([report_path.clone()])
        .collect();
    guard_outputs(&planned, common.force)?;
    ensure_dir(&out)?;

    let results: Vec<Result<RunReport, CliError>> = files
        .par_iter()
        .map(|p| {
            let stem = base_stem(p);
            let r = load(p, common)?;
            let gt = ground_truth_for(common, &stem)?;
            let (y, det, m_r) = deghost(&r, cfg).map_err(|e| CliError::pipeline(&stem, e))?;
            save(&y, &out.join(format!("{stem}_y.png")), common)?;
            if common.debug_dumps {
                dump_mask(&det.mask, &out.join(format!("{stem}_ms.png")))?;
                dump_mask(&m_r, &out.join(format!("{stem}_mr.png")))?;
            }
            let metric = |a: &ImageBuffer, f: fn(&ImageBuffer, &ImageBuffer) -> flare_core::Result<f64>| -> Result<Option<f64>, CliError> {
                match &gt {
                    Some(g) => f(a, g).map(Some).map_err(|e| CliError::pipeline(&stem, e.in_stage("metrics"))),
                    None => Ok(None),
                }
            };
            Ok(RunReport {
                input: p.display().to_string(),
                seed: cfg.solver.seed,
                rng: RNG_ALGORITHM.to_string(),
                iterations: 0,
                mse_only_iters: 0,
                loss_history: Vec::new(),
                psnr_in: metric(&r, psnr)?,
                psnr_out: metric(&y, psnr)?,
                ssim_in: metric(&r, ssim)?,
                ssim_out: metric(&y, ssim)?,
                wall_ms_per_stage: None,
                light_components: det.components.len(),
                source_area: det.mask.area(),
                ghost_area: m_r.area(),
                bol_factors: (1.0, 1.0, 1.0),
                stages: Stages { glow: false, ghost: true },
            })
        })
        .collect();
    let report = batch_report("deghost", results);
    write_json(&report, &report_path)?;
    Ok(report)
}

/// Pairs every result image with a ground-truth image by stem.
///
/// A result `x_D.png` (or `x.png`) matches `x_D`, `x_gt` or `x` in the GT
/// directory, in that order. If the results directory holds any `_D`
/// images, only those are evaluated.
pub fn cmd_eval(common: &Common, results: &Path) -> Result<EvalReport, CliError> {
    let Some(gt_dir) = &common.gt else {
        return Err(CliError::Usage("eval needs --gt DIR".into()));
    };
    if !results.is_dir() {
        return Err(CliError::Usage(format!("{} is not a directory", results.display())));
    }
    if !gt_dir.is_dir() {
        return Err(CliError::Usage(format!("{} is not a directory", gt_dir.display())));
    }
    let mut files = list_images(results)?;
    if files.iter().any(|p| file_stem(p).ends_with("_D")) {
        files.retain(|p| file_stem(p).ends_with("_D"));
    }

    let mut pairs = Vec::new();
    let mut unmatched = Vec::new();
    for f in files {
        let stem = file_stem(&f);
        let base = stem.strip_suffix("_D").unwrap_or(&stem).to_string();
        match find_image(gt_dir, &[stem.clone(), format!("{base}_gt"), base]) {
            Some(g) => pairs.push((f, g)),
            None => {
                log::warn!("no ground truth for {}", f.display());
                unmatched.push(f.display().to_string());
            }
        }
    }
    let mut rows: Vec<EvalRow> = pairs
        .par_iter()
        .map(|(f, g)| -> Result<Option<EvalRow>, CliError> {
            let (a, b) = (load(f, common)?, load(g, common)?);
            let scores = psnr(&a, &b).and_then(|p| ssim(&a, &b).map(|s| (p, s)));
            match scores {
                Ok((p, s)) => Ok(Some(EvalRow {
                    result: f.display().to_string(),
                    ground_truth: g.display().to_string(),
                    psnr: Some(p),
                    ssim: s,
                })),
                Err(e) => {
                    log::warn!("skipping {}: {e}", f.display());
                    Ok(None)
                }
            }
        })
        .collect::<Result<Vec<_>, CliError>>()?
        .into_iter()
        .flatten()
        .collect();
    rows.sort_by(|a, b| a.result.cmp(&b.result));
    let skipped = pairs.len() - rows.len();
    let report = EvalReport {
        mean_psnr: mean(rows.iter().map(|r| r.psnr)),
        mean_ssim: mean(rows.iter().map(|r| Some(r.ssim))),
        warnings: unmatched.len() + skipped,
        unmatched,
        rows,
    };
    if report.rows.is_empty() {
        return Err(CliError::pipeline(
            "eval",
            FlareError::Parameter(format!("no result image could be paired ({} skipped)", report.warnings)),
        ));
    }
    if let Some(out) = &common.out {
        let path = out.join("eval_report.json");
        guard_outputs(std::slice::from_ref(&path), common.force)?;
        ensure_dir(out)?;
        write_json(&report, &path)?;
    }
    Ok(report)
}

fn fmt_db(v: Option<f64>) -> String {
    match v {
        None => "-".into(),
        Some(x) if x.is_infinite() => "inf".into(),
        Some(x) => format!("{x:.2}"),
    }
}

fn fmt_ssim(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

/// Aligned-column text for humans.
pub fn render_text(outcome: &Outcome) -> String {
    let mut s = String::new();
    match outcome {
        Outcome::Synth(metas) => {
            s += &format!("{:<24} {:>6} {:>7} {:>8} {:>8}\n", "stem", "seed", "gamma", "source", "ghost");
            for m in metas {
                s += &format!("{:<24} {:>6} {:>7.4} {:>8} {:>8}\n", m.stem, m.seed, m.gamma, m.source_area, m.ghost_area);
            }
        }
        Outcome::Masks(rows) => {
            s += &format!("{:<40} {:>6} {:>8} {:>8}\n", "input", "comps", "source", "ghost");
            for r in rows {
                s += &format!("{:<40} {:>6} {:>8} {:>8}\n", r.input, r.components, r.source_area, r.ghost_area);
            }
        }
        Outcome::Batch(b) => {
            s += &format!("{:<40} {:>9} {:>9} {:>8} {:>8}\n", "input", "psnr_in", "psnr_out", "ssim_in", "ssim_out");
            for r in &b.images {
                s += &format!(
                    "{:<40} {:>9} {:>9} {:>8} {:>8}\n",
                    r.input,
                    fmt_db(r.psnr_in),
                    fmt_db(r.psnr_out),
                    fmt_ssim(r.ssim_in),
                    fmt_ssim(r.ssim_out)
                );
            }
            s += &format!(
                "{:<40} {:>9} {:>9} {:>8} {:>8}\n",
                "mean",
                fmt_db(b.mean_psnr_in),
                fmt_db(b.mean_psnr_out),
                fmt_ssim(b.mean_ssim_in),
                fmt_ssim(b.mean_ssim_out)
            );
            for f in &b.failures {
                s += &format!("failed: {f}\n");
            }
        }
        Outcome::Eval(e) => {
            s += &format!("{:<40} {:>9} {:>8}\n", "result", "psnr", "ssim");
            for r in &e.rows {
                s += &format!("{:<40} {:>9} {:>8.4}\n", r.result, fmt_db(r.psnr), r.ssim);
            }
            s += &format!("{:<40} {:>9} {:>8}\n", "mean", fmt_db(e.mean_psnr), fmt_ssim(e.mean_ssim));
            if e.warnings > 0 {
                s += &format!("{} warning(s); unmatched: {}\n", e.warnings, e.unmatched.join(", "));
            }
        }
    }
    s
}

pub fn render_json(outcome: &Outcome) -> String {
    let text = match outcome {
        Outcome::Synth(m) => serde_json::to_string_pretty(m),
        Outcome::Masks(m) => serde_json::to_string_pretty(m),
        Outcome::Batch(b) => serde_json::to_string_pretty(b),
        Outcome::Eval(e) => serde_json::to_string_pretty(e),
    };
    text.expect("reports serialize")
}

fn print_outcome(outcome: &Outcome, json: bool) {
    if json {
        println!("{}", render_json(outcome));
    } else {
        print!("{}", render_text(outcome));
    }
}
