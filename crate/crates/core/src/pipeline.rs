//! End-to-end joint flare removal for one frame.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StageExt};
use crate::formation::{FlareScene, OpticalConfig};
use crate::image::{ImageBuffer, Mask};
use crate::light::{describe_sources, extract_light_mask, weighted_light_map, LightConfig, SourceDetection, THRESHOLD_FLOOR};
use crate::metrics::{psnr, ssim};
use crate::ostpm::{derive_ghost_mask, inpaint, inpaint_observed, FillStep, InpaintConfig, InpaintState};
use crate::psf::BolParams;
use crate::rng::RNG_ALGORITHM;
use crate::solver::{optimize, Problem, SolverConfig, SolverState};

/// Which removal stages run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stages {
    /// Render and fit the glow layer.
    pub glow: bool,
    /// Inpaint the ghost region to build the target; otherwise `y = R`.
    pub ghost: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self { glow: true, ghost: true }
    }
}

/// Every tunable of synthesis and removal, as stored in a config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub optics: OpticalConfig,
    pub light: LightConfig,
    pub bol: BolParams,
    pub inpaint: InpaintConfig,
    pub solver: SolverConfig,
    pub stages: Stages,
}

/// Machine-readable summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub input: String,
    pub seed: u64,
    pub rng: String,
    pub iterations: usize,
    pub mse_only_iters: usize,
    pub loss_history: Vec<f64>,
    #[serde(with = "db_opt")]
    pub psnr_in: Option<f64>,
    #[serde(with = "db_opt")]
    pub psnr_out: Option<f64>,
    pub ssim_in: Option<f64>,
    pub ssim_out: Option<f64>,
    pub wall_ms_per_stage: Option<BTreeMap<String, f64>>,
    pub light_components: usize,
    pub source_area: usize,
    pub ghost_area: usize,
    pub bol_factors: (f64, f64, f64),
    pub stages: Stages,
}

/// PSNR values as JSON numbers, with `"inf"` for identical images.
pub mod db_opt {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if x.is_infinite() => s.serialize_str("inf"),
            Some(x) => s.serialize_f64(*x),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Db {
            Num(f64),
            Text(String),
        }
        Ok(match Option::<Db>::deserialize(d)? {
            None => None,
            Some(Db::Num(x)) => Some(x),
            Some(Db::Text(t)) if t == "inf" => Some(f64::INFINITY),
            Some(Db::Text(t)) => return Err(serde::de::Error::custom(format!("bad dB value {t}"))),
        })
    }
}

/// Outputs of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// `ideal` holds the flare-free estimate `D`, `glow` the fitted glow `L`,
    /// `ghost` the removed ghost `R − y`.
    pub scene: FlareScene,
    pub target: ImageBuffer,
    pub light_map: ImageBuffer,
    pub detection: SourceDetection,
    pub report: RunReport,
}

/// Options that do not change the numerical result.
#[derive(Default)]
pub struct RunOptions<'a> {
    pub input_name: String,
    pub ground_truth: Option<&'a ImageBuffer>,
    /// Record wall-clock time per stage (makes reports non-reproducible).
    pub timings: bool,
    /// Called after every inpainting fill step.
    pub on_fill: Option<&'a mut dyn FnMut(&InpaintState, &FillStep)>,
}

/// Only the inpainting stage: detect sources, mirror them, fill the ghost region.
pub fn deghost(r: &ImageBuffer, cfg: &PipelineConfig) -> Result<(ImageBuffer, SourceDetection, Mask)> {
    let det = extract_light_mask(r, cfg.light.percentile, cfg.light.min_area).stage("light-source")?;
    let m_r = ghost_region(r, &det.mask, cfg).stage("ghost-mask")?;
    let y = inpaint(r, &m_r, cfg.inpaint.patch_radius, cfg.inpaint.search_window).stage("os-tpm")?;
    Ok((y, det, m_r))
}

/// Mirrored source mask, minus the sources themselves.
pub fn ghost_region(r: &ImageBuffer, m_s: &Mask, cfg: &PipelineConfig) -> Result<Mask> {
    if m_s.is_empty() {
        return Ok(Mask::empty(r.width(), r.height()));
    }
    let c = cfg.optics.center_for(r.width(), r.height())?;
    derive_ghost_mask(m_s, c, cfg.inpaint.ghost_dilation)?.minus(m_s)
}

/// Detects sources, builds the ghost-free target, fits the glow and the
/// flare-free image, and reports metrics against `ground_truth` if given.
pub fn run(r: &ImageBuffer, cfg: &PipelineConfig, opts: RunOptions<'_>) -> Result<RunOutput> {
    run_inner(r, cfg, opts, None)
}

/// Like [`run`] but with the source and ghost masks supplied, e.g. from
/// synthesis metadata, instead of detected.
pub fn run_with_masks(r: &ImageBuffer, m_s: &Mask, m_r: &Mask, cfg: &PipelineConfig, opts: RunOptions<'_>) -> Result<RunOutput> {
    r.ensure_mask_dims(m_r, "ghost mask").stage("ghost-mask")?;
    run_inner(r, cfg, opts, Some((m_s, m_r)))
}

fn run_inner(r: &ImageBuffer, cfg: &PipelineConfig, mut opts: RunOptions<'_>, known: Option<(&Mask, &Mask)>) -> Result<RunOutput> {
    cfg.solver.validate().stage("config")?;
    let mut times = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, times: &mut BTreeMap<String, f64>| {
        times.insert(name.to_string(), clock.elapsed().as_secs_f64() * 1e3);
        clock = Instant::now();
    };

    let det = match known {
        Some((m_s, _)) => describe_sources(r, m_s.clone(), THRESHOLD_FLOOR),
        None => extract_light_mask(r, cfg.light.percentile, cfg.light.min_area),
    }
    .stage("light-source")?;
    let m_s = det.mask.clone();
    lap("light_source", &mut times);

    let m_r = match (cfg.stages.ghost, known) {
        (false, _) => Mask::empty(r.width(), r.height()),
        (true, Some((_, m_r))) => m_r.clone(),
        (true, None) => ghost_region(r, &m_s, cfg).stage("ghost-mask")?,
    };
    let y = match opts.on_fill.as_mut() {
        Some(f) => inpaint_observed(r, &m_r, cfg.inpaint.patch_radius, cfg.inpaint.search_window, |s, st| f(s, st)),
        None => inpaint_observed(r, &m_r, cfg.inpaint.patch_radius, cfg.inpaint.search_window, |_, _| {}),
    }
    .stage("os-tpm")?;
    lap("os_tpm", &mut times);

    let light_map = weighted_light_map(r, &det, cfg.light.feather_sigma).stage("light-map")?;
    let problem = Problem::new(r, &y, &m_s, &light_map, &cfg.bol, cfg.solver.kernel_size, cfg.stages.glow).stage("solver-setup")?;
    let state = SolverState::new(&y, &cfg.solver).stage("solver-setup")?;
    let sol = optimize(state, &problem, &cfg.solver).stage("solver")?;
    lap("solver", &mut times);

    let d = sol.estimate.d.add(&light_map).stage("compose")?.clamp01();
    let ghost = r.sub(&y).stage("compose")?;
    let scene = FlareScene {
        ideal: d,
        glow: sol.estimate.glow.clone(),
        ghost,
        source_mask: m_s.clone(),
        ghost_mask: m_r.clone(),
    };

    let (psnr_in, psnr_out, ssim_in, ssim_out) = match opts.ground_truth {
        Some(gt) => (
            Some(psnr(r, gt).stage("metrics")?),
            Some(psnr(&scene.ideal, gt).stage("metrics")?),
            Some(ssim(r, gt).stage("metrics")?),
            Some(ssim(&scene.ideal, gt).stage("metrics")?),
        ),
        None => (None, None, None, None),
    };
    lap("metrics", &mut times);

    let report = RunReport {
        input: opts.input_name.clone(),
        seed: cfg.solver.seed,
        rng: RNG_ALGORITHM.to_string(),
        iterations: cfg.solver.iterations,
        mse_only_iters: cfg.solver.mse_only_iters,
        loss_history: sol.state.loss_history.clone(),
        psnr_in,
        psnr_out,
        ssim_in,
        ssim_out,
        wall_ms_per_stage: opts.timings.then_some(times),
        light_components: det.components.len(),
        source_area: m_s.area(),
        ghost_area: m_r.area(),
        bol_factors: sol.estimate.bol_factors,
        stages: cfg.stages,
    };
    Ok(RunOutput { scene, target: y, light_map, detection: det, report })
}
