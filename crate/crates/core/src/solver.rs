//! Self-supervised decomposition of a flared frame.
//!
//! The flare-free estimate `D = sigmoid(d)` and the glow kernel
//! `k = softmax(θ)` are fitted so that
//!
//! ```text
//! ŷ = clamp~(D + s·((R·M_s) ∗ k) + light map)
//! ```
//!
//! matches the ghost-free target `y`, where `s` is the BOL scale. The loss is
//! MSE for the first `mse_only_iters` iterations and `MSE + (1 − SSIM)`
//! afterwards, plus a small total-variation term on `D`. `s` is recomputed
//! every step but held constant when differentiating.

use serde::{Deserialize, Serialize};

use crate::error::{FlareError, Result};
use crate::image::{ImageBuffer, Mask};
use crate::kernel::FlareKernel;
use crate::metrics::{mse, ssim, ssim_with_grad};
use crate::psf::{gen_kernel, softmax_vjp, BolContext, BolParams, KernelParams, SparseSource};

/// Below this `clamp_smooth` is the identity.
pub const KNEE: f64 = 0.9;
/// Smoothing of the total-variation norm.
pub const TV_EPS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub iterations: usize,
    pub mse_only_iters: usize,
    /// Step size for the image parameters.
    pub learning_rate: f64,
    /// Step size for the kernel logits; 0 keeps the kernel at its initialization.
    pub kernel_learning_rate: f64,
    pub seed: u64,
    pub tv_weight: f64,
    pub log_every: usize,
    pub kernel_size: usize,
    /// Radial falloff of the initial kernel logits, in pixels; `None` for plain noise.
    pub kernel_prior_lambda: Option<f64>,
    pub lr_decay: f64,
    pub decay_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            iterations: 3000,
            mse_only_iters: 1000,
            learning_rate: 0.05,
            kernel_learning_rate: 0.01,
            seed: 0,
            tv_weight: 1e-4,
            log_every: 100,
            kernel_size: 33,
            kernel_prior_lambda: Some(2.0),
            lr_decay: 0.99,
            decay_every: 100,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mse_only_iters > self.iterations {
            return Err(FlareError::Parameter(format!(
                "mse_only_iters {} exceeds iterations {}",
                self.mse_only_iters, self.iterations
            )));
        }
        if !(self.learning_rate > 0.0) || !(self.kernel_learning_rate >= 0.0) {
            return Err(FlareError::Parameter("learning rates must be positive".into()));
        }
        if self.decay_every == 0 || !(self.lr_decay > 0.0) {
            return Err(FlareError::Parameter("decay_every and lr_decay must be positive".into()));
        }
        Ok(())
    }
}

/// Identity up to [`KNEE`], then an exponential approach to 1.
#[inline]
pub fn clamp_smooth(x: f64) -> f64 {
    if x <= KNEE {
        x
    } else {
        1.0 - (1.0 - KNEE) * (-(x - KNEE) / (1.0 - KNEE)).exp()
    }
}

#[inline]
pub fn clamp_smooth_grad(x: f64) -> f64 {
    if x <= KNEE {
        1.0
    } else {
        (-(x - KNEE) / (1.0 - KNEE)).exp()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Smoothed isotropic total variation, averaged over forward-difference sites.
pub fn total_variation(img: &ImageBuffer) -> f64 {
    tv_eval(img, false).0
}

fn tv_eval(img: &ImageBuffer, want_grad: bool) -> (f64, Vec<f64>) {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let d = img.data();
    let mut grad = if want_grad { vec![0.0; d.len()] } else { Vec::new() };
    if w < 2 || h < 2 {
        return (0.0, grad);
    }
    let n = ((w - 1) * (h - 1) * ch) as f64;
    let mut total = 0.0;
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            for c in 0..ch {
                let i = (y * w + x) * ch + c;
                let dx = d[i + ch] - d[i];
                let dy = d[i + w * ch] - d[i];
                let m = (dx * dx + dy * dy + TV_EPS * TV_EPS).sqrt();
                total += m;
                if want_grad {
                    let s = 1.0 / (n * m);
                    grad[i + ch] += s * dx;
                    grad[i + w * ch] += s * dy;
                    grad[i] -= s * (dx + dy);
                }
            }
        }
    }
    (total / n, grad)
}

/// Data term: MSE, plus `1 − SSIM` once `iter` reaches `mse_only_iters`.
pub fn loss(y_hat: &ImageBuffer, y: &ImageBuffer, iter: usize, cfg: &SolverConfig) -> Result<f64> {
    let m = mse(y_hat, y)?;
    if iter < cfg.mse_only_iters {
        Ok(m)
    } else {
        Ok(m + (1.0 - ssim(y_hat, y)?))
    }
}

/// Everything fixed during one solve.
#[derive(Debug, Clone)]
pub struct Problem {
    pub r: ImageBuffer,
    pub y: ImageBuffer,
    pub m_s: Mask,
    pub light_map: ImageBuffer,
    source: SparseSource,
    bol: BolContext,
    glow: bool,
    /// Overrides the BOL scale; used to check gradients with `s` held fixed.
    pub frozen_scale: Option<f64>,
}

impl Problem {
    pub fn new(
        r: &ImageBuffer,
        y: &ImageBuffer,
        m_s: &Mask,
        light_map: &ImageBuffer,
        bol: &BolParams,
        kernel_size: usize,
        glow: bool,
    ) -> Result<Self> {
        r.ensure_same_dims(y, "solver target")?;
        r.ensure_same_dims(light_map, "light map")?;
        r.ensure_mask_dims(m_s, "solver source mask")?;
        Ok(Self {
            r: r.clone(),
            y: y.clone(),
            m_s: m_s.clone(),
            light_map: light_map.clone(),
            source: SparseSource::new(r, m_s, kernel_size)?,
            bol: BolContext::new(r, m_s, bol)?,
            glow,
            frozen_scale: None,
        })
    }

    /// Whether a glow layer is rendered at all.
    pub fn has_glow(&self) -> bool {
        self.glow && !self.source.is_empty()
    }
}

/// Free parameters and the optimization trace.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// Pre-sigmoid image parameters, same layout as the image data.
    pub d_pixels: Vec<f64>,
    pub kernel_logits: KernelParams,
    pub iter: usize,
    pub loss_history: Vec<f64>,
}

impl SolverState {
    /// `D` starts at `init` (clamped away from 0 and 1), the kernel from seeded logits.
    pub fn new(init: &ImageBuffer, cfg: &SolverConfig) -> Result<Self> {
        const EDGE: f64 = 1e-4;
        let d_pixels = init.data().iter().map(|&v| logit(v.clamp(EDGE, 1.0 - EDGE))).collect();
        let kernel_logits = KernelParams::seeded(cfg.kernel_size, cfg.seed, cfg.kernel_prior_lambda)?;
        Ok(Self { d_pixels, kernel_logits, iter: 0, loss_history: Vec::new() })
    }

    /// `D_i = sigmoid(d)`.
    pub fn image(&self, like: &ImageBuffer) -> ImageBuffer {
        let data = self.d_pixels.iter().map(|&v| sigmoid(v)).collect();
        ImageBuffer::new(like.width(), like.height(), like.channels(), data).expect("parameter layout matches the image")
    }
}

/// One forward evaluation.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub d: ImageBuffer,
    pub kernel: FlareKernel,
    pub glow: ImageBuffer,
    pub bol_factors: (f64, f64, f64),
    /// `D + L + light map` before squashing.
    pub pre: ImageBuffer,
    pub y_hat: ImageBuffer,
}

/// `ŷ = clamp~(D_i + BOL(B_l) + light map)`.
pub fn compose_estimate(state: &SolverState, p: &Problem) -> Result<Estimate> {
    let d = state.image(&p.r);
    let kernel = gen_kernel(&state.kernel_logits)?;
    let (glow, bol_factors) = if p.has_glow() {
        let b_l = p.source.render(&kernel);
        let factors = p.bol.factors(&b_l);
        let s = p.frozen_scale.unwrap_or(factors.0 * factors.1 * factors.2);
        (b_l.scale(s), factors)
    } else {
        (ImageBuffer::zeros(p.r.width(), p.r.height(), p.r.channels()), (1.0, 1.0, 1.0))
    };
    let pre = d.add(&glow)?.add(&p.light_map)?;
    let y_hat = pre.map(clamp_smooth);
    Ok(Estimate { d, kernel, glow, bol_factors, pre, y_hat })
}

/// Loss terms at one iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub mse: f64,
    /// `1 − SSIM`, counted only in the structural phase.
    pub structural: Option<f64>,
    pub tv: f64,
    pub total: f64,
}

/// Gradients for both parameter groups.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub d_pixels: Vec<f64>,
    pub kernel_logits: Vec<f64>,
}

fn check_finite(v: &[f64], stage: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(FlareError::NonFinite { stage })
    }
}

/// Objective value and, optionally, its exact gradient at `state`.
pub fn evaluate(
    state: &SolverState,
    p: &Problem,
    iter: usize,
    cfg: &SolverConfig,
    want_grad: bool,
) -> Result<(LossTerms, Estimate, Option<Gradients>)> {
    let est = compose_estimate(state, p)?;
    let n = est.y_hat.data().len() as f64;
    let m = mse(&est.y_hat, &p.y)?;
    let structural_phase = iter >= cfg.mse_only_iters;
    let (structural, ssim_grad) = if structural_phase {
        if want_grad {
            let (s, g) = ssim_with_grad(&est.y_hat, &p.y)?;
            (Some(1.0 - s), Some(g))
        } else {
            (Some(1.0 - ssim(&est.y_hat, &p.y)?), None)
        }
    } else {
        (None, None)
    };
    let (tv, tv_grad) = tv_eval(&est.d, want_grad);
    let total = m + structural.unwrap_or(0.0) + cfg.tv_weight * tv;
    let terms = LossTerms { mse: m, structural, tv, total };
    if !total.is_finite() {
        return Err(FlareError::NonFinite { stage: "loss" });
    }
    if !want_grad {
        return Ok((terms, est, None));
    }

    // dLoss/du through the smooth clamp
    let yh = est.y_hat.data();
    let y = p.y.data();
    let mut g_u: Vec<f64> = yh.iter().zip(y).map(|(a, b)| 2.0 * (a - b) / n).collect();
    if let Some(g) = &ssim_grad {
        for (gu, gs) in g_u.iter_mut().zip(g.data()) {
            *gu -= gs;
        }
    }
    for (gu, &u) in g_u.iter_mut().zip(est.pre.data()) {
        *gu *= clamp_smooth_grad(u);
    }
    check_finite(&g_u, "estimate gradient")?;

    let g_d: Vec<f64> = g_u
        .iter()
        .zip(&tv_grad)
        .zip(est.d.data())
        .map(|((gu, gt), &dv)| (gu + cfg.tv_weight * gt) * dv * (1.0 - dv))
        .collect();
    check_finite(&g_d, "image gradient")?;

    let g_k = if p.has_glow() {
        let s = p.frozen_scale.unwrap_or(est.bol_factors.0 * est.bol_factors.1 * est.bol_factors.2);
        let upstream = ImageBuffer::new(p.r.width(), p.r.height(), p.r.channels(), g_u.iter().map(|g| g * s).collect())
            .map_err(|_| FlareError::NonFinite { stage: "glow gradient" })?;
        let g_w = p.source.kernel_grad(&upstream, est.kernel.size());
        softmax_vjp(&est.kernel, &g_w)
    } else {
        vec![0.0; state.kernel_logits.logits.len()]
    };
    check_finite(&g_k, "kernel gradient")?;
    Ok((terms, est, Some(Gradients { d_pixels: g_d, kernel_logits: g_k })))
}

/// Gradient record at `state`.
pub fn gradients(state: &SolverState, p: &Problem, iter: usize, cfg: &SolverConfig) -> Result<Gradients> {
    Ok(evaluate(state, p, iter, cfg, true)?.2.expect("gradient requested"))
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Result of a full solve.
#[derive(Debug, Clone)]
pub struct Solution {
    pub state: SolverState,
    pub estimate: Estimate,
    pub final_terms: LossTerms,
}

/// Runs the optimizer from `state` for `cfg.iterations` steps.
///
/// `loss_history[i]` is the objective at the iterate before step `i`.
pub fn optimize(mut state: SolverState, p: &Problem, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    let mut adam_d = Adam::new(state.d_pixels.len());
    let mut adam_k = Adam::new(state.kernel_logits.logits.len());
    let learn_kernel = p.has_glow() && cfg.kernel_learning_rate > 0.0;
    for it in 0..cfg.iterations {
        let (terms, _, grads) = evaluate(&state, p, it, cfg, true)?;
        let grads = grads.expect("gradient requested");
        state.loss_history.push(terms.total);
        let decay = cfg.lr_decay.powi((it / cfg.decay_every) as i32);
        adam_d.step(&mut state.d_pixels, &grads.d_pixels, cfg.learning_rate * decay);
        if learn_kernel {
            adam_k.step(&mut state.kernel_logits.logits, &grads.kernel_logits, cfg.kernel_learning_rate * decay);
        }
        check_finite(&state.d_pixels, "image update")?;
        check_finite(&state.kernel_logits.logits, "kernel update")?;
        state.iter = it + 1;
        if cfg.log_every > 0 && it % cfg.log_every == 0 {
            log::debug!(
                "iter {it}: loss {:.6e} (mse {:.3e}, 1-ssim {:?}, tv {:.3e})",
                terms.total,
                terms.mse,
                terms.structural,
                terms.tv
            );
        }
    }
    let last = cfg.iterations.max(1) - 1;
    let (final_terms, estimate, _) = evaluate(&state, p, last, cfg, false)?;
    Ok(Solution { state, estimate, final_terms })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_problem(glow: bool) -> (Problem, SolverState, SolverConfig) {
        let r = ImageBuffer::from_fn(16, 16, 3, |x, y, c| {
            if (7..9).contains(&x) && (7..9).contains(&y) {
                1.0
            } else {
                0.1 + 0.05 * ((x * 3 + y + c) % 4) as f64
            }
        });
        let m = Mask::from_fn(16, 16, |x, y| (7..9).contains(&x) && (7..9).contains(&y));
        let y = r.map(|v| (v * 0.9).min(1.0));
        let lm = r.masked(&m).unwrap();
        let cfg = SolverConfig { kernel_size: 5, iterations: 4, mse_only_iters: 2, ..Default::default() };
        let p = Problem::new(&r, &y, &m, &lm, &BolParams::default(), 5, glow).unwrap();
        let s = SolverState::new(&y, &cfg).unwrap();
        (p, s, cfg)
    }

    #[test]
    fn knee_clamp() {
        assert_eq!(clamp_smooth(0.5), 0.5);
        assert_eq!(clamp_smooth(KNEE), KNEE);
        assert!(clamp_smooth(1.5) < 1.0 && clamp_smooth(1.5) > 0.999);
        assert!(clamp_smooth(50.0) <= 1.0);
        let h = 1e-6;
        for x in [0.2, 0.95, 1.3] {
            let fd = (clamp_smooth(x + h) - clamp_smooth(x - h)) / (2.0 * h);
            assert!((fd - clamp_smooth_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn loss_examples() {
        let cfg = SolverConfig::default();
        let a = ImageBuffer::filled(16, 16, 3, 0.3);
        let b = ImageBuffer::filled(16, 16, 3, 0.4);
        assert!((loss(&a, &b, 10, &cfg).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(loss(&a, &a, 2500, &cfg).unwrap(), 0.0);
        let c = ImageBuffer::from_fn(16, 16, 3, |x, y, _| ((x + y) % 3) as f64 / 3.0);
        assert!(loss(&c, &b, 1001, &cfg).unwrap() > loss(&c, &b, 999, &cfg).unwrap());
    }

    #[test]
    fn empty_mask_gives_squashed_d() {
        let (mut p, s, _) = small_problem(true);
        p = Problem::new(&p.r, &p.y, &Mask::empty(16, 16), &ImageBuffer::zeros(16, 16, 3), &BolParams::default(), 5, true).unwrap();
        let est = compose_estimate(&s, &p).unwrap();
        assert_eq!(est.y_hat, est.d.map(clamp_smooth));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for glow in [true, false] {
            let (mut p, mut s, cfg) = small_problem(glow);
            s.d_pixels.iter_mut().enumerate().for_each(|(i, v)| *v += 0.3 * ((i * 7) % 5) as f64 / 5.0);
            let est = compose_estimate(&s, &p).unwrap();
            let (a, b, c) = est.bol_factors;
            p.frozen_scale = Some(a * b * c);
            for iter in [0, 3] {
                let g = gradients(&s, &p, iter, &cfg).unwrap();
                let f = |s: &SolverState| evaluate(s, &p, iter, &cfg, false).unwrap().0.total;
                let h = 1e-5;
                for i in [0usize, 100, 333, 500, 767] {
                    let mut sp = s.clone();
                    sp.d_pixels[i] += h;
                    let mut sm = s.clone();
                    sm.d_pixels[i] -= h;
                    let fd = (f(&sp) - f(&sm)) / (2.0 * h);
                    assert!((fd - g.d_pixels[i]).abs() <= 1e-4 * fd.abs().max(g.d_pixels[i].abs()) + 1e-9);
                }
                if glow {
                    for i in [0usize, 6, 12, 18] {
                        let mut sp = s.clone();
                        sp.kernel_logits.logits[i] += h;
                        let mut sm = s.clone();
                        sm.kernel_logits.logits[i] -= h;
                        let fd = (f(&sp) - f(&sm)) / (2.0 * h);
                        assert!((fd - g.kernel_logits[i]).abs() <= 1e-4 * fd.abs().max(g.kernel_logits[i].abs()) + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_gradient_at_exact_fit() {
        let (mut p, s, cfg) = small_problem(false);
        p.light_map = ImageBuffer::zeros(16, 16, 3);
        let est = compose_estimate(&s, &p).unwrap();
        p.y = est.y_hat.clone();
        let cfg = SolverConfig { tv_weight: 0.0, ..cfg };
        for iter in [0, 3] {
            let g = gradients(&s, &p, iter, &cfg).unwrap();
            assert!(g.d_pixels.iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn optimizer_records_history_and_is_deterministic() {
        let (p, s, cfg) = small_problem(true);
        let a = optimize(s.clone(), &p, &cfg).unwrap();
        let b = optimize(s, &p, &cfg).unwrap();
        assert_eq!(a.state.loss_history.len(), 4);
        assert_eq!(a.state.iter, 4);
        assert_eq!(a.state.loss_history, b.state.loss_history);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig { mse_only_iters: 10, iterations: 5, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
    }
}
