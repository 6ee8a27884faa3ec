//! Glow prior: a softmax-parameterized kernel, the rendered glow candidate
//! `B_l = (R·M_s) ∗ k`, and the brightness operation layer that rescales it.

use serde::{Deserialize, Serialize};

use crate::conv::{convolve2d, pad_reflect, reflect_index, ConvMethod};
use crate::error::{FlareError, Result};
use crate::image::{ImageBuffer, Mask};
use crate::kernel::FlareKernel;
use crate::light::quantile;
use crate::rng::FlareRng;

const LOGIT_STREAM: u64 = 0x4b4c;

/// Unconstrained kernel logits, row-major `size × size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub size: usize,
    pub logits: Vec<f64>,
    pub seed: u64,
}

impl KernelParams {
    /// Logits drawn from `U[0,1)`. With `radial_lambda = Some(λ)` each logit
    /// is lowered by `ρ/λ`, `ρ` the distance to the kernel center in pixels,
    /// which starts the kernel as a compact, roughly isotropic blob.
    pub fn seeded(size: usize, seed: u64, radial_lambda: Option<f64>) -> Result<Self> {
        check_size(size)?;
        let mut rng = FlareRng::derived(seed, LOGIT_STREAM);
        let r = (size / 2) as f64;
        let mut logits = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                let z = rng.unit();
                let rho = (x as f64 - r).hypot(y as f64 - r);
                logits.push(match radial_lambda {
                    Some(l) if l > 0.0 => z - rho / l,
                    _ => z,
                });
            }
        }
        Ok(Self { size, logits, seed })
    }
}

fn check_size(size: usize) -> Result<()> {
    if size < 3 || size % 2 == 0 {
        return Err(FlareError::Parameter(format!("kernel size must be odd and at least 3, got {size}")));
    }
    Ok(())
}

/// Softmax over all logits, reshaped to a square kernel.
pub fn gen_kernel(p: &KernelParams) -> Result<FlareKernel> {
    check_size(p.size)?;
    if p.logits.len() != p.size * p.size {
        return Err(FlareError::Dimension(format!("{} logits for a {}x{} kernel", p.logits.len(), p.size, p.size)));
    }
    let m = p.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(FlareError::NonFinite { stage: "gen_kernel" });
    }
    let e: Vec<f64> = p.logits.iter().map(|&z| (z - m).exp()).collect();
    FlareKernel::normalized(p.size, e)
}

/// Pulls a gradient on kernel weights back to the logits:
/// `∂/∂z_i = w_i (g_i − Σ_j w_j g_j)`.
pub fn softmax_vjp(k: &FlareKernel, grad_w: &[f64]) -> Vec<f64> {
    let w = k.weights();
    let dot: f64 = w.iter().zip(grad_w).map(|(a, b)| a * b).sum();
    w.iter().zip(grad_w).map(|(wi, gi)| wi * (gi - dot)).collect()
}

/// Full Jacobian `J[i][j] = ∂w_i/∂z_j = w_i(δ_ij − w_j)`, row-major.
pub fn softmax_jacobian(k: &FlareKernel) -> Vec<f64> {
    let w = k.weights();
    let n = w.len();
    let mut j = vec![0.0; n * n];
    for i in 0..n {
        for c in 0..n {
            j[i * n + c] = w[i] * (if i == c { 1.0 } else { 0.0 } - w[c]);
        }
    }
    j
}

/// `B_l = (r · m_s) ∗ k`.
pub fn render_prior_glow(r: &ImageBuffer, m_s: &Mask, k: &FlareKernel) -> Result<ImageBuffer> {
    if k.size() < 3 {
        return convolve2d(&r.masked(m_s)?, k, ConvMethod::Direct);
    }
    Ok(SparseSource::new(r, m_s, k.size())?.render(k))
}

/// The masked source stored as a sparse list over the reflect-padded frame.
///
/// Rendering and the kernel adjoint then cost `O(#source pixels · kernel area)`
/// instead of a full-frame convolution, and agree with [`convolve2d`].
#[derive(Debug, Clone)]
pub struct SparseSource {
    width: usize,
    height: usize,
    channels: usize,
    radius: usize,
    /// `(padded x, padded y, first sample index into values)`
    points: Vec<(usize, usize, usize)>,
    values: Vec<f64>,
}

impl SparseSource {
    pub fn new(r: &ImageBuffer, m_s: &Mask, kernel_size: usize) -> Result<Self> {
        check_size(kernel_size)?;
        let src = r.masked(m_s)?;
        let (w, h, ch) = (src.width(), src.height(), src.channels());
        if kernel_size > w.min(h) {
            return Err(FlareError::Dimension(format!("kernel {kernel_size} larger than image {w}x{h}")));
        }
        let rad = kernel_size / 2;
        let (pw, ph) = (w + 2 * rad, h + 2 * rad);
        let mut points = Vec::new();
        let mut values = Vec::new();
        for py in 0..ph {
            let sy = reflect_index(py as isize - rad as isize, h);
            for px in 0..pw {
                let sx = reflect_index(px as isize - rad as isize, w);
                let v: Vec<f64> = (0..ch).map(|c| src.get(sx, sy, c)).collect();
                if v.iter().any(|&s| s != 0.0) {
                    points.push((px, py, values.len()));
                    values.extend(v);
                }
            }
        }
        Ok(Self { width: w, height: h, channels: ch, radius: rad, points, values })
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Kernel offsets `lo..hi` along one axis that land inside `0..n`
    /// for a padded coordinate `p` (output `p + k − 2r`).
    #[inline]
    fn span(p: usize, rad: usize, size: usize, n: usize) -> (usize, usize) {
        let shift = p as isize - 2 * rad as isize;
        let lo = (-shift).clamp(0, size as isize) as usize;
        let hi = (n as isize - shift).clamp(0, size as isize) as usize;
        (lo, hi.max(lo))
    }

    /// `(r · m_s) ∗ k` with reflect padding.
    pub fn render(&self, k: &FlareKernel) -> ImageBuffer {
        assert_eq!(k.radius(), self.radius, "kernel size changed");
        let (w, h, ch, rad) = (self.width, self.height, self.channels, self.radius);
        let s = k.size();
        let kw = k.weights();
        let mut out = vec![0.0; w * h * ch];
        for &(px, py, vi) in &self.points {
            let v = &self.values[vi..vi + ch];
            let (y0, y1) = Self::span(py, rad, s, h);
            let (x0, x1) = Self::span(px, rad, s, w);
            for ky in y0..y1 {
                let y = py + ky - 2 * rad;
                let row = &kw[ky * s + x0..ky * s + x1];
                let base = (y * w + px + x0 - 2 * rad) * ch;
                let dst = &mut out[base..base + row.len() * ch];
                if let &[v0, v1, v2] = v {
                    for (o, &wt) in dst.chunks_exact_mut(3).zip(row) {
                        o[0] += wt * v0;
                        o[1] += wt * v1;
                        o[2] += wt * v2;
                    }
                } else {
                    for (o, &wt) in dst.chunks_exact_mut(ch).zip(row) {
                        for c in 0..ch {
                            o[c] += wt * v[c];
                        }
                    }
                }
            }
        }
        ImageBuffer::new(w, h, ch, out).expect("dims preserved")
    }

    /// Adjoint of [`render`] with respect to the kernel weights.
    pub fn kernel_grad(&self, upstream: &ImageBuffer, size: usize) -> Vec<f64> {
        let (w, h, ch, rad) = (self.width, self.height, self.channels, self.radius);
        let g = upstream.data();
        let mut out = vec![0.0; size * size];
        for &(px, py, vi) in &self.points {
            let v = &self.values[vi..vi + ch];
            let (y0, y1) = Self::span(py, rad, size, h);
            let (x0, x1) = Self::span(px, rad, size, w);
            for ky in y0..y1 {
                let y = py + ky - 2 * rad;
                let base = (y * w + px + x0 - 2 * rad) * ch;
                let src = &g[base..base + (x1 - x0) * ch];
                let dst = &mut out[ky * size + x0..ky * size + x1];
                if let &[v0, v1, v2] = v {
                    for (o, gs) in dst.iter_mut().zip(src.chunks_exact(3)) {
                        *o += gs[0] * v0 + gs[1] * v1 + gs[2] * v2;
                    }
                } else {
                    for (o, gs) in dst.iter_mut().zip(src.chunks_exact(ch)) {
                        let mut acc = 0.0;
                        for c in 0..ch {
                            acc += gs[c] * v[c];
                        }
                        *o += acc;
                    }
                }
            }
        }
        out
    }
}

/// Where the BOL's global brightness statistics are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StatsRegion {
    /// The whole frame.
    Frame,
    /// The light-source support `M_s`.
    #[default]
    Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BolParams {
    pub mu: f64,
    pub eta: f64,
    pub nu: f64,
    pub percentile: f64,
    /// Side of the sliding window for the local-brightness term.
    pub window: usize,
    pub stats_region: StatsRegion,
}

impl Default for BolParams {
    fn default() -> Self {
        Self { mu: 1.2, eta: 0.2, nu: 0.05, percentile: 0.95, window: 3, stats_region: StatsRegion::Source }
    }
}

impl BolParams {
    fn region<'a>(&self, m_s: &'a Mask) -> Option<&'a Mask> {
        match self.stats_region {
            StatsRegion::Frame => None,
            StatsRegion::Source if m_s.is_empty() => None,
            StatsRegion::Source => Some(m_s),
        }
    }
}

pub const BRI_MIN_FLOOR: f64 = 1e-4;
pub const BETA_MAX: f64 = 10.0;
/// Smallest value `Ad_β` can take; keeps the factor strictly positive.
pub const BETA_MIN: f64 = 1e-12;

/// Mean luminance over `region` (whole frame when `None` or empty).
pub fn global_brightness(img: &ImageBuffer, region: Option<&Mask>) -> f64 {
    let lum = img.luminance();
    match region {
        Some(m) if !m.is_empty() => {
            let (mut s, mut n) = (0.0, 0usize);
            for (v, &wt) in lum.data().iter().zip(m.data()) {
                if wt > 0.5 {
                    s += v;
                    n += 1;
                }
            }
            s / n as f64
        }
        _ => lum.mean(),
    }
}

/// `Ad_σ = (μ − η) · Bri_perc + ν`, with `Bri_perc` the luminance quantile over `M_s`.
pub fn brightness_sigma(r: &ImageBuffer, m_s: &Mask, p: &BolParams) -> Result<f64> {
    r.ensure_mask_dims(m_s, "brightness_sigma")?;
    if m_s.is_empty() {
        return Ok(p.nu);
    }
    let lum = r.luminance();
    let inside: Vec<f64> = lum.data().iter().zip(m_s.data()).filter(|(_, &m)| m > 0.5).map(|(&v, _)| v).collect();
    Ok((p.mu - p.eta) * quantile(&inside, p.percentile) + p.nu)
}

/// `Ad_φ`: scales a dimmer `B_l1` up to the brightness of `R`, otherwise 1.
pub fn brightness_phi(b_l1: &ImageBuffer, r: &ImageBuffer, region: Option<&Mask>) -> Result<f64> {
    b_l1.ensure_same_dims(r, "brightness_phi")?;
    let g1 = global_brightness(b_l1, region);
    let gr = global_brightness(r, region);
    Ok(if g1 > 0.0 && g1 < gr { gr / g1 } else { 1.0 })
}

/// `Ad_β = (Bri_max − Bri_loc) / Bri_min`, clamped to `(0, 10]`.
pub fn brightness_beta(b_l2: &ImageBuffer, r: &ImageBuffer, m_s: &Mask, window: usize, region: Option<&Mask>) -> Result<f64> {
    b_l2.ensure_same_dims(r, "brightness_beta")?;
    r.ensure_mask_dims(m_s, "brightness_beta")?;
    let lum = r.luminance();
    let bri_max = lum.max();
    let bri_loc = local_brightness(&lum, m_s, window);
    let bri_min = global_brightness(b_l2, region).min(global_brightness(r, region)).max(BRI_MIN_FLOOR);
    Ok(((bri_max - bri_loc) / bri_min).clamp(BETA_MIN, BETA_MAX))
}

/// `Bri_loc`: brightest `window`-mean of the luminance outside `M_s`; 0 when `M_s` covers the frame.
fn local_brightness(lum: &ImageBuffer, m_s: &Mask, window: usize) -> f64 {
    if m_s.area() == m_s.width() * m_s.height() {
        return 0.0;
    }
    let outside = ImageBuffer::from_fn(lum.width(), lum.height(), 1, |x, y, _| lum.get(x, y, 0) * (1.0 - m_s.get(x, y)));
    box_mean(&outside, window.max(1)).max()
}

/// Mean over a `win × win` window with reflect padding (odd windows are centered).
fn box_mean(img: &ImageBuffer, win: usize) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    let r = win / 2;
    let (pad, pw, _) = pad_reflect(img, r);
    let inv = 1.0 / (win * win) as f64;
    ImageBuffer::from_fn(w, h, 1, |x, y, _| {
        let mut s = 0.0;
        for dy in 0..win {
            for dx in 0..win {
                s += pad[(y + dy) * pw + x + dx];
            }
        }
        s * inv
    })
}

/// The three BOL factors and the rescaled glow.
#[derive(Debug, Clone)]
pub struct BolOutput {
    pub layer: ImageBuffer,
    pub sigma: f64,
    pub phi: f64,
    pub beta: f64,
}

impl BolOutput {
    pub fn scale(&self) -> f64 {
        self.sigma * self.phi * self.beta
    }
}

/// The parts of the BOL that depend only on `R` and `M_s`, computed once per image.
#[derive(Debug, Clone)]
pub struct BolContext {
    sigma: f64,
    bri_max: f64,
    bri_loc: f64,
    glob_r: f64,
    region: Option<Mask>,
}

impl BolContext {
    pub fn new(r: &ImageBuffer, m_s: &Mask, p: &BolParams) -> Result<Self> {
        r.ensure_mask_dims(m_s, "bol")?;
        let region = p.region(m_s).cloned();
        let lum = r.luminance();
        Ok(Self {
            sigma: brightness_sigma(r, m_s, p)?,
            bri_max: lum.max(),
            bri_loc: local_brightness(&lum, m_s, p.window),
            glob_r: global_brightness(&lum, region.as_ref()),
            region,
        })
    }

    /// `(Ad_σ, Ad_φ, Ad_β)` for a candidate glow `b_l`.
    pub fn factors(&self, b_l: &ImageBuffer) -> (f64, f64, f64) {
        let g1 = global_brightness(b_l, self.region.as_ref()) * self.sigma;
        let phi = if g1 > 0.0 && g1 < self.glob_r { self.glob_r / g1 } else { 1.0 };
        let bri_min = (g1 * phi).min(self.glob_r).max(BRI_MIN_FLOOR);
        let beta = ((self.bri_max - self.bri_loc) / bri_min).clamp(BETA_MIN, BETA_MAX);
        (self.sigma, phi, beta)
    }

    pub fn apply(&self, b_l: &ImageBuffer) -> BolOutput {
        let (sigma, phi, beta) = self.factors(b_l);
        BolOutput { layer: b_l.scale(sigma).scale(phi).scale(beta), sigma, phi, beta }
    }
}

/// `L = B_l · Ad_σ · Ad_φ · Ad_β`, each factor measured on the previous stage.
pub fn apply_bol(b_l: &ImageBuffer, r: &ImageBuffer, m_s: &Mask, p: &BolParams) -> Result<BolOutput> {
    b_l.ensure_same_dims(r, "apply_bol")?;
    Ok(BolContext::new(r, m_s, p)?.apply(b_l))
}
