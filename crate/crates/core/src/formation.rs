//! Forward flare model: scattered glow, reflective ghost and their composition.

use serde::{Deserialize, Serialize};

use crate::conv::{convolve2d, gaussian_blur, ConvMethod};
use crate::error::{FlareError, Result};
use crate::image::{ImageBuffer, Mask};
use crate::kernel::FlareKernel;
use crate::rng::FlareRng;

/// Lens and flare parameters for synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpticalConfig {
    /// Optical center `(cx, cy)`; `None` means the frame center.
    pub center: Option<(f64, f64)>,
    pub n1: f64,
    pub n2: f64,
    pub ghost_attenuation: f64,
    pub ghost_blur_sigma: f64,
    pub scatter_alpha: f64,
    pub scatter_orders: usize,
    pub order_decay: f64,
    pub peak_sigma: f64,
    pub halo_sigma: f64,
    pub kernel_size: usize,
    pub gamma_range: (f64, f64),
    /// Luminance at or above which a clean pixel counts as a light source.
    pub source_threshold: f64,
    /// Saturated disk `(x, y, radius)` painted into the clean image when it has no source.
    pub synthetic_source: Option<(f64, f64, f64)>,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        Self {
            center: None,
            n1: 1.0,
            n2: 1.5,
            ghost_attenuation: 0.4,
            ghost_blur_sigma: 1.0,
            scatter_alpha: 1.0,
            scatter_orders: 3,
            order_decay: 0.95,
            peak_sigma: 2.0,
            halo_sigma: 14.0,
            kernel_size: 33,
            gamma_range: (1.4, 1.8),
            source_threshold: 0.85,
            synthetic_source: None,
        }
    }
}

impl OpticalConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FlareError::Parameter(m));
        if !(self.n1 > 0.0 && self.n2 > 0.0) {
            return bad(format!("refractive indices must be positive, got {} / {}", self.n1, self.n2));
        }
        if !(0.0..=1.0).contains(&self.scatter_alpha) {
            return bad(format!("scatter_alpha {} outside [0,1]", self.scatter_alpha));
        }
        if self.scatter_orders == 0 {
            return bad("scatter_orders must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.order_decay) {
            return bad(format!("order_decay {} outside [0,1)", self.order_decay));
        }
        if !(0.0..=1.0).contains(&self.ghost_attenuation) || self.ghost_blur_sigma < 0.0 {
            return bad("ghost attenuation must lie in [0,1] and blur must be nonnegative".into());
        }
        if self.kernel_size % 2 == 0 {
            return bad(format!("kernel_size must be odd, got {}", self.kernel_size));
        }
        if self.gamma_range.0 > self.gamma_range.1 || self.gamma_range.0 <= 0.0 {
            return bad(format!("bad gamma range {:?}", self.gamma_range));
        }
        Ok(())
    }

    /// Optical center for a `width × height` frame.
    pub fn center_for(&self, width: usize, height: usize) -> Result<(f64, f64)> {
        let c = self
            .center
            .unwrap_or(((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0));
        let inside = (0.0..=(width - 1) as f64).contains(&c.0) && (0.0..=(height - 1) as f64).contains(&c.1);
        if inside {
            Ok(c)
        } else {
            Err(FlareError::Parameter(format!("optical center {c:?} outside {width}x{height} frame")))
        }
    }

    /// The scatter kernel built from this config's Gaussian peak and halo.
    pub fn scatter_kernel(&self) -> Result<FlareKernel> {
        let peak = FlareKernel::gaussian(self.kernel_size, self.peak_sigma);
        let halo = FlareKernel::gaussian(self.kernel_size, self.halo_sigma);
        compose_scatter_kernel(self, &peak, &halo)
    }
}

/// Plain 3-vector.
pub type Vec3 = [f64; 3];

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// A unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    dir: Vec3,
}

impl Ray {
    /// Normalizes `v`; fails for zero or non-finite vectors.
    pub fn new(v: Vec3) -> Result<Ray> {
        let n = dot(v, v).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(FlareError::Parameter(format!("cannot normalize {v:?}")));
        }
        Ok(Ray { dir: [v[0] / n, v[1] / n, v[2] / n] })
    }

    #[inline]
    pub fn dir(&self) -> Vec3 {
        self.dir
    }

    pub fn dot(&self, other: &Ray) -> f64 {
        dot(self.dir, other.dir)
    }

    pub fn neg(&self) -> Ray {
        Ray { dir: [-self.dir[0], -self.dir[1], -self.dir[2]] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Refraction {
    Refracted(Ray),
    TotalInternalReflection,
}

/// Refracts `l` at a surface with normal `n` (pointing toward the incident
/// side, so `l·n < 0`) going from index `n1` into `n2`.
pub fn refract(l: &Ray, n: &Ray, n1: f64, n2: f64) -> Result<Refraction> {
    let ln = l.dot(n);
    if ln >= 0.0 {
        return Err(FlareError::Contract(format!("refract needs l·n < 0, got {ln}")));
    }
    if !(n1 > 0.0 && n2 > 0.0) {
        return Err(FlareError::Parameter("refractive indices must be positive".into()));
    }
    let eta = n1 / n2;
    let k = 1.0 - eta * eta * (1.0 - ln * ln);
    if k < 0.0 {
        return Ok(Refraction::TotalInternalReflection);
    }
    let a = k.sqrt() + eta * ln;
    let (l, n) = (l.dir, n.dir);
    let r = [eta * l[0] - a * n[0], eta * l[1] - a * n[1], eta * l[2] - a * n[2]];
    // already unit up to rounding; renormalize so the norm holds to 1e-15
    Ok(Refraction::Refracted(Ray::new(r)?))
}

/// Mirror reflection `l − 2(l·n)n`.
pub fn reflect(l: &Ray, n: &Ray) -> Ray {
    let d = 2.0 * l.dot(n);
    let (l, n) = (l.dir, n.dir);
    Ray { dir: [l[0] - d * n[0], l[1] - d * n[1], l[2] - d * n[2]] }
}

/// `(1−α)δ + α(peak + halo)/2`, renormalized. Smaller kernels are zero-padded
/// to the largest of the two.
pub fn compose_scatter_kernel(cfg: &OpticalConfig, peak: &FlareKernel, halo: &FlareKernel) -> Result<FlareKernel> {
    let alpha = cfg.scatter_alpha;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(FlareError::Parameter(format!("scatter_alpha {alpha} outside [0,1]")));
    }
    let size = peak.size().max(halo.size());
    let (p, h) = (peak.padded(size), halo.padded(size));
    let mut w: Vec<f64> = p
        .weights()
        .iter()
        .zip(h.weights())
        .map(|(a, b)| alpha * (a + b) / 2.0)
        .collect();
    w[size * size / 2] += 1.0 - alpha;
    FlareKernel::normalized(size, w)
}

/// Multiply-scattered glow `Σ_i decay^i · (clean·M_s) ∗ k^{∗i}`, un-clamped.
///
/// The i-fold kernel is applied as i successive convolutions.
pub fn render_glow(clean: &ImageBuffer, m_s: &Mask, k: &FlareKernel, cfg: &OpticalConfig) -> Result<ImageBuffer> {
    if cfg.scatter_orders == 0 {
        return Err(FlareError::Parameter("scatter_orders must be at least 1".into()));
    }
    let src = clean.masked(m_s)?;
    let mut glow = ImageBuffer::zeros(clean.width(), clean.height(), clean.channels());
    if m_s.is_empty() || cfg.order_decay == 0.0 {
        return Ok(glow);
    }
    // FFT round-off, relative to the brightest source sample
    let floor = 1e-12 * src.max();
    let mut cur = src;
    let mut w = 1.0;
    for _ in 0..cfg.scatter_orders {
        cur = convolve2d(&cur, k, ConvMethod::Frequency)?.map(|v| if v.abs() <= floor { 0.0 } else { v });
        w *= cfg.order_decay;
        glow = glow.zip_with(&cur, |g, c| g + w * c)?;
    }
    Ok(glow)
}

/// Maps pixel `(x, y)` to its point-symmetric partner about `c`, if in frame.
#[inline]
pub fn mirror_pixel(x: usize, y: usize, c: (f64, f64), w: usize, h: usize) -> Option<(usize, usize)> {
    let mx = (2.0 * c.0 - x as f64).round();
    let my = (2.0 * c.1 - y as f64).round();
    (mx >= 0.0 && my >= 0.0 && mx < w as f64 && my < h as f64).then_some((mx as usize, my as usize))
}

/// Point reflection of an image about `c`; pixels whose partner leaves the frame become 0.
pub fn point_reflect(img: &ImageBuffer, c: (f64, f64)) -> ImageBuffer {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut out = ImageBuffer::zeros(w, h, ch);
    for y in 0..h {
        for x in 0..w {
            if let Some((sx, sy)) = mirror_pixel(x, y, c, w, h) {
                for k in 0..ch {
                    out.set(x, y, k, img.get(sx, sy, k));
                }
            }
        }
    }
    out
}

/// Point reflection of a mask about `c`.
pub fn point_reflect_mask(m: &Mask, c: (f64, f64)) -> Mask {
    let (w, h) = (m.width(), m.height());
    let mut out = Mask::empty(w, h);
    for y in 0..h {
        for x in 0..w {
            if let Some((sx, sy)) = mirror_pixel(x, y, c, w, h) {
                out.set(x, y, m.get(sx, sy));
            }
        }
    }
    out
}

/// Ghost layer, its support mask, and whether the source mask was empty.
#[derive(Debug, Clone)]
pub struct Ghost {
    pub layer: ImageBuffer,
    pub mask: Mask,
    pub empty_source: bool,
}

/// Reflective ghost: the masked source, point-reflected about the optical
/// center, blurred and attenuated.
pub fn render_ghost(clean: &ImageBuffer, m_s: &Mask, cfg: &OpticalConfig) -> Result<Ghost> {
    clean.ensure_mask_dims(m_s, "render_ghost")?;
    let (w, h) = (clean.width(), clean.height());
    if m_s.is_empty() {
        log::warn!("render_ghost: empty source mask, ghost layer is zero");
        return Ok(Ghost { layer: ImageBuffer::zeros(w, h, clean.channels()), mask: Mask::empty(w, h), empty_source: true });
    }
    let c = cfg.center_for(w, h)?;
    let mirrored = point_reflect(&clean.masked(m_s)?, c);
    let layer = gaussian_blur(&mirrored, cfg.ghost_blur_sigma).scale(cfg.ghost_attenuation);
    let mask = point_reflect_mask(m_s, c).dilate((2.0 * cfg.ghost_blur_sigma).ceil() as usize);
    Ok(Ghost { layer, mask, empty_source: false })
}

/// Decomposition of a flared frame into its clean image and additive flare layers.
#[derive(Debug, Clone)]
pub struct FlareScene {
    pub ideal: ImageBuffer,
    pub glow: ImageBuffer,
    pub ghost: ImageBuffer,
    pub source_mask: Mask,
    pub ghost_mask: Mask,
}

/// `clamp(ideal + glow + ghost, 0, 1)`.
pub fn compose_joint(scene: &FlareScene) -> Result<ImageBuffer> {
    let sum = scene.ideal.add(&scene.glow)?.add(&scene.ghost)?;
    Ok(sum.clamp01())
}

/// A synthesized training pair and everything needed to reproduce it.
#[derive(Debug, Clone)]
pub struct SynthPair {
    pub flared: ImageBuffer,
    pub clean: ImageBuffer,
    pub scene: FlareScene,
    pub gamma: f64,
}

/// Stream id for γ draws, kept apart from other uses of the same seed.
const GAMMA_STREAM: u64 = 0x6761;

/// Adds glow and ghost to `clean`, tone-shaping both layers with `x^γ` for a
/// γ drawn uniformly from `cfg.gamma_range` with `seed`.
pub fn synth_pair(clean: &ImageBuffer, cfg: &OpticalConfig, seed: u64) -> Result<SynthPair> {
    cfg.validate()?;
    let mut clean = clean.clone();
    let mut m_s = Mask::from_luminance(&clean, |v| v >= cfg.source_threshold);
    if m_s.is_empty() {
        let Some((sx, sy, radius)) = cfg.synthetic_source else {
            return Err(FlareError::SourceMissing);
        };
        for y in 0..clean.height() {
            for x in 0..clean.width() {
                let (dx, dy) = (x as f64 - sx, y as f64 - sy);
                if dx * dx + dy * dy <= radius * radius {
                    for c in 0..clean.channels() {
                        clean.set(x, y, c, 1.0);
                    }
                    m_s.set(x, y, 1.0);
                }
            }
        }
        if m_s.is_empty() {
            return Err(FlareError::SourceMissing);
        }
    }

    let mut rng = FlareRng::derived(seed, GAMMA_STREAM);
    let gamma = rng.uniform(cfg.gamma_range.0, cfg.gamma_range.1);

    let k = cfg.scatter_kernel()?;
    let glow = render_glow(&clean, &m_s, &k, cfg)?.map(|v| v.max(0.0).powf(gamma));
    let ghost = render_ghost(&clean, &m_s, cfg)?;
    let scene = FlareScene {
        ideal: clean.clone(),
        glow,
        ghost: ghost.layer.map(|v| v.max(0.0).powf(gamma)),
        source_mask: m_s,
        ghost_mask: ghost.mask,
    };
    let flared = compose_joint(&scene)?;
    Ok(SynthPair { flared, clean, scene, gamma })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ray(v: Vec3) -> Ray {
        Ray::new(v).unwrap()
    }

    #[test]
    fn refraction_examples() {
        let n = ray([0.0, 0.0, 1.0]);
        let l = ray([0.3, -0.2, -0.9]);
        match refract(&l, &n, 1.33, 1.33).unwrap() {
            Refraction::Refracted(r) => {
                for i in 0..3 {
                    assert!((r.dir()[i] - l.dir()[i]).abs() < 1e-12);
                }
            }
            _ => panic!("unexpected TIR"),
        }
        assert_eq!(refract(&n.neg(), &n, 1.0, 1.5).unwrap(), Refraction::Refracted(n.neg()));

        let l45 = ray([1.0, 0.0, -1.0]);
        let Refraction::Refracted(r) = refract(&l45, &n, 1.0, 1.5).unwrap() else { panic!() };
        let theta = r.dir()[0].atan2(-r.dir()[2]).to_degrees();
        let want = ((45f64).to_radians().sin() / 1.5).asin().to_degrees();
        assert!((theta - want).abs() < 1e-9);
        assert!((want - 28.1255).abs() < 1e-4);

        assert_eq!(refract(&l45, &n, 1.5, 1.0).unwrap(), Refraction::TotalInternalReflection);
        assert!(refract(&n, &n, 1.0, 1.5).is_err());
    }

    #[test]
    fn reflection_examples() {
        let n = ray([0.0, 0.0, 1.0]);
        assert_eq!(reflect(&n.neg(), &n), n);
        let along = ray([1.0, 0.0, 0.0]);
        assert_eq!(reflect(&along, &n), along);
        let r = reflect(&ray([0.6, 0.0, -0.8]), &n);
        for (a, b) in r.dir().iter().zip([0.6, 0.0, 0.8]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn scatter_kernel_examples() {
        let mut cfg = OpticalConfig { scatter_alpha: 0.0, ..Default::default() };
        let u = FlareKernel::uniform(3);
        let d = FlareKernel::delta(3);
        assert_eq!(compose_scatter_kernel(&cfg, &u, &u).unwrap(), d);
        cfg.scatter_alpha = 1.0;
        let k = compose_scatter_kernel(&cfg, &u, &u).unwrap();
        assert!(k.weights().iter().all(|w| (w - 1.0 / 9.0).abs() < 1e-15));
        cfg.scatter_alpha = 0.5;
        let k = compose_scatter_kernel(&cfg, &d, &u).unwrap();
        assert!((k.at(0, 0) - (0.75 + 0.25 / 9.0)).abs() < 1e-15);
        assert!((k.at(1, -1) - 0.25 / 9.0).abs() < 1e-15);
        cfg.scatter_alpha = 1.5;
        assert!(compose_scatter_kernel(&cfg, &d, &u).is_err());
    }

    #[test]
    fn glow_impulse_response() {
        let cfg = OpticalConfig { scatter_orders: 1, order_decay: 0.7, ..Default::default() };
        let mut clean = ImageBuffer::zeros(41, 41, 1);
        clean.set(20, 20, 0, 1.0);
        let ms = Mask::from_fn(41, 41, |x, y| x == 20 && y == 20);
        let k = FlareKernel::gaussian(9, 1.5);
        let g = render_glow(&clean, &ms, &k, &cfg).unwrap();
        for dy in -4..=4isize {
            for dx in -4..=4isize {
                let v = g.get((20 + dx) as usize, (20 + dy) as usize, 0);
                assert!((v - 0.7 * k.at(dx, dy)).abs() < 1e-12);
            }
        }
        let z = render_glow(&clean, &Mask::empty(41, 41), &k, &cfg).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        let none = OpticalConfig { order_decay: 0.0, ..cfg.clone() };
        assert!(render_glow(&clean, &ms, &k, &none).unwrap().data().iter().all(|&v| v == 0.0));
        let bad = OpticalConfig { scatter_orders: 0, ..cfg };
        assert!(render_glow(&clean, &ms, &k, &bad).is_err());
    }

    #[test]
    fn ghost_examples() {
        let cfg = OpticalConfig { center: Some((64.0, 64.0)), ghost_attenuation: 0.5, ghost_blur_sigma: 0.0, ..Default::default() };
        let mut clean = ImageBuffer::zeros(129, 129, 3);
        for c in 0..3 {
            clean.set(10, 10, c, 1.0);
        }
        let ms = Mask::from_fn(129, 129, |x, y| x == 10 && y == 10);
        let g = render_ghost(&clean, &ms, &cfg).unwrap();
        assert_eq!(g.layer.get(118, 118, 1), 0.5);
        assert!((g.layer.data().iter().sum::<f64>() - 1.5).abs() < 1e-15);
        assert_eq!(g.mask.centroid(), Some((118.0, 118.0)));

        let blob = Mask::from_fn(129, 129, |x, y| (8..=12).contains(&x) && (8..=12).contains(&y));
        let blurred = OpticalConfig { ghost_blur_sigma: 1.5, ..cfg.clone() };
        let lamp = blob.to_image().broadcast(3);
        let g = render_ghost(&lamp, &blob, &blurred).unwrap();
        let (cx, cy) = Mask::from_luminance(&g.layer, |v| v > 0.0).centroid().unwrap();
        assert!((cx - 118.0).abs() < 1.0 && (cy - 118.0).abs() < 1.0);

        let off = OpticalConfig { ghost_attenuation: 0.0, ..cfg.clone() };
        assert!(render_ghost(&clean, &ms, &off).unwrap().layer.data().iter().all(|&v| v == 0.0));
        let empty = render_ghost(&clean, &Mask::empty(129, 129), &cfg).unwrap();
        assert!(empty.empty_source);
    }

    #[test]
    fn compose_examples() {
        let ideal = ImageBuffer::filled(4, 4, 1, 0.3);
        let mut glow = ImageBuffer::zeros(4, 4, 1);
        let mut ghost = ImageBuffer::zeros(4, 4, 1);
        let scene = |glow: &ImageBuffer, ghost: &ImageBuffer| FlareScene {
            ideal: ideal.clone(),
            glow: glow.clone(),
            ghost: ghost.clone(),
            source_mask: Mask::empty(4, 4),
            ghost_mask: Mask::empty(4, 4),
        };
        assert_eq!(compose_joint(&scene(&glow, &ghost)).unwrap(), ideal);
        glow.set(0, 0, 0, 0.9);
        ghost.set(3, 3, 0, 0.2);
        let out = compose_joint(&scene(&glow, &ghost)).unwrap();
        assert_eq!(out.get(0, 0, 0), 1.0);
        for y in 0..4 {
            for x in 0..4 {
                let changed = out.get(x, y, 0) != 0.3;
                assert_eq!(changed, (x, y) == (0, 0) || (x, y) == (3, 3));
            }
        }
    }

    #[test]
    fn synth_requires_a_source() {
        let dark = ImageBuffer::filled(48, 48, 3, 0.1);
        let cfg = OpticalConfig { kernel_size: 15, ..Default::default() };
        assert!(matches!(synth_pair(&dark, &cfg, 0), Err(FlareError::SourceMissing)));
        let with = OpticalConfig { synthetic_source: Some((10.0, 12.0, 2.0)), ..cfg };
        let pair = synth_pair(&dark, &with, 0).unwrap();
        assert_eq!(pair.clean.get(10, 12, 0), 1.0);
        assert!((1.4..=1.8).contains(&pair.gamma));
    }
}
