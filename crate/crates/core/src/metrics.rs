//! Full-reference quality metrics: MSE, PSNR and SSIM.
//!
//! SSIM follows the usual 11×11 Gaussian window (σ = 1.5) with
//! `C1 = (0.01)²`, `C2 = (0.03)²` for a unit dynamic range, averaged over all
//! window positions that fit inside the frame. Colour inputs are compared on
//! Rec.709 luminance.

use crate::error::{FlareError, Result};
use crate::image::{ImageBuffer, REC709};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.ensure_same_dims(b, "mse")?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data().len() as f64)
}

/// Peak signal-to-noise ratio in dB for a unit peak; identical inputs give `+∞`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / m).log10())
    }
}

pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    Ok(ssim_eval(a, b, false)?.0)
}

/// SSIM together with its gradient with respect to every sample of `a`.
pub fn ssim_with_grad(a: &ImageBuffer, b: &ImageBuffer) -> Result<(f64, ImageBuffer)> {
    let (s, g) = ssim_eval(a, b, true)?;
    Ok((s, g.expect("gradient requested")))
}

fn window_taps() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut t = [0.0; SSIM_WINDOW];
    for (i, v) in t.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = t.iter().sum();
    t.iter_mut().for_each(|v| *v /= s);
    t
}

/// Gaussian filter evaluated only where the window fits ("valid" positions).
struct ValidFilter {
    taps: [f64; SSIM_WINDOW],
    w: usize,
    h: usize,
    vw: usize,
    vh: usize,
}

impl ValidFilter {
    fn new(w: usize, h: usize) -> Self {
        Self { taps: window_taps(), w, h, vw: w + 1 - SSIM_WINDOW, vh: h + 1 - SSIM_WINDOW }
    }

    fn apply(&self, src: &[f64]) -> Vec<f64> {
        let (w, vw, vh) = (self.w, self.vw, self.vh);
        let mut rows = vec![0.0; vw * self.h];
        for y in 0..self.h {
            let line = &src[y * w..(y + 1) * w];
            for x in 0..vw {
                rows[y * vw + x] = self.taps.iter().zip(&line[x..]).map(|(t, v)| t * v).sum();
            }
        }
        let mut out = vec![0.0; vw * vh];
        for y in 0..vh {
            for x in 0..vw {
                let mut acc = 0.0;
                for (j, t) in self.taps.iter().enumerate() {
                    acc += t * rows[(y + j) * vw + x];
                }
                out[y * vw + x] = acc;
            }
        }
        out
    }

    /// Adjoint of [`apply`]: spreads each valid-grid value back over its window.
    fn adjoint(&self, src: &[f64]) -> Vec<f64> {
        let (w, vw, vh) = (self.w, self.vw, self.vh);
        let mut rows = vec![0.0; vw * self.h];
        for y in 0..vh {
            for x in 0..vw {
                let v = src[y * vw + x];
                for (j, t) in self.taps.iter().enumerate() {
                    rows[(y + j) * vw + x] += t * v;
                }
            }
        }
        let mut out = vec![0.0; w * self.h];
        for y in 0..self.h {
            for x in 0..vw {
                let v = rows[y * vw + x];
                for (i, t) in self.taps.iter().enumerate() {
                    out[y * w + x + i] += t * v;
                }
            }
        }
        out
    }
}

fn ssim_eval(a: &ImageBuffer, b: &ImageBuffer, want_grad: bool) -> Result<(f64, Option<ImageBuffer>)> {
    a.ensure_same_dims(b, "ssim")?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(FlareError::Dimension(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let la = a.luminance();
    let lb = b.luminance();
    let (x, y) = (la.data(), lb.data());
    let f = ValidFilter::new(w, h);

    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
    let mx = f.apply(x);
    let my = f.apply(y);
    let sxx = f.apply(&xx);
    let syy = f.apply(&yy);
    let sxy = f.apply(&xy);

    let n = mx.len();
    let mut total = 0.0;
    let (mut ga, mut gb, mut gc) = if want_grad {
        (vec![0.0; n], vec![0.0; n], vec![0.0; n])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    for i in 0..n {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cxy = sxy[i] - ux * uy;
        let a1 = 2.0 * ux * uy + SSIM_C1;
        let a2 = 2.0 * cxy + SSIM_C2;
        let b1 = ux * ux + uy * uy + SSIM_C1;
        let b2 = vx + vy + SSIM_C2;
        let s = a1 * a2 / (b1 * b2);
        total += s;
        if want_grad {
            // dS/dμx, dS/dσx², dS/dσxy
            let d_mu = s * (2.0 * uy / a1 - 2.0 * ux / b1);
            let d_var = -s / b2;
            let d_cov = 2.0 * s / a2;
            ga[i] = d_mu - 2.0 * d_var * ux - d_cov * uy;
            gb[i] = 2.0 * d_var;
            gc[i] = d_cov;
        }
    }
    let value = total / n as f64;
    if !want_grad {
        return Ok((value, None));
    }

    let pa = f.adjoint(&ga);
    let pb = f.adjoint(&gb);
    let pc = f.adjoint(&gc);
    let inv = 1.0 / n as f64;
    let glum: Vec<f64> = (0..w * h).map(|q| (pa[q] + pb[q] * x[q] + pc[q] * y[q]) * inv).collect();
    let grad = if a.channels() == 1 {
        ImageBuffer::new(w, h, 1, glum)?
    } else {
        ImageBuffer::from_fn(w, h, 3, |px, py, c| REC709[c] * glum[py * w + px])
    };
    Ok((value, Some(grad)))
}
