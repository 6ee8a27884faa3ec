//! 2-D convolution with reflect padding.
//!
//! Borders use whole-sample symmetric reflection (`d c b | a b c d | c b a`),
//! which keeps constant images constant under any normalized kernel. The
//! direct and frequency-domain paths compute the same linear convolution of
//! the padded image and agree to rounding error.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{FlareError, Result};
use crate::image::ImageBuffer;
use crate::kernel::FlareKernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConvMethod {
    Direct,
    #[default]
    Frequency,
}

/// Maps any integer index into `0..n` by reflection without repeating the edge sample.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Convolves every channel of `img` with `k`.
pub fn convolve2d(img: &ImageBuffer, k: &FlareKernel, method: ConvMethod) -> Result<ImageBuffer> {
    if k.size() > img.width().min(img.height()) {
        return Err(FlareError::Dimension(format!(
            "kernel {}x{} larger than image {}x{}",
            k.size(),
            k.size(),
            img.width(),
            img.height()
        )));
    }
    if k.size() == 1 {
        return Ok(img.scale(k.weights()[0]));
    }
    let planes: Vec<ImageBuffer> = (0..img.channels())
        .map(|c| {
            let plane = img.channel(c);
            match method {
                ConvMethod::Direct => direct_plane(&plane, k),
                ConvMethod::Frequency => frequency_plane(&plane, k),
            }
        })
        .collect();
    ImageBuffer::from_planes(&planes)
}

/// Reflect-pads a single-channel plane by `r` on every side.
pub(crate) fn pad_reflect(plane: &ImageBuffer, r: usize) -> (Vec<f64>, usize, usize) {
    let (w, h) = (plane.width(), plane.height());
    let (pw, ph) = (w + 2 * r, h + 2 * r);
    let mut out = vec![0.0; pw * ph];
    for py in 0..ph {
        let sy = reflect_index(py as isize - r as isize, h);
        for px in 0..pw {
            let sx = reflect_index(px as isize - r as isize, w);
            out[py * pw + px] = plane.data()[sy * w + sx];
        }
    }
    (out, pw, ph)
}

fn direct_plane(plane: &ImageBuffer, k: &FlareKernel) -> ImageBuffer {
    let (w, h) = (plane.width(), plane.height());
    let r = k.radius();
    let s = k.size();
    let (pad, pw, _) = pad_reflect(plane, r);
    let kw = k.weights();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            // out(p) = Σ_t k(t) · in(p - t); padded coords shift by r
            let mut acc = 0.0;
            for ky in 0..s {
                let row = (y + 2 * r - ky) * pw;
                for kx in 0..s {
                    acc += kw[ky * s + kx] * pad[row + x + 2 * r - kx];
                }
            }
            out[y * w + x] = acc;
        }
    }
    ImageBuffer::new(w, h, 1, out).expect("dims preserved")
}

fn frequency_plane(plane: &ImageBuffer, k: &FlareKernel) -> ImageBuffer {
    let (w, h) = (plane.width(), plane.height());
    let r = k.radius();
    let s = k.size();
    let (pad, pw, ph) = pad_reflect(plane, r);

    let mut a: Vec<Complex<f64>> = pad.iter().map(|&v| Complex::new(v, 0.0)).collect();
    // kernel centered at the origin with wrap-around
    let mut b = vec![Complex::new(0.0, 0.0); pw * ph];
    for ky in 0..s {
        let ty = (ky as isize - r as isize).rem_euclid(ph as isize) as usize;
        for kx in 0..s {
            let tx = (kx as isize - r as isize).rem_euclid(pw as isize) as usize;
            b[ty * pw + tx] = Complex::new(k.weights()[ky * s + kx], 0.0);
        }
    }

    let mut planner = FftPlanner::new();
    fft2d(&mut planner, &mut a, pw, ph, false);
    fft2d(&mut planner, &mut b, pw, ph, false);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= *y;
    }
    fft2d(&mut planner, &mut a, pw, ph, true);

    let norm = 1.0 / (pw * ph) as f64;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = a[(y + r) * pw + x + r].re * norm;
        }
    }
    ImageBuffer::new(w, h, 1, out).expect("dims preserved")
}

/// In-place unnormalized 2-D FFT over a row-major `w × h` buffer.
pub(crate) fn fft2d(
    planner: &mut FftPlanner<f64>,
    buf: &mut [Complex<f64>],
    w: usize,
    h: usize,
    inverse: bool,
) {
    let row_fft = if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = if inverse { planner.plan_fft_inverse(h) } else { planner.plan_fft_forward(h) };
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
}

/// Separable Gaussian blur with reflect padding; `sigma <= 0` returns the input.
pub fn gaussian_blur(img: &ImageBuffer, sigma: f64) -> ImageBuffer {
    if sigma <= 0.0 {
        return img.clone();
    }
    let support = FlareKernel::gaussian_support(sigma);
    let r = support / 2;
    let taps: Vec<f64> = {
        let g: Vec<f64> = (0..support)
            .map(|i| {
                let d = i as f64 - r as f64;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let s: f64 = g.iter().sum();
        g.into_iter().map(|v| v / s).collect()
    };
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let src = img.data();
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (i, t) in taps.iter().enumerate() {
                    let sx = reflect_index(x as isize + i as isize - r as isize, w);
                    acc += t * src[(y * w + sx) * ch + c];
                }
                tmp[(y * w + x) * ch + c] = acc;
            }
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (i, t) in taps.iter().enumerate() {
                    let sy = reflect_index(y as isize + i as isize - r as isize, h);
                    acc += t * tmp[(sy * w + x) * ch + c];
                }
                out[(y * w + x) * ch + c] = acc;
            }
        }
    }
    ImageBuffer::new(w, h, ch, out).expect("dims preserved")
}
