//! Light-source detection and the weighted light-source map.

use serde::{Deserialize, Serialize};

use crate::conv::gaussian_blur;
use crate::error::{FlareError, Result};
use crate::image::{ImageBuffer, Mask};

/// Luminance below which nothing counts as a light source, whatever the quantile.
pub const THRESHOLD_FLOOR: f64 = 0.85;

/// Holes up to this many pixels inside a source are filled.
pub const MAX_HOLE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LightConfig {
    pub percentile: f64,
    pub min_area: usize,
    pub feather_sigma: f64,
}

impl Default for LightConfig {
    fn default() -> Self {
        Self { percentile: 0.98, min_area: 9, feather_sigma: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Component {
    pub centroid: (f64, f64),
    pub area: usize,
    pub peak: f64,
}

#[derive(Debug, Clone)]
pub struct SourceDetection {
    pub mask: Mask,
    pub components: Vec<Component>,
    pub threshold_used: f64,
    /// Set when nothing reached the threshold.
    pub warning: bool,
}

/// Linear-interpolated quantile of `values` (`q` in `[0, 1]`).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

const N8: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
const N4: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];

/// Labels connected runs of `on` pixels; returns the label map (0 = off) and
/// the pixel lists per label, in raster order of first pixel.
fn label(on: &[bool], w: usize, h: usize, nbrs: &[(isize, isize)]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut labels = vec![0usize; w * h];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !on[start] || labels[start] != 0 {
            continue;
        }
        let id = comps.len() + 1;
        let mut pixels = Vec::new();
        labels[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            pixels.push(p);
            let (x, y) = ((p % w) as isize, (p / w) as isize);
            for &(dx, dy) in nbrs {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let q = ny as usize * w + nx as usize;
                if on[q] && labels[q] == 0 {
                    labels[q] = id;
                    stack.push(q);
                }
            }
        }
        pixels.sort_unstable();
        comps.push(pixels);
    }
    (labels, comps)
}

/// Thresholds luminance at `max(quantile(percentile), 0.85)`, keeps
/// 8-connected components of at least `min_area` pixels and fills small holes.
pub fn extract_light_mask(r: &ImageBuffer, percentile: f64, min_area: usize) -> Result<SourceDetection> {
    if !(0.0..=1.0).contains(&percentile) {
        return Err(FlareError::Parameter(format!("percentile {percentile} outside [0,1]")));
    }
    let (w, h) = (r.width(), r.height());
    let lum = r.luminance();
    let l = lum.data();
    let threshold = quantile(l, percentile).max(THRESHOLD_FLOOR);
    let cand: Vec<bool> = l.iter().map(|&v| v >= threshold).collect();

    let (_, comps) = label(&cand, w, h, &N8);
    let mut on = vec![false; w * h];
    for c in comps.iter().filter(|c| c.len() >= min_area) {
        for &p in c {
            on[p] = true;
        }
    }

    // background pockets not touching the border are holes
    let off: Vec<bool> = on.iter().map(|b| !b).collect();
    let (_, pockets) = label(&off, w, h, &N4);
    for pocket in pockets {
        let touches_border = pocket.iter().any(|&p| {
            let (x, y) = (p % w, p / w);
            x == 0 || y == 0 || x == w - 1 || y == h - 1
        });
        if !touches_border && pocket.len() <= MAX_HOLE {
            for p in pocket {
                on[p] = true;
            }
        }
    }

    let mask = Mask::new(w, h, on.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())?;
    let det = describe_sources(r, mask, threshold)?;
    if det.warning {
        log::warn!("no light source at or above luminance {threshold:.3}");
    }
    Ok(det)
}

/// Summarizes an already known source mask as a detection.
pub fn describe_sources(r: &ImageBuffer, mask: Mask, threshold: f64) -> Result<SourceDetection> {
    r.ensure_mask_dims(&mask, "source mask")?;
    let (w, h) = (r.width(), r.height());
    let lum = r.luminance();
    let l = lum.data();
    let on: Vec<bool> = mask.data().iter().map(|&v| v > 0.0).collect();
    let (_, finals) = label(&on, w, h, &N8);
    let components = finals
        .iter()
        .map(|pix| {
            let n = pix.len() as f64;
            let sx: f64 = pix.iter().map(|&p| (p % w) as f64).sum();
            let sy: f64 = pix.iter().map(|&p| (p / w) as f64).sum();
            let peak = pix.iter().map(|&p| l[p]).fold(f64::MIN, f64::max);
            Component { centroid: (sx / n, sy / n), area: pix.len(), peak }
        })
        .collect::<Vec<_>>();
    let warning = components.is_empty();
    Ok(SourceDetection { mask, components, threshold_used: threshold, warning })
}

/// `(r · M_s) ∗ Gaussian(feather_sigma)`.
pub fn weighted_light_map(r: &ImageBuffer, det: &SourceDetection, feather_sigma: f64) -> Result<ImageBuffer> {
    let src = r.masked(&det.mask)?;
    Ok(gaussian_blur(&src, feather_sigma))
}
