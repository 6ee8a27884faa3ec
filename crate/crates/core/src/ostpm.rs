//! Ghost removal by optical symmetry and exemplar inpainting.
//!
//! The ghost region `M_r` is the light-source mask rotated 180° about the
//! optical center. It is then filled front-to-back: the front pixel with the
//! highest priority `C(p)·T(p)` picks the best fully known source patch in a
//! search window and copies it into its unknown pixels.

use serde::{Deserialize, Serialize};

use crate::error::{FlareError, Result};
use crate::formation::point_reflect_mask;
use crate::image::{ImageBuffer, Mask};

/// Normalizer of the data term for `[0, 1]` intensities.
pub const ALPHA_NORM: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InpaintConfig {
    pub patch_radius: usize,
    pub search_window: usize,
    pub ghost_dilation: usize,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        Self { patch_radius: 4, search_window: 64, ghost_dilation: 2 }
    }
}

/// `M_r(x, y) = M_s(round(2c − x), round(2c − y))`, dilated by `dilation` pixels.
pub fn derive_ghost_mask(m_s: &Mask, center: (f64, f64), dilation: usize) -> Result<Mask> {
    let (w, h) = (m_s.width() as f64, m_s.height() as f64);
    if !(center.0 >= 0.0 && center.1 >= 0.0 && center.0 <= w - 1.0 && center.1 <= h - 1.0) {
        return Err(FlareError::Parameter(format!("optical center {center:?} outside the frame")));
    }
    Ok(point_reflect_mask(m_s, center).dilate(dilation))
}

/// Working state of the fill loop.
#[derive(Debug, Clone)]
pub struct InpaintState {
    pub image: ImageBuffer,
    pub fill_mask: Mask,
    pub confidence: Vec<f64>,
    pub patch_radius: usize,
    pub front: Vec<(usize, usize)>,
    lum: Vec<f64>,
}

impl InpaintState {
    pub fn new(r: &ImageBuffer, m_r: &Mask, patch_radius: usize) -> Result<Self> {
        r.ensure_mask_dims(m_r, "inpaint")?;
        let fill_mask = Mask::from_fn(m_r.width(), m_r.height(), |x, y| m_r.is_set(x, y));
        let confidence = fill_mask.data().iter().map(|&v| 1.0 - v).collect();
        let mut image = r.clone();
        // unknown samples carry no information; zero them so nothing leaks
        for y in 0..r.height() {
            for x in 0..r.width() {
                if fill_mask.is_set(x, y) {
                    for c in 0..r.channels() {
                        image.set(x, y, c, 0.0);
                    }
                }
            }
        }
        let lum = image.luminance().into_data();
        let mut s = Self { image, fill_mask, confidence, patch_radius, front: Vec::new(), lum };
        s.update_front();
        Ok(s)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.image.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.image.height()
    }

    #[inline]
    pub fn is_known(&self, x: usize, y: usize) -> bool {
        !self.fill_mask.is_set(x, y)
    }

    pub fn remaining(&self) -> usize {
        self.fill_mask.area()
    }

    /// Fill pixels with at least one known (or out-of-frame-free) 8-neighbor.
    pub fn update_front(&mut self) {
        let (w, h) = (self.width() as isize, self.height() as isize);
        self.front.clear();
        for y in 0..h {
            for x in 0..w {
                if self.is_known(x as usize, y as usize) {
                    continue;
                }
                let on_front = (-1..=1).any(|dy| {
                    (-1..=1).any(|dx| {
                        let (nx, ny) = (x + dx, y + dy);
                        (dx, dy) != (0, 0) && nx >= 0 && ny >= 0 && nx < w && ny < h && self.is_known(nx as usize, ny as usize)
                    })
                });
                if on_front {
                    self.front.push((x as usize, y as usize));
                }
            }
        }
    }

    fn known_lum(&self, x: isize, y: isize) -> Option<f64> {
        let (w, h) = (self.width() as isize, self.height() as isize);
        (x >= 0 && y >= 0 && x < w && y < h && self.is_known(x as usize, y as usize)).then(|| self.lum[(y * w + x) as usize])
    }

    /// Unit normal to the fill front at `p` from the mask gradient; zero if undefined.
    pub fn front_normal(&self, p: (usize, usize)) -> (f64, f64) {
        let (w, h) = (self.width() as isize, self.height() as isize);
        let m = |x: isize, y: isize| -> f64 {
            if x >= 0 && y >= 0 && x < w && y < h && !self.is_known(x as usize, y as usize) {
                1.0
            } else {
                0.0
            }
        };
        let (x, y) = (p.0 as isize, p.1 as isize);
        // Sobel on the fill indicator
        let gx = (m(x + 1, y - 1) + 2.0 * m(x + 1, y) + m(x + 1, y + 1)) - (m(x - 1, y - 1) + 2.0 * m(x - 1, y) + m(x - 1, y + 1));
        let gy = (m(x - 1, y + 1) + 2.0 * m(x, y + 1) + m(x + 1, y + 1)) - (m(x - 1, y - 1) + 2.0 * m(x, y - 1) + m(x + 1, y - 1));
        let n = gx.hypot(gy);
        if n == 0.0 {
            (0.0, 0.0)
        } else {
            (gx / n, gy / n)
        }
    }

    /// Patch pixels of `p` clipped to the frame, as absolute coordinates.
    fn patch(&self, p: (usize, usize)) -> impl Iterator<Item = (usize, usize)> {
        let r = self.patch_radius;
        let (w, h) = (self.width(), self.height());
        let (x0, x1) = (p.0.saturating_sub(r), (p.0 + r).min(w - 1));
        let (y0, y1) = (p.1.saturating_sub(r), (p.1 + r).min(h - 1));
        (y0..=y1).flat_map(move |y| (x0..=x1).map(move |x| (x, y)))
    }

    /// `C(p)`: summed confidence of known patch pixels over the patch area.
    pub fn patch_confidence(&self, p: (usize, usize)) -> f64 {
        let w = self.width();
        let (mut sum, mut n) = (0.0, 0usize);
        for (x, y) in self.patch(p) {
            n += 1;
            if self.is_known(x, y) {
                sum += self.confidence[y * w + x];
            }
        }
        sum / n as f64
    }
}

fn axis_diff(f: impl Fn(isize) -> Option<f64>) -> f64 {
    match (f(-2), f(-1), f(0), f(1), f(2)) {
        (_, Some(a), _, Some(b), _) => (b - a) / 2.0,
        (_, _, Some(c), Some(b), _) => b - c,
        (_, Some(a), Some(c), _, _) => c - a,
        (_, _, _, Some(b), Some(b2)) => b2 - b,
        (Some(a2), Some(a), _, _, _) => a - a2,
        _ => 0.0,
    }
}

/// Isophote `(−∂y L, ∂x L)` of the known luminance at `p`.
///
/// Central differences when both axis neighbors are known, otherwise a
/// one-sided difference over known pixels, otherwise zero on that axis.
pub fn isophote(state: &InpaintState, p: (usize, usize)) -> (f64, f64) {
    let (x, y) = (p.0 as isize, p.1 as isize);
    let gx = axis_diff(|d| state.known_lum(x + d, y));
    let gy = axis_diff(|d| state.known_lum(x, y + d));
    (-gy, gx)
}

/// Isophote of an image where every pixel is known.
pub fn image_isophote(img: &ImageBuffer, p: (usize, usize)) -> Result<(f64, f64)> {
    let state = InpaintState::new(img, &Mask::empty(img.width(), img.height()), 0)?;
    Ok(isophote(&state, p))
}

/// `P(p) = C(p) · |∇R_p · n_p| / α`.
pub fn priority(state: &InpaintState, p: (usize, usize)) -> Result<f64> {
    if !state.front.contains(&p) {
        return Err(FlareError::Contract(format!("pixel {p:?} is not on the fill front")));
    }
    Ok(priority_terms(state, p).0)
}

/// `(P, C, T)` at a front pixel.
fn priority_terms(state: &InpaintState, p: (usize, usize)) -> (f64, f64, f64) {
    let c = state.patch_confidence(p);
    let iso = isophote(state, p);
    let n = state.front_normal(p);
    let t = (iso.0 * n.0 + iso.1 * n.1).abs() / ALPHA_NORM;
    (c * t, c, t)
}

/// The matching cost between the target patch at `p` and a candidate at `q`.
fn match_cost(state: &InpaintState, p: (usize, usize), q: (usize, usize), iso_p: (f64, f64), diag: f64) -> f64 {
    let r = state.patch_radius as isize;
    let (w, h, ch) = (state.width() as isize, state.height() as isize, state.image.channels());
    let data = state.image.data();
    let mut ssd = 0.0;
    for dy in -r..=r {
        let ty = p.1 as isize + dy;
        if ty < 0 || ty >= h {
            continue;
        }
        let sy = q.1 as isize + dy;
        for dx in -r..=r {
            let tx = p.0 as isize + dx;
            if tx < 0 || tx >= w || !state.is_known(tx as usize, ty as usize) {
                continue;
            }
            let sx = q.0 as isize + dx;
            let (ti, si) = (((ty * w + tx) as usize) * ch, ((sy * w + sx) as usize) * ch);
            for c in 0..ch {
                let d = data[ti + c] - data[si + c];
                ssd += d * d;
            }
        }
    }
    let rho = (p.0 as f64 - q.0 as f64).hypot(p.1 as f64 - q.1 as f64) / diag;
    let iso_q = isophote(state, q);
    let (mp, mq) = (iso_p.0.hypot(iso_p.1), iso_q.0.hypot(iso_q.1));
    let cos = if mp > 0.0 && mq > 0.0 { (iso_p.0 * iso_q.0 + iso_p.1 * iso_q.1) / (mp * mq) } else { 0.0 };
    ssd + rho + (mq - mp).abs() - cos
}

/// Center of the best fully known source patch within `search_window` of `p`.
///
/// Candidates lie entirely inside the frame and contain no unfilled pixel.
/// Ties go to the smallest `(row, col)`.
pub fn best_patch(state: &InpaintState, p: (usize, usize), search_window: usize) -> Result<(usize, usize)> {
    let r = state.patch_radius;
    let (w, h) = (state.width(), state.height());
    let half = search_window / 2;
    if w < 2 * r + 1 || h < 2 * r + 1 {
        return Err(FlareError::SearchExhausted { x: p.0, y: p.1, window: search_window });
    }
    let (x0, x1) = (p.0.saturating_sub(half).max(r), (p.0 + half).min(w - 1 - r));
    let (y0, y1) = (p.1.saturating_sub(half).max(r), (p.1 + half).min(h - 1 - r));
    if x0 > x1 || y0 > y1 {
        return Err(FlareError::SearchExhausted { x: p.0, y: p.1, window: search_window });
    }

    // unknown-pixel counts over candidate patches via an integral image
    let mut integral = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0u32;
        for x in 0..w {
            row += u32::from(!state.is_known(x, y));
            integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
        }
    }
    let unknown_in = |cx: usize, cy: usize| {
        let (a, b, c, d) = (cx - r, cy - r, cx + r + 1, cy + r + 1);
        integral[d * (w + 1) + c] + integral[b * (w + 1) + a] - integral[b * (w + 1) + c] - integral[d * (w + 1) + a]
    };

    let diag = search_window as f64 * std::f64::consts::SQRT_2;
    let iso_p = isophote(state, p);
    let mut best: Option<((usize, usize), f64)> = None;
    for qy in y0..=y1 {
        for qx in x0..=x1 {
            if unknown_in(qx, qy) != 0 {
                continue;
            }
            let cost = match_cost(state, p, (qx, qy), iso_p, diag);
            if best.is_none_or(|(_, b)| cost < b) {
                best = Some(((qx, qy), cost));
            }
        }
    }
    best.map(|(q, _)| q).ok_or(FlareError::SearchExhausted { x: p.0, y: p.1, window: search_window })
}

/// One fill step as seen by an observer.
#[derive(Debug, Clone, Copy)]
pub struct FillStep {
    pub iteration: usize,
    pub target: (usize, usize),
    pub source: (usize, usize),
    pub priority: f64,
    pub confidence: f64,
    pub filled: usize,
}

/// Fills `m_r` in `r` and returns the pseudo-target `y`.
pub fn inpaint(r: &ImageBuffer, m_r: &Mask, patch_radius: usize, search_window: usize) -> Result<ImageBuffer> {
    inpaint_observed(r, m_r, patch_radius, search_window, |_, _| {})
}

/// [`inpaint`] with a callback after every fill step.
pub fn inpaint_observed(
    r: &ImageBuffer,
    m_r: &Mask,
    patch_radius: usize,
    search_window: usize,
    mut observe: impl FnMut(&InpaintState, &FillStep),
) -> Result<ImageBuffer> {
    r.ensure_mask_dims(m_r, "inpaint")?;
    if m_r.is_empty() {
        return Ok(r.clone());
    }
    let (w, h) = (r.width(), r.height());
    if 2 * m_r.area() >= w * h {
        return Err(FlareError::Parameter(format!("fill region covers {} of {} pixels (must be < 50%)", m_r.area(), w * h)));
    }
    let mut state = InpaintState::new(r, m_r, patch_radius)?;
    let full_window = 2 * w.max(h);
    let mut iteration = 0;
    while !state.front.is_empty() {
        // highest priority, then highest confidence, then raster order
        let mut pick = None;
        for &p in &state.front {
            let (pr, c, _) = priority_terms(&state, p);
            if pick.is_none_or(|(_, bp, bc)| pr > bp || (pr == bp && c > bc)) {
                pick = Some((p, pr, c));
            }
        }
        let (p, pr, conf) = pick.expect("front is nonempty");

        let mut window = search_window.max(2 * patch_radius + 1);
        let source = loop {
            match best_patch(&state, p, window) {
                Ok(q) => break q,
                Err(FlareError::SearchExhausted { .. }) if window < full_window => window *= 2,
                Err(e) => return Err(e),
            }
        };

        let before = state.remaining();
        let ch = r.channels();
        let targets: Vec<(usize, usize)> = state.patch(p).filter(|&(x, y)| !state.is_known(x, y)).collect();
        for &(x, y) in &targets {
            let sx = (source.0 as isize + x as isize - p.0 as isize) as usize;
            let sy = (source.1 as isize + y as isize - p.1 as isize) as usize;
            for c in 0..ch {
                let v = state.image.get(sx, sy, c);
                state.image.set(x, y, c, v);
            }
            state.lum[y * w + x] = state.lum[sy * w + sx];
            state.confidence[y * w + x] = conf;
            state.fill_mask.set(x, y, 0.0);
        }
        let after = state.remaining();
        if after >= before {
            return Err(FlareError::Stall { remaining: after });
        }
        state.update_front();
        observe(&state, &FillStep { iteration, target: p, source, priority: pr, confidence: conf, filled: before - after });
        iteration += 1;
    }
    Ok(state.image)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ghost_mask_symmetry() {
        let m = Mask::from_fn(129, 129, |x, y| (x, y) == (10, 10));
        let g = derive_ghost_mask(&m, (64.0, 64.0), 0).unwrap();
        assert_eq!(g.area(), 1);
        assert!(g.is_set(118, 118));
        assert_eq!(derive_ghost_mask(&g, (64.0, 64.0), 0).unwrap(), m);
        let d = derive_ghost_mask(&m, (64.0, 64.0), 2).unwrap();
        assert!(d.contains(&g) && d.area() == 25);
        assert!(derive_ghost_mask(&m, (200.0, 3.0), 0).is_err());
    }

    #[test]
    fn isophote_examples() {
        let flat = ImageBuffer::filled(5, 5, 1, 0.4);
        assert_eq!(image_isophote(&flat, (2, 2)).unwrap(), (0.0, 0.0));
        let step = ImageBuffer::from_fn(6, 6, 1, |x, _, _| if x >= 3 { 1.0 } else { 0.0 });
        let iso = image_isophote(&step, (2, 3)).unwrap();
        assert_eq!(iso, (0.0, 0.5));
        let img = ImageBuffer::from_fn(6, 6, 1, |x, y, _| (x * x + 2 * y) as f64 / 40.0);
        let (ix, iy) = image_isophote(&img, (3, 2)).unwrap();
        let (gx, gy) = (iy, -ix);
        assert_eq!(ix * gx + iy * gy, 0.0);
    }

    #[test]
    fn priority_examples() {
        let flat = ImageBuffer::filled(12, 12, 1, 0.3);
        let hole = Mask::from_fn(12, 12, |x, y| (5..8).contains(&x) && (5..8).contains(&y));
        let s = InpaintState::new(&flat, &hole, 1).unwrap();
        assert_eq!(priority(&s, (5, 5)).unwrap(), 0.0);
        assert!(priority(&s, (6, 6)).is_err());
        assert_eq!(s.patch_confidence((2, 2)), 1.0);
        // C = 0.5 and |∇R·n| = 0.2 gives P = 0.1
        assert!((0.5f64 * 0.2 / ALPHA_NORM - 0.1).abs() < 1e-15);
    }

    #[test]
    fn front_is_the_mask_boundary() {
        let img = ImageBuffer::filled(10, 10, 1, 0.5);
        let hole = Mask::from_fn(10, 10, |x, y| (3..7).contains(&x) && (3..7).contains(&y));
        let s = InpaintState::new(&img, &hole, 1).unwrap();
        assert_eq!(s.front.len(), 12);
        assert!(!s.front.contains(&(4, 4)));
    }

    #[test]
    fn adjacent_duplicate_is_chosen() {
        // vertical stripes of period 3: the patch one period left is identical
        let img = ImageBuffer::from_fn(30, 30, 1, |x, _, _| [0.2, 0.5, 0.9][x % 3]);
        let hole = Mask::from_fn(30, 30, |x, y| (15..18).contains(&x) && (14..17).contains(&y));
        let s = InpaintState::new(&img, &hole, 2).unwrap();
        let q = best_patch(&s, (15, 14), 12).unwrap();
        assert_eq!((q.0 as isize - 15).rem_euclid(3), 0);
        assert!((q.0 as isize - 15).abs() <= 3 && (q.1 as isize - 14).abs() <= 3);
    }

    #[test]
    fn nearer_of_equal_candidates_wins() {
        let img = ImageBuffer::filled(40, 40, 1, 0.5);
        let hole = Mask::from_fn(40, 40, |x, y| (18..22).contains(&x) && (18..22).contains(&y));
        let s = InpaintState::new(&img, &hole, 1).unwrap();
        // every candidate has SSD 0 and zero isophote: pure distance ordering
        let q = best_patch(&s, (18, 18), 20).unwrap();
        let d = (q.0 as f64 - 18.0).hypot(q.1 as f64 - 18.0);
        assert!(d <= 2.0 + 1e-12, "{q:?}");
    }

    #[test]
    fn candidates_overlapping_the_hole_are_excluded() {
        let img = ImageBuffer::filled(12, 12, 1, 0.5);
        let hole = Mask::from_fn(12, 12, |x, y| (3..9).contains(&x) && (3..9).contains(&y));
        let s = InpaintState::new(&img, &hole, 3).unwrap();
        // every 7x7 patch overlaps the 6x6 hole in a 12x12 frame
        assert!(matches!(best_patch(&s, (3, 3), 64), Err(FlareError::SearchExhausted { .. })));
    }

    #[test]
    fn empty_and_oversized_masks() {
        let img = ImageBuffer::from_fn(16, 16, 3, |x, y, c| ((x + y + c) % 5) as f64 / 5.0);
        assert_eq!(inpaint(&img, &Mask::empty(16, 16), 2, 8).unwrap(), img);
        assert!(inpaint(&img, &Mask::full(16, 16), 2, 8).is_err());
    }

    #[test]
    fn checkerboard_hole_is_exact() {
        let img = ImageBuffer::from_fn(48, 48, 1, |x, y, _| if (x / 4 + y / 4) % 2 == 0 { 0.9 } else { 0.1 });
        let hole = Mask::from_fn(48, 48, |x, y| (20..28).contains(&x) && (18..26).contains(&y));
        let y = inpaint(&img, &hole, 4, 32).unwrap();
        assert_eq!(y, img);
    }
}
