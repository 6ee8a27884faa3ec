//! Procedural test scenes.
//!
//! `night_scene` draws a dim city skyline with lit windows and one or two
//! saturated street lamps placed well away from the frame center, so their
//! ghosts land inside the frame on ordinary scene content. `texture_scene`
//! draws a smooth periodic texture for inpainting tests.

use crate::conv::gaussian_blur;
use crate::image::ImageBuffer;
use crate::rng::FlareRng;

const SCENE_STREAM: u64 = 0x5343;

/// Dim night scene with saturated lamps. Deterministic in `seed`.
pub fn night_scene(seed: u64, width: usize, height: usize) -> ImageBuffer {
    let mut rng = FlareRng::derived(seed, SCENE_STREAM);
    let (w, h) = (width as f64, height as f64);

    let noise = ImageBuffer::from_fn(width, height, 1, |_, _, _| rng.unit());
    let noise = gaussian_blur(&noise, 2.0);
    let nmean = noise.mean();
    let tint = [0.7, 0.8, 1.2];
    let mut img = ImageBuffer::from_fn(width, height, 3, |x, y, c| {
        let sky = 0.03 + 0.05 * y as f64 / h;
        sky * tint[c] + 0.3 * (noise.get(x, y, 0) - nmean)
    });

    let buildings = rng.range(3, 6);
    for _ in 0..buildings {
        let x0 = rng.range(0, width.saturating_sub(20).max(1));
        let bw = rng.range(12, 35);
        let bh = rng.range(height / 5, (height * 5 / 8).max(height / 5 + 1));
        let shade = rng.uniform(0.06, 0.18);
        let top = height.saturating_sub(bh);
        let right = (x0 + bw).min(width);
        for y in top..height {
            for x in x0..right {
                for (c, t) in [1.0, 0.95, 0.9].iter().enumerate() {
                    img.set(x, y, c, shade * t);
                }
            }
        }
        let mut wy = top + 3;
        while wy + 3 < height {
            let mut wx = x0 + 2;
            while wx + 3 < right {
                if rng.unit() < 0.5 {
                    let lit = rng.uniform(0.3, 0.6);
                    for y in wy..wy + 3 {
                        for x in wx..wx + 3 {
                            for (c, t) in [1.0, 0.85, 0.5].iter().enumerate() {
                                img.set(x, y, c, lit * t);
                            }
                        }
                    }
                }
                wx += 6;
            }
            wy += 7;
        }
    }

    let lamps = rng.range(3, 6);
    let margin = 12.0f64.min(w / 4.0);
    let (mx, my) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let min_dist = 0.23 * w.min(h);
    let mut placed: Vec<(f64, f64, f64)> = Vec::new();
    for _ in 0..lamps {
        let r = rng.uniform(3.0, 5.5);
        // keep lamps apart from each other and from each other's ghosts
        let spot = (0..200).find_map(|_| {
            let cx = rng.uniform(margin, w - margin);
            let cy = rng.uniform(margin, h - margin);
            let clear = placed.iter().all(|&(px, py, pr)| {
                let gap = r + pr + 10.0;
                (cx - px).hypot(cy - py) > gap && (cx - (2.0 * mx - px)).hypot(cy - (2.0 * my - py)) > gap
            });
            ((cx - mx).hypot(cy - my) > min_dist && clear).then_some((cx, cy))
        });
        let Some((cx, cy)) = spot else { continue };
        placed.push((cx, cy, r));
        for y in 0..height {
            for x in 0..width {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                if dx * dx + dy * dy <= r * r {
                    for c in 0..3 {
                        img.set(x, y, c, 1.0);
                    }
                }
            }
        }
    }
    img.clamp01()
}

/// Smooth periodic texture in `[0.15, 0.85]` for exemplar-inpainting tests.
pub fn texture_scene(seed: u64, width: usize, height: usize) -> ImageBuffer {
    let mut rng = FlareRng::derived(seed, SCENE_STREAM + 1);
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let angle = rng.uniform(0.0, std::f64::consts::PI);
            let period = rng.uniform(8.0, 20.0);
            let phase = rng.uniform(0.0, std::f64::consts::TAU);
            let amp = rng.uniform(0.05, 0.12);
            (angle, period, phase, amp)
        })
        .collect();
    let noise = gaussian_blur(&ImageBuffer::from_fn(width, height, 1, |_, _, _| rng.unit()), 1.5);
    let tint = [rng.uniform(0.8, 1.0), rng.uniform(0.8, 1.0), rng.uniform(0.8, 1.0)];
    ImageBuffer::from_fn(width, height, 3, |x, y, c| {
        let mut v = 0.5;
        for &(a, p, ph, amp) in &waves {
            let t = (x as f64 * a.cos() + y as f64 * a.sin()) / p;
            v += amp * (std::f64::consts::TAU * t + ph).sin();
        }
        v += 0.3 * (noise.get(x, y, 0) - 0.5);
        (v * tint[c]).clamp(0.15, 0.85)
    })
}
