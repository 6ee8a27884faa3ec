use flare_core::ostpm::{derive_ghost_mask, inpaint, inpaint_observed};
use flare_core::rng::FlareRng;
use flare_core::scenes::texture_scene;
use flare_core::{ImageBuffer, Mask};
use proptest::prelude::*;

fn hole(w: usize, h: usize, x0: usize, y0: usize, s: usize) -> Mask {
    Mask::from_fn(w, h, |x, y| (x0..x0 + s).contains(&x) && (y0..y0 + s).contains(&y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn ghost_mask_is_an_involution(seed in 0u64..10_000) {
        let mut rng = FlareRng::new(seed);
        let (w, h) = (rng.range(8, 40), rng.range(8, 40));
        let c = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
        let m = Mask::from_fn(w, h, |_, _| rng.unit() < 0.2);
        let twice = derive_ghost_mask(&derive_ghost_mask(&m, c, 0).unwrap(), c, 0).unwrap();
        prop_assert_eq!(twice, m);
    }
}

#[test]
fn fill_loop_invariants() {
    let r = texture_scene(4, 48, 48);
    let m = hole(48, 48, 18, 20, 10);
    let mut last_remaining = m.area();
    let mut steps = 0;
    let y = inpaint_observed(&r, &m, 3, 24, |state, step| {
        assert!(state.remaining() < last_remaining);
        assert_eq!(last_remaining - state.remaining(), step.filled);
        last_remaining = state.remaining();
        assert!(state.confidence.iter().all(|c| (0.0..=1.0).contains(c)));
        assert!(step.confidence <= 1.0);
        steps += 1;
    })
    .unwrap();
    assert_eq!(last_remaining, 0);
    assert!(steps <= m.area());
    for yy in 0..48 {
        for x in 0..48 {
            if !m.is_set(x, yy) {
                for c in 0..3 {
                    assert_eq!(y.get(x, yy, c), r.get(x, yy, c));
                }
            }
        }
    }
}

#[test]
fn filled_pixels_keep_inherited_confidence() {
    let r = texture_scene(9, 40, 40);
    let m = hole(40, 40, 14, 14, 8);
    let mut prev: Vec<f64> = m.data().iter().map(|v| 1.0 - v).collect();
    let mut was_known: Vec<bool> = m.data().iter().map(|&v| v == 0.0).collect();
    inpaint_observed(&r, &m, 3, 20, |state, step| {
        assert!(step.confidence < 1.0);
        for i in 0..40 * 40 {
            let known = state.is_known(i % 40, i / 40);
            if was_known[i] {
                assert_eq!(state.confidence[i], prev[i]);
            } else if known {
                assert_eq!(state.confidence[i], step.confidence);
            }
            was_known[i] = known;
        }
        prev = state.confidence.clone();
    })
    .unwrap();
}

#[test]
fn straight_edge_continues() {
    // vertical edge at x = 20 through a square hole
    let (w, h) = (48, 48);
    let r = ImageBuffer::from_fn(w, h, 3, |x, _, _| if x < 20 { 0.2 } else { 0.8 });
    let m = hole(w, h, 14, 18, 12);
    let y = inpaint(&r, &m, 4, 32).unwrap();
    for row in 18..30 {
        let edge = (1..w).find(|&x| (y.get(x, row, 0) - 0.5) * (y.get(x - 1, row, 0) - 0.5) < 0.0).unwrap();
        assert!((edge as isize - 20).abs() <= 1, "row {row}: edge at {edge}");
    }
}

#[test]
fn diagonal_edge_continues() {
    let (w, h) = (64, 64);
    let r = ImageBuffer::from_fn(w, h, 3, |x, y, _| if x > y { 0.15 } else { 0.75 });
    let m = hole(w, h, 26, 26, 12);
    let y = inpaint(&r, &m, 4, 32).unwrap();
    // the far side of the hole
    for row in 34..38 {
        let edge = (1..w).find(|&x| (y.get(x, row, 0) - 0.45) * (y.get(x - 1, row, 0) - 0.45) < 0.0).unwrap();
        assert!((edge as isize - row as isize - 1).abs() <= 1, "row {row}: edge at {edge}");
    }
}

#[test]
fn empty_mask_is_identity() {
    let r = texture_scene(1, 32, 32);
    assert_eq!(inpaint(&r, &Mask::empty(32, 32), 4, 16).unwrap(), r);
}
