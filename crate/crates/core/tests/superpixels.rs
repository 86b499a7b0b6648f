use std::collections::VecDeque;

use ndarray::{Array2, Array3};
use posseg::features::FeatureStack;
use posseg::superpixels::{aggregate_features, segment_superpixels, SuperpixelMap};
use posseg::synth::{default_specs, generate_image, Layout};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Number of 4-connected pieces of each label, by flood fill.
fn pieces_per_label(labels: &Array2<u32>) -> Vec<usize> {
    let (h, w) = labels.dim();
    let n = labels.iter().map(|&l| l as usize + 1).max().unwrap();
    let mut seen = Array2::from_elem((h, w), false);
    let mut pieces = vec![0; n];
    for r0 in 0..h {
        for c0 in 0..w {
            if seen[[r0, c0]] {
                continue;
            }
            let l = labels[[r0, c0]];
            pieces[l as usize] += 1;
            let mut queue = VecDeque::from([(r0, c0)]);
            seen[[r0, c0]] = true;
            while let Some((r, c)) = queue.pop_front() {
                let mut visit = |rr: usize, cc: usize| {
                    if !seen[[rr, cc]] && labels[[rr, cc]] == l {
                        seen[[rr, cc]] = true;
                        queue.push_back((rr, cc));
                    }
                };
                if r > 0 {
                    visit(r - 1, c);
                }
                if r + 1 < h {
                    visit(r + 1, c);
                }
                if c > 0 {
                    visit(r, c - 1);
                }
                if c + 1 < w {
                    visit(r, c + 1);
                }
            }
        }
    }
    pieces
}

#[test]
fn uniform_image_gives_square_connected_cells() {
    let img = Array2::from_elem((64, 64), 0.4);
    let sp = segment_superpixels(&img, 16, 0.5).unwrap();
    let n = sp.n_superpixels();
    assert!((12..=20).contains(&n), "{n} superpixels");
    assert!(pieces_per_label(sp.labels()).iter().all(|&p| p == 1));
    for (id, &count) in sp.pixel_counts().iter().enumerate() {
        assert!((128..=384).contains(&count), "superpixel {id} has {count} pixels");
        // Bounding box of a roughly square cell.
        let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
        for ((r, c), &l) in sp.labels().indexed_iter() {
            if l as usize == id {
                r0 = r0.min(r);
                r1 = r1.max(r);
                c0 = c0.min(c);
                c1 = c1.max(c);
            }
        }
        let (bh, bw) = ((r1 - r0 + 1) as f64, (c1 - c0 + 1) as f64);
        assert!(bh / bw < 2.0 && bw / bh < 2.0, "cell {id} is {bh}x{bw}");
    }
}

#[test]
fn two_region_boundary_follows_the_edge() {
    let img = Array2::from_shape_fn((64, 64), |(_, c)| if c < 32 { 0.0 } else { 1.0 });
    let sp = segment_superpixels(&img, 2, 0.01).unwrap();
    assert_eq!(sp.n_superpixels(), 2);
    for r in 0..64 {
        let row = sp.labels().row(r);
        for c in 1..64 {
            if row[c] != row[c - 1] {
                assert!((30..=34).contains(&c), "row {r} switches at column {c}");
            }
        }
    }
}

#[test]
fn achieved_count_is_near_target() {
    let size = (128, 128);
    let layout = Layout::quadrants(&default_specs(), size).unwrap();
    let (img, _) = generate_image(&layout, size, 5).unwrap();
    for target in [20, 64, 150, 300] {
        let sp = segment_superpixels(&img, target, 0.5).unwrap();
        let n = sp.n_superpixels() as f64;
        assert!((n - target as f64).abs() <= 0.3 * target as f64, "target {target}, got {n}");
        assert!(pieces_per_label(sp.labels()).iter().all(|&p| p == 1));
    }
}

fn quadrant_labels(h: usize, w: usize, ids: [u32; 4]) -> Array2<u32> {
    Array2::from_shape_fn((h, w), |(r, c)| ids[2 * usize::from(r >= h / 2) + usize::from(c >= w / 2)])
}

fn random_stack(d: usize, h: usize, w: usize, seed: u64) -> FeatureStack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FeatureStack::from_planes(Array3::from_shape_fn((d, h, w), |_| rng.random_range(-5.0..5.0))).unwrap()
}

#[test]
fn quadrant_means_match_direct_sums() {
    let stack = random_stack(3, 8, 8, 6);
    let sp = SuperpixelMap::from_dense_labels(quadrant_labels(8, 8, [0, 1, 2, 3])).unwrap();
    let f = aggregate_features(&stack, &sp).unwrap();
    for q in 0..4 {
        let (r0, c0) = (4 * (q / 2), 4 * (q % 2));
        for p in 0..3 {
            let mut s = 0.0;
            for r in r0..r0 + 4 {
                for c in c0..c0 + 4 {
                    s += stack.planes()[[p, r, c]];
                }
            }
            assert!((f.row(q)[p] - s / 16.0).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn relabeling_permutes_rows(seed in any::<u64>(), perm in Just([0u32, 1, 2, 3]).prop_shuffle()) {
        let stack = random_stack(4, 10, 12, seed);
        let base = aggregate_features(&stack, &SuperpixelMap::from_dense_labels(quadrant_labels(10, 12, [0, 1, 2, 3])).unwrap()).unwrap();
        let ids = [perm[0], perm[1], perm[2], perm[3]];
        let permuted = aggregate_features(&stack, &SuperpixelMap::from_dense_labels(quadrant_labels(10, 12, ids)).unwrap()).unwrap();
        for q in 0..4 {
            prop_assert_eq!(base.row(q), permuted.row(ids[q] as usize));
        }
    }

    #[test]
    fn mass_is_conserved(seed in any::<u64>(), target in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = Array2::from_shape_fn((32, 32), |_| rng.random_range(0.0..1.0));
        let sp = segment_superpixels(&img, target, 0.5).unwrap();
        let stack = random_stack(3, 32, 32, seed ^ 1);
        let f = aggregate_features(&stack, &sp).unwrap();
        for p in 0..3 {
            let total: f64 = stack.planes().index_axis(ndarray::Axis(0), p).sum();
            let rebuilt: f64 = (0..sp.n_superpixels()).map(|i| sp.pixel_counts()[i] as f64 * f.row(i)[p]).sum();
            let scale = stack.planes().index_axis(ndarray::Axis(0), p).mapv(f64::abs).sum();
            prop_assert!((total - rebuilt).abs() <= 1e-9 * scale, "{} vs {}", total, rebuilt);
        }
    }
}
