use depthshape::augment::{approximate_stereo, augment_color, augment_depth_all, warp_view, Change};
use depthshape::config::PipelineConfig;
use depthshape::contour::detect_contours;
use depthshape::harness::run_sweep;
use depthshape::image_io::{build_scene, SceneSpec, ViewPair};

fn scene(seed: u64, jitter: u32) -> (ViewPair, ViewPair, PipelineConfig) {
    let spec = SceneSpec {
        jitter,
        shapes: 2,
        width: 128,
        ..SceneSpec::default()
    };
    let s = build_scene(seed, &spec).unwrap();
    let cfg = PipelineConfig {
        disparity_scale: spec.disparity_scale(),
        ..PipelineConfig::default()
    };
    (s.left(), s.right(), cfg)
}

#[test]
fn augmentation_touches_only_flagged_pixels() {
    for seed in 0..6 {
        let (l, r, mut cfg) = scene(seed, 2);
        cfg.approx.lambda = 4.0;
        let out = approximate_stereo(&l, &r, &cfg).unwrap();
        for (before, after, mask) in [(&l, &out.left, &out.left_mask), (&r, &out.right, &out.right_mask)] {
            for i in 0..mask.flags.len() {
                if mask.flags[i] == Change::Unchanged {
                    assert_eq!(before.depth.samples[i], after.depth.samples[i]);
                    assert_eq!(before.color.samples[3 * i..3 * i + 3], after.color.samples[3 * i..3 * i + 3]);
                }
            }
        }
    }
}

#[test]
fn filled_colors_stay_within_the_new_side() {
    for seed in 0..6 {
        let (l, _, mut cfg) = scene(seed, 2);
        cfg.approx.lambda = 8.0;
        let contours = detect_contours(&l.depth, cfg.threshold);
        let luma = depthshape::swim::Luma::of(&l.color);
        let shift = depthshape::approx::ShiftCost::new(&luma, cfg.approx.swim, 0.0);
        let approx = depthshape::approx::approximate_contours(&contours, &shift, &cfg.approx).unwrap();
        let pairs: Vec<_> = approx.iter().map(|a| (a.original.clone(), a.contour.clone())).collect();
        let (depth, mask) = augment_depth_all(&l.depth, &pairs).unwrap();
        let (color, loose) = augment_color(&l.color, &depth, &mask).unwrap();
        assert_eq!(loose, 0);
        let (w, h) = (l.depth.width, l.depth.height);
        for i in 0..w * h {
            if mask.flags[i] == Change::Unchanged {
                continue;
            }
            // donors are the untouched pixels of the layer the pixel joined
            let mut lo = [255u8; 3];
            let mut hi = [0u8; 3];
            for j in 0..w * h {
                if mask.flags[j] == Change::Unchanged && depth.samples[j] == mask.new[i] {
                    for k in 0..3 {
                        lo[k] = lo[k].min(l.color.samples[3 * j + k]);
                        hi[k] = hi[k].max(l.color.samples[3 * j + k]);
                    }
                }
            }
            for k in 0..3 {
                let v = color.samples[3 * i + k];
                assert!(v as i32 >= lo[k] as i32 - 1 && v as i32 <= hi[k] as i32 + 1, "pixel {i}");
            }
        }
    }
}

#[test]
fn warping_there_and_back_restores_surviving_pixels() {
    let (l, _, cfg) = scene(3, 1);
    for alpha in [0.25, 0.5, 1.0] {
        let there = warp_view(&l.depth, &l.color, alpha, -1, cfg.disparity_scale).unwrap();
        let back = there.warp(alpha, 1, cfg.disparity_scale);
        let (w, h) = (l.depth.width, l.depth.height);
        let mut kept = 0;
        for i in 0..w * h {
            if back.holes[i] {
                continue;
            }
            kept += 1;
            assert_eq!(back.depth.samples[i], l.depth.samples[i]);
            assert_eq!(back.color.samples[3 * i..3 * i + 3], l.color.samples[3 * i..3 * i + 3]);
        }
        assert!(kept > w * h / 2);
    }
}

#[test]
fn interview_penalty_keeps_projected_edges() {
    let (mut rows, mut moved) = (0, 0);
    for seed in 0..10 {
        let (l, r, mut cfg) = scene(seed, 2);
        cfg.approx.lambda = 8.0;
        let out = approximate_stereo(&l, &r, &cfg).unwrap();
        for a in &out.right_contours {
            for (reference, approx) in &a.units {
                let (e0, e1) = (reference.vertical_edges(), approx.vertical_edges());
                rows += e0.len();
                moved += e0.iter().zip(&e1).filter(|(x, y)| x != y).count();
            }
        }
    }
    assert!(rows > 0);
    assert!(moved * 100 <= rows, "{moved} of {rows} rows moved");
}

#[test]
fn zero_disparity_pair_gets_the_same_mask_in_both_views() {
    let (l, _, mut cfg) = scene(4, 2);
    // every disparity rounds to zero, so the right view equals the left one
    cfg.disparity_scale = 1e-6;
    cfg.approx.lambda = 4.0;
    let out = approximate_stereo(&l, &l, &cfg).unwrap();
    assert!(!out.left_mask.is_empty());
    assert_eq!(out.right_mask.flags, out.left_mask.flags);
    assert_eq!(out.right.depth, out.left.depth);
}

#[test]
fn single_view_rate_does_not_grow_with_lambda() {
    for seed in 0..30 {
        let (l, _, mut cfg) = scene(seed, 2);
        cfg.approx.merge = false;
        let contours = detect_contours(&l.depth, cfg.threshold);
        let luma = depthshape::swim::Luma::of(&l.color);
        let shift = depthshape::approx::ShiftCost::new(&luma, cfg.approx.swim, 0.0);
        let mut bits = Vec::new();
        for lambda in [0.0, 0.5, 2.0, 8.0, 32.0] {
            cfg.approx.lambda = lambda;
            let approx = depthshape::approx::approximate_contours(&contours, &shift, &cfg.approx).unwrap();
            bits.push(approx.iter().map(|a| a.cost.rate).sum::<f64>());
        }
        // segments are searched one at a time, so a larger lambda can cost a
        // little more through the context of the segments that follow
        assert!(bits[1..].iter().all(|&b| b < bits[0]), "seed {seed}: {bits:?}");
        assert!(bits.windows(2).all(|w| w[1] <= w[0] * 1.02), "seed {seed}: {bits:?}");
    }
}

#[test]
fn stereo_bits_fall_over_the_sweep() {
    for seed in 0..4 {
        let (l, r, mut cfg) = scene(seed, 2);
        cfg.lambdas = vec![0.0, 32.0];
        let rows = run_sweep(&l, &r, &cfg).unwrap();
        let bits: Vec<usize> = rows.iter().map(|(_, x)| x.as_ref().unwrap().contour_bits).collect();
        assert!(bits[1] < bits[0], "seed {seed}: {bits:?}");
    }
}
