//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use depthshape::aec::{self, AecParams};
use depthshape::approx::{
    approximate_segment, evaluate_path, solve_segment, ApproxConfig, CodingContext, Constraints, ShiftCost,
    SegmentProblem,
};
use depthshape::augment::{approximate_stereo, synthesize_view, StereoOutput};
use depthshape::config::PipelineConfig;
use depthshape::contour::{detect_contours, Contour, CrackPoint, Dir, Segment, Turn};
use depthshape::harness::{cmd_sweep, run_sweep};
use depthshape::image_io::{build_scene, ColorImage, SceneSpec, ViewPair};
use depthshape::swim::{
    block_proxy_pairs, laplace_fit, laplace_ks, row_split_bound, CoeffMatrix, LaplaceModel, Luma, SwimConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(t: Instant, limit: Duration) -> (bool, String) {
    let e = t.elapsed();
    (e < limit, format!("{:.2}s of {}s", e.as_secs_f64(), limit.as_secs()))
}

// ---------------------------------------------------------------------------
// Shared generators
// ---------------------------------------------------------------------------

fn random_contour(rng: &mut ChaCha8Rng, max_len: usize) -> Contour {
    let start = CrackPoint::new(rng.gen_range(0..400), rng.gen_range(0..400));
    let first = Dir::ALL[rng.gen_range(0..4)];
    let n = rng.gen_range(1..=max_len);
    let rest: Vec<Turn> = (1..n).map(|_| Turn::ALL[rng.gen_range(0..3)]).collect();
    Contour { start, first, rest }
}

/// Vertical bars of random width and shade on a noisy background.
fn textured(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ColorImage {
    let mut img = ColorImage::filled(w, h, [0, 0, 0]);
    let mut c = 0;
    while c < w {
        let run = rng.gen_range(1..6);
        let shade: u8 = rng.gen_range(20..235);
        for x in c..(c + run).min(w) {
            for r in 0..h {
                let v = shade.saturating_add(rng.gen_range(0..12));
                img.set(r, x, [v, v, v]);
            }
        }
        c += run;
    }
    img
}

fn random_segment(rng: &mut ChaCha8Rng, t: usize, origin: CrackPoint) -> Segment {
    let vertical = if rng.gen_bool(0.5) { Dir::South } else { Dir::North };
    let horizontal = if rng.gen_bool(0.5) { Dir::East } else { Dir::West };
    let v = rng.gen_range(1..t);
    let mut dirs = vec![horizontal; t];
    for i in rand::seq::index::sample(rng, t, v) {
        dirs[i] = vertical;
    }
    Segment::new(origin, dirs).expect("two directions")
}

fn random_context(rng: &mut ChaCha8Rng, seg: &Segment, k: usize) -> CodingContext {
    if rng.gen_bool(0.3) {
        return CodingContext::default();
    }
    // a short history that ends in one of the segment's directions
    let last = if rng.gen_bool(0.5) { seg.pair.vertical } else { seg.pair.horizontal };
    let mut recent = vec![last];
    while recent.len() < k {
        let prev = *recent.first().expect("nonempty");
        let options: Vec<Dir> = Dir::ALL.into_iter().filter(|d| *d != prev.opposite()).collect();
        recent.insert(0, options[rng.gen_range(0..options.len())]);
    }
    CodingContext {
        recent,
        edges_before: rng.gen_range(k..40),
    }
}

fn random_constraints(rng: &mut ChaCha8Rng, seg: &Segment) -> Constraints {
    let pick = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.5) {
            seg.pair.vertical
        } else {
            seg.pair.horizontal
        }
    };
    if rng.gen_bool(0.6) {
        return Constraints::default();
    }
    Constraints {
        first: rng.gen_bool(0.5).then(|| pick(rng)),
        last: rng.gen_bool(0.5).then(|| pick(rng)),
        next_first: rng.gen_bool(0.5).then(|| pick(rng)),
    }
}

fn scene_pair(seed: u64, jitter: u32) -> (ViewPair, ViewPair, PipelineConfig) {
    let spec = SceneSpec {
        jitter,
        ..SceneSpec::default()
    };
    let scene = build_scene(seed, &spec).expect("scene");
    let cfg = PipelineConfig {
        disparity_scale: spec.disparity_scale(),
        ..PipelineConfig::default()
    };
    (scene.left(), scene.right(), cfg)
}

fn stereo(seed: u64, jitter: u32, lambda: f64) -> (ViewPair, ViewPair, PipelineConfig, StereoOutput) {
    let (l, r, mut cfg) = scene_pair(seed, jitter);
    cfg.approx.lambda = lambda;
    let out = approximate_stereo(&l, &r, &cfg).expect("stereo approximation");
    (l, r, cfg, out)
}

fn pearson(v: &[(f64, f64)]) -> f64 {
    let n = v.len() as f64;
    let mx = v.iter().map(|p| p.0).sum::<f64>() / n;
    let my = v.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in v {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

fn codec_roundtrip() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = AecParams::default();
    let (mut mismatched, mut over, mut worst) = (0, 0, f64::NEG_INFINITY);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=4);
        let set: Vec<Contour> = (0..n).map(|_| random_contour(&mut rng, 200)).collect();
        let stream = aec::encode(&set, &params).expect("encode");
        if aec::decode(&stream, &params).ok().as_ref() != Some(&set) {
            mismatched += 1;
        }
        let ideal: f64 = set.iter().map(|c| aec::estimate_rate(c, &params)).sum();
        let coded = aec::coded_symbol_bits(&set, &params) as f64;
        worst = worst.max(coded - ideal);
        if coded > ideal * 1.01 + 16.0 {
            over += 1;
        }
    }
    let (fast, time) = within(t, Duration::from_secs(10));
    outcome(
        mismatched == 0 && over == 0 && fast,
        format!("{mismatched} mismatches, {over} over budget, worst excess {worst:.2} bits, {time}"),
    )
}

fn mle_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..200);
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        // independent oracle: running mean in reverse order
        let oracle = v.iter().rev().enumerate().fold(0.0, |m, (i, x)| m + (x.abs() - m) / (i + 1) as f64);
        worst = worst.max((laplace_fit(&v).expect("fit").sigma - oracle).abs());
    }
    let mut beaten = 0;
    for _ in 0..100 {
        let v: Vec<f64> = (0..rng.gen_range(5..100)).map(|_| rng.gen_range(-20.0..20.0)).collect();
        let m = laplace_fit(&v).expect("fit");
        let ll = m.log_likelihood(&v);
        for d in [-1e-3, 1e-3] {
            if LaplaceModel::new(m.sigma + d).expect("positive").log_likelihood(&v) >= ll {
                beaten += 1;
            }
        }
    }
    outcome(
        worst <= 1e-12 && beaten == 0,
        format!("max |fit - mean| {worst:.1e}, {beaten} perturbations beat the fit"),
    )
}

/// Twice the largest CDF gap on a coarse grid over `c >= 0`, refined by a
/// second grid around the best coarse point.
fn ks_grid_oracle(a: f64, b: f64) -> f64 {
    let (la, lb) = (LaplaceModel::new(a).unwrap(), LaplaceModel::new(b).unwrap());
    let gap = |c: f64| (la.cdf(c) - lb.cdf(c)).abs();
    let span = 40.0 * a.max(b);
    let n = 100_000;
    let h = span / n as f64;
    let (mut best_c, mut best) = (0.0, 0.0);
    for i in 0..=n {
        let c = i as f64 * h;
        if gap(c) > best {
            best = gap(c);
            best_c = c;
        }
    }
    let lo = (best_c - h).max(0.0);
    for i in 0..=n {
        best = best.max(gap(lo + 2.0 * h * i as f64 / n as f64));
    }
    2.0 * best
}

fn ks_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (a, b) = (rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0));
        let got = laplace_ks(LaplaceModel::new(a).unwrap(), LaplaceModel::new(b).unwrap());
        worst = worst.max((got - ks_grid_oracle(a, b)).abs());
    }
    let pinned = laplace_ks(LaplaceModel::new(1.0).unwrap(), LaplaceModel::new(2.0).unwrap());
    outcome(
        worst <= 1e-6 && pinned == 0.25,
        format!("max deviation {worst:.1e}, ks(1,2) = {pinned}"),
    )
}

fn upper_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = SwimConfig::default();
    let mut violations = 0;
    let mut slack = f64::INFINITY;
    for _ in 0..1000 {
        let a = Luma::of(&textured(&mut rng, cfg.block, cfg.block));
        let b = Luma::of(&textured(&mut rng, cfg.block, cfg.block));
        let (ca, cb): (CoeffMatrix, CoeffMatrix) = (a.block_coeffs(0, 0, cfg.block), b.block_coeffs(0, 0, cfg.block));
        let (joint, split) = row_split_bound(&ca, &cb, cfg.bins);
        if joint > split + 1e-12 {
            violations += 1;
        }
        slack = slack.min(split - joint);
    }
    outcome(violations == 0, format!("{violations} violations in 1000 block pairs, min slack {slack:.3}"))
}

fn dp_optimality() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = AecParams::default();
    let swim = SwimConfig::default();
    let (mut wrong, mut worst, mut finite) = (0, 0.0f64, 0);
    for _ in 0..200 {
        let img = textured(&mut rng, 64, 48);
        let luma = Luma::of(&img);
        let len = rng.gen_range(2..=12);
        let origin = CrackPoint::new(rng.gen_range(16..24), rng.gen_range(20..36));
        let seg = random_segment(&mut rng, len, origin);
        let ctx = random_context(&mut rng, &seg, params.context_len);
        let problem = SegmentProblem::new(seg.clone(), ctx).with_constraints(random_constraints(&mut rng, &seg));
        let lambda = [0.0, 0.1, 1.0, 10.0][rng.gen_range(0..4)];
        let shift = ShiftCost::new(&luma, swim, 0.0);
        let dp = solve_segment(&problem, &shift, lambda, &params).expect("dp").cost.total;
        let v = seg.vertical_count();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << len) {
            if mask.count_ones() as usize != v {
                continue;
            }
            let dirs: Vec<Dir> = (0..len)
                .map(|i| if mask >> i & 1 == 1 { seg.pair.vertical } else { seg.pair.horizontal })
                .collect();
            if let Some(c) = evaluate_path(&problem, &dirs, &shift, lambda, &params).expect("evaluate") {
                best = best.min(c.total);
            }
        }
        let same = if best.is_finite() {
            finite += 1;
            let e = (dp - best).abs();
            worst = worst.max(e);
            e <= 1e-9
        } else {
            true
        };
        if !same {
            wrong += 1;
        }
    }
    let (fast, time) = within(t, Duration::from_secs(60));
    outcome(
        wrong == 0 && fast,
        format!("{wrong} of 200 differ ({finite} with a feasible path), max gap {worst:.1e}, {time}"),
    )
}

fn lagrangian_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let params = AecParams::default();
    let swim = SwimConfig::default();
    let mut violations = 0;
    for _ in 0..50 {
        let img = textured(&mut rng, 64, 64);
        let luma = Luma::of(&img);
        let len = rng.gen_range(4..=24);
        let origin = CrackPoint::new(rng.gen_range(10..20), rng.gen_range(14..24));
        let seg = random_segment(&mut rng, len, origin);
        let ctx = random_context(&mut rng, &seg, params.context_len);
        let problem = SegmentProblem::new(seg, ctx);
        let shift = ShiftCost::new(&luma, swim, 0.0);
        let mut prev: Option<(f64, f64)> = None;
        for lambda in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let c = solve_segment(&problem, &shift, lambda, &params).expect("dp").cost;
            if let Some((r, d)) = prev {
                if c.rate > r + 1e-9 || c.distortion < d - 1e-9 {
                    violations += 1;
                }
            }
            prev = Some((c.rate, c.distortion));
        }
    }
    outcome(violations == 0, format!("{violations} violations over 50 segments x 6 lambdas"))
}

fn proxy_trend() -> Outcome {
    let t = Instant::now();
    let mut pairs = Vec::new();
    for seed in 0..40 {
        let (l, r, cfg, out) = stereo(seed, 1, 8.0);
        for alpha in [0.25, 0.5, 0.75] {
            let reference = synthesize_view(&l, &r, alpha, cfg.disparity_scale).expect("reference");
            let synth = synthesize_view(&out.left, &out.right, alpha, cfg.disparity_scale).expect("synth");
            let blocks = block_proxy_pairs(&synth, &reference, &cfg.approx.swim).expect("pairs");
            // blocks where both measures vanish carry no information
            pairs.extend(blocks.into_iter().filter(|p| p.0 > 0.0 || p.1 > 0.0));
        }
    }
    let r = pearson(&pairs);
    let (fast, time) = within(t, Duration::from_secs(120));
    outcome(
        pairs.len() >= 300 && r >= 0.4 && fast,
        format!("Pearson {r:.3} over {} blocks, {time}", pairs.len()),
    )
}

fn structural_preservation() -> Outcome {
    let (mut units, mut bad_units, mut contours, mut bad_contours, mut grew) = (0, 0, 0, 0, 0);
    for seed in 0..20 {
        for (jitter, lambda) in [(1, 1.0), (2, 8.0), (2, 32.0)] {
            let (.., out) = stereo(seed, jitter, lambda);
            for a in out.left_contours.iter().chain(&out.right_contours) {
                contours += 1;
                if a.contour.start != a.original.start || a.contour.end() != a.original.end() {
                    bad_contours += 1;
                }
                if a.units.len() > a.segments_before {
                    grew += 1;
                }
                for (reference, approx) in &a.units {
                    units += 1;
                    if reference.start != approx.start
                        || reference.end() != approx.end()
                        || reference.len() != approx.len()
                        || reference.vertical_count() != approx.vertical_count()
                    {
                        bad_units += 1;
                    }
                }
            }
        }
    }
    outcome(
        bad_units == 0 && bad_contours == 0 && grew == 0,
        format!("{bad_units}/{units} segments, {bad_contours}/{contours} contours changed shape, {grew} with M' > M"),
    )
}

fn coding_gain() -> Outcome {
    let (mut good, mut fewer_bits, mut worst, mut sum) = (0, 0, 0.0f64, 0.0);
    for seed in 0..50 {
        let (l, r, mut cfg) = scene_pair(seed, 2);
        cfg.lambdas = vec![0.0, 8.0];
        let rows = run_sweep(&l, &r, &cfg).expect("sweep");
        let base = rows[0].1.as_ref().expect("lambda 0");
        let high = rows[1].1.as_ref().expect("lambda 8");
        let drop = base.swim_s - high.swim_s;
        worst = worst.max(drop);
        sum += drop;
        let cheaper = high.contour_bits < base.contour_bits;
        fewer_bits += cheaper as usize;
        good += (cheaper && drop <= 0.05) as usize;
    }
    outcome(
        good >= 45,
        format!(
            "{good}/50 scenes cheaper with S drop <= 0.05 ({fewer_bits}/50 cheaper), mean S drop {:.4}, worst {worst:.4}",
            sum / 50.0
        ),
    )
}

fn median_time(mut f: impl FnMut(), reps: usize) -> f64 {
    let mut v: Vec<f64> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .collect();
    v.sort_by(f64::total_cmp);
    v[reps / 2]
}

fn complexity_scaling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let img = textured(&mut rng, 64, 300);
    let luma = Luma::of(&img);
    let staircase = |v: usize, h: usize| {
        // vertical edges spread evenly among the horizontal ones
        let dirs: Vec<Dir> = (0..v + h)
            .map(|i| if (i + 1) * h / (v + h) > i * h / (v + h) { Dir::East } else { Dir::South })
            .collect();
        Segment::new(CrackPoint::new(10, 24), dirs).expect("segment")
    };
    let run = |seg: &Segment, window: usize| {
        let cfg = ApproxConfig {
            swim: SwimConfig { window, ..SwimConfig::default() },
            ..ApproxConfig::default().with_lambda(1.0)
        };
        let luma = &luma;
        let seg = seg.clone();
        move || {
            approximate_segment(&seg, &CodingContext::default(), luma, &cfg).expect("approximate");
        }
    };
    let (a, b) = (staircase(64, 8), staircase(128, 8));
    let reps = 9;
    let t_v = median_time(run(&a, 10), reps);
    let t_2v = median_time(run(&b, 10), reps);
    let t_2w = median_time(run(&a, 20), reps);
    let (rv, rw) = (t_2v / t_v, t_2w / t_v);
    outcome(
        rv <= 2.5 && rw <= 2.5,
        format!("2V: {rv:.2}x, 2W: {rw:.2}x (base {:.2} ms, median of {reps})", t_v * 1e3),
    )
}

fn redetection() -> Outcome {
    let (mut views, mut bad) = (0, 0);
    for seed in 0..30 {
        for (jitter, lambda) in [(1, 1.0), (2, 8.0), (2, 32.0)] {
            let (.., cfg, out) = stereo(seed, jitter, lambda);
            let (lc, rc) = out.contours();
            for (view, contours) in [(&out.left, lc), (&out.right, rc)] {
                views += 1;
                if detect_contours(&view.depth, cfg.threshold) != contours {
                    bad += 1;
                }
            }
        }
    }
    outcome(bad == 0, format!("{bad}/{views} views differ"))
}

fn determinism() -> Outcome {
    let (l, r, mut cfg) = scene_pair(7, 2);
    cfg.lambdas = vec![0.0, 1.0, 4.0, 16.0];
    let a = cmd_sweep(&l, &r, &cfg).expect("sweep");
    let b = cmd_sweep(&l, &r, &cfg).expect("sweep");
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
    let c = pool.install(|| cmd_sweep(&l, &r, &cfg).expect("sweep"));
    outcome(a == b && b == c, format!("{} bytes, identical across 3 runs: {}", a.len(), a == b && b == c))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("codec roundtrip", codec_roundtrip),
        ("MLE exactness", mle_exactness),
        ("closed-form KS vs grid oracle", ks_closed_form),
        ("row-split upper bound", upper_bound),
        ("DP optimality", dp_optimality),
        ("Lagrangian monotonicity", lagrangian_monotonicity),
        ("proxy trend", proxy_trend),
        ("structural preservation", structural_preservation),
        ("coding gain", coding_gain),
        ("complexity scaling", complexity_scaling),
        ("re-detection round trip", redetection),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        failed += !o.pass as usize;
        println!("criterion {:>2} {}: {} ({})", i + 1, name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
