//! Browser bindings for three interactive operations: next-edge
//! probabilities of a chain, Laplace fits compared by their KS distance,
//! and contour approximation of a synthetic scene drawn as an overlay.
//!
//! The plain Rust versions live in [`ops`] so they run and test natively;
//! the exported functions only convert errors for JavaScript.

use wasm_bindgen::prelude::*;

pub mod ops {
    use depthshape::aec::{self, AecParams};
    use depthshape::approx::{approximate_contours, ShiftCost};
    use depthshape::config::PipelineConfig;
    use depthshape::contour::{detect_contours, Contour, CrackPoint, Dir, EdgeMap};
    use depthshape::image_io::{build_scene, SceneSpec};
    use depthshape::swim::{laplace_ks, LaplaceModel, Luma};

    /// Probabilities of turning left, going straight and turning right after
    /// a chain of `E`, `S`, `W`, `N` letters, then the bits the chain costs.
    pub fn next_edge(chain: &str, context_len: usize, kappa: f64, omega: f64) -> Result<Vec<f64>, String> {
        let params = AecParams::new(context_len, kappa, omega).map_err(|e| e.to_string())?;
        let dirs = chain
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| Dir::from_letter(c.to_ascii_uppercase()).ok_or(format!("`{c}` is not one of E, S, W, N")))
            .collect::<Result<Vec<_>, _>>()?;
        if dirs.is_empty() {
            return Err("the chain is empty".into());
        }
        let contour = Contour::from_dirs(CrackPoint::new(0, 0), &dirs).map_err(|e| e.to_string())?;
        let head = *contour.points().last().expect("nonempty");
        let dist = aec::distribution_at(dirs.len(), head, &dirs, &params);
        let mut out = dist.probs.to_vec();
        out.push(aec::estimate_rate(&contour, &params));
        Ok(out)
    }

    /// KS distance of two Laplace models followed by both CDFs sampled at
    /// `n` points over `[-range, range]`.
    pub fn laplace_curves(sigma_a: f64, sigma_b: f64, range: f64, n: usize) -> Result<Vec<f64>, String> {
        let a = LaplaceModel::new(sigma_a).map_err(|e| e.to_string())?;
        let b = LaplaceModel::new(sigma_b).map_err(|e| e.to_string())?;
        if !(range > 0.0) || n < 2 {
            return Err("need a positive range and at least two samples".into());
        }
        let xs: Vec<f64> = (0..n).map(|i| -range + 2.0 * range * i as f64 / (n - 1) as f64).collect();
        let mut out = vec![laplace_ks(a, b)];
        out.extend(xs.iter().map(|&x| a.cdf(x)));
        out.extend(xs.iter().map(|&x| b.cdf(x)));
        Ok(out)
    }

    /// One view of a synthetic scene with its contours approximated.
    pub struct Overlay {
        pub width: usize,
        pub height: usize,
        /// Color image with original edges in red, approximated ones in
        /// green and shared ones in yellow.
        pub rgba: Vec<u8>,
        pub contours: usize,
        pub bits_before: f64,
        pub bits_after: f64,
        pub distortion: f64,
    }

    pub fn approximate_scene(seed: u64, jitter: u32, lambda: f64) -> Result<Overlay, String> {
        let spec = SceneSpec {
            jitter,
            shapes: 2,
            width: 128,
            ..SceneSpec::default()
        };
        let scene = build_scene(seed, &spec).map_err(|e| e.to_string())?;
        let view = scene.left();
        let mut cfg = PipelineConfig::default();
        cfg.approx.lambda = lambda;
        cfg.approx.validate().map_err(|e| e.to_string())?;
        let contours = detect_contours(&view.depth, cfg.threshold);
        let luma = Luma::of(&view.color);
        let shift = ShiftCost::new(&luma, cfg.approx.swim, 0.0);
        let approx = approximate_contours(&contours, &shift, &cfg.approx).map_err(|e| e.to_string())?;
        let after: Vec<Contour> = approx.iter().map(|a| a.contour.clone()).collect();

        let (w, h) = (view.depth.width, view.depth.height);
        let om = EdgeMap::from_contours(w, h, &contours);
        let am = EdgeMap::from_contours(w, h, &after);
        let touches = |m: &EdgeMap, r: usize, c: usize| m.vertical(r, c) || m.vertical(r, c + 1) || m.horizontal(r, c) || m.horizontal(r + 1, c);
        let mut rgba = Vec::with_capacity(4 * w * h);
        for r in 0..h {
            for c in 0..w {
                let px = match (touches(&om, r, c), touches(&am, r, c)) {
                    (true, true) => [255, 220, 0],
                    (true, false) => [230, 30, 30],
                    (false, true) => [30, 200, 60],
                    (false, false) => view.color.get(r, c).map(|v| v / 2 + 40),
                };
                rgba.extend_from_slice(&px);
                rgba.push(255);
            }
        }
        let bits = |cs: &[Contour]| cs.iter().map(|c| aec::estimate_rate(c, &cfg.approx.aec)).sum::<f64>();
        Ok(Overlay {
            width: w,
            height: h,
            rgba,
            contours: contours.len(),
            bits_before: bits(&contours),
            bits_after: bits(&after),
            distortion: approx.iter().map(|a| a.cost.distortion).sum(),
        })
    }
}

/// `[p_left, p_straight, p_right, chain_bits]` for the next edge of a chain.
#[wasm_bindgen(js_name = nextEdge)]
pub fn next_edge(chain: &str, context_len: usize, kappa: f64, omega: f64) -> Result<Vec<f64>, JsError> {
    ops::next_edge(chain, context_len, kappa, omega).map_err(|e| JsError::new(&e))
}

/// `[ks, cdf_a..., cdf_b...]` for two Laplace scales.
#[wasm_bindgen(js_name = laplaceCurves)]
pub fn laplace_curves(sigma_a: f64, sigma_b: f64, range: f64, n: usize) -> Result<Vec<f64>, JsError> {
    ops::laplace_curves(sigma_a, sigma_b, range, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub struct SceneOverlay(ops::Overlay);

#[wasm_bindgen]
impl SceneOverlay {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.0.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn rgba(&self) -> Vec<u8> {
        self.0.rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn contours(&self) -> usize {
        self.0.contours
    }

    #[wasm_bindgen(getter, js_name = bitsBefore)]
    pub fn bits_before(&self) -> f64 {
        self.0.bits_before
    }

    #[wasm_bindgen(getter, js_name = bitsAfter)]
    pub fn bits_after(&self) -> f64 {
        self.0.bits_after
    }

    #[wasm_bindgen(getter)]
    pub fn distortion(&self) -> f64 {
        self.0.distortion
    }
}

/// Approximates the left view of a seeded two-object scene at `lambda`.
#[wasm_bindgen(js_name = approximateScene)]
pub fn approximate_scene(seed: u32, jitter: u32, lambda: f64) -> Result<SceneOverlay, JsError> {
    ops::approximate_scene(seed as u64, jitter, lambda)
        .map(SceneOverlay)
        .map_err(|e| JsError::new(&e))
}
