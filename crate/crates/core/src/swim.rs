//! Synthesized-view quality: the wavelet-histogram block metric and the
//! Laplace-model row distortion used as its optimization proxy.
//!
//! The metric splits a synthesized image into `N x N` blocks, matches each
//! against the reference within a horizontal window of `+-W` pixels, takes a
//! full Haar decomposition of every block row and compares the coefficient
//! histograms of the two blocks with a Kolmogorov-Smirnov distance.

use crate::error::{Error, Result};
use crate::image_io::ColorImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwimConfig {
    /// Block size `N`, a power of two.
    pub block: usize,
    /// Half search window `W` in pixels.
    pub window: usize,
    /// Histogram bin count `L`.
    pub bins: usize,
    /// Normalization constant `D0`; `None` divides by the block count.
    pub d0: Option<f64>,
}

impl Default for SwimConfig {
    fn default() -> Self {
        Self {
            block: 16,
            window: 10,
            bins: 10,
            d0: None,
        }
    }
}

impl SwimConfig {
    pub fn new(block: usize, window: usize, bins: usize, d0: Option<f64>) -> Result<Self> {
        if block < 2 || !block.is_power_of_two() {
            return Err(Error::Config(format!("block size {block} is not a power of two >= 2")));
        }
        if bins == 0 {
            return Err(Error::Config("bin count must be at least 1".into()));
        }
        if let Some(d) = d0 {
            if !(d > 0.0) {
                return Err(Error::Config("D0 must be positive".into()));
            }
        }
        Ok(Self {
            block,
            window,
            bins,
            d0,
        })
    }
}

/// Orthonormal multi-level Haar transform of a row of length `2^m`,
/// returning the `2^m - 1` detail coefficients, finest level first.
pub fn haar_row(row: &[f64]) -> Result<Vec<f64>> {
    let n = row.len();
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::Invalid(format!("Haar transform needs a power-of-two length, got {n}")));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut approx = row.to_vec();
    let mut out = Vec::with_capacity(n - 1);
    while approx.len() > 1 {
        let next: Vec<f64> = approx.chunks_exact(2).map(|p| (p[0] + p[1]) * s).collect();
        out.extend(approx.chunks_exact(2).map(|p| (p[0] - p[1]) * s));
        approx = next;
    }
    Ok(out)
}

/// `N` rows of `N - 1` detail coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffMatrix {
    pub rows: Vec<Vec<f64>>,
}

impl CoeffMatrix {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().flatten().copied()
    }
}

/// Luma plane with its dimensions.
#[derive(Debug, Clone)]
pub struct Luma {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Luma {
    pub fn of(img: &ColorImage) -> Self {
        Self {
            width: img.width,
            height: img.height,
            data: img.luma_plane(),
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    pub fn row(&self, r: usize, c0: usize, n: usize) -> &[f64] {
        let i = r * self.width + c0;
        &self.data[i..i + n]
    }

    /// Haar details of each row of the `n x n` block at `(r, c)`.
    pub fn block_coeffs(&self, r: usize, c: usize, n: usize) -> CoeffMatrix {
        CoeffMatrix {
            rows: (r..r + n)
                .map(|i| haar_row(self.row(i, c, n)).expect("power-of-two block"))
                .collect(),
        }
    }
}

/// Column offset `k` and mean squared error of the reference block at
/// `(r, c + k)`, `|k| <= W`, closest to the target block at `(r, c)`. Ties go
/// to the smallest `|k|`, then the smallest `k`.
pub fn best_match(target: &Luma, reference: &Luma, r: usize, c: usize, cfg: &SwimConfig) -> Result<(i64, f64)> {
    let n = cfg.block;
    if r + n > target.height || c + n > target.width {
        return Err(Error::Invalid(format!("block at ({r},{c}) exceeds the image")));
    }
    let w = cfg.window as i64;
    let mut order: Vec<i64> = (-w..=w).collect();
    order.sort_by_key(|&k| (k.abs(), k));
    let mut best: Option<(i64, f64)> = None;
    for k in order {
        let cc = c as i64 + k;
        if cc < 0 || cc as usize + n > reference.width || r + n > reference.height {
            continue;
        }
        let cc = cc as usize;
        let mut sse = 0.0;
        for i in r..r + n {
            for (a, b) in target.row(i, c, n).iter().zip(reference.row(i, cc, n)) {
                sse += (a - b) * (a - b);
            }
        }
        let mse = sse / (n * n) as f64;
        if best.is_none_or(|(_, m)| mse < m) {
            best = Some((k, mse));
        }
    }
    best.ok_or_else(|| Error::Invalid(format!("no in-bounds candidate for block ({r},{c})")))
}

/// Cumulative normalized histogram of `values` on `bins` equal bins spanning
/// `[lo, hi]`; values equal to `hi` land in the last bin.
pub fn histogram_cdf(values: impl Iterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut h = vec![0usize; bins];
    let mut n = 0usize;
    let tau = (hi - lo) / bins as f64;
    for v in values {
        let idx = if tau > 0.0 {
            (((v - lo) / tau).floor() as i64).clamp(0, bins as i64 - 1) as usize
        } else {
            0
        };
        h[idx] += 1;
        n += 1;
    }
    let mut acc = 0usize;
    h.into_iter()
        .map(|c| {
            acc += c;
            if n == 0 {
                0.0
            } else {
                acc as f64 / n as f64
            }
        })
        .collect()
}

/// Kolmogorov-Smirnov distance between the coefficient histograms of two
/// blocks on a shared bin grid spanning both.
pub fn block_distortion(synth: &CoeffMatrix, reference: &CoeffMatrix, bins: usize) -> f64 {
    let (lo, hi) = synth
        .values()
        .chain(reference.values())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return 0.0;
    }
    let fs = histogram_cdf(synth.values(), lo, hi, bins);
    let fo = histogram_cdf(reference.values(), lo, hi, bins);
    fs.iter().zip(&fo).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Both sides of the bound that turns a block distortion into a sum of row
/// distortions, on the block's shared bin grid: the largest gap between the
/// row-summed CDFs, and the sum over rows of each row's largest gap.
pub fn row_split_bound(synth: &CoeffMatrix, reference: &CoeffMatrix, bins: usize) -> (f64, f64) {
    let (lo, hi) = synth
        .values()
        .chain(reference.values())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let mut joint = vec![0.0; bins];
    let mut split = 0.0;
    for (a, b) in synth.rows.iter().zip(&reference.rows) {
        let fs = histogram_cdf(a.iter().copied(), lo, hi, bins);
        let fo = histogram_cdf(b.iter().copied(), lo, hi, bins);
        let mut gap = 0.0f64;
        for j in 0..bins {
            joint[j] += fo[j] - fs[j];
            gap = gap.max((fo[j] - fs[j]).abs());
        }
        split += gap;
    }
    (joint.iter().map(|x| x.abs()).fold(0.0, f64::max), split)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwimScore {
    /// Normalized distortion `d`.
    pub d: f64,
    /// Quality score `1 / (1 + d)`.
    pub s: f64,
    /// Number of blocks that contributed.
    pub blocks: usize,
    /// `D_b` of each block in raster order.
    pub block_distortions: Vec<f64>,
}

fn check_pair(synth: &ColorImage, reference: &ColorImage, cfg: &SwimConfig) -> Result<()> {
    if synth.width != reference.width || synth.height != reference.height {
        return Err(Error::Dimension("synthesized and reference images differ in size".into()));
    }
    if synth.width < cfg.block || synth.height < cfg.block {
        return Err(Error::Dimension(format!(
            "image {}x{} is smaller than one {}x{} block",
            synth.width, synth.height, cfg.block, cfg.block
        )));
    }
    Ok(())
}

/// Scores a synthesized image against a reference.
pub fn swim_score(synth: &ColorImage, reference: &ColorImage, cfg: &SwimConfig) -> Result<SwimScore> {
    check_pair(synth, reference, cfg)?;
    let (ls, lr) = (Luma::of(synth), Luma::of(reference));
    let n = cfg.block;
    let mut per = Vec::new();
    for r in (0..=synth.height - n).step_by(n) {
        for c in (0..=synth.width - n).step_by(n) {
            let (k, _) = best_match(&ls, &lr, r, c, cfg)?;
            let cs = ls.block_coeffs(r, c, n);
            let co = lr.block_coeffs(r, (c as i64 + k) as usize, n);
            per.push(block_distortion(&cs, &co, cfg.bins));
        }
    }
    let d0 = cfg.d0.unwrap_or(per.len() as f64);
    let d = per.iter().sum::<f64>() / d0;
    Ok(SwimScore {
        d,
        s: 1.0 / (1.0 + d),
        blocks: per.len(),
        block_distortions: per,
    })
}

/// Per-block pairs of (metric `D_b`, Laplace proxy summed over rows), both
/// computed on the same best-matched reference block.
pub fn block_proxy_pairs(synth: &ColorImage, reference: &ColorImage, cfg: &SwimConfig) -> Result<Vec<(f64, f64)>> {
    check_pair(synth, reference, cfg)?;
    let (ls, lr) = (Luma::of(synth), Luma::of(reference));
    let n = cfg.block;
    let mut out = Vec::new();
    for r in (0..=synth.height - n).step_by(n) {
        for c in (0..=synth.width - n).step_by(n) {
            let (k, _) = best_match(&ls, &lr, r, c, cfg)?;
            let cs = ls.block_coeffs(r, c, n);
            let co = lr.block_coeffs(r, (c as i64 + k) as usize, n);
            let rows: Vec<f64> = cs
                .rows
                .iter()
                .zip(&co.rows)
                .map(|(a, b)| laplace_ks(laplace_fit(a).expect("nonempty"), laplace_fit(b).expect("nonempty")))
                .collect();
            out.push((block_distortion(&cs, &co, cfg.bins), block_proxy(&rows)));
        }
    }
    Ok(out)
}

/// Laplace scale `sigma` (shape fixed to 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LaplaceModel {
    pub sigma: f64,
}

impl LaplaceModel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::Invalid(format!("negative Laplace scale {sigma}")));
        }
        Ok(Self { sigma })
    }

    pub fn cdf(&self, c: f64) -> f64 {
        if self.sigma == 0.0 {
            return if c < 0.0 { 0.0 } else { 1.0 };
        }
        if c < 0.0 {
            0.5 * (c / self.sigma).exp()
        } else {
            1.0 - 0.5 * (-c / self.sigma).exp()
        }
    }

    /// `sum log f(c_i)` for the zero-mean Laplace density.
    pub fn log_likelihood(&self, coeffs: &[f64]) -> f64 {
        let m = coeffs.len() as f64;
        -m * (2.0 * self.sigma).ln() - coeffs.iter().map(|c| c.abs()).sum::<f64>() / self.sigma
    }
}

/// Maximum-likelihood scale: the mean absolute coefficient.
pub fn laplace_fit(coeffs: &[f64]) -> Result<LaplaceModel> {
    if coeffs.is_empty() {
        return Err(Error::Invalid("cannot fit a Laplace model to no coefficients".into()));
    }
    Ok(LaplaceModel {
        sigma: coeffs.iter().map(|c| c.abs()).sum::<f64>() / coeffs.len() as f64,
    })
}

/// Largest gap between two zero-mean Laplace CDFs, with the common factor
/// 1/2 dropped so the result spans `[0, 1]`:
/// `r^(r/(1-r)) - r^(1/(1-r))` with `r = sigma_min / sigma_max`.
pub fn laplace_ks(a: LaplaceModel, b: LaplaceModel) -> f64 {
    let (lo, hi) = if a.sigma <= b.sigma { (a.sigma, b.sigma) } else { (b.sigma, a.sigma) };
    if hi == lo {
        return 0.0;
    }
    if lo == 0.0 {
        return 1.0;
    }
    let r = lo / hi;
    let span = hi - lo;
    r.powf(lo / span) - r.powf(hi / span)
}

/// Start column of the `N`-pixel window on the fixed block grid that holds
/// the pixel right of crack column `q`.
pub fn window_start(width: usize, q: i64, n: usize) -> usize {
    let col = q.clamp(0, width as i64 - 1) as usize;
    ((col / n) * n).min(width.saturating_sub(n))
}

/// Distortion of moving a vertical edge in pixel row `row` from crack column
/// `q_orig` to `q_new`.
///
/// The original window `u` starts at `window_start`; the window after the
/// move is `u` displaced by `-(q_new - q_orig)`. Near the image sides both
/// windows slide inward together until they fit. Shifts beyond `W`, or too
/// large for any placement, cost `+inf`.
pub fn row_distortion(
    luma: &Luma,
    row: usize,
    window_start: usize,
    q_orig: i64,
    q_new: i64,
    cfg: &SwimConfig,
) -> Result<f64> {
    let n = cfg.block;
    if row >= luma.height {
        return Err(Error::Invalid(format!("row {row} outside image of height {}", luma.height)));
    }
    if window_start + n > luma.width {
        return Err(Error::Invalid(format!(
            "window [{window_start}, {}) exceeds image width {}",
            window_start + n,
            luma.width
        )));
    }
    let k = q_new - q_orig;
    if k == 0 {
        return Ok(0.0);
    }
    if k.unsigned_abs() as usize > cfg.window {
        return Ok(f64::INFINITY);
    }
    let span = (luma.width - n) as i64;
    let (lo, hi) = (k.max(0), span.min(span + k));
    if lo > hi {
        return Ok(f64::INFINITY);
    }
    let ws = (window_start as i64).clamp(lo, hi);
    let u = haar_row(luma.row(row, ws as usize, n))?;
    let v = haar_row(luma.row(row, (ws - k) as usize, n))?;
    Ok(laplace_ks(laplace_fit(&u)?, laplace_fit(&v)?))
}

/// Block proxy: the sum of its row distortions. Infinite rows dominate.
pub fn block_proxy(rows: &[f64]) -> f64 {
    rows.iter().sum()
}
