//! Batch pipeline behind the command line: detection, lambda sweeps,
//! metrics and the contour codec.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::aec;
use crate::augment::{approximate_stereo, synthesize_view};
use crate::config::PipelineConfig;
use crate::contour::{detect_contours, dump_contours, parse_contours};
use crate::error::{Error, Result};
use crate::image_io::{load_color, load_depth, save_color, save_depth, ColorImage, ViewPair};
use crate::swim::{swim_score, SwimConfig};

/// Value reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

pub const CSV_HEADER: [&str; 10] = [
    "lambda",
    "contour_bits",
    "proxy_distortion",
    "swim_d",
    "swim_S",
    "psnr_db",
    "detect_ms",
    "dp_ms",
    "code_ms",
    "synth_ms",
];

/// One operating point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub lambda: f64,
    /// Length of both views' contour bitstreams.
    pub contour_bits: usize,
    pub proxy_distortion: f64,
    /// Mean metric distortion over the intermediate views.
    pub swim_d: f64,
    pub swim_s: f64,
    pub psnr_db: f64,
    pub detect_ms: f64,
    pub dp_ms: f64,
    pub code_ms: f64,
    pub synth_ms: f64,
}

/// PSNR over all color samples, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::Dimension("images differ in size".into()));
    }
    let sse: f64 = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum();
    if sse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    let mse = sse / a.samples.len() as f64;
    Ok((10.0 * (255.0 * 255.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Metric distortion, score, PSNR and block count of `synth` against
/// `reference`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric {
    pub d: f64,
    pub s: f64,
    pub psnr_db: f64,
    pub blocks: usize,
}

pub fn cmd_metric(synth: &ColorImage, reference: &ColorImage, cfg: &SwimConfig) -> Result<Metric> {
    let score = swim_score(synth, reference, cfg)?;
    Ok(Metric {
        d: score.d,
        s: score.s,
        psnr_db: psnr(synth, reference)?,
        blocks: score.blocks,
    })
}

/// Contours of a depth map as dump text, and their count.
pub fn cmd_detect(depth_path: &Path, threshold: u8) -> Result<(String, usize)> {
    let depth = load_depth(depth_path)?;
    let contours = detect_contours(&depth, threshold);
    Ok((dump_contours(&contours), contours.len()))
}

pub fn cmd_encode(dump: &str, cfg: &PipelineConfig) -> Result<Vec<u8>> {
    aec::encode(&parse_contours(dump)?, &cfg.approx.aec)
}

pub fn cmd_decode(bytes: &[u8], cfg: &PipelineConfig) -> Result<String> {
    Ok(dump_contours(&aec::decode(bytes, &cfg.approx.aec)?))
}

/// Views synthesized from the unmodified inputs at every configured
/// position.
pub fn reference_views(left: &ViewPair, right: &ViewPair, cfg: &PipelineConfig) -> Result<Vec<ColorImage>> {
    cfg.alphas
        .iter()
        .map(|&a| synthesize_view(left, right, a, cfg.disparity_scale))
        .collect()
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs one lambda: stereo approximation, coding of the final contours,
/// synthesis at every position and scoring against `references`.
pub fn sweep_point(
    left: &ViewPair,
    right: &ViewPair,
    references: &[ColorImage],
    lambda: f64,
    cfg: &PipelineConfig,
) -> Result<SweepResult> {
    let mut cfg = cfg.clone();
    cfg.approx.lambda = lambda;
    let out = approximate_stereo(left, right, &cfg)?;

    let t = Instant::now();
    let (lc, rc) = out.contours();
    let mut bytes = 0;
    for set in [&lc, &rc] {
        let stream = aec::encode(set, &cfg.approx.aec)?;
        if aec::decode(&stream, &cfg.approx.aec)? != **set {
            return Err(Error::Bitstream("contour bitstream does not decode to its input".into()));
        }
        bytes += stream.len();
    }
    let code_ms = ms(t);

    let t = Instant::now();
    let (mut d, mut db) = (0.0, 0.0);
    for (&alpha, reference) in cfg.alphas.iter().zip(references) {
        let view = synthesize_view(&out.left, &out.right, alpha, cfg.disparity_scale)?;
        let m = cmd_metric(&view, reference, &cfg.approx.swim)?;
        d += m.d;
        db += m.psnr_db;
    }
    let n = cfg.alphas.len().max(1) as f64;
    let (d, db) = (d / n, db / n);
    let synth_ms = ms(t);

    let keep = |x: f64| if cfg.timings { x } else { 0.0 };
    Ok(SweepResult {
        lambda,
        contour_bits: 8 * bytes,
        proxy_distortion: out.distortion(),
        swim_d: d,
        swim_s: 1.0 / (1.0 + d),
        psnr_db: db,
        detect_ms: keep(out.times.detect_ms),
        dp_ms: keep(out.times.dp_ms),
        code_ms: keep(code_ms),
        synth_ms: keep(synth_ms),
    })
}

/// One result per configured lambda, in configuration order. A failing
/// lambda yields its error and does not stop the others.
pub fn run_sweep(left: &ViewPair, right: &ViewPair, cfg: &PipelineConfig) -> Result<Vec<(f64, Result<SweepResult>)>> {
    cfg.validate()?;
    let references = reference_views(left, right, cfg)?;
    Ok(cfg
        .lambdas
        .par_iter()
        .map(|&lambda| (lambda, sweep_point(left, right, &references, lambda, cfg)))
        .collect())
}

/// Sweep table as CSV. Failed rows keep their lambda and leave the other
/// fields empty.
pub fn sweep_csv(rows: &[(f64, Result<SweepResult>)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for (lambda, row) in rows {
        match row {
            Ok(r) => {
                let fields = [
                    r.lambda.to_string(),
                    r.contour_bits.to_string(),
                    r.proxy_distortion.to_string(),
                    r.swim_d.to_string(),
                    r.swim_s.to_string(),
                    r.psnr_db.to_string(),
                    r.detect_ms.to_string(),
                    r.dp_ms.to_string(),
                    r.code_ms.to_string(),
                    r.synth_ms.to_string(),
                ];
                w.write_record(&fields).map_err(io)?;
            }
            Err(e) => {
                log::error!("lambda {lambda}: {e}");
                let mut fields = vec![lambda.to_string()];
                fields.resize(CSV_HEADER.len(), String::new());
                w.write_record(&fields).map_err(io)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub fn cmd_sweep(left: &ViewPair, right: &ViewPair, cfg: &PipelineConfig) -> Result<String> {
    sweep_csv(&run_sweep(left, right, cfg)?)
}

/// File names of a stereo pair inside a directory.
pub const PAIR_FILES: [&str; 4] = ["left.pgm", "left.ppm", "right.pgm", "right.ppm"];

pub fn load_pair(dir: &Path) -> Result<(ViewPair, ViewPair)> {
    let view = |d: &str, c: &str| -> Result<ViewPair> {
        Ok(ViewPair {
            depth: load_depth(dir.join(d))?,
            color: load_color(dir.join(c))?,
        })
    };
    Ok((view(PAIR_FILES[0], PAIR_FILES[1])?, view(PAIR_FILES[2], PAIR_FILES[3])?))
}

pub fn save_pair(dir: &Path, left: &ViewPair, right: &ViewPair) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    save_depth(dir.join(PAIR_FILES[0]), &left.depth)?;
    save_color(dir.join(PAIR_FILES[1]), &left.color)?;
    save_depth(dir.join(PAIR_FILES[2]), &right.depth)?;
    save_color(dir.join(PAIR_FILES[3]), &right.color)
}
