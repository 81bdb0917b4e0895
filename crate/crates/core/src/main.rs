use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use depthshape::config::PipelineConfig;
use depthshape::harness::{cmd_decode, cmd_detect, cmd_encode, cmd_metric, cmd_sweep, load_pair, save_pair};
use depthshape::image_io::{build_scene, load_color, save_color, SceneSpec};
use depthshape::{Error, Result};

#[derive(Parser)]
#[command(name = "depthshape", version, about = "Depth contour coding and rate-distortion approximation")]
struct Cli {
    /// Pipeline config, `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for synthetic scenes; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Trace object contours of a depth map (PGM) into a contour dump.
    Detect {
        depth: PathBuf,
        #[arg(long)]
        threshold: Option<u8>,
    },
    /// Lambda sweep over a stereo pair, written as CSV.
    Sweep {
        /// Directory with left.pgm, left.ppm, right.pgm and right.ppm.
        /// A synthetic scene is generated when omitted.
        dir: Option<PathBuf>,
        /// Scene description for the synthetic scene.
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Metric distortion, score and PSNR of a synthesized view (PPM).
    Metric { synth: PathBuf, reference: PathBuf },
    /// Arithmetic-code a contour dump.
    Encode { dump: PathBuf },
    /// Decode a contour bitstream back to a dump.
    Decode { bitstream: PathBuf },
    /// Write a synthetic stereo scene and its true intermediate views.
    Synth {
        dir: PathBuf,
        #[arg(long)]
        scene: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read(path)?).map_err(|_| Error::Format(format!("{}: not UTF-8", path.display())))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes).map_err(|e| Error::Io(e.to_string()))
        }
    }
}

fn scene_spec(path: Option<&Path>) -> Result<SceneSpec> {
    match path {
        Some(p) => SceneSpec::parse(&read_text(p)?),
        None => Ok(SceneSpec::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::parse(&read_text(p)?)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli.out.as_deref();
    match cli.cmd {
        Cmd::Detect { depth, threshold } => {
            let (dump, n) = cmd_detect(&depth, threshold.unwrap_or(cfg.threshold))?;
            eprintln!("{n} contours");
            emit(out, dump.as_bytes())
        }
        Cmd::Sweep { dir, scene } => {
            let (left, right) = match dir {
                Some(d) => load_pair(&d)?,
                None => {
                    let spec = scene_spec(scene.as_deref())?;
                    cfg.disparity_scale = spec.disparity_scale();
                    let s = build_scene(cfg.seed, &spec)?;
                    (s.left(), s.right())
                }
            };
            emit(out, cmd_sweep(&left, &right, &cfg)?.as_bytes())
        }
        Cmd::Metric { synth, reference } => {
            let m = cmd_metric(&load_color(&synth)?, &load_color(&reference)?, &cfg.approx.swim)?;
            let text = format!("d={}\nS={}\npsnr_db={}\nblocks={}\n", m.d, m.s, m.psnr_db, m.blocks);
            emit(out, text.as_bytes())
        }
        Cmd::Encode { dump } => emit(out, &cmd_encode(&read_text(&dump)?, &cfg)?),
        Cmd::Decode { bitstream } => emit(out, cmd_decode(&read(&bitstream)?, &cfg)?.as_bytes()),
        Cmd::Synth { dir, scene } => {
            let spec = scene_spec(scene.as_deref())?;
            let s = build_scene(cfg.seed, &spec)?;
            save_pair(&dir, &s.left(), &s.right())?;
            for &a in &cfg.alphas {
                save_color(dir.join(format!("view_{a}.ppm")), &s.render(a).color)?;
            }
            // sweeps over the written pair need the matching disparity scale
            let hint = format!("disparity_scale = {}\n", spec.disparity_scale());
            fs::write(dir.join("pipeline.cfg"), hint).map_err(|e| Error::Io(e.to_string()))?;
            eprintln!("wrote scene with seed {} to {}", cfg.seed, dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
