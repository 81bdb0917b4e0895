//! Depth (disparity) and color image containers, binary PGM/PPM I/O and a
//! deterministic synthetic stereo scene generator.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// 8-bit depth map, row-major. Values are read as disparities in pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<u8>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self> {
        if samples.len() != width * height {
            return Err(Error::Dimension(format!(
                "depth image {}x{} needs {} samples, got {}",
                width,
                height,
                width * height,
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            samples: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.samples[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.samples[row * self.width + col] = value;
    }
}

/// 8-bit RGB image, row-major, interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<u8>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self> {
        if samples.len() != 3 * width * height {
            return Err(Error::Dimension(format!(
                "color image {}x{} needs {} samples, got {}",
                width,
                height,
                3 * width * height,
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut samples = Vec::with_capacity(3 * width * height);
        for _ in 0..width * height {
            samples.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            samples,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.samples[i], self.samples[i + 1], self.samples[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = 3 * (row * self.width + col);
        self.samples[i..i + 3].copy_from_slice(&rgb);
    }

    /// ITU-R BT.601 luma of one pixel.
    #[inline]
    pub fn luma(&self, row: usize, col: usize) -> f64 {
        let [r, g, b] = self.get(row, col);
        0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
    }

    /// Whole-image luma plane, row-major.
    pub fn luma_plane(&self) -> Vec<f64> {
        self.samples
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()
    }
}

/// A depth map together with the color image from the same viewpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewPair {
    pub depth: DepthImage,
    pub color: ColorImage,
}

struct Header {
    width: usize,
    height: usize,
    offset: usize,
}

/// Parses a binary netpbm header: magic, width, height, maxval, with `#`
/// comments allowed between tokens and exactly one whitespace byte before
/// the payload.
fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::Format(format!(
            "bad magic, expected {}",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(Error::Format("truncated header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("malformed header: expected a number".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("malformed header: number out of range".into()))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format("malformed header: missing separator".into())),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Format(format!(
            "unsupported bit depth (maxval {maxval}, only 255 is accepted)"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format("zero-size image".into()));
    }
    Ok(Header {
        width,
        height,
        offset: pos,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, header: String, payload: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    f.write_all(header.as_bytes())
        .and_then(|_| f.write_all(payload))
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<DepthImage> {
    let h = parse_header(bytes, b"P5")?;
    let n = h.width * h.height;
    let payload = &bytes[h.offset..];
    if payload.len() < n {
        return Err(Error::Format(format!(
            "short read: expected {n} samples, found {}",
            payload.len()
        )));
    }
    DepthImage::new(h.width, h.height, payload[..n].to_vec())
}

pub fn decode_ppm(bytes: &[u8]) -> Result<ColorImage> {
    let h = parse_header(bytes, b"P6")?;
    let n = 3 * h.width * h.height;
    let payload = &bytes[h.offset..];
    if payload.len() < n {
        return Err(Error::Format(format!(
            "short read: expected {n} samples, found {}",
            payload.len()
        )));
    }
    ColorImage::new(h.width, h.height, payload[..n].to_vec())
}

pub fn encode_pgm(img: &DepthImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.samples);
    out
}

pub fn encode_ppm(img: &ColorImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.samples);
    out
}

pub fn load_depth(path: impl AsRef<Path>) -> Result<DepthImage> {
    decode_pgm(&read_file(path.as_ref())?)
}

pub fn load_color(path: impl AsRef<Path>) -> Result<ColorImage> {
    decode_ppm(&read_file(path.as_ref())?)
}

pub fn save_depth(path: impl AsRef<Path>, img: &DepthImage) -> Result<()> {
    write_file(
        path.as_ref(),
        format!("P5\n{} {}\n255\n", img.width, img.height),
        &img.samples,
    )
}

pub fn save_color(path: impl AsRef<Path>, img: &ColorImage) -> Result<()> {
    write_file(
        path.as_ref(),
        format!("P6\n{} {}\n255\n", img.width, img.height),
        &img.samples,
    )
}

// ---------------------------------------------------------------------------
// Synthetic scenes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Texture {
    Flat,
    Stripes,
    Noise,
}

impl std::str::FromStr for Texture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(Texture::Flat),
            "stripes" => Ok(Texture::Stripes),
            "noise" => Ok(Texture::Noise),
            other => Err(Error::Config(format!("unknown texture style `{other}`"))),
        }
    }
}

/// Parameters of a synthetic scene. Parsed from `key = value` text.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Number of foreground rectangles.
    pub shapes: usize,
    /// Maximum per-row / per-column displacement of rectangle sides, pixels.
    pub jitter: u32,
    pub texture: Texture,
    pub background_disparity: u8,
    /// Lower bound on foreground disparity; each object adds a random
    /// offset of up to `disparity_noise`.
    pub foreground_disparity: u8,
    pub disparity_noise: u8,
    /// Depth samples store `disparity * depth_step`, so layer steps clear
    /// the detection threshold.
    pub depth_step: u8,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 96,
            height: 64,
            shapes: 1,
            jitter: 0,
            texture: Texture::Stripes,
            background_disparity: 4,
            foreground_disparity: 12,
            disparity_noise: 4,
            depth_step: 8,
        }
    }
}

impl SceneSpec {
    /// Pixel disparity per depth sample unit, the `disparity_scale` that
    /// undoes `depth_step`.
    pub fn disparity_scale(&self) -> f64 {
        1.0 / self.depth_step as f64
    }

    /// Parses `key = value` lines; unknown keys are rejected, `#` starts a
    /// comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = SceneSpec::default();
        for (key, value) in crate::config::key_values(text)? {
            let num = |v: &str| -> Result<u64> {
                v.parse()
                    .map_err(|_| Error::Config(format!("`{key}`: expected an integer, got `{v}`")))
            };
            match key.as_str() {
                "width" => spec.width = num(&value)? as usize,
                "height" => spec.height = num(&value)? as usize,
                "shapes" => spec.shapes = num(&value)? as usize,
                "jitter" => spec.jitter = num(&value)? as u32,
                "texture" => spec.texture = value.parse()?,
                "background_disparity" => spec.background_disparity = num(&value)?.min(255) as u8,
                "foreground_disparity" => spec.foreground_disparity = num(&value)?.min(255) as u8,
                "disparity_noise" => spec.disparity_noise = num(&value)?.min(255) as u8,
                "depth_step" => spec.depth_step = num(&value)?.min(255) as u8,
                other => return Err(Error::Config(format!("unknown scene key `{other}`"))),
            }
        }
        Ok(spec)
    }
}

/// One fronto-parallel layer of a scene, described in left-view
/// coordinates. Columns may lie outside the image.
#[derive(Debug, Clone)]
struct Layer {
    disparity: u8,
    top: i64,
    bottom: i64,
    left: i64,
    right: i64,
    /// Offsets of the left/right sides for rows `top..bottom`.
    row_jitter: Vec<(i64, i64)>,
    /// Offsets of the top/bottom sides for columns `left..right`.
    col_jitter: Vec<(i64, i64)>,
    base: [u8; 3],
    seed: u64,
}

impl Layer {
    fn contains(&self, row: i64, col: i64) -> bool {
        let (dt, db) = if col >= self.left && col < self.right {
            self.col_jitter[(col - self.left) as usize]
        } else {
            (0, 0)
        };
        let (dl, dr) = if row >= self.top && row < self.bottom {
            self.row_jitter[(row - self.top) as usize]
        } else {
            (0, 0)
        };
        row >= self.top + dt && row < self.bottom + db && col >= self.left + dl && col < self.right + dr
    }
}

/// Bounded random walk with unit steps; the first and last `amplitude + 1`
/// entries stay zero so rectangle corners are never pinched.
fn side_walk(rng: &mut ChaCha8Rng, len: usize, amplitude: i64) -> Vec<i64> {
    let mut out = vec![0i64; len];
    let guard = amplitude as usize + 1;
    if amplitude == 0 || len <= 2 * guard {
        return out;
    }
    let mut v = 0i64;
    for x in out.iter_mut().take(len - guard).skip(guard) {
        v = (v + rng.gen_range(-1..=1)).clamp(-amplitude, amplitude);
        *x = v;
    }
    out
}

/// Layered description of a rectified stereo scene; any view between the
/// left (`alpha = 0`) and right (`alpha = 1`) camera can be rendered.
#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    background: Layer,
    objects: Vec<Layer>,
    texture: Texture,
}

/// Horizontal pixel shift of a point with disparity `disparity` in the view
/// at position `alpha` (0 = left, 1 = right).
#[inline]
pub fn view_shift(alpha: f64, disparity: f64) -> i64 {
    (alpha * disparity).round() as i64
}

fn hash3(seed: u64, a: i64, b: i64) -> u64 {
    let mut x = seed ^ (a as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (b as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x ^= x >> 33;
    x = x.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    x ^= x >> 33;
    x = x.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    x ^ (x >> 33)
}

impl Scene {
    fn shade(&self, layer: &Layer, row: i64, col: i64) -> [u8; 3] {
        let mut rgb = layer.base;
        let delta: i32 = match self.texture {
            Texture::Flat => 0,
            Texture::Stripes => {
                // diagonal stripes of period 8 in world coordinates
                if (col + row / 2).rem_euclid(8) < 4 {
                    24
                } else {
                    -24
                }
            }
            Texture::Noise => (hash3(layer.seed, row, col) % 41) as i32 - 20,
        };
        for c in rgb.iter_mut() {
            *c = (*c as i32 + delta).clamp(0, 255) as u8;
        }
        rgb
    }

    /// Renders the view at `alpha`: every layer point at left-view column
    /// `c` lands at `c - round(alpha * d)`, nearer layers occlude farther.
    pub fn render(&self, alpha: f64) -> ViewPair {
        let (w, h) = (self.spec.width, self.spec.height);
        let step = self.spec.depth_step;
        let mut depth = DepthImage::filled(w, h, self.background.disparity * step);
        let mut color = ColorImage::filled(w, h, [0, 0, 0]);
        let bg_shift = view_shift(alpha, self.background.disparity as f64);
        for r in 0..h {
            for c in 0..w {
                let src = c as i64 + bg_shift;
                color.set(r, c, self.shade(&self.background, r as i64, src));
            }
        }
        let mut order: Vec<&Layer> = self.objects.iter().collect();
        order.sort_by_key(|l| l.disparity);
        for layer in order {
            let shift = view_shift(alpha, layer.disparity as f64);
            for r in 0..h {
                for c in 0..w {
                    let src = c as i64 + shift;
                    if layer.contains(r as i64, src) && layer.disparity * step >= depth.get(r, c) {
                        depth.set(r, c, layer.disparity * step);
                        color.set(r, c, self.shade(layer, r as i64, src));
                    }
                }
            }
        }
        ViewPair { depth, color }
    }

    pub fn left(&self) -> ViewPair {
        self.render(0.0)
    }

    pub fn right(&self) -> ViewPair {
        self.render(1.0)
    }
}

/// Builds a deterministic scene of non-overlapping jittered rectangles in
/// front of a textured background plane.
pub fn build_scene(seed: u64, spec: &SceneSpec) -> Result<Scene> {
    if spec.width == 0 || spec.height == 0 {
        return Err(Error::Dimension("zero-size scene".into()));
    }
    if spec.foreground_disparity <= spec.background_disparity {
        return Err(Error::Config(
            "foreground disparity must exceed background disparity".into(),
        ));
    }
    let top_disp = spec.foreground_disparity as u32 + spec.disparity_noise as u32;
    if spec.depth_step == 0 || top_disp * spec.depth_step as u32 > 255 {
        return Err(Error::Config(format!(
            "disparity {top_disp} times depth_step {} does not fit in 8 bits",
            spec.depth_step
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background = Layer {
        disparity: spec.background_disparity,
        top: -1,
        bottom: 0,
        left: -1,
        right: 0,
        row_jitter: Vec::new(),
        col_jitter: Vec::new(),
        base: [
            rng.gen_range(40..110),
            rng.gen_range(40..110),
            rng.gen_range(40..110),
        ],
        seed: rng.gen(),
    };
    let j = spec.jitter as i64;
    let (w, h) = (spec.width as i64, spec.height as i64);
    let max_disp = spec.foreground_disparity as i64 + spec.disparity_noise as i64;
    let margin = j + 2;
    // Shapes are spread over horizontal slots so they never touch.
    let slots = spec.shapes.max(1) as i64;
    let slot_w = (w - max_disp - 2 * margin) / slots;
    let mut objects = Vec::with_capacity(spec.shapes);
    for s in 0..spec.shapes as i64 {
        let min_side = 6 + 4 * j;
        if slot_w < min_side + 2 * margin || h < min_side + 4 * margin {
            return Err(Error::Dimension(format!(
                "scene {}x{} too small for {} shapes with jitter {}",
                spec.width, spec.height, spec.shapes, spec.jitter
            )));
        }
        let x0 = max_disp + margin + s * slot_w;
        let ow = rng.gen_range(min_side..=(slot_w - 2 * margin));
        let oh = rng.gen_range(min_side..=(h - 4 * margin));
        let left = x0 + rng.gen_range(0..=(slot_w - 2 * margin - ow));
        let top = 2 * margin + rng.gen_range(0..=(h - 4 * margin - oh));
        let lefts = side_walk(&mut rng, oh as usize, j);
        let rights = side_walk(&mut rng, oh as usize, j);
        let tops = side_walk(&mut rng, ow as usize, j);
        let bottoms = side_walk(&mut rng, ow as usize, j);
        let row_jitter = lefts.into_iter().zip(rights).collect();
        let col_jitter = tops.into_iter().zip(bottoms).collect();
        let noise = if spec.disparity_noise > 0 {
            rng.gen_range(0..=spec.disparity_noise)
        } else {
            0
        };
        objects.push(Layer {
            disparity: spec.foreground_disparity.saturating_add(noise),
            top,
            bottom: top + oh,
            left,
            right: left + ow,
            row_jitter,
            col_jitter,
            base: [
                rng.gen_range(150..230),
                rng.gen_range(150..230),
                rng.gen_range(150..230),
            ],
            seed: rng.gen(),
        });
    }
    Ok(Scene {
        spec: spec.clone(),
        background,
        objects,
        texture: spec.texture,
    })
}

/// Left and right view pairs of a synthetic scene.
pub fn make_synthetic_scene(seed: u64, spec: &SceneSpec) -> Result<(ViewPair, ViewPair)> {
    let scene = build_scene(seed, spec)?;
    Ok((scene.left(), scene.right()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_small_pgm() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 128, 64]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img, DepthImage::new(2, 2, vec![0, 255, 128, 64]).unwrap());
    }

    #[test]
    fn rejects_sixteen_bit() {
        let mut bytes = b"P5\n2 2\n65535\n".to_vec();
        bytes.extend_from_slice(&[0; 8]);
        let err = decode_pgm(&bytes).unwrap_err();
        assert!(err.to_string().contains("unsupported bit depth"), "{err}");
    }

    #[test]
    fn rejects_short_payload() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        let err = decode_pgm(&bytes).unwrap_err();
        assert!(err.to_string().contains("short read"), "{err}");
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P6 # made by hand\n1 1\n# max\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        assert_eq!(decode_ppm(&bytes).unwrap().get(0, 0), [1, 2, 3]);
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(matches!(load_depth("/nonexistent/x.pgm"), Err(Error::Io(_))));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let d = DepthImage::new(3, 2, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let c = ColorImage::new(1, 2, vec![9, 8, 7, 6, 5, 4]).unwrap();
        save_depth(dir.path().join("d.pgm"), &d).unwrap();
        save_color(dir.path().join("c.ppm"), &c).unwrap();
        assert_eq!(load_depth(dir.path().join("d.pgm")).unwrap(), d);
        assert_eq!(load_color(dir.path().join("c.ppm")).unwrap(), c);
    }

    #[test]
    fn scene_is_deterministic() {
        let spec = SceneSpec {
            jitter: 2,
            texture: Texture::Noise,
            ..SceneSpec::default()
        };
        assert_eq!(
            make_synthetic_scene(7, &spec).unwrap(),
            make_synthetic_scene(7, &spec).unwrap()
        );
    }

    #[test]
    fn zero_size_scene_is_rejected() {
        let spec = SceneSpec {
            width: 0,
            ..SceneSpec::default()
        };
        assert!(make_synthetic_scene(1, &spec).is_err());
    }

    #[test]
    fn foreground_disparity_exceeds_background() {
        let spec = SceneSpec {
            shapes: 2,
            width: 128,
            ..SceneSpec::default()
        };
        let (left, _) = make_synthetic_scene(3, &spec).unwrap();
        let bg = spec.background_disparity * spec.depth_step;
        let fg = spec.foreground_disparity * spec.depth_step;
        assert!(left.depth.samples.iter().any(|&d| d > bg));
        assert!(left.depth.samples.iter().all(|&d| d == bg || d >= fg));
        assert!(fg - bg >= 30, "layer step must clear the default threshold");
    }

    #[test]
    fn right_view_matches_left_warped_by_disparity() {
        let spec = SceneSpec {
            jitter: 1,
            shapes: 2,
            width: 128,
            ..SceneSpec::default()
        };
        let (left, right) = make_synthetic_scene(11, &spec).unwrap();
        let mut checked = 0;
        for r in 0..spec.height {
            for c in 0..spec.width {
                let d = left.depth.get(r, c);
                let target = c as i64 - (d / spec.depth_step) as i64;
                if target < 0 {
                    continue;
                }
                let t = target as usize;
                // skip occluded points: something nearer covers the target
                if right.depth.get(r, t) > d {
                    continue;
                }
                assert_eq!(right.depth.get(r, t), d, "row {r} col {c}");
                assert_eq!(right.color.get(r, t), left.color.get(r, c));
                checked += 1;
            }
        }
        assert!(checked > spec.width * spec.height / 2);
    }

    #[test]
    fn scene_spec_parses() {
        let spec = SceneSpec::parse("width = 64\n# c\nshapes=2\ntexture = noise\njitter=2").unwrap();
        assert_eq!(spec.width, 64);
        assert_eq!(spec.shapes, 2);
        assert_eq!(spec.jitter, 2);
        assert_eq!(spec.texture, Texture::Noise);
        assert!(SceneSpec::parse("bogus = 1").is_err());
    }
}
