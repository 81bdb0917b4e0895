//! Making depth and color agree with approximated contours, 3D warping
//! between rectified views and intermediate view synthesis.

use std::collections::VecDeque;
use std::time::Instant;

use crate::approx::{approximate_contours, ContourApproximation, ShiftCost};
use crate::config::PipelineConfig;
use crate::contour::{detect_contours, Contour, EdgeMap};
use crate::error::{Error, Result};
use crate::image_io::{ColorImage, DepthImage, ViewPair};
use crate::swim::Luma;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Change {
    Unchanged,
    ToForeground,
    ToBackground,
}

/// Which pixels changed side, with their depth before and after.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeMask {
    pub width: usize,
    pub height: usize,
    pub flags: Vec<Change>,
    pub old: Vec<u8>,
    pub new: Vec<u8>,
}

impl ChangeMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            flags: vec![Change::Unchanged; width * height],
            old: vec![0; width * height],
            new: vec![0; width * height],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Change {
        self.flags[row * self.width + col]
    }

    /// Records a depth change; the earliest `old` value is kept when a pixel
    /// changes twice.
    pub fn record(&mut self, row: usize, col: usize, old: u8, new: u8) {
        let i = row * self.width + col;
        let first = if self.flags[i] == Change::Unchanged { old } else { self.old[i] };
        self.old[i] = first;
        self.new[i] = new;
        self.flags[i] = match new.cmp(&first) {
            std::cmp::Ordering::Greater => Change::ToForeground,
            std::cmp::Ordering::Less => Change::ToBackground,
            std::cmp::Ordering::Equal => Change::Unchanged,
        };
    }

    pub fn changed(&self) -> usize {
        self.flags.iter().filter(|&&f| f != Change::Unchanged).count()
    }

    pub fn is_empty(&self) -> bool {
        self.changed() == 0
    }
}

/// Pixels enclosed an odd number of times by the edges that belong to
/// exactly one of the two maps.
fn flipped_pixels(original: &EdgeMap, approx: &EdgeMap) -> Vec<bool> {
    let (w, h) = (original.width, original.height);
    let mut out = vec![false; w * h];
    for r in 0..h {
        let mut inside = false;
        for c in 0..w {
            if original.vertical(r, c) != approx.vertical(r, c) {
                inside = !inside;
            }
            out[r * w + c] = inside;
        }
    }
    out
}

/// Pixel on the new side of flipped pixel `(r, c)`: the nearest one across
/// an original edge at the end of its row run, else of its column run,
/// else by a breadth-first search that never crosses an original edge.
fn donor(r: usize, c: usize, flipped: &[bool], om: &EdgeMap, am: &EdgeMap) -> Option<(usize, usize)> {
    let (w, h) = (om.width, om.height);
    let cut_v = |r: usize, col: usize| om.vertical(r, col) || am.vertical(r, col);
    let cut_h = |row: usize, c: usize| om.horizontal(row, c) || am.horizontal(row, c);

    let mut a = c;
    while a > 0 && flipped[r * w + a - 1] && !cut_v(r, a) {
        a -= 1;
    }
    let mut b = c + 1;
    while b < w && flipped[r * w + b] && !cut_v(r, b) {
        b += 1;
    }
    let left = (a > 0 && om.vertical(r, a)).then(|| (c - a + 1, (r, a - 1)));
    let right = (b < w && om.vertical(r, b)).then(|| (b - c, (r, b)));
    match (left, right) {
        (Some(l), Some(rt)) => return Some(if rt.0 < l.0 { rt.1 } else { l.1 }),
        (Some(l), None) => return Some(l.1),
        (None, Some(rt)) => return Some(rt.1),
        (None, None) => {}
    }

    let mut a = r;
    while a > 0 && flipped[(a - 1) * w + c] && !cut_h(a, c) {
        a -= 1;
    }
    let mut b = r + 1;
    while b < h && flipped[b * w + c] && !cut_h(b, c) {
        b += 1;
    }
    let up = (a > 0 && om.horizontal(a, c)).then(|| (r - a + 1, (a - 1, c)));
    let down = (b < h && om.horizontal(b, c)).then(|| (b - r, (b, c)));
    match (up, down) {
        (Some(u), Some(d)) => return Some(if d.0 < u.0 { d.1 } else { u.1 }),
        (Some(u), None) => return Some(u.1),
        (None, Some(d)) => return Some(d.1),
        (None, None) => {}
    }

    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::from([(r, c)]);
    seen[r * w + c] = true;
    while let Some((y, x)) = queue.pop_front() {
        let mut nbrs = Vec::with_capacity(4);
        if x > 0 {
            nbrs.push((y, x - 1, om.vertical(y, x)));
        }
        if x + 1 < w {
            nbrs.push((y, x + 1, om.vertical(y, x + 1)));
        }
        if y > 0 {
            nbrs.push((y - 1, x, om.horizontal(y, x)));
        }
        if y + 1 < h {
            nbrs.push((y + 1, x, om.horizontal(y + 1, x)));
        }
        for (ny, nx, crosses) in nbrs {
            if crosses {
                return Some((ny, nx));
            }
            if !seen[ny * w + nx] {
                seen[ny * w + nx] = true;
                queue.push_back((ny, nx));
            }
        }
    }
    None
}

fn augment_with_maps(depth: &DepthImage, om: &EdgeMap, am: &EdgeMap) -> (DepthImage, ChangeMask) {
    let (w, h) = (depth.width, depth.height);
    let flipped = flipped_pixels(om, am);
    let mut out = depth.clone();
    let mut mask = ChangeMask::new(w, h);
    for r in 0..h {
        for c in 0..w {
            if !flipped[r * w + c] {
                continue;
            }
            match donor(r, c, &flipped, om, am) {
                Some((dr, dc)) => {
                    let v = depth.get(dr, dc);
                    out.set(r, c, v);
                    mask.record(r, c, depth.get(r, c), v);
                }
                None => log::warn!("no donor for flipped pixel ({r},{c}); left unchanged"),
            }
        }
    }
    (out, mask)
}

fn check_pairs(pairs: &[(Contour, Contour)]) -> Result<()> {
    for (o, a) in pairs {
        if o.start != a.start || o.end() != a.end() {
            return Err(Error::Chain(format!(
                "approximated contour {}..{} does not share the endpoints {}..{}",
                a.start,
                a.end(),
                o.start,
                o.end()
            )));
        }
    }
    Ok(())
}

/// Swaps foreground and background depth for every pixel that lies on the
/// other side of the approximated contour than of the original one.
pub fn augment_depth(depth: &DepthImage, original: &Contour, approx: &Contour) -> Result<(DepthImage, ChangeMask)> {
    augment_depth_all(depth, &[(original.clone(), approx.clone())])
}

/// [`augment_depth`] for all `(original, approximated)` pairs of a view at
/// once.
pub fn augment_depth_all(depth: &DepthImage, pairs: &[(Contour, Contour)]) -> Result<(DepthImage, ChangeMask)> {
    check_pairs(pairs)?;
    let (w, h) = (depth.width, depth.height);
    let originals: Vec<Contour> = pairs.iter().map(|p| p.0.clone()).collect();
    let approxes: Vec<Contour> = pairs.iter().map(|p| p.1.clone()).collect();
    let om = EdgeMap::from_contours(w, h, &originals);
    let am = EdgeMap::from_contours(w, h, &approxes);
    Ok(augment_with_maps(depth, &om, &am))
}

/// Refills the color of every changed pixel from neighbours on its new
/// side.
///
/// Changed pixels start as holes. Each round fills, all at once, every hole
/// with a non-hole 4-neighbour whose depth is nearer the hole's new depth
/// than its old one, using the mean of those neighbours. When no hole can
/// be filled that way, the remaining ones take any non-hole neighbours;
/// their number is returned.
pub fn augment_color(color: &ColorImage, depth_after: &DepthImage, mask: &ChangeMask) -> Result<(ColorImage, usize)> {
    let (w, h) = (color.width, color.height);
    if (depth_after.width, depth_after.height) != (w, h) || (mask.width, mask.height) != (w, h) {
        return Err(Error::Dimension("color, depth and change mask differ in size".into()));
    }
    let mut out = color.clone();
    let mut hole: Vec<bool> = mask.flags.iter().map(|&f| f != Change::Unchanged).collect();
    let mut remaining = hole.iter().filter(|&&x| x).count();
    let mut unconstrained = 0;
    let mut constrained = true;
    while remaining > 0 {
        let mut fills = Vec::new();
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                if !hole[i] {
                    continue;
                }
                let (old, new) = (mask.old[i] as i32, mask.new[i] as i32);
                let mut sum = [0u32; 3];
                let mut n = 0u32;
                let around = [
                    (c > 0).then(|| (r, c - 1)),
                    (c + 1 < w).then(|| (r, c + 1)),
                    (r > 0).then(|| (r - 1, c)),
                    (r + 1 < h).then(|| (r + 1, c)),
                ];
                for (y, x) in around.into_iter().flatten() {
                    if hole[y * w + x] {
                        continue;
                    }
                    let d = depth_after.get(y, x) as i32;
                    if constrained && (d - new).abs() >= (d - old).abs() {
                        continue;
                    }
                    let px = out.get(y, x);
                    for k in 0..3 {
                        sum[k] += px[k] as u32;
                    }
                    n += 1;
                }
                if n > 0 {
                    fills.push((r, c, sum.map(|s| ((s + n / 2) / n) as u8)));
                }
            }
        }
        if fills.is_empty() {
            if !constrained {
                return Err(Error::Invalid("changed pixels with no reachable neighbour".into()));
            }
            constrained = false;
            continue;
        }
        if !constrained {
            unconstrained += fills.len();
            log::warn!("{} pixels filled without a same-side donor", fills.len());
            constrained = true;
        }
        remaining -= fills.len();
        for (r, c, px) in fills {
            out.set(r, c, px);
            hole[r * w + c] = false;
        }
    }
    Ok((out, unconstrained))
}

/// A warped view: pixels that received no source are holes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warped {
    pub color: ColorImage,
    pub depth: DepthImage,
    pub holes: Vec<bool>,
}

impl Warped {
    pub fn hole_count(&self) -> usize {
        self.holes.iter().filter(|&&x| x).count()
    }

    /// Warps this view again, leaving its holes behind.
    pub fn warp(&self, alpha: f64, direction: i32, scale: f64) -> Warped {
        let sign = direction.signum() as i64;
        warp_by(&self.depth, &self.color, Some(&self.holes), |d| sign * (alpha * disparity(d, scale)).round() as i64)
    }
}

/// Forward-warps every pixel horizontally by `shift(depth sample)`. The
/// larger depth sample wins a target; equal samples go to the later source.
/// Pixels flagged in `skip` are not moved.
fn warp_by(depth: &DepthImage, color: &ColorImage, skip: Option<&[bool]>, shift: impl Fn(u8) -> i64) -> Warped {
    let (w, h) = (depth.width, depth.height);
    let mut out = Warped {
        color: ColorImage::filled(w, h, [0, 0, 0]),
        depth: DepthImage::filled(w, h, 0),
        holes: vec![true; w * h],
    };
    for r in 0..h {
        for c in 0..w {
            if skip.is_some_and(|s| s[r * w + c]) {
                continue;
            }
            let d = depth.get(r, c);
            let t = c as i64 + shift(d);
            if t < 0 || t >= w as i64 {
                continue;
            }
            let t = t as usize;
            if out.holes[r * w + t] || d >= out.depth.get(r, t) {
                out.holes[r * w + t] = false;
                out.depth.set(r, t, d);
                out.color.set(r, t, color.get(r, c));
            }
        }
    }
    out
}

/// Pixel disparity of a depth sample.
#[inline]
pub fn disparity(sample: u8, scale: f64) -> f64 {
    sample as f64 * scale
}

/// Moves pixel `(r, c)` to `(r, c + direction * round(alpha * disparity))`.
pub fn warp_view(depth: &DepthImage, color: &ColorImage, alpha: f64, direction: i32, scale: f64) -> Result<Warped> {
    if (depth.width, depth.height) != (color.width, color.height) {
        return Err(Error::Dimension("depth and color differ in size".into()));
    }
    let sign = direction.signum() as i64;
    Ok(warp_by(depth, color, None, |d| sign * (alpha * disparity(d, scale)).round() as i64))
}

/// Renders the view at `alpha` between a left (0) and right (1) camera.
///
/// The left view moves by `-round(alpha d)` and the right one by
/// `round(d) - round(alpha d)`, so both land where a point seen from the
/// left at disparity `d` appears in the new view. Where both land with
/// disparities within one pixel the colors are blended with weights
/// `1 - alpha` and `alpha`; otherwise the nearer one is kept. Pixels no
/// view reaches are filled along the row from the farther neighbour.
pub fn synthesize_view(left: &ViewPair, right: &ViewPair, alpha: f64, scale: f64) -> Result<ColorImage> {
    let (w, h) = (left.depth.width, left.depth.height);
    for v in [left, right] {
        if (v.depth.width, v.depth.height, v.color.width, v.color.height) != (w, h, w, h) {
            return Err(Error::Dimension("views differ in size".into()));
        }
    }
    let lw = warp_by(&left.depth, &left.color, None, |d| -(alpha * disparity(d, scale)).round() as i64);
    let rw = warp_by(&right.depth, &right.color, None, |d| {
        let full = disparity(d, scale);
        full.round() as i64 - (alpha * full).round() as i64
    });
    let mut color = ColorImage::filled(w, h, [0, 0, 0]);
    let mut depth = DepthImage::filled(w, h, 0);
    let mut hole = vec![false; w * h];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let (px, d) = match (lw.holes[i], rw.holes[i]) {
                (false, false) => {
                    let (dl, dr) = (lw.depth.get(r, c), rw.depth.get(r, c));
                    if (disparity(dl, scale) - disparity(dr, scale)).abs() <= 1.0 {
                        let (a, b) = (lw.color.get(r, c), rw.color.get(r, c));
                        let mix = std::array::from_fn(|k| ((1.0 - alpha) * a[k] as f64 + alpha * b[k] as f64).round() as u8);
                        (mix, dl.max(dr))
                    } else if dr > dl {
                        (rw.color.get(r, c), dr)
                    } else {
                        (lw.color.get(r, c), dl)
                    }
                }
                (false, true) => (lw.color.get(r, c), lw.depth.get(r, c)),
                (true, false) => (rw.color.get(r, c), rw.depth.get(r, c)),
                (true, true) => {
                    hole[i] = true;
                    continue;
                }
            };
            color.set(r, c, px);
            depth.set(r, c, d);
        }
    }
    fill_holes_from_background(&mut color, &depth, &hole);
    Ok(color)
}

/// Each run of holes in a row takes the color of whichever neighbour at its
/// ends is farther (smaller disparity); ties and one-sided runs take what
/// exists, left first.
fn fill_holes_from_background(color: &mut ColorImage, depth: &DepthImage, hole: &[bool]) {
    let (w, h) = (color.width, color.height);
    for r in 0..h {
        let mut c = 0;
        while c < w {
            if !hole[r * w + c] {
                c += 1;
                continue;
            }
            let a = c;
            while c < w && hole[r * w + c] {
                c += 1;
            }
            let left = a.checked_sub(1);
            let right = (c < w).then_some(c);
            let src = match (left, right) {
                (Some(l), Some(rt)) => Some(if depth.get(r, rt) < depth.get(r, l) { rt } else { l }),
                (l, rt) => l.or(rt),
            };
            if let Some(s) = src {
                let px = color.get(r, s);
                for x in a..c {
                    color.set(r, x, px);
                }
            }
        }
    }
}

/// Disocclusions inside a row take the depth of the farther end of their
/// run. Runs that touch the image side stay holes: the other view never saw
/// that content.
fn fill_interior_depth_holes(warped: &mut Warped) {
    let (w, h) = (warped.depth.width, warped.depth.height);
    for r in 0..h {
        let mut c = 0;
        while c < w {
            if !warped.holes[r * w + c] {
                c += 1;
                continue;
            }
            let a = c;
            while c < w && warped.holes[r * w + c] {
                c += 1;
            }
            if a == 0 || c == w {
                continue;
            }
            let fill = warped.depth.get(r, a - 1).min(warped.depth.get(r, c));
            for x in a..c {
                warped.depth.set(r, x, fill);
                warped.holes[r * w + x] = false;
            }
        }
    }
}

/// Wall time of the stages of [`approximate_stereo`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub detect_ms: f64,
    pub dp_ms: f64,
}

#[derive(Debug, Clone)]
pub struct StereoOutput {
    pub left: ViewPair,
    pub right: ViewPair,
    pub left_contours: Vec<ContourApproximation>,
    pub right_contours: Vec<ContourApproximation>,
    pub left_mask: ChangeMask,
    pub right_mask: ChangeMask,
    /// Pixels whose color had to come from the wrong side.
    pub unconstrained_fills: usize,
    pub times: StageTimes,
}

impl StereoOutput {
    pub fn contours(&self) -> (Vec<Contour>, Vec<Contour>) {
        (
            self.left_contours.iter().map(|a| a.contour.clone()).collect(),
            self.right_contours.iter().map(|a| a.contour.clone()).collect(),
        )
    }

    /// Distortion summed over both views, including merge distortion.
    pub fn distortion(&self) -> f64 {
        self.left_contours
            .iter()
            .chain(&self.right_contours)
            .map(|a| a.cost.distortion)
            .sum()
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn approximate_view(
    view: &ViewPair,
    rho: f64,
    cfg: &PipelineConfig,
    times: &mut StageTimes,
) -> Result<(ViewPair, Vec<ContourApproximation>, ChangeMask, usize)> {
    let t = Instant::now();
    let contours = detect_contours(&view.depth, cfg.threshold);
    times.detect_ms += ms(t);
    let t = Instant::now();
    let luma = Luma::of(&view.color);
    let shift = ShiftCost::new(&luma, cfg.approx.swim, rho);
    let approx = approximate_contours(&contours, &shift, &cfg.approx)?;
    times.dp_ms += ms(t);
    let pairs: Vec<(Contour, Contour)> = approx.iter().map(|a| (a.original.clone(), a.contour.clone())).collect();
    let (depth, mask) = augment_depth_all(&view.depth, &pairs)?;
    let (color, loose) = augment_color(&view.color, &depth, &mask)?;
    Ok((ViewPair { depth, color }, approx, mask, loose))
}

/// Approximates a rectified stereo pair.
///
/// The left view is approximated and augmented first. Its augmented depth is
/// then projected into the right view, and the right view takes the
/// projected depth wherever the two differ by at least the detection
/// threshold. Finally the right view's contours are approximated with the
/// inter-view penalty, so they stay where the projection put them.
pub fn approximate_stereo(left: &ViewPair, right: &ViewPair, cfg: &PipelineConfig) -> Result<StereoOutput> {
    let (w, h) = (left.depth.width, left.depth.height);
    if (right.depth.width, right.depth.height) != (w, h) {
        return Err(Error::Dimension("left and right views differ in size".into()));
    }
    cfg.approx.validate()?;
    let mut times = StageTimes::default();
    let (left_out, left_contours, left_mask, loose_l) = approximate_view(left, 0.0, cfg, &mut times)?;

    let mut proj = warp_view(&left_out.depth, &left_out.color, 1.0, -1, cfg.disparity_scale)?;
    fill_interior_depth_holes(&mut proj);
    let mut depth = right.depth.clone();
    let mut proj_mask = ChangeMask::new(w, h);
    for r in 0..h {
        for c in 0..w {
            if proj.holes[r * w + c] {
                continue;
            }
            let (p, o) = (proj.depth.get(r, c), right.depth.get(r, c));
            if (p as i32 - o as i32).abs() >= cfg.threshold as i32 {
                depth.set(r, c, p);
                proj_mask.record(r, c, o, p);
            }
        }
    }
    let (color, loose_p) = augment_color(&right.color, &depth, &proj_mask)?;
    let projected = ViewPair { depth, color };
    let (right_out, right_contours, second, loose_r) = approximate_view(&projected, cfg.approx.rho, cfg, &mut times)?;
    let mut right_mask = proj_mask;
    for i in 0..w * h {
        if second.flags[i] != Change::Unchanged {
            right_mask.record(i / w, i % w, second.old[i], second.new[i]);
        }
    }
    Ok(StereoOutput {
        left: left_out,
        right: right_out,
        left_contours,
        right_contours,
        left_mask,
        right_mask,
        unconstrained_fills: loose_l + loose_p + loose_r,
        times,
    })
}
