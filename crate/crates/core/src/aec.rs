//! Arithmetic edge coding: edge-direction probabilities from a fitted-line
//! geometric context, entropy estimates and the contour bitstream.

use crate::contour::{Contour, CrackPoint, Dir, Turn};
use crate::error::{Error, Result};
use crate::range_coder::{self, TOTAL};

/// Every coded probability is at least this large.
pub const PROB_FLOOR: f64 = 1.0 / 65536.0;

const MAGIC: &[u8; 4] = b"AEC1";

/// Context length `K`, concentration `kappa` and distance scale `omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AecParams {
    pub context_len: usize,
    pub kappa: f64,
    pub omega: f64,
}

impl Default for AecParams {
    fn default() -> Self {
        Self {
            context_len: 3,
            kappa: 2.0,
            omega: 1.0,
        }
    }
}

impl AecParams {
    pub fn new(context_len: usize, kappa: f64, omega: f64) -> Result<Self> {
        if context_len == 0 || context_len > 32 {
            return Err(Error::Config("context length K must lie in 1..=32".into()));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Config("kappa must be positive".into()));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::Config("omega must be positive".into()));
        }
        Ok(Self {
            context_len,
            kappa,
            omega,
        })
    }
}

/// The lattice points spanned by the most recent edges, oldest first; the
/// last point is the current head.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GeometricContext {
    pub points: Vec<CrackPoint>,
}

impl GeometricContext {
    /// Walks `recent` (oldest first) backwards from `head`.
    pub fn from_recent(head: CrackPoint, recent: &[Dir]) -> Self {
        let mut points = Vec::with_capacity(recent.len() + 1);
        points.push(head);
        let mut at = head;
        for &d in recent.iter().rev() {
            at = at.step(d.opposite());
            points.push(at);
        }
        points.reverse();
        Self { points }
    }
}

/// A line through `point` with unit direction `dir`, both as `(x, y)` =
/// `(q, p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub point: (f64, f64),
    pub dir: (f64, f64),
}

impl Line {
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.point.0, y - self.point.1);
        (dx * self.dir.1 - dy * self.dir.0).abs()
    }
}

fn unit(d: Dir) -> (f64, f64) {
    let (dp, dq) = d.delta();
    (dq as f64, dp as f64)
}

/// Total-least-squares line through the points: the principal axis of their
/// scatter matrix. The direction is oriented to agree with the most recent
/// edge. An isotropic scatter has no principal axis; the chord from the
/// first to the last point is used instead.
pub fn fit_line(points: &[CrackPoint]) -> Result<Line> {
    if points.len() < 2 {
        return Err(Error::Invalid("line fit needs at least two points".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|c| c.q as f64).sum::<f64>() / n;
    let my = points.iter().map(|c| c.p as f64).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for c in points {
        let (dx, dy) = (c.q as f64 - mx, c.p as f64 - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx + syy == 0.0 {
        return Err(Error::DegenerateContext);
    }
    let first = points[0];
    let last = points[points.len() - 1];
    let prev = points[points.len() - 2];
    let eps = 1e-12 * (sxx + syy);
    let mut dir = if (sxx - syy).abs() <= eps && sxy.abs() <= eps {
        let (cx, cy) = ((last.q - first.q) as f64, (last.p - first.p) as f64);
        let norm = cx.hypot(cy);
        if norm == 0.0 {
            ((last.q - prev.q) as f64, (last.p - prev.p) as f64)
        } else {
            (cx / norm, cy / norm)
        }
    } else {
        let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        (theta.cos(), theta.sin())
    };
    let recent = ((last.q - prev.q) as f64, (last.p - prev.p) as f64);
    let mut dot = dir.0 * recent.0 + dir.1 * recent.1;
    if dot.abs() < 1e-12 {
        let chord = ((last.q - first.q) as f64, (last.p - first.p) as f64);
        dot = dir.0 * chord.0 + dir.1 * chord.1;
    }
    if dot < 0.0 {
        dir = (-dir.0, -dir.1);
    }
    Ok(Line {
        point: (mx, my),
        dir,
    })
}

/// Probabilities of the three relative symbols, indexed by `Turn as usize`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeDistribution {
    pub probs: [f64; 3],
    /// Set when the context could not be used and the uniform fallback was
    /// returned.
    pub fallback: bool,
}

impl EdgeDistribution {
    pub fn uniform() -> Self {
        Self {
            probs: [1.0 / 3.0; 3],
            fallback: true,
        }
    }

    pub fn prob(&self, t: Turn) -> f64 {
        self.probs[t as usize]
    }

    pub fn bits(&self, t: Turn) -> f64 {
        -self.prob(t).log2()
    }

    /// Integer frequencies for the range coder, each at least one and
    /// summing to the coder total.
    pub fn frequencies(&self) -> [u32; 3] {
        let mut f = self.probs.map(|p| ((p * TOTAL as f64).round() as u32).max(1));
        let sum: u32 = f.iter().sum();
        let largest = (0..3).max_by(|&a, &b| f[a].cmp(&f[b]).then(b.cmp(&a))).unwrap_or(0);
        f[largest] = (f[largest] as i64 + TOTAL as i64 - sum as i64) as u32;
        f
    }
}

fn apply_floor(mut w: [f64; 3]) -> [f64; 3] {
    let sum: f64 = w.iter().sum();
    for x in w.iter_mut() {
        *x /= sum;
    }
    let scale = 1.0 - 3.0 * PROB_FLOOR;
    w.map(|p| PROB_FLOOR + scale * p)
}

/// Direction probabilities for the next edge. Each candidate turn is
/// weighted by `exp(kappa cos g) exp(-e^2 / (2 omega^2))`, where `g` is its
/// angle to the fitted line and `e` the distance of its end point from the
/// line, then normalized and floored.
pub fn edge_probabilities(ctx: &GeometricContext, last_dir: Dir, params: &AecParams) -> EdgeDistribution {
    if ctx.points.len() < 2 {
        return EdgeDistribution::uniform();
    }
    let line = match fit_line(&ctx.points) {
        Ok(l) => l,
        Err(_) => return EdgeDistribution::uniform(),
    };
    let head = *ctx.points.last().expect("nonempty");
    let mut w = [0.0; 3];
    for t in Turn::ALL {
        let cand = last_dir.turn(t);
        let (ux, uy) = unit(cand);
        let cos_g = (ux * line.dir.0 + uy * line.dir.1).clamp(-1.0, 1.0);
        let end = head.step(cand);
        let eps = line.distance(end.q as f64, end.p as f64);
        w[t as usize] = (params.kappa * cos_g).exp() * (-eps * eps / (2.0 * params.omega * params.omega)).exp();
    }
    EdgeDistribution {
        probs: apply_floor(w),
        fallback: false,
    }
}

/// Distribution used for edge number `index` (zero-based) of a contour,
/// given the head point and the directions coded so far (oldest first; only
/// the last `K` are read). Edges `1..K` after the first use the uniform
/// distribution; later edges use the fitted-line model over the last `K`
/// edges.
pub fn distribution_at(index: usize, head: CrackPoint, history: &[Dir], params: &AecParams) -> EdgeDistribution {
    debug_assert!(index >= 1);
    if index < params.context_len {
        return EdgeDistribution::uniform();
    }
    let k = params.context_len.min(history.len());
    let recent = &history[history.len() - k..];
    let ctx = GeometricContext::from_recent(head, recent);
    edge_probabilities(&ctx, *history.last().expect("index >= 1"), params)
}

/// Bits of the first, absolute, edge.
pub const FIRST_EDGE_BITS: f64 = 2.0;

/// Ideal code length of a contour in bits: `sum -log2 P(e_t | s_t)`.
pub fn estimate_rate(contour: &Contour, params: &AecParams) -> f64 {
    let mut bits = FIRST_EDGE_BITS;
    let mut history = vec![contour.first];
    let mut head = contour.start.step(contour.first);
    for (i, &t) in contour.rest.iter().enumerate() {
        let dist = distribution_at(i + 1, head, &history, params);
        bits += dist.bits(t);
        let d = history.last().expect("nonempty").turn(t);
        history.push(d);
        head = head.step(d);
    }
    bits
}

/// Encodes contours into the `AEC1` bitstream.
///
/// Layout (big-endian): magic `AEC1`, `u16` contour count, then per contour
/// `u16 p`, `u16 q`, one byte holding the 2-bit first direction and a `u32`
/// count of relative symbols; then the arithmetic-coded payload for all
/// contours and a terminating `0x00` byte.
pub fn encode(contours: &[Contour], params: &AecParams) -> Result<Vec<u8>> {
    let count = u16::try_from(contours.len())
        .map_err(|_| Error::Bitstream(format!("too many contours ({})", contours.len())))?;
    let mut out = Vec::with_capacity(6 + 9 * contours.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&count.to_be_bytes());
    for c in contours {
        let p = u16::try_from(c.start.p).map_err(|_| Error::Bitstream(format!("start row {} out of range", c.start.p)))?;
        let q = u16::try_from(c.start.q).map_err(|_| Error::Bitstream(format!("start column {} out of range", c.start.q)))?;
        let n = u32::try_from(c.rest.len()).map_err(|_| Error::Bitstream("contour too long".into()))?;
        out.extend_from_slice(&p.to_be_bytes());
        out.extend_from_slice(&q.to_be_bytes());
        out.push(c.first.code());
        out.extend_from_slice(&n.to_be_bytes());
    }
    out.extend_from_slice(&encode_payload(contours, params));
    out.push(0x00);
    Ok(out)
}

/// Arithmetic-coded relative symbols only.
pub fn encode_payload(contours: &[Contour], params: &AecParams) -> Vec<u8> {
    let mut enc = range_coder::Encoder::new();
    for c in contours {
        let mut history = vec![c.first];
        let mut head = c.start.step(c.first);
        for (i, &t) in c.rest.iter().enumerate() {
            let freqs = distribution_at(i + 1, head, &history, params).frequencies();
            let cum: u32 = freqs[..t as usize].iter().sum();
            enc.encode(cum, freqs[t as usize]);
            let d = history.last().expect("nonempty").turn(t);
            history.push(d);
            head = head.step(d);
        }
    }
    enc.finish()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Bitstream("truncated stream".into()))?;
        self.pos = end;
        Ok(s.try_into().expect("length checked"))
    }
}

/// Inverse of [`encode`].
pub fn decode(bytes: &[u8], params: &AecParams) -> Result<Vec<Contour>> {
    let mut r = Reader { bytes, pos: 0 };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Bitstream("bad magic".into()));
    }
    r.pos = 4;
    let count = u16::from_be_bytes(r.take()?) as usize;
    let mut heads = Vec::with_capacity(count);
    for _ in 0..count {
        let p = u16::from_be_bytes(r.take()?) as i32;
        let q = u16::from_be_bytes(r.take()?) as i32;
        let [code] = r.take::<1>()?;
        let first = Dir::from_code(code).ok_or_else(|| Error::Bitstream(format!("bad direction code {code}")))?;
        let n = u32::from_be_bytes(r.take()?) as usize;
        heads.push((CrackPoint::new(p, q), first, n));
    }
    if bytes.len() <= r.pos {
        return Err(Error::Bitstream("truncated stream: missing terminator".into()));
    }
    if bytes[bytes.len() - 1] != 0x00 {
        return Err(Error::Bitstream("truncated stream: missing terminator".into()));
    }
    let payload = &bytes[r.pos..bytes.len() - 1];
    let total: usize = heads.iter().map(|h| h.2).sum();
    let mut dec = range_coder::Decoder::new(payload);
    let mut out = Vec::with_capacity(count);
    for (start, first, n) in heads {
        let mut history = Vec::with_capacity(n + 1);
        history.push(first);
        let mut rest = Vec::with_capacity(n);
        let mut head = start.step(first);
        for i in 0..n {
            let freqs = distribution_at(i + 1, head, &history, params).frequencies();
            let t = Turn::ALL[dec.decode(&freqs)];
            rest.push(t);
            let d = history.last().expect("nonempty").turn(t);
            history.push(d);
            head = head.step(d);
        }
        out.push(Contour { start, first, rest });
    }
    // The decoder reads four bytes ahead of the last renormalization; a
    // consistent header consumes the payload exactly up to that slack.
    let used = dec.consumed();
    if used < payload.len() || used > payload.len() + 4 {
        return Err(Error::Bitstream(format!(
            "symbol count mismatch: header announces {total} symbols but the payload does not match"
        )));
    }
    Ok(out)
}

/// Bits spent on symbols: the arithmetic payload plus the 2-bit first
/// direction code of each contour. Header framing is excluded.
pub fn coded_symbol_bits(contours: &[Contour], params: &AecParams) -> usize {
    8 * encode_payload(contours, params).len() + 2 * contours.len()
}
