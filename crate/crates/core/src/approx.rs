//! Rate-distortion optimal contour approximation.
//!
//! Each two-direction segment is re-routed by dynamic programming over the
//! monotone lattice paths inside its bounding rectangle, minimizing
//! `D + lambda * R` where `D` sums shifting-window row distortions of the
//! vertical edges and `R` is the coder's ideal code length under the same
//! context evolution. Neighbouring segments are then merged greedily while
//! that lowers the total cost.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use crate::aec::{self, AecParams, FIRST_EDGE_BITS};
use crate::contour::{split_segments, Contour, CrackPoint, Dir, Segment};
use crate::error::{Error, Result};
use crate::image_io::{ColorImage, DepthImage};
use crate::swim::{self, Luma, SwimConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxConfig {
    /// Lagrange multiplier trading bits against distortion.
    pub lambda: f64,
    /// Inter-view penalty weight for the dependent view.
    pub rho: f64,
    /// Greedy segment merging.
    pub merge: bool,
    pub aec: AecParams,
    pub swim: SwimConfig,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            rho: 1e6,
            merge: true,
            aec: AecParams::default(),
            swim: SwimConfig::default(),
        }
    }
}

impl ApproxConfig {
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::Config(format!("rho must be finite and >= 0, got {}", self.rho)));
        }
        AecParams::new(self.aec.context_len, self.aec.kappa, self.aec.omega)?;
        SwimConfig::new(self.swim.block, self.swim.window, self.swim.bins, self.swim.d0)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdCost {
    pub distortion: f64,
    /// Bits.
    pub rate: f64,
    pub total: f64,
}

impl RdCost {
    pub fn new(distortion: f64, rate: f64, lambda: f64) -> Self {
        Self {
            distortion,
            rate,
            total: distortion + lambda * rate,
        }
    }
}

/// What the coder has seen before a segment: the last `K` directions,
/// oldest first, and the number of edges already coded in the contour.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CodingContext {
    pub recent: Vec<Dir>,
    pub edges_before: usize,
}

impl CodingContext {
    /// The context after also coding `dirs`.
    pub fn extend(&self, dirs: &[Dir], k: usize) -> Self {
        let mut recent = self.recent.clone();
        recent.extend_from_slice(dirs);
        let cut = recent.len().saturating_sub(k);
        recent.drain(..cut);
        Self {
            recent,
            edges_before: self.edges_before + dirs.len(),
        }
    }
}

/// Side conditions that keep a reassembled contour valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Constraints {
    /// Required first direction.
    pub first: Option<Dir>,
    /// Required last direction.
    pub last: Option<Dir>,
    /// First direction of the following segment; the last edge may not
    /// oppose it.
    pub next_first: Option<Dir>,
}

/// Row distortion of an edge shift, optionally with the inter-view penalty
/// `rho * k^2`.
#[derive(Debug, Clone, Copy)]
pub struct ShiftCost<'a> {
    pub luma: &'a Luma,
    pub swim: SwimConfig,
    pub rho: f64,
}

impl<'a> ShiftCost<'a> {
    pub fn new(luma: &'a Luma, swim: SwimConfig, rho: f64) -> Self {
        Self { luma, swim, rho }
    }

    pub fn cost(&self, row: i32, q_orig: i32, q: i32) -> Result<f64> {
        if row < 0 {
            return Err(Error::Invalid(format!("row {row} outside image")));
        }
        let ws = swim::window_start(self.luma.width, q_orig as i64, self.swim.block);
        interview_row_distortion(self.luma, row as usize, ws, q_orig as i64, q as i64, &self.swim, self.rho)
    }
}

/// `d + rho * (q - q_orig)^2`.
pub fn interview_row_distortion(
    luma: &Luma,
    row: usize,
    window_start: usize,
    q_orig: i64,
    q: i64,
    cfg: &SwimConfig,
    rho: f64,
) -> Result<f64> {
    let d = swim::row_distortion(luma, row, window_start, q_orig, q, cfg)?;
    let k = (q - q_orig) as f64;
    Ok(if rho > 0.0 { d + rho * k * k } else { d })
}

/// A reference segment with its coding surroundings. `columns` maps each
/// pixel row crossed by the reference to the column of its vertical edge.
#[derive(Debug, Clone)]
pub struct SegmentProblem {
    pub reference: Segment,
    pub columns: HashMap<i32, i32>,
    pub context: CodingContext,
    pub constraints: Constraints,
}

impl SegmentProblem {
    pub fn new(reference: Segment, context: CodingContext) -> Self {
        let columns = reference.vertical_edges().into_iter().collect();
        Self {
            reference,
            columns,
            context,
            constraints: Constraints::default(),
        }
    }

    pub fn with_constraints(mut self, constraints: Constraints) -> Self {
        self.constraints = constraints;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub segment: Segment,
    pub cost: RdCost,
}

struct Solver<'a> {
    problem: &'a SegmentProblem,
    shift: &'a ShiftCost<'a>,
    lambda: f64,
    params: &'a AecParams,
    v: usize,
    h: usize,
    mask_bits: u64,
    rows: HashMap<(i32, i32), f64>,
    memo: Option<HashMap<(usize, usize, u64), (f64, bool)>>,
}

impl<'a> Solver<'a> {
    fn new(problem: &'a SegmentProblem, shift: &'a ShiftCost<'a>, lambda: f64, params: &'a AecParams, memo: bool) -> Result<Self> {
        let ctx = &problem.context;
        if ctx.edges_before > 0 && ctx.recent.is_empty() {
            return Err(Error::Invalid("coding context lost its recent directions".into()));
        }
        let v = problem.reference.vertical_count();
        Ok(Self {
            problem,
            shift,
            lambda,
            params,
            v,
            h: problem.reference.len() - v,
            mask_bits: (1u64 << params.context_len) - 1,
            rows: HashMap::new(),
            memo: memo.then(HashMap::new),
        })
    }

    fn point(&self, i: usize, j: usize) -> CrackPoint {
        let s = self.problem.reference.start;
        let (vp, _) = self.problem.reference.pair.vertical.delta();
        let (_, hq) = self.problem.reference.pair.horizontal.delta();
        CrackPoint::new(s.p + vp * i as i32, s.q + hq * j as i32)
    }

    /// The last `K` directions before move `t`, oldest first.
    fn window(&self, t: usize, mask: u64) -> Vec<Dir> {
        let k = self.params.context_len;
        let own = t.min(k);
        let prior = &self.problem.context.recent;
        let take = (k - own).min(prior.len());
        let mut w = prior[prior.len() - take..].to_vec();
        let pair = self.problem.reference.pair;
        for b in (0..own).rev() {
            w.push(if (mask >> b) & 1 == 1 { pair.vertical } else { pair.horizontal });
        }
        w
    }

    /// Distortion and bits of the move out of state `(i, j, mask)`, or
    /// `None` when the move is not allowed.
    fn step(&mut self, i: usize, j: usize, mask: u64, vertical: bool) -> Result<Option<(f64, f64)>> {
        let t = i + j;
        let pair = self.problem.reference.pair;
        let d = if vertical { pair.vertical } else { pair.horizontal };
        let c = self.problem.constraints;
        if t == 0 && c.first.is_some_and(|f| f != d) {
            return Ok(None);
        }
        if t + 1 == self.problem.reference.len()
            && (c.last.is_some_and(|l| l != d) || c.next_first.is_some_and(|n| n.opposite() == d))
        {
            return Ok(None);
        }
        let at = self.point(i, j);
        let next = at.step(d);
        let (w, h) = (self.shift.luma.width as i32, self.shift.luma.height as i32);
        let inside = if vertical {
            at.q > 0 && at.q < w && at.p.min(next.p) >= 0 && at.p.max(next.p) <= h
        } else {
            at.p > 0 && at.p < h && at.q.min(next.q) >= 0 && at.q.max(next.q) <= w
        };
        if !inside {
            return Ok(None);
        }
        let window = self.window(t, mask);
        let g = self.problem.context.edges_before + t;
        let bits = if g == 0 {
            FIRST_EDGE_BITS
        } else {
            let prev = *window.last().expect("nonempty context");
            match prev.turn_to(d) {
                None => return Ok(None),
                Some(turn) => aec::distribution_at(g, at, &window, self.params).bits(turn),
            }
        };
        let dist = if vertical {
            let row = at.p.min(next.p);
            let q_o = *self.problem.columns.get(&row).ok_or_else(|| {
                Error::Invalid(format!("row {row} is not crossed by the reference segment"))
            })?;
            match self.rows.get(&(row, at.q)) {
                Some(&x) => x,
                None => {
                    let x = self.shift.cost(row, q_o, at.q)?;
                    self.rows.insert((row, at.q), x);
                    x
                }
            }
        } else {
            0.0
        };
        Ok(Some((dist, bits)))
    }

    /// Cost-to-go `J` from state `(i, j, mask)`. The vertical move is tried
    /// first and kept on ties.
    fn go(&mut self, i: usize, j: usize, mask: u64) -> Result<f64> {
        if i == self.v && j == self.h {
            return Ok(0.0);
        }
        if let Some(&(c, _)) = self.memo.as_ref().and_then(|m| m.get(&(i, j, mask))) {
            return Ok(c);
        }
        let mut best = f64::INFINITY;
        let mut choice = true;
        for vertical in [true, false] {
            if (vertical && i == self.v) || (!vertical && j == self.h) {
                continue;
            }
            let Some((d, r)) = self.step(i, j, mask, vertical)? else {
                continue;
            };
            let here = d + self.lambda * r;
            if !here.is_finite() {
                continue;
            }
            let (ni, nj) = if vertical { (i + 1, j) } else { (i, j + 1) };
            let total = here + self.go(ni, nj, ((mask << 1) | vertical as u64) & self.mask_bits)?;
            if total < best {
                best = total;
                choice = vertical;
            }
        }
        if let Some(m) = self.memo.as_mut() {
            m.insert((i, j, mask), (best, choice));
        }
        Ok(best)
    }

    fn path(&self) -> Vec<Dir> {
        let memo = self.memo.as_ref().expect("memoized solver");
        let pair = self.problem.reference.pair;
        let (mut i, mut j, mut mask) = (0, 0, 0u64);
        let mut out = Vec::with_capacity(self.v + self.h);
        while i < self.v || j < self.h {
            let (_, vertical) = memo[&(i, j, mask)];
            if vertical {
                out.push(pair.vertical);
                i += 1;
            } else {
                out.push(pair.horizontal);
                j += 1;
            }
            mask = ((mask << 1) | vertical as u64) & self.mask_bits;
        }
        out
    }

    /// Cost of a given path, or `None` if some move is not allowed.
    fn evaluate(&mut self, dirs: &[Dir]) -> Result<Option<RdCost>> {
        let pair = self.problem.reference.pair;
        let (mut i, mut j, mut mask) = (0, 0, 0u64);
        let (mut dist, mut bits) = (0.0, 0.0);
        for &d in dirs {
            let vertical = d == pair.vertical;
            if !(vertical || d == pair.horizontal) || (vertical && i == self.v) || (!vertical && j == self.h) {
                return Ok(None);
            }
            let Some((dd, r)) = self.step(i, j, mask, vertical)? else {
                return Ok(None);
            };
            dist += dd;
            bits += r;
            if vertical {
                i += 1;
            } else {
                j += 1;
            }
            mask = ((mask << 1) | vertical as u64) & self.mask_bits;
        }
        if i != self.v || j != self.h {
            return Ok(None);
        }
        Ok(Some(RdCost::new(dist, bits, self.lambda)))
    }
}

/// Minimizes `D + lambda * R` over the monotone paths of the reference's
/// bounding rectangle. If every path costs `+inf` the reference is returned
/// unchanged.
pub fn solve_segment(problem: &SegmentProblem, shift: &ShiftCost, lambda: f64, params: &AecParams) -> Result<Solution> {
    let mut solver = Solver::new(problem, shift, lambda, params, true)?;
    let best = solver.go(0, 0, 0)?;
    if !best.is_finite() {
        log::warn!(
            "no finite-cost path for segment at {} (T={}); keeping it",
            problem.reference.start,
            problem.reference.len()
        );
        let cost = solver
            .evaluate(&problem.reference.dirs)?
            .unwrap_or(RdCost::new(f64::INFINITY, f64::INFINITY, lambda));
        return Ok(Solution {
            segment: problem.reference.clone(),
            cost,
        });
    }
    // an unchanged segment wins ties
    if let Some(cost) = solver.evaluate(&problem.reference.dirs)? {
        if cost.total <= best + 1e-12 * best.abs().max(1.0) {
            return Ok(Solution {
                segment: problem.reference.clone(),
                cost,
            });
        }
    }
    let dirs = solver.path();
    let cost = solver.evaluate(&dirs)?.expect("optimal path is feasible");
    let segment = Segment {
        start: problem.reference.start,
        pair: problem.reference.pair,
        dirs,
    };
    Ok(Solution { segment, cost })
}

/// Same recursion without the state table; exponential, for checking.
pub fn solve_segment_unmemoized(problem: &SegmentProblem, shift: &ShiftCost, lambda: f64, params: &AecParams) -> Result<f64> {
    Solver::new(problem, shift, lambda, params, false)?.go(0, 0, 0)
}

/// Cost of one particular path for `problem`, `None` if it is not allowed.
pub fn evaluate_path(
    problem: &SegmentProblem,
    dirs: &[Dir],
    shift: &ShiftCost,
    lambda: f64,
    params: &AecParams,
) -> Result<Option<RdCost>> {
    Solver::new(problem, shift, lambda, params, false)?.evaluate(dirs)
}

/// Optimal approximation of a standalone segment whose original vertical
/// edges are its own.
pub fn approximate_segment(seg: &Segment, ctx: &CodingContext, luma: &Luma, cfg: &ApproxConfig) -> Result<(Segment, RdCost)> {
    let problem = SegmentProblem::new(seg.clone(), ctx.clone());
    let shift = ShiftCost::new(luma, cfg.swim, 0.0);
    let s = solve_segment(&problem, &shift, cfg.lambda, &cfg.aec)?;
    Ok((s.segment, s.cost))
}

// ---------------------------------------------------------------------------
// Merging
// ---------------------------------------------------------------------------

/// The path `a + b` clamped into the rectangle spanned by `a.start` and
/// `b.end`, and the vertical-edge moves this implies: `(row, from, to)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub segment: Segment,
    pub moves: Vec<(i32, i32, i32)>,
}

pub fn project(a: &Segment, b: &Segment) -> Result<Option<Projection>> {
    if a.end() != b.start {
        return Err(Error::Chain(format!("segment ends at {} but the next starts at {}", a.end(), b.start)));
    }
    let (l0, l2) = (a.start, b.end());
    if l0 == l2 {
        return Ok(None);
    }
    let (pmin, pmax) = (l0.p.min(l2.p), l0.p.max(l2.p));
    let (qmin, qmax) = (l0.q.min(l2.q), l0.q.max(l2.q));
    let mut pts = a.points();
    pts.extend(b.points().into_iter().skip(1));
    let clamped: Vec<CrackPoint> = pts
        .iter()
        .map(|c| CrackPoint::new(c.p.clamp(pmin, pmax), c.q.clamp(qmin, qmax)))
        .collect();
    let mut dirs = Vec::new();
    for w in clamped.windows(2) {
        let delta = (w[1].p - w[0].p, w[1].q - w[0].q);
        if delta != (0, 0) {
            dirs.push(Dir::ALL.into_iter().find(|d| d.delta() == delta).expect("unit step"));
        }
    }
    let segment = Segment::new(l0, dirs)?;
    let mut original: HashMap<i32, Vec<i32>> = HashMap::new();
    for (row, q) in a.vertical_edges().into_iter().chain(b.vertical_edges()) {
        original.entry(row).or_default().push(q);
    }
    let projected: HashMap<i32, i32> = segment.vertical_edges().into_iter().collect();
    let mut rows: Vec<i32> = original.keys().copied().collect();
    rows.sort_unstable();
    let mut moves = Vec::with_capacity(rows.len());
    for row in rows {
        let qs = &original[&row];
        match (projected.get(&row), qs.as_slice()) {
            (Some(&to), [from]) => moves.push((row, *from, to)),
            (None, [qa, qb]) => moves.push((row, *qa, *qb)),
            _ => {
                return Err(Error::Chain(format!(
                    "row {row} crossed {} times by two monotone segments",
                    qs.len()
                )))
            }
        }
    }
    Ok(Some(Projection { segment, moves }))
}

/// Distortion charged for the moves of a projection.
pub fn merge_distortion(p: &Projection, shift: &ShiftCost) -> Result<f64> {
    let mut total = 0.0;
    for &(row, from, to) in &p.moves {
        if from != to {
            total += shift.cost(row, from, to)?;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Merged {
    /// Projected reference path.
    pub reference: Segment,
    pub solution: Solution,
    pub merge_distortion: f64,
}

impl Merged {
    pub fn total(&self) -> f64 {
        self.solution.cost.total + self.merge_distortion
    }
}

fn project_and_solve(
    a: &Segment,
    b: &Segment,
    ctx: &CodingContext,
    constraints: Constraints,
    shift: &ShiftCost,
    cfg: &ApproxConfig,
) -> Result<Option<Merged>> {
    let Some(p) = project(a, b)? else {
        return Ok(None);
    };
    let md = merge_distortion(&p, shift)?;
    if !md.is_finite() {
        return Ok(None);
    }
    let problem = SegmentProblem::new(p.segment.clone(), ctx.clone()).with_constraints(constraints);
    let solution = solve_segment(&problem, shift, cfg.lambda, &cfg.aec)?;
    if !solution.cost.total.is_finite() {
        return Ok(None);
    }
    Ok(Some(Merged {
        reference: p.segment,
        solution,
        merge_distortion: md,
    }))
}

/// Merges two consecutive segments if the merged, re-optimized segment
/// plus its merge distortion is cheaper than approximating both.
pub fn merge_segments(a: &Segment, b: &Segment, ctx: &CodingContext, luma: &Luma, cfg: &ApproxConfig) -> Result<Option<Merged>> {
    let shift = ShiftCost::new(luma, cfg.swim, 0.0);
    let k = cfg.aec.context_len;
    let sa = solve_segment(&SegmentProblem::new(a.clone(), ctx.clone()), &shift, cfg.lambda, &cfg.aec)?;
    let ctx_b = ctx.extend(&sa.segment.dirs, k);
    let sb = solve_segment(&SegmentProblem::new(b.clone(), ctx_b), &shift, cfg.lambda, &cfg.aec)?;
    let Some(m) = project_and_solve(a, b, ctx, Constraints::default(), &shift, cfg)? else {
        return Ok(None);
    };
    Ok((m.total() < sa.cost.total + sb.cost.total).then_some(m))
}

// ---------------------------------------------------------------------------
// Whole contours
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Unit {
    reference: Segment,
    solution: Solution,
    merge_distortion: f64,
}

impl Unit {
    fn total(&self) -> f64 {
        self.solution.cost.total + self.merge_distortion
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourApproximation {
    pub original: Contour,
    pub contour: Contour,
    /// Distortion includes merge distortion; rate is the contour's ideal
    /// code length.
    pub cost: RdCost,
    /// `(reference, approximation)` per final segment. A merged segment's
    /// reference is its projected path.
    pub units: Vec<(Segment, Segment)>,
    /// Segment count `M` before merging.
    pub segments_before: usize,
    /// Set when the approximation was discarded to keep topology.
    pub reverted: bool,
    /// Segments put back to their references to keep the contour simple.
    pub kept_segments: usize,
}

impl ContourApproximation {
    fn unchanged(contour: &Contour, cfg: &ApproxConfig) -> Self {
        let segs = split_segments(contour);
        Self {
            original: contour.clone(),
            contour: contour.clone(),
            cost: RdCost::new(0.0, aec::estimate_rate(contour, &cfg.aec), cfg.lambda),
            units: segs.iter().map(|s| (s.clone(), s.clone())).collect(),
            segments_before: segs.len(),
            reverted: true,
            kept_segments: segs.len(),
        }
    }
}

struct Assembly<'a> {
    closed: bool,
    first: Dir,
    last: Dir,
    shift: &'a ShiftCost<'a>,
    cfg: &'a ApproxConfig,
}

impl Assembly<'_> {
    fn context(&self, units: &[Unit], u: usize) -> CodingContext {
        let k = self.cfg.aec.context_len;
        units[..u]
            .iter()
            .fold(CodingContext::default(), |ctx, unit| ctx.extend(&unit.solution.segment.dirs, k))
    }

    /// Constraints for a unit that will occupy positions `u..u + span` of
    /// `units`.
    fn constraints(&self, units: &[Unit], u: usize, span: usize) -> Constraints {
        let end = u + span;
        Constraints {
            first: (self.closed && u == 0).then_some(self.first),
            last: (self.closed && end == units.len()).then_some(self.last),
            next_first: units.get(end).map(|n| n.reference.dirs[0]),
        }
    }

    fn solve(&self, reference: &Segment, ctx: CodingContext, c: Constraints) -> Result<Solution> {
        let problem = SegmentProblem::new(reference.clone(), ctx).with_constraints(c);
        solve_segment(&problem, self.shift, self.cfg.lambda, &self.cfg.aec)
    }

    fn resolve(&self, units: &mut [Unit], u: usize) -> Result<()> {
        let ctx = self.context(units, u);
        let c = self.constraints(units, u, 1);
        units[u].solution = self.solve(&units[u].reference, ctx, c)?;
        Ok(())
    }

    /// Whether a merged reference can replace units `i, i + 1` without
    /// making a neighbour's reference infeasible.
    fn merge_fits(&self, units: &[Unit], i: usize, reference: &Segment) -> bool {
        let first = reference.dirs[0];
        let last = *reference.dirs.last().expect("nonempty");
        if let Some(prev) = i.checked_sub(1).map(|p| &units[p]) {
            let ref_last = *prev.reference.dirs.last().expect("nonempty");
            let app_last = *prev.solution.segment.dirs.last().expect("nonempty");
            if first == ref_last.opposite() || first == app_last.opposite() {
                return false;
            }
        }
        if let Some(next) = units.get(i + 2) {
            if last == next.reference.dirs[0].opposite() {
                return false;
            }
        }
        if self.closed && ((i == 0 && first != self.first) || (i + 2 == units.len() && last != self.last)) {
            return false;
        }
        true
    }

    fn try_merge(&self, units: &[Unit], i: usize) -> Result<Option<Unit>> {
        let (a, b) = (&units[i], &units[i + 1]);
        let Some(p) = project(&a.reference, &b.reference)? else {
            return Ok(None);
        };
        if !self.merge_fits(units, i, &p.segment) {
            return Ok(None);
        }
        let md = merge_distortion(&p, self.shift)?;
        if !md.is_finite() {
            return Ok(None);
        }
        let ctx = self.context(units, i);
        let c = self.constraints(units, i, 2);
        let solution = self.solve(&p.segment, ctx, c)?;
        let merged = Unit {
            reference: p.segment,
            solution,
            merge_distortion: md + a.merge_distortion + b.merge_distortion,
        };
        let gain = a.total() + b.total() - merged.total();
        if !(gain > 0.0) {
            return Ok(None);
        }
        let start = units[0].reference.start;
        let dirs = units[..i]
            .iter()
            .chain(std::iter::once(&merged))
            .chain(&units[i + 2..])
            .flat_map(|u| u.solution.segment.dirs.iter().copied());
        if !walk_is_simple(start, dirs, self.closed) {
            return Ok(None);
        }
        Ok(Some(merged))
    }

    fn run(&self, contour: &Contour, merge: bool) -> Result<Vec<Unit>> {
        let mut units: Vec<Unit> = split_segments(contour)
            .into_iter()
            .map(|s| Unit {
                solution: Solution {
                    segment: s.clone(),
                    cost: RdCost::new(0.0, 0.0, self.cfg.lambda),
                },
                reference: s,
                merge_distortion: 0.0,
            })
            .collect();
        for u in 0..units.len() {
            self.resolve(&mut units, u)?;
        }
        if !merge {
            return Ok(units);
        }
        loop {
            let mut changed = false;
            let mut i = 0;
            while i + 1 < units.len() {
                self.resolve(&mut units, i + 1)?;
                match self.try_merge(&units, i)? {
                    Some(m) => {
                        units.splice(i..i + 2, std::iter::once(m));
                        changed = true;
                    }
                    None => i += 1,
                }
            }
            if !changed {
                return Ok(units);
            }
        }
    }
}

/// Lattice walk from `start` visits no point twice, except that a closed
/// walk returns to `start` once at the end; a closed walk must also start
/// at its raster-first point.
fn walk_is_simple(start: CrackPoint, dirs: impl Iterator<Item = Dir>, closed: bool) -> bool {
    let dirs: Vec<Dir> = dirs.collect();
    walk_conflict(start, &dirs, closed).is_none()
}

/// Indices of two edges that break [`walk_is_simple`], if any.
fn walk_conflict(start: CrackPoint, dirs: &[Dir], closed: bool) -> Option<(usize, usize)> {
    let mut seen = HashMap::new();
    seen.insert(start, 0);
    let mut at = start;
    for (i, &d) in dirs.iter().enumerate() {
        if i > 0 && dirs[i - 1].opposite() == d {
            return Some((i - 1, i));
        }
        at = at.step(d);
        if closed && (at.p, at.q) < (start.p, start.q) {
            return Some((i, i));
        }
        let is_end = i + 1 == dirs.len();
        if let Some(&e) = seen.get(&at) {
            if !(closed && is_end && at == start) {
                return Some((e, i));
            }
        }
        seen.insert(at, i);
    }
    None
}

/// Puts units back to their references until the contour is simple again.
/// Returns whether that worked and how many units were put back.
fn repair(units: &mut [Unit], start: CrackPoint, closed: bool, lambda: f64) -> (bool, usize) {
    let mut reset = vec![false; units.len()];
    loop {
        let mut owner = Vec::new();
        let mut dirs = Vec::new();
        for (u, unit) in units.iter().enumerate() {
            owner.extend(std::iter::repeat_n(u, unit.solution.segment.len()));
            dirs.extend_from_slice(&unit.solution.segment.dirs);
        }
        let Some((a, b)) = walk_conflict(start, &dirs, closed) else {
            return (true, reset.iter().filter(|&&r| r).count());
        };
        let mut hit: Vec<usize> = [owner[a], owner[b]].into_iter().filter(|&u| !reset[u]).collect();
        if hit.is_empty() {
            hit = (0..units.len()).filter(|&u| !reset[u]).collect();
            if hit.is_empty() {
                return (false, units.len());
            }
        }
        for u in hit {
            reset[u] = true;
            let unit = &mut units[u];
            unit.solution = Solution {
                segment: unit.reference.clone(),
                cost: RdCost::new(0.0, 0.0, lambda),
            };
        }
    }
}

/// Whole-contour objective of the current solutions, `None` when the
/// walk touches itself.
fn objective(units: &[Unit], start: CrackPoint, closed: bool, cfg: &ApproxConfig) -> Option<f64> {
    let dirs: Vec<Dir> = units.iter().flat_map(|u| u.solution.segment.dirs.iter().copied()).collect();
    if walk_conflict(start, &dirs, closed).is_some() {
        return None;
    }
    let segments: Vec<Segment> = units.iter().map(|u| u.solution.segment.clone()).collect();
    let out = Contour::from_segments(&segments).ok()?;
    let distortion: f64 = units.iter().map(|u| u.solution.cost.distortion + u.merge_distortion).sum();
    Some(distortion + cfg.lambda * aec::estimate_rate(&out, &cfg.aec))
}

/// Puts single segments back to their references while that lowers the
/// whole-contour objective. The per-segment search prices only its own
/// edges, so a change can raise the bits of the segments after it.
fn polish(units: &mut [Unit], start: CrackPoint, closed: bool, cfg: &ApproxConfig) -> usize {
    let Some(mut best) = objective(units, start, closed, cfg) else {
        return 0;
    };
    let mut restored = 0;
    loop {
        let mut improved = false;
        for u in 0..units.len() {
            if units[u].solution.segment == units[u].reference {
                continue;
            }
            let kept = std::mem::replace(
                &mut units[u].solution,
                Solution {
                    segment: units[u].reference.clone(),
                    cost: RdCost::new(0.0, 0.0, cfg.lambda),
                },
            );
            match objective(units, start, closed, cfg) {
                Some(j) if j < best - 1e-9 * best.abs().max(1.0) => {
                    best = j;
                    restored += 1;
                    improved = true;
                }
                _ => units[u].solution = kept,
            }
        }
        if !improved {
            return restored;
        }
    }
}

fn assemble(contour: &Contour, units: &[Unit], cfg: &ApproxConfig) -> Result<ContourApproximation> {
    let segments: Vec<Segment> = units.iter().map(|u| u.solution.segment.clone()).collect();
    let out = Contour::from_segments(&segments)?;
    let distortion: f64 = units.iter().map(|u| u.solution.cost.distortion + u.merge_distortion).sum();
    Ok(ContourApproximation {
        original: contour.clone(),
        cost: RdCost::new(distortion, aec::estimate_rate(&out, &cfg.aec), cfg.lambda),
        contour: out,
        units: units.iter().map(|u| (u.reference.clone(), u.solution.segment.clone())).collect(),
        segments_before: split_segments(contour).len(),
        reverted: false,
        kept_segments: 0,
    })
}

/// Approximates one contour given the shift cost model of its view.
pub fn approximate_contour_with(contour: &Contour, shift: &ShiftCost, cfg: &ApproxConfig) -> Result<ContourApproximation> {
    let dirs = contour.dirs();
    let closed = contour.is_closed();
    let asm = Assembly {
        closed,
        first: dirs[0],
        last: *dirs.last().expect("nonempty"),
        shift,
        cfg,
    };
    let attempts: &[bool] = if cfg.merge { &[true, false] } else { &[false] };
    for &merge in attempts {
        let mut units = asm.run(contour, merge)?;
        let (ok, reset) = repair(&mut units, contour.start, closed, cfg.lambda);
        if ok {
            let restored = polish(&mut units, contour.start, closed, cfg);
            if restored > 0 {
                log::debug!("contour at {}: {restored} segments restored by the whole-contour check", contour.start);
            }
            if reset > 0 {
                log::debug!("contour at {}: {reset} segments kept unchanged to avoid self-contact", contour.start);
            }
            let mut result = assemble(contour, &units, cfg)?;
            result.kept_segments = reset;
            return Ok(result);
        }
        log::debug!("approximation of contour at {} touches itself (merge={merge})", contour.start);
    }
    log::warn!("keeping contour at {} unchanged to preserve its topology", contour.start);
    Ok(ContourApproximation::unchanged(contour, cfg))
}

/// Algorithm entry point for one contour of a depth map with its color
/// image.
pub fn approximate_contour(contour: &Contour, depth: &DepthImage, color: &ColorImage, cfg: &ApproxConfig) -> Result<ContourApproximation> {
    if depth.width != color.width || depth.height != color.height {
        return Err(Error::Dimension("depth and color images differ in size".into()));
    }
    cfg.validate()?;
    contour.validate(depth.width, depth.height)?;
    let luma = Luma::of(color);
    approximate_contour_with(contour, &ShiftCost::new(&luma, cfg.swim, 0.0), cfg)
}

/// Approximates all contours of a view. Contours whose approximations come
/// to share lattice points they did not share before are kept unchanged.
pub fn approximate_contours(contours: &[Contour], shift: &ShiftCost, cfg: &ApproxConfig) -> Result<Vec<ContourApproximation>> {
    cfg.validate()?;
    let mut out = contours
        .par_iter()
        .map(|c| approximate_contour_with(c, shift, cfg))
        .collect::<Result<Vec<_>>>()?;
    let original: Vec<HashSet<CrackPoint>> = contours.iter().map(|c| c.points().into_iter().collect()).collect();
    loop {
        let current: Vec<HashSet<CrackPoint>> = out.iter().map(|a| a.contour.points().into_iter().collect()).collect();
        let mut owner: HashMap<CrackPoint, Vec<usize>> = HashMap::new();
        for (i, pts) in current.iter().enumerate() {
            for &p in pts {
                owner.entry(p).or_default().push(i);
            }
        }
        let mut clash = vec![false; out.len()];
        for (p, ids) in &owner {
            for (x, &i) in ids.iter().enumerate() {
                for &j in &ids[x + 1..] {
                    if !(original[i].contains(p) && original[j].contains(p)) {
                        clash[i] |= !out[i].reverted;
                        clash[j] |= !out[j].reverted;
                    }
                }
            }
        }
        if !clash.contains(&true) {
            return Ok(out);
        }
        for (i, hit) in clash.into_iter().enumerate() {
            if hit {
                log::warn!("contour at {} collides with a neighbour; keeping it unchanged", contours[i].start);
                out[i] = ContourApproximation::unchanged(&contours[i], cfg);
            }
        }
    }
}
