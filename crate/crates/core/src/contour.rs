//! Between-pixel (crack) contours: detection in a depth map, differential
//! chain codes and the split into two-direction segments.
//!
//! Coordinates live on the pixel-corner lattice: point `(p, q)` is the top
//! left corner of pixel `(p, q)`, so an image of `h x w` pixels has corners
//! `0..=h x 0..=w`. `p` grows downwards, `q` to the right.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image_io::DepthImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CrackPoint {
    pub p: i32,
    pub q: i32,
}

impl CrackPoint {
    pub const fn new(p: i32, q: i32) -> Self {
        Self { p, q }
    }

    #[inline]
    pub fn step(self, d: Dir) -> Self {
        let (dp, dq) = d.delta();
        Self {
            p: self.p + dp,
            q: self.q + dq,
        }
    }
}

impl fmt::Display for CrackPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.p, self.q)
    }
}

/// Absolute edge direction. The discriminant doubles as the 2-bit code used
/// in bitstreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dir {
    East = 0,
    South = 1,
    West = 2,
    North = 3,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::East, Dir::South, Dir::West, Dir::North];

    pub fn from_code(code: u8) -> Option<Dir> {
        Dir::ALL.get(code as usize).copied()
    }

    #[inline]
    pub fn code(self) -> u8 {
        self as u8
    }

    /// `(dp, dq)` lattice step.
    #[inline]
    pub fn delta(self) -> (i32, i32) {
        match self {
            Dir::East => (0, 1),
            Dir::South => (1, 0),
            Dir::West => (0, -1),
            Dir::North => (-1, 0),
        }
    }

    #[inline]
    pub fn is_vertical(self) -> bool {
        matches!(self, Dir::South | Dir::North)
    }

    #[inline]
    pub fn opposite(self) -> Dir {
        Dir::ALL[(self as usize + 2) % 4]
    }

    #[inline]
    pub fn turn(self, t: Turn) -> Dir {
        let k = match t {
            Turn::Left => 3,
            Turn::Straight => 0,
            Turn::Right => 1,
        };
        Dir::ALL[(self as usize + k) % 4]
    }

    /// Relative symbol taking `self` to `next`, `None` for a reversal.
    #[inline]
    pub fn turn_to(self, next: Dir) -> Option<Turn> {
        match (next as usize + 4 - self as usize) % 4 {
            0 => Some(Turn::Straight),
            1 => Some(Turn::Right),
            3 => Some(Turn::Left),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Dir::East => 'E',
            Dir::South => 'S',
            Dir::West => 'W',
            Dir::North => 'N',
        }
    }

    pub fn from_letter(c: char) -> Option<Dir> {
        match c {
            'E' => Some(Dir::East),
            'S' => Some(Dir::South),
            'W' => Some(Dir::West),
            'N' => Some(Dir::North),
            _ => None,
        }
    }
}

/// Relative direction with respect to the previous edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Turn {
    Left = 0,
    Straight = 1,
    Right = 2,
}

impl Turn {
    pub const ALL: [Turn; 3] = [Turn::Left, Turn::Straight, Turn::Right];

    pub fn letter(self) -> char {
        match self {
            Turn::Left => 'l',
            Turn::Straight => 's',
            Turn::Right => 'r',
        }
    }

    pub fn from_letter(c: char) -> Option<Turn> {
        match c {
            'l' => Some(Turn::Left),
            's' => Some(Turn::Straight),
            'r' => Some(Turn::Right),
            _ => None,
        }
    }
}

/// Converts absolute directions to a first direction plus relative turns.
pub fn to_relative(dirs: &[Dir]) -> Result<(Dir, Vec<Turn>)> {
    let (&first, _) = dirs
        .split_first()
        .ok_or_else(|| Error::Chain("empty chain".into()))?;
    let rest = dirs
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            w[0].turn_to(w[1])
                .ok_or_else(|| Error::Chain(format!("doubling back at edge {}", i + 2)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((first, rest))
}

pub fn to_absolute(first: Dir, rest: &[Turn]) -> Vec<Dir> {
    let mut out = Vec::with_capacity(rest.len() + 1);
    let mut d = first;
    out.push(d);
    for &t in rest {
        d = d.turn(t);
        out.push(d);
    }
    out
}

/// Differential chain code anchored at a lattice point.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Contour {
    pub start: CrackPoint,
    pub first: Dir,
    pub rest: Vec<Turn>,
}

impl Contour {
    pub fn from_dirs(start: CrackPoint, dirs: &[Dir]) -> Result<Self> {
        let (first, rest) = to_relative(dirs)?;
        Ok(Self { start, first, rest })
    }

    /// Number of edges `T`.
    pub fn len(&self) -> usize {
        self.rest.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dirs(&self) -> Vec<Dir> {
        to_absolute(self.first, &self.rest)
    }

    /// All `T + 1` lattice points visited, start first.
    pub fn points(&self) -> Vec<CrackPoint> {
        let mut pts = Vec::with_capacity(self.len() + 1);
        let mut p = self.start;
        pts.push(p);
        for d in self.dirs() {
            p = p.step(d);
            pts.push(p);
        }
        pts
    }

    pub fn end(&self) -> CrackPoint {
        *self.points().last().expect("nonempty")
    }

    pub fn is_closed(&self) -> bool {
        self.end() == self.start
    }

    /// Checks that the walk stays on the `(height+1) x (width+1)` corner
    /// lattice and never reuses an edge.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        let mut p = self.start;
        let inside = |c: CrackPoint| c.p >= 0 && c.q >= 0 && c.p as usize <= height && c.q as usize <= width;
        if !inside(p) {
            return Err(Error::Chain(format!("start {p} outside lattice")));
        }
        for (i, d) in self.dirs().into_iter().enumerate() {
            let next = p.step(d);
            if !inside(next) {
                return Err(Error::Chain(format!("edge {} leaves the lattice at {next}", i + 1)));
            }
            let key = if p < next { (p, next) } else { (next, p) };
            if !seen.insert(key) {
                return Err(Error::Chain(format!("edge {} traversed twice", i + 1)));
            }
            p = next;
        }
        Ok(())
    }

    pub fn from_segments(segments: &[Segment]) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::Chain("no segments".into()))?;
        let mut dirs = Vec::new();
        let mut at = first.start;
        for s in segments {
            if s.start != at {
                return Err(Error::Chain(format!(
                    "segment starts at {} but previous ended at {at}",
                    s.start
                )));
            }
            dirs.extend_from_slice(&s.dirs);
            at = s.end();
        }
        Contour::from_dirs(first.start, &dirs)
    }
}

impl fmt::Display for Contour {
    /// `start=(p,q) first=D rest=lsr...`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "start={} first={} rest=", self.start, self.first.letter())?;
        for t in &self.rest {
            write!(f, "{}", t.letter())?;
        }
        Ok(())
    }
}

impl FromStr for Contour {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let bad = || Error::Format(format!("malformed contour line `{line}`"));
        let mut start = None;
        let mut first = None;
        let mut rest = None;
        for tok in line.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(bad)?;
            match k {
                "start" => {
                    let inner = v.strip_prefix('(').and_then(|s| s.strip_suffix(')')).ok_or_else(bad)?;
                    let (a, b) = inner.split_once(',').ok_or_else(bad)?;
                    start = Some(CrackPoint::new(
                        a.trim().parse().map_err(|_| bad())?,
                        b.trim().parse().map_err(|_| bad())?,
                    ));
                }
                "first" => {
                    let mut cs = v.chars();
                    first = match (cs.next(), cs.next()) {
                        (Some(c), None) => Dir::from_letter(c),
                        _ => None,
                    };
                    if first.is_none() {
                        return Err(bad());
                    }
                }
                "rest" => {
                    rest = Some(v.chars().map(|c| Turn::from_letter(c).ok_or_else(bad)).collect::<Result<Vec<_>>>()?);
                }
                _ => return Err(bad()),
            }
        }
        Ok(Contour {
            start: start.ok_or_else(bad)?,
            first: first.ok_or_else(bad)?,
            rest: rest.unwrap_or_default(),
        })
    }
}

/// One line per contour.
pub fn dump_contours(contours: &[Contour]) -> String {
    let mut s = String::new();
    for c in contours {
        s.push_str(&c.to_string());
        s.push('\n');
    }
    s
}

pub fn parse_contours(text: &str) -> Result<Vec<Contour>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::parse)
        .collect()
}

// ---------------------------------------------------------------------------
// Segments
// ---------------------------------------------------------------------------

/// Two non-opposite directions a segment may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DirPair {
    pub vertical: Dir,
    pub horizontal: Dir,
}

impl DirPair {
    pub fn contains(self, d: Dir) -> bool {
        d == self.vertical || d == self.horizontal
    }
}

/// A run of edges using only the two directions of `pair`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Segment {
    pub start: CrackPoint,
    pub pair: DirPair,
    pub dirs: Vec<Dir>,
}

impl Segment {
    /// Builds a segment, inferring the pair. An axis that never occurs
    /// defaults to South / East.
    pub fn new(start: CrackPoint, dirs: Vec<Dir>) -> Result<Self> {
        let v = dirs.iter().copied().find(|d| d.is_vertical());
        let h = dirs.iter().copied().find(|d| !d.is_vertical());
        let pair = DirPair {
            vertical: v.unwrap_or(Dir::South),
            horizontal: h.unwrap_or(Dir::East),
        };
        if let Some(bad) = dirs.iter().find(|d| !pair.contains(**d)) {
            return Err(Error::Chain(format!(
                "direction {} outside segment pair {{{},{}}}",
                bad.letter(),
                pair.vertical.letter(),
                pair.horizontal.letter()
            )));
        }
        Ok(Self { start, pair, dirs })
    }

    /// `T`.
    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    /// `V`, the number of vertical edges.
    pub fn vertical_count(&self) -> usize {
        self.dirs.iter().filter(|d| d.is_vertical()).count()
    }

    /// End point from `(T, V)` and the pair signs alone.
    pub fn end(&self) -> CrackPoint {
        segment_endpoint(self.start, self.pair, self.len(), self.vertical_count())
    }

    pub fn points(&self) -> Vec<CrackPoint> {
        let mut pts = Vec::with_capacity(self.len() + 1);
        let mut p = self.start;
        pts.push(p);
        for &d in &self.dirs {
            p = p.step(d);
            pts.push(p);
        }
        pts
    }

    /// For every vertical edge: the pixel row it crosses and its column.
    pub fn vertical_edges(&self) -> Vec<(i32, i32)> {
        let mut out = Vec::with_capacity(self.vertical_count());
        let mut p = self.start;
        for &d in &self.dirs {
            let next = p.step(d);
            if d.is_vertical() {
                out.push((p.p.min(next.p), p.q));
            }
            p = next;
        }
        out
    }
}

/// `(p1 ± V, q1 ± (T - V))` with signs taken from the pair.
pub fn segment_endpoint(start: CrackPoint, pair: DirPair, len: usize, vertical: usize) -> CrackPoint {
    let (vp, _) = pair.vertical.delta();
    let (_, hq) = pair.horizontal.delta();
    CrackPoint {
        p: start.p + vp * vertical as i32,
        q: start.q + hq * (len - vertical) as i32,
    }
}

/// Splits a contour into maximal two-direction segments. A segment ends
/// right before the first edge that is opposite to a direction it already
/// uses.
pub fn split_segments(contour: &Contour) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut start = contour.start;
    let mut at = contour.start;
    let mut cur: Vec<Dir> = Vec::new();
    let mut vertical: Option<Dir> = None;
    let mut horizontal: Option<Dir> = None;
    for d in contour.dirs() {
        let slot = if d.is_vertical() { &mut vertical } else { &mut horizontal };
        match *slot {
            Some(existing) if existing != d => {
                out.push(Segment::new(start, std::mem::take(&mut cur)).expect("two-direction run"));
                start = at;
                vertical = None;
                horizontal = None;
                if d.is_vertical() {
                    vertical = Some(d);
                } else {
                    horizontal = Some(d);
                }
            }
            _ => *slot = Some(d),
        }
        cur.push(d);
        at = at.step(d);
    }
    if !cur.is_empty() {
        out.push(Segment::new(start, cur).expect("two-direction run"));
    }
    out
}

// ---------------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------------

/// Crack edges on the corner lattice of a `width x height` image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    /// `horiz[p * width + q]`: edge `(p,q)-(p,q+1)`, `p` in `0..=height`.
    horiz: Vec<bool>,
    /// `vert[p * (width + 1) + q]`: edge `(p,q)-(p+1,q)`, `q` in `0..=width`.
    vert: Vec<bool>,
}

impl EdgeMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            horiz: vec![false; (height + 1) * width],
            vert: vec![false; height * (width + 1)],
        }
    }

    /// Marks a crack edge wherever two 4-adjacent pixels differ by at least
    /// `threshold`.
    pub fn from_depth(depth: &DepthImage, threshold: u8) -> Self {
        let (w, h) = (depth.width, depth.height);
        let mut map = Self::empty(w, h);
        let thr = threshold.max(1) as i32;
        for r in 0..h {
            for c in 0..w {
                let v = depth.get(r, c) as i32;
                if c + 1 < w && (v - depth.get(r, c + 1) as i32).abs() >= thr {
                    map.vert[r * (w + 1) + c + 1] = true;
                }
                if r + 1 < h && (v - depth.get(r + 1, c) as i32).abs() >= thr {
                    map.horiz[(r + 1) * w + c] = true;
                }
            }
        }
        map
    }

    /// Rasterizes contour edges. Edges outside the lattice are ignored.
    pub fn from_contours(width: usize, height: usize, contours: &[Contour]) -> Self {
        let mut map = Self::empty(width, height);
        for c in contours {
            let pts = c.points();
            for (a, d) in pts.iter().zip(c.dirs()) {
                if let Some(i) = map.index(*a, d) {
                    map.set_index(i, true);
                }
            }
        }
        map
    }

    /// Storage slot of the edge leaving `at` in direction `d`.
    fn index(&self, at: CrackPoint, d: Dir) -> Option<(bool, usize)> {
        let (w, h) = (self.width as i32, self.height as i32);
        let (p, q) = (at.p, at.q);
        if p < 0 || q < 0 || p > h || q > w {
            return None;
        }
        match d {
            Dir::East if q < w => Some((true, (p * w + q) as usize)),
            Dir::West if q > 0 => Some((true, (p * w + q - 1) as usize)),
            Dir::South if p < h => Some((false, (p * (w + 1) + q) as usize)),
            Dir::North if p > 0 => Some((false, ((p - 1) * (w + 1) + q) as usize)),
            _ => None,
        }
    }

    fn get_index(&self, (h, i): (bool, usize)) -> bool {
        if h {
            self.horiz[i]
        } else {
            self.vert[i]
        }
    }

    fn set_index(&mut self, (h, i): (bool, usize), v: bool) {
        if h {
            self.horiz[i] = v;
        } else {
            self.vert[i] = v;
        }
    }

    /// Vertical crack between pixels `(row, col - 1)` and `(row, col)`.
    pub fn vertical(&self, row: usize, col: usize) -> bool {
        self.vert[row * (self.width + 1) + col]
    }

    /// Horizontal crack between pixels `(row - 1, col)` and `(row, col)`.
    pub fn horizontal(&self, row: usize, col: usize) -> bool {
        self.horiz[row * self.width + col]
    }

    pub fn has(&self, at: CrackPoint, d: Dir) -> bool {
        self.index(at, d).is_some_and(|i| self.get_index(i))
    }

    pub fn edge_count(&self) -> usize {
        self.horiz.iter().filter(|&&b| b).count() + self.vert.iter().filter(|&&b| b).count()
    }

    /// Links the edges into chains.
    ///
    /// Chains with a loose end are traced first, seeded at odd-degree
    /// lattice points in raster order. Remaining edges form closed loops,
    /// each seeded at its topmost-then-leftmost point and started eastwards.
    /// At every step the walk prefers straight, then right, then left.
    pub fn trace(&self) -> Vec<Contour> {
        let mut unused = self.clone();
        let mut out = Vec::new();
        let (w, h) = (self.width as i32, self.height as i32);
        let degree = |m: &EdgeMap, at: CrackPoint| Dir::ALL.iter().filter(|&&d| m.has(at, d)).count();
        for odd_pass in [true, false] {
            for p in 0..=h {
                for q in 0..=w {
                    let at = CrackPoint::new(p, q);
                    if odd_pass && degree(self, at) % 2 == 0 {
                        continue;
                    }
                    while let Some(&d) = Dir::ALL.iter().find(|&&d| unused.has(at, d)) {
                        out.push(unused.follow(at, d));
                    }
                }
            }
        }
        out
    }

    fn follow(&mut self, start: CrackPoint, first: Dir) -> Contour {
        let mut dirs = vec![first];
        let i = self.index(start, first).expect("edge exists");
        self.set_index(i, false);
        let mut at = start.step(first);
        let mut cur = first;
        loop {
            let next = [Turn::Straight, Turn::Right, Turn::Left]
                .into_iter()
                .map(|t| cur.turn(t))
                .find(|&d| self.has(at, d));
            let Some(d) = next else { break };
            let i = self.index(at, d).expect("edge exists");
            self.set_index(i, false);
            dirs.push(d);
            at = at.step(d);
            cur = d;
        }
        Contour::from_dirs(start, &dirs).expect("trace never reverses")
    }
}

/// Finds all depth discontinuities of at least `threshold` and links them
/// into chains. Deterministic; a flat image yields no contours.
pub fn detect_contours(depth: &DepthImage, threshold: u8) -> Vec<Contour> {
    EdgeMap::from_depth(depth, threshold).trace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Dir::*;

    #[test]
    fn flat_image_has_no_contours() {
        let d = DepthImage::filled(8, 8, 100);
        assert!(detect_contours(&d, 30).is_empty());
    }

    #[test]
    fn vertical_step_gives_one_open_contour() {
        let mut d = DepthImage::filled(4, 4, 50);
        for r in 0..4 {
            d.set(r, 0, 200);
            d.set(r, 1, 200);
        }
        let cs = detect_contours(&d, 50);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].len(), 4);
        assert_eq!(cs[0].start, CrackPoint::new(0, 2));
        assert_eq!(cs[0].dirs(), vec![South; 4]);
    }

    #[test]
    fn single_pixel_is_a_closed_square() {
        let mut d = DepthImage::filled(5, 5, 0);
        d.set(2, 3, 255);
        let cs = detect_contours(&d, 30);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].len(), 4);
        assert!(cs[0].is_closed());
        assert_eq!(cs[0].start, CrackPoint::new(2, 3));
        assert_eq!(cs[0].dirs(), vec![East, South, West, North]);
    }

    #[test]
    fn relative_symbols() {
        let (first, rest) = to_relative(&[East, East, South]).unwrap();
        assert_eq!(first, East);
        assert_eq!(rest, vec![Turn::Straight, Turn::Right]);
        let (first, rest) = to_relative(&[South, West]).unwrap();
        assert_eq!(first, South);
        assert_eq!(rest, vec![Turn::Right]);
        assert_eq!(East.turn_to(North), Some(Turn::Left));
    }

    #[test]
    fn reversal_is_rejected() {
        let err = to_relative(&[East, West]).unwrap_err();
        assert!(err.to_string().contains("doubling back"));
        assert!(to_relative(&[]).is_err());
    }

    #[test]
    fn split_two_direction_contour_is_one_segment() {
        let c = Contour::from_dirs(CrackPoint::new(0, 0), &[East, East, South, South]).unwrap();
        let segs = split_segments(&c);
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].pair, DirPair { vertical: South, horizontal: East });
        assert_eq!((segs[0].len(), segs[0].vertical_count()), (4, 2));
    }

    #[test]
    fn split_at_first_violation() {
        let c = Contour::from_dirs(CrackPoint::new(0, 0), &[East, South, West]).unwrap();
        let segs = split_segments(&c);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].dirs, vec![East, South]);
        assert_eq!(segs[1].dirs, vec![West]);
        assert_eq!(segs[1].start, CrackPoint::new(1, 1));
    }

    #[test]
    fn worked_segment_example() {
        // six edges, four of them vertical, from (1,4) down and to the left
        let c = Contour::from_dirs(CrackPoint::new(1, 4), &[West, South, South, South, West, South]).unwrap();
        let segs = split_segments(&c);
        assert_eq!(segs.len(), 1);
        let s = &segs[0];
        assert_eq!((s.len(), s.vertical_count()), (6, 4));
        assert_eq!(s.start, CrackPoint::new(1, 4));
        assert_eq!(s.end(), CrackPoint::new(5, 2));
        assert_eq!(*s.points().last().unwrap(), s.end());
    }

    #[test]
    fn endpoint_formula_edge_cases() {
        let pair = DirPair { vertical: South, horizontal: West };
        let s = CrackPoint::new(1, 4);
        assert_eq!(segment_endpoint(s, pair, 6, 4), CrackPoint::new(5, 2));
        assert_eq!(segment_endpoint(s, pair, 3, 3), CrackPoint::new(4, 4));
        assert_eq!(segment_endpoint(s, pair, 3, 0), CrackPoint::new(1, 1));
        let up = DirPair { vertical: North, horizontal: East };
        assert_eq!(segment_endpoint(CrackPoint::new(5, 0), up, 5, 2), CrackPoint::new(3, 3));
    }

    #[test]
    fn dump_format_roundtrip() {
        let c = Contour::from_dirs(CrackPoint::new(3, 7), &[South, South, West, North]).unwrap();
        let line = c.to_string();
        assert_eq!(line, "start=(3,7) first=S rest=srr");
        assert_eq!(line.parse::<Contour>().unwrap(), c);
        assert!("start=(1,2) first=Q rest=".parse::<Contour>().is_err());
    }

    #[test]
    fn detection_is_idempotent_on_edge_map() {
        let mut d = DepthImage::filled(12, 10, 10);
        for r in 2..7 {
            for c in 3..9 {
                d.set(r, c, 90);
            }
        }
        d.set(7, 5, 90);
        d.set(1, 4, 90);
        let cs = detect_contours(&d, 30);
        let again = EdgeMap::from_contours(12, 10, &cs).trace();
        assert_eq!(cs, again);
    }

    fn random_chain() -> impl Strategy<Value = Vec<Dir>> {
        (0u8..4, prop::collection::vec(0u8..3, 0..60)).prop_map(|(f, turns)| {
            let mut d = Dir::from_code(f).unwrap();
            let mut out = vec![d];
            for t in turns {
                d = d.turn(Turn::ALL[t as usize]);
                out.push(d);
            }
            out
        })
    }

    proptest! {
        #[test]
        fn relative_roundtrip(chain in random_chain()) {
            let (first, rest) = to_relative(&chain).unwrap();
            prop_assert_eq!(to_absolute(first, &rest), chain);
        }

        #[test]
        fn segments_reassemble_and_endpoints_agree(chain in random_chain()) {
            let c = Contour::from_dirs(CrackPoint::new(100, 100), &chain).unwrap();
            let segs = split_segments(&c);
            for s in &segs {
                prop_assert_eq!(*s.points().last().unwrap(), s.end());
                prop_assert!(s.dirs.iter().all(|d| s.pair.contains(*d)));
            }
            // maximality: the next segment's first edge violates the pair
            for w in segs.windows(2) {
                let d = w[1].dirs[0];
                prop_assert!(w[0].dirs.contains(&d.opposite()));
            }
            prop_assert_eq!(Contour::from_segments(&segs).unwrap(), c);
        }
    }
}
