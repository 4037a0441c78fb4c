//! Marching squares on a scalar grid: iso-lines per level and the polygonal
//! regions between consecutive levels.
//!
//! Every vertex has a combinatorial identity (a grid corner, or the crossing
//! of one level with one grid edge), so neighbouring cells agree exactly on
//! shared geometry. Each cell is cut by its contour chords into faces, and
//! faces of one band that share an edge are merged into regions.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar field sampled on a rectilinear grid; `values[j * nx + i]` is the
/// value at `(xs[i], ys[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
}

/// `n` nodes from `lo` to `hi`; written so that nodes whose exact position is
/// representable (such as 0 and 1 on the default landscape axis) are hit exactly.
pub fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let m = (n - 1) as f64;
    (0..n)
        .map(|i| (lo * (m - i as f64) + hi * i as f64) / m)
        .collect()
}

impl Grid {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || ys.len() < 2 {
            return Err(Error::InvalidConfig("grid needs at least 2x2 nodes".into()));
        }
        if values.len() != xs.len() * ys.len() {
            return Err(Error::LengthMismatch {
                expected: xs.len() * ys.len(),
                got: values.len(),
            });
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&xs) || !increasing(&ys) {
            return Err(Error::InvalidConfig("grid axes must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("grid values must be finite".into()));
        }
        Ok(Self { xs, ys, values })
    }

    pub fn nx(&self) -> usize {
        self.xs.len()
    }

    pub fn ny(&self) -> usize {
        self.ys.len()
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx() + i]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn bounds(&self) -> [f64; 4] {
        [self.xs[0], *self.xs.last().unwrap(), self.ys[0], *self.ys.last().unwrap()]
    }

    /// Bilinear interpolation; exact linear interpolation along grid edges.
    pub fn interpolate(&self, x: f64, y: f64) -> f64 {
        let seg = |axis: &[f64], v: f64| {
            let k = axis.partition_point(|&a| a <= v).clamp(1, axis.len() - 1) - 1;
            (k, (v - axis[k]) / (axis[k + 1] - axis[k]))
        };
        let (i, tx) = seg(&self.xs, x);
        let (j, ty) = seg(&self.ys, y);
        let lo = self.value(i, j) + tx * (self.value(i + 1, j) - self.value(i, j));
        let hi = self.value(i, j + 1) + tx * (self.value(i + 1, j + 1) - self.value(i, j + 1));
        lo + ty * (hi - lo)
    }
}

/// `count` equally spaced levels strictly between the grid minimum and maximum.
pub fn default_levels(grid: &Grid, count: usize) -> Vec<f64> {
    let (lo, hi) = (grid.min(), grid.max());
    if !(hi > lo) {
        return Vec::new();
    }
    let n = (count + 1) as f64;
    (1..=count).map(|k| lo + (hi - lo) * k as f64 / n).collect()
}

/// Index of the half-open band `[L_j, L_{j+1})` holding `value`; band 0 lies
/// below the first level.
pub fn band_of(levels: &[f64], value: f64) -> usize {
    levels.partition_point(|&l| l <= value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Edge {
    vertical: bool,
    i: u32,
    j: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Vertex {
    Corner(u32, u32),
    Cross(Edge, u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourLevel {
    pub level: f64,
    pub lines: Vec<Polyline>,
}

/// A connected set of same-band cell faces. Rings with positive signed area
/// are outer boundaries, negative ones are holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: usize,
    pub band: usize,
    pub rings: Vec<Vec<[f64; 2]>>,
    pub area: f64,
}

impl Region {
    /// Even-odd containment over all rings.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let mut inside = false;
        for ring in &self.rings {
            let n = ring.len();
            for k in 0..n {
                let [x1, y1] = ring[k];
                let [x2, y2] = ring[(k + 1) % n];
                if (y1 > y) != (y2 > y) && x < x1 + (y - y1) * (x2 - x1) / (y2 - y1) {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        self.rings
            .iter()
            .flat_map(|r| (0..r.len()).map(move |k| (r[k], r[(k + 1) % r.len()])))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourRegionSet {
    pub levels: Vec<f64>,
    pub bounds: [f64; 4],
    pub contours: Vec<ContourLevel>,
    pub regions: Vec<Region>,
}

impl ContourRegionSet {
    pub fn band_of(&self, value: f64) -> usize {
        band_of(&self.levels, value)
    }

    pub fn locate(&self, x: f64, y: f64) -> Option<usize> {
        self.regions.iter().position(|r| r.contains(x, y))
    }

    pub fn regions_in_band(&self, band: usize) -> impl Iterator<Item = &Region> {
        self.regions.iter().filter(move |r| r.band == band)
    }
}

struct Builder<'a> {
    grid: &'a Grid,
    levels: &'a [f64],
}

impl Builder<'_> {
    fn edge_ends(&self, e: Edge) -> ((u32, u32), (u32, u32)) {
        let (i, j) = (e.i, e.j);
        if e.vertical {
            ((i, j), (i, j + 1))
        } else {
            ((i, j), (i + 1, j))
        }
    }

    fn corner_value(&self, (i, j): (u32, u32)) -> f64 {
        self.grid.value(i as usize, j as usize)
    }

    fn levels_at_or_below(&self, v: f64) -> usize {
        band_of(self.levels, v)
    }

    /// Crossing levels of an edge in order from its first to its second corner.
    fn crossings(&self, e: Edge) -> Vec<u32> {
        let (a, b) = self.edge_ends(e);
        let (va, vb) = (self.corner_value(a), self.corner_value(b));
        let (na, nb) = (self.levels_at_or_below(va), self.levels_at_or_below(vb));
        if na <= nb {
            (na as u32..nb as u32).collect()
        } else {
            (nb as u32..na as u32).rev().collect()
        }
    }

    fn coords(&self, v: Vertex) -> [f64; 2] {
        let g = self.grid;
        match v {
            Vertex::Corner(i, j) => [g.xs[i as usize], g.ys[j as usize]],
            Vertex::Cross(e, l) => {
                let (a, b) = self.edge_ends(e);
                let (va, vb) = (self.corner_value(a), self.corner_value(b));
                let t = (self.levels[l as usize] - va) / (vb - va);
                let [xa, ya] = self.coords(Vertex::Corner(a.0, a.1));
                let [xb, yb] = self.coords(Vertex::Corner(b.0, b.1));
                if e.vertical {
                    [xa, ya + t * (yb - ya)]
                } else {
                    [xa + t * (xb - xa), ya]
                }
            }
        }
    }

    /// Band of the `k`-th piece of edge `e` (pieces separated by its crossings).
    fn piece_band(&self, e: Edge, k: usize) -> usize {
        let (a, b) = self.edge_ends(e);
        let (va, vb) = (self.corner_value(a), self.corner_value(b));
        let base = self.levels_at_or_below(va);
        if self.levels_at_or_below(vb) >= base {
            base + k
        } else {
            base - k
        }
    }
}

struct Face {
    band: usize,
    verts: Vec<Vertex>,
}

/// One position on a cell's counter-clockwise boundary walk.
struct Stop {
    vertex: Vertex,
    edge: Edge,
    /// Index of the piece of `edge` that starts at this stop.
    piece: usize,
}

fn cell_faces(b: &Builder, i: u32, j: u32, chords_out: &mut [Vec<(Vertex, Vertex)>]) -> Vec<Face> {
    let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
    let sides = [
        (Edge { vertical: false, i, j }, true),
        (Edge { vertical: true, i: i + 1, j }, true),
        (Edge { vertical: false, i, j: j + 1 }, false),
        (Edge { vertical: true, i, j }, false),
    ];
    let mut stops: Vec<Stop> = Vec::new();
    // crossing vertex of each (side, level)
    let mut side_cross: Vec<HashMap<u32, usize>> = vec![HashMap::new(); 4];
    for (s, &(edge, forward)) in sides.iter().enumerate() {
        let cross = b.crossings(edge);
        let n = cross.len();
        stops.push(Stop {
            vertex: Vertex::Corner(corners[s].0, corners[s].1),
            edge,
            piece: if forward { 0 } else { n },
        });
        for k in 0..n {
            let ck = if forward { k } else { n - 1 - k };
            let l = cross[ck];
            side_cross[s].insert(l, stops.len());
            stops.push(Stop {
                vertex: Vertex::Cross(edge, l),
                edge,
                piece: if forward { ck + 1 } else { ck },
            });
        }
    }

    let values: Vec<f64> = corners.iter().map(|&c| b.corner_value(c)).collect();
    let center = values.iter().sum::<f64>() / 4.0;
    let mut partner: HashMap<usize, usize> = HashMap::new();
    for (l, &level) in b.levels.iter().enumerate() {
        let l = l as u32;
        let at: Vec<(usize, usize)> = (0..4).filter_map(|s| side_cross[s].get(&l).map(|&p| (s, p))).collect();
        let mut link = |p: usize, q: usize| {
            partner.insert(p, q);
            partner.insert(q, p);
            chords_out[l as usize].push((stops[p].vertex, stops[q].vertex));
        };
        match at.len() {
            0 => {}
            2 => link(at[0].1, at[1].1),
            4 => {
                // saddle: chords cut off the corners on the side opposite the centre
                let centre_above = center >= level;
                for k in 0..4 {
                    if (values[k] >= level) != centre_above {
                        let p = side_cross[(k + 3) % 4][&l];
                        let q = side_cross[k][&l];
                        link(p, q);
                    }
                }
            }
            _ => unreachable!("a level crosses a cell boundary an even number of times"),
        }
    }

    let m = stops.len();
    let mut used = vec![false; m];
    let mut faces = Vec::new();
    for start in 0..m {
        if used[start] {
            continue;
        }
        let s = &stops[start];
        let band = b.piece_band(s.edge, s.piece);
        let mut verts = Vec::new();
        let mut pos = start;
        loop {
            verts.push(stops[pos].vertex);
            used[pos] = true;
            let next = (pos + 1) % m;
            pos = match partner.get(&next) {
                Some(&r) => {
                    verts.push(stops[next].vertex);
                    r
                }
                None => next,
            };
            if pos == start {
                break;
            }
        }
        faces.push(Face { band, verts });
    }
    faces
}

fn signed_area(ring: &[[f64; 2]]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|k| {
            let [x1, y1] = ring[k];
            let [x2, y2] = ring[(k + 1) % n];
            x1 * y2 - x2 * y1
        })
        .sum::<f64>()
        / 2.0
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Extracts iso-lines at `levels` and the band regions they bound.
pub fn extract_contours(grid: &Grid, levels: &[f64]) -> Result<ContourRegionSet> {
    if levels.windows(2).any(|w| !(w[0] < w[1])) || levels.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidConfig("contour levels must be finite and strictly increasing".into()));
    }
    let b = Builder { grid, levels };
    let mut chords: Vec<Vec<(Vertex, Vertex)>> = vec![Vec::new(); levels.len()];
    let mut faces: Vec<Face> = Vec::new();
    for j in 0..grid.ny() as u32 - 1 {
        for i in 0..grid.nx() as u32 - 1 {
            faces.extend(cell_faces(&b, i, j, &mut chords));
        }
    }

    // merge same-band faces across shared edges
    let mut owner: HashMap<(Vertex, Vertex), usize> = HashMap::new();
    for (f, face) in faces.iter().enumerate() {
        let n = face.verts.len();
        for k in 0..n {
            owner.insert((face.verts[k], face.verts[(k + 1) % n]), f);
        }
    }
    let mut parent: Vec<usize> = (0..faces.len()).collect();
    let mut interior: HashMap<(Vertex, Vertex), bool> = HashMap::new();
    for (f, face) in faces.iter().enumerate() {
        let n = face.verts.len();
        for k in 0..n {
            let (p, q) = (face.verts[k], face.verts[(k + 1) % n]);
            if let Some(&g) = owner.get(&(q, p)) {
                if faces[g].band == face.band {
                    interior.insert((p, q), true);
                    let (rf, rg) = (find(&mut parent, f), find(&mut parent, g));
                    parent[rf.max(rg)] = rf.min(rg);
                }
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for f in 0..faces.len() {
        let r = find(&mut parent, f);
        groups.entry(r).or_default().push(f);
    }
    let mut regions = Vec::new();
    for members in groups.values() {
        let band = faces[members[0]].band;
        let mut area = 0.0;
        let mut out: BTreeMap<Vertex, Vec<Vertex>> = BTreeMap::new();
        for &f in members {
            let verts = &faces[f].verts;
            let ring: Vec<[f64; 2]> = verts.iter().map(|&v| b.coords(v)).collect();
            area += signed_area(&ring);
            for k in 0..verts.len() {
                let (p, q) = (verts[k], verts[(k + 1) % verts.len()]);
                if !interior.contains_key(&(p, q)) {
                    out.entry(p).or_default().push(q);
                }
            }
        }
        for targets in out.values_mut() {
            targets.sort();
            targets.reverse();
        }
        let mut rings = Vec::new();
        while let Some((&start, _)) = out.iter().find(|(_, t)| !t.is_empty()) {
            let mut ring = Vec::new();
            let mut at = start;
            loop {
                ring.push(b.coords(at));
                at = out.get_mut(&at).and_then(|t| t.pop()).expect("region boundary is balanced");
                if at == start {
                    break;
                }
            }
            rings.push(ring);
        }
        regions.push(Region {
            id: regions.len(),
            band,
            rings,
            area,
        });
    }

    let contours = chords
        .iter()
        .zip(levels)
        .map(|(segs, &level)| ContourLevel {
            level,
            lines: chain_polylines(&b, segs),
        })
        .collect();
    Ok(ContourRegionSet {
        levels: levels.to_vec(),
        bounds: grid.bounds(),
        contours,
        regions,
    })
}

fn chain_polylines(b: &Builder, segs: &[(Vertex, Vertex)]) -> Vec<Polyline> {
    let mut adj: BTreeMap<Vertex, Vec<usize>> = BTreeMap::new();
    for (k, &(p, q)) in segs.iter().enumerate() {
        adj.entry(p).or_default().push(k);
        adj.entry(q).or_default().push(k);
    }
    let mut used = vec![false; segs.len()];
    let mut lines = Vec::new();
    // open lines start at boundary endpoints, then the remaining closed loops
    let starts: Vec<Vertex> = adj
        .iter()
        .filter(|(_, e)| e.len() == 1)
        .map(|(&v, _)| v)
        .chain(adj.keys().copied())
        .collect();
    for start in starts {
        let Some(&first) = adj[&start].iter().find(|&&k| !used[k]) else {
            continue;
        };
        let mut verts = vec![start];
        let mut at = start;
        let mut seg = Some(first);
        while let Some(k) = seg {
            used[k] = true;
            let (p, q) = segs[k];
            at = if p == at { q } else { p };
            verts.push(at);
            seg = adj[&at].iter().copied().find(|&k| !used[k]);
        }
        let closed = verts.len() > 2 && verts[0] == *verts.last().unwrap();
        if closed {
            verts.pop();
        }
        lines.push(Polyline {
            points: verts.iter().map(|&v| b.coords(v)).collect(),
            closed,
        });
    }
    lines
}
