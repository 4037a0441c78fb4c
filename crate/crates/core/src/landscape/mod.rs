//! BLEU landscape on the plane through three checkpoints, with projection of
//! a training trajectory onto it.

mod contour;
mod svg;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{ensure_same_layout, Checkpoint};
use crate::error::{Error, IoContext, Result};
use crate::model::{Model, ParameterVector};
use crate::scheduler::{evaluate_dev_with, Phase};
use crate::text::ParallelCorpus;

pub use contour::{
    axis, band_of, default_levels, extract_contours, ContourLevel, ContourRegionSet, Grid, Polyline, Region,
};
pub use svg::render_svg;

/// Sequential dot product; every Gram entry and projection uses this one routine.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Affine plane `θ* + xδ + yη` with `δ = θ_a − θ*` and `η = θ_s' − θ*`.
#[derive(Debug, Clone)]
pub struct PlaneBasis {
    base: ParameterVector,
    a_end: ParameterVector,
    s_end: ParameterVector,
    pub delta: Vec<f64>,
    pub eta: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub config_hash: String,
}

impl PlaneBasis {
    pub fn from_params(base: ParameterVector, a_end: ParameterVector, s_end: ParameterVector) -> Result<Self> {
        let n = base.len();
        for other in [&a_end, &s_end] {
            if other.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: other.len(),
                });
            }
        }
        let delta: Vec<f64> = a_end.iter().zip(base.iter()).map(|(p, q)| p - q).collect();
        let eta: Vec<f64> = s_end.iter().zip(base.iter()).map(|(p, q)| p - q).collect();
        let (a, b, c) = (dot(&delta, &delta), dot(&delta, &eta), dot(&eta, &eta));
        if !(a > 0.0 && c > 0.0) || a * c - b * b <= 1e-12 * a * c {
            return Err(Error::DegeneratePlane);
        }
        Ok(Self {
            base,
            a_end,
            s_end,
            delta,
            eta,
            a,
            b,
            c,
            config_hash: String::new(),
        })
    }

    /// Plane through `θ_s^(t)`, `θ_a^(t)` and `θ_s^(t+1)`.
    pub fn new(s: &Checkpoint, a: &Checkpoint, s_next: &Checkpoint) -> Result<Self> {
        ensure_same_layout([&s.meta, &a.meta, &s_next.meta])?;
        let mut plane = Self::from_params(s.params.clone(), a.params.clone(), s_next.params.clone())?;
        plane.config_hash = s.meta.config_hash.clone();
        Ok(plane)
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    /// `(1−x−y)θ* + xθ_a + yθ_s'`, which reproduces the three anchors exactly.
    pub fn point(&self, x: f64, y: f64) -> ParameterVector {
        let w = 1.0 - x - y;
        let v = self
            .base
            .iter()
            .zip(self.a_end.iter())
            .zip(self.s_end.iter())
            .map(|((p, q), r)| w * p + x * q + y * r)
            .collect();
        ParameterVector::from_vec(v)
    }

    /// Squared parameter-space length of the in-plane displacement `(dx, dy)`.
    pub fn metric(&self, dx: f64, dy: f64) -> f64 {
        self.a * dx * dx + 2.0 * self.b * dx * dy + self.c * dy * dy
    }

    /// Least-squares plane coordinates of `theta`.
    pub fn project(&self, theta: &[f64]) -> Result<(f64, f64)> {
        if theta.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        let diff: Vec<f64> = theta.iter().zip(self.base.iter()).map(|(p, q)| p - q).collect();
        let (u, v) = (dot(&diff, &self.delta), dot(&diff, &self.eta));
        let (a, b, c) = (self.a, self.b, self.c);
        let det = b * b - a * c;
        Ok(((v * b - u * c) / det, (u * b - v * a) / det))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_range: [-0.25, 1.25],
            y_range: [-0.25, 1.25],
            nx: 31,
            ny: 31,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::InvalidConfig("grid resolution must be at least 2x2".into()));
        }
        let inside = |[lo, hi]: [f64; 2]| lo < 0.0 && hi > 1.0;
        if !inside(self.x_range) || !inside(self.y_range) {
            return Err(Error::InvalidConfig("grid range must contain the anchors strictly inside".into()));
        }
        Ok(())
    }
}

/// Dev BLEU at every grid node of the plane.
pub fn eval_grid(
    plane: &PlaneBasis,
    model: &Model,
    dev: &ParallelCorpus,
    spec: &GridSpec,
    beam: Option<usize>,
) -> Result<Grid> {
    spec.validate()?;
    let xs = axis(spec.x_range[0], spec.x_range[1], spec.nx);
    let ys = axis(spec.y_range[0], spec.y_range[1], spec.ny);
    let nodes: Vec<(f64, f64)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    let values = nodes
        .par_iter()
        .map(|&(x, y)| evaluate_dev_with(model, &plane.point(x, y), dev, beam))
        .collect::<Result<Vec<f64>>>()?;
    Grid::new(xs, ys, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub global_step: u64,
    pub cycle: u32,
    pub phase: Phase,
    pub raw: [f64; 2],
    pub coords: [f64; 2],
    pub dev_bleu: f64,
    pub band: usize,
    /// Region holding the raw point, or owning the boundary edge snapped to.
    pub region: usize,
    pub snapped: bool,
}

/// Nearest point to `(px, py)` on segment `p`–`q` in the metric of `plane`.
fn segment_foot(plane: &PlaneBasis, px: f64, py: f64, p: [f64; 2], q: [f64; 2]) -> ([f64; 2], f64) {
    let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
    let (wx, wy) = (px - p[0], py - p[1]);
    let dd = plane.metric(dx, dy);
    let s = if dd > 0.0 {
        let wd = plane.a * wx * dx + plane.b * (wx * dy + wy * dx) + plane.c * wy * dy;
        (wd / dd).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let foot = [p[0] + s * dx, p[1] + s * dy];
    let dist = plane.metric(px - foot[0], py - foot[1]).max(0.0).sqrt();
    (foot, dist)
}

/// Moves the projection of `theta` to the closest point of the regions in the
/// band of `dev_bleu`, measuring distance in the plane's induced metric.
pub fn snap_to_region(
    plane: &PlaneBasis,
    regions: &ContourRegionSet,
    theta: &[f64],
    dev_bleu: f64,
) -> Result<([f64; 2], [f64; 2], usize, usize, bool)> {
    let (x, y) = plane.project(theta)?;
    let (coords, band, region, snapped) = snap_point(plane, regions, x, y, dev_bleu)?;
    Ok(([x, y], coords, band, region, snapped))
}

/// In-plane half of [`snap_to_region`]: returns `(coords, band, region, snapped)`.
pub fn snap_point(
    plane: &PlaneBasis,
    regions: &ContourRegionSet,
    x: f64,
    y: f64,
    dev_bleu: f64,
) -> Result<([f64; 2], usize, usize, bool)> {
    let band = regions.band_of(dev_bleu);
    let mut best: Option<([f64; 2], f64, usize)> = None;
    for r in regions.regions_in_band(band) {
        if r.contains(x, y) {
            return Ok(([x, y], band, r.id, false));
        }
        for (p, q) in r.edges() {
            let (foot, d) = segment_foot(plane, x, y, p, q);
            let better = match &best {
                None => true,
                Some((bf, bd, _)) => d < *bd || (d == *bd && (foot[0], foot[1]) < (bf[0], bf[1])),
            };
            if better {
                best = Some((foot, d, r.id));
            }
        }
    }
    match best {
        Some((foot, _, id)) => Ok((foot, band, id, true)),
        None => Err(Error::BandNotRepresented),
    }
}

/// Projects and snaps every checkpoint, preserving order.
pub fn project_trajectory(
    plane: &PlaneBasis,
    regions: &ContourRegionSet,
    trajectory: &[Checkpoint],
) -> Result<Vec<ProjectedPoint>> {
    ensure_same_layout(trajectory.iter().map(|c| &c.meta))?;
    trajectory
        .iter()
        .map(|c| {
            if !plane.config_hash.is_empty() && c.meta.config_hash != plane.config_hash {
                return Err(Error::ConfigMismatch(plane.config_hash.clone(), c.meta.config_hash.clone()));
            }
            let (raw, coords, band, region, snapped) = snap_to_region(plane, regions, &c.params, c.meta.dev_bleu)?;
            Ok(ProjectedPoint {
                global_step: c.meta.global_step,
                cycle: c.meta.cycle,
                phase: c.meta.phase,
                raw,
                coords,
                dev_bleu: c.meta.dev_bleu,
                band,
                region,
                snapped,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub grid: Grid,
    pub regions: ContourRegionSet,
    pub points: Vec<ProjectedPoint>,
}

impl Landscape {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).with_path(path)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_path(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write_svg(&self, path: &Path) -> Result<()> {
        std::fs::write(path, render_svg(self)).with_path(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParameterVector {
        ParameterVector::from_vec(v.to_vec())
    }

    #[test]
    fn orthonormal_plane_reads_coordinates() {
        let plane = PlaneBasis::from_params(pv(&[0.0; 3]), pv(&[1.0, 0.0, 0.0]), pv(&[0.0, 1.0, 0.0])).unwrap();
        assert_eq!((plane.a, plane.b, plane.c), (1.0, 0.0, 1.0));
        assert_eq!(plane.project(&[2.0, 3.0, 7.0]).unwrap(), (2.0, 3.0));
        assert_eq!(plane.project(&[0.0; 3]).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn skew_plane_example() {
        let plane = PlaneBasis::from_params(pv(&[0.0, 0.0]), pv(&[1.0, 1.0]), pv(&[1.0, -1.0])).unwrap();
        assert_eq!((plane.a, plane.b, plane.c), (2.0, 0.0, 2.0));
        assert_eq!(plane.project(&[3.0, 1.0]).unwrap(), (2.0, 1.0));
    }

    #[test]
    fn degenerate_planes_rejected() {
        let e = PlaneBasis::from_params(pv(&[1.0, 2.0]), pv(&[1.0, 2.0]), pv(&[0.0, 1.0])).unwrap_err();
        assert_eq!(e.to_string(), "degenerate plane (collinear checkpoints)");
        assert!(PlaneBasis::from_params(pv(&[0.0, 0.0]), pv(&[1.0, 1.0]), pv(&[2.0, 2.0])).is_err());
    }

    #[test]
    fn anchors_reconstruct_and_project_exactly() {
        let base = pv(&[0.3, -1.7, 2.25, 0.1]);
        let a = pv(&[1.1, 0.4, -0.6, 0.9]);
        let s = pv(&[-0.2, 0.8, 1.3, -2.0]);
        let plane = PlaneBasis::from_params(base.clone(), a.clone(), s.clone()).unwrap();
        assert_eq!(&*plane.point(0.0, 0.0), &*base);
        assert_eq!(&*plane.point(1.0, 0.0), &*a);
        assert_eq!(&*plane.point(0.0, 1.0), &*s);
        assert_eq!(plane.project(&base).unwrap(), (0.0, 0.0));
        assert_eq!(plane.project(&a).unwrap(), (1.0, 0.0));
        assert_eq!(plane.project(&s).unwrap(), (0.0, 1.0));
    }

    fn unit_square() -> ContourRegionSet {
        let g = Grid::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![5.0; 4]).unwrap();
        extract_contours(&g, &[]).unwrap()
    }

    #[test]
    fn snap_to_right_edge() {
        let plane = PlaneBasis::from_params(pv(&[0.0; 2]), pv(&[1.0, 0.0]), pv(&[0.0, 1.0])).unwrap();
        let set = unit_square();
        let (coords, band, _, snapped) = snap_point(&plane, &set, 2.0, 0.5, 5.0).unwrap();
        assert!(snapped);
        assert_eq!(band, 0);
        assert_eq!(coords, [1.0, 0.5]);
        let (coords, _, _, snapped) = snap_point(&plane, &set, 0.3, 0.6, 5.0).unwrap();
        assert!(!snapped);
        assert_eq!(coords, [0.3, 0.6]);
    }

    #[test]
    fn missing_band_is_an_error() {
        let plane = PlaneBasis::from_params(pv(&[0.0; 2]), pv(&[1.0, 0.0]), pv(&[0.0, 1.0])).unwrap();
        let g = Grid::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![5.0; 4]).unwrap();
        let set = extract_contours(&g, &[10.0]).unwrap();
        let e = snap_point(&plane, &set, 0.5, 0.5, 50.0).unwrap_err();
        assert_eq!(e.to_string(), "band not represented on grid");
    }

    #[test]
    fn grid_spec_requires_margins() {
        assert!(GridSpec::default().validate().is_ok());
        let tight = GridSpec {
            x_range: [0.0, 1.25],
            ..GridSpec::default()
        };
        assert!(tight.validate().is_err());
    }
}
