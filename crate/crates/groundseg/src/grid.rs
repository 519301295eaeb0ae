//! Polar grid map: angular segments, range-dependent radial bins, and
//! per-bin ground candidates.

use alloc::vec::Vec;

use crate::cloud::PointCloud;
use crate::error::Error;
#[allow(unused_imports)]
use crate::float::prelude::*;

use core::f64::consts::TAU;

/// Layout of the polar grid plus the training gate.
///
/// Bin widths grow geometrically with range, `width_n = first_bin_width *
/// bin_growth^n`, so far bins stay populated as returns thin out.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridConfig {
    pub num_segments: u32,
    pub r_min: f64,
    pub r_max: f64,
    pub bin_growth: f64,
    pub first_bin_width: f64,
    /// Segments with fewer ground candidates than this skip GP training and
    /// label their points `Unassigned`.
    pub min_candidates_per_segment: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            num_segments: 36,
            r_min: 0.5,
            r_max: 80.0,
            bin_growth: 1.06,
            first_bin_width: 1.0,
            min_candidates_per_segment: 4,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.num_segments < 1 {
            return Err(Error::Domain("num_segments must be >= 1"));
        }
        if !(self.r_min >= 0.0 && self.r_min.is_finite()) {
            return Err(Error::Domain("r_min must be finite and >= 0"));
        }
        if !(self.r_max > self.r_min && self.r_max.is_finite()) {
            return Err(Error::Domain("r_max must be finite and > r_min"));
        }
        if !(self.bin_growth >= 1.0 && self.bin_growth.is_finite()) {
            return Err(Error::Domain("bin_growth must be >= 1"));
        }
        if !(self.first_bin_width > 0.0 && self.first_bin_width.is_finite()) {
            return Err(Error::Domain("first_bin_width must be > 0"));
        }
        Ok(())
    }

    /// Bin edges from `r_min` to exactly `r_max`; the last bin is truncated.
    pub fn bin_edges(&self) -> Vec<f64> {
        let mut edges = alloc::vec![self.r_min];
        let mut width = self.first_bin_width;
        let mut e = self.r_min;
        loop {
            e += width;
            if e >= self.r_max {
                edges.push(self.r_max);
                break;
            }
            edges.push(e);
            width *= self.bin_growth;
        }
        edges
    }
}

/// A point projected to the (r, z) half-plane of its angular segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarPoint {
    pub source_index: usize,
    pub r: f64,
    pub z: f64,
    pub segment: u32,
    pub bin: u32,
}

/// Points bucketed by segment, plus the points excluded by the radial range.
#[derive(Debug, Clone)]
pub struct Grid {
    pub segments: Vec<Vec<PolarPoint>>,
    /// Source indices with r outside [r_min, r_max].
    pub excluded: Vec<usize>,
    pub edges: Vec<f64>,
}

impl Grid {
    pub fn num_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn candidates(&self, segment: usize) -> GroundCandidates {
        extract_candidates(&self.segments[segment], self.num_bins())
    }
}

/// Assign every in-range point to its (segment, bin) cell.
///
/// Segment index is `floor(M * angle / 2pi)` with the atan2 angle wrapped to
/// [0, 2pi); points keep their cloud order within a segment.
pub fn build_grid(cloud: &PointCloud, config: &GridConfig) -> Result<Grid, Error> {
    config.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let m = config.num_segments as usize;
    let edges = config.bin_edges();
    let num_bins = edges.len() - 1;
    let mut segments = alloc::vec![Vec::new(); m];
    let mut excluded = Vec::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let r = p.x.hypot(p.y);
        if r < config.r_min || r > config.r_max {
            excluded.push(i);
            continue;
        }
        let mut angle = p.y.atan2(p.x);
        if angle < 0.0 {
            angle += TAU;
        }
        let segment = (((m as f64) * angle / TAU).floor() as usize).min(m - 1);
        // Half-open bins [e_n, e_{n+1}); r_max belongs to the last bin.
        let bin = edges.partition_point(|&e| e <= r).saturating_sub(1).min(num_bins - 1);
        segments[segment].push(PolarPoint {
            source_index: i,
            r,
            z: p.z,
            segment: segment as u32,
            bin: bin as u32,
        });
    }
    Ok(Grid {
        segments,
        excluded,
        edges,
    })
}

/// One segment's GP training data: the lowest point of each non-empty bin,
/// ordered by increasing r.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundCandidates {
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub source: Vec<usize>,
}

impl GroundCandidates {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// Lowest point per bin; ties on z fall to smaller r, then smaller source
/// index. Bin order equals r order because bins are disjoint radial
/// intervals, so the output r values strictly increase.
pub fn extract_candidates(segment: &[PolarPoint], num_bins: usize) -> GroundCandidates {
    let mut best: Vec<Option<&PolarPoint>> = alloc::vec![None; num_bins];
    for p in segment {
        let slot = &mut best[p.bin as usize];
        let better = match slot {
            None => true,
            Some(q) => (p.z, p.r, p.source_index) < (q.z, q.r, q.source_index),
        };
        if better {
            *slot = Some(p);
        }
    }
    let mut out = GroundCandidates::default();
    for p in best.into_iter().flatten() {
        out.r.push(p.r);
        out.z.push(p.z);
        out.source.push(p.source_index);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::cloud::Point3;

    fn cloud(points: &[(f64, f64, f64)]) -> PointCloud {
        PointCloud::new(points.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect())
    }

    #[test]
    fn zero_angle_lands_in_segment_zero() {
        let cfg = GridConfig {
            num_segments: 8,
            ..GridConfig::default()
        };
        let g = build_grid(&cloud(&[(1.0, 0.0, 0.2)]), &cfg).unwrap();
        assert_eq!(g.segments[0].len(), 1);
        assert_eq!(g.segments[0][0].segment, 0);
    }

    #[test]
    fn radius_is_planar_norm() {
        let g = build_grid(&cloud(&[(3.0, 4.0, 1.0)]), &GridConfig::default()).unwrap();
        let p = g.segments.iter().flatten().next().unwrap();
        assert_eq!(p.r, 5.0);
    }

    #[test]
    fn quarter_turn_lands_in_segment_one_of_four() {
        let cfg = GridConfig {
            num_segments: 4,
            ..GridConfig::default()
        };
        let g = build_grid(&cloud(&[(0.0, 1.0, 0.0)]), &cfg).unwrap();
        assert_eq!(g.segments[1].len(), 1);
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let e = build_grid(&cloud(&[]), &GridConfig::default());
        assert_eq!(e.unwrap_err(), Error::EmptyCloud);
    }

    #[test]
    fn out_of_range_points_are_excluded_and_counted() {
        let g = build_grid(
            &cloud(&[(0.1, 0.0, 0.0), (10.0, 0.0, 0.0), (90.0, 0.0, 0.0)]),
            &GridConfig::default(),
        )
        .unwrap();
        assert_eq!(g.excluded, vec![0, 2]);
        let assigned: usize = g.segments.iter().map(Vec::len).sum();
        assert_eq!(assigned + g.excluded.len(), 3);
    }

    #[test]
    fn edges_strictly_increase_and_cover_range() {
        let cfg = GridConfig::default();
        let edges = cfg.bin_edges();
        assert_eq!(edges[0], cfg.r_min);
        assert_eq!(*edges.last().unwrap(), cfg.r_max);
        assert!(edges.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn r_max_belongs_to_the_last_bin() {
        let cfg = GridConfig::default();
        let g = build_grid(&cloud(&[(80.0, 0.0, 0.0)]), &cfg).unwrap();
        let p = g.segments[0][0];
        assert_eq!(p.bin as usize, g.num_bins() - 1);
    }

    #[test]
    fn candidate_is_bin_minimum() {
        let pts: Vec<PolarPoint> = [0.2, -0.1, 0.5]
            .iter()
            .enumerate()
            .map(|(i, &z)| PolarPoint {
                source_index: i,
                r: 1.0 + 0.1 * i as f64,
                z,
                segment: 0,
                bin: 0,
            })
            .collect();
        let c = extract_candidates(&pts, 3);
        assert_eq!(c.len(), 1);
        assert_eq!(c.z[0], -0.1);
    }

    #[test]
    fn empty_bins_emit_nothing() {
        let pts = [PolarPoint {
            source_index: 0,
            r: 5.0,
            z: 0.0,
            segment: 0,
            bin: 2,
        }];
        let c = extract_candidates(&pts, 5);
        assert_eq!(c.len(), 1);
        assert_eq!(c.r, vec![5.0]);
    }

    #[test]
    fn equal_heights_tie_break_to_smaller_radius() {
        let pts = [
            PolarPoint {
                source_index: 0,
                r: 3.0,
                z: 0.1,
                segment: 0,
                bin: 0,
            },
            PolarPoint {
                source_index: 1,
                r: 2.0,
                z: 0.1,
                segment: 0,
                bin: 0,
            },
        ];
        let c = extract_candidates(&pts, 1);
        assert_eq!(c.r, vec![2.0]);
        assert_eq!(c.source, vec![1]);
    }

    #[test]
    fn candidates_sorted_by_radius_across_bins() {
        let cfg = GridConfig {
            num_segments: 1,
            ..GridConfig::default()
        };
        let pts: Vec<(f64, f64, f64)> =
            (0..40).map(|i| (2.0 + 1.9 * i as f64, 0.0, 0.01 * i as f64)).collect();
        let g = build_grid(&cloud(&pts), &cfg).unwrap();
        let c = g.candidates(0);
        assert!(c.r.windows(2).all(|w| w[0] < w[1]));
    }
}
