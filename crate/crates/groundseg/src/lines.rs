//! Piecewise line extraction over a segment's ground candidates and the
//! pseudo-input (support set) selection built on top of it.
//!
//! Lines are grown left to right with an incremental least-squares fit; a
//! line ends where the ground visibly changes behavior: the next candidate
//! would blow up the fit residual, arrives at a clearly different slope, or
//! sits beyond a radial gap. Each resulting line then nominates support
//! points for the latent length-scale process: candidates whose direction
//! from the line's first point stays near the line's mean direction, plus
//! both endpoints. The support target is the log of the line's radial span,
//! so long coherent stretches of ground vote for smoothness over their
//! extent.

use alloc::vec::Vec;

use crate::error::Error;
#[allow(unused_imports)]
use crate::float::prelude::*;
use crate::grid::GroundCandidates;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LineParams {
    /// Max rms residual (m) a line may reach by absorbing the next candidate.
    pub tau_fit: f64,
    /// Max |local slope - fitted slope| before a slope break.
    pub tau_slope: f64,
    /// Radial gap (m) that forces a break.
    pub tau_gap: f64,
    /// Angular deviation bound (rad) for support-point selection.
    pub tau_angle: f64,
    /// Clamp bounds (m) for the span feeding the log length-scale targets.
    pub l_min: f64,
    pub l_max: f64,
}

impl Default for LineParams {
    fn default() -> Self {
        LineParams {
            tau_fit: 0.08,
            tau_slope: 0.25,
            tau_gap: 5.0,
            tau_angle: 10.0_f64 * core::f64::consts::PI / 180.0,
            l_min: 0.5,
            l_max: 50.0,
        }
    }
}

impl LineParams {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.tau_fit > 0.0) {
            return Err(Error::Domain("tau_fit must be > 0"));
        }
        if !(self.tau_slope > 0.0) {
            return Err(Error::Domain("tau_slope must be > 0"));
        }
        if !(self.tau_gap > 0.0) {
            return Err(Error::Domain("tau_gap must be > 0"));
        }
        if !(self.tau_angle > 0.0) {
            return Err(Error::Domain("tau_angle must be > 0"));
        }
        if !(self.l_min > 0.0 && self.l_max > self.l_min) {
            return Err(Error::Domain("need 0 < l_min < l_max"));
        }
        Ok(())
    }
}

/// Fitted line over the candidate index span [start, end] (inclusive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment {
    pub start: usize,
    pub end: usize,
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    /// Mean direction (rad) of the candidates as seen from the line's first
    /// point; support selection measures deviation against this.
    pub mean_vector_angle: f64,
}

impl LineSegment {
    /// Radial extent covered by the line.
    pub fn span(&self, candidates: &GroundCandidates) -> f64 {
        candidates.r[self.end] - candidates.r[self.start]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakReason {
    SlopeChange,
    ResidualJump,
    GapInRange,
}

/// Candidate index where ground behavior changes, bounding adjacent lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CriticalPoint {
    pub index: usize,
    pub reason: BreakReason,
}

/// Training set for the latent length-scale process: locations, log targets,
/// the owning line and candidate of each entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SupportSet {
    pub r_bar: Vec<f64>,
    pub l_bar: Vec<f64>,
    /// Index of the line that contributed each entry.
    pub provenance: Vec<usize>,
    pub candidate: Vec<usize>,
}

impl SupportSet {
    pub fn len(&self) -> usize {
        self.r_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_bar.is_empty()
    }
}

/// Incremental least-squares accumulator over (r, z) pairs.
#[derive(Debug, Clone, Copy, Default)]
struct LsFit {
    n: f64,
    sr: f64,
    sz: f64,
    srr: f64,
    srz: f64,
    szz: f64,
}

impl LsFit {
    fn push(&mut self, r: f64, z: f64) {
        self.n += 1.0;
        self.sr += r;
        self.sz += z;
        self.srr += r * r;
        self.srz += r * z;
        self.szz += z * z;
    }

    fn slope_intercept(&self) -> (f64, f64) {
        let denom = self.n * self.srr - self.sr * self.sr;
        let slope = (self.n * self.srz - self.sr * self.sz) / denom;
        let intercept = (self.sz - slope * self.sr) / self.n;
        (slope, intercept)
    }

    fn rms_residual(&self) -> f64 {
        let (a, b) = self.slope_intercept();
        let sse = self.szz - a * self.srz - b * self.sz;
        (sse.max(0.0) / self.n).sqrt()
    }
}

fn mean_vector_angle(candidates: &GroundCandidates, start: usize, end: usize) -> f64 {
    let (r0, z0) = (candidates.r[start], candidates.z[start]);
    let mut acc = 0.0;
    for i in start + 1..=end {
        acc += (candidates.z[i] - z0).atan2(candidates.r[i] - r0);
    }
    acc / (end - start) as f64
}

fn close_line(candidates: &GroundCandidates, start: usize, end: usize, fit: &LsFit) -> LineSegment {
    let (slope, intercept) = fit.slope_intercept();
    LineSegment {
        start,
        end,
        slope,
        intercept,
        rms_residual: fit.rms_residual(),
        mean_vector_angle: mean_vector_angle(candidates, start, end),
    }
}

/// Grow lines left to right, emitting a critical point at every break.
///
/// Break checks run only once the current line holds two candidates, in
/// priority order gap > slope > residual. Slope and residual breaks keep the
/// junction candidate on both lines; a gap break starts the next line fresh
/// on the far side. A candidate left alone at the tail after a gap break is
/// folded back into the previous line (the critical point stays) so that
/// every line spans at least two candidates.
pub fn extract_lines(
    candidates: &GroundCandidates,
    params: &LineParams,
) -> Result<(Vec<LineSegment>, Vec<CriticalPoint>), Error> {
    params.validate()?;
    let n = candidates.len();
    if n < 2 {
        return Err(Error::TooFewCandidates { got: n, need: 2 });
    }

    let mut lines = Vec::new();
    let mut criticals = Vec::new();

    let mut start = 0usize;
    let mut fit = LsFit::default();
    fit.push(candidates.r[0], candidates.z[0]);
    fit.push(candidates.r[1], candidates.z[1]);
    let mut len = 2usize;

    let mut i = 2usize;
    while i < n {
        let (r, z) = (candidates.r[i], candidates.z[i]);
        if len < 2 {
            fit.push(r, z);
            len += 1;
            i += 1;
            continue;
        }
        let (slope, _) = fit.slope_intercept();
        let prev = i - 1;
        let gap = r - candidates.r[prev];
        let local_slope = (z - candidates.z[prev]) / gap;
        let mut trial = fit;
        trial.push(r, z);

        if gap > params.tau_gap {
            lines.push(close_line(candidates, start, prev, &fit));
            criticals.push(CriticalPoint {
                index: i,
                reason: BreakReason::GapInRange,
            });
            start = i;
            fit = LsFit::default();
            fit.push(r, z);
            len = 1;
        } else if (local_slope - slope).abs() > params.tau_slope {
            lines.push(close_line(candidates, start, prev, &fit));
            criticals.push(CriticalPoint {
                index: prev,
                reason: BreakReason::SlopeChange,
            });
            start = prev;
            fit = LsFit::default();
            fit.push(candidates.r[prev], candidates.z[prev]);
            fit.push(r, z);
            len = 2;
        } else if trial.rms_residual() > params.tau_fit {
            lines.push(close_line(candidates, start, prev, &fit));
            criticals.push(CriticalPoint {
                index: prev,
                reason: BreakReason::ResidualJump,
            });
            start = prev;
            fit = LsFit::default();
            fit.push(candidates.r[prev], candidates.z[prev]);
            fit.push(r, z);
            len = 2;
        } else {
            fit = trial;
            len += 1;
        }
        i += 1;
    }

    if len == 1 {
        // Tail candidate stranded by a gap break: extend the previous line.
        let prev_line = lines.pop().expect("a gap break implies a closed line");
        start = prev_line.start;
        fit = LsFit::default();
        for j in start..n {
            fit.push(candidates.r[j], candidates.z[j]);
        }
    }
    lines.push(close_line(candidates, start, n - 1, &fit));

    Ok((lines, criticals))
}

/// Pick the support set: per line, candidates whose vector angle from the
/// line's first point deviates from the line's mean angle by at most
/// `tau_angle`, endpoints always in. Every entry of a line carries the same
/// target, log of the line's clamped radial span. A junction candidate shared
/// by two lines enters once, under the earlier line.
pub fn select_pseudo_inputs(
    candidates: &GroundCandidates,
    lines: &[LineSegment],
    params: &LineParams,
) -> SupportSet {
    let mut out = SupportSet::default();
    for (li, line) in lines.iter().enumerate() {
        let span = line.span(candidates);
        let target = span.clamp(params.l_min, params.l_max).ln();
        let (r0, z0) = (candidates.r[line.start], candidates.z[line.start]);
        for i in line.start..=line.end {
            let keep = if i == line.start || i == line.end {
                true
            } else {
                let angle = (candidates.z[i] - z0).atan2(candidates.r[i] - r0);
                (angle - line.mean_vector_angle).abs() <= params.tau_angle
            };
            if !keep {
                continue;
            }
            if out.candidate.last() == Some(&i) {
                continue;
            }
            out.r_bar.push(candidates.r[i]);
            out.l_bar.push(target);
            out.provenance.push(li);
            out.candidate.push(i);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cands(pairs: &[(f64, f64)]) -> GroundCandidates {
        GroundCandidates {
            r: pairs.iter().map(|p| p.0).collect(),
            z: pairs.iter().map(|p| p.1).collect(),
            source: (0..pairs.len()).collect(),
        }
    }

    #[test]
    fn collinear_candidates_form_one_exact_line() {
        let c = cands(&(0..10).map(|i| (2.0 + i as f64, 0.1 * (2.0 + i as f64))).collect::<Vec<_>>());
        let (lines, crits) = extract_lines(&c, &LineParams::default()).unwrap();
        assert_eq!(lines.len(), 1);
        assert!(crits.is_empty());
        assert!((lines[0].slope - 0.1).abs() < 1e-12);
        assert!(lines[0].rms_residual < 1e-12);
        assert_eq!((lines[0].start, lines[0].end), (0, 9));
    }

    #[test]
    fn slope_break_shares_the_junction_candidate() {
        // Flat to r = 10, then grade 0.5.
        let mut pts: Vec<(f64, f64)> = (0..9).map(|i| (2.0 + i as f64, 0.0)).collect();
        pts.extend((1..8).map(|i| (10.0 + i as f64, 0.5 * i as f64)));
        let c = cands(&pts);
        let params = LineParams {
            tau_slope: 0.2,
            tau_fit: 1e9,
            ..LineParams::default()
        };
        let (lines, crits) = extract_lines(&c, &params).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(crits.len(), 1);
        assert_eq!(crits[0].reason, BreakReason::SlopeChange);
        assert_eq!(crits[0].index, 8); // the candidate at r = 10
        assert_eq!(lines[0].end, lines[1].start);
        assert!((lines[0].slope - 0.0).abs() < 1e-9);
        assert!((lines[1].slope - 0.5).abs() < 1e-9);
    }

    #[test]
    fn radial_gap_forces_a_disjoint_break() {
        let mut pts: Vec<(f64, f64)> = (0..5).map(|i| (2.0 + i as f64, 0.0)).collect();
        pts.extend((0..5).map(|i| (18.0 + i as f64, 0.0))); // 12 m gap
        let c = cands(&pts);
        let (lines, crits) = extract_lines(&c, &LineParams::default()).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(crits, vec![CriticalPoint { index: 5, reason: BreakReason::GapInRange }]);
        assert_eq!((lines[0].start, lines[0].end), (0, 4));
        assert_eq!((lines[1].start, lines[1].end), (5, 9));
    }

    #[test]
    fn residual_jump_breaks_where_the_fit_degrades() {
        // Flat run, then a z step too small to trip the slope check but
        // fatal to the rms residual once absorbed.
        let params = LineParams {
            tau_fit: 0.05,
            tau_slope: 10.0,
            ..LineParams::default()
        };
        let mut pts: Vec<(f64, f64)> = (0..6).map(|i| (2.0 + i as f64, 0.0)).collect();
        pts.extend((0..6).map(|i| (8.0 + i as f64, 1.0)));
        let c = cands(&pts);
        let (lines, crits) = extract_lines(&c, &params).unwrap();
        assert!(crits.iter().any(|cp| cp.reason == BreakReason::ResidualJump));
        assert!(lines.len() >= 2);
        for line in &lines {
            assert!(line.end > line.start);
        }
    }

    #[test]
    fn stranded_tail_candidate_rejoins_the_previous_line() {
        let pts = [(2.0, 0.0), (3.0, 0.0), (4.0, 0.0), (20.0, 0.0)];
        let c = cands(&pts);
        let (lines, crits) = extract_lines(&c, &LineParams::default()).unwrap();
        assert_eq!(lines.len(), 1);
        assert_eq!((lines[0].start, lines[0].end), (0, 3));
        assert_eq!(crits.len(), 1);
        assert_eq!(crits[0].reason, BreakReason::GapInRange);
    }

    #[test]
    fn too_few_candidates_is_an_error() {
        let c = cands(&[(2.0, 0.0)]);
        assert!(matches!(
            extract_lines(&c, &LineParams::default()),
            Err(Error::TooFewCandidates { got: 1, need: 2 })
        ));
    }

    #[test]
    fn support_targets_are_log_of_clamped_span() {
        let c = cands(&(0..11).map(|i| (2.0 + 2.0 * i as f64, 0.0)).collect::<Vec<_>>());
        let (lines, _) = extract_lines(&c, &LineParams::default()).unwrap();
        assert_eq!(lines.len(), 1);
        let sup = select_pseudo_inputs(&c, &lines, &LineParams::default());
        assert!(!sup.is_empty());
        for &l in &sup.l_bar {
            assert!((l - 20.0_f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn three_candidate_line_keeps_all_three() {
        let c = cands(&[(2.0, 0.0), (3.0, 0.1), (4.0, 0.2)]);
        let (lines, _) = extract_lines(&c, &LineParams::default()).unwrap();
        let sup = select_pseudo_inputs(&c, &lines, &LineParams::default());
        assert_eq!(sup.candidate, vec![0, 1, 2]);
    }

    #[test]
    fn support_locations_strictly_increase_across_shared_junctions() {
        let mut pts: Vec<(f64, f64)> = (0..9).map(|i| (2.0 + i as f64, 0.0)).collect();
        pts.extend((1..8).map(|i| (10.0 + i as f64, 0.5 * i as f64)));
        let c = cands(&pts);
        let params = LineParams {
            tau_slope: 0.2,
            tau_fit: 1e9,
            ..LineParams::default()
        };
        let (lines, _) = extract_lines(&c, &params).unwrap();
        let sup = select_pseudo_inputs(&c, &lines, &params);
        assert!(sup.r_bar.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sup.len(), sup.provenance.len());
        assert_eq!(sup.len(), sup.candidate.len());
    }
}
