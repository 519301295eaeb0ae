//! Per-frame orchestration: grid, candidates, lines, support set, training,
//! prediction, and the per-point ground test.
//!
//! The flow is staged so a driver can parallelize it: [`prepare`] does the
//! serial frame-wide work, [`train_segment`] and [`classify_segment`] are
//! pure per-segment maps with no cross-segment state, and [`merge_outputs`]
//! stitches results back by source index. Segment outputs own disjoint index
//! sets, so the merged frame is identical under any scheduling.
//! [`segment_ground`] composes the stages sequentially.
//!
//! A segment that cannot be trained (too few candidates, or a numerical
//! failure anywhere in its chain) degrades to `Unassigned` labels instead of
//! aborting the frame.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::cloud::{Label, LabeledCloud, PointCloud};
use crate::error::Error;
use crate::gp::{GroundModel, LatentModel, Posterior};
use crate::grid::{self, Grid, GridConfig, GroundCandidates, PolarPoint};
use crate::lines::{self, LineParams, SupportSet};
use crate::opt::{self, SegmentData, Theta};
use crate::scg::ScgOptions;
#[allow(unused_imports)]
use crate::float::prelude::*;

/// Gates of the per-point ground test.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassifierThresholds {
    /// Cap on |z - z_bar| / sqrt(sigma_n^2 + V_z).
    pub t_d: f64,
    /// Cap on the posterior variance V_z (m^2); high-uncertainty points are
    /// never called ground no matter how close their height.
    pub t_v: f64,
}

impl Default for ClassifierThresholds {
    fn default() -> Self {
        ClassifierThresholds { t_d: 3.0, t_v: 0.3 }
    }
}

impl ClassifierThresholds {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.t_d > 0.0 && self.t_v > 0.0) {
            return Err(Error::Domain("thresholds must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PipelineConfig {
    pub grid: GridConfig,
    pub lines: LineParams,
    pub thresholds: ClassifierThresholds,
    pub scg: ScgOptions,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), Error> {
        self.grid.validate()?;
        self.lines.validate()?;
        self.thresholds.validate()?;
        self.scg.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SegmentStatus {
    Trained,
    TooFewCandidates,
    NumericalFailure,
}

/// Training input for one segment, assembled by [`prepare`].
#[derive(Debug, Clone)]
pub struct SegmentTask {
    pub segment: u32,
    pub candidates: GroundCandidates,
    pub line_count: usize,
    pub support: SupportSet,
    /// Why this segment will not be trained; `None` means ready.
    pub blocked: Option<SegmentStatus>,
    data: Option<(SegmentData, Theta)>,
}

/// Frame-wide state after candidate, line, and support extraction.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub grid: Grid,
    pub tasks: Vec<SegmentTask>,
}

/// Serial front half of the pipeline: polar grid, per-segment candidates,
/// line fits, support sets, and optimizer starting points.
pub fn prepare(cloud: &PointCloud, config: &PipelineConfig) -> Result<Prepared, Error> {
    config.validate()?;
    let grid = grid::build_grid(cloud, &config.grid)?;
    let tasks = (0..grid.segments.len())
        .map(|m| prepare_segment(&grid, m, config))
        .collect();
    Ok(Prepared { grid, tasks })
}

fn prepare_segment(grid: &Grid, m: usize, config: &PipelineConfig) -> SegmentTask {
    let mut task = SegmentTask {
        segment: m as u32,
        candidates: grid.candidates(m),
        line_count: 0,
        support: SupportSet::default(),
        blocked: None,
        data: None,
    };
    if task.candidates.len() < config.grid.min_candidates_per_segment {
        task.blocked = Some(SegmentStatus::TooFewCandidates);
        return task;
    }
    let segment_lines = match lines::extract_lines(&task.candidates, &config.lines) {
        Ok((segment_lines, _)) => segment_lines,
        Err(Error::TooFewCandidates { .. }) => {
            task.blocked = Some(SegmentStatus::TooFewCandidates);
            return task;
        }
        Err(_) => {
            task.blocked = Some(SegmentStatus::NumericalFailure);
            return task;
        }
    };
    task.line_count = segment_lines.len();
    task.support = lines::select_pseudo_inputs(&task.candidates, &segment_lines, &config.lines);
    let bounds = (config.lines.l_min, config.lines.l_max);
    match SegmentData::new(&task.candidates.r, &task.candidates.z, &task.support.r_bar, bounds) {
        Ok(data) => {
            let theta0 = opt::initial_theta(&data, &task.support.l_bar);
            task.data = Some((data, theta0));
        }
        Err(_) => task.blocked = Some(SegmentStatus::NumericalFailure),
    }
    task
}

/// What one segment's training produced, for diagnostics.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SegmentReport {
    pub segment: u32,
    pub candidates: usize,
    pub lines: usize,
    pub support: usize,
    /// Final hyperparameter vector; empty when the segment was not trained.
    pub theta: Vec<f64>,
    /// Objective after each accepted optimizer step.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub status: SegmentStatus,
}

#[derive(Debug, Clone)]
pub struct TrainedSegment {
    pub segment: u32,
    /// `None` when the segment is degraded; its points stay `Unassigned`.
    pub model: Option<GroundModel>,
    pub report: SegmentReport,
}

/// Train one segment's hyperparameters and build its predictive model.
/// Failures degrade the segment rather than propagating.
pub fn train_segment(task: &SegmentTask, scg: &ScgOptions) -> TrainedSegment {
    let mut report = SegmentReport {
        segment: task.segment,
        candidates: task.candidates.len(),
        lines: task.line_count,
        support: task.support.len(),
        theta: Vec::new(),
        trace: Vec::new(),
        converged: false,
        status: task.blocked.unwrap_or(SegmentStatus::NumericalFailure),
    };
    let Some((data, theta0)) = &task.data else {
        return TrainedSegment {
            segment: task.segment,
            model: None,
            report,
        };
    };
    let model = opt::scg_minimize(data, theta0, scg).ok().and_then(|out| {
        report.theta = out.theta.to_vec();
        report.trace = out.trace;
        report.converged = out.converged;
        let latent = LatentModel::fit(
            &task.support.r_bar,
            &out.theta.l_bar,
            &out.theta.latent_params(),
        )
        .ok()?;
        GroundModel::fit(
            &task.candidates.r,
            &task.candidates.z,
            latent,
            out.theta.height_params(),
            data.l_bounds,
        )
        .ok()
    });
    report.status = if model.is_some() {
        SegmentStatus::Trained
    } else {
        report.status
    };
    TrainedSegment {
        segment: task.segment,
        model,
        report,
    }
}

/// One point's verdict under the ground test: the normalized height deviation
/// must sit within `t_d` AND the posterior variance within `t_v`. Returns the
/// deviation statistic along with the label.
pub fn classify_point(
    z_star: f64,
    post: &Posterior,
    sigma_n: f64,
    th: &ClassifierThresholds,
) -> (Label, f64) {
    let d_stat = (z_star - post.mean).abs() / (sigma_n * sigma_n + post.variance).sqrt();
    let label = if d_stat <= th.t_d && post.variance <= th.t_v {
        Label::Ground
    } else {
        Label::Obstacle
    };
    (label, d_stat)
}

/// Labels and posterior fields for one segment's points, keyed by source
/// index. Disjoint across segments.
#[derive(Debug, Clone)]
pub struct SegmentOutput {
    pub segment: u32,
    pub source: Vec<usize>,
    pub labels: Vec<Label>,
    pub z_bar: Vec<f64>,
    pub variance: Vec<f64>,
    pub d_stat: Vec<f64>,
}

/// Run the ground test on every point of a segment. Degraded segments yield
/// `Unassigned` with NaN posterior fields.
pub fn classify_segment(
    points: &[PolarPoint],
    trained: &TrainedSegment,
    th: &ClassifierThresholds,
) -> SegmentOutput {
    let n = points.len();
    let mut out = SegmentOutput {
        segment: trained.segment,
        source: points.iter().map(|p| p.source_index).collect(),
        labels: alloc::vec![Label::Unassigned; n],
        z_bar: alloc::vec![f64::NAN; n],
        variance: alloc::vec![f64::NAN; n],
        d_stat: alloc::vec![f64::NAN; n],
    };
    let Some(model) = &trained.model else {
        return out;
    };
    let query_r: Vec<f64> = points.iter().map(|p| p.r).collect();
    let query_l: Vec<f64> = query_r.iter().map(|&r| model.length_scale_at(r)).collect();
    let posteriors = model.predict(&query_r, &query_l);
    for (i, (p, post)) in points.iter().zip(&posteriors).enumerate() {
        let (label, d) = classify_point(p.z, post, model.height.sigma_n, th);
        out.labels[i] = label;
        out.z_bar[i] = post.mean;
        out.variance[i] = post.variance;
        out.d_stat[i] = d;
    }
    out
}

/// Stitch segment outputs into a frame-length labeled cloud. Points absent
/// from every output (outside the radial range) stay `Unassigned` with no
/// segment id.
pub fn merge_outputs(total_points: usize, outputs: &[SegmentOutput]) -> LabeledCloud {
    let mut out = LabeledCloud::unassigned(total_points);
    for seg in outputs {
        for (k, &i) in seg.source.iter().enumerate() {
            out.labels[i] = seg.labels[k];
            out.z_bar[i] = seg.z_bar[k];
            out.variance[i] = seg.variance[k];
            out.d_stat[i] = seg.d_stat[k];
            out.segment_of[i] = Some(seg.segment);
        }
    }
    out
}

/// Full pipeline over one frame, with per-segment diagnostics.
pub fn segment_ground_detailed(
    cloud: &PointCloud,
    config: &PipelineConfig,
) -> Result<(LabeledCloud, Vec<SegmentReport>), Error> {
    let prepared = prepare(cloud, config)?;
    let trained: Vec<TrainedSegment> = prepared
        .tasks
        .iter()
        .map(|t| train_segment(t, &config.scg))
        .collect();
    let outputs: Vec<SegmentOutput> = trained
        .iter()
        .zip(&prepared.grid.segments)
        .map(|(t, pts)| classify_segment(pts, t, &config.thresholds))
        .collect();
    let labeled = merge_outputs(cloud.len(), &outputs);
    let reports = trained.into_iter().map(|t| t.report).collect();
    Ok((labeled, reports))
}

/// Full pipeline over one frame.
pub fn segment_ground(cloud: &PointCloud, config: &PipelineConfig) -> Result<LabeledCloud, Error> {
    segment_ground_detailed(cloud, config).map(|(labeled, _)| labeled)
}

/// Agreement of a labeled cloud with ground truth. `None` rates mean the
/// denominator was empty, not zero agreement.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Metrics {
    /// Matching labels / assigned points.
    pub success_rate: Option<f64>,
    /// Among points called ground, the fraction that are.
    pub ground_precision: Option<f64>,
    /// Among true ground points (with an assigned label), the fraction found.
    pub ground_recall: Option<f64>,
    pub assigned: usize,
    pub unassigned: usize,
    pub per_segment: Vec<SegmentMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SegmentMetrics {
    pub segment: u32,
    pub assigned: usize,
    pub correct: usize,
    pub success_rate: Option<f64>,
}

fn rate(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Score predictions against truth. `Unassigned` predictions are excluded
/// from every rate and only counted.
pub fn evaluate(predicted: &LabeledCloud, truth: &[Label]) -> Result<Metrics, Error> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    let mut assigned = 0usize;
    let mut unassigned = 0usize;
    let mut matches = 0usize;
    let mut true_pos = 0usize;
    let mut called_ground = 0usize;
    let mut truly_ground = 0usize;
    let mut by_segment: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (i, (&pred, &want)) in predicted.labels.iter().zip(truth).enumerate() {
        if pred == Label::Unassigned || want == Label::Unassigned {
            unassigned += 1;
            continue;
        }
        assigned += 1;
        let correct = pred == want;
        matches += correct as usize;
        called_ground += (pred == Label::Ground) as usize;
        truly_ground += (want == Label::Ground) as usize;
        true_pos += (correct && pred == Label::Ground) as usize;
        if let Some(seg) = predicted.segment_of[i] {
            let slot = by_segment.entry(seg).or_insert((0, 0));
            slot.0 += 1;
            slot.1 += correct as usize;
        }
    }
    let per_segment = by_segment
        .into_iter()
        .map(|(segment, (seg_assigned, correct))| SegmentMetrics {
            segment,
            assigned: seg_assigned,
            correct,
            success_rate: rate(correct, seg_assigned),
        })
        .collect();
    Ok(Metrics {
        success_rate: rate(matches, assigned),
        ground_precision: rate(true_pos, called_ground),
        ground_recall: rate(true_pos, truly_ground),
        assigned,
        unassigned,
        per_segment,
    })
}
