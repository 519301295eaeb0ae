//! Parallel frame driver. Segments are independent, so training and
//! classification fan out over a rayon pool; outputs are collected in
//! segment order and merged by source index, which keeps the result
//! byte-identical at every worker count.

use std::time::Instant;

use groundseg::cloud::{LabeledCloud, PointCloud};
use groundseg::pipeline::{
    self, PipelineConfig, SegmentOutput, SegmentReport, TrainedSegment,
};
use groundseg::Error;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct StageTimings {
    pub prepare_ms: f64,
    pub train_ms: f64,
    pub classify_ms: f64,
    pub merge_ms: f64,
    pub total_ms: f64,
}

/// One segment's report plus how long its training took.
#[derive(Debug, Clone, Serialize)]
pub struct SegmentDiag {
    #[serde(flatten)]
    pub report: SegmentReport,
    pub trace_len: usize,
    pub train_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub points: usize,
    pub excluded: usize,
    pub timings: StageTimings,
    pub segments: Vec<SegmentDiag>,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Build a rayon pool honoring the worker cap (0 = one per core).
pub fn make_pool(jobs: usize) -> Result<rayon::ThreadPool, rayon::ThreadPoolBuildError> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build()
}

/// Run the full pipeline on one frame inside `pool`, timing each stage.
pub fn run_frame(
    cloud: &PointCloud,
    config: &PipelineConfig,
    pool: &rayon::ThreadPool,
) -> Result<(LabeledCloud, RunSummary), Error> {
    let t_total = Instant::now();

    let t = Instant::now();
    let prepared = pipeline::prepare(cloud, config)?;
    let prepare_ms = ms(t);

    let t = Instant::now();
    let trained: Vec<(TrainedSegment, f64)> = pool.install(|| {
        prepared
            .tasks
            .par_iter()
            .map(|task| {
                let t_seg = Instant::now();
                let trained = pipeline::train_segment(task, &config.scg);
                (trained, ms(t_seg))
            })
            .collect()
    });
    let train_ms = ms(t);

    let t = Instant::now();
    let outputs: Vec<SegmentOutput> = pool.install(|| {
        trained
            .par_iter()
            .zip(&prepared.grid.segments)
            .map(|((tr, _), pts)| pipeline::classify_segment(pts, tr, &config.thresholds))
            .collect()
    });
    let classify_ms = ms(t);

    let t = Instant::now();
    let labeled = pipeline::merge_outputs(cloud.len(), &outputs);
    let merge_ms = ms(t);

    let segments = trained
        .into_iter()
        .map(|(tr, train_ms)| SegmentDiag {
            trace_len: tr.report.trace.len(),
            report: tr.report,
            train_ms,
        })
        .collect();
    let summary = RunSummary {
        points: cloud.len(),
        excluded: prepared.grid.excluded.len(),
        timings: StageTimings {
            prepare_ms,
            train_ms,
            classify_ms,
            merge_ms,
            total_ms: ms(t_total),
        },
        segments,
    };
    Ok((labeled, summary))
}
