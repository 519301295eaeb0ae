//! Randomized analytic-vs-finite-difference gradient comparison over the
//! per-segment training objective.

use groundseg::opt::{self, SegmentData, Theta, FD_STEP};
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct GradRow {
    pub segment: usize,
    pub coord: usize,
    pub name: String,
    pub analytic: f64,
    pub fd: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradReport {
    pub rows: Vec<GradRow>,
    pub max_rel_error: f64,
}

fn uniform(rng: &mut rand_chacha::ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    lo + u * (hi - lo)
}

fn coord_name(i: usize) -> String {
    match i {
        0 => "log_sigma_f".into(),
        1 => "log_sigma_n".into(),
        2 => "log_sigma_f_bar".into(),
        3 => "log_sigma_l_bar".into(),
        4 => "log_sigma_n_bar".into(),
        k => format!("l_bar[{}]", k - 5),
    }
}

fn random_segment(
    rng: &mut rand_chacha::ChaCha8Rng,
    max_candidates: usize,
    max_support: usize,
) -> (Theta, SegmentData) {
    let n = 5 + (rng.next_u64() as usize) % (max_candidates.max(6) - 4);
    let nb = 2 + (rng.next_u64() as usize) % (max_support.max(3) - 1);
    let mut r = 2.0;
    let mut train_r = Vec::new();
    for _ in 0..n {
        r += uniform(rng, 0.8, 4.0);
        train_r.push(r);
    }
    let z: Vec<f64> = train_r
        .iter()
        .map(|&r| 0.05 * r + 0.3 * (0.4 * r).sin() + uniform(rng, -0.05, 0.05))
        .collect();
    let span = train_r.last().unwrap() - train_r[0];
    let r_bar: Vec<f64> = (0..nb)
        .map(|j| train_r[0] + span * (j as f64 + 0.5) / nb as f64)
        .collect();
    let seg = SegmentData::new(&train_r, &z, &r_bar, (0.5, 50.0)).unwrap();
    let theta = Theta {
        log_sigma_f: uniform(rng, 0.2, 1.5).ln(),
        log_sigma_n: uniform(rng, 0.03, 0.2).ln(),
        log_sigma_f_bar: uniform(rng, 0.5, 1.5).ln(),
        log_sigma_l_bar: uniform(rng, 2.0, 12.0).ln(),
        log_sigma_n_bar: uniform(rng, 0.05, 0.3).ln(),
        l_bar: (0..nb).map(|_| uniform(rng, 1.0, 20.0).ln()).collect(),
    };
    (theta, seg)
}

/// Compare analytic and central-difference gradients on `segments` random
/// training instances. `corrupt` injects a deliberate error into the first
/// analytic coordinate as a negative control.
pub fn run(
    seed: u64,
    segments: usize,
    max_candidates: usize,
    max_support: usize,
    corrupt: bool,
) -> GradReport {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut max_rel = 0.0f64;
    for s in 0..segments {
        let (theta, seg) = random_segment(&mut rng, max_candidates, max_support);
        let mut analytic = opt::gradient(&theta, &seg).expect("interior theta");
        let fd = opt::fd_gradient(&theta, &seg, FD_STEP).expect("interior theta");
        if corrupt {
            analytic[0] += 0.5;
        }
        for (i, (a, f)) in analytic.iter().zip(&fd).enumerate() {
            let rel = opt::relative_error(*a, *f);
            max_rel = max_rel.max(rel);
            rows.push(GradRow {
                segment: s,
                coord: i,
                name: coord_name(i),
                analytic: *a,
                fd: *f,
                rel_error: rel,
            });
        }
    }
    GradReport {
        rows,
        max_rel_error: max_rel,
    }
}

/// CSV rendering, one row per coordinate.
pub fn to_csv(report: &GradReport) -> String {
    let mut out = String::from("segment,coord,name,analytic,fd,rel_error\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{:.17e},{:.17e},{:.3e}\n",
            r.segment, r.coord, r.name, r.analytic, r.fd, r.rel_error
        ));
    }
    out
}
