use std::io::Write;
use std::time::{Duration, Instant};

use super::{db_to_linear, simulate_with_sampler, snr_to_noise_power, trial_rng, DetectorKind, ExperimentConfig};
use crate::channel::{assemble_fading_covariance, ChannelSampler};
use crate::detector_direct::{argmin, precompute_direct};
use crate::detector_spectral::precompute_spectral;
use crate::error::{invalid, Result};

/// Observations timed per repeat when measuring detection cost.
const OBSERVATIONS: u64 = 8;
/// Time spent per cell and round.
const ROUND_BUDGET: Duration = Duration::from_millis(25);
/// Fewest passes over the `Nr` ladder.
const MIN_ROUNDS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub k: usize,
    pub nt: usize,
    pub nr: usize,
    pub detector: DetectorKind,
    pub t_precompute_ms: f64,
    pub t_per_trial_us: f64,
    /// Precompute plus one detection.
    pub t_end_to_end_ms: f64,
    /// Precompute time over that of the previous `Nr` rung.
    pub precompute_ratio: Option<f64>,
    /// Direct end-to-end time over this detector's, at the same `Nr`.
    pub speedup_vs_direct: Option<f64>,
}

/// Minimum wall-clock of `f` over runs spanning at least `ROUND_BUDGET`.
fn min_time<F: FnMut() -> Result<()>>(mut f: F) -> Result<Duration> {
    let mut best = Duration::MAX;
    let mut spent = Duration::ZERO;
    while spent < ROUND_BUDGET || best == Duration::MAX {
        let t0 = Instant::now();
        f()?;
        let dt = t0.elapsed();
        best = best.min(dt);
        spent += dt;
    }
    Ok(best)
}

/// Times precomputation and per-observation detection for each detector over
/// the configured `Nr` ladder at the first configured SNR. `repeats` is the
/// number of passes over the ladder (at least eight). Runs on the calling
/// thread only.
pub fn benchmark_complexity(config: &ExperimentConfig, repeats: usize) -> Result<Vec<BenchmarkRow>> {
    config.validate()?;
    let Some(&snr_db) = config.snr_db.first() else {
        return invalid("benchmark needs an SNR value");
    };
    let alphabet = config.build_alphabet()?;
    let kinds = config.detector.kinds();

    let mut rungs = Vec::with_capacity(config.nr_values.len());
    for &nr in &config.nr_values {
        let profile = config.build_profile(nr)?;
        let fading = assemble_fading_covariance(&profile, nr)?;
        let noise = snr_to_noise_power(db_to_linear(snr_db), &alphabet, &fading)?;
        let sampler = ChannelSampler::new(&profile, nr, fading.eta)?;
        let seed = super::point_seed(config.seed, nr, snr_db);
        let observations: Vec<_> = (0..OBSERVATIONS)
            .map(|t| {
                let x = &alphabet[(t % alphabet.len() as u64) as usize];
                simulate_with_sampler(x, &sampler, noise, &mut trial_rng(seed, t))
            })
            .collect();
        let direct = if kinds.contains(&DetectorKind::Direct) { Some(precompute_direct(&alphabet, &fading, noise)?) } else { None };
        let spectral = if kinds.contains(&DetectorKind::Spectral) {
            Some(precompute_spectral(&alphabet, &fading, noise, nr, config.window)?)
        } else {
            None
        };
        rungs.push((nr, fading, noise, observations, direct, spectral));
    }

    // Rounds sweep the whole ladder so a slow stretch on the host cannot
    // bias one rung; each cell keeps its fastest round.
    let mut best = vec![[(Duration::MAX, Duration::MAX); 2]; rungs.len()];
    for _ in 0..repeats.max(MIN_ROUNDS) {
        for (cell, (nr, fading, noise, observations, direct, spectral)) in best.iter_mut().zip(&rungs) {
            for &kind in kinds {
                let (pre, detect) = match kind {
                    DetectorKind::Direct => {
                        let state = direct.as_ref().expect("direct state");
                        let pre = min_time(|| precompute_direct(&alphabet, fading, *noise).map(drop))?;
                        let detect = min_time(|| {
                            for y in observations {
                                std::hint::black_box(argmin(&state.metrics(y)?));
                            }
                            Ok(())
                        })?;
                        (pre, detect)
                    }
                    DetectorKind::Spectral => {
                        let state = spectral.as_ref().expect("spectral state");
                        let pre = min_time(|| precompute_spectral(&alphabet, fading, *noise, *nr, config.window).map(drop))?;
                        let detect = min_time(|| {
                            for y in observations {
                                let cl = state.cl_transform().transform(y)?;
                                std::hint::black_box(argmin(&state.metrics(&cl)?));
                            }
                            Ok(())
                        })?;
                        (pre, detect)
                    }
                };
                let slot = &mut cell[kind as usize];
                slot.0 = slot.0.min(pre);
                slot.1 = slot.1.min(detect);
            }
        }
    }

    let mut rows: Vec<BenchmarkRow> = Vec::new();
    for (cell, (nr, ..)) in best.iter().zip(&rungs) {
        let mut direct_e2e = None;
        for &kind in kinds {
            let (pre, detect) = cell[kind as usize];
            let t_precompute_ms = pre.as_secs_f64() * 1e3;
            let t_per_trial_us = detect.as_secs_f64() * 1e6 / OBSERVATIONS as f64;
            let t_end_to_end_ms = t_precompute_ms + t_per_trial_us * 1e-3;
            if kind == DetectorKind::Direct {
                direct_e2e = Some(t_end_to_end_ms);
            }
            let precompute_ratio = rows
                .iter()
                .rev()
                .find(|r| r.detector == kind && r.nr < *nr)
                .map(|r| t_precompute_ms / r.t_precompute_ms);
            rows.push(BenchmarkRow {
                k: alphabet.block_len(),
                nt: alphabet.nt(),
                nr: *nr,
                detector: kind,
                t_precompute_ms,
                t_per_trial_us,
                t_end_to_end_ms,
                precompute_ratio,
                speedup_vs_direct: direct_e2e.map(|d| d / t_end_to_end_ms),
            });
        }
    }
    Ok(rows)
}

/// Header `K,nt,Nr,detector,t_precompute_ms,t_per_trial_us,t_end_to_end_ms,precompute_ratio,speedup_vs_direct`;
/// undefined ratios are empty fields.
pub fn write_benchmark_csv<W: Write>(rows: &[BenchmarkRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "K",
        "nt",
        "Nr",
        "detector",
        "t_precompute_ms",
        "t_per_trial_us",
        "t_end_to_end_ms",
        "precompute_ratio",
        "speedup_vs_direct",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.nt.to_string(),
            r.nr.to_string(),
            r.detector.name().to_string(),
            format!("{:.4}", r.t_precompute_ms),
            format!("{:.4}", r.t_per_trial_us),
            format!("{:.4}", r.t_end_to_end_ms),
            opt(r.precompute_ratio),
            opt(r.speedup_vs_direct),
        ])?;
    }
    w.flush()?;
    Ok(())
}
