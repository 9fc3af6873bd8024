use noncoherent_mimo::channel::{triangular_profile, ChannelProfile};
use noncoherent_mimo::codebook::{orthogonal_pair, Codeword};
use noncoherent_mimo::harness::{
    pairwise_error, run_sweep, simulate_observation, trial_rng, DetectorChoice, DetectorKind, ExperimentConfig, SWEEP_HEADER,
    THREADS_ENV,
};
use noncoherent_mimo::linalg::CMat;

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        nr_values: vec![16, 32],
        snr_db: vec![-10.0, 0.0],
        trials: 400,
        seed: 9,
        record_timing: false,
        ..ExperimentConfig::default()
    }
}

fn sweep_text(config: &ExperimentConfig) -> String {
    let mut out = Vec::new();
    run_sweep(config, &mut out).unwrap();
    String::from_utf8(out).unwrap()
}

#[test]
fn sweeps_are_reproducible_and_independent_of_worker_count() {
    let config = small_config();
    std::env::set_var(THREADS_ENV, "1");
    let single = sweep_text(&config);
    std::env::set_var(THREADS_ENV, "3");
    let multi = sweep_text(&config);
    std::env::remove_var(THREADS_ENV);
    assert_eq!(single, multi);
    assert_eq!(single, sweep_text(&config));
}

#[test]
fn sweep_writes_one_row_per_detector_and_point() {
    let text = sweep_text(&small_config());
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), SWEEP_HEADER.to_vec());
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2 * 2 * 2);
    for pair in rows.chunks(2) {
        assert_eq!(&pair[0][4], "direct");
        assert_eq!(&pair[1][4], "spectral");
        assert_eq!(&pair[0][2], &pair[1][2]);
        assert_eq!(&pair[0][3], &pair[1][3]);
        for r in pair {
            let p: f64 = r[5].parse().unwrap();
            assert!((0.0..=1.0).contains(&p));
            assert_eq!(&r[7], "0.0000");
        }
    }
}

#[test]
fn empty_grid_writes_only_the_header() {
    let config = ExperimentConfig { nr_values: vec![], ..small_config() };
    assert_eq!(sweep_text(&config).trim_end(), SWEEP_HEADER.join(","));
}

#[test]
fn single_detector_sweeps_write_one_row_per_point() {
    let config = ExperimentConfig { detector: DetectorChoice::Spectral, ..small_config() };
    assert_eq!(sweep_text(&config).lines().count(), 1 + 4);
}

#[test]
fn very_low_snr_is_near_chance() {
    let config = ExperimentConfig { trials: 2000, ..small_config() };
    let est = pairwise_error(&config, 16, -60.0).unwrap();
    for kind in [DetectorKind::Direct, DetectorKind::Spectral] {
        let d = est.get(kind).unwrap();
        let se = (0.25 / d.trials as f64).sqrt();
        assert!(d.p_err() <= 0.5 + 3.0 * se, "{}: {}", kind.name(), d.p_err());
    }
}

#[test]
fn paired_detectors_see_the_same_trial_count() {
    let est = pairwise_error(&small_config(), 16, 0.0).unwrap();
    let (d, s) = (est.get(DetectorKind::Direct).unwrap(), est.get(DetectorKind::Spectral).unwrap());
    assert_eq!(d.trials, 400);
    assert_eq!(s.trials, 400);
    let expected = (d.p_err() * (1.0 - d.p_err()) / 400.0).sqrt();
    assert!((d.stderr() - expected).abs() < 1e-15);
}

#[test]
fn noise_only_observations_have_the_requested_variance() {
    let x = Codeword::from_matrix(CMat::zeros(4, 1)).unwrap();
    let profile = triangular_profile(1, 8).unwrap();
    let noise = 2.5;
    let draws = 20_000;
    let mut total = 0.0;
    for t in 0..draws {
        let y = simulate_observation(&x, &profile, 8, noise, &mut trial_rng(3, t)).unwrap();
        total += y.samples().iter().map(|v| v.norm_sqr()).sum::<f64>();
    }
    let variance = total / (draws as f64 * 32.0);
    assert!((variance - noise).abs() < 0.02 * noise, "{variance}");
}

#[test]
fn zero_profile_observations_are_pure_noise() {
    let (x, _) = orthogonal_pair(4, 1, 0).unwrap();
    let profile = ChannelProfile::from_lags(vec![vec![0.0]]).unwrap();
    let y = simulate_observation(&x, &profile, 8, 0.0, &mut trial_rng(0, 0)).unwrap();
    assert!(y.samples().iter().all(|v| v.norm() == 0.0));
}

#[test]
fn invalid_configs_are_rejected() {
    for config in [
        ExperimentConfig { nr_values: vec![7], ..small_config() },
        ExperimentConfig { trials: 0, ..small_config() },
        ExperimentConfig { k: 3, nt: 2, ..small_config() },
        ExperimentConfig { m: 3, ..small_config() },
    ] {
        let err = run_sweep(&config, Vec::new()).unwrap_err();
        assert!(matches!(err, noncoherent_mimo::Error::InvalidArgument(_)), "{err}");
    }
}
