use noncoherent_mimo::channel::{assemble_fading_covariance, random_unitary, triangular_profile, ChannelProfile, ChannelSampler};
use noncoherent_mimo::codebook::{orthogonal_pair, svd_codeword, CodewordAlphabet};
use noncoherent_mimo::detector_direct::{build_block_covariance, detect_direct, precompute_direct};
use noncoherent_mimo::detector_spectral::{
    cl_coefficients, csm_analytic, csm_from_rsm, detect_spectral, precompute_spectral, rsm_estimate, Window,
};
use noncoherent_mimo::harness::{
    orthogonal_pair_noise_power, pairwise_error, simulate_with_sampler, DetectorChoice, DetectorKind, ExperimentConfig,
};
use noncoherent_mimo::linalg::{complex_gaussian, dft_matrix, frobenius, hermitian_eigenvalues, log_det_hpd, phase_ramp, CMat};
use noncoherent_mimo::ReceivedBlock;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_block(k: usize, nr: usize, seed: u64) -> ReceivedBlock {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ReceivedBlock::new(k, nr, (0..k * nr).map(|_| complex_gaussian(&mut rng)).collect()).unwrap()
}

fn random_hermitian_pd(k: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = CMat::from_fn(k, k, |_, _| complex_gaussian(&mut rng));
    &a * a.adjoint() + CMat::identity(k, k).scale(0.1)
}

fn rel(a: &CMat, b: &CMat) -> f64 {
    frobenius(&(a - b)) / frobenius(b)
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// `(K·Nr)·T_l·Σ·T_lᴴ`, with `T_l` the linear map from an observation to its
/// `l`-th CL coefficient vector, read off column by column.
fn exact_cl_covariances(sigma: &CMat, k: usize, nr: usize) -> Vec<CMat> {
    let n = k * nr;
    let mut maps = vec![CMat::zeros(k, n); nr];
    for col in 0..n {
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        e[col] = Complex64::new(1.0, 0.0);
        let cl = cl_coefficients(&ReceivedBlock::new(k, nr, e).unwrap(), k, nr).unwrap();
        for (l, t) in maps.iter_mut().enumerate() {
            for (r, v) in cl.stack(l).iter().enumerate() {
                t[(r, col)] = *v;
            }
        }
    }
    maps.iter().map(|t| (t * sigma * t.adjoint()).scale(n as f64)).collect()
}

#[test]
fn exact_cl_covariance_converges_to_the_estimated_csm() {
    let mut errors = Vec::new();
    for nr in [16, 32, 64, 128] {
        let profile = triangular_profile(1, nr).unwrap();
        let fading = assemble_fading_covariance(&profile, nr).unwrap();
        let alphabet = CodewordAlphabet::from_pair(orthogonal_pair(4, 1, 21).unwrap()).unwrap();
        let state = precompute_spectral(&alphabet, &fading, 0.75, nr, Window::BlackmanTukey).unwrap();
        let sigma = build_block_covariance(&alphabet[0], &fading, 0.75).unwrap().assemble();
        let exact = exact_cl_covariances(&sigma, 4, nr);
        let worst = (0..nr).map(|l| rel(&exact[l], state.csm(0, l))).fold(0.0, f64::max);
        errors.push(worst);
    }
    assert!(strictly_decreasing(&errors) || errors.iter().all(|e| *e < 1e-9), "{errors:?}");
}

#[test]
fn rectangular_rsm_converges_to_analytic_csm() {
    let mut errors = Vec::new();
    for nr in [64, 128, 256] {
        let profile = triangular_profile(1, nr).unwrap();
        let fading = assemble_fading_covariance(&profile, nr).unwrap();
        let (x, _) = orthogonal_pair(4, 1, 22).unwrap();
        let cov = build_block_covariance(&x, &fading, 0.5).unwrap();
        let worst = (0..nr)
            .step_by(nr / 16)
            .map(|l| {
                let sigma = l as f64 / (4 * nr) as f64;
                let estimate = csm_from_rsm(&rsm_estimate(&cov, l, Window::Rectangular).unwrap(), sigma);
                rel(&estimate, &csm_analytic(&x, &profile, fading.eta, 0.5, sigma))
            })
            .fold(0.0, f64::max);
        errors.push(worst);
    }
    assert!(strictly_decreasing(&errors), "{errors:?}");
}

#[test]
fn spectral_log_det_approaches_the_exact_one() {
    let mut gaps = Vec::new();
    for nr in [16, 32, 64, 128] {
        let profile = triangular_profile(1, nr).unwrap();
        let fading = assemble_fading_covariance(&profile, nr).unwrap();
        let alphabet = CodewordAlphabet::from_pair(orthogonal_pair(4, 1, 23).unwrap()).unwrap();
        let direct = precompute_direct(&alphabet, &fading, 0.75).unwrap();
        let spectral = precompute_spectral(&alphabet, &fading, 0.75, nr, Window::BlackmanTukey).unwrap();
        gaps.push((spectral.log_det(0) - direct.log_det(0)).abs());
    }
    assert!(strictly_decreasing(&gaps), "{gaps:?}");
}

#[test]
fn aligned_codeword_csm_is_diagonal_in_the_predicted_basis() {
    let (k, nt, nr) = (6, 2, 32);
    let phi = random_unitary(k, 24).unwrap();
    let ut = random_unitary(nt, 25).unwrap();
    let w = vec![2.0, 0.7];
    let x = svd_codeword(phi.clone(), w.clone(), ut.clone()).unwrap();
    let profile = ChannelProfile::triangular(nt, nr).unwrap().with_ut(ut).unwrap();
    let eta = profile.eta().unwrap();
    let noise = 0.3;
    for sigma in [0.0, 0.013, 0.05, 0.11] {
        let s = csm_analytic(&x, &profile, eta, noise, sigma);
        let theta = CMat::from_diagonal(&nalgebra::DVector::from_vec(phase_ramp(sigma, k)));
        let v = dft_matrix(k).adjoint() * theta.adjoint() * &phi;
        let d = v.adjoint() * &s * &v;
        for r in 0..k {
            for c in 0..k {
                let expected = if r != c {
                    0.0
                } else if r < nt {
                    w[r] * eta * profile.spectrum(r, k as f64 * sigma) + noise
                } else {
                    noise
                };
                assert!((d[(r, c)] - Complex64::new(expected, 0.0)).norm() < 1e-10, "sigma {sigma} ({r},{c})");
            }
        }
    }
}

#[test]
fn quadratic_term_has_unit_mean_under_its_hypothesis() {
    let nr = 64;
    let profile = triangular_profile(1, nr).unwrap();
    let fading = assemble_fading_covariance(&profile, nr).unwrap();
    let alphabet = CodewordAlphabet::from_pair(orthogonal_pair(4, 1, 26).unwrap()).unwrap();
    let noise = 0.75;
    let state = precompute_spectral(&alphabet, &fading, noise, nr, Window::BlackmanTukey).unwrap();
    let sampler = ChannelSampler::new(&profile, nr, fading.eta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    for j in 0..2 {
        let draws = 10_000;
        let mean = (0..draws)
            .map(|_| {
                let y = simulate_with_sampler(&alphabet[j], &sampler, noise, &mut rng);
                state.quadratic(&state.cl_transform().transform(&y).unwrap(), j).unwrap()
            })
            .sum::<f64>()
            / draws as f64;
        assert!((mean - 1.0).abs() < 0.05, "codeword {j}: mean {mean}");
    }
}

#[test]
fn spectral_and_direct_decisions_agree() {
    let nr = 128;
    let profile = triangular_profile(1, nr).unwrap().with_random_ut(1).unwrap();
    let fading = assemble_fading_covariance(&profile, nr).unwrap();
    let alphabet = CodewordAlphabet::from_pair(orthogonal_pair(4, 1, 1).unwrap()).unwrap();
    let noise = orthogonal_pair_noise_power(0.1);
    let direct = precompute_direct(&alphabet, &fading, noise).unwrap();
    let spectral = precompute_spectral(&alphabet, &fading, noise, nr, Window::BlackmanTukey).unwrap();
    let sampler = ChannelSampler::new(&profile, nr, fading.eta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    let draws = 10_000;
    let agree = (0..draws)
        .filter(|t| {
            let y = simulate_with_sampler(&alphabet[t % 2], &sampler, noise, &mut rng);
            detect_direct(&y, &direct).unwrap() == detect_spectral(&y, &spectral).unwrap()
        })
        .count();
    assert!(agree as f64 >= 0.99 * draws as f64, "{agree} of {draws}");
}

#[test]
fn two_stream_error_rates_agree_within_sampling_error() {
    let config = ExperimentConfig {
        k: 6,
        nt: 2,
        nr_values: vec![64],
        snr_db: vec![-5.0],
        trials: 10_000,
        seed: 29,
        detector: DetectorChoice::Both,
        record_timing: false,
        ..ExperimentConfig::default()
    };
    let est = pairwise_error(&config, 64, -5.0).unwrap();
    let d = est.get(DetectorKind::Direct).unwrap();
    let s = est.get(DetectorKind::Spectral).unwrap();
    let sd = (d.stderr().powi(2) + s.stderr().powi(2)).sqrt().max(1.0 / config.trials as f64);
    assert!((d.p_err() - s.p_err()).abs() <= 3.0 * sd, "direct {} spectral {}", d.p_err(), s.p_err());
}

#[test]
fn noise_only_statistics_tie_to_index_zero() {
    let nr = 16;
    let profile = ChannelProfile::from_lags(vec![vec![0.0]]).unwrap();
    let fading = assemble_fading_covariance(&profile, nr);
    // A zero profile has no normalization; the state is built from a flat one.
    assert!(fading.is_err());
    let flat = ChannelProfile::iid(1).unwrap();
    let fading = assemble_fading_covariance(&flat, nr).unwrap();
    let u = random_unitary(4, 30).unwrap();
    let a = svd_codeword(u.clone(), vec![1.0], CMat::identity(1, 1)).unwrap();
    let alphabet = CodewordAlphabet::new(vec![a.clone(), a]).unwrap();
    let state = precompute_spectral(&alphabet, &fading, 1.0, nr, Window::BlackmanTukey).unwrap();
    for seed in 0..20 {
        assert_eq!(detect_spectral(&random_block(4, nr, seed), &state).unwrap(), 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cl_transform_preserves_energy(k in 1usize..7, nr in 1usize..33, seed in any::<u64>()) {
        let y = random_block(k, nr, seed);
        let cl = cl_coefficients(&y, k, nr).unwrap();
        let energy: f64 = y.samples().iter().map(|v| v.norm_sqr()).sum();
        let n = (k * nr) as f64;
        prop_assert!((cl.energy() * n - energy).abs() <= 1e-10 * energy);
    }

    #[test]
    fn csm_congruence_preserves_determinant_and_spectrum(k in 1usize..7, seed in any::<u64>(), sigma in 0.0f64..1.0) {
        let r = random_hermitian_pd(k, seed);
        let s = csm_from_rsm(&r, sigma);
        prop_assert!((log_det_hpd(&s).unwrap() - log_det_hpd(&r).unwrap()).abs() < 1e-9);
        let (er, es) = (hermitian_eigenvalues(&r), hermitian_eigenvalues(&s));
        for (a, b) in er.iter().zip(es.iter()) {
            prop_assert!((a - b).abs() <= 1e-9 * er[er.len() - 1]);
        }
    }

    #[test]
    fn blackman_tukey_csms_are_psd(
        c1 in -0.45f64..0.45,
        c2 in -0.45f64..0.45,
        ut_seed in any::<u64>(),
        cw_seed in any::<u64>(),
    ) {
        let nr = 32;
        let profile = ChannelProfile::from_lags(vec![vec![1.0, c1], vec![1.0, 0.0, c2]])
            .unwrap()
            .with_random_ut(ut_seed)
            .unwrap();
        let fading = assemble_fading_covariance(&profile, nr).unwrap();
        let alphabet = CodewordAlphabet::from_pair(orthogonal_pair(5, 2, cw_seed).unwrap()).unwrap();
        let state = precompute_spectral(&alphabet, &fading, 1e-6, nr, Window::BlackmanTukey).unwrap();
        for j in 0..2 {
            for l in 0..nr {
                let eig = hermitian_eigenvalues(state.csm(j, l));
                prop_assert!(eig[0] >= -1e-9 * eig[eig.len() - 1]);
            }
        }
    }
}
