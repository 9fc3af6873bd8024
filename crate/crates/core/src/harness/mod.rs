//! Monte Carlo error-rate experiments and complexity benchmarks.
//!
//! Every grid point `(Nr, SNR)` gets its own seed derived from the
//! experiment seed, and trial `t` draws from ChaCha stream `t` of that seed,
//! so results do not depend on the worker count or scheduling order. Trial
//! `t` transmits codeword `t mod M`; with both detectors selected, each trial
//! feeds the same observation to both.

mod bench;

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{assemble_fading_covariance, ChannelProfile, ChannelSampler, FadingCovariance};
use crate::codebook::{grassmannian_alphabet, orthogonal_pair, Codeword, CodewordAlphabet};
use crate::detector_direct::{argmin, precompute_direct};
use crate::detector_spectral::{precompute_spectral, Window};
use crate::error::{invalid, Error, Result};
use crate::io::{read_alphabet, read_profile};
use crate::linalg::complex_gaussian;
use crate::observation::ReceivedBlock;

pub use bench::{benchmark_complexity, write_benchmark_csv, BenchmarkRow};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "NONCOHERENT_MIMO_THREADS";

/// Header of the sweep CSV.
pub const SWEEP_HEADER: [&str; 9] = ["K", "nt", "Nr", "snr_db", "detector", "p_err", "stderr", "t_precompute_ms", "t_per_trial_us"];

/// Trials handed to a worker at a time.
const CHUNK: u64 = 64;
/// Observations scored together by the direct detector.
const DIRECT_BATCH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    Direct,
    Spectral,
}

impl DetectorKind {
    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Direct => "direct",
            DetectorKind::Spectral => "spectral",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DetectorChoice {
    Direct,
    Spectral,
    #[default]
    Both,
}

impl DetectorChoice {
    pub fn kinds(self) -> &'static [DetectorKind] {
        match self {
            DetectorChoice::Direct => &[DetectorKind::Direct],
            DetectorChoice::Spectral => &[DetectorKind::Spectral],
            DetectorChoice::Both => &[DetectorKind::Direct, DetectorKind::Spectral],
        }
    }
}

impl std::str::FromStr for DetectorChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(DetectorChoice::Direct),
            "spectral" => Ok(DetectorChoice::Spectral),
            "both" => Ok(DetectorChoice::Both),
            other => invalid(format!("unknown detector '{other}' (expected direct, spectral or both)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum AlphabetSpec {
    #[default]
    OrthogonalPair,
    Grassmannian,
    File(PathBuf),
}

impl std::str::FromStr for AlphabetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "orthogonal-pair" => AlphabetSpec::OrthogonalPair,
            "grassmannian" => AlphabetSpec::Grassmannian,
            path => AlphabetSpec::File(PathBuf::from(path)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ProfileSpec {
    #[default]
    Triangular,
    File(PathBuf),
}

impl std::str::FromStr for ProfileSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "triangular" => ProfileSpec::Triangular,
            path => ProfileSpec::File(PathBuf::from(path)),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub k: usize,
    pub nt: usize,
    pub m: usize,
    pub nr_values: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub detector: DetectorChoice,
    pub alphabet: AlphabetSpec,
    pub profile: ProfileSpec,
    pub window: Window,
    /// Seed of the Haar-random transmitter basis `Ut`; `None` reuses `seed`.
    pub ut_seed: Option<u64>,
    /// When false, timing columns are written as zero so reruns are byte-identical.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            k: 4,
            nt: 1,
            m: 2,
            nr_values: vec![128],
            snr_db: vec![-10.0],
            trials: 100_000,
            seed: 1,
            detector: DetectorChoice::Both,
            alphabet: AlphabetSpec::OrthogonalPair,
            profile: ProfileSpec::Triangular,
            window: Window::BlackmanTukey,
            ut_seed: None,
            record_timing: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.nt == 0 {
            return invalid("K and nt must be positive");
        }
        if self.trials == 0 {
            return invalid("trials must be at least 1");
        }
        if let Some(nr) = self.nr_values.iter().find(|nr| **nr < 2 || **nr % 2 != 0) {
            return invalid(format!("Nr must be even and at least 2, got {nr}"));
        }
        if let Some(s) = self.snr_db.iter().find(|s| !s.is_finite()) {
            return invalid(format!("SNR must be finite, got {s}"));
        }
        match self.alphabet {
            AlphabetSpec::OrthogonalPair => {
                if self.k < 2 * self.nt {
                    return invalid(format!("orthogonal pair needs K >= 2*nt, got K={} nt={}", self.k, self.nt));
                }
                if self.m != 2 {
                    return invalid(format!("orthogonal pair has M = 2, got M = {}", self.m));
                }
            }
            AlphabetSpec::Grassmannian => {
                if self.m < 2 || self.nt > self.k {
                    return invalid("grassmannian alphabet needs M >= 2 and nt <= K");
                }
            }
            AlphabetSpec::File(_) => {}
        }
        Ok(())
    }

    /// Builds the alphabet; files must match `K` and `nt`.
    pub fn build_alphabet(&self) -> Result<CodewordAlphabet> {
        match &self.alphabet {
            AlphabetSpec::OrthogonalPair => CodewordAlphabet::from_pair(orthogonal_pair(self.k, self.nt, self.seed)?),
            AlphabetSpec::Grassmannian => grassmannian_alphabet(self.k, self.nt, self.m, self.seed),
            AlphabetSpec::File(path) => {
                let a = read_alphabet(path)?;
                if a.block_len() != self.k || a.nt() != self.nt {
                    return invalid(format!(
                        "alphabet file {} is {}x{} but K={}, nt={} requested",
                        path.display(),
                        a.block_len(),
                        a.nt(),
                        self.k,
                        self.nt
                    ));
                }
                Ok(a)
            }
        }
    }

    pub fn ut_seed(&self) -> u64 {
        self.ut_seed.unwrap_or(self.seed)
    }

    /// Profile for array size `nr` with `Ut` drawn from [`ExperimentConfig::ut_seed`].
    pub fn build_profile(&self, nr: usize) -> Result<ChannelProfile> {
        let p = match &self.profile {
            ProfileSpec::Triangular => ChannelProfile::triangular(self.nt, nr)?,
            ProfileSpec::File(path) => read_profile(path)?,
        };
        if p.nt() != self.nt {
            return invalid(format!("profile has {} streams but nt = {}", p.nt(), self.nt));
        }
        p.with_random_ut(self.ut_seed())
    }
}

/// Result of one detector at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorEstimate {
    pub detector: DetectorKind,
    pub errors: u64,
    pub trials: u64,
    pub t_precompute: Duration,
    /// Summed single-thread detection time over all trials.
    pub t_detect_total: Duration,
}

impl DetectorEstimate {
    pub fn p_err(&self) -> f64 {
        self.errors as f64 / self.trials as f64
    }

    /// `√(p̂(1 − p̂)/trials)`
    pub fn stderr(&self) -> f64 {
        let p = self.p_err();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    pub fn t_per_trial_us(&self) -> f64 {
        self.t_detect_total.as_secs_f64() * 1e6 / self.trials as f64
    }
}

/// Error estimates at one `(Nr, SNR)` grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorEstimate {
    pub k: usize,
    pub nt: usize,
    pub nr: usize,
    pub snr_db: f64,
    pub noise_power: f64,
    pub detectors: Vec<DetectorEstimate>,
    pub warnings: Vec<String>,
}

impl ErrorEstimate {
    pub fn get(&self, kind: DetectorKind) -> Option<&DetectorEstimate> {
        self.detectors.iter().find(|d| d.detector == kind)
    }
}

/// `σ²_Z = tr(η·Ut·C_H(0)·Utᴴ·E[XᴴX]) / (K·snr)`, averaging over the
/// equiprobable alphabet.
pub fn snr_to_noise_power(snr_linear: f64, alphabet: &CodewordAlphabet, fading: &FadingCovariance) -> Result<f64> {
    if !(snr_linear.is_finite() && snr_linear > 0.0) {
        return invalid(format!("SNR must be positive, got {snr_linear}"));
    }
    if alphabet.nt() != fading.nt() {
        return invalid("alphabet and fading disagree on nt");
    }
    let power = (&fading.blocks[0] * alphabet.mean_gram()).trace().re;
    if power.is_nan() || power <= 0.0 {
        return invalid("alphabet delivers no signal power");
    }
    Ok(power / (alphabet.block_len() as f64 * snr_linear))
}

/// `σ²_Z = 0.75/snr`, valid for the orthogonal pair under a unit-trace-per-stream channel.
pub fn orthogonal_pair_noise_power(snr_linear: f64) -> f64 {
    0.75 / snr_linear
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// `vec(X·H + Z)` with `H` drawn by `sampler` and `Z` i.i.d. `CN(0, σ²_Z)`.
pub fn simulate_with_sampler<R: Rng + ?Sized>(x: &Codeword, sampler: &ChannelSampler, noise_power: f64, rng: &mut R) -> ReceivedBlock {
    let h = sampler.sample(rng);
    let mut y = x.matrix() * h;
    let amp = noise_power.sqrt();
    if amp > 0.0 {
        for v in y.iter_mut() {
            *v += complex_gaussian(rng) * amp;
        }
    }
    ReceivedBlock::from_matrix(&y)
}

/// One observation under codeword `x`.
pub fn simulate_observation<R: Rng + ?Sized>(
    x: &Codeword,
    profile: &ChannelProfile,
    nr: usize,
    noise_power: f64,
    rng: &mut R,
) -> Result<ReceivedBlock> {
    if !(noise_power.is_finite() && noise_power >= 0.0) {
        return invalid(format!("noise power must be nonnegative, got {noise_power}"));
    }
    // A zero profile has no η; it can only produce zero channels.
    let eta = profile.eta().unwrap_or(0.0);
    let sampler = ChannelSampler::new(profile, nr, eta)?;
    Ok(simulate_with_sampler(x, &sampler, noise_power, rng))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the grid point `(Nr, SNR)`.
pub fn point_seed(seed: u64, nr: usize, snr_db: f64) -> u64 {
    splitmix(splitmix(seed) ^ splitmix(nr as u64).rotate_left(17) ^ splitmix(snr_db.to_bits()).rotate_left(41))
}

/// Generator for trial `trial` of a grid point.
pub fn trial_rng(point_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(point_seed);
    rng.set_stream(trial);
    rng
}

/// Worker count: `NONCOHERENT_MIMO_THREADS` if set to a positive integer,
/// otherwise the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn with_context(e: Error, ctx: &str) -> Error {
    match e {
        Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("{ctx}: {m}")),
        Error::DegenerateProfile(m) => Error::DegenerateProfile(format!("{ctx}: {m}")),
        other => other,
    }
}

#[derive(Default, Clone, Copy)]
struct Tally {
    errors: [u64; 2],
    nanos: [u128; 2],
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        for d in 0..2 {
            self.errors[d] += other.errors[d];
            self.nanos[d] += other.nanos[d];
        }
        self
    }
}

/// Monte Carlo error probability at one grid point, averaged over equally
/// likely transmitted codewords.
pub fn pairwise_error(config: &ExperimentConfig, nr: usize, snr_db: f64) -> Result<ErrorEstimate> {
    config.validate()?;
    let alphabet = config.build_alphabet()?;
    pairwise_error_with(config, &alphabet, nr, snr_db)
}

/// [`pairwise_error`] with a prebuilt alphabet.
pub fn pairwise_error_with(config: &ExperimentConfig, alphabet: &CodewordAlphabet, nr: usize, snr_db: f64) -> Result<ErrorEstimate> {
    let ctx = format!("Nr={nr}, SNR={snr_db} dB");
    let run = || -> Result<ErrorEstimate> {
        let profile = config.build_profile(nr)?;
        let fading = assemble_fading_covariance(&profile, nr)?;
        let noise = snr_to_noise_power(db_to_linear(snr_db), alphabet, &fading)?;
        let sampler = ChannelSampler::new(&profile, nr, fading.eta)?;
        let kinds = config.detector.kinds();

        let start = Instant::now();
        let direct = if kinds.contains(&DetectorKind::Direct) {
            Some(precompute_direct(alphabet, &fading, noise)?)
        } else {
            None
        };
        let t_direct = start.elapsed();
        let start = Instant::now();
        let spectral = if kinds.contains(&DetectorKind::Spectral) {
            Some(precompute_spectral(alphabet, &fading, noise, nr, config.window)?)
        } else {
            None
        };
        let t_spectral = start.elapsed();

        let seed = point_seed(config.seed, nr, snr_db);
        let m = alphabet.len() as u64;
        let trials = config.trials;
        let chunks = trials.div_ceil(CHUNK);
        let run_chunk = |c: u64| -> Result<Tally> {
            let mut tally = Tally::default();
            let range = c * CHUNK..((c + 1) * CHUNK).min(trials);
            let sent: Vec<usize> = range.clone().map(|t| (t % m) as usize).collect();
            let ys: Vec<ReceivedBlock> = range
                .zip(&sent)
                .map(|(t, &s)| simulate_with_sampler(&alphabet[s], &sampler, noise, &mut trial_rng(seed, t)))
                .collect();
            if let Some(state) = &direct {
                let t0 = Instant::now();
                // Batches of observations share one pass over each Cholesky factor.
                for (ys, sent) in ys.chunks(DIRECT_BATCH).zip(sent.chunks(DIRECT_BATCH)) {
                    for (metrics, &s) in state.metrics_batch(ys)?.iter().zip(sent) {
                        tally.errors[0] += (argmin(metrics) != s) as u64;
                    }
                }
                tally.nanos[0] += t0.elapsed().as_nanos();
            }
            if let Some(state) = &spectral {
                let t0 = Instant::now();
                for (y, &s) in ys.iter().zip(&sent) {
                    let cl = state.cl_transform().transform(y)?;
                    tally.errors[1] += (argmin(&state.metrics(&cl)?) != s) as u64;
                }
                tally.nanos[1] += t0.elapsed().as_nanos();
            }
            Ok(tally)
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(worker_count())
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
        let tally = pool.install(|| {
            (0..chunks)
                .into_par_iter()
                .map(run_chunk)
                .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))
        })?;

        let mut detectors = Vec::new();
        for &kind in kinds {
            let (idx, t_pre) = match kind {
                DetectorKind::Direct => (0, t_direct),
                DetectorKind::Spectral => (1, t_spectral),
            };
            let (t_precompute, t_detect_total) = if config.record_timing {
                (t_pre, Duration::from_nanos(tally.nanos[idx].min(u64::MAX as u128) as u64))
            } else {
                (Duration::ZERO, Duration::ZERO)
            };
            detectors.push(DetectorEstimate { detector: kind, errors: tally.errors[idx], trials, t_precompute, t_detect_total });
        }
        Ok(ErrorEstimate {
            k: alphabet.block_len(),
            nt: alphabet.nt(),
            nr,
            snr_db,
            noise_power: noise,
            detectors,
            warnings: spectral.map(|s| s.warnings().to_vec()).unwrap_or_default(),
        })
    };
    run().map_err(|e| with_context(e, &ctx))
}

pub fn sweep_header<W: Write>(w: &mut csv::Writer<W>) -> Result<()> {
    w.write_record(SWEEP_HEADER)?;
    Ok(())
}

pub fn write_sweep_rows<W: Write>(w: &mut csv::Writer<W>, est: &ErrorEstimate) -> Result<()> {
    for d in &est.detectors {
        w.write_record([
            est.k.to_string(),
            est.nt.to_string(),
            est.nr.to_string(),
            format!("{}", est.snr_db),
            d.detector.name().to_string(),
            format!("{:.8e}", d.p_err()),
            format!("{:.8e}", d.stderr()),
            format!("{:.4}", d.t_precompute.as_secs_f64() * 1e3),
            format!("{:.4}", d.t_per_trial_us()),
        ])?;
    }
    Ok(())
}

/// Runs every `(Nr, SNR)` point and writes one CSV row per detector.
pub fn run_sweep<W: Write>(config: &ExperimentConfig, out: W) -> Result<Vec<ErrorEstimate>> {
    config.validate()?;
    let alphabet = config.build_alphabet()?;
    let mut w = csv::Writer::from_writer(out);
    sweep_header(&mut w)?;
    let mut results = Vec::new();
    for &nr in &config.nr_values {
        for &snr in &config.snr_db {
            let est = pairwise_error_with(config, &alphabet, nr, snr)?;
            write_sweep_rows(&mut w, &est)?;
            w.flush()?;
            results.push(est);
        }
    }
    w.flush()?;
    Ok(results)
}
