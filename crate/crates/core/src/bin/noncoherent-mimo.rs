use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use noncoherent_mimo::channel::assemble_fading_covariance;
use noncoherent_mimo::detector_spectral::{precompute_spectral, Window};
use noncoherent_mimo::divergence::{divergence_report, write_divergence_csv, DEFAULT_QUAD_POINTS};
use noncoherent_mimo::harness::{
    benchmark_complexity, db_to_linear, pairwise_error_with, snr_to_noise_power, sweep_header, write_benchmark_csv,
    write_sweep_rows, AlphabetSpec, DetectorChoice, ExperimentConfig, ProfileSpec,
};
use noncoherent_mimo::{Error, Result};

/// Monte Carlo error rates and complexity benchmarks for noncoherent
/// massive-MIMO ML detection (direct vs spectral).
#[derive(Debug, Parser)]
#[command(name = "noncoherent-mimo", version)]
struct Cli {
    /// Alphabet: orthogonal-pair, grassmannian, or a path to an alphabet file.
    #[arg(long, default_value = "orthogonal-pair")]
    preset: String,

    /// Fading profile: triangular, or a path to a profile table.
    #[arg(long, default_value = "triangular")]
    profile: String,

    /// Block length K.
    #[arg(long = "K", default_value_t = 4)]
    k: usize,

    /// Transmit streams nt.
    #[arg(long, default_value_t = 1)]
    nt: usize,

    /// Alphabet size M.
    #[arg(long = "M", default_value_t = 2)]
    m: usize,

    /// Receive-array sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "128")]
    nr: Vec<usize>,

    /// SNR values in dB, comma separated.
    #[arg(long = "snr-db", value_delimiter = ',', allow_hyphen_values = true, default_value = "-10")]
    snr_db: Vec<f64>,

    #[arg(long, default_value_t = 100_000)]
    trials: u64,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Seed of the random transmitter basis Ut (defaults to --seed).
    #[arg(long = "ut-seed")]
    ut_seed: Option<u64>,

    /// direct, spectral or both.
    #[arg(long, default_value = "both")]
    detector: String,

    /// Lag window of the spectral detector: rect or bt.
    #[arg(long, default_value = "bt")]
    window: String,

    /// Output CSV path; `-` writes to stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,

    /// Benchmark precompute and detection time over the Nr list instead of sweeping.
    #[arg(long)]
    bench: bool,

    /// Minimum timing repeats per benchmark measurement.
    #[arg(long, default_value_t = 5)]
    repeats: usize,

    /// Write zeros in the timing columns so reruns are byte-identical.
    #[arg(long = "no-timing")]
    no_timing: bool,

    /// Also write pairwise divergence reports for every (Nr, SNR) point to this CSV.
    #[arg(long)]
    divergence: Option<PathBuf>,

    /// Quadrature nodes for the spectral divergences.
    #[arg(long = "quad-points", default_value_t = DEFAULT_QUAD_POINTS)]
    quad_points: usize,

    /// Dump every spectral-detector CSM to this text file.
    #[arg(long = "dump-csm")]
    dump_csm: Option<PathBuf>,
}

impl Cli {
    fn config(&self) -> Result<ExperimentConfig> {
        let config = ExperimentConfig {
            k: self.k,
            nt: self.nt,
            m: self.m,
            nr_values: self.nr.clone(),
            snr_db: self.snr_db.clone(),
            trials: self.trials,
            seed: self.seed,
            detector: self.detector.parse::<DetectorChoice>()?,
            alphabet: self.preset.parse::<AlphabetSpec>()?,
            profile: self.profile.parse::<ProfileSpec>()?,
            window: self.window.parse::<Window>()?,
            ut_seed: self.ut_seed,
            record_timing: !self.no_timing,
        };
        config.validate()?;
        Ok(config)
    }
}

fn open_output(path: &PathBuf) -> Result<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        Ok(Box::new(BufWriter::new(io::stdout().lock())))
    } else {
        Ok(Box::new(BufWriter::new(File::create(path)?)))
    }
}

fn run(cli: &Cli) -> Result<()> {
    let config = cli.config()?;
    eprintln!("seed={} ut_seed={}", config.seed, config.ut_seed());
    if cli.bench {
        let rows = benchmark_complexity(&config, cli.repeats)?;
        return write_benchmark_csv(&rows, open_output(&cli.out)?);
    }

    let alphabet = config.build_alphabet()?;
    let mut sweep = csv::Writer::from_writer(open_output(&cli.out)?);
    sweep_header(&mut sweep)?;
    let mut reports = Vec::new();
    let mut dump = cli.dump_csm.as_ref().map(File::create).transpose()?.map(BufWriter::new);

    for &nr in &config.nr_values {
        for &snr in &config.snr_db {
            let est = pairwise_error_with(&config, &alphabet, nr, snr)?;
            for w in &est.warnings {
                eprintln!("warning: Nr={nr}, SNR={snr} dB: {w}");
            }
            write_sweep_rows(&mut sweep, &est)?;
            sweep.flush()?;

            if cli.divergence.is_some() || dump.is_some() {
                let profile = config.build_profile(nr)?;
                let fading = assemble_fading_covariance(&profile, nr)?;
                let noise = snr_to_noise_power(db_to_linear(snr), &alphabet, &fading)?;
                if cli.divergence.is_some() {
                    for i in 0..alphabet.len() {
                        for j in (0..alphabet.len()).filter(|&j| j != i) {
                            reports.push(divergence_report(&alphabet, i, j, &profile, &fading, noise, cli.quad_points)?);
                        }
                    }
                }
                if let Some(out) = dump.as_mut() {
                    let state = precompute_spectral(&alphabet, &fading, noise, nr, config.window)?;
                    writeln!(out, "# Nr={nr} snr_db={snr}")?;
                    state.write_csm_dump(&mut *out)?;
                }
            }
        }
    }
    if let Some(path) = &cli.divergence {
        write_divergence_csv(&reports, File::create(path)?)?;
    }
    if let Some(mut out) = dump {
        out.flush()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
