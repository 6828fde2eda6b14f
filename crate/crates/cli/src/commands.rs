//! Subcommand implementations.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;

use braggfit::bayes::{
    fit_edge_gp, sample_zeta, strain_distribution, strain_histogram_report, GpFitOptions,
    ZetaReference,
};
use braggfit::gp::{HyperOptions, KernelKind};
use braggfit::harness::{
    error_histogram, ingest_spectrum, macro_pixel_average, metrics_table_csv,
    metrics_table_markdown, read_pixel_stack_csv, run_trial_study, write_pixel_stack_csv,
    write_records_csv, SpectrumFormat, StudyOptions,
};
use braggfit::lsq::{fit_santisteban, fit_tremsin, EdgeModelKind, FitWindows, Method};
use braggfit::noise::{
    bin_residuals, fit_exponential_baseline, fit_gaussian_bin, fit_variance_model,
    write_noise_model_json, write_noise_report_csv, NoiseModel,
};
use braggfit::synth::{
    sample_edge_params, simulate_spectrum, stream_rng, write_trial, GridSpec, TrialConfig,
    TrialManifest,
};
use braggfit::xcorr::{fit_xcorr_strain, SGConfig, XcorrOptions};

use crate::config::{pick, pick_opt, FileConfig};

// ---------------------------------------------------------------------------
// simulate

#[derive(Args)]
pub struct SimulateArgs {
    /// Output directory for per-trial CSV and manifest files.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    trials_per_group: Option<usize>,
    /// Multiplier on the base noise standard deviation.
    #[arg(long)]
    noise_scale: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stress-free edge location (angstrom).
    #[arg(long)]
    lambda_hkl: Option<f64>,
    #[arg(long)]
    window_half_width: Option<f64>,
    /// Samples across the wavelength window.
    #[arg(long)]
    points: Option<usize>,
    /// Half-range of the applied true strain (micro-strain).
    #[arg(long)]
    strain_half_range_micro: Option<f64>,
}

fn trial_config_from(
    groups: usize,
    trials_per_group: usize,
    noise_scale: f64,
    seed: u64,
    lambda_hkl: f64,
    half_width: f64,
    points: usize,
    strain_half_range_micro: f64,
) -> TrialConfig {
    let strain = strain_half_range_micro * 1e-6;
    TrialConfig {
        n_groups: groups,
        trials_per_group,
        noise_scale,
        seed,
        lambda_hkl0: lambda_hkl,
        grid: GridSpec {
            lambda_min: lambda_hkl - half_width,
            lambda_max: lambda_hkl + half_width,
            n: points,
        },
        strain_range: (-strain, strain),
        ..TrialConfig::default()
    }
}

pub fn simulate(args: SimulateArgs, file: &FileConfig) -> anyhow::Result<()> {
    let section = &file.simulate;
    let config = trial_config_from(
        pick(args.groups, section.groups, 10),
        pick(args.trials_per_group, section.trials_per_group, 100),
        pick(args.noise_scale, section.noise_scale, 1.0),
        pick(args.seed, section.seed, 1234),
        pick(args.lambda_hkl, section.lambda_hkl, 4.05),
        pick(args.window_half_width, section.window_half_width, 0.25),
        pick(args.points, section.points, 512),
        pick(
            args.strain_half_range_micro,
            section.strain_half_range_micro,
            3000.0,
        ),
    );
    config.validate()?;
    std::fs::create_dir_all(&args.out_dir)?;
    let grid = config.grid.build();
    for group in 0..config.n_groups {
        let mut group_rng = stream_rng(config.seed, &[group as u64, 0x5EED_0001]);
        let params = sample_edge_params(&mut group_rng, &config);
        let true_strain = config.true_strain(&params);
        for trial in 0..config.trials_per_group {
            let mut rng = stream_rng(config.seed, &[group as u64, trial as u64, 1]);
            let spectrum =
                simulate_spectrum(&params, &grid, &config.noise, config.noise_scale, &mut rng)?;
            let manifest = TrialManifest {
                group,
                trial,
                seed: config.seed,
                noise_scale: config.noise_scale,
                true_strain,
                params,
            };
            write_trial(&args.out_dir, &manifest, &spectrum)?;
        }
    }
    let config_json = std::fs::File::create(args.out_dir.join("study_config.json"))?;
    serde_json::to_writer_pretty(config_json, &config)?;
    println!(
        "wrote {} trials to {}",
        config.n_groups * config.trials_per_group,
        args.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// fit

#[derive(Args)]
pub struct FitArgs {
    /// Input spectrum file.
    #[arg(long)]
    input: PathBuf,
    /// Input layout: csv_tr or csv_counts.
    #[arg(long)]
    format: Option<String>,
    /// Estimator: santisteban, tremsin, xcorr, or gp.
    #[arg(long)]
    method: Option<String>,
    /// Edge-shape model for the staged fit: kropff or vogel.
    #[arg(long)]
    edge_model: Option<String>,
    /// Stress-free edge location (required for santisteban/tremsin/xcorr).
    #[arg(long)]
    lambda0: Option<f64>,
    /// Deterministic stress-free gradient-argmax reference for the GP method.
    #[arg(long)]
    zeta0: Option<f64>,
    /// Stress-free reference spectrum (xcorr; gp with paired sampling).
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Six comma-separated wavelengths: left lo,hi, edge lo,hi, right lo,hi.
    #[arg(long, value_delimiter = ',')]
    windows: Option<Vec<f64>>,
    /// Fit window lo,hi for the five-parameter method.
    #[arg(long, value_delimiter = ',')]
    tremsin_window: Option<Vec<f64>>,
    #[arg(long)]
    sg_window: Option<usize>,
    #[arg(long)]
    sg_order: Option<usize>,
    /// Noise-model intercept; with --noise-b, attaches per-point noise.
    #[arg(long)]
    noise_a: Option<f64>,
    /// Noise-model slope.
    #[arg(long)]
    noise_b: Option<f64>,
    /// Monte Carlo samples for the GP strain distribution.
    #[arg(long)]
    gp_samples: Option<usize>,
    /// Prediction-grid densification for the GP method.
    #[arg(long)]
    gp_density: Option<usize>,
    /// Comma-separated kernel candidates (se, matern32, matern52).
    #[arg(long)]
    kernels: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Optional CSV dump of the correlation curve (xcorr only).
    #[arg(long)]
    correlation_csv: Option<PathBuf>,
    /// Optional CSV dump of the strain histogram (gp only).
    #[arg(long)]
    histogram_csv: Option<PathBuf>,
}

fn parse_kernels(spec: &str) -> anyhow::Result<Vec<KernelKind>> {
    spec.split(',')
        .map(|s| s.trim().parse::<KernelKind>().map_err(Into::into))
        .collect()
}

fn windows_from(values: &[f64]) -> anyhow::Result<FitWindows> {
    if values.len() != 6 {
        bail!("--windows needs 6 values: left lo,hi, edge lo,hi, right lo,hi");
    }
    Ok(FitWindows {
        left: (values[0], values[1]),
        edge: (values[2], values[3]),
        right: (values[4], values[5]),
    })
}

pub fn fit(args: FitArgs, file: &FileConfig) -> anyhow::Result<()> {
    let section = &file.fit;
    let format: SpectrumFormat = pick(
        args.format.clone(),
        section.format.clone(),
        "csv_tr".to_string(),
    )
    .parse()?;
    let method: Method = pick_opt(args.method.clone(), section.method.clone())
        .context("--method is required")?
        .parse()?;
    let noise_a = pick_opt(args.noise_a, section.noise_a);
    let noise_b = pick_opt(args.noise_b, section.noise_b);
    let noise = match (noise_a, noise_b) {
        (Some(a), Some(b)) => Some(NoiseModel { a, b }),
        (None, None) => None,
        _ => bail!("--noise-a and --noise-b must be given together"),
    };
    let ingested = ingest_spectrum(&args.input, format, noise.as_ref())?;
    if ingested.dropped_rows > 0 {
        eprintln!("warning: dropped {} rows with zero open-beam counts", ingested.dropped_rows);
    }
    let spectrum = ingested.spectrum;
    let windows = match pick_opt(args.windows.clone(), section.windows.clone()) {
        Some(v) => windows_from(&v)?,
        None => FitWindows::default_for(&spectrum),
    };
    let lambda0 = pick_opt(args.lambda0, section.lambda0);
    let seed = pick(args.seed, section.seed, 0);

    let report = match method {
        Method::Santisteban => {
            let lambda0 = lambda0.context("santisteban needs --lambda0")?;
            let edge_model: EdgeModelKind = pick(
                args.edge_model.clone(),
                section.edge_model.clone(),
                "kropff".to_string(),
            )
            .parse()?;
            let fit = fit_santisteban(&spectrum, &windows, edge_model, lambda0)?;
            serde_json::json!({
                "method": method,
                "strain": fit.estimate,
                "fit": fit.result,
                "baselines": fit.baselines,
                "windows": windows,
            })
        }
        Method::Tremsin => {
            let lambda0 = lambda0.context("tremsin needs --lambda0")?;
            let window = match pick_opt(args.tremsin_window.clone(), section.tremsin_window.clone())
            {
                Some(v) if v.len() == 2 => (v[0], v[1]),
                Some(_) => bail!("--tremsin-window needs 2 values: lo,hi"),
                None => (lambda0 - 0.06, lambda0 + 0.06),
            };
            let fit = fit_tremsin(&spectrum, window, lambda0)?;
            serde_json::json!({
                "method": method,
                "strain": fit.estimate,
                "fit": fit.result,
                "window": window,
            })
        }
        Method::CrossCorrelation => {
            let lambda0 = lambda0.context("xcorr needs --lambda0")?;
            let reference = args.reference.as_ref().context("xcorr needs --reference")?;
            let reference = ingest_spectrum(reference, format, noise.as_ref())?.spectrum;
            let sg = SGConfig::new(
                pick(args.sg_window, section.sg_window, 25),
                pick(args.sg_order, section.sg_order, 3),
            )?;
            let options = XcorrOptions {
                sg,
                ..XcorrOptions::default()
            };
            let fit = fit_xcorr_strain(&spectrum, &reference, &options, lambda0)?;
            if let Some(path) = &args.correlation_csv {
                let out = std::fs::File::create(path)?;
                fit.correlation.write_csv(out)?;
            }
            serde_json::json!({
                "method": method,
                "strain": fit.estimate,
                "fit": fit.voigt,
                "sg": sg,
            })
        }
        Method::GaussianProcess => {
            let kernels = match pick_opt(args.kernels.clone(), section.kernels.clone()) {
                Some(s) => parse_kernels(&s)?,
                None => braggfit::gp::ALL_KERNEL_KINDS.to_vec(),
            };
            let options = GpFitOptions {
                kernel_candidates: kernels,
                hyper: HyperOptions {
                    seed,
                    ..HyperOptions::default()
                },
                prediction_density: pick(args.gp_density, section.gp_density, 4),
                edge_window: None,
            };
            let fit = fit_edge_gp(&spectrum, &windows, &options)?;
            let n_samples = pick(args.gp_samples, section.gp_samples, 1000);
            let mut rng = stream_rng(seed, &[0xFE_17]);
            let zeta = sample_zeta(&fit.posterior, n_samples, &mut rng)?;
            let reference = match (&args.reference, pick_opt(args.zeta0, section.zeta0)) {
                (Some(path), _) => {
                    let ref_spectrum = ingest_spectrum(path, format, noise.as_ref())?.spectrum;
                    let ref_fit = fit_edge_gp(&ref_spectrum, &windows, &options)?;
                    let mut ref_rng = stream_rng(seed, &[0xFE_18]);
                    ZetaReference::Sampled(sample_zeta(&ref_fit.posterior, n_samples, &mut ref_rng)?)
                }
                (None, Some(z0)) => ZetaReference::Noiseless(z0),
                (None, None) => bail!("gp needs --reference or --zeta0"),
            };
            let estimate = strain_distribution(&zeta, &reference)?;
            if let Some(path) = &args.histogram_csv {
                let report = strain_histogram_report(&estimate, 61)?;
                let out = std::fs::File::create(path)?;
                report.write_csv(out)?;
            }
            let strain_json = serde_json::json!({
                "strain_mean": estimate.strain_mean,
                "strain_std": estimate.strain_std,
                "n_samples": n_samples,
                "bimodal": estimate.bimodal,
                "method": method,
            });
            serde_json::json!({
                "method": method,
                "strain": strain_json,
                "kernel": fit.kernel,
                "objective": fit.objective,
                "noise_scale": fit.noise_scale,
                "baselines": fit.baselines,
            })
        }
    };

    let text = serde_json::to_string_pretty(&report)?;
    match &args.output {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// trial-study

#[derive(Args)]
pub struct TrialStudyArgs {
    /// Output directory for metrics, records, and histograms.
    #[arg(long)]
    out_dir: PathBuf,
    /// Comma-separated methods (santisteban, tremsin, xcorr, gp).
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    trials_per_group: Option<usize>,
    #[arg(long)]
    noise_scale: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = default pool).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    histogram_bins: Option<usize>,
    #[arg(long)]
    sg_window: Option<usize>,
    #[arg(long)]
    sg_order: Option<usize>,
    #[arg(long)]
    gp_samples: Option<usize>,
    #[arg(long)]
    gp_density: Option<usize>,
    #[arg(long)]
    kernels: Option<String>,
}

pub fn trial_study(args: TrialStudyArgs, file: &FileConfig) -> anyhow::Result<()> {
    let section = &file.trial_study;
    let config = TrialConfig {
        n_groups: pick(args.groups, section.groups, 10),
        trials_per_group: pick(args.trials_per_group, section.trials_per_group, 100),
        noise_scale: pick(args.noise_scale, section.noise_scale, 1.0),
        seed: pick(args.seed, section.seed, 1234),
        ..TrialConfig::default()
    };
    let mut options = StudyOptions {
        workers: pick(args.workers, section.workers, 0),
        ..StudyOptions::default()
    };
    if let Some(spec) = pick_opt(args.methods.clone(), section.methods.clone()) {
        options.methods = spec
            .split(',')
            .map(|s| s.trim().parse::<Method>())
            .collect::<Result<_, _>>()?;
    }
    let sg_window = pick_opt(args.sg_window, section.sg_window);
    let sg_order = pick_opt(args.sg_order, section.sg_order);
    if sg_window.is_some() || sg_order.is_some() {
        options.sg = Some(SGConfig::new(
            sg_window.context("--sg-window and --sg-order go together")?,
            sg_order.context("--sg-window and --sg-order go together")?,
        )?);
    }
    if let Some(n) = pick_opt(args.gp_samples, section.gp_samples) {
        options.gp.n_samples = n;
    }
    if let Some(d) = pick_opt(args.gp_density, section.gp_density) {
        options.gp.prediction_density = d;
    }
    if let Some(spec) = pick_opt(args.kernels.clone(), section.kernels.clone()) {
        options.gp.kernel_candidates = parse_kernels(&spec)?;
    }

    let out = run_trial_study(&config, &options)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let markdown = metrics_table_markdown(&out.metrics);
    std::fs::write(args.out_dir.join("metrics.md"), &markdown)?;
    std::fs::write(args.out_dir.join("metrics.csv"), metrics_table_csv(&out.metrics))?;
    let records = std::fs::File::create(args.out_dir.join("records.csv"))?;
    write_records_csv(records, &out.records)?;
    let bins = pick(args.histogram_bins, section.histogram_bins, 61);
    for m in &options.methods {
        if let Some(hist) = error_histogram(&out.records, *m, bins) {
            let path = args.out_dir.join(format!("hist_{m}.csv"));
            hist.write_csv(std::fs::File::create(path)?)?;
        }
    }
    let summary = std::fs::File::create(args.out_dir.join("summary.json"))?;
    serde_json::to_writer_pretty(summary, &out.metrics)?;
    print!("{markdown}");
    Ok(())
}

// ---------------------------------------------------------------------------
// noise-analysis

#[derive(Args)]
pub struct NoiseAnalysisArgs {
    /// Input spectra (csv_tr files).
    #[arg(long, required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    /// Number of transmission bins.
    #[arg(long)]
    bins: Option<usize>,
    /// Fraction of the window treated as left baseline.
    #[arg(long)]
    left_fraction: Option<f64>,
    /// Fraction of the window treated as right baseline.
    #[arg(long)]
    right_fraction: Option<f64>,
    /// Output JSON for the fitted noise model.
    #[arg(long)]
    out_json: PathBuf,
    /// Optional per-bin CSV report.
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

pub fn noise_analysis(args: NoiseAnalysisArgs, file: &FileConfig) -> anyhow::Result<()> {
    let section = &file.noise_analysis;
    let format: SpectrumFormat = pick(
        args.format.clone(),
        section.format.clone(),
        "csv_tr".to_string(),
    )
    .parse()?;
    let nbins = pick(args.bins, section.bins, 8);
    let left_fraction = pick(args.left_fraction, section.left_fraction, 0.25);
    let right_fraction = pick(args.right_fraction, section.right_fraction, 0.25);
    if !(0.0..0.5).contains(&left_fraction) || !(0.0..0.5).contains(&right_fraction) {
        bail!("baseline fractions must lie in (0, 0.5)");
    }

    // Residuals against exponential baselines fitted away from the edge.
    let mut residuals: Vec<(f64, f64)> = Vec::new();
    for path in &args.inputs {
        let spectrum = ingest_spectrum(path, format, None)?.spectrum;
        let w = spectrum.wavelengths();
        let (lo, hi) = (w[0], w[w.len() - 1]);
        let span = hi - lo;
        let right_window = (hi - right_fraction * span, hi);
        let left_window = (lo, lo + left_fraction * span);
        let right = fit_exponential_baseline(&spectrum, right_window, None)
            .with_context(|| format!("right baseline of {}", path.display()))?;
        let left =
            fit_exponential_baseline(&spectrum, left_window, Some((right.a, right.b)))
                .with_context(|| format!("left baseline of {}", path.display()))?;
        for (&lambda, &y) in w.iter().zip(spectrum.values()) {
            let model = if lambda >= right_window.0 {
                Some((-(right.a + right.b * lambda)).exp())
            } else if lambda <= left_window.1 {
                Some((-(right.a + left.a + (right.b + left.b) * lambda)).exp())
            } else {
                None
            };
            if let Some(tr) = model {
                residuals.push((tr, y - tr));
            }
        }
    }
    if residuals.is_empty() {
        bail!("no baseline residuals collected");
    }
    let tr_min = residuals.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let tr_max = residuals
        .iter()
        .map(|r| r.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let edges: Vec<f64> = (0..=nbins)
        .map(|i| tr_min + (tr_max - tr_min) * i as f64 / nbins as f64)
        .collect();
    let mut binned = bin_residuals(&residuals, &edges)?;
    let mut points = Vec::new();
    for bin in binned.bins.iter_mut() {
        if let Ok(fit) = fit_gaussian_bin(bin) {
            bin.fitted_mean = Some(fit.mean);
            bin.fitted_std = Some(fit.std);
            if !fit.degenerate {
                points.push((0.5 * (bin.tr_low + bin.tr_high), fit.std));
            }
        }
    }
    let model = fit_variance_model(&points)?;
    write_noise_model_json(&args.out_json, &model)?;
    if let Some(path) = &args.out_csv {
        let out = std::fs::File::create(path)?;
        write_noise_report_csv(out, &binned.bins)?;
    }
    println!("{}", serde_json::to_string_pretty(&model)?);
    Ok(())
}

// ---------------------------------------------------------------------------
// macro-bin

#[derive(Args)]
pub struct MacroBinArgs {
    /// Input pixel-stack CSV (x,y,lambda,transmission).
    #[arg(long)]
    input: PathBuf,
    /// Macro-pixel block size.
    #[arg(long)]
    p: usize,
    /// Output pixel-stack CSV.
    #[arg(long)]
    output: PathBuf,
}

pub fn macro_bin(args: MacroBinArgs) -> anyhow::Result<()> {
    let file = std::fs::File::open(&args.input)
        .with_context(|| format!("opening {}", args.input.display()))?;
    let stack = read_pixel_stack_csv(std::io::BufReader::new(file))?;
    let out = macro_pixel_average(&stack, args.p)?;
    let writer = std::fs::File::create(&args.output)?;
    write_pixel_stack_csv(writer, &out)?;
    println!(
        "binned {}x{} -> {}x{} (p = {})",
        stack.width, stack.height, out.width, out.height, args.p
    );
    Ok(())
}
