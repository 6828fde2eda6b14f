//! Simulation-study harness: seeded trial batches, per-method strain
//! estimates, Table-style error metrics, and export helpers.

pub mod ingest;
pub mod pixel;

pub use ingest::{ingest_spectrum, Ingested, SpectrumFormat};
pub use pixel::{macro_pixel_average, read_pixel_stack_csv, write_pixel_stack_csv, PixelStack};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{
    fit_edge_gp, sample_zeta, strain_distribution, GpFitOptions, ZetaReference,
};
use crate::error::{Error, Result};
use crate::gp::{gp_mean_gradient, GpEdgeProblem, HyperOptions, KernelKind};
use crate::lsq::{fit_santisteban, fit_tremsin, EdgeModelKind, FitWindows, Method};
use crate::spectrum::{EdgeParams, TransmissionSpectrum};
use crate::stats;
use crate::synth::{sample_edge_params, simulate_spectrum, stream_rng, TrialConfig};
use crate::xcorr::{fit_xcorr_strain, sg_config_for_noise_scale, SGConfig, XcorrOptions};

const TAG_GROUP_PARAMS: u64 = 0x5EED_0001;
const TAG_GROUP_REF_NOISE: u64 = 0x5EED_0002;
const TAG_TRIAL_NOISE: u64 = 1;
const TAG_TRIAL_HYPER: u64 = 2;
const TAG_TRIAL_SAMPLES: u64 = 3;
const TAG_TRIAL_REF_SAMPLES: u64 = 4;

/// Stress-free reference handling for the GP method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zeta0Mode {
    /// Deterministic reference from the noiseless true profile (simulation
    /// default).
    NoiselessProfile,
    /// Fit a noisy stress-free spectrum and draw paired reference samples.
    SampledFromNoisy,
}

/// GP configuration for trial studies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpStudyOptions {
    pub kernel_candidates: Vec<KernelKind>,
    pub n_starts: usize,
    pub prediction_density: usize,
    /// Prediction window half-width around the stress-free edge location;
    /// `None` uses the default edge window (middle half of the spectrum).
    pub edge_half_width: Option<f64>,
    pub n_samples: usize,
    pub zeta0: Zeta0Mode,
    /// Noise standard deviation substituted when a simulated spectrum is
    /// noiseless (weighted fits need a finite noise level).
    pub noise_floor: f64,
    pub optimize_noise_scale: bool,
}

impl Default for GpStudyOptions {
    fn default() -> Self {
        Self {
            kernel_candidates: vec![KernelKind::SquaredExponential],
            n_starts: 1,
            prediction_density: 4,
            edge_half_width: None,
            n_samples: 1000,
            zeta0: Zeta0Mode::NoiselessProfile,
            noise_floor: 1e-6,
            optimize_noise_scale: false,
        }
    }
}

/// Options for a trial study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyOptions {
    pub methods: Vec<Method>,
    /// Worker threads; 0 uses the global thread pool.
    pub workers: usize,
    /// Savitzky-Golay configuration; `None` selects by noise scale.
    pub sg: Option<SGConfig>,
    /// Half-width of the five-parameter fit window around the stress-free
    /// edge location.
    pub tremsin_half_width: f64,
    pub gp: GpStudyOptions,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            methods: vec![
                Method::Santisteban,
                Method::Tremsin,
                Method::CrossCorrelation,
                Method::GaussianProcess,
            ],
            workers: 0,
            sg: None,
            tremsin_half_width: 0.08,
            gp: GpStudyOptions::default(),
        }
    }
}

impl StudyOptions {
    /// Configuration for noiseless round-trip checks: a dense, narrow
    /// prediction grid keeps the argmax quantization below the round-trip
    /// tolerance.
    pub fn noiseless_roundtrip() -> Self {
        Self {
            gp: GpStudyOptions {
                prediction_density: 16,
                edge_half_width: Some(0.07),
                n_samples: 100,
                ..GpStudyOptions::default()
            },
            ..Self::default()
        }
    }
}

/// One method applied to one simulated trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub group: usize,
    pub trial: usize,
    pub method: Method,
    pub true_strain_micro: f64,
    pub estimate_micro: f64,
    pub error_micro: f64,
    pub predicted_std_micro: f64,
    pub failed: bool,
    pub suspicious: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Error metrics over the successful trials of one method (micro-strain).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub method: Method,
    pub error_mean: f64,
    pub mean_magnitude: f64,
    pub maximum: f64,
    pub error_std: f64,
    pub mean_predicted_std: f64,
    pub n_trials: usize,
    pub n_failures: usize,
    pub n_suspicious: usize,
}

/// Study output: per-method metrics plus every per-trial record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyOutput {
    pub metrics: Vec<TrialMetrics>,
    pub records: Vec<TrialRecord>,
}

struct GroupContext {
    params: EdgeParams,
    true_strain: f64,
    reference: TransmissionSpectrum,
    reference_posterior: Option<crate::gp::GpEdgePosterior>,
}

fn gp_fit_options(config: &TrialConfig, options: &StudyOptions, hyper_seed: u64) -> GpFitOptions {
    GpFitOptions {
        kernel_candidates: options.gp.kernel_candidates.clone(),
        hyper: HyperOptions {
            n_starts: options.gp.n_starts,
            seed: hyper_seed,
            optimize_noise_scale: options.gp.optimize_noise_scale,
            gradient_tol: 1e-4,
            ..HyperOptions::default()
        },
        prediction_density: options.gp.prediction_density,
        edge_window: options
            .gp
            .edge_half_width
            .map(|hw| (config.lambda_hkl0 - hw, config.lambda_hkl0 + hw)),
    }
}

fn with_noise_floor(spectrum: &TransmissionSpectrum, floor: f64) -> Result<TransmissionSpectrum> {
    match spectrum.noise_std() {
        Some(_) => Ok(spectrum.clone()),
        None => TransmissionSpectrum::new(
            spectrum.wavelengths().to_vec(),
            spectrum.values().to_vec(),
            Some(vec![floor; spectrum.len()]),
        ),
    }
}

fn build_group_context(
    config: &TrialConfig,
    options: &StudyOptions,
    windows: &FitWindows,
    grid_values: &[f64],
    group: usize,
) -> Result<GroupContext> {
    let mut group_rng = stream_rng(config.seed, &[group as u64, TAG_GROUP_PARAMS]);
    let params = sample_edge_params(&mut group_rng, config);
    let true_strain = config.true_strain(&params);
    let free = config.stress_free_params(&params);
    let mut zero_rng = stream_rng(config.seed, &[group as u64, TAG_GROUP_REF_NOISE]);
    let reference = simulate_spectrum(&free, grid_values, &config.noise, 0.0, &mut zero_rng)?;

    let reference_posterior = if options.methods.contains(&Method::GaussianProcess)
        && options.gp.zeta0 == Zeta0Mode::SampledFromNoisy
    {
        let mut ref_rng = stream_rng(config.seed, &[group as u64, TAG_GROUP_REF_NOISE, 1]);
        let noisy_ref = simulate_spectrum(
            &free,
            grid_values,
            &config.noise,
            config.noise_scale,
            &mut ref_rng,
        )?;
        let noisy_ref = with_noise_floor(&noisy_ref, options.gp.noise_floor)?;
        let hyper_seed = stream_rng(config.seed, &[group as u64, TAG_TRIAL_HYPER])
            .random::<u64>();
        let fit = fit_edge_gp(&noisy_ref, windows, &gp_fit_options(config, options, hyper_seed))?;
        Some(fit.posterior)
    } else {
        None
    };

    Ok(GroupContext {
        params,
        true_strain,
        reference,
        reference_posterior,
    })
}

use rand::Rng;

fn apply_method(
    method: Method,
    config: &TrialConfig,
    options: &StudyOptions,
    windows: &FitWindows,
    ctx: &GroupContext,
    spectrum: &TransmissionSpectrum,
    group: usize,
    trial: usize,
) -> Result<(f64, f64, bool, bool)> {
    let lambda0 = config.lambda_hkl0;
    match method {
        Method::Santisteban => {
            let fit = fit_santisteban(spectrum, windows, EdgeModelKind::Kropff, lambda0)?;
            Ok((
                fit.estimate.strain_mean,
                fit.estimate.strain_std,
                fit.result.suspicious,
                false,
            ))
        }
        Method::Tremsin => {
            let hw = options.tremsin_half_width;
            let fit = fit_tremsin(spectrum, (lambda0 - hw, lambda0 + hw), lambda0)?;
            Ok((
                fit.estimate.strain_mean,
                fit.estimate.strain_std,
                fit.result.suspicious,
                false,
            ))
        }
        Method::CrossCorrelation => {
            let sg = options
                .sg
                .unwrap_or_else(|| sg_config_for_noise_scale(config.noise_scale));
            let xopts = XcorrOptions {
                sg,
                ..XcorrOptions::default()
            };
            let fit = fit_xcorr_strain(spectrum, &ctx.reference, &xopts, lambda0)?;
            Ok((
                fit.estimate.strain_mean,
                fit.estimate.strain_std,
                fit.voigt.suspicious,
                false,
            ))
        }
        Method::GaussianProcess => {
            let spectrum_gp = with_noise_floor(spectrum, options.gp.noise_floor)?;
            let hyper_seed = stream_rng(
                config.seed,
                &[group as u64, trial as u64, TAG_TRIAL_HYPER],
            )
            .random::<u64>();
            let fit = fit_edge_gp(
                &spectrum_gp,
                windows,
                &gp_fit_options(config, options, hyper_seed),
            )?;
            let mut sample_rng = stream_rng(
                config.seed,
                &[group as u64, trial as u64, TAG_TRIAL_SAMPLES],
            );
            let zeta = sample_zeta(&fit.posterior, options.gp.n_samples, &mut sample_rng)?;
            let reference = match (&options.gp.zeta0, &ctx.reference_posterior) {
                (Zeta0Mode::SampledFromNoisy, Some(posterior)) => {
                    let mut ref_rng = stream_rng(
                        config.seed,
                        &[group as u64, trial as u64, TAG_TRIAL_REF_SAMPLES],
                    );
                    ZetaReference::Sampled(sample_zeta(
                        posterior,
                        options.gp.n_samples,
                        &mut ref_rng,
                    )?)
                }
                _ => {
                    // Push the noiseless stress-free profile through the
                    // trial's own smoother (same baselines, kernel, and
                    // noise levels): the kernel-induced shift of the
                    // gradient maximizer then cancels in the strain ratio.
                    let y0_bar: Vec<f64> = ctx
                        .reference
                        .wavelengths()
                        .iter()
                        .zip(ctx.reference.values())
                        .map(|(&l, &v)| v - fit.baselines.gamma1(l))
                        .collect();
                    let ref_problem = GpEdgeProblem::new(
                        fit.problem.lambdas.clone(),
                        y0_bar,
                        fit.problem.map_a.clone(),
                        fit.problem.noise_std.clone(),
                        fit.kernel,
                    )?;
                    let mean_g0 = gp_mean_gradient(&ref_problem, &fit.grid)?;
                    let mut best = 0usize;
                    for i in 1..mean_g0.len() {
                        if mean_g0[i] > mean_g0[best] {
                            best = i;
                        }
                    }
                    ZetaReference::Noiseless(fit.grid[best])
                }
            };
            let estimate = strain_distribution(&zeta, &reference)?;
            Ok((
                estimate.strain_mean,
                estimate.strain_std,
                false,
                estimate.bimodal,
            ))
        }
    }
}

fn run_single_trial(
    config: &TrialConfig,
    options: &StudyOptions,
    windows: &FitWindows,
    grid_values: &[f64],
    ctx: &GroupContext,
    group: usize,
    trial: usize,
) -> Vec<TrialRecord> {
    let mut noise_rng = stream_rng(
        config.seed,
        &[group as u64, trial as u64, TAG_TRIAL_NOISE],
    );
    let spectrum = match simulate_spectrum(
        &ctx.params,
        grid_values,
        &config.noise,
        config.noise_scale,
        &mut noise_rng,
    ) {
        Ok(s) => s,
        Err(e) => {
            return options
                .methods
                .iter()
                .map(|&method| TrialRecord {
                    group,
                    trial,
                    method,
                    true_strain_micro: ctx.true_strain * 1e6,
                    estimate_micro: f64::NAN,
                    error_micro: f64::NAN,
                    predicted_std_micro: f64::NAN,
                    failed: true,
                    suspicious: false,
                    message: Some(format!("simulation failed: {e}")),
                })
                .collect();
        }
    };

    options
        .methods
        .iter()
        .map(|&method| {
            match apply_method(
                method, config, options, windows, ctx, &spectrum, group, trial,
            ) {
                Ok((strain, predicted_std, suspicious, _bimodal)) => {
                    let est = strain * 1e6;
                    let pred = predicted_std * 1e6;
                    let ok = est.is_finite() && pred.is_finite();
                    TrialRecord {
                        group,
                        trial,
                        method,
                        true_strain_micro: ctx.true_strain * 1e6,
                        estimate_micro: est,
                        error_micro: est - ctx.true_strain * 1e6,
                        predicted_std_micro: pred,
                        failed: !ok,
                        suspicious,
                        message: (!ok).then(|| "non-finite estimate or covariance".to_string()),
                    }
                }
                Err(e) => TrialRecord {
                    group,
                    trial,
                    method,
                    true_strain_micro: ctx.true_strain * 1e6,
                    estimate_micro: f64::NAN,
                    error_micro: f64::NAN,
                    predicted_std_micro: f64::NAN,
                    failed: true,
                    suspicious: false,
                    message: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Run a full simulated study: per group, edge parameters are drawn once and
/// noise is redrawn per trial; every enabled method produces an estimate or
/// a failure record. Per-trial RNG streams are keyed by (seed, group, trial)
/// so results are identical for any worker count.
pub fn run_trial_study(config: &TrialConfig, options: &StudyOptions) -> Result<StudyOutput> {
    config.validate()?;
    if options.methods.is_empty() {
        return Err(Error::invalid("no methods enabled"));
    }
    let grid_values = config.grid.build();
    let windows = FitWindows::default_for_range(config.grid.lambda_min, config.grid.lambda_max);

    let contexts: Vec<GroupContext> = (0..config.n_groups)
        .map(|group| build_group_context(config, options, &windows, &grid_values, group))
        .collect::<Result<_>>()?;

    let tasks: Vec<(usize, usize)> = (0..config.n_groups)
        .flat_map(|g| (0..config.trials_per_group).map(move |t| (g, t)))
        .collect();

    let run = || -> Vec<Vec<TrialRecord>> {
        tasks
            .par_iter()
            .map(|&(group, trial)| {
                run_single_trial(
                    config,
                    options,
                    &windows,
                    &grid_values,
                    &contexts[group],
                    group,
                    trial,
                )
            })
            .collect()
    };
    let nested = if options.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(options.workers)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(run)
    } else {
        run()
    };
    let records: Vec<TrialRecord> = nested.into_iter().flatten().collect();
    let metrics = compute_metrics(&options.methods, &records);
    Ok(StudyOutput { metrics, records })
}

/// Aggregate per-method metrics over the successful records.
pub fn compute_metrics(methods: &[Method], records: &[TrialRecord]) -> Vec<TrialMetrics> {
    methods
        .iter()
        .map(|&method| {
            let all: Vec<&TrialRecord> = records.iter().filter(|r| r.method == method).collect();
            let ok: Vec<&TrialRecord> = all.iter().filter(|r| !r.failed).cloned().collect();
            let errors: Vec<f64> = ok.iter().map(|r| r.error_micro).collect();
            let predicted: Vec<f64> = ok.iter().map(|r| r.predicted_std_micro).collect();
            TrialMetrics {
                method,
                error_mean: stats::mean(&errors),
                mean_magnitude: stats::mean(
                    &errors.iter().map(|e| e.abs()).collect::<Vec<_>>(),
                ),
                maximum: errors.iter().fold(0.0f64, |m, e| m.max(e.abs())),
                error_std: stats::sample_std(&errors),
                mean_predicted_std: stats::mean(&predicted),
                n_trials: all.len(),
                n_failures: all.len() - ok.len(),
                n_suspicious: ok.iter().filter(|r| r.suspicious).count(),
            }
        })
        .collect()
}

/// Markdown table mirroring the study metrics, one method per column.
pub fn metrics_table_markdown(metrics: &[TrialMetrics]) -> String {
    let mut out = String::from("| Metric (micro-strain) |");
    for m in metrics {
        out.push_str(&format!(" {} |", m.method));
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in metrics {
        out.push_str("---|");
    }
    out.push('\n');
    let rows: [(&str, fn(&TrialMetrics) -> String); 7] = [
        ("Error mean", |m| format!("{:.2}", m.error_mean)),
        ("Mean magnitude", |m| format!("{:.2}", m.mean_magnitude)),
        ("Maximum", |m| format!("{:.2}", m.maximum)),
        ("Standard deviation", |m| format!("{:.2}", m.error_std)),
        ("Mean predicted std", |m| format!("{:.2}", m.mean_predicted_std)),
        ("Trials", |m| format!("{}", m.n_trials)),
        ("Failures", |m| format!("{}", m.n_failures)),
    ];
    for (name, fmt) in rows {
        out.push_str(&format!("| {name} |"));
        for m in metrics {
            out.push_str(&format!(" {} |", fmt(m)));
        }
        out.push('\n');
    }
    out
}

/// CSV rendering of the metrics table.
pub fn metrics_table_csv(metrics: &[TrialMetrics]) -> String {
    let mut out = String::from(
        "method,error_mean,mean_magnitude,maximum,error_std,mean_predicted_std,n_trials,n_failures,n_suspicious\n",
    );
    for m in metrics {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{}\n",
            m.method,
            m.error_mean,
            m.mean_magnitude,
            m.maximum,
            m.error_std,
            m.mean_predicted_std,
            m.n_trials,
            m.n_failures,
            m.n_suspicious
        ));
    }
    out
}

/// Per-trial records as CSV.
pub fn write_records_csv<W: std::io::Write>(mut out: W, records: &[TrialRecord]) -> Result<()> {
    writeln!(
        out,
        "group,trial,method,true_strain_micro,estimate_micro,error_micro,predicted_std_micro,failed,suspicious"
    )?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.group,
            r.trial,
            r.method,
            r.true_strain_micro,
            r.estimate_micro,
            r.error_micro,
            r.predicted_std_micro,
            r.failed,
            r.suspicious
        )?;
    }
    Ok(())
}

/// Histogram of one method's errors with a Gaussian overlay and the mean
/// predicted two-sigma interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorHistogram {
    pub method: Method,
    pub bin_centers: Vec<f64>,
    pub counts: Vec<usize>,
    pub gaussian_overlay: Vec<f64>,
    /// `(-2, +2)` times the mean predicted standard deviation.
    pub predicted_interval: (f64, f64),
}

impl ErrorHistogram {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "bin_center,count,gaussian_overlay")?;
        for i in 0..self.bin_centers.len() {
            writeln!(
                out,
                "{},{},{}",
                self.bin_centers[i], self.counts[i], self.gaussian_overlay[i]
            )?;
        }
        Ok(())
    }
}

/// Build the error histogram for one method from the study records.
pub fn error_histogram(
    records: &[TrialRecord],
    method: Method,
    nbins: usize,
) -> Option<ErrorHistogram> {
    let errors: Vec<f64> = records
        .iter()
        .filter(|r| r.method == method && !r.failed)
        .map(|r| r.error_micro)
        .collect();
    if errors.is_empty() || nbins == 0 {
        return None;
    }
    let mean = stats::mean(&errors);
    let std = stats::sample_std(&errors);
    let half = (4.0 * std).max(1e-9);
    let (bin_centers, counts) = stats::histogram(&errors, mean - half, mean + half, nbins);
    let bin_width = 2.0 * half / nbins as f64;
    let n = errors.len() as f64;
    let gaussian_overlay: Vec<f64> = bin_centers
        .iter()
        .map(|&c| {
            if std > 0.0 {
                n * bin_width * stats::normal_pdf((c - mean) / std) / std
            } else {
                0.0
            }
        })
        .collect();
    let predicted: Vec<f64> = records
        .iter()
        .filter(|r| r.method == method && !r.failed)
        .map(|r| r.predicted_std_micro)
        .collect();
    let mp = stats::mean(&predicted);
    Some(ErrorHistogram {
        method,
        bin_centers,
        counts,
        gaussian_overlay,
        predicted_interval: (-2.0 * mp, 2.0 * mp),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::GridSpec;

    fn tiny_config(noise_scale: f64, seed: u64) -> TrialConfig {
        TrialConfig {
            n_groups: 2,
            trials_per_group: 2,
            noise_scale,
            seed,
            ..TrialConfig::default()
        }
    }

    #[test]
    fn noiseless_study_round_trips_all_methods() {
        let config = TrialConfig {
            n_groups: 1,
            trials_per_group: 3,
            noise_scale: 0.0,
            seed: 5,
            ..TrialConfig::default()
        };
        let options = StudyOptions::noiseless_roundtrip();
        let out = run_trial_study(&config, &options).unwrap();
        for m in &out.metrics {
            assert_eq!(m.n_failures, 0, "{} failed {:?}", m.method, out.records);
            assert!(
                m.error_mean.abs() < 5.0,
                "{} mean {}",
                m.method,
                m.error_mean
            );
            assert!(m.maximum < 20.0, "{} max {}", m.method, m.maximum);
        }
    }

    #[test]
    fn study_is_deterministic_across_worker_counts() {
        let config = tiny_config(1.0, 11);
        let base = StudyOptions {
            methods: vec![Method::Santisteban, Method::CrossCorrelation, Method::GaussianProcess],
            ..StudyOptions::default()
        };
        let mut one = base.clone();
        one.workers = 1;
        let mut three = base.clone();
        three.workers = 3;
        let a = run_trial_study(&config, &one).unwrap();
        let b = run_trial_study(&config, &three).unwrap();
        assert_eq!(metrics_table_markdown(&a.metrics), metrics_table_markdown(&b.metrics));
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.error_micro.to_bits(), y.error_micro.to_bits());
            assert_eq!(
                x.predicted_std_micro.to_bits(),
                y.predicted_std_micro.to_bits()
            );
        }
    }

    #[test]
    fn metrics_recompute_exactly_from_records() {
        let config = tiny_config(1.0, 21);
        let options = StudyOptions {
            methods: vec![Method::Santisteban, Method::Tremsin],
            ..StudyOptions::default()
        };
        let out = run_trial_study(&config, &options).unwrap();
        let recomputed = compute_metrics(&options.methods, &out.records);
        for (a, b) in out.metrics.iter().zip(&recomputed) {
            assert_eq!(a.error_mean.to_bits(), b.error_mean.to_bits());
            assert_eq!(a.mean_magnitude.to_bits(), b.mean_magnitude.to_bits());
            assert_eq!(a.maximum.to_bits(), b.maximum.to_bits());
            assert_eq!(a.error_std.to_bits(), b.error_std.to_bits());
            assert_eq!(a.mean_predicted_std.to_bits(), b.mean_predicted_std.to_bits());
            assert_eq!(a.n_failures, b.n_failures);
        }
    }

    #[test]
    fn per_group_parameters_are_shared_and_noise_redrawn() {
        let config = TrialConfig {
            n_groups: 1,
            trials_per_group: 2,
            seed: 31,
            grid: GridSpec::default(),
            ..TrialConfig::default()
        };
        // Identical group params imply identical true strain across trials.
        let options = StudyOptions {
            methods: vec![Method::Santisteban],
            ..StudyOptions::default()
        };
        let out = run_trial_study(&config, &options).unwrap();
        assert_eq!(
            out.records[0].true_strain_micro,
            out.records[1].true_strain_micro
        );
        // Noise differs, so the estimates differ.
        assert_ne!(out.records[0].estimate_micro, out.records[1].estimate_micro);
    }

    #[test]
    fn failure_records_are_counted_separately() {
        let records = vec![
            TrialRecord {
                group: 0,
                trial: 0,
                method: Method::Tremsin,
                true_strain_micro: 0.0,
                estimate_micro: 100.0,
                error_micro: 100.0,
                predicted_std_micro: 50.0,
                failed: false,
                suspicious: false,
                message: None,
            },
            TrialRecord {
                group: 0,
                trial: 1,
                method: Method::Tremsin,
                true_strain_micro: 0.0,
                estimate_micro: f64::NAN,
                error_micro: f64::NAN,
                predicted_std_micro: f64::NAN,
                failed: true,
                suspicious: false,
                message: Some("did not converge".into()),
            },
        ];
        let metrics = compute_metrics(&[Method::Tremsin], &records);
        assert_eq!(metrics[0].n_trials, 2);
        assert_eq!(metrics[0].n_failures, 1);
        assert_eq!(metrics[0].error_mean, 100.0);
        assert_eq!(metrics[0].maximum, 100.0);
    }

    #[test]
    fn histogram_counts_match_success_count() {
        let config = tiny_config(1.0, 41);
        let options = StudyOptions {
            methods: vec![Method::CrossCorrelation],
            ..StudyOptions::default()
        };
        let out = run_trial_study(&config, &options).unwrap();
        let hist = error_histogram(&out.records, Method::CrossCorrelation, 21).unwrap();
        let successes = out.records.iter().filter(|r| !r.failed).count();
        assert_eq!(hist.counts.iter().sum::<usize>(), successes);
        let mut buf = Vec::new();
        hist.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("bin_center,count,gaussian_overlay\n"));
    }
}
