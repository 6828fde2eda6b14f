//! Cross-module integration tests: file round trips, partition properties,
//! and discretization consistency of the GP strain pipeline.

use proptest::prelude::*;

use braggfit::bayes::{fit_edge_gp, sample_zeta, strain_distribution, GpFitOptions, ZetaReference};
use braggfit::gp::{HyperOptions, KernelKind};
use braggfit::harness::{ingest::ingest_spectrum_reader, SpectrumFormat};
use braggfit::lsq::FitWindows;
use braggfit::noise::bin_residuals;
use braggfit::spectrum::TransmissionSpectrum;
use braggfit::synth::{sample_edge_params, simulate_spectrum, stream_rng, write_spectrum_csv, TrialConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectrum_csv_round_trip_is_exact(
        start in 1.0f64..10.0,
        step in 1e-4f64..1e-1,
        values in prop::collection::vec(1e-6f64..1.5, 4..40),
        with_noise in any::<bool>(),
    ) {
        let n = values.len();
        let wavelengths: Vec<f64> = (0..n).map(|i| start + i as f64 * step).collect();
        let noise = with_noise.then(|| vec![1e-3; n]);
        let spectrum = TransmissionSpectrum::new(wavelengths, values, noise).unwrap();
        let mut buf = Vec::new();
        write_spectrum_csv(&mut buf, &spectrum).unwrap();
        let back = ingest_spectrum_reader(
            std::io::Cursor::new(buf),
            SpectrumFormat::CsvTr,
            None,
        )
        .unwrap();
        // Rust float formatting is shortest-round-trip, so this is exact.
        prop_assert_eq!(back.spectrum, spectrum);
    }

    #[test]
    fn binning_partitions_arbitrary_inputs(
        residuals in prop::collection::vec((0.0f64..1.0, -1.0f64..1.0), 0..400),
        cuts in prop::collection::btree_set(1u32..99, 1..10),
    ) {
        let mut edges: Vec<f64> = vec![0.05];
        edges.extend(cuts.iter().map(|c| 0.05 + 0.9 * *c as f64 / 100.0));
        edges.push(0.991);
        let out = bin_residuals(&residuals, &edges).unwrap();
        let total: usize = out.bins.iter().map(|b| b.residuals.len()).sum();
        prop_assert_eq!(total + out.dropped, residuals.len());
    }
}

#[test]
fn doubling_prediction_density_moves_strain_less_than_half_the_coarse_pitch() {
    let config = TrialConfig {
        seed: 41,
        ..TrialConfig::default()
    };
    let grid = config.grid.build();
    let mut grng = stream_rng(config.seed, &[0, 1]);
    let params = sample_edge_params(&mut grng, &config);
    let mut trng = stream_rng(config.seed, &[0, 2]);
    let spectrum = simulate_spectrum(&params, &grid, &config.noise, 1.0, &mut trng).unwrap();
    let windows = FitWindows::default_for(&spectrum);

    let mut means = Vec::new();
    let mut coarse_pitch = 0.0;
    for density in [4usize, 8] {
        let options = GpFitOptions {
            kernel_candidates: vec![KernelKind::Matern32],
            hyper: HyperOptions {
                n_starts: 2,
                seed: 7,
                ..HyperOptions::default()
            },
            prediction_density: density,
            edge_window: None,
        };
        let fit = fit_edge_gp(&spectrum, &windows, &options).unwrap();
        if density == 4 {
            coarse_pitch = fit.grid[1] - fit.grid[0];
        }
        let mut rng = stream_rng(9, &[density as u64]);
        let zeta = sample_zeta(&fit.posterior, 2000, &mut rng).unwrap();
        let est = strain_distribution(&zeta, &ZetaReference::Noiseless(config.lambda_hkl0)).unwrap();
        means.push(est.strain_mean);
    }
    let delta = (means[1] - means[0]).abs();
    let bound = 0.5 * coarse_pitch / config.lambda_hkl0;
    assert!(
        delta < bound,
        "strain mean moved {delta:.3e} (bound {bound:.3e})"
    );
}
