//! Spectrum ingestion from CSV files.

use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::spectrum::TransmissionSpectrum;

/// Supported input layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumFormat {
    /// `lambda,transmission[,noise_std]`
    CsvTr,
    /// `lambda,I,I0`; transmission is the quotient.
    CsvCounts,
}

impl std::str::FromStr for SpectrumFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv_tr" | "tr" => Ok(SpectrumFormat::CsvTr),
            "csv_counts" | "counts" => Ok(SpectrumFormat::CsvCounts),
            other => Err(Error::invalid(format!("unknown format '{other}'"))),
        }
    }
}

/// An ingested spectrum plus the number of rows dropped (zero open-beam
/// counts).
#[derive(Debug, Clone)]
pub struct Ingested {
    pub spectrum: TransmissionSpectrum,
    pub dropped_rows: usize,
}

/// Read a spectrum from a file. A supplied noise model attaches per-point
/// standard deviations wherever the file itself does not carry them.
pub fn ingest_spectrum(
    path: &Path,
    format: SpectrumFormat,
    noise: Option<&NoiseModel>,
) -> Result<Ingested> {
    let file = std::fs::File::open(path)?;
    ingest_spectrum_reader(std::io::BufReader::new(file), format, noise)
}

pub fn ingest_spectrum_reader<R: BufRead>(
    reader: R,
    format: SpectrumFormat,
    noise: Option<&NoiseModel>,
) -> Result<Ingested> {
    let mut wavelengths = Vec::new();
    let mut values = Vec::new();
    let mut noise_std: Vec<f64> = Vec::new();
    let mut has_noise_column = false;
    let mut dropped_rows = 0usize;
    let mut first_data_row = true;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if idx == 0 && trimmed.chars().any(|c| c.is_ascii_alphabetic()) {
            continue; // header row
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad {what} '{s}': {e}"),
            })
        };
        match format {
            SpectrumFormat::CsvTr => {
                if fields.len() < 2 || fields.len() > 3 {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected 2-3 fields, got {}", fields.len()),
                    });
                }
                let lambda = parse(fields[0], "lambda")?;
                let tr = parse(fields[1], "transmission")?;
                let std = match fields.get(2) {
                    Some(s) if !s.is_empty() => Some(parse(s, "noise_std")?),
                    _ => None,
                };
                if first_data_row {
                    has_noise_column = std.is_some();
                    first_data_row = false;
                } else if has_noise_column != std.is_some() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "noise_std column must be present on all rows or none".into(),
                    });
                }
                wavelengths.push(lambda);
                values.push(tr);
                if let Some(s) = std {
                    noise_std.push(s);
                }
            }
            SpectrumFormat::CsvCounts => {
                if fields.len() != 3 {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected 3 fields (lambda,I,I0), got {}", fields.len()),
                    });
                }
                let lambda = parse(fields[0], "lambda")?;
                let i = parse(fields[1], "I")?;
                let i0 = parse(fields[2], "I0")?;
                if i0 == 0.0 {
                    dropped_rows += 1;
                    continue;
                }
                wavelengths.push(lambda);
                values.push(i / i0);
            }
        }
    }

    if wavelengths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("wavelengths must be strictly increasing"));
    }
    let stds = if has_noise_column {
        Some(noise_std)
    } else {
        noise.map(|model| values.iter().map(|&tr| model.std_at(tr)).collect())
    };
    let spectrum = TransmissionSpectrum::new(wavelengths, values, stds)?;
    Ok(Ingested {
        spectrum,
        dropped_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::io::Cursor;

    #[test]
    fn three_line_tr_file() {
        let text = "4.0,0.5\n4.1,0.55\n4.2,0.6\n";
        let out = ingest_spectrum_reader(Cursor::new(text), SpectrumFormat::CsvTr, None).unwrap();
        assert_eq!(out.spectrum.len(), 3);
        assert_eq!(out.dropped_rows, 0);
        assert!(out.spectrum.noise_std().is_none());
    }

    #[test]
    fn header_and_noise_column() {
        let text = "lambda,transmission,noise_std\n4.0,0.5,0.01\n4.1,0.55,0.012\n";
        let out = ingest_spectrum_reader(Cursor::new(text), SpectrumFormat::CsvTr, None).unwrap();
        assert_eq!(out.spectrum.len(), 2);
        assert_eq!(out.spectrum.noise_std().unwrap()[1], 0.012);
    }

    #[test]
    fn counts_with_equal_beams_give_unit_transmission() {
        let text = "4.0,120,120\n4.1,80,80\n4.2,55,55\n";
        let out =
            ingest_spectrum_reader(Cursor::new(text), SpectrumFormat::CsvCounts, None).unwrap();
        for v in out.spectrum.values() {
            assert_relative_eq!(*v, 1.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn zero_open_beam_rows_dropped_with_count() {
        let text = "4.0,120,100\n4.05,90,0\n4.1,80,100\n4.2,70,100\n";
        let model = NoiseModel::binned_reference();
        let out =
            ingest_spectrum_reader(Cursor::new(text), SpectrumFormat::CsvCounts, Some(&model))
                .unwrap();
        assert_eq!(out.dropped_rows, 1);
        assert_eq!(out.spectrum.len(), 3);
        let stds = out.spectrum.noise_std().unwrap();
        assert_relative_eq!(stds[0], model.std_at(1.2), max_relative = 1e-12);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "4.0,0.5\nnot-a-number,0.6\n";
        let err = ingest_spectrum_reader(Cursor::new(text), SpectrumFormat::CsvTr, None);
        match err {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_increasing_wavelengths_rejected() {
        let text = "4.0,0.5\n4.2,0.55\n4.1,0.6\n";
        let err = ingest_spectrum_reader(Cursor::new(text), SpectrumFormat::CsvTr, None);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn tr_file_attaches_model_noise_when_missing() {
        let text = "4.0,0.5\n4.1,0.55\n4.2,0.6\n";
        let model = NoiseModel::binned_reference();
        let out =
            ingest_spectrum_reader(Cursor::new(text), SpectrumFormat::CsvTr, Some(&model)).unwrap();
        let stds = out.spectrum.noise_std().unwrap();
        assert_relative_eq!(stds[0], model.std_at(0.5), max_relative = 1e-12);
    }
}
