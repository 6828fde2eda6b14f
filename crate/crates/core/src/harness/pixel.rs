//! Pixel stacks and macro-pixel averaging.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Per-pixel transmission series on a shared wavelength grid, row-major
/// (`index = y * width + x`).
#[derive(Debug, Clone, PartialEq)]
pub struct PixelStack {
    pub width: usize,
    pub height: usize,
    pub wavelengths: Vec<f64>,
    pub spectra: Vec<Vec<f64>>,
}

impl PixelStack {
    pub fn new(
        width: usize,
        height: usize,
        wavelengths: Vec<f64>,
        spectra: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("stack dimensions must be positive"));
        }
        if spectra.len() != width * height {
            return Err(Error::invalid(format!(
                "expected {} spectra, got {}",
                width * height,
                spectra.len()
            )));
        }
        if spectra.iter().any(|s| s.len() != wavelengths.len()) {
            return Err(Error::invalid("all pixels must share the wavelength grid"));
        }
        Ok(Self {
            width,
            height,
            wavelengths,
            spectra,
        })
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        &self.spectra[y * self.width + x]
    }
}

/// Average non-overlapping `p x p` blocks. Trailing partial blocks are
/// averaged over their actual extent, so the output is
/// `ceil(w/p) x ceil(h/p)`.
pub fn macro_pixel_average(stack: &PixelStack, p: usize) -> Result<PixelStack> {
    if p == 0 {
        return Err(Error::invalid("block size must be >= 1"));
    }
    let out_w = stack.width.div_ceil(p);
    let out_h = stack.height.div_ceil(p);
    let n_wav = stack.wavelengths.len();
    let mut spectra = Vec::with_capacity(out_w * out_h);
    for by in 0..out_h {
        for bx in 0..out_w {
            let x_lo = bx * p;
            let y_lo = by * p;
            let x_hi = (x_lo + p).min(stack.width);
            let y_hi = (y_lo + p).min(stack.height);
            let count = ((x_hi - x_lo) * (y_hi - y_lo)) as f64;
            let mut acc = vec![0.0; n_wav];
            for y in y_lo..y_hi {
                for x in x_lo..x_hi {
                    let s = stack.pixel(x, y);
                    for (a, v) in acc.iter_mut().zip(s) {
                        *a += v;
                    }
                }
            }
            for a in acc.iter_mut() {
                *a /= count;
            }
            spectra.push(acc);
        }
    }
    PixelStack::new(out_w, out_h, stack.wavelengths.clone(), spectra)
}

/// Read a long-format stack CSV with columns `x,y,lambda,transmission`.
pub fn read_pixel_stack_csv<R: BufRead>(reader: R) -> Result<PixelStack> {
    let mut rows: Vec<(usize, usize, f64, f64)> = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if line_no == 0 && trimmed.chars().any(|c| c.is_ascii_alphabetic()) {
            continue; // header
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no + 1,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: line_no + 1,
                message: format!("bad {what}: {e}"),
            })
        };
        let x = parse(fields[0], "x")? as usize;
        let y = parse(fields[1], "y")? as usize;
        let lambda = parse(fields[2], "lambda")?;
        let tr = parse(fields[3], "transmission")?;
        rows.push((x, y, lambda, tr));
    }
    if rows.is_empty() {
        return Err(Error::insufficient("empty stack file"));
    }
    let width = rows.iter().map(|r| r.0).max().unwrap() + 1;
    let height = rows.iter().map(|r| r.1).max().unwrap() + 1;
    let mut wavelengths: Vec<f64> = rows
        .iter()
        .filter(|r| r.0 == 0 && r.1 == 0)
        .map(|r| r.2)
        .collect();
    wavelengths.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if wavelengths.is_empty() {
        return Err(Error::invalid("pixel (0, 0) missing"));
    }
    let n_wav = wavelengths.len();
    let mut spectra = vec![vec![f64::NAN; n_wav]; width * height];
    for (x, y, lambda, tr) in rows {
        let k = wavelengths
            .iter()
            .position(|w| (w - lambda).abs() <= 1e-12 * lambda.abs().max(1.0))
            .ok_or_else(|| {
                Error::invalid(format!("pixel ({x}, {y}) has wavelength {lambda} off the shared grid"))
            })?;
        spectra[y * width + x][k] = tr;
    }
    if spectra.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::invalid("stack has missing pixel samples"));
    }
    PixelStack::new(width, height, wavelengths, spectra)
}

/// Write the long-format stack CSV.
pub fn write_pixel_stack_csv<W: Write>(mut out: W, stack: &PixelStack) -> Result<()> {
    writeln!(out, "x,y,lambda,transmission")?;
    for y in 0..stack.height {
        for x in 0..stack.width {
            let s = stack.pixel(x, y);
            for (w, v) in stack.wavelengths.iter().zip(s) {
                writeln!(out, "{x},{y},{w},{v}")?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn constant_stack(w: usize, h: usize, value: f64) -> PixelStack {
        PixelStack::new(
            w,
            h,
            vec![1.0, 2.0],
            (0..w * h).map(|_| vec![value, value]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_at_block_size_one() {
        let stack = constant_stack(3, 2, 0.7);
        let out = macro_pixel_average(&stack, 1).unwrap();
        assert_eq!(out, stack);
    }

    #[test]
    fn constant_block_collapses() {
        let stack = constant_stack(2, 2, 0.42);
        let out = macro_pixel_average(&stack, 2).unwrap();
        assert_eq!(out.width, 1);
        assert_eq!(out.height, 1);
        assert_relative_eq!(out.pixel(0, 0)[0], 0.42, max_relative = 1e-15);
    }

    #[test]
    fn oversized_block_gives_single_pixel() {
        let stack = constant_stack(3, 2, 0.5);
        let out = macro_pixel_average(&stack, 10).unwrap();
        assert_eq!((out.width, out.height), (1, 1));
    }

    #[test]
    fn partial_blocks_average_their_extent() {
        // 3x1 stack, p=2: first block averages 2 pixels, second 1.
        let stack = PixelStack::new(
            3,
            1,
            vec![0.0],
            vec![vec![1.0], vec![3.0], vec![10.0]],
        )
        .unwrap();
        let out = macro_pixel_average(&stack, 2).unwrap();
        assert_eq!((out.width, out.height), (2, 1));
        assert_relative_eq!(out.pixel(0, 0)[0], 2.0);
        assert_relative_eq!(out.pixel(1, 0)[0], 10.0);
    }

    #[test]
    fn grand_mean_preserved_when_blocks_divide() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let w = 8;
        let h = 4;
        let stack = PixelStack::new(
            w,
            h,
            vec![0.0, 1.0],
            (0..w * h)
                .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
                .collect(),
        )
        .unwrap();
        let out = macro_pixel_average(&stack, 2).unwrap();
        for k in 0..2 {
            let before: f64 =
                stack.spectra.iter().map(|s| s[k]).sum::<f64>() / (w * h) as f64;
            let after: f64 = out.spectra.iter().map(|s| s[k]).sum::<f64>()
                / (out.width * out.height) as f64;
            assert_relative_eq!(before, after, max_relative = 1e-12);
        }
    }

    #[test]
    fn noise_reduction_matches_block_size() {
        // i.i.d. noise, 24x24 block: per-point std shrinks by ~1/24.
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let sigma = 0.02;
        let n_wav = 10_000;
        let p = 24;
        let normal = rand_distr::Normal::new(0.0, sigma).unwrap();
        let spectra: Vec<Vec<f64>> = (0..p * p)
            .map(|_| {
                (0..n_wav)
                    .map(|_| 0.5 + rand_distr::Distribution::sample(&normal, &mut rng))
                    .collect()
            })
            .collect();
        let wavelengths: Vec<f64> = (0..n_wav).map(|i| i as f64).collect();
        let stack = PixelStack::new(p, p, wavelengths, spectra).unwrap();
        let out = macro_pixel_average(&stack, p).unwrap();
        let residuals: Vec<f64> = out.pixel(0, 0).iter().map(|v| v - 0.5).collect();
        let std = stats::sample_std(&residuals);
        assert_relative_eq!(std, sigma / p as f64, max_relative = 0.10);
    }

    #[test]
    fn csv_round_trip() {
        let stack = PixelStack::new(
            2,
            2,
            vec![4.0, 4.1],
            vec![
                vec![0.1, 0.2],
                vec![0.3, 0.4],
                vec![0.5, 0.6],
                vec![0.7, 0.8],
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_pixel_stack_csv(&mut buf, &stack).unwrap();
        let back = read_pixel_stack_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, stack);
    }

    #[test]
    fn bad_stack_files_are_rejected() {
        let missing = "x,y,lambda,transmission\n0,0,4.0,0.5\n1,0,4.0,0.6\n0,0,4.1,0.5\n";
        assert!(read_pixel_stack_csv(std::io::Cursor::new(missing.as_bytes())).is_err());
        let garbled = "x,y,lambda\n0,0,4.0\n";
        assert!(matches!(
            read_pixel_stack_csv(std::io::Cursor::new(garbled.as_bytes())),
            Err(Error::Parse { .. })
        ));
    }
}
