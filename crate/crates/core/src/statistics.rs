//! Moments, kernel density estimates and distribution distances.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::math::{abs, exp, sqrt};

pub const PDF_GRID_POINTS: usize = 512;
pub const MIN_PDF_SAMPLES: usize = 100;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Per-column sample mean and unbiased sample variance of `responses`
/// (rows are samples).
pub fn moment_fields(responses: &DenseMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let (r, n) = (responses.rows(), responses.cols());
    if r < 2 {
        return Err(Error::InvalidInput("moments need at least 2 samples".into()));
    }
    let mut mean = vec![0.0; n];
    for s in 0..r {
        for (m, v) in mean.iter_mut().zip(responses.row(s)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= r as f64);
    let mut var = vec![0.0; n];
    for s in 0..r {
        for ((q, v), m) in var.iter_mut().zip(responses.row(s)).zip(&mean) {
            *q += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|q| *q /= (r - 1) as f64);
    Ok((mean, var))
}

/// Mean and unbiased variance of one population.
pub fn mean_variance(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PdfEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

fn silverman(x: &[f64]) -> Result<f64> {
    if x.len() < MIN_PDF_SAMPLES {
        return Err(Error::InvalidInput(alloc::format!(
            "density estimation needs at least {MIN_PDF_SAMPLES} samples, got {}",
            x.len()
        )));
    }
    let (_, var) = mean_variance(x);
    let sd = sqrt(var);
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::DegenerateSample);
    }
    Ok(1.06 * sd * libm::pow(x.len() as f64, -0.2))
}

fn kde_at(x: &[f64], h: f64, t: f64) -> f64 {
    let mut s = 0.0;
    for v in x {
        let z = (t - v) / h;
        s += exp(-0.5 * z * z);
    }
    s * INV_SQRT_2PI / (h * x.len() as f64)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn extent(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
}

/// Gaussian-kernel density estimate with Silverman's bandwidth on a
/// 512-point grid spanning `[min − 3h, max + 3h]`.
pub fn estimate_pdf(samples: &[f64]) -> Result<PdfEstimate> {
    let h = silverman(samples)?;
    let (lo, hi) = extent(samples);
    let grid = linspace(lo - 3.0 * h, hi + 3.0 * h, PDF_GRID_POINTS);
    let density = grid.iter().map(|t| kde_at(samples, h, *t)).collect();
    Ok(PdfEstimate {
        grid,
        density,
        bandwidth: h,
    })
}

/// Trapezoidal integral of `y` over `x`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PdfDistance {
    /// `∫ |p̂_a − p̂_b|` on a grid covering both estimates.
    pub l1: f64,
    /// Largest gap between the empirical CDFs.
    pub ks: f64,
}

/// Density estimates of `a` and `b` on one shared grid covering both,
/// each with its own Silverman bandwidth.
pub fn paired_pdfs(a: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (ha, hb) = (silverman(a)?, silverman(b)?);
    let (la, ua) = extent(a);
    let (lb, ub) = extent(b);
    let lo = (la - 3.0 * ha).min(lb - 3.0 * hb);
    let hi = (ua + 3.0 * ha).max(ub + 3.0 * hb);
    let grid = linspace(lo, hi, 2 * PDF_GRID_POINTS);
    let pa = grid.iter().map(|t| kde_at(a, ha, *t)).collect();
    let pb = grid.iter().map(|t| kde_at(b, hb, *t)).collect();
    Ok((grid, pa, pb))
}

/// L1 distance between the two density estimates and the two-sample
/// Kolmogorov-Smirnov statistic.
pub fn pdf_distance(a: &[f64], b: &[f64]) -> Result<PdfDistance> {
    let (grid, pa, pb): (Vec<f64>, Vec<f64>, Vec<f64>) = paired_pdfs(a, b)?;
    let diff: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| abs(x - y)).collect();
    Ok(PdfDistance {
        l1: trapezoid(&grid, &diff),
        ks: ks_statistic(a, b),
    })
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < sa.len() && j < sb.len() {
        let t = if sa[i] <= sb[j] { sa[i] } else { sb[j] };
        while i < sa.len() && sa[i] <= t {
            i += 1;
        }
        while j < sb.len() && sb[j] <= t {
            j += 1;
        }
        d = d.max(abs(i as f64 / na - j as f64 / nb));
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_field::{draw_samples, Marginal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        draw_samples(1, 0, n, seed, &[Marginal::StandardNormal])
            .unwrap()
            .xi
            .column(0)
            .to_vec()
    }

    #[test]
    fn small_moment_cases() {
        let m = DenseMatrix::from_row_major(2, 2, vec![1.0, 5.0, 3.0, 5.0]);
        let (mean, var) = moment_fields(&m).unwrap();
        assert_eq!(mean, vec![2.0, 5.0]);
        assert_eq!(var, vec![2.0, 0.0]);
        assert!(moment_fields(&DenseMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn moments_match_streaming_recomputation() {
        let x = normals(5000, 3);
        let shifted: Vec<f64> = x.iter().map(|v| 1e3 + 0.5 * v).collect();
        let m = DenseMatrix::from_row_major(5000, 1, shifted.clone());
        let (mean, var) = moment_fields(&m).unwrap();
        let (mut wm, mut m2) = (0.0, 0.0);
        for (i, v) in shifted.iter().enumerate() {
            let d = v - wm;
            wm += d / (i + 1) as f64;
            m2 += d * (v - wm);
        }
        assert!((mean[0] - wm).abs() <= 1e-12 * wm.abs());
        assert!((var[0] - m2 / 4999.0).abs() <= 1e-12 * var[0]);
    }

    #[test]
    fn normal_density_and_normalization() {
        let x = normals(10_000, 1);
        let p = estimate_pdf(&x).unwrap();
        assert_eq!(p.grid.len(), 512);
        assert!((trapezoid(&p.grid, &p.density) - 1.0).abs() < 1e-3);
        assert!(p.density.iter().all(|d| *d >= 0.0));
        let at0 = kde_at(&x, p.bandwidth, 0.0);
        assert!((at0 - INV_SQRT_2PI).abs() < 0.1 * INV_SQRT_2PI);
        let y: Vec<f64> = x.iter().map(|v| v + 5.0).collect();
        let q = estimate_pdf(&y).unwrap();
        for (a, b) in p.grid.iter().zip(&q.grid) {
            assert!((b - a - 5.0).abs() < 1e-9);
        }
        assert_eq!(estimate_pdf(&[2.0; 200]), Err(Error::DegenerateSample));
    }

    #[test]
    fn distances() {
        let x = normals(10_000, 9);
        assert_eq!(pdf_distance(&x, &x).unwrap(), PdfDistance { l1: 0.0, ks: 0.0 });
        let d = pdf_distance(&x[..5000], &x[5000..]).unwrap();
        assert!(d.ks < 0.03);
        let e = pdf_distance(&x[5000..], &x[..5000]).unwrap();
        assert_eq!(d, e);
        assert_eq!(ks_statistic(&[0.0, 1.0], &[2.0, 3.0]), 1.0);
    }
}
