//! Aggregations used in reports.

use serde::{Deserialize, Serialize};

/// `exp(mean(ln(v + shift))) − shift`; values must exceed `−shift`.
pub fn shifted_geomean(values: &[f64], shift: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let s: f64 = values.iter().map(|v| (v + shift).ln()).sum();
    (s / values.len() as f64).exp() - shift
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Linear-interpolation percentile, `q` in `[0, 100]`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Min, shifted geometric mean, 99th percentile and max.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub min: f64,
    pub mean: f64,
    pub geomean: f64,
    pub p99: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64], shift: f64) -> Self {
        Self {
            n: values.len(),
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            mean: mean(values),
            geomean: shifted_geomean(values, shift),
            p99: percentile(values, 99.0),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geomean_matches_closed_form() {
        let g = shifted_geomean(&[0.0, 0.03], 0.01);
        assert!((g - ((0.01f64 * 0.04).sqrt() - 0.01)).abs() < 1e-15);
        assert!((shifted_geomean(&[2.0, 8.0], 0.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 99.0), 99.0);
        assert_eq!(percentile(&[1.0, 2.0], 50.0), 1.5);
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 100.0), 3.0);
    }
}
