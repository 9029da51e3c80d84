//! Least-squares fits on log-log data.

use serde::{Deserialize, Serialize};

/// Slope of an ordinary least-squares line through `(x, y)` with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

pub fn least_squares(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let r = b - (intercept + slope * a);
                r * r
            })
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(LineFit {
        slope,
        intercept,
        stderr,
    })
}

/// Fits `log y = slope * log x + c`. All inputs must be positive.
pub fn loglog(x: &[f64], y: &[f64]) -> Option<LineFit> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    least_squares(&lx, &ly)
}

/// Geometric grid `start, start*ratio, ...` up to and including `end`.
pub fn geometric_grid(start: usize, end: usize, ratio: usize) -> Vec<usize> {
    let mut out = Vec::new();
    if start == 0 || ratio < 2 {
        return out;
    }
    let mut v = start;
    while v <= end {
        out.push(v);
        v = match v.checked_mul(ratio) {
            Some(next) => next,
            None => break,
        };
    }
    out
}
