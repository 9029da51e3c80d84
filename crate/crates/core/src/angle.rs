//! Points of `R / Z` as 64-bit fixed-point fractions with wrapping arithmetic.

use crate::error::{Error, Result};

const SCALE: f64 = 18446744073709551616.0; // 2^64

/// `x mod 1` scaled by `2^64`.
#[inline]
pub fn to_fixed(x: f64) -> u64 {
    let f = x.rem_euclid(1.0);
    // `as` saturates, so f rounding up to 1 maps to the largest fraction
    (f * SCALE) as u64
}

#[inline]
pub fn to_unit(v: u64) -> f64 {
    v as f64 / SCALE
}

/// Reals accept `golden` (`(sqrt 5 - 1) / 2`), `silver` (`sqrt 2 - 1`) and fractions `p/q`.
pub fn parse_real(s: &str) -> Result<f64> {
    let bad = || Error::Config(format!("not a number: {s:?}"));
    match s.trim() {
        "golden" => Ok((5f64.sqrt() - 1.0) / 2.0),
        "silver" => Ok(2f64.sqrt() - 1.0),
        t => {
            let v = match t.split_once('/') {
                Some((p, q)) => {
                    let (p, q): (f64, f64) = (p.trim().parse().map_err(|_| bad())?, q.trim().parse().map_err(|_| bad())?);
                    if q == 0.0 {
                        return Err(bad());
                    }
                    p / q
                }
                None => t.parse().map_err(|_| bad())?,
            };
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad())
            }
        }
    }
}
