//! NaN-ignoring statistical aggregators.
//!
//! Conventions, fixed crate-wide:
//! - every aggregator skips NaN entries; an all-NaN (or empty) input
//!   yields NaN;
//! - `nanvar` is the population variance (divide by the non-NaN count);
//! - `nanskew` is m3 / m2^(3/2), `nankurtosis` is m4 / m2² − 3 (excess);
//!   both are NaN on constant input (zero second moment).

use crate::dsl::AggKind;

/// Apply one aggregator to a slice.
pub fn aggregate(kind: AggKind, values: &[f64]) -> f64 {
    match kind {
        AggKind::NanMin => nanmin(values),
        AggKind::NanMax => nanmax(values),
        AggKind::NanMean => nanmean(values),
        AggKind::NanVar => nanvar(values),
        AggKind::NanSkew => nanskew(values),
        AggKind::NanKurtosis => nankurtosis(values),
    }
}

pub fn nanmin(values: &[f64]) -> f64 {
    values
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(f64::NAN, |acc, v| if acc.is_nan() || v < acc { v } else { acc })
}

pub fn nanmax(values: &[f64]) -> f64 {
    values
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(f64::NAN, |acc, v| if acc.is_nan() || v > acc { v } else { acc })
}

pub fn nanmean(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for &v in values {
        if !v.is_nan() {
            sum += v;
            n += 1;
        }
    }
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Central moments (m2, m3, m4) about the NaN-ignoring mean, plus count.
/// Exactly-constant input yields exactly zero moments (the rounded mean
/// must not leak a spurious variance).
fn central_moments(values: &[f64]) -> (f64, f64, f64, usize) {
    let mut first = f64::NAN;
    let mut constant = true;
    for &v in values {
        if v.is_nan() {
            continue;
        }
        if first.is_nan() {
            first = v;
        } else if v != first {
            constant = false;
            break;
        }
    }
    if first.is_nan() {
        return (f64::NAN, f64::NAN, f64::NAN, 0);
    }
    if constant {
        let n = values.iter().filter(|v| !v.is_nan()).count();
        return (0.0, 0.0, 0.0, n);
    }
    let m = nanmean(values);
    let (mut m2, mut m3, mut m4, mut n) = (0.0, 0.0, 0.0, 0usize);
    for &v in values {
        if !v.is_nan() {
            let d = v - m;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
            n += 1;
        }
    }
    let nf = n as f64;
    (m2 / nf, m3 / nf, m4 / nf, n)
}

pub fn nanvar(values: &[f64]) -> f64 {
    central_moments(values).0
}

pub fn nanskew(values: &[f64]) -> f64 {
    let (m2, m3, _, n) = central_moments(values);
    if n == 0 || m2 <= 0.0 {
        return f64::NAN;
    }
    m3 / m2.powf(1.5)
}

pub fn nankurtosis(values: &[f64]) -> f64 {
    let (m2, _, m4, n) = central_moments(values);
    if n == 0 || m2 <= 0.0 {
        return f64::NAN;
    }
    m4 / (m2 * m2) - 3.0
}
