//! Descriptive statistics shared across modules. Standard deviations are
//! population (divide by count) throughout.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Exactly 0 for constant input.
pub fn population_std(xs: &[f64]) -> f64 {
    if xs.windows(2).all(|w| w[0] == w[1]) && !xs.is_empty() {
        return if xs[0].is_finite() { 0.0 } else { f64::NAN };
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    var.sqrt()
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    (mean(xs), population_std(xs))
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
