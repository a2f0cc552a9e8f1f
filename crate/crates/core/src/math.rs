/// Rounding direction for [`order_index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounding {
    /// `⌊·⌋`
    Floor,
    /// `⌈·⌉`
    Ceil,
}

/// Computes `⌊(1−δ)(n+1)⌋` or `⌈(1−δ)(n+1)⌉`.
///
/// Products that land within `1e-9` (relative) of an integer are snapped to
/// it first, so `δ = 0.2, n = 99` gives exactly 80 for both roundings.
pub fn order_index(delta: f64, n: usize, rounding: Rounding) -> i64 {
    let x = snap((1.0 - delta) * (n as f64 + 1.0));
    match rounding {
        Rounding::Floor => libm::floor(x) as i64,
        Rounding::Ceil => libm::ceil(x) as i64,
    }
}

/// Rounds `x` to the nearest integer when within `1e-9` (relative) of it.
pub(crate) fn snap(x: f64) -> f64 {
    let nearest = libm::round(x);
    if libm::fabs(x - nearest) <= 1e-9 * x.abs().max(1.0) {
        nearest
    } else {
        x
    }
}

/// Mean and sample standard deviation (`n − 1` denominator; 0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}
