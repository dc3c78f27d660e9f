//! Small numeric helpers shared across modules.

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Euclidean norm of a non-negative vector, compensated.
pub fn l2_norm(values: &[f64]) -> f64 {
    compensated_sum(values.iter().map(|p| p * p)).sqrt()
}

/// Sample mean and standard error of the mean. The standard error is zero
/// for fewer than two samples.
pub fn mean_and_se(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return Some((mean, 0.0));
    }
    let var = compensated_sum(values.iter().map(|x| (x - mean) * (x - mean))) / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}
