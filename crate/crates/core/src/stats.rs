//! Small descriptive statistics used across the pipeline.

use crate::scalar::Scalar;

pub fn mean<S: Scalar>(xs: &[S]) -> S {
    if xs.is_empty() {
        return S::zero();
    }
    xs.iter().copied().sum::<S>() / S::from_usize_lossy(xs.len())
}

/// Population variance (divides by n).
pub fn variance<S: Scalar>(xs: &[S]) -> S {
    if xs.is_empty() {
        return S::zero();
    }
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<S>() / S::from_usize_lossy(xs.len())
}

pub fn std_dev<S: Scalar>(xs: &[S]) -> S {
    variance(xs).sqrt()
}

/// Coefficient of determination of `pred` against `actual`.
///
/// Returns 0 when `actual` is constant.
pub fn r_squared<S: Scalar>(actual: &[S], pred: &[S]) -> S {
    assert_eq!(actual.len(), pred.len());
    let m = mean(actual);
    let ss_tot: S = actual.iter().map(|&a| (a - m) * (a - m)).sum();
    if ss_tot == S::zero() {
        return S::zero();
    }
    let ss_res: S = actual
        .iter()
        .zip(pred)
        .map(|(&a, &p)| (a - p) * (a - p))
        .sum();
    S::one() - ss_res / ss_tot
}

pub fn pearson<S: Scalar>(a: &[S], b: &[S]) -> S {
    assert_eq!(a.len(), b.len());
    let ma = mean(a);
    let mb = mean(b);
    let mut sab = S::zero();
    let mut saa = S::zero();
    let mut sbb = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == S::zero() || sbb == S::zero() {
        return S::zero();
    }
    sab / (saa * sbb).sqrt()
}

/// Ranks starting at 1, ties receive their average rank.
pub fn average_ranks<S: Scalar>(xs: &[S]) -> Vec<S> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).expect("finite values"));
    let mut ranks = vec![S::zero(); xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // ranks start..end (0-based) share the mean of (start+1 ..= end)
        let avg = S::from_f64_lossy((start + 1 + end) as f64 / 2.0);
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation; 0 if either input is constant.
pub fn spearman<S: Scalar>(a: &[S], b: &[S]) -> S {
    pearson(&average_ranks(a), &average_ranks(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn population_sd_of_one_two_three() {
        assert_abs_diff_eq!(std_dev(&[1.0, 2.0, 3.0]), 0.816_496_580_927_726, epsilon = 1e-12);
    }

    #[test]
    fn ranks_with_ties() {
        let r = average_ranks(&[10.0, 20.0, 10.0, 30.0]);
        assert_eq!(r, vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn spearman_monotone_and_constant() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [1.0, 8.0, 27.0, 64.0];
        assert_abs_diff_eq!(spearman(&a, &b), 1.0, epsilon = 1e-12);
        let c: Vec<f64> = b.iter().map(|v| -v).collect();
        assert_abs_diff_eq!(spearman(&a, &c), -1.0, epsilon = 1e-12);
        assert_eq!(spearman(&a, &[5.0; 4]), 0.0);
    }

    #[test]
    fn r2_perfect_and_mean() {
        let y = [1.0f32, 2.0, 3.0];
        assert_abs_diff_eq!(r_squared(&y, &y), 1.0);
        assert_abs_diff_eq!(r_squared(&y, &[2.0, 2.0, 2.0]), 0.0);
    }
}
