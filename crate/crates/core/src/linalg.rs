//! Dense kernels for the small (treatment-dimension sized) systems solved by
//! the causal forest.

use crate::scalar::Scalar;

/// Running weighted sums of `t tᵀ` and `t y` for a ridge problem
/// `min Σ wᵢ (yᵢ − θ·tᵢ)² + λ‖θ‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeAccumulator<S> {
    dim: usize,
    // row-major dim×dim, only the full matrix is kept for simplicity of solves
    gram: Vec<S>,
    cross: Vec<S>,
    weight: S,
}

impl<S: Scalar> RidgeAccumulator<S> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            gram: vec![S::zero(); dim * dim],
            cross: vec![S::zero(); dim],
            weight: S::zero(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total_weight(&self) -> S {
        self.weight
    }

    pub fn add(&mut self, t: &[S], y: S, w: S) {
        debug_assert_eq!(t.len(), self.dim);
        for a in 0..self.dim {
            let wta = w * t[a];
            self.cross[a] += wta * y;
            let row = &mut self.gram[a * self.dim..(a + 1) * self.dim];
            for (g, &tb) in row.iter_mut().zip(t) {
                *g += wta * tb;
            }
        }
        self.weight += w;
    }

    pub fn sub(&mut self, t: &[S], y: S, w: S) {
        self.add(t, y, -w);
    }

    /// Removes the sums accumulated in `other`.
    pub fn subtract(&mut self, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        for (g, &o) in self.gram.iter_mut().zip(&other.gram) {
            *g -= o;
        }
        for (c, &o) in self.cross.iter_mut().zip(&other.cross) {
            *c -= o;
        }
        self.weight -= other.weight;
    }

    /// Solve `(G/W + λI) θ = c/W`, i.e. the ridge problem with weights
    /// normalised to sum to one. Returns zeros for an empty accumulator.
    pub fn solve_normalized(&self, lambda: S) -> Vec<S> {
        if self.weight <= S::zero() {
            return vec![S::zero(); self.dim];
        }
        let inv = S::one() / self.weight;
        let mut a: Vec<S> = self.gram.iter().map(|&g| g * inv).collect();
        for k in 0..self.dim {
            a[k * self.dim + k] += lambda;
        }
        let b: Vec<S> = self.cross.iter().map(|&c| c * inv).collect();
        solve_spd(&a, &b, self.dim)
    }

    /// Solve `(G + λI) θ = c` with the raw (unnormalised) weights.
    pub fn solve(&self, lambda: S) -> Vec<S> {
        let mut a = self.gram.clone();
        for k in 0..self.dim {
            a[k * self.dim + k] += lambda;
        }
        solve_spd(&a, &self.cross, self.dim)
    }
}

/// Solve a symmetric positive (semi-)definite system by Cholesky, falling back
/// to partially pivoted Gaussian elimination when the factorisation breaks
/// down numerically.
pub fn solve_spd<S: Scalar>(a: &[S], b: &[S], n: usize) -> Vec<S> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    match cholesky(a, n) {
        Some(l) => {
            // forward: L z = b
            let mut z = vec![S::zero(); n];
            for i in 0..n {
                let mut s = b[i];
                for k in 0..i {
                    s -= l[i * n + k] * z[k];
                }
                z[i] = s / l[i * n + i];
            }
            // backward: Lᵀ x = z
            let mut x = vec![S::zero(); n];
            for i in (0..n).rev() {
                let mut s = z[i];
                for k in i + 1..n {
                    s -= l[k * n + i] * x[k];
                }
                x[i] = s / l[i * n + i];
            }
            x
        }
        None => gauss_solve(a, b, n),
    }
}

fn cholesky<S: Scalar>(a: &[S], n: usize) -> Option<Vec<S>> {
    let mut l = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > S::zero()) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn gauss_solve<S: Scalar>(a: &[S], b: &[S], n: usize) -> Vec<S> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                m[i * n + col]
                    .abs()
                    .partial_cmp(&m[j * n + col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(col);
        if m[pivot * n + col] == S::zero() {
            continue;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            x.swap(col, pivot);
        }
        let p = m[col * n + col];
        for r in col + 1..n {
            let f = m[r * n + col] / p;
            if f == S::zero() {
                continue;
            }
            for k in col..n {
                let v = m[col * n + k];
                m[r * n + k] -= f * v;
            }
            let v = x[col];
            x[r] -= f * v;
        }
    }
    let mut out = vec![S::zero(); n];
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= m[i * n + k] * out[k];
        }
        let d = m[i * n + i];
        out[i] = if d == S::zero() { S::zero() } else { s / d };
    }
    out
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm_sq<S: Scalar>(a: &[S]) -> S {
    dot(a, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn solves_small_spd_system() {
        let a = [4.0, 1.0, 1.0, 3.0];
        let b = [1.0, 2.0];
        let x = solve_spd(&a, &b, 2);
        assert_abs_diff_eq!(x[0], 1.0 / 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 7.0 / 11.0, epsilon = 1e-12);
    }

    #[test]
    fn indefinite_falls_back_to_elimination() {
        let a = [0.0, 1.0, 1.0, 0.0];
        let x = solve_spd(&a, &[2.0, 3.0], 2);
        assert_abs_diff_eq!(x[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn accumulator_add_sub_roundtrip() {
        let mut acc = RidgeAccumulator::<f64>::new(2);
        acc.add(&[1.0, 0.0], 3.0, 1.0);
        acc.add(&[0.0, 2.0], 4.0, 1.0);
        let theta = acc.solve_normalized(0.0);
        assert_abs_diff_eq!(theta[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(theta[1], 2.0, epsilon = 1e-12);
        acc.sub(&[0.0, 2.0], 4.0, 1.0);
        assert_abs_diff_eq!(acc.total_weight(), 1.0);
    }

    #[test]
    fn large_ridge_shrinks_to_zero() {
        let mut acc = RidgeAccumulator::<f64>::new(1);
        acc.add(&[1.0], 5.0, 1.0);
        assert!(acc.solve_normalized(1e12)[0].abs() < 1e-10);
    }
}
