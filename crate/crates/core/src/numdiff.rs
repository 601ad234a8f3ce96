//! Central-difference helpers used wherever a model does not supply analytic
//! derivatives.

use nalgebra::{DMatrix, DVector};

/// Step for coordinate `x` given a relative base step: `base * (1 + |x|)`.
#[inline]
pub fn step_for(base: f64, x: f64) -> f64 {
    base * (1.0 + x.abs())
}

/// Gradient of a scalar function by central differences.
pub fn gradient<F>(f: F, x: &DVector<f64>, base: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut grad = DVector::zeros(x.len());
    let mut probe = x.clone();
    for k in 0..x.len() {
        let h = step_for(base, x[k]);
        probe[k] = x[k] + h;
        let fp = f(&probe);
        probe[k] = x[k] - h;
        let fm = f(&probe);
        probe[k] = x[k];
        grad[k] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Jacobian of a vector function by central differences. Column `k` holds the
/// derivative with respect to `x[k]`.
pub fn jacobian<F>(f: F, x: &DVector<f64>, base: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let mut probe = x.clone();
    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let h = step_for(base, x[k]);
        probe[k] = x[k] + h;
        let fp = f(&probe);
        probe[k] = x[k] - h;
        let fm = f(&probe);
        probe[k] = x[k];
        columns.push((fp - fm) / (2.0 * h));
    }
    if columns.is_empty() {
        return DMatrix::zeros(0, 0);
    }
    DMatrix::from_columns(&columns)
}

/// Partial derivatives of a matrix-valued function, one matrix per coordinate.
pub fn matrix_partials<F>(f: F, x: &DVector<f64>, base: f64) -> Vec<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let mut probe = x.clone();
    (0..x.len())
        .map(|k| {
            let h = step_for(base, x[k]);
            probe[k] = x[k] + h;
            let fp = f(&probe);
            probe[k] = x[k] - h;
            let fm = f(&probe);
            probe[k] = x[k];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_quadratic() {
        let x = DVector::from_vec(vec![1.0, -2.0]);
        let g = gradient(|x| x[0] * x[0] + 3.0 * x[0] * x[1], &x, 1e-6);
        assert!((g[0] - (2.0 - 6.0)).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn jacobian_of_linear_map_is_exact() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let x = DVector::from_vec(vec![0.5, 0.25]);
        let j = jacobian(|x| &a * x, &x, 1e-6);
        assert!((j - a).amax() < 1e-9);
    }
}
