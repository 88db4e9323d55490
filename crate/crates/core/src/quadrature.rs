//! Uniform grids and trapezoid quadrature.

use crate::scalar::Scalar;

/// Abscissa `i` of the uniform grid with `n` points spanning `[lo, hi]`.
#[inline]
pub fn grid_point<T: Scalar>(lo: T, hi: T, n: usize, i: usize) -> T {
    if i + 1 == n {
        return hi;
    }
    lo + (hi - lo) * T::from_count(i) / T::from_count(n - 1)
}

/// `n ≥ 2` equally spaced points from `lo` to `hi`, endpoints included.
pub fn uniform_grid<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    (0..n).map(|i| grid_point(lo, hi, n, i)).collect()
}

/// Trapezoid weights for `n` uniformly spaced points with spacing `step`.
pub fn trapezoid_weights<T: Scalar>(n: usize, step: T) -> Vec<T> {
    let mut w = vec![step; n];
    if let Some(first) = w.first_mut() {
        *first = step * T::half();
    }
    if n > 1 {
        w[n - 1] = step * T::half();
    }
    w
}

/// Trapezoid rule over samples at uniform spacing `step`.
pub fn trapezoid<T: Scalar>(values: &[T], step: T) -> T {
    match values.len() {
        0 | 1 => T::zero(),
        n => {
            let inner: T = values[1..n - 1].iter().copied().sum();
            step * (inner + T::half() * (values[0] + values[n - 1]))
        }
    }
}

/// Trapezoid rule on `[lo, hi]` with the number of intervals doubled until two
/// successive estimates differ by less than `tol`. `min_intervals` sets the
/// coarsest resolution considered converged, which keeps narrow features from
/// slipping between the nodes of an early, coarse grid.
pub fn adaptive_trapezoid<T: Scalar>(
    f: impl Fn(T) -> T,
    lo: T,
    hi: T,
    tol: T,
    min_intervals: usize,
) -> T {
    const MAX_INTERVALS: usize = 1 << 24;
    if hi <= lo {
        return T::zero();
    }
    let width = hi - lo;
    let mut n = 1usize;
    let sum_ends = T::half() * (f(lo) + f(hi));
    let mut sum_inner = T::zero();
    let mut estimate = width * sum_ends;
    loop {
        // add the midpoints of the current intervals
        let step = width / T::from_count(n);
        let mut mids = T::zero();
        for i in 0..n {
            mids += f(lo + step * (T::from_count(i) + T::half()));
        }
        sum_inner += mids;
        n *= 2;
        let next = width / T::from_count(n) * (sum_ends + sum_inner);
        let converged = (next - estimate).abs() < tol && n >= min_intervals;
        estimate = next;
        if converged || n >= MAX_INTERVALS {
            return estimate;
        }
    }
}
