//! Copies-based Nadaraya–Watson estimation of the drift.
//!
//! With `N` paths observed on `[0, T]` and a time window `[t0, T]`:
//!
//! ```text
//! f̂_η(x)  = 1/(N T0) Σ_i ∫_{t0}^{T} K_η(X^i_s - x) ds
//! âf_η(x) = 1/(N T0) Σ_i ∫_{t0}^{T} K_η(X^i_s - x) dX^i_s
//! â_η(x)  = âf_η(x) / f̂_η(x) · 1{f̂_η(x) > m/2}
//! ```
//!
//! where `T0 = T - t0`. Both integrals are discretised with left-endpoint
//! sums over the grid times `t_k ∈ [t0, T - Δ]`, which keeps the stochastic
//! integral non-anticipative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{check_bandwidth, Kernel};
use crate::quadrature::grid_point;
use crate::scalar::Scalar;
use crate::sde::PathBundle;

/// Interval geometry, thresholds and quadrature resolution shared by the
/// estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig<T> {
    /// Left end of the estimation interval `I_0`.
    pub l0: T,
    /// Right end of `I_0`.
    pub r0: T,
    /// Margin: the estimators work on `I_ε` and `I_{2ε}`.
    pub eps: T,
    /// Start of the time window.
    pub t0: T,
    /// Density threshold `m`; `â_η` is zero where `f̂_η ≤ m/2`.
    pub m_threshold: T,
    pub kernel: Kernel,
    /// Resolution of the tabulated curve on `I_{2ε}` and of the outer
    /// integral of the monotone estimator.
    pub z_grid_points: usize,
    /// Resolution of the evaluation grid on `I_0`.
    pub eval_points: usize,
    /// Enforce the bandwidth ranges required by the risk bounds
    /// (`η ≤ 1`, `ℓ, h < min{1, m_b}·ε`).
    pub theory_strict: bool,
}

impl<T: Scalar> Default for EstimatorConfig<T> {
    fn default() -> Self {
        EstimatorConfig {
            l0: -T::one(),
            r0: T::one(),
            eps: T::lit(0.01),
            t0: T::half(),
            m_threshold: T::lit(0.05),
            kernel: Kernel::Gaussian,
            z_grid_points: 200,
            eval_points: 201,
            theory_strict: false,
        }
    }
}

impl<T: Scalar> EstimatorConfig<T> {
    /// Checks the static invariants (everything except `t0 < T`).
    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.l0, self.r0, self.eps, self.t0, self.m_threshold]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::invalid("estimator configuration contains non-finite values"));
        }
        if self.l0 >= self.r0 {
            return Err(Error::invalid(format!("l0 ({}) must be below r0 ({})", self.l0, self.r0)));
        }
        if self.eps <= T::zero() {
            return Err(Error::invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if self.t0 < T::zero() {
            return Err(Error::invalid(format!("t0 must be nonnegative, got {}", self.t0)));
        }
        if !(self.m_threshold > T::zero() && self.m_threshold < T::one()) {
            return Err(Error::invalid(format!(
                "m_threshold must lie in (0, 1), got {}",
                self.m_threshold
            )));
        }
        if self.z_grid_points < 50 {
            return Err(Error::invalid(format!(
                "z_grid_points must be at least 50, got {}",
                self.z_grid_points
            )));
        }
        if self.eval_points < 2 {
            return Err(Error::invalid("eval_points must be at least 2"));
        }
        Ok(())
    }

    /// Validates the configuration against a bundle's horizon.
    pub fn validate_for(&self, horizon: T) -> Result<()> {
        self.validate()?;
        if self.t0 >= horizon {
            return Err(Error::invalid(format!(
                "t0 ({}) must be below the horizon ({horizon})",
                self.t0
            )));
        }
        Ok(())
    }

    /// `I_λ = [l0 - λ, r0 + λ]`.
    pub fn interval(&self, lambda: T) -> (T, T) {
        (self.l0 - lambda, self.r0 + lambda)
    }

    pub fn i0(&self) -> (T, T) {
        (self.l0, self.r0)
    }

    pub fn i_eps(&self) -> (T, T) {
        self.interval(self.eps)
    }

    pub fn i_2eps(&self) -> (T, T) {
        self.interval(self.eps + self.eps)
    }

    /// Bandwidth check for `η`.
    pub fn check_eta(&self, eta: T) -> Result<()> {
        check_bandwidth(eta)?;
        if self.theory_strict && eta > T::one() {
            return Err(Error::invalid(format!("eta must lie in (0, 1], got {eta}")));
        }
        Ok(())
    }
}

/// A real function tabulated at `values.len()` equally spaced abscissae from
/// `lo` to `hi` inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveOnGrid<T> {
    lo: T,
    hi: T,
    values: Vec<T>,
}

impl<T: Scalar> CurveOnGrid<T> {
    pub fn new(lo: T, hi: T, values: Vec<T>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("a tabulated curve needs at least two points"));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("curve span [{lo}, {hi}] is not a proper interval")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("curve value {i} is not finite")));
        }
        Ok(CurveOnGrid { lo, hi, values })
    }

    /// Tabulates `f` on `n` points of `[lo, hi]`.
    pub fn from_fn(lo: T, hi: T, n: usize, f: impl Fn(T) -> T) -> Result<Self> {
        let values = (0..n).map(|i| f(grid_point(lo, hi, n, i))).collect();
        Self::new(lo, hi, values)
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn step(&self) -> T {
        (self.hi - self.lo) / T::from_count(self.values.len() - 1)
    }

    pub fn abscissa(&self, i: usize) -> T {
        grid_point(self.lo, self.hi, self.values.len(), i)
    }

    pub fn abscissae(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.values.len()).map(|i| self.abscissa(i))
    }

    pub fn points(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.abscissae().zip(self.values.iter().copied())
    }

    /// Linear interpolation; constant extrapolation outside the span.
    pub fn interpolate(&self, x: T) -> T {
        let n = self.values.len();
        if x <= self.lo {
            return self.values[0];
        }
        if x >= self.hi {
            return self.values[n - 1];
        }
        let pos = (x - self.lo) / self.step();
        let i = pos.floor().to_usize().unwrap_or(0).min(n - 2);
        let frac = pos - T::from_count(i);
        self.values[i] + (self.values[i + 1] - self.values[i]) * frac
    }

    /// `true` when the span matches `[lo, hi]` up to a few ulps of the width.
    pub fn spans(&self, lo: T, hi: T) -> bool {
        let tol = (hi - lo).abs() * T::lit(1e-9);
        (self.lo - lo).abs() <= tol && (self.hi - hi).abs() <= tol
    }
}

/// Grid indices of the left-endpoint sums over `[t0, T - Δ]`.
#[derive(Clone, Copy, Debug)]
struct TimeWindow<T> {
    first: usize,
    end: usize,
    dt: T,
    /// `1 / (N T0)`
    norm: T,
}

impl<T: Scalar> TimeWindow<T> {
    fn new(paths: &PathBundle<T>, cfg: &EstimatorConfig<T>) -> Result<Self> {
        cfg.validate_for(paths.horizon())?;
        let dt = paths.step();
        // smallest k with k·Δ ≥ t0, tolerant to rounding in t0/Δ
        let ratio = cfg.t0 / dt;
        let mut first = ratio.round().to_usize().unwrap_or(0);
        if T::from_count(first) < ratio - T::lit(1e-9) {
            first = ratio.ceil().to_usize().unwrap_or(0);
        }
        let end = paths.n_steps();
        if first >= end {
            return Err(Error::invalid(format!(
                "time window [t0, T) = [{}, {}) contains no grid step",
                cfg.t0,
                paths.horizon()
            )));
        }
        let t_len = paths.horizon() - cfg.t0;
        let norm = T::one() / (T::from_count(paths.n_paths()) * t_len);
        Ok(TimeWindow { first, end, dt, norm })
    }

    fn steps(&self) -> std::ops::Range<usize> {
        self.first..self.end
    }
}

/// Kernel sums `(Σ K_η(X - x)Δ, Σ K_η(X - x) dX)` for one abscissa, already
/// normalised by `1/(N T0)`.
fn kernel_sums<T: Scalar>(paths: &PathBundle<T>, win: &TimeWindow<T>, kernel: Kernel, eta: T, x: T) -> (T, T) {
    let mut occupation = T::zero();
    let mut drift = T::zero();
    for row in paths.paths() {
        for k in win.steps() {
            let w = kernel.pdf_scaled_unchecked(row[k] - x, eta);
            occupation += w;
            drift += w * (row[k + 1] - row[k]);
        }
    }
    (occupation * win.dt * win.norm, drift * win.norm)
}

/// `f̂_η(x)`.
pub fn density_estimate<T: Scalar>(paths: &PathBundle<T>, cfg: &EstimatorConfig<T>, eta: T, x: T) -> Result<T> {
    cfg.check_eta(eta)?;
    let win = TimeWindow::new(paths, cfg)?;
    Ok(kernel_sums(paths, &win, cfg.kernel, eta, x).0)
}

/// `âf_η(x)`.
pub fn af_estimate<T: Scalar>(paths: &PathBundle<T>, cfg: &EstimatorConfig<T>, eta: T, x: T) -> Result<T> {
    cfg.check_eta(eta)?;
    let win = TimeWindow::new(paths, cfg)?;
    Ok(kernel_sums(paths, &win, cfg.kernel, eta, x).1)
}

#[inline]
fn truncated_ratio<T: Scalar>(num: T, den: T, m_threshold: T) -> T {
    if den > m_threshold * T::half() {
        num / den
    } else {
        T::zero()
    }
}

/// `â_η(x)` at a single abscissa.
pub fn nw_value<T: Scalar>(paths: &PathBundle<T>, cfg: &EstimatorConfig<T>, eta: T, x: T) -> Result<T> {
    cfg.check_eta(eta)?;
    let win = TimeWindow::new(paths, cfg)?;
    let (f, af) = kernel_sums(paths, &win, cfg.kernel, eta, x);
    Ok(truncated_ratio(af, f, cfg.m_threshold))
}

/// `â_η` tabulated on `n_points` of an arbitrary span.
pub fn nw_curve<T: Scalar>(
    paths: &PathBundle<T>,
    cfg: &EstimatorConfig<T>,
    eta: T,
    lo: T,
    hi: T,
    n_points: usize,
) -> Result<CurveOnGrid<T>> {
    cfg.check_eta(eta)?;
    let win = TimeWindow::new(paths, cfg)?;
    CurveOnGrid::from_fn(lo, hi, n_points, |x| {
        let (f, af) = kernel_sums(paths, &win, cfg.kernel, eta, x);
        truncated_ratio(af, f, cfg.m_threshold)
    })
}

/// `â_η` tabulated on `cfg.z_grid_points` points spanning exactly `I_{2ε}`,
/// the input expected by the monotone estimators.
pub fn nw_drift<T: Scalar>(paths: &PathBundle<T>, cfg: &EstimatorConfig<T>, eta: T) -> Result<CurveOnGrid<T>> {
    let (lo, hi) = cfg.i_2eps();
    nw_curve(paths, cfg, eta, lo, hi, cfg.z_grid_points)
}

/// Sample points of the time window, flattened path by path.
struct WindowSamples<T> {
    x: Vec<T>,
    dx: Vec<T>,
    path_of: Vec<usize>,
}

impl<T: Scalar> WindowSamples<T> {
    fn collect(paths: &PathBundle<T>, win: &TimeWindow<T>) -> Self {
        let cap = paths.n_paths() * (win.end - win.first);
        let mut s = WindowSamples {
            x: Vec::with_capacity(cap),
            dx: Vec::with_capacity(cap),
            path_of: Vec::with_capacity(cap),
        };
        for (i, row) in paths.paths().enumerate() {
            for k in win.steps() {
                s.x.push(row[k]);
                s.dx.push(row[k + 1] - row[k]);
                s.path_of.push(i);
            }
        }
        s
    }
}

/// Leave-one-out contrast for one bandwidth:
///
/// ```text
/// Σ_i ( ∫ â_{η,i}(X^i_s)² ds - 2 ∫ â_{η,i}(X^i_s) dX^i_s )
/// ```
///
/// with `â_{η,i} = âf_{η,i} / f̂_η`, where `âf_{η,i}` drops path `i` from the
/// sum but keeps the `1/(N T0)` normalisation, and `â_{η,i} = 0` wherever
/// `f̂_η ≤ m/2`.
pub fn loocv_criterion<T: Scalar>(paths: &PathBundle<T>, cfg: &EstimatorConfig<T>, eta: T) -> Result<T> {
    cfg.check_eta(eta)?;
    let win = TimeWindow::new(paths, cfg)?;
    let samples = WindowSamples::collect(paths, &win);
    Ok(loocv_from_samples(&samples, &win, cfg, eta))
}

fn loocv_from_samples<T: Scalar>(s: &WindowSamples<T>, win: &TimeWindow<T>, cfg: &EstimatorConfig<T>, eta: T) -> T {
    let m = s.x.len();
    let kernel = cfg.kernel;
    let inv_eta = T::one() / eta;
    // occupation[p] = Σ_q K_η(x_q - x_p); drift_all[p] = Σ_q K_η(x_q - x_p) dx_q;
    // drift_own[p] restricts the latter to the path that owns p
    let mut occupation = vec![T::zero(); m];
    let mut drift_all = vec![T::zero(); m];
    let mut drift_own = vec![T::zero(); m];
    for p in 0..m {
        let (xp, dxp, owner) = (s.x[p], s.dx[p], s.path_of[p]);
        let self_w = kernel.pdf(T::zero()) * inv_eta;
        occupation[p] += self_w;
        drift_all[p] += self_w * dxp;
        drift_own[p] += self_w * dxp;
        for q in p + 1..m {
            let w = kernel.pdf((s.x[q] - xp) * inv_eta) * inv_eta;
            occupation[p] += w;
            occupation[q] += w;
            drift_all[p] += w * s.dx[q];
            drift_all[q] += w * dxp;
            if s.path_of[q] == owner {
                drift_own[p] += w * s.dx[q];
                drift_own[q] += w * dxp;
            }
        }
    }
    let mut total = T::zero();
    for p in 0..m {
        let density = occupation[p] * win.dt * win.norm;
        let af_loo = (drift_all[p] - drift_own[p]) * win.norm;
        let a = truncated_ratio(af_loo, density, cfg.m_threshold);
        total += a * a * win.dt - T::two() * a * s.dx[p];
    }
    total
}

/// Contrast values for every candidate in `eta_grid`, in grid order.
pub fn loocv_criteria<T: Scalar>(paths: &PathBundle<T>, cfg: &EstimatorConfig<T>, eta_grid: &[T]) -> Result<Vec<T>> {
    if eta_grid.is_empty() {
        return Err(Error::invalid("eta grid is empty"));
    }
    for &eta in eta_grid {
        cfg.check_eta(eta)?;
    }
    let win = TimeWindow::new(paths, cfg)?;
    let samples = WindowSamples::collect(paths, &win);
    Ok(eta_grid
        .iter()
        .map(|&eta| loocv_from_samples(&samples, &win, cfg, eta))
        .collect())
}

/// The grid bandwidth minimising [`loocv_criterion`]; ties go to the smaller
/// bandwidth.
pub fn select_eta_loocv<T: Scalar>(paths: &PathBundle<T>, cfg: &EstimatorConfig<T>, eta_grid: &[T]) -> Result<T> {
    let crit = loocv_criteria(paths, cfg, eta_grid)?;
    let mut best: Option<(T, T)> = None;
    for (&eta, &c) in eta_grid.iter().zip(&crit) {
        best = match best {
            None => Some((eta, c)),
            Some((be, bc)) if c < bc || (c == bc && eta < be) => Some((eta, c)),
            keep => keep,
        };
    }
    Ok(best.expect("grid is non-empty").0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{builtin_model, simulate_copies, SdeModel};
    use approx::assert_abs_diff_eq;

    fn constant_bundle(n_paths: usize) -> PathBundle<f64> {
        let m = SdeModel::new("still", |_| 0.0, |_| 0.0, 0.5, 1.0);
        simulate_copies(&m, n_paths, 50, 5.0, 0).unwrap()
    }

    fn decay_bundle() -> PathBundle<f64> {
        let m = SdeModel::new("decay", |x: f64| -x, |_| 0.0, 0.5, 1.0);
        simulate_copies(&m, 3, 5000, 5.0, 0).unwrap()
    }

    fn model_a(n: usize, seed: u64) -> PathBundle<f64> {
        simulate_copies(&builtin_model("A").unwrap(), n, 50, 5.0, seed).unwrap()
    }

    #[test]
    fn config_defaults_and_intervals() {
        let cfg = EstimatorConfig::<f64>::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.i_eps(), (-1.01, 1.01));
        assert_eq!(cfg.i_2eps(), (-1.02, 1.02));
        assert!(cfg.validate_for(0.5).is_err());
        let bad = EstimatorConfig { m_threshold: 1.5, ..cfg };
        assert!(bad.validate().is_err());
        let bad = EstimatorConfig { z_grid_points: 10, ..cfg };
        assert!(bad.validate().is_err());
        let bad = EstimatorConfig { l0: 2.0, ..cfg };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn curve_interpolation_and_span() {
        let c = CurveOnGrid::from_fn(-1.0, 1.0, 5, |x: f64| 2.0 * x).unwrap();
        assert_abs_diff_eq!(c.interpolate(0.3), 0.6, epsilon = 1e-14);
        assert_eq!(c.interpolate(-3.0), -2.0);
        assert_eq!(c.interpolate(3.0), 2.0);
        assert!(c.spans(-1.0, 1.0));
        assert!(!c.spans(-1.0, 1.1));
        assert!(CurveOnGrid::new(0.0, 1.0, vec![1.0]).is_err());
        assert!(CurveOnGrid::new(0.0, 1.0, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn constant_paths_collapse_density_to_one_kernel() {
        let b = constant_bundle(3);
        for t0 in [0.0, 0.5, 1.0, 2.5] {
            let cfg = EstimatorConfig { t0, ..Default::default() };
            for x in [-0.7, 0.0, 0.45, 0.5, 1.2] {
                let f = density_estimate(&b, &cfg, 0.3, x).unwrap();
                let k = Kernel::Gaussian.pdf_scaled(0.5 - x, 0.3).unwrap();
                assert_abs_diff_eq!(f, k, epsilon = 1e-12);
                assert_eq!(af_estimate(&b, &cfg, 0.3, x).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn eta_validation() {
        let b = constant_bundle(1);
        let cfg = EstimatorConfig::default();
        assert!(density_estimate(&b, &cfg, 0.0, 0.0).is_err());
        assert!(density_estimate(&b, &cfg, -0.1, 0.0).is_err());
        assert!(density_estimate(&b, &cfg, 1.5, 0.0).is_ok());
        let strict = EstimatorConfig { theory_strict: true, ..cfg };
        assert!(density_estimate(&b, &strict, 1.5, 0.0).is_err());
        assert!(density_estimate(&b, &strict, 1.0, 0.0).is_ok());
    }

    #[test]
    fn deterministic_paths_recover_drift_times_density() {
        let b = decay_bundle();
        let cfg = EstimatorConfig { t0: 0.0, ..Default::default() };
        let x = 0.25;
        let f = density_estimate(&b, &cfg, 0.05, x).unwrap();
        let af = af_estimate(&b, &cfg, 0.05, x).unwrap();
        let target = -x * f;
        assert!(((af - target) / target).abs() < 0.15, "af={af} target={target}");
    }

    #[test]
    fn af_is_linear_in_increments() {
        // one-step synthetic paths: the kernel weights sit on X_0, the increments on X_1 - X_0
        let starts = [-0.4, -0.1, 0.0, 0.2, 0.35, 0.8];
        let incs = [0.3, -0.2, 0.05, -0.4, 0.1, -0.25];
        let bundle = |scale: f64| {
            let rows = starts.iter().zip(&incs).map(|(&x, &d)| vec![x, x + scale * d]).collect();
            PathBundle::from_rows(rows, 1.0, 0).unwrap()
        };
        let cfg = EstimatorConfig { t0: 0.0, ..Default::default() };
        let (single, double) = (bundle(1.0), bundle(2.0));
        for x in [-0.3, 0.0, 0.25] {
            let a1 = af_estimate(&single, &cfg, 0.3, x).unwrap();
            let a2 = af_estimate(&double, &cfg, 0.3, x).unwrap();
            assert_abs_diff_eq!(a2, 2.0 * a1, epsilon = 1e-12);
            assert_eq!(density_estimate(&single, &cfg, 0.3, x).unwrap(), density_estimate(&double, &cfg, 0.3, x).unwrap());
        }
    }

    #[test]
    fn density_estimate_close_to_time_averaged_ou_density() {
        let b = model_a(400, 17);
        let cfg = EstimatorConfig::default();
        let eta = 0.25;
        let f = density_estimate(&b, &cfg, eta, 0.0).unwrap();
        // X_s ~ N(0.5 e^{-s}, (1 - e^{-2s})/2); average the density at 0 over s in [0.5, 5]
        let n = 20_000;
        let (t0, t) = (0.5, 5.0);
        let mut acc = 0.0;
        for i in 0..n {
            let s = t0 + (t - t0) * (i as f64 + 0.5) / n as f64;
            let (mu, var) = (0.5 * (-s).exp(), (1.0 - (-2.0 * s).exp()) / 2.0);
            acc += (-(mu * mu) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        }
        let oracle = acc / n as f64;
        assert!((f - oracle).abs() < 0.1, "f={f} oracle={oracle}");
    }

    #[test]
    fn density_mass_bounded_by_one() {
        let b = model_a(30, 5);
        for kernel in Kernel::ALL {
            let cfg = EstimatorConfig { kernel, ..Default::default() };
            let c = nw_density_curve(&b, &cfg, 0.2, -8.0, 8.0, 4001);
            let mass = crate::quadrature::trapezoid(&c, 16.0 / 4000.0);
            assert!(mass <= 1.0 + 1e-6);
            assert!((mass - 1.0).abs() < 0.02, "{kernel}: {mass}");
        }
    }

    fn nw_density_curve(b: &PathBundle<f64>, cfg: &EstimatorConfig<f64>, eta: f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
        crate::quadrature::uniform_grid(lo, hi, n)
            .into_iter()
            .map(|x| density_estimate(b, cfg, eta, x).unwrap())
            .collect()
    }

    #[test]
    fn nw_truncates_where_density_is_small() {
        let b = model_a(50, 9);
        let cfg = EstimatorConfig::default();
        let c = nw_curve(&b, &cfg, 0.3, -4.0, 4.0, 161).unwrap();
        for (x, v) in c.points() {
            let f = density_estimate(&b, &cfg, 0.3, x).unwrap();
            if f <= cfg.m_threshold / 2.0 {
                assert_eq!(v, 0.0);
            } else {
                let af = af_estimate(&b, &cfg, 0.3, x).unwrap();
                assert_abs_diff_eq!(v, af / f, epsilon = 1e-12);
            }
        }
        // constant paths: far from 0.5 the density vanishes
        let still = constant_bundle(4);
        assert_eq!(nw_value(&still, &cfg, 0.3, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn nw_drift_spans_outer_interval_and_tracks_ou_drift() {
        let b = model_a(100, 4);
        let cfg = EstimatorConfig::default();
        let c = nw_drift(&b, &cfg, 0.3).unwrap();
        assert!(c.spans(-1.02, 1.02));
        assert_eq!(c.len(), cfg.z_grid_points);
        let grid = crate::quadrature::uniform_grid(-1.0, 1.0, 201);
        let mean_err: f64 = grid.iter().map(|&x| (nw_value(&b, &cfg, 0.3, x).unwrap() + x).abs()).sum::<f64>() / 201.0;
        assert!(mean_err < 0.5, "{mean_err}");
    }

    #[test]
    fn shift_equivariance() {
        let b = model_a(10, 12);
        let cfg = EstimatorConfig::default();
        let shifted = b.shifted(0.75);
        for x in [-0.5, 0.0, 0.3] {
            let f = density_estimate(&b, &cfg, 0.2, x).unwrap();
            let fs = density_estimate(&shifted, &cfg, 0.2, x + 0.75).unwrap();
            assert_abs_diff_eq!(f, fs, epsilon = 1e-12);
            let af = af_estimate(&b, &cfg, 0.2, x).unwrap();
            let afs = af_estimate(&shifted, &cfg, 0.2, x + 0.75).unwrap();
            assert_abs_diff_eq!(af, afs, epsilon = 1e-12);
        }
    }

    /// Straightforward transcription of the contrast: every â_{η,i} evaluation
    /// recomputes both kernel sums from scratch.
    fn naive_loocv(b: &PathBundle<f64>, cfg: &EstimatorConfig<f64>, eta: f64) -> f64 {
        let n = b.n_paths();
        let dt = b.step();
        let first = (cfg.t0 / dt).round() as usize;
        let norm = 1.0 / (n as f64 * (b.horizon() - cfg.t0));
        let k = |u: f64| cfg.kernel.pdf(u / eta) / eta;
        let mut total = 0.0;
        for i in 0..n {
            let xi = b.path(i);
            for s in first..b.n_steps() {
                let x = xi[s];
                let mut f = 0.0;
                let mut af = 0.0;
                for j in 0..n {
                    let xj = b.path(j);
                    for t in first..b.n_steps() {
                        f += k(xj[t] - x) * dt;
                        if j != i {
                            af += k(xj[t] - x) * (xj[t + 1] - xj[t]);
                        }
                    }
                }
                let (f, af) = (f * norm, af * norm);
                let a = if f > cfg.m_threshold / 2.0 { af / f } else { 0.0 };
                total += a * a * dt - 2.0 * a * (xi[s + 1] - x);
            }
        }
        total
    }

    #[test]
    fn loocv_matches_naive_transcription() {
        let b = model_a(12, 31);
        for kernel in Kernel::ALL {
            let cfg = EstimatorConfig { kernel, ..Default::default() };
            for eta in [0.1, 0.35, 1.2] {
                let fast = loocv_criterion(&b, &cfg, eta).unwrap();
                let slow = naive_loocv(&b, &cfg, eta);
                assert!((fast - slow).abs() <= 1e-9 * slow.abs().max(1.0), "{kernel} eta={eta}: {fast} vs {slow}");
            }
        }
    }

    #[test]
    fn loocv_invariant_to_path_order() {
        let b = model_a(15, 8);
        let cfg = EstimatorConfig::default();
        let order: Vec<usize> = (0..15).rev().collect();
        let p = b.permuted(&order).unwrap();
        for eta in [0.1, 0.5] {
            let (c1, c2) = (loocv_criterion(&b, &cfg, eta).unwrap(), loocv_criterion(&p, &cfg, eta).unwrap());
            assert!((c1 - c2).abs() <= 1e-12 * c1.abs().max(1.0));
        }
    }

    #[test]
    fn eta_selection() {
        let b = model_a(20, 1);
        let cfg = EstimatorConfig::default();
        assert_eq!(select_eta_loocv(&b, &cfg, &[0.3]).unwrap(), 0.3);
        assert!(select_eta_loocv(&b, &cfg, &[]).is_err());
        let grid: Vec<f64> = (1..=8).map(|l| 0.1 * l as f64).collect();
        let crit = loocv_criteria(&b, &cfg, &grid).unwrap();
        let chosen = select_eta_loocv(&b, &cfg, &grid).unwrap();
        let idx = grid.iter().position(|&g| g == chosen).unwrap();
        assert!(crit.iter().all(|&c| c >= crit[idx]));
        // frozen paths make every contrast zero: the smallest bandwidth wins the tie
        let still = constant_bundle(3);
        assert!(loocv_criteria(&still, &cfg, &[0.5, 0.2, 0.9]).unwrap().iter().all(|&c| c == 0.0));
        assert_eq!(select_eta_loocv(&still, &cfg, &[0.5, 0.2, 0.9]).unwrap(), 0.2);
    }

    #[test]
    fn eta_selection_on_study_grid() {
        let b = model_a(100, 77);
        let cfg = EstimatorConfig::default();
        let grid: Vec<f64> = (1..=35).map(|l| 0.05 * l as f64).collect();
        let eta = select_eta_loocv(&b, &cfg, &grid).unwrap();
        assert!((0.05..=1.75).contains(&eta));
    }
}
