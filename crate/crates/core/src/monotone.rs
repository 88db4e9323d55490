//! Kernel-smoothed monotonization of a tabulated estimate `b̂` of a strictly
//! decreasing function `b` on `I_{2ε}`.
//!
//! Two smoothing passes produce a C¹, strictly decreasing estimate on `I_0`:
//!
//! ```text
//! b̂⁻¹_h(w)  = l_{2ε} + ∫_{I_{2ε}} 𝒦((b̂(z) - w)/h) dz
//! b̂_{ℓ,h}(x) = b(r_ε) + ∫_{b(r_ε)}^{b(l_ε)} 𝒦((b̂⁻¹_h(z) - x)/ℓ) dz
//! ```
//!
//! Each line is the closed-form inner integral of a double integral
//! `∫∫_{-∞}^{-·} K_h(-b̂(z) - y) dy dz` (resp. with `K_ℓ` and `b̂⁻¹_h`), so a
//! single quadrature dimension remains.
//!
//! In oracle mode the endpoint values `b(r_ε)`, `b(l_ε)` are supplied. In
//! practical mode they are read off the curve, and the estimate is set to
//! zero unless the slope event
//! `b̂(r_ε) - b̂(l_ε) ≤ -(m_b/2)(r_ε - l_ε)` holds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{check_bandwidth, Kernel};
use crate::nadaraya::{CurveOnGrid, EstimatorConfig};
use crate::quadrature::{adaptive_trapezoid, grid_point, trapezoid, trapezoid_weights};
use crate::scalar::Scalar;

/// Values of `b` at the ends of `I_ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Endpoints<T> {
    /// `b(r_ε)`, the lower end of the range since `b` decreases.
    pub at_right: T,
    /// `b(l_ε)`.
    pub at_left: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthPair<T> {
    pub ell: T,
    pub h: T,
}

impl<T: Scalar> BandwidthPair<T> {
    pub fn new(ell: T, h: T) -> Self {
        BandwidthPair { ell, h }
    }

    /// All pairs `(ℓ, h)` with both components drawn from `values`.
    pub fn square_grid(values: &[T]) -> Vec<Self> {
        values
            .iter()
            .flat_map(|&ell| values.iter().map(move |&h| BandwidthPair { ell, h }))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    /// Endpoint values of the true function are known.
    #[default]
    Oracle,
    /// Endpoint values estimated from the curve, gated by the slope event.
    Practical,
}

impl fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorMode::Oracle => "oracle",
            EstimatorMode::Practical => "practical",
        })
    }
}

impl FromStr for EstimatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "oracle" => Ok(EstimatorMode::Oracle),
            "practical" => Ok(EstimatorMode::Practical),
            other => Err(Error::invalid(format!(
                "unknown mode `{other}`, expected oracle or practical"
            ))),
        }
    }
}

/// A tabulated estimate on `I_{2ε}` plus what the monotonization needs to
/// know about the target.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneInput<T> {
    pub curve: CurveOnGrid<T>,
    pub cfg: EstimatorConfig<T>,
    pub endpoints: Option<Endpoints<T>>,
    /// Slope bound: `b' ≤ -m_b` on `I_{2ε}`.
    pub m_b: T,
}

impl<T: Scalar> MonotoneInput<T> {
    pub fn new(curve: CurveOnGrid<T>, cfg: EstimatorConfig<T>, endpoints: Option<Endpoints<T>>, m_b: T) -> Result<Self> {
        cfg.validate()?;
        let (lo, hi) = cfg.i_2eps();
        if !curve.spans(lo, hi) {
            return Err(Error::invalid(format!(
                "input curve spans [{}, {}] but must span I_2eps = [{lo}, {hi}]",
                curve.lo(),
                curve.hi()
            )));
        }
        if !(m_b > T::zero() && m_b.is_finite()) {
            return Err(Error::invalid(format!("slope bound m_b must be positive, got {m_b}")));
        }
        if let Some(e) = endpoints {
            if !(e.at_left > e.at_right) {
                return Err(Error::invalid(format!(
                    "endpoint values must satisfy b(l_eps) > b(r_eps), got {} <= {}",
                    e.at_left, e.at_right
                )));
            }
        }
        Ok(MonotoneInput { curve, cfg, endpoints, m_b })
    }

    /// `b̂(r_ε)` and `b̂(l_ε)`, linearly interpolated from the curve.
    pub fn estimated_endpoints(&self) -> Endpoints<T> {
        let (l, r) = self.cfg.i_eps();
        Endpoints {
            at_right: self.curve.interpolate(r),
            at_left: self.curve.interpolate(l),
        }
    }

    /// The slope event `b̂(r_ε) - b̂(l_ε) ≤ -(m_b/2)(r_ε - l_ε)`.
    pub fn omega_holds(&self) -> bool {
        let e = self.estimated_endpoints();
        let (l, r) = self.cfg.i_eps();
        e.at_right - e.at_left <= -(self.m_b * T::half()) * (r - l)
    }

    fn check_pair(&self, bw: BandwidthPair<T>) -> Result<()> {
        check_bandwidth(bw.ell)?;
        check_bandwidth(bw.h)?;
        if self.cfg.theory_strict {
            let cap = T::one().min(self.m_b) * self.cfg.eps;
            if bw.ell >= cap || bw.h >= cap {
                return Err(Error::invalid(format!(
                    "theory-strict mode requires ell, h < min(1, m_b)*eps = {cap}, got ell = {}, h = {}",
                    bw.ell, bw.h
                )));
            }
        }
        Ok(())
    }
}

/// `l_{2ε} + ∫_{I_{2ε}} 𝒦((b̂(z) - w)/h) dz` by the trapezoid rule on the curve grid.
fn inverse_at<T: Scalar>(curve: &CurveOnGrid<T>, kernel: Kernel, inv_h: T, w: T) -> T {
    let step = curve.step();
    let vals = curve.values();
    let n = vals.len();
    let mut inner = T::zero();
    for &b in &vals[1..n - 1] {
        inner += kernel.cdf((b - w) * inv_h);
    }
    let ends = kernel.cdf((vals[0] - w) * inv_h) + kernel.cdf((vals[n - 1] - w) * inv_h);
    let integral = step * (inner + T::half() * ends);
    (curve.lo() + integral).max(curve.lo()).min(curve.hi())
}

/// Smoothed generalised inverse `b̂⁻¹_h(w)`; lies in `I_{2ε}`.
pub fn inverse_estimate<T: Scalar>(inp: &MonotoneInput<T>, h: T, w: T) -> Result<T> {
    check_bandwidth(h)?;
    Ok(inverse_at(&inp.curve, inp.cfg.kernel, T::one() / h, w))
}

/// The monotone estimate for one bandwidth pair, with the smoothed inverse
/// pre-tabulated on the outer integration grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneFit<T> {
    base: T,
    weights: Vec<T>,
    inverse: Vec<T>,
    ell: T,
    kernel: Kernel,
    active: bool,
}

impl<T: Scalar> MonotoneFit<T> {
    /// Builds the estimator for `bw` in the given mode.
    pub fn new(inp: &MonotoneInput<T>, bw: BandwidthPair<T>, mode: EstimatorMode) -> Result<Self> {
        inp.check_pair(bw)?;
        let (endpoints, active) = resolve_endpoints(inp, mode)?;
        let inverse = inverse_table(inp, bw.h, endpoints);
        Ok(Self::from_inverse(inp, bw.ell, endpoints, active, inverse))
    }

    fn from_inverse(inp: &MonotoneInput<T>, ell: T, endpoints: Endpoints<T>, active: bool, inverse: Vec<T>) -> Self {
        let n = inp.cfg.z_grid_points;
        let dz = (endpoints.at_left - endpoints.at_right) / T::from_count(n - 1);
        MonotoneFit {
            base: endpoints.at_right,
            weights: trapezoid_weights(n, dz),
            inverse,
            ell,
            kernel: inp.cfg.kernel,
            active,
        }
    }

    /// `false` when the practical estimator's slope event failed and the
    /// estimate is identically zero.
    pub fn is_active(&self) -> bool {
        self.active
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        if !self.active {
            return T::zero();
        }
        let inv_ell = T::one() / self.ell;
        let mut acc = T::zero();
        for (&w, &c) in self.weights.iter().zip(&self.inverse) {
            acc += w * self.kernel.cdf((c - x) * inv_ell);
        }
        self.base + acc
    }

    pub fn tabulate(&self, lo: T, hi: T, n: usize) -> Result<CurveOnGrid<T>> {
        CurveOnGrid::from_fn(lo, hi, n, |x| self.eval(x))
    }
}

fn resolve_endpoints<T: Scalar>(inp: &MonotoneInput<T>, mode: EstimatorMode) -> Result<(Endpoints<T>, bool)> {
    match mode {
        EstimatorMode::Oracle => inp.endpoints.map(|e| (e, true)).ok_or_else(|| {
            Error::Precondition(
                "oracle mode needs the endpoint values b(l_eps), b(r_eps); use the practical estimator when they are unknown"
                    .into(),
            )
        }),
        EstimatorMode::Practical => Ok((inp.estimated_endpoints(), inp.omega_holds())),
    }
}

/// `b̂⁻¹_h` on the `z_grid_points` uniform nodes of `[b(r_ε), b(l_ε)]`.
fn inverse_table<T: Scalar>(inp: &MonotoneInput<T>, h: T, e: Endpoints<T>) -> Vec<T> {
    let n = inp.cfg.z_grid_points;
    let inv_h = T::one() / h;
    (0..n)
        .map(|j| inverse_at(&inp.curve, inp.cfg.kernel, inv_h, grid_point(e.at_right, e.at_left, n, j)))
        .collect()
}

/// `b̂_{ℓ,h}(x)` with the known endpoint values.
pub fn monotone_estimate<T: Scalar>(inp: &MonotoneInput<T>, bw: BandwidthPair<T>, x: T) -> Result<T> {
    Ok(MonotoneFit::new(inp, bw, EstimatorMode::Oracle)?.eval(x))
}

/// `b̃_{ℓ,h}(x)`: endpoints from the curve, zero off the slope event.
pub fn practical_estimate<T: Scalar>(inp: &MonotoneInput<T>, bw: BandwidthPair<T>, x: T) -> Result<T> {
    Ok(MonotoneFit::new(inp, bw, EstimatorMode::Practical)?.eval(x))
}

/// `∫_{I_0} |b̂_{ℓ,h} - b̂|` on the `eval_points` grid of `I_0`.
pub fn lh_criterion<T: Scalar>(inp: &MonotoneInput<T>, bw: BandwidthPair<T>, mode: EstimatorMode) -> Result<T> {
    let fit = MonotoneFit::new(inp, bw, mode)?;
    Ok(distance_on_i0(inp, &fit))
}

fn distance_on_i0<T: Scalar>(inp: &MonotoneInput<T>, fit: &MonotoneFit<T>) -> T {
    let (lo, hi) = inp.cfg.i0();
    let n = inp.cfg.eval_points;
    let diffs: Vec<T> = (0..n)
        .map(|i| {
            let x = grid_point(lo, hi, n, i);
            (fit.eval(x) - inp.curve.interpolate(x)).abs()
        })
        .collect();
    trapezoid(&diffs, (hi - lo) / T::from_count(n - 1))
}

/// Minimiser of [`lh_criterion`] over `grid`; ties resolved toward the
/// lexicographically smallest `(ℓ, h)`.
pub fn select_lh_adaptive<T: Scalar>(
    inp: &MonotoneInput<T>,
    grid: &[BandwidthPair<T>],
    mode: EstimatorMode,
) -> Result<BandwidthPair<T>> {
    Ok(lh_criteria(inp, grid, mode)?
        .into_iter()
        .fold(None, |best: Option<(BandwidthPair<T>, T)>, (bw, c)| match best {
            None => Some((bw, c)),
            Some((b, bc)) => {
                let lex_smaller = bw.ell < b.ell || (bw.ell == b.ell && bw.h < b.h);
                if c < bc || (c == bc && lex_smaller) {
                    Some((bw, c))
                } else {
                    Some((b, bc))
                }
            }
        })
        .expect("grid is non-empty")
        .0)
}

/// Criterion value for every candidate, in grid order. Smoothed inverses are
/// shared between candidates with equal `h`.
pub fn lh_criteria<T: Scalar>(
    inp: &MonotoneInput<T>,
    grid: &[BandwidthPair<T>],
    mode: EstimatorMode,
) -> Result<Vec<(BandwidthPair<T>, T)>> {
    if grid.is_empty() {
        return Err(Error::invalid("bandwidth grid is empty"));
    }
    for &bw in grid {
        inp.check_pair(bw)?;
    }
    let (endpoints, active) = resolve_endpoints(inp, mode)?;
    let mut cache: Vec<(T, Vec<T>)> = Vec::new();
    let mut out = Vec::with_capacity(grid.len());
    for &bw in grid {
        let inverse = match cache.iter().find(|(h, _)| *h == bw.h) {
            Some((_, tab)) => tab.clone(),
            None => {
                let tab = inverse_table(inp, bw.h, endpoints);
                cache.push((bw.h, tab.clone()));
                tab
            }
        };
        let fit = MonotoneFit::from_inverse(inp, bw.ell, endpoints, active, inverse);
        out.push((bw, distance_on_i0(inp, &fit)));
    }
    Ok(out)
}

const ORACLE_TOL: f64 = 1e-8;

fn oracle_min_intervals<T: Scalar>(width: T, bandwidth: T) -> usize {
    let n = (T::lit(32.0) * width / bandwidth).ceil().to_usize().unwrap_or(usize::MAX);
    n.clamp(64, 1 << 22).next_power_of_two()
}

/// `𝔟_h⁻¹(w) = l_{2ε} + ∫_{I_{2ε}} 𝒦((b(z) - w)/h) dz` for an exactly known `b`,
/// by adaptive trapezoid quadrature.
pub fn smooth_inverse_oracle<T: Scalar>(b: impl Fn(T) -> T, cfg: &EstimatorConfig<T>, h: T, w: T) -> T {
    let (lo, hi) = cfg.i_2eps();
    let inv_h = T::one() / h;
    let kernel = cfg.kernel;
    let integral = adaptive_trapezoid(
        |z| kernel.cdf((b(z) - w) * inv_h),
        lo,
        hi,
        T::lit(ORACLE_TOL),
        oracle_min_intervals(hi - lo, h),
    );
    lo + integral
}

/// `b_ℓ(x) = b(r_ε) + ∫_{b(r_ε)}^{b(l_ε)} 𝒦((b⁻¹(z) - x)/ℓ) dz` for an exactly
/// known, strictly decreasing `b`; `b⁻¹` is found by bisection on `I_{2ε}`.
pub fn smooth_monotone_oracle<T: Scalar>(b: impl Fn(T) -> T, cfg: &EstimatorConfig<T>, ell: T, x: T) -> T {
    let (l_eps, r_eps) = cfg.i_eps();
    let (lo2, hi2) = cfg.i_2eps();
    let (z_lo, z_hi) = (b(r_eps), b(l_eps));
    let inv_ell = T::one() / ell;
    let kernel = cfg.kernel;
    let inverse = |z: T| decreasing_inverse(&b, z, lo2, hi2);
    let integral = adaptive_trapezoid(
        |z| kernel.cdf((inverse(z) - x) * inv_ell),
        z_lo,
        z_hi,
        T::lit(ORACLE_TOL),
        oracle_min_intervals(z_hi - z_lo, ell),
    );
    z_lo + integral
}

/// Solves `b(s) = z` for decreasing `b` on `[lo, hi]`, clamping outside the range.
fn decreasing_inverse<T: Scalar>(b: impl Fn(T) -> T, z: T, lo: T, hi: T) -> T {
    let (mut a, mut c) = (lo, hi);
    if z >= b(a) {
        return a;
    }
    if z <= b(c) {
        return c;
    }
    for _ in 0..200 {
        let mid = T::half() * (a + c);
        if mid <= a || mid >= c {
            break;
        }
        if b(mid) > z {
            a = mid;
        } else {
            c = mid;
        }
    }
    T::half() * (a + c)
}
