//! Smoothing kernels: density `K`, derivative `K'`, and distribution function
//! `𝒦(w) = ∫_{-∞}^w K(y) dy`, with the usual bandwidth rescaling
//! `K_η(u) = K(u/η)/η`.
//!
//! Two families are available. The Gaussian kernel is the default and is the
//! one used in the simulation study; the triweight kernel
//! `(35/32)(1-u²)³ 1_{|u|≤1}` is compactly supported on `[-1, 1]` and twice
//! continuously differentiable.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_677_939_946_059_934_f64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Gaussian,
    Triweight,
}

impl Kernel {
    pub const ALL: [Kernel; 2] = [Kernel::Gaussian, Kernel::Triweight];

    /// `K(u)`.
    #[inline]
    pub fn pdf<T: Scalar>(self, u: T) -> T {
        match self {
            Kernel::Gaussian => T::lit(FRAC_1_SQRT_2PI) * (-(u * u) * T::half()).exp(),
            Kernel::Triweight => {
                if u.abs() >= T::one() {
                    T::zero()
                } else {
                    let s = T::one() - u * u;
                    T::lit(35.0 / 32.0) * s * s * s
                }
            }
        }
    }

    /// `K_η(u) = K(u/η)/η`; the bandwidth must be positive and finite.
    pub fn pdf_scaled<T: Scalar>(self, u: T, bandwidth: T) -> Result<T> {
        check_bandwidth(bandwidth)?;
        Ok(self.pdf_scaled_unchecked(u, bandwidth))
    }

    #[inline]
    pub(crate) fn pdf_scaled_unchecked<T: Scalar>(self, u: T, bandwidth: T) -> T {
        self.pdf(u / bandwidth) / bandwidth
    }

    /// `K'(u)`.
    #[inline]
    pub fn pdf_derivative<T: Scalar>(self, u: T) -> T {
        match self {
            Kernel::Gaussian => -u * self.pdf(u),
            Kernel::Triweight => {
                if u.abs() >= T::one() {
                    T::zero()
                } else {
                    let s = T::one() - u * u;
                    -T::lit(105.0 / 16.0) * u * s * s
                }
            }
        }
    }

    /// `𝒦(u)`, in closed form.
    #[inline]
    pub fn cdf<T: Scalar>(self, u: T) -> T {
        match self {
            // Φ(u) = erfc(-u/√2)/2 keeps full relative accuracy in the lower tail.
            Kernel::Gaussian => T::half() * (-u * T::FRAC_1_SQRT_2()).erfc(),
            Kernel::Triweight => {
                if u <= -T::one() {
                    T::zero()
                } else if u >= T::one() {
                    T::one()
                } else {
                    let u2 = u * u;
                    // (35u - 35u³ + 21u⁵ - 5u⁷)/32
                    let poly = u * (T::lit(35.0) + u2 * (T::lit(-35.0) + u2 * (T::lit(21.0) + u2 * T::lit(-5.0))));
                    (T::half() + poly / T::lit(32.0)).max(T::zero()).min(T::one())
                }
            }
        }
    }

    /// `∫ |y| K(y) dy`, the constant in the first-order smoothing bias bounds.
    pub fn abs_first_moment<T: Scalar>(self) -> T {
        match self {
            Kernel::Gaussian => (T::two() / T::PI()).sqrt(),
            Kernel::Triweight => T::lit(35.0 / 128.0),
        }
    }

    /// Half-width of the region outside which `pdf` is zero (or negligible for
    /// the Gaussian, where `K(9) < 3e-18`).
    pub fn effective_support<T: Scalar>(self) -> T {
        match self {
            Kernel::Gaussian => T::lit(9.0),
            Kernel::Triweight => T::one(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Gaussian => "gaussian",
            Kernel::Triweight => "triweight",
        }
    }
}

pub(crate) fn check_bandwidth<T: Scalar>(bandwidth: T) -> Result<()> {
    if bandwidth > T::zero() && bandwidth.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("bandwidth must be positive and finite, got {bandwidth}")))
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Kernel::Gaussian),
            "triweight" => Ok(Kernel::Triweight),
            other => Err(Error::invalid(format!(
                "unknown kernel `{other}`, expected one of: gaussian, triweight"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Composite Simpson rule, kept independent of the crate's trapezoid code.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = if n % 2 == 1 { n + 1 } else { n };
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn pdf_point_values() {
        assert_abs_diff_eq!(Kernel::Gaussian.pdf(0.0_f64), 0.398_942_280_401_432_7, epsilon = 1e-15);
        assert_eq!(Kernel::Triweight.pdf(1.0_f64), 0.0);
        assert_eq!(Kernel::Triweight.pdf(-1.5_f64), 0.0);
        assert_abs_diff_eq!(Kernel::Triweight.pdf(0.0_f64), 1.093_75, epsilon = 1e-15);
    }

    #[test]
    fn triweight_normalisation_matches_symbolic_constant() {
        // ∫_{-1}^{1} (1-u²)³ du = 32/35, so the normalised height at 0 is 35/32.
        let raw = simpson(|u| (1.0 - u * u).powi(3), -1.0, 1.0, 2000);
        assert_abs_diff_eq!(raw, 32.0 / 35.0, epsilon = 1e-12);
        assert_abs_diff_eq!(1.0 / raw, Kernel::Triweight.pdf(0.0_f64), epsilon = 1e-12);
    }

    #[test]
    fn scaled_pdf() {
        assert_abs_diff_eq!(Kernel::Gaussian.pdf_scaled(0.0_f64, 0.5).unwrap(), 0.797_884_560_802_865_4, epsilon = 1e-14);
        for k in Kernel::ALL {
            assert_eq!(k.pdf_scaled(0.0_f64, 1.0).unwrap(), k.pdf(0.0));
        }
        assert_eq!(Kernel::Triweight.pdf_scaled(0.6_f64, 0.5).unwrap(), 0.0);
        assert!(Kernel::Gaussian.pdf_scaled(0.0_f64, 0.0).is_err());
        assert!(Kernel::Gaussian.pdf_scaled(0.0_f64, -1.0).is_err());
        assert!(Kernel::Gaussian.pdf_scaled(0.0_f64, f64::NAN).is_err());
    }

    #[test]
    fn cdf_point_values() {
        for k in Kernel::ALL {
            assert_eq!(k.cdf(0.0_f64), 0.5);
        }
        assert_eq!(Kernel::Triweight.cdf(-1.0_f64), 0.0);
        assert_eq!(Kernel::Triweight.cdf(1.0_f64), 1.0);
        let oracle = 0.5 + simpson(|u| Kernel::Gaussian.pdf(u), 0.0, 1.0, 2000);
        assert_abs_diff_eq!(Kernel::Gaussian.cdf(1.0_f64), oracle, epsilon = 1e-8);
        assert_abs_diff_eq!(Kernel::Gaussian.cdf(1.0_f64), 0.841_344_746_068_542_9, epsilon = 1e-15);
    }

    #[test]
    fn pdf_integrates_to_one_at_several_bandwidths() {
        for k in Kernel::ALL {
            for bw in [0.01_f64, 0.1, 1.0] {
                let lim = 10.0 * bw;
                let mass = simpson(|u| k.pdf_scaled(u, bw).unwrap(), -lim, lim, 20_000);
                assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn triweight_is_c2_at_support_edges() {
        let k = Kernel::Triweight;
        for edge in [-1.0_f64, 1.0] {
            assert_eq!(k.pdf(edge), 0.0);
            assert_eq!(k.pdf_derivative(edge), 0.0);
            let inside = edge * (1.0 - 1e-6);
            assert!(k.pdf_derivative(inside).abs() < 1e-9);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for k in Kernel::ALL {
            for u in [-0.9_f64, -0.3, 0.0, 0.2, 0.75] {
                let h = 1e-6;
                let fd = (k.pdf(u + h) - k.pdf(u - h)) / (2.0 * h);
                assert_abs_diff_eq!(k.pdf_derivative(u), fd, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn abs_first_moment_matches_quadrature() {
        for k in Kernel::ALL {
            let m = simpson(|y| y.abs() * k.pdf(y), -10.0, 10.0, 40_000);
            assert_abs_diff_eq!(k.abs_first_moment::<f64>(), m, epsilon = 1e-8);
        }
    }

    #[test]
    fn cdf_matches_quadrature_on_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for k in Kernel::ALL {
            for _ in 0..1000 {
                let u: f64 = rng.random_range(-4.0..4.0);
                let q = simpson(|y| k.pdf(y), -8.0, u, 4000);
                assert!((k.cdf(u) - q).abs() <= 1e-6, "{k} u={u}");
            }
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!("Gaussian".parse::<Kernel>().unwrap(), Kernel::Gaussian);
        assert_eq!("triweight".parse::<Kernel>().unwrap(), Kernel::Triweight);
        let err = "epanechnikov".parse::<Kernel>().unwrap_err().to_string();
        assert!(err.contains("gaussian") && err.contains("triweight"));
    }

    #[test]
    fn f32_kernels_agree_with_f64() {
        for k in Kernel::ALL {
            for u in [-1.2_f32, -0.4, 0.0, 0.3, 0.99] {
                assert!((k.pdf(u) as f64 - k.pdf(u as f64)).abs() < 1e-6);
                assert!((k.cdf(u) as f64 - k.cdf(u as f64)).abs() < 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn pdf_nonnegative_and_symmetric(u in -20.0_f64..20.0) {
            for k in Kernel::ALL {
                prop_assert!(k.pdf(u) >= 0.0);
                prop_assert_eq!(k.pdf(u), k.pdf(-u));
            }
        }

        #[test]
        fn cdf_symmetry(u in -12.0_f64..12.0) {
            for k in Kernel::ALL {
                prop_assert!((k.cdf(u) + k.cdf(-u) - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn cdf_nondecreasing_in_unit_range(a in -12.0_f64..12.0, d in 0.0_f64..3.0) {
            for k in Kernel::ALL {
                let (lo, hi) = (k.cdf(a), k.cdf(a + d));
                prop_assert!(lo <= hi);
                prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
            }
        }
    }
}
