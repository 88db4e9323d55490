//! Strictly decreasing nonparametric estimation of the drift of a recurrent
//! diffusion `dX = a(X) dt + σ(X) dW` from independent copies of a path.
//!
//! The pipeline is:
//!
//! 1. [`sde`]: simulate `N` Euler–Maruyama copies of a model.
//! 2. [`nadaraya`]: copies-based Nadaraya–Watson estimate `â_η` with `η`
//!    chosen by leave-one-out cross-validation.
//! 3. [`monotone`]: kernel-smoothed monotonization of `â_η` into a strictly
//!    decreasing estimate, with `(ℓ, h)` chosen adaptively.
//! 4. [`experiment`]: repeated Monte-Carlo runs with integrated errors.
//!
//! All numerics are generic over [`Scalar`] (`f32`, `f64`); the `*64`
//! aliases below fix the common double-precision case.
//!
//! ```
//! use monodrift::{builtin_model, nw_drift, simulate_copies, EstimatorConfig64};
//!
//! let model = builtin_model::<f64>("A").unwrap();
//! let paths = simulate_copies(&model, 50, 50, 5.0, 1).unwrap();
//! let curve = nw_drift(&paths, &EstimatorConfig64::default(), 0.4).unwrap();
//! assert_eq!(curve.len(), 200);
//! ```

pub mod error;
pub mod experiment;
pub mod io;
pub mod kernel;
pub mod monotone;
pub mod nadaraya;
pub mod quadrature;
pub mod scalar;
pub mod sde;

pub use error::{Error, Result};
pub use experiment::{
    emit_figure_data, integrated_l1_error, run_experiment, run_experiment_with_curves, run_repetition,
    write_figure_files, BandwidthPolicy, ExperimentReport, ExperimentSpec, FailedRepetition, RepetitionRow,
};
pub use kernel::Kernel;
pub use monotone::{
    inverse_estimate, lh_criteria, lh_criterion, monotone_estimate, practical_estimate, select_lh_adaptive,
    smooth_inverse_oracle, smooth_monotone_oracle, BandwidthPair, Endpoints, EstimatorMode, MonotoneFit,
    MonotoneInput,
};
pub use nadaraya::{
    af_estimate, density_estimate, loocv_criteria, loocv_criterion, nw_curve, nw_drift, nw_value,
    select_eta_loocv, CurveOnGrid, EstimatorConfig,
};
pub use scalar::Scalar;
pub use sde::{
    builtin_model, extract_copies_from_long_path, simulate_copies, LongPathCopies, PathBundle, SdeModel,
};

pub type EstimatorConfig64 = EstimatorConfig<f64>;
pub type EstimatorConfig32 = EstimatorConfig<f32>;
pub type PathBundle64 = PathBundle<f64>;
pub type PathBundle32 = PathBundle<f32>;
pub type CurveOnGrid64 = CurveOnGrid<f64>;
pub type CurveOnGrid32 = CurveOnGrid<f32>;
pub type SdeModel64 = SdeModel<f64>;
pub type SdeModel32 = SdeModel<f32>;
pub type MonotoneInput64 = MonotoneInput<f64>;
pub type BandwidthPair64 = BandwidthPair<f64>;
pub type ExperimentSpec64 = ExperimentSpec<f64>;
pub type ExperimentReport64 = ExperimentReport<f64>;
