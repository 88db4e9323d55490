//! Euler–Maruyama simulation of one-dimensional diffusions
//! `dX_t = a(X_t) dt + σ(X_t) dW_t`, `X_0 = x0`, observed on a uniform grid.
//!
//! Paths are generated with one ChaCha stream per path index, so path `i` of a
//! bundle does not depend on how many other paths are requested or on the
//! order in which they are produced.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type CoefficientFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Names accepted by [`builtin_model`].
pub const BUILTIN_MODELS: [&str; 2] = ["A", "B"];

/// Stream id reserved for the single long trajectory used by
/// [`extract_copies_from_long_path`].
const LONG_PATH_STREAM: u64 = u64::MAX;

#[derive(Clone)]
pub struct SdeModel<T> {
    drift: CoefficientFn<T>,
    vol: CoefficientFn<T>,
    pub x0: T,
    pub label: String,
    /// Lower bound on `-a'` over the working interval.
    pub m_a: T,
}

impl<T: Scalar> SdeModel<T> {
    pub fn new(
        label: impl Into<String>,
        drift: impl Fn(T) -> T + Send + Sync + 'static,
        vol: impl Fn(T) -> T + Send + Sync + 'static,
        x0: T,
        m_a: T,
    ) -> Self {
        SdeModel {
            drift: Arc::new(drift),
            vol: Arc::new(vol),
            x0,
            label: label.into(),
            m_a,
        }
    }

    #[inline]
    pub fn drift(&self, x: T) -> T {
        (self.drift)(x)
    }

    #[inline]
    pub fn vol(&self, x: T) -> T {
        (self.vol)(x)
    }

    pub fn drift_fn(&self) -> CoefficientFn<T> {
        Arc::clone(&self.drift)
    }
}

impl<T: Scalar> fmt::Debug for SdeModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeModel")
            .field("label", &self.label)
            .field("x0", &self.x0)
            .field("m_a", &self.m_a)
            .finish_non_exhaustive()
    }
}

/// The two models of the simulation study.
///
/// * `A`: `a(x) = -x`, `σ ≡ 1`, `x0 = 0.5` (Ornstein–Uhlenbeck), `m_a = 1`.
/// * `B`: `a(x) = sin(5x/4) - 3x/2`, `σ ≡ 1`, `x0 = 0.5`, `m_a = 1/4`.
pub fn builtin_model<T: Scalar>(name: &str) -> Result<SdeModel<T>> {
    let half = T::half();
    match name.trim() {
        "A" | "a" => Ok(SdeModel::new("A", |x: T| -x, |_| T::one(), half, T::one())),
        "B" | "b" => Ok(SdeModel::new(
            "B",
            |x: T| (T::lit(1.25) * x).sin() - T::lit(1.5) * x,
            |_| T::one(),
            half,
            T::lit(0.25),
        )),
        other => Err(Error::invalid(format!(
            "unknown model `{other}`, valid names are: {}",
            BUILTIN_MODELS.join(", ")
        ))),
    }
}

/// `n_paths` discretised trajectories on the grid `k·T/n_steps`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PathBundle<T> {
    n_paths: usize,
    n_steps: usize,
    horizon: T,
    seed: u64,
    values: Vec<T>,
}

impl<T: Scalar> PathBundle<T> {
    /// Builds a bundle from rows of `n_steps + 1` values each.
    pub fn from_rows(rows: Vec<Vec<T>>, horizon: T, seed: u64) -> Result<Self> {
        let n_paths = rows.len();
        if n_paths == 0 {
            return Err(Error::invalid("a path bundle needs at least one path"));
        }
        let width = rows[0].len();
        if width < 2 {
            return Err(Error::invalid("each path needs at least two grid values"));
        }
        if !(horizon > T::zero() && horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        let mut values = Vec::with_capacity(n_paths * width);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != width {
                return Err(Error::invalid(format!(
                    "path {i} has {} values, expected {width}",
                    row.len()
                )));
            }
            if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("path {i} has a non-finite value at step {k}")));
            }
            values.extend(row);
        }
        Ok(PathBundle {
            n_paths,
            n_steps: width - 1,
            horizon,
            seed,
            values,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Grid spacing `T / n_steps`.
    pub fn step(&self) -> T {
        self.horizon / T::from_count(self.n_steps)
    }

    /// Values of path `i` at the `n_steps + 1` grid times.
    pub fn path(&self, i: usize) -> &[T] {
        let w = self.n_steps + 1;
        &self.values[i * w..(i + 1) * w]
    }

    pub fn paths(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.values.chunks_exact(self.n_steps + 1)
    }

    pub fn into_rows(self) -> Vec<Vec<T>> {
        self.values
            .chunks_exact(self.n_steps + 1)
            .map(<[T]>::to_vec)
            .collect()
    }

    /// Same bundle with path order permuted: row `j` of the result is row
    /// `order[j]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n_paths {
            return Err(Error::invalid("permutation length differs from path count"));
        }
        let rows = order.iter().map(|&i| self.path(i).to_vec()).collect();
        Self::from_rows(rows, self.horizon, self.seed)
    }

    /// Adds `shift` to every stored value.
    pub fn shifted(&self, shift: T) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v += shift);
        out
    }
}

fn check_dims<T: Scalar>(n_paths: usize, n_steps: usize, horizon: T) -> Result<()> {
    if n_paths == 0 {
        return Err(Error::invalid("number of paths must be at least 1"));
    }
    if n_steps == 0 {
        return Err(Error::invalid("number of steps must be at least 1"));
    }
    if !(horizon > T::zero() && horizon.is_finite()) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    Ok(())
}

fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One Euler–Maruyama step.
#[inline]
fn euler_step<T: Scalar>(model: &SdeModel<T>, x: T, dt: T, sqrt_dt: T, rng: &mut ChaCha8Rng) -> T {
    let z = T::standard_normal(rng);
    x + model.drift(x) * dt + model.vol(x) * sqrt_dt * z
}

/// `n_paths` independent Euler–Maruyama paths on `[0, horizon]` with
/// `n_steps` steps, all started at `model.x0`.
pub fn simulate_copies<T: Scalar>(
    model: &SdeModel<T>,
    n_paths: usize,
    n_steps: usize,
    horizon: T,
    seed: u64,
) -> Result<PathBundle<T>> {
    check_dims(n_paths, n_steps, horizon)?;
    let dt = horizon / T::from_count(n_steps);
    let sqrt_dt = dt.sqrt();
    let rows = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            let mut row = Vec::with_capacity(n_steps + 1);
            let mut x = model.x0;
            row.push(x);
            for k in 0..n_steps {
                x = euler_step(model, x, dt, sqrt_dt, &mut rng);
                if !x.is_finite() {
                    return Err(Error::SimulationDiverged { path: i, step: k + 1 });
                }
                row.push(x);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    PathBundle::from_rows(rows, horizon, seed)
}

/// Copies cut out of a single long trajectory at successive returns to `x0`.
#[derive(Clone, Debug)]
pub struct LongPathCopies<T> {
    pub bundle: PathBundle<T>,
    /// Index in `long_path` where each copy starts.
    pub starts: Vec<usize>,
    /// The simulated trajectory, up to the end of the last copy.
    pub long_path: Vec<T>,
}

/// Default step budget for [`extract_copies_from_long_path`].
pub fn default_hitting_budget(n_copies: usize, n_steps: usize) -> usize {
    500usize.saturating_mul(n_copies).saturating_mul(n_steps)
}

/// Builds `n_copies` segments of one long trajectory, using the default
/// step budget `500·n_copies·n_steps`.
pub fn extract_copies_from_long_path<T: Scalar>(
    model: &SdeModel<T>,
    n_copies: usize,
    n_steps: usize,
    horizon: T,
    seed: u64,
) -> Result<LongPathCopies<T>> {
    let budget = default_hitting_budget(n_copies, n_steps);
    extract_copies_with_budget(model, n_copies, n_steps, horizon, seed, budget)
}

/// Grid version of the return-time construction: the first copy starts at
/// time 0; each subsequent copy starts at the first level crossing of `x0`
/// strictly after the previous copy has ended. A crossing between grid
/// points `k-1` and `k` starts the copy at `k`, whose value is replaced by
/// `x0`.
pub fn extract_copies_with_budget<T: Scalar>(
    model: &SdeModel<T>,
    n_copies: usize,
    n_steps: usize,
    horizon: T,
    seed: u64,
    max_steps: usize,
) -> Result<LongPathCopies<T>> {
    check_dims(n_copies, n_steps, horizon)?;
    let dt = horizon / T::from_count(n_steps);
    let sqrt_dt = dt.sqrt();
    let mut rng = path_rng(seed, LONG_PATH_STREAM);
    let x0 = model.x0;

    let mut long_path = vec![x0];
    let mut starts = vec![0usize];
    // grows the trajectory until index `k` exists; false once the budget is spent
    let mut extend_to = |path: &mut Vec<T>, k: usize| -> Result<bool> {
        while path.len() <= k {
            if path.len() > max_steps {
                return Ok(false);
            }
            let last = *path.last().expect("non-empty");
            let next = euler_step(model, last, dt, sqrt_dt, &mut rng);
            if !next.is_finite() {
                return Err(Error::SimulationDiverged { path: 0, step: path.len() });
            }
            path.push(next);
        }
        Ok(true)
    };
    let budget_error = |found| Error::HittingBudget {
        budget: max_steps,
        found,
        wanted: n_copies,
    };

    while starts.len() < n_copies {
        let previous = *starts.last().expect("non-empty");
        // first admissible crossing uses grid points (k-1, k) with k-1 ≥ previous + n_steps
        let mut k = previous + n_steps + 1;
        loop {
            if !extend_to(&mut long_path, k)? {
                return Err(budget_error(starts.len()));
            }
            if crosses_level(long_path[k - 1], long_path[k], x0) {
                starts.push(k);
                break;
            }
            k += 1;
        }
    }
    let last = *starts.last().expect("non-empty");
    if !extend_to(&mut long_path, last + n_steps)? {
        return Err(budget_error(n_copies - 1));
    }
    long_path.truncate(last + n_steps + 1);

    let rows = starts
        .iter()
        .map(|&s| {
            let mut row = long_path[s..=s + n_steps].to_vec();
            row[0] = x0;
            row
        })
        .collect();
    Ok(LongPathCopies {
        bundle: PathBundle::from_rows(rows, horizon, seed)?,
        starts,
        long_path,
    })
}

/// Sign change of `x - level` between two consecutive grid values, or an
/// exact hit at the later one.
#[inline]
pub fn crosses_level<T: Scalar>(prev: T, cur: T, level: T) -> bool {
    let (a, b) = (prev - level, cur - level);
    b == T::zero() || (a < T::zero() && b > T::zero()) || (a > T::zero() && b < T::zero())
}
