//! Monte-Carlo study of the estimators on a known model.
//!
//! Each repetition simulates `N` copies, picks `η` by leave-one-out
//! cross-validation, tabulates the Nadaraya–Watson estimate, picks `(ℓ, h)`
//! by the adaptive criterion, monotonizes, and records the integrated
//! absolute error of both estimates over `I_0`. Repetition `r` uses seed
//! `seed + r`, so any subset of repetitions can be rerun on its own.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::monotone::{select_lh_adaptive, BandwidthPair, Endpoints, EstimatorMode, MonotoneFit, MonotoneInput};
use crate::nadaraya::{nw_curve, nw_drift, select_eta_loocv, CurveOnGrid, EstimatorConfig};
use crate::quadrature::trapezoid;
use crate::scalar::Scalar;
use crate::sde::{simulate_copies, PathBundle, SdeModel};

/// How the bandwidths are chosen in each repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthPolicy<T> {
    /// `η` by cross-validation over the η grid, `(ℓ, h)` by the adaptive
    /// criterion over the pair grid.
    Adaptive,
    /// Fixed bandwidths for every repetition.
    Fixed { eta: T, bw: BandwidthPair<T> },
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec<T: Scalar> {
    pub model: SdeModel<T>,
    pub n_paths: usize,
    pub n_steps: usize,
    pub horizon: T,
    pub repetitions: usize,
    pub eta_grid: Vec<T>,
    pub lh_grid: Vec<BandwidthPair<T>>,
    pub cfg: EstimatorConfig<T>,
    pub seed: u64,
    pub policy: BandwidthPolicy<T>,
    pub mode: EstimatorMode,
}

/// The grid `{step·λ : λ = 1..=count}`.
pub fn multiples<T: Scalar>(step: T, count: usize) -> Vec<T> {
    (1..=count).map(|k| step * T::from_count(k)).collect()
}

impl<T: Scalar> ExperimentSpec<T> {
    /// The study defaults: `N = 100`, `n = 50`, `T = 5`, 100 repetitions, and
    /// both bandwidth grids equal to `{0.05λ : λ = 1..35}`.
    pub fn study(model: SdeModel<T>, seed: u64) -> Self {
        let grid = multiples(T::lit(0.05), 35);
        ExperimentSpec {
            model,
            n_paths: 100,
            n_steps: 50,
            horizon: T::lit(5.0),
            repetitions: 100,
            lh_grid: BandwidthPair::square_grid(&grid),
            eta_grid: grid,
            cfg: EstimatorConfig::default(),
            seed,
            policy: BandwidthPolicy::Adaptive,
            mode: EstimatorMode::Oracle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions must be at least 1"));
        }
        if self.n_paths == 0 || self.n_steps == 0 {
            return Err(Error::invalid("n_paths and n_steps must be positive"));
        }
        self.cfg.validate_for(self.horizon)?;
        if let BandwidthPolicy::Adaptive = self.policy {
            if self.eta_grid.is_empty() {
                return Err(Error::invalid("eta_grid is empty"));
            }
            if self.lh_grid.is_empty() {
                return Err(Error::invalid("lh_grid is empty"));
            }
        }
        Ok(())
    }

    /// `a(l_ε)` and `a(r_ε)` from the true drift.
    pub fn oracle_endpoints(&self) -> Endpoints<T> {
        let (l, r) = self.cfg.i_eps();
        Endpoints {
            at_right: self.model.drift(r),
            at_left: self.model.drift(l),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRow<T> {
    pub rep: usize,
    pub seed: u64,
    pub selected_eta: T,
    pub selected_lh: BandwidthPair<T>,
    pub err_monotone: T,
    pub err_nw: T,
    /// `false` when the practical estimator's slope event failed.
    pub monotone_active: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedRepetition {
    pub rep: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport<T> {
    pub model: String,
    pub n_paths: usize,
    pub n_steps: usize,
    pub horizon: T,
    pub repetitions: usize,
    pub seed: u64,
    pub mode: EstimatorMode,
    pub per_rep: Vec<RepetitionRow<T>>,
    pub failures: Vec<FailedRepetition>,
    pub mean_monotone: T,
    pub sd_monotone: T,
    pub mean_nw: T,
    pub sd_nw: T,
    /// Sample standard deviations need two successful repetitions; with
    /// fewer they are reported as 0 and this is `false`.
    pub sd_defined: bool,
}

/// Sample mean and standard deviation (divisor `n - 1`); the deviation is 0
/// with a `false` flag when `n < 2`.
pub fn mean_sd<T: Scalar>(xs: &[T]) -> (T, T, bool) {
    let n = xs.len();
    if n == 0 {
        return (T::nan(), T::zero(), false);
    }
    let mean = xs.iter().copied().sum::<T>() / T::from_count(n);
    if n < 2 {
        return (mean, T::zero(), false);
    }
    let ss: T = xs.iter().map(|&x| (x - mean) * (x - mean)).sum();
    (mean, (ss / T::from_count(n - 1)).sqrt(), true)
}

/// Trapezoid rule of `|estimate - truth|` on the estimate's grid, which must
/// span `[lo, hi]`.
pub fn integrated_l1_error<T: Scalar>(estimate: &CurveOnGrid<T>, truth: impl Fn(T) -> T, lo: T, hi: T) -> Result<T> {
    if !estimate.spans(lo, hi) {
        return Err(Error::invalid(format!(
            "curve spans [{}, {}], expected [{lo}, {hi}]",
            estimate.lo(),
            estimate.hi()
        )));
    }
    let diffs: Vec<T> = estimate.points().map(|(x, v)| (v - truth(x)).abs()).collect();
    Ok(trapezoid(&diffs, estimate.step()))
}

/// Everything one repetition produces.
#[derive(Clone, Debug)]
pub struct RepetitionOutcome<T> {
    pub row: RepetitionRow<T>,
    /// The monotone estimate on the `I_0` evaluation grid.
    pub monotone: CurveOnGrid<T>,
    /// The Nadaraya–Watson estimate on the same grid.
    pub nw: CurveOnGrid<T>,
}

/// Runs the estimation pipeline on already simulated paths.
pub fn estimate_repetition<T: Scalar>(
    spec: &ExperimentSpec<T>,
    paths: &PathBundle<T>,
    rep: usize,
) -> Result<RepetitionOutcome<T>> {
    let cfg = &spec.cfg;
    let (lo, hi) = cfg.i0();
    let n_eval = cfg.eval_points;
    let eta = match &spec.policy {
        BandwidthPolicy::Adaptive => select_eta_loocv(paths, cfg, &spec.eta_grid)?,
        BandwidthPolicy::Fixed { eta, .. } => *eta,
    };
    let tabulated = nw_drift(paths, cfg, eta)?;
    let input = MonotoneInput::new(tabulated, *cfg, Some(spec.oracle_endpoints()), spec.model.m_a)?;
    let bw = match &spec.policy {
        BandwidthPolicy::Adaptive => select_lh_adaptive(&input, &spec.lh_grid, spec.mode)?,
        BandwidthPolicy::Fixed { bw, .. } => *bw,
    };
    let fit = MonotoneFit::new(&input, bw, spec.mode)?;
    let monotone = fit.tabulate(lo, hi, n_eval)?;
    let nw = nw_curve(paths, cfg, eta, lo, hi, n_eval)?;
    let truth = |x| spec.model.drift(x);
    let row = RepetitionRow {
        rep,
        seed: paths.seed(),
        selected_eta: eta,
        selected_lh: bw,
        err_monotone: integrated_l1_error(&monotone, truth, lo, hi)?,
        err_nw: integrated_l1_error(&nw, truth, lo, hi)?,
        monotone_active: fit.is_active(),
    };
    Ok(RepetitionOutcome { row, monotone, nw })
}

/// Simulates and estimates repetition `rep` with seed `spec.seed + rep`.
pub fn run_repetition<T: Scalar>(spec: &ExperimentSpec<T>, rep: usize) -> Result<RepetitionOutcome<T>> {
    let seed = spec.seed.wrapping_add(rep as u64);
    let paths = simulate_copies(&spec.model, spec.n_paths, spec.n_steps, spec.horizon, seed)?;
    estimate_repetition(spec, &paths, rep)
}

/// Runs every repetition and aggregates. Repetitions execute in parallel;
/// results are gathered in repetition order so the report does not depend
/// on scheduling.
pub fn run_experiment<T: Scalar>(spec: &ExperimentSpec<T>) -> Result<ExperimentReport<T>> {
    Ok(run_experiment_with_curves(spec, 0)?.0)
}

/// Like [`run_experiment`], additionally returning the monotone estimates of
/// the first `keep_curves` successful repetitions.
pub fn run_experiment_with_curves<T: Scalar>(
    spec: &ExperimentSpec<T>,
    keep_curves: usize,
) -> Result<(ExperimentReport<T>, Vec<(usize, CurveOnGrid<T>)>)> {
    spec.validate()?;
    let outcomes: Vec<Result<RepetitionOutcome<T>>> = (0..spec.repetitions)
        .into_par_iter()
        .map(|rep| run_repetition(spec, rep))
        .collect();
    let mut per_rep = Vec::new();
    let mut failures = Vec::new();
    let mut curves = Vec::new();
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => {
                if curves.len() < keep_curves {
                    curves.push((rep, o.monotone));
                }
                per_rep.push(o.row);
            }
            Err(e) => failures.push(FailedRepetition {
                rep,
                seed: spec.seed.wrapping_add(rep as u64),
                error: e.to_string(),
            }),
        }
    }
    if failures.len() * 10 > spec.repetitions || per_rep.is_empty() {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: spec.repetitions,
        });
    }
    Ok((summarize(spec, per_rep, failures), curves))
}

/// Builds a report from rows, recomputing the summary statistics.
pub fn summarize<T: Scalar>(
    spec: &ExperimentSpec<T>,
    per_rep: Vec<RepetitionRow<T>>,
    failures: Vec<FailedRepetition>,
) -> ExperimentReport<T> {
    let mono: Vec<T> = per_rep.iter().map(|r| r.err_monotone).collect();
    let nw: Vec<T> = per_rep.iter().map(|r| r.err_nw).collect();
    let (mean_monotone, sd_monotone, sd_defined) = mean_sd(&mono);
    let (mean_nw, sd_nw, _) = mean_sd(&nw);
    ExperimentReport {
        model: spec.model.label.clone(),
        n_paths: spec.n_paths,
        n_steps: spec.n_steps,
        horizon: spec.horizon,
        repetitions: spec.repetitions,
        seed: spec.seed,
        mode: spec.mode,
        per_rep,
        failures,
        mean_monotone,
        sd_monotone,
        mean_nw,
        sd_nw,
        sd_defined,
    }
}

impl<T: Scalar> ExperimentReport<T> {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::parse("report json", e))
    }

    pub fn table_csv(&self) -> String {
        let mut s = String::from(
            "model,n_paths,n_steps,horizon,repetitions,failed,mean_monotone,sd_monotone,mean_nw,sd_nw\n",
        );
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            self.model,
            self.n_paths,
            self.n_steps,
            self.horizon,
            self.repetitions,
            self.failures.len(),
            self.mean_monotone,
            self.sd_monotone,
            self.mean_nw,
            self.sd_nw
        );
        s
    }

    /// Writes `report.json` and `table1.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("report.json"), &self.to_json()?)?;
        write_file(&dir.join("table1.csv"), &self.table_csv())
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes one `curve_<rep>.csv` per curve with columns `x,truth,estimate`,
/// plus `figures.gp` overlaying them on the truth. Returns the CSV paths.
pub fn write_figure_files<T: Scalar>(
    model: &SdeModel<T>,
    curves: &[(usize, CurveOnGrid<T>)],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(curves.len());
    for (rep, curve) in curves {
        let path = dir.join(format!("curve_{rep:03}.csv"));
        let mut s = String::from("x,truth,estimate\n");
        for (x, v) in curve.points() {
            let _ = writeln!(s, "{x},{},{v}", model.drift(x));
        }
        write_file(&path, &s)?;
        written.push(path);
    }
    let mut gp = format!(
        "set datafile separator ','\nset key off\nset xlabel 'x'\nset ylabel 'drift'\nset title 'Model {}'\n",
        model.label
    );
    gp.push_str("set terminal pngcairo size 800,600\n");
    let _ = writeln!(gp, "set output 'figure_{}.png'", model.label);
    let mut plots = Vec::new();
    if let Some(first) = written.first() {
        plots.push(format!(
            "'{}' using 1:2 with lines lw 2 lc rgb 'red'",
            first.file_name().unwrap().to_string_lossy()
        ));
    }
    for p in &written {
        plots.push(format!(
            "'{}' using 1:3 with lines dt 2 lc rgb 'black'",
            p.file_name().unwrap().to_string_lossy()
        ));
    }
    if !plots.is_empty() {
        let _ = writeln!(gp, "plot {}", plots.join(", \\\n     "));
    }
    write_file(&dir.join("figures.gp"), &gp)?;
    Ok(written)
}

/// Runs the first `n_curves` repetitions of `spec` and writes their monotone
/// estimates with [`write_figure_files`].
pub fn emit_figure_data<T: Scalar>(spec: &ExperimentSpec<T>, n_curves: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    if n_curves > spec.repetitions {
        return Err(Error::invalid(format!(
            "n_curves = {n_curves} exceeds repetitions = {}",
            spec.repetitions
        )));
    }
    spec.validate()?;
    let curves = (0..n_curves)
        .into_par_iter()
        .map(|rep| run_repetition(spec, rep).map(|o| (rep, o.monotone)))
        .collect::<Result<Vec<_>>>()?;
    write_figure_files(&spec.model, &curves, dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::builtin_model;
    use approx::assert_abs_diff_eq;

    fn small_spec(model: &str, reps: usize) -> ExperimentSpec<f64> {
        let mut spec = ExperimentSpec::study(builtin_model(model).unwrap(), 7);
        spec.n_paths = 12;
        spec.repetitions = reps;
        spec.eta_grid = vec![0.2, 0.4, 0.8];
        spec.lh_grid = BandwidthPair::square_grid(&[0.05, 0.2]);
        spec
    }

    #[test]
    fn l1_error_examples() {
        let truth = |x: f64| -x;
        let exact = CurveOnGrid::from_fn(-1.0, 1.0, 201, truth).unwrap();
        assert_eq!(integrated_l1_error(&exact, truth, -1.0, 1.0).unwrap(), 0.0);
        let shifted = CurveOnGrid::from_fn(-1.0, 1.0, 201, |x| -x + 0.1).unwrap();
        assert_abs_diff_eq!(integrated_l1_error(&shifted, truth, -1.0, 1.0).unwrap(), 0.2, epsilon = 1e-12);
        assert!(integrated_l1_error(&exact, truth, -1.0, 2.0).is_err());
    }

    #[test]
    fn l1_error_matches_fine_quadrature() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let values: Vec<f64> = (0..201).map(|_| rng.random_range(-1.5..1.5)).collect();
            let curve = CurveOnGrid::new(-1.0, 1.0, values).unwrap();
            let truth = |x: f64| (1.25 * x).sin() - 1.5 * x;
            // the trapezoid value is the integral of the piecewise-linear
            // interpolant of |estimate - truth| through the nodes
            let nodes: Vec<f64> = curve.points().map(|(x, v)| (v - truth(x)).abs()).collect();
            let n = 100_000;
            let fine: f64 = (0..n)
                .map(|i| {
                    let x = -1.0 + 2.0 * (i as f64 + 0.5) / n as f64;
                    let t = (x + 1.0) / 0.01;
                    let j = (t.floor() as usize).min(199);
                    let w = t - j as f64;
                    (1.0 - w) * nodes[j] + w * nodes[j + 1]
                })
                .sum::<f64>()
                * 2.0
                / n as f64;
            let got = integrated_l1_error(&curve, truth, -1.0, 1.0).unwrap();
            assert!((got - fine).abs() < 1e-3, "{got} vs {fine}");
        }
    }

    #[test]
    fn mean_sd_conventions() {
        let (m, s, ok) = mean_sd(&[1.0_f64, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(m, 2.5);
        assert_abs_diff_eq!(s, (5.0_f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert!(ok);
        assert_eq!(mean_sd(&[0.3_f64]), (0.3, 0.0, false));
    }

    #[test]
    fn single_repetition_report() {
        let spec = small_spec("A", 1);
        let r = run_experiment(&spec).unwrap();
        assert_eq!(r.per_rep.len(), 1);
        assert_eq!(r.mean_monotone, r.per_rep[0].err_monotone);
        assert_eq!(r.mean_nw, r.per_rep[0].err_nw);
        assert_eq!(r.sd_monotone, 0.0);
        assert!(!r.sd_defined);
    }

    #[test]
    fn report_is_deterministic_and_consistent() {
        let spec = small_spec("B", 4);
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let (m, s, _) = mean_sd(&a.per_rep.iter().map(|r| r.err_monotone).collect::<Vec<_>>());
        assert!((m - a.mean_monotone).abs() <= 1e-12 && (s - a.sd_monotone).abs() <= 1e-12);
        assert!(a.per_rep.iter().all(|r| r.err_monotone >= 0.0 && r.err_nw >= 0.0));
        for row in &a.per_rep {
            assert_eq!(row.seed, 7 + row.rep as u64);
        }
    }

    #[test]
    fn repetition_order_does_not_matter() {
        let spec = small_spec("A", 3);
        let forward: Vec<_> = (0..3).map(|r| run_repetition(&spec, r).unwrap().row).collect();
        let mut backward: Vec<_> = (0..3).rev().map(|r| run_repetition(&spec, r).unwrap().row).collect();
        backward.reverse();
        assert_eq!(forward, backward);
        let report = run_experiment(&spec).unwrap();
        assert_eq!(report.per_rep, forward);
    }

    #[test]
    fn figure_files() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_spec("A", 2);
        let files = emit_figure_data(&spec, 2, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        for f in &files {
            let text = fs::read_to_string(f).unwrap();
            let rows: Vec<Vec<f64>> = text
                .lines()
                .skip(1)
                .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
                .collect();
            assert_eq!(rows.len(), 201);
            assert_eq!(rows[100][0], 0.0);
            assert_eq!(rows[100][1], 0.0);
            assert!(rows.windows(2).all(|w| w[1][2] < w[0][2]));
        }
        assert!(dir.path().join("figures.gp").exists());
        assert!(emit_figure_data(&spec, 3, dir.path()).is_err());
    }

    #[test]
    fn model_b_truth_column() {
        let dir = tempfile::tempdir().unwrap();
        let model = builtin_model::<f64>("B").unwrap();
        let curve = CurveOnGrid::from_fn(-1.0, 1.0, 201, |_| 0.0).unwrap();
        let files = write_figure_files(&model, &[(0, curve)], dir.path()).unwrap();
        let text = fs::read_to_string(&files[0]).unwrap();
        let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(last[0], 1.0);
        assert_abs_diff_eq!(last[1], 1.25_f64.sin() - 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(last[1], -0.5510, epsilon = 1e-4);
    }

    #[test]
    fn too_many_failures_is_an_error() {
        let mut spec = small_spec("A", 3);
        spec.model = SdeModel::new("C", |x: f64| 1e3 * x * x * x, |_| 1.0, 0.5, 1.0);
        match run_experiment(&spec) {
            Err(Error::TooManyFailures { failed: 3, total: 3 }) => {}
            other => panic!("expected too-many-failures, got {other:?}"),
        }
    }
}
