use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use monodrift::io::{load_curve, load_paths, save_curve, save_paths, write_curve};
use monodrift::{
    builtin_model, extract_copies_from_long_path, nw_curve, run_experiment_with_curves, select_eta_loocv,
    select_lh_adaptive, simulate_copies, write_figure_files, BandwidthPair, BandwidthPolicy, CurveOnGrid, Endpoints,
    EstimatorMode, ExperimentSpec, Kernel, MonotoneFit, MonotoneInput,
};

use crate::config::{ConfigError, RunConfig};
use crate::{Command, EstimatorArgs, Failure};

fn parse_kernel(s: &str) -> Result<Kernel, ConfigError> {
    s.parse().map_err(|e: monodrift::Error| ConfigError::new("--kernel", e.to_string()))
}

fn parse_mode(s: &str) -> Result<EstimatorMode, ConfigError> {
    s.parse().map_err(|e: monodrift::Error| ConfigError::new("--mode", e.to_string()))
}

fn apply_estimator(cfg: &mut RunConfig, est: &EstimatorArgs) -> Result<(), ConfigError> {
    if let Some(k) = &est.kernel {
        cfg.kernel = parse_kernel(k)?;
    }
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = est.$field { cfg.$field = v; })* };
    }
    set!(l0, r0, eps, t0, m_threshold);
    if est.theory_strict {
        cfg.theory_strict = true;
    }
    Ok(())
}

/// Folds subcommand flags into the configuration.
pub fn apply_overrides(cfg: &mut RunConfig, cmd: &Command) -> Result<(), ConfigError> {
    macro_rules! set {
        ($args:expr; $($field:ident),*) => { $(if let Some(v) = &$args.$field { cfg.$field = v.clone(); })* };
    }
    match cmd {
        Command::Simulate(a) => {
            set!(a; model, n_paths, n_steps, horizon, seed);
        }
        Command::Estimate(a) => {
            set!(a; eta_grid);
            apply_estimator(cfg, &a.est)?;
        }
        Command::Monotonize(a) => {
            if let Some(m) = &a.mode {
                cfg.mode = parse_mode(m)?;
            }
            if let Some(g) = a.adaptive.as_deref().filter(|g| !g.is_empty()) {
                cfg.lh_grid = g.to_string();
            }
            apply_estimator(cfg, &a.est)?;
        }
        Command::Experiment(a) => {
            set!(a; model, repetitions, n_paths, n_steps, horizon, seed, eta_grid, lh_grid, figure_curves);
            if let Some(m) = &a.mode {
                cfg.mode = parse_mode(m)?;
            }
            if let Some(out) = &a.out {
                cfg.out_dir = out.clone();
            }
            for (slot, v) in [
                (&mut cfg.fixed_eta, a.fixed_eta),
                (&mut cfg.fixed_ell, a.fixed_ell),
                (&mut cfg.fixed_h, a.fixed_h),
            ] {
                if v.is_some() {
                    *slot = v;
                }
            }
            apply_estimator(cfg, &a.est)?;
        }
    }
    Ok(())
}

pub fn dispatch(cfg: &RunConfig, cmd: &Command) -> Result<(), Failure> {
    match cmd {
        Command::Simulate(a) => simulate(cfg, a.from_long_path, a.out.as_deref()),
        Command::Estimate(a) => estimate(cfg, a),
        Command::Monotonize(a) => monotonize(cfg, a),
        Command::Experiment(_) => experiment(cfg),
    }
}

fn note(cfg: &RunConfig, msg: impl AsRef<str>) {
    if cfg.verbosity > 0 {
        eprintln!("{}", msg.as_ref());
    }
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn emit_curve(curve: &CurveOnGrid<f64>, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => {
            ensure_parent(path)?;
            save_curve(curve, path)?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_curve(curve, &mut lock)?;
            lock.flush().context("writing to stdout")?;
        }
    }
    Ok(())
}

fn simulate(cfg: &RunConfig, from_long_path: bool, out: Option<&Path>) -> Result<(), Failure> {
    let model = builtin_model::<f64>(&cfg.model).map_err(|e| ConfigError::new("model", e.to_string()))?;
    let bundle = if from_long_path {
        extract_copies_from_long_path(&model, cfg.n_paths, cfg.n_steps, cfg.horizon, cfg.seed)?.bundle
    } else {
        simulate_copies(&model, cfg.n_paths, cfg.n_steps, cfg.horizon, cfg.seed)?
    };
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.join("paths.csv"));
    ensure_parent(&path)?;
    save_paths(&bundle, &path)?;
    note(
        cfg,
        format!("wrote {} paths of {} steps to {}", cfg.n_paths, cfg.n_steps, path.display()),
    );
    Ok(())
}

fn parse_output_grid(spec: &str) -> Result<(f64, f64, usize), ConfigError> {
    let bad = || ConfigError::new("--grid", format!("expected `lo,hi,npts`, got `{spec}`"));
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if !(lo < hi) || n < 2 {
        return Err(bad());
    }
    Ok((lo, hi, n))
}

fn estimate(cfg: &RunConfig, a: &crate::EstimateArgs) -> Result<(), Failure> {
    let est = cfg.estimator();
    let (lo, hi, n) = match &a.grid {
        Some(g) => parse_output_grid(g)?,
        None => {
            let (lo, hi) = est.i_2eps();
            (lo, hi, est.z_grid_points)
        }
    };
    let eta = if a.eta.trim().eq_ignore_ascii_case("loocv") {
        None
    } else {
        Some(
            a.eta
                .trim()
                .parse::<f64>()
                .map_err(|_| ConfigError::new("--eta", format!("expected a number or `loocv`, got `{}`", a.eta)))?,
        )
    };
    let paths = load_paths::<f64>(&a.paths)?;
    let eta = match eta {
        Some(v) => v,
        None => {
            let grid = cfg.eta_values()?;
            let chosen = select_eta_loocv(&paths, &est, &grid)?;
            note(cfg, format!("cross-validated eta = {chosen}"));
            chosen
        }
    };
    let curve = nw_curve(&paths, &est, eta, lo, hi, n)?;
    emit_curve(&curve, a.out.as_deref())
}

fn parse_endpoints(spec: &str) -> Result<Endpoints<f64>, ConfigError> {
    let bad = || ConfigError::new("--endpoints", format!("expected `a_lo,a_hi` with a_lo < a_hi, got `{spec}`"));
    let (lo, hi) = spec.split_once(',').ok_or_else(bad)?;
    let at_right: f64 = lo.trim().parse().map_err(|_| bad())?;
    let at_left: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(at_right < at_left) {
        return Err(bad());
    }
    Ok(Endpoints { at_right, at_left })
}

fn monotonize(cfg: &RunConfig, a: &crate::MonotonizeArgs) -> Result<(), Failure> {
    let est = cfg.estimator();
    let endpoints = a.endpoints.as_deref().map(parse_endpoints).transpose()?;
    if cfg.mode == EstimatorMode::Oracle && endpoints.is_none() {
        return Err(ConfigError::new("--endpoints", "oracle mode needs --endpoints a_lo,a_hi (or use --mode practical)").into());
    }
    let m_b = match a.m_b {
        Some(v) => v,
        None => builtin_model::<f64>(&cfg.model).map_err(|e| ConfigError::new("model", e.to_string()))?.m_a,
    };
    let fixed = match (a.ell, a.h) {
        (Some(ell), Some(h)) => Some(BandwidthPair::new(ell, h)),
        (None, None) => None,
        _ => return Err(ConfigError::new("--ell", "give both --ell and --h").into()),
    };
    if fixed.is_some() == a.adaptive.is_some() {
        return Err(ConfigError::new("--adaptive", "give either --ell/--h or --adaptive, not both or neither").into());
    }
    let curve = load_curve::<f64>(&a.curve)?;
    let input = MonotoneInput::new(curve, est, endpoints, m_b)?;
    let bw = match fixed {
        Some(bw) => bw,
        None => {
            let grid = cfg.lh_pairs()?;
            let bw = select_lh_adaptive(&input, &grid, cfg.mode)?;
            note(cfg, format!("selected ell = {}, h = {}", bw.ell, bw.h));
            bw
        }
    };
    let fit = MonotoneFit::new(&input, bw, cfg.mode)?;
    if !fit.is_active() {
        note(cfg, "slope test failed: the practical estimate is identically zero");
    }
    let (lo, hi) = est.i0();
    let out = fit.tabulate(lo, hi, est.eval_points)?;
    emit_curve(&out, a.out.as_deref())
}

fn experiment_spec(cfg: &RunConfig) -> Result<ExperimentSpec<f64>, ConfigError> {
    let model = builtin_model::<f64>(&cfg.model).map_err(|e| ConfigError::new("model", e.to_string()))?;
    let policy = match (cfg.fixed_eta, cfg.fixed_ell, cfg.fixed_h) {
        (Some(eta), Some(ell), Some(h)) => BandwidthPolicy::Fixed {
            eta,
            bw: BandwidthPair::new(ell, h),
        },
        _ => BandwidthPolicy::Adaptive,
    };
    Ok(ExperimentSpec {
        model,
        n_paths: cfg.n_paths,
        n_steps: cfg.n_steps,
        horizon: cfg.horizon,
        repetitions: cfg.repetitions,
        eta_grid: cfg.eta_values()?,
        lh_grid: cfg.lh_pairs()?,
        cfg: cfg.estimator(),
        seed: cfg.seed,
        policy,
        mode: cfg.mode,
    })
}

fn experiment(cfg: &RunConfig) -> Result<(), Failure> {
    let spec = experiment_spec(cfg)?;
    let dir: PathBuf = cfg.out_dir.clone();
    note(
        cfg,
        format!(
            "model {}: {} repetitions of N = {}, n = {}, T = {}",
            spec.model.label, spec.repetitions, spec.n_paths, spec.n_steps, spec.horizon
        ),
    );
    let started = Instant::now();
    let (report, curves) = run_experiment_with_curves(&spec, cfg.figure_curves)?;
    report.write_to(&dir)?;
    write_figure_files(&spec.model, &curves, &dir)?;
    note(cfg, format!("finished in {:.1?}", started.elapsed()));
    print!("{}", report.table_csv());
    if !report.failures.is_empty() {
        eprintln!("warning: {} repetitions failed, see report.json", report.failures.len());
    }
    Ok(())
}
