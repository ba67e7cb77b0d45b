//! Scripted studies: temporal and spatial convergence on the rotating
//! latitude circle, the regularisation family `ε → 0`, linear response of the
//! gauged difference energy, and a table of geometric identities.
//!
//! Every study is a pure function of its inputs. Cases run in parallel on a
//! pool of `jobs` threads and are aggregated in case order.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ParamsSpec, RunConfig};
use crate::energy::{curvature_obstruction, difference_energy, gauged_difference_energy};
use crate::error::{Error, Result};
use crate::flow::{
    rhs_extrinsic_sphere, rhs_intrinsic, rotating_latitude_speed, FlowParams, Preset,
};
use crate::geometry::{
    make_initial, perturb, random_coefficients, Curve, CurveFrame, FrameOperator, InitialCurve,
    Target,
};
use crate::grid::{Grid, ScalarField, Vec3, VectorField};
use crate::integrate::{estimate_dt, run, run_with_initial, RunFailure, Trajectory};

/// Threshold for identities that hold up to floating-point round-off.
pub const ROUND_OFF: f64 = 1e-12;
/// Required error reduction from `n = 32` to `n = 128` for spectrally
/// convergent identities.
pub const SPECTRAL_DECAY: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseRecord {
    pub index: usize,
    pub label: String,
    pub config_hash: String,
    pub metrics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub series: BTreeMap<String, Vec<f64>>,
}

impl CaseRecord {
    fn new(index: usize, label: impl Into<String>, cfg: &RunConfig) -> Self {
        CaseRecord {
            index,
            label: label.into(),
            config_hash: cfg.hash(),
            metrics: BTreeMap::new(),
            series: BTreeMap::new(),
        }
    }

    fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> f64 {
        self.metrics.get(name).copied().unwrap_or(f64::NAN)
    }
}

/// One pass/fail rule: `value` compared against `threshold`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.to_string(),
            passed: value <= threshold,
            value,
            threshold,
            detail: format!("{value:.3e} <= {threshold:.1e}"),
        }
    }

    fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.to_string(),
            passed: value >= threshold,
            value,
            threshold,
            detail: format!("{value:.3e} >= {threshold:.1e}"),
        }
    }

    fn within(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        Check {
            name: name.to_string(),
            passed: (value - target).abs() <= tolerance,
            value,
            threshold: tolerance,
            detail: format!("{value:.4} vs {target} ± {tolerance}"),
        }
    }

    fn flag(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.to_string(),
            passed,
            value: if passed { 1.0 } else { 0.0 },
            threshold: 1.0,
            detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyResult {
    pub name: String,
    pub parameters: BTreeMap<String, Value>,
    pub cases: Vec<CaseRecord>,
    pub fitted: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
}

impl StudyResult {
    fn new(name: &str) -> Self {
        StudyResult {
            name: name.to_string(),
            parameters: BTreeMap::new(),
            cases: Vec::new(),
            fitted: BTreeMap::new(),
            checks: Vec::new(),
        }
    }

    fn param(&mut self, key: &str, value: impl Serialize) {
        self.parameters.insert(key.to_string(), json!(value));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Maps `f` over `items` on `jobs` threads (0 = rayon default), keeping order.
pub fn par_map<T, R, F>(jobs: usize, items: Vec<T>, f: F) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> Result<R> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| items.into_par_iter().map(f).collect())
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

fn middle_eighty(len: usize) -> std::ops::Range<usize> {
    let lo = (len as f64 * 0.1).floor() as usize;
    let hi = len - (len as f64 * 0.1).floor() as usize;
    lo..hi.max(lo + 2).min(len)
}

fn run_quiet(cfg: &RunConfig, initial: Option<Curve>) -> Result<Trajectory> {
    let out = match initial {
        Some(c) => run_with_initial(cfg, c),
        None => run(cfg),
    };
    out.map_err(|RunFailure { error, .. }| error)
}

fn sup_distance(a: &Curve, b: &Curve) -> f64 {
    a.points.sub(&b.points).sup_norm()
}

// ---------------------------------------------------------------------------
// Convergence on the rotating latitude circle

/// The rotating latitude test case: `r = 0.6`, `(a, b, c, λ) = (1, 0, 0, 1)`,
/// `n = 64`, `t_end = 0.05`.
pub fn convergence_defaults() -> (RunConfig, Vec<f64>, Vec<usize>) {
    let mut cfg = RunConfig::new(
        Target::UnitSphere,
        InitialCurve::Latitude { r: 0.6 },
        Preset::Integrable,
        64,
        0.05,
    );
    cfg.preset = None;
    cfg.params = Some(ParamsSpec {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        lambda: 1.0,
    });
    cfg.snap_every = u64::MAX;
    cfg.diag_every = u64::MAX;
    let (dts, ns) = convergence_plan(&cfg).expect("valid defaults");
    (cfg, dts, ns)
}

/// `dt ∈ {dt₀, dt₀/2, dt₀/4}` with `dt₀` the stable step for `base`, and
/// `n ∈ {n/4, n/2, n}`.
pub fn convergence_plan(base: &RunConfig) -> Result<(Vec<f64>, Vec<usize>)> {
    let dt0 = match base.stepper.dt {
        Some(dt) => dt,
        None => estimate_dt(
            &base.flow_params()?,
            &Grid::new(base.n)?,
            base.stepper.safety,
        )?,
    };
    let ns = [base.n / 4, base.n / 2, base.n]
        .into_iter()
        .filter(|&n| n >= crate::grid::MIN_NODES && n % 2 == 0)
        .collect();
    Ok((vec![dt0, dt0 / 2.0, dt0 / 4.0], ns))
}

fn latitude_error(cfg: &RunConfig, r: f64, params: &FlowParams, traj: &Trajectory) -> Result<f64> {
    let grid = Grid::new(cfg.n)?;
    let last = traj
        .snapshots
        .last()
        .ok_or_else(|| Error::invalid("run recorded no snapshot"))?;
    let omega = rotating_latitude_speed(params, r);
    let h = (1.0 - r * r).sqrt();
    Ok(grid
        .nodes()
        .into_iter()
        .zip(&last.curve.points.0)
        .map(|(x, p)| {
            let y = x + omega * last.t;
            (p - Vec3::new(r * y.cos(), r * y.sin(), h)).norm()
        })
        .fold(0.0, f64::max))
}

/// Terminal errors against the exact rotating latitude circle for each step
/// in `dts` (at `base.n`) and each grid size in `ns` (at the smallest step).
pub fn convergence_study(
    base: &RunConfig,
    dts: &[f64],
    ns: &[usize],
    jobs: usize,
) -> Result<StudyResult> {
    let r = match (base.target, &base.initial) {
        (Target::UnitSphere, InitialCurve::Latitude { r }) => *r,
        _ => {
            return Err(Error::invalid(
                "convergence study needs a latitude circle on the sphere",
            ))
        }
    };
    if dts.is_empty() || dts.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::invalid(
            "convergence study needs positive time steps",
        ));
    }
    let params = base.flow_params()?;
    let finest = dts.iter().copied().fold(f64::INFINITY, f64::min);

    let mut jobs_list = Vec::new();
    for &dt in dts {
        let mut cfg = base.clone();
        cfg.stepper.dt = Some(dt);
        jobs_list.push((format!("dt={dt:.6e}"), "temporal", cfg));
    }
    for &n in ns {
        let mut cfg = base.clone();
        cfg.n = n;
        let stable = estimate_dt(&params, &Grid::new(n)?, base.stepper.safety)?;
        cfg.stepper.dt = Some(finest.min(stable));
        jobs_list.push((format!("n={n}"), "spatial", cfg));
    }
    let indexed: Vec<_> = jobs_list.into_iter().enumerate().collect();
    let cases = par_map(jobs, indexed, |(i, (label, kind, cfg))| {
        let traj = run_quiet(&cfg, None)?;
        let mut rec = CaseRecord::new(i, label, &cfg);
        rec.metric("spatial", if kind == "spatial" { 1.0 } else { 0.0 });
        rec.metric("dt", traj.dt);
        rec.metric("n", cfg.n as f64);
        rec.metric("steps", traj.steps as f64);
        rec.metric("error", latitude_error(&cfg, r, &params, &traj)?);
        Ok(rec)
    })?;

    let mut out = StudyResult::new("convergence");
    out.param("r", r);
    out.param("params", params);
    out.param("n", base.n);
    out.param("t_end", base.t_end);
    out.param("dts", dts);
    out.param("ns", ns);
    out.param("omega", rotating_latitude_speed(&params, r));

    let temporal: Vec<&CaseRecord> = cases.iter().filter(|c| c.get("spatial") == 0.0).collect();
    let spatial: Vec<&CaseRecord> = cases.iter().filter(|c| c.get("spatial") == 1.0).collect();
    let log_dt: Vec<f64> = temporal.iter().map(|c| c.get("dt").ln()).collect();
    let log_err: Vec<f64> = temporal.iter().map(|c| c.get("error").ln()).collect();
    let finest_err = temporal
        .iter()
        .min_by(|a, b| a.get("dt").total_cmp(&b.get("dt")))
        .map(|c| c.get("error"))
        .unwrap_or(f64::NAN);

    if r == 1.0 {
        let worst = cases.iter().map(|c| c.get("error")).fold(0.0, f64::max);
        out.fitted.insert("max_error".into(), worst);
        out.checks
            .push(Check::at_most("stationary_error", worst, 1e-11));
    } else {
        if temporal.len() >= 2 {
            let order = fit_slope(&log_dt, &log_err);
            out.fitted.insert("temporal_order".into(), order);
            for w in temporal.windows(2) {
                out.fitted.insert(
                    format!("ratio_{}", w[1].index),
                    w[0].get("error") / w[1].get("error"),
                );
            }
            out.checks
                .push(Check::within("temporal_order", order, 4.0, 0.5));
        }
        out.fitted.insert("finest_error".into(), finest_err);
        out.checks
            .push(Check::at_most("finest_error", finest_err, 1e-6));
        if let Some(top) = spatial.iter().max_by_key(|c| c.get("n") as usize) {
            out.fitted.insert("spatial_floor".into(), top.get("error"));
            out.checks
                .push(Check::at_most("spatial_floor", top.get("error"), 1e-10));
        }
    }
    out.cases = cases;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Regularisation family

/// Anco–Myrzakulov flow from a perturbed great circle, `n = 64`,
/// `t_end = 0.02`, `ε ∈ {1e-2, 1e-3, 1e-4, 0}`.
pub fn epsilon_defaults() -> (RunConfig, Vec<f64>) {
    let cfg = RunConfig::new(
        Target::UnitSphere,
        InitialCurve::PerturbedGreatCircle {
            mode: 2,
            amplitude: 0.1,
        },
        Preset::AncoMyrzakulov,
        64,
        0.02,
    );
    (cfg, vec![1e-2, 1e-3, 1e-4, 0.0])
}

fn diagnostics_cadence(cfg: &mut RunConfig, target_rows: u64) -> Result<()> {
    let params = cfg.flow_params()?;
    let dt = match cfg.stepper.dt {
        Some(dt) => dt,
        None => estimate_dt(&params, &Grid::new(cfg.n)?, cfg.stepper.safety)?,
    };
    let steps = (cfg.t_end / dt).ceil().max(1.0) as u64;
    cfg.diag_every = (steps / target_rows).max(1);
    cfg.snap_every = u64::MAX;
    Ok(())
}

fn doubling_metric(rec: &mut CaseRecord, traj: &Trajectory) {
    let n0 = traj.diagnostics.first().and_then(|d| d.gauged);
    let peak = traj
        .diagnostics
        .iter()
        .filter_map(|d| d.gauged)
        .fold(f64::NAN, f64::max);
    rec.metric("n4_initial", n0.unwrap_or(f64::NAN));
    rec.metric("n4_peak_ratio", n0.map_or(f64::NAN, |v| peak / v));
    rec.metric(
        "n4_doubling_time",
        traj.energy_doubling_time.unwrap_or(f64::NAN),
    );
}

/// Sup distances between final curves of consecutive `ε` values, all
/// integrated with the step that is stable for the largest `ε`.
pub fn epsilon_study(base: &RunConfig, epsilons: &[f64], jobs: usize) -> Result<StudyResult> {
    if epsilons.len() < 2
        || epsilons.windows(2).any(|w| !(w[0] > w[1]))
        || *epsilons.last().unwrap() != 0.0
    {
        return Err(Error::invalid(
            "ε list must be strictly decreasing and end at 0",
        ));
    }
    let mut widest = base.clone();
    widest.epsilon = epsilons[0];
    let dt = match base.stepper.dt {
        Some(dt) => dt,
        None => estimate_dt(
            &widest.flow_params()?,
            &Grid::new(base.n)?,
            base.stepper.safety,
        )?,
    };
    let configs = epsilons
        .iter()
        .enumerate()
        .map(|(i, &eps)| {
            let mut cfg = base.clone();
            cfg.epsilon = eps;
            cfg.stepper.dt = Some(dt);
            diagnostics_cadence(&mut cfg, 50)?;
            Ok((i, cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    let finals = par_map(jobs, configs, |(i, cfg)| {
        let traj = run_quiet(&cfg, None)?;
        let mut rec = CaseRecord::new(i, format!("epsilon={:e}", cfg.epsilon), &cfg);
        rec.metric("epsilon", cfg.epsilon);
        rec.metric("dt", traj.dt);
        doubling_metric(&mut rec, &traj);
        let first = traj.snapshots.first().map(|s| s.curve.clone()).unwrap();
        let last = traj.final_curve().cloned().unwrap();
        rec.metric("drift_from_initial", sup_distance(&first, &last));
        Ok((rec, last))
    })?;

    let mut out = StudyResult::new("epsilon");
    out.param("epsilons", epsilons);
    out.param("dt", dt);
    out.param("n", base.n);
    out.param("t_end", base.t_end);
    out.param("initial", &base.initial);

    let mut cases = Vec::with_capacity(finals.len());
    let mut distances = Vec::new();
    for (i, (mut rec, curve)) in finals.iter().cloned().enumerate() {
        if i + 1 < finals.len() {
            let d = sup_distance(&curve, &finals[i + 1].1);
            rec.metric("distance_to_next", d);
            distances.push(d);
        }
        cases.push(rec);
    }
    let decreasing = distances.windows(2).all(|w| w[1] < w[0]);
    out.checks.push(Check::flag(
        "distances_strictly_decrease",
        decreasing,
        distances
            .iter()
            .map(|d| format!("{d:.3e}"))
            .collect::<Vec<_>>()
            .join(" > "),
    ));
    let logs: Vec<(f64, f64)> = epsilons
        .iter()
        .zip(&distances)
        .filter(|(e, d)| **e > 0.0 && **d > 0.0)
        .map(|(e, d)| (e.ln(), d.ln()))
        .collect();
    if logs.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = logs.into_iter().unzip();
        out.fitted
            .insert("rate_in_epsilon".into(), fit_slope(&x, &y));
    }
    if base.initial == InitialCurve::GreatCircle {
        let worst = cases
            .iter()
            .map(|c| {
                c.get("drift_from_initial")
                    .max(c.metrics.get("distance_to_next").copied().unwrap_or(0.0))
            })
            .fold(0.0, f64::max);
        out.checks
            .push(Check::at_most("great_circle_stationary", worst, 1e-11));
    }
    out.cases = cases;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Linear response of the gauged difference energy

/// Anco–Myrzakulov flow from a perturbed great circle, mode-3 perturbations
/// `δ ∈ {1e-4, 5e-5, 1e-5, 0}`, `n = 64`, `t_end = 0.02`.
pub fn stability_defaults() -> (RunConfig, Vec<f64>, u32) {
    let (cfg, _) = epsilon_defaults();
    (cfg, vec![1e-4, 5e-5, 1e-5, 0.0], 3)
}

/// Runs the base curve and each perturbed copy and compares `D`, `D̃`
/// between them on a common set of snapshot times.
pub fn stability_study(
    base: &RunConfig,
    deltas: &[f64],
    mode: u32,
    jobs: usize,
) -> Result<StudyResult> {
    if base.target != Target::UnitSphere {
        return Err(Error::invalid("stability study runs on the sphere"));
    }
    if deltas.is_empty() || deltas[0] == 0.0 {
        return Err(Error::invalid(
            "the first amplitude must be nonzero; it is the reference",
        ));
    }
    let mut cfg = base.clone();
    diagnostics_cadence(&mut cfg, 100)?;
    cfg.snap_every = cfg.diag_every;
    cfg.diag_every = u64::MAX;
    let params = cfg.flow_params()?;
    let grid = Grid::new(cfg.n)?;
    let initial = make_initial(&cfg.initial, cfg.seed, &cfg.target, &grid)?;

    let mut starts = vec![(0usize, None, initial.clone())];
    for (i, &delta) in deltas.iter().enumerate() {
        starts.push((
            i + 1,
            Some(delta),
            perturb(&cfg.target, &grid, &initial, mode, delta)?,
        ));
    }
    let mut runs = par_map(jobs, starts, |(i, delta, start)| {
        let traj = run_quiet(&cfg, Some(start.clone()))?;
        Ok((i, delta, start, traj))
    })?;
    let (_, _, _, reference) = runs.remove(0);

    let target = cfg.target;
    let mut cases = Vec::new();
    for (i, delta, start, traj) in &runs {
        let delta = delta.unwrap();
        let mut rec = CaseRecord::new(i - 1, format!("delta={delta:e}"), &cfg);
        rec.metric("delta", delta);
        let (mut ts, mut ds, mut gs) = (Vec::new(), Vec::new(), Vec::new());
        for (a, b) in reference.snapshots.iter().zip(&traj.snapshots) {
            ts.push(a.t);
            ds.push(difference_energy(&target, &grid, &a.curve, &b.curve)?);
            gs.push(gauged_difference_energy(
                &target, &grid, &a.curve, &b.curve, &params,
            )?);
        }
        let direct = gauged_difference_energy(&target, &grid, &initial, start, &params)?;
        rec.metric("gauged_initial", gs[0]);
        rec.metric("gauged_initial_direct", direct);
        rec.metric("gauged_max", gs.iter().copied().fold(0.0, f64::max));
        if delta != 0.0 {
            let window = middle_eighty(ts.len());
            let logs: Vec<f64> = gs.iter().map(|g| g.ln()).collect();
            rec.metric("log_slope", fit_slope(&ts[window.clone()], &logs[window]));
            let rate = ts
                .windows(2)
                .zip(logs.windows(2))
                .map(|(t, l)| (l[1] - l[0]) / (t[1] - t[0]))
                .fold(f64::NEG_INFINITY, f64::max);
            rec.metric("max_log_rate", rate);
            rec.series.insert("log_gauged".into(), logs);
        }
        rec.series.insert("t".into(), ts);
        rec.series.insert("difference".into(), ds);
        rec.series.insert("gauged_difference".into(), gs);
        cases.push(rec);
    }

    let mut out = StudyResult::new("stability");
    out.param("deltas", deltas);
    out.param("mode", mode);
    out.param("n", cfg.n);
    out.param("t_end", cfg.t_end);
    out.param("params", params);
    out.param("initial", &cfg.initial);

    let reference_case = &cases[0];
    let d0 = reference_case.get("delta");
    let s0 = reference_case.get("log_slope");
    out.fitted.insert("log_slope".into(), s0);
    let worst_rate = cases
        .iter()
        .filter(|c| c.get("delta") != 0.0)
        .map(|c| c.get("max_log_rate"))
        .fold(f64::NEG_INFINITY, f64::max);
    out.fitted.insert("gronwall_rate".into(), worst_rate);
    out.checks.push(Check::flag(
        "at_most_exponential",
        worst_rate.is_finite()
            && cases
                .iter()
                .all(|c| c.series["gauged_difference"].iter().all(|g| g.is_finite())),
        format!("max d/dt log D̃ = {worst_rate:.4}"),
    ));
    for c in &cases {
        let delta = c.get("delta");
        let consistent = (c.get("gauged_initial") - c.get("gauged_initial_direct")).abs();
        out.checks.push(Check::at_most(
            &format!("initial_bookkeeping[{}]", c.label),
            consistent,
            ROUND_OFF * (1.0 + c.get("gauged_initial_direct")),
        ));
        if delta == 0.0 {
            out.checks.push(Check::at_most(
                "identical_data_zero",
                c.get("gauged_max"),
                ROUND_OFF,
            ));
            continue;
        }
        if c.index == 0 {
            continue;
        }
        let expected = (d0 / delta).ln();
        let shifts: Vec<f64> = reference_case.series["log_gauged"]
            .iter()
            .zip(&c.series["log_gauged"])
            .map(|(a, b)| a - b)
            .collect();
        let worst = shifts
            .iter()
            .map(|s| (s - expected).abs() / expected.abs())
            .fold(0.0, f64::max);
        out.fitted.insert(
            format!("shift[{}]", c.label),
            shifts.iter().sum::<f64>() / shifts.len() as f64,
        );
        out.checks.push(Check::at_most(
            &format!("log_shift[{}]", c.label),
            worst,
            0.1,
        ));
        let slope_gap = (c.get("log_slope") - s0).abs() / s0.abs();
        out.checks.push(Check::at_most(
            &format!("slope_agreement[{}]", c.label),
            slope_gap,
            0.1,
        ));
    }
    out.cases = cases;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Identity suite

/// Random band-limited curve used by the identity suite.
pub const IDENTITY_CURVE: InitialCurve = InitialCurve::BandLimitedRandom {
    max_mode: 4,
    amplitude: 0.3,
};
/// Curve and constants for the intrinsic/extrinsic comparison.
pub const EQUIVALENCE_CURVE: InitialCurve = InitialCurve::BandLimitedRandom {
    max_mode: 8,
    amplitude: 0.01,
};
pub const EQUIVALENCE_PARAMS: ParamsSpec = ParamsSpec {
    a: 1.0,
    b: 0.7,
    c: -0.3,
    lambda: 0.5,
};

fn identity_config(target: Target, initial: InitialCurve, seed: u64, n: usize) -> RunConfig {
    let mut cfg = RunConfig::new(target, initial, Preset::Integrable, n, 0.0);
    cfg.seed = seed;
    cfg
}

/// Ambient band-limited vector field with coefficients from `seed`.
fn random_field(grid: &Grid, seed: u64) -> VectorField {
    let coeffs = random_coefficients(4, seed);
    grid.sample_vec(|x| {
        coeffs
            .iter()
            .enumerate()
            .fold(Vec3::zeros(), |acc, (k, (a, b))| {
                let kx = k as f64 * x;
                acc + a * kx.cos() + b * kx.sin()
            })
    })
}

fn pointwise_max(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, f64::max)
}

fn field_seed(seed: u64, slot: u64) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(1000 + slot)
}

/// Round-off class identities for one random curve and three random fields.
fn identity_case(target: Target, seed: u64, n: usize, index: usize) -> Result<CaseRecord> {
    let cfg = identity_config(target, IDENTITY_CURVE, seed, n);
    let grid = Grid::new(n)?;
    let curve = make_initial(&IDENTITY_CURVE, seed, &target, &grid)?;
    let frame = CurveFrame::new(&target, &grid, &curve)?;
    let raw: Vec<VectorField> = (0..3)
        .map(|s| random_field(&grid, field_seed(seed, s)))
        .collect();
    let ys: Vec<VectorField> = raw
        .iter()
        .map(|y| frame.project(y))
        .collect::<Result<_>>()?;
    let ux = frame.ux();
    let jux = frame.rotate(ux)?;
    let points = &curve.points.0;
    let mut rec = CaseRecord::new(index, format!("{}:seed={seed}", target.name()), &cfg);

    let y = &ys[0];
    rec.metric(
        "two_dimensionality",
        pointwise_max((0..n).map(|i| {
            let lhs = ux.0[i] * y.0[i].dot(&ux.0[i]) + jux.0[i] * y.0[i].dot(&jux.0[i]);
            (lhs - y.0[i] * ux.0[i].norm_squared()).norm()
        })),
    );

    for (kind, name) in [(FrameOperator::A1, "a1"), (FrameOperator::A2, "a2")] {
        let a_y1 = frame.frame_operator(kind, &ys[0])?;
        let a_y2 = frame.frame_operator(kind, &ys[1])?;
        let gap = ScalarField(
            a_y1.dot(&ys[1])
                .0
                .iter()
                .zip(&ys[0].dot(&a_y2).0)
                .map(|(p, q)| p - q)
                .collect(),
        );
        rec.metric(
            &format!("{name}_symmetry_integral"),
            grid.quadrature(&gap)?.abs(),
        );
        rec.metric(
            &format!("{name}_symmetry_pointwise"),
            gap.0.iter().map(|v| v.abs()).fold(0.0, f64::max),
        );
    }

    let p0 = frame.project(&raw[0])?;
    let pp0 = frame.project(&p0)?;
    rec.metric("projection_idempotence", pp0.sub(&p0).sup_norm());
    let p1 = frame.project(&raw[1])?;
    rec.metric(
        "projection_symmetry",
        pointwise_max(
            (0..n).map(|i| (p0.0[i].dot(&raw[1].0[i]) - raw[0].0[i].dot(&p1.0[i])).abs()),
        ),
    );

    let jy = frame.rotate(y)?;
    let jjy = frame.rotate(&jy)?;
    rec.metric(
        "j_skew",
        pointwise_max((0..n).map(|i| jy.0[i].dot(&y.0[i]).abs())),
    );
    rec.metric(
        "j_isometry",
        pointwise_max((0..n).map(|i| (jy.0[i].norm_squared() - y.0[i].norm_squared()).abs())),
    );
    rec.metric("j_squared", jjy.add(y).sup_norm());

    rec.metric(
        "gauss_equation",
        pointwise_max((0..n).map(|i| {
            crate::geometry::gauss_equation_residual(
                &target,
                &points[i],
                [ys[0].0[i], ys[1].0[i], ys[2].0[i]],
            )
        })),
    );
    rec.metric(
        "sectional_curvature",
        pointwise_max(points.iter().zip(&frame.ux().0).map(|(p, v)| {
            let e1 = v.normalize();
            let e2 = target.rotate(p, &e1);
            let d = target.shape_operator(p);
            let det = e1.dot(&(d * e1)) * e2.dot(&(d * e2)) - e1.dot(&(d * e2)) * e2.dot(&(d * e1));
            (det - target.curvature_at(p)).abs()
        })),
    );
    if target.constant_curvature().is_some() {
        rec.metric(
            "obstruction",
            curvature_obstruction(&target, &grid, &curve)?.abs(),
        );
    }
    Ok(rec)
}

/// `sup |∇ₓ(J Y) - J ∇ₓY|` for `Y = J∇ₓu_x + P(random)` at grid size `n`.
fn kahler_residual(target: Target, seed: u64, n: usize) -> Result<f64> {
    let grid = Grid::new(n)?;
    let curve = make_initial(&IDENTITY_CURVE, seed, &target, &grid)?;
    let frame = CurveFrame::new(&target, &grid, &curve)?;
    let y = frame.project(&random_field(&grid, field_seed(seed, 0)))?;
    let lhs = frame.covariant_derivative(&frame.rotate(&y)?, 1)?;
    let rhs = frame.rotate(&frame.covariant_derivative(&y, 1)?)?;
    Ok(lhs.sub(&rhs).sup_norm())
}

fn equivalence_residual(seed: u64, n: usize) -> Result<f64> {
    let target = Target::UnitSphere;
    let grid = Grid::new(n)?;
    let curve = make_initial(&EQUIVALENCE_CURVE, seed, &target, &grid)?;
    let p = EQUIVALENCE_PARAMS;
    let params = FlowParams::new(p.a, p.b, p.c, p.lambda);
    let a = rhs_intrinsic(&params, &target, &grid, &curve)?;
    let b = rhs_extrinsic_sphere(&params, &target, &grid, &curve)?;
    Ok(a.sub(&b).sup_norm())
}

/// Curve used for the variable-curvature obstruction check.
pub const OBSTRUCTION_CURVE: InitialCurve = InitialCurve::BandLimitedRandom {
    max_mode: 3,
    amplitude: 0.3,
};

/// `∫ ∂ₓS(u) |u_x|² dx` by the midpoint rule on a grid `4n`, with `∂ₓS`
/// from the chain rule on the closed-form curvature gradient.
pub fn obstruction_midpoint_oracle(target: &Target, grid: &Grid, curve: &Curve) -> Result<f64> {
    let (p, q, r) = match *target {
        Target::Ellipsoid { p, q, r } => (p, q, r),
        _ => return Ok(0.0),
    };
    let fine = Grid::new(8 * grid.n())?;
    let mut dense = Curve {
        points: grid.resample_vec(&curve.points, &fine)?,
        winding: curve.winding,
    };
    dense.renormalize(target);
    let frame = CurveFrame::new(target, &fine, &dense)?;
    let w = Vec3::new(p.powi(-4), q.powi(-4), r.powi(-4));
    let mut sum = 0.0;
    for j in (1..fine.n()).step_by(2) {
        let u = dense.points.0[j];
        let v = frame.ux().0[j];
        let s = u.component_mul(&w).dot(&u);
        let k = 1.0 / ((p * q * r).powi(2) * s * s);
        let grad_s = u.component_mul(&w) * 2.0;
        let dk = -2.0 * k / s * grad_s.dot(&v);
        sum += dk * v.norm_squared();
    }
    Ok(sum * 2.0 * std::f64::consts::PI / (fine.n() / 2) as f64)
}

/// Residual table for `seeds` random instances on `target` at grid size `n`,
/// plus the spectral-class checks between `n = 32` and `n = 128`.
pub fn identity_suite(
    target: &Target,
    first_seed: u64,
    seeds: u64,
    n: usize,
    jobs: usize,
) -> Result<StudyResult> {
    target.validate()?;
    let target = *target;
    let items: Vec<(usize, u64)> = (0..seeds).map(|i| (i as usize, first_seed + i)).collect();
    let mut cases = par_map(jobs, items, |(i, seed)| identity_case(target, seed, n, i))?;

    let mut out = StudyResult::new(&format!("identities:{}", target.name()));
    out.param("target", target);
    out.param("first_seed", first_seed);
    out.param("seeds", seeds);
    out.param("n", n);
    out.param("curve", IDENTITY_CURVE);

    let round_off = [
        "two_dimensionality",
        "a1_symmetry_integral",
        "a2_symmetry_integral",
        "a1_symmetry_pointwise",
        "a2_symmetry_pointwise",
        "projection_idempotence",
        "projection_symmetry",
        "j_skew",
        "j_isometry",
        "j_squared",
        "gauss_equation",
        "sectional_curvature",
        "obstruction",
    ];
    for name in round_off {
        if cases.iter().all(|c| c.metrics.contains_key(name)) {
            let worst = cases.iter().map(|c| c.get(name)).fold(0.0, f64::max);
            out.fitted.insert(format!("max_{name}"), worst);
            out.checks.push(Check::at_most(name, worst, ROUND_OFF));
        }
    }

    let spectral = |label: &str, cfg: RunConfig, coarse: f64, fine: f64, out: &mut StudyResult| {
        let mut rec = CaseRecord::new(0, label, &cfg);
        rec.metric("n32", coarse);
        rec.metric("n128", fine);
        rec.metric("decay", coarse / fine);
        out.checks.push(Check::at_least(
            &format!("{label}_decay"),
            coarse / fine,
            SPECTRAL_DECAY,
        ));
        rec
    };
    let seed = first_seed;
    let mut extra = Vec::new();
    let k = (
        kahler_residual(target, seed, 32)?,
        kahler_residual(target, seed, 128)?,
    );
    out.fitted.insert("kahler_n128".into(), k.1);
    let kahler_cfg = identity_config(target, IDENTITY_CURVE, seed, 128);
    if target.constant_curvature() == Some(0.0) {
        // J is constant on the flat torus, so the commutator is pure round-off
        out.checks.push(Check::at_most(
            "kahler_commutation",
            k.0.max(k.1),
            ROUND_OFF,
        ));
        let mut rec = CaseRecord::new(0, "kahler_commutation", &kahler_cfg);
        rec.metric("n32", k.0);
        rec.metric("n128", k.1);
        extra.push(rec);
    } else {
        extra.push(spectral(
            "kahler_commutation",
            kahler_cfg,
            k.0,
            k.1,
            &mut out,
        ));
    }

    if target == Target::UnitSphere {
        let e = (
            equivalence_residual(seed, 32)?,
            equivalence_residual(seed, 128)?,
        );
        let mut cfg = identity_config(target, EQUIVALENCE_CURVE, seed, 128);
        cfg.preset = None;
        cfg.params = Some(EQUIVALENCE_PARAMS);
        out.fitted.insert("intrinsic_extrinsic_n128".into(), e.1);
        out.checks
            .push(Check::at_most("intrinsic_extrinsic", e.1, 1e-8));
        extra.push(spectral("intrinsic_extrinsic", cfg, e.0, e.1, &mut out));
    }

    if let Target::Ellipsoid { .. } = target {
        let grid = Grid::new(n)?;
        let curve = make_initial(&OBSTRUCTION_CURVE, seed, &target, &grid)?;
        let value = curvature_obstruction(&target, &grid, &curve)?;
        let oracle = obstruction_midpoint_oracle(&target, &grid, &curve)?;
        let rel = (value - oracle).abs() / oracle.abs();
        let cfg = identity_config(target, OBSTRUCTION_CURVE, seed, n);
        let mut rec = CaseRecord::new(0, "obstruction", &cfg);
        rec.metric("value", value);
        rec.metric("oracle", oracle);
        rec.metric("relative_gap", rel);
        out.fitted.insert("obstruction".into(), value);
        out.checks
            .push(Check::at_least("obstruction_nonzero", value.abs(), 1e-4));
        out.checks
            .push(Check::at_most("obstruction_oracle", rel, 1e-6));
        extra.push(rec);
    }

    for rec in extra.iter_mut() {
        rec.index = cases.len();
        cases.push(rec.clone());
    }
    out.cases = cases;
    Ok(out)
}

/// Targets covered by the default identity suites.
pub fn identity_targets() -> [Target; 3] {
    [
        Target::UnitSphere,
        Target::Ellipsoid {
            p: 2.0,
            q: 1.0,
            r: 1.0,
        },
        Target::FlatTorus,
    ]
}

pub const IDENTITY_SEEDS: u64 = 20;
pub const IDENTITY_N: usize = 64;

pub fn identity_suites(first_seed: u64, jobs: usize) -> Result<Vec<StudyResult>> {
    identity_targets()
        .iter()
        .map(|t| identity_suite(t, first_seed, IDENTITY_SEEDS, IDENTITY_N, jobs))
        .collect()
}

/// Every default study, in a fixed order.
pub fn run_suite(first_seed: u64, jobs: usize) -> Result<Vec<StudyResult>> {
    let mut out = identity_suites(first_seed, jobs)?;
    let (cfg, dts, ns) = convergence_defaults();
    out.push(convergence_study(&cfg, &dts, &ns, jobs)?);
    let (mut cfg, eps) = epsilon_defaults();
    cfg.seed = first_seed;
    out.push(epsilon_study(&cfg, &eps, jobs)?);
    let (mut cfg, deltas, mode) = stability_defaults();
    cfg.seed = first_seed;
    out.push(stability_study(&cfg, &deltas, mode, jobs)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        assert!((fit_slope(&x, &y) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn middle_window() {
        assert_eq!(middle_eighty(101), 10..91);
        assert_eq!(middle_eighty(3), 0..3);
    }

    #[test]
    fn par_map_keeps_order() {
        let v = par_map(4, (0..50).collect(), |i: i32| Ok(i * i)).unwrap();
        assert_eq!(v, (0..50).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn epsilon_list_is_validated() {
        let (cfg, _) = epsilon_defaults();
        assert!(epsilon_study(&cfg, &[1e-2, 1e-3], 1).is_err());
        assert!(epsilon_study(&cfg, &[1e-3, 1e-2, 0.0], 1).is_err());
    }

    #[test]
    fn convergence_needs_latitude() {
        let (mut cfg, dts, ns) = convergence_defaults();
        cfg.initial = InitialCurve::GreatCircle;
        assert!(convergence_study(&cfg, &dts, &ns, 1).is_err());
    }

    #[test]
    fn great_circle_convergence_is_stationary() {
        let (mut cfg, _, _) = convergence_defaults();
        cfg.initial = InitialCurve::Latitude { r: 1.0 };
        cfg.n = 16;
        cfg.t_end = 1e-3;
        let dt = estimate_dt(&cfg.flow_params().unwrap(), &Grid::new(16).unwrap(), 1.0).unwrap();
        let res = convergence_study(&cfg, &[dt, dt / 2.0], &[16], 2).unwrap();
        assert!(res.passed(), "{:?}", res.checks);
    }

    #[test]
    fn identity_cases_pass_on_every_target() {
        for t in identity_targets() {
            let res = identity_suite(&t, 0, 3, IDENTITY_N, 2).unwrap();
            for c in &res.checks {
                assert!(c.passed, "{}: {} {}", res.name, c.name, c.detail);
            }
            assert_eq!(
                res.cases.iter().map(|c| c.index).collect::<Vec<_>>(),
                (0..res.cases.len()).collect::<Vec<_>>()
            );
        }
    }
}
