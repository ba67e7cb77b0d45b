//! Explicit Runge–Kutta time stepping with surface-constraint maintenance.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::energy::{energy_report, EnergyReport};
use crate::error::{check_len, Error, Result};
use crate::flow::{evaluate_rhs, FlowParams, RhsKind};
use crate::geometry::{make_initial, Curve, Target};
use crate::grid::{Grid, VectorField};

/// Growth of `sup |u_x|` beyond this factor of its initial value counts as
/// blow-up.
pub const BLOWUP_FACTOR: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    pub curve: Curve,
    pub step_count: u64,
    /// Sum over steps of the largest per-node renormalisation move.
    pub renorm_total: f64,
}

impl State {
    pub fn new(curve: Curve) -> Self {
        State {
            t: 0.0,
            curve,
            step_count: 0,
            renorm_total: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Classical RK4 on the ambient coordinates.
    Rk4,
    /// RK4 with every stage slope projected onto the tangent plane at its
    /// evaluation point.
    #[default]
    Rk4Projected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepperConfig {
    /// Fixed step; `None` means [`estimate_dt`] with `safety`.
    pub dt: Option<f64>,
    pub scheme: Scheme,
    pub safety: f64,
    pub renormalize_every: u64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            dt: None,
            scheme: Scheme::Rk4Projected,
            safety: 1.0,
            renormalize_every: 1,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::invalid(format!("dt must be positive, got {dt}")));
            }
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::invalid(format!(
                "safety must lie in (0, 1], got {}",
                self.safety
            )));
        }
        if self.renormalize_every == 0 {
            return Err(Error::invalid("renormalize_every must be at least 1"));
        }
        Ok(())
    }
}

/// `σ / ((|a| + ε) k⁴ + |λ| k² + 1)` with `k = n/2`.
pub fn estimate_dt(params: &FlowParams, grid: &Grid, safety: f64) -> Result<f64> {
    if params.a == 0.0 && params.epsilon == 0.0 && params.lambda == 0.0 {
        return Err(Error::invalid(
            "cannot size a step for a flow with a = ε = λ = 0",
        ));
    }
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::invalid(format!(
            "safety must lie in (0, 1], got {safety}"
        )));
    }
    let k = grid.max_wavenumber();
    let k2 = k * k;
    Ok(safety / ((params.a.abs() + params.epsilon) * k2 * k2 + params.lambda.abs() * k2 + 1.0))
}

/// Everything a step needs that does not change between steps.
#[derive(Clone, Debug)]
pub struct Stepper<'a> {
    pub target: &'a Target,
    pub grid: &'a Grid,
    pub params: FlowParams,
    pub rhs: RhsKind,
    pub scheme: Scheme,
    pub renormalize_every: u64,
    /// Blow-up threshold on `sup |u_x|`; `None` checks finiteness only.
    pub ux_limit: Option<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(target: &'a Target, grid: &'a Grid, params: FlowParams, rhs: RhsKind) -> Self {
        Stepper {
            target,
            grid,
            params,
            rhs: rhs.resolve(target, &params),
            scheme: Scheme::Rk4Projected,
            renormalize_every: 1,
            ux_limit: None,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_renormalize_every(mut self, every: u64) -> Self {
        self.renormalize_every = every.max(1);
        self
    }

    /// Arms the blow-up check relative to the velocity of `initial`.
    pub fn with_blowup_reference(mut self, initial: &Curve) -> Result<Self> {
        let sup = initial.velocity(self.grid)?.sup_norm();
        self.ux_limit = Some(BLOWUP_FACTOR * sup.max(f64::MIN_POSITIVE));
        Ok(self)
    }

    fn slope(&self, curve: &Curve) -> Result<VectorField> {
        let f = evaluate_rhs(self.rhs, &self.params, self.target, self.grid, curve)?;
        Ok(match self.scheme {
            Scheme::Rk4 => f,
            Scheme::Rk4Projected => VectorField(
                curve
                    .points
                    .0
                    .iter()
                    .zip(&f.0)
                    .map(|(p, v)| self.target.project(p, v))
                    .collect(),
            ),
        })
    }

    fn stage(base: &Curve, h: f64, k: &VectorField) -> Curve {
        Curve {
            points: base.points.axpy(h, k),
            winding: base.winding,
        }
    }

    fn blown_up(state: &State, reason: String) -> Error {
        Error::BlowUp {
            t: state.t,
            reason,
            last_good: Box::new(state.clone()),
        }
    }

    /// One classical RK4 step followed by renormalisation onto the target.
    /// Negative `dt` integrates backwards.
    pub fn step(&self, state: &State, dt: f64) -> Result<State> {
        let u = &state.curve;
        let k1 = self.slope(u)?;
        let k2 = self.slope(&Self::stage(u, 0.5 * dt, &k1))?;
        let k3 = self.slope(&Self::stage(u, 0.5 * dt, &k2))?;
        let k4 = self.slope(&Self::stage(u, dt, &k3))?;
        let sixth = dt / 6.0;
        let points = VectorField(
            (0..u.n())
                .map(|i| {
                    u.points.0[i] + (k1.0[i] + k2.0[i] * 2.0 + k3.0[i] * 2.0 + k4.0[i]) * sixth
                })
                .collect(),
        );
        let mut next = Curve {
            points,
            winding: u.winding,
        };
        if !next.points.is_finite() {
            return Err(Self::blown_up(state, "non-finite sample".into()));
        }
        let step_count = state.step_count + 1;
        let moved = if step_count.is_multiple_of(self.renormalize_every) {
            next.renormalize(self.target)
        } else {
            0.0
        };
        if let Some(limit) = self.ux_limit {
            let sup = next.velocity(self.grid)?.sup_norm();
            if !(sup <= limit) {
                return Err(Self::blown_up(
                    state,
                    format!("sup |u_x| = {sup:e} exceeds {limit:e}"),
                ));
            }
        }
        Ok(State {
            t: state.t + dt,
            curve: next,
            step_count,
            renorm_total: state.renorm_total + moved,
        })
    }
}

/// Free-function form of [`Stepper::step`] without the velocity blow-up
/// check.
pub fn step(
    state: &State,
    dt: f64,
    rhs: RhsKind,
    target: &Target,
    grid: &Grid,
    params: &FlowParams,
) -> Result<State> {
    Stepper::new(target, grid, *params, rhs).step(state, dt)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub step: u64,
    #[serde(skip)]
    pub curve: Curve,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub config_hash: String,
    pub dt: f64,
    pub steps: u64,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<EnergyReport>,
    /// First diagnostic time at which `N_k(t) > 2 N_k(0)`, if any.
    pub energy_doubling_time: Option<f64>,
}

impl Trajectory {
    pub fn final_curve(&self) -> Option<&Curve> {
        self.snapshots.last().map(|s| &s.curve)
    }
}

#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Trajectory,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (after {} snapshots)",
            self.error,
            self.partial.snapshots.len()
        )
    }
}

impl std::error::Error for RunFailure {}

/// Everything `run` needs, resolved from a [`RunConfig`].
#[derive(Clone, Debug)]
pub struct Setup {
    pub target: Target,
    pub grid: Grid,
    pub params: FlowParams,
    pub initial: Curve,
    pub dt: f64,
    pub steps: u64,
}

impl Setup {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let target = cfg.target;
        let grid = Grid::new(cfg.n)?
            .with_dealias(cfg.dealias)
            .with_compensated_sum(cfg.compensated_sum);
        let params = cfg.flow_params()?;
        let initial = make_initial(&cfg.initial, cfg.seed, &target, &grid)?;
        let nominal = match cfg.stepper.dt {
            Some(dt) => dt,
            None => estimate_dt(&params, &grid, cfg.stepper.safety)?,
        };
        let (steps, dt) = if cfg.t_end == 0.0 {
            (0, nominal)
        } else {
            let steps = (cfg.t_end / nominal * (1.0 - 1e-12)).ceil().max(1.0) as u64;
            (steps, cfg.t_end / steps as f64)
        };
        Ok(Setup {
            target,
            grid,
            params,
            initial,
            dt,
            steps,
        })
    }

    pub fn with_initial(mut self, initial: Curve) -> Result<Self> {
        check_len(self.grid.n(), initial.n())?;
        self.initial = Curve::with_winding(&self.target, initial.points, initial.winding)?;
        Ok(self)
    }
}

/// Integrates `cfg` from `t = 0` to `t_end` with a uniform step no larger
/// than the configured one.
pub fn run(cfg: &RunConfig) -> std::result::Result<Trajectory, RunFailure> {
    run_from(cfg, None)
}

/// Like [`run`], but starts from `initial` in place of the configured curve.
pub fn run_with_initial(
    cfg: &RunConfig,
    initial: Curve,
) -> std::result::Result<Trajectory, RunFailure> {
    run_from(cfg, Some(initial))
}

fn run_from(
    cfg: &RunConfig,
    initial: Option<Curve>,
) -> std::result::Result<Trajectory, RunFailure> {
    let mut traj = Trajectory {
        config_hash: cfg.hash(),
        dt: 0.0,
        steps: 0,
        snapshots: Vec::new(),
        diagnostics: Vec::new(),
        energy_doubling_time: None,
    };
    let setup = match Setup::from_config(cfg).and_then(|s| match initial {
        Some(c) => s.with_initial(c),
        None => Ok(s),
    }) {
        Ok(s) => s,
        Err(error) => {
            return Err(RunFailure {
                error,
                partial: traj,
            })
        }
    };
    traj.dt = setup.dt;
    traj.steps = setup.steps;
    match integrate_into(cfg, &setup, &mut traj) {
        Ok(()) => Ok(traj),
        Err(error) => Err(RunFailure {
            error,
            partial: traj,
        }),
    }
}

fn integrate_into(cfg: &RunConfig, setup: &Setup, traj: &mut Trajectory) -> Result<()> {
    let Setup {
        target,
        grid,
        params,
        dt,
        steps,
        ..
    } = setup;
    let stepper = Stepper::new(target, grid, *params, cfg.rhs)
        .with_scheme(cfg.stepper.scheme)
        .with_renormalize_every(cfg.stepper.renormalize_every)
        .with_blowup_reference(&setup.initial)?;
    let mut state = State::new(setup.initial.clone());

    let record = |state: &State, traj: &mut Trajectory, snap: bool, diag: bool| -> Result<()> {
        if snap {
            traj.snapshots.push(Snapshot {
                t: state.t,
                step: state.step_count,
                curve: state.curve.clone(),
            });
        }
        if diag {
            let report = energy_report(
                target,
                grid,
                &state.curve,
                params,
                cfg.k,
                state.t,
                state.renorm_total,
            )?;
            if let (Some(first), Some(now)) = (
                traj.diagnostics.first().and_then(|r| r.gauged),
                report.gauged,
            ) {
                if traj.energy_doubling_time.is_none() && now > 2.0 * first {
                    traj.energy_doubling_time = Some(report.t);
                }
            }
            traj.diagnostics.push(report);
        }
        Ok(())
    };

    record(&state, traj, true, true)?;
    for s in 1..=*steps {
        let mut next = stepper.step(&state, *dt)?;
        // t from the step index, not by accumulation
        next.t = s as f64 * dt;
        state = next;
        let last = s == *steps;
        record(
            &state,
            traj,
            last || s % cfg.snap_every == 0,
            last || s % cfg.diag_every == 0,
        )?;
    }
    Ok(())
}
