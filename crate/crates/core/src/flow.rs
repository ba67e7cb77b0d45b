//! Right-hand sides of the fourth-order dispersive curve flow
//!
//! ```text
//! u_t = a J∇ₓ³u_x + (λ + b g(u_x,u_x)) J∇ₓu_x + c g(∇ₓu_x,u_x) J u_x
//! ```
//!
//! in covariant form on any target, the equivalent cross-product form on the
//! unit sphere, and the parabolic regularisation that adds `-ε∇ₓ³u_x`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Curve, CurveFrame, Target};
use crate::grid::{Grid, VectorField};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub lambda: f64,
    #[serde(default)]
    pub epsilon: f64,
}

impl FlowParams {
    pub fn new(a: f64, b: f64, c: f64, lambda: f64) -> Self {
        FlowParams {
            a,
            b,
            c,
            lambda,
            epsilon: 0.0,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// All four dispersive constants negated: the same flow run backwards.
    pub fn reversed(&self) -> Self {
        FlowParams {
            a: -self.a,
            b: -self.b,
            c: -self.c,
            lambda: -self.lambda,
            epsilon: self.epsilon,
        }
    }

    /// `a = 0` is accepted only when `allow_second_order` is set, which is
    /// the case for the Schrödinger-map preset.
    pub fn validate(&self, allow_second_order: bool) -> Result<()> {
        let all = [self.a, self.b, self.c, self.lambda, self.epsilon];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("flow constants must be finite"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::invalid(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if self.a == 0.0 && !allow_second_order {
            return Err(Error::invalid(
                "a = 0 is only allowed for the schrodinger-map preset",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Continuum Heisenberg chain with biquadratic exchange: `3a - 2b + c = 0`, `λ = 1`.
    HeisenbergBiquadratic,
    /// Completely integrable subcase: `c = 0`, `3a = 2b`, `λ = 1`.
    Integrable,
    AncoMyrzakulov,
    SchrodingerMap,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::HeisenbergBiquadratic,
        Preset::Integrable,
        Preset::AncoMyrzakulov,
        Preset::SchrodingerMap,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::HeisenbergBiquadratic => "heisenberg-biquadratic",
            Preset::Integrable => "integrable",
            Preset::AncoMyrzakulov => "anco-myrzakulov",
            Preset::SchrodingerMap => "schrodinger-map",
        }
    }

    pub fn constraint(&self) -> &'static str {
        match self {
            Preset::HeisenbergBiquadratic => "3a - 2b + c = 0, lambda = 1",
            Preset::Integrable => "c = 0, 3a - 2b = 0, lambda = 1",
            Preset::AncoMyrzakulov => "a = -1, b = -1, c = -1/2, lambda = 0",
            Preset::SchrodingerMap => "a = b = c = 0, lambda = 1",
        }
    }

    /// Constants for a given leading coefficient `a` where the preset is a
    /// one-parameter family; fixed presets ignore `a`.
    pub fn params_with_a(&self, a: f64) -> FlowParams {
        match self {
            Preset::HeisenbergBiquadratic => FlowParams::new(a, a, -a, 1.0),
            Preset::Integrable => FlowParams::new(a, 1.5 * a, 0.0, 1.0),
            Preset::AncoMyrzakulov => FlowParams::new(-1.0, -1.0, -0.5, 0.0),
            Preset::SchrodingerMap => FlowParams::new(0.0, 0.0, 0.0, 1.0),
        }
    }

    pub fn params(&self) -> FlowParams {
        self.params_with_a(1.0)
    }

    pub fn is_second_order(&self) -> bool {
        *self == Preset::SchrodingerMap
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown preset `{s}`")))
    }
}

pub fn preset(name: &str) -> Result<FlowParams> {
    Ok(name.parse::<Preset>()?.params())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhsKind {
    /// Extrinsic on the sphere without regularisation, regularised when
    /// `ε > 0`, intrinsic otherwise.
    #[default]
    Auto,
    Intrinsic,
    Extrinsic,
    Regularized,
}

impl RhsKind {
    pub fn resolve(self, target: &Target, params: &FlowParams) -> RhsKind {
        match self {
            RhsKind::Auto if params.epsilon > 0.0 => RhsKind::Regularized,
            RhsKind::Auto if *target == Target::UnitSphere => RhsKind::Extrinsic,
            RhsKind::Auto => RhsKind::Intrinsic,
            other => other,
        }
    }
}

fn covariant_rhs(frame: &CurveFrame<'_>, params: &FlowParams, epsilon: f64) -> Result<VectorField> {
    let ders = frame.ux_derivatives(3)?;
    let (ux, n1, n3) = (&ders[0].0, &ders[1].0, &ders[3].0);
    let target = frame.target();
    let points = &frame.curve().points.0;
    let out = (0..ux.len())
        .map(|i| {
            let p = &points[i];
            let s1 = params.lambda + params.b * ux[i].dot(&ux[i]);
            let s2 = params.c * n1[i].dot(&ux[i]);
            let mut v = target.rotate(p, &n3[i]) * params.a
                + target.rotate(p, &n1[i]) * s1
                + target.rotate(p, &ux[i]) * s2;
            if epsilon != 0.0 {
                v -= n3[i] * epsilon;
            }
            v
        })
        .collect();
    Ok(VectorField(out))
}

/// Covariant form, valid on every target.
pub fn rhs_intrinsic(
    params: &FlowParams,
    target: &Target,
    grid: &Grid,
    curve: &Curve,
) -> Result<VectorField> {
    let frame = CurveFrame::new(target, grid, curve)?;
    covariant_rhs(&frame, params, 0.0)
}

/// Cross-product form on the unit sphere:
/// `u ∧ [a ∂ₓ³u_x + (λ + (a+b)|u_x|²) ∂ₓu_x + (5a+c)(∂ₓu_x, u_x) u_x]`.
pub fn rhs_extrinsic_sphere(
    params: &FlowParams,
    target: &Target,
    grid: &Grid,
    curve: &Curve,
) -> Result<VectorField> {
    if *target != Target::UnitSphere {
        return Err(Error::invalid(format!(
            "the cross-product form needs the unit sphere, got {}",
            target.name()
        )));
    }
    let d = curve.derivatives(grid, &[1, 2, 4])?;
    let (ux, uxx, u4) = (&d[0].0, &d[1].0, &d[2].0);
    let (a, ab, ac) = (params.a, params.a + params.b, 5.0 * params.a + params.c);
    let out = curve
        .points
        .0
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let s1 = params.lambda + ab * ux[i].dot(&ux[i]);
            let s2 = ac * uxx[i].dot(&ux[i]);
            let bracket = u4[i] * a + uxx[i] * s1 + ux[i] * s2;
            u.cross(&bracket)
        })
        .collect();
    Ok(VectorField(out))
}

/// Parabolic regularisation `(-ε + aJ)∇ₓ³u_x + …`; identical to
/// [`rhs_intrinsic`] when `ε = 0`.
pub fn rhs_regularized(
    params: &FlowParams,
    target: &Target,
    grid: &Grid,
    curve: &Curve,
) -> Result<VectorField> {
    if !(0.0..=1.0).contains(&params.epsilon) {
        return Err(Error::invalid(format!(
            "epsilon must lie in [0, 1], got {}",
            params.epsilon
        )));
    }
    let frame = CurveFrame::new(target, grid, curve)?;
    covariant_rhs(&frame, params, params.epsilon)
}

pub fn evaluate_rhs(
    kind: RhsKind,
    params: &FlowParams,
    target: &Target,
    grid: &Grid,
    curve: &Curve,
) -> Result<VectorField> {
    match kind.resolve(target, params) {
        RhsKind::Extrinsic => rhs_extrinsic_sphere(params, target, grid, curve),
        RhsKind::Regularized => rhs_regularized(params, target, grid, curve),
        _ => rhs_intrinsic(params, target, grid, curve),
    }
}

/// Angular speed of the rigidly rotating latitude circle
/// `u(t,x) = (r cos(x+ωt), r sin(x+ωt), h)` on the unit sphere, obtained by
/// substituting the ansatz into the cross-product form:
/// `ω = h (a - λ - (a+b) r²)` with `h = √(1-r²)`.
pub fn rotating_latitude_speed(params: &FlowParams, r: f64) -> f64 {
    let h = (1.0 - r * r).sqrt();
    h * (params.a - params.lambda - (params.a + params.b) * r * r)
}
