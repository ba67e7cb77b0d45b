//! Covariant Sobolev norms, gauged energies, difference energies and the
//! curvature-obstruction diagnostic.
//!
//! Norm convention: `‖V‖²_{H^m} = Σ_{ℓ≤m} ∫ g(∇ₓˡV, ∇ₓˡV) dx`. Functions in
//! this module work with the squared sums internally and return square
//! roots.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::flow::FlowParams;
use crate::geometry::{Curve, CurveFrame, Target};
use crate::grid::{Grid, VectorField};

/// Coefficients of the gauge that removes the derivative loss at Sobolev
/// level `k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeCoefficients {
    pub k: u32,
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub d2: f64,
}

impl GaugeCoefficients {
    /// `s` is the constant sectional curvature of the target.
    pub fn new(params: &FlowParams, s: f64, k: u32) -> Self {
        let (a, b, c) = (params.a, params.b, params.c);
        let kf = k as f64;
        let c1 = a * s + c;
        let c2 = (kf - 0.5) * a * s + (2.0 * kf + 1.0) * b + (kf + 2.5) * c;
        let d1 = c1;
        let d2 = c2 + d1;
        GaugeCoefficients { k, c1, c2, d1, d2 }
    }
}

/// Coefficients of the gauge used on the difference of two solutions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferenceGaugeCoefficients {
    pub e1: f64,
    pub e2: f64,
}

impl DifferenceGaugeCoefficients {
    pub fn new(params: &FlowParams, s: f64) -> Self {
        let (a, b, c) = (params.a, params.b, params.c);
        let e1 = a * s + c;
        let e2 = e1 + (a * s + 6.0 * b + 7.0 * c) / 2.0;
        DifferenceGaugeCoefficients { e1, e2 }
    }
}

fn constant_curvature(target: &Target) -> Result<f64> {
    target
        .constant_curvature()
        .ok_or_else(|| Error::invalid(format!("{} has no constant curvature", target.name())))
}

/// `[‖∇ₓˡu_x‖²_{L²}]` for `ℓ = 0..=m`.
pub fn level_norms_squared(frame: &CurveFrame<'_>, m: u32) -> Result<Vec<f64>> {
    let grid = frame.grid();
    frame
        .ux_derivatives(m)?
        .iter()
        .map(|d| grid.l2_squared(d))
        .collect()
}

pub fn sobolev_norm(target: &Target, grid: &Grid, curve: &Curve, m: u32) -> Result<f64> {
    let frame = CurveFrame::new(target, grid, curve)?;
    Ok(level_norms_squared(&frame, m)?.iter().sum::<f64>().sqrt())
}

/// `V_k = ∇ₓᵏu_x − (d₁/2a) g(∇ₓᵏ⁻²u_x, Ju_x) Ju_x + (d₂/8a) g(u_x,u_x) ∇ₓᵏ⁻²u_x`
/// with explicit gauge constants.
pub fn gauge_field_with(
    frame: &CurveFrame<'_>,
    k: u32,
    a: f64,
    d1: f64,
    d2: f64,
) -> Result<VectorField> {
    if k < 2 {
        return Err(Error::invalid(format!(
            "gauge level must be at least 2, got {k}"
        )));
    }
    if a == 0.0 {
        return Err(Error::invalid("the gauge is undefined for a = 0"));
    }
    let ders = frame.ux_derivatives(k)?;
    let ux = &ders[0];
    let low = &ders[(k - 2) as usize];
    let top = &ders[k as usize];
    let jux = frame.rotate(ux)?;
    let out = (0..ux.len())
        .map(|i| {
            let l1 = -(d1 / (2.0 * a)) * low.0[i].dot(&jux.0[i]);
            let l2 = (d2 / (8.0 * a)) * ux.0[i].dot(&ux.0[i]);
            top.0[i] + jux.0[i] * l1 + low.0[i] * l2
        })
        .collect();
    Ok(VectorField(out))
}

pub fn gauge_field(
    target: &Target,
    grid: &Grid,
    curve: &Curve,
    k: u32,
    params: &FlowParams,
) -> Result<VectorField> {
    let s = constant_curvature(target)?;
    let g = GaugeCoefficients::new(params, s, k);
    let frame = CurveFrame::new(target, grid, curve)?;
    gauge_field_with(&frame, k, params.a, g.d1, g.d2)
}

/// `N_k = √(‖u_x‖²_{H^{k−1}} + ‖V_k‖²_{L²})`.
pub fn gauged_energy(
    target: &Target,
    grid: &Grid,
    curve: &Curve,
    k: u32,
    params: &FlowParams,
) -> Result<f64> {
    let s = constant_curvature(target)?;
    let frame = CurveFrame::new(target, grid, curve)?;
    let g = GaugeCoefficients::new(params, s, k);
    gauged_energy_from(&frame, k, params.a, &g)
}

fn gauged_energy_from(
    frame: &CurveFrame<'_>,
    k: u32,
    a: f64,
    g: &GaugeCoefficients,
) -> Result<f64> {
    let v = gauge_field_with(frame, k, a, g.d1, g.d2)?;
    let lower: f64 = level_norms_squared(frame, k - 1)?.iter().sum();
    Ok((lower + frame.grid().l2_squared(&v)?).sqrt())
}

/// `E = ∫ g(u_x,u_x) dx` and its rate along the flow,
/// `dE/dt = −2c ∫ g(∇ₓu_x,u_x) g(Ju_x,∇ₓu_x) dx`.
///
/// The `a`, `b` and `λ` terms drop out: their contributions are
/// `g(J∇ₓu_x, ∇ₓu_x) = 0` pointwise, and `∫ g(J∇ₓ³u_x, ∇ₓu_x)` becomes
/// `−∫ g(J∇ₓ²u_x, ∇ₓ²u_x) = 0` after one integration by parts.
pub fn length_energy_and_rate(
    target: &Target,
    grid: &Grid,
    curve: &Curve,
    params: &FlowParams,
) -> Result<(f64, f64)> {
    constant_curvature(target)?;
    let frame = CurveFrame::new(target, grid, curve)?;
    let ux = frame.ux();
    let n1 = frame.covariant_derivative(ux, 1)?;
    let jux = frame.rotate(ux)?;
    let energy = grid.l2_squared(ux)?;
    let integrand = crate::grid::ScalarField(
        (0..ux.len())
            .map(|i| n1.0[i].dot(&ux.0[i]) * jux.0[i].dot(&n1.0[i]))
            .collect(),
    );
    Ok((energy, -2.0 * params.c * grid.quadrature(&integrand)?))
}

struct DifferenceFields {
    z: VectorField,
    zx: VectorField,
    w: VectorField,
    ux: VectorField,
}

fn difference_fields(
    target: &Target,
    grid: &Grid,
    u: &Curve,
    v: &Curve,
) -> Result<DifferenceFields> {
    check_len(grid.n(), u.n())?;
    check_len(grid.n(), v.n())?;
    if u.winding != v.winding {
        return Err(Error::invalid(
            "curves with different windings cannot be compared",
        ));
    }
    let z = u.points.sub(&v.points);
    let zx = grid.derivative_vec(&z, 1)?;
    let du = u.derivatives(grid, &[1, 2])?;
    let dv = v.derivatives(grid, &[2])?;
    let proj = |c: &Curve, f: &VectorField| -> VectorField {
        VectorField(
            c.points
                .0
                .iter()
                .zip(&f.0)
                .map(|(p, y)| target.project(p, y))
                .collect(),
        )
    };
    let w = proj(u, &du[1]).sub(&proj(v, &dv[0]));
    Ok(DifferenceFields {
        z,
        zx,
        w,
        ux: du[0].clone(),
    })
}

/// `D = √(‖Z‖² + ‖Z_x‖² + ‖W‖²)` with `Z = U − V` and
/// `W = P_U(∂ₓU_x) − P_V(∂ₓV_x)`.
pub fn difference_energy(target: &Target, grid: &Grid, u: &Curve, v: &Curve) -> Result<f64> {
    let f = difference_fields(target, grid, u, v)?;
    Ok((grid.l2_squared(&f.z)? + grid.l2_squared(&f.zx)? + grid.l2_squared(&f.w)?).sqrt())
}

/// `D̃` with explicit gauge constants `e₁, e₂`.
pub fn gauged_difference_energy_with(
    target: &Target,
    grid: &Grid,
    u: &Curve,
    v: &Curve,
    a: f64,
    e1: f64,
    e2: f64,
) -> Result<f64> {
    if a == 0.0 {
        return Err(Error::invalid(
            "the difference gauge is undefined for a = 0",
        ));
    }
    let f = difference_fields(target, grid, u, v)?;
    let gauged = VectorField(
        (0..f.z.len())
            .map(|i| {
                let p = &u.points.0[i];
                let jux = target.rotate(p, &f.ux.0[i]);
                let l1 = -(e1 / (2.0 * a)) * f.z.0[i].dot(&jux);
                let l2 = (e2 / (8.0 * a)) * f.ux.0[i].dot(&f.ux.0[i]);
                f.w.0[i] + jux * l1 + f.z.0[i] * l2
            })
            .collect(),
    );
    Ok((grid.l2_squared(&f.z)? + grid.l2_squared(&f.zx)? + grid.l2_squared(&gauged)?).sqrt())
}

pub fn gauged_difference_energy(
    target: &Target,
    grid: &Grid,
    u: &Curve,
    v: &Curve,
    params: &FlowParams,
) -> Result<f64> {
    let e = DifferenceGaugeCoefficients::new(params, constant_curvature(target)?);
    gauged_difference_energy_with(target, grid, u, v, params.a, e.e1, e.e2)
}

/// `∫ ∂ₓ{S(u)} g(u_x,u_x) dx`, which vanishes identically on
/// constant-curvature targets.
pub fn curvature_obstruction(target: &Target, grid: &Grid, curve: &Curve) -> Result<f64> {
    let frame = CurveFrame::new(target, grid, curve)?;
    obstruction_from(&frame)
}

fn obstruction_from(frame: &CurveFrame<'_>) -> Result<f64> {
    let grid = frame.grid();
    let ds = grid.derivative(&frame.curvature(), 1)?;
    let ux = frame.ux();
    let integrand =
        crate::grid::ScalarField(ds.0.iter().zip(&ux.0).map(|(d, v)| d * v.dot(v)).collect());
    grid.quadrature(&integrand)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    /// Sobolev level the gauge was evaluated at.
    pub k: u32,
    /// `‖∇ₓˡu_x‖_{L²}` for `ℓ = 0..=k`.
    pub levels: Vec<f64>,
    /// `N_k`; absent when the gauge is undefined (`a = 0` or variable curvature).
    pub gauged: Option<f64>,
    /// `∫ g(u_x,u_x) dx`.
    pub length: f64,
    pub obstruction: f64,
    pub renorm_drift: f64,
}

pub fn energy_report(
    target: &Target,
    grid: &Grid,
    curve: &Curve,
    params: &FlowParams,
    k: u32,
    t: f64,
    renorm_drift: f64,
) -> Result<EnergyReport> {
    if k < 2 {
        return Err(Error::invalid(format!(
            "energy level must be at least 2, got {k}"
        )));
    }
    let frame = CurveFrame::new(target, grid, curve)?;
    let squares = level_norms_squared(&frame, k)?;
    let gauged = match target.constant_curvature() {
        Some(s) if params.a != 0.0 => {
            let g = GaugeCoefficients::new(params, s, k);
            Some(gauged_energy_from(&frame, k, params.a, &g)?)
        }
        _ => None,
    };
    Ok(EnergyReport {
        t,
        k,
        levels: squares.iter().map(|s| s.sqrt()).collect(),
        gauged,
        length: squares[0],
        obstruction: obstruction_from(&frame)?,
        renorm_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::preset;
    use crate::geometry::{make_initial, InitialCurve};
    use std::f64::consts::PI;

    fn sphere(kind: InitialCurve, n: usize) -> (Target, Grid, Curve) {
        let t = Target::UnitSphere;
        let g = Grid::new(n).unwrap();
        let c = make_initial(&kind, 3, &t, &g).unwrap();
        (t, g, c)
    }

    #[test]
    fn gauge_coefficient_spot_values() {
        let g = GaugeCoefficients::new(&preset("integrable").unwrap(), 1.0, 4);
        assert_eq!((g.d1, g.d2), (1.0, 18.0));
        let e = DifferenceGaugeCoefficients::new(&preset("anco-myrzakulov").unwrap(), 1.0);
        assert_eq!((e.e1, e.e2), (-1.5, -6.75));
    }

    #[test]
    fn sobolev_norm_examples() {
        let (t, g, c) = sphere(InitialCurve::GreatCircle, 32);
        assert!((sobolev_norm(&t, &g, &c, 3).unwrap() - (2.0 * PI).sqrt()).abs() <= 1e-12);
        let (t, g, c) = sphere(InitialCurve::Latitude { r: 0.6 }, 32);
        assert!((sobolev_norm(&t, &g, &c, 0).unwrap() - (2.0 * PI).sqrt() * 0.6).abs() <= 1e-12);
        let ux = c.velocity(&g).unwrap();
        assert!(
            (sobolev_norm(&t, &g, &c, 0).unwrap() - g.l2_squared(&ux).unwrap().sqrt()).abs()
                <= 1e-13
        );
    }

    #[test]
    fn gauge_vanishes_on_great_circle() {
        let (t, g, c) = sphere(InitialCurve::GreatCircle, 16);
        let p = preset("integrable").unwrap();
        assert!(gauge_field(&t, &g, &c, 4, &p).unwrap().sup_norm() <= 1e-12);
        assert!((gauged_energy(&t, &g, &c, 4, &p).unwrap() - (2.0 * PI).sqrt()).abs() <= 1e-12);
        assert!(gauge_field(&t, &g, &c, 4, &preset("schrodinger-map").unwrap()).is_err());
        assert!(gauge_field(&t, &g, &c, 1, &p).is_err());
    }

    #[test]
    fn gauge_off_is_plain_derivative() {
        let kind = InitialCurve::BandLimitedRandom {
            max_mode: 4,
            amplitude: 0.1,
        };
        let (t, g, c) = sphere(kind, 32);
        let frame = CurveFrame::new(&t, &g, &c).unwrap();
        let v = gauge_field_with(&frame, 4, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(v, frame.covariant_derivative(frame.ux(), 4).unwrap());
        let p = preset("integrable").unwrap();
        let nk = gauged_energy(&t, &g, &c, 4, &p).unwrap();
        assert!(nk >= sobolev_norm(&t, &g, &c, 3).unwrap());
    }

    #[test]
    fn difference_energy_basics() {
        let kind = InitialCurve::BandLimitedRandom {
            max_mode: 4,
            amplitude: 0.1,
        };
        let (t, g, u) = sphere(kind, 32);
        let v = make_initial(&InitialCurve::GreatCircle, 0, &t, &g).unwrap();
        assert_eq!(difference_energy(&t, &g, &u, &u).unwrap(), 0.0);
        let p = preset("anco-myrzakulov").unwrap();
        assert_eq!(gauged_difference_energy(&t, &g, &u, &u, &p).unwrap(), 0.0);
        let duv = difference_energy(&t, &g, &u, &v).unwrap();
        assert_eq!(duv, difference_energy(&t, &g, &v, &u).unwrap());
        let off = gauged_difference_energy_with(&t, &g, &u, &v, p.a, 0.0, 0.0).unwrap();
        assert!((off - duv).abs() <= 1e-14 * duv);
    }

    #[test]
    fn difference_energy_shrinks_towards_great_circle() {
        let t = Target::UnitSphere;
        let g = Grid::new(32).unwrap();
        let gc = make_initial(&InitialCurve::GreatCircle, 0, &t, &g).unwrap();
        let d = |r: f64| {
            let lat = make_initial(&InitialCurve::Latitude { r }, 0, &t, &g).unwrap();
            difference_energy(&t, &g, &gc, &lat).unwrap()
        };
        let (d1, d2) = (d(0.99), d(0.999));
        assert!(d2 < d1 && d1 < 1.0);
    }

    #[test]
    fn length_rate_vanishes_without_c() {
        let (t, g, c) = sphere(InitialCurve::GreatCircle, 32);
        let (e, rate) =
            length_energy_and_rate(&t, &g, &c, &preset("heisenberg-biquadratic").unwrap()).unwrap();
        assert!((e - 2.0 * PI).abs() < 1e-12 && rate.abs() < 1e-12);
        let kind = InitialCurve::BandLimitedRandom {
            max_mode: 4,
            amplitude: 0.1,
        };
        let (t, g, c) = sphere(kind, 32);
        let (_, rate) = length_energy_and_rate(&t, &g, &c, &preset("integrable").unwrap()).unwrap();
        assert_eq!(rate, 0.0);
    }

    #[test]
    fn obstruction_vanishes_on_constant_curvature() {
        let kind = InitialCurve::BandLimitedRandom {
            max_mode: 4,
            amplitude: 0.2,
        };
        for t in [Target::UnitSphere, Target::FlatTorus] {
            let g = Grid::new(32).unwrap();
            let c = make_initial(&kind, 1, &t, &g).unwrap();
            assert!(curvature_obstruction(&t, &g, &c).unwrap().abs() <= 1e-12);
        }
    }
}
