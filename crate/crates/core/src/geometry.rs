//! Target surfaces and calculus along closed curves lying on them.
//!
//! Every target is handled extrinsically as a surface in `R^3`. The flat
//! torus is the plane `z = 0` with curves stored as lifts, so only the
//! derivatives of a curve carry geometric meaning there. Covariant
//! differentiation along a curve is the tangent projection of the ordinary
//! spectral derivative.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::{Grid, ScalarField, Vec3, VectorField};

/// Constraint residual above which a point counts as off the surface when
/// asking for its curvature.
pub const SURFACE_TOLERANCE: f64 = 1e-8;

/// Residual a validated curve may carry at each node.
pub const CURVE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    #[serde(rename = "sphere")]
    UnitSphere,
    FlatTorus,
    /// Level set `x²/p² + y²/q² + z²/r² = 1`.
    Ellipsoid {
        p: f64,
        q: f64,
        r: f64,
    },
}

impl Target {
    pub fn ellipsoid(p: f64, q: f64, r: f64) -> Result<Self> {
        let t = Target::Ellipsoid { p, q, r };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if let Target::Ellipsoid { p, q, r } = *self {
            if !(p > 0.0 && q > 0.0 && r > 0.0 && p.is_finite() && q.is_finite() && r.is_finite()) {
                return Err(Error::invalid(format!(
                    "ellipsoid semi-axes must be positive, got ({p}, {q}, {r})"
                )));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Target::UnitSphere => "sphere",
            Target::FlatTorus => "flat-torus",
            Target::Ellipsoid { .. } => "ellipsoid",
        }
    }

    /// `Some(S)` when the sectional curvature is the same everywhere.
    pub fn constant_curvature(&self) -> Option<f64> {
        match self {
            Target::UnitSphere => Some(1.0),
            Target::FlatTorus => Some(0.0),
            Target::Ellipsoid { p, q, r } if p == q && q == r => Some(1.0 / (p * p)),
            Target::Ellipsoid { .. } => None,
        }
    }

    fn ellipsoid_weights(&self) -> Option<Vec3> {
        match *self {
            Target::Ellipsoid { p, q, r } => {
                Some(Vec3::new(1.0 / (p * p), 1.0 / (q * q), 1.0 / (r * r)))
            }
            _ => None,
        }
    }

    /// Signed level-set value; zero on the surface.
    pub fn level_set(&self, point: &Vec3) -> f64 {
        match self {
            Target::UnitSphere => point.norm_squared() - 1.0,
            Target::FlatTorus => point.z,
            Target::Ellipsoid { .. } => {
                let w = self.ellipsoid_weights().unwrap();
                point.component_mul(point).dot(&w) - 1.0
            }
        }
    }

    /// Constraint residual: `||u| - 1|` on the sphere, `|Φ(u)|` otherwise.
    pub fn residual(&self, point: &Vec3) -> f64 {
        match self {
            Target::UnitSphere => (point.norm() - 1.0).abs(),
            _ => self.level_set(point).abs(),
        }
    }

    /// Outward unit normal, extended off the surface.
    pub fn normal(&self, point: &Vec3) -> Vec3 {
        match self {
            Target::UnitSphere => point / point.norm(),
            Target::FlatTorus => Vec3::z(),
            Target::Ellipsoid { .. } => {
                let g = point.component_mul(&self.ellipsoid_weights().unwrap());
                g / g.norm()
            }
        }
    }

    /// Jacobian of the extended unit normal field (shape operator on tangents).
    pub fn shape_operator(&self, point: &Vec3) -> Matrix3<f64> {
        match self {
            Target::UnitSphere => {
                let nu = self.normal(point);
                (Matrix3::identity() - nu * nu.transpose()) / point.norm()
            }
            Target::FlatTorus => Matrix3::zeros(),
            Target::Ellipsoid { .. } => {
                let w = self.ellipsoid_weights().unwrap();
                let g = point.component_mul(&w);
                let nu = g / g.norm();
                (Matrix3::identity() - nu * nu.transpose()) * Matrix3::from_diagonal(&w) / g.norm()
            }
        }
    }

    pub fn project(&self, point: &Vec3, y: &Vec3) -> Vec3 {
        match self {
            Target::FlatTorus => Vec3::new(y.x, y.y, 0.0),
            _ => {
                let nu = self.normal(point);
                y - nu * nu.dot(y)
            }
        }
    }

    /// The complex structure: a quarter turn in the tangent plane, oriented
    /// by the outward normal (`u × Y` on the unit sphere).
    pub fn rotate(&self, point: &Vec3, y: &Vec3) -> Vec3 {
        match self {
            Target::FlatTorus => Vec3::new(-y.y, y.x, 0.0),
            _ => self.normal(point).cross(y),
        }
    }

    /// Gaussian curvature at a point assumed to be on the surface.
    pub fn curvature_at(&self, point: &Vec3) -> f64 {
        match *self {
            Target::UnitSphere => 1.0,
            Target::FlatTorus => 0.0,
            Target::Ellipsoid { p, q, r } => {
                let s = point.x * point.x / p.powi(4)
                    + point.y * point.y / q.powi(4)
                    + point.z * point.z / r.powi(4);
                1.0 / ((p * q * r).powi(2) * s * s)
            }
        }
    }

    pub fn sectional_curvature(&self, point: &Vec3) -> Result<f64> {
        let residual = self.residual(point);
        if !(residual <= SURFACE_TOLERANCE) {
            return Err(Error::OffSurface { residual });
        }
        Ok(self.curvature_at(point))
    }

    /// Closest-point style pull back onto the surface: radial on the sphere,
    /// Newton iterations along the gradient on the ellipsoid.
    pub fn renormalize(&self, point: &Vec3) -> Vec3 {
        match self {
            Target::UnitSphere => point / point.norm(),
            Target::FlatTorus => Vec3::new(point.x, point.y, 0.0),
            Target::Ellipsoid { .. } => {
                let w = self.ellipsoid_weights().unwrap();
                let mut x = *point;
                for _ in 0..20 {
                    let phi = self.level_set(&x);
                    if phi.abs() <= 1e-15 {
                        break;
                    }
                    let grad = x.component_mul(&w) * 2.0;
                    x -= grad * (phi / grad.norm_squared());
                }
                x
            }
        }
    }
}

/// A closed curve sampled on a grid. On the flat torus `points` is a lift
/// `winding * x + periodic` and `winding` records the non-periodic part.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub points: VectorField,
    pub winding: Vec3,
}

impl Curve {
    /// Builds a curve and checks it against the target constraint.
    pub fn on(target: &Target, points: VectorField) -> Result<Self> {
        Self::with_winding(target, points, Vec3::zeros())
    }

    pub fn with_winding(target: &Target, points: VectorField, winding: Vec3) -> Result<Self> {
        if !points.is_finite() {
            return Err(Error::invalid("curve has non-finite samples"));
        }
        if *target != Target::FlatTorus && winding != Vec3::zeros() {
            return Err(Error::invalid("only flat-torus curves may wind"));
        }
        let curve = Curve { points, winding };
        let worst = curve.max_residual(target);
        if worst > CURVE_TOLERANCE {
            return Err(Error::OffSurface { residual: worst });
        }
        Ok(curve)
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn max_residual(&self, target: &Target) -> f64 {
        self.points
            .0
            .iter()
            .fold(0.0, |m, p| m.max(target.residual(p)))
    }

    fn periodic_part(&self, grid: &Grid) -> VectorField {
        if self.winding == Vec3::zeros() {
            return self.points.clone();
        }
        VectorField(
            self.points
                .0
                .iter()
                .zip(grid.nodes())
                .map(|(p, x)| p - self.winding * x)
                .collect(),
        )
    }

    /// Ambient derivatives `∂ₓᵐu` for each requested order.
    pub fn derivatives(&self, grid: &Grid, orders: &[u32]) -> Result<Vec<VectorField>> {
        check_len(grid.n(), self.n())?;
        let mut out = grid.derivatives_vec(&self.periodic_part(grid), orders)?;
        for (d, &m) in out.iter_mut().zip(orders) {
            if m == 1 && self.winding != Vec3::zeros() {
                for v in d.0.iter_mut() {
                    *v += self.winding;
                }
            }
        }
        Ok(out)
    }

    /// Raw ambient velocity `∂ₓu`.
    pub fn velocity(&self, grid: &Grid) -> Result<VectorField> {
        Ok(self.derivatives(grid, &[1])?.remove(0))
    }

    /// Pulls every node back onto the target; returns the largest move.
    pub fn renormalize(&mut self, target: &Target) -> f64 {
        let mut moved: f64 = 0.0;
        for p in self.points.0.iter_mut() {
            let q = target.renormalize(p);
            moved = moved.max((q - *p).norm());
            *p = q;
        }
        moved
    }

    /// Cyclic relabelling of the nodes (start point moved by `shift` nodes).
    pub fn shifted(&self, grid: &Grid, shift: usize) -> Curve {
        let n = self.n();
        debug_assert_eq!(grid.n(), n);
        let points = (0..n)
            .map(|j| {
                let src = (j + shift) % n;
                let wrap = ((j + shift) / n) as f64 * 2.0 * PI;
                self.points.0[src] + self.winding * wrap
            })
            .collect();
        Curve {
            points: VectorField(points),
            winding: self.winding,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FrameOperator {
    A1,
    A2,
    P1,
    P2,
}

impl FromStr for FrameOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A1" => Ok(FrameOperator::A1),
            "A2" => Ok(FrameOperator::A2),
            "P1" => Ok(FrameOperator::P1),
            "P2" => Ok(FrameOperator::P2),
            _ => Err(Error::invalid(format!("unknown frame operator `{s}`"))),
        }
    }
}

/// Geometry of one curve on one target: cached normals and `u_x`.
#[derive(Clone, Debug)]
pub struct CurveFrame<'a> {
    target: &'a Target,
    grid: &'a Grid,
    curve: &'a Curve,
    normals: Vec<Vec3>,
    ux: VectorField,
}

impl<'a> CurveFrame<'a> {
    pub fn new(target: &'a Target, grid: &'a Grid, curve: &'a Curve) -> Result<Self> {
        check_len(grid.n(), curve.n())?;
        let normals: Vec<Vec3> = curve.points.0.iter().map(|p| target.normal(p)).collect();
        let raw = curve.velocity(grid)?;
        let ux = project_with(target, &curve.points, &raw);
        Ok(CurveFrame {
            target,
            grid,
            curve,
            normals,
            ux,
        })
    }

    pub fn target(&self) -> &Target {
        self.target
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn curve(&self) -> &Curve {
        self.curve
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    /// Tangent-projected velocity `u_x`.
    pub fn ux(&self) -> &VectorField {
        &self.ux
    }

    pub fn project(&self, y: &VectorField) -> Result<VectorField> {
        check_len(self.grid.n(), y.len())?;
        Ok(project_with(self.target, &self.curve.points, y))
    }

    /// `J_u Y` at every node.
    pub fn rotate(&self, y: &VectorField) -> Result<VectorField> {
        check_len(self.grid.n(), y.len())?;
        Ok(VectorField(
            self.curve
                .points
                .0
                .iter()
                .zip(&y.0)
                .map(|(p, v)| self.target.rotate(p, v))
                .collect(),
        ))
    }

    /// `∇ₓᵐY`, each application being project(∂ₓ ·).
    pub fn covariant_derivative(&self, y: &VectorField, m: u32) -> Result<VectorField> {
        if m < 1 {
            return Err(Error::invalid(
                "covariant derivative order must be at least 1",
            ));
        }
        let mut out = y.clone();
        for _ in 0..m {
            let d = self.grid.derivative_vec(&out, 1)?;
            out = self.project(&d)?;
        }
        Ok(out)
    }

    /// `[u_x, ∇ₓu_x, …, ∇ₓᵐu_x]`.
    pub fn ux_derivatives(&self, m: u32) -> Result<Vec<VectorField>> {
        let mut out = Vec::with_capacity(m as usize + 1);
        out.push(self.ux.clone());
        for _ in 0..m {
            let next = self.covariant_derivative(out.last().unwrap(), 1)?;
            out.push(next);
        }
        Ok(out)
    }

    /// Pointwise Gaussian curvature `S(u(x))`.
    pub fn curvature(&self) -> ScalarField {
        ScalarField(
            self.curve
                .points
                .0
                .iter()
                .map(|p| self.target.curvature_at(p))
                .collect(),
        )
    }

    pub fn frame_operator(&self, kind: FrameOperator, y: &VectorField) -> Result<VectorField> {
        check_len(self.grid.n(), y.len())?;
        let nabla_ux = self.covariant_derivative(&self.ux, 1)?;
        let j_ux = self.rotate(&self.ux)?;
        let j_nabla_ux = self.rotate(&nabla_ux)?;
        let ux = &self.ux.0;
        let out = (0..self.grid.n())
            .map(|i| {
                let yi = y.0[i];
                match kind {
                    FrameOperator::A1 => {
                        j_ux.0[i] * yi.dot(&nabla_ux.0[i])
                            + j_nabla_ux.0[i] * yi.dot(&ux[i])
                            + ux[i] * yi.dot(&j_nabla_ux.0[i])
                            + nabla_ux.0[i] * yi.dot(&j_ux.0[i])
                    }
                    FrameOperator::A2 => {
                        nabla_ux.0[i] * yi.dot(&j_ux.0[i]) - ux[i] * yi.dot(&j_nabla_ux.0[i])
                    }
                    FrameOperator::P1 => j_ux.0[i] * yi.dot(&ux[i]),
                    FrameOperator::P2 => {
                        self.target.rotate(&self.curve.points.0[i], &yi) * nabla_ux.0[i].dot(&ux[i])
                    }
                }
            })
            .collect();
        Ok(VectorField(out))
    }
}

fn project_with(target: &Target, points: &VectorField, y: &VectorField) -> VectorField {
    VectorField(
        points
            .0
            .iter()
            .zip(&y.0)
            .map(|(p, v)| target.project(p, v))
            .collect(),
    )
}

pub fn project_tangent(target: &Target, curve: &Curve, y: &VectorField) -> Result<VectorField> {
    check_len(curve.n(), y.len())?;
    Ok(project_with(target, &curve.points, y))
}

pub fn complex_structure(target: &Target, curve: &Curve, y: &VectorField) -> Result<VectorField> {
    check_len(curve.n(), y.len())?;
    Ok(VectorField(
        curve
            .points
            .0
            .iter()
            .zip(&y.0)
            .map(|(p, v)| target.rotate(p, v))
            .collect(),
    ))
}

pub fn covariant_derivative(
    target: &Target,
    grid: &Grid,
    curve: &Curve,
    y: &VectorField,
    m: u32,
) -> Result<VectorField> {
    CurveFrame::new(target, grid, curve)?.covariant_derivative(y, m)
}

pub fn metric_inner(y1: &VectorField, y2: &VectorField) -> Result<ScalarField> {
    check_len(y1.len(), y2.len())?;
    Ok(y1.dot(y2))
}

/// `|LHS - RHS|` of the Gauss equation written through the shape operator
/// `D = grad ν`: `(Y3, D Y2) P D Y1 - (Y3, D Y1) P D Y2 = S {(Y3,Y2) Y1 - (Y3,Y1) Y2}`.
pub fn gauss_equation_residual(target: &Target, point: &Vec3, y: [Vec3; 3]) -> f64 {
    let d = target.shape_operator(point);
    let [y1, y2, y3] = y;
    let (dy1, dy2) = (d * y1, d * y2);
    let lhs =
        target.project(point, &dy1) * y3.dot(&dy2) - target.project(point, &dy2) * y3.dot(&dy1);
    let rhs = (y1 * y3.dot(&y2) - y2 * y3.dot(&y1)) * target.curvature_at(point);
    (lhs - rhs).norm()
}

/// Closed-form initial data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialCurve {
    GreatCircle,
    Latitude {
        r: f64,
    },
    PerturbedGreatCircle {
        mode: u32,
        amplitude: f64,
    },
    /// Great circle plus a seeded trigonometric polynomial of degree
    /// `max_mode` whose sup norm is at most `amplitude`.
    BandLimitedRandom {
        max_mode: u32,
        amplitude: f64,
    },
}

impl InitialCurve {
    pub fn name(&self) -> &'static str {
        match self {
            InitialCurve::GreatCircle => "great-circle",
            InitialCurve::Latitude { .. } => "latitude",
            InitialCurve::PerturbedGreatCircle { .. } => "perturbed-great-circle",
            InitialCurve::BandLimitedRandom { .. } => "band-limited-random",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialCurve::Latitude { r } if !(r > 0.0 && r <= 1.0) => Err(Error::invalid(format!(
                "latitude radius must lie in (0, 1], got {r}"
            ))),
            InitialCurve::PerturbedGreatCircle { amplitude, .. }
            | InitialCurve::BandLimitedRandom { amplitude, .. }
                if !amplitude.is_finite() =>
            {
                Err(Error::invalid("perturbation amplitude must be finite"))
            }
            _ => Ok(()),
        }
    }
}

/// Fourier coefficients `(a_k, b_k)` for `k = 0..=max_mode`, drawn uniformly
/// from `[-1, 1]^3` by a ChaCha8 stream; independent of the grid size.
pub fn random_coefficients(max_mode: u32, seed: u64) -> Vec<(Vec3, Vec3)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        Vec3::new(
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
        )
    };
    (0..=max_mode).map(|_| (draw(), draw())).collect()
}

fn trig_sum(coeffs: &[(Vec3, Vec3)], x: f64) -> Vec3 {
    coeffs
        .iter()
        .enumerate()
        .fold(Vec3::zeros(), |acc, (k, (a, b))| {
            let kx = k as f64 * x;
            acc + a * kx.cos() + b * kx.sin()
        })
}

/// Samples initial data for `target` on `grid`. Sphere curves are radially
/// normalised smooth loops; ellipsoid curves are their images under
/// `diag(p, q, r)`; flat-torus curves are planar lifts of winding `(1, 0)`.
pub fn make_initial(kind: &InitialCurve, seed: u64, target: &Target, grid: &Grid) -> Result<Curve> {
    kind.validate()?;
    target.validate()?;
    let coeffs = match *kind {
        InitialCurve::BandLimitedRandom { max_mode, .. } => {
            // scaled so that `amplitude` bounds the sup of the perturbation
            let raw = random_coefficients(max_mode, seed);
            let l1: f64 = raw.iter().map(|(a, b)| a.norm() + b.norm()).sum();
            raw.into_iter().map(|(a, b)| (a / l1, b / l1)).collect()
        }
        _ => Vec::new(),
    };
    let xs = grid.nodes();
    match *target {
        Target::FlatTorus => {
            let periodic = |x: f64| -> Result<Vec3> {
                Ok(match *kind {
                    InitialCurve::GreatCircle => Vec3::zeros(),
                    InitialCurve::Latitude { .. } => {
                        return Err(Error::invalid("latitude circles need a curved target"))
                    }
                    InitialCurve::PerturbedGreatCircle { mode, amplitude } => {
                        Vec3::new(0.0, amplitude * (mode as f64 * x).cos(), 0.0)
                    }
                    InitialCurve::BandLimitedRandom { amplitude, .. } => {
                        let s = trig_sum(&coeffs, x) * amplitude;
                        Vec3::new(s.x, s.y, 0.0)
                    }
                })
            };
            let points = xs
                .iter()
                .map(|&x| Ok(Vec3::new(x, 0.0, 0.0) + periodic(x)?))
                .collect::<Result<Vec<_>>>()?;
            Curve::with_winding(target, VectorField(points), Vec3::x())
        }
        Target::UnitSphere | Target::Ellipsoid { .. } => {
            let scale = match *target {
                Target::Ellipsoid { p, q, r } => Vec3::new(p, q, r),
                _ => Vec3::new(1.0, 1.0, 1.0),
            };
            let points = xs
                .iter()
                .map(|&x| sphere_point(kind, &coeffs, x).component_mul(&scale))
                .collect();
            let mut curve = Curve {
                points: VectorField(points),
                winding: Vec3::zeros(),
            };
            if curve.max_residual(target) > CURVE_TOLERANCE {
                curve.renormalize(target);
            }
            Curve::on(target, curve.points)
        }
    }
}

fn sphere_point(kind: &InitialCurve, coeffs: &[(Vec3, Vec3)], x: f64) -> Vec3 {
    let v = match *kind {
        InitialCurve::GreatCircle => return Vec3::new(x.cos(), x.sin(), 0.0),
        InitialCurve::Latitude { r } => {
            let h = (1.0 - r * r).sqrt();
            return Vec3::new(r * x.cos(), r * x.sin(), h);
        }
        InitialCurve::PerturbedGreatCircle { mode, amplitude } => {
            Vec3::new(x.cos(), x.sin(), amplitude * (mode as f64 * x).cos())
        }
        InitialCurve::BandLimitedRandom { amplitude, .. } => {
            Vec3::new(x.cos(), x.sin(), 0.0) + trig_sum(coeffs, x) * amplitude
        }
    };
    v / v.norm()
}

/// Adds `δ cos(mode·x)` along a fixed oblique direction to every node and
/// re-projects onto the target.
pub fn perturb(
    target: &Target,
    grid: &Grid,
    curve: &Curve,
    mode: u32,
    delta: f64,
) -> Result<Curve> {
    check_len(grid.n(), curve.n())?;
    if delta == 0.0 {
        return Ok(curve.clone());
    }
    let dir = Vec3::new(0.3, -0.2, 1.0).normalize();
    let mut out = Curve {
        points: VectorField(
            curve
                .points
                .0
                .iter()
                .zip(grid.nodes())
                .map(|(p, x)| p + dir * (delta * (mode as f64 * x).cos()))
                .collect(),
        ),
        winding: curve.winding,
    };
    out.renormalize(target);
    Curve::with_winding(target, out.points, out.winding)
}
