//! Periodic spectral calculus on the circle `T = R / 2πZ`.
//!
//! A [`Grid`] holds `n` equispaced nodes `x_j = 2πj/n` together with cached
//! FFT plans. Differentiation multiplies mode `k` by `(ik)^m`; odd orders
//! drop the Nyquist mode so real fields stay real. Vector fields are
//! transformed two real components at a time by packing them into the real
//! and imaginary parts of one complex signal, which is exact because every
//! operator here commutes with complex conjugation.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::Vector3;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, Error, Result};

pub type Vec3 = Vector3<f64>;

/// One real value per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField(pub Vec<f64>);

/// One ambient 3-vector per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField(pub Vec<Vec3>);

impl ScalarField {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl VectorField {
    pub fn zeros(n: usize) -> Self {
        VectorField(vec![Vec3::zeros(); n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Largest Euclidean norm over the nodes.
    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        VectorField(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        VectorField(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, s: f64) -> VectorField {
        VectorField(self.0.iter().map(|v| v * s).collect())
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &VectorField) -> VectorField {
        VectorField(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b * s)
                .collect(),
        )
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.0.iter().map(|v| v[c]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Pointwise Euclidean inner product.
    pub fn dot(&self, other: &VectorField) -> ScalarField {
        ScalarField(self.0.iter().zip(&other.0).map(|(a, b)| a.dot(b)).collect())
    }
}

#[derive(Clone)]
pub struct Grid {
    n: usize,
    dealias: bool,
    compensated: bool,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("dealias", &self.dealias)
            .field("compensated", &self.compensated)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.dealias == other.dealias && self.compensated == other.compensated
    }
}

pub const MIN_NODES: usize = 8;

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < MIN_NODES || !n.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "grid size must be even and at least {MIN_NODES}, got {n}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Grid {
            n,
            dealias: false,
            compensated: false,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    /// Enable 2/3-rule truncation inside every derivative.
    pub fn with_dealias(mut self, on: bool) -> Self {
        self.dealias = on;
        self
    }

    /// Use Neumaier compensated summation in [`Grid::quadrature`].
    pub fn with_compensated_sum(mut self, on: bool) -> Self {
        self.compensated = on;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Integer wavenumber stored at FFT slot `idx`; slot `n/2` is `-n/2`.
    pub fn wavenumber(&self, idx: usize) -> i64 {
        let half = self.n / 2;
        if idx < half {
            idx as i64
        } else {
            idx as i64 - self.n as i64
        }
    }

    /// Wavenumbers in FFT storage order: `0, 1, .., n/2-1, -n/2, .., -1`.
    pub fn wavenumbers(&self) -> Vec<i64> {
        (0..self.n).map(|i| self.wavenumber(i)).collect()
    }

    pub fn max_wavenumber(&self) -> f64 {
        (self.n / 2) as f64
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField(self.nodes().into_iter().map(f).collect())
    }

    pub fn sample_vec(&self, f: impl Fn(f64) -> Vec3) -> VectorField {
        VectorField(self.nodes().into_iter().map(f).collect())
    }

    fn multiplier(&self, idx: usize, order: u32) -> Complex64 {
        let k = self.wavenumber(idx);
        let nyquist = idx == self.n / 2;
        if nyquist && order % 2 == 1 {
            return Complex64::new(0.0, 0.0);
        }
        if self.dealias && (3 * k.unsigned_abs() as usize) > self.n {
            return Complex64::new(0.0, 0.0);
        }
        // (ik)^m without going through powi on a complex number
        let mag = (k as f64).powi(order as i32);
        match order % 4 {
            0 => Complex64::new(mag, 0.0),
            1 => Complex64::new(0.0, mag),
            2 => Complex64::new(-mag, 0.0),
            _ => Complex64::new(0.0, -mag),
        }
    }

    fn forward_pair(&self, re: &[f64], im: Option<&[f64]>) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = match im {
            Some(im) => re
                .iter()
                .zip(im)
                .map(|(&a, &b)| Complex64::new(a, b))
                .collect(),
            None => re.iter().map(|&a| Complex64::new(a, 0.0)).collect(),
        };
        self.forward.process(&mut buf);
        buf
    }

    fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let scale = 1.0 / self.n as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }

    /// Derivatives of several orders of up to two packed real signals,
    /// sharing one forward transform.
    fn derive_packed(&self, spectrum: &[Complex64], orders: &[u32]) -> Vec<Vec<Complex64>> {
        orders
            .iter()
            .map(|&m| {
                let mut buf: Vec<Complex64> = spectrum
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| c * self.multiplier(i, m))
                    .collect();
                self.inverse_in_place(&mut buf);
                buf
            })
            .collect()
    }

    fn check_orders(orders: &[u32]) -> Result<()> {
        if orders.iter().any(|&m| m < 1) {
            return Err(Error::invalid("derivative order must be at least 1"));
        }
        Ok(())
    }

    pub fn derivative(&self, f: &ScalarField, order: u32) -> Result<ScalarField> {
        Ok(self.derivatives(f, &[order])?.remove(0))
    }

    pub fn derivatives(&self, f: &ScalarField, orders: &[u32]) -> Result<Vec<ScalarField>> {
        check_len(self.n, f.len())?;
        Self::check_orders(orders)?;
        let spec = self.forward_pair(&f.0, None);
        Ok(self
            .derive_packed(&spec, orders)
            .into_iter()
            .map(|buf| ScalarField(buf.iter().map(|z| z.re).collect()))
            .collect())
    }

    /// Componentwise derivative of an ambient vector field.
    pub fn derivative_vec(&self, f: &VectorField, order: u32) -> Result<VectorField> {
        Ok(self.derivatives_vec(f, &[order])?.remove(0))
    }

    pub fn derivatives_vec(&self, f: &VectorField, orders: &[u32]) -> Result<Vec<VectorField>> {
        check_len(self.n, f.len())?;
        Self::check_orders(orders)?;
        let (x, y, z) = (f.component(0), f.component(1), f.component(2));
        let xy = self.derive_packed(&self.forward_pair(&x, Some(&y)), orders);
        let zz = self.derive_packed(&self.forward_pair(&z, None), orders);
        Ok(xy
            .into_iter()
            .zip(zz)
            .map(|(a, b)| {
                VectorField(
                    a.iter()
                        .zip(&b)
                        .map(|(p, q)| Vec3::new(p.re, p.im, q.re))
                        .collect(),
                )
            })
            .collect())
    }

    /// Trapezoidal rule `(2π/n) Σ f(x_j)`, spectrally accurate for smooth
    /// periodic integrands.
    pub fn quadrature(&self, f: &ScalarField) -> Result<f64> {
        check_len(self.n, f.len())?;
        let sum = if self.compensated {
            neumaier_sum(&f.0)
        } else {
            f.0.iter().sum::<f64>()
        };
        Ok(self.spacing() * sum)
    }

    /// `∫ |Y|² dx` for an ambient field.
    pub fn l2_squared(&self, f: &VectorField) -> Result<f64> {
        self.quadrature(&f.dot(f))
    }

    fn resample_spectrum(&self, spec: &[Complex64], target: &Grid) -> Vec<Complex64> {
        let (n, m) = (self.n, target.n);
        let mut out = vec![Complex64::new(0.0, 0.0); m];
        let scale = m as f64 / n as f64;
        if m >= n {
            let half = n / 2;
            for (i, &c) in spec.iter().enumerate() {
                if i == half && m > n {
                    // split the old Nyquist mode evenly between ±n/2
                    out[half] += c * 0.5 * scale;
                    out[m - half] += c * 0.5 * scale;
                } else {
                    let k = self.wavenumber(i);
                    let slot = k.rem_euclid(m as i64) as usize;
                    out[slot] += c * scale;
                }
            }
        } else {
            let half = m as i64 / 2;
            for (i, &c) in spec.iter().enumerate() {
                let k = self.wavenumber(i);
                if k.abs() < half {
                    out[k.rem_euclid(m as i64) as usize] += c * scale;
                } else if k.abs() == half {
                    // both ±m/2 alias onto the new Nyquist slot
                    out[half as usize] += c * scale;
                }
            }
        }
        out
    }

    /// Spectral interpolation onto `target` by zero padding or truncation.
    pub fn resample(&self, f: &ScalarField, target: &Grid) -> Result<ScalarField> {
        check_len(self.n, f.len())?;
        if target.n == self.n {
            return Ok(f.clone());
        }
        let spec = self.forward_pair(&f.0, None);
        let mut out = self.resample_spectrum(&spec, target);
        target.inverse_in_place(&mut out);
        Ok(ScalarField(out.iter().map(|z| z.re).collect()))
    }

    pub fn resample_vec(&self, f: &VectorField, target: &Grid) -> Result<VectorField> {
        check_len(self.n, f.len())?;
        if target.n == self.n {
            return Ok(f.clone());
        }
        let (x, y, z) = (f.component(0), f.component(1), f.component(2));
        let mut xy = self.resample_spectrum(&self.forward_pair(&x, Some(&y)), target);
        let mut zz = self.resample_spectrum(&self.forward_pair(&z, None), target);
        target.inverse_in_place(&mut xy);
        target.inverse_in_place(&mut zz);
        Ok(VectorField(
            xy.iter()
                .zip(&zz)
                .map(|(p, q)| Vec3::new(p.re, p.im, q.re))
                .collect(),
        ))
    }
}

fn neumaier_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sup_diff(a: &ScalarField, b: &ScalarField) -> f64 {
        a.0.iter()
            .zip(&b.0)
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn grid_nodes_and_wavenumbers() {
        let g = Grid::new(8).unwrap();
        assert!((g.node(1) - PI / 4.0).abs() < 1e-15);
        let mut ks = g.wavenumbers();
        ks.sort();
        assert_eq!(ks, vec![-4, -3, -2, -1, 0, 1, 2, 3]);
        let nodes = g.nodes();
        for w in nodes.windows(2) {
            assert!((w[1] - w[0] - g.spacing()).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(matches!(Grid::new(7), Err(Error::InvalidArgument(_))));
        assert!(matches!(Grid::new(6), Err(Error::InvalidArgument(_))));
        assert!(Grid::new(10).is_ok());
    }

    #[test]
    fn derivative_of_trig() {
        let g = Grid::new(32).unwrap();
        let f = g.sample(|x| (3.0 * x).sin());
        let d = g.derivative(&f, 1).unwrap();
        assert!(sup_diff(&d, &g.sample(|x| 3.0 * (3.0 * x).cos())) <= 1e-12);

        let g16 = Grid::new(16).unwrap();
        let s = g16.sample(f64::sin);
        let d4 = g16.derivative(&s, 4).unwrap();
        assert!(sup_diff(&d4, &s) <= 1e-12);

        let c = g.sample(|_| 2.5);
        for m in 1..6 {
            assert!(g.derivative(&c, m).unwrap().sup_norm() <= 1e-13);
        }
        assert!(g.derivative(&c, 0).is_err());
    }

    #[test]
    fn nyquist_mode_handling() {
        let g = Grid::new(8).unwrap();
        let f = g.sample(|x| (4.0 * x).cos());
        assert!(g.derivative(&f, 1).unwrap().sup_norm() < 1e-13);
        let d2 = g.derivative(&f, 2).unwrap();
        let expect = g.sample(|x| -16.0 * (4.0 * x).cos());
        assert!(sup_diff(&d2, &expect) < 1e-12);
    }

    #[test]
    fn vector_derivative_is_componentwise() {
        let g = Grid::new(16).unwrap();
        let f = g.sample_vec(|x| Vec3::new(x.sin(), (2.0 * x).cos(), (3.0 * x).sin()));
        let d = g.derivative_vec(&f, 1).unwrap();
        for (j, x) in g.nodes().into_iter().enumerate() {
            let e = Vec3::new(x.cos(), -2.0 * (2.0 * x).sin(), 3.0 * (3.0 * x).cos());
            assert!((d.0[j] - e).norm() < 1e-13);
        }
    }

    #[test]
    fn dealias_truncates_high_modes() {
        let g = Grid::new(12).unwrap().with_dealias(true);
        let f = g.sample(|x| (5.0 * x).sin() + x.sin());
        let d = g.derivative(&f, 1).unwrap();
        assert!(sup_diff(&d, &g.sample(f64::cos)) < 1e-13);
    }

    #[test]
    fn quadrature_examples() {
        let g = Grid::new(16).unwrap();
        assert!((g.quadrature(&g.sample(|x| x.sin().powi(2))).unwrap() - PI).abs() <= 1e-13);
        assert!((g.quadrature(&g.sample(|_| 1.0)).unwrap() - 2.0 * PI).abs() <= 1e-13);
        let g = Grid::new(32).unwrap();
        assert!(g.quadrature(&g.sample(|x| (5.0 * x).cos())).unwrap().abs() <= 1e-13);
        let gc = Grid::new(32).unwrap().with_compensated_sum(true);
        assert!((gc.quadrature(&gc.sample(|_| 1.0)).unwrap() - 2.0 * PI).abs() <= 1e-14);
    }

    #[test]
    fn quadrature_rejects_wrong_length() {
        let g = Grid::new(16).unwrap();
        assert!(matches!(
            g.quadrature(&ScalarField(vec![0.0; 8])),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn resample_examples() {
        let g16 = Grid::new(16).unwrap();
        let g32 = Grid::new(32).unwrap();
        let g8 = Grid::new(8).unwrap();
        let up = g16.resample(&g16.sample(f64::sin), &g32).unwrap();
        assert!(sup_diff(&up, &g32.sample(f64::sin)) <= 1e-12);

        let f = g16.sample(|x| (x.cos() * 0.3).exp());
        assert_eq!(g16.resample(&f, &g16).unwrap(), f);

        let down = g32.resample(&g32.sample(|x| (3.0 * x).sin()), &g8).unwrap();
        assert!(sup_diff(&down, &g8.sample(|x| (3.0 * x).sin())) <= 1e-14);

        let nyq = g8.resample(&g8.sample(|x| (4.0 * x).cos()), &g16).unwrap();
        assert!(sup_diff(&nyq, &g16.sample(|x| (4.0 * x).cos())) <= 1e-14);
    }

    #[test]
    fn neumaier_recovers_cancellation() {
        let v = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(neumaier_sum(&v), 2.0);
    }
}
