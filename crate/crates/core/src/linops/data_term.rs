use std::cell::Cell;

use ndarray::{Array2, ArrayView2, Zip};
use num_complex::Complex64;

use super::{fft_unitary, ifft_unitary, kernel_spectrum, ForwardModel, ModelKind};
use crate::error::{OdpError, Result};
use crate::fft::{fft2_plane, ifft2_plane};

/// A measurement plane: real for spatial operators, complex for the
/// masked Fourier operator.
#[derive(Debug, Clone, PartialEq)]
pub enum Measurement {
    Real(Array2<f64>),
    Complex(Array2<Complex64>),
}

impl Measurement {
    pub fn dim(&self) -> (usize, usize) {
        match self {
            Measurement::Real(a) => a.dim(),
            Measurement::Complex(a) => a.dim(),
        }
    }

    fn sub(&self, other: &Measurement) -> Measurement {
        match (self, other) {
            (Measurement::Real(a), Measurement::Real(b)) => Measurement::Real(a - b),
            (Measurement::Complex(a), Measurement::Complex(b)) => Measurement::Complex(a - b),
            _ => unreachable!("measurement kinds always match their operator"),
        }
    }
}

/// Operator call tally for one [`DataTerm`].
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCounts {
    pub forward: usize,
    pub adjoint: usize,
    /// Regularized inverse / projection solves (including their adjoints).
    pub solve: usize,
}

enum Cache {
    Identity,
    Conv {
        k_hat: Array2<Complex64>,
        k_abs2: Array2<f64>,
        aty_hat: Array2<Complex64>,
    },
    Mri {
        mask: Array2<f64>,
    },
}

/// A forward model bound to one measurement plane, with the Fourier
/// quantities the data steps need precomputed.
pub struct DataTerm {
    dims: (usize, usize),
    y: Measurement,
    cache: Cache,
    counts: Cell<OpCounts>,
}

fn inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, &x, &y| acc + x * y)
}

impl DataTerm {
    pub fn new(model: &ForwardModel, y: Measurement) -> Result<Self> {
        let dims = y.dim();
        model.check_dims(dims.0, dims.1)?;
        let cache = match (&model.kind, &y) {
            (ModelKind::Identity, Measurement::Real(_)) => Cache::Identity,
            (ModelKind::CircularConv { kernel }, Measurement::Real(yr)) => {
                let k_hat = kernel_spectrum(kernel.view(), dims.0, dims.1);
                let k_abs2 = k_hat.mapv(|v| v.norm_sqr());
                let y_hat = fft2_plane(yr.view());
                let aty_hat = Zip::from(&k_hat).and(&y_hat).map_collect(|k, y| k.conj() * y);
                Cache::Conv {
                    k_hat,
                    k_abs2,
                    aty_hat,
                }
            }
            (ModelKind::MaskedFourier { mask }, Measurement::Complex(_)) => Cache::Mri {
                mask: mask.clone(),
            },
            _ => {
                return Err(OdpError::Domain(format!(
                    "measurement type does not match {} operator",
                    model.kind_name()
                )))
            }
        };
        Ok(Self {
            dims,
            y,
            cache,
            counts: Cell::new(OpCounts::default()),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn measurement(&self) -> &Measurement {
        &self.y
    }

    pub fn counts(&self) -> OpCounts {
        self.counts.get()
    }

    /// True when the data step is a hard constraint (noise-free MRI).
    pub fn is_constraint(&self) -> bool {
        matches!(self.cache, Cache::Mri { .. })
    }

    fn bump(&self, f: impl FnOnce(&mut OpCounts)) {
        let mut c = self.counts.get();
        f(&mut c);
        self.counts.set(c);
    }

    fn check(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.dim() != self.dims {
            return Err(OdpError::Shape(format!(
                "expected {:?} plane, got {:?}",
                self.dims,
                x.dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Measurement {
        self.bump(|c| c.forward += 1);
        match &self.cache {
            Cache::Identity => Measurement::Real(x.to_owned()),
            Cache::Conv { k_hat, .. } => {
                let xf = fft2_plane(x);
                Measurement::Real(ifft2_plane(&(k_hat * &xf)).mapv(|v| v.re))
            }
            Cache::Mri { mask } => {
                let mut xf = fft_unitary(x);
                xf.zip_mut_with(mask, |v, &m| *v *= m);
                Measurement::Complex(xf)
            }
        }
    }

    pub fn adjoint(&self, m: &Measurement) -> Array2<f64> {
        self.bump(|c| c.adjoint += 1);
        match (&self.cache, m) {
            (Cache::Identity, Measurement::Real(r)) => r.clone(),
            (Cache::Conv { k_hat, .. }, Measurement::Real(r)) => {
                let rf = fft2_plane(r.view());
                let prod = Zip::from(k_hat).and(&rf).map_collect(|k, r| k.conj() * r);
                ifft2_plane(&prod).mapv(|v| v.re)
            }
            (Cache::Mri { mask }, Measurement::Complex(r)) => {
                let masked = Zip::from(r).and(mask).map_collect(|v, &m| v * m);
                ifft_unitary(&masked).mapv(|v| v.re)
            }
            _ => unreachable!("measurement kinds always match their operator"),
        }
    }

    /// Backprojection `A^H y`.
    pub fn backprojection(&self) -> Array2<f64> {
        self.adjoint(&self.y)
    }

    /// `A^H (A x - y)`.
    pub fn residual_grad(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let r = self.forward(x).sub(&self.y);
        self.adjoint(&r)
    }

    /// `A^H A x`.
    pub fn gram(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let m = self.forward(x);
        self.adjoint(&m)
    }

    /// Largest eigenvalue of `A^H A`.
    pub fn lipschitz(&self) -> f64 {
        match &self.cache {
            Cache::Identity => 1.0,
            Cache::Conv { k_abs2, .. } => k_abs2.iter().cloned().fold(0.0, f64::max),
            Cache::Mri { mask } => {
                if mask.iter().any(|&m| m != 0.0) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Data step: `argmin_x (lam/2) ||Ax - y||^2 + 1/2 ||x - v||^2`, or the
    /// projection onto `{Ax = y}` for the constrained MRI operator (where
    /// `lam` is ignored). `lam = inf` is the exact-data limit.
    pub fn solve(&self, v: ArrayView2<'_, f64>, lam: f64) -> Result<Array2<f64>> {
        self.check(&v)?;
        self.bump(|c| c.solve += 1);
        match &self.cache {
            Cache::Identity => {
                let Measurement::Real(y) = &self.y else { unreachable!() };
                if lam.is_infinite() {
                    return Ok(y.clone());
                }
                Ok(Zip::from(y).and(v).map_collect(|&y, &v| (lam * y + v) / (1.0 + lam)))
            }
            Cache::Conv {
                k_abs2, aty_hat, ..
            } => {
                if !lam.is_finite() {
                    return Err(OdpError::Config(
                        "deconvolution data step requires a finite data weight (sigma > 0)".into(),
                    ));
                }
                let vf = fft2_plane(v);
                let num = Zip::from(aty_hat)
                    .and(&vf)
                    .and(k_abs2)
                    .map_collect(|a, v, &k2| (a * lam + v) / (lam * k2 + 1.0));
                Ok(ifft2_plane(&num).mapv(|z| z.re))
            }
            Cache::Mri { mask } => {
                let Measurement::Complex(y) = &self.y else { unreachable!() };
                let vf = fft_unitary(v);
                let mixed = Zip::from(y)
                    .and(&vf)
                    .and(mask)
                    .map_collect(|y, v, &m| y * m + v * (1.0 - m));
                Ok(ifft_unitary(&mixed).mapv(|z| z.re))
            }
        }
    }

    /// Vector-Jacobian product of [`DataTerm::solve`] at output `x`.
    ///
    /// Returns the gradient with respect to `v` and the scalar
    /// `<g, d x / d lam>`.
    pub fn solve_backward(
        &self,
        g: ArrayView2<'_, f64>,
        x: ArrayView2<'_, f64>,
        lam: f64,
    ) -> Result<(Array2<f64>, f64)> {
        self.check(&g)?;
        self.bump(|c| c.solve += 1);
        match &self.cache {
            Cache::Identity => {
                let Measurement::Real(y) = &self.y else { unreachable!() };
                if lam.is_infinite() {
                    return Ok((Array2::zeros(self.dims), 0.0));
                }
                let gv = g.mapv(|v| v / (1.0 + lam));
                let dl = Zip::from(g)
                    .and(y)
                    .and(x)
                    .fold(0.0, |acc, &g, &y, &x| acc + g * (y - x))
                    / (1.0 + lam);
                Ok((gv, dl))
            }
            Cache::Conv {
                k_abs2, aty_hat, ..
            } => {
                let gf = fft2_plane(g);
                let mg_hat = Zip::from(&gf)
                    .and(k_abs2)
                    .map_collect(|g, &k2| g / (lam * k2 + 1.0));
                let mg = ifft2_plane(&mg_hat).mapv(|z| z.re);
                // d x / d lam = M (A^H y - A^H A x)
                let xf = fft2_plane(x);
                let resid_hat = Zip::from(aty_hat)
                    .and(&xf)
                    .and(k_abs2)
                    .map_collect(|a, x, &k2| a - x * k2);
                let resid = ifft2_plane(&resid_hat).mapv(|z| z.re);
                let dl = inner(&mg, &resid);
                Ok((mg, dl))
            }
            Cache::Mri { mask } => {
                let gf = fft_unitary(g);
                let kept = Zip::from(&gf).and(mask).map_collect(|g, &m| g * (1.0 - m));
                Ok((ifft_unitary(&kept).mapv(|z| z.re), 0.0))
            }
        }
    }
}

/// Real inner product of two planes.
pub fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    inner(a, b)
}
