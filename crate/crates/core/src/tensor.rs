//! Batched single-channel image data.
//!
//! Every tensor is rank 4, `[batch, channel, height, width]`. Spatial images
//! hold real intensities on the `[0, 1]` scale; Fourier-tagged tensors hold
//! complex coefficients.

use ndarray::{s, Array2, Array4, ArrayView2};
use num_complex::Complex64;

use crate::error::{OdpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Spatial,
    Fourier,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    Real(Array4<f64>),
    Complex(Array4<Complex64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    data: TensorData,
    domain: Domain,
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.contains(&0) {
        return Err(OdpError::Shape(format!(
            "all dimensions must be >= 1, got {shape:?}"
        )));
    }
    Ok(())
}

impl ImageTensor {
    pub fn real(data: Array4<f64>, domain: Domain) -> Result<Self> {
        check_shape(data.shape())?;
        Ok(Self {
            data: TensorData::Real(data),
            domain,
        })
    }

    pub fn complex(data: Array4<Complex64>, domain: Domain) -> Result<Self> {
        check_shape(data.shape())?;
        Ok(Self {
            data: TensorData::Complex(data),
            domain,
        })
    }

    /// A spatial image from one `[height, width]` plane.
    pub fn from_plane(plane: Array2<f64>) -> Self {
        let (h, w) = plane.dim();
        let data = plane
            .into_shape_with_order((1, 1, h, w))
            .expect("contiguous plane");
        Self {
            data: TensorData::Real(data),
            domain: Domain::Spatial,
        }
    }

    /// A spatial batch from equally sized planes.
    pub fn from_planes(planes: &[Array2<f64>]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| OdpError::Shape("empty batch".into()))?;
        let (h, w) = first.dim();
        let mut data = Array4::zeros((planes.len(), 1, h, w));
        for (b, p) in planes.iter().enumerate() {
            if p.dim() != (h, w) {
                return Err(OdpError::Shape(format!(
                    "plane {b} has shape {:?}, expected {:?}",
                    p.dim(),
                    (h, w)
                )));
            }
            data.slice_mut(s![b, 0, .., ..]).assign(p);
        }
        Self::real(data, Domain::Spatial)
    }

    pub fn from_complex_plane(plane: Array2<Complex64>, domain: Domain) -> Self {
        let (h, w) = plane.dim();
        let data = plane
            .into_shape_with_order((1, 1, h, w))
            .expect("contiguous plane");
        Self {
            data: TensorData::Complex(data),
            domain,
        }
    }

    pub fn zeros(shape: (usize, usize, usize, usize)) -> Self {
        Self {
            data: TensorData::Real(Array4::zeros(shape)),
            domain: Domain::Spatial,
        }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        match &self.data {
            TensorData::Real(a) => a.dim(),
            TensorData::Complex(a) => a.dim(),
        }
    }

    pub fn batch(&self) -> usize {
        self.shape().0
    }

    pub fn spatial_dims(&self) -> (usize, usize) {
        let (_, _, h, w) = self.shape();
        (h, w)
    }

    pub fn is_real(&self) -> bool {
        matches!(self.data, TensorData::Real(_))
    }

    pub fn as_real(&self) -> Result<&Array4<f64>> {
        match &self.data {
            TensorData::Real(a) => Ok(a),
            TensorData::Complex(_) => Err(OdpError::Domain("expected real-valued tensor".into())),
        }
    }

    pub fn as_complex(&self) -> Result<&Array4<Complex64>> {
        match &self.data {
            TensorData::Complex(a) => Ok(a),
            TensorData::Real(_) => Err(OdpError::Domain("expected complex-valued tensor".into())),
        }
    }

    /// Real spatial data, or a domain error.
    pub fn spatial_real(&self) -> Result<&Array4<f64>> {
        if self.domain != Domain::Spatial {
            return Err(OdpError::Domain("expected spatial-domain tensor".into()));
        }
        self.as_real()
    }

    /// Complex view of the data; real tensors are promoted.
    pub fn to_complex(&self) -> Array4<Complex64> {
        match &self.data {
            TensorData::Real(a) => a.mapv(|v| Complex64::new(v, 0.0)),
            TensorData::Complex(a) => a.clone(),
        }
    }

    pub fn plane(&self, b: usize, c: usize) -> Result<ArrayView2<'_, f64>> {
        let a = self.as_real()?;
        Ok(a.slice(s![b, c, .., ..]))
    }

    pub fn complex_plane(&self, b: usize, c: usize) -> Array2<Complex64> {
        match &self.data {
            TensorData::Real(a) => a.slice(s![b, c, .., ..]).mapv(|v| Complex64::new(v, 0.0)),
            TensorData::Complex(a) => a.slice(s![b, c, .., ..]).to_owned(),
        }
    }

    /// Apply `f` to every real `[height, width]` plane, keeping batch order.
    pub fn map_planes(
        &self,
        mut f: impl FnMut(ArrayView2<'_, f64>) -> Result<Array2<f64>>,
    ) -> Result<ImageTensor> {
        let a = self.as_real()?;
        let (b, c, _, _) = a.dim();
        let mut out: Option<Array4<f64>> = None;
        for bi in 0..b {
            for ci in 0..c {
                let p = f(a.slice(s![bi, ci, .., ..]))?;
                let o = out.get_or_insert_with(|| {
                    let (oh, ow) = p.dim();
                    Array4::zeros((b, c, oh, ow))
                });
                o.slice_mut(s![bi, ci, .., ..]).assign(&p);
            }
        }
        ImageTensor::real(out.expect("non-empty tensor"), self.domain)
    }

    /// Return a copy of this tensor with a different domain tag.
    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn into_data(self) -> TensorData {
        self.data
    }
}
