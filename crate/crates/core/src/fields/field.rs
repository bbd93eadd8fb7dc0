use nalgebra::DMatrix;

use super::Chart;
use crate::error::{shape_mismatch, Error, Result};

/// Tensor field sampled on a [`Chart`].
///
/// Every grid point carries a row-major tensor of the given `shape`; values are
/// stored point-major, so the components of point `p` occupy
/// `data[p * components .. (p + 1) * components]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    chart: Chart,
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(chart: &Chart, shape: &[usize]) -> Self {
        let comp: usize = shape.iter().product();
        Self {
            chart: chart.clone(),
            shape: shape.to_vec(),
            data: vec![0.0; comp * chart.n_points()],
        }
    }

    pub fn from_data(chart: &Chart, shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let comp: usize = shape.iter().product();
        let expected = comp * chart.n_points();
        if data.len() != expected {
            return Err(shape_mismatch(expected, data.len()));
        }
        let field = Self {
            chart: chart.clone(),
            shape: shape.to_vec(),
            data,
        };
        field.check_finite()?;
        Ok(field)
    }

    /// Samples `f(x, out)` at every grid point.
    pub fn from_fn(chart: &Chart, shape: &[usize], mut f: impl FnMut(&[f64], &mut [f64])) -> Self {
        let mut field = Self::zeros(chart, shape);
        let comp = field.components();
        for p in 0..chart.n_points() {
            let x = chart.coords(p);
            f(&x, &mut field.data[p * comp..(p + 1) * comp]);
        }
        field
    }

    /// Scalar field from a closure.
    pub fn scalar(chart: &Chart, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        Self::from_fn(chart, &[], |x, out| out[0] = f(x))
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn components(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn n_points(&self) -> usize {
        self.chart.n_points()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn at(&self, p: usize) -> &[f64] {
        let c = self.components();
        &self.data[p * c..(p + 1) * c]
    }

    pub fn at_mut(&mut self, p: usize) -> &mut [f64] {
        let c = self.components();
        &mut self.data[p * c..(p + 1) * c]
    }

    /// Trailing two tensor slots at point `p`, after fixing the leading slots
    /// to the flat block index `block`.
    pub fn block(&self, p: usize, block: usize) -> DMatrix<f64> {
        let (r, c) = self.trailing_dims();
        let off = block * r * c;
        DMatrix::from_row_slice(r, c, &self.at(p)[off..off + r * c])
    }

    pub fn set_block(&mut self, p: usize, block: usize, m: &DMatrix<f64>) {
        let (r, c) = self.trailing_dims();
        let off = block * r * c;
        let dst = &mut self.at_mut(p)[off..off + r * c];
        for i in 0..r {
            for j in 0..c {
                dst[i * c + j] = m[(i, j)];
            }
        }
    }

    /// Whole tensor at `p` as a matrix; requires a two-slot shape.
    pub fn matrix(&self, p: usize) -> DMatrix<f64> {
        debug_assert_eq!(self.shape.len(), 2);
        self.block(p, 0)
    }

    pub fn set_matrix(&mut self, p: usize, m: &DMatrix<f64>) {
        self.set_block(p, 0, m);
    }

    fn trailing_dims(&self) -> (usize, usize) {
        match self.shape.len() {
            0 => (1, 1),
            1 => (1, self.shape[0]),
            n => (self.shape[n - 2], self.shape[n - 1]),
        }
    }

    /// Number of trailing matrix blocks per point.
    pub fn blocks(&self) -> usize {
        let (r, c) = self.trailing_dims();
        self.components() / (r * c)
    }

    /// Pointwise map into a field of a new shape.
    pub fn map_points(&self, shape: &[usize], mut f: impl FnMut(usize, &[f64], &mut [f64])) -> Field {
        let mut out = Field::zeros(&self.chart, shape);
        let c = out.components();
        for p in 0..self.n_points() {
            f(p, self.at(p), &mut out.data[p * c..(p + 1) * c]);
        }
        out
    }

    /// One component as a scalar field.
    pub fn component(&self, c: usize) -> Field {
        self.map_points(&[], |_, v, out| out[0] = v[c])
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Field> {
        if shape.iter().product::<usize>() != self.components() {
            return Err(shape_mismatch(shape, &self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn scale(&self, alpha: f64) -> Field {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    fn check_compatible(&self, other: &Field) -> Result<()> {
        if self.chart != other.chart {
            return Err(shape_mismatch(self.chart.resolution(), other.chart.resolution()));
        }
        if self.shape != other.shape {
            return Err(shape_mismatch(&self.shape, &other.shape));
        }
        Ok(())
    }

    /// `alpha * self + beta * other`.
    pub fn lincomb(&self, alpha: f64, other: &Field, beta: f64) -> Result<Field> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        out.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a = alpha * *a + beta * b);
        Ok(out)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.lincomb(1.0, other, -1.0)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest pointwise Frobenius norm.
    pub fn max_norm(&self) -> f64 {
        (0..self.n_points())
            .map(|p| self.at(p).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn check_finite(&self) -> Result<()> {
        let c = self.components().max(1);
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite(i / c)),
            None => Ok(()),
        }
    }

    /// Same data over a chart with different codimension (the grid must agree).
    pub fn with_chart(mut self, chart: &Chart) -> Result<Field> {
        if chart.resolution() != self.chart.resolution() || chart.extent() != self.chart.extent() {
            return Err(shape_mismatch(chart.resolution(), self.chart.resolution()));
        }
        self.chart = chart.clone();
        Ok(self)
    }
}

/// Defines a newtype over [`Field`] with shape-checked construction.
macro_rules! typed_field {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name(pub(crate) $crate::fields::Field);

        impl $name {
            pub fn field(&self) -> &$crate::fields::Field {
                &self.0
            }

            pub fn into_field(self) -> $crate::fields::Field {
                self.0
            }
        }

        impl std::ops::Deref for $name {
            type Target = $crate::fields::Field;
            fn deref(&self) -> &Self::Target {
                &self.0
            }
        }

        impl AsRef<$crate::fields::Field> for $name {
            fn as_ref(&self) -> &$crate::fields::Field {
                &self.0
            }
        }
    };
}
pub(crate) use typed_field;

fn expect_shape(field: &Field, shape: &[usize]) -> Result<()> {
    if field.shape() != shape {
        return Err(shape_mismatch(shape, field.shape()));
    }
    Ok(())
}

/// Default floor on the smallest metric eigenvalue.
pub const SPD_FLOOR: f64 = 1e-10;

typed_field!(
    /// Symmetric positive-definite d×d tensor per point.
    MetricField
);

impl MetricField {
    pub fn new(field: Field) -> Result<Self> {
        Self::with_floor(field, SPD_FLOOR)
    }

    /// Symmetrizes exactly and checks the eigenvalue floor at every point.
    pub fn with_floor(mut field: Field, floor: f64) -> Result<Self> {
        let d = field.chart().dim();
        expect_shape(&field, &[d, d])?;
        field.check_finite()?;
        for p in 0..field.n_points() {
            let v = field.at_mut(p);
            for i in 0..d {
                for j in i + 1..d {
                    let s = 0.5 * (v[i * d + j] + v[j * d + i]);
                    v[i * d + j] = s;
                    v[j * d + i] = s;
                }
            }
            let lam = crate::linalg::min_eigenvalue(&field.matrix(p));
            if !(lam > floor) {
                return Err(Error::NotPositiveDefinite { point: p, eigenvalue: lam });
            }
        }
        Ok(Self(field))
    }

    pub fn from_fn(chart: &Chart, mut f: impl FnMut(&[f64]) -> DMatrix<f64>) -> Result<Self> {
        let d = chart.dim();
        let field = Field::from_fn(chart, &[d, d], |x, out| {
            let m = f(x);
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] = m[(i, j)];
                }
            }
        });
        Self::new(field)
    }

    pub fn identity(chart: &Chart) -> Self {
        let d = chart.dim();
        Self::from_fn(chart, |_| DMatrix::identity(d, d)).expect("identity metric")
    }

    pub fn dim(&self) -> usize {
        self.chart().dim()
    }

    pub fn inverse(&self, p: usize) -> DMatrix<f64> {
        crate::linalg::inv_spd(&self.matrix(p)).expect("SPD metric is invertible")
    }

    pub fn sqrt_det(&self, p: usize) -> f64 {
        self.matrix(p).determinant().sqrt()
    }

    /// Riemannian volume weights √det g · trapezoid weight.
    pub fn volume_weights(&self) -> Vec<f64> {
        (0..self.n_points())
            .map(|p| self.sqrt_det(p) * self.chart().weight(p))
            .collect()
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        Self::new(self.0.scale(c))
    }
}

typed_field!(
    /// k symmetric d×d matrices per point, one per normal direction.
    SecondFormField
);

impl SecondFormField {
    pub fn new(mut field: Field) -> Result<Self> {
        let d = field.chart().dim();
        let k = field.chart().codim();
        expect_shape(&field, &[k, d, d])?;
        field.check_finite()?;
        for p in 0..field.n_points() {
            let v = field.at_mut(p);
            for a in 0..k {
                let b = &mut v[a * d * d..(a + 1) * d * d];
                for i in 0..d {
                    for j in i + 1..d {
                        let s = 0.5 * (b[i * d + j] + b[j * d + i]);
                        b[i * d + j] = s;
                        b[j * d + i] = s;
                    }
                }
            }
        }
        Ok(Self(field))
    }

    pub fn from_fn(chart: &Chart, mut f: impl FnMut(&[f64]) -> Vec<DMatrix<f64>>) -> Result<Self> {
        let (d, k) = (chart.dim(), chart.codim());
        let field = Field::from_fn(chart, &[k, d, d], |x, out| {
            let ms = f(x);
            for (a, m) in ms.iter().enumerate().take(k) {
                for i in 0..d {
                    for j in 0..d {
                        out[(a * d + i) * d + j] = m[(i, j)];
                    }
                }
            }
        });
        Self::new(field)
    }

    pub fn zeros(chart: &Chart) -> Self {
        let (d, k) = (chart.dim(), chart.codim());
        Self(Field::zeros(chart, &[k, d, d]))
    }

    pub fn codim(&self) -> usize {
        self.shape()[0]
    }

    /// B^α at point `p`.
    pub fn slice(&self, p: usize, alpha: usize) -> DMatrix<f64> {
        self.block(p, alpha)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(self.0.scale(c))
    }
}

typed_field!(
    /// Antisymmetric k×k matrix per coordinate direction: N_i[α][β] = ⟨∇ᴱ_i η_α, η_β⟩.
    NormalConnectionField
);

impl NormalConnectionField {
    pub fn new(mut field: Field) -> Result<Self> {
        let d = field.chart().dim();
        let k = field.chart().codim();
        expect_shape(&field, &[d, k, k])?;
        field.check_finite()?;
        for p in 0..field.n_points() {
            let v = field.at_mut(p);
            for i in 0..d {
                let b = &mut v[i * k * k..(i + 1) * k * k];
                for a in 0..k {
                    b[a * k + a] = 0.0;
                    for c in a + 1..k {
                        let s = 0.5 * (b[a * k + c] - b[c * k + a]);
                        b[a * k + c] = s;
                        b[c * k + a] = -s;
                    }
                }
            }
        }
        Ok(Self(field))
    }

    /// Flat normal connection.
    pub fn trivial(chart: &Chart) -> Self {
        let (d, k) = (chart.dim(), chart.codim());
        Self(Field::zeros(chart, &[d, k, k]))
    }

    pub fn component(&self, p: usize, i: usize) -> DMatrix<f64> {
        self.block(p, i)
    }
}

typed_field!(
    /// Point of ℝ^{d+k} per grid point.
    ImmersionField
);

impl ImmersionField {
    pub fn new(field: Field) -> Result<Self> {
        let m = field.chart().ambient();
        expect_shape(&field, &[m])?;
        field.check_finite()?;
        Ok(Self(field))
    }

    pub fn from_fn(chart: &Chart, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let m = chart.ambient();
        Self::new(Field::from_fn(chart, &[m], |x, out| out.copy_from_slice(&f(x)[..m])))
    }

    pub fn ambient(&self) -> usize {
        self.shape()[0]
    }

    pub fn point(&self, p: usize) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_column_slice(self.at(p))
    }

    /// Largest deviation of |f| from 1.
    pub fn unit_length_defect(&self) -> (usize, f64) {
        (0..self.n_points())
            .map(|p| (p, self.at(p).iter().map(|v| v * v).sum::<f64>().sqrt()))
            .map(|(p, n)| (p, (n - 1.0).abs()))
            .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best })
    }
}

typed_field!(
    /// d×m matrix per point: row i is the ℝ^m-valued 1-form evaluated on ∂_i.
    VectorOneFormField
);

impl VectorOneFormField {
    pub fn new(field: Field) -> Result<Self> {
        let d = field.chart().dim();
        if field.shape().len() != 2 || field.shape()[0] != d {
            return Err(shape_mismatch(format!("[{d}, m]"), field.shape()));
        }
        field.check_finite()?;
        Ok(Self(field))
    }

    pub fn width(&self) -> usize {
        self.shape()[1]
    }
}
