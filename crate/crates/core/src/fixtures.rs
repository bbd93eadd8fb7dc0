//! Closed-form immersions and fundamental forms.
//!
//! Normals follow the crate convention: (∂₁f, …, ∂_d f, ν) is positively
//! oriented in ℝ^{d+1}. With it the cylinder has B = diag(−1, 0) and the
//! standard (φ, θ) sphere chart has the outward normal and B = −g.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fields::{Chart, ImmersionField, MetricField, NormalConnectionField, SecondFormField};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fixture {
    /// (x, y, 0) on [0, 1]².
    Plane,
    /// (cos u, sin u, v) on [0, 1.5] × [0, 1].
    Cylinder,
    /// Unit sphere (sin φ cos θ, sin φ sin θ, cos φ) on [0.5, 1.3] × [0, 0.8].
    SphereCap,
    /// Graph z = xy on [−0.5, 0.5]².
    Saddle,
}

impl Fixture {
    pub const ALL: [Fixture; 4] = [Fixture::Plane, Fixture::Cylinder, Fixture::SphereCap, Fixture::Saddle];

    pub fn name(&self) -> &'static str {
        match self {
            Fixture::Plane => "plane",
            Fixture::Cylinder => "cylinder",
            Fixture::SphereCap => "sphere-cap",
            Fixture::Saddle => "saddle",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown fixture {name:?}")))
    }

    pub fn extent(&self) -> Vec<(f64, f64)> {
        match self {
            Fixture::Plane => vec![(0.0, 1.0), (0.0, 1.0)],
            Fixture::Cylinder => vec![(0.0, 1.5), (0.0, 1.0)],
            Fixture::SphereCap => vec![(0.5, 1.3), (0.0, 0.8)],
            Fixture::Saddle => vec![(-0.5, 0.5), (-0.5, 0.5)],
        }
    }

    pub fn chart(&self, n: usize) -> Chart {
        Chart::new(self.extent(), vec![n, n], 1).expect("fixture chart")
    }

    pub fn position(&self, x: &[f64]) -> Vec<f64> {
        let (u, v) = (x[0], x[1]);
        match self {
            Fixture::Plane => vec![u, v, 0.0],
            Fixture::Cylinder => vec![u.cos(), u.sin(), v],
            Fixture::SphereCap => unit_sphere(u, v).to_vec(),
            Fixture::Saddle => vec![u, v, u * v],
        }
    }

    /// Rows ∂ᵢf.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let (u, v) = (x[0], x[1]);
        match self {
            Fixture::Plane => DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            Fixture::Cylinder => DMatrix::from_row_slice(2, 3, &[-u.sin(), u.cos(), 0.0, 0.0, 0.0, 1.0]),
            Fixture::SphereCap => sphere_jacobian(u, v),
            Fixture::Saddle => DMatrix::from_row_slice(2, 3, &[1.0, 0.0, v, 0.0, 1.0, u]),
        }
    }

    pub fn metric_at(&self, x: &[f64]) -> DMatrix<f64> {
        let j = self.jacobian(x);
        &j * j.transpose()
    }

    pub fn second_form_at(&self, x: &[f64]) -> DMatrix<f64> {
        let (u, v) = (x[0], x[1]);
        match self {
            Fixture::Plane => DMatrix::zeros(2, 2),
            Fixture::Cylinder => DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 0.0]),
            Fixture::SphereCap => -self.metric_at(x),
            Fixture::Saddle => {
                let w = (1.0 + u * u + v * v).sqrt();
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0 / w, 1.0 / w, 0.0])
            }
        }
    }

    pub fn immersion(&self, n: usize) -> ImmersionField {
        ImmersionField::from_fn(&self.chart(n), |x| self.position(x)).expect("fixture immersion")
    }

    pub fn metric(&self, n: usize) -> MetricField {
        MetricField::from_fn(&self.chart(n), |x| self.metric_at(x)).expect("fixture metric")
    }

    pub fn second_form(&self, n: usize) -> SecondFormField {
        SecondFormField::from_fn(&self.chart(n), |x| vec![self.second_form_at(x)]).expect("fixture form")
    }

    /// Closed-form triple (g, B, ∇ᴱ).
    pub fn forms(&self, n: usize) -> (MetricField, SecondFormField, NormalConnectionField) {
        let chart = self.chart(n);
        (self.metric(n), self.second_form(n), NormalConnectionField::trivial(&chart))
    }
}

pub fn unit_sphere(phi: f64, theta: f64) -> [f64; 3] {
    [phi.sin() * theta.cos(), phi.sin() * theta.sin(), phi.cos()]
}

/// Rows ∂_φ, ∂_θ of the unit-sphere chart.
pub fn sphere_jacobian(phi: f64, theta: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        2,
        3,
        &[
            phi.cos() * theta.cos(),
            phi.cos() * theta.sin(),
            -phi.sin(),
            -phi.sin() * theta.sin(),
            phi.sin() * theta.cos(),
            0.0,
        ],
    )
}

/// g = dφ² + sin²φ dθ² on a chart whose first axis is φ.
pub fn round_sphere_metric(chart: &Chart) -> MetricField {
    MetricField::from_fn(chart, |x| {
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, x[0].sin().powi(2)])
    })
    .expect("round metric")
}

/// Sphere of radius 1/(1+s) over the sphere-cap chart: (R² g₁, R B₁, 0).
pub fn sphere_radius_family(n: usize, s: f64) -> (MetricField, SecondFormField, NormalConnectionField) {
    let fx = Fixture::SphereCap;
    let r = 1.0 / (1.0 + s);
    let chart = fx.chart(n);
    let g = MetricField::from_fn(&chart, |x| fx.metric_at(x) * (r * r)).expect("metric");
    let b = SecondFormField::from_fn(&chart, |x| vec![fx.second_form_at(x) * r]).expect("form");
    (g, b, NormalConnectionField::trivial(&chart))
}

/// Immersion of the sphere-radius family member.
pub fn sphere_radius_immersion(n: usize, s: f64) -> ImmersionField {
    let fx = Fixture::SphereCap;
    let r = 1.0 / (1.0 + s);
    ImmersionField::from_fn(&fx.chart(n), |x| fx.position(x).iter().map(|v| v * r).collect()).expect("immersion")
}

/// Graph z = a·xy with a = 1 + s on [−0.5, 0.5]².
pub fn graph_amplitude_family(n: usize, s: f64) -> (MetricField, SecondFormField, NormalConnectionField) {
    let a = 1.0 + s;
    let chart = Fixture::Saddle.chart(n);
    let g = MetricField::from_fn(&chart, |x| {
        let (u, v) = (x[0], x[1]);
        DMatrix::from_row_slice(2, 2, &[1.0 + a * a * v * v, a * a * u * v, a * a * u * v, 1.0 + a * a * u * u])
    })
    .expect("metric");
    let b = SecondFormField::from_fn(&chart, |x| {
        let w = (1.0 + a * a * (x[0] * x[0] + x[1] * x[1])).sqrt();
        vec![DMatrix::from_row_slice(2, 2, &[0.0, a / w, a / w, 0.0])]
    })
    .expect("form");
    (g, b, NormalConnectionField::trivial(&chart))
}

pub fn graph_amplitude_immersion(n: usize, s: f64) -> ImmersionField {
    let a = 1.0 + s;
    ImmersionField::from_fn(&Fixture::Saddle.chart(n), |x| vec![x[0], x[1], a * x[0] * x[1]]).expect("immersion")
}

/// Codimension-two graph ½(x, y, x² − y², 2xy) over [−0.4, 0.4]².
pub fn codim2_graph(n: usize) -> ImmersionField {
    let chart = Chart::new(vec![(-0.4, 0.4), (-0.4, 0.4)], vec![n, n], 2).expect("chart");
    ImmersionField::from_fn(&chart, |x| {
        let (u, v) = (x[0], x[1]);
        vec![u, v, 0.5 * (u * u - v * v), u * v]
    })
    .expect("immersion")
}
