//! Lipschitz dependence of the reconstruction on compatible data.
//!
//! Each family is a closed-form path s ↦ (g_s, B_s, ∇ᴱ_s) of compatible
//! triples, so the perturbation never leaves the compatible set. For each s
//! the study compares f_s with f_0 in the quotient W^{2,p} distance against
//! the data distance ‖g_s − g_0‖_{W^{1,p}} + ‖B_s − B_0‖_{L^p}, together with
//! the two intermediate ratios of the proof: frames against connection forms,
//! and coframes against metrics.

use fundform::cartan::{self, Reconstruction};
use fundform::fixtures::{self, Fixture};
use fundform::immersion::quotient_distance;
use fundform::linalg::expm_skew;
use fundform::rigidity::loglog_slope;
use fundform::{MetricField, NormalConnectionField, SecondFormField};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Denominators below this are reported as degenerate instead of dividing.
pub const DEGENERATE_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Spheres of radius 1/(1+s) over the sphere-cap chart.
    SphereRadius,
    /// Graphs z = (1+s)xy.
    GraphAmplitude,
    /// The sphere cap with the initial frame turned by angle s and the base
    /// point moved by s: the same point of the quotient space.
    Gauge,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::SphereRadius, Family::GraphAmplitude, Family::Gauge];

    pub fn name(&self) -> &'static str {
        match self {
            Family::SphereRadius => "sphere-radius",
            Family::GraphAmplitude => "graph-amplitude",
            Family::Gauge => "gauge",
        }
    }

    pub fn from_name(name: &str) -> CliResult<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| CliError::validation(format!("unknown family {name:?}")))
    }

    pub fn triple(&self, n: usize, s: f64) -> (MetricField, SecondFormField, NormalConnectionField) {
        match self {
            Family::SphereRadius => fixtures::sphere_radius_family(n, s),
            Family::GraphAmplitude => fixtures::graph_amplitude_family(n, s),
            Family::Gauge => Fixture::SphereCap.forms(n),
        }
    }

    /// Initial frame A(x₀) and position f(x₀).
    pub fn initial(&self, s: f64) -> (DMatrix<f64>, DVector<f64>) {
        match self {
            Family::Gauge => {
                let a = s / 3f64.sqrt();
                let w = DMatrix::from_row_slice(3, 3, &[0.0, -a, a, a, 0.0, -a, -a, a, 0.0]);
                (expm_skew(&w), DVector::from_vec(vec![s, 2.0 * s, -s]))
            }
            _ => (DMatrix::identity(3, 3), DVector::zeros(3)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DependRow {
    pub s: f64,
    /// ‖g_s − g_0‖_{W^{1,p}} + ‖B_s − B_0‖_{L^p}.
    pub data_distance: f64,
    /// Quotient W^{2,p} distance between f_s and f_0.
    pub immersion_distance: f64,
    pub ratio: Option<f64>,
    /// ‖A_s − A_0‖_{W^{1,p}}.
    pub frame_distance: f64,
    /// ‖𝐖_s − 𝐖_0‖_{L^p}.
    pub connection_distance: f64,
    pub pfaff_ratio: Option<f64>,
    /// ‖w_s − w_0‖_{W^{1,p}}.
    pub coframe_distance: f64,
    /// ‖g_s − g_0‖_{W^{1,p}}.
    pub metric_distance: f64,
    pub coframe_ratio: Option<f64>,
    pub holonomy_defect: f64,
    pub holonomy_threshold: f64,
    pub compatible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DependStudy {
    pub family: Family,
    pub resolution: usize,
    pub p: f64,
    pub rows: Vec<DependRow>,
    /// max/min of the defined ratios; None when fewer than one is defined.
    pub ratio_spread: Option<f64>,
    /// Log-log slope of immersion distance against data distance.
    pub slope: Option<f64>,
    pub pfaff_spread: Option<f64>,
    /// True when every connection distance is below [`DEGENERATE_FLOOR`]:
    /// the family moves along a direction the Pfaff system does not see.
    pub pfaff_degenerate: bool,
    pub coframe_spread: Option<f64>,
    pub all_compatible: bool,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > DEGENERATE_FLOOR).then(|| num / den)
}

fn spread(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        return None;
    }
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    Some(max / min)
}

fn build(family: Family, n: usize, s: f64) -> CliResult<(MetricField, SecondFormField, Reconstruction)> {
    let (g, b, ne) = family.triple(n, s);
    let (a0, f0) = family.initial(s);
    let rec = cartan::reconstruct(&g, &b, &ne, Some(&a0), Some(&f0), None)?;
    Ok((g, b, rec))
}

fn row(
    family: Family,
    n: usize,
    p: f64,
    s: f64,
    base: &(MetricField, SecondFormField, Reconstruction),
) -> CliResult<DependRow> {
    let (g0, b0, r0) = base;
    let (g, b, r) = build(family, n, s)?;
    let metric_distance = g.sub(g0)?.sobolev_norm(1, p)?;
    let data_distance = metric_distance + b.sub(b0)?.lp_norm(p)?;
    let immersion_distance = quotient_distance(&r.immersion, &r0.immersion, 2, p)?;
    let frame_distance = r.frame.sub(&r0.frame)?.sobolev_norm(1, p)?;
    let connection_distance = r.connection.sub(&r0.connection)?.lp_norm(p)?;
    let coframe_distance = r.coframe.sub(&r0.coframe)?.sobolev_norm(1, p)?;
    let d = &r.diagnostics;
    Ok(DependRow {
        s,
        data_distance,
        immersion_distance,
        ratio: ratio(immersion_distance, data_distance),
        frame_distance,
        connection_distance,
        pfaff_ratio: ratio(frame_distance, connection_distance),
        coframe_distance,
        metric_distance,
        coframe_ratio: ratio(coframe_distance, metric_distance),
        holonomy_defect: d.holonomy_defect,
        holonomy_threshold: d.holonomy_threshold,
        compatible: d.holonomy_defect <= d.holonomy_threshold,
    })
}

/// Runs the study; rows come back in the order of `s_values` whatever the
/// number of worker threads.
pub fn lipschitz_study(family: Family, s_values: &[f64], n: usize, p: f64) -> CliResult<DependStudy> {
    if !(p > 2.0) {
        return Err(CliError::validation(format!("p = {p} must exceed the dimension 2")));
    }
    let base = build(family, n, 0.0)?;
    let rows: Vec<DependRow> = s_values
        .par_iter()
        .map(|&s| row(family, n, p, s, &base))
        .collect::<CliResult<_>>()?;
    let (data, imm): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.ratio.is_some())
        .map(|r| (r.data_distance, r.immersion_distance))
        .unzip();
    Ok(DependStudy {
        family,
        resolution: n,
        p,
        ratio_spread: spread(rows.iter().map(|r| r.ratio)),
        slope: (data.len() >= 2).then(|| loglog_slope(&data, &imm)),
        pfaff_spread: spread(rows.iter().map(|r| r.pfaff_ratio)),
        pfaff_degenerate: rows.iter().all(|r| r.connection_distance <= DEGENERATE_FLOOR),
        coframe_spread: spread(rows.iter().map(|r| r.coframe_ratio)),
        all_compatible: rows.iter().all(|r| r.compatible),
        rows,
    })
}

/// s ∈ {2⁻², …, 2⁻⁷}.
pub fn default_s() -> Vec<f64> {
    (2..=7).map(|k| 2f64.powi(-k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_perturbation_is_zero_distance() {
        for fam in Family::ALL {
            let st = lipschitz_study(fam, &[0.0], 17, 4.0).unwrap();
            let r = &st.rows[0];
            assert_eq!(r.data_distance, 0.0);
            assert_eq!(r.frame_distance, 0.0);
            assert_eq!(r.connection_distance, 0.0);
            assert!(r.immersion_distance < 1e-9, "{}: {}", fam.name(), r.immersion_distance);
            assert_eq!(r.ratio, None);
        }
    }

    #[test]
    fn gauge_family_is_invisible_in_the_quotient() {
        let st = lipschitz_study(Family::Gauge, &[0.3, 0.1], 17, 4.0).unwrap();
        for r in &st.rows {
            assert_eq!(r.data_distance, 0.0);
            assert!(r.frame_distance > 0.01);
            assert!(r.immersion_distance < 1e-9, "{}", r.immersion_distance);
        }
    }

    #[test]
    fn sphere_radius_family_is_lipschitz() {
        let st = lipschitz_study(Family::SphereRadius, &default_s(), 33, 4.0).unwrap();
        let slope = st.slope.unwrap();
        assert!((slope - 1.0).abs() <= 0.15, "slope {slope}");
        assert!(st.ratio_spread.unwrap() < 3.0);
        assert!(st.coframe_spread.unwrap() < 3.0);
        // the connection form of a round sphere does not depend on its radius
        assert!(st.pfaff_degenerate);
        assert!(st.all_compatible);
    }

    #[test]
    fn graph_amplitude_pfaff_ratio_is_bounded() {
        let st = lipschitz_study(Family::GraphAmplitude, &default_s(), 33, 4.0).unwrap();
        assert!(!st.pfaff_degenerate);
        assert!(st.pfaff_spread.unwrap() < 3.0, "{:?}", st.pfaff_spread);
        assert!(st.ratio_spread.unwrap() < 3.0);
    }

    #[test]
    fn dimension_bound_on_p() {
        assert!(matches!(
            lipschitz_study(Family::SphereRadius, &[0.1], 9, 2.0),
            Err(CliError::Validation(_))
        ));
    }
}
