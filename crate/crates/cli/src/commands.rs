//! One driver per subcommand. Each writes into the output directory and
//! records every file it writes, so the manifest can hash them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fundform::asymptotics::{self, convergence_study, Generator, MembraneSequence, DEFAULT_NEGATIVE_EXPONENT};
use fundform::cartan;
use fundform::curvature::{check_compatibility, NormKind, ResidualReport};
use fundform::fields::io::{read_field, write_csv, write_field};
use fundform::fixtures::Fixture;
use fundform::immersion::{self, alignment_residual, best_rigid_motion, quotient_distance};
use fundform::linalg;
use fundform::rigidity::{
    differential_distance, loglog_slope, PerturbedRotationFamily, RigidityReport, SphereChart,
};
use fundform::{
    Field, ImmersionField, MetricField, NormalConnectionField, RigidMotion, SecondFormField,
};
use nalgebra::{DMatrix, DVector, Quaternion, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{is_spec_file, RunConfig};
use crate::depend::{default_s, lipschitz_study, Family};
use crate::error::{CliError, CliResult};

/// Exponent used when `--p` is absent, except for `check-gcr` (L^∞).
pub const DEFAULT_P: f64 = 4.0;
/// Grid size of the square-chart commands when `--resolution` is absent.
pub const DEFAULT_RESOLUTION: usize = 33;
pub const DEFAULT_DICT_SIZE: usize = 8;

/// Files written so far, relative to the output directory.
pub struct Outputs {
    dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn field(&mut self, stem: &str, field: &Field, kind: &str) -> CliResult<()> {
        let header = PathBuf::from(format!("{stem}.json"));
        write_field(&self.dir.join(&header), field, Some(kind))?;
        self.files.push(header);
        self.files.push(PathBuf::from(format!("{stem}.bin")));
        Ok(())
    }

    fn csv_field(&mut self, stem: &str, field: &Field) -> CliResult<()> {
        let name = PathBuf::from(format!("{stem}.csv"));
        write_csv(&self.dir.join(&name), field)?;
        self.files.push(name);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.text(name, &text)
    }

    fn text(&mut self, name: &str, text: &str) -> CliResult<()> {
        fs::write(self.dir.join(name), text)?;
        self.files.push(PathBuf::from(name));
        Ok(())
    }
}

/// Shortest decimal that reads back to the same f64, in exponent form
/// outside [1e-4, 1e7); empty for None.
pub fn num(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x == 0.0 || !x.is_finite() || (1e-4..1e7).contains(&x.abs()) => format!("{x}"),
        Some(x) => format!("{x:e}"),
    }
}

fn csv<const N: usize>(header: [&str; N], rows: impl Iterator<Item = [String; N]>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

fn field_inputs(cfg: &RunConfig) -> Vec<&Path> {
    cfg.inputs.iter().filter(|p| !is_spec_file(p)).map(PathBuf::as_path).collect()
}

fn read_kind(path: &Path, want: &str) -> CliResult<Field> {
    let (field, kind) = read_field(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    match kind {
        Some(k) if k != want => Err(CliError::validation(format!(
            "{} holds a {k} field where a {want} field was expected",
            path.display()
        ))),
        _ => Ok(field),
    }
}

/// Any failure to accept an input as its declared type is a validation error,
/// including non-finite entries.
fn invalid<T>(path: &Path, r: fundform::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn read_immersion(path: &Path) -> CliResult<ImmersionField> {
    invalid(path, ImmersionField::new(read_kind(path, "immersion")?))
}

/// Optional initial data for `reconstruct`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialData {
    /// Rows of A(x₀).
    pub a0: Option<Vec<Vec<f64>>>,
    pub f0: Option<Vec<f64>>,
    /// Grid multi-index of the base point.
    pub x0: Option<Vec<usize>>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> CliResult<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::validation(format!("{what} must be a square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

struct Triple {
    g: MetricField,
    b: SecondFormField,
    ne: NormalConnectionField,
    init: InitialData,
}

/// `-i g -i B [-i ∇ᴱ] [-i init.json]`; a missing ∇ᴱ is the trivial connection.
fn read_triple(cfg: &RunConfig) -> CliResult<Triple> {
    let fields = field_inputs(cfg);
    if !(2..=3).contains(&fields.len()) {
        return Err(CliError::validation(format!(
            "expected the metric, second form and optionally the normal connection; got {} field inputs",
            fields.len()
        )));
    }
    let b = invalid(fields[1], SecondFormField::new(read_kind(fields[1], "second_form")?))?;
    let chart = b.chart().clone();
    let g = invalid(
        fields[0],
        read_kind(fields[0], "metric")?.with_chart(&chart).and_then(MetricField::new),
    )?;
    let ne = match fields.get(2) {
        Some(p) => invalid(
            p,
            read_kind(p, "normal_connection")?.with_chart(&chart).and_then(NormalConnectionField::new),
        )?,
        None => NormalConnectionField::trivial(&chart),
    };
    let init = match cfg.inputs.iter().find(|p| is_spec_file(p)) {
        Some(p) => serde_json::from_slice(&fs::read(p)?)
            .map_err(|e| CliError::validation(format!("{}: {e}", p.display())))?,
        None => InitialData::default(),
    };
    Ok(Triple { g, b, ne, init })
}

fn single_input(cfg: &RunConfig, count: usize) -> CliResult<Vec<&Path>> {
    let fields = field_inputs(cfg);
    if fields.len() != count {
        return Err(CliError::validation(format!("expected {count} field input(s), got {}", fields.len())));
    }
    Ok(fields)
}

fn check_finite(field: &Field, what: &str) -> CliResult<()> {
    field
        .check_finite()
        .map_err(|e| CliError::Numerical(format!("{what}: {e}")))
}

/// Dispatches on `cfg.subcommand`.
pub fn execute(cfg: &RunConfig, out: &mut Outputs) -> CliResult<()> {
    match cfg.subcommand.as_str() {
        "reconstruct" => reconstruct(cfg, out),
        "forms" => forms(cfg, out),
        "check-gcr" => check_gcr(cfg, out),
        "align" => align(cfg, out),
        "rigidity" => rigidity(cfg, out),
        "depend" => depend(cfg, out),
        "converge" => converge(cfg, out),
        "fixture" => fixture(cfg, out),
        other => Err(CliError::validation(format!("unknown subcommand {other:?}"))),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReconstructReport {
    pub p: f64,
    pub compatible: bool,
    /// Incompatible data integrated anyway because of `--force`.
    pub forced: bool,
    pub residuals_linf: ResidualReport,
    pub residuals_lp: ResidualReport,
    pub residual_threshold: f64,
    pub diagnostics: cartan::ReconstructionDiagnostics,
}

fn reconstruct(cfg: &RunConfig, out: &mut Outputs) -> CliResult<()> {
    let Triple { g, b, ne, init } = read_triple(cfg)?;
    let d = g.dim();
    let p = cfg.p.unwrap_or(DEFAULT_P);
    if !(p > d as f64) {
        return Err(CliError::validation(format!("p = {p} must exceed the dimension d = {d}")));
    }
    let a0 = init.a0.as_deref().map(|r| matrix(r, "a0")).transpose()?;
    let f0 = init.f0.clone().map(DVector::from_vec);
    let (linf, threshold, _) = check_compatibility(&g, &b, &ne)?;
    let residual_threshold = cfg.tol.unwrap_or(threshold);
    let lp = ResidualReport::compute(&g, &b, &ne, NormKind::Lp { p })?;
    let rec = cartan::reconstruct(&g, &b, &ne, a0.as_ref(), f0.as_ref(), init.x0.as_deref())?;
    check_finite(&rec.immersion, "reconstructed immersion")?;
    let diag = &rec.diagnostics;
    let compatible = linf.max() <= residual_threshold && diag.holonomy_defect <= diag.holonomy_threshold;
    let report = ReconstructReport {
        p,
        compatible,
        forced: !compatible && cfg.force,
        residuals_linf: linf,
        residuals_lp: lp,
        residual_threshold,
        diagnostics: diag.clone(),
    };
    out.json("diagnostics.json", &report)?;
    if !compatible && !cfg.force {
        let r = &report.residuals_linf;
        return Err(CliError::validation(format!(
            "incompatible data: Gauss residual {:e}, Codazzi residual {:e} (threshold {:e}), holonomy defect {:e} (threshold {:e}); rerun with --force to integrate anyway",
            r.gauss, r.codazzi, residual_threshold, diag.holonomy_defect, diag.holonomy_threshold
        )));
    }
    out.field("f", &rec.immersion, "immersion")?;
    out.field("A", &rec.frame, "frame")?;
    out.csv_field("f", &rec.immersion)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FormsReport {
    pub ambient_dim: usize,
    pub codim: usize,
    /// Smallest eigenvalue of the induced metric over the grid.
    pub min_metric_eigenvalue: f64,
    /// Largest asymmetry of the raw second differences before symmetrization.
    pub second_form_asymmetry: f64,
}

fn forms(cfg: &RunConfig, out: &mut Outputs) -> CliResult<()> {
    let path = single_input(cfg, 1)?[0];
    let f = read_immersion(path)?;
    let g = immersion::induced_metric(&f)?;
    let (b, ne, asym) = immersion::second_form_with_asymmetry(&f)?;
    let min_eig = (0..g.n_points())
        .map(|p| linalg::min_eigenvalue(&g.matrix(p)))
        .fold(f64::INFINITY, f64::min);
    out.field("g", &g, "metric")?;
    out.field("B", &b, "second_form")?;
    out.field("ne", &ne, "normal_connection")?;
    out.json(
        "forms.json",
        &FormsReport {
            ambient_dim: f.ambient(),
            codim: b.codim(),
            min_metric_eigenvalue: min_eig,
            second_form_asymmetry: asym,
        },
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GcrReport {
    pub residuals: ResidualReport,
    pub residuals_linf: ResidualReport,
    pub threshold: f64,
    pub compatible: bool,
}

fn check_gcr(cfg: &RunConfig, out: &mut Outputs) -> CliResult<()> {
    let t = read_triple(cfg)?;
    let p = cfg.p.unwrap_or(f64::INFINITY);
    let residuals = ResidualReport::compute(&t.g, &t.b, &t.ne, NormKind::Lp { p })?;
    let (linf, thr, _) = check_compatibility(&t.g, &t.b, &t.ne)?;
    let threshold = cfg.tol.unwrap_or(thr);
    out.json(
        "residuals.json",
        &GcrReport {
            compatible: linf.max() <= threshold,
            residuals,
            residuals_linf: linf,
            threshold,
        },
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlignReport {
    /// Motion carrying the first input onto the second.
    pub motion: RigidMotion,
    /// Σ‖Q f + t − f_ref‖² over grid points.
    pub residual: f64,
    pub rms: f64,
    pub p: f64,
    pub quotient_distance_w1: f64,
    pub quotient_distance_w2: f64,
}

fn align(cfg: &RunConfig, out: &mut Outputs) -> CliResult<()> {
    let paths = single_input(cfg, 2)?;
    let f = read_immersion(paths[0])?;
    let f_ref = read_immersion(paths[1])?;
    let p = cfg.p.unwrap_or(DEFAULT_P);
    let motion = best_rigid_motion(&f, &f_ref)?;
    let residual = alignment_residual(&motion, &f, &f_ref);
    let report = AlignReport {
        rms: (residual / f.n_points() as f64).sqrt(),
        residual,
        p,
        quotient_distance_w1: quotient_distance(&f, &f_ref, 1, p)?,
        quotient_distance_w2: quotient_distance(&f, &f_ref, 2, p)?,
        motion: motion.clone(),
    };
    out.json("alignment.json", &report)?;
    out.field("aligned", &motion.apply(&f), "immersion")
}

fn fixture(cfg: &RunConfig, out: &mut Outputs) -> CliResult<()> {
    let name = cfg
        .fixture
        .as_deref()
        .ok_or_else(|| CliError::validation("fixture needs --fixture <name>"))?;
    let fx = Fixture::from_name(name)?;
    let f = fx.immersion(cfg.square_resolution(DEFAULT_RESOLUTION)?);
    out.field("f", &f, "immersion")?;
    out.csv_field("f", &f)
}

/// Haar-uniform rotation from three uniforms (unit quaternion construction).
pub fn random_rotation(rng: &mut impl Rng) -> DMatrix<f64> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let q = Quaternion::new(
        u1.sqrt() * (tau * u3).cos(),
        (1.0 - u1).sqrt() * (tau * u2).sin(),
        (1.0 - u1).sqrt() * (tau * u2).cos(),
        u1.sqrt() * (tau * u3).sin(),
    );
    let r = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
    DMatrix::from_column_slice(3, 3, r.matrix().as_slice())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RigidityRow {
    pub report: RigidityReport,
    /// Smallest ‖df − Q dι‖ over the random rotations.
    pub best_random_lhs: f64,
    pub beats_random: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RigiditySummary {
    pub resolution: usize,
    pub rotation: RigidMotion,
    pub direction: Vec<f64>,
    pub random_rotations: usize,
    pub defect_slope: Option<f64>,
    pub lhs_slope: Option<f64>,
    pub ratio_spread: Option<f64>,
    pub all_beat_random: bool,
    pub rows: Vec<RigidityRow>,
}

fn rigidity(cfg: &RunConfig, out: &mut Outputs) -> CliResult<()> {
    let n = cfg.square_resolution(DEFAULT_RESOLUTION)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rotation = match &cfg.rotation {
        Some(rows) => matrix(rows, "rotation")?,
        None => random_rotation(&mut rng),
    };
    let direction = cfg.direction.clone().unwrap_or_else(|| vec![0.6, -0.2, 0.5]);
    let ts = cfg.t.clone().unwrap_or_else(|| (3..=8).map(|k| 2f64.powi(-k)).collect());
    let randoms: Vec<DMatrix<f64>> = (0..cfg.random_rotations).map(|_| random_rotation(&mut rng)).collect();
    let fam = PerturbedRotationFamily::new(SphereChart::cap(n), rotation.clone(), DVector::from_vec(direction.clone()))?;
    let rows: Vec<RigidityRow> = ts
        .par_iter()
        .map(|&t| {
            let f = fam.member(t)?;
            let report = RigidityReport::compute(t, &f, &fam.base)?;
            let df = f.differential();
            let best_random_lhs = randoms
                .iter()
                .map(|q| differential_distance(&df, &fam.base.d_iota, q, &fam.base.metric))
                .collect::<fundform::Result<Vec<f64>>>()?
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            Ok(RigidityRow {
                beats_random: report.lhs <= best_random_lhs,
                best_random_lhs,
                report,
            })
        })
        .collect::<CliResult<_>>()?;
    let fitted: Vec<&RigidityReport> = rows.iter().map(|r| &r.report).filter(|r| !r.exact_isometry).collect();
    let col = |f: fn(&RigidityReport) -> f64| fitted.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let (t, defect, lhs, ratio) = (col(|r| r.t), col(|r| r.defect), col(|r| r.lhs), col(|r| r.ratio));
    let enough = fitted.len() >= 2;
    let summary = RigiditySummary {
        resolution: n,
        rotation: RigidMotion::new(rotation, DVector::zeros(3))?,
        direction,
        random_rotations: randoms.len(),
        defect_slope: enough.then(|| loglog_slope(&t, &defect)),
        lhs_slope: enough.then(|| loglog_slope(&t, &lhs)),
        ratio_spread: (!ratio.is_empty()).then(|| {
            ratio.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / ratio.iter().cloned().fold(f64::INFINITY, f64::min)
        }),
        all_beat_random: rows.iter().all(|r| r.beats_random),
        rows,
    };
    let table = csv(
        ["t", "defect", "lhs", "ratio", "best_random_lhs", "beats_random", "boundary_deviation"],
        summary.rows.iter().map(|r| {
            let rep = &r.report;
            [
                num(Some(rep.t)),
                num(Some(rep.defect)),
                num(Some(rep.lhs)),
                num((!rep.exact_isometry).then_some(rep.ratio)),
                num(Some(r.best_random_lhs)),
                r.beats_random.to_string(),
                num(rep.boundary_deviation),
            ]
        }),
    );
    out.text("rigidity.csv", &table)?;
    out.json("rigidity.json", &summary)
}

fn depend(cfg: &RunConfig, out: &mut Outputs) -> CliResult<()> {
    let family = Family::from_name(cfg.family.as_deref().unwrap_or("sphere-radius"))?;
    let s = cfg.s.clone().unwrap_or_else(default_s);
    let study = lipschitz_study(family, &s, cfg.square_resolution(DEFAULT_RESOLUTION)?, cfg.p.unwrap_or(DEFAULT_P))?;
    let table = csv(
        [
            "s",
            "data_distance",
            "immersion_distance",
            "ratio",
            "frame_distance",
            "connection_distance",
            "pfaff_ratio",
            "coframe_distance",
            "metric_distance",
            "coframe_ratio",
            "holonomy_defect",
            "holonomy_threshold",
            "compatible",
        ],
        study.rows.iter().map(|r| {
            [
                num(Some(r.s)),
                num(Some(r.data_distance)),
                num(Some(r.immersion_distance)),
                num(r.ratio),
                num(Some(r.frame_distance)),
                num(Some(r.connection_distance)),
                num(r.pfaff_ratio),
                num(Some(r.coframe_distance)),
                num(Some(r.metric_distance)),
                num(r.coframe_ratio),
                num(Some(r.holonomy_defect)),
                num(Some(r.holonomy_threshold)),
                r.compatible.to_string(),
            ]
        }),
    );
    out.text("depend.csv", &table)?;
    out.json("depend.json", &study)
}

fn converge(cfg: &RunConfig, out: &mut Outputs) -> CliResult<()> {
    let generator = cfg.generator.clone().unwrap_or(Generator::Wrinkle);
    let eps = cfg.eps.clone().unwrap_or_else(asymptotics::default_eps);
    let p = cfg.p.unwrap_or(DEFAULT_P);
    let seq = MembraneSequence::generate(&generator, &eps, cfg.resolution.clone())?;
    let study = convergence_study(
        &seq,
        Some(&generator),
        p,
        cfg.r.unwrap_or(DEFAULT_NEGATIVE_EXPONENT),
        cfg.dict_size.unwrap_or(DEFAULT_DICT_SIZE),
        cfg.weak_dict_size,
    )?;
    let mut header = vec!["eps", "metric_error", "metric_error_analytic", "second_form_norm"];
    let j_names: Vec<String> = (1..=8).map(|l| format!("j{l}")).collect();
    header.extend(j_names.iter().map(String::as_str));
    header.extend(["j_sum", "j_combined", "remainder", "pairing_delta"]);
    let mut table = header.join(",");
    table.push('\n');
    for r in &study.rows {
        let dec = &r.decomposition;
        let mut cells = vec![
            num(Some(r.eps)),
            num(Some(r.metric_error)),
            num(r.metric_error_analytic),
            num(Some(r.second_form_norm)),
        ];
        cells.extend(dec.terms.iter().map(|&v| num(Some(v))));
        cells.extend([num(Some(dec.total)), num(Some(dec.combined)), num(Some(dec.remainder)), num(r.pairing_delta)]);
        let _ = writeln!(table, "{}", cells.join(","));
    }
    out.text("converge.csv", &table)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        generator: &'a Generator,
        #[serde(flatten)]
        study: &'a asymptotics::ConvergenceStudy,
    }
    out.json(
        "converge.json",
        &Summary {
            generator: &generator,
            study: &study,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 5e-324] {
            assert_eq!(num(Some(v)).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(num(None), "");
        assert_eq!(num(Some(f64::NAN)), "NaN");
        assert_eq!(num(Some(0.25)), "0.25");
        assert_eq!(num(Some(4.5e-14)), "4.5e-14");
    }

    #[test]
    fn random_rotations_are_special_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let q = random_rotation(&mut rng);
            assert!(linalg::orthogonality_defect(&q) < 1e-14);
            assert!((q.determinant() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn initial_data_rejects_unknown_keys() {
        assert!(serde_json::from_str::<InitialData>(r#"{"a0": [[1]], "bogus": 1}"#).is_err());
        let d: InitialData = serde_json::from_str(r#"{"f0": [1, 2, 3]}"#).unwrap();
        assert_eq!(d.f0, Some(vec![1.0, 2.0, 3.0]));
    }
}
