//! Semigroup-level checks: positivity, L∞-contractivity, the diamagnetic
//! inequality, and the positivity threshold in the zeroth-order coefficient.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::record::{CheckRecord, Worst};
use super::sampling::{Distribution, SampleSpec};
use crate::assembly::{accretivity_report, assemble_config, dirichlet_ground_eigenvalue};
use crate::coeff::CoefficientConfig;
use crate::dtn::build_dtn;
use crate::linalg::{CMatrix, CVector};
use crate::mesh::Mesh;
use crate::semigroup::SemigroupAction;
use crate::{Complex64, Error, Result};

/// Pass tolerance of the positivity suite, relative to `‖φ‖∞`.
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Pass tolerance of the L∞-contractivity suite, relative to `‖φ‖∞`.
pub const CONTRACTIVITY_TOL: f64 = 1e-8;
/// Pass tolerance of the diamagnetic inequality, relative to `‖φ‖∞`.
pub const DIAMAGNETIC_TOL: f64 = 1e-6;
/// Pass tolerance of the threshold scan on `-min K / max |K|`.
pub const THRESHOLD_TOL: f64 = 1e-8;
/// Safety margin: the scan judges `λ` only when `λ > -(1 - δ) λ₁ᴰ`.
pub const THRESHOLD_MARGIN: f64 = 0.1;

/// `count` times between `min` and `max`, uniform or log-spaced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default)]
    pub log: bool,
}

impl TimeGrid {
    pub fn new(min: f64, max: f64, count: usize, log: bool) -> Self {
        Self { min, max, count, log }
    }

    pub fn points(&self) -> Result<Vec<f64>> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("time grid: {msg}")));
        if self.count == 0 {
            return bad("count must be positive");
        }
        if !(self.min >= 0.0 && self.min <= self.max && self.max.is_finite()) {
            return bad("need 0 <= min <= max < inf");
        }
        if self.log && self.min <= 0.0 {
            return bad("log spacing needs min > 0");
        }
        if self.count == 1 {
            return Ok(vec![self.min]);
        }
        let last = (self.count - 1) as f64;
        Ok((0..self.count)
            .map(|k| {
                let s = k as f64 / last;
                if self.log {
                    (self.min.ln() + s * (self.max.ln() - self.min.ln())).exp()
                } else {
                    self.min + s * (self.max - self.min)
                }
            })
            .collect())
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidArgument(
            "times must be nonempty, finite and nonnegative".into(),
        ));
    }
    Ok(())
}

fn require_non_obtuse(sa: &SemigroupAction) -> Result<()> {
    match sa.provenance() {
        Some(p) if !p.non_obtuse => Err(Error::ObtuseMesh { max_angle: p.max_angle }),
        _ => Ok(()),
    }
}

/// Real coefficients without magnetic potential, or a real generator.
fn require_real(sa: &SemigroupAction) -> Result<()> {
    let real = match sa.provenance() {
        Some(p) => p.flags.is_c_real && p.flags.is_lower_order_real && !p.flags.has_field,
        None => sa.generator().iter().all(|z| z.im == 0.0),
    };
    if real {
        Ok(())
    } else {
        Err(Error::Hypothesis(
            "positivity needs real coefficients and no magnetic potential".into(),
        ))
    }
}

fn sup(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn base_record(name: &str, sa: &SemigroupAction, times: &[f64], spec: &SampleSpec) -> CheckRecord {
    CheckRecord::new(name)
        .param("space", sa.space())
        .param("mode", sa.mode())
        .param("dim", sa.dim())
        .param("mesh_h", sa.h())
        .param("times", times)
        .param("seed", spec.seed)
        .param("samples", spec.count)
        .param("distribution", spec.distribution)
}

/// `S(t)φ ≥ 0` for nonnegative samples and for every unit vector, i.e. every
/// column of the propagator.
pub fn verify_semigroup_positivity(sa: &SemigroupAction, times: &[f64], spec: &SampleSpec) -> Result<CheckRecord> {
    check_times(times)?;
    require_non_obtuse(sa)?;
    require_real(sa)?;
    let spec = spec.with_distribution(Distribution::Nonnegative);
    let n = sa.dim();
    let samples: Vec<CVector> = (0..spec.count).map(|k| spec.vector(k, n)).collect();
    let mut worst = Worst::new();
    let mut min_entry = f64::INFINITY;
    for &t in times {
        let p = sa.propagator(t)?;
        for j in 0..n {
            let (node, v) = argmin_re(p.column(j).iter().copied());
            min_entry = min_entry.min(v);
            worst.offer(-v, || json!({"t": t, "kind": "probe", "column": j, "node": node}));
        }
        let results: Vec<(usize, f64)> = samples
            .par_iter()
            .map(|phi| {
                let y = &p * phi;
                let (node, v) = argmin_re(y.iter().copied());
                (node, -v / sup(phi).max(f64::MIN_POSITIVE))
            })
            .collect();
        for (k, (node, v)) in results.into_iter().enumerate() {
            worst.offer(
                v,
                || json!({"t": t, "kind": "sample", "index": k, "node": node, "seed": spec.seed}),
            );
        }
    }
    Ok(base_record("semigroup-positivity", sa, times, &spec)
        .fit("min_propagator_entry", min_entry)
        .judge(worst.value, POSITIVITY_TOL, worst.witness))
}

fn argmin_re(values: impl Iterator<Item = Complex64>) -> (usize, f64) {
    values.enumerate().fold(
        (0, f64::INFINITY),
        |best, (i, z)| {
            if z.re < best.1 {
                (i, z.re)
            } else {
                best
            }
        },
    )
}

/// Names of the unmet hypotheses of the L∞-contractivity statement.
fn contractivity_gaps(sa: &SemigroupAction) -> Vec<&'static str> {
    let Some(p) = sa.provenance() else {
        return Vec::new();
    };
    let f = &p.flags;
    let mut gaps = Vec::new();
    if !f.is_c_real {
        gaps.push("C real");
    }
    if !f.is_b_real {
        gaps.push("b real");
    }
    if !f.is_i_c_real {
        gaps.push("i·c real");
    }
    if !(f.is_a0_real && f.min_re_a0 >= 0.0) {
        gaps.push("Re a0 >= 0");
    }
    if f.has_field {
        gaps.push("no magnetic potential (its first-order terms are not real)");
    }
    gaps
}

/// `‖S(t)φ‖∞ ≤ ‖φ‖∞` for complex samples, plus the exact operator norm
/// `max_i Σ_j |P_ij|` of each propagator.
pub fn verify_linf_contractivity(sa: &SemigroupAction, times: &[f64], spec: &SampleSpec) -> Result<CheckRecord> {
    check_times(times)?;
    require_non_obtuse(sa)?;
    let gaps = contractivity_gaps(sa);
    if !gaps.is_empty() {
        return Err(Error::Hypothesis(format!(
            "L-infinity contractivity needs {}",
            gaps.join(", ")
        )));
    }
    let spec = spec.with_distribution(Distribution::ComplexGaussian);
    let n = sa.dim();
    let samples: Vec<CVector> = (0..spec.count).map(|k| spec.vector(k, n)).collect();
    let mut worst = Worst::new();
    let mut max_norm = 0.0f64;
    for &t in times {
        let p = sa.propagator(t)?;
        for i in 0..n {
            let row: f64 = p.row(i).iter().map(|z| z.norm()).sum();
            max_norm = max_norm.max(row);
            worst.offer(row - 1.0, || json!({"t": t, "kind": "row-probe", "row": i}));
        }
        let results: Vec<f64> = samples
            .par_iter()
            .map(|phi| {
                let s = sup(phi).max(f64::MIN_POSITIVE);
                (sup(&(&p * phi)) - s) / s
            })
            .collect();
        for (k, v) in results.into_iter().enumerate() {
            worst.offer(v, || json!({"t": t, "kind": "sample", "index": k, "seed": spec.seed}));
        }
    }
    let record = base_record("linf-contractivity", sa, times, &spec).fit("max_operator_norm", max_norm);
    let record = if sa.provenance().is_none() {
        record.note("hypotheses not checked: no coefficient data")
    } else {
        record
    };
    Ok(record.judge(worst.value, CONTRACTIVITY_TOL, worst.witness))
}

/// `|S_a(t)φ| ≤ S_0(t)|φ|` pointwise for complex samples.
pub fn verify_diamagnetic(
    magnetic: &SemigroupAction,
    zero: &SemigroupAction,
    times: &[f64],
    spec: &SampleSpec,
) -> Result<CheckRecord> {
    check_times(times)?;
    if magnetic.dim() != zero.dim() {
        return Err(Error::LengthMismatch {
            expected: zero.dim(),
            got: magnetic.dim(),
        });
    }
    require_non_obtuse(zero)?;
    require_real(zero)?;
    let spec = spec.with_distribution(Distribution::ComplexGaussian);
    let n = zero.dim();
    let samples: Vec<CVector> = (0..spec.count).map(|k| spec.vector(k, n)).collect();
    let mut worst = Worst::new();
    let mut entrywise = f64::NEG_INFINITY;
    let mut kernel_excess = f64::NEG_INFINITY;
    for &t in times {
        let pa = magnetic.propagator(t)?;
        let p0 = zero.propagator(t)?;
        entrywise = entrywise.max(max_entrywise_excess(&pa, &p0));
        kernel_excess = kernel_excess.max(kernel_max_excess(&pa, &p0, zero.weight()));
        let results: Vec<(usize, f64)> = samples
            .par_iter()
            .map(|phi| {
                let lhs = &pa * phi;
                let rhs = &p0 * phi.map(|z| Complex64::new(z.norm(), 0.0));
                let s = sup(phi).max(f64::MIN_POSITIVE);
                (0..n)
                    .map(|i| (i, (lhs[i].norm() - rhs[i].re) / s))
                    .fold((0, f64::NEG_INFINITY), |b, x| if x.1 > b.1 { x } else { b })
            })
            .collect();
        for (k, (node, v)) in results.into_iter().enumerate() {
            worst.offer(
                v,
                || json!({"t": t, "kind": "sample", "index": k, "node": node, "seed": spec.seed}),
            );
        }
    }
    Ok(base_record("diamagnetic", magnetic, times, &spec)
        .fit("entrywise_excess", entrywise)
        .fit("kernel_max_excess", kernel_excess)
        .judge(worst.value, DIAMAGNETIC_TOL, worst.witness))
}

/// `max_ij |P_a,ij| - P_0,ij`.
fn max_entrywise_excess(pa: &CMatrix, p0: &CMatrix) -> f64 {
    pa.iter()
        .zip(p0.iter())
        .map(|(a, b)| a.norm() - b.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `(max |K_a| - max K_0) / max K_0` with `K = P W⁻¹`.
fn kernel_max_excess(pa: &CMatrix, p0: &CMatrix, weight: &[f64]) -> f64 {
    let n = pa.ncols();
    let mut ka = 0.0f64;
    let mut k0 = 0.0f64;
    for j in 0..n {
        for i in 0..pa.nrows() {
            ka = ka.max(pa[(i, j)].norm() / weight[j]);
            k0 = k0.max(p0[(i, j)].re / weight[j]);
        }
    }
    (ka - k0) / k0.max(f64::MIN_POSITIVE)
}

/// For each `λ` (absolute, or in units of `λ₁ᴰ` when `relative`), the
/// accretivity constants of `a0 = λ` and the smallest entry of the boundary
/// kernel over `times`. Judged only for `λ > -(1 - δ) λ₁ᴰ`.
pub fn positivity_threshold_scan(
    mesh: Arc<Mesh>,
    c: [[f64; 2]; 2],
    lambdas: &[f64],
    relative: bool,
    times: &[f64],
) -> Result<Vec<CheckRecord>> {
    check_times(times)?;
    if c[0][1] != c[1][0] {
        return Err(Error::Hypothesis("the threshold scan needs a symmetric C".into()));
    }
    let q = mesh.quality();
    if !q.non_obtuse {
        return Err(Error::ObtuseMesh { max_angle: q.max_angle });
    }
    let base = CoefficientConfig::laplacian().with_c(c);
    let lambda1 = dirichlet_ground_eigenvalue(&assemble_config(mesh.clone(), &base)?)?;
    let mut records = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let lambda = if relative { l * lambda1 } else { l };
        let fm = Arc::new(assemble_config(mesh.clone(), &base.clone().with_a0(lambda))?);
        let acc = accretivity_report(&fm);
        let record = CheckRecord::new("positivity-threshold")
            .param("lambda", lambda)
            .param("lambda_over_lambda1", lambda / lambda1)
            .param("times", times)
            .param("mesh_h", mesh.h())
            .fit("lambda1_dirichlet", lambda1)
            .fit("min_hermitian_eig", acc.min_hermitian_eig)
            .fit("min_interior_hermitian_eig", acc.min_interior_hermitian_eig);
        let judged = lambda > -(1.0 - THRESHOLD_MARGIN) * lambda1;
        let kernel = build_dtn(&fm).and_then(|op| {
            let sa = SemigroupAction::boundary(&op)?;
            let mut worst = Worst::new();
            let mut min_entry = f64::INFINITY;
            for &t in times.iter().filter(|&&t| t > 0.0) {
                let k = sa.kernel(t)?;
                let (lo, hi) = (k.min_real_entry(), k.max_abs_entry());
                min_entry = min_entry.min(lo);
                worst.offer(-lo / hi.max(f64::MIN_POSITIVE), || json!({"t": t}));
            }
            Ok((worst, min_entry))
        });
        let record = match kernel {
            Ok((worst, min_entry)) => {
                let r = record
                    .fit("min_kernel_entry", min_entry)
                    .judge(worst.value, THRESHOLD_TOL, worst.witness);
                if judged {
                    r
                } else {
                    r.report_only("below the safety margin of the Dirichlet threshold")
                }
            }
            Err(Error::SingularDirichlet { row, pivot }) if !judged => record.report_only(format!(
                "Dirichlet operator not invertible (pivot {pivot:.3e} at row {row})"
            )),
            Err(e) => return Err(e),
        };
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_config;
    use crate::linalg::identity;
    use crate::mesh::{build_disk, build_square};
    use crate::semigroup::make_action;
    use crate::verify::record::Verdict;

    fn spec() -> SampleSpec {
        SampleSpec::new(3, 16, Distribution::ComplexGaussian)
    }

    fn boundary(mesh: Mesh, config: &CoefficientConfig) -> SemigroupAction {
        let fm = Arc::new(assemble_config(Arc::new(mesh), config).unwrap());
        SemigroupAction::boundary(&build_dtn(&fm).unwrap()).unwrap()
    }

    #[test]
    fn time_grid_points() {
        assert_eq!(TimeGrid::new(0.0, 1.0, 3, false).points().unwrap(), vec![0.0, 0.5, 1.0]);
        let g = TimeGrid::new(0.1, 10.0, 3, true).points().unwrap();
        assert!((g[1] - 1.0).abs() < 1e-12);
        assert!(TimeGrid::new(0.0, 1.0, 3, true).points().is_err());
        assert!(TimeGrid::new(1.0, 0.5, 3, false).points().is_err());
    }

    #[test]
    fn laplacian_dtn_is_positive_and_contractive() {
        let sa = boundary(build_square(8).unwrap(), &CoefficientConfig::laplacian());
        let times = [0.1, 0.5, 1.0];
        let r = verify_semigroup_positivity(&sa, &times, &spec()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.worst_violation);
        let r = verify_linf_contractivity(&sa, &times, &spec()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.worst_violation);
    }

    #[test]
    fn toy_zero_generator_is_trivially_positive() {
        let sa = make_action(CMatrix::zeros(1, 1), vec![1.0]).unwrap();
        let r = verify_semigroup_positivity(&sa, &[0.0, 1.0], &spec()).unwrap();
        assert!(r.worst_violation <= 0.0);
        assert_eq!(r.verdict, Verdict::Pass);
        let sa = make_action(identity(2), vec![1.0, 1.0]).unwrap();
        assert_eq!(
            verify_linf_contractivity(&sa, &[1.0], &spec()).unwrap().verdict,
            Verdict::Pass
        );
    }

    #[test]
    fn contractivity_refuses_negative_a0_and_fields() {
        let sa = boundary(build_square(6).unwrap(), &CoefficientConfig::laplacian().with_a0(-1.0));
        let err = verify_linf_contractivity(&sa, &[0.5], &spec()).unwrap_err();
        assert!(err.to_string().contains("Re a0 >= 0"), "{err}");
        let sa = boundary(
            build_square(6).unwrap(),
            &CoefficientConfig::laplacian().with_avec("y", "-x"),
        );
        assert!(matches!(
            verify_linf_contractivity(&sa, &[0.5], &spec()),
            Err(Error::Hypothesis(_))
        ));
        assert!(matches!(
            verify_semigroup_positivity(&sa, &[0.5], &spec()),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn positive_a0_gives_strict_decay_of_constants() {
        let sa = boundary(build_square(8).unwrap(), &CoefficientConfig::laplacian().with_a0(1.0));
        let one = CVector::from_element(sa.dim(), Complex64::new(1.0, 0.0));
        let mut last = 1.0;
        for t in [0.1, 0.2, 0.4, 0.8] {
            let s = sup(&sa.apply(t, &one).unwrap());
            assert!(s < last, "{s} >= {last}");
            last = s;
        }
    }

    #[test]
    fn diamagnetic_on_disk() {
        let config = CoefficientConfig::laplacian().with_avec("y", "-x");
        let mag = boundary(build_disk(32, 4).unwrap(), &config);
        let zero = boundary(build_disk(32, 4).unwrap(), &config.without_field());
        let r = verify_diamagnetic(&mag, &zero, &[0.1, 0.5, 1.0], &spec()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.worst_violation);
    }

    #[test]
    fn threshold_scan_passes_above_and_reports_below() {
        let mesh = Arc::new(build_square(8).unwrap());
        let rs =
            positivity_threshold_scan(mesh, [[1.0, 0.0], [0.0, 1.0]], &[0.0, -0.5, -1.5], true, &[0.1, 1.0]).unwrap();
        assert_eq!(rs[0].verdict, Verdict::Pass);
        assert_eq!(rs[1].verdict, Verdict::Pass, "{}", rs[1].worst_violation);
        assert_eq!(rs[2].verdict, Verdict::ReportOnly);
        assert!(rs[2].fitted["min_interior_hermitian_eig"] < 0.0);
    }
}
