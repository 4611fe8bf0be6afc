//! Multi-configuration runs: refinement studies and the coherence check
//! between the form criterion and the semigroup it describes.

use std::sync::Arc;

use serde_json::json;

use super::dynamics::{verify_diamagnetic, verify_semigroup_positivity, DIAMAGNETIC_TOL};
use super::forms::{check_domination_form, check_invariance_criterion, DOMINATION_TOL};
use super::record::{CheckRecord, Verdict, Worst};
use super::sampling::SampleSpec;
use crate::assembly::{assemble_config, FormMatrices};
use crate::coeff::CoefficientConfig;
use crate::convex::ConvexSetId;
use crate::dtn::build_dtn;
use crate::mesh::DomainSpec;
use crate::semigroup::{SemigroupAction, Space};
use crate::{Error, Result};

/// A named configuration of the built-in coherence suite.
#[derive(Debug, Clone)]
pub struct BuiltinCase {
    pub name: &'static str,
    pub domain: DomainSpec,
    pub config: CoefficientConfig,
}

pub fn builtin_configurations() -> Vec<BuiltinCase> {
    let square = DomainSpec::Square { n: 8 };
    let disk = DomainSpec::Disk { m: 32, rings: 4 };
    let lap = CoefficientConfig::laplacian;
    let case = |name, domain, config| BuiltinCase { name, domain, config };
    vec![
        case("square-laplacian", square, lap()),
        case("square-a0-positive", square, lap().with_a0(1.0)),
        case("square-a0-variable", square, lap().with_a0("1 + x*y")),
        case("square-a0-negative", square, lap().with_a0(-5.0)),
        case("square-a0-below-threshold", square, lap().with_a0(-30.0)),
        case(
            "square-anisotropic-diagonal",
            square,
            lap().with_c([[2.0, 0.0], [0.0, 0.5]]),
        ),
        case(
            "square-anisotropic-coupled",
            square,
            lap().with_c([[1.0, 0.5], [0.5, 1.0]]),
        ),
        case("square-drift", square, lap().with_b([1.0.into(), 0.0.into()])),
        case("disk-laplacian", disk, lap()),
        case("disk-a0-positive", disk, lap().with_a0(2.0)),
    ]
}

fn assemble_case(domain: DomainSpec, config: &CoefficientConfig) -> Result<Arc<FormMatrices>> {
    Ok(Arc::new(assemble_config(Arc::new(domain.build()?), config)?))
}

/// On every built-in configuration: if the positive-cone criterion passes,
/// the boundary and domain semigroups must pass the positivity suite.
/// The violation is the number of configurations where this fails.
pub fn coherence_suite(spec: &SampleSpec, times: &[f64]) -> Result<CheckRecord> {
    let mut exceptions = Vec::new();
    let mut criterion_passes = 0usize;
    let mut cases = Vec::new();
    for case in builtin_configurations() {
        let fm = assemble_case(case.domain, &case.config)?;
        let criterion = check_invariance_criterion(&*fm, ConvexSetId::PositiveCone, spec)?;
        let boundary = build_dtn(&fm)
            .and_then(|op| SemigroupAction::boundary(&op))
            .and_then(|sa| verify_semigroup_positivity(&sa, times, spec));
        let domain = SemigroupAction::domain(&fm).and_then(|sa| verify_semigroup_positivity(&sa, times, spec));
        let verdict = |r: &Result<CheckRecord>| match r {
            Ok(r) => json!(r.verdict),
            Err(e) => json!(format!("refused: {e}")),
        };
        cases.push(json!({
            "name": case.name,
            "criterion": criterion.verdict,
            "boundary_positivity": verdict(&boundary),
            "domain_positivity": verdict(&domain),
        }));
        if criterion.verdict == Verdict::Pass {
            criterion_passes += 1;
            let ok = |r: &Result<CheckRecord>| matches!(r, Ok(r) if r.verdict == Verdict::Pass);
            if !ok(&boundary) || !ok(&domain) {
                exceptions.push(case.name);
            }
        }
    }
    Ok(CheckRecord::new("coherence")
        .param("seed", spec.seed)
        .param("samples", spec.count)
        .param("times", times)
        .param("cases", cases)
        .fit("criterion_passes", criterion_passes as f64)
        .judge(exceptions.len() as f64, 0.0, json!({"exceptions": exceptions})))
}

/// Pass iff `max(value, 0)` does not increase along the refinement and the
/// finest value is within `tolerance`.
pub fn refinement_record(name: &str, labels: &[usize], values: &[f64], tolerance: f64) -> CheckRecord {
    let positive: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let mut worst = Worst::new();
    for (i, w) in positive.windows(2).enumerate() {
        worst.offer(w[1] - w[0], || json!({"from": labels[i], "to": labels[i + 1]}));
    }
    let monotone = positive.len() < 2 || worst.value <= 0.0;
    let finest = values.last().copied().unwrap_or(f64::NAN);
    let mut record = CheckRecord::new(name)
        .param("resolutions", labels)
        .param("monotone", monotone);
    for (l, v) in labels.iter().zip(values) {
        record = record.fit(&format!("worst_{l}"), *v);
    }
    // A non-monotone refinement fails regardless of the finest value.
    let violation = if monotone { finest } else { f64::INFINITY };
    record.judge(
        violation,
        tolerance,
        json!({"finest": finest, "increase": worst.witness}),
    )
}

/// The resolution label of a family member: `n` for squares, `m` for disks.
pub fn resolution_label(domain: DomainSpec) -> usize {
    match domain {
        DomainSpec::Square { n } => n,
        DomainSpec::Disk { m, .. } => m,
    }
}

fn labels(domains: &[DomainSpec]) -> Result<Vec<usize>> {
    if domains.is_empty() {
        return Err(Error::InvalidArgument(
            "refinement needs at least one resolution".into(),
        ));
    }
    Ok(domains.iter().map(|&d| resolution_label(d)).collect())
}

/// The domination inequality at each resolution.
pub fn domination_form_refinement(
    domains: &[DomainSpec],
    config: &CoefficientConfig,
    spec: &SampleSpec,
) -> Result<CheckRecord> {
    let labels = labels(domains)?;
    let mut values = Vec::with_capacity(domains.len());
    for &domain in domains {
        let mag = assemble_case(domain, config)?;
        let zero = assemble_case(domain, &config.without_field())?;
        values.push(check_domination_form(&mag, &zero, spec)?.worst_violation);
    }
    Ok(refinement_record(
        "domination-form-refinement",
        &labels,
        &values,
        DOMINATION_TOL,
    ))
}

/// The diamagnetic inequality at each resolution, for the boundary or the
/// domain semigroup.
pub fn diamagnetic_refinement(
    domains: &[DomainSpec],
    config: &CoefficientConfig,
    space: Space,
    times: &[f64],
    spec: &SampleSpec,
) -> Result<CheckRecord> {
    let labels = labels(domains)?;
    let action = |fm: &Arc<FormMatrices>| match space {
        Space::Boundary => SemigroupAction::boundary(&build_dtn(fm)?),
        Space::Domain => SemigroupAction::domain(fm),
        Space::Abstract => Err(Error::InvalidArgument(
            "refinement needs a boundary or domain space".into(),
        )),
    };
    let mut values = Vec::with_capacity(domains.len());
    for &domain in domains {
        let mag = action(&assemble_case(domain, config)?)?;
        let zero = action(&assemble_case(domain, &config.without_field())?)?;
        values.push(verify_diamagnetic(&mag, &zero, times, spec)?.worst_violation);
    }
    Ok(refinement_record("diamagnetic-refinement", &labels, &values, DIAMAGNETIC_TOL).param("space", space))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::sampling::Distribution;

    #[test]
    fn refinement_monotone_on_positive_parts() {
        let r = refinement_record("x", &[8, 16, 32], &[-1.0, -0.5, -2.0], 1e-6);
        assert_eq!(r.verdict, Verdict::Pass);
        let r = refinement_record("x", &[8, 16, 32], &[1e-7, 2e-7, 1e-8], 1e-6);
        assert_eq!(r.verdict, Verdict::Fail);
        let r = refinement_record("x", &[8, 16], &[1e-3, 1e-5], 1e-6);
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn coherence_has_no_exceptions() {
        let spec = SampleSpec::new(1, 16, Distribution::ComplexGaussian);
        let r = coherence_suite(&spec, &[0.1, 1.0]).unwrap();
        assert_eq!(
            r.verdict,
            Verdict::Pass,
            "{}",
            serde_json::to_string_pretty(&r).unwrap()
        );
        assert!(r.fitted["criterion_passes"] >= 3.0);
    }
}
