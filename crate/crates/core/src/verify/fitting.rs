//! Fitted quantities: the trace exponent, the Poisson-type kernel constant and
//! the gauge-convergence rate.

use std::sync::Arc;

use serde_json::json;

use super::record::{CheckRecord, Worst};
use crate::assembly::assemble_config;
use crate::coeff::{CoefficientConfig, RealEntry};
use crate::dtn::{build_dtn, eigenvalues};
use crate::expr;
use crate::mesh::Mesh;
use crate::semigroup::{trace_sum_of, KernelMatrix};
use crate::{Error, Result};

/// Number of log-spaced points in the trace fit.
pub const TRACE_POINTS: usize = 20;
/// The fit uses `t ≥ TRACE_GUARD / λ_max`, where the truncated spectrum
/// still resolves the trace.
pub const TRACE_GUARD: f64 = 5.0;
/// Largest accepted trace exponent.
pub const TRACE_EXPONENT_MAX: f64 = 1.1;
/// The kernel grid must reach down to this time and up to [`POISSON_T_MAX`].
pub const POISSON_T_MIN: f64 = 0.05;
pub const POISSON_T_MAX: f64 = 3.0;
/// Accepted ratio of the kernel constants at two resolutions.
pub const POISSON_STABILITY: f64 = 2.0;
/// Accepted ratio of a dominated kernel to the fitted envelope.
pub const POISSON_ENVELOPE: f64 = 1.5;
/// Largest accepted ratio of successive gauge distances.
pub const GAUGE_RATIO_MAX: f64 = 0.7;
/// Distances below this count as zero in the gauge check.
pub const GAUGE_FLOOR: f64 = 1e-12;

/// Least-squares fit of `log Σ_k e^{-λ_k t} = log c - α log t` on
/// [`TRACE_POINTS`] log-spaced times in `[t_min, t_max] ∩ [5/λ_max, 1]`.
pub fn fit_trace_exponent(eigenvalues: &[f64], t_min: f64, t_max: f64) -> Result<CheckRecord> {
    if eigenvalues.is_empty() {
        return Err(Error::InvalidArgument("no eigenvalues".into()));
    }
    if !(t_min > 0.0 && t_min <= t_max && t_max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "invalid time window [{t_min}, {t_max}]"
        )));
    }
    let lambda_max = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = if lambda_max > 0.0 {
        t_min.max(TRACE_GUARD / lambda_max)
    } else {
        t_min
    };
    let hi = t_max.min(1.0);
    if !(lo < hi) {
        let need = TRACE_GUARD / hi;
        return Err(Error::Refused(format!(
            "admissible trace window is empty: need λ_max > {need:.3} (have {lambda_max:.3}); refine the mesh"
        )));
    }
    let points: Vec<(f64, f64)> = (0..TRACE_POINTS)
        .map(|k| {
            let t = (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (TRACE_POINTS - 1) as f64).exp();
            (t, trace_sum_of(eigenvalues, t))
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|(t, _)| -t.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, s)| s.ln()).collect();
    let (alpha, log_c) = least_squares(&xs, &ys);
    let scaled = points.iter().map(|(t, s)| t * s);
    let t_sum_min = scaled.clone().fold(f64::INFINITY, f64::min);
    let t_sum_max = scaled.fold(f64::NEG_INFINITY, f64::max);
    Ok(CheckRecord::new("trace-exponent")
        .param("eigenvalues", eigenvalues.len())
        .param("requested_window", [t_min, t_max])
        .fit("alpha", alpha)
        .fit("c", log_c.exp())
        .fit("t_min", lo)
        .fit("t_max", hi)
        .fit("lambda_max", lambda_max)
        .fit("t_trace_min", t_sum_min)
        .fit("t_trace_max", t_sum_max)
        .judge(alpha, TRACE_EXPONENT_MAX, json!({"window": [lo, hi]})))
}

/// Slope and intercept of the least-squares line through `(x, y)`.
fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// `|K(t, w, z)| (1 + |z - w|/t)² (t ∧ 1) e^{λ₁ t}` maximized over entries,
/// with the location of the maximum.
fn envelope_max(k: &KernelMatrix, lambda1: f64) -> (f64, usize, usize) {
    let t = k.t;
    let factor = t.min(1.0) * (lambda1 * t).exp();
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for j in 0..k.k.ncols() {
        for i in 0..k.k.nrows() {
            let r = 1.0 + distance(k.coords[i], k.coords[j]) / t;
            let v = k.k[(i, j)].norm() * r * r * factor;
            if v > best.0 {
                best = (v, i, j);
            }
        }
    }
    best
}

fn check_kernel_grid(kernels: &[KernelMatrix]) -> Result<()> {
    let t_lo = kernels.iter().map(|k| k.t).fold(f64::INFINITY, f64::min);
    let t_hi = kernels.iter().map(|k| k.t).fold(f64::NEG_INFINITY, f64::max);
    if !(t_lo <= POISSON_T_MIN && t_hi >= POISSON_T_MAX) {
        return Err(Error::InvalidArgument(format!(
            "kernel times must span [{POISSON_T_MIN}, {POISSON_T_MAX}], got [{t_lo}, {t_hi}]"
        )));
    }
    if kernels
        .iter()
        .any(|k| k.coords.len() != k.k.nrows() || k.k.nrows() != k.k.ncols())
    {
        return Err(Error::InvalidArgument(
            "kernels need square matrices with node coordinates".into(),
        ));
    }
    Ok(())
}

/// `c* = max |K(t, w, z)| (1 + |z - w|/t)² (t ∧ 1) e^{λ₁ t}` over `t ≥ h`.
/// Times below the mesh size are excluded and listed in the notes.
pub fn fit_poisson_constant(kernels: &[KernelMatrix], lambda1: f64) -> Result<CheckRecord> {
    check_kernel_grid(kernels)?;
    let mut worst = Worst::new();
    let mut excluded = Vec::new();
    let mut h = f64::NAN;
    for k in kernels {
        h = k.h;
        if k.t < k.h {
            excluded.push(k.t);
            continue;
        }
        let (v, i, j) = envelope_max(k, lambda1);
        worst.offer(v, || json!({"t": k.t, "row": i, "col": j}));
    }
    if worst.value == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(
            "every kernel time is below the mesh size".into(),
        ));
    }
    let c_star = worst.value;
    let record = CheckRecord::new("poisson-constant")
        .param("times", kernels.iter().map(|k| k.t).collect::<Vec<_>>())
        .param("lambda1", lambda1)
        .param("mesh_h", h)
        .fit("c_star", c_star);
    let record = if excluded.is_empty() {
        record
    } else {
        record.note(format!("excluded t < h = {h:.4}: {excluded:?}"))
    };
    // Finite and positive is the pass condition; the violation is 0 or 1.
    let ok = c_star.is_finite() && c_star > 0.0;
    Ok(record.judge(if ok { 0.0 } else { 1.0 }, 0.0, worst.witness))
}

/// The kernel constants of two resolutions agree within a factor of two.
pub fn poisson_stability(coarse: &CheckRecord, fine: &CheckRecord) -> Result<CheckRecord> {
    let get = |r: &CheckRecord| {
        r.fitted
            .get("c_star")
            .copied()
            .ok_or_else(|| Error::InvalidArgument("record has no c_star".into()))
    };
    let (a, b) = (get(coarse)?, get(fine)?);
    let ratio = a.max(b) / a.min(b);
    Ok(CheckRecord::new("poisson-stability")
        .param("mesh_h", [coarse.params.get("mesh_h"), fine.params.get("mesh_h")])
        .fit("c_star_coarse", a)
        .fit("c_star_fine", b)
        .judge(
            if ratio.is_nan() { f64::INFINITY } else { ratio },
            POISSON_STABILITY,
            json!({"ratio": ratio}),
        ))
}

/// A second kernel family stays below `1.5 c*` times the same envelope.
pub fn poisson_envelope(kernels: &[KernelMatrix], c_star: f64, lambda1: f64) -> Result<CheckRecord> {
    check_kernel_grid(kernels)?;
    if !(c_star > 0.0 && c_star.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "c* must be positive and finite, got {c_star}"
        )));
    }
    let mut worst = Worst::new();
    for k in kernels.iter().filter(|k| k.t >= k.h) {
        let (v, i, j) = envelope_max(k, lambda1);
        worst.offer(v / c_star, || json!({"t": k.t, "row": i, "col": j}));
    }
    Ok(CheckRecord::new("poisson-envelope")
        .param("c_star", c_star)
        .param("lambda1", lambda1)
        .judge(worst.value, POISSON_ENVELOPE, worst.witness))
}

fn field_free(config: &CoefficientConfig) -> bool {
    config
        .avec
        .iter()
        .all(|e| matches!(e, RealEntry::Number(v) if *v == 0.0))
}

/// Compares `grad` with central differences of `chi` at the mesh vertices.
fn check_gradient(mesh: &Mesh, chi: &str, grad: [&str; 2]) -> Result<()> {
    let parse = |field: &str, text: &str| {
        expr::parse(text).map_err(|source| Error::Expression {
            field: field.into(),
            source,
        })
    };
    let chi_e = parse("chi", chi)?;
    let g = [parse("avec[0]", grad[0])?, parse("avec[1]", grad[1])?];
    let eval = |e: &expr::Expr, p: [f64; 2]| {
        e.eval(p[0], p[1])
            .map_err(|err| Error::InvalidArgument(format!("gauge expression at {p:?}: {err}")))
    };
    let step = 1e-5;
    for &p in mesh.vertices() {
        for k in 0..2 {
            let mut plus = p;
            let mut minus = p;
            plus[k] += step;
            minus[k] -= step;
            let fd = (eval(&chi_e, plus)? - eval(&chi_e, minus)?) / (2.0 * step);
            let exact = eval(&g[k], p)?;
            if (fd - exact).abs() > 1e-5 * (1.0 + exact.abs()) {
                return Err(Error::Refused(format!(
                    "the magnetic potential is not the gradient of chi: d chi/d{} = {fd:.6} but avec[{k}] = {exact:.6} at {p:?}",
                    ["x", "y"][k]
                )));
            }
        }
    }
    Ok(())
}

/// For `a = ∇χ`, the distance between the first `count` Steklov eigenvalues
/// with and without `a` must shrink by a factor `≤ 0.7` per refinement.
pub fn verify_gauge_convergence(
    meshes: &[Arc<Mesh>],
    base: &CoefficientConfig,
    chi: &str,
    grad: [&str; 2],
    count: usize,
) -> Result<CheckRecord> {
    if meshes.len() < 2 {
        return Err(Error::InvalidArgument(
            "gauge convergence needs at least two meshes".into(),
        ));
    }
    if !field_free(base) {
        return Err(Error::InvalidArgument(
            "the base coefficients must not carry a magnetic potential".into(),
        ));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("eigenvalue count must be positive".into()));
    }
    check_gradient(&meshes[0], chi, grad)?;
    let gauged = base.clone().with_avec(grad[0], grad[1]);
    let mut distances = Vec::with_capacity(meshes.len());
    for mesh in meshes {
        let spectrum = |config: &CoefficientConfig| -> Result<Vec<f64>> {
            let fm = Arc::new(assemble_config(mesh.clone(), config)?);
            eigenvalues(&build_dtn(&fm)?)
        };
        let (with, without) = (spectrum(&gauged)?, spectrum(base)?);
        let k = count.min(with.len());
        distances.push((0..k).map(|i| (with[i] - without[i]).abs()).fold(0.0, f64::max));
    }
    let mut worst = Worst::new();
    for (i, w) in distances.windows(2).enumerate() {
        let ratio = match (w[0] <= GAUGE_FLOOR, w[1] <= GAUGE_FLOOR) {
            (_, true) => 0.0,
            (true, false) => f64::INFINITY,
            _ => w[1] / w[0],
        };
        worst.offer(ratio, || json!({"refinement": i, "distances": [w[0], w[1]]}));
    }
    let mut record = CheckRecord::new("gauge-convergence")
        .param("chi", chi)
        .param("avec", grad)
        .param("count", count)
        .param("mesh_h", meshes.iter().map(|m| m.h()).collect::<Vec<_>>());
    for (i, d) in distances.iter().enumerate() {
        record = record.fit(&format!("distance_{i}"), *d);
    }
    Ok(record.judge(worst.value, GAUGE_RATIO_MAX, worst.witness))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtn::build_dtn;
    use crate::mesh::{build_disk, build_square};
    use crate::semigroup::SemigroupAction;
    use crate::verify::record::Verdict;

    #[test]
    fn single_zero_eigenvalue_has_exponent_zero() {
        let r = fit_trace_exponent(&[0.0], 0.1, 1.0).unwrap();
        assert_eq!(r.fitted["alpha"], 0.0);
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn empty_window_is_refused() {
        let err = fit_trace_exponent(&[0.0, 2.0], 0.01, 1.0).unwrap_err();
        assert!(matches!(err, Error::Refused(_)), "{err}");
    }

    #[test]
    fn least_squares_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let (s, c) = least_squares(&xs, &ys);
        assert!((s - 2.0).abs() < 1e-14 && (c + 1.0).abs() < 1e-14);
    }

    #[test]
    fn exact_power_law_is_fitted() {
        // Σ e^{-kt} over k = 0..N approximates 1/t on the guarded window.
        let eig: Vec<f64> = (0..4000).map(|k| k as f64 * 0.05).collect();
        let r = fit_trace_exponent(&eig, 0.1, 1.0).unwrap();
        assert!((r.fitted["alpha"] - 1.0).abs() < 0.1, "{}", r.fitted["alpha"]);
    }

    #[test]
    fn gauge_check_refuses_non_gradient_field() {
        let meshes = [Arc::new(build_square(4).unwrap()), Arc::new(build_square(8).unwrap())];
        let err =
            verify_gauge_convergence(&meshes, &CoefficientConfig::laplacian(), "x*y", ["y", "-x"], 4).unwrap_err();
        assert!(matches!(err, Error::Refused(_)), "{err}");
    }

    #[test]
    fn gauge_distances_shrink() {
        let meshes: Vec<_> = [4, 8, 16].iter().map(|&n| Arc::new(build_square(n).unwrap())).collect();
        let r = verify_gauge_convergence(&meshes, &CoefficientConfig::laplacian(), "x*y", ["y", "x"], 10).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{:?}", r.fitted);
        let r = verify_gauge_convergence(&meshes, &CoefficientConfig::laplacian(), "0", ["0", "0"], 10).unwrap();
        assert_eq!(r.worst_violation, 0.0);
    }

    #[test]
    fn poisson_constant_on_coarse_disk() {
        let fm =
            Arc::new(assemble_config(Arc::new(build_disk(32, 4).unwrap()), &CoefficientConfig::laplacian()).unwrap());
        let sa = SemigroupAction::boundary(&build_dtn(&fm).unwrap()).unwrap();
        let kernels: Vec<_> = [0.05, 0.2, 0.5, 1.0, 3.0]
            .iter()
            .map(|&t| sa.kernel(t).unwrap())
            .collect();
        let r = fit_poisson_constant(&kernels, 0.0).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(!r.notes.is_empty(), "t = 0.05 < h should be excluded");
        assert!(r.fitted["c_star"] > 1.0 / std::f64::consts::PI * 0.95);
        let env = poisson_envelope(&kernels, r.fitted["c_star"], 0.0).unwrap();
        assert!((env.worst_violation - 1.0).abs() < 1e-12);
        assert!(fit_poisson_constant(&kernels[1..], 0.0).is_err());
    }
}
