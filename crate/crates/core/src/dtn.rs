//! Discrete Dirichlet-to-Neumann operator.
//!
//! With the node set split into interior `I` and boundary `B`, the
//! A-harmonic lifting of `φ` solves `A_II u_I + A_IB φ = 0`, and the form
//! `b(φ, ξ) = a(lift φ, lift ξ) = ξ^H B φ` has matrix the Schur complement
//! `B = A_BB - A_BI A_II⁻¹ A_IB`. The generator on `L₂(Γ)` is `G = MΓ⁻¹ B`.

use std::sync::Arc;

use serde::Serialize;

use crate::assembly::FormMatrices;
use crate::linalg::{self, CMatrix, CVector};
use crate::mesh::Point;
use crate::{Complex64, Error, Result};

/// Relative asymmetry of `B` tolerated by the Hermitian spectral path.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct DtnOperator {
    b: CMatrix,
    boundary_mass: Vec<f64>,
    generator: CMatrix,
    boundary_coords: Vec<Point>,
    form: Arc<FormMatrices>,
}

impl DtnOperator {
    /// Schur complement `B`.
    pub fn b(&self) -> &CMatrix {
        &self.b
    }

    pub fn boundary_mass(&self) -> &[f64] {
        &self.boundary_mass
    }

    /// `G = MΓ⁻¹ B`.
    pub fn generator(&self) -> &CMatrix {
        &self.generator
    }

    /// Boundary node positions; empty for operators built without a mesh.
    pub fn boundary_coords(&self) -> &[Point] {
        &self.boundary_coords
    }

    pub fn form(&self) -> &Arc<FormMatrices> {
        &self.form
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn h(&self) -> f64 {
        self.form.h()
    }

    /// `ξ^H B φ`.
    pub fn form_value(&self, phi: &CVector, xi: &CVector) -> Complex64 {
        xi.dotc(&(&self.b * phi))
    }

    /// `max |B_ij - conj(B_ji)| / max |B_ij|`.
    pub fn relative_asymmetry(&self) -> f64 {
        let scale = linalg::max_abs(&self.b);
        if scale == 0.0 {
            0.0
        } else {
            linalg::hermitian_defect(&self.b) / scale
        }
    }
}

/// The A-harmonic lifting of boundary data `phi`.
pub fn harmonic_lift(fm: &FormMatrices, phi: &CVector) -> Result<CVector> {
    let nb = fm.boundary().len();
    if phi.len() != nb {
        return Err(Error::LengthMismatch {
            expected: nb,
            got: phi.len(),
        });
    }
    let mut u = CVector::zeros(fm.dim());
    for (k, &b) in fm.boundary().iter().enumerate() {
        u[b] = phi[k];
    }
    if fm.interior().is_empty() {
        return Ok(u);
    }
    let a = fm.a();
    let mut rhs: Vec<Complex64> = fm
        .interior()
        .iter()
        .map(|&i| -a.row(i).map(|(j, v)| v * u[j]).sum::<Complex64>())
        .collect();
    fm.interior_lu()?.solve_in_place(&mut rhs);
    for (k, &i) in fm.interior().iter().enumerate() {
        u[i] = rhs[k];
    }
    Ok(u)
}

/// `A_II⁻¹ A_IB`, the negated interior part of the lifting of each boundary basis vector.
fn interior_response(fm: &FormMatrices) -> Result<CMatrix> {
    let a_ib = fm.a().block(fm.interior(), fm.boundary());
    Ok(fm.interior_lu()?.solve_matrix(&a_ib))
}

pub fn build_dtn(fm: &Arc<FormMatrices>) -> Result<DtnOperator> {
    let nb = fm.boundary().len();
    let mut b = fm.a().block(fm.boundary(), fm.boundary());
    if !fm.interior().is_empty() {
        let x = interior_response(fm)?;
        let a_bi = fm.a().sub_matrix(fm.boundary(), fm.interior());
        for r in 0..nb {
            for (k, v) in a_bi.row(r) {
                for c in 0..nb {
                    b[(r, c)] -= v * x[(k, c)];
                }
            }
        }
    }
    let mg = fm.boundary_mass().to_vec();
    let generator = CMatrix::from_fn(nb, nb, |i, j| b[(i, j)] / mg[i]);
    let boundary_coords = fm
        .mesh()
        .map(|m| fm.boundary().iter().map(|&i| m.vertices()[i]).collect())
        .unwrap_or_default();
    Ok(DtnOperator {
        b,
        boundary_mass: mg,
        generator,
        boundary_coords,
        form: fm.clone(),
    })
}

/// Interior rows of `A u - M f` must vanish to this multiple of `‖A‖_max ‖u‖_∞`.
pub const WEAK_SOLUTION_TOL: f64 = 1e-8;

/// Weak conormal derivative `ψ = MΓ⁻¹ (A u - M f)_B`.
pub fn weak_conormal(fm: &FormMatrices, u: &CVector, f: &CVector) -> Result<CVector> {
    let n = fm.dim();
    for v in [u, f] {
        if v.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: v.len(),
            });
        }
    }
    let mut r = fm.a().mul_vec(u);
    for i in 0..n {
        r[i] -= f[i] * fm.mass()[i];
    }
    let residual = fm.interior().iter().map(|&i| r[i].norm()).fold(0.0, f64::max);
    let tolerance = WEAK_SOLUTION_TOL * fm.a().max_abs() * linalg::max_abs_vec(u);
    if residual > tolerance {
        return Err(Error::NotWeakSolution { residual, tolerance });
    }
    Ok(CVector::from_iterator(
        fm.boundary().len(),
        fm.boundary().iter().zip(fm.boundary_mass()).map(|(&b, &m)| r[b] / m),
    ))
}

/// Eigenpairs of `B x = λ MΓ x`, ascending, with `Φ^H MΓ Φ = I`.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl Eigensystem {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

fn hermitian_scaled(op: &DtnOperator) -> Result<(CMatrix, Vec<f64>)> {
    let asym = op.relative_asymmetry();
    if asym > HERMITIAN_TOL {
        return Err(Error::NotHermitian(asym));
    }
    let n = op.dim();
    let s: Vec<f64> = op.boundary_mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let b = &op.b;
    let h = CMatrix::from_fn(n, n, |i, j| 0.5 * (b[(i, j)] + b[(j, i)].conj()) * (s[i] * s[j]));
    Ok((h, s))
}

/// The first `count` eigenpairs of the Hermitian pencil `(B, MΓ)`.
pub fn spectrum(op: &DtnOperator, count: usize) -> Result<Eigensystem> {
    let n = op.dim();
    if count == 0 || count > n {
        return Err(Error::InvalidArgument(format!(
            "eigenpair count must be in 1..={n}, got {count}"
        )));
    }
    let (h, s) = hermitian_scaled(op)?;
    let (values, vectors) = linalg::hermitian_eigen(&h);
    let eigenvectors = CMatrix::from_fn(n, count, |i, k| vectors[(i, k)] * s[i]);
    Ok(Eigensystem {
        eigenvalues: values[..count].to_vec(),
        eigenvectors,
    })
}

/// All eigenvalues of the Hermitian pencil `(B, MΓ)`, ascending.
pub fn eigenvalues(op: &DtnOperator) -> Result<Vec<f64>> {
    let (h, _) = hermitian_scaled(op)?;
    Ok(linalg::hermitian_eigenvalues(&h))
}

#[derive(Debug, Serialize)]
struct SpectrumDocument<'a> {
    eigenvalues: &'a [f64],
    mesh_h: f64,
    config_hash: &'a str,
}

/// `{"eigenvalues": [...], "mesh_h": ..., "config_hash": ...}`
pub fn spectrum_json(es: &Eigensystem, mesh_h: f64, config_hash: &str) -> serde_json::Value {
    serde_json::to_value(SpectrumDocument {
        eigenvalues: &es.eigenvalues,
        mesh_h,
        config_hash,
    })
    .expect("spectrum document serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_config;
    use crate::coeff::{CoefficientConfig, ScalarEntry};
    use crate::linalg::CsrMatrix;
    use crate::mesh::{build_disk, build_square};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn fm_square(n: usize, config: &CoefficientConfig) -> Arc<FormMatrices> {
        Arc::new(assemble_config(Arc::new(build_square(n).unwrap()), config).unwrap())
    }

    fn toy() -> Arc<FormMatrices> {
        let a = CsrMatrix::from_rows(2, vec![vec![(0, c(2.0)), (1, c(1.0))], vec![(0, c(1.0)), (1, c(2.0))]]);
        Arc::new(FormMatrices::from_parts(a, vec![1.0, 1.0], vec![1.0], vec![1], vec![0]).unwrap())
    }

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> CVector {
        CVector::from_fn(n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn toy_lift_and_schur() {
        let fm = toy();
        let u = harmonic_lift(&fm, &CVector::from_element(1, c(1.0))).unwrap();
        assert_eq!(u.as_slice(), &[c(1.0), c(-0.5)]);
        let op = build_dtn(&fm).unwrap();
        assert_eq!(op.b()[(0, 0)], c(1.5));
    }

    #[test]
    fn lift_reproduces_harmonic_functions() {
        let fm = fm_square(6, &CoefficientConfig::laplacian());
        let mesh = fm.mesh().unwrap().clone();
        let ones = CVector::from_element(fm.boundary().len(), c(1.0));
        let u = harmonic_lift(&fm, &ones).unwrap();
        assert!(u.iter().all(|z| (z - c(1.0)).norm() < 1e-13));
        let phi = CVector::from_iterator(
            fm.boundary().len(),
            fm.boundary().iter().map(|&b| c(mesh.vertices()[b][0])),
        );
        let u = harmonic_lift(&fm, &phi).unwrap();
        for (i, p) in mesh.vertices().iter().enumerate() {
            assert!((u[i] - c(p[0])).norm() < 1e-13);
        }
    }

    #[test]
    fn lift_rejects_wrong_length() {
        let fm = toy();
        assert!(matches!(
            harmonic_lift(&fm, &CVector::zeros(2)),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn singular_interior_detected() {
        let a = CsrMatrix::from_rows(2, vec![vec![(0, c(1.0))], vec![]]);
        let fm = Arc::new(FormMatrices::from_parts(a, vec![1.0, 1.0], vec![1.0], vec![1], vec![0]).unwrap());
        assert!(matches!(build_dtn(&fm), Err(Error::SingularDirichlet { .. })));
    }

    #[test]
    fn constants_in_kernel() {
        let fm = fm_square(8, &CoefficientConfig::laplacian());
        let op = build_dtn(&fm).unwrap();
        let ones = CVector::from_element(op.dim(), c(1.0));
        assert!(linalg::max_abs_vec(&(op.b() * &ones)) < 1e-12);
        let es = spectrum(&op, 3).unwrap();
        assert!(es.eigenvalues[0].abs() < 1e-12);
        let v = es.eigenvectors.column(0);
        assert!(v.iter().all(|z| (z.norm() - v[0].norm()).abs() < 1e-10));
    }

    #[test]
    fn schur_form_equals_lifted_form() {
        let config = CoefficientConfig::laplacian()
            .with_avec("y", "-x")
            .with_b([ScalarEntry::complex(0.3, 0.1), "x".into()])
            .with_a0(ScalarEntry::complex(0.5, -0.2));
        let fm = fm_square(6, &config);
        let op = build_dtn(&fm).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let phi = random_vec(op.dim(), &mut rng);
            let xi = random_vec(op.dim(), &mut rng);
            let lhs = op.form_value(&phi, &xi);
            let rhs = fm.form(&harmonic_lift(&fm, &phi).unwrap(), &harmonic_lift(&fm, &xi).unwrap());
            assert!((lhs - rhs).norm() <= 1e-10 * rhs.norm().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn schur_residual() {
        let fm = fm_square(5, &CoefficientConfig::laplacian().with_avec("x*y", 1.0));
        let op = build_dtn(&fm).unwrap();
        let a = fm.a().to_dense();
        let pick = |r: &[usize], cols: &[usize]| CMatrix::from_fn(r.len(), cols.len(), |i, j| a[(r[i], cols[j])]);
        let (ii, bb) = (fm.interior(), fm.boundary());
        let direct = pick(bb, bb) - pick(bb, ii) * pick(ii, ii).lu().solve(&pick(ii, bb)).unwrap();
        assert!(linalg::max_abs(&(&direct - op.b())) <= 1e-10 * linalg::max_abs(op.b()));
        assert!(op.relative_asymmetry() < 1e-12);
    }

    #[test]
    fn conormal_of_lift_is_generator() {
        let fm = fm_square(6, &CoefficientConfig::laplacian().with_avec("y", 0.0).with_a0(0.5));
        let op = build_dtn(&fm).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let phi = random_vec(op.dim(), &mut rng);
        let u = harmonic_lift(&fm, &phi).unwrap();
        let psi = weak_conormal(&fm, &u, &CVector::zeros(fm.dim())).unwrap();
        let g_phi = op.generator() * &phi;
        assert!(linalg::max_abs_vec(&(psi - &g_phi)) <= 1e-10 * linalg::max_abs_vec(&g_phi));
    }

    #[test]
    fn conormal_of_x_on_square() {
        let n = 5;
        let fm = fm_square(n, &CoefficientConfig::laplacian());
        let mesh = fm.mesh().unwrap().clone();
        let u = CVector::from_iterator(mesh.num_vertices(), mesh.vertices().iter().map(|p| c(p[0])));
        let psi = weak_conormal(&fm, &u, &CVector::zeros(fm.dim())).unwrap();
        for (k, &b) in fm.boundary().iter().enumerate() {
            let [x, y] = mesh.vertices()[b];
            let corner = (x == 0.0 || x == 1.0) && (y == 0.0 || y == 1.0);
            let expect = if corner {
                if x == 0.0 {
                    -0.5
                } else {
                    0.5
                }
            } else if x == 0.0 {
                -1.0
            } else if x == 1.0 {
                1.0
            } else {
                0.0
            };
            assert!(
                (psi[k] - c(expect)).norm() < 1e-12,
                "node {b} at ({x}, {y}): {}",
                psi[k]
            );
        }
        let ones = CVector::from_element(fm.dim(), c(1.0));
        let psi = weak_conormal(&fm, &ones, &CVector::zeros(fm.dim())).unwrap();
        assert!(linalg::max_abs_vec(&psi) < 1e-12);
    }

    #[test]
    fn conormal_rejects_non_solutions() {
        let fm = fm_square(4, &CoefficientConfig::laplacian());
        let mesh = fm.mesh().unwrap().clone();
        let u = CVector::from_iterator(mesh.num_vertices(), mesh.vertices().iter().map(|p| c(p[0] * p[0])));
        assert!(matches!(
            weak_conormal(&fm, &u, &CVector::zeros(fm.dim())),
            Err(Error::NotWeakSolution { .. })
        ));
        // On the uniform mesh the interpolant of x² satisfies the lumped equation -Δu = -2.
        let f = CVector::from_element(fm.dim(), c(-2.0));
        assert!(weak_conormal(&fm, &u, &f).is_ok());
    }

    #[test]
    fn disk_steklov_spectrum() {
        let fm =
            Arc::new(assemble_config(Arc::new(build_disk(128, 16).unwrap()), &CoefficientConfig::laplacian()).unwrap());
        let op = build_dtn(&fm).unwrap();
        let es = spectrum(&op, 6).unwrap();
        let expect = [0.0, 1.0, 1.0, 2.0, 2.0, 3.0];
        assert!(es.eigenvalues[0].abs() < 1e-10);
        for k in 1..6 {
            assert!(
                (es.eigenvalues[k] / expect[k] - 1.0).abs() < 0.02,
                "{:?}",
                es.eigenvalues
            );
        }
        // residual and MΓ-orthonormality
        let mg = CMatrix::from_diagonal(&CVector::from_iterator(
            op.dim(),
            op.boundary_mass().iter().map(|&m| c(m)),
        ));
        let phi = &es.eigenvectors;
        let lam = CMatrix::from_diagonal(&CVector::from_iterator(6, es.eigenvalues.iter().map(|&l| c(l))));
        let res = op.b() * phi - &mg * phi * lam;
        assert!(linalg::max_abs(&res) <= 1e-8 * linalg::max_abs(op.b()));
        assert!(linalg::max_abs(&(phi.adjoint() * &mg * phi - linalg::identity(6))) <= 1e-10);
        // M-matrix transfer on a non-obtuse mesh
        for i in 0..op.dim() {
            for j in 0..op.dim() {
                if i != j {
                    assert!(op.b()[(i, j)].re <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn nonnegative_spectrum_with_nonnegative_potential() {
        let fm = fm_square(6, &CoefficientConfig::laplacian().with_a0("x + y"));
        let ev = eigenvalues(&build_dtn(&fm).unwrap()).unwrap();
        assert!(ev[0] >= -1e-10);
        assert!(ev.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn non_hermitian_refused() {
        let fm = fm_square(4, &CoefficientConfig::laplacian().with_b([1.0.into(), 0.0.into()]));
        let op = build_dtn(&fm).unwrap();
        assert!(matches!(spectrum(&op, 2), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn spectrum_count_bounds() {
        let op = build_dtn(&fm_square(2, &CoefficientConfig::laplacian())).unwrap();
        assert!(spectrum(&op, 0).is_err());
        assert!(spectrum(&op, 9).is_err());
        let es = spectrum(&op, 8).unwrap();
        let v = spectrum_json(&es, 0.5, "abc");
        assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 8);
        assert_eq!(v["config_hash"], "abc");
    }
}
