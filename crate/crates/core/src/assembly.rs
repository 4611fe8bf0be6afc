//! P1 assembly of the magnetic sesquilinear form
//!
//! ```text
//! a(u, v) = sum_kl ∫ c_kl (D_l u) conj(D_k v) + sum_k ∫ b_k (D_k u) conj(v) + c_k u conj(D_k v) + ∫ a0 u conj(v)
//! ```
//!
//! with `D_k = ∂_k - i a_k`. Matrices follow `a(u, v) = v^H A u`, so
//! `A[i][j] = a(φ_j, φ_i)`. Coefficients are frozen at triangle centroids and
//! every integral of P1 functions is exact.

use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::coeff::{CoefficientSet, ElementCoefficients};
use crate::linalg::{self, BandLu, CVector, CsrMatrix};
use crate::mesh::Mesh;
use crate::{Complex64, Error, Result};

/// Largest dimension accepted by the dense JSON export.
pub const DENSE_EXPORT_LIMIT: usize = 5000;

/// Accretivity tolerance on the smallest Hermitian eigenvalue.
pub const ACCRETIVE_TOL: f64 = 1e-12;

/// Seed of the fixed sample used by the j-ellipticity search. The sample is
/// this many Gaussian vectors, the canonical basis and the constant vector.
pub const ELLIPTICITY_SEED: u64 = 0x6a65_6c6c;
pub const ELLIPTICITY_SAMPLES: usize = 256;

/// The assembled form with its lumped masses and index partition.
#[derive(Debug)]
pub struct FormMatrices {
    a: CsrMatrix,
    mass: Vec<f64>,
    boundary_mass: Vec<f64>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    /// Gram matrix of the discrete H¹ norm, `K + M`.
    h1_gram: CsrMatrix,
    mesh: Option<Arc<Mesh>>,
    coefficients: Option<Arc<CoefficientSet>>,
    interior_lu: OnceLock<std::result::Result<BandLu, (usize, f64)>>,
}

/// `(i, j, value)` contributions of one triangle to A and to the H¹ Gram matrix.
struct ElementMatrix {
    nodes: [usize; 3],
    a: [[Complex64; 3]; 3],
    stiffness: [[f64; 3]; 3],
}

fn element_matrix(mesh: &Mesh, t: usize, e: &ElementCoefficients) -> ElementMatrix {
    let nodes = mesh.triangles()[t];
    let [p0, p1, p2] = nodes.map(|v| mesh.vertices()[v]);
    let area = mesh.triangle_area(t);
    let twice = 2.0 * area;
    let grads = [
        [(p1[1] - p2[1]) / twice, (p2[0] - p1[0]) / twice],
        [(p2[1] - p0[1]) / twice, (p0[0] - p2[0]) / twice],
        [(p0[1] - p1[1]) / twice, (p1[0] - p0[0]) / twice],
    ];
    let i_unit = Complex64::new(0.0, 1.0);
    let third = area / 3.0;
    let av = e.avec;

    let mut a = [[Complex64::new(0.0, 0.0); 3]; 3];
    let mut stiffness = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let gi = grads[i];
            let gj = grads[j];
            let mass = area * if i == j { 2.0 } else { 1.0 } / 12.0;
            let mut v = Complex64::new(0.0, 0.0);
            for k in 0..2 {
                for l in 0..2 {
                    let ckl = e.c_matrix[k][l];
                    let term = area * gj[l] * gi[k]
                        + i_unit * (av[k] * gj[l] * third - av[l] * gi[k] * third)
                        + av[l] * av[k] * mass;
                    v += ckl * term;
                }
                v += e.b[k] * (gj[k] * third - i_unit * av[k] * mass);
                v += e.c[k] * (gi[k] * third + i_unit * av[k] * mass);
            }
            v += e.a0 * mass;
            a[i][j] = v;
            stiffness[i][j] = area * (gi[0] * gj[0] + gi[1] * gj[1]);
        }
    }
    ElementMatrix { nodes, a, stiffness }
}

/// Assembles `A`, the lumped masses and the index partition.
pub fn assemble(mesh: Arc<Mesh>, coefficients: Arc<CoefficientSet>) -> Result<FormMatrices> {
    if coefficients.len() != mesh.triangles().len() {
        return Err(Error::Mismatch(format!(
            "{} coefficient elements for {} triangles",
            coefficients.len(),
            mesh.triangles().len()
        )));
    }
    let elements: Vec<ElementMatrix> = (0..mesh.triangles().len())
        .into_par_iter()
        .map(|t| element_matrix(&mesh, t, &coefficients.elements()[t]))
        .collect();

    let n = mesh.num_vertices();
    let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
    let mut gram: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
    let mut mass = vec![0.0; n];
    for (t, el) in elements.iter().enumerate() {
        let lumped = mesh.triangle_area(t) / 3.0;
        for (i, &gi) in el.nodes.iter().enumerate() {
            mass[gi] += lumped;
            for (j, &gj) in el.nodes.iter().enumerate() {
                rows[gi].push((gj, el.a[i][j]));
                gram[gi].push((gj, Complex64::new(el.stiffness[i][j], 0.0)));
            }
        }
    }
    for (i, m) in mass.iter().enumerate() {
        gram[i].push((i, Complex64::new(*m, 0.0)));
    }

    let boundary = mesh.boundary_nodes().to_vec();
    let mut position = vec![usize::MAX; n];
    for (k, &b) in boundary.iter().enumerate() {
        position[b] = k;
    }
    let mut boundary_mass = vec![0.0; boundary.len()];
    for &[p, q] in mesh.boundary_edges() {
        let [a, b] = [mesh.vertices()[p], mesh.vertices()[q]];
        let half = 0.5 * (a[0] - b[0]).hypot(a[1] - b[1]);
        boundary_mass[position[p]] += half;
        boundary_mass[position[q]] += half;
    }

    Ok(FormMatrices {
        a: CsrMatrix::from_rows(n, rows),
        mass,
        boundary_mass,
        interior: mesh.interior_nodes().to_vec(),
        boundary,
        h1_gram: CsrMatrix::from_rows(n, gram),
        mesh: Some(mesh),
        coefficients: Some(coefficients),
        interior_lu: OnceLock::new(),
    })
}

/// Builds a mesh, compiles the coefficients on it and assembles.
pub fn assemble_config(mesh: Arc<Mesh>, config: &crate::coeff::CoefficientConfig) -> Result<FormMatrices> {
    let cs = crate::coeff::build_coefficients(config, &mesh)?;
    assemble(mesh, Arc::new(cs))
}

impl FormMatrices {
    /// Form matrices without a mesh, for small algebraic examples. The H¹
    /// Gram matrix is taken to be the mass matrix.
    pub fn from_parts(
        a: CsrMatrix,
        mass: Vec<f64>,
        boundary_mass: Vec<f64>,
        interior: Vec<usize>,
        boundary: Vec<usize>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidArgument("form matrix must be square".into()));
        }
        if mass.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: mass.len(),
            });
        }
        if boundary_mass.len() != boundary.len() {
            return Err(Error::LengthMismatch {
                expected: boundary.len(),
                got: boundary_mass.len(),
            });
        }
        let mut seen = vec![false; n];
        for &i in interior.iter().chain(&boundary) {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!("index {i} repeated or out of range")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument(
                "interior and boundary indices do not cover all nodes".into(),
            ));
        }
        if mass.iter().chain(&boundary_mass).any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidArgument("masses must be positive".into()));
        }
        let gram = (0..n).map(|i| vec![(i, Complex64::new(mass[i], 0.0))]).collect();
        Ok(Self {
            a,
            mass,
            boundary_mass,
            interior,
            boundary,
            h1_gram: CsrMatrix::from_rows(n, gram),
            mesh: None,
            coefficients: None,
            interior_lu: OnceLock::new(),
        })
    }

    pub fn a(&self) -> &CsrMatrix {
        &self.a
    }

    /// Lumped domain mass, indexed by node.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Lumped boundary mass, indexed by position in [`Self::boundary`].
    pub fn boundary_mass(&self) -> &[f64] {
        &self.boundary_mass
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn h1_gram(&self) -> &CsrMatrix {
        &self.h1_gram
    }

    pub fn mesh(&self) -> Option<&Arc<Mesh>> {
        self.mesh.as_ref()
    }

    pub fn coefficients(&self) -> Option<&Arc<CoefficientSet>> {
        self.coefficients.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Mesh size, `NaN` without a mesh.
    pub fn h(&self) -> f64 {
        self.mesh.as_ref().map_or(f64::NAN, |m| m.h())
    }

    /// `a(u, v) = v^H A u`.
    pub fn form(&self, u: &CVector, v: &CVector) -> Complex64 {
        self.a.form(u, v)
    }

    pub fn hermitian_defect(&self) -> f64 {
        self.a.hermitian_defect()
    }

    pub fn interior_block(&self) -> CsrMatrix {
        self.a.sub_matrix(&self.interior, &self.interior)
    }

    /// Cached LU factorization of `A_II`.
    pub fn interior_lu(&self) -> Result<&BandLu> {
        self.interior_lu
            .get_or_init(|| {
                BandLu::factor(&self.interior_block()).map_err(|e| match e {
                    Error::SingularDirichlet { row, pivot } => (row, pivot),
                    _ => (0, 0.0),
                })
            })
            .as_ref()
            .map_err(|&(row, pivot)| Error::SingularDirichlet { row, pivot })
    }

    /// Boundary values of a nodal vector, in boundary order.
    pub fn restrict_boundary(&self, u: &CVector) -> CVector {
        CVector::from_iterator(self.boundary.len(), self.boundary.iter().map(|&i| u[i]))
    }

    /// `{"A": {"re": [[..]], "im": [[..]]}, "M": [..], "MGamma": [..], "interior": [..], "boundary": [..]}`
    pub fn to_json(&self) -> Result<serde_json::Value> {
        let n = self.dim();
        if n > DENSE_EXPORT_LIMIT {
            return Err(Error::Refused(format!(
                "dense export limited to n <= {DENSE_EXPORT_LIMIT}, got {n}"
            )));
        }
        let dense = self.a.to_dense();
        let part = |f: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
            (0..n).map(|i| (0..n).map(|j| f(&dense[(i, j)])).collect()).collect()
        };
        Ok(serde_json::json!({
            "A": { "re": part(|z| z.re), "im": part(|z| z.im) },
            "M": self.mass,
            "MGamma": self.boundary_mass,
            "interior": self.interior,
            "boundary": self.boundary,
        }))
    }
}

/// Smallest `λ` with `½(A_II + A_II^H) x = λ M_II x`.
///
/// Requires `a0 = 0`, no magnetic potential and real `C`.
pub fn dirichlet_ground_eigenvalue(fm: &FormMatrices) -> Result<f64> {
    if let Some(cs) = fm.coefficients() {
        if !cs.flags().is_c_real {
            return Err(Error::Hypothesis("C must be real".into()));
        }
        if cs.flags().has_field {
            return Err(Error::Hypothesis("magnetic potential must vanish".into()));
        }
        if cs.elements().iter().any(|e| e.a0 != Complex64::new(0.0, 0.0)) {
            return Err(Error::Hypothesis("a0 must vanish".into()));
        }
    }
    if fm.interior.is_empty() {
        return Err(Error::EmptyInterior);
    }
    let h = fm.interior_block().hermitian_part();
    let m: Vec<f64> = fm.interior.iter().map(|&i| fm.mass[i]).collect();
    Ok(linalg::smallest_pencil_eigenvalue(&h, &m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccretivityReport {
    /// Smallest eigenvalue of `½(A + A^H)`.
    pub min_hermitian_eig: f64,
    /// Smallest eigenvalue of `½(A_II + A_II^H)`; `NaN` without interior nodes.
    pub min_interior_hermitian_eig: f64,
    /// Discrete j-ellipticity: `Re v^H A v + ω‖v_B‖² ≥ μ‖v‖²_H¹` on the sample.
    pub j_ellipticity_mu: f64,
    pub omega: f64,
}

impl AccretivityReport {
    pub fn accretive(&self) -> bool {
        self.min_hermitian_eig >= -ACCRETIVE_TOL
    }

    pub fn accretive_on_kernel(&self) -> bool {
        self.min_interior_hermitian_eig >= -ACCRETIVE_TOL
    }
}

/// The ω grid of the j-ellipticity search: 0 and powers of two.
fn omega_grid() -> impl Iterator<Item = f64> {
    std::iter::once(0.0).chain((-10..=40).map(|k| 2f64.powi(k)))
}

pub fn accretivity_report(fm: &FormMatrices) -> AccretivityReport {
    let n = fm.dim();
    let herm = fm.a.hermitian_part();
    let min_hermitian_eig = linalg::smallest_pencil_eigenvalue(&herm, &vec![1.0; n]);
    let min_interior_hermitian_eig = if fm.interior.is_empty() {
        f64::NAN
    } else {
        let h = herm.sub_matrix(&fm.interior, &fm.interior);
        linalg::smallest_pencil_eigenvalue(&h, &vec![1.0; fm.interior.len()])
    };

    // (Re v^H A v, ‖v_B‖²_MΓ, ‖v‖²_H¹) per sample.
    let mut boundary_weight = vec![0.0; n];
    for (k, &b) in fm.boundary.iter().enumerate() {
        boundary_weight[b] = fm.boundary_mass[k];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ELLIPTICITY_SEED);
    let mut triples: Vec<(f64, f64, f64)> = (0..ELLIPTICITY_SAMPLES)
        .map(|_| {
            let v = CVector::from_fn(n, |_, _| {
                Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
            });
            let q = fm.a.form(&v, &v).re;
            let b: f64 = (0..n).map(|i| boundary_weight[i] * v[i].norm_sqr()).sum();
            let h = fm.h1_gram.form(&v, &v).re;
            (q, b, h)
        })
        .collect();
    triples.extend((0..n).map(|i| (fm.a.get(i, i).re, boundary_weight[i], fm.h1_gram.get(i, i).re)));
    // Random vectors are nearly orthogonal to constants, the usual worst direction.
    let ones = CVector::from_element(n, Complex64::new(1.0, 0.0));
    triples.push((
        fm.a.form(&ones, &ones).re,
        boundary_weight.iter().sum(),
        fm.h1_gram.form(&ones, &ones).re,
    ));

    let mu_at = |omega: f64| {
        triples
            .iter()
            .map(|&(q, b, h)| (q + omega * b) / h)
            .fold(f64::INFINITY, f64::min)
    };
    let mut best = (f64::NEG_INFINITY, 0.0);
    for omega in omega_grid() {
        let mu = mu_at(omega);
        if mu > best.0 {
            best = (mu, omega);
        }
        if mu > 0.0 {
            break;
        }
    }
    AccretivityReport {
        min_hermitian_eig,
        min_interior_hermitian_eig,
        j_ellipticity_mu: best.0,
        omega: best.1,
    }
}
