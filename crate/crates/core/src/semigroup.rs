//! The semigroups `e^{-tG}` of the boundary generator `MΓ⁻¹B` and the domain
//! generator `M⁻¹A`, and their kernels with respect to the weight.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::assembly::FormMatrices;
use crate::coeff::CoefficientFlags;
use crate::dtn::{DtnOperator, Eigensystem};
use crate::linalg::{self, CMatrix, CVector};
use crate::mesh::Point;
use crate::{Complex64, Error, Result};

/// `W^{1/2} G W^{-1/2}` counts as Hermitian below this defect, relative to
/// `max(1, ‖W^{1/2} G W^{-1/2}‖_max)`.
pub const HERMITIAN_MODE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    HermitianEigen,
    ExpmFallback,
}

/// Which space the generator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Boundary,
    Domain,
    Abstract,
}

#[derive(Debug)]
enum Factorization {
    /// Eigenvalues and unitary eigenvectors of `W^{1/2} G W^{-1/2}`.
    Eigen {
        values: Vec<f64>,
        vectors: CMatrix,
    },
    Expm {
        cache: Mutex<HashMap<u64, Arc<CMatrix>>>,
    },
}

/// Mesh and coefficient facts the inequality suites check before running.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Provenance {
    pub non_obtuse: bool,
    pub max_angle: f64,
    pub flags: CoefficientFlags,
}

impl Provenance {
    pub fn of(fm: &FormMatrices) -> Option<Self> {
        let mesh = fm.mesh()?;
        let cs = fm.coefficients()?;
        let q = mesh.quality();
        Some(Self {
            non_obtuse: q.non_obtuse,
            max_angle: q.max_angle,
            flags: *cs.flags(),
        })
    }
}

#[derive(Debug)]
pub struct SemigroupAction {
    generator: CMatrix,
    weight: Vec<f64>,
    factorization: Factorization,
    space: Space,
    coords: Vec<Point>,
    h: f64,
    provenance: Option<Provenance>,
}

/// Picks the evaluation mode from the weighted Hermiticity of `g`.
pub fn make_action(g: CMatrix, weight: Vec<f64>) -> Result<SemigroupAction> {
    let n = g.nrows();
    if g.ncols() != n {
        return Err(Error::InvalidArgument("generator must be square".into()));
    }
    if weight.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: weight.len(),
        });
    }
    if weight.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument("weight must be positive".into()));
    }
    let root: Vec<f64> = weight.iter().map(|w| w.sqrt()).collect();
    let s = CMatrix::from_fn(n, n, |i, j| g[(i, j)] * (root[i] / root[j]));
    let defect = linalg::hermitian_defect(&s);
    let factorization = if defect <= HERMITIAN_MODE_TOL * linalg::max_abs(&s).max(1.0) {
        let herm = CMatrix::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)].conj()));
        let (values, vectors) = linalg::hermitian_eigen(&herm);
        Factorization::Eigen { values, vectors }
    } else {
        Factorization::Expm {
            cache: Mutex::new(HashMap::new()),
        }
    };
    Ok(SemigroupAction {
        generator: g,
        weight,
        factorization,
        space: Space::Abstract,
        coords: Vec::new(),
        h: f64::NAN,
        provenance: None,
    })
}

impl SemigroupAction {
    /// The semigroup generated by `-MΓ⁻¹B` on `L₂(Γ)`.
    pub fn boundary(op: &DtnOperator) -> Result<Self> {
        let mut sa = make_action(op.generator().clone(), op.boundary_mass().to_vec())?;
        sa.space = Space::Boundary;
        sa.coords = op.boundary_coords().to_vec();
        sa.h = op.h();
        sa.provenance = Provenance::of(op.form());
        Ok(sa)
    }

    /// The semigroup generated by `-M⁻¹A` on `L₂(Ω)` (Neumann conditions).
    pub fn domain(fm: &FormMatrices) -> Result<Self> {
        let n = fm.dim();
        let a = fm.a();
        let mut g = CMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in a.row(i) {
                g[(i, j)] = v / fm.mass()[i];
            }
        }
        let mut sa = make_action(g, fm.mass().to_vec())?;
        sa.space = Space::Domain;
        sa.coords = fm.mesh().map(|m| m.vertices().to_vec()).unwrap_or_default();
        sa.h = fm.h();
        sa.provenance = Provenance::of(fm);
        Ok(sa)
    }

    pub fn mode(&self) -> Mode {
        match self.factorization {
            Factorization::Eigen { .. } => Mode::HermitianEigen,
            Factorization::Expm { .. } => Mode::ExpmFallback,
        }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.generator.nrows()
    }

    pub fn generator(&self) -> &CMatrix {
        &self.generator
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    /// Eigenvalues of the generator in Hermitian mode.
    pub fn eigenvalues(&self) -> Option<&[f64]> {
        match &self.factorization {
            Factorization::Eigen { values, .. } => Some(values),
            Factorization::Expm { .. } => None,
        }
    }

    /// `‖v‖_W = (Σ W_i |v_i|²)^{1/2}`.
    pub fn weighted_norm(&self, v: &CVector) -> f64 {
        v.iter()
            .zip(&self.weight)
            .map(|(z, w)| w * z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    fn check_time(t: f64) -> Result<()> {
        if t >= 0.0 && t.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "time must be nonnegative and finite, got {t}"
            )))
        }
    }

    fn expm_propagator(&self, cache: &Mutex<HashMap<u64, Arc<CMatrix>>>, t: f64) -> Arc<CMatrix> {
        if let Some(p) = cache.lock().expect("propagator cache").get(&t.to_bits()) {
            return p.clone();
        }
        let p = Arc::new(linalg::expm(&(&self.generator * Complex64::new(-t, 0.0))));
        cache
            .lock()
            .expect("propagator cache")
            .entry(t.to_bits())
            .or_insert(p)
            .clone()
    }

    /// `e^{-tG} v`.
    pub fn apply(&self, t: f64, v: &CVector) -> Result<CVector> {
        Self::check_time(t)?;
        let n = self.dim();
        if v.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: v.len(),
            });
        }
        if t == 0.0 {
            return Ok(v.clone());
        }
        match &self.factorization {
            Factorization::Eigen { values, vectors } => {
                let y = CVector::from_fn(n, |i, _| v[i] * self.weight[i].sqrt());
                let mut z = vectors.ad_mul(&y);
                for (k, &l) in values.iter().enumerate() {
                    z[k] *= (-t * l).exp();
                }
                let y = vectors * z;
                Ok(CVector::from_fn(n, |i, _| y[i] / self.weight[i].sqrt()))
            }
            Factorization::Expm { cache } => Ok(&*self.expm_propagator(cache, t) * v),
        }
    }

    /// The matrix `e^{-tG}`.
    pub fn propagator(&self, t: f64) -> Result<CMatrix> {
        Self::check_time(t)?;
        let n = self.dim();
        if t == 0.0 {
            return Ok(linalg::identity(n));
        }
        match &self.factorization {
            Factorization::Eigen { values, vectors } => {
                let decay: Vec<f64> = values.iter().map(|&l| (-t * l).exp()).collect();
                let core = if vectors.iter().all(|z| z.im == 0.0) {
                    let u = vectors.map(|z| z.re);
                    let scaled = DMatrix::from_fn(n, n, |i, k| u[(i, k)] * decay[k]);
                    (scaled * u.transpose()).map(|v| Complex64::new(v, 0.0))
                } else {
                    // (Ur + i Ui) D (Ur + i Ui)^H through real products.
                    let ur = vectors.map(|z| z.re);
                    let ui = vectors.map(|z| z.im);
                    let dr = DMatrix::from_fn(n, n, |i, k| ur[(i, k)] * decay[k]);
                    let di = DMatrix::from_fn(n, n, |i, k| ui[(i, k)] * decay[k]);
                    let re = &dr * ur.transpose() + &di * ui.transpose();
                    let im = &di * ur.transpose() - &dr * ui.transpose();
                    CMatrix::from_fn(n, n, |i, j| Complex64::new(re[(i, j)], im[(i, j)]))
                };
                Ok(CMatrix::from_fn(n, n, |i, j| {
                    core[(i, j)] * (self.weight[j] / self.weight[i]).sqrt()
                }))
            }
            Factorization::Expm { cache } => Ok((*self.expm_propagator(cache, t)).clone()),
        }
    }

    /// `K(t) = e^{-tG} W⁻¹`, so that `(S(t)φ)_w = Σ_z K(t, w, z) W_z φ_z`.
    pub fn kernel(&self, t: f64) -> Result<KernelMatrix> {
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!("kernel time must be positive, got {t}")));
        }
        let p = self.propagator(t)?;
        let n = self.dim();
        let k = CMatrix::from_fn(n, n, |i, j| p[(i, j)] / self.weight[j]);
        Ok(KernelMatrix {
            t,
            k,
            coords: self.coords.clone(),
            h: self.h,
        })
    }
}

#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub t: f64,
    pub k: CMatrix,
    pub coords: Vec<Point>,
    pub h: f64,
}

impl KernelMatrix {
    pub fn is_real(&self) -> bool {
        self.k.iter().all(|z| z.im == 0.0)
    }

    pub fn min_real_entry(&self) -> f64 {
        self.k.iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_entry(&self) -> f64 {
        linalg::max_abs(&self.k)
    }

    /// Row-major CSV with a `# t=..,h=..,rows=..,cols=..,format=..` header;
    /// complex entries are written as interleaved `re,im` pairs.
    pub fn to_csv(&self) -> String {
        let real = self.is_real();
        let (rows, cols) = self.k.shape();
        let mut out = String::new();
        let format = if real { "real" } else { "complex" };
        writeln!(
            out,
            "# t={:?},h={:?},rows={rows},cols={cols},format={format}",
            self.t, self.h
        )
        .unwrap();
        for i in 0..rows {
            let mut line = Vec::with_capacity(if real { cols } else { 2 * cols });
            for j in 0..cols {
                let z = self.k[(i, j)];
                line.push(format!("{:?}", z.re));
                if !real {
                    line.push(format!("{:?}", z.im));
                }
            }
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// `Σ_k e^{-λ_k t}` over the computed eigenvalues.
pub fn trace_sum(es: &Eigensystem, t: f64) -> f64 {
    trace_sum_of(&es.eigenvalues, t)
}

pub fn trace_sum_of(eigenvalues: &[f64], t: f64) -> f64 {
    eigenvalues.iter().map(|l| (-l * t).exp()).sum()
}
