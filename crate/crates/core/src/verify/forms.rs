//! Form-level checks: the invariance criterion for closed convex sets, the
//! domination inequality for magnetic forms, and the pointwise quantity `Q`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::record::{CheckRecord, Worst};
use super::sampling::{Distribution, SampleSpec};
use crate::assembly::FormMatrices;
use crate::convex::{sgn, ConvexSetId};
use crate::dtn::DtnOperator;
use crate::linalg::{self, CMatrix, CVector, CsrMatrix};
use crate::{Complex64, Error, Result};

/// Pass tolerance of the invariance criterion, relative to `‖A‖_max ‖u‖²`.
pub const INVARIANCE_TOL: f64 = 1e-10;
/// Pass tolerance of the domination inequality, relative to `‖A₀‖_max ‖u‖ ‖v‖`.
pub const DOMINATION_TOL: f64 = 1e-6;
/// Lower bound accepted for sampled values of `Q`.
pub const Q_TOL: f64 = 1e-12;
/// Relative tolerance of the element-level `Q` identity.
pub const Q_IDENTITY_TOL: f64 = 1e-8;
/// Shift, relative to `max(1, ‖A‖_max)`, under which a Hermitian part counts
/// as positive semidefinite.
pub const PSD_SHIFT: f64 = 1e-10;

/// Where a form sits with respect to the hypotheses of the invariance criterion.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Regime {
    /// `Re a(u, u) ≥ 0` for all `u`.
    Accretive,
    /// Hermitian, and accretive on the kernel of the trace.
    KernelAccretiveSymmetric,
    Outside {
        reason: String,
    },
}

impl Regime {
    pub fn applies(&self) -> bool {
        !matches!(self, Regime::Outside { .. })
    }
}

/// A sesquilinear form on `C^n` with `eval(u, v) = a(u, v) = v^H A u`.
pub trait DiscreteForm: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, u: &CVector, v: &CVector) -> Complex64;
    /// `A_ij = a(e_j, e_i)`.
    fn entry(&self, i: usize, j: usize) -> Complex64;
    /// Index pairs `i != j` where `A_ij` may be nonzero.
    fn off_diagonal_support(&self) -> Vec<(usize, usize)>;
    /// `‖A‖_max`.
    fn scale(&self) -> f64;
    fn regime(&self) -> Regime;
    /// `Some((non_obtuse, max_angle))` for forms built on a mesh.
    fn mesh_angles(&self) -> Option<(bool, f64)> {
        None
    }
    fn mesh_h(&self) -> f64 {
        f64::NAN
    }
}

fn shifted(h: &CsrMatrix, delta: f64) -> CsrMatrix {
    let rows = (0..h.nrows())
        .map(|i| {
            let mut row: Vec<_> = h.row(i).collect();
            row.push((i, Complex64::new(delta, 0.0)));
            row
        })
        .collect();
    CsrMatrix::from_rows(h.ncols(), rows)
}

fn psd_sparse(h: &CsrMatrix) -> bool {
    is_pd_shifted(h, PSD_SHIFT * h.max_abs().max(1.0))
}

fn is_pd_shifted(h: &CsrMatrix, delta: f64) -> bool {
    linalg::is_positive_definite(&shifted(h, delta))
}

fn dense_regime(a: &CMatrix) -> Regime {
    let n = a.nrows();
    let herm = CMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)].conj()));
    let min = linalg::hermitian_eigenvalues(&herm).first().copied().unwrap_or(0.0);
    if min >= -PSD_SHIFT * linalg::max_abs(a).max(1.0) {
        Regime::Accretive
    } else {
        Regime::Outside {
            reason: format!("Hermitian part has eigenvalue {min:.3e} < 0"),
        }
    }
}

impl DiscreteForm for FormMatrices {
    fn dim(&self) -> usize {
        FormMatrices::dim(self)
    }

    fn eval(&self, u: &CVector, v: &CVector) -> Complex64 {
        self.form(u, v)
    }

    fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.a().get(i, j)
    }

    fn off_diagonal_support(&self) -> Vec<(usize, usize)> {
        let a = self.a();
        (0..a.nrows())
            .flat_map(|i| a.row(i).filter(move |&(j, _)| j != i).map(move |(j, _)| (i, j)))
            .collect()
    }

    fn scale(&self) -> f64 {
        self.a().max_abs()
    }

    fn regime(&self) -> Regime {
        let herm = self.a().hermitian_part();
        if psd_sparse(&herm) {
            return Regime::Accretive;
        }
        let symmetric = self.hermitian_defect() <= PSD_SHIFT * self.scale().max(1.0);
        let interior = self.interior();
        let kernel_pd = !interior.is_empty() && is_pd_shifted(&herm.sub_matrix(interior, interior), 0.0);
        match (symmetric, kernel_pd) {
            (true, true) => Regime::KernelAccretiveSymmetric,
            (false, true) => Regime::Outside {
                reason: "accretive only on the kernel of the trace and not Hermitian".into(),
            },
            _ => Regime::Outside {
                reason: "not accretive on the kernel of the trace".into(),
            },
        }
    }

    fn mesh_angles(&self) -> Option<(bool, f64)> {
        self.mesh().map(|m| {
            let q = m.quality();
            (q.non_obtuse, q.max_angle)
        })
    }

    fn mesh_h(&self) -> f64 {
        self.h()
    }
}

impl DiscreteForm for DtnOperator {
    fn dim(&self) -> usize {
        DtnOperator::dim(self)
    }

    fn eval(&self, u: &CVector, v: &CVector) -> Complex64 {
        self.form_value(u, v)
    }

    fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.b()[(i, j)]
    }

    fn off_diagonal_support(&self) -> Vec<(usize, usize)> {
        dense_support(self.dim())
    }

    fn scale(&self) -> f64 {
        linalg::max_abs(self.b())
    }

    fn regime(&self) -> Regime {
        dense_regime(self.b())
    }

    fn mesh_angles(&self) -> Option<(bool, f64)> {
        self.form().mesh_angles()
    }

    fn mesh_h(&self) -> f64 {
        self.h()
    }
}

fn dense_support(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect()
}

/// A form given by a dense matrix.
#[derive(Debug, Clone)]
pub struct DenseForm(pub CMatrix);

impl DiscreteForm for DenseForm {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn eval(&self, u: &CVector, v: &CVector) -> Complex64 {
        v.dotc(&(&self.0 * u))
    }

    fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    fn off_diagonal_support(&self) -> Vec<(usize, usize)> {
        dense_support(self.dim())
    }

    fn scale(&self) -> f64 {
        linalg::max_abs(&self.0)
    }

    fn regime(&self) -> Regime {
        dense_regime(&self.0)
    }
}

/// The block-diagonal form `a₁(u₁, v₁) + a₂(u₂, v₂)` on pairs `[u; v]`.
pub struct PairForm<'a> {
    pub first: &'a dyn DiscreteForm,
    pub second: &'a dyn DiscreteForm,
}

impl<'a> PairForm<'a> {
    pub fn new(first: &'a dyn DiscreteForm, second: &'a dyn DiscreteForm) -> Result<Self> {
        if first.dim() != second.dim() {
            return Err(Error::LengthMismatch {
                expected: first.dim(),
                got: second.dim(),
            });
        }
        Ok(Self { first, second })
    }

    fn split(&self, x: &CVector) -> (CVector, CVector) {
        let n = self.first.dim();
        (x.rows(0, n).into_owned(), x.rows(n, n).into_owned())
    }
}

impl DiscreteForm for PairForm<'_> {
    fn dim(&self) -> usize {
        2 * self.first.dim()
    }

    fn eval(&self, u: &CVector, v: &CVector) -> Complex64 {
        let (u1, u2) = self.split(u);
        let (v1, v2) = self.split(v);
        self.first.eval(&u1, &v1) + self.second.eval(&u2, &v2)
    }

    fn entry(&self, i: usize, j: usize) -> Complex64 {
        let n = self.first.dim();
        match (i < n, j < n) {
            (true, true) => self.first.entry(i, j),
            (false, false) => self.second.entry(i - n, j - n),
            _ => Complex64::new(0.0, 0.0),
        }
    }

    fn off_diagonal_support(&self) -> Vec<(usize, usize)> {
        let n = self.first.dim();
        let mut s = self.first.off_diagonal_support();
        s.extend(
            self.second
                .off_diagonal_support()
                .into_iter()
                .map(|(i, j)| (i + n, j + n)),
        );
        s
    }

    fn scale(&self) -> f64 {
        self.first.scale().max(self.second.scale())
    }

    fn regime(&self) -> Regime {
        match (self.first.regime(), self.second.regime()) {
            (Regime::Outside { reason }, _) => Regime::Outside {
                reason: format!("first form: {reason}"),
            },
            (_, Regime::Outside { reason }) => Regime::Outside {
                reason: format!("second form: {reason}"),
            },
            (Regime::Accretive, Regime::Accretive) => Regime::Accretive,
            _ => Regime::KernelAccretiveSymmetric,
        }
    }

    fn mesh_angles(&self) -> Option<(bool, f64)> {
        match (self.first.mesh_angles(), self.second.mesh_angles()) {
            (Some((a, x)), Some((b, y))) => Some((a && b, x.max(y))),
            (a, b) => a.or(b),
        }
    }

    fn mesh_h(&self) -> f64 {
        self.first.mesh_h()
    }
}

/// Normalized violation `-Re a(Pu, u - Pu) / (‖A‖_max ‖u‖²)` of one input.
pub fn invariance_violation(form: &dyn DiscreteForm, set: ConvexSetId, u: &CVector) -> Result<f64> {
    let pu = set.project(u)?;
    let rest = u - &pu;
    let norm = u.norm_squared();
    if norm == 0.0 {
        return Ok(0.0);
    }
    Ok(-form.eval(&pu, &rest).re / (form.scale().max(f64::MIN_POSITIVE) * norm))
}

/// Sample `index` of the invariance check, shaped for `set`.
pub fn invariance_sample(spec: &SampleSpec, set: ConvexSetId, index: usize, n: usize) -> CVector {
    let mut u = spec.vector(index, n);
    if set == ConvexSetId::DominationPair {
        for z in u.iter_mut().skip(n / 2) {
            z.im = 0.0;
        }
    }
    u
}

/// `Re a(Pu, u - Pu) ≥ 0` over the sample. For the positive cone the sample
/// is augmented by the probes `u = e_j + s e_i`, `s ∈ {-1, i, -i}`, one per
/// off-diagonal entry, for which the violation is `-Re(conj(s) A_ij)`.
pub fn check_invariance_criterion(form: &dyn DiscreteForm, set: ConvexSetId, spec: &SampleSpec) -> Result<CheckRecord> {
    let n = form.dim();
    if set == ConvexSetId::PositiveCone {
        if let Some((false, max_angle)) = form.mesh_angles() {
            return Err(Error::ObtuseMesh { max_angle });
        }
    }
    if set == ConvexSetId::DominationPair && !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument("pair forms have even dimension".into()));
    }
    let violations = (0..spec.count)
        .into_par_iter()
        .map(|k| invariance_violation(form, set, &invariance_sample(spec, set, k, n)))
        .collect::<Result<Vec<f64>>>()?;
    let mut worst = Worst::new();
    for (k, &v) in violations.iter().enumerate() {
        worst.offer(v, || json!({"kind": "sample", "index": k, "seed": spec.seed}));
    }
    let mut probes = 0usize;
    if set == ConvexSetId::PositiveCone {
        let scale = 2.0 * form.scale().max(f64::MIN_POSITIVE);
        for (i, j) in form.off_diagonal_support() {
            let a = form.entry(i, j);
            for (s, v) in [("-1", a.re), ("i", -a.im), ("-i", a.im)] {
                worst.offer(v / scale, || json!({"kind": "probe", "row": i, "col": j, "s": s}));
            }
            probes += 3;
        }
    }
    let regime = form.regime();
    let record = CheckRecord::new("invariance-criterion")
        .param("set", set)
        .param("seed", spec.seed)
        .param("samples", spec.count)
        .param("distribution", spec.distribution)
        .param("probes", probes)
        .param("dim", n)
        .param("mesh_h", form.mesh_h())
        .param("regime", &regime)
        .judge(worst.value, INVARIANCE_TOL, worst.witness);
    Ok(match regime {
        Regime::Outside { reason } => record.report_only(reason),
        _ => record,
    })
}

fn modulus(u: &CVector) -> CVector {
    u.map(|z| Complex64::new(z.norm(), 0.0))
}

/// `(b(|u|, |v|) - Re a(u, v)) / (‖A₀‖_max ‖u‖ ‖v‖)`.
pub fn domination_violation(magnetic: &FormMatrices, zero: &FormMatrices, u: &CVector, v: &CVector) -> f64 {
    let denom = zero.a().max_abs().max(f64::MIN_POSITIVE) * u.norm() * v.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (zero.form(&modulus(u), &modulus(v)).re - magnetic.form(u, v).re) / denom
}

/// `Re a(u, v) ≥ b(|u|, |v|)` for phase-aligned pairs, where `b` is the form
/// without magnetic potential.
pub fn check_domination_form(magnetic: &FormMatrices, zero: &FormMatrices, spec: &SampleSpec) -> Result<CheckRecord> {
    let n = magnetic.dim();
    if zero.dim() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: zero.dim(),
        });
    }
    if let Some(cs) = zero.coefficients() {
        if !cs.is_real() || cs.flags().has_field {
            return Err(Error::Hypothesis(
                "the dominating form must have real coefficients and no magnetic potential".into(),
            ));
        }
    }
    let spec = spec.with_distribution(Distribution::PhaseAligned);
    let violations: Vec<f64> = (0..spec.count)
        .into_par_iter()
        .map(|k| {
            let (u, v) = spec.pair(k, n);
            domination_violation(magnetic, zero, &u, &v)
        })
        .collect();
    let mut worst = Worst::new();
    for (k, &v) in violations.iter().enumerate() {
        worst.offer(v, || json!({"kind": "sample", "index": k, "seed": spec.seed}));
    }
    Ok(CheckRecord::new("domination-form")
        .param("seed", spec.seed)
        .param("samples", spec.count)
        .param("distribution", spec.distribution)
        .param("mesh_h", magnetic.h())
        .judge(worst.value, DOMINATION_TOL, worst.witness))
}

/// `Q = ⟨Cξ, ξ⟩ - ⟨(C + Cᵀ)a, ξ⟩|u| + ⟨Ca, a⟩|u|²` for real `C`, `a`, `ξ`.
pub fn q_pointwise(c: [[f64; 2]; 2], a: [f64; 2], xi: [f64; 2], modulus: f64) -> f64 {
    let cx = [c[0][0] * xi[0] + c[0][1] * xi[1], c[1][0] * xi[0] + c[1][1] * xi[1]];
    let ca = [c[0][0] * a[0] + c[0][1] * a[1], c[1][0] * a[0] + c[1][1] * a[1]];
    let cta = [c[0][0] * a[0] + c[1][0] * a[1], c[0][1] * a[0] + c[1][1] * a[1]];
    let cxx = cx[0] * xi[0] + cx[1] * xi[1];
    let mixed = (ca[0] + cta[0]) * xi[0] + (ca[1] + cta[1]) * xi[1];
    let caa = ca[0] * a[0] + ca[1] * a[1];
    cxx - mixed * modulus + caa * modulus * modulus
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// A real matrix with symmetric part `≥ μ I`, `μ ∈ [0.1, 1.1)`.
fn random_elliptic(rng: &mut ChaCha8Rng) -> [[f64; 2]; 2] {
    let l = [[normal(rng), 0.0], [normal(rng), normal(rng)]];
    let mu = 0.1 + rng.random::<f64>();
    let skew = normal(rng);
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = l[i][0] * l[j][0] + l[i][1] * l[j][1];
        }
        c[i][i] += mu;
    }
    c[0][1] += skew;
    c[1][0] -= skew;
    c
}

/// Samples `Q` at random elliptic `C` and random `a`, `ξ`, `|u|`.
pub fn check_q_sampling(seed: u64, count: usize) -> CheckRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst::new();
    for k in 0..count {
        let c = random_elliptic(&mut rng);
        let a = [normal(&mut rng), normal(&mut rng)];
        let xi = [normal(&mut rng), normal(&mut rng)];
        let m = normal(&mut rng).abs();
        worst.offer(
            -q_pointwise(c, a, xi, m),
            || json!({"index": k, "C": c, "a": a, "xi": xi, "modulus": m}),
        );
    }
    CheckRecord::new("q-nonnegative")
        .param("seed", seed)
        .param("samples", count)
        .judge(worst.value, Q_TOL, worst.witness)
}

/// Degree-5 seven-point rule on a triangle: barycentric points and weights.
fn quadrature() -> Vec<([f64; 3], f64)> {
    let mut rule = vec![([1.0 / 3.0; 3], 0.225)];
    for (a, b, w) in [
        (0.059_715_871_789_770, 0.470_142_064_105_115, 0.132_394_152_788_506),
        (0.797_426_985_353_087, 0.101_286_507_323_456, 0.125_939_180_544_827),
    ] {
        rule.push(([a, b, b], w));
        rule.push(([b, a, b], w));
        rule.push(([b, b, a], w));
    }
    rule
}

/// Smooth phase-aligned data on one element: `u = ρ e^{iθ}`, `v = σ e^{iθ}`
/// with `ρ = e^{p·x + p0}`, `σ = e^{q·x + q0}`, `θ` quadratic.
struct ElementSample {
    vertices: [[f64; 2]; 3],
    c: [[f64; 2]; 2],
    avec: [f64; 2],
    b: [f64; 2],
    lower_c: [f64; 2],
    a0: f64,
    rho: ([f64; 2], f64),
    sigma: ([f64; 2], f64),
    theta: ([f64; 2], [[f64; 2]; 2]),
}

impl ElementSample {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let vertices = loop {
            let v: [[f64; 2]; 3] = [[0.0; 2]; 3].map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            let area = 0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]));
            if area.abs() > 0.05 {
                break v;
            }
        };
        let mut pair = || [normal(rng), normal(rng)];
        let (avec, b, lower_c, p, q, lin) = (pair(), pair(), pair(), pair(), pair(), pair());
        let s = normal(rng);
        let theta = (lin, [[normal(rng), s], [s, normal(rng)]]);
        Self {
            vertices,
            c: random_elliptic(rng),
            avec,
            b,
            lower_c,
            a0: normal(rng),
            rho: (p, normal(rng)),
            sigma: (q, normal(rng)),
            theta,
        }
    }

    fn area(&self) -> f64 {
        let v = &self.vertices;
        0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1])).abs()
    }

    /// `(Re a(u, v) - a(|u|, |v|), Q |v| / |u|)` integrands at `x`.
    fn integrands(&self, x: [f64; 2]) -> (f64, f64) {
        let i = Complex64::i();
        let exp_affine = |(g, c0): ([f64; 2], f64)| {
            let val = (g[0] * x[0] + g[1] * x[1] + c0).exp();
            (val, [g[0] * val, g[1] * val])
        };
        let (rho, drho) = exp_affine(self.rho);
        let (sigma, dsigma) = exp_affine(self.sigma);
        let (lin, quad) = self.theta;
        let theta = lin[0] * x[0] + lin[1] * x[1] + quad_form(quad, x);
        let dtheta = [
            lin[0] + 2.0 * (quad[0][0] * x[0] + quad[0][1] * x[1]),
            lin[1] + 2.0 * (quad[1][0] * x[0] + quad[1][1] * x[1]),
        ];
        let phase = Complex64::from_polar(1.0, theta);
        let u = rho * phase;
        let v = sigma * phase;
        let du = [0, 1].map(|k| (drho[k] + i * rho * dtheta[k]) * phase);
        let dv = [0, 1].map(|k| (dsigma[k] + i * sigma * dtheta[k]) * phase);
        let cov_u = [0, 1].map(|k| du[k] - i * self.avec[k] * u);
        let cov_v = [0, 1].map(|k| dv[k] - i * self.avec[k] * v);
        // ∂_k|w| = Re((∂_k w) sgn conj(w)).
        let dmod_u = [0, 1].map(|k| (du[k] * sgn(u).conj()).re);
        let dmod_v = [0, 1].map(|k| (dv[k] * sgn(v).conj()).re);
        let (mu, mv) = (u.norm(), v.norm());

        let mut magnetic = Complex64::new(0.0, 0.0);
        let mut plain = 0.0;
        for k in 0..2 {
            for l in 0..2 {
                magnetic += self.c[k][l] * cov_u[l] * cov_v[k].conj();
                plain += self.c[k][l] * dmod_u[l] * dmod_v[k];
            }
            magnetic += self.b[k] * cov_u[k] * v.conj() + self.lower_c[k] * u * cov_v[k].conj();
            plain += self.b[k] * dmod_u[k] * mv + self.lower_c[k] * mu * dmod_v[k];
        }
        magnetic += self.a0 * u * v.conj();
        plain += self.a0 * mu * mv;

        // ξ = Im(conj(sgn u) ∇u) = |u| ∇θ.
        let xi = [0, 1].map(|k| (sgn(u).conj() * du[k]).im);
        let q = q_pointwise(self.c, self.avec, xi, mu);
        (magnetic.re - plain, q * mv / mu)
    }

    fn integrate(&self) -> (f64, f64, f64) {
        let v = &self.vertices;
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        let mut mass = 0.0;
        for (l, w) in quadrature() {
            let x = [0, 1].map(|k| l[0] * v[0][k] + l[1] * v[1][k] + l[2] * v[2][k]);
            let (a, b) = self.integrands(x);
            lhs += w * a;
            rhs += w * b;
            mass += w * a.abs().max(b.abs());
        }
        let area = self.area();
        (lhs * area, rhs * area, mass * area)
    }
}

fn quad_form(s: [[f64; 2]; 2], x: [f64; 2]) -> f64 {
    s[0][0] * x[0] * x[0] + 2.0 * s[0][1] * x[0] * x[1] + s[1][1] * x[1] * x[1]
}

/// On random elements with smooth phase-aligned `u`, `v`, compares
/// `Re a(u, v) - a(|u|, |v|)` with the integral of `Q |v| / |u|`.
pub fn check_q_identity(seed: u64, count: usize) -> CheckRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = Worst::new();
    for k in 0..count {
        let sample = ElementSample::draw(&mut rng);
        let (lhs, rhs, mass) = sample.integrate();
        let rel = (lhs - rhs).abs() / mass.max(f64::MIN_POSITIVE);
        worst.offer(rel, || json!({"index": k, "lhs": lhs, "rhs": rhs}));
    }
    CheckRecord::new("q-identity")
        .param("seed", seed)
        .param("samples", count)
        .judge(worst.value, Q_IDENTITY_TOL, worst.witness)
}

/// The trace `j = restriction to the boundary` commutes with `Re`, `|·|`,
/// the positive part and `|v| sgn u`, exactly.
pub fn check_trace_hypotheses(fm: &FormMatrices, spec: &SampleSpec) -> CheckRecord {
    let n = fm.dim();
    let spec = spec.with_distribution(Distribution::ComplexGaussian);
    let j = |w: &CVector| fm.restrict_boundary(w);
    let diff = |a: &CVector, b: &CVector| (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let real = |w: &CVector| w.map(|z| Complex64::new(z.re, 0.0));
    let positive = |w: &CVector| w.map(|z| Complex64::new(z.re.max(0.0), 0.0));
    let mixed = |u: &CVector, v: &CVector| CVector::from_fn(u.len(), |i, _| v[i].norm() * sgn(u[i]));
    let mut worst = Worst::new();
    for k in 0..spec.count {
        let (u, v) = spec.pair(k, n);
        let (ju, jv) = (j(&u), j(&v));
        let checks = [
            ("real-part", diff(&j(&real(&u)), &real(&ju))),
            ("modulus", diff(&j(&modulus(&u)), &modulus(&ju))),
            ("lattice", diff(&j(&positive(&u)), &positive(&ju))),
            ("sgn", diff(&j(&mixed(&u, &v)), &mixed(&ju, &jv))),
        ];
        for (name, d) in checks {
            worst.offer(d, || json!({"index": k, "property": name, "seed": spec.seed}));
        }
    }
    CheckRecord::new("trace-hypotheses")
        .param("seed", spec.seed)
        .param("samples", spec.count)
        .param("mesh_h", fm.h())
        .judge(worst.value, 0.0, worst.witness)
}
