//! Coefficient fields sampled at triangle centroids.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::expr::{self, Expr};
use crate::mesh::Mesh;
use crate::{Error, Result};

/// Tolerance for the reality/symmetry flags.
pub const FLAG_TOL: f64 = 1e-12;

/// A real coefficient entry: a number or an expression in `x`, `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RealEntry {
    Number(f64),
    Expr(String),
}

/// A complex coefficient entry: a real entry or `{"re": .., "im": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarEntry {
    Real(RealEntry),
    Complex { re: RealEntry, im: RealEntry },
}

impl From<f64> for RealEntry {
    fn from(v: f64) -> Self {
        RealEntry::Number(v)
    }
}

impl From<&str> for RealEntry {
    fn from(s: &str) -> Self {
        RealEntry::Expr(s.to_owned())
    }
}

impl<T: Into<RealEntry>> From<T> for ScalarEntry {
    fn from(v: T) -> Self {
        ScalarEntry::Real(v.into())
    }
}

impl ScalarEntry {
    pub fn complex(re: impl Into<RealEntry>, im: impl Into<RealEntry>) -> Self {
        ScalarEntry::Complex {
            re: re.into(),
            im: im.into(),
        }
    }
}

fn zero() -> ScalarEntry {
    ScalarEntry::Real(RealEntry::Number(0.0))
}

fn identity() -> [[ScalarEntry; 2]; 2] {
    [[1.0.into(), zero()], [zero(), 1.0.into()]]
}

fn zero_pair() -> [ScalarEntry; 2] {
    [zero(), zero()]
}

fn zero_real_pair() -> [RealEntry; 2] {
    [RealEntry::Number(0.0), RealEntry::Number(0.0)]
}

/// The data of the form: `C = (c_kl)`, `b`, `c`, `a0` and the magnetic
/// potential `avec`. Omitted fields default to the plain Laplacian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    #[serde(rename = "C", default = "identity")]
    pub c_matrix: [[ScalarEntry; 2]; 2],
    #[serde(default = "zero_pair")]
    pub b: [ScalarEntry; 2],
    #[serde(default = "zero_pair")]
    pub c: [ScalarEntry; 2],
    #[serde(default = "zero")]
    pub a0: ScalarEntry,
    #[serde(default = "zero_real_pair")]
    pub avec: [RealEntry; 2],
}

impl Default for CoefficientConfig {
    fn default() -> Self {
        Self {
            c_matrix: identity(),
            b: zero_pair(),
            c: zero_pair(),
            a0: zero(),
            avec: zero_real_pair(),
        }
    }
}

impl CoefficientConfig {
    pub fn laplacian() -> Self {
        Self::default()
    }

    pub fn with_c(mut self, c: [[f64; 2]; 2]) -> Self {
        self.c_matrix = c.map(|row| row.map(ScalarEntry::from));
        self
    }

    pub fn with_a0(mut self, a0: impl Into<ScalarEntry>) -> Self {
        self.a0 = a0.into();
        self
    }

    pub fn with_avec(mut self, ax: impl Into<RealEntry>, ay: impl Into<RealEntry>) -> Self {
        self.avec = [ax.into(), ay.into()];
        self
    }

    pub fn with_b(mut self, b: [ScalarEntry; 2]) -> Self {
        self.b = b;
        self
    }

    pub fn with_lower_c(mut self, c: [ScalarEntry; 2]) -> Self {
        self.c = c;
        self
    }

    /// The same data with the magnetic potential removed.
    pub fn without_field(&self) -> Self {
        Self {
            avec: zero_real_pair(),
            ..self.clone()
        }
    }

    /// Parses every expression, reporting the offending field on failure.
    pub fn compile(&self) -> Result<CompiledCoefficients> {
        let real = |e: &RealEntry, field: String| -> Result<CompiledReal> {
            match e {
                RealEntry::Number(v) => Ok(CompiledReal {
                    field,
                    expr: Expr::Num(*v),
                }),
                RealEntry::Expr(s) => expr::parse(s)
                    .map(|expr| CompiledReal {
                        field: field.clone(),
                        expr,
                    })
                    .map_err(|source| Error::Expression { field, source }),
            }
        };
        let scalar = |e: &ScalarEntry, field: String| -> Result<CompiledScalar> {
            match e {
                ScalarEntry::Real(r) => Ok(CompiledScalar {
                    re: real(r, field)?,
                    im: None,
                }),
                ScalarEntry::Complex { re, im } => Ok(CompiledScalar {
                    re: real(re, format!("{field}.re"))?,
                    im: Some(real(im, format!("{field}.im"))?),
                }),
            }
        };
        let mut c_matrix = Vec::with_capacity(4);
        for k in 0..2 {
            for l in 0..2 {
                c_matrix.push(scalar(&self.c_matrix[k][l], format!("C[{k}][{l}]"))?);
            }
        }
        Ok(CompiledCoefficients {
            c_matrix,
            b: vec![scalar(&self.b[0], "b[0]".into())?, scalar(&self.b[1], "b[1]".into())?],
            c: vec![scalar(&self.c[0], "c[0]".into())?, scalar(&self.c[1], "c[1]".into())?],
            a0: scalar(&self.a0, "a0".into())?,
            avec: vec![
                real(&self.avec[0], "avec[0]".into())?,
                real(&self.avec[1], "avec[1]".into())?,
            ],
        })
    }
}

#[derive(Debug, Clone)]
struct CompiledReal {
    field: String,
    expr: Expr,
}

impl CompiledReal {
    fn eval(&self, p: [f64; 2], triangle: usize) -> Result<f64> {
        self.expr.eval(p[0], p[1]).map_err(|source| Error::CoefficientDomain {
            field: self.field.clone(),
            triangle,
            source,
        })
    }
}

#[derive(Debug, Clone)]
struct CompiledScalar {
    re: CompiledReal,
    im: Option<CompiledReal>,
}

impl CompiledScalar {
    fn eval(&self, p: [f64; 2], triangle: usize) -> Result<Complex64> {
        let re = self.re.eval(p, triangle)?;
        let im = match &self.im {
            Some(e) => e.eval(p, triangle)?,
            None => 0.0,
        };
        Ok(Complex64::new(re, im))
    }
}

#[derive(Debug, Clone)]
pub struct CompiledCoefficients {
    c_matrix: Vec<CompiledScalar>,
    b: Vec<CompiledScalar>,
    c: Vec<CompiledScalar>,
    a0: CompiledScalar,
    avec: Vec<CompiledReal>,
}

/// Coefficients frozen at one centroid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementCoefficients {
    pub c_matrix: [[Complex64; 2]; 2],
    pub b: [Complex64; 2],
    pub c: [Complex64; 2],
    pub a0: Complex64,
    pub avec: [f64; 2],
}

impl CompiledCoefficients {
    pub fn at(&self, p: [f64; 2], triangle: usize) -> Result<ElementCoefficients> {
        let cm = |i: usize| self.c_matrix[i].eval(p, triangle);
        Ok(ElementCoefficients {
            c_matrix: [[cm(0)?, cm(1)?], [cm(2)?, cm(3)?]],
            b: [self.b[0].eval(p, triangle)?, self.b[1].eval(p, triangle)?],
            c: [self.c[0].eval(p, triangle)?, self.c[1].eval(p, triangle)?],
            a0: self.a0.eval(p, triangle)?,
            avec: [self.avec[0].eval(p, triangle)?, self.avec[1].eval(p, triangle)?],
        })
    }
}

/// Per-triangle coefficient values and the hypothesis flags derived from them.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    elements: Vec<ElementCoefficients>,
    flags: CoefficientFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefficientFlags {
    pub is_c_real: bool,
    pub is_symmetric_c: bool,
    /// `b`, `c` and `a0` are all real.
    pub is_lower_order_real: bool,
    /// `i c_k` is real, i.e. `c` is purely imaginary.
    pub is_i_c_real: bool,
    pub is_b_real: bool,
    pub is_a0_real: bool,
    pub min_re_a0: f64,
    pub has_field: bool,
    /// Ellipticity constant; `<= 0` means the data are not elliptic.
    pub ellipticity_mu: f64,
}

impl CoefficientSet {
    pub fn from_elements(elements: Vec<ElementCoefficients>) -> Self {
        let flags = compute_flags(&elements);
        Self { elements, flags }
    }

    pub fn elements(&self) -> &[ElementCoefficients] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn flags(&self) -> &CoefficientFlags {
        &self.flags
    }

    /// Real data with no magnetic potential, the setting of the positivity results.
    pub fn is_real(&self) -> bool {
        self.flags.is_c_real && self.flags.is_lower_order_real && !self.flags.has_field
    }
}

pub fn build_coefficients(config: &CoefficientConfig, mesh: &Mesh) -> Result<CoefficientSet> {
    let compiled = config.compile()?;
    let elements = (0..mesh.triangles().len())
        .into_par_iter()
        .map(|t| compiled.at(mesh.centroid(t), t))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoefficientSet::from_elements(elements))
}

/// Smallest eigenvalue of the Hermitian part of a 2x2 complex matrix.
pub fn hermitian_part_min_eig(c: &[[Complex64; 2]; 2]) -> f64 {
    let a = c[0][0].re;
    let d = c[1][1].re;
    let off = 0.5 * (c[0][1] + c[1][0].conj());
    0.5 * (a + d) - (0.25 * (a - d) * (a - d) + off.norm_sqr()).sqrt()
}

/// Minimum over elements of the smallest eigenvalue of `(C + C^H) / 2`.
pub fn check_ellipticity(cs: &CoefficientSet) -> f64 {
    cs.elements
        .iter()
        .map(|e| hermitian_part_min_eig(&e.c_matrix))
        .fold(f64::INFINITY, f64::min)
}

fn compute_flags(elements: &[ElementCoefficients]) -> CoefficientFlags {
    let real = |z: Complex64| z.im.abs() <= FLAG_TOL;
    let imaginary = |z: Complex64| z.re.abs() <= FLAG_TOL;
    let all = |f: &dyn Fn(&ElementCoefficients) -> bool| elements.iter().all(f);
    let is_c_real = all(&|e| e.c_matrix.iter().flatten().all(|&z| real(z)));
    let is_symmetric_c = all(&|e| (e.c_matrix[0][1] - e.c_matrix[1][0]).norm() <= FLAG_TOL);
    let is_b_real = all(&|e| e.b.iter().all(|&z| real(z)));
    let is_a0_real = all(&|e| real(e.a0));
    let is_lower_order_real = is_b_real && is_a0_real && all(&|e| e.c.iter().all(|&z| real(z)));
    let is_i_c_real = all(&|e| e.c.iter().all(|&z| imaginary(z)));
    let has_field = elements.iter().any(|e| e.avec != [0.0, 0.0]);
    let min_re_a0 = elements.iter().map(|e| e.a0.re).fold(f64::INFINITY, f64::min);
    let ellipticity_mu = elements
        .iter()
        .map(|e| hermitian_part_min_eig(&e.c_matrix))
        .fold(f64::INFINITY, f64::min);
    CoefficientFlags {
        is_c_real,
        is_symmetric_c,
        is_lower_order_real,
        is_i_c_real,
        is_b_real,
        is_a0_real,
        min_re_a0,
        has_field,
        ellipticity_mu,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_square;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn laplacian_flags() {
        let mesh = build_square(3).unwrap();
        let cs = build_coefficients(&CoefficientConfig::laplacian(), &mesh).unwrap();
        let f = cs.flags();
        assert!(f.is_c_real && f.is_symmetric_c && f.is_lower_order_real);
        assert_eq!(f.ellipticity_mu, 1.0);
        assert_eq!(check_ellipticity(&cs), 1.0);
        assert!(!f.has_field);
    }

    #[test]
    fn nonsymmetric_constant_c() {
        let mesh = build_square(2).unwrap();
        let cs = build_coefficients(&CoefficientConfig::default().with_c([[2.0, 1.0], [0.0, 1.0]]), &mesh).unwrap();
        let mu = check_ellipticity(&cs);
        assert!((mu - (3.0 - 2f64.sqrt()) / 2.0).abs() < 1e-14);
        assert!(!cs.flags().is_symmetric_c);

        let cs = build_coefficients(&CoefficientConfig::default().with_c([[1.0, 3.0], [0.0, 1.0]]), &mesh).unwrap();
        assert!((check_ellipticity(&cs) + 0.5).abs() < 1e-14);
    }

    #[test]
    fn diagonal_mu() {
        let mesh = build_square(2).unwrap();
        let cs = build_coefficients(&CoefficientConfig::default().with_c([[0.3, 0.0], [0.0, 1.0]]), &mesh).unwrap();
        assert!((check_ellipticity(&cs) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn expressions_sampled_at_centroids() {
        let mesh = build_square(2).unwrap();
        let cfg = CoefficientConfig::default().with_a0("x + 10*y").with_avec("y", "-x");
        let cs = build_coefficients(&cfg, &mesh).unwrap();
        for (t, e) in cs.elements().iter().enumerate() {
            let [x, y] = mesh.centroid(t);
            assert!((e.a0.re - (x + 10.0 * y)).abs() < 1e-15);
            assert_eq!(e.avec, [y, -x]);
        }
        assert!(cs.flags().has_field);
    }

    #[test]
    fn complex_entries() {
        let mesh = build_square(1).unwrap();
        let cfg =
            CoefficientConfig::default().with_lower_c([ScalarEntry::complex(0.0, 2.0), ScalarEntry::complex(0.0, "x")]);
        let cs = build_coefficients(&cfg, &mesh).unwrap();
        assert!(cs.flags().is_i_c_real);
        assert!(!cs.flags().is_lower_order_real);
    }

    #[test]
    fn domain_error_reports_triangle() {
        let mesh = build_square(2).unwrap();
        // centroid of triangle 0 is (2/6, 1/6)
        let cfg = CoefficientConfig::default().with_a0("1/(y - 1/6)");
        match build_coefficients(&cfg, &mesh) {
            Err(Error::CoefficientDomain { field, triangle, .. }) => {
                assert_eq!(field, "a0");
                assert_eq!(triangle, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_error_names_field() {
        let mut cfg = CoefficientConfig::default();
        cfg.c_matrix[1][0] = ScalarEntry::from("2*+x");
        match cfg.compile() {
            Err(Error::Expression { field, .. }) => assert_eq!(field, "C[1][0]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_schema_forms() {
        let cfg: CoefficientConfig = serde_json::from_value(serde_json::json!({
            "C": [[1, 0], [0, "1 + x"]],
            "a0": {"re": 1, "im": "y"},
            "avec": ["y", "-x"]
        }))
        .unwrap();
        assert_eq!(cfg.a0, ScalarEntry::complex(1.0, "y"));
        assert_eq!(cfg.b, zero_pair());
        assert!(serde_json::from_value::<CoefficientConfig>(serde_json::json!({"d": 1})).is_err());
    }

    #[test]
    fn random_spd_mu_is_min_over_elements() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let elements: Vec<_> = (0..200)
            .map(|_| {
                let (p, q, r): (f64, f64, f64) = (
                    rng.random_range(0.1..3.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0.1..3.0),
                );
                // S = L L^T with L = [[p, 0], [q, r]]
                let s = [[c(p * p), c(p * q)], [c(p * q), c(q * q + r * r)]];
                ElementCoefficients {
                    c_matrix: s,
                    b: [c(0.0); 2],
                    c: [c(0.0); 2],
                    a0: c(0.0),
                    avec: [0.0; 2],
                }
            })
            .collect();
        let brute = elements
            .iter()
            .map(|e| {
                // brute force: minimize the Rayleigh quotient over a fine angle sweep
                (0..20000)
                    .map(|k| {
                        let th = std::f64::consts::PI * k as f64 / 20000.0;
                        let (s, co) = th.sin_cos();
                        let m = e.c_matrix;
                        m[0][0].re * co * co + 2.0 * m[0][1].re * s * co + m[1][1].re * s * s
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min);
        let cs = CoefficientSet::from_elements(elements);
        assert!((check_ellipticity(&cs) - brute).abs() < 1e-6);
    }

    #[test]
    fn mu_invariant_under_antisymmetric_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let m = [
                [c(rng.random_range(-2.0..3.0)), c(rng.random_range(-2.0..2.0))],
                [c(rng.random_range(-2.0..2.0)), c(rng.random_range(-2.0..3.0))],
            ];
            let s = rng.random_range(-5.0..5.0);
            let shifted = [[m[0][0], m[0][1] + s], [m[1][0] - s, m[1][1]]];
            assert!((hermitian_part_min_eig(&m) - hermitian_part_min_eig(&shifted)).abs() < 1e-12);
        }
    }

    #[test]
    fn real_constant_flags() {
        let mesh = build_square(2).unwrap();
        for cm in [[[1.0, 0.5], [0.5, 2.0]], [[1.0, 0.2], [-0.3, 2.0]]] {
            let cs = build_coefficients(&CoefficientConfig::default().with_c(cm).with_a0(2.0), &mesh).unwrap();
            let f = cs.flags();
            assert_eq!(
                (f.is_c_real, f.is_symmetric_c, f.is_lower_order_real),
                (true, cm[0][1] == cm[1][0], true)
            );
        }
    }
}
