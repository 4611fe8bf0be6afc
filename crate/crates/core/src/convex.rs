//! Nodal projections onto the closed convex sets used by the invariance
//! criteria, and a brute-force oracle for them.
//!
//! With diagonal weights every set below is a product of per-node sets, so
//! the metric projection acts node by node and does not depend on the
//! weights.

use serde::{Deserialize, Serialize};

use crate::linalg::{CMatrix, CVector};
use crate::{Complex64, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvexSetId {
    /// `{φ : φ ≥ 0}`.
    PositiveCone,
    /// `{φ : |φ| ≤ 1}`.
    SupUnitBall,
    /// `{(u, v) : |u| ≤ v}`, with nodal vectors stored as `[u; v]`.
    DominationPair,
}

/// `sgn z = z / |z|`, `sgn 0 = 0`.
pub fn sgn(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        z / r
    }
}

pub fn positive_node(z: Complex64) -> f64 {
    z.re.max(0.0)
}

/// Shrinks `z` by ulps until `|z| <= bound`, so that projected points are
/// exact fixed points of the projection.
fn within(mut z: Complex64, bound: f64) -> Complex64 {
    while z.norm() > bound {
        z *= 1.0 - f64::EPSILON;
    }
    z
}

/// `(1 ∧ |z|) sgn z`.
pub fn sup_ball_node(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r <= 1.0 {
        z
    } else {
        within(z / r, 1.0)
    }
}

/// `½([|u| + |u| ∧ v]⁺ sgn u, [|u| ∨ v + v]⁺)`.
pub fn domination_node(u: Complex64, v: f64) -> (Complex64, f64) {
    let m = u.norm();
    if m <= v {
        return (u, v);
    }
    let x = 0.5 * (m + m.min(v)).max(0.0);
    let y = 0.5 * (m.max(v) + v).max(0.0);
    (within(sgn(u) * x, y), y)
}

/// Nodewise `(Re φ_i)⁺`.
pub fn project_positive(phi: &CVector) -> Vec<f64> {
    phi.iter().map(|&z| positive_node(z)).collect()
}

/// Nodewise `(1 ∧ |φ_i|) sgn φ_i`.
pub fn project_sup_ball(phi: &CVector) -> CVector {
    phi.map(sup_ball_node)
}

/// Nodewise projection onto `{(u, v) : |u| ≤ v}`; `Re v` is used.
pub fn project_domination(u: &CVector, v: &CVector) -> Result<(CVector, Vec<f64>)> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    let (pu, pv): (Vec<Complex64>, Vec<f64>) = u.iter().zip(v.iter()).map(|(&a, &b)| domination_node(a, b.re)).unzip();
    Ok((CVector::from_vec(pu), pv))
}

/// Extracts a positive diagonal weight, refusing anything non-diagonal.
pub fn diagonal_weights(w: &CMatrix) -> Result<Vec<f64>> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(Error::InvalidArgument("weight must be square".into()));
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && w[(i, j)] != Complex64::new(0.0, 0.0) {
                return Err(Error::Refused("nodal projections need a diagonal weight".into()));
            }
        }
    }
    let d: Vec<Complex64> = w.diagonal().iter().copied().collect();
    if d.iter().any(|z| z.im != 0.0 || !(z.re > 0.0)) {
        return Err(Error::InvalidArgument("weight diagonal must be positive".into()));
    }
    Ok(d.iter().map(|z| z.re).collect())
}

impl ConvexSetId {
    pub const ALL: [ConvexSetId; 3] = [Self::PositiveCone, Self::SupUnitBall, Self::DominationPair];

    pub fn name(self) -> &'static str {
        match self {
            Self::PositiveCone => "positive-cone",
            Self::SupUnitBall => "sup-unit-ball",
            Self::DominationPair => "domination-pair",
        }
    }

    fn split(self, x: &CVector) -> Result<usize> {
        match self {
            Self::DominationPair if !x.len().is_multiple_of(2) => Err(Error::InvalidArgument(
                "domination pairs are stored as [u; v] of even length".into(),
            )),
            Self::DominationPair => Ok(x.len() / 2),
            _ => Ok(x.len()),
        }
    }

    /// The metric projection of a nodal vector (`[u; v]` for pairs).
    pub fn project(self, x: &CVector) -> Result<CVector> {
        let n = self.split(x)?;
        Ok(match self {
            Self::PositiveCone => x.map(|z| Complex64::new(positive_node(z), 0.0)),
            Self::SupUnitBall => project_sup_ball(x),
            Self::DominationPair => {
                let mut out = CVector::zeros(2 * n);
                for i in 0..n {
                    let (a, b) = domination_node(x[i], x[n + i].re);
                    out[i] = a;
                    out[n + i] = Complex64::new(b, 0.0);
                }
                out
            }
        })
    }

    /// Membership up to `tol`.
    pub fn contains(self, x: &CVector, tol: f64) -> Result<bool> {
        let n = self.split(x)?;
        Ok(match self {
            Self::PositiveCone => x.iter().all(|z| z.re >= -tol && z.im.abs() <= tol),
            Self::SupUnitBall => x.iter().all(|z| z.norm() <= 1.0 + tol),
            Self::DominationPair => (0..n).all(|i| x[n + i].im.abs() <= tol && x[i].norm() <= x[n + i].re + tol),
        })
    }

    /// Nodewise brute-force projection; see [`brute_force_node`].
    pub fn brute_force_project(self, x: &CVector) -> Result<CVector> {
        let n = self.split(x)?;
        let mut out = CVector::zeros(x.len());
        match self {
            Self::DominationPair => {
                for i in 0..n {
                    let p = brute_force_node(self, &[x[i].re, x[i].im, x[n + i].re]);
                    out[i] = Complex64::new(p[0], p[1]);
                    out[n + i] = Complex64::new(p[2], 0.0);
                }
            }
            _ => {
                for i in 0..n {
                    let p = brute_force_node(self, &[x[i].re, x[i].im]);
                    out[i] = Complex64::new(p[0], p[1]);
                }
            }
        }
        Ok(out)
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Grid points per parameter and level in the brute-force search.
const GRID: usize = 21;
/// The search stops once every box side is this fraction of its initial size.
const FINAL_WIDTH: f64 = 1e-10;

/// Minimizes the distance from `point` to `embed(p)` over the box
/// `lower..upper` by grid search, zooming onto the best cell until the box
/// is below [`FINAL_WIDTH`] of its initial size. Periodic parameters may
/// leave their initial range while zooming.
fn zoom_search(
    lower: &[f64],
    upper: &[f64],
    periodic: &[bool],
    embed: &dyn Fn(&[f64]) -> Vec<f64>,
    point: &[f64],
) -> (Vec<f64>, f64) {
    let dim = lower.len();
    let f = |p: &[f64]| dist2(&embed(p), point);
    let (mut lo, mut hi) = (lower.to_vec(), upper.to_vec());
    let mut best = lo.clone();
    let mut best_val = f(&best);
    loop {
        let mut idx = vec![0usize; dim];
        loop {
            let p: Vec<f64> = (0..dim)
                .map(|k| lo[k] + (hi[k] - lo[k]) * idx[k] as f64 / (GRID - 1) as f64)
                .collect();
            let v = f(&p);
            if v < best_val {
                best_val = v;
                best = p;
            }
            let mut k = 0;
            while k < dim {
                idx[k] += 1;
                if idx[k] < GRID {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == dim {
                break;
            }
        }
        if (0..dim).all(|k| hi[k] - lo[k] <= FINAL_WIDTH * (upper[k] - lower[k])) {
            break;
        }
        for k in 0..dim {
            let cell = (hi[k] - lo[k]) / (GRID - 1) as f64;
            let (a, b) = (best[k] - 2.0 * cell, best[k] + 2.0 * cell);
            if periodic[k] {
                lo[k] = a;
                hi[k] = b;
            } else {
                lo[k] = a.max(lower[k]);
                hi[k] = b.min(upper[k]);
            }
        }
    }
    (embed(&best), best_val)
}

/// Nearest point of one node's set by brute-force search over a box
/// parametrization of the set. `point` holds real coordinates: `(re, im)`
/// or `(re u, im u, v)`.
pub fn brute_force_node(set: ConvexSetId, point: &[f64]) -> Vec<f64> {
    use std::f64::consts::TAU;
    // Projections are non-expansive and 0 is in every set, so the
    // projection lies within |point| of the origin.
    let r = 2.0 * point.iter().map(|x| x * x).sum::<f64>().sqrt() + 1.0;
    match set {
        ConvexSetId::PositiveCone => zoom_search(&[0.0], &[r], &[false], &|p| vec![p[0], 0.0], point).0,
        ConvexSetId::SupUnitBall => {
            zoom_search(
                &[0.0, 0.0],
                &[1.0, TAU],
                &[false, true],
                &|p| vec![p[0] * p[1].cos(), p[0] * p[1].sin()],
                point,
            )
            .0
        }
        ConvexSetId::DominationPair => {
            // u = a + ib, v = |u| + d with d >= 0.
            let full = zoom_search(
                &[-r, -r, 0.0],
                &[r, r, r],
                &[false; 3],
                &|p| vec![p[0], p[1], p[0].hypot(p[1]) + p[2]],
                point,
            );
            // Near-degenerate points have descent cones too thin for the
            // grid; the set is invariant under rotating u, so also search
            // the half-plane through the point: u = s e^{iθ}, v = s + d.
            let theta = point[1].atan2(point[0]);
            let (c, s) = (theta.cos(), theta.sin());
            let plane = zoom_search(
                &[0.0, 0.0],
                &[r, r],
                &[false; 2],
                &|p| vec![p[0] * c, p[0] * s, p[0] + p[1]],
                point,
            );
            if plane.1 < full.1 {
                plane.0
            } else {
                full.0
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn v(xs: &[Complex64]) -> CVector {
        CVector::from_vec(xs.to_vec())
    }

    #[test]
    fn positive_examples() {
        assert_eq!(
            project_positive(&v(&[c(1.0, 0.0), c(-2.0, 0.0), c(3.0, 0.0)])),
            vec![1.0, 0.0, 3.0]
        );
        assert_eq!(project_positive(&v(&[c(0.0, 1.0)])), vec![0.0]);
    }

    #[test]
    fn sup_ball_examples() {
        assert_eq!(
            project_sup_ball(&v(&[c(3.0, 0.0), c(0.5, 0.0), c(0.0, 3.0), c(0.0, 0.0)])),
            v(&[c(1.0, 0.0), c(0.5, 0.0), c(0.0, 1.0), c(0.0, 0.0)])
        );
    }

    #[test]
    fn domination_examples() {
        let cases = [
            (c(3.0, 0.0), 1.0, c(2.0, 0.0), 2.0),
            (c(1.0, 0.0), 5.0, c(1.0, 0.0), 5.0),
            (c(0.0, 3.0), 1.0, c(0.0, 2.0), 2.0),
            (c(1.0, 0.0), -3.0, c(0.0, 0.0), 0.0),
        ];
        for (u, w, pu, pv) in cases {
            let (a, b) = domination_node(u, w);
            assert!((a - pu).norm() < 1e-15 && (b - pv).abs() < 1e-15, "{u} {w} -> {a} {b}");
        }
        assert!(project_domination(&v(&[c(1.0, 0.0)]), &v(&[])).is_err());
        let (pu, pv) = project_domination(&v(&[c(3.0, 0.0)]), &v(&[c(1.0, 7.0)])).unwrap();
        assert_eq!((pu[0], pv[0]), (c(2.0, 0.0), 2.0));
    }

    #[test]
    fn brute_force_examples() {
        assert_eq!(
            brute_force_node(ConvexSetId::PositiveCone, &[-2.0, 0.0]),
            vec![0.0, 0.0]
        );
        let p = brute_force_node(ConvexSetId::DominationPair, &[3.0, 0.0, 1.0]);
        assert!(dist2(&p, &[2.0, 0.0, 2.0]).sqrt() < 1e-6, "{p:?}");
        let p = brute_force_node(ConvexSetId::SupUnitBall, &[0.5, 0.5]);
        assert!(dist2(&p, &[0.5, 0.5]).sqrt() < 1e-6, "{p:?}");
    }

    #[test]
    fn pair_layout() {
        let x = v(&[c(3.0, 0.0), c(0.0, 3.0), c(1.0, 0.0), c(1.0, 0.0)]);
        let p = ConvexSetId::DominationPair.project(&x).unwrap();
        assert_eq!(p, v(&[c(2.0, 0.0), c(0.0, 2.0), c(2.0, 0.0), c(2.0, 0.0)]));
        assert!(ConvexSetId::DominationPair.contains(&p, 1e-15).unwrap());
        assert!(ConvexSetId::DominationPair.project(&v(&[c(1.0, 0.0)])).is_err());
    }

    #[test]
    fn non_diagonal_weights_refused() {
        let mut w = CMatrix::identity(3, 3);
        assert_eq!(diagonal_weights(&w).unwrap(), vec![1.0; 3]);
        w[(0, 2)] = c(0.1, 0.0);
        assert!(matches!(diagonal_weights(&w), Err(Error::Refused(_))));
    }
}
