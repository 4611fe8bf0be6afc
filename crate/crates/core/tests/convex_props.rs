use dtnlab_core::convex::{brute_force_node, domination_node, ConvexSetId};
use dtnlab_core::linalg::CVector;
use dtnlab_core::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn complex() -> impl Strategy<Value = Complex64> {
    (-5.0..5.0f64, -5.0..5.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

/// Nodal vectors for `set`; pairs get a real second half.
fn nodal(set: ConvexSetId, n: usize) -> impl Strategy<Value = CVector> {
    prop::collection::vec(complex(), 2 * n).prop_map(move |mut xs| {
        if set == ConvexSetId::DominationPair {
            for z in &mut xs[n..] {
                z.im = 0.0;
            }
        } else {
            xs.truncate(n);
        }
        CVector::from_vec(xs)
    })
}

fn any_set() -> impl Strategy<Value = ConvexSetId> {
    prop::sample::select(ConvexSetId::ALL.to_vec())
}

fn weights(set: ConvexSetId, w: &[f64]) -> Vec<f64> {
    match set {
        ConvexSetId::DominationPair => w.iter().chain(w).copied().collect(),
        _ => w.to_vec(),
    }
}

fn weighted_dist(a: &CVector, b: &CVector, w: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .zip(w)
        .map(|((x, y), w)| w * (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn case() -> impl Strategy<Value = (ConvexSetId, CVector, CVector, Vec<f64>)> {
    (any_set(), 1usize..12).prop_flat_map(|(set, n)| {
        (
            Just(set),
            nodal(set, n),
            nodal(set, n),
            prop::collection::vec(0.01..10.0f64, n),
        )
    })
}

proptest! {
    #[test]
    fn idempotent((set, x, _y, _w) in case()) {
        let p = set.project(&x).unwrap();
        prop_assert_eq!(set.project(&p).unwrap(), p.clone());
        prop_assert!(set.contains(&p, 1e-12).unwrap());
    }

    #[test]
    fn non_expansive((set, x, y, w) in case()) {
        let w = weights(set, &w);
        let px = set.project(&x).unwrap();
        let py = set.project(&y).unwrap();
        prop_assert!(weighted_dist(&px, &py, &w) <= weighted_dist(&x, &y, &w) + 1e-10);
    }

    #[test]
    fn variational_inequality((set, x, members, w) in case()) {
        // Re <x - Px, c - Px>_W <= 0 for every member c.
        let w = weights(set, &w);
        let px = set.project(&x).unwrap();
        let c = set.project(&members).unwrap();
        let inner: f64 = (0..x.len()).map(|i| w[i] * ((c[i] - px[i]) * (x[i] - px[i]).conj()).re).sum();
        prop_assert!(inner <= 1e-8, "{}", inner);
    }

    #[test]
    fn fixed_points_are_set_members((set, x, _y, _w) in case()) {
        if set.contains(&x, 0.0).unwrap() {
            prop_assert_eq!(set.project(&x).unwrap(), x);
        }
    }
}

#[test]
fn oracle_agreement_on_random_nodes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for set in ConvexSetId::ALL {
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let (formula, brute) = match set {
                ConvexSetId::PositiveCone | ConvexSetId::SupUnitBall => {
                    let z = Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                    let p = set.project(&CVector::from_element(1, z)).unwrap()[0];
                    (vec![p.re, p.im], brute_force_node(set, &[z.re, z.im]))
                }
                ConvexSetId::DominationPair => {
                    let z = Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                    let v = rng.random_range(-3.0..3.0);
                    let (pu, pv) = domination_node(z, v);
                    (vec![pu.re, pu.im, pv], brute_force_node(set, &[z.re, z.im, v]))
                }
            };
            let d = formula
                .iter()
                .zip(&brute)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(d);
        }
        assert!(worst <= 1e-6, "{}: worst oracle gap {worst}", set.name());
    }
}
