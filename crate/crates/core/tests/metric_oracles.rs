use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttifair_core::metrics::{
    diversity_score_kl, diversity_score_kl_literal, diversity_score_tvd, kl_divergence, pearson,
    spearman, tvd, Distribution,
};

// Reference implementations: plain loops over the textbook definitions.
fn kl_ref(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        if p[i] > 0.0 {
            s += p[i] * (p[i] / q[i]).ln();
        }
    }
    s
}

fn tvd_ref(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += (p[i] - q[i]).abs();
    }
    s / 2.0
}

fn random_dist(rng: &mut impl Rng, n: usize, sparse: bool) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| {
            if sparse && rng.random_bool(0.3) {
                0.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[0] = 1.0;
    }
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn dist(w: &[f64]) -> Distribution<f64> {
    Distribution::new(w.to_vec()).unwrap()
}

#[test]
fn kl_and_tvd_match_reference_on_500_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let q6 = Distribution::<f64>::uniform(6);
    for i in 0..500 {
        let p = random_dist(&mut rng, 6, i % 2 == 0);
        let q = if i % 3 == 0 {
            q6.weights().to_vec()
        } else {
            random_dist(&mut rng, 6, false)
        };
        let (pd, qd) = (dist(&p), dist(&q));
        let kl = kl_divergence(&pd, &qd).unwrap();
        assert!((kl - kl_ref(&p, &q).max(0.0)).abs() < 1e-12, "draw {i}");
        assert!((tvd(&pd, &qd).unwrap() - tvd_ref(&p, &q)).abs() < 1e-12, "draw {i}");
    }
}

#[test]
fn closed_form_anchors() {
    let q = Distribution::<f64>::uniform(6);
    let point = Distribution::point_mass(6, 2);
    let half = dist(&[0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);
    assert!((diversity_score_kl(&point, &q).unwrap() - 1.0 / 6.0).abs() < 1e-9);
    assert!((diversity_score_tvd(&point, &q).unwrap() - 1.0 / 6.0).abs() < 1e-9);
    assert!((diversity_score_kl(&half, &q).unwrap() - 1.0 / 3.0).abs() < 1e-9);
    assert!((diversity_score_tvd(&half, &q).unwrap() - 1.0 / 3.0).abs() < 1e-9);
    assert!((diversity_score_kl(&q, &q).unwrap() - 1.0).abs() < 1e-9);
    assert!((diversity_score_tvd(&q, &q).unwrap() - 1.0).abs() < 1e-9);
    // the literal form runs the other way
    assert!((diversity_score_kl_literal(&point, &q).unwrap() - 5.0 / 6.0).abs() < 1e-9);
    assert_eq!(diversity_score_kl_literal(&q, &q).unwrap(), 0.0);
}

#[test]
fn kl_is_infinite_direction_guarded() {
    let p = dist(&[0.5, 0.5, 0.0]);
    let q = dist(&[1.0, 0.0, 0.0]);
    assert!(kl_divergence(&p, &q).is_err());
    assert!(kl_divergence(&q, &p).is_ok());
}

#[test]
fn mixing_toward_fair_never_lowers_diversity() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let q = Distribution::<f64>::uniform(6);
    for i in 0..200 {
        let p = dist(&random_dist(&mut rng, 6, true));
        let t: f64 = rng.random();
        let mixed = p.mix(&q, t).unwrap();
        let (k0, k1) = (
            diversity_score_kl(&p, &q).unwrap(),
            diversity_score_kl(&mixed, &q).unwrap(),
        );
        let (t0, t1) = (
            diversity_score_tvd(&p, &q).unwrap(),
            diversity_score_tvd(&mixed, &q).unwrap(),
        );
        assert!(k1 >= k0 - 1e-12, "trial {i}: kl {k0} -> {k1}");
        assert!(t1 >= t0 - 1e-12, "trial {i}: tvd {t0} -> {t1}");
    }
}

#[test]
fn f32_kernels_agree_with_f64() {
    let p32 = Distribution::<f32>::new(vec![0.5, 0.25, 0.25]).unwrap();
    let q32 = Distribution::<f32>::uniform(3);
    let p64 = dist(&[0.5, 0.25, 0.25]);
    let q64 = Distribution::<f64>::uniform(3);
    let a = kl_divergence(&p32, &q32).unwrap() as f64;
    let b = kl_divergence(&p64, &q64).unwrap();
    assert!((a - b).abs() < 1e-6);
    let a = tvd(&p32, &q32).unwrap() as f64;
    assert!((a - tvd(&p64, &q64).unwrap()).abs() < 1e-6);
}

fn arb_dist(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter_map("all zero", |w| {
        let s: f64 = w.iter().sum();
        (s > 1e-6).then(|| w.iter().map(|x| x / s).collect())
    })
}

proptest! {
    #[test]
    fn scores_stay_in_unit_interval(p in arb_dist(6)) {
        let q = Distribution::<f64>::uniform(6);
        let p = dist(&p);
        let k = diversity_score_kl(&p, &q).unwrap();
        let t = diversity_score_tvd(&p, &q).unwrap();
        prop_assert!((0.0..=1.0).contains(&k));
        prop_assert!((0.0..=1.0).contains(&t));
    }

    #[test]
    fn tvd_is_symmetric(p in arb_dist(6), q in arb_dist(6)) {
        let (p, q) = (dist(&p), dist(&q));
        prop_assert!((tvd(&p, &q).unwrap() - tvd(&q, &p).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn spearman_ignores_monotone_transforms(
        xs in prop::collection::vec(-100.0f64..100.0, 3..30),
        ys in prop::collection::vec(-100.0f64..100.0, 30),
    ) {
        let ys = &ys[..xs.len()];
        if let Ok(r) = spearman(&xs, ys) {
            let tx: Vec<f64> = xs.iter().map(|x| x.powi(3) + 2.0 * x).collect();
            let ty: Vec<f64> = ys.iter().map(|y| y.exp().ln_1p()).collect();
            let r2 = spearman(&tx, &ty).unwrap();
            prop_assert!((r - r2).abs() < 1e-9);
        }
    }

    #[test]
    fn pearson_is_bounded_and_symmetric(
        xs in prop::collection::vec(-10.0f64..10.0, 2..20),
        ys in prop::collection::vec(-10.0f64..10.0, 20),
    ) {
        let ys = &ys[..xs.len()];
        if let Ok(r) = pearson(&xs, ys) {
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert!((r - pearson(ys, &xs).unwrap()).abs() < 1e-12);
        }
    }
}
