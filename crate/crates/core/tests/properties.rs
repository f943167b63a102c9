use nalgebra::DMatrix;
use proptest::prelude::*;

use kgm_core::groups::{BinaryMatrix, GroupIndex, KroneckerSupport};
use kgm_core::pipeline::support_from_raw;
use kgm_core::solver::{project_l1_ball, prox_group_supnorm};
use kgm_core::spectral::PseudoPoly;
use kgm_core::synth::metric_esp;

fn vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, 1..16)
}

proptest! {
    #[test]
    fn prox_is_identity_minus_projection(v in vector(), w in 0.0..3.0f64, step in 0.05..2.0f64) {
        let p = prox_group_supnorm(&v, w, step);
        let q = project_l1_ball(&v, w * step);
        for i in 0..v.len() {
            prop_assert!((p[i] + q[i] - v[i]).abs() < 1e-12);
        }
        let inf = p.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let vinf = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        prop_assert!(inf <= vinf + 1e-12);
    }

    #[test]
    fn projection_lands_in_the_ball(v in vector(), r in 0.0..10.0f64) {
        let q = project_l1_ball(&v, r);
        let l1: f64 = q.iter().map(|x| x.abs()).sum();
        prop_assert!(l1 <= r + 1e-9);
        for (a, b) in q.iter().zip(&v) {
            prop_assert!(a * b >= 0.0);
        }
    }

    #[test]
    fn support_from_raw_covers_every_active_tuple(
        m1 in 1usize..4, m2 in 1usize..4, n in 0usize..3, seed in any::<u64>()
    ) {
        let gi = GroupIndex::new(m1, m2, n).unwrap();
        let raw: Vec<bool> = (0..gi.tuples().len()).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
        let est = support_from_raw(&raw, &gi);
        let s = &est.support;
        prop_assert!(s.e1.is_symmetric() && s.e1.has_unit_diagonal());
        prop_assert!(s.e2.is_symmetric() && s.e2.has_unit_diagonal());
        for (t, &on) in gi.tuples().iter().zip(&raw) {
            if on {
                prop_assert!(s.e1.get(t.h, t.j) && s.e2.get(t.k, t.l));
            }
        }
        prop_assert!((0.0..=1.0).contains(&est.defect));
    }

    #[test]
    fn esp_is_a_normalized_distance(m1 in 1usize..5, m2 in 1usize..5, a in any::<u64>(), b in any::<u64>()) {
        let pick = |m: usize, bits: u64| {
            let mut e = BinaryMatrix::identity(m);
            let mut k = 0;
            for r in 0..m {
                for c in 0..r {
                    let on = (bits >> (k % 64)) & 1 == 1;
                    e.set(r, c, on);
                    e.set(c, r, on);
                    k += 1;
                }
            }
            e
        };
        let x = KroneckerSupport::new(pick(m1, a), pick(m2, a.rotate_left(17))).unwrap();
        let y = KroneckerSupport::new(pick(m1, b), pick(m2, b.rotate_left(17))).unwrap();
        let d = metric_esp(&x, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, metric_esp(&y, &x).unwrap());
        prop_assert_eq!(metric_esp(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn pseudo_polynomial_is_hermitian_and_even(
        m in 1usize..4, n in 0usize..3, theta in -3.1..3.1f64,
        values in prop::collection::vec(-1.0..1.0f64, 64)
    ) {
        let mut p = PseudoPoly::zeros(m, n);
        for (x, v) in p.params_mut().iter_mut().zip(values.iter().cycle()) {
            *x = *v;
        }
        let a = p.value_at(theta);
        let b = p.value_at(-theta);
        prop_assert!((&a - a.adjoint()).camax() < 1e-12);
        prop_assert!((&b - a.map(|z| z.conj())).camax() < 1e-12);
        let dense: Vec<DMatrix<f64>> = p.coeffs();
        prop_assert_eq!(PseudoPoly::from_coeffs(&dense).unwrap(), p);
    }
}
