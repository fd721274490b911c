use pesin_core::ladder::{ladder, ladder_inv, LadderParams, Lattice};
use pesin_core::torus::{MapModel, TorusPoint};
use pesin_core::Vec2;
use proptest::prelude::*;

fn dyadic() -> impl Strategy<Value = f64> {
    (0u32..1 << 20).prop_map(|k| k as f64 / (1u32 << 20) as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn linear_eval_commutes_with_lift(x in dyadic(), y in dyadic()) {
        let m = MapModel::cat();
        let fx = m.eval(TorusPoint::new(x, y));
        prop_assert_eq!(fx, TorusPoint::new(3.0 * x + y, x + y));
    }

    #[test]
    fn inverse_branch_inverts_eval(x in 0.0..1.0f64, y in 0.0..1.0f64, th in 0.0..std::f64::consts::TAU, r in 0.0..1.0f64, which in 0usize..3) {
        let m = [MapModel::cat(), MapModel::slowed_default(), MapModel::collapsed_default()][which].clone();
        let p = TorusPoint::new(x, y);
        let target = m.eval(p).translate(Vec2::new(th.cos(), th.sin()) * (r * m.tau(p)));
        if let Ok(w) = m.inverse_branch(p, target) {
            prop_assert!(m.eval(w).dist(target) <= 1e-12);
        }
    }

    #[test]
    fn slowed_agrees_with_linear_outside_radius(x in 0.0..1.0f64, y in 0.0..1.0f64) {
        let p = TorusPoint::new(x, y);
        prop_assume!(p.dist(TorusPoint::new(0.0, 0.0)) > 0.1);
        let (lin, slow) = (MapModel::cat(), MapModel::slowed_default());
        prop_assert!(lin.eval(p).dist(slow.eval(p)) <= 1e-12);
    }

    #[test]
    fn collapsed_differential_vanishes_on_disk(r in 0.0..0.0499f64, th in 0.0..std::f64::consts::TAU) {
        let m = MapModel::collapsed_default();
        let c = TorusPoint::new(6.0 / 7.0, 4.0 / 7.0);
        let d = m.differential(c.translate(Vec2::new(th.cos(), th.sin()) * r));
        prop_assert_eq!(d.norm(), 0.0);
    }

    #[test]
    fn ladder_roundtrip_and_order(a in 1e-6..1.0f64, b in 1e-6..1.0f64) {
        let p = LadderParams::default();
        let (ia, ib) = (ladder(&p, a, 1.0).unwrap(), ladder(&p, b, 1.0).unwrap());
        prop_assert!((ladder_inv(&p, ia, 1.0).unwrap() - a).abs() <= 1e-10);
        if a < b {
            prop_assert!(ia < ib);
            prop_assert!(ladder_inv(&p, a, 1.0).unwrap() < ladder_inv(&p, b, 1.0).unwrap());
        }
    }

    #[test]
    fn snapping_brackets_target(ln_t in -30.0..-1e-3f64) {
        let lat = Lattice::new(LadderParams::default());
        let k = lat.snap_ln(ln_t).unwrap();
        prop_assert!(lat.ln_value(k).unwrap() <= ln_t);
        prop_assert!(k == 0 || lat.ln_value(k - 1).unwrap() > ln_t);
    }
}

#[test]
fn each_lattice_step_inverts_the_quarter_ladder() {
    let p = LadderParams::default();
    let lat = Lattice::new(p);
    for k in 1..200 {
        let up = ladder(&p, lat.value(k).unwrap(), 0.25).unwrap();
        let prev = lat.value(k - 1).unwrap();
        assert!((up - prev).abs() <= 1e-12 * prev, "k={k}");
    }
}
