//! Each gallery item against the facts it advertises.

use foliate_core::almost_product::turbulence_of;
use foliate_core::gallery::{builtin, CATALOG};
use foliate_core::weighted::mixed_scalar;

#[test]
fn advertised_facts_hold() {
    for name in CATALOG {
        let it = builtin(name).unwrap();
        let w = &it.structure;
        for p in it.sample_points(25, 3) {
            let pk = w.pack(&p).unwrap();
            let norms = pk.norms();
            if let Some(s) = it.facts.s_mix {
                let got = mixed_scalar(&pk).s_mix;
                assert!((got - s).abs() < 1e-9, "{name}: S_mix {got} at {p:?}");
            }
            if let Some(k) = it.facts.mixed_sectional {
                for x in pk.top_basis() {
                    for y in pk.perp_basis() {
                        let got = pk.geo.sectional(&x, &y).unwrap();
                        assert!((got - k).abs() < 1e-9, "{name}: K {got}");
                    }
                }
            }
            if it.facts.integrable_top {
                assert!(norms.t_top < 1e-18, "{name}: T_top {}", norms.t_top);
            }
            if it.facts.totally_geodesic_top {
                assert!(norms.h_top < 1e-18, "{name}: h_top {}", norms.h_top);
            }
            if let Some(a) = it.facts.turbulence {
                let worst = pk
                    .top_basis()
                    .iter()
                    .map(|x| turbulence_of(&pk.co_nullity(x).unwrap().b).value)
                    .fold(0.0f64, f64::max);
                assert!((worst - a).abs() < 1e-9, "{name}: turbulence {worst}");
            }
            if it.facts.leafwise_formula {
                assert!(norms.mean_top < 1e-18 && norms.x_perp < 1e-18, "{name}");
            }
        }
    }
}

#[test]
fn twisted_items_match_closed_forms() {
    for name in CATALOG {
        let it = builtin(name).unwrap();
        let Some(tw) = &it.twisted else { continue };
        for p in it.sample_points(10, 5) {
            let pk = it.structure.pack(&p).unwrap();
            let f = tw.forms(&p).unwrap();
            assert!((pk.mean_top() - &f.mean_top).norm() < 1e-10, "{name}");
            assert!((pk.mean_perp() - &f.mean_perp).norm() < 1e-10, "{name}");
        }
    }
}
