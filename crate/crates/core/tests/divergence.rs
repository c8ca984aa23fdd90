//! Divergence theorem on closed charts and the integral formulas as grid
//! studies, through the public API only.

use foliate_core::bench::{divergence_integral, grid_study, integral_formula_1, INTEGRAL_TOL};
use foliate_core::gallery::{builtin, CATALOG};
use foliate_core::manifold::VectorField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field<R: Rng>(d: usize, rng: &mut R) -> VectorField {
    let comps: Vec<String> = (0..d)
        .map(|_| {
            let i = rng.random_range(0..d);
            let j = rng.random_range(0..d);
            format!(
                "{:.3}*sin(x{i} + {:.3}) + {:.3}*cos(2*x{j})*sin(x{i})",
                rng.random_range(-1.0..1.0),
                rng.random_range(0.0..6.0),
                rng.random_range(-1.0..1.0)
            )
        })
        .collect();
    let refs: Vec<&str> = comps.iter().map(String::as_str).collect();
    VectorField::parse("xi", &refs, d).unwrap()
}

#[test]
fn divergence_integrates_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for name in CATALOG {
        let w = builtin(name).unwrap().structure;
        if !w.manifold.is_closed() {
            continue;
        }
        for _ in 0..4 {
            let xi = random_field(w.dim(), &mut rng);
            let v = divergence_integral(&w.manifold, &xi, 24).unwrap();
            assert!(v.abs() < 1e-9, "{name}: {v:e}");
            checked += 1;
        }
    }
    assert!(checked >= 20);
}

#[test]
fn first_formula_converges_on_weighted_conformal_torus() {
    let w = builtin("weighted_conformal_torus").unwrap().structure;
    let st = grid_study(&[8, 16, 32], INTEGRAL_TOL, |k| integral_formula_1(&w, k)).unwrap();
    assert!(st.pass, "{st:?}");
}
