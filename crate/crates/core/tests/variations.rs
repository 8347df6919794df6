use std::sync::Arc;

use subflow_core::{
    build_chart, divergence_identity_residual, first_variation_residual, initial_map, random_section,
    second_variation_residual, total_energy, ConvergenceStudy, DomainChart, InitialMap, Potential, Stencil, Target,
};

fn chart(name: &str, n: usize, stencil: Stencil) -> Arc<DomainChart> {
    Arc::new(build_chart(name, [n, n, n]).unwrap().with_stencil(stencil))
}

#[test]
fn twisted_divergence_identity_holds_to_rounding() {
    for n in [8, 12, 16] {
        let c = chart("twisted-torus", n, Stencil::Fourth);
        let f = initial_map(&InitialMap::RandomSmooth, c, Target::Sphere { n: 2 }, 3).unwrap();
        let w = random_section(&f, 4, 1.0);
        let r = divergence_identity_residual(&f, &w).unwrap();
        assert_eq!(r.analytic, 0.0);
        assert!(r.at_rounding_floor(), "{r:?}");
    }
}

#[test]
fn weighted_divergence_identity_has_nonzero_sides() {
    let c = chart("weighted-torus", 16, Stencil::Fourth);
    let f = initial_map(&InitialMap::RandomSmooth, c, Target::Sphere { n: 2 }, 3).unwrap();
    let w = random_section(&f, 4, 1.0);
    let r = divergence_identity_residual(&f, &w).unwrap();
    assert!(r.analytic.abs() > 1e-3 && r.fd.abs() > 1e-3);
    assert!(r.residual < 0.1 * r.analytic.abs());
}

#[test]
fn first_and_second_variation_residuals_shrink_on_the_weighted_torus() {
    let g = Potential::Height;
    let mut first = Vec::new();
    let mut second = Vec::new();
    for n in [8, 16, 32] {
        let c = chart("weighted-torus", n, Stencil::Fourth);
        let f = initial_map(&InitialMap::RandomSmooth, Arc::clone(&c), Target::Sphere { n: 2 }, 9).unwrap();
        let v = random_section(&f, 10, 1.0);
        first.push(first_variation_residual(&f, &v, &g, c.h()).unwrap());
        second.push(second_variation_residual(&f, &v, &g, c.h()).unwrap());
    }
    for study in [ConvergenceStudy::new(first), ConvergenceStudy::new(second)] {
        assert!(study.passes(3.5), "{study:?}");
    }
}

#[test]
fn reports_serialize_with_the_documented_fields() {
    let c = chart("twisted-torus", 8, Stencil::Second);
    let f = initial_map(&InitialMap::RandomSmooth, c.clone(), Target::Sphere { n: 2 }, 1).unwrap();
    let v = random_section(&f, 2, 1.0);
    let r = first_variation_residual(&f, &v, &Potential::Height, c.h()).unwrap();
    let json = serde_json::to_value(&r).unwrap();
    for key in ["check", "grid", "h", "dt", "analytic", "fd", "residual", "order"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert!(total_energy(&f, &Potential::Height).unwrap().is_finite());
}
