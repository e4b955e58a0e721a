//! Monte-Carlo checks of the jump sampler against quadrature.

use jumpflow::levy::{LevyModel, Profile};
use jumpflow::rng;
use jumpflow::stats::Moments;
use jumpflow::Vector;

const DRAWS: u64 = 1_000_000;

fn draws<const D: usize>(m: &LevyModel<D>, seed: u64) -> Vec<Vector<D>> {
    let mut r = rng::stream(seed, rng::lane::AUX, 0);
    (0..DRAWS).map(|_| m.sample_jump(&mut r).unwrap()).collect()
}

#[test]
fn symmetric_kernel_has_zero_mean() {
    let m = LevyModel::<1>::smooth(1.0, 1.0).unwrap().with_trunc_low(0.1).unwrap();
    let mut s = Moments::default();
    for z in draws(&m, 1) {
        s.push(z[0]);
    }
    assert!(s.mean().abs() <= 4.0 * s.stderr(), "{} ± {}", s.mean(), s.stderr());
}

#[test]
fn second_moment_matches_quadrature() {
    for alpha in [0.5, 1.0, 1.5] {
        let m = LevyModel::<1>::smooth(alpha, 1.0).unwrap().with_trunc_low(0.05).unwrap();
        let want = m.moment(2.0, m.trunc_low(), m.delta()).unwrap() / m.jump_rate().unwrap();
        let mut s = Moments::default();
        for z in draws(&m, 2) {
            s.push(z.norm_squared());
        }
        assert!((s.mean() - want).abs() <= 4.0 * s.stderr(), "α={alpha}: {} vs {want} ± {}", s.mean(), s.stderr());
    }
}

#[test]
fn planar_draws_are_isotropic_and_in_support() {
    let m = LevyModel::<2>::smooth(1.2, 0.8).unwrap().with_trunc_low(0.05).unwrap();
    let (mut cx, mut cy, mut cross) = (Moments::default(), Moments::default(), Moments::default());
    for z in draws(&m, 3) {
        let r = z.norm();
        assert!(r > m.trunc_low() && r < m.delta());
        cx.push(z[0] * z[0]);
        cy.push(z[1] * z[1]);
        cross.push(z[0] * z[1]);
    }
    let diff = cx.mean() - cy.mean();
    let se = (cx.stderr().powi(2) + cy.stderr().powi(2)).sqrt();
    assert!(diff.abs() <= 4.0 * se, "{diff} ± {se}");
    assert!(cross.mean().abs() <= 4.0 * cross.stderr());
}

#[test]
fn hard_cutoff_radial_quantiles() {
    let m = LevyModel::<1>::new(1.0, 1.0, Profile::HardCutoff { radius: 0.5 }, Some(0.1)).unwrap();
    let mut below = 0u64;
    for z in draws(&m, 4) {
        if z[0].abs() <= 1.0 / 6.0 {
            below += 1;
        }
    }
    // The radial median of r^{-2} on [0.1, 0.5] is exactly 1/6.
    let p = below as f64 / DRAWS as f64;
    let se = (0.25 / DRAWS as f64).sqrt();
    assert!((p - 0.5).abs() <= 4.0 * se, "{p}");
}
