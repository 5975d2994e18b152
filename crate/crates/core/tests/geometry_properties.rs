use std::f64::consts::FRAC_PI_4;

use proptest::prelude::*;
use reflector_core::geometry::{
    curve_normal, curve_point, forward_map, inv_stereographic, inverse_map, reflect, stereographic, viewing_angle,
    DomainSpec, FnProfile, HeightJet, ReflectorProfile, SourcePoint, TargetPoint, UnitVec2,
};
use reflector_core::mlp::MlpParams;

fn domain() -> DomainSpec {
    DomainSpec::new((-1.0, 1.0), (FRAC_PI_4, 3.0 * FRAC_PI_4), (-1e3, 1e3)).unwrap()
}

fn wavy(a: f64, b: f64) -> FnProfile<impl Fn(f64) -> HeightJet + Sync> {
    FnProfile::new(domain(), move |p: f64| HeightJet {
        u: 1.0 + a * p * p + b * (2.0 * p).sin(),
        du: 2.0 * a * p + 2.0 * b * (2.0 * p).cos(),
    })
}

proptest! {
    #[test]
    fn reflection_is_an_isometric_involution(a in -3.2f64..3.2, b in -3.2f64..3.2) {
        let v = UnitVec2::from_angle(a);
        let n = UnitVec2::from_angle(b);
        let once = reflect(v, n);
        let twice = reflect(once, n);
        prop_assert!((twice.x - v.x).abs() < 1e-12 && (twice.z - v.z).abs() < 1e-12);
        prop_assert!((once.x.hypot(once.z) - 1.0).abs() < 1e-12);
        prop_assert!((once.dot(&n) + v.dot(&n)).abs() < 1e-12);
    }

    #[test]
    fn stereographic_inverts(sigma in -10.0f64..10.0) {
        let back = stereographic(inv_stereographic(sigma)).unwrap();
        prop_assert!((back - sigma).abs() < 1e-12 * (1.0 + sigma.abs()));
    }

    #[test]
    fn forward_then_inverse_is_identity(s in -0.98f64..0.98, t in 0.01f64..0.99, a in 0.0f64..0.3, b in -0.1f64..0.1) {
        let prof = wavy(a, b);
        let d = domain();
        let alpha = d.alpha_min + t * d.angle_len();
        let hit = forward_map(SourcePoint { s, alpha }, &prof).unwrap();
        let back = inverse_map(TargetPoint { p: hit.p, sigma: hit.sigma }, &prof).unwrap();
        prop_assert!(back.in_domain);
        prop_assert!((back.s - s).abs() < 1e-8, "s {} vs {}", back.s, s);
        prop_assert!((back.alpha - alpha).abs() < 1e-8);
        prop_assert!((viewing_angle(s, hit.p, &prof) - alpha).abs() < 1e-12);
    }

    #[test]
    fn normal_matches_finite_difference_tangent(p in -0.99f64..0.99, a in 0.0f64..0.3, b in -0.1f64..0.1) {
        let prof = wavy(a, b);
        let d = domain();
        let h = 1e-6;
        let r = |q: f64| curve_point(q, prof.height(q), &d);
        let (r0, r1) = (r(p - h), r(p + h));
        let tx = (r1[0] - r0[0]) / (2.0 * h);
        let tz = (r1[1] - r0[1]) / (2.0 * h);
        let len = tx.hypot(tz);
        let j = prof.jet(p);
        let n = curve_normal(p, j.u, j.du, &d).unwrap();
        prop_assert!((n.x - tz / len).abs() < 1e-6 && (n.z + tx / len).abs() < 1e-6);
    }
}

/// Every emitted ray meets a network reflector: the viewing-angle bracket
/// holds on a 64 × 64 grid and the forward root-find succeeds.
#[test]
fn network_reflectors_are_always_hit() {
    let d = domain();
    for seed in 0..6 {
        let net = MlpParams::init(&[1, 24, 24, 1], seed, (d.l_min, d.l_max)).unwrap();
        let prof = net.profile(d);
        for i in 0..64 {
            let s = d.l_min + d.omega_len() * i as f64 / 63.0;
            let lo = viewing_angle(s, d.l_max, &prof);
            let hi = viewing_angle(s, d.l_min, &prof);
            for j in 0..64 {
                let alpha = d.alpha_min + d.angle_len() * j as f64 / 63.0;
                assert!(lo <= alpha + 1e-12 && alpha <= hi + 1e-12, "seed {seed} s {s} alpha {alpha}");
                let hit = forward_map(SourcePoint { s, alpha }, &prof).unwrap();
                assert!((viewing_angle(s, hit.p, &prof) - alpha).abs() < 1e-12);
            }
        }
    }
}
