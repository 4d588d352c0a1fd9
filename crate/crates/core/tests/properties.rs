use cylvm::bounds::EnvelopePair;
use cylvm::densities::{constants_c1_c2, eval_g, DensityKernelInput, QuadratureSpec};
use cylvm::model::{eval_f, Ansatz, ExternalPotential, PhaseState, ProductAnsatz, Species, Window};
use cylvm::profile::RadialGrid;
use cylvm::solver::PotentialState;
use proptest::prelude::*;

fn product(amplitude: f64, e0: f64, f_window: Window) -> ProductAnsatz {
    ProductAnsatz {
        amplitude,
        k: 3,
        e0,
        e_window: Window::Above {
            edge: 0.0,
            width: 0.5,
        },
        f_window,
        g_window: Window::Bump { lo: -1.0, hi: 0.8 },
        nontrivial: true,
    }
}

fn state() -> PotentialState {
    let grid = RadialGrid::uniform(1.0, 65).unwrap();
    let x = grid.nodes();
    PotentialState::from_values(
        &grid,
        x.iter().map(|r| 0.05 * r * r).collect(),
        x.iter().map(|r| -0.1 * r * r * r).collect(),
        x.iter().map(|r| 0.08 * r * r).collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn f_is_invariant_under_rotations(
        r in 0.0f64..1.0, a in 0.0f64..6.3, vr in -1.0f64..1.0, vp in -1.0f64..1.0, v3 in -1.0f64..1.0, turn in -7.0f64..7.0,
    ) {
        let s = Species::new("e", 1.0, -1.0, product(1.0, 1.8, Window::Below { edge: 0.0, width: 0.4 }).into()).unwrap();
        let st = state();
        let ext = ExternalPotential::homogeneous(-0.3);
        let p = PhaseState::from_cylindrical(r, a, vr, vp, v3);
        let f0 = eval_f(&s, &st, &ext, &p).unwrap();
        let f1 = eval_f(&s, &st, &ext, &p.rotated(turn)).unwrap();
        // scale: amplitude · (𝓔₀ - m)^k bounds f
        prop_assert!((f0 - f1).abs() <= 1e-12 * 0.8f64.powi(3), "{f0} vs {f1}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn majorants_dominate(e in -0.5f64..2.5, f in -3.0f64..3.0, g in -1.5f64..1.5, lo in -2.0f64..-0.1, w in 0.1f64..2.0) {
        let windows = [Window::Unbounded, Window::Below { edge: 0.0, width: w }, Window::Above { edge: 0.0, width: w }, Window::Bump { lo, hi: lo + 2.0 * w + 0.2 }];
        for fw in windows {
            let a = Ansatz::Product(product(1.3, 2.0, fw));
            let v = a.eval(e, f, g);
            let tol = 1e-12 * (1.0 + a.majorant(e, g));
            prop_assert!(v <= a.majorant(e, g) + tol);
            let grad = a.gradient(e, f, g);
            let sum: f64 = grad.iter().map(|x| x.abs()).sum();
            prop_assert!(sum <= a.grad_majorant(e, g) * (1.0 + 1e-12) + 1e-12, "{sum} > {}", a.grad_majorant(e, g));
        }
    }
}

fn sources_bound_case(a: f64, b: f64, c: f64, r: f64, q: f64) -> Result<(), TestCaseError> {
    let s = vec![Species::new(
        "s",
        1.0,
        q,
        product(
            0.7,
            1.6,
            Window::Below {
                edge: 0.1,
                width: 0.6,
            },
        )
        .into(),
    )
    .unwrap()];
    let spec = QuadratureSpec {
        n_theta: 32,
        n_energy: 8,
        n_g: 8,
        guard: 1e-2,
    };
    let g = eval_g(&s, &DensityKernelInput { r, a, b, c }, &spec).unwrap();
    let (c1, c2) = constants_c1_c2(&s).unwrap();
    prop_assert!(
        g[1].hypot(g[2]) <= g[0].abs() * (1.0 + 1e-12) + 1e-300,
        "{g:?}"
    );
    for gi in g {
        prop_assert!(
            gi.abs() <= (c1 + c2 * a.abs()) * (1.0 + 1e-12),
            "{gi} vs {}",
            c1 + c2 * a.abs()
        );
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sources_obey_the_pointwise_bounds(a in -0.5f64..0.5, b in -2.0f64..2.0, c in -1.0f64..1.0, r in 0.0f64..1.0, pos in any::<bool>()) {
        sources_bound_case(a, b, c, r, if pos { 1.0 } else { -1.0 })?;
    }

    #[test]
    fn envelopes_are_ordered_and_monotone(c1 in 0.0f64..20.0, c2 in 0.0f64..20.0, r in 0.0f64..2.0, dr in 0.0f64..0.5, dc in 0.0f64..3.0) {
        let p = EnvelopePair::new(c1, c2).unwrap();
        prop_assert!(p.xi(r) <= p.zeta(r));
        prop_assert!(p.xi(r) <= p.xi(r + dr) && p.zeta(r) <= p.zeta(r + dr));
        // comparison: larger constants give larger solutions of the integral inequality
        let bigger = EnvelopePair::new(c1 + dc, c2 + dc).unwrap();
        prop_assert!(p.xi(r) <= bigger.xi(r) && p.zeta(r) <= bigger.zeta(r));
        // iterates of the Volterra map from zero increase towards ξ
        let mut prev = 0.0;
        for m in 1..12 {
            let x = p.xi_partial(r, m);
            prop_assert!(x >= prev && x <= p.xi(r) * (1.0 + 1e-14));
            prev = x;
        }
    }
}
