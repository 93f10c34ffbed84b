//! The desk chord found by the minimax solver against a shooting method that
//! never touches the spectral discretization.

use coiso_core::chord::{minimax_estimate, ActionFunctional, LinkingConfig, MinimaxOptions};
use coiso_core::geometry::{CoisoSpace, PhasePoint};
use coiso_core::hamiltonian::{default_eps, ExtendedHamiltonian, Hamiltonian, RadialHamiltonian, RadialProfile};

fn desk() -> ExtendedHamiltonian {
    let space = CoisoSpace::new(1, 0).unwrap();
    let inner =
        RadialHamiltonian::new(&space, PhasePoint::zeros(1), RadialProfile::smooth_step(0.1, 0.9, 2.0).unwrap())
            .unwrap();
    ExtendedHamiltonian::new(space, inner, default_eps(2.0).unwrap(), None).unwrap()
}

/// Classical RK4 on `(x, y, A)` with `Ȧ = ½⟨∇H̄, z⟩ − H̄`.
fn shoot(h: &ExtendedHamiltonian, xi: f64, eta: f64) -> [f64; 3] {
    let rhs = |s: &[f64; 3]| {
        let mut g = [0.0; 2];
        h.gradient(&s[..2], &mut g);
        let v = h.value(&s[..2]);
        [-g[1], g[0], 0.5 * (g[0] * s[0] + g[1] * s[1]) - v]
    };
    let steps = 4000;
    let dt = 1.0 / steps as f64;
    let mut s = [xi, eta, 0.0];
    let add = |a: &[f64; 3], b: &[f64; 3], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]];
    for _ in 0..steps {
        let k1 = rhs(&s);
        let k2 = rhs(&add(&s, &k1, dt / 2.0));
        let k3 = rhs(&add(&s, &k2, dt / 2.0));
        let k4 = rhs(&add(&s, &k3, dt));
        for i in 0..3 {
            s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    s
}

/// Roots of the residual `(η, y(1))` along `η = 0`, with their actions.
fn shooting_chords(h: &ExtendedHamiltonian) -> Vec<(f64, f64)> {
    let y1 = |xi: f64| shoot(h, xi, 0.0)[1];
    let grid: Vec<f64> = (1..=600).map(|i| -1.2 + 2.4 * i as f64 / 601.0).collect();
    let mut out = Vec::new();
    for w in grid.windows(2) {
        let (fa, fb) = (y1(w[0]), y1(w[1]));
        if fa == 0.0 || (fa < 0.0) == (fb < 0.0) {
            continue;
        }
        let (mut a, mut b, mut fa) = (w[0], w[1], fa);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            let fm = y1(m);
            if (fm < 0.0) == (fa < 0.0) {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        let xi = 0.5 * (a + b);
        let end = shoot(h, xi, 0.0);
        // Points where H̄ vanishes nearby give y ≡ 0: constant paths, not chords.
        if (end[0] - xi).abs() > 1e-6 {
            out.push((xi, end[2]));
        }
    }
    out
}

#[test]
fn minimax_chord_matches_shooting() {
    let h = desk();
    let chords = shooting_chords(&h);
    let positive: Vec<f64> = chords.iter().map(|c| c.1).filter(|&a| a > 0.0).collect();
    assert!(!positive.is_empty(), "shooting found {chords:?}");

    let f = ActionFunctional::new(h, 32, None).unwrap();
    let run = minimax_estimate(&f, &LinkingConfig::default(), &MinimaxOptions::default());
    let c = run.outcome.expect("validated chord");
    let closest = positive.iter().map(|a| (a - c.action).abs()).fold(f64::INFINITY, f64::min);
    assert!(closest < 1e-3, "solver {} vs shooting {positive:?}", c.action);
    assert!(c.ode_residual < 1e-4 && c.leaf_res < 1e-8 && c.max_q_pi <= 1.0 + 1e-8);
}

#[test]
fn galerkin_refinement_is_stable() {
    let h = desk();
    let mut actions = Vec::new();
    for n_f in [32, 64] {
        let f = ActionFunctional::new(h.clone(), n_f, None).unwrap();
        let run = minimax_estimate(&f, &LinkingConfig::default(), &MinimaxOptions::default());
        actions.push(run.outcome.expect("validated chord").action);
    }
    assert!((actions[0] - actions[1]).abs() < 1e-4, "{actions:?}");
}
