//! `Φ = a − b` on a fixed Galerkin truncation, its gradient and the
//! exponential-Euler negative-gradient flow.
//!
//! Internally paths are flat coordinate vectors `u` of a [`GalerkinBasis`],
//! in which the `H^{1/2}` metric is Euclidean, `a(u) = ½ Σ sign(m) u²` and
//! `∇a = u⁺ − u⁻`.

use std::sync::Arc;

use crate::geometry::{j_apply, CoisoSpace};
use crate::hamiltonian::{ExtendedHamiltonian, Hamiltonian};
use crate::quadrature::GaussLegendre;
use crate::spectral::{action_weight, GalerkinBasis, SpectralPath};

use super::ChordError;

/// Per accepted flow step, `Φ` may rise by at most this much.
pub const TOL_MONO: f64 = 1e-10;

#[derive(Clone)]
pub struct ActionFunctional {
    space: CoisoSpace,
    ham: Arc<dyn Hamiltonian>,
    ext: Option<ExtendedHamiltonian>,
    basis: GalerkinBasis,
    rule: GaussLegendre,
    sign: Vec<f64>,
    inv_sqrt_w: Vec<f64>,
    /// `(plane j, whether the coordinate is y_j)` per entry.
    plane: Vec<(usize, bool)>,
    /// `cos(mπt_q)` and `sin(mπt_q)`, entry-major.
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl std::fmt::Debug for ActionFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ActionFunctional")
            .field("space", &self.space)
            .field("n_f", &self.basis.max_freq())
            .field("n_quad", &self.rule.len())
            .finish()
    }
}

impl ActionFunctional {
    /// `Φ` for `H̄` with truncation `n_f` and `4·n_f` quadrature nodes unless
    /// `n_quad` is given.
    pub fn new(ext: ExtendedHamiltonian, n_f: usize, n_quad: Option<usize>) -> Result<Self, ChordError> {
        let space = ext.space;
        let mut f = Self::with_hamiltonian(space, Arc::new(ext.clone()), n_f, n_quad)?;
        f.ext = Some(ext);
        Ok(f)
    }

    /// `Φ` for an arbitrary Hamiltonian; linking bounds are unavailable.
    pub fn with_hamiltonian(
        space: CoisoSpace,
        ham: Arc<dyn Hamiltonian>,
        n_f: usize,
        n_quad: Option<usize>,
    ) -> Result<Self, ChordError> {
        if n_f == 0 {
            return Err(ChordError::InvalidInput("N_F must be positive".into()));
        }
        if ham.dim() != space.ambient_dim() {
            return Err(ChordError::InvalidInput(format!(
                "Hamiltonian dimension {} does not match 2n = {}",
                ham.dim(),
                space.ambient_dim()
            )));
        }
        let rule = GaussLegendre::new(n_quad.unwrap_or(4 * n_f).max(1));
        let basis = GalerkinBasis::new(space, n_f);
        let n = space.n();
        let q = rule.len();
        let d = basis.dim();
        let (mut sign, mut inv_sqrt_w, mut plane) = (Vec::with_capacity(d), Vec::with_capacity(d), Vec::with_capacity(d));
        let (mut cos, mut sin) = (Vec::with_capacity(d * q), Vec::with_capacity(d * q));
        for &(m, i) in basis.entries() {
            sign.push(match m.signum() {
                0 => 0.0,
                s => s as f64,
            });
            inv_sqrt_w.push(1.0 / action_weight(m).sqrt());
            plane.push(if i < n { (i, false) } else { (i - n, true) });
            for &t in &rule.nodes {
                let (s, c) = (m as f64 * std::f64::consts::PI * t).sin_cos();
                cos.push(c);
                sin.push(s);
            }
        }
        Ok(Self { space, ham, ext: None, basis, rule, sign, inv_sqrt_w, plane, cos, sin })
    }

    pub fn space(&self) -> CoisoSpace {
        self.space
    }

    pub fn n_f(&self) -> usize {
        self.basis.max_freq()
    }

    pub fn n_quad(&self) -> usize {
        self.rule.len()
    }

    pub fn basis(&self) -> &GalerkinBasis {
        &self.basis
    }

    pub fn hamiltonian(&self) -> &dyn Hamiltonian {
        self.ham.as_ref()
    }

    pub fn extended(&self) -> Option<&ExtendedHamiltonian> {
        self.ext.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Frequency sign of every coordinate.
    pub fn signs(&self) -> &[f64] {
        &self.sign
    }

    pub fn to_coords(&self, x: &SpectralPath) -> Result<Vec<f64>, ChordError> {
        if x.space() != self.space {
            return Err(ChordError::InvalidInput("path lives on a different coisotropic space".into()));
        }
        let nf = self.n_f() as i64;
        if x.frequencies().any(|m| m.abs() > nf && x.coeff(m).iter().any(|&v| v != 0.0)) {
            return Err(ChordError::InvalidInput(format!("path has frequencies above N_F = {nf}")));
        }
        Ok(self.basis.to_coords(x))
    }

    pub fn from_coords(&self, u: &[f64]) -> SpectralPath {
        self.basis.from_coords(u)
    }

    /// The path at every quadrature node, node-major.
    pub(crate) fn nodes(&self, u: &[f64]) -> Vec<f64> {
        let n = self.space.n();
        let d2 = 2 * n;
        let q = self.rule.len();
        let mut xs = vec![0.0; q * d2];
        for (e, &ue) in u.iter().enumerate() {
            if ue == 0.0 {
                continue;
            }
            let z = ue * self.inv_sqrt_w[e];
            let (j, is_y) = self.plane[e];
            let c = &self.cos[e * q..(e + 1) * q];
            let s = &self.sin[e * q..(e + 1) * q];
            for qi in 0..q {
                let row = &mut xs[qi * d2..(qi + 1) * d2];
                if is_y {
                    row[j] -= s[qi] * z;
                    row[n + j] += c[qi] * z;
                } else {
                    row[j] += c[qi] * z;
                    row[n + j] += s[qi] * z;
                }
            }
        }
        xs
    }

    pub fn a_u(&self, u: &[f64]) -> f64 {
        0.5 * u.iter().zip(&self.sign).map(|(v, s)| s * v * v).sum::<f64>()
    }

    pub fn b_u(&self, u: &[f64]) -> f64 {
        let d2 = self.space.ambient_dim();
        let xs = self.nodes(u);
        self.rule.weights.iter().enumerate().map(|(qi, w)| w * self.ham.value(&xs[qi * d2..(qi + 1) * d2])).sum()
    }

    pub fn value_u(&self, u: &[f64]) -> f64 {
        self.a_u(u) - self.b_u(u)
    }

    /// `∇b` in coordinates: `G_m/√w_m` with `G_m = Σ_q w_q (e^{−mπJt_q} ∇H̄(x(t_q)))`
    /// restricted to the allowed components.
    pub fn grad_b_u(&self, u: &[f64]) -> Vec<f64> {
        let n = self.space.n();
        let d2 = 2 * n;
        let q = self.rule.len();
        let xs = self.nodes(u);
        let mut gs = vec![0.0; q * d2];
        for qi in 0..q {
            self.ham.gradient(&xs[qi * d2..(qi + 1) * d2], &mut gs[qi * d2..(qi + 1) * d2]);
            let w = self.rule.weights[qi];
            gs[qi * d2..(qi + 1) * d2].iter_mut().for_each(|g| *g *= w);
        }
        let mut out = vec![0.0; u.len()];
        for (e, o) in out.iter_mut().enumerate() {
            let (j, is_y) = self.plane[e];
            let c = &self.cos[e * q..(e + 1) * q];
            let s = &self.sin[e * q..(e + 1) * q];
            let mut acc = 0.0;
            for qi in 0..q {
                let (gx, gy) = (gs[qi * d2 + j], gs[qi * d2 + n + j]);
                acc += if is_y { -s[qi] * gx + c[qi] * gy } else { c[qi] * gx + s[qi] * gy };
            }
            *o = acc * self.inv_sqrt_w[e];
        }
        out
    }

    pub fn gradient_u(&self, u: &[f64]) -> Vec<f64> {
        let mut g = self.grad_b_u(u);
        for ((gi, ui), s) in g.iter_mut().zip(u).zip(&self.sign) {
            *gi = s * ui - *gi;
        }
        g
    }

    /// One exponential-Euler step of `u̇ = −∇Φ(u)` with `∇b` frozen:
    /// `e^{−dt}` on `X⁺`, `e^{dt}` on `X⁻`, explicit Euler on `X⁰`.
    pub fn step_u(&self, u: &[f64], dt: f64) -> Vec<f64> {
        let gb = self.grad_b_u(u);
        let (grow, decay) = (dt.exp_m1(), -(-dt).exp_m1());
        u.iter()
            .zip(&gb)
            .zip(&self.sign)
            .map(|((&x, &g), &s)| {
                if s > 0.0 {
                    x - decay * x + decay * g
                } else if s < 0.0 {
                    x + grow * x + grow * g
                } else {
                    x + dt * g
                }
            })
            .collect()
    }

    pub fn phi_value(&self, x: &SpectralPath) -> Result<f64, ChordError> {
        Ok(self.value_u(&self.to_coords(x)?))
    }

    /// `∇Φ = x⁺ − x⁻ − ∇b` as a path (the Riesz representative in the solver
    /// metric).
    pub fn phi_gradient(&self, x: &SpectralPath) -> Result<SpectralPath, ChordError> {
        Ok(self.from_coords(&self.gradient_u(&self.to_coords(x)?)))
    }

    /// One flow step; `StepRejected` if `Φ` rises by more than [`TOL_MONO`].
    pub fn flow_step(&self, x: &SpectralPath, dt: f64) -> Result<SpectralPath, ChordError> {
        if !(dt > 0.0) {
            return Err(ChordError::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        let u = self.to_coords(x)?;
        let phi0 = self.value_u(&u);
        let v = self.step_u(&u, dt);
        let phi1 = self.value_u(&v);
        if phi1 > phi0 + TOL_MONO {
            return Err(ChordError::StepRejected { dt, increase: phi1 - phi0 });
        }
        Ok(self.from_coords(&v))
    }

    /// `max_t |ẋ − J∇H̄(x)|` on `grid + 1` equally spaced times.
    pub fn ode_residual(&self, x: &SpectralPath, grid: usize) -> f64 {
        let d2 = self.space.ambient_dim();
        let (mut p, mut dp, mut g, mut jg) = (vec![0.0; d2], vec![0.0; d2], vec![0.0; d2], vec![0.0; d2]);
        (0..=grid)
            .map(|i| {
                let t = i as f64 / grid as f64;
                x.evaluate_into(t, &mut p);
                x.derivative_into(t, &mut dp);
                self.ham.gradient(&p, &mut g);
                j_apply(&g, &mut jg);
                dp.iter().zip(&jg).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Step-size control for [`flow_for`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub dt_max: f64,
    pub dt_min: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { dt_max: 0.25, dt_min: 1e-12 }
    }
}

/// State of one trajectory of the flow driver.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub u: Vec<f64>,
    pub phi: f64,
    pub dt: f64,
    pub accepted: usize,
    pub rejected: usize,
    /// Largest increase of `Φ` over an accepted step.
    pub max_increase: f64,
}

impl FlowState {
    pub fn new(f: &ActionFunctional, u: Vec<f64>) -> Self {
        let phi = f.value_u(&u);
        Self { u, phi, dt: 0.01, accepted: 0, rejected: 0, max_increase: f64::NEG_INFINITY }
    }
}

/// Advances `state` by flow time `duration`, halving `dt` whenever a step
/// would raise `Φ` by more than [`TOL_MONO`]. Stops early once `Φ` drops
/// below `stop_below`.
pub fn flow_for(
    f: &ActionFunctional,
    state: &mut FlowState,
    duration: f64,
    opts: &FlowOptions,
    stop_below: f64,
) -> Result<(), ChordError> {
    let mut t = 0.0;
    while t < duration {
        if state.phi < stop_below {
            return Ok(());
        }
        let dt = state.dt.min(duration - t).min(opts.dt_max);
        let v = f.step_u(&state.u, dt);
        let phi = f.value_u(&v);
        if phi.is_finite() && phi <= state.phi + TOL_MONO {
            state.max_increase = state.max_increase.max(phi - state.phi);
            state.u = v;
            state.phi = phi;
            state.accepted += 1;
            t += dt;
            state.dt = (state.dt * 1.25).min(opts.dt_max);
        } else {
            state.rejected += 1;
            state.dt = dt * 0.5;
            if state.dt < opts.dt_min {
                return Err(ChordError::StepRejected { dt, increase: phi - state.phi });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PhasePoint;
    use crate::hamiltonian::{default_eps, RadialHamiltonian, RadialProfile};
    use crate::spectral::action_form_a;
    use approx::assert_abs_diff_eq;
    use proptest::{prop_assert, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Zero(usize);

    impl Hamiltonian for Zero {
        fn dim(&self) -> usize {
            self.0
        }
        fn value(&self, _: &[f64]) -> f64 {
            0.0
        }
        fn gradient(&self, _: &[f64], out: &mut [f64]) {
            out.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    fn ext(n: usize, k: usize, height: f64) -> ExtendedHamiltonian {
        let space = CoisoSpace::new(n, k).unwrap();
        let mut a = vec![0.0; 2 * n];
        a[2 * n - 1] = if n > 1 { -0.5 } else { 0.0 };
        let inner = RadialHamiltonian::new(&space, PhasePoint(a), RadialProfile::smooth_step(0.1, 0.9, height).unwrap())
            .unwrap();
        ExtendedHamiltonian::new(space, inner, default_eps(height).unwrap(), None).unwrap()
    }

    fn random_u(f: &ActionFunctional, rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
        f.basis()
            .entries()
            .iter()
            .map(|&(m, _)| scale * rng.gen_range(-1.0..1.0) / (1.0 + m.abs() as f64))
            .collect()
    }

    #[test]
    fn zero_and_plateau_values() {
        let f = ActionFunctional::new(ext(1, 0, 2.0), 8, None).unwrap();
        let space = f.space();
        let zero = SpectralPath::zeros(space, 8).unwrap();
        assert_eq!(f.phi_value(&zero).unwrap(), 0.0);
        // |p|² = 0.95: plateau of H and inside {q_Π ≤ 1}.
        let c = SpectralPath::constant(space, 8, &PhasePoint(vec![0.95f64.sqrt(), 0.0])).unwrap();
        assert_abs_diff_eq!(f.phi_value(&c).unwrap(), -2.0, epsilon = 1e-13);
    }

    #[test]
    fn zero_hamiltonian_reduces_to_action_form() {
        let space = CoisoSpace::new(2, 1).unwrap();
        let f = ActionFunctional::with_hamiltonian(space, Arc::new(Zero(4)), 6, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let u = random_u(&f, &mut rng, 1.0);
            let x = f.from_coords(&u);
            assert_abs_diff_eq!(f.phi_value(&x).unwrap(), action_form_a(&x, &x).unwrap(), epsilon = 1e-12);
            let g = f.gradient_u(&u);
            for ((gi, ui), &(m, _)) in g.iter().zip(&u).zip(f.basis().entries()) {
                let expect = match m.signum() {
                    1 => *ui,
                    -1 => -ui,
                    _ => 0.0,
                };
                assert_eq!(*gi, expect);
            }
        }
    }

    #[test]
    fn step_without_nonlinearity_is_exact() {
        let space = CoisoSpace::new(1, 0).unwrap();
        let f = ActionFunctional::with_hamiltonian(space, Arc::new(Zero(2)), 4, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_u(&f, &mut rng, 1.0);
        let dt = 0.3;
        let v = f.step_u(&u, dt);
        for ((a, b), &(m, _)) in u.iter().zip(&v).zip(f.basis().entries()) {
            let expect = a * (-(m.signum() as f64) * dt).exp();
            assert_abs_diff_eq!(*b, expect, epsilon = 1e-15);
        }
        let x = f.from_coords(&u);
        assert!(f.flow_step(&x, dt).is_ok());
        assert!(matches!(f.flow_step(&x, 0.0), Err(ChordError::InvalidInput(_))));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for trial in 0..200 {
            let (n, k) = [(1, 0), (2, 0), (2, 1)][trial % 3];
            let f = ActionFunctional::new(ext(n, k, 2.0), 4, None).unwrap();
            let u = random_u(&f, &mut rng, 1.5);
            let v = random_u(&f, &mut rng, 1.0);
            let g = f.gradient_u(&u);
            let dir: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
            let h = 1e-6;
            let at = |s: f64| f.value_u(&u.iter().zip(&v).map(|(a, b)| a + s * b).collect::<Vec<_>>());
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let rel = (dir - fd).abs() / dir.abs().max(fd.abs()).max(1e-3);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-6, "worst relative FD error {worst:e}");
    }

    #[test]
    fn rejects_out_of_range_paths() {
        let f = ActionFunctional::new(ext(1, 0, 2.0), 4, None).unwrap();
        let mut x = SpectralPath::zeros(f.space(), 6).unwrap();
        x.set_coeff(6, &[1.0, 0.0]).unwrap();
        assert!(matches!(f.phi_value(&x), Err(ChordError::InvalidInput(_))));
        assert!(ActionFunctional::new(ext(1, 0, 2.0), 0, None).is_err());
        let space = CoisoSpace::new(2, 0).unwrap();
        assert!(ActionFunctional::with_hamiltonian(space, Arc::new(Zero(2)), 4, None).is_err());
    }

    #[test]
    fn ode_residual_vanishes_on_exact_orbit() {
        // ρ e⁺ is a time-one orbit when 2 f′(ρ²) = π.
        let e = ext(1, 0, 2.0);
        let s = (1.0 - (1.0 - 4.0 * std::f64::consts::PI / 30.0).sqrt()) / 2.0;
        let rho2 = 0.1 + 0.8 * s;
        let f = ActionFunctional::new(e, 8, None).unwrap();
        let x = SpectralPath::e_plus(f.space(), 8).unwrap().scale(rho2.sqrt());
        assert!(f.ode_residual(&x, 200) < 1e-12);
        let g = f.gradient_u(&f.to_coords(&x).unwrap());
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(24))]

        #[test]
        fn flow_never_raises_phi(seed in 0u64..1000, scale in 0.1f64..4.0) {
            let f = ActionFunctional::new(ext(2, 1, 2.0), 4, None).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_u(&f, &mut rng, scale);
            let mut st = FlowState::new(&f, u);
            let mut prev = st.phi;
            for _ in 0..5 {
                flow_for(&f, &mut st, 0.2, &FlowOptions::default(), f64::NEG_INFINITY).unwrap();
                prop_assert!(st.phi <= prev + 5.0 * TOL_MONO);
                prev = st.phi;
            }
            prop_assert!(st.max_increase <= TOL_MONO);
        }

        #[test]
        fn coordinates_round_trip(seed in 0u64..1000) {
            let f = ActionFunctional::new(ext(2, 1, 2.0), 5, None).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_u(&f, &mut rng, 1.0);
            let back = f.to_coords(&f.from_coords(&u)).unwrap();
            prop_assert!(u.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-14));
        }
    }
}
