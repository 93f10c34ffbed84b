//! Simple radial Hamiltonians, the anisotropic form `q_Π`, the extended
//! Hamiltonian `H̄` and the normalization Hamiltonian that moves the origin.

mod profile;

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{dot, CoisoSpace, PhasePoint, TOL_LEAF};

pub use profile::{ProfileMode, RadialProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HamiltonianError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("profile constraint violated: {0}")]
    ConstraintViolated(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("center must have length {expected} with only y_n nonzero")]
    InvalidCenter { expected: usize },
    #[error("no N_scale up to {max} keeps the support of dH inside q_Π < 1")]
    SupportNotContained { max: f64 },
    #[error("invalid target: {0}")]
    InvalidTarget(String),
}

/// An autonomous Hamiltonian on ℝ^{2n} with a continuous gradient.
pub trait Hamiltonian: Send + Sync {
    /// Ambient dimension `2n`.
    fn dim(&self) -> usize;
    fn value(&self, p: &[f64]) -> f64;
    fn gradient(&self, p: &[f64], out: &mut [f64]);
}

/// A nonnegative Hamiltonian, zero on an open set and equal to `m(H)`
/// outside a compact set.
pub trait SimpleHamiltonian: Hamiltonian {
    fn m_h(&self) -> f64;

    /// The shell `lo ≤ |x − center| ≤ hi` containing the support of `dH`.
    fn support_shell(&self) -> (PhasePoint, f64, f64);

    fn as_radial(&self) -> Option<&RadialHamiltonian> {
        None
    }
}

pub fn eval_h(ham: &dyn Hamiltonian, p: &PhasePoint) -> f64 {
    ham.value(&p.0)
}

pub fn grad_hbar(ext: &ExtendedHamiltonian, p: &PhasePoint) -> PhasePoint {
    grad_h(ext, p)
}

pub fn grad_h(ham: &dyn Hamiltonian, p: &PhasePoint) -> PhasePoint {
    let mut out = vec![0.0; p.0.len()];
    ham.gradient(&p.0, &mut out);
    PhasePoint(out)
}

/// `H(x) = f(|x − a|²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialHamiltonian {
    pub center: PhasePoint,
    pub profile: RadialProfile,
}

impl RadialHamiltonian {
    pub fn new(space: &CoisoSpace, center: PhasePoint, profile: RadialProfile) -> Result<Self, HamiltonianError> {
        let dim = space.ambient_dim();
        let ok = center.0.len() == dim && center.0.iter().enumerate().all(|(i, &v)| i == dim - 1 || v == 0.0);
        if !ok {
            return Err(HamiltonianError::InvalidCenter { expected: dim });
        }
        profile.validate()?;
        Ok(Self { center, profile })
    }

    /// `|a|`.
    pub fn abs_a(&self) -> f64 {
        self.center.norm()
    }

    pub fn radius2(&self, p: &[f64]) -> f64 {
        p.iter().zip(&self.center.0).map(|(x, a)| (x - a) * (x - a)).sum()
    }

    /// The rotation speed `b = 2 f′(|x − a|²)` of the orbit through `p`.
    pub fn angular_speed(&self, p: &[f64]) -> f64 {
        2.0 * self.profile.deriv(self.radius2(p))
    }
}

impl Hamiltonian for RadialHamiltonian {
    fn dim(&self) -> usize {
        self.center.0.len()
    }

    fn value(&self, p: &[f64]) -> f64 {
        self.profile.value(self.radius2(p))
    }

    fn gradient(&self, p: &[f64], out: &mut [f64]) {
        let b = self.angular_speed(p);
        for ((o, x), a) in out.iter_mut().zip(p).zip(&self.center.0) {
            *o = b * (x - a);
        }
    }
}

impl SimpleHamiltonian for RadialHamiltonian {
    fn m_h(&self) -> f64 {
        self.profile.plateau().unwrap_or(f64::INFINITY)
    }

    fn support_shell(&self) -> (PhasePoint, f64, f64) {
        let lo = self.profile.zero_until().unwrap_or(0.0).max(0.0).sqrt();
        let hi = self.profile.constant_from().map_or(f64::INFINITY, |u| u.max(0.0).sqrt());
        (self.center.clone(), lo, hi)
    }

    fn as_radial(&self) -> Option<&RadialHamiltonian> {
        Some(self)
    }
}

/// Weight of coordinate plane `i` in `q_Π` (the last plane is handled by `q₂`).
fn plane_weight(space: &CoisoSpace, n_scale: f64, i: usize) -> f64 {
    let inv = 1.0 / (n_scale * n_scale);
    if i < space.k() {
        2.0 * inv
    } else {
        inv
    }
}

/// `q₂(x, y) = x² + y²` for `y ≥ 0` and `x²` for `y < 0`.
pub fn q2(x: f64, y: f64) -> f64 {
    if y >= 0.0 {
        x * x + y * y
    } else {
        x * x
    }
}

/// `q_Π(p) = q₂(x_n, y_n) + N⁻² Σ_{k<i<n} (x_i² + y_i²) + 2N⁻² Σ_{i≤k} (x_i² + y_i²)`.
pub fn q_pi_raw(space: &CoisoSpace, n_scale: f64, p: &[f64]) -> f64 {
    let n = space.n();
    let mut acc = q2(p[n - 1], p[2 * n - 1]);
    for i in 0..n - 1 {
        acc += plane_weight(space, n_scale, i) * (p[i] * p[i] + p[n + i] * p[n + i]);
    }
    acc
}

pub fn q_pi(space: &CoisoSpace, n_scale: f64, p: &PhasePoint) -> f64 {
    q_pi_raw(space, n_scale, &p.0)
}

pub fn grad_q_pi_raw(space: &CoisoSpace, n_scale: f64, p: &[f64], out: &mut [f64]) {
    let n = space.n();
    for i in 0..n - 1 {
        let w = 2.0 * plane_weight(space, n_scale, i);
        out[i] = w * p[i];
        out[n + i] = w * p[n + i];
    }
    out[n - 1] = 2.0 * p[n - 1];
    out[2 * n - 1] = if p[2 * n - 1] >= 0.0 { 2.0 * p[2 * n - 1] } else { 0.0 };
}

/// `Q(p) = (π/2 + ε)·q_Π(p)`.
pub fn comparison_q(space: &CoisoSpace, eps: f64, n_scale: f64, p: &PhasePoint) -> f64 {
    (FRAC_PI_2 + eps) * q_pi(space, n_scale, p)
}

/// Default `ε = 0.05·(m(H) − π/2)` clamped to `(0, 0.1]`; `None` when
/// `m(H) ≤ π/2`.
pub fn default_eps(m_h: f64) -> Option<f64> {
    let e = 0.05 * (m_h - FRAC_PI_2);
    (e > 0.0).then(|| e.min(0.1))
}

/// `H̄ = H` on `{q_Π ≤ 1}` and `f(q_Π)` elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedHamiltonian {
    pub space: CoisoSpace,
    pub inner: RadialHamiltonian,
    pub profile: RadialProfile,
    pub n_scale: f64,
    /// `π/2 + ε`: the slope of the profile at infinity.
    pub sigma: f64,
}

impl ExtendedHamiltonian {
    /// The standard extension; needs `m(H) > π/2 + ε`. `n_scale = None`
    /// selects it automatically.
    pub fn new(
        space: CoisoSpace,
        inner: RadialHamiltonian,
        eps: f64,
        n_scale: Option<f64>,
    ) -> Result<Self, HamiltonianError> {
        let m_h = inner.m_h();
        let mut profile = RadialProfile::extension(m_h, eps)?;
        Self::assemble(space, inner, &mut profile, n_scale, FRAC_PI_2 + eps)
    }

    /// A continuation for `m(H) ≤ π/2` with far slope `slope < π/2`.
    pub fn subcritical(
        space: CoisoSpace,
        inner: RadialHamiltonian,
        slope: f64,
        n_scale: Option<f64>,
    ) -> Result<Self, HamiltonianError> {
        if slope >= FRAC_PI_2 {
            return Err(HamiltonianError::InvalidParameter(format!("subcritical slope {slope} must be below π/2")));
        }
        let mut profile = RadialProfile::subcritical_extension(inner.m_h(), slope)?;
        Self::assemble(space, inner, &mut profile, n_scale, slope)
    }

    fn assemble(
        space: CoisoSpace,
        inner: RadialHamiltonian,
        profile: &mut RadialProfile,
        n_scale: Option<f64>,
        sigma: f64,
    ) -> Result<Self, HamiltonianError> {
        if inner.center.0.len() != space.ambient_dim() {
            return Err(HamiltonianError::InvalidCenter { expected: space.ambient_dim() });
        }
        if !inner.m_h().is_finite() {
            return Err(HamiltonianError::InvalidParameter("inner Hamiltonian has no plateau".into()));
        }
        let n_scale = match n_scale {
            Some(v) if v > 0.0 => v,
            Some(v) => return Err(HamiltonianError::InvalidParameter(format!("N_scale must be positive, got {v}"))),
            None => select_n_scale(&space, &inner)?,
        };
        profile.n_scale = Some(n_scale);
        profile.a = inner.center.0.clone();
        Ok(Self { space, inner, profile: profile.clone(), n_scale, sigma })
    }

    pub fn eps(&self) -> f64 {
        self.sigma - FRAC_PI_2
    }

    pub fn m_h(&self) -> f64 {
        self.inner.m_h()
    }

    pub fn q_pi(&self, p: &[f64]) -> f64 {
        q_pi_raw(&self.space, self.n_scale, p)
    }

    /// `C` with `H̄ ≥ σ·q_Π − C` everywhere; infinite if none exists.
    pub fn growth_constant(&self) -> f64 {
        // Inside {q_Π ≤ 1}: H̄ ≥ 0 ≥ σ q_Π − σ. Outside: sup of σ r − f(r).
        let far = *self.profile.knots.last().expect("nonempty");
        let far_slope = self.profile.deriv(far + 1.0);
        if far_slope < self.sigma - 1e-15 {
            return f64::INFINITY;
        }
        let outside = self
            .profile
            .grid(1.0, far, 256)
            .into_iter()
            .map(|r| self.sigma * r - self.profile.value(r))
            .fold(f64::NEG_INFINITY, f64::max);
        self.sigma.max(outside)
    }

    /// `c_q` with `q_Π(z) ≤ c_q |z|²`.
    fn q_bound(&self) -> f64 {
        let inv = 1.0 / (self.n_scale * self.n_scale);
        1.0f64.max(2.0 * inv)
    }

    /// Lipschitz constant of `∇H̄` from second-derivative bounds of both
    /// profiles.
    pub fn gradient_lipschitz_bound(&self) -> f64 {
        let p = &self.inner.profile;
        let hi = p.constant_from().unwrap_or(4.0).max(p.knots[p.knots.len() - 1]);
        let inner = p
            .grid(0.0, hi, 128)
            .into_iter()
            .map(|u| {
                let (_, d1, d2) = p.eval_all(u);
                let d2l = p.second_deriv(u - 1e-12 * (1.0 + u));
                2.0 * d1.abs() + 4.0 * u * d2.abs().max(d2l.abs())
            })
            .fold(0.0, f64::max);
        let cq = self.q_bound();
        let e = &self.profile;
        let far = e.knots[e.knots.len() - 1];
        let outer = e
            .grid(1.0, far + 1.0, 128)
            .into_iter()
            .map(|r| {
                let (_, d1, d2) = e.eval_all(r);
                let d2l = e.second_deriv(r - 1e-12 * (1.0 + r));
                4.0 * cq * r * d2.abs().max(d2l.abs()) + 2.0 * cq * d1.abs()
            })
            .fold(0.0, f64::max);
        inner.max(outer).max(2.0 * cq * self.sigma)
    }

    /// `M` with `H̄(z) ≤ M|z|²`; finite when `H` vanishes near the origin.
    pub fn quadratic_bound(&self) -> f64 {
        let (_, lo, _) = self.inner.support_shell();
        let cq = self.q_bound();
        // Below r0 both H and the extension vanish.
        let r0 = (lo - self.inner.abs_a()).min(cq.recip().sqrt());
        if r0 <= 0.0 {
            return f64::INFINITY;
        }
        let big = |rho2: f64| self.m_h().max(self.profile.value((cq * rho2).max(1.0)));
        let mut m: f64 = 0.0;
        let mut rho2 = r0 * r0;
        while rho2 < 1e6 {
            m = m.max(big(rho2 * 1.01) / rho2);
            rho2 *= 1.01;
        }
        m.max(cq * self.sigma)
    }
}

impl Hamiltonian for ExtendedHamiltonian {
    fn dim(&self) -> usize {
        self.space.ambient_dim()
    }

    fn value(&self, p: &[f64]) -> f64 {
        let q = self.q_pi(p);
        if q <= 1.0 {
            self.inner.value(p)
        } else {
            self.profile.value(q)
        }
    }

    fn gradient(&self, p: &[f64], out: &mut [f64]) {
        let q = self.q_pi(p);
        if q <= 1.0 {
            self.inner.gradient(p, out);
        } else {
            grad_q_pi_raw(&self.space, self.n_scale, p, out);
            let d = self.profile.deriv(q);
            out.iter_mut().for_each(|v| *v *= d);
        }
    }
}

/// Points on the boundary and interior of the support shell of `dH`.
fn support_samples(inner: &RadialHamiltonian, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let (center, lo, hi) = inner.support_shell();
    let dim = center.0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let dir: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            // Half the samples sit on the outer sphere, where q_Π is largest.
            let r = if i % 2 == 0 { hi } else { lo + (hi - lo) * rng.gen::<f64>() };
            dir.iter().zip(&center.0).map(|(d, c)| c + r * d / len).collect()
        })
        .collect()
}

/// Smallest power of two `N` such that sampled support of `dH` lies in
/// `{q_Π < 1 − 10⁻³}`.
pub fn select_n_scale(space: &CoisoSpace, inner: &RadialHamiltonian) -> Result<f64, HamiltonianError> {
    const MAX: f64 = 1048576.0;
    let (_, _, hi) = inner.support_shell();
    if !hi.is_finite() {
        return Err(HamiltonianError::SupportNotContained { max: MAX });
    }
    let samples = support_samples(inner, 4000, 0x5eed);
    let mut n = 1.0;
    while n <= MAX {
        if samples.iter().all(|p| q_pi_raw(space, n, p) < 1.0 - 1e-3) {
            return Ok(n);
        }
        n *= 2.0;
    }
    Err(HamiltonianError::SupportNotContained { max: MAX })
}

/// `K(z) = ρ(dist²(z, [0, p]))·⟨z, −Jp⟩`; on `{ρ ≡ 1}` its vector field is
/// the constant `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationHamiltonian {
    pub target: PhasePoint,
    pub cutoff: RadialProfile,
}

impl NormalizationHamiltonian {
    fn dist2_and_foot(&self, z: &[f64]) -> (f64, f64) {
        let p = &self.target.0;
        let pp = dot(p, p);
        let lam = if pp > 0.0 { (dot(z, p) / pp).clamp(0.0, 1.0) } else { 0.0 };
        let d2 = z.iter().zip(p).map(|(a, b)| (a - lam * b).powi(2)).sum();
        (d2, lam)
    }

    /// `⟨z, −Jp⟩ = Σ x_i p_{y_i} − y_i p_{x_i}`.
    fn linear_part(&self, z: &[f64]) -> f64 {
        let p = &self.target.0;
        let n = p.len() / 2;
        (0..n).map(|i| z[i] * p[n + i] - z[n + i] * p[i]).sum()
    }
}

impl Hamiltonian for NormalizationHamiltonian {
    fn dim(&self) -> usize {
        self.target.0.len()
    }

    fn value(&self, z: &[f64]) -> f64 {
        let (d2, _) = self.dist2_and_foot(z);
        self.cutoff.value(d2) * self.linear_part(z)
    }

    fn gradient(&self, z: &[f64], out: &mut [f64]) {
        let p = &self.target.0;
        let n = p.len() / 2;
        let (d2, lam) = self.dist2_and_foot(z);
        let (rho, drho, _) = self.cutoff.eval_all(d2);
        let lin = self.linear_part(z);
        for i in 0..n {
            // −Jp = (p_y, −p_x).
            out[i] = rho * p[n + i];
            out[n + i] = -rho * p[i];
        }
        if drho != 0.0 && lin != 0.0 {
            for (o, (zi, pi)) in out.iter_mut().zip(z.iter().zip(p)) {
                *o += drho * 2.0 * (zi - lam * pi) * lin;
            }
        }
    }
}

/// A cutoff equal to one within distance `0.25` of the segment and zero
/// beyond `0.5`.
pub fn default_cutoff() -> RadialProfile {
    RadialProfile::cutoff(0.0625, 0.25).expect("valid constants")
}

/// Builds `K` whose time-one flow maps `0` to `p_target` and preserves
/// `ℝ^{n,k}`.
///
/// Tangency needs `K` to vanish on `ℝ^{n,k}`, which holds exactly when the
/// target lies in `V₀`; targets with a `V₁` component are rejected.
pub fn normalization_hamiltonian(
    space: &CoisoSpace,
    p_target: &PhasePoint,
    cutoff: RadialProfile,
) -> Result<NormalizationHamiltonian, HamiltonianError> {
    if p_target.0.len() != space.ambient_dim() {
        return Err(HamiltonianError::InvalidTarget(format!(
            "target has length {}, expected {}",
            p_target.0.len(),
            space.ambient_dim()
        )));
    }
    if !space.contains(p_target, TOL_LEAF) {
        return Err(HamiltonianError::InvalidTarget("target is not on the coisotropic subspace".into()));
    }
    if space.v1_indices().any(|i| p_target.0[i] != 0.0) {
        return Err(HamiltonianError::InvalidTarget(
            "target has a V₁ component; no compactly supported Hamiltonian preserving ℝ^{n,k} moves 0 there".into(),
        ));
    }
    if !(cutoff.value(0.0) == 1.0 && cutoff.deriv(0.0) == 0.0 && cutoff.plateau() == Some(0.0)) {
        return Err(HamiltonianError::InvalidProfile("cutoff must be 1 near 0 and compactly supported".into()));
    }
    Ok(NormalizationHamiltonian { target: space.project_onto(p_target), cutoff })
}
