//! Capacity bounds for coisotropic balls and cylinders: the area function
//! `𝒜`, the radius `R(A)`, the regions `B`, `Z` and `U(A)`, the lower-bound
//! witness, the non-squeezing verdict and the axiom property checks.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    integrate_field, is_admissible, return_time_with, AdmissibilityReport, AdmissibilityStatus, DynamicsError,
    ReturnOptions, ReturnTime, SamplerConfig,
};
use crate::geometry::{j_apply, CoisoSpace, PhasePoint};
use crate::hamiltonian::{Hamiltonian, HamiltonianError, RadialHamiltonian, RadialProfile, SimpleHamiltonian};
use crate::quadrature::integrate_adaptive;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapacityError {
    #[error("argument outside its domain: {0}")]
    Domain(String),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("witness Hamiltonian is not certified admissible ({status:?})")]
    NotAdmissible { status: AdmissibilityStatus, report: Box<AdmissibilityReport> },
}

/// `𝒜(r) = arcsin r − r√(1 − r²)`, the area of the cap of the unit disk above
/// height `√(1 − r²)`.
pub fn area_a(r: f64) -> Result<f64, CapacityError> {
    if !(0.0..=1.0).contains(&r) {
        return Err(CapacityError::Domain(format!("area_A needs r in [0, 1], got {r}")));
    }
    Ok(r.asin() - r * (1.0 - r * r).sqrt())
}

/// `∫_{|a|²}^1 arccos(|a|/√t) dt` by adaptive Gauss–Kronrod after
/// `t = |a|²/cos²α`. `NaN` outside `[0, 1]`.
pub fn arccos_integral(abs_a: f64) -> f64 {
    if !(0.0..=1.0).contains(&abs_a) {
        return f64::NAN;
    }
    if abs_a == 0.0 {
        return FRAC_PI_2;
    }
    let c2 = abs_a * abs_a;
    let upper = abs_a.acos();
    if abs_a < 0.05 {
        // The substituted integrand grows like cos⁻³ near π/2; integrate in
        // t instead, splitting off the square-root endpoint.
        let f = |t: f64| (abs_a / t.sqrt()).min(1.0).acos();
        let mid = (c2 + 1.0) * 0.5;
        return integrate_adaptive(f, c2, mid, 5e-11) + integrate_adaptive(f, mid, 1.0, 5e-11);
    }
    integrate_adaptive(
        |al: f64| {
            let c = al.cos();
            2.0 * c2 * al * al.sin() / (c * c * c)
        },
        0.0,
        upper,
        1e-10,
    )
}

/// `R(A) = √(2A/π)`; `NaN` for `A ≤ 0`.
pub fn radius_r(area: f64) -> f64 {
    if area > 0.0 {
        (2.0 * area / PI).sqrt()
    } else {
        f64::NAN
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionKind {
    /// `B(a, radius)`.
    Ball { center: PhasePoint, radius: f64 },
    /// `Z(a, radius) = {x_n² + (y_n − b_n)² ≤ radius²}`.
    Cylinder { center: PhasePoint, radius: f64 },
    /// `U(A) = ℝ^{2n−2} × S(A)`.
    URegion { area: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub kind: RegionKind,
    pub space: CoisoSpace,
}

impl RegionSpec {
    fn check_center(space: &CoisoSpace, center: &PhasePoint, radius: f64) -> Result<(), CapacityError> {
        let dim = space.ambient_dim();
        if center.0.len() != dim || center.0.iter().take(dim - 1).any(|&v| v != 0.0) {
            return Err(CapacityError::Domain(format!(
                "center must be (0, …, 0, b_n) in ℝ^{dim}, got {:?}",
                center.0
            )));
        }
        if !(radius > 0.0) {
            return Err(CapacityError::Domain(format!("radius must be positive, got {radius}")));
        }
        Ok(())
    }

    pub fn ball(space: CoisoSpace, center: PhasePoint, radius: f64) -> Result<Self, CapacityError> {
        Self::check_center(&space, &center, radius)?;
        Ok(Self { kind: RegionKind::Ball { center, radius }, space })
    }

    pub fn cylinder(space: CoisoSpace, center: PhasePoint, radius: f64) -> Result<Self, CapacityError> {
        Self::check_center(&space, &center, radius)?;
        Ok(Self { kind: RegionKind::Cylinder { center, radius }, space })
    }

    pub fn u_region(space: CoisoSpace, area: f64) -> Result<Self, CapacityError> {
        if !(area > 0.0) {
            return Err(CapacityError::Domain(format!("A must be positive, got {area}")));
        }
        Ok(Self { kind: RegionKind::URegion { area }, space })
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        let n = self.space.n();
        let (x, y) = (p[n - 1], p[2 * n - 1]);
        match &self.kind {
            RegionKind::Ball { center, radius } => {
                p.iter().zip(&center.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= radius * radius
            }
            RegionKind::Cylinder { center, radius } => {
                let b = center.0[2 * n - 1];
                x * x + (y - b) * (y - b) <= radius * radius
            }
            RegionKind::URegion { area } => {
                let q = if y >= 0.0 { x * x + y * y } else { x * x };
                0.5 * PI * q <= *area
            }
        }
    }

    /// Membership in the coisotropic part `region ∩ ℝ^{n,k}`.
    pub fn contains_coisotropic(&self, p: &[f64]) -> bool {
        self.space.normal_defect(p) == 0.0 && self.contains(p)
    }

    /// Radius of the coisotropic slice through `ℝ^{n,k}`: `√(radius² − b_n²)`
    /// for balls, `|x_n|`-half-width for cylinders and `R(A)` for `U(A)`.
    pub fn coisotropic_radius(&self) -> f64 {
        let n = self.space.n();
        match &self.kind {
            RegionKind::Ball { center, radius } | RegionKind::Cylinder { center, radius } => {
                let b = center.0[2 * n - 1];
                (radius * radius - b * b).max(0.0).sqrt()
            }
            RegionKind::URegion { area } => radius_r(*area),
        }
    }
}

/// Parameters of the canonical lower-bound profile and its certification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LowerBoundOptions {
    pub eps: f64,
    pub delta: f64,
    pub n_knots: usize,
    pub sampler: SamplerConfig,
}

impl Default for LowerBoundOptions {
    fn default() -> Self {
        Self { eps: 1e-3, delta: 1e-3, n_knots: 400, sampler: SamplerConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityWitness {
    pub profile: RadialProfile,
    pub m_h: f64,
    pub admissibility: AdmissibilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub abs_a: f64,
    /// Radius of the coisotropic ball, `√(1 − |a|²)`.
    pub r: f64,
    /// `𝒜(r)`.
    pub lower: f64,
    /// `π/2`, the bound for `(U, U^{n,k})`.
    pub upper: f64,
    pub minimax_estimate: Option<f64>,
    pub witness: CapacityWitness,
}

/// Certifies `H = f(|x − a|²)` and wraps it in a report for
/// `(B(a, 1), B^{n,k}(r))`.
pub fn capacity_report_for(
    space: &CoisoSpace,
    a_center: &PhasePoint,
    profile: RadialProfile,
    sampler: &SamplerConfig,
) -> Result<CapacityReport, CapacityError> {
    let ham = RadialHamiltonian::new(space, a_center.clone(), profile)?;
    let abs_a = ham.abs_a();
    if abs_a >= 1.0 {
        return Err(CapacityError::Domain(format!("|a| must be below 1, got {abs_a}")));
    }
    let r = (1.0 - abs_a * abs_a).sqrt();
    let admissibility = is_admissible(space, &ham, sampler)?;
    if admissibility.status != AdmissibilityStatus::Certified {
        return Err(CapacityError::NotAdmissible { status: admissibility.status, report: Box::new(admissibility) });
    }
    Ok(CapacityReport {
        abs_a,
        r,
        lower: area_a(r)?,
        upper: FRAC_PI_2,
        minimax_estimate: None,
        witness: CapacityWitness { m_h: ham.m_h(), profile: ham.profile, admissibility },
    })
}

/// Builds the canonical admissible profile for `(B(a, 1), B^{n,k}(r))`,
/// `r² = 1 − |a|²`, and certifies it.
pub fn lower_bound_capacity(
    space: &CoisoSpace,
    a_center: &PhasePoint,
    opts: &LowerBoundOptions,
) -> Result<CapacityReport, CapacityError> {
    let abs_a = a_center.norm();
    let profile = RadialProfile::lower_bound_canonical(abs_a, opts.eps, opts.delta, opts.n_knots)?;
    profile.check_lower_bound(abs_a, opts.eps)?;
    capacity_report_for(space, a_center, profile, &opts.sampler)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Obstructed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonsqueezeReport {
    pub r: f64,
    pub area: f64,
    pub radius_bound: f64,
    pub verdict: Verdict,
    /// `𝒜(r)` and `𝒜(min(R(A), 1))`, when `r ≤ 1`.
    pub area_r: Option<f64>,
    pub area_bound: Option<f64>,
    pub reasoning: String,
}

/// Whether `(B(α, 1), B^{n,k}_α(r))` may embed into `(U(A), U^{n,k}(A))`:
/// `Consistent` iff `r ≤ R(A)`, up to four ulps.
pub fn nonsqueeze_check(r: f64, area: f64) -> Result<NonsqueezeReport, CapacityError> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(CapacityError::Domain(format!("r must be finite and nonnegative, got {r}")));
    }
    if !(area > 0.0) || !area.is_finite() {
        return Err(CapacityError::Domain(format!("A must be finite and positive, got {area}")));
    }
    let big_r = radius_r(area);
    let verdict = if r <= big_r * (1.0 + 4.0 * f64::EPSILON) { Verdict::Consistent } else { Verdict::Obstructed };
    let (area_r, area_bound) = if r <= 1.0 {
        (Some(area_a(r)?), Some(area_a(big_r.min(1.0))?))
    } else {
        (None, None)
    };
    let chain = match (area_r, area_bound) {
        (Some(ar), Some(ab)) => format!(
            "𝒜(r) = {ar:.12} ≤ c(B, B^{{n,k}}) by the lower-bound witness; monotonicity under the embedding and \
             conformal rescaling of U(A) to U(π/2) give c(U(A), U^{{n,k}}(A)) with bound 𝒜(R(A)) = {ab:.12}; \
             𝒜 is strictly increasing, so the chain holds iff r ≤ R(A)"
        ),
        _ => "r > 1 exceeds the radius of every coisotropic slice of the unit ball".to_string(),
    };
    let reasoning = match verdict {
        Verdict::Consistent => format!("r = {r} ≤ R(A) = {big_r}: {chain}; no obstruction"),
        Verdict::Obstructed => format!("r = {r} > R(A) = {big_r}: {chain}; no such embedding exists"),
    };
    Ok(NonsqueezeReport { r, area, radius_bound: big_r, verdict, area_r, area_bound, reasoning })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaRow {
    pub r: f64,
    pub area: f64,
    /// `arccos_integral(√(1 − r²))`, which must agree with `area`.
    pub quadrature: f64,
}

pub fn area_table(grid: &[f64]) -> Result<Vec<AreaRow>, CapacityError> {
    grid.iter()
        .map(|&r| {
            Ok(AreaRow { r, area: area_a(r)?, quadrature: arccos_integral((1.0 - r * r).max(0.0).sqrt()) })
        })
        .collect()
}

/// `c·H(ψ⁻¹(x))` for an affine symplectic `ψ(x) = Mx + v`.
struct Transformed {
    inner: Arc<dyn Hamiltonian>,
    scale: f64,
    /// `M⁻¹`, row-major.
    m_inv: Vec<f64>,
    shift: Vec<f64>,
}

impl Transformed {
    fn scaled(inner: Arc<dyn Hamiltonian>, scale: f64) -> Self {
        let d = inner.dim();
        let mut m_inv = vec![0.0; d * d];
        (0..d).for_each(|i| m_inv[i * d + i] = 1.0);
        Self { inner, scale, m_inv, shift: vec![0.0; d] }
    }

    fn pull_back(&self, p: &[f64]) -> Vec<f64> {
        let d = p.len();
        (0..d).map(|i| (0..d).map(|j| self.m_inv[i * d + j] * (p[j] - self.shift[j])).sum()).collect()
    }
}

impl Hamiltonian for Transformed {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, p: &[f64]) -> f64 {
        self.scale * self.inner.value(&self.pull_back(p))
    }

    fn gradient(&self, p: &[f64], out: &mut [f64]) {
        let d = p.len();
        let mut g = vec![0.0; d];
        self.inner.gradient(&self.pull_back(p), &mut g);
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.scale * (0..d).map(|i| self.m_inv[i * d + j] * g[i]).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomCheck {
    pub name: String,
    pub n_orbits: usize,
    pub max_deviation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub tol: f64,
    /// Starts whose orbit under `H` returns to its leaf by the horizon.
    pub n_finite_returns: usize,
    pub checks: Vec<AxiomCheck>,
}

impl AxiomReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn return_deviation(a: ReturnTime, b: ReturnTime) -> f64 {
    match (a, b) {
        (ReturnTime::Finite(x), ReturnTime::Finite(y)) => (x - y).abs(),
        (x, y) if x == y => 0.0,
        _ => f64::INFINITY,
    }
}

/// State and action `∫ ½⟨∇H, x⟩ − H` after time `t`.
fn orbit_with_action(ham: &dyn Hamiltonian, x0: &[f64], t: f64, tol: f64) -> Result<Vec<f64>, DynamicsError> {
    let d = x0.len();
    let field = |s: &[f64], out: &mut [f64]| {
        let mut g = vec![0.0; d];
        ham.gradient(&s[..d], &mut g);
        j_apply(&g, &mut out[..d]);
        out[d] = 0.5 * g.iter().zip(&s[..d]).map(|(a, b)| a * b).sum::<f64>() - ham.value(&s[..d]);
    };
    let mut y0 = x0.to_vec();
    y0.push(0.0);
    Ok(integrate_field(&field, &y0, t, tol)?.final_state().to_vec())
}

/// Orbit-level checks of conformality and monotonicity for `ham`, on
/// `n_orbits` random starts in the cube `[−0.7, 0.7]` of `ℝ^{n,k}`.
///
/// Conformality: the field of `|α|H` for `αω` is `X_H·|α|/α`, so orbits of
/// `sign(α)·H` reproduce the orbits, return times and (times `α`) actions.
/// Monotonicity: pushing `H` forward by a `V₀` translation, a rotation of a
/// `V₁` plane and a shear of the last plane fixing `y_n = 0` preserves
/// `m(H)` and return times.
pub fn axiom_property_suite(
    space: &CoisoSpace,
    ham: &RadialHamiltonian,
    n_orbits: usize,
    seed: u64,
) -> Result<AxiomReport, CapacityError> {
    const TOL: f64 = 1e-9;
    let (n, k) = (space.n(), space.k());
    let d = space.ambient_dim();
    let base: Arc<dyn Hamiltonian> = Arc::new(ham.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Vec<f64>> = (0..n_orbits)
        .map(|_| {
            let mut p = vec![0.0; d];
            for i in space.v0_indices().chain(space.v1_indices()) {
                p[i] = rng.gen_range(-0.7..0.7);
            }
            p
        })
        .collect();
    let ropts = ReturnOptions::default();
    let t_max = 8.0;
    let base_returns = starts
        .iter()
        .map(|p| Ok(return_time_with(space, base.as_ref(), &PhasePoint(p.clone()), t_max, &ropts)?.time))
        .collect::<Result<Vec<_>, DynamicsError>>()?;
    let mut checks = Vec::new();

    for alpha in [1.0, 2.0, 0.5, -1.5] {
        let sgn = f64::signum(alpha);
        let conj = Transformed::scaled(base.clone(), sgn);
        let mut dev: f64 = 0.0;
        for (p, rt) in starts.iter().zip(&base_returns) {
            if alpha > 0.0 {
                let other = return_time_with(space, &conj, &PhasePoint(p.clone()), t_max, &ropts)?.time;
                dev = dev.max(return_deviation(*rt, other));
            } else if let ReturnTime::Finite(t) = rt {
                // The reversed orbit runs from x(T) back to x(0): same chord,
                // same first return.
                let end = orbit_with_action(base.as_ref(), p, *t, 1e-13)?;
                let start = space.project_onto(&PhasePoint(end[..d].to_vec()));
                let other = return_time_with(space, &conj, &start, t_max, &ropts)?.time;
                dev = dev.max(return_deviation(*rt, other));
            }
            // Orbit identity x_α(t) = x(sign(α)·t) and action scaling.
            let fwd = orbit_with_action(&conj, p, 1.0, 1e-13)?;
            let reference = orbit_with_action(base.as_ref(), p, 1.0, 1e-13)?;
            if alpha > 0.0 {
                dev = dev.max(fwd.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
                let a_alpha = alpha * fwd[d];
                dev = dev.max((a_alpha - alpha * reference[d]).abs());
            } else {
                let back = orbit_with_action(&conj, &reference[..d], 1.0, 1e-13)?;
                dev = dev.max(back[..d].iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            }
        }
        checks.push(AxiomCheck {
            name: format!("conformality alpha={alpha}"),
            n_orbits,
            max_deviation: dev,
            pass: dev <= TOL,
        });
    }

    let mut maps: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    let identity = |d: usize| {
        let mut m = vec![0.0; d * d];
        (0..d).for_each(|i| m[i * d + i] = 1.0);
        m
    };
    let mut shift = vec![0.0; d];
    for i in space.v0_indices() {
        shift[i] = 0.37 + 0.1 * i as f64;
    }
    maps.push(("monotonicity V0 translation".into(), identity(d), shift));
    if k > 0 {
        // Rotation of the (x_1, y_1) plane; its inverse rotates back.
        let (c, s) = (0.8f64.cos(), 0.8f64.sin());
        let mut m = identity(d);
        m[0] = c;
        m[n] = s;
        m[n * d] = -s;
        m[n * d + n] = c;
        maps.push(("monotonicity V1 rotation".into(), m, vec![0.0; d]));
    }
    {
        // ψ(x_n, y_n) = (x_n + 0.6 y_n, y_n); inverse shears back.
        let mut m = identity(d);
        m[(n - 1) * d + (2 * n - 1)] = -0.6;
        maps.push(("monotonicity y=0 shear".into(), m, vec![0.0; d]));
    }
    for (name, m_inv, shift) in maps {
        let pushed = Transformed { inner: base.clone(), scale: 1.0, m_inv, shift };
        let mut dev: f64 = 0.0;
        for (p, rt) in starts.iter().zip(&base_returns) {
            let q = psi_forward(&pushed, p);
            let other = return_time_with(space, &pushed, &PhasePoint(q.clone()), t_max, &ropts)?.time;
            dev = dev.max(return_deviation(*rt, other));
            dev = dev.max((pushed.value(&q) - base.value(p)).abs());
        }
        // m(ψ_*H) = m(H): the far value is unchanged.
        let far: Vec<f64> = (0..d).map(|i| if i == n - 1 { 1e3 } else { 0.0 }).collect();
        dev = dev.max((pushed.value(&psi_forward(&pushed, &far)) - ham.m_h()).abs());
        checks.push(AxiomCheck { name, n_orbits, max_deviation: dev, pass: dev <= TOL });
    }
    let n_finite_returns = base_returns.iter().filter(|r| r.finite().is_some()).count();
    Ok(AxiomReport { tol: TOL, n_finite_returns, checks })
}

/// `ψ(p) = M p + v` given `M⁻¹` and `v`.
fn psi_forward(t: &Transformed, p: &[f64]) -> Vec<f64> {
    let d = p.len();
    let m = nalgebra::DMatrix::from_row_slice(d, d, &t.m_inv).try_inverse().expect("invertible");
    (0..d).map(|i| (0..d).map(|j| m[(i, j)] * p[j]).sum::<f64>() + t.shift[i]).collect()
}
