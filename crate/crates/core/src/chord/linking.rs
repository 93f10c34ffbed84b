//! The linking sets `Σ_τ` and `Γ_α`, their numerical verification and the
//! integral inequality for `q_Π`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::CoisoSpace;
use crate::hamiltonian::{q2, q_pi_raw, ExtendedHamiltonian};
use crate::quadrature::{bisect, GaussLegendre};
use crate::spectral::{action_norm, allowed, SpectralPath};

use super::{ActionFunctional, ChordError};

/// Radii and sample counts for `Σ_τ` and `Γ_α`. `None` radii are found
/// automatically by [`check_linking_bounds`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkingConfig {
    pub tau: Option<f64>,
    pub alpha: Option<f64>,
    /// Required lower bound for `Φ` on `Γ_α`; any positive value if `None`.
    pub beta: Option<f64>,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub n_gamma: usize,
    /// Highest frequency used for random directions.
    pub random_max_freq: usize,
    pub seed: u64,
}

impl Default for LinkingConfig {
    fn default() -> Self {
        Self {
            tau: None,
            alpha: None,
            beta: None,
            n_interior: 64,
            n_boundary: 96,
            n_gamma: 64,
            random_max_freq: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkingReport {
    pub tau: f64,
    /// `√(C / min(½, σ·c_min, ε))` from `Φ ≤ C − ½‖x⁻‖² − σ q_Π(x⁰) − ε s²`.
    pub tau_star: f64,
    pub alpha: f64,
    /// Smallest sampled `Φ` on `Γ_α`.
    pub beta: f64,
    pub growth_constant: f64,
    /// Largest sampled `Φ` on `∂Σ_τ`.
    pub boundary_max_phi: f64,
    /// Samples where `Φ` exceeds the explicit upper estimate.
    pub estimate_violations: usize,
    pub n_boundary: usize,
    pub n_gamma: usize,
}

/// Smallest `q_Π` weight on constant paths: `x_n` has weight 1, `x_i` for
/// `k < i < n` weight `N⁻²`, the `V₁` planes `2N⁻²`.
fn constant_q_weight(ext: &ExtendedHamiltonian) -> f64 {
    let (n, k) = (ext.space.n(), ext.space.k());
    let inv = 1.0 / (ext.n_scale * ext.n_scale);
    let mut w: f64 = 1.0;
    if n - 1 > k {
        w = w.min(inv);
    }
    if k > 0 {
        w = w.min(2.0 * inv);
    }
    w
}

/// A random unit direction (solver metric) in the coordinates whose
/// frequency passes `keep`, using frequencies up to `max_freq`.
fn random_direction(
    f: &ActionFunctional,
    rng: &mut impl Rng,
    max_freq: usize,
    keep: impl Fn(i64) -> bool,
) -> Vec<f64> {
    let mf = max_freq.min(f.n_f()) as i64;
    let mut u: Vec<f64> = f
        .basis()
        .entries()
        .iter()
        .map(|&(m, _)| {
            // Only low frequencies draw, so directions agree across truncations.
            let r = if m.abs() <= mf { rng.gen_range(-1.0..1.0) } else { 0.0 };
            if keep(m) && m.abs() <= mf {
                r / (1.0 + m.abs() as f64)
            } else {
                0.0
            }
        })
        .collect();
    let nrm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nrm > 0.0 {
        u.iter_mut().for_each(|v| *v /= nrm);
    }
    u
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut f, mut r) = (inv, 0.0);
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Coordinates of `e⁺` and the coordinate index carrying it.
fn e_plus_index(f: &ActionFunctional) -> usize {
    let n = f.space().n();
    f.basis().entries().iter().position(|&(m, i)| m == 1 && i == n - 1).expect("e⁺ is always allowed")
}

/// `x⁻ + x⁰ + s·e⁺` in coordinates.
fn sigma_point(f: &ActionFunctional, dir: &[f64], r: f64, s: f64) -> Vec<f64> {
    let mut u: Vec<f64> = dir.iter().map(|v| v * r).collect();
    // Coordinates carry √w, and ‖e⁺‖ = √π in the solver metric.
    u[e_plus_index(f)] = s * std::f64::consts::PI.sqrt();
    u
}

/// Whether `x = x⁻ + x⁰ + s·e⁺` with `‖x⁻ + x⁰‖ ≤ τ` and `0 ≤ s ≤ τ`.
pub fn in_sigma(x: &SpectralPath, tau: f64) -> bool {
    let Some(s) = e_plus_coefficient(x) else {
        return false;
    };
    let rest = x.filter(|m| m <= 0);
    (0.0..=tau * (1.0 + 1e-12)).contains(&s) && action_norm(&rest) <= tau * (1.0 + 1e-12)
}

/// `s` when `P⁺x = s·e⁺`.
pub fn e_plus_coefficient(x: &SpectralPath) -> Option<f64> {
    let n = x.space().n();
    let plus = x.filter(|m| m > 0);
    let s = plus.coeff(1)[n - 1];
    let only_e_plus = plus
        .frequencies()
        .filter(|&m| m > 0)
        .all(|m| plus.coeff(m).iter().enumerate().all(|(i, &v)| v == 0.0 || (m == 1 && i == n - 1)));
    only_e_plus.then_some(s)
}

/// Samples of `Σ_τ`: the center, `α·e⁺`, a low-discrepancy interior set, the
/// boundary strata `‖x⁻ + x⁰‖ = τ`, `s = τ` and `s = 0`, and a random batch.
pub fn build_sigma_sample(
    f: &ActionFunctional,
    tau: f64,
    alpha: f64,
    config: &LinkingConfig,
) -> Vec<SpectralPath> {
    build_sigma_coords(f, tau, alpha, config).into_iter().map(|u| f.from_coords(&u)).collect()
}

pub(crate) fn build_sigma_coords(f: &ActionFunctional, tau: f64, alpha: f64, config: &LinkingConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let zero = vec![0.0; f.dim()];
    let mut out = vec![zero.clone(), sigma_point(f, &zero, 0.0, alpha)];
    let mf = config.random_max_freq;
    for i in 1..=config.n_interior as u64 {
        let dir = random_direction(f, &mut rng, mf, |m| m <= 0);
        let r = tau * radical_inverse(i, 2);
        let s = tau * radical_inverse(i, 3);
        out.push(sigma_point(f, &dir, r, s));
    }
    out.extend(boundary_coords(f, tau, config.n_boundary, &mut rng, mf));
    for _ in 0..config.n_interior {
        let dir = random_direction(f, &mut rng, mf, |m| m <= 0);
        let (r, s) = (tau * rng.gen::<f64>(), tau * rng.gen::<f64>());
        out.push(sigma_point(f, &dir, r, s));
    }
    out
}

fn boundary_coords(f: &ActionFunctional, tau: f64, count: usize, rng: &mut impl Rng, mf: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let dir = random_direction(f, rng, mf, |m| m <= 0);
            match i % 3 {
                0 => sigma_point(f, &dir, tau, tau * rng.gen::<f64>()),
                1 => sigma_point(f, &dir, tau * rng.gen::<f64>(), tau),
                _ => sigma_point(f, &dir, tau * rng.gen::<f64>(), 0.0),
            }
        })
        .collect()
}

/// Finds `τ` with `Φ ≤ 0` on sampled `∂Σ_τ` and `α < τ` with
/// `Φ ≥ β > 0` on sampled `Γ_α`.
pub fn check_linking_bounds(f: &ActionFunctional, config: &LinkingConfig) -> Result<LinkingReport, ChordError> {
    let not_found = |msg: String| Err(ChordError::BoundsNotFound(msg));
    let Some(ext) = f.extended() else {
        return not_found("functional has no extended Hamiltonian".into());
    };
    let eps = ext.eps();
    let c = ext.growth_constant();
    if !(eps > 0.0) || !c.is_finite() {
        return not_found(format!(
            "no lower bound H̄ ≥ (π/2 + ε) q_Π − C with ε > 0 (far slope π/2 {} {:.3e}, C = {c})",
            if eps >= 0.0 { "+" } else { "-" },
            eps.abs()
        ));
    }
    let sigma = ext.sigma;
    let cq = constant_q_weight(ext);
    let tau_star = (c / 0.5f64.min(sigma * cq).min(eps)).sqrt();
    let mut tau = config.tau.unwrap_or(tau_star);
    if !(tau > 0.0) {
        return not_found(format!("tau must be positive, got {tau}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xb0b0);
    let e_idx = e_plus_index(f);
    let signs = f.signs().to_vec();
    let mut boundary_max = f64::NEG_INFINITY;
    let mut violations = 0;
    let mut found = false;
    for _ in 0..8 {
        let pts = boundary_coords(f, tau, config.n_boundary, &mut rng, config.random_max_freq);
        let stats: Vec<(f64, bool)> = pts
            .par_iter()
            .map(|u| {
                let phi = f.value_u(u);
                let minus2: f64 = u.iter().zip(&signs).filter(|(_, s)| **s < 0.0).map(|(v, _)| v * v).sum();
                let x0 = f.from_coords(u).coeff(0).to_vec();
                let s = u[e_idx] / std::f64::consts::PI.sqrt();
                let bound = c - 0.5 * minus2 - sigma * q_pi_raw(&ext.space, ext.n_scale, &x0) - eps * s * s;
                (phi, phi > bound + 1e-9 * (1.0 + bound.abs()))
            })
            .collect();
        boundary_max = stats.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        violations = stats.iter().filter(|s| s.1).count();
        if boundary_max <= 0.0 {
            found = true;
            break;
        }
        tau *= 2.0;
    }
    if !found {
        return not_found(format!("Φ > 0 on sampled ∂Σ_τ up to τ = {tau}"));
    }

    let mut alpha = config.alpha.unwrap_or((0.5 * tau).min(1.0));
    let beta_req = config.beta.unwrap_or(0.0);
    for _ in 0..40 {
        if alpha >= tau {
            alpha = 0.5 * tau;
        }
        let mut gamma: Vec<Vec<f64>> =
            (0..config.n_gamma).map(|_| random_direction(f, &mut rng, config.random_max_freq, |m| m > 0)).collect();
        let mut e = vec![0.0; f.dim()];
        e[e_idx] = 1.0;
        gamma.push(e);
        let beta = gamma
            .par_iter()
            .map(|d| f.value_u(&d.iter().map(|v| v * alpha).collect::<Vec<_>>()))
            .reduce(|| f64::INFINITY, f64::min);
        if beta > 0.0 && beta >= beta_req {
            return Ok(LinkingReport {
                tau,
                tau_star,
                alpha,
                beta,
                growth_constant: c,
                boundary_max_phi: boundary_max,
                estimate_violations: violations,
                n_boundary: config.n_boundary,
                n_gamma: gamma.len(),
            });
        }
        if config.alpha.is_some() {
            break;
        }
        alpha *= 0.5;
    }
    not_found(format!("no α found with Φ ≥ {beta_req} > 0 on sampled Γ_α"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralInequalityReport {
    pub n_samples: usize,
    /// Samples with margin below `−1e−12`.
    pub violations: usize,
    /// Smallest `∫q_Π(x) − q_Π(x⁰) − ∫q_Π(s·e⁺)`.
    pub worst_margin: f64,
}

/// `∫₀¹ q_Π(x(t)) dt` for a spectral path; the last plane is integrated
/// piecewise between the zeros of `y_n`, the others by Parseval.
pub fn integrate_q_pi(x: &SpectralPath, n_scale: f64) -> f64 {
    let space = x.space();
    let (n, k) = (space.n(), space.k());
    let inv = 1.0 / (n_scale * n_scale);
    let mut acc = 0.0;
    for m in x.frequencies() {
        let z = x.coeff(m);
        for i in 0..n - 1 {
            let w = if i < k { 2.0 * inv } else { inv };
            acc += w * (z[i] * z[i] + z[n + i] * z[n + i]);
        }
    }
    let nf = x.max_freq();
    let plane = |t: f64| {
        let p = x.evaluate(t);
        (p.0[n - 1], p.0[2 * n - 1])
    };
    let yn = |t: f64| plane(t).1;
    let grid = 64 * (nf + 1);
    let mut cuts = vec![0.0];
    let mut prev = yn(0.0);
    for j in 1..=grid {
        let t = j as f64 / grid as f64;
        let cur = yn(t);
        if j < grid && prev != 0.0 && cur != 0.0 && (prev < 0.0) != (cur < 0.0) {
            cuts.push(bisect(yn, (j - 1) as f64 / grid as f64, t, 1e-15));
        }
        prev = cur;
    }
    cuts.push(1.0);
    let rule = GaussLegendre::new(4 * nf + 16);
    for w in cuts.windows(2) {
        acc += rule.integrate(w[0], w[1], |t| {
            let (a, b) = plane(t);
            q2(a, b)
        });
    }
    acc
}

/// Checks `∫q_Π(x) ≥ q_Π(x⁰) + ∫q_Π(s·e⁺)` on samples `x = x⁻ + x⁰ + s·e⁺`.
pub fn integral_inequality_check(
    space: &CoisoSpace,
    n_scale: f64,
    sample: &[SpectralPath],
) -> Result<IntegralInequalityReport, ChordError> {
    let margins: Vec<f64> = sample
        .par_iter()
        .map(|x| {
            if x.space() != *space {
                return Err(ChordError::InvalidInput("sample path on a different space".into()));
            }
            let s = match e_plus_coefficient(x) {
                Some(s) if s >= 0.0 => s,
                _ => return Err(ChordError::InvalidInput("sample is not of the form x⁻ + x⁰ + s·e⁺, s ≥ 0".into())),
            };
            let lhs = integrate_q_pi(x, n_scale);
            // s·e⁺ stays in the upper half of the last plane, so ∫q_Π = s².
            let rhs = q_pi_raw(space, n_scale, x.coeff(0)) + s * s;
            Ok(lhs - rhs)
        })
        .collect::<Result<_, _>>()?;
    Ok(IntegralInequalityReport {
        n_samples: margins.len(),
        violations: margins.iter().filter(|&&m| m < -1e-12).count(),
        worst_margin: margins.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// Random paths `x⁻ + x⁰ + s·e⁺` with coefficients up to `max_freq`,
/// `‖x⁻ + x⁰‖ ≤ τ` and `s ∈ [0, τ]`.
pub fn random_sigma_paths(space: CoisoSpace, max_freq: usize, tau: f64, count: usize, seed: u64) -> Vec<SpectralPath> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = space.n();
    (0..count)
        .map(|_| {
            let mut x = SpectralPath::zeros(space, max_freq).expect("positive truncation");
            for m in -(max_freq as i64)..=0 {
                let z: Vec<f64> = (0..2 * n)
                    .map(|i| if allowed(&space, m, i) { rng.gen_range(-1.0..1.0) / (1.0 + m.abs() as f64) } else { 0.0 })
                    .collect();
                x.set_coeff(m, &z).expect("allowed components");
            }
            let nrm = action_norm(&x);
            let r = tau * rng.gen::<f64>();
            let mut x = if nrm > 0.0 { x.scale(r / nrm) } else { x };
            let mut e = vec![0.0; 2 * n];
            e[n - 1] = tau * rng.gen::<f64>();
            x.set_coeff(1, &e).expect("e⁺ allowed");
            x
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PhasePoint;
    use crate::hamiltonian::{default_eps, RadialHamiltonian, RadialProfile};

    fn desk(n_f: usize) -> ActionFunctional {
        let space = CoisoSpace::new(1, 0).unwrap();
        let inner =
            RadialHamiltonian::new(&space, PhasePoint::zeros(1), RadialProfile::smooth_step(0.1, 0.9, 2.0).unwrap())
                .unwrap();
        let ext = ExtendedHamiltonian::new(space, inner, default_eps(2.0).unwrap(), None).unwrap();
        ActionFunctional::new(ext, n_f, None).unwrap()
    }

    #[test]
    fn q_pi_integral_of_e_plus() {
        let space = CoisoSpace::new(2, 1).unwrap();
        let e = SpectralPath::e_plus(space, 4).unwrap();
        for s in [0.0, 0.5, 3.0] {
            assert!((integrate_q_pi(&e.scale(s), 1.0) - s * s).abs() < 1e-12);
        }
        // −e⁺ lies in the lower half plane, where only x² counts.
        assert!((integrate_q_pi(&e.scale(-1.0), 1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sigma_membership() {
        let f = desk(6);
        let sample = build_sigma_sample(&f, 3.0, 1.0, &LinkingConfig::default());
        assert!(sample.iter().all(|x| in_sigma(x, 3.0)));
        assert!(!in_sigma(&SpectralPath::e_plus(f.space(), 6).unwrap().scale(3.5), 3.0));
        assert!(!in_sigma(&SpectralPath::e_plus(f.space(), 6).unwrap().scale(-0.5), 3.0));
        let mut off = SpectralPath::zeros(f.space(), 6).unwrap();
        off.set_coeff(2, &[1.0, 0.0]).unwrap();
        assert_eq!(e_plus_coefficient(&off), None);
        assert!(!in_sigma(&off, 3.0));
    }

    #[test]
    fn integral_inequality_holds() {
        for (n, k) in [(1, 0), (2, 0), (2, 1), (3, 1)] {
            let space = CoisoSpace::new(n, k).unwrap();
            let paths = random_sigma_paths(space, 4, 3.0, 2500, 7 + n as u64);
            let r = integral_inequality_check(&space, 1.5, &paths).unwrap();
            assert_eq!(r.violations, 0, "({n},{k}) worst margin {:e}", r.worst_margin);
        }
    }

    #[test]
    fn desk_linking_bounds() {
        let f = desk(16);
        let r = check_linking_bounds(&f, &LinkingConfig::default()).unwrap();
        assert!(r.boundary_max_phi <= 0.0);
        assert!(r.beta > 0.0 && r.alpha < r.tau);
        assert_eq!(r.estimate_violations, 0);
        assert!((r.tau_star - (r.growth_constant / default_eps(2.0).unwrap()).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn subcritical_has_no_bounds() {
        let space = CoisoSpace::new(1, 0).unwrap();
        let inner =
            RadialHamiltonian::new(&space, PhasePoint::zeros(1), RadialProfile::smooth_step(0.1, 0.9, 0.1).unwrap())
                .unwrap();
        let ext = ExtendedHamiltonian::subcritical(space, inner, 1.0, None).unwrap();
        let f = ActionFunctional::new(ext, 8, None).unwrap();
        assert!(matches!(check_linking_bounds(&f, &LinkingConfig::default()), Err(ChordError::BoundsNotFound(_))));
    }
}
