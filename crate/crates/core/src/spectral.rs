//! Truncated Fourier representation of paths with leafwise boundary
//! conditions.
//!
//! A path is `γ(t) = Σ_{|m| ≤ N} e^{mπJt} z_m` on `t ∈ [0, 1]`, where `e^{θJ}`
//! rotates every `(x_i, y_i)` plane by `θ`. Coefficients at odd `m` live in
//! `V₀`, coefficients at even `m` in `V₀ ⊕ V₁`. Every such path starts and
//! ends on one leaf of `ℝ^{n,k}`.
//!
//! Two normalizations of the `H^{1/2}` inner product are in use:
//!
//! * [`Normalization::Displayed`]: weight `(π/2)|m|^{2s}` on `m ≠ 0`. This is
//!   what [`hs_inner`] computes.
//! * [`Normalization::Action`]: weight `π|m|` on `m ≠ 0` (at `s = ½`). With it
//!   `a(x) = ½‖x⁺‖² − ½‖x⁻‖²`, `∇a = x⁺ − x⁻` and `‖e⁺‖² = π`. The solver
//!   works in this metric.

use std::f64::consts::PI;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::geometry::{dot, j_apply, CoisoSpace, PhasePoint};
use crate::quadrature::GaussLegendre;

/// Default truncation order.
pub const DEFAULT_MAX_FREQ: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("coisotropic spaces differ: ({0}, {1}) vs ({2}, {3})")]
    SpaceMismatch(usize, usize, usize, usize),
    #[error("coefficient at frequency {freq} has a nonzero component {index} outside the allowed subspace")]
    ParityViolation { freq: i64, index: usize },
    #[error("frequency {freq} outside truncation [-{max_freq}, {max_freq}]")]
    FrequencyOutOfRange { freq: i64, max_freq: usize },
    #[error("coefficient vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("truncation order {requested} exceeds max frequency {max_freq}")]
    InvalidTruncation { requested: usize, max_freq: usize },
    #[error("max frequency must be positive")]
    ZeroTruncation,
}

/// Which `H^{1/2}` weight convention to use for non-zero frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// `(π/2)|m|^{2s}`.
    Displayed,
    /// `π|m|^{2s}`; makes `a(x) = ½‖x⁺‖² − ½‖x⁻‖²`.
    Action,
}

impl Normalization {
    pub fn weight(self, m: i64, s: f64) -> f64 {
        if m == 0 {
            return 1.0;
        }
        let base = match self {
            Normalization::Displayed => PI / 2.0,
            Normalization::Action => PI,
        };
        base * (m.unsigned_abs() as f64).powf(2.0 * s)
    }
}

/// Weight of frequency `m` in the solver metric (`Action`, `s = ½`).
pub fn action_weight(m: i64) -> f64 {
    if m == 0 {
        1.0
    } else {
        PI * m.unsigned_abs() as f64
    }
}

/// Whether coordinate `idx` may be nonzero at frequency `m`.
pub fn allowed(space: &CoisoSpace, m: i64, idx: usize) -> bool {
    if m % 2 == 0 {
        space.is_v0(idx) || space.is_v1(idx)
    } else {
        space.is_v0(idx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPath {
    space: CoisoSpace,
    max_freq: usize,
    /// Row `m + max_freq` holds `z_m`.
    coeffs: Vec<Vec<f64>>,
}

impl SpectralPath {
    pub fn zeros(space: CoisoSpace, max_freq: usize) -> Result<Self, SpectralError> {
        if max_freq == 0 {
            return Err(SpectralError::ZeroTruncation);
        }
        Ok(Self {
            space,
            max_freq,
            coeffs: vec![vec![0.0; space.ambient_dim()]; 2 * max_freq + 1],
        })
    }

    /// Builds a path from `(m, z_m)` pairs, rejecting parity violations.
    pub fn from_coeffs<I>(space: CoisoSpace, max_freq: usize, coeffs: I) -> Result<Self, SpectralError>
    where
        I: IntoIterator<Item = (i64, Vec<f64>)>,
    {
        let mut path = Self::zeros(space, max_freq)?;
        for (m, z) in coeffs {
            path.set_coeff(m, &z)?;
        }
        Ok(path)
    }

    /// A constant path at `p ∈ ℝ^{n,k}`.
    pub fn constant(space: CoisoSpace, max_freq: usize, p: &PhasePoint) -> Result<Self, SpectralError> {
        Self::from_coeffs(space, max_freq, [(0, p.0.clone())])
    }

    /// `e⁺(t) = e^{πJt} e_n`, where `e_n` is the `x_n` axis.
    pub fn e_plus(space: CoisoSpace, max_freq: usize) -> Result<Self, SpectralError> {
        let mut z = vec![0.0; space.ambient_dim()];
        z[space.n() - 1] = 1.0;
        Self::from_coeffs(space, max_freq, [(1, z)])
    }

    pub fn space(&self) -> CoisoSpace {
        self.space
    }

    pub fn max_freq(&self) -> usize {
        self.max_freq
    }

    pub fn frequencies(&self) -> impl Iterator<Item = i64> {
        let n = self.max_freq as i64;
        -n..=n
    }

    pub fn coeff(&self, m: i64) -> &[f64] {
        &self.coeffs[(m + self.max_freq as i64) as usize]
    }

    pub(crate) fn coeff_mut(&mut self, m: i64) -> &mut [f64] {
        let off = self.max_freq as i64;
        &mut self.coeffs[(m + off) as usize]
    }

    pub fn set_coeff(&mut self, m: i64, z: &[f64]) -> Result<(), SpectralError> {
        if m.unsigned_abs() as usize > self.max_freq {
            return Err(SpectralError::FrequencyOutOfRange { freq: m, max_freq: self.max_freq });
        }
        if z.len() != self.space.ambient_dim() {
            return Err(SpectralError::LengthMismatch { expected: self.space.ambient_dim(), got: z.len() });
        }
        for (idx, &v) in z.iter().enumerate() {
            if v != 0.0 && !allowed(&self.space, m, idx) {
                return Err(SpectralError::ParityViolation { freq: m, index: idx });
            }
        }
        self.coeff_mut(m).copy_from_slice(z);
        Ok(())
    }

    fn check_compatible(&self, other: &Self) -> Result<(), SpectralError> {
        if self.space != other.space {
            return Err(SpectralError::SpaceMismatch(
                self.space.n(),
                self.space.k(),
                other.space.n(),
                other.space.k(),
            ));
        }
        Ok(())
    }

    /// Evaluates `γ(t)` into `out`.
    pub fn evaluate_into(&self, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let n = self.space.n();
        for m in self.frequencies() {
            let z = self.coeff(m);
            if z.iter().all(|&v| v == 0.0) {
                continue;
            }
            let (s, c) = (m as f64 * PI * t).sin_cos();
            for i in 0..n {
                let (x, y) = (z[i], z[n + i]);
                out[i] += c * x - s * y;
                out[n + i] += s * x + c * y;
            }
        }
    }

    pub fn evaluate(&self, t: f64) -> PhasePoint {
        let mut out = vec![0.0; self.space.ambient_dim()];
        self.evaluate_into(t, &mut out);
        PhasePoint(out)
    }

    /// `γ̇(t) = Σ mπ J e^{mπJt} z_m`.
    pub fn derivative_into(&self, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let n = self.space.n();
        for m in self.frequencies() {
            if m == 0 {
                continue;
            }
            let z = self.coeff(m);
            let (s, c) = (m as f64 * PI * t).sin_cos();
            let w = m as f64 * PI;
            for i in 0..n {
                let (x, y) = (z[i], z[n + i]);
                let (rx, ry) = (c * x - s * y, s * x + c * y);
                out[i] += -w * ry;
                out[n + i] += w * rx;
            }
        }
    }

    pub fn derivative(&self, t: f64) -> PhasePoint {
        let mut out = vec![0.0; self.space.ambient_dim()];
        self.derivative_into(t, &mut out);
        PhasePoint(out)
    }

    /// Coefficientwise `self + s·other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Result<Self, SpectralError> {
        self.check_compatible(other)?;
        let max_freq = self.max_freq.max(other.max_freq);
        let mut out = Self::zeros(self.space, max_freq)?;
        for m in out.frequencies().collect::<Vec<_>>() {
            let row = out.coeff_mut(m);
            if m.unsigned_abs() as usize <= self.max_freq {
                row.iter_mut().zip(self.coeff(m)).for_each(|(r, a)| *r += a);
            }
            if m.unsigned_abs() as usize <= other.max_freq {
                row.iter_mut().zip(other.coeff(m)).for_each(|(r, b)| *r += s * b);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }

    /// Keeps only the frequencies accepted by `keep`.
    pub fn filter(&self, keep: impl Fn(i64) -> bool) -> Self {
        let mut out = self.clone();
        for m in self.frequencies() {
            if !keep(m) {
                out.coeff_mut(m).iter_mut().for_each(|v| *v = 0.0);
            }
        }
        out
    }

    /// Re-embeds into a (larger or smaller) truncation; dropped modes are lost.
    pub fn with_max_freq(&self, max_freq: usize) -> Result<Self, SpectralError> {
        let mut out = Self::zeros(self.space, max_freq)?;
        let common = max_freq.min(self.max_freq) as i64;
        for m in -common..=common {
            out.coeff_mut(m).copy_from_slice(self.coeff(m));
        }
        Ok(out)
    }

    pub fn is_constant(&self, tol: f64) -> bool {
        self.frequencies()
            .filter(|&m| m != 0)
            .all(|m| self.coeff(m).iter().all(|v| v.abs() <= tol))
    }
}

/// `γ(t)` for `t ∈ [0, 1]`.
pub fn evaluate(path: &SpectralPath, t: f64) -> PhasePoint {
    path.evaluate(t)
}

fn weighted_inner(
    phi: &SpectralPath,
    psi: &SpectralPath,
    weight: impl Fn(i64) -> f64,
) -> Result<f64, SpectralError> {
    phi.check_compatible(psi)?;
    let common = phi.max_freq.min(psi.max_freq) as i64;
    Ok((-common..=common).map(|m| weight(m) * dot(phi.coeff(m), psi.coeff(m))).sum())
}

/// `⟨a₀, a′₀⟩ + (π/2) Σ_{m≠0} |m|^{2s} ⟨z_m, w_m⟩`.
pub fn hs_inner(phi: &SpectralPath, psi: &SpectralPath, s: f64) -> Result<f64, SpectralError> {
    weighted_inner(phi, psi, |m| Normalization::Displayed.weight(m, s))
}

/// `H^s` inner product under an explicit normalization.
pub fn hs_inner_with(
    phi: &SpectralPath,
    psi: &SpectralPath,
    s: f64,
    norm: Normalization,
) -> Result<f64, SpectralError> {
    weighted_inner(phi, psi, |m| norm.weight(m, s))
}

/// The solver metric: `H^{1/2}` with [`Normalization::Action`].
pub fn action_inner(phi: &SpectralPath, psi: &SpectralPath) -> Result<f64, SpectralError> {
    weighted_inner(phi, psi, action_weight)
}

pub fn action_norm(phi: &SpectralPath) -> f64 {
    action_inner(phi, phi).expect("same space").sqrt()
}

/// Splitting into negative, zero and positive frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub minus: SpectralPath,
    pub zero: PhasePoint,
    pub plus: SpectralPath,
}

impl SpectralDecomposition {
    pub fn reassemble(&self) -> SpectralPath {
        let mut out = self.minus.axpy(1.0, &self.plus).expect("same space");
        out.coeff_mut(0).copy_from_slice(&self.zero.0);
        out
    }
}

pub fn project(path: &SpectralPath) -> SpectralDecomposition {
    SpectralDecomposition {
        minus: path.filter(|m| m < 0),
        zero: PhasePoint(path.coeff(0).to_vec()),
        plus: path.filter(|m| m > 0),
    }
}

/// `a(φ, ψ) = (π/2)[Σ_{m>0} |m|⟨z_m, w_m⟩ − Σ_{m<0} |m|⟨z_m, w_m⟩]`.
pub fn action_form_a(phi: &SpectralPath, psi: &SpectralPath) -> Result<f64, SpectralError> {
    weighted_inner(phi, psi, |m| PI / 2.0 * m as f64)
}

/// `½ ∫₀¹ ⟨−J φ̇(t), ψ(t)⟩ dt` by Gauss–Legendre quadrature.
pub fn action_form_a_quadrature(
    phi: &SpectralPath,
    psi: &SpectralPath,
    n_quad: usize,
) -> Result<f64, SpectralError> {
    phi.check_compatible(psi)?;
    let rule = GaussLegendre::new(n_quad.max(1));
    let dim = phi.space.ambient_dim();
    let (mut dphi, mut jd, mut p) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    Ok(0.5
        * rule.integrate(0.0, 1.0, |t| {
            phi.derivative_into(t, &mut dphi);
            j_apply(&dphi, &mut jd);
            psi.evaluate_into(t, &mut p);
            -dot(&jd, &p)
        }))
}

/// `P_N`: zeroes every frequency with `|m| > order`.
pub fn truncate(path: &SpectralPath, order: usize) -> Result<SpectralPath, SpectralError> {
    if order > path.max_freq {
        return Err(SpectralError::InvalidTruncation { requested: order, max_freq: path.max_freq });
    }
    Ok(path.filter(|m| m.unsigned_abs() as usize <= order))
}

/// Flat coordinates over the allowed `(m, index)` pairs of a truncation.
///
/// Coordinates are scaled by `√w_m` of the solver metric, so the Euclidean
/// inner product of coordinate vectors equals [`action_inner`].
#[derive(Debug, Clone)]
pub struct GalerkinBasis {
    space: CoisoSpace,
    max_freq: usize,
    entries: Vec<(i64, usize)>,
}

impl GalerkinBasis {
    pub fn new(space: CoisoSpace, max_freq: usize) -> Self {
        let nf = max_freq as i64;
        let entries = (-nf..=nf)
            .flat_map(|m| (0..space.ambient_dim()).filter(move |&i| allowed(&space, m, i)).map(move |i| (m, i)))
            .collect();
        Self { space, max_freq, entries }
    }

    pub fn space(&self) -> CoisoSpace {
        self.space
    }

    pub fn max_freq(&self) -> usize {
        self.max_freq
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(i64, usize)] {
        &self.entries
    }

    pub fn to_coords(&self, path: &SpectralPath) -> Vec<f64> {
        self.entries
            .iter()
            .map(|&(m, i)| {
                if m.unsigned_abs() as usize > path.max_freq {
                    0.0
                } else {
                    action_weight(m).sqrt() * path.coeff(m)[i]
                }
            })
            .collect()
    }

    pub fn from_coords(&self, coords: &[f64]) -> SpectralPath {
        let mut path = SpectralPath::zeros(self.space, self.max_freq).expect("positive truncation");
        for (&(m, i), &u) in self.entries.iter().zip(coords) {
            path.coeff_mut(m)[i] = u / action_weight(m).sqrt();
        }
        path
    }
}

#[derive(Serialize, Deserialize)]
struct RawPath {
    n: usize,
    k: usize,
    max_freq: usize,
    coeffs: Vec<(i64, Vec<f64>)>,
}

impl Serialize for SpectralPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let coeffs = self
            .frequencies()
            .filter(|&m| self.coeff(m).iter().any(|v| v.to_bits() != 0))
            .map(|m| (m, self.coeff(m).to_vec()))
            .collect();
        RawPath { n: self.space.n(), k: self.space.k(), max_freq: self.max_freq, coeffs }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SpectralPath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = RawPath::deserialize(deserializer)?;
        let space = CoisoSpace::new(raw.n, raw.k).map_err(D::Error::custom)?;
        SpectralPath::from_coeffs(space, raw.max_freq, raw.coeffs).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::leaf_residual;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sp(n: usize, k: usize) -> CoisoSpace {
        CoisoSpace::new(n, k).unwrap()
    }

    fn random_path(space: CoisoSpace, max_freq: usize, rng: &mut impl Rng) -> SpectralPath {
        let basis = GalerkinBasis::new(space, max_freq);
        let coords: Vec<f64> = (0..basis.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        basis.from_coords(&coords)
    }

    #[test]
    fn evaluate_examples() {
        let s = sp(2, 1);
        let e = SpectralPath::e_plus(s, 4).unwrap();
        assert_abs_diff_eq!(e.evaluate(0.0).0[1], 1.0);
        let end = e.evaluate(1.0);
        assert_abs_diff_eq!(end.0[1], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(end.0[3], 0.0, epsilon = 1e-15);

        let c = PhasePoint(vec![0.3, -0.2, 0.7, 0.0]);
        let path = SpectralPath::constant(s, 4, &c).unwrap();
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(path.evaluate(t), c);
        }

        let s1 = sp(1, 0);
        let half = SpectralPath::e_plus(s1, 2).unwrap().evaluate(0.5);
        assert_abs_diff_eq!(half.0[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(half.0[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn parity_is_enforced() {
        let s = sp(2, 1);
        // y_1 is in V₁: allowed at even m only.
        assert!(SpectralPath::from_coeffs(s, 3, [(2, vec![0.0, 0.0, 1.0, 0.0])]).is_ok());
        assert_eq!(
            SpectralPath::from_coeffs(s, 3, [(1, vec![0.0, 0.0, 1.0, 0.0])]),
            Err(SpectralError::ParityViolation { freq: 1, index: 2 })
        );
        // y_2 is in W₀: never allowed.
        assert!(SpectralPath::from_coeffs(s, 3, [(0, vec![0.0, 0.0, 0.0, 1.0])]).is_err());
        assert!(SpectralPath::from_coeffs(s, 3, [(4, vec![1.0, 0.0, 0.0, 0.0])]).is_err());
        assert!(SpectralPath::zeros(s, 0).is_err());
    }

    #[test]
    fn boundary_lies_on_one_leaf() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (n, k) in [(1, 0), (2, 0), (2, 1), (3, 1), (3, 2)] {
            let s = sp(n, k);
            for _ in 0..50 {
                let p = random_path(s, 8, &mut rng);
                let (a, b) = (p.evaluate(0.0), p.evaluate(1.0));
                assert!(leaf_residual(&s, &a, &b) < 1e-9);
            }
        }
    }

    #[test]
    fn hs_inner_examples() {
        let s = sp(2, 0);
        let e = SpectralPath::e_plus(s, 4).unwrap();
        assert_abs_diff_eq!(hs_inner(&e, &e, 0.5).unwrap(), PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(action_inner(&e, &e).unwrap(), PI, epsilon = 1e-15);

        let a = SpectralPath::from_coeffs(s, 4, [(1, vec![1.0, 0.0, 0.0, 0.0])]).unwrap();
        let b = SpectralPath::from_coeffs(s, 4, [(2, vec![1.0, 0.0, 0.0, 0.0])]).unwrap();
        assert_eq!(hs_inner(&a, &b, 0.5).unwrap(), 0.0);

        let e1 = vec![1.0, 0.0, 0.0, 0.0];
        let p = SpectralPath::from_coeffs(s, 4, [(0, e1.clone()), (2, e1)]).unwrap();
        assert_abs_diff_eq!(hs_inner(&p, &p, 0.0).unwrap(), 1.0 + PI / 2.0, epsilon = 1e-15);

        assert!(matches!(hs_inner(&p, &SpectralPath::zeros(sp(2, 1), 4).unwrap(), 0.5), Err(SpectralError::SpaceMismatch(..))));
    }

    #[test]
    fn action_form_examples() {
        let s = sp(1, 0);
        let e = SpectralPath::e_plus(s, 4).unwrap();
        assert_abs_diff_eq!(action_form_a(&e, &e).unwrap(), PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(action_form_a_quadrature(&e, &e, 64).unwrap(), PI / 2.0, epsilon = 1e-13);

        let c = SpectralPath::constant(s, 4, &PhasePoint(vec![2.0, 0.0])).unwrap();
        assert_eq!(action_form_a(&c, &c).unwrap(), 0.0);
        assert_abs_diff_eq!(action_form_a_quadrature(&c, &c, 16).unwrap(), 0.0, epsilon = 1e-15);

        let em = SpectralPath::from_coeffs(s, 4, [(-1, vec![1.0, 0.0])]).unwrap();
        assert_abs_diff_eq!(action_form_a(&em, &em).unwrap(), -PI / 2.0, epsilon = 1e-15);

        let s2 = sp(2, 1);
        let ep = SpectralPath::e_plus(s2, 4).unwrap();
        let other = SpectralPath::from_coeffs(s2, 4, [(2, vec![1.0, 0.0, 0.0, 0.0])]).unwrap();
        assert_abs_diff_eq!(action_form_a_quadrature(&ep, &other, 64).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn pseudo_orthogonality_by_quadrature() {
        // Time-domain oracle, independent of the spectral formulas.
        let rule = GaussLegendre::new(64);
        for i in 0..3 {
            for m in -8i64..=8 {
                for l in -8i64..=8 {
                    let mut e = vec![0.0; 6];
                    e[i] = 1.0;
                    let v = rule.integrate(0.0, 1.0, |t| {
                        let mut a = e.clone();
                        let mut b = e.clone();
                        crate::geometry::rotate_in_place(&mut a, m as f64 * PI * t);
                        crate::geometry::rotate_in_place(&mut b, l as f64 * PI * t);
                        dot(&a, &b)
                    });
                    let expect = if m == l { 1.0 } else { 0.0 };
                    assert!((v - expect).abs() < 1e-12, "m={m} l={l} got {v}");
                }
            }
        }
    }

    #[test]
    fn projections_split_frequencies() {
        let s = sp(1, 0);
        let only3 = SpectralPath::from_coeffs(s, 4, [(3, vec![1.0, 0.0])]).unwrap();
        let d = project(&only3);
        assert_eq!(d.plus, only3);
        assert!(d.minus.is_constant(0.0) && d.minus.coeff(0)[0] == 0.0);
        assert_eq!(d.zero, PhasePoint(vec![0.0, 0.0]));

        let c = SpectralPath::constant(s, 4, &PhasePoint(vec![1.5, 0.0])).unwrap();
        let d = project(&c);
        assert_eq!(d.zero, PhasePoint(vec![1.5, 0.0]));
        assert_eq!(action_norm(&d.plus), 0.0);
        assert_eq!(action_norm(&d.minus), 0.0);

        let mixed =
            SpectralPath::from_coeffs(s, 4, [(-1, vec![2.0, 0.0]), (0, vec![3.0, 0.0]), (1, vec![4.0, 0.0])]).unwrap();
        let d = project(&mixed);
        assert_eq!(d.minus.coeff(-1)[0], 2.0);
        assert_eq!(d.zero.0[0], 3.0);
        assert_eq!(d.plus.coeff(1)[0], 4.0);
        assert_eq!(d.reassemble(), mixed);
    }

    #[test]
    fn truncate_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sp(2, 1);
        let p = random_path(s, 6, &mut rng);
        assert_eq!(truncate(&p, 6).unwrap(), p);
        let p0 = truncate(&p, 0).unwrap();
        assert!(p0.is_constant(0.0));
        assert_eq!(p0.coeff(0), p.coeff(0));
        assert!(truncate(&p, 7).is_err());
    }

    #[test]
    fn truncation_error_decay() {
        // ‖P_N x − x‖_{H^t} ≤ N^{t−s} ‖x‖_{H^s} for s > t.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = sp(2, 0);
        for _ in 0..20 {
            let x = random_path(s, 16, &mut rng);
            for (hi, lo) in [(1.0, 0.5), (0.5, 0.0), (1.0, 0.0)] {
                let hs = hs_inner(&x, &x, hi).unwrap().sqrt();
                for order in 1..16 {
                    let tail = x.axpy(-1.0, &truncate(&x, order).unwrap()).unwrap();
                    let ht = hs_inner(&tail, &tail, lo).unwrap().sqrt();
                    assert!(ht <= (order as f64).powf(lo - hi) * hs + 1e-12);
                }
            }
        }
    }

    #[test]
    fn galerkin_coords_roundtrip_and_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = sp(3, 1);
        let basis = GalerkinBasis::new(s, 5);
        // (2N+1)(n−k) V₀ entries plus 2k V₁ entries at each even m.
        assert_eq!(basis.dim(), 11 * 2 + 5 * 2);
        let a = random_path(s, 5, &mut rng);
        let b = random_path(s, 5, &mut rng);
        let (ua, ub) = (basis.to_coords(&a), basis.to_coords(&b));
        assert_abs_diff_eq!(dot(&ua, &ub), action_inner(&a, &b).unwrap(), epsilon = 1e-12);
        let back = basis.from_coords(&ua);
        for m in a.frequencies() {
            for (x, y) in a.coeff(m).iter().zip(back.coeff(m)) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn json_layout() {
        let s = sp(1, 0);
        let p = SpectralPath::from_coeffs(s, 2, [(1, vec![0.5, 0.0])]).unwrap();
        let js = serde_json::to_string(&p).unwrap();
        assert_eq!(js, r#"{"n":1,"k":0,"max_freq":2,"coeffs":[[1,[0.5,0.0]]]}"#);
        let bad = r#"{"n":1,"k":0,"max_freq":2,"coeffs":[[1,[0.0,0.5]]]}"#;
        assert!(serde_json::from_str::<SpectralPath>(bad).is_err());
    }

    proptest! {
        #[test]
        fn json_roundtrip_is_bit_exact(seed in any::<u64>(), scale in -1e6f64..1e6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_path(sp(2, 1), 4, &mut rng).scale(scale);
            let back: SpectralPath = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
            for m in p.frequencies() {
                for (a, b) in p.coeff(m).iter().zip(back.coeff(m)) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }

        #[test]
        fn action_form_matches_split_norms(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_path(sp(2, 1), 6, &mut rng);
            let d = project(&x);
            let a = action_form_a(&x, &x).unwrap();
            // Solver metric: a = ½‖x⁺‖² − ½‖x⁻‖².
            let split = 0.5 * action_norm(&d.plus).powi(2) - 0.5 * action_norm(&d.minus).powi(2);
            prop_assert!((a - split).abs() < 1e-10 * (1.0 + a.abs()));
            // Displayed metric: a = ‖x⁺‖² − ‖x⁻‖².
            let disp = hs_inner(&d.plus, &d.plus, 0.5).unwrap() - hs_inner(&d.minus, &d.minus, 0.5).unwrap();
            prop_assert!((a - disp).abs() < 1e-10 * (1.0 + a.abs()));
        }

        #[test]
        fn projectors_are_complementary_idempotents(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_path(sp(3, 2), 5, &mut rng);
            let d = project(&x);
            prop_assert_eq!(d.reassemble(), x.clone());
            prop_assert_eq!(project(&d.plus).plus, d.plus.clone());
            prop_assert_eq!(action_norm(&project(&d.plus).minus), 0.0);
            prop_assert_eq!(action_inner(&d.plus, &d.minus).unwrap(), 0.0);
        }

        #[test]
        fn hs_inner_positive_definite(seed in any::<u64>(), s in 0.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_path(sp(2, 0), 4, &mut rng);
            let y = random_path(sp(2, 0), 4, &mut rng);
            prop_assert!(hs_inner(&x, &x, s).unwrap() > 0.0);
            prop_assert_eq!(hs_inner(&x, &y, s).unwrap(), hs_inner(&y, &x, s).unwrap());
        }
    }
}
