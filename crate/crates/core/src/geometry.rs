//! Linear symplectic objects on standard ℝ^{2n}.
//!
//! Coordinates are always ordered `(x_1, …, x_n, y_1, …, y_n)`; index `i`
//! holds `x_{i+1}` and index `n + i` holds `y_{i+1}`. The complex structure
//! acts blockwise as `J(x, y) = (-y, x)`, so `ω₀(u, v) = ⟨Ju, v⟩`.
//!
//! The coisotropic subspace `ℝ^{n,k}` is spanned by all `x` axes and the
//! first `k` `y` axes. It splits as
//!
//! * `V₀`: the `x_{k+1..n}` axes, the characteristic (isotropic) directions,
//! * `V₁`: the `x_{1..k}` and `y_{1..k}` axes,
//! * `W₀`: the `y_{k+1..n}` axes, the normal directions.
//!
//! Leaves of the characteristic foliation are the affine planes `z + V₀`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default membership tolerance for `ℝ^{n,k}`.
pub const TOL_LEAF: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid dimensions n={n}, k={k}: need n >= 1 and 0 <= k <= n-1")]
    InvalidDimensions { n: usize, k: usize },
    #[error("point has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("point is not on the coisotropic subspace (normal component {normal:.3e} > {tol:.1e})")]
    NotOnCoisotropic { normal: f64, tol: f64 },
}

/// A point of phase space ℝ^{2n}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhasePoint(pub Vec<f64>);

impl PhasePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self, GeometryError> {
        if coords.is_empty() || coords.len() % 2 != 0 {
            return Err(GeometryError::LengthMismatch {
                expected: coords.len().max(2) + coords.len() % 2,
                got: coords.len(),
            });
        }
        Ok(Self(coords))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; 2 * n])
    }

    /// Half the dimension.
    pub fn n(&self) -> usize {
        self.0.len() / 2
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn dot(&self, other: &PhasePoint) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn sub(&self, other: &PhasePoint) -> PhasePoint {
        PhasePoint(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &PhasePoint) -> PhasePoint {
        PhasePoint(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, s: f64) -> PhasePoint {
        PhasePoint(self.0.iter().map(|a| a * s).collect())
    }
}

impl From<PhasePoint> for Vec<f64> {
    fn from(p: PhasePoint) -> Self {
        p.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `J(x, y) = (-y, x)` on a raw coordinate slice.
pub fn j_apply(p: &[f64], out: &mut [f64]) {
    let n = p.len() / 2;
    for i in 0..n {
        out[i] = -p[n + i];
        out[n + i] = p[i];
    }
}

pub fn apply_j(p: &PhasePoint) -> PhasePoint {
    let mut out = vec![0.0; p.0.len()];
    j_apply(&p.0, &mut out);
    PhasePoint(out)
}

/// Standard symplectic form `ω₀(u, v) = ⟨Ju, v⟩`.
pub fn omega(u: &PhasePoint, v: &PhasePoint) -> f64 {
    apply_j(u).dot(v)
}

/// Rotates every `(x_i, y_i)` plane by `angle`: the action of `e^{angle·J}`.
pub fn rotate_in_place(p: &mut [f64], angle: f64) {
    let n = p.len() / 2;
    let (s, c) = angle.sin_cos();
    for i in 0..n {
        let (x, y) = (p[i], p[n + i]);
        p[i] = c * x - s * y;
        p[n + i] = s * x + c * y;
    }
}

/// The pair `(n, k)` defining `ℝ^{n,k} ⊂ ℝ^{2n}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpace")]
pub struct CoisoSpace {
    n: usize,
    k: usize,
}

#[derive(Deserialize)]
struct RawSpace {
    n: usize,
    k: usize,
}

impl TryFrom<RawSpace> for CoisoSpace {
    type Error = GeometryError;
    fn try_from(raw: RawSpace) -> Result<Self, Self::Error> {
        CoisoSpace::new(raw.n, raw.k)
    }
}

impl CoisoSpace {
    pub fn new(n: usize, k: usize) -> Result<Self, GeometryError> {
        if n == 0 || k >= n {
            return Err(GeometryError::InvalidDimensions { n, k });
        }
        Ok(Self { n, k })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn ambient_dim(&self) -> usize {
        2 * self.n
    }

    pub fn dim(&self) -> usize {
        self.n + self.k
    }

    /// Coordinate indices spanning `V₀` (the `x_{k+1..n}` axes).
    pub fn v0_indices(&self) -> impl Iterator<Item = usize> {
        self.k..self.n
    }

    /// Coordinate indices spanning `V₁` (the `x_{1..k}` and `y_{1..k}` axes).
    pub fn v1_indices(&self) -> impl Iterator<Item = usize> {
        let (n, k) = (self.n, self.k);
        (0..k).chain(n..n + k)
    }

    /// Coordinate indices spanning `W₀` (the `y_{k+1..n}` axes).
    pub fn w0_indices(&self) -> impl Iterator<Item = usize> {
        self.n + self.k..2 * self.n
    }

    pub fn is_v0(&self, idx: usize) -> bool {
        idx >= self.k && idx < self.n
    }

    pub fn is_v1(&self, idx: usize) -> bool {
        idx < self.k || (idx >= self.n && idx < self.n + self.k)
    }

    /// Whether `idx` is a coordinate of `ℝ^{n,k}` (i.e. not in `W₀`).
    pub fn is_tangent(&self, idx: usize) -> bool {
        idx < self.n + self.k
    }

    pub fn check_point(&self, p: &PhasePoint) -> Result<(), GeometryError> {
        if p.0.len() != self.ambient_dim() {
            return Err(GeometryError::LengthMismatch {
                expected: self.ambient_dim(),
                got: p.0.len(),
            });
        }
        Ok(())
    }

    /// Largest `|y_i|`, `i > k`: the distance-like defect from `ℝ^{n,k}`.
    pub fn normal_defect(&self, p: &[f64]) -> f64 {
        self.w0_indices().map(|i| p[i].abs()).fold(0.0, f64::max)
    }

    pub fn contains(&self, p: &PhasePoint, tol: f64) -> bool {
        p.0.len() == self.ambient_dim() && self.normal_defect(&p.0) <= tol
    }

    /// Orthogonal projection onto `ℝ^{n,k}`.
    pub fn project_onto(&self, p: &PhasePoint) -> PhasePoint {
        let mut out = p.0.clone();
        for i in self.w0_indices() {
            out[i] = 0.0;
        }
        PhasePoint(out)
    }

    /// The involution `c_{n,k}`: negates `y_{k+1..n}`.
    pub fn involution(&self, p: &PhasePoint) -> PhasePoint {
        let mut out = p.0.clone();
        for i in self.w0_indices() {
            out[i] = -out[i];
        }
        PhasePoint(out)
    }
}

pub fn involution_c(space: &CoisoSpace, p: &PhasePoint) -> PhasePoint {
    space.involution(p)
}

/// A leaf `anchor + V₀` of the characteristic foliation.
///
/// Anchors are canonical: they lie in `ℝ^{n,k}` with zero `V₀` component,
/// so two leaves are equal exactly when their anchors are.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub anchor: PhasePoint,
}

impl Leaf {
    pub fn contains(&self, space: &CoisoSpace, p: &PhasePoint, tol: f64) -> bool {
        leaf_residual(space, &self.anchor, p) <= tol
    }
}

pub fn leaf_of(space: &CoisoSpace, p: &PhasePoint) -> Result<Leaf, GeometryError> {
    leaf_of_with_tol(space, p, TOL_LEAF)
}

pub fn leaf_of_with_tol(space: &CoisoSpace, p: &PhasePoint, tol: f64) -> Result<Leaf, GeometryError> {
    space.check_point(p)?;
    let normal = space.normal_defect(&p.0);
    if normal > tol {
        return Err(GeometryError::NotOnCoisotropic { normal, tol });
    }
    let mut anchor = p.0.clone();
    for i in space.v0_indices().chain(space.w0_indices()) {
        anchor[i] = 0.0;
    }
    Ok(Leaf { anchor: PhasePoint(anchor) })
}

/// Euclidean size of the failure of `p` and `q` to lie on a common leaf.
pub fn leaf_residual(space: &CoisoSpace, p: &PhasePoint, q: &PhasePoint) -> f64 {
    leaf_residual_raw(space, &p.0, &q.0)
}

pub(crate) fn leaf_residual_raw(space: &CoisoSpace, p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in space.w0_indices() {
        acc += p[i] * p[i] + q[i] * q[i];
    }
    for i in space.v1_indices() {
        let d = p[i] - q[i];
        acc += d * d;
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(v: &[f64]) -> PhasePoint {
        PhasePoint(v.to_vec())
    }

    #[test]
    fn j_examples() {
        assert_eq!(apply_j(&pt(&[1.0, 0.0])), pt(&[0.0, 1.0]));
        assert_eq!(apply_j(&apply_j(&pt(&[1.0, 0.0]))), pt(&[-1.0, 0.0]));
        let p = pt(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(apply_j(&p).dot(&p), 0.0);
    }

    #[test]
    fn involution_examples() {
        let s = CoisoSpace::new(2, 0).unwrap();
        assert_eq!(involution_c(&s, &pt(&[1.0, 2.0, 3.0, 4.0])), pt(&[1.0, 2.0, -3.0, -4.0]));
        let s = CoisoSpace::new(2, 1).unwrap();
        let p = pt(&[1.0, 2.0, 3.0, 0.0]);
        assert_eq!(involution_c(&s, &p), p);
    }

    #[test]
    fn space_rejects_bad_dimensions() {
        assert!(CoisoSpace::new(0, 0).is_err());
        assert!(CoisoSpace::new(2, 2).is_err());
        assert!(serde_json::from_str::<CoisoSpace>(r#"{"n":1,"k":1}"#).is_err());
    }

    #[test]
    fn subspace_dimensions() {
        for n in 1..5 {
            for k in 0..n {
                let s = CoisoSpace::new(n, k).unwrap();
                assert_eq!(s.v0_indices().count(), n - k);
                assert_eq!(s.v1_indices().count(), 2 * k);
                assert_eq!(s.w0_indices().count(), n - k);
                assert_eq!(s.dim(), n + k);
                // V₀, V₁, W₀ use disjoint coordinate axes, hence are orthogonal.
                let mut seen = vec![0u8; 2 * n];
                for i in s.v0_indices().chain(s.v1_indices()).chain(s.w0_indices()) {
                    seen[i] += 1;
                }
                assert!(seen.iter().all(|&c| c <= 1));
                assert!(s.v0_indices().chain(s.v1_indices()).all(|i| s.is_tangent(i)));
            }
        }
    }

    #[test]
    fn leaf_examples() {
        let s = CoisoSpace::new(2, 0).unwrap();
        assert_eq!(leaf_of(&s, &pt(&[1.0, 2.0, 0.0, 0.0])).unwrap().anchor, pt(&[0.0; 4]));
        let s = CoisoSpace::new(2, 1).unwrap();
        assert_eq!(
            leaf_of(&s, &pt(&[1.0, 2.0, 3.0, 0.0])).unwrap().anchor,
            pt(&[1.0, 0.0, 3.0, 0.0])
        );
        let s = CoisoSpace::new(1, 0).unwrap();
        assert_eq!(leaf_of(&s, &pt(&[5.0, 0.0])).unwrap().anchor, pt(&[0.0, 0.0]));
        assert!(matches!(
            leaf_of(&s, &pt(&[5.0, 1e-6])),
            Err(GeometryError::NotOnCoisotropic { .. })
        ));
        assert!(leaf_of_with_tol(&s, &pt(&[5.0, 1e-6]), 1e-5).is_ok());
    }

    #[test]
    fn leaf_residual_examples() {
        let s = CoisoSpace::new(2, 1).unwrap();
        let p = pt(&[1.0, 2.0, 3.0, 0.0]);
        assert_eq!(leaf_residual(&s, &p, &p), 0.0);
        assert_eq!(leaf_residual(&s, &p, &pt(&[1.0, 7.0, 3.0, 0.0])), 0.0);
        let s1 = CoisoSpace::new(1, 0).unwrap();
        assert_eq!(leaf_residual(&s1, &pt(&[1.0, 0.0]), &pt(&[-3.0, 0.0])), 0.0);
        assert!(leaf_residual(&s, &p, &pt(&[1.5, 2.0, 3.0, 0.0])) > 0.4);
    }

    #[test]
    fn residual_zero_iff_same_leaf_on_grid() {
        // Exhaustive over a small rational grid on ℝ^{2,1} = (x1, x2, y1).
        let s = CoisoSpace::new(2, 1).unwrap();
        let vals = [-1.0, -0.5, 0.0, 0.5];
        let mut pts = Vec::new();
        for &a in &vals {
            for &b in &vals {
                for &c in &vals {
                    pts.push(pt(&[a, b, c, 0.0]));
                }
            }
        }
        for p in &pts {
            for q in &pts {
                let same = leaf_of(&s, p).unwrap() == leaf_of(&s, q).unwrap();
                assert_eq!(leaf_residual(&s, p, q) == 0.0, same);
            }
        }
    }

    fn vec_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, len)
    }

    proptest! {
        #[test]
        fn j_is_isometric_complex_structure(v in vec_strategy(6)) {
            let p = PhasePoint(v);
            let jp = apply_j(&p);
            prop_assert!((jp.norm() - p.norm()).abs() < 1e-12);
            let jjp = apply_j(&jp);
            for (a, b) in jjp.0.iter().zip(&p.0) {
                prop_assert_eq!(*a, -*b);
            }
            prop_assert!(jp.dot(&p).abs() < 1e-12);
        }

        #[test]
        fn omega_is_skew(u in vec_strategy(4), v in vec_strategy(4)) {
            let (u, v) = (PhasePoint(u), PhasePoint(v));
            prop_assert!((omega(&u, &v) + omega(&v, &u)).abs() < 1e-10);
        }

        #[test]
        fn omega_nondegenerate(u in vec_strategy(4)) {
            let u = PhasePoint(u);
            // ω₀(u, Ju) = ⟨Ju, Ju⟩ = |u|².
            let val = omega(&u, &apply_j(&u));
            prop_assert!((val - u.norm().powi(2)).abs() < 1e-9);
        }

        #[test]
        fn lagrangian_involution_is_antisymplectic(u in vec_strategy(2), v in vec_strategy(2)) {
            let s = CoisoSpace::new(1, 0).unwrap();
            let (u, v) = (PhasePoint(u), PhasePoint(v));
            let lhs = omega(&s.involution(&u), &s.involution(&v));
            prop_assert!((lhs + omega(&u, &v)).abs() < 1e-10);
        }

        #[test]
        fn involution_is_isometric_involution(v in vec_strategy(6), k in 0usize..3) {
            let s = CoisoSpace::new(3, k).unwrap();
            let p = PhasePoint(v);
            let cp = s.involution(&p);
            prop_assert_eq!(s.involution(&cp), p.clone());
            prop_assert!((cp.norm() - p.norm()).abs() < 1e-12);
            prop_assert_eq!(cp == p, s.contains(&p, 0.0));
        }
    }
}
