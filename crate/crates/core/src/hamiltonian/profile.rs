//! `C¹` piecewise-cubic Hermite profiles `f: ℝ → ℝ`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::HamiltonianError;

/// What a profile is used for; decides which constraints apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    /// `f(|x − a|²)` on the ball pair `(B²ⁿ(a,1), B^{n,k}(r))`.
    LowerBound,
    /// Continuation `f(q_Π)` beyond `{q_Π ≤ 1}`.
    Extension,
    /// Any other simple radial Hamiltonian.
    Simple,
    /// A cutoff `ρ` with `ρ ≡ 1` near zero.
    Cutoff,
}

/// Knots, values and derivatives of a `C¹` piecewise cubic, plus the metadata
/// that ties it to a Hamiltonian.
///
/// Outside the knot range the profile continues linearly with the endpoint
/// derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
    pub mode: ProfileMode,
    /// Center `a`; empty when the profile is not attached to a center.
    #[serde(default)]
    pub a: Vec<f64>,
    #[serde(default)]
    pub eps: f64,
    #[serde(rename = "m_H", default)]
    pub m_h: f64,
    #[serde(rename = "N_scale", default)]
    pub n_scale: Option<f64>,
}

impl RadialProfile {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, derivs: Vec<f64>, mode: ProfileMode) -> Result<Self, HamiltonianError> {
        let p = Self { knots, values, derivs, mode, a: Vec::new(), eps: 0.0, m_h: 0.0, n_scale: None };
        p.validate()?;
        Ok(p)
    }

    /// Structural checks; call after deserializing untrusted data.
    pub fn validate(&self) -> Result<(), HamiltonianError> {
        let bad = |msg: String| Err(HamiltonianError::InvalidProfile(msg));
        if self.knots.is_empty() {
            return bad("profile needs at least one knot".into());
        }
        if self.values.len() != self.knots.len() || self.derivs.len() != self.knots.len() {
            return bad(format!(
                "knots, values and derivs lengths differ: {}, {}, {}",
                self.knots.len(),
                self.values.len(),
                self.derivs.len()
            ));
        }
        let finite = self.knots.iter().chain(&self.values).chain(&self.derivs).all(|v| v.is_finite());
        if !finite {
            return bad("profile data must be finite".into());
        }
        if self.knots.windows(2).any(|w| w[1] <= w[0]) {
            return bad("knots must be strictly increasing".into());
        }
        Ok(())
    }

    fn segment(&self, t: f64) -> Option<usize> {
        let n = self.knots.len();
        if n < 2 || t < self.knots[0] || t > self.knots[n - 1] {
            return None;
        }
        let j = self.knots.partition_point(|&k| k <= t);
        Some(j.saturating_sub(1).min(n - 2))
    }

    /// `(f, f′, f″)` at `t`.
    pub fn eval_all(&self, t: f64) -> (f64, f64, f64) {
        let n = self.knots.len();
        let Some(j) = self.segment(t) else {
            let i = if t < self.knots[0] { 0 } else { n - 1 };
            let d = self.derivs[i];
            return (self.values[i] + d * (t - self.knots[i]), d, 0.0);
        };
        let (t0, t1) = (self.knots[j], self.knots[j + 1]);
        let (v0, v1, d0, d1) = (self.values[j], self.values[j + 1], self.derivs[j], self.derivs[j + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (s2, s3) = (s * s, s * s * s);
        let f = (2.0 * s3 - 3.0 * s2 + 1.0) * v0
            + (s3 - 2.0 * s2 + s) * h * d0
            + (-2.0 * s3 + 3.0 * s2) * v1
            + (s3 - s2) * h * d1;
        let fp = (6.0 * s2 - 6.0 * s) / h * v0
            + (3.0 * s2 - 4.0 * s + 1.0) * d0
            + (6.0 * s - 6.0 * s2) / h * v1
            + (3.0 * s2 - 2.0 * s) * d1;
        let fpp = ((12.0 * s - 6.0) * (v0 - v1) / h + (6.0 * s - 4.0) * d0 + (6.0 * s - 2.0) * d1) / h;
        (f, fp, fpp)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval_all(t).0
    }

    pub fn deriv(&self, t: f64) -> f64 {
        self.eval_all(t).1
    }

    pub fn second_deriv(&self, t: f64) -> f64 {
        self.eval_all(t).2
    }

    /// Largest `t` such that `f ≡ 0` on `(-∞, t]`, if any.
    pub fn zero_until(&self) -> Option<f64> {
        let zero = |i: usize| self.values[i] == 0.0 && self.derivs[i] == 0.0;
        if !zero(0) {
            return None;
        }
        let mut j = 0;
        while j + 1 < self.knots.len() && zero(j + 1) {
            j += 1;
        }
        Some(self.knots[j])
    }

    /// Smallest `t` such that `f` is constant on `[t, ∞)`, if any.
    pub fn constant_from(&self) -> Option<f64> {
        let n = self.knots.len();
        let last = self.values[n - 1];
        if self.derivs[n - 1] != 0.0 {
            return None;
        }
        let mut j = n - 1;
        while j > 0 && self.derivs[j - 1] == 0.0 && self.values[j - 1] == last {
            j -= 1;
        }
        Some(self.knots[j])
    }

    /// Value at `+∞` when the profile ends flat.
    pub fn plateau(&self) -> Option<f64> {
        self.constant_from().map(|_| self.values[self.values.len() - 1])
    }

    /// A grid of `per_segment` points in every knot interval over `[lo, hi]`,
    /// knots included.
    pub fn grid(&self, lo: f64, hi: f64, per_segment: usize) -> Vec<f64> {
        let mut pts: Vec<f64> = vec![lo, hi];
        let mut edges: Vec<f64> = self.knots.iter().copied().filter(|&k| k > lo && k < hi).collect();
        pts.extend(&edges);
        edges.insert(0, lo);
        edges.push(hi);
        for w in edges.windows(2) {
            for i in 1..per_segment {
                pts.push(w[0] + (w[1] - w[0]) * i as f64 / per_segment as f64);
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// `sup |f′|` and `sup |f″|` over `[lo, hi]` (sampled; exact at knots).
    pub fn derivative_bounds(&self, lo: f64, hi: f64) -> (f64, f64) {
        self.grid(lo, hi, 64).into_iter().fold((0.0f64, 0.0f64), |(a, b), t| {
            let (_, d1, d2) = self.eval_all(t);
            // f″ jumps at knots; look at both one-sided limits.
            let d2l = self.eval_all(t - 1e-12 * (1.0 + t.abs())).2;
            (a.max(d1.abs()), b.max(d2.abs()).max(d2l.abs()))
        })
    }

    /// A `C¹` step from `0` at `u0` to `height` at `u1`: `height·(3s² − 2s³)`.
    pub fn smooth_step(u0: f64, u1: f64, height: f64) -> Result<Self, HamiltonianError> {
        let mut p = Self::new(vec![u0, u1], vec![0.0, height], vec![0.0, 0.0], ProfileMode::Simple)?;
        p.m_h = height;
        Ok(p)
    }

    /// `f(t) = slope·t`.
    pub fn linear(slope: f64) -> Result<Self, HamiltonianError> {
        Self::new(vec![0.0, 1.0], vec![0.0, slope], vec![slope, slope], ProfileMode::Simple)
    }

    /// `ρ ≡ 1` on `(-∞, inner]`, `ρ ≡ 0` on `[outer, ∞)`.
    pub fn cutoff(inner: f64, outer: f64) -> Result<Self, HamiltonianError> {
        if !(outer > inner) {
            return Err(HamiltonianError::InvalidParameter(format!("cutoff needs outer > inner, got {inner} and {outer}")));
        }
        Self::new(vec![inner, outer], vec![1.0, 0.0], vec![0.0, 0.0], ProfileMode::Cutoff)
    }

    /// Extension profile: `f ≡ m` on `(-∞, 1]`, then a quadratic ramp that
    /// joins `(π/2 + ε)·r` tangentially.
    ///
    /// With `σ = π/2 + ε` and ramp width `w = 2(m/σ − 1)` the profile is
    /// `m + σ(r−1)²/(2w)` on `[1, 1+w]` and exactly `σ·r` afterwards.
    pub fn extension(m_h: f64, eps: f64) -> Result<Self, HamiltonianError> {
        let sigma = FRAC_PI_2 + eps;
        if !(eps > 0.0) || !(m_h > sigma) {
            return Err(HamiltonianError::InvalidParameter(format!(
                "extension needs eps > 0 and m(H) > π/2 + eps, got m(H) = {m_h}, eps = {eps}"
            )));
        }
        let w = 2.0 * (m_h / sigma - 1.0);
        let mut p =
            Self::new(vec![1.0, 1.0 + w], vec![m_h, m_h + 0.5 * sigma * w], vec![0.0, sigma], ProfileMode::Extension)?;
        p.eps = eps;
        p.m_h = m_h;
        Ok(p)
    }

    /// Continuation for `m(H) ≤ π/2`: a unit-width ramp to the given far slope.
    ///
    /// The growth `f(r) ≥ (π/2 + ε) r` cannot hold here. A slope below `π/2`
    /// keeps the region `{q_Π > 1}` free of time-one chords.
    pub fn subcritical_extension(m_h: f64, slope: f64) -> Result<Self, HamiltonianError> {
        if !(slope > 0.0) || !(m_h >= 0.0) {
            return Err(HamiltonianError::InvalidParameter(format!(
                "subcritical extension needs slope > 0 and m(H) >= 0, got {slope} and {m_h}"
            )));
        }
        let mut p =
            Self::new(vec![1.0, 2.0], vec![m_h, m_h + 0.5 * slope], vec![0.0, slope], ProfileMode::Extension)?;
        p.eps = slope - FRAC_PI_2;
        p.m_h = m_h;
        Ok(p)
    }

    /// The canonical profile for the ball `B²ⁿ(a, 1)`, `|a| = abs_a < 1`.
    ///
    /// `f′` is piecewise linear: zero up to `|a|² + ε`, then it interpolates
    /// `arccos(|a|/√t) − δ` (a concave function, so the interpolant stays
    /// below it), then drops to zero on `[1 − 2ε, 1 − ε]`. `f` is its exact
    /// integral, a piecewise quadratic, stored in Hermite form.
    pub fn lower_bound_canonical(abs_a: f64, eps: f64, delta: f64, n_knots: usize) -> Result<Self, HamiltonianError> {
        let c2 = abs_a * abs_a;
        if !(0.0..1.0).contains(&abs_a) || !(eps > 0.0) || !(delta > 0.0) || c2 + 4.0 * eps >= 1.0 {
            return Err(HamiltonianError::InvalidParameter(format!(
                "lower-bound profile needs 0 <= |a| < 1, eps > 0, delta > 0 and |a|² + 4ε < 1, got |a| = {abs_a}, eps = {eps}, delta = {delta}"
            )));
        }
        let bound = |t: f64| (abs_a / t.sqrt()).min(1.0).acos();
        let (t_a, t_b, t_c, t_d) = (c2 + eps, c2 + 2.0 * eps, 1.0 - 2.0 * eps, 1.0 - eps);
        let m = n_knots.max(2);
        let mut knots = vec![0.0, t_a];
        let mut slopes = vec![0.0, 0.0];
        // Quadratic clustering toward t_b, where the bound has a square-root
        // singularity when |a| > 0.
        for j in 0..=m {
            let s = j as f64 / m as f64;
            let t = t_b + (t_c - t_b) * s * s;
            knots.push(t);
            slopes.push((bound(t) - delta).max(0.0));
        }
        knots.push(t_d);
        slopes.push(0.0);
        knots.push(1.0);
        slopes.push(0.0);
        let mut values = vec![0.0; knots.len()];
        for j in 1..knots.len() {
            values[j] = values[j - 1] + 0.5 * (knots[j] - knots[j - 1]) * (slopes[j - 1] + slopes[j]);
        }
        let m_h = *values.last().expect("nonempty");
        let mut p = Self::new(knots, values, slopes, ProfileMode::LowerBound)?;
        p.eps = eps;
        p.m_h = m_h;
        Ok(p)
    }

    /// Checks the lower-bound constraints on a grid; returns the smallest
    /// margin `arccos(|a|/√t) − f′(t)` over `t > |a|² + ε`.
    pub fn check_lower_bound(&self, abs_a: f64, eps: f64) -> Result<f64, HamiltonianError> {
        let c2 = abs_a * abs_a;
        let fail = |msg: String| Err(HamiltonianError::ConstraintViolated(msg));
        for t in self.grid(0.0, c2 + eps, 32) {
            if self.value(t).abs() > 1e-15 {
                return fail(format!("f({t}) = {} but f must vanish on [0, |a|² + ε]", self.value(t)));
            }
        }
        for t in self.grid(1.0 - eps, 1.0, 32) {
            if self.deriv(t).abs() > 1e-12 {
                return fail(format!("f′({t}) = {} but f′ must vanish on [1 − ε, 1]", self.deriv(t)));
            }
        }
        let mut margin = f64::INFINITY;
        for t in self.grid(c2 + eps, 1.0, 64) {
            if t <= c2 + eps {
                continue;
            }
            let (f, d, _) = self.eval_all(t);
            if d < -1e-15 || f < -1e-15 || f > self.m_h + 1e-12 {
                return fail(format!("f({t}) = {f}, f′ = {d} outside 0 <= f <= m(H), f′ >= 0"));
            }
            let bound = (abs_a / t.sqrt()).min(1.0).acos();
            margin = margin.min(bound - d);
            if t > c2 + 2.0 * eps && t < 1.0 - eps && d <= 0.0 {
                return fail(format!("f′({t}) = {d} must be positive inside (|a|² + 2ε, 1 − ε)"));
            }
        }
        if margin <= 1e-12 {
            return fail(format!("f′ comes within {margin:e} of the arccos bound"));
        }
        Ok(margin)
    }

    /// Checks the extension constraints with `σ = π/2 + ε` up to `r_max`.
    pub fn check_extension(&self, eps: f64, r_max: f64) -> Result<(), HamiltonianError> {
        let sigma = FRAC_PI_2 + eps;
        let fail = |msg: String| Err(HamiltonianError::ConstraintViolated(msg));
        for r in self.grid(0.0, r_max, 64) {
            let (f, d, _) = self.eval_all(r);
            if r <= 1.0 && (f - self.m_h).abs() > 1e-12 {
                return fail(format!("f({r}) = {f} differs from m(H) = {}", self.m_h));
            }
            if f < sigma * r - 1e-12 * (1.0 + r) {
                return fail(format!("f({r}) = {f} < (π/2 + ε)·r"));
            }
            if r > 1.0 && !(d > 0.0 && d <= sigma + 1e-12) {
                return fail(format!("f′({r}) = {d} outside (0, π/2 + ε]"));
            }
            if d * r - f > 1e-12 * (1.0 + r) {
                return fail(format!("f′(r)·r − f(r) = {} > 0 at r = {r}", d * r - f));
            }
        }
        let far = *self.knots.last().expect("nonempty");
        if (self.deriv(far + 1.0) - sigma).abs() > 1e-12 {
            return fail("far slope differs from π/2 + ε".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hermite_reproduces_cubics() {
        // f(t) = t³ − 2t on two segments.
        let f = |t: f64| t * t * t - 2.0 * t;
        let df = |t: f64| 3.0 * t * t - 2.0;
        let knots = vec![-1.0, 0.5, 2.0];
        let p = RadialProfile::new(
            knots.clone(),
            knots.iter().map(|&t| f(t)).collect(),
            knots.iter().map(|&t| df(t)).collect(),
            ProfileMode::Simple,
        )
        .unwrap();
        for t in [-1.0, -0.3, 0.5, 1.1, 2.0] {
            let (v, d, dd) = p.eval_all(t);
            assert_abs_diff_eq!(v, f(t), epsilon = 1e-13);
            assert_abs_diff_eq!(d, df(t), epsilon = 1e-12);
            assert_abs_diff_eq!(dd, 6.0 * t, epsilon = 1e-11);
        }
        // Linear continuation outside the knots.
        assert_abs_diff_eq!(p.value(3.0), f(2.0) + df(2.0), epsilon = 1e-12);
        assert_eq!(p.second_deriv(3.0), 0.0);
    }

    #[test]
    fn rejects_malformed_profiles() {
        assert!(RadialProfile::new(vec![], vec![], vec![], ProfileMode::Simple).is_err());
        assert!(RadialProfile::new(vec![0.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0], ProfileMode::Simple).is_err());
        assert!(RadialProfile::new(vec![0.0, 1.0], vec![0.0], vec![0.0, 0.0], ProfileMode::Simple).is_err());
        assert!(RadialProfile::new(vec![0.0, 1.0], vec![0.0, f64::NAN], vec![0.0, 0.0], ProfileMode::Simple).is_err());
    }

    #[test]
    fn smooth_step_shape() {
        let p = RadialProfile::smooth_step(0.1, 0.9, 2.0).unwrap();
        assert_eq!(p.value(0.0), 0.0);
        assert_eq!(p.value(5.0), 2.0);
        assert_abs_diff_eq!(p.value(0.5), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.deriv(0.5), 2.0 * 1.5 / 0.8, epsilon = 1e-13);
        assert_eq!(p.zero_until(), Some(0.1));
        assert_eq!(p.constant_from(), Some(0.9));
        assert_eq!(p.plateau(), Some(2.0));
        assert_eq!(RadialProfile::linear(1.0).unwrap().plateau(), None);
    }

    #[test]
    fn extension_profile_constraints() {
        for (m, eps) in [(2.0, 0.02), (5.0, 0.1), (1.6, 0.01)] {
            let p = RadialProfile::extension(m, eps).unwrap();
            p.check_extension(eps, 50.0).unwrap();
            let sigma = FRAC_PI_2 + eps;
            assert_abs_diff_eq!(p.value(10.0), sigma * 10.0, epsilon = 1e-12);
            assert_abs_diff_eq!(p.deriv(10.0), sigma, epsilon = 1e-15);
        }
        assert!(RadialProfile::extension(1.5, 0.01).is_err());
        assert!(RadialProfile::extension(2.0, 0.0).is_err());
    }

    #[test]
    fn subcritical_extension_has_slope_below_half_pi() {
        let p = RadialProfile::subcritical_extension(0.1, 1.0).unwrap();
        assert_eq!(p.value(0.5), 0.1);
        assert_abs_diff_eq!(p.deriv(7.0), 1.0);
        assert!(p.check_extension(p.eps, 10.0).is_err());
    }

    #[test]
    fn canonical_lower_bound_profiles() {
        let area = |r: f64| r.asin() - r * (1.0 - r * r).sqrt();
        for abs_a in [0.0, 0.5, 0.8] {
            let p = RadialProfile::lower_bound_canonical(abs_a, 1e-3, 1e-3, 400).unwrap();
            let margin = p.check_lower_bound(abs_a, 1e-3).unwrap();
            assert!(margin > 0.0);
            let r = (1.0 - abs_a * abs_a).sqrt();
            assert!(p.m_h <= area(r));
            assert!(area(r) - p.m_h < 2e-2, "|a| = {abs_a}: m(H) = {}, A(r) = {}", p.m_h, area(r));
            assert_eq!(p.value(1.0), p.m_h);
        }
    }

    #[test]
    fn violating_profile_is_rejected() {
        // f′ = π/2 everywhere reaches the bound at |a| = 0.
        let p = RadialProfile::linear(FRAC_PI_2).unwrap();
        assert!(p.check_lower_bound(0.0, 1e-3).is_err());
    }

    #[test]
    fn json_layout_uses_expected_keys() {
        let p = RadialProfile::extension(2.0, 0.05).unwrap();
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        for key in ["knots", "values", "derivs", "mode", "a", "eps", "m_H", "N_scale"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["mode"], "extension");
        let back: RadialProfile = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }
}
