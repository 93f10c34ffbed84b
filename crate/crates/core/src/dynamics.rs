//! Hamiltonian flows `ẋ = J∇H(x)`, leafwise return times and the
//! admissibility check.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{j_apply, leaf_residual_raw, norm, rotate_in_place, CoisoSpace, PhasePoint, TOL_LEAF};
use crate::hamiltonian::{q_pi_raw, Hamiltonian, RadialHamiltonian, SimpleHamiltonian};
use crate::quadrature::golden_min;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepFailure { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// A vector field on ℝ^d, written into `out`.
pub type Field<'a> = dyn Fn(&[f64], &mut [f64]) + Sync + 'a;

/// `X_H = J∇H`.
pub fn hamiltonian_field(ham: &dyn Hamiltonian) -> impl Fn(&[f64], &mut [f64]) + Sync + '_ {
    move |x, out| {
        let mut g = vec![0.0; x.len()];
        ham.gradient(x, &mut g);
        j_apply(&g, out);
    }
}

const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl Stages {
    fn new(d: usize) -> Self {
        Self { k: std::array::from_fn(|_| vec![0.0; d]), tmp: vec![0.0; d] }
    }

    /// One Dormand–Prince step from `(y, k[0] = f(y))`; writes `y + h·Σ b_i k_i`
    /// into `y1` and `f(y1)` into `k[6]`.
    fn step(&mut self, f: &Field, y: &[f64], h: f64, y1: &mut [f64]) {
        let rows: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
        for (s, row) in rows.iter().enumerate() {
            for i in 0..y.len() {
                let mut acc = 0.0;
                for (j, a) in row.iter().enumerate() {
                    acc += a * self.k[j][i];
                }
                self.tmp[i] = y[i] + h * acc;
            }
            let (_, rest) = self.k.split_at_mut(s + 1);
            f(&self.tmp, &mut rest[0]);
        }
        for i in 0..y.len() {
            let mut acc = 0.0;
            for (j, b) in B.iter().enumerate() {
                acc += b * self.k[j][i];
            }
            y1[i] = y[i] + h * acc;
        }
        f(y1, &mut self.k[6]);
    }

    fn error_norm(&self, y0: &[f64], y1: &[f64], h: f64, tol: f64) -> f64 {
        let d = y0.len();
        let mut acc = 0.0;
        for i in 0..d {
            let mut e = 0.0;
            for (j, w) in E.iter().enumerate() {
                e += w * self.k[j][i];
            }
            let sc = tol + tol * y0[i].abs().max(y1[i].abs());
            acc += (h * e / sc).powi(2);
        }
        (acc / d as f64).sqrt()
    }
}

/// Accepted steps of an adaptive integration together with the field, so
/// the solution can be evaluated at any time in range.
pub struct Solution<'a> {
    field: &'a Field<'a>,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl<'a> Solution<'a> {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("nonempty")
    }

    /// The state at `t`, from one Dormand–Prince step started at the
    /// preceding accepted step.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let t = t.clamp(self.times[0], self.t_end());
        let i = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        let y0 = &self.states[i];
        let h = t - self.times[i];
        if h == 0.0 {
            return y0.clone();
        }
        let mut st = Stages::new(y0.len());
        (self.field)(y0, &mut st.k[0]);
        let mut y1 = vec![0.0; y0.len()];
        st.step(self.field, y0, h, &mut y1);
        y1
    }
}

/// Integrates `ẏ = f(y)` on `[0, t_end]` with Dormand–Prince 5(4) and
/// local error control `tol`.
pub fn integrate_field<'a>(f: &'a Field<'a>, y0: &[f64], t_end: f64, tol: f64) -> Result<Solution<'a>, DynamicsError> {
    if !(tol > 0.0) || !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(DynamicsError::InvalidInput(format!("need tol > 0 and finite t_end >= 0, got {tol} and {t_end}")));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::NonFinite { t: 0.0 });
    }
    const MAX_STEPS: usize = 2_000_000;
    let d = y0.len();
    let mut sol = Solution { field: f, times: vec![0.0], states: vec![y0.to_vec()] };
    if t_end == 0.0 {
        return Ok(sol);
    }
    let mut st = Stages::new(d);
    let mut y = y0.to_vec();
    let mut y1 = vec![0.0; d];
    f(&y, &mut st.k[0]);
    let mut t = 0.0;
    let mut h = {
        let fy = norm(&st.k[0]) / (d as f64).sqrt();
        let yy = norm(&y) / (d as f64).sqrt();
        if fy > 1e-10 {
            (0.01 * yy.max(1e-3) / fy).min(t_end).max(1e-10)
        } else {
            t_end.min(0.1)
        }
    };
    for _ in 0..MAX_STEPS {
        if t >= t_end {
            return Ok(sol);
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        if h < 1e-14 * t.abs().max(1.0) && !last {
            return Err(DynamicsError::StepFailure { t, h });
        }
        st.step(f, &y, h, &mut y1);
        if y1.iter().any(|v| !v.is_finite()) {
            h *= 0.2;
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(DynamicsError::NonFinite { t });
            }
            continue;
        }
        let err = st.error_norm(&y, &y1, h, tol);
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        if err <= 1.0 {
            t = if last { t_end } else { t + h };
            std::mem::swap(&mut y, &mut y1);
            let (k0, rest) = st.k.split_at_mut(1);
            k0[0].copy_from_slice(&rest[5]);
            sol.times.push(t);
            sol.states.push(y.clone());
            h *= factor;
        } else {
            h *= factor.min(1.0);
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(DynamicsError::StepFailure { t, h });
            }
        }
    }
    Err(DynamicsError::TooManySteps { t })
}

/// Times, states and energies of a Hamiltonian trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    pub energy: Vec<f64>,
}

impl TrajectorySample {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_energy_drift(&self) -> f64 {
        self.energy.first().map_or(0.0, |e0| self.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max))
    }

    /// CSV rows `t, x_1..x_n, y_1..y_n, H, q_Π`, plus `r2 = |x − a|²` when a
    /// center is given. Floats use round-trip scientific notation.
    pub fn write_csv<W: Write>(
        &self,
        out: &mut W,
        space: &CoisoSpace,
        n_scale: f64,
        center: Option<&PhasePoint>,
        header_comment: Option<&str>,
    ) -> io::Result<()> {
        if let Some(c) = header_comment {
            writeln!(out, "# {c}")?;
        }
        let n = space.n();
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=n).map(|i| format!("x{i}")));
        cols.extend((1..=n).map(|i| format!("y{i}")));
        cols.push("H".into());
        cols.push("q_pi".into());
        if center.is_some() {
            cols.push("r2".into());
        }
        writeln!(out, "{}", cols.join(","))?;
        for ((t, p), e) in self.times.iter().zip(&self.points).zip(&self.energy) {
            let mut row = vec![format!("{t:.16e}")];
            row.extend(p.0.iter().map(|v| format!("{v:.16e}")));
            row.push(format!("{e:.16e}"));
            row.push(format!("{:.16e}", q_pi_raw(space, n_scale, &p.0)));
            if let Some(a) = center {
                let r2: f64 = p.0.iter().zip(&a.0).map(|(x, c)| (x - c) * (x - c)).sum();
                row.push(format!("{r2:.16e}"));
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Integrates `ẋ = J∇H(x)` on `[0, t_max]` and records every accepted step.
pub fn integrate(ham: &dyn Hamiltonian, x0: &PhasePoint, t_max: f64, tol: f64) -> Result<TrajectorySample, DynamicsError> {
    if x0.0.len() != ham.dim() {
        return Err(DynamicsError::InvalidInput(format!("x0 has length {}, expected {}", x0.0.len(), ham.dim())));
    }
    let field = hamiltonian_field(ham);
    let sol = integrate_field(&field, &x0.0, t_max, tol)?;
    Ok(sample_solution(ham, &sol))
}

/// Like [`integrate`] but also samples the dense solution every `dt_out`.
pub fn integrate_uniform(
    ham: &dyn Hamiltonian,
    x0: &PhasePoint,
    t_max: f64,
    tol: f64,
    dt_out: f64,
) -> Result<TrajectorySample, DynamicsError> {
    if !(dt_out > 0.0) {
        return Err(DynamicsError::InvalidInput(format!("dt_out must be positive, got {dt_out}")));
    }
    if x0.0.len() != ham.dim() {
        return Err(DynamicsError::InvalidInput(format!("x0 has length {}, expected {}", x0.0.len(), ham.dim())));
    }
    let field = hamiltonian_field(ham);
    let sol = integrate_field(&field, &x0.0, t_max, tol)?;
    let steps = (t_max / dt_out).round() as usize;
    let mut times: Vec<f64> = (0..=steps).map(|i| (i as f64 * dt_out).min(t_max)).collect();
    if *times.last().expect("nonempty") < t_max {
        times.push(t_max);
    }
    let points: Vec<PhasePoint> = times.iter().map(|&t| PhasePoint(sol.eval(t))).collect();
    let energy = points.iter().map(|p| ham.value(&p.0)).collect();
    Ok(TrajectorySample { times, points, energy })
}

fn sample_solution(ham: &dyn Hamiltonian, sol: &Solution) -> TrajectorySample {
    let points: Vec<PhasePoint> = sol.states.iter().map(|s| PhasePoint(s.clone())).collect();
    let energy = points.iter().map(|p| ham.value(&p.0)).collect();
    TrajectorySample { times: sol.times.clone(), points, energy }
}

/// `a + e^{bJt}(x0 − a)` with `b = 2f′(|x0 − a|²)`.
pub fn closed_form_radial(ham: &RadialHamiltonian, x0: &PhasePoint, t: f64) -> PhasePoint {
    let mut z = x0.sub(&ham.center);
    let b = ham.angular_speed(&x0.0);
    if b != 0.0 {
        rotate_in_place(&mut z.0, b * t);
    }
    z.add(&ham.center)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "T", rename_all = "snake_case")]
pub enum ReturnTime {
    /// `x0` is a rest point; it never leaves its leaf.
    Constant,
    Finite(f64),
    /// No return in `(0, T_max]`.
    Infinite,
}

impl ReturnTime {
    pub fn finite(&self) -> Option<f64> {
        match self {
            ReturnTime::Finite(t) => Some(*t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnEvent {
    pub time: ReturnTime,
    pub residual: f64,
    pub initial: PhasePoint,
}

/// Grid resolution and acceptance threshold for return detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnOptions {
    pub tol: f64,
    pub grid: usize,
    /// Accept a minimum of the leaf residual below `tol_event·max(1, |x0|)`.
    pub tol_event: f64,
}

impl Default for ReturnOptions {
    fn default() -> Self {
        Self { tol: 1e-12, grid: 1000, tol_event: 1e-7 }
    }
}

/// First `T ∈ (0, T_max]` with `x(T)` on the leaf of `x0`.
pub fn return_time(space: &CoisoSpace, ham: &dyn Hamiltonian, x0: &PhasePoint, t_max: f64) -> Result<ReturnEvent, DynamicsError> {
    return_time_with(space, ham, x0, t_max, &ReturnOptions::default())
}

pub fn return_time_with(
    space: &CoisoSpace,
    ham: &dyn Hamiltonian,
    x0: &PhasePoint,
    t_max: f64,
    opts: &ReturnOptions,
) -> Result<ReturnEvent, DynamicsError> {
    if x0.0.len() != space.ambient_dim() || !space.contains(x0, TOL_LEAF) {
        return Err(DynamicsError::InvalidInput("x0 must lie on the coisotropic subspace".into()));
    }
    if !(t_max > 0.0) {
        return Err(DynamicsError::InvalidInput(format!("T_max must be positive, got {t_max}")));
    }
    let mut g = vec![0.0; x0.0.len()];
    ham.gradient(&x0.0, &mut g);
    if norm(&g) < 1e-12 {
        return Ok(ReturnEvent { time: ReturnTime::Constant, residual: 0.0, initial: x0.clone() });
    }
    let field = hamiltonian_field(ham);
    let sol = integrate_field(&field, &x0.0, t_max, opts.tol)?;
    let r = |t: f64| leaf_residual_raw(space, &x0.0, &sol.eval(t));
    let m = opts.grid.max(4);
    let ts: Vec<f64> = (0..=m).map(|i| t_max * i as f64 / m as f64).collect();
    let rs: Vec<f64> = ts.iter().map(|&t| r(t)).collect();
    let accept = opts.tol_event * x0.norm().max(1.0);
    let mut best = f64::INFINITY;
    for i in 1..=m {
        let left = rs[i] <= rs[i - 1];
        let right = i == m || rs[i] <= rs[i + 1];
        if !(left && right) {
            continue;
        }
        let hi = if i == m { ts[m] } else { ts[i + 1] };
        let (t, v) = golden_min(&r, ts[i - 1], hi, 1e-13 * t_max.max(1.0));
        best = best.min(v);
        if v <= accept && t > 0.0 {
            return Ok(ReturnEvent { time: ReturnTime::Finite(t), residual: v, initial: x0.clone() });
        }
    }
    Ok(ReturnEvent { time: ReturnTime::Infinite, residual: best, initial: x0.clone() })
}

/// Sampling parameters for [`is_admissible`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_lowdisc: usize,
    pub n_random: usize,
    pub seed: u64,
    pub t_max: f64,
    pub tol: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { n_lowdisc: 128, n_random: 64, seed: 0, t_max: 2.0, tol: 1e-11 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissibilityStatus {
    /// The radial criterion `|f′(u)| < arccos(|a|/√u)` holds on a fine grid
    /// and no sampled orbit returns by time 1.
    Certified,
    /// No sampled orbit returns by time 1; no analytic criterion applies.
    SampleTested,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticCheck {
    pub pass: bool,
    /// Smallest `arccos(|a|/√u) − |f′(u)|` over grid points with `f′ ≠ 0`.
    pub worst_margin: f64,
    pub worst_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub status: AdmissibilityStatus,
    pub analytic: Option<AnalyticCheck>,
    pub n_samples: usize,
    pub n_constant: usize,
    pub min_return_time: Option<f64>,
    /// A sampled start whose orbit returns by time 1, with its return time.
    pub witness: Option<(PhasePoint, f64)>,
}

impl AdmissibilityReport {
    pub fn pass(&self) -> bool {
        self.status != AdmissibilityStatus::Failed
    }
}

/// The radial return-time criterion on a grid of `u = |x − a|² ≥ |a|²`.
pub fn radial_criterion(ham: &RadialHamiltonian) -> AnalyticCheck {
    let abs_a = ham.abs_a();
    let p = &ham.profile;
    let lo = abs_a * abs_a;
    let last = *p.knots.last().expect("nonempty");
    let hi = last.max(lo) + 1.0;
    let mut worst = (f64::INFINITY, f64::NAN);
    let mut check = |u: f64, d: f64| {
        if d == 0.0 || u <= lo {
            return;
        }
        let bound = (abs_a / u.sqrt()).min(1.0).acos();
        let margin = bound - d.abs();
        if margin < worst.0 {
            worst = (margin, u);
        }
    };
    for u in p.grid(lo, hi, 512) {
        check(u, p.deriv(u));
    }
    // Beyond the last knot f′ is constant and the bound increases to π/2.
    let tail = p.deriv(last + 1.0);
    if tail != 0.0 {
        check(f64::INFINITY, tail);
    }
    AnalyticCheck { pass: worst.0 > 1e-12, worst_margin: worst.0, worst_u: worst.1 }
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

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

/// Maps a point of `[0,1)^{m+1}` to the shell `lo² ≤ |v|² ≤ hi²` in ℝ^m by
/// rejection on the first `m` coordinates; `None` when rejected.
fn to_shell(u: &[f64], lo2: f64, hi2: f64) -> Option<Vec<f64>> {
    let m = u.len() - 1;
    let v: Vec<f64> = u[..m].iter().map(|s| 2.0 * s - 1.0).collect();
    let len = norm(&v);
    if len > 1.0 || len < 1e-6 {
        return None;
    }
    let r = (lo2 + (hi2 - lo2) * u[m]).max(0.0).sqrt();
    Some(v.iter().map(|c| c * r / len).collect())
}

/// Starting points on `ℝ^{n,k} ∩ supp dH`: a Halton sequence plus a seeded
/// random batch.
pub fn admissibility_samples(space: &CoisoSpace, ham: &dyn SimpleHamiltonian, cfg: &SamplerConfig) -> Vec<PhasePoint> {
    let (center, lo, hi) = ham.support_shell();
    let hi = if hi.is_finite() { hi } else { lo + 10.0 };
    let tangent: Vec<usize> = (0..space.ambient_dim()).filter(|&i| space.is_tangent(i)).collect();
    let c_proj: Vec<f64> = tangent.iter().map(|&i| center.0[i]).collect();
    let d2 = center.0.iter().enumerate().filter(|(i, _)| !space.is_tangent(*i)).map(|(_, v)| v * v).sum::<f64>();
    let (lo2, hi2) = ((lo * lo - d2).max(0.0), hi * hi - d2);
    if hi2 <= 0.0 {
        return Vec::new();
    }
    let m = tangent.len();
    let embed = |v: Vec<f64>| {
        let mut p = vec![0.0; space.ambient_dim()];
        for ((&i, vi), ci) in tangent.iter().zip(v).zip(&c_proj) {
            p[i] = vi + ci;
        }
        PhasePoint(p)
    };
    let mut out = Vec::with_capacity(cfg.n_lowdisc + cfg.n_random);
    let mut i = 1u64;
    while out.len() < cfg.n_lowdisc && i < 1000 * (cfg.n_lowdisc as u64 + 1) {
        let u: Vec<f64> = PRIMES[..=m].iter().map(|&b| radical_inverse(i, b)).collect();
        if let Some(v) = to_shell(&u, lo2, hi2) {
            out.push(embed(v));
        }
        i += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let target = out.len() + cfg.n_random;
    while out.len() < target {
        let u: Vec<f64> = (0..=m).map(|_| rng.gen::<f64>()).collect();
        if let Some(v) = to_shell(&u, lo2, hi2) {
            out.push(embed(v));
        }
    }
    out
}

/// Checks that every nonconstant sampled orbit starting on `ℝ^{n,k}` has
/// return time greater than one, plus the exact radial criterion when `ham`
/// is radial.
pub fn is_admissible(
    space: &CoisoSpace,
    ham: &dyn SimpleHamiltonian,
    cfg: &SamplerConfig,
) -> Result<AdmissibilityReport, DynamicsError> {
    let analytic = ham.as_radial().map(radial_criterion);
    let samples = admissibility_samples(space, ham, cfg);
    let opts = ReturnOptions { tol: cfg.tol, ..ReturnOptions::default() };
    let as_ham: &dyn Hamiltonian = ham;
    let events: Vec<ReturnEvent> = samples
        .par_iter()
        .map(|x0| return_time_with(space, as_ham, x0, cfg.t_max, &opts))
        .collect::<Result<_, _>>()?;
    let n_constant = events.iter().filter(|e| e.time == ReturnTime::Constant).count();
    let first = events
        .iter()
        .filter_map(|e| e.time.finite().map(|t| (e, t)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let min_return_time = first.map(|(_, t)| t);
    let witness = first.filter(|(_, t)| *t <= 1.0).map(|(e, t)| (e.initial.clone(), t));
    let sampled_ok = witness.is_none();
    let status = match (&analytic, sampled_ok) {
        (_, false) => AdmissibilityStatus::Failed,
        (Some(a), true) if a.pass => AdmissibilityStatus::Certified,
        (Some(_), true) => AdmissibilityStatus::Failed,
        (None, true) => AdmissibilityStatus::SampleTested,
    };
    Ok(AdmissibilityReport { status, analytic, n_samples: events.len(), n_constant, min_return_time, witness })
}
