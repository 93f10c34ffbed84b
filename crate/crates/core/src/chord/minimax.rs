//! Minimax search over the evolved `Σ_τ` sample, critical-point refinement
//! and chord validation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::leaf_residual_raw;
use crate::hamiltonian::q_pi_raw;
use crate::spectral::SpectralPath;

use super::functional::{flow_for, FlowOptions, FlowState};
use super::linking::{build_sigma_coords, check_linking_bounds, LinkingConfig, LinkingReport};
use super::{ActionFunctional, ChordError};

/// Solver parameters for [`minimax_estimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinimaxOptions {
    /// Images on the string `s·e⁺, s ∈ [0, τ]`.
    pub string_images: usize,
    /// First record interval; later intervals double up to `record_cap`.
    pub record_dt0: f64,
    pub record_cap: f64,
    pub max_records: usize,
    /// The sup sequence has converged once `plateau_len` consecutive
    /// records agree within `plateau_tol`.
    pub plateau_tol: f64,
    pub plateau_len: usize,
    pub dt_max: f64,
    pub tol_crit: f64,
    pub tol_ode: f64,
    pub tol_leaf: f64,
    pub ode_grid: usize,
    pub refine_iters: usize,
}

impl Default for MinimaxOptions {
    fn default() -> Self {
        Self {
            string_images: 81,
            record_dt0: 0.05,
            record_cap: 1.6,
            max_records: 60,
            plateau_tol: 1e-6,
            plateau_len: 5,
            dt_max: 0.25,
            tol_crit: 1e-7,
            tol_ode: 1e-4,
            tol_leaf: 1e-8,
            ode_grid: 400,
            refine_iters: 60,
        }
    }
}

/// One record of the sup sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxRecord {
    pub t: f64,
    pub sup_phi: f64,
    /// Index into the sample, with string images numbered after it.
    pub argmax_path_id: usize,
}

/// A validated leafwise chord: a time-one orbit with endpoints on one leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChordResult {
    pub path: SpectralPath,
    pub action: f64,
    pub grad_norm: f64,
    pub ode_residual: f64,
    pub leaf_res: f64,
    pub max_q_pi: f64,
    pub inside_flag: bool,
    /// `max_m |mπ z_m − a_m|` with `a_m` the Fourier coefficients of
    /// `∇H̄(x(t))`.
    pub fourier_residual: f64,
}

/// Everything a minimax run produces, including the failure reason.
#[derive(Debug, Clone)]
pub struct MinimaxRun {
    /// Smallest recorded sup of `Φ`; `NaN` if no record was made.
    pub value: f64,
    pub log: Vec<MinimaxRecord>,
    pub linking: Option<LinkingReport>,
    pub outcome: Result<ChordResult, ChordError>,
    /// Largest rise of `Φ` over any accepted flow step.
    pub max_step_increase: f64,
}

/// Equal-arclength reparametrization of a polygonal string, endpoints kept.
fn remesh(images: &mut [Vec<f64>]) {
    let m = images.len();
    if m < 3 {
        return;
    }
    let mut cum = vec![0.0; m];
    for j in 1..m {
        let d: f64 = images[j].iter().zip(&images[j - 1]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        cum[j] = cum[j - 1] + d;
    }
    let total = cum[m - 1];
    if total == 0.0 {
        return;
    }
    let old = images.to_vec();
    let mut seg = 0;
    for (j, img) in images.iter_mut().enumerate().take(m - 1).skip(1) {
        let target = total * j as f64 / (m - 1) as f64;
        while seg + 1 < m - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let w = if len > 0.0 { (target - cum[seg]) / len } else { 0.0 };
        for (v, (a, b)) in img.iter_mut().zip(old[seg].iter().zip(&old[seg + 1])) {
            *v = a + w * (b - a);
        }
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    values.enumerate().filter(|(_, v)| v.is_finite()).max_by(|a, b| a.1.total_cmp(&b.1))
}

/// Damped Newton (Levenberg–Marquardt) on `∇Φ(u) = 0` with a
/// finite-difference Hessian.
pub fn refine_critical_point(f: &ActionFunctional, u0: &[f64], max_iter: usize, tol: f64) -> (Vec<f64>, f64) {
    let d = u0.len();
    let mut u = u0.to_vec();
    let mut g = f.gradient_u(&u);
    let mut gn = norm(&g);
    let mut lambda = 1e-6;
    for _ in 0..max_iter {
        if gn < tol {
            break;
        }
        let scale = u.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let h = 1e-6 * scale;
        let cols: Vec<Vec<f64>> = (0..d)
            .into_par_iter()
            .map(|j| {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[j] += h;
                dn[j] -= h;
                let (gp, gm) = (f.gradient_u(&up), f.gradient_u(&dn));
                gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            })
            .collect();
        let jac = DMatrix::from_fn(d, d, |i, j| 0.5 * (cols[j][i] + cols[i][j]));
        let jtj = jac.transpose() * &jac;
        let rhs = -(jac.transpose() * DVector::from_column_slice(&g));
        let mut improved = false;
        while lambda < 1e10 {
            let mut a = jtj.clone();
            for i in 0..d {
                a[(i, i)] += lambda * (1.0 + jtj[(i, i)]);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&rhs);
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let gt = f.gradient_u(&trial);
            let gtn = norm(&gt);
            if gtn < gn {
                u = trial;
                g = gt;
                gn = gtn;
                lambda = (lambda * 0.1).max(1e-14);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (u, gn)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Residuals of a candidate critical point, in the units of [`ChordResult`].
pub fn assess_chord(f: &ActionFunctional, u: &[f64], ode_grid: usize) -> ChordResult {
    let path = f.from_coords(u);
    let g = f.gradient_u(u);
    let space = f.space();
    let x0 = path.evaluate(0.0);
    let x1 = path.evaluate(1.0);
    let max_q = match f.extended() {
        Some(ext) => (0..=ode_grid)
            .map(|i| q_pi_raw(&space, ext.n_scale, &path.evaluate(i as f64 / ode_grid as f64).0))
            .fold(0.0, f64::max),
        None => f64::NAN,
    };
    let fourier = f
        .basis()
        .entries()
        .iter()
        .zip(&g)
        .map(|(&(m, _), gi)| crate::spectral::action_weight(m).sqrt() * gi.abs())
        .fold(0.0, f64::max);
    ChordResult {
        action: f.value_u(u),
        grad_norm: norm(&g),
        ode_residual: f.ode_residual(&path, ode_grid),
        leaf_res: leaf_residual_raw(&space, &x0.0, &x1.0),
        max_q_pi: max_q,
        inside_flag: max_q <= 1.0 + 1e-8,
        fourier_residual: fourier,
        path,
    }
}

/// Classifies an assessed candidate.
pub fn validate_chord(c: ChordResult, opts: &MinimaxOptions) -> Result<ChordResult, ChordError> {
    if !(c.action > 1e-12) {
        return Err(ChordError::NoConvergence(format!(
            "critical point has nonpositive action {:.6e}",
            c.action
        )));
    }
    if c.path.is_constant(1e-10) {
        return Err(ChordError::NoConvergence("critical point is a constant path".into()));
    }
    let mut failures = Vec::new();
    if !(c.grad_norm < opts.tol_crit) {
        failures.push(format!("gradient norm {:.3e} ≥ {:.1e}", c.grad_norm, opts.tol_crit));
    }
    if !(c.ode_residual < opts.tol_ode) {
        failures.push(format!("ODE residual {:.3e} ≥ {:.1e}", c.ode_residual, opts.tol_ode));
    }
    if !(c.leaf_res < opts.tol_leaf) {
        failures.push(format!("leaf residual {:.3e} ≥ {:.1e}", c.leaf_res, opts.tol_leaf));
    }
    if !c.inside_flag {
        failures.push(format!("positive-action chord leaves {{q_Π ≤ 1}} (max q_Π = {:.6})", c.max_q_pi));
    }
    if failures.is_empty() {
        Ok(c)
    } else {
        Err(ChordError::ValidationFailed { reason: failures.join("; "), candidate: Box::new(c) })
    }
}

/// Estimates the minimax value `inf_t sup Φ(φ^t(Σ_τ))` and extracts a
/// chord from the sup-attaining trajectory.
///
/// The sample is a set of points of `Σ_τ`, pruned once `Φ < 0` (the flow
/// never raises `Φ`), together with a string through `s·e⁺` whose endpoints
/// `0` and `τ·e⁺` stay fixed and whose interior is reparametrized by
/// arclength after every flow chunk.
pub fn minimax_estimate(f: &ActionFunctional, linking: &LinkingConfig, opts: &MinimaxOptions) -> MinimaxRun {
    let mut run = MinimaxRun {
        value: f64::NAN,
        log: Vec::new(),
        linking: None,
        outcome: Err(ChordError::NoConvergence("not started".into())),
        max_step_increase: f64::NEG_INFINITY,
    };
    let report = match check_linking_bounds(f, linking) {
        Ok(r) => r,
        Err(e) => {
            run.outcome = Err(ChordError::NoConvergence(format!("linking preconditions fail: {e}")));
            return run;
        }
    };
    let (tau, alpha) = (report.tau, report.alpha);
    run.linking = Some(report);
    let flow_opts = FlowOptions { dt_max: opts.dt_max, ..FlowOptions::default() };

    let mut points: Vec<(usize, FlowState)> = build_sigma_coords(f, tau, alpha, linking)
        .into_iter()
        .map(|u| FlowState::new(f, u))
        .enumerate()
        .collect();
    let n_points = points.len();
    let e_idx = f.basis().entries().iter().position(|&(m, i)| m == 1 && i == f.space().n() - 1).expect("e⁺");
    let m_img = opts.string_images.max(3);
    let mut string: Vec<FlowState> = (0..m_img)
        .map(|j| {
            let mut u = vec![0.0; f.dim()];
            u[e_idx] = tau * std::f64::consts::PI.sqrt() * j as f64 / (m_img - 1) as f64;
            FlowState::new(f, u)
        })
        .collect();

    let mut t = 0.0;
    let mut delta = opts.record_dt0;
    let mut converged = false;
    for _ in 0..opts.max_records {
        let res: Result<(), ChordError> = points
            .par_iter_mut()
            .map(|(_, s)| flow_for(f, s, delta, &flow_opts, 0.0))
            .collect();
        if let Err(e) = res {
            run.outcome = Err(e);
            return run;
        }
        points.retain(|(_, s)| s.phi >= 0.0);

        let chunk = delta.min(0.05);
        let mut done = 0.0;
        while done < delta - 1e-15 {
            let step = chunk.min(delta - done);
            let res: Result<(), ChordError> = string[1..m_img - 1]
                .par_iter_mut()
                .map(|s| flow_for(f, s, step, &flow_opts, f64::NEG_INFINITY))
                .collect();
            if let Err(e) = res {
                run.outcome = Err(e);
                return run;
            }
            let mut us: Vec<Vec<f64>> = string.iter().map(|s| s.u.clone()).collect();
            remesh(&mut us);
            for (s, u) in string.iter_mut().zip(us) {
                s.phi = f.value_u(&u);
                s.u = u;
            }
            done += step;
        }
        t += delta;

        let best_point = argmax(points.iter().map(|(_, s)| s.phi)).map(|(i, v)| (points[i].0, v));
        let best_string = argmax(string.iter().map(|s| s.phi)).map(|(j, v)| (n_points + j, v));
        let (id, sup) = match (best_point, best_string) {
            (Some(p), Some(s)) if p.1 > s.1 => p,
            (_, Some(s)) => s,
            (Some(p), None) => p,
            (None, None) => break,
        };
        run.log.push(MinimaxRecord { t, sup_phi: sup, argmax_path_id: id });
        let k = opts.plateau_len.max(2);
        if run.log.len() >= k {
            let tail = &run.log[run.log.len() - k..];
            let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.sup_phi), b.max(r.sup_phi)));
            if hi - lo <= opts.plateau_tol {
                converged = true;
                break;
            }
        }
        delta = (2.0 * delta).min(opts.record_cap);
    }
    run.max_step_increase = points
        .iter()
        .map(|(_, s)| s.max_increase)
        .chain(string.iter().map(|s| s.max_increase))
        .fold(f64::NEG_INFINITY, f64::max);
    run.value = run.log.iter().map(|r| r.sup_phi).fold(f64::NAN, f64::min);
    if !converged {
        run.outcome = Err(ChordError::NoConvergence(format!(
            "sup Φ did not settle within {} records (t = {t})",
            opts.max_records
        )));
        return run;
    }
    let last = run.log.last().expect("converged implies a record");
    if !(last.sup_phi > 0.0) {
        run.outcome = Err(ChordError::NoConvergence(format!(
            "minimax value {:.6e} is not positive",
            last.sup_phi
        )));
        return run;
    }

    let seed = if last.argmax_path_id >= n_points {
        // Resample the string finely around its highest image.
        let j = last.argmax_path_id - n_points;
        let lo = j.saturating_sub(1);
        let hi = (j + 1).min(m_img - 1);
        let mut best = (string[j].phi, string[j].u.clone());
        for seg in lo..hi {
            for i in 1..200 {
                let w = i as f64 / 200.0;
                let u: Vec<f64> =
                    string[seg].u.iter().zip(&string[seg + 1].u).map(|(a, b)| a + w * (b - a)).collect();
                let v = f.value_u(&u);
                if v > best.0 {
                    best = (v, u);
                }
            }
        }
        best.1
    } else {
        points.iter().find(|(id, _)| *id == last.argmax_path_id).expect("argmax is alive").1.u.clone()
    };
    let (u, _) = refine_critical_point(f, &seed, opts.refine_iters, 1e-3 * opts.tol_crit);
    run.outcome = validate_chord(assess_chord(f, &u, opts.ode_grid), opts);
    run
}
