use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use coiso_core::capacity::{
    area_table, capacity_report_for, lower_bound_capacity, nonsqueeze_check, CapacityError, LowerBoundOptions,
};
use coiso_core::chord::{minimax_estimate, ActionFunctional, ChordError};
use coiso_core::dynamics::{integrate_uniform, return_time, ReturnTime};
use coiso_core::geometry::PhasePoint;
use coiso_core::hamiltonian::{default_eps, ExtendedHamiltonian, SimpleHamiltonian};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{self, CapacityConfig, ChordConfig, FlowConfig, Loaded, NonsqueezeConfig};
use crate::{Common, Failure};

const VERSION: &str = env!("CARGO_PKG_VERSION");

struct Output<'a> {
    dir: &'a Path,
    sha256: String,
    seed: u64,
}

impl Output<'_> {
    fn new<'a, T>(common: &'a Common, loaded: &Loaded<T>, seed: u64) -> Result<Output<'a>, Failure> {
        fs::create_dir_all(&common.out).map_err(|e| Failure::io(e, &common.out.display().to_string()))?;
        Ok(Output { dir: &common.out, sha256: loaded.sha256.clone(), seed })
    }

    fn csv_header(&self) -> String {
        format!("# config_sha256={}, version={}, seed={}", self.sha256, VERSION, self.seed)
    }

    /// Writes `body` with the run metadata merged in at the top level.
    fn json<T: Serialize>(&self, name: &str, body: &T) -> Result<(), Failure> {
        let mut doc = json!({
            "config_sha256": self.sha256,
            "tool_version": VERSION,
            "seed": self.seed,
        });
        let extra = serde_json::to_value(body).map_err(|e| Failure::new(1, format!("cannot serialize {name}: {e}")))?;
        if let (Value::Object(d), Value::Object(e)) = (&mut doc, extra) {
            d.extend(e);
        }
        let mut text = serde_json::to_string_pretty(&doc).expect("values serialize");
        text.push('\n');
        fs::write(self.dir.join(name), text).map_err(|e| Failure::io(e, name))
    }

    fn text(&self, name: &str, body: &str) -> Result<(), Failure> {
        fs::write(self.dir.join(name), body).map_err(|e| Failure::io(e, name))
    }
}

fn seed_of(common: &Common, from_config: u64) -> u64 {
    common.seed.unwrap_or(from_config)
}

fn capacity_failure(e: CapacityError) -> Failure {
    match e {
        CapacityError::NotAdmissible { status, report } => {
            let witness = report
                .witness
                .map(|(p, t)| format!("; orbit from {:?} returns at t = {t}", p.0))
                .unwrap_or_default();
            let analytic = report
                .analytic
                .filter(|a| !a.pass)
                .map(|a| format!("; analytic criterion fails at u = {} (margin {:e})", a.worst_u, a.worst_margin))
                .unwrap_or_default();
            Failure::new(4, format!("witness Hamiltonian not admissible ({status:?}){analytic}{witness}"))
        }
        CapacityError::Dynamics(e) => Failure::new(3, format!("integrator failure: {e}")),
        e => Failure::config(e.to_string()),
    }
}

pub fn flow(common: &Common) -> Result<(), Failure> {
    let loaded: Loaded<FlowConfig> = config::load(&common.config)?;
    let cfg = &loaded.config;
    let seed = seed_of(common, cfg.seed);
    let space = cfg.space.build()?;
    let ham = cfg.hamiltonian.build(&space, &loaded.base)?;
    config::positive("tol", cfg.tol)?;
    config::positive("dt_out", cfg.dt_out)?;
    if !(cfg.t_max >= 0.0) {
        return Err(Failure::config(format!("t_max must be nonnegative, got {}", cfg.t_max)));
    }
    if cfg.x0.len() != space.ambient_dim() {
        return Err(Failure::config(format!("x0: expected {} coordinates, got {}", space.ambient_dim(), cfg.x0.len())));
    }
    let x0 = PhasePoint(cfg.x0.clone());
    let traj = integrate_uniform(&ham, &x0, cfg.t_max, cfg.tol, cfg.dt_out)
        .map_err(|e| Failure::new(3, format!("integrator failure: {e}")))?;
    let horizon = cfg.return_horizon.unwrap_or(cfg.t_max);
    let ret = if space.contains(&x0, 1e-12) && horizon > 0.0 {
        Some(return_time(&space, &ham, &x0, horizon).map_err(|e| Failure::new(3, format!("return time: {e}")))?)
    } else {
        None
    };

    let out = Output::new(common, &loaded, seed)?;
    let file = fs::File::create(out.dir.join("trajectory.csv")).map_err(|e| Failure::io(e, "trajectory.csv"))?;
    let mut w = BufWriter::new(file);
    traj.write_csv(&mut w, &space, 1.0, Some(&ham.center), Some(out.csv_header().trim_start_matches("# ")))
        .and_then(|_| w.flush())
        .map_err(|e| Failure::io(e, "trajectory.csv"))?;

    let r2: Vec<f64> = traj.points.iter().map(|p| ham.radius2(&p.0)).collect();
    let mean = r2.iter().sum::<f64>() / r2.len().max(1) as f64;
    let var = r2.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / r2.len().max(1) as f64;
    out.json(
        "flow_summary.json",
        &json!({
            "n_samples": traj.len(),
            "t_max": cfg.t_max,
            "max_energy_drift": traj.max_energy_drift(),
            "r2_variance": var,
            "return_time": ret.as_ref().map(|r| r.time),
            "return_residual": ret.as_ref().map(|r| r.residual),
        }),
    )?;
    println!("samples: {}", traj.len());
    println!("max energy drift: {:.3e}", traj.max_energy_drift());
    println!("variance of |x - a|^2: {var:.3e}");
    match ret.map(|r| r.time) {
        Some(ReturnTime::Finite(t)) => println!("return time: {t:.15}"),
        Some(ReturnTime::Constant) => println!("return time: constant orbit"),
        Some(ReturnTime::Infinite) => println!("return time: none within {horizon}"),
        None => println!("return time: not applicable (x0 off the coisotropic subspace or zero horizon)"),
    }
    Ok(())
}

pub fn capacity(common: &Common) -> Result<(), Failure> {
    let loaded: Loaded<CapacityConfig> = config::load(&common.config)?;
    let cfg = &loaded.config;
    let seed = seed_of(common, cfg.seed);
    let space = cfg.space.build()?;
    let mut center = vec![0.0; space.ambient_dim()];
    center[space.ambient_dim() - 1] = cfg.b_n;
    let center = PhasePoint(center);
    let opts = LowerBoundOptions { sampler: config::sampler_seeded(&cfg.lower_bound.sampler, seed), ..cfg.lower_bound.clone() };
    let table = area_table(&cfg.r_grid).map_err(|e| Failure::config(format!("r_grid: {e}")))?;
    let report = match &cfg.profile {
        Some(spec) => capacity_report_for(&space, &center, spec.build(&loaded.base)?, &opts.sampler),
        None => lower_bound_capacity(&space, &center, &opts),
    }
    .map_err(capacity_failure)?;

    let out = Output::new(common, &loaded, seed)?;
    out.json("capacity_report.json", &report)?;
    let mut csv = out.csv_header();
    csv.push_str("\nr,area_A,arccos_integral\n");
    for row in &table {
        writeln!(csv, "{:.16e},{:.16e},{:.16e}", row.r, row.area, row.quadrature).expect("string write");
    }
    out.text("area_table.csv", &csv)?;
    println!("|a| = {}, r = {}", report.abs_a, report.r);
    println!("admissibility: {:?}", report.witness.admissibility.status);
    println!("m(H) of witness: {:.12}", report.witness.m_h);
    println!("lower bound A(r): {:.12}", report.lower);
    println!("upper bound: {:.12}", report.upper);
    Ok(())
}

pub fn chord(common: &Common) -> Result<(), Failure> {
    let loaded: Loaded<ChordConfig> = config::load(&common.config)?;
    let cfg = &loaded.config;
    let seed = seed_of(common, cfg.linking.seed);
    let space = cfg.space.build()?;
    let inner = cfg.hamiltonian.build(&space, &loaded.base)?;
    let m_h = inner.m_h();
    if (m_h - cfg.m_h).abs() > 1e-12 * (1.0 + m_h.abs()) {
        return Err(Failure::config(format!("m_h: declared {} but the profile plateau is {m_h}", cfg.m_h)));
    }
    let ext = match cfg.eps.or_else(|| default_eps(m_h)) {
        Some(eps) => ExtendedHamiltonian::new(space, inner, eps, cfg.n_scale),
        None => ExtendedHamiltonian::subcritical(space, inner, cfg.subcritical_slope, cfg.n_scale),
    }
    .map_err(|e| Failure::config(format!("extension: {e}")))?;
    let f = ActionFunctional::new(ext, cfg.n_f, cfg.n_quad).map_err(|e| Failure::config(format!("n_f: {e}")))?;
    for (name, v) in [
        ("minimax.tol_crit", cfg.minimax.tol_crit),
        ("minimax.tol_ode", cfg.minimax.tol_ode),
        ("minimax.tol_leaf", cfg.minimax.tol_leaf),
        ("minimax.plateau_tol", cfg.minimax.plateau_tol),
    ] {
        config::positive(name, v)?;
    }
    let linking = coiso_core::chord::LinkingConfig { seed, ..cfg.linking.clone() };
    let run = minimax_estimate(&f, &linking, &cfg.minimax);

    let out = Output::new(common, &loaded, seed)?;
    let (status, message) = match &run.outcome {
        Ok(_) => ("pass", String::new()),
        Err(ChordError::ValidationFailed { reason, .. }) => ("validation_failed", reason.clone()),
        Err(e @ ChordError::NoConvergence(_)) => ("no_convergence", e.to_string()),
        Err(e) => ("error", e.to_string()),
    };
    out.json(
        "minimax_log.json",
        &json!({
            "n_f": cfg.n_f,
            "value": run.value,
            "max_step_increase": run.max_step_increase,
            "linking": run.linking,
            "records": run.log,
            "status": status,
            "message": message,
        }),
    )?;
    let tol = &cfg.minimax;
    let lines = |c: &coiso_core::chord::ChordResult| {
        [
            ("action > 0", c.action > 0.0, format!("{:.12}", c.action)),
            ("grad_norm", c.grad_norm < tol.tol_crit, format!("{:.3e} < {:.1e}", c.grad_norm, tol.tol_crit)),
            ("ode_residual", c.ode_residual < tol.tol_ode, format!("{:.3e} < {:.1e}", c.ode_residual, tol.tol_ode)),
            ("leaf_residual", c.leaf_res < tol.tol_leaf, format!("{:.3e} < {:.1e}", c.leaf_res, tol.tol_leaf)),
            ("max q_pi", c.inside_flag, format!("{:.12} <= 1 + 1e-8", c.max_q_pi)),
        ]
    };
    match run.outcome {
        Ok(c) => {
            out.json("chord.json", &json!({ "status": "pass", "chord": c }))?;
            for (name, ok, detail) in lines(&c) {
                println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
            }
            println!("PASS chord with action {:.12}", c.action);
            Ok(())
        }
        Err(ChordError::ValidationFailed { reason, candidate }) => {
            out.json("chord.json", &json!({ "status": "validation_failed", "reason": reason, "chord": candidate }))?;
            for (name, ok, detail) in lines(&candidate) {
                println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
            }
            Err(Failure::new(6, format!("chord validation failed: {reason}")))
        }
        Err(ChordError::NoConvergence(msg)) => {
            println!("FAIL no positive-action chord: {msg}");
            Err(Failure::new(5, format!("no convergence: {msg}")))
        }
        Err(ChordError::StepRejected { dt, increase }) => {
            Err(Failure::new(3, format!("flow step failed at dt = {dt:e} (Φ rose by {increase:e})")))
        }
        Err(e) => Err(Failure::config(e.to_string())),
    }
}

pub fn nonsqueeze(common: &Common) -> Result<(), Failure> {
    let loaded: Loaded<NonsqueezeConfig> = config::load(&common.config)?;
    let cfg = &loaded.config;
    let seed = seed_of(common, cfg.seed);
    let reports = cfg
        .cases
        .iter()
        .enumerate()
        .map(|(i, &(r, a))| nonsqueeze_check(r, a).map_err(|e| Failure::config(format!("cases[{i}]: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let out = Output::new(common, &loaded, seed)?;
    let mut csv = out.csv_header();
    csv.push_str("\nr,A,R_A,verdict,area_r,area_R\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    for rep in &reports {
        let verdict = serde_json::to_value(rep.verdict).expect("verdict serializes");
        writeln!(
            csv,
            "{:.16e},{:.16e},{:.16e},{},{},{}",
            rep.r,
            rep.area,
            rep.radius_bound,
            verdict.as_str().expect("string"),
            opt(rep.area_r),
            opt(rep.area_bound)
        )
        .expect("string write");
        println!("r = {}, A = {}: {:?}", rep.r, rep.area, rep.verdict);
    }
    out.text("nonsqueeze.csv", &csv)?;
    out.json("nonsqueeze.json", &json!({ "cases": reports }))?;
    Ok(())
}
