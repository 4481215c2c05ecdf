//! Subcommand bodies. Each validates its config, writes its tables into the
//! staging area and returns the checks that `--assert` turns into an exit code.

use harnesslab::fluct::{compare, hydro_check, variance_scaling, FluctConfig, FluctRun};
use harnesslab::initialdata::{InitialIncrementLaw, InitialSampler};
use harnesslab::invariant::{v0_table, StationarySampler, DEFAULT_DEPTH};
use harnesslab::lattice::{Grid, LatticeBox};
use harnesslab::limitcov::{gamma1, gamma2, limit_table, LimitParams, Route};
use harnesslab::par::try_map_replicas;
use harnesslab::process::{evolve_height, required_window, HeightField};
use harnesslab::{validate_kernel, HarnessError, KernelAnalysis, NoiseField, Walk};
use serde_json::{json, Value};

use crate::config::{HydroConfig, InvariantConfig, LimitsConfig, ScalingConfig, SimulateConfig, ValidateConfig};
use crate::output::{num, opt, Staging};

/// A named pass/fail check.
pub struct Check {
    pub name: String,
    pub pass: bool,
}

fn check(name: impl Into<String>, pass: bool) -> Check {
    Check {
        name: name.into(),
        pass,
    }
}

pub struct Outcome {
    pub checks: Vec<Check>,
    pub summary: Value,
}

pub type CmdResult = anyhow::Result<Outcome>;

fn kernel_summary(k: &KernelAnalysis) -> Value {
    let q: Vec<Value> = k
        .jumps(Walk::Q)
        .iter()
        .map(|j| json!({"offset": j.offset, "prob": j.prob}))
        .collect();
    json!({
        "d": k.dim(),
        "range": k.range(),
        "mean": k.mean(),
        "covariance": k.covariance(),
        "q": q,
    })
}

pub fn validate(cfg: &ValidateConfig, out: &mut Staging) -> CmdResult {
    let k = validate_kernel(&cfg.kernel)?;
    let summary = json!({"accepted": true, "kernel": kernel_summary(&k)});
    out.json("kernel.json", &summary)?;
    Ok(Outcome {
        checks: Vec::new(),
        summary,
    })
}

pub fn simulate(cfg: &SimulateConfig, out: &mut Staging) -> CmdResult {
    let k = validate_kernel(&cfg.kernel)?;
    cfg.noise.validate()?;
    let d = k.dim();
    if cfg.lo.len() != d || cfg.hi.len() != d {
        return Err(HarnessError::InvalidConfig(format!("lo/hi must have {d} coordinates")).into());
    }
    let eval = LatticeBox::new(cfg.lo.clone(), cfg.hi.clone());
    if eval.is_empty() {
        return Err(HarnessError::InvalidConfig("empty evaluation box".into()).into());
    }
    let noise = NoiseField::new(cfg.noise, cfg.seed);
    let window = required_window(&k, &eval, cfg.steps);
    let sampler = match &cfg.initial {
        Some(law) if d == 1 => Some(InitialSampler::new(law.clone(), &k, noise)?),
        Some(InitialIncrementLaw::Flat { mean }) if *mean == 0.0 => None,
        Some(_) => {
            return Err(HarnessError::DimensionUnsupported {
                op: "random initial laws",
                dim: d,
            }
            .into())
        }
        None => None,
    };
    let fields = try_map_replicas(cfg.replicas, |r| {
        let h0 = match &sampler {
            Some(s) => s.sample_heights(&window.hull(&LatticeBox::interval(-1, 0)), r)?,
            None => HeightField::new(Grid::zeros(window.clone()), 0),
        };
        evolve_height(&h0, &k, &noise, r, cfg.steps, &eval)
    })?;
    let mut header: Vec<String> = vec!["replica".into()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.push("h".into());
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = fields.iter().enumerate().flat_map(|(r, h)| {
        h.window().points().zip(h.grid.data()).map(move |(x, v)| {
            let mut row = vec![r.to_string()];
            row.extend(x.iter().map(|c| c.to_string()));
            row.push(num(*v));
            row
        })
    });
    out.csv("heights.csv", &header_ref, rows)?;
    Ok(Outcome {
        checks: Vec::new(),
        summary: json!({"steps": cfg.steps, "replicas": cfg.replicas, "sites": eval.len()}),
    })
}

pub fn invariant(cfg: &InvariantConfig, out: &mut Staging) -> CmdResult {
    let k = validate_kernel(&cfg.kernel)?;
    cfg.noise.validate()?;
    if cfg.max_lag < 0 {
        return Err(HarnessError::InvalidConfig("max_lag must be nonnegative".into()).into());
    }
    let s2 = cfg.noise.variance;
    let noise = NoiseField::new(cfg.noise, cfg.seed);
    let depth = cfg.depth.unwrap_or(DEFAULT_DEPTH);
    let sampler = if cfg.replicas > 0 {
        Some(if cfg.completion {
            StationarySampler::completed(&k, noise, depth)?
        } else {
            StationarySampler::truncated(&k, noise, depth)?
        })
    } else {
        None
    };
    let rows = v0_table(&k, s2, cfg.max_lag, sampler.as_ref().map(|s| (s, cfg.replicas)))?;
    out.csv(
        "v0.csv",
        &["x", "fourier", "kernel_a", "mc", "stderr"],
        rows.iter().map(|r| {
            vec![
                r.x.to_string(),
                num(r.fourier),
                num(r.kernel_a),
                opt(r.mc),
                opt(r.stderr),
            ]
        }),
    )?;
    let route_gap = rows.iter().map(|r| (r.fourier - r.kernel_a).abs()).fold(0.0, f64::max);
    let worst_z = rows
        .iter()
        .filter_map(|r| Some((r.mc? - r.fourier).abs() / r.stderr?))
        .fold(0.0, f64::max);
    let mut checks = vec![check("v0 routes agree within 1e-6", route_gap <= 1e-6)];
    if sampler.is_some() {
        checks.push(check("Monte Carlo within 3 stderr", worst_z <= 3.0));
    }
    Ok(Outcome {
        checks,
        summary: json!({
            "route_gap": route_gap,
            "worst_z": worst_z,
            "sigma_xi_sq_over_sigma1_sq": s2 / k.variance(),
            "sampler_omitted_variance": sampler.as_ref().map(|s| s.omitted_variance()),
        }),
    })
}

pub fn fluct(cfg: &FluctConfig, out: &mut Staging) -> CmdResult {
    let k = validate_kernel(&cfg.kernel)?;
    let run = FluctRun::new(cfg, &k)?;
    let params = run.limit_params()?;
    let est = run.estimate_cov()?;
    let report = compare(&est, &params, &cfg.points);
    out.csv(
        "points.csv",
        &["i", "t", "r", "steps", "site"],
        cfg.points
            .iter()
            .zip(run.lattice_points())
            .enumerate()
            .map(|(i, (p, (s, y)))| vec![i.to_string(), num(p.t), num(p.r), s.to_string(), y.to_string()]),
    )?;
    out.csv(
        "cov_estimate.csv",
        &["i", "j", "est", "stderr", "theory", "z"],
        report.entries.iter().map(|e| {
            vec![
                e.i.to_string(),
                e.j.to_string(),
                num(e.est),
                num(e.stderr),
                num(e.theory),
                num(e.z),
            ]
        }),
    )?;
    Ok(Outcome {
        checks: vec![check("covariance entries within 3 stderr", report.passed())],
        summary: json!({
            "limit_params": params,
            "max_abs_z": report.max_abs_z,
            "flagged": report.flagged,
            "mixing": cfg.initial.mixing_certificate(cfg.noise.family),
        }),
    })
}

pub fn hydro(cfg: &HydroConfig, out: &mut Staging) -> CmdResult {
    let k = validate_kernel(&cfg.kernel)?;
    cfg.noise.validate()?;
    cfg.profile.validate()?;
    if cfg.n_list.is_empty() {
        return Err(HarnessError::InvalidConfig("n_list is empty".into()).into());
    }
    let noise = NoiseField::new(cfg.noise, cfg.seed);
    let rows = hydro_check(&k, &noise, |x| cfg.profile.eval(x), &cfg.n_list, cfg.t, cfg.r_box)?;
    out.csv(
        "hydro.csv",
        &["n", "sup_error"],
        rows.iter().map(|r| vec![r.n.to_string(), num(r.sup_error)]),
    )?;
    let decreasing = rows.windows(2).all(|w| w[1].sup_error < w[0].sup_error);
    let last = rows.last().map(|r| r.sup_error).unwrap_or(f64::NAN);
    Ok(Outcome {
        checks: vec![
            check("sup error strictly decreasing in n", decreasing),
            check(format!("final sup error below {}", cfg.max_error), last < cfg.max_error),
        ],
        summary: json!({"final_error": last}),
    })
}

pub fn scaling(cfg: &ScalingConfig, out: &mut Staging) -> CmdResult {
    let k = validate_kernel(&cfg.kernel)?;
    cfg.noise.validate()?;
    let noise = NoiseField::new(cfg.noise, cfg.seed);
    let rep = variance_scaling(&k, &noise, &cfg.times, cfg.replicas)?;
    let mut worst_z: f64 = 0.0;
    let rows: Vec<Vec<String>> = rep
        .exact
        .iter()
        .enumerate()
        .map(|(i, (t, exact))| {
            let mc = rep.rows.get(i);
            let z = mc.map(|r| (r.var - exact) / r.stderr);
            if let Some(z) = z {
                worst_z = worst_z.max(z.abs());
            }
            vec![
                t.to_string(),
                num(*exact),
                opt(mc.map(|r| r.var)),
                opt(mc.map(|r| r.stderr)),
                opt(z),
            ]
        })
        .collect();
    out.csv("scaling.csv", &["t", "exact", "mc", "stderr", "z"], rows)?;
    // The fitted slope is of the variance; the height exponent is half of it.
    let mut checks = Vec::new();
    if k.dim() == 1 {
        checks.push(check("exact slope 0.50 +- 0.02", (rep.exact_slope - 0.5).abs() <= 0.02));
        if let Some(s) = rep.mc_slope {
            checks.push(check("Monte Carlo slope 0.50 +- 0.05", (s - 0.5).abs() <= 0.05));
        }
    }
    if rep.mc_slope.is_some() {
        checks.push(check("Monte Carlo within 3 stderr at every t", worst_z <= 3.0));
    }
    Ok(Outcome {
        checks,
        summary: json!({"exact_slope": rep.exact_slope, "mc_slope": rep.mc_slope, "worst_z": worst_z}),
    })
}

pub fn limits(cfg: &LimitsConfig, out: &mut Staging) -> CmdResult {
    let rho0 = cfg.rho0.unwrap_or(cfg.noise_variance / cfg.sigma1_sq);
    let params = LimitParams::new(cfg.sigma1_sq, cfg.noise_variance, rho0)?;
    if cfg.points.iter().any(|p| p.t.is_nan() || p.t < 0.0 || !p.r.is_finite()) {
        return Err(HarnessError::InvalidConfig("points need t >= 0 and finite r".into()).into());
    }
    let rows = limit_table(&params, &cfg.points);
    out.csv(
        "limits.csv",
        &["s", "q", "t", "r", "gamma1", "gamma2", "zcov"],
        rows.iter().map(|r| {
            vec![
                num(r.s),
                num(r.q),
                num(r.t),
                num(r.r),
                num(r.gamma1),
                num(r.gamma2),
                num(r.zcov),
            ]
        }),
    )?;
    let mut g1_gap: f64 = 0.0;
    let mut g2_gap: f64 = 0.0;
    for (i, a) in cfg.points.iter().enumerate() {
        for b in &cfg.points[i..] {
            let s = cfg.sigma1_sq;
            g1_gap = g1_gap.max((gamma1(*a, *b, s, Route::Closed) - gamma1(*a, *b, s, Route::Integral)).abs());
            g2_gap = g2_gap.max((gamma2(*a, *b, s, Route::Closed) - gamma2(*a, *b, s, Route::Integral)).abs());
        }
    }
    Ok(Outcome {
        checks: vec![
            check("gamma1 routes within 1e-8", g1_gap <= 1e-8),
            check("gamma2 routes within 1e-7", g2_gap <= 1e-7),
        ],
        summary: json!({"params": params, "gamma1_route_gap": g1_gap, "gamma2_route_gap": g2_gap}),
    })
}
