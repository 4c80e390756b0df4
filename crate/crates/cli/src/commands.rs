use std::fmt::Write as _;
use std::path::Path;

use recdual::analytic_oracles::{
    build_example1, build_example2, example1_c_grid, example1_values, example2_c_grid, example2_deterministic_scan,
    example2_solve,
};
use recdual::dual_value::{
    default_gamma_max, load_field, save_field, value_iterate, CodecError, GridSpec, SolveError, SolveOptions, Variant,
};
use recdual::model::{load_model, save_model, ParseError};
use recdual::policy::{
    check_stage, initial_promise, recover_stage, simulate, GroupCheck, PathRow, RecoverOptions, SimulateOptions,
};
use recdual::ramsey::{curves, dominance_check, enumerate_scatter, max_debt, Branches, RamseyScenario, ScatterRow};
use recdual::ModelSpec;

use crate::manifest::Manifest;
use crate::{CliError, Command, ExampleArgs, PolicyArgs, RamseyArgs, RecoverArgs, SimulateArgs, SolveArgs};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cmd: &Command, m: &mut Manifest) -> Result<()> {
    match cmd {
        Command::Validate { model, out } => validate(model, out, m),
        Command::Solve(a) => solve(a, m),
        Command::Policy(a) => policy(a, m),
        Command::Simulate(a) => simulate_cmd(a, m),
        Command::Example(a) => example(a, m),
        Command::Ramsey(a) => ramsey(a, m),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<ModelSpec> {
    load_model(path).map_err(|e| match e {
        ParseError::Io(io) => CliError::Io(format!("{}: {io}", path.display())),
        other => CliError::Validation(format!("{}: {other}", path.display())),
    })
}

fn read_field(path: &Path) -> Result<recdual::dual_value::DualValueField> {
    load_field(path).map_err(|e| match e {
        CodecError::Io(io) => CliError::Io(format!("{}: {io}", path.display())),
        other => CliError::Validation(format!("{}: {other}", path.display())),
    })
}

fn check_model(spec: &ModelSpec, m: &mut Manifest) -> Result<()> {
    let v = spec.validate();
    m.set("violations", v.len());
    if v.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("model has {} violation(s); first: {}", v.len(), v[0])))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn validate(model: &Path, out: &Path, m: &mut Manifest) -> Result<()> {
    let spec = read_model(model)?;
    let v = spec.validate();
    let mut csv = String::from("kind,message\n");
    for x in &v {
        let _ = writeln!(csv, "{:?},{}", x.kind, csv_field(&x.message));
        eprintln!("{x}");
    }
    write_file(out, &csv)?;
    check_model(&spec, m)
}

fn solve(a: &SolveArgs, m: &mut Manifest) -> Result<()> {
    let mut spec = read_model(&a.model)?;
    if let Some(e) = a.slater_eps {
        spec.slater_eps = Some(e);
    }
    check_model(&spec, m)?;
    let variant: Variant = a.variant.parse().map_err(|_| CliError::Validation(format!("unknown variant `{}`", a.variant)))?;
    for (name, v) in [("tol", a.tol), ("inner-tol", a.inner_tol)] {
        if !(v > 0.0) {
            return Err(CliError::Validation(format!("--{name} must be positive")));
        }
    }
    let mut opts = SolveOptions::new(&spec, variant);
    opts.grid = GridSpec {
        n: a.grid_n,
        geometric: a.geometric,
        gamma_max: a.gamma_max,
        extra_knots: a.knots.clone(),
    };
    opts.tol = a.tol;
    opts.max_iter = a.max_iter;
    opts.bellman.inner.tol = a.inner_tol;
    m.set("variant", variant.as_str());
    m.set("gamma_max", a.gamma_max.unwrap_or_else(|| default_gamma_max(&spec)));
    let sol = value_iterate(&spec, &opts).map_err(|e| match e {
        SolveError::InvalidModel(_) | SolveError::Grid(_) => CliError::Validation(e.to_string()),
        other => CliError::NonConvergence(other.to_string()),
    })?;
    let r = &sol.report;
    let mut csv = String::from("iter,norm,max_monotonicity_violation,max_kkt_residual,inner_failures\n");
    for rec in &r.records {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            rec.iter, rec.norm, rec.max_monotonicity_violation, rec.max_kkt_residual, rec.inner_failures
        );
    }
    write_file(&a.report, &csv)?;
    save_field(&sol.field, &a.out).map_err(|e| CliError::Io(format!("{}: {e}", a.out.display())))?;
    let root = sol.field.evaluate(&vec![0.0; spec.num_constraints()], spec.initial_state, spec.initial_shock);
    m.set("grid_points", sol.field.grid().len());
    m.set("iterations", r.records.len());
    m.set("converged", r.converged);
    m.set("monotone", r.monotone);
    m.set("max_monotonicity_violation", r.max_monotonicity_violation);
    m.set("max_kkt_residual", r.max_kkt_residual);
    m.set("inner_failures", r.inner_failures);
    m.set("value_at_root", root);
    println!("value at root: {root}");
    if r.converged {
        Ok(())
    } else {
        Err(CliError::NonConvergence(format!("no convergence within {} iterations", a.max_iter)))
    }
}

fn recover_options(r: &RecoverArgs) -> Result<RecoverOptions> {
    if r.iters == 0 || !(r.sigma0 > 0.0) || !(0.0..1.0).contains(&r.burn_in) {
        return Err(CliError::Validation("need --iters > 0, --sigma0 > 0, --burn-in in [0, 1)".into()));
    }
    Ok(RecoverOptions {
        iterations: r.iters,
        sigma0: r.sigma0,
        burn_in: r.burn_in,
        ..Default::default()
    })
}

fn policy(a: &PolicyArgs, m: &mut Manifest) -> Result<()> {
    let spec = read_model(&a.model)?;
    check_model(&spec, m)?;
    let field = read_field(&a.field)?;
    let dim = spec.num_constraints();
    let phi = if a.phi == "auto" {
        initial_promise(&spec)
    } else {
        let v: std::result::Result<Vec<f64>, _> = a.phi.split(',').map(|t| t.trim().parse::<f64>()).collect();
        v.ok()
            .filter(|v| v.len() == dim)
            .ok_or_else(|| CliError::Validation(format!("--phi needs {dim} comma-separated numbers or `auto`")))?
    };
    let x = a.x.unwrap_or(spec.initial_state);
    let s = a.s.unwrap_or(spec.initial_shock);
    if x >= spec.num_states || s >= spec.num_shocks {
        return Err(CliError::Validation("--x or --s out of range".into()));
    }
    let lot = recover_stage(&spec, &field, &phi, x, s, &recover_options(&a.recover)?)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let res = check_stage(&spec, &field, &lot, a.delta);
    let mut csv = String::from("action,prob,next_shock");
    for i in 0..dim {
        let _ = write!(csv, ",lambda{i}");
    }
    for i in 0..dim {
        let _ = write!(csv, ",promise{i}");
    }
    csv.push('\n');
    for (j, act) in lot.support.iter().enumerate() {
        for s2 in 0..spec.num_shocks {
            if spec.prob(s, s2) == 0.0 {
                continue;
            }
            let _ = write!(csv, "{act},{},{s2}", lot.probs[j]);
            for v in lot.lambda[j].iter().chain(&lot.promised[j][s2]) {
                let _ = write!(csv, ",{v}");
            }
            csv.push('\n');
        }
    }
    write_file(&a.out, &csv)?;
    m.set("x", x);
    m.set("s", s);
    m.set("phi", join(&phi));
    m.set("mu", join(&lot.mu));
    m.set("support_size", lot.support.len());
    m.set("box_exceeded", lot.box_exceeded);
    let names = [
        "multiplier_distance",
        "subdifferential",
        "promise_shortfall",
        "constraint_shortfall",
        "promise_slackness",
        "constraint_slackness",
    ];
    for (n, v) in names.iter().zip(res.as_array()) {
        m.set(&format!("residual_{n}"), v);
    }
    println!("support {} actions, largest residual {}", lot.support.len(), res.max());
    Ok(())
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn simulate_cmd(a: &SimulateArgs, m: &mut Manifest) -> Result<()> {
    let spec = read_model(&a.model)?;
    check_model(&spec, m)?;
    let field = read_field(&a.field)?;
    if a.paths == 0 || a.horizon == 0 || !(a.quantum > 0.0) {
        return Err(CliError::Validation("need --paths > 0, --horizon > 0, --quantum > 0".into()));
    }
    let opts = SimulateOptions {
        horizon: a.horizon,
        paths: a.paths,
        seed: a.seed,
        recover: recover_options(&a.recover)?,
        quantum: a.quantum,
        min_group: a.min_group,
        abs_tol: a.abs_tol,
        record_paths: a.out.is_some(),
        ..Default::default()
    };
    let r = simulate(&spec, &field, &opts).map_err(|e| CliError::Validation(e.to_string()))?;
    let root = r.field_value.unwrap_or(f64::NAN);
    let tolerance = r.truncation_bound + 3.0 * r.stderr + a.solver_tol;
    let gap = (r.mean_objective - root).abs();
    let failed = r.groups.iter().filter(|g| !g.passed()).count();
    let mut rows: Vec<(String, String)> = vec![
        ("variant".into(), field.variant().as_str().into()),
        ("paths".into(), r.paths.to_string()),
        ("horizon".into(), r.horizon.to_string()),
        ("seed".into(), a.seed.to_string()),
        ("mean_objective".into(), r.mean_objective.to_string()),
        ("stderr".into(), r.stderr.to_string()),
        ("field_value".into(), root.to_string()),
        ("truncation_bound".into(), r.truncation_bound.to_string()),
        ("value_tolerance".into(), tolerance.to_string()),
        ("value_gap".into(), gap.to_string()),
        ("value_ok".into(), (gap <= tolerance).to_string()),
        ("stages".into(), r.stages.to_string()),
        ("boxed_stages".into(), r.boxed_stages.to_string()),
        ("groups_checked".into(), r.groups.len().to_string()),
        ("groups_excluded".into(), r.excluded_groups.to_string()),
        ("groups_failed".into(), failed.to_string()),
    ];
    for i in 0..spec.num_constraints() {
        rows.push((format!("mean_discounted_g{i}"), r.mean_discounted_g[i].to_string()));
        rows.push((format!("stderr_discounted_g{i}"), r.stderr_discounted_g[i].to_string()));
    }
    let mut csv = String::from("metric,value\n");
    for (k, v) in &rows {
        let _ = writeln!(csv, "{k},{v}");
        m.set(k, v);
    }
    write_file(&a.summary, &csv)?;
    if let Some(path) = &a.groups {
        let mut g = String::from("t,history,constraint,count,mean_slack,stderr,tolerance,passed\n");
        for c in &r.groups {
            let GroupCheck {
                t,
                key,
                constraint,
                count,
                mean_slack,
                stderr,
                tolerance,
            } = c;
            let _ = writeln!(g, "{t},{key:016x},{constraint},{count},{mean_slack},{stderr},{tolerance},{}", c.passed());
        }
        write_file(path, &g)?;
    }
    if let Some(path) = &a.out {
        let mut p = PathRow::csv_header(spec.num_constraints());
        p.push('\n');
        for row in &r.rows {
            p.push_str(&row.to_csv());
            p.push('\n');
        }
        write_file(path, &p)?;
    }
    println!("mean objective {} ± {} (field {root})", r.mean_objective, r.stderr);
    if gap > tolerance {
        return Err(CliError::NonConvergence(format!(
            "simulated value {} differs from the field value {root} by {gap} > {tolerance}",
            r.mean_objective
        )));
    }
    if failed > 0 {
        return Err(CliError::NonConvergence(format!("{failed} history group(s) violate a constraint")));
    }
    Ok(())
}

fn example(a: &ExampleArgs, m: &mut Manifest) -> Result<()> {
    let bad = |e: &dyn std::fmt::Display| CliError::Validation(e.to_string());
    let mut csv = String::from("quantity,value\n");
    let spec = match a.which {
        1 => {
            let v = example1_values(a.beta).map_err(|e| bad(&e))?;
            for (k, x) in [("beta", a.beta), ("V0", v.v0), ("V1", v.v1), ("V2", v.v2)] {
                let _ = writeln!(csv, "{k},{x}");
                m.set(k, x);
            }
            build_example1(a.beta, &example1_c_grid(a.beta)).map_err(|e| bad(&e))?
        }
        2 => {
            let sol = example2_solve(a.sigma).map_err(|e| bad(&e))?;
            let spec = build_example2(a.sigma, &example2_c_grid(a.sigma)).map_err(|e| bad(&e))?;
            let scan = example2_deterministic_scan(a.sigma, a.scan_length, spec.lipschitz_bound()).map_err(|e| bad(&e))?;
            for (k, x) in [
                ("sigma", sol.sigma),
                ("beta", sol.beta),
                ("c_star", sol.c_star),
                ("V", sol.value),
                ("scan_length", a.scan_length as f64),
                ("deterministic_prefix_best", scan.best_prefix_value),
                ("deterministic_tail_bound", scan.tail_bound),
                ("deterministic_interval_bound", scan.interval_bound),
                ("margin", scan.tail_margin().min(scan.interval_margin())),
            ] {
                let _ = writeln!(csv, "{k},{x}");
                m.set(k, x);
            }
            spec
        }
        n => return Err(CliError::Validation(format!("unknown example {n}; use 1 or 2"))),
    };
    write_file(&a.out, &csv)?;
    if let Some(path) = &a.model_out {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io(e.to_string()))?;
        }
        save_model(&spec, path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    print!("{csv}");
    Ok(())
}

fn ramsey(a: &RamseyArgs, m: &mut Manifest) -> Result<()> {
    let sc = RamseyScenario {
        probs: vec![a.p1, 1.0 - a.p1],
        g: vec![0.0, a.g_high],
        b_prev: a.b_prev,
        ..Default::default()
    };
    let bad = |e: recdual::ramsey::RamseyError| CliError::Validation(e.to_string());
    sc.validate().map_err(bad)?;
    let mut fig1 = String::from("ell,f_state1,f_state2,welfare\n");
    for row in curves(&sc, a.points) {
        let _ = writeln!(fig1, "{}", row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
    }
    write_file(&a.out_dir.join("fig1.csv"), &fig1)?;
    let panels = [
        Branches {
            label: "ell2_low".into(),
            pi: vec![vec![0.0, 1.0], vec![1.0]],
        },
        Branches {
            label: "ell2_high".into(),
            pi: vec![vec![0.0, 1.0], vec![0.0]],
        },
        Branches {
            label: "ell2_high_lottery".into(),
            pi: vec![vec![0.5], vec![0.0]],
        },
    ];
    let mut fig2 = ScatterRow::csv_header(sc.g.len());
    fig2.push('\n');
    let mut count = 0;
    for p in &panels {
        for row in enumerate_scatter(&sc, p).map_err(bad)? {
            fig2.push_str(&row.to_csv());
            fig2.push('\n');
            count += 1;
        }
    }
    write_file(&a.out_dir.join("fig2.csv"), &fig2)?;
    let (cap, _) = max_debt(a.g_high, 1000).map_err(bad)?;
    let d = dominance_check(&sc, a.margin).map_err(bad)?;
    let best = |b: &Option<recdual::ramsey::BestPlan>| b.as_ref().map_or(f64::NAN, |p| p.welfare);
    let mut dom = String::from("quantity,value\n");
    for (k, v) in [
        ("b_prev", a.b_prev.to_string()),
        ("max_debt", cap.to_string()),
        ("best_deterministic", best(&d.best_det).to_string()),
        ("best_lottery", best(&d.best_lottery).to_string()),
        ("margin", d.margin.to_string()),
        ("dominates", d.dominates.to_string()),
        ("scatter_rows", count.to_string()),
    ] {
        let _ = writeln!(dom, "{k},{v}");
        m.set(k, &v);
    }
    write_file(&a.out_dir.join("dominance.csv"), &dom)?;
    print!("{dom}");
    Ok(())
}
