use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use gridform_core::analysis::{
    cct_bracket, doa_boundary, run_fault, saturated_unstable_angle, sweep, CctRow, DoaBoundary,
    SweepKind, SweepTable,
};
use gridform_core::mpc::{equilibrium_angle, SolveLogRow};
use gridform_core::phasor::{saturation_rhs, theta_sat};
use gridform_core::ControllerRef;

use crate::config::ScenarioConfig;
use crate::error::CliError;

/// Options shared by every subcommand after flag overrides.
pub struct Context {
    pub config: ScenarioConfig,
    pub out: PathBuf,
    pub strategy: Option<String>,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Config(format!(
            "output error: cannot create output directory {}: {e}",
            dir.display()
        ))
    })?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| {
        CliError::Simulation(format!(
            "output error: cannot write {}: {e}",
            path.display()
        ))
    })?;
    Ok(BufWriter::new(file))
}

fn strategy_names(ctx: &Context, fallback: &[String]) -> Vec<String> {
    match &ctx.strategy {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
        None => fallback.to_vec(),
    }
}

pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let name = ctx
        .strategy
        .clone()
        .unwrap_or_else(|| cfg.strategy.kind.clone());
    let strategy = cfg.named_strategy(&name)?;
    let (output, verdict) = run_fault(
        &cfg.fault_setup(),
        &strategy,
        &cfg.params,
        cfg.fault.duration,
    )?;
    output
        .trajectory
        .write_csv(create(&ctx.out, "trajectory.csv")?)?;
    if matches!(strategy, ControllerRef::Mpc(_)) {
        SolveLogRow::write_csv(&output.solve_log, create(&ctx.out, "solve_log.csv")?)?;
    }
    println!("strategy: {}", strategy.label());
    println!("samples: {}", output.trajectory.len());
    println!("peak theta: {:.6} rad", output.trajectory.peak_theta());
    println!(
        "releases from saturation: {}",
        output.trajectory.release_count()
    );
    match verdict {
        Ok(v) => {
            println!("classification: {}", v.classification.as_str());
            if let Some(t) = v.settle_time {
                println!("settled from: {t:.4} s");
            }
        }
        Err(e) => println!("classification: indeterminate ({e})"),
    }
    for e in &output.controller_errors {
        eprintln!("controller: {e}");
    }
    Ok(())
}

pub fn cct(ctx: &Context, tol: f64) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let setup = cfg.fault_setup();
    let mut rows = Vec::new();
    let mut first_error = None;
    for name in strategy_names(ctx, &cfg.cct.strategies) {
        let strategy = cfg.named_strategy(&name)?;
        let cct_s = match cct_bracket(&setup, &strategy, &cfg.params, tol) {
            Ok(r) => {
                println!(
                    "{}: cct {:.6} s, unstable at {:.6} s, {} probes",
                    strategy.label(),
                    r.cct,
                    r.unstable_at,
                    r.probes
                );
                r.cct
            }
            Err(e) => {
                eprintln!("{}: {e}", strategy.label());
                first_error.get_or_insert(CliError::from(e));
                f64::NAN
            }
        };
        rows.push(CctRow {
            param: cfg.fault.v_fault,
            strategy: strategy.label().to_string(),
            cct_s,
        });
    }
    SweepTable::Cct {
        rows,
        failures: vec![],
    }
    .write_csv(create(&ctx.out, "cct.csv")?)?;
    first_error.map_or(Ok(()), Err)
}

pub fn doa(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let name = ctx
        .strategy
        .clone()
        .unwrap_or_else(|| cfg.strategy.kind.clone());
    let base = cfg.named_strategy(&name)?;
    let strategies = match base {
        ControllerRef::Cl0 { .. } if !cfg.doa.cl0_levels.is_empty() => cfg
            .doa
            .cl0_levels
            .iter()
            .map(|&m| ControllerRef::Cl0 { delta_p_ref_max: m })
            .collect(),
        _ => vec![base],
    };
    let grid = cfg.grid_condition();
    let mut opts = cfg.doa_options();
    let thetas = opts.theta_grid(cfg.params.theta_zero_crossing());
    let mut curves = Vec::new();
    let mut plants = vec![opts.sim.plant.saturation_enabled];
    if cfg.doa.compare_unsaturated && plants[0] {
        plants.push(false);
    }
    for saturation in plants {
        opts.sim.plant.saturation_enabled = saturation;
        for s in &strategies {
            let curve = doa_boundary(s, &cfg.params, &grid, &thetas, &opts)?;
            let open = curve.points.iter().filter(|p| !p.closed).count();
            println!(
                "{}: {} points, {open} at the bracket edge",
                curve.strategy,
                curve.points.len()
            );
            curves.push(curve);
        }
    }
    DoaBoundary::write_csv(&curves, create(&ctx.out, "doa.csv")?)?;
    Ok(())
}

pub fn run_sweep(ctx: &Context, kind: SweepKind, tol: f64) -> Result<(), CliError> {
    let mut config = ctx.config.sweep_config()?;
    config.tol = tol;
    if let Some(list) = &ctx.strategy {
        config.strategies = strategy_names(ctx, &[])
            .iter()
            .map(|n| ctx.config.named_strategy(n))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Config(format!("--strategy {list}: {e}")))?;
    }
    let table = sweep(kind, &config)?;
    let name = match table {
        SweepTable::Cct { .. } => "cct_sweep.csv",
        SweepTable::Trajectory { .. } => "trajectory_sweep.csv",
    };
    table.write_csv(create(&ctx.out, name)?)?;
    println!("wrote {}", ctx.out.join(name).display());
    for f in table.failures() {
        eprintln!("failed cell: {f}");
    }
    if table.failures().is_empty() {
        Ok(())
    } else {
        Err(CliError::Degenerate(format!(
            "degenerate analysis: {} sweep cells failed",
            table.failures().len()
        )))
    }
}

pub fn landmarks(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let (p, grid) = (&cfg.params, cfg.grid_condition());
    let v = p.v0;
    let absent = "absent";
    println!(
        "grid: v_g = {:.4}, X = {:.4} (z_g {:.4} + x_tr {:.4}), v_ref = {v:.4}",
        grid.v_g, grid.x, cfg.grid.z_g, p.x_tr
    );
    let eq = equilibrium_angle(p, &grid, v).ok();
    let show = |x: Option<f64>| x.map_or(absent.to_string(), |x| format!("{x:.6}"));
    println!(
        "{:<15} {:>10}  asin(p0 X / (v_g v_ref))",
        "theta_eq",
        show(eq)
    );
    let rhs = saturation_rhs(v, &grid, p, 1.0)?;
    let sat = theta_sat(v, &grid, p, 1.0)?;
    println!(
        "{:<15} {:>10}  acos(R), R = {rhs:.6}",
        "theta_sat",
        format!("{sat:.6}")
    );
    println!(
        "{:<15} {:>10}  acos(p0 (1 - X C omega_n) / (i_max v_g)) - beta",
        "theta_ue_sat",
        show(saturated_unstable_angle(p, &grid))
    );
    println!(
        "{:<15} {:>10}  pi/2 - beta",
        "theta_zc_sat",
        format!("{:.6}", p.theta_zero_crossing())
    );
    let ue_unsat = eq.map(|e| std::f64::consts::PI - e);
    println!(
        "{:<15} {:>10}  pi - theta_eq",
        "theta_ue_unsat",
        show(ue_unsat)
    );
    Ok(())
}

pub fn sweep_kind(name: &str) -> Result<SweepKind, CliError> {
    name.parse::<SweepKind>().map_err(CliError::from)
}
