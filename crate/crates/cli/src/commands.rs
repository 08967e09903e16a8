use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nlsys::blockopt::{
    bound_report, compactness_check, compute_block_mus, compute_mu, synchronized_coefficients, BoundKind,
    MuOptions,
};
use nlsys::coupling::{
    check_b3, check_graph_connected, estimate_cstar, validate_block_structure, BlockDecomposition, BlockSign,
    CouplingError, CouplingMatrix, CstarSource, SignPartition,
};
use nlsys::grid::Grid;
use nlsys::groundstate::{solve_radial_ground_state, sublinear_counterexample, RadialGrid, RadialProfile};
use nlsys::pde::{
    annulus_envelope, fit_decay, orbit_seeds, seed_bumps, sign_diagnostics, sliding_window_rates, solve_system,
    tail_norms, Bump, DecayOptions, Discretization, SolveError, SystemSpec, SystemState,
};
use nlsys::symmetry::{compute_dm, test_function_sweep, BumpQuadrature, Character, SymmetryGroup};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, SeedConfig};
use crate::run::{domain, usage, Failure, RunDir};

/// Everything a subcommand needs besides its own flags.
pub struct Context<'a> {
    pub config: &'a ExperimentConfig,
    /// Directory of the config file, for resolving relative paths.
    pub base: PathBuf,
    pub dir: RunDir,
}

fn matrix(config: &ExperimentConfig) -> Result<CouplingMatrix<f64>, Failure> {
    CouplingMatrix::new(config.problem.beta.clone()).map_err(|e| usage(format!("coupling matrix: {e}")))
}

fn decomposition(config: &ExperimentConfig, ell: usize) -> Result<BlockDecomposition, Failure> {
    match &config.decomposition {
        Some(d) => BlockDecomposition::new(d.boundaries.clone(), SignPartition(d.signs.clone()))
            .map_err(|e| usage(format!("decomposition: {e}"))),
        None => BlockDecomposition::new(vec![0, ell], SignPartition::all_plus(1)).map_err(usage),
    }
}

fn group_order(config: &ExperimentConfig) -> usize {
    config.decomposition.as_ref().map_or(6, |d| d.group_order)
}

fn profile(config: &ExperimentConfig) -> Result<RadialProfile<f64>, Failure> {
    let grid = RadialGrid {
        step: config.ground_state.step,
        r_max: config.ground_state.r_max,
    };
    solve_radial_ground_state(config.problem.dimension, config.problem.exponent, grid)
        .map_err(|e| domain(format!("ground state: {e}")))
}

fn spec(config: &ExperimentConfig) -> Result<SystemSpec<f64>, Failure> {
    let beta = matrix(config)?;
    let ell = beta.ell();
    let potentials = match &config.problem.potentials {
        Some(list) => list.iter().map(|p| p.build()).collect(),
        None => vec![nlsys::pde::Potential::Constant(1.0); ell],
    };
    SystemSpec::new(config.problem.dimension, config.problem.exponent, beta, potentials).map_err(domain)
}

fn read_state(path: &Path) -> Result<SystemState<f64>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    SystemState::from_text(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn sign_name(s: BlockSign) -> &'static str {
    match s {
        BlockSign::Plus => "plus",
        BlockSign::Minus => "minus",
    }
}

/// Runs (B1), (B2) and (B3). The reason names the first hypothesis that fails.
fn hypotheses(config: &ExperimentConfig) -> Result<(Value, Option<String>), Failure> {
    let beta = matrix(config)?;
    let p = config.problem.exponent;
    let decomp = decomposition(config, beta.ell())?;
    if decomp.ell() != beta.ell() {
        return Err(usage(format!(
            "decomposition covers {} components, matrix has {}",
            decomp.ell(),
            beta.ell()
        )));
    }
    let signs = decomp.signs().clone();
    match validate_block_structure(&beta, decomp.boundaries(), signs.clone()) {
        Ok(_) => {}
        Err(
            e @ (CouplingError::DiagonalNotPositive(_)
            | CouplingError::IntraBlockNegative(..)
            | CouplingError::CrossBlockNonNegative(..)),
        ) => {
            let reason = format!("B1 failed: {e}");
            return Ok((json!({ "b1": { "pass": false, "reason": e.to_string() } }), Some(reason)));
        }
        Err(e) => return Err(usage(e)),
    }
    let connected: Vec<bool> = (0..decomp.q()).map(|h| check_graph_connected(&decomp, &beta, h)).collect();
    let mut reason = connected
        .iter()
        .position(|c| !c)
        .map(|h| format!("B2 failed at block {}", h + 1));
    let user = config.decomposition.as_ref().and_then(|d| d.cstar);
    let (cstar, source, estimate) = match user {
        Some(c) => (c, CstarSource::UserSupplied, Value::Null),
        None => {
            let omega = profile(config)?;
            let est = estimate_cstar(p, &signs, group_order(config), &omega).map_err(domain)?;
            (est.cstar, est.mode, serde_json::to_value(&est).map_err(usage)?)
        }
    };
    let b3 = check_b3(&decomp, &beta, p, cstar, source).map_err(domain)?;
    if reason.is_none() {
        reason = b3.first_failure().map(|h| format!("B3 failed at block {}", h + 1));
    }
    let body = json!({
        "b1": { "pass": true },
        "b2": connected.iter().enumerate().map(|(h, c)| json!({ "block": h + 1, "connected": c })).collect::<Vec<_>>(),
        "b3": serde_json::to_value(&b3).map_err(usage)?,
        "cstar_estimate": estimate,
    });
    Ok((body, reason))
}

pub fn check_matrix(ctx: &mut Context) -> Result<(), Failure> {
    let (mut body, reason) = hypotheses(ctx.config)?;
    body["pass"] = json!(reason.is_none());
    body["reason"] = json!(reason);
    ctx.dir.report("b3_report.json", body)?;
    match reason {
        Some(r) => Err(domain(r)),
        None => Ok(()),
    }
}

pub fn ground_state(ctx: &mut Context) -> Result<(), Failure> {
    let prof = profile(ctx.config)?;
    ctx.dir.write("profile.txt", &prof.to_table())?;
    ctx.dir.report(
        "ground_state.json",
        json!({
            "dimension": prof.dimension,
            "exponent": prof.exponent,
            "norm_sq": prof.norm_sq,
            "l2p_norm_pow": prof.l2p_norm_pow,
            "nehari_defect": prof.nehari_defect(),
            "center_value": prof.center_value,
            "splice_radius": prof.splice_radius,
        }),
    )
}

fn mu_options(config: &ExperimentConfig) -> MuOptions {
    MuOptions {
        seed: config.seed,
        ..MuOptions::default()
    }
}

pub fn mu(ctx: &mut Context) -> Result<(), Failure> {
    let config = ctx.config;
    let beta = matrix(config)?;
    let decomp = decomposition(config, beta.ell())?;
    let mus = compute_block_mus(&decomp, &beta, config.problem.exponent, &mu_options(config)).map_err(domain)?;
    let blocks: Vec<Value> = mus
        .iter()
        .map(|m| {
            json!({
                "block": m.block + 1,
                "sign": sign_name(decomp.sign(m.block)),
                "mu": m.mu,
                "argmin": m.argmin,
                "t": synchronized_coefficients(m),
                "multistart_spread": m.multistart_spread,
            })
        })
        .collect();
    ctx.dir.report("mu.json", json!({ "blocks": blocks }))
}

fn initial_state(
    ctx: &Context,
    seed: &SeedConfig,
    grid: &Grid<f64>,
    decomp: &BlockDecomposition,
    ell: usize,
) -> Result<SystemState<f64>, Failure> {
    let dim = grid.dim();
    match seed {
        SeedConfig::Bumps { components } => {
            let prof = profile(ctx.config)?;
            let bumps: Vec<Vec<Bump<f64>>> = if components.is_empty() {
                vec![
                    vec![Bump {
                        center: [0.0; 4],
                        amplitude: 1.0,
                    }];
                    ell
                ]
            } else {
                if components.len() != ell {
                    return Err(usage(format!("{} seed components for {ell} components", components.len())));
                }
                let mut out = Vec::with_capacity(ell);
                for list in components {
                    let mut row = Vec::with_capacity(list.len());
                    for b in list {
                        if b.center.len() != dim {
                            return Err(usage(format!("bump centre {:?} is not {dim}-dimensional", b.center)));
                        }
                        let mut center = [0.0; 4];
                        center[..dim].copy_from_slice(&b.center);
                        row.push(Bump {
                            center,
                            amplitude: b.amplitude,
                        });
                    }
                    out.push(row);
                }
                out
            };
            SystemState::new(grid.clone(), seed_bumps(grid, &prof, &bumps)).map_err(usage)
        }
        SeedConfig::Orbit { group_order, radii } => {
            let prof = profile(ctx.config)?;
            orbit_seeds(grid, &prof, decomp, *group_order, radii).map_err(usage)
        }
        SeedConfig::Checkpoint { path } => {
            let state = read_state(&ctx.base.join(path))?;
            if state.grid != *grid {
                return Err(usage("checkpoint grid differs from the [solver] grid"));
            }
            Ok(state)
        }
    }
}

pub fn solve(ctx: &mut Context, force: bool) -> Result<(), Failure> {
    let config = ctx.config;
    if !force {
        let (_, reason) = hypotheses(config)?;
        if let Some(r) = reason {
            return Err(domain(format!("{r}; pass --force to solve anyway")));
        }
    }
    let section = config.solver.as_ref().ok_or_else(|| usage("solve needs a [solver] section"))?;
    let spec = spec(config)?;
    let decomp = decomposition(config, spec.ell())?;
    let grid = Grid::new(spec.dimension, section.points, section.half_width)
        .ok_or_else(|| usage(format!("invalid grid: {} points on half-width {}", section.points, section.half_width)))?;
    let init = initial_state(ctx, &section.seed, &grid, &decomp, spec.ell())?;
    let (outcome, failure) = match solve_system(&spec, &decomp, init, &section.solver_config()) {
        Ok(o) => (o, None),
        Err(SolveError::Setup(e)) => return Err(domain(e)),
        Err(e) => {
            let reason = domain(&e);
            match e {
                SolveError::BlockCollapse { partial, .. } | SolveError::MaxIterations { partial, .. } => {
                    (*partial, Some(reason))
                }
                SolveError::Setup(_) => unreachable!(),
            }
        }
    };
    let ell = spec.ell();
    let c = &outcome.interactions;
    let mut overlap = 0.0f64;
    for i in 0..ell {
        for j in i + 1..ell {
            let scale = (c.get(i, i) * c.get(j, j)).sqrt();
            if scale > 0.0 {
                overlap = overlap.max(c.get(i, j) / scale);
            }
        }
    }
    let signs: Vec<Value> = sign_diagnostics(&outcome.state, 1e-8)
        .iter()
        .zip(&outcome.state.tags)
        .map(|(d, tag)| {
            let expected = match tag {
                Some(Character::Trivial) => Some("positive"),
                Some(Character::Theta) => Some("sign-changing"),
                None => None,
            };
            json!({
                "component": d.component + 1,
                "class": d.class,
                "expected": expected,
                "max": d.max,
                "min": d.min,
            })
        })
        .collect();
    if config.outputs.checkpoint {
        ctx.dir.write("state.txt", &outcome.state.to_text())?;
    }
    if config.outputs.csv {
        ctx.dir.write("convergence.csv", &outcome.log_csv())?;
    }
    ctx.dir.report(
        "solve.json",
        json!({
            "converged": outcome.converged,
            "iterations": outcome.iterations,
            "energy": outcome.energy,
            "nehari_energy": outcome.nehari_energy,
            "max_residual": outcome.max_residual(),
            "residuals": outcome.residuals,
            "component_norms": outcome.component_norms,
            "total_norm": outcome.total_norm(),
            "overlap": overlap,
            "equivariance": outcome.equivariance,
            "signs": signs,
            "status": failure.as_ref().map(|f| f.message().to_string()),
        }),
    )?;
    match failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

pub fn decay_report(ctx: &mut Context, state: &Path) -> Result<(), Failure> {
    let config = ctx.config;
    let state = read_state(state)?;
    let spec = spec(config)?;
    if state.ell() != spec.ell() || state.grid.dim() != spec.dimension {
        return Err(usage(format!(
            "state has {} components in {}D, config describes {} in {}D",
            state.ell(),
            state.grid.dim(),
            spec.ell(),
            spec.dimension
        )));
    }
    let half = state.grid.half_width();
    let [lo, hi] = config.decay.window.unwrap_or([0.2 * half, 0.7 * half]);
    let opts = DecayOptions {
        noise_floor: config.decay.noise_floor,
        relative_tolerance: config.decay.relative_tolerance,
    };
    let fit = fit_decay(&state, &spec, (lo, hi), &opts).map_err(domain)?;
    let radii = linspace(0.0, half, config.decay.tail_samples);
    let tail = tail_norms(&state, &radii, config.decay.tail_window.map(|[a, b]| (a, b))).map_err(domain)?;
    let third = (hi - lo) / 3.0;
    let windows = [(lo, lo + third), (lo + third, lo + 2.0 * third), (lo + 2.0 * third, hi)];
    let sliding: Vec<Vec<Option<f64>>> = state
        .fields
        .iter()
        .map(|u| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = annulus_envelope(&state.grid, u).into_iter().unzip();
            sliding_window_rates(&xs, &ys, &windows)
        })
        .collect();
    if config.outputs.csv {
        ctx.dir.write("decay.csv", &fit.to_csv())?;
        ctx.dir.write("tail.csv", &tail.to_csv())?;
    }
    ctx.dir.report(
        "decay.json",
        json!({
            "window": [lo, hi],
            "components": serde_json::to_value(&fit.components).map_err(usage)?,
            "all_pass": fit.all_pass(),
            "sliding_windows": windows.iter().map(|(a, b)| [*a, *b]).collect::<Vec<_>>(),
            "sliding_rates": sliding,
            "tail_exponent": tail.theta,
            "tail_monotone": tail.is_monotone(),
        }),
    )?;
    match fit.components.iter().find(|c| !c.pass) {
        Some(c) => {
            let rates: Vec<String> = sliding[c.component]
                .iter()
                .map(|r| r.map_or("n/a".into(), |v| format!("{v:.4}")))
                .collect();
            Err(domain(format!(
                "component {} decays at rate {:.4}, below {:.4}; sliding-window rates {}",
                c.component + 1,
                c.rate,
                c.threshold,
                rates.join(", ")
            )))
        }
        None => Ok(()),
    }
}

pub fn bounds(ctx: &mut Context, state: Option<&Path>) -> Result<(), Failure> {
    let config = ctx.config;
    let p = config.problem.exponent;
    let beta = matrix(config)?;
    let decomp = decomposition(config, beta.ell())?;
    let signs = decomp.signs().clone();
    let mu: Vec<f64> = match &config.bounds.mu {
        Some(m) => m.clone(),
        None => compute_block_mus(&decomp, &beta, p, &mu_options(config))
            .map_err(domain)?
            .iter()
            .map(|m| m.mu)
            .collect(),
    };
    let omega = match config.bounds.omega_norm_sq {
        Some(w) => w,
        None => profile(config)?.norm_sq,
    };
    let report = bound_report(&mu, &signs, omega).map_err(usage)?;
    let mut body = json!({ "report": serde_json::to_value(&report).map_err(usage)? });
    if let (Some(c_full), Some(c_sub)) = (config.bounds.c_full, &config.bounds.c_sub) {
        let cr = compactness_check(
            c_full,
            c_sub,
            &mu,
            group_order(config),
            p,
            omega,
            &signs,
            config.problem.dimension,
        )
        .map_err(usage)?;
        body["compactness"] = serde_json::to_value(&cr).map_err(usage)?;
    }
    let mut failure = None;
    if let Some(path) = state {
        let st = read_state(path)?;
        let spec = spec(config)?;
        let d = Discretization::for_state(&spec, &st).map_err(usage)?;
        let total: f64 = d.terms(&st.fields).quadratic.iter().sum();
        let violated = match report.kind {
            BoundKind::Equality => total > report.bound,
            BoundKind::Strict => total >= report.bound,
        };
        body["state"] = json!({
            "total_norm": total,
            "margin": report.bound - total,
            "within_bound": !violated,
        });
        if violated {
            failure = Some(domain(format!(
                "solved state has total norm {total:.6e}, above the bound {:.6e}",
                report.bound
            )));
        }
    }
    ctx.dir.report("bounds.json", body)?;
    match failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

pub fn counterexample(ctx: &mut Context) -> Result<(), Failure> {
    let config = ctx.config;
    let ce = &config.counterexample;
    let xs = linspace(ce.start, ce.end, ce.samples);
    let pts = sublinear_counterexample(&xs).map_err(usage)?;
    let ws: Vec<f64> = pts.iter().map(|q| q.w).collect();
    let windows: Vec<(f64, f64)> = ce.windows.iter().map(|[a, b]| (*a, *b)).collect();
    let rates = sliding_window_rates(&xs, &ws, &windows);
    let residual = pts.iter().map(|q| q.residual.abs()).fold(0.0, f64::max);
    let known: Vec<f64> = rates.iter().flatten().copied().collect();
    let decreasing = known.len() == rates.len() && known.windows(2).all(|w| w[1] < w[0]);
    if config.outputs.csv {
        let mut csv = String::from("x,w,c,residual\n");
        for q in &pts {
            let _ = writeln!(csv, "{:e},{:e},{:e},{:e}", q.x, q.w, q.c, q.residual);
        }
        ctx.dir.write("counterexample.csv", &csv)?;
    }
    // demo checkpoint for decay-report: |x|^{-2/3} capped at 1 inside the unit ball
    if let Some(section) = &config.solver {
        if config.problem.dimension == 1 {
            let grid = Grid::new(1, section.points, section.half_width)
                .ok_or_else(|| usage("invalid [solver] grid"))?;
            let u = grid.sample(|x| x[0].abs().max(1.0).powf(-2.0 / 3.0));
            let state = SystemState::new(grid, vec![u]).map_err(usage)?;
            ctx.dir.write("state.txt", &state.to_text())?;
        }
    }
    ctx.dir.report(
        "counterexample.json",
        json!({
            "windows": ce.windows,
            "rates": rates,
            "strictly_decreasing": decreasing,
            "final_rate": known.last(),
            "max_residual": residual,
        }),
    )?;
    if residual < 1e-10 {
        Ok(())
    } else {
        Err(domain(format!("equation residual {residual:.3e} is not below 1e-10")))
    }
}

pub fn test_function_sweep_cmd(ctx: &mut Context) -> Result<(), Failure> {
    let config = ctx.config;
    let sw = config
        .sweep
        .as_ref()
        .ok_or_else(|| usage("test-function-sweep needs a [sweep] section"))?;
    let beta = matrix(config)?;
    let decomp = decomposition(config, beta.ell())?;
    if sw.block >= decomp.q() {
        return Err(usage(format!("block {} does not exist ({} blocks)", sw.block, decomp.q())));
    }
    let p = config.problem.exponent;
    let block_beta = beta.submatrix(&decomp.block_indices(sw.block));
    let mu = compute_mu(&block_beta, p, &mu_options(config)).map_err(domain)?;
    let tbar = synchronized_coefficients(&mu);
    let group = SymmetryGroup::new(sw.group_order, sw.mode.into()).map_err(usage)?;
    let prof = profile(config)?;
    let sweep = test_function_sweep(
        &group,
        decomp.sign(sw.block),
        &sw.radii,
        &prof,
        &block_beta,
        &tbar,
        mu.mu,
        &BumpQuadrature::default(),
    )
    .map_err(domain)?;
    if config.outputs.csv {
        ctx.dir.write("sweep.csv", &sweep.to_csv())?;
    }
    ctx.dir.report(
        "sweep.json",
        json!({
            "block": sw.block + 1,
            "mu": mu.mu,
            "d_m": compute_dm::<f64>(sw.group_order),
            "rows": serde_json::to_value(&sweep.rows).map_err(usage)?,
            "r0": sweep.r0,
            "violations": sweep.violations,
            "log_gap_slope": sweep.log_gap_slope(),
        }),
    )?;
    match sweep.r0 {
        Some(_) => Ok(()),
        None => Err(domain("the gap is not positive at the largest radius")),
    }
}
