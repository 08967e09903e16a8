use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Discretization, DiscreteTerms, PdeError, SystemSpec, SystemState};
use crate::blockopt::{nehari_project, BlockOptError};
use crate::coupling::BlockDecomposition;
use crate::grid::Grid;
use crate::groundstate::RadialProfile;
use crate::linalg::SquareMatrix;
use crate::scalar::Real;
use crate::symmetry::{
    equivariance_error, project_equivariant, project_swap, Character, GroupMode, SymmetryGroup,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SolverConfig<T> {
    /// Stop once every relative residual is below this.
    pub tolerance: T,
    pub max_iterations: usize,
    /// Step is `fraction / (4N/h² + Λ)`.
    pub step_fraction: T,
    pub max_halvings: usize,
    /// Full (interpolating) group projection every this many iterations.
    pub projection_interval: usize,
    pub log_every: usize,
    pub collapse_threshold: T,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            tolerance: T::lit(1e-6),
            max_iterations: 200_000,
            step_fraction: T::lit(0.9),
            max_halvings: 40,
            projection_interval: 25,
            log_every: 100,
            collapse_threshold: T::lit(1e-8),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LogRow<T> {
    pub iteration: usize,
    pub energy: T,
    pub residual: T,
    pub step: T,
    /// The iterate went through the interpolating projection (exempt from the
    /// descent check).
    pub projected: bool,
    pub equivariance: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome<T> {
    pub state: SystemState<T>,
    pub energy: T,
    /// `(p−1)/(2p) Σ_i ‖u_i‖²`, equal to `energy` on the Nehari set.
    pub nehari_energy: T,
    pub residuals: Vec<T>,
    /// `‖u_i‖² = ∫|∇u_i|² + V_i u_i²`.
    pub component_norms: Vec<T>,
    pub interactions: SquareMatrix<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Final equivariance error of tagged components.
    pub equivariance: Vec<Option<T>>,
    pub log: Vec<LogRow<T>>,
}

impl<T: Real> SolveOutcome<T> {
    pub fn max_residual(&self) -> T {
        self.residuals.iter().copied().fold(T::zero(), T::max)
    }

    pub fn total_norm(&self) -> T {
        self.component_norms.iter().copied().sum()
    }

    pub fn nehari_mismatch(&self) -> T {
        (self.energy - self.nehari_energy).abs() / self.energy.abs().max(T::min_positive_value())
    }

    pub fn log_csv(&self) -> String {
        let mut out = String::from("iteration,energy,residual,step,projected,equivariance\n");
        for r in &self.log {
            let eq = r.equivariance.map(|e| format!("{e:e}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{},{}",
                r.iteration, r.energy, r.residual, r.step, r.projected as u8, eq
            );
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum SolveError<T: Real> {
    #[error(transparent)]
    Setup(#[from] PdeError),
    #[error("component {} collapsed (L² norm below threshold)", .component + 1)]
    BlockCollapse {
        component: usize,
        partial: Box<SolveOutcome<T>>,
    },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    MaxIterations {
        iterations: usize,
        residual: f64,
        partial: Box<SolveOutcome<T>>,
    },
}

impl<T: Real> SolveError<T> {
    pub fn partial(&self) -> Option<&SolveOutcome<T>> {
        match self {
            SolveError::Setup(_) => None,
            SolveError::BlockCollapse { partial, .. } | SolveError::MaxIterations { partial, .. } => Some(partial),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Bump<T> {
    pub center: [T; 4],
    pub amplitude: T,
}

/// `u_i = Σ amplitude · ω(|x − center|)` per component.
pub fn seed_bumps<T: Real>(grid: &Grid<T>, profile: &RadialProfile<T>, bumps: &[Vec<Bump<T>>]) -> Vec<Vec<T>> {
    let dim = grid.dim();
    bumps
        .iter()
        .map(|list| {
            grid.sample(|x| {
                list.iter()
                    .map(|b| {
                        let r = x.iter().zip(&b.center[..dim]).map(|(a, c)| (*a - *c) * (*a - *c)).sum::<T>().sqrt();
                        b.amplitude * profile.eval(r)
                    })
                    .sum()
            })
        })
        .collect()
}

fn group_for<T: Real>(grid: &Grid<T>, m: usize) -> Result<SymmetryGroup, PdeError> {
    let mode = match grid.dim() {
        4 => GroupMode::Full,
        2 => GroupMode::PlanarAnalog,
        d => {
            return Err(PdeError::InvalidSpec(format!(
                "symmetry tags need a 2- or 4-dimensional grid (got {d})"
            )))
        }
    };
    Ok(SymmetryGroup::new(m, mode)?)
}

/// Every component of block `h` starts as `Σ_g φ_h(g) ω(· − R_h g ζ_h)` (one
/// bump per distinct centre) and is tagged with `φ_h`. `R_h = 0` places a single
/// bump at the origin, which only suits positive blocks.
pub fn orbit_seeds<T: Real>(
    grid: &Grid<T>,
    profile: &RadialProfile<T>,
    decomposition: &BlockDecomposition,
    m: usize,
    radii: &[T],
) -> Result<SystemState<T>, PdeError> {
    if radii.len() != decomposition.q() {
        return Err(PdeError::InvalidSpec(format!(
            "{} orbit radii for {} blocks",
            radii.len(),
            decomposition.q()
        )));
    }
    let group = group_for(grid, m)?;
    let tol = T::lit(1e-9);
    let mut bumps = Vec::new();
    let mut tags = Vec::new();
    for i in 0..decomposition.ell() {
        let h = decomposition.block_of(i);
        let sign = decomposition.sign(h);
        let mut list: Vec<Bump<T>> = Vec::new();
        for (c, s) in group.orbit::<T>(sign)? {
            let center = c.map(|v| v * radii[h]);
            let dup = list
                .iter()
                .any(|b| b.center.iter().zip(&center).all(|(x, y)| (*x - *y).abs() < tol));
            if dup {
                continue;
            }
            list.push(Bump { center, amplitude: s });
        }
        bumps.push(list);
        tags.push(Some(Character::from(sign)));
    }
    let fields = seed_bumps(grid, profile, &bumps);
    SystemState::with_tags(grid.clone(), fields, tags, Some(m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignClass {
    Positive,
    Negative,
    SignChanging,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SignDiagnostic<T> {
    pub component: usize,
    pub max: T,
    pub min: T,
    pub class: SignClass,
}

/// Values within `relative_tolerance · max|u_i|` of zero are not counted as a sign.
pub fn sign_diagnostics<T: Real>(state: &SystemState<T>, relative_tolerance: T) -> Vec<SignDiagnostic<T>> {
    state
        .fields
        .iter()
        .enumerate()
        .map(|(component, u)| {
            let max = u.iter().copied().fold(T::neg_infinity(), T::max);
            let min = u.iter().copied().fold(T::infinity(), T::min);
            let scale = max.abs().max(min.abs());
            let cut = relative_tolerance * scale;
            let class = if scale == T::zero() {
                SignClass::Zero
            } else if max > cut && min < -cut {
                SignClass::SignChanging
            } else if max > cut {
                SignClass::Positive
            } else {
                SignClass::Negative
            };
            SignDiagnostic {
                component,
                max,
                min,
                class,
            }
        })
        .collect()
}

struct Projector<'a, T> {
    grid: &'a Grid<T>,
    group: Option<SymmetryGroup>,
    tags: &'a [Option<Character>],
}

impl<T: Real> Projector<'_, T> {
    fn apply(&self, fields: &mut [Vec<T>], full: bool) -> Result<(), PdeError> {
        let Some(group) = &self.group else {
            return Ok(());
        };
        for (f, tag) in fields.iter_mut().zip(self.tags) {
            let Some(phi) = *tag else { continue };
            if group.mode() == GroupMode::Full {
                project_swap(self.grid, f, phi)?;
            }
            if full {
                *f = project_equivariant(self.grid, f, group, phi)?;
            }
        }
        Ok(())
    }

    fn errors(&self, fields: &[Vec<T>]) -> Result<Vec<Option<T>>, PdeError> {
        fields
            .iter()
            .zip(self.tags)
            .map(|(f, tag)| match (&self.group, tag) {
                (Some(g), Some(phi)) => Ok(Some(equivariance_error(self.grid, f, g, *phi)?)),
                _ => Ok(None),
            })
            .collect()
    }

    fn worst(errors: &[Option<T>]) -> Option<T> {
        errors.iter().flatten().copied().reduce(T::max)
    }
}

/// Scales each block onto the Nehari set and returns the updated terms.
fn retract<T: Real>(
    d: &Discretization<T>,
    decomposition: &BlockDecomposition,
    fields: &mut [Vec<T>],
) -> Result<DiscreteTerms<T>, PdeError> {
    let mut terms = d.terms(fields);
    let q = decomposition.q();
    let block: Vec<usize> = (0..fields.len()).map(|i| decomposition.block_of(i)).collect();
    let mut a = vec![T::zero(); q];
    let mut b = SquareMatrix::zeros(q);
    for i in 0..fields.len() {
        a[block[i]] += terms.quadratic[i];
        for j in 0..fields.len() {
            let v = b.get(block[i], block[j]) + d.beta().get(i, j) * terms.interaction.get(i, j);
            b.set(block[i], block[j], v);
        }
    }
    let scaling = nehari_project(&a, &b, d.exponent()).map_err(|e| match e {
        BlockOptError::ConditionNFails(h) | BlockOptError::NonPositiveNorm(h) => PdeError::ConditionNFails { block: h },
        other => PdeError::InvalidSpec(format!("Nehari retraction failed: {other}")),
    })?;
    let p = d.exponent();
    let s: Vec<T> = block.iter().map(|&h| scaling.s[h]).collect();
    let sp: Vec<T> = s.iter().map(|v| v.powf(p)).collect();
    for (i, f) in fields.iter_mut().enumerate() {
        for v in f.iter_mut() {
            *v *= s[i];
        }
        terms.quadratic[i] *= s[i] * s[i];
    }
    for i in 0..fields.len() {
        for j in 0..fields.len() {
            let c = terms.interaction.get(i, j) * sp[i] * sp[j];
            terms.interaction.set(i, j, c);
        }
    }
    Ok(terms)
}

fn collapsed<T: Real>(grid: &Grid<T>, fields: &[Vec<T>], threshold: T) -> Option<usize> {
    let vol = grid.cell_volume();
    fields
        .iter()
        .position(|f| (f.iter().map(|v| *v * *v).sum::<T>() * vol).sqrt() < threshold)
}

/// Nehari-retracted L²-gradient flow.
///
/// Each iteration takes `u ← u − τ∇J(u)` (repulsive cross terms implicit, see
/// [`Discretization::descent_step`]), projects tagged components (the swap
/// average every time, the interpolating group average every
/// `projection_interval` iterations), and rescales blocks onto the Nehari set.
/// `τ` is halved until the energy does not increase.
pub fn solve_system<T: Real>(
    spec: &SystemSpec<T>,
    decomposition: &BlockDecomposition,
    initial: SystemState<T>,
    config: &SolverConfig<T>,
) -> Result<SolveOutcome<T>, SolveError<T>> {
    let d = Discretization::for_state(spec, &initial)?;
    if decomposition.ell() != spec.ell() {
        return Err(PdeError::InvalidSpec(format!(
            "decomposition covers {} components, system has {}",
            decomposition.ell(),
            spec.ell()
        ))
        .into());
    }
    let tagged = initial.tags.iter().any(Option::is_some);
    let group = match (tagged, initial.group_order) {
        (true, Some(m)) => Some(group_for(&initial.grid, m)?),
        _ => None,
    };
    let p = spec.exponent;
    let nehari_factor = (p - T::one()) / (T::lit(2.0) * p);
    let SystemState {
        grid,
        mut fields,
        tags,
        group_order,
    } = initial;
    let projector = Projector {
        grid: &grid,
        group,
        tags: &tags,
    };

    projector.apply(&mut fields, true)?;
    let mut terms = retract(&d, decomposition, &mut fields)?;
    let mut energy = d.energy_of(&terms);
    let mut equivariance = projector.errors(&fields)?;
    let mut tau = d.stable_step(config.step_fraction);
    let mut log = Vec::new();
    let mut iterations = 0usize;

    let finish = |fields: Vec<Vec<T>>,
                  terms: DiscreteTerms<T>,
                  energy: T,
                  residuals: Vec<T>,
                  iterations: usize,
                  converged: bool,
                  equivariance: Vec<Option<T>>,
                  log: Vec<LogRow<T>>| SolveOutcome {
        nehari_energy: nehari_factor * terms.quadratic.iter().copied().sum::<T>(),
        component_norms: terms.quadratic,
        interactions: terms.interaction,
        state: SystemState {
            grid: grid.clone(),
            fields,
            tags: tags.clone(),
            group_order,
        },
        energy,
        residuals,
        iterations,
        converged,
        equivariance,
        log,
    };

    if let Some(component) = collapsed(&grid, &fields, config.collapse_threshold) {
        let g = d.gradient(&fields);
        let residuals = d.residuals(&fields, &g);
        let partial = finish(fields, terms, energy, residuals, 0, false, equivariance, log);
        return Err(SolveError::BlockCollapse {
            component,
            partial: Box::new(partial),
        });
    }

    loop {
        let grad = d.gradient(&fields);
        let residuals = d.residuals(&fields, &grad);
        let worst = residuals.iter().copied().fold(T::zero(), T::max);
        let converged = worst < config.tolerance;
        let row = LogRow {
            iteration: iterations,
            energy,
            residual: worst,
            step: tau,
            projected: false,
            equivariance: Projector::<T>::worst(&equivariance),
        };
        if converged || iterations >= config.max_iterations || iterations.is_multiple_of(config.log_every.max(1)) {
            log.push(row);
        }
        if converged {
            let equivariance = projector.errors(&fields)?;
            return Ok(finish(fields, terms, energy, residuals, iterations, true, equivariance, log));
        }
        if iterations >= config.max_iterations {
            let equivariance = projector.errors(&fields)?;
            let partial = finish(fields, terms, energy, residuals, iterations, false, equivariance, log);
            return Err(SolveError::MaxIterations {
                iterations,
                residual: worst.as_f64(),
                partial: Box::new(partial),
            });
        }

        let full = tagged && config.projection_interval > 0 && (iterations + 1).is_multiple_of(config.projection_interval);
        let slack = T::lit(1e-12) * energy.abs().max(T::one());
        let repulsion = d.repulsion(&fields);
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let mut trial = d.descent_step(&fields, &grad, repulsion.as_deref(), tau);
            let step = projector
                .apply(&mut trial, full)
                .and_then(|_| retract(&d, decomposition, &mut trial));
            match step {
                Ok(t) => {
                    let e = d.energy_of(&t);
                    if full || e <= energy + slack {
                        accepted = Some((trial, t, e));
                        break;
                    }
                }
                Err(PdeError::ConditionNFails { .. }) => {}
                Err(other) => return Err(other.into()),
            }
            tau = tau / T::lit(2.0);
        }
        iterations += 1;
        let Some((trial, t, e)) = accepted else {
            let equivariance = projector.errors(&fields)?;
            let partial = finish(fields, terms, energy, residuals, iterations, false, equivariance, log);
            return Err(SolveError::MaxIterations {
                iterations,
                residual: worst.as_f64(),
                partial: Box::new(partial),
            });
        };
        fields = trial;
        terms = t;
        energy = e;
        if full {
            equivariance = projector.errors(&fields)?;
            log.push(LogRow {
                iteration: iterations,
                energy,
                residual: worst,
                step: tau,
                projected: true,
                equivariance: Projector::<T>::worst(&equivariance),
            });
        }
        if let Some(component) = collapsed(&grid, &fields, config.collapse_threshold) {
            let g = d.gradient(&fields);
            let residuals = d.residuals(&fields, &g);
            let partial = finish(fields, terms, energy, residuals, iterations, false, equivariance, log);
            return Err(SolveError::BlockCollapse {
                component,
                partial: Box::new(partial),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{CouplingMatrix, SignPartition};
    use crate::groundstate::{solve_radial_ground_state, RadialGrid};

    fn profile1d() -> RadialProfile<f64> {
        solve_radial_ground_state(1, 2.0, RadialGrid::default()).unwrap()
    }

    fn scalar(n: usize, half: f64) -> (SystemSpec<f64>, BlockDecomposition, SystemState<f64>) {
        let spec = SystemSpec::autonomous(1, 2.0, CouplingMatrix::new(vec![vec![1.0]]).unwrap()).unwrap();
        let decomp = BlockDecomposition::singletons(1, SignPartition::all_plus(1)).unwrap();
        let grid = Grid::new(1, n, half).unwrap();
        // off-centre, too small, and widened: the flow has real work to do
        let u = grid.sample(|x| 0.8 * (1.0 / (0.7 * (x[0] - 0.5)).cosh()));
        (spec, decomp, SystemState::new(grid, vec![u]).unwrap())
    }

    #[test]
    fn scalar_flow_reaches_the_soliton_level() {
        let (spec, decomp, init) = scalar(1025, 30.0);
        let out = solve_system(&spec, &decomp, init, &SolverConfig::default()).unwrap();
        assert!(out.converged && out.max_residual() < 1e-6);
        assert!((out.energy - 4.0 / 3.0).abs() < 2e-3, "{}", out.energy);
        assert!(out.nehari_mismatch() < 1e-8);
        let energies: Vec<f64> = out.log.iter().map(|r| r.energy).collect();
        assert!(energies.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0)));
        assert!(out.log_csv().lines().count() > 2);
    }

    #[test]
    fn stationary_seed_stops_immediately() {
        let (spec, decomp, init) = scalar(257, 20.0);
        let cfg = SolverConfig {
            tolerance: 1e-9,
            ..SolverConfig::default()
        };
        let first = solve_system(&spec, &decomp, init, &cfg).unwrap();
        let again = solve_system(&spec, &decomp, first.state.clone(), &cfg).unwrap();
        assert_eq!(again.iterations, 0);
        assert!(again.max_residual() < 1e-9);
    }

    #[test]
    fn max_iterations_returns_partial_state() {
        let (spec, decomp, init) = scalar(257, 20.0);
        let cfg = SolverConfig {
            max_iterations: 3,
            ..SolverConfig::default()
        };
        match solve_system(&spec, &decomp, init, &cfg) {
            Err(SolveError::MaxIterations { iterations, partial, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(partial.iterations, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_block_fails_condition_n() {
        let (spec, decomp, init) = scalar(65, 10.0);
        let zero = SystemState::zeros(init.grid.clone(), 1);
        assert!(matches!(
            solve_system(&spec, &decomp, zero, &SolverConfig::default()),
            Err(SolveError::Setup(PdeError::ConditionNFails { block: 0 }))
        ));
    }

    #[test]
    fn competitive_pair_segregates() {
        let beta = CouplingMatrix::new(vec![vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let spec = SystemSpec::autonomous(1, 2.0, beta).unwrap();
        let decomp = BlockDecomposition::singletons(2, SignPartition::all_plus(2)).unwrap();
        let grid = Grid::new(1, 513, 30.0).unwrap();
        let prof = profile1d();
        let bump = |c: f64| {
            vec![Bump {
                center: [c, 0.0, 0.0, 0.0],
                amplitude: 1.0,
            }]
        };
        let fields = seed_bumps(&grid, &prof, &[bump(-12.0), bump(12.0)]);
        let init = SystemState::new(grid, fields).unwrap();
        let out = solve_system(&spec, &decomp, init, &SolverConfig::default()).unwrap();
        let c = &out.interactions;
        assert!(c.get(0, 1) < 0.01 * c.get(0, 0));
        let signs = sign_diagnostics(&out.state, 1e-6);
        assert!(signs.iter().all(|s| s.class == SignClass::Positive));
    }

    #[test]
    fn orbit_seeds_in_the_plane() {
        let grid = Grid::<f64>::new(2, 41, 10.0).unwrap();
        let prof = solve_radial_ground_state(2, 2.0, RadialGrid::default()).unwrap();
        let decomp = BlockDecomposition::singletons(1, SignPartition::all_plus(1)).unwrap();
        let s = orbit_seeds(&grid, &prof, &decomp, 6, &[4.0]).unwrap();
        assert_eq!(s.tags, vec![Some(Character::Trivial)]);
        let g = SymmetryGroup::new(6, GroupMode::PlanarAnalog).unwrap();
        let e = equivariance_error(&grid, &s.fields[0], &g, Character::Trivial).unwrap();
        assert!(e < 0.1, "{e}");
        assert!(orbit_seeds(&Grid::new(1, 11, 3.0).unwrap(), &prof, &decomp, 6, &[2.0]).is_err());
        let centred = orbit_seeds(&grid, &prof, &decomp, 6, &[0.0]).unwrap();
        let mid = grid.len() / 2;
        assert!((centred.fields[0][mid] - prof.center_value).abs() < 1e-12);
    }
}
