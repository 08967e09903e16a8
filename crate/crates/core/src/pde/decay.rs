use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{PdeError, SystemSpec, SystemState};
use crate::groundstate::RadialProfile;
use crate::regression::{fit_exponential_rate, fit_line, LineFit};
use crate::scalar::Real;

/// `ξ_i(r) = ∫_{|x|≥r} |∇u_i|² + u_i²` on a list of radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TailSeries<T> {
    pub radii: Vec<T>,
    /// `xi[i][k] = ξ_i(radii[k])`.
    pub xi: Vec<Vec<T>>,
    /// `ϑ̂ = −slope` of `ln Σ_i ξ_i(r)` over the fit window.
    pub theta: Option<T>,
    pub fit: Option<LineFit<T>>,
}

impl<T: Real> TailSeries<T> {
    pub fn is_monotone(&self) -> bool {
        self.xi.iter().all(|row| row.windows(2).all(|w| w[1] <= w[0]))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("r");
        for i in 0..self.xi.len() {
            let _ = write!(out, ",xi_{}", i + 1);
        }
        out.push('\n');
        for (k, r) in self.radii.iter().enumerate() {
            let _ = write!(out, "{r:e}");
            for row in &self.xi {
                let _ = write!(out, ",{:e}", row[k]);
            }
            out.push('\n');
        }
        out
    }
}

/// Tail energies by masked quadrature (edges by midpoint radius, nodes by
/// radius). `window` selects the radii used to fit `ϑ̂`; all radii by default.
pub fn tail_norms<T: Real>(
    state: &SystemState<T>,
    radii: &[T],
    window: Option<(T, T)>,
) -> Result<TailSeries<T>, PdeError> {
    let grid = &state.grid;
    let half = grid.half_width();
    if let Some(r) = radii.iter().find(|r| !(**r >= T::zero() && **r <= half)) {
        return Err(PdeError::RadiiOutOfBox {
            radius: r.as_f64(),
            half_width: half.as_f64(),
        });
    }
    let vol = grid.cell_volume();
    let node_r: Vec<T> = (0..grid.len()).map(|k| grid.radius(k)).collect();
    let xi: Vec<Vec<T>> = state
        .fields
        .iter()
        .map(|u| {
            radii
                .iter()
                .map(|&r| {
                    let mass: T = u.iter().zip(&node_r).filter(|(_, rr)| **rr >= r).map(|(v, _)| *v * *v).sum();
                    grid.gradient_energy_masked(u, |m| m >= r) + mass * vol
                })
                .collect()
        })
        .collect();
    let (lo, hi) = window.unwrap_or((T::neg_infinity(), T::infinity()));
    let (xs, ys): (Vec<T>, Vec<T>) = radii
        .iter()
        .enumerate()
        .filter(|(_, r)| **r >= lo && **r <= hi)
        .filter_map(|(k, r)| {
            let total: T = xi.iter().map(|row| row[k]).sum();
            (total > T::zero()).then(|| (*r, total.ln()))
        })
        .unzip();
    let fit = fit_line(&xs, &ys);
    Ok(TailSeries {
        radii: radii.to_vec(),
        xi,
        theta: fit.as_ref().map(|f| -f.slope),
        fit,
    })
}

/// `(r, max_{|x|≈r} |u|)`: nodes binned into shells of width `h`, each shell
/// represented by its maximizing node.
pub fn annulus_envelope<T: Real>(grid: &crate::grid::Grid<T>, u: &[T]) -> Vec<(T, T)> {
    let h = grid.spacing();
    let mut shells: Vec<Option<(T, T)>> = Vec::new();
    for (k, v) in u.iter().enumerate() {
        if grid.is_boundary(k) {
            continue;
        }
        let r = grid.radius(k);
        let bin = (r / h + T::lit(0.5)).floor().to_usize().unwrap_or(0);
        if bin >= shells.len() {
            shells.resize(bin + 1, None);
        }
        let a = v.abs();
        match shells[bin] {
            Some((_, m)) if m >= a => {}
            _ => shells[bin] = Some((r, a)),
        }
    }
    shells.into_iter().flatten().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DecayOptions<T> {
    pub noise_floor: T,
    /// PASS requires `μ̂_i ≥ (1 − relative_tolerance) √σ_i`.
    pub relative_tolerance: T,
}

impl<T: Real> Default for DecayOptions<T> {
    fn default() -> Self {
        Self {
            noise_floor: T::lit(1e-9),
            relative_tolerance: T::lit(0.05),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ComponentDecay<T> {
    pub component: usize,
    pub rate: T,
    pub prefactor: T,
    pub window: (T, T),
    pub rms_residual: T,
    pub annuli: usize,
    /// `√σ_i`.
    pub comparison: T,
    pub threshold: T,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DecayFit<T> {
    pub components: Vec<ComponentDecay<T>>,
}

impl<T: Real> DecayFit<T> {
    pub fn all_pass(&self) -> bool {
        self.components.iter().all(|c| c.pass)
    }

    pub fn min_rate(&self) -> Option<T> {
        self.components.iter().map(|c| c.rate).reduce(T::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,rate,prefactor,r_a,r_b,rms_residual,annuli,sqrt_sigma,threshold,status\n");
        for c in &self.components {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e},{},{:e},{:e},{}",
                c.component + 1,
                c.rate,
                c.prefactor,
                c.window.0,
                c.window.1,
                c.rms_residual,
                c.annuli,
                c.comparison,
                c.threshold,
                if c.pass { "PASS" } else { "FAIL" }
            );
        }
        out
    }
}

/// Regresses `ln max_{|x|=r}|u_i|` on `r` over `window` for every component.
pub fn fit_decay<T: Real>(
    state: &SystemState<T>,
    spec: &SystemSpec<T>,
    window: (T, T),
    options: &DecayOptions<T>,
) -> Result<DecayFit<T>, PdeError> {
    if state.ell() != spec.ell() {
        return Err(PdeError::GridMismatch(format!(
            "{} fields for {} components",
            state.ell(),
            spec.ell()
        )));
    }
    let (lo, hi) = window;
    if hi > state.grid.half_width() {
        return Err(PdeError::RadiiOutOfBox {
            radius: hi.as_f64(),
            half_width: state.grid.half_width().as_f64(),
        });
    }
    let mut components = Vec::new();
    for (i, u) in state.fields.iter().enumerate() {
        let shells: Vec<(T, T)> = annulus_envelope(&state.grid, u)
            .into_iter()
            .filter(|(r, _)| *r >= lo && *r <= hi)
            .collect();
        if shells.len() < 4 {
            return Err(PdeError::DegenerateFit { annuli: shells.len() });
        }
        if let Some((r, _)) = shells.iter().find(|(_, m)| !(*m > options.noise_floor)) {
            return Err(PdeError::WindowBelowNoise {
                component: i,
                radius: r.as_f64(),
            });
        }
        let (xs, ys): (Vec<T>, Vec<T>) = shells.iter().copied().unzip();
        let (rate, prefactor, line) =
            fit_exponential_rate(&xs, &ys).ok_or(PdeError::DegenerateFit { annuli: shells.len() })?;
        let comparison = spec.potentials[i].floor().sqrt();
        let threshold = comparison * (T::one() - options.relative_tolerance);
        components.push(ComponentDecay {
            component: i,
            rate,
            prefactor,
            window,
            rms_residual: line.rms_residual,
            annuli: shells.len(),
            comparison,
            threshold,
            pass: rate >= threshold,
        });
    }
    Ok(DecayFit { components })
}

/// Rate of `ω` on `[a, b]` from `samples` equally spaced points.
pub fn fit_profile_decay<T: Real>(
    profile: &RadialProfile<T>,
    window: (T, T),
    samples: usize,
) -> Option<(T, T, LineFit<T>)> {
    if samples < 2 {
        return None;
    }
    let (a, b) = window;
    let xs: Vec<T> = (0..samples)
        .map(|k| a + (b - a) * T::from_count(k) / T::from_count(samples - 1))
        .collect();
    let ys: Vec<T> = xs.iter().map(|r| profile.eval(*r)).collect();
    fit_exponential_rate(&xs, &ys)
}

/// Exponential rate fitted separately inside each window.
pub fn sliding_window_rates<T: Real>(xs: &[T], ys: &[T], windows: &[(T, T)]) -> Vec<Option<T>> {
    windows
        .iter()
        .map(|&(a, b)| {
            let (wx, wy): (Vec<T>, Vec<T>) = xs
                .iter()
                .zip(ys)
                .filter(|(x, y)| **x >= a && **x <= b && **y > T::zero())
                .map(|(x, y)| (*x, *y))
                .unzip();
            fit_exponential_rate(&wx, &wy).map(|(rate, _, _)| rate)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::CouplingMatrix;
    use crate::grid::Grid;
    use crate::groundstate::{solve_radial_ground_state, sublinear_counterexample, RadialGrid};

    fn soliton_state(n: usize, half: f64) -> SystemState<f64> {
        let grid = Grid::<f64>::new(1, n, half).unwrap();
        let u = grid.sample(|x| 2f64.sqrt() / x[0].cosh());
        SystemState::new(grid, vec![u]).unwrap()
    }

    fn unit_spec() -> SystemSpec<f64> {
        SystemSpec::autonomous(1, 2.0, CouplingMatrix::new(vec![vec![1.0]]).unwrap()).unwrap()
    }

    #[test]
    fn tail_at_zero_is_the_full_norm() {
        let s = soliton_state(1025, 30.0);
        let radii: Vec<f64> = (0..=20).map(|k| k as f64).collect();
        let t = tail_norms(&s, &radii, Some((5.0, 15.0))).unwrap();
        let full = s.grid.gradient_energy(&s.fields[0])
            + s.fields[0].iter().map(|v| v * v).sum::<f64>() * s.grid.cell_volume();
        assert_eq!(t.xi[0][0], full);
        assert!(t.is_monotone());
        let theta = t.theta.unwrap();
        assert!((theta - 2.0).abs() < 0.1, "{theta}");
        assert!(t.to_csv().starts_with("r,xi_1\n"));
        assert!(matches!(tail_norms(&s, &[31.0], None), Err(PdeError::RadiiOutOfBox { .. })));
    }

    #[test]
    fn soliton_rate_is_one() {
        let s = soliton_state(1025, 30.0);
        let fit = fit_decay(&s, &unit_spec(), (5.0, 15.0), &DecayOptions::default()).unwrap();
        let c = &fit.components[0];
        assert!((c.rate - 1.0).abs() < 0.01, "{}", c.rate);
        assert!(c.pass);
        assert!((c.prefactor - 2.0 * 2f64.sqrt()).abs() < 0.05);
    }

    #[test]
    fn fit_errors() {
        let s = soliton_state(129, 30.0);
        assert!(matches!(
            fit_decay(&s, &unit_spec(), (5.0, 5.5), &DecayOptions::default()),
            Err(PdeError::DegenerateFit { .. })
        ));
        assert!(matches!(
            fit_decay(&s, &unit_spec(), (20.0, 29.0), &DecayOptions::default()),
            Err(PdeError::WindowBelowNoise { .. })
        ));
    }

    #[test]
    fn profile_rate() {
        let prof = solve_radial_ground_state::<f64>(1, 2.0, RadialGrid::default()).unwrap();
        let (rate, _, _) = fit_profile_decay(&prof, (5.0, 15.0), 41).unwrap();
        assert!((rate - 1.0).abs() < 1e-3);
    }

    #[test]
    fn power_law_has_vanishing_local_rate() {
        let xs: Vec<f64> = (0..4000).map(|k| 1.5 * 1.002f64.powi(k)).collect();
        let pts = sublinear_counterexample(&xs).unwrap();
        let ys: Vec<f64> = pts.iter().map(|p| p.w).collect();
        let rates = sliding_window_rates(&xs, &ys, &[(2.0, 4.0), (10.0, 20.0), (50.0, 100.0)]);
        let r: Vec<f64> = rates.into_iter().map(Option::unwrap).collect();
        assert!(r[0] > r[1] && r[1] > r[2] && r[2] < 0.05, "{r:?}");
        assert!(pts.iter().all(|p| p.residual.abs() < 1e-10));
    }
}
