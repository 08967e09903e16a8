use super::{PdeError, SystemSpec, SystemState};
use crate::grid::Grid;
use crate::linalg::SquareMatrix;
use crate::scalar::Real;

/// A system sampled on a grid: potentials at the nodes and the interior mask.
#[derive(Debug, Clone)]
pub struct Discretization<T> {
    grid: Grid<T>,
    exponent: T,
    beta: SquareMatrix<T>,
    potentials: Vec<Vec<T>>,
    interior: Vec<bool>,
    lambda: T,
}

/// `a_i = ∫|∇u_i|² + V_i u_i²` and `c_ij = ∫|u_i|^p |u_j|^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTerms<T> {
    pub quadratic: Vec<T>,
    pub interaction: SquareMatrix<T>,
}

impl<T: Real> Discretization<T> {
    pub fn new(spec: &SystemSpec<T>, grid: &Grid<T>) -> Result<Self, PdeError> {
        if grid.dim() != spec.dimension {
            return Err(PdeError::GridMismatch(format!(
                "grid dimension {} for a system in dimension {}",
                grid.dim(),
                spec.dimension
            )));
        }
        let potentials = spec.potentials.iter().map(|v| grid.sample(|x| v.value(x))).collect();
        let interior = (0..grid.len()).map(|k| !grid.is_boundary(k)).collect();
        Ok(Self {
            grid: grid.clone(),
            exponent: spec.exponent,
            beta: spec.beta.entries().clone(),
            potentials,
            interior,
            lambda: spec.lambda(),
        })
    }

    pub fn for_state(spec: &SystemSpec<T>, state: &SystemState<T>) -> Result<Self, PdeError> {
        let d = Self::new(spec, &state.grid)?;
        d.check(&state.fields)?;
        Ok(d)
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn exponent(&self) -> T {
        self.exponent
    }

    pub fn beta(&self) -> &SquareMatrix<T> {
        &self.beta
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        self.interior[idx]
    }

    /// `0.9 / (4N/h² + Λ)` for `fraction = 0.9`.
    pub fn stable_step(&self, fraction: T) -> T {
        let h = self.grid.spacing();
        fraction / (T::lit(4.0) * T::from_count(self.grid.dim()) / (h * h) + self.lambda)
    }

    pub fn check(&self, fields: &[Vec<T>]) -> Result<(), PdeError> {
        if fields.len() != self.beta.dim() {
            return Err(PdeError::GridMismatch(format!(
                "{} fields for {} components",
                fields.len(),
                self.beta.dim()
            )));
        }
        if let Some((i, f)) = fields.iter().enumerate().find(|(_, f)| f.len() != self.grid.len()) {
            return Err(PdeError::GridMismatch(format!(
                "field {} has {} values, grid has {}",
                i + 1,
                f.len(),
                self.grid.len()
            )));
        }
        Ok(())
    }

    /// `|v|^{p−1}` with exact shortcuts for the common exponents.
    #[inline]
    fn pow_pm1(&self, v: T) -> T {
        let a = v.abs();
        let e = self.exponent;
        if e == T::lit(2.0) {
            a
        } else if e == T::lit(1.5) {
            a.sqrt()
        } else {
            a.powf(e - T::one())
        }
    }

    fn abs_pow(&self, u: &[T]) -> Vec<T> {
        u.iter().map(|v| self.pow_pm1(*v) * v.abs()).collect()
    }

    pub fn terms(&self, fields: &[Vec<T>]) -> DiscreteTerms<T> {
        let vol = self.grid.cell_volume();
        let quadratic = fields
            .iter()
            .zip(&self.potentials)
            .map(|(u, v)| {
                let pot: T = u.iter().zip(v).map(|(a, w)| *w * *a * *a).sum();
                self.grid.gradient_energy(u) + pot * vol
            })
            .collect();
        let pows: Vec<Vec<T>> = fields.iter().map(|u| self.abs_pow(u)).collect();
        let ell = fields.len();
        let mut interaction = SquareMatrix::zeros(ell);
        for i in 0..ell {
            for j in i..ell {
                let c = pows[i].iter().zip(&pows[j]).map(|(a, b)| *a * *b).sum::<T>() * vol;
                interaction.set(i, j, c);
                interaction.set(j, i, c);
            }
        }
        DiscreteTerms {
            quadratic,
            interaction,
        }
    }

    /// `½ Σ a_i − 1/(2p) Σ β_ij c_ij`.
    pub fn energy_of(&self, terms: &DiscreteTerms<T>) -> T {
        let ell = terms.quadratic.len();
        let mut inter = T::zero();
        for i in 0..ell {
            for j in 0..ell {
                inter += self.beta.get(i, j) * terms.interaction.get(i, j);
            }
        }
        terms.quadratic.iter().copied().sum::<T>() / T::lit(2.0) - inter / (T::lit(2.0) * self.exponent)
    }

    pub fn energy(&self, fields: &[Vec<T>]) -> T {
        self.energy_of(&self.terms(fields))
    }

    /// `(−Δ_h + V_i) u_i − Σ_j β_ij |u_j|^p |u_i|^{p−2} u_i`, zero on the boundary.
    pub fn gradient(&self, fields: &[Vec<T>]) -> Vec<Vec<T>> {
        let odd: Vec<Vec<T>> = fields
            .iter()
            .map(|u| u.iter().map(|v| self.pow_pm1(*v)).collect())
            .collect();
        let pows: Vec<Vec<T>> = fields
            .iter()
            .zip(&odd)
            .map(|(u, o)| u.iter().zip(o).map(|(v, w)| v.abs() * *w).collect())
            .collect();
        let ell = fields.len();
        let mut out = Vec::with_capacity(ell);
        for i in 0..ell {
            let u = &fields[i];
            let mut g = vec![T::zero(); u.len()];
            self.grid.laplacian(u, &mut g);
            let row: Vec<T> = (0..ell).map(|j| self.beta.get(i, j)).collect();
            for k in 0..u.len() {
                if !self.interior[k] {
                    g[k] = T::zero();
                    continue;
                }
                let mut coupling = T::zero();
                for j in 0..ell {
                    coupling += row[j] * pows[j][k];
                }
                let ui = u[k];
                // |u|^{p−2}u, extended by 0 at u = 0
                let odd_k = if ui == T::zero() { T::zero() } else { ui.signum() * odd[i][k] };
                g[k] = -g[k] + self.potentials[i][k] * ui - coupling * odd_k;
            }
            out.push(g);
        }
        out
    }

    /// Per-node weights `a_i = Σ_{j≠i, β_ij<0} |β_ij| |u_j|^p` of the repulsive
    /// cross terms, or `None` when `p ≥ 2` or no pair repels.
    pub fn repulsion(&self, fields: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
        let ell = fields.len();
        let repels = (0..ell).any(|i| (0..ell).any(|j| i != j && self.beta.get(i, j) < T::zero()));
        if self.exponent >= T::lit(2.0) || !repels {
            return None;
        }
        let pows: Vec<Vec<T>> = fields.iter().map(|u| self.abs_pow(u)).collect();
        let weights = (0..ell)
            .map(|i| {
                let mut a = vec![T::zero(); fields[i].len()];
                for j in (0..ell).filter(|j| *j != i) {
                    let b = self.beta.get(i, j);
                    if b < T::zero() {
                        for (w, q) in a.iter_mut().zip(&pows[j]) {
                            *w -= b * *q;
                        }
                    }
                }
                a
            })
            .collect();
        Some(weights)
    }

    /// `u − τ∇J(u)`, with the repulsive cross terms taken implicitly when
    /// `repulsion` is given: `y + τ a |y|^{p−2} y = u − τ(∇J(u) − a |u|^{p−2} u)`.
    /// For `p < 2` their slope is unbounded at `u_i = 0`, and the explicit step
    /// drives a component through zero where another one is large. The implicit
    /// step never changes the sign of a node.
    pub fn descent_step(
        &self,
        fields: &[Vec<T>],
        grad: &[Vec<T>],
        repulsion: Option<&[Vec<T>]>,
        tau: T,
    ) -> Vec<Vec<T>> {
        let Some(weights) = repulsion else {
            return fields
                .iter()
                .zip(grad)
                .map(|(u, g)| u.iter().zip(g).map(|(a, b)| *a - tau * *b).collect())
                .collect();
        };
        fields
            .iter()
            .zip(grad)
            .zip(weights)
            .map(|((u, g), a)| {
                u.iter()
                    .zip(g)
                    .zip(a)
                    .map(|((ui, gi), ai)| {
                        let c = tau * *ai;
                        if c == T::zero() || *ui == T::zero() {
                            return *ui - tau * *gi;
                        }
                        let x = *ui - tau * *gi + c * ui.signum() * self.pow_pm1(*ui);
                        x.signum() * self.shrink(x.abs(), c)
                    })
                    .collect()
            })
            .collect()
    }

    /// The root `s ≥ 0` of `s + c s^{p−1} = x` for `x, c ≥ 0` and `1 < p < 2`.
    fn shrink(&self, x: T, c: T) -> T {
        let p = self.exponent;
        if x == T::zero() {
            return T::zero();
        }
        if p == T::lit(1.5) {
            // w = √s solves w² + c w − x = 0
            let w = T::lit(2.0) * x / (c + (c * c + T::lit(4.0) * x).sqrt());
            return w * w;
        }
        // convex in w = s^{p−1}: Newton from the right decreases monotonically
        let q = T::one() / (p - T::one());
        let mut w = x.powf(p - T::one()).min(x / c);
        for _ in 0..100 {
            let wq = w.powf(q);
            let f = wq + c * w - x;
            let next = w - f / (q * wq / w + c);
            if !(next < w) || next <= T::zero() {
                break;
            }
            let done = (w - next) <= T::epsilon() * w;
            w = next;
            if done {
                break;
            }
        }
        w.powf(q)
    }

    /// `‖g_i‖ / ‖u_i‖` in discrete L²; zero for a zero component.
    pub fn residuals(&self, fields: &[Vec<T>], grad: &[Vec<T>]) -> Vec<T> {
        fields
            .iter()
            .zip(grad)
            .map(|(u, g)| {
                let nu: T = u.iter().map(|v| *v * *v).sum();
                if nu == T::zero() {
                    return T::zero();
                }
                let ng: T = g.iter().map(|v| *v * *v).sum();
                (ng / nu).sqrt()
            })
            .collect()
    }
}

pub fn energy<T: Real>(state: &SystemState<T>, spec: &SystemSpec<T>) -> Result<T, PdeError> {
    Ok(Discretization::for_state(spec, state)?.energy(&state.fields))
}

pub fn gradient<T: Real>(state: &SystemState<T>, spec: &SystemSpec<T>) -> Result<Vec<Vec<T>>, PdeError> {
    Ok(Discretization::for_state(spec, state)?.gradient(&state.fields))
}

pub fn residual<T: Real>(state: &SystemState<T>, spec: &SystemSpec<T>) -> Result<Vec<T>, PdeError> {
    let d = Discretization::for_state(spec, state)?;
    let g = d.gradient(&state.fields);
    Ok(d.residuals(&state.fields, &g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::CouplingMatrix;
    use crate::pde::Potential;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn soliton(x: f64) -> f64 {
        2f64.sqrt() / x.cosh()
    }

    fn scalar_spec() -> SystemSpec<f64> {
        SystemSpec::autonomous(1, 2.0, CouplingMatrix::new(vec![vec![1.0]]).unwrap()).unwrap()
    }

    #[test]
    fn zero_state() {
        let spec = scalar_spec();
        let s = SystemState::zeros(Grid::new(1, 33, 5.0).unwrap(), 1);
        assert_eq!(energy(&s, &spec).unwrap(), 0.0);
        assert_eq!(residual(&s, &spec).unwrap(), vec![0.0]);
    }

    #[test]
    fn soliton_energy_converges() {
        let spec = scalar_spec();
        let grid = Grid::new(1, 4096, 30.0).unwrap();
        let u = grid.sample(|x| soliton(x[0]));
        let s = SystemState::new(grid, vec![u]).unwrap();
        let j = energy(&s, &spec).unwrap();
        assert!((j - 4.0 / 3.0).abs() < 1e-3, "{j}");
    }

    #[test]
    fn soliton_gradient_is_second_order() {
        let spec = scalar_spec();
        let sup = |n: usize| {
            let grid = Grid::new(1, n, 30.0).unwrap();
            let u = grid.sample(|x| soliton(x[0]));
            let s = SystemState::new(grid, vec![u]).unwrap();
            let g = gradient(&s, &spec).unwrap();
            let r = residual(&s, &spec).unwrap()[0];
            (g[0].iter().fold(0.0f64, |m, v| m.max(v.abs())), r)
        };
        let (g1, r1) = sup(513);
        let (g2, r2) = sup(1025);
        let order = (g1 / g2).log2();
        assert!(order > 1.9, "{order}");
        assert!((r1 / r2) > 3.5 && (r1 / r2) < 4.5, "{}", r1 / r2);
    }

    #[test]
    fn decoupled_components_add() {
        let grid = Grid::new(1, 201, 10.0).unwrap();
        let a = grid.sample(|x| soliton(x[0] - 1.0));
        let b = grid.sample(|x| 0.5 * soliton(x[0] + 2.0));
        let single = scalar_spec();
        let pair = SystemSpec::autonomous(1, 2.0, CouplingMatrix::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap())
            .unwrap();
        let ja = energy(&SystemState::new(grid.clone(), vec![a.clone()]).unwrap(), &single).unwrap();
        let jb = energy(&SystemState::new(grid.clone(), vec![b.clone()]).unwrap(), &single).unwrap();
        let jab = energy(&SystemState::new(grid, vec![a, b]).unwrap(), &pair).unwrap();
        assert!((jab - ja - jb).abs() < 1e-13);
    }

    #[test]
    fn mismatch_is_reported() {
        let spec = scalar_spec();
        let s = SystemState::zeros(Grid::new(2, 5, 1.0).unwrap(), 1);
        assert!(matches!(energy(&s, &spec), Err(PdeError::GridMismatch(_))));
        let s = SystemState::zeros(Grid::new(1, 5, 1.0).unwrap(), 2);
        assert!(matches!(residual(&s, &spec), Err(PdeError::GridMismatch(_))));
    }

    #[test]
    fn random_smooth_state_is_not_a_solution() {
        let spec = scalar_spec();
        let grid = Grid::<f64>::new(1, 101, 5.0).unwrap();
        let u = grid.sample(|x| (-(x[0] * x[0])).exp() * (1.0 + 0.3 * x[0].sin()));
        let s = SystemState::new(grid, vec![u]).unwrap();
        assert!(residual(&s, &spec).unwrap()[0] > 1e-3);
    }

    /// Central difference of `J` along `v` against `h^N ⟨∇J, v⟩`.
    fn pair_spec(p: f64) -> SystemSpec<f64> {
        let beta = CouplingMatrix::new(vec![vec![1.0, -0.5], vec![-0.5, 1.0]]).unwrap();
        SystemSpec::autonomous(1, p, beta).unwrap()
    }

    #[test]
    fn shrink_solves_the_implicit_equation() {
        for p in [1.2, 1.5, 1.8] {
            let d = Discretization::new(&pair_spec(p), &Grid::new(1, 5, 1.0).unwrap()).unwrap();
            for (x, c) in [(1e-12, 3.0), (0.3, 0.01), (2.0, 5.0), (50.0, 1e-3), (1e-3, 1e3)] {
                let s = d.shrink(x, c);
                assert!(s > 0.0 && s <= x);
                let r = s + c * s.powf(p - 1.0) - x;
                assert!(r.abs() <= 1e-12 * x.max(1e-300).max(c * s.powf(p - 1.0)), "p={p} x={x} c={c} r={r}");
            }
        }
    }

    #[test]
    fn implicit_step_keeps_signs() {
        let grid = Grid::new(1, 201, 10.0).unwrap();
        let spec = pair_spec(1.5);
        let d = Discretization::new(&spec, &grid).unwrap();
        let u = vec![grid.sample(|x| 1e-4 * soliton(x[0] + 3.0)), grid.sample(|x| 3.0 * soliton(x[0] - 3.0))];
        let g = d.gradient(&u);
        let tau = d.stable_step(0.9);
        let explicit = d.descent_step(&u, &g, None, tau);
        assert!(explicit[0].iter().any(|v| *v < 0.0));
        let rep = d.repulsion(&u).unwrap();
        let implicit = d.descent_step(&u, &g, Some(&rep), tau);
        assert!(implicit[0].iter().all(|v| *v >= 0.0));
        let step: f64 = implicit[1].iter().zip(&u[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(step < 0.1);
        assert!(d.repulsion(&u[..1]).is_none());
        let attract = SystemSpec::autonomous(1, 1.5, CouplingMatrix::new(vec![vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap()).unwrap();
        assert!(Discretization::new(&attract, &grid).unwrap().repulsion(&u).is_none());
    }

    pub(crate) fn directional_mismatch(dim: usize, seed: u64, p: f64) -> f64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = if dim == 1 { 41 } else { 17 };
        let grid = Grid::new(dim, n, 3.0).unwrap();
        let beta = CouplingMatrix::new(vec![vec![1.3, -0.4], vec![-0.4, 0.8]]).unwrap();
        let spec = SystemSpec::new(
            dim,
            p,
            beta,
            vec![
                Potential::Constant(1.0),
                Potential::Well {
                    inner: 0.2,
                    outer: 1.1,
                    rho: 2.0,
                    width: 1.0,
                },
            ],
        )
        .unwrap();
        let mut field = || -> Vec<f64> {
            let c: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            grid.sample(|x| {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                (c[0] + c[1] * x[0] + c[2] * x[dim - 1] * x[0]) * (-0.5 * r2).exp()
            })
        };
        let u = vec![field(), field()];
        let v = vec![field(), field()];
        let d = Discretization::new(&spec, &grid).unwrap();
        let g = d.gradient(&u);
        let vol = grid.cell_volume();
        let analytic: f64 = g.iter().zip(&v).flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y)).sum::<f64>() * vol;
        let eps = 1e-6;
        let shift = |s: f64| -> Vec<Vec<f64>> {
            u.iter().zip(&v).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + s * y).collect()).collect()
        };
        let numeric = (d.energy(&shift(eps)) - d.energy(&shift(-eps))) / (2.0 * eps);
        (numeric - analytic).abs() / analytic.abs().max(1e-300)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn gradient_matches_directional_derivative(seed in 0u64..1000, dim in 1usize..3, p in prop::sample::select(vec![1.5, 2.0])) {
            let e = directional_mismatch(dim, seed, p);
            prop_assert!(e < 1e-5, "relative mismatch {}", e);
        }
    }
}
