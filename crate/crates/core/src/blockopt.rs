//! Finite-dimensional layer: block constants `μ_h`, synchronized coefficient
//! vectors, the Nehari scaling of a block tuple, and the energy bound arithmetic.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr_free::abs_gaussian;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coupling::{BlockDecomposition, BlockSign, CouplingMatrix, SignPartition};
use crate::linalg::SquareMatrix;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlockOptError {
    #[error("exponent must exceed 1")]
    InvalidExponent,
    #[error("block entry ({}, {}) violates the intra-block sign pattern", .0 + 1, .1 + 1)]
    InvalidBlock(usize, usize),
    #[error("the block form is nonpositive on the whole sphere")]
    NonPositiveForm,
    #[error("interaction sum of block {} is not positive", .0 + 1)]
    ConditionNFails(usize),
    #[error("block norm {} must be positive", .0 + 1)]
    NonPositiveNorm(usize),
    #[error("Nehari Newton iteration did not converge (residual {residual:e})")]
    NewtonDiverged { residual: f64 },
    #[error("state is not on the Nehari set (relative mismatch {mismatch:e})")]
    NotOnNehari { mismatch: f64 },
    #[error("no block is labelled")]
    EmptyQ,
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

/// Minimal normal-distribution sampler; keeps the dependency list to `rand`.
mod rand_distr_free {
    use rand::Rng;

    pub fn abs_gaussian<R: Rng>(rng: &mut R) -> f64 {
        // Box-Muller
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen();
        ((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuOptions {
    /// Total number of starts, the uniform vector included.
    pub restarts: usize,
    pub seed: u64,
    pub max_iterations: usize,
}

impl Default for MuOptions {
    fn default() -> Self {
        Self {
            restarts: 32,
            seed: 0x5eed,
            max_iterations: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MuResult<T> {
    pub mu: T,
    /// Nonnegative unit vector maximizing `Σ β_ij s_i^p s_j^p`.
    pub argmin: Vec<T>,
    pub block: usize,
    /// Spread of `μ` over the restarts.
    pub multistart_spread: T,
}

/// `F(s) = Σ β_ij s_i^p s_j^p` for `s ≥ 0`.
pub fn block_form<T: Real>(beta: &SquareMatrix<T>, s: &[T], p: T) -> T {
    let sp: Vec<T> = s.iter().map(|x| x.powf(p)).collect();
    let n = s.len();
    let mut f = T::zero();
    for i in 0..n {
        for j in 0..n {
            f += beta.get(i, j) * sp[i] * sp[j];
        }
    }
    f
}

fn normalize<T: Real>(s: &mut [T]) -> bool {
    let norm = s.iter().map(|x| *x * *x).sum::<T>().sqrt();
    if !(norm > T::zero()) {
        return false;
    }
    s.iter_mut().for_each(|x| *x /= norm);
    true
}

fn ascend<T: Real>(beta: &SquareMatrix<T>, p: T, mut s: Vec<T>, max_iterations: usize) -> (Vec<T>, T) {
    let n = s.len();
    let two_p = T::lit(2.0) * p;
    let mut f = block_form(beta, &s, p);
    let mut step = T::lit(0.1);
    let mut cand = vec![T::zero(); n];
    let mut grad = vec![T::zero(); n];
    for _ in 0..max_iterations {
        let sp: Vec<T> = s.iter().map(|x| x.powf(p)).collect();
        for i in 0..n {
            let row: T = (0..n).map(|j| beta.get(i, j) * sp[j]).sum();
            grad[i] = if s[i] > T::zero() {
                two_p * s[i].powf(p - T::one()) * row
            } else {
                T::zero()
            };
        }
        for i in 0..n {
            cand[i] = (s[i] + step * grad[i]).max(T::zero());
        }
        if !normalize(&mut cand) {
            step = step * T::lit(0.5);
            continue;
        }
        let fc = block_form(beta, &cand, p);
        // gains at round-off level would let flat forms drift
        if fc > f + T::lit(1e-14) * f.abs() {
            s.copy_from_slice(&cand);
            f = fc;
            step = step * T::lit(1.5);
        } else {
            step = step * T::lit(0.5);
            if step < T::epsilon() * T::epsilon() {
                break;
            }
        }
    }
    (s, f)
}

fn check_block<T: Real>(beta: &SquareMatrix<T>) -> Result<(), BlockOptError> {
    for i in 0..beta.dim() {
        for j in 0..beta.dim() {
            let b = beta.get(i, j);
            if !b.is_finite() || (i == j && b <= T::zero()) || b < T::zero() {
                return Err(BlockOptError::InvalidBlock(i, j));
            }
        }
    }
    Ok(())
}

/// `μ = (max_{|s|=1, s≥0} Σ β_ij s_i^p s_j^p)^{−1/(p−1)}` by multistart projected
/// gradient ascent. Starts are the uniform vector and `|N(0,1)|` samples.
pub fn compute_mu<T: Real>(
    block_beta: &SquareMatrix<T>,
    p: T,
    opts: &MuOptions,
) -> Result<MuResult<T>, BlockOptError> {
    if !(p > T::one()) {
        return Err(BlockOptError::InvalidExponent);
    }
    check_block(block_beta)?;
    let n = block_beta.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(Vec<T>, T)> = None;
    let mut f_min = T::infinity();
    let mut f_max = T::neg_infinity();
    for r in 0..opts.restarts.max(1) {
        let mut start: Vec<T> = if r == 0 {
            vec![T::one(); n]
        } else {
            (0..n).map(|_| T::lit(abs_gaussian(&mut rng))).collect()
        };
        if !normalize(&mut start) {
            continue;
        }
        let (s, f) = ascend(block_beta, p, start, opts.max_iterations);
        f_min = f_min.min(f);
        f_max = f_max.max(f);
        // near ties keep the earlier start, so flat forms report the uniform vector
        let replace = match &best {
            None => true,
            Some((_, bf)) => f > *bf + T::lit(1e-12) * bf.abs(),
        };
        if replace {
            best = Some((s, f));
        }
    }
    let (argmin, f) = best.ok_or(BlockOptError::NonPositiveForm)?;
    if !(f > T::zero()) {
        return Err(BlockOptError::NonPositiveForm);
    }
    let expo = -T::one() / (p - T::one());
    let spread = if f_min > T::zero() {
        f_min.powf(expo) - f_max.powf(expo)
    } else {
        T::infinity()
    };
    Ok(MuResult {
        mu: f.powf(expo),
        argmin,
        block: 0,
        multistart_spread: spread,
    })
}

/// `μ_h` for every block of a validated decomposition.
pub fn compute_block_mus<T: Real>(
    decomp: &BlockDecomposition,
    matrix: &CouplingMatrix<T>,
    p: T,
    opts: &MuOptions,
) -> Result<Vec<MuResult<T>>, BlockOptError> {
    (0..decomp.q())
        .map(|h| {
            let mut r = compute_mu(&matrix.submatrix(&decomp.block_indices(h)), p, opts)?;
            r.block = h;
            Ok(r)
        })
        .collect()
}

/// `t = √μ · s̄`, so that `Σ t_i² = Σ β_ij t_i^p t_j^p = μ`.
pub fn synchronized_coefficients<T: Real>(mu: &MuResult<T>) -> Vec<T> {
    let scale = mu.mu.sqrt();
    mu.argmin.iter().map(|s| *s * scale).collect()
}

/// Block scaling `s` placing `(s_1 ū_1, …, s_q ū_q)` on the Nehari set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NehariScaling<T> {
    pub exponent: T,
    pub s: Vec<T>,
    /// `A_h = ‖ū_h‖²`.
    pub block_norms: Vec<T>,
    /// `B_hk = Σ_{I_h×I_k} β_ij ∫|u_i|^p |u_j|^p`.
    pub interactions: SquareMatrix<T>,
    pub iterations: usize,
    /// Largest relative residual `|1 − s_h^{p−2} Σ_k B_hk s_k^p / A_h|`.
    pub residual: T,
}

fn nehari_residual<T: Real>(a: &[T], b: &SquareMatrix<T>, p: T, s: &[T]) -> Vec<T> {
    let q = a.len();
    let sp: Vec<T> = s.iter().map(|x| x.powf(p)).collect();
    (0..q)
        .map(|h| {
            let row: T = (0..q).map(|k| b.get(h, k) * sp[k]).sum();
            T::one() - s[h].powf(p - T::lit(2.0)) * row / a[h]
        })
        .collect()
}

/// Damped Newton from `s = (1, …, 1)`.
pub fn nehari_project<T: Real>(
    block_norms: &[T],
    interactions: &SquareMatrix<T>,
    p: T,
) -> Result<NehariScaling<T>, BlockOptError> {
    nehari_project_from(block_norms, interactions, p, &vec![T::one(); block_norms.len()])
}

fn scaled_energy<T: Real>(a: &[T], b: &SquareMatrix<T>, p: T, s: &[T]) -> T {
    let q = a.len();
    let sp: Vec<T> = s.iter().map(|x| x.powf(p)).collect();
    let mut quad = T::zero();
    let mut inter = T::zero();
    for h in 0..q {
        quad += s[h] * s[h] * a[h];
        for k in 0..q {
            inter += sp[h] * sp[k] * b.get(h, k);
        }
    }
    quad / T::lit(2.0) - inter / (T::lit(2.0) * p)
}

fn negative_definite<T: Real>(m: &SquareMatrix<T>) -> bool {
    // Cholesky of −m
    let n = m.dim();
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut v = -m.get(i, j);
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(v > T::zero()) {
                    return false;
                }
                l[i * n + i] = v.sqrt();
            } else {
                l[i * n + j] = v / l[j * n + j];
            }
        }
    }
    true
}

/// Damped Newton from a given positive start, carried out in `x = ln s` so
/// iterates stay in the open orthant. The stationary point is the maximizer of
/// `s ↦ J(s u)`; a trial step is accepted when it raises that energy, or lowers
/// the residual at unchanged energy, and is halved otherwise. Where the Hessian
/// is not negative definite the step is the residual vector, a preconditioned
/// ascent direction.
pub fn nehari_project_from<T: Real>(
    block_norms: &[T],
    interactions: &SquareMatrix<T>,
    p: T,
    start: &[T],
) -> Result<NehariScaling<T>, BlockOptError> {
    let q = block_norms.len();
    if interactions.dim() != q || start.len() != q {
        return Err(BlockOptError::Shape(format!(
            "{q} norms, {}x{} interactions, {} start values",
            interactions.dim(),
            interactions.dim(),
            start.len()
        )));
    }
    if !(p > T::one()) {
        return Err(BlockOptError::InvalidExponent);
    }
    if let Some(h) = block_norms.iter().position(|a| !(*a > T::zero())) {
        return Err(BlockOptError::NonPositiveNorm(h));
    }
    if let Some(h) = start.iter().position(|s| !(*s > T::zero())) {
        return Err(BlockOptError::Shape(format!("start value {} is not positive", h + 1)));
    }
    for h in 0..q {
        let row: T = (0..q).map(|k| interactions.get(h, k)).sum();
        if !(row > T::zero()) {
            return Err(BlockOptError::ConditionNFails(h));
        }
    }
    let a = block_norms;
    let b = interactions;
    let tol = T::lit(1e-13).max(T::epsilon() * T::lit(64.0));
    let mut s = start.to_vec();
    let mut r = nehari_residual(a, b, p, &s);
    let mut energy = scaled_energy(a, b, p, &s);
    let merit = |r: &[T]| r.iter().map(|x| *x * *x).sum::<T>();
    let max_abs = |r: &[T]| r.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let mut iterations = 0;
    while max_abs(&r) > tol {
        if iterations == 200 {
            return Err(BlockOptError::NewtonDiverged {
                residual: max_abs(&r).as_f64(),
            });
        }
        iterations += 1;
        let sp: Vec<T> = s.iter().map(|x| x.powf(p)).collect();
        let rows: Vec<T> = (0..q)
            .map(|h| (0..q).map(|k| b.get(h, k) * sp[k]).sum())
            .collect();
        // gradient and Hessian of the energy in log variables
        let grad: Vec<T> = (0..q).map(|h| s[h] * s[h] * a[h] - sp[h] * rows[h]).collect();
        let hess = SquareMatrix::from_fn(q, |h, k| {
            let mut v = -p * sp[h] * sp[k] * b.get(h, k);
            if h == k {
                v += T::lit(2.0) * s[h] * s[h] * a[h] - p * sp[h] * rows[h];
            }
            v
        });
        let neg: Vec<T> = grad.iter().map(|g| -*g).collect();
        let newton = if negative_definite(&hess) { hess.solve(&neg) } else { None };
        // otherwise the diagonally preconditioned gradient, which is the residual
        let direction = newton.unwrap_or_else(|| r.clone());
        // keep a single trial step from overflowing
        let longest = direction.iter().fold(T::zero(), |m, d| m.max(d.abs()));
        let mut lambda = if longest > T::lit(4.0) { T::lit(4.0) / longest } else { T::one() };
        let m0 = merit(&r);
        let mut accepted = false;
        for _ in 0..80 {
            let trial: Vec<T> = s
                .iter()
                .zip(&direction)
                .map(|(x, d)| *x * (lambda * *d).exp())
                .collect();
            let et = scaled_energy(a, b, p, &trial);
            let rt = nehari_residual(a, b, p, &trial);
            // the residual only arbitrates where the energy is flat to round-off
            let flat = (et - energy).abs() <= T::lit(1e-12) * energy.abs().max(T::one());
            if et.is_finite() && (et > energy || (flat && merit(&rt) < m0)) {
                s = trial;
                r = rt;
                energy = et;
                accepted = true;
                break;
            }
            lambda = lambda * T::lit(0.5);
        }
        if !accepted {
            // round-off floor
            if max_abs(&r) < T::lit(1e-10) {
                break;
            }
            return Err(BlockOptError::NewtonDiverged {
                residual: max_abs(&r).as_f64(),
            });
        }
    }
    Ok(NehariScaling {
        exponent: p,
        residual: max_abs(&r),
        s,
        block_norms: a.to_vec(),
        interactions: b.clone(),
        iterations,
    })
}

impl<T: Real> NehariScaling<T> {
    /// `(p−1)/(2p) Σ s_h² A_h`.
    pub fn identity_energy(&self) -> T {
        let p = self.exponent;
        (p - T::one()) / (T::lit(2.0) * p)
            * self
                .s
                .iter()
                .zip(&self.block_norms)
                .map(|(s, a)| *s * *s * *a)
                .sum::<T>()
    }

    /// `½ Σ s_h² A_h − 1/(2p) Σ s_h^p s_k^p B_hk`.
    pub fn two_term_energy(&self) -> T {
        let p = self.exponent;
        let q = self.s.len();
        let quad: T = self.s.iter().zip(&self.block_norms).map(|(s, a)| *s * *s * *a).sum();
        let sp: Vec<T> = self.s.iter().map(|x| x.powf(p)).collect();
        let mut inter = T::zero();
        for h in 0..q {
            for k in 0..q {
                inter += sp[h] * sp[k] * self.interactions.get(h, k);
            }
        }
        quad / T::lit(2.0) - inter / (T::lit(2.0) * p)
    }
}

/// Energy at a Nehari scaling, cross-checked against the two-term formula.
pub fn energy_on_nehari<T: Real>(scaling: &NehariScaling<T>) -> Result<T, BlockOptError> {
    let j = scaling.identity_energy();
    let full = scaling.two_term_energy();
    let mismatch = (j - full).abs() / j.abs().max(T::min_positive_value());
    if mismatch > T::lit(1e-10).max(T::epsilon() * T::lit(1e3)) {
        return Err(BlockOptError::NotOnNehari {
            mismatch: mismatch.as_f64(),
        });
    }
    Ok(j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    /// `‖u‖² ≤ bound`.
    Equality,
    /// `‖u‖² < bound`.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BoundCandidate<T> {
    pub k: usize,
    pub a_k: T,
    /// `a_k μ_k + Σ_{h≠k} b_h μ_h`, in units of `‖ω‖²`.
    pub value: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BoundReport<T> {
    pub mu: Vec<T>,
    pub signs: SignPartition,
    pub omega_norm_sq: T,
    pub per_candidate: Vec<BoundCandidate<T>>,
    pub b: Vec<T>,
    /// Minimizing candidate (smallest index on ties).
    pub best: usize,
    pub bound: T,
    pub kind: BoundKind,
    /// `(6|Q⁺| + 12|Q⁻| − 5) μ_* ‖ω‖²`, or `12|Q⁻| μ_* ‖ω‖²` without positive blocks.
    pub corollary: Option<T>,
}

fn a_const<T: Real>(s: BlockSign) -> T {
    match s {
        BlockSign::Plus => T::one(),
        BlockSign::Minus => T::lit(12.0),
    }
}

fn b_const<T: Real>(s: BlockSign) -> T {
    match s {
        BlockSign::Plus => T::lit(6.0),
        BlockSign::Minus => T::lit(12.0),
    }
}

fn corollary_factor<T: Real>(signs: &SignPartition) -> T {
    let plus = T::from_count(signs.count_plus());
    let minus = T::from_count(signs.count_minus());
    if signs.count_plus() > 0 {
        T::lit(6.0) * plus + T::lit(12.0) * minus - T::lit(5.0)
    } else {
        T::lit(12.0) * minus
    }
}

/// Energy bound of a fully nontrivial least-energy solution.
pub fn bound_report<T: Real>(
    mu: &[T],
    signs: &SignPartition,
    omega_norm_sq: T,
) -> Result<BoundReport<T>, BlockOptError> {
    let q = signs.q();
    if q == 0 {
        return Err(BlockOptError::EmptyQ);
    }
    if mu.len() != q {
        return Err(BlockOptError::Shape(format!("{} values of mu for {q} blocks", mu.len())));
    }
    let b: Vec<T> = signs.0.iter().map(|s| b_const(*s)).collect();
    if q == 1 {
        let (a, kind) = match signs.sign(0) {
            BlockSign::Plus => (T::one(), BoundKind::Equality),
            BlockSign::Minus => (T::lit(10.0), BoundKind::Strict),
        };
        return Ok(BoundReport {
            mu: mu.to_vec(),
            signs: signs.clone(),
            omega_norm_sq,
            per_candidate: vec![BoundCandidate {
                k: 0,
                a_k: a,
                value: a * mu[0],
            }],
            b,
            best: 0,
            bound: a * mu[0] * omega_norm_sq,
            kind,
            corollary: None,
        });
    }
    let per_candidate: Vec<BoundCandidate<T>> = (0..q)
        .map(|k| {
            let a_k = a_const(signs.sign(k));
            let rest: T = (0..q).filter(|&h| h != k).map(|h| b[h] * mu[h]).sum();
            BoundCandidate {
                k,
                a_k,
                value: a_k * mu[k] + rest,
            }
        })
        .collect();
    let mut best = 0;
    for c in &per_candidate[1..] {
        if c.value < per_candidate[best].value {
            best = c.k;
        }
    }
    let mu_star = mu.iter().copied().fold(T::neg_infinity(), T::max);
    Ok(BoundReport {
        mu: mu.to_vec(),
        signs: signs.clone(),
        omega_norm_sq,
        bound: per_candidate[best].value * omega_norm_sq,
        per_candidate,
        b,
        best,
        kind: BoundKind::Strict,
        corollary: Some(corollary_factor::<T>(signs) * mu_star * omega_norm_sq),
    })
}

/// Closed form for a fully competitive system (`q = ℓ`) in terms of
/// `β_0 = min β_ii`. It equals the generic bound when all `β_ii` coincide and
/// dominates it otherwise.
pub fn competitive_closed_form<T: Real>(
    diagonal: &[T],
    signs: &SignPartition,
    p: T,
    omega_norm_sq: T,
) -> Result<T, BlockOptError> {
    if diagonal.len() != signs.q() {
        return Err(BlockOptError::Shape("one diagonal entry per block expected".into()));
    }
    if diagonal.is_empty() {
        return Err(BlockOptError::EmptyQ);
    }
    let beta0 = diagonal.iter().copied().fold(T::infinity(), T::min);
    Ok(corollary_factor::<T>(signs) * beta0.powf(-T::one() / (p - T::one())) * omega_norm_sq)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CompactnessBlock<T> {
    pub block: usize,
    pub threshold: T,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CompactnessReport<T> {
    pub c_full: T,
    pub per_block: Vec<CompactnessBlock<T>>,
    /// `m ≥ 5` and `N ≠ 5`.
    pub hypotheses_hold: bool,
    pub note: String,
}

/// Compares `c_full < c_sub[h] + n_h μ_h (p−1)/(2p) ‖ω‖²` with `n_h = m` on
/// positive blocks and `2m` on sign-changing ones.
#[allow(clippy::too_many_arguments)]
pub fn compactness_check<T: Real>(
    c_full: T,
    c_sub: &[T],
    mu: &[T],
    m: usize,
    p: T,
    omega_norm_sq: T,
    signs: &SignPartition,
    dimension: usize,
) -> Result<CompactnessReport<T>, BlockOptError> {
    let q = signs.q();
    if c_sub.len() != q || mu.len() != q {
        return Err(BlockOptError::Shape(format!(
            "{} sub-levels and {} values of mu for {q} blocks",
            c_sub.len(),
            mu.len()
        )));
    }
    let level = (p - T::one()) / (T::lit(2.0) * p) * omega_norm_sq;
    let per_block = (0..q)
        .map(|h| {
            let orbit = match signs.sign(h) {
                BlockSign::Plus => m,
                BlockSign::Minus => 2 * m,
            };
            let threshold = c_sub[h] + T::from_count(orbit) * mu[h] * level;
            CompactnessBlock {
                block: h,
                threshold,
                pass: c_full < threshold,
            }
        })
        .collect();
    Ok(CompactnessReport {
        c_full,
        per_block,
        hypotheses_hold: m >= 5 && dimension != 5,
        note: "certifies the inequality for the supplied numerical levels only".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sq(rows: &[&[f64]]) -> SquareMatrix<f64> {
        SquareMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn grid_search_mu(beta: &SquareMatrix<f64>, p: f64) -> f64 {
        let n = beta.dim();
        let res = 1000;
        let mut best = 0.0f64;
        match n {
            1 => best = beta.get(0, 0),
            2 => {
                for a in 0..=res {
                    let t = a as f64 / res as f64 * std::f64::consts::FRAC_PI_2;
                    best = best.max(block_form(beta, &[t.cos(), t.sin()], p));
                }
            }
            _ => {
                for a in 0..=res {
                    let t = a as f64 / res as f64 * std::f64::consts::FRAC_PI_2;
                    for b in 0..=res {
                        let u = b as f64 / res as f64 * std::f64::consts::FRAC_PI_2;
                        let s = [t.sin() * u.cos(), t.sin() * u.sin(), t.cos()];
                        best = best.max(block_form(beta, &s, p));
                    }
                }
            }
        }
        best.powf(-1.0 / (p - 1.0))
    }

    #[test]
    fn single_component_blocks() {
        let r = compute_mu(&sq(&[&[2.0]]), 2.0, &MuOptions::default()).unwrap();
        assert!((r.mu - 0.5).abs() < 1e-14);
        let r = compute_mu(&sq(&[&[3.0]]), 1.5, &MuOptions::default()).unwrap();
        assert!((r.mu - 3f64.powf(-2.0)).abs() < 1e-14);
    }

    #[test]
    fn two_component_examples() {
        let ones = compute_mu(&sq(&[&[1.0, 1.0], &[1.0, 1.0]]), 2.0, &MuOptions::default()).unwrap();
        assert!((ones.mu - 1.0).abs() < 1e-10);
        let diag = compute_mu(&sq(&[&[1.0, 0.0], &[0.0, 4.0]]), 2.0, &MuOptions::default()).unwrap();
        assert!((diag.mu - 0.25).abs() < 1e-10);
        assert!(diag.argmin[0] < 1e-6 && (diag.argmin[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_blocks() {
        assert_eq!(
            compute_mu(&sq(&[&[1.0, -1.0], &[-1.0, 1.0]]), 2.0, &MuOptions::default()).unwrap_err(),
            BlockOptError::InvalidBlock(0, 1)
        );
        assert!(compute_mu(&sq(&[&[1.0]]), 1.0, &MuOptions::default()).is_err());
    }

    #[test]
    fn synchronized_vectors() {
        let r = compute_mu(&sq(&[&[1.0]]), 2.0, &MuOptions::default()).unwrap();
        assert!((synchronized_coefficients(&r)[0] - 1.0).abs() < 1e-14);
        let r = compute_mu(&sq(&[&[2.0]]), 2.0, &MuOptions::default()).unwrap();
        let t = synchronized_coefficients(&r);
        assert!((t[0] - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((2.0 * t[0].powi(4) - 0.5).abs() < 1e-14);
        let beta = sq(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let r = compute_mu(&beta, 2.0, &MuOptions::default()).unwrap();
        let t = synchronized_coefficients(&r);
        let sum_sq: f64 = t.iter().map(|x| x * x).sum();
        assert!((sum_sq - r.mu).abs() < 1e-12);
        assert!((block_form(&beta, &t, 2.0) - r.mu).abs() < 1e-12);
        assert!((t[0] - 0.5f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn nehari_examples() {
        let one = sq(&[&[2.0]]);
        let n = nehari_project(&[2.0], &one, 2.0).unwrap();
        assert!((n.s[0] - 1.0).abs() < 1e-14);
        let n = nehari_project(&[4.0], &sq(&[&[1.0]]), 2.0).unwrap();
        assert!((n.s[0] - 2.0).abs() < 1e-12);
        assert!(n.residual < 1e-10);

        let n = nehari_project(&[4.0, 3.0], &sq(&[&[1.0, 0.0], &[0.0, 2.0]]), 1.5).unwrap();
        let single = |a: f64, b: f64| (a / b).powf(1.0 / (2.0 * 1.5 - 2.0));
        assert!((n.s[0] - single(4.0, 1.0)).abs() < 1e-10);
        assert!((n.s[1] - single(3.0, 2.0)).abs() < 1e-10);
    }

    #[test]
    fn nehari_energy_examples() {
        let n = nehari_project(&[16.0 / 3.0], &sq(&[&[16.0 / 3.0]]), 2.0).unwrap();
        assert!((energy_on_nehari(&n).unwrap() - 4.0 / 3.0).abs() < 1e-14);

        let a = nehari_project(&[4.0], &sq(&[&[1.0]]), 2.0).unwrap();
        let b = nehari_project(&[3.0], &sq(&[&[2.0]]), 2.0).unwrap();
        let ab = nehari_project(&[4.0, 3.0], &sq(&[&[1.0, 0.0], &[0.0, 2.0]]), 2.0).unwrap();
        let sum = energy_on_nehari(&a).unwrap() + energy_on_nehari(&b).unwrap();
        assert!((energy_on_nehari(&ab).unwrap() - sum).abs() < 1e-12 * sum);

        let mut off = ab.clone();
        off.s[0] *= 1.01;
        assert!(matches!(energy_on_nehari(&off), Err(BlockOptError::NotOnNehari { .. })));
    }

    #[test]
    fn condition_n_guard() {
        let b = sq(&[&[1.0, -2.0], &[-2.0, 3.0]]);
        assert_eq!(
            nehari_project(&[1.0, 1.0], &b, 2.0).unwrap_err(),
            BlockOptError::ConditionNFails(0)
        );
    }

    #[test]
    fn bound_examples() {
        let minus = SignPartition(vec![BlockSign::Minus]);
        let r = bound_report(&[1.0f64], &minus, 16.0 / 3.0).unwrap();
        assert!((r.bound - 160.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.kind, BoundKind::Strict);

        let plus = SignPartition::all_plus(1);
        let r = bound_report(&[0.7f64], &plus, 2.0).unwrap();
        assert_eq!(r.kind, BoundKind::Equality);
        assert!((r.bound - 1.4).abs() < 1e-15);

        let mixed = SignPartition(vec![BlockSign::Plus, BlockSign::Minus]);
        let r = bound_report(&[1.0, 1.0], &mixed, 1.0).unwrap();
        assert_eq!(r.per_candidate[0].value, 13.0);
        assert_eq!(r.per_candidate[1].value, 18.0);
        assert_eq!(r.bound, 13.0);
        assert_eq!(r.best, 0);

        assert_eq!(bound_report::<f64>(&[], &SignPartition(vec![]), 1.0).unwrap_err(), BlockOptError::EmptyQ);
    }

    #[test]
    fn bound_ties_prefer_first_block() {
        let r = bound_report(&[1.0, 1.0, 1.0], &SignPartition::all_plus(3), 1.0).unwrap();
        assert_eq!(r.best, 0);
        assert_eq!(r.bound, 13.0);
    }

    #[test]
    fn competitive_closed_form_matches_equal_diagonals() {
        let p = 1.5;
        let signs = SignPartition(vec![BlockSign::Plus, BlockSign::Minus, BlockSign::Minus]);
        let diag = [2.0, 2.0, 2.0];
        let mu: Vec<f64> = diag.iter().map(|b: &f64| b.powf(-1.0 / (p - 1.0))).collect();
        let generic = bound_report(&mu, &signs, 3.0).unwrap().bound;
        let closed = competitive_closed_form(&diag, &signs, p, 3.0).unwrap();
        assert!((generic - closed).abs() <= 1e-12 * closed);

        let minus = SignPartition(vec![BlockSign::Minus; 2]);
        let closed = competitive_closed_form(&[1.0, 1.0], &minus, 2.0, 1.0).unwrap();
        assert_eq!(closed, 24.0);
    }

    #[test]
    fn compactness_examples() {
        let plus = SignPartition::all_plus(1);
        let r = compactness_check(5.0f64, &[3.0], &[1.0], 6, 2.0, 16.0 / 3.0, &plus, 4).unwrap();
        assert!((r.per_block[0].threshold - 11.0).abs() < 1e-12 && r.per_block[0].pass);
        assert!(r.hypotheses_hold);
        let minus = SignPartition(vec![BlockSign::Minus]);
        let r = compactness_check(5.0f64, &[3.0], &[1.0], 6, 2.0, 16.0 / 3.0, &minus, 5).unwrap();
        assert!((r.per_block[0].threshold - 19.0).abs() < 1e-12 && r.per_block[0].pass);
        assert!(!r.hypotheses_hold);
        let r = compactness_check(11.0, &[3.0], &[1.0], 6, 2.0, 16.0 / 3.0, &plus, 4).unwrap();
        assert!(!r.per_block[0].pass);
    }

    fn random_block(seed: u64, n: usize) -> SquareMatrix<f64> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = if i == j {
                    rng.gen_range(0.2..5.0)
                } else if rng.gen_bool(0.25) {
                    0.0
                } else {
                    rng.gen_range(0.0..5.0)
                };
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        m
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn mu_matches_grid_search(seed in any::<u64>(), n in 1usize..4, p2 in any::<bool>()) {
            let p = if p2 { 2.0 } else { 1.5 };
            let beta = random_block(seed, n);
            let r = compute_mu(&beta, p, &MuOptions::default()).unwrap();
            let oracle = grid_search_mu(&beta, p);
            // optimizer is never worse than the grid
            prop_assert!(r.mu <= oracle * (1.0 + 1e-12));
            prop_assert!((r.mu - oracle).abs() <= 1e-3 * oracle);
            let norm: f64 = r.argmin.iter().map(|x| x * x).sum();
            prop_assert!((norm - 1.0).abs() < 1e-12);
            let f = block_form(&beta, &r.argmin, p);
            prop_assert!((f.powf(-1.0 / (p - 1.0)) - r.mu).abs() < 1e-12 * r.mu);
        }

        #[test]
        fn mu_scale_covariance(seed in any::<u64>(), n in 1usize..4, c in 0.1f64..10.0) {
            let p = 1.5;
            let beta = random_block(seed, n);
            let a = compute_mu(&beta, p, &MuOptions::default()).unwrap();
            let b = compute_mu(&beta.scaled(c), p, &MuOptions::default()).unwrap();
            prop_assert!((b.mu - a.mu * c.powf(-1.0 / (p - 1.0))).abs() < 1e-8 * b.mu);
        }

        #[test]
        fn nehari_unique_from_random_starts(
            a in prop::collection::vec(0.5f64..5.0, 1..4),
            seed in any::<u64>(),
            p in 1.2f64..2.5,
        ) {
            use rand::Rng;
            let q = a.len();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut b = SquareMatrix::zeros(q);
            for h in 0..q {
                b.set(h, h, rng.gen_range(1.0..4.0));
                for k in h + 1..q {
                    let v = -rng.gen_range(0.0..0.2);
                    b.set(h, k, v);
                    b.set(k, h, v);
                }
            }
            let reference = nehari_project(&a, &b, p).unwrap();
            prop_assert!(reference.residual < 1e-10);
            let j = energy_on_nehari(&reference).unwrap();
            prop_assert!(j > 0.0);
            for _ in 0..20 {
                let start: Vec<f64> = (0..q).map(|_| rng.gen_range(0.2..3.0)).collect();
                let other = nehari_project_from(&a, &b, p, &start).unwrap();
                for (x, y) in other.s.iter().zip(&reference.s) {
                    prop_assert!((x - y).abs() < 1e-8);
                }
            }
        }

        #[test]
        fn nehari_energy_is_homogeneous(a in 0.5f64..5.0, bb in 0.5f64..5.0, c in 0.1f64..10.0) {
            let b = sq(&[&[bb]]);
            let j1 = energy_on_nehari(&nehari_project(&[a], &b, 2.0).unwrap()).unwrap();
            let j2 = energy_on_nehari(&nehari_project(&[c * a], &b.scaled(c), 2.0).unwrap()).unwrap();
            prop_assert!((j2 - c * j1).abs() < 1e-10 * j2);
        }

        #[test]
        fn bound_constants_follow_signs(mu in prop::collection::vec(0.1f64..3.0, 2..6), bits in any::<u8>()) {
            let signs = SignPartition(
                (0..mu.len())
                    .map(|h| if bits >> h & 1 == 1 { BlockSign::Minus } else { BlockSign::Plus })
                    .collect(),
            );
            let r = bound_report(&mu, &signs, 1.0).unwrap();
            for c in &r.per_candidate {
                let expect = if signs.sign(c.k) == BlockSign::Plus { 1.0 } else { 12.0 };
                prop_assert_eq!(c.a_k, expect);
                let b_expect = if signs.sign(c.k) == BlockSign::Plus { 6.0 } else { 12.0 };
                prop_assert_eq!(r.b[c.k], b_expect);
                prop_assert!(r.bound <= c.value);
            }
            prop_assert!(r.bound <= r.corollary.unwrap() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn far_start_does_not_cycle() {
        let a = [1.1184479335564674f64, 1.5691567657443954, 1.9367836951026427];
        let b = SquareMatrix::from_rows(&[
            vec![1.5785546430161081, -0.25286166948597166, -0.27533291522759334],
            vec![-0.25286166948597166, 1.6383454150874928, -0.15764401724569166],
            vec![-0.27533291522759334, -0.15764401724569166, 1.6946610696355917],
        ])
        .unwrap();
        let base = nehari_project(&a, &b, 1.5).unwrap();
        let far = nehari_project_from(&a, &b, 1.5, &[6.649404989478639, 0.7300755061831209, 1.738825239034095]).unwrap();
        for (x, y) in far.s.iter().zip(&base.s) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}
