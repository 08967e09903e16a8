//! The group `G'_m ≅ Z_m × Z_2` acting on `ℂ² = ℝ⁴` by a common rotation of both
//! factors and the swap `τ(z_1, z_2) = (z_2, z_1)`, the sign character `θ`, the
//! equivariant projector, and multi-bump test functions built from `ω`.
//!
//! A planar analog (rotations of `ℝ²` only, positive blocks only) is provided
//! for quantitative interaction-decay experiments.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coupling::BlockSign;
use crate::grid::Grid;
use crate::groundstate::RadialProfile;
use crate::quadrature::{composite_gauss, gauss_legendre};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymmetryError {
    #[error("rotation order must be at least 1")]
    InvalidOrder,
    #[error("the planar analog supports positive blocks only")]
    UnsupportedSign,
    #[error("grid dimension {grid} does not match the group's {group}")]
    AsymmetricDomain { grid: usize, group: usize },
    #[error("field has {got} values, grid has {expected}")]
    FieldLength { got: usize, expected: usize },
    #[error("separation radius must exceed 1 (got {0})")]
    InvalidRadius(f64),
    #[error("profile dimension {profile} does not match the group's {group}")]
    ProfileDimension { profile: usize, group: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupMode {
    /// `G'_m` on `ℝ⁴`.
    Full,
    /// `K_m` on `ℝ²`.
    PlanarAnalog,
}

/// `e^{2πi·rotation/m}`, followed by `τ` when `swap` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupElement {
    pub rotation: usize,
    pub swap: bool,
}

/// Homomorphism into `{±1}` attached to a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Character {
    Trivial,
    Theta,
}

impl From<BlockSign> for Character {
    fn from(s: BlockSign) -> Self {
        match s {
            BlockSign::Plus => Character::Trivial,
            BlockSign::Minus => Character::Theta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryGroup {
    m: usize,
    mode: GroupMode,
    elements: Vec<GroupElement>,
}

/// `|1 − e^{2πi/m}| = 2 sin(π/m)`, exact at the algebraic special cases.
pub fn compute_dm<T: Real>(m: usize) -> T {
    match m {
        0 => T::nan(),
        1 => T::zero(),
        2 => T::lit(2.0),
        3 => T::lit(3.0).sqrt(),
        4 => T::lit(2.0).sqrt(),
        6 => T::one(),
        _ => T::lit(2.0) * (T::PI() / T::from_count(m)).sin(),
    }
}

impl SymmetryGroup {
    pub fn new(m: usize, mode: GroupMode) -> Result<Self, SymmetryError> {
        if m == 0 {
            return Err(SymmetryError::InvalidOrder);
        }
        let swaps: &[bool] = match mode {
            GroupMode::Full => &[false, true],
            GroupMode::PlanarAnalog => &[false],
        };
        let elements = swaps
            .iter()
            .flat_map(|&swap| (0..m).map(move |rotation| GroupElement { rotation, swap }))
            .collect();
        Ok(Self { m, mode, elements })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn mode(&self) -> GroupMode {
        self.mode
    }

    pub fn dimension(&self) -> usize {
        match self.mode {
            GroupMode::Full => 4,
            GroupMode::PlanarAnalog => 2,
        }
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    /// The orbit constructions are only backed by theory from `m = 5` on.
    pub fn below_gap_range(&self) -> bool {
        self.m < 5
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement {
            rotation: 0,
            swap: false,
        }
    }

    pub fn compose(&self, a: GroupElement, b: GroupElement) -> GroupElement {
        GroupElement {
            rotation: (a.rotation + b.rotation) % self.m,
            swap: a.swap ^ b.swap,
        }
    }

    pub fn inverse(&self, a: GroupElement) -> GroupElement {
        GroupElement {
            rotation: (self.m - a.rotation) % self.m,
            swap: a.swap,
        }
    }

    pub fn index_of(&self, g: GroupElement) -> usize {
        g.rotation + if g.swap { self.m } else { 0 }
    }

    /// `table[a][b]` is the index of `elements[a] ∘ elements[b]`.
    pub fn composition_table(&self) -> Vec<Vec<usize>> {
        self.elements
            .iter()
            .map(|&a| self.elements.iter().map(|&b| self.index_of(self.compose(a, b))).collect())
            .collect()
    }

    pub fn theta(&self, g: GroupElement) -> i8 {
        if g.swap {
            -1
        } else {
            1
        }
    }

    pub fn character(&self, g: GroupElement, phi: Character) -> i8 {
        match phi {
            Character::Trivial => 1,
            Character::Theta => self.theta(g),
        }
    }

    /// Image of `x` (first `dimension()` coordinates used).
    pub fn act<T: Real>(&self, g: GroupElement, x: &[T]) -> [T; 4] {
        let angle = T::TAU() * T::from_count(g.rotation) / T::from_count(self.m);
        let (s, c) = angle.sin_cos();
        let rot = |a: T, b: T| (c * a - s * b, s * a + c * b);
        let mut out = [T::zero(); 4];
        let (a0, a1) = rot(x[0], x[1]);
        out[0] = a0;
        out[1] = a1;
        if self.mode == GroupMode::Full {
            let (b0, b1) = rot(x[2], x[3]);
            if g.swap {
                out = [b0, b1, a0, a1];
            } else {
                out[2] = b0;
                out[3] = b1;
            }
        }
        out
    }

    /// `ζ_h`: `(1/√2, 1/√2)` in `ℂ²` for positive blocks, `(1, 0)` otherwise;
    /// `1 ∈ ℂ` in the planar analog.
    pub fn anchor<T: Real>(&self, sign: BlockSign) -> Result<[T; 4], SymmetryError> {
        let z = T::zero();
        match (self.mode, sign) {
            (GroupMode::Full, BlockSign::Plus) => {
                let a = T::FRAC_1_SQRT_2();
                Ok([a, z, a, z])
            }
            (GroupMode::Full, BlockSign::Minus) => Ok([T::one(), z, z, z]),
            (GroupMode::PlanarAnalog, BlockSign::Plus) => Ok([T::one(), z, z, z]),
            (GroupMode::PlanarAnalog, BlockSign::Minus) => Err(SymmetryError::UnsupportedSign),
        }
    }

    /// Distinct points `gζ` with the sign `φ(g)` carried by the bump there.
    pub fn orbit<T: Real>(&self, sign: BlockSign) -> Result<Vec<([T; 4], T)>, SymmetryError> {
        let anchor = self.anchor::<T>(sign)?;
        let phi = Character::from(sign);
        let mut out: Vec<([T; 4], T)> = Vec::new();
        let tol = T::lit(1e-9);
        for &g in &self.elements {
            let y = self.act(g, &anchor);
            let dup = out
                .iter()
                .any(|(c, _)| c.iter().zip(&y).all(|(a, b)| (*a - *b).abs() < tol));
            if !dup {
                out.push((y, T::lit(self.character(g, phi) as f64)));
            }
        }
        Ok(out)
    }

    fn check_grid<T: Real>(&self, grid: &Grid<T>, field: &[T]) -> Result<(), SymmetryError> {
        if grid.dim() != self.dimension() {
            return Err(SymmetryError::AsymmetricDomain {
                grid: grid.dim(),
                group: self.dimension(),
            });
        }
        if field.len() != grid.len() {
            return Err(SymmetryError::FieldLength {
                got: field.len(),
                expected: grid.len(),
            });
        }
        Ok(())
    }
}

/// Bilinear stencils of a planar rotation `R` on the node set of one coordinate
/// plane: `u(R y_k) ≈ Σ w · u[node]` with planar nodes numbered `k0·n + k1`.
struct PlaneStencil<T> {
    nodes: Vec<[(usize, T); 4]>,
}

impl<T: Real> PlaneStencil<T> {
    fn new(grid: &Grid<T>, angle: T) -> Self {
        let n = grid.points_per_axis();
        let axis = grid.axis_coords();
        let h = grid.spacing();
        let half = grid.half_width();
        let top = T::from_count(n - 1);
        let (sn, cs) = angle.sin_cos();
        let mut nodes = Vec::with_capacity(n * n);
        for k0 in 0..n {
            for k1 in 0..n {
                let (y0, y1) = (axis[k0], axis[k1]);
                let r = [cs * y0 - sn * y1, sn * y0 + cs * y1];
                let mut base = [0usize; 2];
                let mut frac = [T::zero(); 2];
                let mut inside = true;
                for a in 0..2 {
                    let t = (r[a] + half) / h;
                    if t < T::zero() || t > top {
                        inside = false;
                        break;
                    }
                    let b = t.floor().to_usize().unwrap_or(0).min(n - 2);
                    base[a] = b;
                    frac[a] = t - T::from_count(b);
                }
                if !inside {
                    nodes.push([(0, T::zero()); 4]);
                    continue;
                }
                let (f0, f1) = (frac[0], frac[1]);
                let k = base[0] * n + base[1];
                nodes.push([
                    (k, (T::one() - f0) * (T::one() - f1)),
                    (k + 1, (T::one() - f0) * f1),
                    (k + n, f0 * (T::one() - f1)),
                    (k + n + 1, f0 * f1),
                ]);
            }
        }
        Self { nodes }
    }
}

/// Rotation stencils for `j = 0, …, m−1` (entry 0 unused: the identity is exact).
fn rotation_stencils<T: Real>(grid: &Grid<T>, m: usize) -> Vec<PlaneStencil<T>> {
    (0..m)
        .map(|j| {
            if j == 0 {
                PlaneStencil { nodes: Vec::new() }
            } else {
                PlaneStencil::new(grid, T::TAU() * T::from_count(j) / T::from_count(m))
            }
        })
        .collect()
}

/// `u` at `(R a, R b)` (or `(R b, R a)` when `swap`) for the node with planar
/// indices `a`, `b`; `b` is ignored on planar grids.
#[inline]
fn rotated_value<T: Real>(field: &[T], dim: usize, n2: usize, st: &PlaneStencil<T>, a: usize, b: usize, swap: bool) -> T {
    if dim == 2 {
        return st.nodes[a].iter().map(|&(k, w)| w * field[k]).sum();
    }
    let (first, second) = if swap { (b, a) } else { (a, b) };
    let mut acc = T::zero();
    for &(ka, wa) in &st.nodes[first] {
        if wa == T::zero() {
            continue;
        }
        let mut inner = T::zero();
        for &(kb, wb) in &st.nodes[second] {
            inner += wb * field[ka * n2 + kb];
        }
        acc += wa * inner;
    }
    acc
}

fn plane_indices(dim: usize, n2: usize, idx: usize) -> (usize, usize) {
    if dim == 2 {
        (idx, 0)
    } else {
        (idx / n2, idx % n2)
    }
}

/// `(1/|G|) Σ_g φ(g) u(g⁻¹x)` with multilinear interpolation (zero outside the box).
///
/// Computed as the exact swap average of the rotation average; only the
/// rotations need interpolation.
pub fn project_equivariant<T: Real>(
    grid: &Grid<T>,
    field: &[T],
    group: &SymmetryGroup,
    phi: Character,
) -> Result<Vec<T>, SymmetryError> {
    group.check_grid(grid, field)?;
    let dim = grid.dim();
    let n = grid.points_per_axis();
    let n2 = n * n;
    let m = group.m();
    let stencils = rotation_stencils(grid, m);
    let weight = T::one() / T::from_count(m);
    let mut out: Vec<T> = (0..grid.len())
        .map(|idx| {
            if grid.is_boundary(idx) {
                return T::zero();
            }
            let (a, b) = plane_indices(dim, n2, idx);
            let mut acc = field[idx];
            for st in &stencils[1..] {
                acc += rotated_value(field, dim, n2, st, a, b, false);
            }
            acc * weight
        })
        .collect();
    if group.mode() == GroupMode::Full {
        project_swap(grid, &mut out, phi)?;
    }
    Ok(out)
}

/// Exact average over `{1, τ}`: `τ` permutes grid nodes, so no interpolation.
pub fn project_swap<T: Real>(
    grid: &Grid<T>,
    field: &mut [T],
    phi: Character,
) -> Result<(), SymmetryError> {
    if grid.dim() != 4 {
        return Err(SymmetryError::AsymmetricDomain {
            grid: grid.dim(),
            group: 4,
        });
    }
    if field.len() != grid.len() {
        return Err(SymmetryError::FieldLength {
            got: field.len(),
            expected: grid.len(),
        });
    }
    let sign = match phi {
        Character::Trivial => T::one(),
        Character::Theta => -T::one(),
    };
    let half = T::lit(0.5);
    for idx in 0..grid.len() {
        let i: [usize; 4] = std::array::from_fn(|a| grid.axis_index(idx, a));
        let partner = i[2] * grid.stride(0)
            + i[3] * grid.stride(1)
            + i[0] * grid.stride(2)
            + i[1] * grid.stride(3);
        if partner > idx {
            let a = field[idx];
            let b = field[partner];
            field[idx] = half * (a + sign * b);
            field[partner] = half * (b + sign * a);
        } else if partner == idx {
            field[idx] = half * (field[idx] + sign * field[idx]);
        }
    }
    Ok(())
}

/// `max_{g, x} |u(gx) − φ(g) u(x)| / max |u|` over interior nodes.
pub fn equivariance_error<T: Real>(
    grid: &Grid<T>,
    field: &[T],
    group: &SymmetryGroup,
    phi: Character,
) -> Result<T, SymmetryError> {
    group.check_grid(grid, field)?;
    let scale = field.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if scale == T::zero() {
        return Ok(T::zero());
    }
    let dim = grid.dim();
    let n = grid.points_per_axis();
    let n2 = n * n;
    let stencils = rotation_stencils(grid, group.m());
    let swap_sign = T::lit(group.character(GroupElement { rotation: 0, swap: true }, phi) as f64);
    let mut worst = T::zero();
    for idx in 0..grid.len() {
        if grid.is_boundary(idx) {
            continue;
        }
        let (a, b) = plane_indices(dim, n2, idx);
        let u = field[idx];
        for (j, st) in stencils.iter().enumerate() {
            if j > 0 {
                worst = worst.max((rotated_value(field, dim, n2, st, a, b, false) - u).abs());
            }
            if group.mode() == GroupMode::Full {
                let v = if j == 0 { field[b * n2 + a] } else { rotated_value(field, dim, n2, st, a, b, true) };
                worst = worst.max((v - swap_sign * u).abs());
            }
        }
    }
    Ok(worst / scale)
}

/// Resolution of the local quadrature around one bump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpQuadrature {
    pub radial_panels: usize,
    pub radial_order: usize,
    /// Trapezoid nodes for the full turn.
    pub azimuthal: usize,
    /// Gauss nodes per polar angle (four-dimensional case).
    pub polar: usize,
}

impl Default for BumpQuadrature {
    fn default() -> Self {
        Self {
            radial_panels: 48,
            radial_order: 8,
            azimuthal: 256,
            polar: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TestFunction<T> {
    pub sign: BlockSign,
    pub mode: GroupMode,
    pub m: usize,
    pub radius: T,
    pub exponent: T,
    pub centers: Vec<[T; 4]>,
    pub bump_signs: Vec<T>,
    /// Nehari normalization `t_hR`.
    pub t: T,
    /// `‖σ‖²` after normalization (equal to `∫|σ|^{2p}`).
    pub norm_sq: T,
    /// `‖σ‖² − (number of bumps)·‖ω‖²`, computed without cancellation.
    pub defect: T,
    /// `∫ Σ_a s_a ω_a^{2p−1}(σ̂ − s_a ω_a)`.
    pub overlap_quadratic: T,
    /// `∫ |σ̂|^{2p} − Σ_a ω_a^{2p}`.
    pub overlap_power: T,
    pub omega_norm_sq: T,
    /// Neighbouring bumps closer than two units.
    pub overlap_warning: bool,
}

impl<T: Real> TestFunction<T> {
    pub fn bumps(&self) -> usize {
        self.centers.len()
    }

    /// `t Σ_a s_a ω(|x − c_a|)`.
    pub fn eval(&self, profile: &RadialProfile<T>, x: &[T]) -> T {
        self.t * unnormalized(profile, &self.centers, &self.bump_signs, x)
    }
}

fn unnormalized<T: Real>(profile: &RadialProfile<T>, centers: &[[T; 4]], signs: &[T], x: &[T]) -> T {
    centers
        .iter()
        .zip(signs)
        .map(|(c, s)| {
            let r = x.iter().zip(c).map(|(a, b)| (*a - *b) * (*a - *b)).sum::<T>().sqrt();
            *s * profile.eval(r)
        })
        .sum()
}

/// Quadrature nodes `(offset, weight)` around the origin in `dim ∈ {2, 4}`.
fn local_nodes<T: Real>(dim: usize, r_max: T, q: &BumpQuadrature) -> Vec<([T; 4], T)> {
    let (rs, rw) = composite_gauss::<T>(T::zero(), r_max, q.radial_panels, q.radial_order);
    let nphi = q.azimuthal;
    let dphi = T::TAU() / T::from_count(nphi);
    let mut out = Vec::new();
    if dim == 2 {
        for (r, w) in rs.iter().zip(&rw) {
            for k in 0..nphi {
                let (s, c) = (dphi * T::from_count(k)).sin_cos();
                out.push(([*r * c, *r * s, T::zero(), T::zero()], *w * *r * dphi));
            }
        }
        return out;
    }
    let (ga, gw) = gauss_legendre::<T>(q.polar);
    let half_pi = T::FRAC_PI_2();
    // angles on [0, π] mapped from [−1, 1]
    let angles: Vec<(T, T)> = ga
        .iter()
        .zip(&gw)
        .map(|(x, w)| (half_pi * (*x + T::one()), half_pi * *w))
        .collect();
    let nc = nphi / 4;
    let dc = T::TAU() / T::from_count(nc);
    for (r, w) in rs.iter().zip(&rw) {
        let r3 = *r * *r * *r;
        for &(a, wa) in &angles {
            let (sa, ca) = a.sin_cos();
            for &(b, wb) in &angles {
                let (sb, cb) = b.sin_cos();
                let jac = sa * sa * sb;
                for k in 0..nc {
                    let (sc, cc) = (dc * T::from_count(k)).sin_cos();
                    let dir = [ca, sa * cb, sa * sb * cc, sa * sb * sc];
                    out.push((dir.map(|d| *r * d), *w * r3 * wa * wb * dc * jac));
                }
            }
        }
    }
    out
}

/// Assembles `σ̂ = Σ_{g} φ(g) ω(· − R g ζ)` and normalizes it onto
/// `‖σ‖² = ∫|σ|^{2p}`.
///
/// Both integrals are written as `n‖ω‖²` plus an overlap correction (using the
/// profile equation to integrate by parts), and the corrections are integrated
/// near bump 0 against the partition of unity `ω_0 / Σ_b ω_b`. The orbit is
/// transitive and the integrands are invariant, so each bump contributes equally.
pub fn build_test_function<T: Real>(
    group: &SymmetryGroup,
    sign: BlockSign,
    radius: T,
    profile: &RadialProfile<T>,
    quad: &BumpQuadrature,
) -> Result<TestFunction<T>, SymmetryError> {
    if !(radius > T::one()) {
        return Err(SymmetryError::InvalidRadius(radius.as_f64()));
    }
    if profile.dimension != group.dimension() {
        return Err(SymmetryError::ProfileDimension {
            profile: profile.dimension,
            group: group.dimension(),
        });
    }
    let orbit = group.orbit::<T>(sign)?;
    let centers: Vec<[T; 4]> = orbit.iter().map(|(c, _)| c.map(|x| x * radius)).collect();
    let signs: Vec<T> = orbit.iter().map(|(_, s)| *s).collect();
    let min_sep = centers
        .iter()
        .enumerate()
        .flat_map(|(i, a)| centers[i + 1..].iter().map(move |b| dist(a, b)))
        .fold(T::infinity(), T::min);
    let (overlap_quadratic, overlap_power) = overlap_integrals(profile, &centers, &signs, group.dimension(), quad);
    Ok(finish(
        sign,
        group.mode(),
        group.m(),
        radius,
        profile,
        centers,
        signs,
        overlap_quadratic,
        overlap_power,
        min_sep < T::lit(2.0),
    ))
}

/// Degenerate one-bump test function (no interaction).
pub fn single_bump<T: Real>(profile: &RadialProfile<T>) -> TestFunction<T> {
    finish(
        BlockSign::Plus,
        GroupMode::PlanarAnalog,
        1,
        T::zero(),
        profile,
        vec![[T::zero(); 4]],
        vec![T::one()],
        T::zero(),
        T::zero(),
        false,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Real>(
    sign: BlockSign,
    mode: GroupMode,
    m: usize,
    radius: T,
    profile: &RadialProfile<T>,
    centers: Vec<[T; 4]>,
    bump_signs: Vec<T>,
    overlap_quadratic: T,
    overlap_power: T,
    overlap_warning: bool,
) -> TestFunction<T> {
    let p = profile.exponent;
    let pm1 = p - T::one();
    let e = profile.norm_sq;
    let ne = T::from_count(centers.len()) * e;
    let log_ratio = p / pm1 * (overlap_quadratic / ne).ln_1p() - (overlap_power / ne).ln_1p() / pm1;
    let defect = ne * log_ratio.exp_m1();
    let a = ne + overlap_quadratic;
    let b = ne + overlap_power;
    TestFunction {
        sign,
        mode,
        m,
        radius,
        exponent: p,
        centers,
        bump_signs,
        t: (a / b).powf(T::one() / (T::lit(2.0) * pm1)),
        norm_sq: ne + defect,
        defect,
        overlap_quadratic,
        overlap_power,
        omega_norm_sq: e,
        overlap_warning,
    }
}

fn dist<T: Real>(a: &[T; 4], b: &[T; 4]) -> T {
    a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum::<T>().sqrt()
}

fn overlap_integrals<T: Real>(
    profile: &RadialProfile<T>,
    centers: &[[T; 4]],
    signs: &[T],
    dim: usize,
    quad: &BumpQuadrature,
) -> (T, T) {
    let n = centers.len();
    if n < 2 {
        return (T::zero(), T::zero());
    }
    let p = profile.exponent;
    let two_p = T::lit(2.0) * p;
    let c0 = centers[0];
    let mut iq = T::zero();
    let mut ib = T::zero();
    let mut w = vec![T::zero(); n];
    for (off, weight) in local_nodes::<T>(dim, profile.r_max(), quad) {
        let x: [T; 4] = std::array::from_fn(|k| c0[k] + off[k]);
        let mut total = T::zero();
        let mut sigma = T::zero();
        for a in 0..n {
            w[a] = profile.eval(dist(&x, &centers[a]));
            total += w[a];
            sigma += signs[a] * w[a];
        }
        if !(total > T::zero()) {
            continue;
        }
        let psi = w[0] / total;
        let mut quadratic = T::zero();
        let mut power = sigma.abs().powf(two_p);
        for a in 0..n {
            let wa = w[a];
            if wa == T::zero() {
                continue;
            }
            let rest = sigma - signs[a] * wa;
            quadratic += signs[a] * wa.powf(two_p - T::one()) * rest;
            power -= wa.powf(two_p);
        }
        iq += weight * psi * quadratic;
        ib += weight * psi * power;
    }
    let nf = T::from_count(n);
    (nf * iq, nf * ib)
}

/// Block energy `J_h(t̄ σ)` with the asymptote `n μ (p−1)/(2p) ‖ω‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TestEnergy<T> {
    pub radius: T,
    pub energy: T,
    pub asymptote: T,
    /// `asymptote − energy`.
    pub gap: T,
}

/// Evaluates `½ Σ t̄_i² ‖σ‖² − 1/(2p) Σ β_ij t̄_i^p t̄_j^p ∫|σ|^{2p}` using
/// `‖σ‖² = ∫|σ|^{2p}`. `mu` is the block constant the asymptote refers to.
pub fn test_function_energy<T: Real>(
    tf: &TestFunction<T>,
    block_beta: &crate::linalg::SquareMatrix<T>,
    tbar: &[T],
    mu: T,
) -> TestEnergy<T> {
    let p = tf.exponent;
    let sum_sq: T = tbar.iter().map(|t| *t * *t).sum();
    let form = crate::blockopt::block_form(block_beta, tbar, p);
    let k = sum_sq / T::lit(2.0) - form / (T::lit(2.0) * p);
    let c = (p - T::one()) / (T::lit(2.0) * p);
    let ne = T::from_count(tf.bumps()) * tf.omega_norm_sq;
    let energy = k * tf.norm_sq;
    let asymptote = ne * mu * c;
    // asymptote − energy, arranged so the small defect is not cancelled
    let gap = ne * (mu * c - k) - k * tf.defect;
    TestEnergy {
        radius: tf.radius,
        energy,
        asymptote,
        gap,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Sweep<T> {
    pub rows: Vec<TestEnergy<T>>,
    /// Smallest swept radius from which every gap is positive.
    pub r0: Option<T>,
    /// Radii (at or beyond `r0`) whose gap is not positive.
    pub violations: Vec<T>,
}

impl<T: Real> Sweep<T> {
    pub fn from_rows(rows: Vec<TestEnergy<T>>) -> Self {
        let mut r0 = None;
        for row in rows.iter().rev() {
            if row.gap > T::zero() {
                r0 = Some(row.radius);
            } else {
                break;
            }
        }
        let violations = rows.iter().filter(|r| !(r.gap > T::zero())).map(|r| r.radius).collect();
        Self { rows, r0, violations }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("R,J,asymptote,gap\n");
        for r in &self.rows {
            let _ = writeln!(out, "{:e},{:e},{:e},{:e}", r.radius, r.energy, r.asymptote, r.gap);
        }
        out
    }

    /// Slope of `ln(gap)` against `R` over the positive rows.
    pub fn log_gap_slope(&self) -> Option<T> {
        let (xs, ys): (Vec<T>, Vec<T>) = self
            .rows
            .iter()
            .filter(|r| r.gap > T::zero())
            .map(|r| (r.radius, r.gap.ln()))
            .unzip();
        crate::regression::fit_line(&xs, &ys).map(|f| f.slope)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn test_function_sweep<T: Real>(
    group: &SymmetryGroup,
    sign: BlockSign,
    radii: &[T],
    profile: &RadialProfile<T>,
    block_beta: &crate::linalg::SquareMatrix<T>,
    tbar: &[T],
    mu: T,
    quad: &BumpQuadrature,
) -> Result<Sweep<T>, SymmetryError> {
    let rows = radii
        .iter()
        .map(|&r| {
            build_test_function(group, sign, r, profile, quad)
                .map(|tf| test_function_energy(&tf, block_beta, tbar, mu))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Sweep::from_rows(rows))
}
