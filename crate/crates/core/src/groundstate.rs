//! The positive radial ground state `ω` of `−Δw + w = |w|^{2p−2} w`, computed by
//! shooting on `w(0)`, together with the barrier comparison certificate for
//! exponential decay and the one-dimensional power-decay counterexample.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::unit_sphere_area;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroundStateError {
    #[error("dimension must be at least 1")]
    InvalidDimension,
    #[error("exponent {exponent} is not subcritical in dimension {dimension}")]
    NotSubcritical { dimension: usize, exponent: f64 },
    #[error("invalid radial grid: {0}")]
    InvalidGrid(String),
    #[error("could not bracket the central amplitude between decay and sign change")]
    NoBracket,
    #[error("profile table: {0}")]
    Parse(String),
}

/// `N/(N−2)` for `N ≥ 3`; `None` (no upper limit) in dimensions one and two.
pub fn critical_exponent(dimension: usize) -> Option<f64> {
    (dimension >= 3).then(|| dimension as f64 / (dimension as f64 - 2.0))
}

/// `1 < p < 2*/2`.
pub fn is_subcritical<T: Real>(dimension: usize, p: T) -> bool {
    p > T::one() && critical_exponent(dimension).is_none_or(|c| p < T::lit(c))
}

/// Uniform radial sampling `0, step, 2 step, …, r_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RadialGrid<T> {
    pub step: T,
    pub r_max: T,
}

impl<T: Real> Default for RadialGrid<T> {
    fn default() -> Self {
        Self {
            step: T::lit(1e-3),
            r_max: T::lit(40.0),
        }
    }
}

/// Sampled ground state with its energy norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RadialProfile<T> {
    pub dimension: usize,
    pub exponent: T,
    pub step: T,
    pub radii: Vec<T>,
    pub values: Vec<T>,
    pub derivatives: Vec<T>,
    /// `∫(|∇ω|² + ω²)` over ℝ^N.
    pub norm_sq: T,
    /// `∫|ω|^{2p}` over ℝ^N.
    pub l2p_norm_pow: T,
    pub center_value: T,
    /// Beyond this radius the samples follow the linear decaying tail.
    pub splice_radius: T,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Shot {
    /// Turned back up or never crossed zero: amplitude too small.
    Under,
    /// Crossed zero: amplitude too large.
    Over,
}

struct Shooter<T> {
    dimension: usize,
    p: T,
    h: T,
    steps: usize,
}

impl<T: Real> Shooter<T> {
    #[inline]
    fn source(&self, w: T) -> T {
        // w − |w|^{2p−2} w
        let e = T::lit(2.0) * self.p - T::lit(2.0);
        let nl = if e == T::lit(2.0) {
            w * w * w
        } else if w == T::zero() {
            T::zero()
        } else {
            w.abs().powf(e) * w
        };
        w - nl
    }

    #[inline]
    fn rhs(&self, r: T, w: T, v: T) -> (T, T) {
        let damping = T::from_count(self.dimension - 1) / r;
        (v, -damping * v + self.source(w))
    }

    /// Taylor start at `r = h`: `w = a + b r²/2 + c r⁴/24`.
    fn start(&self, a: T) -> (T, T) {
        let n = T::from_count(self.dimension);
        let b = self.source(a) / n;
        let e = T::lit(2.0) * self.p - T::lit(2.0);
        let dg = T::one() - (T::lit(2.0) * self.p - T::one()) * a.abs().powf(e);
        let c = T::lit(3.0) * dg * b / (n + T::lit(2.0));
        let h = self.h;
        let w = a + b * h * h / T::lit(2.0) + c * h.powi(4) / T::lit(24.0);
        let v = b * h + c * h.powi(3) / T::lit(6.0);
        (w, v)
    }

    #[inline]
    fn rk4(&self, r: T, w: T, v: T) -> (T, T) {
        let h = self.h;
        let half = h / T::lit(2.0);
        let (k1w, k1v) = self.rhs(r, w, v);
        let (k2w, k2v) = self.rhs(r + half, w + half * k1w, v + half * k1v);
        let (k3w, k3v) = self.rhs(r + half, w + half * k2w, v + half * k2v);
        let (k4w, k4v) = self.rhs(r + h, w + h * k3w, v + h * k3v);
        let six = T::lit(6.0);
        (
            w + h / six * (k1w + T::lit(2.0) * k2w + T::lit(2.0) * k3w + k4w),
            v + h / six * (k1v + T::lit(2.0) * k2v + T::lit(2.0) * k3v + k4v),
        )
    }

    fn classify(&self, a: T) -> Shot {
        let crossing = T::lit(-1e-12);
        let blowup = T::lit(2.0) * a;
        let (mut w, mut v) = self.start(a);
        for k in 1..self.steps {
            if w < crossing {
                return Shot::Over;
            }
            if v > T::zero() || w > blowup {
                return Shot::Under;
            }
            let r = self.h * T::from_count(k);
            (w, v) = self.rk4(r, w, v);
        }
        if w < crossing {
            Shot::Over
        } else {
            Shot::Under
        }
    }

    fn trajectory(&self, a: T) -> (Vec<T>, Vec<T>) {
        let mut ws = Vec::with_capacity(self.steps + 1);
        let mut vs = Vec::with_capacity(self.steps + 1);
        ws.push(a);
        vs.push(T::zero());
        let (mut w, mut v) = self.start(a);
        ws.push(w);
        vs.push(v);
        for k in 1..self.steps {
            let r = self.h * T::from_count(k);
            (w, v) = self.rk4(r, w, v);
            ws.push(w);
            vs.push(v);
        }
        (ws, vs)
    }
}

/// Logarithm of the decaying radial solution of `−Δw + w = 0`,
/// `r^{−ν} K_ν(r)` with `ν = (N−2)/2`, up to a constant, and its log-derivative.
fn linear_tail_log<T: Real>(dimension: usize, r: T) -> (T, T) {
    let nu = (T::from_count(dimension) - T::lit(2.0)) / T::lit(2.0);
    let four_nu_sq = T::lit(4.0) * nu * nu;
    let mut coeff = T::one();
    let mut s = T::one();
    let mut ds = T::zero();
    let mut last = T::infinity();
    for k in 1..=10usize {
        let kf = T::from_count(k);
        let odd = T::lit(2.0) * kf - T::one();
        coeff = coeff * (four_nu_sq - odd * odd) / (T::lit(8.0) * kf);
        let term = coeff / r.powi(k as i32);
        if term.abs() >= last || term == T::zero() {
            break;
        }
        last = term.abs();
        s += term;
        ds -= kf * term / r;
    }
    let log_g = -(nu + T::lit(0.5)) * r.ln() - r + s.ln();
    let dlog_g = -(nu + T::lit(0.5)) / r - T::one() + ds / s;
    (log_g, dlog_g)
}

/// Integrates `w'' + (N−1) w'/r = w − w^{2p−1}`, `w'(0) = 0`, bisecting on `w(0)`.
pub fn solve_radial_ground_state<T: Real>(
    dimension: usize,
    p: T,
    grid: RadialGrid<T>,
) -> Result<RadialProfile<T>, GroundStateError> {
    if dimension == 0 {
        return Err(GroundStateError::InvalidDimension);
    }
    if !is_subcritical(dimension, p) {
        return Err(GroundStateError::NotSubcritical {
            dimension,
            exponent: p.as_f64(),
        });
    }
    if !(grid.step > T::zero()) || !(grid.r_max > grid.step * T::lit(10.0)) {
        return Err(GroundStateError::InvalidGrid(format!(
            "step {} and r_max {}",
            grid.step, grid.r_max
        )));
    }
    let steps = (grid.r_max / grid.step).round().to_usize().unwrap_or(0);
    let shooter = Shooter {
        dimension,
        p,
        h: grid.step,
        steps,
    };

    let mut lo = T::one();
    let mut hi = T::lit(10.0);
    while shooter.classify(hi) == Shot::Under {
        lo = hi;
        hi = hi * T::lit(2.0);
        if hi > T::lit(1e8) {
            return Err(GroundStateError::NoBracket);
        }
    }
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        match shooter.classify(mid) {
            Shot::Under => lo = mid,
            Shot::Over => hi = mid,
        }
    }

    let (w_lo, v_lo) = shooter.trajectory(lo);
    let (w_hi, v_hi) = shooter.trajectory(hi);
    let len = w_lo.len();
    let diverged = |k: usize| {
        w_lo[k] <= T::zero()
            || w_hi[k] <= T::zero()
            || v_lo[k] >= T::zero()
            || v_hi[k] >= T::zero()
            || (w_hi[k] - w_lo[k]).abs() > T::lit(1e-7) * w_lo[k].abs()
    };
    let splice = (1..len).find(|&k| diverged(k)).map_or(len - 1, |k| k - 1);

    let h = grid.step;
    let radii: Vec<T> = (0..len).map(|k| h * T::from_count(k)).collect();
    let mut values = Vec::with_capacity(len);
    let mut derivatives = Vec::with_capacity(len);
    let half = T::lit(0.5);
    for k in 0..=splice {
        values.push(half * (w_lo[k] + w_hi[k]));
        derivatives.push(half * (v_lo[k] + v_hi[k]));
    }
    if splice + 1 < len {
        let r_s = radii[splice];
        let w_s = values[splice];
        let (lg_s, _) = linear_tail_log::<T>(dimension, r_s);
        for &r in &radii[splice + 1..] {
            let (lg, dlg) = linear_tail_log::<T>(dimension, r);
            let w = w_s * (lg - lg_s).exp();
            values.push(w);
            derivatives.push(w * dlg);
        }
    }

    let mut profile = RadialProfile {
        dimension,
        exponent: p,
        step: h,
        center_value: values[0],
        splice_radius: radii[splice],
        radii,
        values,
        derivatives,
        norm_sq: T::zero(),
        l2p_norm_pow: T::zero(),
    };
    profile.recompute_norms();
    Ok(profile)
}

impl<T: Real> RadialProfile<T> {
    pub fn r_max(&self) -> T {
        *self.radii.last().expect("nonempty profile")
    }

    fn radial_integral(&self, f: impl Fn(usize) -> T) -> T {
        let area = unit_sphere_area::<T>(self.dimension);
        let pow = self.dimension as i32 - 1;
        let n = self.radii.len();
        let mut acc = T::zero();
        for k in 0..n {
            let weight = if k == 0 || k == n - 1 { T::lit(0.5) } else { T::one() };
            acc += weight * f(k) * self.radii[k].powi(pow);
        }
        // r^{N−1} at r = 0 vanishes except in one dimension
        acc * self.step * area
    }

    /// Trapezoid quadrature of both norms with the radial volume factor.
    pub fn recompute_norms(&mut self) {
        let two_p = T::lit(2.0) * self.exponent;
        self.norm_sq = self.radial_integral(|k| {
            self.derivatives[k] * self.derivatives[k] + self.values[k] * self.values[k]
        });
        self.l2p_norm_pow = self.radial_integral(|k| self.values[k].abs().powf(two_p));
    }

    /// `|‖ω‖² − |ω|_{2p}^{2p}| / ‖ω‖²`.
    pub fn nehari_defect(&self) -> T {
        (self.norm_sq - self.l2p_norm_pow).abs() / self.norm_sq
    }

    /// Value and radial derivative at `r ≥ 0` by cubic Hermite interpolation;
    /// past the last sample the decaying linear tail is continued.
    pub fn eval_with_derivative(&self, r: T) -> (T, T) {
        let r = r.abs();
        let last = self.radii.len() - 1;
        let r_max = self.radii[last];
        if r >= r_max {
            let (lg_m, _) = linear_tail_log::<T>(self.dimension, r_max);
            let (lg, dlg) = linear_tail_log::<T>(self.dimension, r);
            let w = self.values[last] * (lg - lg_m).exp();
            return (w, w * dlg);
        }
        let h = self.step;
        let s = r / h;
        let mut k = s.floor().to_usize().unwrap_or(0);
        if k >= last {
            k = last - 1;
        }
        let t = s - T::from_count(k);
        let t2 = t * t;
        let t3 = t2 * t;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = two * t3 - three * t2 + T::one();
        let h10 = t3 - two * t2 + t;
        let h01 = -two * t3 + three * t2;
        let h11 = t3 - t2;
        let (w0, w1) = (self.values[k], self.values[k + 1]);
        let (d0, d1) = (self.derivatives[k], self.derivatives[k + 1]);
        let w = h00 * w0 + h10 * h * d0 + h01 * w1 + h11 * h * d1;
        let six = T::lit(6.0);
        let dh00 = six * t2 - six * t;
        let dh10 = three * t2 - T::lit(4.0) * t + T::one();
        let dh01 = -six * t2 + six * t;
        let dh11 = three * t2 - two * t;
        let dw = (dh00 * w0 + dh01 * w1) / h + dh10 * d0 + dh11 * d1;
        (w, dw)
    }

    #[inline]
    pub fn eval(&self, r: T) -> T {
        self.eval_with_derivative(r).0
    }

    /// Energy of the cut-off profile `χω` scaled onto its Nehari set, where
    /// `χ = 1` on `[0, R−1]`, decreases linearly on `[R−1, R]` and vanishes beyond.
    /// Any such value bounds the single-bump level from above.
    pub fn truncated_nehari_energy(&self, cutoff: T) -> T {
        let p = self.exponent;
        let two_p = T::lit(2.0) * p;
        let chi = |r: T| -> (T, T) {
            if r <= cutoff - T::one() {
                (T::one(), T::zero())
            } else if r < cutoff {
                (cutoff - r, -T::one())
            } else {
                (T::zero(), T::zero())
            }
        };
        let norm = self.radial_integral(|k| {
            let (c, dc) = chi(self.radii[k]);
            let g = dc * self.values[k] + c * self.derivatives[k];
            let v = c * self.values[k];
            g * g + v * v
        });
        let l2p = self.radial_integral(|k| {
            let (c, _) = chi(self.radii[k]);
            (c * self.values[k]).abs().powf(two_p)
        });
        let pm1 = p - T::one();
        norm.powf(p / pm1) / l2p.powf(T::one() / pm1)
    }

    /// Slope of `log ω(r) + (N−1)/2 · log r` against `r` over `[a, b]`.
    pub fn corrected_log_slope(&self, a: T, b: T) -> Option<T> {
        let shift = (T::from_count(self.dimension) - T::one()) / T::lit(2.0);
        let (xs, ys): (Vec<T>, Vec<T>) = self
            .radii
            .iter()
            .zip(&self.values)
            .filter(|(&r, &w)| r >= a && r <= b && w > T::zero())
            .map(|(&r, &w)| (r, w.ln() + shift * r.ln()))
            .unzip();
        crate::regression::fit_line(&xs, &ys).map(|f| f.slope)
    }

    /// Two-column text table `r  ω(r)` preceded by a `#`-prefixed metadata header.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# radial ground state of -Lap w + w = |w|^(2p-2) w");
        let _ = writeln!(out, "# dimension = {}", self.dimension);
        let _ = writeln!(out, "# exponent = {:e}", self.exponent);
        let _ = writeln!(out, "# step = {:e}", self.step);
        let _ = writeln!(out, "# norm_sq = {:e}", self.norm_sq);
        let _ = writeln!(out, "# l2p_norm_pow = {:e}", self.l2p_norm_pow);
        let _ = writeln!(out, "# center_value = {:e}", self.center_value);
        let _ = writeln!(out, "# splice_radius = {:e}", self.splice_radius);
        for (r, w) in self.radii.iter().zip(&self.values) {
            let _ = writeln!(out, "{:e} {:e}", r, w);
        }
        out
    }

    /// Parses [`RadialProfile::to_table`] output. Derivatives are rebuilt by
    /// fourth-order finite differences.
    pub fn from_table(text: &str) -> Result<Self, GroundStateError> {
        let perr = |m: String| GroundStateError::Parse(m);
        let mut meta = std::collections::HashMap::new();
        let mut radii = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            let mut cols = line.split_whitespace();
            let (Some(a), Some(b), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(perr(format!("line {}: expected two columns", lineno + 1)));
            };
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| perr(format!("line {}: {e}", lineno + 1)))
            };
            radii.push(parse(a)?);
            values.push(parse(b)?);
        }
        let get = |k: &str| -> Result<f64, GroundStateError> {
            meta.get(k)
                .ok_or_else(|| perr(format!("missing header field `{k}`")))?
                .parse::<f64>()
                .map_err(|e| perr(format!("header field `{k}`: {e}")))
        };
        let dimension = get("dimension")? as usize;
        if radii.len() < 5 {
            return Err(perr("too few samples".into()));
        }
        let step = radii[1] - radii[0];
        for (k, r) in radii.iter().enumerate() {
            if (*r - step * T::from_count(k)).abs() > step * T::lit(1e-6) {
                return Err(perr("radii must be uniform and start at zero".into()));
            }
        }
        let derivatives = finite_difference_derivative(&values, step);
        let exponent = T::lit(get("exponent")?);
        let mut profile = Self {
            dimension,
            exponent,
            step,
            center_value: values[0],
            splice_radius: meta
                .get("splice_radius")
                .and_then(|s| s.parse::<f64>().ok())
                .map(T::lit)
                .unwrap_or(*radii.last().unwrap()),
            radii,
            values,
            derivatives,
            norm_sq: T::zero(),
            l2p_norm_pow: T::zero(),
        };
        profile.recompute_norms();
        if let (Ok(n), Ok(l)) = (get("norm_sq"), get("l2p_norm_pow")) {
            profile.norm_sq = T::lit(n);
            profile.l2p_norm_pow = T::lit(l);
        }
        Ok(profile)
    }
}

fn finite_difference_derivative<T: Real>(w: &[T], h: T) -> Vec<T> {
    let n = w.len();
    let mut d = vec![T::zero(); n];
    let twelve_h = T::lit(12.0) * h;
    for k in 0..n {
        d[k] = if k >= 2 && k + 2 < n {
            (w[k - 2] - T::lit(8.0) * w[k - 1] + T::lit(8.0) * w[k + 1] - w[k + 2]) / twelve_h
        } else if k == 0 {
            T::zero()
        } else if k == 1 {
            // even extension through r = 0
            (w[k] - T::lit(8.0) * w[k - 1] + T::lit(8.0) * w[k + 1] - w[k + 2]) / twelve_h
        } else {
            (T::lit(3.0) * w[k] - T::lit(4.0) * w[k - 1] + w[k - 2]) / (T::lit(2.0) * h)
        };
    }
    d
}

// ---------------------------------------------------------------------------
// Barrier comparison

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarrierError {
    #[error("decay rates must satisfy 0 < mu < delta (got mu = {mu}, delta = {delta})")]
    InvalidRates { mu: f64, delta: f64 },
    #[error("no samples at or beyond the exclusion radius")]
    NoExteriorSamples,
    #[error("exterior potential floor {sigma} does not exceed mu^2 = {mu_sq}")]
    SigmaTooSmall { sigma: f64, mu_sq: f64 },
    #[error("no admissible barrier multiplier on |x| = rho")]
    BoundaryFails,
}

/// Inputs of the comparison argument: `−Δw + V w = f` with `|w| ≤ C e^{−η|x|}`
/// and `|f| ≤ C e^{−δ|x|}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BarrierParams<T> {
    pub mu: T,
    pub delta: T,
    pub rho: T,
    pub envelope: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BarrierViolation<T> {
    pub radius: T,
    pub value: T,
    pub barrier: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BarrierCertificate<T> {
    pub mu: T,
    pub delta: T,
    pub rho: T,
    pub sigma: T,
    pub epsilon: T,
    pub t: T,
    pub verified_on: (T, T),
    pub samples_checked: usize,
    /// Largest gap between consecutive checked radii.
    pub sample_resolution: T,
    /// Whether `|f| ≤ C e^{−δ r}` held on every source sample.
    pub source_envelope_ok: bool,
    pub pass: bool,
    pub first_violation: Option<BarrierViolation<T>>,
}

/// Sample-based comparison problem. Samples are `(|x|, value)` pairs.
pub struct BarrierProblem<'a, T> {
    w: &'a [(T, T)],
    f: &'a [(T, T)],
    sigma: T,
    params: BarrierParams<T>,
}

impl<'a, T: Real> BarrierProblem<'a, T> {
    pub fn new(
        w_samples: &'a [(T, T)],
        potential: impl Fn(T) -> T,
        f_samples: &'a [(T, T)],
        params: BarrierParams<T>,
    ) -> Result<Self, BarrierError> {
        let BarrierParams { mu, delta, rho, .. } = params;
        if !(mu > T::zero() && mu < delta) {
            return Err(BarrierError::InvalidRates {
                mu: mu.as_f64(),
                delta: delta.as_f64(),
            });
        }
        let sigma = w_samples
            .iter()
            .chain(f_samples)
            .filter(|(r, _)| *r >= rho)
            .map(|(r, _)| potential(*r))
            .fold(None, |acc: Option<T>, v| Some(acc.map_or(v, |a| a.min(v))))
            .ok_or(BarrierError::NoExteriorSamples)?;
        if sigma <= mu * mu {
            return Err(BarrierError::SigmaTooSmall {
                sigma: sigma.as_f64(),
                mu_sq: (mu * mu).as_f64(),
            });
        }
        Ok(Self {
            w: w_samples,
            f: f_samples,
            sigma,
            params,
        })
    }

    /// Largest `|w|` among the samples bracketing `|x| = ρ`.
    fn boundary_value(&self) -> T {
        let rho = self.params.rho;
        let below = self
            .w
            .iter()
            .filter(|(r, _)| *r <= rho)
            .fold(None, |acc: Option<(T, T)>, &(r, v)| match acc {
                Some((ra, _)) if ra >= r => acc,
                _ => Some((r, v.abs())),
            });
        let above = self
            .w
            .iter()
            .filter(|(r, _)| *r >= rho)
            .fold(None, |acc: Option<(T, T)>, &(r, v)| match acc {
                Some((ra, _)) if ra <= r => acc,
                _ => Some((r, v.abs())),
            });
        // every sample sitting at the nearest radius on either side
        let mut m = T::zero();
        for (ra, _) in [below, above].into_iter().flatten() {
            for &(r, v) in self.w {
                if r == ra {
                    m = m.max(v.abs());
                }
            }
        }
        m
    }

    /// Smallest multiplier admitted by the comparison conditions, inflated by a
    /// relative margin to make both inequalities strict.
    pub fn admissible_multiplier(&self) -> Result<T, BarrierError> {
        let BarrierParams {
            mu,
            delta,
            rho,
            envelope,
        } = self.params;
        let eps = self.sigma - mu * mu;
        let t_source = envelope / eps * ((mu - delta) * rho).exp();
        let t_boundary = self.boundary_value() * (mu * rho).exp();
        let t = t_source.max(t_boundary) * (T::one() + T::lit(1e-9)) + T::min_positive_value();
        if !t.is_finite() {
            return Err(BarrierError::BoundaryFails);
        }
        Ok(t)
    }

    /// Checks `|w(x)| ≤ t e^{−μ|x|}` on every sample with `|x| ≥ ρ`.
    pub fn check(&self, t: T) -> BarrierCertificate<T> {
        let BarrierParams {
            mu,
            delta,
            rho,
            envelope,
        } = self.params;
        let mut checked: Vec<(T, T)> = self.w.iter().copied().filter(|(r, _)| *r >= rho).collect();
        checked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut first_violation = None;
        for &(r, v) in &checked {
            let barrier = t * (-mu * r).exp();
            if v.abs() > barrier {
                first_violation = Some(BarrierViolation {
                    radius: r,
                    value: v,
                    barrier,
                });
                break;
            }
        }
        let resolution = checked
            .windows(2)
            .map(|w| w[1].0 - w[0].0)
            .fold(T::zero(), T::max);
        let source_envelope_ok = self
            .f
            .iter()
            .all(|&(r, v)| v.abs() <= envelope * (-delta * r).exp() * (T::one() + T::lit(1e-12)));
        BarrierCertificate {
            mu,
            delta,
            rho,
            sigma: self.sigma,
            epsilon: self.sigma - mu * mu,
            t,
            verified_on: (rho, checked.last().map_or(rho, |s| s.0)),
            samples_checked: checked.len(),
            sample_resolution: resolution,
            source_envelope_ok,
            pass: first_violation.is_none(),
            first_violation,
        }
    }
}

/// Chooses a multiplier satisfying the comparison conditions and verifies the
/// exponential barrier on the exterior samples.
pub fn barrier_certificate<T: Real>(
    w_samples: &[(T, T)],
    potential: impl Fn(T) -> T,
    f_samples: &[(T, T)],
    params: BarrierParams<T>,
) -> Result<BarrierCertificate<T>, BarrierError> {
    let problem = BarrierProblem::new(w_samples, potential, f_samples, params)?;
    let t = problem.admissible_multiplier()?;
    Ok(problem.check(t))
}

// ---------------------------------------------------------------------------
// Power-decay counterexample

#[derive(Debug, Error, Clone, PartialEq)]
#[error("sample x = {x} lies in the closed unit ball")]
pub struct SampleInsideUnitBall {
    pub x: f64,
}

/// `w = |x|^{−2/3}` with the coefficient `c = (−w'' + w)/w^{1/2}` that makes it
/// solve `−w'' + w = c w^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CounterexamplePoint<T> {
    pub x: T,
    pub w: T,
    pub c: T,
    /// `−w'' + w − c w^{1/2}`.
    pub residual: T,
}

pub fn sublinear_counterexample<T: Real>(
    xs: &[T],
) -> Result<Vec<CounterexamplePoint<T>>, SampleInsideUnitBall> {
    xs.iter()
        .map(|&x| {
            let a = x.abs();
            if a <= T::one() {
                return Err(SampleInsideUnitBall { x: x.as_f64() });
            }
            let w = a.powf(T::lit(-2.0 / 3.0));
            let w2 = T::lit(10.0 / 9.0) * a.powf(T::lit(-8.0 / 3.0));
            let c = a.powf(T::lit(-1.0 / 3.0)) - T::lit(10.0 / 9.0) * a.powf(T::lit(-7.0 / 3.0));
            let residual = -w2 + w - c * w.sqrt();
            Ok(CounterexamplePoint { x, w, c, residual })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sech(x: f64) -> f64 {
        1.0 / x.cosh()
    }

    #[test]
    fn one_dimensional_soliton_matches_closed_form() {
        let prof = solve_radial_ground_state::<f64>(1, 2.0, RadialGrid::default()).unwrap();
        let sup = prof
            .radii
            .iter()
            .zip(&prof.values)
            .map(|(r, w)| (w - 2f64.sqrt() * sech(*r)).abs())
            .fold(0.0, f64::max);
        assert!(sup < 1e-6, "sup error {sup}");
        assert!((prof.norm_sq - 16.0 / 3.0).abs() / (16.0 / 3.0) < 1e-4);
        assert!(prof.nehari_defect() < 1e-6);
    }

    #[test]
    fn values_positive_and_decreasing() {
        let prof = solve_radial_ground_state::<f64>(3, 2.0, RadialGrid::default()).unwrap();
        assert!(prof.values.iter().all(|&w| w > 0.0));
        assert!(prof.values.windows(2).all(|w| w[1] < w[0]));
        assert!((prof.center_value - 4.34).abs() < 0.01);
    }

    #[test]
    fn critical_exponent_rejected() {
        let err = solve_radial_ground_state::<f64>(3, 3.0, RadialGrid::default()).unwrap_err();
        assert!(matches!(err, GroundStateError::NotSubcritical { .. }));
        assert!(solve_radial_ground_state::<f64>(1, 1.0, RadialGrid::default()).is_err());
        assert_eq!(
            solve_radial_ground_state::<f64>(0, 2.0, RadialGrid::default()).unwrap_err(),
            GroundStateError::InvalidDimension
        );
    }

    #[test]
    fn hermite_interpolation_between_samples() {
        let prof = solve_radial_ground_state::<f64>(1, 2.0, RadialGrid::default()).unwrap();
        for &r in &[0.0005, 0.3337, 2.5, 9.87654] {
            let (w, dw) = prof.eval_with_derivative(r);
            let exact = 2f64.sqrt() * sech(r);
            assert!((w - exact).abs() < 1e-7);
            assert!((dw + exact * r.tanh()).abs() < 1e-6);
        }
        // continued tail past r_max
        let far = prof.eval(45.0);
        assert!((far / (2.0 * 2f64.sqrt() * (-45f64).exp()) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn table_round_trip_keeps_norms() {
        let grid = RadialGrid {
            step: 2e-3,
            r_max: 25.0,
        };
        let prof = solve_radial_ground_state::<f64>(2, 2.0, grid).unwrap();
        let back = RadialProfile::<f64>::from_table(&prof.to_table()).unwrap();
        assert_eq!(back.dimension, 2);
        assert_eq!(back.norm_sq, prof.norm_sq);
        assert_eq!(back.values, prof.values);
        let maxd = back
            .derivatives
            .iter()
            .zip(&prof.derivatives)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(maxd < 1e-6, "derivative mismatch {maxd}");
    }

    #[test]
    fn table_parse_errors() {
        assert!(RadialProfile::<f64>::from_table("# dimension = 1\n0 1 2\n").is_err());
        assert!(RadialProfile::<f64>::from_table("0 1\n0.1 0.9\n").is_err());
    }

    #[test]
    fn truncated_energy_bounds_level_from_above() {
        let prof = solve_radial_ground_state::<f64>(1, 2.0, RadialGrid::default()).unwrap();
        let e_far = prof.truncated_nehari_energy(35.0);
        let e_near = prof.truncated_nehari_energy(3.0);
        assert!((e_far - prof.norm_sq).abs() / prof.norm_sq < 1e-6);
        assert!(e_near > prof.norm_sq);
    }

    #[test]
    fn counterexample_rejects_unit_ball() {
        assert!(sublinear_counterexample(&[2.0, 0.5]).is_err());
        assert!(sublinear_counterexample(&[-1.0]).is_err());
        let pts = sublinear_counterexample(&[-3.0, 3.0]).unwrap();
        assert_eq!(pts[0].w, pts[1].w);
    }

    #[test]
    fn barrier_rate_validation() {
        let w = [(0.0, 1.0), (1.0, 0.5)];
        let err = BarrierProblem::new(
            &w,
            |_| 1.0,
            &[],
            BarrierParams {
                mu: 1.0,
                delta: 0.5,
                rho: 0.0,
                envelope: 1.0,
            },
        );
        assert!(matches!(err, Err(BarrierError::InvalidRates { .. })));
        let err = BarrierProblem::new(
            &w,
            |_| 0.2,
            &[],
            BarrierParams {
                mu: 0.5,
                delta: 1.0,
                rho: 0.0,
                envelope: 1.0,
            },
        );
        assert!(matches!(err, Err(BarrierError::SigmaTooSmall { .. })));
    }
}
