//! Uniform Cartesian grids on the symmetric box `[-L, L]^N`.

use crate::scalar::Real;

/// Largest dimension a Cartesian grid is built for.
pub const MAX_GRID_DIM: usize = 4;

/// `n` points per axis on `[-L, L]`, boundary points included.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    dim: usize,
    n: usize,
    half_width: T,
    axis: Vec<T>,
}

impl<T: Real> Grid<T> {
    /// Returns `None` unless `1 <= dim <= 4`, `n >= 3` and `L > 0`.
    pub fn new(dim: usize, n: usize, half_width: T) -> Option<Self> {
        if dim == 0 || dim > MAX_GRID_DIM || n < 3 || half_width <= T::zero() {
            return None;
        }
        let h = T::lit(2.0) * half_width / T::from_count(n - 1);
        let axis = (0..n)
            .map(|k| {
                // exact mirror symmetry of the node set
                let c = -half_width + h * T::from_count(k);
                if 2 * k + 1 == n {
                    T::zero()
                } else {
                    c
                }
            })
            .collect();
        Some(Self {
            dim,
            n,
            half_width,
            axis,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn half_width(&self) -> T {
        self.half_width
    }

    #[inline]
    pub fn spacing(&self) -> T {
        T::lit(2.0) * self.half_width / T::from_count(self.n - 1)
    }

    /// Volume element `h^N`.
    #[inline]
    pub fn cell_volume(&self) -> T {
        self.spacing().powi(self.dim as i32)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    #[inline]
    pub fn axis_coords(&self) -> &[T] {
        &self.axis
    }

    #[inline]
    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        (idx / self.stride(axis)) % self.n
    }

    /// Coordinates of a flat index; unused trailing entries are zero.
    #[inline]
    pub fn point(&self, idx: usize) -> [T; MAX_GRID_DIM] {
        let mut x = [T::zero(); MAX_GRID_DIM];
        let mut rest = idx;
        for a in (0..self.dim).rev() {
            x[a] = self.axis[rest % self.n];
            rest /= self.n;
        }
        x
    }

    #[inline]
    pub fn radius(&self, idx: usize) -> T {
        let x = self.point(idx);
        x[..self.dim].iter().map(|&c| c * c).sum::<T>().sqrt()
    }

    #[inline]
    pub fn is_boundary(&self, idx: usize) -> bool {
        let mut rest = idx;
        for _ in 0..self.dim {
            let k = rest % self.n;
            if k == 0 || k == self.n - 1 {
                return true;
            }
            rest /= self.n;
        }
        false
    }

    pub fn sample(&self, f: impl Fn(&[T]) -> T) -> Vec<T> {
        (0..self.len())
            .map(|idx| {
                if self.is_boundary(idx) {
                    T::zero()
                } else {
                    let x = self.point(idx);
                    f(&x[..self.dim])
                }
            })
            .collect()
    }

    /// Multilinear interpolation of nodal values; zero outside the box.
    pub fn interpolate(&self, values: &[T], x: &[T]) -> T {
        debug_assert_eq!(values.len(), self.len());
        let h = self.spacing();
        let mut base = [0usize; MAX_GRID_DIM];
        let mut frac = [T::zero(); MAX_GRID_DIM];
        for a in 0..self.dim {
            let s = (x[a] + self.half_width) / h;
            if s < T::zero() || s > T::from_count(self.n - 1) {
                return T::zero();
            }
            let mut k = s.floor().to_usize().unwrap_or(0);
            if k >= self.n - 1 {
                k = self.n - 2;
            }
            base[a] = k;
            frac[a] = s - T::from_count(k);
        }
        let mut acc = T::zero();
        for corner in 0..(1usize << self.dim) {
            let mut w = T::one();
            let mut idx = 0;
            for a in 0..self.dim {
                let bit = (corner >> a) & 1;
                w *= if bit == 1 { frac[a] } else { T::one() - frac[a] };
                idx = idx * self.n + base[a] + bit;
            }
            if w != T::zero() {
                acc += w * values[idx];
            }
        }
        acc
    }

    /// Five-point (per axis) discrete Laplacian; zero on the boundary.
    pub fn laplacian(&self, u: &[T], out: &mut [T]) {
        let h2 = self.spacing() * self.spacing();
        let two = T::lit(2.0);
        let strides: Vec<usize> = (0..self.dim).map(|a| self.stride(a)).collect();
        for idx in 0..self.len() {
            if self.is_boundary(idx) {
                out[idx] = T::zero();
                continue;
            }
            let c = u[idx];
            let mut acc = T::zero();
            for &s in &strides {
                acc += u[idx + s] + u[idx - s] - two * c;
            }
            out[idx] = acc / h2;
        }
    }

    /// `∫|∇u|^2` by forward differences over all grid edges, restricted to edges
    /// whose midpoint satisfies `keep`.
    pub fn gradient_energy_masked(&self, u: &[T], keep: impl Fn(T) -> bool) -> T {
        let h = self.spacing();
        let half = T::lit(0.5);
        let mut acc = T::zero();
        for a in 0..self.dim {
            let s = self.stride(a);
            for idx in 0..self.len() {
                if self.axis_index(idx, a) == self.n - 1 {
                    continue;
                }
                let d = u[idx + s] - u[idx];
                if d == T::zero() {
                    continue;
                }
                let mut x = self.point(idx);
                x[a] += half * h;
                let r = x[..self.dim].iter().map(|&c| c * c).sum::<T>().sqrt();
                if keep(r) {
                    acc += d * d;
                }
            }
        }
        acc * self.cell_volume() / (h * h)
    }

    pub fn gradient_energy(&self, u: &[T]) -> T {
        let h = self.spacing();
        let mut acc = T::zero();
        for a in 0..self.dim {
            let s = self.stride(a);
            for idx in 0..self.len() {
                if self.axis_index(idx, a) == self.n - 1 {
                    continue;
                }
                let d = u[idx + s] - u[idx];
                acc += d * d;
            }
        }
        acc * self.cell_volume() / (h * h)
    }
}
