use std::fmt;
use std::sync::Arc;

use super::PdeError;
use crate::coupling::CouplingMatrix;
use crate::groundstate::is_subcritical;
use crate::scalar::Real;

type Field<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;

/// Bounded potential `V_i` with exterior floor `σ_i = inf_{|x|>ρ} V_i`.
#[derive(Clone)]
pub enum Potential<T> {
    Constant(T),
    /// `inner` on `|x| ≤ ρ − width`, `outer` on `|x| ≥ ρ`, cosine blend in between.
    Well { inner: T, outer: T, rho: T, width: T },
    Custom {
        f: Field<T>,
        floor: T,
        rho: T,
        bound: T,
    },
}

impl<T: Real> fmt::Debug for Potential<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Constant(v) => write!(f, "Constant({v})"),
            Potential::Well {
                inner,
                outer,
                rho,
                width,
            } => write!(f, "Well {{ inner: {inner}, outer: {outer}, rho: {rho}, width: {width} }}"),
            Potential::Custom { floor, rho, bound, .. } => {
                write!(f, "Custom {{ floor: {floor}, rho: {rho}, bound: {bound} }}")
            }
        }
    }
}

impl<T: Real> Potential<T> {
    pub fn value(&self, x: &[T]) -> T {
        match self {
            Potential::Constant(v) => *v,
            Potential::Well {
                inner,
                outer,
                rho,
                width,
            } => {
                let r = x.iter().map(|c| *c * *c).sum::<T>().sqrt();
                if r >= *rho {
                    *outer
                } else if r <= *rho - *width {
                    *inner
                } else {
                    let s = (*rho - r) / *width;
                    let blend = (T::one() - (T::PI() * s).cos()) / T::lit(2.0);
                    *outer + (*inner - *outer) * blend
                }
            }
            Potential::Custom { f, .. } => f(x),
        }
    }

    /// `σ_i`.
    pub fn floor(&self) -> T {
        match self {
            Potential::Constant(v) => *v,
            Potential::Well { outer, .. } => *outer,
            Potential::Custom { floor, .. } => *floor,
        }
    }

    pub fn rho(&self) -> T {
        match self {
            Potential::Constant(_) => T::zero(),
            Potential::Well { rho, .. } | Potential::Custom { rho, .. } => *rho,
        }
    }

    /// Declared `sup |V_i|`.
    pub fn bound(&self) -> T {
        match self {
            Potential::Constant(v) => v.abs(),
            Potential::Well { inner, outer, .. } => inner.abs().max(outer.abs()),
            Potential::Custom { bound, .. } => *bound,
        }
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, Potential::Constant(v) if *v == T::one())
    }
}

#[derive(Debug, Clone)]
pub struct SystemSpec<T: Real> {
    pub dimension: usize,
    pub exponent: T,
    pub beta: CouplingMatrix<T>,
    pub potentials: Vec<Potential<T>>,
}

impl<T: Real> SystemSpec<T> {
    pub fn new(
        dimension: usize,
        exponent: T,
        beta: CouplingMatrix<T>,
        potentials: Vec<Potential<T>>,
    ) -> Result<Self, PdeError> {
        if !(1..=4).contains(&dimension) {
            return Err(PdeError::InvalidSpec(format!("dimension {dimension} not in 1..=4")));
        }
        if !(exponent > T::one()) || !is_subcritical(dimension, exponent) {
            return Err(PdeError::InvalidSpec(format!(
                "p = {exponent} is not in (1, 2*/2) for N = {dimension}"
            )));
        }
        if potentials.len() != beta.ell() {
            return Err(PdeError::InvalidSpec(format!(
                "{} potentials for {} components",
                potentials.len(),
                beta.ell()
            )));
        }
        for (i, v) in potentials.iter().enumerate() {
            if !(v.floor() > T::zero()) {
                return Err(PdeError::InvalidSpec(format!(
                    "potential {} has exterior floor {} (must be positive)",
                    i + 1,
                    v.floor()
                )));
            }
            if !(v.bound() >= v.floor()) {
                return Err(PdeError::InvalidSpec(format!(
                    "potential {} declares bound {} below its floor",
                    i + 1,
                    v.bound()
                )));
            }
        }
        Ok(Self {
            dimension,
            exponent,
            beta,
            potentials,
        })
    }

    /// `V_i ≡ 1` for every component.
    pub fn autonomous(dimension: usize, exponent: T, beta: CouplingMatrix<T>) -> Result<Self, PdeError> {
        let ell = beta.ell();
        Self::new(dimension, exponent, beta, vec![Potential::Constant(T::one()); ell])
    }

    pub fn ell(&self) -> usize {
        self.beta.ell()
    }

    pub fn is_autonomous(&self) -> bool {
        self.potentials.iter().all(Potential::is_unit)
    }

    /// `Λ = max_i sup |V_i|`.
    pub fn lambda(&self) -> T {
        self.potentials.iter().map(Potential::bound).fold(T::zero(), T::max)
    }

    pub fn floors(&self) -> Vec<T> {
        self.potentials.iter().map(Potential::floor).collect()
    }

    /// Whether `e^{−√σ_min L} < 1e−8`.
    pub fn truncation_ok(&self, half_width: T) -> bool {
        let s = self.floors().into_iter().fold(T::infinity(), T::min);
        (-(s.sqrt()) * half_width).exp() < T::lit(1e-8)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beta1() -> CouplingMatrix<f64> {
        CouplingMatrix::new(vec![vec![1.0]]).unwrap()
    }

    #[test]
    fn well_blends_continuously() {
        let v = Potential::<f64>::Well {
            inner: 0.0,
            outer: 0.25,
            rho: 3.0,
            width: 1.0,
        };
        assert_eq!(v.value(&[0.5]), 0.0);
        assert_eq!(v.value(&[-3.5]), 0.25);
        assert!((v.value(&[2.5]) - 0.125).abs() < 1e-12);
        assert_eq!(v.floor(), 0.25);
        assert_eq!(v.bound(), 0.25);
        let a = v.value(&[2.0 + 1e-9]);
        assert!(a.abs() < 1e-12);
    }

    #[test]
    fn spec_validation() {
        assert!(SystemSpec::autonomous(1, 2.0, beta1()).unwrap().is_autonomous());
        assert!(SystemSpec::autonomous(3, 3.0, beta1()).is_err());
        assert!(SystemSpec::autonomous(5, 1.5, beta1()).is_err());
        assert!(SystemSpec::new(1, 2.0, beta1(), vec![]).is_err());
        assert!(SystemSpec::new(1, 2.0, beta1(), vec![Potential::Constant(0.0)]).is_err());
        let s = SystemSpec::autonomous(4, 1.5, beta1()).unwrap();
        assert!(SystemSpec::autonomous(4, 2.0, beta1()).is_err());
        assert!(s.truncation_ok(20.0) && !s.truncation_ok(10.0));
    }
}
