//! Least-squares line fits, used for exponential rate estimation on log scale.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Result of fitting `y ≈ intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LineFit<T> {
    pub slope: T,
    pub intercept: T,
    /// Root-mean-square of the fit residuals.
    pub rms_residual: T,
    pub points: usize,
}

/// Ordinary least squares. Returns `None` for fewer than two points or
/// when all abscissae coincide.
pub fn fit_line<T: Real>(xs: &[T], ys: &[T]) -> Option<LineFit<T>> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = T::from_count(n);
    let mx = xs.iter().copied().sum::<T>() / nf;
    let my = ys.iter().copied().sum::<T>() / nf;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= T::zero() {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum::<T>();
    Some(LineFit {
        slope,
        intercept,
        rms_residual: (ss / nf).sqrt(),
        points: n,
    })
}

/// Fits `ln y ≈ ln C − rate * x`; the returned slope is already negated into a rate.
/// Non-positive ordinates are skipped.
pub fn fit_exponential_rate<T: Real>(xs: &[T], ys: &[T]) -> Option<(T, T, LineFit<T>)> {
    let (fx, fy): (Vec<T>, Vec<T>) = xs
        .iter()
        .zip(ys)
        .filter(|(_, &y)| y > T::zero())
        .map(|(&x, &y)| (x, y.ln()))
        .unzip();
    let fit = fit_line(&fx, &fy)?;
    Some((-fit.slope, fit.intercept.exp(), fit))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let f = fit_line(&xs, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 2.0).abs() < 1e-14);
        assert!(f.rms_residual < 1e-14);
    }

    #[test]
    fn exponential_rate() {
        let xs: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * (-1.5 * x).exp()).collect();
        let (rate, c, _) = fit_exponential_rate(&xs, &ys).unwrap();
        assert!((rate - 1.5).abs() < 1e-12);
        assert!((c - 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_abscissae() {
        assert!(fit_line(&[1.0, 1.0], &[0.0, 2.0]).is_none());
        assert!(fit_line(&[1.0f64], &[0.0]).is_none());
    }
}
