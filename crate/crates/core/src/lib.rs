//! Numerical toolkit for block-structured nonlinear Schrödinger systems
//! `−Δu_i + V_i u_i = Σ_j β_ij |u_j|^p |u_i|^{p−2} u_i`.
//!
//! Every routine is generic over [`Real`] (`f32` or `f64`). The aliases below
//! fix the scalar to `f64`; the `F32` variants fix it to `f32`.
pub mod blockopt;
pub mod coupling;
pub mod grid;
pub mod groundstate;
pub mod linalg;
pub mod pde;
pub mod quadrature;
pub mod regression;
pub mod scalar;
pub mod symmetry;

pub use scalar::Real;

pub type CouplingMatrix = coupling::CouplingMatrix<f64>;
pub type B3Report = coupling::B3Report<f64>;
pub type CstarEstimate = coupling::CstarEstimate<f64>;
pub type RadialProfile = groundstate::RadialProfile<f64>;
pub type BarrierCertificate = groundstate::BarrierCertificate<f64>;
pub type MuResult = blockopt::MuResult<f64>;
pub type NehariScaling = blockopt::NehariScaling<f64>;
pub type BoundReport = blockopt::BoundReport<f64>;
pub type CompactnessReport = blockopt::CompactnessReport<f64>;
pub type TestFunction = symmetry::TestFunction<f64>;
pub type Grid = grid::Grid<f64>;
pub type SystemSpec = pde::SystemSpec<f64>;
pub type SystemState = pde::SystemState<f64>;
pub type SolveOutcome = pde::SolveOutcome<f64>;
pub type TailSeries = pde::TailSeries<f64>;
pub type DecayFit = pde::DecayFit<f64>;

pub type CouplingMatrixF32 = coupling::CouplingMatrix<f32>;
pub type RadialProfileF32 = groundstate::RadialProfile<f32>;
pub type MuResultF32 = blockopt::MuResult<f32>;
pub type GridF32 = grid::Grid<f32>;
pub type SystemSpecF32 = pde::SystemSpec<f32>;
pub type SystemStateF32 = pde::SystemState<f32>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_precision_paths_run() {
        let prof = groundstate::solve_radial_ground_state::<f32>(1, 2.0, groundstate::RadialGrid {
            step: 2e-3,
            r_max: 12.0,
        })
        .unwrap();
        assert!((prof.norm_sq - 16.0 / 3.0).abs() < 1e-2);
        let beta = CouplingMatrixF32::new(vec![vec![2.0]]).unwrap();
        let mu = blockopt::compute_mu(beta.entries(), 2.0f32, &blockopt::MuOptions::default()).unwrap();
        assert!((mu.mu - 0.5).abs() < 1e-5);
        let spec = SystemSpecF32::autonomous(1, 2.0, beta).unwrap();
        let grid = GridF32::new(1, 65, 8.0).unwrap();
        let u = grid.sample(|x| 1.0 / x[0].cosh());
        let state = SystemStateF32::new(grid, vec![u]).unwrap();
        assert!(pde::energy(&state, &spec).unwrap().is_finite());
    }
}
