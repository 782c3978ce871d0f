//! Direct data-driven design.
//!
//! The direct design searches over the span of recorded behaviors,
//! restricted to `Ker(U)^⊥`:
//!
//! ```text
//! u_direct = U (U' Q U + Y|U' R Y|U)^† Y|U' R y_ref,    Y|U = Y U^† U
//! ```
//!
//! Since `Y|U = (Y U^†) U`, the `N x N` inner problem collapses to a
//! `rank(U) x rank(U)` one on an orthonormal basis `W` of `Col(U)`:
//! `u_direct = W (W' H W)^{-1} W' b` with `H = Q + G' R G`, `b = G' R y_ref`
//! and `G = Y U^†` the implicit model. This keeps the cost linear in `N`.

use crate::error::{Error, Result};
use crate::matops::{pinv, solve_spd, Matrix, SvdFactors, Vector};
use crate::task::ControlTask;

/// Input and output data from `N` experiments, one column per experiment.
#[derive(Clone, Debug)]
pub struct BehaviorDataset {
    u: Matrix,
    y: Matrix,
    v: Option<Matrix>,
}

impl BehaviorDataset {
    pub fn new(u: Matrix, y: Matrix) -> Result<Self> {
        if u.shape() != y.shape() || u.ncols() == 0 || u.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "U {:?} and Y {:?} must have the same non-empty shape",
                u.shape(),
                y.shape()
            )));
        }
        Ok(BehaviorDataset { u, y, v: None })
    }

    /// Attaches the realized noise matrix `V` (simulator data only).
    pub fn with_noise(mut self, v: Matrix) -> Result<Self> {
        if v.shape() != self.u.shape() {
            return Err(Error::Dimension(format!(
                "V {:?} does not match U {:?}",
                v.shape(),
                self.u.shape()
            )));
        }
        self.v = Some(v);
        Ok(self)
    }

    pub fn horizon(&self) -> usize {
        self.u.nrows()
    }
    pub fn experiments(&self) -> usize {
        self.u.ncols()
    }
    pub fn u(&self) -> &Matrix {
        &self.u
    }
    pub fn y(&self) -> &Matrix {
        &self.y
    }
    pub fn v(&self) -> Option<&Matrix> {
        self.v.as_ref()
    }
}

/// Implicit model `Y U^†` used by the direct design.
pub fn implicit_model(data: &BehaviorDataset, rank_tol: f64) -> Matrix {
    data.y() * pinv(data.u(), rank_tol)
}

/// Minimizer of the task cost over `Col(U)` under the implicit model.
pub fn direct_design(task: &ControlTask, data: &BehaviorDataset, rank_tol: f64) -> Result<Vector> {
    let horizon = task.horizon();
    if data.horizon() != horizon {
        return Err(Error::Dimension(format!(
            "dataset horizon {} differs from task horizon {horizon}",
            data.horizon()
        )));
    }
    let svd = SvdFactors::compute(data.u());
    let rank = svd.rank(rank_tol);
    if rank == 0 {
        return Ok(Vector::zeros(horizon));
    }
    let basis = svd.u.columns(0, rank).into_owned();

    // Y U^† restricted to the retained singular directions
    let mut u_pinv = Matrix::zeros(data.experiments(), horizon);
    for k in 0..rank {
        let s = svd.singular_values[k];
        u_pinv.ger(1.0 / s, &svd.v_t.row(k).transpose(), &svd.u.column(k), 1.0);
    }
    let g_hat = data.y() * u_pinv;

    let h = task.hessian(&g_hat)?;
    let b = task.linear_term(&g_hat)?;
    let reduced_h = basis.tr_mul(&(h * &basis));
    let reduced_b = basis.tr_mul(&b);
    let coords = solve_spd(&reduced_h, &reduced_b)?;
    Ok(basis * coords)
}

/// `Delta_direct = V U^†`, the deviation of the implicit model from the truth.
pub fn implicit_model_error(data: &BehaviorDataset, rank_tol: f64) -> Result<Matrix> {
    let v = data.v().ok_or(Error::DiagnosticUnavailable)?;
    Ok(v * pinv(data.u(), rank_tol))
}

/// Smallest singular value of the empirical input covariance `U U' / N`.
pub fn empirical_sigma_min(data: &BehaviorDataset) -> f64 {
    let u = data.u();
    let cov = u * u.transpose() / data.experiments() as f64;
    crate::matops::min_singular_value(&cov)
}

/// Chebyshev-type tail bound on `P{ ||Delta_direct||_F >= eps }`:
/// `T^2 / (N eps^2) * sigma_w * sigma_u / sigma_min^2`.
///
/// `sigma_w` and `sigma_u` are variances. Values above one are returned as is.
pub fn theorem1_bound(
    horizon: usize,
    experiments: usize,
    eps: f64,
    sigma_w: f64,
    sigma_u: f64,
    sigma_min_emp: f64,
) -> Result<f64> {
    if eps.is_nan() || eps <= 0.0 || experiments == 0 {
        return Err(Error::Dimension(format!(
            "bound needs eps > 0 and N >= 1 (eps = {eps}, N = {experiments})"
        )));
    }
    if sigma_min_emp.is_nan() || sigma_min_emp <= 0.0 {
        return Err(Error::SingularCovariance {
            sigma_min: sigma_min_emp,
        });
    }
    let t = horizon as f64;
    Ok(t * t / (experiments as f64 * eps * eps) * sigma_w * sigma_u / (sigma_min_emp * sigma_min_emp))
}

#[derive(Clone, Debug)]
pub struct DirectDiagnostics {
    pub delta: Matrix,
    pub delta_frobenius: f64,
    pub sigma_min_emp: f64,
    horizon: usize,
    experiments: usize,
    sigma_w: f64,
    sigma_u: f64,
}

impl DirectDiagnostics {
    pub fn compute(data: &BehaviorDataset, sigma_w: f64, sigma_u: f64, rank_tol: f64) -> Result<Self> {
        let delta = implicit_model_error(data, rank_tol)?;
        Ok(DirectDiagnostics {
            delta_frobenius: delta.norm(),
            delta,
            sigma_min_emp: empirical_sigma_min(data),
            horizon: data.horizon(),
            experiments: data.experiments(),
            sigma_w,
            sigma_u,
        })
    }

    /// Tail bound at `eps` using this dataset's own `sigma_min`.
    pub fn theorem1_bound(&self, eps: f64) -> Result<f64> {
        theorem1_bound(
            self.horizon,
            self.experiments,
            eps,
            self.sigma_w,
            self.sigma_u,
            self.sigma_min_emp,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{toeplitz_g, LtiSystem};
    use crate::matops::default_rank_tol;
    use crate::task::{cost, optimal_input};
    use approx::assert_relative_eq;

    fn scalar_g(t: usize) -> Matrix {
        toeplitz_g(&LtiSystem::scalar(0.5, 1.0, 1.0).unwrap(), t)
    }

    #[test]
    fn noise_free_full_rank_recovers_optimum() {
        let task = ControlTask::constant(3, 1.0, 1.0, 1.0).unwrap();
        let g = scalar_g(3);
        let u = Matrix::from_row_slice(3, 4, &[1.0, 0.0, 2.0, -1.0, 0.5, 1.0, 0.0, 3.0, -2.0, 0.3, 1.0, 1.0]);
        let data = BehaviorDataset::new(u.clone(), &g * &u).unwrap();
        let u_hat = direct_design(&task, &data, default_rank_tol(3, 4)).unwrap();
        assert_relative_eq!(u_hat, optimal_input(&task, &g).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn zero_outputs_give_zero_input() {
        let task = ControlTask::constant(2, 1.0, 1.0, 1.0).unwrap();
        let u = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 1.0]);
        let data = BehaviorDataset::new(u, Matrix::zeros(2, 3)).unwrap();
        assert_eq!(direct_design(&task, &data, 1e-10).unwrap(), Vector::zeros(2));
    }

    #[test]
    fn single_experiment_matches_line_search() {
        let task = ControlTask::constant(3, 1.0, 1.0, 1.0).unwrap();
        let g = scalar_g(3);
        let u1 = Vector::from_vec(vec![0.7, -0.4, 1.1]);
        let y1 = &g * &u1;
        let data = BehaviorDataset::new(
            Matrix::from_column_slice(3, 1, u1.as_slice()),
            Matrix::from_column_slice(3, 1, y1.as_slice()),
        )
        .unwrap();
        let u_hat = direct_design(&task, &data, 1e-10).unwrap();

        // golden-section search over the scalar multiplier
        let f = |z: f64| cost(&task, &(&u1 * z), &(&y1 * z)).unwrap();
        let (mut lo, mut hi) = (-100.0f64, 100.0f64);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - phi * (hi - lo);
            let b = lo + phi * (hi - lo);
            if f(a) < f(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        // the cost is quadratic along the ray: one parabolic step through
        // well-spaced points removes the sqrt(eps) flat-minimum error
        let z0 = 0.5 * (lo + hi);
        let (fm, f0, fp) = (f(z0 - 1.0), f(z0), f(z0 + 1.0));
        let z = z0 - 0.5 * (fp - fm) / (fp - 2.0 * f0 + fm);
        assert_relative_eq!(u_hat, &u1 * z, epsilon = 1e-8);
    }

    #[test]
    fn implicit_error_cases() {
        let u = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 1.0]);
        let data = BehaviorDataset::new(u.clone(), u.clone())
            .unwrap()
            .with_noise(Matrix::zeros(2, 3))
            .unwrap();
        assert_eq!(implicit_model_error(&data, 1e-10).unwrap(), Matrix::zeros(2, 2));

        let v = Matrix::from_row_slice(2, 2, &[0.1, -0.2, 0.3, 0.4]);
        let data = BehaviorDataset::new(Matrix::identity(2, 2), Matrix::identity(2, 2))
            .unwrap()
            .with_noise(v.clone())
            .unwrap();
        assert_relative_eq!(implicit_model_error(&data, 1e-10).unwrap(), v, epsilon = 1e-14);
    }

    #[test]
    fn implicit_error_needs_noise() {
        let data = BehaviorDataset::new(Matrix::identity(2, 2), Matrix::identity(2, 2)).unwrap();
        assert!(matches!(
            implicit_model_error(&data, 1e-10),
            Err(Error::DiagnosticUnavailable)
        ));
    }

    #[test]
    fn bound_plug_in() {
        assert_relative_eq!(theorem1_bound(5, 100, 1.0, 2.0, 1.0, 0.8).unwrap(), 0.78125, epsilon = 1e-15);
        let base = theorem1_bound(5, 100, 1.0, 2.0, 1.0, 0.8).unwrap();
        assert_relative_eq!(theorem1_bound(5, 200, 1.0, 2.0, 1.0, 0.8).unwrap(), base / 2.0);
        assert_relative_eq!(theorem1_bound(5, 100, 2.0, 2.0, 1.0, 0.8).unwrap(), base / 4.0);
        assert!(matches!(
            theorem1_bound(5, 100, 1.0, 2.0, 1.0, 0.0),
            Err(Error::SingularCovariance { .. })
        ));
    }

    #[test]
    fn dataset_shape_checks() {
        assert!(BehaviorDataset::new(Matrix::zeros(2, 3), Matrix::zeros(3, 2)).is_err());
        let d = BehaviorDataset::new(Matrix::zeros(2, 3), Matrix::zeros(2, 3)).unwrap();
        assert!(d.with_noise(Matrix::zeros(2, 2)).is_err());
    }
}
