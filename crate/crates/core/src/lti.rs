//! Ground-truth single-input single-output stochastic LTI systems.
//!
//! `x_{t+1} = A x_t + B u_t + w_t`, `y_t = C x_t`, `x_0 = 0`, with
//! `w_t ~ N(0, Omega_w)` i.i.d. The simulator is the only place the hidden
//! truth (`A`, `B`, `C`, `Omega_w`) is visible; everything downstream works
//! from input/output data or from the operators assembled here.

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matops::{ensure_finite, lower_toeplitz, min_singular_value, Matrix, Vector};

/// Threshold on the smallest singular value of the rank-test matrices.
pub const RANK_SIGMA_MIN: f64 = 1e-8;

/// Eigenvalues of `Omega_w` in `[-PSD_CLAMP, 0)` are clamped to zero.
const PSD_CLAMP: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct LtiSystem {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    omega_w: Matrix,
    /// `F` with `F F^T = Omega_w`, used to color standard-normal draws.
    noise_factor: Matrix,
}

/// One simulated experiment. `y[t]` holds `y_{t+1}`; `v = y - G u`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub u: Vector,
    pub y: Vector,
    pub v: Vector,
}

impl LtiSystem {
    /// Builds a SISO system with zero process noise. Shapes must be
    /// `n x n`, `n x 1`, `1 x n`. Rank conditions are not enforced here;
    /// see [`LtiSystem::rank_conditions_hold`].
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n || b.shape() != (n, 1) || c.shape() != (1, n) {
            return Err(Error::Dimension(format!(
                "expected A {n}x{n}, B {n}x1, C 1x{n}; got A {:?}, B {:?}, C {:?}",
                a.shape(),
                b.shape(),
                c.shape()
            )));
        }
        ensure_finite(&a)?;
        ensure_finite(&b)?;
        ensure_finite(&c)?;
        Ok(LtiSystem {
            a,
            b,
            c,
            omega_w: Matrix::zeros(n, n),
            noise_factor: Matrix::zeros(n, n),
        })
    }

    /// Scalar system `x_{t+1} = a x_t + b u_t + w_t`, `y_t = c x_t`.
    pub fn scalar(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(
            Matrix::from_element(1, 1, a),
            Matrix::from_element(1, 1, b),
            Matrix::from_element(1, 1, c),
        )
    }

    /// Replaces the process-noise covariance.
    pub fn with_process_noise(mut self, omega_w: Matrix) -> Result<Self> {
        let n = self.order();
        if omega_w.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "process-noise covariance must be {n}x{n}, got {:?}",
                omega_w.shape()
            )));
        }
        ensure_finite(&omega_w)?;
        let sym = (&omega_w + omega_w.transpose()) * 0.5;
        if (&sym - &omega_w).norm() > 1e-12 * omega_w.norm().max(1.0) {
            return Err(Error::Dimension("process-noise covariance is not symmetric".into()));
        }
        self.noise_factor = noise_factor(&sym)?;
        self.omega_w = sym;
        Ok(self)
    }

    /// `Omega_w = variance * I`.
    pub fn with_isotropic_noise(self, variance: f64) -> Result<Self> {
        let n = self.order();
        self.with_process_noise(Matrix::identity(n, n) * variance)
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }
    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }
    pub fn omega_w(&self) -> &Matrix {
        &self.omega_w
    }

    /// `[C; CA; ...; CA^{n-1}]`
    pub fn observability_matrix(&self) -> Matrix {
        extended_observability(self, self.order())
    }

    /// `[v, Av, ..., A^{n-1} v]` for a column `v`.
    fn krylov(&self, v: &Matrix) -> Matrix {
        let n = self.order();
        let mut k = Matrix::zeros(n, n);
        let mut col = v.clone();
        for j in 0..n {
            k.set_column(j, &col.column(0));
            col = &self.a * col;
        }
        k
    }

    pub fn controllability_matrix(&self) -> Matrix {
        self.krylov(&self.b)
    }

    /// Checks observability of `(A, C)` and controllability of `(A, B)` and `(A, AB)`.
    pub fn rank_conditions_hold(&self) -> bool {
        let ab = &self.a * &self.b;
        min_singular_value(&self.observability_matrix()) > RANK_SIGMA_MIN
            && min_singular_value(&self.controllability_matrix()) > RANK_SIGMA_MIN
            && min_singular_value(&self.krylov(&ab)) > RANK_SIGMA_MIN
    }

    pub fn spectral_radius(&self) -> f64 {
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Rescales `A` so its spectral radius equals `target` (no-op if `A` is nilpotent).
    pub fn rescaled_to_spectral_radius(mut self, target: f64) -> Self {
        let rho = self.spectral_radius();
        if rho > 0.0 {
            self.a *= target / rho;
        }
        self
    }

    /// Draws `T` i.i.d. process-noise vectors `w_0..w_{T-1}`.
    pub fn draw_process_noise<R: Rng + ?Sized>(&self, horizon: usize, rng: &mut R) -> Vec<Vector> {
        let n = self.order();
        (0..horizon)
            .map(|_| {
                let z = Vector::from_fn(n, |_, _| rng.sample(StandardNormal));
                &self.noise_factor * z
            })
            .collect()
    }
}

fn noise_factor(omega: &Matrix) -> Result<Matrix> {
    if omega.iter().all(|&x| x == 0.0) {
        return Ok(omega.clone());
    }
    if let Some(chol) = omega.clone().cholesky() {
        return Ok(chol.l());
    }
    // PSD but singular: eigendecomposition with clamping
    let eig = SymmetricEigen::new(omega.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_CLAMP {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let mut f = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        f.column_mut(j).scale_mut(lambda.max(0.0).sqrt());
    }
    Ok(f)
}

/// Draws `A`, `B`, `C` with i.i.d. standard-normal entries, resampling until
/// the rank conditions hold. `Omega_w` is left at zero.
pub fn random_system<R: Rng + ?Sized>(
    order: usize,
    rng: &mut R,
    max_attempts: usize,
) -> Result<LtiSystem> {
    random_system_from(order, max_attempts, || {
        let a = Matrix::from_fn(order, order, |_, _| rng.sample(StandardNormal));
        let b = Matrix::from_fn(order, 1, |_, _| rng.sample(StandardNormal));
        let c = Matrix::from_fn(1, order, |_, _| rng.sample(StandardNormal));
        (a, b, c)
    })
}

/// Rejection sampler behind [`random_system`] with a caller-supplied draw.
pub fn random_system_from<F>(order: usize, max_attempts: usize, mut draw: F) -> Result<LtiSystem>
where
    F: FnMut() -> (Matrix, Matrix, Matrix),
{
    if order == 0 {
        return Err(Error::Dimension("system order must be at least 1".into()));
    }
    for _ in 0..max_attempts {
        let (a, b, c) = draw();
        let sys = LtiSystem::new(a, b, c)?;
        if sys.rank_conditions_hold() {
            return Ok(sys);
        }
    }
    Err(Error::Generation { attempts: max_attempts })
}

/// Simulates from `x_0 = 0` with fresh process noise.
pub fn simulate<R: Rng + ?Sized>(sys: &LtiSystem, u: &Vector, rng: &mut R) -> Result<Trajectory> {
    let w = sys.draw_process_noise(u.len(), rng);
    simulate_with_noise(sys, u, &w)
}

/// Deterministic simulation given the realized noise sequence `w_0..w_{T-1}`.
pub fn simulate_with_noise(sys: &LtiSystem, u: &Vector, w: &[Vector]) -> Result<Trajectory> {
    let horizon = u.len();
    if horizon == 0 {
        return Err(Error::Dimension("horizon must be at least 1".into()));
    }
    if w.len() != horizon || w.iter().any(|wt| wt.len() != sys.order()) {
        return Err(Error::Dimension("noise sequence does not match horizon/order".into()));
    }
    let n = sys.order();
    let b = sys.b.column(0);
    let c = sys.c.row(0);
    let mut x = Vector::zeros(n);
    // noise-only state: v_t = C xi_t with xi driven by w alone
    let mut xi = Vector::zeros(n);
    let mut y = Vector::zeros(horizon);
    let mut v = Vector::zeros(horizon);
    for t in 0..horizon {
        x = &sys.a * &x + b * u[t] + &w[t];
        xi = &sys.a * &xi + &w[t];
        y[t] = c.dot(&x.transpose());
        v[t] = c.dot(&xi.transpose());
    }
    Ok(Trajectory { u: u.clone(), y, v })
}

/// Markov parameters `CB, CAB, ..., CA^{T-1}B`.
pub fn markov_parameters(sys: &LtiSystem, horizon: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(horizon);
    let mut ab = sys.b.clone();
    for _ in 0..horizon {
        out.push((&sys.c * &ab)[(0, 0)]);
        ab = &sys.a * ab;
    }
    out
}

/// Lower-triangular Toeplitz input-output map `G` over a horizon.
pub fn toeplitz_g(sys: &LtiSystem, horizon: usize) -> Matrix {
    lower_toeplitz(&markov_parameters(sys, horizon))
}

/// Noise-to-output map `G'` (`T x nT`): block `(i, j)` is `C A^{i-j}` for `i >= j`.
pub fn toeplitz_g_prime(sys: &LtiSystem, horizon: usize) -> Matrix {
    let n = sys.order();
    let obs = extended_observability(sys, horizon);
    let mut g = Matrix::zeros(horizon, n * horizon);
    for i in 0..horizon {
        for j in 0..=i {
            g.view_mut((i, j * n), (1, n)).copy_from(&obs.row(i - j));
        }
    }
    g
}

/// `O_L = [C; CA; ...; CA^{L-1}]`.
pub fn extended_observability(sys: &LtiSystem, depth: usize) -> Matrix {
    let n = sys.order();
    let mut obs = Matrix::zeros(depth, n);
    let mut row = sys.c.clone();
    for k in 0..depth {
        obs.set_row(k, &row.row(0));
        row *= &sys.a;
    }
    obs
}

/// `sum_{t<T} C A^t Omega_w A^t' C'`, the variance of the last cumulative noise term.
pub fn noise_output_variance(sys: &LtiSystem, horizon: usize) -> f64 {
    let obs = extended_observability(sys, horizon);
    obs.row_iter()
        .map(|r| (r * &sys.omega_w * r.transpose())[(0, 0)])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_half() -> LtiSystem {
        LtiSystem::scalar(0.5, 1.0, 1.0).unwrap()
    }

    #[test]
    fn random_system_passes_rank_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = random_system(3, &mut rng, 100).unwrap();
        assert_eq!(sys.order(), 3);
        assert!(sys.rank_conditions_hold());
        assert_eq!(sys.omega_w(), &Matrix::zeros(3, 3));
    }

    #[test]
    fn scalar_system_is_valid() {
        assert!(scalar_half().rank_conditions_hold());
    }

    #[test]
    fn zero_input_matrix_is_resampled() {
        let mut calls = 0;
        let sys = random_system_from(2, 10, || {
            calls += 1;
            let a = Matrix::from_row_slice(2, 2, &[0.3, 1.0, -0.2, 0.7]);
            let c = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
            let b = if calls == 1 {
                Matrix::zeros(2, 1)
            } else {
                Matrix::from_row_slice(2, 1, &[0.0, 1.0])
            };
            (a, b, c)
        })
        .unwrap();
        assert_eq!(calls, 2);
        assert!(sys.rank_conditions_hold());
    }

    #[test]
    fn exhausted_attempts_is_an_error() {
        let r = random_system_from(2, 3, || {
            (Matrix::identity(2, 2), Matrix::zeros(2, 1), Matrix::zeros(1, 2))
        });
        assert!(matches!(r, Err(Error::Generation { attempts: 3 })));
    }

    #[test]
    fn hand_iterated_scalar_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tr = simulate(&scalar_half(), &Vector::from_vec(vec![1.0, 0.0]), &mut rng).unwrap();
        assert_relative_eq!(tr.y, Vector::from_vec(vec![1.0, 0.5]), epsilon = 1e-15);
        assert_eq!(tr.v, Vector::zeros(2));
    }

    #[test]
    fn zero_input_zero_noise_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sys = random_system(3, &mut rng, 100).unwrap();
        let tr = simulate(&sys, &Vector::zeros(6), &mut rng).unwrap();
        assert_eq!(tr.y, Vector::zeros(6));
    }

    #[test]
    fn recorded_noise_reproduces_v() {
        let sys = scalar_half().with_isotropic_noise(1.0).unwrap();
        let u = Vector::from_vec(vec![0.3, -1.0, 2.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let tr = simulate(&sys, &u, &mut rng).unwrap();
        let mut replay = ChaCha8Rng::seed_from_u64(42);
        let w = sys.draw_process_noise(4, &mut replay);
        let w_stacked = Vector::from_iterator(4, w.iter().map(|wt| wt[0]));
        let v = toeplitz_g_prime(&sys, 4) * w_stacked;
        assert_relative_eq!(tr.v, v, epsilon = 1e-12);
        assert_relative_eq!(&tr.y - toeplitz_g(&sys, 4) * &u, v, epsilon = 1e-12);
    }

    #[test]
    fn toeplitz_g_cases() {
        let g = toeplitz_g(&scalar_half(), 3);
        assert_relative_eq!(
            g.column(0).into_owned(),
            Vector::from_vec(vec![1.0, 0.5, 0.25]),
            epsilon = 1e-15
        );
        let zero_b = LtiSystem::scalar(0.5, 0.0, 1.0).unwrap();
        assert_eq!(toeplitz_g(&zero_b, 3), Matrix::zeros(3, 3));
        let sys = LtiSystem::scalar(0.9, 2.0, 3.0).unwrap();
        assert_eq!(toeplitz_g(&sys, 1), Matrix::from_element(1, 1, 6.0));
    }

    #[test]
    fn toeplitz_g_prime_cases() {
        let gp = toeplitz_g_prime(&scalar_half(), 2);
        assert_relative_eq!(gp, Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 1.0]), epsilon = 1e-15);
        let zero_c = LtiSystem::scalar(0.5, 1.0, 0.0).unwrap();
        assert_eq!(toeplitz_g_prime(&zero_c, 3), Matrix::zeros(3, 3));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sys = random_system(3, &mut rng, 100).unwrap();
        assert_eq!(toeplitz_g_prime(&sys, 1), sys.c().clone());
    }

    #[test]
    fn extended_observability_cases() {
        let o = extended_observability(&scalar_half(), 3);
        assert_relative_eq!(o, Matrix::from_row_slice(3, 1, &[1.0, 0.5, 0.25]), epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sys = random_system(2, &mut rng, 100).unwrap();
        assert_eq!(extended_observability(&sys, 1), sys.c().clone());
        let zero_c = LtiSystem::scalar(0.5, 1.0, 0.0).unwrap();
        assert_eq!(extended_observability(&zero_c, 4), Matrix::zeros(4, 1));
    }

    #[test]
    fn noise_output_variance_cases() {
        let sys = scalar_half().with_isotropic_noise(1.0).unwrap();
        assert_relative_eq!(noise_output_variance(&sys, 2), 1.25, epsilon = 1e-15);
        assert_eq!(noise_output_variance(&scalar_half(), 4), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sys = random_system(3, &mut rng, 100)
            .unwrap()
            .with_isotropic_noise(0.75)
            .unwrap();
        let c = sys.c();
        let single = (c * sys.omega_w() * c.transpose())[(0, 0)];
        assert_relative_eq!(noise_output_variance(&sys, 1), single, epsilon = 1e-14);
    }

    #[test]
    fn singular_psd_noise_is_accepted_and_indefinite_rejected() {
        let sys = random_system(2, &mut ChaCha8Rng::seed_from_u64(2), 100).unwrap();
        let rank_one = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let noisy = sys.clone().with_process_noise(rank_one.clone()).unwrap();
        let w = noisy.draw_process_noise(1, &mut ChaCha8Rng::seed_from_u64(0));
        assert_relative_eq!(w[0][0], w[0][1], epsilon = 1e-12);
        let indefinite = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            sys.with_process_noise(indefinite),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn spectral_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sys = random_system(3, &mut rng, 100).unwrap().rescaled_to_spectral_radius(0.9);
        assert_relative_eq!(sys.spectral_radius(), 0.9, epsilon = 1e-10);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let r = LtiSystem::new(Matrix::zeros(2, 2), Matrix::zeros(1, 1), Matrix::zeros(1, 2));
        assert!(matches!(r, Err(Error::Dimension(_))));
    }
}
