//! Finite-horizon quadratic tracking task and certainty-equivalent designs.
//!
//! The cost of an input/output pair is
//! `F(u, y) = u' Q u + (y - y_ref)' R (y - y_ref)` with diagonal, strictly
//! positive stage weights. For any input-output map `G` the minimizer of
//! `F(u, G u)` solves `(Q + G' R G) u = G' R y_ref`; plugging in an estimate
//! of `G` yields the certainty-equivalent input.

use rand::Rng;

use crate::error::{Error, Result};
use crate::lti::{toeplitz_g_prime, LtiSystem};
use crate::matops::{solve_spd, symmetric_eigen_extremes, Matrix, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct ControlTask {
    q: Vec<f64>,
    r: Vec<f64>,
    y_ref: f64,
}

impl ControlTask {
    pub fn new(q: Vec<f64>, r: Vec<f64>, y_ref: f64) -> Result<Self> {
        if q.is_empty() || q.len() != r.len() {
            return Err(Error::Dimension(format!(
                "stage weights must have equal non-zero length, got {} and {}",
                q.len(),
                r.len()
            )));
        }
        if let Some(bad) = q.iter().chain(&r).find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Config {
                key: "weights".into(),
                reason: format!("stage weights must be finite and > 0, got {bad}"),
            });
        }
        if !y_ref.is_finite() {
            return Err(Error::Config {
                key: "y_ref".into(),
                reason: "must be finite".into(),
            });
        }
        Ok(ControlTask { q, r, y_ref })
    }

    /// Time-invariant weights over `horizon` steps.
    pub fn constant(horizon: usize, q: f64, r: f64, y_ref: f64) -> Result<Self> {
        Self::new(vec![q; horizon], vec![r; horizon], y_ref)
    }

    pub fn horizon(&self) -> usize {
        self.q.len()
    }
    pub fn q(&self) -> &[f64] {
        &self.q
    }
    pub fn r(&self) -> &[f64] {
        &self.r
    }
    pub fn y_ref(&self) -> f64 {
        self.y_ref
    }

    /// Stacked reference `(y_ref, ..., y_ref)`.
    pub fn reference(&self) -> Vector {
        Vector::from_element(self.horizon(), self.y_ref)
    }

    fn check_square(&self, g: &Matrix) -> Result<()> {
        let t = self.horizon();
        if g.shape() != (t, t) {
            return Err(Error::Dimension(format!(
                "model must be {t}x{t}, got {:?}",
                g.shape()
            )));
        }
        Ok(())
    }

    fn check_len(&self, what: &str, v: &Vector) -> Result<()> {
        if v.len() != self.horizon() {
            return Err(Error::Dimension(format!(
                "{what} has length {}, horizon is {}",
                v.len(),
                self.horizon()
            )));
        }
        Ok(())
    }

    /// `Q + G' R G`.
    pub fn hessian(&self, g: &Matrix) -> Result<Matrix> {
        self.check_square(g)?;
        let mut rg = g.clone();
        for (i, &ri) in self.r.iter().enumerate() {
            rg.row_mut(i).scale_mut(ri);
        }
        let mut h = g.transpose() * rg;
        for (i, &qi) in self.q.iter().enumerate() {
            h[(i, i)] += qi;
        }
        Ok(h)
    }

    /// `G' R y_ref`.
    pub fn linear_term(&self, g: &Matrix) -> Result<Vector> {
        self.check_square(g)?;
        let r_yref = Vector::from_iterator(self.horizon(), self.r.iter().map(|ri| ri * self.y_ref));
        Ok(g.tr_mul(&r_yref))
    }
}

/// Quadratic task cost of an input/output pair.
pub fn cost(task: &ControlTask, u: &Vector, y: &Vector) -> Result<f64> {
    task.check_len("input", u)?;
    task.check_len("output", y)?;
    let input: f64 = task.q.iter().zip(u.iter()).map(|(q, u)| q * u * u).sum();
    let output: f64 = task
        .r
        .iter()
        .zip(y.iter())
        .map(|(r, y)| {
            let e = y - task.y_ref;
            r * e * e
        })
        .sum();
    Ok(input + output)
}

/// Model-based optimal input for the true map `g`.
pub fn optimal_input(task: &ControlTask, g: &Matrix) -> Result<Vector> {
    certainty_equivalent_input(task, g)
}

/// Minimizer of `F(u, g_hat u)`: `(Q + g_hat' R g_hat)^{-1} g_hat' R y_ref`.
pub fn certainty_equivalent_input(task: &ControlTask, g_hat: &Matrix) -> Result<Vector> {
    let h = task.hessian(g_hat)?;
    let rhs = task.linear_term(g_hat)?;
    solve_spd(&h, &rhs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignOutcome {
    pub u_hat: Vector,
    pub gap: f64,
    pub distance_to_optimum: f64,
}

/// Excess true cost of `u_hat` over the model-based optimum, both evaluated with the true `g`.
///
/// Negative values down to `-1e-12 * max(1, F(P u*))` are floating-point
/// cancellation and are clamped to zero; anything lower is reported.
pub fn suboptimality_gap(task: &ControlTask, g: &Matrix, u_hat: &Vector) -> Result<DesignOutcome> {
    task.check_len("u_hat", u_hat)?;
    let u_star = optimal_input(task, g)?;
    let f_star = cost(task, &u_star, &(g * &u_star))?;
    let f_hat = cost(task, u_hat, &(g * u_hat))?;
    let mut gap = f_hat - f_star;
    if !gap.is_finite() {
        return Err(Error::NonFiniteResult {
            context: "suboptimality gap".into(),
        });
    }
    if gap < 0.0 {
        if gap < -1e-12 * f_star.max(1.0) {
            return Err(Error::NegativeGap { gap });
        }
        gap = 0.0;
    }
    Ok(DesignOutcome {
        u_hat: u_hat.clone(),
        gap,
        distance_to_optimum: (u_hat - &u_star).norm(),
    })
}

/// Strong-convexity and smoothness constants `(lambda_min, lambda_max)` of `Q + G' R G`.
pub fn convexity_constants(task: &ControlTask, g: &Matrix) -> Result<(f64, f64)> {
    Ok(symmetric_eigen_extremes(&task.hessian(g)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloCost {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

/// Sample estimate of `E_v[F(u, G u + v)]` with `v = G' w` drawn from the system's noise.
pub fn montecarlo_expected_cost<R: Rng + ?Sized>(
    task: &ControlTask,
    sys: &LtiSystem,
    u: &Vector,
    trials: usize,
    rng: &mut R,
) -> Result<MonteCarloCost> {
    if trials == 0 {
        return Err(Error::Config {
            key: "trials".into(),
            reason: "must be at least 1".into(),
        });
    }
    let horizon = task.horizon();
    task.check_len("input", u)?;
    let g = crate::lti::toeplitz_g(sys, horizon);
    let g_prime = toeplitz_g_prime(sys, horizon);
    let mean_output = &g * u;
    let n = sys.order();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut w_stacked = Vector::zeros(n * horizon);
    for _ in 0..trials {
        for (t, wt) in sys.draw_process_noise(horizon, rng).into_iter().enumerate() {
            w_stacked.rows_mut(t * n, n).copy_from(&wt);
        }
        let y = &mean_output + &g_prime * &w_stacked;
        let f = cost(task, u, &y)?;
        sum += f;
        sum_sq += f * f;
    }
    let k = trials as f64;
    let mean = sum / k;
    let var = if trials > 1 {
        ((sum_sq - k * mean * mean) / (k - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(MonteCarloCost {
        mean,
        std_error: (var / k).sqrt(),
        trials,
    })
}
