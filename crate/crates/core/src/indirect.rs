//! Indirect design: kernel (delay-operator) identification followed by a
//! certainty-equivalent input.
//!
//! A SISO kernel model of lag `L` is a pair of coefficient sequences
//! `m = (m_1, ..., m_L)`, `n = (n_1, ..., n_L)` with `m_1 = 1` and `n_L = 0`
//! such that every noise-free behavior satisfies
//!
//! ```text
//! sum_{tau=1..L} m_tau y_{t-tau+1} + sum_{tau=1..L} n_tau u_{t-tau} = 0.
//! ```
//!
//! Stacking this recurrence over a horizon gives `M y + N u = 0` with `M`, `N`
//! lower-triangular Toeplitz, hence `G = -M^{-1} N`.
//!
//! Identification minimizes the sample second moment of the stacked Hankel
//! windows subject to the two normalizations. Fixing `m_1 = 1` and `n_L = 0`
//! turns this into a one-step-ahead regression of the newest output in each
//! window on the remaining `2L - 2` window entries, solved as ordinary least
//! squares (minimum norm when the regressors are rank deficient).

use crate::direct::BehaviorDataset;
use crate::error::{Error, Result};
use crate::lti::{markov_parameters, LtiSystem};
use crate::matops::{hankel, least_squares_min_norm, lower_toeplitz, Matrix, Vector};
use crate::task::{certainty_equivalent_input, ControlTask};

#[derive(Clone, Debug, PartialEq)]
pub struct KernelModel {
    m: Vec<f64>,
    n: Vec<f64>,
}

impl KernelModel {
    pub fn new(m: Vec<f64>, n: Vec<f64>) -> Result<Self> {
        if m.is_empty() || m.len() != n.len() {
            return Err(Error::Dimension(format!(
                "kernel coefficient lengths {} and {} must match and be non-zero",
                m.len(),
                n.len()
            )));
        }
        if m[0] != 1.0 || n[n.len() - 1] != 0.0 {
            return Err(Error::Dimension(
                "kernel model needs m_1 = 1 and n_L = 0".into(),
            ));
        }
        Ok(KernelModel { m, n })
    }

    pub fn lag(&self) -> usize {
        self.m.len()
    }

    /// `(m_1, ..., m_L)`
    pub fn m(&self) -> &[f64] {
        &self.m
    }

    /// `(n_1, ..., n_L)`
    pub fn n(&self) -> &[f64] {
        &self.n
    }

    /// Parameters in Hankel-window order `(n_L, ..., n_1, m_L, ..., m_1)`.
    pub fn window_parameters(&self) -> Vector {
        Vector::from_iterator(
            2 * self.lag(),
            self.n.iter().rev().chain(self.m.iter().rev()).copied(),
        )
    }
}

/// Length-`L` windows of every experiment, side by side.
#[derive(Clone, Debug)]
pub struct HankelStack {
    pub hu: Matrix,
    pub hy: Matrix,
}

impl HankelStack {
    pub fn depth(&self) -> usize {
        self.hu.nrows()
    }

    /// Number of windows, `N (T - L + 1)`.
    pub fn windows(&self) -> usize {
        self.hu.ncols()
    }

    /// `(1/Ntilde) [HU; HY][HU; HY]'`
    pub fn second_moment(&self) -> Matrix {
        let l = self.depth();
        let mut stacked = Matrix::zeros(2 * l, self.windows());
        stacked.rows_mut(0, l).copy_from(&self.hu);
        stacked.rows_mut(l, l).copy_from(&self.hy);
        &stacked * stacked.transpose() / self.windows() as f64
    }

    /// Quadratic form of the second moment at window-ordered parameters.
    pub fn objective(&self, window_params: &Vector) -> f64 {
        (window_params.transpose() * self.second_moment() * window_params)[(0, 0)]
    }
}

pub fn build_hankel_stack(data: &BehaviorDataset, lag: usize) -> Result<HankelStack> {
    let horizon = data.horizon();
    if lag == 0 || lag > horizon {
        return Err(Error::Dimension(format!(
            "lag {lag} outside 1..={horizon}"
        )));
    }
    let per = horizon - lag + 1;
    let total = data.experiments() * per;
    let mut hu = Matrix::zeros(lag, total);
    let mut hy = Matrix::zeros(lag, total);
    for k in 0..data.experiments() {
        let u: Vec<f64> = data.u().column(k).iter().copied().collect();
        let y: Vec<f64> = data.y().column(k).iter().copied().collect();
        hu.columns_mut(k * per, per).copy_from(&hankel(&u, lag)?);
        hy.columns_mut(k * per, per).copy_from(&hankel(&y, lag)?);
    }
    Ok(HankelStack { hu, hy })
}

#[derive(Clone, Debug)]
pub struct Identification {
    pub model: KernelModel,
    /// Second-moment quadratic form at the solution.
    pub objective: f64,
}

/// Constrained least-squares kernel identification.
pub fn identify(stack: &HankelStack, rank_tol: f64) -> Result<Identification> {
    let lag = stack.depth();
    let windows = stack.windows();
    let free = 2 * lag - 2;
    if lag == 1 {
        let model = KernelModel::new(vec![1.0], vec![0.0])?;
        let objective = stack.objective(&model.window_parameters());
        return Ok(Identification { model, objective });
    }
    // Window entry i of hy is y_{t+1+i}; of hu is u_{t+i}. The newest output
    // (row lag-1) carries m_1 = 1; m_tau multiplies hy[lag - tau], n_tau hu[lag - tau].
    let mut regressors = Matrix::zeros(windows, free);
    let mut target = Vector::zeros(windows);
    for j in 0..windows {
        target[j] = -stack.hy[(lag - 1, j)];
        for tau in 2..=lag {
            regressors[(j, tau - 2)] = stack.hy[(lag - tau, j)];
        }
        for tau in 1..lag {
            regressors[(j, lag - 1 + tau - 1)] = stack.hu[(lag - tau, j)];
        }
    }
    let theta = least_squares_min_norm(&regressors, &target, rank_tol)?;
    let mut m = vec![1.0];
    m.extend(theta.rows(0, lag - 1).iter());
    let mut n: Vec<f64> = theta.rows(lag - 1, lag - 1).iter().copied().collect();
    n.push(0.0);
    let residual = &regressors * &theta - &target;
    let objective = if windows > 0 {
        residual.norm_squared() / windows as f64
    } else {
        0.0
    };
    Ok(Identification {
        model: KernelModel::new(m, n)?,
        objective,
    })
}

/// Monic characteristic polynomial coefficients `(1, c_1, ..., c_n)` of a
/// square matrix, by the Faddeev-LeVerrier recursion.
pub fn characteristic_polynomial(a: &Matrix) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut mk = Matrix::identity(n, n);
    for k in 1..=n {
        let am = a * &mk;
        let ck = -am.trace() / k as f64;
        coeffs.push(ck);
        mk = am + Matrix::identity(n, n) * ck;
    }
    coeffs
}

/// Exact kernel of the true system for `lag >= n + 1`.
pub fn true_kernel(sys: &LtiSystem, lag: usize) -> Result<KernelModel> {
    let order = sys.order();
    if lag < order + 1 {
        return Err(Error::Order {
            order: lag,
            required: order + 1,
        });
    }
    let mut m = characteristic_polynomial(sys.a());
    m.resize(lag, 0.0);
    let g = markov_parameters(sys, lag);
    // first column of -M_L G_L; entries at index >= n+1 vanish by Cayley-Hamilton
    let mut n: Vec<f64> = (0..lag)
        .map(|k| -(0..=k).map(|j| m[j] * g[k - j]).sum::<f64>())
        .collect();
    n[lag - 1] = 0.0;
    KernelModel::new(m, n)
}

/// Input-output map `-M^{-1} N` of a kernel model over `horizon >= lag` steps.
pub fn assemble_g(model: &KernelModel, horizon: usize) -> Result<Matrix> {
    let lag = model.lag();
    if horizon < lag {
        return Err(Error::Dimension(format!(
            "horizon {horizon} shorter than lag {lag}"
        )));
    }
    let pad = |c: &[f64]| {
        let mut v = c.to_vec();
        v.resize(horizon, 0.0);
        v
    };
    let m = lower_toeplitz(&pad(model.m()));
    let n = lower_toeplitz(&pad(model.n()));
    let neg_n = -n;
    m.solve_lower_triangular(&neg_n)
        .ok_or_else(|| Error::Dimension("kernel M matrix is singular".into()))
}

/// Identify from `data` with lag `lag` and return the identified model.
pub fn identify_from_data(data: &BehaviorDataset, lag: usize, rank_tol: f64) -> Result<Identification> {
    identify(&build_hankel_stack(data, lag)?, rank_tol)
}

/// Identification, model assembly and certainty-equivalent input in one step.
pub fn indirect_design(
    task: &ControlTask,
    data: &BehaviorDataset,
    lag: usize,
    rank_tol: f64,
) -> Result<Vector> {
    let id = identify_from_data(data, lag, rank_tol)?;
    let g_hat = assemble_g(&id.model, task.horizon())?;
    certainty_equivalent_input(task, &g_hat)
}
