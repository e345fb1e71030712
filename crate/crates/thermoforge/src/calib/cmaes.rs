//! Covariance matrix adaptation evolution strategy (minimization), with the
//! standard rank-one/rank-mu covariance updates and cumulative step-size
//! adaptation. Constants follow the published defaults.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Default population size: `4 + floor(3 ln n)`.
pub fn default_lambda(n: usize) -> usize {
    4 + (3.0 * (n as f64).ln()).floor() as usize
}

/// Eigenvalue condition ceiling; beyond this the covariance is repaired.
const CONDITION_LIMIT: f64 = 1e14;

#[derive(Debug, Clone)]
pub struct CmaesState {
    n: usize,
    lambda: usize,
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    /// Expected norm of an n-dimensional standard normal vector.
    chi_n: f64,

    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    generation: u64,

    // Eigendecomposition of cov, refreshed in `ask`.
    eigen_basis: DMatrix<f64>,
    eigen_sqrt: DVector<f64>,
    inv_sqrt_cov: DMatrix<f64>,
    eigen_fresh: bool,
}

impl CmaesState {
    /// Starts a run at `mean0` with step size `sigma0`. `lambda` falls back
    /// to the standard default when `None`.
    pub fn new(mean0: &[f64], sigma0: f64, lambda: Option<usize>) -> Result<Self> {
        let n = mean0.len();
        if n == 0 {
            return Err(Error::Dimension("empty search space".into()));
        }
        if !(sigma0 > 0.0) {
            return Err(Error::Config("sigma0 must be positive".into()));
        }
        let lambda = lambda.unwrap_or_else(|| default_lambda(n));
        if lambda < 2 {
            return Err(Error::Config("population size must be at least 2".into()));
        }
        let mu = lambda / 2;
        let raw: Vec<f64> = (0..mu)
            .map(|i| ((mu as f64) + 0.5).ln() - ((i + 1) as f64).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let nf = n as f64;
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma =
            1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu =
            (2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff)).min(1.0 - c_1);
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

        Ok(CmaesState {
            n,
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
            mean: DVector::from_column_slice(mean0),
            sigma: sigma0,
            cov: DMatrix::identity(n, n),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            generation: 0,
            eigen_basis: DMatrix::identity(n, n),
            eigen_sqrt: DVector::from_element(n, 1.0),
            inv_sqrt_cov: DMatrix::identity(n, n),
            eigen_fresh: true,
        })
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mean(&self) -> Vec<f64> {
        self.mean.iter().copied().collect()
    }

    fn refresh_eigen(&mut self) -> Result<()> {
        if self.eigen_fresh {
            return Ok(());
        }
        let eigen = nalgebra::SymmetricEigen::new(self.cov.clone());
        let mut values = eigen.eigenvalues.clone();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::CovarianceRepair("non-finite eigenvalues".into()));
        }
        let max = values.iter().cloned().fold(f64::MIN, f64::max);
        if !(max > 0.0) {
            return Err(Error::CovarianceRepair(
                "covariance lost positive definiteness".into(),
            ));
        }
        // Repair: clamp tiny/negative eigenvalues so the condition number
        // stays below the ceiling.
        let floor = max / CONDITION_LIMIT;
        let mut repaired = false;
        for v in values.iter_mut() {
            if *v < floor {
                *v = floor;
                repaired = true;
            }
        }
        if repaired {
            let d = DMatrix::from_diagonal(&values);
            self.cov = &eigen.eigenvectors * d * eigen.eigenvectors.transpose();
        }
        self.eigen_sqrt = values.map(f64::sqrt);
        self.eigen_basis = eigen.eigenvectors;
        let inv_sqrt = DMatrix::from_diagonal(&self.eigen_sqrt.map(|s| 1.0 / s));
        self.inv_sqrt_cov = &self.eigen_basis * inv_sqrt * self.eigen_basis.transpose();
        self.eigen_fresh = true;
        Ok(())
    }

    /// Samples `lambda` candidates from `N(mean, sigma^2 C)`.
    pub fn ask(&mut self, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
        self.refresh_eigen()?;
        let mut out = Vec::with_capacity(self.lambda);
        for _ in 0..self.lambda {
            let z = DVector::from_iterator(
                self.n,
                (0..self.n).map(|_| StandardNormal.sample(rng)),
            );
            let y = &self.eigen_basis * z.component_mul(&self.eigen_sqrt);
            let x = &self.mean + self.sigma * y;
            out.push(x.iter().copied().collect());
        }
        Ok(out)
    }

    /// Rank-based update from the evaluated candidates. Selection depends
    /// only on the fitness ordering, so shifting all fitnesses by a constant
    /// leaves the trajectory unchanged.
    pub fn tell(&mut self, candidates: &[Vec<f64>], fitnesses: &[f64]) -> Result<()> {
        if candidates.len() != self.lambda || fitnesses.len() != self.lambda {
            return Err(Error::Dimension(format!(
                "tell expects {} candidates/fitnesses, got {}/{}",
                self.lambda,
                candidates.len(),
                fitnesses.len()
            )));
        }
        if fitnesses.iter().any(|f| !f.is_finite()) {
            return Err(Error::NonFinite("CMA-ES fitness".into()));
        }

        let mut idx: Vec<usize> = (0..self.lambda).collect();
        idx.sort_by(|&a, &b| fitnesses[a].partial_cmp(&fitnesses[b]).unwrap());

        // y_i = (x_i - m) / sigma for the mu best.
        let ys: Vec<DVector<f64>> = idx[..self.mu]
            .iter()
            .map(|&i| {
                (DVector::from_column_slice(&candidates[i]) - &self.mean) / self.sigma
            })
            .collect();
        let mut y_w = DVector::zeros(self.n);
        for (w, y) in self.weights.iter().zip(&ys) {
            y_w += *w * y;
        }

        self.mean += self.sigma * &y_w;

        self.p_sigma = (1.0 - self.c_sigma) * &self.p_sigma
            + (self.c_sigma * (2.0 - self.c_sigma) * self.mu_eff).sqrt()
                * (&self.inv_sqrt_cov * &y_w);

        let ps_norm = self.p_sigma.norm();
        let decay = 1.0 - (1.0 - self.c_sigma).powi(2 * (self.generation as i32 + 1));
        let h_sigma = if ps_norm / decay.sqrt()
            < (1.4 + 2.0 / (self.n as f64 + 1.0)) * self.chi_n
        {
            1.0
        } else {
            0.0
        };

        self.p_c = (1.0 - self.c_c) * &self.p_c
            + h_sigma * (self.c_c * (2.0 - self.c_c) * self.mu_eff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::zeros(self.n, self.n);
        for (w, y) in self.weights.iter().zip(&ys) {
            rank_mu += *w * y * y.transpose();
        }
        let delta_h = (1.0 - h_sigma) * self.c_c * (2.0 - self.c_c);
        self.cov = (1.0 - self.c_1 - self.c_mu) * &self.cov
            + self.c_1 * (&self.p_c * self.p_c.transpose() + delta_h * &self.cov)
            + self.c_mu * rank_mu;
        // Symmetrize against floating-point drift.
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;

        self.sigma *= ((self.c_sigma / self.d_sigma) * (ps_norm / self.chi_n - 1.0)).exp();
        if !self.sigma.is_finite() {
            return Err(Error::NonFinite("CMA-ES step size".into()));
        }

        self.generation += 1;
        self.eigen_fresh = false;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stage_rng, substream, Stream};

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn rosenbrock(x: &[f64]) -> f64 {
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    }

    fn minimize(
        f: impl Fn(&[f64]) -> f64,
        mean0: &[f64],
        sigma0: f64,
        max_evals: usize,
        rng: &mut ChaCha8Rng,
    ) -> (f64, usize, Vec<f64>) {
        let mut state = CmaesState::new(mean0, sigma0, None).unwrap();
        let mut best = f64::INFINITY;
        let mut evals = 0;
        let mut trace = Vec::new();
        while evals + state.lambda() <= max_evals {
            let candidates = state.ask(rng).unwrap();
            let fitnesses: Vec<f64> = candidates.iter().map(|c| f(c)).collect();
            evals += candidates.len();
            for v in &fitnesses {
                best = best.min(*v);
            }
            trace.push(best);
            state.tell(&candidates, &fitnesses).unwrap();
        }
        (best, evals, trace)
    }

    #[test]
    fn default_population_size() {
        assert_eq!(default_lambda(2), 6);
        assert_eq!(default_lambda(5), 8);
        assert_eq!(default_lambda(17), 12);
    }

    #[test]
    fn solves_sphere_2d() {
        let mut rng = stage_rng(101, Stream::Calibration);
        let (best, evals, _) = minimize(sphere, &[3.0, 3.0], 1.0, 1500, &mut rng);
        assert!(best < 1e-10, "sphere best {best} after {evals} evals");
    }

    #[test]
    fn solves_rosenbrock_5d() {
        let mut rng = stage_rng(7, Stream::Calibration);
        let (best, evals, _) = minimize(rosenbrock, &[0.0; 5], 0.5, 30_000, &mut rng);
        assert!(best < 1e-6, "rosenbrock best {best} after {evals} evals");
    }

    #[test]
    fn best_so_far_trace_is_monotone() {
        for seed in 0..20 {
            let mut rng = substream(55, Stream::Calibration, seed);
            let (_, _, trace) = minimize(sphere, &[2.0, -1.0, 0.5], 0.7, 600, &mut rng);
            for w in trace.windows(2) {
                assert!(w[1] <= w[0]);
            }
        }
    }

    #[test]
    fn fitness_shift_leaves_trajectory_identical() {
        let run = |shift: f64| -> Vec<f64> {
            let mut rng = stage_rng(13, Stream::Calibration);
            let mut state = CmaesState::new(&[1.0, -2.0, 0.5], 0.5, None).unwrap();
            for _ in 0..40 {
                let candidates = state.ask(&mut rng).unwrap();
                let fitnesses: Vec<f64> =
                    candidates.iter().map(|c| sphere(c) + shift).collect();
                state.tell(&candidates, &fitnesses).unwrap();
            }
            state.mean()
        };
        let base = run(0.0);
        let shifted = run(1234.5);
        assert_eq!(base, shifted);
    }

    #[test]
    fn rejects_non_finite_fitness() {
        let mut rng = stage_rng(1, Stream::Calibration);
        let mut state = CmaesState::new(&[0.0, 0.0], 0.5, None).unwrap();
        let candidates = state.ask(&mut rng).unwrap();
        let mut fitnesses: Vec<f64> = candidates.iter().map(|c| sphere(c)).collect();
        fitnesses[0] = f64::NAN;
        assert!(state.tell(&candidates, &fitnesses).is_err());
    }
}
