//! Path simulation of the finite-type superprocess.
//!
//! The state is the mass vector `X_t` over types. Between observations it is
//! advanced by one of two schemes:
//!
//! - `strang_exact`: half-step migration (exact matrix exponential), an exact
//!   per-type branching transition (Poisson mixture of Gammas), a compound
//!   Poisson jump sub-step, and a closing half-step migration.
//! - `euler_full_truncation`: Euler–Maruyama with coefficients evaluated at
//!   the positive part of the state, absorbed at zero.
//!
//! Supercritical paths grow exponentially, and once the total mass passes
//! [`SimConfig::gaussian_switch_mass`] the type coordinates can no longer
//! resolve fluctuations of order `sqrt(mass)`. From that point a path is
//! carried in eigen-coordinates `Z_p = <phi_p, X>` and advanced by a Gaussian
//! step whose conditional mean and covariance are exact for any step size.

mod laplace;
mod step;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FiniteTypeModel;
use crate::par::Execution;
use crate::spectral::SpectralDecomposition;

pub use laplace::{extinction_probability, laplace_functional, ExtinctionEstimate};
pub use step::{step_euler, step_gaussian, step_strang, Precomputed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    StrangExact,
    EulerFullTruncation,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strang_exact" => Ok(Scheme::StrangExact),
            "euler_full_truncation" => Ok(Scheme::EulerFullTruncation),
            other => Err(Error::Config(format!("unknown scheme {other:?}"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::StrangExact => "strang_exact",
            Scheme::EulerFullTruncation => "euler_full_truncation",
        })
    }
}

pub const DEFAULT_STEP: f64 = 0.05;
pub const DEFAULT_SWITCH_MASS: f64 = 1e9;
pub const DEFAULT_MASS_CAP: f64 = 1e250;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scheme: Scheme,
    pub h: f64,
    pub horizon: f64,
    /// Strictly increasing observation times in `[0, horizon]`.
    pub grid: Vec<f64>,
    pub seed: u64,
    pub mu0: Vec<f64>,
    /// Total mass above which a path continues in eigen-coordinates.
    pub gaussian_switch_mass: f64,
    /// Any coordinate beyond this magnitude aborts with `SimulationDiverged`.
    pub mass_cap: f64,
}

impl SimConfig {
    pub fn new(scheme: Scheme, h: f64, grid: Vec<f64>, seed: u64, mu0: Vec<f64>) -> Self {
        let horizon = grid.last().copied().unwrap_or(0.0);
        SimConfig {
            scheme,
            h,
            horizon,
            grid,
            seed,
            mu0,
            gaussian_switch_mass: DEFAULT_SWITCH_MASS,
            mass_cap: DEFAULT_MASS_CAP,
        }
    }

    fn steps_for(&self, t: f64) -> Result<usize> {
        let k = (t / self.h).round();
        if (t - k * self.h).abs() > 1e-12 * t.max(1.0) {
            return Err(Error::Config(format!(
                "time {t} is not a multiple of the step {}",
                self.h
            )));
        }
        Ok(k as usize)
    }

    pub fn validate(&self, n_types: usize) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!("step must be positive, got {}", self.h)));
        }
        if self.mu0.len() != n_types || self.mu0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("mu0 must be a nonnegative vector over types".into()));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("grid must be strictly increasing".into()));
        }
        if self.grid.first().is_some_and(|&t| t < 0.0) {
            return Err(Error::Config("grid times must be nonnegative".into()));
        }
        if self.grid.last().is_some_and(|&t| t > self.horizon + 1e-12) {
            return Err(Error::Config("horizon is before the last grid time".into()));
        }
        for &t in &self.grid {
            self.steps_for(t)?;
        }
        self.steps_for(self.horizon)?;
        Ok(())
    }
}

/// Observations of one replica at the configured grid times.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid {
    pub n_types: usize,
    /// `mass[obs * n_types + i]`.
    pub mass: Vec<f64>,
    /// `eigen[obs * n_types + p] = <phi_p, X_t>`.
    pub eigen: Vec<f64>,
    pub extinct: Vec<bool>,
    /// Time at which the path moved to eigen-coordinates, if it did.
    pub gaussian_from: Option<f64>,
}

impl PathGrid {
    pub fn mass_at(&self, obs: usize) -> &[f64] {
        &self.mass[obs * self.n_types..(obs + 1) * self.n_types]
    }

    pub fn eigen_at(&self, obs: usize) -> &[f64] {
        &self.eigen[obs * self.n_types..(obs + 1) * self.n_types]
    }
}

/// Counter-based stream for one replica: the ChaCha key comes from the master
/// seed and the stream id is the replica index.
pub fn replica_rng(seed: u64, replica_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica_id);
    rng
}

/// A model, its spectrum and a validated configuration, with the per-step
/// constants precomputed.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    pub decomp: &'a SpectralDecomposition,
    pub cfg: SimConfig,
    pre: Precomputed,
    obs_steps: Vec<usize>,
    total_steps: usize,
}

enum State {
    Mass(Vec<f64>),
    Eigen(Vec<f64>),
}

impl<'a> Simulator<'a> {
    pub fn new(
        model: &FiniteTypeModel,
        decomp: &'a SpectralDecomposition,
        cfg: SimConfig,
    ) -> Result<Self> {
        cfg.validate(model.n_types())?;
        let obs_steps = cfg
            .grid
            .iter()
            .map(|&t| cfg.steps_for(t))
            .collect::<Result<Vec<_>>>()?;
        let total_steps = cfg.steps_for(cfg.horizon)?;
        let pre = Precomputed::new(model, decomp, cfg.h);
        Ok(Simulator {
            decomp,
            cfg,
            pre,
            obs_steps,
            total_steps,
        })
    }

    pub fn precomputed(&self) -> &Precomputed {
        &self.pre
    }

    fn to_eigen(&self, mass: &[f64]) -> Vec<f64> {
        self.decomp
            .phis
            .iter()
            .map(|phi| phi.iter().zip(mass).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn to_mass(&self, eigen: &[f64]) -> Vec<f64> {
        let n = self.decomp.n_types();
        (0..n)
            .map(|i| {
                self.decomp.m[i]
                    * eigen
                        .iter()
                        .zip(&self.decomp.phis)
                        .map(|(z, phi)| z * phi[i])
                        .sum::<f64>()
            })
            .collect()
    }

    fn check_cap(&self, values: &[f64], step: usize) -> Result<()> {
        if values
            .iter()
            .any(|v| !v.is_finite() || v.abs() > self.cfg.mass_cap)
        {
            return Err(Error::SimulationDiverged(format!(
                "coordinate beyond {:e} at t = {}",
                self.cfg.mass_cap,
                step as f64 * self.cfg.h
            )));
        }
        Ok(())
    }

    /// Simulate replica `replica_id` on its own random stream.
    pub fn path(&self, replica_id: u64) -> Result<PathGrid> {
        let n = self.decomp.n_types();
        let mut rng = replica_rng(self.cfg.seed, replica_id);
        let n_obs = self.obs_steps.len();
        let mut out = PathGrid {
            n_types: n,
            mass: Vec::with_capacity(n_obs * n),
            eigen: Vec::with_capacity(n_obs * n),
            extinct: Vec::with_capacity(n_obs),
            gaussian_from: None,
        };
        let mut state = State::Mass(self.cfg.mu0.clone());
        let mut next_obs = 0;
        let mut step = 0;
        loop {
            while next_obs < n_obs && self.obs_steps[next_obs] == step {
                match &state {
                    State::Mass(x) => {
                        out.mass.extend_from_slice(x);
                        out.eigen.extend(self.to_eigen(x));
                        out.extinct.push(x.iter().all(|&v| v == 0.0));
                    }
                    State::Eigen(z) => {
                        out.mass.extend(self.to_mass(z));
                        out.eigen.extend_from_slice(z);
                        out.extinct.push(false);
                    }
                }
                next_obs += 1;
            }
            if step >= self.total_steps || next_obs >= n_obs {
                break;
            }
            match &mut state {
                State::Mass(x) => {
                    if x.iter().all(|&v| v == 0.0) {
                        // absorbed: every remaining observation is the zero state
                        while next_obs < n_obs {
                            out.mass.extend(std::iter::repeat_n(0.0, n));
                            out.eigen.extend(std::iter::repeat_n(0.0, n));
                            out.extinct.push(true);
                            next_obs += 1;
                        }
                        break;
                    }
                    if x.iter().sum::<f64>() >= self.cfg.gaussian_switch_mass {
                        out.gaussian_from = Some(step as f64 * self.cfg.h);
                        state = State::Eigen(self.to_eigen(x));
                        continue;
                    }
                    match self.cfg.scheme {
                        Scheme::StrangExact => step_strang(x, &self.pre, &mut rng),
                        Scheme::EulerFullTruncation => step_euler(x, &self.pre, &mut rng),
                    }
                    self.check_cap(x, step + 1)?;
                }
                State::Eigen(z) => {
                    step_gaussian(z, &self.pre, &mut rng);
                    self.check_cap(z, step + 1)?;
                }
            }
            step += 1;
        }
        Ok(out)
    }
}

pub fn simulate_path(
    model: &FiniteTypeModel,
    decomp: &SpectralDecomposition,
    cfg: &SimConfig,
    replica_id: u64,
) -> Result<PathGrid> {
    Simulator::new(model, decomp, cfg.clone())?.path(replica_id)
}

/// Replicas `0..replicas` of one configuration.
#[derive(Debug, Clone)]
pub struct ReplicaEnsemble {
    pub times: Vec<f64>,
    pub n_types: usize,
    pub seed: u64,
    pub paths: Vec<PathGrid>,
}

impl ReplicaEnsemble {
    pub fn replicas(&self) -> usize {
        self.paths.len()
    }

    /// Index of an observation time, matched to within `1e-9`.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
    }
}

pub fn simulate_ensemble(
    model: &FiniteTypeModel,
    decomp: &SpectralDecomposition,
    cfg: &SimConfig,
    replicas: usize,
    exec: Execution,
) -> Result<ReplicaEnsemble> {
    let sim = Simulator::new(model, decomp, cfg.clone())?;
    let paths = exec.try_map_indexed(replicas, |r| sim.path(r as u64))?;
    Ok(ReplicaEnsemble {
        times: cfg.grid.clone(),
        n_types: model.n_types(),
        seed: cfg.seed,
        paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference;
    use crate::spectral::decompose;
    use crate::stats::{batch_estimate, variance_estimate};

    fn cfg(grid: Vec<f64>, mu0: Vec<f64>) -> SimConfig {
        SimConfig::new(Scheme::StrangExact, 0.05, grid, 11, mu0)
    }

    #[test]
    fn zero_initial_mass_stays_extinct() {
        let model = reference::sym2();
        let d = decompose(&model).unwrap();
        let path = simulate_path(&model, &d, &cfg(vec![0.0, 1.0, 2.0], vec![0.0, 0.0]), 0).unwrap();
        assert!(path.mass.iter().all(|&v| v == 0.0));
        assert_eq!(path.extinct, vec![true, true, true]);
    }

    #[test]
    fn noiseless_model_follows_the_mean_ode() {
        let mut model = reference::sym2();
        model.beta = vec![0.0, 0.0];
        model.b = vec![0.0, 0.0];
        let d = decompose(&model).unwrap();
        let path = simulate_path(&model, &d, &cfg(vec![0.5, 1.0, 3.0], vec![1.0, 0.0]), 3).unwrap();
        for (obs, t) in [0.5f64, 1.0, 3.0].into_iter().enumerate() {
            // exp(t Q^T) delta_1 for the symmetric two-state chain
            let same = 0.5 * (1.0 + (-2.0 * t).exp());
            let x = path.mass_at(obs);
            assert!((x[0] - same).abs() < 1e-13);
            assert!((x[1] - (1.0 - same)).abs() < 1e-13);
        }
    }

    #[test]
    fn paths_are_reproducible_and_streams_differ() {
        let model = reference::sym2();
        let d = decompose(&model).unwrap();
        let c = cfg(vec![1.0, 2.0], vec![1.0, 0.0]);
        let a = simulate_path(&model, &d, &c, 5).unwrap();
        let b = simulate_path(&model, &d, &c, 5).unwrap();
        let other = simulate_path(&model, &d, &c, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.mass, other.mass);
    }

    #[test]
    fn paths_are_nonnegative_and_absorbing() {
        let model = reference::sym2();
        let d = decompose(&model).unwrap();
        for scheme in [Scheme::StrangExact, Scheme::EulerFullTruncation] {
            let mut c = cfg((1..=20).map(|k| k as f64 * 0.25).collect(), vec![0.2, 0.0]);
            c.scheme = scheme;
            c.h = 0.0125;
            for r in 0..200 {
                let p = simulate_path(&model, &d, &c, r).unwrap();
                assert!(p.mass.iter().all(|&v| v >= 0.0));
                if let Some(first) = p.extinct.iter().position(|&e| e) {
                    assert!(p.extinct[first..].iter().all(|&e| e));
                }
            }
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let model = reference::sym2();
        let d = decompose(&model).unwrap();
        let mut c = cfg(vec![0.5, 0.33], vec![1.0, 0.0]);
        assert!(matches!(simulate_path(&model, &d, &c, 0), Err(Error::Config(_))));
        c.grid = vec![0.33];
        c.horizon = 0.35;
        assert!(matches!(simulate_path(&model, &d, &c, 0), Err(Error::Config(_))));
        c.grid = vec![1.0];
        c.horizon = 1.0;
        c.h = -0.1;
        assert!(matches!(simulate_path(&model, &d, &c, 0), Err(Error::Config(_))));
    }

    #[test]
    fn mass_cap_is_loud() {
        let model = reference::crit2();
        let d = decompose(&model).unwrap();
        let mut c = cfg(vec![5.0], vec![1.0, 0.0]);
        c.mass_cap = 1e3;
        assert!(matches!(
            simulate_path(&model, &d, &c, 0),
            Err(Error::SimulationDiverged(_))
        ));
    }

    #[test]
    fn one_type_branching_step_moments() {
        // X_h for the one-type quadratic CSBP: mean e^{alpha h}, variance A (e^{2 alpha h} - e^{alpha h}) / alpha
        let text = r#"{"m":[1.0],"Q":[[0.0]],"beta":[1.0],"a":[0.5],"b":[0.25]}"#;
        let model = crate::model::load_model(text).unwrap();
        let d = decompose(&model).unwrap();
        let c = SimConfig::new(Scheme::StrangExact, 0.05, vec![0.05], 99, vec![1.0]);
        let ens = simulate_ensemble(&model, &d, &c, 200_000, Execution::Parallel).unwrap();
        let xs: Vec<f64> = ens.paths.iter().map(|p| p.mass[0]).collect();
        let alpha_h = 0.025f64;
        let mean = batch_estimate(&xs, 100);
        assert!((mean.mean - alpha_h.exp()).abs() < 4.0 * mean.se);
        let var = variance_estimate(&xs);
        let want = 0.5 * ((2.0 * alpha_h).exp() - alpha_h.exp()) / 0.5;
        assert!((var.mean - want).abs() < 4.0 * var.se, "{} vs {want} (se {})", var.mean, var.se);
    }

    #[test]
    fn large_mass_paths_switch_to_eigen_coordinates() {
        let model = reference::crit2();
        let d = decompose(&model).unwrap();
        let c = cfg(vec![2.0, 8.0], vec![1.0, 0.0]);
        let p = simulate_path(&model, &d, &c, 1).unwrap();
        if !p.extinct[1] {
            assert!(p.gaussian_from.is_some());
            assert!(p.eigen_at(1)[0] > 1e9);
        }
    }
}
