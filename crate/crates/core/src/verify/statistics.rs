use crate::error::{Error, Result};
use crate::par::Execution;
use crate::simulate::ReplicaEnsemble;
use crate::spectral::{resolvent_apply, EigenClassification, SpectralDecomposition, Subspace, TestFunction};

/// Functionals of one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaStatistics {
    /// `W_s = e^{lambda_1 s} <phi_1, X_s>` at every ensemble time.
    pub w: Vec<f64>,
    /// `H^p_s = e^{lambda_p s} <phi_p, X_s>`, flattened as `[obs * n + p]`.
    pub h: Vec<f64>,
    /// `Y1(tau)` for `U_q f`, one entry per tau.
    pub y1: Vec<f64>,
    /// `Y2(tau)` for `h`.
    pub y2: Vec<f64>,
    /// `Y3(tau)` for `g`, centred by `F_hat` built from `H` at the horizon.
    pub y3: Vec<f64>,
    pub w_t: f64,
    pub extinct: bool,
}

/// Per-replica statistics together with the parameters they were built for.
#[derive(Debug, Clone)]
pub struct StatisticsSet {
    pub t: f64,
    pub taus: Vec<f64>,
    pub q: f64,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub n_types: usize,
    pub seed: u64,
    pub replicas: Vec<ReplicaStatistics>,
}

impl StatisticsSet {
    pub fn len(&self) -> usize {
        self.replicas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicas.is_empty()
    }

    pub fn column(&self, pick: impl Fn(&ReplicaStatistics) -> f64) -> Vec<f64> {
        self.replicas.iter().map(pick).collect()
    }
}

/// `8 / min_k (lambda_1 - 2 lambda_k)` over the large groups: the extra time
/// after `t + max(tau)` that lets `H` settle to its limit.
pub fn horizon_margin(decomp: &SpectralDecomposition, classification: &EigenClassification) -> f64 {
    let lambda_1 = decomp.lambda_1();
    let slowest = classification
        .large
        .iter()
        .map(|&k| lambda_1 - 2.0 * decomp.lambdas[k])
        .fold(f64::INFINITY, f64::min);
    8.0 / slowest
}

/// A linear functional of the path evaluated along the tau grid:
/// `scale * e^{lambda_1 s / 2} (<direct, X_s> - sum_p e^{-lambda_p s} subtract_p H^p_horizon)`.
#[derive(Debug, Clone)]
pub struct Series {
    pub direct: Vec<f64>,
    pub subtract: Vec<f64>,
    pub scale: f64,
}

impl Series {
    pub fn plain(f: &TestFunction, scale: f64) -> Self {
        Series {
            direct: f.coeffs.clone(),
            subtract: vec![0.0; f.coeffs.len()],
            scale,
        }
    }

    pub fn centred(f: &TestFunction, g: &TestFunction, scale: f64) -> Self {
        Series {
            direct: f.coeffs.clone(),
            subtract: g.coeffs.clone(),
            scale,
        }
    }
}

/// Indices into the ensemble needed to evaluate series at `t + tau`.
#[derive(Debug, Clone)]
pub struct SeriesLayout {
    pub obs: Vec<usize>,
    pub horizon_obs: usize,
    pub s: Vec<f64>,
}

impl SeriesLayout {
    pub fn new(
        ensemble: &ReplicaEnsemble,
        decomp: &SpectralDecomposition,
        classification: &EigenClassification,
        t: f64,
        taus: &[f64],
        horizon: f64,
    ) -> Result<Self> {
        if taus.is_empty() || taus.iter().any(|&tau| tau < 0.0) {
            return Err(Error::Config("tau grid must be nonempty and nonnegative".into()));
        }
        let margin = horizon_margin(decomp, classification);
        let last = t + taus.iter().copied().fold(0.0, f64::max);
        if last > horizon - margin + 1e-9 {
            return Err(Error::Config(format!(
                "t + max(tau) = {last} leaves less than the margin {margin} before the horizon {horizon}"
            )));
        }
        let locate = |s: f64| {
            ensemble
                .time_index(s)
                .ok_or_else(|| Error::Config(format!("time {s} is not on the simulation grid")))
        };
        let s: Vec<f64> = taus.iter().map(|tau| t + tau).collect();
        Ok(SeriesLayout {
            obs: s.iter().map(|&v| locate(v)).collect::<Result<_>>()?,
            horizon_obs: locate(horizon)?,
            s,
        })
    }
}

fn eval_series(
    series: &Series,
    layout: &SeriesLayout,
    h: &[f64],
    n: usize,
    lambdas: &[f64],
    lambda_1: f64,
) -> Vec<f64> {
    let hor = &h[layout.horizon_obs * n..(layout.horizon_obs + 1) * n];
    layout
        .obs
        .iter()
        .zip(&layout.s)
        .map(|(&obs, &s)| {
            let here = &h[obs * n..(obs + 1) * n];
            let total: f64 = (0..n)
                .filter(|&p| series.direct[p] != 0.0 || series.subtract[p] != 0.0)
                .map(|p| {
                    ((0.5 * lambda_1 - lambdas[p]) * s).exp()
                        * (series.direct[p] * here[p] - series.subtract[p] * hor[p])
                })
                .sum();
            series.scale * total
        })
        .collect()
}

/// Evaluate any series on every replica of an ensemble.
pub fn series_values(
    ensemble: &ReplicaEnsemble,
    decomp: &SpectralDecomposition,
    layout: &SeriesLayout,
    series: &Series,
    exec: Execution,
) -> Vec<Vec<f64>> {
    let n = decomp.n_types();
    let lambdas: Vec<f64> = (0..n).map(|p| decomp.lambda_of(p)).collect();
    exec.map_indexed(ensemble.paths.len(), |r| {
        let h = martingales(&ensemble.paths[r], &ensemble.times, &lambdas);
        eval_series(series, layout, &h, n, &lambdas, decomp.lambda_1())
    })
}

fn martingales(path: &crate::simulate::PathGrid, times: &[f64], lambdas: &[f64]) -> Vec<f64> {
    let n = lambdas.len();
    let mut h = Vec::with_capacity(times.len() * n);
    for (obs, &s) in times.iter().enumerate() {
        let z = path.eigen_at(obs);
        h.extend((0..n).map(|p| (lambdas[p] * s).exp() * z[p]));
    }
    h
}

fn check_space(
    decomp: &SpectralDecomposition,
    classification: &EigenClassification,
    f: &TestFunction,
    space: Subspace,
    what: &str,
) -> Result<()> {
    if f.is_zero() {
        return Ok(());
    }
    match decomp.support_outside(f, classification.groups(space)) {
        None => Ok(()),
        Some(p) => Err(Error::Config(format!(
            "{what} has a component on eigenvector {} outside its subspace",
            p + 1
        ))),
    }
}

/// Build `W`, `H`, `Y1(U_q f)`, `Y2(h)` and `Y3(g)` for every replica.
#[allow(clippy::too_many_arguments)]
pub fn estimate_statistics(
    ensemble: &ReplicaEnsemble,
    decomp: &SpectralDecomposition,
    classification: &EigenClassification,
    f: &TestFunction,
    h: &TestFunction,
    g: &TestFunction,
    t: f64,
    taus: &[f64],
    q: f64,
    k: f64,
    horizon: f64,
    exec: Execution,
) -> Result<StatisticsSet> {
    check_space(decomp, classification, f, Subspace::Small, "f")?;
    check_space(decomp, classification, h, Subspace::Critical, "h")?;
    check_space(decomp, classification, g, Subspace::Large, "g")?;
    let uqf = if f.is_zero() {
        f.clone()
    } else {
        resolvent_apply(decomp, f, q, k)?
    };
    let layout = SeriesLayout::new(ensemble, decomp, classification, t, taus, horizon)?;
    let t_obs = ensemble
        .time_index(t)
        .ok_or_else(|| Error::Config(format!("time {t} is not on the simulation grid")))?;
    let n = decomp.n_types();
    let lambdas: Vec<f64> = (0..n).map(|p| decomp.lambda_of(p)).collect();
    let lambda_1 = decomp.lambda_1();
    let s1 = Series::plain(&uqf, 1.0);
    let s2 = Series::plain(h, t.powf(-0.5));
    let s3 = Series::centred(g, g, 1.0);
    let replicas = exec.map_indexed(ensemble.paths.len(), |r| {
        let path = &ensemble.paths[r];
        let hs = martingales(path, &ensemble.times, &lambdas);
        let w: Vec<f64> = (0..ensemble.times.len()).map(|obs| hs[obs * n]).collect();
        ReplicaStatistics {
            y1: eval_series(&s1, &layout, &hs, n, &lambdas, lambda_1),
            y2: eval_series(&s2, &layout, &hs, n, &lambdas, lambda_1),
            y3: eval_series(&s3, &layout, &hs, n, &lambdas, lambda_1),
            w_t: w[t_obs],
            extinct: path.extinct[t_obs],
            w,
            h: hs,
        }
    });
    Ok(StatisticsSet {
        t,
        taus: taus.to_vec(),
        q,
        horizon,
        times: ensemble.times.clone(),
        n_types: n,
        seed: ensemble.seed,
        replicas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_coefficients, reference};
    use crate::simulate::{simulate_ensemble, Scheme, SimConfig};
    use crate::spectral::{classify, decompose, CRITICAL_TOL};

    fn setup() -> (crate::model::FiniteTypeModel, SpectralDecomposition, EigenClassification) {
        let model = reference::sym2();
        let d = decompose(&model).unwrap();
        let c = classify(&d, CRITICAL_TOL).unwrap();
        (model, d, c)
    }

    #[test]
    fn margin_on_sym2() {
        let (_, d, c) = setup();
        assert!((horizon_margin(&d, &c) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn y3_for_phi1_is_the_centred_martingale() {
        let (model, d, c) = setup();
        let k = derive_coefficients(&model).k;
        let cfg = SimConfig::new(Scheme::StrangExact, 0.05, vec![2.0, 3.0, 19.0], 4, vec![1.0, 0.0]);
        let ens = simulate_ensemble(&model, &d, &cfg, 50, Execution::Sequential).unwrap();
        let stats = estimate_statistics(
            &ens, &d, &c, &d.basis(1), &d.zero(), &d.basis(0), 2.0, &[0.0, 1.0], 2.0, k, 19.0,
            Execution::Sequential,
        )
        .unwrap();
        for rep in &stats.replicas {
            for (i, s) in [2.0f64, 3.0].into_iter().enumerate() {
                let want = (0.25 * s).exp() * (rep.w[i] - rep.w[2]);
                assert!((rep.y3[i] - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
            assert!(rep.y2.iter().all(|&v| v == 0.0));
            if rep.extinct {
                assert_eq!(rep.w_t, 0.0);
                assert!(rep.y1.iter().chain(&rep.y3).all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn rejects_wrong_subspaces_and_short_horizons() {
        let (model, d, c) = setup();
        let k = derive_coefficients(&model).k;
        let cfg = SimConfig::new(Scheme::StrangExact, 0.05, vec![2.0, 3.0, 10.0], 4, vec![1.0, 0.0]);
        let ens = simulate_ensemble(&model, &d, &cfg, 4, Execution::Sequential).unwrap();
        let run = |f: &TestFunction, g: &TestFunction, horizon: f64| {
            estimate_statistics(&ens, &d, &c, f, &d.zero(), g, 2.0, &[0.0, 1.0], 2.0, k, horizon, Execution::Sequential)
        };
        assert!(matches!(run(&d.basis(0), &d.basis(0), 10.0), Err(Error::Config(_))));
        assert!(matches!(run(&d.basis(1), &d.basis(0), 10.0), Err(Error::Config(_))));
    }
}
