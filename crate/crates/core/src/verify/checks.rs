use crate::error::{Error, Result};
use crate::limits::{LimitContext, LimitCovariance};
use crate::par::Execution;
use crate::simulate::ReplicaEnsemble;
use crate::spectral::{project_components, resolvent_apply, EigenClassification, TestFunction};
use crate::stats::{batch_estimate, Estimate};

use super::report::TestRow;
use super::statistics::{series_values, Series, SeriesLayout, StatisticsSet};

/// Settings shared by every comparison.
#[derive(Debug, Clone, Copy)]
pub struct CheckContext {
    /// Multiple of the SE defining the acceptance band.
    pub level: f64,
    /// `<phi_1, mu0> = E[W_infinity]`.
    pub phi1_mu0: f64,
    pub batches: usize,
    pub seed: u64,
}

impl CheckContext {
    fn estimate(&self, values: &[f64]) -> Estimate {
        batch_estimate(values, self.batches)
    }

    fn finish(&self, row: TestRow) -> TestRow {
        let mut row = row.judge(self.level);
        row.seed = self.seed;
        row
    }
}

fn products(stats: &StatisticsSet, a: impl Fn(&super::ReplicaStatistics) -> f64, b: impl Fn(&super::ReplicaStatistics) -> f64) -> Vec<f64> {
    stats.replicas.iter().map(|r| a(r) * b(r)).collect()
}

/// `E[Y1(tau_i) Y1(tau_j)]` against `<phi_1, mu0> sigma_{U_q f, |tau_i - tau_j|}`.
pub fn sigma_rows(stats: &StatisticsSet, limit: &LimitCovariance, cx: &CheckContext, budget: f64) -> Vec<TestRow> {
    let k = stats.taus.len();
    let mut rows = Vec::new();
    for i in 0..k {
        for j in i..k {
            let pred = cx.phi1_mu0 * limit.grid_matrix[i][j];
            let est = cx.estimate(&products(stats, |r| r.y1[i], |r| r.y1[j]));
            let (ti, tj) = (stats.taus[i], stats.taus[j]);
            rows.push(cx.finish(
                TestRow::new("sigma", "Y1Y1", format!("E[Y1({ti})Y1({tj})]"), pred, est)
                    .taus(ti, tj)
                    .budget(budget * pred),
            ));
        }
    }
    rows
}

/// `E[Y3(tau_i) Y3(tau_j)]` against `<phi_1, mu0> beta_{g, |tau_i - tau_j|}`.
pub fn beta_rows(stats: &StatisticsSet, limit: &LimitCovariance, cx: &CheckContext, budget: f64) -> Vec<TestRow> {
    let k = stats.taus.len();
    let mut rows = Vec::new();
    for i in 0..k {
        for j in i..k {
            let pred = cx.phi1_mu0 * limit.grid_matrix[k + i][k + j];
            let est = cx.estimate(&products(stats, |r| r.y3[i], |r| r.y3[j]));
            let (ti, tj) = (stats.taus[i], stats.taus[j]);
            rows.push(cx.finish(
                TestRow::new("beta", "Y3Y3", format!("E[Y3({ti})Y3({tj})]"), pred, est)
                    .taus(ti, tj)
                    .budget(budget * pred),
            ));
        }
    }
    rows
}

/// `E[Y3(tau_i) Y1(tau_j)]` against `<phi_1, mu0> eta_{tau_i, tau_j}`.
/// With `ordered_zero` only the pairs `tau_i >= tau_j` (predicted exactly 0)
/// are tested; otherwise only `tau_i < tau_j`.
pub fn eta_rows(
    stats: &StatisticsSet,
    limit: &LimitCovariance,
    cx: &CheckContext,
    budget: f64,
    ordered_zero: bool,
) -> Vec<TestRow> {
    let k = stats.taus.len();
    let mut rows = Vec::new();
    for i in 0..k {
        for j in 0..k {
            let (ti, tj) = (stats.taus[i], stats.taus[j]);
            if (ti >= tj) != ordered_zero {
                continue;
            }
            let pred = cx.phi1_mu0 * limit.eta[i][j];
            let est = cx.estimate(&products(stats, |r| r.y3[i], |r| r.y1[j]));
            let name = if ordered_zero { "eta-zero" } else { "eta" };
            rows.push(cx.finish(
                TestRow::new(name, "Y3Y1", format!("E[Y3({ti})Y1({tj})]"), pred, est)
                    .taus(ti, tj)
                    .budget(budget * pred),
            ));
        }
    }
    rows
}

/// Cross moments with the critical block, all predicted 0 by independence.
pub fn cross_rows(stats: &StatisticsSet, cx: &CheckContext) -> Vec<TestRow> {
    let k = stats.taus.len();
    let mut rows = Vec::new();
    for i in 0..k {
        for j in 0..k {
            let (ti, tj) = (stats.taus[i], stats.taus[j]);
            let est = cx.estimate(&products(stats, |r| r.y1[i], |r| r.y2[j]));
            rows.push(cx.finish(
                TestRow::new("cross", "Y1Y2", format!("E[Y1({ti})Y2({tj})]"), 0.0, est).taus(ti, tj),
            ));
            let est = cx.estimate(&products(stats, |r| r.y2[i], |r| r.y3[j]));
            rows.push(cx.finish(
                TestRow::new("cross", "Y2Y3", format!("E[Y2({ti})Y3({tj})]"), 0.0, est).taus(ti, tj),
            ));
        }
    }
    rows
}

/// All covariance blocks of the limit: sigma, beta, eta (both orderings) and
/// the cross moments with the critical block.
pub fn covariance_test(
    stats: &StatisticsSet,
    limit: &LimitCovariance,
    cx: &CheckContext,
    budget: f64,
) -> Vec<TestRow> {
    let mut rows = sigma_rows(stats, limit, cx, budget);
    rows.extend(beta_rows(stats, limit, cx, budget));
    rows.extend(eta_rows(stats, limit, cx, budget, false));
    rows.extend(eta_rows(stats, limit, cx, budget, true));
    rows.extend(cross_rows(stats, cx));
    rows
}

/// Paired characteristic-function test of the mixture `sqrt(W) N(0, sigma^2)`
/// on `Y1(tau_0)`: `E cos(theta Y)` against `E exp(-theta^2 sigma^2 W_t / 2)`,
/// and `E sin(theta Y)` against 0.
pub fn cf_mixture_test(stats: &StatisticsSet, sigma_sq: f64, theta_grid: &[f64], cx: &CheckContext) -> Vec<TestRow> {
    let tau = stats.taus[0];
    let mut rows = Vec::new();
    for &theta in theta_grid {
        let cos: Vec<f64> = stats.replicas.iter().map(|r| (theta * r.y1[0]).cos()).collect();
        let mix: Vec<f64> = stats
            .replicas
            .iter()
            .map(|r| (-0.5 * theta * theta * sigma_sq * r.w_t).exp())
            .collect();
        let diff: Vec<f64> = cos.iter().zip(&mix).map(|(a, b)| a - b).collect();
        let e_cos = cx.estimate(&cos);
        let e_mix = cx.estimate(&mix);
        let paired = cx.estimate(&diff);
        let est = Estimate {
            se: paired.se,
            ..e_cos
        };
        rows.push(cx.finish(
            TestRow::new("cf", "Y1", format!("E[cos({theta} Y1({tau}))]"), e_mix.mean, est).theta(theta),
        ));
        let sin: Vec<f64> = stats.replicas.iter().map(|r| (theta * r.y1[0]).sin()).collect();
        rows.push(cx.finish(
            TestRow::new("cf", "Y1", format!("E[sin({theta} Y1({tau}))]"), 0.0, cx.estimate(&sin)).theta(theta),
        ));
    }
    rows
}

/// The critical block is a constant process: each `E[Y2(tau)^2]` matches
/// `<phi_1, mu0> rho_h^2`, and `E[(Y2(tau_i) - Y2(tau_j))^2]` stays within the
/// `O(1/t)` allowance `<phi_1, mu0> rho_h^2 |tau_i - tau_j| / t`.
pub fn critical_constancy_test(
    stats: &StatisticsSet,
    classification: &EigenClassification,
    rho_sq: f64,
    cx: &CheckContext,
    budget: f64,
) -> Result<Vec<TestRow>> {
    if classification.critical.is_empty() {
        return Err(Error::Config("the model has no critical eigenvalues".into()));
    }
    let pred = cx.phi1_mu0 * rho_sq;
    let k = stats.taus.len();
    let mut rows = Vec::new();
    for i in 0..k {
        let tau = stats.taus[i];
        let est = cx.estimate(&products(stats, |r| r.y2[i], |r| r.y2[i]));
        rows.push(cx.finish(
            TestRow::new("critical", "Y2Y2", format!("E[Y2({tau})^2]"), pred, est)
                .taus(tau, tau)
                .budget(budget * pred),
        ));
    }
    for i in 0..k {
        for j in i + 1..k {
            let (ti, tj) = (stats.taus[i], stats.taus[j]);
            let allowance = pred * (tj - ti).abs() / stats.t;
            let values: Vec<f64> = stats
                .replicas
                .iter()
                .map(|r| (r.y2[i] - r.y2[j]).powi(2))
                .collect();
            rows.push(cx.finish(
                TestRow::new(
                    "critical",
                    "Y2-Y2",
                    format!("E[(Y2({ti})-Y2({tj}))^2]"),
                    allowance,
                    cx.estimate(&values),
                )
                .taus(ti, tj)
                .at_most(),
            ));
        }
    }
    Ok(rows)
}

/// `t E[(Y2(tau_i) - Y2(tau_j))^2]` is the same at an early and a late base
/// time, i.e. the pairwise differences decay like `1/t`. Both sets must come
/// from the same ensemble so the comparison is paired.
pub fn critical_decay_test(early: &StatisticsSet, late: &StatisticsSet, cx: &CheckContext) -> Result<Vec<TestRow>> {
    if early.len() != late.len() || early.seed != late.seed || early.taus != late.taus {
        return Err(Error::Config(
            "decay test needs statistics from one ensemble on one tau grid".into(),
        ));
    }
    let k = late.taus.len();
    let mut rows = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let (ti, tj) = (late.taus[i], late.taus[j]);
            let scaled = |s: &StatisticsSet| -> Vec<f64> {
                s.replicas.iter().map(|r| s.t * (r.y2[i] - r.y2[j]).powi(2)).collect()
            };
            let (e, l) = (scaled(early), scaled(late));
            let diff: Vec<f64> = l.iter().zip(&e).map(|(a, b)| a - b).collect();
            let e_early = cx.estimate(&e);
            let est = Estimate {
                mean: cx.estimate(&l).mean,
                se: cx.estimate(&diff).se,
                count: l.len(),
            };
            rows.push(cx.finish(
                TestRow::new(
                    "critical-decay",
                    "Y2-Y2",
                    format!("t E[(Y2({ti})-Y2({tj}))^2] at t={} vs t={}", late.t, early.t),
                    e_early.mean,
                    est,
                )
                .taus(ti, tj)
                .time(late.t),
            ));
        }
    }
    Ok(rows)
}

/// General `f` with its pieces recombined.
///
/// Without a critical part the statistic
/// `e^{lambda_1 s / 2}(<U_q f, X_s> - F_s(U_q f_(s)))` has covariance
/// `sigma_{g_(l)} + eta + eta' + beta_{g_(s)}` with `g = U_q f`. With a critical
/// part the `t^{-1/2}`-scaled statistic has second moment `rho^2_{g_(c)}`.
#[allow(clippy::too_many_arguments)]
pub fn remark_recombination_test(
    ensemble: &ReplicaEnsemble,
    limits: &LimitContext,
    f: &TestFunction,
    t: f64,
    taus: &[f64],
    q: f64,
    k_bound: f64,
    horizon: f64,
    cx: &CheckContext,
    budgets: (f64, f64),
    exec: Execution,
) -> Result<Vec<TestRow>> {
    let decomp = limits.decomp;
    let classification = limits.classification;
    let g = resolvent_apply(decomp, f, q, k_bound)?;
    let (g_s, g_c, g_l) = project_components(decomp, classification, &g);
    let layout = SeriesLayout::new(ensemble, decomp, classification, t, taus, horizon)?;
    let critical = !g_c.is_zero();
    let scale = if critical { t.powf(-0.5) } else { 1.0 };
    let values = series_values(ensemble, decomp, &layout, &Series::centred(&g, &g_s, scale), exec);
    let kk = taus.len();
    let mut rows = Vec::new();
    for i in 0..kk {
        for j in i..kk {
            let (ti, tj) = (taus[i], taus[j]);
            let (pred, budget) = if critical {
                (cx.phi1_mu0 * limits.rho_sq(&g_c)?, budgets.1)
            } else {
                (cx.phi1_mu0 * limits.recombined_cov(&g_l, &g_s, ti, tj)?, budgets.0)
            };
            let prods: Vec<f64> = values.iter().map(|v| v[i] * v[j]).collect();
            let block = if critical { "Yc" } else { "Yr" };
            rows.push(cx.finish(
                TestRow::new("remark", block, format!("E[{block}({ti}){block}({tj})]"), pred, cx.estimate(&prods))
                    .taus(ti, tj)
                    .budget(budget * pred),
            ));
        }
    }
    Ok(rows)
}

/// `E[H^p_{s'} - H^p_s] = 0` for consecutive ensemble times and every eigenvector.
pub fn martingale_test(stats: &StatisticsSet, cx: &CheckContext) -> Vec<TestRow> {
    let n = stats.n_types;
    let mut rows = Vec::new();
    for obs in 1..stats.times.len() {
        let (s0, s1) = (stats.times[obs - 1], stats.times[obs]);
        for p in 0..n {
            let inc: Vec<f64> = stats
                .replicas
                .iter()
                .map(|r| r.h[obs * n + p] - r.h[(obs - 1) * n + p])
                .collect();
            rows.push(cx.finish(
                TestRow::new("martingale", "H", format!("E[H{}({s1})-H{}({s0})]", p + 1, p + 1), 0.0, cx.estimate(&inc))
                    .time(s1),
            ));
        }
    }
    rows
}

/// `E[W_s] = <phi_1, mu0>` at every ensemble time.
pub fn w_mean_test(stats: &StatisticsSet, cx: &CheckContext) -> Vec<TestRow> {
    (0..stats.times.len())
        .map(|obs| {
            let s = stats.times[obs];
            let w: Vec<f64> = stats.replicas.iter().map(|r| r.w[obs]).collect();
            cx.finish(TestRow::new("w-mean", "W", format!("E[W({s})]"), cx.phi1_mu0, cx.estimate(&w)).time(s))
        })
        .collect()
}

/// Moment surrogate for the independence of `W` and the Gaussian block:
/// `E[W Y^2] / E[Y^2] - E[W^2] / E[W]` vanishes for `Y = sqrt(W) G`. The ratio
/// is formed per batch, so the SE is that of the batch ratios.
pub fn independence_test(stats: &StatisticsSet, cx: &CheckContext) -> Vec<TestRow> {
    let n = stats.len();
    let b = cx.batches.clamp(2, n.max(2));
    let mut rows = Vec::new();
    let tau = stats.taus[0];
    let series: [(&str, Box<dyn Fn(&super::ReplicaStatistics) -> f64>); 2] = [
        ("Y1", Box::new(|r| r.y1[0])),
        ("Y3", Box::new(|r| r.y3[0])),
    ];
    for (name, pick) in series.iter() {
        let ratios: Vec<f64> = (0..b)
            .map(|i| {
                let block = &stats.replicas[i * n / b..(i + 1) * n / b];
                let sum = |f: &dyn Fn(&super::ReplicaStatistics) -> f64| -> f64 {
                    crate::stats::pairwise_sum(&block.iter().map(f).collect::<Vec<_>>())
                };
                let wy2 = sum(&|r| r.w_t * pick(r).powi(2));
                let y2 = sum(&|r| pick(r).powi(2));
                let w2 = sum(&|r| r.w_t * r.w_t);
                let w = sum(&|r| r.w_t);
                wy2 / y2 - w2 / w
            })
            .collect();
        let est = batch_estimate(&ratios, b);
        rows.push(cx.finish(
            TestRow::new(
                "independence",
                name,
                format!("E[W {name}({tau})^2]/E[{name}({tau})^2] - E[W^2]/E[W]"),
                0.0,
                Estimate { count: n, ..est },
            )
            .taus(tau, tau),
        ));
    }
    rows
}
