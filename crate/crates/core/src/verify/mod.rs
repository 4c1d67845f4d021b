//! Monte Carlo verification of the fluctuation limits.
//!
//! An ensemble is simulated once; per-replica functionals (`W`, `H`, `Y1`,
//! `Y2`, `Y3`) are extracted by [`estimate_statistics`]; each check compares a
//! replica average with its closed-form prediction from [`crate::limits`].
//! A row passes when the estimate lies within `max(level * SE, budget)` of the
//! prediction, where the budget absorbs the finite-`t` bias of the limit.

mod checks;
mod report;
mod statistics;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limits::LimitContext;
use crate::model::{derive_coefficients, FiniteTypeModel};
use crate::par::Execution;
use crate::simulate::{simulate_ensemble, Scheme, SimConfig, DEFAULT_MASS_CAP, DEFAULT_STEP, DEFAULT_SWITCH_MASS};
use crate::spectral::{classify, decompose, EigenClassification, SpectralDecomposition, TestFunction, CRITICAL_TOL};
use crate::stats::DEFAULT_BATCHES;

pub use checks::{
    beta_rows, covariance_test, critical_constancy_test, critical_decay_test, cf_mixture_test, cross_rows,
    eta_rows, independence_test, martingale_test, remark_recombination_test, sigma_rows, w_mean_test,
    CheckContext,
};
pub use report::{merge_reports, Comparison, TestRow, VerificationReport, MULTIPLE_COMPARISON_ROWS};
pub use statistics::{
    estimate_statistics, horizon_margin, series_values, ReplicaStatistics, Series, SeriesLayout, StatisticsSet,
};

/// Relative bias allowance for covariance blocks.
pub const COVARIANCE_BUDGET: f64 = 0.02;
/// Relative bias allowance for the `t^{-1/2}`-scaled critical block.
pub const CRITICAL_BUDGET: f64 = 0.05;
pub const DEFAULT_LEVEL: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TestKind {
    Sigma,
    Beta,
    Eta,
    EtaZero,
    Cross,
    Critical,
    CriticalDecay,
    Cf,
    Remark,
    Martingale,
    WMean,
    Independence,
}

impl TestKind {
    pub const ALL: [TestKind; 12] = [
        TestKind::Sigma,
        TestKind::Beta,
        TestKind::Eta,
        TestKind::EtaZero,
        TestKind::Cross,
        TestKind::Critical,
        TestKind::CriticalDecay,
        TestKind::Cf,
        TestKind::Remark,
        TestKind::Martingale,
        TestKind::WMean,
        TestKind::Independence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::Sigma => "sigma",
            TestKind::Beta => "beta",
            TestKind::Eta => "eta",
            TestKind::EtaZero => "eta-zero",
            TestKind::Cross => "cross",
            TestKind::Critical => "critical",
            TestKind::CriticalDecay => "critical-decay",
            TestKind::Cf => "cf",
            TestKind::Remark => "remark",
            TestKind::Martingale => "martingale",
            TestKind::WMean => "w-mean",
            TestKind::Independence => "independence",
        }
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = TestKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!("unknown test {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Parse a comma-separated selector such as `sigma,beta,eta-zero`.
pub fn parse_selector(text: &str) -> Result<Vec<TestKind>> {
    let mut out: Vec<TestKind> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(TestKind::from_str)
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

/// Everything a verification run needs besides the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub t: f64,
    pub taus: Vec<f64>,
    pub q: f64,
    pub level: f64,
    pub replicas: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub h: f64,
    pub mu0: Vec<f64>,
    /// Empty means every test that applies to the model.
    pub tests: Vec<TestKind>,
    /// Eigen-coefficients of `f` (in `C_s`); defaults to the first small eigenvector.
    pub f: Option<Vec<f64>>,
    /// Eigen-coefficients of `h` (in `C_c`); defaults to the first critical eigenvector.
    pub h_fn: Option<Vec<f64>>,
    /// Eigen-coefficients of `g` (in `C_l`); defaults to `phi_1`.
    pub g: Option<Vec<f64>>,
    /// Eigen-coefficients of the general function for the recombination test;
    /// defaults to `f + g`, or `h` on models with a critical part.
    pub remark_f: Option<Vec<f64>>,
    pub theta_grid: Vec<f64>,
    pub covariance_budget: f64,
    pub critical_budget: f64,
    /// Earlier base time for the critical decay test; defaults to `0.6 t`.
    pub decay_t: Option<f64>,
    pub batches: usize,
    pub gaussian_switch_mass: f64,
    pub mass_cap: f64,
}

impl VerifyConfig {
    /// Defaults for a model: `|lambda_1| t >= 6` (at least 25 when a critical
    /// part is present), taus `{0, 1}`, and the smallest integer `q` admitted
    /// by the resolvent.
    pub fn for_model(
        model: &FiniteTypeModel,
        decomp: &SpectralDecomposition,
        classification: &EigenClassification,
    ) -> Result<Self> {
        let mut t = (6.0 / decomp.lambda_1().abs()).ceil();
        if !classification.critical.is_empty() {
            t = t.max(25.0);
        }
        let k = derive_coefficients(model).k;
        let q = k.max(-2.0 * decomp.lambda_1()).floor() + 1.0;
        Ok(VerifyConfig {
            t,
            taus: vec![0.0, 1.0],
            q,
            level: DEFAULT_LEVEL,
            replicas: 10_000,
            seed: 0,
            scheme: Scheme::StrangExact,
            h: DEFAULT_STEP,
            mu0: model.initial_mass()?.to_vec(),
            tests: Vec::new(),
            f: None,
            h_fn: None,
            g: None,
            remark_f: None,
            theta_grid: vec![0.5, 1.0, 2.0],
            covariance_budget: COVARIANCE_BUDGET,
            critical_budget: CRITICAL_BUDGET,
            decay_t: None,
            batches: DEFAULT_BATCHES,
            gaussian_switch_mass: DEFAULT_SWITCH_MASS,
            mass_cap: DEFAULT_MASS_CAP,
        })
    }

    fn round_up(&self, time: f64) -> f64 {
        let steps = (time / self.h - 1e-9).ceil();
        steps * self.h
    }
}

/// Functions and derived quantities fixed before simulating.
struct Plan<'a> {
    limits: LimitContext<'a>,
    f: TestFunction,
    h: TestFunction,
    g: TestFunction,
    remark_f: TestFunction,
    k: f64,
    horizon: f64,
    decay_t: Option<f64>,
    tests: Vec<TestKind>,
}

/// The first eigenvector of the first listed group, or zero when `groups` is empty.
pub fn first_basis(decomp: &SpectralDecomposition, groups: &[usize]) -> TestFunction {
    match groups.first() {
        Some(&k) => decomp.basis(decomp.group_of.iter().position(|&g| g == k).expect("group has a vector")),
        None => decomp.zero(),
    }
}

fn coeffs(decomp: &SpectralDecomposition, given: &Option<Vec<f64>>, fallback: TestFunction) -> Result<TestFunction> {
    match given {
        None => Ok(fallback),
        Some(c) if c.len() == decomp.n_types() => Ok(decomp.function(c.clone())),
        Some(c) => Err(Error::Config(format!(
            "function has {} coefficients, the model has {} types",
            c.len(),
            decomp.n_types()
        ))),
    }
}

impl<'a> Plan<'a> {
    fn new(
        model: &FiniteTypeModel,
        decomp: &'a SpectralDecomposition,
        classification: &'a EigenClassification,
        cfg: &VerifyConfig,
    ) -> Result<Self> {
        let derived = derive_coefficients(model);
        let f = coeffs(decomp, &cfg.f, first_basis(decomp, &classification.small))?;
        let h = coeffs(decomp, &cfg.h_fn, first_basis(decomp, &classification.critical))?;
        let g = coeffs(decomp, &cfg.g, decomp.basis(0))?;
        let default_remark = if h.is_zero() {
            decomp.function(f.coeffs.iter().zip(&g.coeffs).map(|(a, b)| a + b).collect())
        } else {
            h.clone()
        };
        let remark_f = coeffs(decomp, &cfg.remark_f, default_remark)?;
        let mut tests = if cfg.tests.is_empty() {
            TestKind::ALL.to_vec()
        } else {
            cfg.tests.clone()
        };
        if cfg.tests.is_empty() && classification.critical.is_empty() {
            tests.retain(|k| !matches!(k, TestKind::Critical | TestKind::CriticalDecay | TestKind::Cross));
        }
        let needs_decay = tests.contains(&TestKind::CriticalDecay);
        let decay_t = needs_decay.then(|| cfg.decay_t.unwrap_or(0.6 * cfg.t));
        let margin = horizon_margin(decomp, classification);
        let max_tau = cfg.taus.iter().copied().fold(0.0, f64::max);
        let horizon = cfg.round_up(cfg.t + max_tau + margin);
        Ok(Plan {
            limits: LimitContext::new(decomp, classification, &derived.big_a),
            f,
            h,
            g,
            remark_f,
            k: derived.k,
            horizon,
            decay_t,
            tests,
        })
    }

    fn grid(&self, cfg: &VerifyConfig) -> Vec<f64> {
        let mut grid = vec![cfg.round_up(0.5 * cfg.t)];
        for base in std::iter::once(cfg.t).chain(self.decay_t) {
            grid.push(base);
            grid.extend(cfg.taus.iter().map(|tau| base + tau));
        }
        grid.push(self.horizon);
        grid.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        grid.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        grid
    }

    fn has(&self, kind: TestKind) -> bool {
        self.tests.contains(&kind)
    }
}

/// Simulate the ensemble described by `cfg` and run the selected checks.
pub fn run_verification(model: &FiniteTypeModel, cfg: &VerifyConfig, exec: Execution) -> Result<VerificationReport> {
    let decomp = decompose(model)?;
    let classification = classify(&decomp, CRITICAL_TOL)?;
    let plan = Plan::new(model, &decomp, &classification, cfg)?;
    if cfg.taus.is_empty() || cfg.replicas < 2 {
        return Err(Error::Config("need at least one tau and two replicas".into()));
    }
    let mut sim = SimConfig::new(cfg.scheme, cfg.h, plan.grid(cfg), cfg.seed, cfg.mu0.clone());
    sim.horizon = plan.horizon;
    sim.gaussian_switch_mass = cfg.gaussian_switch_mass;
    sim.mass_cap = cfg.mass_cap;
    let ensemble = simulate_ensemble(model, &decomp, &sim, cfg.replicas, exec)?;

    let stats_at = |t: f64| {
        estimate_statistics(
            &ensemble,
            &decomp,
            &classification,
            &plan.f,
            &plan.h,
            &plan.g,
            t,
            &cfg.taus,
            cfg.q,
            plan.k,
            plan.horizon,
            exec,
        )
    };
    let stats = stats_at(cfg.t)?;
    let limit = plan
        .limits
        .limit_covariance_matrix(&plan.f, &plan.h, &plan.g, &cfg.taus, cfg.q, plan.k)?;
    let cx = CheckContext {
        level: cfg.level,
        phi1_mu0: decomp.phi1().iter().zip(&cfg.mu0).map(|(p, m)| p * m).sum(),
        batches: cfg.batches,
        seed: cfg.seed,
    };
    let budget = cfg.covariance_budget;

    let mut rows = Vec::new();
    if plan.has(TestKind::Sigma) {
        rows.extend(sigma_rows(&stats, &limit, &cx, budget));
    }
    if plan.has(TestKind::Beta) {
        rows.extend(beta_rows(&stats, &limit, &cx, budget));
    }
    if plan.has(TestKind::Eta) {
        rows.extend(eta_rows(&stats, &limit, &cx, budget, false));
    }
    if plan.has(TestKind::EtaZero) {
        rows.extend(eta_rows(&stats, &limit, &cx, budget, true));
    }
    if plan.has(TestKind::Cross) {
        rows.extend(cross_rows(&stats, &cx));
    }
    if plan.has(TestKind::Critical) {
        rows.extend(critical_constancy_test(&stats, &classification, limit.rho_sq, &cx, cfg.critical_budget)?);
    }
    if let (true, Some(early_t)) = (plan.has(TestKind::CriticalDecay), plan.decay_t) {
        if classification.critical.is_empty() {
            return Err(Error::Config("the model has no critical eigenvalues".into()));
        }
        let early = stats_at(early_t)?;
        rows.extend(critical_decay_test(&early, &stats, &cx)?);
    }
    if plan.has(TestKind::Cf) {
        rows.extend(cf_mixture_test(&stats, limit.sigma0, &cfg.theta_grid, &cx));
    }
    if plan.has(TestKind::Remark) {
        rows.extend(remark_recombination_test(
            &ensemble,
            &plan.limits,
            &plan.remark_f,
            cfg.t,
            &cfg.taus,
            cfg.q,
            plan.k,
            plan.horizon,
            &cx,
            (cfg.covariance_budget, cfg.critical_budget),
            exec,
        )?);
    }
    if plan.has(TestKind::Martingale) {
        rows.extend(martingale_test(&stats, &cx));
    }
    if plan.has(TestKind::WMean) {
        rows.extend(w_mean_test(&stats, &cx));
    }
    if plan.has(TestKind::Independence) {
        rows.extend(independence_test(&stats, &cx));
    }

    let mut report = VerificationReport {
        model: model.name.clone(),
        t: cfg.t,
        taus: cfg.taus.clone(),
        q: cfg.q,
        level: cfg.level,
        replicas: cfg.replicas,
        seeds: vec![cfg.seed],
        rows,
        notes: Vec::new(),
    };
    report.add_multiple_comparison_note();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference;

    fn small_cfg(model: &FiniteTypeModel) -> VerifyConfig {
        let d = decompose(model).unwrap();
        let c = classify(&d, CRITICAL_TOL).unwrap();
        let mut cfg = VerifyConfig::for_model(model, &d, &c).unwrap();
        cfg.replicas = 400;
        cfg.seed = 17;
        cfg
    }

    #[test]
    fn defaults_on_reference_models() {
        let m1 = reference::sym2();
        let cfg = small_cfg(&m1);
        assert_eq!((cfg.t, cfg.q), (12.0, 2.0));
        let m2 = reference::crit2();
        let cfg2 = small_cfg(&m2);
        assert_eq!((cfg2.t, cfg2.q), (25.0, 9.0));
    }

    #[test]
    fn selector_parsing() {
        assert_eq!(parse_selector("eta-zero, sigma,sigma").unwrap(), vec![TestKind::Sigma, TestKind::EtaZero]);
        assert!(matches!(parse_selector("nope"), Err(Error::Config(_))));
        assert!(parse_selector("").unwrap().is_empty());
    }

    #[test]
    fn report_is_deterministic_and_thread_independent() {
        let model = reference::sym2();
        let cfg = small_cfg(&model);
        let a = run_verification(&model, &cfg, Execution::Sequential).unwrap();
        let b = run_verification(&model, &cfg, Execution::Parallel).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.rows.iter().any(|r| r.test == "remark"));
        assert!(a.rows.iter().all(|r| r.test != "critical"));
        assert!(!a.notes.is_empty());
    }

    #[test]
    fn critical_tests_require_a_critical_part() {
        let model = reference::sym2();
        let mut cfg = small_cfg(&model);
        cfg.tests = vec![TestKind::Critical];
        assert!(matches!(run_verification(&model, &cfg, Execution::Sequential), Err(Error::Config(_))));
    }

    #[test]
    fn single_tau_has_no_difference_rows() {
        let model = reference::crit2();
        let mut cfg = small_cfg(&model);
        cfg.taus = vec![0.0];
        cfg.replicas = 50;
        cfg.tests = vec![TestKind::Critical];
        let r = run_verification(&model, &cfg, Execution::Sequential).unwrap();
        assert_eq!(r.rows.len(), 1);
    }
}
