//! Closed-form limit covariances and second moments.
//!
//! Every infinite-time integral here reduces, after expanding the test
//! functions in the eigenbasis, to finite sums of exponential integrals. The
//! coupling between eigenvectors is the tensor `D[p][q][r] = (A phi_p phi_q, phi_r)_m`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{
    resolvent_apply, semigroup_apply, EigenClassification, SpectralDecomposition, Subspace,
    TestFunction,
};

/// `expm1(z) / z`, continuous at zero.
pub(crate) fn exp_rel(z: f64) -> f64 {
    if z.abs() < 1e-9 {
        1.0 + 0.5 * z
    } else {
        z.exp_m1() / z
    }
}

/// `int_0^t exp(c1 (t - s)) exp(c2 s) ds`, stable when `c1 ~ c2`.
pub(crate) fn exp_convolution(c1: f64, c2: f64, t: f64) -> f64 {
    (c2 * t).exp() * t * exp_rel((c1 - c2) * t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Small,
    Critical,
    Large,
}

/// Everything the covariance formulas need: spectrum, classification, `A`,
/// and the precomputed coupling tensor.
#[derive(Debug, Clone)]
pub struct LimitContext<'a> {
    pub decomp: &'a SpectralDecomposition,
    pub classification: &'a EigenClassification,
    pub big_a: Vec<f64>,
    coupling: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitCovariance {
    pub tau_grid: Vec<f64>,
    /// `sigma_{U_q f, tau}` for each grid tau.
    pub sigma: Vec<f64>,
    pub sigma0: f64,
    pub rho_sq: f64,
    /// `beta_{g, tau}` for each grid tau.
    pub beta: Vec<f64>,
    pub beta0: f64,
    /// `eta_{tau_i, tau_j}(U_q f, g)`, zero when `tau_i >= tau_j`.
    pub eta: Vec<Vec<f64>>,
    /// Covariance of `(G1(tau_1..tau_k), G3(tau_1..tau_k))`.
    pub grid_matrix: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
}

impl<'a> LimitContext<'a> {
    pub fn new(
        decomp: &'a SpectralDecomposition,
        classification: &'a EigenClassification,
        big_a: &[f64],
    ) -> Self {
        Self {
            decomp,
            classification,
            big_a: big_a.to_vec(),
            coupling: decomp.triple_products(big_a),
        }
    }

    pub fn coupling(&self, p: usize, q: usize, r: usize) -> f64 {
        self.coupling[p][q][r]
    }

    fn lambda(&self, p: usize) -> f64 {
        self.decomp.lambda_of(p)
    }

    fn nonzero(f: &TestFunction) -> impl Iterator<Item = (usize, f64)> + '_ {
        f.coeffs
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, a)| *a != 0.0)
    }

    fn restrict(&self, f: &TestFunction, space: Subspace, what: &str) -> Result<TestFunction> {
        self.decomp
            .restrict(f, self.classification.groups(space), what)
    }

    /// `sigma_{f, tau}` for `f` in `C_s`.
    pub fn sigma_cov(&self, f: &TestFunction, tau: f64) -> Result<f64> {
        let f = self.restrict(f, Subspace::Small, "C_s")?;
        let lambda_1 = self.decomp.lambda_1();
        let mut total = 0.0;
        for (p, ap) in Self::nonzero(&f) {
            for (q, aq) in Self::nonzero(&f) {
                let (lp, lq) = (self.lambda(p), self.lambda(q));
                total += ap * aq * self.coupling(p, q, 0) * ((0.5 * lambda_1 - lq) * tau).exp()
                    / (lp + lq - lambda_1);
            }
        }
        Ok(total)
    }

    /// `rho_h^2 = (A h^2, phi_1)_m` for `h` in `C_c`.
    pub fn rho_sq(&self, h: &TestFunction) -> Result<f64> {
        if h.is_zero() {
            return Ok(0.0);
        }
        let h = self.restrict(h, Subspace::Critical, "C_c")?;
        let values = self.decomp.evaluate(&h);
        let phi1 = self.decomp.phi1();
        Ok((0..values.len())
            .map(|i| self.big_a[i] * values[i] * values[i] * phi1[i] * self.decomp.m[i])
            .sum())
    }

    /// `beta_{g, tau}` for `g` in `C_l`.
    pub fn beta_cov(&self, g: &TestFunction, tau: f64) -> Result<f64> {
        let g = self.restrict(g, Subspace::Large, "C_l")?;
        let lambda_1 = self.decomp.lambda_1();
        let mut total = 0.0;
        for (p, bp) in Self::nonzero(&g) {
            for (q, bq) in Self::nonzero(&g) {
                let (lp, lq) = (self.lambda(p), self.lambda(q));
                total += bp * bq * self.coupling(p, q, 0) * ((lq - 0.5 * lambda_1) * tau).exp()
                    / (lambda_1 - lp - lq);
            }
        }
        Ok(total)
    }

    /// `eta_{tau1, tau2}(f, g)` for `f` in `C_s`, `g` in `C_l`; exactly zero
    /// when `tau1 >= tau2`.
    pub fn eta_cov(&self, f: &TestFunction, g: &TestFunction, tau1: f64, tau2: f64) -> Result<f64> {
        let f = self.restrict(f, Subspace::Small, "C_s")?;
        let g = self.restrict(g, Subspace::Large, "C_l")?;
        if tau1 >= tau2 {
            return Ok(0.0);
        }
        let lambda_1 = self.decomp.lambda_1();
        let lag = tau2 - tau1;
        let mut total = 0.0;
        for (p, ap) in Self::nonzero(&f) {
            for (q, bq) in Self::nonzero(&g) {
                let (lp, lq) = (self.lambda(p), self.lambda(q));
                // the resonant case lp + lq = lambda_1 is the z -> 0 limit of exp_rel
                let resonance = lp + lq - lambda_1;
                total += ap
                    * bq
                    * self.coupling(p, q, 0)
                    * lag
                    * ((0.5 * lambda_1 - lp) * lag).exp()
                    * exp_rel(resonance * lag);
            }
        }
        Ok(-total)
    }

    /// `Var_{delta_x} <f, X_t>` (0-based type `x`).
    pub fn variance_exact(&self, f: &TestFunction, t: f64, x: usize) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
        }
        let n = self.decomp.n_types();
        let mut total = 0.0;
        for (p, ap) in Self::nonzero(f) {
            for (q, aq) in Self::nonzero(f) {
                let c1 = -(self.lambda(p) + self.lambda(q));
                for r in 0..n {
                    let d = self.coupling(p, q, r);
                    if d == 0.0 {
                        continue;
                    }
                    total += ap
                        * aq
                        * d
                        * self.decomp.phis[r][x]
                        * exp_convolution(c1, -self.lambda(r), t);
                }
            }
        }
        Ok(total)
    }

    /// `E_mu <f, X_t>^2 = <T_t f, mu>^2 + sum_x mu_x Var_{delta_x} <f, X_t>`.
    pub fn second_moment_exact(&self, f: &TestFunction, t: f64, mu0: &[f64]) -> Result<f64> {
        let mean = self.mean_exact(f, t, mu0)?;
        let mut var = 0.0;
        for (x, &mass) in mu0.iter().enumerate() {
            if mass != 0.0 {
                var += mass * self.variance_exact(f, t, x)?;
            }
        }
        Ok(mean * mean + var)
    }

    /// `E_mu <f, X_t> = <T_t f, mu>`.
    pub fn mean_exact(&self, f: &TestFunction, t: f64, mu0: &[f64]) -> Result<f64> {
        let tf = self.decomp.evaluate(&semigroup_apply(self.decomp, f, t)?);
        Ok(tf.iter().zip(mu0).map(|(a, b)| a * b).sum())
    }

    /// Large-time constant of the variance in the given regime.
    pub fn variance_asymptote(&self, f: &TestFunction, x: usize, regime: Regime) -> Result<f64> {
        let Some(gamma) = f.gamma else {
            return Ok(0.0);
        };
        let actual = match self.classification.subspace_of(gamma) {
            Subspace::Small => Regime::Small,
            Subspace::Critical => Regime::Critical,
            Subspace::Large => Regime::Large,
        };
        if actual != regime {
            return Err(Error::Domain(format!(
                "regime {regime:?} requested but gamma(f) = {} is {actual:?}",
                gamma + 1
            )));
        }
        let phi1_x = self.decomp.phi1()[x];
        let leading = self.decomp.restrict_lossy(f, gamma);
        match regime {
            Regime::Small => Ok(self.sigma_cov(f, 0.0)? * phi1_x),
            Regime::Critical => Ok(self.rho_sq(&leading)? * phi1_x),
            Regime::Large => {
                let lambda_g = self.decomp.lambdas[gamma];
                let n = self.decomp.n_types();
                let mut total = 0.0;
                for (p, ap) in Self::nonzero(&leading) {
                    for (q, aq) in Self::nonzero(&leading) {
                        for r in 0..n {
                            total += ap * aq * self.coupling(p, q, r) * self.decomp.phis[r][x]
                                / (self.lambda(r) - 2.0 * lambda_g);
                        }
                    }
                }
                Ok(total)
            }
        }
    }

    /// Covariance of the recombined statistic `G1(g_l) + G3(g_s)` at `(tau_i, tau_j)`.
    pub fn recombined_cov(
        &self,
        g_l: &TestFunction,
        g_s: &TestFunction,
        tau_i: f64,
        tau_j: f64,
    ) -> Result<f64> {
        let lag = (tau_j - tau_i).abs();
        let mut total = 0.0;
        if !g_l.is_zero() {
            total += self.sigma_cov(g_l, lag)?;
        }
        if !g_s.is_zero() {
            total += self.beta_cov(g_s, lag)?;
        }
        if !g_l.is_zero() && !g_s.is_zero() {
            total += self.eta_cov(g_l, g_s, tau_i, tau_j)? + self.eta_cov(g_l, g_s, tau_j, tau_i)?;
        }
        Ok(total)
    }

    /// Assemble the limit covariance of `(G1_{U_q f}, G3_g)` on a tau grid,
    /// plus the constant `rho_h^2`. Zero `h` or `g` give zero blocks.
    pub fn limit_covariance_matrix(
        &self,
        f: &TestFunction,
        h: &TestFunction,
        g: &TestFunction,
        tau_grid: &[f64],
        q: f64,
        k: f64,
    ) -> Result<LimitCovariance> {
        let uqf = resolvent_apply(self.decomp, f, q, k)?;
        let uqf = self.restrict(&uqf, Subspace::Small, "C_s")?;
        let g = if g.is_zero() {
            g.clone()
        } else {
            self.restrict(g, Subspace::Large, "C_l")?
        };
        let rho_sq = self.rho_sq(h)?;
        let sigma_at = |lag: f64| -> Result<f64> {
            if uqf.is_zero() {
                Ok(0.0)
            } else {
                self.sigma_cov(&uqf, lag)
            }
        };
        let beta_at = |lag: f64| -> Result<f64> {
            if g.is_zero() {
                Ok(0.0)
            } else {
                self.beta_cov(&g, lag)
            }
        };
        let eta_at = |t1: f64, t2: f64| -> Result<f64> {
            if uqf.is_zero() || g.is_zero() {
                Ok(0.0)
            } else {
                self.eta_cov(&uqf, &g, t1, t2)
            }
        };

        let k_len = tau_grid.len();
        let sigma = tau_grid.iter().map(|&t| sigma_at(t)).collect::<Result<Vec<_>>>()?;
        let beta = tau_grid.iter().map(|&t| beta_at(t)).collect::<Result<Vec<_>>>()?;
        let mut eta = vec![vec![0.0; k_len]; k_len];
        for i in 0..k_len {
            for j in 0..k_len {
                eta[i][j] = eta_at(tau_grid[i], tau_grid[j])?;
            }
        }
        let mut grid = vec![vec![0.0; 2 * k_len]; 2 * k_len];
        for i in 0..k_len {
            for j in 0..k_len {
                let lag = (tau_grid[j] - tau_grid[i]).abs();
                grid[i][j] = sigma_at(lag)?;
                grid[k_len + i][k_len + j] = beta_at(lag)?;
                // E[G3(tau_i) G1(tau_j)]
                grid[k_len + i][j] = eta[i][j];
                grid[j][k_len + i] = eta[i][j];
            }
        }
        let min_eigenvalue = if k_len == 0 {
            0.0
        } else {
            let mat = DMatrix::from_fn(2 * k_len, 2 * k_len, |i, j| grid[i][j]);
            let trace = mat.trace();
            let min = SymmetricEigen::new(mat)
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            if min < -1e-9 * trace.abs().max(f64::MIN_POSITIVE) {
                return Err(Error::Numerical(format!(
                    "assembled covariance is not PSD (min eigenvalue {min:e})"
                )));
            }
            min
        };
        Ok(LimitCovariance {
            tau_grid: tau_grid.to_vec(),
            sigma0: sigma_at(0.0)?,
            beta0: beta_at(0.0)?,
            sigma,
            rho_sq,
            beta,
            eta,
            grid_matrix: grid,
            min_eigenvalue,
        })
    }
}

impl SpectralDecomposition {
    /// Keep only the coefficients of group `k`.
    pub(crate) fn restrict_lossy(&self, f: &TestFunction, k: usize) -> TestFunction {
        let coeffs = f
            .coeffs
            .iter()
            .enumerate()
            .map(|(p, &a)| if self.group_of[p] == k { a } else { 0.0 })
            .collect();
        self.function(coeffs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_coefficients, reference, FiniteTypeModel};
    use crate::spectral::{classify, decompose, CRITICAL_TOL};
    use approx::assert_relative_eq;

    struct Setup {
        decomp: SpectralDecomposition,
        cls: EigenClassification,
        big_a: Vec<f64>,
        k: f64,
    }

    impl Setup {
        fn new(model: &FiniteTypeModel) -> Self {
            let decomp = decompose(model).unwrap();
            let cls = classify(&decomp, CRITICAL_TOL).unwrap();
            let c = derive_coefficients(model);
            Setup {
                decomp,
                cls,
                big_a: c.big_a,
                k: c.k,
            }
        }

        fn ctx(&self) -> LimitContext<'_> {
            LimitContext::new(&self.decomp, &self.cls, &self.big_a)
        }
    }

    const C22_SYM: f64 = 0.353_553_390_593_273_8; // 0.5 / sqrt(2)

    #[test]
    fn sigma_on_sym2() {
        let s = Setup::new(&reference::sym2());
        let ctx = s.ctx();
        let phi2 = s.decomp.basis(1);
        assert_relative_eq!(ctx.sigma_cov(&phi2, 0.0).unwrap(), C22_SYM / 3.5, max_relative = 1e-13);
        assert_relative_eq!(
            ctx.sigma_cov(&phi2, 1.0).unwrap(),
            C22_SYM / 3.5 * (-1.75f64).exp(),
            max_relative = 1e-13
        );
        assert!(matches!(ctx.sigma_cov(&s.decomp.basis(0), 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_branching_noise_gives_zero_covariances() {
        let s = Setup::new(&reference::sym2());
        let ctx = LimitContext::new(&s.decomp, &s.cls, &[0.0, 0.0]);
        for tau in [0.0, 1.0, 3.0] {
            assert_eq!(ctx.sigma_cov(&s.decomp.basis(1), tau).unwrap(), 0.0);
            assert_eq!(ctx.beta_cov(&s.decomp.basis(0), tau).unwrap(), 0.0);
        }
        assert_eq!(ctx.variance_exact(&s.decomp.basis(1), 2.0, 0).unwrap(), 0.0);
    }

    #[test]
    fn rho_on_crit2() {
        let s = Setup::new(&reference::crit2());
        let ctx = s.ctx();
        assert_relative_eq!(ctx.rho_sq(&s.decomp.basis(1)).unwrap(), C22_SYM, max_relative = 1e-12);
        assert_eq!(ctx.rho_sq(&s.decomp.zero()).unwrap(), 0.0);
        let s1 = Setup::new(&reference::sym2());
        assert!(matches!(s1.ctx().rho_sq(&s1.decomp.basis(1)), Err(Error::Domain(_))));
    }

    #[test]
    fn beta_on_sym2() {
        let s = Setup::new(&reference::sym2());
        let ctx = s.ctx();
        let phi1 = s.decomp.basis(0);
        let b0 = C22_SYM / 0.5;
        assert_relative_eq!(ctx.beta_cov(&phi1, 0.0).unwrap(), b0, max_relative = 1e-13);
        assert_relative_eq!(ctx.beta_cov(&phi1, 2.0).unwrap(), b0 * (-0.5f64).exp(), max_relative = 1e-13);
    }

    #[test]
    fn eta_cases() {
        let s = Setup::new(&reference::sym2());
        let ctx = s.ctx();
        let uqf = resolvent_apply(&s.decomp, &s.decomp.basis(1), 2.0, s.k).unwrap();
        let phi1 = s.decomp.basis(0);
        assert!(ctx.eta_cov(&uqf, &phi1, 0.0, 1.0).unwrap().abs() < 1e-15);
        let a = Setup::new(&reference::asym2());
        let actx = a.ctx();
        let uqf = resolvent_apply(&a.decomp, &a.decomp.basis(1), 2.0, a.k).unwrap();
        let want = -(-0.25f64).exp() * (-0.176_776_695_296_636_9 / 3.5) * (1.0 - (-1.5f64).exp()) / 1.5;
        assert_relative_eq!(actx.eta_cov(&uqf, &a.decomp.basis(0), 0.0, 1.0).unwrap(), want, max_relative = 1e-12);
        assert_eq!(actx.eta_cov(&uqf, &a.decomp.basis(0), 3.0, 1.0).unwrap(), 0.0);
        assert_eq!(actx.eta_cov(&uqf, &a.decomp.basis(0), 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn variance_exact_on_sym2() {
        let s = Setup::new(&reference::sym2());
        let ctx = s.ctx();
        let phi2 = s.decomp.basis(1);
        let want = (0.5f64.exp() - (-3.0f64).exp()) / 14.0;
        for x in 0..2 {
            assert_relative_eq!(ctx.variance_exact(&phi2, 1.0, x).unwrap(), want, max_relative = 1e-13);
            assert_eq!(ctx.variance_exact(&phi2, 0.0, x).unwrap(), 0.0);
        }
    }

    #[test]
    fn asymptotes_in_each_regime() {
        let s = Setup::new(&reference::sym2());
        let ctx = s.ctx();
        let small = ctx.variance_asymptote(&s.decomp.basis(1), 0, Regime::Small).unwrap();
        assert_relative_eq!(small, 1.0 / 14.0, max_relative = 1e-12);
        let large = ctx.variance_asymptote(&s.decomp.basis(0), 0, Regime::Large).unwrap();
        assert_relative_eq!(large, 0.5, max_relative = 1e-12);
        assert!(ctx.variance_asymptote(&s.decomp.basis(1), 0, Regime::Large).is_err());

        let c = Setup::new(&reference::crit2());
        let crit = c.ctx().variance_asymptote(&c.decomp.basis(1), 0, Regime::Critical).unwrap();
        assert_relative_eq!(crit, 0.25, max_relative = 1e-12);
    }

    fn uniform_alpha(alpha: f64, b: [f64; 2]) -> FiniteTypeModel {
        let mut model = reference::sym2();
        model.a = vec![alpha, alpha];
        model.b = b.to_vec();
        model
    }

    #[test]
    fn resonant_eta_matches_its_limit() {
        // alpha = 2 puts lambda_2 at 0, so lambda_2 + lambda_1 - lambda_1 = 0 exactly
        let s = Setup::new(&uniform_alpha(2.0, [0.25, 0.5]));
        assert!(s.decomp.lambdas[1].abs() < 1e-14);
        let ctx = s.ctx();
        let (f, g) = (s.decomp.basis(1), s.decomp.basis(0));
        let at_resonance = ctx.eta_cov(&f, &g, 0.5, 2.0).unwrap();
        let c = ctx.coupling(1, 0, 0);
        assert_relative_eq!(at_resonance, -c * 1.5 * (-1.5f64).exp(), max_relative = 1e-12);

        let near = Setup::new(&uniform_alpha(2.0 + 1e-7, [0.25, 0.5]));
        let nearby = near.ctx().eta_cov(&near.decomp.basis(1), &near.decomp.basis(0), 0.5, 2.0).unwrap();
        assert_relative_eq!(at_resonance, nearby, max_relative = 1e-6);

        assert!((exp_rel(1e-12) - 1.0).abs() < 1e-11);
        assert_relative_eq!(exp_convolution(0.3, 0.3, 2.0), 2.0 * (0.6f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn grid_matrix_on_sym2() {
        let s = Setup::new(&reference::sym2());
        let ctx = s.ctx();
        // U_2 scales phi_2 by 1/3.5, so f = 3.5 phi_2 gives U_q f = phi_2
        let f = s.decomp.function(vec![0.0, 3.5]);
        let cov = ctx
            .limit_covariance_matrix(&f, &s.decomp.zero(), &s.decomp.basis(0), &[0.0, 1.0], 2.0, s.k)
            .unwrap();
        let sig0 = C22_SYM / 3.5;
        let sig1 = sig0 * (-1.75f64).exp();
        let b0 = C22_SYM / 0.5;
        let b1 = b0 * (-0.25f64).exp();
        let want = [
            [sig0, sig1, 0.0, 0.0],
            [sig1, sig0, 0.0, 0.0],
            [0.0, 0.0, b0, b1],
            [0.0, 0.0, b1, b0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((cov.grid_matrix[i][j] - want[i][j]).abs() < 1e-12, "({i},{j})");
            }
        }
        assert_eq!(cov.rho_sq, 0.0);
        let empty = ctx
            .limit_covariance_matrix(&f, &s.decomp.zero(), &s.decomp.basis(0), &[], 2.0, s.k)
            .unwrap();
        assert!(empty.grid_matrix.is_empty());
    }

    #[test]
    fn eta_appears_in_asym2_off_block() {
        let s = Setup::new(&reference::asym2());
        let ctx = s.ctx();
        let cov = ctx
            .limit_covariance_matrix(&s.decomp.basis(1), &s.decomp.zero(), &s.decomp.basis(0), &[0.0, 1.0], 2.0, s.k)
            .unwrap();
        // row G3(0), column G1(1)
        assert_relative_eq!(cov.grid_matrix[2][1], 0.020_372, max_relative = 1e-4);
        assert_eq!(cov.grid_matrix[3][0], 0.0);
        assert_eq!(cov.grid_matrix[1][2], cov.grid_matrix[2][1]);
    }

    #[test]
    fn scaling_is_quadratic_and_bilinear() {
        let s = Setup::new(&reference::asym2());
        let ctx = s.ctx();
        let f = s.decomp.basis(1);
        let g = s.decomp.basis(0);
        let c = -2.5;
        let cf = s.decomp.function(vec![0.0, c]);
        let cg = s.decomp.function(vec![3.0, 0.0]);
        assert_relative_eq!(ctx.sigma_cov(&cf, 0.7).unwrap(), c * c * ctx.sigma_cov(&f, 0.7).unwrap(), max_relative = 1e-13);
        assert_relative_eq!(
            ctx.eta_cov(&cf, &cg, 0.2, 1.3).unwrap(),
            c * 3.0 * ctx.eta_cov(&f, &g, 0.2, 1.3).unwrap(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn sigma_and_beta_are_stationary() {
        let s = Setup::new(&reference::asym2());
        let ctx = s.ctx();
        let f = s.decomp.basis(1);
        let g = s.decomp.basis(0);
        let e1 = ctx.eta_cov(&f, &g, 0.0, 1.5).unwrap();
        let e2 = ctx.eta_cov(&f, &g, 2.0, 3.5).unwrap();
        assert_relative_eq!(e1, e2, max_relative = 1e-13);
    }
}
