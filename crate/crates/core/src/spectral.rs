//! Spectral decomposition of the mean generator `L = Q + diag(alpha)`.
//!
//! Reversibility of `Q` w.r.t. `m` makes `L` self-adjoint in the weighted inner
//! product `(f, g)_m = sum_i f_i g_i m_i`. Conjugating by `diag(sqrt(m))` turns the
//! problem into a symmetric one, which is solved densely and mapped back.
//!
//! Eigenvalues are stored with the sign convention `L phi = -lambda phi`, so the
//! principal eigenvalue is the most negative `lambda_1` and supercriticality means
//! `lambda_1 < 0`. Every function on the type space is handled through its
//! coefficients in the eigenbasis (a [`TestFunction`]).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{derive_coefficients, FiniteTypeModel};

/// Relative tolerance used to merge numerically equal eigenvalues.
pub const GROUPING_TOL: f64 = 1e-9;
/// Default relative tolerance for the `2 lambda_k = lambda_1` test.
pub const CRITICAL_TOL: f64 = 1e-9;
/// Coefficients below this fraction of the largest one count as zero.
pub const COEFF_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct SpectralDecomposition {
    /// The generator `L`, row-major.
    pub generator: Vec<Vec<f64>>,
    pub m: Vec<f64>,
    /// Distinct eigenvalues `lambda_1 < lambda_2 < ...`.
    pub lambdas: Vec<f64>,
    pub multiplicities: Vec<usize>,
    /// m-orthonormal eigenvectors, grouped by eigenvalue in ascending order.
    pub phis: Vec<Vec<f64>>,
    /// Group index `k` of each eigenvector.
    pub group_of: Vec<usize>,
    pub supercritical: bool,
}

/// A function on the type space, held as its coefficients `(f, phi_p)_m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestFunction {
    pub coeffs: Vec<f64>,
    /// Smallest group index carrying a nonzero coefficient; `None` for `f = 0`.
    pub gamma: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenClassification {
    /// Groups with `lambda_1 < 2 lambda_k`.
    pub small: Vec<usize>,
    /// Groups with `lambda_1 = 2 lambda_k` (within tolerance).
    pub critical: Vec<usize>,
    /// Groups with `lambda_1 > 2 lambda_k`.
    pub large: Vec<usize>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subspace {
    Small,
    Critical,
    Large,
}

impl EigenClassification {
    pub fn subspace_of(&self, group: usize) -> Subspace {
        if self.critical.contains(&group) {
            Subspace::Critical
        } else if self.large.contains(&group) {
            Subspace::Large
        } else {
            Subspace::Small
        }
    }

    pub fn groups(&self, space: Subspace) -> &[usize] {
        match space {
            Subspace::Small => &self.small,
            Subspace::Critical => &self.critical,
            Subspace::Large => &self.large,
        }
    }
}

pub fn decompose(model: &FiniteTypeModel) -> Result<SpectralDecomposition> {
    let n = model.n_types();
    let alpha = derive_coefficients(model).alpha;
    let generator = DMatrix::from_fn(n, n, |i, j| {
        model.q[i][j] + if i == j { alpha[i] } else { 0.0 }
    });
    let sqrt_m: Vec<f64> = model.m.iter().map(|v| v.sqrt()).collect();
    // S = D^{1/2} L D^{-1/2}; exact symmetry is imposed by averaging
    let mut sym = DMatrix::from_fn(n, n, |i, j| sqrt_m[i] * generator[(i, j)] / sqrt_m[j]);
    let sym_t = sym.transpose();
    sym = (sym + sym_t) * 0.5;
    let eig = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..n).collect();
    // lambda = -eigenvalue, ascending lambda = descending eigenvalue
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let raw_lambdas: Vec<f64> = order.iter().map(|&p| -eig.eigenvalues[p]).collect();
    let mut phis: Vec<Vec<f64>> = order
        .iter()
        .map(|&p| {
            let v = eig.eigenvectors.column(p);
            let mut phi: Vec<f64> = (0..n).map(|i| v[i] / sqrt_m[i]).collect();
            normalize_sign(&mut phi);
            phi
        })
        .collect();

    let spread = raw_lambdas[n - 1] - raw_lambdas[0];
    let merge_tol = GROUPING_TOL * spread.max(1.0);
    let mut lambdas = Vec::new();
    let mut multiplicities = Vec::new();
    let mut group_of = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && raw_lambdas[end] - raw_lambdas[start] <= merge_tol {
            end += 1;
        }
        let mean = raw_lambdas[start..end].iter().sum::<f64>() / (end - start) as f64;
        group_of.extend(std::iter::repeat_n(lambdas.len(), end - start));
        lambdas.push(mean);
        multiplicities.push(end - start);
        start = end;
    }

    if multiplicities[0] != 1 {
        return Err(Error::Numerical(format!(
            "principal eigenvalue has multiplicity {}",
            multiplicities[0]
        )));
    }
    let phi1 = &mut phis[0];
    if phi1.iter().sum::<f64>() < 0.0 {
        phi1.iter_mut().for_each(|v| *v = -*v);
    }
    if phi1.iter().any(|&v| v <= 0.0) {
        return Err(Error::Numerical(
            "principal eigenfunction is not strictly positive".into(),
        ));
    }

    let scale = generator.iter().map(|v| v.abs()).fold(1.0, f64::max);
    for (p, phi) in phis.iter().enumerate() {
        let lambda = lambdas[group_of[p]];
        let lphi = &generator * DVector::from_column_slice(phi);
        let residual = (0..n)
            .map(|i| (lphi[i] + lambda * phi[i]).powi(2) * model.m[i])
            .sum::<f64>()
            .sqrt();
        if residual > RESIDUAL_TOL * scale {
            return Err(Error::Numerical(format!(
                "eigen-residual {residual:e} for eigenvector {}",
                p + 1
            )));
        }
    }

    Ok(SpectralDecomposition {
        generator: (0..n)
            .map(|i| (0..n).map(|j| generator[(i, j)]).collect())
            .collect(),
        m: model.m.clone(),
        supercritical: lambdas[0] < 0.0,
        lambdas,
        multiplicities,
        phis,
        group_of,
    })
}

/// Deterministic sign: the first non-negligible entry is positive.
fn normalize_sign(phi: &mut [f64]) {
    let max = phi.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if let Some(first) = phi.iter().find(|v| v.abs() > 1e-8 * max) {
        if *first < 0.0 {
            phi.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

impl SpectralDecomposition {
    pub fn n_types(&self) -> usize {
        self.m.len()
    }

    pub fn lambda_1(&self) -> f64 {
        self.lambdas[0]
    }

    pub fn phi1(&self) -> &[f64] {
        &self.phis[0]
    }

    /// Eigenvalue `lambda` attached to eigenvector `p`.
    pub fn lambda_of(&self, p: usize) -> f64 {
        self.lambdas[self.group_of[p]]
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter()
            .zip(g)
            .zip(&self.m)
            .map(|((a, b), w)| a * b * w)
            .sum()
    }

    pub fn require_supercritical(&self) -> Result<()> {
        if self.supercritical {
            Ok(())
        } else {
            Err(Error::NotSupercritical(self.lambda_1()))
        }
    }

    /// Wrap eigen-coefficients, computing `gamma`.
    pub fn function(&self, coeffs: Vec<f64>) -> TestFunction {
        assert_eq!(coeffs.len(), self.n_types(), "coefficient length");
        let max = coeffs.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let gamma = if max == 0.0 {
            None
        } else {
            coeffs
                .iter()
                .position(|v| v.abs() > COEFF_TOL * max)
                .map(|p| self.group_of[p])
        };
        TestFunction { coeffs, gamma }
    }

    /// Project pointwise values onto the eigenbasis.
    pub fn project(&self, values: &[f64]) -> TestFunction {
        let coeffs = self.phis.iter().map(|phi| self.inner(values, phi)).collect();
        self.function(coeffs)
    }

    pub fn zero(&self) -> TestFunction {
        self.function(vec![0.0; self.n_types()])
    }

    /// The basis function `phi_p` (0-based eigenvector index).
    pub fn basis(&self, p: usize) -> TestFunction {
        let mut coeffs = vec![0.0; self.n_types()];
        coeffs[p] = 1.0;
        self.function(coeffs)
    }

    /// Pointwise values `f(i) = sum_p a_p phi_p(i)`.
    pub fn evaluate(&self, f: &TestFunction) -> Vec<f64> {
        let n = self.n_types();
        (0..n)
            .map(|i| {
                f.coeffs
                    .iter()
                    .zip(&self.phis)
                    .map(|(a, phi)| a * phi[i])
                    .sum()
            })
            .collect()
    }

    /// Eigenvector indices with a significant coefficient outside the given groups.
    pub fn support_outside(&self, f: &TestFunction, groups: &[usize]) -> Option<usize> {
        let max = f.coeffs.iter().map(|v| v.abs()).fold(0.0, f64::max);
        f.coeffs
            .iter()
            .enumerate()
            .find(|(p, v)| v.abs() > COEFF_TOL * max && !groups.contains(&self.group_of[*p]))
            .map(|(p, _)| p)
    }

    /// Drop coefficients outside `groups`, after checking they are negligible.
    pub fn restrict(&self, f: &TestFunction, groups: &[usize], what: &str) -> Result<TestFunction> {
        if let Some(p) = self.support_outside(f, groups) {
            return Err(Error::Domain(format!(
                "function has a component on eigenvector {} outside {what}",
                p + 1
            )));
        }
        Ok(self.mask(f, |k| groups.contains(&k)))
    }

    fn mask(&self, f: &TestFunction, keep: impl Fn(usize) -> bool) -> TestFunction {
        let coeffs = f
            .coeffs
            .iter()
            .enumerate()
            .map(|(p, &a)| if keep(self.group_of[p]) { a } else { 0.0 })
            .collect();
        self.function(coeffs)
    }

    /// Multiply each coefficient by a factor depending on its eigenvalue.
    pub fn scale_by(&self, f: &TestFunction, factor: impl Fn(f64) -> f64) -> TestFunction {
        let coeffs = f
            .coeffs
            .iter()
            .enumerate()
            .map(|(p, &a)| a * factor(self.lambda_of(p)))
            .collect();
        self.function(coeffs)
    }

    /// `(A phi_p phi_q, phi_r)_m` for all eigenvector triples, indexed `[p][q][r]`.
    pub fn triple_products(&self, big_a: &[f64]) -> Vec<Vec<Vec<f64>>> {
        let n = self.n_types();
        (0..n)
            .map(|p| {
                (0..n)
                    .map(|q| {
                        (0..n)
                            .map(|r| {
                                (0..n)
                                    .map(|i| {
                                        self.m[i]
                                            * big_a[i]
                                            * self.phis[p][i]
                                            * self.phis[q][i]
                                            * self.phis[r][i]
                                    })
                                    .sum()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }
}

impl TestFunction {
    pub fn is_zero(&self) -> bool {
        self.gamma.is_none()
    }
}

pub fn classify(decomp: &SpectralDecomposition, tol: f64) -> Result<EigenClassification> {
    decomp.require_supercritical()?;
    let lambda_1 = decomp.lambda_1();
    let band = tol * lambda_1.abs().max(1.0);
    let mut out = EigenClassification {
        small: Vec::new(),
        critical: Vec::new(),
        large: Vec::new(),
        tolerance: tol,
    };
    for (k, &lambda) in decomp.lambdas.iter().enumerate() {
        let gap = 2.0 * lambda - lambda_1;
        if gap.abs() <= band {
            out.critical.push(k);
        } else if gap > 0.0 {
            out.small.push(k);
        } else {
            out.large.push(k);
        }
    }
    Ok(out)
}

/// `T_t f`: coefficients scale by `exp(-lambda_k t)`.
pub fn semigroup_apply(
    decomp: &SpectralDecomposition,
    f: &TestFunction,
    t: f64,
) -> Result<TestFunction> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
    }
    Ok(decomp.scale_by(f, |lambda| (-lambda * t).exp()))
}

/// Resolvent `U_q f`: coefficients scale by `1 / (q + lambda_k)`.
pub fn resolvent_apply(
    decomp: &SpectralDecomposition,
    f: &TestFunction,
    q: f64,
    k: f64,
) -> Result<TestFunction> {
    let bound = k.max(-2.0 * decomp.lambda_1());
    if !(q > bound) {
        return Err(Error::Domain(format!(
            "q too small: need q > max(K, -2 lambda_1) = {bound}, got {q}"
        )));
    }
    Ok(decomp.scale_by(f, |lambda| 1.0 / (q + lambda)))
}

/// Split `f` into `(f_(s), f_(c), f_(l))`, where `f_(s)` collects the *large*
/// eigenvalues (it lies in `C_l`) and `f_(l)` the small ones (it lies in `C_s`).
pub fn project_components(
    decomp: &SpectralDecomposition,
    classification: &EigenClassification,
    f: &TestFunction,
) -> (TestFunction, TestFunction, TestFunction) {
    let pick = |space: Subspace| decomp.mask(f, |k| classification.subspace_of(k) == space);
    (
        pick(Subspace::Large),
        pick(Subspace::Critical),
        pick(Subspace::Small),
    )
}

/// Inverse flow `I_u g` on `C_l`: coefficients scale by `exp(lambda_k u)`.
pub fn i_operator(
    decomp: &SpectralDecomposition,
    classification: &EigenClassification,
    g: &TestFunction,
    u: f64,
) -> Result<TestFunction> {
    if !(u >= 0.0) {
        return Err(Error::Domain(format!("u must be nonnegative, got {u}")));
    }
    let g = decomp.restrict(g, &classification.large, "C_l")?;
    Ok(decomp.scale_by(&g, |lambda| (lambda * u).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const R2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn sym2() -> SpectralDecomposition {
        decompose(&reference::sym2()).unwrap()
    }

    #[test]
    fn sym2_closed_form() {
        let d = sym2();
        assert_abs_diff_eq!(d.lambdas[0], -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(d.lambdas[1], 1.5, epsilon = 1e-14);
        assert_eq!(d.multiplicities, vec![1, 1]);
        for (got, want) in d.phis[0].iter().zip([R2, R2]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-14);
        }
        for (got, want) in d.phis[1].iter().zip([R2, -R2]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-14);
        }
        assert!(d.supercritical);
    }

    #[test]
    fn single_type() {
        let text = r#"{"m":[2.0],"Q":[[0.0]],"beta":[1.0],"a":[0.7],"b":[0.1]}"#;
        let d = decompose(&crate::model::load_model(text).unwrap()).unwrap();
        assert_abs_diff_eq!(d.lambda_1(), -0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(d.phi1()[0], 1.0 / 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn crit2_spectrum() {
        let d = decompose(&reference::crit2()).unwrap();
        assert_abs_diff_eq!(d.lambdas[0], -4.0, epsilon = 1e-13);
        assert_abs_diff_eq!(d.lambdas[1], -2.0, epsilon = 1e-13);
    }

    #[test]
    fn classification_of_reference_models() {
        let c = classify(&sym2(), CRITICAL_TOL).unwrap();
        assert_eq!((c.large.clone(), c.critical.clone(), c.small.clone()), (vec![0], vec![], vec![1]));
        let d2 = decompose(&reference::crit2()).unwrap();
        let c2 = classify(&d2, CRITICAL_TOL).unwrap();
        assert_eq!((c2.large.clone(), c2.critical.clone(), c2.small.clone()), (vec![0], vec![1], vec![]));
        // an absurd tolerance swallows every group into the critical set
        let wide = classify(&sym2(), 10.0).unwrap();
        assert_eq!(wide.critical, vec![0, 1]);
    }

    #[test]
    fn classify_requires_supercritical() {
        let text = r#"{"m":[1.0],"Q":[[0.0]],"beta":[1.0],"a":[-0.3],"b":[0.1]}"#;
        let d = decompose(&crate::model::load_model(text).unwrap()).unwrap();
        assert!(!d.supercritical);
        assert!(matches!(classify(&d, CRITICAL_TOL), Err(Error::NotSupercritical(_))));
    }

    #[test]
    fn semigroup_on_eigenfunction_and_identity() {
        let d = sym2();
        let out = semigroup_apply(&d, &d.basis(1), 1.0).unwrap();
        assert_abs_diff_eq!(out.coeffs[1], (-1.5f64).exp(), epsilon = 1e-15);
        assert_eq!(out.coeffs[0], 0.0);
        let f = d.project(&[0.3, -1.2]);
        assert_eq!(semigroup_apply(&d, &f, 0.0).unwrap(), f);
        assert!(matches!(semigroup_apply(&d, &f, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn resolvent_scaling_and_precondition() {
        let d = sym2();
        let out = resolvent_apply(&d, &d.basis(1), 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(out.coeffs[1], 1.0 / 3.5, epsilon = 1e-15);
        assert_eq!(out.gamma, Some(1));
        let err = resolvent_apply(&d, &d.basis(1), 0.9, 1.0).unwrap_err();
        assert!(err.to_string().contains("q too small"));
        let f = d.project(&[1.0, 0.0]);
        let u = resolvent_apply(&d, &f, 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(u.coeffs[0], f.coeffs[0] / 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(u.coeffs[1], f.coeffs[1] / 3.5, epsilon = 1e-15);
    }

    #[test]
    fn components_of_mixed_function() {
        let d = sym2();
        let c = classify(&d, CRITICAL_TOL).unwrap();
        let f = d.function(vec![1.0, 1.0]);
        let (fs, fc, fl) = project_components(&d, &c, &f);
        assert_eq!(fs.coeffs, vec![1.0, 0.0]);
        assert!(fc.is_zero());
        assert_eq!(fl.coeffs, vec![0.0, 1.0]);

        let d2 = decompose(&reference::crit2()).unwrap();
        let c2 = classify(&d2, CRITICAL_TOL).unwrap();
        let (fs, fc, fl) = project_components(&d2, &c2, &d2.basis(1));
        assert!(fs.is_zero() && fl.is_zero());
        assert_eq!(fc, d2.basis(1));

        let (fs, fc, fl) = project_components(&d, &c, &d.zero());
        assert!(fs.is_zero() && fc.is_zero() && fl.is_zero());
        assert_eq!(d.zero().gamma, None);
    }

    #[test]
    fn i_operator_cases() {
        let d = sym2();
        let c = classify(&d, CRITICAL_TOL).unwrap();
        let out = i_operator(&d, &c, &d.basis(0), 2.0).unwrap();
        assert_abs_diff_eq!(out.coeffs[0], (-1.0f64).exp(), epsilon = 1e-15);
        assert_eq!(i_operator(&d, &c, &d.basis(0), 0.0).unwrap(), d.basis(0));
        assert!(matches!(i_operator(&d, &c, &d.basis(1), 1.0), Err(Error::Domain(_))));
    }

    fn random_model(n: usize, seed: &[f64]) -> FiniteTypeModel {
        let mut it = seed.iter().cycle();
        let mut next = || *it.next().unwrap();
        let m: Vec<f64> = (0..n).map(|_| 0.3 + 2.0 * next()).collect();
        let mut q = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let s = 0.1 + 2.0 * next();
                q[i][j] = s / m[i];
                q[j][i] = s / m[j];
            }
        }
        for (i, row) in q.iter_mut().enumerate() {
            row[i] = 0.0;
            row[i] = -row.iter().sum::<f64>();
        }
        FiniteTypeModel {
            name: None,
            beta: (0..n).map(|_| 0.5 + next()).collect(),
            a: (0..n).map(|_| 3.0 * next() - 1.0).collect(),
            b: (0..n).map(|_| next()).collect(),
            jumps: vec![Vec::new(); n],
            mu0: None,
            m,
            q,
        }
    }

    fn arb_decomp() -> impl Strategy<Value = SpectralDecomposition> {
        (1usize..=5, prop::collection::vec(0.0f64..1.0, 40))
            .prop_map(|(n, seed)| decompose(&random_model(n, &seed)).unwrap())
    }

    proptest! {
        #[test]
        fn perron_vector_is_positive(d in arb_decomp()) {
            prop_assert!(d.phi1().iter().all(|&v| v > 0.0));
            prop_assert_eq!(d.multiplicities[0], 1);
        }

        #[test]
        fn semigroup_law(d in arb_decomp(), s in 0.0f64..5.0, t in 0.0f64..5.0, raw in prop::collection::vec(-1.0f64..1.0, 5)) {
            let f = d.project(&raw[..d.n_types()]);
            let direct = semigroup_apply(&d, &f, s + t).unwrap();
            let stepped = semigroup_apply(&d, &semigroup_apply(&d, &f, s).unwrap(), t).unwrap();
            for (x, y) in direct.coeffs.iter().zip(&stepped.coeffs) {
                prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
            }
        }

        #[test]
        fn resolvent_inverts_q_minus_l(d in arb_decomp(), extra in 0.01f64..3.0, raw in prop::collection::vec(-1.0f64..1.0, 5)) {
            let n = d.n_types();
            let f_vals = &raw[..n];
            let f = d.project(f_vals);
            let k = d.lambdas.iter().map(|l| l.abs()).fold(0.0, f64::max);
            let q = k.max(-2.0 * d.lambda_1()) + extra;
            let u = d.evaluate(&resolvent_apply(&d, &f, q, k).unwrap());
            for i in 0..n {
                let lu: f64 = (0..n).map(|j| d.generator[i][j] * u[j]).sum();
                prop_assert!((q * u[i] - lu - f_vals[i]).abs() <= 1e-9 * (1.0 + q));
            }
        }

        #[test]
        fn classification_partitions_groups(d in arb_decomp()) {
            prop_assume!(d.supercritical);
            let c = classify(&d, CRITICAL_TOL).unwrap();
            let mut all: Vec<usize> = c.small.iter().chain(&c.critical).chain(&c.large).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..d.lambdas.len()).collect::<Vec<_>>());
            prop_assert!(c.large.contains(&0));
        }

        #[test]
        fn reconstruction_and_inverse_flow(d in arb_decomp(), u in 0.0f64..4.0, raw in prop::collection::vec(-1.0f64..1.0, 5)) {
            let vals = &raw[..d.n_types()];
            let back = d.evaluate(&d.project(vals));
            for (x, y) in back.iter().zip(vals) {
                prop_assert!((x - y).abs() <= 1e-10);
            }
            prop_assume!(d.supercritical);
            let c = classify(&d, CRITICAL_TOL).unwrap();
            let (g, _, _) = project_components(&d, &c, &d.project(vals));
            let inv = i_operator(&d, &c, &g, u).unwrap();
            let round = semigroup_apply(&d, &inv, u).unwrap();
            for (x, y) in round.coeffs.iter().zip(&g.coeffs) {
                prop_assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0));
            }
        }
    }
}
