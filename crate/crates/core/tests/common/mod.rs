//! Independent oracles for integration tests: adaptive Gauss–Kronrod
//! quadrature, a cyclic Jacobi eigensolver, and random reversible models.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use superclt::model::{load_model, FiniteTypeModel};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let pair = f(c - x) + f(c + x);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive G7K15 on `[a, b]` to relative tolerance `rel` (absolute floor `abs`).
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel: f64, abs: f64) -> f64 {
    let mut parts = vec![(a, b, gk15(f, a, b))];
    for _ in 0..5000 {
        let total: f64 = parts.iter().map(|p| p.2 .0).sum();
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if err <= (rel * total.abs()).max(abs) {
            return total;
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.partial_cmp(&y.1 .2 .1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let (lo, hi, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk15(f, lo, mid)));
        parts.push((mid, hi, gk15(f, mid, hi)));
    }
    let total: f64 = parts.iter().map(|p| p.2 .0).sum();
    let err: f64 = parts.iter().map(|p| p.2 .1).sum();
    panic!("quadrature did not converge on [{a}, {b}]: {total:e} +- {err:e}");
}

/// `int_0^inf f` via `s = u / (1 - u)`.
pub fn integrate_to_infinity(f: &dyn Fn(f64) -> f64, rel: f64, abs: f64) -> f64 {
    let g = |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let s = u / (1.0 - u);
        let v = f(s) / ((1.0 - u) * (1.0 - u));
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(&g, 0.0, 1.0, rel, abs)
}

/// Eigenpairs of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(i == j)).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap());
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

/// Spectrum of the mean generator `L = Q + diag(beta a)` computed
/// independently of the crate: `lambda` ascending (`lambda_1 = -top eigenvalue`)
/// and m-orthonormal eigenvectors.
pub struct OracleSpectrum {
    pub lambda: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub generator: Vec<Vec<f64>>,
    pub m: Vec<f64>,
}

pub fn oracle_spectrum(model: &FiniteTypeModel) -> OracleSpectrum {
    let n = model.n_types();
    let l: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| model.q[i][j] + if i == j { model.beta[i] * model.a[i] } else { 0.0 })
                .collect()
        })
        .collect();
    let sq: Vec<f64> = model.m.iter().map(|v| v.sqrt()).collect();
    let sym: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (sq[i] * l[i][j] / sq[j] + sq[j] * l[j][i] / sq[i])).collect())
        .collect();
    let (vals, vecs) = jacobi_eigen(sym);
    let mut lambda = Vec::new();
    let mut phi = Vec::new();
    for k in (0..n).rev() {
        lambda.push(-vals[k]);
        let mut p: Vec<f64> = (0..n).map(|i| vecs[k][i] / sq[i]).collect();
        if p.iter().sum::<f64>() < 0.0 {
            p.iter_mut().for_each(|x| *x = -*x);
        }
        phi.push(p);
    }
    OracleSpectrum {
        lambda,
        phi,
        generator: l,
        m: model.m.clone(),
    }
}

impl OracleSpectrum {
    /// `T_t f = exp(t L) f` on values, by matrix exponential.
    pub fn semigroup(&self, f: &[f64], t: f64) -> Vec<f64> {
        let n = f.len();
        let e = DMatrix::from_fn(n, n, |i, j| self.generator[i][j] * t).exp();
        (0..n).map(|i| (0..n).map(|j| e[(i, j)] * f[j]).sum()).collect()
    }

    /// Inverse flow on an eigen-expansion: coefficients grow by `e^{lambda_k u}`.
    pub fn inverse_flow(&self, coeffs: &[f64], u: f64) -> Vec<f64> {
        self.tilted_flow(coeffs, u, 0.0)
    }

    /// `e^{shift u} I_u`, with the tilt folded into each exponent so that
    /// long ranges do not overflow.
    pub fn tilted_flow(&self, coeffs: &[f64], u: f64, shift: f64) -> Vec<f64> {
        let n = coeffs.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&p| coeffs[p] != 0.0)
                    .map(|p| coeffs[p] * ((self.lambda[p] + shift) * u).exp() * self.phi[p][i])
                    .sum()
            })
            .collect()
    }

    pub fn values(&self, coeffs: &[f64]) -> Vec<f64> {
        self.inverse_flow(coeffs, 0.0)
    }

    /// `<u, phi_1>_m`.
    pub fn pair_phi1(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.phi[0]).zip(&self.m).map(|((a, b), w)| a * b * w).sum()
    }
}

/// `A_i = beta_i (2 b_i + sum_r w_r y_r^2)`.
pub fn big_a(model: &FiniteTypeModel) -> Vec<f64> {
    (0..model.n_types())
        .map(|i| {
            let jumps: f64 = model.jumps[i].iter().map(|a| a.w * a.y * a.y).sum();
            model.beta[i] * (2.0 * model.b[i] + jumps)
        })
        .collect()
}

/// A random irreducible reversible model with `2..=max_n` types, positive
/// drift on every type (hence supercritical) and quadratic branching
/// everywhere; roughly half carry jump atoms.
pub fn random_model(seed: u64, max_n: usize) -> FiniteTypeModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_n);
    let m: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..2.3)).collect();
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            // a chain backbone keeps the graph connected
            let s: f64 = if j == i + 1 || rng.random_bool(0.5) { rng.random_range(0.2..2.0) } else { 0.0 };
            q[i][j] = s / m[i];
            q[j][i] = s / m[j];
        }
    }
    for i in 0..n {
        q[i][i] = -(0..n).filter(|&j| j != i).map(|j| q[i][j]).sum::<f64>();
    }
    let beta: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.5)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let with_jumps = rng.random_bool(0.5);
    let mut jumps = Vec::new();
    if with_jumps {
        for i in 0..n {
            jumps.push(serde_json::json!({"type": i + 1, "y": rng.random_range(0.1..1.0), "w": rng.random_range(0.0..1.0)}));
        }
    }
    let mut mu0 = vec![0.0; n];
    mu0[0] = 1.0;
    let doc = serde_json::json!({
        "name": format!("random-{seed}"),
        "m": m, "Q": q, "beta": beta, "a": a, "b": b, "jumps": jumps, "mu0": mu0,
    });
    load_model(&doc.to_string()).expect("random model is valid")
}
