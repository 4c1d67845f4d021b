use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use crate::limits::exp_convolution;
use crate::model::{derive_coefficients, FiniteTypeModel};
use crate::spectral::SpectralDecomposition;

/// Above this Poisson mean the count is drawn from its normal approximation.
const POISSON_NORMAL_CUTOFF: f64 = 1e12;

#[derive(Debug, Clone)]
struct Atom {
    /// `beta_i * w_r * h`: Poisson mean per unit mass over one step.
    rate: f64,
    y: f64,
}

/// Per-step constants shared by every replica.
#[derive(Debug, Clone)]
pub struct Precomputed {
    n: usize,
    h: f64,
    /// `exp((h / 2) Q)`, row-major; mass moves as `x <- P^T x`.
    mig_half: Vec<f64>,
    /// `exp(alpha' h)` with `alpha'` the drift net of the jump compensator.
    growth: Vec<f64>,
    /// Gamma scale of the exact branching transition; zero when there is no
    /// diffusive branching.
    kappa: Vec<f64>,
    atoms: Vec<Vec<Atom>>,
    /// The generator `L`, row-major.
    generator: Vec<f64>,
    /// `2 beta_i b_i`.
    diffusion: Vec<f64>,
    /// `beta_i sum_r w_r y_r`.
    compensator: Vec<f64>,
    /// `exp(-lambda_p h)` per eigenvector.
    decay: Vec<f64>,
    /// `noise[r][k * n + l]`: covariance of the eigen-coordinate increment
    /// per unit of `Z_r`.
    noise: Vec<Vec<f64>>,
}

impl Precomputed {
    pub fn new(model: &FiniteTypeModel, decomp: &SpectralDecomposition, h: f64) -> Self {
        let n = model.n_types();
        let q = DMatrix::from_fn(n, n, |i, j| model.q[i][j] * 0.5 * h);
        let p = q.exp();
        let mig_half = (0..n * n).map(|k| p[(k / n, k % n)]).collect();

        let mut growth = Vec::with_capacity(n);
        let mut kappa = Vec::with_capacity(n);
        for i in 0..n {
            let net = model.beta[i] * (model.a[i] - model.jump_first_moment(i));
            let c = model.beta[i] * model.b[i];
            growth.push((net * h).exp());
            kappa.push(c * h * crate::limits::exp_rel(net * h));
        }
        let atoms = (0..n)
            .map(|i| {
                model.jumps[i]
                    .iter()
                    .map(|a| Atom {
                        rate: model.beta[i] * a.w * h,
                        y: a.y,
                    })
                    .collect()
            })
            .collect();

        let generator = decomp.generator.iter().flatten().copied().collect();
        let diffusion = (0..n).map(|i| 2.0 * model.beta[i] * model.b[i]).collect();
        let compensator = (0..n)
            .map(|i| model.beta[i] * model.jump_first_moment(i))
            .collect();

        let lambda: Vec<f64> = (0..n).map(|p| decomp.lambda_of(p)).collect();
        let decay = lambda.iter().map(|l| (-l * h).exp()).collect();
        let big_a = derive_coefficients(model).big_a;
        let d = decomp.triple_products(&big_a);
        let noise = (0..n)
            .map(|r| {
                (0..n * n)
                    .map(|kl| {
                        let (k, l) = (kl / n, kl % n);
                        d[k][l][r] * exp_convolution(-(lambda[k] + lambda[l]), -lambda[r], h)
                    })
                    .collect()
            })
            .collect();

        Precomputed {
            n,
            h,
            mig_half,
            growth,
            kappa,
            atoms,
            generator,
            diffusion,
            compensator,
            decay,
            noise,
        }
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    fn migrate_half(&self, x: &mut [f64], scratch: &mut [f64]) {
        let n = self.n;
        for (j, s) in scratch.iter_mut().enumerate() {
            *s = (0..n).map(|i| x[i] * self.mig_half[i * n + j]).sum::<f64>().max(0.0);
        }
        x.copy_from_slice(scratch);
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        0.0
    } else if mean > POISSON_NORMAL_CUTOFF {
        let z: f64 = StandardNormal.sample(rng);
        (mean + mean.sqrt() * z).round().max(0.0)
    } else {
        Poisson::new(mean).expect("finite positive mean").sample(rng)
    }
}

/// Exact one-type CSBP transition over `h` for `psi(l) = -alpha' l + c l^2`:
/// `N ~ Poisson(x e^{alpha' h} / kappa)`, `X' ~ Gamma(N, kappa)`.
fn branch<R: Rng + ?Sized>(x: f64, growth: f64, kappa: f64, rng: &mut R) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if kappa <= 0.0 {
        return x * growth;
    }
    let count = poisson(x * growth / kappa, rng);
    if count == 0.0 {
        0.0
    } else {
        Gamma::new(count, kappa).expect("positive shape").sample(rng)
    }
}

fn jumps<R: Rng + ?Sized>(x: f64, atoms: &[Atom], rng: &mut R) -> f64 {
    atoms
        .iter()
        .map(|a| poisson(a.rate * x, rng) * a.y)
        .sum()
}

/// One Strang step: migration h/2, exact branching and jumps, migration h/2.
pub fn step_strang<R: Rng + ?Sized>(x: &mut [f64], pre: &Precomputed, rng: &mut R) {
    let mut scratch = vec![0.0; pre.n];
    pre.migrate_half(x, &mut scratch);
    for i in 0..pre.n {
        let before = x[i];
        let mut next = branch(before, pre.growth[i], pre.kappa[i], rng);
        if before > 0.0 && !pre.atoms[i].is_empty() {
            next += jumps(before, &pre.atoms[i], rng);
        }
        x[i] = next;
    }
    pre.migrate_half(x, &mut scratch);
}

/// One Euler–Maruyama step with full truncation at zero.
pub fn step_euler<R: Rng + ?Sized>(x: &mut [f64], pre: &Precomputed, rng: &mut R) {
    let n = pre.n;
    let h = pre.h;
    let pos: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    for i in 0..n {
        let drift: f64 = (0..n).map(|j| pos[j] * pre.generator[j * n + i]).sum();
        let z: f64 = StandardNormal.sample(rng);
        let mut next = x[i] + drift * h + (pre.diffusion[i] * pos[i] * h).sqrt() * z;
        if pos[i] > 0.0 && !pre.atoms[i].is_empty() {
            next += jumps(pos[i], &pre.atoms[i], rng) - pre.compensator[i] * pos[i] * h;
        }
        x[i] = next.max(0.0);
    }
}

/// Gaussian step in eigen-coordinates with the exact conditional mean
/// `e^{-lambda_k h} Z_k` and covariance `sum_r Z_r noise_r`.
pub fn step_gaussian<R: Rng + ?Sized>(z: &mut [f64], pre: &Precomputed, rng: &mut R) {
    let n = pre.n;
    let mut cov = vec![0.0; n * n];
    for (r, zr) in z.iter().enumerate() {
        for (c, v) in cov.iter_mut().zip(&pre.noise[r]) {
            *c += zr * v;
        }
    }
    let chol = cholesky_clamped(&cov, n);
    let xi: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    for k in 0..n {
        let shock: f64 = (0..=k).map(|l| chol[k * n + l] * xi[l]).sum();
        z[k] = pre.decay[k] * z[k] + shock;
    }
}

/// Lower Cholesky factor; nonpositive pivots drop their column.
fn cholesky_clamped(a: &[f64], n: usize) -> Vec<f64> {
    let mut l = vec![0.0f64; n * n];
    for j in 0..n {
        let pivot = a[j * n + j] - (0..j).map(|k| l[j * n + k].powi(2)).sum::<f64>();
        if pivot <= 0.0 {
            continue;
        }
        let d = pivot.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let s = a[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
            l[i * n + j] = s / d;
        }
    }
    l
}
