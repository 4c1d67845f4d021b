use std::fmt::Write as _;

use serde::Serialize;
use superclt::simulate::ReplicaEnsemble;
use superclt::{EigenClassification, LimitCovariance, SpectralDecomposition};

#[derive(Debug, Serialize)]
pub struct SpectrumView<'a> {
    pub model: Option<&'a str>,
    pub lambdas: &'a [f64],
    pub multiplicities: &'a [usize],
    pub classification: Option<&'a EigenClassification>,
    pub phi1: &'a [f64],
    pub supercritical: bool,
    pub eigenvectors: &'a [Vec<f64>],
}

impl<'a> SpectrumView<'a> {
    pub fn new(
        model: Option<&'a str>,
        d: &'a SpectralDecomposition,
        classification: Option<&'a EigenClassification>,
    ) -> Self {
        SpectrumView {
            model,
            lambdas: &d.lambdas,
            multiplicities: &d.multiplicities,
            classification,
            phi1: d.phi1(),
            supercritical: d.supercritical,
            eigenvectors: &d.phis,
        }
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>3} {:>16} {:>4}  class", "k", "lambda_k", "n_k");
        for (k, (lambda, n)) in self.lambdas.iter().zip(self.multiplicities).enumerate() {
            let class = match self.classification {
                Some(c) if c.large.contains(&k) => "large",
                Some(c) if c.critical.contains(&k) => "critical",
                Some(c) if c.small.contains(&k) => "small",
                _ => "-",
            };
            let _ = writeln!(out, "{:>3} {:>16.10} {:>4}  {class}", k + 1, lambda, n);
        }
        let phi1: Vec<String> = self.phi1.iter().map(|v| format!("{v:.10}")).collect();
        let _ = writeln!(out, "phi_1 = ({})", phi1.join(", "));
        let _ = writeln!(out, "supercritical: {}", if self.supercritical { "yes" } else { "no" });
        out
    }
}

/// One row per entry of the grid matrix (blocks `G1`/`G3` by position),
/// then the constant `rho_sq`.
pub fn limits_csv(cov: &LimitCovariance) -> String {
    let n = cov.tau_grid.len();
    let mut out = String::from("block,i,j,tau1,tau2,value,provenance\n");
    let label = |i: usize| if i < n { "G1" } else { "G3" };
    for (i, row) in cov.grid_matrix.iter().enumerate() {
        for (j, value) in row.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}{},{},{},{},{},{},closed-form",
                label(i),
                label(j),
                i % n + 1,
                j % n + 1,
                cov.tau_grid[i % n],
                cov.tau_grid[j % n],
                value
            );
        }
    }
    let _ = writeln!(out, "rho_sq,,,,,{},closed-form", cov.rho_sq);
    out
}

/// `replica,time,X_1..X_n,extinct`, replica-major.
pub fn paths_csv(ens: &ReplicaEnsemble) -> String {
    let mut out = String::from("replica,time");
    for i in 1..=ens.n_types {
        let _ = write!(out, ",X_{i}");
    }
    out.push_str(",extinct\n");
    for (r, path) in ens.paths.iter().enumerate() {
        for (obs, t) in ens.times.iter().enumerate() {
            let _ = write!(out, "{r},{t}");
            for x in path.mass_at(obs) {
                let _ = write!(out, ",{x}");
            }
            let _ = writeln!(out, ",{}", u8::from(path.extinct[obs]));
        }
    }
    out
}
