//! Finite-type superprocess models: motion chain, branching mechanism and jump atoms.
//!
//! A model is read from a JSON document with the keys `m`, `Q`, `beta`, `a`, `b`,
//! `jumps` and `mu0` (plus an optional `name`). Type indices in `jumps` are
//! 1-based, matching the messages produced by validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for structural equalities (row sums, reversibility).
pub const STRUCTURE_TOL: f64 = 1e-12;

/// One atom `w * delta_y` of the jump measure `n(x, dy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpAtom {
    pub y: f64,
    pub w: f64,
}

/// The motion chain `Q` (reversible w.r.t. `m`) together with the branching
/// data `beta`, `a`, `b` and per-type jump atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteTypeModel {
    pub name: Option<String>,
    pub m: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `jumps[i]` lists the atoms of `n(i, dy)`.
    pub jumps: Vec<Vec<JumpAtom>>,
    pub mu0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JumpEntry {
    #[serde(rename = "type")]
    ty: usize,
    y: f64,
    w: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    m: Vec<f64>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    beta: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    #[serde(default)]
    jumps: Vec<JumpEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu0: Option<Vec<f64>>,
}

/// `alpha = beta * a`, `A = beta * (2b + sum w y^2)` and `K = max(|alpha| + A)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedCoefficients {
    pub alpha: Vec<f64>,
    #[serde(rename = "A")]
    pub big_a: Vec<f64>,
    #[serde(rename = "K")]
    pub k: f64,
}

/// Parse and validate a model document.
pub fn load_model(config_text: &str) -> Result<FiniteTypeModel> {
    let doc: ModelDocument =
        serde_json::from_str(config_text).map_err(|e| Error::Parse(e.to_string()))?;
    let n = doc.m.len();
    let mut jumps = vec![Vec::new(); n];
    for entry in &doc.jumps {
        if entry.ty == 0 || entry.ty > n {
            return Err(Error::Validation(format!(
                "jump type {} out of range 1..={}",
                entry.ty, n
            )));
        }
        jumps[entry.ty - 1].push(JumpAtom {
            y: entry.y,
            w: entry.w,
        });
    }
    let model = FiniteTypeModel {
        name: doc.name,
        m: doc.m,
        q: doc.q,
        beta: doc.beta,
        a: doc.a,
        b: doc.b,
        jumps,
        mu0: doc.mu0,
    };
    model.validate()?;
    Ok(model)
}

/// Serialize a model back to its JSON document form.
pub fn serialize_model(model: &FiniteTypeModel) -> String {
    let doc = ModelDocument {
        name: model.name.clone(),
        m: model.m.clone(),
        q: model.q.clone(),
        beta: model.beta.clone(),
        a: model.a.clone(),
        b: model.b.clone(),
        jumps: model
            .jumps
            .iter()
            .enumerate()
            .flat_map(|(i, atoms)| {
                atoms.iter().map(move |atom| JumpEntry {
                    ty: i + 1,
                    y: atom.y,
                    w: atom.w,
                })
            })
            .collect(),
        mu0: model.mu0.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("model document serializes")
}

fn check_len(name: &str, len: usize, n: usize) -> Result<()> {
    if len != n {
        return Err(Error::Validation(format!(
            "{name} has length {len}, expected {n}"
        )));
    }
    Ok(())
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!(
            "{name} finite violated at {}",
            i + 1
        )));
    }
    Ok(())
}

fn check_nonnegative(name: &str, values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|&v| v < 0.0) {
        return Err(Error::Validation(format!(
            "{name} nonnegative violated at {}",
            i + 1
        )));
    }
    Ok(())
}

impl FiniteTypeModel {
    pub fn n_types(&self) -> usize {
        self.m.len()
    }

    /// Check every structural invariant, reporting the first violation.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_types();
        if n == 0 {
            return Err(Error::Validation("n_types must be positive".into()));
        }
        check_len("Q", self.q.len(), n)?;
        for row in &self.q {
            check_len("Q row", row.len(), n)?;
        }
        check_len("beta", self.beta.len(), n)?;
        check_len("a", self.a.len(), n)?;
        check_len("b", self.b.len(), n)?;
        check_len("jumps", self.jumps.len(), n)?;

        check_finite("m", &self.m)?;
        for row in &self.q {
            check_finite("Q", row)?;
        }
        check_finite("beta", &self.beta)?;
        check_finite("a", &self.a)?;
        check_finite("b", &self.b)?;

        if let Some(i) = self.m.iter().position(|&v| v <= 0.0) {
            return Err(Error::Validation(format!(
                "m positive violated at {}",
                i + 1
            )));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && self.q[i][j] < 0.0 {
                    return Err(Error::Validation(format!(
                        "Q off-diagonal nonnegative violated at ({},{})",
                        i + 1,
                        j + 1
                    )));
                }
            }
            let row_sum: f64 = self.q[i].iter().sum();
            if row_sum.abs() > STRUCTURE_TOL {
                return Err(Error::Validation(format!(
                    "Q row sum zero violated at row {} (sum {row_sum:e})",
                    i + 1
                )));
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let lhs = self.m[i] * self.q[i][j];
                let rhs = self.m[j] * self.q[j][i];
                if (lhs - rhs).abs() > STRUCTURE_TOL {
                    return Err(Error::Validation(format!(
                        "reversibility violated at ({},{})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        if !self.is_irreducible() {
            return Err(Error::Validation("Q irreducible violated".into()));
        }
        check_nonnegative("beta", &self.beta)?;
        check_nonnegative("b", &self.b)?;
        for (i, atoms) in self.jumps.iter().enumerate() {
            for atom in atoms {
                if !(atom.y.is_finite() && atom.y > 0.0) {
                    return Err(Error::Validation(format!(
                        "jump size positive violated at type {}",
                        i + 1
                    )));
                }
                if !(atom.w.is_finite() && atom.w >= 0.0) {
                    return Err(Error::Validation(format!(
                        "jump weight nonnegative violated at type {}",
                        i + 1
                    )));
                }
            }
        }
        if let Some(mu0) = &self.mu0 {
            check_len("mu0", mu0.len(), n)?;
            check_finite("mu0", mu0)?;
            check_nonnegative("mu0", mu0)?;
        }
        Ok(())
    }

    fn is_irreducible(&self) -> bool {
        // reversibility makes the positive-rate graph undirected, so one sweep suffices
        let n = self.n_types();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !seen[j] && (self.q[i][j] > 0.0 || self.q[j][i] > 0.0) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Total jump intensity `sum_r w_r` for type `i`.
    pub fn jump_mass(&self, i: usize) -> f64 {
        self.jumps[i].iter().map(|atom| atom.w).sum()
    }

    /// First jump moment `sum_r w_r y_r` for type `i`.
    pub fn jump_first_moment(&self, i: usize) -> f64 {
        self.jumps[i].iter().map(|atom| atom.w * atom.y).sum()
    }

    /// Second jump moment `sum_r w_r y_r^2` for type `i`.
    pub fn jump_second_moment(&self, i: usize) -> f64 {
        self.jumps[i].iter().map(|atom| atom.w * atom.y * atom.y).sum()
    }

    /// Branching mechanism `psi(i, lambda)` (without the rate `beta`).
    pub fn psi(&self, i: usize, lambda: f64) -> f64 {
        let jumps: f64 = self.jumps[i]
            .iter()
            .map(|atom| atom.w * ((-lambda * atom.y).exp_m1() + lambda * atom.y))
            .sum();
        -self.a[i] * lambda + self.b[i] * lambda * lambda + jumps
    }

    /// Initial measure from the document, or an error naming what is missing.
    pub fn initial_mass(&self) -> Result<&[f64]> {
        self.mu0
            .as_deref()
            .ok_or_else(|| Error::Config("model config has no mu0".into()))
    }
}

pub fn derive_coefficients(model: &FiniteTypeModel) -> DerivedCoefficients {
    let n = model.n_types();
    let alpha: Vec<f64> = (0..n).map(|i| model.beta[i] * model.a[i]).collect();
    let big_a: Vec<f64> = (0..n)
        .map(|i| model.beta[i] * (2.0 * model.b[i] + model.jump_second_moment(i)))
        .collect();
    let k = alpha
        .iter()
        .zip(&big_a)
        .map(|(al, aa)| al.abs() + aa)
        .fold(0.0, f64::max);
    DerivedCoefficients { alpha, big_a, k }
}

/// Sufficient check for almost-sure extinction with positive probability:
/// every type carries a quadratic branching term. A `false` result does not
/// prove the condition fails.
pub fn check_grey_condition(model: &FiniteTypeModel) -> bool {
    model
        .beta
        .iter()
        .zip(&model.b)
        .map(|(beta, b)| beta * b)
        .fold(f64::INFINITY, f64::min)
        > 0.0
}

/// Reference models shipped with the repository under `configs/`.
pub mod reference {
    use super::{load_model, FiniteTypeModel};

    pub const SYM2: &str = include_str!("../../../configs/sym2.json");
    pub const CRIT2: &str = include_str!("../../../configs/crit2.json");
    pub const ASYM2: &str = include_str!("../../../configs/asym2.json");

    /// Symmetric two-type model: `lambda = (-0.5, 1.5)`.
    pub fn sym2() -> FiniteTypeModel {
        load_model(SYM2).expect("sym2 fixture is valid")
    }

    /// Two-type model with `2 lambda_2 = lambda_1` (non-empty critical space).
    pub fn crit2() -> FiniteTypeModel {
        load_model(CRIT2).expect("crit2 fixture is valid")
    }

    /// Same spectrum as `sym2` with asymmetric `A = (0.5, 1.0)`.
    pub fn asym2() -> FiniteTypeModel {
        load_model(ASYM2).expect("asym2 fixture is valid")
    }
}
