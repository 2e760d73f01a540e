//! The generalized Lotka–Volterra system
//!
//! ```text
//! dx_i/dt = x_i (sigma_i - sum_j rho_ij x_j),   i = 1..n
//! ```
//!
//! restricted to the closed positive orthant, together with its axial
//! equilibria `O_k = sigma_k e_k` and their closed-form linearization.
//!
//! Saddle indices (`k`) are 1-based throughout the public API and wrap modulo
//! the cycle length `p`; coordinate slices are ordinary 0-based Rust slices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Right-hand side of a Lotka–Volterra type system `x_i * g_i(x)`.
///
/// `growth` is the per-capita rate `g_i`; integrators working in logarithmic
/// coordinates only need that part.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;

    fn growth(&self, i: usize, x: &[f64]) -> f64;

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.dim() {
            out[i] = x[i] * self.growth(i, x);
        }
    }
}

/// Complete model definition: dimensions, growth rates and inhibition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    n: usize,
    p: usize,
    sigma: Vec<f64>,
    /// Row-major `n x n`.
    rho: Vec<f64>,
}

/// On-disk layout of a parameter file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    /// Optional format tag; files written by this crate carry it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    pub n: usize,
    pub p: usize,
    pub sigma: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
}

impl SystemParams {
    /// Validates and builds a parameter set. `rho` is given as rows.
    pub fn new(n: usize, p: usize, sigma: Vec<f64>, rho: Vec<Vec<f64>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("n must be positive".into()));
        }
        if p == 3 {
            return Err(Error::Unsupported(
                "p = 3 collapses O_{k+2} onto O_{k-1}; cycles need p >= 4".into(),
            ));
        }
        if p < 4 || p > n {
            return Err(Error::InvalidInput(format!(
                "cycle length p = {p} must satisfy 4 <= p <= n = {n}"
            )));
        }
        if sigma.len() != n {
            return Err(Error::InvalidInput(format!(
                "sigma has {} entries, expected n = {n}",
                sigma.len()
            )));
        }
        for (i, &s) in sigma.iter().enumerate() {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "sigma[{}] = {s} must be positive and finite",
                    i + 1
                )));
            }
        }
        if rho.len() != n {
            return Err(Error::InvalidInput(format!(
                "rho has {} rows, expected n = {n}",
                rho.len()
            )));
        }
        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in rho.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidInput(format!(
                    "rho row {} has {} columns, expected n = {n}",
                    i + 1,
                    row.len()
                )));
            }
            for (j, &r) in row.iter().enumerate() {
                if !(r.is_finite() && r > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "rho[{}][{}] = {r} must be positive and finite",
                        i + 1,
                        j + 1
                    )));
                }
                if i == j && r != 1.0 {
                    return Err(Error::InvalidInput(format!(
                        "rho[{}][{}] = {r}: diagonal entries must equal 1",
                        i + 1,
                        j + 1
                    )));
                }
            }
            flat.extend_from_slice(row);
        }
        Ok(Self { n, p, sigma, rho: flat })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ParamsFile = serde_json::from_str(s)?;
        if let Some(tag) = file.schema.as_deref().filter(|t| *t != crate::io::SCHEMA) {
            return Err(Error::Unsupported(format!("parameter file schema {tag:?}")));
        }
        Self::new(file.n, file.p, file.sigma, file.rho)
    }

    pub fn to_file(&self) -> ParamsFile {
        ParamsFile {
            schema: Some(crate::io::SCHEMA.to_string()),
            n: self.n,
            p: self.p,
            sigma: self.sigma.clone(),
            rho: self.rho.chunks(self.n).map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// 1-based growth rate `sigma_i`.
    pub fn sigma_of(&self, i: usize) -> f64 {
        self.sigma[i - 1]
    }

    /// 1-based inhibition coefficient `rho_ij`.
    pub fn rho(&self, i: usize, j: usize) -> f64 {
        self.rho[(i - 1) * self.n + (j - 1)]
    }

    /// Returns a copy with `rho_ij` replaced; the result is re-validated.
    pub fn with_rho(&self, i: usize, j: usize, value: f64) -> Result<Self> {
        let mut rows = self.to_file().rho;
        rows[i - 1][j - 1] = value;
        Self::new(self.n, self.p, self.sigma.clone(), rows)
    }

    /// Cycle arithmetic: the 1-based index of `k + offset` modulo `p`.
    pub fn cyc(&self, k: usize, offset: isize) -> usize {
        cyc(self.p, k, offset)
    }

    pub(crate) fn check_saddle_index(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.n {
            return Err(Error::InvalidInput(format!(
                "saddle index k = {k} outside 1..={}",
                self.n
            )));
        }
        Ok(())
    }

    pub(crate) fn check_cycle_index(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.p {
            return Err(Error::InvalidInput(format!(
                "cycle index k = {k} outside 1..={}",
                self.p
            )));
        }
        Ok(())
    }
}

/// `k + offset` wrapped onto `1..=p`.
pub fn cyc(p: usize, k: usize, offset: isize) -> usize {
    let p = p as isize;
    ((k as isize - 1 + offset).rem_euclid(p) + 1) as usize
}

impl VectorField for SystemParams {
    fn dim(&self) -> usize {
        self.n
    }

    fn growth(&self, i: usize, x: &[f64]) -> f64 {
        let row = &self.rho[i * self.n..(i + 1) * self.n];
        let inhibition: f64 = row.iter().zip(x).map(|(r, xj)| r * xj).sum();
        self.sigma[i] - inhibition
    }
}

/// Evaluates the vector field at `x`.
pub fn vector_field(params: &SystemParams, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != params.n {
        return Err(Error::InvalidInput(format!(
            "state has length {}, expected n = {}",
            x.len(),
            params.n
        )));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("x[{}] is not finite", i + 1)));
    }
    let mut out = vec![0.0; params.n];
    params.eval(x, &mut out);
    Ok(out)
}

/// An axial equilibrium `O_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    pub k: usize,
    pub point: Vec<f64>,
}

/// Axial equilibrium `O_k` as a dense point.
pub fn saddle_point(params: &SystemParams, k: usize) -> Vec<f64> {
    let mut point = vec![0.0; params.n];
    point[k - 1] = params.sigma[k - 1];
    point
}

/// The `n` axial equilibria `O_1 .. O_n`.
pub fn equilibria(params: &SystemParams) -> Vec<Equilibrium> {
    (1..=params.n)
        .map(|k| Equilibrium {
            k,
            point: saddle_point(params, k),
        })
        .collect()
}

/// Linearization data at `O_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleSpectrum {
    pub k: usize,
    /// `eigenvalues[j - 1]` belongs to coordinate direction `j`.
    pub eigenvalues: Vec<f64>,
    /// 1-based directions with positive eigenvalue, ascending.
    pub unstable_set: Vec<usize>,
    /// Smallest positive eigenvalue.
    pub leading_unstable: Option<f64>,
    /// Largest positive eigenvalue.
    pub strongest_unstable: Option<f64>,
    /// Negative eigenvalue closest to zero.
    pub leading_stable: Option<f64>,
    /// Saddle value `min |stable| / max unstable`.
    pub nu: Option<f64>,
}

/// Eigenvalue of `DF(O_k)` along coordinate direction `j` (both 1-based).
pub fn eigenvalue(params: &SystemParams, k: usize, j: usize) -> f64 {
    if j == k {
        -params.sigma_of(k)
    } else {
        params.sigma_of(j) - params.rho(j, k) * params.sigma_of(k)
    }
}

/// Closed-form spectrum of `DF(O_k)`; the matrix is triangular up to a
/// permutation, so the eigenvalues are its diagonal.
pub fn spectrum_at(params: &SystemParams, k: usize) -> Result<SaddleSpectrum> {
    params.check_saddle_index(k)?;
    let eigenvalues: Vec<f64> = (1..=params.n).map(|j| eigenvalue(params, k, j)).collect();
    if let Some(j) = eigenvalues.iter().position(|&l| l == 0.0) {
        return Err(Error::DegenerateSaddle { k, j: j + 1 });
    }
    let unstable_set: Vec<usize> = eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0.0)
        .map(|(j, _)| j + 1)
        .collect();
    let positives = eigenvalues.iter().copied().filter(|&l| l > 0.0);
    let leading_unstable = positives.clone().reduce(f64::min);
    let strongest_unstable = positives.reduce(f64::max);
    let leading_stable = eigenvalues.iter().copied().filter(|&l| l < 0.0).reduce(f64::max);
    let nu = match (leading_stable, strongest_unstable) {
        (Some(s), Some(u)) => Some(-s / u),
        _ => None,
    };
    Ok(SaddleSpectrum {
        k,
        eigenvalues,
        unstable_set,
        leading_unstable,
        strongest_unstable,
        leading_stable,
        nu,
    })
}

/// Eigenvector of `DF(O_k)` for direction `j != k`, scaled so its `j`-th
/// component is one. Only components `j` and `k` are non-zero.
pub fn eigenvector(params: &SystemParams, k: usize, j: usize) -> Vec<f64> {
    let mut v = vec![0.0; params.n];
    v[j - 1] = 1.0;
    if j != k {
        let sk = params.sigma_of(k);
        v[k - 1] = -sk * params.rho(k, j) / (eigenvalue(params, k, j) + sk);
    }
    v
}
