//! The generative model `x_it = μ_t + ε_it`, `ε_it ~ NIID(0, σ²)`, with `m`
//! replicates per group and `n` groups.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::NormalStream;

/// How the incidental group means `μ_1..μ_n` are filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanScheme {
    Constant {
        c: f64,
    },
    /// `μ_t = a + b·t` for `t = 1..n`.
    Linear {
        a: f64,
        b: f64,
    },
    Explicit {
        values: Vec<f64>,
    },
    /// `μ_0 = 0`, `μ_t = μ_{t-1} + step_sd·z_t` with `z_t` drawn from `seed`.
    RandomWalk {
        step_sd: f64,
        seed: u64,
    },
}

impl Default for MeanScheme {
    fn default() -> Self {
        MeanScheme::Linear { a: 0.0, b: 1.0 }
    }
}

impl MeanScheme {
    pub fn materialize(&self, n: usize) -> Result<Vec<f64>> {
        let mu = match self {
            MeanScheme::Constant { c } => vec![*c; n],
            MeanScheme::Linear { a, b } => (1..=n).map(|t| a + b * t as f64).collect(),
            MeanScheme::Explicit { values } => {
                if values.len() != n {
                    return Err(Error::MeanLengthMismatch {
                        expected: n,
                        got: values.len(),
                    });
                }
                values.clone()
            }
            MeanScheme::RandomWalk { step_sd, seed } => {
                if !(step_sd.is_finite() && *step_sd > 0.0) {
                    return Err(Error::InvalidStepSd(*step_sd));
                }
                let mut stream = NormalStream::new(*seed);
                let mut level = 0.0;
                (0..n)
                    .map(|_| {
                        level += step_sd * stream.next_standard();
                        level
                    })
                    .collect()
            }
        };
        if let Some(bad) = mu.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("group mean {bad}")));
        }
        Ok(mu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    m: usize,
    n: usize,
    sigma2: f64,
    mu: Vec<f64>,
}

impl ModelSpec {
    pub fn new(m: usize, n: usize, sigma2: f64, mu: Vec<f64>) -> Result<Self> {
        let spec = ModelSpec { m, n, sigma2, mu };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::TooFewReplicates(self.m));
        }
        if self.n < 1 {
            return Err(Error::NoGroups(self.n));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::NonPositiveVariance(self.sigma2));
        }
        if self.mu.len() != self.n {
            return Err(Error::MeanLengthMismatch {
                expected: self.n,
                got: self.mu.len(),
            });
        }
        if self.mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("group mean".into()));
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
}

/// Builds a validated spec, materializing the group means from `scheme`.
pub fn make_spec(m: usize, n: usize, sigma2: f64, scheme: &MeanScheme) -> Result<ModelSpec> {
    if m < 2 {
        return Err(Error::TooFewReplicates(m));
    }
    if n < 1 {
        return Err(Error::NoGroups(n));
    }
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::NonPositiveVariance(sigma2));
    }
    ModelSpec::new(m, n, sigma2, scheme.materialize(n)?)
}

/// An `m × n` panel of observations, stored group-major (`values[t·m + i]`).
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    m: usize,
    n: usize,
    values: Vec<f64>,
    spec: Option<ModelSpec>,
    seed: Option<u64>,
}

impl PanelData {
    /// Wraps group-major observations that did not come from `generate_panel`.
    pub fn from_groups(m: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        if m < 2 {
            return Err(Error::TooFewReplicates(m));
        }
        if n < 1 {
            return Err(Error::NoGroups(n));
        }
        if values.len() != m * n {
            return Err(Error::Dimension(format!(
                "{} values for an m={m} x n={n} panel",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "x[{}, {}] = {}",
                pos % m + 1,
                pos / m + 1,
                values[pos]
            )));
        }
        Ok(PanelData {
            m,
            n,
            values,
            spec: None,
            seed: None,
        })
    }

    /// Attaches generating metadata; the spec's dimensions must match.
    pub fn with_provenance(mut self, spec: ModelSpec, seed: Option<u64>) -> Result<Self> {
        spec.validate()?;
        if spec.m() != self.m || spec.n() != self.n {
            return Err(Error::Dimension(format!(
                "spec is {}x{}, panel is {}x{}",
                spec.m(),
                spec.n(),
                self.m,
                self.n
            )));
        }
        self.spec = Some(spec);
        self.seed = seed;
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spec(&self) -> Option<&ModelSpec> {
        self.spec.as_ref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Observation `x_it` with zero-based `replicate` and `group`.
    pub fn get(&self, replicate: usize, group: usize) -> f64 {
        self.values[group * self.m + replicate]
    }

    /// The `m` replicates of group `t` (zero-based).
    pub fn group(&self, t: usize) -> &[f64] {
        &self.values[t * self.m..(t + 1) * self.m]
    }

    pub fn groups(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.m)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The first `n` groups as a new panel (spec truncated accordingly).
    pub fn prefix(&self, n: usize) -> Result<PanelData> {
        if n < 1 || n > self.n {
            return Err(Error::Dimension(format!(
                "prefix of {n} groups from a panel with {}",
                self.n
            )));
        }
        let spec = self
            .spec
            .as_ref()
            .map(|s| ModelSpec::new(s.m, n, s.sigma2, s.mu[..n].to_vec()))
            .transpose()?;
        Ok(PanelData {
            m: self.m,
            n,
            values: self.values[..n * self.m].to_vec(),
            spec,
            seed: self.seed,
        })
    }
}

/// Draws `x_it = μ_t + σ·z_it` group by group, replicate by replicate, from the
/// Normal stream keyed by `seed`. A pure function of `(spec, seed)`.
pub fn generate_panel(spec: &ModelSpec, seed: u64) -> Result<PanelData> {
    spec.validate()?;
    let sd = spec.sigma2.sqrt();
    let mut stream = NormalStream::new(seed);
    let mut values = Vec::with_capacity(spec.m * spec.n);
    for &mu in &spec.mu {
        for _ in 0..spec.m {
            values.push(mu + sd * stream.next_standard());
        }
    }
    Ok(PanelData {
        m: spec.m,
        n: spec.n,
        values,
        spec: Some(spec.clone()),
        seed: Some(seed),
    })
}
