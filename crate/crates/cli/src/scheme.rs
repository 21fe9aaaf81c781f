//! `--scheme` grammar: `constant:<c>`, `linear:<a>,<b>`, `explicit:@<file>`,
//! `randomwalk:<sd>`.

use std::path::PathBuf;
use std::str::FromStr;

use neyman_scott::rng::derive_aux_seed;
use neyman_scott::MeanScheme;

pub const GRAMMAR: &str = "constant:<c> | linear:<a>,<b> | explicit:@<file> | randomwalk:<sd>";

#[derive(Debug, Clone, PartialEq)]
pub enum SchemeArg {
    Constant(f64),
    Linear(f64, f64),
    Explicit(PathBuf),
    RandomWalk(f64),
}

fn number(s: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("`{s}` is not a finite number"))
}

impl FromStr for SchemeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("scheme `{s}` must look like {GRAMMAR}"))?;
        match kind.trim().to_ascii_lowercase().as_str() {
            "constant" => Ok(SchemeArg::Constant(number(rest)?)),
            "linear" => {
                let (a, b) = rest
                    .split_once(',')
                    .ok_or_else(|| format!("linear scheme needs `linear:<a>,<b>`, got `{s}`"))?;
                Ok(SchemeArg::Linear(number(a)?, number(b)?))
            }
            "explicit" => {
                let path = rest.strip_prefix('@').ok_or_else(|| {
                    format!("explicit scheme needs `explicit:@<file>`, got `{s}`")
                })?;
                Ok(SchemeArg::Explicit(PathBuf::from(path)))
            }
            "randomwalk" => {
                let sd = number(rest)?;
                if sd <= 0.0 {
                    return Err(format!("random-walk step sd must be > 0, got {sd}"));
                }
                Ok(SchemeArg::RandomWalk(sd))
            }
            other => Err(format!("unknown scheme `{other}`; expected {GRAMMAR}")),
        }
    }
}

impl SchemeArg {
    /// Resolves to a library scheme. Random-walk means draw from a stream
    /// derived from `seed`; explicit means are read from whitespace- or
    /// comma-separated text.
    pub fn resolve(&self, seed: u64) -> Result<MeanScheme, String> {
        Ok(match self {
            SchemeArg::Constant(c) => MeanScheme::Constant { c: *c },
            SchemeArg::Linear(a, b) => MeanScheme::Linear { a: *a, b: *b },
            SchemeArg::RandomWalk(sd) => MeanScheme::RandomWalk {
                step_sd: *sd,
                seed: derive_aux_seed(seed, 1),
            },
            SchemeArg::Explicit(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("{}: {e}", path.display()))?;
                let values = text
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|t| !t.is_empty())
                    .map(number)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| format!("{}: {e}", path.display()))?;
                MeanScheme::Explicit { values }
            }
        })
    }
}
