use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{JumpLaw, JumpTerm, LevyComponent, MapSpec, Sign};
use crate::error::{Error, Result};
use crate::linalg::RMatrix;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    n_states: usize,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    states: Vec<StateFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trans_jumps: Option<Vec<LawFile>>,
    spectrally_negative: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    drift: f64,
    sigma2: f64,
    #[serde(default)]
    jumps: Vec<JumpFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JumpFile {
    rate: f64,
    law: LawFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Family {
    Degenerate,
    Exponential,
    Mixture,
}

/// `params`: `[c]` for a point mass, `[rate]` for an exponential, and
/// `[w1, r1, w2, r2, ...]` for a mixture.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LawFile {
    family: Family,
    params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sign: Option<Sign>,
}

impl LawFile {
    fn into_law(self, path: &str) -> Result<JumpLaw> {
        let need_sign =
            || self.sign.ok_or_else(|| Error::Parse(format!("{path}.sign: required for family {:?}", self.family)));
        match self.family {
            Family::Degenerate => match self.params.as_slice() {
                [c] => Ok(JumpLaw::Degenerate { at: *c }),
                _ => Err(Error::Parse(format!("{path}.params: degenerate law takes exactly one parameter"))),
            },
            Family::Exponential => match self.params.as_slice() {
                [r] => Ok(JumpLaw::Exponential { rate: *r, sign: need_sign()? }),
                _ => Err(Error::Parse(format!("{path}.params: exponential law takes exactly one parameter"))),
            },
            Family::Mixture => {
                if self.params.is_empty() || !self.params.len().is_multiple_of(2) {
                    return Err(Error::Parse(format!(
                        "{path}.params: mixture takes weight/rate pairs [w1, r1, w2, r2, ...]"
                    )));
                }
                let weights = self.params.iter().step_by(2).copied().collect();
                let rates = self.params.iter().skip(1).step_by(2).copied().collect();
                Ok(JumpLaw::Mixture { weights, rates, sign: need_sign()? })
            }
        }
    }

    fn from_law(law: &JumpLaw) -> Self {
        match law {
            JumpLaw::Degenerate { at } => LawFile { family: Family::Degenerate, params: vec![*at], sign: None },
            JumpLaw::Exponential { rate, sign } => {
                LawFile { family: Family::Exponential, params: vec![*rate], sign: Some(*sign) }
            }
            JumpLaw::Mixture { weights, rates, sign } => LawFile {
                family: Family::Mixture,
                params: weights.iter().zip(rates).flat_map(|(w, r)| [*w, *r]).collect(),
                sign: Some(*sign),
            },
        }
    }
}

/// Parses a model file. Unknown fields and type errors are reported with their JSON path.
pub fn from_json_str(text: &str) -> Result<MapSpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ModelFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Parse(format!("at {path}: {}", e.into_inner()))
    })?;
    let n = file.n_states;
    if file.q.len() != n || file.q.iter().any(|row| row.len() != n) {
        return Err(Error::Parse(format!("Q: expected a {n}x{n} array")));
    }
    if file.states.len() != n {
        return Err(Error::Parse(format!("states: expected {n} entries, got {}", file.states.len())));
    }
    let q = RMatrix::from_fn(n, n, |i, j| file.q[i][j]);
    let mut levy = Vec::with_capacity(n);
    for (i, s) in file.states.into_iter().enumerate() {
        let mut jumps = Vec::with_capacity(s.jumps.len());
        for (k, j) in s.jumps.into_iter().enumerate() {
            let law = j.law.into_law(&format!("states[{i}].jumps[{k}].law"))?;
            jumps.push(JumpTerm { rate: j.rate, law });
        }
        levy.push(LevyComponent { drift: s.drift, sigma2: s.sigma2, jumps });
    }
    let trans_jump = match file.trans_jumps {
        None => vec![JumpLaw::ZERO; n],
        Some(v) => {
            if v.len() != n {
                return Err(Error::Parse(format!("trans_jumps: expected {n} entries, got {}", v.len())));
            }
            v.into_iter().enumerate().map(|(i, l)| l.into_law(&format!("trans_jumps[{i}]"))).collect::<Result<_>>()?
        }
    };
    Ok(MapSpec { n_states: n, q, levy, trans_jump, spectrally_negative: file.spectrally_negative })
}

pub fn load(path: &Path) -> Result<MapSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    from_json_str(&text)
}

pub fn to_json_string(spec: &MapSpec) -> String {
    let n = spec.n_states;
    let file = ModelFile {
        n_states: n,
        q: (0..n).map(|i| (0..n).map(|j| spec.q[(i, j)]).collect()).collect(),
        states: spec
            .levy
            .iter()
            .map(|c| StateFile {
                drift: c.drift,
                sigma2: c.sigma2,
                jumps: c.jumps.iter().map(|j| JumpFile { rate: j.rate, law: LawFile::from_law(&j.law) }).collect(),
            })
            .collect(),
        trans_jumps: if spec.trans_jump.iter().all(JumpLaw::is_zero) {
            None
        } else {
            Some(spec.trans_jump.iter().map(LawFile::from_law).collect())
        },
        spectrally_negative: spec.spectrally_negative,
    };
    serde_json::to_string_pretty(&file).expect("model serializes")
}
