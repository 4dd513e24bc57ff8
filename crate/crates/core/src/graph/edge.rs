use std::fmt;

use serde::{Deserialize, Serialize};

use super::GraphError;

/// Raw, unnormalized mixing coefficients of one free edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchParams {
    pub theta_none: f64,
    pub theta_id: f64,
    pub theta_same: f64,
}

impl ArchParams {
    /// `(0, 0, 1)`: the mixed edge reproduces its original operation.
    pub const INIT: ArchParams = ArchParams { theta_none: 0.0, theta_id: 0.0, theta_same: 1.0 };

    pub fn new(theta_none: f64, theta_id: f64, theta_same: f64) -> Self {
        ArchParams { theta_none, theta_id, theta_same }
    }

    pub fn one_hot(choice: OpChoice) -> Self {
        match choice {
            OpChoice::None => ArchParams::new(1.0, 0.0, 0.0),
            OpChoice::Identity => ArchParams::new(0.0, 1.0, 0.0),
            OpChoice::Same => ArchParams::new(0.0, 0.0, 1.0),
        }
    }

    /// `[none, identity, same]`.
    pub fn to_array(self) -> [f64; 3] {
        [self.theta_none, self.theta_id, self.theta_same]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        ArchParams::new(v[0], v[1], v[2])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl Default for ArchParams {
    fn default() -> Self {
        ArchParams::INIT
    }
}

/// Discrete decision for an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpChoice {
    None,
    Identity,
    Same,
}

impl OpChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            OpChoice::None => "none",
            OpChoice::Identity => "identity",
            OpChoice::Same => "same",
        }
    }
}

impl fmt::Display for OpChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Operations an edge may be discretized to. `None` and `Same` are always
/// available; `Identity` only when the edge preserves its input shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CandidateSet {
    pub identity: bool,
}

impl CandidateSet {
    pub const FULL: CandidateSet = CandidateSet { identity: true };
    pub const NO_IDENTITY: CandidateSet = CandidateSet { identity: false };

    pub fn contains(&self, choice: OpChoice) -> bool {
        choice != OpChoice::Identity || self.identity
    }

    pub fn choices(&self) -> Vec<OpChoice> {
        let mut v = vec![OpChoice::None];
        if self.identity {
            v.push(OpChoice::Identity);
        }
        v.push(OpChoice::Same);
        v
    }
}

impl fmt::Display for CandidateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.identity {
            f.write_str("{none, identity, same}")
        } else {
            f.write_str("{none, same}")
        }
    }
}

/// Argmax of the coefficients restricted to `candidates`. Ties go to the
/// more conservative choice: Same, then Identity, then None.
pub fn discretize(params: &ArchParams, candidates: CandidateSet) -> Result<OpChoice, GraphError> {
    if !params.is_finite() {
        return Err(GraphError::NonFiniteTheta(format!("{:?}", params.to_array())));
    }
    let ranked = [
        (OpChoice::Same, params.theta_same),
        (OpChoice::Identity, params.theta_id),
        (OpChoice::None, params.theta_none),
    ];
    let mut best = ranked[0];
    for &(choice, value) in &ranked[1..] {
        if candidates.contains(choice) && value > best.1 {
            best = (choice, value);
        }
    }
    Ok(best.0)
}
