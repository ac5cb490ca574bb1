//! Compliance-type taxonomy for the 2x2 design.
//!
//! A unit's instrument-response type is the pair of period-1 potential
//! treatments `(D_1(unexposed), D_1(exposed))`; its time-response type is the
//! never-exposed treatment path `(D_0, D_1(unexposed))`. The two taxonomies
//! share the `D_1(unexposed)` coordinate, which makes eight joint types
//! consistent; monotonicity removes the two containing an instrument defier.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Response of the period-1 treatment to instrument exposure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZResponse {
    NeverTaker,
    AlwaysTaker,
    Complier,
    Defier,
}

/// Response of the never-exposed treatment to time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TResponse {
    NeverTaker,
    AlwaysTaker,
    Complier,
    Defier,
}

impl ZResponse {
    /// `(D_1(unexposed), D_1(exposed))`.
    pub fn pair(self) -> (u8, u8) {
        match self {
            ZResponse::NeverTaker => (0, 0),
            ZResponse::AlwaysTaker => (1, 1),
            ZResponse::Complier => (0, 1),
            ZResponse::Defier => (1, 0),
        }
    }
}

impl TResponse {
    /// `(D_0, D_1(unexposed))`.
    pub fn pair(self) -> (u8, u8) {
        match self {
            TResponse::NeverTaker => (0, 0),
            TResponse::AlwaysTaker => (1, 1),
            TResponse::Complier => (0, 1),
            TResponse::Defier => (1, 0),
        }
    }
}

impl fmt::Display for ZResponse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ZResponse::NeverTaker => "NT^Z",
            ZResponse::AlwaysTaker => "AT^Z",
            ZResponse::Complier => "CM^Z",
            ZResponse::Defier => "DF^Z",
        };
        write!(f, "{s}")
    }
}

impl fmt::Display for TResponse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TResponse::NeverTaker => "NT^T",
            TResponse::AlwaysTaker => "AT^T",
            TResponse::Complier => "CM^T",
            TResponse::Defier => "DF^T",
        };
        write!(f, "{s}")
    }
}

/// Joint compliance type in the binary 2x2 design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnitType {
    pub gz: ZResponse,
    pub gt: TResponse,
}

impl UnitType {
    pub fn new(gz: ZResponse, gt: TResponse) -> Self {
        Self { gz, gt }
    }

    /// The two taxonomies agree on `D_1(unexposed)`.
    pub fn is_consistent(&self) -> bool {
        self.gz.pair().0 == self.gt.pair().1
    }

    /// Potential treatment at period 0 (no anticipation: identical under
    /// either instrument path).
    pub fn d0(&self) -> u8 {
        self.gt.pair().0
    }

    /// Potential treatment at period 1 when never exposed.
    pub fn d1_unexposed(&self) -> u8 {
        self.gz.pair().0
    }

    /// Potential treatment at period 1 when exposed.
    pub fn d1_exposed(&self) -> u8 {
        self.gz.pair().1
    }

    /// The eight consistent joint types.
    pub fn all_consistent() -> Vec<UnitType> {
        use TResponse as T;
        use ZResponse as Z;
        let mut out = Vec::new();
        for gz in [Z::NeverTaker, Z::AlwaysTaker, Z::Complier, Z::Defier] {
            for gt in [T::NeverTaker, T::AlwaysTaker, T::Complier, T::Defier] {
                let ty = UnitType::new(gz, gt);
                if ty.is_consistent() {
                    out.push(ty);
                }
            }
        }
        out
    }

    /// The six types admitted once instrument defiers are excluded.
    pub fn monotone_types() -> Vec<UnitType> {
        Self::all_consistent()
            .into_iter()
            .filter(|t| t.gz != ZResponse::Defier)
            .collect()
    }

    /// Admissible in the exposed group under a fuzzy-DID design (which
    /// additionally rules out `NT^Z & DF^T`).
    pub fn fuzzy_admissible_exposed(&self) -> bool {
        self.gz != ZResponse::Defier
            && !(self.gz == ZResponse::NeverTaker && self.gt == TResponse::Defier)
    }

    /// Admissible in the unexposed group under a fuzzy-DID design (which
    /// additionally rules out all time compliers and time defiers).
    pub fn fuzzy_admissible_unexposed(&self) -> bool {
        self.gz != ZResponse::Defier
            && self.gt != TResponse::Complier
            && self.gt != TResponse::Defier
    }
}

impl fmt::Display for UnitType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}&{}", self.gz, self.gt)
    }
}
