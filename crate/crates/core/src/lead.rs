//! Lead identifiers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the 12 standard ECG leads or one of the 3 Frank orthogonal leads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LeadId {
    I,
    II,
    III,
    #[serde(rename = "aVR")]
    AVR,
    #[serde(rename = "aVL")]
    AVL,
    #[serde(rename = "aVF")]
    AVF,
    V1,
    V2,
    V3,
    V4,
    V5,
    V6,
    X,
    Y,
    Z,
}

impl LeadId {
    /// The 12 standard leads in conventional display order.
    pub const STANDARD: [LeadId; 12] = [
        LeadId::I,
        LeadId::II,
        LeadId::III,
        LeadId::AVR,
        LeadId::AVL,
        LeadId::AVF,
        LeadId::V1,
        LeadId::V2,
        LeadId::V3,
        LeadId::V4,
        LeadId::V5,
        LeadId::V6,
    ];

    pub const FRANK: [LeadId; 3] = [LeadId::X, LeadId::Y, LeadId::Z];

    pub const ALL: [LeadId; 15] = [
        LeadId::I,
        LeadId::II,
        LeadId::III,
        LeadId::AVR,
        LeadId::AVL,
        LeadId::AVF,
        LeadId::V1,
        LeadId::V2,
        LeadId::V3,
        LeadId::V4,
        LeadId::V5,
        LeadId::V6,
        LeadId::X,
        LeadId::Y,
        LeadId::Z,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LeadId::I => "I",
            LeadId::II => "II",
            LeadId::III => "III",
            LeadId::AVR => "aVR",
            LeadId::AVL => "aVL",
            LeadId::AVF => "aVF",
            LeadId::V1 => "V1",
            LeadId::V2 => "V2",
            LeadId::V3 => "V3",
            LeadId::V4 => "V4",
            LeadId::V5 => "V5",
            LeadId::V6 => "V6",
            LeadId::X => "X",
            LeadId::Y => "Y",
            LeadId::Z => "Z",
        }
    }

    pub fn is_frank(self) -> bool {
        matches!(self, LeadId::X | LeadId::Y | LeadId::Z)
    }

    /// Position in [`LeadId::STANDARD`], `None` for Frank leads.
    pub fn standard_index(self) -> Option<usize> {
        LeadId::STANDARD.iter().position(|&l| l == self)
    }

    /// Rejects Frank leads for operations defined on the 12-lead set.
    pub fn require_standard(self) -> Result<usize, NotStandardLead> {
        self.standard_index().ok_or(NotStandardLead(self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("lead {0} is not one of the 12 standard leads")]
pub struct NotStandardLead(pub LeadId);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown lead name {0:?}")]
pub struct UnknownLeadName(pub String);

impl fmt::Display for LeadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LeadId {
    type Err = UnknownLeadName;

    /// Case-insensitive. Accepts the PTB spellings (`i`, `avr`, `vx`, ...).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lead = match s.trim().to_ascii_lowercase().as_str() {
            "i" => LeadId::I,
            "ii" => LeadId::II,
            "iii" => LeadId::III,
            "avr" => LeadId::AVR,
            "avl" => LeadId::AVL,
            "avf" => LeadId::AVF,
            "v1" => LeadId::V1,
            "v2" => LeadId::V2,
            "v3" => LeadId::V3,
            "v4" => LeadId::V4,
            "v5" => LeadId::V5,
            "v6" => LeadId::V6,
            "x" | "vx" => LeadId::X,
            "y" | "vy" => LeadId::Y,
            "z" | "vz" => LeadId::Z,
            _ => return Err(UnknownLeadName(s.to_string())),
        };
        Ok(lead)
    }
}
