//! Legal reading of decoded consent: positive/negative classification of TC
//! strings, the per-purpose legal-basis table, and the rule identifiers that
//! findings cite.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::Stage;
use crate::tcs::{ConsentProjection, TcCore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsentClass {
    Positive,
    Negative,
    Indeterminate,
}

/// Operational legal requirements (LR1–LR6) and GDPR principles (P1–P3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LegalRule {
    LR1,
    LR2,
    LR3,
    LR4,
    LR5,
    LR6,
    P1,
    P2,
    P3,
}

impl LegalRule {
    pub const ALL: [LegalRule; 9] = [
        LegalRule::LR1,
        LegalRule::LR2,
        LegalRule::LR3,
        LegalRule::LR4,
        LegalRule::LR5,
        LegalRule::LR6,
        LegalRule::P1,
        LegalRule::P2,
        LegalRule::P3,
    ];

    pub fn title(self) -> &'static str {
        match self {
            LegalRule::LR1 => "Consent can be revoked at any time",
            LegalRule::LR2 => "Revocation through the same interface as acceptance",
            LegalRule::LR3 => "Revocation takes no more effort or steps than acceptance",
            LegalRule::LR4 => "Data processing stops after revocation",
            LegalRule::LR5 => "Revocation is correctly registered",
            LegalRule::LR6 => "Revocation is communicated to other organisations",
            LegalRule::P1 => "Fairness",
            LegalRule::P2 => "Data protection by design and by default",
            LegalRule::P3 => "Accountability",
        }
    }

    pub fn is_requirement(self) -> bool {
        !matches!(self, LegalRule::P1 | LegalRule::P2 | LegalRule::P3)
    }
}

impl fmt::Display for LegalRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PurposeLegalBasis {
    pub purpose_id: u8,
    pub requires_consent: bool,
    pub enabled_by_default_ok: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsentModelError {
    #[error("unknown TCF purpose {0} (defined purposes are 1..=11)")]
    UnknownPurpose(u8),
    #[error("purpose override line {line}: {message}")]
    BadOverride { line: usize, message: String },
}

pub const DEFINED_PURPOSES: u8 = 11;

const PURPOSES: [(u8, bool, bool, &str); 11] = [
    (1, true, true, "Store and/or access information on a device; storage-based, enabled by default"),
    (2, true, false, "Use limited data to select advertising"),
    (3, true, false, "Create profiles for personalised advertising"),
    (4, true, false, "Use profiles to select personalised advertising"),
    (5, true, false, "Create profiles to personalise content; legitimate interest unlikely to pass"),
    (6, true, false, "Use profiles to select personalised content; legitimate interest unlikely to pass"),
    (7, true, false, "Measure advertising performance"),
    (8, true, false, "Measure content performance"),
    (9, true, false, "Understand audiences through statistics or combinations of data"),
    (10, false, true, "Develop and improve services; legal basis not derivable"),
    (11, false, true, "Use limited data to select content"),
];

/// Legal-basis rows for the eleven TCF v2.2 purposes.
///
/// Classification uses `enabled_by_default_ok`: a purpose with that flag set
/// never makes a string positive. Purposes 12..=24 have no row and are
/// treated as requiring consent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PurposeTable {
    rows: BTreeMap<u8, PurposeLegalBasis>,
}

impl Default for PurposeTable {
    fn default() -> Self {
        let rows = PURPOSES
            .iter()
            .map(|&(purpose_id, requires_consent, enabled_by_default_ok, note)| {
                (
                    purpose_id,
                    PurposeLegalBasis {
                        purpose_id,
                        requires_consent,
                        enabled_by_default_ok,
                        note: note.to_owned(),
                    },
                )
            })
            .collect();
        Self { rows }
    }
}

impl PurposeTable {
    pub fn basis(&self, purpose_id: u8) -> Result<&PurposeLegalBasis, ConsentModelError> {
        self.rows
            .get(&purpose_id)
            .ok_or(ConsentModelError::UnknownPurpose(purpose_id))
    }

    /// Applies an override file: one `purpose_id,true|false` record per line
    /// setting `requires_consent`. An overridden purpose may be enabled by
    /// default exactly when it does not require consent. `#` starts a comment.
    pub fn with_overrides(mut self, text: &str) -> Result<Self, ConsentModelError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: &str| ConsentModelError::BadOverride {
                line: idx + 1,
                message: message.to_owned(),
            };
            let (id, flag) = line.split_once(',').ok_or_else(|| bad("expected `purpose_id,flag`"))?;
            let id: u8 = id.trim().parse().map_err(|_| bad("purpose id is not a number"))?;
            let flag: bool = flag.trim().parse().map_err(|_| bad("flag must be true or false"))?;
            let row = self.rows.get_mut(&id).ok_or(ConsentModelError::UnknownPurpose(id))?;
            row.requires_consent = flag;
            row.enabled_by_default_ok = !flag;
            row.note = format!("{} [overridden]", row.note);
        }
        Ok(self)
    }

    fn exempt(&self, purpose_id: u8) -> bool {
        self.rows.get(&purpose_id).is_some_and(|r| r.enabled_by_default_ok)
    }

    pub fn classify(&self, projection: &ConsentProjection) -> ConsentClass {
        let needs_action = projection.purposes_consent.iter().any(|&p| !self.exempt(p));
        if !needs_action {
            ConsentClass::Negative
        } else if !projection.vendor_consents.is_empty() {
            ConsentClass::Positive
        } else {
            ConsentClass::Indeterminate
        }
    }
}

impl FromStr for PurposeTable {
    type Err = ConsentModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PurposeTable::default().with_overrides(s)
    }
}

/// Positive: some consent purpose outside {1, 10, 11} and at least one
/// vendor. Negative: only purposes from {1, 10, 11}. Anything else is
/// indeterminate.
pub fn classify_tcf(core: &TcCore) -> ConsentClass {
    PurposeTable::default().classify(&core.projection())
}

pub fn expected_class_for_stage(stage: Stage) -> ConsentClass {
    match stage {
        Stage::Accepted => ConsentClass::Positive,
        Stage::Initial | Stage::Rejected | Stage::Revoked => ConsentClass::Negative,
    }
}

pub fn purpose_basis(purpose_id: u8) -> Result<PurposeLegalBasis, ConsentModelError> {
    PurposeTable::default().basis(purpose_id).cloned()
}
