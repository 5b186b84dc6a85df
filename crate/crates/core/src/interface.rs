//! Compliance verdicts for the labeled revocation interface of a site.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::{InterfaceLabels, RevocationChannel};
use crate::consent::LegalRule;
use crate::finding::{Finding, FindingKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterfaceError {
    #[error("inconsistent labels: {0}")]
    LabelInconsistency(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceCategory {
    Compliant,
    ExtraSteps,
    DifferentInterface,
    NoRevocation,
}

impl InterfaceCategory {
    /// Revocation is offered in the same interface as acceptance.
    pub fn within_same_interface(self) -> bool {
        matches!(self, InterfaceCategory::Compliant | InterfaceCategory::ExtraSteps)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InterfaceCategory::Compliant => "compliant",
            InterfaceCategory::ExtraSteps => "extra_steps",
            InterfaceCategory::DifferentInterface => "different_interface",
            InterfaceCategory::NoRevocation => "no_revocation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterfaceVerdict {
    pub category: InterfaceCategory,
    pub findings: Vec<Finding>,
}

const UNFAIR: [LegalRule; 3] = [LegalRule::P1, LegalRule::P2, LegalRule::P3];

fn with_principles(rule: LegalRule) -> Vec<LegalRule> {
    std::iter::once(rule).chain(UNFAIR).collect()
}

/// Maps the revocation channel, step count and AA-cookie presence to a
/// category and the findings it implies.
pub fn evaluate_interface(
    labels: &InterfaceLabels,
    aa_present: bool,
    site: &str,
) -> Result<InterfaceVerdict, InterfaceError> {
    use RevocationChannel as C;
    let channel = labels.revocation_channel;
    let steps = labels.steps_to_revoke;
    let inconsistent = |why: String| Err(InterfaceError::LabelInconsistency(why));
    if channel.has_steps() != steps.is_some() {
        return inconsistent(format!(
            "channel {} {} a step count",
            channel.as_str(),
            if channel.has_steps() { "needs" } else { "cannot have" }
        ));
    }
    let steps = steps.unwrap_or(0);
    let finding = |kind, rule| Finding::violation(kind, site, &with_principles(rule)).evidence(format!("revocation channel {}", channel.as_str()));

    let (category, findings) = match channel {
        C::Icon | C::Footer | C::BannerOnPolicy => {
            if steps > 1 {
                return inconsistent(format!("channel {} with {steps} steps", channel.as_str()));
            }
            (InterfaceCategory::Compliant, Vec::new())
        }
        C::ViaPolicy => {
            if steps < 2 {
                return inconsistent(format!("revocation via policy page with {steps} steps"));
            }
            (
                InterfaceCategory::ExtraSteps,
                vec![finding(FindingKind::RevocationRequiresExtraSteps, LegalRule::LR3)
                    .evidence(format!("{steps} steps to revoke"))],
            )
        }
        C::SettingsOrLinks | C::ContactEmail => (
            InterfaceCategory::DifferentInterface,
            vec![finding(FindingKind::RevocationViaDifferentInterface, LegalRule::LR2)],
        ),
        C::Paywall => (
            InterfaceCategory::DifferentInterface,
            vec![finding(FindingKind::RevocationViaDifferentInterface, LegalRule::LR2).detail("paywall")],
        ),
        C::AfterLogin => (
            InterfaceCategory::DifferentInterface,
            vec![finding(FindingKind::RevocationRequiresLogin, LegalRule::LR2)],
        ),
        C::None | C::OptionNotWorking => {
            let f = if aa_present {
                finding(FindingKind::NoRevocationWithTracking, LegalRule::LR1).evidence("AA cookies stored")
            } else {
                Finding::info(FindingKind::NoRevocationNoTracking, site)
                    .evidence(format!("revocation channel {}", channel.as_str()))
            };
            let f = if channel == C::OptionNotWorking { f.detail("option_not_working") } else { f };
            (InterfaceCategory::NoRevocation, vec![f])
        }
    };
    Ok(InterfaceVerdict { category, findings })
}

/// Revoking takes more steps than accepting. Two or more extra steps are a
/// violation; a single extra step is reported for information.
pub fn steps_asymmetry(labels: &InterfaceLabels, site: &str) -> Option<Finding> {
    let (accept, revoke) = (labels.steps_to_accept?, labels.steps_to_revoke?);
    if revoke <= accept {
        return None;
    }
    let base = if revoke >= 2 {
        Finding::violation(FindingKind::EffortAsymmetry, site, &[LegalRule::LR3, LegalRule::P2])
    } else {
        Finding::info(FindingKind::EffortAsymmetry, site).with_rules(&[LegalRule::LR3, LegalRule::P2])
    };
    Some(base.evidence(format!(
        "{revoke} steps to revoke vs {accept} to accept (+{})",
        revoke - accept
    )))
}
