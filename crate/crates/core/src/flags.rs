//! Research feature flags and experimental conditions.
//!
//! Three independent flags disable the portable safety layers at specific
//! code points. All off is the full bounded-autonomy configuration; all on
//! is the unconstrained configuration; exactly one on is a single-layer
//! ablation. Tenant/workspace scope enforcement has no flag: it lives in
//! the consumer's request validation and scoped persistence and cannot be
//! bypassed from the mediation side.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFlags {
    /// Granted-action sync returns all published action names instead of
    /// filtering by the permission predicate.
    pub bypass_permission_filtering: bool,
    /// The execution pipeline skips the permission re-check, the
    /// required-field presence check, and domain validation; payloads reach
    /// the execute callback unvalidated.
    pub skip_validation: bool,
    /// Supervised workflows are confirmed immediately instead of entering a
    /// pending state.
    pub auto_confirm: bool,
}

impl FeatureFlags {
    pub fn all_off() -> Self {
        Self::default()
    }

    pub fn all_on() -> Self {
        Self {
            bypass_permission_filtering: true,
            skip_validation: true,
            auto_confirm: true,
        }
    }

    /// True while at least one portable safety layer is still engaged.
    /// Timing charges the mediation-path overhead under exactly this
    /// condition.
    pub fn any_bal_layer_active(&self) -> bool {
        !(self.bypass_permission_filtering && self.skip_validation && self.auto_confirm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    /// Manual baseline; computed from timing constants, never executed.
    A,
    /// Unconstrained: all three flags on.
    B,
    /// Bounded autonomy: all flags off.
    C,
    /// Ablation: permission filtering bypassed only.
    AblP,
    /// Ablation: validation skipped only.
    AblV,
    /// Ablation: confirmation auto-approved only.
    AblC,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::A => "A",
            Condition::B => "B",
            Condition::C => "C",
            Condition::AblP => "abl-p",
            Condition::AblV => "abl-v",
            Condition::AblC => "abl-c",
        }
    }

    pub fn parse(s: &str) -> Option<Condition> {
        match s {
            "A" | "a" => Some(Condition::A),
            "B" | "b" => Some(Condition::B),
            "C" | "c" => Some(Condition::C),
            "abl-p" => Some(Condition::AblP),
            "abl-v" => Some(Condition::AblV),
            "abl-c" => Some(Condition::AblC),
            _ => None,
        }
    }

    pub fn flags(self) -> FeatureFlags {
        match self {
            Condition::A | Condition::C => FeatureFlags::all_off(),
            Condition::B => FeatureFlags::all_on(),
            Condition::AblP => FeatureFlags {
                bypass_permission_filtering: true,
                ..FeatureFlags::default()
            },
            Condition::AblV => FeatureFlags {
                skip_validation: true,
                ..FeatureFlags::default()
            },
            Condition::AblC => FeatureFlags {
                auto_confirm: true,
                ..FeatureFlags::default()
            },
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_flag_combinations() {
        assert_eq!(Condition::C.flags(), FeatureFlags::all_off());
        assert_eq!(Condition::B.flags(), FeatureFlags::all_on());
        let p = Condition::AblP.flags();
        assert!(p.bypass_permission_filtering && !p.skip_validation && !p.auto_confirm);
    }

    #[test]
    fn mediation_active_unless_everything_disabled() {
        assert!(Condition::C.flags().any_bal_layer_active());
        assert!(Condition::AblV.flags().any_bal_layer_active());
        assert!(!Condition::B.flags().any_bal_layer_active());
    }
}
