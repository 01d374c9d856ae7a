use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SrlPhase {
    Planning,
    ProgramCreation,
    ErrorCorrection,
    SelfMonitoring,
    SelfReflection,
}

impl SrlPhase {
    pub const ALL: [SrlPhase; 5] = [
        SrlPhase::Planning,
        SrlPhase::ProgramCreation,
        SrlPhase::ErrorCorrection,
        SrlPhase::SelfMonitoring,
        SrlPhase::SelfReflection,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SrlPhase::Planning => "planning",
            SrlPhase::ProgramCreation => "program_creation",
            SrlPhase::ErrorCorrection => "error_correction",
            SrlPhase::SelfMonitoring => "self_monitoring",
            SrlPhase::SelfReflection => "self_reflection",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestType {
    GeneralPurpose,
    ProgrammingSpecific,
}

impl RequestType {
    pub const ALL: [RequestType; 2] = [RequestType::GeneralPurpose, RequestType::ProgrammingSpecific];

    pub fn as_str(self) -> &'static str {
        match self {
            RequestType::GeneralPurpose => "general_purpose",
            RequestType::ProgrammingSpecific => "programming_specific",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown value `{0}`")]
pub struct UnknownVariant(pub String);

impl FromStr for SrlPhase {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SrlPhase::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| UnknownVariant(s.to_string()))
    }
}

impl FromStr for RequestType {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RequestType::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| UnknownVariant(s.to_string()))
    }
}

impl fmt::Display for SrlPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for RequestType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for p in SrlPhase::ALL {
            assert_eq!(p.as_str().parse::<SrlPhase>().unwrap(), p);
            assert_eq!(serde_json::to_value(p).unwrap(), p.as_str());
        }
        for t in RequestType::ALL {
            assert_eq!(t.as_str().parse::<RequestType>().unwrap(), t);
            assert_eq!(serde_json::to_value(t).unwrap(), t.as_str());
        }
        assert!("debugging".parse::<SrlPhase>().is_err());
    }
}
