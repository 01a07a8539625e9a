use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Canonical pipeline stages. The derived ordering is the emission order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Build,
    Lint,
    Test,
    Sast,
    Sca,
    Package,
    Deploy,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Build,
        Stage::Lint,
        Stage::Test,
        Stage::Sast,
        Stage::Sca,
        Stage::Package,
        Stage::Deploy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Build => "build",
            Stage::Lint => "lint",
            Stage::Test => "test",
            Stage::Sast => "sast",
            Stage::Sca => "sca",
            Stage::Package => "package",
            Stage::Deploy => "deploy",
        }
    }

    /// Stages whose blocks are not tied to one language and live at
    /// `<stage>/<name>` in a catalog.
    pub fn is_cross_language(self) -> bool {
        matches!(self, Stage::Sast | Stage::Sca)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown stage `{0}`")]
pub struct UnknownStage(pub String);

impl FromStr for Stage {
    type Err = UnknownStage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|stage| stage.as_str() == s)
            .ok_or_else(|| UnknownStage(s.to_string()))
    }
}
