use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// CI engines the renderer can target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Gitlab,
    Github,
}

impl Engine {
    pub const ALL: [Engine; 2] = [Engine::Gitlab, Engine::Github];

    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Gitlab => "gitlab",
            Engine::Github => "github",
        }
    }

    /// Conventional location of the generated file inside a repository.
    pub fn output_path(self) -> &'static str {
        match self {
            Engine::Gitlab => ".gitlab-ci.yml",
            Engine::Github => ".github/workflows/pipeforge.yml",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unsupported engine `{0}` (expected gitlab or github)")]
pub struct UnknownEngine(pub String);

impl FromStr for Engine {
    type Err = UnknownEngine;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Engine::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| UnknownEngine(s.to_string()))
    }
}
