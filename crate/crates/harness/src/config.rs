//! Run settings from a flat `key = value` file, overridden by flags.

use std::path::{Path, PathBuf};

use hsketch_core::EstimateOptions;

use crate::error::{HarnessError, Result};

/// Settings shared by the experiment subcommands. `None` means "use the
/// preset default".
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunSettings {
    pub m: Option<u32>,
    pub trials: Option<u32>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Keep only schemes with this name.
    pub scheme: Option<String>,
    pub clamp_nonnegative: bool,
    pub literal_truncation: bool,
}

impl RunSettings {
    /// Parses `key = value` lines. Blank lines and `#` comments are
    /// ignored; keys may use `-` or `_`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected key = value", n + 1))
            })?;
            let (key, value) = (key.trim().replace('-', "_"), value.trim());
            let bad =
                || HarnessError::Config(format!("line {}: bad value `{value}` for {key}", n + 1));
            match key.as_str() {
                "m" => s.m = Some(value.parse().map_err(|_| bad())?),
                "trials" => s.trials = Some(value.parse().map_err(|_| bad())?),
                "seed" => s.seed = Some(value.parse().map_err(|_| bad())?),
                "out" => s.out = Some(PathBuf::from(value)),
                "scheme" => s.scheme = Some(value.to_string()),
                "clamp_nonnegative" => s.clamp_nonnegative = value.parse().map_err(|_| bad())?,
                "literal_truncation" => s.literal_truncation = value.parse().map_err(|_| bad())?,
                _ => {
                    return Err(HarnessError::Config(format!(
                        "line {}: unknown key `{key}`",
                        n + 1
                    )))
                }
            }
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Values set in `flags` win; boolean switches are or-ed.
    pub fn overridden_by(self, flags: RunSettings) -> Self {
        Self {
            m: flags.m.or(self.m),
            trials: flags.trials.or(self.trials),
            seed: flags.seed.or(self.seed),
            out: flags.out.or(self.out),
            scheme: flags.scheme.or(self.scheme),
            clamp_nonnegative: flags.clamp_nonnegative || self.clamp_nonnegative,
            literal_truncation: flags.literal_truncation || self.literal_truncation,
        }
    }

    pub fn estimate_options(&self) -> EstimateOptions {
        EstimateOptions {
            literal_truncation: self.literal_truncation,
            clamp_nonnegative: self.clamp_nonnegative,
            keep_terms: false,
        }
    }
}
