//! Run configuration: a flat `key=value` file overlaid by command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::decompose::AuxMode;
use crate::error::{Error, Result};

pub type KeyValues = BTreeMap<String, String>;

pub const DEFAULT_RHO_CUTOFF: f64 = 0.05;

/// Parses `key=value` lines. Blank lines and lines starting with `#` are
/// skipped; a repeated key keeps its last value.
pub fn parse_key_values(text: &str) -> Result<KeyValues> {
    let mut out = KeyValues::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, found '{line}'", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn read_key_values(path: &Path) -> Result<KeyValues> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_key_values(&text)
}

pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankRule {
    Explicit,
    Eigengap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcRule {
    Explicit,
    RhoCutoff,
}

impl fmt::Display for RankRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Explicit => "explicit",
            Self::Eigengap => "eigengap",
        })
    }
}

impl fmt::Display for RcRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Explicit => "explicit",
            Self::RhoCutoff => "rho_cutoff",
        })
    }
}

impl FromStr for RankRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(Self::Explicit),
            "eigengap" => Ok(Self::Eigengap),
            _ => Err(Error::Config(format!("unknown rank_rule '{s}' (explicit | eigengap)"))),
        }
    }
}

impl FromStr for RcRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(Self::Explicit),
            "rho_cutoff" => Ok(Self::RhoCutoff),
            _ => Err(Error::Config(format!("unknown rc_rule '{s}' (explicit | rho_cutoff)"))),
        }
    }
}

/// Settings for one decomposition run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub view1_path: PathBuf,
    pub view2_path: PathBuf,
    pub r1: Option<usize>,
    pub r2: Option<usize>,
    pub rc: Option<usize>,
    pub rank_rule: RankRule,
    pub rc_rule: RcRule,
    pub rho_cutoff: f64,
    pub aux_mode: AuxMode,
    pub seed: u64,
    pub out_dir: PathBuf,
}

const KEYS: [&str; 11] = [
    "view1", "view2", "r1", "r2", "rc", "rank_rule", "rc_rule", "rho_cutoff", "aux_mode", "seed", "out",
];

impl RunConfig {
    /// Builds a config from key-value settings. Without an explicit rule,
    /// ranks are explicit when both `r1` and `r2` are given and chosen by
    /// eigengap otherwise; `rc` is explicit when given and counted with
    /// `rho_cutoff` otherwise.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        if let Some(k) = kv.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key '{k}'")));
        }
        let path = |k: &str| {
            kv.get(k)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
                .ok_or_else(|| Error::Config(format!("missing '{k}'")))
        };
        let opt = |k: &str| kv.get(k).map(|v| parse_value::<usize>(k, v)).transpose();
        let r1 = opt("r1")?;
        let r2 = opt("r2")?;
        let rc = opt("rc")?;
        let rank_rule = match kv.get("rank_rule") {
            Some(v) => v.parse()?,
            None if r1.is_some() && r2.is_some() => RankRule::Explicit,
            None => RankRule::Eigengap,
        };
        let rc_rule = match kv.get("rc_rule") {
            Some(v) => v.parse()?,
            None if rc.is_some() => RcRule::Explicit,
            None => RcRule::RhoCutoff,
        };
        let config = Self {
            view1_path: path("view1")?,
            view2_path: path("view2")?,
            r1,
            r2,
            rc,
            rank_rule,
            rc_rule,
            rho_cutoff: kv
                .get("rho_cutoff")
                .map(|v| parse_value("rho_cutoff", v))
                .transpose()?
                .unwrap_or(DEFAULT_RHO_CUTOFF),
            aux_mode: kv.get("aux_mode").map(|v| v.parse()).transpose()?.unwrap_or_default(),
            seed: kv.get("seed").map(|v| parse_value("seed", v)).transpose()?.unwrap_or(0),
            out_dir: path("out")?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank_rule == RankRule::Explicit && (self.r1.is_none() || self.r2.is_none()) {
            return Err(Error::Config("rank_rule=explicit requires r1 and r2".into()));
        }
        if self.rc_rule == RcRule::Explicit && self.rc.is_none() {
            return Err(Error::Config("rc_rule=explicit requires rc".into()));
        }
        if !(self.rho_cutoff > 0.0 && self.rho_cutoff < 1.0) {
            return Err(Error::Config(format!("rho_cutoff {} is outside (0, 1)", self.rho_cutoff)));
        }
        Ok(())
    }

    /// The settings in the key-value file format.
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.insert("view1".into(), self.view1_path.display().to_string());
        kv.insert("view2".into(), self.view2_path.display().to_string());
        for (k, v) in [("r1", self.r1), ("r2", self.r2), ("rc", self.rc)] {
            if let Some(v) = v {
                kv.insert(k.into(), v.to_string());
            }
        }
        kv.insert("rank_rule".into(), self.rank_rule.to_string());
        kv.insert("rc_rule".into(), self.rc_rule.to_string());
        kv.insert("rho_cutoff".into(), self.rho_cutoff.to_string());
        kv.insert("aux_mode".into(), self.aux_mode.to_string());
        kv.insert("seed".into(), self.seed.to_string());
        kv.insert("out".into(), self.out_dir.display().to_string());
        kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> KeyValues {
        parse_key_values("view1 = a.csv\nview2=b.csv\n# comment\n\nout=o\n").unwrap()
    }

    #[test]
    fn defaults() {
        let c = RunConfig::from_key_values(&base()).unwrap();
        assert_eq!(c.rank_rule, RankRule::Eigengap);
        assert_eq!(c.rc_rule, RcRule::RhoCutoff);
        assert_eq!(c.rho_cutoff, 0.05);
        assert_eq!(c.aux_mode, AuxMode::Projected);
        assert_eq!(c.seed, 0);
        assert_eq!(c.view1_path, PathBuf::from("a.csv"));
    }

    #[test]
    fn explicit_ranks_inferred() {
        let mut kv = base();
        kv.insert("r1".into(), "3".into());
        kv.insert("r2".into(), "3".into());
        kv.insert("rc".into(), "2".into());
        let c = RunConfig::from_key_values(&kv).unwrap();
        assert_eq!((c.rank_rule, c.rc_rule), (RankRule::Explicit, RcRule::Explicit));
        assert_eq!((c.r1, c.r2, c.rc), (Some(3), Some(3), Some(2)));
        assert_eq!(RunConfig::from_key_values(&c.to_key_values()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_settings() {
        let with = |k: &str, v: &str| {
            let mut kv = base();
            kv.insert(k.into(), v.into());
            RunConfig::from_key_values(&kv)
        };
        assert!(matches!(with("rank_rule", "explicit"), Err(Error::Config(_))));
        assert!(matches!(with("rc_rule", "explicit"), Err(Error::Config(_))));
        assert!(matches!(with("rho_cutoff", "1"), Err(Error::Config(_))));
        assert!(matches!(with("rho_cutoff", "0"), Err(Error::Config(_))));
        assert!(matches!(with("aux_mode", "mixed"), Err(Error::Config(_))));
        assert!(matches!(with("seed", "-1"), Err(Error::Config(_))));
        assert!(matches!(with("colour", "red"), Err(Error::Config(_))));
        let mut kv = base();
        kv.remove("out");
        assert!(matches!(RunConfig::from_key_values(&kv), Err(Error::Config(_))));
        assert!(parse_key_values("no equals sign").is_err());
    }
}
