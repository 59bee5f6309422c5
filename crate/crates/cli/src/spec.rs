//! Small value grammars used by several subcommands.

use std::str::FromStr;

use offmorl_core::adaptation::AdaptConfig;
use offmorl_core::Preference;
use serde::{Deserialize, Serialize};

/// `--wbc` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WbcSpec {
    Fixed(f64),
    Oracle { grid: usize },
    Adapt,
}

impl FromStr for WbcSpec {
    type Err = String;

    /// `fixed:W`, `oracle`, `oracle:grid=G` or `adapt`.
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "adapt" {
            return Ok(WbcSpec::Adapt);
        }
        if s == "oracle" {
            return Ok(WbcSpec::Oracle { grid: 20 });
        }
        if let Some(g) = s.strip_prefix("oracle:grid=") {
            let grid: usize = g.parse().map_err(|_| format!("bad grid size `{g}`"))?;
            if grid < 2 {
                return Err("the oracle grid needs at least 2 points".into());
            }
            return Ok(WbcSpec::Oracle { grid });
        }
        if let Some(w) = s.strip_prefix("fixed:") {
            let w: f64 = w.parse().map_err(|_| format!("bad weight `{w}`"))?;
            if !(w > 0.0 && w <= 1.0) {
                return Err(format!("fixed weight must lie in (0, 1], got {w}"));
            }
            return Ok(WbcSpec::Fixed(w));
        }
        Err(format!("unknown weight setting `{s}` (fixed:W, oracle:grid=G, adapt)"))
    }
}

/// Overrides for adaptation settings, written `N=3,K=10,lower=0.2`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdaptSpec(Vec<(String, f64)>);

impl FromStr for AdaptSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = Vec::new();
        for part in s.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| format!("expected key=value, got `{part}`"))?;
            let key = k.trim().to_string();
            if !["N", "K", "lower", "upper", "lr", "mu0", "sigma0"].contains(&key.as_str()) {
                return Err(format!("unknown adaptation key `{key}` (N, K, lower, upper, lr, mu0, sigma0)"));
            }
            let v: f64 = v.trim().parse().map_err(|_| format!("bad value for {key}: `{v}`"))?;
            if (key == "N" || key == "K") && (v < 1.0 || v.fract() != 0.0) {
                return Err(format!("{key} must be a positive integer"));
            }
            out.push((key, v));
        }
        Ok(AdaptSpec(out))
    }
}

impl AdaptSpec {
    pub fn apply(&self, base: &AdaptConfig) -> AdaptConfig {
        let mut c = *base;
        for (k, v) in &self.0 {
            match k.as_str() {
                "N" => c.n_iters = *v as usize,
                "K" => c.k = *v as usize,
                "lower" => c.lower = *v,
                "upper" => c.upper = *v,
                "lr" => c.lr = *v,
                "mu0" => c.mu0 = Some(*v),
                "sigma0" => c.sigma0 = Some(*v),
                _ => unreachable!("keys are checked when parsing"),
            }
        }
        c
    }
}

/// Comma-separated preference weights.
pub fn parse_pref(s: &str) -> Result<Preference, String> {
    let w = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("bad weight `{x}`")))
        .collect::<Result<Vec<_>, _>>()?;
    Preference::new(w).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wbc_grammar() {
        assert_eq!("fixed:0.6".parse::<WbcSpec>().unwrap(), WbcSpec::Fixed(0.6));
        assert_eq!("oracle:grid=20".parse::<WbcSpec>().unwrap(), WbcSpec::Oracle { grid: 20 });
        assert_eq!("adapt".parse::<WbcSpec>().unwrap(), WbcSpec::Adapt);
        for bad in ["fixed:0", "fixed:1.5", "oracle:grid=1", "oracle:20", "grid"] {
            assert!(bad.parse::<WbcSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn adapt_overrides() {
        let s: AdaptSpec = "N=5,K=4,lower=0.3".parse().unwrap();
        let c = s.apply(&AdaptConfig::default());
        assert_eq!((c.n_iters, c.k, c.lower, c.upper), (5, 4, 0.3, 1.0));
        assert!("N=0".parse::<AdaptSpec>().is_err());
        assert!("K=2.5".parse::<AdaptSpec>().is_err());
        assert!("M=3".parse::<AdaptSpec>().is_err());
    }

    #[test]
    fn prefs() {
        assert_eq!(parse_pref("0.25, 0.75").unwrap().weights(), &[0.25, 0.75]);
        assert!(parse_pref("0.5,0.6").is_err());
        assert!(parse_pref("a,b").is_err());
    }
}
