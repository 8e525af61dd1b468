//! Flat `key = value` configuration with dotted keys, layered as
//! command-line flag > config file > profile default.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use clap::ValueEnum;
use phaseglm_core::glm::MixSpec;
use phaseglm_core::sweep::linspace_step;
use phaseglm_core::{LinkFn, LpTolerance, RadialFamily};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

/// One recognised key with its defaults under each profile.
pub struct KeySpec {
    pub key: &'static str,
    pub desk: Option<&'static str>,
    pub full: Option<&'static str>,
    pub help: &'static str,
}

const fn key(key: &'static str, desk: Option<&'static str>, full: Option<&'static str>, help: &'static str) -> KeySpec {
    KeySpec { key, desk, full, help }
}

pub const KEYS: &[KeySpec] = &[
    key("run.seed", Some("0"), Some("0"), "master seed; --seed overrides"),
    key("run.threads", None, None, "worker threads; --threads and PHASEGLM_THREADS override"),
    key("model.link", Some("logit"), Some("logit"), "logit, probit or cloglog"),
    key("model.alpha0", Some("1"), Some("1"), "radial scale limit (> 0)"),
    key("model.beta0", Some("0"), Some("0"), "intercept"),
    key("radial.family", None, None, "chi, gamma, pareto, half-normal or log-normal (required)"),
    key("radial.shape", None, None, "gamma shape or pareto tail index"),
    key("sweep.n", Some("200"), Some("1000"), "observations per dataset"),
    key("sweep.replicates", Some("10"), Some("100"), "datasets per grid cell"),
    key("sweep.gamma0", Some("0.5,1,2,3,4,6,8,10"), Some("0.01:10:0.01"), "signal strengths"),
    key("sweep.kappa", Some("0.05,0.1,0.2,0.3,0.4,0.45,0.5,0.6"), Some("0.005:0.6:0.005"), "ratios p/n"),
    key("sweep.mix", Some("identity"), Some("identity"), "identity or random"),
    key("sweep.theory", Some("false"), Some("false"), "overlay the h_MLE curve"),
    key("lp.feas_tol", Some("1e-9"), Some("1e-9"), "simplex feasibility tolerance"),
    key("lp.zero_tol", Some("1e-6"), Some("1e-6"), "LP optimum treated as zero at or below this"),
    key("hmle.n", Some("1000"), Some("4000"), "Monte Carlo sample size per replicate"),
    key("hmle.replicates", Some("20"), Some("100"), "replicates averaged per estimate"),
    key("hmle.gamma0", Some("1,5,9"), Some("0.5:10:0.5"), "signal strengths"),
    key("hmle.kappa", Some("0.3,0.6"), Some("0.02:0.6:0.02"), "ratios p/hmle.n"),
    key("hmle.p", None, None, "explicit dimensions; replaces hmle.kappa"),
    key("hmle.tol", Some("1e-10"), Some("1e-10"), "gradient-norm stopping tolerance"),
    key("hmle.max_iter", Some("500"), Some("500"), "Newton iteration limit"),
    key("theory.kappa", Some("0.3,0.4,0.5,0.6"), Some("0.3,0.4,0.5,0.6"), "ratios averaged for the overlay"),
    key("check.p", Some("20"), Some("20"), "dimension of the projected covariate"),
    key("check.gamma0", Some("1"), Some("1"), "signal strength"),
    key("check.x_grid", Some("-4:4:0.1"), Some("-4:4:0.05"), "evaluation points of the G-functions"),
    key("check.mc_samples", Some("100000"), Some("1000000"), "Monte Carlo draws for G-functions"),
    key("check.n_list", Some("10,20,50,100"), Some("10,20,50,100,200,500"), "sample sizes of the pG table"),
    key("check.sstd_n", Some("5,10,20"), Some("5,10,20"), "sample sizes for formula vs simulation"),
    key("check.sim_trials", Some("20000"), Some("100000"), "simulated datasets per comparison"),
    key("moments.p", Some("100"), Some("1000"), "dimension of the projected covariate"),
    key("moments.max_order", Some("8"), Some("8"), "number of even moments"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Flag,
    File,
    Profile,
}

#[derive(Debug, Clone, Serialize)]
pub struct Entry {
    pub value: String,
    pub source: Source,
}

/// Resolved configuration.
#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
}

/// Table of keys and defaults for `--help`.
pub fn key_table() -> String {
    let mut out = String::from("Configuration keys (default under desk / paper):\n");
    for k in KEYS {
        let show = |v: Option<&str>| v.unwrap_or("-").to_string();
        out.push_str(&format!("  {:<18} {}  [{} / {}]\n", k.key, k.help, show(k.desk), show(k.full)));
    }
    out
}

fn spec(key: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.key == key)
}

fn unknown(key: &str) -> CliError {
    CliError::config(key, "unknown configuration key")
}

/// Parse the text of a config file into `(key, value)` pairs.
pub fn parse_file_text(text: &str, origin: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected key = value, found {line:?}", no + 1)))?;
        let k = k.trim();
        if spec(k).is_none() {
            return Err(unknown(k));
        }
        pairs.push((k.to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Parse one `--set key=value` argument.
pub fn parse_override(arg: &str) -> Result<(String, String), CliError> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, found {arg:?}")))?;
    let k = k.trim();
    if spec(k).is_none() {
        return Err(unknown(k));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

impl Config {
    pub fn resolve(profile: Profile, file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for k in KEYS {
            let default = match profile {
                Profile::Desk => k.desk,
                Profile::Paper => k.full,
            };
            if let Some(v) = default {
                entries.insert(k.key.to_string(), Entry { value: v.to_string(), source: Source::Profile });
            }
        }
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
            for (k, v) in parse_file_text(&text, &path.display().to_string())? {
                entries.insert(k, Entry { value: v, source: Source::File });
            }
        }
        for (k, v) in overrides {
            if spec(k).is_none() {
                return Err(unknown(k));
            }
            entries.insert(k.clone(), Entry { value: v.clone(), source: Source::Flag });
        }
        Ok(Config { entries })
    }

    pub fn entries(&self) -> &BTreeMap<String, Entry> {
        &self.entries
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        debug_assert!(spec(key).is_some(), "unregistered key {key}");
        self.entries.get(key).map(|e| e.value.as_str()).filter(|v| !v.is_empty())
    }

    pub fn required(&self, key: &str) -> Result<&str, CliError> {
        self.raw(key).ok_or_else(|| CliError::config(key, "missing required key"))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        let raw = self.required(key)?;
        raw.parse().map_err(|e| CliError::config(key, format!("cannot parse {raw:?}: {e}")))
    }

    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        self.raw(key).map(|_| self.parse(key)).transpose()
    }

    pub fn positive_usize(&self, key: &str) -> Result<usize, CliError> {
        let v: usize = self.parse(key)?;
        if v == 0 {
            return Err(CliError::config(key, "must be positive"));
        }
        Ok(v)
    }

    pub fn positive_f64(&self, key: &str) -> Result<f64, CliError> {
        let v = self.finite_f64(key)?;
        if v <= 0.0 {
            return Err(CliError::config(key, "must be positive"));
        }
        Ok(v)
    }

    pub fn finite_f64(&self, key: &str) -> Result<f64, CliError> {
        let v: f64 = self.parse(key)?;
        if !v.is_finite() {
            return Err(CliError::config(key, "must be finite"));
        }
        Ok(v)
    }

    pub fn bool(&self, key: &str) -> Result<bool, CliError> {
        match self.required(key)?.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" | "on" => Ok(true),
            "false" | "no" | "0" | "off" => Ok(false),
            other => Err(CliError::config(key, format!("expected true or false, found {other:?}"))),
        }
    }

    /// Comma-separated numbers or `start:stop:step` ranges, e.g. `0.1,0.5:1:0.25`.
    pub fn list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        parse_list(self.required(key)?).map_err(|msg| CliError::config(key, msg))
    }

    /// Like [`Config::list`] but every entry must be strictly increasing and finite.
    pub fn increasing_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        let v = self.list(key)?;
        if v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::config(key, "entries must be strictly increasing"));
        }
        Ok(v)
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>, CliError> {
        self.list(key)?
            .into_iter()
            .map(|v| {
                if v >= 1.0 && v.fract() == 0.0 && v <= usize::MAX as f64 {
                    Ok(v as usize)
                } else {
                    Err(CliError::config(key, format!("{v} is not a positive integer")))
                }
            })
            .collect()
    }

    pub fn link(&self) -> Result<LinkFn, CliError> {
        let raw = self.required("model.link")?;
        LinkFn::from_name(raw).ok_or_else(|| CliError::config("model.link", format!("unknown link {raw:?}")))
    }

    pub fn family(&self) -> Result<RadialFamily, CliError> {
        let name = self.required("radial.family")?;
        let shape = self.optional::<f64>("radial.shape")?;
        if let Some(s) = shape {
            if !(s > 0.0 && s.is_finite()) {
                return Err(CliError::config("radial.shape", "must be positive"));
            }
        }
        RadialFamily::from_name(name, shape).map_err(|msg| {
            let key = if msg.contains("needs") { "radial.shape" } else { "radial.family" };
            CliError::config(key, msg)
        })
    }

    pub fn mix(&self) -> Result<MixSpec, CliError> {
        match self.required("sweep.mix")?.to_ascii_lowercase().as_str() {
            "identity" | "none" => Ok(MixSpec::Identity),
            "random" => Ok(MixSpec::RandomFullRank),
            other => Err(CliError::config("sweep.mix", format!("expected identity or random, found {other:?}"))),
        }
    }

    pub fn tolerance(&self) -> Result<LpTolerance, CliError> {
        let tol = LpTolerance { feas_tol: self.positive_f64("lp.feas_tol")?, zero_tol: self.positive_f64("lp.zero_tol")? };
        if !tol.is_valid() {
            return Err(CliError::config("lp.feas_tol", "must be smaller than lp.zero_tol"));
        }
        Ok(tol)
    }
}

pub fn parse_list(raw: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for item in raw.split(',').map(str::trim) {
        if item.is_empty() {
            return Err(format!("empty entry in {raw:?}"));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("{s:?} is not a finite number"))
        };
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [single] => out.push(num(single)?),
            [start, stop, step] => {
                let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
                if step <= 0.0 || stop < start {
                    return Err(format!("range {item:?} needs start <= stop and step > 0"));
                }
                out.extend(linspace_step(start, stop, step));
            }
            _ => return Err(format!("{item:?} is neither a number nor start:stop:step")),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_list("1, 2.5").unwrap(), vec![1.0, 2.5]);
        assert_eq!(parse_list("0.5:2:0.5").unwrap(), vec![0.5, 1.0, 1.5, 2.0]);
        assert_eq!(parse_list("0.1,0.3:0.5:0.1").unwrap(), vec![0.1, 0.3, 0.4, 0.5]);
        assert_eq!(parse_list("0.02:0.6:0.02").unwrap().len(), 30);
        assert!(parse_list("1,,2").is_err());
        assert!(parse_list("a").is_err());
        assert!(parse_list("2:1:0.5").is_err());
        assert!(parse_list("1:2").is_err());
    }

    #[test]
    fn file_text_with_comments() {
        let pairs = parse_file_text("# header\nsweep.n = 50  # trailing\n\nradial.family=gamma\n", "t").unwrap();
        assert_eq!(pairs, vec![("sweep.n".into(), "50".into()), ("radial.family".into(), "gamma".into())]);
        assert!(matches!(parse_file_text("sweep.nope = 1", "t"), Err(CliError::Config { key, .. }) if key == "sweep.nope"));
        assert!(matches!(parse_file_text("just words", "t"), Err(CliError::Usage(_))));
    }

    #[test]
    fn precedence_flag_over_file_over_profile() {
        let dir = std::env::temp_dir().join(format!("phaseglm-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.cfg");
        std::fs::write(&path, "sweep.n = 77\nsweep.replicates = 3\n").unwrap();
        let cfg = Config::resolve(Profile::Desk, Some(&path), &[("sweep.n".into(), "9".into())]).unwrap();
        assert_eq!(cfg.raw("sweep.n"), Some("9"));
        assert_eq!(cfg.entries()["sweep.n"].source, Source::Flag);
        assert_eq!(cfg.raw("sweep.replicates"), Some("3"));
        assert_eq!(cfg.entries()["sweep.replicates"].source, Source::File);
        assert_eq!(cfg.raw("model.link"), Some("logit"));
        assert_eq!(cfg.entries()["model.link"].source, Source::Profile);
        let full = Config::resolve(Profile::Paper, None, &[]).unwrap();
        assert_eq!(full.parse::<usize>("sweep.n").unwrap(), 1000);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn typed_errors_name_the_key() {
        let cfg = Config::resolve(Profile::Desk, None, &[("sweep.n".into(), "zero".into())]).unwrap();
        assert!(matches!(cfg.positive_usize("sweep.n"), Err(CliError::Config { key, .. }) if key == "sweep.n"));
        assert!(matches!(cfg.family(), Err(CliError::Config { key, .. }) if key == "radial.family"));
        let gamma = Config::resolve(Profile::Desk, None, &[("radial.family".into(), "gamma".into())]).unwrap();
        assert!(matches!(gamma.family(), Err(CliError::Config { key, .. }) if key == "radial.shape"));
    }

    #[test]
    fn profile_lists_match_library_presets() {
        use phaseglm_core::SweepConfig;
        for (profile, preset) in [(Profile::Desk, SweepConfig::desk()), (Profile::Paper, SweepConfig::full_scale())] {
            let cfg = Config::resolve(profile, None, &[]).unwrap();
            assert_eq!(cfg.list("sweep.gamma0").unwrap(), preset.gamma0_grid);
            assert_eq!(cfg.list("sweep.kappa").unwrap(), preset.kappa_grid);
            assert_eq!(cfg.parse::<usize>("sweep.n").unwrap(), preset.n);
            assert_eq!(cfg.parse::<usize>("sweep.replicates").unwrap(), preset.replicates);
        }
    }
}
