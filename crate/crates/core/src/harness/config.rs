//! Flat `key=value` configuration files and schedule files.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::coarse::Selection;
use crate::error::{Error, Result};
use crate::schwarz::PreconditionerSpec;

use super::experiment::ExperimentSpec;

/// Parses `key=value` lines; `#` starts a comment, blank lines are skipped.
/// A repeated key keeps its last value.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", lineno + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Schedule file: one `resolution N` pair per line (whitespace, comma or
/// colon separated), `#` comments allowed.
pub fn parse_schedule(text: &str) -> Result<Vec<(usize, usize)>> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or_default().trim())
        .filter(|l| !l.is_empty())
        .map(parse_pair)
        .collect()
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split(|c: char| c.is_whitespace() || c == ',' || c == ':').filter(|p| !p.is_empty()).collect();
    match parts[..] {
        [r, n] => Ok((
            r.parse().map_err(|_| Error::Config(format!("bad resolution in `{s}`")))?,
            n.parse().map_err(|_| Error::Config(format!("bad subdomain count in `{s}`")))?,
        )),
        _ => Err(Error::Config(format!("schedule entry `{s}` is not `resolution N`"))),
    }
}

fn parse_list<T: FromStr<Err = Error>>(s: &str) -> Result<Vec<T>> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(T::from_str).collect()
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
}

/// Applies the keys of a parsed config to `spec`. Unknown keys are errors.
pub fn apply_config(spec: &mut ExperimentSpec, map: &BTreeMap<String, String>) -> Result<()> {
    for (k, v) in map {
        match k.as_str() {
            "case" => spec.case = v.clone(),
            "scheme" => spec.scheme = v.parse()?,
            "degree" => spec.degree = parse_value(k, v)?,
            "schedule" => spec.schedule = v.split(',').map(str::trim).filter(|p| !p.is_empty()).map(parse_pair).collect::<Result<_>>()?,
            "overlap" => spec.overlap = parse_value(k, v)?,
            "partition" => spec.partition = v.parse()?,
            "precond" => spec.preconditioners = parse_list::<PreconditionerSpec>(v)?,
            "coarse" => spec.coarse = parse_list::<Selection>(v)?,
            "eigen_request" => spec.eigen_request = Some(parse_value(k, v)?),
            "seed" => spec.seed = parse_value(k, v)?,
            "maxit" => spec.maxit = parse_value(k, v)?,
            "tol" => spec.tol = parse_value(k, v)?,
            "tau" => spec.tau = parse_value(k, v)?,
            "execution" => spec.execution = v.parse()?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
    }
    Ok(())
}
