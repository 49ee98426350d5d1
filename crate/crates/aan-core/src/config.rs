//! Flat key-value configuration files.
//!
//! The on-disk format is one `key = value` pair per line with `#` comments;
//! keys are dotted with a section prefix (`mpc.w_theta`, `subject.b0`).
//! Serialization is alphabetical, so a file (and therefore the run's config
//! hash) is a canonical function of its contents.

use crate::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

pub type KvMap = BTreeMap<String, String>;

/// Parse key-value text. `label` names the source in errors.
pub fn parse_str(text: &str, label: &str) -> Result<KvMap> {
    let mut map = KvMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: label.to_string(),
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse {
                path: label.to_string(),
                line: idx + 1,
                message: "empty key".into(),
            });
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

pub fn parse_file(path: &Path) -> Result<KvMap> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_str(&text, &path.display().to_string())
}

/// Canonical serialization: sorted keys, `key = value` lines.
pub fn serialize(map: &KvMap) -> String {
    let mut out = String::new();
    for (key, value) in map {
        out.push_str(key);
        out.push_str(" = ");
        out.push_str(value);
        out.push('\n');
    }
    out
}

/// Typed reads over a parsed map.
pub struct KvReader<'a> {
    map: &'a KvMap,
    label: &'a str,
}

impl<'a> KvReader<'a> {
    pub fn new(map: &'a KvMap, label: &'a str) -> Self {
        Self { map, label }
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<f64>().map(Some).map_err(|_| {
                Error::Config(format!("{}: key `{key}` is not a number: `{raw}`", self.label))
            }),
        }
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<usize>().map(Some).map_err(|_| {
                Error::Config(format!("{}: key `{key}` is not an integer: `{raw}`", self.label))
            }),
        }
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => match raw.as_str() {
                "true" | "1" | "yes" | "on" => Ok(Some(true)),
                "false" | "0" | "no" | "off" => Ok(Some(false)),
                other => Err(Error::Config(format!(
                    "{}: key `{key}` is not a boolean: `{other}`",
                    self.label
                ))),
            },
        }
    }

    pub fn string(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }
}

/// Format a float in its shortest round-trip form.
pub fn fmt_f64(value: f64) -> String {
    format!("{value}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_pairs() {
        let text = "# heading\nmpc.w_theta = 1000\n\nsubject.name = S1\n";
        let map = parse_str(text, "test").unwrap();
        assert_eq!(map.get("mpc.w_theta").unwrap(), "1000");
        assert_eq!(map.get("subject.name").unwrap(), "S1");
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_str("just words", "test").is_err());
        assert!(parse_str("= 3", "test").is_err());
    }

    #[test]
    fn serialization_round_trips_and_is_sorted() {
        let text = "b.key = 2\na.key = 1\n";
        let map = parse_str(text, "test").unwrap();
        let out = serialize(&map);
        assert_eq!(out, "a.key = 1\nb.key = 2\n");
        assert_eq!(parse_str(&out, "round").unwrap(), map);
    }

    #[test]
    fn typed_reads_validate() {
        let map = parse_str("x = 1.5\nn = 7\nflag = true\nbad = zebra\n", "test").unwrap();
        let reader = KvReader::new(&map, "test");
        assert_eq!(reader.f64("x").unwrap(), Some(1.5));
        assert_eq!(reader.usize("n").unwrap(), Some(7));
        assert_eq!(reader.bool("flag").unwrap(), Some(true));
        assert_eq!(reader.f64("missing").unwrap(), None);
        assert!(reader.f64("bad").is_err());
        assert!(reader.bool("bad").is_err());
    }
}
