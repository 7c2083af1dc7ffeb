//! Flat `key = value` configuration files. `#` starts a comment.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parsed settings. Consumers [`take`](ConfigMap::take) the keys they know;
/// [`finish`](ConfigMap::finish) rejects anything left over.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, (usize, String)>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: "expected key = value".into(),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Parse { line: i + 1, msg: "empty key".into() });
            }
            if entries.insert(k.to_string(), (i + 1, v.trim().to_string())).is_some() {
                return Err(Error::Parse { line: i + 1, msg: format!("duplicate key {k:?}") });
            }
        }
        Ok(ConfigMap { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (0, value.to_string()));
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Removes and parses `key`; `none` reads as an absent optional value
    /// only through [`take_opt`](ConfigMap::take_opt).
    pub fn take<V: FromStr>(&mut self, key: &str) -> Result<Option<V>>
    where
        V::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e| Error::Parse {
                line,
                msg: format!("{key}: {e}"),
            }),
        }
    }

    /// Like [`take`](ConfigMap::take) for optional settings: `none` clears
    /// the value.
    pub fn take_opt<V: FromStr>(&mut self, key: &str, slot: &mut Option<V>) -> Result<()>
    where
        V::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            Some((_, v)) if v.eq_ignore_ascii_case("none") => {
                self.entries.remove(key);
                *slot = None;
            }
            _ => {
                if let Some(v) = self.take(key)? {
                    *slot = Some(v);
                }
            }
        }
        Ok(())
    }

    pub fn take_into<V: FromStr>(&mut self, key: &str, slot: &mut V) -> Result<()>
    where
        V::Err: std::fmt::Display,
    {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((k, (line, _))) => Err(Error::Parse { line, msg: format!("unknown key {k:?}") }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_take() {
        let mut c = ConfigMap::parse("# comment\n svm.reg = 2.5 \n\ndpmm.pca_dim=none # off\nseed=7\n").unwrap();
        let mut reg = 1.0f64;
        let mut pca = Some(8usize);
        c.take_into("svm.reg", &mut reg).unwrap();
        c.take_opt("dpmm.pca_dim", &mut pca).unwrap();
        assert_eq!((reg, pca), (2.5, None));
        assert_eq!(c.take::<u64>("seed").unwrap(), Some(7));
        c.finish().unwrap();
    }

    #[test]
    fn errors_name_lines() {
        assert!(ConfigMap::parse("a=1\nbroken\n").unwrap_err().to_string().starts_with("line 2"));
        let mut c = ConfigMap::parse("x = abc\n").unwrap();
        assert!(c.take::<f64>("x").unwrap_err().to_string().starts_with("line 1"));
        let c = ConfigMap::parse("\nunused = 1\n").unwrap();
        assert!(c.finish().unwrap_err().to_string().contains("unused"));
    }
}
