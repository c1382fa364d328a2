//! Option resolution: flag, then config file, then built-in default.

use std::fmt::Display;
use std::path::Path;

use serde::de::DeserializeOwned;

use crate::Failure;

/// Parsed `--config` file: a TOML table with one section per subcommand.
#[derive(Debug, Default)]
pub struct ConfigFile {
    pub table: toml::Table,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
        let table = text.parse::<toml::Table>().map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
        Ok(Self { table })
    }

    pub fn section(&self, name: &str) -> Result<Option<&toml::Table>, Failure> {
        match self.table.get(name) {
            None => Ok(None),
            Some(toml::Value::Table(t)) => Ok(Some(t)),
            Some(_) => Err(Failure::usage(format!("config section `{name}` is not a table"))),
        }
    }
}

/// Resolves options for one subcommand and remembers where each came from.
pub struct Resolver<'a> {
    section_name: &'static str,
    section: Option<&'a toml::Table>,
    lines: Vec<String>,
}

impl<'a> Resolver<'a> {
    pub fn new(file: &'a ConfigFile, section_name: &'static str) -> Result<Self, Failure> {
        Ok(Self { section_name, section: file.section(section_name)?, lines: Vec::new() })
    }

    fn from_file<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, Failure> {
        let key_alt = key.replace('-', "_");
        let Some(v) = self.section.and_then(|s| s.get(key).or_else(|| s.get(&key_alt))) else { return Ok(None) };
        v.clone().try_into().map(Some).map_err(|e| Failure::usage(format!("config {}.{key}: {e}", self.section_name)))
    }

    fn note(&mut self, key: &str, value: &dyn Display, source: &str) {
        self.lines.push(format!("{key} = {value} ({source})"));
    }

    pub fn get<T: DeserializeOwned + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, Failure> {
        let (v, src) = match flag {
            Some(v) => (v, "flag"),
            None => match self.from_file(key)? {
                Some(v) => (v, "config"),
                None => (default, "default"),
            },
        };
        self.note(key, &v, src);
        Ok(v)
    }

    /// Like [`Resolver::get`] without a default.
    pub fn require<T: DeserializeOwned + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T, Failure> {
        let (v, src) = match flag {
            Some(v) => (v, "flag"),
            None => match self.from_file(key)? {
                Some(v) => (v, "config"),
                None => return Err(Failure::usage(format!("missing required option --{key}"))),
            },
        };
        self.note(key, &v, src);
        Ok(v)
    }

    pub fn optional<T: DeserializeOwned + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, Failure> {
        let (v, src) = match flag {
            Some(v) => (Some(v), "flag"),
            None => (self.from_file(key)?, "config"),
        };
        match &v {
            Some(x) => self.note(key, x, src),
            None => self.note(key, &"-", "unset"),
        }
        Ok(v)
    }

    /// Prints the resolved options to stderr.
    pub fn print(&self) {
        for l in &self.lines {
            eprintln!("config {}: {l}", self.section_name);
        }
    }
}

/// Reads a TOML or JSON file (by extension) into `T`.
pub fn read_struct<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}
