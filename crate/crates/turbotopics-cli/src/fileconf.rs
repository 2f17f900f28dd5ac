use std::path::Path;

use crate::CliError;

/// Flat TOML config file backing command-line flags. Flags win over file
/// keys, file keys win over built-in defaults; unknown keys are ignored so
/// one file can serve several subcommands.
pub struct FileConf {
    table: toml::Table,
}

impl FileConf {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Data(format!("config {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Data(format!("config {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        Ok(Self { table })
    }

    fn expect<T>(&self, key: &str, kind: &str, got: Option<T>) -> Result<Option<T>, CliError> {
        match (self.table.contains_key(key), got) {
            (true, None) => Err(CliError::Data(format!("config key `{key}` expects {kind}"))),
            (_, v) => Ok(v),
        }
    }

    pub fn u64_(&self, key: &str) -> Result<Option<u64>, CliError> {
        let v = self.table.get(key).and_then(|v| v.as_integer()).and_then(|i| u64::try_from(i).ok());
        self.expect(key, "a non-negative integer", v)
    }

    pub fn u32_(&self, key: &str) -> Result<Option<u32>, CliError> {
        let v = self.u64_(key)?.map(u32::try_from).transpose().ok().flatten();
        self.expect(key, "a 32-bit unsigned integer", v)
    }

    pub fn usize_(&self, key: &str) -> Result<Option<usize>, CliError> {
        Ok(self.u64_(key)?.map(|v| v as usize))
    }

    pub fn f64_(&self, key: &str) -> Result<Option<f64>, CliError> {
        let v = self.table.get(key).and_then(|v| match v {
            toml::Value::Float(f) => Some(*f),
            toml::Value::Integer(i) => Some(*i as f64),
            _ => None,
        });
        self.expect(key, "a number", v)
    }

    pub fn string(&self, key: &str) -> Result<Option<String>, CliError> {
        let v = self.table.get(key).and_then(|v| v.as_str()).map(str::to_owned);
        self.expect(key, "a string", v)
    }

    pub fn string_list(&self, key: &str) -> Result<Option<Vec<String>>, CliError> {
        let v = self.table.get(key).and_then(|v| match v {
            toml::Value::Array(items) => {
                items.iter().map(|i| i.as_str().map(str::to_owned)).collect::<Option<Vec<_>>>()
            }
            toml::Value::String(s) => {
                Some(s.split(',').map(|p| p.trim().to_owned()).filter(|p| !p.is_empty()).collect())
            }
            _ => None,
        });
        self.expect(key, "an array of strings", v)
    }

    pub fn usize_list(&self, key: &str) -> Result<Option<Vec<usize>>, CliError> {
        let v = self.table.get(key).and_then(|v| v.as_array()).and_then(|items| {
            items
                .iter()
                .map(|i| i.as_integer().and_then(|n| usize::try_from(n).ok()))
                .collect::<Option<Vec<_>>>()
        });
        self.expect(key, "an array of non-negative integers", v)
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        let v = self.table.get(key).and_then(|v| v.as_array()).and_then(|items| {
            items
                .iter()
                .map(|i| match i {
                    toml::Value::Float(f) => Some(*f),
                    toml::Value::Integer(n) => Some(*n as f64),
                    _ => None,
                })
                .collect::<Option<Vec<_>>>()
        });
        self.expect(key, "an array of numbers", v)
    }
}
