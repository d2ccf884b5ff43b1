use serde::{Deserialize, Serialize};
use std::path::Path;

use super::ColumnKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemaKind {
    Column(ColumnKind),
    Ignore,
}

impl SchemaKind {
    fn parse(token: &str) -> Option<Self> {
        Some(match token.trim().to_ascii_lowercase().as_str() {
            "continuous" | "numeric" | "num" | "real" => SchemaKind::Column(ColumnKind::Continuous),
            "discrete" | "integer" | "int" => SchemaKind::Column(ColumnKind::Discrete),
            "categorical" | "cat" | "factor" => SchemaKind::Column(ColumnKind::Categorical),
            "ignore" | "skip" => SchemaKind::Ignore,
            _ => return None,
        })
    }
}

/// Column-kind sidecar: one `name=kind` line per column. Blank lines and
/// lines starting with `#` are ignored.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub entries: Vec<(String, SchemaKind)>,
}

impl Schema {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, kind) = line
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("line {}: expected `name=kind`", lineno + 1)))?;
            let kind = SchemaKind::parse(kind)
                .ok_or_else(|| Error::Schema(format!("line {}: unknown kind `{}`", lineno + 1, kind.trim())))?;
            let name = name.trim().to_string();
            if entries.iter().any(|(n, _)| *n == name) {
                return Err(Error::Schema(format!("line {}: duplicate column `{name}`", lineno + 1)));
            }
            entries.push((name, kind));
        }
        Ok(Schema { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Schema::parse(&text)
    }

    pub fn get(&self, name: &str) -> Option<SchemaKind> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, k)| *k)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(n, k)| {
                let k = match k {
                    SchemaKind::Column(c) => c.as_str(),
                    SchemaKind::Ignore => "ignore",
                };
                format!("{n}={k}\n")
            })
            .collect()
    }
}

/// A column's name, kind and (for categorical columns) its level dictionary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindSource {
    Declared,
    Inferred,
}
