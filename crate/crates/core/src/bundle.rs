//! Saved models: a directory holding `manifest.json` and one JSON file per
//! tree under `trees/`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

use crate::cart::RegressionTree;
use crate::data::{read_features_csv, ColumnSpec, Frame};
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::tuning::{Model, Strategy};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub strategy: Strategy,
    /// The tuned parameter: node size for trees, tree count for forests.
    pub chosen_m: usize,
    pub min_node_size: usize,
    pub feature_subset_size: Option<usize>,
    pub seed: u64,
    pub n_trees: usize,
    pub columns: Vec<ColumnSpec>,
    /// SHA-256 of the canonical JSON of `columns`.
    pub schema_hash: String,
}

#[derive(Clone, Debug)]
pub struct Bundle {
    pub manifest: Manifest,
    pub model: Model,
}

pub fn schema_hash(columns: &[ColumnSpec]) -> String {
    let json = serde_json::to_vec(columns).expect("column specs serialize");
    hex(&Sha256::digest(&json))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn tree_file(i: usize) -> String {
    format!("tree_{i:04}.json")
}

impl Bundle {
    pub fn new(model: Model, columns: Vec<ColumnSpec>, chosen_m: usize, seed: u64) -> Result<Bundle> {
        let (strategy, min_node_size, feature_subset_size, n_trees) = match &model {
            Model::Tree(t) => (Strategy::Tree, t.min_node_size(), None, 1),
            Model::Forest(f) => (Strategy::Forest, f.min_node_size(), Some(f.feature_subset_size()), f.ntree()),
        };
        let trees = trees_of(&model);
        if trees.iter().any(|t| t.feature_count() != columns.len()) {
            return Err(Error::Schema("model and column list disagree on the number of columns".into()));
        }
        Ok(Bundle {
            manifest: Manifest {
                format_version: BUNDLE_FORMAT_VERSION,
                strategy,
                chosen_m,
                min_node_size,
                feature_subset_size,
                seed,
                n_trees,
                schema_hash: schema_hash(&columns),
                columns,
            },
            model,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let trees_dir = dir.join("trees");
        fs::create_dir_all(&trees_dir).map_err(|e| Error::io(&trees_dir, e))?;
        write_json(&dir.join("manifest.json"), &self.manifest)?;
        for (i, t) in trees_of(&self.model).iter().enumerate() {
            write_json(&trees_dir.join(tree_file(i)), t)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Bundle> {
        let m: Manifest = read_json(&dir.join("manifest.json"))?;
        if m.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::Schema(format!("unsupported bundle format {}", m.format_version)));
        }
        if schema_hash(&m.columns) != m.schema_hash {
            return Err(Error::Schema("manifest schema hash does not match its column list".into()));
        }
        let trees = (0..m.n_trees)
            .map(|i| read_json::<RegressionTree>(&dir.join("trees").join(tree_file(i))))
            .collect::<Result<Vec<_>>>()?;
        for (i, t) in trees.iter().enumerate() {
            let kinds: Vec<_> = m.columns.iter().map(|c| c.kind).collect();
            if t.feature_kinds() != kinds.as_slice() {
                return Err(Error::Schema(format!("tree {i} does not match the manifest columns")));
            }
        }
        let model = match m.strategy {
            Strategy::Tree => Model::Tree(
                trees
                    .into_iter()
                    .next()
                    .ok_or_else(|| Error::Schema("tree bundle holds no tree".into()))?,
            ),
            Strategy::Forest => Model::Forest(Forest::from_trees(
                trees,
                m.min_node_size,
                m.feature_subset_size.unwrap_or(1),
                m.seed,
            )?),
        };
        Ok(Bundle { manifest: m, model })
    }

    pub fn predict_frame(&self, frame: &Frame) -> Result<Vec<f64>> {
        self.model.predict(frame)
    }

    /// Predicts a CSV with the bundle's columns (extra columns are ignored).
    pub fn predict_csv(&self, path: &Path) -> Result<Vec<f64>> {
        let frame = read_features_csv(path, &self.manifest.columns)?;
        self.predict_frame(&frame)
    }
}

fn trees_of(model: &Model) -> Vec<&RegressionTree> {
    match model {
        Model::Tree(t) => vec![t],
        Model::Forest(f) => f.trees().iter().collect(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}
