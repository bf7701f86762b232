//! Loading cascades, type catalogs and assemblies from disk.
//!
//! A manifest is either a cascade
//!
//! ```json
//! { "name": "assistance", "namespace": "", "types": "types.json",
//!   "cycles": [["a.aa"], ["b.aa", {"path": "c.aa", "namespace": "x"}]] }
//! ```
//!
//! or an array of paths to such manifests. Paths are relative to the file
//! that mentions them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::assembly::Assembly;
use crate::export::{from_json, ImportError};
use crate::lang::{parse_aa, ParseError};
use crate::orchestrator::Cascade;
use crate::weaving::{TypeCatalog, GLOBAL_NAMESPACE};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", .path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{}:{source}", .path.display())]
    Parse { path: PathBuf, source: ParseError },
    #[error("{}: {source}", .path.display())]
    Assembly { path: PathBuf, source: ImportError },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ManifestDoc {
    List(Vec<PathBuf>),
    Cascade(CascadeDoc),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CascadeDoc {
    name: String,
    #[serde(default)]
    namespace: Option<String>,
    #[serde(default)]
    types: Option<PathBuf>,
    cycles: Vec<Vec<EntryDoc>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EntryDoc {
    Path(PathBuf),
    Scoped { path: PathBuf, namespace: String },
}

/// Cascades of a manifest together with the union of their catalogs.
#[derive(Debug, Clone, Default)]
pub struct Loaded {
    pub cascades: Vec<Cascade>,
    pub catalog: TypeCatalog,
}

fn read(path: &Path) -> Result<String, ManifestError> {
    fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ManifestError> {
    serde_json::from_str(&read(path)?).map_err(|source| ManifestError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn relative(base: &Path, p: &Path) -> PathBuf {
    base.parent().unwrap_or(Path::new(".")).join(p)
}

pub fn load_aa(path: &Path) -> Result<crate::lang::AspectOfAssembly, ManifestError> {
    parse_aa(&read(path)?).map_err(|source| ManifestError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_assembly(path: &Path) -> Result<Assembly, ManifestError> {
    from_json(&read(path)?).map_err(|source| ManifestError::Assembly {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_catalog(path: &Path) -> Result<TypeCatalog, ManifestError> {
    json(path)
}

pub fn load_manifest(path: &Path) -> Result<Loaded, ManifestError> {
    let mut out = Loaded::default();
    match json::<ManifestDoc>(path)? {
        ManifestDoc::List(paths) => {
            for p in paths {
                let sub = load_manifest(&relative(path, &p))?;
                out.cascades.extend(sub.cascades);
                out.catalog.merge(&sub.catalog);
            }
        }
        ManifestDoc::Cascade(doc) => {
            if let Some(types) = &doc.types {
                out.catalog.merge(&load_catalog(&relative(path, types))?);
            }
            let mut cycles = Vec::with_capacity(doc.cycles.len());
            for cycle in &doc.cycles {
                let mut aas = Vec::with_capacity(cycle.len());
                for entry in cycle {
                    let (p, ns) = match entry {
                        EntryDoc::Path(p) => (p, None),
                        EntryDoc::Scoped { path, namespace } => (path, Some(namespace.clone())),
                    };
                    let mut aa = load_aa(&relative(path, p))?;
                    if ns.is_some() {
                        aa.namespace = ns;
                    }
                    aas.push(aa);
                }
                cycles.push(aas);
            }
            let namespace = doc
                .namespace
                .unwrap_or_else(|| GLOBAL_NAMESPACE.to_string());
            out.cascades.push(Cascade::new(doc.name, namespace, cycles));
        }
    }
    Ok(out)
}
