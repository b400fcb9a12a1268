//! Input loading and atomic output.

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use carbonledger::ingest::{
    parse_flows_csv, parse_gdp_csv, parse_products_csv, parse_scenario_config, Dataset,
    ScenarioConfig,
};

use crate::manifest::RunManifest;

/// Writes `bytes` to a temporary file in the target directory and renames
/// it into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

/// Where each kind of input comes from.
#[derive(Debug, Default, Clone)]
pub struct Inputs<'a> {
    pub flows: &'a [PathBuf],
    pub monthly: &'a [PathBuf],
    pub gdp: Option<&'a Path>,
    pub products: Option<&'a Path>,
}

/// Parses every input, merges them in argument order (later files win) and
/// checks the assembled dataset. Each file read is recorded in `manifest`.
pub fn load_dataset(inputs: &Inputs<'_>, manifest: &mut RunManifest) -> Result<Dataset> {
    let mut ds = Dataset::new();
    for path in inputs.flows.iter().chain(inputs.monthly) {
        let origin = path.display().to_string();
        let part = parse_flows_csv(open(path)?, &origin)?;
        ds.merge(part, &origin);
        manifest.input(path)?;
    }
    if let Some(path) = inputs.gdp {
        let origin = path.display().to_string();
        ds.merge(parse_gdp_csv(open(path)?, &origin)?, &origin);
        manifest.input(path)?;
    }
    if let Some(path) = inputs.products {
        let origin = path.display().to_string();
        ds.merge(parse_products_csv(open(path)?, &origin)?, &origin);
        manifest.input(path)?;
    }
    ds.check_invariants()?;
    Ok(ds)
}

/// The config file if given, otherwise the built-in presets.
pub fn load_config(path: Option<&Path>, manifest: &mut RunManifest) -> Result<ScenarioConfig> {
    match path {
        Some(p) => {
            let cfg =
                parse_scenario_config(open(p)?).with_context(|| format!("in {}", p.display()))?;
            manifest.input(p)?;
            Ok(cfg)
        }
        None => Ok(ScenarioConfig::builtin()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/x.csv");
        write_atomic(&p, b"one\n").unwrap();
        write_atomic(&p, b"two\n").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two\n");
        assert_eq!(fs::read_dir(dir.path().join("sub")).unwrap().count(), 1);
    }
}
