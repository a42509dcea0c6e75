//! Seeded instance suites: generation, oracle files and manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{io_err, BenchError, Result};
use crate::instance::{random_instance, write_instance, InstanceData, InstanceKind};
use crate::oracle::{oracle, OracleValue};

pub const ORACLE_FILE: &str = "oracles.json";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Draws `n` instances from `seed`. Candidates whose oracle cannot decide
/// feasibility robustly are skipped, so the output depends only on the seed.
pub fn generate(kind: InstanceKind, n: usize, seed: u64) -> Result<Vec<(InstanceData, OracleValue)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut draws = 0;
    while out.len() < n {
        draws += 1;
        if draws > 20 * n + 100 {
            return Err(BenchError::Oracle("too many rejected draws".into()));
        }
        let name = format!("{kind}_{seed}_{:03}", out.len());
        let data = random_instance(&mut rng, kind, name);
        match oracle(&data) {
            Ok(Some(v)) => out.push((data, v)),
            Ok(None) => log::debug!("{}: infeasible draw", data.name),
            Err(e) => log::debug!("{}: redrawn ({e})", data.name),
        }
    }
    Ok(out)
}

/// Writes the instance files, `oracles.json` and `manifest.txt` into `dir`.
pub fn write_suite(dir: &Path, suite: &[(InstanceData, OracleValue)]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut oracles = BTreeMap::new();
    let mut manifest = String::new();
    for (d, v) in suite {
        write_instance(dir, d)?;
        oracles.insert(d.name.clone(), v.clone());
        manifest.push_str(&format!("{}.json\n", d.name));
    }
    let path = dir.join(ORACLE_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&oracles)? + "\n").map_err(io_err(&path))?;
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, manifest).map_err(io_err(&path))
}

pub fn read_oracles(path: &Path) -> Result<BTreeMap<String, OracleValue>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Instance paths listed in a manifest, one per line, relative to the
/// manifest's directory. Blank lines and `#` comments are ignored.
pub fn read_manifest(path: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

/// Directory of the suite shipped with the crate.
pub fn bundled_dir(kind: InstanceKind) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("suite").join(kind.to_string())
}
