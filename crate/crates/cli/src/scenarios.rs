//! Bundled scenarios and scenario search paths.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::config::ScenarioConfig;
use crate::error::{CliError, Result};

/// `(id, file contents)` of the scenarios compiled into the binary.
pub const BUNDLED: &[(&str, &str)] = &[
    ("band-structure", include_str!("../scenarios/band-structure.toml")),
    ("fig3", include_str!("../scenarios/fig3.toml")),
    ("fig4", include_str!("../scenarios/fig4.toml")),
    ("fig5-dirac", include_str!("../scenarios/fig5-dirac.toml")),
    ("weyl-demo", include_str!("../scenarios/weyl-demo.toml")),
];

pub fn bundled(id: &str) -> Result<ScenarioConfig> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(name, _)| *name == id)
        .ok_or_else(|| CliError::UnknownScenario(id.into()))?;
    ScenarioConfig::from_toml(text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    Bundled,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioEntry {
    /// File stem, used on the command line.
    pub id: String,
    /// The `name` inside the file.
    pub scenario: String,
    pub description: String,
    pub source: Source,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Listing {
    pub entries: Vec<ScenarioEntry>,
    pub warnings: Vec<String>,
}

/// Scenarios on the search path, sorted by id.
///
/// With no directories the bundled set is listed. Otherwise the directories
/// replace it and are searched in order; for a repeated id the first file
/// wins and the later ones produce warnings. Files that do not parse are
/// skipped with a warning.
pub fn list_scenarios(dirs: &[PathBuf]) -> Result<Listing> {
    let mut found: BTreeMap<String, ScenarioEntry> = BTreeMap::new();
    let mut warnings = Vec::new();
    if dirs.is_empty() {
        for (id, text) in BUNDLED {
            let c = ScenarioConfig::from_toml(text)?;
            found.insert(id.to_string(), entry(id, &c, Source::Bundled));
        }
    }
    for dir in dirs {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| CliError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        files.sort();
        for path in files {
            let id = stem(&path);
            if let Some(first) = found.get(&id) {
                warnings.push(format!(
                    "scenario `{id}` in {} is shadowed by {}",
                    path.display(),
                    describe(&first.source)
                ));
                continue;
            }
            match ScenarioConfig::load(&path) {
                Ok(c) => {
                    found.insert(id.clone(), entry(&id, &c, Source::File(path)));
                }
                Err(e) => warnings.push(format!("skipping {}: {e}", path.display())),
            }
        }
    }
    Ok(Listing {
        entries: found.into_values().collect(),
        warnings,
    })
}

/// A path to a file, or the id of a scenario on the search path.
pub fn resolve(spec: &str, dirs: &[PathBuf]) -> Result<ScenarioConfig> {
    let path = Path::new(spec);
    if path.is_file() {
        return ScenarioConfig::load(path);
    }
    if dirs.is_empty() {
        return bundled(spec);
    }
    for dir in dirs {
        let candidate = dir.join(format!("{spec}.toml"));
        if candidate.is_file() {
            return ScenarioConfig::load(&candidate);
        }
    }
    Err(CliError::UnknownScenario(spec.into()))
}

fn entry(id: &str, c: &ScenarioConfig, source: Source) -> ScenarioEntry {
    ScenarioEntry {
        id: id.into(),
        scenario: c.name.clone(),
        description: c.description.clone(),
        source,
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn describe(source: &Source) -> String {
    match source {
        Source::Bundled => "the bundled scenario".into(),
        Source::File(p) => p.display().to_string(),
    }
}

/// Tab-separated table with a header line.
pub fn format_listing(listing: &Listing) -> String {
    let mut out = String::from("# id\tscenario\tdescription\n");
    for e in &listing.entries {
        out.push_str(&format!("{}\t{}\t{}\n", e.id, e.scenario, e.description));
    }
    out
}
