//! Reading pmf, instance and sample files.

use std::fs;
use std::path::Path;

use permtest::instances::{Family, HardInstance};
use permtest::{Pmf, SampleSet};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Several instances sharing one reference, as written by `gen --kind both`.
#[derive(Serialize, Deserialize)]
pub struct Bundle {
    pub instances: Vec<HardInstance>,
}

#[derive(Clone, Copy)]
pub enum Role {
    Reference,
    Member,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnyFile {
    Bundle(Bundle),
    Instance(Box<HardInstance>),
    Pmf(Pmf),
}

fn malformed(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Malformed(format!("{}: {msg}", path.display()))
}

fn family_label(f: Family) -> &'static str {
    match f {
        Family::MultClose => "close",
        Family::MultFar => "far",
        Family::CfrC => "c",
        Family::CfrF => "f",
        Family::Equal => "equal",
        Family::TestingLb => "testing-lb",
    }
}

fn pick_instance(path: &Path, mut instances: Vec<HardInstance>, pick: &str) -> Result<HardInstance, CliError> {
    let idx = match pick.parse::<usize>() {
        Ok(i) => Some(i),
        Err(_) => instances
            .iter()
            .position(|inst| inst.params.family.is_some_and(|f| family_label(f).eq_ignore_ascii_case(pick))),
    };
    match idx {
        Some(i) if i < instances.len() => Ok(instances.swap_remove(i)),
        _ => Err(CliError::Usage(format!("--pick {pick:?} matches no instance in {}", path.display()))),
    }
}

/// Loads a pmf from a pmf file, an instance file or a bundle. Instances
/// contribute their reference or member depending on `role`; picking
/// `reference` selects the reference in either role.
pub fn load_source(path: &Path, pick: &str, role: Role) -> Result<Pmf, CliError> {
    let text = fs::read_to_string(path).map_err(|e| malformed(path, e))?;
    let parsed: AnyFile = serde_json::from_str(&text).map_err(|_| {
        // Re-parse as a plain pmf for a more useful message.
        match serde_json::from_str::<Pmf>(&text) {
            Err(e) => malformed(path, e),
            Ok(_) => malformed(path, "unrecognized file layout"),
        }
    })?;
    let inst = match parsed {
        AnyFile::Pmf(p) => return Ok(p),
        AnyFile::Instance(inst) => *inst,
        AnyFile::Bundle(b) if pick == "reference" => b.instances.into_iter().next().ok_or_else(|| malformed(path, "empty bundle"))?,
        AnyFile::Bundle(b) => pick_instance(path, b.instances, pick)?,
    };
    let role = if pick == "reference" { Role::Reference } else { role };
    inst.check().map_err(|e| malformed(path, e))?;
    Ok(match role {
        Role::Reference => inst.reference,
        Role::Member => inst.member,
    })
}

/// Reads newline-separated 0-based indices; blank lines are ignored.
pub fn load_samples(path: &Path, n: usize) -> Result<SampleSet, CliError> {
    let text = fs::read_to_string(path).map_err(|e| malformed(path, e))?;
    let draws = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.trim().parse::<usize>().map_err(|e| malformed(path, format!("line {}: {e}", i + 1))))
        .collect::<Result<Vec<_>, _>>()?;
    SampleSet::from_draws(draws, n, 0).map_err(|e| malformed(path, e))
}
