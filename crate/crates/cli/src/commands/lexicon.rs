use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use entred_core::lexicon::{build_lexicon, EntityLexicon, LexiconCounts};
use entred_core::synth::synth_lexicon;
use entred_core::EntityType;

use super::emit;
use crate::cli::{LexiconBuildArgs, LexiconCmd, LexiconSynthArgs};
use crate::manifest::RunManifest;

pub const PERSON_FILE: &str = "person.txt";
pub const ORGANIZATION_FILE: &str = "organization.txt";

pub fn run(cmd: LexiconCmd) -> Result<()> {
    match cmd {
        LexiconCmd::Build(a) => build(a),
        LexiconCmd::Synth(a) => synth(a),
    }
}

/// Writes both pools, one name per line, and returns their paths.
fn write_pools(lexicon: &EntityLexicon, dir: &Path) -> Result<[(&'static str, std::path::PathBuf); 2]> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut paths = Vec::new();
    for (ty, file, key) in [
        (EntityType::Person, PERSON_FILE, "person"),
        (EntityType::Organization, ORGANIZATION_FILE, "organization"),
    ] {
        let pool = lexicon.pool(&ty).expect("replaceable type");
        let text: String = pool.names().iter().map(|n| format!("{n}\n")).collect();
        let path = dir.join(file);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        paths.push((key, path));
    }
    Ok(paths.try_into().expect("two pools"))
}

fn counts_table(c: &LexiconCounts) -> String {
    let mut out = format!("{:<14}{:>12}{:>12}{:>12}\n", "pool", "lines", "names", "duplicates");
    for (name, p) in [("PERSON", c.person), ("ORGANIZATION", c.organization)] {
        out.push_str(&format!("{name:<14}{:>12}{:>12}{:>12}\n", p.lines, p.names, p.duplicates));
    }
    out
}

fn build(a: LexiconBuildArgs) -> Result<()> {
    let mut manifest = RunManifest::start("lexicon build", &a)?;
    manifest.input("person", &a.person)?;
    manifest.input("organization", &a.org)?;
    let (lexicon, counts) = build_lexicon(&a.person, &a.org)?;
    for (key, path) in write_pools(&lexicon, &a.out_dir)? {
        manifest.output(key, &path)?;
    }
    emit(&counts, &a.report, counts_table)?;
    if let Some(r) = &a.report.report {
        manifest.output("report", r)?;
    }
    manifest.finish(a.manifest.manifest.as_deref())?;
    Ok(())
}

fn synth(a: LexiconSynthArgs) -> Result<()> {
    let mut manifest = RunManifest::start("lexicon synth", &a)?;
    anyhow::ensure!(
        a.size >= 1 && a.size <= entred_core::synth::MAX_SYNTH_POOL,
        "--size must be between 1 and {}",
        entred_core::synth::MAX_SYNTH_POOL
    );
    let lexicon = synth_lexicon(a.size, a.size);
    for (key, path) in write_pools(&lexicon, &a.out_dir)? {
        manifest.output(key, &path)?;
    }
    manifest.finish(a.manifest.manifest.as_deref())?;
    Ok(())
}
