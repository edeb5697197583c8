//! Cohort directories: `manifest.json` plus the volume and mask files it references.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use layer_core::cohort::{CohortManifest, ModalitySet, SampleSet};
use layer_core::phantom::{assemble_cohort, case_patients, generate_patient, PhantomCohort, PhantomConfig};
use rayon::prelude::*;

use crate::error::{read, write, Error, Result};
use crate::format::{read_mask, read_volume, write_mask, write_volume};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}

pub fn encode_manifest(m: &CohortManifest) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(m).expect("manifest serializes");
    out.push(b'\n');
    out
}

pub fn write_manifest(dir: &Path, m: &CohortManifest) -> Result<()> {
    write(&manifest_path(dir), &encode_manifest(m))
}

/// Parses and validates the manifest, and checks that every referenced file exists.
pub fn read_manifest(dir: &Path) -> Result<CohortManifest> {
    let path = manifest_path(dir);
    let m: CohortManifest = serde_json::from_slice(&read(&path)?).map_err(|e| Error::json(&path, e))?;
    m.validate()?;
    for s in &m.scans {
        for f in [&s.volume, &s.mask] {
            let p = dir.join(f);
            if !p.is_file() {
                return Err(Error::Missing(p));
            }
        }
    }
    Ok(m)
}

/// Loads the scans needed for `set` in parallel and groups them into model inputs.
pub fn load_samples(dir: &Path, manifest: &CohortManifest, set: ModalitySet) -> Result<SampleSet> {
    let keep = set.modalities();
    let subset = CohortManifest {
        scans: manifest.scans.iter().filter(|s| keep.contains(&s.modality)).cloned().collect(),
        ..manifest.clone()
    };
    let volumes = subset
        .scans
        .par_iter()
        .map(|s| {
            let path = dir.join(&s.volume);
            let v = read_volume(&path)?;
            if v.dims() != manifest.dims {
                return Err(Error::format(&path, 8, format!("dims {} differ from the manifest's {}", v.dims(), manifest.dims)));
            }
            if v.modality() != s.modality {
                return Err(Error::format(&path, 20, format!("modality {} differs from the manifest record", v.modality().name())));
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mask_paths: Vec<&String> = subset.scans.iter().map(|s| &s.mask).collect();
    mask_paths.sort();
    mask_paths.dedup();
    let masks = mask_paths
        .par_iter()
        .map(|p| Ok(((*p).clone(), read_mask(&dir.join(p))?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(SampleSet::assemble(&subset, volumes, masks, set)?)
}

pub fn read_samples(dir: &Path, set: ModalitySet) -> Result<(CohortManifest, SampleSet)> {
    let m = read_manifest(dir)?;
    let s = load_samples(dir, &m, set)?;
    Ok((m, s))
}

/// Generates every patient in parallel; identical to the serial generator.
pub fn generate(config: &PhantomConfig) -> Result<PhantomCohort> {
    config.validate()?;
    let cases = case_patients(config);
    let per_patient = (0..config.patients)
        .into_par_iter()
        .map(|p| generate_patient(config, p as u32, cases[p]))
        .collect::<layer_core::Result<Vec<_>>>()?;
    Ok(assemble_cohort(config, per_patient.into_iter().flatten().collect()))
}

/// Writes every mask and volume (one writer per file) and then the manifest.
pub fn write_cohort(dir: &Path, cohort: &PhantomCohort) -> Result<()> {
    cohort.sites.par_iter().try_for_each(|site| {
        write_mask(&dir.join(&site.mask_path), &site.mask)?;
        site.scans.iter().try_for_each(|(rec, v)| write_volume(&dir.join(&rec.volume), v))
    })?;
    write_manifest(dir, &cohort.manifest)
}
