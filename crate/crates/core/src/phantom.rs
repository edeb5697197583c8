//! Synthetic layered cohorts with a planted, layer-specific class signal.
//!
//! Each acquisition site is a stack of depth-ordered slabs: a background
//! stand-off region at the top, then dermis, SFL, SFM, deep fat, DFM and
//! muscle. Slab thicknesses vary smoothly across the lateral plane with a
//! per-site random pattern. On MP-positive sides the planted layer's mean is
//! shifted by `delta * sigma`; every voxel then receives Gaussian noise of
//! standard deviation `sigma`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::{CohortManifest, ModalitySet, PlantedMeta, SampleSet, ScanLabel, ScanRecord, Side, Site};
use crate::error::bail;
use crate::math;
use crate::rng::{mix, substream};
use crate::volume::{Dims, Layer, LayerMaskSet, Modality, VolumeGrid};
use crate::Result;

/// Density of soft tissue used for the shear modulus, kg/m³.
pub const TISSUE_DENSITY: f64 = 1000.0;

/// `μ = ρ c²` with `ρ = 1000 kg/m³`.
pub fn shear_speed_to_modulus(speed: f64) -> Result<f64> {
    if !(speed >= 0.0) {
        bail!(Domain, "shear speed must be non-negative, got {}", speed);
    }
    Ok(TISSUE_DENSITY * speed * speed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomConfig {
    pub dims: Dims,
    pub patients: usize,
    pub visits: u8,
    pub sides: u8,
    pub sites: u8,
    pub bmode_reps: u8,
    pub swe_reps: u8,
    pub planted_layer: Layer,
    /// Effect size in units of `sigma`.
    pub delta: f64,
    pub sigma: f64,
    /// Relative amplitude of the lateral slab-thickness variation.
    pub jitter: f64,
    /// Fraction of patients that are MP cases.
    pub case_fraction: f64,
    /// Probability that a given side of a case patient is MP-positive at a visit.
    pub side_mp_prob: f64,
    /// Probability that an MP-positive side carries a trigger point.
    pub trigger_prob: f64,
    /// Relative slab thickness: background then the six layers.
    pub thickness: [f64; 7],
    /// Mean B-mode intensity: background then the six layers.
    pub bmode_mean: [f64; 7],
    /// Mean shear speed in m/s: background then the six layers.
    pub swe_mean: [f64; 7],
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            dims: Dims::new(64, 64, 32),
            patients: 12,
            visits: 2,
            sides: 2,
            sites: 2,
            bmode_reps: 3,
            swe_reps: 2,
            planted_layer: Layer::Dfm,
            delta: 2.0,
            sigma: 0.5,
            jitter: 0.25,
            case_fraction: 0.5,
            side_mp_prob: 0.75,
            trigger_prob: 0.5,
            thickness: [4.0, 2.0, 5.0, 2.0, 5.0, 2.0, 12.0],
            bmode_mean: [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            swe_mean: [0.0, 2.5, 1.2, 3.0, 1.2, 3.5, 2.0],
            seed: 0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        if d.nx == 0 || d.ny == 0 {
            bail!(Config, "lateral dims must be positive");
        }
        if d.nz < 7 {
            bail!(Config, "nz = {} cannot hold background plus six slabs of at least one voxel", d.nz);
        }
        if !(self.delta >= 0.0) || !(self.sigma >= 0.0) || !self.delta.is_finite() || !self.sigma.is_finite() {
            bail!(Config, "delta and sigma must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.jitter) {
            bail!(Config, "jitter must lie in [0, 1)");
        }
        if self.thickness.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            bail!(Config, "slab thicknesses must be positive");
        }
        if !(1..=2).contains(&self.visits) || !(1..=2).contains(&self.sides) || !(1..=2).contains(&self.sites) {
            bail!(Config, "visits, sides and sites must each be 1 or 2");
        }
        if self.bmode_reps == 0 && self.swe_reps == 0 {
            bail!(Config, "at least one acquisition per site is required");
        }
        if self.swe_mean.iter().any(|m| *m < 0.0) {
            bail!(Config, "shear-speed means must be non-negative");
        }
        for p in [self.case_fraction, self.side_mp_prob, self.trigger_prob] {
            if !(0.0..=1.0).contains(&p) {
                bail!(Config, "probabilities must lie in [0, 1]");
            }
        }
        if self.patients == 0 {
            bail!(Config, "at least one patient is required");
        }
        Ok(())
    }

    /// Nominal integer slab thicknesses summing to `nz` (largest remainder, each ≥ 1).
    pub fn slab_thickness(&self) -> Result<[usize; 7]> {
        self.validate()?;
        Ok(apportion(&self.thickness, self.dims.nz))
    }

    fn planted_meta(&self) -> PlantedMeta {
        PlantedMeta { layer: self.planted_layer.code(), delta: self.delta, sigma: self.sigma }
    }
}

/// Splits `total` into integer parts proportional to `weights`, each at least one.
fn apportion(weights: &[f64; 7], total: usize) -> [usize; 7] {
    let free = total - 7;
    let sum: f64 = weights.iter().sum();
    let mut out = [1usize; 7];
    let mut rem = [(0.0f64, 0usize); 7];
    let mut used = 0;
    for i in 0..7 {
        let share = weights[i] / sum * (total as f64) - 1.0;
        let share = if share > 0.0 { share } else { 0.0 };
        let base = math::floor(share) as usize;
        out[i] += base;
        used += base;
        rem[i] = (share - base as f64, i);
    }
    // Remaining voxels go to the largest fractional parts, ties to the lower index.
    rem.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut k = 0;
    while used < free {
        out[rem[k % 7].1] += 1;
        used += 1;
        k += 1;
    }
    while used > free {
        let i = (0..7).rev().find(|&i| out[i] > 1).unwrap();
        out[i] -= 1;
        used -= 1;
    }
    out
}

/// One acquisition site: its mask and all scans taken there.
#[derive(Clone, Debug)]
pub struct PhantomSite {
    pub mask_path: String,
    pub mask: LayerMaskSet,
    pub scans: Vec<(ScanRecord, VolumeGrid)>,
}

/// A generated cohort held in memory.
#[derive(Clone, Debug)]
pub struct PhantomCohort {
    pub manifest: CohortManifest,
    pub sites: Vec<PhantomSite>,
}

impl PhantomCohort {
    /// Turns the cohort into model inputs for `set`.
    pub fn into_samples(self, set: ModalitySet) -> Result<SampleSet> {
        let mut masks = BTreeMap::new();
        let mut volumes = Vec::new();
        for site in self.sites {
            for (_, v) in site.scans {
                volumes.push(v);
            }
            masks.insert(site.mask_path, site.mask);
        }
        SampleSet::assemble(&self.manifest, volumes, masks, set)
    }
}

const STREAM_CASES: u64 = 0xCA5E;

/// Which patients are MP cases: a seeded permutation, first `round(fraction * n)` are cases.
pub fn case_patients(config: &PhantomConfig) -> Vec<bool> {
    let n = config.patients;
    let n_cases = math::round(config.case_fraction * n as f64) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(config.seed, STREAM_CASES));
    let mut cases = alloc::vec![false; n];
    for &p in order.iter().take(n_cases) {
        cases[p] = true;
    }
    cases
}

/// Generates the full cohort serially. Identical to concatenating
/// [`generate_patient`] over all patients.
pub fn generate_cohort(config: &PhantomConfig) -> Result<PhantomCohort> {
    config.validate()?;
    let cases = case_patients(config);
    let mut sites = Vec::new();
    for p in 0..config.patients {
        sites.extend(generate_patient(config, p as u32, cases[p])?);
    }
    Ok(assemble_cohort(config, sites))
}

/// Builds the manifest from generated sites (order preserved).
pub fn assemble_cohort(config: &PhantomConfig, sites: Vec<PhantomSite>) -> PhantomCohort {
    let scans = sites.iter().flat_map(|s| s.scans.iter().map(|(r, _)| r.clone())).collect();
    PhantomCohort {
        manifest: CohortManifest {
            seed: config.seed,
            dims: config.dims,
            planted: Some(config.planted_meta()),
            scans,
        },
        sites,
    }
}

fn side_name(side: Side) -> &'static str {
    match side {
        Side::Left => "left",
        Side::Right => "right",
    }
}

fn site_name(site: Site) -> &'static str {
    match site {
        Site::Mf => "MF",
        Site::Es => "ES",
    }
}

/// Generates every site of one patient from its own substream.
pub fn generate_patient(config: &PhantomConfig, patient: u32, is_case: bool) -> Result<Vec<PhantomSite>> {
    config.validate()?;
    let nominal = apportion(&config.thickness, config.dims.nz);
    let mut rng = substream(config.seed, mix(&[patient as u64, 1]));

    let mut labels = Vec::new();
    for visit in 1..=config.visits {
        for &side in &Side::BOTH[..config.sides as usize] {
            let mp = is_case && rng.random::<f64>() < config.side_mp_prob;
            let trigger = rng.random::<f64>() < config.trigger_prob;
            labels.push(((visit, side), mp, trigger));
        }
    }
    // A case patient carries at least one MP side.
    if is_case && !labels.iter().any(|l| l.1) {
        let pick = rng.random_range(0..labels.len());
        labels[pick].1 = true;
    }

    let mut out = Vec::new();
    for ((visit, side), mp, trigger) in labels {
        let label = match (mp, trigger) {
            (false, _) => ScanLabel::Control,
            (true, false) => ScanLabel::TenderMp,
            (true, true) => ScanLabel::TriggerMp,
        };
        for &site in &Site::BOTH[..config.sites as usize] {
            let stream = mix(&[patient as u64, visit as u64, side as u64, site as u64, 2]);
            let mut site_rng = substream(config.seed, stream);
            let mask = site_mask(config, &nominal, &mut site_rng);
            let stem = format!("p{:03}/v{}_{}_{}", patient, visit, side_name(side), site_name(site));
            let mask_path = format!("{}_mask.lmsk", stem);
            let mut scans = Vec::new();
            for (modality, reps) in [(Modality::BMode, config.bmode_reps), (Modality::Swe, config.swe_reps)] {
                for rep in 1..=reps {
                    let volume = site_volume(config, &mask, modality, mp, &mut site_rng)?;
                    let rec = ScanRecord {
                        patient,
                        visit,
                        side,
                        site,
                        repetition: rep,
                        modality,
                        label,
                        volume: format!("{}_{}_r{}.lvol", stem, modality.name(), rep),
                        mask: mask_path.clone(),
                    };
                    scans.push((rec, volume));
                }
            }
            out.push(PhantomSite { mask_path, mask, scans });
        }
    }
    Ok(out)
}

/// Depth-ordered slab labels with smooth lateral thickness variation.
fn site_mask(config: &PhantomConfig, nominal: &[usize; 7], rng: &mut impl Rng) -> LayerMaskSet {
    let d = config.dims;
    let tau = 2.0 * core::f64::consts::PI;
    // Per slab: offset, x-wave amplitude and phase, y-wave amplitude and phase.
    let mut waves = [[0.0f64; 5]; 7];
    for w in waves.iter_mut() {
        *w = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.0..tau),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.0..tau),
        ];
    }
    let mut labels = alloc::vec![0u8; d.len()];
    for y in 0..d.ny {
        for x in 0..d.nx {
            let mut weights = [0.0f64; 7];
            for (j, w) in waves.iter().enumerate() {
                let fx = x as f64 / d.nx as f64;
                let fy = y as f64 / d.ny as f64;
                let n = (w[0] + w[1] * math::sin(tau * fx + w[2]) + w[3] * math::sin(tau * fy + w[4])) / 3.0;
                weights[j] = nominal[j] as f64 * (1.0 + config.jitter * n);
            }
            let t = apportion(&weights, d.nz);
            let mut z = 0;
            for (code, &th) in t.iter().enumerate() {
                for _ in 0..th {
                    labels[d.index(x, y, z)] = code as u8;
                    z += 1;
                }
            }
        }
    }
    LayerMaskSet::new(d, labels).expect("slab labels are valid by construction")
}

fn site_volume(
    config: &PhantomConfig,
    mask: &LayerMaskSet,
    modality: Modality,
    mp: bool,
    rng: &mut impl Rng,
) -> Result<VolumeGrid> {
    let means = match modality {
        Modality::BMode => &config.bmode_mean,
        Modality::Swe => &config.swe_mean,
    };
    let planted = config.planted_layer.code();
    let shift = if mp { config.delta * config.sigma } else { 0.0 };
    let vox: Vec<f32> = mask
        .labels()
        .iter()
        .map(|&code| {
            let noise: f64 = StandardNormal.sample(rng);
            let mut v = means[code as usize] + config.sigma * noise;
            if code == planted {
                v += shift;
            }
            if modality == Modality::Swe && v < 0.0 {
                v = 0.0;
            }
            v as f32
        })
        .collect();
    VolumeGrid::new(config.dims, modality, vox)
}
