//! Scan records and the cohort manifest.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::bail;
use crate::volume::{Dims, LayerMaskSet, Modality, MultiVolume, VolumeGrid};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];
}

/// Imaging site on one side: multifidus or erector spinae.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Site {
    #[serde(rename = "MF")]
    Mf,
    #[serde(rename = "ES")]
    Es,
}

impl Site {
    pub const BOTH: [Site; 2] = [Site::Mf, Site::Es];
}

/// Scan-level clinical label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScanLabel {
    #[serde(rename = "control")]
    Control,
    /// At least one tender point and no trigger point.
    #[serde(rename = "tenderMP")]
    TenderMp,
    /// At least one trigger point.
    #[serde(rename = "triggerMP")]
    TriggerMp,
}

impl ScanLabel {
    pub fn is_mp(self) -> bool {
        !matches!(self, ScanLabel::Control)
    }

    pub fn is_trigger(self) -> bool {
        matches!(self, ScanLabel::TriggerMp)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub patient: u32,
    /// 1-based visit index.
    pub visit: u8,
    pub side: Side,
    pub site: Site,
    /// 1-based repetition index within the site and modality.
    pub repetition: u8,
    pub modality: Modality,
    pub label: ScanLabel,
    /// Volume file, relative to the manifest directory.
    pub volume: String,
    /// Mask file, relative to the manifest directory.
    pub mask: String,
}

/// Identity of a scan: `(patient, visit, side, site, repetition, modality)`.
pub type ScanKey = (u32, u8, Side, Site, u8, Modality);

impl ScanRecord {
    pub fn key(&self) -> ScanKey {
        (self.patient, self.visit, self.side, self.site, self.repetition, self.modality)
    }
}

/// Ground truth written by the phantom generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedMeta {
    pub layer: u8,
    pub delta: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub seed: u64,
    pub dims: Dims,
    #[serde(default)]
    pub planted: Option<PlantedMeta>,
    pub scans: Vec<ScanRecord>,
}

impl CohortManifest {
    /// Checks tuple uniqueness, index ranges and label consistency.
    ///
    /// File existence is checked by the loader, which knows the base directory.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for s in &self.scans {
            if !(1..=2).contains(&s.visit) {
                bail!(Validation, "patient {}: visit index {} outside 1..=2", s.patient, s.visit);
            }
            if s.repetition == 0 {
                bail!(Validation, "patient {}: repetition index must be 1-based", s.patient);
            }
            if !seen.insert(s.key()) {
                bail!(
                    Validation,
                    "duplicate scan tuple (patient {}, visit {}, {:?}, {:?}, rep {}, {})",
                    s.patient,
                    s.visit,
                    s.side,
                    s.site,
                    s.repetition,
                    s.modality.name()
                );
            }
        }
        let mut side_labels: BTreeMap<(u32, u8, Side), ScanLabel> = BTreeMap::new();
        for s in &self.scans {
            let k = (s.patient, s.visit, s.side);
            if let Some(prev) = side_labels.insert(k, s.label) {
                if prev != s.label {
                    bail!(
                        Validation,
                        "patient {} visit {} {:?}: scans disagree on the side label",
                        s.patient,
                        s.visit,
                        s.side
                    );
                }
            }
        }
        Ok(())
    }

    pub fn patients(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.scans.iter().map(|s| s.patient).collect();
        set.into_iter().collect()
    }

    /// Side label: highest-ranked scan label on that side (trigger > tender > control).
    pub fn side_label(&self, patient: u32, visit: u8, side: Side) -> Option<ScanLabel> {
        self.scans
            .iter()
            .filter(|s| s.patient == patient && s.visit == visit && s.side == side)
            .map(|s| s.label)
            .max()
    }

    /// A visit is MP-positive when either side has a tender or trigger point.
    pub fn visit_is_mp(&self, patient: u32, visit: u8) -> Option<bool> {
        let mut any = None;
        for s in self.scans.iter().filter(|s| s.patient == patient && s.visit == visit) {
            *any.get_or_insert(false) |= s.label.is_mp();
        }
        any
    }

    /// Patient-level MP status: any MP scan at any visit.
    pub fn patient_is_mp(&self, patient: u32) -> bool {
        self.scans.iter().any(|s| s.patient == patient && s.label.is_mp())
    }
}

/// Which acquisitions form one model input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModalitySet {
    BMode,
    Swe,
    /// B-mode repetition `r` paired with SWE repetition `((r - 1) mod n_swe) + 1`.
    Both,
}

impl ModalitySet {
    pub fn modalities(self) -> &'static [Modality] {
        match self {
            ModalitySet::BMode => &[Modality::BMode],
            ModalitySet::Swe => &[Modality::Swe],
            ModalitySet::Both => &[Modality::BMode, Modality::Swe],
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bmode" | "b-mode" => Ok(ModalitySet::BMode),
            "swe" => Ok(ModalitySet::Swe),
            "both" => Ok(ModalitySet::Both),
            _ => bail!(Config, "unknown modality set '{}'", s),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModalitySet::BMode => "bmode",
            ModalitySet::Swe => "swe",
            ModalitySet::Both => "both",
        }
    }
}

/// Where a model input came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SampleMeta {
    pub patient: u32,
    pub visit: u8,
    pub side: Side,
    pub site: Site,
    pub repetition: u8,
    pub label: ScanLabel,
}

/// One model input: co-registered channels plus the index of its mask set.
#[derive(Clone, Debug)]
pub struct Sample {
    pub input: MultiVolume,
    pub mask: usize,
    pub meta: SampleMeta,
}

/// Model inputs of a cohort with their shared masks.
#[derive(Clone, Debug, Default)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
    pub masks: Vec<LayerMaskSet>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mask_of(&self, i: usize) -> &LayerMaskSet {
        &self.masks[self.samples[i].mask]
    }

    pub fn metas(&self) -> Vec<SampleMeta> {
        self.samples.iter().map(|s| s.meta).collect()
    }

    /// Keeps samples whose patient passes `keep`; masks are shared, not copied.
    pub fn filter_patients(&self, keep: impl Fn(u32) -> bool) -> SampleSet {
        SampleSet {
            samples: self.samples.iter().filter(|s| keep(s.meta.patient)).cloned().collect(),
            masks: self.masks.clone(),
        }
    }

    /// Groups scan volumes into model inputs.
    ///
    /// `volumes[i]` belongs to `manifest.scans[i]`; `masks` maps each scan's
    /// mask path to its label set. Samples come out sorted by
    /// `(patient, visit, side, site, repetition)`.
    pub fn assemble(
        manifest: &CohortManifest,
        volumes: Vec<VolumeGrid>,
        masks: BTreeMap<String, LayerMaskSet>,
        set: ModalitySet,
    ) -> Result<SampleSet> {
        if volumes.len() != manifest.scans.len() {
            bail!(Shape, "{} volumes for {} scan records", volumes.len(), manifest.scans.len());
        }
        let mut mask_index = BTreeMap::new();
        let mut mask_list = Vec::new();
        for (path, m) in masks {
            mask_index.insert(path, mask_list.len());
            mask_list.push(m);
        }
        type SiteKey = (u32, u8, Side, Site);
        let mut by_site: BTreeMap<SiteKey, [BTreeMap<u8, usize>; 2]> = BTreeMap::new();
        for (i, s) in manifest.scans.iter().enumerate() {
            let slot = match s.modality {
                Modality::BMode => 0,
                Modality::Swe => 1,
            };
            by_site.entry((s.patient, s.visit, s.side, s.site)).or_default()[slot].insert(s.repetition, i);
        }
        let mut samples = Vec::new();
        for ((patient, visit, side, site), reps) in by_site {
            let plan: Vec<(u8, Vec<usize>)> = match set {
                ModalitySet::BMode => reps[0].iter().map(|(&r, &i)| (r, alloc::vec![i])).collect(),
                ModalitySet::Swe => reps[1].iter().map(|(&r, &i)| (r, alloc::vec![i])).collect(),
                ModalitySet::Both => {
                    let swe: Vec<usize> = reps[1].values().copied().collect();
                    if swe.is_empty() {
                        Vec::new()
                    } else {
                        reps[0]
                            .iter()
                            .map(|(&r, &i)| (r, alloc::vec![i, swe[(r as usize - 1) % swe.len()]]))
                            .collect()
                    }
                }
            };
            for (rep, scan_ids) in plan {
                let rec = &manifest.scans[scan_ids[0]];
                let Some(&mask) = mask_index.get(&rec.mask) else {
                    bail!(Structure, "scan {} references missing mask '{}'", rec.volume, rec.mask);
                };
                let channels: Vec<VolumeGrid> = scan_ids.iter().map(|&i| volumes[i].clone()).collect();
                let input = MultiVolume::new(channels)?;
                if input.dims() != mask_list[mask].dims() {
                    bail!(Shape, "scan {} dims {} do not match its mask", rec.volume, input.dims());
                }
                samples.push(Sample {
                    input,
                    mask,
                    meta: SampleMeta { patient, visit, side, site, repetition: rep, label: rec.label },
                });
            }
        }
        Ok(SampleSet { samples, masks: mask_list })
    }
}
