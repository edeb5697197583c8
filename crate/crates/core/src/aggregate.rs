//! Hierarchical averaging of scan probabilities and patient-level folds.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cohort::{SampleMeta, Side, Site};
use crate::error::bail;
use crate::rng::substream;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Visit-level MP vs control.
    #[serde(rename = "visit-mp")]
    VisitMp,
    /// Side-level MP vs control.
    #[serde(rename = "side-mp")]
    SideMp,
    /// Side-level trigger point vs control and tender point.
    #[serde(rename = "side-trigger")]
    SideTrigger,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::VisitMp, Scenario::SideMp, Scenario::SideTrigger];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::VisitMp => "visit-mp",
            Scenario::SideMp => "side-mp",
            Scenario::SideTrigger => "side-trigger",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "visit-mp" => Ok(Scenario::VisitMp),
            "side-mp" => Ok(Scenario::SideMp),
            "side-trigger" => Ok(Scenario::SideTrigger),
            _ => bail!(Config, "unknown scenario '{}' (expected visit-mp, side-mp or side-trigger)", s),
        }
    }
}

/// Binary target of every sample under `scenario`.
///
/// Visit-level labels are positive when any sample of that visit is MP.
pub fn labels_for(metas: &[SampleMeta], scenario: Scenario) -> Vec<bool> {
    match scenario {
        Scenario::VisitMp => {
            let mut visit: BTreeMap<(u32, u8), bool> = BTreeMap::new();
            for m in metas {
                *visit.entry((m.patient, m.visit)).or_default() |= m.label.is_mp();
            }
            metas.iter().map(|m| visit[&(m.patient, m.visit)]).collect()
        }
        Scenario::SideMp => metas.iter().map(|m| m.label.is_mp()).collect(),
        Scenario::SideTrigger => metas.iter().map(|m| m.label.is_trigger()).collect(),
    }
}

/// Arithmetic mean of child probabilities.
pub fn aggregate(probabilities: &[f64]) -> Result<f64> {
    if probabilities.is_empty() {
        bail!(Domain, "aggregation over no children");
    }
    if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
        bail!(Domain, "probabilities must lie in [0, 1]");
    }
    Ok(probabilities.iter().sum::<f64>() / probabilities.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Scan,
    Repetition,
    Site,
    Side,
    Visit,
    Patient,
}

/// Identifies a node; fields below the node's level are `None`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeKey {
    pub patient: u32,
    pub visit: Option<u8>,
    pub side: Option<Side>,
    pub site: Option<Site>,
    pub repetition: Option<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregationNode {
    pub level: Level,
    pub key: NodeKey,
    /// Sample index for scan leaves.
    pub scan: Option<usize>,
    pub children: Vec<AggregationNode>,
}

impl AggregationNode {
    fn leaf(index: usize, m: &SampleMeta) -> Self {
        let key = NodeKey {
            patient: m.patient,
            visit: Some(m.visit),
            side: Some(m.side),
            site: Some(m.site),
            repetition: Some(m.repetition),
        };
        AggregationNode { level: Level::Scan, key, scan: Some(index), children: Vec::new() }
    }

    /// Scan indices under this node, in tree order.
    pub fn scans(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut Vec<usize>) {
        if let Some(i) = self.scan {
            out.push(i);
        }
        for c in &self.children {
            c.collect(out);
        }
    }

    /// Nested mean of the scan probabilities.
    pub fn probability(&self, scan_probabilities: &[f64]) -> Result<f64> {
        match self.scan {
            Some(i) => match scan_probabilities.get(i) {
                Some(&p) => aggregate(&[p]),
                None => bail!(Shape, "no probability for scan {}", i),
            },
            None => {
                let ps = self.children.iter().map(|c| c.probability(scan_probabilities)).collect::<Result<Vec<_>>>()?;
                aggregate(&ps)
            }
        }
    }
}

/// One prediction unit of a scenario with its label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub node: AggregationNode,
    pub label: bool,
    /// Some expected child is missing somewhere below this unit.
    pub incomplete: bool,
    pub gaps: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HierarchyOptions {
    /// Side scenarios: pool both visits of a side into one unit.
    pub merge_visits: bool,
    /// Treat any missing child as a structural error instead of a flag.
    pub strict: bool,
}

type Group = BTreeMap<NodeKey, Vec<usize>>;

fn group_by(indices: &[usize], metas: &[SampleMeta], key: impl Fn(&SampleMeta) -> NodeKey) -> Group {
    let mut g: Group = BTreeMap::new();
    for &i in indices {
        g.entry(key(&metas[i])).or_default().push(i);
    }
    g
}

struct Builder<'a> {
    metas: &'a [SampleMeta],
    sites: BTreeSet<Site>,
    reps: BTreeSet<u8>,
    visits: BTreeSet<u8>,
    sides: BTreeSet<Side>,
}

impl Builder<'_> {
    fn gap(&self, gaps: &mut Vec<String>, key: &NodeKey, what: &str, present: usize, expected: usize) {
        if present < expected {
            gaps.push(alloc::format!(
                "patient {} visit {:?} side {:?} site {:?}: {} of {} {}",
                key.patient,
                key.visit,
                key.side,
                key.site,
                present,
                expected,
                what
            ));
        }
    }

    fn node(&self, level: Level, key: NodeKey, children: Vec<AggregationNode>) -> AggregationNode {
        AggregationNode { level, key, scan: None, children }
    }

    /// Site node over repetition leaves.
    fn site(&self, key: NodeKey, idx: &[usize], gaps: &mut Vec<String>) -> AggregationNode {
        let children: Vec<AggregationNode> = idx.iter().map(|&i| AggregationNode::leaf(i, &self.metas[i])).collect();
        self.gap(gaps, &key, "repetitions", children.len(), self.reps.len());
        self.node(Level::Site, key, children)
    }

    /// Side node (within one visit) over site nodes.
    fn side(&self, key: NodeKey, idx: &[usize], gaps: &mut Vec<String>) -> AggregationNode {
        let g = group_by(idx, self.metas, |m| NodeKey { site: Some(m.site), ..key });
        self.gap(gaps, &key, "sites", g.len(), self.sites.len());
        let children = g.iter().map(|(k, v)| self.site(*k, v, gaps)).collect();
        self.node(Level::Side, key, children)
    }

    /// Repetition node over all scans of that repetition within a visit.
    fn repetition(&self, key: NodeKey, idx: &[usize], gaps: &mut Vec<String>) -> AggregationNode {
        let children: Vec<AggregationNode> = idx.iter().map(|&i| AggregationNode::leaf(i, &self.metas[i])).collect();
        self.gap(gaps, &key, "side/site scans", children.len(), self.sides.len() * self.sites.len());
        self.node(Level::Repetition, key, children)
    }
}

/// Prediction units of `scenario`, ordered by key.
///
/// Visit scenario: visit → repetition → scan. Side scenarios: side → site →
/// repetition scan, or with `merge_visits` side → visit → site → scan.
pub fn build_hierarchy(metas: &[SampleMeta], scenario: Scenario, options: HierarchyOptions) -> Result<Vec<Unit>> {
    if metas.is_empty() {
        bail!(Structure, "no scans to aggregate");
    }
    let b = Builder {
        metas,
        sites: metas.iter().map(|m| m.site).collect(),
        reps: metas.iter().map(|m| m.repetition).collect(),
        visits: metas.iter().map(|m| m.visit).collect(),
        sides: metas.iter().map(|m| m.side).collect(),
    };
    let labels = labels_for(metas, scenario);
    let all: Vec<usize> = (0..metas.len()).collect();
    let blank = |m: &SampleMeta| NodeKey { patient: m.patient, visit: None, side: None, site: None, repetition: None };
    let mut units = Vec::new();
    let groups = match scenario {
        Scenario::VisitMp => group_by(&all, metas, |m| NodeKey { visit: Some(m.visit), ..blank(m) }),
        _ if options.merge_visits => group_by(&all, metas, |m| NodeKey { side: Some(m.side), ..blank(m) }),
        _ => group_by(&all, metas, |m| NodeKey { visit: Some(m.visit), side: Some(m.side), ..blank(m) }),
    };
    for (key, idx) in groups {
        let mut gaps = Vec::new();
        let node = match scenario {
            Scenario::VisitMp => {
                let g = group_by(&idx, metas, |m| NodeKey { repetition: Some(m.repetition), ..key });
                b.gap(&mut gaps, &key, "repetitions", g.len(), b.reps.len());
                let children = g.iter().map(|(k, v)| b.repetition(*k, v, &mut gaps)).collect();
                b.node(Level::Visit, key, children)
            }
            _ if options.merge_visits => {
                let g = group_by(&idx, metas, |m| NodeKey { visit: Some(m.visit), ..key });
                b.gap(&mut gaps, &key, "visits", g.len(), b.visits.len());
                let children = g.iter().map(|(k, v)| b.side(*k, v, &mut gaps)).collect();
                b.node(Level::Side, key, children)
            }
            _ => b.side(key, &idx, &mut gaps),
        };
        if options.strict && !gaps.is_empty() {
            bail!(Structure, "missing scans: {}", gaps.join("; "));
        }
        let label = idx.iter().any(|&i| labels[i]);
        units.push(Unit { node, label, incomplete: !gaps.is_empty(), gaps });
    }
    Ok(units)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitPrediction {
    pub key: NodeKey,
    pub label: bool,
    pub probability: f64,
    pub incomplete: bool,
}

pub fn predict_units(units: &[Unit], scan_probabilities: &[f64]) -> Result<Vec<UnitPrediction>> {
    units
        .iter()
        .map(|u| {
            Ok(UnitPrediction {
                key: u.node.key,
                label: u.label,
                probability: u.node.probability(scan_probabilities)?,
                incomplete: u.incomplete,
            })
        })
        .collect()
}

/// Patient-level cross-validation split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub seed: u64,
    pub k: usize,
    pub folds: BTreeMap<u32, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, patient: u32) -> Option<usize> {
        self.folds.get(&patient).copied()
    }

    pub fn patients_in(&self, fold: usize) -> Vec<u32> {
        self.folds.iter().filter(|(_, &f)| f == fold).map(|(&p, _)| p).collect()
    }

    /// `(training, held-out)` patients for `fold`.
    pub fn split(&self, fold: usize) -> (Vec<u32>, Vec<u32>) {
        let (held, train): (Vec<(&u32, &usize)>, Vec<(&u32, &usize)>) = self.folds.iter().partition(|(_, &f)| f == fold);
        (train.into_iter().map(|(&p, _)| p).collect(), held.into_iter().map(|(&p, _)| p).collect())
    }

    /// Every sample's patient is assigned, and no fold split shares a patient.
    pub fn check_leakage(&self, metas: &[SampleMeta]) -> Result<()> {
        for m in metas {
            if !self.folds.contains_key(&m.patient) {
                bail!(Validation, "patient {} has no fold", m.patient);
            }
        }
        for f in 0..self.k {
            let (train, held) = self.split(f);
            let t: BTreeSet<u32> = train.into_iter().collect();
            if let Some(p) = held.iter().find(|p| t.contains(p)) {
                bail!(Validation, "patient {} appears on both sides of fold {}", p, f);
            }
        }
        Ok(())
    }
}

/// Seeded assignment stratified by patient MP status.
///
/// Each stratum is shuffled and dealt round-robin; the second stratum
/// continues where the first stopped so totals stay balanced.
pub fn make_folds(patients: &[(u32, bool)], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        bail!(Config, "need at least 2 folds");
    }
    let unique: BTreeMap<u32, bool> = patients.iter().copied().collect();
    if unique.len() != patients.len() {
        bail!(Config, "duplicate patient ids");
    }
    if unique.len() < k {
        bail!(Config, "{} patients cannot fill {} folds", unique.len(), k);
    }
    let mut folds = BTreeMap::new();
    let mut next = 0usize;
    for (stream, status) in [(1u64, true), (0u64, false)] {
        let mut ids: Vec<u32> = unique.iter().filter(|(_, &s)| s == status).map(|(&p, _)| p).collect();
        ids.shuffle(&mut substream(seed, 0xF01D ^ stream));
        for p in ids {
            folds.insert(p, next % k);
            next += 1;
        }
    }
    Ok(FoldAssignment { seed, k, folds })
}
