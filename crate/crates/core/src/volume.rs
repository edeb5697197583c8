//! Voxel grids, layer label masks and the occlusion operator.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::bail;
use crate::Result;

/// Imaging modality of a voxel field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    /// Brightness-mode intensity, arbitrary units.
    BMode,
    /// Shear-wave speed in m/s.
    Swe,
}

impl Modality {
    pub fn code(self) -> u8 {
        match self {
            Modality::BMode => 0,
            Modality::Swe => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Modality::BMode),
            1 => Some(Modality::Swe),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::BMode => "bmode",
            Modality::Swe => "swe",
        }
    }
}

/// Voxel counts along x, y and z.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Dims { nx, ny, nz }
    }

    pub const fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index, x fastest.
    #[inline]
    pub const fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// A 3-D field of one modality stored as 32-bit reals, x fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeGrid {
    dims: Dims,
    modality: Modality,
    voxels: Vec<f32>,
}

impl VolumeGrid {
    pub fn new(dims: Dims, modality: Modality, voxels: Vec<f32>) -> Result<Self> {
        if dims.nx == 0 || dims.ny == 0 || dims.nz == 0 {
            bail!(Shape, "volume dims must be positive, got {}", dims);
        }
        if voxels.len() != dims.len() {
            bail!(Shape, "expected {} voxels for {}, got {}", dims.len(), dims, voxels.len());
        }
        if let Some(i) = voxels.iter().position(|v| !v.is_finite()) {
            bail!(Domain, "non-finite voxel at index {}", i);
        }
        if modality == Modality::Swe {
            if let Some(i) = voxels.iter().position(|&v| v < 0.0) {
                bail!(Domain, "negative shear speed at index {}", i);
            }
        }
        Ok(VolumeGrid { dims, modality, voxels })
    }

    pub fn filled(dims: Dims, modality: Modality, value: f32) -> Result<Self> {
        Self::new(dims, modality, vec![value; dims.len()])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.voxels[self.dims.index(x, y, z)]
    }

    pub fn into_voxels(self) -> Vec<f32> {
        self.voxels
    }

    /// Value range `max - min`.
    pub fn value_range(&self) -> f64 {
        let (lo, hi) = self
            .voxels
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        (hi - lo) as f64
    }

    pub(crate) fn from_parts_unchecked(dims: Dims, modality: Modality, voxels: Vec<f32>) -> Self {
        debug_assert_eq!(voxels.len(), dims.len());
        VolumeGrid { dims, modality, voxels }
    }
}

/// The six tissue layers, code order is depth order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Layer {
    #[serde(rename = "dermis")]
    Dermis = 1,
    #[serde(rename = "SFL")]
    Sfl = 2,
    #[serde(rename = "SFM")]
    Sfm = 3,
    #[serde(rename = "deep fat")]
    DeepFat = 4,
    #[serde(rename = "DFM")]
    Dfm = 5,
    #[serde(rename = "muscle")]
    Muscle = 6,
}

impl Layer {
    pub const ALL: [Layer; 6] = [
        Layer::Dermis,
        Layer::Sfl,
        Layer::Sfm,
        Layer::DeepFat,
        Layer::Dfm,
        Layer::Muscle,
    ];

    pub const COUNT: usize = 6;

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Zero-based position in [`Layer::ALL`].
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(Layer::Dermis),
            2 => Ok(Layer::Sfl),
            3 => Ok(Layer::Sfm),
            4 => Ok(Layer::DeepFat),
            5 => Ok(Layer::Dfm),
            6 => Ok(Layer::Muscle),
            _ => bail!(Domain, "unknown layer code {}", code),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Layer::Dermis => "dermis",
            Layer::Sfl => "SFL",
            Layer::Sfm => "SFM",
            Layer::DeepFat => "deep fat",
            Layer::Dfm => "DFM",
            Layer::Muscle => "muscle",
        }
    }

    /// Accepts a code or a case-insensitive name.
    pub fn parse(s: &str) -> Result<Self> {
        if let Ok(code) = s.parse::<u8>() {
            return Self::from_code(code);
        }
        for l in Layer::ALL {
            if l.name().eq_ignore_ascii_case(s) || (l == Layer::DeepFat && s.eq_ignore_ascii_case("deepfat")) {
                return Ok(l);
            }
        }
        bail!(Domain, "unknown layer '{}'", s)
    }
}

/// A set of layers, stored as a bitmask over codes 1..=6.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct LayerSet(u8);

impl LayerSet {
    pub const fn empty() -> Self {
        LayerSet(0)
    }

    pub const fn all() -> Self {
        LayerSet(0b0111_1110)
    }

    pub fn single(layer: Layer) -> Self {
        LayerSet(1 << layer.code())
    }

    pub fn from_codes(codes: &[u8]) -> Result<Self> {
        let mut set = LayerSet::empty();
        for &c in codes {
            set.insert(Layer::from_code(c)?);
        }
        Ok(set)
    }

    pub fn insert(&mut self, layer: Layer) {
        self.0 |= 1 << layer.code();
    }

    pub fn with(mut self, layer: Layer) -> Self {
        self.insert(layer);
        self
    }

    pub fn contains(&self, layer: Layer) -> bool {
        self.0 & (1 << layer.code()) != 0
    }

    #[inline]
    pub fn contains_code(&self, code: u8) -> bool {
        code != 0 && code < 8 && self.0 & (1 << code) != 0
    }

    pub fn union(self, other: LayerSet) -> Self {
        LayerSet(self.0 | other.0)
    }

    pub fn is_disjoint(self, other: LayerSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Layer> {
        Layer::ALL.into_iter().filter(move |l| self.contains(*l))
    }
}

impl FromIterator<Layer> for LayerSet {
    fn from_iter<I: IntoIterator<Item = Layer>>(iter: I) -> Self {
        let mut s = LayerSet::empty();
        for l in iter {
            s.insert(l);
        }
        s
    }
}

/// One label code per voxel: 0 background, 1..=6 tissue layers.
///
/// A single label per voxel makes the layers pairwise disjoint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerMaskSet {
    dims: Dims,
    labels: Vec<u8>,
}

impl LayerMaskSet {
    pub fn new(dims: Dims, labels: Vec<u8>) -> Result<Self> {
        if dims.nx == 0 || dims.ny == 0 || dims.nz == 0 {
            bail!(Shape, "mask dims must be positive, got {}", dims);
        }
        if labels.len() != dims.len() {
            bail!(Shape, "expected {} labels for {}, got {}", dims.len(), dims, labels.len());
        }
        if let Some(i) = labels.iter().position(|&c| c > 6) {
            bail!(Domain, "unknown layer code {} at voxel {}", labels[i], i);
        }
        Ok(LayerMaskSet { dims, labels })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Voxel tallies indexed by code, background at 0.
    pub fn counts(&self) -> [usize; 7] {
        let mut c = [0usize; 7];
        for &l in &self.labels {
            c[l as usize] += 1;
        }
        c
    }

    /// `‖M_i‖` for one layer.
    pub fn layer_volume(&self, layer: Layer) -> usize {
        let code = layer.code();
        self.labels.iter().filter(|&&l| l == code).count()
    }

    /// Like [`layer_volume`](Self::layer_volume) for a raw code; code 0 counts background.
    pub fn volume_of_code(&self, code: u8) -> Result<usize> {
        if code > 6 {
            bail!(Domain, "unknown layer code {}", code);
        }
        Ok(self.labels.iter().filter(|&&l| l == code).count())
    }

    /// Swaps layer codes according to `perm[old_index] = new layer`.
    pub fn relabel(&self, perm: &[Layer; 6]) -> LayerMaskSet {
        let labels = self
            .labels
            .iter()
            .map(|&l| if l == 0 { 0 } else { perm[l as usize - 1].code() })
            .collect();
        LayerMaskSet { dims: self.dims, labels }
    }
}

/// Co-registered channels of one scan sharing a single mask set.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiVolume {
    channels: Vec<VolumeGrid>,
}

impl MultiVolume {
    pub fn new(channels: Vec<VolumeGrid>) -> Result<Self> {
        let Some(first) = channels.first() else {
            bail!(Shape, "a multimodal input needs at least one channel");
        };
        let dims = first.dims();
        if let Some(c) = channels.iter().find(|c| c.dims() != dims) {
            bail!(Shape, "channel dims {} differ from {}", c.dims(), dims);
        }
        Ok(MultiVolume { channels })
    }

    pub fn single(volume: VolumeGrid) -> Self {
        MultiVolume { channels: vec![volume] }
    }

    pub fn dims(&self) -> Dims {
        self.channels[0].dims()
    }

    pub fn channels(&self) -> &[VolumeGrid] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn modalities(&self) -> Vec<Modality> {
        self.channels.iter().map(|c| c.modality()).collect()
    }

    /// Channel-wise map over voxel values; output keeps modality tags.
    pub fn map_voxels(&self, mut f: impl FnMut(usize, usize, f32) -> f32) -> MultiVolume {
        let channels = self
            .channels
            .iter()
            .enumerate()
            .map(|(ci, ch)| {
                let vox = ch.voxels().iter().enumerate().map(|(v, &x)| f(ci, v, x)).collect();
                VolumeGrid::from_parts_unchecked(ch.dims(), ch.modality(), vox)
            })
            .collect();
        MultiVolume { channels }
    }
}

impl From<VolumeGrid> for MultiVolume {
    fn from(v: VolumeGrid) -> Self {
        MultiVolume::single(v)
    }
}

/// Zeroes every voxel whose label is in `layers`, in every channel.
pub fn occlude(input: &MultiVolume, masks: &LayerMaskSet, layers: LayerSet) -> Result<MultiVolume> {
    if input.dims() != masks.dims() {
        bail!(Shape, "input {} does not match mask {}", input.dims(), masks.dims());
    }
    if layers.is_empty() {
        return Ok(input.clone());
    }
    let labels = masks.labels();
    Ok(input.map_voxels(|_, v, x| if layers.contains_code(labels[v]) { 0.0 } else { x }))
}

/// Single-volume convenience over [`occlude`].
pub fn occlude_volume(volume: &VolumeGrid, masks: &LayerMaskSet, layers: LayerSet) -> Result<VolumeGrid> {
    let out = occlude(&MultiVolume::single(volume.clone()), masks, layers)?;
    Ok(out.channels.into_iter().next().unwrap())
}
