use alloc::vec;
use alloc::vec::Vec;

use crate::error::bail;
use crate::math::sigmoid;
use crate::volume::{Dims, MultiVolume, VolumeGrid};
use crate::Result;

/// Per-axis linear interpolation: lower grid node and fractional offset.
#[derive(Clone, Debug, PartialEq)]
struct AxisInterp {
    lo: Vec<usize>,
    frac: Vec<f64>,
}

impl AxisInterp {
    fn new(n: usize, grid: usize) -> Self {
        let mut lo = Vec::with_capacity(n);
        let mut frac = Vec::with_capacity(n);
        for i in 0..n {
            let pos = if n == 1 { 0.0 } else { i as f64 * (grid - 1) as f64 / (n - 1) as f64 };
            let mut l = pos as usize;
            if l >= grid - 1 {
                l = grid - 2;
            }
            lo.push(l);
            frac.push(pos - l as f64);
        }
        AxisInterp { lo, frac }
    }
}

/// Learned voxel-wise weight map: a coarse grid per channel, trilinearly
/// upsampled to the input grid and squashed into (0, 1) by a sigmoid.
///
/// The map depends only on its parameters, so it is cached and refreshed
/// whenever the parameters change.
#[derive(Clone, Debug, PartialEq)]
pub struct AirWeightGenerator {
    dims: Dims,
    grid: usize,
    channels: usize,
    params: Vec<f32>,
    ix: AxisInterp,
    iy: AxisInterp,
    iz: AxisInterp,
    maps: Vec<Vec<f64>>,
}

impl AirWeightGenerator {
    /// Generator with all coarse weights at zero (every multiplier 0.5).
    pub fn new(dims: Dims, channels: usize, grid: usize) -> Result<Self> {
        if grid < 2 {
            bail!(Config, "weight grid needs at least 2 nodes per axis");
        }
        if channels == 0 || dims.is_empty() {
            bail!(Config, "weight generator needs a non-empty grid and at least one channel");
        }
        let mut g = AirWeightGenerator {
            dims,
            grid,
            channels,
            params: vec![0.0; channels * grid * grid * grid],
            ix: AxisInterp::new(dims.nx, grid),
            iy: AxisInterp::new(dims.ny, grid),
            iz: AxisInterp::new(dims.nz, grid),
            maps: Vec::new(),
        };
        g.refresh();
        Ok(g)
    }

    pub fn from_params(dims: Dims, channels: usize, grid: usize, params: Vec<f32>) -> Result<Self> {
        let mut g = Self::new(dims, channels, grid)?;
        if params.len() != g.params.len() {
            bail!(Shape, "{} weight-grid parameters, expected {}", params.len(), g.params.len());
        }
        g.params = params;
        g.refresh();
        Ok(g)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    /// Mutates the coarse weights and refreshes the cached maps.
    pub fn with_params_mut<R>(&mut self, f: impl FnOnce(&mut [f32]) -> R) -> R {
        let r = f(&mut self.params);
        self.refresh();
        r
    }

    /// Resets the coarse weights to zero.
    pub fn reset(&mut self) {
        self.with_params_mut(|p| p.iter_mut().for_each(|x| *x = 0.0));
    }

    /// Multiplier map of one channel, every entry in (0, 1).
    pub fn weight_map(&self, channel: usize) -> &[f64] {
        &self.maps[channel]
    }

    fn node(&self, c: usize, a: usize, b: usize, d: usize) -> usize {
        let g = self.grid;
        c * g * g * g + a + g * (b + g * d)
    }

    fn refresh(&mut self) {
        let d = self.dims;
        let mut maps = Vec::with_capacity(self.channels);
        for c in 0..self.channels {
            let mut m = Vec::with_capacity(d.len());
            for z in 0..d.nz {
                let (lz, fz) = (self.iz.lo[z], self.iz.frac[z]);
                for y in 0..d.ny {
                    let (ly, fy) = (self.iy.lo[y], self.iy.frac[y]);
                    for x in 0..d.nx {
                        let (lx, fx) = (self.ix.lo[x], self.ix.frac[x]);
                        let mut u = 0.0;
                        for (dz, wz) in [(0, 1.0 - fz), (1, fz)] {
                            for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                                for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                                    u += wx * wy * wz * self.params[self.node(c, lx + dx, ly + dy, lz + dz)] as f64;
                                }
                            }
                        }
                        m.push(sigmoid(u));
                    }
                }
            }
            maps.push(m);
        }
        self.maps = maps;
    }

    fn check(&self, input: &MultiVolume) -> Result<()> {
        if input.dims() != self.dims || input.channel_count() != self.channels {
            bail!(
                Shape,
                "weight generator expects {} channel(s) of {}, got {} of {}",
                self.channels,
                self.dims,
                input.channel_count(),
                input.dims()
            );
        }
        Ok(())
    }

    /// `G(I) ⊙ I`, rounded to 32-bit voxels.
    pub fn apply(&self, input: &MultiVolume) -> Result<MultiVolume> {
        self.check(input)?;
        let channels = input
            .channels()
            .iter()
            .zip(&self.maps)
            .map(|(ch, w)| {
                let v = ch.voxels().iter().zip(w).map(|(&x, &w)| (x as f64 * w) as f32).collect();
                VolumeGrid::new(ch.dims(), ch.modality(), v)
            })
            .collect::<Result<Vec<_>>>()?;
        MultiVolume::new(channels)
    }

    /// Accumulates `∂loss/∂θ` given `∂loss/∂x'` for the reweighted voxels `x' = w ⊙ x`.
    pub fn backward(&self, input: &MultiVolume, dreweighted: &[Vec<f64>], grad: &mut [f64]) -> Result<()> {
        self.check(input)?;
        let d = self.dims;
        for c in 0..self.channels {
            let x = input.channels()[c].voxels();
            let w = &self.maps[c];
            let dx = &dreweighted[c];
            let mut v = 0;
            for z in 0..d.nz {
                let (lz, fz) = (self.iz.lo[z], self.iz.frac[z]);
                for y in 0..d.ny {
                    let (ly, fy) = (self.iy.lo[y], self.iy.frac[y]);
                    for xi in 0..d.nx {
                        let (lx, fx) = (self.ix.lo[xi], self.ix.frac[xi]);
                        let du = dx[v] * x[v] as f64 * w[v] * (1.0 - w[v]);
                        v += 1;
                        if du == 0.0 {
                            continue;
                        }
                        for (dz, wz) in [(0, 1.0 - fz), (1, fz)] {
                            for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                                for (ddx, wx) in [(0, 1.0 - fx), (1, fx)] {
                                    grad[self.node(c, lx + ddx, ly + dy, lz + dz)] += du * wx * wy * wz;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Modality;

    #[test]
    fn zero_weights_halve_the_input() {
        let d = Dims::new(5, 4, 3);
        let g = AirWeightGenerator::new(d, 1, 4).unwrap();
        let v: Vec<f32> = (0..d.len()).map(|i| i as f32 - 10.0).collect();
        let x = MultiVolume::single(VolumeGrid::new(d, Modality::BMode, v.clone()).unwrap());
        let out = g.apply(&x).unwrap();
        for (o, i) in out.channels()[0].voxels().iter().zip(&v) {
            assert_eq!(*o, i / 2.0);
        }
    }

    #[test]
    fn large_weights_saturate_towards_identity() {
        let d = Dims::new(4, 4, 4);
        let mut g = AirWeightGenerator::new(d, 1, 4).unwrap();
        g.with_params_mut(|p| p.iter_mut().for_each(|x| *x = 40.0));
        let x = MultiVolume::single(VolumeGrid::filled(d, Modality::BMode, 3.0).unwrap());
        let out = g.apply(&x).unwrap();
        assert!(out.channels()[0].voxels().iter().all(|&o| (o - 3.0).abs() < 1e-6));
        assert!(g.weight_map(0).iter().all(|&w| w > 0.0 && w <= 1.0));
    }

    #[test]
    fn multipliers_stay_strictly_inside_unit_interval() {
        let d = Dims::new(6, 5, 7);
        let mut g = AirWeightGenerator::new(d, 2, 3).unwrap();
        g.with_params_mut(|p| {
            for (i, x) in p.iter_mut().enumerate() {
                *x = (i as f32 - 20.0) * 0.7;
            }
        });
        for c in 0..2 {
            assert!(g.weight_map(c).iter().all(|&w| w > 0.0 && w < 1.0));
        }
    }

    #[test]
    fn corners_reproduce_grid_nodes() {
        let d = Dims::new(7, 7, 7);
        let mut g = AirWeightGenerator::new(d, 1, 4).unwrap();
        g.with_params_mut(|p| p[0] = 2.0);
        assert!((g.weight_map(0)[0] - sigmoid(2.0)).abs() < 1e-15);
    }
}
