use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap_periodic, SystemSpec};
use crate::error::{contract, Result};
use crate::mask::{words_for, HypMask};

/// Extent of one state dimension, used for wrapping and for the closed top edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimExtent {
    pub lower: f64,
    pub upper: f64,
    pub periodic: bool,
}

/// Axis-aligned box. `None` on a dimension means the box spans it entirely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub bounds: Vec<Option<(f64, f64)>>,
}

impl Region {
    pub fn new(bounds: Vec<Option<(f64, f64)>>) -> Self {
        Region { bounds }
    }

    /// Box with explicit `[lo, hi)` bounds on the listed dims and wildcards elsewhere.
    pub fn from_dims(state_len: usize, dims: &[(usize, f64, f64)]) -> Self {
        let mut bounds = vec![None; state_len];
        for &(d, lo, hi) in dims {
            bounds[d] = Some((lo, hi));
        }
        Region { bounds }
    }

    /// True if the two boxes share a set of positive volume.
    pub fn overlaps(&self, other: &Region) -> bool {
        self.bounds.iter().zip(&other.bounds).all(|(a, b)| match (a, b) {
            (Some((alo, ahi)), Some((blo, bhi))) => alo.max(*blo) < ahi.min(*bhi),
            _ => true,
        })
    }
}

/// Indexed family of candidate constraint regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    pub extents: Vec<DimExtent>,
    pub regions: Vec<Region>,
}

impl HypothesisSet {
    pub fn new(extents: Vec<DimExtent>, regions: Vec<Region>) -> Result<Self> {
        for (i, r) in regions.iter().enumerate() {
            if r.bounds.len() != extents.len() {
                return Err(contract(format!("region {i} has wrong dimensionality")));
            }
            for (b, e) in r.bounds.iter().zip(&extents) {
                if let Some((lo, hi)) = *b {
                    if !(lo < hi) || lo < e.lower || hi > e.upper {
                        return Err(contract(format!(
                            "region {i} bound [{lo}, {hi}) outside [{}, {}]",
                            e.lower, e.upper
                        )));
                    }
                }
            }
        }
        Ok(HypothesisSet { extents, regions })
    }

    pub fn extents_of(system: &SystemSpec) -> Vec<DimExtent> {
        system
            .state_dims
            .iter()
            .map(|d| DimExtent {
                lower: d.lower,
                upper: d.upper,
                periodic: d.periodic,
            })
            .collect()
    }

    pub fn empty(system: &SystemSpec) -> Self {
        HypothesisSet {
            extents: Self::extents_of(system),
            regions: Vec::new(),
        }
    }

    /// Evenly spaced grid of boxes over the `selected` dims (`counts[k]` boxes along
    /// `selected[k]`), row-major in the order given. Other dims are wildcards.
    pub fn grid(system: &SystemSpec, selected: &[usize], counts: &[usize]) -> Result<Self> {
        if selected.len() != counts.len() {
            return Err(contract("one count per selected dim required"));
        }
        if counts.contains(&0) {
            return Err(contract("hypothesis grid count of zero"));
        }
        if selected.iter().any(|&d| d >= system.state_len()) {
            return Err(contract("selected dim outside the state"));
        }
        let extents = Self::extents_of(system);
        let total: usize = counts.iter().product();
        let mut regions = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut idx = vec![0; counts.len()];
            for k in (0..counts.len()).rev() {
                idx[k] = rem % counts[k];
                rem /= counts[k];
            }
            let mut bounds = vec![None; extents.len()];
            for (k, &d) in selected.iter().enumerate() {
                let e = extents[d];
                let w = (e.upper - e.lower) / counts[k] as f64;
                let lo = e.lower + idx[k] as f64 * w;
                let hi = if idx[k] + 1 == counts[k] {
                    e.upper
                } else {
                    e.lower + (idx[k] + 1) as f64 * w
                };
                bounds[d] = Some((lo, hi));
            }
            regions.push(Region { bounds });
        }
        HypothesisSet::new(extents, regions)
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn words(&self) -> usize {
        words_for(self.len())
    }

    /// Copy of this set with `region` appended; returns its index.
    pub fn with_extra(&self, region: Region) -> Result<(HypothesisSet, usize)> {
        let mut regions = self.regions.clone();
        regions.push(region);
        let idx = regions.len() - 1;
        Ok((HypothesisSet::new(self.extents.clone(), regions)?, idx))
    }

    /// Index of a region with these bounds (to within 1e-9 per bound), if present.
    pub fn find(&self, region: &Region) -> Option<usize> {
        let close = |a: &Option<(f64, f64)>, b: &Option<(f64, f64)>| match (a, b) {
            (None, None) => true,
            (Some((alo, ahi)), Some((blo, bhi))) => (alo - blo).abs() <= 1e-9 && (ahi - bhi).abs() <= 1e-9,
            _ => false,
        };
        self.regions.iter().position(|r| {
            r.bounds.len() == region.bounds.len() && r.bounds.iter().zip(&region.bounds).all(|(a, b)| close(a, b))
        })
    }

    pub fn contains(&self, i: usize, x: &[f64]) -> bool {
        self.regions[i]
            .bounds
            .iter()
            .zip(&self.extents)
            .zip(x)
            .all(|((b, e), &v)| match *b {
                None => true,
                Some((lo, hi)) => {
                    let v = if e.periodic {
                        wrap_periodic(v, e.lower, e.upper)
                    } else {
                        v
                    };
                    (v >= lo && v < hi) || (!e.periodic && v == hi && hi == e.upper)
                }
            })
    }

    /// Bitset of regions containing `x`.
    pub fn membership(&self, x: &[f64]) -> HypMask {
        let mut m = HypMask::new(self.len());
        for i in 0..self.len() {
            if self.contains(i, x) {
                m.insert(i);
            }
        }
        m
    }

    pub(crate) fn membership_into(&self, x: &[f64], words: &mut [u64]) {
        for i in 0..self.len() {
            if self.contains(i, x) {
                words[i / 64] |= 1 << (i % 64);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pendulum_hyps() -> HypothesisSet {
        HypothesisSet::grid(&SystemSpec::pendulum(), &[0, 1], &[10, 10]).unwrap()
    }

    #[test]
    fn pendulum_grid_has_100_regions() {
        let h = pendulum_hyps();
        assert_eq!(h.len(), 100);
        let (lo, hi) = h.regions[0].bounds[0].unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 2.0 * PI / 10.0).abs() < 1e-12);
        let (lo, hi) = h.regions[0].bounds[1].unwrap();
        assert_eq!(lo, -6.0);
        assert!((hi + 4.8).abs() < 1e-12);
    }

    #[test]
    fn tip_grid_wildcards_velocities() {
        let h = HypothesisSet::grid(&SystemSpec::tip(), &[0, 2], &[10, 10]).unwrap();
        assert_eq!(h.len(), 100);
        for r in &h.regions {
            assert!(r.bounds[0].is_some() && r.bounds[2].is_some());
            assert!(r.bounds[1].is_none() && r.bounds[3].is_none());
        }
        let m = h.membership(&[0.01, 0.99, 1.01, -0.49]);
        assert_eq!(m.count(), 1);
    }

    #[test]
    fn universal_region_contains_everything() {
        let sys = SystemSpec::pendulum();
        let h = HypothesisSet::new(HypothesisSet::extents_of(&sys), vec![Region::new(vec![None, None])]).unwrap();
        for x in [[0.0, -6.0], [3.0, 0.0], [6.2, 6.0], [1.0, 5.999]] {
            assert!(h.contains(0, &x));
        }
    }

    #[test]
    fn center_hits_exactly_one_region() {
        let h = pendulum_hyps();
        for (i, r) in h.regions.iter().enumerate() {
            let c: Vec<f64> = r
                .bounds
                .iter()
                .map(|b| {
                    let (lo, hi) = b.unwrap();
                    0.5 * (lo + hi)
                })
                .collect();
            let m = h.membership(&c);
            assert_eq!(m.iter().collect::<Vec<_>>(), vec![i]);
        }
    }

    #[test]
    fn shared_edge_goes_to_upper_region() {
        let h = pendulum_hyps();
        // θ̇ = -4.8 is the edge between rows 0 and 1 in θ-column 0
        let m = h.membership(&[0.1, -6.0 + 1.2]);
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![1]);
        // θ edge between columns 0 and 1
        let m = h.membership(&[2.0 * PI / 10.0, -5.0]);
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![10]);
        // closed global top edge
        let m = h.membership(&[0.1, 6.0]);
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![9]);
    }

    #[test]
    fn empty_set_gives_empty_mask() {
        let h = HypothesisSet::empty(&SystemSpec::pendulum());
        assert!(h.membership(&[1.0, 1.0]).is_empty());
    }

    #[test]
    fn zero_count_rejected() {
        assert!(HypothesisSet::grid(&SystemSpec::pendulum(), &[0, 1], &[10, 0]).is_err());
        assert!(HypothesisSet::grid(&SystemSpec::pendulum(), &[5], &[3]).is_err());
    }

    #[test]
    fn regions_must_stay_in_bounds() {
        let sys = SystemSpec::pendulum();
        let r = Region::from_dims(2, &[(1, -7.0, 0.0)]);
        assert!(HypothesisSet::new(HypothesisSet::extents_of(&sys), vec![r]).is_err());
    }
}
