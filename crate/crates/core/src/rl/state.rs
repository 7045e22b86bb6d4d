//! Grid-shaped observation tensors for the placement environments.
//!
//! Both phases observe stacked matrices over the interposer-sized
//! canvas; chiplet quantities are placed at their floorplan offsets.
//! Channels 0..4: interposer space, chiplet space, MIM level fraction,
//! MOS level fraction. The time phase appends a per-cell normalized VVI
//! channel.

use crate::decap::DecapLayout;
use crate::floorplan::{Floorplan, Layer};

/// Dense CHW tensor observed by the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTensor {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl StateTensor {
    pub fn zeros(channels: usize, h: usize, w: usize) -> Self {
        StateTensor {
            channels,
            h,
            w,
            data: vec![0.0; channels * h * w],
        }
    }

    #[inline]
    pub fn at(&self, c: usize, r: usize, col: usize) -> f64 {
        self.data[(c * self.h + r) * self.w + col]
    }

    #[inline]
    pub fn set(&mut self, c: usize, r: usize, col: usize, v: f64) {
        self.data[(c * self.h + r) * self.w + col] = v;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

fn base_channels(fp: &Floorplan, layout: &DecapLayout, max_level: u8, channels: usize) -> StateTensor {
    let mut t = StateTensor::zeros(channels, fp.intp_rows, fp.intp_cols);
    let ml = max_level as f64;
    for r in 0..fp.intp_rows {
        for c in 0..fp.intp_cols {
            if fp.intp_space.available(r, c) {
                t.set(0, r, c, 1.0);
                t.set(2, r, c, layout.mim.get(r, c) as f64 / ml);
            }
        }
    }
    for (ci, ch) in fp.chiplets.iter().enumerate() {
        let (r0, c0) = ch.origin;
        for r in 0..ch.rows {
            for c in 0..ch.cols {
                if ch.space.available(r, c) {
                    t.set(1, r0 + r, c0 + c, 1.0);
                    t.set(3, r0 + r, c0 + c, layout.mos[ci].get(r, c) as f64 / ml);
                }
            }
        }
    }
    t
}

/// Four-channel state for the impedance phase.
pub fn encode_freq(fp: &Floorplan, layout: &DecapLayout, max_level: u8) -> StateTensor {
    base_channels(fp, layout, max_level, 4)
}

/// Five-channel state for the voltage phase. `site_vvi` follows the
/// on-chip site order (`Floorplan::time_sites`); `norm` is the initial
/// per-node maximum, so the first encoding of a violating design peaks
/// at 1.
pub fn encode_time(
    fp: &Floorplan,
    layout: &DecapLayout,
    max_level: u8,
    site_vvi: &[f64],
    norm: f64,
) -> StateTensor {
    let mut t = base_channels(fp, layout, max_level, 5);
    if norm > 0.0 {
        for (site, &v) in fp.time_sites().iter().zip(site_vvi) {
            if let Layer::Chip(ci) = site.layer {
                let (r0, c0) = fp.chiplets[ci].origin;
                t.set(4, r0 + site.row, c0 + site.col, v / norm);
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::PdnParams;
    use proptest::prelude::*;

    fn plan() -> (Floorplan, PdnParams) {
        (Floorplan::rocket64(), PdnParams::rocket64_55nm())
    }

    #[test]
    fn empty_layout_has_zero_distributions() {
        let (fp, p) = plan();
        let t = encode_freq(&fp, &DecapLayout::empty(&fp), p.max_level);
        assert_eq!((t.channels, t.h, t.w), (4, 11, 11));
        for r in 0..t.h {
            for c in 0..t.w {
                assert_eq!(t.at(2, r, c), 0.0);
                assert_eq!(t.at(3, r, c), 0.0);
            }
        }
        // space channels mark the interposer and the chiplet footprints
        assert_eq!(t.at(0, 5, 5), 1.0);
        assert_eq!(t.at(1, 0, 0), 1.0); // cpu0 corner
        assert_eq!(t.at(1, 1, 1), 0.0); // cpu0 blocked center
        assert_eq!(t.at(1, 5, 0), 0.0); // no die there
    }

    #[test]
    fn single_full_level_site_encodes_as_one() {
        let (fp, p) = plan();
        let mut l = DecapLayout::empty(&fp);
        l.mim.set(6, 2, p.max_level);
        let t = encode_freq(&fp, &l, p.max_level);
        let ones: Vec<(usize, usize)> = (0..t.h)
            .flat_map(|r| (0..t.w).map(move |c| (r, c)))
            .filter(|&(r, c)| t.at(2, r, c) != 0.0)
            .collect();
        assert_eq!(ones, vec![(6, 2)]);
        assert_eq!(t.at(2, 6, 2), 1.0);
    }

    #[test]
    fn half_level_mos_encodes_as_half_at_offset() {
        let (fp, p) = plan();
        let mut l = DecapLayout::empty(&fp);
        // cpu3 sits at origin (8, 8); its cell (0, 2) lands at (8, 10)
        let ci = fp.chiplet_index("cpu3").unwrap();
        l.mos[ci].set(0, 2, 5);
        let t = encode_freq(&fp, &l, p.max_level);
        assert_eq!(t.at(3, 8, 10), 0.5);
        assert_eq!(t.at(3, 8, 8), 0.0);
    }

    #[test]
    fn blocked_cells_stay_zero() {
        let (fp, p) = plan();
        let l = DecapLayout::saturated(&fp, &p);
        let t = encode_freq(&fp, &l, p.max_level);
        // cpu0 has its center (1, 1) blocked
        assert_eq!(t.at(1, 1, 1), 0.0);
        assert_eq!(t.at(3, 1, 1), 0.0);
        for r in 0..t.h {
            for c in 0..t.w {
                assert!(t.at(2, r, c) <= t.at(0, r, c));
                assert!(t.at(3, r, c) <= t.at(1, r, c));
            }
        }
    }

    #[test]
    fn time_state_normalizes_initial_max_to_one() {
        let (fp, p) = plan();
        let l = DecapLayout::empty(&fp);
        let n = fp.time_sites().len();
        let mut vvi = vec![0.0; n];
        vvi[3] = 2e-11;
        vvi[7] = 8e-11;
        let t = encode_time(&fp, &l, p.max_level, &vvi, 8e-11);
        assert_eq!(t.channels, 5);
        let tr = &t;
        let max = (0..tr.h)
            .flat_map(|r| (0..tr.w).map(move |c| tr.at(4, r, c)))
            .fold(0.0, f64::max);
        assert_eq!(max, 1.0);
        // zero norm guard: channel stays zero
        let t0 = encode_time(&fp, &l, p.max_level, &vvi, 0.0);
        assert!((0..t0.h).all(|r| (0..t0.w).all(|c| t0.at(4, r, c) == 0.0)));
    }

    proptest! {
        #[test]
        fn distributions_stay_in_unit_range(levels in proptest::collection::vec(0u8..=10, 50)) {
            let (fp, p) = plan();
            let mut l = DecapLayout::empty(&fp);
            for (site, lv) in fp.chip_sites().into_iter().zip(levels) {
                l.set_level(site, lv);
            }
            let t = encode_freq(&fp, &l, p.max_level);
            for v in &t.data {
                prop_assert!((0.0..=1.0).contains(v));
            }
            // nonzero distribution entries only where space = 1
            for r in 0..t.h {
                for c in 0..t.w {
                    if t.at(3, r, c) != 0.0 {
                        prop_assert_eq!(t.at(1, r, c), 1.0);
                    }
                }
            }
        }
    }
}
