//! Zhang-Suen two-subiteration parallel thinning.
//!
//! Deletions within a subiteration are decided on the image as it was at the
//! start of that subiteration. Parallel thinning erases a few two-pixel-thick
//! shapes (a 2x2 block) outright; a component left empty gets back its pixel
//! deepest inside the original shape.

use super::edt::euclidean_distance_transform;
use super::label::label_components;
use crate::raster::{BinaryMask, Grid};

/// Neighbour offsets P2..P9 in Zhang-Suen order: N, NE, E, SE, S, SW, W, NW.
const RING: [(isize, isize); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

struct Padded {
    width: usize,
    data: Vec<u8>,
}

impl Padded {
    fn new(mask: &BinaryMask) -> Self {
        let (h, w) = mask.dims();
        let pw = w + 2;
        let mut data = vec![0u8; (h + 2) * pw];
        for (r, c) in mask.ones() {
            data[(r + 1) * pw + c + 1] = 1;
        }
        Padded { width: pw, data }
    }

    #[inline]
    fn ring(&self, idx: usize) -> [u8; 8] {
        let w = self.width as isize;
        let mut out = [0u8; 8];
        for (k, &(dr, dc)) in RING.iter().enumerate() {
            out[k] = self.data[(idx as isize + dr * w + dc) as usize];
        }
        out
    }

    fn deletable(&self, idx: usize, first: bool) -> bool {
        let p = self.ring(idx);
        let b: u8 = p.iter().sum();
        if !(2..=6).contains(&b) {
            return false;
        }
        let a = (0..8).filter(|&k| p[k] == 0 && p[(k + 1) % 8] == 1).count();
        if a != 1 {
            return false;
        }
        // p[0]=P2 (N), p[2]=P4 (E), p[4]=P6 (S), p[6]=P8 (W)
        if first {
            p[0] * p[2] * p[4] == 0 && p[2] * p[4] * p[6] == 0
        } else {
            p[0] * p[2] * p[6] == 0 && p[0] * p[4] * p[6] == 0
        }
    }
}

/// Thins every foreground component toward a one-pixel-wide medial curve.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = mask.dims();
    if h == 0 || w == 0 {
        return mask.clone();
    }
    let mut img = Padded::new(mask);
    let pw = img.width;
    let mut active: Vec<usize> = mask.ones().map(|(r, c)| (r + 1) * pw + c + 1).collect();

    loop {
        let mut changed = false;
        for first in [true, false] {
            let doomed: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&i| img.data[i] == 1 && img.deletable(i, first))
                .collect();
            changed |= !doomed.is_empty();
            for i in doomed {
                img.data[i] = 0;
            }
        }
        active.retain(|&i| img.data[i] == 1);
        if !changed {
            break;
        }
    }

    let mut out = Grid::from_fn(h, w, |r, c| img.data[(r + 1) * pw + c + 1] == 1);
    restore_vanished(mask, &mut out);
    out
}

fn restore_vanished(mask: &BinaryMask, skeleton: &mut BinaryMask) {
    let (labels, n) = label_components(mask);
    let mut alive = vec![false; n + 1];
    for (r, c) in skeleton.ones() {
        alive[labels.get(r, c) as usize] = true;
    }
    if alive[1..].iter().all(|&a| a) {
        return;
    }
    let depth = euclidean_distance_transform(mask);
    let mut best: Vec<Option<((usize, usize), f64)>> = vec![None; n + 1];
    for (r, c) in mask.ones() {
        let l = labels.get(r, c) as usize;
        let d = depth.get(r, c);
        if !alive[l] && best[l].is_none_or(|(_, b)| d > b) {
            best[l] = Some(((r, c), d));
        }
    }
    for ((r, c), _) in best.into_iter().flatten() {
        skeleton.set(r, c, true);
    }
}
