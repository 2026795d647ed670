//! 8-connected component labelling and skeleton edge segments.

use serde::{Deserialize, Serialize};

use crate::raster::{BinaryMask, Grid};

/// One 8-connected set of pixels, stored in row-major order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pixels: Vec<(usize, usize)>,
}

impl Segment {
    pub(crate) fn new(mut pixels: Vec<(usize, usize)>) -> Self {
        pixels.sort_unstable();
        Segment { pixels }
    }

    pub fn pixels(&self) -> &[(usize, usize)] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Smallest `(row, col)` in the segment.
    pub fn anchor(&self) -> (usize, usize) {
        self.pixels[0]
    }

    pub fn to_mask(&self, height: usize, width: usize) -> BinaryMask {
        BinaryMask::from_pixels(height, width, &self.pixels)
    }
}

/// Disjoint segments ordered largest first; equal sizes are ordered by
/// their smallest `(row, col)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonSegments {
    segments: Vec<Segment>,
}

impl SkeletonSegments {
    pub(crate) fn from_unsorted(mut segments: Vec<Segment>) -> Self {
        segments.sort_by(|a, b| b.len().cmp(&a.len()).then(a.anchor().cmp(&b.anchor())));
        SkeletonSegments { segments }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn largest(&self) -> Option<&Segment> {
        self.segments.first()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Segment> {
        self.segments.iter()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.segments.iter().map(Segment::len).collect()
    }

    pub fn into_vec(self) -> Vec<Segment> {
        self.segments
    }
}

impl<'a> IntoIterator for &'a SkeletonSegments {
    type Item = &'a Segment;
    type IntoIter = std::slice::Iter<'a, Segment>;

    fn into_iter(self) -> Self::IntoIter {
        self.segments.iter()
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        // label 0 is reserved for background
        DisjointSet { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let root = ra.min(rb);
        self.parent[ra.max(rb) as usize] = root;
        root
    }
}

/// Labels the 8-connected components of `mask` with a two-pass union-find
/// scan. Returns the label raster (0 = background, labels `1..=count`
/// assigned in raster order of first appearance) and the component count.
pub fn label_components(mask: &BinaryMask) -> (Grid<u32>, usize) {
    let (h, w) = mask.dims();
    let mut labels = Grid::filled(h, w, 0u32);
    let mut sets = DisjointSet::new();

    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            // already-visited neighbours: W, NW, N, NE
            let mut current = 0u32;
            let prev = [
                (c > 0).then(|| (r, c - 1)),
                (r > 0 && c > 0).then(|| (r - 1, c - 1)),
                (r > 0).then(|| (r - 1, c)),
                (r > 0 && c + 1 < w).then(|| (r - 1, c + 1)),
            ];
            for (nr, nc) in prev.into_iter().flatten() {
                let l = labels.get(nr, nc);
                if l == 0 {
                    continue;
                }
                current = if current == 0 { l } else { sets.union(current, l) };
            }
            if current == 0 {
                current = sets.make();
            }
            labels.set(r, c, current);
        }
    }

    let mut remap = vec![0u32; sets.parent.len()];
    let mut count = 0u32;
    for v in labels.as_mut_slice() {
        if *v == 0 {
            continue;
        }
        let root = sets.find(*v) as usize;
        if remap[root] == 0 {
            count += 1;
            remap[root] = count;
        }
        *v = remap[root];
    }
    (labels, count as usize)
}

/// Partitions the foreground into maximal 8-connected components.
pub fn label_connectivity(mask: &BinaryMask) -> SkeletonSegments {
    let (labels, count) = label_components(mask);
    let mut buckets: Vec<Vec<(usize, usize)>> = vec![Vec::new(); count];
    let w = labels.width();
    for (i, &l) in labels.as_slice().iter().enumerate() {
        if l > 0 {
            buckets[l as usize - 1].push((i / w, i % w));
        }
    }
    SkeletonSegments::from_unsorted(buckets.into_iter().map(Segment::new).collect())
}

/// Center weight times foreground plus the number of foreground 8-neighbours,
/// with zero padding at the border.
pub fn neighbor_count_convolve(skeleton: &BinaryMask) -> Grid<u8> {
    let (h, w) = skeleton.dims();
    Grid::from_fn(h, w, |r, c| {
        let mut sum = if skeleton.get(r, c) { 10u8 } else { 0 };
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                if (dr, dc) != (0, 0)
                    && skeleton.get_signed(r as isize + dr, c as isize + dc) == Some(true)
                {
                    sum += 1;
                }
            }
        }
        sum
    })
}

/// Skeleton pixels with exactly two skeleton neighbours, grouped into
/// 8-connected runs, largest first. Endpoints and junctions are excluded.
pub fn get_edges(skeleton: &BinaryMask) -> SkeletonSegments {
    let edges = neighbor_count_convolve(skeleton).map(|v| v == 12);
    label_connectivity(&edges)
}
