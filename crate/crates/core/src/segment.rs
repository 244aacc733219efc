//! Graph-based segmentation into patches, and per-patch mean importance.
//!
//! The segmenter is the classic greedy merge over a pixel graph: smooth,
//! weight 8-neighbour edges by RGB distance, then union components in
//! nondecreasing edge order while the edge is no heavier than either
//! component's internal difference plus `k / |C|`.

use crate::error::{Error, Result};
use crate::raster::{Dims, ImportanceMap, RasterImage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationParams {
    pub smoothing_sigma: f64,
    pub threshold_k: f64,
    pub min_patch_size: usize,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        SegmentationParams {
            smoothing_sigma: 0.8,
            threshold_k: 300.0,
            min_patch_size: 50,
        }
    }
}

impl SegmentationParams {
    pub fn validate(&self) -> Result<()> {
        if self.smoothing_sigma > 0.0 && self.threshold_k > 0.0 && self.min_patch_size > 0 {
            Ok(())
        } else {
            Err(Error::DegenerateTarget(format!(
                "segmentation parameters must be positive: {self:?}"
            )))
        }
    }
}

/// Patch id per pixel, row-major. Ids are dense, numbered in order of first
/// appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    pub width: usize,
    pub height: usize,
    pub ids: Vec<usize>,
}

impl Labels {
    pub fn dims(&self) -> Dims {
        Dims::new(self.width, self.height)
    }

    pub fn count(&self) -> usize {
        self.ids.iter().max().map_or(0, |m| m + 1)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> usize {
        self.ids[y * self.width + x]
    }
}

/// Disjoint sets with union by rank and path halving.
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn size(&self, root: usize) -> usize {
        self.size[root]
    }

    /// Joins two roots and returns the new root.
    pub fn union(&mut self, a: usize, b: usize) -> usize {
        let (big, small) = if self.rank[a] >= self.rank[b] { (a, b) } else { (b, a) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        if self.rank[big] == self.rank[small] {
            self.rank[big] += 1;
        }
        big
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (sigma * 4.0).ceil() as usize + 1;
    let mut k: Vec<f64> = (0..radius)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let sum = k[0] + 2.0 * k[1..].iter().sum::<f64>();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable Gaussian blur of each channel, clamping at the borders.
fn smooth(img: &RasterImage, sigma: f64) -> Vec<[f64; 3]> {
    let (w, h) = (img.width(), img.height());
    let k = gaussian_kernel(sigma);
    let src: Vec<[f64; 3]> = img
        .data()
        .chunks_exact(3)
        .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64])
        .collect();
    let blur = |input: &[[f64; 3]], horizontal: bool| -> Vec<[f64; 3]> {
        let mut out = vec![[0.0; 3]; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0; 3];
                for (i, &kv) in k.iter().enumerate() {
                    let taps: &[isize] = if i == 0 { &[0] } else { &[-1, 1] };
                    for &sign in taps {
                        let off = sign * i as isize;
                        let (sx, sy) = if horizontal {
                            ((x as isize + off).clamp(0, w as isize - 1) as usize, y)
                        } else {
                            (x, (y as isize + off).clamp(0, h as isize - 1) as usize)
                        };
                        let p = input[sy * w + sx];
                        for c in 0..3 {
                            acc[c] += kv * p[c];
                        }
                    }
                }
                out[y * w + x] = acc;
            }
        }
        out
    };
    let tmp = blur(&src, true);
    blur(&tmp, false)
}

struct Edge {
    weight: f64,
    a: usize,
    b: usize,
}

fn build_edges(pixels: &[[f64; 3]], w: usize, h: usize) -> Vec<Edge> {
    let dist = |a: usize, b: usize| {
        let (p, q) = (pixels[a], pixels[b]);
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
    };
    let mut edges = Vec::with_capacity(w * h * 4);
    for y in 0..h {
        for x in 0..w {
            let a = y * w + x;
            let mut push = |b: usize| edges.push(Edge { weight: dist(a, b), a, b });
            if x + 1 < w {
                push(a + 1);
            }
            if y + 1 < h {
                push(a + w);
            }
            if x + 1 < w && y + 1 < h {
                push(a + w + 1);
            }
            if x + 1 < w && y > 0 {
                push(a - w + 1);
            }
        }
    }
    edges.sort_by(|e, f| {
        e.weight
            .total_cmp(&f.weight)
            .then(e.a.cmp(&f.a))
            .then(e.b.cmp(&f.b))
    });
    edges
}

/// Partitions `img` into patches. Deterministic for identical inputs.
pub fn segment(img: &RasterImage, params: &SegmentationParams) -> Result<Labels> {
    params.validate()?;
    let (w, h) = (img.width(), img.height());
    let smoothed = smooth(img, params.smoothing_sigma);
    let edges = build_edges(&smoothed, w, h);

    let mut sets = UnionFind::new(w * h);
    let mut threshold = vec![params.threshold_k; w * h];
    for e in &edges {
        let a = sets.find(e.a);
        let b = sets.find(e.b);
        if a != b && e.weight <= threshold[a] && e.weight <= threshold[b] {
            let root = sets.union(a, b);
            threshold[root] = e.weight + params.threshold_k / sets.size(root) as f64;
        }
    }
    // Small components join the neighbour across their cheapest edge.
    for e in &edges {
        let a = sets.find(e.a);
        let b = sets.find(e.b);
        if a != b && (sets.size(a) < params.min_patch_size || sets.size(b) < params.min_patch_size) {
            sets.union(a, b);
        }
    }
    Ok(relabel(w, h, |i| sets.find(i)))
}

/// Dense ids in order of first appearance.
fn relabel(w: usize, h: usize, mut root_of: impl FnMut(usize) -> usize) -> Labels {
    let mut dense = vec![usize::MAX; w * h];
    let mut next = 0;
    let ids = (0..w * h)
        .map(|i| {
            let r = root_of(i);
            if dense[r] == usize::MAX {
                dense[r] = next;
                next += 1;
            }
            dense[r]
        })
        .collect();
    Labels {
        width: w,
        height: h,
        ids,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patch {
    pub id: usize,
    pub pixel_count: usize,
    /// Mean importance over the patch's pixels.
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchMap {
    pub labels: Labels,
    /// Indexed (and sorted) by patch id.
    pub patches: Vec<Patch>,
}

impl PatchMap {
    pub fn omega(&self, id: usize) -> f64 {
        self.patches[id].omega
    }

    /// A single patch covering the whole image with the given weight.
    pub fn single(dims: Dims, omega: f64) -> PatchMap {
        PatchMap {
            labels: Labels {
                width: dims.width,
                height: dims.height,
                ids: vec![0; dims.area()],
            },
            patches: vec![Patch {
                id: 0,
                pixel_count: dims.area(),
                omega,
            }],
        }
    }
}

/// Averages `map` over every labelled patch.
pub fn patch_energy(labels: &Labels, map: &ImportanceMap) -> Result<PatchMap> {
    map.ensure_dims(labels.dims())?;
    let n = labels.count();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for (&id, &v) in labels.ids.iter().zip(map.values()) {
        sums[id] += v;
        counts[id] += 1;
    }
    let patches = (0..n)
        .map(|id| Patch {
            id,
            pixel_count: counts[id],
            omega: if counts[id] == 0 {
                0.0
            } else {
                (sums[id] / counts[id] as f64).clamp(0.0, 1.0)
            },
        })
        .collect();
    Ok(PatchMap {
        labels: labels.clone(),
        patches,
    })
}
