//! Quadratic warping energy over target vertex positions.
//!
//! Every term is a weighted squared residual that is linear in the unknowns,
//! so the whole objective is `Σ w (cᵀv − t)²`. Unknowns are laid out as
//! `[x0, y0, x1, y1, …]`.

use crate::seam::TargetSpec;

use super::mesh::MeshGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpMode {
    /// Similarity weighted by ω, scaling by 1 − ω.
    ModifiedImage,
    /// As `ModifiedImage`, plus grid orientation and temporal terms.
    ModifiedVideo,
    /// Similarity weighted by α, scaling by 1 − α.
    LegacyImage,
    /// As `LegacyImage`, plus grid orientation and temporal terms.
    LegacyVideo,
}

impl WarpMode {
    pub fn is_video(self) -> bool {
        matches!(self, WarpMode::ModifiedVideo | WarpMode::LegacyVideo)
    }

    pub fn is_legacy(self) -> bool {
        matches!(self, WarpMode::LegacyImage | WarpMode::LegacyVideo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpEnergyConfig {
    pub mode: WarpMode,
    /// Similarity weight in the legacy modes; 0.7 or 0.8 are the usual picks.
    pub alpha: f64,
    /// Weight of `‖v' − v_prev‖²` in the video modes.
    pub temporal_lambda: f64,
}

impl Default for WarpEnergyConfig {
    fn default() -> Self {
        WarpEnergyConfig {
            mode: WarpMode::ModifiedImage,
            alpha: 0.8,
            temporal_lambda: 1.0,
        }
    }
}

impl WarpEnergyConfig {
    pub fn with_mode(mode: WarpMode) -> Self {
        WarpEnergyConfig {
            mode,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermKind {
    Similarity,
    Scaling,
    Orientation,
    Temporal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Goal {
    Fixed(f64),
    /// `scales[patch] * component` of a source edge.
    Scaled { patch: usize, component: f64 },
}

/// One residual `w (Σ cᵢ vᵢ − t)²` with at most two unknowns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub kind: TermKind,
    pub weight: f64,
    pub vars: [(usize, f64); 2],
    goal: Goal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub var_count: usize,
    pub rows: Vec<Row>,
    /// Per-patch uniform scale of the similarity terms.
    pub scales: Vec<f64>,
}

impl Objective {
    pub fn goal(&self, row: &Row) -> f64 {
        match row.goal {
            Goal::Fixed(t) => t,
            Goal::Scaled { patch, component } => self.scales[patch] * component,
        }
    }

    #[inline]
    fn residual(&self, row: &Row, v: &[f64]) -> f64 {
        row.vars[0].1 * v[row.vars[0].0] + row.vars[1].1 * v[row.vars[1].0] - self.goal(row)
    }

    pub fn value(&self, v: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| r.weight * self.residual(r, v).powi(2))
            .sum()
    }

    /// Sum of the terms of one kind.
    pub fn value_of(&self, kind: TermKind, v: &[f64]) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| r.weight * self.residual(r, v).powi(2))
            .sum()
    }

    pub fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.var_count];
        for r in &self.rows {
            let k = 2.0 * r.weight * self.residual(r, v);
            for &(i, c) in &r.vars {
                g[i] += k * c;
            }
        }
        g
    }

    /// Least-squares per-patch scale of the current edges against the source
    /// edges: the exact minimizer of the similarity terms over each scale.
    pub fn refresh_scales(&mut self, v: &[f64]) {
        let mut num = vec![0.0; self.scales.len()];
        let mut den = vec![0.0; self.scales.len()];
        for r in &self.rows {
            if let Goal::Scaled { patch, component } = r.goal {
                let d = r.vars[0].1 * v[r.vars[0].0] + r.vars[1].1 * v[r.vars[1].0];
                num[patch] += r.weight * d * component;
                den[patch] += r.weight * component * component;
            }
        }
        for (s, (n, d)) in self.scales.iter_mut().zip(num.into_iter().zip(den)) {
            if d > 0.0 {
                *s = n / d;
            }
        }
    }

    /// Adds `lambda Σ ‖v' − previous‖²` over every vertex.
    pub fn add_temporal(&mut self, previous: &[[f64; 2]], lambda: f64) {
        if lambda <= 0.0 {
            return;
        }
        for (k, p) in previous.iter().enumerate() {
            for (axis, &value) in p.iter().enumerate() {
                self.rows.push(Row {
                    kind: TermKind::Temporal,
                    weight: lambda,
                    vars: [(2 * k + axis, 1.0), (2 * k + axis, 0.0)],
                    goal: Goal::Fixed(value),
                });
            }
        }
    }
}

pub fn flatten(vertices: &[[f64; 2]]) -> Vec<f64> {
    vertices.iter().flat_map(|p| [p[0], p[1]]).collect()
}

pub fn unflatten(v: &[f64]) -> Vec<[f64; 2]> {
    v.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

/// Builds the warping energy of `mesh` for `target`.
///
/// Per quad side `(i, j)` with source edge `e = vᵢ − vⱼ`:
/// similarity `‖e' − s_k e‖²`, scaling `‖e' − S e‖²` with
/// `S = diag(W'/W, H'/H)`, and in the video modes orientation
/// `(y'ᵢ − y'ⱼ)²` on horizontal sides, `(x'ᵢ − x'ⱼ)²` on vertical ones.
/// Scales `s_k` start at 1.
pub fn assemble_energy(mesh: &MeshGrid, target: TargetSpec, cfg: &WarpEnergyConfig) -> Objective {
    let sx = target.width as f64 / mesh.dims.width as f64;
    let sy = target.height as f64 / mesh.dims.height as f64;
    let mut rows = Vec::with_capacity(mesh.quad_count() * 4 * 6);
    for q in 0..mesh.quad_count() {
        let [tl, tr, br, bl] = mesh.quad_vertices(q);
        let patch = mesh.quad_patch[q];
        let (rigid, linear) = if cfg.mode.is_legacy() {
            (cfg.alpha, 1.0 - cfg.alpha)
        } else {
            (mesh.quad_omega[q], 1.0 - mesh.quad_omega[q])
        };
        // (from, to, horizontal side?)
        for (a, b, horizontal) in [(tr, tl, true), (br, bl, true), (bl, tl, false), (br, tr, false)] {
            let e = [
                mesh.source[a][0] - mesh.source[b][0],
                mesh.source[a][1] - mesh.source[b][1],
            ];
            for (axis, &component) in e.iter().enumerate() {
                let vars = [(2 * a + axis, 1.0), (2 * b + axis, -1.0)];
                if rigid > 0.0 {
                    rows.push(Row {
                        kind: TermKind::Similarity,
                        weight: rigid,
                        vars,
                        goal: Goal::Scaled { patch, component },
                    });
                }
                if linear > 0.0 {
                    let scale = if axis == 0 { sx } else { sy };
                    rows.push(Row {
                        kind: TermKind::Scaling,
                        weight: linear,
                        vars,
                        goal: Goal::Fixed(scale * component),
                    });
                }
                let across = if horizontal { 1 } else { 0 };
                if cfg.mode.is_video() && axis == across {
                    rows.push(Row {
                        kind: TermKind::Orientation,
                        weight: 1.0,
                        vars,
                        goal: Goal::Fixed(0.0),
                    });
                }
            }
        }
    }
    Objective {
        var_count: 2 * mesh.vertex_count(),
        rows,
        scales: vec![1.0; mesh.patch_count()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Dims;
    use crate::segment::{Labels, Patch, PatchMap};
    use crate::warp::mesh::build_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mesh(rng: &mut ChaCha8Rng, qx: usize, qy: usize, cell: usize) -> MeshGrid {
        let dims = Dims::new(qx * cell, qy * cell);
        let n = 3;
        let ids: Vec<usize> = (0..dims.area()).map(|_| rng.random_range(0..n)).collect();
        let patches = PatchMap {
            labels: Labels { width: dims.width, height: dims.height, ids },
            patches: (0..n).map(|id| Patch { id, pixel_count: 1, omega: rng.random() }).collect(),
        };
        build_mesh(dims, &patches, cell).unwrap()
    }

    /// Direct sum over quads and sides, written against the mesh alone.
    fn term_oracle(mesh: &MeshGrid, target: TargetSpec, cfg: &WarpEnergyConfig, scales: &[f64], v: &[[f64; 2]]) -> f64 {
        let sx = target.width as f64 / mesh.dims.width as f64;
        let sy = target.height as f64 / mesh.dims.height as f64;
        let mut total = 0.0;
        for j in 0..mesh.quads_y {
            for i in 0..mesh.quads_x {
                let q = j * mesh.quads_x + i;
                let idx = |a: usize, b: usize| b * (mesh.quads_x + 1) + a;
                let sides = [
                    (idx(i, j), idx(i + 1, j), true),
                    (idx(i, j + 1), idx(i + 1, j + 1), true),
                    (idx(i, j), idx(i, j + 1), false),
                    (idx(i + 1, j), idx(i + 1, j + 1), false),
                ];
                let w = if cfg.mode.is_legacy() { cfg.alpha } else { mesh.quad_omega[q] };
                let s = scales[mesh.quad_patch[q]];
                for (p, r, horizontal) in sides {
                    let e = [mesh.source[r][0] - mesh.source[p][0], mesh.source[r][1] - mesh.source[p][1]];
                    let d = [v[r][0] - v[p][0], v[r][1] - v[p][1]];
                    let sim = (d[0] - s * e[0]).powi(2) + (d[1] - s * e[1]).powi(2);
                    let lin = (d[0] - sx * e[0]).powi(2) + (d[1] - sy * e[1]).powi(2);
                    total += w * sim + (1.0 - w) * lin;
                    if cfg.mode.is_video() {
                        total += if horizontal { d[1].powi(2) } else { d[0].powi(2) };
                    }
                }
            }
        }
        total
    }

    #[test]
    fn identity_costs_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mesh = random_mesh(&mut rng, 3, 2, 10);
        for mode in [WarpMode::ModifiedImage, WarpMode::ModifiedVideo, WarpMode::LegacyImage, WarpMode::LegacyVideo] {
            let obj = assemble_energy(&mesh, TargetSpec::new(30, 20), &WarpEnergyConfig::with_mode(mode));
            assert_eq!(obj.value(&flatten(&mesh.source)), 0.0);
        }
    }

    #[test]
    fn zero_weights_leave_only_scaling() {
        let dims = Dims::new(30, 30);
        let mesh = build_mesh(dims, &PatchMap::single(dims, 0.0), 10).unwrap();
        let obj = assemble_energy(&mesh, TargetSpec::new(15, 30), &WarpEnergyConfig::default());
        assert!(obj.rows.iter().all(|r| r.kind == TermKind::Scaling));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..obj.var_count).map(|_| rng.random_range(0.0..30.0)).collect();
        assert_eq!(obj.value(&v), obj.value_of(TermKind::Scaling, &v));
    }

    #[test]
    fn matches_term_by_term_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mode in [WarpMode::ModifiedImage, WarpMode::ModifiedVideo, WarpMode::LegacyImage, WarpMode::LegacyVideo] {
            let mesh = random_mesh(&mut rng, 3, 3, 8);
            let target = TargetSpec::new(13, 29);
            let cfg = WarpEnergyConfig { mode, alpha: 0.7, temporal_lambda: 0.0 };
            let mut obj = assemble_energy(&mesh, target, &cfg);
            for s in &mut obj.scales {
                *s = rng.random_range(0.3..1.5);
            }
            for _ in 0..5 {
                let v: Vec<[f64; 2]> = (0..mesh.vertex_count())
                    .map(|_| [rng.random_range(-5.0..30.0), rng.random_range(-5.0..30.0)])
                    .collect();
                let expected = term_oracle(&mesh, target, &cfg, &obj.scales, &v);
                let got = obj.value(&flatten(&v));
                assert!((got - expected).abs() <= 1e-9 * expected.max(1.0), "{mode:?}: {got} vs {expected}");
                assert!(got >= 0.0);
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mesh = random_mesh(&mut rng, 3, 3, 6);
        let mut obj = assemble_energy(&mesh, TargetSpec::new(9, 18), &WarpEnergyConfig::with_mode(WarpMode::ModifiedVideo));
        obj.add_temporal(&mesh.source, 0.5);
        obj.scales.iter_mut().for_each(|s| *s = 0.8);
        for _ in 0..10 {
            let v: Vec<f64> = (0..obj.var_count).map(|_| rng.random_range(0.0..18.0)).collect();
            let g = obj.gradient(&v);
            let h = 1e-4;
            for i in 0..obj.var_count {
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[i] += h;
                vm[i] -= h;
                let fd = (obj.value(&vp) - obj.value(&vm)) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-4 * g[i].abs().max(1.0), "{i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn scale_refresh_is_least_squares_ratio() {
        let dims = Dims::new(20, 20);
        let mesh = build_mesh(dims, &PatchMap::single(dims, 1.0), 10).unwrap();
        let mut obj = assemble_energy(&mesh, TargetSpec::new(20, 20), &WarpEnergyConfig::default());
        let v: Vec<f64> = mesh.source.iter().flat_map(|p| [0.6 * p[0], 0.6 * p[1]]).collect();
        obj.refresh_scales(&v);
        assert!((obj.scales[0] - 0.6).abs() < 1e-15);
    }
}
