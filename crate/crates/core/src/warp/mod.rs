//! Patch-based mesh warping.
//!
//! The image is segmented into patches, each patch gets its mean importance
//! ω, and a quad mesh is deformed to the target size by minimizing
//! similarity terms (weighted by ω) against linear-scaling terms (weighted
//! by 1 − ω). Important patches therefore keep their aspect ratio while the
//! rest absorb the resize.

mod mesh;
mod objective;
mod render;
mod solve;

pub use mesh::{build_mesh, MeshGrid};
pub use objective::{
    assemble_energy, flatten, unflatten, Objective, Row, TermKind, WarpEnergyConfig, WarpMode,
};
pub use render::{inverse_bilinear, inverse_map, render_warp, sample_bilinear};
pub use solve::{
    conjugate_gradient, solve_warp, BoundaryConstraints, CgReport, CsrMatrix, SolverConfig,
    WarpSolution,
};

use crate::energy::EnergyProvider;
use crate::error::{Error, Result};
use crate::field::FieldChain;
use crate::raster::{ImportanceMap, RasterImage};
use crate::seam::TargetSpec;
use crate::segment::{patch_energy, segment, Labels, SegmentationParams};

/// Everything besides the energy terms that a warp job needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpOptions {
    pub cell_size: usize,
    pub segmentation: SegmentationParams,
    pub solver: SolverConfig,
}

impl Default for WarpOptions {
    fn default() -> Self {
        WarpOptions {
            cell_size: 20,
            segmentation: SegmentationParams::default(),
            solver: SolverConfig::default(),
        }
    }
}

fn check_target(target: TargetSpec) -> Result<()> {
    if target.width == 0 || target.height == 0 {
        return Err(Error::DegenerateTarget(format!(
            "target {}x{}",
            target.width, target.height
        )));
    }
    Ok(())
}

/// Segments, weights, solves and renders in one go, with a given map.
pub fn warp_with_map(
    img: &RasterImage,
    importance: &ImportanceMap,
    target: TargetSpec,
    cfg: &WarpEnergyConfig,
    opts: &WarpOptions,
) -> Result<(RasterImage, FieldChain, WarpSolution)> {
    check_target(target)?;
    importance.ensure_dims(img.dims())?;
    let labels = segment(img, &opts.segmentation)?;
    let patches = patch_energy(&labels, importance)?;
    let mesh = build_mesh(img.dims(), &patches, opts.cell_size)?;
    let objective = assemble_energy(&mesh, target, cfg);
    let constraints = BoundaryConstraints::for_mesh(&mesh, target);
    let solution = solve_warp(&mesh, objective, &constraints, target, None, &opts.solver)?;
    let (out, field) = render_warp(img, &solution.mesh)?;
    Ok((out, field, solution))
}

/// Warps `img` to `target` (both axes in one solve).
pub fn retarget_warp(
    img: &RasterImage,
    provider: &EnergyProvider,
    target: TargetSpec,
    cfg: &WarpEnergyConfig,
    opts: &WarpOptions,
) -> Result<(RasterImage, FieldChain)> {
    if target.dims() == img.dims() {
        return Ok((img.clone(), FieldChain::new()));
    }
    let importance = provider.evaluate(img)?;
    let (out, field, _) = warp_with_map(img, &importance, target, cfg, opts)?;
    Ok((out, field))
}

/// Result for one video frame.
#[derive(Debug, Clone)]
pub struct WarpedFrame {
    pub image: RasterImage,
    pub field: FieldChain,
    pub mesh: MeshGrid,
}

/// Decay of the exponential moving average applied to per-frame importance.
pub const IMPORTANCE_DECAY: f64 = 0.5;

/// Warps a frame sequence.
///
/// Segmentation comes from the first frame and is reused. Each frame's
/// importance is blended with the running average, and every frame after the
/// first starts from the previous solution with `temporal_lambda ‖Δv‖²`
/// active (video modes only).
pub fn retarget_video(
    frames: &[RasterImage],
    provider: &EnergyProvider,
    target: TargetSpec,
    cfg: &WarpEnergyConfig,
    opts: &WarpOptions,
) -> Result<Vec<WarpedFrame>> {
    check_target(target)?;
    let first = frames
        .first()
        .ok_or_else(|| Error::DegenerateTarget("empty frame sequence".into()))?;
    let dims = first.dims();
    for (index, f) in frames.iter().enumerate() {
        if f.dims() != dims {
            return Err(Error::FrameDimensionMismatch {
                index,
                expected: (dims.width, dims.height),
                found: (f.width(), f.height()),
            });
        }
    }
    let labels: Labels = segment(first, &opts.segmentation)?;
    let mut smoothed: Option<ImportanceMap> = None;
    let mut previous: Option<(Vec<[f64; 2]>, Vec<f64>)> = None;
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        let raw = provider.evaluate(frame)?;
        let blended = match &smoothed {
            None => raw,
            Some(prev) => ImportanceMap::new(
                dims.width,
                dims.height,
                prev.values()
                    .iter()
                    .zip(raw.values())
                    .map(|(p, r)| IMPORTANCE_DECAY * p + (1.0 - IMPORTANCE_DECAY) * r)
                    .collect(),
            )?,
        };
        let patches = patch_energy(&labels, &blended)?;
        smoothed = Some(blended);
        let mesh = build_mesh(dims, &patches, opts.cell_size)?;
        let mut objective = assemble_energy(&mesh, target, cfg);
        if let Some((prev_vertices, prev_scales)) = &previous {
            if cfg.mode.is_video() {
                objective.add_temporal(prev_vertices, cfg.temporal_lambda);
            }
            objective.scales.clone_from(prev_scales);
        }
        let constraints = BoundaryConstraints::for_mesh(&mesh, target);
        let initial = previous.as_ref().map(|(v, _)| v.as_slice());
        let solution = solve_warp(&mesh, objective, &constraints, target, initial, &opts.solver)?;
        let (image, field) = render_warp(frame, &solution.mesh)?;
        previous = Some((solution.mesh.target.clone(), solution.objective.scales.clone()));
        out.push(WarpedFrame {
            image,
            field,
            mesh: solution.mesh,
        });
    }
    Ok(out)
}
