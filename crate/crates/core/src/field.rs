//! Deformation records: how every retargeted pixel relates to the source.
//!
//! A retargeting job produces a [`FieldChain`], one [`DeformationField`] per
//! pass (a width pass followed by a height pass, or one mesh solve). Chains
//! serialize to a line-oriented text format:
//!
//! ```text
//! seam-removal <width> <height>
//! v 3 4 4 5
//! seam-insertion <width> <height>
//! h 0 0 1
//! mesh <quads-x> <quads-y> <cell-size>
//! <sx> <sy> <tx> <ty>
//! ...
//! ```
//!
//! Removal seams are recorded in the coordinates of the image they were
//! removed from, in removal order. Insertion seams are all expressed in the
//! coordinates of the section's source image; a new pixel is placed before
//! each seam pixel. Mesh sections list every vertex row by row, in pixel-edge
//! coordinates (`[0, W] × [0, H]`).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Dims;
use crate::seam::{Orientation, Seam};

/// Source and target vertex positions of a regular quad mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshCorrespondence {
    pub quads_x: usize,
    pub quads_y: usize,
    pub cell_size: usize,
    pub source: Vec<[f64; 2]>,
    pub target: Vec<[f64; 2]>,
}

impl MeshCorrespondence {
    pub fn vertex_index(&self, i: usize, j: usize) -> usize {
        j * (self.quads_x + 1) + i
    }

    pub fn source_dims(&self) -> Dims {
        let last = self.source[self.source.len() - 1];
        Dims::new(last[0].round() as usize, last[1].round() as usize)
    }

    pub fn target_dims(&self) -> Dims {
        let last = self.target[self.target.len() - 1];
        Dims::new(last[0].round() as usize, last[1].round() as usize)
    }

    /// Source vertices on a regular grid: the identity deformation.
    pub fn identity(dims: Dims, cell_size: usize) -> Self {
        let quads_x = dims.width.div_ceil(cell_size);
        let quads_y = dims.height.div_ceil(cell_size);
        let mut source = Vec::with_capacity((quads_x + 1) * (quads_y + 1));
        for j in 0..=quads_y {
            for i in 0..=quads_x {
                source.push([
                    (i * cell_size).min(dims.width) as f64,
                    (j * cell_size).min(dims.height) as f64,
                ]);
            }
        }
        MeshCorrespondence {
            quads_x,
            quads_y,
            cell_size,
            target: source.clone(),
            source,
        }
    }

    /// Forward-maps a source point through the bilinear patch of its quad.
    pub fn map_point(&self, p: [f64; 2]) -> Result<[f64; 2]> {
        let dims = self.source_dims();
        let eps = 1e-9;
        if !(p[0] >= -eps && p[0] <= dims.width as f64 + eps && p[1] >= -eps && p[1] <= dims.height as f64 + eps) {
            return Err(Error::Coverage(format!("point ({}, {})", p[0], p[1])));
        }
        let i = ((p[0] / self.cell_size as f64).floor() as usize).min(self.quads_x - 1);
        let j = ((p[1] / self.cell_size as f64).floor() as usize).min(self.quads_y - 1);
        let corners = [
            self.vertex_index(i, j),
            self.vertex_index(i + 1, j),
            self.vertex_index(i + 1, j + 1),
            self.vertex_index(i, j + 1),
        ];
        let s0 = self.source[corners[0]];
        let s2 = self.source[corners[2]];
        let u = (p[0] - s0[0]) / (s2[0] - s0[0]);
        let v = (p[1] - s0[1]) / (s2[1] - s0[1]);
        let t = corners.map(|c| self.target[c]);
        Ok(bilinear(t, u, v))
    }
}

/// Bilinear blend of quad corners ordered top-left, top-right,
/// bottom-right, bottom-left.
#[inline]
pub fn bilinear(q: [[f64; 2]; 4], u: f64, v: f64) -> [f64; 2] {
    // Nested lerps stay exact on axis-aligned quads far more often than
    // the four-weight form.
    let mut out = [0.0; 2];
    for k in 0..2 {
        let top = q[0][k] + u * (q[1][k] - q[0][k]);
        let bottom = q[3][k] + u * (q[2][k] - q[3][k]);
        out[k] = top + v * (bottom - top);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeformationField {
    SeamRemoval { source: Dims, seams: Vec<Seam> },
    SeamInsertion { source: Dims, seams: Vec<Seam> },
    Mesh(MeshCorrespondence),
}

impl DeformationField {
    pub fn kind(&self) -> &'static str {
        match self {
            DeformationField::SeamRemoval { .. } => "seam-removal",
            DeformationField::SeamInsertion { .. } => "seam-insertion",
            DeformationField::Mesh(_) => "mesh",
        }
    }

    pub fn source_dims(&self) -> Dims {
        match self {
            DeformationField::SeamRemoval { source, .. }
            | DeformationField::SeamInsertion { source, .. } => *source,
            DeformationField::Mesh(m) => m.source_dims(),
        }
    }

    pub fn target_dims(&self) -> Dims {
        match self {
            DeformationField::SeamRemoval { source, seams } => {
                seams.iter().fold(*source, |d, s| match s.orientation {
                    Orientation::Vertical => Dims::new(d.width - 1, d.height),
                    Orientation::Horizontal => Dims::new(d.width, d.height - 1),
                })
            }
            DeformationField::SeamInsertion { source, seams } => {
                seams.iter().fold(*source, |d, s| match s.orientation {
                    Orientation::Vertical => Dims::new(d.width + 1, d.height),
                    Orientation::Horizontal => Dims::new(d.width, d.height + 1),
                })
            }
            DeformationField::Mesh(m) => m.target_dims(),
        }
    }

    /// Maps `point` (pixel-edge coordinates) into the output of this step.
    ///
    /// `hint` is a point inside the source pixel whose row (for vertical
    /// seams) or column (for horizontal seams) decides the seam offset; it is
    /// mapped alongside and returned so steps can be chained.
    pub fn map_point(&self, point: [f64; 2], hint: [f64; 2]) -> Result<([f64; 2], [f64; 2])> {
        match self {
            DeformationField::Mesh(m) => Ok((m.map_point(point)?, m.map_point(hint)?)),
            DeformationField::SeamRemoval { source, seams } => {
                let mut dims = *source;
                let (mut p, mut h) = (point, hint);
                for seam in seams {
                    let (along, across) = seam.orientation.axes();
                    let line = lookup_line(h[across], seam, dims)?;
                    let s = seam.positions[line] as f64;
                    p[along] -= (p[along] - s).clamp(0.0, 1.0);
                    h[along] -= (h[along] - s).clamp(0.0, 1.0);
                    dims = match seam.orientation {
                        Orientation::Vertical => Dims::new(dims.width - 1, dims.height),
                        Orientation::Horizontal => Dims::new(dims.width, dims.height - 1),
                    };
                    let extent = [dims.width as f64, dims.height as f64][along];
                    h[along] = h[along].clamp(0.5, (extent - 0.5).max(0.5));
                }
                Ok((p, h))
            }
            DeformationField::SeamInsertion { source, seams } => {
                let (mut p, mut h) = (point, hint);
                let mut shift_p = [0.0; 2];
                let mut shift_h = [0.0; 2];
                for seam in seams {
                    let (along, across) = seam.orientation.axes();
                    let line = lookup_line(hint[across], seam, *source)?;
                    let c = seam.positions[line] as f64;
                    // The source pixel left of (above) the seam pixel is stretched
                    // over the inserted one; for a seam at 0 the seam pixel itself.
                    let start = (c - 1.0).max(0.0);
                    shift_p[along] += (point[along] - start).clamp(0.0, 1.0);
                    shift_h[along] += (hint[along] - start).clamp(0.0, 1.0);
                }
                for a in 0..2 {
                    p[a] += shift_p[a];
                    h[a] += shift_h[a];
                }
                Ok((p, h))
            }
        }
    }
}

fn lookup_line(coord: f64, seam: &Seam, dims: Dims) -> Result<usize> {
    let len = match seam.orientation {
        Orientation::Vertical => dims.height,
        Orientation::Horizontal => dims.width,
    };
    if seam.positions.len() != len {
        return Err(Error::Coverage(format!(
            "seam of length {} on a {}x{} image",
            seam.positions.len(),
            dims.width,
            dims.height
        )));
    }
    Ok((coord.floor().max(0.0) as usize).min(len - 1))
}

/// The ordered passes of one retargeting job.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldChain {
    pub steps: Vec<DeformationField>,
}

impl FieldChain {
    pub fn new() -> Self {
        FieldChain::default()
    }

    pub fn single(field: DeformationField) -> Self {
        FieldChain { steps: vec![field] }
    }

    pub fn push(&mut self, field: DeformationField) {
        self.steps.push(field);
    }

    pub fn extend(&mut self, other: FieldChain) {
        self.steps.extend(other.steps);
    }

    pub fn is_identity(&self) -> bool {
        self.steps.iter().all(|s| match s {
            DeformationField::SeamRemoval { seams, .. }
            | DeformationField::SeamInsertion { seams, .. } => seams.is_empty(),
            DeformationField::Mesh(m) => m.source == m.target,
        })
    }

    /// Composes every step; see [`DeformationField::map_point`].
    pub fn map_point(&self, point: [f64; 2], hint: [f64; 2]) -> Result<[f64; 2]> {
        let (mut p, mut h) = (point, hint);
        for step in &self.steps {
            (p, h) = step.map_point(p, h)?;
        }
        Ok(p)
    }

    pub fn source_dims(&self) -> Option<Dims> {
        self.steps.first().map(DeformationField::source_dims)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            match step {
                DeformationField::SeamRemoval { source, seams }
                | DeformationField::SeamInsertion { source, seams } => {
                    let _ = writeln!(out, "{} {} {}", step.kind(), source.width, source.height);
                    for seam in seams {
                        out.push(seam.orientation.tag());
                        for p in &seam.positions {
                            let _ = write!(out, " {p}");
                        }
                        out.push('\n');
                    }
                }
                DeformationField::Mesh(m) => {
                    let _ = writeln!(out, "mesh {} {} {}", m.quads_x, m.quads_y, m.cell_size);
                    for (s, t) in m.source.iter().zip(&m.target) {
                        let _ = writeln!(out, "{} {} {} {}", s[0], s[1], t[0], t[1]);
                    }
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut steps = Vec::new();
        let mut lines = text.lines().enumerate().peekable();
        while let Some((n, line)) = lines.next() {
            let line_no = n + 1;
            let bad = |reason: &str| Error::FieldFormat {
                line: line_no,
                reason: reason.to_owned(),
            };
            let words: Vec<&str> = line.split_whitespace().collect();
            if words.is_empty() {
                continue;
            }
            let nums = |ws: &[&str]| -> Result<Vec<usize>> {
                ws.iter()
                    .map(|w| w.parse::<usize>().map_err(|_| bad("expected an integer")))
                    .collect()
            };
            match words[0] {
                kind @ ("seam-removal" | "seam-insertion") => {
                    let dims = nums(&words[1..])?;
                    if dims.len() != 2 {
                        return Err(bad("expected width and height"));
                    }
                    let source = Dims::new(dims[0], dims[1]);
                    let mut seams = Vec::new();
                    while let Some((m, next)) = lines.peek() {
                        let mut ws = next.split_whitespace();
                        let orientation = match ws.next() {
                            Some("v") => Orientation::Vertical,
                            Some("h") => Orientation::Horizontal,
                            None => {
                                lines.next();
                                continue;
                            }
                            Some(_) => break,
                        };
                        let positions = ws
                            .map(|w| {
                                w.parse::<usize>().map_err(|_| Error::FieldFormat {
                                    line: m + 1,
                                    reason: "expected a seam position".into(),
                                })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        seams.push(Seam {
                            orientation,
                            positions,
                            total_energy: 0.0,
                        });
                        lines.next();
                    }
                    steps.push(if kind == "seam-removal" {
                        DeformationField::SeamRemoval { source, seams }
                    } else {
                        DeformationField::SeamInsertion { source, seams }
                    });
                }
                "mesh" => {
                    let header = nums(&words[1..])?;
                    if header.len() != 3 || header.contains(&0) {
                        return Err(bad("expected quads-x, quads-y and cell size"));
                    }
                    let (quads_x, quads_y, cell_size) = (header[0], header[1], header[2]);
                    let count = (quads_x + 1) * (quads_y + 1);
                    let mut source = Vec::with_capacity(count);
                    let mut target = Vec::with_capacity(count);
                    for _ in 0..count {
                        let (m, row) = lines.next().ok_or_else(|| bad("truncated mesh"))?;
                        let vals = row
                            .split_whitespace()
                            .map(|w| w.parse::<f64>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .ok()
                            .filter(|v| v.len() == 4 && v.iter().all(|x| x.is_finite()))
                            .ok_or_else(|| Error::FieldFormat {
                                line: m + 1,
                                reason: "expected `sx sy tx ty`".into(),
                            })?;
                        source.push([vals[0], vals[1]]);
                        target.push([vals[2], vals[3]]);
                    }
                    steps.push(DeformationField::Mesh(MeshCorrespondence {
                        quads_x,
                        quads_y,
                        cell_size,
                        source,
                        target,
                    }));
                }
                _ => return Err(bad("unknown section")),
            }
        }
        Ok(FieldChain { steps })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::FileNotFound(path.to_owned())
            } else {
                e.into()
            }
        })?;
        FieldChain::parse(&text)
    }
}
