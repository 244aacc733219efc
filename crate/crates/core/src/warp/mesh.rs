use crate::error::{Error, Result};
use crate::field::MeshCorrespondence;
use crate::raster::Dims;
use crate::segment::PatchMap;

/// Regular quad mesh over an image, with one owning patch per quad.
///
/// Vertices live in pixel-edge coordinates: the mesh spans `[0, W] × [0, H]`
/// and the last row/column of vertices is clamped to the image border, so
/// border quads may be narrower than `cell_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshGrid {
    pub dims: Dims,
    pub cell_size: usize,
    pub quads_x: usize,
    pub quads_y: usize,
    pub source: Vec<[f64; 2]>,
    pub target: Vec<[f64; 2]>,
    pub quad_patch: Vec<usize>,
    pub quad_omega: Vec<f64>,
}

impl MeshGrid {
    pub fn vertex_count(&self) -> usize {
        (self.quads_x + 1) * (self.quads_y + 1)
    }

    pub fn quad_count(&self) -> usize {
        self.quads_x * self.quads_y
    }

    #[inline]
    pub fn vertex_index(&self, i: usize, j: usize) -> usize {
        j * (self.quads_x + 1) + i
    }

    /// Vertex indices of quad `q`: top-left, top-right, bottom-right, bottom-left.
    pub fn quad_vertices(&self, q: usize) -> [usize; 4] {
        let (i, j) = (q % self.quads_x, q / self.quads_x);
        [
            self.vertex_index(i, j),
            self.vertex_index(i + 1, j),
            self.vertex_index(i + 1, j + 1),
            self.vertex_index(i, j + 1),
        ]
    }

    pub fn patch_count(&self) -> usize {
        self.quad_patch.iter().max().map_or(0, |m| m + 1)
    }

    /// Shoelace area of a target quad; positive for the source orientation.
    pub fn signed_area(&self, q: usize) -> f64 {
        let p = self.quad_vertices(q).map(|v| self.target[v]);
        let mut twice = 0.0;
        for k in 0..4 {
            let (a, b) = (p[k], p[(k + 1) % 4]);
            twice += a[0] * b[1] - b[0] * a[1];
        }
        0.5 * twice
    }

    /// Fails with `Foldover` on the first quad with negative signed area.
    pub fn check_foldover(&self) -> Result<()> {
        for q in 0..self.quad_count() {
            let area = self.signed_area(q);
            if area < 0.0 {
                return Err(Error::Foldover { quad: q, area });
            }
        }
        Ok(())
    }

    pub fn target_dims(&self) -> Dims {
        let last = self.target[self.vertex_count() - 1];
        Dims::new(last[0].round() as usize, last[1].round() as usize)
    }

    pub fn correspondence(&self) -> MeshCorrespondence {
        MeshCorrespondence {
            quads_x: self.quads_x,
            quads_y: self.quads_y,
            cell_size: self.cell_size,
            source: self.source.clone(),
            target: self.target.clone(),
        }
    }

    /// Copies the owning patch weights from `patches` (same labelling).
    pub fn reweight(&mut self, patches: &PatchMap) {
        for (omega, &id) in self.quad_omega.iter_mut().zip(&self.quad_patch) {
            *omega = patches.omega(id);
        }
    }
}

/// Lays a `cell_size` grid over `dims` and tags each quad with the patch
/// owning most of its pixels (ties to the lower id).
pub fn build_mesh(dims: Dims, patches: &PatchMap, cell_size: usize) -> Result<MeshGrid> {
    if cell_size < 2 {
        return Err(Error::DegenerateMesh(format!("cell size {cell_size} < 2")));
    }
    if patches.labels.dims() != dims {
        return Err(Error::DimensionMismatch {
            expected: (dims.width, dims.height),
            found: (patches.labels.width, patches.labels.height),
        });
    }
    let corr = MeshCorrespondence::identity(dims, cell_size);
    let (quads_x, quads_y) = (corr.quads_x, corr.quads_y);
    let mut quad_patch = Vec::with_capacity(quads_x * quads_y);
    let mut votes = vec![0usize; patches.patches.len()];
    for j in 0..quads_y {
        for i in 0..quads_x {
            votes.iter_mut().for_each(|v| *v = 0);
            let ys = j * cell_size..((j + 1) * cell_size).min(dims.height);
            let xs = i * cell_size..((i + 1) * cell_size).min(dims.width);
            for y in ys {
                for x in xs.clone() {
                    votes[patches.labels.get(x, y)] += 1;
                }
            }
            let mut owner = 0;
            for (id, &v) in votes.iter().enumerate() {
                if v > votes[owner] {
                    owner = id;
                }
            }
            quad_patch.push(owner);
        }
    }
    let quad_omega = quad_patch.iter().map(|&id| patches.omega(id)).collect();
    Ok(MeshGrid {
        dims,
        cell_size,
        quads_x,
        quads_y,
        target: corr.source.clone(),
        source: corr.source,
        quad_patch,
        quad_omega,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::{Labels, Patch};

    #[test]
    fn grid_arithmetic() {
        let m = build_mesh(Dims::new(40, 40), &PatchMap::single(Dims::new(40, 40), 0.3), 20).unwrap();
        assert_eq!((m.quads_x, m.quads_y, m.vertex_count()), (2, 2, 9));
        assert!(m.quad_patch.iter().all(|&p| p == 0));
        assert!(m.quad_omega.iter().all(|&w| w == 0.3));

        let m = build_mesh(Dims::new(41, 40), &PatchMap::single(Dims::new(41, 40), 0.0), 20).unwrap();
        assert_eq!((m.quads_x, m.quads_y), (3, 2));
        assert_eq!(m.source[3], [41.0, 0.0]);
        assert_eq!(m.source[2][0] - m.source[1][0], 20.0);
        assert_eq!(m.source[3][0] - m.source[2][0], 1.0);
    }

    #[test]
    fn tiny_image_still_has_one_quad() {
        let m = build_mesh(Dims::new(3, 2), &PatchMap::single(Dims::new(3, 2), 1.0), 20).unwrap();
        assert_eq!(m.quad_count(), 1);
        assert_eq!(m.source[3], [3.0, 2.0]);
        assert!(matches!(
            build_mesh(Dims::new(3, 2), &PatchMap::single(Dims::new(3, 2), 1.0), 1),
            Err(Error::DegenerateMesh(_))
        ));
    }

    #[test]
    fn majority_vote_ties_to_lower_id() {
        // 4x2 image, one 4x2 quad, ids split 4/4 -> lower id wins.
        let labels = Labels { width: 4, height: 2, ids: vec![1, 1, 0, 0, 1, 1, 0, 0] };
        let patches = PatchMap {
            labels,
            patches: vec![
                Patch { id: 0, pixel_count: 4, omega: 0.1 },
                Patch { id: 1, pixel_count: 4, omega: 0.9 },
            ],
        };
        let m = build_mesh(Dims::new(4, 2), &patches, 4).unwrap();
        assert_eq!(m.quad_patch, vec![0]);
        assert_eq!(m.quad_omega, vec![0.1]);
    }

    #[test]
    fn identity_has_positive_area() {
        let m = build_mesh(Dims::new(30, 30), &PatchMap::single(Dims::new(30, 30), 0.0), 10).unwrap();
        assert!((0..m.quad_count()).all(|q| m.signed_area(q) == 100.0));
        assert!(m.check_foldover().is_ok());
    }
}
