use crate::error::Result;
use crate::field::{bilinear, DeformationField, FieldChain};
use crate::raster::RasterImage;

use super::mesh::MeshGrid;

/// Solves `bilinear(q, u, v) = p` by Newton's method. Returns `None` when the
/// Jacobian degenerates.
pub fn inverse_bilinear(q: [[f64; 2]; 4], p: [f64; 2]) -> Option<(f64, f64)> {
    let (mut u, mut v) = (0.5, 0.5);
    for _ in 0..20 {
        let f = bilinear(q, u, v);
        let (fx, fy) = (f[0] - p[0], f[1] - p[1]);
        // d/du and d/dv of the bilinear patch.
        let du = [
            (1.0 - v) * (q[1][0] - q[0][0]) + v * (q[2][0] - q[3][0]),
            (1.0 - v) * (q[1][1] - q[0][1]) + v * (q[2][1] - q[3][1]),
        ];
        let dv = [
            (1.0 - u) * (q[3][0] - q[0][0]) + u * (q[2][0] - q[1][0]),
            (1.0 - u) * (q[3][1] - q[0][1]) + u * (q[2][1] - q[1][1]),
        ];
        let det = du[0] * dv[1] - du[1] * dv[0];
        if det.abs() < 1e-300 {
            return None;
        }
        let step_u = (fx * dv[1] - fy * dv[0]) / det;
        let step_v = (du[0] * fy - du[1] * fx) / det;
        u -= step_u;
        v -= step_v;
        if step_u.abs() < 1e-14 && step_v.abs() < 1e-14 {
            break;
        }
    }
    Some((u, v))
}

/// How far `(u, v)` lies outside the unit square.
fn outside(u: f64, v: f64) -> f64 {
    (-u).max(u - 1.0).max(-v).max(v - 1.0).max(0.0)
}

/// Source position (pixel-edge coordinates) of every target pixel centre,
/// row-major over the target image.
pub fn inverse_map(mesh: &MeshGrid) -> Vec<[f64; 2]> {
    let dims = mesh.target_dims();
    let (w, h) = (dims.width, dims.height);
    let mut best: Vec<(f64, [f64; 2])> = vec![(f64::INFINITY, [0.0, 0.0]); w * h];
    for q in 0..mesh.quad_count() {
        let idx = mesh.quad_vertices(q);
        let tq = idx.map(|k| mesh.target[k]);
        let sq = idx.map(|k| mesh.source[k]);
        let lo_x = tq.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi_x = tq.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let lo_y = tq.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let hi_y = tq.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
        let x0 = (lo_x - 0.5).floor().max(0.0) as usize;
        let x1 = ((hi_x - 0.5).ceil().max(0.0) as usize).min(w - 1);
        let y0 = (lo_y - 0.5).floor().max(0.0) as usize;
        let y1 = ((hi_y - 0.5).ceil().max(0.0) as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                let Some((u, v)) = inverse_bilinear(tq, p) else { continue };
                let miss = outside(u, v);
                let slot = &mut best[y * w + x];
                if miss < slot.0 {
                    let (u, v) = (u.clamp(0.0, 1.0), v.clamp(0.0, 1.0));
                    *slot = (miss, bilinear(sq, u, v));
                }
            }
        }
    }
    // Pixels no quad's bounding box reached (only possible for badly
    // distorted meshes) fall back to uniform scaling.
    let sx = mesh.dims.width as f64 / w as f64;
    let sy = mesh.dims.height as f64 / h as f64;
    best.into_iter()
        .enumerate()
        .map(|(i, (miss, p))| {
            if miss.is_finite() {
                p
            } else {
                [((i % w) as f64 + 0.5) * sx, ((i / w) as f64 + 0.5) * sy]
            }
        })
        .collect()
}

/// Bilinear sample at a pixel-edge coordinate, clamped to the image.
pub fn sample_bilinear(img: &RasterImage, p: [f64; 2]) -> [f64; 3] {
    let fx = (p[0] - 0.5).clamp(0.0, (img.width() - 1) as f64);
    let fy = (p[1] - 0.5).clamp(0.0, (img.height() - 1) as f64);
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(img.width() - 1), (y0 + 1).min(img.height() - 1));
    let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
    let (a, b, c, d) = (img.pixel(x0, y0), img.pixel(x1, y0), img.pixel(x0, y1), img.pixel(x1, y1));
    let mut out = [0.0; 3];
    for k in 0..3 {
        let top = a[k] as f64 * (1.0 - tx) + b[k] as f64 * tx;
        let bottom = c[k] as f64 * (1.0 - tx) + d[k] as f64 * tx;
        out[k] = top * (1.0 - ty) + bottom * ty;
    }
    out
}

/// Resamples `img` through a solved mesh.
pub fn render_warp(img: &RasterImage, mesh: &MeshGrid) -> Result<(RasterImage, FieldChain)> {
    mesh.check_foldover()?;
    let dims = mesh.target_dims();
    let positions = inverse_map(mesh);
    let mut data = Vec::with_capacity(dims.area() * 3);
    for p in positions {
        let s = sample_bilinear(img, p);
        data.extend(s.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    }
    let out = RasterImage::new(dims.width, dims.height, data)?;
    Ok((out, FieldChain::single(DeformationField::Mesh(mesh.correspondence()))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Dims;
    use crate::segment::PatchMap;
    use crate::warp::mesh::build_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mesh_for(dims: Dims, cell: usize) -> MeshGrid {
        build_mesh(dims, &PatchMap::single(dims, 0.0), cell).unwrap()
    }

    #[test]
    fn inverse_bilinear_round_trip() {
        let q = [[0.0, 0.0], [10.0, 1.0], [12.0, 9.0], [-1.0, 8.0]];
        for (u, v) in [(0.1, 0.2), (0.9, 0.5), (0.5, 0.99)] {
            let p = bilinear(q, u, v);
            let (a, b) = inverse_bilinear(q, p).unwrap();
            assert!((a - u).abs() < 1e-12 && (b - v).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_mesh_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let img = RasterImage::from_fn(37, 23, |_, _| rng.random()).unwrap();
        let mesh = mesh_for(img.dims(), 10);
        let (out, chain) = render_warp(&img, &mesh).unwrap();
        assert_eq!(out, img);
        assert!(chain.is_identity());
    }

    #[test]
    fn half_width_moves_split() {
        let img = RasterImage::from_fn(40, 10, |x, _| if x < 20 { [0, 0, 0] } else { [255, 255, 255] }).unwrap();
        let mut mesh = mesh_for(img.dims(), 10);
        mesh.target = mesh.source.iter().map(|p| [p[0] * 0.5, p[1]]).collect();
        let (out, _) = render_warp(&img, &mesh).unwrap();
        assert_eq!(out.dims(), Dims::new(20, 10));
        for y in 0..10 {
            let first_bright = (0..20).find(|&x| out.pixel(x, y)[0] > 127).unwrap();
            assert!(first_bright.abs_diff(10) <= 1, "{first_bright}");
        }
    }

    #[test]
    fn samples_stay_within_neighbourhood() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let img = RasterImage::from_fn(30, 30, |x, y| if (x / 3 + y / 3) % 2 == 0 { [10, 20, 30] } else { [240, 200, 100] }).unwrap();
        let mut mesh = mesh_for(img.dims(), 10);
        for j in 1..3 {
            for i in 1..3 {
                let k = mesh.vertex_index(i, j);
                mesh.target[k][0] += rng.random_range(-3.0..3.0);
                mesh.target[k][1] += rng.random_range(-3.0..3.0);
            }
        }
        let (out, _) = render_warp(&img, &mesh).unwrap();
        for (i, p) in inverse_map(&mesh).into_iter().enumerate() {
            let fx = (p[0] - 0.5).clamp(0.0, 29.0);
            let fy = (p[1] - 0.5).clamp(0.0, 29.0);
            let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
            let corners = [(x0, y0), ((x0 + 1).min(29), y0), (x0, (y0 + 1).min(29)), ((x0 + 1).min(29), (y0 + 1).min(29))];
            for c in 0..3 {
                let vals: Vec<u8> = corners.iter().map(|&(x, y)| img.pixel(x, y)[c]).collect();
                let got = out.data()[i * 3 + c];
                assert!(*vals.iter().min().unwrap() <= got && got <= *vals.iter().max().unwrap());
            }
        }
    }

    #[test]
    fn foldover_is_reported() {
        let img = RasterImage::filled(20, 20, [0, 0, 0]).unwrap();
        let mut mesh = mesh_for(img.dims(), 10);
        let k = mesh.vertex_index(1, 1);
        mesh.target[k] = [25.0, 25.0];
        assert!(matches!(render_warp(&img, &mesh), Err(crate::Error::Foldover { .. })));
    }
}
