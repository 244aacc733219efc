//! Constrained minimization of the warping energy.
//!
//! Border coordinates are eliminated as fixed unknowns; the remaining normal
//! equations `H v = b` are solved with Jacobi-preconditioned conjugate
//! gradients, alternating with closed-form per-patch scale updates.

use crate::error::{Error, Result};
use crate::seam::TargetSpec;

use super::mesh::MeshGrid;
use super::objective::{flatten, unflatten, Objective};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Vertex solves, each preceded by a scale refresh.
    pub outer_iterations: usize,
    /// Relative residual `‖b − Hv‖ / ‖b‖` at which CG stops.
    pub tolerance: f64,
    pub max_inner_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            outer_iterations: 5,
            tolerance: 1e-8,
            max_inner_iterations: 1000,
        }
    }
}

/// Fixed values for constrained unknowns: corners are pinned, other border
/// vertices may only slide along their border line.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryConstraints {
    pub fixed: Vec<Option<f64>>,
}

impl BoundaryConstraints {
    pub fn for_mesh(mesh: &MeshGrid, target: TargetSpec) -> Self {
        let mut fixed = vec![None; 2 * mesh.vertex_count()];
        for j in 0..=mesh.quads_y {
            for i in 0..=mesh.quads_x {
                let k = mesh.vertex_index(i, j);
                if i == 0 {
                    fixed[2 * k] = Some(0.0);
                } else if i == mesh.quads_x {
                    fixed[2 * k] = Some(target.width as f64);
                }
                if j == 0 {
                    fixed[2 * k + 1] = Some(0.0);
                } else if j == mesh.quads_y {
                    fixed[2 * k + 1] = Some(target.height as f64);
                }
            }
        }
        BoundaryConstraints { fixed }
    }

    pub fn apply(&self, v: &mut [f64]) {
        for (x, f) in v.iter_mut().zip(&self.fixed) {
            if let Some(value) = f {
                *x = *value;
            }
        }
    }

    /// Zeroes the gradient components of fixed unknowns.
    pub fn project(&self, g: &mut [f64]) {
        for (x, f) in g.iter_mut().zip(&self.fixed) {
            if f.is_some() {
                *x = 0.0;
            }
        }
    }
}

/// Compressed sparse rows.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate `(row, col)` entries.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_start = vec![0; n + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_start[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_start[r + 1] += row_start[r];
        }
        CsrMatrix {
            n,
            row_start,
            cols,
            vals,
        }
    }

    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.n) {
            let span = self.row_start[r]..self.row_start[r + 1];
            *o = self.cols[span.clone()]
                .iter()
                .zip(&self.vals[span])
                .map(|(&c, &v)| v * x[c])
                .sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let span = self.row_start[r]..self.row_start[r + 1];
                self.cols[span.clone()]
                    .iter()
                    .zip(&self.vals[span])
                    .find(|(&c, _)| c == r)
                    .map_or(0.0, |(_, &v)| v)
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Jacobi-preconditioned CG for symmetric positive-definite `a`, starting
/// from `x`.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    tolerance: f64,
    max_iterations: usize,
) -> CgReport {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut ax = vec![0.0; n];
    a.mul_into(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };
    let threshold = if b_norm > 0.0 { tolerance * b_norm } else { 0.0 };
    let mut r_norm = dot(&r, &r).sqrt();
    if r_norm <= threshold {
        return CgReport {
            iterations: 0,
            relative_residual: r_norm / scale,
            converged: true,
        };
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iterations {
        a.mul_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        r_norm = dot(&r, &r).sqrt();
        if r_norm <= threshold {
            return CgReport {
                iterations: it,
                relative_residual: r_norm / scale,
                converged: true,
            };
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgReport {
        iterations: max_iterations,
        relative_residual: r_norm / scale,
        converged: r_norm <= threshold,
    }
}

/// Normal equations of `objective` restricted to the free unknowns.
struct ReducedSystem {
    free: Vec<usize>,
    /// Position of each unknown among the free ones.
    slot: Vec<Option<usize>>,
    matrix: CsrMatrix,
}

impl ReducedSystem {
    fn new(objective: &Objective, constraints: &BoundaryConstraints) -> Self {
        let free: Vec<usize> = (0..objective.var_count)
            .filter(|&i| constraints.fixed[i].is_none())
            .collect();
        let mut slot = vec![None; objective.var_count];
        for (k, &i) in free.iter().enumerate() {
            slot[i] = Some(k);
        }
        let mut triplets = Vec::with_capacity(objective.rows.len() * 4);
        for row in &objective.rows {
            for &(i, ci) in &row.vars {
                let Some(si) = slot[i] else { continue };
                for &(j, cj) in &row.vars {
                    if let Some(sj) = slot[j] {
                        triplets.push((si, sj, row.weight * ci * cj));
                    }
                }
            }
        }
        let matrix = CsrMatrix::from_triplets(free.len(), triplets);
        ReducedSystem { free, slot, matrix }
    }

    fn rhs(&self, objective: &Objective, constraints: &BoundaryConstraints) -> Vec<f64> {
        let mut b = vec![0.0; self.free.len()];
        for row in &objective.rows {
            let fixed_part: f64 = row
                .vars
                .iter()
                .filter_map(|&(j, cj)| constraints.fixed[j].map(|f| cj * f))
                .sum();
            let t = objective.goal(row) - fixed_part;
            for &(i, ci) in &row.vars {
                if let Some(si) = self.slot[i] {
                    b[si] += row.weight * ci * t;
                }
            }
        }
        b
    }
}

/// Result of a warp solve: the mesh with target vertices and the energy
/// whose constrained minimizer they are.
#[derive(Debug, Clone)]
pub struct WarpSolution {
    pub mesh: MeshGrid,
    pub objective: Objective,
    pub last_cg: CgReport,
}

/// Minimizes `objective` over the target vertices of `mesh`.
///
/// Starts from `initial` (default: uniform scaling to the target), then
/// alternates a scale refresh with a CG vertex solve. The returned vertices
/// minimize the returned objective, whose scales are those of the last solve.
pub fn solve_warp(
    mesh: &MeshGrid,
    mut objective: Objective,
    constraints: &BoundaryConstraints,
    target: TargetSpec,
    initial: Option<&[[f64; 2]]>,
    cfg: &SolverConfig,
) -> Result<WarpSolution> {
    let mut v = match initial {
        Some(init) => flatten(init),
        None => {
            let sx = target.width as f64 / mesh.dims.width as f64;
            let sy = target.height as f64 / mesh.dims.height as f64;
            mesh.source.iter().flat_map(|p| [p[0] * sx, p[1] * sy]).collect()
        }
    };
    constraints.apply(&mut v);
    let system = ReducedSystem::new(&objective, constraints);
    let mut x: Vec<f64> = system.free.iter().map(|&i| v[i]).collect();
    let mut report = CgReport {
        iterations: 0,
        relative_residual: 0.0,
        converged: true,
    };
    for _ in 0..cfg.outer_iterations.max(1) {
        objective.refresh_scales(&v);
        let b = system.rhs(&objective, constraints);
        report = conjugate_gradient(&system.matrix, &b, &mut x, cfg.tolerance, cfg.max_inner_iterations);
        if !report.converged {
            return Err(Error::NonConvergence {
                residual: report.relative_residual,
                iterations: report.iterations,
            });
        }
        for (&i, &xi) in system.free.iter().zip(&x) {
            v[i] = xi;
        }
    }
    let mut solved = mesh.clone();
    solved.target = unflatten(&v);
    solved.check_foldover()?;
    Ok(WarpSolution {
        mesh: solved,
        objective,
        last_cg: report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_sums_duplicates() {
        let m = CsrMatrix::from_triplets(2, vec![(1, 1, 2.0), (0, 0, 1.0), (1, 1, 3.0), (0, 1, -1.0)]);
        let mut out = [0.0; 2];
        m.mul_into(&[1.0, 2.0], &mut out);
        assert_eq!(out, [-1.0, 10.0]);
        assert_eq!(m.diagonal(), vec![1.0, 5.0]);
    }

    #[test]
    fn cg_solves_spd_system() {
        // 1-D Laplacian with Dirichlet ends.
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, t);
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let rep = conjugate_gradient(&a, &b, &mut x, 1e-12, 1000);
        assert!(rep.converged);
        let mut ax = vec![0.0; n];
        a.mul_into(&x, &mut ax);
        for (p, q) in ax.iter().zip(&b) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn cg_reports_non_convergence() {
        let a = CsrMatrix::from_triplets(3, vec![(0, 0, 1.0), (1, 1, 1e6), (2, 2, 3.0), (0, 1, 0.5), (1, 0, 0.5)]);
        let mut x = vec![0.0; 3];
        let rep = conjugate_gradient(&a, &[1.0, 1.0, 1.0], &mut x, 1e-30, 1);
        assert!(!rep.converged);
    }
}
