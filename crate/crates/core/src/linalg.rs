//! Sparse symmetric stiffness storage and the two linear solvers: a sparse
//! Cholesky factorization (backed by `faer`) and Jacobi-preconditioned CG.

use std::sync::{Arc, OnceLock};

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Mat, Side};

use crate::mesh::{DofMap, RucMesh};
use crate::{Error, Result};

/// Sets the thread count used by the sparse factorization.
///
/// `1` selects the sequential reference mode.
pub fn configure_threads(threads: usize) {
    let par = if threads <= 1 {
        faer::Par::Seq
    } else {
        faer::Par::rayon(threads)
    };
    faer::set_global_parallelism(par);
}

/// Lower-triangular CSC pattern of the reduced periodic stiffness matrix,
/// with a precomputed slot for every element matrix entry.
#[derive(Debug)]
pub struct StiffnessPattern {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    dofs_per_element: usize,
    /// `slots[e * dpe * dpe + a * dpe + b]` is the value index receiving
    /// `k_e[a][b]`, or `NO_SLOT` when the entry is upper-triangular or anchored.
    slots: Vec<u32>,
    symbolic: OnceLock<SymbolicLlt<usize>>,
}

const NO_SLOT: u32 = u32::MAX;

impl StiffnessPattern {
    pub fn new(mesh: &RucMesh, dofs: &DofMap) -> Self {
        let n = dofs.num_free_dofs();
        let dpe = mesh.dim().dofs_per_element();
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in 0..mesh.num_elements() {
            let ed = dofs.element_dofs(e);
            for &r in ed.iter().flatten() {
                for &c in ed.iter().flatten() {
                    if r >= c {
                        cols[c].push(r);
                    }
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for col in &mut cols {
            col.sort_unstable();
            col.dedup();
            row_idx.extend_from_slice(col);
            col_ptr.push(row_idx.len());
        }
        assert!(row_idx.len() < NO_SLOT as usize, "stiffness pattern too large");

        let mut slots = Vec::with_capacity(mesh.num_elements() * dpe * dpe);
        for e in 0..mesh.num_elements() {
            let ed = dofs.element_dofs(e);
            for a in 0..dpe {
                for b in 0..dpe {
                    let slot = match (ed[a], ed[b]) {
                        (Some(r), Some(c)) if r >= c => {
                            let range = col_ptr[c]..col_ptr[c + 1];
                            let pos = row_idx[range.clone()]
                                .binary_search(&r)
                                .expect("entry present in pattern");
                            (range.start + pos) as u32
                        }
                        _ => NO_SLOT,
                    };
                    slots.push(slot);
                }
            }
        }

        StiffnessPattern {
            n,
            col_ptr,
            row_idx,
            dofs_per_element: dpe,
            slots,
            symbolic: OnceLock::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Assembles `sum_e scale[e] * k0` where `k0` is row-major.
    pub fn assemble(self: &Arc<Self>, k0: &[f64], scale: &[f64]) -> SystemMatrix {
        let dpe = self.dofs_per_element;
        debug_assert_eq!(k0.len(), dpe * dpe);
        let mut values = vec![0.0; self.row_idx.len()];
        for (e, &s) in scale.iter().enumerate() {
            let slots = &self.slots[e * dpe * dpe..(e + 1) * dpe * dpe];
            for (slot, k) in slots.iter().zip(k0) {
                if *slot != NO_SLOT {
                    values[*slot as usize] += s * k;
                }
            }
        }
        SystemMatrix {
            pattern: Arc::clone(self),
            values,
        }
    }

    fn symbolic(&self) -> Result<&SymbolicLlt<usize>> {
        if let Some(s) = self.symbolic.get() {
            return Ok(s);
        }
        let sym = SymbolicSparseColMatRef::new_checked(
            self.n,
            self.n,
            &self.col_ptr,
            None,
            &self.row_idx,
        );
        let s = SymbolicLlt::try_new(sym, Side::Lower)
            .map_err(|e| Error::Singular(format!("symbolic factorization failed: {e:?}")))?;
        Ok(self.symbolic.get_or_init(|| s))
    }
}

/// Reduced stiffness matrix values over a shared [`StiffnessPattern`].
#[derive(Debug, Clone)]
pub struct SystemMatrix {
    pattern: Arc<StiffnessPattern>,
    values: Vec<f64>,
}

impl SystemMatrix {
    pub fn size(&self) -> usize {
        self.pattern.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Dense copy, for tests on small systems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.size();
        let mut a = vec![vec![0.0; n]; n];
        let p = &self.pattern;
        for c in 0..n {
            for idx in p.col_ptr[c]..p.col_ptr[c + 1] {
                let r = p.row_idx[idx];
                a[r][c] = self.values[idx];
                a[c][r] = self.values[idx];
            }
        }
        a
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let p = &self.pattern;
        (0..self.size())
            .map(|c| {
                // Rows are sorted and the diagonal is the first lower entry.
                let idx = p.col_ptr[c];
                debug_assert_eq!(p.row_idx[idx], c);
                self.values[idx]
            })
            .collect()
    }

    /// `y = K x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let p = &self.pattern;
        for c in 0..self.size() {
            let xc = x[c];
            let mut acc = 0.0;
            for idx in p.col_ptr[c]..p.col_ptr[c + 1] {
                let r = p.row_idx[idx];
                let v = self.values[idx];
                y[r] += v * xc;
                if r != c {
                    acc += v * x[r];
                }
            }
            y[c] += acc;
        }
    }

    /// `||K x - b|| / ||b||` (absolute residual when `b = 0`).
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut kx = vec![0.0; x.len()];
        self.matvec(x, &mut kx);
        let r = kx
            .iter()
            .zip(b)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let nb = norm(b);
        if nb > 0.0 {
            r / nb
        } else {
            r
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linear solver selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    /// Sparse Cholesky; the symbolic analysis is shared across iterations.
    Direct,
    /// Conjugate gradients with a diagonal preconditioner.
    Pcg { rel_tol: f64, max_iter_factor: usize },
}

impl SolverKind {
    pub const DEFAULT_PCG: SolverKind = SolverKind::Pcg {
        rel_tol: 1e-9,
        max_iter_factor: 10,
    };
}

/// A matrix prepared for repeated solves with different right-hand sides.
pub enum Factorization {
    Direct(Llt<usize, f64>, SystemMatrix),
    Pcg {
        matrix: SystemMatrix,
        inv_diag: Vec<f64>,
        rel_tol: f64,
        max_iter: usize,
    },
}

impl Factorization {
    pub fn new(matrix: SystemMatrix, kind: SolverKind, num_elements: usize) -> Result<Self> {
        match kind {
            SolverKind::Direct => {
                let sym = matrix.pattern.symbolic()?.clone();
                let p = &matrix.pattern;
                let view = SparseColMatRef::new(
                    SymbolicSparseColMatRef::new_checked(
                        p.n,
                        p.n,
                        &p.col_ptr,
                        None,
                        &p.row_idx,
                    ),
                    &matrix.values,
                );
                let llt = Llt::try_new_with_symbolic(sym, view, Side::Lower)
                    .map_err(|e| Error::Singular(format!("{e:?}")))?;
                Ok(Factorization::Direct(llt, matrix))
            }
            SolverKind::Pcg {
                rel_tol,
                max_iter_factor,
            } => {
                let diag = matrix.diagonal();
                if let Some(d) = diag.iter().find(|d| !(**d > 0.0)) {
                    return Err(Error::Singular(format!("non-positive diagonal entry {d}")));
                }
                Ok(Factorization::Pcg {
                    inv_diag: diag.iter().map(|d| 1.0 / d).collect(),
                    matrix,
                    rel_tol,
                    max_iter: max_iter_factor * num_elements.max(1),
                })
            }
        }
    }

    pub fn matrix(&self) -> &SystemMatrix {
        match self {
            Factorization::Direct(_, m) => m,
            Factorization::Pcg { matrix, .. } => matrix,
        }
    }

    /// Solves `K x = b` for every right-hand side.
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        match self {
            Factorization::Direct(llt, m) => {
                let n = m.size();
                if rhs.is_empty() {
                    return Ok(Vec::new());
                }
                let mut b = Mat::from_fn(n, rhs.len(), |i, j| rhs[j][i]);
                llt.solve_in_place(b.as_mut());
                let out: Vec<Vec<f64>> = (0..rhs.len())
                    .map(|j| (0..n).map(|i| b[(i, j)]).collect())
                    .collect();
                if let Some(bad) = out.iter().flatten().find(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("direct solve produced {bad}")));
                }
                Ok(out)
            }
            Factorization::Pcg {
                matrix,
                inv_diag,
                rel_tol,
                max_iter,
            } => rhs
                .iter()
                .map(|b| pcg(matrix, inv_diag, b, *rel_tol, *max_iter))
                .collect(),
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve_many(std::slice::from_ref(&rhs.to_vec()))?.remove(0))
    }
}

fn pcg(
    a: &SystemMatrix,
    inv_diag: &[f64],
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let nb = norm(b);
    if nb == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        a.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = norm(&r) / nb;
        if !res.is_finite() {
            return Err(Error::NonFinite(format!("PCG residual at iteration {it}")));
        }
        if res <= rel_tol {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverDiverged {
        residual: norm(&r) / nb,
        iterations: max_iter,
    })
}
