//! Structured periodic unit-cell meshes (Q4 in 2D, H8 in 3D), element
//! matrices, and the periodic degree-of-freedom elimination map.

use nalgebra::DMatrix;

use crate::material::{check_poisson, unit_constitutive};
use crate::{Error, Result};

/// Spatial dimension of the unit cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dim {
    Two,
    Three,
}

impl Dim {
    pub fn from_usize(d: usize) -> Result<Dim> {
        match d {
            2 => Ok(Dim::Two),
            3 => Ok(Dim::Three),
            other => Err(Error::InvalidInput(format!(
                "dimension must be 2 or 3, got {other}"
            ))),
        }
    }

    /// Number of spatial axes, `D`.
    pub fn spatial(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }

    /// Length of a Voigt stress/strain vector, `d`.
    pub fn voigt(self) -> usize {
        match self {
            Dim::Two => 3,
            Dim::Three => 6,
        }
    }

    pub fn nodes_per_element(self) -> usize {
        match self {
            Dim::Two => 4,
            Dim::Three => 8,
        }
    }

    pub fn dofs_per_element(self) -> usize {
        self.nodes_per_element() * self.spatial()
    }
}

/// Structured grid of congruent square/cubic cells.
///
/// Nodes and elements are numbered lexicographically with x fastest.
#[derive(Debug, Clone)]
pub struct RucMesh {
    dim: Dim,
    resolution: [usize; 3],
    side_mm: f64,
    cell_size: f64,
    connectivity: Vec<usize>,
    coords: Vec<[f64; 3]>,
}

/// Natural coordinates of the element's local nodes.
const NATURAL_2D: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
const NATURAL_3D: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

/// Builds a structured mesh of a square (2D) or cube (3D) of side `side_mm`.
///
/// `resolution` holds cells per axis; its length must match `dim`.
pub fn build_mesh(dim: Dim, resolution: &[usize], side_mm: f64) -> Result<RucMesh> {
    if resolution.len() != dim.spatial() {
        return Err(Error::InvalidInput(format!(
            "resolution has {} entries for a {}D mesh",
            resolution.len(),
            dim.spatial()
        )));
    }
    if let Some(&r) = resolution.iter().find(|&&r| r < 2) {
        return Err(Error::InvalidInput(format!(
            "resolution must be at least 2 cells per axis for periodic pairing, got {r}"
        )));
    }
    if !(side_mm > 0.0) {
        return Err(Error::InvalidInput(format!(
            "side length must be positive, got {side_mm}"
        )));
    }
    let mut res = [1usize; 3];
    res[..resolution.len()].copy_from_slice(resolution);
    if resolution.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::InvalidInput(
            "cells must be congruent squares/cubes: use the same resolution on every axis"
                .into(),
        ));
    }
    let cell_size = side_mm / res[0] as f64;

    let (nnx, nny, nnz) = match dim {
        Dim::Two => (res[0] + 1, res[1] + 1, 1),
        Dim::Three => (res[0] + 1, res[1] + 1, res[2] + 1),
    };
    let mut coords = Vec::with_capacity(nnx * nny * nnz);
    for k in 0..nnz {
        for j in 0..nny {
            for i in 0..nnx {
                coords.push([
                    i as f64 * cell_size,
                    j as f64 * cell_size,
                    k as f64 * cell_size,
                ]);
            }
        }
    }

    let node = |i: usize, j: usize, k: usize| i + nnx * (j + nny * k);
    let npe = dim.nodes_per_element();
    let mut connectivity = Vec::with_capacity(res.iter().product::<usize>() * npe);
    for ez in 0..res[2] {
        for ey in 0..res[1] {
            for ex in 0..res[0] {
                match dim {
                    Dim::Two => {
                        for [xi, eta] in NATURAL_2D {
                            connectivity.push(node(
                                ex + (xi > 0.0) as usize,
                                ey + (eta > 0.0) as usize,
                                0,
                            ));
                        }
                    }
                    Dim::Three => {
                        for [xi, eta, zeta] in NATURAL_3D {
                            connectivity.push(node(
                                ex + (xi > 0.0) as usize,
                                ey + (eta > 0.0) as usize,
                                ez + (zeta > 0.0) as usize,
                            ));
                        }
                    }
                }
            }
        }
    }

    Ok(RucMesh {
        dim,
        resolution: res,
        side_mm,
        cell_size,
        connectivity,
        coords,
    })
}

impl RucMesh {
    pub fn dim(&self) -> Dim {
        self.dim
    }

    /// Cells per axis; the third entry is 1 in 2D.
    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn side_mm(&self) -> f64 {
        self.side_mm
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn num_elements(&self) -> usize {
        self.resolution.iter().product()
    }

    /// Node count before periodic elimination.
    pub fn num_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn node_coords(&self, node: usize) -> [f64; 3] {
        self.coords[node]
    }

    pub fn element_nodes(&self, e: usize) -> &[usize] {
        let npe = self.dim.nodes_per_element();
        &self.connectivity[e * npe..(e + 1) * npe]
    }

    /// Grid index `(ex, ey, ez)` of element `e`.
    pub fn element_cell(&self, e: usize) -> [usize; 3] {
        let [nx, ny, _] = self.resolution;
        [e % nx, (e / nx) % ny, e / (nx * ny)]
    }

    pub fn element_index(&self, cell: [usize; 3]) -> usize {
        let [nx, ny, _] = self.resolution;
        cell[0] + nx * (cell[1] + ny * cell[2])
    }

    pub fn element_centroid(&self, e: usize) -> [f64; 3] {
        let c = self.element_cell(e);
        let h = self.cell_size;
        let z = match self.dim {
            Dim::Two => 0.0,
            Dim::Three => (c[2] as f64 + 0.5) * h,
        };
        [(c[0] as f64 + 0.5) * h, (c[1] as f64 + 0.5) * h, z]
    }

    /// Area (2D, unit thickness) or volume (3D) of one element.
    pub fn element_volume(&self) -> f64 {
        self.cell_size.powi(self.dim.spatial() as i32)
    }

    /// Area (2D) or volume (3D) of the whole cell, `|Y|`.
    pub fn cell_volume(&self) -> f64 {
        self.side_mm.powi(self.dim.spatial() as i32)
    }

    fn node_grid(&self, node: usize) -> [usize; 3] {
        let nnx = self.resolution[0] + 1;
        let nny = self.resolution[1] + 1;
        [node % nnx, (node / nnx) % nny, node / (nnx * nny)]
    }

    fn node_at(&self, g: [usize; 3]) -> usize {
        let nnx = self.resolution[0] + 1;
        let nny = self.resolution[1] + 1;
        g[0] + nnx * (g[1] + nny * g[2])
    }
}

/// Periodic master/slave map with one anchored master node.
///
/// Every node on a max face is identified with the congruent node on the
/// opposite min face; edge and corner nodes collapse transitively onto the
/// min corner. The surviving (independent) nodes form an `nx*ny[*nz]` grid.
/// All DOFs of independent node 0 are fixed to remove the rigid
/// translations that periodicity leaves in the system.
#[derive(Debug, Clone)]
pub struct DofMap {
    dim: Dim,
    master: Vec<usize>,
    independent: Vec<usize>,
    num_independent_nodes: usize,
    element_dofs: Vec<Option<usize>>,
    num_free_dofs: usize,
}

pub fn periodic_dof_map(mesh: &RucMesh) -> DofMap {
    let [nx, ny, nz] = mesh.resolution;
    let dim = mesh.dim;
    let sd = dim.spatial();
    let mut master = Vec::with_capacity(mesh.num_nodes());
    let mut independent = Vec::with_capacity(mesh.num_nodes());
    for n in 0..mesh.num_nodes() {
        let g = mesh.node_grid(n);
        let m = [g[0] % nx, g[1] % ny, if dim == Dim::Three { g[2] % nz } else { 0 }];
        master.push(mesh.node_at(m));
        independent.push(m[0] + nx * (m[1] + ny * m[2]));
    }
    let num_independent_nodes = mesh.num_elements();

    let dpe = dim.dofs_per_element();
    let mut element_dofs = Vec::with_capacity(mesh.num_elements() * dpe);
    for e in 0..mesh.num_elements() {
        for &n in mesh.element_nodes(e) {
            let ind = independent[n];
            for c in 0..sd {
                element_dofs.push(if ind == 0 { None } else { Some((ind - 1) * sd + c) });
            }
        }
    }

    DofMap {
        dim,
        master,
        independent,
        num_independent_nodes,
        element_dofs,
        num_free_dofs: (num_independent_nodes - 1) * sd,
    }
}

impl DofMap {
    /// Master node (in pre-elimination numbering) of `node`. Idempotent.
    pub fn master(&self, node: usize) -> usize {
        self.master[node]
    }

    /// Index of the independent node `node` maps to, in `0..num_independent_nodes`.
    pub fn independent_node(&self, node: usize) -> usize {
        self.independent[node]
    }

    pub fn num_independent_nodes(&self) -> usize {
        self.num_independent_nodes
    }

    /// Independent DOFs after periodic elimination, before anchoring.
    pub fn num_independent_dofs(&self) -> usize {
        self.num_independent_nodes * self.dim.spatial()
    }

    /// Unknowns of the anchored reduced system.
    pub fn num_free_dofs(&self) -> usize {
        self.num_free_dofs
    }

    /// `(slave, master)` node pairs.
    pub fn slave_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.master
            .iter()
            .enumerate()
            .filter(|(n, m)| n != *m)
            .map(|(n, &m)| (n, m))
    }

    /// Reduced DOF of each local element DOF, `None` where anchored.
    pub fn element_dofs(&self, e: usize) -> &[Option<usize>] {
        let dpe = self.dim.dofs_per_element();
        &self.element_dofs[e * dpe..(e + 1) * dpe]
    }

    /// Independent (pre-anchoring) DOF index of each local element DOF.
    pub fn element_independent_dofs(&self, mesh: &RucMesh, e: usize) -> Vec<usize> {
        let sd = self.dim.spatial();
        mesh.element_nodes(e)
            .iter()
            .flat_map(|&n| (0..sd).map(move |c| self.independent[n] * sd + c))
            .collect()
    }

    /// Gathers the element DOF values of a reduced vector (anchored DOFs read as 0).
    pub fn gather(&self, e: usize, reduced: &[f64], out: &mut [f64]) {
        for (o, d) in out.iter_mut().zip(self.element_dofs(e)) {
            *o = d.map_or(0.0, |i| reduced[i]);
        }
    }

    /// Adds element DOF values into a reduced vector, dropping anchored DOFs.
    pub fn scatter_add(&self, e: usize, local: &[f64], reduced: &mut [f64]) {
        for (v, d) in local.iter().zip(self.element_dofs(e)) {
            if let Some(i) = d {
                reduced[*i] += v;
            }
        }
    }
}

/// Element matrices of one congruent cell for unit Young's modulus.
#[derive(Debug, Clone)]
pub struct ElementMatrices {
    pub dim: Dim,
    pub cell_size: f64,
    pub poisson: f64,
    /// Solid element stiffness, `dofs_per_element` square.
    pub k0: DMatrix<f64>,
    /// Strain-displacement matrix at the element centroid (`voigt x dofs`).
    pub b_centroid: DMatrix<f64>,
    /// Unit-Young constitutive matrix.
    pub constitutive: DMatrix<f64>,
    /// Column `i` is the element load `int B^T C e_i dV` for unit test strain `e_i`.
    pub unit_strain_loads: DMatrix<f64>,
    /// Column `i` holds nodal displacements of the uniform strain field `e_i`,
    /// measured from the element centroid.
    pub unit_strain_displacements: DMatrix<f64>,
}

/// Shape-function gradients in physical coordinates at a natural point.
fn shape_gradients(dim: Dim, natural: &[f64], cell_size: f64) -> Vec<[f64; 3]> {
    let scale = 2.0 / cell_size;
    match dim {
        Dim::Two => NATURAL_2D
            .iter()
            .map(|[a, b]| {
                let (xi, eta) = (natural[0], natural[1]);
                [
                    0.25 * a * (1.0 + b * eta) * scale,
                    0.25 * b * (1.0 + a * xi) * scale,
                    0.0,
                ]
            })
            .collect(),
        Dim::Three => NATURAL_3D
            .iter()
            .map(|[a, b, c]| {
                let (xi, eta, zeta) = (natural[0], natural[1], natural[2]);
                [
                    0.125 * a * (1.0 + b * eta) * (1.0 + c * zeta) * scale,
                    0.125 * b * (1.0 + a * xi) * (1.0 + c * zeta) * scale,
                    0.125 * c * (1.0 + a * xi) * (1.0 + b * eta) * scale,
                ]
            })
            .collect(),
    }
}

/// Strain-displacement matrix at a natural point.
pub fn b_matrix(dim: Dim, natural: &[f64], cell_size: f64) -> DMatrix<f64> {
    let grads = shape_gradients(dim, natural, cell_size);
    let sd = dim.spatial();
    let mut b = DMatrix::zeros(dim.voigt(), dim.dofs_per_element());
    for (a, g) in grads.iter().enumerate() {
        let c = a * sd;
        match dim {
            Dim::Two => {
                b[(0, c)] = g[0];
                b[(1, c + 1)] = g[1];
                b[(2, c)] = g[1];
                b[(2, c + 1)] = g[0];
            }
            Dim::Three => {
                b[(0, c)] = g[0];
                b[(1, c + 1)] = g[1];
                b[(2, c + 2)] = g[2];
                b[(3, c)] = g[1];
                b[(3, c + 1)] = g[0];
                b[(4, c + 1)] = g[2];
                b[(4, c + 2)] = g[1];
                b[(5, c)] = g[2];
                b[(5, c + 2)] = g[0];
            }
        }
    }
    b
}

/// Nodal displacements (from the centroid) of the uniform strain `strain`.
pub fn uniform_strain_displacements(dim: Dim, cell_size: f64, strain: &[f64]) -> Vec<f64> {
    let half = 0.5 * cell_size;
    match dim {
        Dim::Two => NATURAL_2D
            .iter()
            .flat_map(|[a, b]| {
                let (x, y) = (a * half, b * half);
                [
                    strain[0] * x + 0.5 * strain[2] * y,
                    0.5 * strain[2] * x + strain[1] * y,
                ]
            })
            .collect(),
        Dim::Three => NATURAL_3D
            .iter()
            .flat_map(|[a, b, c]| {
                let (x, y, z) = (a * half, b * half, c * half);
                let (exy, eyz, exz) = (0.5 * strain[3], 0.5 * strain[4], 0.5 * strain[5]);
                [
                    strain[0] * x + exy * y + exz * z,
                    exy * x + strain[1] * y + eyz * z,
                    exz * x + eyz * y + strain[2] * z,
                ]
            })
            .collect(),
    }
}

fn gauss_points(dim: Dim) -> Vec<Vec<f64>> {
    let g = 1.0 / 3f64.sqrt();
    let pts = [-g, g];
    let mut out = Vec::new();
    match dim {
        Dim::Two => {
            for y in pts {
                for x in pts {
                    out.push(vec![x, y]);
                }
            }
        }
        Dim::Three => {
            for z in pts {
                for y in pts {
                    for x in pts {
                        out.push(vec![x, y, z]);
                    }
                }
            }
        }
    }
    out
}

/// Element stiffness (full Gauss quadrature), centroid B, and unit-strain
/// loads for a square/cubic cell of side `cell_size` and unit Young's modulus.
pub fn element_stiffness_and_b(
    dim: Dim,
    cell_size: f64,
    poisson_ratio: f64,
) -> Result<ElementMatrices> {
    check_poisson(poisson_ratio)?;
    if !(cell_size > 0.0) {
        return Err(Error::InvalidInput(format!(
            "cell size must be positive, got {cell_size}"
        )));
    }
    let c = unit_constitutive(dim, poisson_ratio);
    let nd = dim.dofs_per_element();
    let nv = dim.voigt();
    // Jacobian determinant of the affine map from [-1,1]^D; all Gauss weights are 1.
    let det_j = (0.5 * cell_size).powi(dim.spatial() as i32);

    let mut k0 = DMatrix::zeros(nd, nd);
    let mut loads = DMatrix::zeros(nd, nv);
    for gp in gauss_points(dim) {
        let b = b_matrix(dim, &gp, cell_size);
        let btc = b.transpose() * &c;
        k0 += &btc * &b * det_j;
        loads += &btc * det_j;
    }
    k0 = (&k0 + k0.transpose()) * 0.5;

    let centre = vec![0.0; dim.spatial()];
    let mut disp = DMatrix::zeros(nd, nv);
    for i in 0..nv {
        let mut e = vec![0.0; nv];
        e[i] = 1.0;
        let u = uniform_strain_displacements(dim, cell_size, &e);
        disp.set_column(i, &nalgebra::DVector::from_vec(u));
    }

    Ok(ElementMatrices {
        dim,
        cell_size,
        poisson: poisson_ratio,
        k0,
        b_centroid: b_matrix(dim, &centre, cell_size),
        constitutive: c,
        unit_strain_loads: loads,
        unit_strain_displacements: disp,
    })
}
