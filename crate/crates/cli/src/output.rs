//! Output files: density fields, homogenized matrix, history, g map, summary
//! and a grayscale preview image.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use metatopo::alopt::HistoryRow;
use metatopo::homogenize::HomogenizedTensor;
use metatopo::problem::Evaluation;
use metatopo::{Dim, RucMesh};
use serde::Serialize;

use crate::CliError;

pub const HISTORY_HEADER: &str =
    "iter,outer_k,objective,normalized_objective,max_g,volume_fraction,mu,beta,dmax";

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// A density field on a structured grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityFile {
    pub dim: Dim,
    pub resolution: [usize; 3],
    pub values: Vec<f64>,
}

impl DensityFile {
    pub fn from_mesh(mesh: &RucMesh, values: Vec<f64>) -> Self {
        DensityFile {
            dim: mesh.dim(),
            resolution: mesh.resolution(),
            values,
        }
    }

    /// Flat text: two header lines, then one value per line in element order.
    pub fn to_text(&self) -> String {
        let [nx, ny, nz] = self.resolution;
        let mut s = format!(
            "# metatopo density\n# dim {} resolution {nx} {ny} {nz}\n",
            self.dim.spatial()
        );
        for v in &self.values {
            writeln!(s, "{v}").unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = |m: &str| CliError::shape(format!("density file: {m}"));
        let mut lines = text.lines();
        if lines.next() != Some("# metatopo density") {
            return Err(bad("missing '# metatopo density' header"));
        }
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("missing dimension header"))?
            .split_whitespace()
            .collect();
        if header.len() != 7 || header[0] != "#" || header[1] != "dim" || header[3] != "resolution" {
            return Err(bad("malformed dimension header"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("non-integer header field"));
        let dim = Dim::from_usize(num(header[2])?).map_err(|e| bad(&e.to_string()))?;
        let resolution = [num(header[4])?, num(header[5])?, num(header[6])?];
        let values = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|_| bad(&format!("bad value '{l}'"))))
            .collect::<Result<Vec<f64>, _>>()?;
        let expected: usize = resolution.iter().product();
        if values.len() != expected {
            return Err(CliError::shape(format!(
                "density file: header promises {expected} values, found {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(bad(&format!("density {v} outside [0, 1]")));
        }
        Ok(DensityFile {
            dim,
            resolution,
            values,
        })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Checks that the field fits `mesh`.
    pub fn check_mesh(&self, mesh: &RucMesh) -> Result<(), CliError> {
        if self.dim != mesh.dim() || self.resolution != mesh.resolution() {
            return Err(CliError::shape(format!(
                "density file is {}D {:?} but the mesh is {}D {:?}",
                self.dim.spatial(),
                self.resolution,
                mesh.dim().spatial(),
                mesh.resolution()
            )));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write(path, &self.to_text())
    }
}

/// Legacy ASCII VTK with one CELL_DATA scalar per named field.
pub fn vtk_text(mesh: &RucMesh, fields: &[(&str, &[f64])]) -> String {
    let [nx, ny, nz] = mesh.resolution();
    let h = mesh.cell_size();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nmetatopo unit cell\nASCII\nDATASET STRUCTURED_POINTS\n");
    writeln!(s, "DIMENSIONS {} {} {}", nx + 1, ny + 1, nz + 1).unwrap();
    s.push_str("ORIGIN 0 0 0\n");
    let hz = if mesh.dim() == Dim::Two { 1.0 } else { h };
    writeln!(s, "SPACING {h} {h} {hz}").unwrap();
    writeln!(s, "CELL_DATA {}", mesh.num_elements()).unwrap();
    for (name, values) in fields {
        writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
        for v in *values {
            writeln!(s, "{v}").unwrap();
        }
    }
    s
}

pub fn write_vtk(path: &Path, mesh: &RucMesh, fields: &[(&str, &[f64])]) -> Result<(), CliError> {
    write(path, &vtk_text(mesh, fields))
}

fn voigt_labels(dim: Dim) -> &'static str {
    match dim {
        Dim::Two => "xx yy xy",
        Dim::Three => "xx yy zz xy yz xz",
    }
}

/// Plain-text matrix with a units header.
pub fn tensor_text(t: &HomogenizedTensor) -> String {
    let mut s = format!(
        "# homogenized elasticity matrix C^H\n# units MPa\n# voigt order {}\n",
        voigt_labels(t.dim)
    );
    for i in 0..t.c.nrows() {
        let row: Vec<String> = (0..t.c.ncols()).map(|j| format!("{:.9e}", t.get(i, j))).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_tensor(path: &Path, t: &HomogenizedTensor) -> Result<(), CliError> {
    write(path, &tensor_text(t))
}

/// Parses a matrix written by [`tensor_text`].
pub fn parse_tensor(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            l.split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| CliError::shape(format!("bad matrix entry '{v}'"))))
                .collect()
        })
        .collect()
}

pub fn history_text(rows: &[HistoryRow]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.iter, r.outer_k, r.objective, r.normalized_objective, r.max_g, r.volume_fraction, r.mu, r.beta, r.dmax
        )
        .unwrap();
    }
    s
}

pub fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<(), CliError> {
    write(path, &history_text(rows))
}

/// Per-element table: cell indices, projected density, then `g` and peak
/// von Mises stress for every load case.
pub fn gmap_text(mesh: &RucMesh, eval: &Evaluation, load_ids: &[String]) -> String {
    let mut s = String::from("element,i,j,k,rho_bar");
    for id in load_ids {
        write!(s, ",g_{id}").unwrap();
    }
    for id in load_ids {
        write!(s, ",von_mises_{id}").unwrap();
    }
    s.push('\n');
    for e in 0..mesh.num_elements() {
        let [i, j, k] = mesh.element_cell(e);
        write!(s, "{e},{i},{j},{k},{}", eval.field.rho_bar[e]).unwrap();
        for per_load in &eval.constraints {
            write!(s, ",{}", per_load[e].g).unwrap();
        }
        for l in 0..eval.cycles.len() {
            write!(s, ",{}", eval.element_von_mises(l, e)).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn write_gmap(path: &Path, mesh: &RucMesh, eval: &Evaluation, load_ids: &[String]) -> Result<(), CliError> {
    write(path, &gmap_text(mesh, eval, load_ids))
}

/// Run summary written as JSON.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub objective_kind: String,
    pub criterion: String,
    pub objective: f64,
    pub normalized_objective: f64,
    pub volume_fraction: f64,
    pub target_volume_fraction: f64,
    pub max_relaxed_constraint: f64,
    pub max_solid_g: f64,
    pub max_solid_von_mises_mpa: f64,
    pub converged: bool,
    pub iterations: usize,
    pub outer_iterations: usize,
    pub beta: f64,
    pub wall_time_s: f64,
    pub homogenized_matrix_mpa: Vec<Vec<f64>>,
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(summary).expect("summary serializes");
    write(path, &(text + "\n"))
}

/// 8-bit grayscale image, one pixel per element, solid drawn black.
/// Row 0 of the image is the top (largest `y`) row of cells.
pub fn write_png(path: &Path, mesh: &RucMesh, rho_bar: &[f64]) -> Result<(), CliError> {
    let [nx, ny, _] = mesh.resolution();
    let img = image::GrayImage::from_fn(nx as u32, ny as u32, |x, y| {
        let e = mesh.element_index([x as usize, ny - 1 - y as usize, 0]);
        let v = (1.0 - rho_bar[e].clamp(0.0, 1.0)) * 255.0;
        image::Luma([v.round() as u8])
    });
    img.save(path)
        .map_err(|e| CliError::io(path, std::io::Error::other(e.to_string())))
}

pub fn matrix_rows(t: &HomogenizedTensor) -> Vec<Vec<f64>> {
    (0..t.c.nrows())
        .map(|i| (0..t.c.ncols()).map(|j| t.get(i, j)).collect())
        .collect()
}
