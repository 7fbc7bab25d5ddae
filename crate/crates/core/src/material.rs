//! Base material and its isotropic constitutive matrices.

use nalgebra::DMatrix;

use crate::mesh::Dim;
use crate::{Error, Result};

/// Linear elastic base material. Stresses and moduli are in MPa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub young_mpa: f64,
    pub poisson: f64,
    /// Yield stress used by the von Mises constraint.
    pub yield_mpa: f64,
    /// Fully reversed bending fatigue limit.
    pub f_minus1_mpa: f64,
    /// Fully reversed torsional fatigue limit.
    pub t_minus1_mpa: f64,
}

impl Material {
    /// Additively manufactured Ti-6Al-4V.
    pub const TI6AL4V: Material = Material {
        young_mpa: 108_800.0,
        poisson: 0.29,
        yield_mpa: 972.0,
        f_minus1_mpa: 454.0,
        t_minus1_mpa: 300.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.young_mpa > 0.0) {
            return Err(Error::InvalidInput(format!(
                "Young's modulus must be positive, got {}",
                self.young_mpa
            )));
        }
        check_poisson(self.poisson)?;
        if !(self.yield_mpa > 0.0 && self.f_minus1_mpa > 0.0 && self.t_minus1_mpa > 0.0) {
            return Err(Error::InvalidInput(
                "strength limits must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Constitutive matrix of the solid in MPa.
    pub fn constitutive(&self, dim: Dim) -> DMatrix<f64> {
        unit_constitutive(dim, self.poisson) * self.young_mpa
    }
}

pub(crate) fn check_poisson(nu: f64) -> Result<()> {
    if nu > 0.0 && nu < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "Poisson's ratio must lie in (0, 0.5), got {nu}"
        )))
    }
}

/// Isotropic constitutive matrix for unit Young's modulus.
///
/// 2D is plane stress with Voigt order `[xx, yy, xy]`; 3D uses
/// `[xx, yy, zz, xy, yz, xz]`. Shear strains are engineering strains.
pub fn unit_constitutive(dim: Dim, nu: f64) -> DMatrix<f64> {
    match dim {
        Dim::Two => {
            let s = 1.0 / (1.0 - nu * nu);
            DMatrix::from_row_slice(
                3,
                3,
                &[s, s * nu, 0.0, s * nu, s, 0.0, 0.0, 0.0, s * (1.0 - nu) / 2.0],
            )
        }
        Dim::Three => {
            let lambda = nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
            let g = 1.0 / (2.0 * (1.0 + nu));
            let mut c = DMatrix::zeros(6, 6);
            for i in 0..3 {
                for j in 0..3 {
                    c[(i, j)] = lambda;
                }
                c[(i, i)] = lambda + 2.0 * g;
                c[(i + 3, i + 3)] = g;
            }
            c
        }
    }
}
