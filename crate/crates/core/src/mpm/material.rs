use serde::{Deserialize, Serialize};

use crate::math::{is_finite_mat, polar_rotation, signed_svd};
use crate::{Error, Mat3, Real, Result};

/// Hyperelastic energy density ψ(F) and the Kirchhoff stress τ = (∂ψ/∂F) Fᵀ.
pub trait ConstitutiveModel {
    fn energy_density(&self, f: &Mat3) -> Real;
    fn kirchhoff_stress(&self, f: &Mat3) -> Mat3;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaterialModel {
    #[default]
    FixedCorotated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    /// Young's modulus [Pa].
    pub youngs_modulus: Real,
    pub poisson_ratio: Real,
    /// Density [kg/m³].
    pub density: Real,
    #[serde(default)]
    pub model: MaterialModel,
}

impl Material {
    pub fn new(name: impl Into<String>, youngs_modulus: Real, poisson_ratio: Real, density: Real) -> Result<Self> {
        let m = Material {
            name: name.into(),
            youngs_modulus,
            poisson_ratio,
            density,
            model: MaterialModel::FixedCorotated,
        };
        let errors = m.violations("material");
        if errors.is_empty() {
            Ok(m)
        } else {
            Err(Error::InvalidInput(errors.join("; ")))
        }
    }

    pub(crate) fn violations(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.youngs_modulus > 0.0 && self.youngs_modulus.is_finite()) {
            out.push(format!("{path}.youngs_modulus: must be > 0 (got {})", self.youngs_modulus));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            out.push(format!("{path}.poisson_ratio: must be in [0, 0.5) (got {})", self.poisson_ratio));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            out.push(format!("{path}.density: must be > 0 (got {})", self.density));
        }
        out
    }

    /// Lamé parameters `(μ, λ)`.
    pub fn lame(&self) -> (Real, Real) {
        let e = self.youngs_modulus;
        let nu = self.poisson_ratio;
        (e / (2.0 * (1.0 + nu)), e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)))
    }

    /// Dilatational wave speed, used for CFL diagnostics.
    pub fn wave_speed(&self) -> Real {
        let (mu, lambda) = self.lame();
        ((lambda + 2.0 * mu) / self.density).sqrt()
    }
}

impl ConstitutiveModel for Material {
    fn energy_density(&self, f: &Mat3) -> Real {
        match self.model {
            MaterialModel::FixedCorotated => {
                let (mu, lambda) = self.lame();
                let (_, sigma, _) = signed_svd(f);
                let j = f.determinant();
                mu * sigma.iter().map(|s| (s - 1.0).powi(2)).sum::<Real>() + 0.5 * lambda * (j - 1.0).powi(2)
            }
        }
    }

    fn kirchhoff_stress(&self, f: &Mat3) -> Mat3 {
        match self.model {
            MaterialModel::FixedCorotated => {
                let (mu, lambda) = self.lame();
                let r = polar_rotation(f);
                let j = f.determinant();
                2.0 * mu * (f - r) * f.transpose() + Mat3::identity() * (lambda * (j - 1.0) * j)
            }
        }
    }
}

/// Kirchhoff stress with input validation.
pub fn compute_stress(f: &Mat3, material: &Material) -> Result<Mat3> {
    if !is_finite_mat(f) {
        return Err(Error::InvalidInput("deformation gradient has non-finite entries".into()));
    }
    if f.determinant() <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "deformation gradient is inverted (det = {})",
            f.determinant()
        )));
    }
    Ok(material.kirchhoff_stress(f))
}

/// Smallest singular value kept when an inverted F is repaired.
pub const MIN_SINGULAR_VALUE: Real = 0.05;

/// Repairs an inverted or degenerate deformation gradient by clamping its
/// signed singular values to at least [`MIN_SINGULAR_VALUE`]. Returns `None`
/// when `det(F) > 0`.
pub fn clamp_inverted(f: &Mat3) -> Option<Mat3> {
    if f.determinant() > 0.0 {
        return None;
    }
    let (u, mut sigma, v) = signed_svd(f);
    for s in sigma.iter_mut() {
        *s = s.max(MIN_SINGULAR_VALUE);
    }
    Some(u * Mat3::from_diagonal(&sigma) * v.transpose())
}
