use crate::{Mat3, Real, Vec3};

#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub x: Vec3,
    pub v: Vec3,
    /// Deformation gradient.
    pub f: Mat3,
    /// APIC affine velocity matrix.
    pub c: Mat3,
    pub mass: Real,
    pub volume0: Real,
    pub material: usize,
}

impl Particle {
    pub fn at_rest(x: Vec3, mass: Real, volume0: Real, material: usize) -> Self {
        Particle {
            x,
            v: Vec3::zeros(),
            f: Mat3::identity(),
            c: Mat3::zeros(),
            mass,
            volume0,
            material,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
}

impl ParticleSet {
    pub fn new(particles: Vec<Particle>) -> Self {
        Self { particles }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.particles.iter().map(|p| p.x).collect()
    }

    pub fn total_mass(&self) -> Real {
        self.particles.iter().map(|p| p.mass).sum()
    }

    pub fn total_momentum(&self) -> Vec3 {
        self.particles.iter().fold(Vec3::zeros(), |acc, p| acc + p.v * p.mass)
    }

    /// Mass-weighted centroid; zero for an empty set.
    pub fn centroid(&self) -> Vec3 {
        let m = self.total_mass();
        if m == 0.0 {
            return Vec3::zeros();
        }
        self.particles.iter().fold(Vec3::zeros(), |acc, p| acc + p.x * p.mass) / m
    }

    pub fn is_finite(&self) -> bool {
        self.particles.iter().all(|p| {
            p.x.iter().chain(p.v.iter()).chain(p.f.iter()).chain(p.c.iter()).all(|x| x.is_finite())
        })
    }
}
