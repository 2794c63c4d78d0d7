//! Periodic crystal structure as carried by POSCAR/CONTCAR files.

use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Smallest admissible |det| of the scaled lattice, in Å³.
pub const MIN_CELL_VOLUME: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoordinateMode {
    Direct,
    Cartesian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrystalStructure {
    pub comment: String,
    /// Global lattice scale factor.
    pub scale: f64,
    /// Rows are the unscaled basis vectors in Å.
    pub lattice: Mat3,
    pub species: Vec<String>,
    pub counts: Vec<usize>,
    pub coordinate_mode: CoordinateMode,
    /// Stored exactly as given; Direct coordinates are not wrapped.
    pub positions: Vec<Vec3>,
    pub selective_flags: Option<Vec<[bool; 3]>>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StructureError {
    #[error("lattice is singular (|det| = {0:e} Å³)")]
    SingularLattice(f64),
    #[error("scale factor must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("species/count length mismatch ({species} species, {counts} counts)")]
    SpeciesCountMismatch { species: usize, counts: usize },
    #[error("{positions} positions for {expected} declared atoms")]
    PositionCountMismatch { expected: usize, positions: usize },
    #[error("atom counts must be positive")]
    ZeroCount,
    #[error("selective flags given for {flags} atoms, expected {expected}")]
    FlagCountMismatch { expected: usize, flags: usize },
    #[error("non-finite coordinate or lattice component")]
    NonFinite,
}

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn inverse3(m: &Mat3) -> Option<Mat3> {
    let d = det3(m);
    if d.abs() < 1e-300 || !d.is_finite() {
        return None;
    }
    let inv = [
        [
            (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / d,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / d,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / d,
        ],
        [
            (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / d,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / d,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / d,
        ],
        [
            (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / d,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / d,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / d,
        ],
    ];
    Some(inv)
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Row vector `frac` times lattice (rows are basis vectors).
pub fn frac_to_cart(frac: Vec3, lattice: &Mat3) -> Vec3 {
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        *o = frac[0] * lattice[0][k] + frac[1] * lattice[1][k] + frac[2] * lattice[2][k];
    }
    out
}

pub fn cart_to_frac(cart: Vec3, inverse_lattice: &Mat3) -> Vec3 {
    frac_to_cart(cart, inverse_lattice)
}

/// Perpendicular distances between opposite cell faces.
pub fn cell_heights(lattice: &Mat3) -> Vec3 {
    let vol = det3(lattice).abs();
    let [a, b, c] = *lattice;
    [vol / norm(cross(b, c)), vol / norm(cross(c, a)), vol / norm(cross(a, b))]
}

impl CrystalStructure {
    /// Build a Direct-mode structure with scale 1.
    pub fn from_fractional(
        comment: impl Into<String>,
        lattice: Mat3,
        species: Vec<String>,
        counts: Vec<usize>,
        positions: Vec<Vec3>,
    ) -> Self {
        CrystalStructure {
            comment: comment.into(),
            scale: 1.0,
            lattice,
            species,
            counts,
            coordinate_mode: CoordinateMode::Direct,
            positions,
            selective_flags: None,
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.positions.len()
    }

    pub fn validate(&self) -> Result<(), StructureError> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(StructureError::BadScale(self.scale));
        }
        if self.species.len() != self.counts.len() {
            return Err(StructureError::SpeciesCountMismatch { species: self.species.len(), counts: self.counts.len() });
        }
        if self.counts.contains(&0) {
            return Err(StructureError::ZeroCount);
        }
        let expected: usize = self.counts.iter().sum();
        if expected != self.positions.len() {
            return Err(StructureError::PositionCountMismatch { expected, positions: self.positions.len() });
        }
        if let Some(flags) = &self.selective_flags {
            if flags.len() != expected {
                return Err(StructureError::FlagCountMismatch { expected, flags: flags.len() });
            }
        }
        let finite = self.lattice.iter().flatten().chain(self.positions.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(StructureError::NonFinite);
        }
        let det = det3(&self.scaled_lattice());
        if !(det.abs() > MIN_CELL_VOLUME) {
            return Err(StructureError::SingularLattice(det));
        }
        Ok(())
    }

    /// Lattice rows multiplied by the global scale.
    pub fn scaled_lattice(&self) -> Mat3 {
        let mut m = self.lattice;
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v *= self.scale;
            }
        }
        m
    }

    pub fn volume(&self) -> f64 {
        det3(&self.scaled_lattice()).abs()
    }

    /// Element symbol of every atom, in position order.
    pub fn atom_species(&self) -> Vec<&str> {
        self.species.iter().zip(&self.counts).flat_map(|(s, &n)| std::iter::repeat_n(s.as_str(), n)).collect()
    }

    pub fn cartesian_positions(&self) -> Vec<Vec3> {
        match self.coordinate_mode {
            CoordinateMode::Direct => {
                let lat = self.scaled_lattice();
                self.positions.iter().map(|&p| frac_to_cart(p, &lat)).collect()
            }
            // Cartesian coordinates are scaled by the global factor as well.
            CoordinateMode::Cartesian => self.positions.iter().map(|p| [p[0] * self.scale, p[1] * self.scale, p[2] * self.scale]).collect(),
        }
    }

    pub fn fractional_positions(&self) -> Vec<Vec3> {
        match self.coordinate_mode {
            CoordinateMode::Direct => self.positions.clone(),
            CoordinateMode::Cartesian => {
                let inv = inverse3(&self.scaled_lattice()).expect("validated lattice is invertible");
                self.cartesian_positions().into_iter().map(|c| cart_to_frac(c, &inv)).collect()
            }
        }
    }

    /// Same structure in Direct mode with scale folded into the lattice.
    pub fn to_direct(&self) -> CrystalStructure {
        CrystalStructure {
            comment: self.comment.clone(),
            scale: 1.0,
            lattice: self.scaled_lattice(),
            species: self.species.clone(),
            counts: self.counts.clone(),
            coordinate_mode: CoordinateMode::Direct,
            positions: self.fractional_positions(),
            selective_flags: self.selective_flags.clone(),
        }
    }

    /// Replace atomic positions with Cartesian coordinates (Å), keeping the current mode.
    pub fn set_cartesian_positions(&mut self, cart: &[Vec3]) {
        match self.coordinate_mode {
            CoordinateMode::Direct => {
                let inv = inverse3(&self.scaled_lattice()).expect("validated lattice is invertible");
                self.positions = cart.iter().map(|&c| cart_to_frac(c, &inv)).collect();
            }
            CoordinateMode::Cartesian => {
                self.positions = cart.iter().map(|c| [c[0] / self.scale, c[1] / self.scale, c[2] / self.scale]).collect();
            }
        }
    }

    /// Explicit wrap of Direct coordinates into [0, 1).
    pub fn wrapped(&self) -> CrystalStructure {
        let mut s = self.to_direct();
        for p in s.positions.iter_mut() {
            for v in p.iter_mut() {
                *v -= v.floor();
                if *v >= 1.0 {
                    *v = 0.0;
                }
            }
        }
        s
    }

    /// Per-coordinate mobility mask (true = free). All free without selective dynamics.
    pub fn mobility(&self) -> Vec<[bool; 3]> {
        match &self.selective_flags {
            Some(f) => f.clone(),
            None => vec![[true; 3]; self.n_atoms()],
        }
    }

    /// Unique species in lexicographic order.
    pub fn species_set(&self) -> Vec<String> {
        let mut s: Vec<String> = self.species.clone();
        s.sort();
        s.dedup();
        s
    }

    /// Reduced chemical formula with species in first-appearance order, e.g. `ZnO`, `Si`.
    pub fn reduced_formula(&self) -> String {
        let mut order: Vec<&str> = Vec::new();
        let mut totals: Vec<usize> = Vec::new();
        for (s, &n) in self.species.iter().zip(&self.counts) {
            match order.iter().position(|o| *o == s) {
                Some(i) => totals[i] += n,
                None => {
                    order.push(s);
                    totals.push(n);
                }
            }
        }
        let g = totals.iter().fold(0, |acc, &n| gcd(acc, n)).max(1);
        order.iter().zip(&totals).map(|(s, &n)| if n / g == 1 { s.to_string() } else { format!("{}{}", s, n / g) }).collect()
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
