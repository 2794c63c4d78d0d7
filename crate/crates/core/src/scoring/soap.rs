//! Smooth Overlap of Atomic Positions power spectrum, site-averaged.
//!
//! Neighbour density around each site `i`, per species `Z`:
//!
//! ```text
//! rho_i^Z(r) = sum_{j in Z, r_ij < rc} f_cut(r_ij) exp(-|r - r_ij|^2 / (2 sigma^2))
//! ```
//!
//! with the centre atom included (`r_ii = 0`) and
//! `f_cut(r) = (cos(pi r / rc) + 1) / 2`. The density is expanded as
//! `c_nlm = integral g_n(r) Y_lm(r^) rho(r) d^3r` in real spherical harmonics
//! and `n_max` radial functions `g_n`: Gaussians of width `rc / n_max` centred
//! at `rc k / n_max`, Loewdin-orthonormalised with weight `r^2` on `[0, rc]`.
//! The angular integral is analytic (plane-wave style expansion of a displaced
//! Gaussian in modified spherical Bessel functions); the radial one uses
//! Gauss-Legendre quadrature.
//!
//! Power spectrum per species pair `a <= b`:
//! `p_nn'l = sqrt(8 pi^2 / (2l + 1)) sum_m c^a_nlm c^b_n'lm`.
//! Layout: pairs in lexicographic order, then `l`, then `n`, then `n'`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::vasp::structure::{cell_heights, norm, Vec3};
use crate::vasp::CrystalStructure;

/// Quadrature nodes for every radial integral.
const N_QUAD: usize = 100;
/// Below this argument the modified Bessel functions come from their power series.
const SERIES_LIMIT: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoapParams {
    /// Å
    pub cutoff: f64,
    pub n_max: usize,
    pub l_max: usize,
    /// Å
    pub sigma: f64,
}

impl Default for SoapParams {
    fn default() -> Self {
        SoapParams { cutoff: 5.0, n_max: 8, l_max: 6, sigma: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SoapError {
    #[error("structure has no atoms")]
    EmptyStructure,
    #[error("invalid SOAP parameters: {0}")]
    InvalidParams(String),
    #[error("descriptor layouts differ")]
    LayoutMismatch,
    #[error("descriptor has zero norm")]
    ZeroNorm,
    #[error("radial basis overlap matrix is singular")]
    SingularBasis,
    #[error("structure has a degenerate cell")]
    DegenerateCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoapVector {
    pub species_pairs: Vec<(String, String)>,
    pub n_max: usize,
    pub l_max: usize,
    pub components: Vec<f64>,
}

impl SoapVector {
    pub fn block_len(&self) -> usize {
        (self.l_max + 1) * self.n_max * self.n_max
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Re-express on `pairs` (a superset layout), zero-filling absent pairs.
    pub fn expand_to(&self, pairs: &[(String, String)]) -> Result<SoapVector, SoapError> {
        let bl = self.block_len();
        let mut components = vec![0.0; pairs.len() * bl];
        for (k, pair) in self.species_pairs.iter().enumerate() {
            let dst = pairs.iter().position(|p| p == pair).ok_or(SoapError::LayoutMismatch)?;
            components[dst * bl..(dst + 1) * bl].copy_from_slice(&self.components[k * bl..(k + 1) * bl]);
        }
        Ok(SoapVector { species_pairs: pairs.to_vec(), n_max: self.n_max, l_max: self.l_max, components })
    }
}

/// Orthonormal radial functions tabulated on the quadrature grid.
#[derive(Debug, Clone)]
pub struct SoapBasis {
    pub params: SoapParams,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `g[n][q]` at quadrature node `q`.
    g: Vec<Vec<f64>>,
    /// Loewdin transform applied to the primitive Gaussians.
    transform: DMatrix<f64>,
}

/// Gauss-Legendre nodes and weights on `[a, b]`, `n >= 1`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(x), p0 = P_{n-1}(x)
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = 0.5 * (b - a) * x + 0.5 * (b + a);
        weights[i] = (b - a) / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

impl SoapBasis {
    pub fn new(params: SoapParams) -> Result<Self, SoapError> {
        let SoapParams { cutoff, n_max, l_max: _, sigma } = params;
        if !(cutoff > 0.0 && cutoff.is_finite() && sigma > 0.0 && sigma.is_finite()) || n_max == 0 {
            return Err(SoapError::InvalidParams(format!("{params:?}")));
        }
        let width = cutoff / n_max as f64;
        let primitive = |k: usize, r: f64| {
            let c = cutoff * k as f64 / n_max as f64;
            (-(r - c).powi(2) / (2.0 * width * width)).exp()
        };
        let (nodes, weights) = gauss_legendre(N_QUAD, 0.0, cutoff);
        let phi: Vec<Vec<f64>> = (0..n_max).map(|k| nodes.iter().map(|&r| primitive(k, r)).collect()).collect();
        let s = DMatrix::<f64>::from_fn(n_max, n_max, |a, b| {
            (0..N_QUAD).map(|q| weights[q] * nodes[q] * nodes[q] * phi[a][q] * phi[b][q]).sum()
        });
        let eig = s.symmetric_eigen();
        if eig.eigenvalues.iter().any(|&v| v <= 1e-12 * eig.eigenvalues.max()) {
            return Err(SoapError::SingularBasis);
        }
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v: f64| 1.0 / v.sqrt()));
        let transform: DMatrix<f64> = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
        let g = (0..n_max).map(|n| (0..N_QUAD).map(|q| (0..n_max).map(|k| transform[(n, k)] * phi[k][q]).sum()).collect()).collect();
        Ok(SoapBasis { params, nodes, weights, g, transform })
    }

    /// Radial functions `g_0(r) .. g_{n_max-1}(r)`, zero outside `[0, rc]`.
    pub fn eval(&self, r: f64) -> Vec<f64> {
        let SoapParams { cutoff, n_max, .. } = self.params;
        if !(0.0..=cutoff).contains(&r) {
            return vec![0.0; n_max];
        }
        let width = cutoff / n_max as f64;
        let phi: Vec<f64> = (0..n_max).map(|k| (-(r - cutoff * k as f64 / n_max as f64).powi(2) / (2.0 * width * width)).exp()).collect();
        (0..n_max).map(|n| (0..n_max).map(|k| self.transform[(n, k)] * phi[k]).sum()).collect()
    }

    /// `I_nl(d) = integral_0^rc g_n(r) r^2 exp(-(r^2 + d^2) / 2 sigma^2) i_l(r d / sigma^2) dr`.
    fn radial_integrals(&self, d: f64) -> Vec<Vec<f64>> {
        let SoapParams { n_max, l_max, sigma, .. } = self.params;
        let s2 = sigma * sigma;
        let mut out = vec![vec![0.0; l_max + 1]; n_max];
        let mut il = vec![0.0; l_max + 1];
        for q in 0..N_QUAD {
            let r = self.nodes[q];
            // exp(-(r^2+d^2)/2s2) i_l(x) == exp(-(r-d)^2/2s2) * e^-x i_l(x)
            let envelope = self.weights[q] * r * r * (-(r - d).powi(2) / (2.0 * s2)).exp();
            if envelope == 0.0 {
                continue;
            }
            scaled_sph_bessel_i(r * d / s2, &mut il);
            for n in 0..n_max {
                let gn = self.g[n][q] * envelope;
                for l in 0..=l_max {
                    out[n][l] += gn * il[l];
                }
            }
        }
        out
    }
}

/// `e^-x i_l(x)` for `l = 0..out.len()`, `x >= 0`.
pub fn scaled_sph_bessel_i(x: f64, out: &mut [f64]) {
    let lmax = out.len().saturating_sub(1);
    if x < SERIES_LIMIT.max(2.0 * lmax as f64) {
        bessel_series(x, out)
    } else {
        bessel_upward(x, out)
    }
}

/// i_l(x) = x^l sum_k (x^2/2)^k / (k! (2l+2k+1)!!); all terms positive.
fn bessel_series(x: f64, out: &mut [f64]) {
    let h = 0.5 * x * x;
    let ex = (-x).exp();
    let mut lead = 1.0; // x^l / (2l+1)!!
    for (l, o) in out.iter_mut().enumerate() {
        if l > 0 {
            lead *= x / (2 * l + 1) as f64;
        }
        let mut term = lead;
        let mut sum = lead;
        let mut k = 0;
        while term > sum * 1e-17 && k < 500 {
            k += 1;
            term *= h / (k as f64 * (2 * l + 2 * k + 1) as f64);
            sum += term;
        }
        *o = sum * ex;
    }
}

/// Closed forms for l = 0, 1 and upward recurrence; stable while l <= x.
fn bessel_upward(x: f64, out: &mut [f64]) {
    let lmax = out.len().saturating_sub(1);
    let e2 = (-2.0 * x).exp();
    let i0 = (1.0 - e2) / (2.0 * x);
    out[0] = i0;
    if lmax >= 1 {
        out[1] = ((1.0 + e2) / 2.0 - i0) / x;
    }
    for l in 1..lmax {
        out[l + 1] = out[l - 1] - (2 * l + 1) as f64 / x * out[l];
    }
}

/// Real spherical harmonics `Y_lm` of a unit vector, index `l*l + l + m`.
pub fn real_spherical_harmonics(u: Vec3, l_max: usize) -> Vec<f64> {
    let (x, y, z) = (u[0], u[1], u[2]);
    let ct = z.clamp(-1.0, 1.0);
    let st = (x * x + y * y).sqrt();
    let (cp, sp) = if st > 0.0 { (x / st, y / st) } else { (1.0, 0.0) };
    let size = (l_max + 1) * (l_max + 1);
    let mut out = vec![0.0; size];
    // fully normalised associated Legendre functions, pbar[l][m]
    let mut pbar = vec![vec![0.0; l_max + 1]; l_max + 1];
    pbar[0][0] = (1.0 / (4.0 * PI)).sqrt();
    for m in 1..=l_max {
        pbar[m][m] = -((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * st * pbar[m - 1][m - 1];
    }
    for m in 0..l_max {
        pbar[m + 1][m] = ((2 * m + 3) as f64).sqrt() * ct * pbar[m][m];
    }
    for m in 0..=l_max {
        for l in m + 2..=l_max {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            pbar[l][m] = a * (ct * pbar[l - 1][m] - b * pbar[l - 2][m]);
        }
    }
    let (mut cm, mut sm) = (1.0, 0.0); // cos(m phi), sin(m phi)
    for m in 0..=l_max {
        for l in m..=l_max {
            let base = l * l + l;
            if m == 0 {
                out[base] = pbar[l][0];
            } else {
                out[base + m] = std::f64::consts::SQRT_2 * pbar[l][m] * cm;
                out[base - m] = std::f64::consts::SQRT_2 * pbar[l][m] * sm;
            }
        }
        (cm, sm) = (cm * cp - sm * sp, sm * cp + cm * sp);
    }
    out
}

fn cutoff_weight(r: f64, rc: f64) -> f64 {
    if r >= rc {
        0.0
    } else {
        0.5 * ((PI * r / rc).cos() + 1.0)
    }
}

/// Displacements (and species indices) of every periodic image within the cutoff of `center`.
fn neighbours(s: &CrystalStructure, cart: &[Vec3], species_idx: &[usize], center: usize, rc: f64) -> Result<Vec<(usize, Vec3)>, SoapError> {
    let lattice = s.scaled_lattice();
    let h = cell_heights(&lattice);
    if h.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(SoapError::DegenerateCell);
    }
    let reach = h.map(|v| (rc / v).ceil() as i64);
    let c = cart[center];
    let mut out = Vec::new();
    for (j, pos) in cart.iter().enumerate() {
        for a in -reach[0]..=reach[0] {
            for b in -reach[1]..=reach[1] {
                for k in -reach[2]..=reach[2] {
                    let shift = [0, 1, 2].map(|d| a as f64 * lattice[0][d] + b as f64 * lattice[1][d] + k as f64 * lattice[2][d]);
                    let v = [0, 1, 2].map(|d| pos[d] + shift[d] - c[d]);
                    if norm(v) < rc {
                        out.push((species_idx[j], v));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Expansion coefficients `c[species][n][lm]` of one site.
fn site_coefficients(basis: &SoapBasis, neigh: &[(usize, Vec3)], n_species: usize) -> Vec<Vec<Vec<f64>>> {
    let SoapParams { cutoff, n_max, l_max, .. } = basis.params;
    let nlm = (l_max + 1) * (l_max + 1);
    let mut c = vec![vec![vec![0.0; nlm]; n_max]; n_species];
    for (z, v) in neigh {
        let d = norm(*v);
        let w = 4.0 * PI * cutoff_weight(d, cutoff);
        let y = if d > 1e-12 {
            real_spherical_harmonics(v.map(|x| x / d), l_max)
        } else {
            // only l = 0 survives at the origin, since i_l(0) = 0 for l > 0
            let mut y = vec![0.0; nlm];
            y[0] = (1.0 / (4.0 * PI)).sqrt();
            y
        };
        let radial = basis.radial_integrals(d);
        for n in 0..n_max {
            for l in 0..=l_max {
                let f = w * radial[n][l];
                for m in 0..2 * l + 1 {
                    c[*z][n][l * l + m] += f * y[l * l + m];
                }
            }
        }
    }
    c
}

fn power_spectrum(c: &[Vec<Vec<f64>>], pairs: &[(usize, usize)], n_max: usize, l_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(pairs.len() * (l_max + 1) * n_max * n_max);
    for &(a, b) in pairs {
        for l in 0..=l_max {
            let norm = (8.0 * PI * PI / (2 * l + 1) as f64).sqrt();
            for n in 0..n_max {
                for n2 in 0..n_max {
                    let s: f64 = (l * l..(l + 1) * (l + 1)).map(|i| c[a][n][i] * c[b][n2][i]).sum();
                    out.push(norm * s);
                }
            }
        }
    }
    out
}

/// Per-site power spectra (not averaged), in the layout of [`soap_descriptor`].
pub fn soap_site_spectra(s: &CrystalStructure, basis: &SoapBasis) -> Result<(Vec<(String, String)>, Vec<Vec<f64>>), SoapError> {
    if s.n_atoms() == 0 {
        return Err(SoapError::EmptyStructure);
    }
    let SoapParams { cutoff, n_max, l_max, .. } = basis.params;
    let mut species: Vec<String> = s.species.clone();
    species.sort();
    species.dedup();
    let species_idx: Vec<usize> =
        s.atom_species().iter().map(|z| species.binary_search_by(|x| x.as_str().cmp(z)).expect("known species")).collect();
    let mut pair_idx = Vec::new();
    let mut pair_names = Vec::new();
    for a in 0..species.len() {
        for b in a..species.len() {
            pair_idx.push((a, b));
            pair_names.push((species[a].clone(), species[b].clone()));
        }
    }
    let cart = s.cartesian_positions();
    let sites = (0..s.n_atoms())
        .into_par_iter()
        .map(|i| {
            let neigh = neighbours(s, &cart, &species_idx, i, cutoff)?;
            let c = site_coefficients(basis, &neigh, species.len());
            Ok(power_spectrum(&c, &pair_idx, n_max, l_max))
        })
        .collect::<Result<Vec<_>, SoapError>>()?;
    Ok((pair_names, sites))
}

pub fn soap_descriptor(s: &CrystalStructure, p: &SoapParams) -> Result<SoapVector, SoapError> {
    let basis = SoapBasis::new(*p)?;
    soap_descriptor_with(s, &basis)
}

/// As [`soap_descriptor`] with a prebuilt basis.
pub fn soap_descriptor_with(s: &CrystalStructure, basis: &SoapBasis) -> Result<SoapVector, SoapError> {
    let (species_pairs, sites) = soap_site_spectra(s, basis)?;
    let len = sites[0].len();
    let mut components = vec![0.0; len];
    for site in &sites {
        for (acc, v) in components.iter_mut().zip(site) {
            *acc += v;
        }
    }
    let n = sites.len() as f64;
    components.iter_mut().for_each(|c| *c /= n);
    Ok(SoapVector { species_pairs, n_max: basis.params.n_max, l_max: basis.params.l_max, components })
}

/// Cosine similarity of two descriptors with identical layouts, clamped to `[0, 1]`.
pub fn soap_similarity(a: &SoapVector, b: &SoapVector) -> Result<f64, SoapError> {
    if a.species_pairs != b.species_pairs || a.n_max != b.n_max || a.l_max != b.l_max || a.components.len() != b.components.len() {
        return Err(SoapError::LayoutMismatch);
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(SoapError::ZeroNorm);
    }
    let dot: f64 = a.components.iter().zip(&b.components).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(0.0, 1.0))
}

/// Similarity of two structures over the union of their species-pair layouts.
pub fn structure_similarity(a: &CrystalStructure, b: &CrystalStructure, basis: &SoapBasis) -> Result<f64, SoapError> {
    let da = soap_descriptor_with(a, basis)?;
    let db = soap_descriptor_with(b, basis)?;
    if da.species_pairs == db.species_pairs {
        return soap_similarity(&da, &db);
    }
    let mut pairs = da.species_pairs.clone();
    pairs.extend(db.species_pairs.iter().cloned());
    pairs.sort();
    pairs.dedup();
    soap_similarity(&da.expand_to(&pairs)?, &db.expand_to(&pairs)?)
}
