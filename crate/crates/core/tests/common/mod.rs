//! Generators and independent oracles shared by the integration suites.
#![allow(dead_code)]

pub mod fuzz;

use std::f64::consts::PI;

use matflow::scoring::SoapBasis;
use matflow::sim::{toy_energy_forces, PotentialError, PotentialSurface, ToyPotentialParams};
use matflow::vasp::{CrystalStructure, Mat3, Vec3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    num / den
}

/// Lattice rows of length `lo..hi` with a mild random shear.
pub fn random_lattice(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Mat3 {
    let mut m = [[0.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = rng.random_range(lo..hi);
        for (j, v) in row.iter_mut().enumerate() {
            if j != i {
                *v = rng.random_range(-0.15..0.15) * lo;
            }
        }
    }
    m
}

fn min_image_distance(lattice: &Mat3, a: Vec3, b: Vec3) -> f64 {
    let mut best = f64::INFINITY;
    for i in -1..=1 {
        for j in -1..=1 {
            for k in -1..=1 {
                let d = [0, 1, 2].map(|c| {
                    let f = [b[0] - a[0] + i as f64, b[1] - a[1] + j as f64, b[2] - a[2] + k as f64];
                    f[0] * lattice[0][c] + f[1] * lattice[1][c] + f[2] * lattice[2][c]
                });
                best = best.min((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt());
            }
        }
    }
    best
}

/// Rejection-sampled fractional positions with a minimum pair separation.
fn scatter(rng: &mut ChaCha8Rng, lattice: &Mat3, n: usize, min_sep: f64) -> Vec<Vec3> {
    let mut out: Vec<Vec3> = Vec::with_capacity(n);
    while out.len() < n {
        let p = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
        if out.iter().all(|q| min_image_distance(lattice, *q, p) >= min_sep) {
            out.push(p);
        }
    }
    out
}

/// Two or three species, 4 to 9 atoms, cell edges 4.5 to 7 Å.
pub fn random_structure(rng: &mut ChaCha8Rng) -> CrystalStructure {
    let pool = ["Cu", "O", "Si"];
    let n_species = rng.random_range(2..=3);
    let species: Vec<String> = pool[..n_species].iter().map(|s| s.to_string()).collect();
    let counts: Vec<usize> = (0..n_species).map(|_| rng.random_range(1..=3)).collect();
    let lattice = random_lattice(rng, 4.5, 7.0);
    let n: usize = counts.iter().sum();
    let positions = scatter(rng, &lattice, n, 1.2);
    CrystalStructure::from_fractional("random", lattice, species, counts, positions)
}

/// Uniform random rotation from a normalised Gaussian quaternion.
pub fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Rotates the lattice rows; fractional coordinates ride along.
pub fn rotated(s: &CrystalStructure, r: &Mat3) -> CrystalStructure {
    let mut out = s.to_direct();
    out.lattice = s.lattice.map(|row| [0, 1, 2].map(|i| r[i][0] * row[0] + r[i][1] * row[1] + r[i][2] * row[2]));
    out
}

/// Rigid fractional shift, wrapped back into the cell.
pub fn translated(s: &CrystalStructure, shift: Vec3) -> CrystalStructure {
    let mut out = s.to_direct();
    for p in out.positions.iter_mut() {
        for k in 0..3 {
            p[k] = (p[k] + shift[k]).rem_euclid(1.0);
        }
    }
    out
}

/// Shuffles atoms within each species block.
pub fn permuted_within_species(s: &CrystalStructure, rng: &mut ChaCha8Rng) -> CrystalStructure {
    let mut out = s.clone();
    let mut start = 0;
    for &c in &s.counts {
        out.positions[start..start + c].shuffle(rng);
        start += c;
    }
    out
}

/// Gaussian rattle of every Cartesian coordinate.
pub fn rattled(s: &CrystalStructure, sigma: f64, rng: &mut ChaCha8Rng) -> CrystalStructure {
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let mut cart = s.cartesian_positions();
    for p in cart.iter_mut() {
        for v in p.iter_mut() {
            *v += normal.sample(rng);
        }
    }
    let mut out = s.clone();
    out.set_cartesian_positions(&cart);
    out
}

/// Conventional diamond Si, `n x n x n` cubic cells.
pub fn si_diamond(n: usize) -> CrystalStructure {
    let a = 5.431;
    let basis: [Vec3; 8] = [
        [0.0, 0.0, 0.0],
        [0.5, 0.5, 0.0],
        [0.5, 0.0, 0.5],
        [0.0, 0.5, 0.5],
        [0.25, 0.25, 0.25],
        [0.75, 0.75, 0.25],
        [0.75, 0.25, 0.75],
        [0.25, 0.75, 0.75],
    ];
    let mut positions = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for b in &basis {
                    positions.push([(b[0] + i as f64) / n as f64, (b[1] + j as f64) / n as f64, (b[2] + k as f64) / n as f64]);
                }
            }
        }
    }
    let l = a * n as f64;
    let count = positions.len();
    CrystalStructure::from_fractional(
        "Si diamond",
        [[l, 0.0, 0.0], [0.0, l, 0.0], [0.0, 0.0, l]],
        vec!["Si".into()],
        vec![count],
        positions,
    )
}

/// Two atoms of one species `d` Å apart along z in a 20 Å box.
pub fn dimer_z(species: &str, d: f64) -> CrystalStructure {
    let l = 20.0;
    CrystalStructure::from_fractional(
        "dimer",
        [[l, 0.0, 0.0], [0.0, l, 0.0], [0.0, 0.0, l]],
        vec![species.into()],
        vec![2],
        vec![[0.5, 0.5, 0.4], [0.5, 0.5, 0.4 + d / l]],
    )
}

/// Legendre polynomial by Bonnet's recursion.
pub fn legendre(l: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if l == 0 {
        return 1.0;
    }
    for k in 1..l {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Gauss-Legendre rule on `[a, b]` from Golub-Welsch (eigenvalues of the Jacobi matrix).
pub fn golub_welsch(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let j = nalgebra::DMatrix::<f64>::from_fn(n, n, |r, c| {
        if r + 1 == c || c + 1 == r {
            let k = r.max(c) as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n).map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2))).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let half = 0.5 * (b - a);
    (pairs.iter().map(|p| half * p.0 + 0.5 * (a + b)).collect(), pairs.iter().map(|p| half * p.1).collect())
}

/// Power spectrum of the z-axis dimer by brute-force quadrature of the
/// neighbour density against `g_n(r) Y_l0` on an `(r, cos theta)` product grid.
/// Only `m = 0` survives for an axial density; the azimuth contributes `2 pi`.
pub fn soap_dimer_grid_oracle(basis: &SoapBasis, d: f64, n_r: usize, n_mu: usize) -> Vec<f64> {
    let p = basis.params;
    let (rc, n_max, l_max, s2) = (p.cutoff, p.n_max, p.l_max, p.sigma * p.sigma);
    let fcut = |r: f64| if r < rc { 0.5 * ((PI * r / rc).cos() + 1.0) } else { 0.0 };
    let (rs, wr) = golub_welsch(n_r, 0.0, rc);
    let (mus, wm) = golub_welsch(n_mu, -1.0, 1.0);
    let mut spectrum = vec![0.0; (l_max + 1) * n_max * n_max];
    // site 0 sees its neighbour at +d, site 1 at -d; both include themselves
    for sign in [1.0, -1.0] {
        let mut c = vec![vec![0.0; l_max + 1]; n_max];
        for (ir, &r) in rs.iter().enumerate() {
            let g = basis.eval(r);
            for (im, &mu) in mus.iter().enumerate() {
                let rho = (-(r * r) / (2.0 * s2)).exp() + fcut(d) * (-(r * r + d * d - 2.0 * sign * r * d * mu) / (2.0 * s2)).exp();
                let w = wr[ir] * wm[im] * r * r * 2.0 * PI * rho;
                for l in 0..=l_max {
                    let y = ((2 * l + 1) as f64 / (4.0 * PI)).sqrt() * legendre(l, mu);
                    for n in 0..n_max {
                        c[n][l] += w * g[n] * y;
                    }
                }
            }
        }
        let mut k = 0;
        for l in 0..=l_max {
            let f = (8.0 * PI * PI / (2 * l + 1) as f64).sqrt();
            for n in 0..n_max {
                for n2 in 0..n_max {
                    spectrum[k] += 0.5 * f * c[n][l] * c[n2][l];
                    k += 1;
                }
            }
        }
    }
    spectrum
}

/// Central-difference forces `-dE/dx` from energies alone.
pub fn fd_forces(s: &CrystalStructure, p: &ToyPotentialParams, h: f64) -> Vec<Vec3> {
    let cart = s.cartesian_positions();
    let energy = |c: &[Vec3]| {
        let mut t = s.clone();
        t.set_cartesian_positions(c);
        toy_energy_forces(&t, p).expect("energy").0
    };
    let mut out = vec![[0.0; 3]; cart.len()];
    for i in 0..cart.len() {
        for k in 0..3 {
            let mut plus = cart.clone();
            let mut minus = cart.clone();
            plus[i][k] += h;
            minus[i][k] -= h;
            out[i][k] = -(energy(&plus) - energy(&minus)) / (2.0 * h);
        }
    }
    out
}

/// Eight atoms of mixed species in a sheared 12-13 Å cell (minimum image valid at 5.5 Å).
pub fn random_cell_8(rng: &mut ChaCha8Rng) -> CrystalStructure {
    let lattice = random_lattice(rng, 12.5, 13.5);
    let positions = scatter(rng, &lattice, 8, 2.1);
    CrystalStructure::from_fractional("random 8", lattice, vec!["Ar".into(), "Cu".into(), "Si".into()], vec![3, 3, 2], positions)
}

/// `V(x, y) = (x^2 - 1)^2 + k (y - c (x^2 - 1))^2` on the first atom's x, y.
/// Minima at `(+-1, 0)`; the minimum-energy path is the curved valley
/// `y = c (x^2 - 1)` with its saddle at `(0, -c)` and barrier 1.
pub struct DoubleWell {
    pub k: f64,
    pub c: f64,
}

impl DoubleWell {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        (x * x - 1.0).powi(2) + self.k * (y - self.c * (x * x - 1.0)).powi(2)
    }

    /// `max_x min_y V` on a dense grid.
    pub fn grid_barrier(&self, n: usize) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for i in 0..=n {
            let x = -1.0 + 2.0 * i as f64 / n as f64;
            let mut lowest = f64::INFINITY;
            for j in 0..=n {
                let y = -2.0 + 4.0 * j as f64 / n as f64;
                lowest = lowest.min(self.value(x, y));
            }
            best = best.max(lowest);
        }
        best - self.value(-1.0, 0.0)
    }
}

impl PotentialSurface for DoubleWell {
    fn energy_forces(&self, positions: &[Vec3]) -> Result<(f64, Vec<Vec3>), PotentialError> {
        let [x, y, _] = positions[0];
        let u = y - self.c * (x * x - 1.0);
        let dvdx = 4.0 * x * (x * x - 1.0) - 4.0 * self.k * self.c * x * u;
        let dvdy = 2.0 * self.k * u;
        Ok((self.value(x, y), vec![[-dvdx, -dvdy, 0.0]]))
    }
}

/// Climbing-image band between the two minima, straight-line initial guess.
pub fn double_well_neb(well: &DoubleWell, n_images: usize, reversed: bool) -> matflow::sim::NebResult {
    let (a, b) = if reversed { (1.0, -1.0) } else { (-1.0, 1.0) };
    let images: Vec<Vec<[f64; 3]>> = (1..=n_images)
        .map(|i| {
            let t = i as f64 / (n_images + 1) as f64;
            vec![[a + t * (b - a), 0.0, 0.0]]
        })
        .collect();
    let settings = matflow::sim::NebSettings { spring: 1.0, climb: true, force_tol: 1e-3, max_iterations: 5000, dt: 0.02 };
    matflow::sim::run_neb(well, &[[a, 0.0, 0.0]], &[[b, 0.0, 0.0]], images, &[[true, true, false]], &settings).expect("neb runs")
}

// ---- benchmark fixtures ----

pub fn repo_root() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn toy_benchmark_dir() -> std::path::PathBuf {
    repo_root().join("benchmarks/toy")
}

pub fn mock_script(name: &str) -> std::sync::Arc<matflow::llm::MockScript> {
    let p = repo_root().join("benchmarks/mocks").join(format!("{name}.txt"));
    let text = std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    std::sync::Arc::new(matflow::llm::MockScript::parse(&text).unwrap())
}

pub fn mock_env(name: &str) -> matflow::harness::HarnessEnv {
    matflow::harness::HarnessEnv::simulated(matflow::harness::LlmSource::Mock(mock_script(name)))
}
