//! KPOINTS files: automatic meshes (Gamma / Monkhorst-Pack) and line-mode paths.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KpointsMode {
    GammaCentered,
    MonkhorstPack,
    ExplicitLine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathCoordinates {
    Reciprocal,
    Cartesian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledKpoint {
    pub coords: [f64; 3],
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinePath {
    /// Points generated along each segment.
    pub divisions: usize,
    pub coordinates: PathCoordinates,
    /// Segment endpoints, two per segment.
    pub points: Vec<LabeledKpoint>,
}

impl LinePath {
    pub fn n_segments(&self) -> usize {
        self.points.len() / 2
    }

    pub fn n_kpoints(&self) -> usize {
        self.divisions * self.n_segments()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpointsSpec {
    pub comment: String,
    pub mode: KpointsMode,
    /// Subdivisions along each reciprocal vector; `[1, 1, 1]` in line mode.
    pub mesh: [u32; 3],
    pub shift: [f64; 3],
    pub line_path: Option<LinePath>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KpointsError {
    #[error("unsupported KPOINTS mode {0:?}")]
    UnsupportedMode(String),
    #[error("line {line}: malformed mesh")]
    MalformedMesh { line: usize },
    #[error("line {line}: malformed line-mode path: {reason}")]
    MalformedPath { line: usize, reason: String },
}

impl KpointsSpec {
    pub fn gamma(mesh: [u32; 3]) -> Self {
        KpointsSpec { comment: "Automatic mesh".into(), mode: KpointsMode::GammaCentered, mesh, shift: [0.0; 3], line_path: None }
    }

    /// Number of k-points the backend samples (mesh product or path length).
    pub fn n_kpoints(&self) -> usize {
        match &self.line_path {
            Some(p) => p.n_kpoints(),
            None => self.mesh.iter().map(|&m| m as usize).product(),
        }
    }
}

fn parse_floats(line: &str, n: usize) -> Option<Vec<f64>> {
    let v: Vec<f64> = line.split_whitespace().take(n).map_while(|t| t.parse::<f64>().ok().filter(|x| x.is_finite())).collect();
    (v.len() == n).then_some(v)
}

pub fn parse_kpoints(text: &str) -> Result<KpointsSpec, KpointsError> {
    let lines: Vec<&str> = text.lines().collect();
    let line = |i: usize| lines.get(i).copied().unwrap_or("");
    let comment = line(0).to_string();
    let count_line = line(1).trim();
    let mode_line = line(2).trim();

    match mode_line.chars().next() {
        Some('G' | 'g' | 'M' | 'm') => {
            let mode = if mode_line.starts_with(['G', 'g']) { KpointsMode::GammaCentered } else { KpointsMode::MonkhorstPack };
            if count_line.split_whitespace().next().and_then(|t| t.parse::<i64>().ok()) != Some(0) {
                return Err(KpointsError::MalformedMesh { line: 2 });
            }
            let mesh: Vec<u32> = line(3).split_whitespace().take(3).map_while(|t| t.parse::<u32>().ok().filter(|&m| m >= 1)).collect();
            if mesh.len() != 3 {
                return Err(KpointsError::MalformedMesh { line: 4 });
            }
            let shift = if line(4).trim().is_empty() {
                [0.0; 3]
            } else {
                let s = parse_floats(line(4), 3).ok_or(KpointsError::MalformedMesh { line: 5 })?;
                [s[0], s[1], s[2]]
            };
            Ok(KpointsSpec { comment, mode, mesh: [mesh[0], mesh[1], mesh[2]], shift, line_path: None })
        }
        Some('L' | 'l') => {
            let divisions = count_line
                .split_whitespace()
                .next()
                .and_then(|t| t.parse::<usize>().ok())
                .filter(|&n| n >= 1)
                .ok_or(KpointsError::MalformedPath { line: 2, reason: "division count must be a positive integer".into() })?;
            let coordinates = match line(3).trim().chars().next() {
                Some('R' | 'r' | 'K' | 'k') => PathCoordinates::Reciprocal,
                Some('C' | 'c') => PathCoordinates::Cartesian,
                _ => return Err(KpointsError::MalformedPath { line: 4, reason: "expected Reciprocal or Cartesian".into() }),
            };
            let mut points = Vec::new();
            for (i, row) in lines.iter().enumerate().skip(4) {
                let row = row.trim();
                if row.is_empty() {
                    continue;
                }
                let coords = parse_floats(row, 3).ok_or(KpointsError::MalformedPath { line: i + 1, reason: "bad k-point".into() })?;
                let rest: Vec<&str> = row.split_whitespace().skip(3).filter(|t| *t != "!").collect();
                let label = rest.first().map(|s| s.trim_start_matches('!').to_string()).unwrap_or_default();
                points.push(LabeledKpoint { coords: [coords[0], coords[1], coords[2]], label });
            }
            if points.len() < 2 || points.len() % 2 != 0 {
                return Err(KpointsError::MalformedPath {
                    line: lines.len(),
                    reason: format!("{} endpoints do not form segments", points.len()),
                });
            }
            Ok(KpointsSpec {
                comment,
                mode: KpointsMode::ExplicitLine,
                mesh: [1, 1, 1],
                shift: [0.0; 3],
                line_path: Some(LinePath { divisions, coordinates, points }),
            })
        }
        _ => Err(KpointsError::UnsupportedMode(mode_line.to_string())),
    }
}

pub fn write_kpoints(k: &KpointsSpec) -> String {
    let mut out = String::new();
    out.push_str(&k.comment.replace(['\n', '\r'], " "));
    out.push('\n');
    match &k.line_path {
        Some(path) => {
            let _ = writeln!(out, "{}", path.divisions);
            out.push_str("Line-mode\n");
            out.push_str(match path.coordinates {
                PathCoordinates::Reciprocal => "Reciprocal\n",
                PathCoordinates::Cartesian => "Cartesian\n",
            });
            for (i, p) in path.points.iter().enumerate() {
                if i > 0 && i % 2 == 0 {
                    out.push('\n');
                }
                let _ = write!(out, "{:?} {:?} {:?}", p.coords[0], p.coords[1], p.coords[2]);
                if !p.label.is_empty() {
                    let _ = write!(out, " ! {}", p.label);
                }
                out.push('\n');
            }
        }
        None => {
            out.push_str("0\n");
            out.push_str(match k.mode {
                KpointsMode::MonkhorstPack => "Monkhorst-Pack\n",
                _ => "Gamma\n",
            });
            let _ = writeln!(out, "{} {} {}", k.mesh[0], k.mesh[1], k.mesh[2]);
            let _ = writeln!(out, "{:?} {:?} {:?}", k.shift[0], k.shift[1], k.shift[2]);
        }
    }
    out
}
