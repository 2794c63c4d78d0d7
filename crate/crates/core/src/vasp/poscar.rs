//! POSCAR / CONTCAR reader and writer (VASP 5 layout).
//!
//! ```text
//! comment
//! scale
//! a1 a2 a3
//! b1 b2 b3
//! c1 c2 c3
//! El1 El2 ...
//! n1  n2  ...
//! [Selective dynamics]
//! Direct | Cartesian
//! x y z [T F T]
//! ```

use std::fmt::Write as _;

use super::structure::{CoordinateMode, CrystalStructure, StructureError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoscarError {
    #[error("empty POSCAR")]
    Empty,
    #[error("line {line}: malformed scale factor")]
    MalformedScale { line: usize },
    #[error("line {line}: malformed lattice vector")]
    MalformedLattice { line: usize },
    #[error("line {line}: species symbols missing (VASP 4 layout is not supported)")]
    MissingSpecies { line: usize },
    #[error("line {line}: malformed atom counts")]
    MalformedCounts { line: usize },
    #[error("line {line}: unknown coordinate mode {found:?}")]
    UnknownCoordinateMode { line: usize, found: String },
    #[error("expected {expected} coordinate rows, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("line {line}: malformed coordinate row")]
    MalformedCoordinate { line: usize },
    #[error(transparent)]
    Invalid(#[from] StructureError),
}

fn parse_f64(tok: &str) -> Option<f64> {
    tok.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_flag(tok: &str) -> Option<bool> {
    match tok {
        "T" | "t" => Some(true),
        "F" | "f" => Some(false),
        _ => None,
    }
}

pub fn parse_poscar(text: &str) -> Result<CrystalStructure, PoscarError> {
    if text.trim().is_empty() {
        return Err(PoscarError::Empty);
    }
    let lines: Vec<&str> = text.lines().collect();
    // 1-based line numbers in errors
    let line = |i: usize| lines.get(i).copied().unwrap_or("");

    let comment = line(0).trim_end_matches('\r').to_string();

    let scale =
        line(1).split_whitespace().next().and_then(parse_f64).filter(|s| *s > 0.0).ok_or(PoscarError::MalformedScale { line: 2 })?;

    let mut lattice = [[0.0; 3]; 3];
    for (r, row) in lattice.iter_mut().enumerate() {
        let vals: Vec<f64> = line(2 + r).split_whitespace().take(3).map_while(parse_f64).collect();
        if vals.len() != 3 {
            return Err(PoscarError::MalformedLattice { line: 3 + r });
        }
        row.copy_from_slice(&vals);
    }

    let species: Vec<String> = line(5).split_whitespace().map(|s| s.to_string()).collect();
    if species.is_empty() || species.iter().any(|s| !s.starts_with(|c: char| c.is_ascii_alphabetic())) {
        return Err(PoscarError::MissingSpecies { line: 6 });
    }
    // symbols like "Fe/abc123" written by some tools carry a POTCAR hash suffix
    let species: Vec<String> = species.into_iter().map(|s| s.split('/').next().unwrap_or("").to_string()).collect();

    let counts: Vec<usize> = line(6)
        .split_whitespace()
        .map(|t| t.parse::<usize>().ok().filter(|&n| n > 0))
        .collect::<Option<Vec<_>>>()
        .ok_or(PoscarError::MalformedCounts { line: 7 })?;
    if counts.len() != species.len() {
        return Err(PoscarError::MalformedCounts { line: 7 });
    }
    let n_atoms = counts.iter().try_fold(0usize, |acc, &n| acc.checked_add(n)).ok_or(PoscarError::MalformedCounts { line: 7 })?;

    let mut idx = 7;
    let selective = line(idx).trim_start().starts_with(['S', 's']);
    if selective {
        idx += 1;
    }
    let mode_line = line(idx).trim();
    let coordinate_mode = match mode_line.chars().next() {
        Some('D' | 'd') => CoordinateMode::Direct,
        Some('C' | 'c' | 'K' | 'k') => CoordinateMode::Cartesian,
        _ => return Err(PoscarError::UnknownCoordinateMode { line: idx + 1, found: mode_line.to_string() }),
    };
    idx += 1;

    let mut positions = Vec::new();
    let mut flags = Vec::new();
    for (offset, row) in lines.iter().skip(idx).enumerate() {
        if positions.len() == n_atoms {
            break;
        }
        let toks: Vec<&str> = row.split_whitespace().collect();
        if toks.is_empty() {
            break;
        }
        let lineno = idx + offset + 1;
        let xyz: Vec<f64> = toks.iter().take(3).map_while(|t| parse_f64(t)).collect();
        if xyz.len() != 3 {
            return Err(PoscarError::MalformedCoordinate { line: lineno });
        }
        positions.push([xyz[0], xyz[1], xyz[2]]);
        if selective {
            let f: Vec<bool> = toks.iter().skip(3).take(3).map_while(|t| parse_flag(t)).collect();
            if f.len() != 3 {
                return Err(PoscarError::MalformedCoordinate { line: lineno });
            }
            flags.push([f[0], f[1], f[2]]);
        }
    }
    if positions.len() != n_atoms {
        return Err(PoscarError::CountMismatch { expected: n_atoms, found: positions.len() });
    }

    let s = CrystalStructure {
        comment,
        scale,
        lattice,
        species,
        counts,
        coordinate_mode,
        positions,
        selective_flags: selective.then_some(flags),
    };
    s.validate()?;
    Ok(s)
}

fn push_row(out: &mut String, v: &[f64; 3]) {
    let _ = write!(out, "{:>22.16}{:>22.16}{:>22.16}", v[0], v[1], v[2]);
}

pub fn write_poscar(s: &CrystalStructure) -> String {
    let mut out = String::new();
    // the comment must stay on one line
    out.push_str(&s.comment.replace(['\n', '\r'], " "));
    out.push('\n');
    let _ = writeln!(out, "{:.16}", s.scale);
    for row in &s.lattice {
        push_row(&mut out, row);
        out.push('\n');
    }
    let width = s.species.iter().map(|x| x.len()).chain(s.counts.iter().map(|c| c.to_string().len())).max().unwrap_or(1) + 3;
    for sp in &s.species {
        let _ = write!(out, "{:>width$}", sp);
    }
    out.push('\n');
    for c in &s.counts {
        let _ = write!(out, "{:>width$}", c);
    }
    out.push('\n');
    if s.selective_flags.is_some() {
        out.push_str("Selective dynamics\n");
    }
    out.push_str(match s.coordinate_mode {
        CoordinateMode::Direct => "Direct\n",
        CoordinateMode::Cartesian => "Cartesian\n",
    });
    for (i, p) in s.positions.iter().enumerate() {
        push_row(&mut out, p);
        if let Some(flags) = &s.selective_flags {
            for f in flags[i] {
                out.push_str(if f { "   T" } else { "   F" });
            }
        }
        out.push('\n');
    }
    out
}
