//! POTCAR as opaque metadata: element order and a digest of the dataset headers.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PotcarMeta {
    pub elements: Vec<String>,
    pub titles: Vec<String>,
    /// Hex SHA-256 over the dataset header lines.
    pub header_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PotcarError {
    #[error("POTCAR contains no datasets")]
    Empty,
    #[error("POTCAR element order {potcar:?} does not cover POSCAR species {poscar:?}")]
    OrderMismatch { potcar: Vec<String>, poscar: Vec<String> },
}

/// `PAW_PBE Pd_pv 06Sep2000` -> `Pd`
fn element_of(title: &str) -> Option<String> {
    let sym = title.split_whitespace().nth(1)?;
    let base = sym.split(['_', '.']).next()?;
    (!base.is_empty()).then(|| base.to_string())
}

/// Each dataset starts with a title line and ends with `End of Dataset`.
pub fn parse_potcar(text: &str) -> Result<PotcarMeta, PotcarError> {
    let mut titles = Vec::new();
    let mut expect_header = true;
    for line in text.lines() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if expect_header {
            titles.push(t.to_string());
            expect_header = false;
        } else if t.starts_with("End of Dataset") {
            expect_header = true;
        }
    }
    let elements: Vec<String> = titles.iter().filter_map(|t| element_of(t)).collect();
    if elements.is_empty() || elements.len() != titles.len() {
        return Err(PotcarError::Empty);
    }
    let mut h = Sha256::new();
    for t in &titles {
        h.update(t.as_bytes());
        h.update(b"\n");
    }
    Ok(PotcarMeta { elements, titles, header_hash: hex::encode(h.finalize()) })
}

impl PotcarMeta {
    /// POSCAR species must appear in POTCAR order (as an order-preserving subsequence).
    pub fn check_species(&self, species: &[String]) -> Result<(), PotcarError> {
        let mut it = self.elements.iter();
        let ok = species.iter().all(|s| it.any(|e| e == s));
        if ok {
            Ok(())
        } else {
            Err(PotcarError::OrderMismatch { potcar: self.elements.clone(), poscar: species.to_vec() })
        }
    }
}
