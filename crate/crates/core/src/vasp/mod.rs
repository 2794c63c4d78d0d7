//! VASP-convention file formats: POSCAR, INCAR, KPOINTS, POTCAR metadata and OUTCAR extraction.

pub mod bandgap;
pub mod incar;
pub mod kpoints;
pub mod outcar;
pub mod poscar;
pub mod potcar;
pub mod structure;

pub use bandgap::{band_gap_from_eigenvalues, band_gap_from_table, BandGap};
pub use incar::{parse_incar, write_incar, IncarDocument, IncarEntry, IncarError, TagValue, ValueKind};
pub use kpoints::{parse_kpoints, write_kpoints, KpointsError, KpointsMode, KpointsSpec, LabeledKpoint, LinePath};
pub use outcar::{
    extract_outcar_summary, extract_quantities, Capture, CaptureType, Eigenvalue, ExtractError, ExtractionPattern, OutcarSummary,
};
pub use poscar::{parse_poscar, write_poscar, PoscarError};
pub use potcar::{parse_potcar, PotcarError, PotcarMeta};
pub use structure::{CoordinateMode, CrystalStructure, Mat3, StructureError, Vec3};
