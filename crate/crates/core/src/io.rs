//! JSON file formats.
//!
//! Complex numbers are `[re, im]` pairs and matrices are arrays of rows.
//! Floats are written in the shortest form that parses back to the same
//! double.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::chi2stat::{ExperimentRecord, GroupCounts};
use crate::error::{Error, Result};
use crate::operators::{validate_density, CMatrix, DensityMatrix, HermitianMatrix};
use crate::povm::{validate_povm_labeled, DesignGroup, MeasurementDesign, Povm};
use crate::simulator::{Seed, SimulationPlan, PRNG_ID};

pub type MatrixJson = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json(m: &CMatrix) -> MatrixJson {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_json(rows: &MatrixJson, dim: usize) -> Result<CMatrix> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Format(format!("matrix is not {dim}x{dim}")));
    }
    Ok(CMatrix::from_fn(dim, dim, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])))
}

fn hermitian_from_json(rows: &MatrixJson, dim: usize) -> Result<HermitianMatrix> {
    HermitianMatrix::new(matrix_from_json(rows, dim)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub dim: usize,
    pub matrix: MatrixJson,
}

impl StateFile {
    pub fn from_state(state: &DensityMatrix) -> Self {
        Self {
            dim: state.dim(),
            matrix: matrix_to_json(state.as_matrix()),
        }
    }

    pub fn to_state(&self) -> Result<DensityMatrix> {
        validate_density(&hermitian_from_json(&self.matrix, self.dim)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PovmFile {
    pub dim: usize,
    pub elements: Vec<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl PovmFile {
    pub fn from_povm(povm: &Povm) -> Self {
        Self {
            dim: povm.dim(),
            elements: povm.elements().iter().map(|e| matrix_to_json(e.as_matrix())).collect(),
            labels: povm.labels().map(<[String]>::to_vec),
        }
    }

    pub fn to_povm(&self) -> Result<Povm> {
        let elements = self
            .elements
            .iter()
            .map(|e| hermitian_from_json(e, self.dim))
            .collect::<Result<Vec<_>>>()?;
        validate_povm_labeled(elements, self.labels.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignGroupFile {
    pub povm: PovmFile,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    pub groups: Vec<DesignGroupFile>,
}

impl DesignFile {
    pub fn from_design(design: &MeasurementDesign) -> Self {
        Self {
            groups: design
                .groups()
                .iter()
                .map(|g| DesignGroupFile {
                    povm: PovmFile::from_povm(&g.povm),
                    fraction: g.fraction,
                })
                .collect(),
        }
    }

    pub fn to_design(&self) -> Result<MeasurementDesign> {
        let groups = self
            .groups
            .iter()
            .map(|g| {
                Ok(DesignGroup {
                    povm: g.povm.to_povm()?,
                    fraction: g.fraction,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MeasurementDesign::new(groups)
    }
}

/// A nested object given inline or as a path relative to the referring file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FileRef<T> {
    Path(String),
    Inline(T),
}

impl<T: DeserializeOwned + Clone> FileRef<T> {
    pub fn resolve(&self, base: &Path) -> Result<T> {
        match self {
            FileRef::Inline(v) => Ok(v.clone()),
            FileRef::Path(p) => read_json(&base.join(p)),
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    parse_json(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Provenance embedded in every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub version: String,
    #[serde(default)]
    pub tolerance_overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub design: FileRef<DesignFile>,
    pub rho: FileRef<StateFile>,
    pub n: u64,
    pub seed: u64,
    #[serde(default)]
    pub prng: Option<String>,
}

fn check_prng(prng: &Option<String>) -> Result<()> {
    match prng {
        Some(p) if p != PRNG_ID => Err(Error::Format(format!(
            "prng \"{p}\" is not supported; this build uses \"{PRNG_ID}\""
        ))),
        _ => Ok(()),
    }
}

impl PlanFile {
    pub fn to_plan(&self, base: &Path) -> Result<SimulationPlan> {
        check_prng(&self.prng)?;
        let design = self.design.resolve(base)?.to_design()?;
        let true_state = self.rho.resolve(base)?.to_state()?;
        if true_state.dim() != design.dim() {
            return Err(Error::DimMismatch {
                expected: design.dim(),
                found: true_state.dim(),
            });
        }
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be positive".into()));
        }
        Ok(SimulationPlan {
            design,
            true_state,
            n_total: self.n,
            seed: Seed(self.seed),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prng: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub design: FileRef<DesignFile>,
    pub groups: Vec<GroupCounts>,
}

impl RecordFile {
    pub fn from_record(record: &ExperimentRecord, seed: Option<u64>, manifest: Option<RunManifest>) -> Self {
        Self {
            manifest,
            prng: seed.map(|_| PRNG_ID.to_string()),
            seed,
            design: FileRef::Inline(DesignFile::from_design(record.design())),
            groups: record.groups().to_vec(),
        }
    }

    pub fn to_record(&self, base: &Path) -> Result<ExperimentRecord> {
        let design = self.design.resolve(base)?.to_design()?;
        ExperimentRecord::new(design, self.groups.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::povm::qubit_six_outcome;

    #[test]
    fn state_round_trip() {
        let s = DensityMatrix::diagonal(&[0.7, 0.3]).unwrap();
        let text = to_json_pretty(&StateFile::from_state(&s)).unwrap();
        let back: StateFile = parse_json(&text).unwrap();
        assert_eq!(back.to_state().unwrap().as_matrix(), s.as_matrix());
    }

    #[test]
    fn state_format_errors() {
        let bad: StateFile = parse_json(r#"{"dim": 2, "matrix": [[[1,0]]]}"#).unwrap();
        assert!(matches!(bad.to_state(), Err(Error::Format(_))));
        let not_psd: StateFile =
            parse_json(r#"{"dim": 2, "matrix": [[[1.5,0],[0,0]],[[0,0],[-0.5,0]]]}"#).unwrap();
        assert!(matches!(not_psd.to_state(), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn design_round_trip_keeps_labels() {
        let design = MeasurementDesign::single(qubit_six_outcome(0.8).unwrap());
        let file = DesignFile::from_design(&design);
        let back: DesignFile = parse_json(&to_json_pretty(&file).unwrap()).unwrap();
        let d = back.to_design().unwrap();
        assert_eq!(d.groups()[0].povm.labels(), design.groups()[0].povm.labels());
        assert_eq!(back, file);
    }

    #[test]
    fn floats_round_trip_exactly() {
        let x = 0.1f64 + 0.2;
        let file = StateFile {
            dim: 1,
            matrix: vec![vec![[x, 1.0 / 3.0]]],
        };
        let back: StateFile = parse_json(&to_json_pretty(&file).unwrap()).unwrap();
        assert_eq!(back.matrix[0][0][0].to_bits(), x.to_bits());
        assert_eq!(back.matrix[0][0][1].to_bits(), (1.0f64 / 3.0).to_bits());
    }

    #[test]
    fn plan_rejects_foreign_prng() {
        let plan = PlanFile {
            design: FileRef::Inline(DesignFile::from_design(&MeasurementDesign::single(
                qubit_six_outcome(1.0).unwrap(),
            ))),
            rho: FileRef::Inline(StateFile::from_state(&DensityMatrix::maximally_mixed(2))),
            n: 10,
            seed: 1,
            prng: Some("mt19937".into()),
        };
        assert!(matches!(plan.to_plan(Path::new(".")), Err(Error::Format(_))));
    }

    #[test]
    fn file_ref_accepts_path_or_object() {
        let r: FileRef<StateFile> = parse_json(r#""state.json""#).unwrap();
        assert_eq!(r, FileRef::Path("state.json".into()));
        let r: FileRef<StateFile> = parse_json(r#"{"dim":1,"matrix":[[[1,0]]]}"#).unwrap();
        assert!(matches!(r, FileRef::Inline(_)));
    }
}
