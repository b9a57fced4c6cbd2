use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{best_label, Dataset, SampleRecord, StudySpec};
use crate::config::config_list_hash;
use crate::error::{Error, Result};
use crate::fsio::write_atomic;

/// Contents of the JSON file written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub spec: StudySpec,
    pub config_hash: String,
    pub configs: Vec<String>,
    pub converged: Vec<Vec<bool>>,
    pub n_invalid: usize,
}

/// `runs/study.csv` → `runs/study.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn dataset_csv(ds: &Dataset) -> Result<Vec<u8>> {
    let n = ds.spec.n_nodes;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["sample_id".to_string()];
    header.extend((1..=n).map(|i| format!("d_{i}")));
    header.extend((0..ds.n_conf()).map(|i| format!("J_{i}")));
    header.push("label".into());
    header.push("valid".into());
    w.write_record(&header)?;
    for r in &ds.records {
        let mut row = vec![r.sample_id.to_string()];
        row.extend(r.loads.iter().map(f64::to_string));
        row.extend(r.objectives.iter().map(f64::to_string));
        row.push(r.label.map(|l| l.to_string()).unwrap_or_default());
        row.push(r.is_valid().to_string());
        w.write_record(&row)?;
    }
    w.into_inner()
        .map_err(|e| Error::Validation(format!("csv buffer: {e}")))
}

pub fn dataset_meta(ds: &Dataset) -> DatasetMeta {
    DatasetMeta {
        spec: ds.spec.clone(),
        config_hash: ds.config_hash(),
        configs: ds.configs.iter().map(|g| g.canonical_string()).collect(),
        converged: ds.records.iter().map(|r| r.converged.clone()).collect(),
        n_invalid: ds.n_invalid(),
    }
}

/// Writes the CSV at `csv` and its sidecar JSON.
pub fn write_dataset(ds: &Dataset, csv: &Path) -> Result<()> {
    write_atomic(csv, &dataset_csv(ds)?)?;
    let meta = serde_json::to_vec_pretty(&dataset_meta(ds))?;
    write_atomic(&sidecar_path(csv), &meta)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Validation(format!("bad field {i} on data row {line}")))
}

/// Reads a dataset back; configurations are re-enumerated from the stored
/// spec and checked against the stored hash.
pub fn read_dataset(csv: &Path) -> Result<Dataset> {
    let meta: DatasetMeta = serde_json::from_slice(&std::fs::read(sidecar_path(csv))?)?;
    let configs = meta.spec.family().enumerate()?;
    if config_list_hash(&configs) != meta.config_hash {
        return Err(Error::Validation(
            "configuration list does not match the dataset's hash".into(),
        ));
    }
    let n = meta.spec.n_nodes;
    let n_conf = configs.len();
    let mut reader = csv::Reader::from_path(csv)?;
    let width = reader.headers()?.len();
    if width != 1 + n + n_conf + 2 {
        return Err(Error::Dimension {
            expected: 1 + n + n_conf + 2,
            got: width,
        });
    }
    let mut records = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let loads = (0..n)
            .map(|i| field(&rec, 1 + i, line))
            .collect::<Result<Vec<f64>>>()?;
        let objectives = (0..n_conf)
            .map(|i| field(&rec, 1 + n + i, line))
            .collect::<Result<Vec<f64>>>()?;
        let label_txt = rec.get(1 + n + n_conf).unwrap_or("").trim();
        let label = if label_txt.is_empty() {
            None
        } else {
            Some(field::<usize>(&rec, 1 + n + n_conf, line)?)
        };
        if label != best_label(&objectives) {
            return Err(Error::Validation(format!(
                "label on data row {line} is not the best objective"
            )));
        }
        records.push(SampleRecord {
            sample_id: field(&rec, 0, line)?,
            loads,
            converged: meta
                .converged
                .get(line)
                .cloned()
                .unwrap_or_else(|| vec![false; n_conf]),
            objectives,
            label,
        });
    }
    Ok(Dataset {
        spec: meta.spec,
        configs,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigFamily;

    fn sample_dataset() -> Dataset {
        let spec = StudySpec::new(2, 2, 1);
        Dataset {
            configs: ConfigFamily::single(2).enumerate().unwrap(),
            spec,
            records: vec![
                SampleRecord {
                    sample_id: 0,
                    loads: vec![5.25, 7.125],
                    objectives: vec![3.1, 3.3000000000000003, 2.9],
                    converged: vec![true, false, true],
                    label: Some(1),
                },
                SampleRecord {
                    sample_id: 1,
                    loads: vec![9.0, 4.5],
                    objectives: vec![f64::NAN; 3],
                    converged: vec![false; 3],
                    label: None,
                },
            ],
        }
    }

    fn same(a: &Dataset, b: &Dataset) -> bool {
        a.spec == b.spec
            && a.configs == b.configs
            && a.records.iter().zip(&b.records).all(|(x, y)| {
                x.sample_id == y.sample_id
                    && x.loads == y.loads
                    && x.label == y.label
                    && x.converged == y.converged
                    && x.objectives
                        .iter()
                        .zip(&y.objectives)
                        .all(|(p, q)| p == q || (p.is_nan() && q.is_nan()))
            })
    }

    #[test]
    fn roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        let ds = sample_dataset();
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert!(same(&ds, &back));
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("sample_id,d_1,d_2,J_0,J_1,J_2,label,valid\n"));
        assert!(text.contains(",1,true\n") && text.contains(",,false\n"));
        let meta: DatasetMeta =
            serde_json::from_slice(&std::fs::read(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(meta.n_invalid, 1);
        assert_eq!(meta.configs.len(), 3);
    }

    #[test]
    fn tampered_label_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        write_dataset(&sample_dataset(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replace(",1,true", ",0,true");
        std::fs::write(&path, text).unwrap();
        assert!(read_dataset(&path).is_err());
    }

    #[test]
    fn hash_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        write_dataset(&sample_dataset(), &path).unwrap();
        let side = sidecar_path(&path);
        let mut meta: DatasetMeta = serde_json::from_slice(&std::fs::read(&side).unwrap()).unwrap();
        meta.config_hash = "0".repeat(64);
        std::fs::write(&side, serde_json::to_vec(&meta).unwrap()).unwrap();
        assert!(read_dataset(&path).is_err());
    }
}
