//! Label manifest CSV: `sample_id, patient_id, type, subtype, er, pr, her2, ki67_percent`.
//! Empty cells mean the label is unknown for that sample.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Label, LabelError, Task, TaskSchema};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelRecord {
    pub sample_id: String,
    pub patient_id: String,
    #[serde(rename = "type")]
    pub type_: Option<String>,
    pub subtype: Option<String>,
    pub er: Option<String>,
    pub pr: Option<String>,
    pub her2: Option<String>,
    pub ki67_percent: Option<f64>,
}

impl LabelRecord {
    pub fn label(&self, task: Task) -> Option<Label> {
        let class = |v: &Option<String>| v.clone().map(Label::Class);
        match task {
            Task::Type => class(&self.type_),
            Task::Subtype => class(&self.subtype),
            Task::Er => class(&self.er),
            Task::Pr => class(&self.pr),
            Task::Her2 => class(&self.her2),
            Task::Ki67 => self.ki67_percent.map(Label::Percent),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestLoad {
    pub records: Vec<LabelRecord>,
    /// One line per dropped label.
    pub warnings: Vec<String>,
}

/// Reads and validates a manifest. HER2 1+/2+ labels are dropped with a
/// warning; any other label outside its schema is an error.
pub fn read_manifest(path: &Path) -> Result<ManifestLoad, LabelError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| LabelError::Manifest(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (row, rec) in reader.deserialize::<LabelRecord>().enumerate() {
        let mut rec = rec.map_err(|e| {
            LabelError::Manifest(format!("{} row {}: {e}", path.display(), row + 1))
        })?;
        if matches!(rec.her2.as_deref(), Some("1+") | Some("2+")) {
            warnings.push(format!(
                "sample {}: HER2 level {} not modelled, label dropped",
                rec.sample_id,
                rec.her2.take().unwrap()
            ));
        }
        for task in Task::ALL {
            if let Some(label) = rec.label(task) {
                let schema = TaskSchema::for_task(task);
                super::encode_label(&schema, &label).map_err(|e| {
                    LabelError::Manifest(format!("sample {} {}: {e}", rec.sample_id, task.name()))
                })?;
            }
        }
        records.push(rec);
    }
    Ok(ManifestLoad { records, warnings })
}

pub fn write_manifest(path: &Path, records: &[LabelRecord]) -> Result<(), LabelError> {
    let err = |e: csv::Error| LabelError::Manifest(format!("{}: {e}", path.display()));
    let mut writer = csv::Writer::from_path(path).map_err(err)?;
    for r in records {
        writer.serialize(r).map_err(err)?;
    }
    writer
        .flush()
        .map_err(|e| LabelError::Manifest(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_her2_filter() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        std::fs::write(
            &path,
            "sample_id,patient_id,type,subtype,er,pr,her2,ki67_percent\n\
             S1,P1,CA,LA,+++,++,0,10\n\
             S2,P2,AT,,,,,\n\
             S3,P3,CA,LB,+,-,2+,20\n",
        )
        .unwrap();
        let load = read_manifest(&path).unwrap();
        assert_eq!(load.records.len(), 3);
        assert_eq!(load.warnings.len(), 1);
        assert_eq!(load.records[2].her2, None);
        assert_eq!(load.records[1].subtype, None);
        assert_eq!(
            load.records[0].label(Task::Ki67),
            Some(Label::Percent(10.0))
        );

        let out = dir.path().join("again.csv");
        write_manifest(&out, &load.records).unwrap();
        assert_eq!(read_manifest(&out).unwrap().records, load.records);
    }

    #[test]
    fn invalid_label_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        std::fs::write(
            &path,
            "sample_id,patient_id,type,subtype,er,pr,her2,ki67_percent\nS1,P1,XX,,,,,\n",
        )
        .unwrap();
        assert!(matches!(read_manifest(&path), Err(LabelError::Manifest(_))));
    }
}
