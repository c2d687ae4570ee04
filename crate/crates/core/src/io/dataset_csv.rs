use std::path::Path;

use crate::classifier::{ImageShape, LabeledDataset};
use crate::error::{Error, Result};

/// Reads a headerless CSV of `label,v1,…,vn` rows with values in `[0, 1]`.
///
/// Values follow the [`ImageShape`] layout: channel-major, each channel
/// row-major. A 32×32 RGB image is therefore 1024 red values, then 1024
/// green, then 1024 blue.
pub fn read_csv_dataset(path: impl AsRef<Path>, shape: ImageShape) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        if row.len() != shape.len() + 1 {
            return Err(Error::Format(format!(
                "row {} has {} fields, expected a label and {} values",
                line + 1,
                row.len(),
                shape.len()
            )));
        }
        let label = row[0]
            .trim()
            .parse::<usize>()
            .map_err(|e| Error::Format(format!("row {}: bad label `{}`: {e}", line + 1, &row[0])))?;
        let values = row
            .iter()
            .skip(1)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {}: bad value `{v}`: {e}", line + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        labels.push(label);
        images.push(values);
    }
    LabeledDataset::new(images, labels, shape)
}

pub fn write_csv_dataset(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..data.len() {
        let mut row = vec![data.label(i).to_string()];
        row.extend(data.image(i).iter().map(|v| v.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_rgb() {
        let shape = ImageShape::new(1, 2, 3);
        let data = LabeledDataset::new(
            vec![vec![0.0, 0.1, 0.2, 0.3, 0.4, 1.0], vec![1.0 / 3.0; 6]],
            vec![9, 0],
            shape,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv_dataset(&data, &path).unwrap();
        assert_eq!(read_csv_dataset(&path, shape).unwrap(), data);
    }

    #[test]
    fn rejects_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let shape = ImageShape::flat(2);
        std::fs::write(&path, "1,0.5\n").unwrap();
        assert!(read_csv_dataset(&path, shape).is_err());
        std::fs::write(&path, "x,0.5,0.5\n").unwrap();
        assert!(read_csv_dataset(&path, shape).is_err());
        std::fs::write(&path, "1,0.5,2.0\n").unwrap();
        assert!(read_csv_dataset(&path, shape).is_err());
    }
}
