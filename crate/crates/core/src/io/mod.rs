//! File formats: IDX and CSV datasets, model documents, and result tables.

mod dataset_csv;
mod idx;
mod model_doc;
mod tables;

pub use dataset_csv::{read_csv_dataset, write_csv_dataset};
pub use idx::{parse_idx_images, parse_idx_labels, read_idx, write_idx, IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC};
pub use model_doc::{load_model, model_from_json, model_to_json, save_model, MODEL_FORMAT_VERSION};
pub use tables::{
    read_records, write_attacks, write_curve, write_origins, write_percentiles, write_pixel_map, write_records,
    AttackRow, RECORD_HEADER,
};
