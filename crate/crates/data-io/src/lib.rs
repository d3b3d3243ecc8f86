//! IDX image/label ingestion, seeded mini-batching, graymap grids and CSV
//! tables with `# key=value` header comments.

mod batch;
mod csvio;
mod error;
mod idx;
mod pgm;

pub use batch::{batch_count, epoch_order, Batch, Batches};
pub use csvio::{read_csv, write_csv, Cell, CsvTable};
pub use error::{DataError, Result};
pub use idx::{load_idx, load_split, write_idx, IdxDataset, Split, IMAGE_MAGIC, LABEL_MAGIC, SPLIT_FILES};
pub use pgm::{grid_dimensions, write_image_grid};

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const NUM_CLASSES: usize = 10;
