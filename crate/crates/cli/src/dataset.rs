//! On-disk dataset layout: `images/<id>.pgm` (16-bit), `masks/<id>.pgm`
//! (8-bit) and `dataset.csv` with paths relative to the dataset directory.

use std::fs;
use std::path::Path;

use promptevo::phantom::{load_mask_pgm, load_pgm, save_mask_pgm, save_pgm};
use promptevo::{Dataset, Sample};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Context};

pub const INDEX_FILE: &str = "dataset.csv";

#[derive(Serialize, Deserialize, Debug)]
struct Row {
    id: String,
    image_path: String,
    mask_path: String,
    split: String,
}

pub fn write_dataset(data: &Dataset, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir.join("images")).context(dir.display())?;
    fs::create_dir_all(dir.join("masks")).context(dir.display())?;
    let index = dir.join(INDEX_FILE);
    let mut w = csv::Writer::from_path(&index).context(index.display())?;
    for (split, samples) in [("train", &data.train), ("val", &data.val), ("test", &data.test)] {
        for s in samples {
            let row = Row {
                id: s.id.clone(),
                image_path: format!("images/{}.pgm", s.id),
                mask_path: format!("masks/{}.pgm", s.id),
                split: split.to_string(),
            };
            save_pgm(&s.image, dir.join(&row.image_path))?;
            save_mask_pgm(&s.gt, dir.join(&row.mask_path))?;
            w.serialize(&row)?;
        }
    }
    w.flush().context(index.display())?;
    Ok(())
}

fn read_index(dir: &Path) -> CliResult<Vec<Row>> {
    let index = dir.join(INDEX_FILE);
    if !index.is_file() {
        return Err(CliError::data(format!("no dataset index at {}", index.display())));
    }
    let mut r = csv::Reader::from_path(&index).context(index.display())?;
    r.deserialize().collect::<Result<Vec<Row>, _>>().context(index.display())
}

fn load_row(dir: &Path, row: &Row) -> CliResult<Sample> {
    let image = load_pgm(dir.join(&row.image_path))?;
    let gt = load_mask_pgm(dir.join(&row.mask_path))?;
    Sample::new(row.id.clone(), image, gt).context(&row.id)
}

/// Samples of one split, in index order.
pub fn load_split(dir: &Path, split: &str) -> CliResult<Vec<Sample>> {
    read_index(dir)?
        .iter()
        .filter(|r| r.split == split)
        .map(|r| load_row(dir, r))
        .collect()
}

/// Samples with the given ids, in the order asked for.
pub fn load_ids(dir: &Path, ids: &[String]) -> CliResult<Vec<Sample>> {
    let rows = read_index(dir)?;
    ids.iter()
        .map(|id| {
            let row = rows
                .iter()
                .find(|r| &r.id == id)
                .ok_or_else(|| CliError::data(format!("no sample with id {id:?}")))?;
            load_row(dir, row)
        })
        .collect()
}

pub fn load_dataset(dir: &Path) -> CliResult<Dataset> {
    Ok(Dataset {
        train: load_split(dir, "train")?,
        val: load_split(dir, "val")?,
        test: load_split(dir, "test")?,
    })
}
