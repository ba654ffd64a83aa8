//! JSON and CSV report writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use cybertom::eval::{HvtScore, TournamentCell};
use serde::Serialize;

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TournamentRow<'a> {
    network: &'a str,
    blue: String,
    red: String,
    episodes: usize,
    blue_reward: f64,
    win_rate: f64,
    duration: f64,
}

pub fn write_tournament(path: &Path, cells: &[TournamentCell]) -> anyhow::Result<()> {
    let rows: Vec<TournamentRow> = cells
        .iter()
        .map(|c| TournamentRow {
            network: &c.network,
            blue: c.blue.to_string(),
            red: c.red.to_string(),
            episodes: c.episodes,
            blue_reward: c.mean_reward,
            win_rate: c.win_rate,
            duration: c.mean_duration,
        })
        .collect();
    write_csv(path, &rows)
}

/// Confusion counts with a `truth` column followed by one column per
/// predicted node; `normalised` scales each row to proportions.
pub fn write_confusion(path: &Path, score: &HvtScore, normalised: bool) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["truth".to_string()];
    header.extend(score.classes.iter().map(|c| c.to_string()));
    w.write_record(&header)?;
    let scaled = score.row_normalised();
    for (i, class) in score.classes.iter().enumerate() {
        let mut record = vec![class.to_string()];
        if normalised {
            record.extend(scaled[i].iter().map(|x| x.to_string()));
        } else {
            record.extend(score.confusion[i].iter().map(|x| x.to_string()));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
