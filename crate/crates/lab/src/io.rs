//! Field files.
//!
//! A field file is one text line `d n_x n_t T components` followed by the raw
//! samples as little-endian `f64`, in the in-memory order of [`Field`]
//! (component, then time, then space with the first axis fastest).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use onsagerlab_core::{Field, Grid};

use crate::error::{LabError, Result};

pub fn write_field(path: &Path, field: &Field) -> Result<()> {
    let grid = field.grid();
    if field.window() != grid.full_window() {
        return Err(LabError::Format {
            path: path.into(),
            reason: format!(
                "window {:?} is partial; only full-window fields are stored",
                field.window()
            ),
        });
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "{} {} {} {} {}",
        grid.dim(),
        grid.n_x(),
        grid.n_t(),
        grid.horizon(),
        field.components()
    )?;
    for v in field.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<Field> {
    let bad = |reason: String| LabError::Format {
        path: path.into(),
        reason,
    };
    let mut input = BufReader::new(File::open(path)?);
    let mut header = String::new();
    input.read_line(&mut header)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 5 {
        return Err(bad(format!(
            "header {:?} does not have five entries",
            header.trim_end()
        )));
    }
    let int = |k: usize, name: &str| -> Result<usize> {
        parts[k]
            .parse()
            .map_err(|_| bad(format!("{name} = {:?} is not a count", parts[k])))
    };
    let (dim, n_x, n_t, components) = (int(0, "d")?, int(1, "n_x")?, int(2, "n_t")?, int(4, "components")?);
    let horizon: f64 = parts[3]
        .parse()
        .map_err(|_| bad(format!("T = {:?} is not a number", parts[3])))?;
    let grid = Grid::new(dim, n_x, n_t, horizon)?;
    let expected = components * n_t * grid.n_space();
    let mut raw = Vec::with_capacity(expected * 8);
    input.read_to_end(&mut raw)?;
    if raw.len() != expected * 8 {
        return Err(bad(format!("{} payload bytes, expected {}", raw.len(), expected * 8)));
    }
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of eight")))
        .collect();
    Ok(Field::from_values(grid, components, values)?)
}

/// One row per sample: `t, x1[, x2], c0, c1, ..`. Meant for small fields.
pub fn write_field_csv(path: &Path, field: &Field) -> Result<()> {
    let grid = field.grid();
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["t".to_string(), "x1".to_string()];
    if grid.dim() == 2 {
        head.push("x2".into());
    }
    head.extend((0..field.components()).map(|c| format!("c{c}")));
    w.write_record(&head)?;
    for i in field.window() {
        for s in 0..grid.n_space() {
            let x = grid.point(s);
            let mut row = vec![grid.time(i).to_string(), x[0].to_string()];
            if grid.dim() == 2 {
                row.push(x[1].to_string());
            }
            row.extend((0..field.components()).map(|c| field.get(c, i, s).to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
