use std::io::{BufRead, Write};

use super::BackgroundGeometry;
use crate::error::{Error, Result};

const MAGIC: &str = "vortexlab-field";

/// Write `vortexlab-field v1 <genus> <n-or-L> <V>` followed by one grid row per line.
pub fn write_field<W: Write>(geom: &BackgroundGeometry, values: &[f64], mut out: W) -> Result<()> {
    geom.check(values)?;
    writeln!(
        out,
        "{MAGIC} v1 {} {} {:.16e}",
        geom.genus,
        geom.resolution(),
        geom.volume
    )?;
    for row in values.chunks(geom.row_len()) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Read a field dump, checking that its header matches `geom`.
pub fn read_field<R: BufRead>(geom: &BackgroundGeometry, input: R) -> Result<Vec<f64>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty field dump".into()))??;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 5 || parts[0] != MAGIC || parts[1] != "v1" {
        return Err(Error::Parse(format!("bad field header: {header}")));
    }
    let genus: u32 = parts[2]
        .parse()
        .map_err(|_| Error::Parse(format!("bad genus {}", parts[2])))?;
    let res: usize = parts[3]
        .parse()
        .map_err(|_| Error::Parse(format!("bad resolution {}", parts[3])))?;
    let volume: f64 = parts[4]
        .parse()
        .map_err(|_| Error::Parse(format!("bad volume {}", parts[4])))?;
    if genus != geom.genus
        || res != geom.resolution()
        || (volume - geom.volume).abs() > 1e-12 * geom.volume
    {
        return Err(Error::Parse(format!(
            "field dump is for genus {genus}, resolution {res}, V = {volume}; geometry is genus {}, resolution {}, V = {}",
            geom.genus,
            geom.resolution(),
            geom.volume
        )));
    }
    let mut values = Vec::with_capacity(geom.len());
    for line in lines {
        let line = line?;
        for tok in line.split_whitespace() {
            values.push(
                tok.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad value {tok}")))?,
            );
        }
    }
    geom.check(&values)?;
    Ok(values)
}
