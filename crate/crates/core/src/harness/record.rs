use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = [
    "trial",
    "episode",
    "success",
    "moving_avg",
    "cumulative_steps",
    "eta",
    "exact_J",
];

/// One logged point of a training run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub trial: usize,
    /// Episode index, or evaluation index for non-episodic environments.
    pub episode: usize,
    pub success: bool,
    pub moving_avg: f64,
    pub cumulative_steps: u64,
    pub eta: f64,
    pub exact_j: Option<f64>,
}

/// Reals are written with 17 significant digits so they round-trip exactly.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.episode.to_string(),
            u8::from(r.success).to_string(),
            format_real(r.moving_avg),
            r.cumulative_steps.to_string(),
            format_real(r.eta),
            r.exact_j.map(format_real).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a CSV written by [`write_csv`], checking the header.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::Config(format!("unexpected CSV header {header:?}")));
    }
    let bad = |line: usize, what: &str| Error::Config(format!("line {line}: bad {what}"));
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let field = |k: usize| row.get(k).unwrap_or("");
        out.push(RunRecord {
            trial: field(0).parse().map_err(|_| bad(line, "trial"))?,
            episode: field(1).parse().map_err(|_| bad(line, "episode"))?,
            success: match field(2) {
                "0" => false,
                "1" => true,
                _ => return Err(bad(line, "success")),
            },
            moving_avg: field(3).parse().map_err(|_| bad(line, "moving_avg"))?,
            cumulative_steps: field(4).parse().map_err(|_| bad(line, "cumulative_steps"))?,
            eta: field(5).parse().map_err(|_| bad(line, "eta"))?,
            exact_j: match field(6) {
                "" => None,
                v => Some(v.parse().map_err(|_| bad(line, "exact_J"))?),
            },
        });
    }
    Ok(out)
}
