use std::io::Write;

use super::record::format_real;
use crate::error::Result;
use crate::ppgae::min_feasible_h;

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityRow {
    pub tau_mix: f64,
    /// Minimum epoch length for one epoch, or the reason it could not be found.
    pub h_min: std::result::Result<f64, String>,
}

/// One row per mixing time. Failures are recorded per row.
pub fn feasibility_table(tau_hit: f64, tau_mix_range: &[f64]) -> Vec<FeasibilityRow> {
    tau_mix_range
        .iter()
        .map(|&tau_mix| FeasibilityRow {
            tau_mix,
            h_min: min_feasible_h(tau_mix, tau_hit)
                .map(|(_, h)| h)
                .map_err(|e| e.to_string()),
        })
        .collect()
}

/// Writes `tau_mix,H_min`; failed rows get an empty `H_min`.
pub fn write_feasibility_csv<W: Write>(rows: &[FeasibilityRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau_mix", "H_min"])?;
    for row in rows {
        let h = row.h_min.as_ref().map(|h| format_real(*h)).unwrap_or_default();
        w.write_record([format_real(row.tau_mix), h])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_increase_and_failures_are_kept() {
        let taus: Vec<f64> = (1..=60).map(f64::from).collect();
        let rows = feasibility_table(10.0, &taus);
        assert_eq!(rows.len(), 60);
        let h: Vec<f64> = rows.iter().map(|r| *r.h_min.as_ref().unwrap()).collect();
        assert!(h.windows(2).all(|w| w[0] < w[1]));

        let rows = feasibility_table(10.0, &[1.0, -1.0]);
        assert!(rows[0].h_min.is_ok());
        assert!(rows[1].h_min.is_err());
        let mut buf = Vec::new();
        write_feasibility_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("tau_mix,H_min\n"));
        assert!(text.lines().nth(2).unwrap().ends_with(','));
    }
}
