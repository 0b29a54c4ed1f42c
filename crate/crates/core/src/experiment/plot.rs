//! Plot-ready CSVs derived from the data files of a run.
//!
//! * `rate_curve.csv`: `n, mean_abs_err, stderr`, sorted by `n`, for the
//!   configured scheme.
//! * `ecdf.csv`: `z_value, ecdf, normal_cdf` of the standardized errors,
//!   sorted by `z_value`.
//! * `u_grid.csv`: `s, i, j, u` of the first path's variance integrand.

use std::collections::BTreeMap;
use std::path::Path;

use super::report::{read_csv, ErrorRow, IntegrandRow};
use super::{load_report, Suite};
use crate::stats::{mean_se, normal_cdf, SampleSet, VARIANCE_FLOOR};
use crate::Result;

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the plot files whose source data exist in `dir` and returns their
/// names.
pub fn emit_plotdata(dir: &Path) -> Result<Vec<String>> {
    let report = load_report(dir)?;
    let cfg = &report.config;
    let mut written = Vec::new();

    let rate = dir.join("errors_rate.csv");
    if rate.exists() {
        let mut by_level: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in read_csv::<ErrorRow>(&rate)? {
            if r.scheme == cfg.scheme.label() {
                by_level.entry(r.n).or_default().push(r.raw_error.abs());
            }
        }
        let rows = by_level.iter().map(|(n, e)| {
            let (m, se) = mean_se(e);
            vec![n.to_string(), m.to_string(), se.to_string()]
        });
        write_rows(&dir.join("rate_curve.csv"), &["n", "mean_abs_err", "stderr"], rows)?;
        written.push("rate_curve.csv".to_string());
    }

    let level_file = [Suite::MixedNormal, Suite::VarianceCrosscheck]
        .iter()
        .map(|s| dir.join(format!("errors_{}.csv", s.id())))
        .find(|p| p.exists());
    if let Some(path) = level_file {
        let z: Vec<f64> = read_csv::<ErrorRow>(&path)?
            .iter()
            .filter_map(|r| match r.variance_estimate {
                Some(v) if v > VARIANCE_FLOOR => Some(r.rescaled_error / v.sqrt()),
                _ => None,
            })
            .collect();
        // A degenerate model leaves no standardized errors and a header-only file.
        let ecdf = SampleSet::new(z, "standardized")?.ecdf();
        let rows = ecdf.into_iter().map(|(x, f)| vec![x.to_string(), f.to_string(), normal_cdf(x).to_string()]);
        write_rows(&dir.join("ecdf.csv"), &["z_value", "ecdf", "normal_cdf"], rows)?;
        written.push("ecdf.csv".to_string());
    }

    let integrands = dir.join("integrands.csv");
    if integrands.exists() {
        let rows = read_csv::<IntegrandRow>(&integrands)?
            .into_iter()
            .map(|r| vec![r.s.to_string(), r.i.to_string(), r.j.to_string(), r.u.to_string()]);
        write_rows(&dir.join("u_grid.csv"), &["s", "i", "j", "u"], rows)?;
        written.push("u_grid.csv".to_string());
    }
    Ok(written)
}
