use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::run::{mean_std, summary_table, ResultRow, HEADER};
use crate::CliError;

pub const CURVE_HEADER: &str = "gamma,gap,gap_std,loss,loss_std,seeds";

fn parse_field<T: std::str::FromStr>(value: &str, path: &Path, line: u64, column: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| {
        CliError::Schema(format!(
            "{}:{line}: column '{column}' has unparseable value '{value}'",
            path.display()
        ))
    })
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, CliError> {
    if !path.is_file() {
        return Err(CliError::Input(format!("results file not found: {}", path.display())));
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Input(e.to_string()))?;
    let header = rdr.headers().map_err(|e| CliError::Schema(e.to_string()))?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(CliError::Schema(format!(
            "{}: expected columns {}, found {}",
            path.display(),
            HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let f = |i: usize| &record[i];
        let split = f(3).to_string();
        if split != "train" && split != "test" {
            return Err(CliError::Schema(format!(
                "{}:{line}: split must be train or test",
                path.display()
            )));
        }
        rows.push(ResultRow {
            algo: f(0).to_string(),
            gamma: parse_field(f(1), path, line, HEADER[1])?,
            seed: parse_field(f(2), path, line, HEADER[2])?,
            split,
            loss: parse_field(f(4), path, line, HEADER[4])?,
            loss_g0: parse_field(f(5), path, line, HEADER[5])?,
            loss_g1: parse_field(f(6), path, line, HEADER[6])?,
            gap: parse_field(f(7), path, line, HEADER[7])?,
            runtime_ms: parse_field(f(8), path, line, HEADER[8])?,
        });
    }
    Ok(rows)
}

/// Keeps the first occurrence of every `(algo, gamma, seed, split)`; returns the
/// number of rows dropped.
pub fn dedupe(rows: Vec<ResultRow>) -> (Vec<ResultRow>, usize) {
    let mut seen = std::collections::HashSet::new();
    let before = rows.len();
    let kept: Vec<ResultRow> = rows
        .into_iter()
        .filter(|r| seen.insert((r.algo.clone(), r.gamma.to_bits(), r.seed, r.split.clone())))
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Per-algorithm curve text: one row per gamma with mean absolute gap and mean loss,
/// from test rows when present.
pub fn curves(rows: &[ResultRow]) -> BTreeMap<String, String> {
    let mut by_algo: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        by_algo.entry(r.algo.clone()).or_default().push(r);
    }
    let mut out = BTreeMap::new();
    for (algo, rs) in by_algo {
        let split = if rs.iter().any(|r| r.split == "test") {
            "test"
        } else {
            "train"
        };
        let mut gammas: Vec<f64> = rs.iter().filter(|r| r.split == split).map(|r| r.gamma).collect();
        gammas.sort_by(f64::total_cmp);
        gammas.dedup();
        let mut text = format!("{CURVE_HEADER}\n");
        for g in gammas {
            let sel: Vec<&&ResultRow> = rs.iter().filter(|r| r.split == split && r.gamma == g).collect();
            let gaps: Vec<f64> = sel.iter().map(|r| r.gap.abs()).collect();
            let losses: Vec<f64> = sel.iter().map(|r| r.loss).collect();
            let (gm, gs) = mean_std(&gaps);
            let (lm, ls) = mean_std(&losses);
            let _ = writeln!(text, "{g},{gm},{gs},{lm},{ls},{}", sel.len());
        }
        out.insert(algo, text);
    }
    out
}

pub fn execute(results: &[PathBuf], out_dir: &Path) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for path in results {
        rows.extend(read_results(path)?);
    }
    let (rows, dropped) = dedupe(rows);
    if dropped > 0 {
        eprintln!("warning: dropped {dropped} duplicate (algo, gamma, seed, split) row(s)");
    }
    std::fs::create_dir_all(out_dir)?;
    for (algo, text) in curves(&rows) {
        let path = out_dir.join(format!("curve_{algo}.csv"));
        std::fs::write(&path, text)?;
        println!("wrote {}", path.display());
    }
    print!("{}", summary_table(&rows));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(algo: &str, gamma: f64, seed: u64, split: &str, loss: f64, gap: f64) -> ResultRow {
        ResultRow {
            algo: algo.into(),
            gamma,
            seed,
            split: split.into(),
            loss,
            loss_g0: 0.0,
            loss_g1: 0.0,
            gap,
            runtime_ms: 0,
        }
    }

    #[test]
    fn dedupe_keeps_first() {
        let rows = vec![
            row("alg2", 0.1, 0, "test", 1.0, 0.1),
            row("alg2", 0.1, 0, "test", 2.0, 0.1),
            row("alg2", 0.1, 0, "train", 3.0, 0.1),
        ];
        let (kept, dropped) = dedupe(rows);
        assert_eq!(dropped, 1);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].loss, 1.0);
    }

    #[test]
    fn curve_rows_per_gamma() {
        let mut rows = Vec::new();
        for algo in ["alg2", "alg3"] {
            for (k, g) in [0.025, 0.05, 0.1, 0.15, 0.2].into_iter().enumerate() {
                for seed in 0..2 {
                    rows.push(row(algo, g, seed, "test", 1.0 - k as f64 * 0.1, -g));
                    rows.push(row(algo, g, seed, "train", 0.0, 0.0));
                }
            }
        }
        let c = curves(&rows);
        assert_eq!(c.len(), 2);
        let lines: Vec<&str> = c["alg2"].lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], CURVE_HEADER);
        assert_eq!(lines[1], "0.025,0.025,0,1,0,2");
    }
}
