use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{EvalError, SubjectMetrics};

pub const METRIC_COLUMNS: [&str; 6] = ["dice_pen", "dice_core", "prec_pen", "prec_core", "rec_pen", "rec_core"];
pub const CSV_HEADER: &str = "config,dice_pen,dice_core,prec_pen,prec_core,rec_pen,rec_core";

/// Test-set metrics of one fold, one entry per subject.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldSummary {
    pub fold: usize,
    pub subjects: Vec<SubjectMetrics>,
}

impl FoldSummary {
    /// Mean over subjects of each metric column.
    pub fn means(&self) -> Result<[f64; 6], EvalError> {
        if self.subjects.is_empty() {
            return Err(EvalError::Empty(format!("fold {} has no test subjects", self.fold)));
        }
        let mut sum = [0.0f64; 6];
        for s in &self.subjects {
            for (acc, v) in sum.iter_mut().zip(s.row()) {
                *acc += v;
            }
        }
        Ok(sum.map(|v| v / self.subjects.len() as f64))
    }
}

/// `mean ± std` with two decimals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub mean: f64,
    pub std: f64,
}

impl Cell {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Cell { mean, std: var.sqrt() }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

impl FromStr for Cell {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        let bad = || EvalError::Parse(format!("cell `{s}`"));
        let (m, sd) = s.split_once('±').ok_or_else(bad)?;
        Ok(Cell {
            mean: m.trim().parse().map_err(|_| bad())?,
            std: sd.trim().parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub config: String,
    /// In [`METRIC_COLUMNS`] order.
    pub cells: [Cell; 6],
}

impl ReportRow {
    pub fn from_fold_means(config: &str, means: &[[f64; 6]]) -> Result<Self, EvalError> {
        if means.is_empty() {
            return Err(EvalError::Empty("no folds to aggregate".into()));
        }
        let cells = std::array::from_fn(|k| Cell::of(&means.iter().map(|m| m[k]).collect::<Vec<_>>()));
        Ok(ReportRow {
            config: config.to_string(),
            cells,
        })
    }
}

/// One row: mean ± population std across folds of each fold's subject mean.
pub fn aggregate(config: &str, folds: &[FoldSummary]) -> Result<ReportRow, EvalError> {
    let means = folds.iter().map(FoldSummary::means).collect::<Result<Vec<_>, _>>()?;
    ReportRow::from_fold_means(config, &means)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl ReportTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&csv_field(&r.config));
            for c in &r.cells {
                out.push(',');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| Config | Dice Pen. | Dice Core | Precision Pen. | Precision Core | Recall Pen. | Recall Core |\n");
        out.push_str("|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            out.push_str(&format!("| {} |", r.config.replace('|', "\\|")));
            for c in &r.cells {
                out.push_str(&format!(" {c} |"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(EvalError::Parse("report header".into()));
        }
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let (config, rest) = split_config(line)?;
            let cells: Vec<Cell> = rest.split(',').map(str::parse).collect::<Result<_, _>>()?;
            let cells: [Cell; 6] = cells
                .try_into()
                .map_err(|_| EvalError::Parse(format!("row `{line}` does not have 6 cells")))?;
            rows.push(ReportRow { config, cells });
        }
        Ok(ReportTable { rows })
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Markdown => self.to_markdown(),
            ReportFormat::Csv => self.to_csv(),
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn split_config(line: &str) -> Result<(String, &str), EvalError> {
    let bad = || EvalError::Parse(format!("row `{line}`"));
    if let Some(quoted) = line.strip_prefix('"') {
        let mut config = String::new();
        let mut chars = quoted.char_indices().peekable();
        while let Some((i, ch)) = chars.next() {
            if ch == '"' {
                if chars.peek().map(|&(_, c)| c) == Some('"') {
                    chars.next();
                    config.push('"');
                    continue;
                }
                let rest = quoted[i + 1..].strip_prefix(',').ok_or_else(bad)?;
                return Ok((config, rest));
            }
            config.push(ch);
        }
        Err(bad())
    } else {
        let (c, rest) = line.split_once(',').ok_or_else(bad)?;
        Ok((c.to_string(), rest))
    }
}

pub fn emit_report(table: &ReportTable, format: ReportFormat, path: &Path) -> Result<(), EvalError> {
    fs::write(path, table.render(format)).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}
