//! Panel ingestion: CSV parsing, calendar validation and gap resolution.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{MarketClass, Series};

/// How missing cells are resolved after parsing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    /// Copy the previous row's value; leading gaps drop their rows.
    #[default]
    ForwardFill,
    /// Drop any row with at least one missing cell.
    DropRow,
}

impl std::str::FromStr for MissingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ffill" | "forward-fill" => Ok(MissingPolicy::ForwardFill),
            "drop" | "drop-row" => Ok(MissingPolicy::DropRow),
            other => Err(Error::InvalidInput(format!(
                "unknown missing-data policy {other:?} (expected ffill or drop)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub missing: MissingPolicy,
    /// Sidecar CSV with columns `id,label,class`.
    pub metadata: Option<PathBuf>,
}

/// One gap-resolution step taken while aligning the panel.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum GapAction {
    ForwardFilled { series: String, date: NaiveDate },
    DroppedRow { date: NaiveDate, reason: String },
}

impl fmt::Display for GapAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GapAction::ForwardFilled { series, date } => {
                write!(f, "forward-filled {series} on {date}")
            }
            GapAction::DroppedRow { date, reason } => write!(f, "dropped row {date}: {reason}"),
        }
    }
}

/// Series aligned on a common, strictly increasing calendar.
#[derive(Debug, Clone)]
pub struct Panel {
    series: Vec<Series>,
    calendar: Vec<NaiveDate>,
    actions: Vec<GapAction>,
}

impl Panel {
    pub fn new(series: Vec<Series>, calendar: Vec<NaiveDate>) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::InvalidInput("panel has no series".into()));
        }
        let mut seen = HashSet::new();
        for s in &series {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate series id {}", s.id)));
            }
            if s.len() != calendar.len() {
                return Err(Error::InvalidInput(format!(
                    "series {} has {} values but the calendar has {} dates",
                    s.id,
                    s.len(),
                    calendar.len()
                )));
            }
        }
        if let Some(w) = calendar.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "calendar is not strictly increasing at {}",
                w[1]
            )));
        }
        Ok(Self {
            series,
            calendar,
            actions: Vec::new(),
        })
    }

    /// Builds a panel on a synthetic daily calendar starting 2000-01-01.
    pub fn with_synthetic_calendar(series: Vec<Series>) -> Result<Self> {
        let len = series.first().map(|s| s.len()).unwrap_or(0);
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        let calendar = start.iter_days().take(len).collect();
        Self::new(series, calendar)
    }

    pub fn series(&self) -> &[Series] {
        &self.series
    }

    pub fn calendar(&self) -> &[NaiveDate] {
        &self.calendar
    }

    pub fn actions(&self) -> &[GapAction] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.calendar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calendar.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.series.iter().map(|s| s.id.as_str()).collect()
    }

    pub fn log_transform(&self) -> Result<Panel> {
        let series = self
            .series
            .iter()
            .map(Series::log_transform)
            .collect::<Result<Vec<_>>>()?;
        Ok(Panel {
            series,
            calendar: self.calendar.clone(),
            actions: self.actions.clone(),
        })
    }

    /// Writes the panel in the ingest CSV schema.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["date".to_string()];
        header.extend(self.series.iter().map(|s| s.id.clone()));
        w.write_record(&header)?;
        for (row, date) in self.calendar.iter().enumerate() {
            let mut record = vec![date.format("%Y-%m-%d").to_string()];
            record.extend(self.series.iter().map(|s| s.values()[row].to_string()));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Writes the `id,label,class` sidecar for this panel.
    pub fn write_metadata(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["id", "label", "class"])?;
        for s in &self.series {
            w.write_record([s.id.as_str(), s.label.as_str(), &s.class.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim(),
        "" | "NA" | "N/A" | "#N/A" | "NaN" | "nan" | "null" | "NULL" | "."
    )
}

fn parse_date(cell: &str) -> Option<NaiveDate> {
    let cell = cell.trim();
    NaiveDate::parse_from_str(cell, "%Y-%m-%d").ok().or_else(|| {
        cell.get(..10)
            .and_then(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").ok())
    })
}

#[derive(Debug, Clone, Deserialize)]
struct MetadataRow {
    id: String,
    label: Option<String>,
    class: Option<String>,
}

/// Reads an `id,label,class` sidecar file.
pub fn load_metadata(path: &Path) -> Result<BTreeMap<String, (String, MarketClass)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = BTreeMap::new();
    for row in reader.deserialize::<MetadataRow>() {
        let row = row?;
        let class = match row.class.as_deref() {
            Some(c) => c.parse()?,
            None => MarketClass::Unknown,
        };
        let label = row.label.filter(|l| !l.is_empty()).unwrap_or_else(|| row.id.clone());
        out.insert(row.id, (label, class));
    }
    Ok(out)
}

/// Loads a panel from the `date,<id>,<id>,...` CSV schema.
pub fn load_panel(path: &Path, options: &IngestOptions) -> Result<Panel> {
    let malformed = |line: u64, reason: String| Error::MalformedCsv {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
            _ => Error::Csv(e),
        })?;
    let header = reader.headers()?.clone();
    if header.len() < 2 {
        return Err(malformed(1, "expected a date column and at least one series".into()));
    }
    if !header[0].trim().eq_ignore_ascii_case("date") {
        return Err(malformed(
            1,
            format!("first column must be `date`, found {:?}", &header[0]),
        ));
    }
    let ids: Vec<String> = header.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let mut unique = HashSet::new();
    for id in &ids {
        if id.is_empty() || !unique.insert(id.as_str()) {
            return Err(malformed(1, format!("empty or duplicate series id {id:?}")));
        }
    }

    let mut dates = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = vec![Vec::new(); ids.len()];
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(malformed(
                line,
                format!("expected {} columns, found {}", header.len(), record.len()),
            ));
        }
        let date =
            parse_date(&record[0]).ok_or_else(|| malformed(line, format!("unparseable date {:?}", &record[0])))?;
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(malformed(
                    line,
                    format!("dates must be strictly increasing ({date} after {prev})"),
                ));
            }
        }
        dates.push(date);
        for (col, cell) in record.iter().skip(1).enumerate() {
            let value = if is_missing(cell) {
                None
            } else {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| malformed(line, format!("unparseable value {cell:?} in column {}", ids[col])))?;
                if !v.is_finite() {
                    return Err(malformed(line, format!("non-finite value in column {}", ids[col])));
                }
                Some(v)
            };
            cells[col].push(value);
        }
    }
    if dates.is_empty() {
        return Err(malformed(2, "no data rows".into()));
    }
    for (col, column) in cells.iter().enumerate() {
        if column.iter().all(Option::is_none) {
            return Err(malformed(1, format!("column {} has no values", ids[col])));
        }
    }

    let mut actions = Vec::new();
    let keep: Vec<usize> = match options.missing {
        MissingPolicy::DropRow => (0..dates.len())
            .filter(|&row| {
                let gaps: Vec<&str> = cells
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c[row].is_none())
                    .map(|(col, _)| ids[col].as_str())
                    .collect();
                if gaps.is_empty() {
                    true
                } else {
                    actions.push(GapAction::DroppedRow {
                        date: dates[row],
                        reason: format!("missing {}", gaps.join(",")),
                    });
                    false
                }
            })
            .collect(),
        MissingPolicy::ForwardFill => {
            let start = cells
                .iter()
                .map(|c| c.iter().position(Option::is_some).unwrap_or(0))
                .max()
                .unwrap_or(0);
            for &date in &dates[..start] {
                actions.push(GapAction::DroppedRow {
                    date,
                    reason: "leading gap cannot be forward-filled".into(),
                });
            }
            for (col, column) in cells.iter_mut().enumerate() {
                for row in start..column.len() {
                    if column[row].is_none() {
                        column[row] = column[row - 1];
                        actions.push(GapAction::ForwardFilled {
                            series: ids[col].clone(),
                            date: dates[row],
                        });
                    }
                }
            }
            (start..dates.len()).collect()
        }
    };
    for action in &actions {
        log::info!("{}: {action}", path.display());
    }

    let metadata = match &options.metadata {
        Some(meta) => load_metadata(meta)?,
        None => BTreeMap::new(),
    };
    let calendar: Vec<NaiveDate> = keep.iter().map(|&r| dates[r]).collect();
    let series = ids
        .iter()
        .zip(&cells)
        .map(|(id, column)| {
            let values = keep.iter().map(|&r| column[r].expect("resolved")).collect();
            let mut s = Series::new(id.clone(), values)?;
            if let Some((label, class)) = metadata.get(id) {
                s = s.with_label(label.clone()).with_class(*class);
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut panel = Panel::new(series, calendar)?;
    panel.actions = actions;
    Ok(panel)
}
