//! Price-file parsing, calendar alignment, and window slicing.
//!
//! Raw CSV input (long or wide layout) is parsed into per-instrument
//! sparse series, aligned onto a single rectangular date axis, and then
//! sliced into labeled analysis windows. Ingestion is single-threaded;
//! the resulting panels are immutable and safe to share across window
//! workers.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Short unique label identifying one instrument. Identity is stable
/// across windows, which is what makes link matching between two
/// networks meaningful.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstrumentId(String);

impl InstrumentId {
    pub fn new(label: impl Into<String>) -> Self {
        let label = label.into();
        assert!(!label.is_empty(), "instrument label must be non-empty");
        InstrumentId(label)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for InstrumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Input file layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Columns `date,instrument,close`, one observation per row.
    Long,
    /// A `date` column plus one column per instrument; empty cells mean
    /// no observation on that date.
    Wide,
}

/// How heterogeneous trading calendars are reconciled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FillPolicy {
    /// Keep only dates on which every instrument traded.
    #[serde(rename = "intersect")]
    Intersect,
    /// Keep the union of dates, carrying each instrument's most recent
    /// close forward into its missing cells.
    #[serde(rename = "ffill")]
    ForwardFill,
}

/// Whether a panel cell was observed in the input or forward-filled
/// during alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Observed,
    Filled,
}

/// Per-instrument sparse close series keyed by date; the unaligned
/// intermediate between parsing and alignment. Instrument order follows
/// the input (header order for wide, first appearance for long).
#[derive(Debug, Clone, Default)]
pub struct RawSeries {
    order: Vec<InstrumentId>,
    series: BTreeMap<InstrumentId, BTreeMap<NaiveDate, f64>>,
}

impl RawSeries {
    pub fn instruments(&self) -> &[InstrumentId] {
        &self.order
    }

    pub fn observations(&self, id: &InstrumentId) -> Option<&BTreeMap<NaiveDate, f64>> {
        self.series.get(id)
    }

    fn register(&mut self, id: InstrumentId) {
        if !self.series.contains_key(&id) {
            self.order.push(id.clone());
            self.series.insert(id, BTreeMap::new());
        }
    }

    fn insert(&mut self, line: u64, id: &InstrumentId, date: NaiveDate, close: f64) -> Result<()> {
        let entry = self
            .series
            .get_mut(id)
            .expect("instrument registered before insert");
        if entry.insert(date, close).is_some() {
            return Err(Error::DuplicateObservation {
                line,
                date: date.format("%Y-%m-%d").to_string(),
                instrument: id.to_string(),
            });
        }
        Ok(())
    }

    fn total_observations(&self) -> usize {
        self.series.values().map(|s| s.len()).sum()
    }
}

/// Rectangular date x instrument matrix of positive closes.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    instruments: Vec<InstrumentId>,
    closes: Vec<Vec<f64>>,
    provenance: Vec<Vec<Provenance>>,
}

impl PricePanel {
    /// Builds a panel, checking the structural invariants: strictly
    /// increasing dates, rectangular matrix, all closes positive.
    pub fn new(
        dates: Vec<NaiveDate>,
        instruments: Vec<InstrumentId>,
        closes: Vec<Vec<f64>>,
        provenance: Vec<Vec<Provenance>>,
    ) -> Result<Self> {
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "panel dates must be strictly increasing".into(),
            ));
        }
        if closes.len() != dates.len() || provenance.len() != dates.len() {
            return Err(Error::InvalidConfig(
                "panel row count must match date axis".into(),
            ));
        }
        for (row, prov) in closes.iter().zip(&provenance) {
            if row.len() != instruments.len() || prov.len() != instruments.len() {
                return Err(Error::InvalidConfig(
                    "panel rows must match instrument count".into(),
                ));
            }
            if row.iter().any(|c| !c.is_finite() || *c <= 0.0) {
                return Err(Error::InvalidConfig(
                    "panel closes must be finite and positive".into(),
                ));
            }
        }
        Ok(PricePanel {
            dates,
            instruments,
            closes,
            provenance,
        })
    }

    /// Panel with every cell marked observed.
    pub fn from_observed(
        dates: Vec<NaiveDate>,
        instruments: Vec<InstrumentId>,
        closes: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let prov = vec![vec![Provenance::Observed; instruments.len()]; dates.len()];
        PricePanel::new(dates, instruments, closes, prov)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn instruments(&self) -> &[InstrumentId] {
        &self.instruments
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_instruments(&self) -> usize {
        self.instruments.len()
    }

    pub fn close(&self, date_idx: usize, instrument_idx: usize) -> f64 {
        self.closes[date_idx][instrument_idx]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.closes
    }

    pub fn provenance(&self, date_idx: usize, instrument_idx: usize) -> Provenance {
        self.provenance[date_idx][instrument_idx]
    }

    /// Sub-panel over a row range, preserving provenance.
    pub fn slice_rows(&self, start: usize, end: usize) -> PricePanel {
        assert!(start < end && end <= self.dates.len(), "invalid row range");
        PricePanel {
            dates: self.dates[start..end].to_vec(),
            instruments: self.instruments.clone(),
            closes: self.closes[start..end].to_vec(),
            provenance: self.provenance[start..end].to_vec(),
        }
    }

    /// Restricts the panel to the given instruments, keeping panel
    /// order. Labels not present in the panel are ignored; the caller
    /// decides whether to warn about them.
    pub fn subset(&self, keep: &[InstrumentId]) -> Result<PricePanel> {
        let keep_idx: Vec<usize> = self
            .instruments
            .iter()
            .enumerate()
            .filter(|(_, id)| keep.contains(id))
            .map(|(i, _)| i)
            .collect();
        if keep_idx.len() < 2 {
            return Err(Error::TooFewInstruments {
                have: keep_idx.len(),
                need: 2,
            });
        }
        let instruments = keep_idx.iter().map(|&i| self.instruments[i].clone()).collect();
        let closes = self
            .closes
            .iter()
            .map(|row| keep_idx.iter().map(|&i| row[i]).collect())
            .collect();
        let provenance = self
            .provenance
            .iter()
            .map(|row| keep_idx.iter().map(|&i| row[i]).collect())
            .collect();
        Ok(PricePanel {
            dates: self.dates.clone(),
            instruments,
            closes,
            provenance,
        })
    }
}

/// Windowing mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    /// One window per calendar year on the date axis.
    Year,
    /// Fixed-length windows advancing by a fixed step.
    Fixed,
}

/// Analysis-window specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub mode: WindowMode,
    /// Trading days per window (fixed mode).
    pub length: usize,
    /// Trading days between window starts (fixed mode).
    pub step: usize,
    /// Minimum rows for a calendar-year window to be kept.
    pub min_days: usize,
}

pub const DEFAULT_MIN_DAYS: usize = 50;

impl WindowSpec {
    pub fn calendar_year(min_days: usize) -> Self {
        WindowSpec {
            mode: WindowMode::Year,
            length: 0,
            step: 1,
            min_days,
        }
    }

    pub fn fixed(length: usize, step: usize) -> Self {
        WindowSpec {
            mode: WindowMode::Fixed,
            length,
            step,
            min_days: DEFAULT_MIN_DAYS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.step < 1 {
            return Err(Error::InvalidConfig("window step must be >= 1".into()));
        }
        match self.mode {
            WindowMode::Fixed if self.length < 3 => Err(Error::InvalidConfig(
                "fixed window length must be >= 3 for a defined correlation".into(),
            )),
            WindowMode::Year if self.min_days < 3 => Err(Error::InvalidConfig(
                "minimum window size must be >= 3".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// One labeled analysis window. `panel` carries `lead_rows` extra
/// leading price rows (0 or 1) so that a full window of returns can be
/// computed across the window boundary.
#[derive(Debug, Clone)]
pub struct WindowSlice {
    pub label: String,
    pub panel: PricePanel,
    pub lead_rows: usize,
}

impl WindowSlice {
    /// Rows belonging to the window proper, excluding the leading
    /// context row.
    pub fn core_rows(&self) -> usize {
        self.panel.n_dates() - self.lead_rows
    }
}

/// Strict ISO-8601 calendar date (`YYYY-MM-DD`); anything else is
/// rejected.
pub fn parse_iso_date(s: &str) -> Option<NaiveDate> {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    if !b
        .iter()
        .enumerate()
        .all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit())
    {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

/// Consecutive weekdays (Mon-Fri) starting at `start`. Used for
/// synthetic date axes.
pub fn weekday_dates(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut dates = Vec::with_capacity(count);
    let mut d = start;
    while dates.len() < count {
        if d.weekday() != Weekday::Sat && d.weekday() != Weekday::Sun {
            dates.push(d);
        }
        d = d.succ_opt().expect("date axis within chrono range");
    }
    dates
}

/// Parses CSV price data into per-instrument sparse series.
///
/// The header row is mandatory: `date,instrument,close` for the long
/// layout, `date,<id1>,<id2>,...` for the wide layout. Prices must be
/// positive; a `(date, instrument)` pair may appear only once.
pub fn parse_prices(input: &str, layout: Layout) -> Result<RawSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedRow {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();

    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyInput);
    }

    let mut raw = RawSeries::default();
    match layout {
        Layout::Long => parse_long(&mut reader, &headers, &mut raw)?,
        Layout::Wide => parse_wide(&mut reader, &headers, &mut raw)?,
    }

    if raw.total_observations() == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(raw)
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_close(field: &str, line: u64) -> Result<f64> {
    let value: f64 = field.parse().map_err(|_| Error::MalformedRow {
        line,
        reason: format!("close {field:?} is not a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::MalformedRow {
            line,
            reason: format!("close {field:?} is not finite"),
        });
    }
    if value <= 0.0 {
        return Err(Error::NonPositivePrice { line, value });
    }
    Ok(value)
}

fn parse_date_field(field: &str, line: u64) -> Result<NaiveDate> {
    parse_iso_date(field).ok_or_else(|| Error::MalformedRow {
        line,
        reason: format!("date {field:?} is not ISO-8601 (YYYY-MM-DD)"),
    })
}

fn parse_long(
    reader: &mut csv::Reader<&[u8]>,
    headers: &csv::StringRecord,
    raw: &mut RawSeries,
) -> Result<()> {
    let expected = ["date", "instrument", "close"];
    if headers.len() != 3 || !headers.iter().zip(expected).all(|(h, e)| h == e) {
        return Err(Error::MalformedRow {
            line: 1,
            reason: "long layout requires header exactly `date,instrument,close`".into(),
        });
    }
    for record in reader.records() {
        let record = record.map_err(|e| Error::MalformedRow {
            line: 0,
            reason: e.to_string(),
        })?;
        let line = record_line(&record);
        if record.len() != 3 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let date = parse_date_field(&record[0], line)?;
        if record[1].is_empty() {
            return Err(Error::MalformedRow {
                line,
                reason: "instrument label is empty".into(),
            });
        }
        let id = InstrumentId::new(&record[1]);
        let close = parse_close(&record[2], line)?;
        raw.register(id.clone());
        raw.insert(line, &id, date, close)?;
    }
    Ok(())
}

fn parse_wide(
    reader: &mut csv::Reader<&[u8]>,
    headers: &csv::StringRecord,
    raw: &mut RawSeries,
) -> Result<()> {
    if headers.len() < 2 || &headers[0] != "date" {
        return Err(Error::MalformedRow {
            line: 1,
            reason: "wide layout requires header `date,<id1>,<id2>,...`".into(),
        });
    }
    let mut ids = Vec::with_capacity(headers.len() - 1);
    for h in headers.iter().skip(1) {
        if h.is_empty() {
            return Err(Error::MalformedRow {
                line: 1,
                reason: "wide header contains an empty instrument label".into(),
            });
        }
        let id = InstrumentId::new(h);
        if ids.contains(&id) {
            return Err(Error::MalformedRow {
                line: 1,
                reason: format!("duplicate instrument column {h:?}"),
            });
        }
        raw.register(id.clone());
        ids.push(id);
    }
    for record in reader.records() {
        let record = record.map_err(|e| Error::MalformedRow {
            line: 0,
            reason: e.to_string(),
        })?;
        let line = record_line(&record);
        if record.len() != ids.len() + 1 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected {} fields, found {}", ids.len() + 1, record.len()),
            });
        }
        let date = parse_date_field(&record[0], line)?;
        for (id, field) in ids.iter().zip(record.iter().skip(1)) {
            if field.is_empty() {
                continue; // no observation for this instrument on this date
            }
            let close = parse_close(field, line)?;
            raw.insert(line, id, date, close)?;
        }
    }
    Ok(())
}

/// Aligns sparse series onto one rectangular date axis.
///
/// `Intersect` keeps only dates every instrument traded on.
/// `ForwardFill` keeps the union of dates and copies each missing cell
/// from the instrument's most recent earlier close; instruments with no
/// observation at or before the first axis date cannot be filled and
/// are dropped with a warning.
pub fn align_calendars(raw: &RawSeries, policy: FillPolicy) -> Result<(PricePanel, Vec<String>)> {
    if raw.order.len() < 2 {
        return Err(Error::TooFewInstruments {
            have: raw.order.len(),
            need: 2,
        });
    }
    for id in &raw.order {
        if raw.series[id].is_empty() {
            return Err(Error::EmptySeries(id.to_string()));
        }
    }

    match policy {
        FillPolicy::Intersect => align_intersect(raw),
        FillPolicy::ForwardFill => align_forward_fill(raw),
    }
}

fn align_intersect(raw: &RawSeries) -> Result<(PricePanel, Vec<String>)> {
    let first = &raw.series[&raw.order[0]];
    let axis: Vec<NaiveDate> = first
        .keys()
        .filter(|d| raw.order[1..].iter().all(|id| raw.series[id].contains_key(*d)))
        .copied()
        .collect();
    if axis.is_empty() {
        return Err(Error::EmptyIntersection);
    }

    let closes = axis
        .iter()
        .map(|d| raw.order.iter().map(|id| raw.series[id][d]).collect())
        .collect();
    let prov = vec![vec![Provenance::Observed; raw.order.len()]; axis.len()];
    let panel = PricePanel::new(axis, raw.order.clone(), closes, prov)?;
    Ok((panel, Vec::new()))
}

fn align_forward_fill(raw: &RawSeries) -> Result<(PricePanel, Vec<String>)> {
    let mut axis: Vec<NaiveDate> = raw
        .series
        .values()
        .flat_map(|s| s.keys().copied())
        .collect();
    axis.sort_unstable();
    axis.dedup();
    let first_date = axis[0];

    let mut warnings = Vec::new();
    let mut kept = Vec::new();
    for id in &raw.order {
        let first_obs = *raw.series[id].keys().next().expect("non-empty series");
        if first_obs > first_date {
            warnings.push(format!(
                "instrument {id} dropped: first observation {first_obs} is after axis start {first_date}, leading cells cannot be forward-filled"
            ));
        } else {
            kept.push(id.clone());
        }
    }
    if kept.len() < 2 {
        return Err(Error::TooFewInstruments {
            have: kept.len(),
            need: 2,
        });
    }

    let mut closes = vec![Vec::with_capacity(kept.len()); axis.len()];
    let mut prov = vec![Vec::with_capacity(kept.len()); axis.len()];
    for id in &kept {
        let series = &raw.series[id];
        let mut last = f64::NAN;
        for (t, date) in axis.iter().enumerate() {
            match series.get(date) {
                Some(&close) => {
                    last = close;
                    closes[t].push(close);
                    prov[t].push(Provenance::Observed);
                }
                None => {
                    closes[t].push(last);
                    prov[t].push(Provenance::Filled);
                }
            }
        }
    }
    let panel = PricePanel::new(axis, kept, closes, prov)?;
    Ok((panel, warnings))
}

/// Slices an aligned panel into labeled windows.
///
/// Each window carries one extra leading price row when available, so a
/// window of `n` core rows yields `n` returns; the first window has no
/// predecessor and yields `n - 1`.
pub fn slice_windows(panel: &PricePanel, spec: &WindowSpec) -> Result<(Vec<WindowSlice>, Vec<String>)> {
    spec.validate()?;
    match spec.mode {
        WindowMode::Year => slice_calendar_years(panel, spec.min_days),
        WindowMode::Fixed => slice_fixed(panel, spec.length, spec.step),
    }
}

fn slice_calendar_years(
    panel: &PricePanel,
    min_days: usize,
) -> Result<(Vec<WindowSlice>, Vec<String>)> {
    let mut groups: Vec<(i32, usize, usize)> = Vec::new(); // (year, start, end)
    for (t, date) in panel.dates().iter().enumerate() {
        match groups.last_mut() {
            Some((year, _, end)) if *year == date.year() => *end = t + 1,
            _ => groups.push((date.year(), t, t + 1)),
        }
    }

    let mut slices = Vec::new();
    let mut warnings = Vec::new();
    for (year, start, end) in groups {
        let rows = end - start;
        if rows < min_days {
            warnings.push(format!(
                "window {year} dropped: {rows} rows < minimum {min_days}"
            ));
            continue;
        }
        let lead_rows = usize::from(start > 0);
        slices.push(WindowSlice {
            label: year.to_string(),
            panel: panel.slice_rows(start - lead_rows, end),
            lead_rows,
        });
    }
    if slices.is_empty() {
        return Err(Error::NoWindow { min_days });
    }
    Ok((slices, warnings))
}

fn slice_fixed(panel: &PricePanel, length: usize, step: usize) -> Result<(Vec<WindowSlice>, Vec<String>)> {
    let rows = panel.n_dates();
    let mut slices = Vec::new();
    let mut start = 0;
    while start + length <= rows {
        let lead_rows = usize::from(start > 0);
        slices.push(WindowSlice {
            label: format!("w{:04}", slices.len()),
            panel: panel.slice_rows(start - lead_rows, start + length),
            lead_rows,
        });
        start += step;
    }
    if slices.is_empty() {
        return Err(Error::NoWindow { min_days: length });
    }
    Ok((slices, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::rng::Xoshiro256PlusPlus;

    fn date(s: &str) -> NaiveDate {
        parse_iso_date(s).unwrap()
    }

    fn panel_from_wide(csv: &str) -> PricePanel {
        let raw = parse_prices(csv, Layout::Wide).unwrap();
        align_calendars(&raw, FillPolicy::Intersect).unwrap().0
    }

    #[test]
    fn long_rows_become_one_date_two_instruments() {
        let raw = parse_prices(
            "date,instrument,close\n2000-01-03,A,100\n2000-01-03,B,50\n",
            Layout::Long,
        )
        .unwrap();
        let (panel, warnings) = align_calendars(&raw, FillPolicy::Intersect).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(panel.n_dates(), 1);
        assert_eq!(panel.n_instruments(), 2);
        assert_eq!(panel.close(0, 0), 100.0);
        assert_eq!(panel.close(0, 1), 50.0);
    }

    #[test]
    fn wide_layout_is_equivalent_to_long() {
        let long = parse_prices(
            "date,instrument,close\n2000-01-03,A,100\n2000-01-03,B,50\n",
            Layout::Long,
        )
        .unwrap();
        let wide = parse_prices("date,A,B\n2000-01-03,100,50\n", Layout::Wide).unwrap();
        let (p_long, _) = align_calendars(&long, FillPolicy::Intersect).unwrap();
        let (p_wide, _) = align_calendars(&wide, FillPolicy::Intersect).unwrap();
        assert_eq!(p_long, p_wide);
    }

    #[test]
    fn negative_close_reports_line_number() {
        let err = parse_prices(
            "date,instrument,close\n2000-01-03,A,100\n2000-01-04,A,-5\n",
            Layout::Long,
        )
        .unwrap_err();
        match err {
            Error::NonPositivePrice { line, value } => {
                assert_eq!(line, 3);
                assert_eq!(value, -5.0);
            }
            other => panic!("expected NonPositivePrice, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_observation_is_rejected() {
        let err = parse_prices(
            "date,instrument,close\n2000-01-03,A,100\n2000-01-03,A,101\n",
            Layout::Long,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateObservation { line: 3, .. }));
    }

    #[test]
    fn malformed_date_and_field_count_are_rejected() {
        let err = parse_prices(
            "date,instrument,close\n2000/01/03,A,100\n",
            Layout::Long,
        )
        .unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 2, .. }));

        let err = parse_prices("date,instrument,close\n2000-01-03,A\n", Layout::Long).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 2, .. }));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            parse_prices("date,instrument,close\n", Layout::Long),
            Err(Error::EmptyInput)
        ));
        assert!(matches!(parse_prices("", Layout::Long), Err(Error::EmptyInput)));
    }

    #[test]
    fn intersect_keeps_common_dates_only() {
        let raw = parse_prices(
            "date,A,B\n2000-01-03,1,5\n2000-01-04,2,\n2000-01-05,3,7\n",
            Layout::Wide,
        )
        .unwrap();
        let (panel, _) = align_calendars(&raw, FillPolicy::Intersect).unwrap();
        assert_eq!(panel.dates(), &[date("2000-01-03"), date("2000-01-05")]);
    }

    #[test]
    fn forward_fill_copies_latest_preceding_close() {
        let raw = parse_prices(
            "date,A,B\n2000-01-03,1,5\n2000-01-04,2,\n2000-01-05,3,7\n",
            Layout::Wide,
        )
        .unwrap();
        let (panel, warnings) = align_calendars(&raw, FillPolicy::ForwardFill).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(panel.n_dates(), 3);
        assert_eq!(panel.close(1, 1), 5.0);
        assert_eq!(panel.provenance(1, 1), Provenance::Filled);
        assert_eq!(panel.provenance(2, 1), Provenance::Observed);
    }

    #[test]
    fn wide_column_with_no_observations_is_an_error() {
        let raw = parse_prices("date,A,B\n2000-01-03,1,\n2000-01-04,2,\n", Layout::Wide).unwrap();
        match align_calendars(&raw, FillPolicy::ForwardFill) {
            Err(Error::EmptySeries(label)) => assert_eq!(label, "B"),
            other => panic!("expected EmptySeries, got {other:?}"),
        }
    }

    #[test]
    fn disjoint_calendars_fail_intersection() {
        let raw = parse_prices(
            "date,instrument,close\n2000-01-03,A,1\n2000-01-04,B,2\n",
            Layout::Long,
        )
        .unwrap();
        assert!(matches!(
            align_calendars(&raw, FillPolicy::Intersect),
            Err(Error::EmptyIntersection)
        ));
    }

    #[test]
    fn late_starter_is_dropped_with_warning_under_ffill() {
        let raw = parse_prices(
            "date,A,B,C\n2000-01-03,1,,9\n2000-01-04,2,5,8\n2000-01-05,3,6,7\n",
            Layout::Wide,
        )
        .unwrap();
        let (panel, warnings) = align_calendars(&raw, FillPolicy::ForwardFill).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("B dropped"));
        assert_eq!(
            panel.instruments(),
            &[InstrumentId::new("A"), InstrumentId::new("C")]
        );
    }

    #[test]
    fn ffill_errors_when_fewer_than_two_survive() {
        let raw = parse_prices(
            "date,A,B\n2000-01-03,1,\n2000-01-04,2,5\n",
            Layout::Wide,
        )
        .unwrap();
        assert!(matches!(
            align_calendars(&raw, FillPolicy::ForwardFill),
            Err(Error::TooFewInstruments { have: 1, need: 2 })
        ));
    }

    #[test]
    fn thirteen_years_of_daily_data_yield_thirteen_windows() {
        let dates = weekday_dates(date("2000-01-03"), 3391);
        assert_eq!(dates.last().unwrap().year(), 2012);
        let n = dates.len();
        let closes = (0..n).map(|t| vec![100.0 + t as f64, 50.0 + t as f64]).collect();
        let panel = PricePanel::from_observed(
            dates,
            vec![InstrumentId::new("A"), InstrumentId::new("B")],
            closes,
        )
        .unwrap();
        let (slices, warnings) =
            slice_windows(&panel, &WindowSpec::calendar_year(DEFAULT_MIN_DAYS)).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(slices.len(), 13);
        assert_eq!(slices[0].label, "2000");
        assert_eq!(slices[12].label, "2012");
        assert_eq!(slices[0].lead_rows, 0);
        assert!(slices[1..].iter().all(|s| s.lead_rows == 1));
        // lead row is the previous year's last trading day
        assert_eq!(slices[1].panel.dates()[0], *slices[0].panel.dates().last().unwrap());
    }

    #[test]
    fn fixed_520_rows_length_260_step_260_yield_two_slices() {
        let dates = weekday_dates(date("2000-01-03"), 520);
        let closes = (0..520).map(|t| vec![1.0 + t as f64, 2.0 + t as f64]).collect();
        let panel = PricePanel::from_observed(
            dates,
            vec![InstrumentId::new("A"), InstrumentId::new("B")],
            closes,
        )
        .unwrap();
        let (slices, _) = slice_windows(&panel, &WindowSpec::fixed(260, 260)).unwrap();
        assert_eq!(slices.len(), 2);
        assert_eq!(slices[0].label, "w0000");
        assert_eq!(slices[0].core_rows(), 260);
        assert_eq!(slices[1].core_rows(), 260);
        assert_eq!(slices[1].panel.n_dates(), 261); // lead row included
    }

    #[test]
    fn too_short_for_any_fixed_window_is_an_error() {
        let dates = weekday_dates(date("2000-01-03"), 100);
        let closes = (0..100).map(|t| vec![1.0 + t as f64, 2.0 + t as f64]).collect();
        let panel = PricePanel::from_observed(
            dates,
            vec![InstrumentId::new("A"), InstrumentId::new("B")],
            closes,
        )
        .unwrap();
        assert!(matches!(
            slice_windows(&panel, &WindowSpec::fixed(260, 260)),
            Err(Error::NoWindow { .. })
        ));
    }

    #[test]
    fn nonoverlapping_fixed_slices_reconstruct_prefix() {
        let dates = weekday_dates(date("2000-01-03"), 37);
        let closes: Vec<Vec<f64>> = (0..37).map(|t| vec![1.0 + t as f64, 2.0 + t as f64]).collect();
        let panel =
            PricePanel::from_observed(dates, vec![InstrumentId::new("A"), InstrumentId::new("B")], closes)
                .unwrap();
        let (slices, _) = slice_windows(&panel, &WindowSpec::fixed(10, 10)).unwrap();
        assert_eq!(slices.len(), 3);
        let mut rebuilt = Vec::new();
        for s in &slices {
            rebuilt.extend_from_slice(&s.panel.rows()[s.lead_rows..]);
        }
        assert_eq!(&panel.rows()[..30], rebuilt.as_slice());
    }

    #[test]
    fn intersect_axis_is_subset_of_every_series_and_ffill_matches_carry() {
        // randomized sparse calendars, seeded
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(99);
        for _ in 0..20 {
            let axis = weekday_dates(date("2001-01-01"), 40);
            let mut csv = String::from("date,instrument,close\n");
            let mut kept: Vec<Vec<(NaiveDate, f64)>> = vec![Vec::new(); 3];
            for (k, kept_k) in kept.iter_mut().enumerate() {
                for (t, d) in axis.iter().enumerate() {
                    // first date always observed so no instrument is dropped
                    if t == 0 || rng.next_f64() < 0.7 {
                        let close = 10.0 + k as f64 + t as f64;
                        csv.push_str(&format!("{},S{},{}\n", d.format("%Y-%m-%d"), k, close));
                        kept_k.push((*d, close));
                    }
                }
            }
            let raw = parse_prices(&csv, Layout::Long).unwrap();

            if let Ok((panel, _)) = align_calendars(&raw, FillPolicy::Intersect) {
                for d in panel.dates() {
                    assert!(kept.iter().all(|s| s.iter().any(|(sd, _)| sd == d)));
                }
            }

            let (panel, warnings) = align_calendars(&raw, FillPolicy::ForwardFill).unwrap();
            assert!(warnings.is_empty());
            for (i, series) in kept.iter().enumerate() {
                for (t, d) in panel.dates().iter().enumerate() {
                    let expected = series
                        .iter()
                        .filter(|(sd, _)| sd <= d)
                        .map(|(_, c)| *c)
                        .next_back()
                        .unwrap();
                    assert_eq!(panel.close(t, i), expected);
                }
            }
        }
    }

    #[test]
    fn parse_align_slice_is_deterministic() {
        let mut csv = String::from("date,A,B,C\n");
        let dates = weekday_dates(date("2004-01-01"), 600);
        for (t, d) in dates.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                d.format("%Y-%m-%d"),
                100.0 + t as f64,
                200.0 - 0.1 * t as f64,
                50.0 + (t % 7) as f64
            ));
        }
        let run = |input: &str| {
            let raw = parse_prices(input, Layout::Wide).unwrap();
            let (panel, _) = align_calendars(&raw, FillPolicy::ForwardFill).unwrap();
            let (slices, _) = slice_windows(&panel, &WindowSpec::calendar_year(50)).unwrap();
            (panel, slices.len())
        };
        let (p1, n1) = run(&csv);
        let (p2, n2) = run(&csv);
        assert_eq!(p1, p2);
        assert_eq!(n1, n2);
    }

    #[test]
    fn subset_restricts_columns_in_panel_order() {
        let panel = panel_from_wide("date,A,B,C\n2000-01-03,1,2,3\n2000-01-04,4,5,6\n");
        let keep = vec![InstrumentId::new("C"), InstrumentId::new("A")];
        let sub = panel.subset(&keep).unwrap();
        assert_eq!(sub.instruments(), &[InstrumentId::new("A"), InstrumentId::new("C")]);
        assert_eq!(sub.close(1, 1), 6.0);
        assert!(panel.subset(&[InstrumentId::new("A")]).is_err());
    }
}
