//! JSON Lines catalogs binding band-stack files to parcels, seasons and labels.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::datastore::bsf::read_bandstack;
use crate::datastore::sensor::Satellite;
use crate::datastore::stack::BandStack;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    /// Relative paths resolve against the manifest's directory.
    pub path: String,
    pub parcel_id: String,
    pub satellite: Satellite,
    pub date: NaiveDate,
    pub season_id: String,
    pub label: String,
    pub height: usize,
    pub width: usize,
}

/// A loaded manifest and the directory its relative paths hang off.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub base_dir: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord = serde_json::from_str(line)
                .map_err(|e| Error::Format { path: path.to_path_buf(), msg: format!("line {}: {e}", n + 1) })?;
            records.push(rec);
        }
        check_unique(&records)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Manifest { base_dir, records })
    }

    pub fn resolve(&self, record: &ManifestRecord) -> PathBuf {
        let p = Path::new(&record.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Reads the band stack behind `record` and checks it agrees with the catalog row.
    pub fn read_stack(&self, record: &ManifestRecord) -> Result<BandStack> {
        let path = self.resolve(record);
        let stack = read_bandstack(&path)?;
        if stack.parcel_id != record.parcel_id
            || stack.satellite != record.satellite
            || stack.date != record.date
            || stack.height != record.height
            || stack.width != record.width
        {
            return Err(Error::Format {
                path,
                msg: format!("stack header disagrees with manifest row for parcel {}", record.parcel_id),
            });
        }
        Ok(stack)
    }
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    check_unique(records)?;
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::Invalid(e.to_string()))?);
        out.push('\n');
    }
    crate::fsutil::write_atomic(path, out.as_bytes())
}

fn check_unique(records: &[ManifestRecord]) -> Result<()> {
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert((&r.parcel_id, r.satellite, r.date)) {
            return Err(Error::Schema(format!(
                "duplicate manifest entry for parcel {} / {} / {}",
                r.parcel_id, r.satellite, r.date
            )));
        }
    }
    Ok(())
}

/// Inclusive date window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DateWindow {
    Dates { start: NaiveDate, end: NaiveDate },
    /// Day offsets from the earliest observation of each parcel-season.
    SeasonDays { start: i64, end: i64 },
}

impl FromStr for DateWindow {
    type Err = Error;

    /// `START:END`, either two integers (season-relative days) or two ISO dates.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::Usage(format!("window {s:?} must look like START:END")))?;
        let window = match (a.trim().parse::<i64>(), b.trim().parse::<i64>()) {
            (Ok(start), Ok(end)) => DateWindow::SeasonDays { start, end },
            _ => {
                let parse = |t: &str| {
                    NaiveDate::parse_from_str(t.trim(), "%Y-%m-%d")
                        .map_err(|_| Error::Usage(format!("window bound {t:?} is neither a day offset nor a YYYY-MM-DD date")))
                };
                DateWindow::Dates { start: parse(a)?, end: parse(b)? }
            }
        };
        window.check()?;
        Ok(window)
    }
}

impl DateWindow {
    fn check(&self) -> Result<()> {
        let ordered = match self {
            DateWindow::Dates { start, end } => start <= end,
            DateWindow::SeasonDays { start, end } => start <= end,
        };
        if ordered {
            Ok(())
        } else {
            Err(Error::Usage(format!("window start after end: {self:?}")))
        }
    }
}

/// Conjunctive record filter; `None` fields do not constrain.
#[derive(Debug, Clone, Default)]
pub struct ManifestFilter {
    pub satellite: Option<Satellite>,
    pub parcels: Option<BTreeSet<String>>,
    pub window: Option<DateWindow>,
    pub season: Option<String>,
}

/// Keeps records matching every given criterion, in input order.
pub fn filter_manifest(records: &[ManifestRecord], filter: &ManifestFilter) -> Result<Vec<ManifestRecord>> {
    if let Some(w) = &filter.window {
        w.check()?;
    }
    let anchors: BTreeMap<(&str, &str), NaiveDate> =
        records.iter().fold(BTreeMap::new(), |mut acc, r| {
            let e = acc.entry((r.parcel_id.as_str(), r.season_id.as_str())).or_insert(r.date);
            *e = (*e).min(r.date);
            acc
        });
    Ok(records
        .iter()
        .filter(|r| filter.satellite.is_none_or(|s| r.satellite == s))
        .filter(|r| filter.parcels.as_ref().is_none_or(|p| p.contains(&r.parcel_id)))
        .filter(|r| filter.season.as_ref().is_none_or(|s| &r.season_id == s))
        .filter(|r| match filter.window {
            None => true,
            Some(DateWindow::Dates { start, end }) => r.date >= start && r.date <= end,
            Some(DateWindow::SeasonDays { start, end }) => {
                let day = (r.date - anchors[&(r.parcel_id.as_str(), r.season_id.as_str())]).num_days();
                day >= start && day <= end
            }
        })
        .cloned()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(parcel: &str, day: i64) -> ManifestRecord {
        let date = NaiveDate::from_ymd_opt(2019, 6, 1).unwrap() + chrono::Duration::days(day);
        ManifestRecord {
            path: format!("{parcel}/{date}.bsf"),
            parcel_id: parcel.into(),
            satellite: Satellite::PS,
            date,
            season_id: "2019".into(),
            label: "paddy".into(),
            height: 19,
            width: 19,
        }
    }

    fn season(parcel: &str) -> Vec<ManifestRecord> {
        (0..180).map(|d| record(parcel, d)).collect()
    }

    #[test]
    fn no_filter_is_identity() {
        let recs = season("A");
        assert_eq!(filter_manifest(&recs, &ManifestFilter::default()).unwrap(), recs);
    }

    #[test]
    fn second_half_of_a_180_day_season() {
        let mut recs = season("A");
        // a second parcel whose season starts 20 days later
        recs.extend((0..180).map(|d| record("B", d + 20)));
        let filter = ManifestFilter { window: Some("90:179".parse().unwrap()), ..Default::default() };
        let kept = filter_manifest(&recs, &filter).unwrap();
        assert_eq!(kept.len(), 180);
        let start = NaiveDate::from_ymd_opt(2019, 6, 1).unwrap();
        for r in &kept {
            let offset = if r.parcel_id == "B" { 20 } else { 0 };
            assert!((r.date - start).num_days() - offset >= 90);
        }
    }

    #[test]
    fn parcel_filter_and_order() {
        let mut recs = season("A");
        recs.extend(season("B"));
        recs.extend(season("C"));
        let parcels: BTreeSet<String> = ["C", "A"].iter().map(|s| s.to_string()).collect();
        let kept = filter_manifest(&recs, &ManifestFilter { parcels: Some(parcels.clone()), ..Default::default() }).unwrap();
        assert_eq!(kept.len(), 360);
        assert!(kept.iter().all(|r| parcels.contains(&r.parcel_id)));
        assert_eq!(kept[0].parcel_id, "A");
        assert_eq!(kept[359].parcel_id, "C");
    }

    #[test]
    fn window_parsing() {
        assert_eq!("3:9".parse::<DateWindow>().unwrap(), DateWindow::SeasonDays { start: 3, end: 9 });
        assert!(matches!("2019-06-01:2019-07-01".parse::<DateWindow>().unwrap(), DateWindow::Dates { .. }));
        assert!("9:3".parse::<DateWindow>().is_err());
        assert!("nonsense".parse::<DateWindow>().is_err());
    }

    #[test]
    fn manifest_round_trip_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let recs = vec![record("A", 0), record("A", 1)];
        write_manifest(&path, &recs).unwrap();
        let m = Manifest::load(&path).unwrap();
        assert_eq!(m.records, recs);
        assert_eq!(m.resolve(&recs[0]), dir.path().join(&recs[0].path));
        assert!(write_manifest(&path, &[record("A", 0), record("A", 0)]).is_err());
    }
}
