//! Hourly meter CSV ingestion.
//!
//! Expected columns (by header name, order free, extras ignored):
//! `timestamp` (ISO-8601 hour), `site_id`, `meter_id`, `meter_type`,
//! `reading`. An empty reading marks a missing hour. Files ending in `.gz`
//! are decompressed on the fly. Each meter's rows are gridded onto
//! contiguous hours from its first to its last timestamp; absent hours get
//! valid = false, duplicate timestamps keep the last row, and out-of-order
//! timestamps produce a warning, not an error.

use super::{DatasetError, MeterRecord, MeterType};
use chrono::NaiveDateTime;
use flate2::read::GzDecoder;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

/// Column names for the five required fields.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub timestamp: String,
    pub site_id: String,
    pub meter_id: String,
    pub meter_type: String,
    pub reading: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            timestamp: "timestamp".into(),
            site_id: "site_id".into(),
            meter_id: "meter_id".into(),
            meter_type: "meter_type".into(),
            reading: "reading".into(),
        }
    }
}

#[derive(Debug)]
pub struct IngestOutcome {
    pub records: Vec<MeterRecord>,
    pub warnings: Vec<String>,
}

/// Longest accepted hour span per meter; a wider span indicates corrupt
/// timestamps and would explode the hour grid.
const MAX_SPAN_HOURS: i64 = 40 * 366 * 24;

pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<IngestOutcome, DatasetError> {
    let file = File::open(path)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    ingest_reader(reader, schema)
}

/// Ingest from any reader; the path-based wrapper adds gz handling.
pub fn ingest_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<IngestOutcome, DatasetError> {
    let mut csv = csv::ReaderBuilder::new()
        .flexible(false)
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| DatasetError::Parse { line: 1, msg: e.to_string() })?
        .clone();
    let col = |name: &str| -> Result<usize, DatasetError> {
        headers.iter().position(|h| h == name).ok_or_else(|| DatasetError::Parse {
            line: 1,
            msg: format!("missing column \"{name}\" in header {:?}", headers.iter().collect::<Vec<_>>()),
        })
    };
    let (c_ts, c_site, c_meter, c_type, c_read) = (
        col(&schema.timestamp)?,
        col(&schema.site_id)?,
        col(&schema.meter_id)?,
        col(&schema.meter_type)?,
        col(&schema.reading)?,
    );

    struct Acc {
        site_id: String,
        meter_type: MeterType,
        rows: Vec<(NaiveDateTime, Option<f64>)>,
        non_monotone: bool,
    }
    let mut meters: BTreeMap<String, Acc> = BTreeMap::new();

    let mut record = csv::StringRecord::new();
    loop {
        let line = csv.position().line();
        match csv.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(DatasetError::Parse { line, msg: e.to_string() }),
        }
        let field = |i: usize| -> Result<&str, DatasetError> {
            record.get(i).ok_or_else(|| DatasetError::Parse {
                line,
                msg: format!("row has {} fields, need {}", record.len(), i + 1),
            })
        };
        let ts = parse_hour(field(c_ts)?).ok_or_else(|| DatasetError::Parse {
            line,
            msg: format!("bad hour timestamp \"{}\"", field(c_ts).unwrap_or("")),
        })?;
        let site_id = field(c_site)?.to_string();
        let meter_id = field(c_meter)?.to_string();
        for (what, s) in [("site_id", &site_id), ("meter_id", &meter_id)] {
            if s.is_empty() || s.chars().any(|c| c.is_control()) {
                return Err(DatasetError::Parse {
                    line,
                    msg: format!("{what} must be non-empty printable text"),
                });
            }
        }
        let ty_str = field(c_type)?;
        let meter_type = MeterType::parse(ty_str).ok_or_else(|| DatasetError::UnknownMeterType {
            line,
            ty: ty_str.to_string(),
        })?;
        let reading_str = field(c_read)?.trim();
        let reading = if reading_str.is_empty() {
            None
        } else {
            let v: f64 = reading_str.parse().map_err(|_| DatasetError::Parse {
                line,
                msg: format!("bad reading \"{reading_str}\""),
            })?;
            if !v.is_finite() {
                return Err(DatasetError::Parse {
                    line,
                    msg: format!("non-finite reading \"{reading_str}\""),
                });
            }
            Some(v)
        };

        let acc = meters.entry(meter_id.clone()).or_insert_with(|| Acc {
            site_id: site_id.clone(),
            meter_type,
            rows: Vec::new(),
            non_monotone: false,
        });
        if acc.site_id != site_id {
            return Err(DatasetError::Parse {
                line,
                msg: format!("meter {meter_id} listed under two sites: {} and {site_id}", acc.site_id),
            });
        }
        if acc.meter_type != meter_type {
            return Err(DatasetError::Parse {
                line,
                msg: format!("meter {meter_id} listed with two types: {} and {meter_type}", acc.meter_type),
            });
        }
        if let Some((last, _)) = acc.rows.last() {
            if ts < *last {
                acc.non_monotone = true;
            }
        }
        acc.rows.push((ts, reading));
    }

    let mut records = Vec::with_capacity(meters.len());
    let mut warnings = Vec::new();
    for (meter_id, acc) in meters {
        if acc.non_monotone {
            warnings.push(format!("meter {meter_id}: timestamps not in increasing order"));
        }
        // Deduplicate keeping the last occurrence in file order.
        let mut dedup: BTreeMap<NaiveDateTime, Option<f64>> = BTreeMap::new();
        for (ts, v) in acc.rows {
            dedup.insert(ts, v);
        }
        let (&start, _) = dedup.first_key_value().expect("at least one row");
        let (&end, _) = dedup.last_key_value().expect("at least one row");
        let span = (end - start).num_hours();
        if span >= MAX_SPAN_HOURS {
            return Err(DatasetError::Parse {
                line: 0,
                msg: format!("meter {meter_id}: timestamp span of {span} hours is implausible"),
            });
        }
        let len = span as usize + 1;
        let mut values = vec![0.0; len];
        let mut valid = vec![false; len];
        for (ts, v) in dedup {
            let idx = (ts - start).num_hours() as usize;
            if let Some(v) = v {
                values[idx] = v;
                valid[idx] = true;
            }
        }
        records.push(MeterRecord {
            meter_id,
            site_id: acc.site_id,
            meter_type: acc.meter_type,
            start,
            values,
            valid,
        });
    }
    Ok(IngestOutcome { records, warnings })
}

/// Accepts `2016-01-04 00:00:00` or `2016-01-04T00:00:00`, requiring exact
/// hour alignment.
fn parse_hour(s: &str) -> Option<NaiveDateTime> {
    use chrono::Timelike;
    let ts = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S"))
        .ok()?;
    (ts.minute() == 0 && ts.second() == 0 && ts.nanosecond() == 0).then_some(ts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest_str(s: &str) -> Result<IngestOutcome, DatasetError> {
        ingest_reader(s.as_bytes(), &CsvSchema::default())
    }

    #[test]
    fn consecutive_hours_make_one_record() {
        let out = ingest_str(
            "timestamp,site_id,meter_id,meter_type,reading\n\
             2016-01-04 00:00:00,s1,m1,electricity,1.5\n\
             2016-01-04 01:00:00,s1,m1,electricity,2.5\n\
             2016-01-04 02:00:00,s1,m1,electricity,3.5\n",
        )
        .unwrap();
        assert_eq!(out.records.len(), 1);
        let r = &out.records[0];
        assert_eq!(r.values, vec![1.5, 2.5, 3.5]);
        assert!(r.valid.iter().all(|&v| v));
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn gaps_become_invalid_hours() {
        let out = ingest_str(
            "timestamp,site_id,meter_id,meter_type,reading\n\
             2016-01-04 00:00:00,s1,m1,steam,1.0\n\
             2016-01-04 03:00:00,s1,m1,steam,4.0\n",
        )
        .unwrap();
        let r = &out.records[0];
        assert_eq!(r.valid, vec![true, false, false, true]);
        assert_eq!(r.values[3], 4.0);
    }

    #[test]
    fn empty_reading_is_missing() {
        let out = ingest_str(
            "timestamp,site_id,meter_id,meter_type,reading\n\
             2016-01-04 00:00:00,s1,m1,hotwater,\n\
             2016-01-04 01:00:00,s1,m1,hotwater,2.0\n",
        )
        .unwrap();
        assert_eq!(out.records[0].valid, vec![false, true]);
    }

    #[test]
    fn duplicate_timestamp_keeps_last() {
        let out = ingest_str(
            "timestamp,site_id,meter_id,meter_type,reading\n\
             2016-01-04 00:00:00,s1,m1,electricity,1.0\n\
             2016-01-04 00:00:00,s1,m1,electricity,9.0\n",
        )
        .unwrap();
        assert_eq!(out.records[0].values, vec![9.0]);
    }

    #[test]
    fn out_of_order_warns() {
        let out = ingest_str(
            "timestamp,site_id,meter_id,meter_type,reading\n\
             2016-01-04 05:00:00,s1,m1,electricity,1.0\n\
             2016-01-04 00:00:00,s1,m1,electricity,2.0\n",
        )
        .unwrap();
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].contains("m1"));
        assert_eq!(out.records[0].values.len(), 6);
    }

    #[test]
    fn unknown_meter_type_is_an_error() {
        let err = ingest_str(
            "timestamp,site_id,meter_id,meter_type,reading\n\
             2016-01-04 00:00:00,s1,m1,gas,1.0\n",
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::UnknownMeterType { line: 2, .. }), "{err}");
    }

    #[test]
    fn bad_timestamp_names_line() {
        let err = ingest_str(
            "timestamp,site_id,meter_id,meter_type,reading\n\
             2016-01-04 00:00:00,s1,m1,electricity,1.0\n\
             2016-01-04 00:30:00,s1,m1,electricity,1.0\n",
        )
        .unwrap_err();
        match err {
            DatasetError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn missing_column_is_an_error() {
        let err = ingest_str("timestamp,site,meter_id,meter_type,reading\n").unwrap_err();
        assert!(err.to_string().contains("site_id"));
    }

    #[test]
    fn t_separator_accepted() {
        let out = ingest_str(
            "timestamp,site_id,meter_id,meter_type,reading\n\
             2016-01-04T00:00:00,s1,m1,chilledwater,1.0\n",
        )
        .unwrap();
        assert_eq!(out.records.len(), 1);
    }

    #[test]
    fn meters_sorted_by_id() {
        let out = ingest_str(
            "timestamp,site_id,meter_id,meter_type,reading\n\
             2016-01-04 00:00:00,s1,zebra,electricity,1.0\n\
             2016-01-04 00:00:00,s1,alpha,electricity,1.0\n",
        )
        .unwrap();
        let ids: Vec<&str> = out.records.iter().map(|r| r.meter_id.as_str()).collect();
        assert_eq!(ids, vec!["alpha", "zebra"]);
    }
}
