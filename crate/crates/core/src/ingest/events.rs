use std::fs;
use std::io::Write;
use std::path::Path;

use super::{format_timestamp, parse_timestamp, IngestError, RowError};

const EVENT_HEADER: [&str; 5] = ["id", "start", "end", "lat", "lon"];

/// One recorded event. Times are UTC epoch seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub id: String,
    pub start: i64,
    pub end: Option<i64>,
    pub lat: f64,
    pub lon: f64,
}

/// Result of a lenient parse: accepted records in file order plus rejects.
#[derive(Debug, Clone, Default)]
pub struct EventParse {
    pub records: Vec<EventRecord>,
    pub rejected: Vec<RowError>,
}

/// Parses an events CSV, failing if any row is malformed.
pub fn parse_events(path: &Path) -> Result<Vec<EventRecord>, IngestError> {
    let parsed = parse_events_lenient(path)?;
    if let Some(first) = parsed.rejected.first().cloned() {
        return Err(IngestError::BadRows {
            count: parsed.rejected.len(),
            first,
            rows: parsed.rejected,
        });
    }
    Ok(parsed.records)
}

/// Parses an events CSV, collecting malformed rows instead of failing.
pub fn parse_events_lenient(path: &Path) -> Result<EventParse, IngestError> {
    let bytes = fs::read(path)?;
    parse_events_bytes(&bytes, &path.display().to_string())
}

fn parse_events_bytes(bytes: &[u8], origin: &str) -> Result<EventParse, IngestError> {
    let mut out = EventParse::default();
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Ok(out);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header = reader.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names != EVENT_HEADER {
        return Err(IngestError::Format {
            path: origin.to_string(),
            reason: format!("expected header `{}`, found `{}`", EVENT_HEADER.join(","), names.join(",")),
        });
    }
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.rejected.push(RowError { line, reason: e.to_string() });
                continue;
            }
        };
        match parse_event_row(&row) {
            Ok(ev) => out.records.push(ev),
            Err(reason) => out.rejected.push(RowError { line, reason }),
        }
    }
    Ok(out)
}

fn parse_event_row(row: &csv::StringRecord) -> Result<EventRecord, String> {
    if row.len() != 5 {
        return Err(format!("expected 5 fields, got {}", row.len()));
    }
    let id = row[0].to_string();
    let start = parse_timestamp(&row[1]).ok_or_else(|| format!("bad start timestamp `{}`", &row[1]))?;
    let end = if row[2].is_empty() {
        None
    } else {
        Some(parse_timestamp(&row[2]).ok_or_else(|| format!("bad end timestamp `{}`", &row[2]))?)
    };
    if let Some(end) = end {
        if end < start {
            return Err("end precedes start".into());
        }
    }
    let lat: f64 = row[3].parse().map_err(|_| format!("bad latitude `{}`", &row[3]))?;
    let lon: f64 = row[4].parse().map_err(|_| format!("bad longitude `{}`", &row[4]))?;
    if !(-90.0..=90.0).contains(&lat) {
        return Err(format!("latitude {lat} out of range"));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(format!("longitude {lon} out of range"));
    }
    Ok(EventRecord { id, start, end, lat, lon })
}

/// Writes events in the CSV layout read by [`parse_events`].
pub fn write_events(path: &Path, events: &[EventRecord]) -> Result<(), IngestError> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{}", EVENT_HEADER.join(","))?;
    for ev in events {
        let end = ev.end.map(format_timestamp).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            ev.id,
            format_timestamp(ev.start),
            end,
            ev.lat,
            ev.lon
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse_str(s: &str) -> Result<EventParse, IngestError> {
        parse_events_bytes(s.as_bytes(), "test")
    }

    #[test]
    fn absent_end_is_none() {
        let p = parse_str("id,start,end,lat,lon\ne1,2015-12-20T13:05:00Z,,34.0,-118.3\n").unwrap();
        assert!(p.rejected.is_empty());
        let ev = &p.records[0];
        assert_eq!(ev.id, "e1");
        assert_eq!(ev.end, None);
        assert_eq!(ev.lat, 34.0);
        assert_eq!(ev.lon, -118.3);
        assert_eq!(ev.start, parse_timestamp("2015-12-20T13:05:00Z").unwrap());
    }

    #[test]
    fn latitude_out_of_range_is_row_error() {
        let p = parse_str("id,start,end,lat,lon\ne1,2015-12-20T13:05:00Z,,95,-118.3\n").unwrap();
        assert!(p.records.is_empty());
        assert_eq!(p.rejected.len(), 1);
        assert_eq!(p.rejected[0].line, 2);
        assert!(p.rejected[0].reason.contains("latitude"));
    }

    #[test]
    fn strict_parse_reports_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.csv");
        fs::write(
            &path,
            "id,start,end,lat,lon\na,2015-01-01T00:00:00Z,,1,1\nb,nope,,1,1\nc,2015-01-01T00:00:00Z,,1,999\n",
        )
        .unwrap();
        match parse_events(&path) {
            Err(IngestError::BadRows { count, rows, .. }) => {
                assert_eq!(count, 2);
                assert_eq!(rows.iter().map(|r| r.line).collect::<Vec<_>>(), vec![3, 4]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn preserves_order() {
        let p = parse_str(
            "id,start,end,lat,lon\n\
             c,2015-01-01T02:00:00Z,,1,1\n\
             a,2015-01-01T00:00:00Z,2015-01-01T01:00:00Z,2,2\n\
             b,2015-01-01T01:00:00Z,,3,3\n",
        )
        .unwrap();
        let ids: Vec<_> = p.records.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);
    }

    #[test]
    fn missing_header_is_format_error() {
        assert!(matches!(
            parse_str("e1,2015-12-20T13:05:00Z,,34.0,-118.3\n"),
            Err(IngestError::Format { .. })
        ));
    }

    #[test]
    fn empty_file_is_empty_list() {
        let p = parse_str("").unwrap();
        assert!(p.records.is_empty() && p.rejected.is_empty());
    }

    #[test]
    fn end_before_start_rejected() {
        let p = parse_str("id,start,end,lat,lon\ne,2015-01-01T02:00:00Z,2015-01-01T01:00:00Z,1,1\n").unwrap();
        assert_eq!(p.rejected.len(), 1);
    }

    proptest! {
        #[test]
        fn write_then_parse_reproduces_fields(
            recs in prop::collection::vec(
                (0i64..2_000_000_000, prop::option::of(0i64..100_000), -90.0f64..=90.0, -180.0f64..=180.0),
                0..20,
            )
        ) {
            let events: Vec<EventRecord> = recs
                .iter()
                .enumerate()
                .map(|(i, &(s, d, lat, lon))| EventRecord {
                    id: format!("ev{i}"),
                    start: s,
                    end: d.map(|d| s + d),
                    lat,
                    lon,
                })
                .collect();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("e.csv");
            write_events(&path, &events).unwrap();
            let back = parse_events(&path).unwrap();
            prop_assert_eq!(back, events);
        }
    }
}
