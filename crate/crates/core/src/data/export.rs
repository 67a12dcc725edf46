//! Export writers. All take rows already filtered and ordered by the caller.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use quick_xml::escape::escape;

use super::Report;
use crate::canonical;
use crate::clock::iso8601;
use crate::geo::GeoPoint;

pub const CSV_COLUMNS: [&str; 8] =
    ["report_id", "participant_id", "kind", "lat", "lon", "captured_at", "labels", "payload_summary"];

pub fn csv_header() -> String {
    format!("{}\r\n", CSV_COLUMNS.join(","))
}

/// RFC 4180 CSV with CRLF line endings and a header row.
pub fn to_csv(rows: &[Report]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    for r in rows {
        let (lat, lon) = match r.position {
            Some(p) => (p.lat.to_string(), p.lon.to_string()),
            None => (String::new(), String::new()),
        };
        let labels: Vec<&str> = r.labels.iter().map(String::as_str).collect();
        w.write_record([
            r.report_id.as_str(),
            r.participant_id.as_str(),
            r.payload.kind_name(),
            &lat,
            &lon,
            &iso8601(r.captured_at),
            &labels.join(";"),
            &r.summary(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Canonical JSON array of full reports.
pub fn to_json(rows: &[Report]) -> Vec<u8> {
    canonical::to_canonical_string(rows).expect("reports serialize").into_bytes()
}

/// GPX longitudes live in [-180, 180).
fn gpx_lon(lon: f64) -> f64 {
    if lon >= 180.0 {
        lon - 360.0
    } else {
        lon
    }
}

/// GPX 1.1: one `trk` per participant with positioned reports, one `trkpt`
/// per positioned report.
pub fn to_gpx(title: &str, rows: &[Report]) -> Vec<u8> {
    let mut tracks: BTreeMap<&str, Vec<(&Report, GeoPoint)>> = BTreeMap::new();
    for r in rows {
        if let Some(p) = r.position {
            tracks.entry(r.participant_id.as_str()).or_default().push((r, p));
        }
    }
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str(
        "<gpx version=\"1.1\" creator=\"pms-core\" xmlns=\"http://www.topografix.com/GPX/1/1\" \
         xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" \
         xsi:schemaLocation=\"http://www.topografix.com/GPX/1/1 http://www.topografix.com/GPX/1/1/gpx.xsd\">\n",
    );
    let _ = writeln!(s, "  <metadata><name>{}</name></metadata>", text(title));
    for (participant, points) in tracks {
        let _ = writeln!(s, "  <trk>\n    <name>{}</name>\n    <trkseg>", text(participant));
        for (r, p) in points {
            let _ = writeln!(
                s,
                "      <trkpt lat=\"{}\" lon=\"{}\"><time>{}</time><name>{}</name><desc>{}</desc></trkpt>",
                p.lat,
                gpx_lon(p.lon),
                iso8601(r.captured_at),
                text(&r.report_id),
                text(&r.summary()),
            );
        }
        s.push_str("    </trkseg>\n  </trk>\n");
    }
    s.push_str("</gpx>\n");
    s.into_bytes()
}

/// KML 2.2: one `Placemark` per positioned report.
pub fn to_kml(title: &str, rows: &[Report]) -> Vec<u8> {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str("<kml xmlns=\"http://www.opengis.net/kml/2.2\">\n<Document>\n");
    let _ = writeln!(s, "  <name>{}</name>", text(title));
    for r in rows {
        let Some(p) = r.position else { continue };
        let labels: Vec<&str> = r.labels.iter().map(String::as_str).collect();
        let _ = writeln!(
            s,
            "  <Placemark id=\"{}\">\n    <name>{}</name>\n    <description>{}</description>\n    \
             <TimeStamp><when>{}</when></TimeStamp>\n    <ExtendedData>\n      \
             <Data name=\"participant_id\"><value>{}</value></Data>\n      \
             <Data name=\"kind\"><value>{}</value></Data>\n      \
             <Data name=\"labels\"><value>{}</value></Data>\n    </ExtendedData>\n    \
             <Point><coordinates>{},{}</coordinates></Point>\n  </Placemark>",
            escape(&xml_id(&r.report_id)),
            text(&r.report_id),
            text(&r.summary()),
            iso8601(r.captured_at),
            text(&r.participant_id),
            r.payload.kind_name(),
            text(&labels.join(";")),
            p.lon,
            p.lat,
        );
    }
    s.push_str("</Document>\n</kml>\n");
    s.into_bytes()
}

/// Escaped character data with characters XML 1.0 cannot carry replaced by U+FFFD.
fn text(raw: &str) -> String {
    let legal = |c: char| matches!(c, '\t' | '\n' | '\r') || (c >= ' ' && !matches!(c, '\u{FFFE}' | '\u{FFFF}'));
    if raw.chars().all(legal) {
        escape(raw).into_owned()
    } else {
        let cleaned: String = raw.chars().map(|c| if legal(c) { c } else { '\u{FFFD}' }).collect();
        escape(&cleaned).into_owned()
    }
}

/// `id` attributes must be XML NCNames.
fn xml_id(report_id: &str) -> String {
    let mut out = String::from("r-");
    out.extend(report_id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' }));
    out
}
