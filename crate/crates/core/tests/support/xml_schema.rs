//! Structural validation of GPX 1.1 and KML 2.2 documents against the parts
//! of their XSDs the exporter uses: namespaces, element order and
//! cardinality, required attributes and simple-type ranges.
#![allow(dead_code)]

use roxmltree::{Document, Node};

pub const GPX_NS: &str = "http://www.topografix.com/GPX/1/1";
pub const KML_NS: &str = "http://www.opengis.net/kml/2.2";

fn elements<'a, 'i>(n: Node<'a, 'i>) -> Vec<Node<'a, 'i>> {
    n.children().filter(|c| c.is_element()).collect()
}

fn expect_text_only(n: Node<'_, '_>) -> Result<(), String> {
    match elements(n).first() {
        Some(c) => Err(format!("<{}> must not contain <{}>", n.tag_name().name(), c.tag_name().name())),
        None => Ok(()),
    }
}

/// Children must appear in `order` (a sequence of optional or repeated
/// slots), each name at most once unless listed in `repeat`.
fn check_sequence(n: Node<'_, '_>, ns: &str, order: &[&str], repeat: &[&str]) -> Result<(), String> {
    let mut slot = 0;
    let mut last: Option<&str> = None;
    for c in elements(n) {
        if c.tag_name().namespace() != Some(ns) {
            return Err(format!("<{}> in foreign namespace", c.tag_name().name()));
        }
        let name = c.tag_name().name();
        let pos = order[slot..]
            .iter()
            .position(|o| *o == name)
            .map(|p| p + slot)
            .ok_or_else(|| format!("<{name}> out of order or not allowed in <{}>", n.tag_name().name()))?;
        if pos == slot && last == Some(name) && !repeat.contains(&name) {
            return Err(format!("<{name}> repeated in <{}>", n.tag_name().name()));
        }
        slot = pos;
        last = Some(name);
    }
    Ok(())
}

/// xsd:dateTime in the UTC form the exporters emit.
pub fn is_datetime(s: &str) -> bool {
    chrono::DateTime::parse_from_rfc3339(s).is_ok()
}

fn decimal_attr(n: Node<'_, '_>, name: &str) -> Result<f64, String> {
    let raw = n.attribute(name).ok_or_else(|| format!("<{}> missing @{name}", n.tag_name().name()))?;
    let ok = !raw.is_empty()
        && raw.trim_start_matches('-').chars().all(|c| c.is_ascii_digit() || c == '.')
        && raw.matches('.').count() <= 1;
    if !ok {
        return Err(format!("@{name}={raw} is not an xsd:decimal"));
    }
    raw.parse().map_err(|_| format!("@{name}={raw} unparsable"))
}

pub fn validate_gpx(text: &str) -> Result<usize, String> {
    let doc = Document::parse(text).map_err(|e| e.to_string())?;
    let root = doc.root_element();
    if root.tag_name().name() != "gpx" || root.tag_name().namespace() != Some(GPX_NS) {
        return Err("root must be gpx in the GPX 1.1 namespace".into());
    }
    if root.attribute("version") != Some("1.1") {
        return Err("gpx@version must be 1.1".into());
    }
    if root.attribute("creator").is_none_or(str::is_empty) {
        return Err("gpx@creator is required".into());
    }
    check_sequence(root, GPX_NS, &["metadata", "wpt", "rte", "trk", "extensions"], &["wpt", "rte", "trk"])?;
    let mut points = 0;
    for child in elements(root) {
        match child.tag_name().name() {
            "metadata" => {
                check_sequence(
                    child,
                    GPX_NS,
                    &["name", "desc", "author", "copyright", "link", "time", "keywords", "bounds", "extensions"],
                    &["link"],
                )?;
                elements(child).into_iter().try_for_each(|c| match c.tag_name().name() {
                    "name" | "desc" | "keywords" => expect_text_only(c),
                    _ => Ok(()),
                })?;
            }
            "trk" => {
                check_sequence(
                    child,
                    GPX_NS,
                    &["name", "cmt", "desc", "src", "link", "number", "type", "extensions", "trkseg"],
                    &["link", "trkseg"],
                )?;
                for seg in elements(child).into_iter().filter(|c| c.tag_name().name() == "trkseg") {
                    check_sequence(seg, GPX_NS, &["trkpt", "extensions"], &["trkpt"])?;
                    for pt in elements(seg).into_iter().filter(|c| c.tag_name().name() == "trkpt") {
                        let lat = decimal_attr(pt, "lat")?;
                        let lon = decimal_attr(pt, "lon")?;
                        if !(-90.0..=90.0).contains(&lat) {
                            return Err(format!("latitude {lat} out of range"));
                        }
                        if !(-180.0..180.0).contains(&lon) {
                            return Err(format!("longitude {lon} out of [-180, 180)"));
                        }
                        check_sequence(
                            pt,
                            GPX_NS,
                            &[
                                "ele", "time", "magvar", "geoidheight", "name", "cmt", "desc", "src", "link", "sym",
                                "type", "fix", "sat", "hdop", "vdop", "pdop", "ageofdgpsdata", "dgpsid", "extensions",
                            ],
                            &["link"],
                        )?;
                        for c in elements(pt) {
                            expect_text_only(c)?;
                            if c.tag_name().name() == "time" && !is_datetime(c.text().unwrap_or("")) {
                                return Err(format!("bad time {:?}", c.text()));
                            }
                        }
                        points += 1;
                    }
                }
            }
            _ => {}
        }
    }
    Ok(points)
}

pub fn validate_kml(text: &str) -> Result<usize, String> {
    let doc = Document::parse(text).map_err(|e| e.to_string())?;
    let root = doc.root_element();
    if root.tag_name().name() != "kml" || root.tag_name().namespace() != Some(KML_NS) {
        return Err("root must be kml in the KML 2.2 namespace".into());
    }
    let top = elements(root);
    if top.len() != 1 || top[0].tag_name().name() != "Document" {
        return Err("kml must hold exactly one Document".into());
    }
    let document = top[0];
    check_sequence(document, KML_NS, &["name", "description", "Placemark"], &["Placemark"])?;
    let mut ids = std::collections::HashSet::new();
    let mut placemarks = 0;
    for pm in elements(document).into_iter().filter(|c| c.tag_name().name() == "Placemark") {
        if let Some(id) = pm.attribute("id") {
            let first = id.chars().next().unwrap_or('0');
            let ncname = (first.is_alphabetic() || first == '_')
                && id.chars().all(|c| c.is_alphanumeric() || matches!(c, '-' | '_' | '.'));
            if !ncname || !ids.insert(id.to_string()) {
                return Err(format!("Placemark id {id:?} is not a unique NCName"));
            }
        }
        check_sequence(
            pm,
            KML_NS,
            &["name", "visibility", "open", "Snippet", "description", "TimeStamp", "styleUrl", "ExtendedData", "Point"],
            &[],
        )?;
        let mut has_point = false;
        for c in elements(pm) {
            match c.tag_name().name() {
                "name" | "description" => expect_text_only(c)?,
                "TimeStamp" => {
                    let when = elements(c);
                    if when.len() != 1 || when[0].tag_name().name() != "when" || !is_datetime(when[0].text().unwrap_or(""))
                    {
                        return Err("TimeStamp needs one valid <when>".into());
                    }
                }
                "ExtendedData" => {
                    for d in elements(c) {
                        if d.tag_name().name() != "Data" || d.attribute("name").is_none() {
                            return Err("ExtendedData holds named Data only".into());
                        }
                        let v = elements(d);
                        if v.len() != 1 || v[0].tag_name().name() != "value" {
                            return Err("Data holds one value".into());
                        }
                    }
                }
                "Point" => {
                    let coords = elements(c);
                    if coords.len() != 1 || coords[0].tag_name().name() != "coordinates" {
                        return Err("Point holds one coordinates element".into());
                    }
                    let raw = coords[0].text().unwrap_or("").trim();
                    let parts: Vec<f64> = raw.split(',').map(|p| p.parse::<f64>()).collect::<Result<_, _>>().map_err(|_| format!("bad coordinates {raw:?}"))?;
                    if !(2..=3).contains(&parts.len())
                        || !(-180.0..=180.0).contains(&parts[0])
                        || !(-90.0..=90.0).contains(&parts[1])
                    {
                        return Err(format!("coordinates {raw:?} out of range"));
                    }
                    has_point = true;
                }
                _ => {}
            }
        }
        if !has_point {
            return Err("Placemark without geometry".into());
        }
        placemarks += 1;
    }
    Ok(placemarks)
}
