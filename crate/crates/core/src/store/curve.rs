use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::StoreError;
use crate::levelset::LevelPoint;

/// `x1..xd,z1..zd,r,theta1..theta{d-2},phi,F`.
pub fn curve_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    h.extend((1..=dim).map(|i| format!("z{i}")));
    h.push("r".into());
    h.extend((1..=dim.saturating_sub(2)).map(|i| format!("theta{i}")));
    h.push("phi".into());
    h.push("F".into());
    h
}

/// Writes one row per point with 17 significant digits.
pub fn export_curve(points: &[LevelPoint], path: &Path) -> Result<(), StoreError> {
    let first = points.first().ok_or(StoreError::EmptyCurve)?;
    let dim = first.x.len();
    if points
        .iter()
        .any(|p| p.x.len() != dim || p.z.len() != dim || p.latitudes.len() != dim.saturating_sub(2))
    {
        return Err(StoreError::malformed(path, "points of mixed dimension"));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(curve_header(dim))
        .map_err(|e| csv_err(path, e))?;
    for p in points {
        let row =
            p.x.iter()
                .chain(&p.z)
                .chain(std::iter::once(&p.r))
                .chain(&p.latitudes)
                .chain([&p.azimuth, &p.value])
                .map(|v| format!("{v:.16e}"));
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| StoreError::io(path, e))
}

pub fn import_curve(path: &Path) -> Result<Vec<LevelPoint>, StoreError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let cols = header.len();
    // 3d + 1 columns for every d ≥ 1.
    let dim = (cols.max(1) - 1) / 3;
    if cols < 5 || header.iter().collect::<Vec<_>>() != curve_header(dim) {
        return Err(StoreError::malformed(path, "unexpected curve header"));
    }
    let nlat = dim.saturating_sub(2);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| StoreError::malformed(path, e))?;
        out.push(LevelPoint {
            x: v[..dim].to_vec(),
            z: v[dim..2 * dim].to_vec(),
            r: v[2 * dim],
            latitudes: v[2 * dim + 1..2 * dim + 1 + nlat].to_vec(),
            azimuth: v[2 * dim + 1 + nlat],
            value: v[2 * dim + 2 + nlat],
        });
    }
    Ok(out)
}

fn csv_err(path: &Path, e: csv::Error) -> StoreError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => StoreError::io(path, io),
            _ => unreachable!(),
        }
    } else {
        StoreError::malformed(path, e)
    }
}

const SVG_SIZE: f64 = 480.0;
const SVG_MARGIN: f64 = 40.0;

/// Draws each polyline over `bounds` (`[(x_lo, x_hi), (y_lo, y_hi)]`) with
/// axes and end labels.
pub fn export_svg(
    polylines: &[Vec<[f64; 2]>],
    bounds: [(f64, f64); 2],
    path: &Path,
) -> Result<(), StoreError> {
    if polylines.iter().all(|l| l.is_empty()) {
        return Err(StoreError::EmptyCurve);
    }
    let [(x0, x1), (y0, y1)] = bounds;
    if !(x1 > x0 && y1 > y0) {
        return Err(StoreError::malformed(path, "empty SVG bounds"));
    }
    let inner = SVG_SIZE - 2.0 * SVG_MARGIN;
    let sx = |x: f64| SVG_MARGIN + (x - x0) / (x1 - x0) * inner;
    let sy = |y: f64| SVG_SIZE - SVG_MARGIN - (y - y0) / (y1 - y0) * inner;
    let (left, right, top, bottom) = (
        SVG_MARGIN,
        SVG_SIZE - SVG_MARGIN,
        SVG_MARGIN,
        SVG_SIZE - SVG_MARGIN,
    );
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">"#
    );
    let _ = writeln!(
        s,
        r#"  <g stroke="black" stroke-width="1"><line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/><line x1="{left}" y1="{bottom}" x2="{left}" y2="{top}"/></g>"#
    );
    let _ = writeln!(s, r#"  <g font-size="11" font-family="sans-serif">"#);
    let labels = [
        (left, bottom + 15.0, "start", x0.to_string()),
        (right, bottom + 15.0, "end", x1.to_string()),
        (left - 4.0, bottom, "end", y0.to_string()),
        (left - 4.0, top + 10.0, "end", y1.to_string()),
        (
            (left + right) / 2.0,
            bottom + 30.0,
            "middle",
            "x1".to_string(),
        ),
        (
            left - 25.0,
            (top + bottom) / 2.0,
            "middle",
            "x2".to_string(),
        ),
    ];
    for (x, y, anchor, text) in labels {
        let _ = writeln!(
            s,
            r#"    <text x="{x}" y="{y}" text-anchor="{anchor}">{text}</text>"#
        );
    }
    s.push_str("  </g>\n");
    for line in polylines.iter().filter(|l| !l.is_empty()) {
        let pts: Vec<String> = line
            .iter()
            .map(|p| format!("{:.3},{:.3}", sx(p[0]), sy(p[1])))
            .collect();
        let _ = writeln!(
            s,
            r#"  <polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
    }
    s.push_str("</svg>\n");
    fs::write(path, s).map_err(|e| StoreError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(i: f64) -> LevelPoint {
        LevelPoint {
            z: vec![i, -i, 0.5],
            x: vec![0.1 * i, 1.0 / 3.0, std::f64::consts::PI],
            r: i + 1.0,
            latitudes: vec![0.7],
            azimuth: 1.0 + i,
            value: 2.0,
        }
    }

    #[test]
    fn header_layout() {
        assert_eq!(curve_header(2).join(","), "x1,x2,z1,z2,r,phi,F");
        assert_eq!(
            curve_header(3).join(","),
            "x1,x2,x3,z1,z2,z3,r,theta1,phi,F"
        );
        assert_eq!(curve_header(1).join(","), "x1,z1,r,phi,F");
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let pts: Vec<_> = (0..3).map(|i| pt(i as f64)).collect();
        export_curve(&pts, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 4);
        assert_eq!(import_curve(&path).unwrap(), pts);
        assert!(matches!(
            export_curve(&[], &path),
            Err(StoreError::EmptyCurve)
        ));
    }

    #[test]
    fn svg_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.svg");
        let line = vec![[-0.4, -0.4], [0.0, 0.3], [0.4, 0.1]];
        export_svg(&[line], [(-0.4, 0.4), (-0.4, 0.4)], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        assert_eq!(
            doc.descendants()
                .filter(|n| n.has_tag_name("polyline"))
                .count(),
            1
        );
    }
}
