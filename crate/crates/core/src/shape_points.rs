//! Map-database shape points and their CSV representation.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::spline::HermiteSpline;

pub const SHAPE_POINT_HEADER: &str = "id,x_m,y_m,lane_count,lane_width_m";

/// Lane metadata attached to a shape point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneMeta {
    pub lane_count: u32,
    pub lane_width: f64,
}

impl LaneMeta {
    pub const FALLBACK: LaneMeta = LaneMeta {
        lane_count: 2,
        lane_width: 3.5,
    };

    pub fn road_width(&self) -> f64 {
        self.lane_count as f64 * self.lane_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapePoint {
    pub id: u64,
    pub position: Vec2,
    pub meta: Option<LaneMeta>,
}

/// Splines a run of shape points (Catmull-Rom tangents).
pub fn build_spline(points: &[ShapePoint]) -> Result<HermiteSpline> {
    let p: Vec<Vec2> = points.iter().map(|s| s.position).collect();
    HermiteSpline::catmull_rom(&p)
}

/// Thins shape points so consecutive points are at least `min_spacing` apart.
///
/// Map databases sample roads very unevenly; this is an optional step before
/// splining. The first and last points are always kept.
pub fn thin_shape_points(points: &[ShapePoint], min_spacing: f64) -> Vec<ShapePoint> {
    let Some((first, rest)) = points.split_first() else {
        return Vec::new();
    };
    let mut out = vec![*first];
    for (i, p) in rest.iter().enumerate() {
        let last = out.last().unwrap().position;
        let is_end = i + 1 == rest.len();
        if (p.position - last).norm() >= min_spacing {
            out.push(*p);
        } else if is_end && out.len() > 1 {
            // keep the true end point instead of the last interior one
            *out.last_mut().unwrap() = *p;
        } else if is_end && (p.position - last).norm() > 0.0 {
            out.push(*p);
        }
    }
    out
}

pub fn read_shape_points<R: Read>(reader: R, source: &Path) -> Result<Vec<ShapePoint>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(source, e.to_string()))?
        .clone();
    let expected: Vec<&str> = SHAPE_POINT_HEADER.split(',').collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::parse(
            source,
            format!("expected header `{SHAPE_POINT_HEADER}`"),
        ));
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(source, e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let bad = |what: &str| Error::parse(source, format!("row {}: bad {what}", line + 2));
        let id = field(0).parse().map_err(|_| bad("id"))?;
        let x: f64 = field(1).parse().map_err(|_| bad("x_m"))?;
        let y: f64 = field(2).parse().map_err(|_| bad("y_m"))?;
        let meta = match (field(3), field(4)) {
            ("", "") => None,
            (c, w) => {
                let lane_count: u32 = c.parse().map_err(|_| bad("lane_count"))?;
                let lane_width: f64 = w.parse().map_err(|_| bad("lane_width_m"))?;
                if lane_count < 1 || !(lane_width > 0.0) {
                    return Err(bad("lane metadata"));
                }
                Some(LaneMeta {
                    lane_count,
                    lane_width,
                })
            }
        };
        out.push(ShapePoint {
            id,
            position: Vec2::new(x, y),
            meta,
        });
    }
    Ok(out)
}

pub fn write_shape_points<W: Write>(mut w: W, points: &[ShapePoint]) -> std::io::Result<()> {
    writeln!(w, "{SHAPE_POINT_HEADER}")?;
    for p in points {
        match p.meta {
            Some(m) => writeln!(
                w,
                "{},{},{},{},{}",
                p.id, p.position.x, p.position.y, m.lane_count, m.lane_width
            )?,
            None => writeln!(w, "{},{},{},,", p.id, p.position.x, p.position.y)?,
        }
    }
    Ok(())
}

pub fn load_shape_points(path: &Path) -> Result<Vec<ShapePoint>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_shape_points(std::io::BufReader::new(f), path)
}

pub fn save_shape_points(path: &Path, points: &[ShapePoint]) -> Result<()> {
    let mut buf = Vec::new();
    write_shape_points(&mut buf, points).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(id: u64, x: f64, y: f64) -> ShapePoint {
        ShapePoint {
            id,
            position: Vec2::new(x, y),
            meta: None,
        }
    }

    #[test]
    fn csv_round_trip_with_and_without_meta() {
        let pts = vec![
            ShapePoint {
                id: 0,
                position: Vec2::new(1.25, -3.5),
                meta: Some(LaneMeta {
                    lane_count: 2,
                    lane_width: 3.5,
                }),
            },
            sp(1, 26.0, 0.1),
        ];
        let mut buf = Vec::new();
        write_shape_points(&mut buf, &pts).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,x_m,y_m,lane_count,lane_width_m\n"));
        assert!(text.contains("1,26,0.1,,\n"));
        let back = read_shape_points(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back, pts);
    }

    #[test]
    fn missing_header_is_rejected() {
        let data = "0,1,2,,\n";
        assert!(read_shape_points(data.as_bytes(), Path::new("mem")).is_err());
    }

    #[test]
    fn thinning_keeps_ends() {
        let pts: Vec<ShapePoint> = (0..11).map(|i| sp(i, i as f64, 0.0)).collect();
        let thin = thin_shape_points(&pts, 3.0);
        let xs: Vec<f64> = thin.iter().map(|p| p.position.x).collect();
        assert_eq!(xs, vec![0.0, 3.0, 6.0, 10.0]);
        assert!(build_spline(&thin).is_ok());
        assert!(build_spline(&[sp(0, 0.0, 0.0), sp(1, 0.0, 0.0)]).is_err());
    }
}
