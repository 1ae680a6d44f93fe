//! On-disk formats.
//!
//! * Polar scan (`.prs`, little-endian binary): magic `PRS1`, `f64` timestamp,
//!   `u32` azimuth count, `u32` range-bin count, `f64` range resolution [m],
//!   then azimuth-major `f32` powers.
//! * Point scan (CSV): `timestamp_s,x_m,y_m,range_m,azimuth_rad,vr_mps,power`,
//!   empty field = absent. A scan without detections is stored as a single
//!   row carrying only the timestamp.
//! * Trajectory (CSV): `timestamp_s,x_m,y_m,theta_rad`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::{MeasurementAccuracy, PointScan, PolarScan, RadarPoint, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{polar_covariance, Pose2, Vec2};

pub const POLAR_MAGIC: &[u8; 4] = b"PRS1";
const POINT_HEADER: &str = "timestamp_s,x_m,y_m,range_m,azimuth_rad,vr_mps,power";
const TRAJECTORY_HEADER: &str = "timestamp_s,x_m,y_m,theta_rad";

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn load_polar_scan(path: impl AsRef<Path>) -> Result<PolarScan> {
    let path = path.as_ref();
    read_polar_scan(open(path)?, path)
}

pub fn read_polar_scan(mut reader: impl Read, path: &Path) -> Result<PolarScan> {
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    const HEADER: usize = 4 + 8 + 4 + 4 + 8;
    if bytes.len() < HEADER {
        return Err(Error::malformed(path, "truncated header"));
    }
    if &bytes[0..4] != POLAR_MAGIC {
        return Err(Error::malformed(path, "bad magic"));
    }
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let timestamp = f64_at(4);
    let azimuth_count = u32_at(12) as usize;
    let range_bin_count = u32_at(16) as usize;
    let range_resolution = f64_at(20);
    if azimuth_count == 0 || range_bin_count == 0 {
        return Err(Error::malformed(path, "zero azimuth or range-bin count"));
    }
    if !timestamp.is_finite() {
        return Err(Error::malformed(path, "non-finite timestamp"));
    }
    if !(range_resolution.is_finite() && range_resolution > 0.0) {
        return Err(Error::out_of_range(
            path,
            format!("range resolution {range_resolution}"),
        ));
    }
    let count = azimuth_count
        .checked_mul(range_bin_count)
        .ok_or_else(|| Error::malformed(path, "shape overflow"))?;
    if bytes.len() != HEADER + 4 * count {
        return Err(Error::malformed(
            path,
            format!(
                "expected {} power bytes for {azimuth_count}x{range_bin_count}, found {}",
                4 * count,
                bytes.len() - HEADER
            ),
        ));
    }
    let mut power = Vec::with_capacity(count);
    for (i, chunk) in bytes[HEADER..].chunks_exact(4).enumerate() {
        let p = f32::from_le_bytes(chunk.try_into().unwrap());
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::out_of_range(
                path,
                format!(
                    "power {p} at azimuth {} bin {}",
                    i / range_bin_count,
                    i % range_bin_count
                ),
            ));
        }
        power.push(p);
    }
    Ok(PolarScan {
        timestamp,
        azimuth_count,
        range_bin_count,
        range_resolution,
        power,
    })
}

pub fn save_polar_scan(scan: &PolarScan, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_polar_scan(scan, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_polar_scan(scan: &PolarScan, w: &mut impl Write) -> std::io::Result<()> {
    w.write_all(POLAR_MAGIC)?;
    w.write_all(&scan.timestamp.to_le_bytes())?;
    w.write_all(&(scan.azimuth_count as u32).to_le_bytes())?;
    w.write_all(&(scan.range_bin_count as u32).to_le_bytes())?;
    w.write_all(&scan.range_resolution.to_le_bytes())?;
    for p in &scan.power {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

fn parse_f64(field: &str, path: &Path, line: usize, name: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::malformed(path, format!("line {line}: bad {name} `{field}`")))?;
    if !v.is_finite() {
        return Err(Error::malformed(path, format!("line {line}: non-finite {name}")));
    }
    Ok(v)
}

fn parse_opt_f64(field: &str, path: &Path, line: usize, name: &str) -> Result<Option<f64>> {
    if field.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(field, path, line, name).map(Some)
    }
}

fn check_header(first: Option<std::io::Result<String>>, expected: &str, path: &Path) -> Result<()> {
    match first {
        Some(Ok(h)) if h.trim_end() == expected => Ok(()),
        Some(Ok(h)) => Err(Error::malformed(path, format!("unexpected header `{h}`"))),
        Some(Err(e)) => Err(Error::io(path, e)),
        None => Err(Error::malformed(path, "empty file")),
    }
}

/// Loads a point scan, assigning covariances with automotive default accuracy.
pub fn load_point_scan(path: impl AsRef<Path>) -> Result<PointScan> {
    let path = path.as_ref();
    read_point_scan(open(path)?, path, &MeasurementAccuracy::automotive())
}

pub fn read_point_scan(
    reader: impl BufRead,
    path: &Path,
    accuracy: &MeasurementAccuracy,
) -> Result<PointScan> {
    let mut lines = reader.lines();
    check_header(lines.next(), POINT_HEADER, path)?;
    let mut timestamp = None;
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::malformed(
                path,
                format!("line {line_no}: expected 7 fields, found {}", fields.len()),
            ));
        }
        let t = parse_f64(fields[0], path, line_no, "timestamp_s")?;
        match timestamp {
            None => timestamp = Some(t),
            Some(t0) if t0 != t => {
                return Err(Error::malformed(
                    path,
                    format!("line {line_no}: mixed timestamps {t0} and {t}"),
                ))
            }
            _ => {}
        }
        if fields[1..].iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let x = parse_f64(fields[1], path, line_no, "x_m")?;
        let y = parse_f64(fields[2], path, line_no, "y_m")?;
        let range = parse_f64(fields[3], path, line_no, "range_m")?;
        let azimuth = parse_f64(fields[4], path, line_no, "azimuth_rad")?;
        let radial_velocity = parse_opt_f64(fields[5], path, line_no, "vr_mps")?;
        let power = parse_opt_f64(fields[6], path, line_no, "power")?;
        if range < 0.0 {
            return Err(Error::out_of_range(path, format!("line {line_no}: range {range}")));
        }
        if let Some(p) = power {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::out_of_range(path, format!("line {line_no}: power {p}")));
            }
        }
        points.push(RadarPoint {
            position: Vec2::new(x, y),
            radial_velocity,
            power,
            range,
            azimuth,
            cov: polar_covariance(range, azimuth, accuracy.range_sigma, accuracy.azimuth_sigma),
        });
    }
    let timestamp = timestamp.ok_or_else(|| Error::malformed(path, "no rows"))?;
    Ok(PointScan { timestamp, points })
}

pub fn save_point_scan(scan: &PointScan, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_point_scan(scan, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_point_scan(scan: &PointScan, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "{POINT_HEADER}")?;
    if scan.points.is_empty() {
        writeln!(w, "{},,,,,,", scan.timestamp)?;
    }
    for p in &scan.points {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            scan.timestamp,
            p.position[0],
            p.position[1],
            p.range,
            p.azimuth,
            opt(p.radial_velocity),
            opt(p.power)
        )?;
    }
    Ok(())
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    read_trajectory(open(path)?, path)
}

pub fn read_trajectory(reader: impl BufRead, path: &Path) -> Result<Trajectory> {
    let mut lines = reader.lines();
    check_header(lines.next(), TRAJECTORY_HEADER, path)?;
    let mut traj = Trajectory::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::malformed(
                path,
                format!("line {line_no}: expected 4 fields, found {}", fields.len()),
            ));
        }
        let t = parse_f64(fields[0], path, line_no, "timestamp_s")?;
        let x = parse_f64(fields[1], path, line_no, "x_m")?;
        let y = parse_f64(fields[2], path, line_no, "y_m")?;
        let theta = parse_f64(fields[3], path, line_no, "theta_rad")?;
        if let Some(&last) = traj.stamps.last() {
            if t <= last {
                return Err(Error::NonMonotonicTime {
                    path: PathBuf::from(path),
                    timestamp: t,
                });
            }
        }
        traj.push(t, Pose2::new(x, y, theta));
    }
    Ok(traj)
}

pub fn save_trajectory(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_trajectory(traj, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trajectory(traj: &Trajectory, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for (t, p) in traj.stamps.iter().zip(&traj.poses) {
        writeln!(w, "{},{},{},{}", t, p.x, p.y, p.theta)?;
    }
    Ok(())
}
