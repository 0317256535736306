use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::field::{AxiField, Frame};
use super::grid::{GridDescriptor, GridRZ};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MHDLAB01";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnapshotHeader {
    grid: GridDescriptor,
    frame: Frame,
    time: f64,
    components: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<String>,
}

/// Writes `MAGIC`, a little-endian `u64` header length, the JSON header and
/// the component arrays (row-major, `f64` little-endian).
pub fn write_snapshot(path: &Path, x: &AxiField, time: f64) -> Result<()> {
    write_tagged_snapshot(path, x, time, None)
}

/// [`write_snapshot`] with a free-form tag stored in the header.
pub fn write_tagged_snapshot(path: &Path, x: &AxiField, time: f64, tag: Option<&str>) -> Result<()> {
    let header = SnapshotHeader {
        grid: x.grid.descriptor(),
        frame: x.frame,
        time,
        components: ["u_r", "u_theta", "u_z", "phi", "b_theta", "pressure"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        tag: tag.map(str::to_string),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    let mut arrays: Vec<&DMatrix<f64>> = x.components().to_vec();
    arrays.push(&x.pressure);
    for m in arrays {
        for j in 0..m.nrows() {
            for i in 0..m.ncols() {
                out.write_all(&m[(j, i)].to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Inverse of [`write_snapshot`]; returns the field and its time stamp.
pub fn read_snapshot(path: &Path) -> Result<(AxiField, f64)> {
    read_tagged_snapshot(path).map(|(x, t, _)| (x, t))
}

/// Field, time stamp and tag.
pub fn read_tagged_snapshot(path: &Path) -> Result<(AxiField, f64, Option<String>)> {
    let mut inp = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    inp.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::InvalidArgument(format!("{} is not a snapshot", path.display())));
    }
    let mut len = [0u8; 8];
    inp.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    inp.read_exact(&mut json)?;
    let header: SnapshotHeader = serde_json::from_slice(&json)?;
    let grid = GridRZ::from_descriptor(&header.grid)?;
    let mut x = AxiField::zeros(&grid, header.frame);
    let mut buf = [0u8; 8];
    let mut fill = |m: &mut DMatrix<f64>| -> Result<()> {
        for j in 0..m.nrows() {
            for i in 0..m.ncols() {
                inp.read_exact(&mut buf)?;
                m[(j, i)] = f64::from_le_bytes(buf);
            }
        }
        Ok(())
    };
    for m in x.components_mut() {
        fill(m)?;
    }
    fill(&mut x.pressure)?;
    Ok((x, header.time, header.tag))
}

/// CSV slice at the axial row nearest `z`: `r,u_r,u_theta,u_z,b_r,b_theta,b_z`
/// with all components at centres.
pub fn write_radial_slice(path: &Path, x: &AxiField, z: f64) -> Result<()> {
    let g = &x.grid;
    let j = (0..g.n_z)
        .min_by(|&a, &b| (g.z[a] - z).abs().total_cmp(&(g.z[b] - z).abs()))
        .unwrap_or(0);
    let v = x.velocity();
    let w = x.magnetic();
    let mut wr = csv::Writer::from_path(path)?;
    wr.write_record(["r", "u_r", "u_theta", "u_z", "b_r", "b_theta", "b_z"])?;
    for i in 0..g.n_r {
        let row = [g.r_c[i], v.r[(j, i)], v.theta[(j, i)], v.z[(j, i)], w.r[(j, i)], w.theta[(j, i)], w.z[(j, i)]];
        wr.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::grid::ZTopology;
    use super::*;

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let g = GridRZ::new(8, 6, 3.0, ZTopology::Truncated { z_max: 3.0 }).unwrap();
        let mut x = AxiField::zeros(&g, Frame::Similarity);
        x.u_theta = g.sample_centre(|r, z| r.sin() * z.cos() + 1e-300);
        x.phi = g.sample_face(|r, z| r * r * (z / 3.0).exp());
        x.pressure = g.sample_centre(|r, z| r - z);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        write_snapshot(&path, &x, 1.25).unwrap();
        let (y, t) = read_snapshot(&path).unwrap();
        assert_eq!(t, 1.25);
        assert_eq!(y.frame, Frame::Similarity);
        for (a, b) in x.components().into_iter().zip(y.components()) {
            assert_eq!(a, b);
        }
        assert_eq!(x.pressure, y.pressure);
        write_radial_slice(&dir.path().join("s.csv"), &x, 0.0).unwrap();
        write_tagged_snapshot(&path, &x, 2.0, Some("abc")).unwrap();
        let (_, t, tag) = read_tagged_snapshot(&path).unwrap();
        assert_eq!((t, tag.as_deref()), (2.0, Some("abc")));
    }
}
