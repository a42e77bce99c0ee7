//! Debug and figure-data dumps. Every file is written to a temporary sibling
//! first and renamed into place, so an interrupted run never leaves a
//! truncated file behind.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::synth::RangeProfile;
use crate::voting::ScoreMap;

/// Writes `bytes` to `path` via a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Profiles as records of one text header line
/// `profile run=<r> scan=<t> sensor=<n> n_c=<N_c> t_s=<T_s>` followed by
/// `N_c` little-endian f64 samples.
pub fn encode_profiles(records: &[(usize, RangeProfile)], sample_period: f64) -> Vec<u8> {
    let mut out = Vec::new();
    for (run, p) in records {
        let header = format!(
            "profile run={run} scan={} sensor={} n_c={} t_s={sample_period:e}\n",
            p.scan,
            p.sensor + 1,
            p.len()
        );
        out.extend_from_slice(header.as_bytes());
        for s in &p.samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
    }
    out
}

/// Inverse of [`encode_profiles`]; returns `(run, profile)` pairs.
pub fn decode_profiles(bytes: &[u8]) -> Result<Vec<(usize, RangeProfile)>> {
    let mut out = Vec::new();
    let mut rest = bytes;
    while !rest.is_empty() {
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| crate::Error::Parse("profile header without newline".into()))?;
        let header = std::str::from_utf8(&rest[..nl]).map_err(|e| crate::Error::Parse(e.to_string()))?;
        let field = |name: &str| -> Result<i64> {
            header
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(name).and_then(|v| v.strip_prefix('=')))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| crate::Error::Parse(format!("profile header lacks {name}: {header}")))
        };
        let (run, scan, sensor, n_c) = (field("run")?, field("scan")?, field("sensor")?, field("n_c")?);
        let body = &rest[nl + 1..];
        let len = n_c as usize * 8;
        if body.len() < len {
            return Err(crate::Error::Parse("truncated profile record".into()));
        }
        let samples = body[..len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        out.push((run as usize, RangeProfile::new(samples, scan, sensor as usize - 1)));
        rest = &body[len..];
    }
    Ok(out)
}

/// Score maps as records of a header line
/// `scoremap run=<r> n_x=<N_x> n_y=<N_y> scan=<t> kind=<kind>` followed by a
/// dense little-endian f64 block, x fastest.
pub fn encode_score_maps(records: &[(usize, ScoreMap)]) -> Vec<u8> {
    let mut out = Vec::new();
    for (run, m) in records {
        let header = format!(
            "scoremap run={run} n_x={} n_y={} scan={} kind={}\n",
            m.n_x,
            m.n_y,
            m.scan,
            m.kind.as_str()
        );
        out.extend_from_slice(header.as_bytes());
        for v in &m.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// One nonzero voxel of an opened window volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelRecord {
    pub run: usize,
    pub window: usize,
    pub i_x: usize,
    pub i_y: usize,
    pub scan: i64,
    pub score: f64,
    pub region: usize,
}

pub fn voxels_csv(records: &[VoxelRecord]) -> String {
    let mut s = String::from("run,window,i_x,i_y,scan,score,region_id\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.run, r.window, r.i_x, r.i_y, r.scan, r.score, r.region
        );
    }
    s
}

/// One extracted point measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRecord {
    pub run: usize,
    pub window: usize,
    pub region: usize,
    pub scan: i64,
    pub x: f64,
    pub y: f64,
    pub p: f64,
}

pub fn points_csv(records: &[PointRecord]) -> String {
    let mut s = String::from("run,window,region,scan,x,y,p\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.run, r.window, r.region, r.scan, r.x, r.y, r.p
        );
    }
    s
}

/// One reported trajectory point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub run: usize,
    pub method: String,
    pub track_id: usize,
    pub scan: i64,
    pub x: f64,
    pub y: f64,
    pub smoothed: bool,
}

pub fn trajectories_csv(records: &[TrajectoryRecord]) -> String {
    let mut s = String::from("run,method,track_id,scan,x,y,smoothed\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.run, r.method, r.track_id, r.scan, r.x, r.y, r.smoothed as u8
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voting::MapKind;

    #[test]
    fn profile_round_trip() {
        let recs = vec![
            (0, RangeProfile::new(vec![0.5, 1.25, 3.0], 4, 0)),
            (2, RangeProfile::new(vec![7.0, 0.0, f64::MIN_POSITIVE], -3, 3)),
        ];
        let bytes = encode_profiles(&recs, 61e-12);
        assert!(bytes.starts_with(b"profile run=0 scan=4 sensor=1 n_c=3 t_s=6.1e-11\n"));
        assert_eq!(decode_profiles(&bytes).unwrap(), recs);
        assert!(decode_profiles(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn score_map_layout() {
        let mut m = ScoreMap::zeros(2, 1, 7, MapKind::FusedThresholded);
        m.values = vec![1.0, 2.0];
        let bytes = encode_score_maps(&[(1, m)]);
        let header = b"scoremap run=1 n_x=2 n_y=1 scan=7 kind=fused-thresholded\n";
        assert!(bytes.starts_with(header));
        assert_eq!(bytes.len(), header.len() + 16);
        assert_eq!(&bytes[header.len()..header.len() + 8], &1.0f64.to_le_bytes());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = std::env::temp_dir().join(format!("uwb-dump-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert!(!dir.join("a.csv.partial").exists());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn csv_headers() {
        assert!(points_csv(&[]).starts_with("run,window,region,scan,x,y,p"));
        let t = trajectories_csv(&[TrajectoryRecord {
            run: 0,
            method: "proposed".into(),
            track_id: 3,
            scan: 5,
            x: 1.5,
            y: 2.0,
            smoothed: true,
        }]);
        assert_eq!(t.lines().nth(1), Some("0,proposed,3,5,1.5,2,1"));
    }
}
