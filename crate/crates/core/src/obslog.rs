//! JSON-lines observation log: one frame per line with the odometry pose
//! and the planes seen in the sensor frame.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Plane, Pose3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub odom: Pose3,
    pub planes: Vec<Plane>,
}

pub fn read_log<R: BufRead>(reader: R) -> Result<Vec<Frame>> {
    let mut frames = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: Frame = serde_json::from_str(&line).map_err(|e| Error::Record {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(prev) = frames.last().map(|f: &Frame| f.t) {
            if !(frame.t >= prev) {
                return Err(Error::Record {
                    line: i + 1,
                    message: format!("timestamp {} precedes {prev}", frame.t),
                });
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

pub fn parse_log(text: &str) -> Result<Vec<Frame>> {
    read_log(text.as_bytes())
}

pub fn write_log<W: Write>(mut writer: W, frames: &[Frame]) -> Result<()> {
    for f in frames {
        serde_json::to_writer(&mut writer, f)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Forward odometry increments `odom[k-1]⁻¹ ⊕ odom[k]`; the first entry is identity.
pub fn odom_increments(frames: &[Frame]) -> Vec<Pose3> {
    let mut out = Vec::with_capacity(frames.len());
    for (k, f) in frames.iter().enumerate() {
        out.push(if k == 0 {
            Pose3::identity()
        } else {
            frames[k - 1].odom.between(&f.odom)
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn round_trip() {
        let frames = vec![
            Frame {
                t: 0.0,
                odom: Pose3::identity(),
                planes: vec![Plane::new(Vector3::new(1.0, 0.0, 0.0), -2.0).unwrap()],
            },
            Frame {
                t: 0.1,
                odom: Pose3::from_xyz_yaw(0.1, 0.0, 0.0, 0.0),
                planes: vec![],
            },
        ];
        let mut buf = Vec::new();
        write_log(&mut buf, &frames).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "{\"t\":0.0,\"odom\":[0.0,0.0,0.0,1.0,0.0,0.0,0.0],\"planes\":[[1.0,0.0,0.0,-2.0]]}\n"
        ));
        assert_eq!(parse_log(&text).unwrap(), frames);
    }

    #[test]
    fn bad_record_reports_line() {
        let text = "{\"t\":0,\"odom\":[0,0,0,1,0,0,0],\"planes\":[]}\n{\"t\":1}\n";
        assert!(matches!(parse_log(text), Err(Error::Record { line: 2, .. })));
        let text = "{\"t\":1,\"odom\":[0,0,0,1,0,0,0],\"planes\":[]}\n{\"t\":0,\"odom\":[0,0,0,1,0,0,0],\"planes\":[]}\n";
        assert!(matches!(parse_log(text), Err(Error::Record { line: 2, .. })));
    }

    #[test]
    fn increments_recompose_the_trajectory() {
        let poses = [
            Pose3::identity(),
            Pose3::from_xyz_yaw(1.0, 0.0, 0.0, 0.3),
            Pose3::from_xyz_yaw(1.5, 0.7, 0.0, -0.4),
        ];
        let frames: Vec<Frame> = poses
            .iter()
            .enumerate()
            .map(|(i, p)| Frame { t: i as f64, odom: *p, planes: vec![] })
            .collect();
        let inc = odom_increments(&frames);
        let mut acc = Pose3::identity();
        for (i, d) in inc.iter().enumerate() {
            acc = acc.compose(d);
            assert!((acc.t - poses[i].t).norm() < 1e-12);
        }
    }
}
