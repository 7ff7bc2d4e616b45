//! Grasp text files. One record per line:
//!
//! ```text
//! x y z roll pitch yaw quality [confidence]
//! ```
//!
//! Numbers are written with 17 significant digits; `#` starts a comment and
//! a `# source: <text>` comment carries the set's provenance string.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{EulerAngles, GraspPose, Vec3};
use crate::sampler::{GraspLabelSet, GraspQuality};

const SOURCE_PREFIX: &str = "# source:";

pub fn read_grasps(path: impl AsRef<Path>) -> Result<GraspLabelSet> {
    let path = path.as_ref();
    parse_grasps(&super::read_text(path)?, path)
}

pub fn write_grasps(set: &GraspLabelSet, path: impl AsRef<Path>) -> Result<()> {
    super::write_bytes(path.as_ref(), format_grasps(set)?.as_bytes())
}

/// Serializes a set with angles in their canonical ranges.
pub fn format_grasps(set: &GraspLabelSet) -> Result<String> {
    set.validate()?;
    let mut out = String::new();
    if !set.source.is_empty() {
        if set.source.contains('\n') {
            return Err(Error::invalid("grasp set source must be a single line"));
        }
        let _ = writeln!(out, "{SOURCE_PREFIX} {}", set.source);
    }
    out.push_str("# x y z roll pitch yaw quality confidence\n");
    for (pose, quality) in set.grasps.iter().zip(&set.labels) {
        let pose = pose.canonicalized();
        let e = pose.euler();
        let t = pose.translation;
        let _ = writeln!(
            out,
            "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {} {:.16e}",
            t.x, t.y, t.z, e.roll, e.pitch, e.yaw, quality, pose.confidence
        );
    }
    Ok(out)
}

/// Parses grasp text; `path` only labels error messages.
pub fn parse_grasps(text: &str, path: impl AsRef<Path>) -> Result<GraspLabelSet> {
    let path = path.as_ref();
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut source = String::new();
    let mut grasps = Vec::new();
    let mut labels = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let n = k + 1;
        if let Some(rest) = raw.trim_start().strip_prefix(SOURCE_PREFIX) {
            source = rest.trim().to_string();
            continue;
        }
        let line = raw.split('#').next().unwrap_or("");
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 7 && fields.len() != 8 {
            return Err(err(n, format!("expected 7 or 8 fields, found {}", fields.len())));
        }
        let mut num = [0.0f64; 6];
        for (v, s) in num.iter_mut().zip(&fields[..6]) {
            *v = s.parse().map_err(|_| err(n, format!("invalid number '{s}'")))?;
            if !v.is_finite() {
                return Err(err(n, format!("non-finite value '{s}'")));
            }
        }
        let quality: GraspQuality = fields[6].parse().map_err(|e: Error| err(n, e.to_string()))?;
        let confidence = match fields.get(7) {
            None => 1.0,
            Some(s) => {
                let c: f64 = s.parse().map_err(|_| err(n, format!("invalid confidence '{s}'")))?;
                if !(0.0..=1.0).contains(&c) {
                    return Err(err(n, format!("confidence {c} outside [0, 1]")));
                }
                c
            }
        };
        let [x, y, z, roll, pitch, yaw] = num;
        if !(-FRAC_PI_2..=FRAC_PI_2).contains(&pitch) {
            return Err(err(n, format!("pitch {pitch} outside [-pi/2, pi/2]")));
        }
        let pose = GraspPose::from_euler(EulerAngles::new(roll, pitch, yaw), Vec3::new(x, y, z))
            .map_err(|e| err(n, e.to_string()))?
            .canonicalized()
            .with_confidence(confidence);
        grasps.push(pose);
        labels.push(quality);
    }
    GraspLabelSet::new(grasps, labels, source)
}
