use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{CompactFormatter, Formatter};

use crate::assignment::KinodynamicLimits;
use crate::geometry::{Point, Workspace};
use crate::trajectory::{Trajectory, TrajectorySet};

use super::{HarnessError, Scenario};

/// Writes every float in plain decimal with 17 significant digits, so
/// values round-trip exactly and the text depends only on the value.
struct DecimalFormatter;

impl Formatter for DecimalFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        if v == 0.0 {
            return w.write_all(b"0.0");
        }
        let exp = v.abs().log10().floor() as i32;
        let prec = (16 - exp).clamp(1, 400) as usize;
        write!(w, "{v:.prec$}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }

    fn write_char_escape<W: ?Sized + Write>(
        &mut self,
        w: &mut W,
        e: serde_json::ser::CharEscape,
    ) -> io::Result<()> {
        CompactFormatter.write_char_escape(w, e)
    }
}

/// Compact JSON with fixed-precision decimal floats.
pub fn to_json<T: Serialize>(value: &T) -> Result<String, HarnessError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, DecimalFormatter);
    value.serialize(&mut ser).map_err(|e| HarnessError::InvalidInput(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| HarnessError::InvalidInput(e.to_string()))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}

/// Robot placements stored next to a map file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub robot_radius: f64,
    #[serde(default)]
    pub seed: u64,
    pub starts: Vec<Point>,
    pub goals: Vec<Point>,
    /// Derived from the robot radius when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<KinodynamicLimits>,
}

impl ScenarioFile {
    pub fn from_scenario(s: &Scenario) -> Self {
        ScenarioFile {
            robot_radius: s.limits.robot_radius,
            seed: s.seed,
            starts: s.starts.clone(),
            goals: s.goals.clone(),
            limits: Some(s.limits),
        }
    }

    pub fn into_scenario(self, workspace: Workspace) -> Result<Scenario, HarnessError> {
        let limits = self.limits.unwrap_or_else(|| KinodynamicLimits::for_grid(0.25, 5, self.robot_radius));
        let s = Scenario { workspace, starts: self.starts, goals: self.goals, limits, seed: self.seed };
        s.validate()?;
        Ok(s)
    }
}

/// Trajectories keyed by robot id; every robot starts at step 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub dt: f64,
    pub robots: BTreeMap<String, Vec<Point>>,
}

impl TrajectoryFile {
    pub fn from_set(set: &TrajectorySet) -> Self {
        TrajectoryFile {
            dt: set.dt,
            robots: set.trajectories.iter().map(|t| (t.robot.to_string(), t.points.clone())).collect(),
        }
    }

    pub fn into_set(self) -> Result<TrajectorySet, HarnessError> {
        let mut ts = Vec::new();
        for (k, points) in self.robots {
            let robot = k.parse().map_err(|_| HarnessError::InvalidInput(format!("bad robot id {k:?}")))?;
            ts.push(Trajectory::new(robot, 0, points));
        }
        ts.sort_by_key(|t| t.robot);
        Ok(TrajectorySet::new(self.dt, ts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_are_fixed_precision_and_round_trip() {
        let vs = vec![0.1, -1.0 / 3.0, 0.0, 1.75, 12345.678, 1e-7];
        let s = to_json(&vs).unwrap();
        assert!(s.starts_with("[0.10000000000000001,"), "{s}");
        assert!(!s.contains('e'));
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vs);
    }

    #[test]
    fn trajectory_file_round_trip() {
        let set = TrajectorySet::new(
            0.1,
            vec![
                Trajectory::new(0, 0, vec![Point::new(0.0, 0.5), Point::new(0.1, 0.5)]),
                Trajectory::new(1, 0, vec![Point::new(-0.3, 0.2), Point::new(-0.2, 0.2)]),
            ],
        );
        let text = to_json(&TrajectoryFile::from_set(&set)).unwrap();
        let back: TrajectoryFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_set().unwrap(), set);
    }
}
