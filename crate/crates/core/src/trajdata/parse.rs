use std::collections::HashSet;
use std::path::Path;

use super::{RawAnnotation, Scene};
use crate::error::{Error, Result};
use crate::FRAME_PERIOD;

/// Reads a whitespace-separated `frame agent x y` annotation file.
///
/// ETH/UCY files are annotated at 2.5 Hz, so the frame period defaults to
/// 0.4 s per annotated step; use [`Scene::with_source_rate`] for other logs.
/// A `#robot_id=<id>` header marks the robot's own track; other `#` lines
/// are comments. The scene is named after the file stem.
pub fn parse_annotations(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path)?;
    let name = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    parse_lines(&text, &name, path)
}

/// Same as [`parse_annotations`] over in-memory text.
pub fn parse_annotations_str(text: &str, name: &str) -> Result<Scene> {
    parse_lines(text, name, Path::new(name))
}

fn integral(field: &str, value: f64) -> std::result::Result<i64, String> {
    if value.fract() != 0.0 || !value.is_finite() {
        return Err(format!("{field} {value} is not an integer"));
    }
    Ok(value as i64)
}

fn parse_record(line: &str) -> std::result::Result<RawAnnotation, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 fields, found {}", fields.len()));
    }
    let mut nums = [0.0; 4];
    for (slot, f) in nums.iter_mut().zip(&fields) {
        *slot = f.parse::<f64>().map_err(|_| format!("non-numeric field {f:?}"))?;
    }
    if !nums[2].is_finite() || !nums[3].is_finite() {
        return Err("non-finite coordinate".into());
    }
    Ok(RawAnnotation {
        frame: integral("frame id", nums[0])?,
        agent: integral("agent id", nums[1])?,
        x: nums[2],
        y: nums[3],
    })
}

fn parse_lines(text: &str, name: &str, path: &Path) -> Result<Scene> {
    let mut robot_id = None;
    let mut annotations = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = idx + 1;
        let err = |msg: String| Error::Parse { path: path.to_path_buf(), line: lineno, msg };
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(id) = comment.trim().strip_prefix("robot_id=") {
                let id = id.trim().parse::<f64>().map_err(|_| err(format!("bad robot id {id:?}")))?;
                robot_id = Some(integral("robot id", id).map_err(err)?);
            }
            continue;
        }
        let rec = parse_record(line).map_err(err)?;
        if !seen.insert((rec.frame, rec.agent)) {
            return Err(Error::Integrity(format!(
                "{}:{lineno}: duplicate annotation for frame {} agent {}",
                path.display(),
                rec.frame,
                rec.agent
            )));
        }
        annotations.push(rec);
    }
    let mut scene = Scene::new(name, annotations, 1.0);
    scene.frame_period = FRAME_PERIOD / scene.frame_step() as f64;
    scene.robot_id = robot_id;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line_maps_fields() {
        let s = parse_annotations_str("10 1 2.5 3.0\n", "toy").unwrap();
        assert_eq!(s.annotations, vec![RawAnnotation { frame: 10, agent: 1, x: 2.5, y: 3.0 }]);
    }

    #[test]
    fn empty_input() {
        let s = parse_annotations_str("", "empty").unwrap();
        assert!(s.annotations.is_empty());
        assert_eq!(s.agent_ids().len(), 0);
    }

    #[test]
    fn three_frames_one_agent() {
        let s = parse_annotations_str("0 7 0 0\n10 7 0.5 0\n20 7 1.0 0\n", "toy").unwrap();
        assert_eq!(s.annotations.len(), 3);
        assert_eq!(s.agent_ids(), vec![7]);
        assert_eq!(s.frame_step(), 10);
        assert!((s.frame_period - 0.04).abs() < 1e-15);
    }

    #[test]
    fn eth_style_float_ids_and_tabs() {
        let s = parse_annotations_str("780.0\t1.0\t8.46\t3.59\n790.0\t1.0\t9.57\t3.79\n", "eth").unwrap();
        assert_eq!(s.annotations[1].frame, 790);
    }

    #[test]
    fn sorted_by_frame_then_agent() {
        let s = parse_annotations_str("1 2 0 0\n0 3 0 0\n1 1 0 0\n", "toy").unwrap();
        let keys: Vec<_> = s.annotations.iter().map(|a| (a.frame, a.agent)).collect();
        assert_eq!(keys, vec![(0, 3), (1, 1), (1, 2)]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let e = parse_annotations_str("0 1 0 0\n\n1 1 zero 0\n", "bad").unwrap_err();
        match e {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_annotations_str("0 1 0\n", "bad").is_err());
        assert!(parse_annotations_str("0.5 1 0 0\n", "bad").is_err());
    }

    #[test]
    fn duplicate_pair_rejected() {
        let e = parse_annotations_str("0 1 0 0\n0 1 1 1\n", "dup").unwrap_err();
        assert!(matches!(e, Error::Integrity(_)));
    }

    #[test]
    fn robot_header() {
        let s = parse_annotations_str("#robot_id=99\n# recorded outdoors\n0 99 0 0\n", "robot").unwrap();
        assert_eq!(s.robot_id, Some(99));
        assert_eq!(s.annotations.len(), 1);
    }
}
