//! JSON-lines dataset files: a header line, then one trajectory per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{annotate, OfflineDataset};
use crate::error::{Error, Result};
use crate::momdp::{Preference, Transition, VectorReturn, SIMPLEX_TOL};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    env: String,
    n_objectives: usize,
    objective_shift: Vec<f64>,
    /// Lets the loader detect files cut at a line boundary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_trajectories: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    transitions: Vec<Transition>,
    episode_return: VectorReturn,
    approx_pref: Preference,
}

pub fn save_dataset(ds: &OfflineDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = Header {
        format_version: FORMAT_VERSION,
        env: ds.env_name.clone(),
        n_objectives: ds.n_objectives,
        objective_shift: ds.objective_shift.clone(),
        n_trajectories: Some(ds.len()),
    };
    write_line(&mut w, &header, path)?;
    for (t, p) in ds.trajectories.iter().zip(&ds.approx_prefs) {
        let rec = Record {
            transitions: t.transitions.clone(),
            episode_return: t.episode_return.clone(),
            approx_pref: p.clone(),
        };
        write_line(&mut w, &rec, path)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_line<T: Serialize>(w: &mut impl Write, value: &T, path: &Path) -> Result<()> {
    serde_json::to_writer(&mut *w, value).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<OfflineDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let parse_err = |line: usize, message: String| Error::Parse { line, message };

    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file, expected a header".into()))?;
    let first = first.map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_str(&first).map_err(|e| parse_err(1, e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(parse_err(1, format!("unsupported format_version {}", header.format_version)));
    }
    if header.objective_shift.len() != header.n_objectives {
        return Err(parse_err(1, "objective_shift length differs from n_objectives".into()));
    }

    let mut trajectories = Vec::new();
    let mut approx_prefs = Vec::new();
    let mut last_line = 1;
    for (i, line) in lines {
        let lineno = i + 1;
        last_line = lineno;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        let traj = crate::momdp::Trajectory {
            transitions: rec.transitions,
            episode_return: rec.episode_return,
        };
        if traj.episode_return.dim() != header.n_objectives {
            return Err(Error::Integrity(format!(
                "line {lineno}: return has {} objectives, header says {}",
                traj.episode_return.dim(),
                header.n_objectives
            )));
        }
        traj.validate()
            .map_err(|e| Error::Integrity(format!("line {lineno}: {e}")))?;
        let expected = annotate(&traj, &header.objective_shift)
            .map_err(|e| Error::Integrity(format!("line {lineno}: {e}")))?;
        let consistent = expected
            .weights()
            .iter()
            .zip(rec.approx_pref.weights())
            .all(|(a, b)| (a - b).abs() <= SIMPLEX_TOL)
            && expected.dim() == rec.approx_pref.dim();
        if !consistent {
            return Err(Error::Integrity(format!(
                "line {lineno}: approx_pref {} does not match the episode return (expected {expected})",
                rec.approx_pref
            )));
        }
        trajectories.push(traj);
        approx_prefs.push(rec.approx_pref);
    }
    if let Some(n) = header.n_trajectories {
        if n != trajectories.len() {
            return Err(parse_err(
                last_line + 1,
                format!("header announces {n} trajectories, file ends after {}", trajectories.len()),
            ));
        }
    }
    if trajectories.is_empty() {
        return Err(parse_err(2, "dataset has no trajectories".into()));
    }
    Ok(OfflineDataset {
        env_name: header.env,
        n_objectives: header.n_objectives,
        objective_shift: header.objective_shift,
        trajectories,
        approx_prefs,
        warning: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, GenerateConfig, PrefSampler};
    use crate::envs::{Env, LINEWORLD, TREASURE};

    fn ds(env: &str, seed: u64) -> OfflineDataset {
        generate_dataset(
            &Env::by_name(env).unwrap(),
            &GenerateConfig {
                n_traj: 12,
                quality_mix: 0.5,
                noise_scale: 0.4,
                pref_sampler: PrefSampler::UniformSimplex,
                seed,
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        for (k, env) in [LINEWORLD, TREASURE].into_iter().enumerate() {
            let d = ds(env, k as u64);
            let path = dir.path().join(format!("{env}.jsonl"));
            save_dataset(&d, &path).unwrap();
            let back = load_dataset(&path).unwrap();
            assert_eq!(back, d);
            for (a, b) in back.trajectories.iter().zip(&d.trajectories) {
                for (x, y) in a.transitions.iter().zip(&b.transitions) {
                    assert_eq!(x.action[0].to_bits(), y.action[0].to_bits());
                }
            }
        }
    }

    #[test]
    fn truncated_file_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        save_dataset(&ds(LINEWORLD, 0), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        // Cut in the middle of the fourth line.
        let mut cut = lines[..3].join("\n");
        cut.push('\n');
        cut.push_str(&lines[3][..lines[3].len() / 2]);
        std::fs::write(&path, &cut).unwrap();
        match load_dataset(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        // Cut at a line boundary.
        std::fs::write(&path, lines[..5].join("\n")).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn inconsistent_annotation_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let mut d = ds(LINEWORLD, 0);
        let p = d.approx_prefs[2][0];
        d.approx_prefs[2] = Preference::pair((p + 0.1).min(1.0) - if p > 0.85 { 0.2 } else { 0.0 }).unwrap();
        save_dataset(&d, &path).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Integrity(_))));
    }
}
