//! `.tset` files: one UTF-8 JSON header line, then a little-endian `f64` body with one
//! record per transition laid out as `[s | a | s' | done (0/1) | true_reward]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Manifest, Provenance, Transition, TransitionSet};
use crate::envs::{EnvName, EnvSpec, ScoreAnchors};
use crate::{Error, Result};

pub const TSET_EXTENSION: &str = "tset";
const FORMAT: &str = "roida-tset/1";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    env: EnvName,
    state_dim: usize,
    action_dim: usize,
    horizon: usize,
    anchors: ScoreAnchors,
    seeds: Vec<u64>,
    n_transitions: usize,
    trajectory_offsets: Vec<usize>,
    provenance: Vec<Provenance>,
}

pub(crate) fn encode(set: &TransitionSet) -> Vec<u8> {
    let env = set.env();
    let header = Header {
        format: FORMAT.into(),
        env: env.name,
        state_dim: env.state_dim,
        action_dim: env.action_dim,
        horizon: env.horizon,
        anchors: set.manifest().anchors,
        seeds: set.manifest().seeds.clone(),
        n_transitions: set.len(),
        trajectory_offsets: set.trajectory_offsets().to_vec(),
        provenance: set.provenance().to_vec(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    for t in set.transitions() {
        let done = if t.done { 1.0 } else { 0.0 };
        for v in t.s.iter().chain(&t.a).chain(&t.s_next).chain([&done, &t.true_reward]) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub(crate) fn decode(bytes: &[u8]) -> Result<TransitionSet> {
    let newline = bytes.iter().position(|&b| b == b'\n').ok_or(Error::Parse {
        offset: bytes.len(),
        message: "missing manifest line".into(),
    })?;
    let line = &bytes[..newline];
    let header: Header = serde_json::from_slice(line).map_err(|e| Error::Parse {
        offset: e.column().saturating_sub(1),
        message: format!("manifest: {e}"),
    })?;
    let field_offset = |key: &str| {
        let needle = format!("\"{key}\"");
        line.windows(needle.len())
            .position(|w| w == needle.as_bytes())
            .unwrap_or(0)
    };
    if header.format != FORMAT {
        return Err(Error::Parse {
            offset: field_offset("format"),
            message: format!("unsupported format `{}`", header.format),
        });
    }
    let env = EnvSpec::new(header.env);
    for (key, declared, actual) in [
        ("state_dim", header.state_dim, env.state_dim),
        ("action_dim", header.action_dim, env.action_dim),
        ("horizon", header.horizon, env.horizon),
    ] {
        if declared != actual {
            return Err(Error::Parse {
                offset: field_offset(key),
                message: format!("{key}={declared} but {} has {key}={actual}", env.name),
            });
        }
    }

    let record = env.state_dim * 2 + env.action_dim + 2;
    let body = &bytes[newline + 1..];
    let expected = header.n_transitions * record * 8;
    if body.len() != expected {
        return Err(Error::Integrity(format!(
            "manifest declares {} transitions ({} bytes) but body has {} bytes",
            header.n_transitions,
            expected,
            body.len()
        )));
    }

    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let (sd, ad) = (env.state_dim, env.action_dim);
    let mut transitions = Vec::with_capacity(header.n_transitions);
    for (i, r) in values.chunks_exact(record).enumerate() {
        let at = |field: usize| newline + 1 + (i * record + field) * 8;
        let done = match r[2 * sd + ad] {
            0.0 => false,
            1.0 => true,
            other => {
                return Err(Error::Parse {
                    offset: at(2 * sd + ad),
                    message: format!("done flag must be 0 or 1, found {other}"),
                })
            }
        };
        let reward_col = 2 * sd + ad + 1;
        let bad = |(j, v): &(usize, &f64)| !(v.is_finite() || (*j == reward_col && v.is_nan()));
        if let Some((j, _)) = r.iter().enumerate().find(bad) {
            return Err(Error::Parse {
                offset: at(j),
                message: "non-finite value".into(),
            });
        }
        transitions.push(Transition {
            s: r[..sd].to_vec(),
            a: r[sd..sd + ad].to_vec(),
            s_next: r[sd + ad..2 * sd + ad].to_vec(),
            done,
            true_reward: r[reward_col],
        });
    }
    TransitionSet::new(
        transitions,
        header.trajectory_offsets,
        header.provenance,
        Manifest::new(env, header.anchors, header.seeds),
    )
}

pub fn save_dataset(set: &TransitionSet, path: &Path) -> Result<()> {
    crate::harness::write_atomic(path, &encode(set))
}

pub fn load_dataset(path: &Path) -> Result<TransitionSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
