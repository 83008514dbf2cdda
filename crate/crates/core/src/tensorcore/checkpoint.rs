//! Model checkpoint files.
//!
//! A single UTF-8 header line
//!
//! ```text
//! roida-model v1 role=policy dims=2,32,32,2 hidden=relu output=tanh log_std=2
//! ```
//!
//! followed by little-endian `f64` parameters: for each layer the weight matrix
//! row-major, then its bias; then the `log_std` values, if any.

use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{Activation, Dense, MlpModel};
use crate::{Error, Result};

const MAGIC: &str = "roida-model";
const VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    /// Free-form role tag such as `policy`, `discriminator`, `critic1`.
    pub role: String,
    pub model: MlpModel,
    pub log_std: Option<Vec<f64>>,
}

impl ModelCheckpoint {
    pub fn encode(&self) -> Vec<u8> {
        let dims = self
            .model
            .dims()
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let header = format!(
            "{MAGIC} {VERSION} role={} dims={} hidden={} output={} log_std={}\n",
            self.role,
            dims,
            self.model.hidden_activation().tag(),
            self.model.output_activation().tag(),
            self.log_std.as_ref().map_or(0, Vec::len)
        );
        let mut out = header.into_bytes();
        for layer in self.model.layers() {
            for v in layer.weight.iter().chain(layer.bias.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for v in self.log_std.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let newline = bytes.iter().position(|&b| b == b'\n').ok_or(Error::Parse {
            offset: bytes.len(),
            message: "missing header line".into(),
        })?;
        let header = std::str::from_utf8(&bytes[..newline]).map_err(|e| Error::Parse {
            offset: e.valid_up_to(),
            message: "header is not UTF-8".into(),
        })?;

        let mut role = None;
        let mut dims: Option<Vec<usize>> = None;
        let mut output = None;
        let mut n_log_std = None;
        let mut offset = 0usize;
        for (i, token) in header.split(' ').enumerate() {
            let bad = |message: String| Error::Parse { offset, message };
            match i {
                0 if token != MAGIC => return Err(bad(format!("expected `{MAGIC}`, found `{token}`"))),
                1 if token != VERSION => return Err(bad(format!("unsupported version `{token}`"))),
                0 | 1 => {}
                _ => {
                    let (key, value) = token
                        .split_once('=')
                        .ok_or_else(|| bad(format!("expected key=value, found `{token}`")))?;
                    match key {
                        "role" => role = Some(value.to_string()),
                        "dims" => {
                            let parsed: Result<Vec<usize>, _> =
                                value.split(',').map(str::parse).collect();
                            dims = Some(parsed.map_err(|_| bad(format!("bad dims `{value}`")))?);
                        }
                        "hidden" => {
                            if value != Activation::Relu.tag() {
                                return Err(bad(format!("unsupported hidden activation `{value}`")));
                            }
                        }
                        "output" => {
                            output = Some(
                                Activation::from_tag(value)
                                    .ok_or_else(|| bad(format!("unknown activation `{value}`")))?,
                            )
                        }
                        "log_std" => {
                            n_log_std = Some(
                                value
                                    .parse::<usize>()
                                    .map_err(|_| bad(format!("bad log_std count `{value}`")))?,
                            )
                        }
                        _ => return Err(bad(format!("unknown header field `{key}`"))),
                    }
                }
            }
            offset += token.len() + 1;
        }
        let missing = |what: &str| Error::Parse {
            offset: newline,
            message: format!("header lacks `{what}`"),
        };
        let role = role.ok_or_else(|| missing("role"))?;
        let dims = dims.ok_or_else(|| missing("dims"))?;
        let output = output.ok_or_else(|| missing("output"))?;
        let n_log_std = n_log_std.ok_or_else(|| missing("log_std"))?;
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Parse {
                offset: newline,
                message: format!("invalid dims {dims:?}"),
            });
        }

        let body = &bytes[newline + 1..];
        let n_params: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>() + n_log_std;
        if body.len() != n_params * 8 {
            return Err(Error::Integrity(format!(
                "header declares {} parameters ({} bytes) but body has {} bytes",
                n_params,
                n_params * 8,
                body.len()
            )));
        }
        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let mut take = |n: usize| values.by_ref().take(n).collect::<Vec<f64>>();
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let weight = Array2::from_shape_vec((fan_out, fan_in), take(fan_in * fan_out))
                    .expect("length checked above");
                let bias = Array1::from(take(fan_out));
                Dense { weight, bias }
            })
            .collect();
        let log_std = (n_log_std > 0).then(|| take(n_log_std));
        Ok(ModelCheckpoint {
            role,
            model: MlpModel::from_layers(layers, output)?,
            log_std,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::harness::write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn sample() -> ModelCheckpoint {
        let mut rng = stream_rng(1, 0);
        ModelCheckpoint {
            role: "policy".into(),
            model: MlpModel::new(&[2, 5, 3, 2], Activation::Tanh, &mut rng).unwrap(),
            log_std: Some(vec![-0.5, 0.25]),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ckpt = sample();
        let bytes = ckpt.encode();
        assert!(bytes.starts_with(b"roida-model v1 role=policy dims=2,5,3,2 hidden=relu output=tanh log_std=2\n"));
        assert_eq!(ModelCheckpoint::decode(&bytes).unwrap(), ckpt);
    }

    #[test]
    fn truncated_body_is_integrity_error() {
        let mut bytes = sample().encode();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(ModelCheckpoint::decode(&bytes), Err(Error::Integrity(_))));
    }

    #[test]
    fn bad_activation_reports_offset() {
        let bytes = b"roida-model v1 role=x dims=1,1 hidden=relu output=softmax log_std=0\n".to_vec();
        match ModelCheckpoint::decode(&bytes) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 43),
            other => panic!("unexpected {other:?}"),
        }
    }
}
