//! Agent checkpoints on top of [`TensorArchive`]: every network, the scalar
//! agent state, the controller state and the configuration echo.
//! Real-valued scalars are stored as `1 × 1` tensors so they round-trip bit-exactly.

use std::path::Path;

use crate::adapt::{AdaptState, SignalRule, SignalShape};
use crate::error::{Error, Result};
use crate::nn::{GaussianPolicy, Tensor, TensorArchive};
use crate::sac::AgentBundle;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub bundle: AgentBundle,
    pub adapt: AdaptState,
    pub config_echo: String,
    /// `final` or `ep<n>`.
    pub tag: String,
}

const SCALARS: [&str; 8] = [
    "agent.log_temperature",
    "agent.target_entropy",
    "agent.tau",
    "agent.gamma",
    "adapt.epsilon",
    "adapt.d_avg",
    "adapt.beta",
    "adapt.c",
];

fn scalar(v: f64) -> Tensor {
    Tensor::from_elem((1, 1), v)
}

pub fn to_archive(ck: &Checkpoint) -> TensorArchive {
    let b = &ck.bundle;
    let a = &ck.adapt;
    let mut ar = TensorArchive::new();
    ar.push_meta("tag", &ck.tag);
    ar.push_meta("adapt.update_count", a.update_count);
    let shape = match a.rule.shape {
        SignalShape::Logistic => "logistic",
        SignalShape::Centered => "centered",
    };
    ar.push_meta("adapt.shape", shape);
    ar.push_meta("adapt.sign_flip", a.rule.sign_flip);
    ar.push_mlp("actor", &b.actor.net);
    ar.push_mlp("adversary", &b.adversary.net);
    ar.push_mlp("critic0", &b.critics[0]);
    ar.push_mlp("critic1", &b.critics[1]);
    ar.push_mlp("target0", &b.target_critics[0]);
    ar.push_mlp("target1", &b.target_critics[1]);
    let values = [
        b.log_temperature,
        b.target_entropy,
        b.tau,
        b.gamma,
        a.epsilon,
        a.d_avg,
        a.beta,
        a.c,
    ];
    for (name, v) in SCALARS.iter().zip(values) {
        ar.push_tensor(name, scalar(v));
    }
    ar.push_blob("config.echo", ck.config_echo.as_bytes().to_vec());
    ar
}

pub fn from_archive(ar: &TensorArchive, path: &Path) -> Result<Checkpoint> {
    let corrupt = |reason: String| Error::Corrupt {
        path: path.to_path_buf(),
        reason,
    };
    let wrap = |e: Error| corrupt(e.to_string());
    let get = |name: &str| -> Result<f64> {
        match ar.tensor(name) {
            Some(t) if t.dim() == (1, 1) => Ok(t[[0, 0]]),
            Some(t) => Err(corrupt(format!("{name} has shape {:?}", t.dim()))),
            None => Err(corrupt(format!("missing {name}"))),
        }
    };
    let meta = |key: &str| ar.meta(key).ok_or_else(|| corrupt(format!("missing {key}")));
    let v: Vec<f64> = SCALARS.iter().map(|n| get(n)).collect::<Result<_>>()?;
    let bundle = AgentBundle {
        actor: GaussianPolicy::from_net(ar.mlp("actor").map_err(wrap)?).map_err(wrap)?,
        adversary: GaussianPolicy::from_net(ar.mlp("adversary").map_err(wrap)?).map_err(wrap)?,
        critics: [ar.mlp("critic0").map_err(wrap)?, ar.mlp("critic1").map_err(wrap)?],
        target_critics: [ar.mlp("target0").map_err(wrap)?, ar.mlp("target1").map_err(wrap)?],
        log_temperature: v[0],
        target_entropy: v[1],
        tau: v[2],
        gamma: v[3],
    };
    let shape = match meta("adapt.shape")? {
        "logistic" => SignalShape::Logistic,
        "centered" => SignalShape::Centered,
        other => return Err(corrupt(format!("unknown signal shape `{other}`"))),
    };
    let sign_flip = meta("adapt.sign_flip")?
        .parse::<bool>()
        .map_err(|e| corrupt(format!("adapt.sign_flip: {e}")))?;
    let update_count = meta("adapt.update_count")?
        .parse::<u64>()
        .map_err(|e| corrupt(format!("adapt.update_count: {e}")))?;
    let adapt = AdaptState {
        epsilon: v[4],
        d_avg: v[5],
        beta: v[6],
        c: v[7],
        update_count,
        rule: SignalRule { shape, sign_flip },
    };
    let config_echo = String::from_utf8(
        ar.blob("config.echo")
            .ok_or_else(|| corrupt("missing config.echo".into()))?
            .to_vec(),
    )
    .map_err(|e| corrupt(format!("config.echo is not UTF-8: {e}")))?;
    Ok(Checkpoint {
        bundle,
        adapt,
        config_echo,
        tag: meta("tag")?.to_string(),
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    to_archive(ck).save(path)
}

/// Loads a checkpoint; any manifest, shape or checksum problem is reported
/// as [`Error::Corrupt`] and nothing is returned.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let ar = TensorArchive::load(path)?;
    from_archive(&ar, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sac::SacConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = SacConfig {
            hidden: vec![7, 5],
            ..SacConfig::default()
        };
        let mut bundle = AgentBundle::new(4, 2, &cfg, &mut rng).unwrap();
        bundle.log_temperature = -1.234_567_890_123_456_7;
        Checkpoint {
            bundle,
            adapt: AdaptState {
                epsilon: 0.1 + 1e-17,
                d_avg: 0.3333333333333333,
                update_count: 99,
                rule: SignalRule {
                    shape: SignalShape::Centered,
                    sign_flip: true,
                },
                ..AdaptState::default()
            },
            config_echo: "env = \"pointmass\"\n# note\n".into(),
            tag: "ep7".into(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let ck = sample();
        save_checkpoint(&path, &ck).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.bundle.checksum(), ck.bundle.checksum());
        assert_eq!(back.adapt.epsilon.to_bits(), ck.adapt.epsilon.to_bits());
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        save_checkpoint(&path, &sample()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Corrupt { .. })));
    }
}
