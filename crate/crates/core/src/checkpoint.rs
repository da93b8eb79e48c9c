//! Versioned JSON container used for every persisted model and checkpoint.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT: &str = "lrppo-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    kind: String,
    payload: T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: String,
}

pub fn to_json<T: Serialize>(kind: &str, payload: &T) -> Result<String> {
    let env = Envelope {
        format: FORMAT.to_string(),
        version: VERSION,
        kind: kind.to_string(),
        payload,
    };
    Ok(serde_json::to_string(&env)?)
}

/// Parses a container, refusing other formats, versions or kinds.
pub fn from_json<T: DeserializeOwned>(expected_kind: &str, text: &str) -> Result<T> {
    let header: Header = serde_json::from_str(text)
        .map_err(|e| Error::Checkpoint(format!("unreadable container: {e}")))?;
    if header.format != FORMAT {
        return Err(Error::Checkpoint(format!("unknown format {:?}", header.format)));
    }
    if header.version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {} (expected {VERSION})",
            header.version
        )));
    }
    if header.kind != expected_kind {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {:?}, expected {expected_kind:?}",
            header.kind
        )));
    }
    let env: Envelope<T> = serde_json::from_str(text)
        .map_err(|e| Error::Checkpoint(format!("corrupt payload: {e}")))?;
    Ok(env.payload)
}

pub fn save<T: Serialize>(path: &Path, kind: &str, payload: &T) -> Result<()> {
    fs::write(path, to_json(kind, payload)?)?;
    Ok(())
}

pub fn load<T: DeserializeOwned>(path: &Path, expected_kind: &str) -> Result<T> {
    let text = fs::read_to_string(path)?;
    from_json(expected_kind, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Activation, ScorerParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn params_round_trip_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ScorerParams::init(&[7, 9, 1], Activation::Tanh, false, &mut rng).unwrap();
        let text = to_json("params", &p).unwrap();
        let q: ScorerParams = from_json("params", &text).unwrap();
        assert_eq!(p, q);
        for (a, b) in p.flat().iter().zip(q.flat()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn wrong_kind_is_refused() {
        let text = to_json("actor", &1u32).unwrap();
        assert!(matches!(from_json::<u32>("critic", &text), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn corrupt_file_is_refused() {
        assert!(from_json::<u32>("actor", "{not json").is_err());
        let text = to_json("actor", &1u32).unwrap().replace("\"version\":1", "\"version\":9");
        assert!(from_json::<u32>("actor", &text).is_err());
    }
}
