//! Tail corruption and the number-of-negatives setting.

use std::fmt;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{KgcError, Result};

/// `k` distinct entities drawn uniformly from everything except `tail`.
pub fn sample_negatives(tail: usize, k: usize, n: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if tail >= n {
        return Err(KgcError::Contract(format!("tail {tail} outside {n} entities")));
    }
    if k > n - 1 {
        return Err(KgcError::config(format!(
            "loss: k = {k} exceeds the {} available corruptions",
            n - 1
        )));
    }
    Ok(index::sample(rng, n - 1, k)
        .into_iter()
        .map(|i| if i >= tail { i + 1 } else { i })
        .collect())
}

/// Negatives per positive: a fixed count, half the entities (rounded up), or all `N - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativeCount {
    Fixed(usize),
    Half,
    All,
}

impl NegativeCount {
    pub fn resolve(self, n: usize) -> Result<usize> {
        let k = match self {
            NegativeCount::Fixed(k) => k,
            NegativeCount::Half => n.div_ceil(2),
            NegativeCount::All => n.saturating_sub(1),
        };
        if k == 0 || k + 1 > n {
            return Err(KgcError::config(format!(
                "loss: k = {self} resolves to {k}, needs 1 <= k <= N - 1 = {}",
                n.saturating_sub(1)
            )));
        }
        Ok(k)
    }
}

impl fmt::Display for NegativeCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NegativeCount::Fixed(k) => write!(f, "{k}"),
            NegativeCount::Half => f.write_str("0.5N"),
            NegativeCount::All => f.write_str("N"),
        }
    }
}

impl std::str::FromStr for NegativeCount {
    type Err = KgcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "0.5N" | "0.5n" => Ok(NegativeCount::Half),
            "N" | "n" | "N-1" => Ok(NegativeCount::All),
            other => other
                .parse::<usize>()
                .map(NegativeCount::Fixed)
                .map_err(|_| KgcError::config(format!("loss: bad k {other:?}, expected an integer, \"0.5N\" or \"N\""))),
        }
    }
}

impl Serialize for NegativeCount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NegativeCount::Fixed(k) => s.serialize_u64(*k as u64),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for NegativeCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(k) => Ok(NegativeCount::Fixed(k)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Which corruptions enter the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(try_from = "RawLoss", into = "RawLoss")]
pub enum LossConfig {
    /// Every corruption, via scores against all entities.
    #[default]
    WithoutSampling,
    WithSampling { k: NegativeCount },
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Regime {
    WithoutSampling,
    WithSampling,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoss {
    regime: Regime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<NegativeCount>,
}

impl TryFrom<RawLoss> for LossConfig {
    type Error = String;

    fn try_from(raw: RawLoss) -> std::result::Result<Self, String> {
        match (raw.regime, raw.k) {
            (Regime::WithoutSampling, None) => Ok(LossConfig::WithoutSampling),
            (Regime::WithoutSampling, Some(_)) => Err("loss: k is only valid with with_sampling".into()),
            (Regime::WithSampling, Some(k)) => Ok(LossConfig::WithSampling { k }),
            (Regime::WithSampling, None) => Err("loss: with_sampling needs k".into()),
        }
    }
}

impl From<LossConfig> for RawLoss {
    fn from(l: LossConfig) -> Self {
        match l {
            LossConfig::WithoutSampling => RawLoss {
                regime: Regime::WithoutSampling,
                k: None,
            },
            LossConfig::WithSampling { k } => RawLoss {
                regime: Regime::WithSampling,
                k: Some(k),
            },
        }
    }
}

impl LossConfig {
    pub fn with_sampling(k: NegativeCount) -> Self {
        LossConfig::WithSampling { k }
    }

    /// Number of negatives per positive on `n` entities.
    pub fn negatives(&self, n: usize) -> Result<usize> {
        match self {
            LossConfig::WithoutSampling => Ok(n.saturating_sub(1)),
            LossConfig::WithSampling { k } => k.resolve(n),
        }
    }

    pub fn label(&self) -> String {
        match self {
            LossConfig::WithoutSampling => "w/o sampling".into(),
            LossConfig::WithSampling { k } => format!("k={k}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn only_choice_is_taken() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut got = sample_negatives(0, 2, 3, &mut rng).unwrap();
        got.sort_unstable();
        assert_eq!(got, vec![1, 2]);
    }

    #[test]
    fn all_corruptions_when_k_is_n_minus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut got = sample_negatives(4, 9, 10, &mut rng).unwrap();
        got.sort_unstable();
        assert_eq!(got, vec![0, 1, 2, 3, 5, 6, 7, 8, 9]);
    }

    #[test]
    fn too_many_negatives_is_a_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(matches!(sample_negatives(0, 3, 3, &mut rng), Err(KgcError::Config(_))));
        assert!(matches!(NegativeCount::Fixed(500).resolve(100), Err(KgcError::Config(_))));
    }

    #[test]
    fn named_counts_resolve() {
        assert_eq!(NegativeCount::Half.resolve(101).unwrap(), 51);
        assert_eq!(NegativeCount::Half.resolve(100).unwrap(), 50);
        assert_eq!(NegativeCount::All.resolve(100).unwrap(), 99);
    }

    #[test]
    fn loss_config_json() {
        let l: LossConfig = serde_json::from_str(r#"{"regime":"with_sampling","k":"0.5N"}"#).unwrap();
        assert_eq!(l, LossConfig::with_sampling(NegativeCount::Half));
        let l: LossConfig = serde_json::from_str(r#"{"regime":"with_sampling","k":10}"#).unwrap();
        assert_eq!(l, LossConfig::with_sampling(NegativeCount::Fixed(10)));
        let l: LossConfig = serde_json::from_str(r#"{"regime":"without_sampling"}"#).unwrap();
        assert_eq!(l, LossConfig::WithoutSampling);
        assert!(serde_json::from_str::<LossConfig>(r#"{"regime":"with_sampling","k":"lots"}"#).is_err());
        assert!(serde_json::from_str::<LossConfig>(r#"{"regime":"without_sampling","k":3}"#).is_err());
        let round: LossConfig = serde_json::from_str(&serde_json::to_string(&LossConfig::with_sampling(NegativeCount::All)).unwrap()).unwrap();
        assert_eq!(round, LossConfig::with_sampling(NegativeCount::All));
    }
}
