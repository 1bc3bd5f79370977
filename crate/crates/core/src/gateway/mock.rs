//! Scripted provider with reproducible weighted draws.
//!
//! ```toml
//! seed = 7                 # optional; the plan seed is used otherwise
//! transient_failures = 0   # first N attempts of every call fail transiently
//! reject_rate = 0.0        # fraction of calls answered with HTTP 400
//! latency_ms = 0
//!
//! [[entry]]                # no key fields: matches everything
//! weights = { "3" = 1.0 }
//!
//! [[entry]]
//! language = "EN"
//! range_upper = 10
//! temperature = 1.0
//! [[entry.outputs]]
//! text = "<think>Let me pick 7.</think>7"
//! weight = 2.0
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::{AttemptError, CallOrigin, CompletionRequest, GatewayError, Transport};
use crate::language::Language;

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct WeightedOutput {
    pub text: String,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockEntry {
    #[serde(default)]
    pub language: Option<Language>,
    #[serde(default)]
    pub range_upper: Option<u64>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub outputs: Vec<WeightedOutput>,
}

impl MockEntry {
    fn specificity(&self) -> usize {
        self.language.is_some() as usize + self.range_upper.is_some() as usize + self.temperature.is_some() as usize
    }

    fn matches(&self, key: &MockKey) -> bool {
        self.language.is_none_or(|l| l == key.language)
            && self.range_upper.is_none_or(|r| r == key.range_upper)
            && self.temperature.is_none_or(|t| (t - key.temperature).abs() < 1e-9)
    }

    fn choices(&self) -> impl Iterator<Item = (&str, f64)> {
        self.outputs
            .iter()
            .map(|o| (o.text.as_str(), o.weight))
            .chain(self.weights.iter().map(|(t, w)| (t.as_str(), *w)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MockKey {
    pub language: Language,
    pub range_upper: u64,
    pub temperature: f64,
}

impl From<&CallOrigin> for MockKey {
    fn from(o: &CallOrigin) -> Self {
        Self {
            language: o.language,
            range_upper: o.range_upper,
            temperature: o.temperature,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScript {
    seed: Option<u64>,
    #[serde(default)]
    transient_failures: u32,
    #[serde(default)]
    reject_rate: f64,
    #[serde(default)]
    latency_ms: u64,
    #[serde(default, rename = "entry")]
    entries: Vec<MockEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockScript {
    pub seed: u64,
    pub transient_failures: u32,
    pub reject_rate: f64,
    pub latency_ms: u64,
    pub entries: Vec<MockEntry>,
}

impl MockScript {
    /// Weights `{text: weight}` for every key.
    pub fn uniform_weights<S: Into<String>>(seed: u64, weights: impl IntoIterator<Item = (S, f64)>) -> Self {
        Self {
            seed,
            transient_failures: 0,
            reject_rate: 0.0,
            latency_ms: 0,
            entries: vec![MockEntry {
                language: None,
                range_upper: None,
                temperature: None,
                weights: weights.into_iter().map(|(k, v)| (k.into(), v)).collect(),
                outputs: Vec::new(),
            }],
        }
    }

    pub fn from_toml_str(text: &str, default_seed: u64) -> Result<Self, String> {
        let raw: RawScript = toml::from_str(text).map_err(|e| e.to_string())?;
        let script = Self {
            seed: raw.seed.unwrap_or(default_seed),
            transient_failures: raw.transient_failures,
            reject_rate: raw.reject_rate,
            latency_ms: raw.latency_ms,
            entries: raw.entries,
        };
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: &Path, default_seed: u64) -> Result<Self, GatewayError> {
        let err = |reason: String| GatewayError::MockScript {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        Self::from_toml_str(&text, default_seed).map_err(err)
    }

    fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.reject_rate) {
            return Err(format!("reject_rate {} outside [0, 1]", self.reject_rate));
        }
        for (i, entry) in self.entries.iter().enumerate() {
            let mut total = 0.0;
            for (text, w) in entry.choices() {
                if !w.is_finite() || w < 0.0 {
                    return Err(format!(
                        "entry {i}: weight {w} for {text:?} is not a non-negative number"
                    ));
                }
                total += w;
            }
            if total <= 0.0 {
                return Err(format!("entry {i}: weights must sum to a positive value"));
            }
        }
        Ok(())
    }

    /// Most specific matching entry; the earliest wins ties.
    pub fn entry_for(&self, key: &MockKey) -> Option<&MockEntry> {
        let mut best: Option<&MockEntry> = None;
        for e in self.entries.iter().filter(|e| e.matches(key)) {
            if best.is_none_or(|b| e.specificity() > b.specificity()) {
                best = Some(e);
            }
        }
        best
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn call_rng(seed: u64, key: &MockKey, call_index: u64, salt: u64) -> ChaCha8Rng {
    let lang = Language::ALL.iter().position(|l| *l == key.language).unwrap_or(0) as u64;
    let mut h = splitmix64(seed ^ salt);
    for part in [lang, key.range_upper, key.temperature.to_bits(), call_index] {
        h = splitmix64(h ^ part);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Output for one call: a pure function of `(seed, key, call_index)`.
pub fn mock_draw(script: &MockScript, key: &MockKey, call_index: u64) -> Result<String, GatewayError> {
    let entry = script.entry_for(key).ok_or_else(|| {
        GatewayError::ScriptCoverage(format!(
            "language {} range 1-{} temperature {}",
            key.language, key.range_upper, key.temperature
        ))
    })?;
    let (texts, weights): (Vec<&str>, Vec<f64>) = entry.choices().unzip();
    let dist = WeightedIndex::new(&weights).map_err(|e| GatewayError::MockScript {
        path: "<script>".into(),
        reason: e.to_string(),
    })?;
    let mut rng = call_rng(script.seed, key, call_index, 0);
    Ok(texts[dist.sample(&mut rng)].to_string())
}

pub struct MockTransport {
    script: MockScript,
}

impl MockTransport {
    pub fn new(script: MockScript) -> Self {
        Self { script }
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }
}

impl Transport for MockTransport {
    fn send(&self, _: &CompletionRequest, origin: &CallOrigin, attempt: u32) -> Result<String, AttemptError> {
        if self.script.latency_ms > 0 {
            std::thread::sleep(Duration::from_millis(self.script.latency_ms));
        }
        if attempt < self.script.transient_failures {
            return Err(AttemptError::Transient(format!("scripted failure {}", attempt + 1)));
        }
        let key = MockKey::from(origin);
        if self.script.reject_rate > 0.0 {
            use rand::Rng;
            let mut rng = call_rng(self.script.seed, &key, origin.call_index, 0xBAD);
            if rng.random::<f64>() < self.script.reject_rate {
                return Err(AttemptError::Fatal(GatewayError::Rejected {
                    status: 400,
                    body: "scripted rejection".into(),
                }));
            }
        }
        mock_draw(&self.script, &key, origin.call_index).map_err(AttemptError::Fatal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> MockKey {
        MockKey {
            language: Language::EN,
            range_upper: 10,
            temperature: 1.0,
        }
    }

    #[test]
    fn single_weight_is_constant() {
        let s = MockScript::uniform_weights(1, [("3", 1.0)]);
        assert!((0..500).all(|i| mock_draw(&s, &key(), i).unwrap() == "3"));
    }

    #[test]
    fn draws_are_keyed_not_sequential() {
        let s = MockScript::uniform_weights(9, [("7", 0.8), ("4", 0.2)]);
        let a = mock_draw(&s, &key(), 17).unwrap();
        for _ in 0..5 {
            assert_eq!(mock_draw(&s, &key(), 17).unwrap(), a);
        }
        let seq = |seed| {
            let s = MockScript::uniform_weights(seed, [("7", 0.8), ("4", 0.2)]);
            (0..100).map(|i| mock_draw(&s, &key(), i).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(seq(9), seq(9));
        assert_ne!(seq(9), seq(10));
    }

    #[test]
    fn even_split_converges() {
        let s = MockScript::uniform_weights(2024, [("7", 0.5), ("5", 0.5)]);
        let sevens = (0..10_000)
            .filter(|&i| mock_draw(&s, &key(), i).unwrap() == "7")
            .count();
        let share = sevens as f64 / 10_000.0;
        assert!((share - 0.5).abs() <= 0.02, "share {share}");
    }

    #[test]
    fn most_specific_entry_wins() {
        let text = r#"
            [[entry]]
            weights = { "1" = 1.0 }
            [[entry]]
            language = "EN"
            weights = { "2" = 1.0 }
            [[entry]]
            language = "EN"
            range_upper = 10
            [[entry.outputs]]
            text = "<think>x</think>3"
            [[entry]]
            language = "EN"
            range_upper = 10
            weights = { "4" = 1.0 }
        "#;
        let s = MockScript::from_toml_str(text, 5).unwrap();
        assert_eq!(s.seed, 5);
        assert_eq!(mock_draw(&s, &key(), 0).unwrap(), "<think>x</think>3");
        let fr = MockKey {
            language: Language::FR,
            ..key()
        };
        assert_eq!(mock_draw(&s, &fr, 0).unwrap(), "1");
        let en5 = MockKey {
            range_upper: 5,
            ..key()
        };
        assert_eq!(mock_draw(&s, &en5, 0).unwrap(), "2");
    }

    #[test]
    fn coverage_and_weight_errors() {
        let s =
            MockScript::from_toml_str("seed = 1\n[[entry]]\nlanguage = \"JP\"\nweights = { \"3\" = 1.0 }", 0).unwrap();
        assert_eq!(s.seed, 1);
        assert!(matches!(mock_draw(&s, &key(), 0), Err(GatewayError::ScriptCoverage(_))));
        assert!(MockScript::from_toml_str("[[entry]]\nweights = { \"3\" = 0.0 }", 0).is_err());
        assert!(MockScript::from_toml_str("[[entry]]\nweights = { \"3\" = -1.0 }", 0).is_err());
        assert!(MockScript::from_toml_str("bogus = 1", 0).is_err());
    }

    #[test]
    fn transport_fails_then_answers() {
        let mut s = MockScript::uniform_weights(0, [("7", 1.0)]);
        s.transient_failures = 2;
        let t = MockTransport::new(s);
        let req = CompletionRequest {
            model_id: "m".into(),
            prompt: "p".into(),
            temperature: 1.0,
            max_tokens: 8,
        };
        let origin = CallOrigin {
            language: Language::EN,
            range_upper: 10,
            temperature: 1.0,
            call_index: 0,
        };
        assert!(matches!(t.send(&req, &origin, 0), Err(AttemptError::Transient(_))));
        assert!(matches!(t.send(&req, &origin, 1), Err(AttemptError::Transient(_))));
        assert_eq!(t.send(&req, &origin, 2).unwrap(), "7");
    }
}
