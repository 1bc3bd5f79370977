//! Synthetic think-block corpus with planted strategy frequencies.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rngaudit_core::cot::StrategyLabel;

pub const PLANTED: [(StrategyLabel, f64); 8] = [
    (StrategyLabel::PiDigits, 0.10),
    (StrategyLabel::DateTime, 0.30),
    (StrategyLabel::CentralValue, 0.10),
    (StrategyLabel::WordMapping, 0.50),
    (StrategyLabel::CodeRandFunction, 0.60),
    (StrategyLabel::RealWorldSimulation, 0.60),
    (StrategyLabel::PersonalInfo, 0.30),
    (StrategyLabel::Instinct, 0.60),
];

fn phrases(label: StrategyLabel) -> &'static [&'static str] {
    use StrategyLabel::*;
    match label {
        PiDigits => &[
            "I could use random decimal places of pi.",
            "Maybe take digits of π at some position.",
        ],
        DateTime => &[
            "Let me use the current time as a seed.",
            "I could sum today's date values.",
            "Take the current second modulo the range.",
        ],
        CentralValue => &[
            "Something in the middle feels safe.",
            "A central value like the midpoint.",
        ],
        WordMapping => &[
            "Count the letters in a random word.",
            "Map each letter to a number and add them.",
        ],
        CodeRandFunction => &[
            "In Python I would call random.randint(1, 100).",
            "A random function in code would do it.",
        ],
        RealWorldSimulation => &[
            "Imagine rolling a die.",
            "I could flip a coin a few times.",
            "Picture a spinner landing somewhere.",
        ],
        PersonalInfo => &[
            "Maybe use my birthday.",
            "The last digits of my phone number could work.",
        ],
        Instinct => &[
            "I'll just pick the first number that comes to mind.",
            "Let me go with my instinct here.",
        ],
        Other => &[],
    }
}

const FILLER: [&str; 4] = [
    "Okay, so I need a random number.",
    "Hmm, let me reconsider.",
    "That might be biased.",
    "The user wants only the number.",
];

/// `n` traces; label `l` appears in each independently with its planted rate.
pub fn corpus(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut sentences = vec![*FILLER.choose(&mut rng).unwrap()];
            for (label, rate) in PLANTED {
                if rng.random::<f64>() < rate {
                    sentences.push(phrases(label).choose(&mut rng).unwrap());
                    sentences.push(FILLER.choose(&mut rng).unwrap());
                }
            }
            sentences.join(" ")
        })
        .collect()
}
