use crate::language::Language;

/// Share of letters a non-Latin script needs before it decides the language.
const SCRIPT_SHARE: f64 = 0.3;
/// Kana share of CJK characters that marks Japanese rather than Chinese.
const KANA_SHARE: f64 = 0.05;

const EN_STOPWORDS: &[&str] = &[
    "the", "and", "is", "to", "of", "a", "i", "that", "it", "in", "so", "but", "need", "think", "number", "random",
    "with", "for", "this", "maybe", "what", "be", "or", "my", "just", "not", "can", "okay", "let", "me", "wait",
    "would", "should", "how", "between", "figure", "out", "if", "then",
];
const ES_STOPWORDS: &[&str] = &[
    "el",
    "la",
    "los",
    "las",
    "de",
    "que",
    "y",
    "en",
    "un",
    "una",
    "es",
    "por",
    "para",
    "con",
    "no",
    "número",
    "aleatorio",
    "dame",
    "entre",
    "pero",
    "como",
    "lo",
    "se",
    "del",
    "al",
    "más",
    "muy",
    "necesito",
    "tengo",
    "pensar",
    "quizás",
    "puedo",
    "voy",
    "elegir",
];
const FR_STOPWORDS: &[&str] = &[
    "le",
    "la",
    "les",
    "de",
    "des",
    "et",
    "est",
    "un",
    "une",
    "que",
    "je",
    "pour",
    "dans",
    "pas",
    "nombre",
    "aléatoire",
    "entre",
    "mais",
    "avec",
    "il",
    "ce",
    "sur",
    "ne",
    "du",
    "au",
    "donne",
    "moi",
    "vais",
    "choisir",
    "peut",
    "peux",
    "dois",
    "alors",
];

#[derive(Default)]
struct ScriptCounts {
    han: usize,
    kana: usize,
    devanagari: usize,
    cyrillic: usize,
    latin: usize,
}

impl ScriptCounts {
    fn of(text: &str) -> Self {
        let mut c = Self::default();
        for ch in text.chars() {
            match ch as u32 {
                0x3040..=0x30FF | 0x31F0..=0x31FF | 0xFF66..=0xFF9D => c.kana += 1,
                0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F => c.han += 1,
                0x0900..=0x097F | 0xA8E0..=0xA8FF => c.devanagari += 1,
                0x0400..=0x052F => c.cyrillic += 1,
                _ if ch.is_alphabetic() && (ch.is_ascii() || (0x00C0..=0x024F).contains(&(ch as u32))) => c.latin += 1,
                _ => {}
            }
        }
        c
    }

    fn total(&self) -> usize {
        self.han + self.kana + self.devanagari + self.cyrillic + self.latin
    }
}

fn stopword_vote(text: &str) -> Option<Language> {
    let lower = text.to_lowercase();
    let mut scores = [(Language::EN, 0usize), (Language::ES, 0), (Language::FR, 0)];
    for word in lower.split(|c: char| !c.is_alphabetic() && c != '\'') {
        let word = word.trim_matches('\'');
        if word.is_empty() {
            continue;
        }
        for (slot, list) in scores.iter_mut().zip([EN_STOPWORDS, ES_STOPWORDS, FR_STOPWORDS]) {
            if list.contains(&word) {
                slot.1 += 1;
            }
        }
    }
    scores.sort_by_key(|s| std::cmp::Reverse(s.1));
    let (best, top) = scores[0];
    let runner_up = scores[1].1;
    let total: usize = scores.iter().map(|s| s.1).sum();
    // Need a clear winner: strictly ahead and at least half of all hits.
    (top > runner_up && (top >= 2 || runner_up == 0) && 2 * top >= total).then_some(best)
}

/// Language a think block is written in, or `None` when unsure.
///
/// Han, kana, Devanagari and Cyrillic letters decide CN/JP/IN/RU once they
/// make up a large enough share; otherwise Latin text is split between
/// EN, ES and FR by stopword counts.
pub fn detect_reasoning_language(think_text: &str) -> Option<Language> {
    let c = ScriptCounts::of(think_text);
    let total = c.total();
    if total == 0 {
        return None;
    }
    let share = |n: usize| n as f64 / total as f64;
    let cjk = c.han + c.kana;
    let candidates = [
        (
            cjk,
            if cjk > 0 && share_of(c.kana, cjk) >= KANA_SHARE {
                Language::JP
            } else {
                Language::CN
            },
        ),
        (c.devanagari, Language::IN),
        (c.cyrillic, Language::RU),
    ];
    if let Some(&(n, lang)) = candidates.iter().max_by_key(|(n, _)| *n) {
        if share(n) >= SCRIPT_SHARE {
            return Some(lang);
        }
    }
    if share(c.latin) < 0.5 {
        return None;
    }
    stopword_vote(think_text)
}

fn share_of(part: usize, whole: usize) -> f64 {
    part as f64 / whole as f64
}
