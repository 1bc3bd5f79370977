use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Prompt languages of the audit, identified by their two-letter codes.
///
/// `IN` is Hindi and `JP` Japanese; the codes follow the audit's table
/// headers rather than ISO 639.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Language {
    CN,
    EN,
    ES,
    FR,
    IN,
    JP,
    RU,
}

impl Language {
    pub const ALL: [Language; 7] = [
        Language::CN,
        Language::EN,
        Language::ES,
        Language::FR,
        Language::IN,
        Language::JP,
        Language::RU,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Language::CN => "CN",
            Language::EN => "EN",
            Language::ES => "ES",
            Language::FR => "FR",
            Language::IN => "IN",
            Language::JP => "JP",
            Language::RU => "RU",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unsupported language code `{0}` (expected one of CN, EN, ES, FR, IN, JP, RU)")]
pub struct UnsupportedLanguage(pub String);

impl FromStr for Language {
    type Err = UnsupportedLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let code = s.trim().to_ascii_uppercase();
        Language::ALL
            .into_iter()
            .find(|l| l.code() == code)
            .ok_or_else(|| UnsupportedLanguage(s.to_string()))
    }
}

impl TryFrom<String> for Language {
    type Error = UnsupportedLanguage;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<Language> for String {
    fn from(value: Language) -> Self {
        value.code().to_string()
    }
}
