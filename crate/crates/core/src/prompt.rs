//! Language-specific prompt templates.
//!
//! Templates live in a UTF-8 TOML file with one `[[template]]` record per
//! language (`language_code`, `template`). The bundled set is compiled in;
//! a user file can replace individual languages.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::language::{Language, UnsupportedLanguage};

/// Literal placeholder token for the upper bound.
pub const PLACEHOLDER: &str = "{X}";

const BUNDLED_TEMPLATES: &str = include_str!("../data/prompts.toml");

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error(transparent)]
    UnsupportedLanguage(#[from] UnsupportedLanguage),
    #[error("no template registered for language {0}")]
    MissingTemplate(Language),
    #[error("invalid range 1-{0}: the upper bound must be at least 2")]
    InvalidRange(u64),
    #[error("template for {language} must contain the placeholder {PLACEHOLDER} exactly once (found {found})")]
    BadPlaceholder { language: Language, found: usize },
    #[error("failed to read template file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed template file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub language: Language,
    text: String,
}

impl PromptTemplate {
    pub fn new(language: Language, text: impl Into<String>) -> Result<Self, PromptError> {
        let text = text.into();
        let found = text.matches(PLACEHOLDER).count();
        if found != 1 {
            return Err(PromptError::BadPlaceholder { language, found });
        }
        Ok(Self { language, text })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn render(&self, upper: u64) -> Result<String, PromptError> {
        if upper < 2 {
            return Err(PromptError::InvalidRange(upper));
        }
        Ok(self.text.replacen(PLACEHOLDER, &upper.to_string(), 1))
    }
}

#[derive(Deserialize)]
struct TemplateFile {
    #[serde(default)]
    template: Vec<TemplateRecord>,
}

#[derive(Deserialize)]
struct TemplateRecord {
    language_code: String,
    template: String,
}

/// Immutable set of templates keyed by language.
#[derive(Debug, Clone)]
pub struct PromptCatalog {
    templates: BTreeMap<Language, PromptTemplate>,
}

impl PromptCatalog {
    /// The compiled-in catalog covering all seven languages.
    pub fn bundled() -> Self {
        Self::from_toml_str(BUNDLED_TEMPLATES).expect("bundled prompt templates are valid")
    }

    pub fn from_toml_str(source: &str) -> Result<Self, PromptError> {
        let file: TemplateFile = toml::from_str(source).map_err(|e| PromptError::Format(e.to_string()))?;
        let mut templates = BTreeMap::new();
        for record in file.template {
            let language: Language = record.language_code.parse()?;
            templates.insert(language, PromptTemplate::new(language, record.template)?);
        }
        Ok(Self { templates })
    }

    pub fn from_path(path: &Path) -> Result<Self, PromptError> {
        let source = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&source)
    }

    /// Bundled templates with the languages present in `path` replaced.
    pub fn with_overrides(path: &Path) -> Result<Self, PromptError> {
        let mut catalog = Self::bundled();
        for (language, template) in Self::from_path(path)?.templates {
            catalog.templates.insert(language, template);
        }
        Ok(catalog)
    }

    pub fn template(&self, language: Language) -> Result<&PromptTemplate, PromptError> {
        self.templates
            .get(&language)
            .ok_or(PromptError::MissingTemplate(language))
    }

    pub fn languages(&self) -> impl Iterator<Item = Language> + '_ {
        self.templates.keys().copied()
    }

    pub fn render(&self, language: Language, upper: u64) -> Result<String, PromptError> {
        self.template(language)?.render(upper)
    }

    /// Render by language code, as found in config files.
    pub fn render_code(&self, code: &str, upper: u64) -> Result<String, PromptError> {
        self.render(code.parse()?, upper)
    }
}

impl Default for PromptCatalog {
    fn default() -> Self {
        Self::bundled()
    }
}

/// Render the bundled template for `language` with range 1..=`upper`.
pub fn render_prompt(language: Language, upper: u64) -> Result<String, PromptError> {
    PromptCatalog::bundled().render(language, upper)
}
