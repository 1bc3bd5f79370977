use std::cmp::Ordering;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunnerError;
use crate::gateway::ProviderConfig;
use crate::language::Language;

pub const DEFAULT_CALLS_PER_CELL: u64 = 100;
pub const DEFAULT_TEMPERATURES: [f64; 6] = [0.1, 0.3, 0.5, 0.8, 1.0, 2.0];

fn default_calls() -> u64 {
    DEFAULT_CALLS_PER_CELL
}

fn default_temperatures() -> Vec<f64> {
    DEFAULT_TEMPERATURES.to_vec()
}

fn one() -> u64 {
    1
}

/// `10` or `{ lower = 1, upper = 10 }`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RangeSpec {
    Upper(u64),
    Bounds {
        #[serde(default = "one")]
        lower: u64,
        upper: u64,
    },
}

impl RangeSpec {
    fn upper(self) -> Result<u64, RunnerError> {
        let (lower, upper) = match self {
            RangeSpec::Upper(u) => (1, u),
            RangeSpec::Bounds { lower, upper } => (lower, upper),
        };
        if lower != 1 {
            return Err(RunnerError::InvalidPlan(format!(
                "range {lower}-{upper}: ranges must start at 1"
            )));
        }
        if upper < 2 {
            return Err(RunnerError::InvalidPlan(format!(
                "range 1-{upper} needs at least two values"
            )));
        }
        Ok(upper)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlan {
    run_id: String,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_calls")]
    calls_per_cell: u64,
    #[serde(default)]
    languages: Vec<Language>,
    #[serde(default)]
    ranges: Vec<RangeSpec>,
    #[serde(default = "default_temperatures")]
    temperatures: Vec<f64>,
    #[serde(default)]
    templates: Option<PathBuf>,
    #[serde(default)]
    providers: Vec<ProviderConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub run_id: String,
    pub seed: u64,
    pub calls_per_cell: u64,
    pub languages: Vec<Language>,
    /// Upper bounds; every range starts at 1.
    pub ranges: Vec<u64>,
    pub temperatures: Vec<f64>,
    /// Optional prompt template overrides.
    pub templates: Option<PathBuf>,
    pub providers: Vec<ProviderConfig>,
    /// Directory relative paths in the plan resolve against.
    pub base_dir: PathBuf,
}

impl ExperimentPlan {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, RunnerError> {
        let raw: RawPlan = toml::from_str(text).map_err(|e| RunnerError::InvalidPlan(e.to_string()))?;
        let plan = Self {
            run_id: raw.run_id,
            seed: raw.seed,
            calls_per_cell: raw.calls_per_cell,
            languages: raw.languages,
            ranges: raw.ranges.into_iter().map(RangeSpec::upper).collect::<Result<_, _>>()?,
            temperatures: raw.temperatures,
            templates: raw.templates,
            providers: raw.providers,
            base_dir: base_dir.to_path_buf(),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| RunnerError::InvalidPlan(format!("{}: {e}", path.display())))?;
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    /// Field checks. Empty dimensions are reported by [`expand_plan`].
    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |m: String| Err(RunnerError::InvalidPlan(m));
        if self.run_id.is_empty()
            || !self
                .run_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        {
            return bad(format!(
                "run_id `{}` must be non-empty ASCII [A-Za-z0-9._-]",
                self.run_id
            ));
        }
        if self.calls_per_cell == 0 {
            return bad("calls_per_cell must be positive".into());
        }
        for &t in &self.temperatures {
            if !(0.0..=2.0).contains(&t) {
                return bad(format!("temperature {t} outside [0, 2]"));
            }
        }
        for p in &self.providers {
            p.validate()?;
        }
        Ok(())
    }

    pub fn total_calls(&self) -> Result<u64, RunnerError> {
        Ok(expand_plan(self)?.len() as u64 * self.calls_per_cell)
    }
}

/// One experimental condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub provider: String,
    pub language: Language,
    pub range_upper: u64,
    pub temperature: f64,
}

/// `1` prints as `1.0`, `0.1` as `0.1`.
pub fn format_temperature(t: f64) -> String {
    let s = format!("{t}");
    if s.contains('.') || s.contains('e') || !t.is_finite() {
        s
    } else {
        format!("{s}.0")
    }
}

impl Cell {
    /// `<provider>__<lang>__1-<upper>__T<temperature>`
    pub fn file_stem(&self) -> String {
        format!(
            "{}__{}__1-{}__T{}",
            self.provider,
            self.language,
            self.range_upper,
            format_temperature(self.temperature)
        )
    }

    pub fn parse_file_stem(stem: &str) -> Option<Cell> {
        let mut parts = stem.split("__");
        let provider = parts.next()?.to_string();
        let language = parts.next()?.parse().ok()?;
        let range_upper = parts.next()?.strip_prefix("1-")?.parse().ok()?;
        let temperature: f64 = parts.next()?.strip_prefix('T')?.parse().ok()?;
        if parts.next().is_some() || provider.is_empty() || !temperature.is_finite() {
            return None;
        }
        Some(Cell {
            provider,
            language,
            range_upper,
            temperature,
        })
    }

    pub fn cmp_key(&self, other: &Cell) -> Ordering {
        self.provider
            .cmp(&other.provider)
            .then(self.language.cmp(&other.language))
            .then(self.range_upper.cmp(&other.range_upper))
            .then(self.temperature.total_cmp(&other.temperature))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.file_stem())
    }
}

/// Cartesian product of the plan's dimensions, sorted by
/// (provider, language, range, temperature).
pub fn expand_plan(plan: &ExperimentPlan) -> Result<Vec<Cell>, RunnerError> {
    for (name, empty) in [
        ("providers", plan.providers.is_empty()),
        ("languages", plan.languages.is_empty()),
        ("ranges", plan.ranges.is_empty()),
        ("temperatures", plan.temperatures.is_empty()),
    ] {
        if empty {
            return Err(RunnerError::EmptyPlan(name));
        }
    }
    let mut cells = Vec::new();
    for p in &plan.providers {
        for &language in &plan.languages {
            for &range_upper in &plan.ranges {
                for &temperature in &plan.temperatures {
                    cells.push(Cell {
                        provider: p.name.clone(),
                        language,
                        range_upper,
                        temperature,
                    });
                }
            }
        }
    }
    cells.sort_by(Cell::cmp_key);
    if let Some(w) = cells.windows(2).find(|w| w[0].cmp_key(&w[1]) == Ordering::Equal) {
        return Err(RunnerError::DuplicateCell(w[0].file_stem()));
    }
    Ok(cells)
}
