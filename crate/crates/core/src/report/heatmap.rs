use std::fmt::Write as _;
use std::str::FromStr;

use super::ReportError;
use crate::language::Language;
use crate::runner::{format_temperature, CallRecord, Cell};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Raw counts.
    #[default]
    Abs,
    /// Each temperature row divided by its largest count.
    RowMax,
}

impl FromStr for Normalization {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "abs" => Ok(Self::Abs),
            "rowmax" | "row-max" => Ok(Self::RowMax),
            _ => Err(ReportError::UnknownOption {
                what: "normalization",
                value: s.to_string(),
            }),
        }
    }
}

/// Temperature × value counts for one provider, language and range.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapMatrix {
    pub provider: String,
    pub language: Language,
    pub range_upper: u64,
    /// Ascending.
    pub temperatures: Vec<f64>,
    /// `counts[t][v - 1]`, only in-range values.
    pub counts: Vec<Vec<u64>>,
}

impl HeatmapMatrix {
    pub fn values(&self, norm: Normalization) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let max = row.iter().copied().max().unwrap_or(0);
                row.iter()
                    .map(|&c| match norm {
                        Normalization::Abs => c as f64,
                        Normalization::RowMax if max == 0 => 0.0,
                        Normalization::RowMax => c as f64 / max as f64,
                    })
                    .collect()
            })
            .collect()
    }

    pub fn n_ok(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn to_csv(&self, norm: Normalization) -> String {
        let mut s = String::from("temperature");
        for v in 1..=self.range_upper {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
        for (t, row) in self.temperatures.iter().zip(self.values(norm)) {
            s.push_str(&format_temperature(*t));
            for x in row {
                let _ = write!(s, ",{x}");
            }
            s.push('\n');
        }
        s
    }
}

/// Collect the matching cells into one matrix, one row per temperature.
pub fn heatmap_matrix(
    cells: &[(Cell, Vec<CallRecord>)],
    provider: &str,
    language: Language,
    range_upper: u64,
) -> Result<HeatmapMatrix, ReportError> {
    let mut picked: Vec<&(Cell, Vec<CallRecord>)> = cells
        .iter()
        .filter(|(c, _)| c.provider == provider && c.language == language && c.range_upper == range_upper)
        .collect();
    if picked.is_empty() {
        return Err(ReportError::EmptySelection(format!(
            "{provider}/{language}/1-{range_upper}"
        )));
    }
    picked.sort_by(|a, b| a.0.temperature.total_cmp(&b.0.temperature));
    let width = usize::try_from(range_upper).unwrap_or(usize::MAX);
    let mut temperatures = Vec::with_capacity(picked.len());
    let mut counts = Vec::with_capacity(picked.len());
    for (cell, records) in picked {
        let mut row = vec![0u64; width];
        for r in records.iter().filter(|r| r.status.is_in_range()) {
            if let Some(v) = r.parsed_value.filter(|v| (1..=range_upper as i64).contains(v)) {
                row[(v - 1) as usize] += 1;
            }
        }
        temperatures.push(cell.temperature);
        counts.push(row);
    }
    Ok(HeatmapMatrix {
        provider: provider.to_string(),
        language,
        range_upper,
        temperatures,
        counts,
    })
}

/// Sequential white → dark blue ramp, `x` clamped to [0, 1].
pub fn palette(x: f64) -> (u8, u8, u8) {
    const LO: (f64, f64, f64) = (255.0, 255.0, 255.0);
    const HI: (f64, f64, f64) = (8.0, 48.0, 107.0);
    let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
    let mix = |a: f64, b: f64| (a + (b - a) * x).round() as u8;
    (mix(LO.0, HI.0), mix(LO.1, HI.1), mix(LO.2, HI.2))
}

fn hex((r, g, b): (u8, u8, u8)) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

const CELL_W: f64 = 24.0;
const CELL_H: f64 = 24.0;
const LEFT: f64 = 56.0;
const TOP: f64 = 36.0;
const BAR_W: f64 = 14.0;

/// SVG heatmap. Same matrix and normalization give the same bytes.
///
/// Abs colors span `[0, max(100, largest count)]`, rowmax spans `[0, 1]`.
pub fn render_heatmap_svg(m: &HeatmapMatrix, norm: Normalization) -> String {
    let values = m.values(norm);
    let scale_max = match norm {
        Normalization::Abs => values.iter().flatten().copied().fold(100.0, f64::max),
        Normalization::RowMax => 1.0,
    };
    let cols = m.range_upper as f64;
    let rows = m.temperatures.len() as f64;
    let grid_w = cols * CELL_W;
    let grid_h = rows * CELL_H;
    let bar_x = LEFT + grid_w + 20.0;
    let width = bar_x + BAR_W + 60.0;
    let height = TOP + grid_h.max(100.0) + 40.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{LEFT}" y="14" font-size="12">{} / {} / 1-{} ({})</text>"#,
        m.provider,
        m.language,
        m.range_upper,
        match norm {
            Normalization::Abs => "counts",
            Normalization::RowMax => "row max",
        }
    );
    for (i, row) in values.iter().enumerate() {
        let y = TOP + i as f64 * CELL_H;
        let _ = writeln!(
            s,
            r#"<text class="ylabel" x="{}" y="{}" text-anchor="end">T={}</text>"#,
            LEFT - 4.0,
            y + CELL_H * 0.65,
            format_temperature(m.temperatures[i])
        );
        for (j, &v) in row.iter().enumerate() {
            let x = LEFT + j as f64 * CELL_W;
            let _ = writeln!(
                s,
                r#"<rect class="cell" x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{}"><title>{}: {}</title></rect>"#,
                hex(palette(v / scale_max)),
                j + 1,
                v
            );
        }
    }
    // Label every column for small ranges, otherwise about ten ticks.
    let step = (m.range_upper as usize).div_ceil(10).max(1);
    for v in (1..=m.range_upper as usize).filter(|v| *v == 1 || v % step == 0) {
        let _ = writeln!(
            s,
            r#"<text class="xlabel" x="{}" y="{}" text-anchor="middle">{v}</text>"#,
            LEFT + (v as f64 - 0.5) * CELL_W,
            TOP + grid_h + 14.0
        );
    }
    const STOPS: usize = 10;
    for k in 0..STOPS {
        let frac = 1.0 - (k as f64 + 0.5) / STOPS as f64;
        let _ = writeln!(
            s,
            r#"<rect class="bar" x="{bar_x}" y="{}" width="{BAR_W}" height="10" fill="{}"/>"#,
            TOP + k as f64 * 10.0,
            hex(palette(frac))
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}">{}</text>"#,
        bar_x + BAR_W + 4.0,
        TOP + 8.0,
        scale_max
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}">0</text>"#, bar_x + BAR_W + 4.0, TOP + 100.0);
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::CallStatus;
    use chrono::{TimeZone, Utc};

    fn cell(t: f64) -> Cell {
        Cell {
            provider: "m".into(),
            language: Language::EN,
            range_upper: 5,
            temperature: t,
        }
    }

    fn recs(values: &[i64]) -> Vec<CallRecord> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| CallRecord {
                call_index: i as u64,
                timestamp: Utc.timestamp_opt(0, 0).unwrap(),
                status: if (1..=5).contains(&v) {
                    CallStatus::Ok
                } else {
                    CallStatus::OutOfRange
                },
                parsed_value: Some(v),
                think_present: false,
                raw_text: String::new(),
            })
            .collect()
    }

    fn sample() -> Vec<(Cell, Vec<CallRecord>)> {
        [2.0, 0.1, 0.3, 1.0, 0.5, 0.8]
            .iter()
            .enumerate()
            .map(|(i, &t)| (cell(t), recs(&[1, 2, 2, 3, 3, 3, 9, (i % 5) as i64 + 1])))
            .collect()
    }

    #[test]
    fn rows_sorted_and_counted() {
        let m = heatmap_matrix(&sample(), "m", Language::EN, 5).unwrap();
        assert_eq!(m.temperatures, vec![0.1, 0.3, 0.5, 0.8, 1.0, 2.0]);
        assert_eq!(m.n_ok(), vec![7; 6]);
        assert_eq!(m.counts[5], vec![2, 2, 3, 0, 0]);
        let r = m.values(Normalization::RowMax);
        assert!(r.iter().all(|row| row.iter().copied().fold(0.0, f64::max) == 1.0));
        assert!(heatmap_matrix(&sample(), "m", Language::JP, 5).is_err());
    }

    #[test]
    fn svg_has_one_rect_per_cell_and_is_stable() {
        let m = heatmap_matrix(&sample(), "m", Language::EN, 5).unwrap();
        let a = render_heatmap_svg(&m, Normalization::Abs);
        assert_eq!(a.matches(r#"class="cell""#).count(), 30);
        assert_eq!(a, render_heatmap_svg(&m, Normalization::Abs));
        assert!(a.contains("T=0.1") && a.contains("T=2.0"));
    }

    #[test]
    fn all_zero_matrix_is_uniform() {
        let cells = vec![(cell(1.0), recs(&[7, 8])), (cell(0.1), Vec::new())];
        let m = heatmap_matrix(&cells, "m", Language::EN, 5).unwrap();
        for norm in [Normalization::Abs, Normalization::RowMax] {
            let svg = render_heatmap_svg(&m, norm);
            let white = hex(palette(0.0));
            let fills: Vec<&str> = svg
                .lines()
                .filter(|l| l.contains(r#"class="cell""#))
                .map(|l| l.split("fill=\"").nth(1).unwrap().split('"').next().unwrap())
                .collect();
            assert_eq!(fills.len(), 10);
            assert!(fills.iter().all(|f| *f == white));
        }
    }

    #[test]
    fn palette_endpoints() {
        assert_eq!(palette(0.0), (255, 255, 255));
        assert_eq!(palette(1.0), (8, 48, 107));
        assert_eq!(palette(7.0), palette(1.0));
    }
}
