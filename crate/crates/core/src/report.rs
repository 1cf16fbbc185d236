//! Accuracy tables and report rendering.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::accuracy::{standardised_accuracy, AccuracyReport};
use crate::baseline::BaselineDistribution;
use crate::effect::EffectSize;
use crate::error::{Error, Result};
use crate::preference::{PairVerdict, Relation, GUESSING_ID};

pub const SCHEMA_VERSION: u32 = 1;

/// Quantile levels listed in the baseline section besides α.
pub const REPORTED_QUANTILES: [f64; 5] = [0.01, 0.05, 0.25, 0.5, 0.75];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Markdown,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(Self::Text),
            "markdown" | "md" => Ok(Self::Markdown),
            "json" => Ok(Self::Json),
            _ => Err(Error::InvalidInput(format!("unknown format '{s}'"))),
        }
    }
}

/// Summary of the guessing baseline as printed in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub mean: f64,
    /// SD of the guessing absolute residuals.
    pub sd: f64,
    pub mean_mmre: Option<f64>,
    pub alpha: f64,
    pub alpha_quantile: f64,
    pub alpha_quantile_mmre: Option<f64>,
    /// `(level, MAR)` pairs in ascending level.
    pub quantiles: Vec<(f64, f64)>,
    pub runs: usize,
    pub seed: u64,
}

impl BaselineSummary {
    pub fn from_distribution(dist: &BaselineDistribution, alpha: f64) -> Result<Self> {
        let mut levels: Vec<f64> = REPORTED_QUANTILES.to_vec();
        if !levels.contains(&alpha) {
            levels.push(alpha);
            levels.sort_by(f64::total_cmp);
        }
        Ok(Self {
            mean: dist.mean_mar,
            sd: dist.sd_abs_residuals,
            mean_mmre: dist.mean_mmre,
            alpha,
            alpha_quantile: dist.quantile(alpha)?,
            alpha_quantile_mmre: dist.mmre_quantile(alpha)?,
            quantiles: levels.iter().map(|&q| Ok((q, dist.quantile(q)?))).collect::<Result<_>>()?,
            runs: dist.runs,
            seed: dist.seed,
        })
    }

    fn median(&self) -> Option<f64> {
        self.quantiles.iter().find(|(q, _)| *q == 0.5).map(|&(_, v)| v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowRole {
    BaselineMean,
    BaselineQuantile,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub role: RowRole,
    pub mar: f64,
    /// Percent.
    pub mmre: Option<f64>,
    /// Percent.
    pub mdmre: Option<f64>,
    /// Fraction of predictions within the pred level.
    pub pred_l: Option<f64>,
    /// Percent.
    pub sa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTable {
    pub pred_level: f64,
    pub rows: Vec<TableRow>,
}

fn percent_label(q: f64) -> String {
    let p = q * 100.0;
    if (p - p.round()).abs() < 1e-9 {
        format!("{}%", p.round())
    } else {
        format!("{p}%")
    }
}

impl RunTable {
    /// Baseline rows (when given) followed by one row per system. SA is
    /// recomputed from the baseline mean printed in the same table.
    pub fn build(reports: &[AccuracyReport], baseline: Option<&BaselineSummary>, pred_level: f64) -> Result<Self> {
        let mut rows = Vec::new();
        let sa = |mar: f64| baseline.map(|b| standardised_accuracy(mar, b.mean)).transpose();
        if let Some(b) = baseline {
            rows.push(TableRow {
                label: GUESSING_ID.to_string(),
                role: RowRole::BaselineMean,
                mar: b.mean,
                mmre: b.mean_mmre,
                mdmre: None,
                pred_l: None,
                sa: sa(b.mean)?,
            });
            if let Some(median) = b.median() {
                rows.push(TableRow {
                    label: format!("{GUESSING_ID} 50% quantile"),
                    role: RowRole::BaselineQuantile,
                    mar: median,
                    mmre: None,
                    mdmre: None,
                    pred_l: None,
                    sa: sa(median)?,
                });
            }
            if b.alpha != 0.5 {
                rows.push(TableRow {
                    label: format!("{GUESSING_ID} {} quantile", percent_label(b.alpha)),
                    role: RowRole::BaselineQuantile,
                    mar: b.alpha_quantile,
                    mmre: b.alpha_quantile_mmre,
                    mdmre: None,
                    pred_l: None,
                    sa: sa(b.alpha_quantile)?,
                });
            }
        }
        for r in reports {
            rows.push(TableRow {
                label: r.system_id.clone(),
                role: RowRole::System,
                mar: r.mar,
                mmre: r.mmre,
                mdmre: r.mdmre,
                pred_l: r.pred_l,
                sa: sa(r.mar)?,
            });
        }
        Ok(Self { pred_level, rows })
    }

    pub fn row(&self, label: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// Everything a report may contain; empty sections are omitted from text output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub title: String,
    pub seed: Option<u64>,
    /// Free-form `key: value` lines printed under the title.
    pub header: Vec<(String, String)>,
    pub table: RunTable,
    pub baseline: Option<BaselineSummary>,
    pub effects: Vec<EffectSize>,
    pub verdicts: Vec<PairVerdict>,
    pub hasse: Vec<(String, String)>,
}

impl Report {
    pub fn new(title: impl Into<String>, table: RunTable) -> Self {
        Self {
            title: title.into(),
            seed: None,
            header: Vec::new(),
            table,
            baseline: None,
            effects: Vec::new(),
            verdicts: Vec::new(),
            hasse: Vec::new(),
        }
    }

    pub fn systems(&self) -> Vec<String> {
        self.table.rows.iter().filter(|r| r.role == RowRole::System).map(|r| r.label.clone()).collect()
    }
}

#[derive(Serialize)]
struct JsonReport<'a> {
    schema_version: u32,
    title: &'a str,
    seed: Option<u64>,
    header: &'a [(String, String)],
    systems: Vec<String>,
    table: &'a RunTable,
    baseline: Option<JsonBaseline>,
    effects: &'a [EffectSize],
    verdicts: &'a [PairVerdict],
    hasse: &'a [(String, String)],
}

#[derive(Serialize)]
struct JsonBaseline {
    mean: f64,
    sd: f64,
    mean_mmre: Option<f64>,
    alpha: f64,
    alpha_quantile: f64,
    quantiles: Vec<JsonQuantile>,
    runs: usize,
    seed: u64,
}

#[derive(Serialize)]
struct JsonQuantile {
    level: f64,
    mar: f64,
}

pub fn render_report(report: &Report, format: Format) -> String {
    match format {
        Format::Json => render_json(report),
        Format::Text => render_table_text(report, false),
        Format::Markdown => render_table_text(report, true),
    }
}

fn render_json(report: &Report) -> String {
    let json = JsonReport {
        schema_version: SCHEMA_VERSION,
        title: &report.title,
        seed: report.seed,
        header: &report.header,
        systems: report.systems(),
        table: &report.table,
        baseline: report.baseline.as_ref().map(|b| JsonBaseline {
            mean: b.mean,
            sd: b.sd,
            mean_mmre: b.mean_mmre,
            alpha: b.alpha,
            alpha_quantile: b.alpha_quantile,
            quantiles: b.quantiles.iter().map(|&(level, mar)| JsonQuantile { level, mar }).collect(),
            runs: b.runs,
            seed: b.seed,
        }),
        effects: &report.effects,
        verdicts: &report.verdicts,
        hasse: &report.hasse,
    };
    let mut s = serde_json::to_string_pretty(&json).expect("report serializes");
    s.push('\n');
    s
}

fn one_dp(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1}")).unwrap_or_else(|| "-".into())
}

fn fraction(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

fn relation_symbol(r: Relation) -> &'static str {
    match r {
        Relation::LeftPrecedesRight => "<",
        Relation::RightPrecedesLeft => ">",
        Relation::Indifferent => "~",
        Relation::Incomparable => "||",
    }
}

fn grid(out: &mut String, header: &[String], rows: &[Vec<String>], markdown: bool) {
    if markdown {
        let _ = writeln!(out, "| {} |", header.join(" | "));
        let _ = writeln!(out, "|{}", header.iter().map(|_| "---|").collect::<String>());
        for r in rows {
            let _ = writeln!(out, "| {} |", r.join(" | "));
        }
        return;
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|j| rows.iter().map(|r| r[j].chars().count()).chain([header[j].chars().count()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .enumerate()
            .map(|(j, c)| if j == 0 { format!("{c:<w$}", w = widths[j]) } else { format!("{c:>w$}", w = widths[j]) })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let _ = writeln!(out, "{}", line(header).trim_end());
    let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    for r in rows {
        let _ = writeln!(out, "{}", line(r).trim_end());
    }
}

fn section(out: &mut String, title: &str, markdown: bool) {
    out.push('\n');
    if markdown {
        let _ = writeln!(out, "## {title}\n");
    } else {
        let _ = writeln!(out, "{title}");
    }
}

fn render_table_text(report: &Report, markdown: bool) -> String {
    let mut out = String::new();
    if markdown {
        let _ = writeln!(out, "# {}\n", report.title);
    } else {
        let _ = writeln!(out, "{}", report.title);
    }
    if let Some(seed) = report.seed {
        let _ = writeln!(out, "seed: {seed}");
    }
    for (k, v) in &report.header {
        let _ = writeln!(out, "{k}: {v}");
    }
    if markdown || report.seed.is_some() || !report.header.is_empty() {
        out.push('\n');
    }

    let t = &report.table;
    let header: Vec<String> = [
        "System".to_string(),
        "MAR".into(),
        "MMRE (%)".into(),
        "MdMRE (%)".into(),
        format!("pred({})", t.pred_level),
        "SA (%)".into(),
    ]
    .into();
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                format!("{:.1}", r.mar),
                one_dp(r.mmre),
                one_dp(r.mdmre),
                fraction(r.pred_l),
                one_dp(r.sa),
            ]
        })
        .collect();
    grid(&mut out, &header, &rows, markdown);

    if let Some(b) = &report.baseline {
        section(&mut out, "Random guessing baseline", markdown);
        let header = vec!["Statistic".to_string(), "Value".into()];
        let mut rows = vec![
            vec!["runs".to_string(), b.runs.to_string()],
            vec!["seed".to_string(), b.seed.to_string()],
            vec!["mean MAR".to_string(), format!("{:.1}", b.mean)],
            vec!["SD of absolute residuals".to_string(), format!("{:.1}", b.sd)],
        ];
        for (q, v) in &b.quantiles {
            rows.push(vec![format!("{} quantile", percent_label(*q)), format!("{v:.1}")]);
        }
        grid(&mut out, &header, &rows, markdown);
    }

    if !report.effects.is_empty() {
        section(&mut out, "Effect sizes (Glass's delta)", markdown);
        let header = vec!["Control".to_string(), "Treatment".into(), "|delta|".into(), "Category".into()];
        let rows: Vec<Vec<String>> = report
            .effects
            .iter()
            .map(|e| {
                let mut cat = e.category.to_string();
                if e.small_sample {
                    cat.push_str(" (small sample)");
                }
                vec![e.control_id.clone(), e.treatment_id.clone(), format!("{:.3}", e.magnitude), cat]
            })
            .collect();
        grid(&mut out, &header, &rows, markdown);
    }

    if !report.verdicts.is_empty() {
        section(&mut out, "Pairwise verdicts", markdown);
        let header = vec![
            "Left".to_string(),
            "Relation".into(),
            "Right".into(),
            "Test".into(),
            "p".into(),
            "|delta|".into(),
            "Note".into(),
        ];
        let rows: Vec<Vec<String>> = report
            .verdicts
            .iter()
            .map(|v| {
                let e = &v.evidence;
                let mut notes = Vec::new();
                if v.not_predicting {
                    notes.push("not predicting");
                }
                if e.direction_conflict {
                    notes.push("test disagrees with MAR");
                }
                vec![
                    v.left_id.clone(),
                    relation_symbol(v.relation).to_string(),
                    v.right_id.clone(),
                    e.test
                        .and_then(|k| serde_json::to_value(k).ok().and_then(|j| j.as_str().map(String::from)))
                        .unwrap_or_else(|| "-".into()),
                    e.p_value.map(format_p).unwrap_or_else(|| "-".into()),
                    e.delta_magnitude.map(|d| format!("{d:.3}")).unwrap_or_else(|| "-".into()),
                    notes.join("; "),
                ]
            })
            .collect();
        grid(&mut out, &header, &rows, markdown);
    }

    if !report.hasse.is_empty() {
        section(&mut out, "Hasse covers (worse < better)", markdown);
        for (lo, hi) in &report.hasse {
            let _ = writeln!(out, "{}{lo} < {hi}", if markdown { "- " } else { "  " });
        }
    }
    out
}

fn format_p(p: f64) -> String {
    if p < 1e-4 {
        "<0.0001".into()
    } else {
        format!("{p:.4}")
    }
}
