use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::NaiveDate;
use clap::{Subcommand, ValueEnum};
use serde::Deserialize;

use qc_core::analytics::{self, MatchMode, Prf, ReportFilter};
use qc_core::store::Store;
use qc_core::{Category, EntityId};

#[derive(Clone, Copy, ValueEnum)]
pub enum Mode {
    Exact,
    NameOnly,
}

#[derive(Subcommand)]
pub enum ReportKind {
    /// Per-article precision/recall/F1 of predicted against gold entities.
    /// Both files are CSV with columns `article,name,category`.
    Prf {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        predicted: PathBuf,
        #[arg(long, value_enum, default_value = "name-only")]
        mode: Mode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roster coverage: one full name per line.
    Roster {
        #[arg(long)]
        roster: PathBuf,
        /// Entity full names to ignore, one per line.
        #[arg(long)]
        exclude: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Entities whose names contain any of the tokens, by article count.
    Variants {
        #[arg(long, value_delimiter = ',', required = true)]
        tokens: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// LOCATION mention counts.
    Locations {
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-article sentiment for one entity over time.
    Series {
        #[arg(long)]
        entity_id: i64,
        #[arg(long, default_value = qc_core::sentiment::COMPOUND_TOOL)]
        tool: String,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
pub struct FilterArgs {
    /// Comma-separated media names.
    #[arg(long, value_delimiter = ',')]
    sources: Option<Vec<String>>,
    #[arg(long)]
    from: Option<NaiveDate>,
    #[arg(long)]
    to: Option<NaiveDate>,
    #[arg(long)]
    ner_tool: Option<String>,
}

impl FilterArgs {
    fn to_filter(&self) -> ReportFilter {
        ReportFilter {
            sources: self.sources.as_ref().map(|s| s.iter().cloned().collect()),
            date_from: self.from,
            date_to: self.to,
            tagger: self.ner_tool.clone(),
        }
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(String::from).collect())
}

#[derive(Deserialize)]
struct EntityRow {
    article: String,
    name: String,
    category: Category,
}

type ByArticle = BTreeMap<String, Vec<(String, Category)>>;

fn read_entities(path: &Path) -> Result<ByArticle> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = ByArticle::new();
    for row in rdr.deserialize() {
        let r: EntityRow = row.with_context(|| format!("parsing {}", path.display()))?;
        out.entry(r.article).or_default().push((r.name, r.category));
    }
    Ok(out)
}

/// Scores every article present in either file; an article missing from one
/// side counts as having no entities there.
pub fn prf_report(gold: &ByArticle, predicted: &ByArticle, mode: MatchMode) -> Vec<(String, Prf)> {
    let articles: BTreeSet<&String> = gold.keys().chain(predicted.keys()).collect();
    let empty = Vec::new();
    articles
        .into_iter()
        .map(|a| {
            let g = gold.get(a).unwrap_or(&empty);
            let p = predicted.get(a).unwrap_or(&empty);
            (a.clone(), analytics::prf(g, p, mode))
        })
        .collect()
}

pub fn run(kind: ReportKind, open_store: impl Fn() -> Result<Store>) -> Result<()> {
    match kind {
        ReportKind::Prf { gold, predicted, mode, out } => {
            let mode = match mode {
                Mode::Exact => MatchMode::Exact,
                Mode::NameOnly => MatchMode::NameOnly,
            };
            let rows = prf_report(&read_entities(&gold)?, &read_entities(&predicted)?, mode);
            analytics::write_prf_csv(&rows, output(&out)?)?;
            let prfs: Vec<Prf> = rows.iter().map(|(_, p)| *p).collect();
            let s = analytics::aggregate(&prfs)?;
            eprintln!(
                "{} articles: recall {:.4} (sd {:.4}), precision {:.4} (sd {:.4}), f1 {:.4} (sd {:.4})",
                s.articles, s.recall.mean, s.recall.sd, s.precision.mean, s.precision.sd, s.f1.mean, s.f1.sd
            );
        }
        ReportKind::Roster { roster, exclude, out } => {
            let exclude = exclude.as_deref().map(read_lines).transpose()?.unwrap_or_default();
            let report = analytics::roster_report(&open_store()?, &read_lines(&roster)?, &exclude)?;
            analytics::write_roster_csv(&report, output(&out)?)?;
            eprintln!("{} of {} roster names found ({:.1}%)", report.matched, report.roster_size, report.coverage * 100.0);
        }
        ReportKind::Variants { tokens, out } => {
            let report = analytics::variant_report(&open_store()?, &tokens)?;
            analytics::write_variants_csv(&report, output(&out)?)?;
        }
        ReportKind::Locations { filter, out } => {
            let rows = analytics::location_frequencies(&open_store()?, &filter.to_filter())?;
            analytics::write_locations_csv(&rows, output(&out)?)?;
        }
        ReportKind::Series { entity_id, tool, filter, out } => {
            let rows = analytics::sentiment_series(&open_store()?, EntityId(entity_id), &tool, &filter.to_filter())?;
            analytics::write_series_csv(&rows, output(&out)?)?;
        }
    }
    Ok(())
}
