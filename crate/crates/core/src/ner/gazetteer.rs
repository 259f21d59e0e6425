use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::model::Category;

use super::NerError;

const BUNDLED_NAMES: &str = include_str!("../../data/gazetteer.tsv");
const BUNDLED_HONORIFICS: &str = include_str!("../../data/honorifics.txt");
const BUNDLED_ORG_SUFFIXES: &str = include_str!("../../data/org_suffixes.txt");

/// Case-folds, drops periods and collapses whitespace so that `U.S.`,
/// `us` and `US` share one key.
pub fn gazetteer_key(name: &str) -> String {
    name.split_whitespace()
        .map(|w| w.replace('.', "").to_lowercase().replace('\u{2019}', "'"))
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Known names plus the cue words the builtin tagger uses.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    names: HashMap<String, Category>,
    honorifics: HashSet<String>,
    org_suffixes: HashSet<String>,
}

fn word_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(gazetteer_key)
        .collect()
}

impl Gazetteer {
    /// `names` holds `name<TAB>CATEGORY` lines; the other two are one word
    /// per line. `#` starts a comment line in all three.
    pub fn parse(names: &str, honorifics: &str, org_suffixes: &str) -> Result<Self, NerError> {
        let mut map = HashMap::new();
        for (i, line) in names.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, cat) = line
                .split_once('\t')
                .ok_or_else(|| NerError::Gazetteer(format!("line {}: expected name<TAB>CATEGORY", i + 1)))?;
            let cat: Category = cat
                .parse()
                .map_err(|e| NerError::Gazetteer(format!("line {}: {e}", i + 1)))?;
            map.insert(gazetteer_key(name), cat);
        }
        Ok(Gazetteer { names: map, honorifics: word_list(honorifics), org_suffixes: word_list(org_suffixes) })
    }

    pub fn load(names: &Path, honorifics: &Path, org_suffixes: &Path) -> Result<Self, NerError> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| NerError::Gazetteer(format!("{}: {e}", p.display())));
        Self::parse(&read(names)?, &read(honorifics)?, &read(org_suffixes)?)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_NAMES, BUNDLED_HONORIFICS, BUNDLED_ORG_SUFFIXES).expect("bundled gazetteer is well-formed")
    }

    pub fn with_name(mut self, name: &str, category: Category) -> Self {
        self.names.insert(gazetteer_key(name), category);
        self
    }

    pub fn with_honorific(mut self, word: &str) -> Self {
        self.honorifics.insert(gazetteer_key(word));
        self
    }

    pub fn with_org_suffix(mut self, word: &str) -> Self {
        self.org_suffixes.insert(gazetteer_key(word));
        self
    }

    pub fn lookup(&self, name: &str) -> Option<Category> {
        self.names.get(&gazetteer_key(name)).copied()
    }

    pub fn is_honorific(&self, word: &str) -> bool {
        self.honorifics.contains(&gazetteer_key(word))
    }

    pub fn is_org_suffix(&self, word: &str) -> bool {
        self.org_suffixes.contains(&gazetteer_key(word))
    }
}
