//! Bipartite disease→symptom graphs: edge selection from scores and the TSV
//! graph format (`disease<TAB>symptom`, `#` comments, sorted).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graphlearn::ScoreMatrix;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    edges: BTreeSet<(String, String)>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false when the edge was already present.
    pub fn insert(&mut self, disease: impl Into<String>, symptom: impl Into<String>) -> bool {
        self.edges.insert((disease.into(), symptom.into()))
    }

    pub fn contains(&self, disease: &str, symptom: &str) -> bool {
        self.edges.contains(&(disease.to_string(), symptom.to_string()))
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(d, s)| (d.as_str(), s.as_str()))
    }

    /// Edge count E_j per disease.
    pub fn degree_by_disease(&self) -> BTreeMap<&str, usize> {
        let mut out = BTreeMap::new();
        for (d, _) in &self.edges {
            *out.entry(d.as_str()).or_default() += 1;
        }
        out
    }

    pub fn symptoms_of(&self, disease: &str) -> BTreeSet<&str> {
        self.edges
            .range((disease.to_string(), String::new())..)
            .take_while(|(d, _)| d == disease)
            .map(|(_, s)| s.as_str())
            .collect()
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&str, &str) -> bool) {
        self.edges.retain(|(d, s)| keep(d, s));
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (d, s) in &self.edges {
            out.push_str(d);
            out.push('\t');
            out.push_str(s);
            out.push('\n');
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut graph = KnowledgeGraph::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(d), Some(s), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(Error::parse(lineno, "edge", "expected disease<TAB>symptom"));
            };
            if d.is_empty() || s.is_empty() {
                return Err(Error::parse(lineno, "edge", "empty endpoint"));
            }
            if !graph.insert(d, s) {
                return Err(Error::DuplicateEdge {
                    line: lineno,
                    disease: d.to_string(),
                    symptom: s.to_string(),
                });
            }
        }
        Ok(graph)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text)
    }
}

impl<D: Into<String>, S: Into<String>> FromIterator<(D, S)> for KnowledgeGraph {
    fn from_iter<I: IntoIterator<Item = (D, S)>>(iter: I) -> Self {
        let mut g = KnowledgeGraph::new();
        for (d, s) in iter {
            g.insert(d, s);
        }
        g
    }
}

/// How many symptoms each disease receives.
#[derive(Debug, Clone, Copy)]
pub enum EdgeBudget<'a> {
    PerDisease(usize),
    /// E_j from the reference graph; diseases absent from the reference get none.
    ReferenceMatched(&'a KnowledgeGraph),
}

/// Symptom indices of `row` ordered by descending score, ties by symptom name.
pub(crate) fn rank_row(row: &[f64], symptoms: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then_with(|| symptoms[a].cmp(&symptoms[b])));
    order
}

/// Per disease, the highest-scoring symptoms up to the budget become edges.
///
/// `values` is the score table to rank (D×S, rows by disease). Reference
/// diseases missing from the score vocabulary are skipped with a warning.
pub fn select_edges_from(diseases: &[String], symptoms: &[String], values: &[Vec<f64>], budget: EdgeBudget<'_>) -> KnowledgeGraph {
    let mut graph = KnowledgeGraph::new();
    let degrees = match budget {
        EdgeBudget::ReferenceMatched(reference) => {
            let degrees = reference.degree_by_disease();
            for d in degrees.keys() {
                if !diseases.iter().any(|x| x == d) {
                    log::warn!("reference disease {d:?} has no scores; skipped");
                }
            }
            Some(degrees)
        }
        EdgeBudget::PerDisease(_) => None,
    };
    for (j, disease) in diseases.iter().enumerate() {
        let k = match (&degrees, budget) {
            (Some(deg), _) => deg.get(disease.as_str()).copied().unwrap_or(0),
            (None, EdgeBudget::PerDisease(k)) => k,
            (None, EdgeBudget::ReferenceMatched(_)) => unreachable!(),
        };
        for i in rank_row(&values[j], symptoms).into_iter().take(k) {
            graph.insert(disease.clone(), symptoms[i].clone());
        }
    }
    graph
}

pub fn select_edges(scores: &ScoreMatrix, budget: EdgeBudget<'_>) -> KnowledgeGraph {
    let vocab = scores.vocabulary();
    select_edges_from(vocab.diseases(), vocab.symptoms(), scores.ranking_values(), budget)
}
