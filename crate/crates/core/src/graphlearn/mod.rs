//! Disease→symptom importance scores from the four learner families.

mod importance;
mod noisy_or;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use sha2::{Digest, Sha256};

pub use importance::{importance_causal, importance_lr, importance_nb, importance_noisy_or, intervention_ratio, NB_LOG_FLOOR};
pub use noisy_or::{fit_noisy_or, NoisyOrConfig, NoisyOrParams};

use crate::cohort::{DemoEncoding, RecordSet, Vocabulary};
use crate::error::{Error, Result};
use crate::estimators::{Family, Grid};

/// A D×S table of nonnegative importance scores, optionally with the raw
/// (untransformed) values the learner produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    vocabulary: Vocabulary,
    values: Vec<Vec<f64>>,
    raw: Option<Vec<Vec<f64>>>,
    learner: String,
    fingerprint: String,
}

impl ScoreMatrix {
    pub fn new(vocabulary: Vocabulary, learner: impl Into<String>, values: Vec<Vec<f64>>, raw: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let check = |table: &[Vec<f64>]| -> Result<()> {
            if table.len() != vocabulary.n_diseases() {
                return Err(Error::DimensionMismatch {
                    expected: vocabulary.n_diseases(),
                    found: table.len(),
                });
            }
            for row in table {
                if row.len() != vocabulary.n_symptoms() {
                    return Err(Error::DimensionMismatch {
                        expected: vocabulary.n_symptoms(),
                        found: row.len(),
                    });
                }
                if row.iter().any(|v| v.is_nan()) {
                    return Err(Error::InvalidSpec("score table contains NaN".into()));
                }
            }
            Ok(())
        };
        check(&values)?;
        if let Some(raw) = &raw {
            check(raw)?;
        }
        if values.iter().flatten().any(|&v| v < 0.0 || v.is_infinite()) {
            return Err(Error::InvalidSpec("exported scores must be finite and nonnegative".into()));
        }
        // normalize -0.0 so serialized output never shows a sign on zero
        let values = values.into_iter().map(|row| row.into_iter().map(|v| v + 0.0).collect()).collect();
        Ok(ScoreMatrix {
            vocabulary,
            values,
            raw,
            learner: learner.into(),
            fingerprint: String::new(),
        })
    }

    pub fn with_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.fingerprint = fingerprint.into();
        self
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    /// Exported scores, all ≥ 0.
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn raw(&self) -> Option<&[Vec<f64>]> {
        self.raw.as_deref()
    }

    /// The table consumers should rank by: raw values when present.
    pub fn ranking_values(&self) -> &[Vec<f64>] {
        self.raw.as_deref().unwrap_or(&self.values)
    }

    /// Drops the raw table so ranking falls back to the exported scores.
    pub fn without_raw(mut self) -> Self {
        self.raw = None;
        self
    }

    pub fn learner(&self) -> &str {
        &self.learner
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn get(&self, disease: usize, symptom: usize) -> f64 {
        self.values[disease][symptom]
    }

    /// Rows reordered so that new row `k` is old row `order[k]`.
    pub fn permute_diseases(&self, order: &[usize]) -> Result<Self> {
        let diseases = order.iter().map(|&j| self.vocabulary.diseases()[j].clone()).collect();
        let vocab = Vocabulary::new(diseases, self.vocabulary.symptoms().to_vec())?;
        let pick = |t: &[Vec<f64>]| order.iter().map(|&j| t[j].clone()).collect::<Vec<_>>();
        Ok(ScoreMatrix {
            vocabulary: vocab,
            values: pick(&self.values),
            raw: self.raw.as_deref().map(pick),
            learner: self.learner.clone(),
            fingerprint: self.fingerprint.clone(),
        })
    }

    /// Full cross product as `disease\tsymptom\tscore`, sorted by disease,
    /// descending score, then symptom. `raw` selects the raw table.
    pub fn to_tsv(&self, raw: bool) -> String {
        let table = if raw { self.raw.as_deref().unwrap_or(&self.values) } else { &self.values };
        let mut out = String::new();
        let _ = writeln!(out, "# learner\t{}", self.learner);
        if !self.fingerprint.is_empty() {
            let _ = writeln!(out, "# fingerprint\t{}", self.fingerprint);
        }
        out.push_str("disease\tsymptom\tscore\n");
        let mut order: Vec<usize> = (0..self.vocabulary.n_diseases()).collect();
        order.sort_by(|&a, &b| self.vocabulary.diseases()[a].cmp(&self.vocabulary.diseases()[b]));
        for j in order {
            let disease = &self.vocabulary.diseases()[j];
            for i in crate::kgraph::rank_row(&table[j], self.vocabulary.symptoms()) {
                let _ = writeln!(out, "{disease}\t{}\t{}", self.vocabulary.symptoms()[i], table[j][i]);
            }
        }
        out
    }

    /// Reads an exported table and optionally its raw companion. The
    /// vocabulary comes out in lexicographic order.
    pub fn from_tsv(text: &str, raw: Option<&str>) -> Result<Self> {
        let (learner, fingerprint, cells) = parse_score_tsv(text)?;
        let diseases: BTreeSet<&String> = cells.keys().map(|(d, _)| d).collect();
        let symptoms: BTreeSet<&String> = cells.keys().map(|(_, s)| s).collect();
        if cells.len() != diseases.len() * symptoms.len() {
            return Err(Error::InvalidSpec(format!(
                "score table covers {} of {} disease-symptom pairs",
                cells.len(),
                diseases.len() * symptoms.len()
            )));
        }
        let vocab = Vocabulary::new(diseases.into_iter().cloned().collect(), symptoms.into_iter().cloned().collect())?;
        let table = |cells: &BTreeMap<(String, String), f64>| -> Result<Vec<Vec<f64>>> {
            vocab
                .diseases()
                .iter()
                .map(|d| {
                    vocab
                        .symptoms()
                        .iter()
                        .map(|s| {
                            cells
                                .get(&(d.clone(), s.clone()))
                                .copied()
                                .ok_or_else(|| Error::InvalidSpec(format!("missing score for {d} {s}")))
                        })
                        .collect()
                })
                .collect()
        };
        let values = table(&cells)?;
        let raw = match raw {
            Some(text) => Some(table(&parse_score_tsv(text)?.2)?),
            None => None,
        };
        Ok(ScoreMatrix::new(vocab, learner, values, raw)?.with_fingerprint(fingerprint))
    }
}

type ScoreCells = BTreeMap<(String, String), f64>;

fn parse_score_tsv(text: &str) -> Result<(String, String, ScoreCells)> {
    let mut learner = String::new();
    let mut fingerprint = String::new();
    let mut cells = BTreeMap::new();
    let mut header_seen = false;
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        if let Some(comment) = line.strip_prefix('#') {
            let mut parts = comment.trim().splitn(2, '\t');
            match (parts.next(), parts.next()) {
                (Some("learner"), Some(v)) => learner = v.to_string(),
                (Some("fingerprint"), Some(v)) => fingerprint = v.to_string(),
                _ => {}
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if !header_seen {
            if line != "disease\tsymptom\tscore" {
                return Err(Error::parse(line_no, "header", "expected \"disease\\tsymptom\\tscore\""));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(line_no, "score", format!("expected 3 fields, found {}", fields.len())));
        }
        let score: f64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(line_no, "score", format!("not a number: {:?}", fields[2])))?;
        if cells.insert((fields[0].to_string(), fields[1].to_string()), score).is_some() {
            return Err(Error::DuplicateEdge {
                line: line_no,
                disease: fields[0].to_string(),
                symptom: fields[1].to_string(),
            });
        }
    }
    Ok((learner, fingerprint, cells))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Learner {
    Lr,
    Nb,
    Nor,
    CausalLr,
    CausalRf,
    CausalNb,
}

impl Learner {
    pub const ALL: [Learner; 6] = [Learner::Lr, Learner::Nb, Learner::Nor, Learner::CausalLr, Learner::CausalRf, Learner::CausalNb];

    pub fn as_str(self) -> &'static str {
        match self {
            Learner::Lr => "lr",
            Learner::Nb => "nb",
            Learner::Nor => "nor",
            Learner::CausalLr => "causal_lr",
            Learner::CausalRf => "causal_rf",
            Learner::CausalNb => "causal_nb",
        }
    }

    /// Whether the result depends on the seed.
    pub fn is_stochastic(self) -> bool {
        self != Learner::Nb
    }

    /// Grid family searched by this learner, if any.
    pub fn family(self) -> Option<Family> {
        match self {
            Learner::Lr | Learner::CausalLr => Some(Family::Logistic),
            Learner::CausalRf => Some(Family::RandomForest),
            Learner::CausalNb => Some(Family::NaiveBayes),
            Learner::Nb | Learner::Nor => None,
        }
    }
}

impl FromStr for Learner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Learner::ALL.into_iter().find(|l| l.as_str() == s).ok_or_else(|| Error::UnknownVariant {
            kind: "model",
            value: s.to_string(),
        })
    }
}

impl fmt::Display for Learner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct LearnConfig {
    pub demo: bool,
    pub seed: u64,
    pub folds: usize,
    pub n_trees: usize,
    /// Smoothing for the naive Bayes importance metric.
    pub nb_alpha: f64,
    /// Denominator floor of the causal ratio.
    pub epsilon: f64,
    pub noisy_or: NoisyOrConfig,
    /// Overrides the standard grid of a family when set.
    pub grids: BTreeMap<&'static str, Grid>,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            demo: false,
            seed: 0,
            folds: 3,
            n_trees: 100,
            nb_alpha: 0.0,
            epsilon: 1e-6,
            noisy_or: NoisyOrConfig::default(),
            grids: BTreeMap::new(),
        }
    }
}

impl LearnConfig {
    pub fn grid(&self, family: Family) -> Grid {
        self.grids.get(family.as_str()).cloned().unwrap_or_else(|| Grid::standard(family, self.n_trees))
    }

    pub fn with_grid(mut self, family: Family, grid: Grid) -> Self {
        self.grids.insert(family.as_str(), grid);
        self
    }

    /// Human-readable description of everything that influences `learner`.
    pub fn describe(&self, learner: Learner) -> Vec<String> {
        let mut lines = vec![format!("model={learner}"), format!("demo={}", self.demo), format!("seed={}", self.seed)];
        match learner {
            Learner::Nb => lines.push(format!("alpha={}", self.nb_alpha)),
            Learner::Nor => lines.push(format!("tolerance={} max_iter={}", self.noisy_or.tolerance, self.noisy_or.max_iter)),
            _ => {}
        }
        if let Some(family) = learner.family() {
            lines.push(format!("folds={}", self.folds));
            if learner.family() != Some(Family::Logistic) || learner == Learner::CausalLr {
                lines.push(format!("epsilon={}", self.epsilon));
            }
            lines.extend(self.grid(family).describe().into_iter().map(|c| format!("grid {c}")));
        }
        lines
    }

    fn fingerprint(&self, learner: Learner, records: &RecordSet) -> String {
        let mut hasher = Sha256::new();
        for line in self.describe(learner) {
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
        hasher.update(
            format!(
                "N={} D={} S={}",
                records.len(),
                records.vocabulary().n_diseases(),
                records.vocabulary().n_symptoms()
            )
            .as_bytes(),
        );
        hex::encode(hasher.finalize())
    }
}

/// Runs `learner` on `records`.
pub fn learn(records: &RecordSet, learner: Learner, config: &LearnConfig) -> Result<ScoreMatrix> {
    if config.demo {
        if learner == Learner::Nb {
            return Err(Error::Unsupported("the naive Bayes metric takes no demographic features".into()));
        }
        if !records.has_demographics() {
            return Err(Error::MissingDemographics);
        }
    }
    let scores = match learner {
        Learner::Lr => {
            let encoding = if config.demo { DemoEncoding::Continuous } else { DemoEncoding::None };
            importance_lr(records, encoding, config)?
        }
        Learner::Nb => importance_nb(records, config.nb_alpha)?,
        Learner::Nor => {
            let params = fit_noisy_or(records, config.demo, &config.noisy_or, config.seed);
            if !params.converged {
                log::warn!("noisy-OR EM stopped at the iteration limit before converging");
            }
            importance_noisy_or(records, &params)?
        }
        Learner::CausalLr => importance_causal(records, Family::Logistic, config.demo, config)?,
        Learner::CausalRf => importance_causal(records, Family::RandomForest, config.demo, config)?,
        Learner::CausalNb => importance_causal(records, Family::NaiveBayes, config.demo, config)?,
    };
    Ok(scores.with_fingerprint(config.fingerprint(learner, records)))
}
