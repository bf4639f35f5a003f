//! F1 and AUPRC of learned scores against a reference graph.
//!
//! Only reference edges whose disease and symptom both appear in the score
//! vocabulary take part; the rest are counted in the report. Diseases with no
//! such edge are not evaluated.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graphlearn::ScoreMatrix;
use crate::kgraph::{rank_row, select_edges_from, EdgeBudget, KnowledgeGraph};

/// Edge budget for F1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum F1Budget {
    #[default]
    /// E_j, the reference degree of each disease.
    ReferenceMatched,
    PerDisease(usize),
}

impl F1Budget {
    pub fn label(self) -> String {
        match self {
            F1Budget::ReferenceMatched => "ref".to_string(),
            F1Budget::PerDisease(k) => k.to_string(),
        }
    }
}

impl FromStr for F1Budget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ref" => Ok(F1Budget::ReferenceMatched),
            _ => s.parse().map(F1Budget::PerDisease).map_err(|_| Error::UnknownVariant {
                kind: "budget",
                value: s.to_string(),
            }),
        }
    }
}

/// Denominator of the terminal precision B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Baseline {
    /// Every disease-symptom pair of the evaluated diseases.
    #[default]
    FullGrid,
    /// Only the retained top-E_j candidates.
    RetainedPool,
}

impl Baseline {
    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::FullGrid => "full",
            Baseline::RetainedPool => "retained",
        }
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Baseline::FullGrid),
            "retained" => Ok(Baseline::RetainedPool),
            _ => Err(Error::UnknownVariant {
                kind: "baseline",
                value: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    /// `None` for the two synthetic end points.
    pub threshold: Option<f64>,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub auprc: f64,
    pub baseline: f64,
    /// No retained candidate had a nonzero score.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiseaseF1 {
    pub disease: String,
    pub reference_edges: usize,
    pub selected: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub f1: f64,
}

/// Reference edges that can be scored against `diseases` × `symptoms`, and
/// how many were left out.
pub fn restrict_reference(reference: &KnowledgeGraph, diseases: &[String], symptoms: &[String]) -> (KnowledgeGraph, usize) {
    let ds: BTreeSet<&str> = diseases.iter().map(String::as_str).collect();
    let ss: BTreeSet<&str> = symptoms.iter().map(String::as_str).collect();
    let mut kept = reference.clone();
    kept.retain(|d, s| ds.contains(d) && ss.contains(s));
    let dropped = reference.len() - kept.len();
    (kept, dropped)
}

/// F1 per disease over a score table (`values[j][i]`, ranked as given).
pub fn f1_table(diseases: &[String], symptoms: &[String], values: &[Vec<f64>], reference: &KnowledgeGraph, budget: F1Budget) -> Result<Vec<DiseaseF1>> {
    let (reference, _) = restrict_reference(reference, diseases, symptoms);
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let budget = match budget {
        F1Budget::ReferenceMatched => EdgeBudget::ReferenceMatched(&reference),
        F1Budget::PerDisease(k) => EdgeBudget::PerDisease(k),
    };
    let selected = select_edges_from(diseases, symptoms, values, budget);
    let mut table = Vec::new();
    for disease in diseases {
        let truth = reference.symptoms_of(disease);
        if truth.is_empty() {
            continue;
        }
        let chosen = selected.symptoms_of(disease);
        let tp = chosen.intersection(&truth).count();
        let (fp, fn_) = (chosen.len() - tp, truth.len() - tp);
        table.push(DiseaseF1 {
            disease: disease.clone(),
            reference_edges: truth.len(),
            selected: chosen.len(),
            tp,
            fp,
            fn_,
            f1: 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64,
        });
    }
    Ok(table)
}

pub fn f1_per_disease(scores: &ScoreMatrix, reference: &KnowledgeGraph, budget: F1Budget) -> Result<Vec<DiseaseF1>> {
    let vocab = scores.vocabulary();
    f1_table(vocab.diseases(), vocab.symptoms(), scores.ranking_values(), reference, budget)
}

/// Pooled precision-recall curve.
///
/// Per disease only the top E_j candidates are kept; the nonzero ones are
/// pooled and every distinct score is a threshold (score ≥ threshold is
/// selected). The curve starts at recall 0 with the first point's precision,
/// ends with (recall 1, precision B), and is integrated by trapezoids.
pub fn pr_curve(diseases: &[String], symptoms: &[String], values: &[Vec<f64>], reference: &KnowledgeGraph, baseline: Baseline) -> Result<PrCurve> {
    let (reference, _) = restrict_reference(reference, diseases, symptoms);
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let mut pool: Vec<(f64, bool)> = Vec::new();
    let mut evaluated = 0usize;
    let mut retained = 0usize;
    for (j, disease) in diseases.iter().enumerate() {
        let truth = reference.symptoms_of(disease);
        if truth.is_empty() {
            continue;
        }
        evaluated += 1;
        for i in rank_row(&values[j], symptoms).into_iter().take(truth.len()) {
            retained += 1;
            if values[j][i] != 0.0 {
                pool.push((values[j][i], truth.contains(symptoms[i].as_str())));
            }
        }
    }
    let total = reference.len() as f64;
    let b = match baseline {
        Baseline::FullGrid => total / (evaluated * symptoms.len()) as f64,
        Baseline::RetainedPool => total / retained as f64,
    };
    if pool.is_empty() {
        return Ok(PrCurve {
            points: vec![
                PrPoint {
                    threshold: None,
                    precision: b,
                    recall: 0.0,
                },
                PrPoint {
                    threshold: None,
                    precision: b,
                    recall: 1.0,
                },
            ],
            auprc: b,
            baseline: b,
            degenerate: true,
        });
    }
    pool.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut sweep = Vec::new();
    let (mut tp, mut taken) = (0usize, 0usize);
    let mut k = 0;
    while k < pool.len() {
        let threshold = pool[k].0;
        while k < pool.len() && pool[k].0 == threshold {
            tp += usize::from(pool[k].1);
            taken += 1;
            k += 1;
        }
        sweep.push(PrPoint {
            threshold: Some(threshold),
            precision: tp as f64 / taken as f64,
            recall: tp as f64 / total,
        });
    }
    let mut points = Vec::with_capacity(sweep.len() + 2);
    points.push(PrPoint {
        threshold: None,
        precision: sweep[0].precision,
        recall: 0.0,
    });
    points.extend(sweep);
    points.push(PrPoint {
        threshold: None,
        precision: b,
        recall: 1.0,
    });
    let auprc = points
        .windows(2)
        .map(|w| (w[1].recall - w[0].recall) * (w[1].precision + w[0].precision) / 2.0)
        .sum();
    Ok(PrCurve {
        points,
        auprc,
        baseline: b,
        degenerate: false,
    })
}

pub fn auprc(scores: &ScoreMatrix, reference: &KnowledgeGraph, baseline: Baseline) -> Result<PrCurve> {
    let vocab = scores.vocabulary();
    pr_curve(vocab.diseases(), vocab.symptoms(), scores.ranking_values(), reference, baseline)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalConfig {
    pub budget: F1Budget,
    pub baseline: Baseline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub learner: String,
    pub config: EvalConfig,
    pub curve: PrCurve,
    pub f1_by_disease: Vec<DiseaseF1>,
    pub reference_edges: usize,
    /// Reference edges naming a disease or symptom the scores do not cover.
    pub reference_edges_outside: usize,
}

impl EvalReport {
    pub fn auprc(&self) -> f64 {
        self.curve.auprc
    }

    pub fn mean_f1(&self) -> f64 {
        self.f1_by_disease.iter().map(|r| r.f1).sum::<f64>() / self.f1_by_disease.len() as f64
    }

    pub fn f1_tsv(&self) -> String {
        let mut out = String::from("disease\treference_edges\tselected\ttp\tfp\tfn\tf1\n");
        for r in &self.f1_by_disease {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.disease, r.reference_edges, r.selected, r.tp, r.fp, r.fn_, r.f1
            );
        }
        out
    }

    pub fn curve_tsv(&self) -> String {
        let mut out = String::from("threshold\trecall\tprecision\n");
        for p in &self.curve.points {
            let threshold = p.threshold.map_or_else(|| "-".to_string(), |t| t.to_string());
            let _ = writeln!(out, "{threshold}\t{}\t{}", p.recall, p.precision);
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "learner\t{}", self.learner);
        let _ = writeln!(out, "auprc\t{}", self.curve.auprc);
        let _ = writeln!(out, "terminal_precision\t{}", self.curve.baseline);
        let _ = writeln!(out, "baseline\t{}", self.config.baseline);
        let _ = writeln!(out, "degenerate\t{}", self.curve.degenerate);
        let _ = writeln!(out, "f1_budget\t{}", self.config.budget.label());
        let _ = writeln!(out, "mean_f1\t{}", self.mean_f1());
        let _ = writeln!(out, "diseases_evaluated\t{}", self.f1_by_disease.len());
        let _ = writeln!(out, "reference_edges\t{}", self.reference_edges);
        let _ = writeln!(out, "reference_edges_outside_vocabulary\t{}", self.reference_edges_outside);
        out
    }
}

pub fn evaluate(scores: &ScoreMatrix, reference: &KnowledgeGraph, config: EvalConfig) -> Result<EvalReport> {
    let vocab = scores.vocabulary();
    let (kept, outside) = restrict_reference(reference, vocab.diseases(), vocab.symptoms());
    Ok(EvalReport {
        learner: scores.learner().to_string(),
        config,
        curve: auprc(scores, &kept, config.baseline)?,
        f1_by_disease: f1_per_disease(scores, &kept, config.budget)?,
        reference_edges: kept.len(),
        reference_edges_outside: outside,
    })
}

/// Drops edges whose symptom is excluded; returns the graph and the drop count.
pub fn filter_reference(mut graph: KnowledgeGraph, exclusions: &[String]) -> (KnowledgeGraph, usize) {
    let before = graph.len();
    graph.retain(|_, s| !exclusions.iter().any(|e| e == s));
    let dropped = before - graph.len();
    (graph, dropped)
}

pub fn load_reference(path: &Path, exclusions: &[String]) -> Result<(KnowledgeGraph, usize)> {
    Ok(filter_reference(KnowledgeGraph::read(path)?, exclusions))
}
