//! Robustness studies: per-disease covariates and abnormality flags, the
//! top/bottom-n comparison, subgroup learning, and predictability AUROCs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::cohort::{age_bracket, attach_demographics, DemoEncoding, FeatureBlock, RecordSet, Sex, AGE_BRACKETS};
use crate::error::{Error, Result};
use crate::estimators::{grid_search_cv, Design, Family};
use crate::eval::{evaluate, DiseaseF1, EvalConfig};
use crate::graphlearn::{learn, LearnConfig, Learner};
use crate::kgraph::KnowledgeGraph;
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct DiseaseCovariates {
    pub disease: String,
    /// Records with the disease.
    pub count: usize,
    /// Mean number of diseases on those records, the disease itself included.
    pub mean_diseases: Option<f64>,
    pub mean_symptoms: Option<f64>,
    /// Over records with a known age.
    pub mean_age: Option<f64>,
    /// Over records with a known sex.
    pub female_fraction: Option<f64>,
}

impl DiseaseCovariates {
    pub fn value(&self, covariate: Covariate) -> Option<f64> {
        match covariate {
            Covariate::Count => Some(self.count as f64),
            Covariate::Diseases => self.mean_diseases,
            Covariate::Symptoms => self.mean_symptoms,
            Covariate::Age => self.mean_age,
            Covariate::Female => self.female_fraction,
        }
    }
}

pub fn disease_covariates(records: &RecordSet) -> Vec<DiseaseCovariates> {
    let vocab = records.vocabulary();
    #[derive(Default, Clone)]
    struct Acc {
        count: usize,
        diseases: usize,
        symptoms: usize,
        age_sum: f64,
        age_n: usize,
        female: usize,
        sex_n: usize,
    }
    let mut acc = vec![Acc::default(); vocab.n_diseases()];
    for r in records.records() {
        for &j in &r.diseases {
            let a = &mut acc[j as usize];
            a.count += 1;
            a.diseases += r.diseases.len();
            a.symptoms += r.symptoms.len();
            if let Some(age) = r.age_years {
                a.age_sum += f64::from(age);
                a.age_n += 1;
            }
            if let Some(sex) = r.sex {
                a.sex_n += 1;
                a.female += usize::from(sex == Sex::Female);
            }
        }
    }
    let ratio = |num: f64, den: usize| (den > 0).then(|| num / den as f64);
    vocab
        .diseases()
        .iter()
        .zip(acc)
        .map(|(name, a)| DiseaseCovariates {
            disease: name.clone(),
            count: a.count,
            mean_diseases: ratio(a.diseases as f64, a.count),
            mean_symptoms: ratio(a.symptoms as f64, a.count),
            mean_age: ratio(a.age_sum, a.age_n),
            female_fraction: ratio(a.female as f64, a.sex_n),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Covariate {
    Count,
    Diseases,
    Symptoms,
    Age,
    Female,
}

impl Covariate {
    pub const ALL: [Covariate; 5] = [Covariate::Count, Covariate::Diseases, Covariate::Symptoms, Covariate::Age, Covariate::Female];

    pub fn as_str(self) -> &'static str {
        match self {
            Covariate::Count => "count",
            Covariate::Diseases => "disease",
            Covariate::Symptoms => "symptom",
            Covariate::Age => "age",
            Covariate::Female => "female",
        }
    }

    /// Feasible range of the covariate.
    fn range(self) -> (f64, f64) {
        match self {
            Covariate::Count | Covariate::Symptoms | Covariate::Age => (0.0, f64::INFINITY),
            Covariate::Diseases => (1.0, f64::INFINITY),
            Covariate::Female => (0.0, 1.0),
        }
    }

    /// Which sides flag: (below lower, above upper).
    fn sides(self) -> (bool, bool) {
        match self {
            Covariate::Count => (true, false),
            Covariate::Diseases | Covariate::Symptoms => (false, true),
            Covariate::Age | Covariate::Female => (true, true),
        }
    }
}

/// Population mean, sample SD and the flag bounds of one covariate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariateStats {
    pub mean: f64,
    pub sd: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Whether a bound fell back to a percentile: (lower, upper).
    pub percentile_fallback: (bool, bool),
}

pub type PopulationStats = BTreeMap<Covariate, CovariateStats>;

pub const LOWER_PERCENTILE: f64 = 16.0;
pub const UPPER_PERCENTILE: f64 = 84.0;

/// Linear-interpolation percentile of `values` (any order).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Mean and sample standard deviation of each covariate across diseases
/// (diseases lacking a value are left out). A bound `mean ± SD` outside the
/// covariate's feasible range is replaced by the 16th or 84th percentile.
pub fn population_stats(covariates: &[DiseaseCovariates]) -> Result<PopulationStats> {
    if covariates.len() < 2 {
        return Err(Error::TooFewDiseases {
            needed: 2,
            found: covariates.len(),
        });
    }
    let mut stats = PopulationStats::new();
    for cov in Covariate::ALL {
        let values: Vec<f64> = covariates.iter().filter_map(|c| c.value(cov)).collect();
        if values.len() < 2 {
            continue;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let (min, max) = cov.range();
        let (flag_low, flag_high) = cov.sides();
        let mut fallback = (false, false);
        let lower = flag_low.then(|| {
            let b = mean - sd;
            if b < min {
                fallback.0 = true;
                percentile(&values, LOWER_PERCENTILE)
            } else {
                b
            }
        });
        let upper = flag_high.then(|| {
            let b = mean + sd;
            if b > max {
                fallback.1 = true;
                percentile(&values, UPPER_PERCENTILE)
            } else {
                b
            }
        });
        stats.insert(
            cov,
            CovariateStats {
                mean,
                sd,
                lower,
                upper,
                percentile_fallback: fallback,
            },
        );
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbnormalityFlags {
    pub disease: String,
    pub count: bool,
    pub disease_flag: bool,
    pub symptom: bool,
    pub age: bool,
    pub female: bool,
    pub any: bool,
}

impl AbnormalityFlags {
    pub fn as_array(&self) -> [bool; 6] {
        [self.count, self.disease_flag, self.symptom, self.age, self.female, self.any]
    }
}

pub const FLAG_NAMES: [&str; 6] = ["count", "disease", "symptom", "age", "female", "any"];

/// Strict comparisons: a value sitting exactly on a bound is not flagged.
pub fn abnormality_flags(covariates: &[DiseaseCovariates], stats: &PopulationStats) -> Vec<AbnormalityFlags> {
    let flag = |c: &DiseaseCovariates, cov: Covariate| -> bool {
        let (Some(v), Some(s)) = (c.value(cov), stats.get(&cov)) else {
            return false;
        };
        s.lower.is_some_and(|b| v < b) || s.upper.is_some_and(|b| v > b)
    };
    covariates
        .iter()
        .map(|c| {
            let [count, disease_flag, symptom, age, female] = Covariate::ALL.map(|cov| flag(c, cov));
            AbnormalityFlags {
                disease: c.disease.clone(),
                count,
                disease_flag,
                symptom,
                age,
                female,
                any: count || disease_flag || symptom || age || female,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopBottom {
    pub n: usize,
    pub top: Vec<String>,
    pub bottom: Vec<String>,
    /// Percent flagged per column of [`FLAG_NAMES`].
    pub top_percent: [f64; 6],
    pub bottom_percent: [f64; 6],
}

impl TopBottom {
    pub fn to_tsv(&self) -> String {
        let mut out = format!("group\tn\t{}\n", FLAG_NAMES.join("\t"));
        for (name, row) in [("top", &self.top_percent), ("bottom", &self.bottom_percent)] {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{name}\t{}\t{}", self.n, cells.join("\t"));
        }
        out
    }
}

/// Flag percentages among the `n` best and `n` worst diseases by F1 (ties by
/// name). Only diseases present in both tables count; `n` shrinks to half of
/// them when there are too few.
pub fn top_bottom_summary(f1: &[DiseaseF1], flags: &[AbnormalityFlags], n: usize) -> TopBottom {
    let by_name: BTreeMap<&str, &AbnormalityFlags> = flags.iter().map(|f| (f.disease.as_str(), f)).collect();
    let mut scored: Vec<(&str, f64)> = f1
        .iter()
        .filter(|r| by_name.contains_key(r.disease.as_str()))
        .map(|r| (r.disease.as_str(), r.f1))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let n = if 2 * n > scored.len() {
        let shrunk = scored.len() / 2;
        log::warn!("only {} diseases scored; comparing top and bottom {shrunk} instead of {n}", scored.len());
        shrunk
    } else {
        n
    };
    let percent = |group: &[(&str, f64)]| {
        let mut out = [0.0; 6];
        if group.is_empty() {
            return out;
        }
        for (k, slot) in out.iter_mut().enumerate() {
            let hits = group.iter().filter(|(d, _)| by_name[d].as_array()[k]).count();
            *slot = 100.0 * hits as f64 / group.len() as f64;
        }
        out
    };
    let top = &scored[..n];
    let bottom = &scored[scored.len() - n..];
    TopBottom {
        n,
        top: top.iter().map(|d| d.0.to_string()).collect(),
        bottom: bottom.iter().map(|d| d.0.to_string()).collect(),
        top_percent: percent(top),
        bottom_percent: percent(bottom),
    }
}

/// Per-disease covariates, flags and (optionally) F1 as one TSV.
pub fn covariates_tsv(covariates: &[DiseaseCovariates], flags: &[AbnormalityFlags], f1: Option<&[DiseaseF1]>) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    let f1_by: BTreeMap<&str, f64> = f1.unwrap_or(&[]).iter().map(|r| (r.disease.as_str(), r.f1)).collect();
    let mut out = String::from("disease\tcount\tmean_diseases\tmean_symptoms\tmean_age\tfemale_fraction\tf1");
    for name in FLAG_NAMES {
        let _ = write!(out, "\tflag_{name}");
    }
    out.push('\n');
    for (c, f) in covariates.iter().zip(flags) {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.disease,
            c.count,
            opt(c.mean_diseases),
            opt(c.mean_symptoms),
            opt(c.mean_age),
            opt(c.female_fraction),
            opt(f1_by.get(c.disease.as_str()).copied())
        );
        for v in f.as_array() {
            let _ = write!(out, "\t{}", u8::from(v));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    AgeBrackets,
    Sex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupRow {
    pub subgroup: String,
    pub size: usize,
    /// `None` when the subgroup was below the minimum size.
    pub auprc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupTable {
    pub rows: Vec<SubgroupRow>,
    /// Records with the partitioning attribute missing.
    pub unknown: usize,
}

impl SubgroupTable {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("subgroup\tsize\tauprc\n");
        for r in &self.rows {
            let auprc = r.auprc.map_or_else(|| "skipped".to_string(), |v| v.to_string());
            let _ = writeln!(out, "{}\t{}\t{auprc}", r.subgroup, r.size);
        }
        let _ = writeln!(out, "unknown\t{}\tNA", self.unknown);
        out
    }
}

pub const DEFAULT_MIN_SUBGROUP: usize = 100;

/// Learns and evaluates separately on each subgroup of `partition`.
pub fn subgroup_learn(
    records: &RecordSet,
    partition: Partition,
    learner: Learner,
    config: &LearnConfig,
    reference: &KnowledgeGraph,
    eval: EvalConfig,
    min_size: usize,
) -> Result<SubgroupTable> {
    let names: Vec<&str> = match partition {
        Partition::AgeBrackets => AGE_BRACKETS.iter().map(|b| b.1).collect(),
        Partition::Sex => vec!["female", "male"],
    };
    let mut members = vec![Vec::new(); names.len()];
    let mut unknown = 0;
    for (k, r) in records.records().iter().enumerate() {
        let group = match partition {
            Partition::AgeBrackets => r.age_years.map(age_bracket),
            Partition::Sex => r.sex.map(|s| usize::from(s == Sex::Male)),
        };
        match group {
            Some(g) => members[g].push(k),
            None => unknown += 1,
        }
    }
    if members.iter().all(Vec::is_empty) {
        return Err(Error::EmptyPartition);
    }
    let mut rows = Vec::new();
    for (name, idx) in names.iter().zip(&members) {
        let auprc = if idx.len() < min_size {
            log::warn!("subgroup {name} has {} records (< {min_size}); skipped", idx.len());
            None
        } else {
            let subset = records.select(idx)?;
            let scores = learn(&subset, learner, config)?;
            Some(evaluate(&scores, reference, eval)?.auprc())
        };
        rows.push(SubgroupRow {
            subgroup: name.to_string(),
            size: idx.len(),
            auprc,
        });
    }
    Ok(SubgroupTable { rows, unknown })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Disease,
    Symptom,
}

impl TargetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetKind::Disease => "disease",
            TargetKind::Symptom => "symptom",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictabilityRow {
    pub target: String,
    pub family: Family,
    pub positives: usize,
    pub auroc: f64,
}

pub fn predictability_tsv(rows: &[PredictabilityRow]) -> String {
    let mut out = String::from("target\tfamily\tpositives\tauroc\n");
    for r in rows {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", r.target, r.family, r.positives, r.auroc);
    }
    out
}

/// Mean held-out AUROC of the best grid cell for every target: diseases
/// predicted from symptoms, or symptoms from diseases. Targets with fewer
/// than three positives (or too few negatives to fold) are skipped.
pub fn predictability(records: &RecordSet, target: TargetKind, family: Family, config: &LearnConfig) -> Result<Vec<PredictabilityRow>> {
    let vocab = records.vocabulary();
    let (block, names) = match target {
        TargetKind::Disease => (FeatureBlock::Symptoms, vocab.diseases()),
        TargetKind::Symptom => (FeatureBlock::Diseases, vocab.symptoms()),
    };
    let encoding = match (config.demo, family) {
        (false, _) => DemoEncoding::None,
        (true, Family::Logistic) => DemoEncoding::Continuous,
        (true, _) => DemoEncoding::Bracket,
    };
    if config.demo && !records.has_demographics() {
        return Err(Error::MissingDemographics);
    }
    let design = Design::from_matrix(&attach_demographics(records, block, encoding));
    let grid = config.grid(family);
    let stage = format!("predictability-{}-{}", target.as_str(), family.as_str());
    let rows: Vec<Option<PredictabilityRow>> = (0..names.len())
        .into_par_iter()
        .map(|t| {
            let labels: Vec<bool> = records
                .records()
                .iter()
                .map(|r| match target {
                    TargetKind::Disease => r.has_disease(t),
                    TargetKind::Symptom => r.has_symptom(t),
                })
                .collect();
            let positives = labels.iter().filter(|&&l| l).count();
            if positives < config.folds.max(3) || labels.len() - positives < config.folds {
                log::warn!("{} {:?} has {positives} positives; skipped", target.as_str(), names[t]);
                return Ok(None);
            }
            let cv = grid_search_cv(&design, &labels, &grid, config.folds, seed::derive(config.seed, &stage, t as u64))?;
            Ok(Some(PredictabilityRow {
                target: names[t].clone(),
                family,
                positives,
                auroc: cv.mean_auroc,
            }))
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}
