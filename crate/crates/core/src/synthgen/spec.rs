//! Truth specification and its text format.
//!
//! ```text
//! # comment
//! diseases = flu cold
//! symptoms = cough fever rash
//! priors = 0.1 0.05
//! leaks = 0.01 0.02 0.0
//! notes_per_patient = 1 6
//! gap_days = 0 90
//! age = 45 18                   # optional: base age mean, sd
//! female_log_odds = 0           # optional, default 0
//! missing_demographics = 0      # optional, default 0
//! cluster_rate = 0.05           # optional confounded cluster
//! cluster_diseases = flu cold
//! cluster_activation = 0.6
//! cluster_symptoms = rash
//! cluster_symptom_activation = 0.5
//! cluster_age_shift = 25
//!
//! [edges]
//! flu cough 0.2                 # disease symptom failure-probability
//!
//! [disease_demographics]
//! flu 10 0.5                    # disease age-shift female-log-odds
//! ```
//!
//! Pairs not listed under `[edges]` have failure probability exactly 1.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kgraph::KnowledgeGraph;

#[derive(Debug, Clone, PartialEq)]
pub struct DemographicModel {
    pub age_mean: f64,
    pub age_sd: f64,
    pub female_log_odds: f64,
    /// Per disease: added to the patient's age when the disease is active.
    pub age_shift: Vec<f64>,
    /// Per disease: added to the female log-odds when the disease is active.
    pub disease_female_log_odds: Vec<f64>,
    /// Probability that a patient's age (and independently sex) is withheld.
    pub missing_rate: f64,
}

/// A hidden Bernoulli cause shared by several diseases and symptoms.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfoundedCluster {
    pub rate: f64,
    pub diseases: Vec<usize>,
    pub activation: f64,
    pub symptoms: Vec<usize>,
    pub symptom_activation: f64,
    pub age_shift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthSpec {
    pub diseases: Vec<String>,
    pub symptoms: Vec<String>,
    pub priors: Vec<f64>,
    pub leaks: Vec<f64>,
    /// D×S failure probabilities; 1 marks a non-edge.
    pub failure: Vec<Vec<f64>>,
    pub demographics: Option<DemographicModel>,
    pub notes_per_patient: (u32, u32),
    pub gap_days: (u32, u32),
    pub cluster: Option<ConfoundedCluster>,
}

impl TruthSpec {
    /// A spec with no edges, one note per patient and no demographics.
    pub fn empty(diseases: Vec<String>, symptoms: Vec<String>, priors: Vec<f64>, leaks: Vec<f64>) -> Self {
        let failure = vec![vec![1.0; symptoms.len()]; diseases.len()];
        TruthSpec {
            diseases,
            symptoms,
            priors,
            leaks,
            failure,
            demographics: None,
            notes_per_patient: (1, 1),
            gap_days: (0, 0),
            cluster: None,
        }
    }

    pub fn n_diseases(&self) -> usize {
        self.diseases.len()
    }

    pub fn n_symptoms(&self) -> usize {
        self.symptoms.len()
    }

    pub fn edge_set(&self) -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        for (j, row) in self.failure.iter().enumerate() {
            for (i, &f) in row.iter().enumerate() {
                if f < 1.0 {
                    g.insert(self.diseases[j].clone(), self.symptoms[i].clone());
                }
            }
        }
        g
    }

    /// P(X_i = 1) under independent diseases: 1 − (1−l_i) ∏_j (1 − π_j + π_j f_ij).
    /// Ignores the confounded cluster.
    pub fn symptom_marginals(&self) -> Vec<f64> {
        (0..self.n_symptoms())
            .map(|i| {
                let off: f64 = (0..self.n_diseases())
                    .map(|j| 1.0 - self.priors[j] + self.priors[j] * self.failure[j][i])
                    .product();
                1.0 - (1.0 - self.leaks[i]) * off
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        let (d, s) = (self.n_diseases(), self.n_symptoms());
        if d == 0 || s == 0 {
            return bad("need at least one disease and one symptom".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in self.diseases.iter().chain(&self.symptoms) {
            if name.is_empty() || name.contains(char::is_whitespace) || name.contains(';') {
                return bad(format!("invalid concept name {name:?}"));
            }
            if !seen.insert(name) {
                return bad(format!("duplicate concept name {name:?}"));
            }
        }
        if self.priors.len() != d || self.leaks.len() != s || self.failure.len() != d || self.failure.iter().any(|r| r.len() != s) {
            return bad("dimension mismatch between names and parameters".into());
        }
        if let Some(p) = self.priors.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return bad(format!("prior {p} outside (0,1)"));
        }
        if let Some(l) = self.leaks.iter().find(|l| !(**l >= 0.0 && **l < 1.0)) {
            return bad(format!("leak {l} outside [0,1)"));
        }
        if let Some(f) = self.failure.iter().flatten().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return bad(format!("failure probability {f} outside (0,1]"));
        }
        let (lo, hi) = self.notes_per_patient;
        if lo == 0 || lo > hi {
            return bad(format!("notes_per_patient range {lo}..{hi} invalid"));
        }
        if self.gap_days.0 > self.gap_days.1 {
            return bad("gap_days range reversed".into());
        }
        if let Some(demo) = &self.demographics {
            if demo.age_shift.len() != d || demo.disease_female_log_odds.len() != d {
                return bad("disease_demographics must cover every disease".into());
            }
            if demo.age_sd.is_nan() || demo.age_sd < 0.0 || !demo.age_mean.is_finite() || !(0.0..=1.0).contains(&demo.missing_rate) {
                return bad("invalid demographic parameters".into());
            }
        }
        if let Some(c) = &self.cluster {
            let unit = |p: f64| (0.0..=1.0).contains(&p);
            if !unit(c.rate) || !unit(c.activation) || !unit(c.symptom_activation) {
                return bad("cluster probabilities must lie in [0,1]".into());
            }
            if c.diseases.iter().any(|&j| j >= d) || c.symptoms.iter().any(|&i| i >= s) {
                return bad("cluster member out of range".into());
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        let _ = writeln!(out, "diseases = {}", self.diseases.join(" "));
        let _ = writeln!(out, "symptoms = {}", self.symptoms.join(" "));
        let _ = writeln!(out, "priors = {}", join(&self.priors));
        let _ = writeln!(out, "leaks = {}", join(&self.leaks));
        let _ = writeln!(out, "notes_per_patient = {} {}", self.notes_per_patient.0, self.notes_per_patient.1);
        let _ = writeln!(out, "gap_days = {} {}", self.gap_days.0, self.gap_days.1);
        if let Some(demo) = &self.demographics {
            let _ = writeln!(out, "age = {} {}", demo.age_mean, demo.age_sd);
            let _ = writeln!(out, "female_log_odds = {}", demo.female_log_odds);
            let _ = writeln!(out, "missing_demographics = {}", demo.missing_rate);
        }
        if let Some(c) = &self.cluster {
            let names = |idx: &[usize], pool: &[String]| idx.iter().map(|&k| pool[k].as_str()).collect::<Vec<_>>().join(" ");
            let _ = writeln!(out, "cluster_rate = {}", c.rate);
            let _ = writeln!(out, "cluster_diseases = {}", names(&c.diseases, &self.diseases));
            let _ = writeln!(out, "cluster_activation = {}", c.activation);
            let _ = writeln!(out, "cluster_symptoms = {}", names(&c.symptoms, &self.symptoms));
            let _ = writeln!(out, "cluster_symptom_activation = {}", c.symptom_activation);
            let _ = writeln!(out, "cluster_age_shift = {}", c.age_shift);
        }
        out.push_str("\n[edges]\n");
        for (j, row) in self.failure.iter().enumerate() {
            for (i, &f) in row.iter().enumerate() {
                if f < 1.0 {
                    let _ = writeln!(out, "{} {} {}", self.diseases[j], self.symptoms[i], f);
                }
            }
        }
        if let Some(demo) = &self.demographics {
            out.push_str("\n[disease_demographics]\n");
            for (j, name) in self.diseases.iter().enumerate() {
                let _ = writeln!(out, "{} {} {}", name, demo.age_shift[j], demo.disease_female_log_odds[j]);
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut keys: BTreeMap<String, (usize, Vec<String>)> = BTreeMap::new();
        let mut edges: Vec<(usize, Vec<String>)> = Vec::new();
        let mut demo_rows: Vec<(usize, Vec<String>)> = Vec::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                if name != "edges" && name != "disease_demographics" {
                    return Err(Error::parse(lineno, "section", format!("unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let words: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            match section.as_str() {
                "" => {
                    let (key, value) = line.split_once('=').ok_or_else(|| Error::parse(lineno, "key", "expected key = value"))?;
                    let values = value.split_whitespace().map(str::to_string).collect();
                    if keys.insert(key.trim().to_string(), (lineno, values)).is_some() {
                        return Err(Error::parse(lineno, "key", format!("duplicate key {}", key.trim())));
                    }
                }
                "edges" => edges.push((lineno, words)),
                _ => demo_rows.push((lineno, words)),
            }
        }

        let take = |keys: &mut BTreeMap<String, (usize, Vec<String>)>, key: &'static str| keys.remove(key);
        let required = |keys: &mut BTreeMap<String, (usize, Vec<String>)>, key: &'static str| {
            take(keys, key).ok_or_else(|| Error::InvalidSpec(format!("missing key {key}")))
        };
        fn nums<T: std::str::FromStr>((line, words): &(usize, Vec<String>), field: &'static str) -> Result<Vec<T>> {
            words
                .iter()
                .map(|w| w.parse::<T>().map_err(|_| Error::parse(*line, field, format!("{w:?} is not a number"))))
                .collect()
        }
        fn exactly<T: Copy, const N: usize>(v: Vec<T>, line: usize, field: &'static str) -> Result<[T; N]> {
            v.try_into().map_err(|_| Error::parse(line, field, format!("expected {N} values")))
        }

        let diseases = required(&mut keys, "diseases")?.1;
        let symptoms = required(&mut keys, "symptoms")?.1;
        let priors = nums::<f64>(&required(&mut keys, "priors")?, "priors")?;
        let leaks = nums::<f64>(&required(&mut keys, "leaks")?, "leaks")?;
        let notes_per_patient = match take(&mut keys, "notes_per_patient") {
            Some(entry) => exactly::<u32, 2>(nums(&entry, "notes_per_patient")?, entry.0, "notes_per_patient").map(|[a, b]| (a, b))?,
            None => (1, 1),
        };
        let gap_days = match take(&mut keys, "gap_days") {
            Some(entry) => exactly::<u32, 2>(nums(&entry, "gap_days")?, entry.0, "gap_days").map(|[a, b]| (a, b))?,
            None => (0, 0),
        };
        let d_index = |name: &str, line: usize| {
            diseases
                .iter()
                .position(|d| d == name)
                .ok_or_else(|| Error::parse(line, "disease", format!("unknown disease {name:?}")))
        };
        let s_index = |name: &str, line: usize| {
            symptoms
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| Error::parse(line, "symptom", format!("unknown symptom {name:?}")))
        };

        let mut failure = vec![vec![1.0; symptoms.len()]; diseases.len()];
        for (line, words) in &edges {
            let [d, s, f] = exactly::<&str, 3>(words.iter().map(String::as_str).collect(), *line, "edge")?;
            let f: f64 = f.parse().map_err(|_| Error::parse(*line, "edge", format!("{f:?} is not a number")))?;
            let (j, i) = (d_index(d, *line)?, s_index(s, *line)?);
            if failure[j][i] < 1.0 {
                return Err(Error::parse(*line, "edge", format!("duplicate edge {d} {s}")));
            }
            failure[j][i] = f;
        }

        let demographics = match take(&mut keys, "age") {
            Some(entry) => {
                let [age_mean, age_sd] = exactly::<f64, 2>(nums(&entry, "age")?, entry.0, "age")?;
                let scalar = |keys: &mut BTreeMap<String, (usize, Vec<String>)>, key: &'static str| -> Result<f64> {
                    match take(keys, key) {
                        Some(e) => exactly::<f64, 1>(nums(&e, key)?, e.0, key).map(|[x]| x),
                        None => Ok(0.0),
                    }
                };
                let female_log_odds = scalar(&mut keys, "female_log_odds")?;
                let missing_rate = scalar(&mut keys, "missing_demographics")?;
                let mut age_shift = vec![0.0; diseases.len()];
                let mut disease_female_log_odds = vec![0.0; diseases.len()];
                for (line, words) in &demo_rows {
                    let [d, a, f] = exactly::<&str, 3>(words.iter().map(String::as_str).collect(), *line, "disease_demographics")?;
                    let j = d_index(d, *line)?;
                    age_shift[j] = a.parse().map_err(|_| Error::parse(*line, "disease_demographics", "bad age shift"))?;
                    disease_female_log_odds[j] = f.parse().map_err(|_| Error::parse(*line, "disease_demographics", "bad log-odds"))?;
                }
                Some(DemographicModel {
                    age_mean,
                    age_sd,
                    female_log_odds,
                    age_shift,
                    disease_female_log_odds,
                    missing_rate,
                })
            }
            None if !demo_rows.is_empty() => return Err(Error::InvalidSpec("[disease_demographics] requires an age key".into())),
            None => None,
        };

        let cluster = match take(&mut keys, "cluster_rate") {
            Some(entry) => {
                let [rate] = exactly::<f64, 1>(nums(&entry, "cluster_rate")?, entry.0, "cluster_rate")?;
                let mut scalar = |key: &'static str| -> Result<f64> {
                    let e = required(&mut keys, key)?;
                    exactly::<f64, 1>(nums(&e, key)?, e.0, key).map(|[x]| x)
                };
                let activation = scalar("cluster_activation")?;
                let symptom_activation = scalar("cluster_symptom_activation")?;
                let age_shift = scalar("cluster_age_shift")?;
                let (dl, dnames) = required(&mut keys, "cluster_diseases")?;
                let (sl, snames) = take(&mut keys, "cluster_symptoms").unwrap_or((0, Vec::new()));
                Some(ConfoundedCluster {
                    rate,
                    diseases: dnames.iter().map(|n| d_index(n, dl)).collect::<Result<_>>()?,
                    activation,
                    symptoms: snames.iter().map(|n| s_index(n, sl)).collect::<Result<_>>()?,
                    symptom_activation,
                    age_shift,
                })
            }
            None => None,
        };

        if let Some((key, (line, _))) = keys.into_iter().next() {
            return Err(Error::parse(line, "key", format!("unknown key {key}")));
        }
        let spec = TruthSpec {
            diseases,
            symptoms,
            priors,
            leaks,
            failure,
            demographics,
            notes_per_patient,
            gap_days,
            cluster,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Draw a random truth graph from `config`.
    pub fn random<R: Rng>(config: &RandomSpecConfig, rng: &mut R) -> Self {
        let (d, s) = (config.n_diseases, config.n_symptoms);
        let diseases: Vec<String> = (0..d).map(|j| format!("disease_{j:03}")).collect();
        let symptoms: Vec<String> = (0..s).map(|i| format!("symptom_{i:03}")).collect();
        let priors = (0..d).map(|_| rng.random_range(config.prior_range.0..=config.prior_range.1)).collect();
        let leaks = (0..s).map(|_| rng.random_range(0.0..=config.leak_max)).collect();
        let mut failure = vec![vec![1.0; s]; d];
        for row in failure.iter_mut() {
            let k = rng.random_range(config.edges_per_disease.0..=config.edges_per_disease.1).min(s);
            for i in sample(rng, s, k) {
                row[i] = rng.random_range(config.failure_range.0..=config.failure_range.1);
            }
        }
        let demographics = config.demographics.then(|| DemographicModel {
            age_mean: 45.0,
            age_sd: 18.0,
            female_log_odds: 0.0,
            age_shift: (0..d).map(|_| rng.random_range(-10.0..=10.0)).collect(),
            disease_female_log_odds: (0..d).map(|_| rng.random_range(-0.5..=0.5)).collect(),
            missing_rate: 0.0,
        });
        TruthSpec {
            diseases,
            symptoms,
            priors,
            leaks,
            failure,
            demographics,
            notes_per_patient: config.notes_per_patient,
            gap_days: config.gap_days,
            cluster: None,
        }
    }
}

/// Parameter ranges for [`TruthSpec::random`].
#[derive(Debug, Clone)]
pub struct RandomSpecConfig {
    pub n_diseases: usize,
    pub n_symptoms: usize,
    pub prior_range: (f64, f64),
    pub leak_max: f64,
    pub failure_range: (f64, f64),
    pub edges_per_disease: (usize, usize),
    pub notes_per_patient: (u32, u32),
    pub gap_days: (u32, u32),
    pub demographics: bool,
}

impl Default for RandomSpecConfig {
    fn default() -> Self {
        RandomSpecConfig {
            n_diseases: 20,
            n_symptoms: 50,
            prior_range: (0.01, 0.15),
            leak_max: 0.05,
            failure_range: (0.1, 0.7),
            edges_per_disease: (3, 8),
            notes_per_patient: (1, 1),
            gap_days: (0, 0),
            demographics: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    const SAMPLE: &str = "\
# toy
diseases = flu cold
symptoms = cough fever rash
priors = 0.1 0.05
leaks = 0.01 0.02 0
notes_per_patient = 1 6
gap_days = 0 90
age = 45 18
cluster_rate = 0.05
cluster_diseases = flu cold
cluster_activation = 0.6
cluster_symptoms = rash
cluster_symptom_activation = 0.5
cluster_age_shift = 25

[edges]
flu cough 0.2
cold fever 0.5   # trailing comment

[disease_demographics]
flu 10 0.5
";

    #[test]
    fn parses_sample() {
        let spec = TruthSpec::parse(SAMPLE).unwrap();
        assert_eq!(spec.failure[0][0], 0.2);
        assert_eq!(spec.failure[1][1], 0.5);
        assert_eq!(spec.failure[0][2], 1.0);
        assert_eq!(spec.edge_set().len(), 2);
        let demo = spec.demographics.as_ref().unwrap();
        assert_eq!(demo.age_shift, vec![10.0, 0.0]);
        assert_eq!(spec.cluster.as_ref().unwrap().symptoms, vec![2]);
        assert_eq!(spec.notes_per_patient, (1, 6));
    }

    #[test]
    fn text_round_trip() {
        let spec = TruthSpec::parse(SAMPLE).unwrap();
        let again = TruthSpec::parse(&spec.to_text()).unwrap();
        assert_eq!(again, spec);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let random = TruthSpec::random(&RandomSpecConfig::default(), &mut rng);
        random.validate().unwrap();
        assert_eq!(TruthSpec::parse(&random.to_text()).unwrap(), random);
    }

    #[test]
    fn rejects_bad_ranges() {
        let bad_prior = SAMPLE.replace("priors = 0.1 0.05", "priors = 0.1 1.0");
        assert!(matches!(TruthSpec::parse(&bad_prior), Err(Error::InvalidSpec(_))));
        let bad_leak = SAMPLE.replace("leaks = 0.01 0.02 0", "leaks = 0.01 0.02 1");
        assert!(TruthSpec::parse(&bad_leak).is_err());
        let bad_failure = SAMPLE.replace("flu cough 0.2", "flu cough 0");
        assert!(TruthSpec::parse(&bad_failure).is_err());
        let unknown = SAMPLE.replace("flu cough 0.2", "flu sneeze 0.2");
        assert!(TruthSpec::parse(&unknown).is_err());
        let extra = format!("colour = blue\n{SAMPLE}");
        assert!(TruthSpec::parse(&extra).is_err());
    }
}
