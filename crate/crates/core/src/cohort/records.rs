//! Records file: one note per line, five tab-separated fields
//! `patient_id, date, age_years, sex, concepts`. Lines starting with `#` are
//! comments.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::NaiveDate;

use super::{Concept, RawNote, Sex};
use crate::error::{Error, Result};

pub fn parse_records<R: BufRead>(reader: R) -> Result<Vec<RawNote>> {
    let mut notes = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::parse(lineno, "line", e.to_string()))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        notes.push(parse_line(line, lineno)?);
    }
    Ok(notes)
}

pub fn read_records_file(path: &Path) -> Result<Vec<RawNote>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_records(BufReader::new(file))
}

fn parse_line(line: &str, lineno: usize) -> Result<RawNote> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 5 {
        return Err(Error::parse(lineno, "line", format!("expected 5 tab-separated fields, found {}", fields.len())));
    }
    let patient_id = fields[0];
    if patient_id.is_empty() {
        return Err(Error::parse(lineno, "patient_id", "empty"));
    }
    let timestamp = NaiveDate::parse_from_str(fields[1], "%Y-%m-%d").map_err(|_| Error::InvalidDate { line: lineno })?;
    let age_years = match fields[2] {
        "" => None,
        s => Some(
            s.parse::<u32>()
                .map_err(|_| Error::parse(lineno, "age_years", format!("{s:?} is not a nonnegative integer")))?,
        ),
    };
    let sex = match fields[3] {
        "" => None,
        "F" => Some(Sex::Female),
        "M" => Some(Sex::Male),
        other => {
            return Err(Error::InvalidSex {
                line: lineno,
                token: other.to_string(),
            })
        }
    };
    let mut concepts = BTreeSet::new();
    for token in fields[4].split(';').filter(|t| !t.is_empty()) {
        let concept = if let Some(name) = token.strip_prefix("d:") {
            Concept::disease(name)
        } else if let Some(name) = token.strip_prefix("s:") {
            Concept::symptom(name)
        } else {
            return Err(Error::parse(lineno, "concepts", format!("token {token:?} lacks a d: or s: prefix")));
        };
        if concept.name.is_empty() {
            return Err(Error::parse(lineno, "concepts", format!("token {token:?} has an empty name")));
        }
        concepts.insert(concept);
    }
    Ok(RawNote {
        patient_id: patient_id.to_string(),
        timestamp,
        concepts,
        age_years,
        sex,
    })
}

pub fn format_records(notes: &[RawNote]) -> String {
    let mut out = String::new();
    for note in notes {
        out.push_str(&note.patient_id);
        out.push('\t');
        out.push_str(&note.timestamp.format("%Y-%m-%d").to_string());
        out.push('\t');
        if let Some(age) = note.age_years {
            out.push_str(&age.to_string());
        }
        out.push('\t');
        if let Some(sex) = note.sex {
            out.push_str(sex.token());
        }
        out.push('\t');
        let tokens: Vec<String> = note.concepts.iter().map(|c| c.to_string()).collect();
        out.push_str(&tokens.join(";"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<RawNote>> {
        parse_records(text.as_bytes())
    }

    #[test]
    fn full_line_maps_fields() {
        let notes = parse("p1\t2010-03-02\t54\tF\td:pneumonia;s:cough\n").unwrap();
        assert_eq!(notes.len(), 1);
        let n = &notes[0];
        assert_eq!(n.patient_id, "p1");
        assert_eq!(n.timestamp, NaiveDate::from_ymd_opt(2010, 3, 2).unwrap());
        assert_eq!(n.age_years, Some(54));
        assert_eq!(n.sex, Some(Sex::Female));
        let expected: BTreeSet<Concept> = [Concept::disease("pneumonia"), Concept::symptom("cough")].into_iter().collect();
        assert_eq!(n.concepts, expected);
    }

    #[test]
    fn empty_optionals() {
        let notes = parse("p2\t2011-01-01\t\t\t\n").unwrap();
        assert!(notes[0].concepts.is_empty());
        assert_eq!(notes[0].age_years, None);
        assert_eq!(notes[0].sex, None);
    }

    #[test]
    fn invalid_date_names_line() {
        let text = "# header\np1\t2010-03-02\t54\tF\td:flu\np3\t2011-13-40\t\t\t\n";
        let err = parse(text).unwrap_err();
        assert_eq!(err.to_string(), "invalid date at line 3");
    }

    #[test]
    fn invalid_sex_and_age_and_tokens() {
        assert!(matches!(parse("p\t2011-01-01\t\tX\t\n"), Err(Error::InvalidSex { line: 1, .. })));
        let err = parse("p\t2011-01-01\tabc\t\t\n").unwrap_err();
        assert!(err.to_string().contains("age_years"));
        let err = parse("p\t2011-01-01\t\t\tx:foo\n").unwrap_err();
        assert!(err.to_string().contains("concepts"));
        let err = parse("p\t2011-01-01\t\t\n").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn unknown_concepts_are_kept() {
        let notes = parse("p\t2011-01-01\t\t\ts:never_seen_before\n").unwrap();
        assert!(notes[0].concepts.contains(&Concept::symptom("never_seen_before")));
    }

    #[test]
    fn format_round_trips() {
        let text = "p1\t2010-03-02\t54\tF\td:pneumonia;s:cough\np2\t2011-01-01\t\t\t\np2\t2011-02-01\t3\tM\ts:fever\n";
        let notes = parse(text).unwrap();
        assert_eq!(format_records(&notes), text);
    }
}
