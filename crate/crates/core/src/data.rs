//! Clickstream and student-profile schemas, CSV ingestion and the one-hot
//! interaction encoding fed to the knowledge-tracing network.
//!
//! Clickstream files are comma-delimited with a header naming at least
//! `student_id`, `skill` and `correct`; other columns are ignored. Profile
//! files carry `student_id`, `usage_year`, the ten numeric summary columns
//! listed in [`PROFILE_FEATURES`] and an optional `label` column.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numeric profile attributes used for modeling, in report order.
pub const PROFILE_FEATURES: [&str; 10] = [
    "num_actions",
    "ave_know",
    "ave_correct",
    "ave_carelessness",
    "ave_res_bored",
    "ave_res_engcon",
    "ave_res_conf",
    "ave_res_frust",
    "ave_res_offtask",
    "ave_res_gaming",
];

const CLICKSTREAM_COLUMNS: [&str; 3] = ["student_id", "skill", "correct"];

/// One student–question event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub student_id: String,
    pub skill_id: usize,
    pub correct: bool,
    /// Position within the student's sequence, contiguous from 0.
    pub order: usize,
}

/// The ordered interactions of a single student.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentSequence {
    student_id: String,
    interactions: Vec<Interaction>,
}

impl StudentSequence {
    /// Builds a sequence from `(skill_id, correct)` pairs, assigning orders.
    pub fn from_pairs(
        student_id: impl Into<String>,
        pairs: impl IntoIterator<Item = (usize, bool)>,
    ) -> Result<Self> {
        let student_id = student_id.into();
        let interactions: Vec<_> = pairs
            .into_iter()
            .enumerate()
            .map(|(order, (skill_id, correct))| Interaction {
                student_id: student_id.clone(),
                skill_id,
                correct,
                order,
            })
            .collect();
        Self::new(student_id, interactions)
    }

    pub fn new(student_id: impl Into<String>, interactions: Vec<Interaction>) -> Result<Self> {
        let student_id = student_id.into();
        if interactions.is_empty() {
            return Err(Error::Range(format!(
                "student `{student_id}` has an empty sequence"
            )));
        }
        for (i, it) in interactions.iter().enumerate() {
            if it.student_id != student_id {
                return Err(Error::Range(format!(
                    "interaction {i} belongs to `{}`, not `{student_id}`",
                    it.student_id
                )));
            }
            if it.order != i {
                return Err(Error::Range(format!(
                    "student `{student_id}`: order {} at position {i}",
                    it.order
                )));
            }
        }
        Ok(Self {
            student_id,
            interactions,
        })
    }

    pub fn student_id(&self) -> &str {
        &self.student_id
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn skills(&self) -> impl Iterator<Item = usize> + '_ {
        self.interactions.iter().map(|it| it.skill_id)
    }

    pub fn answers(&self) -> impl Iterator<Item = bool> + '_ {
        self.interactions.iter().map(|it| it.correct)
    }

    /// Largest skill id used plus one.
    pub fn max_skill(&self) -> usize {
        self.skills().max().map_or(0, |m| m + 1)
    }

    /// Splits into consecutive pieces of at most `max_len` steps. Each piece
    /// is re-based to order 0 and keeps the student id.
    pub fn segments(&self, max_len: usize) -> Vec<StudentSequence> {
        assert!(max_len > 0);
        self.interactions
            .chunks(max_len)
            .map(|chunk| StudentSequence {
                student_id: self.student_id.clone(),
                interactions: chunk
                    .iter()
                    .enumerate()
                    .map(|(order, it)| Interaction {
                        order,
                        ..it.clone()
                    })
                    .collect(),
            })
            .collect()
    }
}

/// Dense bidirectional map between skill names and ids `0..M`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SkillVocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl SkillVocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self::new();
        for name in names {
            let name = name.into();
            if vocab.index.contains_key(&name) {
                return Err(Error::Range(format!("duplicate skill name `{name}`")));
            }
            vocab.intern(&name);
        }
        Ok(vocab)
    }

    /// Returns the id of `name`, assigning the next free id if unseen.
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Reads a one-name-per-line vocabulary file.
    pub fn read<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Self::from_names(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_owned),
        )
    }

    pub fn write<W: Write>(&self, mut writer: W) -> Result<()> {
        for name in &self.names {
            writeln!(writer, "{name}")?;
        }
        Ok(())
    }
}

/// Result of [`parse_clickstream`].
#[derive(Debug, Clone)]
pub struct Clickstream {
    pub sequences: Vec<StudentSequence>,
    pub vocabulary: SkillVocabulary,
    /// Data rows read, including rejected ones.
    pub total_rows: usize,
    /// Rows dropped because a required field was empty.
    pub rejected_rows: usize,
}

impl Clickstream {
    pub fn interaction_count(&self) -> usize {
        self.sequences.iter().map(StudentSequence::len).sum()
    }
}

fn header_index(headers: &csv::StringRecord, column: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == column)
        .ok_or_else(|| Error::MissingColumn {
            column: column.to_owned(),
        })
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn parse_binary(value: &str, line: u64, column: &str) -> Result<bool> {
    match value.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Row {
            line,
            message: format!("`{column}` must be 0 or 1, got `{other}`"),
        }),
    }
}

/// Parses a clickstream table into per-student sequences.
///
/// Students appear in order of first appearance; interactions keep file
/// order. Skill ids follow first appearance unless `fixed` is given, in
/// which case every skill must already be in it.
pub fn parse_clickstream<R: Read>(
    reader: R,
    fixed: Option<&SkillVocabulary>,
) -> Result<Clickstream> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    let [student_col, skill_col, correct_col] =
        CLICKSTREAM_COLUMNS.map(|c| header_index(&headers, c));
    let (student_col, skill_col, correct_col) = (student_col?, skill_col?, correct_col?);

    let mut vocabulary = fixed.cloned().unwrap_or_default();
    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, Vec<(usize, bool)>> = HashMap::new();
    let mut total_rows = 0;
    let mut rejected_rows = 0;

    for record in csv.records() {
        let record = record?;
        total_rows += 1;
        let line = line_of(&record);
        let field = |i: usize| record.get(i).map(str::trim).unwrap_or("");
        let (student, skill, correct) = (field(student_col), field(skill_col), field(correct_col));
        if student.is_empty() || skill.is_empty() || correct.is_empty() {
            rejected_rows += 1;
            continue;
        }
        let correct = parse_binary(correct, line, "correct")?;
        let skill_id = match fixed {
            Some(v) => v.id(skill).ok_or_else(|| Error::UnknownSkill {
                skill: skill.to_owned(),
                line,
            })?,
            None => vocabulary.intern(skill),
        };
        grouped
            .entry(student.to_owned())
            .or_insert_with(|| {
                order.push(student.to_owned());
                Vec::new()
            })
            .push((skill_id, correct));
    }

    let sequences = order
        .into_iter()
        .map(|id| {
            let pairs = grouped.remove(&id).unwrap_or_default();
            StudentSequence::from_pairs(id, pairs)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Clickstream {
        sequences,
        vocabulary,
        total_rows,
        rejected_rows,
    })
}

/// Writes sequences in the clickstream format read by [`parse_clickstream`].
pub fn write_clickstream<W: Write>(
    writer: W,
    sequences: &[StudentSequence],
    vocabulary: &SkillVocabulary,
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(CLICKSTREAM_COLUMNS)?;
    for seq in sequences {
        for it in seq.interactions() {
            let skill = vocabulary.name(it.skill_id).ok_or_else(|| {
                Error::Range(format!("skill id {} outside vocabulary", it.skill_id))
            })?;
            csv.write_record([
                seq.student_id(),
                skill,
                if it.correct { "1" } else { "0" },
            ])?;
        }
    }
    csv.flush()?;
    Ok(())
}

/// Per-student summary attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentProfile {
    pub student_id: String,
    /// Kept for provenance; never used as a feature.
    pub usage_year: String,
    pub num_actions: u64,
    pub ave_know: f64,
    pub ave_correct: f64,
    pub ave_carelessness: f64,
    pub ave_res_bored: f64,
    pub ave_res_engcon: f64,
    pub ave_res_conf: f64,
    pub ave_res_frust: f64,
    pub ave_res_offtask: f64,
    pub ave_res_gaming: f64,
}

impl StudentProfile {
    /// The ten modeling attributes in [`PROFILE_FEATURES`] order.
    pub fn feature_values(&self) -> [f64; 10] {
        [
            self.num_actions as f64,
            self.ave_know,
            self.ave_correct,
            self.ave_carelessness,
            self.ave_res_bored,
            self.ave_res_engcon,
            self.ave_res_conf,
            self.ave_res_frust,
            self.ave_res_offtask,
            self.ave_res_gaming,
        ]
    }

    fn proportions(&self) -> [(&'static str, f64); 9] {
        let v = self.feature_values();
        std::array::from_fn(|i| (PROFILE_FEATURES[i + 1], v[i + 1]))
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_actions < 1 {
            return Err(Error::Range(format!(
                "student `{}`: num_actions must be at least 1",
                self.student_id
            )));
        }
        for (name, value) in self.proportions() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Range(format!(
                    "student `{}`: {name} = {value} is not a proportion",
                    self.student_id
                )));
            }
        }
        Ok(())
    }
}

/// A profile with its STEM label (`true` = STEM).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledStudent {
    pub profile: StudentProfile,
    pub stem: bool,
}

/// One row of a profile file; `label` is `None` when the cell is blank.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRecord {
    pub profile: StudentProfile,
    pub label: Option<bool>,
}

impl ProfileRecord {
    pub fn labeled(&self) -> Option<LabeledStudent> {
        self.label.map(|stem| LabeledStudent {
            profile: self.profile.clone(),
            stem,
        })
    }
}

/// Reads a profile table. The `label` column may be absent entirely.
pub fn parse_profiles<R: Read>(reader: R) -> Result<Vec<ProfileRecord>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    let id_col = header_index(&headers, "student_id")?;
    let year_col = header_index(&headers, "usage_year")?;
    let feature_cols = PROFILE_FEATURES
        .iter()
        .map(|c| header_index(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let label_col = header_index(&headers, "label").ok();

    let mut out = Vec::new();
    for record in csv.records() {
        let record = record?;
        let line = line_of(&record);
        let field = |i: usize| record.get(i).map(str::trim).unwrap_or("");
        let number = |col: usize, name: &str| -> Result<f64> {
            field(col).parse::<f64>().map_err(|_| Error::Row {
                line,
                message: format!("`{name}` is not a number: `{}`", field(col)),
            })
        };
        let mut values = [0.0; 10];
        for (k, (&col, name)) in feature_cols.iter().zip(PROFILE_FEATURES).enumerate() {
            values[k] = number(col, name)?;
        }
        let num_actions = values[0];
        if num_actions.fract() != 0.0 || num_actions < 1.0 {
            return Err(Error::Row {
                line,
                message: format!("`num_actions` must be a positive integer, got {num_actions}"),
            });
        }
        let profile = StudentProfile {
            student_id: field(id_col).to_owned(),
            usage_year: field(year_col).to_owned(),
            num_actions: num_actions as u64,
            ave_know: values[1],
            ave_correct: values[2],
            ave_carelessness: values[3],
            ave_res_bored: values[4],
            ave_res_engcon: values[5],
            ave_res_conf: values[6],
            ave_res_frust: values[7],
            ave_res_offtask: values[8],
            ave_res_gaming: values[9],
        };
        profile.validate().map_err(|e| Error::Row {
            line,
            message: e.to_string(),
        })?;
        let label = match label_col.map(field) {
            None | Some("") => None,
            Some(v) => Some(parse_binary(v, line, "label")?),
        };
        out.push(ProfileRecord { profile, label });
    }
    Ok(out)
}

/// Writes profiles with a `label` column (blank for unlabeled rows).
pub fn write_profiles<W: Write>(writer: W, records: &[ProfileRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["student_id", "usage_year"];
    header.extend(PROFILE_FEATURES);
    header.push("label");
    csv.write_record(&header)?;
    for rec in records {
        let p = &rec.profile;
        let mut row = vec![p.student_id.clone(), p.usage_year.clone()];
        row.push(p.num_actions.to_string());
        row.extend(p.feature_values()[1..].iter().map(f64::to_string));
        row.push(match rec.label {
            Some(true) => "1".into(),
            Some(false) => "0".into(),
            None => String::new(),
        });
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

/// Keeps the first entry per student id. Returns the kept entries and the
/// number removed; fails if any id carries both labels.
pub fn deduplicate_labeled(students: Vec<LabeledStudent>) -> Result<(Vec<LabeledStudent>, usize)> {
    let mut first_label: HashMap<String, bool> = HashMap::new();
    let mut conflicts: Vec<String> = Vec::new();
    let mut seen_conflict: HashSet<String> = HashSet::new();
    let mut kept = Vec::with_capacity(students.len());
    let total = students.len();
    for s in students {
        match first_label.get(&s.profile.student_id) {
            Some(&label) => {
                if label != s.stem && seen_conflict.insert(s.profile.student_id.clone()) {
                    conflicts.push(s.profile.student_id.clone());
                }
            }
            None => {
                first_label.insert(s.profile.student_id.clone(), s.stem);
                kept.push(s);
            }
        }
    }
    if !conflicts.is_empty() {
        return Err(Error::LabelConflict { ids: conflicts });
    }
    let removed = total - kept.len();
    Ok((kept, removed))
}

/// One-hot encoding of a single interaction as a length-`2M` vector: the
/// first block marks the skill, the second block repeats it only when the
/// answer was correct.
pub fn encode_interaction(skill_id: usize, correct: bool, n_skills: usize) -> Result<Vec<f64>> {
    let active = encoded_indices(skill_id, correct, n_skills)?;
    let mut x = vec![0.0; 2 * n_skills];
    for i in active.into_iter().flatten() {
        x[i] = 1.0;
    }
    Ok(x)
}

/// Positions of the non-zero entries of [`encode_interaction`].
pub fn encoded_indices(
    skill_id: usize,
    correct: bool,
    n_skills: usize,
) -> Result<[Option<usize>; 2]> {
    if skill_id >= n_skills {
        return Err(Error::Range(format!(
            "skill id {skill_id} is not below the vocabulary size {n_skills}"
        )));
    }
    Ok([Some(skill_id), correct.then_some(n_skills + skill_id)])
}

/// Inverse of [`encode_interaction`].
pub fn decode_interaction(x: &[f64]) -> Result<(usize, bool)> {
    if x.is_empty() || x.len() % 2 != 0 {
        return Err(Error::Shape(format!(
            "encoded interaction has odd or zero length {}",
            x.len()
        )));
    }
    let m = x.len() / 2;
    let (skill, _) = x[..m]
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        });
    Ok((skill, x[m + skill] > 0.5))
}
