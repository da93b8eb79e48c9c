//! LETOR / SVMLight ranking text format:
//! `<grade> qid:<id> <k>:<v> ... # <item id>`.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{LabeledItem, RankingInstance, MAX_GRADE};
use crate::error::{Error, Result};

/// How raw integer grades map onto the three relevance levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradeMapping {
    /// Keep 0..=2 as is, clamp anything larger to 2.
    #[default]
    Clamp,
    /// Five-level MSLR grades: 0,1 → 0; 2 → 1; 3,4 → 2.
    FiveLevel,
}

impl GradeMapping {
    fn map(self, raw: u32) -> u8 {
        match self {
            GradeMapping::Clamp => raw.min(MAX_GRADE as u32) as u8,
            GradeMapping::FiveLevel => match raw {
                0 | 1 => 0,
                2 => 1,
                _ => 2,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLetor {
    pub instances: Vec<RankingInstance>,
    /// Number of lines whose raw grade exceeded 2.
    pub clamped: usize,
}

pub fn parse_letor(text: &str) -> Result<ParsedLetor> {
    parse_letor_with(text, GradeMapping::Clamp)
}

pub fn parse_letor_with(text: &str, mapping: GradeMapping) -> Result<ParsedLetor> {
    struct Row {
        features: Vec<(usize, f64)>,
        grade: u8,
        item_id: Option<String>,
    }

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Row>> = HashMap::new();
    let mut width = 0usize;
    let mut clamped = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let (body, comment) = match raw.split_once('#') {
            Some((b, c)) => (b, Some(c.trim())),
            None => (raw, None),
        };
        let mut tokens = body.split_whitespace();
        let Some(grade_tok) = tokens.next() else {
            continue; // blank or comment-only line
        };
        let raw_grade: u32 = grade_tok
            .parse()
            .map_err(|_| err(format!("non-numeric grade {grade_tok:?}")))?;
        if raw_grade > MAX_GRADE as u32 {
            clamped += 1;
        }

        let qid_tok = tokens
            .next()
            .ok_or_else(|| err("missing qid".to_string()))?;
        let qid = qid_tok
            .strip_prefix("qid:")
            .filter(|q| !q.is_empty())
            .ok_or_else(|| err(format!("expected qid:<id>, found {qid_tok:?}")))?;

        let mut features = Vec::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("malformed feature token {tok:?}")))?;
            let k: usize = k
                .parse()
                .ok()
                .filter(|&k| k >= 1)
                .ok_or_else(|| err(format!("bad feature index in {tok:?}")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| err(format!("bad feature value in {tok:?}")))?;
            if features.iter().any(|&(seen, _)| seen == k) {
                return Err(err(format!("duplicate feature index {k}")));
            }
            width = width.max(k);
            features.push((k, v));
        }

        let row = Row {
            features,
            grade: mapping.map(raw_grade),
            item_id: comment.filter(|c| !c.is_empty()).map(str::to_string),
        };
        groups
            .entry(qid.to_string())
            .or_insert_with(|| {
                order.push(qid.to_string());
                Vec::new()
            })
            .push(row);
    }

    let instances = order
        .into_iter()
        .map(|qid| {
            let rows = groups.remove(&qid).expect("every qid in order has a group");
            let items = rows
                .into_iter()
                .enumerate()
                .map(|(i, row)| {
                    let mut dense = vec![0.0; width];
                    for (k, v) in row.features {
                        dense[k - 1] = v;
                    }
                    LabeledItem {
                        item_id: row.item_id.unwrap_or_else(|| format!("{qid}-{i}")),
                        features: dense,
                        relevance: Some(row.grade),
                    }
                })
                .collect();
            RankingInstance {
                instance_id: qid,
                items,
            }
        })
        .collect();

    Ok(ParsedLetor { instances, clamped })
}

/// Writes every feature densely with 17 significant digits so that parsing
/// the output reproduces the input bit for bit.
pub fn serialize_letor(instances: &[RankingInstance]) -> Result<String> {
    let mut out = String::new();
    for inst in instances {
        if inst.instance_id.chars().any(char::is_whitespace) || inst.instance_id.contains('#') {
            return Err(Error::data(format!(
                "instance id {:?} cannot be written as a qid",
                inst.instance_id
            )));
        }
        for item in &inst.items {
            let grade = item.relevance.ok_or_else(|| {
                Error::data(format!("item {:?} has no relevance grade", item.item_id))
            })?;
            write!(out, "{grade} qid:{}", inst.instance_id).expect("write to String");
            for (k, v) in item.features.iter().enumerate() {
                write!(out, " {}:{:.16e}", k + 1, v).expect("write to String");
            }
            if item.item_id.contains('\n') {
                return Err(Error::data(format!("item id {:?} contains a newline", item.item_id)));
            }
            writeln!(out, " # {}", item.item_id).expect("write to String");
        }
    }
    Ok(out)
}
