//! CSV ingestion for study summaries and search-space counts.
//!
//! Study files: header row with `id` plus any of `p_value`, `effect`, `se`,
//! `rr`, `ci_low`, `ci_high`, `direction`. Count files: `id`, `outcomes`,
//! `predictors`, `covariates` and optionally `lags`, `foods` and the printed
//! `space1`/`space2`/`space3` for cross-checking. Lines starting with `#`
//! are comments. Unknown columns are ignored.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim};

use crate::combine::Z_95;
use crate::error::{Error, Result};
use crate::searchspace::StudyCounts;
use crate::study::{ensure_valid, BaseStudy, Direction, MetaDataset};

const REL_TOL: f64 = 1e-6;

struct Columns {
    headers: StringRecord,
}

impl Columns {
    fn index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h.eq_ignore_ascii_case(name))
    }

    fn get<'r>(&self, rec: &'r StringRecord, name: &str) -> Option<&'r str> {
        self.index(name)
            .and_then(|i| rec.get(i))
            .filter(|s| !s.is_empty())
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_all<R: Read>(mut input: R, origin: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|source| Error::Io {
        path: origin.to_path_buf(),
        source,
    })?;
    Ok(bytes)
}

// Record positions point just past the previous record, before any comment
// or blank lines in between, so skip those to reach the record itself.
fn line_at(bytes: &[u8], pos: Option<&csv::Position>) -> u64 {
    let Some(pos) = pos else {
        return 0;
    };
    let start = (pos.byte() as usize).min(bytes.len());
    let mut line = 1 + bytes[..start].iter().filter(|&&b| b == b'\n').count() as u64;
    for text in bytes[start..].split(|&b| b == b'\n') {
        let trimmed = text.trim_ascii();
        if !(trimmed.is_empty() || text.first() == Some(&b'#')) {
            break;
        }
        line += 1;
    }
    line
}

fn reader(input: &[u8]) -> csv::Reader<&[u8]> {
    ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(Trim::All)
        .flexible(true)
        .from_reader(input)
}

fn csv_error(path: &Path, bytes: &[u8], e: csv::Error) -> Error {
    let line = line_at(bytes, e.position());
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: e.to_string(),
    }
}

fn require(cols: &Columns, path: &Path, names: &[&str]) -> Result<()> {
    for name in names {
        if cols.index(name).is_none() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!("missing required column {name:?}"),
            });
        }
    }
    Ok(())
}

pub fn parse_studies_csv(path: &Path) -> Result<MetaDataset<f64>> {
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_studies(open(path)?, path, label)
}

/// Parses study rows from any reader; `origin` is used in error messages.
pub fn read_studies<R: Read>(input: R, origin: &Path, label: String) -> Result<MetaDataset<f64>> {
    let bytes = read_all(input, origin)?;
    let mut rdr = reader(&bytes);
    let cols = Columns {
        headers: rdr.headers().map_err(|e| csv_error(origin, &bytes, e))?.clone(),
    };
    require(&cols, origin, &["id"])?;
    let mut studies = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(origin, &bytes, e))?;
        let line = line_at(&bytes, rec.position());
        studies.push(study_from_record(&cols, &rec, origin, line)?);
    }
    let ds = MetaDataset::new(label, studies);
    ensure_valid(&ds)?;
    Ok(ds)
}

fn study_from_record(cols: &Columns, rec: &StringRecord, path: &Path, line: u64) -> Result<BaseStudy<f64>> {
    let err = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let id = cols
        .get(rec, "id")
        .ok_or_else(|| err("empty id".into()))?
        .to_string();
    let num = |name: &str| -> Result<Option<f64>> {
        cols.get(rec, name)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| err(format!("study {id}: {name} = {s:?} is not a number")))
            })
            .transpose()
    };
    let p_value = num("p_value")?;
    let mut effect = num("effect")?;
    let mut se = num("se")?;
    let rr = [num("rr")?, num("ci_low")?, num("ci_high")?];
    match rr {
        [None, None, None] => {}
        [Some(rr), Some(lo), Some(hi)] => {
            if !(rr > 0.0 && lo > 0.0 && hi > lo) {
                return Err(err(format!(
                    "study {id}: need 0 < ci_low < ci_high and rr > 0 (rr {rr}, ci {lo}..{hi})"
                )));
            }
            let e = rr.ln();
            let s = (hi.ln() - lo.ln()) / (2.0 * Z_95);
            for (name, given, derived) in [("effect", effect, e), ("se", se, s)] {
                if let Some(g) = given {
                    let scale = g.abs().max(derived.abs()).max(f64::MIN_POSITIVE);
                    if (g - derived).abs() / scale > REL_TOL {
                        return Err(err(format!(
                            "study {id}: {name} = {g} disagrees with the rr/ci value {derived}"
                        )));
                    }
                }
            }
            effect = Some(e);
            se = Some(s);
        }
        _ => return Err(err(format!("study {id}: rr, ci_low and ci_high must be given together"))),
    }
    let direction = match cols.get(rec, "direction") {
        Some(d) => d.parse::<Direction>().map_err(|e| err(format!("study {id}: {e}")))?,
        None => match effect {
            Some(e) if e > 0.0 => Direction::Increase,
            Some(e) if e < 0.0 => Direction::Decrease,
            _ => Direction::Unspecified,
        },
    };
    Ok(BaseStudy {
        id,
        p_value,
        effect,
        se,
        direction,
    })
}

/// One row of a counts file, with the printed spaces when the file has them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountsRow {
    pub counts: StudyCounts,
    pub reported: Option<[u64; 3]>,
}

pub fn parse_counts_csv(path: &Path) -> Result<Vec<CountsRow>> {
    read_counts(open(path)?, path)
}

pub fn read_counts<R: Read>(input: R, origin: &Path) -> Result<Vec<CountsRow>> {
    let bytes = read_all(input, origin)?;
    let mut rdr = reader(&bytes);
    let cols = Columns {
        headers: rdr.headers().map_err(|e| csv_error(origin, &bytes, e))?.clone(),
    };
    require(&cols, origin, &["id", "outcomes", "predictors", "covariates"])?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(origin, &bytes, e))?;
        let line = line_at(&bytes, rec.position());
        let err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let id = cols
            .get(&rec, "id")
            .ok_or_else(|| err("empty id".into()))?
            .to_string();
        let count = |name: &str| -> Result<Option<u64>> {
            let Some(s) = cols.get(&rec, name) else {
                return Ok(None);
            };
            let v: i128 = s
                .replace(['_', ','], "")
                .parse()
                .map_err(|_| err(format!("study {id}: {name} = {s:?} is not an integer")))?;
            if v < 0 {
                return Err(err(format!("study {id}: {name} = {v} is negative")));
            }
            u64::try_from(v)
                .map(Some)
                .map_err(|_| err(format!("study {id}: {name} = {v} is too large")))
        };
        let needed = |name: &str| -> Result<u64> {
            count(name)?.ok_or_else(|| err(format!("study {id}: missing {name}")))
        };
        let covariates = u32::try_from(needed("covariates")?)
            .map_err(|_| err(format!("study {id}: covariates too large")))?;
        let counts = StudyCounts {
            outcomes: needed("outcomes")?,
            predictors: needed("predictors")?,
            covariates,
            lags: count("lags")?.unwrap_or(1),
            foods: count("foods")?.unwrap_or(0),
            id: id.clone(),
        };
        let reported = match (count("space1")?, count("space2")?, count("space3")?) {
            (Some(a), Some(b), Some(c)) => Some([a, b, c]),
            _ => None,
        };
        rows.push(CountsRow { counts, reported });
    }
    Ok(rows)
}
