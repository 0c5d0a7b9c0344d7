//! Line-delimited record files for corpora and pair datasets.
//!
//! Every file starts with one header record, followed by one record per item
//! or pair. Each line is a standalone JSON object:
//!
//! ```text
//! {"record":"header","kind":"pair_dataset","format_version":1,"name":"prod","n_metrics":2,"metric_names":["likes","shorts"],"config_sha256":"..."}
//! {"record":"pair","pair_id":"p0","item_a":{...},"item_b":{...}}
//! ```
//!
//! Corpus files use `"kind":"corpus"` and `{"record":"item",...}` lines.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Item, PairDataset, RandomPair};
use crate::error::{Error, Result};
use crate::simulator::Corpus;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    Corpus,
    PairDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: FileKind,
    pub format_version: u32,
    /// Corpus name or treatment id.
    pub name: String,
    pub n_metrics: usize,
    pub metric_names: Vec<String>,
    #[serde(default)]
    pub config_sha256: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header(Header),
    Item(Item),
    Pair(RandomPair),
}

fn write_line(out: &mut Vec<u8>, record: &Record) {
    serde_json::to_writer(&mut *out, record).expect("records always serialize");
    out.push(b'\n');
}

/// Renders a dataset file. `config_sha256` names whatever produced the data.
pub fn dataset_to_string(dataset: &PairDataset, config_sha256: &str) -> String {
    let mut out = Vec::new();
    write_line(
        &mut out,
        &Record::Header(Header {
            kind: FileKind::PairDataset,
            format_version: FORMAT_VERSION,
            name: dataset.treatment_id.clone(),
            n_metrics: dataset.n_metrics(),
            metric_names: dataset.metric_names.clone(),
            config_sha256: config_sha256.to_string(),
        }),
    );
    for pair in &dataset.pairs {
        write_line(&mut out, &Record::Pair(pair.clone()));
    }
    String::from_utf8(out).expect("json is utf-8")
}

pub fn corpus_to_string(corpus: &Corpus) -> String {
    let mut out = Vec::new();
    write_line(
        &mut out,
        &Record::Header(Header {
            kind: FileKind::Corpus,
            format_version: FORMAT_VERSION,
            name: corpus.name.clone(),
            n_metrics: corpus.n_metrics(),
            metric_names: corpus.metric_names.clone(),
            config_sha256: corpus.config_sha256.clone(),
        }),
    );
    for item in &corpus.items {
        write_line(&mut out, &Record::Item(item.clone()));
    }
    String::from_utf8(out).expect("json is utf-8")
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

fn at(line: usize) -> String {
    format!("line {line}")
}

fn check_shape(line: usize, item: &Item, n: usize) -> Result<()> {
    if item.terms.len() != n || item.labels.len() != n {
        return Err(Error::parse(
            at(line),
            format!(
                "item {} has {} terms and {} labels but the header declares {n} metrics",
                item.item_id,
                item.terms.len(),
                item.labels.len()
            ),
        ));
    }
    Ok(())
}

/// Splits `text` into its header and body records, with 1-based line numbers.
fn parse_records(text: &str, expected: FileKind) -> Result<(Header, Vec<(usize, Record)>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((first, header_line)) = lines.next() else {
        return Err(Error::EmptyInput("file is empty".into()));
    };
    let header = match serde_json::from_str::<Record>(header_line) {
        Ok(Record::Header(h)) => h,
        Ok(_) => return Err(Error::parse(at(first), "first record must be a header")),
        Err(e) => return Err(Error::parse(at(first), e)),
    };
    if header.kind != expected {
        return Err(Error::parse(
            at(first),
            format!("expected a {expected:?} file, found {:?}", header.kind),
        ));
    }
    if header.format_version != FORMAT_VERSION {
        return Err(Error::parse(
            at(first),
            format!("unsupported format_version {}", header.format_version),
        ));
    }
    if header.metric_names.len() != header.n_metrics {
        return Err(Error::parse(
            at(first),
            format!(
                "n_metrics is {} but {} metric names are given",
                header.n_metrics,
                header.metric_names.len()
            ),
        ));
    }
    let body = lines
        .map(|(line, text)| {
            serde_json::from_str::<Record>(text)
                .map(|r| (line, r))
                .map_err(|e| Error::parse(at(line), e))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, body))
}

/// Parses a dataset file without running [`validate_dataset`](crate::domain::validate_dataset).
pub fn parse_dataset(text: &str) -> Result<(Header, PairDataset)> {
    let (header, body) = parse_records(text, FileKind::PairDataset)?;
    let n = header.n_metrics;
    let pairs = body
        .into_iter()
        .map(|(line, record)| match record {
            Record::Pair(p) => {
                check_shape(line, &p.item_a, n)?;
                check_shape(line, &p.item_b, n)?;
                Ok(p)
            }
            _ => Err(Error::parse(at(line), "expected a pair record")),
        })
        .collect::<Result<Vec<_>>>()?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("dataset file has a header but no pairs".into()));
    }
    let dataset = PairDataset::new(header.name.clone(), header.metric_names.clone(), pairs);
    Ok((header, dataset))
}

pub fn parse_corpus(text: &str) -> Result<Corpus> {
    let (header, body) = parse_records(text, FileKind::Corpus)?;
    let n = header.n_metrics;
    let items = body
        .into_iter()
        .map(|(line, record)| match record {
            Record::Item(it) => {
                check_shape(line, &it, n)?;
                Ok(it)
            }
            _ => Err(Error::parse(at(line), "expected an item record")),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        name: header.name,
        metric_names: header.metric_names,
        config_sha256: header.config_sha256,
        items,
        warnings: Vec::new(),
    })
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
