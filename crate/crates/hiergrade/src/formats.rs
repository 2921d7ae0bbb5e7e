//! Line-delimited transcript records, vocabulary files and word-vector files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use hiergrade_core::corpus::{
    Conversation, DiscourseLink, RelationVocab, Response, Speaker, Span, SpoTriplet, Tokenizer,
};
use hiergrade_core::encoder::Vocab;
use hiergrade_core::graph::WordVecTable;
use hiergrade_core::pipeline::rescale_score;
use serde::{Deserialize, Serialize};

use crate::{io_err, Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    score: f64,
    responses: Vec<RecordResponse>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordResponse {
    speaker: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spo: Option<Vec<[[usize; 2]; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    links: Option<Vec<(usize, usize, String)>>,
}

/// How records are turned into conversations.
#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub tokenizer: Tokenizer,
    pub relations: RelationVocab,
    /// Source score range mapped onto 1..=9. `None` requires integer scores in 1..=9.
    pub score_range: Option<(f64, f64)>,
}

fn to_conversation(rec: Record, opts: &ParseOptions) -> std::result::Result<Conversation, String> {
    let score = match opts.score_range {
        Some((lo, hi)) => rescale_score(rec.score, lo, hi).map_err(|e| e.to_string())?,
        None => {
            if rec.score.fract() != 0.0 || !(1.0..=9.0).contains(&rec.score) {
                return Err(format!("record `{}`: score {} is not an integer in [1, 9]", rec.id, rec.score));
            }
            rec.score as u8
        }
    };
    let mut responses = Vec::with_capacity(rec.responses.len());
    for (i, r) in rec.responses.into_iter().enumerate() {
        let speaker = match r.speaker.as_str() {
            "I" => Speaker::Interlocutor,
            "C" => Speaker::Candidate,
            other => return Err(format!("record `{}` response {}: speaker `{}` is not I or C", rec.id, i, other)),
        };
        let mut resp = Response::new(i, speaker, &r.text);
        resp.tokens = opts.tokenizer.tokenize(&r.text);
        resp.spo = r.spo.map(|ts| {
            ts.into_iter()
                .map(|[s, p, o]| SpoTriplet {
                    subject: Span::new(s[0], s[1]),
                    predicate: Span::new(p[0], p[1]),
                    object: Span::new(o[0], o[1]),
                })
                .collect()
        });
        resp.out_links = r.links.map(|ls| {
            ls.into_iter().map(|(src, dst, relation)| DiscourseLink { src, dst, relation }).collect()
        });
        responses.push(resp);
    }
    let conv = Conversation::new(&rec.id, score, responses);
    conv.validate(&opts.relations).map_err(|e| e.to_string())?;
    Ok(conv)
}

/// Parses one record per non-blank line. Errors carry the 1-based line number.
pub fn parse_corpus<R: BufRead>(reader: R, source_name: &str, opts: &ParseOptions) -> Result<Vec<Conversation>> {
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        let err = |reason: String| Error::Parse { source_name: source_name.to_string(), line: line_no, reason };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| err(format!("malformed record: {}", e)))?;
        out.push(to_conversation(rec, opts).map_err(err)?);
    }
    Ok(out)
}

pub fn read_corpus(path: &Path, opts: &ParseOptions) -> Result<Vec<Conversation>> {
    let f = File::open(path).map_err(io_err(path))?;
    parse_corpus(BufReader::new(f), &path.display().to_string(), opts)
}

fn to_record(conv: &Conversation) -> Record {
    Record {
        id: conv.id.clone(),
        score: f64::from(conv.sst_score),
        responses: conv
            .responses
            .iter()
            .map(|r| RecordResponse {
                speaker: match r.speaker {
                    Speaker::Interlocutor => "I".into(),
                    Speaker::Candidate => "C".into(),
                },
                text: r.raw_text.clone(),
                spo: r.spo.as_ref().map(|ts| {
                    ts.iter()
                        .map(|t| t.spans().map(|s| [s.start, s.end]))
                        .collect()
                }),
                links: r
                    .out_links
                    .as_ref()
                    .map(|ls| ls.iter().map(|l| (l.src, l.dst, l.relation.clone())).collect()),
            })
            .collect(),
    }
}

pub fn serialize_corpus<W: Write>(convs: &[Conversation], mut w: W) -> std::io::Result<()> {
    for c in convs {
        serde_json::to_writer(&mut w, &to_record(c))?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_corpus(path: &Path, convs: &[Conversation]) -> Result<()> {
    let f = File::create(path).map_err(io_err(path))?;
    serialize_corpus(convs, BufWriter::new(f)).map_err(io_err(path))
}

/// One token per line; the line number is the id.
pub fn write_vocab<W: Write>(vocab: &Vocab, mut w: W) -> std::io::Result<()> {
    for t in vocab.tokens() {
        writeln!(w, "{}", t)?;
    }
    w.flush()
}

pub fn read_vocab<R: BufRead>(reader: R, source_name: &str) -> Result<Vocab> {
    let tokens = reader
        .lines()
        .collect::<std::io::Result<Vec<String>>>()
        .map_err(|e| Error::Parse { source_name: source_name.into(), line: 0, reason: e.to_string() })?;
    Ok(Vocab::from_tokens(tokens)?)
}

/// Whitespace-separated `token v1 ... vd` lines.
pub fn read_word_vectors<R: BufRead>(reader: R, source_name: &str) -> Result<WordVecTable> {
    let mut entries = Vec::new();
    let mut dim = None;
    for (k, line) in reader.lines().enumerate() {
        let err = |reason: String| Error::Parse { source_name: source_name.into(), line: k + 1, reason };
        let line = line.map_err(|e| err(e.to_string()))?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values = parts
            .map(|v| v.parse::<f64>().map_err(|e| err(format!("bad value `{}`: {}", v, e))))
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(err(format!("expected {} values, found {}", d, values.len())));
            }
            _ => {}
        }
        entries.push((token.to_string(), values));
    }
    let dim = dim.ok_or_else(|| Error::Parse { source_name: source_name.into(), line: 0, reason: "no vectors".into() })?;
    Ok(WordVecTable::new(dim, entries)?)
}

pub fn write_word_vectors<W: Write>(table: &WordVecTable, mut w: W) -> std::io::Result<()> {
    for (t, v) in table.iter() {
        write!(w, "{}", t)?;
        for x in v {
            // round-trip exact
            write!(w, " {:?}", x)?;
        }
        writeln!(w)?;
    }
    w.flush()
}

pub fn read_text_file<T>(path: &Path, parse: impl FnOnce(BufReader<File>, &str) -> Result<T>) -> Result<T> {
    let f = File::open(path).map_err(io_err(path))?;
    parse(BufReader::new(f), &path.display().to_string())
}
