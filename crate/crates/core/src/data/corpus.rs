//! Document-aware parallel corpus representation and file format.
//!
//! Corpus files are UTF-8 text with one parallel sentence per line in the
//! form `source ||| target`. A line `### doc <doc_id> <domain>` opens a new
//! document. Files written by [`save_corpus`] load back bit-exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// One parallel document: ordered sentence pairs under a domain label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub domain: String,
    /// (source tokens, target tokens), in document order.
    pub sentences: Vec<(Vec<String>, Vec<String>)>,
}

/// Result of loading a corpus file; warnings flag recoverable oddities such
/// as a missing leading document marker.
#[derive(Clone, Debug, Default)]
pub struct LoadedCorpus {
    pub documents: Vec<Document>,
    pub warnings: Vec<String>,
}

const DOC_MARKER: &str = "### doc ";
const PAIR_SEPARATOR: &str = " ||| ";

pub fn load_corpus(path: &Path) -> Result<LoadedCorpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, &path.display().to_string())
}

/// Parses corpus text; `origin` names the source in error messages.
pub fn parse_corpus(text: &str, origin: &str) -> Result<LoadedCorpus> {
    let mut out = LoadedCorpus::default();
    let mut current: Option<Document> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(DOC_MARKER) {
            let mut fields = rest.split_whitespace();
            let doc_id = fields.next().ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                line: line_no,
                msg: "document marker is missing a doc id".to_string(),
            })?;
            let domain = fields.next().ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                line: line_no,
                msg: format!("document marker for {:?} is missing a domain label", doc_id),
            })?;
            if let Some(doc) = current.take() {
                out.documents.push(doc);
            }
            current = Some(Document {
                doc_id: doc_id.to_string(),
                domain: domain.to_string(),
                sentences: Vec::new(),
            });
            continue;
        }
        let (src, tgt) = line.split_once(PAIR_SEPARATOR).ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line: line_no,
            msg: format!("expected `source ||| target`, got {:?}", line),
        })?;
        let doc = current.get_or_insert_with(|| {
            out.warnings.push(format!(
                "{}:{}: sentence before any document marker; treating the whole \
                 file as a single document",
                origin, line_no
            ));
            Document {
                doc_id: "doc0".to_string(),
                domain: "unknown".to_string(),
                sentences: Vec::new(),
            }
        });
        doc.sentences.push((
            src.split_whitespace().map(str::to_string).collect(),
            tgt.split_whitespace().map(str::to_string).collect(),
        ));
    }
    if let Some(doc) = current.take() {
        out.documents.push(doc);
    }
    Ok(out)
}

pub fn save_corpus(path: &Path, documents: &[Document]) -> Result<()> {
    let mut buf = String::new();
    for doc in documents {
        render_document(&mut buf, doc);
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn render_document(buf: &mut String, doc: &Document) {
    buf.push_str(DOC_MARKER);
    buf.push_str(&doc.doc_id);
    buf.push(' ');
    buf.push_str(&doc.domain);
    buf.push('\n');
    for (src, tgt) in &doc.sentences {
        debug_assert!(
            !src.iter().chain(tgt).any(|t| t.contains("|||") || t.contains(char::is_whitespace)),
            "tokens must not contain the pair separator or whitespace"
        );
        buf.push_str(&src.join(" "));
        buf.push_str(PAIR_SEPARATOR);
        buf.push_str(&tgt.join(" "));
        buf.push('\n');
    }
}

/// Reference lines for evaluation: one whitespace-joined target sentence per
/// line, in corpus order. This is the order translate writes hypotheses in.
pub fn reference_lines(documents: &[Document]) -> Vec<String> {
    documents
        .iter()
        .flat_map(|d| d.sentences.iter().map(|(_, tgt)| tgt.join(" ")))
        .collect()
}

/// Source lines in the same order, for alignment-based metrics.
pub fn source_lines(documents: &[Document]) -> Vec<String> {
    documents
        .iter()
        .flat_map(|d| d.sentences.iter().map(|(src, _)| src.join(" ")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn empty_file_gives_empty_corpus() {
        let loaded = parse_corpus("", "mem").unwrap();
        assert!(loaded.documents.is_empty());
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn parses_documents_with_boundaries() {
        let text = "### doc d1 news\na b ||| x y\nc ||| z\n### doc d2 law\ne ||| w\n";
        let loaded = parse_corpus(text, "mem").unwrap();
        assert_eq!(loaded.documents.len(), 2);
        assert_eq!(loaded.documents[0].doc_id, "d1");
        assert_eq!(loaded.documents[0].domain, "news");
        assert_eq!(loaded.documents[0].sentences.len(), 2);
        assert_eq!(loaded.documents[0].sentences[0], (toks("a b"), toks("x y")));
        assert_eq!(loaded.documents[1].sentences, vec![(toks("e"), toks("w"))]);
    }

    #[test]
    fn missing_boundary_becomes_one_document_with_warning() {
        let text = "a ||| x\nb ||| y\n";
        let loaded = parse_corpus(text, "mem").unwrap();
        assert_eq!(loaded.documents.len(), 1);
        assert_eq!(loaded.documents[0].sentences.len(), 2);
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.warnings[0].contains("single document"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "### doc d1 news\ngood ||| fine\nbad line without separator\n";
        let err = parse_corpus(text, "mem").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("mem:3"), "error should name line 3: {}", msg);
    }

    #[test]
    fn round_trip_is_identity() {
        let docs = vec![
            Document {
                doc_id: "alpha".into(),
                domain: "d1".into(),
                sentences: vec![(toks("a b c"), toks("x y")), (toks("d"), toks("z w q"))],
            },
            Document {
                doc_id: "beta".into(),
                domain: "d2".into(),
                sentences: vec![(toks("m n"), toks("u v"))],
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.txt");
        save_corpus(&path, &docs).unwrap();
        let loaded = load_corpus(&path).unwrap();
        assert_eq!(loaded.documents, docs);
        assert!(loaded.warnings.is_empty());
        // A second round trip produces byte-identical files.
        let path2 = dir.path().join("corpus2.txt");
        save_corpus(&path2, &loaded.documents).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }
}
