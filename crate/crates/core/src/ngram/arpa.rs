//! ARPA text format.
//!
//! Values are written with 7 significant digits, so write → read → write
//! reproduces the same bytes. Unigrams are written in token-id order and
//! reading assigns ids in file order, which keeps ids stable across a round
//! trip.

use std::io::{BufRead, Write};

use super::{NgramEntry, NgramModel, Table};
use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

fn format_sig7(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{v:.6e}");
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    let decimals = (6 - exp).max(0) as usize;
    format!("{v:.decimals$}")
}

pub fn write_arpa<W: Write>(model: &NgramModel, mut out: W) -> Result<()> {
    let order = model.order();
    writeln!(out, "\\data\\")?;
    for m in 1..=order {
        writeln!(out, "ngram {m}={}", model.num_ngrams(m))?;
    }
    for m in 1..=order {
        writeln!(out)?;
        writeln!(out, "\\{m}-grams:")?;
        let table = &model.tables()[m - 1];
        let mut keys: Vec<&Box<[u32]>> = table.keys().collect();
        keys.sort();
        for key in keys {
            let e = &table[key];
            write!(out, "{}\t", format_sig7(e.log10_prob))?;
            for (i, &t) in key.iter().enumerate() {
                if i > 0 {
                    write!(out, " ")?;
                }
                let word = model
                    .vocab()
                    .word(crate::TokenId(t))
                    .ok_or_else(|| Error::Invariant(format!("n-gram references unknown id {t}")))?;
                write!(out, "{word}")?;
            }
            if m < order && (e.has_children || e.log10_bow != 0.0) {
                write!(out, "\t{}", format_sig7(e.log10_bow))?;
            }
            writeln!(out)?;
        }
    }
    writeln!(out)?;
    writeln!(out, "\\end\\")?;
    Ok(())
}

fn parse_err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, msg: msg.into() })
}

pub fn read_arpa<R: BufRead>(reader: R) -> Result<NgramModel> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next_line = || -> Result<Option<(usize, String)>> {
        match lines.next() {
            Some((n, Ok(l))) => Ok(Some((n, l.trim().to_string()))),
            Some((_, Err(e))) => Err(e.into()),
            None => Ok(None),
        }
    };

    // header: skip anything before \data\
    loop {
        match next_line()? {
            Some((_, l)) if l == "\\data\\" => break,
            Some(_) => continue,
            None => return parse_err(0, "missing \\data\\ section"),
        }
    }
    let mut declared: Vec<usize> = Vec::new();
    let mut pending: Option<(usize, String)>;
    loop {
        let Some((n, l)) = next_line()? else {
            return parse_err(0, "unexpected end of file in \\data\\ section");
        };
        if l.is_empty() {
            continue;
        }
        if let Some(rest) = l.strip_prefix("ngram ") {
            let Some((m, c)) = rest.split_once('=') else {
                return parse_err(n, format!("malformed count line `{l}`"));
            };
            let m: usize = m.trim().parse().or_else(|_| parse_err(n, format!("bad order in `{l}`")))?;
            let c: usize = c.trim().parse().or_else(|_| parse_err(n, format!("bad count in `{l}`")))?;
            if m != declared.len() + 1 {
                return parse_err(n, format!("expected ngram {} count, found order {m}", declared.len() + 1));
            }
            declared.push(c);
        } else {
            pending = Some((n, l));
            break;
        }
    }
    if declared.is_empty() {
        return parse_err(0, "no n-gram counts declared");
    }
    let order = declared.len();

    let mut vocab = Vocabulary::with_specials();
    let mut tables: Vec<Table> = vec![Table::default(); order];
    let mut current: Option<usize> = None;
    let mut seen_end = false;
    loop {
        let (n, l) = match pending.take() {
            Some(p) => p,
            None => match next_line()? {
                Some(p) => p,
                None => break,
            },
        };
        if l.is_empty() {
            continue;
        }
        if l == "\\end\\" {
            seen_end = true;
            break;
        }
        if l.starts_with('\\') {
            let m = l
                .strip_prefix('\\')
                .and_then(|s| s.strip_suffix("-grams:"))
                .and_then(|s| s.parse::<usize>().ok());
            match m {
                Some(m) if m == current.map_or(1, |c| c + 1) && m <= order => {
                    if let Some(c) = current {
                        if tables[c - 1].len() != declared[c - 1] {
                            return parse_err(
                                n,
                                format!("{c}-grams: declared {} but found {}", declared[c - 1], tables[c - 1].len()),
                            );
                        }
                    }
                    current = Some(m);
                }
                _ => return parse_err(n, format!("unexpected section header `{l}`")),
            }
            continue;
        }
        let Some(m) = current else {
            return parse_err(n, format!("n-gram line outside any section: `{l}`"));
        };
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() != m + 1 && fields.len() != m + 2 {
            return parse_err(n, format!("expected {} or {} fields in a {m}-gram line", m + 1, m + 2));
        }
        let prob: f64 = fields[0].parse().or_else(|_| parse_err(n, format!("bad probability `{}`", fields[0])))?;
        let bow: f64 = match fields.get(m + 1) {
            Some(b) => b.parse().or_else(|_| parse_err(n, format!("bad backoff `{b}`")))?,
            None => 0.0,
        };
        if !prob.is_finite() || !bow.is_finite() {
            return parse_err(n, "non-finite value");
        }
        let mut key = Vec::with_capacity(m);
        for w in &fields[1..=m] {
            let id = if m == 1 {
                vocab.insert(w)
            } else {
                match vocab.id(w) {
                    Some(id) => id,
                    None => return parse_err(n, format!("word `{w}` has no unigram")),
                }
            };
            key.push(id.0);
        }
        let dup = tables[m - 1]
            .insert(key.into_boxed_slice(), NgramEntry { log10_prob: prob, log10_bow: bow, has_children: false })
            .is_some();
        if dup {
            return parse_err(n, "duplicate n-gram");
        }
    }
    if !seen_end {
        return parse_err(0, "missing \\end\\ marker");
    }
    match current {
        Some(c) if c == order => {
            if tables[c - 1].len() != declared[c - 1] {
                return parse_err(0, format!("{c}-grams: declared {} but found {}", declared[c - 1], tables[c - 1].len()));
            }
        }
        _ => return parse_err(0, format!("expected {order} n-gram sections")),
    }
    Ok(NgramModel::from_tables(vocab, tables, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::TokenId;

    #[test]
    fn sig7_formatting() {
        assert_eq!(format_sig7(-1.23456789), "-1.234568");
        assert_eq!(format_sig7(-0.000123456789), "-0.0001234568");
        assert_eq!(format_sig7(-99.0), "-99.00000");
        assert_eq!(format_sig7(-1234.5), "-1234.500");
        assert_eq!(format_sig7(0.0), "0");
        // rounding across a power of ten stays at 7 digits
        assert_eq!(format_sig7(-0.99999996), "-1.000000");
        assert_eq!(format_sig7(-1.000000), "-1.000000");
    }

    #[test]
    fn hand_written_unigrams() {
        let text = "\\data\\\nngram 1=2\n\n\\1-grams:\n-0.3010300\thello\n-0.3010300\tworld\n\n\\end\\\n";
        let m = read_arpa(text.as_bytes()).unwrap();
        assert_eq!(m.order(), 1);
        assert_eq!(m.total_ngrams(), 2);
        let hello = m.vocab().id("hello").unwrap();
        assert!((m.log10_prob(&[], hello) - 0.5f64.log10()).abs() < 1e-6);
        assert!(m.entry(&[TokenId(0)]).is_none());
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let text = "\\data\\\nngram 1=3\n\n\\1-grams:\n-0.3\ta\n-0.3\tb\n\n\\end\\\n";
        match read_arpa(text.as_bytes()) {
            Err(Error::Parse { msg, .. }) => assert!(msg.contains("declared 3"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let text = "\\data\\\nngram 1=1\nngram 2=1\n\n\\1-grams:\n-0.3\ta\n\n\\2-grams:\n-0.1\ta a\n-0.1\ta a2\n\\end\\\n";
        assert!(read_arpa(text.as_bytes()).is_err());
    }

    #[test]
    fn malformed_headers_report_line() {
        let text = "\\data\\\nngram 1=1\n\n\\3-grams:\n-0.3\ta\n\\end\\\n";
        match read_arpa(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        assert!(read_arpa("ngram 1=1\n".as_bytes()).is_err());
        let no_end = "\\data\\\nngram 1=1\n\n\\1-grams:\n-0.3\ta\n";
        assert!(read_arpa(no_end.as_bytes()).is_err());
        let bad_field = "\\data\\\nngram 1=1\n\n\\1-grams:\n-0.3\ta b c d\n\\end\\\n";
        match read_arpa(bad_field.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }
}
