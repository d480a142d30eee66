use std::io::{BufRead, Read};

use rustc_hash::FxHashMap;

use crate::error::{invalid, Error, Result};
use crate::vocab::{TokenId, Vocabulary};

/// Occurrence counts of every m-gram, `1 <= m <= order`, over a
/// sentence-bounded corpus.
#[derive(Clone, Debug)]
pub struct CountTable {
    order: usize,
    vocab: Vocabulary,
    /// `counts[m - 1]` holds the m-gram counts.
    counts: Vec<FxHashMap<Box<[u32]>, u64>>,
    total_tokens: u64,
}

impl CountTable {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Tokens counted as unigrams, `<s>` and `</s>` included.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn get(&self, ngram: &[TokenId]) -> u64 {
        if ngram.is_empty() || ngram.len() > self.order {
            return 0;
        }
        let key: Vec<u32> = ngram.iter().map(|t| t.0).collect();
        self.counts[ngram.len() - 1].get(key.as_slice()).copied().unwrap_or(0)
    }

    /// All m-grams with their counts, in ascending key order.
    pub fn ngrams(&self, m: usize) -> Vec<(Vec<TokenId>, u64)> {
        let mut out: Vec<_> = self.counts[m - 1]
            .iter()
            .map(|(k, &c)| (k.iter().map(|&t| TokenId(t)).collect::<Vec<_>>(), c))
            .collect();
        out.sort();
        out
    }

    pub(crate) fn table(&self, m: usize) -> &FxHashMap<Box<[u32]>, u64> {
        &self.counts[m - 1]
    }

    /// Counts a whitespace-tokenized corpus, building the vocabulary from it.
    pub fn from_text(sentences: &[Vec<String>], order: usize) -> Result<Self> {
        let vocab = Vocabulary::from_corpus(sentences.iter().map(Vec::as_slice));
        let ids: Vec<Vec<TokenId>> = sentences
            .iter()
            .map(|s| s.iter().map(|w| vocab.id_or_unk(w)).collect())
            .collect();
        count(&ids, order, &vocab)
    }
}

/// Counts all m-grams up to `order`, wrapping each sentence in `<s>` ... `</s>`.
pub fn count(corpus: &[Vec<TokenId>], order: usize, vocab: &Vocabulary) -> Result<CountTable> {
    if order == 0 {
        return invalid("n-gram order must be at least 1");
    }
    if corpus.is_empty() {
        return invalid("empty corpus");
    }
    let mut counts: Vec<FxHashMap<Box<[u32]>, u64>> = vec![FxHashMap::default(); order];
    let mut total_tokens = 0u64;
    let mut padded: Vec<u32> = Vec::new();
    for (line, sent) in corpus.iter().enumerate() {
        padded.clear();
        padded.push(Vocabulary::BOS_ID.0);
        for &t in sent {
            if !vocab.contains(t) {
                return invalid(format!("sentence {} has token id {t} outside the vocabulary", line + 1));
            }
            padded.push(t.0);
        }
        padded.push(Vocabulary::EOS_ID.0);
        total_tokens += padded.len() as u64;
        for m in 1..=order.min(padded.len()) {
            let table = &mut counts[m - 1];
            for w in padded.windows(m) {
                match table.get_mut(w) {
                    Some(c) => *c += 1,
                    None => {
                        table.insert(w.into(), 1);
                    }
                }
            }
        }
    }
    Ok(CountTable { order, vocab: vocab.clone(), counts, total_tokens })
}

/// One sentence per line, whitespace-separated tokens; blank lines skipped.
pub fn read_text_corpus<R: BufRead>(reader: R) -> Result<Vec<Vec<String>>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let toks: Vec<String> = line.split_whitespace().map(String::from).collect();
        if !toks.is_empty() {
            out.push(toks);
        }
    }
    Ok(out)
}

/// Little-endian `u32` sentence length followed by that many `u32` token ids,
/// repeated to end of stream. Ids are returned spelled as decimal words so
/// they share the text pipeline.
pub fn read_binary_corpus<R: Read>(mut reader: R) -> Result<Vec<Vec<String>>> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Parse { line: 0, msg: format!("binary corpus length {} is not a multiple of 4", bytes.len()) });
    }
    let words: Vec<u32> = bytes.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < words.len() {
        let len = words[pos] as usize;
        pos += 1;
        if pos + len > words.len() {
            return Err(Error::Parse {
                line: out.len() + 1,
                msg: format!("sentence declares {len} tokens but only {} remain", words.len() - pos),
            });
        }
        if len > 0 {
            out.push(words[pos..pos + len].iter().map(u32::to_string).collect());
        }
        pos += len;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sents(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| l.split_whitespace().map(String::from).collect()).collect()
    }

    #[test]
    fn counts_single_sentence() {
        let ct = CountTable::from_text(&sents(&["a b"]), 2).unwrap();
        let v = ct.vocab();
        let id = |w: &str| v.id(w).unwrap();
        for w in ["<s>", "a", "b", "</s>"] {
            assert_eq!(ct.get(&[id(w)]), 1, "{w}");
        }
        assert_eq!(ct.ngrams(1).len(), 4);
        assert_eq!(ct.get(&[id("<s>"), id("a")]), 1);
        assert_eq!(ct.get(&[id("a"), id("b")]), 1);
        assert_eq!(ct.get(&[id("b"), id("</s>")]), 1);
        assert_eq!(ct.ngrams(2).len(), 3);
        assert_eq!(ct.total_tokens(), 4);
    }

    #[test]
    fn overlapping_repeats() {
        let ct = CountTable::from_text(&sents(&["a a a"]), 2).unwrap();
        let a = ct.vocab().id("a").unwrap();
        assert_eq!(ct.get(&[a, a]), 2);
        assert_eq!(ct.get(&[a]), 3);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(CountTable::from_text(&[], 2).is_err());
        assert!(CountTable::from_text(&sents(&["a"]), 0).is_err());
    }

    #[test]
    fn binary_corpus_framing() {
        let mut bytes = Vec::new();
        for w in [2u32, 7, 9, 0, 1, 7] {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        let corpus = read_binary_corpus(bytes.as_slice()).unwrap();
        assert_eq!(corpus, sents(&["7 9", "7"]));
        let truncated = &bytes[..bytes.len() - 4];
        assert!(read_binary_corpus(truncated).is_err());
        assert!(read_binary_corpus(&bytes[..3]).is_err());
    }

    #[test]
    fn text_corpus_skips_blank_lines() {
        let corpus = read_text_corpus("a b\n\n  \nc\n".as_bytes()).unwrap();
        assert_eq!(corpus, sents(&["a b", "c"]));
    }
}
