use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use draftlat::ngram::{estimate_katz, read_binary_corpus, read_text_corpus, write_arpa, CountTable, PruneConfig};

use crate::exit::usage;
use crate::setup::open;

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub order: usize,
    /// One sentence per line, whitespace-separated words.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Read the corpus as length-prefixed little-endian u32 token ids.
    #[arg(long)]
    pub binary: bool,
    /// Per-order minimum counts, e.g. "3:2,4:4".
    #[arg(long)]
    pub min_count: Option<String>,
    /// Cap on the total number of stored n-grams.
    #[arg(long)]
    pub max_ngrams: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(a: &TrainArgs) -> anyhow::Result<()> {
    if a.order == 0 {
        return Err(usage("--order must be at least 1"));
    }
    let mut prune = match &a.min_count {
        Some(spec) => PruneConfig::parse_min_counts(spec).map_err(|e| usage(e.to_string()))?,
        None => PruneConfig::default(),
    };
    if let Some(max) = a.max_ngrams {
        prune = prune.with_max_ngrams(max);
    }
    let reader = open(&a.corpus)?;
    let sentences = if a.binary { read_binary_corpus(reader) } else { read_text_corpus(reader) }
        .with_context(|| format!("reading corpus {}", a.corpus.display()))?;
    if sentences.is_empty() {
        return Err(usage(format!("corpus {} has no sentences", a.corpus.display())));
    }
    let counts = CountTable::from_text(&sentences, a.order)?;
    let model = estimate_katz(&counts, &prune)?;
    log::info!("{} sentences, {} n-grams kept", sentences.len(), model.total_ngrams());
    let f = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut w = BufWriter::new(f);
    write_arpa(&model, &mut w)?;
    w.flush().with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}
