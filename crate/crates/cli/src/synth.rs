use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use draftlat::engine::synthetic::{SyntheticConfig, SyntheticTask};

use crate::exit::usage;

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Receives train.txt, heldout.txt and prompts.txt.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub train_sentences: Option<usize>,
    #[arg(long)]
    pub heldout_sentences: Option<usize>,
    /// Words of each held-out sentence used as its prompt.
    #[arg(long, default_value_t = 3)]
    pub prompt_len: usize,
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes a corpus from the synthetic grammar, split into training text,
/// held-out text and prompts cut from the held-out sentences.
pub fn run(a: &SynthArgs) -> anyhow::Result<()> {
    let mut cfg = SyntheticConfig::default();
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.vocab_size {
        cfg.vocab_size = v;
    }
    if let Some(v) = a.train_sentences {
        cfg.train_sentences = v;
    }
    if let Some(v) = a.heldout_sentences {
        cfg.heldout_sentences = v;
    }
    let task = SyntheticTask::generate(&cfg).map_err(|e| usage(e.to_string()))?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    write_lines(&a.out_dir.join("train.txt"), task.lines(&task.train))?;
    write_lines(&a.out_dir.join("heldout.txt"), task.lines(&task.heldout))?;
    let prompts: Vec<_> = task.heldout.iter().map(|s| s[..a.prompt_len.min(s.len())].to_vec()).collect();
    write_lines(&a.out_dir.join("prompts.txt"), task.lines(&prompts))?;
    Ok(())
}
