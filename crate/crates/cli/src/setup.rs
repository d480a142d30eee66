//! Loading inputs and wiring models into drafters and refinements.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::process::Command;

use anyhow::Context;
use draftlat::engine::external::LineJsonDrafter;
use draftlat::engine::{Drafter, Refinement, SimulatedDrafter};
use draftlat::ngram::{read_arpa, NgramModel};
use draftlat::{TokenId, Vocabulary};
use serde::Serialize;

use crate::config::{Mode, RunConfig};
use crate::exit::usage;

pub const SCHEMA: u32 = 1;

pub fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub fn load_arpa(path: &Path) -> anyhow::Result<NgramModel> {
    let model = read_arpa(open(path)?).with_context(|| format!("reading ARPA model {}", path.display()))?;
    log::info!("loaded {} ({}-gram, {} n-grams)", path.display(), model.order(), model.total_ngrams());
    Ok(model)
}

/// A prompt as token ids, with the number of words the vocabulary lacked.
#[derive(Clone, Debug)]
pub struct Prompt {
    pub tokens: Vec<TokenId>,
    pub unknown: usize,
}

/// One prompt per non-blank line. A prompt not already starting with `<s>`
/// gets one, since the models are trained on sentences that do.
pub fn read_prompts(path: &Path, vocab: &Vocabulary, limit: Option<usize>) -> anyhow::Result<Vec<Prompt>> {
    let mut out = Vec::new();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line.with_context(|| format!("reading {} line {}", path.display(), n + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        if limit.is_some_and(|l| out.len() >= l) {
            break;
        }
        let (mut tokens, unknown) = vocab.encode_line(&line);
        if tokens.first() != Some(&Vocabulary::BOS_ID) {
            tokens.insert(0, Vocabulary::BOS_ID);
        }
        out.push(Prompt { tokens, unknown });
    }
    if out.is_empty() {
        return Err(usage(format!("no prompts in {}", path.display())));
    }
    let unknown: usize = out.iter().map(|p| p.unknown).sum();
    if unknown > 0 {
        log::warn!("{unknown} prompt words are not in the base vocabulary and map to <unk>");
    }
    Ok(out)
}

/// Makes `rescorer` use the base model's token ids. The two vocabularies
/// must agree on every id they share; base words missing from the rescorer
/// are added with a negligible probability.
pub fn align_rescorer(base: &Vocabulary, rescorer: &mut NgramModel) -> anyhow::Result<()> {
    let shared = base.len().min(rescorer.vocab().len());
    if let Some(i) = (0..shared).find(|&i| base.words()[i] != rescorer.vocab().words()[i]) {
        return Err(usage(format!(
            "rescorer vocabulary disagrees with the base model at id {i} (`{}` vs `{}`); train both on the same corpus",
            rescorer.vocab().words()[i],
            base.words()[i]
        )));
    }
    let added = rescorer.patch_unseen_unigrams(base.words().iter().skip(shared));
    if added > 0 {
        log::warn!("{added} base-model words are missing from the rescorer");
    }
    Ok(())
}

pub struct Models {
    pub base: NgramModel,
    pub rescorer: Option<NgramModel>,
}

impl Models {
    pub fn load(cfg: &RunConfig) -> anyhow::Result<Self> {
        let base = load_arpa(cfg.base.as_deref().expect("validated"))?;
        let rescorer = match &cfg.rescorer {
            Some(path) => {
                let mut r = load_arpa(path)?;
                if let Some(order) = cfg.order {
                    if r.order() != order {
                        return Err(usage(format!("rescorer is a {}-gram model, config says order {order}", r.order())));
                    }
                }
                align_rescorer(base.vocab(), &mut r)?;
                Some(r)
            }
            None => None,
        };
        Ok(Models { base, rescorer })
    }

    pub fn refinement(&self, cfg: &RunConfig, alpha: f64) -> Refinement<'_, f64> {
        match cfg.mode {
            Mode::Vanilla => Refinement::Vanilla,
            Mode::Oracle => Refinement::Oracle,
            Mode::Local => Refinement::Local {
                scorer: self.rescorer.as_ref().expect("validated"),
                alpha,
                conditioning: cfg.conditioning,
            },
            Mode::Ngram => Refinement::Global { model: self.rescorer.as_ref(), alpha, p: 1 },
            Mode::Pbest => Refinement::Global { model: self.rescorer.as_ref(), alpha, p: cfg.p },
        }
    }

    pub fn drafter<'a>(&'a self, cfg: &RunConfig) -> anyhow::Result<Box<dyn Drafter<f64> + 'a>> {
        match &cfg.drafter.command {
            Some(cmd) => {
                let mut command = Command::new("sh");
                command.arg("-c").arg(cmd);
                let d = LineJsonDrafter::spawn(&mut command, cfg.heads)
                    .with_context(|| format!("starting drafter `{cmd}`"))?;
                Ok(Box::new(d))
            }
            None => {
                let sim = cfg.drafter.sim_config(cfg.heads, cfg.seed);
                Ok(Box::new(SimulatedDrafter::new(&self.base, sim).map_err(|e| usage(e.to_string()))?))
            }
        }
    }
}

/// Pretty JSON to `path`, or to stdout.
pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> anyhow::Result<()> {
    match path {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(f);
            serde_json::to_writer_pretty(&mut w, value)?;
            w.write_all(b"\n")?;
            w.flush().with_context(|| format!("writing {}", path.display()))?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            serde_json::to_writer_pretty(&mut w, value)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// CSV rows to `path`, or to stdout.
pub fn write_csv<T: Serialize>(path: Option<&Path>, rows: &[T]) -> anyhow::Result<()> {
    let w: Box<dyn Write> = match path {
        Some(path) => Box::new(File::create(path).with_context(|| format!("creating {}", path.display()))?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(w);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// Comma-separated list flag values.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| format!("`{t}` is not a valid value")))
        .collect()
}
