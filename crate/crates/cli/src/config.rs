use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use draftlat::engine::SimConfig;
use draftlat::rescoring::LocalConditioning;
use serde::{Deserialize, Serialize};

use crate::exit::usage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Vanilla,
    /// Greedy lattice walk scored by the rescorer.
    Local,
    /// Best single path under the rescorer.
    Ngram,
    /// p-best global rescoring; without a rescorer, p-best by lattice score.
    Pbest,
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Conditioning {
    Rescored,
    Vanilla,
}

impl From<Conditioning> for LocalConditioning {
    fn from(c: Conditioning) -> Self {
        match c {
            Conditioning::Rescored => LocalConditioning::Rescored,
            Conditioning::Vanilla => LocalConditioning::Vanilla,
        }
    }
}

/// How the simulated drafter degrades the base model, or which external
/// process to ask for head logits instead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DrafterConfig {
    /// Context tokens seen by heads 2..h; absent means the full context.
    pub context_len: Option<usize>,
    pub temperature_step: f64,
    pub noise: f64,
    pub repeat_prob: f64,
    /// Shell command speaking the line-JSON head protocol on stdin/stdout.
    pub command: Option<String>,
}

impl Default for DrafterConfig {
    fn default() -> Self {
        DrafterConfig { context_len: Some(1), temperature_step: 0.25, noise: 0.5, repeat_prob: 0.0, command: None }
    }
}

impl DrafterConfig {
    pub fn sim_config(&self, heads: usize, seed: u64) -> SimConfig {
        SimConfig {
            temperatures: (0..heads).map(|j| 1.0 + self.temperature_step * j as f64).collect(),
            context_lens: (0..heads).map(|j| if j == 0 { None } else { self.context_len }).collect(),
            noise: (0..heads).map(|j| if j == 0 { 0.0 } else { self.noise }).collect(),
            repeat_prob: self.repeat_prob,
            seed,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Decode report; stdout when absent.
    pub report: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub k: usize,
    pub p: usize,
    pub alpha: f64,
    pub heads: usize,
    /// Expected rescorer order, checked when the rescorer loads.
    pub order: Option<usize>,
    pub base: Option<PathBuf>,
    pub rescorer: Option<PathBuf>,
    pub prompts: Option<PathBuf>,
    /// Use only the first this many prompts.
    pub max_prompts: Option<usize>,
    /// Tokens to generate per prompt.
    pub max_tokens: usize,
    pub seed: u64,
    pub conditioning: LocalConditioning,
    pub check_fidelity: bool,
    pub drafter: DrafterConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Vanilla,
            k: 16,
            p: 1,
            alpha: 1.0,
            heads: 8,
            order: None,
            base: None,
            rescorer: None,
            prompts: None,
            max_prompts: None,
            max_tokens: 100,
            seed: 0,
            conditioning: LocalConditioning::Rescored,
            check_fidelity: true,
            drafter: DrafterConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let fail = |m: &str| Err(usage(m.to_string()));
        if self.k == 0 {
            return fail("k must be at least 1");
        }
        if self.p == 0 {
            return fail("p must be at least 1");
        }
        if self.heads == 0 {
            return fail("heads must be at least 1");
        }
        if self.max_tokens == 0 {
            return fail("max-tokens must be at least 1");
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return fail("alpha must be a finite non-negative number");
        }
        if self.max_prompts == Some(0) {
            return fail("max-prompts must be at least 1");
        }
        if self.base.is_none() {
            return fail("a base model is required (--base)");
        }
        if self.prompts.is_none() {
            return fail("a prompts file is required (--prompts)");
        }
        if matches!(self.mode, Mode::Local | Mode::Ngram) && self.rescorer.is_none() {
            return fail("modes local and ngram need a rescorer (--rescorer)");
        }
        if self.drafter.command.is_none() {
            let sim = self.drafter.sim_config(self.heads, self.seed);
            sim.validate().map_err(|e| usage(format!("drafter: {e}")))?;
        }
        Ok(())
    }
}

/// Run settings shared by decode, tune-alpha and the decoding analyses.
/// Flags override the config file, which overrides the defaults.
#[derive(Args, Clone, Debug, Default)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Arcs kept per lattice step.
    #[arg(long)]
    pub k: Option<usize>,
    /// Drafts verified per step in pbest mode.
    #[arg(long)]
    pub p: Option<usize>,
    /// Weight of the rescorer score.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub heads: Option<usize>,
    /// Expected rescorer order.
    #[arg(long)]
    pub order: Option<usize>,
    /// Base model, ARPA.
    #[arg(long)]
    pub base: Option<PathBuf>,
    /// Rescoring model, ARPA.
    #[arg(long)]
    pub rescorer: Option<PathBuf>,
    /// One prompt per line, whitespace-separated words.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    #[arg(long)]
    pub max_prompts: Option<usize>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Context the local scorer sees for earlier block positions.
    #[arg(long, value_enum)]
    pub conditioning: Option<Conditioning>,
    /// Skip the greedy re-decode that checks output fidelity.
    #[arg(long)]
    pub no_fidelity_check: bool,
    /// Context tokens seen by simulated heads 2..h; 0 means the full context.
    #[arg(long)]
    pub context_len: Option<usize>,
    #[arg(long)]
    pub temperature_step: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub repeat_prob: Option<f64>,
    /// External drafter command speaking line-JSON on stdin/stdout.
    #[arg(long)]
    pub drafter_cmd: Option<String>,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write per-step lattices and head distributions here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

impl RunArgs {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $($target:ident).+),* $(,)?) => {
                $(if let Some(v) = &self.$field { c.$($target).+ = v.clone().into(); })*
            };
        }
        set!(
            mode => mode,
            k => k,
            p => p,
            alpha => alpha,
            heads => heads,
            max_tokens => max_tokens,
            seed => seed,
            conditioning => conditioning,
            temperature_step => drafter.temperature_step,
            noise => drafter.noise,
            repeat_prob => drafter.repeat_prob,
        );
        if let Some(v) = self.order {
            c.order = Some(v);
        }
        if let Some(v) = &self.base {
            c.base = Some(v.clone());
        }
        if let Some(v) = &self.rescorer {
            c.rescorer = Some(v.clone());
        }
        if let Some(v) = &self.prompts {
            c.prompts = Some(v.clone());
        }
        if let Some(v) = self.max_prompts {
            c.max_prompts = Some(v);
        }
        if let Some(v) = self.context_len {
            c.drafter.context_len = (v > 0).then_some(v);
        }
        if let Some(v) = &self.drafter_cmd {
            c.drafter.command = Some(v.clone());
        }
        if let Some(v) = &self.out {
            c.output.report = Some(v.clone());
        }
        if let Some(v) = &self.trace {
            c.output.trace = Some(v.clone());
        }
        if self.no_fidelity_check {
            c.check_fidelity = false;
        }
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let c = RunConfig { mode: Mode::Pbest, p: 16, rescorer: Some("r.arpa".into()), ..RunConfig::default() };
        let text = toml::to_string(&c).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let c: RunConfig = toml::from_str("mode = \"ngram\"\nk = 4\n[drafter]\nnoise = 0.0\n").unwrap();
        assert_eq!(c.mode, Mode::Ngram);
        assert_eq!(c.k, 4);
        assert_eq!(c.heads, 8);
        assert_eq!(c.drafter.noise, 0.0);
        assert_eq!(c.drafter.context_len, Some(1));
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(toml::from_str::<RunConfig>("bogus = 1\n").is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "mode = \"pbest\"\np = 4\nbase = \"b.arpa\"\nprompts = \"p.txt\"\n").unwrap();
        let args = RunArgs { config: Some(path), p: Some(16), context_len: Some(0), ..RunArgs::default() };
        let c = args.resolve().unwrap();
        assert_eq!(c.mode, Mode::Pbest);
        assert_eq!(c.p, 16);
        assert_eq!(c.drafter.context_len, None);
    }

    #[test]
    fn mode_requirements() {
        let base = RunArgs { base: Some("b".into()), prompts: Some("p".into()), ..RunArgs::default() };
        assert!(base.resolve().is_ok());
        assert!(RunArgs { mode: Some(Mode::Ngram), ..base.clone() }.resolve().is_err());
        assert!(RunArgs { p: Some(0), ..base.clone() }.resolve().is_err());
        assert!(RunArgs { alpha: Some(-1.0), ..base.clone() }.resolve().is_err());
        assert!(RunArgs { base: None, ..base }.resolve().is_err());
    }
}
