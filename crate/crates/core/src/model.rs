//! A trained model bundled with everything needed to segment raw text.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{read_text, split_line, CharClass, Piece, Preprocess, Setting, Vocab};
use crate::error::{Error, Result};
use crate::lattice::{Decoder, Segmentation};
use crate::slm::{checkpoint, score_bidi, ModelParams};
use crate::trainer::TrainConfig;

pub const CHECKPOINT_FILE: &str = "model.sgb";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const CONFIG_FILE: &str = "config.txt";
pub const REPORT_FILE: &str = "report.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Preprocessing and training settings, stored as `key = value` lines.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub setting: Setting,
    /// Native script for setting 4: `han`, `thai`, or a `U+XXXX-U+YYYY` list.
    pub native: String,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            setting: Setting::Raw,
            native: "han".into(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "setting" => self.setting = value.parse()?,
            "native" => {
                CharClass::parse(value)?;
                self.native = value.trim().to_string();
            }
            _ => self.train.set(key, value)?,
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(&read_text(path)?)?;
        Ok(cfg)
    }

    pub fn pairs(&self) -> BTreeMap<&'static str, String> {
        let mut m = self.train.to_pairs();
        m.insert("setting", self.setting.to_string());
        m.insert("native", self.native.clone());
        m
    }

    pub fn to_text(&self) -> String {
        self.pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn preprocess(&self) -> Preprocess {
        let mut pre = Preprocess::new(self.setting);
        pre.native = CharClass::parse(&self.native).expect("validated when set");
        pre
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub params: ModelParams,
    pub vocab: Vocab,
    pub config: RunConfig,
}

impl Model {
    pub fn new(params: ModelParams, vocab: Vocab, config: RunConfig) -> Result<Self> {
        if params.dims.vocab != vocab.len() {
            return Err(Error::Format(format!(
                "checkpoint expects {} symbols but the vocabulary has {}",
                params.dims.vocab,
                vocab.len()
            )));
        }
        Ok(Model { params, vocab, config })
    }

    /// Loads `model.sgb`, `vocab.txt` and `config.txt` from one directory.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        Self::load(&dir.join(CHECKPOINT_FILE))
    }

    /// Loads a checkpoint and the vocabulary and config stored next to it.
    pub fn load(checkpoint_path: &Path) -> Result<Self> {
        let dir = checkpoint_path.parent().unwrap_or(Path::new("."));
        let params = checkpoint::load(checkpoint_path)?;
        let vocab = Vocab::load(&dir.join(VOCAB_FILE))?;
        let config_path = dir.join(CONFIG_FILE);
        let config = if config_path.exists() {
            RunConfig::from_file(&config_path)?
        } else {
            RunConfig::default()
        };
        Model::new(params, vocab, config)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        checkpoint::save(&self.params, &dir.join(CHECKPOINT_FILE))?;
        self.vocab.save(&dir.join(VOCAB_FILE))?;
        let p = dir.join(CONFIG_FILE);
        fs::write(&p, self.config.to_text()).map_err(|e| Error::io(&p, e))
    }

    pub fn t_max(&self) -> usize {
        self.config.train.t_max
    }

    /// Segments one already-encoded sentence.
    pub fn segment_ids(&self, ids: &[usize], decoder: Decoder) -> Result<Segmentation> {
        let (fwd, bwd) = score_bidi(&self.params, ids, self.t_max());
        decoder.decode(&fwd, &bwd)
    }

    /// Segments a raw line. Punctuation delimiters (settings 3 and 4) come
    /// out as words of their own; whitespace is dropped.
    pub fn segment_line(&self, line: &str, decoder: Decoder) -> Result<String> {
        let pre = self.config.preprocess();
        let mut words: Vec<String> = Vec::new();
        for piece in split_line(line, &pre) {
            match piece {
                Piece::Delimiter(c) => words.push(c.to_string()),
                Piece::Text(sentence) => {
                    let seq = self.vocab.encode(&sentence)?;
                    let seg = self.segment_ids(&seq.ids, decoder)?;
                    words.push(seg.render(&seq.raw));
                }
            }
        }
        Ok(words.join(" "))
    }

    /// Segments many lines in parallel; output order matches input order.
    pub fn segment_lines<S: AsRef<str> + Sync>(&self, lines: &[S], decoder: Decoder) -> Result<Vec<String>> {
        lines
            .par_iter()
            .map(|l| self.segment_line(l.as_ref(), decoder))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, sentences_from_text};
    use crate::slm::{Dims, ModelOptions};

    fn toy(setting: Setting) -> Model {
        let config = RunConfig {
            setting,
            ..RunConfig::default()
        };
        let sents = sentences_from_text("我从小学唱歌，毕业AB", &config.preprocess());
        let vocab = build_vocab(&sents, true);
        let params = ModelParams::init(
            Dims { vocab: vocab.len(), embed: 4, hidden: 4 },
            ModelOptions::default(),
            3,
            0.1,
        );
        Model::new(params, vocab, config).unwrap()
    }

    #[test]
    fn single_characters_pass_through() {
        let m = toy(Setting::Raw);
        assert_eq!(m.segment_line("我", Decoder::SgbA).unwrap(), "我");
    }

    #[test]
    fn delimiters_become_words() {
        let m = toy(Setting::Punctuation);
        let out = m.segment_line("唱，歌", Decoder::SgbC).unwrap();
        assert_eq!(out, "唱 ， 歌");
    }

    #[test]
    fn output_preserves_text() {
        let m = toy(Setting::Special);
        for d in [Decoder::SgbA, Decoder::SgbC, Decoder::Forward, Decoder::Backward] {
            let out = m.segment_line("我从 小学XYZ毕业。", d).unwrap();
            let joined: String = out.split(' ').collect();
            assert_eq!(joined, "我从小学XYZ毕业。");
        }
    }

    #[test]
    fn config_text_roundtrip() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("setting = 4\nnative = thai # comment\nlr=0.01\n\n").unwrap();
        assert_eq!(cfg.setting, Setting::Special);
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert!(cfg.apply_text("nonsense").is_err());
        assert!(cfg.apply_text("native = U+ZZ").is_err());
    }

    #[test]
    fn dir_roundtrip() {
        let m = toy(Setting::Raw);
        let dir = tempfile::tempdir().unwrap();
        m.save_dir(dir.path()).unwrap();
        let back = Model::load_dir(dir.path()).unwrap();
        assert_eq!(back.params, m.params);
        assert_eq!(back.vocab, m.vocab);
        assert_eq!(back.config, m.config);
    }
}
