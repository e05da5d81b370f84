//! Effective run settings: defaults, then an optional `key = value` file,
//! then command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use modnet::loss::LossConfig;
use modnet::model::{DenoiseConfig, ModelConfig};
use modnet::train::TrainConfig;

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Train,
    Denoise,
    Eval,
    Gradcheck,
}

fn list<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn model_defaults(m: &ModelConfig) -> Vec<(&'static str, String)> {
    vec![
        ("n_patch", m.n_patch.to_string()),
        ("radii", list(&m.radii_frac)),
        ("encoder_widths", list(&m.encoder_widths)),
        ("fc1_width", m.fc1_width.to_string()),
        ("weight_hidden", m.weight_hidden.to_string()),
        ("decoder_widths", list(&m.decoder_widths)),
    ]
}

fn train_defaults(t: &TrainConfig, preset: &str) -> Vec<(&'static str, String)> {
    let l = &t.loss;
    let mut out = vec![
        ("preset", preset.to_string()),
        ("epochs", t.epochs.to_string()),
        ("batch_size", t.batch_size.to_string()),
        ("lr_start", t.lr_start.to_string()),
        ("lr_end", t.lr_end.to_string()),
        ("patches_per_shape", t.patches_per_shape_per_epoch.to_string()),
        ("clip_norm", t.clip_norm.map_or("none".into(), |c| c.to_string())),
        ("alpha", l.alpha.to_string()),
        ("beta", l.beta.to_string()),
        ("support_angle_deg", l.support_angle_deg.to_string()),
        ("m_final", l.m_final.to_string()),
        ("r_final_frac", l.r_final_frac.to_string()),
    ];
    out.extend(model_defaults(&t.model));
    out
}

fn defaults(cmd: Command, preset: &str) -> Vec<(&'static str, String)> {
    let mut out = vec![("seed", "0".to_string()), ("threads", "0".to_string())];
    match cmd {
        Command::Synth => out.extend([
            ("shapes", "cube,icosahedron,cylinder".to_string()),
            ("points", "2000".to_string()),
            ("noise", "gaussian:0.005,0.01,0.015".to_string()),
            ("split", "train".to_string()),
        ]),
        Command::Train => {
            let t = if preset == "paper" { TrainConfig::paper() } else { TrainConfig::default() };
            out.extend(train_defaults(&t, preset));
        }
        Command::Denoise => {
            out.extend(model_defaults(&ModelConfig::default()));
            out.push(("denoise_batch", DenoiseConfig::default().batch_size.to_string()));
        }
        Command::Eval => out.push(("mse_neighbors", modnet::metrics::DEFAULT_MSE_NEIGHBORS.to_string())),
        Command::Gradcheck => {
            out.extend([
                ("trials", "200".to_string()),
                ("batches", "5".to_string()),
                ("gradcheck_batch", "4".to_string()),
            ]);
            out.extend(model_defaults(&ModelConfig::default()));
        }
    }
    out
}

fn is_known(key: &str) -> bool {
    [Command::Synth, Command::Train, Command::Denoise, Command::Eval, Command::Gradcheck]
        .iter()
        .any(|&c| defaults(c, "desk").iter().any(|(k, _)| *k == key))
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("config line {}: expected `key = value`", n + 1)))?;
        let k = k.trim();
        if !is_known(k) {
            return Err(UsageError(format!("config line {}: unknown key `{k}`", n + 1)).into());
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Settings {
    values: BTreeMap<&'static str, String>,
}

impl Settings {
    /// Flags are `(key, value)` pairs that override the config file.
    pub fn resolve(cmd: Command, config: Option<&Path>, flags: &[(&str, Option<String>)], set: &[String]) -> Result<Self> {
        let file = match config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                parse_config_text(&text)?
            }
            None => Vec::new(),
        };
        let mut overrides: Vec<(String, String)> = file;
        for s in set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| UsageError(format!("--set expects key=value, got `{s}`")))?;
            let k = k.trim();
            if !is_known(k) {
                return Err(UsageError(format!("unknown key `{k}`")).into());
            }
            overrides.push((k.to_string(), v.trim().to_string()));
        }
        for (k, v) in flags {
            if let Some(v) = v {
                overrides.push((k.to_string(), v.clone()));
            }
        }
        let preset = overrides
            .iter()
            .rev()
            .find(|(k, _)| k == "preset")
            .map_or("desk".to_string(), |(_, v)| v.clone());
        if preset != "desk" && preset != "paper" {
            return Err(UsageError(format!("preset must be `desk` or `paper`, got `{preset}`")).into());
        }
        let mut values: BTreeMap<&'static str, String> = defaults(cmd, &preset).into_iter().collect();
        for (k, v) in overrides {
            // keys meant for other commands are allowed in shared config files
            if let Some(slot) = values.iter_mut().find(|(key, _)| **key == k).map(|(_, v)| v) {
                *slot = v;
            }
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("setting `{key}` not defined"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .parse()
            .map_err(|e| UsageError(format!("bad value for `{key}`: {e}")).into())
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .split(',')
            .map(|s| s.trim().parse().map_err(|e| UsageError(format!("bad value in `{key}`: {e}")).into()))
            .collect()
    }

    /// One `key = value` line per effective setting, loadable with `--config`.
    pub fn echo(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let radii: Vec<f64> = self.get_list("radii")?;
        let radii_frac: [f64; 3] = radii
            .try_into()
            .map_err(|_| UsageError("radii needs exactly three values".into()))?;
        let decoder: Vec<usize> = self.get_list("decoder_widths")?;
        let decoder_widths: [usize; 2] = decoder
            .try_into()
            .map_err(|_| UsageError("decoder_widths needs exactly two values".into()))?;
        let cfg = ModelConfig {
            encoder_widths: self.get_list("encoder_widths")?,
            fc1_width: self.get("fc1_width")?,
            weight_hidden: self.get("weight_hidden")?,
            decoder_widths,
            n_patch: self.get("n_patch")?,
            radii_frac,
        };
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let clip = match self.raw("clip_norm") {
            "none" => None,
            _ => Some(self.get("clip_norm")?),
        };
        let cfg = TrainConfig {
            epochs: self.get("epochs")?,
            batch_size: self.get("batch_size")?,
            lr_start: self.get("lr_start")?,
            lr_end: self.get("lr_end")?,
            seed: self.get("seed")?,
            model: self.model_config()?,
            loss: LossConfig {
                alpha: self.get("alpha")?,
                beta: self.get("beta")?,
                support_angle_deg: self.get("support_angle_deg")?,
                m_final: self.get("m_final")?,
                r_final_frac: self.get("r_final_frac")?,
            },
            patches_per_shape_per_epoch: self.get("patches_per_shape")?,
            clip_norm: clip,
        };
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_unknown_keys_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nbeta = 0.5\nepochs = 3 # trailing\nn_patch = 64\n").unwrap();
        let s = Settings::resolve(Command::Train, Some(&path), &[("beta", Some("0".into()))], &[]).unwrap();
        assert_eq!(s.raw("beta"), "0");
        assert_eq!(s.raw("epochs"), "3");
        assert_eq!(s.train_config().unwrap().model.n_patch, 64);
        std::fs::write(&path, "betta = 1\n").unwrap();
        let err = Settings::resolve(Command::Train, Some(&path), &[], &[]).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
        assert!(err.to_string().contains("betta"));
    }

    #[test]
    fn echo_reloads_to_the_same_settings() {
        let s = Settings::resolve(Command::Train, None, &[("alpha", Some("0.5".into()))], &[]).unwrap();
        let text = s.echo();
        assert!(text.contains("alpha = 0.5\n"));
        assert!(text.contains("beta = 0.2\n"));
        assert!(text.contains("radii = 0.03,0.04,0.05\n"));
        assert!(text.contains("n_patch = 400\n"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("echo.cfg");
        std::fs::write(&path, &text).unwrap();
        let t = Settings::resolve(Command::Train, Some(&path), &[], &[]).unwrap();
        assert_eq!(t.echo(), text);
        assert_eq!(t.train_config().unwrap(), s.train_config().unwrap());
    }

    #[test]
    fn paper_preset_switches_schedule() {
        let s = Settings::resolve(Command::Train, None, &[("preset", Some("paper".into()))], &[]).unwrap();
        let cfg = s.train_config().unwrap();
        assert_eq!((cfg.lr_start, cfg.lr_end, cfg.epochs, cfg.batch_size), (1e-4, 1e-7, 40, 200));
        assert_eq!(cfg.clip_norm, None);
    }
}
