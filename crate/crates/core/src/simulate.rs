//! Seeded Monte Carlo of synthetic literatures.
//!
//! Each replicate builds one meta-analysis of `k_studies` published null
//! studies. A study's p-value is the minimum of `hack_width` independent
//! uniforms (p-hacking); non-significant studies survive publication with
//! probability `pub_bias_rho`, and studies are generated until `k_studies`
//! survive. An optional fixed contaminant p-value is appended before
//! combining.
//!
//! # Random streams
//!
//! Replicate `i` draws from ChaCha8 keyed with the 64-bit seed
//! (little-endian in the first eight key bytes, remaining bytes zero) on
//! stream number `i`. Results therefore depend only on the seed and the
//! replicate index, never on how replicates are spread over threads.

use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combine::{dl_pool, fisher_combine, PoolMode};
use crate::error::{Error, Result};
use crate::numerics::{chi_square_quantile, normal_two_sided_critical, normal_two_sided_p};

/// Generation attempts allowed per replicate before giving up.
pub const MAX_ATTEMPTS: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub k_studies: usize,
    /// Analyses tried per study; 1 means no hacking.
    pub hack_width: u32,
    /// Publication probability of a non-significant study; 1 means no bias.
    pub pub_bias_rho: f64,
    /// Fabricated p-value appended once per replicate.
    pub contaminate_p: Option<f64>,
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
    /// Also simulate effects (se = 1) and pool them with DerSimonian–Laird.
    #[serde(default)]
    pub dl_arm: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            k_studies: 20,
            hack_width: 1,
            pub_bias_rho: 1.0,
            contaminate_p: None,
            alpha: 0.05,
            replicates: 10_000,
            seed: 0,
            dl_arm: false,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.k_studies < 1 {
            return bad("k must be >= 1".into());
        }
        if self.hack_width < 1 {
            return bad("hack-width must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.pub_bias_rho) {
            return bad(format!("rho = {} must be in [0, 1]", self.pub_bias_rho));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} must be in (0, 1)", self.alpha));
        }
        if self.replicates < 1 {
            return bad("reps must be >= 1".into());
        }
        if let Some(p) = self.contaminate_p {
            if !(p > 0.0 && p <= 1.0) {
                return bad(format!("contaminate-p = {p} must be in (0, 1]"));
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped;
    /// keys match the CLI flag names.
    pub fn apply_kv(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: lineno as u64 + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let num_err = |e: &dyn fmt::Display| err(format!("{key}: {e}"));
            match key {
                "k" | "k_studies" => self.k_studies = value.parse().map_err(|e| num_err(&e))?,
                "hack-width" | "hack_width" | "m" => {
                    self.hack_width = value.parse().map_err(|e| num_err(&e))?
                }
                "rho" | "pub_bias_rho" => self.pub_bias_rho = value.parse().map_err(|e| num_err(&e))?,
                "contaminate-p" | "contaminate_p" => {
                    self.contaminate_p = match value {
                        "" | "none" => None,
                        v => Some(v.parse().map_err(|e| num_err(&e))?),
                    }
                }
                "alpha" => self.alpha = value.parse().map_err(|e| num_err(&e))?,
                "reps" | "replicates" => self.replicates = value.parse().map_err(|e| num_err(&e))?,
                "seed" => self.seed = value.parse().map_err(|e| num_err(&e))?,
                "dl" | "dl_arm" => self.dl_arm = value.parse().map_err(|e| num_err(&e))?,
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub fisher_reject_rate: f64,
    pub dl_reject_rate: Option<f64>,
    /// Mean number of studies generated per replicate to reach `k_studies`
    /// published ones (equals `k_studies` without publication bias).
    pub mean_k_published: f64,
    pub replicates_run: usize,
    pub seed: u64,
}

/// Random stream for one replicate.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replicate);
    rng
}

/// Uniform null p-value on `(0, 1]`.
pub fn gen_null_p<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Smallest of `m` null p-values; CDF `1 - (1 - p)^m`.
pub fn gen_hacked_p<R: Rng + ?Sized>(rng: &mut R, m: u32) -> f64 {
    (0..m.max(1)).map(|_| gen_null_p(rng)).fold(1.0, f64::min)
}

/// Largest-|z| of `m` standard normal draws, sign kept.
pub fn gen_hacked_z<R: Rng + ?Sized>(rng: &mut R, m: u32) -> f64 {
    (0..m.max(1))
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .fold(0.0, |best, z| if z.abs() > best.abs() { z } else { best })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Publication {
    Published,
    Suppressed,
}

/// Significant studies are always published, others with probability `rho`.
///
/// Always consumes one uniform so that streams stay aligned across `rho`.
pub fn apply_publication_bias<R: Rng + ?Sized>(p: f64, alpha: f64, rho: f64, rng: &mut R) -> Publication {
    let u: f64 = rng.random();
    if p < alpha || u < rho {
        Publication::Published
    } else {
        Publication::Suppressed
    }
}

struct ReplicateOutcome {
    fisher_reject: bool,
    dl_reject: Option<bool>,
    generated: u64,
}

struct Prepared {
    dl_critical: f64,
    contaminant: Option<(f64, f64)>,
}

fn run_replicate(cfg: &SimulationConfig, prep: &Prepared, index: u64) -> Result<ReplicateOutcome> {
    let mut rng = replicate_rng(cfg.seed, index);
    let k = cfg.k_studies;
    let mut ps = Vec::with_capacity(k + 1);
    let mut zs = Vec::with_capacity(if cfg.dl_arm { k + 1 } else { 0 });
    let mut generated = 0u64;
    while ps.len() < k {
        generated += 1;
        if generated > MAX_ATTEMPTS {
            return Err(Error::Exhausted(format!(
                "replicate {index}: fewer than {k} studies published after {MAX_ATTEMPTS} attempts \
                 (rho = {}, alpha = {})",
                cfg.pub_bias_rho, cfg.alpha
            )));
        }
        let (p, z) = if cfg.dl_arm {
            let z = gen_hacked_z(&mut rng, cfg.hack_width);
            (normal_two_sided_p(z)?, z)
        } else {
            (gen_hacked_p(&mut rng, cfg.hack_width), 0.0)
        };
        if apply_publication_bias(p, cfg.alpha, cfg.pub_bias_rho, &mut rng) == Publication::Published {
            ps.push(p);
            if cfg.dl_arm {
                zs.push(z);
            }
        }
    }
    if let Some((p, z)) = prep.contaminant {
        ps.push(p);
        zs.push(z);
    }
    let fisher_reject = fisher_combine(&ps)?.significant(cfg.alpha);
    let dl_reject = if cfg.dl_arm {
        let ses = vec![1.0; zs.len()];
        Some(dl_pool(&zs, &ses, PoolMode::Random)?.excludes_zero(prep.dl_critical))
    } else {
        None
    };
    Ok(ReplicateOutcome {
        fisher_reject,
        dl_reject,
        generated,
    })
}

/// Runs the experiment on the current rayon pool.
pub fn run_monte_carlo(cfg: &SimulationConfig) -> Result<SimulationResult> {
    cfg.validate()?;
    let prep = Prepared {
        dl_critical: normal_two_sided_critical(cfg.alpha)?,
        contaminant: match cfg.contaminate_p {
            None => None,
            Some(p) if p >= 1.0 => Some((p, 0.0)),
            Some(p) => Some((p, chi_square_quantile(p, 1)?.sqrt())),
        },
    };
    let outcomes = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|i| run_replicate(cfg, &prep, i))
        .collect::<Result<Vec<_>>>()?;

    let n = outcomes.len() as f64;
    let fisher_hits = outcomes.iter().filter(|o| o.fisher_reject).count();
    let dl_hits = outcomes.iter().filter(|o| o.dl_reject == Some(true)).count();
    let generated: u64 = outcomes.iter().map(|o| o.generated).sum();
    Ok(SimulationResult {
        fisher_reject_rate: fisher_hits as f64 / n,
        dl_reject_rate: cfg.dl_arm.then(|| dl_hits as f64 / n),
        mean_k_published: generated as f64 / n,
        replicates_run: outcomes.len(),
        seed: cfg.seed,
    })
}

/// Runs on a dedicated pool of `threads` workers (0 = rayon's default).
pub fn run_monte_carlo_threads(cfg: &SimulationConfig, threads: usize) -> Result<SimulationResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_monte_carlo(cfg))
}
