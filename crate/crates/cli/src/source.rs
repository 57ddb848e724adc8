//! Where a path comes from: a file or one of the generators.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use osk_core::hamgen::{
    integrate_conjoined_basis, random_hamiltonian, random_lagrangian_plane, rotation_path,
    HamiltonianSpec,
};
use osk_core::lagrangian::{vertical_plane, LagrangianFrame, SampledLagrangianPath};
use osk_core::pathio::{load_frame, load_path};
use osk_core::Tolerances;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    /// Blocks `(sin(w t), cos(w t))`.
    Rotation,
    /// Conjoined basis of the system in --hamiltonian.
    Flow,
    /// Conjoined basis of a random trigonometric system.
    Random,
}

#[derive(Args, Debug, Clone)]
pub struct Source {
    /// Path file (JSON).
    #[arg(long, conflicts_with = "gen")]
    pub path: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub gen: Option<GenKind>,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Rotation speeds; a single value is used for every block.
    #[arg(long, num_args = 1.., default_values_t = [1.0], allow_negative_numbers = true)]
    pub speed: Vec<f64>,
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true)]
    pub interval: Option<Vec<f64>>,
    /// Grid nodes for rotation paths.
    #[arg(long, default_value_t = 129)]
    pub nodes: usize,
    /// Hamiltonian spec file (JSON).
    #[arg(long)]
    pub hamiltonian: Option<PathBuf>,
    /// Initial frame at `a`: `e`, `random`, or a frame file.
    #[arg(long, default_value = "e")]
    pub init: String,
    /// Integration steps (default: 40 per unit time).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Random systems are nonnegative (monotone paths).
    #[arg(long)]
    pub monotone: bool,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

pub struct Loaded {
    pub path: SampledLagrangianPath,
    /// How the path was made, embedded into generated files.
    pub meta: Value,
}

fn read(p: &PathBuf) -> CliResult<String> {
    std::fs::read_to_string(p).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))
}

impl Source {
    pub fn interval(&self) -> CliResult<(f64, f64)> {
        match &self.interval {
            Some(v) if v.len() == 2 && v[0] < v[1] => Ok((v[0], v[1])),
            Some(v) => Err(CliError::Validation(format!("bad interval {v:?}"))),
            None => Ok((0.0, 1.5 * std::f64::consts::PI)),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn steps(&self, interval: (f64, f64)) -> usize {
        self.steps
            .unwrap_or_else(|| (40.0 * (interval.1 - interval.0)).ceil() as usize)
    }

    /// The system of a flow or random source.
    pub fn hamiltonian(&self, rng: &mut ChaCha8Rng) -> CliResult<HamiltonianSpec> {
        match (&self.hamiltonian, self.gen) {
            (Some(p), _) => Ok(HamiltonianSpec::from_json(&read(p)?)?),
            (None, Some(GenKind::Random)) | (None, None) => {
                let iv = self.interval()?;
                Ok(random_hamiltonian(rng, self.n, iv, self.monotone))
            }
            (None, _) => Err(CliError::Validation("--gen flow needs --hamiltonian".into())),
        }
    }

    fn init(&self, n: usize, rng: &mut ChaCha8Rng, tol: &Tolerances) -> CliResult<LagrangianFrame> {
        Ok(match self.init.as_str() {
            "e" => vertical_plane(n),
            "random" => random_lagrangian_plane(rng, n, 0.3, tol),
            file => load_frame(&read(&file.into())?, tol)?,
        })
    }

    pub fn load(&self, tol: &Tolerances) -> CliResult<Loaded> {
        if let Some(p) = &self.path {
            let path = load_path(&read(p)?, tol)?;
            return Ok(Loaded {
                path,
                meta: json!({"source": p.display().to_string()}),
            });
        }
        let kind = self
            .gen
            .ok_or_else(|| CliError::Validation("give --path or --gen".into()))?;
        let iv = self.interval()?;
        let mut rng = self.rng();
        match kind {
            GenKind::Rotation => {
                let speeds = match self.speed.len() {
                    1 => vec![self.speed[0]; self.n],
                    _ => self.speed.clone(),
                };
                let path = rotation_path(&speeds, iv, self.nodes, tol)?;
                Ok(Loaded {
                    path,
                    meta: json!({"generator": "rotation", "speeds": speeds, "interval": [iv.0, iv.1]}),
                })
            }
            GenKind::Flow | GenKind::Random => {
                let spec = self.hamiltonian(&mut rng)?;
                let init = self.init(spec.n, &mut rng, tol)?;
                let steps = self.steps((spec.interval[0], spec.interval[1]));
                let path = integrate_conjoined_basis(&spec, &init, steps, tol)?;
                Ok(Loaded {
                    path,
                    meta: json!({
                        "generator": if kind == GenKind::Flow { "flow" } else { "random" },
                        "seed": self.seed,
                        "steps": steps,
                        "hamiltonian": serde_json::to_value(&spec).unwrap_or(Value::Null),
                    }),
                })
            }
        }
    }
}
