use std::io::Read;
use std::path::Path;

use anyhow::{bail, Context, Result};
use glucast_core::models::{load_checkpoint, ForecasterModel};
use glucast_core::Scalar;

use super::{load, peek_scalar, usage, Loaded, ScalarKind};
use crate::ForecastArgs;

/// Readings separated by whitespace or commas.
fn parse_history(text: &str) -> Result<Vec<f64>> {
    let values = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().with_context(|| format!("bad reading {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        bail!("history is empty");
    }
    Ok(values)
}

fn run<T: Scalar>(checkpoint: &Path, history: &[f64]) -> Result<Vec<f64>> {
    let m: ForecasterModel<T> = load_checkpoint(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let h: Vec<T> = history.iter().map(|&v| T::lit(v)).collect();
    Ok(m.predict(&h)?.values.iter().map(|v| v.as_f64()).collect())
}

pub fn forecast(args: &ForecastArgs) -> Result<()> {
    let Loaded { kv, base } = load(&args.common)?;
    let (checkpoint, input) = (|| -> Result<_> {
        let checkpoint = match &args.checkpoint {
            Some(p) => {
                kv.path("checkpoint", &base)?;
                p.clone()
            }
            None => kv
                .path("checkpoint", &base)?
                .ok_or_else(|| anyhow::anyhow!("no checkpoint given (use --checkpoint or the `checkpoint` key)"))?,
        };
        let from_file = kv.path("history", &base)?;
        kv.finish()?;
        Ok((checkpoint, args.input.clone().or(from_file)))
    })()
    .map_err(usage)?;

    let text = match &input {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).context("reading stdin")?;
            s
        }
    };
    let history = parse_history(&text)?;
    let values = match peek_scalar(&checkpoint)? {
        ScalarKind::F32 => run::<f32>(&checkpoint, &history)?,
        ScalarKind::F64 => run::<f64>(&checkpoint, &history)?,
    };
    for v in values {
        println!("{v:.4}");
    }
    Ok(())
}
