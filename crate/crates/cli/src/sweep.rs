//! Parsing of `--sweep` grids such as `alpha=0.1:0.9:0.1,m=2:11:1`.

use anyhow::{anyhow, bail, Result};
use vtprune::PruneConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Tau,
    Gamma,
    Beta,
    Alpha,
    MLayer,
    KKnn,
}

impl Param {
    fn parse(key: &str) -> Result<Self> {
        Ok(match key {
            "tau" => Self::Tau,
            "gamma" => Self::Gamma,
            "beta" => Self::Beta,
            "alpha" => Self::Alpha,
            "m" | "m_layer" => Self::MLayer,
            "k" | "k_knn" => Self::KKnn,
            _ => bail!("unknown sweep parameter {key:?}"),
        })
    }

    fn is_integer(self) -> bool {
        matches!(self, Self::MLayer | Self::KKnn)
    }

    pub fn apply(self, cfg: &mut PruneConfig, v: f64) {
        match self {
            Self::Tau => cfg.tau = v,
            Self::Gamma => cfg.gamma = v,
            Self::Beta => cfg.beta = v,
            Self::Alpha => cfg.alpha = v,
            Self::MLayer => cfg.m_layer = v as usize,
            Self::KKnn => cfg.k_knn = v as usize,
        }
    }
}

/// `start:stop:step` inclusive of `stop` (up to rounding), or a single value.
fn parse_range(text: &str, integer: bool) -> Result<Vec<f64>> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| anyhow!("bad number {p:?} in {text:?}")))
        .collect::<Result<_>>()?;
    let values = match parts.as_slice() {
        [v] => vec![*v],
        [start, stop, step] => {
            if step.is_nan() || *step <= 0.0 || stop < start {
                bail!("range {text:?} needs step > 0 and stop >= start");
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
            // Round to 12 decimals so 0.1 steps print as 0.3, not 0.30000000000000004.
            (0..n)
                .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
                .collect()
        }
        _ => bail!("range {text:?} must be `value` or `start:stop:step`"),
    };
    if integer && values.iter().any(|v| v.fract() != 0.0 || *v < 0.0) {
        bail!("range {text:?} must hold non-negative integers");
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub param: Param,
    pub values: Vec<f64>,
}

pub fn parse_sweep(text: &str) -> Result<Vec<Axis>> {
    let mut axes: Vec<Axis> = Vec::new();
    for item in text.split(',').filter(|s| !s.trim().is_empty()) {
        let (key, range) = item
            .split_once('=')
            .ok_or_else(|| anyhow!("sweep item {item:?} must look like key=start:stop:step"))?;
        let param = Param::parse(key.trim())?;
        if axes.iter().any(|a| a.param == param) {
            bail!("sweep parameter {key:?} given twice");
        }
        axes.push(Axis {
            param,
            values: parse_range(range, param.is_integer())?,
        });
    }
    if axes.is_empty() {
        bail!("empty sweep");
    }
    Ok(axes)
}

/// Cartesian product of the axes applied to `base`, first axis slowest.
pub fn expand(base: &PruneConfig, axes: &[Axis]) -> Vec<PruneConfig> {
    let mut out = vec![base.clone()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|cfg| {
                axis.values.iter().map(move |&v| {
                    let mut c = cfg.clone();
                    axis.param.apply(&mut c, v);
                    c
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_documented_grid() {
        let axes = parse_sweep("alpha=0.1:0.9:0.1,m=2:11:1").unwrap();
        assert_eq!(axes[0].param, Param::Alpha);
        assert_eq!(axes[0].values, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]);
        assert_eq!(axes[1].param, Param::MLayer);
        assert_eq!(axes[1].values, (2..=11).map(f64::from).collect::<Vec<_>>());
        let grid = expand(&PruneConfig::default(), &axes);
        assert_eq!(grid.len(), 90);
        assert_eq!((grid[0].alpha, grid[0].m_layer), (0.1, 2));
        assert_eq!((grid[1].alpha, grid[1].m_layer), (0.1, 3));
        assert_eq!((grid[89].alpha, grid[89].m_layer), (0.9, 11));
    }

    #[test]
    fn single_values_and_errors() {
        assert_eq!(parse_sweep("tau=2").unwrap()[0].values, vec![2.0]);
        assert!(parse_sweep("").is_err());
        assert!(parse_sweep("foo=1").is_err());
        assert!(parse_sweep("alpha").is_err());
        assert!(parse_sweep("alpha=0.5:0.1:0.1").is_err());
        assert!(parse_sweep("alpha=0.1:0.5:0").is_err());
        assert!(parse_sweep("m=1.5").is_err());
        assert!(parse_sweep("alpha=0.1,alpha=0.2").is_err());
    }
}
