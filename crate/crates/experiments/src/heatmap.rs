//! Encoder outputs on a regular grid over the unit box.

use anyhow::{bail, Context, Result};
use gmbound::nn::MlpNetwork;
use gmbound::Mat;
use std::path::Path;

/// One grid point and the encoder value there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridValue {
    pub x0: f64,
    pub x1: f64,
    pub value: f64,
}

/// `resolution` evenly spaced points per axis on [0, 1], row-major in x1.
pub fn unit_grid(resolution: usize) -> Mat {
    let step = if resolution > 1 {
        1.0 / (resolution - 1) as f64
    } else {
        0.0
    };
    Mat::from_fn(resolution * resolution, 2, |r, c| {
        let (i, j) = (r / resolution, r % resolution);
        if c == 0 {
            j as f64 * step
        } else {
            i as f64 * step
        }
    })
}

pub fn feature_heatmap(encoder: &MlpNetwork, resolution: usize) -> Result<Vec<GridValue>> {
    if encoder.input_dim() != 2 {
        bail!(
            "heatmaps need a 2-D input encoder, got input dimension {}",
            encoder.input_dim()
        );
    }
    if encoder.output_dim() != 1 {
        bail!("heatmaps need a 1-D feature, got {}", encoder.output_dim());
    }
    if resolution == 0 {
        bail!("resolution must be positive");
    }
    let grid = unit_grid(resolution);
    let out = encoder.forward_values(&grid)?;
    Ok((0..grid.nrows())
        .map(|r| GridValue {
            x0: grid[(r, 0)],
            x1: grid[(r, 1)],
            value: out[(r, 0)],
        })
        .collect())
}

pub fn write_heatmap_csv(path: &Path, grid: &[GridValue]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["x0", "x1", "value"])?;
    for g in grid {
        w.write_record([g.x0.to_string(), g.x1.to_string(), g.value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use gmbound::nn::Activation;

    #[test]
    fn constant_encoder_gives_constant_grid() {
        let mut enc = MlpNetwork::zeros(&[2, 4, 1], Activation::Tanh, Activation::Tanh).unwrap();
        enc.params_mut()[3][(0, 0)] = 0.3;
        let g = feature_heatmap(&enc, 50).unwrap();
        assert_eq!(g.len(), 2500);
        assert!(g.iter().all(|v| v.value == 0.3f64.tanh()));
        let bad = MlpNetwork::zeros(&[3, 1], Activation::Tanh, Activation::Tanh).unwrap();
        assert!(feature_heatmap(&bad, 5).is_err());
    }
}
