//! Attacker goals: four adversarial target trajectories and four power bands.

use serde::{Deserialize, Serialize};

use super::ScenarioError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTarget {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedBand {
    pub name: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Increasing and decreasing linear ramps between 0 and 1, a constant 0.5,
/// and a zigzag alternating 0.25 / 0.75.
pub fn catalog_targets(horizon: usize) -> Result<Vec<NamedTarget>, ScenarioError> {
    if horizon < 2 {
        return Err(ScenarioError::Config(format!(
            "target catalog needs a horizon of at least 2, got {horizon}"
        )));
    }
    let last = (horizon - 1) as f64;
    let increasing: Vec<f64> = (0..horizon).map(|i| i as f64 / last).collect();
    let decreasing: Vec<f64> = increasing.iter().rev().copied().collect();
    let zigzag = (0..horizon)
        .map(|i| if i % 2 == 0 { 0.25 } else { 0.75 })
        .collect();
    Ok(vec![
        NamedTarget {
            name: "increasing".into(),
            values: increasing,
        },
        NamedTarget {
            name: "decreasing".into(),
            values: decreasing,
        },
        NamedTarget {
            name: "constant".into(),
            values: vec![0.5; horizon],
        },
        NamedTarget {
            name: "zigzag".into(),
            values: zigzag,
        },
    ])
}

pub fn catalog_bands(horizon: usize) -> Result<Vec<NamedBand>, ScenarioError> {
    if horizon < 2 {
        return Err(ScenarioError::Config(format!(
            "band catalog needs a horizon of at least 2, got {horizon}"
        )));
    }
    Ok([
        ("low", 0.0, 0.25),
        ("medium", 0.25, 0.5),
        ("high", 0.5, 0.75),
        ("very_high", 0.75, 1.0),
    ]
    .into_iter()
    .map(|(name, a, b)| NamedBand {
        name: name.into(),
        lower: vec![a; horizon],
        upper: vec![b; horizon],
    })
    .collect())
}
