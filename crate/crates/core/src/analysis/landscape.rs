use serde::{Deserialize, Serialize};

use crate::agent::{cost_expectation, AgentState, Flavor};
use crate::envs::PointHazard2DEnv;
use crate::error::{Error, Result};
use crate::nn::{hcat, Mat};
use crate::repr::{HeadVariant, ReprStack};

/// What a landscape cell holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandscapeValue {
    /// `E[f(g^(m)(s))]` of a feasibility head.
    TargetFeasibility,
    /// `E[f(g^(m)(s))]` of a cost-value head.
    TargetCostValue,
    /// Expected cost critic at the policy's action (off-policy) or of the
    /// state value critic (on-policy).
    CostCritic,
}

impl LandscapeValue {
    pub fn file_name(self) -> &'static str {
        match self {
            LandscapeValue::TargetFeasibility => "target_feasibility.csv",
            LandscapeValue::TargetCostValue => "target_cost_value.csv",
            LandscapeValue::CostCritic => "cost_critic.csv",
        }
    }
}

/// Row-major grid: `values[j * xs.len() + i]` sits at `(xs[i], ys[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub kind: LandscapeValue,
    pub checkpoint: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
}

impl LandscapeGrid {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.xs.len() + i]
    }

    pub fn cells(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.ys
            .iter()
            .flat_map(move |&y| self.xs.iter().map(move |&x| [x, y]))
            .zip(self.values.iter().copied())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,value\n");
        for ([x, y], v) in self.cells() {
            s.push_str(&format!("{x},{y},{v}\n"));
        }
        s
    }

    /// Means over cells whose centers lie inside some hazard and over the
    /// rest.
    pub fn hazard_contrast(&self, env: &PointHazard2DEnv) -> HazardContrast {
        let (mut hs, mut hn, mut fs, mut fnn) = (0.0, 0usize, 0.0, 0usize);
        for (p, v) in self.cells() {
            if env.in_hazard(p) {
                hs += v;
                hn += 1;
            } else {
                fs += v;
                fnn += 1;
            }
        }
        let mean = |s: f64, n: usize| if n == 0 { f64::NAN } else { s / n as f64 };
        HazardContrast {
            hazard_mean: mean(hs, hn),
            free_mean: mean(fs, fnn),
            hazard_cells: hn,
            free_cells: fnn,
        }
    }

    pub fn summary(&self) -> serde_json::Value {
        let n = self.values.len() as f64;
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        serde_json::json!({
            "kind": self.kind,
            "checkpoint": self.checkpoint,
            "nx": self.xs.len(),
            "ny": self.ys.len(),
            "mean": self.values.iter().sum::<f64>() / n,
            "min": min,
            "max": max,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardContrast {
    pub hazard_mean: f64,
    pub free_mean: f64,
    pub hazard_cells: usize,
    pub free_cells: usize,
}

impl HazardContrast {
    pub fn gap(&self) -> f64 {
        self.hazard_mean - self.free_mean
    }
}

/// `resolution` cell centers per axis across the arena.
pub fn grid_axis(half_width: f64, resolution: usize) -> Vec<f64> {
    let w = 2.0 * half_width / resolution as f64;
    (0..resolution).map(|i| -half_width + (i as f64 + 0.5) * w).collect()
}

/// States `[x, y, rest...]` at every cell, row-major.
fn grid_states(env: &PointHazard2DEnv, resolution: usize, rest: &[f64]) -> Result<(Vec<f64>, Mat)> {
    if resolution == 0 {
        return Err(Error::InvalidArgument("landscape resolution must be positive".into()));
    }
    if rest.len() != 2 {
        return Err(Error::shape("2 non-positional components", rest.len()));
    }
    let axis = grid_axis(env.half_width, resolution);
    let n = resolution * resolution;
    let mut m = Mat::zeros((n, 4));
    for (j, &y) in axis.iter().enumerate() {
        for (i, &x) in axis.iter().enumerate() {
            let mut row = m.row_mut(j * resolution + i);
            row[0] = x;
            row[1] = y;
            row[2] = rest[0];
            row[3] = rest[1];
        }
    }
    Ok((axis, m))
}

fn finish(kind: LandscapeValue, checkpoint: &str, axis: Vec<f64>, values: Vec<f64>) -> Result<LandscapeGrid> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("landscape value".into()));
    }
    Ok(LandscapeGrid {
        kind,
        checkpoint: checkpoint.to_string(),
        ys: axis.clone(),
        xs: axis,
        values,
    })
}

/// Head readout through the target encoder with the velocity (or whatever
/// `rest` holds) fixed.
pub fn landscape_head(stack: &ReprStack, env: &PointHazard2DEnv, resolution: usize, rest: &[f64], checkpoint: &str) -> Result<LandscapeGrid> {
    let (axis, states) = grid_states(env, resolution, rest)?;
    let kind = match stack.config.head {
        HeadVariant::Feasibility => LandscapeValue::TargetFeasibility,
        HeadVariant::CostValue => LandscapeValue::TargetCostValue,
    };
    finish(kind, checkpoint, axis, stack.target_readout(&states)?)
}

/// Expected cost critic over the grid.
pub fn landscape_cost_critic(agent: &AgentState, env: &PointHazard2DEnv, resolution: usize, rest: &[f64], checkpoint: &str) -> Result<LandscapeGrid> {
    let (axis, states) = grid_states(env, resolution, rest)?;
    let x = agent.inputs(&states)?;
    let input = match agent.flavor {
        Flavor::Offpolicy => hcat(&x, &agent.actor.forward(&x)?),
        Flavor::Onpolicy => x,
    };
    let values = cost_expectation(&agent.cost_critic, &agent.cost_bins, &input)?;
    finish(LandscapeValue::CostCritic, checkpoint, axis, values)
}
