//! Line-delimited trajectory dumps.
//!
//! ```text
//! # fcsrl-trajectories v1
//! 0.1,0.2;1,0;-0.01;0;0;0
//! 0.2,0.2;0,1;1;1;1;0
//! 0.2,0.3
//!
//! ```
//!
//! Each transition line holds six `;`-separated fields: state CSV, action
//! CSV, reward, cost, done, truncated. An episode ends with a line carrying
//! only the final next-state CSV. Blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::trajectory::{Cost, Trajectory, Transition};
use crate::error::{Error, Result};

pub const TRAJECTORY_HEADER: &str = "# fcsrl-trajectories v1";

fn csv(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn format_trajectories(trajs: &[Trajectory]) -> String {
    let mut out = String::new();
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for traj in trajs {
        for t in traj.transitions() {
            let _ = writeln!(
                out,
                "{};{};{};{};{};{}",
                csv(&t.state),
                csv(&t.action),
                t.reward,
                t.cost.value(),
                flag(t.done),
                flag(t.truncated)
            );
        }
        let last = traj.transitions().last().expect("non-empty trajectory");
        let _ = writeln!(out, "{}", csv(&last.next_state));
        out.push('\n');
    }
    out
}

fn parse_csv(field: &str, line: usize) -> Result<Vec<f64>> {
    if field.trim().is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(',')
        .map(|x| {
            x.trim().parse::<f64>().map_err(|e| Error::Parse {
                line,
                msg: format!("bad number {x:?}: {e}"),
            })
        })
        .collect()
}

fn parse_flag(field: &str, line: usize) -> Result<bool> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Parse {
            line,
            msg: format!("flag must be 0 or 1, got {other:?}"),
        }),
    }
}

pub fn parse_trajectories(text: &str) -> Result<Vec<Trajectory>> {
    struct Pending {
        state: Vec<f64>,
        action: Vec<f64>,
        reward: f64,
        cost: Cost,
        done: bool,
        truncated: bool,
    }
    let mut trajs = Vec::new();
    let mut pending: Vec<Pending> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(';').collect();
        match fields.len() {
            6 => {
                let reward = fields[2].trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: line_no,
                    msg: format!("bad reward: {e}"),
                })?;
                let cost_v = fields[3].trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: line_no,
                    msg: format!("bad cost: {e}"),
                })?;
                let cost = Cost::from_f64(cost_v).map_err(|e| Error::Parse {
                    line: line_no,
                    msg: e.to_string(),
                })?;
                pending.push(Pending {
                    state: parse_csv(fields[0], line_no)?,
                    action: parse_csv(fields[1], line_no)?,
                    reward,
                    cost,
                    done: parse_flag(fields[4], line_no)?,
                    truncated: parse_flag(fields[5], line_no)?,
                });
            }
            1 => {
                if pending.is_empty() {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: "final state without transitions".into(),
                    });
                }
                let final_state = parse_csv(fields[0], line_no)?;
                let n = pending.len();
                let mut transitions = Vec::with_capacity(n);
                for (j, p) in pending.drain(..).enumerate() {
                    transitions.push(Transition {
                        state: p.state,
                        action: p.action,
                        reward: p.reward,
                        cost: p.cost,
                        next_state: Vec::new(),
                        done: p.done,
                        truncated: p.truncated,
                    });
                    if j > 0 {
                        transitions[j - 1].next_state = transitions[j].state.clone();
                    }
                }
                transitions[n - 1].next_state = final_state;
                trajs.push(Trajectory::new(transitions).map_err(|e| Error::Parse {
                    line: line_no,
                    msg: e.to_string(),
                })?);
            }
            n => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected 6 fields or a final state, got {n}"),
                })
            }
        }
    }
    if !pending.is_empty() {
        return Err(Error::Parse {
            line: text.lines().count(),
            msg: "trajectory missing its final state line".into(),
        });
    }
    Ok(trajs)
}

pub fn save_trajectories(path: &Path, trajs: &[Trajectory]) -> Result<()> {
    fs::write(path, format_trajectories(trajs)).map_err(|e| Error::io(path, e))
}

pub fn load_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectories(&text)
}
