use serde::{Deserialize, Serialize};

use crate::error::{shape, Result};
use crate::fields::{holder_norm, lp_diff, Grid, GridField, Power, Trajectory};
use crate::Scalar;

/// Geometry of an exceedance event; each kind triggers when its distance
/// reaches `δ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventKind<T> {
    /// `‖u(T) − g‖₂`.
    TerminalBall { center: GridField<T> },
    /// `sup_m ‖u(t_m) − u⁰(t_m)‖₂`.
    Tube { reference: Trajectory<T> },
    /// `‖u − u⁰‖_{α,p}`.
    HolderBall { reference: Trajectory<T>, alpha: T, p: T },
}

/// `{distance ≥ δ}`, or its complement `{distance < δ}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventSpec<T> {
    pub kind: EventKind<T>,
    pub delta: T,
    #[serde(default)]
    pub complement: bool,
}

impl<T: Scalar> EventSpec<T> {
    pub fn terminal_ball(center: GridField<T>, delta: T) -> Self {
        Self { kind: EventKind::TerminalBall { center }, delta, complement: false }
    }

    pub fn tube(reference: Trajectory<T>, delta: T) -> Self {
        Self { kind: EventKind::Tube { reference }, delta, complement: false }
    }

    pub fn holder_ball(reference: Trajectory<T>, alpha: T, p: T, delta: T) -> Self {
        Self { kind: EventKind::HolderBall { reference, alpha, p }, delta, complement: false }
    }

    /// Always triggered (`δ = 0`).
    pub fn whole_space(grid: Grid) -> Self {
        Self::terminal_ball(GridField::zeros(grid), T::zero())
    }

    pub fn complement(mut self) -> Self {
        self.complement = !self.complement;
        self
    }

    /// Whether the event needs the whole path rather than the endpoint.
    pub fn needs_path(&self) -> bool {
        !matches!(self.kind, EventKind::TerminalBall { .. })
    }

    pub fn distance(&self, traj: &Trajectory<T>) -> Result<T> {
        let h = traj.grid.cell_volume::<T>();
        match &self.kind {
            EventKind::TerminalBall { center } => {
                if center.grid != traj.grid {
                    return Err(shape("event center lives on a different grid"));
                }
                let last = traj.states.last().expect("non-empty trajectory");
                Ok(lp_diff(last, &center.values, h, Power::Two))
            }
            EventKind::Tube { reference } => {
                if !reference.same_layout(traj) {
                    return Err(shape("tube reference does not match the trajectory layout"));
                }
                Ok(traj
                    .states
                    .iter()
                    .zip(&reference.states)
                    .map(|(a, b)| lp_diff(a, b, h, Power::Two))
                    .fold(T::zero(), T::max))
            }
            EventKind::HolderBall { reference, alpha, p } => {
                Ok(holder_norm(&traj.sub(reference)?, *alpha, *p)?.value())
            }
        }
    }

    pub fn occurs(&self, traj: &Trajectory<T>) -> Result<bool> {
        Ok((self.distance(traj)? >= self.delta) != self.complement)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::TrajectoryMeta;

    fn path(values: &[f64]) -> Trajectory<f64> {
        let grid = Grid::line(2);
        let states = values.iter().map(|&v| vec![v, v]).collect();
        Trajectory::new(grid, 0.1, states, TrajectoryMeta::default()).unwrap()
    }

    #[test]
    fn distances() {
        let traj = path(&[0.0, 2.0, 1.0]);
        let zero = path(&[0.0, 0.0, 0.0]);
        let pi = std::f64::consts::PI;
        let ball = EventSpec::terminal_ball(GridField::zeros(Grid::line(2)), 0.5);
        assert!((ball.distance(&traj).unwrap() - pi.sqrt()).abs() < 1e-14);
        let tube = EventSpec::tube(zero.clone(), 3.0);
        assert!((tube.distance(&traj).unwrap() - 2.0 * pi.sqrt()).abs() < 1e-14);
        assert!(tube.occurs(&traj).unwrap());
        assert!(!tube.clone().complement().occurs(&traj).unwrap());
        let hb = EventSpec::holder_ball(zero, 0.5, 2.0, 1.0);
        assert!(hb.distance(&traj).unwrap() > tube.distance(&traj).unwrap());
    }

    #[test]
    fn zero_radius_always_triggers() {
        let ev = EventSpec::<f64>::whole_space(Grid::line(2));
        assert!(ev.occurs(&path(&[3.0])).unwrap());
        assert!(!ev.complement().occurs(&path(&[3.0])).unwrap());
    }
}
