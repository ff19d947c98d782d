use serde::{Deserialize, Serialize};

use super::integrator::{Integrator, SolverConfig, Workspace};
use super::model::ModelSpec;
use crate::error::{shape, Result};
use crate::fields::{ControlPath, Power, Trajectory};
use crate::noise::NoisePath;
use crate::Scalar;

/// `‖J_i(t_m)‖_p` series of the error decomposition `Y = u^{ε,v^ε} − u^v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JDecomposition<T> {
    /// Stochastic convolution `√ε ∫ G σ(u^{ε,v^ε}) dW`.
    pub j1: Vec<T>,
    /// `∫ ΔG (f(u^{ε,v^ε}) − f(u^v))`.
    pub j2: Vec<T>,
    /// `∫ G σ(u^{ε,v^ε}) (v^ε − v)`.
    pub j3: Vec<T>,
    /// `∫ G (σ(u^{ε,v^ε}) − σ(u^v)) v`.
    pub j4: Vec<T>,
    /// `sup_m ‖Y(t_m) − G_{t_m}Y(0) − Σ_i J_i(t_m)‖_p`.
    pub residual: T,
}

/// Splits the difference of a controlled stochastic path and a skeleton
/// path into the four Duhamel terms, each accumulated with the same
/// exponential-Euler weights as the solver.
#[allow(clippy::too_many_arguments)]
pub fn j_decomposition<T: Scalar>(
    u_ctrl: &Trajectory<T>,
    u_skel: &Trajectory<T>,
    w: &NoisePath<T>,
    v_eps: &ControlPath<T>,
    v: &ControlPath<T>,
    eps: T,
    spec: &ModelSpec<T>,
    p: T,
) -> Result<JDecomposition<T>> {
    if !u_ctrl.same_layout(u_skel) || u_ctrl.grid != spec.grid() {
        return Err(shape("controlled and skeleton trajectories must share grid and time step"));
    }
    let steps = u_ctrl.steps();
    let config = SolverConfig::new(u_ctrl.dt, steps);
    let integ = Integrator::new(spec, &config)?;
    let len = u_ctrl.grid.len();
    for (name, ok) in [
        ("noise", w.grid == u_ctrl.grid && w.steps == steps && w.dt == u_ctrl.dt),
        ("perturbed control", v_eps.grid == u_ctrl.grid && v_eps.steps == steps && v_eps.dt == u_ctrl.dt),
        ("control", v.same_layout(v_eps)),
    ] {
        if !ok {
            return Err(shape(format!("{name} does not match the trajectory layout")));
        }
    }
    let pw = Power::new(p)?;
    let h = u_ctrl.grid.cell_volume::<T>();
    let basis = integ.basis();
    let (decay, phi) = (integ.decay(), integ.phi());
    let sigma = spec.sigma;
    let root = if eps > T::zero() { eps.sqrt() } else { T::zero() };

    let mut acc = vec![vec![T::zero(); len]; 4];
    let mut y0 = vec![T::zero(); len];
    let diff0: Vec<T> = u_ctrl.states[0].iter().zip(&u_skel.states[0]).map(|(&a, &b)| a - b).collect();
    basis.analyze(&diff0, &mut y0);

    let mut series = vec![vec![T::zero(); steps + 1]; 4];
    let mut residual = T::zero();
    let mut ws = Workspace::new(len);
    let mut ws_s = Workspace::new(len);
    let mut buf = vec![T::zero(); len];
    let mut grid_buf = vec![T::zero(); len];
    let mut y = vec![T::zero(); len];
    let mut stored = vec![T::zero(); len];

    for m in 0..steps {
        let (uc, us) = (&u_ctrl.states[m], &u_skel.states[m]);
        // J1 and J2 share the forcing routine of the solver
        let (hd, _, hn) = integ.forcing(uc, Some(w.slice(m)), None, &mut ws);
        integ.forcing(us, None, None, &mut ws_s);
        // J3
        let dv: Vec<T> = v_eps.slice(m).iter().zip(v.slice(m)).map(|(&a, &b)| a - b).collect();
        grid_buf.iter_mut().zip(uc).zip(&dv).for_each(|((g, &x), &d)| *g = sigma.eval(x) * d);
        basis.analyze(&grid_buf, &mut buf);
        let j3_inc = buf.clone();
        // J4
        grid_buf
            .iter_mut()
            .zip(uc)
            .zip(us)
            .zip(v.slice(m))
            .for_each(|(((g, &a), &b), &c)| *g = (sigma.eval(a) - sigma.eval(b)) * c);
        basis.analyze(&grid_buf, &mut buf);
        for k in 0..len {
            acc[0][k] = decay[k] * acc[0][k] + if hn { decay[k] * root * ws.spec_noise[k] } else { T::zero() };
            let dd = if hd { ws.spec_drift[k] - ws_s.spec_drift[k] } else { T::zero() };
            acc[1][k] = decay[k] * acc[1][k] + phi[k] * dd;
            acc[2][k] = decay[k] * acc[2][k] + phi[k] * j3_inc[k];
            acc[3][k] = decay[k] * acc[3][k] + phi[k] * buf[k];
            y0[k] = decay[k] * y0[k];
        }
        for (i, a) in acc.iter().enumerate() {
            basis.synthesize(a, &mut grid_buf);
            series[i][m + 1] = pw.norm(grid_buf.iter().copied(), h);
        }
        for k in 0..len {
            stored[k] = y0[k] + acc[0][k] + acc[1][k] + acc[2][k] + acc[3][k];
        }
        basis.synthesize(&stored, &mut y);
        let (uc1, us1) = (&u_ctrl.states[m + 1], &u_skel.states[m + 1]);
        let r = pw.norm(y.iter().zip(uc1).zip(us1).map(|((&s, &a), &b)| a - b - s), h);
        residual = residual.max(r);
    }
    let mut it = series.into_iter();
    Ok(JDecomposition {
        j1: it.next().unwrap(),
        j2: it.next().unwrap(),
        j3: it.next().unwrap(),
        j4: it.next().unwrap(),
        residual,
    })
}
