//! Real-time propagation with fixed output times and imaginary-time
//! relaxation to the ground state.

use std::ops::ControlFlow;

use nalgebra::DMatrix;

use super::eom::{energy, eom_rhs, optimize_species_block, EomContext, Energies, TimeMode, DEFAULT_RHO_EPS};
use super::integrator::{ControllerState, Dopri5, IntegratorSettings, StepStats};
use crate::ansatz::{LayeredBasis, LayeredState, MBState};
use crate::error::{Error, Result};
use crate::linalg::{self, c};
use crate::model::{CheckedSystem, Species};
use crate::C64;

fn blocks(state: &LayeredState) -> [&DMatrix<C64>; 5] {
    [
        &state.top,
        &state.coeffs[0],
        &state.coeffs[1],
        &state.spfs[0],
        &state.spfs[1],
    ]
}

pub fn packed_len(state: &LayeredState) -> usize {
    blocks(state).iter().map(|b| b.len()).sum()
}

pub fn pack(state: &LayeredState, out: &mut [C64]) {
    let mut pos = 0;
    for b in blocks(state) {
        out[pos..pos + b.len()].copy_from_slice(b.as_slice());
        pos += b.len();
    }
}

pub fn unpack(flat: &[C64], like: &LayeredState, time: f64) -> LayeredState {
    let mut pos = 0;
    let mut take = |m: &DMatrix<C64>| {
        let out = DMatrix::from_column_slice(m.nrows(), m.ncols(), &flat[pos..pos + m.len()]);
        pos += m.len();
        out
    };
    let top = take(&like.top);
    let c0 = take(&like.coeffs[0]);
    let c1 = take(&like.coeffs[1]);
    let s0 = take(&like.spfs[0]);
    let s1 = take(&like.spfs[1]);
    LayeredState {
        top,
        coeffs: [c0, c1],
        spfs: [s0, s1],
        time,
    }
}

fn rhs_closure<'a>(
    ctx: &'a EomContext<'a>,
    like: &'a LayeredState,
    mode: TimeMode,
) -> impl FnMut(f64, &[C64], &mut [C64]) -> Result<()> + 'a {
    move |t, y, dy| {
        let state = unpack(y, like, t);
        let (d, _) = eom_rhs(&state, ctx, mode)?;
        pack(&d, dy);
        Ok(())
    }
}

fn layered_orthonormality(state: &LayeredState) -> f64 {
    Species::BOTH
        .iter()
        .map(|&s| {
            linalg::orthonormality_deviation(&state.coeffs[s.index()])
                .max(linalg::orthonormality_deviation(&state.spfs[s.index()]))
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationOptions {
    pub integrator: IntegratorSettings,
    /// Spacing of the output times, which are integer multiples of it.
    pub output_interval: f64,
    /// Re-orthonormalize when the orthonormality error exceeds this.
    pub reortho_threshold: f64,
    pub rho_eps: f64,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            integrator: IntegratorSettings {
                abs_tol: 1e-9,
                rel_tol: 1e-9,
                initial_step: 1e-3,
                max_step: 0.1,
                min_step: 1e-12,
            },
            output_interval: 0.5,
            reortho_threshold: 1e-12,
            rho_eps: DEFAULT_RHO_EPS,
        }
    }
}

/// Integrator state that, together with a canonical state, makes a resumed
/// run continue bit-identically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResumeMeta {
    pub controller: ControllerState,
    pub energy_shift: f64,
}

/// What the observer sees at each output time.
pub struct Observation<'a> {
    /// Canonical (Schmidt-diagonal) state at the output time.
    pub state: &'a MBState,
    pub energies: Energies,
    pub meta: ResumeMeta,
    pub stats: StepStats,
    /// Number of re-orthonormalizations so far.
    pub reorthonormalizations: usize,
}

#[derive(Debug, Clone)]
pub struct Propagated {
    pub state: MBState,
    pub meta: ResumeMeta,
    pub stats: StepStats,
    pub reorthonormalizations: usize,
    /// Whether the observer stopped the run early.
    pub interrupted: bool,
}

/// Output times strictly after `t0` up to and including `t_end`.
pub fn output_times(t0: f64, t_end: f64, interval: f64) -> Vec<f64> {
    let mut times = Vec::new();
    let mut j = (t0 / interval + 1e-9).floor() as i64 + 1;
    loop {
        let t = j as f64 * interval;
        if t > t_end - 1e-9 * interval {
            break;
        }
        times.push(t);
        j += 1;
    }
    if times.last().map_or(t_end > t0, |&last| last < t_end) {
        times.push(t_end);
    }
    times
}

/// Real-time propagation of `initial` to `t_end`. The observer is called at
/// every output time after the initial one and may stop the run.
pub fn propagate<F>(
    system: &CheckedSystem,
    initial: &MBState,
    t_end: f64,
    options: &PropagationOptions,
    resume: Option<ResumeMeta>,
    mut observer: F,
) -> Result<Propagated>
where
    F: FnMut(&Observation) -> Result<ControlFlow<()>>,
{
    if !(options.output_interval > 0.0) || !t_end.is_finite() {
        return Err(Error::invalid("propagation.output_interval", "must be positive and finite"));
    }
    let basis = LayeredBasis::new(system)?;
    initial.check_shapes(&basis, system.grid().len())?;
    let mut ctx = EomContext::new(system, &basis);
    ctx.rho_eps = options.rho_eps;
    let mut current = initial.layered();
    ctx.energy_shift = match resume {
        Some(meta) => meta.energy_shift,
        None => energy(&current, &ctx).total,
    };
    let ctx = ctx;
    let like = current.clone();
    let mut y = vec![c(0.0); packed_len(&current)];
    pack(&current, &mut y);
    let mut integ = Dopri5::new(options.integrator, y.len());
    if let Some(meta) = resume {
        integ.restore_controller(meta.controller);
    }
    let meta = |integ: &Dopri5| ResumeMeta {
        controller: integ.controller(),
        energy_shift: ctx.energy_shift,
    };
    let mut f = rhs_closure(&ctx, &like, TimeMode::Real);
    let mut t = initial.time;
    let mut reorthos = 0;
    let mut canonical = initial.clone();
    for target in output_times(initial.time, t_end, options.output_interval) {
        while t < target {
            t = integ.step(&mut f, t, &mut y, target)?.t;
            current = unpack(&y, &like, t);
            if layered_orthonormality(&current) > options.reortho_threshold {
                current.reorthonormalize(options.reortho_threshold);
                pack(&current, &mut y);
                integ.invalidate();
                reorthos += 1;
                log::debug!("re-orthonormalized at t = {t}");
            }
        }
        canonical = current.canonicalize();
        canonical.time = target;
        let layered = canonical.layered();
        pack(&layered, &mut y);
        integ.invalidate();
        let obs = Observation {
            state: &canonical,
            energies: energy(&layered, &ctx),
            meta: meta(&integ),
            stats: integ.stats,
            reorthonormalizations: reorthos,
        };
        if observer(&obs)?.is_break() {
            return Ok(Propagated {
                state: canonical,
                meta: meta(&integ),
                stats: integ.stats,
                reorthonormalizations: reorthos,
                interrupted: true,
            });
        }
    }
    Ok(Propagated {
        state: canonical,
        meta: meta(&integ),
        stats: integ.stats,
        reorthonormalizations: reorthos,
        interrupted: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxOptions {
    pub integrator: IntegratorSettings,
    /// Converged when the energy changes by less than `energy_tol * cycle_tau`
    /// over a cycle, twice in a row.
    pub energy_tol: f64,
    /// Imaginary time of orbital flow per cycle.
    pub cycle_tau: f64,
    pub max_tau: f64,
    /// Shift of the orbital preconditioner `(h - e_0 + shift)^-1`.
    pub preconditioner_shift: f64,
    /// Relative shift of the density metric; zero gives plain imaginary time.
    pub metric_shift: f64,
    /// Residual tolerance of the exact coefficient-block solves.
    pub block_tol: f64,
    pub rho_eps: f64,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self {
            integrator: IntegratorSettings {
                abs_tol: 1e-6,
                rel_tol: 1e-6,
                initial_step: 1e-2,
                max_step: 2.0,
                min_step: 1e-10,
            },
            energy_tol: 1e-9,
            cycle_tau: 2.0,
            max_tau: 2000.0,
            preconditioner_shift: 0.2,
            metric_shift: 0.0,
            block_tol: 1e-9,
            rho_eps: DEFAULT_RHO_EPS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Relaxed {
    pub state: MBState,
    pub energies: Energies,
    /// Total imaginary time of orbital flow.
    pub tau: f64,
    /// Energy change per unit imaginary time over the last cycle.
    pub rate: f64,
    /// `(tau, E)` at the end of every cycle.
    pub history: Vec<(f64, f64)>,
    pub stats: StepStats,
}

const CONVERGED_STREAK: usize = 2;

fn normalize(state: &mut LayeredState) -> Result<()> {
    let norm = state.norm_sqr().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::Propagation {
            time: state.time,
            reason: "norm collapsed during relaxation".into(),
        });
    }
    state.top /= c(norm);
    state.reorthonormalize(0.0);
    Ok(())
}

/// Ground state by alternating exact solves of the coefficient layers with
/// preconditioned imaginary-time flow of all layers.
pub fn relax(system: &CheckedSystem, initial: &MBState, options: &RelaxOptions) -> Result<Relaxed> {
    let basis = LayeredBasis::new(system)?;
    initial.check_shapes(&basis, system.grid().len())?;
    let mut ctx = EomContext::new(system, &basis);
    ctx.rho_eps = options.rho_eps;
    if options.preconditioner_shift > 0.0 {
        ctx = ctx.with_preconditioner(options.preconditioner_shift);
    }
    if options.metric_shift > 0.0 {
        ctx.metric_shift = Some(options.metric_shift);
    }
    let mut current = initial.layered();
    current.time = 0.0;
    normalize(&mut current)?;
    let like = current.clone();
    let mut y = vec![c(0.0); packed_len(&current)];
    let mut integ = Dopri5::new(options.integrator, y.len());
    let mut f = rhs_closure(&ctx, &like, TimeMode::Imaginary);
    let mut history = Vec::new();
    let mut e_prev = f64::INFINITY;
    let mut tau = 0.0;
    let mut streak = 0;
    let mut rate = f64::INFINITY;
    while tau < options.max_tau {
        for s in [Species::Fermion, Species::Boson] {
            current = optimize_species_block(&current, &ctx, s, options.block_tol)?;
        }
        pack(&current, &mut y);
        integ.invalidate();
        let t_stop = tau + options.cycle_tau;
        while tau < t_stop {
            tau = integ.step(&mut f, tau, &mut y, t_stop)?.t;
            current = unpack(&y, &like, tau);
            normalize(&mut current)?;
            pack(&current, &mut y);
            integ.invalidate();
        }
        let e = energy(&current, &ctx);
        rate = (e.total - e_prev).abs() / options.cycle_tau;
        history.push((tau, e.total));
        log::debug!("relaxation tau = {tau}: E = {} rate = {rate:e}", e.total);
        e_prev = e.total;
        streak = if rate < options.energy_tol { streak + 1 } else { 0 };
        if streak >= CONVERGED_STREAK {
            let mut state = current.canonicalize();
            state.time = 0.0;
            return Ok(Relaxed {
                state,
                energies: e,
                tau,
                rate,
                history,
                stats: integ.stats,
            });
        }
    }
    let tail = history.iter().rev().take(10).map(|&(_, e)| e).collect();
    Err(Error::RelaxationNotConverged {
        tau,
        rate,
        energies: tail,
    })
}
