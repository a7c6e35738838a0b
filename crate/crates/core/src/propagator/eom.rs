//! Right-hand side of the two-layer variational equations of motion.

use nalgebra::DMatrix;

use super::rdm::{interspecies_products, top_density, two_body_from_products, SpeciesTerms};
use crate::ansatz::{LayeredBasis, LayeredState};
use crate::error::{Error, Result};
use crate::linalg::{self, c};
use crate::model::{CheckedSystem, Species};
use crate::C64;

/// Regularization scale for inverting reduced density matrices.
pub const DEFAULT_RHO_EPS: f64 = 1e-10;

/// Condition number above which a density matrix counts as singular even
/// after regularization.
pub const SINGULAR_CONDITION: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeMode {
    /// `d/dt = -i H`
    Real,
    /// `d/dtau = -H`
    Imaginary,
}

impl TimeMode {
    fn factor(self) -> C64 {
        match self {
            TimeMode::Real => C64::new(0.0, -1.0),
            TimeMode::Imaginary => c(-1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energies {
    pub total: f64,
    /// Kinetic plus trap energy, indexed by species.
    pub one_body: [f64; 2],
    pub boson_boson: f64,
    pub fermion_boson: f64,
}

/// Everything the equations of motion need that does not change with time.
pub struct EomContext<'a> {
    pub system: &'a CheckedSystem,
    pub basis: &'a LayeredBasis,
    pub rho_eps: f64,
    /// Positive-definite one-body preconditioner applied to the orbital
    /// gradient in imaginary time. Leaves the stationary points unchanged.
    pub orbital_preconditioner: Option<[DMatrix<f64>; 2]>,
    /// In imaginary time, replace density inverses by `(rho + shift)^-1`
    /// (shift scaled by the trace). Any positive-definite metric keeps the
    /// same stationary points while avoiding stiffness from weakly
    /// occupied modes.
    pub metric_shift: Option<f64>,
    /// Constant subtracted from the Hamiltonian in real time. Only the global
    /// phase changes; a value near the energy removes the fast overall
    /// rotation of the top layer that an explicit integrator would damp.
    pub energy_shift: f64,
}

impl<'a> EomContext<'a> {
    pub fn new(system: &'a CheckedSystem, basis: &'a LayeredBasis) -> Self {
        Self {
            system,
            basis,
            rho_eps: DEFAULT_RHO_EPS,
            orbital_preconditioner: None,
            metric_shift: None,
            energy_shift: 0.0,
        }
    }

    fn invert(&self, rho: &DMatrix<C64>, mode: TimeMode) -> (DMatrix<C64>, f64) {
        match (mode, self.metric_shift) {
            (TimeMode::Imaginary, Some(shift)) => {
                let trace = rho.trace().re;
                let shifted = rho + DMatrix::identity(rho.nrows(), rho.ncols()) * c(shift * trace);
                linalg::regularized_inverse(&shifted, self.rho_eps)
            }
            _ => linalg::regularized_inverse(rho, self.rho_eps),
        }
    }

    /// Precondition the orbital layer with `(h - e_0 + shift)^-1`.
    pub fn with_preconditioner(mut self, shift: f64) -> Self {
        self.orbital_preconditioner = Some(Species::BOTH.map(|s| {
            let (values, vectors) = linalg::eigh_real(&self.system.one_body(s).hamiltonian());
            let e0 = values[0];
            let inv = values.map(|e| 1.0 / (e - e0 + shift));
            &vectors * DMatrix::from_diagonal(&inv) * vectors.transpose()
        }));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhsDiagnostics {
    pub energies: Energies,
    /// Largest condition number of the regularized densities inverted.
    pub max_condition: f64,
}

/// Top-layer operator pieces shared by the energy and the derivative.
struct TopLayer {
    terms: [SpeciesTerms; 2],
    /// One-body operator applied to every species function, by species.
    one_body_c: [DMatrix<C64>; 2],
    /// Boson-boson interaction applied to every bosonic species function.
    bb_c: DMatrix<C64>,
    /// `W[(pF qF), (rB sB)]`
    w_fb: DMatrix<C64>,
    /// `W[(p q), (r s)]` among bosonic orbitals.
    w_bb: DMatrix<C64>,
    /// `X_B[pq]_{l l'} = sum_rs W[pq, rs] D_B[rs]_{l l'}` for each fermionic pair.
    x_b: Vec<DMatrix<C64>>,
    h_f: DMatrix<C64>,
    h_b1: DMatrix<C64>,
    h_bb: DMatrix<C64>,
}

fn weighted_sum(mats: &[DMatrix<C64>], weights: impl Iterator<Item = C64>) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(mats[0].nrows(), mats[0].ncols());
    for (m, w) in mats.iter().zip(weights) {
        if w != c(0.0) {
            out += m * w;
        }
    }
    out
}

impl TopLayer {
    fn new(state: &LayeredState, ctx: &EomContext) -> Self {
        let system = ctx.system;
        let dx = system.grid().dx();
        let g_bb = system.interactions().g_bb;
        let terms = Species::BOTH.map(|s| SpeciesTerms::new(state, s, ctx.basis.species(s), Some(system)));
        let tf = &terms[Species::Fermion.index()];
        let tb = &terms[Species::Boson.index()];
        let w_fb = (&tf.pair * tb.pair.transpose()) / c(dx);
        let w_bb = (&tb.pair * tb.pair.transpose()) / c(dx);
        let one_body_c = Species::BOTH.map(|s| {
            let t = &terms[s.index()];
            t.one_body_action(&t.h_orb)
        });
        let mb = tb.m;
        let mut bb_c = DMatrix::zeros(tb.y[0].nrows(), tb.y[0].ncols());
        if g_bb != 0.0 {
            // (g/2) sum W_{pq,rs} (E_pq E_rs - delta_qr E_ps)
            for pq in 0..mb * mb {
                let z = weighted_sum(&tb.y, (0..mb * mb).map(|rs| w_bb[(pq, rs)]));
                bb_c += ctx.basis.species(Species::Boson).ops.apply(pq / mb, pq % mb, &z);
            }
            let contracted = DMatrix::from_fn(mb, mb, |p, s| (0..mb).map(|q| w_bb[(p * mb + q, q * mb + s)]).sum::<C64>());
            bb_c -= tb.one_body_action(&contracted);
            bb_c *= c(0.5 * g_bb);
        }
        let x_b = (0..tf.m * tf.m)
            .map(|pq| weighted_sum(&tb.d, (0..mb * mb).map(|rs| w_fb[(pq, rs)])))
            .collect();
        let cf = &state.coeffs[Species::Fermion.index()];
        let cb = &state.coeffs[Species::Boson.index()];
        let h_f = cf.adjoint() * &one_body_c[Species::Fermion.index()];
        let h_b1 = cb.adjoint() * &one_body_c[Species::Boson.index()];
        let h_bb = cb.adjoint() * &bb_c;
        Self {
            terms,
            one_body_c,
            bb_c,
            w_fb,
            w_bb,
            x_b,
            h_f,
            h_b1,
            h_bb,
        }
    }

    /// Species Hamiltonian (one-body plus intra-species contact) applied to
    /// every column of `x`, a block of species-space vectors.
    fn species_apply(&self, ctx: &EomContext, s: Species, x: &DMatrix<C64>) -> DMatrix<C64> {
        let t = &self.terms[s.index()];
        let ops = &ctx.basis.species(s).ops;
        let m = t.m;
        let ex: Vec<DMatrix<C64>> = (0..m * m).map(|pq| ops.apply(pq / m, pq % m, x)).collect();
        let mut out = weighted_sum(&ex, (0..m * m).map(|pq| t.h_orb[(pq / m, pq % m)]));
        let g_bb = ctx.system.interactions().g_bb;
        if s == Species::Boson && g_bb != 0.0 {
            let w = &self.w_bb;
            let mut bb = DMatrix::zeros(x.nrows(), x.ncols());
            for pq in 0..m * m {
                let z = weighted_sum(&ex, (0..m * m).map(|rs| w[(pq, rs)]));
                ops.apply_add(pq / m, pq % m, c(1.0), &z, &mut bb);
            }
            let contracted = weighted_sum(
                &ex,
                (0..m * m).map(|ps| (0..m).map(|q| w[((ps / m) * m + q, q * m + ps % m)]).sum::<C64>()),
            );
            out += (bb - contracted) * c(0.5 * g_bb);
        }
        out
    }

    /// `X_other[pq] = sum_rs W[pq, rs] D_other[rs]` for every pair of species `s`.
    fn partner_fields(&self, s: Species) -> Vec<DMatrix<C64>> {
        let t = &self.terms[s.index()];
        let other = &self.terms[s.other().index()];
        let mo = other.m;
        (0..t.m * t.m)
            .map(|pq| {
                weighted_sum(
                    &other.d,
                    (0..mo * mo).map(|rs| match s {
                        Species::Fermion => self.w_fb[(pq, rs)],
                        Species::Boson => self.w_fb[(rs, pq)],
                    }),
                )
            })
            .collect()
    }

    fn interaction_action(&self, top: &DMatrix<C64>, g_fb: f64) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(top.nrows(), top.ncols());
        if g_fb == 0.0 {
            return out;
        }
        for (df, xb) in self.terms[Species::Fermion.index()].d.iter().zip(&self.x_b) {
            out += df * top * xb.transpose();
        }
        out * c(g_fb)
    }

    /// `K A` and the energy decomposition.
    fn apply(&self, top: &DMatrix<C64>, g_fb: f64) -> (DMatrix<C64>, Energies) {
        let f_part = &self.h_f * top;
        let b1_part = top * self.h_b1.transpose();
        let bb_part = top * self.h_bb.transpose();
        let fb_part = self.interaction_action(top, g_fb);
        let expect = |m: &DMatrix<C64>| top.dotc(m).re;
        let energies = Energies {
            total: 0.0,
            one_body: [expect(&b1_part), expect(&f_part)],
            boson_boson: expect(&bb_part),
            fermion_boson: expect(&fb_part),
        };
        let energies = Energies {
            total: energies.one_body[0] + energies.one_body[1] + energies.boson_boson + energies.fermion_boson,
            ..energies
        };
        (f_part + b1_part + bb_part + fb_part, energies)
    }
}

/// Energy expectation `<Psi|H|Psi>` of a (not necessarily normalized) state.
pub fn energy(state: &LayeredState, ctx: &EomContext) -> Energies {
    let top = TopLayer::new(state, ctx);
    top.apply(&state.top, ctx.system.interactions().g_fb).1
}

fn check_condition(cond: f64) -> Result<f64> {
    if !cond.is_finite() || cond > SINGULAR_CONDITION {
        return Err(Error::SingularDensity { condition: cond });
    }
    Ok(cond)
}

/// Time derivative of every layer of `state`.
pub fn eom_rhs(state: &LayeredState, ctx: &EomContext, mode: TimeMode) -> Result<(LayeredState, RhsDiagnostics)> {
    let system = ctx.system;
    let g_fb = system.interactions().g_fb;
    let g_bb = system.interactions().g_bb;
    let dx = system.grid().dx();
    let factor = mode.factor();
    let layer = TopLayer::new(state, ctx);
    let (k_top, energies) = layer.apply(&state.top, g_fb);
    let mut max_condition = 1.0f64;

    let mut d_coeffs = [DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)];
    let mut d_spfs = [DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)];

    let f = Species::Fermion.index();
    let b = Species::Boson.index();
    let inter = interspecies_products(&state.top, &layer.terms[f], &layer.terms[b]);

    for s in Species::BOTH {
        let si = s.index();
        let t = &layer.terms[si];
        let other = &layer.terms[s.other().index()];
        let top_s = state.top_for(s);
        let rho_top = top_density(&top_s);
        let (rho_top_inv, cond) = ctx.invert(&rho_top, mode);
        max_condition = max_condition.max(check_condition(cond)?);

        // species layer
        let mut h_c = layer.one_body_c[si].clone();
        if s == Species::Boson {
            h_c += &layer.bb_c;
        }
        let mut v = h_c * rho_top.transpose();
        if g_fb != 0.0 {
            // interspecies mean field on this species' pairs
            let w_so = match s {
                Species::Fermion => layer.w_fb.clone(),
                Species::Boson => layer.w_fb.transpose(),
            };
            let conj_top = top_s.conjugate();
            let top_t = top_s.transpose();
            let mo = other.m;
            for pq in 0..t.m * t.m {
                let x = weighted_sum(&other.d, (0..mo * mo).map(|rs| w_so[(pq, rs)]));
                let g = &conj_top * x * &top_t;
                v += &t.y[pq] * g.transpose() * c(g_fb);
            }
        }
        let cmat = &state.coeffs[si];
        linalg::project_out(cmat, &mut v);
        d_coeffs[si] = v * rho_top_inv.transpose() * factor;

        // orbital layer
        let rho1 = t.contract(&rho_top);
        let (rho1_inv, cond) = ctx.invert(&rho1, mode);
        max_condition = max_condition.max(check_condition(cond)?);
        let mut u = match s {
            Species::Fermion => &inter * &other.pair,
            Species::Boson => inter.transpose() * &other.pair,
        } * c(g_fb);
        if s == Species::Boson && g_bb != 0.0 {
            let rho2 = two_body_from_products(&t.pair_products(&rho_top), &rho1);
            u += rho2 * &t.pair * c(g_bb);
        }
        u /= c(dx);
        let phi = &state.spfs[si];
        let n = phi.nrows();
        let m = t.m;
        // z_k(x) = sum_q U_kq(x) phi_q(x)
        let z = DMatrix::from_fn(n, m, |x, k| (0..m).map(|q| u[(k * m + q, x)] * phi[(x, q)]).sum::<C64>());
        let mut w = match (mode, ctx.metric_shift) {
            (TimeMode::Imaginary, Some(_)) => (&t.hphi * rho1.transpose() + z) * rho1_inv.transpose(),
            _ => &t.hphi + z * rho1_inv.transpose(),
        };
        linalg::project_out(phi, &mut w);
        if let (TimeMode::Imaginary, Some(pre)) = (mode, &ctx.orbital_preconditioner) {
            w = linalg::real_times_complex(&pre[si], &w);
            linalg::project_out(phi, &mut w);
        }
        d_spfs[si] = w * factor;
    }

    let k_top = match mode {
        TimeMode::Real if ctx.energy_shift != 0.0 => k_top - &state.top * c(ctx.energy_shift),
        _ => k_top,
    };
    let derivative = LayeredState {
        top: k_top * factor,
        coeffs: d_coeffs,
        spfs: d_spfs,
        time: state.time,
    };
    Ok((
        derivative,
        RhsDiagnostics {
            energies,
            max_condition,
        },
    ))
}

/// Variationally optimal top layer and species functions of species `s`
/// for fixed orbitals and fixed species functions of the other species:
/// the lowest eigenvector of `H` in (all number states of `s`) x (the
/// other species' functions), split again by a singular value
/// decomposition. The input must have orthonormal species functions.
pub fn optimize_species_block(state: &LayeredState, ctx: &EomContext, s: Species, tol: f64) -> Result<LayeredState> {
    let layer = TopLayer::new(state, ctx);
    let g_fb = ctx.system.interactions().g_fb;
    let h_other = match s {
        Species::Fermion => &layer.h_b1 + &layer.h_bb,
        Species::Boson => layer.h_f.clone(),
    };
    let h_other_t = h_other.transpose();
    let fields: Vec<DMatrix<C64>> = layer.partner_fields(s).iter().map(|x| x.transpose()).collect();
    let t = &layer.terms[s.index()];
    let ops = &ctx.basis.species(s).ops;
    let cmat = &state.coeffs[s.index()];
    let (dim, m_rank) = (cmat.nrows(), cmat.ncols());
    let psi0 = cmat * state.top_for(s);
    let apply = |x: &[C64], out: &mut [C64]| {
        let xm = DMatrix::from_column_slice(dim, m_rank, x);
        let mut y = layer.species_apply(ctx, s, &xm) + &xm * &h_other_t;
        if g_fb != 0.0 {
            for pq in 0..t.m * t.m {
                let xf = &xm * &fields[pq];
                ops.apply_add(pq / t.m, pq % t.m, c(g_fb), &xf, &mut y);
            }
        }
        out.copy_from_slice(y.as_slice());
    };
    let (_, psi) = crate::krylov::lanczos_lowest(dim * m_rank, apply, psi0.as_slice(), tol, 200)?;
    let psi = DMatrix::from_column_slice(dim, m_rank, &psi);
    let svd = psi.svd(true, true);
    let mut u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    if linalg::orthonormality_deviation(&u) > 1e-10 {
        linalg::gram_schmidt(&mut u);
    }
    let sv = DMatrix::from_diagonal(&svd.singular_values.map(c));
    let top_s = sv * v_t;
    let mut out = state.clone();
    out.coeffs[s.index()] = u;
    out.top = match s {
        Species::Fermion => top_s,
        Species::Boson => top_s.transpose(),
    };
    Ok(out)
}
