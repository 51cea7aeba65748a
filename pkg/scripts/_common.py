"""Shared helper: synthesize the HJB and HJI laws and compare them on scenarios."""

from hjisynth import closed_loop as cl
from hjisynth.basis import enumerate_basis
from hjisynth.galerkin import build_tables
from hjisynth.synthesis import SynthesisConfig, feedback_control, hjb_policy_iteration, hji_policy_iteration


def compare(ds, M, gammas, scenarios, T, initial_control="lqr"):
    sys = ds.system
    basis = enumerate_basis(sys.d, M)
    tab = build_tables(sys, basis)
    Vb, rb = hjb_policy_iteration(sys, basis, SynthesisConfig(initial_control=initial_control), tab)
    if not rb.converged:
        raise SystemExit(f"HJB synthesis failed: {rb.failure}")
    u_hjb = feedback_control(Vb, sys)
    for g in gammas:
        Vi, ri = hji_policy_iteration(sys, basis, SynthesisConfig(gamma=g, initial_control=initial_control), tab)
        if not ri.converged:
            print(f"gamma={g}: HJI synthesis did not converge ({ri.failure})")
            continue
        rep = cl.compare_hjb_hji(sys, u_hjb, feedback_control(Vi, sys), scenarios, T, weights=ds.grid)
        for r in rep.results:
            print(f"gamma={g} {r.scenario.name}: J_hjb={r.hjb.cost.total_J:.4g} ({r.hjb.verdict}, "
                  f"final norm {r.hjb.norm_series[-1]:.3g})  J_hji={r.hji.cost.total_J:.4g} ({r.hji.verdict}, "
                  f"final norm {r.hji.norm_series[-1]:.3g})  winner={r.winner}")
