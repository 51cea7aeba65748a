"""Command-line front end.

Exit codes: 0 success, 2 non-convergence, 3 blow-up, 4 config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import closed_loop as cl
from .basis import enumerate_basis
from .config import ConfigError, RunConfig, ScenarioSpec, dump_config, load_config
from .convergence import OracleProblem, convergence_table
from .galerkin import build_tables
from .io import TableCache, load_value_function, save_value_function
from .pde import DiscretizedSystem, discretize
from .synthesis import (
    BracketError,
    SynthesisConfig,
    estimate_gamma_star,
    feedback_control,
    feedback_disturbance,
    hji_policy_iteration,
)

EXIT_OK = 0
EXIT_NONCONVERGED = 2
EXIT_BLOWUP = 3
EXIT_CONFIG = 4

log = logging.getLogger("hjisynth")


class RunFailure(RuntimeError):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclasses.dataclass
class Setup:
    cfg: RunConfig
    system: object
    disc: DiscretizedSystem | None
    basis: object
    out: Path
    cache: TableCache | None
    _tables: object = None

    @property
    def tables(self):
        if self._tables is None:
            self._tables = build_tables(self.system, self.basis, self.cfg.quadrature_order, cache=self.cache)
        return self._tables

    def synthesis_config(self, gamma: float) -> SynthesisConfig:
        c = self.cfg
        return SynthesisConfig(c.epsilon, c.max_outer, c.max_inner, gamma, c.initial_control)


def _setup(cfg: RunConfig) -> Setup:
    cfg.validate()
    if cfg.problem == "oracle_1d":
        system, disc = OracleProblem().system(), None
        basis = enumerate_basis(1, cfg.M)
    else:
        disc = discretize(cfg.build_problem(), cfg.d, cfg.half_width)
        system = disc.system
        basis = enumerate_basis(system.d, cfg.M)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cache = TableCache() if cfg.cache else None
    dump_config(cfg, out / "resolved_config.yaml")
    return Setup(cfg, system, disc, basis, out, cache)


def _synthesize(st: Setup, gamma: float, tag: str):
    V, rep = hji_policy_iteration(st.system, st.basis, st.synthesis_config(gamma), st.tables)
    save_value_function(V, st.out / f"value_{tag}.hjv")
    info = rep.as_dict()
    info.update(synthesis="H2" if math.isinf(gamma) else "Hinf", gamma=None if math.isinf(gamma) else gamma,
                d=st.basis.d, M=st.basis.M, n=st.basis.n)
    (st.out / f"report_{tag}.json").write_text(json.dumps(info, indent=2))
    print(f"{tag}: {info['synthesis']} converged={rep.converged} outer={rep.outer_iterations} "
          f"total_iterations={rep.total_iterations} wall={rep.wall_time:.2f}s")
    if not rep.converged:
        raise RunFailure(f"{tag} synthesis did not converge: {rep.failure}", EXIT_NONCONVERGED)
    return V, rep


def _gamma_star(st: Setup) -> float:
    c = st.cfg
    states = None
    if st.disc is not None:
        states = np.array([st.disc.initial_state()]) if np.any(st.disc.initial_state()) else None
    res = estimate_gamma_star(
        st.system, st.basis, st.synthesis_config(math.inf), tuple(c.bracket), c.bisect_tol,
        initial_states=states, tables=st.tables, check_stability=c.check_stability,
    )
    rows = [dataclasses.asdict(p) | {"feasible": p.feasible} for p in res.trace]
    cl.write_rows_csv(st.out / "gamma_star_trace.csv", rows)
    print(f"gamma_star={res.gamma_star:.6g} bracket=({res.lo:.6g}, {res.hi:.6g})")
    return res.gamma_star


def _resolve_gamma(st: Setup) -> float:
    g = st.cfg.gamma_value()
    return _gamma_star(st) if g is None else g


# -- verbs -----------------------------------------------------------------

def cmd_synthesize(cfg: RunConfig) -> int:
    st = _setup(cfg)
    gamma = _resolve_gamma(st)
    _synthesize(st, gamma, "hjb" if math.isinf(gamma) else "hji")
    return EXIT_OK


def cmd_gamma_star(cfg: RunConfig) -> int:
    st = _setup(cfg)
    try:
        _gamma_star(st)
    except BracketError as exc:
        raise RunFailure(str(exc), EXIT_NONCONVERGED) from exc
    return EXIT_OK


def _x0(st: Setup, spec: ScenarioSpec) -> np.ndarray:
    if st.disc is None:
        return np.array([0.5])
    return st.disc.initial_state(spec.initial_condition)


def _signal(st: Setup, spec: ScenarioSpec, x0, V_hji=None, gamma=math.inf, V_hjb=None) -> cl.DisturbanceSignal:
    s = spec.signal
    sine = cl.DisturbanceSignal.sinusoid(s.eta, s.omega)
    if s.kind == "zero":
        return cl.ZERO_SIGNAL
    if s.kind == "sinusoid":
        return sine
    if s.kind == "constant":
        return cl.DisturbanceSignal.constant(s.value)
    if s.kind == "piecewise":
        return cl.DisturbanceSignal.piecewise(s.breakpoints, s.values)
    if s.kind == "w_c":
        return cl.piecewise_wc()
    if s.kind == "hji_disturbance":
        if V_hji is None or math.isinf(gamma):
            raise ConfigError("hji_disturbance needs an HJI value function with finite gamma")
        base = cl.DisturbanceSignal.feedback(feedback_disturbance(V_hji, st.system, gamma))
        return cl.DisturbanceSignal.composite(base, s.kappa, s.eta, s.omega)
    V = V_hji if s.kind == "replay_hji_control" else V_hjb
    if V is None:
        raise ConfigError(f"{s.kind} needs the corresponding value function")
    rec = cl.record_feedback_signal(st.system, feedback_control(V, st.system), x0, st.cfg.horizon, st.cfg.dt)
    return cl.DisturbanceSignal.composite(rec.as_disturbance(), s.kappa, s.eta, s.omega)


def _weights(st: Setup):
    return st.disc.grid if st.disc is not None else None


def cmd_simulate(cfg: RunConfig, value_file: str | None) -> int:
    st = _setup(cfg)
    if value_file is None:
        gamma = _resolve_gamma(st)
        V, _ = _synthesize(st, gamma, "hjb" if math.isinf(gamma) else "hji")
    else:
        V = load_value_function(value_file)
        gamma = V.gamma_used
        if V.basis.d != st.system.d:
            raise ConfigError(f"value function has d={V.basis.d}, config system has d={st.system.d}")
    u = feedback_control(V, st.system)
    rows, code = [], EXIT_OK
    for spec in cfg.scenario_specs():
        x0 = _x0(st, spec)
        sig = _signal(st, spec, x0, V if not math.isinf(gamma) else None, gamma, V if math.isinf(gamma) else None)
        traj = cl.simulate(st.system, u, sig, x0, cfg.horizon, cfg.dt)
        cl.write_trajectory_csv(st.out / f"trajectory_{spec.name}.csv", traj, st.system, gamma)
        cost = cl.cost_integral(traj, st.system, math.inf)
        v = cl.verdict(traj)
        rows.append({"scenario": spec.name, **cost.as_dict(), "verdict": v})
        print(f"{spec.name}: verdict={v} J={cost.total_J:.6g}")
        if traj.blew_up:
            code = EXIT_BLOWUP
    cl.write_rows_csv(st.out / "costs.csv", rows)
    return code


def cmd_compare(cfg: RunConfig) -> int:
    st = _setup(cfg)
    gamma = _resolve_gamma(st)
    if math.isinf(gamma):
        raise ConfigError("compare needs a finite gamma for the HJI law")
    V_hjb, _ = _synthesize(st, math.inf, "hjb")
    V_hji, _ = _synthesize(st, gamma, "hji")
    u_hjb, u_hji = feedback_control(V_hjb, st.system), feedback_control(V_hji, st.system)
    scenarios = []
    for spec in cfg.scenario_specs():
        x0 = _x0(st, spec)
        scenarios.append(cl.Scenario(spec.name, x0, _signal(st, spec, x0, V_hji, gamma, V_hjb)))
    rep = cl.compare_hjb_hji(st.system, u_hjb, u_hji, scenarios, cfg.horizon, cfg.dt, _weights(st), cfg.jobs)
    for r in rep.results:
        for tag, o in (("hjb", r.hjb), ("hji", r.hji)):
            cl.write_trajectory_csv(st.out / f"trajectory_{r.scenario.name}_{tag}.csv", o.trajectory, st.system)
    rows = rep.rows()
    cl.write_rows_csv(st.out / "comparison.csv", rows)
    for row in rows:
        print(f"{row['scenario']}: J_hjb={row['hjb_total_J']:.6g} ({row['hjb_verdict']}) "
              f"J_hji={row['hji_total_J']:.6g} ({row['hji_verdict']}) winner={row['winner']}")
    return EXIT_OK


def cmd_convergence_1d(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [r.as_dict() for r in convergence_table(cfg.degrees, epsilon=cfg.epsilon, initial_control=cfg.initial_control)]
    cl.write_rows_csv(out / "convergence_1d.csv", rows)
    print("degree  error_V      error_u      iterations")
    for r in rows:
        print(f"{r['degree']:>6}  {r['error_V']:.4e}  {r['error_u']:.4e}  {r['iterations']:>10}")
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_NONCONVERGED


# -- argument parsing ------------------------------------------------------

VERBS = ("synthesize", "gamma-star", "simulate", "compare", "convergence-1d")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hjisynth", description="Robust feedback synthesis via HJB/HJI policy iteration.")
    ap.add_argument("verb", choices=VERBS)
    ap.add_argument("--config", help="YAML run config (defaults apply when omitted)")
    ap.add_argument("--preset", help="problem preset name (overrides the config's problem)")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--jobs", type=int, help="worker cap for concurrent scenarios")
    ap.add_argument("--cache", action=argparse.BooleanOptionalAction, default=None, help="use the table cache")
    ap.add_argument("--gamma", help="attenuation level: number, 'inf', 'auto' or 'preset'")
    ap.add_argument("--degree", type=int, help="total polynomial degree M")
    ap.add_argument("--dim", type=int, help="number of interior collocation states d")
    ap.add_argument("--value", help="serialized value function (simulate)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.verb == "convergence-1d" and not args.config:
        cfg.problem = "oracle_1d"
    if args.preset:
        cfg.problem = args.preset
    if args.out:
        cfg.out = args.out
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.cache is not None:
        cfg.cache = args.cache
    if args.gamma is not None:
        cfg.gamma = args.gamma
    if args.degree is not None:
        cfg.M = args.degree
        if args.verb == "convergence-1d":
            cfg.degrees = [args.degree]
    if args.dim is not None:
        cfg.d = args.dim
    return cfg.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        if args.verb == "synthesize":
            return cmd_synthesize(cfg)
        if args.verb == "gamma-star":
            return cmd_gamma_star(cfg)
        if args.verb == "simulate":
            return cmd_simulate(cfg, args.value)
        if args.verb == "compare":
            return cmd_compare(cfg)
        return cmd_convergence_1d(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
