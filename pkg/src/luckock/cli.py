"""Command-line interface.

Every subcommand prints one JSON document on stdout; tables go to the CSV
file named by ``--csv``.  Exit codes: 0 success, 2 invalid model or
arguments, 3 failed identity check, 4 input/output error.

Output schemas (JSON keys, CSV columns):

  validate    {a1..a7, walras_price, walras_volume, v_max, total_rate}
  solve       {gamma, kappa, lambda_minus, lambda_plus, f_minus_lo, f_plus_hi,
               classification, volume};  CSV x,f_minus,f_plus
  weights     {z, side, target_constant};  CSV x,w_minus,w_plus
  tick-solve  {n, gamma, kappa, f_minus_empty_bids, f_plus_empty_asks,
               classification, exact};  CSV point,u_mp,u_pm,f_minus,f_plus
  window      {v_w, v_max, v_l, j_lo, j_hi, saturated, phi_table};  CSV v,phi
  region      {resolution, intersection, members};
               CSV j_lo,j_hi,phi_minus,phi_plus,in_region
  simulate    {steps, kernel, empirical_f_minus, f_minus_se, ..., return_time_stats?};
               CSV step,n_buys,n_sells[,F_1..F_k[,V]] when sizes or
               functionals are collected, else x,f_minus,f_minus_se,f_plus,f_plus_se
  figure1     {steps, seed, n_buys, n_sells, best_bid, best_ask};  CSV x,cumulative
  classify    {classification, f_minus_lo, f_plus_hi}
  crosscheck  {passed, first_failure, checks: [{name, value, tol, passed}]}
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import analytic, discrete, errors, sim, window
from .model import ModelSpec, uniform, validate

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IDENTITY = 3
EXIT_IO = 4


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Fraction):
        return float(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats by None so the output is strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _emit(payload: dict) -> None:
    json.dump(_clean(json.loads(json.dumps(payload, default=_json_default))), sys.stdout, indent=2)
    sys.stdout.write("\n")


def _write_csv(path: str | None, header, rows) -> None:
    if not path:
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _load(path: str) -> ModelSpec:
    return ModelSpec.load(path)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_validate(args) -> int:
    rep = validate(_load(args.model))
    _emit(rep.to_dict())
    if args.require:
        rep.require(*[r.strip().lower() for r in args.require.split(",") if r.strip()])
    return EXIT_OK


def cmd_solve(args) -> int:
    spec = _load(args.model)
    sol = analytic.solve_luckock(spec, args.grid)
    out = sol.to_dict()
    out["volume"] = analytic.volume_of_trade(spec, sol)
    _emit(out)
    x = sol.f_minus.grid
    _write_csv(args.csv, ["x", "f_minus", "f_plus"], zip(x, sol.f_minus.values, sol.f_plus.values))
    return EXIT_OK


def cmd_weights(args) -> int:
    spec = _load(args.model)
    w = analytic.special_weights(spec, args.z, args.side, args.grid)
    _emit({"z": w.z, "side": w.side, "target_constant": w.target_constant})
    x = w.w_minus.grid
    _write_csv(args.csv, ["x", "w_minus", "w_plus"], zip(x, w.w_minus.values, w.w_plus.values))
    return EXIT_OK


def load_tick_model(path: str, n: int | None, exact: bool) -> discrete.TickModel:
    """A tick model from a file.

    The file holds either ``{"tick": {"buy_rates": [...], "sell_rates": [...]}}``
    or a model description; continuous models are discretised with ``n``
    levels and atomic ones are mapped onto their atoms.
    """
    with open(path) as fh:
        raw = json.load(fh)
    if "tick" in raw:
        t = raw["tick"]
        conv = Fraction if exact else (lambda v: float(Fraction(v)))
        try:
            return discrete.TickModel.from_rates([conv(str(v)) for v in t["buy_rates"]],
                                                 [conv(str(v)) for v in t["sell_rates"]], exact=exact)
        except KeyError as exc:
            raise errors.NonEvaluable(f"tick model needs {exc}") from None
    spec = ModelSpec.from_dict(raw)
    if spec.is_continuous:
        if not n:
            raise errors.NonEvaluable("a continuous model needs --n levels to be discretised")
        model = discrete.discretize(spec, n)
        return model.exact_copy() if exact else model
    return discrete.AtomicAdapter.build(spec, exact=exact).model


def cmd_tick_solve(args) -> int:
    model = load_tick_model(args.model, args.n, args.exact)
    sol = discrete.tick_solve(model)
    _emit(sol.to_dict())
    rows = []
    for k in range(model.n):
        rows.append([2 * k + 2, float(sol.u_mp[k]), float(sol.u_pm[k]), float(sol.f_minus[k]), float(sol.f_plus[k])])
    _write_csv(args.csv, ["point", "u_mp", "u_pm", "f_minus", "f_plus"], rows)
    return EXIT_OK


def cmd_window(args) -> int:
    res = window.v_luckock(_load(args.model))
    _emit(res.to_dict())
    _write_csv(args.csv, ["v", "phi"], res.phi_table)
    return EXIT_OK


def cmd_region(args) -> int:
    spec = _load(args.model)
    reg = window.phi_boundaries(spec, args.resolution, args.grid)
    _emit({"resolution": reg.resolution,
           "intersection": list(reg.intersection) if reg.intersection else None,
           "members": int(reg.membership.sum())})
    _write_csv(args.csv, ["j_lo", "j_hi", "phi_minus", "phi_plus", "in_region"],
               ((a, b, pm, pp, int(m)) for a, b, pm, pp, m in reg.rows()))
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = _load(args.model)
    collect = {c.strip() for c in args.collect.split(",") if c.strip()}
    unknown = collect - {"f", "returns", "sizes", "functionals"}
    if unknown:
        raise errors.OutOfRange(f"unknown collectors: {sorted(unknown)}")
    pairs = []
    if "functionals" in collect:
        if args.z is None:
            raise errors.OutOfRange("--collect functionals needs --z")
        w = analytic.special_weights(spec, args.z, args.side, args.grid)
        pairs.append((w.w_minus_fn, w.w_plus_fn))
    sample_every = args.sample_every if collect & {"sizes", "functionals"} else 0
    col = sim.Collectors(f_points=args.points, sample_every=sample_every, functionals=pairs,
                         lyapunov="functionals" in collect and spec.is_continuous)
    stats = sim.run(spec, args.steps, args.seed, col)
    out = stats.to_dict()
    if "returns" in collect:
        out["return_time_stats"] = sim.return_time_stats(spec, args.episodes, args.cap, args.seed).to_dict()
    _emit(out)
    if sample_every and stats.book_size_series.shape[0]:
        series = stats.book_size_series.astype(float)
        header = ["step", "n_buys", "n_sells"]
        if stats.functional_series is not None:
            extra = stats.functional_series[:, 1:]
            series = np.column_stack((series, extra))
            header += [f"F_{k + 1}" for k in range(len(pairs))]
            if col.lyapunov:
                header += ["F_lo", "F_hi", "V"]
        _write_csv(args.csv, header, series.tolist())
    else:
        _write_csv(args.csv, ["x", "f_minus", "f_minus_se", "f_plus", "f_plus_se"],
                   zip(stats.f_grid, stats.empirical_f_minus, stats.f_minus_se,
                       stats.empirical_f_plus, stats.f_plus_se))
    return EXIT_OK


def cmd_figure1(args) -> int:
    spec = _load(args.model) if args.model else uniform(0.0, 1.0)
    book, profile = sim.figure1_data(spec, args.steps, args.seed)
    _emit({"steps": args.steps, "seed": args.seed, "n_buys": len(book.buys), "n_sells": len(book.sells),
           "best_bid": book.best_bid(spec.interval_lo), "best_ask": book.best_ask(spec.interval_hi)})
    _write_csv(args.csv, ["x", "cumulative"], profile.tolist())
    return EXIT_OK


def cmd_classify(args) -> int:
    sol = analytic.solve_luckock(_load(args.model), args.grid)
    _emit({"classification": sol.classification.value, "f_minus_lo": sol.f_minus_lo, "f_plus_hi": sol.f_plus_hi})
    return EXIT_OK


# --------------------------------------------------------------------------
# Identity battery
# --------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    value: float
    tol: float
    passed: bool | None = None

    def __post_init__(self):
        if self.passed is None:
            self.passed = bool(np.isfinite(self.value) and self.value <= self.tol)

    def to_dict(self) -> dict:
        return {"name": self.name, "value": float(self.value), "tol": self.tol, "passed": self.passed}


def _continuous_checks(spec: ModelSpec, grid, inject_fault: bool, sim_steps: int, seed: int) -> list[Check]:
    rep = validate(spec)
    checks = []
    sol = analytic.solve_luckock(spec, grid)
    c = sol._core
    a, b = sol.gamma_forms
    checks.append(Check("gamma_two_forms", abs(a - b) / max(abs(a), abs(b)), analytic.GAMMA_RTOL))

    x = sol.f_minus.grid
    fm = sol.f_minus.values.copy()
    if inject_fault:
        fm[x.size // 2] += 1e-3
    resid = fm / c.lm(x) + sol.f_plus.values / c.lp(x) - sol.kappa * c.P(x)
    checks.append(Check("pointwise_identity", float(np.max(np.abs(resid))), analytic.IDENTITY_TOL))

    lo, hi = spec.interval_lo, spec.interval_hi
    v1 = float(spec.lam_plus(hi)) - fm[0] * float(spec.lam_plus(lo))
    v2 = float(spec.lam_minus(lo)) - sol.f_plus_hi * float(spec.lam_minus(hi))
    checks.append(Check("volume_identity", abs(v1 - v2), analytic.IDENTITY_TOL))

    u_sum = np.max(np.abs(c.u_mp(x) + c.u_pm(x) - c.P(x) / c.gamma - 1.0))
    checks.append(Check("u_sum_identity", float(u_sum), analytic.IDENTITY_TOL))

    rng = np.random.default_rng(seed)
    worst = 0.0
    for side in (analytic.MINUS, analytic.PLUS):
        for z in rng.uniform(lo, hi, 16):
            w = analytic.special_weights(spec, float(z), side, grid)
            p, q = np.sort(rng.uniform(lo, hi, (2, 8)), axis=0)
            bid = np.concatenate((p, [lo, lo, float(z)]))
            ask = np.concatenate((q, [hi, float(z), hi]))
            g = analytic.generator_apply(spec, w, bid, ask, grid)
            worst = max(worst, float(np.max(np.abs(g - analytic.generator_target(w, bid, ask)))))
    checks.append(Check("generator_closure", worst, analytic.IDENTITY_TOL))

    js = np.sort(rng.uniform(lo, hi, (2, 32)), axis=0)
    diff = analytic.lambda_difference_residual(spec, js[0], js[1], grid)
    checks.append(Check("lambda_difference_identity", float(np.max(np.abs(diff))), analytic.IDENTITY_TOL))

    if rep.holds("a5", "a7"):
        p = window._phi(spec)
        vs = np.linspace(p.v_w, p.v_max, 66)[1:-1]
        r_plus, r_minus = window.master_residual(spec, vs, grid)
        checks.append(Check("master_identity", float(max(np.max(np.abs(r_plus)), np.max(np.abs(r_minus)))), 1e-6))

    errs = [discrete.discrete_vs_continuous(spec, n, grid) for n in (50, 100, 200)]
    ratio_ok = errs[2] < errs[0] and errs[2] < 0.05
    checks.append(Check("discrete_convergence", errs[2], 0.05, passed=bool(ratio_ok)))

    if sol.classification is analytic.Classification.POSITIVE_RECURRENT and sim_steps > 0:
        stats = sim.run(spec, sim_steps, seed)
        z = np.abs(stats.empirical_f_minus - sol.f_minus_at(stats.f_grid)) / stats.f_minus_se
        checks.append(Check("simulation_f_minus_max_z", float(np.max(z)), 4.0))
    return checks


def _tick_checks(model: discrete.TickModel, seed: int) -> list[Check]:
    checks = []
    sol = discrete.tick_solve(model.exact_copy() if model.n <= discrete.EXACT_MAX_N else model)
    odd, even, boundary = discrete.luckock_residuals(sol)
    worst = max([abs(float(v)) for v in odd + even + list(boundary)] or [0.0])
    checks.append(Check("tick_luckock_residuals", worst, 0.0 if sol.model.exact else 1e-12))
    g1, g2 = sol.gamma_forms
    checks.append(Check("tick_gamma_two_forms", abs(float(g1 - g2)), 0.0 if sol.model.exact else 1e-12))
    rng = np.random.default_rng(seed)
    fsol = discrete.tick_solve(model)
    worst = 0.0
    for _ in range(64):
        book = discrete.random_tick_book(rng, model.n, 8)
        for z in list(model.odd_grid)[:-1]:
            w = discrete.tick_weights(model, z, analytic.MINUS, fsol)
            g = discrete.tick_generator_exact(model, book, w.w_minus, w.w_plus)
            bf = discrete.brute_force_generator(model, book, w.functional)
            worst = max(worst, abs(float(g) - float(bf)), abs(float(g) - float(w.target(book, model.n))))
    checks.append(Check("tick_generator_vs_brute_force", worst, 1e-12))
    return checks


def crosscheck(path: str, grid=None, inject_fault: bool = False, sim_steps: int = 200_000, seed: int = 0,
               n: int | None = None) -> dict:
    """Run the identity battery on the model in ``path``; returns the JSON report."""
    with open(path) as fh:
        raw = json.load(fh)
    if "tick" in raw:
        checks = _tick_checks(load_tick_model(path, None, False), seed)
    else:
        spec = ModelSpec.from_dict(raw)
        if spec.is_continuous:
            checks = _continuous_checks(spec, grid, inject_fault, sim_steps, seed)
        else:
            checks = _tick_checks(discrete.AtomicAdapter.build(spec).model, seed)
    failed = [c.name for c in checks if not c.passed]
    return {"passed": not failed, "first_failure": failed[0] if failed else None,
            "checks": [c.to_dict() for c in checks]}


def cmd_crosscheck(args) -> int:
    report = crosscheck(args.model, args.grid, args.inject_fault, args.sim_steps, args.seed, args.n)
    _emit(report)
    if not report["passed"]:
        print(f"identity check failed: {report['first_failure']}", file=sys.stderr)
        return EXIT_IDENTITY
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="luckock", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, model=True, grid=True, csv_=True):
        sp = sub.add_parser(name, help=help_, description=help_)
        if model:
            sp.add_argument("--model", required=True, help="model description (JSON)")
        if grid:
            sp.add_argument("--grid", type=_positive_int, default=None,
                            help="quadrature cells (default 4096 or $LUCKOCK_GRID)")
        if csv_:
            sp.add_argument("--csv", default=None, help="write the table to this CSV file")
        sp.set_defaults(func=fn)
        return sp

    sp = add("validate", cmd_validate, "check model assumptions; JSON report", grid=False, csv_=False)
    sp.add_argument("--require", default="", help="comma list of assumptions (e.g. a3,a6) that must hold")
    add("solve", cmd_solve, "equilibrium laws of best bid/ask; CSV x,f_minus,f_plus")
    sp = add("weights", cmd_weights, "special weight functions; CSV x,w_minus,w_plus")
    sp.add_argument("--z", type=float, required=True)
    sp.add_argument("--side", choices=(analytic.MINUS, analytic.PLUS), required=True)
    sp = add("tick-solve", cmd_tick_solve, "solve a tick model; CSV point,u_mp,u_pm,f_minus,f_plus", grid=False)
    sp.add_argument("--n", type=_positive_int, default=None, help="levels used to discretise a continuous model")
    sp.add_argument("--exact", action="store_true", help="rational arithmetic")
    add("window", cmd_window, "competitive window and volume of trade; CSV v,phi", grid=False)
    sp = add("region", cmd_region, "recurrence region; CSV j_lo,j_hi,phi_minus,phi_plus,in_region")
    sp.add_argument("--resolution", type=_positive_int, default=window.DEFAULT_RESOLUTION)
    sp = add("simulate", cmd_simulate, "simulate the chain; JSON summary and CSV series")
    sp.add_argument("--steps", type=_positive_int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--collect", default="f", help="comma list from f,returns,sizes,functionals")
    sp.add_argument("--z", type=float, default=None)
    sp.add_argument("--side", choices=(analytic.MINUS, analytic.PLUS), default=analytic.MINUS)
    sp.add_argument("--points", type=_positive_int, default=16, help="grid points for empirical laws")
    sp.add_argument("--sample-every", type=_positive_int, default=1000)
    sp.add_argument("--episodes", type=_positive_int, default=1000)
    sp.add_argument("--cap", type=_positive_int, default=100_000)
    sp = add("figure1", cmd_figure1, "book profile after K arrivals; CSV x,cumulative", grid=False)
    sp.set_defaults(model=None)
    for action in sp._actions:
        if action.dest == "model":
            action.required = False
            action.help = "model description (default: uniform on [0, 1])"
    sp.add_argument("--steps", type=_positive_int, default=10_000)
    sp.add_argument("--seed", type=int, default=0)
    add("classify", cmd_classify, "positive recurrence classification", csv_=False)
    sp = add("crosscheck", cmd_crosscheck, "run the identity battery; exit 3 on failure", csv_=False)
    sp.add_argument("--inject-fault", action="store_true", help="corrupt the f_minus table (self-test)")
    sp.add_argument("--sim-steps", type=int, default=200_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n", type=_positive_int, default=None)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (errors.IdentityViolation, errors.GridTooCoarse) as exc:
        print(f"identity failure: {exc}", file=sys.stderr)
        return EXIT_IDENTITY
    except (errors.LuckockError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
