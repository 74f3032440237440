"""Command-line front end.

Every command writes its results into ``--out`` together with
``manifest.json`` (arguments, seeds, version, SHA-256 of each output) and a
``timing.csv`` sidecar; wall times never enter the result files, so
``qmckit replay`` can demand byte-identical output.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import tempfile
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .cbc import (CbcConfig, cbc_interlaced, cbc_lattice, is_prime, load_vector, save_vector,
                  wce_sq)
from .estimate import loglog_slope, shifted_lattice_estimate
from .points import GeneratingVector, draw_shifts, lattice_points
from .transforms import MarginalDensity, norminv
from .weights import (BoundParams, CalibrationInput, WeightModel, calibrate_weights,
                      interlaced_bound_factor, pod_from_derivative_bounds, rms_bound_factor)

MANIFEST = "manifest.json"
TIMING = "timing.csv"


class ValidationError(Exception):
    """An internal consistency check failed (exit code 1)."""


# --------------------------------------------------------------------------
# helpers


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialise {type(v).__name__}")


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def parse_int_list(text: str) -> list[int]:
    """``"7:13"`` (inclusive range) or ``"128,256"``."""
    if ":" in text:
        lo, hi = (int(t) for t in text.split(":"))
        return list(range(lo, hi + 1))
    return [int(t) for t in text.split(",") if t]


def parse_weights(spec: str, s: int) -> WeightModel:
    """A weight JSON file, or inline ``geom:c`` (``c^j``) / ``power:p`` (``j^-p``)."""
    path = Path(spec)
    if path.is_file():
        try:
            w = WeightModel.from_json(path.read_text())
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"invalid weights file {spec}: {exc}") from exc
        if w.dim < s:
            raise ValueError(f"weights file covers {w.dim} coordinates, need {s}")
        return w
    kind, _, val = spec.partition(":")
    j = np.arange(1, s + 1, dtype=float)
    try:
        x = float(val)
    except ValueError:
        raise ValueError(f"cannot read weights {spec!r}: not a file, geom:c or power:p") from None
    if kind == "geom":
        return WeightModel.product(x**j)
    if kind == "power":
        return WeightModel.product(j**-x)
    raise ValueError(f"cannot read weights {spec!r}: not a file, geom:c or power:p")


def parse_density(spec: str) -> MarginalDensity:
    kind, _, nu = spec.partition(":")
    return MarginalDensity(kind, float(nu) if nu else None)


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = argv
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []
        self.timings: list[tuple[str, float]] = []
        self.seeds: dict = {}
        self.t0 = time.perf_counter()

    def path(self, name: str) -> Path:
        if name not in self.outputs:
            self.outputs.append(name)
        return self.out / name

    def timed(self, label, fn, *a, **kw):
        t = time.perf_counter()
        res = fn(*a, **kw)
        self.timings.append((label, time.perf_counter() - t))
        return res

    def finish(self) -> None:
        wall = time.perf_counter() - self.t0
        write_csv(self.out / TIMING, ["step", "seconds"], self.timings + [("total", wall)])
        params = {k: v for k, v in vars(self.args).items() if k != "func"}
        write_json(self.out / MANIFEST, {
            "command": self.args.command, "argv": self.argv, "params": params,
            "seeds": self.seeds, "version": __version__, "wall_time": wall,
            "outputs": {name: sha256(self.out / name) for name in sorted(self.outputs)},
        })


def _rule(args, s: int, n: int | None = None, weights: str | None = None):
    """Generating vector from ``--rule`` or a CBC construction for ``n``."""
    if getattr(args, "rule", None) and n is None:
        gv = load_vector(args.rule)
        if gv.s < s:
            raise ValueError(f"rule file has dimension {gv.s}, need {s}")
        if gv.s > s:
            gv = GeneratingVector(gv.n, gv.z[:s])
        return gv
    n = n or args.n
    gv, trace = cbc_lattice(CbcConfig(n, s, parse_weights(weights or args.weights, s)))
    for msg in trace.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    return gv


# --------------------------------------------------------------------------
# commands


def cmd_cbc(args, run: Run) -> None:
    w = parse_weights(args.weights, args.s)
    if args.alpha > 1:
        m = int(round(math.log2(args.n)))
        if 1 << m != args.n:
            raise ValueError("interlaced rules need n = 2^m")
        rule = run.timed("cbc", cbc_interlaced, m, args.s, args.alpha, w)
        with open(run.path("poly_vector.txt"), "w") as fh:
            fh.write(f"{m} {rule.rule.p} {args.alpha} {args.s}\n")
            fh.write(" ".join(str(q) for q in rule.rule.q) + "\n")
        write_json(run.path("trace.json"), rule.trace.to_dict())
        print(f"interlaced polynomial lattice: m={m} alpha={args.alpha} q={list(rule.rule.q)}")
        return
    gv, trace = run.timed("cbc", cbc_lattice, CbcConfig(args.n, args.s, w, args.mode))
    for msg in trace.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    save_vector(gv, run.path("vector.txt"))
    write_json(run.path("trace.json"), trace.to_dict())
    print(f"n={gv.n} z={list(gv.z)} wce_sq={trace.criterion[-1]:.17g}")


def cmd_points(args, run: Run) -> None:
    gv = _rule(args, args.s)
    run.seeds["shift"] = args.seed
    if args.shifts == 0:
        sets = [lattice_points(gv)]
    else:
        sets = [lattice_points(gv, d) for d in draw_shifts(gv.s, args.shifts, args.seed)]
    if args.format == "bin":
        if len(sets) != 1:
            raise ValueError("binary output holds a single point set (use --shifts 0 or 1)")
        sets[0].to_binary(run.path("points.bin"))
        return
    header = ["shift"] + [f"x{j + 1}" for j in range(gv.s)]
    rows = ([r] + list(row) for r, ps in enumerate(sets) for row in ps.coords)
    write_csv(run.path("points.csv"), header, rows)


def cmd_bound(args, run: Run) -> None:
    w = parse_weights(args.weights, args.s)
    result = {"n": args.n, "s": args.s, "lambda": args.lam}
    if args.alpha > 1:
        result["interlaced_bound_factor"] = interlaced_bound_factor(
            w, BoundParams(args.lam, args.n, args.s, alpha=args.alpha))
    else:
        factor = rms_bound_factor(w, BoundParams(args.lam, args.n, args.s))
        result["rms_bound_factor"] = factor
        gv = _rule(args, args.s)
        if gv.n != args.n:
            raise ValueError(f"rule has n={gv.n}, bound requested for n={args.n}")
        e2 = wce_sq(gv, w)
        result["wce_sq"] = e2
        if args.lam == 1.0:
            result["bound_holds"] = bool(e2 <= factor**2 * (1 + 1e-12))
    write_json(run.path("bound.json"), result)
    print(json.dumps(result))
    if result.get("bound_holds") is False:
        raise ValidationError("measured wce_sq exceeds the bound factor")


def cmd_calibrate(args, run: Run) -> None:
    if args.pod_bounds:
        b = [float(t) for t in args.pod_bounds.split(",")]
        w = pod_from_derivative_bounds(b, args.lam)
        C = None
    else:
        if not args.input:
            raise ValueError("calibrate needs --input or --pod-bounds")
        d = json.loads(Path(args.input).read_text())
        B = {tuple(json.loads(k)): float(v) for k, v in d["B"].items()}
        A = {tuple(json.loads(k)): float(v) for k, v in d["A"].items()} if "A" in d else None
        w, C = calibrate_weights(CalibrationInput(B, float(d.get("lam", args.lam)), A))
    run.path("weights.json").write_text(w.to_json() + "\n")
    write_json(run.path("calibration.json"), {"C_gamma": C, "variant": w.variant, "dim": w.dim})
    print(f"weights: {w.variant}, dim={w.dim}, C_gamma={C}")


def _estimate_row(est):
    return [est.n, est.shifts, est.value, est.std_error]


def cmd_option(args, run: Run) -> None:
    from .option import AsianOption, CovarianceOperator, price
    opt = AsianOption(args.T, args.s, args.K, args.S0, args.r, args.sigma)
    cov = CovarianceOperator(args.method, args.s, args.T)
    dim = args.s - 1 if args.smoothed else args.s
    gv = _rule(args, dim)
    run.seeds["shift"] = args.seed
    est = run.timed("estimate", price, opt, cov, gv, args.shifts, args.smoothed, args.seed,
                    args.threads)
    write_csv(run.path("result.csv"), ["n", "shifts", "estimate", "std_error"], [_estimate_row(est)])
    print(f"price={est.value:.10g} se={fmt(est.std_error)}")


def _glmm_model(args):
    from .glmm import GlmmModel
    if args.model:
        return GlmmModel.from_json(Path(args.model).read_text())
    tau = [2, 0, 3, 1, 4, 1, 2, 0]
    return GlmmModel(0.5, tuple((tau * (args.s // len(tau) + 1))[: args.s]), 0.5, 0.5)


def cmd_glmm(args, run: Run) -> None:
    from .glmm import gauss_hermite_likelihood, likelihood
    m = _glmm_model(args)
    gv = _rule(args, m.s)
    run.seeds["shift"] = args.seed
    est = run.timed("estimate", likelihood, m, parse_density(args.density), gv, args.shifts,
                    args.seed, args.threads)
    L = math.exp(est.meta["log_likelihood"])
    row = _estimate_row(est) + [est.meta["log_likelihood"], est.meta["log_std_error"], L]
    header = ["n", "shifts", "estimate", "std_error", "log_likelihood", "log_std_error", "likelihood"]
    if args.gauss_hermite:
        ref = run.timed("gauss_hermite", gauss_hermite_likelihood, m, args.gauss_hermite)
        header += ["gauss_hermite", "relative_error"]
        row += [ref, abs(L - ref) / ref]
    write_csv(run.path("result.csv"), header, [row])
    print(f"log-likelihood={est.meta['log_likelihood']:.12g}")


def _pde_setup(args):
    from .pde import problem_from_json
    text = Path(args.problem).read_text() if args.problem else json.dumps(
        {"M": 127, "coefficient": {"kind": "uniform", "s": args.s}})
    return problem_from_json(text)


def cmd_pde(args, run: Run) -> None:
    from .pde import expected_functional
    problem, coeff = _pde_setup(args)
    gv = _rule(args, coeff.dim)
    run.seeds["shift"] = args.seed
    est = run.timed("estimate", expected_functional, problem, coeff, gv, args.shifts, args.seed,
                    args.threads)
    write_csv(run.path("result.csv"), ["n", "shifts", "estimate", "std_error"], [_estimate_row(est)])
    print(f"E[G(u)]={est.value:.12g} se={fmt(est.std_error)}")


def cmd_mdm(args, run: Run) -> None:
    from scipy import special

    from .savers import build_active_set, mdm_estimate, tensor_rule
    from .testfns import exponential_product
    b = [float(t) for t in args.b.split(",")] if args.b else \
        list(0.5 * np.arange(1, args.s + 1, dtype=float) ** -2.0)
    active = run.timed("active_set", build_active_set, b, args.eps)
    x, wq = special.roots_legendre(args.nodes)
    rule = tensor_rule(0.5 * (x + 1.0), 0.5 * wq)
    f = exponential_product(b)
    est = run.timed("mdm", mdm_estimate, f, np.zeros(len(b)), active, rule)
    run.path("active_set.json").write_text(active.to_json() + "\n")
    write_csv(run.path("result.csv"),
              ["active_sets", "evaluations", "estimate", "exact", "error", "tail_bound"],
              [[len(active.sets), est.evaluations, est.value, 1.0, abs(est.value - 1.0), active.tail]])
    print(f"MDM={est.value:.15g} |A|={len(active.sets)} tail={active.tail:.3g}")
    if not active.certified:
        raise ValidationError("active-set tail certificate failed")


def cmd_ml(args, run: Run) -> None:
    from .option import AsianOption
    from .savers import allocate_levels, level_seeds, multilevel_estimate, option_level_family
    steps = parse_int_list(args.steps)
    opt = AsianOption(args.T, steps[-1], args.K, args.S0, args.r, args.sigma)
    fam = option_level_family(opt, steps)
    L = fam.max_level
    if args.eps:
        pilot_rules = [_rule(args, s, n=args.pilot_n) for s in steps]
        pilot = run.timed("pilot", multilevel_estimate, fam, L, pilot_rules, max(args.shifts, 8),
                          args.seed + 1, False, args.threads)
        V = [lv["std_error"] ** 2 * args.pilot_n * max(args.shifts, 8) for lv in pilot.meta["levels"]]
        sizes = allocate_levels(V, fam.costs, args.eps)
    else:
        sizes = [args.n] * (L + 1)
    rules = [_rule(args, s, n=n) for s, n in zip(steps, sizes)]
    est = run.timed("estimate", multilevel_estimate, fam, L, rules, args.shifts, args.seed, False,
                    args.threads)
    run.seeds.update(root=args.seed, levels=level_seeds(args.seed, L + 1))
    write_csv(run.path("levels.csv"), ["level", "s", "n", "estimate", "std_error"],
              [[lv["level"], steps[lv["level"]], lv["n"], lv["value"], lv["std_error"]]
               for lv in est.meta["levels"]])
    write_csv(run.path("result.csv"), ["estimate", "std_error"], [[est.value, est.std_error]])
    print(f"multilevel price={est.value:.10g} se={fmt(est.std_error)}")


def cmd_mvm_bench(args, run: Run) -> None:
    from .savers import FastMvmPlan, fast_mvm, naive_mvm
    if not is_prime(args.n):
        raise ValueError(f"n={args.n} is not prime")
    header = ["n", "s", "q", "chi", "max_deviation"]
    if args.q == 0:
        write_csv(run.path("bench.csv"), header, [])
        return
    gv = _rule(args, args.s)
    plan = FastMvmPlan.create(gv)
    rng = np.random.Generator(np.random.PCG64(args.seed))
    run.seeds["matrix"] = args.seed
    A = rng.standard_normal((args.s, args.q))
    chi = norminv if args.chi == "norminv" else (lambda x: x)
    fast = run.timed("fast", fast_mvm, plan, A, chi)
    naive = run.timed("naive", naive_mvm, plan, A, chi)
    dev = float(np.max(np.abs(fast - naive)))
    write_csv(run.path("bench.csv"), header, [[args.n, args.s, args.q, args.chi, dev]])
    print(f"max deviation {dev:.3g}; fast {run.timings[-2][1]:.4f}s, naive {run.timings[-1][1]:.4f}s")
    if dev > 1e-10:
        raise ValidationError(f"fast product deviates from naive by {dev:.3g}")


def _convergence_runner(args):
    """(integrand dimension, estimator(gv, seed) -> Estimate, exact value or None)."""
    if args.app == "smooth-test":
        from .testfns import bernoulli_product
        g = 0.9 ** np.arange(1, args.s + 1)
        f = bernoulli_product(g)
        return args.s, lambda gv, seed: shifted_lattice_estimate(f, gv, args.shifts, seed,
                                                                 args.threads), 1.0
    if args.app == "option":
        from .option import AsianOption, CovarianceOperator, price
        opt = AsianOption(s=args.s)
        cov = CovarianceOperator(args.method, args.s)
        dim = args.s - 1 if args.smoothed else args.s
        return dim, lambda gv, seed: price(opt, cov, gv, args.shifts, args.smoothed, seed,
                                           args.threads), None
    if args.app == "glmm":
        from .glmm import likelihood
        m = _glmm_model(args)
        dens = parse_density(args.density)
        return m.s, lambda gv, seed: likelihood(m, dens, gv, args.shifts, seed, args.threads), None
    from .pde import expected_functional
    problem, coeff = _pde_setup(args)
    return coeff.dim, lambda gv, seed: expected_functional(problem, coeff, gv, args.shifts, seed,
                                                           args.threads), None


def cmd_convergence(args, run: Run) -> None:
    ns = parse_int_list(args.n_list) if args.n_list else [1 << m for m in parse_int_list(args.m_list)]
    rows = []
    if args.app == "smooth-test" and args.alpha > 1:
        from .testfns import exponential_product
        f = exponential_product(0.5 ** np.arange(1, args.s + 1))
        w = parse_weights(args.weights or "geom:0.5", args.s)
        for n in ns:
            m = int(round(math.log2(n)))
            if 1 << m != n:
                raise ValueError("interlaced rules need n = 2^m")
            rule = run.timed(f"cbc n={n}", cbc_interlaced, m, args.s, args.alpha, w)
            q = float(f(rule.points().coords).mean())
            rows.append([n, q, None, abs(q - 1.0)])
    else:
        dim, estimator, exact = _convergence_runner(args)
        wspec = args.weights or ("geom:0.9" if args.app == "smooth-test" else "power:2")
        seeds = {}
        for k, n in enumerate(ns):
            gv = run.timed(f"cbc n={n}", _rule, args, dim, n, wspec)
            seed = args.seed + k
            seeds[str(n)] = seed
            est = run.timed(f"estimate n={n}", estimator, gv, seed)
            v = np.asarray(est.shift_values)
            if exact is not None:
                err = float(np.sqrt(np.mean((v - exact) ** 2)))
            else:
                err = float(np.std(v, ddof=1)) if len(v) > 1 else None
            rows.append([n, est.value, est.std_error, err])
        run.seeds["shift"] = seeds
    write_csv(run.path("convergence.csv"), ["n", "estimate", "std_error", "rms_error"], rows)
    pts = [(r[0], r[3]) for r in rows if r[3] is not None and r[3] > 0]
    slope = loglog_slope(*zip(*pts)) if len(pts) >= 2 else None
    write_json(run.path("summary.json"), {"app": args.app, "slope": slope, "n": ns})
    print(f"slope={fmt(slope)}")


def cmd_replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    argv = list(manifest["argv"])
    out = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="qmckit-replay-"))
    if "--out" in argv:
        argv[argv.index("--out") + 1] = str(out)
    else:
        argv += ["--out", str(out)]
    if args.threads is not None:
        if "--threads" in argv:
            argv[argv.index("--threads") + 1] = str(args.threads)
        else:
            argv += ["--threads", str(args.threads)]
    code = main(argv)
    if code != 0:
        return code
    replayed = json.loads((out / MANIFEST).read_text())["outputs"]
    bad = [k for k, v in manifest["outputs"].items() if replayed.get(k) != v]
    if bad:
        print(f"replay mismatch in {', '.join(bad)}", file=sys.stderr)
        return 1
    print(f"replay reproduced {len(manifest['outputs'])} output(s) in {out}")
    return 0


# --------------------------------------------------------------------------
# parser


def _common(p, rule=True):
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--seed", type=int, default=0, help="shift / sampling seed (default 0)")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    if rule:
        p.add_argument("--n", type=int, default=4096, help="number of lattice points")
        p.add_argument("--rule", help="generating vector file (overrides the CBC construction)")
        p.add_argument("--weights", default="power:2",
                       help="weight JSON file, or geom:c / power:p product weights")
        p.add_argument("--shifts", type=int, default=16, help="number of random shifts R")


def _option_flags(p):
    p.add_argument("--method", choices=["standard", "brownian_bridge", "pca"], default="pca")
    p.add_argument("--smoothed", action="store_true", help="preintegrate the first PCA variable")
    for name, default in (("T", 1.0), ("K", 100.0), ("S0", 100.0), ("r", 0.1), ("sigma", 0.2)):
        p.add_argument(f"--{name}", type=float, default=default)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qmckit", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cbc", help="construct a generating vector")
    _common(p)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--alpha", type=int, default=1, help="interlacing factor (>1: polynomial lattice)")
    p.add_argument("--mode", choices=["fast", "naive"], default="fast")
    p.set_defaults(func=cmd_cbc)

    p = sub.add_parser("points", help="write (shifted) lattice points")
    _common(p)
    p.set_defaults(shifts=0)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--format", choices=["csv", "bin"], default="csv")
    p.set_defaults(func=cmd_points)

    p = sub.add_parser("bound", help="evaluate the error-bound factor")
    _common(p)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--alpha", type=int, default=1)
    p.add_argument("--lam", type=float, default=1.0)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("calibrate", help="calibrate weights from derivative bounds")
    _common(p, rule=False)
    p.add_argument("--input", help='JSON {"lam": .., "B": {"[0]": ..}, "A": {..}}')
    p.add_argument("--pod-bounds", help="comma-separated b_j for POD weights")
    p.add_argument("--lam", type=float, default=1.0)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("option", help="price an Asian option")
    _common(p)
    p.add_argument("--s", type=int, default=16)
    _option_flags(p)
    p.set_defaults(func=cmd_option)

    p = sub.add_parser("glmm", help="Poisson GLMM likelihood")
    _common(p)
    p.add_argument("--s", type=int, default=3)
    p.add_argument("--model", help="model JSON {beta, tau, sigma2, kappa}")
    p.add_argument("--density", default="logistic", help="normal, logistic or student:nu")
    p.add_argument("--gauss-hermite", type=int, default=0, help="also compute a tensor Gauss-Hermite reference")
    p.set_defaults(func=cmd_glmm)

    p = sub.add_parser("pde", help="expected functional of a random-coefficient PDE")
    _common(p)
    p.add_argument("--s", type=int, default=4)
    p.add_argument("--problem", help="problem JSON (mesh, covariance, truncation)")
    p.set_defaults(func=cmd_pde)

    p = sub.add_parser("mdm", help="multivariate decomposition method on a product test function")
    _common(p, rule=False)
    p.add_argument("--s", type=int, default=8)
    p.add_argument("--b", help="comma-separated non-increasing b_j in [0, 1]")
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--nodes", type=int, default=8, help="Gauss-Legendre nodes per coordinate")
    p.set_defaults(func=cmd_mdm)

    p = sub.add_parser("ml", help="multilevel Asian option estimate")
    _common(p)
    p.add_argument("--steps", default="2,4,8,16", help="time steps per level (doubling)")
    p.add_argument("--eps", type=float, help="target accuracy (enables pilot-based allocation)")
    p.add_argument("--pilot-n", type=int, default=256)
    _option_flags(p)
    p.set_defaults(func=cmd_ml)

    p = sub.add_parser("mvm-bench", help="fast vs naive lattice matrix-vector product")
    _common(p)
    p.set_defaults(n=8191)
    p.add_argument("--s", type=int, default=256)
    p.add_argument("--q", type=int, default=16)
    p.add_argument("--chi", choices=["identity", "norminv"], default="norminv")
    p.set_defaults(func=cmd_mvm_bench)

    p = sub.add_parser("convergence", help="error table and fitted log-log slope")
    _common(p)
    p.set_defaults(weights=None)
    p.add_argument("--app", choices=["smooth-test", "option", "glmm", "pde"], required=True)
    p.add_argument("--m-list", default="7:13", help="log2 n values, e.g. 7:13")
    p.add_argument("--n-list", help="explicit n values (overrides --m-list)")
    p.add_argument("--s", type=int, default=8)
    p.add_argument("--alpha", type=int, default=1, help="smooth-test only: interlacing factor")
    p.add_argument("--model")
    p.add_argument("--density", default="logistic")
    p.add_argument("--problem")
    _option_flags(p)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    p.add_argument("manifest")
    p.add_argument("--out", help="directory for the replayed outputs (default: temporary)")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=None)
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            return cmd_replay(args)
        run = Run(args, argv)
        with warnings.catch_warnings():
            # fallbacks are reported from the trace instead
            warnings.simplefilter("ignore", UserWarning)
            args.func(args, run)
        run.finish()
        return 0
    except ValidationError as exc:
        run.finish()
        print(f"validation failed: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
