"""Command-line front end: ``polysample {preprocess,sample,bench,uniformity}``.

Inputs are a polytope file (native ``.txt``/``.poly`` or ``.mps``) or a
generator spec ``simplex:N``, ``hypercube:N`` or ``birkhoff:N``; bench accepts
comma-separated sizes (``hypercube:10,100,1000``). Outputs go to ``--out``,
which defaults to ``$POLYSAMPLE_OUT`` or ``./polysample-out``.

Exit codes: 0 success, 1 computational failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import io, walks
from .diagnostics import DegenerateCoordinateWarning, radial_statistic, radial_uniformity, summarize
from .errors import MpsParseError, PolytopeError, PolytopeFormatError
from .model import (
    ConstrainedPolytope,
    generator_center,
    make_birkhoff,
    make_hypercube,
    make_simplex,
)
from .preprocess import facial_reduction, lift

log = logging.getLogger("polysample")

OUT_ENV = "POLYSAMPLE_OUT"
DEFAULT_OUT = "polysample-out"
GENERATORS = {"simplex": make_simplex, "hypercube": make_hypercube, "birkhoff": make_birkhoff}
# generators above this many coordinates start from their known center instead of an LP
PREPROCESS_MAX_D = 400


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# inputs


def parse_generator(spec):
    """``"name:size[,size...]"`` -> ``(name, [sizes])``, or None if ``spec`` is not a generator."""
    name, sep, sizes = spec.partition(":")
    if not sep or name not in GENERATORS:
        return None
    try:
        out = [int(s) for s in sizes.strip("{}").split(",")]
    except ValueError:
        raise UsageError(f"bad generator size in {spec!r}") from None
    if not out or min(out) < 1:
        raise UsageError(f"generator sizes must be positive integers: {spec!r}")
    return name, out


class Source:
    """A loaded polytope plus where it came from."""

    def __init__(self, label, polytope, generator=None, size=None, conversion=None):
        self.label = label
        self.polytope = polytope
        self.generator = generator
        self.size = size
        self.conversion = conversion

    @property
    def center(self):
        if self.generator is None:
            return None
        return generator_center(self.generator, self.size)


def load_sources(spec):
    gen = parse_generator(spec)
    if gen is not None:
        name, sizes = gen
        return [Source(f"{name}:{s}", GENERATORS[name](s), name, s) for s in sizes]
    path = Path(spec)
    if not path.is_file():
        raise UsageError(f"no such file or generator spec: {spec!r}")
    try:
        if path.suffix.lower() == ".mps":
            conv = io.convert_mps(io.read_mps(path))
            return [Source(spec, conv.polytope, conversion=conv)]
        p = io.read_polytope(path)
    except (MpsParseError, PolytopeFormatError) as exc:
        raise UsageError(f"{spec}: {exc}") from exc
    if not isinstance(p, ConstrainedPolytope):
        raise UsageError(f"{spec}: only constrained (K2) polytope files are accepted")
    return [Source(spec, p)]


def load_one(spec):
    sources = load_sources(spec)
    if len(sources) != 1:
        raise UsageError("this command takes a single polytope")
    return sources[0]


def prepare(src: Source):
    """Reduced polytope, start point and lift function for sampling."""
    p = src.polytope
    if src.generator is not None and p.d > PREPROCESS_MAX_D:
        return p, src.center, (lambda X: X), None
    fr = facial_reduction(p)
    return fr.reduced, fr.x0, (lambda X: lift(fr, X)), fr


def out_dir(args):
    path = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    path.mkdir(parents=True, exist_ok=True)
    return path


def walk_config(args, steps=None):
    if args.walk == "lee_sidford" and not args.experimental:
        raise UsageError(
            "the Lee-Sidford walk is experimental (its weights need a slow gradient descent "
            "at every step); pass --experimental to run it"
        )
    try:
        return walks.WalkConfig(
            kind=args.walk, form=args.form, r=args.r, epsilon=args.epsilon, seed=args.seed,
            steps=args.steps if steps is None else steps, thin=args.thin,
            burn_in=args.burn_in, c=args.c,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _config_dict(cfg):
    return {
        "walk": cfg.kind, "form": cfg.form, "r": cfg.r, "epsilon": cfg.epsilon, "seed": cfg.seed,
        "steps": cfg.steps, "thin": cfg.thin, "burn_in": cfg.burn_in, "c": cfg.c,
    }


def _chain_dict(chain):
    return {
        "accepted": chain.accepted,
        "proposed": chain.proposed,
        "infeasible_rejects": chain.infeasible_rejects,
        "acceptance_rate": chain.acceptance_rate,
        "per_step_seconds": chain.per_step_seconds,
        "max_eq_residual": chain.max_eq_residual,
        "n_samples": int(chain.samples.shape[0]),
    }


def _dims(p):
    return {"d": p.d, "n": p.n, "k": p.k, "d_eff": p.d_eff, "nnz": p.nnz}


# ---------------------------------------------------------------------------
# commands


def cmd_preprocess(args):
    src = load_one(args.input)
    fr = facial_reduction(src.polytope)
    out = out_dir(args)
    io.write_polytope(fr.reduced, out / "reduced.txt")
    report = {
        "input": src.label,
        "original": _dims(src.polytope),
        "reduced": _dims(fr.reduced),
        "rounds": fr.rounds,
        "delta": fr.delta,
        "x0": fr.x0,
        "columns": fr.columns,
        "rows": fr.rows,
        "fixed_variables": [
            {"index": f.index, "round": f.round, "y": f.y} for f in fr.fixed_variables
        ],
    }
    io.write_report_json(report, out / "preprocess.json")
    print(f"{src.label}: {fr.rounds} facial reduction round(s), "
          f"{len(fr.fixed_variables)} variable(s) fixed, delta={fr.delta:.6g}; "
          f"wrote {out / 'reduced.txt'}")
    return 0


def cmd_sample(args):
    src = load_one(args.input)
    cfg = walk_config(args)
    p, x0, lift_fn, _ = prepare(src)
    chain = walks.run_chain(p, cfg, x0=x0)
    out = out_dir(args)
    io.write_samples_csv(lift_fn(chain.samples), out / "samples.csv")
    report = {"input": src.label, "polytope": _dims(p), "config": _config_dict(cfg),
              "chain": _chain_dict(chain)}
    if chain.samples.shape[0] >= 10:
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateCoordinateWarning)
            report.update(summarize(chain, p, x0).to_dict())
    io.write_report_json(report, out / "report.json")
    print(f"{src.label}: {chain.samples.shape[0]} samples, "
          f"acceptance rate {chain.acceptance_rate:.3f}; wrote {out / 'samples.csv'}")
    return 0


BENCH_FIELDS = ["input", "d", "n", "k", "d_eff", "walk", "form", "mode", "trials", "steps",
                "seconds_per_step", "seconds_per_step_median", "ess", "steps_per_ess",
                "acceptance_rate", "status"]


def cmd_bench(args):
    sources = [s for spec in args.inputs for s in load_sources(spec)]
    cfg = walk_config(args)
    out = out_dir(args)
    deadline = time.perf_counter() + args.time_limit
    rows = []
    for src in sources:
        p = src.polytope
        row = {"input": src.label, "d": p.d, "n": p.n, "k": p.k, "d_eff": p.d_eff,
               "walk": cfg.kind, "form": cfg.form, "mode": args.mode, "trials": 0, "steps": 0,
               "seconds_per_step": "", "seconds_per_step_median": "", "ess": "",
               "steps_per_ess": "", "acceptance_rate": "", "status": "timeout"}
        rows.append(row)
        left = deadline - time.perf_counter()
        if left <= 0:
            continue
        try:
            if src.generator is not None:
                x0 = src.center
            else:
                p, x0, _, _ = prepare(src)
                row.update({key: val for key, val in _dims(p).items() if key != "nnz"})
            if args.mode == "per-iteration":
                times, steps, acc, complete = [], 0, [], 0
                for trial in range(args.trials):
                    left = deadline - time.perf_counter()
                    if left <= 0:
                        break
                    c = walks.WalkConfig(cfg.kind, cfg.form, cfg.r, cfg.epsilon, cfg.seed + trial,
                                         args.steps, 1, 0, cfg.c)
                    chain = walks.run_chain(p, c, x0=x0, time_limit=left)
                    if chain.proposed:
                        times.append(chain.per_step_seconds)
                        steps += chain.proposed
                        acc.append(chain.acceptance_rate)
                    if chain.proposed < args.steps:
                        break
                    complete += 1
                row["trials"] = len(times)
                row["steps"] = steps
                if times:
                    merged = walks._merge_timing(times)
                    row["seconds_per_step"] = merged["mean"]
                    row["seconds_per_step_median"] = merged["median"]
                    row["acceptance_rate"] = float(np.mean(acc))
                if complete == args.trials:
                    row["status"] = "ok"
            else:
                chain, e, status = walks.run_to_ess(
                    p, cfg, args.target_ess, x0=x0, block_steps=args.steps, time_limit=left,
                    max_steps=args.max_samples,
                )
                row["trials"] = 1
                row["steps"] = chain.proposed
                row["seconds_per_step"] = chain.per_step_seconds["mean"]
                row["seconds_per_step_median"] = chain.per_step_seconds["median"]
                row["ess"] = e
                row["steps_per_ess"] = chain.proposed / e if e > 0 else ""
                row["acceptance_rate"] = chain.acceptance_rate
                row["status"] = status
        except PolytopeError as exc:
            row["status"] = f"error: {exc}"
        print(f"{src.label}: {row['status']}", file=sys.stderr)
    with open(out / "bench.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=BENCH_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in row.items()})
    print(f"wrote {out / 'bench.csv'} ({len(rows)} rows)")
    return 0


def cmd_uniformity(args):
    src = load_one(args.input)
    p, x0, lift_fn, fr = prepare(src)
    out = out_dir(args)
    if args.samples:
        try:
            X = io.read_samples_csv(args.samples)
        except (OSError, ValueError, IndexError) as exc:
            raise UsageError(f"cannot read samples from {args.samples}: {exc}") from exc
        if fr is not None:
            X = X[:, fr.columns]
        e, status, chain = None, "samples", None
    else:
        cfg = walk_config(args)
        chain, e, status = walks.run_to_ess(p, cfg, args.target_ess, x0=x0,
                                            block_steps=args.steps, max_steps=args.max_samples)
        X = chain.samples
    ks, pv = radial_uniformity(X, p, x0)
    stat = np.sort(radial_statistic(X, p, x0))
    n = stat.size
    with open(out / "ecdf.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["radial_statistic", "ecdf", "uniform_cdf"])
        for i, s in enumerate(stat):
            w.writerow([f"{s:.17g}", f"{(i + 1) / n:.17g}", f"{min(max(s, 0.0), 1.0):.17g}"])
    report = {"input": src.label, "polytope": _dims(p), "n_samples": n, "ks_statistic": ks,
              "ks_pvalue": pv, "ess_min": e, "status": status}
    if chain is not None:
        report["config"] = _config_dict(walk_config(args))
        report["chain"] = _chain_dict(chain)
    io.write_report_json(report, out / "uniformity.json")
    print(f"{src.label}: KS statistic {ks:.4f}, p-value {pv:.4g} over {n} samples")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_walk_args(sp, steps_default=1000, thin_default=1):
    sp.add_argument("--walk", default="dikin", choices=walks.WALK_KINDS)
    sp.add_argument("--form", default="sparse", choices=["dense", "sparse", "dense_k1", "sparse_k2"])
    sp.add_argument("--r", type=float, default=0.5, help="proposal radius (default 0.5)")
    sp.add_argument("--c", type=float, default=None, help="override the variance correction constant")
    sp.add_argument("--steps", type=int, default=steps_default)
    sp.add_argument("--thin", type=int, default=thin_default)
    sp.add_argument("--burn-in", type=int, default=0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--epsilon", type=float, default=1e-12)
    sp.add_argument("--experimental", action="store_true",
                    help="allow the Lee-Sidford walk")
    sp.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")


def build_parser():
    ap = argparse.ArgumentParser(prog="polysample", description="Uniform sampling from polytopes.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("preprocess", help="facial reduction and initialization")
    sp.add_argument("input", help="polytope file or generator spec")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("sample", help="run one chain and write samples.csv and report.json")
    sp.add_argument("input")
    _add_walk_args(sp)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("bench", help="per-iteration cost or steps to a target ESS")
    sp.add_argument("inputs", nargs="+", help="files or generator specs (sizes may be comma lists)")
    sp.add_argument("--mode", choices=["per-iteration", "mixing"], default="per-iteration")
    sp.add_argument("--trials", type=int, default=10)
    sp.add_argument("--target-ess", type=float, default=500)
    sp.add_argument("--max-samples", type=int, default=None,
                    help="mixing mode: stop after this many kept samples")
    sp.add_argument("--time-limit", type=float, default=24 * 3600.0,
                    help="wall-clock budget in seconds for the whole sweep")
    _add_walk_args(sp, steps_default=500)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("uniformity", help="radial uniformity test with ECDF output")
    sp.add_argument("input")
    sp.add_argument("--target-ess", type=float, default=500)
    sp.add_argument("--max-samples", type=int, default=None)
    sp.add_argument("--samples", default=None, help="test an existing samples CSV instead of sampling")
    _add_walk_args(sp, steps_default=200, thin_default=50)
    sp.set_defaults(func=cmd_uniformity)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"polysample: error: {exc}", file=sys.stderr)
        return 2
    except PolytopeError as exc:
        print(f"polysample: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"polysample: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
