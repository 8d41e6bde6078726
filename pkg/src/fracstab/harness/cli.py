"""Command line front end.

Exit status: 0 on a completed run (an "undetermined" verdict included), 1 on
an execution failure, 2 on a malformed spec or bad arguments.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from ..mlf import MLEvaluationError, MLParams, eval_scalar
from ..spectral import (FracSystem, classify_eigenvalue, cluster_eigenvalues,
                        instability_criterion, weight_factor)
from .experiments import run_experiment, run_experiments, lima_counterexample_check
from .registry import RegistryError
from .specfile import SpecError, load_spec

OUT_ENV = "FRACSTAB_OUT"

EXIT_OK, EXIT_FAIL, EXIT_PARSE = 0, 1, 2


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUT_ENV) or "fracstab_out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _cmd_mlf(args) -> int:
    params = MLParams(args.alpha, args.beta)
    z = complex(args.re, args.im)
    res = eval_scalar(params, z, method=args.method)
    v = complex(res.value)
    text = ("alpha,beta,re_z,im_z,re_value,im_value,regime,abs_error_estimate\n"
            f"{args.alpha!r},{args.beta!r},{z.real!r},{z.imag!r},{v.real!r},{v.imag!r},"
            f"{res.regime.value},{res.abs_error_estimate!r}\n")
    (_out_dir(args) / "mlf_eval.csv").write_text(text)
    print(f"E_{{{args.alpha:g},{args.beta:g}}}({z:.6g}) = {v.real!r} {'+-'[v.imag < 0]} "
          f"{abs(v.imag)!r}i  [{res.regime.value}, error <= {res.abs_error_estimate:.2e}]")
    return EXIT_OK


def _read_matrix(path) -> np.ndarray:
    text = Path(path).read_text().replace(",", " ").replace(";", "\n")
    rows = [list(map(float, line.split())) for line in text.splitlines()
            if line.strip() and not line.lstrip().startswith("#")]
    A = np.array(rows, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise SpecError(f"{path}: expected a square matrix, got shape {A.shape}")
    return A


def _cmd_classify(args) -> int:
    A = _read_matrix(args.matrix)
    system = FracSystem(args.alpha, A)
    crit, witnesses = instability_criterion(system)
    lines = ["re_eig,im_eig,multiplicity,sector,modulus,argument"]
    print(f"alpha = {args.alpha:g}, d = {A.shape[0]}")
    for lam, m in cluster_eigenvalues(A):
        c = classify_eigenvalue(args.alpha, lam)
        lines.append(f"{lam.real!r},{lam.imag!r},{m},{c.tag.value},{c.r!r},{c.phi!r}")
        print(f"  {lam:.6g} (x{m}): {c.tag.value}")
    (_out_dir(args) / "classify.csv").write_text("\n".join(lines) + "\n")
    if crit:
        w = weight_factor(args.alpha, witnesses)
        print(f"criterion: unstable (weight factor w = {w:.6g})")
    else:
        print("criterion: silent (no eigenvalue in the unstable sector)")
    return EXIT_OK


def _cmd_lima(args) -> int:
    rep = lima_counterexample_check(args.alpha, args.t)
    rep.to_csv(_out_dir(args) / "lima.csv")
    print(rep.summary())
    return EXIT_OK


def _run_kind(args, kinds) -> int:
    specs = [s for s in load_spec(args.spec) if s.kind in kinds]
    if not specs:
        raise SpecError(f"{args.spec}: no experiment of kind {' or '.join(kinds)}")
    ok = True
    for s in specs:
        if args.seed is not None:
            s.seed = args.seed
        res = run_experiment(s, _out_dir(args))
        print(res.summary)
        ok &= res.ok
    return EXIT_OK if ok else EXIT_FAIL


def _cmd_run(args) -> int:
    results = run_experiments(args.spec, _out_dir(args), args.jobs, args.seed)
    for r in results:
        print(r.summary)
    return EXIT_OK if all(r.ok for r in results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./fracstab_out)")
    common.add_argument("--seed", type=int, default=None, help="override experiment seeds")

    p = argparse.ArgumentParser(prog="fracstab", description="Stability experiments for Caputo systems.")
    sub = p.add_subparsers(dest="command", required=True)

    mlf = sub.add_parser("mlf", help="Mittag-Leffler evaluation")
    mlf_sub = mlf.add_subparsers(dest="mlf_command", required=True)
    ev = mlf_sub.add_parser("eval", parents=[common], help="evaluate E_{alpha,beta}(z)")
    ev.add_argument("--alpha", type=float, required=True)
    ev.add_argument("--beta", type=float, default=1.0)
    ev.add_argument("--re", type=float, required=True)
    ev.add_argument("--im", type=float, default=0.0)
    ev.add_argument("--method", default="auto", choices=["auto", "series", "integral", "asymptotic"])
    ev.set_defaults(func=_cmd_mlf)

    cl = sub.add_parser("classify", parents=[common], help="sector classification of a matrix")
    cl.add_argument("--alpha", type=float, required=True)
    cl.add_argument("--matrix", required=True, help="text file, one matrix row per line")
    cl.set_defaults(func=_cmd_classify)

    for name, kinds, text in (("solve", ("solve",), "run the solve experiments of a spec"),
                              ("contract", ("contract",), "run the contraction experiments of a spec")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--spec", required=True, help="spec file or bundled spec name")
        sp.set_defaults(func=lambda a, k=kinds: _run_kind(a, k))

    li = sub.add_parser("lima", parents=[common], help="composition counterexample check")
    li.add_argument("--alpha", type=float, required=True)
    li.add_argument("--t", type=float, nargs="+", required=True)
    li.set_defaults(func=_cmd_lima)

    run = sub.add_parser("run", parents=[common], help="run every experiment in a spec")
    run.add_argument("--spec", required=True, help="spec file or bundled spec name")
    run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    run.set_defaults(func=_cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpecError, RegistryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (MLEvaluationError, ArithmeticError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
