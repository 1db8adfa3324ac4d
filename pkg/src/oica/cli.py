"""Command line interface.

Exit codes: 0 on success, 1 on a numerical failure (reported with a reason
code), 2 on bad usage or bad input.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .cumulants import SourceSpec, population_cumulants, sample_cumulants
from .errors import NumericalError, OICAError
from .experiments import default_workers, generate_mixing, run_sweep, sample_mixture
from .fileio import (
    atomic_write,
    cumulants_from_dict,
    cumulants_to_dict,
    read_data_csv,
    read_matrix_csv,
    read_source_spec,
    sweep_config_from_dict,
    sweep_config_to_dict,
    sweep_rows_csv,
    write_data_csv,
    write_matrix_csv,
)
from .identifiability import (
    ProbeConfig,
    classify_generic,
    collinear_pairs,
    kernel_report,
    khatri_rao_rank,
    rank_one_probe,
)
from .quadrics import build_real_count_system, quadric_system
from .recovery import RecoveryConfig, recover


class UsageError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_manifest(out: Path, command: str, config: dict, seed, started: float, outputs) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "wall_time_s": round(time.perf_counter() - started, 6),
        "outputs": [str(p) for p in outputs],
    }
    atomic_write(Path(str(out) + ".manifest.json"), _dump(manifest))


def _sidecar(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


# --- commands ---------------------------------------------------------------


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    if args.matrix is None and args.random is None:
        raise UsageError("give --matrix PATH or --random I J")
    spec = read_source_spec(args.sources)
    if args.matrix is not None:
        A = read_matrix_csv(args.matrix)
    else:
        I, J = args.random
        if I < 1 or J < 1:
            raise UsageError("--random needs positive I and J")
        A = generate_mixing(I, J, np.random.SeedSequence(args.seed).spawn(2)[0]).array
    if args.n < 0:
        raise UsageError("--n must be non-negative")
    X = sample_mixture(A, spec, args.n, args.seed)
    out = Path(args.out)
    write_data_csv(out, X)
    outputs = [out]
    if args.matrix is None:
        mpath = _sidecar(out, ".mixing.csv")
        write_matrix_csv(mpath, A)
        outputs.append(mpath)
    config = {
        "matrix": args.matrix,
        "random": args.random,
        "sources": args.sources,
        "n": args.n,
    }
    _write_manifest(out, "simulate", config, args.seed, started, outputs)
    return 0


def _recovery_config(args) -> RecoveryConfig:
    cfg = RecoveryConfig(seed=args.seed, strict=not args.lenient, profile=not args.joint)
    if args.restarts is not None:
        cfg = cfg.with_(minimize=cfg.minimize.with_(restarts=args.restarts))
    return cfg


def cmd_recover(args) -> int:
    started = time.perf_counter()
    if (args.input is None) == (args.cumulants is None):
        raise UsageError("give exactly one of --input and --cumulants")
    if args.input is not None:
        cp = sample_cumulants(read_data_csv(args.input))
    else:
        path = Path(args.cumulants)
        if not path.exists():
            raise FileNotFoundError(str(path))
        try:
            cp = cumulants_from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from None
    J = args.num_sources
    if J != "auto":
        try:
            J = int(J)
        except ValueError:
            raise UsageError("--num-sources must be an integer or 'auto'") from None
    cfg = _recovery_config(args)
    res = recover(cp, J, cfg)
    out = Path(args.out)
    write_matrix_csv(out, res.A_hat.array)
    diag = dict(res.diagnostics)
    diag["num_sources"] = res.A_hat.cols
    diag["provenance"] = cp.provenance
    diag["n"] = cp.n
    dpath = _sidecar(out, ".diagnostics.json")
    atomic_write(dpath, _dump(diag))
    config = {
        "input": args.input,
        "cumulants": args.cumulants,
        "num_sources": args.num_sources,
        "profile": cfg.profile,
        "strict": cfg.strict,
        "restarts": cfg.minimize.restarts,
    }
    _write_manifest(out, "recover", config, args.seed, started, [out, dpath])
    return 0


def cmd_cumulants(args) -> int:
    started = time.perf_counter()
    if (args.input is None) == (args.matrix is None):
        raise UsageError("give exactly one of --input and --matrix")
    if args.input is not None:
        cp = sample_cumulants(read_data_csv(args.input))
    else:
        if args.sources is None:
            raise UsageError("--matrix needs --sources")
        cp = population_cumulants(read_matrix_csv(args.matrix), read_source_spec(args.sources))
    out = Path(args.out)
    atomic_write(out, _dump(cumulants_to_dict(cp)))
    config = {"input": args.input, "matrix": args.matrix, "sources": args.sources}
    _write_manifest(out, "cumulants", config, None, started, [out])
    return 0


def cmd_check(args) -> int:
    A = read_matrix_csv(args.matrix)
    cfg = ProbeConfig(starts=args.starts, seed=args.seed)
    verdict = rank_one_probe(A, cfg)
    report = {
        "shape": list(A.shape),
        "collinear_pairs": [list(p) for p in collinear_pairs(A, cfg.collinear_tol)],
        "khatri_rao_rank": khatri_rao_rank(A),
    }
    if A.shape[1] >= 2:
        report["kernel"] = kernel_report(A).summary()
    report.update(verdict.to_dict())
    text = _dump(report)
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_classify(args) -> int:
    if args.rows < 2 or args.cols < 1:
        raise UsageError("need --rows >= 2 and --cols >= 1")
    v = classify_generic(args.rows, args.cols)
    label = {
        "generic_identifiable": "identifiable",
        "generic_non_identifiable": "non-identifiable",
        "generic_ambiguous": "ambiguous",
    }[v.kind]
    print(f"I={args.rows} J={args.cols}: {label}")
    return 0


def cmd_sweep(args) -> int:
    started = time.perf_counter()
    path = Path(args.config)
    if not path.exists():
        raise FileNotFoundError(str(path))
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    cfg = sweep_config_from_dict(raw)
    workers = args.workers if args.workers is not None else default_workers()
    rows = run_sweep(cfg, workers=workers)
    out = Path(args.out)
    atomic_write(out, sweep_rows_csv(rows))
    config = sweep_config_to_dict(cfg)
    config["workers"] = workers
    config["failed_rows"] = [
        {"J": r.J, "trial": r.trial, "n": r.n, "reason": r.reason} for r in rows if r.reason
    ]
    _write_manifest(out, "sweep", config, cfg.seed, started, [out])
    return 0


def cmd_quadrics(args) -> int:
    started = time.perf_counter()
    A = read_matrix_csv(args.matrix)
    system = quadric_system(A)
    out = Path(args.out)
    atomic_write(out, _dump(system.to_dict()))
    _write_manifest(out, "quadrics", {"matrix": args.matrix}, None, started, [out])
    return 0


def cmd_realcount(args) -> int:
    started = time.perf_counter()
    tracked = build_real_count_system(args.dim, args.real, seed=args.seed)
    d = tracked.to_dict()
    d["max_residual"] = tracked.max_residual
    d["min_distance"] = tracked.min_distance
    out = Path(args.out)
    atomic_write(out, _dump(d))
    _write_manifest(out, "realcount", {"dim": args.dim, "real": args.real}, args.seed, started, [out])
    return 0


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oica", description="Overcomplete ICA with one Gaussian source.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="sample x = A s to CSV")
    s.add_argument("--matrix")
    s.add_argument("--random", nargs=2, type=int, metavar=("I", "J"))
    s.add_argument("--sources", required=True, help="source spec JSON")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("recover", help="recover the mixing matrix from data or cumulants")
    s.add_argument("--input", help="data CSV")
    s.add_argument("--cumulants", help="cumulants JSON")
    s.add_argument("--num-sources", default="auto")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--restarts", type=int)
    s.add_argument("--joint", action="store_true", help="search over (v, l) jointly")
    s.add_argument("--lenient", action="store_true", help="return best-effort results instead of failing")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_recover)

    s = sub.add_parser("cumulants", help="write cumulants JSON from data or from a model")
    s.add_argument("--input", help="data CSV")
    s.add_argument("--matrix")
    s.add_argument("--sources")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_cumulants)

    s = sub.add_parser("check", help="probe a matrix for identifiability")
    s.add_argument("--matrix", required=True)
    s.add_argument("--starts", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("classify", help="generic identifiability of an I x J shape")
    s.add_argument("--rows", type=int, required=True)
    s.add_argument("--cols", type=int, required=True)
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("sweep", help="run a synthetic recovery sweep")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("quadrics", help="quadric system of a matrix")
    s.add_argument("--matrix", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_quadrics)

    s = sub.add_parser("realcount", help="quadric system with a prescribed number of real solutions")
    s.add_argument("--dim", type=int, required=True)
    s.add_argument("--real", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_realcount)
    return p


def _fail(code: int, reason: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": reason, "message": message}) + "\n")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads = int(os.environ.get("OICA_THREADS", "0") or 0)
    except ValueError:
        return _fail(2, "usage", "OICA_THREADS must be an integer")
    try:
        with threadpool_limits(limits=threads if threads > 0 else None):
            return args.func(args)
    except NumericalError as exc:
        return _fail(1, exc.reason, str(exc))
    except OICAError as exc:
        return _fail(2, exc.reason, str(exc))
    except FileNotFoundError as exc:
        return _fail(2, "file_not_found", f"no such file: {exc.filename or exc}")
    except UsageError as exc:
        return _fail(2, "usage", str(exc))
    except ValueError as exc:
        return _fail(2, "invalid_input", str(exc))


if __name__ == "__main__":
    sys.exit(main())
