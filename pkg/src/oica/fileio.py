"""File formats: CSV matrices and data, JSON source specs, cumulants and sweep configs."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cumulants import (
    CumulantPair,
    Exponential,
    Gaussian,
    Moments,
    SourceSpec,
    StudentT,
)
from .errors import InsufficientDataError, InvalidDataError
from .experiments import SweepConfig, SweepRow
from .recovery import RecoveryConfig
from .tensors import SymMat, SymTen4, _position_table, packed_indices

__all__ = [
    "fmt_float",
    "atomic_write",
    "write_matrix_csv",
    "read_matrix_csv",
    "write_data_csv",
    "read_data_csv",
    "parse_source",
    "source_to_dict",
    "read_source_spec",
    "cumulants_to_dict",
    "cumulants_from_dict",
    "sweep_config_from_dict",
    "sweep_config_to_dict",
    "sweep_rows_csv",
    "SWEEP_COLUMNS",
]

SWEEP_COLUMNS = ("I", "J", "trial", "n", "error", "objective", "seed")


def fmt_float(x: float) -> str:
    """17 significant digits, so that reading back gives the same double."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def atomic_write(path, text: str) -> None:
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    parent = path.parent if str(path.parent) else Path(".")
    parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _matrix_text(M: np.ndarray, prefix: str) -> str:
    header = [f"{prefix}{j + 1}" for j in range(M.shape[1])]
    return _csv_text(header, ([fmt_float(v) for v in row] for row in M))


def write_matrix_csv(path, A) -> None:
    """Matrix CSV: header ``a1..aJ``, one line per row of ``A``."""
    atomic_write(path, _matrix_text(np.asarray(A, dtype=float), "a"))


def write_data_csv(path, X) -> None:
    """Data CSV: header ``x1..xI``, one line per sample."""
    X = np.asarray(X, dtype=float)
    atomic_write(path, _matrix_text(X.reshape(len(X), -1), "x"))


def _read_numeric_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    rows = []
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if k == 0 and not rows:
                    continue  # header
                raise InvalidDataError(f"{path}: non-numeric value on line {k + 1}")
    if not rows:
        return np.empty((0, 0))
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise InvalidDataError(f"{path}: rows have different lengths")
    return np.array(rows, dtype=float)


def read_matrix_csv(path) -> np.ndarray:
    A = _read_numeric_csv(path)
    if A.size == 0:
        raise InvalidDataError(f"{path}: empty matrix")
    if not np.all(np.isfinite(A)):
        raise InvalidDataError(f"{path}: matrix has non-finite entries")
    return A


def read_data_csv(path) -> np.ndarray:
    X = _read_numeric_csv(path)
    if X.shape[0] < 2:
        raise InsufficientDataError(f"{path}: need at least 2 data rows, got {X.shape[0]}")
    return X


# --- source specs -----------------------------------------------------------


def parse_source(d: dict):
    if not isinstance(d, dict):
        raise InvalidDataError(f"source entry must be an object, got {d!r}")
    d = dict(d)
    kind = str(d.pop("type", "")).lower()
    try:
        if kind == "exponential":
            src = Exponential(float(d.pop("rate", 1.0)))
        elif kind in ("student_t", "t", "studentt"):
            src = StudentT(float(d.pop("dof")))
        elif kind == "gaussian":
            src = Gaussian(float(d.pop("variance", 1.0)))
        elif kind == "moments":
            src = Moments(float(d.pop("variance", 1.0)), float(d.pop("fourth_cumulant", 6.0)))
        else:
            raise InvalidDataError(f"unknown source type {kind!r}")
    except KeyError as exc:
        raise InvalidDataError(f"source of type {kind!r} is missing {exc}") from None
    except (TypeError, ValueError) as exc:
        raise InvalidDataError(str(exc)) from None
    if d:
        raise InvalidDataError(f"unknown source fields {sorted(d)}")
    return src


def source_to_dict(s) -> dict:
    if isinstance(s, Exponential):
        return {"type": "exponential", "rate": s.rate}
    if isinstance(s, StudentT):
        return {"type": "student_t", "dof": s.dof}
    if isinstance(s, Gaussian):
        return {"type": "gaussian", "variance": s.variance}
    if isinstance(s, Moments):
        return {"type": "moments", "variance": s.variance, "fourth_cumulant": s.fourth_cumulant}
    raise TypeError(f"cannot serialize {s!r}")


def read_source_spec(path) -> SourceSpec:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidDataError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(d, dict) or not isinstance(d.get("sources"), list):
        raise InvalidDataError(f"{path}: expected an object with a 'sources' list")
    return SourceSpec([parse_source(s) for s in d["sources"]])


# --- cumulants --------------------------------------------------------------


def cumulants_to_dict(cp: CumulantPair) -> dict:
    I = cp.dim
    return {
        "dim": I,
        "provenance": cp.provenance,
        "n": cp.n,
        "index_base": 0,
        "k2": {"indices": packed_indices(I, 2).tolist(), "values": [float(v) for v in cp.k2.data]},
        "k4": {"indices": packed_indices(I, 4).tolist(), "values": [float(v) for v in cp.k4.data]},
    }


def _packed_from(entry: dict, I: int, order: int, base: int) -> np.ndarray:
    idx = np.asarray(entry["indices"], dtype=int) - base
    vals = np.asarray(entry["values"], dtype=float)
    if idx.ndim != 2 or idx.shape[1] != order or len(idx) != len(vals):
        raise InvalidDataError(f"order-{order} cumulant has malformed indices")
    if idx.min(initial=0) < 0 or idx.max(initial=0) >= I:
        raise InvalidDataError(f"order-{order} cumulant index out of range")
    pos = _position_table(I, order)
    out = np.full(len(packed_indices(I, order)), np.nan)
    for t, v in zip(idx, vals):
        p = pos[tuple(t)]
        if not np.isnan(out[p]) and out[p] != v:
            raise InvalidDataError(f"conflicting values for index {tuple(t)}")
        out[p] = v
    if np.isnan(out).any():
        raise InvalidDataError(f"order-{order} cumulant is missing entries")
    return out


def cumulants_from_dict(d: dict) -> CumulantPair:
    try:
        I = int(d["dim"])
        base = int(d.get("index_base", 0))
        k2 = _packed_from(d["k2"], I, 2, base)
        k4 = _packed_from(d["k4"], I, 4, base)
    except (KeyError, TypeError) as exc:
        raise InvalidDataError(f"malformed cumulants: {exc}") from None
    prov = d.get("provenance", "population")
    n = d.get("n")
    return CumulantPair(SymMat(I, k2), SymTen4(I, k4), prov, None if n is None else int(n))


# --- sweeps -----------------------------------------------------------------

_RECOVERY_KEYS = {
    "starts_per_round", "power_iters", "power_tol", "shift", "rank_one_tol",
    "dedup_cos", "rank_tol", "profile", "residual_abs_tol", "residual_rel_tol",
    "gaussian_coef_tol", "strict",
}
_MINIMIZE_KEYS = {"max_iters", "ftol", "xtol", "restarts"}


def recovery_config_from_dict(d: dict, base: RecoveryConfig) -> RecoveryConfig:
    d = dict(d)
    unknown = set(d) - _RECOVERY_KEYS - _MINIMIZE_KEYS
    if unknown:
        raise InvalidDataError(f"unknown recovery settings {sorted(unknown)}")
    mkw = {k: d.pop(k) for k in list(d) if k in _MINIMIZE_KEYS}
    return base.with_(minimize=base.minimize.with_(**mkw), **d)


def recovery_config_to_dict(cfg: RecoveryConfig) -> dict:
    out = {k: getattr(cfg, k) for k in sorted(_RECOVERY_KEYS)}
    out.update({k: getattr(cfg.minimize, k) for k in sorted(_MINIMIZE_KEYS)})
    return out


def sweep_config_from_dict(d: dict) -> SweepConfig:
    d = dict(d)
    known = {"I", "J_range", "trials", "mode", "n_values", "source", "gaussian_variance", "seed", "recovery"}
    unknown = set(d) - known
    if unknown:
        raise InvalidDataError(f"unknown sweep settings {sorted(unknown)}")
    kw = {}
    for k in ("I", "trials", "seed"):
        if k in d:
            kw[k] = int(d[k])
    if "J_range" not in d or "I" not in d:
        raise InvalidDataError("sweep config needs 'I' and 'J_range'")
    kw["J_range"] = tuple(d["J_range"])
    if "mode" in d:
        kw["mode"] = str(d["mode"])
    if "n_values" in d:
        kw["n_values"] = tuple(d["n_values"])
    if "source" in d:
        kw["source"] = parse_source(d["source"])
    if "gaussian_variance" in d:
        kw["gaussian_variance"] = float(d["gaussian_variance"])
    kw["recovery"] = recovery_config_from_dict(d.get("recovery", {}), RecoveryConfig(strict=False))
    try:
        return SweepConfig(**kw)
    except ValueError as exc:
        raise InvalidDataError(str(exc)) from None


def sweep_config_to_dict(cfg: SweepConfig) -> dict:
    return {
        "I": cfg.I,
        "J_range": list(cfg.J_range),
        "trials": cfg.trials,
        "mode": cfg.mode,
        "n_values": list(cfg.n_values),
        "source": source_to_dict(cfg.source),
        "gaussian_variance": cfg.gaussian_variance,
        "seed": cfg.seed,
        "recovery": recovery_config_to_dict(cfg.recovery),
    }


def sweep_rows_csv(rows: Sequence[SweepRow]) -> str:
    return _csv_text(
        SWEEP_COLUMNS,
        (
            [str(r.I), str(r.J), str(r.trial), str(r.n), fmt_float(r.error), fmt_float(r.objective), str(r.seed)]
            for r in rows
        ),
    )
