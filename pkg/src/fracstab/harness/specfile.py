"""Experiment spec files.

A spec file is TOML with one ``[[experiment]]`` table per experiment::

    [[experiment]]
    name = "x_squared"
    kind = "probe"              # probe | criterion | solve | contract | lima
    seed = 0

    [experiment.system]
    alpha = 0.5
    A = [[0.0]]                 # real, row-major
    lip_radius = 1.0
    # jordan_blocks = [[0.5, 2]]   optional [eigenvalue, size] pairs
    nonlinearity = { name = "square", coeff = 1.0 }

    [experiment.probe]
    deltas = [0.1, 0.01, 0.001]
    horizon = [200.0, 4000.0, 3e5]   # one value, or one per delta
    n_steps = 4000
    blowup_threshold = 1e6
    escape_radius = 1.0
    samples = 2                 # random directions per delta, on top of +-e_i

Sections ``[experiment.solve]``, ``[experiment.contract]`` and
``[experiment.lima]`` configure the other kinds; see ``README.md``.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..spectral import FracSystem
from .registry import RegistryError, build_nonlinearity

__all__ = ["ExperimentSpec", "KINDS", "SpecError", "load_spec", "parse_spec", "resolve_spec_path"]

KINDS = ("probe", "criterion", "solve", "contract", "lima")
SPEC_DIR = Path(__file__).with_name("specs")


class SpecError(ValueError):
    """Malformed spec; the message names the offending line or field."""


@dataclass
class SystemSpec:
    alpha: float
    A: np.ndarray
    nonlinearity: str = "zero"
    params: dict = field(default_factory=dict)
    lip_radius: float = 1.0
    jordan_blocks: list | None = None

    def build(self, name: str = "") -> FracSystem:
        f = build_nonlinearity(self.nonlinearity, self.A.shape[0], self.params)
        return FracSystem(self.alpha, self.A, f, self.lip_radius, self.jordan_blocks, name)


@dataclass
class ProbeSpec:
    deltas: list[float]
    horizons: list[float]
    n_steps: int = 2000
    blowup_threshold: float = 1e8
    escape_radius: float = 1.0
    samples: int = 2
    x0: list[list[float]] | None = None


@dataclass
class SolveSpec:
    x0: list[complex]
    t_end: float
    n_steps: int = 2000
    blowup_threshold: float = 1e8
    frame: str = "original"
    gamma: float | None = None


@dataclass
class ContractSpec:
    epsilon: float | None = None
    trials: int = 500
    t_end: float | None = None
    n_steps: int | None = None
    gamma: float | None = None
    ell_samples: int = 100_000


@dataclass
class LimaSpec:
    alpha: float
    t: list[float]


@dataclass
class ExperimentSpec:
    name: str
    kind: str
    seed: int = 0
    system: SystemSpec | None = None
    probe: ProbeSpec | None = None
    solve: SolveSpec | None = None
    contract: ContractSpec | None = None
    lima: LimaSpec | None = None
    outputs: list[str] = field(default_factory=list)


class _Fields:
    """Typed access to a table with dotted-path error messages."""

    def __init__(self, table, path):
        if not isinstance(table, dict):
            raise SpecError(f"{path}: expected a table")
        self.t = table
        self.path = path
        self.used = set()

    def _err(self, key, msg):
        return SpecError(f"{self.path}.{key}: {msg}")

    def get(self, key, default=None, required=False):
        self.used.add(key)
        if key not in self.t:
            if required:
                raise SpecError(f"{self.path}: missing required field '{key}'")
            return default
        return self.t[key]

    def num(self, key, default=None, required=False, positive=False, integer=False):
        v = self.get(key, default, required)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self._err(key, f"expected a number, got {v!r}")
        if integer and int(v) != v:
            raise self._err(key, f"expected an integer, got {v!r}")
        if not np.isfinite(v):
            raise self._err(key, "must be finite")
        if positive and not v > 0:
            raise self._err(key, f"must be strictly positive, got {v!r}")
        return int(v) if integer else float(v)

    def numlist(self, key, default=None, required=False, positive=False):
        v = self.get(key, default, required)
        if v is None:
            return None
        if not isinstance(v, list) or not v:
            raise self._err(key, "expected a non-empty list of numbers")
        out = []
        for k, x in enumerate(v):
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not np.isfinite(x):
                raise self._err(f"{key}[{k}]", f"expected a finite number, got {x!r}")
            if positive and not x > 0:
                raise self._err(f"{key}[{k}]", f"must be strictly positive, got {x!r}")
            out.append(float(x))
        return out

    def complexlist(self, key, required=False):
        v = self.get(key, None, required)
        if v is None:
            return None
        if not isinstance(v, list) or not v:
            raise self._err(key, "expected a non-empty list")
        out = []
        for k, x in enumerate(v):
            if isinstance(x, list) and len(x) == 2 and all(isinstance(y, (int, float)) for y in x):
                out.append(complex(x[0], x[1]))
            elif isinstance(x, (int, float)) and not isinstance(x, bool):
                out.append(complex(x))
            else:
                raise self._err(f"{key}[{k}]", f"expected a number or [re, im], got {x!r}")
        return out

    def check_unknown(self):
        extra = sorted(set(self.t) - self.used)
        if extra:
            raise SpecError(f"{self.path}: unknown field(s) {', '.join(extra)}")


def _parse_system(tab, path):
    f = _Fields(tab, path)
    alpha = f.num("alpha", required=True)
    if not 0 < alpha < 1:
        raise SpecError(f"{path}.alpha: must lie strictly inside (0, 1), got {alpha!r}")
    A_raw = f.get("A", required=True)
    try:
        A = np.array(A_raw, dtype=float)
    except (TypeError, ValueError):
        raise SpecError(f"{path}.A: expected a square matrix of real numbers") from None
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise SpecError(f"{path}.A: expected a non-empty square matrix, got shape {A.shape}")
    nl = f.get("nonlinearity", {"name": "zero"})
    if isinstance(nl, str):
        nl = {"name": nl}
    if not isinstance(nl, dict) or "name" not in nl:
        raise SpecError(f"{path}.nonlinearity: expected a table with a 'name' field")
    params = {k: v for k, v in nl.items() if k != "name"}
    lip = f.num("lip_radius", 1.0, positive=True)
    jb_raw = f.get("jordan_blocks")
    jb = None
    if jb_raw is not None:
        jb = []
        for k, item in enumerate(jb_raw):
            if not (isinstance(item, list) and len(item) == 2):
                raise SpecError(f"{path}.jordan_blocks[{k}]: expected [eigenvalue, size]")
            lam, size = item
            lam = complex(lam[0], lam[1]) if isinstance(lam, list) else complex(lam)
            if not isinstance(size, int) or size < 1:
                raise SpecError(f"{path}.jordan_blocks[{k}]: size must be a positive integer")
            jb.append((lam, size))
    f.check_unknown()
    spec = SystemSpec(alpha, A, str(nl["name"]), params, lip, jb)
    try:
        spec.build()
    except RegistryError as exc:
        raise SpecError(f"{path}.nonlinearity: {exc}") from None
    except ValueError as exc:
        raise SpecError(f"{path}: {exc}") from None
    return spec


def _parse_probe(tab, path, dim):
    f = _Fields(tab, path)
    x0 = f.get("x0")
    deltas = f.numlist("deltas", positive=True)
    if x0 is None and deltas is None:
        raise SpecError(f"{path}: give either 'deltas' or an explicit 'x0' list")
    if x0 is not None:
        try:
            x0 = [list(map(float, v)) for v in x0]
        except (TypeError, ValueError):
            raise SpecError(f"{path}.x0: expected a list of real vectors") from None
        if any(len(v) != dim for v in x0):
            raise SpecError(f"{path}.x0: every initial value needs {dim} entries")
        if deltas is None:
            deltas = sorted({max(abs(c) for c in v) for v in x0}, reverse=True)
    horizon = f.get("horizon", None, required=True)
    if isinstance(horizon, list):
        horizons = f.numlist("horizon", positive=True)
        if len(horizons) != len(deltas):
            raise SpecError(f"{path}.horizon: needs one value per delta ({len(deltas)})")
    else:
        horizons = [f.num("horizon", positive=True)] * len(deltas)
    spec = ProbeSpec(
        deltas=deltas, horizons=horizons,
        n_steps=f.num("n_steps", 2000, positive=True, integer=True),
        blowup_threshold=f.num("blowup_threshold", 1e8, positive=True),
        escape_radius=f.num("escape_radius", 1.0, positive=True),
        samples=int(f.num("samples", 2, integer=True)),
        x0=x0,
    )
    if spec.n_steps < 2:
        raise SpecError(f"{path}.n_steps: must be at least 2")
    if spec.samples < 0:
        raise SpecError(f"{path}.samples: must be nonnegative")
    if spec.blowup_threshold <= spec.escape_radius:
        raise SpecError(f"{path}.blowup_threshold: must exceed escape_radius")
    f.check_unknown()
    return spec


def _parse_solve(tab, path, dim):
    f = _Fields(tab, path)
    x0 = f.complexlist("x0", required=True)
    if len(x0) != dim:
        raise SpecError(f"{path}.x0: needs {dim} entries, got {len(x0)}")
    frame = f.get("frame", "original")
    if frame not in ("original", "transformed"):
        raise SpecError(f"{path}.frame: expected 'original' or 'transformed', got {frame!r}")
    spec = SolveSpec(x0, f.num("t_end", required=True, positive=True),
                     f.num("n_steps", 2000, positive=True, integer=True),
                     f.num("blowup_threshold", 1e8, positive=True), frame,
                     f.num("gamma", None, positive=True))
    if spec.n_steps < 2:
        raise SpecError(f"{path}.n_steps: must be at least 2")
    f.check_unknown()
    return spec


def _parse_contract(tab, path):
    f = _Fields(tab, path)
    spec = ContractSpec(f.num("epsilon", None, positive=True),
                        f.num("trials", 500, positive=True, integer=True),
                        f.num("t_end", None, positive=True),
                        f.num("n_steps", None, positive=True, integer=True),
                        f.num("gamma", None, positive=True),
                        f.num("ell_samples", 100_000, positive=True, integer=True))
    f.check_unknown()
    return spec


def _parse_lima(tab, path):
    f = _Fields(tab, path)
    alpha = f.num("alpha", required=True, positive=True)
    if alpha > 1:
        raise SpecError(f"{path}.alpha: must lie in (0, 1], got {alpha!r}")
    t = f.numlist("t", required=True)
    if any(x < 0 for x in t):
        raise SpecError(f"{path}.t: times must be nonnegative")
    f.check_unknown()
    return LimaSpec(alpha, t)


def parse_spec(text: str, source: str = "<spec>") -> list[ExperimentSpec]:
    """Parse spec text into experiments; raises :class:`SpecError` with diagnostics."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SpecError(f"{source}: {exc}") from None
    extra = sorted(set(doc) - {"experiment"})
    if extra:
        raise SpecError(f"{source}: unknown top-level key(s) {', '.join(extra)}")
    entries = doc.get("experiment")
    if not entries:
        raise SpecError(f"{source}: no [[experiment]] entries found")
    if not isinstance(entries, list):
        raise SpecError(f"{source}: 'experiment' must be an array of tables ([[experiment]])")
    out, names = [], set()
    for k, tab in enumerate(entries):
        path = f"{source}: experiment[{k}]"
        f = _Fields(tab, path)
        name = f.get("name", required=True)
        if not isinstance(name, str) or not name or any(c in name for c in "/\\"):
            raise SpecError(f"{path}.name: expected a non-empty name without path separators")
        if name in names:
            raise SpecError(f"{path}.name: duplicate experiment name {name!r}")
        names.add(name)
        kind = f.get("kind", required=True)
        if kind not in KINDS:
            raise SpecError(f"{path}.kind: expected one of {', '.join(KINDS)}, got {kind!r}")
        seed = int(f.num("seed", 0, integer=True))
        outputs = f.get("outputs", [])
        if not isinstance(outputs, list) or not all(isinstance(o, str) for o in outputs):
            raise SpecError(f"{path}.outputs: expected a list of file names")
        exp = ExperimentSpec(name, kind, seed, outputs=outputs)
        if "system" in tab:
            exp.system = _parse_system(f.get("system"), f"{path}.system")
        if kind != "lima" and exp.system is None:
            raise SpecError(f"{path}: kind '{kind}' needs a [experiment.system] table")
        dim = exp.system.A.shape[0] if exp.system is not None else 0
        if "probe" in tab:
            exp.probe = _parse_probe(f.get("probe"), f"{path}.probe", dim)
        if "solve" in tab:
            exp.solve = _parse_solve(f.get("solve"), f"{path}.solve", dim)
        if "contract" in tab:
            exp.contract = _parse_contract(f.get("contract"), f"{path}.contract")
        if "lima" in tab:
            exp.lima = _parse_lima(f.get("lima"), f"{path}.lima")
        f.check_unknown()
        needed = {"probe": "probe", "criterion": "probe", "solve": "solve",
                  "contract": None, "lima": "lima"}[kind]
        if needed and getattr(exp, needed) is None:
            raise SpecError(f"{path}: kind '{kind}' needs an [experiment.{needed}] table")
        if kind == "contract" and exp.contract is None:
            exp.contract = ContractSpec()
        out.append(exp)
    return out


def resolve_spec_path(spec: str | Path) -> Path:
    """A path on disk, or the name of a bundled spec (with or without ``.toml``)."""
    p = Path(spec)
    if p.exists():
        return p
    bundled = SPEC_DIR / (p.name if p.suffix == ".toml" else p.name + ".toml")
    if bundled.exists():
        return bundled
    names = sorted(q.stem for q in SPEC_DIR.glob("*.toml"))
    raise SpecError(f"spec {spec!s} not found; bundled specs: {', '.join(names)}")


def load_spec(spec: str | Path) -> list[ExperimentSpec]:
    path = resolve_spec_path(spec)
    return parse_spec(path.read_text(), str(path))
