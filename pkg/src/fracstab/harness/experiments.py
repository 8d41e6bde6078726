"""Experiment pipelines: stability probes, criterion cross-checks, Li-Ma check.

Every pipeline is deterministic given its spec and seed. Reports are plain
dataclasses with ``to_csv`` / ``summary`` so that identical runs give
byte-identical artifacts.
"""

from __future__ import annotations

import io
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate

from .._norms import state_norm
from ..lyapunov_perron import ContractionPrecheckError, choose_epsilon, contraction_ratio
from ..mlf import mittag_leffler
from ..solver import SolverError, solve_pc
from ..spectral import (FracSystem, SpectralError, classify_eigenvalue, cluster_eigenvalues,
                        instability_criterion, transform_system, weight_factor)
from .specfile import ExperimentSpec, SpecError, load_spec

__all__ = [
    "CriterionReport",
    "LimaReport",
    "ProbeReport",
    "ProbeTrajectory",
    "criterion_vs_probe",
    "lima_counterexample_check",
    "run_experiment",
    "run_experiments",
    "stability_probe",
]

# relative size below which LHS - RHS counts as zero
LIMA_ZERO_RTOL = 1e-12


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write(path, text):
    if path is not None:
        Path(path).write_text(text)
    return text


@dataclass
class ProbeTrajectory:
    delta: float
    x0: np.ndarray
    escaped: bool = False
    escape_time: float | None = None
    blowup: float | None = None
    max_norm: float = 0.0
    final_norm: float = 0.0
    t_final: float = 0.0
    monotone_decreasing: bool = False
    error: str | None = None


@dataclass
class ProbeReport:
    """Outcome of a finite stability probe.

    ``verdict`` is "empirically unstable" when, for every tested delta, some
    trajectory starting in the delta-ball left the escape ball before the
    horizon; otherwise "undetermined". A finite probe never certifies stability.
    """

    name: str
    alpha: float
    escape_radius: float
    deltas: list[float]
    horizons: list[float]
    n_steps: int
    blowup_threshold: float
    seed: int
    trajectories: list[ProbeTrajectory]
    verdict: str
    witness: ProbeTrajectory | None
    reference_rate: float | None = None

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = self.witness
        buf.write(f"# name={self.name},alpha={self.alpha!r},escape_radius={self.escape_radius!r},"
                  f"n_steps={self.n_steps},blowup_threshold={self.blowup_threshold!r},"
                  f"seed={self.seed},verdict={self.verdict}\n")
        if w is not None:
            buf.write("# witness_x0=" + ";".join(_fmt(c) for c in w.x0)
                      + f",witness_escape_time={w.escape_time!r}\n")
        d = self.trajectories[0].x0.size if self.trajectories else 0
        cols = ["delta"] + [f"x0_{i + 1}" for i in range(d)] + [
            "horizon", "escaped", "escape_time", "blowup_time", "max_norm", "final_norm",
            "t_final", "monotone_decreasing", "error"]
        buf.write(",".join(cols) + "\n")
        hmap = dict(zip(self.deltas, self.horizons))
        for tr in self.trajectories:
            err = "" if tr.error is None else '"' + tr.error.replace('"', "'") + '"'
            row = [_fmt(tr.delta)] + [_fmt(c) for c in tr.x0] + [
                _fmt(hmap[tr.delta]), _fmt(tr.escaped), _fmt(tr.escape_time), _fmt(tr.blowup),
                _fmt(tr.max_norm), _fmt(tr.final_norm), _fmt(tr.t_final),
                _fmt(tr.monotone_decreasing), err]
            buf.write(",".join(row) + "\n")
        return _write(path, buf.getvalue())

    def summary(self) -> str:
        lines = [f"[{self.name}] stability probe: {self.verdict}"]
        for delta in self.deltas:
            trs = [t for t in self.trajectories if t.delta == delta]
            esc = [t for t in trs if t.escaped]
            errs = sum(t.error is not None for t in trs)
            first = min((t.escape_time for t in esc), default=None)
            msg = f"  delta={delta:g}: {len(esc)}/{len(trs)} escaped"
            if first is not None:
                msg += f", earliest escape t={first:.6g}"
            if errs:
                msg += f", {errs} solver failure(s)"
            lines.append(msg)
        if self.witness is not None:
            w = self.witness
            lines.append(f"  witness: x0={np.array2string(w.x0, precision=6)} escapes at t={w.escape_time:.6g}")
        if self.reference_rate is not None:
            lines.append(f"  reference linear growth rate r^(1/alpha) cos(phi/alpha) = {self.reference_rate:.6g}")
        return "\n".join(lines)


def _probe_points(spec: ExperimentSpec, dim: int) -> list[tuple[float, np.ndarray]]:
    probe = spec.probe
    if probe.x0 is not None:
        pts = [np.asarray(v, dtype=float) for v in probe.x0]
        return [(min(d for d in probe.deltas if d >= np.max(np.abs(p)) * (1 - 1e-12)), p)
                for p in pts]
    rng = np.random.default_rng(spec.seed)
    eye = np.eye(dim)
    dirs = [s * eye[i] for i in range(dim) for s in (1.0, -1.0)]
    for _ in range(probe.samples):
        v = rng.standard_normal(dim)
        dirs.append(v / np.max(np.abs(v)))
    return [(delta, delta * v) for delta in probe.deltas for v in dirs]


def _run_trajectory(system, delta, x0, horizon, probe) -> ProbeTrajectory:
    tr = ProbeTrajectory(delta, x0)
    try:
        traj = solve_pc(system, x0, horizon, probe.n_steps, probe.blowup_threshold)
    except SolverError as exc:
        tr.error = str(exc)
        return tr
    norms = traj.norms()
    out = np.nonzero(norms > probe.escape_radius)[0]
    if traj.blowup is not None:
        tr.escaped = True
        tr.blowup = traj.blowup
        tr.escape_time = float(traj.t[out[0]]) if out.size else traj.blowup
    elif out.size:
        tr.escaped = True
        tr.escape_time = float(traj.t[out[0]])
    tr.max_norm = float(norms.max())
    tr.final_norm = float(norms[-1])
    tr.t_final = float(traj.t[-1])
    tr.monotone_decreasing = bool(np.all(np.diff(norms) < 0)) if norms[0] > 0 else False
    return tr


def _reference_rate(system: FracSystem) -> float | None:
    unstable, witnesses = instability_criterion(system)
    if not unstable:
        return None
    return 3.0 * weight_factor(system.alpha, witnesses)


def stability_probe(spec: ExperimentSpec, system: FracSystem | None = None) -> ProbeReport:
    """Integrate from every probe initial value and give an empirical verdict.

    Parameters
    ----------
    spec : ExperimentSpec
        Needs ``system`` and ``probe`` sections.
    system : FracSystem, optional
        Prebuilt system; built from ``spec.system`` otherwise.
    """
    if spec.probe is None or (system is None and spec.system is None):
        raise SpecError(f"experiment {spec.name!r} has no probe or system section")
    system = system if system is not None else spec.system.build(spec.name)
    probe = spec.probe
    horizon = dict(zip(probe.deltas, probe.horizons))
    trajs = [_run_trajectory(system, d, x0, horizon[d], probe)
             for d, x0 in _probe_points(spec, system.dim)]
    witness = None
    unstable = True
    for delta in sorted(probe.deltas, reverse=True):
        esc = [t for t in trajs if t.delta == delta and t.escaped]
        if not esc:
            unstable = False
            break
        witness = min(esc, key=lambda t: t.escape_time)
    verdict = "empirically unstable" if unstable and trajs else "undetermined"
    if verdict != "empirically unstable":
        witness = None
    try:
        rate = _reference_rate(system)
    except ValueError:
        rate = None
    return ProbeReport(spec.name, system.alpha, probe.escape_radius, list(probe.deltas),
                       list(probe.horizons), probe.n_steps, probe.blowup_threshold, spec.seed,
                       trajs, verdict, witness, rate)


@dataclass
class CriterionReport:
    name: str
    criterion: bool
    witnesses: list[complex]
    spectrum: list[tuple[complex, int, str]]
    probe: ProbeReport
    flag: str

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(f"# name={self.name},criterion={str(self.criterion).lower()},"
                  f"verdict={self.probe.verdict},flag={self.flag}\n")
        buf.write("re_eig,im_eig,multiplicity,sector\n")
        for lam, m, tag in self.spectrum:
            buf.write(f"{lam.real!r},{lam.imag!r},{m},{tag}\n")
        return _write(path, buf.getvalue())

    def summary(self) -> str:
        wit = ", ".join(f"{complex(w):.6g}" for w in self.witnesses) or "none"
        lines = [f"[{self.name}] criterion: {'unstable' if self.criterion else 'silent'} "
                 f"(sector eigenvalues: {wit}); probe: {self.probe.verdict}; flag: {self.flag}"]
        if self.flag == "discrepancy":
            p = self.probe
            lines.append(f"  no escape found with deltas={p.deltas}, horizons={p.horizons}, "
                         f"escape_radius={p.escape_radius}, n_steps={p.n_steps}; "
                         "enlarge the horizon or add probe directions")
        return "\n".join(lines)


def criterion_vs_probe(spec: ExperimentSpec) -> CriterionReport:
    """Compare the spectral instability criterion with a stability probe.

    Flags: ``agreement`` (criterion true, probe unstable), ``consistent-unknown``
    (criterion false, probe undetermined), ``discrepancy`` (criterion true, no
    escape found) and ``criterion-silent-unstable`` (criterion false, probe
    unstable; possible since the criterion is only sufficient).
    """
    system = spec.system.build(spec.name)
    crit, witnesses = instability_criterion(system)
    spectrum = [(lam, m, classify_eigenvalue(system.alpha, lam).tag.value)
                for lam, m in cluster_eigenvalues(system.A)]
    rep = stability_probe(spec, system)
    escaped = rep.verdict == "empirically unstable"
    if crit:
        flag = "agreement" if escaped else "discrepancy"
    else:
        flag = "criterion-silent-unstable" if escaped else "consistent-unknown"
    return CriterionReport(spec.name, crit, list(witnesses), spectrum, rep, flag)


@dataclass
class LimaReport:
    alpha: float
    t: list[float]
    lhs: list[float]
    rhs: list[float]
    diff: list[float]
    sign: list[str]
    threshold: float | None
    margin_increasing: bool
    certified: bool

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(f"# alpha={self.alpha!r},threshold={self.threshold!r},"
                  f"margin_increasing={str(self.margin_increasing).lower()},"
                  f"certified={str(self.certified).lower()}\n")
        buf.write("t,lhs,rhs,lhs_minus_rhs,sign\n")
        for row in zip(self.t, self.lhs, self.rhs, self.diff, self.sign):
            buf.write(",".join([*map(repr, row[:4]), row[4]]) + "\n")
        return _write(path, buf.getvalue())

    def summary(self) -> str:
        lines = [f"composition check at alpha={self.alpha:g}:"]
        for t, d, s in zip(self.t, self.diff, self.sign):
            lines.append(f"  t={t:g}: LHS - RHS = {d:.6e} ({s})")
        if self.certified:
            lines.append(f"  LHS > RHS at every sampled t >= {self.threshold:g}"
                         + ("; margin increasing" if self.margin_increasing else ""))
        else:
            lines.append("  no certification: LHS > RHS does not hold on a tail of the sampled times")
        return "\n".join(lines)


def _lima_integral(alpha: float, t: float) -> float:
    """``int_0^1 (t+1-tau)^(alpha-1) E_alpha(tau^alpha) dtau``."""
    ml = lambda tau: float(mittag_leffler(tau ** alpha, alpha).real)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if t == 0.0 and alpha < 1:
            out = integrate.quad(ml, 0.0, 1.0, weight="alg", wvar=(0.0, alpha - 1.0),
                                 epsabs=0.0, epsrel=1e-13, limit=200, full_output=1)
        else:
            out = integrate.quad(lambda tau: (t + 1.0 - tau) ** (alpha - 1.0) * ml(tau), 0.0, 1.0,
                                 epsabs=0.0, epsrel=1e-13, limit=200, full_output=1)
    # a quad warning is tolerated once the error estimate is small anyway
    val, err = out[:2]
    ier = 0 if len(out) == 3 or err <= 1e-11 * abs(val) else 1
    if ier or not math.isfinite(val):
        raise ArithmeticError(f"quadrature failed at t={t!r}: estimate {val!r} +- {err!r}")
    return val


def lima_counterexample_check(alpha: float, t_list) -> LimaReport:
    """Compare ``E_a((t+1)^a)`` with the one-step composition bound.

    ``RHS = (1 + Gamma(a)^-1 int_0^1 (t+1-tau)^(a-1) E_a(tau^a) dtau) E_a(t^a)``.
    The report certifies ``LHS > RHS`` on the sampled times from the
    smallest positive ``t`` beyond which every sample is positive; ``t = 0``
    is reported but never part of a certification.

    Raises
    ------
    ArithmeticError
        When the quadrature does not reach its tolerance.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    t = [float(x) for x in t_list]
    if not t or any(x < 0 for x in t):
        raise ValueError("t_list must be nonempty and nonnegative")
    lhs, rhs, diff, sign = [], [], [], []
    g = math.gamma(alpha)
    for tk in t:
        L = float(mittag_leffler((tk + 1.0) ** alpha, alpha).real)
        R = (1.0 + _lima_integral(alpha, tk) / g) * float(mittag_leffler(tk ** alpha, alpha).real)
        D = L - R
        lhs.append(L)
        rhs.append(R)
        diff.append(D)
        sign.append("zero" if abs(D) <= LIMA_ZERO_RTOL * max(abs(L), abs(R))
                    else ("positive" if D > 0 else "negative"))
    order = sorted((tk, k) for k, tk in enumerate(t) if tk > 0)
    threshold = None
    for tk, k in reversed(order):
        if sign[k] != "positive":
            break
        threshold = tk
    tail = [diff[k] for tk, k in order if threshold is not None and tk >= threshold]
    increasing = len(tail) >= 2 and all(b > a for a, b in zip(tail, tail[1:]))
    return LimaReport(alpha, t, lhs, rhs, diff, sign, threshold, increasing, threshold is not None)


# ---------------------------------------------------------------- runner


@dataclass
class ExperimentResult:
    name: str
    kind: str
    ok: bool
    summary: str
    artifacts: list[str] = field(default_factory=list)


def _artifact(spec: ExperimentSpec, out_dir: Path, default: str, k: int = 0) -> Path:
    name = spec.outputs[k] if k < len(spec.outputs) else default
    return out_dir / name


def _run_solve(spec, out_dir):
    system = spec.system.build(spec.name)
    s = spec.solve
    if s.frame == "transformed":
        target = transform_system(system, s.gamma)
    else:
        target = system
    traj = solve_pc(target, s.x0, s.t_end, s.n_steps, s.blowup_threshold)
    path = _artifact(spec, out_dir, "trajectory.csv")
    traj.to_csv(path, seed=spec.seed)
    norms = traj.norms()
    msg = (f"[{spec.name}] solved to t={traj.t[-1]:.6g} ({s.frame} coordinates); "
           f"final norm {norms[-1]:.6g}; "
           + (f"blowup at t={traj.blowup:.6g}" if traj.blowup is not None else "no blowup"))
    return msg, [path]


def _run_contract(spec, out_dir):
    system = spec.system.build(spec.name)
    c = spec.contract
    tsys = transform_system(system, c.gamma)
    if tsys.k == 0:
        raise ValueError(f"experiment {spec.name!r}: no unstable eigenvalues, nothing to contract")
    if c.epsilon is None:
        eps, _, _ = choose_epsilon(tsys, seed=spec.seed)
    else:
        eps = c.epsilon
    est = contraction_ratio(tsys, eps, c.trials, spec.seed, t_end=c.t_end, n_steps=c.n_steps,
                            ell_samples=c.ell_samples)
    path = _artifact(spec, out_dir, "contraction.csv")
    est.to_csv(path)
    return f"[{spec.name}] " + est.summary(), [path]


def _execute(spec: ExperimentSpec, out_dir: Path) -> tuple[str, list[Path]]:
    out_dir.mkdir(parents=True, exist_ok=True)
    if spec.kind == "probe":
        rep = stability_probe(spec)
        path = _artifact(spec, out_dir, "probe.csv")
        rep.to_csv(path)
        return rep.summary(), [path]
    if spec.kind == "criterion":
        rep = criterion_vs_probe(spec)
        p1 = _artifact(spec, out_dir, "criterion.csv")
        p2 = _artifact(spec, out_dir, "probe.csv", 1)
        rep.to_csv(p1)
        rep.probe.to_csv(p2)
        return rep.summary() + "\n" + rep.probe.summary(), [p1, p2]
    if spec.kind == "solve":
        return _run_solve(spec, out_dir)
    if spec.kind == "contract":
        return _run_contract(spec, out_dir)
    rep = lima_counterexample_check(spec.lima.alpha, spec.lima.t)
    path = _artifact(spec, out_dir, "lima.csv")
    rep.to_csv(path)
    return f"[{spec.name}] " + rep.summary(), [path]


_EXPECTED = (SolverError, SpectralError, ContractionPrecheckError, ArithmeticError, ValueError)


def run_experiment(spec: ExperimentSpec, out_dir) -> ExperimentResult:
    """Run one experiment into ``out_dir/<name>/``; failures are captured, not raised."""
    target = Path(out_dir) / spec.name
    try:
        summary, paths = _execute(spec, target)
        ok = True
    except _EXPECTED as exc:
        summary, paths, ok = f"[{spec.name}] FAILED: {type(exc).__name__}: {exc}", [], False
    target.mkdir(parents=True, exist_ok=True)
    (target / "summary.txt").write_text(summary + "\n")
    return ExperimentResult(spec.name, spec.kind, ok, summary,
                            [str(p) for p in paths] + [str(target / "summary.txt")])


def run_experiments(spec_path, out_dir, jobs: int = 1, seed: int | None = None) -> list[ExperimentResult]:
    """Run every experiment in a spec file, optionally in parallel processes.

    ``seed`` overrides the per-experiment seeds. Results come back in file order.
    """
    specs = load_spec(spec_path)
    if seed is not None:
        for s in specs:
            s.seed = seed
    jobs = max(1, min(int(jobs), len(specs), os.cpu_count() or 1))
    if jobs == 1:
        return [run_experiment(s, out_dir) for s in specs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_experiment, specs, [out_dir] * len(specs)))
