"""Numerical certificates on computed trajectories.

Every check produces a ``CertificateEntry`` (lhs <= rhs + tol) collected
in a ``CertificateReport``. Entries whose hypothesis fails carry the status
``"hypothesis-not-met"`` and count neither as pass nor as fail.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import l1_norm


@dataclass
class CertificateEntry:
    name: str
    interval: tuple
    lhs: float
    rhs: float
    tol: float = 0.0
    status: str = "evaluated"
    detail: str = ""

    @property
    def margin(self) -> float:
        return float(self.rhs + self.tol - self.lhs)

    @property
    def passed(self) -> bool | None:
        if self.status != "evaluated":
            return None
        return bool(self.lhs <= self.rhs + self.tol)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["interval"] = [float(x) for x in self.interval]
        d["margin"] = self.margin if np.isfinite(self.margin) else None
        d["passed"] = self.passed
        for k in ("lhs", "rhs", "tol"):
            d[k] = float(d[k]) if np.isfinite(d[k]) else None
        return d


@dataclass
class CertificateReport:
    entries: list = field(default_factory=list)

    def add(self, entry: CertificateEntry) -> CertificateEntry:
        self.entries.append(entry)
        return entry

    def extend(self, other: "CertificateReport"):
        self.entries.extend(other.entries)

    @property
    def passed(self) -> bool:
        return all(e.passed is not False for e in self.entries)

    @property
    def failures(self) -> list:
        return [e for e in self.entries if e.passed is False]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, name):
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "entries": [e.to_dict() for e in self.entries]}


def stability_history(states, problem, times=None) -> np.ndarray:
    """Slack of -D E(t_k, u_k) in the stability set (max over nodes) per state."""
    states = np.asarray(states, dtype=float)
    if times is None:
        times = np.zeros(len(states))
    return np.array([problem.slack(t, u) for t, u in zip(times, states)])


def _history(traj):
    return np.asarray(traj.times, dtype=float), np.asarray(traj.states, dtype=float), traj.problem


def _d2w_bound(density, lo, hi, n=2001):
    """sup |D^2 W0| over the box [lo, hi]^m, sampled."""
    m = density.m
    if m == 1:
        z = np.linspace(lo, hi, n)[:, None]
    else:
        rng = np.random.default_rng(0)
        z = rng.uniform(lo, hi, size=(n, m))
    H = density.hessian(z)
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (H + np.swapaxes(H, -1, -2))))))


def oscillation_constant(traj) -> float:
    """C = max(K^2 L, 4) with K = sup |D^2 W0| on the range of the trajectory."""
    _, states, problem = _history(traj)
    lo, hi = float(states.min()), float(states.max())
    K = _d2w_bound(problem.density, lo, hi)
    L = problem.grid.length
    return max(K * K * L, 4.0)


def oscillation_certificate(traj, s: float, t: float, *, eps_stab: float = 1e-6,
                            C: float | None = None) -> CertificateReport:
    """|grad(u(t) - u(s))|^2 <= C (|u(t)-u(s)|_1^2 + |fdot|_inf int_s^t |u(t)-u(r)|_1 dr).

    The hypothesis is stability of the state at time s.
    """
    times, states, problem = _history(traj)
    g = problem.grid
    report = CertificateReport()
    i, j = (int(np.argmin(np.abs(times - x))) for x in (s, t))
    if i > j:
        i, j = j, i
    if C is None:
        C = oscillation_constant(traj)
    slack = problem.slack(times[i], states[i])
    if slack > eps_stab:
        report.add(CertificateEntry("oscillation", (times[i], times[j]), np.nan, np.nan,
                                    status="hypothesis-not-met",
                                    detail=f"slack {slack:.3e} at s exceeds {eps_stab:g}"))
        return report
    du = states[j] - states[i]
    if g.dim == 1:
        from .grid import norms
        lhs = norms(g, du)["H1_semi"] ** 2
    else:
        lhs = 0.0
    fdot = max(float(np.max(np.abs(problem.loading.time_derivative(r)))) for r in times[i:j + 1])
    seg = times[i:j + 1]
    gaps = np.array([l1_norm(g, states[j] - u) for u in states[i:j + 1]])
    integral = float(np.trapezoid(gaps, seg)) if len(seg) > 1 else 0.0
    rhs = C * (l1_norm(g, du) ** 2 + fdot * integral)
    # approximate stability at s and the per-step balance residuals enter linearly
    tol = 2.0 * eps_stab * np.sqrt(g.m) * l1_norm(g, du) + 1e-12
    if hasattr(traj, "balance_residuals") and j > i:
        tol += 2.0 * float(np.sum(np.abs(traj.balance_residuals[i:j])))
    report.add(CertificateEntry("oscillation", (times[i], times[j]), lhs, rhs, tol,
                                detail=f"C={C:.6g}"))
    return report


def variation_sandwich(traj, interval, eps: float, *, tol: float | None = None,
                       jump_times=None) -> CertificateReport:
    """Var_R1 <= E(a) - E(b) - int <fdot, u> on an interval free of jumps above eps.

    Reports the ratio (E(a) - E(b) - int <fdot,u>) / Var as the right-hand
    factor. ``jump_times`` lists known jump times; if omitted, any single
    step whose R1-increment exceeds eps counts as a jump.
    """
    times, states, problem = _history(traj)
    a, b = interval
    i = int(np.searchsorted(times, a, side="left"))
    j = int(np.searchsorted(times, b, side="right")) - 1
    report = CertificateReport()
    if tol is None:
        tol = getattr(traj, "balance_tol", 1e-8) * max(1, j - i)
    if j <= i:
        report.add(CertificateEntry("variation_sandwich", (a, b), 0.0, 0.0, tol))
        return report
    incs = np.array([problem.R1(states[k + 1] - states[k]) for k in range(i, j)])
    has_jump = bool(np.any(incs > eps))
    if jump_times is not None:
        has_jump = has_jump or any(a <= tk <= b for tk in jump_times)
    if has_jump:
        report.add(CertificateEntry("variation_sandwich", (a, b), np.nan, np.nan,
                                    status="hypothesis-not-met",
                                    detail=f"jump larger than {eps:g} inside the interval"))
        return report
    var = float(incs.sum())
    E = problem.energy
    work = sum(E.load_work(times[k], times[k + 1], states[k], states[k + 1]) for k in range(i, j))
    drop = E.energy(times[i], states[i]) - E.energy(times[j], states[j]) - work
    ratio = drop / var if var > 0 else 1.0
    report.add(CertificateEntry("variation_sandwich", (times[i], times[j]), var, drop, tol,
                                detail=f"ratio={ratio:.12g}"))
    return report


def energy_ledger_certificate(times, states, energies, problem, *, tol=1e-9,
                              name="energy_ledger") -> CertificateEntry:
    """Stored energies agree with E(t_k, u_k) recomputed from the states."""
    recomputed = np.array([problem.energy.energy(t, u) for t, u in zip(times, states)])
    err = float(np.max(np.abs(recomputed - np.asarray(energies)), initial=0.0))
    scale = 1.0 + float(np.max(np.abs(recomputed), initial=0.0))
    return CertificateEntry(name, (float(times[0]), float(times[-1])), err, 0.0, tol * scale)


def viscous_trajectory_certificates(traj, *, slack_tol=None) -> CertificateReport:
    """Per-step energy balance and monotone energy-loss process of one viscous run."""
    rep = CertificateReport()
    span = (float(traj.times[0]), float(traj.times[-1]))
    res = traj.balance_residuals
    allow = traj.balance_allowance()
    worst = float(np.max(res - allow, initial=-np.inf))
    rep.add(CertificateEntry(f"balance[lam={traj.lam:g}]", span,
                             float(np.max(res, initial=0.0)),
                             float(np.max(allow, initial=0.0)) if worst <= 0 else
                             float(allow[int(np.argmax(res - allow))])))
    dom = np.diff(traj.omega)
    rep.add(CertificateEntry(f"omega_monotone[lam={traj.lam:g}]", span,
                             float(-np.min(dom, initial=0.0)), 0.0, traj.balance_tol))
    rep.add(energy_ledger_certificate(traj.times, traj.states, traj.energies, traj.problem,
                                      name=f"energy_ledger[lam={traj.lam:g}]"))
    return rep
