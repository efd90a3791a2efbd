"""Time stepping for  lam u' + dR1(u') - Lap u + DW0(u) = f  by incremental minimization.

One step minimizes over the increment w

    (lam / 2 tau) |w|^2 + R1(w) + (1/c) E(t, u + c w)

with c = 1/2 (energy-exact midpoint rule, default) or c = 1 (implicit
Euler). With exact data the first-order system is solved by a
semismooth Newton method on the projection onto the stability set; with
``delta > 0`` (or a gauge without closed-form projection) by damped
Newton on R1^delta with continuation in delta.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import solve_banded

from .dissipation import DissipationPotential, from_config
from .grid import SpatialGrid, laplacian
from .potentials import ConfigurationError, Loading, TotalEnergy, density_by_name


class StepFailure(RuntimeError):
    """Newton did not converge; carries the last residual."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True, eq=False)
class Problem:
    energy: TotalEnergy
    dissipation: DissipationPotential
    u0: np.ndarray
    horizon: float = 1.0
    name: str = "problem"

    def __post_init__(self):
        u0 = self.grid.check(np.array(self.u0, dtype=float))
        u0.setflags(write=False)
        object.__setattr__(self, "u0", u0)
        if self.dissipation.m != self.grid.m:
            raise ConfigurationError("dissipation and grid disagree on m")

    @property
    def grid(self) -> SpatialGrid:
        return self.energy.grid

    @property
    def density(self):
        return self.energy.density

    @property
    def loading(self) -> Loading:
        return self.energy.loading

    def with_loading(self, loading: Loading) -> "Problem":
        return replace(self, energy=TotalEnergy(self.density, loading, self.grid))

    def frozen(self, t: float) -> "Problem":
        return self.with_loading(self.loading.frozen(t))

    def force(self, t: float, u) -> np.ndarray:
        """Generalized force sigma = -D_u E(t, u)."""
        return -self.energy.gradient(t, u)

    def slack(self, t: float, u) -> float:
        return float(np.max(self.dissipation.slack(self.force(t, u))))

    def R1(self, w) -> float:
        """Integrated dissipation of an increment (quadrature weight h)."""
        return float(self.grid.h * np.sum(self.dissipation.value(w)))


def build_problem(spec: dict) -> Problem:
    """Problem from a plain mapping.

    Keys: density, density_params, dissipation (see ``from_config``),
    loading {offset, slope}, u0, horizon, name, grid {dim, n_nodes, length}.
    Scalars or per-component lists broadcast over the nodes.
    """
    for key in ("density", "dissipation", "horizon"):
        if key not in spec:
            raise ConfigurationError(f"problem.{key} is required")
    density = density_by_name(spec["density"], **dict(spec.get("density_params") or {}))
    gspec = dict(spec.get("grid") or {})
    dim = int(gspec.get("dim", 0))
    if dim == 0:
        grid = SpatialGrid.point(density.m)
    else:
        grid = SpatialGrid.interval(int(gspec.get("n_nodes", 64)), float(gspec.get("length", 1.0)),
                                    density.m)
    dissipation = from_config(dict(spec["dissipation"]))
    load = dict(spec.get("loading") or {})
    loading = Loading.affine(grid, load.get("offset", 0.0), load.get("slope", 0.0))
    horizon = float(spec["horizon"])
    if not horizon > 0:
        raise ConfigurationError("problem.horizon must be positive")
    energy = TotalEnergy(density, loading, grid)
    return Problem(energy, dissipation, grid.field(spec.get("u0", 0.0)), horizon,
                   str(spec.get("name", density.name)))


@dataclass(frozen=True)
class ViscousParams:
    lam: float
    tau: float
    delta: float = 0.0
    newton_tol: float = 1e-11
    newton_max_iter: int = 60
    controller: str = "fixed"
    drop_cap: float | None = None
    tau_min: float | None = None
    tau_max: float | None = None
    scheme: str = "midpoint"
    convexity_margin: float = 1.0
    convexity_check: str = "global"
    max_subdivisions: int = 30
    events: bool = True
    balance_tol: float | None = None
    delta_start: float = 2.0**-3

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigurationError("lam must be positive")
        if not self.tau > 0:
            raise ConfigurationError("tau must be positive")
        if self.delta < 0:
            raise ConfigurationError("delta must be nonnegative")
        if self.scheme not in ("midpoint", "euler"):
            raise ConfigurationError("scheme must be 'midpoint' or 'euler'")
        if self.controller not in ("fixed", "adaptive"):
            raise ConfigurationError("controller must be 'fixed' or 'adaptive'")
        if self.convexity_check not in ("global", "local", "off"):
            raise ConfigurationError("convexity_check must be global, local or off")

    @property
    def c(self) -> float:
        return 0.5 if self.scheme == "midpoint" else 1.0

    def check_convexity(self, mu: float, tau: float | None = None):
        tau = self.tau if tau is None else tau
        if self.convexity_check == "global" and not self.lam / tau > mu + self.convexity_margin:
            raise ConfigurationError(
                f"incremental problem not strictly convex: lam/tau = {self.lam / tau:.6g} "
                f"<= mu + margin = {mu + self.convexity_margin:.6g}")


@dataclass
class StepResult:
    state: np.ndarray
    t: float
    iters: int
    residual: float
    ri: float
    rd: float
    force_work: float
    load_work: float
    energy: float
    hit_kink: bool = False


def _block_diag(blocks) -> sp.csr_matrix:
    n, m, _ = blocks.shape
    return sp.bsr_matrix((blocks, np.arange(n), np.arange(n + 1)), shape=(n * m, n * m)).tocsr()


class _Stepper:
    """Solves one incremental problem; holds per-problem caches."""

    def __init__(self, problem: Problem, params: ViscousParams):
        self.p = problem
        self.params = params
        g = problem.grid
        self.g = g
        self.n, self.m = g.n_nodes, g.m
        self.h = g.h
        self.c = params.c
        self.pot = problem.dissipation
        self.exact = params.delta == 0 and self.pot.has_exact_projection
        self.dens = problem.density
        self.L = g.laplacian_matrix if g.dim == 1 else None
        if self.L is not None and self.m == 1:
            # tridiagonal Laplacian bands for the banded Newton solve
            self._Lb = (self.L.diagonal(1), self.L.diagonal(0), self.L.diagonal(-1))
        self.scalar = self.n == 1 and self.m == 1
        self.events = params.events and self.dens.has_kinks and g.dim == 0
        coeffs = problem.loading.scalar_coeffs
        self.fast = (self.scalar and self.exact and self.dens.scalar is not None
                     and coeffs is not None and self.pot.interval is not None)
        if self.fast:
            self._f = coeffs
            self._S = self.pot.interval

    # ------------------------------------------------------------------ forces
    def fbar(self, t0, t1):
        f = self.p.loading
        if self.c == 1.0:
            return f.value(t1)
        return 0.5 * (f.value(t0) + f.value(t1))

    def sigma(self, y, fb):
        s = fb - self.dens.gradient(y)
        if self.L is not None:
            s = s + laplacian(self.g, y)
        return s

    def _hessian_operator(self, y):
        H = self.dens.hessian(y)
        if self.L is None:
            return H[0]
        return _block_diag(H) - self.L

    # ------------------------------------------------------------------ solve
    def solve(self, u, t0, t1, lam, w0=None, *, check=True):
        tau = t1 - t0
        a = lam / tau
        if self.fast:
            w, it, res = self._fast_solve(float(u[0, 0]), t0, t1, a,
                                          None if w0 is None else float(w0[0, 0]))
            w = np.array([[w]])
            if check and self.params.convexity_check == "local":
                self._certify_local(u + self.c * w, a, w, tau)
            return w, it, res
        fb = self.fbar(t0, t1)
        if self.exact:
            w, it, res = self._newton_exact(u, fb, a, w0)
        else:
            w, it, res = self._newton_smooth(u, fb, a, tau, w0)
        if check and self.params.convexity_check == "local":
            self._certify_local(u + self.c * w, a, w, tau)
        return w, it, res

    def _fast_solve(self, u, t0, t1, a, w0):
        """Scalar semismooth Newton with plain floats (single node, one component)."""
        c = self.c
        f0, f1 = self._f
        fb = f0 + f1 * (0.5 * (t0 + t1) if c == 0.5 else t1)
        lo, hi = self._S
        _, dg, d2g = self.dens.scalar
        tol, maxit = self.params.newton_tol, self.params.newton_max_iter

        def resid(w):
            y = u + c * w
            s = fb - dg(y)
            e = s - hi if s > hi else (s - lo if s < lo else 0.0)
            return a * w - e, y, e != 0.0

        F, y, act = resid(0.0)
        if abs(F) <= tol:
            return 0.0, 0, abs(F)
        w = 0.0
        if w0 is not None:
            F1, y1, act1 = resid(w0)
            if abs(F1) < abs(F):
                w, F, y, act = w0, F1, y1, act1
        for it in range(1, maxit + 1):
            J = a + (c * d2g(y) if act else 0.0)
            d = -F / J
            step = 1.0
            for _ in range(30):
                Ft, yt, actt = resid(w + step * d)
                if abs(Ft) < (1.0 - 1e-4 * step) * abs(F) or abs(Ft) <= tol:
                    break
                step *= 0.5
            else:
                step = 1.0
                Ft, yt, actt = resid(w + d)
            w, F, y, act = w + step * d, Ft, yt, actt
            if abs(F) <= tol:
                return w, it, abs(F)
        raise StepFailure(f"semismooth Newton stalled at residual {abs(F):.3e}", abs(F))

    def _residual_exact(self, u, w, fb, a):
        y = u + self.c * w
        s = self.sigma(y, fb)
        F = a * w - (s - self.pot.project(s))
        return F, y, s

    def _norm(self, F):
        return math.sqrt(self.h * float(np.sum(F * F)))

    def _newton_exact(self, u, fb, a, w0):
        tol, maxit = self.params.newton_tol, self.params.newton_max_iter
        zero = np.zeros_like(u)
        F, y, s = self._residual_exact(u, zero, fb, a)
        r = self._norm(F)
        if r <= tol:
            return zero, 0, r
        w = zero
        if w0 is not None:
            F1, y1, s1 = self._residual_exact(u, w0, fb, a)
            r1 = self._norm(F1)
            if r1 < r:
                w, F, y, s, r = w0, F1, y1, s1, r1
        for it in range(1, maxit + 1):
            d = self._exact_direction(F, y, s, a)
            step, accepted = 1.0, False
            for _ in range(30):
                wt = w + step * d
                Ft, yt, st = self._residual_exact(u, wt, fb, a)
                rt = self._norm(Ft)
                if rt < (1.0 - 1e-4 * step) * r or rt <= tol:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                # nonsmooth switch of active sets: take the full step anyway
                wt = w + d
                Ft, yt, st = self._residual_exact(u, wt, fb, a)
                rt = self._norm(Ft)
            w, F, y, s, r = wt, Ft, yt, st, rt
            if r <= tol:
                return w, it, r
        raise StepFailure(f"semismooth Newton stalled at residual {r:.3e}", r)

    def _tridiag_solve(self, diag, scale, rhs):
        """Solve (diag(diag) - diag(scale) L) x = rhs for single-component 1-D fields."""
        up, mid, low = self._Lb
        ab = np.zeros((3, self.n))
        ab[0, 1:] = -scale[:-1] * up
        ab[1] = diag - scale * mid
        ab[2, :-1] = -scale[1:] * low
        return solve_banded((1, 1), ab, rhs[:, 0])[:, None]

    def _exact_direction(self, F, y, s, a):
        DP = self.pot.project_jacobian(s)
        eye = np.eye(self.m)
        B = eye - DP
        c = self.c
        if self.L is None:
            H = self.dens.hessian(y)[0]
            J = a * eye + c * B[0] @ H
            return np.linalg.solve(J, -F[0])[None, :]
        if self.m == 1:
            b = B[:, 0, 0]
            return self._tridiag_solve(a + c * b * self.dens.hessian(y)[:, 0, 0], c * b, -F)
        Bs = _block_diag(B)
        J = a * sp.identity(self.n * self.m, format="csr") + c * (Bs @ self._hessian_operator(y))
        return spla.spsolve(J.tocsc(), -F.ravel()).reshape(F.shape)

    # smooth path
    def _newton_smooth(self, u, fb, a, tau, w0):
        target = self.params.delta
        if target == 0:
            # gauge without closed-form projection: continue to solver tolerance
            target = max(self.params.newton_tol, 1e-10)
        deltas = []
        d = self.params.delta_start
        while d > target:
            deltas.append(d)
            d *= 0.5
        deltas.append(target)
        w = np.zeros_like(u) if w0 is None else w0.copy()
        total = 0
        for dj in deltas:
            reg = self.pot.regularize(dj)
            w, it, r = self._newton_reg(u, fb, a, tau, reg, w, final=dj == target)
            total += it
        return w, total, r

    def _residual_reg(self, u, w, fb, a, tau, reg):
        y = u + self.c * w
        s = self.sigma(y, fb)
        _, gR, hR = reg._parts(w / tau)
        return a * w + gR - s, y, hR

    def _newton_reg(self, u, fb, a, tau, reg, w, final):
        tol, maxit = self.params.newton_tol, self.params.newton_max_iter
        tol_j = tol if final else max(tol, 1e-8)
        F, y, hR = self._residual_reg(u, w, fb, a, tau, reg)
        r = self._norm(F)
        for it in range(1, maxit + 1):
            if r <= tol_j:
                return w, it - 1, r
            eye = np.eye(self.m)
            if self.L is None:
                J = a * eye + hR[0] / tau + self.c * self.dens.hessian(y)[0]
                d = np.linalg.solve(J, -F[0])[None, :]
            elif self.m == 1:
                dg = a + hR[:, 0, 0] / tau + self.c * self.dens.hessian(y)[:, 0, 0]
                d = self._tridiag_solve(dg, np.full(self.n, self.c), -F)
            else:
                J = (a * sp.identity(self.n * self.m) + _block_diag(hR / tau)
                     + self.c * self._hessian_operator(y))
                d = spla.spsolve(J.tocsc(), -F.ravel()).reshape(F.shape)
            step = 1.0
            for _ in range(40):
                wt = w + step * d
                Ft, yt, ht = self._residual_reg(u, wt, fb, a, tau, reg)
                rt = self._norm(Ft)
                if rt < (1.0 - 1e-4 * step) * r or rt <= tol_j:
                    break
                step *= 0.5
            w, F, y, hR, r = wt, Ft, yt, ht, rt
        if r <= tol_j:
            return w, maxit, r
        raise StepFailure(f"regularized Newton stalled at residual {r:.3e} (delta={reg.delta:g})", r)

    def _certify_local(self, y, a, w, tau):
        """Positive definiteness of the incremental Hessian at the solution."""
        H = self.dens.hessian(y)
        lo = float(np.min(np.linalg.eigvalsh(0.5 * (H + np.swapaxes(H, -1, -2)))))
        # the Laplacian part is negative definite, so it only helps
        if a + self.c * lo <= 0:
            raise ConfigurationError(
                f"incremental problem not locally convex: lam/tau={a:.6g}, min eig D2W={lo:.6g}")

    # ------------------------------------------------------------------ steps
    def step(self, u, t0, t1, lam, w0=None, check=True) -> StepResult:
        w, it, res = self.solve(u, t0, t1, lam, w0, check=check)
        v = u + w
        hit = False
        if self.events:
            crossing = self._crossing(u, v)
            if crossing is not None:
                v, t1, it2, res, w = self._land_on_kink(u, t0, t1, lam, crossing, check)
                it += it2
                hit = True
        return self._ledger(u, v, w, t0, t1, lam, it, res, hit)

    def _ledger(self, u, v, w, t0, t1, lam, it, res, hit):
        if self.fast:
            uu, vv, ww = float(u[0, 0]), float(v[0, 0]), float(w[0, 0])
            fa, fs = self._f
            f0, f1 = fa + fs * t0, fa + fs * t1
            lo, hi = self._S
            ri = hi * ww if ww > 0 else -lo * ww
            rd = lam / (t1 - t0) * ww * ww
            energy = self.dens.scalar[0](vv) - f1 * vv
            return StepResult(v, t1, it, res, ri, rd, 0.5 * (f0 + f1) * ww,
                              (f1 - f0) * 0.5 * (uu + vv), energy, hit)
        p, g = self.p, self.g
        tau = t1 - t0
        ri = p.R1(w)
        rd = lam / tau * g.h * float(np.sum(w * w))
        f0, f1 = p.loading.value(t0), p.loading.value(t1)
        force_work = g.inner(0.5 * (f0 + f1), w)
        load_work = g.inner(f1 - f0, 0.5 * (u + v))
        energy = p.energy.energy(t1, v)
        return StepResult(v, t1, it, res, ri, rd, force_work, load_work, energy, hit)

    def _crossing(self, u, v):
        """First kink strictly crossed by the step, as (component, kink)."""
        for c in range(self.m):
            a, b = u[0, c], v[0, c]
            for k in self.dens.kinks_of(c):
                if (a - k) * (b - k) < 0:
                    return c, k
        return None

    def _land_on_kink(self, u, t0, t1, lam, crossing, check):
        """Shorten the step so that it ends exactly on the crossed kink."""
        comp, k = crossing
        side = np.sign(u[0, comp] - k)
        lo, hi = 0.0, 1.0
        tau = t1 - t0
        best = (u.copy(), np.zeros_like(u), 0, 0.0)
        its = 0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            w, it, res = self.solve(u, t0, t0 + mid * tau, lam, check=check)
            its += it
            v = u + w
            if np.sign(v[0, comp] - k) == side or v[0, comp] == k:
                lo = mid
                best = (v, w, it, res)
                if abs(v[0, comp] - k) <= 1e-15 * max(1.0, abs(k)):
                    break
            else:
                hi = mid
            if hi - lo < 1e-15:
                break
        if lo == 0.0:
            # moves off the kink immediately (already sitting on it)
            w, it, res = self.solve(u, t0, t1, lam, check=check)
            return u + w, t1, its + it, res, w
        v, w, it, res = best
        v = v.copy()
        v[0, comp] = k
        w = v - u
        return v, t0 + lo * tau, its, res, w


@dataclass
class ViscousTrajectory:
    params: ViscousParams
    problem: Problem
    times: np.ndarray
    states: np.ndarray
    energies: np.ndarray
    ri: np.ndarray
    rd: np.ndarray
    force_work: np.ndarray
    load_work: np.ndarray
    newton_iters: np.ndarray
    residuals: np.ndarray
    lam: float = field(default=None)

    def __post_init__(self):
        if self.lam is None:
            self.lam = self.params.lam

    def __len__(self):
        return len(self.times)

    @property
    def balance_residuals(self) -> np.ndarray:
        """E_{k+1} - E_k + ri + rd + int <fdot, u>, per step."""
        return np.diff(self.energies) + self.ri + self.rd + self.load_work

    @property
    def omega(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.ri + self.rd)])

    @property
    def balance_tol(self) -> float:
        if self.params.balance_tol is not None:
            return self.params.balance_tol
        base = 1e-8 if self.problem.grid.dim == 0 else 1e-6
        return base

    def balance_allowance(self) -> np.ndarray:
        """Per-step tolerance: base plus the 2 delta tau |Omega| regularization defect."""
        dt = np.diff(self.times)
        vol = self.problem.grid.length if self.problem.grid.dim == 1 else 1.0
        return self.balance_tol + 2.0 * self.params.delta * dt * vol

    def monitors(self) -> dict:
        dt = np.diff(self.times)
        h = self.problem.grid.h
        inc = np.diff(self.states, axis=0)
        l2sq = h * np.sum(inc**2, axis=(1, 2))
        l1 = h * np.sum(np.abs(inc), axis=(1, 2))
        return {"viscous_bound": float(self.lam * np.sum(l2sq / np.where(dt > 0, dt, 1.0))),
                "l1_variation": float(np.sum(l1)),
                "max_balance_residual": float(np.max(self.balance_residuals, initial=0.0))}

    def state_at(self, t: float) -> np.ndarray:
        """Piecewise-linear interpolation in time."""
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = min(max(i, 0), len(self.times) - 2) if len(self.times) > 1 else 0
        if len(self.times) == 1:
            return self.states[0].copy()
        t0, t1 = self.times[i], self.times[i + 1]
        s = 0.0 if t1 == t0 else min(max((t - t0) / (t1 - t0), 0.0), 1.0)
        return (1 - s) * self.states[i] + s * self.states[i + 1]

    def to_csv(self, path):
        write_trajectory_csv(self, path)


def _empty_trajectory(params, problem, u0, t0):
    return dict(times=[t0], states=[u0.copy()], energies=[problem.energy.energy(t0, u0)],
                ri=[], rd=[], force_work=[], load_work=[], newton_iters=[0], residuals=[0.0])


def run_viscous(u0, T: float, params: ViscousParams, problem: Problem, *, t0: float = 0.0,
                lam: float | None = None, check_convexity: bool = True,
                stop=None) -> ViscousTrajectory:
    """March incremental steps from t0 to T.

    ``stop(step_result, history)`` may end the run early by returning True.
    """
    lam = params.lam if lam is None else lam
    grid = problem.grid
    u = grid.check(np.array(u0, dtype=float))
    if T <= t0:
        raise ValueError("horizon must be positive")
    stepper = _Stepper(problem, replace(params, lam=lam))
    if check_convexity:
        stepper.params.check_convexity(problem.density.mu)
    hist = _empty_trajectory(params, problem, u, t0)
    tau = params.tau
    tau_min = params.tau_min if params.tau_min is not None else params.tau * 2.0**-params.max_subdivisions
    tau_max = params.tau_max if params.tau_max is not None else params.tau
    t = t0
    w_prev = None
    tau_prev = tau
    adaptive = params.controller == "adaptive"
    cap = params.drop_cap
    btol = params.balance_tol if params.balance_tol is not None else (
        1e-8 if grid.dim == 0 else 1e-6)
    # balance-driven bisection is bounded separately from failure-driven bisection
    tau_floor = max(tau_min, params.tau * 2.0**-16)
    while t < T - 1e-14 * max(1.0, abs(T)):
        t1 = min(t + tau, T)
        if T - t1 < 1e-9 * tau:
            t1 = T
        guess = None if w_prev is None else w_prev * ((t1 - t) / tau_prev)
        try:
            res = stepper.step(u, t, t1, lam, guess, check=check_convexity)
        except StepFailure:
            if tau / 2 < tau_min:
                raise
            tau /= 2
            continue
        # energy defect of the midpoint step; refines stiff phases
        defect = abs(res.energy - hist["energies"][-1] + res.ri + res.rd + res.load_work)
        if adaptive and ((cap is not None and res.ri + res.rd > cap and tau / 2 >= tau_min)
                         or (defect > 0.5 * btol and tau / 2 >= tau_floor)):
            tau /= 2
            continue
        w_prev = res.state - u
        tau_prev = res.t - t
        u, t = res.state, res.t
        hist["times"].append(t)
        hist["states"].append(u)
        hist["energies"].append(res.energy)
        hist["ri"].append(res.ri)
        hist["rd"].append(res.rd)
        hist["force_work"].append(res.force_work)
        hist["load_work"].append(res.load_work)
        hist["newton_iters"].append(res.iters)
        hist["residuals"].append(res.residual)
        if (adaptive and (cap is None or res.ri + res.rd < 0.25 * cap) and defect < btol / 32
                and not res.hit_kink):
            tau = min(2 * tau, tau_max)
            if check_convexity and params.convexity_check == "global":
                tau = min(tau, lam / (problem.density.mu + params.convexity_margin) * (1 - 1e-12))
        if stop is not None and stop(res, hist):
            break
    return _finish(hist, replace(params, lam=lam), problem)


def _finish(hist, params, problem) -> ViscousTrajectory:
    arr = {k: np.asarray(v, dtype=float) for k, v in hist.items() if k != "states"}
    return ViscousTrajectory(params=params, problem=problem, states=np.asarray(hist["states"]),
                             newton_iters=arr.pop("newton_iters").astype(int), **arr)


def incremental_step(prev, t_prev: float, t_next: float, params: ViscousParams,
                     problem: Problem) -> StepResult:
    """One incremental step from (t_prev, prev) to t_next (no kink landing)."""
    stepper = _Stepper(problem, replace(params, events=False))
    params.check_convexity(problem.density.mu, t_next - t_prev)
    return stepper.step(problem.grid.check(np.asarray(prev, dtype=float)), t_prev, t_next, params.lam)


def strong_solution_residual(traj: ViscousTrajectory, k: int, test_fields) -> float:
    """Worst violation of the discrete variational inequality at step k -> k+1.

    For each test field xi this evaluates
    R1(z) + <-lam z + Lap u - DW0(u) + f, xi - z> - R1(xi),  z = du/tau,
    with u and f taken at the scheme's evaluation point.
    """
    p = traj.problem
    g = p.grid
    c = traj.params.c
    t0, t1 = traj.times[k], traj.times[k + 1]
    tau = t1 - t0
    u0, u1 = traj.states[k], traj.states[k + 1]
    z = (u1 - u0) / tau
    y = u0 + c * (u1 - u0)
    stepper = _Stepper(p, traj.params)
    s = stepper.sigma(y, stepper.fbar(t0, t1))
    force = s - traj.lam * z
    Rz = p.R1(z)
    worst = -np.inf
    for xi in test_fields:
        xi = g.check(np.asarray(xi, dtype=float))
        val = Rz + g.inner(force, xi - z) - p.R1(xi)
        worst = max(worst, val)
    return float(worst)


TRAJ_COLUMNS = ("energy", "ri_increment", "rd_increment", "force_work", "newton_iters", "residual")


def write_trajectory_csv(traj: ViscousTrajectory, path):
    n, m = traj.problem.grid.shape
    header = ["t"] + [f"u_{i}_{j}" for i in range(n) for j in range(m)] + list(TRAJ_COLUMNS)
    fmt = "{:.17g}".format
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for k, t in enumerate(traj.times):
            led = (0.0, 0.0, 0.0) if k == 0 else (traj.ri[k - 1], traj.rd[k - 1], traj.force_work[k - 1])
            row = [fmt(t)] + [fmt(x) for x in traj.states[k].ravel()]
            row += [fmt(traj.energies[k]), fmt(led[0]), fmt(led[1]), fmt(led[2]),
                    str(int(traj.newton_iters[k])), fmt(traj.residuals[k])]
            w.writerow(row)


def read_trajectory_csv(path, shape) -> dict:
    """Columns of a trajectory CSV; raises ValueError on malformed content."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError("trajectory file has no data rows")
    header, body = rows[0], rows[1:]
    n, m = shape
    if len(header) != 1 + n * m + len(TRAJ_COLUMNS):
        raise ValueError("trajectory header does not match the grid")
    data = np.array([[float(x) for x in r] for r in body])
    if data.shape[1] != len(header):
        raise ValueError("ragged trajectory file")
    return {"times": data[:, 0], "states": data[:, 1:1 + n * m].reshape(-1, n, m),
            **{name: data[:, 1 + n * m + i] for i, name in enumerate(TRAJ_COLUMNS)}}
