"""Positively 1-homogeneous dissipation potentials R1 and their smoothing.

Every potential acts on arrays of shape ``(..., m)``. The stability set
S = dR1(0) is handled through ``slack``, ``contains`` and, where a closed
form exists, the Euclidean projection ``project`` used by the exact
semismooth Newton step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import ConvexHull
from scipy.stats import qmc

from .potentials import ConfigurationError

N_DIRECTIONS = 2**10


class DissipationPotential:
    kind = "abstract"
    m = 1
    interval = None  # stability interval for one-component exact kinds
    c1 = 1.0
    c2 = 1.0
    has_exact_projection = False

    def value(self, z) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, z):
        return self.value(z)

    def slack(self, sigma) -> np.ndarray:
        """max over unit z of <sigma, z> - R1(z), vectorized over nodes."""
        raise NotImplementedError

    def contains(self, sigma, tol: float = 0.0) -> np.ndarray:
        return self.slack(sigma) <= tol

    def project(self, sigma) -> np.ndarray:
        raise NotImplementedError(f"no closed-form projection onto S for {self.kind}")

    def project_jacobian(self, sigma) -> np.ndarray:
        raise NotImplementedError(f"no closed-form projection onto S for {self.kind}")

    def outward_normal(self, sigma, tol: float = 1e-9) -> np.ndarray:
        """Sum of outward normals of the constraints of S active at sigma (0 if none)."""
        raise NotImplementedError

    def regularize(self, delta: float) -> "RegularizedDissipation":
        return regularize(self, delta)

    def describe(self) -> dict:
        return {"kind": self.kind}

    # used by the regularization
    def _smooth_gauge(self, z, delta):
        raise NotImplementedError


def _sign(z):
    return np.where(z >= 0.0, 1.0, -1.0)


class WeightedL1(DissipationPotential):
    """sum_i alpha_i |z_i|."""
    kind = "weighted_l1"
    has_exact_projection = True

    def __init__(self, alpha):
        a = np.atleast_1d(np.asarray(alpha, dtype=float))
        if a.ndim != 1 or np.any(a <= 0) or not np.all(np.isfinite(a)):
            raise ConfigurationError("weights must be positive and finite")
        self.alpha = a
        self.m = a.size
        self.c1 = float(a.min())
        self.c2 = float(np.linalg.norm(a))

    def value(self, z):
        return np.sum(self.alpha * np.abs(z), axis=-1)

    def slack(self, sigma):
        s = np.abs(sigma) - self.alpha
        pos = np.sqrt(np.sum(np.maximum(s, 0.0) ** 2, axis=-1))
        return np.where(np.any(s > 0, axis=-1), pos, np.max(s, axis=-1))

    def project(self, sigma):
        return np.clip(sigma, -self.alpha, self.alpha)

    def project_jacobian(self, sigma):
        inside = (np.abs(sigma) <= self.alpha).astype(float)
        out = np.zeros(inside.shape + (self.m,))
        idx = np.arange(self.m)
        out[..., idx, idx] = inside
        return out

    def outward_normal(self, sigma, tol=1e-9):
        return np.where(np.abs(sigma) >= self.alpha - tol, _sign(sigma), 0.0)

    @property
    def interval(self):
        return (-float(self.alpha[0]), float(self.alpha[0])) if self.m == 1 else None

    def describe(self):
        return {"kind": self.kind, "alpha": self.alpha.tolist()}


class AsymmetricScalar(DissipationPotential):
    """alpha [z]^+ + beta [z]^- on the real line."""
    kind = "asymmetric_scalar"
    has_exact_projection = True
    m = 1

    def __init__(self, alpha: float, beta: float):
        if not (alpha > 0 and beta > 0):
            raise ConfigurationError("alpha and beta must be positive")
        self.alpha, self.beta = float(alpha), float(beta)
        self.c1 = min(self.alpha, self.beta)
        self.c2 = max(self.alpha, self.beta)

    def value(self, z):
        z = np.asarray(z, dtype=float)[..., 0]
        return self.alpha * np.maximum(z, 0.0) + self.beta * np.maximum(-z, 0.0)

    def slack(self, sigma):
        s = np.asarray(sigma, dtype=float)[..., 0]
        return np.maximum(s - self.alpha, -s - self.beta)

    def project(self, sigma):
        return np.clip(sigma, -self.beta, self.alpha)

    def project_jacobian(self, sigma):
        s = np.asarray(sigma)
        inside = ((s <= self.alpha) & (s >= -self.beta)).astype(float)
        return inside[..., None]

    def outward_normal(self, sigma, tol=1e-9):
        s = np.asarray(sigma, dtype=float)
        return np.where(s >= self.alpha - tol, 1.0, np.where(s <= -self.beta + tol, -1.0, 0.0))

    @property
    def interval(self):
        return (-self.beta, self.alpha)

    def describe(self):
        return {"kind": self.kind, "alpha": self.alpha, "beta": self.beta}


class _Gauge(DissipationPotential):
    kind = "gauge"
    shape = "abstract"

    def describe(self):
        return {"kind": self.kind, "set": self.shape}

    def _directional_slack(self, sigma):
        """Direction sampling plus Nelder-Mead refinement for one sigma."""
        dirs = self._directions()
        vals = dirs @ sigma - self._dir_values
        best = dirs[int(np.argmax(vals))]

        def neg(y):
            n = np.linalg.norm(y)
            if n == 0:
                return 0.0
            z = y / n
            return -(z @ sigma - float(self.value(z)))

        res = minimize(neg, best, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 400})
        return max(float(vals.max()), -float(res.fun))

    def _directions(self):
        if not hasattr(self, "_dirs"):
            if self.m == 1:
                d = np.array([[1.0], [-1.0]])
            elif self.m == 2:
                a = 2 * np.pi * np.arange(N_DIRECTIONS) / N_DIRECTIONS
                d = np.stack([np.cos(a), np.sin(a)], axis=1)
            else:
                from scipy.stats import norm
                raw = qmc.Sobol(d=self.m, scramble=True, seed=0).random(N_DIRECTIONS)
                d = norm.ppf(np.clip(raw, 1e-12, 1 - 1e-12))
                d /= np.linalg.norm(d, axis=1, keepdims=True)
            self._dirs = d
            self._dir_values = self.value(d)
        return self._dirs

    def slack(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        flat = sigma.reshape(-1, self.m)
        out = np.array([self._directional_slack(s) for s in flat])
        return out.reshape(sigma.shape[:-1])


class GaugeBall(_Gauge):
    """Gauge of the Euclidean ball of radius r: |z| / r."""
    shape = "ball"
    has_exact_projection = True

    def __init__(self, radius: float = 1.0, m: int = 2):
        if not radius > 0:
            raise ConfigurationError("0 must be an interior point of K (radius > 0)")
        self.radius = float(radius)
        self.m = int(m)
        self.c1 = self.c2 = 1.0 / self.radius

    def value(self, z):
        return np.linalg.norm(z, axis=-1) / self.radius

    def slack(self, sigma):
        return np.linalg.norm(sigma, axis=-1) - 1.0 / self.radius

    def project(self, sigma):
        n = np.linalg.norm(sigma, axis=-1, keepdims=True)
        rho = 1.0 / self.radius
        return sigma * np.minimum(1.0, rho / np.maximum(n, 1e-300))

    def project_jacobian(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        n = np.linalg.norm(sigma, axis=-1)
        rho = 1.0 / self.radius
        eye = np.broadcast_to(np.eye(self.m), sigma.shape + (self.m,))
        safe = np.maximum(n, 1e-300)[..., None, None]
        nn = sigma[..., :, None] * sigma[..., None, :] / safe**2
        outside = (n > rho)[..., None, None]
        return np.where(outside, rho / safe * (eye - nn), eye)

    def outward_normal(self, sigma, tol=1e-9):
        n = np.linalg.norm(sigma, axis=-1, keepdims=True)
        act = n >= 1.0 / self.radius - tol
        return np.where(act, sigma / np.maximum(n, 1e-300), 0.0)

    def _smooth_gauge(self, z, delta):
        n = np.linalg.norm(z, axis=-1)
        safe = np.maximum(n, 1e-150)
        g = n / self.radius
        grad = z / (self.radius * safe[..., None])
        unit = z / safe[..., None]
        eye = np.eye(self.m)
        hess = (eye - unit[..., :, None] * unit[..., None, :]) / (self.radius * safe[..., None, None])
        return g, grad, hess

    @property
    def interval(self):
        return (-1.0 / self.radius, 1.0 / self.radius) if self.m == 1 else None

    def describe(self):
        return {"kind": self.kind, "set": "ball", "radius": self.radius, "m": self.m}


class GaugeEllipsoid(_Gauge):
    """Gauge of K = {z : z^T M z <= 1}, i.e. sqrt(z^T M z)."""
    shape = "ellipsoid"

    def __init__(self, matrix):
        M = np.atleast_2d(np.asarray(matrix, dtype=float))
        if M.shape[0] != M.shape[1] or not np.allclose(M, M.T):
            raise ConfigurationError("ellipsoid matrix must be symmetric")
        ev = np.linalg.eigvalsh(M)
        if ev[0] <= 0 or not np.all(np.isfinite(ev)):
            raise ConfigurationError("0 must be an interior point of K (matrix must be SPD)")
        self.M = M
        self.Minv = np.linalg.inv(M)
        self.m = M.shape[0]
        self.c1, self.c2 = float(np.sqrt(ev[0])), float(np.sqrt(ev[-1]))

    def value(self, z):
        z = np.asarray(z, dtype=float)
        return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", z, self.M, z), 0.0))

    def contains(self, sigma, tol=0.0):
        s = np.asarray(sigma, dtype=float)
        q = np.einsum("...i,ij,...j->...", s, self.Minv, s)
        return np.sqrt(q) <= 1.0 + tol

    def outward_normal(self, sigma, tol=1e-9):
        s = np.asarray(sigma, dtype=float)
        g = s @ self.Minv
        q = np.sqrt(np.einsum("...i,...i->...", s, g))
        n = np.linalg.norm(g, axis=-1, keepdims=True)
        return np.where((q >= 1.0 - tol)[..., None], g / np.maximum(n, 1e-300), 0.0)

    def _smooth_gauge(self, z, delta):
        z = np.asarray(z, dtype=float)
        Mz = z @ self.M
        g = np.sqrt(np.maximum(np.einsum("...i,...i->...", z, Mz), 0.0))
        safe = np.maximum(g, 1e-150)
        grad = Mz / safe[..., None]
        hess = (self.M - grad[..., :, None] * grad[..., None, :]) / safe[..., None, None]
        return g, grad, hess

    def describe(self):
        return {"kind": self.kind, "set": "ellipsoid", "matrix": self.M.tolist()}


class GaugePolytope(_Gauge):
    """Gauge of the convex hull of the given vertices: max_j a_j.z / b_j."""
    shape = "polytope"

    def __init__(self, vertices):
        V = np.asarray(vertices, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
        self.vertices = V
        self.m = V.shape[1]
        if self.m == 1:
            hi, lo = V.max(), V.min()
            if not (lo < 0 < hi):
                raise ConfigurationError("0 must be an interior point of K")
            normals, offsets = np.array([[1.0], [-1.0]]), np.array([hi, -lo])
        else:
            try:
                hull = ConvexHull(V)
            except Exception as exc:
                raise ConfigurationError(f"degenerate polytope: {exc}") from None
            normals, offsets = hull.equations[:, :-1], -hull.equations[:, -1]
            if np.any(offsets <= 1e-12):
                raise ConfigurationError("0 must be an interior point of K")
        self.facets = normals / offsets[:, None]
        self.c1 = 1.0 / float(np.max(np.linalg.norm(V, axis=1)))
        self.c2 = float(np.max(np.linalg.norm(self.facets, axis=1)))

    def value(self, z):
        z = np.asarray(z, dtype=float)
        return np.max(z @ self.facets.T, axis=-1)

    def contains(self, sigma, tol=0.0):
        s = np.asarray(sigma, dtype=float)
        return np.max(s @ self.vertices.T, axis=-1) <= 1.0 + tol

    def outward_normal(self, sigma, tol=1e-9):
        s = np.asarray(sigma, dtype=float)
        act = (s @ self.vertices.T >= 1.0 - tol).astype(float)
        n = act @ self.vertices
        norm = np.linalg.norm(n, axis=-1, keepdims=True)
        return np.where(norm > 0, n / np.maximum(norm, 1e-300), 0.0)

    def smoothing_width(self, delta):
        """Temperature of the smooth max; its additive error is at most delta / 2."""
        return 0.5 * delta / max(np.log(self.facets.shape[0]), 1.0)

    def _smooth_gauge(self, z, delta):
        """Log-sum-exp of the facet values shifted to vanish at 0.

        R1 - delta/2 <= value <= R1, and grad . z - value lies in [0, delta/2].
        """
        eps = self.smoothing_width(delta)
        z = np.asarray(z, dtype=float)
        G = self.facets
        ell = z @ G.T
        top = ell.max(axis=-1, keepdims=True)
        e = np.exp((ell - top) / eps)
        tot = e.sum(axis=-1, keepdims=True)
        w = e / tot
        val = top[..., 0] + eps * np.log(tot[..., 0] / G.shape[0])
        grad = w @ G
        hess = (np.einsum("...j,ji,jk->...ik", w, G, G)
                - grad[..., :, None] * grad[..., None, :]) / eps
        return val, grad, hess

    def describe(self):
        return {"kind": self.kind, "set": "polytope", "vertices": self.vertices.tolist()}


def weighted_l1(alpha) -> WeightedL1:
    return WeightedL1(alpha)


def asymmetric_scalar(alpha: float, beta: float) -> AsymmetricScalar:
    return AsymmetricScalar(alpha, beta)


def gauge_of_ball(radius: float = 1.0, m: int = 2) -> GaugeBall:
    return GaugeBall(radius, m)


def gauge_of_ellipsoid(matrix) -> GaugeEllipsoid:
    return GaugeEllipsoid(matrix)


def gauge_of_polytope(vertices) -> GaugePolytope:
    return GaugePolytope(vertices)


def from_config(spec: dict) -> DissipationPotential:
    """Build a potential from a plain mapping (as read from a config file)."""
    kind = spec.get("kind")
    if kind == "weighted_l1":
        return WeightedL1(spec["alpha"])
    if kind == "asymmetric_scalar":
        return AsymmetricScalar(spec["alpha"], spec["beta"])
    if kind == "gauge":
        shape = spec.get("set", "ball")
        if shape == "ball":
            return GaugeBall(spec.get("radius", 1.0), spec.get("m", 2))
        if shape == "ellipsoid":
            return GaugeEllipsoid(spec["matrix"])
        if shape == "polytope":
            return GaugePolytope(spec["vertices"])
        raise ConfigurationError(f"unknown gauge set {shape!r}")
    raise ConfigurationError(f"unknown dissipation kind {kind!r}")


def eval_R1(pot: DissipationPotential, z) -> np.ndarray:
    return pot.value(z)


def stability_slack(pot: DissipationPotential, sigma) -> float:
    """Slack of sigma in S; for fields this is the maximum over nodes."""
    return float(np.max(pot.slack(np.asarray(sigma, dtype=float))))


# Smooth ramp phi_delta: zero below delta, slope one above 2 delta.

def _smootherstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10.0 - 15.0 * x + 6.0 * x**2)


def ramp(s, delta):
    """phi_delta(s) = integral of smootherstep((r - delta)/delta) from 0 to s."""
    s = np.asarray(s, dtype=float)
    x = np.clip((s - delta) / delta, 0.0, 1.0)
    mid = delta * x**4 * (2.5 - 3.0 * x + x**2)
    return np.where(s >= 2 * delta, s - 1.5 * delta, mid)


def ramp_prime(s, delta):
    return _smootherstep((np.asarray(s, dtype=float) - delta) / delta)


def ramp_second(s, delta):
    x = np.clip((np.asarray(s, dtype=float) - delta) / delta, 0.0, 1.0)
    return 30.0 * x**2 * (1.0 - x) ** 2 / delta


@dataclass(frozen=True, eq=False)
class RegularizedDissipation:
    """C^1 (in fact C^3) convex approximation R1^delta of a potential."""
    base: DissipationPotential
    delta: float

    @property
    def fattening(self) -> str:
        if isinstance(self.base, GaugePolytope):
            return f"log-sum-exp of facet values, width={self.base.smoothing_width(self.delta):.6g}"
        if isinstance(self.base, (GaugeBall, GaugeEllipsoid)):
            return "none (smooth set)"
        return "per coordinate"

    def _parts(self, z):
        """Return value, gradient and Hessian at z."""
        b, d = self.base, self.delta
        z = np.asarray(z, dtype=float)
        if isinstance(b, WeightedL1):
            dd = d / b.m
            s = b.alpha * np.abs(z)
            sg = _sign(z)
            val = np.sum(ramp(s, dd), axis=-1)
            grad = ramp_prime(s, dd) * b.alpha * sg
            h = ramp_second(s, dd) * b.alpha**2
            hess = np.zeros(h.shape + (b.m,))
            idx = np.arange(b.m)
            hess[..., idx, idx] = h
            return val, grad, hess
        if isinstance(b, AsymmetricScalar):
            r = b.value(z)
            slope = np.where(z[..., 0] >= 0, b.alpha, -b.beta)
            val = ramp(r, d)
            grad = (ramp_prime(r, d) * slope)[..., None]
            hess = (ramp_second(r, d) * slope**2)[..., None, None]
            return val, grad, hess
        g, dg, d2g = b._smooth_gauge(z, d)
        p1, p2 = ramp_prime(g, d), ramp_second(g, d)
        val = ramp(g, d)
        grad = p1[..., None] * dg
        hess = p2[..., None, None] * dg[..., :, None] * dg[..., None, :] + p1[..., None, None] * d2g
        return val, grad, hess

    def value(self, z):
        return self._parts(z)[0]

    def __call__(self, z):
        return self.value(z)

    def gradient(self, z):
        return self._parts(z)[1]

    def hessian(self, z):
        return self._parts(z)[2]


def regularize(pot: DissipationPotential, delta: float) -> RegularizedDissipation:
    if not delta > 0:
        raise ValueError("delta must be positive")
    return RegularizedDissipation(pot, float(delta))
