"""Energy densities W0, loadings f and the total energy E(t, u).

Densities act on arrays of shape ``(..., m)`` and are vectorized over the
leading axes. Piecewise densities list their breakpoints per component in
``kinks``; the time stepper uses them to land exactly on kinks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.stats import qmc

from .grid import SpatialGrid, forward_differences, laplacian


class ConfigurationError(ValueError):
    """Problem data that violates a structural requirement."""


@dataclass(frozen=True, eq=False)
class EnergyDensity:
    name: str
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    q: float = 2.0
    mu: float = 0.0
    C: float = 1.0
    m: int = 1
    kinks: tuple = ()
    params: dict = field(default_factory=dict)
    scalar: tuple | None = None  # float callables (g, dg, d2g) for fast 1-component paths

    def kinks_of(self, component: int) -> tuple:
        if not self.kinks:
            return ()
        return tuple(self.kinks[component])

    @property
    def has_kinks(self) -> bool:
        return any(len(k) for k in self.kinks)


def _componentwise(name, g, dg, d2g, *, q, mu, C, m=1, kinks=(), scalar=None,
                   **params) -> EnergyDensity:
    def value(z):
        return g(np.asarray(z, dtype=float)).sum(axis=-1)

    def gradient(z):
        return dg(np.asarray(z, dtype=float))

    def hessian(z):
        d = d2g(np.asarray(z, dtype=float))
        out = np.zeros(d.shape + (d.shape[-1],))
        idx = np.arange(d.shape[-1])
        out[..., idx, idx] = d
        return out

    return EnergyDensity(name, value, gradient, hessian, q=q, mu=mu, C=C, m=m,
                         kinks=tuple(tuple(kinks) for _ in range(m)), params=dict(params),
                         scalar=scalar if m == 1 else None)


def quadratic(m: int = 1, stiffness: float = 1.0) -> EnergyDensity:
    k = float(stiffness)
    return _componentwise(
        "quadratic",
        lambda z: 0.5 * k * z**2,
        lambda z: k * z,
        lambda z: np.full_like(z, k),
        q=2.0, mu=0.0, C=max(2.0, k, 2.0 / k), m=m, stiffness=k,
        scalar=(lambda z: 0.5 * k * z * z, lambda z: k * z, lambda z: k))


def doublewell_ex24() -> EnergyDensity:
    """min{z(z+2), z(z-2)} with a concave kink at 0."""
    return _componentwise(
        "doublewell_ex24",
        lambda z: np.minimum(z * (z + 2.0), z * (z - 2.0)),
        lambda z: np.where(z >= 0.0, 2.0 * z - 2.0, 2.0 * z + 2.0),
        lambda z: np.full_like(z, 2.0),
        q=2.0, mu=2.0, C=2.0, kinks=(0.0,),
        scalar=(lambda z: min(z * (z + 2.0), z * (z - 2.0)),
                lambda z: 2.0 * z - 2.0 if z >= 0.0 else 2.0 * z + 2.0,
                lambda z: 2.0))


def _bump_value(z):
    inner = 4.0 * np.minimum(z * (z + 0.5), z * (z - 0.5)) + 0.25
    return np.select(
        [z < -1.0, (z > -0.25) & (z < 0.25), z > 1.0],
        [0.5 * (z + 1.0) ** 2, inner, 0.5 * (z - 1.0) ** 2],
        0.0)


def _bump_gradient(z):
    return np.select(
        [z < -1.0, (z > -0.25) & (z < 0.0), (z >= 0.0) & (z < 0.25), z > 1.0],
        [z + 1.0, 8.0 * z + 2.0, 8.0 * z - 2.0, z - 1.0],
        0.0)


def _bump_hessian(z):
    return np.select(
        [np.abs(z) > 1.0, np.abs(z) < 0.25], [np.ones_like(z), np.full_like(z, 8.0)], 0.0)


def _bump_scalar_value(z):
    if z < -1.0:
        return 0.5 * (z + 1.0) ** 2
    if -0.25 < z < 0.25:
        return 4.0 * min(z * (z + 0.5), z * (z - 0.5)) + 0.25
    if z > 1.0:
        return 0.5 * (z - 1.0) ** 2
    return 0.0


def _bump_scalar_gradient(z):
    if z < -1.0:
        return z + 1.0
    if -0.25 < z < 0.0:
        return 8.0 * z + 2.0
    if 0.0 <= z < 0.25:
        return 8.0 * z - 2.0
    if z > 1.0:
        return z - 1.0
    return 0.0


def _bump_scalar_hessian(z):
    if abs(z) > 1.0:
        return 1.0
    return 8.0 if abs(z) < 0.25 else 0.0


def bump_ex27() -> EnergyDensity:
    """Flat plateaus on [-1,-1/4] and [1/4,1] around a concave bump at 0."""
    return _componentwise("bump_ex27", _bump_value, _bump_gradient, _bump_hessian,
                          q=2.0, mu=0.0, C=4.0, kinks=(-1.0, -0.25, 0.0, 0.25, 1.0),
                          scalar=(_bump_scalar_value, _bump_scalar_gradient,
                                  _bump_scalar_hessian))


def polynomial(coefficients, *, q: float, mu: float, C: float, m: int = 1,
               name: str = "polynomial") -> EnergyDensity:
    """Componentwise polynomial, coefficients in increasing degree."""
    p = np.polynomial.Polynomial(np.asarray(coefficients, dtype=float))
    dp, d2p = p.deriv(), p.deriv(2)
    return _componentwise(name, p, dp, d2p, q=q, mu=mu, C=C, m=m,
                          coefficients=[float(c) for c in p.coef],
                          scalar=(_horner(p.coef), _horner(dp.coef), _horner(d2p.coef)))


def _horner(coef):
    cs = [float(c) for c in coef[::-1]]

    def f(z):
        acc = 0.0
        for c in cs:
            acc = acc * z + c
        return acc
    return f


def quartic_doublewell(m: int = 1) -> EnergyDensity:
    """(z^2 - 1)^2 / 4, the smooth double well used for 1-D runs."""
    d = polynomial([0.25, 0.0, -0.5, 0.0, 0.25], q=4.0, mu=1.0, C=8.0, m=m,
                   name="quartic_doublewell")
    return d


def piecewise_polynomial(breakpoints, pieces, *, q: float, mu: float, C: float,
                         m: int = 1, name: str = "piecewise") -> EnergyDensity:
    """Componentwise density given by one polynomial per interval.

    ``pieces[j]`` holds increasing-degree coefficients on
    ``[breakpoints[j-1], breakpoints[j])``; the last piece extends to +inf.
    Gradients at breakpoints take the right-hand piece.
    """
    bps = np.asarray(breakpoints, dtype=float)
    if len(pieces) != len(bps) + 1:
        raise ConfigurationError("need len(breakpoints)+1 pieces")
    if np.any(np.diff(bps) <= 0):
        raise ConfigurationError("breakpoints must increase")
    polys = [np.polynomial.Polynomial(np.asarray(c, dtype=float)) for c in pieces]
    grads = [p.deriv() for p in polys]
    hess = [p.deriv(2) for p in polys]

    def pick(funcs):
        def f(z):
            j = np.searchsorted(bps, z, side="right")
            out = np.zeros_like(z)
            for i, fn in enumerate(funcs):
                sel = j == i
                if np.any(sel):
                    out[sel] = fn(z[sel])
            return out
        return f

    return _componentwise(name, pick(polys), pick(grads), pick(hess), q=q, mu=mu, C=C,
                          m=m, kinks=tuple(bps.tolist()),
                          breakpoints=bps.tolist(), pieces=[list(map(float, c)) for c in pieces])


# Two-component potential whose rate-independent path from (0,0) to (0,1)
# runs through (1/3,1/3) and (1/3,2/3).

def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _pl_phi(v):
    return -1.0 + 2.0 * _smoothstep(3.0 * (v - 1.0 / 3.0))


def _pl_dphi(v):
    x = np.clip(3.0 * (v - 1.0 / 3.0), 0.0, 1.0)
    return 2.0 * 3.0 * 6.0 * x * (1.0 - x)


def _pl_d2phi(v):
    x = 3.0 * (v - 1.0 / 3.0)
    inside = (x > 0.0) & (x < 1.0)
    return np.where(inside, 2.0 * 9.0 * (6.0 - 12.0 * x), 0.0)


def pathlength_ex25(confinement: float = 1.0e3) -> EnergyDensity:
    """Piecewise (u, v) potential, plus an optional stiff wall at u<0 and v>1.

    The wall terms vanish on the whole rate-independent path and only stop
    the motion once (0, 1) is reached; ``confinement=0`` gives the bare
    (unbounded below) potential.
    """
    kc = float(confinement)
    third, two3 = 1.0 / 3.0, 2.0 / 3.0

    def value(z):
        z = np.asarray(z, dtype=float)
        u, v = z[..., 0], z[..., 1]
        w = np.select([v <= third, v < two3],
                      [-u - third - v, _pl_phi(v) * (u - third) - v - two3],
                      u - v - 1.0)
        return w + 0.5 * kc * (np.maximum(-u, 0.0) ** 2 + np.maximum(v - 1.0, 0.0) ** 2)

    def gradient(z):
        z = np.asarray(z, dtype=float)
        u, v = z[..., 0], z[..., 1]
        low, mid = v <= third, (v > third) & (v < two3)
        gu = np.select([low, mid], [-1.0, _pl_phi(v)], 1.0) - kc * np.maximum(-u, 0.0)
        gv = np.select([low, mid], [-1.0, _pl_dphi(v) * (u - third) - 1.0], -1.0)
        gv = gv + kc * np.maximum(v - 1.0, 0.0)
        return np.stack([gu, gv], axis=-1)

    def hessian(z):
        z = np.asarray(z, dtype=float)
        u, v = z[..., 0], z[..., 1]
        mid = (v > third) & (v < two3)
        out = np.zeros(u.shape + (2, 2))
        out[..., 0, 1] = out[..., 1, 0] = np.where(mid, _pl_dphi(v), 0.0)
        out[..., 0, 0] = kc * (u < 0.0)
        out[..., 1, 1] = np.where(mid, _pl_d2phi(v) * (u - third), 0.0) + kc * (v > 1.0)
        return out

    kinks = ((0.0,), (third, two3, 1.0)) if kc > 0 else ((), (third, two3))
    return EnergyDensity("pathlength_ex25", value, gradient, hessian, q=2.0, mu=160.0,
                         C=4.0, m=2, kinks=kinks, params={"confinement": kc})


def _guide_profile(xi_knots=None, amplitude: float = 2.0):
    """Guide curve xi with xi(0) = xi(1) = 0 and its first two derivatives."""
    if xi_knots is None:
        a = float(amplitude)
        return (lambda v: a * np.sin(np.pi * v) / np.pi,
                lambda v: a * np.cos(np.pi * v),
                lambda v: -a * np.pi * np.sin(np.pi * v))
    knots = np.asarray(xi_knots, dtype=float)
    spline = CubicSpline(knots[:, 0], knots[:, 1], bc_type="natural", extrapolate=True)
    return spline, spline.derivative(), spline.derivative(2)


def guide_ex26(K: float = 100.0, xi_knots=None, amplitude: float = 2.0,
               mu: float | None = None, tube: float = 0.05) -> EnergyDensity:
    """K^2 (u - xi(v))^2 + K (v - 1)^2 pulling (u, v) along the curve u = xi(v).

    The declared semiconvexity constant is the sharp bound on the tube
    |u - xi(v)| <= tube around the guide, which is where the evolution lives.
    """
    K = float(K)
    xi, dxi, d2xi = _guide_profile(xi_knots, amplitude)

    def value(z):
        z = np.asarray(z, dtype=float)
        u, v = z[..., 0], z[..., 1]
        return K**2 * (u - xi(v)) ** 2 + K * (v - 1.0) ** 2

    def gradient(z):
        z = np.asarray(z, dtype=float)
        u, v = z[..., 0], z[..., 1]
        r = u - xi(v)
        return np.stack([2 * K**2 * r, -2 * K**2 * r * dxi(v) + 2 * K * (v - 1.0)], axis=-1)

    def hessian(z):
        z = np.asarray(z, dtype=float)
        u, v = z[..., 0], z[..., 1]
        r, d1 = u - xi(v), dxi(v)
        out = np.empty(u.shape + (2, 2))
        out[..., 0, 0] = 2 * K**2
        out[..., 0, 1] = out[..., 1, 0] = -2 * K**2 * d1
        out[..., 1, 1] = 2 * K**2 * d1**2 - 2 * K**2 * r * d2xi(v) + 2 * K
        return out

    if mu is None:
        vs = np.linspace(0.0, 1.0, 2001)
        mu = 2 * K**2 * tube * float(np.max(np.abs(d2xi(vs))))
    return EnergyDensity("guide_ex26", value, gradient, hessian, q=2.0, mu=float(mu),
                         C=4.0 * K**2, m=2,
                         params={"K": K, "xi_knots": None if xi_knots is None
                                 else np.asarray(xi_knots).tolist(),
                                 "amplitude": amplitude, "xi": xi, "dxi": dxi, "tube": tube})


DENSITIES: dict[str, Callable[..., EnergyDensity]] = {
    "quadratic": quadratic,
    "doublewell_ex24": doublewell_ex24,
    "pathlength_ex25": pathlength_ex25,
    "guide_ex26": guide_ex26,
    "bump_ex27": bump_ex27,
    "quartic_doublewell": quartic_doublewell,
    "polynomial": polynomial,
    "piecewise": piecewise_polynomial,
}


def density_by_name(name: str, **kwargs) -> EnergyDensity:
    try:
        factory = DENSITIES[name]
    except KeyError:
        raise ConfigurationError(f"unknown density {name!r}; known: {sorted(DENSITIES)}") from None
    return factory(**kwargs)


@dataclass(frozen=True, eq=False)
class Loading:
    """Time-dependent force f(t) given on the grid nodes."""
    value: Callable[[float], np.ndarray]
    time_derivative: Callable[[float], np.ndarray]
    sup_bound: float
    description: str = "custom"
    constant: bool = False
    scalar_coeffs: tuple | None = None  # (offset, slope) for single-value affine loads

    @classmethod
    def affine(cls, grid: SpatialGrid, offset=0.0, slope=0.0) -> "Loading":
        """f(t, x) = offset(x) + slope(x) * t."""
        a, b = grid.field(offset), grid.field(slope)
        a.setflags(write=False)
        b.setflags(write=False)
        const = not np.any(b)
        desc = f"affine(offset={_describe(a)}, slope={_describe(b)})"
        coeffs = (float(a.flat[0]), float(b.flat[0])) if a.size == 1 else None
        return cls(lambda t: a + b * t, lambda t: b, float(np.max(np.abs(a)) + np.max(np.abs(b))),
                   desc, const, coeffs)

    @classmethod
    def zero(cls, grid: SpatialGrid) -> "Loading":
        return cls.affine(grid)

    @classmethod
    def constant_force(cls, grid: SpatialGrid, value) -> "Loading":
        return cls.affine(grid, offset=value)

    def frozen(self, t: float) -> "Loading":
        """Constant-in-time loading equal to f(t)."""
        f = np.array(self.value(t), dtype=float)
        f.setflags(write=False)
        zero = np.zeros_like(f)
        zero.setflags(write=False)
        coeffs = (float(f.flat[0]), 0.0) if f.size == 1 else None
        return Loading(lambda s: f, lambda s: zero, float(np.max(np.abs(f))),
                       f"frozen({self.description}, t={t!r})", True, coeffs)

    def bound_on(self, T: float) -> float:
        """max(|f|, |fdot|) sampled on [0, T]."""
        ts = np.linspace(0.0, T, 201)
        return max(max(float(np.max(np.abs(self.value(t)))),
                       float(np.max(np.abs(self.time_derivative(t))))) for t in ts)


def _describe(a: np.ndarray) -> str:
    if np.all(a == a.flat[0]):
        return repr(float(a.flat[0]))
    return "field"


@dataclass(frozen=True, eq=False)
class TotalEnergy:
    density: EnergyDensity
    loading: Loading
    grid: SpatialGrid

    def __post_init__(self):
        if self.density.m != self.grid.m:
            raise ConfigurationError(
                f"density has {self.density.m} components, grid has {self.grid.m}")

    def internal(self, u) -> float:
        """W(u): gradient term plus W0, trapezoid rule in 1-D."""
        g = self.grid
        u = g.check(u)
        w = float(np.sum(self.density.value(u)))
        if g.dim == 0:
            return w
        w += float(np.sum(self.density.value(np.zeros((1, g.m)))))
        grads = forward_differences(g, u)
        return g.h * (w + 0.5 * float(np.sum(grads**2)))

    def energy(self, t: float, u) -> float:
        return self.internal(u) - self.grid.inner(self.loading.value(t), u)

    def gradient(self, t: float, u) -> np.ndarray:
        """Nodewise D_u E = -Lap_h u + DW0(u) - f(t)."""
        return self.internal_gradient(u) - self.loading.value(t)

    def internal_gradient(self, u) -> np.ndarray:
        u = self.grid.check(u)
        g = self.density.gradient(u)
        if self.grid.dim == 1:
            g = g - laplacian(self.grid, u)
        return g

    def load_work(self, t0: float, t1: float, u0, u1) -> float:
        """Midpoint approximation of the integral of <fdot, u> over [t0, t1]."""
        df = self.loading.value(t1) - self.loading.value(t0)
        return self.grid.inner(df, 0.5 * (np.asarray(u0) + np.asarray(u1)))


def eval_energy(total: TotalEnergy, t: float, u) -> float:
    return total.energy(t, u)


def eval_energy_gradient(total: TotalEnergy, t: float, u) -> np.ndarray:
    return total.gradient(t, u)


@dataclass
class AssumptionReport:
    """Worst violations of the growth, gradient and semiconvexity bounds."""
    violations: dict
    n_samples: int
    excluded_kink_radius: float

    def __bool__(self):
        return bool(self.violations)

    def __len__(self):
        return len(self.violations)


def validate_assumptions(density: EnergyDensity, sample_box=(-3.0, 3.0), n_samples: int = 1024,
                         *, seed: int = 0, kink_radius: float = 1e-8, tol: float = 1e-9,
                         check_sign: bool = False, sampler=None) -> AssumptionReport:
    """Check the declared constants (q, mu, C) on quasi-random samples.

    Checks are piecewise: points within ``kink_radius`` of a declared kink
    are dropped and pairs whose segment crosses a kink are skipped. The
    returned report is empty exactly when every sampled inequality holds.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    m = density.m
    lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (m,)) for b in sample_box)
    if sampler is None:
        eng = qmc.Sobol(d=2 * m, scramble=True, seed=seed)
        raw = eng.random(int(2 ** np.ceil(np.log2(max(n_samples, 2)))))[:n_samples]
        v = lo + (hi - lo) * raw[:, :m]
        w = lo + (hi - lo) * raw[:, m:]
    else:
        v, w = sampler(n_samples)

    def away(z):
        ok = np.ones(z.shape[0], dtype=bool)
        for c in range(m):
            for k in density.kinks_of(c):
                ok &= np.abs(z[:, c] - k) > kink_radius
        return ok

    def same_piece(a, b):
        ok = np.ones(a.shape[0], dtype=bool)
        for c in range(m):
            for k in density.kinks_of(c):
                ok &= (a[:, c] - k) * (b[:, c] - k) > 0
        return ok

    keep = away(v)
    v = v[keep]
    q, mu, C = density.q, density.mu, density.C
    val = density.value(v)
    grad = density.gradient(v)
    nv = np.linalg.norm(v, axis=-1)
    worst = {}

    def record(name, excess):
        if excess.size and float(np.max(excess)) > tol:
            worst[name] = float(np.max(excess))

    if check_sign:
        record("nonnegative", -val)
    record("growth_lower", nv**q / C - C - val)
    record("growth_upper", val - C * (1 + nv**q))
    record("gradient_bound", np.linalg.norm(grad, axis=-1) - C * (1 + nv ** (q - 1)))
    hess = density.hessian(v)
    eig = np.linalg.eigvalsh(0.5 * (hess + np.swapaxes(hess, -1, -2)))
    record("hessian_semiconvexity", -mu - eig[:, 0])
    w = w[keep]
    pair = same_piece(v, w) & away(w)
    dv = v[pair] - w[pair]
    mono = np.sum((grad[pair] - density.gradient(w[pair])) * dv, axis=-1)
    record("monotone_semiconvexity", -mu * np.sum(dv**2, axis=-1) - mono)
    return AssumptionReport(worst, int(v.shape[0]), kink_radius)
