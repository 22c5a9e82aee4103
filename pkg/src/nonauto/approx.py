"""Uniform subdivisions, interval-averaged forms and their step / linear approximants."""
from dataclasses import dataclass
from functools import cached_property
from enum import Enum
from typing import Optional

import numpy as np

from .forms import FormError, FormFamily
from .triple import norm


class Kind(str, Enum):
    STEP = "step"
    LINEAR = "linear"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise FormError(f"unknown approximant kind {value!r}") from None


@dataclass(frozen=True)
class Subdivision:
    horizon: float
    n_intervals: int

    def __post_init__(self):
        if int(self.n_intervals) != self.n_intervals or self.n_intervals < 1:
            raise FormError("n_intervals must be a positive integer")
        if not self.horizon > 0:
            raise FormError("horizon must be positive")

    @property
    def mesh(self):
        return self.horizon / self.n_intervals

    @property
    def nodes(self):
        # same construction as the solver's knots, so grids agree bitwise
        return np.linspace(0.0, self.horizon, self.n_intervals + 1)

    def interval_index(self, t):
        """k with lambda_k <= t < lambda_{k+1}; the last interval is closed."""
        k = np.searchsorted(self.nodes, t, side="right") - 1
        return np.clip(k, 0, self.n_intervals - 1)


def gauss_pieces(edges, n_nodes):
    """Gauss-Legendre nodes and weights for each [edges[i], edges[i+1]]."""
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    a, b = np.asarray(edges[:-1]), np.asarray(edges[1:])
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b))[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


def _split_points(family, a, b):
    cuts = [p for p in (*family.discontinuities, *family.kinks) if a < p < b]
    return np.array([a, *sorted(set(cuts)), b])


def _interval_mean(fun, family, a, b, n_nodes):
    edges = _split_points(family, a, b)
    if family.piecewise_constant:
        mids = 0.5 * (edges[:-1] + edges[1:])
        fracs = np.diff(edges) / (b - a)
        if len(mids) == 1:
            return fun(mids[0])
        return sum(f * fun(m) for f, m in zip(fracs, mids))
    nodes, weights = gauss_pieces(edges, n_nodes)
    return sum(w * fun(x) for w, x in zip(weights, nodes)) / (b - a)


@dataclass(frozen=True, eq=False)
class AveragedFamily:
    subdivision: Subdivision
    averages: tuple
    scalar_averages: Optional[np.ndarray]
    kind: Kind
    source: FormFamily

    @property
    def n(self):
        return self.subdivision.n_intervals

    @cached_property
    def flat(self):
        """flat[k]: A_k and A_{k+1} coincide, so interval k needs no interpolation."""
        a = self.averages
        return tuple(bool(np.array_equal(x, y)) for x, y in zip(a[:-1], a[1:]))

    def matrix(self, t):
        return eval_step(self, t) if self.kind is Kind.STEP else eval_linear(self, t)

    def as_family(self, kind=None):
        """The approximant as a FormFamily with the source's constants."""
        kind = self.kind if kind is None else Kind.parse(kind)
        src = self.source
        nodes = tuple(float(x) for x in self.subdivision.nodes)
        g = None
        if self.scalar_averages is not None:
            if kind is Kind.STEP:
                g = lambda t: float(self.scalar_averages[self.subdivision.interval_index(t)])
            else:
                g = lambda t: eval_scalar_linear(self, t)
        if kind is Kind.STEP:
            ev = lambda t: eval_step(self, t)
            disc, kinks = nodes[1:-1], ()
        else:
            ev = lambda t: eval_linear(self, t)
            disc, kinks = (), nodes[1:-1]
        return FormFamily(
            evaluate=ev, horizon=src.horizon, alpha=src.alpha, bound_M=src.bound_M,
            omega=src.omega, symmetric=src.symmetric, bv_modulus=g,
            discontinuities=disc, kinks=kinks, breakpoints=nodes,
            piecewise_constant=kind is Kind.STEP, name=f"{src.name}[{kind.value},{self.n}]")


def average(family, sub, nodes_per_interval=32, kind=Kind.LINEAR):
    """Interval means A_k = (1/|I_k|) int_{I_k} A(r) dr, k = 0..n_intervals-1.

    Each interval is split at the family's jumps and kinks and integrated
    by Gauss-Legendre with ``nodes_per_interval`` nodes per piece, so the
    means are exact for piecewise-polynomial coefficients of moderate
    degree; piecewise-constant families use the exact piece values.
    """
    if abs(family.horizon - sub.horizon) > 1e-12 * sub.horizon:
        raise FormError("family and subdivision horizons differ")
    if nodes_per_interval < 1:
        raise FormError("nodes_per_interval must be >= 1")
    nodes = sub.nodes
    avgs = []
    for a, b in zip(nodes[:-1], nodes[1:]):
        A = np.array(_interval_mean(family.matrix, family, a, b, nodes_per_interval))
        A.setflags(write=False)
        avgs.append(A)
    g_avg = None
    if family.bv_modulus is not None:
        g_avg = np.array([_interval_mean(family.bv_modulus, family, a, b, nodes_per_interval)
                          for a, b in zip(nodes[:-1], nodes[1:])], dtype=float)
    return AveragedFamily(sub, tuple(avgs), g_avg, Kind.parse(kind), family)


def _check_time(av, t):
    T = av.subdivision.horizon
    if not -1e-14 * T <= t <= T * (1 + 1e-14):
        raise FormError(f"t={t} outside [0, {T}]")


def eval_step(av, t):
    """A_k on [lambda_k, lambda_{k+1}); the last average at t = T."""
    _check_time(av, t)
    return av.averages[int(av.subdivision.interval_index(t))]


def _linear_weights(av, t):
    # interval k interpolates A_k -> A_{k+1}; the last interval has no
    # right neighbour and stays at A_{n-1}, which keeps t -> A^L(t) continuous
    _check_time(av, t)
    sub = av.subdivision
    k = int(sub.interval_index(t))
    if k == sub.n_intervals - 1:
        return k, None, 0.0
    w = (t - sub.nodes[k]) / sub.mesh
    return k, k + 1, w


def eval_linear(av, t):
    k, k1, w = _linear_weights(av, t)
    if k1 is None:
        return av.averages[k]
    if w == 0.0 or av.flat[k]:
        return av.averages[k]
    return (1.0 - w) * av.averages[k] + w * av.averages[k1]


def linear_rate(av, t):
    """Time derivative of the linear approximant (a.e.), constant per interval."""
    k, k1, _ = _linear_weights(av, t)
    if k1 is None:
        return np.zeros_like(av.averages[k])
    return (av.averages[k1] - av.averages[k]) / av.subdivision.mesh


def _require_scalar(av):
    if av.scalar_averages is None:
        raise FormError("averaged family carries no BV modulus averages")
    return av.scalar_averages


def eval_scalar_linear(av, t):
    g = _require_scalar(av)
    k, k1, w = _linear_weights(av, t)
    if k1 is None:
        return float(g[k])
    return float((1.0 - w) * g[k] + w * g[k1])


def eval_scalar_rate(av, t):
    g = _require_scalar(av)
    k, k1, _ = _linear_weights(av, t)
    if k1 is None:
        return 0.0
    return float((g[k1] - g[k]) / av.subdivision.mesh)


def integrated_scalar_rate(av):
    """int_0^T of the linear modulus' derivative (telescopes to g_{n-1} - g_0)."""
    g = _require_scalar(av)
    return float(np.sum(np.diff(g)))


def _evaluator(av, kind):
    return eval_step if kind is Kind.STEP else eval_linear


def probe_pointwise_convergence(family, x, t, n_list, kind, triple, nodes_per_interval=32):
    """V'-norm errors ||A_Lambda(t) x - A(t) x|| for each interval count."""
    kind = Kind.parse(kind)
    exact = family.matrix(t) @ x
    out = []
    for n in n_list:
        av = average(family, Subdivision(family.horizon, n), nodes_per_interval, kind)
        out.append(float(norm(triple, _evaluator(av, kind)(av, t) @ x - exact, "Vdual")))
    return out


def probe_l2_convergence(family, u, n_list, kind, triple, time_quadrature_nodes=8,
                         nodes_per_interval=32, p=2):
    """L^p(0,T;V') errors of t -> A_Lambda(t) u(t) - A(t) u(t)."""
    kind = Kind.parse(kind)
    out = []
    for n in n_list:
        sub = Subdivision(family.horizon, n)
        av = average(family, sub, nodes_per_interval, kind)
        ev = _evaluator(av, kind)
        edges = np.unique(np.r_[sub.nodes, family.discontinuities, family.kinks])
        ts, ws = gauss_pieces(edges, time_quadrature_nodes)
        total = 0.0
        for t, w in zip(ts, ws):
            ut = u(t)
            total += w * float(norm(triple, ev(av, t) @ ut - family.matrix(t) @ ut, "Vdual")) ** p
        out.append(total ** (1.0 / p))
    return out
