"""Time-dependent sesquilinear form families and the scenario registry.

A family is a map ``t -> A(t)`` to dim x dim matrices with
``a(t; u, v) = v^H A(t) u``, plus its declared constants: continuity
bound ``M``, coercivity constant ``alpha`` with shift ``omega``, and an
optional non-decreasing scalar modulus ``g`` with ``g(0) = 0`` that
dominates the increments ``|a(t;u,v) - a(s;u,v)|`` in units of
``||u||_V ||v||_V``.
"""
import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import Polynomial

from .triple import (GelfandTriple, TripleError, embedding_constant, form_spectrum, norm,
                     operator_norm)


class FormError(ValueError):
    pass


class ScenarioError(FormError):
    pass


# ---------------------------------------------------------------------------
# scalar coefficients c(t)


class PolynomialCoefficient:
    """c(t) = sum_i coeffs[i] t^i on [0, T]."""

    def __init__(self, coeffs, horizon):
        self.poly = Polynomial(np.asarray(coeffs, dtype=float))
        self.primitive = self.poly.integ()
        self.horizon = float(horizon)
        # negligible leading terms only move turning points far outside [0, T]
        d = self.poly.deriv()
        d = d.trim(np.finfo(float).eps * max(np.abs(d.coef).max(), np.finfo(float).tiny))
        crit = d.roots() if d.degree() > 0 else np.array([])
        crit = np.real(crit[np.abs(np.imag(crit)) < 1e-14])
        self.kinks = tuple(sorted(float(r) for r in crit if 0.0 < r < self.horizon))
        self.jumps = ()

    def value(self, t):
        return self.poly(t)

    def antiderivative(self, t):
        return self.primitive(t)

    def variation(self, t):
        """Total variation of c on [0, t]."""
        knots = [0.0, *[k for k in self.kinks if k < t], float(t)]
        vals = self.poly(np.array(knots))
        return float(np.abs(np.diff(vals)).sum())

    def extremes(self):
        pts = np.array([0.0, self.horizon, *self.kinks])
        vals = self.poly(pts)
        return float(vals.min()), float(vals.max())


class PiecewiseConstantCoefficient:
    """Right-continuous step function: values[i] on [times[i-1], times[i])."""

    def __init__(self, times, values, horizon):
        times = np.asarray(times, dtype=float).ravel()
        values = np.asarray(values, dtype=float).ravel()
        self.horizon = float(horizon)
        if len(values) != len(times) + 1:
            raise ScenarioError("need exactly one more value than jump time")
        if np.any(np.diff(times) <= 0) or (len(times) and (times[0] <= 0 or times[-1] >= horizon)):
            raise ScenarioError("jump times must be strictly increasing inside (0, T)")
        self.times = times
        self.values = values
        self.jumps = tuple(float(t) for t in times)
        self.kinks = ()
        self._cum = np.concatenate([[0.0], np.cumsum(values[:-1] * np.diff(np.r_[0.0, times]))])
        self._tv = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(values)))])

    def _index(self, t):
        return np.searchsorted(self.times, t, side="right")

    def value(self, t):
        return self.values[self._index(t)]

    def antiderivative(self, t):
        i = self._index(t)
        left = np.r_[0.0, self.times][i]
        return self._cum[i] + self.values[i] * (np.asarray(t) - left)

    def variation(self, t):
        return float(self._tv[self._index(t)])

    def extremes(self):
        return float(self.values.min()), float(self.values.max())


@dataclass(frozen=True, eq=False)
class Separable:
    """A(t) = c(t) * base + mass_shift * G_H."""
    coefficient: object
    base: np.ndarray
    mass_shift: float = 0.0


# ---------------------------------------------------------------------------
# families


@dataclass(frozen=True, eq=False)
class FormFamily:
    evaluate: Callable[[float], np.ndarray]
    horizon: float
    alpha: float
    bound_M: float
    omega: float = 0.0
    symmetric: bool = True
    bv_modulus: Optional[Callable[[float], float]] = None
    # points where t -> A(t) jumps / is merely continuous; quadrature splits there
    discontinuities: tuple = ()
    kinks: tuple = ()
    # times every solver grid must contain
    breakpoints: tuple = ()
    # constant between consecutive breakpoints
    piecewise_constant: bool = False
    separable: Optional[Separable] = None
    name: str = "custom"

    def __post_init__(self):
        if not self.horizon > 0:
            raise FormError("horizon must be positive")
        if not self.alpha > 0 or not self.bound_M > 0:
            raise FormError("alpha and M must be positive")

    def matrix(self, t):
        if not -1e-14 * self.horizon <= t <= self.horizon * (1 + 1e-14):
            raise FormError(f"t={t} outside [0, {self.horizon}]")
        return self.evaluate(min(max(t, 0.0), self.horizon))

    def form(self, t, u, v):
        return np.vdot(v, self.matrix(t) @ u)


@dataclass(frozen=True, eq=False)
class EvolutionProblem:
    """u' + A(t) u = f(t), u(0) = u0, posed in the discrete triple."""
    source: FormFamily
    rhs_f: Optional[Callable[[float], np.ndarray]]
    initial_u0: np.ndarray
    triple: GelfandTriple
    tag: str = ""

    def __post_init__(self):
        u0 = np.asarray(self.initial_u0)
        if u0.shape != (self.triple.dim,):
            raise FormError("initial_u0 does not match the triple dimension")
        if not np.isfinite(norm(self.triple, u0, "V")):
            raise FormError("initial_u0 must have finite V-norm")


# ---------------------------------------------------------------------------
# axiom checks

SYMMETRY_TOL = 1e-12
BV_TOL = 1e-10


@dataclass
class AxiomReport:
    worst_continuity_ratio: float
    worst_coercivity_margin: float
    worst_symmetry_defect: float
    worst_bv_defect: Optional[float]
    bound_M: float
    symmetric: bool

    def failures(self):
        out = []
        if self.worst_continuity_ratio > self.bound_M * (1 + 1e-12):
            out.append("continuity")
        if self.worst_coercivity_margin < -1e-12 * max(1.0, self.bound_M):
            out.append("coercivity")
        if self.symmetric and self.worst_symmetry_defect > SYMMETRY_TOL:
            out.append("symmetry")
        if self.worst_bv_defect is not None and self.worst_bv_defect > BV_TOL:
            out.append("bounded_variation")
        return out

    @property
    def passed(self):
        return not self.failures()


def _random_vectors(rng, n, dim, complex_=False):
    x = rng.standard_normal((n, dim))
    if complex_:
        x = x + 1j * rng.standard_normal((n, dim))
    return x


def verify_form_axioms(family, triple, n_time_samples=64, n_vector_samples=32, seed=0,
                       check_bv=None):
    """Extremal violations of continuity, coercivity, symmetry and BV.

    The vector suprema are taken exactly through generalized eigenproblems
    at each sampled time; seeded random vector pairs add a direct
    evaluation of the sesquilinear form on top.
    """
    if check_bv is None:
        check_bv = family.bv_modulus is not None
    if check_bv and family.bv_modulus is None:
        raise FormError("BV check requested but the family has no bv_modulus")
    T = family.horizon
    rng = np.random.default_rng(seed)
    ts = np.sort(np.r_[0.0, rng.uniform(0.0, T, n_time_samples), T])
    mats = [family.matrix(t) for t in ts]
    if mats[0].shape != (triple.dim, triple.dim):
        raise FormError("family and triple dimensions disagree")
    is_complex = np.iscomplexobj(mats[0])
    U = _random_vectors(rng, n_vector_samples, triple.dim, is_complex)
    W = _random_vectors(rng, n_vector_samples, triple.dim, is_complex)
    nu, nw = norm(triple, U, "V"), norm(triple, W, "V")

    def sampled_ratio(A):
        vals = np.abs(np.einsum("ki,ij,kj->k", W.conj(), A, U))
        return float((vals / (nu * nw)).max())

    cont, margin, sym = 0.0, np.inf, 0.0
    for A in mats:
        opn = operator_norm(triple, A)
        cont = max(cont, opn, sampled_ratio(A))
        shifted = A + family.omega * triple.gram_H
        margin = min(margin, float(form_spectrum(triple, shifted).min()) - family.alpha)
        scale = max(opn, np.finfo(float).tiny)
        sym = max(sym, operator_norm(triple, A - A.conj().T) / scale)

    bv = None
    if check_bv:
        g = family.bv_modulus
        gs = np.array([g(t) for t in ts])
        pairs = [(i, i + 1) for i in range(len(ts) - 1)]
        idx = rng.integers(0, len(ts), size=(n_time_samples, 2))
        pairs += [(min(i, j), max(i, j)) for i, j in idx]
        bv = -np.inf
        for i, j in pairs:
            dA = mats[j] - mats[i]
            inc = max(operator_norm(triple, dA), sampled_ratio(dA))
            bv = max(bv, (inc - (gs[j] - gs[i])) / family.bound_M)
        bv = float(bv)
    return AxiomReport(cont, margin, sym, bv, family.bound_M, family.symmetric)


# ---------------------------------------------------------------------------
# omega shift


def shift_omega(family, triple):
    """Trade the coercivity shift omega for a mass term.

    Returns ``(shifted, reconstruct)``: ``shifted`` has matrix
    ``A(t) + omega G_H`` and omega = 0; if ``v`` solves the shifted problem
    with right-hand side ``shift_rhs(f, omega)`` and the same u0, then
    ``reconstruct(v)`` solves the original one. alpha and g carry over;
    M grows by at most |omega| c_H^2, the V -> V' norm of omega G_H.
    """
    om = float(family.omega)
    if om == 0.0:
        return family, lambda traj: traj
    G = triple.gram_H
    sep = family.separable
    if sep is not None:
        sep = dataclasses.replace(sep, mass_shift=sep.mass_shift + om)
    shifted = dataclasses.replace(
        family, evaluate=lambda t, _ev=family.evaluate: _ev(t) + om * G,
        omega=0.0, bound_M=family.bound_M + abs(om) * embedding_constant(triple) ** 2,
        separable=sep, name=f"{family.name}+shift")

    def reconstruct(traj):
        factor = np.exp(om * traj.grid)
        return dataclasses.replace(traj, states=traj.states * factor[:, None],
                                   problem_tag=traj.problem_tag + "|unshifted")

    return shifted, reconstruct


def shift_rhs(f, omega):
    if f is None or omega == 0.0:
        return f
    return lambda t: np.exp(-omega * t) * f(t)


# ---------------------------------------------------------------------------
# scenarios

_COMMON = {"T": 1.0, "base": "stiffness", "omega": 0.0}


def _base_matrix(kind, triple):
    if kind == "stiffness":
        return np.array(triple.gram_V)
    if kind == "stiffness_plus_mass":
        return np.array(triple.gram_V + triple.gram_H)
    raise ScenarioError(f"unknown base form {kind!r}")


def _is_piecewise_constant(coef):
    if isinstance(coef, PiecewiseConstantCoefficient):
        return True
    return coef.poly.degree() == 0


def _separable_family(name, coef, triple, base_kind, omega):
    B = _base_matrix(base_kind, triple)
    beta = form_spectrum(triple, B)
    cmin, cmax = coef.extremes()
    if cmin <= 0:
        raise ScenarioError(f"{name}: coefficient must stay positive (min {cmin:g})")
    G = triple.gram_H
    alpha = cmin * float(beta.min())
    if omega == 0.0:
        M = cmax * float(beta.max())
    else:
        # operator norm of an affine family is convex in c: check the ends
        M = max(operator_norm(triple, c * B - omega * G) for c in (cmin, cmax))
    b_norm = float(np.abs(beta).max())
    jumps = tuple(coef.jumps)

    def evaluate(t):
        A = coef.value(t) * B
        return A - omega * G if omega else A

    return FormFamily(
        evaluate=evaluate, horizon=coef.horizon, alpha=alpha, bound_M=M, omega=omega,
        symmetric=True, bv_modulus=lambda t: b_norm * coef.variation(t),
        discontinuities=jumps, kinks=tuple(coef.kinks), breakpoints=jumps,
        piecewise_constant=_is_piecewise_constant(coef),
        separable=Separable(coef, B, -omega), name=name)


def _constant(p, T):
    return PolynomialCoefficient([p["c"]], T)


def _linear(p, T):
    return PolynomialCoefficient([p["a"], p["b"]], T)


def _jump(p, T):
    return PiecewiseConstantCoefficient(p["times"], p["values"], T)


def _staircase(p, T):
    n = int(p["n_jumps"])
    if n < 1:
        raise ScenarioError("staircase_bv needs n_jumps >= 1")
    times = T * (np.arange(n) + p["offset"]) / n
    values = p["c0"] + p["height"] * np.arange(n + 1) / n
    return PiecewiseConstantCoefficient(times, values, T)


def _spectral(p, T):
    return PolynomialCoefficient(p["coeffs"], T)


SCENARIOS = {
    "constant": (_constant, {"c": 1.0}, "c(t) = c"),
    "linear_coeff": (_linear, {"a": 1.0, "b": 1.0}, "c(t) = a + b t"),
    "jump_coeff": (_jump, {"times": [0.5], "values": [1.0, 3.0]},
                   "piecewise-constant c with jumps at `times`"),
    "staircase_bv": (_staircase, {"c0": 1.0, "height": 1.0, "n_jumps": 40, "offset": 1.0 / 3.0},
                     "n_jumps equal upward steps, off the dyadic grid"),
    "separable_spectral": (_spectral, {"coeffs": [1.0, 1.0]},
                           "polynomial c(t) = sum coeffs[i] t^i"),
}


def scenario_defaults(name):
    if name not in SCENARIOS:
        raise ScenarioError(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}")
    return {**_COMMON, **SCENARIOS[name][1]}


def scenario(name, params=None, triple=None):
    """Build a registered family c(t) * base (optionally minus omega G_H)."""
    defaults = scenario_defaults(name)
    params = dict(params or {})
    unknown = set(params) - set(defaults)
    if unknown:
        raise ScenarioError(f"{name}: unknown parameters {sorted(unknown)}")
    if triple is None:
        raise ScenarioError("scenario needs a triple")
    p = {**defaults, **params}
    T = float(p["T"])
    if not T > 0:
        raise ScenarioError("T must be positive")
    coef = SCENARIOS[name][0](p, T)
    return _separable_family(name, coef, triple, p["base"], float(p["omega"]))


# ---------------------------------------------------------------------------
# data presets


def preset_vector(spec, triple, seed=0):
    """Named coefficient vectors: zero, constant, mode_<k>, random_seeded."""
    if spec == "zero":
        return np.zeros(triple.dim)
    if spec == "constant":
        return np.ones(triple.dim)
    if spec == "random_seeded":
        return np.random.default_rng(seed).standard_normal(triple.dim)
    if spec.startswith("mode_"):
        try:
            k = int(spec[5:])
        except ValueError:
            raise ScenarioError(f"bad mode preset {spec!r}") from None
        try:
            return triple.mode(k)
        except TripleError as exc:
            raise ScenarioError(str(exc)) from None
    raise ScenarioError(f"unknown vector preset {spec!r}")


def preset_rhs(spec, triple, seed=0):
    """Time-independent right-hand side from a vector preset (None for zero)."""
    if spec == "zero":
        return None
    vec = preset_vector(spec, triple, seed + 1)
    vec.setflags(write=False)
    return lambda t: vec
