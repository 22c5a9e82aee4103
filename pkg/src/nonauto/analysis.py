"""Maximal-regularity norms, energy identities, a-priori bounds and convergence studies."""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from .approx import Kind, Subdivision, gauss_pieces, integrated_scalar_rate
from .forms import EvolutionProblem, FormError
from .solver import Trajectory, oracle_for, solve_approximate, solve_theta
from .triple import embedding_constant, norm


@dataclass(frozen=True)
class MrNorms:
    l2_V: float
    l2_H: float
    h1_H: float
    l2_Vdual_deriv: float
    sup_H: float
    sup_V: float
    l2_H_deriv: float


def _deriv_functionals(triple, traj):
    # u' is an H-valued coefficient vector; as an element of V' it acts through G_H
    return traj.derivative @ triple.gram_H.T


def mr_norms(traj, triple):
    if traj.states.shape[1] != triple.dim:
        raise FormError("trajectory and triple dimensions disagree")
    t, dt = traj.grid, traj.steps
    nV = norm(triple, traj.states, "V")
    nH = norm(triple, traj.states, "H")
    d = traj.derivative
    dH = norm(triple, d, "H")
    dVd = norm(triple, _deriv_functionals(triple, traj), "Vdual")
    l2H = math.sqrt(trapezoid(nH ** 2, t))
    l2H_deriv = math.sqrt(float(np.sum(dt * dH ** 2)))
    return MrNorms(
        l2_V=math.sqrt(trapezoid(nV ** 2, t)),
        l2_H=l2H,
        h1_H=math.hypot(l2H, l2H_deriv),
        l2_Vdual_deriv=math.sqrt(float(np.sum(dt * dVd ** 2))),
        sup_H=float(nH.max()),
        sup_V=float(nV.max()),
        l2_H_deriv=l2H_deriv,
    )


def union_grid(a, b, rel_tol=1e-12):
    g = np.sort(np.r_[a, b])
    tol = rel_tol * max(abs(g[-1]), 1.0)
    keep = np.r_[True, np.diff(g) > tol]
    return g[keep]


def resample(traj, grid):
    """Piecewise-linear interpolation of the states onto ``grid``."""
    idx = np.clip(np.searchsorted(traj.grid, grid, side="right") - 1, 0, len(traj.grid) - 2)
    t0, t1 = traj.grid[idx], traj.grid[idx + 1]
    w = ((grid - t0) / (t1 - t0))[:, None]
    states = (1 - w) * traj.states[idx] + w * traj.states[idx + 1]
    return Trajectory(np.asarray(grid), states, traj.problem_tag, dict(traj.meta))


def difference(a, b):
    """a - b on the union of both grids."""
    g = union_grid(a.grid, b.grid)
    ra, rb = resample(a, g), resample(b, g)
    return Trajectory(g, ra.states - rb.states, f"{a.problem_tag} - {b.problem_tag}")


# ---------------------------------------------------------------------------
# identities


def _piece_index(av, grid):
    mids = 0.5 * (grid[:-1] + grid[1:])
    return av.subdivision.interval_index(mids)


def _affine_piece(av, k, t):
    # the approximant's formula on interval k, evaluated at t (closed interval)
    sub = av.subdivision
    if av.kind is Kind.STEP or k == sub.n_intervals - 1:
        return av.averages[k], np.zeros_like(av.averages[k])
    rate = (av.averages[k + 1] - av.averages[k]) / sub.mesh
    return av.averages[k] + (t - sub.nodes[k]) * rate, rate


def _qform(A, u, v=None):
    v = u if v is None else v
    return np.vdot(v, A @ u)


def energy_identity_residual(traj, av, triple=None, rule="trapezoid"):
    """Largest defect over grid times of the integrated product rule

        a_L(t; u(t)) = a_L(0; u0) + int_0^t 2 Re (A_L u | u') ds + int_0^t a_L'(r; u(r)) dr,

    with u' the backward differences and u linear between grid points.
    ``rule="trapezoid"`` integrates both terms with the trapezoid rule
    (second order in the step); ``rule="simpson"`` is exact for this
    piecewise-polynomial integrand, so it exposes rounding only. For a
    step approximant the rate term is the sum of form jumps at the nodes.
    """
    if not av.source.symmetric or any(
            np.abs(A - A.conj().T).max() > 1e-12 * max(np.abs(A).max(), 1e-300) for A in av.averages):
        raise FormError("energy identity needs symmetric averaged forms")
    if rule not in ("trapezoid", "simpson"):
        raise FormError(f"unknown quadrature rule {rule!r}")
    grid, U = traj.grid, traj.states
    ks = _piece_index(av, grid)
    lhs0 = None
    acc = 0.0
    worst = 0.0
    nodes = av.subdivision.nodes
    for j, k in enumerate(ks):
        t0, t1 = grid[j], grid[j + 1]
        u0, u1 = U[j], U[j + 1]
        A0, rate = _affine_piece(av, k, t0)
        A1, _ = _affine_piece(av, k, t1)
        if lhs0 is None:
            lhs0 = _qform(A0, u0).real
        du = u1 - u0
        dt = t1 - t0
        if rule == "trapezoid":
            pair = np.real(np.vdot(du, A0 @ u0 + A1 @ u1))
            rterm = 0.5 * dt * np.real(_qform(rate, u0) + _qform(rate, u1))
        else:
            um, Am = 0.5 * (u0 + u1), 0.5 * (A0 + A1)
            pair = np.real(np.vdot(du, A0 @ u0 + 4 * (Am @ um) + A1 @ u1)) / 3.0
            rterm = dt / 6.0 * np.real(_qform(rate, u0) + 4 * _qform(rate, um) + _qform(rate, u1))
        acc += pair + rterm
        # a_L evaluated with the right-continuous convention of the approximant
        A_right = av.matrix(t1) if t1 < nodes[-1] else A1
        jump = 0.0
        if av.kind is Kind.STEP and A_right is not A1:
            jump = np.real(_qform(A_right, u1) - _qform(A1, u1))
        acc += jump
        lhs = np.real(_qform(A_right, u1))
        worst = max(worst, abs(lhs - lhs0 - acc))
    return float(worst)


def h_norm_rule_residual(traj, triple, rhs_pairing=None):
    """Largest defect of ||u(t)||_H^2 = ||u0||_H^2 + int_0^t 2 Re <u', u> ds.

    ``rhs_pairing(t, u)`` returns the functional u'(t) in V' (for the
    equation u' + A u = f this is G_H f - A u); the integral is then the
    trapezoid rule on the grid. Without it the backward differences are
    used, which reproduces the identity up to rounding.
    """
    U, t = traj.states, traj.grid
    nH2 = norm(triple, U, "H") ** 2
    if rhs_pairing is None:
        G = triple.gram_H
        inc = np.real(np.einsum("ji,ik,jk->j", np.diff(U, axis=0).conj(), G, U[:-1] + U[1:]))
        integral = np.r_[0.0, np.cumsum(inc)]
    else:
        vals = np.array([2.0 * np.real(np.vdot(u, rhs_pairing(s, u))) for s, u in zip(t, U)])
        integral = np.r_[0.0, np.cumsum(0.5 * np.diff(t) * (vals[:-1] + vals[1:]))]
    return float(np.abs(nH2 - nH2[0] - integral).max())


# ---------------------------------------------------------------------------
# a-priori chain


def rhs_l2_sq(f, grid, triple, n_nodes=2):
    """||f||^2 in L^2(0,T;H) by Gauss-Legendre on each grid step."""
    if f is None:
        return 0.0
    nodes, weights = gauss_pieces(np.asarray(grid), n_nodes)
    vals = norm(triple, np.array([f(s) for s in nodes]), "H") ** 2
    return float(weights @ vals)


def apriori_constants(alpha, M, c_H, gT, T):
    """Constants of the a-priori chain.

    sup_t ||u(t)||_V^2 <= growth * (M ||u0||_V^2 + ||f||^2)       growth = exp(g(T)/alpha)/alpha
    ||u'||^2_{L^2 H} <= deriv * (||u0||_V^2 + ||f||^2)             deriv = max(M,1) (1 + g(T) growth)
    ||u||^2_{H^1 H} <= h1 * (||u0||_V^2 + ||f||^2)                 h1 = 2 c_H^2 T + (1 + T^2) deriv
    """
    growth = math.exp(gT / alpha) / alpha
    deriv = max(M, 1.0) * (1.0 + gT * growth)
    h1 = 2.0 * c_H ** 2 * T + (1.0 + T ** 2) * deriv
    return {"alpha": alpha, "M": M, "c_H": c_H, "gT": gT, "T": T,
            "growth": growth, "deriv": deriv, "h1": h1}


@dataclass
class AprioriReport:
    sup_V_sq: float
    sup_V_bound: float
    supV_bound_ok: bool
    rate_integral: float
    gT: float
    scalar_rate_budget_ok: bool
    h1_sq: float
    h1_bound: float
    h1_bound_ok: bool
    constants: dict

    @property
    def passed(self):
        return self.supV_bound_ok and self.scalar_rate_budget_ok and self.h1_bound_ok


def apriori_report(traj, av, family, f, triple, rel_tol=1e-8, abs_tol=1e-10):
    if family.bv_modulus is None or av.scalar_averages is None:
        raise FormError("a-priori chain needs a BV modulus")
    if family.omega != 0.0:
        raise FormError("a-priori chain assumes omega = 0; shift the family first")
    T = family.horizon
    gT = float(family.bv_modulus(T))
    consts = apriori_constants(family.alpha, family.bound_M, embedding_constant(triple), gT, T)
    u0V2 = float(norm(triple, traj.states[0], "V")) ** 2
    f2 = rhs_l2_sq(f, traj.grid, triple)
    mr = mr_norms(traj, triple)
    sup_bound = consts["growth"] * (family.bound_M * u0V2 + f2)
    rate = integrated_scalar_rate(av)
    h1_bound = consts["h1"] * (u0V2 + f2)
    return AprioriReport(
        sup_V_sq=mr.sup_V ** 2, sup_V_bound=sup_bound,
        supV_bound_ok=mr.sup_V ** 2 <= sup_bound * (1 + rel_tol) + abs_tol,
        rate_integral=rate, gT=gT,
        scalar_rate_budget_ok=rate <= gT + abs_tol,
        h1_sq=mr.h1_H ** 2, h1_bound=h1_bound,
        h1_bound_ok=mr.h1_H ** 2 <= h1_bound * (1 + rel_tol) + abs_tol,
        constants=consts)


# ---------------------------------------------------------------------------
# convergence studies


@dataclass
class StudyRow:
    kind: str
    n_intervals: int
    mesh: float
    mrVVdual_error: float
    l2V_error: float
    l2H_error: float
    h1H_norm: float
    supV_norm: float
    energy_residual: float
    apriori_supV_ok: Optional[bool]
    apriori_h1_ok: Optional[bool]
    h1H_distance: float
    wall_seconds: float = 0.0

    def as_dict(self):
        return asdict(self)


def mr_vvdual_error(traj, ref, triple):
    diff = difference(traj, ref)
    m = mr_norms(diff, triple)
    return math.hypot(m.l2_V, m.l2_Vdual_deriv), m


def reference_solution(family, f, u0, triple, reference, grid=None, n_max=None,
                       steps_per_interval=64, theta=0.5):
    if reference == "oracle":
        g = union_grid(grid, np.asarray(family.discontinuities, dtype=float))
        return oracle_for(family, triple, f, u0, g)
    if reference == "finegrid":
        problem = EvolutionProblem(family, f, np.asarray(u0), triple, tag=f"{family.name}|fine")
        return solve_theta(problem, steps_per_interval, theta, base_intervals=8 * n_max)
    if reference == "direct":
        problem = EvolutionProblem(family, f, np.asarray(u0), triple, tag=f"{family.name}|direct")
        bps = np.asarray(family.breakpoints, dtype=float)
        return solve_theta(problem, theta=theta, grid=union_grid(grid, bps[(bps > 0) & (bps < family.horizon)]))
    raise FormError(f"unknown reference {reference!r}")


def _study_row(family, f, u0, kind, n, triple, reference, steps_per_interval, theta,
               nodes_per_interval, fine_ref, clock):
    start = clock()
    traj = solve_approximate(family, Subdivision(family.horizon, n), kind, f, u0, triple,
                             steps_per_interval, theta, nodes_per_interval)
    ref = fine_ref if fine_ref is not None else reference_solution(
        family, f, u0, triple, reference, grid=traj.grid, theta=theta)
    err, dm = mr_vvdual_error(traj, ref, triple)
    av = traj.meta["averaged"]
    mr = mr_norms(traj, triple)
    energy = energy_identity_residual(traj, av, triple)
    sup_ok = h1_ok = None
    if family.bv_modulus is not None and family.omega == 0.0:
        rep = apriori_report(traj, av, family, f, triple)
        sup_ok, h1_ok = rep.supV_bound_ok, rep.h1_bound_ok
    return StudyRow(kind.value, n, Subdivision(family.horizon, n).mesh, err, dm.l2_V, dm.l2_H,
                    mr.h1_H, mr.sup_V, energy, sup_ok, h1_ok, dm.h1_H, clock() - start)


def convergence_study(family, f, u0, kind, n_list, triple, reference="oracle",
                      steps_per_interval=64, theta=0.5, nodes_per_interval=32, workers=1,
                      clock=None):
    """One row per interval count, in ``n_list`` order; no assertions.

    ``reference`` is "oracle" (exact separable solution), "finegrid" (the
    unapproximated family on a grid 8x finer than the largest n) or
    "direct" (the unapproximated family on each run's own grid, which
    isolates the approximation error from the integrator's).
    """
    import time

    kind = Kind.parse(kind)
    clock = clock or time.perf_counter
    fine = None
    if reference == "finegrid":
        fine = reference_solution(family, f, u0, triple, "finegrid", n_max=max(n_list),
                                  steps_per_interval=steps_per_interval, theta=theta)
    elif reference not in ("oracle", "direct"):
        raise FormError(f"unknown reference {reference!r}")

    def run(n):
        return _study_row(family, f, u0, kind, n, triple, reference, steps_per_interval, theta,
                          nodes_per_interval, fine, clock)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, n_list))
    return [run(n) for n in n_list]


def observed_orders(errors, meshes):
    """log(e_{i+1}/e_i) / log(h_{i+1}/h_i) for consecutive rows."""
    e, h = np.asarray(errors, float), np.asarray(meshes, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(e[1:] / e[:-1]) / np.log(h[1:] / h[:-1])
