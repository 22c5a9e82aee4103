"""Theta-scheme integration of u' + A(t) u = f and the separable spectral oracle."""
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .approx import Kind, average, gauss_pieces
from .forms import EvolutionProblem, FormError


class SolverError(RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: np.ndarray
    states: np.ndarray
    problem_tag: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def steps(self):
        return np.diff(self.grid)

    @property
    def derivative(self):
        """Backward differences (u_{j+1} - u_j) / dt_j, attributed to step j."""
        return np.diff(self.states, axis=0) / self.steps[:, None]

    @property
    def horizon(self):
        return float(self.grid[-1])


def merge_knots(primary, secondary, rel_tol=1e-12):
    """Sorted union keeping ``primary`` values exactly; drops near-duplicates."""
    primary = np.unique(np.asarray(primary, dtype=float))
    secondary = np.asarray(secondary, dtype=float)
    if len(primary) and len(secondary):
        tol = rel_tol * max(1.0, float(np.abs(primary).max()))
        near = np.abs(secondary[:, None] - primary[None, :]).min(axis=1) <= tol
        secondary = secondary[~near]
    return np.unique(np.r_[primary, secondary])


def time_grid(knots, target_dt):
    """Refine each [knots[i], knots[i+1]] into equal steps no longer than target_dt."""
    knots = np.asarray(knots, dtype=float)
    pieces = []
    for a, b in zip(knots[:-1], knots[1:]):
        m = max(1, math.ceil((b - a) / target_dt - 1e-9))
        pieces.append(np.linspace(a, b, m + 1)[:-1])
    pieces.append(knots[-1:])
    return np.concatenate(pieces)


def solve_theta(problem, steps_per_interval=64, theta=0.5, base_intervals=1, grid=None):
    """Integrate ``problem`` with the theta-scheme.

    Step j solves  (G_H + theta dt A(tau)) u_{j+1} = (G_H - (1-theta) dt A(tau)) u_j
    + dt G_H f(tau)  with tau = t_j + theta dt (the left limit at t_{j+1}
    when theta = 1). The grid contains every breakpoint of the source and
    the nodes of ``base_intervals`` equal intervals, each of length
    T/base_intervals split into ``steps_per_interval`` steps. An explicit
    ``grid`` overrides this construction; it must span [0, T] and contain
    every breakpoint.
    """
    if not 0.5 <= theta <= 1.0:
        raise SolverError("theta must lie in [1/2, 1]")
    if steps_per_interval < 1:
        raise SolverError("steps_per_interval must be >= 1")
    src = problem.source
    T = src.horizon
    bps = np.asarray(src.breakpoints, dtype=float)
    inner = bps[(bps > 0) & (bps < T)]
    if grid is None:
        knots = merge_knots(np.r_[0.0, inner, T], np.linspace(0.0, T, base_intervals + 1))
        grid = time_grid(knots, T / (base_intervals * steps_per_interval))
    else:
        grid = np.asarray(grid, dtype=float)
        if grid[0] != 0.0 or grid[-1] != T or np.any(np.diff(grid) <= 0):
            raise SolverError("grid must increase strictly from 0 to T")
        if not np.all(np.isin(inner, grid)):
            raise SolverError("grid misses a breakpoint of the source")
    G = problem.triple.gram_H
    f = problem.rhs_f
    u = np.array(problem.initial_u0, dtype=np.result_type(problem.initial_u0, G, float))
    states = np.empty((len(grid), len(u)), dtype=u.dtype)
    states[0] = u
    cache_key, lu = None, None
    piece = np.searchsorted(np.unique(np.r_[0.0, src.breakpoints, T]), grid[:-1], side="right")
    for j in range(len(grid) - 1):
        t0, t1 = grid[j], grid[j + 1]
        dt = t1 - t0
        tau = t0 + theta * dt
        if tau >= t1:
            tau = np.nextafter(t1, t0)
        A = src.matrix(tau)
        key = (piece[j], dt) if src.piecewise_constant else None
        if key is None or key != cache_key:
            lhs = G + theta * dt * A
            try:
                lu = sla.lu_factor(lhs, check_finite=True)
            except (ValueError, sla.LinAlgError) as exc:
                raise SolverError(f"cannot factor step matrix: {exc}", j) from exc
            if np.min(np.abs(np.diag(lu[0]))) <= 1e-14 * np.abs(lhs).max():
                raise SolverError("singular step matrix", j)
            cache_key = key
        rhs = G @ u - (1.0 - theta) * dt * (A @ u)
        if f is not None:
            rhs = rhs + dt * (G @ f(tau))
        u = sla.lu_solve(lu, rhs, check_finite=False)
        if not np.all(np.isfinite(u)):
            raise SolverError("non-finite state", j + 1)
        states[j + 1] = u
    return Trajectory(grid, states, problem.tag or src.name,
                      {"theta": theta, "steps_per_interval": steps_per_interval})


def solve_approximate(family, sub, kind, f, u0, triple, steps_per_interval=64, theta=0.5,
                      nodes_per_interval=32):
    """Solve u' + A_Lambda(t) u = f for the step or linear approximant on ``sub``."""
    kind = Kind.parse(kind)
    av = average(family, sub, nodes_per_interval, kind)
    problem = EvolutionProblem(av.as_family(kind), f, np.asarray(u0), triple,
                               tag=f"{family.name}|{kind.value}|n={sub.n_intervals}")
    traj = solve_theta(problem, steps_per_interval, theta, base_intervals=sub.n_intervals)
    traj.meta.update(kind=kind, mesh=sub.mesh, n_intervals=sub.n_intervals, averaged=av)
    return traj


def solve_spectral_oracle(coefficient, base, triple, f, u0, output_grid, mass_shift=0.0,
                          quad_nodes=10):
    """Exact solution of u' + (c(t) base + mass_shift G_H) u = f in the discrete triple.

    Expands in the G_H-orthonormal eigenvectors of ``base`` and propagates
    each mode between output times with the exact exponential; the Duhamel
    integral uses Gauss-Legendre on pieces over which every mode's phase
    grows by at most 2, split at the coefficient's jumps and kinks.
    """
    G = triple.gram_H
    mu, phi = sla.eigh(base, G)
    grid = np.asarray(output_grid, dtype=float)
    C0 = coefficient.antiderivative(0.0)

    def phase(t):
        return mu * (coefficient.antiderivative(t) - C0) + mass_shift * t

    proj = phi.conj().T @ G  # vector -> modal coefficients
    y = proj @ np.asarray(u0)
    E = phase(grid[0])
    ys = [y]
    cuts = np.array([*coefficient.jumps, *coefficient.kinks], dtype=float)
    for a, b in zip(grid[:-1], grid[1:]):
        Eb = phase(b)
        y = np.exp(-(Eb - E)) * y
        if f is not None:
            inner = np.r_[a, np.sort(cuts[(cuts > a) & (cuts < b)]), b]
            edges = [a]
            for lo, hi in zip(inner[:-1], inner[1:]):
                spread = float(np.max(np.abs(phase(hi) - phase(lo))))
                m = max(1, math.ceil(spread / 2.0))
                edges.extend(np.linspace(lo, hi, m + 1)[1:])
            nodes, weights = gauss_pieces(np.array(edges), quad_nodes)
            F = proj @ np.array([f(s) for s in nodes]).T  # modes x nodes
            En = mu[:, None] * (coefficient.antiderivative(nodes) - C0)[None, :] + mass_shift * nodes
            decay = np.exp(-(Eb[:, None] - En))
            y = y + (decay * F) @ weights
        E = Eb
        ys.append(y)
    states = (phi @ np.array(ys).T).T
    return Trajectory(grid, states, "spectral_oracle", {"modes": mu})


def oracle_for(family, triple, f, u0, output_grid):
    """Spectral oracle for a separable family; raises for anything else."""
    sep = family.separable
    if sep is None:
        raise FormError(f"family {family.name!r} is not separable")
    return solve_spectral_oracle(sep.coefficient, sep.base, triple, f, u0, output_grid,
                                 mass_shift=sep.mass_shift)
