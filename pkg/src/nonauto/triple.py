"""Discrete Gelfand triple V -> H -> V'.

Vectors are coefficients in a fixed V-basis. A vector ``x`` has V- and
H-norms through the two Gram matrices; a functional ``f`` (a vector of
values on the basis) has the dual norm ``sqrt(f^H G_V^{-1} f)``.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

NORM_KINDS = ("V", "H", "Vdual")


class TripleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GelfandTriple:
    gram_V: np.ndarray
    gram_H: np.ndarray
    factor_V: np.ndarray = field(repr=False)  # lower Cholesky factor of gram_V

    @property
    def dim(self):
        return self.gram_V.shape[0]

    @cached_property
    def _modes(self):
        # Generalized eigenpairs of G_V phi = mu G_H phi, H-orthonormal.
        return sla.eigh(self.gram_V, self.gram_H)

    def mode(self, k):
        """k-th (1-based) eigenvector of the V-form relative to H, unit H-norm."""
        if not 1 <= k <= self.dim:
            raise TripleError(f"mode index {k} outside 1..{self.dim}")
        vec = self._modes[1][:, k - 1].copy()
        # fix the sign so the first significant entry is positive
        j = np.flatnonzero(np.abs(vec) > 1e-12 * np.abs(vec).max())[0]
        return vec if vec[j] > 0 else -vec

    def solve_V(self, f):
        """Return G_V^{-1} f (the Riesz representer of the functional f)."""
        return sla.cho_solve((self.factor_V, True), f)

    def whiten(self, f):
        """Return L^{-1} f, so that |L^{-1} f|_2 = ||f||_{V'}."""
        return sla.solve_triangular(self.factor_V, f, lower=True)


def _check_gram(G, name):
    G = np.asarray(G)
    if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] == 0:
        raise TripleError(f"{name} must be a non-empty square matrix")
    scale = max(np.abs(G).max(), np.finfo(float).tiny)
    if np.abs(G - G.conj().T).max() > 1e-12 * scale:
        raise TripleError(f"{name} is not Hermitian")
    if np.linalg.eigvalsh(G).min() <= 0:
        raise TripleError(f"{name} is not positive definite")
    return G


def from_grams(gram_V, gram_H):
    """Build a triple from an arbitrary Hermitian positive-definite Gram pair."""
    gram_V = _check_gram(gram_V, "gram_V")
    gram_H = _check_gram(gram_H, "gram_H")
    if gram_V.shape != gram_H.shape:
        raise TripleError("Gram matrices have different sizes")
    gram_V = 0.5 * (gram_V + gram_V.conj().T)
    gram_H = 0.5 * (gram_H + gram_H.conj().T)
    gram_V.setflags(write=False)
    gram_H.setflags(write=False)
    L = np.linalg.cholesky(gram_V)
    L.setflags(write=False)
    return GelfandTriple(gram_V, gram_H, L)


def build_fem_triple(n_interior):
    """P1 finite elements on (0, 1) with homogeneous Dirichlet conditions.

    H is L^2(0,1) through the mass matrix and V is H^1_0 with the
    gradient seminorm through the stiffness matrix, h = 1/(n_interior+1).
    """
    if int(n_interior) != n_interior or n_interior < 1:
        raise TripleError("n_interior must be a positive integer")
    n = int(n_interior)
    h = 1.0 / (n + 1)
    off = np.ones(n - 1)
    stiff = (2.0 * np.eye(n) - np.diag(off, 1) - np.diag(off, -1)) / h
    mass = h * (4.0 * np.eye(n) + np.diag(off, 1) + np.diag(off, -1)) / 6.0
    return from_grams(stiff, mass)


def _check_vec(triple, x):
    x = np.asarray(x)
    if x.shape[-1] != triple.dim:
        raise TripleError(f"vector length {x.shape[-1]} != triple dim {triple.dim}")
    return x


def norm(triple, x, which="V"):
    """V-, H- or V'-norm of ``x``. Accepts a stack of vectors (last axis)."""
    x = _check_vec(triple, x)
    if which == "V":
        q = np.einsum("...i,ij,...j->...", x.conj(), triple.gram_V, x)
    elif which == "H":
        q = np.einsum("...i,ij,...j->...", x.conj(), triple.gram_H, x)
    elif which == "Vdual":
        w = triple.whiten(np.moveaxis(x, -1, 0))
        q = np.sum(np.abs(w) ** 2, axis=0)
    else:
        raise TripleError(f"unknown norm {which!r}; expected one of {NORM_KINDS}")
    return np.sqrt(np.maximum(np.real(q), 0.0))


def inner_H(triple, x, y):
    """(x | y)_H = y^H G_H x."""
    return np.vdot(y, triple.gram_H @ x)


def embedding_constant(triple):
    """Sharp constant c_H with ||u||_H <= c_H ||u||_V."""
    lam = sla.eigh(triple.gram_H, triple.gram_V, eigvals_only=True)
    return float(np.sqrt(lam.max()))


def embedding_maximizer(triple):
    _, vecs = sla.eigh(triple.gram_H, triple.gram_V)
    return vecs[:, -1]


def operator_norm(triple, A):
    """Norm of u -> A u as a map V -> V', i.e. sup |v^H A u| / (|u|_V |v|_V)."""
    X = triple.whiten(A)
    B = triple.whiten(X.conj().T).conj().T
    return float(np.linalg.norm(B, 2))


def form_spectrum(triple, A):
    """Generalized eigenvalues of the Hermitian part of A relative to G_V."""
    herm = 0.5 * (A + A.conj().T)
    return sla.eigh(herm, triple.gram_V, eigvals_only=True)
