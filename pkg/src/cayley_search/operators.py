"""Laplacians, search Hamiltonians, eigensolvers and propagators.

Sign conventions: ``L = A - D`` (adjacency minus weighted degree), and the
search Hamiltonian is ``H = -gamma * L - |a><a|``.  Eigenvalues are always
returned in ascending order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import WeightedGraph

__all__ = [
    "NumericalError",
    "ConvergenceError",
    "SpectralDecomposition",
    "laplacian",
    "search_hamiltonian",
    "eigendecompose",
    "jacobi_eigh",
    "evolve_exact",
    "evolve_krylov",
]

DENSE_LIMIT = 4000


class NumericalError(RuntimeError):
    """A numerical routine failed to reach its tolerance."""


class ConvergenceError(NumericalError):
    pass


def laplacian(graph: WeightedGraph, sparse: bool = False):
    """Weighted graph Laplacian ``A - D``; rows sum to zero."""
    n = graph.n
    rows = np.concatenate([graph.u, graph.v, np.arange(n)])
    cols = np.concatenate([graph.v, graph.u, np.arange(n)])
    vals = np.concatenate([graph.w, graph.w, -graph.degrees()])
    L = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return L if sparse else L.toarray()


def search_hamiltonian(graph: WeightedGraph, gamma: float, marked: int | None = None, sparse: bool = False):
    """``H = -gamma * L - |marked><marked|``."""
    marked = graph.marked if marked is None else marked
    if marked is None or not 0 <= marked < graph.n:
        raise ValueError(f"marked vertex {marked!r} out of range for n={graph.n}")
    H = -gamma * laplacian(graph, sparse=True)
    H = H + sp.csr_matrix(([-1.0], ([marked], [marked])), shape=(graph.n, graph.n))
    return H.tocsr() if sparse else H.toarray()


@dataclass(frozen=True)
class SpectralDecomposition:
    """Ascending eigenvalues with orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def amplitudes(self, state: np.ndarray) -> np.ndarray:
        """<psi_i|state> for every eigenvector."""
        return self.eigenvectors.T @ state

    def overlaps(self, state: np.ndarray) -> np.ndarray:
        """Squared overlaps |<psi_i|state>|**2."""
        return np.abs(self.amplitudes(state)) ** 2

    def gap(self, i: int = 0, j: int = 1) -> float:
        return float(self.eigenvalues[j] - self.eigenvalues[i])

    def residual(self, m: np.ndarray) -> float:
        """max_i ||m psi_i - E_i psi_i||."""
        r = m @ self.eigenvectors - self.eigenvectors * self.eigenvalues
        return float(np.max(np.linalg.norm(r, axis=0)))

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


def jacobi_eigh(m: np.ndarray, tol: float = 1e-13, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigensolver for a real symmetric matrix.

    Sweeps over all (p, q) pairs with classic rotations until the
    off-diagonal Frobenius norm drops below ``tol * ||m||_F``.
    """
    a = np.array(m, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), v
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off < tol * scale:
            order = np.argsort(np.diag(a), kind="stable")
            return np.diag(a)[order].copy(), v[:, order]
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :], a[q, :] = c * ap - s * aq, s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
    raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")


def eigendecompose(m, method: str = "lapack") -> SpectralDecomposition:
    """Full eigendecomposition of a dense symmetric matrix.

    ``method="jacobi"`` runs :func:`jacobi_eigh`; the default uses LAPACK's
    symmetric driver, which is much faster for the repeated sweeps.
    """
    if sp.issparse(m):
        m = m.toarray()
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if m.shape[0] > DENSE_LIMIT:
        raise ValueError(f"dense eigendecomposition limited to dim <= {DENSE_LIMIT}")
    if method == "jacobi":
        evals, evecs = jacobi_eigh(m)
    elif method == "lapack":
        evals, evecs = np.linalg.eigh(m)
    else:
        raise ValueError(f"unknown method {method!r}")
    return SpectralDecomposition(evals, evecs)


def evolve_exact(decomp: SpectralDecomposition, state: np.ndarray, t: float) -> np.ndarray:
    """exp(-iHt) state via the spectral sum."""
    state = np.asarray(state)
    if state.shape != (decomp.dim,):
        raise ValueError(f"state has shape {state.shape}, expected ({decomp.dim},)")
    coeff = decomp.eigenvectors.T @ state
    return decomp.eigenvectors @ (np.exp(-1j * decomp.eigenvalues * t) * coeff)


def _lanczos(h, v0: np.ndarray, m: int):
    n = len(v0)
    V = np.zeros((n, m + 1), dtype=complex)
    V[:, 0] = v0
    alpha, beta = [], []
    for j in range(m):
        w = h @ V[:, j]
        a = np.vdot(V[:, j], w).real
        w = w - a * V[:, j]
        if j:
            w = w - beta[-1] * V[:, j - 1]
        w = w - V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
        b = np.linalg.norm(w)
        alpha.append(a)
        beta.append(b)
        if b < 1e-12 * (abs(a) + 1.0):
            return V[:, : j + 1], np.array(alpha), np.array(beta), True
        V[:, j + 1] = w / b
    return V[:, :m], np.array(alpha), np.array(beta), False


def _norm_estimate(h) -> float:
    if sp.issparse(h):
        return float(abs(h).sum(axis=1).max())
    return float(np.abs(np.asarray(h)).sum(axis=1).max())


def evolve_krylov(h, state: np.ndarray, t: float, tol: float = 1e-8, m: int = 30) -> np.ndarray:
    """exp(-iHt) state by time-stepped Lanczos projections.

    ``h`` is any real symmetric operator supporting ``h @ x`` (dense or
    sparse).  Each step builds an ``m``-dimensional Krylov space and picks the
    longest step whose a-posteriori error estimate stays within the
    per-unit-time share of ``tol``; steps are halved on failure.
    """
    psi = np.array(state, dtype=complex)
    if t == 0:
        return psi
    total = abs(float(t))
    direction = np.sign(t)
    m = max(2, min(m, len(psi)))
    remaining = total
    step = min(total, max(1.0, m / 2.0) / max(_norm_estimate(h), 1e-300))
    while remaining > 0:
        nrm = np.linalg.norm(psi)
        V, alpha, beta, breakdown = _lanczos(h, psi / nrm, m)
        k = len(alpha)
        T = np.diag(alpha) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
        evals, evecs = np.linalg.eigh(T)
        tail = 0.0 if breakdown else beta[k - 1]
        step = remaining if breakdown else min(step, remaining)
        while True:
            y = evecs @ (np.exp(-1j * direction * evals * step) * evecs[0])
            err = nrm * tail * abs(y[-1])
            # step / total first: tol * step underflows for subnormal t
            if err <= tol * (step / total):
                break
            step *= 0.5
            if step / total < 1e-15:
                raise NumericalError("Krylov step size underflow")
        psi = nrm * (V @ y)
        remaining -= step
        if err < 0.1 * tol * (step / total):
            step *= 2.0
    return psi
