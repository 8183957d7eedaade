"""Markovian generators in diagonal (Lindblad) and non-diagonal (GKS) form.

Vectorization is column-stacking throughout, so that
``vec(A X B) = (B^T kron A) vec(X)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, Union

import numpy as np

from .errors import DimensionError, NoStationaryState, NotPositive
from .linquant import (
    TOL_ALG,
    TOL_PSD,
    _square,
    dag,
    hermitian_basis,
    hermitian_part,
)

GAMMA_DROP = 1e-14
KERNEL_RTOL = 1e-9


def vec(x: np.ndarray) -> np.ndarray:
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(v).reshape(d, d, order="F")


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian plus weighted noise channels ``(gamma_k, L_k)``.

    Channels with ``gamma_k < 1e-14`` are dropped on construction.
    """

    H: np.ndarray
    channels: tuple = field(default=())

    def __post_init__(self):
        h = _square(self.H, "Hamiltonian")
        herr = np.max(np.abs(h - dag(h)))
        if herr > TOL_ALG:
            raise DimensionError(f"Hamiltonian is not Hermitian (residual {herr:.3e})")
        d = h.shape[0]
        kept = []
        for k, ch in enumerate(self.channels):
            gamma, L = ch
            gamma = float(gamma)
            if not np.isfinite(gamma) or gamma < 0:
                raise ValueError(f"channel {k} has invalid rate {gamma}")
            L = np.asarray(L, dtype=complex)
            if L.shape != (d, d):
                raise DimensionError(f"channel {k} operator has shape {L.shape}, expected {(d, d)}")
            if gamma >= GAMMA_DROP:
                kept.append((gamma, L))
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "channels", tuple(kept))

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def gammas(self) -> np.ndarray:
        return np.array([g for g, _ in self.channels])

    @property
    def operators(self) -> list:
        return [L for _, L in self.channels]

    @property
    def norm(self) -> float:
        """Scale used to make absolute tolerances relative."""
        return float(np.linalg.norm(self.H, 2) + sum(g * np.linalg.norm(L, 2) ** 2 for g, L in self.channels))

    @classmethod
    def from_operators(cls, H, ops: Sequence, gammas: Sequence | None = None) -> "LindbladModel":
        gammas = [1.0] * len(ops) if gammas is None else gammas
        return cls(H, tuple(zip(gammas, ops)))

    def with_hamiltonian(self, H) -> "LindbladModel":
        return LindbladModel(H, self.channels)

    def with_channels(self, extra: Sequence) -> "LindbladModel":
        return LindbladModel(self.H, self.channels + tuple(extra))


@dataclass(frozen=True, eq=False)
class GKSModel:
    """Hamiltonian, traceless orthonormal operator basis ``F_k`` and GKS matrix ``A``.

    The generator is
    ``-i[H, rho] + sum_kl a_kl (F_k rho F_l^dag - 1/2 {F_l^dag F_k, rho})``.
    """

    H: np.ndarray
    basis: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        h = _square(self.H, "Hamiltonian")
        d = h.shape[0]
        if np.max(np.abs(h - dag(h))) > TOL_ALG:
            raise DimensionError("Hamiltonian is not Hermitian")
        basis = np.asarray(self.basis, dtype=complex)
        if basis.ndim != 3 or basis.shape[1:] != (d, d):
            raise DimensionError(f"basis must have shape (m, {d}, {d}), got {basis.shape}")
        m = basis.shape[0]
        if m > d * d - 1:
            raise DimensionError(f"at most {d * d - 1} basis operators allowed, got {m}")
        a = np.asarray(self.A, dtype=complex)
        if a.shape != (m, m):
            raise DimensionError(f"A must be {m}x{m}, got {a.shape}")
        if np.max(np.abs(a - dag(a)), initial=0.0) > TOL_ALG:
            raise NotPositive("GKS matrix is not Hermitian")
        if m:
            lam = np.linalg.eigvalsh(hermitian_part(a))[0]
            if lam < -TOL_PSD:
                raise NotPositive(f"GKS matrix has negative eigenvalue {lam:.3e}")
            traces = np.abs(np.einsum("kii->k", basis))
            if np.max(traces) > TOL_ALG:
                raise DimensionError("basis operators must be traceless")
            gram = np.einsum("kij,lij->kl", basis.conj(), basis)
            if np.max(np.abs(gram - np.eye(m))) > TOL_ALG:
                raise DimensionError("basis operators must be orthonormal under tr(A^dag B)")
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "A", a)

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def norm(self) -> float:
        if self.A.shape[0] == 0:
            return float(np.linalg.norm(self.H, 2))
        return float(np.linalg.norm(self.H, 2) + np.sum(np.abs(np.linalg.eigvalsh(self.A))))

    @classmethod
    def gell_mann(cls, H, A) -> "GKSModel":
        """GKS model on the traceless part of ``hermitian_basis``."""
        H = np.asarray(H, dtype=complex)
        return cls(H, hermitian_basis(H.shape[0])[1:], A)


Model = Union[LindbladModel, GKSModel]


def _check_rho(model: Model, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (model.dim, model.dim):
        raise DimensionError(f"state has shape {rho.shape}, model dimension is {model.dim}")
    return rho


def apply(model: Model, rho) -> np.ndarray:
    """Evaluate the generator on an operator ``rho``."""
    rho = _check_rho(model, rho)
    H = model.H
    out = -1j * (H @ rho - rho @ H)
    if isinstance(model, LindbladModel):
        for g, L in model.channels:
            LdL = dag(L) @ L
            out += g * (L @ rho @ dag(L) - 0.5 * (LdL @ rho + rho @ LdL))
        return out
    F = model.basis
    for k in range(F.shape[0]):
        for l in range(F.shape[0]):
            a = model.A[k, l]
            if a == 0:
                continue
            FlFk = dag(F[l]) @ F[k]
            out += a * (F[k] @ rho @ dag(F[l]) - 0.5 * (FlFk @ rho + rho @ FlFk))
    return out


def gks_to_lindblad(g: GKSModel, tol_psd: float = TOL_PSD) -> LindbladModel:
    m = g.A.shape[0]
    if m == 0:
        return LindbladModel(g.H)
    lam, V = np.linalg.eigh(hermitian_part(g.A))
    if lam[0] < -tol_psd:
        raise NotPositive(f"GKS matrix has negative eigenvalue {lam[0]:.3e}")
    ops = np.einsum("kj,kab->jab", V, g.basis)
    return LindbladModel(g.H, tuple((max(l, 0.0), L) for l, L in zip(lam, ops)))


def _dissipator_super(L: np.ndarray, R: np.ndarray | None = None) -> np.ndarray:
    """Superoperator of rho -> L rho R^dag - 1/2 {R^dag L, rho} (R defaults to L)."""
    R = L if R is None else R
    d = L.shape[0]
    eye = np.eye(d)
    RL = dag(R) @ L
    return np.kron(R.conj(), L) - 0.5 * np.kron(eye, RL) - 0.5 * np.kron(RL.T, eye)


def hamiltonian_super(H: np.ndarray) -> np.ndarray:
    eye = np.eye(H.shape[0])
    return -1j * (np.kron(eye, H) - np.kron(H.T, eye))


def superoperator(model: Model) -> np.ndarray:
    """Column-stacking matrix representation of the generator."""
    S = hamiltonian_super(model.H)
    if isinstance(model, LindbladModel):
        for g, L in model.channels:
            S += g * _dissipator_super(L)
        return S
    F = model.basis
    for k in range(F.shape[0]):
        for l in range(F.shape[0]):
            if model.A[k, l] != 0:
                S += model.A[k, l] * _dissipator_super(F[k], F[l])
    return S


def _basis_transform(d: int) -> np.ndarray:
    B = hermitian_basis(d)
    return np.stack([vec(b) for b in B], axis=1)


class BlochAffineForm(NamedTuple):
    C: np.ndarray
    D: np.ndarray

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.C.shape[0] + 1)))

    def full_matrix(self) -> np.ndarray:
        n = self.C.shape[0] + 1
        G = np.zeros((n, n))
        G[1:, 0] = self.C
        G[1:, 1:] = self.D
        return G

    def superoperator(self) -> np.ndarray:
        T = _basis_transform(self.dim)
        return T @ self.full_matrix() @ dag(T)

    def rhs(self, x: np.ndarray) -> np.ndarray:
        """Time derivative of the traceless coordinates ``x`` of a unit-trace state."""
        return self.C / np.sqrt(self.dim) + self.D @ x


def bloch_affine(model: Model) -> BlochAffineForm:
    """Real matrix of the generator in the orthonormal Hermitian basis."""
    T = _basis_transform(model.dim)
    G = dag(T) @ superoperator(model) @ T
    G = np.real(G)
    return BlochAffineForm(G[1:, 0].copy(), G[1:, 1:].copy())


class StationaryResult(NamedTuple):
    states: list
    unique: bool
    kernel: np.ndarray


def _null_space(S: np.ndarray, rtol: float) -> np.ndarray:
    _, s, vh = np.linalg.svd(S)
    if s[0] == 0.0:
        return np.eye(S.shape[1], dtype=complex)
    rank = int(np.sum(s > rtol * s[0]))
    return dag(vh[rank:])


def stationary_states(model: Model, rtol: float = KERNEL_RTOL, tol_psd: float = TOL_PSD) -> StationaryResult:
    """Stationary density operators of the generator.

    ``states`` spans the stationary states reachable from I/d and from the
    computational basis projectors, obtained with the spectral projector onto
    the kernel. ``unique`` is decided by invertibility of the affine block D;
    when unique the single state is taken from ``-D^{-1} C``.
    """
    d = model.dim
    S = superoperator(model)
    right = _null_space(S, rtol)
    form = bloch_affine(model)
    if form.D.size == 0:
        unique = True
    else:
        sv = np.linalg.svd(form.D, compute_uv=False)
        unique = bool(sv[0] > 0.0 and sv[-1] > rtol * sv[0])
    if unique:
        x = -np.linalg.solve(form.D, form.C)
        rho = hermitian_part(np.einsum("k,kij->ij", np.concatenate([[1.0], x]), hermitian_basis(d)) / np.sqrt(d))
        if np.linalg.eigvalsh(rho)[0] < -tol_psd:
            raise NoStationaryState("stationary point of the affine form is not positive", kernel=right)
        return StationaryResult([rho], True, right)

    left = _null_space(dag(S), rtol)
    proj = right @ np.linalg.solve(dag(left) @ right, dag(left))
    seeds = [np.eye(d) / d] + [np.diag(np.eye(d)[i]).astype(complex) for i in range(d)]
    states, vecs = [], []
    for s in seeds:
        rho = hermitian_part(unvec(proj @ vec(s), d))
        tr = np.trace(rho).real
        if tr <= tol_psd:
            continue
        rho = rho / tr
        if np.linalg.eigvalsh(rho)[0] < -tol_psd:
            continue
        v = vec(rho)
        if vecs:
            Q = np.stack(vecs, axis=1)
            if np.linalg.matrix_rank(np.column_stack([Q, v]), tol=1e-7) <= Q.shape[1]:
                continue
        vecs.append(v)
        states.append(rho)
    if not states:
        raise NoStationaryState("kernel contains no density operator", kernel=right)
    return StationaryResult(states, False, right)


def trace_shift(model: LindbladModel, shifts: Sequence[complex]) -> tuple[LindbladModel, np.ndarray]:
    """Gauge transformation L_k -> L_k + c_k I with compensating Hamiltonian.

    Returns the shifted model (Hamiltonian H + H_c) and
    ``H_c = -(i/2) sum_k gamma_k (c_k^* L_k - c_k L_k^dag)``; both models
    generate the same dynamics.
    """
    if len(shifts) != len(model.channels):
        raise DimensionError(f"{len(shifts)} shifts given for {len(model.channels)} channels")
    d = model.dim
    Hc = np.zeros((d, d), dtype=complex)
    new = []
    for c, (g, L) in zip(shifts, model.channels):
        c = complex(c)
        Hc += -0.5j * g * (np.conj(c) * L - c * dag(L))
        new.append((g, L + c * np.eye(d)))
    Hc = hermitian_part(Hc)
    return LindbladModel(model.H + Hc, tuple(new)), Hc
