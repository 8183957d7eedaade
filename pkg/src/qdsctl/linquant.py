"""Dense linear algebra on finite-dimensional Hilbert spaces.

Everything here works on plain ``numpy`` complex arrays. Matrices on a
bipartite space S (x) F use S-major indexing: the basis vector
``|s> (x) |phi>`` sits at index ``s * f + phi``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, StateError

TOL_ALG = 1e-9
TOL_PSD = 1e-8


def dag(x: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(x, -1, -2))


def hermitian_part(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + dag(x))


def _square(x, name="matrix") -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim != 2 or x.shape[0] != x.shape[1] or x.shape[0] < 1:
        raise DimensionError(f"{name} must be a non-empty square matrix, got shape {x.shape}")
    return x


def is_hermitian(x: np.ndarray, tol: float = TOL_ALG) -> bool:
    return bool(np.max(np.abs(x - dag(x)), initial=0.0) <= tol)


def validate_density(rho, tol_alg: float = TOL_ALG, tol_psd: float = TOL_PSD) -> np.ndarray:
    """Return ``rho`` as a complex array, raising StateError if it is not a state."""
    rho = _square(rho, "density operator")
    herm_err = np.max(np.abs(rho - dag(rho)))
    if herm_err > tol_alg:
        raise StateError(f"density operator is not Hermitian (residual {herm_err:.3e})")
    tr = np.trace(rho)
    if abs(tr - 1.0) > tol_alg:
        raise StateError(f"density operator has trace {tr.real:.12g}, expected 1")
    lam = np.linalg.eigvalsh(hermitian_part(rho))[0]
    if lam < -tol_psd:
        raise StateError(f"density operator has negative eigenvalue {lam:.3e}")
    return rho


def is_density(rho, tol_alg: float = TOL_ALG, tol_psd: float = TOL_PSD) -> bool:
    try:
        validate_density(rho, tol_alg, tol_psd)
    except (StateError, DimensionError):
        return False
    return True


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    diff = hermitian_part(np.asarray(a, dtype=complex) - np.asarray(b, dtype=complex))
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def purity(rho: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ rho)))


def pure_state(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=complex).ravel()
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_matrix(d: int, rng: np.random.Generator, cols: int | None = None) -> np.ndarray:
    cols = d if cols is None else cols
    return rng.standard_normal((d, cols)) + 1j * rng.standard_normal((d, cols))


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    return hermitian_part(random_matrix(d, rng))


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    g = random_matrix(d, rng, cols=rank or d)
    rho = g @ dag(g)
    return rho / np.trace(rho)


# --------------------------------------------------------------------------- decompositions


@dataclass(frozen=True, eq=False)
class SpaceDecomposition:
    """H_I = (H_S (x) H_F) (+) H_R realized by a unitary basis change.

    Column ``j`` of ``basis_change`` is the j-th vector of the adapted basis:
    first the ``n*f`` product vectors (S-major), then the ``r`` remainder vectors.
    """

    n: int
    f: int
    r: int
    basis_change: np.ndarray

    def __post_init__(self):
        if self.n < 1 or self.f < 1 or self.r < 0:
            raise DimensionError(f"invalid decomposition dims n={self.n}, f={self.f}, r={self.r}")
        u = _square(self.basis_change, "basis_change")
        if u.shape[0] != self.n * self.f + self.r:
            raise DimensionError(
                f"basis_change is {u.shape[0]}x{u.shape[0]} but n*f+r = {self.n * self.f + self.r}"
            )
        err = np.max(np.abs(dag(u) @ u - np.eye(u.shape[0])))
        if err > TOL_ALG:
            raise DimensionError(f"basis_change is not unitary (residual {err:.3e})")
        object.__setattr__(self, "basis_change", u)

    @property
    def dim(self) -> int:
        return self.n * self.f + self.r

    @property
    def sf_dim(self) -> int:
        return self.n * self.f

    @classmethod
    def standard(cls, n: int, f: int = 1, r: int = 0) -> "SpaceDecomposition":
        return cls(n, f, r, np.eye(n * f + r, dtype=complex))

    @classmethod
    def from_subspace(cls, vectors, dim: int | None = None) -> "SpaceDecomposition":
        """Subspace decomposition (f = 1) whose first block is span(vectors).

        ``vectors`` holds one orthonormal vector per column (or a 1-D array for a
        single vector). The remainder basis is the orthogonal complement.
        """
        v = np.asarray(vectors, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        d = v.shape[0] if dim is None else dim
        if v.shape[0] != d:
            raise DimensionError(f"subspace vectors have length {v.shape[0]}, expected {d}")
        gram_err = np.max(np.abs(dag(v) @ v - np.eye(v.shape[1])))
        if gram_err > TOL_ALG:
            raise DimensionError(f"subspace vectors are not orthonormal (residual {gram_err:.3e})")
        p = v.shape[1]
        if p == d:
            return cls(p, 1, 0, v)
        u, _, _ = np.linalg.svd(np.eye(d) - v @ dag(v))
        return cls(p, 1, d - p, np.hstack([v, u[:, : d - p]]))

    def projector_sf(self) -> np.ndarray:
        u = self.basis_change[:, : self.sf_dim]
        return u @ dag(u)

    def projector_r(self) -> np.ndarray:
        u = self.basis_change[:, self.sf_dim :]
        return u @ dag(u)

    def to_adapted(self, x: np.ndarray) -> np.ndarray:
        u = self.basis_change
        return dag(u) @ x @ u

    def from_adapted(self, y: np.ndarray) -> np.ndarray:
        u = self.basis_change
        return u @ y @ dag(u)

    def embed(self, rho_sf: np.ndarray, rho_r: np.ndarray | None = None) -> np.ndarray:
        """Place an SF-block (and optional R-block) operator into the full space."""
        y = np.zeros((self.dim, self.dim), dtype=complex)
        y[: self.sf_dim, : self.sf_dim] = rho_sf
        if rho_r is not None and self.r:
            y[self.sf_dim :, self.sf_dim :] = rho_r
        return self.from_adapted(y)


@dataclass(frozen=True, eq=False)
class BlockView:
    sf: np.ndarray
    p: np.ndarray
    q: np.ndarray
    r: np.ndarray

    def assemble(self) -> np.ndarray:
        return np.block([[self.sf, self.p], [self.q, self.r]])

    def reassemble(self, decomp: SpaceDecomposition) -> np.ndarray:
        return decomp.from_adapted(self.assemble())


def block_decompose(x, decomp: SpaceDecomposition) -> BlockView:
    """Blocks of U^dag X U in the adapted basis (S (x) F first, R last)."""
    x = _square(x)
    if x.shape[0] != decomp.dim:
        raise DimensionError(f"matrix is {x.shape[0]}-dimensional, decomposition is {decomp.dim}")
    y = decomp.to_adapted(x)
    k = decomp.sf_dim
    return BlockView(y[:k, :k], y[:k, k:], y[k:, :k], y[k:, k:])


# --------------------------------------------------------------------------- bipartite tools


def _check_bipartite(x, n: int, f: int) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.shape != (n * f, n * f):
        raise DimensionError(f"expected a {n * f}x{n * f} matrix on S(x)F, got {x.shape}")
    return x


def partial_trace(x, side: str, n: int, f: int) -> np.ndarray:
    """Partial trace of an operator on S (x) F.

    ``side="over_F"`` returns an n x n matrix, ``side="over_S"`` an f x f one.
    """
    x = _check_bipartite(x, n, f).reshape(n, f, n, f)
    if side == "over_F":
        return np.einsum("iaja->ij", x)
    if side == "over_S":
        return np.einsum("aiaj->ij", x)
    raise ValueError(f"side must be 'over_F' or 'over_S', got {side!r}")


def reshuffle(x, n: int, f: int) -> np.ndarray:
    """Realignment R[(s,s'), (p,p')] = X[(s,p), (s',p')]."""
    x = _check_bipartite(x, n, f).reshape(n, f, n, f)
    return x.transpose(0, 2, 1, 3).reshape(n * n, f * f)


class SchmidtTerm(NamedTuple):
    weight: float
    m: np.ndarray
    n: np.ndarray


def operator_schmidt(x, n: int, f: int, rtol: float = 1e-13) -> list[SchmidtTerm]:
    """Operator Schmidt decomposition X = sum_i w_i M_i (x) N_i.

    {M_i} and {N_i} are orthonormal under tr(A^dag B); weights are returned in
    non-increasing order and terms with ``w_i <= rtol * w_max`` are dropped.
    """
    r = reshuffle(x, n, f)
    u, s, vh = np.linalg.svd(r, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return []
    keep = s > rtol * s[0]
    return [
        SchmidtTerm(float(s[i]), u[:, i].reshape(n, n), vh[i].reshape(f, f))
        for i in np.flatnonzero(keep)
    ]


class Factorization(NamedTuple):
    kind: str  # "S_tensor_I" | "I_tensor_F" | "both" | "neither"
    factor: np.ndarray | complex | None


def _scalar_part(m: np.ndarray) -> complex:
    return np.trace(m) / m.shape[0]


def classify_factorized(x, n: int, f: int, tol: float = TOL_ALG) -> Factorization:
    """Decide whether X = L_S (x) I_F, I_S (x) L_F, c*I (``both``) or none of these.

    X is factorized when exactly one Schmidt weight exceeds ``tol * ||X||_HS``;
    each factor is then compared with its scalar projection. The zero matrix
    is ``both`` with factor 0.
    """
    x = _check_bipartite(x, n, f)
    norm = np.linalg.norm(x)
    if norm <= tol:
        return Factorization("both", 0j)
    terms = operator_schmidt(x, n, f, rtol=0.0)
    big = [t for t in terms if t.weight > tol * norm]
    if len(big) != 1:
        return Factorization("neither", None)
    w, m, nn = big[0]
    cm, cn = _scalar_part(m), _scalar_part(nn)
    m_scalar = np.linalg.norm(m - cm * np.eye(n)) <= tol
    n_scalar = np.linalg.norm(nn - cn * np.eye(f)) <= tol
    if m_scalar and n_scalar:
        return Factorization("both", complex(w * cm * cn))
    if n_scalar:
        return Factorization("S_tensor_I", w * cn * m)
    if m_scalar:
        return Factorization("I_tensor_F", w * cm * nn)
    return Factorization("neither", None)


def s_side_projection(x: np.ndarray, n: int, f: int) -> np.ndarray:
    """Closest operator of the form A (x) I_F (orthogonal projection in HS norm)."""
    return np.kron(partial_trace(x, "over_F", n, f) / f, np.eye(f))


def f_side_projection(x: np.ndarray, n: int, f: int) -> np.ndarray:
    """Closest operator of the form I_S (x) B."""
    return np.kron(np.eye(n), partial_trace(x, "over_S", n, f) / n)


def local_split(h: np.ndarray, n: int, f: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Split H into H_S (x) I + I (x) H_F with the global trace shared equally.

    Returns ``(h_s, h_f, residual)`` where ``residual`` is the HS norm of what
    is left over, i.e. the distance of H from the local-Hamiltonian subspace.
    """
    h = _check_bipartite(h, n, f)
    shift = np.trace(h) / (2 * n * f)
    h_s = partial_trace(h, "over_F", n, f) / f - shift * np.eye(n)
    h_f = partial_trace(h, "over_S", n, f) / n - shift * np.eye(f)
    rest = h - np.kron(h_s, np.eye(f)) - np.kron(np.eye(n), h_f)
    return h_s, h_f, float(np.linalg.norm(rest))


# --------------------------------------------------------------------------- Hermitian basis


@lru_cache(maxsize=32)
def _hermitian_basis_array(d: int) -> np.ndarray:
    basis = [np.eye(d, dtype=complex) / np.sqrt(d)]
    for j in range(d):
        for k in range(j + 1, d):
            sym = np.zeros((d, d), dtype=complex)
            sym[j, k] = sym[k, j] = 1 / np.sqrt(2)
            asym = np.zeros((d, d), dtype=complex)
            asym[j, k] = -1j / np.sqrt(2)
            asym[k, j] = 1j / np.sqrt(2)
            basis += [sym, asym]
    for l in range(1, d):
        diag = np.zeros(d)
        diag[:l] = 1.0
        diag[l] = -l
        basis.append(np.diag(diag / np.sqrt(l * (l + 1))).astype(complex))
    out = np.array(basis)
    out.setflags(write=False)
    return out


def hermitian_basis(d: int) -> np.ndarray:
    """Orthonormal Hermitian basis of d x d matrices (generalized Gell-Mann).

    Element 0 is I/sqrt(d); the others are traceless. For d = 2 the result is
    (I, sigma_x, sigma_y, sigma_z) / sqrt(2). Returned as a read-only
    ``(d*d, d, d)`` array.
    """
    if d < 2:
        raise DimensionError("hermitian_basis needs d >= 2")
    return _hermitian_basis_array(int(d))


def to_bloch(rho: np.ndarray) -> np.ndarray:
    """Real coordinates of a Hermitian matrix in ``hermitian_basis``."""
    rho = np.asarray(rho, dtype=complex)
    b = hermitian_basis(rho.shape[-1])
    return np.real(np.einsum("kij,...ji->...k", b, rho))


def from_bloch(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    d = int(round(np.sqrt(v.shape[-1])))
    return np.einsum("...k,kij->...ij", v, hermitian_basis(d))
