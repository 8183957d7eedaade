"""Constructive Markovian feedback designs.

Two-level and ladder stabilizers for a pure target state, constant
Hamiltonian compensation for invariance, and generation of a
decoherence-free subspace for an arbitrary measurement operator.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import FeedbackDesign, build_fme
from .errors import (
    DimensionError,
    InternalInconsistency,
    NotCompensable,
    NotPure,
    NotStabilizable,
    StateError,
    ZeroCoupling,
)
from .generator import Model
from .linquant import (
    TOL_ALG,
    SpaceDecomposition,
    _square,
    block_decompose,
    dag,
    hermitian_part,
    validate_density,
)
from .subsystems import (
    SubsystemReport,
    _as_lindblad,
    _lindblad_blocks,
    check_attractivity,
    check_dfs_gamma_robust,
    check_invariance,
)


def _pure_vector(rho_d, tol: float = TOL_ALG) -> np.ndarray:
    try:
        rho_d = validate_density(rho_d)
    except StateError as exc:
        raise NotPure(f"target is not a density operator: {exc}") from exc
    lam, vecs = np.linalg.eigh(rho_d)
    if abs(lam[-1] - 1.0) > tol or abs(np.real(np.trace(rho_d @ rho_d)) - 1.0) > tol:
        raise NotPure(f"target state has purity {np.real(np.trace(rho_d @ rho_d)):.12g}, expected 1")
    return vecs[:, -1]


def _completion(psi: np.ndarray) -> np.ndarray:
    """Unitary whose first column is psi."""
    return SpaceDecomposition.from_subspace(psi).basis_change


def stabilizable_qubit(M, rho_d, tol: float = TOL_ALG) -> bool:
    """True iff rho_d does not commute with M + M^dag."""
    M = _square(M, "M")
    rho_d = np.asarray(rho_d, dtype=complex)
    if M.shape != (2, 2) or rho_d.shape != (2, 2):
        raise DimensionError("stabilizable_qubit expects 2x2 matrices")
    _pure_vector(rho_d)
    X = M + dag(M)
    return bool(np.max(np.abs(rho_d @ X - X @ rho_d)) > tol)


def _closed_loop_checks(design: FeedbackDesign, decomp: SpaceDecomposition):
    model = build_fme(design)
    return check_invariance(model, decomp), check_attractivity(model, decomp)


def design_qubit_stabilizer(M, H, rho_d, tol: float = TOL_ALG) -> FeedbackDesign:
    """Feedback design making the pure state rho_d invariant and globally attractive.

    In the basis where rho_d = diag(1, 0) the feedback Hamiltonian cancels
    the lower-left entry of M - iF and the anti-Hermitian diagonal of M, so
    that L = M - iF is upper triangular with l_P = 2 (M^H)_P. The constant
    compensation then fixes the off-diagonal of the closed-loop Hamiltonian.
    """
    M = _square(M, "M")
    H = _square(H, "H")
    if M.shape != (2, 2) or H.shape != (2, 2):
        raise DimensionError("design_qubit_stabilizer expects 2x2 matrices")
    psi = _pure_vector(rho_d)
    X = M + dag(M)
    residual = float(np.max(np.abs(np.asarray(rho_d) @ X - X @ np.asarray(rho_d))))
    if not residual > tol:
        raise NotStabilizable("target commutes with M + M^dag; it cannot be made attractive", residual)
    W = _completion(psi)
    Mt = dag(W) @ M @ W
    Ht = dag(W) @ H @ W
    Ma = 0.5 * (Mt - dag(Mt))
    Ft = np.zeros((2, 2), dtype=complex)
    Ft[1, 0] = -1j * Mt[1, 0]
    Ft[0, 1] = np.conj(Ft[1, 0])
    Ft[0, 0] = np.real(-1j * Ma[0, 0])
    Ft[1, 1] = np.real(-1j * Ma[1, 1])
    Lt = Mt - 1j * Ft
    Hp = Ht + 0.5 * (Ft @ Mt + dag(Mt) @ Ft)
    x = -0.5j * np.conj(Lt[0, 0]) * Lt[0, 1] - Hp[0, 1]
    Hct = np.array([[0, x], [np.conj(x), 0]], dtype=complex)
    F = hermitian_part(W @ Ft @ dag(W))
    Hc = hermitian_part(W @ Hct @ dag(W))
    design = FeedbackDesign(M, F, H, Hc, 1.0, W)
    inv, att = _closed_loop_checks(design, SpaceDecomposition.from_subspace(psi))
    if not (inv.holds and att.holds):
        raise NotStabilizable(
            f"closed loop failed certification (invariant: {inv.verdict}, attractive: {att.verdict})", residual)
    return design


def design_ladder_stabilizer(d: int, m, H=None) -> FeedbackDesign:
    """Stabilizer of diag(1, 0, ..., 0) through a nearest-neighbour measurement ladder.

    M is real symmetric tridiagonal with off-diagonal m_i/2 and F carries
    +-i m_i/2, so that L = M - iF has l_{i,i+1} = m_i and no other entries.
    For d >= 3 the term (FM + M^dag F)/2 couples levels two apart; the
    compensation cancels it so the closed-loop Hamiltonian stays H.
    """
    m = np.asarray(m, dtype=float).ravel()
    if d < 2 or m.shape != (d - 1,):
        raise DimensionError(f"need d >= 2 and {d - 1} couplings, got d={d}, {m.shape[0]} couplings")
    if np.any(m == 0):
        raise ZeroCoupling(f"couplings must be nonzero, got {m.tolist()}")
    H = np.zeros((d, d), dtype=complex) if H is None else _square(H, "H")
    if H.shape != (d, d):
        raise DimensionError(f"H must be {d}x{d}")
    if np.max(np.abs(H - np.diag(np.diag(H)))) > TOL_ALG:
        raise DimensionError("ladder design expects a diagonal Hamiltonian")
    M = np.zeros((d, d), dtype=complex)
    F = np.zeros((d, d), dtype=complex)
    i = np.arange(d - 1)
    M[i, i + 1] = M[i + 1, i] = m / 2
    F[i, i + 1] = 1j * m / 2
    F[i + 1, i] = -1j * m / 2
    Hc = -hermitian_part(0.5 * (F @ M + dag(M) @ F))
    return FeedbackDesign(M, F, H, Hc, 1.0, np.eye(d, dtype=complex))


def compensation_for_invariance(model: Model, decomp: SpaceDecomposition, tol_alg: float = TOL_ALG) -> np.ndarray:
    """Constant Hamiltonian on the P/Q blocks that restores invariance.

    Solves i (H + H_c)_P - 1/2 sum_k g_k L_SF,k^dag L_P,k = 0; every other
    invariance condition must already hold, otherwise NotCompensable.
    """
    lm = _as_lindblad(model)
    if lm.dim != decomp.dim:
        raise DimensionError("model and decomposition dimensions differ")
    rep = check_invariance(lm, decomp, tol_alg)
    others = [w for w in rep.witnesses if w.condition != "mixed_H_P"]
    if others:
        worst = max(w.residual for w in others)
        names = sorted({w.condition for w in others})
        raise NotCompensable(f"conditions {names} fail; a Hamiltonian correction cannot fix them", worst)
    bl = _lindblad_blocks(lm, decomp)
    k = decomp.sf_dim
    X = -bl.H.p
    for g, b in zip(bl.weights, bl.ops):
        X = X - 0.5j * g * dag(b.sf) @ b.p
    Y = np.zeros((decomp.dim, decomp.dim), dtype=complex)
    Y[:k, k:] = X
    Y[k:, :k] = dag(X)
    Hc = hermitian_part(decomp.from_adapted(Y))
    after = check_invariance(lm.with_hamiltonian(lm.H + Hc), decomp, tol_alg)
    if not after.holds:
        raise NotCompensable("compensated model still violates invariance",
                             max(w.residual for w in after.witnesses))
    return Hc


@dataclass
class DFSSynthesis:
    """Result of ``synthesize_dfs``; unpacks as ``(decomp, F, c_prime, report)``.

    ``design`` is the closed-loop feedback design. Its measurement operator is
    M - c_prime I (a constant offset of the homodyne current) and its H_c
    removes the coupling of the closed-loop Hamiltonian between the DFS and
    its complement.
    """

    decomp: SpaceDecomposition
    F: np.ndarray
    c_prime: float
    report: SubsystemReport
    design: FeedbackDesign
    compression_residual: float

    def __iter__(self):
        return iter((self.decomp, self.F, self.c_prime, self.report))

    @property
    def dfs_vectors(self) -> np.ndarray:
        return self.decomp.basis_change[:, : self.decomp.n]


def _fix_phases(vecs: np.ndarray) -> np.ndarray:
    """Make the first non-negligible entry of every column real and positive."""
    out = vecs.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        k = int(np.argmax(np.abs(col) > 1e-8 * np.max(np.abs(col))))
        out[:, j] = col * (abs(col[k]) / col[k])
    return out


def _pair_vectors(vals: np.ndarray, vecs: np.ndarray, tol: float):
    """DFS and complement vectors with common compressed eigenvalue c'."""
    d = vals.shape[0]
    h = d // 2
    c = 0.5 * (vals[h - 1] + vals[h]) if d % 2 == 0 else vals[h]
    dfs, rest = [], []
    for a in range(h):
        b = d - 1 - a
        di, dj = vals[a], vals[b]
        ui, uj = vecs[:, a], vecs[:, b]
        if di - dj <= tol:
            dfs += [ui, uj] if abs(di - c) <= tol and abs(dj - c) <= tol else [ui]
            if not (abs(di - c) <= tol and abs(dj - c) <= tol):
                rest.append(uj)
            continue
        alpha = np.sqrt(np.clip((c - dj) / (di - dj), 0.0, 1.0))
        beta = np.sqrt(1.0 - alpha ** 2)
        dfs.append(alpha * ui + beta * uj)
        rest.append(-beta * ui + alpha * uj)
    if d % 2:
        dfs.append(vecs[:, h])
    return float(c), dfs, rest


def synthesize_dfs(M, H, tol: float = TOL_ALG) -> DFSSynthesis:
    """Feedback that turns a subspace of dimension >= ceil(d/2) into a gamma-robust DFS.

    Eigenvectors of M^H (descending eigenvalues) are paired first-with-last and
    mixed so that M^H compresses to c' I on their span. F cancels the
    DFS-to-complement block of M - iF and the anti-Hermitian part of M on the
    DFS, leaving L_DFS = c' I; the current offset M -> M - c' I and a
    constant compensation then make the DFS gamma-robust.
    """
    M = _square(M, "M")
    H = _square(H, "H")
    d = M.shape[0]
    if d < 2 or H.shape != (d, d):
        raise DimensionError("synthesize_dfs needs d >= 2 and matching H")
    scale = max(1.0, float(np.linalg.norm(M, 2)))
    Mh = hermitian_part(M)
    vals, vecs = np.linalg.eigh(Mh)
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], _fix_phases(vecs[:, order])
    c, dfs, rest = _pair_vectors(vals, vecs, 1e-12 * scale)
    V = np.column_stack(dfs + rest)
    decomp = SpaceDecomposition(len(dfs), 1, d - len(dfs), V)
    p = decomp.n

    Mt = decomp.to_adapted(M)
    Ma = 0.5 * (Mt - dag(Mt))
    Ft = np.zeros((d, d), dtype=complex)
    Ft[:p, :p] = -1j * Ma[:p, :p]
    Ft[p:, :p] = -1j * Mt[p:, :p]
    Ft[:p, p:] = dag(Ft[p:, :p])
    Ft[p:, p:] = -1j * Ma[p:, p:]
    F = hermitian_part(decomp.from_adapted(Ft))

    compression = float(np.linalg.norm(decomp.to_adapted(Mh)[:p, :p] - c * np.eye(p)))
    Ms = M - c * np.eye(d)
    Hp = H + 0.5 * (F @ Ms + dag(Ms) @ F)
    Hb = block_decompose(Hp, decomp)
    Y = np.zeros((d, d), dtype=complex)
    Y[:p, p:] = -Hb.p
    Y[p:, :p] = -Hb.q
    Hc = hermitian_part(decomp.from_adapted(Y))
    design = FeedbackDesign(Ms, F, H, Hc, 1.0, V)
    report = check_dfs_gamma_robust(build_fme(design), V[:, :p])
    if not report.holds or compression > 1e3 * tol * scale:
        raise InternalInconsistency(
            f"synthesized DFS failed certification (verdict {report.verdict}, compression {compression:.3e})")
    return DFSSynthesis(decomp, F, c, report, design, compression)
