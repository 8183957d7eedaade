"""Algebraic certificates for subsystem properties of a Markovian generator.

Every check evaluates a list of matrix residuals on the blocks of H and of
the noise operators in the adapted basis of a ``SpaceDecomposition`` and
compares them against ``tol_alg * max(1, ||model||)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DecompositionError,
    DimensionError,
    InternalInconsistency,
    InvarianceError,
    ModeError,
    NoStationaryState,
)
from .generator import GKSModel, LindbladModel, Model, apply, gks_to_lindblad, stationary_states, superoperator
from .linquant import (
    TOL_ALG,
    TOL_PSD,
    SpaceDecomposition,
    block_decompose,
    dag,
    f_side_projection,
    local_split,
    operator_schmidt,
    partial_trace,
    s_side_projection,
)

PROPERTIES = (
    "invariant",
    "invariant_A_robust",
    "invariant_gamma_robust",
    "ns",
    "ns_A_robust",
    "ns_gamma_robust",
    "ns_initialization_free",
    "dfs_gamma_robust",
    "attractive_sufficient",
    "not_attractive_obstruction",
)
MODES = ("A_robust", "gamma_robust")


@dataclass
class Witness:
    condition: str
    channel: int | None
    residual: float

    def as_tuple(self):
        return (self.condition, self.channel, self.residual)


@dataclass
class SubsystemReport:
    """Outcome of one certificate.

    ``residuals`` holds every evaluated condition; ``witnesses`` only those
    above ``tolerance``. ``verdict`` is ``holds`` iff there are no witnesses,
    unless the check is inconclusive.
    """

    property: str
    verdict: str
    witnesses: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    tolerance: float = TOL_ALG
    details: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.verdict == "holds"

    def to_dict(self) -> dict:
        return {
            "property": self.property,
            "verdict": self.verdict,
            "tolerance": self.tolerance,
            "witnesses": [
                {"condition": w.condition, "channel": w.channel, "residual": w.residual}
                for w in self.witnesses
            ],
            "max_residual": max((w.residual for w in self.residuals), default=0.0),
            "details": {k: v for k, v in self.details.items() if _jsonable(v)},
        }


def _jsonable(v) -> bool:
    return v is None or isinstance(v, (bool, int, float, str))


def _finish(prop: str, residuals: list, tol: float, **details) -> SubsystemReport:
    bad = [w for w in residuals if not w.residual <= tol]
    return SubsystemReport(prop, "fails" if bad else "holds", bad, residuals, tol, dict(details))


def _tolerance(model: Model, tol_alg: float) -> float:
    return tol_alg * max(1.0, model.norm)


def _as_lindblad(model: Model) -> LindbladModel:
    return gks_to_lindblad(model) if isinstance(model, GKSModel) else model


def _check_dims(model: Model, decomp: SpaceDecomposition):
    if model.dim != decomp.dim:
        raise DimensionError(f"model dimension {model.dim} does not match decomposition dimension {decomp.dim}")


def _norm(x: np.ndarray) -> float:
    return float(np.linalg.norm(x)) if x.size else 0.0


class _Blocks:
    """Block views of H and of a list of operators, with per-operator weights."""

    def __init__(self, H, ops, weights, decomp: SpaceDecomposition):
        self.decomp = decomp
        self.n, self.f, self.r = decomp.n, decomp.f, decomp.r
        self.H = block_decompose(H, decomp)
        self.ops = [block_decompose(L, decomp) for L in ops]
        self.weights = list(weights)

    def side_residuals(self, L_sf: np.ndarray) -> tuple[float, float]:
        """Distances of L_SF from the S (x) I and I (x) F operator subspaces."""
        n, f = self.n, self.f
        return (
            _norm(L_sf - s_side_projection(L_sf, n, f)),
            _norm(L_sf - f_side_projection(L_sf, n, f)),
        )

    def hamiltonian_split(self) -> Witness:
        return Witness("H_SF_local", None, local_split(self.H.sf, self.n, self.f)[2])

    def h_p_zero(self) -> Witness:
        return Witness("H_P_zero", None, _norm(self.H.p))

    def q_zero(self) -> list:
        return [Witness("L_Q_zero", k, _norm(b.q)) for k, b in enumerate(self.ops)]

    def mixed(self, sf_ops=None) -> Witness:
        """Residual of i H_P - 1/2 sum_k g_k L_SF,k^dag L_P,k."""
        acc = 1j * self.H.p
        for k, (g, b) in enumerate(zip(self.weights, self.ops)):
            sf = b.sf if sf_ops is None else sf_ops[k]
            acc = acc - 0.5 * g * dag(sf) @ b.p
        return Witness("mixed_H_P", None, _norm(acc))


def _lindblad_blocks(model: LindbladModel, decomp) -> _Blocks:
    return _Blocks(model.H, model.operators, model.gammas, decomp)


# --------------------------------------------------------------------------- invariance and NS


def check_invariance(model: Model, decomp: SpaceDecomposition, tol_alg: float = TOL_ALG) -> SubsystemReport:
    """Plain Markovian invariance of the S factor."""
    _check_dims(model, decomp)
    model = _as_lindblad(model)
    bl = _lindblad_blocks(model, decomp)
    res = bl.q_zero()
    for k, b in enumerate(bl.ops):
        rs, rf = bl.side_residuals(b.sf)
        res.append(Witness("L_SF_factorized", k, min(rs, rf)))
    res += [bl.hamiltonian_split(), bl.mixed()]
    return _finish("invariant", res, _tolerance(model, tol_alg))


def check_ns(model: Model, decomp: SpaceDecomposition, tol_alg: float = TOL_ALG) -> SubsystemReport:
    """Markovian noiseless-subsystem conditions (noise acts on the co-factor only)."""
    _check_dims(model, decomp)
    model = _as_lindblad(model)
    bl = _lindblad_blocks(model, decomp)
    res = bl.q_zero()
    for k, b in enumerate(bl.ops):
        res.append(Witness("L_SF_identity_on_NS", k, bl.side_residuals(b.sf)[1]))
    res += [bl.hamiltonian_split(), bl.mixed()]
    return _finish("ns", res, _tolerance(model, tol_alg))


def _robust_operators(model: Model, mode: str):
    if mode not in MODES:
        raise ModeError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "A_robust":
        if not isinstance(model, GKSModel):
            raise ModeError("A_robust certification needs a GKS model with an explicit operator basis")
        return model, list(model.basis), [1.0] * model.basis.shape[0]
    lm = _as_lindblad(model)
    return lm, lm.operators, list(lm.gammas)


def _cross_terms(bl: _Blocks, mode: str, sf_of) -> list:
    """Residuals of F_P,k^dag F_SF,j over all pairs (A_robust) or j == k."""
    out = []
    m = len(bl.ops)
    for k in range(m):
        js = range(m) if mode == "A_robust" else (k,)
        for j in js:
            r = _norm(dag(bl.ops[k].p) @ sf_of(j))
            out.append(Witness("L_P_cross" if j == k else f"L_P_cross[{j}]", k, r))
    return out


def check_invariance_robust(model: Model, decomp: SpaceDecomposition, mode: str = "gamma_robust",
                            tol_alg: float = TOL_ALG) -> SubsystemReport:
    """A-robust (all GKS matrices) or gamma-robust (all rates) invariance."""
    _check_dims(model, decomp)
    base, ops, weights = _robust_operators(model, mode)
    bl = _Blocks(base.H, ops, weights, decomp)
    tol = _tolerance(model, tol_alg)
    common = bl.q_zero() + [bl.hamiltonian_split(), bl.h_p_zero()]
    common += _cross_terms(bl, mode, lambda j: bl.ops[j].sf)
    sides = [bl.side_residuals(b.sf) for b in bl.ops]
    prop = "invariant_A_robust" if mode == "A_robust" else "invariant_gamma_robust"
    if mode == "gamma_robust":
        fac = [Witness("L_SF_factorized", k, min(s)) for k, s in enumerate(sides)]
        return _finish(prop, common + fac, tol)
    # one identity side shared by every basis operator
    best = None
    for side, label in ((0, "S_tensor_I"), (1, "I_tensor_F")):
        fac = [Witness(f"F_SF_{label}", k, s[side]) for k, s in enumerate(sides)]
        rep = _finish(prop, common + fac, tol, side=label)
        if rep.holds:
            return rep
        if best is None or len(rep.witnesses) < len(best.witnesses):
            best = rep
    return best


def check_ns_robust(model: Model, decomp: SpaceDecomposition, mode: str = "gamma_robust",
                    tol_alg: float = TOL_ALG) -> SubsystemReport:
    _check_dims(model, decomp)
    base, ops, weights = _robust_operators(model, mode)
    bl = _Blocks(base.H, ops, weights, decomp)
    n, f = decomp.n, decomp.f
    ns_part = [f_side_projection(b.sf, n, f) for b in bl.ops]
    res = bl.q_zero() + [bl.hamiltonian_split(), bl.h_p_zero()]
    res += [Witness("L_SF_identity_on_NS", k, _norm(b.sf - p)) for k, (b, p) in enumerate(zip(bl.ops, ns_part))]
    res += _cross_terms(bl, mode, lambda j: ns_part[j])
    prop = "ns_A_robust" if mode == "A_robust" else "ns_gamma_robust"
    return _finish(prop, res, _tolerance(model, tol_alg))


def check_ns_initialization_free(model: Model, decomp: SpaceDecomposition,
                                 tol_alg: float = TOL_ALG) -> SubsystemReport:
    """NS whose behaviour does not depend on the P, Q and R blocks of the initial state."""
    _check_dims(model, decomp)
    model = _as_lindblad(model)
    bl = _lindblad_blocks(model, decomp)
    res = bl.q_zero()
    res += [Witness("L_P_zero", k, _norm(b.p)) for k, b in enumerate(bl.ops)]
    res += [Witness("L_SF_identity_on_NS", k, bl.side_residuals(b.sf)[1]) for k, b in enumerate(bl.ops)]
    res += [bl.h_p_zero(), bl.hamiltonian_split()]
    return _finish("ns_initialization_free", res, _tolerance(model, tol_alg))


# --------------------------------------------------------------------------- DFS


def check_dfs_gamma_robust(model: Model, vectors, tol_alg: float = TOL_ALG) -> SubsystemReport:
    """gamma-robust DFS test on span(vectors), evaluated in two equivalent forms.

    The block form asks for H_P = 0, L_k = [[c_k I, L_P,k], [0, L_R,k]] and
    L_P,k = 0 whenever c_k != 0. The eigenvector form asks each basis vector
    to be a joint eigenvector of L_k (eigenvalue c_k) and of L_k^dag L_k
    (eigenvalue |c_k|^2). Disagreement raises InternalInconsistency.
    """
    model = _as_lindblad(model)
    v = np.asarray(vectors, dtype=complex)
    v = v[:, None] if v.ndim == 1 else v
    decomp = SpaceDecomposition.from_subspace(v, dim=model.dim)
    _check_dims(model, decomp)
    tol = _tolerance(model, tol_alg)
    bl = _lindblad_blocks(model, decomp)
    p = decomp.n
    V = decomp.basis_change[:, :p]
    hp = bl.h_p_zero()

    block, eig, cs = [hp], [hp], []
    for k, (b, L) in enumerate(zip(bl.ops, model.operators)):
        c = np.trace(b.sf) / p
        cs.append(c)
        block.append(Witness("L_Q_zero", k, _norm(b.q)))
        block.append(Witness("L_SF_scalar", k, _norm(b.sf - c * np.eye(p))))
        block.append(Witness("L_P_zero_if_c", k, _norm(c * b.p)))
        cols = L @ V - c * V
        eig.append(Witness("eigen_L", k, _norm(cols)))
        cols2 = dag(L) @ (L @ V) - abs(c) ** 2 * V
        eig.append(Witness("eigen_LdagL", k, _norm(cols2)))

    rb = _finish("dfs_gamma_robust", block, tol, form="block")
    re = _finish("dfs_gamma_robust", eig, tol, form="eigenvector")
    if rb.holds != re.holds:
        worst = max(w.residual for w in (rb.witnesses or re.witnesses))
        # forms straddling the threshold by rounding are not a bug
        if worst > 10 * tol:
            raise InternalInconsistency(
                f"block form says {rb.verdict}, eigenvector form says {re.verdict} (residual {worst:.3e})"
            )
    out = rb if not rb.holds else re
    out.details = {"form_agreement": rb.holds == re.holds, "block_verdict": rb.verdict,
                   "eigenvector_verdict": re.verdict}
    out.details["c"] = [complex(c) for c in cs]
    out.residuals = block + eig[1:]
    return out


# --------------------------------------------------------------------------- attractivity


def factor_generator(model: Model, decomp: SpaceDecomposition) -> LindbladModel:
    """Co-factor generator tr_S(Pi L(I/n (x) rho_F) Pi) for a decomposition with invariant S.

    Under the invariance conditions every L_SF,k acts on one side only, so
    the co-factor dynamics is the Lindblad model with Hamiltonian H_F and
    channels tr_S(L_SF,k)/n (S-side channels collapse to multiples of I).
    """
    model = _as_lindblad(model)
    n, f = decomp.n, decomp.f
    bl = _lindblad_blocks(model, decomp)
    _, h_f, _ = local_split(bl.H.sf, n, f)
    chans = tuple((g, partial_trace(b.sf, "over_S", n, f) / n) for g, b in zip(bl.weights, bl.ops))
    return LindbladModel(0.5 * (h_f + dag(h_f)), chans)


def _factor_relaxing(model, decomp):
    if decomp.f == 1:
        return True
    return stationary_states(factor_generator(model, decomp)).unique


def _spectral_attraction(model: LindbladModel, decomp: SpaceDecomposition, tol: float) -> bool:
    """Unique stationary state, all other modes decaying, and that state initialized."""
    S = superoperator(model)
    ev = np.linalg.eigvals(S)
    order = np.argsort(np.abs(ev))
    scale = max(1.0, float(np.max(np.abs(ev))))
    if abs(ev[order[0]]) > 1e-9 * scale or np.max(ev[order[1:]].real, initial=-np.inf) >= -1e-9 * scale:
        return False
    try:
        st = stationary_states(model)
    except NoStationaryState:
        return False
    if not st.unique:
        return False
    b = block_decompose(st.states[0], decomp)
    if _norm(b.p) > tol or _norm(b.r) > tol:
        return False
    if decomp.f == 1:
        return True
    terms = [t.weight for t in operator_schmidt(b.sf, decomp.n, decomp.f)]
    return len([w for w in terms if w > tol]) == 1


def check_attractivity(model: Model, decomp: SpaceDecomposition, tol_alg: float = TOL_ALG,
                       tol_psd: float = TOL_PSD) -> SubsystemReport:
    """Sufficient tests for attractivity, plus the block-diagonal-noise obstruction.

    ``details["attractive"]`` is True, False or None (undecided).
    """
    _check_dims(model, decomp)
    lm = _as_lindblad(model)
    tol = _tolerance(lm, tol_alg)
    inv = check_invariance(lm, decomp, tol_alg)
    if not inv.holds:
        return SubsystemReport("attractive_sufficient", "inconclusive", inv.witnesses, inv.residuals, tol,
                               {"attractive": None, "reason": "subsystem is not invariant"})
    bl = _lindblad_blocks(lm, decomp)
    r = decomp.r

    if r > 0:
        decoupled = [Witness("L_P_zero", k, _norm(b.p)) for k, b in enumerate(bl.ops)]
        decoupled += [Witness("L_Q_zero", k, _norm(b.q)) for k, b in enumerate(bl.ops)]
        if all(w.residual <= tol for w in decoupled):
            return SubsystemReport("not_attractive_obstruction", "holds", [], decoupled, tol,
                                   {"attractive": False, "rule": "block_diagonal_noise"})
        pump = sum((g * dag(b.p) @ b.p for g, b in zip(bl.weights, bl.ops)), np.zeros((r, r), complex))
        lam = float(np.linalg.eigvalsh(0.5 * (pump + dag(pump)))[0])
        w = Witness("pumping_full_rank", None, max(0.0, tol_psd - lam))
        if lam > tol_psd:
            if decomp.f == 1:
                return SubsystemReport("attractive_sufficient", "holds", [], [w], tol,
                                       {"attractive": True, "rule": "full_rank_pumping", "min_pumping": lam})
            if _factor_relaxing(lm, decomp):
                return SubsystemReport("attractive_sufficient", "holds", [], [w], tol,
                                       {"attractive": True, "rule": "full_rank_pumping_relaxing_factor",
                                        "min_pumping": lam})
        if _spectral_attraction(lm, decomp, tol):
            return SubsystemReport("attractive_sufficient", "holds", [], [w], tol,
                                   {"attractive": True, "rule": "unique_initialized_steady_state",
                                    "min_pumping": lam})
        return SubsystemReport("attractive_sufficient", "inconclusive", [w], [w], tol,
                               {"attractive": None, "min_pumping": lam})

    if _factor_relaxing(lm, decomp):
        return SubsystemReport("attractive_sufficient", "holds", [], [], tol,
                               {"attractive": True, "rule": "relaxing_factor"})
    if check_ns(lm, decomp, tol_alg).holds:
        return SubsystemReport("attractive_sufficient", "fails", [Witness("factor_not_relaxing", None, 1.0)], [],
                               tol, {"attractive": False, "rule": "multiple_factor_states"})
    if _spectral_attraction(lm, decomp, tol):
        return SubsystemReport("attractive_sufficient", "holds", [], [], tol,
                               {"attractive": True, "rule": "unique_initialized_steady_state"})
    return SubsystemReport("attractive_sufficient", "inconclusive", [], [], tol,
                           {"attractive": None, "reason": "factor generator not relaxing and not an NS"})


def pumping_rate(model: Model, rho, decomp: SpaceDecomposition, tol_alg: float = TOL_ALG) -> float:
    """Rate of change of the remainder population, trace(Pi_R L(rho)).

    Cross-checked against -trace(sum_k g_k L_P,k^dag L_P,k rho_R), which holds
    whenever the subspace is invariant; a mismatch raises InvarianceError.
    """
    if decomp.f != 1:
        raise DecompositionError("pumping rate is defined for subspace decompositions (f = 1)")
    _check_dims(model, decomp)
    lm = _as_lindblad(model)
    rho = np.asarray(rho, dtype=complex)
    if decomp.r == 0:
        return 0.0
    direct = float(np.real(np.trace(decomp.projector_r() @ apply(lm, rho))))
    bl = _lindblad_blocks(lm, decomp)
    rho_r = block_decompose(rho, decomp).r
    formula = -float(np.real(sum(g * np.trace(dag(b.p) @ b.p @ rho_r) for g, b in zip(bl.weights, bl.ops))))
    if abs(direct - formula) > _tolerance(lm, tol_alg) * max(1.0, np.linalg.norm(rho)):
        raise InvarianceError(f"pumping identity violated: {direct:.6e} vs {formula:.6e}; subspace not invariant")
    return direct
