"""Deterministic and stochastic time evolution, feedback master equations and Lyapunov monitoring."""
from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, GridMismatch, StateInvariantViolation
from .generator import LindbladModel, Model, apply, superoperator, unvec, vec
from .linquant import TOL_ALG, SpaceDecomposition, _square, dag, hermitian_part, to_bloch, validate_density

TOL_TRAJ = 1e-6
ABORT_EIG = -100 * TOL_TRAJ
SUPEROP_MAX_DIM = 16
CHUNK = 250


# --------------------------------------------------------------------------- records


@dataclass
class TrajectoryRecord:
    """States on a time grid, with optional homodyne current increments.

    ``current_increments[j]`` is dY over ``[times[j], times[j+1]]``.
    """

    times: np.ndarray
    states: np.ndarray
    current_increments: np.ndarray | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.states.shape[-1]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def bloch(self) -> np.ndarray:
        """Coordinates in ``hermitian_basis``; column 0 is trace/sqrt(d)."""
        return to_bloch(self.states)

    def trace_drift(self) -> float:
        return float(np.max(np.abs(np.einsum("tii->t", self.states) - 1.0)))

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(hermitian_part(self.states))))

    def validate(self, tol: float = TOL_TRAJ) -> None:
        for rho in self.states:
            validate_density(rho, tol_alg=tol, tol_psd=tol)

    def to_csv(self, path, include_current: bool | None = None) -> None:
        """Write ``time, b0..b{d^2-1}[, dY]``; dY is empty on the first row."""
        b = self.bloch()
        include_current = self.current_increments is not None if include_current is None else include_current
        header = ["time"] + [f"b{k}" for k in range(b.shape[1])]
        if include_current:
            header.append("dY")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for j, t in enumerate(self.times):
                row = [repr(float(t))] + [repr(float(x)) for x in b[j]]
                if include_current:
                    row.append("" if j == 0 else repr(float(self.current_increments[j - 1])))
                w.writerow(row)


def _grid(t_final: float, dt: float) -> tuple[int, np.ndarray]:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not t_final >= dt * (1 - 1e-12):
        raise ValueError(f"t_final ({t_final}) must be at least dt ({dt})")
    steps = int(round(t_final / dt))
    return steps, dt * np.arange(steps + 1)


def _initial_state(rho0, d: int) -> np.ndarray:
    rho0 = _square(rho0, "initial state")
    if rho0.shape[0] != d:
        raise DimensionError(f"initial state is {rho0.shape[0]}-dimensional, model is {d}")
    return validate_density(rho0)


# --------------------------------------------------------------------------- deterministic


def integrate_master(model: Model, rho0, t_final: float, dt: float) -> TrajectoryRecord:
    """Fixed-step RK4 for d rho/dt = L(rho).

    States are replaced by their Hermitian part after each step but are not
    renormalized, so ``trace_drift`` measures integration error.
    """
    d = model.dim
    rho = _initial_state(rho0, d)
    steps, times = _grid(t_final, dt)
    out = np.empty((steps + 1, d, d), dtype=complex)
    out[0] = rho
    if d <= SUPEROP_MAX_DIM:
        S = superoperator(model)
        f = lambda x: unvec(S @ vec(x), d)
    else:
        f = lambda x: apply(model, x)
    for j in range(steps):
        k1 = f(rho)
        k2 = f(rho + 0.5 * dt * k1)
        k3 = f(rho + 0.5 * dt * k2)
        k4 = f(rho + dt * k3)
        rho = hermitian_part(rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
        lam = np.linalg.eigvalsh(rho)[0]
        if lam < ABORT_EIG or not np.isfinite(lam):
            raise StateInvariantViolation(
                f"state left the positive cone at t={times[j + 1]:.6g} (min eigenvalue {lam:.3e})",
                time=times[j + 1], min_eigenvalue=lam)
        out[j + 1] = rho
    return TrajectoryRecord(times, out)


# --------------------------------------------------------------------------- feedback designs


@dataclass(frozen=True, eq=False)
class FeedbackDesign:
    """Measurement operator M, feedback Hamiltonian F, free Hamiltonian H, compensation H_c, efficiency eta.

    ``basis_change`` optionally records the unitary whose first column(s)
    span the target of a synthesized design.
    """

    M: np.ndarray
    F: np.ndarray
    H: np.ndarray
    H_c: np.ndarray | None = None
    eta: float = 1.0
    basis_change: np.ndarray | None = None

    def __post_init__(self):
        M = _square(self.M, "M")
        d = M.shape[0]
        mats = {}
        for name in ("F", "H", "H_c"):
            x = getattr(self, name)
            x = np.zeros((d, d), complex) if x is None else _square(x, name)
            if x.shape != (d, d):
                raise DimensionError(f"{name} has shape {x.shape}, expected {(d, d)}")
            if np.max(np.abs(x - dag(x))) > TOL_ALG:
                raise DimensionError(f"{name} must be Hermitian")
            mats[name] = x
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        object.__setattr__(self, "M", M)
        for k, v in mats.items():
            object.__setattr__(self, k, v)
        object.__setattr__(self, "eta", float(self.eta))

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    def with_eta(self, eta: float) -> "FeedbackDesign":
        return FeedbackDesign(self.M, self.F, self.H, self.H_c, eta, self.basis_change)

    def with_compensation(self, H_c) -> "FeedbackDesign":
        return FeedbackDesign(self.M, self.F, self.H, H_c, self.eta, self.basis_change)


def build_fme(design: FeedbackDesign) -> LindbladModel:
    """Unconditional closed-loop generator of a Markovian feedback design.

    Hamiltonian H + H_c + (FM + M^dag F)/2 and channel M - iF; for eta < 1 an
    extra channel F with rate (1 - eta)/eta.
    """
    M, F = design.M, design.F
    Hp = design.H + design.H_c + 0.5 * (F @ M + dag(M) @ F)
    chans = [(1.0, M - 1j * F)]
    if design.eta < 1:
        chans.append(((1 - design.eta) / design.eta, F))
    return LindbladModel(hermitian_part(Hp), tuple(chans))


def sme_drift_superoperator(design: FeedbackDesign) -> np.ndarray:
    """Superoperator of the Ito drift of the conditional feedback equation.

    F(H + H_c) + D(M) + F(F, M rho + rho M^dag) + F^2(F)/(2 eta), written term by term.
    """
    d = design.dim
    I = np.eye(d)
    M, F = design.M, design.F
    ham = lambda X: -1j * (np.kron(I, X) - np.kron(X.T, I))
    left = lambda X: np.kron(I, X)
    right = lambda X: np.kron(X.T, I)
    S = ham(design.H + design.H_c)
    MdM = dag(M) @ M
    S = S + np.kron(M.conj(), M) - 0.5 * left(MdM) - 0.5 * right(MdM)
    S = S + ham(F) @ (left(M) + right(dag(M)))
    S = S + 0.5 / design.eta * ham(F) @ ham(F)
    return S


# --------------------------------------------------------------------------- stochastic


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent counter-based stream for trajectory ``index`` of run ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


def _batch_dag(x):
    return np.conj(np.swapaxes(x, -1, -2))


def _batch_trace(x):
    return np.real(np.einsum("nii->n", x))


class _Stepper:
    """One-step maps of the conditional state for a batch of trajectories."""

    def __init__(self, design: FeedbackDesign, dt: float, scheme: str):
        if scheme not in ("kraus", "euler"):
            raise ValueError(f"scheme must be 'kraus' or 'euler', got {scheme!r}")
        self.scheme = scheme
        self.dt = dt
        self.eta = design.eta
        d = design.dim
        self.M = design.M
        self.Md = dag(design.M)
        self.F = design.F
        Hfree = design.H + design.H_c
        self.H = Hfree
        self.K0 = np.eye(d) - 1j * Hfree * dt - 0.5 * self.Md @ self.M * dt
        self.fvals, self.fvecs = np.linalg.eigh(design.F)
        self.fvecs_d = dag(self.fvecs)

    def expectation(self, rho):
        # tr(M rho + rho M^dag) = 2 Re tr(M rho)
        return 2 * np.real(np.einsum("ij,nji->n", self.M, rho))

    def step(self, rho, dw):
        eta, dt = self.eta, self.dt
        ex = self.expectation(rho)
        dy = eta * ex * dt + np.sqrt(eta) * dw
        if self.scheme == "kraus":
            rho = self._kraus(rho, ex, dw)
        else:
            rho = self._euler(rho, ex, dw)
        rho = 0.5 * (rho + _batch_dag(rho))
        rho = rho / _batch_trace(rho)[:, None, None]
        return rho, dy

    def _kraus(self, rho, ex, dw):
        eta, dt = self.eta, self.dt
        dyhat = np.sqrt(eta) * ex * dt + dw
        K = self.K0[None] + np.sqrt(eta) * dyhat[:, None, None] * self.M[None]
        new = K @ rho @ _batch_dag(K)
        if eta < 1:
            new = new + (1 - eta) * dt * (self.M @ rho @ self.Md)
        new = new / _batch_trace(new)[:, None, None]
        # feedback kick exp(-i F dY / eta), dY/eta = tr(...) dt + dW / sqrt(eta)
        theta = ex * dt + dw / np.sqrt(eta)
        ph = np.exp(-1j * theta[:, None] * self.fvals[None, :])
        U = (self.fvecs[None] * ph[:, None, :]) @ self.fvecs_d[None]
        return U @ new @ _batch_dag(U)

    def _euler(self, rho, ex, dw):
        eta, dt = self.eta, self.dt
        M, Md, F, H = self.M, self.Md, self.F, self.H
        comm = lambda X, r: -1j * (X @ r - r @ X)
        Mr = M @ rho + rho @ Md
        drift = comm(H, rho) + M @ rho @ Md - 0.5 * (Md @ M @ rho + rho @ Md @ M)
        drift = drift + comm(F, Mr) + 0.5 / eta * comm(F, comm(F, rho))
        diff = np.sqrt(eta) * (Mr - ex[:, None, None] * rho) + comm(F, rho) / np.sqrt(eta)
        new = rho + drift * dt + diff * dw[:, None, None]
        new = 0.5 * (new + _batch_dag(new))
        lam, vecs = np.linalg.eigh(new)
        low = lam.min(axis=1)
        bad = low < -TOL_TRAJ
        if np.any(bad):
            raise StateInvariantViolation(
                f"Euler-Maruyama step produced eigenvalue {low[bad].min():.3e}", min_eigenvalue=float(low[bad].min()))
        clip = low < 0
        if np.any(clip):
            lam_c = np.clip(lam[clip], 0.0, None)
            new[clip] = (vecs[clip] * lam_c[:, None, :]) @ _batch_dag(vecs[clip])
        return new


def _run_chunk(design: FeedbackDesign, rho0: np.ndarray, steps: int, dt: float, seed: int,
               indices: Sequence[int], scheme: str, keep: int):
    """Simulate trajectories ``indices``; return sums over the chunk and kept trajectories."""
    n = len(indices)
    d = design.dim
    noise = np.empty((n, steps))
    for a, i in enumerate(indices):
        noise[a] = trajectory_rng(seed, i).standard_normal(steps)
    noise *= np.sqrt(dt)
    stepper = _Stepper(design, dt, scheme)
    rho = np.repeat(rho0[None], n, axis=0)
    kept_ix = [a for a, i in enumerate(indices) if i < keep]
    sum_states = np.empty((steps + 1, d, d), dtype=complex)
    sum_states[0] = n * rho0
    dys = np.empty((n, steps))
    kept_states = np.empty((len(kept_ix), steps + 1, d, d), dtype=complex)
    if kept_ix:
        kept_states[:, 0] = rho0
    min_eig = np.inf
    for j in range(steps):
        rho, dy = stepper.step(rho, noise[:, j])
        dys[:, j] = dy
        sum_states[j + 1] = rho.sum(axis=0)
        if kept_ix:
            kept_states[:, j + 1] = rho[kept_ix]
        if j % 50 == 49 or j == steps - 1:
            lam = np.linalg.eigvalsh(rho)[:, 0].min()
            min_eig = min(min_eig, lam)
            if lam < -TOL_TRAJ or not np.isfinite(lam):
                raise StateInvariantViolation(
                    f"conditional state left the state set at t={(j + 1) * dt:.6g} (min eigenvalue {lam:.3e})",
                    time=(j + 1) * dt, min_eigenvalue=lam)
    kept = [(indices[a], kept_states[b], dys[a]) for b, a in enumerate(kept_ix)]
    return sum_states, dys.sum(axis=0), (dys ** 2).sum(axis=0), kept, min_eig


def simulate_sme(design: FeedbackDesign, rho0, t_final: float, dt: float, seed: int,
                 scheme: str = "kraus", index: int = 0) -> TrajectoryRecord:
    """One conditional homodyne trajectory with Markovian feedback.

    ``scheme="kraus"`` (default) uses a positivity-preserving split step
    (measurement Kraus update, then the feedback unitary driven by the same
    current increment); ``scheme="euler"`` integrates the Ito equation
    directly with small-eigenvalue clipping.
    """
    rho0 = _initial_state(rho0, design.dim)
    steps, times = _grid(t_final, dt)
    _, _, _, kept, min_eig = _run_chunk(design, rho0, steps, dt, seed, [index], scheme, keep=index + 1)
    _, states, dys = kept[0]
    return TrajectoryRecord(times, states, dys, seed, {"index": index, "scheme": scheme, "min_eigenvalue": min_eig})


@dataclass
class EnsembleResult:
    mean: TrajectoryRecord
    n_trajectories: int
    current_mean: np.ndarray
    current_sq_mean: np.ndarray
    trajectories: list

    def current_standard_error(self) -> np.ndarray:
        var = np.maximum(self.current_sq_mean - self.current_mean ** 2, 0.0)
        return np.sqrt(var / max(self.n_trajectories - 1, 1))


def default_workers() -> int:
    env = os.environ.get("QDSCTL_WORKERS")
    if env:
        return max(1, int(env))
    return 1


def simulate_ensemble(design: FeedbackDesign, rho0, t_final: float, dt: float, seed: int, n_trajectories: int,
                      workers: int | None = None, keep: int = 0, scheme: str = "kraus",
                      chunk: int = CHUNK) -> EnsembleResult:
    """Run trajectories 0..N-1 and reduce them in index order.

    Trajectory i always uses the stream ``trajectory_rng(seed, i)`` and chunk
    boundaries are fixed, so results are bit-identical for any ``workers``.
    The first ``keep`` trajectories are returned in full.
    """
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be positive")
    rho0 = _initial_state(rho0, design.dim)
    steps, times = _grid(t_final, dt)
    chunks = [list(range(a, min(a + chunk, n_trajectories))) for a in range(0, n_trajectories, chunk)]
    workers = default_workers() if workers is None else max(1, int(workers))
    args = [(design, rho0, steps, dt, seed, ix, scheme, keep) for ix in chunks]
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk_star, args))
    else:
        results = [_run_chunk(*a) for a in args]
    d = design.dim
    tot = np.zeros((steps + 1, d, d), dtype=complex)
    dy = np.zeros(steps)
    dy2 = np.zeros(steps)
    kept, min_eig = [], np.inf
    for s, a, b, k, m in results:
        tot += s
        dy += a
        dy2 += b
        kept += k
        min_eig = min(min_eig, m)
    n = n_trajectories
    mean = TrajectoryRecord(times, tot / n, dy / n, seed, {"n_trajectories": n, "scheme": scheme,
                                                          "min_eigenvalue": float(min_eig)})
    trajs = [TrajectoryRecord(times, st, y, seed, {"index": i, "scheme": scheme}) for i, st, y in kept]
    return EnsembleResult(mean, n, dy / n, dy2 / n, trajs)


def _run_chunk_star(a):
    return _run_chunk(*a)


def ensemble_mean(records: Sequence[TrajectoryRecord]) -> TrajectoryRecord:
    """Pointwise average of records on a common grid, folded in input order."""
    if not records:
        raise ValueError("no records to average")
    t0 = records[0].times
    for r in records[1:]:
        if r.times.shape != t0.shape or not np.array_equal(r.times, t0):
            raise GridMismatch("records have different time grids")
        if r.states.shape != records[0].states.shape:
            raise GridMismatch("records have different state shapes")
    acc = np.zeros_like(records[0].states)
    for r in records:
        acc = acc + r.states
    cur = None
    if all(r.current_increments is not None for r in records):
        cur = np.zeros_like(records[0].current_increments)
        for r in records:
            cur = cur + r.current_increments
        cur = cur / len(records)
    return TrajectoryRecord(t0.copy(), acc / len(records), cur, records[0].seed, {"n_trajectories": len(records)})


# --------------------------------------------------------------------------- Lyapunov monitoring


@dataclass(frozen=True, eq=False)
class LyapunovObservable:
    name: str
    matrix: np.ndarray | None = None
    weights: np.ndarray | None = None

    def operator(self, d: int) -> np.ndarray:
        if self.matrix is not None:
            if self.matrix.shape != (d, d):
                raise DimensionError(f"Lyapunov observable is {self.matrix.shape[0]}-dimensional, states are {d}")
            return self.matrix
        w = np.arange(d, dtype=float) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != (d,):
            raise DimensionError(f"energy ladder has {w.shape[0]} weights, states are {d}-dimensional")
        return np.diag(w).astype(complex)


def subspace_population(decomp: SpaceDecomposition) -> LyapunovObservable:
    """V(rho) = trace(Pi_R rho)."""
    return LyapunovObservable("subspace_population", matrix=decomp.projector_r())


def energy_ladder(weights=None) -> LyapunovObservable:
    """V(rho) = trace(diag(weights) rho); default weights 0, 1, ..., d-1."""
    return LyapunovObservable("energy_ladder", weights=None if weights is None else np.asarray(weights, float))


def lyapunov_trace(record: TrajectoryRecord, V: LyapunovObservable, slack: float = 10 * TOL_TRAJ):
    """Series trace(V rho_t) and whether it is non-increasing within ``slack``."""
    op = V.operator(record.dim)
    series = np.real(np.einsum("ij,tji->t", op, record.states))
    monotone = bool(np.all(np.diff(series) <= slack))
    return series, monotone
