"""Reference implementations and model builders shared by the tests.

Everything here is written independently of the package internals so it can
serve as an oracle: generators are applied by their textbook formula and
superoperators are assembled column by column from basis matrices.
"""
import numpy as np
from scipy.linalg import expm, null_space

from qdsctl import LindbladModel, SpaceDecomposition

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SP = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|, raises towards |0>
SM = SP.conj().T
I2 = np.eye(2, dtype=complex)


def kron(*ops):
    out = np.eye(1, dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def ket(*bits, d=2):
    v = np.zeros(d ** len(bits), dtype=complex)
    v[int("".join(str(b) for b in bits), d)] = 1
    return v


def proj(v):
    v = np.asarray(v, dtype=complex)
    return np.outer(v, v.conj())


def ref_generator(H, channels, rho):
    """-i[H, rho] + sum g (L rho L^+ - 1/2 {L^+ L, rho})."""
    out = -1j * (H @ rho - rho @ H)
    for g, L in channels:
        Ld = L.conj().T
        out = out + g * (L @ rho @ Ld - 0.5 * (Ld @ L @ rho + rho @ Ld @ L))
    return out


def ref_superop(fn, d):
    """Matrix of the linear map fn in the column-stacking convention."""
    S = np.zeros((d * d, d * d), dtype=complex)
    for j in range(d):
        for i in range(d):
            E = np.zeros((d, d), dtype=complex)
            E[i, j] = 1
            S[:, j * d + i] = fn(E).reshape(-1, order="F")
    return S


def model_superop(model):
    chans = list(zip(model.gammas, model.operators))
    return ref_superop(lambda r: ref_generator(model.H, chans, r), model.dim)


def evolve(model, rho0, times):
    """Exact propagation by matrix exponential of the reference superoperator."""
    d = model.dim
    S = model_superop(model)
    v0 = np.asarray(rho0, dtype=complex).reshape(-1, order="F")
    return np.array([(expm(S * t) @ v0).reshape(d, d, order="F") for t in times])


def kernel_states(model):
    """Density operators spanning the kernel of the generator (oracle via null_space)."""
    K = null_space(model_superop(model), rcond=1e-10)
    d = model.dim
    out = []
    for col in K.T:
        X = col.reshape(d, d, order="F")
        X = 0.5 * (X + X.conj().T) if abs(np.trace(X)) < 1e-12 else X / np.trace(X)
        out.append(X)
    return out


def random_channels(rng, d, k):
    return tuple(
        (float(rng.uniform(0.1, 2.0)), rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
        for _ in range(k)
    )


def rand_herm(rng, d):
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (X + X.conj().T)


def rand_unitary(rng, d):
    Q, R = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def rand_state(rng, d):
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = X @ X.conj().T
    return rho / np.trace(rho)


def invariant_model(rng, n, f, r, noiseless=False, n_channels=2, random_basis=True):
    """Model that satisfies the invariance (or NS) conditions by construction.

    Blocks in the adapted basis: L_SF = L_S (x) I or I (x) L_F (only I (x) L_F
    when ``noiseless``), L_Q = 0, random L_P and L_R; H_SF local and H_P solving
    i H_P = 1/2 sum g L_SF^+ L_P.
    """
    k = n * f
    d = k + r
    U = rand_unitary(rng, d) if random_basis else np.eye(d, dtype=complex)
    decomp = SpaceDecomposition(n, f, r, U)
    chans = []
    acc = np.zeros((k, r), dtype=complex)
    for j in range(n_channels):
        g = float(rng.uniform(0.2, 1.5))
        L = np.zeros((d, d), dtype=complex)
        if noiseless or j % 2:
            loc = np.kron(np.eye(n), rng.normal(size=(f, f)) + 1j * rng.normal(size=(f, f)))
        else:
            loc = np.kron(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)), np.eye(f))
        L[:k, :k] = loc
        if r:
            L[:k, k:] = rng.normal(size=(k, r)) + 1j * rng.normal(size=(k, r))
            L[k:, k:] = rng.normal(size=(r, r)) + 1j * rng.normal(size=(r, r))
            acc += g * loc.conj().T @ L[:k, k:]
        chans.append((g, U @ L @ U.conj().T))
    H = np.zeros((d, d), dtype=complex)
    H[:k, :k] = np.kron(rand_herm(rng, n), np.eye(f)) + np.kron(np.eye(n), rand_herm(rng, f))
    if r:
        H[k:, k:] = rand_herm(rng, r)
        HP = -0.5j * acc
        H[:k, k:] = HP
        H[k:, :k] = HP.conj().T
    return LindbladModel(U @ H @ U.conj().T, tuple(chans)), decomp


def collective_decoherence(n_qubits=3):
    """Noiseless-subsystem decomposition of three qubits under collective noise.

    Adapted basis: |s, m> for the two j = 1/2 multiplicity labels s and
    m = +1/2, -1/2 (S-major), followed by the four j = 3/2 states. Returns the
    decomposition and the collective operators S_x, S_y, S_z.
    """
    assert n_qubits == 3
    S = [sum(kron(*[op if i == k else I2 for i in range(3)]) for k in range(3)) / 2 for op in (SX, SY, SZ)]
    Sp = S[0] + 1j * S[1]
    Sm = S[0] - 1j * S[1]
    one_down = np.array([ket(0, 0, 1), ket(0, 1, 0), ket(1, 0, 0)]).T
    # j = 1/2, m = +1/2: one flipped spin, annihilated by S_+
    ker = null_space(Sp @ one_down)
    tops = [one_down @ ker[:, a] for a in range(2)]
    cols = []
    for t in tops:
        t = t / np.linalg.norm(t)
        cols += [t, Sm @ t]
    V = np.array(cols).T
    rest = null_space(V.conj().T)
    U = np.column_stack([V, rest])
    return SpaceDecomposition(2, 2, 4, U), S
