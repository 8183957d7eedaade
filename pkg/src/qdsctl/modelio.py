"""JSON model documents and small text formats used by the command line.

Complex numbers are ``[re, im]`` pairs and matrices are row-major nested
lists of them. Floats are written with ``repr`` so that parsing a written
document gives back the same bits.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import reduce
from pathlib import Path

import numpy as np

from .dynamics import FeedbackDesign
from .errors import QdsError
from .generator import GKSModel, LindbladModel, Model
from .linquant import SpaceDecomposition, hermitian_basis


class ParseError(QdsError, ValueError):
    def __init__(self, message: str, location: str = "$"):
        super().__init__(f"{location}: {message}")
        self.location = location


# --------------------------------------------------------------------------- complex values


def encode_matrix(x) -> list:
    x = np.asarray(x, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in x]


def _scalar(v, loc: str) -> complex:
    if isinstance(v, bool):
        raise ParseError("expected a number", loc)
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, list) and len(v) == 2 and all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in v):
        return complex(v[0], v[1])
    raise ParseError("expected a number or an [re, im] pair", loc)


def decode_matrix(obj, loc: str, dim: int | None = None) -> np.ndarray:
    if not isinstance(obj, list) or not obj or not all(isinstance(r, list) for r in obj):
        raise ParseError("expected a non-empty nested list (matrix rows)", loc)
    rows = len(obj)
    cols = len(obj[0])
    out = np.empty((rows, cols), dtype=complex)
    for i, row in enumerate(obj):
        if len(row) != cols:
            raise ParseError(f"row has {len(row)} entries, expected {cols}", f"{loc}[{i}]")
        for j, v in enumerate(row):
            out[i, j] = _scalar(v, f"{loc}[{i}][{j}]")
    if not np.all(np.isfinite(out)):
        raise ParseError("matrix contains non-finite entries", loc)
    if dim is not None and out.shape != (dim, dim):
        raise ParseError(f"expected a {dim}x{dim} matrix, got {rows}x{cols}", loc)
    return out


# --------------------------------------------------------------------------- documents


@dataclass
class ModelDocument:
    dim: int
    model: Model
    decomposition: SpaceDecomposition | None = None
    design: FeedbackDesign | None = None

    def analyzed_model(self) -> Model:
        """The closed-loop generator when a design is present, else the model itself."""
        if self.design is not None:
            from .dynamics import build_fme

            return build_fme(self.design)
        return self.model


def _get(obj: dict, key: str, loc: str, required: bool = True):
    if key not in obj:
        if required:
            raise ParseError(f"missing key {key!r}", loc)
        return None
    return obj[key]


def _real(v, loc: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
        raise ParseError("expected a finite real number", loc)
    return float(v)


def _count(v, loc: str, minimum: int = 0) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ParseError(f"expected an integer >= {minimum}", loc)
    return v


def parse_document(obj) -> ModelDocument:
    """Validate a decoded JSON object and build the corresponding objects."""
    if not isinstance(obj, dict):
        raise ParseError("document must be a JSON object")
    d = _count(_get(obj, "dim", "$"), "$.dim", 1)
    try:
        H = decode_matrix(_get(obj, "hamiltonian", "$"), "$.hamiltonian", d)
        gks = obj.get("gks")
        if gks is not None:
            if not isinstance(gks, dict):
                raise ParseError("expected an object", "$.gks")
            basis = _get(gks, "basis", "$.gks")
            if basis == "gell-mann":
                basis_arr = hermitian_basis(d)[1:]
            elif isinstance(basis, list):
                basis_arr = np.array([decode_matrix(b, f"$.gks.basis[{i}]", d) for i, b in enumerate(basis)])
            else:
                raise ParseError("basis must be 'gell-mann' or a list of matrices", "$.gks.basis")
            A = decode_matrix(_get(gks, "A", "$.gks"), "$.gks.A", basis_arr.shape[0])
            model: Model = GKSModel(H, basis_arr, A)
        else:
            chans = obj.get("channels", [])
            if not isinstance(chans, list):
                raise ParseError("expected a list", "$.channels")
            parsed = []
            for k, ch in enumerate(chans):
                loc = f"$.channels[{k}]"
                if not isinstance(ch, dict):
                    raise ParseError("expected an object with 'gamma' and 'L'", loc)
                g = _real(ch.get("gamma", 1.0), f"{loc}.gamma")
                parsed.append((g, decode_matrix(_get(ch, "L", loc), f"{loc}.L", d)))
            model = LindbladModel(H, tuple(parsed))

        decomp = None
        if obj.get("decomposition") is not None:
            dc = obj["decomposition"]
            loc = "$.decomposition"
            if not isinstance(dc, dict):
                raise ParseError("expected an object", loc)
            n = _count(_get(dc, "n", loc), f"{loc}.n", 1)
            f = _count(dc.get("f", 1), f"{loc}.f", 1)
            r = _count(dc.get("r", d - n * f), f"{loc}.r", 0)
            U = dc.get("basis_change")
            U = np.eye(d, dtype=complex) if U is None else decode_matrix(U, f"{loc}.basis_change", d)
            if n * f + r != d:
                raise ParseError(f"n*f + r = {n * f + r} does not equal dim {d}", loc)
            decomp = SpaceDecomposition(n, f, r, U)

        design = None
        if obj.get("design") is not None:
            ds = obj["design"]
            loc = "$.design"
            if not isinstance(ds, dict):
                raise ParseError("expected an object", loc)
            M = decode_matrix(_get(ds, "M", loc), f"{loc}.M", d)
            F = decode_matrix(_get(ds, "F", loc), f"{loc}.F", d)
            Hc = ds.get("H_c")
            Hc = None if Hc is None else decode_matrix(Hc, f"{loc}.H_c", d)
            eta = _real(ds.get("eta", 1.0), f"{loc}.eta")
            design = FeedbackDesign(M, F, H, Hc, eta)
    except ParseError:
        raise
    except (QdsError, ValueError) as exc:
        raise ParseError(str(exc)) from exc
    return ModelDocument(d, model, decomp, design)


def serialize(model: Model | None = None, decomposition: SpaceDecomposition | None = None,
              design: FeedbackDesign | None = None, H=None) -> dict:
    """Canonical document for the given objects."""
    if model is None and design is None:
        raise ValueError("need a model or a design")
    H = (model.H if model is not None else design.H) if H is None else np.asarray(H, dtype=complex)
    doc: dict = {"dim": int(H.shape[0]), "hamiltonian": encode_matrix(H)}
    if isinstance(model, GKSModel):
        doc["gks"] = {"basis": [encode_matrix(b) for b in model.basis], "A": encode_matrix(model.A)}
    elif model is not None:
        doc["channels"] = [{"gamma": float(g), "L": encode_matrix(L)} for g, L in model.channels]
    else:
        doc["channels"] = []
    if decomposition is not None:
        doc["decomposition"] = {"n": decomposition.n, "f": decomposition.f, "r": decomposition.r,
                                "basis_change": encode_matrix(decomposition.basis_change)}
    if design is not None:
        doc["design"] = {"M": encode_matrix(design.M), "F": encode_matrix(design.F),
                         "H_c": encode_matrix(design.H_c), "eta": design.eta}
    return doc


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def load_document(path) -> ModelDocument:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", str(path)) from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", f"{path}:{exc.lineno}:{exc.colno}") from exc
    return parse_document(obj)


# --------------------------------------------------------------------------- operator expressions

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.diag([1, -1]).astype(complex)
OPERATOR_NAMES = {
    "sx": _SX,
    "sy": _SY,
    "sz": _SZ,
    "sp": np.array([[0, 1], [0, 0]], dtype=complex),
    "sm": np.array([[0, 0], [1, 0]], dtype=complex),
    "id": np.eye(2, dtype=complex),
}
_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][-+]?\d+)?j?|\.\d+(?:[eE][-+]?\d+)?j?)|([A-Za-z_]\w*)|(.))")


class _ExprParser:
    """Recursive-descent parser for sums of products of Pauli operators.

    Grammar: sum := prod (('+' | '-') prod)*; prod := kron ('*' kron)*;
    kron := unary ('^' unary)*; unary := '-' unary | atom. ``^`` is the
    tensor product and binds tighter than ``*`` and ``+``.
    """

    def __init__(self, text: str):
        self.text = text
        self.tokens = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                break
            num, name, other = m.groups()
            if num is not None:
                self.tokens.append(("num", complex(num) if num.endswith("j") else float(num)))
            elif name is not None:
                self.tokens.append(("name", name))
            elif other is not None and other.strip():
                self.tokens.append(("op", other))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def parse(self):
        val = self.sum()
        if self.i != len(self.tokens):
            raise ParseError(f"unexpected token {self.peek()[1]!r}", f"expression {self.text!r}")
        return val

    def sum(self):
        val = self.prod()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.prod()
            val = _add(val, rhs if op == "+" else -rhs, self.text)
        return val

    def prod(self):
        val = self.kron()
        while self.peek() == ("op", "*"):
            self.take()
            rhs = self.kron()
            if np.ndim(val) == 2 and np.ndim(rhs) == 2:
                if val.shape != rhs.shape:
                    raise ParseError("operator dimensions differ in product", f"expression {self.text!r}")
                val = val @ rhs
            else:
                val = val * rhs
        return val

    def kron(self):
        val = self.unary()
        while self.peek() == ("op", "^"):
            self.take()
            rhs = self.unary()
            if np.ndim(val) != 2 or np.ndim(rhs) != 2:
                raise ParseError("'^' needs operators on both sides", f"expression {self.text!r}")
            val = np.kron(val, rhs)
        return val

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return -self.unary()
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.atom()

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            return val
        if kind == "name":
            if val not in OPERATOR_NAMES:
                raise ParseError(f"unknown operator {val!r}; known: {sorted(OPERATOR_NAMES)}", f"expression {self.text!r}")
            return OPERATOR_NAMES[val].copy()
        if (kind, val) == ("op", "("):
            inner = self.sum()
            if self.take() != ("op", ")"):
                raise ParseError("missing ')'", f"expression {self.text!r}")
            return inner
        raise ParseError(f"unexpected {'end of input' if kind is None else repr(val)}", f"expression {self.text!r}")


def _add(a, b, text):
    if np.ndim(a) == 2 and np.ndim(b) == 2 and a.shape != b.shape:
        raise ParseError("operator dimensions differ in sum", f"expression {text!r}")
    if np.ndim(a) != np.ndim(b):
        raise ParseError("cannot add a scalar and an operator", f"expression {text!r}")
    return a + b


def parse_operator(text: str) -> np.ndarray:
    """Matrix from a JSON nested list or an expression such as ``0.5*sx^sx - sy^sx``."""
    s = text.strip()
    if s.startswith("["):
        try:
            return decode_matrix(json.loads(s), "matrix")
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON matrix: {exc.msg}", "matrix") from exc
    val = _ExprParser(s).parse()
    if np.ndim(val) != 2:
        raise ParseError("expression does not denote an operator", f"expression {text!r}")
    return np.asarray(val, dtype=complex)


def parse_state(spec: str, d: int) -> np.ndarray:
    """Density operator from ``basis:k``, ``mixed``, ``diag:p0,p1,...``, ``ket:a,b,...`` or ``file:path``."""
    kind, _, arg = spec.partition(":")
    try:
        if kind == "mixed":
            return np.eye(d, dtype=complex) / d
        if kind == "basis":
            k = int(arg)
            if not 0 <= k < d:
                raise ParseError(f"basis index {k} out of range for dimension {d}", "rho0")
            rho = np.zeros((d, d), dtype=complex)
            rho[k, k] = 1
            return rho
        if kind == "diag":
            p = np.array([float(x) for x in arg.split(",")])
            if p.shape != (d,):
                raise ParseError(f"expected {d} diagonal entries", "rho0")
            return np.diag(p).astype(complex)
        if kind == "ket":
            v = np.array([complex(x.replace(" ", "")) for x in arg.split(",")])
            if v.shape != (d,) or not np.linalg.norm(v) > 0:
                raise ParseError(f"expected {d} amplitudes, not all zero", "rho0")
            v = v / np.linalg.norm(v)
            return np.outer(v, v.conj())
        if kind == "file":
            try:
                obj = json.loads(Path(arg).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ParseError(f"cannot read state file: {exc}", arg) from exc
            return decode_matrix(obj, arg, d)
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"malformed state spec {spec!r}: {exc}", "rho0") from exc
    raise ParseError(f"unknown state spec {spec!r} (use basis:k, mixed, diag:..., ket:..., file:path)", "rho0")


def kron_all(*ops) -> np.ndarray:
    return reduce(np.kron, ops)
