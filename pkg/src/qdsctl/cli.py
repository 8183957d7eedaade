"""Command-line front end: ``qdsctl analyze | simulate | synthesize``.

Exit codes: 0 success, 1 a property fails or a target is not stabilizable,
2 input error, 3 numerical failure at run time.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import dynamics, subsystems, synthesis
from .errors import (
    InternalInconsistency,
    NotCompensable,
    NotPure,
    NotStabilizable,
    QdsError,
    StateError,
    StateInvariantViolation,
    ZeroCoupling,
)
from .generator import stationary_states
from .linquant import SpaceDecomposition, to_bloch
from .modelio import ParseError, dumps, encode_matrix, load_document, parse_operator, parse_state, serialize

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2, 3

ANALYSES = {
    "invariant": lambda m, dc, a: subsystems.check_invariance(m, dc, a.tol_alg),
    "invariant_A_robust": lambda m, dc, a: subsystems.check_invariance_robust(m, dc, "A_robust", a.tol_alg),
    "invariant_gamma_robust": lambda m, dc, a: subsystems.check_invariance_robust(m, dc, "gamma_robust", a.tol_alg),
    "ns": lambda m, dc, a: subsystems.check_ns(m, dc, a.tol_alg),
    "ns_A_robust": lambda m, dc, a: subsystems.check_ns_robust(m, dc, "A_robust", a.tol_alg),
    "ns_gamma_robust": lambda m, dc, a: subsystems.check_ns_robust(m, dc, "gamma_robust", a.tol_alg),
    "ns_initialization_free": lambda m, dc, a: subsystems.check_ns_initialization_free(m, dc, a.tol_alg),
    "dfs_gamma_robust": lambda m, dc, a: _dfs(m, dc, a),
    "attractive": lambda m, dc, a: subsystems.check_attractivity(m, dc, a.tol_alg, a.tol_psd),
}


def _dfs(model, decomp: SpaceDecomposition, args):
    if decomp.f != 1:
        raise ParseError("dfs_gamma_robust needs a decomposition with f = 1", "$.decomposition")
    return subsystems.check_dfs_gamma_robust(model, decomp.basis_change[:, : decomp.n], args.tol_alg)


def _emit(obj) -> None:
    sys.stdout.write(dumps(obj))


# --------------------------------------------------------------------------- analyze


def cmd_analyze(args) -> int:
    doc = load_document(args.model)
    props = [p.strip() for p in args.properties.split(",") if p.strip()]
    unknown = [p for p in props if p not in ANALYSES and p != "stationary"]
    if unknown:
        raise ParseError(f"unknown properties {unknown}; choose from {sorted(ANALYSES) + ['stationary']}", "--properties")
    if doc.decomposition is None and any(p in ANALYSES for p in props):
        raise ParseError("document has no decomposition", "$.decomposition")
    model = doc.analyzed_model()
    out: dict = {"properties": {}}
    if args.compensate:
        try:
            Hc = synthesis.compensation_for_invariance(model, doc.decomposition, args.tol_alg)
        except NotCompensable as exc:
            out["compensation"] = {"error": str(exc), "residual": exc.residual}
            _emit(out)
            return EXIT_FAIL
        out["compensation"] = {"H_c": encode_matrix(Hc)}
        model = subsystems._as_lindblad(model)
        model = model.with_hamiltonian(model.H + Hc)
    ok = True
    for p in props:
        if p == "stationary":
            st = stationary_states(model)
            out["properties"][p] = {"unique": st.unique, "states": [encode_matrix(s) for s in st.states]}
            continue
        rep = ANALYSES[p](model, doc.decomposition, args)
        entry = rep.to_dict()
        entry["conditions"] = [{"condition": w.condition, "channel": w.channel, "residual": w.residual}
                               for w in rep.residuals]
        if p == "attractive":
            held = rep.details.get("attractive") is True
            entry["holds"] = held
        else:
            held = rep.holds
            entry["holds"] = held
        ok &= held
        out["properties"][p] = entry
    out["all_hold"] = ok
    _emit(out)
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------- simulate


def _summary(record, d):
    fin = record.final
    return {
        "final_bloch": [float(x) for x in to_bloch(fin)],
        "final_state": encode_matrix(fin),
        "trace_drift": record.trace_drift(),
        "min_eigenvalue": record.min_eigenvalue(),
        "steps": int(record.times.shape[0] - 1),
    }


def cmd_simulate(args) -> int:
    doc = load_document(args.model)
    d = doc.dim
    rho0 = parse_state(args.rho0, d)
    try:
        rho0 = dynamics._initial_state(rho0, d)
    except StateError as exc:
        raise ParseError(str(exc), "rho0") from exc
    design = doc.design
    if design is not None and args.eta is not None:
        design = design.with_eta(args.eta)
    out: dict = {}
    if args.sme:
        if design is None:
            raise ParseError("--sme needs a document with a 'design' section", "$.design")
        outdir = Path(args.output)
        outdir.mkdir(parents=True, exist_ok=True)
        keep = min(args.keep, args.trajectories)
        ens = dynamics.simulate_ensemble(design, rho0, args.t_final, args.dt, args.seed, args.trajectories,
                                         workers=args.workers, keep=keep, scheme=args.scheme)
        width = max(4, len(str(args.trajectories - 1)))
        files = []
        for rec in ens.trajectories:
            name = outdir / f"trajectory_{rec.meta['index']:0{width}d}.csv"
            rec.to_csv(name)
            files.append(str(name))
        ens.mean.to_csv(outdir / "mean.csv")
        record = ens.mean
        out.update({"mode": "sme", "seed": args.seed, "n_trajectories": args.trajectories,
                    "eta": design.eta, "scheme": args.scheme, "files": files, "mean_file": str(outdir / "mean.csv")})
    else:
        model = dynamics.build_fme(design) if design is not None else doc.model
        record = dynamics.integrate_master(model, rho0, args.t_final, args.dt)
        path = Path(args.output)
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        record.to_csv(path)
        out.update({"mode": "master", "file": str(path)})
    out.update(_summary(record, d))
    if doc.decomposition is not None:
        V = dynamics.subspace_population(doc.decomposition)
        series, mono = dynamics.lyapunov_trace(record, V)
        out["lyapunov"] = {"observable": V.name, "initial": float(series[0]), "final": float(series[-1]),
                           "monotone_nonincreasing": mono}
    _emit(out)
    return EXIT_OK


# --------------------------------------------------------------------------- synthesize


def _design_doc(design, reports: dict, extra: dict | None = None) -> dict:
    doc = serialize(design=design)
    doc["certification"] = {k: v.to_dict() for k, v in reports.items()}
    if design.basis_change is not None:
        doc["basis_change"] = encode_matrix(design.basis_change)
    if extra:
        doc.update(extra)
    return doc


def cmd_synthesize(args) -> int:
    if args.kind == "qubit":
        M = parse_operator(args.M)
        H = parse_operator(args.H) if args.H else np.zeros((2, 2), complex)
        rho_d = parse_state(args.target, 2)
        try:
            design = synthesis.design_qubit_stabilizer(M, H, rho_d, args.tol_alg)
        except NotStabilizable as exc:
            _emit({"stabilizable": False, "commutator_residual": exc.residual, "error": str(exc)})
            return EXIT_FAIL
        except NotPure as exc:
            raise ParseError(str(exc), "--target") from exc
        decomp = SpaceDecomposition.from_subspace(design.basis_change[:, 0])
        model = dynamics.build_fme(design)
        reports = {"invariant": subsystems.check_invariance(model, decomp),
                   "attractive": subsystems.check_attractivity(model, decomp)}
        _emit(_design_doc(design, reports, {"stabilizable": True}))
        return EXIT_OK if all(r.holds for r in reports.values()) else EXIT_FAIL
    if args.kind == "ladder":
        m = [float(x) for x in args.m.split(",")]
        d = len(m) + 1
        H = np.diag([float(x) for x in args.H_diag.split(",")]) if args.H_diag else None
        try:
            design = synthesis.design_ladder_stabilizer(d, m, H)
        except ZeroCoupling as exc:
            raise ParseError(str(exc), "--m") from exc
        decomp = SpaceDecomposition.standard(1, 1, d - 1)
        model = dynamics.build_fme(design)
        reports = {"invariant": subsystems.check_invariance(model, decomp),
                   "attractive": subsystems.check_attractivity(model, decomp)}
        _emit(_design_doc(design, reports))
        return EXIT_OK if all(r.holds for r in reports.values()) else EXIT_FAIL
    M = parse_operator(args.M)
    H = parse_operator(args.H) if args.H else np.zeros_like(M)
    if H.shape != M.shape:
        raise ParseError("M and H dimensions differ", "--H")
    res = synthesis.synthesize_dfs(M, H, args.tol_alg)
    extra = {"dfs_dimension": res.decomp.n, "c_prime": res.c_prime,
             "compression_residual": res.compression_residual,
             "decomposition": serialize(design=res.design, decomposition=res.decomp)["decomposition"]}
    _emit(_design_doc(res.design, {"dfs_gamma_robust": res.report}, extra))
    return EXIT_OK if res.report.holds else EXIT_FAIL


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qdsctl", description=__doc__.splitlines()[0])
    p.add_argument("--tol-alg", type=float, default=1e-9, help="algebraic tolerance (default 1e-9)")
    p.add_argument("--tol-psd", type=float, default=1e-8, help="eigenvalue positivity tolerance (default 1e-8)")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="certify subsystem properties of a model document")
    a.add_argument("model", help="JSON model document")
    a.add_argument("--properties", default="invariant",
                   help="comma-separated: " + ",".join(sorted(ANALYSES)) + ",stationary")
    a.add_argument("--compensate", action="store_true",
                   help="add the constant Hamiltonian that restores invariance before checking")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="integrate the master equation or sample homodyne trajectories")
    s.add_argument("model", help="JSON model document")
    s.add_argument("--rho0", default="mixed", help="basis:k | mixed | diag:p0,... | ket:a,... | file:path")
    s.add_argument("--t-final", type=float, required=True)
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--sme", action="store_true", help="stochastic trajectories of the document's design")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trajectories", type=int, default=1)
    s.add_argument("--keep", type=int, default=10, help="trajectories written in full (default 10)")
    s.add_argument("--eta", type=float, default=None, help="override the design's detection efficiency")
    s.add_argument("--workers", type=int, default=None, help="worker processes (default $QDSCTL_WORKERS or 1)")
    s.add_argument("--scheme", choices=("kraus", "euler"), default="kraus")
    s.add_argument("--output", default="trajectory.csv", help="CSV file, or directory with --sme")
    s.set_defaults(func=cmd_simulate)

    y = sub.add_parser("synthesize", help="construct a feedback design")
    ysub = y.add_subparsers(dest="kind", required=True)
    q = ysub.add_parser("qubit", help="stabilize a pure qubit state")
    q.add_argument("--M", required=True, help="measurement operator (JSON matrix or expression, e.g. 0.5*sx)")
    q.add_argument("--H", default=None, help="free Hamiltonian")
    q.add_argument("--target", default="basis:0", help="pure target state spec")
    ld = ysub.add_parser("ladder", help="stabilize the ground state of a d-level ladder")
    ld.add_argument("--m", required=True, help="comma-separated nonzero couplings m_1..m_{d-1}")
    ld.add_argument("--H-diag", default=None, help="comma-separated diagonal Hamiltonian")
    df = ysub.add_parser("dfs", help="generate a decoherence-free subspace")
    df.add_argument("--M", required=True, help="measurement operator")
    df.add_argument("--H", default=None, help="free Hamiltonian")
    y.set_defaults(func=cmd_synthesize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"qdsctl: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (StateInvariantViolation, InternalInconsistency) as exc:
        print(f"qdsctl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (QdsError, ValueError) as exc:
        print(f"qdsctl: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"qdsctl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
