import csv
import json
import shutil
import subprocess

import numpy as np
import pytest

from helpers import SM, SP, SX, SY, SZ, kron
from qdsctl import LindbladModel, SpaceDecomposition, hermitian_basis
from qdsctl.cli import main
from qdsctl.modelio import dumps, serialize


def write(path, model, decomp=None, design=None):
    path.write_text(dumps(serialize(model, decomp, design)))
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def example(tmp_path):
    m = LindbladModel(SZ, ((1.0, SZ + SP),))
    return write(tmp_path / "ex.json", m, SpaceDecomposition.standard(1, 1, 1))


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# ------------------------------------------------------------------ analyze


def test_analyze_reports_failure_then_compensation(capsys, example):
    code, out, _ = run(capsys, "analyze", example, "--properties", "invariant,attractive")
    assert code == 1
    res = json.loads(out)
    assert not res["properties"]["invariant"]["holds"]
    assert res["properties"]["invariant"]["witnesses"][0]["condition"] == "mixed_H_P"

    code, out, _ = run(capsys, "analyze", example, "--properties", "invariant,attractive,stationary", "--compensate")
    assert code == 0
    res = json.loads(out)
    Hc = np.array(res["compensation"]["H_c"])
    assert np.allclose(Hc[..., 0] + 1j * Hc[..., 1], SY / 2)
    assert res["properties"]["attractive"]["details"]["attractive"] is True
    assert res["properties"]["stationary"]["unique"]


def test_analyze_ns_family(capsys, tmp_path):
    L = kron(SX + 1j * SY, SX)
    dec = SpaceDecomposition.from_subspace(np.eye(4)[:, :2])
    path = write(tmp_path / "m.json", LindbladModel(np.zeros((4, 4)), ((1.0, L),)), dec)
    code, out, _ = run(capsys, "analyze", path, "--properties",
                       "ns,ns_gamma_robust,dfs_gamma_robust,invariant_gamma_robust,attractive")
    assert code == 0, out
    code, out, _ = run(capsys, "analyze", path, "--properties", "ns_initialization_free")
    assert code == 1


def test_analyze_input_errors(capsys, tmp_path, example):
    bad = tmp_path / "bad.json"
    bad.write_text('{"dim": 2}')
    code, _, err = run(capsys, "analyze", str(bad))
    assert code == 2 and "hamiltonian" in err
    code, _, err = run(capsys, "analyze", example, "--properties", "wellness")
    assert code == 2
    code, _, _ = run(capsys, "analyze", str(tmp_path / "absent.json"))
    assert code == 2
    code, _, _ = run(capsys, "analyze", example, "--properties", "invariant_A_robust")
    assert code == 2  # A-robustness needs a GKS document
    code, _, _ = run(capsys, "frobnicate")
    assert code == 2


def test_analyze_gks_document(capsys, tmp_path):
    doc = {"dim": 2, "hamiltonian": [[0, 0], [0, 0]], "gks": {"basis": "gell-mann", "A": np.eye(3).tolist()},
           "decomposition": {"n": 1, "r": 1}}
    p = tmp_path / "g.json"
    p.write_text(json.dumps(doc))
    code, out, _ = run(capsys, "analyze", str(p), "--properties", "invariant_A_robust,stationary")
    assert code == 1
    assert json.loads(out)["properties"]["stationary"]["unique"]


# ------------------------------------------------------------------ simulate


def test_simulate_decay_csv(capsys, tmp_path):
    path = write(tmp_path / "decay.json", LindbladModel(SZ, ((1.0, SM),)))
    out_csv = tmp_path / "decay.csv"
    code, out, _ = run(capsys, "simulate", path, "--rho0", "basis:0", "--t-final", "2", "--dt", "1e-3",
                       "--output", str(out_csv))
    assert code == 0
    header, rows = read_csv(out_csv)
    assert header == ["time", "b0", "b1", "b2", "b3"]
    t = np.array([float(r[0]) for r in rows])
    b = np.array([[float(x) for x in r[1:]] for r in rows])
    basis = hermitian_basis(2)
    z = [np.allclose(m, SZ / np.sqrt(2)) for m in basis].index(True)
    pe = (b[:, 0] + b[:, z]) / np.sqrt(2)
    assert np.max(np.abs(pe - np.exp(-t))) < 1e-6
    assert json.loads(out)["steps"] == 2000


def test_simulate_sme_is_reproducible(capsys, tmp_path):
    from qdsctl import FeedbackDesign

    des = FeedbackDesign(SX / 2, -SY / 2, np.zeros((2, 2)))
    path = write(tmp_path / "d.json", None, SpaceDecomposition.standard(1, 1, 1), des)
    outs = []
    for name in ("a", "b"):
        code, out, _ = run(capsys, "simulate", path, "--sme", "--seed", "7", "--trajectories", "20",
                           "--keep", "2", "--t-final", "1", "--dt", "1e-2", "--output", str(tmp_path / name))
        assert code == 0
        outs.append(json.loads(out))
    a = (tmp_path / "a" / "mean.csv").read_bytes()
    assert a == (tmp_path / "b" / "mean.csv").read_bytes()
    assert (tmp_path / "a" / "trajectory_0001.csv").read_bytes() == (tmp_path / "b" / "trajectory_0001.csv").read_bytes()
    header, rows = read_csv(tmp_path / "a" / "trajectory_0000.csv")
    assert header[-1] == "dY" and rows[0][-1] == ""
    assert outs[0]["lyapunov"]["final"] < outs[0]["lyapunov"]["initial"]


def test_simulate_errors(capsys, tmp_path, example):
    code, _, _ = run(capsys, "simulate", example, "--t-final", "1", "--rho0", "diag:0.5,0.7")
    assert code == 2
    code, _, _ = run(capsys, "simulate", example, "--t-final", "1", "--sme")
    assert code == 2
    stiff = write(tmp_path / "stiff.json", LindbladModel(SZ, ((100.0, SM),)))
    code, _, err = run(capsys, "simulate", stiff, "--t-final", "5", "--dt", "0.1", "--rho0", "basis:0",
                       "--output", str(tmp_path / "s.csv"))
    assert code == 3 and "numerical failure" in err


# ------------------------------------------------------------------ synthesize


def test_synthesize_qubit(capsys):
    code, out, _ = run(capsys, "synthesize", "qubit", "--M", "0.5*sx", "--H", "0.3*sx + 0.2*sy + sz")
    assert code == 0
    doc = json.loads(out)
    F = np.array(doc["design"]["F"])
    assert np.allclose(F[..., 0] + 1j * F[..., 1], -SY / 2)
    Hc = np.array(doc["design"]["H_c"])
    assert np.allclose(Hc[..., 0] + 1j * Hc[..., 1], -0.3 * SX - 0.2 * SY)


def test_synthesize_qubit_not_stabilizable(capsys):
    code, out, _ = run(capsys, "synthesize", "qubit", "--M", "sp", "--target", "ket:1,1")
    assert code == 1
    assert json.loads(out)["stabilizable"] is False
    code, _, _ = run(capsys, "synthesize", "qubit", "--M", "sx", "--target", "mixed")
    assert code == 2


def test_synthesize_ladder_and_dfs(capsys, rng):
    code, out, _ = run(capsys, "synthesize", "ladder", "--m", "1,0.5,2")
    assert code == 0 and json.loads(out)["dim"] == 4
    code, _, _ = run(capsys, "synthesize", "ladder", "--m", "1,0")
    assert code == 2
    M = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    code, out, _ = run(capsys, "synthesize", "dfs", "--M", json.dumps([[[v.real, v.imag] for v in r] for r in M]))
    assert code == 0
    doc = json.loads(out)
    assert doc["dfs_dimension"] >= 2 and doc["compression_residual"] <= 1e-9


def test_synthesized_design_feeds_back_into_analyze(capsys, tmp_path):
    code, out, _ = run(capsys, "synthesize", "dfs", "--M", "sx^sx", "--H", "sz^id")
    assert code == 0
    p = tmp_path / "dfs.json"
    p.write_text(out)
    code, out, _ = run(capsys, "analyze", str(p), "--properties", "dfs_gamma_robust,invariant")
    assert code == 0, out


@pytest.mark.skipif(shutil.which("qdsctl") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["qdsctl", "synthesize", "ladder", "--m", "1"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["dim"] == 2
