import json

import numpy as np
import pytest

from switchstab import benchmark, io
from switchstab.cli import main, reproduction_rows, stated_lhs
from switchstab.family import SwitchedFamily
from switchstab.signals import SwitchingSignal


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("bundle")
    assert main(["reproduce", "--out", str(out)]) == 0
    return out


def test_reproduce_table(bundle, capsys):
    rows = {r[0]: r for r in reproduction_rows()}
    assert rows["asymptotic_LHS"][3] == "PASS(±0.002)"
    assert rows["FLAG_tau_a_below_mixed_threshold"][3] == "FLAG"
    assert rows["burst_nu_liminf"][3].startswith("PASS")
    assert stated_lhs() == pytest.approx(0.0834, abs=5e-5)
    assert (bundle / "reproduce.csv").read_text().startswith("quantity,value,reference,status\n")


def test_reproduce_strict_fails():
    assert main(["reproduce", "--strict", "0.0005"]) == 1
    rows = {r[0]: r for r in reproduction_rows(0.0005)}
    assert rows["asymptotic_LHS"][3].startswith("FAIL")


def test_analyze_example_bundle(bundle, tmp_path):
    args = ["analyze", "--family", str(bundle / "family.json"), "--signal", str(bundle / "signal.json"),
            "--certs", str(bundle / "certs.json"), "--criteria", "unified", "--out", str(tmp_path)]
    assert main(args) == 1
    rep = json.loads((tmp_path / "report_unified.json").read_text())
    assert rep["margin"] == pytest.approx(-0.083, abs=0.002)
    header = (tmp_path / "trace.csv").read_text().splitlines()[0]
    assert header == "t,psi,Psi"


def test_analyze_outputs_are_deterministic(bundle, tmp_path):
    base = ["analyze", "--family", str(bundle / "family.json"), "--signal", str(bundle / "signal.json"),
            "--certs", str(bundle / "certs.json"), "--criteria", "unified,asymptotic"]
    main(base + ["--out", str(tmp_path / "a")])
    main(base + ["--out", str(tmp_path / "b"), "--jobs", "2"])
    for name in ("report_unified.json", "report_asymptotic.json", "trace.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def _stable_bundle(tmp_path):
    fam = SwitchedFamily.from_matrices([-np.eye(2)])
    io.write_family(fam, tmp_path / "f.json")
    io.write_signal(SwitchingSignal.constant(1, 10.0), tmp_path / "s.json")
    return ["--family", str(tmp_path / "f.json"), "--signal", str(tmp_path / "s.json")]


def test_analyze_no_switch_stable(tmp_path):
    files = _stable_bundle(tmp_path)
    assert main(["analyze", *files, "--criteria", "unified,asymptotic", "--out", str(tmp_path / "o")]) == 0
    assert main(["analyze", *files, "--criteria", "adt", "--N0", "1", "--tau-a", "1", "--out", str(tmp_path / "o")]) == 0


def test_analyze_input_errors(tmp_path):
    files = _stable_bundle(tmp_path)
    (tmp_path / "bad.json").write_text('{"taus": [0], "horizon": 10}')
    bad = ["--family", files[1], "--signal", str(tmp_path / "bad.json")]
    assert main(["analyze", *bad, "--out", str(tmp_path)]) == 2
    assert main(["analyze", *files, "--criteria", "adt", "--out", str(tmp_path)]) == 2
    assert main(["analyze", *files, "--criteria", "bogus", "--out", str(tmp_path)]) == 2
    assert main(["analyze", "--family", str(tmp_path / "missing.json"), "--signal", files[3]]) == 2
    assert main(["analyze", *files, "--window", "0"]) == 2


def test_generate(tmp_path):
    assert main(["generate", "--class", "adt", "--N0", "2", "--tau-a", "5", "--T", "500", "--seed", "7",
                 "--out", str(tmp_path / "a")]) == 0
    first = (tmp_path / "a" / "signal.json").read_bytes()
    main(["generate", "--class", "adt", "--N0", "2", "--tau-a", "5", "--T", "500", "--seed", "7",
          "--out", str(tmp_path / "b")])
    assert (tmp_path / "b" / "signal.json").read_bytes() == first
    assert main(["generate", "--class", "mixed", "--rho", "1.2", "--N0", "2", "--tau-a", "5", "--T0", "1",
                 "--out", str(tmp_path)]) == 2
    assert main(["generate", "--class", "adt", "--out", str(tmp_path)]) == 2


def test_generate_burst(tmp_path):
    assert main(["generate", "--class", "burst", "--nmax", "20", "--out", str(tmp_path)]) == 0
    sig = io.read_signal(tmp_path / "signal.json")
    assert sig.horizon == 2.0**21


def test_generate_from_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"signal_class": "mixed", "N0": 3, "tau_a": 2, "T0": 4, "rho": 0.5, "T": 300}))
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    cfg.write_text(json.dumps({"unknown_flag": 1}))
    assert main(["generate", "--config", str(cfg)]) == 2


def test_simulate(tmp_path):
    files = _stable_bundle(tmp_path)
    assert main(["simulate", *files, "--step", "1e-3", "--out", str(tmp_path / "o")]) == 0
    header, data = io.read_csv(tmp_path / "o" / "trajectory.csv")
    assert header == ["t", "mode", "x_1", "x_2", "V", "psi", "bound"]
    assert np.linalg.norm(data[-1, 2:4]) == pytest.approx(np.exp(-10), rel=1e-6)


def test_simulate_divergence(tmp_path):
    fam = SwitchedFamily.from_matrices([np.eye(1)], unstable=[1])
    io.write_family(fam, tmp_path / "f.json")
    io.write_signal(SwitchingSignal.constant(1, 100.0), tmp_path / "s.json")
    code = main(["simulate", "--family", str(tmp_path / "f.json"), "--signal", str(tmp_path / "s.json"),
                 "--step", "0.1", "--out", str(tmp_path / "o")])
    assert code == 3
    assert len((tmp_path / "o" / "trajectory.csv").read_text().splitlines()) > 2


def test_simulate_benchmark_mixed(tmp_path):
    out = tmp_path / "g"
    assert main(["generate", "--class", "mixed", "--N0", "3", "--tau-a", "40", "--T0", "5", "--rho", "0.55",
                 "--T", "2000", "--seed", "1", "--out", str(out)]) == 0
    fam = tmp_path / "f.json"
    certs = tmp_path / "c.json"
    io.write_family(benchmark.family(), fam)
    io.write_certs(benchmark.uniform_certificates(), certs)
    assert main(["simulate", "--family", str(fam), "--signal", str(out / "signal.json"), "--certs", str(certs),
                 "--x0", "1,1", "--step", "0.05", "--out", str(tmp_path / "o")]) == 0
