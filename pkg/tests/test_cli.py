import json
import subprocess
import sys
import time

import numpy as np
import pytest

from bottomk import estimators as est
from bottomk.cli import main
from bottomk.io import read_sketch


@pytest.fixture
def csv_path(tmp_path):
    rng = np.random.default_rng(61)
    lines = ["id,weight,attr:region"]
    for j, w in enumerate(rng.pareto(1.5, 60) + 1):
        lines.append(f"it{j},{float(w)!r},{'west' if j % 3 else 'east'}")
    path = tmp_path / "items.csv"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def sketch(tmp_path, csv_path, capsys, *extra, name="s.json"):
    out = str(tmp_path / name)
    code, text, _ = run(["sketch", csv_path, "-k", "8", "-o", out, *extra], capsys)
    assert code == 0
    return out, text


def test_small_csv_exact(tmp_path, capsys):
    path = tmp_path / "three.csv"
    path.write_text("id,weight\na,1\nb,2\nc,3\n")
    out = str(tmp_path / "s.json")
    code, text, _ = run(["sketch", str(path), "-k", "5", "-o", out], capsys)
    assert code == 0 and "entries=3" in text and "r_k_plus_1=none" in text
    assert len(read_sketch(out)) == 3


def test_malformed_weight_exit_2(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("id,weight\na,1\nb,heavy\n")
    code, _, err = run(["sketch", str(path), "-k", "2", "-o", str(tmp_path / "x.json")], capsys)
    assert code == 2 and f"{path}:3" in err and "'b'" in err


def test_missing_file_exit_2(tmp_path, capsys):
    code, _, _ = run(["estimate", str(tmp_path / "none.json"), "--estimator", "rc"], capsys)
    assert code == 2


def test_sketch_deterministic(tmp_path, csv_path, capsys):
    a, _ = sketch(tmp_path, csv_path, capsys, "--seed", "5", name="a.json")
    b, _ = sketch(tmp_path, csv_path, capsys, "--seed", "5", name="b.json")
    assert open(a).read() == open(b).read()
    c, _ = sketch(tmp_path, csv_path, capsys, "--seed", "5", "--stream", name="c.json")
    assert read_sketch(c).total_weight == pytest.approx(read_sketch(a).total_weight)


def test_estimate_passthrough(tmp_path, csv_path, capsys):
    path, _ = sketch(tmp_path, csv_path, capsys)
    sk = read_sketch(path)
    code, text, _ = run(["estimate", path, "--estimator", "rc"], capsys)
    rec = json.loads(text)
    assert code == 0 and rec["estimate"] == est.rc_adjusted_weights(sk).estimate()
    code, text, _ = run(["estimate", path, "--estimator", "sc", "--predicate", "region = west"],
                        capsys)
    assert code == 0
    assert json.loads(text)["estimate"] == est.sc_adjusted_weights_exact(sk).estimate("region = west")
    for name in ("prefix", "ml", "ml-w", "sc-markov", "ws-rc"):
        code, text, _ = run(["estimate", path, "--estimator", name], capsys)
        assert code == 0 and json.loads(text)["method"] == name


def test_pri_rc_passthrough(tmp_path, csv_path, capsys):
    path, _ = sketch(tmp_path, csv_path, capsys, "--family", "pri")
    sk = read_sketch(path)
    code, text, _ = run(["estimate", path, "--estimator", "pri-rc"], capsys)
    expect = sum(max(e.weight, 1 / sk.r_k_plus_1) for e in sk.entries)
    assert code == 0 and json.loads(text)["estimate"] == pytest.approx(expect, rel=1e-12)


def test_capability_mismatches_exit_3(tmp_path, csv_path, capsys):
    ws, _ = sketch(tmp_path, csv_path, capsys)
    merged = str(tmp_path / "m.json")
    # merged output keeps the summed total weight; strip it to get an implicit sketch
    doc = json.load(open(ws))
    doc["total_weight"] = None
    json.dump(doc, open(merged, "w"))
    assert run(["estimate", merged, "--estimator", "sc"], capsys)[0] == 3
    assert run(["estimate", ws, "--estimator", "pri-rc"], capsys)[0] == 3
    assert run(["bounds", ws, "--method", "pri"], capsys)[0] == 3
    assert run(["estimate", ws, "--estimator", "wsr"], capsys)[0] == 3
    km, _ = sketch(tmp_path, csv_path, capsys, "--family", "wsr", name="km.json")
    assert run(["estimate", km, "--estimator", "rc"], capsys)[0] == 3
    assert run(["estimate", km, "--estimator", "wsr"], capsys)[0] == 0


def test_bounds_output(tmp_path, csv_path, capsys):
    ws, _ = sketch(tmp_path, csv_path, capsys)
    for method in ("ws-normal", "ws-quantile", "ws-density", "ws-total"):
        code, text, _ = run(["bounds", ws, "--method", method], capsys)
        rec = json.loads(text)
        assert code == 0 and rec["lower"] <= rec["upper"] and rec["draws"] == 200
    small = tmp_path / "small.csv"
    small.write_text("id,weight\na,1\nb,2\n")
    out = str(tmp_path / "e.json")
    run(["sketch", str(small), "-k", "4", "-o", out], capsys)
    code, text, _ = run(["bounds", out, "--method", "ws-quantile", "--delta", "0.05"], capsys)
    rec = json.loads(text)
    assert code == 0 and rec["lower"] == rec["upper"] == 3.0


def test_merge(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text("id,weight\na1,1\na2,5\na3,2\n")
    b.write_text("id,weight\nb1,3\nb2,4\n")
    sa, sb, out = (str(tmp_path / n) for n in ("a.json", "b.json", "m.json"))
    run(["sketch", str(a), "-k", "2", "-o", sa, "--seed", "1"], capsys)
    run(["sketch", str(b), "-k", "2", "-o", sb, "--seed", "2"], capsys)
    code, text, _ = run(["merge", sa, sb, "-o", out], capsys)
    m = read_sketch(out)
    assert code == 0 and m.k == 2 and len(m) == 2 and m.total_weight == 15.0


def test_simulate_smoke_and_determinism(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("n = 100\nreps = 10\nk = 4, 16\ng = 10, n\n")
    t0 = time.time()
    code, first, _ = run(["simulate", str(cfg)], capsys)
    assert code == 0 and time.time() - t0 < 10
    code, second, _ = run(["simulate", str(cfg)], capsys)
    assert first == second
    out = tmp_path / "m.csv"
    assert run(["simulate", str(cfg), "-o", str(out)], capsys)[0] == 0
    assert out.read_text() == first


def test_simulate_config_errors_exit_4(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("estimators = ws-rc, telepathy\n")
    code, _, err = run(["simulate", str(cfg)], capsys)
    assert code == 4 and "valid names" in err and "ws-sc" in err
    assert run(["simulate", str(tmp_path / "absent.cfg")], capsys)[0] == 4


def test_console_entry_point(tmp_path, csv_path):
    out = str(tmp_path / "s.json")
    res = subprocess.run([sys.executable, "-m", "bottomk.cli", "sketch", csv_path, "-k", "3",
                          "-o", out], capture_output=True, text=True)
    assert res.returncode == 0 and "k=3" in res.stdout
