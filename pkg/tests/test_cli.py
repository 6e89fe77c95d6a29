import json
import subprocess
import sys

import numpy as np
import pytest

from pcqal.cli import main
from pcqal.fileio import write_cloud
from pcqal.losses import QalParams, qal


@pytest.fixture()
def clouds(tmp_path):
    rng = np.random.default_rng(0)
    a = rng.normal(size=(30, 3))
    b = rng.normal(size=(40, 3))
    pa = tmp_path / "pred.xyz"
    pb = tmp_path / "gt.xyz"
    write_cloud(pa, a)
    write_cloud(pb, b)
    return pa, pb, tmp_path


def test_eval_identical_files(clouds, capsys):
    pa, _, _ = clouds
    assert main(["eval", str(pa), str(pa), "--json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["coverage"] == 1.0
    assert out["spurious"] == 0.0
    assert out["seed"] == 42


def test_eval_json_byte_stable(clouds, capsys):
    pa, pb, _ = clouds
    main(["eval", str(pa), str(pb), "--json"])
    first = capsys.readouterr().out
    main(["eval", str(pa), str(pb), "--json"])
    assert capsys.readouterr().out == first


def test_eval_human_and_csv(clouds, capsys):
    pa, pb, _ = clouds
    assert main(["eval", str(pa), str(pb)]) == 0
    assert "coverage=" in capsys.readouterr().out
    assert main(["eval", str(pa), str(pb), "--csv", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# seed=7\n")
    assert out.splitlines()[1].startswith("kind,label,tau")


def test_eval_tau_auto_and_backend(clouds, capsys):
    pa, pb, _ = clouds
    assert main(["eval", str(pa), str(pb), "--tau", "auto", "--json"]) == 0
    auto = json.loads(capsys.readouterr().out)
    assert auto["tau"] > 0
    assert main(["eval", str(pa), str(pb), "--backend", "kdtree", "--json"]) == 0
    kd = json.loads(capsys.readouterr().out)
    assert main(["eval", str(pa), str(pb), "--json"]) == 0
    assert json.loads(capsys.readouterr().out) == kd


def test_eval_missing_file_exits_3(tmp_path, capsys):
    ok = tmp_path / "ok.xyz"
    write_cloud(ok, [[0.0, 0.0, 0.0]])
    assert main(["eval", str(tmp_path / "nope.xyz"), str(ok), "--json"]) == 3
    assert "pcqal:" in capsys.readouterr().err


def test_eval_corrupt_file_exits_3(tmp_path, capsys):
    bad = tmp_path / "bad.xyz"
    bad.write_text("0 0 0\n1 2\n")
    ok = tmp_path / "ok.xyz"
    write_cloud(ok, [[0.0, 0.0, 0.0]])
    assert main(["eval", str(bad), str(ok)]) == 3
    assert "CloudParseError" in capsys.readouterr().err


def test_eval_bad_tau_exits_2(clouds, capsys):
    pa, pb, _ = clouds
    assert main(["eval", str(pa), str(pb), "--tau", "-0.5"]) == 2
    capsys.readouterr()
    assert main(["eval", str(pa), str(pb), "--tau", "soon"]) == 2


def test_eval_pairs_manifest(clouds, capsys):
    pa, pb, tmp = clouds
    man = tmp / "pairs.tsv"
    man.write_text(f"# header comment\n{pa}\t{pa}\tself\n{pa}\t{pb}\tcross\n")
    assert main(["eval", "--pairs", str(man), "--json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert len(out["per_pair"]) == 2
    assert out["per_pair"][0]["label"] == "self"
    assert out["per_pair"][0]["coverage"] == 1.0
    assert set(out["per_category"]) == {"self", "cross"}


def test_eval_pairs_bad_manifest_exits_3(clouds, capsys):
    pa, _, tmp = clouds
    man = tmp / "bad.tsv"
    man.write_text(f"{pa}\n")
    assert main(["eval", "--pairs", str(man)]) == 3


def test_loss_json_matches_library(clouds, capsys):
    pa, pb, _ = clouds
    assert main(["loss", str(pa), str(pb), "--loss", "qal", "--eps", "0.05",
                 "--omega", "8", "--lambda", "0.5", "--json", "--grad"]) == 0
    out = json.loads(capsys.readouterr().out)
    from pcqal.fileio import read_cloud
    v = qal(read_cloud(pa), read_cloud(pb), QalParams(0.05, 8.0, 0.5),
            want_grad=True)
    assert out["total"] == v.total  # full precision, exact
    assert out["cov_term"] == v.cov_term
    assert out["attr_term"] == v.attr_term
    assert np.array_equal(np.array(out["grad"]), v.grad)


def test_loss_human_output(clouds, capsys):
    pa, pb, _ = clouds
    assert main(["loss", str(pa), str(pb), "--loss", "cd-l1"]) == 0
    assert "total=" in capsys.readouterr().out


def test_loss_emd_size_mismatch_exits_2(clouds, capsys):
    pa, pb, _ = clouds  # 30 vs 40 points
    assert main(["loss", str(pa), str(pb), "--loss", "emd"]) == 2
    assert "SizeMismatchError" in capsys.readouterr().err


def test_loss_emd_entropic(clouds, capsys):
    pa, pb, _ = clouds
    assert main(["loss", str(pa), str(pb), "--loss", "emd", "--mode",
                 "entropic", "--json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["total"] > 0


def test_gen_and_eval_roundtrip(tmp_path, capsys):
    out = tmp_path / "ring.xyz"
    assert main(["gen", "--kind", "RingWithSpur", "--n", "128", "--seed", "5",
                 "-o", str(out)]) == 0
    capsys.readouterr()
    out2 = tmp_path / "ring2.xyz"
    main(["gen", "--kind", "RingWithSpur", "--n", "128", "--seed", "5",
          "-o", str(out2)])
    assert out.read_bytes() == out2.read_bytes()
    capsys.readouterr()
    assert main(["eval", str(out), str(out2), "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["coverage"] == 1.0


def test_gen_validation_exits_2(tmp_path, capsys):
    assert main(["gen", "--kind", "RingWithSpur", "--n", "8",
                 "-o", str(tmp_path / "x.xyz")]) == 2


def test_fit_end_to_end(tmp_path, capsys):
    pred = tmp_path / "fitted.xyz"
    curve = tmp_path / "curve.csv"
    result = tmp_path / "fit.json"
    code = main(["fit", "--gt-kind", "Cross3D", "--gt-n", "96",
                 "--init-kind", "UniformSphere", "--init-n", "48",
                 "--iters", "40", "--metric-every", "20",
                 "--out-pred", str(pred), "--curve-csv", str(curve),
                 "-o", str(result)])
    assert code == 0
    assert pred.exists()
    lines = curve.read_text().strip().splitlines()
    assert lines[0].startswith("iteration,tau")
    assert len(lines) == 4  # header + iters 0, 20, 40
    data = json.loads(result.read_text())
    assert data["config"]["iters"] == 40
    assert len(data["loss_curve"]) == 40


@pytest.mark.filterwarnings("ignore:overflow")
def test_fit_diverged_exits_4(tmp_path, capsys):
    code = main(["fit", "--gt-kind", "ThinPlate", "--gt-n", "32",
                 "--init-kind", "UniformSphere", "--init-n", "16",
                 "--loss", "cd-l2", "--optimizer", "momentum",
                 "--step", "1e14", "--iters", "30"])
    assert code == 4
    assert "DivergedLossError" in capsys.readouterr().err


def test_fit_requires_source_exits_2(capsys):
    assert main(["fit", "--init-kind", "UniformSphere"]) == 2


def test_sweep_end_to_end(tmp_path, capsys):
    out = tmp_path / "sweep.json"
    code = main(["sweep", "--stage", "lambda", "--values", "0,1",
                 "--seeds", "0", "--gt-kind", "RingWithSpur", "--gt-n", "96",
                 "--init-kind", "UniformSphere", "--init-n", "48",
                 "--iters", "30", "-o", str(out)])
    assert code == 0
    data = json.loads(out.read_text())
    assert data["stage"] == "lambda"
    assert [e["value"] for e in data["grid"]] == [0.0, 1.0]
    assert data["knee"]["lambda_attr"] in (0.0, 1.0)


def test_console_script_installed():
    proc = subprocess.run([sys.executable, "-m", "pcqal.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "eval" in proc.stdout
