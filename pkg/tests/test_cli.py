import hashlib
import json
from pathlib import Path

import pytest

from burgers_asym.cli import EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_PASS, EXIT_USAGE, main
from burgers_asym.config import load_config

SMALL_2D = """
n = 2
N = 128
L = 16.0
a = 1.0, 0.0
data = gaussian
M0 = 1.0
tau0 = 1.0
t_end = 64
checkpoints = dyadic 4 64 2
"""

SHORT_3D = """
n = 3
N = 64
L = 12.0
a = 1.0, 0.0, 0.0
M0 = 1.0
tau0 = 2.0
t_end = 4
tail_tol = 1e-6
checkpoints = dyadic 1 4 1
"""


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg = base / "small.cfg"
    cfg.write_text(SMALL_2D)
    out = base / "run"
    assert main(["solve", "--config", str(cfg), "--out-dir", str(out)]) == EXIT_PASS
    return out


def tree_digest(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file() and "analysis" not in p.parts}


def test_constants_pass_and_json(capsys):
    assert main(["constants"]) == EXIT_PASS
    assert "PASS" in capsys.readouterr().out
    assert main(["constants", "--json"]) == EXIT_PASS
    d = json.loads(capsys.readouterr().out)
    assert d["pass"] is True and len(d["entries"]) >= 12


def test_constants_over_tight_tolerance(capsys):
    assert main(["constants", "--tolerance", "1e-15"]) == EXIT_FAIL
    assert "FAIL" in capsys.readouterr().out


def test_solve_writes_complete_manifest(small_run):
    m = json.loads((small_run / "manifest.json").read_text())
    assert set(m) >= {"config", "digest", "versions", "artifacts", "timings", "mass_drift"}
    for rel in [m["artifacts"][k] for k in ("run", "initial", "series", "norms")] + m["artifacts"]["checkpoints"]:
        assert (small_run / rel).exists(), rel
    assert m["mass_drift"] <= 1e-8


def test_solve_usage_errors(tmp_path, capsys):
    assert main(["solve", "--config", "std2d", "--grid", "48", "--out-dir", str(tmp_path / "a")]) == EXIT_USAGE
    assert main(["solve", "--config", "std3d", "--grid", "1024", "--out-dir", str(tmp_path / "b")]) == EXIT_USAGE
    assert main(["solve", "--config", "no-such-config"]) == EXIT_USAGE
    assert main(["solve"]) == EXIT_USAGE
    assert main(["bogus"]) == EXIT_USAGE
    bad = tmp_path / "bad.cfg"
    bad.write_text("n = 2\nwhat = 1\n")
    assert main(["solve", "--config", str(bad)]) == EXIT_USAGE
    assert not (tmp_path / "a").exists()


def test_flag_overrides_reach_config():
    cfg = load_config("std2d", {"N": 128, "t_end": 16.0, "nonlinearity": "modulus"})
    assert (cfg.solver.N, cfg.solver.t_end, cfg.solver.nonlinearity) == (128, 16.0, "modulus")
    assert cfg.solver.checkpoint_times[-1] == 16.0
    assert cfg.digest() != load_config("std2d").digest()


def test_expand_remainder_verify_do_not_touch_run(small_run, capsys):
    before = tree_digest(small_run)
    assert main(["expand", "--manifest", str(small_run)]) == EXIT_PASS
    assert (small_run / "analysis" / "expansion.json").exists()
    assert main(["remainder", "--manifest", str(small_run), "--cutoff", "0", "--log"]) == EXIT_PASS
    assert (small_run / "analysis" / "remainder_c0_log.csv").exists()
    capsys.readouterr()
    code = main(["verify", "--manifest", str(small_run / "manifest.json"), "--claim", "thm-2d", "--json"])
    assert code in (EXIT_PASS, EXIT_FAIL)
    rep = json.loads(capsys.readouterr().out)
    assert {v["q"] for v in rep["verdicts"]} == {"1", "2", "inf"}
    assert (code == EXIT_PASS) == rep["pass"]
    assert tree_digest(small_run) == before


def test_verify_usage_errors(small_run, tmp_path):
    assert main(["verify", "--manifest", str(small_run), "--claim", "nonsense"]) == EXIT_USAGE
    assert main(["verify", "--manifest", str(small_run), "--claim", "ez-exp-3d"]) == EXIT_USAGE
    assert main(["verify", "--manifest", str(small_run), "--claim", "monotone-3d"]) == EXIT_USAGE
    assert main(["verify", "--manifest", str(tmp_path), "--claim", "thm-2d"]) == EXIT_USAGE


def test_deterministic_checkpoints(small_run, tmp_path):
    out = tmp_path / "again"
    assert main(["solve", "--config", str(small_run.parent / "small.cfg"), "--out-dir", str(out)]) == EXIT_PASS
    a, b = tree_digest(small_run), tree_digest(out)
    ckpt = [k for k in a if k.startswith("checkpoints")]
    assert ckpt and all(a[k] == b[k] for k in ckpt)
    assert a["series.npz"] == b["series.npz"]


def test_unconverged_moments_are_inconclusive(tmp_path, capsys):
    cfg = tmp_path / "short3d.cfg"
    cfg.write_text(SHORT_3D)
    out = tmp_path / "run"
    assert main(["solve", "--config", str(cfg), "--out-dir", str(out)]) == EXIT_PASS
    assert main(["expand", "--manifest", str(out), "--order", "2"]) == EXIT_INCONCLUSIVE
    assert "inconclusive" in capsys.readouterr().err


def test_fit_command(tmp_path, capsys):
    p = tmp_path / "r.csv"
    rows = ["t,norm"] + [f"{t},{t ** -1.5}" for t in (8, 16, 32, 64, 128, 256)]
    p.write_text("\n".join(rows) + "\n")
    assert main(["fit", "--csv", str(p), "--json"]) == EXIT_PASS
    d = json.loads(capsys.readouterr().out)
    assert d["p_plain"] == pytest.approx(1.5, abs=1e-9)
    assert main(["fit", "--csv", str(tmp_path / "missing.csv")]) == EXIT_USAGE
    p.write_text("t,norm\n8,1\n16,0.5\n")
    assert main(["fit", "--csv", str(p)]) == EXIT_USAGE
