import json

import pytest

from tensorlasso.cli import main, read_config_file


def test_verify_suite(capsys):
    assert main(["verify"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 5 and all(line.startswith("PASS") for line in out)


def test_verify_preset_and_file(tmp_path, capsys):
    assert main(["verify", "--preset", "det4-verify", "--out", str(tmp_path / "v.json")]) == 0
    assert json.loads((tmp_path / "v.json").read_text())[0]["term_count"] == 12
    assert main(["verify", "--preset", "det3-search"]) == 2
    assert main(["verify", "--reference", "DerksenDet3", "--target", "det:3"]) == 0
    assert main(["verify", "--reference", "DerksenDet3", "--target", "det:4"]) == 1
    assert main(["verify", "--reference", "DerksenDet3"]) == 2


def test_search_writes_outputs(tmp_path, capsys):
    out = tmp_path / "r" / "report.json"
    assert main(["search", "--preset", "mm2-classical", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["verified"] and rep["term_count"] == 8
    assert (tmp_path / "r" / "report.cp.json").exists()
    assert (tmp_path / "r" / "report.txt").read_text().count("\n") == 8
    assert main(["verify", "--decomposition", str(tmp_path / "r" / "report.cp.json"), "--target", "mm:2"]) == 0
    capsys.readouterr()
    assert main(["render", "--decomposition", str(tmp_path / "r" / "report.cp.json")]) == 0
    assert capsys.readouterr().out.strip() == rep["formula_text"]


def test_search_flags_and_config(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# mm2 with the Strassen atoms\ntarget = mm:2\nscheme = strassen\nsamples = 300\n"
                   "seeds = 2,3   # two tries\nlambda-count = 20\nmax-den = 8\nrestarts = 3\nrounds = 4\ntarget-terms = 7\n")
    opts = read_config_file(cfg)
    assert opts["seeds"] == "2,3" and opts["samples"] == 300 and opts["max-den"] == 8
    assert main(["search", "--config", str(cfg), "--samples", "400", "--dump-design", str(tmp_path / "dd"),
                 "--cache-dir", str(tmp_path / "cache"), "--threads", "2", "--min-ratio", "1e-3", "--tol", "1e-9"]) == 0
    out = capsys.readouterr().out
    assert "N=400" in out and "7 terms" in out
    assert (tmp_path / "dd_D.csv").read_text().count("\n") == 400
    assert any((tmp_path / "cache").iterdir())
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert main(["search", "--config", str(bad)]) == 2


def test_search_exit_codes(capsys):
    assert main(["search", "--preset", "det4-search"]) == 3
    assert main(["search", "--preset", "det3-verify"]) == 2
    assert main(["search"]) == 2
    # a single seed on too few samples for Strassen is reported as not verified
    assert main(["search", "--target", "mm:2", "--scheme", "entries", "--samples", "17", "--seed", "0",
                 "--lambda-count", "2"]) in (0, 1)


def test_estimate(capsys):
    assert main(["estimate", "--preset", "det4-search"]) == 0
    captured = capsys.readouterr()
    est = json.loads(captured.out)
    assert est["design_matrix_bytes"] == 36700160000 and "heavy" in captured.err
    assert main(["estimate", "--target", "det:3", "--scheme", "pairs", "--samples", "3000"]) == 0
    assert json.loads(capsys.readouterr().out)["design_matrix_bytes"] == 17496000


def test_render_reference(capsys):
    assert main(["render", "--reference", "Strassen2"]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 7
    assert main(["render"]) == 2


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    for cmd in ("verify", "search", "estimate", "render"):
        assert cmd in out
