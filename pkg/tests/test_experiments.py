import json
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from tensorlasso.dictionary import AtomScheme, CandidateDictionary
from tensorlasso.experiments import (
    PRESETS,
    ExperimentConfig,
    HeavyConfigError,
    SearchConfig,
    estimate_resources,
    parse_scheme,
    planted_instance,
    preset,
    render_formula,
    run_experiment,
    run_planted_trials,
    run_verification_suite,
)
from tensorlasso.rationalize import verify_exact
from tensorlasso.targets import TargetSpec, build_target, reference_decomposition
from tensorlasso.tensor_core import CPDecomposition, LinearForm, Rank1Term, Shape, decomposition_from_json, expand_sum


def test_preset_coverage():
    assert set(PRESETS) == {"mm2-classical", "mm2-strassen", "det3-verify", "det3-search",
                            "det4-verify", "det4-search", "planted-demo"}
    with pytest.raises(KeyError):
        preset("det5-search")
    for cfg in PRESETS.values():
        if not cfg.is_verification:
            k = estimate_resources(cfg).candidate_count
            assert cfg.samples > k


def test_scheme_parsing():
    assert parse_scheme("pairs", 3) == (AtomScheme.pairs(),) * 3
    assert parse_scheme("entries,pairs", 2) == (AtomScheme.entries(), AtomScheme.pairs())
    assert len(parse_scheme("strassen", 2)[0].forms) == 7
    with pytest.raises(ValueError):
        parse_scheme("pairs,pairs", 3)
    with pytest.raises(ValueError):
        parse_scheme("strassen", 3)


def test_mm2_classical_is_deterministic(tmp_path):
    a = run_experiment(preset("mm2-classical"))
    b = run_experiment(replace(preset("mm2-classical"), cache_dir=str(tmp_path), threads=2))
    c = run_experiment(replace(preset("mm2-classical"), cache_dir=str(tmp_path), threads=2))
    assert a.verified and a.term_count == 8 and a.candidate_count == 16 and a.sample_count == 200
    assert a.dumps() == b.dumps() == c.dumps()
    assert "timing_seconds" not in a.to_json() and a.to_json(with_timing=True)["timing_seconds"] >= 0


def test_verified_reports_reverify_from_json():
    rep = run_experiment(preset("mm2-strassen"))
    assert rep.verified and rep.term_count == 7
    dec = decomposition_from_json(json.loads(json.dumps(rep.decomposition)))
    assert verify_exact(dec, build_target(TargetSpec.parse("mm:2,2,2"))).verified
    assert rep.formula_text == render_formula(dec)


def test_verification_presets_and_suite():
    rep = run_experiment(preset("det3-verify"))
    assert rep.verified and [c.term_count for c in rep.certifications] == [5, 5]
    rep = run_experiment(preset("det4-verify"))
    assert rep.verified and rep.term_count == 12
    suite = {r.target: r for r in run_verification_suite()}
    assert all(r.verified for r in suite.values())
    assert {k: r.term_count for k, r in suite.items()} == {
        "Strassen2": 7, "ClassicalMM": 8, "DerksenDet3": 5, "LassoDet3": 5, "Det4Twelve": 12}


def test_resource_estimates():
    est = estimate_resources(preset("det3-search"))
    assert (est.candidate_count, est.design_matrix_bytes, est.warning) == (729, 3000 * 729 * 8, None)
    est = estimate_resources(preset("det4-search"))
    assert est.candidate_count == 65536 and est.design_matrix_bytes == 70000 * 65536 * 8
    assert est.design_matrix_bytes >= 30 * 10**9 and "heavy" in est.warning
    est = estimate_resources(preset("mm2-classical"))
    assert (est.candidate_count, est.design_matrix_bytes) == (16, 25600)


def test_heavy_gate_and_sample_guard():
    with pytest.raises(HeavyConfigError):
        run_experiment(preset("det4-search"))
    with pytest.raises(ValueError):
        run_experiment(replace(preset("mm2-classical"), samples=16))


def test_render_formula():
    unit = CPDecomposition(Shape((4, 4), 1), (Rank1Term(1, (LinearForm.unit(4, 0), LinearForm.unit(4, 0))),))
    assert render_formula(unit) == "+A_{1,1}B_{1,1}"
    lines = render_formula(reference_decomposition("Det4Twelve")).splitlines()
    assert len(lines) == 12
    for line in lines:
        assert line[:5] in ("+1/2 ", "-1/2 ") and line.count("(") == 4
    zero = Rank1Term(0, (LinearForm.unit(3, 0),) * 3)
    d = CPDecomposition(Shape((3, 3, 3), 1), (zero, Rank1Term(Fraction(-2), (LinearForm((1, -1, 0)),) + (LinearForm.unit(3, 1),) * 2)))
    assert render_formula(d) == "-2 (A_{1,1}-A_{2,1})A_{2,2}A_{2,3}"
    s = render_formula(reference_decomposition("ClassicalMM")).splitlines()
    assert s[0] == "+A_{1,1}B_{1,1} -> C_{1,1}"
    generic = CPDecomposition(Shape((2, 3), 1), (Rank1Term(Fraction(1, 3), (LinearForm((2, 1)), LinearForm.unit(3, 2))),))
    assert render_formula(generic) == "+1/3 (2*x1_{1}+x1_{2})x2_{3}"


def test_planted_instance_is_exact_combination():
    d = CandidateDictionary.build((3, 3, 3), AtomScheme.pairs())
    target, support, coeffs = planted_instance(d, np.random.default_rng(0))
    assert len(support) == 5 and all(c in (1, -1, Fraction(1, 2), Fraction(-1, 2)) for c in coeffs)
    terms = tuple(d.candidate(i, (c,)) for i, c in zip(support, coeffs))
    assert expand_sum(CPDecomposition(Shape((3, 3, 3), 1), terms)) == target


def test_planted_trials_small():
    cfg = replace(preset("planted-demo"), samples=1000,
                  search=replace(preset("planted-demo").search, target_terms=5, restarts=2))
    res = run_planted_trials(3, seed=1, config=cfg)
    assert len(res) == 3
    for r in res:
        if r.verified:
            assert r.term_count <= 5


def test_custom_search_on_file_target(tmp_path):
    from tensorlasso.tensor_core import save_decomposition

    p = tmp_path / "t.json"
    save_decomposition(reference_decomposition("DerksenDet3"), p)
    cfg = ExperimentConfig("custom", TargetSpec.parse(f"file:{p}"), (AtomScheme.entries(),) * 3, 200,
                           search=SearchConfig())
    rep = run_experiment(cfg)
    assert rep.verified and rep.term_count == 6
