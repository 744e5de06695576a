import numpy as np
import pytest
from conftest import SHIPPED, cache_for, samples, spec

from finslerlab.calculus import GeometryCache
from finslerlab.classify import (
    CLASSES,
    IMPLICATIONS,
    ClassificationError,
    Thresholds,
    classify_basic,
    fit_gp_data,
    fit_point,
    theorem1_condition,
)
from finslerlab.metric import SampleSet, make_expression_spec, sample

# riemannian, berwald, landsberg, c_reducible
EXPECTED = {
    "euclidean2": (True, True, True, True),
    "euclidean3": (True, True, True, True),
    "ellipsoid-riemannian": (True, True, True, True),
    "sphere-projective": (True, True, True, True),
    "randers-const-beta": (False, False, False, True),
    "funk-disk": (False, False, False, True),
    "quartic-minkowski": (False, True, True, False),
}


def report(name, count=6):
    return classify_basic(spec(name), samples(name, count), cache_for(name))


@pytest.mark.parametrize("name", SHIPPED)
def test_expected_table_and_implications(name):
    r = report(name)
    got = tuple(r.verdicts[c] for c in ("riemannian", "berwald", "landsberg", "c_reducible"))
    assert got == EXPECTED[name]
    assert not r.implication_violations
    for a, b in IMPLICATIONS:
        assert not r.verdicts[a] or r.verdicts[b]
    assert r.failures == 0 and r.points == 6


def test_specific_examples():
    e = report("euclidean2")
    assert all(e.verdicts[c] for c in ("riemannian", "berwald", "landsberg", "stretch", "scalar_flag_curvature"))
    f = report("funk-disk")
    assert f.verdicts["scalar_flag_curvature"] and not f.verdicts["stretch"]
    q = report("quartic-minkowski")
    assert q.verdicts["p_reducible"] and q.verdicts["gen_p_reducible"] and q.verdicts["scalar_flag_curvature"]
    assert q.residuals["c_reducible"] > 1e-2


def test_verdicts_are_monotone_in_tau():
    name = "randers-const-beta"
    r_small = classify_basic(spec(name), samples(name), cache_for(name), Thresholds(tau=1e-12))
    r_big = classify_basic(spec(name), samples(name), cache_for(name), Thresholds(tau=10.0))
    for c in CLASSES:
        assert r_small.verdicts[c] <= r_big.verdicts[c]
    assert all(r_big.verdicts.values())


def test_deterministic_report():
    a = report("funk-disk").to_dict()
    b = classify_basic(spec("funk-disk"), sample(spec("funk-disk"), 6, 0), GeometryCache()).to_dict()
    assert a == b


def test_fits_degenerate_and_berwald_branches():
    for fit in fit_gp_data(spec("funk-disk"), samples("funk-disk"), cache_for("funk-disk")):
        assert fit.degenerate and fit.lam is None and fit.residual < 1e-7
    for fit in fit_gp_data(spec("euclidean2"), samples("euclidean2"), cache_for("euclidean2")):
        assert fit.degenerate and np.allclose(fit.a, 0)
    for fit in fit_gp_data(spec("quartic-minkowski"), samples("quartic-minkowski"), cache_for("quartic-minkowski")):
        assert not fit.degenerate
        assert fit.lam == pytest.approx(0, abs=1e-12)
        assert np.allclose(fit.a, 0, atol=1e-12) and fit.residual < 1e-12


def test_lambda_is_least_squares_optimal():
    s = make_expression_spec("rnd", "((y1^2 + (1 + 0.2*x1^2)*y2^2 + y3^2)^2 + 0.3*x2*y1^4 + 0.3*y3^4)^(1/4)", 3)
    rng = np.random.default_rng(0)
    cache = GeometryCache()
    for p in sample(s, 3, 1).points:
        g = cache.get(s, p)
        fit = fit_point(g)
        assert not fit.degenerate
        M, Mbar = g.matsumoto().values, g.pbar().values
        for eps in rng.normal(scale=1e-2, size=4):
            assert g.norm_values(Mbar - (fit.lam + eps) * M, "lll") >= fit.residual
        # a_i y^i = 0
        assert fit.a_dot_y < 1e-9


def test_fit_residual_invariant_under_rescaling_y():
    s = spec("randers-const-beta")
    p = samples("randers-const-beta", 1).points[0]
    from finslerlab.metric import EvalPoint
    q = EvalPoint(p.x, tuple(3.0 * np.array(p.y)))
    c = GeometryCache()
    assert fit_point(c.get(s, p)).residual == pytest.approx(fit_point(c.get(s, q)).residual, abs=1e-12)


def test_theorem1_condition_branches():
    funk = theorem1_condition(spec("funk-disk"), samples("funk-disk"), cache_for("funk-disk"))
    assert funk.branch == "conclusion" and all(r.product == 0 for r in funk.points)
    eu = theorem1_condition(spec("euclidean2"), samples("euclidean2"), cache_for("euclidean2"))
    assert eu.branch == "conclusion"
    q = theorem1_condition(spec("quartic-minkowski"), samples("quartic-minkowski"), cache_for("quartic-minkowski"))
    assert q.evaluable and q.branch == "hypothesis-fails"
    assert all(abs(r.v) < 1e-9 and r.M_norm > 1e-2 for r in q.points)
    r = theorem1_condition(spec("randers-const-beta"), samples("randers-const-beta"), cache_for("randers-const-beta"))
    assert not r.evaluable and r.branch == "not-applicable"


def test_too_many_failures_abort():
    s = spec("euclidean2")
    pts = samples("euclidean2", 4).points
    from finslerlab.metric import EvalPoint
    bad = SampleSet("euclidean2", pts[:1] + [EvalPoint((0, 0, 0), (1, 0, 0))] * 3, 0, 4)
    with pytest.raises(ClassificationError):
        classify_basic(s, bad, GeometryCache())
