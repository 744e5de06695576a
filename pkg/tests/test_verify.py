import json

import pytest
from conftest import SHIPPED, cache_for, samples, spec

from finslerlab.calculus import GeometryCache
from finslerlab.metric import sample
from finslerlab.verify import (
    IDENTITIES,
    SCALAR_IDS,
    TOL_LADDER_FD,
    TOL_LADDER_JET,
    check_ladder,
    check_moeq,
    check_scalar_chain,
    check_stretch_chain,
    random_metrics,
    run_identities,
    summary_markdown,
)


@pytest.mark.parametrize("name", SHIPPED)
def test_all_identities_hold_on_shipped_specs(name):
    checks = run_identities(spec(name), samples(name), cache_for(name))
    assert [c.identity for c in checks] == list(IDENTITIES)
    for c in checks:
        assert c.ok, (c.identity, c.worst_residual, c.reason)


@pytest.mark.parametrize("name", SHIPPED)
def test_jet_ladder(name):
    for c in check_ladder(spec(name), samples(name, 4), cache_for(name)):
        assert c.worst_residual <= TOL_LADDER_JET, c.identity


@pytest.mark.slow
def test_fd_ladder_on_randers():
    name = "randers-const-beta"
    for c in check_ladder(spec(name), samples(name, 1), GeometryCache(), path="fd"):
        assert c.worst_residual <= TOL_LADDER_FD, c.identity


def test_moeq_branches():
    m1, _ = check_moeq(spec("randers-const-beta"), samples("randers-const-beta"), cache_for("randers-const-beta"))
    assert m1.branch == "nontrivial" and m1.verdict == "pass"
    # locally Minkowski: both sides vanish identically
    q1, _ = check_moeq(spec("quartic-minkowski"), samples("quartic-minkowski"), cache_for("quartic-minkowski"))
    assert q1.branch == "0=0" and q1.ok


def test_scalar_chain_runs_on_funk_and_skips_elsewhere():
    funk = check_scalar_chain(spec("funk-disk"), samples("funk-disk"), cache_for("funk-disk"))
    assert [c.identity for c in funk] == list(SCALAR_IDS)
    assert all(c.verdict == "pass" and c.applicable for c in funk)
    ell = check_scalar_chain(spec("ellipsoid-riemannian"), samples("ellipsoid-riemannian"),
                             cache_for("ellipsoid-riemannian"))
    assert all(c.verdict == "skipped" and c.reason for c in ell)


def test_stretch_chain_branches():
    q = {c.identity: c for c in check_stretch_chain(spec("quartic-minkowski"), samples("quartic-minkowski"),
                                                    cache_for("quartic-minkowski"))}
    assert q["S8"].verdict == "degenerate" and q["S8"].branch == "degenerate-denominator"
    assert q["S8"].ok
    r = {c.identity: c for c in check_stretch_chain(spec("randers-const-beta"), samples("randers-const-beta"),
                                                    cache_for("randers-const-beta"))}
    assert r["S2"].verdict == "pass"
    # Randers: hypotheses fail but the final display M = 0 is still evaluated
    assert r["S8"].verdict == "pass" and r["S8"].branch == "conclusion" and not r["S8"].applicable
    assert r["S5"].verdict == "skipped"
    f = {c.identity: c for c in check_stretch_chain(spec("funk-disk"), samples("funk-disk"), cache_for("funk-disk"))}
    assert f["S8"].branch == "conclusion" and f["S8"].worst_residual <= 1e-7


def test_random_metrics_satisfy_universal_identities():
    specs = random_metrics(5, seed=0)
    assert [s.dim for s in specs] == [2, 3, 2, 3, 2]
    for s in specs:
        checks = run_identities(s, sample(s, 4, 0), identities=["Moeq1", "Moeq2", "MbarTransport", "LemQ"])
        for c in checks:
            assert c.ok and c.worst_residual <= 1e-6, (s.name, c.identity, c.worst_residual)


def test_reports_serialize():
    checks = run_identities(spec("euclidean2"), samples("euclidean2", 2), identities=["Moeq1", "S2"])
    md = summary_markdown(checks)
    assert md.count("\n") == 4 and "Moeq1" in md
    blob = json.dumps([c.to_dict(with_points=True) for c in checks])
    assert json.loads(blob)[0]["points"]


def test_unknown_identity():
    with pytest.raises(KeyError):
        run_identities(spec("euclidean2"), samples("euclidean2", 1), identities=["nope"])
