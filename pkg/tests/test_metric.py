import numpy as np
import pytest
from conftest import SHIPPED, samples, spec

from finslerlab.metric import (
    EvalPoint,
    F_jet,
    F_values,
    MetricError,
    check_strong_convexity,
    load_spec,
    loads_spec,
    make_expression_spec,
    resolve_spec,
    riemannian_as_expression,
    sample,
)

EUCLID = """
name = "e2"
dim = 2
kind = "expression"
domain = [[-1, 1], [-1, 1]]
[expression]
F = "sqrt(y1^2+y2^2)"
"""

RANDERS = """
name = "r2"
dim = 2
kind = "randers"
domain = [[-1, 1], [-1, 1]]
[randers]
b = ["{b}", "0"]
[randers.alpha]
a = [["1", "0"], ["0", "1"]]
"""


def test_expression_spec_loads():
    s = loads_spec(EUCLID)
    assert s.kind == "expression" and s.dim == 2
    assert F_values(s, [0, 0], [3, 4]) == pytest.approx(5)


def test_randers_bound_enforced():
    s = loads_spec(RANDERS.format(b="0.3"))
    assert F_values(s, [0, 0], [1, 0]) == pytest.approx(1.3)
    with pytest.raises(MetricError, match="beta"):
        loads_spec(RANDERS.format(b="1.2"))


def test_riemannian_value():
    s = loads_spec("""
name = "r"
dim = 2
kind = "riemannian"
domain = [[-2, 2], [-2, 2]]
[riemannian]
a = [["1", "0"], ["0", "x1^2 + 1"]]
""")
    assert F_values(s, [1, 0], [0, 1]) == pytest.approx(np.sqrt(2))


@pytest.mark.parametrize("text, needle", [
    (EUCLID.replace('F = "sqrt(y1^2+y2^2)"', 'F = "sqrt(y1^2+y3^2)"'), "line 7"),
    (EUCLID.replace('F = "sqrt(y1^2+y2^2)"', 'F = "sqrt(y1^2+"'), "line 7"),
    (EUCLID.replace('kind = "expression"', 'kind = "spline"'), "kind"),
    (EUCLID.replace("dim = 2", "dim = 3"), "domain"),
    (EUCLID.replace('[[-1, 1], [-1, 1]]', '[[1, -1], [-1, 1]]'), "min < max"),
    ("name = ", "<string>"),
])
def test_invalid_files_are_reported(text, needle):
    with pytest.raises(MetricError, match=needle):
        loads_spec(text)


def test_asymmetric_matrix_rejected():
    bad = RANDERS.format(b="0").replace('[["1", "0"], ["0", "1"]]', '[["1", "0.1"], ["0", "1"]]')
    with pytest.raises(MetricError, match="symmetric"):
        loads_spec(bad)


def test_file_and_shipped_resolution(tmp_path):
    p = tmp_path / "e2.toml"
    p.write_text(EUCLID)
    assert load_spec(p).name == "e2"
    assert resolve_spec(str(p)).name == "e2"
    assert resolve_spec("examples/euclidean2").name == "euclidean2"
    with pytest.raises(MetricError):
        resolve_spec("no-such-metric")


def test_convexity_examples():
    rep = check_strong_convexity(spec("euclidean2"), EvalPoint((0, 0), (1, 0)))
    assert rep.positive_definite and rep.min_eigenvalue == pytest.approx(1)
    r = loads_spec(RANDERS.format(b="0.3"))
    assert check_strong_convexity(r, EvalPoint((0, 0), (1, 0))).positive_definite


def test_quartic_convexity_against_fd_hessian():
    s = make_expression_spec("q2", "(y1^4+y2^4)^(1/4)", 2)
    y0 = np.array([1.0, 1.0])
    h = 1e-4

    def half_F2(y):
        return 0.5 * F_values(s, [0, 0], y) ** 2

    H = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            ei, ej = np.eye(2)[i] * h, np.eye(2)[j] * h
            H[i, j] = (half_F2(y0 + ei + ej) - half_F2(y0 + ei - ej) - half_F2(y0 - ei + ej)
                       + half_F2(y0 - ei - ej)) / (4 * h * h)
    rep = check_strong_convexity(s, EvalPoint((0, 0), tuple(y0)))
    assert rep.min_eigenvalue > 0
    assert rep.min_eigenvalue == pytest.approx(np.linalg.eigvalsh(H)[0], rel=1e-5)


def test_sampling_is_deterministic_and_regular():
    s = spec("euclidean2")
    a, b = sample(s, 10, 1), sample(s, 10, 1)
    assert a.points == b.points and a.rejections == 0 and len(a.points) == 10
    funk = samples("funk-disk", 20)
    assert all(np.hypot(*p.x) < 1 for p in funk.points)


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_specs_are_regular_and_homogeneous(name):
    s = spec(name)
    rng = np.random.default_rng(3)
    for p in samples(name, 10).points:
        rep = check_strong_convexity(s, p)
        assert rep.positive_definite
        t = rng.uniform(0.1, 10)
        f1 = F_values(s, p.x, p.y)
        assert f1 > 0
        assert F_values(s, p.x, t * np.array(p.y)) == pytest.approx(t * f1, rel=1e-10)


def test_riemannian_and_expression_encodings_agree():
    for name in ("euclidean3", "ellipsoid-riemannian"):
        s = spec(name)
        e = riemannian_as_expression(s)
        for p in samples(name, 3).points:
            np.testing.assert_allclose(F_jet(e, p, 4).coeffs, F_jet(s, p, 4).coeffs, atol=1e-12)


def test_eval_point_parsing():
    p = EvalPoint.parse("0.5,0;1,-2")
    assert p.x == (0.5, 0.0) and p.y == (1.0, -2.0)
    for bad in ("1,2", "a,b;c,d", "0,0;1"):
        with pytest.raises(MetricError):
            EvalPoint.parse(bad)
    with pytest.raises(MetricError):
        EvalPoint((0, 0), (0, 0))
