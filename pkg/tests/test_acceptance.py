"""Acceptance criteria 1-10, one PASS/FAIL line each (shown in the terminal summary)."""
import numpy as np
from conftest import SHIPPED, cache_for, report_criterion, spec

from finslerlab import cli
from finslerlab.calculus import Geometry
from finslerlab.classify import IMPLICATIONS, classify_basic
from finslerlab.metric import sample
from finslerlab.oracle import ChristoffelOracle, FDOracle
from finslerlab.verify import check_ladder, check_scalar_chain, check_stretch_chain, random_metrics, run_identities

N_SAMPLES = 20
RIEMANNIAN = ("euclidean2", "euclidean3", "ellipsoid-riemannian", "sphere-projective")

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


def pts(name, count=N_SAMPLES):
    return sample(spec(name), count, 0)


def geoms(name, count=N_SAMPLES):
    return [cache_for(name).get(spec(name), p) for p in pts(name, count).points]


def test_criterion_1_invariant_ladder():
    problems, worst_jet, worst_fd = [], 0.0, 0.0
    for name in SHIPPED:
        for c in check_ladder(spec(name), pts(name), cache_for(name), path="jet", tol=1e-9):
            worst_jet = max(worst_jet, c.worst_residual)
            if c.verdict != "pass":
                problems.append(f"{name} {c.identity} {c.worst_residual:.1e}")
        for c in check_ladder(spec(name), pts(name, 3), cache_for(name), path="fd", tol=1e-4):
            worst_fd = max(worst_fd, c.worst_residual)
            if c.verdict != "pass":
                problems.append(f"{name} {c.identity} {c.worst_residual:.1e}")
    report_criterion(1, "invariant ladder, jet <= 1e-9 and FD <= 1e-4", problems,
                     f"worst jet {worst_jet:.1e}, worst FD {worst_fd:.1e}")
    assert not problems


def test_criterion_2_riemannian_reduction():
    problems, worst_c, worst_k = [], 0.0, 0.0
    for name in RIEMANNIAN:
        for g in geoms(name):
            worst_c = max(worst_c, g.scale_free_norm(g.cartan()))
    if worst_c > 1e-10:
        problems.append(f"||C|| {worst_c:.1e}")
    s = spec("sphere-projective")
    oracle = ChristoffelOracle(s)
    rng = np.random.default_rng(2024)
    for g in geoms("sphere-projective"):
        u = rng.normal(size=3)
        k = g.flag_curvature(u)
        k_oracle = oracle.sectional_curvature(g.point.x, g.point.y, u)
        worst_k = max(worst_k, abs(k - 1), abs(k - k_oracle))
    if worst_k > 1e-5:
        problems.append(f"flag curvature off by {worst_k:.1e}")
    report_criterion(2, "Riemannian reduction", problems,
                     f"worst ||C|| {worst_c:.1e}, worst |K-1| or oracle gap {worst_k:.1e} over 20 flags")
    assert not problems


def test_criterion_3_matsumoto_randers():
    problems = []
    worst = 0.0
    for name in ("randers-const-beta", "funk-disk"):
        for g in geoms(name):
            worst = max(worst, g.scale_free_norm(g.matsumoto()))
    if worst > 1e-7:
        problems.append(f"Randers scale-free ||M|| {worst:.1e}")
    quartic = [g.scale_free_norm(g.matsumoto()) for g in geoms("quartic-minkowski")]
    frac = np.mean([m >= 1e-2 for m in quartic])
    if frac < 0.9:
        problems.append(f"quartic ||M||F >= 1e-2 at only {frac:.0%}")
    report_criterion(3, "Matsumoto torsion vanishes on Randers, not on quartic", problems,
                     f"Randers worst {worst:.1e}, quartic positive at {frac:.0%}, min {min(quartic):.2e}")
    assert not problems


def test_criterion_4_funk_curvature():
    problems, worst_k, worst_r = [], 0.0, 0.0
    for g in geoms("funk-disk"):
        K, res = g.scalar_curvature_fit()
        worst_k, worst_r = max(worst_k, abs(K + 0.25)), max(worst_r, res)
    if worst_k > 1e-4 or worst_r > 1e-6:
        problems.append(f"|K + 1/4| {worst_k:.1e}, residual {worst_r:.1e}")
    report_criterion(4, "Funk flag curvature -1/4", problems, f"|K + 1/4| {worst_k:.1e}, fit residual {worst_r:.1e}")
    assert not problems


def test_criterion_5_universal_identities():
    ids = ["Moeq1", "Moeq2", "MbarTransport", "LemQ"]
    problems, worst = [], 0.0
    targets = [(spec(n), pts(n), cache_for(n)) for n in SHIPPED]
    targets += [(s, sample(s, N_SAMPLES, 0), None) for s in random_metrics(5, seed=0)]
    nontrivial = 0
    for s, smp, cache in targets:
        for c in run_identities(s, smp, cache, identities=ids):
            worst = max(worst, c.worst_residual)
            nontrivial += c.branch == "nontrivial"
            if c.verdict != "pass" or c.worst_residual > 1e-6:
                problems.append(f"{s.name} {c.identity} {c.worst_residual:.1e}")
    report_criterion(5, "universal identities on 7 shipped + 5 random metrics", problems,
                     f"worst {worst:.1e}, {nontrivial} of {4 * len(targets)} checks nontrivial")
    assert not problems


def test_criterion_6_scalar_chain():
    wanted = {"Kikiso1", "AZeq1", "AZeq2", "Sijk"}
    problems, worst = [], 0.0
    for name in ("funk-disk", "sphere-projective"):
        for c in check_scalar_chain(spec(name), pts(name), cache_for(name)):
            if c.identity in wanted:
                worst = max(worst, c.worst_residual)
                if c.verdict != "pass" or c.worst_residual > 1e-5:
                    problems.append(f"{name} {c.identity} {c.verdict} {c.worst_residual:.1e}")
    name = "ellipsoid-riemannian"
    for c in check_scalar_chain(spec(name), pts(name), cache_for(name)):
        if c.identity in wanted and not (c.verdict == "skipped" and c.reason):
            problems.append(f"{name} {c.identity} not skipped")
    report_criterion(6, "scalar-curvature chain and skip on a non-scalar 3D spec", problems,
                     f"worst {worst:.1e}; ellipsoid-riemannian skipped with reason")
    assert not problems


def test_criterion_7_branch_bookkeeping():
    problems = []
    q = {c.identity: c for c in check_stretch_chain(spec("quartic-minkowski"), pts("quartic-minkowski"),
                                                    cache_for("quartic-minkowski"))}
    if q["S8"].branch != "degenerate-denominator" or q["S8"].verdict == "fail":
        problems.append(f"quartic S8 {q['S8'].verdict}/{q['S8'].branch}")
    f = {c.identity: c for c in check_stretch_chain(spec("funk-disk"), pts("funk-disk"), cache_for("funk-disk"))}
    if f["S8"].verdict != "pass" or f["S8"].branch != "conclusion":
        problems.append(f"funk S8 {f['S8'].verdict}/{f['S8'].branch}")
    report_criterion(7, "degenerate and conclusion branch bookkeeping", problems,
                     f"quartic S8 {q['S8'].branch}, funk S8 {f['S8'].branch} (M worst {f['S8'].worst_residual:.1e})")
    assert not problems


def test_criterion_8_classifier():
    problems = []
    for name in SHIPPED:
        r = classify_basic(spec(name), pts(name), cache_for(name))
        got = tuple(r.verdicts[c] for c in ("riemannian", "berwald", "landsberg", "c_reducible"))
        if got != EXPECTED[name]:
            problems.append(f"{name} {got}")
        bad = [f"{a}=>{b}" for a, b in IMPLICATIONS if r.verdicts[a] and not r.verdicts[b]]
        if bad or r.implication_violations:
            problems.append(f"{name} implications {bad or r.implication_violations}")
    report_criterion(8, "classification table and implication chain", problems, f"{len(SHIPPED)} specs")
    assert not problems


JET_FIELDS = {"g": "g_field", "h": "h_field", "C": "C_field", "I": "I_field", "G": "G_field", "N": "N_field",
              "berwald": "berwald_field", "L": "L_field", "J": "J_field", "M": "M_field", "Mbar": "Mbar_field",
              "riemann": "R_field"}
# trace-free parts vanish on Randers; measure them against the tensor they are taken from
REFERENCE = {"M": "C", "Mbar": "L"}


def test_criterion_9_fd_oracle():
    s = spec("randers-const-beta")
    problems, worst = [], {}
    for p in sample(s, 5, 0).points:
        g = Geometry(s, p)
        fd = FDOracle(s, p).compute()
        for k, attr in JET_FIELDS.items():
            v = np.asarray(getattr(g, attr).value)
            ref = np.linalg.norm(np.asarray(getattr(g, JET_FIELDS[REFERENCE.get(k, k)]).value))
            err = np.linalg.norm(v - fd[k]) / ref
            worst[k] = max(worst.get(k, 0.0), err)
    problems = [f"{k} {e:.1e}" for k, e in worst.items() if e > 1e-4]
    top = max(worst, key=worst.get)
    report_criterion(9, "jets match the FD oracle on randers-const-beta", problems,
                     f"{len(worst)} tensors, worst {top} {worst[top]:.1e}")
    assert not problems


def test_criterion_10_determinism(capsys):
    problems, sizes = [], []
    for command in ("classify", "verify"):
        argv = [command, *SHIPPED, "--samples", str(N_SAMPLES), "--seed", "0"]
        outs = []
        for _ in range(2):
            code = cli.main(argv)
            outs.append(capsys.readouterr().out)
            if code != 0:
                problems.append(f"{command} exit {code}")
        if outs[0] != outs[1]:
            problems.append(f"{command} output differs")
        sizes.append(f"{command} {len(outs[0])} bytes")
    with capsys.disabled():
        report_criterion(10, "two identical runs give byte-identical JSON", problems, ", ".join(sizes))
    assert not problems
