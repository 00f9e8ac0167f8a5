from collections import defaultdict
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peanolap.curves import (
    CurveError,
    FractalId,
    LevelCapError,
    build_system,
    class_histogram,
    denominator,
    edge_cover,
    export_csv,
    generate,
    identify,
    point_at,
    substitute,
)

LEVELS = {
    FractalId.SG: (0, 1, 2, 3),
    FractalId.PG: (1, 2, 3),
    FractalId.OG: (0, 1, 2),
    FractalId.MC: (1, 2, 3),
    FractalId.TORUS: (0, 1, 2),
    FractalId.TRIANGLE: (0, 1, 2, 3),
}
CASES = [(f, m) for f, ms in LEVELS.items() for m in ms]


def test_denominator_law():
    for m in range(4):
        assert denominator("SG", m) == 3 ** (m + 1)
        assert denominator("PG", m) == 5 ** (m + 1)
        assert denominator("OG", m) == 2 * 8 ** (m + 1)
        assert denominator("MC", m) == 2 * 8**m
        assert denominator("TORUS", m) == 2 * 9**m
        assert denominator("TRIANGLE", m) == 3 * 4**m


@pytest.mark.parametrize("f,m", CASES)
def test_curve_is_a_continuous_loop(f, m):
    c = generate(f, m)
    segs = c.segments
    assert segs[0].paramStart == 0 and segs[-1].paramEnd == 1
    for a, b in zip(segs, segs[1:]):
        assert a.paramEnd == b.paramStart
        if not a.isJump:
            assert a.geoEnd == b.geoStart
    assert segs[-1].geoEnd == segs[0].geoStart
    # every parameter point k/D is a segment start
    assert sorted(c.points()) == sorted(set(c.points()))
    assert all(0 <= k < c.D for k in c.points())


@pytest.mark.parametrize("f,m", [(f, m) for f, m in CASES if m < max(LEVELS[f])])
def test_substitution_refines(f, m):
    assert substitute(generate(f, m)).segments == generate(f, m + 1).segments


def test_segment_counts():
    assert len(generate("MC", 1).segments) == 16
    assert len(generate("TRIANGLE", 1).segments) == 12
    assert len(generate("OG", 2).segments) == 1024
    assert len(generate("SG", 0).segments) == 3
    assert len(build_system("OG").baseCurve.segments) == 16


def test_mc_single_jump():
    jumps = [s for s in generate("MC", 1).segments if s.isJump]
    assert len(jumps) == 1
    assert jumps[0].paramEnd == Fraction(1, 2)


def test_og_base_traces_octagon_twice():
    base = build_system("OG").baseCurve
    starts = [s.geoStart for s in base.segments]
    assert len(set(starts)) == 8
    assert starts[:8] != starts[8:]  # second lap runs the other way round
    assert set(starts[:8]) == set(starts[8:])


def test_mc_level_one_classes():
    idmap = identify(generate("MC", 1))
    classes = {frozenset(c) for c in idmap.classes}
    assert classes == {frozenset(s) for s in ({2, 3, 7, 8, 11, 14}, {0, 5}, {1, 12}, {4, 13}, {6, 9}, {10, 15})}
    assert class_histogram(idmap) == {6: 1, 2: 5}


def test_sg_corners_unidentified():
    for m in (1, 2):
        idmap = identify(generate("SG", m))
        singles = sorted(c[0] for c in idmap.classes if len(c) == 1)
        assert singles == [0, 3**m, 2 * 3**m]


def _coordinate_classes(curve):
    """Independent oracle: group parameter points by rounded float coordinates."""
    groups = defaultdict(set)
    for s in curve.segments:
        x, y = s.geoStart.project()
        groups[(round(x, 9) + 0.0, round(y, 9) + 0.0)].add(int(s.paramStart * curve.D))
    return {frozenset(g) for g in groups.values()}


@pytest.mark.parametrize("f,m", [("SG", 2), ("PG", 1), ("PG", 2), ("OG", 1), ("TRIANGLE", 2)])
def test_identification_matches_coordinate_oracle(f, m):
    c = generate(f, m)
    assert {frozenset(cl) for cl in identify(c).classes} == _coordinate_classes(c)


def test_pg_level_one():
    idmap = identify(generate("PG", 1))
    assert len(idmap.classes) == 10
    singles = [c for c in idmap.classes if len(c) == 1]
    assert sorted(c[0] for c in singles) == [0, 5, 10, 15, 20]
    assert all(len(c) == 2 for c in idmap.classes if len(c) != 1)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_triangle_class_sizes(m):
    h = class_histogram(identify(generate("TRIANGLE", m)))
    assert set(h) <= {1, 3, 6}
    assert h[1] == 3


@pytest.mark.parametrize("m", [1, 2])
def test_torus_pairs(m):
    assert set(class_histogram(identify(generate("TORUS", m)))) == {2}


@pytest.mark.parametrize("f", ["SG", "PG", "TRIANGLE"])
def test_identifications_persist(f):
    m = 1
    coarse, fine = identify(generate(f, m)), identify(generate(f, m + 1))
    ratio = fine.D // coarse.D
    for cl in coarse.classes:
        assert len({fine.classOf[ratio * k] for k in cl}) == 1


def test_edges_traversed_once():
    for f in ("MC", "TORUS", "SG", "PG"):
        assert set(edge_cover(generate(f, 2)).values()) == {1}


def test_point_at_and_base_anchor():
    c = generate("SG", 1)
    assert point_at(c, 0) == build_system("SG").baseCurve.segments[0].geoStart
    assert point_at(c, 3) == c.segments[3].geoStart


def test_level_cap_and_unknown_fractal():
    with pytest.raises(LevelCapError):
        generate("OG", 4)
    with pytest.raises(CurveError):
        generate("KOCH", 1)
    with pytest.raises(CurveError):
        generate("MC", 0)


def test_export_csv():
    c = generate("MC", 1)
    rows = export_csv(c, identify(c)).splitlines()
    assert rows[0] == "k,t_num,t_den,x,y,class_id,is_jump"
    assert len(rows) == 17
    assert rows[3].split(",")[5] == "2"  # k = 2 belongs to the six-point class


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(CASES), st.data())
def test_classes_partition_points(case, data):
    f, m = case
    idmap = identify(generate(f, m))
    members = [k for cl in idmap.classes for k in cl]
    assert sorted(members) == sorted(idmap.classOf)
    k = data.draw(st.sampled_from(members))
    assert k in idmap.classes[[c[0] for c in idmap.classes].index(idmap.classOf[k])]
