import cmath

from hypothesis import given
from hypothesis import strategies as st

from peanolap.exact import ExactPoint

orders = st.sampled_from([3, 4, 5, 8])
small = st.integers(-20, 20)


@st.composite
def points(draw, n=None):
    n = n or draw(orders)
    deg = {3: 2, 4: 2, 5: 4, 8: 4}[n]
    return ExactPoint.make(n, draw(st.lists(small, min_size=deg, max_size=deg)), draw(st.integers(1, 12)))


@st.composite
def triples(draw):
    n = draw(orders)
    return draw(points(n)), draw(points(n)), draw(points(n))


@given(triples())
def test_ring_axioms(t):
    a, b, c = t
    assert (a + b) + c == a + (b + c)
    assert a * b == b * a
    assert a * (b + c) == a * b + a * c
    assert (a - a).is_zero()


@given(triples())
def test_complex_embedding_is_a_homomorphism(t):
    a, b, _ = t
    assert abs((a * b).to_complex() - a.to_complex() * b.to_complex()) < 1e-9 * (1 + abs(a.to_complex() * b.to_complex()))
    assert abs((a + b).to_complex() - (a.to_complex() + b.to_complex())) < 1e-9 * (1 + abs(a.to_complex()) + abs(b.to_complex()))


@given(points())
def test_conjugate(a):
    assert a.conjugate().conjugate() == a
    assert abs(a.conjugate().to_complex() - a.to_complex().conjugate()) < 1e-9 * (1 + abs(a.to_complex()))


def test_roots_of_unity():
    for n in (3, 4, 5, 8):
        z = ExactPoint.root(n)
        p = ExactPoint.integer(n, 1)
        for _ in range(n):
            p = p * z
        assert p == ExactPoint.integer(n, 1)
        assert abs(z.to_complex() - cmath.exp(2j * cmath.pi / n)) < 1e-15


def test_normal_form_makes_equality_structural():
    a = ExactPoint.make(8, [2, 4, 6, 0], 4)
    assert a == ExactPoint.make(8, [1, 2, 3], 2)
    assert a.scale(2) == ExactPoint.make(8, [1, 2, 3])
    assert hash(a) == hash(ExactPoint.make(8, [1, 2, 3], 2))
