import time
from fractions import Fraction

import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from liehomog import ValidationError
from liehomog.lie import (PolyDiffOp, StratifiedAlgebra, bch_product, coordinate_functions, dilate,
                          group_inverse, homogeneous_dimension, invariant_fields, magnetic_closure,
                          make_abelian, make_engel, make_heisenberg)

rationals = st.fractions(min_value=-5, max_value=5, max_denominator=12)
positive = st.fractions(min_value=Fraction(1, 8), max_value=8, max_denominator=8)


def triple(n):
    return st.tuples(*[rationals] * n)


def test_heisenberg_bch_of_generators():
    a = make_heisenberg()
    assert bch_product(a, (1, 0, 0), (0, 1, 0)) == (1, 1, Fraction(1, 2))
    assert bch_product(a, (0, 1, 0), (1, 0, 0)) == (1, 1, Fraction(-1, 2))


def test_engel_bch_third_order():
    # [X1, X2] = X3, [X1, X3] = X4, [X2, X3] = 0
    a = make_engel()
    u = (Fraction(1), Fraction(0), Fraction(0), Fraction(0))
    v = (Fraction(0), Fraction(1), Fraction(0), Fraction(0))
    # H = X + Y + [X,Y]/2 + [X,[X,Y]]/12 - [Y,[X,Y]]/12
    assert bch_product(a, u, v) == (1, 1, Fraction(1, 2), Fraction(1, 12))


@settings(max_examples=60, deadline=None)
@given(triple(3), triple(3), triple(3))
def test_bch_associative_heisenberg(u, v, w):
    a = make_heisenberg()
    assert bch_product(a, bch_product(a, u, v), w) == bch_product(a, u, bch_product(a, v, w))


@settings(max_examples=30, deadline=None)
@given(triple(4), triple(4), triple(4))
def test_bch_associative_engel(u, v, w):
    a = make_engel()
    assert bch_product(a, bch_product(a, u, v), w) == bch_product(a, u, bch_product(a, v, w))


@settings(max_examples=60, deadline=None)
@given(triple(3))
def test_inverse(u):
    a = make_heisenberg()
    assert bch_product(a, u, group_inverse(u)) == (0, 0, 0)


@settings(max_examples=60, deadline=None)
@given(positive, triple(4), triple(4))
def test_dilation_is_group_and_bracket_homomorphism(eps, u, v):
    a = make_engel()
    assert dilate(a, eps, bch_product(a, u, v)) == bch_product(a, dilate(a, eps, u), dilate(a, eps, v))
    assert dilate(a, eps, a.bracket(u, v)) == a.bracket(dilate(a, eps, u), dilate(a, eps, v))


def test_dilation_composes():
    a = make_heisenberg()
    u = (Fraction(1, 3), Fraction(-2), Fraction(5, 7))
    assert dilate(a, Fraction(2), dilate(a, Fraction(3), u)) == dilate(a, Fraction(6), u)
    assert dilate(a, 2, (1, 1, 1)) == (2, 2, 4)


def test_dilation_rejects_nonpositive():
    with pytest.raises(ValidationError):
        dilate(make_heisenberg(), 0, (1, 0, 0))


def test_homogeneous_dimension():
    assert homogeneous_dimension(make_heisenberg()) == 4
    assert homogeneous_dimension(make_abelian(3)) == 3
    assert homogeneous_dimension(make_engel()) == 7


def test_invalid_structure_constants():
    with pytest.raises(ValidationError):
        StratifiedAlgebra((2, 1), {(0, 1): {0: 1}})  # breaks the grading
    with pytest.raises(ValidationError):
        StratifiedAlgebra((2, 1), {})  # layer 1 does not generate


@pytest.mark.parametrize("make", [make_heisenberg, make_engel])
def test_coordinate_functions_identity(make):
    a = make()
    left = invariant_fields(a, "left")
    right = invariant_fields(a, "right")
    ys = coordinate_functions(a)
    for i in range(a.layer_dims[0]):
        for j, y in enumerate(ys):
            assert sp.simplify(-left[i](y) - (i == j)) == 0
            assert sp.simplify(right[i](y) - (i == j)) == 0


def test_heisenberg_matrix_coordinate_fields():
    a = make_heisenberg()
    A = invariant_fields(a, "left", coords="matrix")
    y = A[0].variables[1]
    d = [PolyDiffOp.derivative(A[0].variables, k) for k in range(3)]
    assert -A[0] == PolyDiffOp(A[0].variables, [1, 0, y])
    assert -A[1] == d[1]
    assert -A[2] == d[2]
    assert (-A[0]).commutator(-A[1]) == -d[2]


def test_left_fields_commute_with_right_fields():
    a = make_engel()
    for L in invariant_fields(a, "left"):
        for R in invariant_fields(a, "right"):
            assert L.commutator(R).is_zero()


def test_left_fields_close_with_structure_constants():
    a = make_heisenberg()
    A = invariant_fields(a, "left")
    # X -> dL(X) is a Lie homomorphism, so [A_1, A_2] = A_3
    assert A[0].commutator(A[1]) == A[2]


@pytest.mark.parametrize(
    "potential, dims, step",
    [
        (("0", "0", "0"), (3,), 1),
        (("0", "3*x1", "0"), (3, 1), 2),
        (("0", "x1**2/2", "0"), (3, 1, 1), 3),
    ],
)
def test_magnetic_closure(potential, dims, step):
    t = time.perf_counter()
    closure = magnetic_closure(potential)
    assert time.perf_counter() - t < 1.0
    assert closure.layer_dims == dims
    assert closure.step == step


def test_magnetic_closure_bad_potential():
    with pytest.raises(ValidationError):
        magnetic_closure(("0", "x1"))
