"""Exact stratified Lie algebra machinery.

Graded nilpotent algebras are stored by their structure constants over a
graded basis ``X_1, ..., X_d`` (layer 1 first).  Group elements are points of
the underlying vector space in exponential coordinates of the first kind, with
the product given by the (finite) Baker-Campbell-Hausdorff series.  All
arithmetic is generic over the scalar type, so ``Fraction`` and ``sympy``
inputs stay exact while floats give ordinary floating results.

Vector fields and the magnetic operators ``p_i - coupling * a_i`` are
represented as first-order differential operators with polynomial
coefficients (:class:`PolyDiffOp`).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Mapping

import sympy as sp

from .exceptions import ValidationError

__all__ = [
    "StratifiedAlgebra",
    "PolyDiffOp",
    "MagneticClosure",
    "make_heisenberg",
    "make_abelian",
    "make_engel",
    "bch_product",
    "group_inverse",
    "dilate",
    "homogeneous_dimension",
    "invariant_fields",
    "coordinate_functions",
    "magnetic_closure",
]


def _is_symbolic(values):
    return any(isinstance(v, sp.Basic) for v in values)


@dataclass(frozen=True, eq=False)
class StratifiedAlgebra:
    """Graded nilpotent Lie algebra with rational structure constants.

    ``structure_consts[(i, j)]`` for ``i < j`` maps target index ``k`` to
    ``c^k_{ij}``, so that ``[X_i, X_j] = sum_k c^k_{ij} X_k`` (0-based
    indices).  Antisymmetry is implied by the storage; Jacobi, grading and
    generation by the first layer are checked on construction.
    """

    layer_dims: tuple
    structure_consts: Mapping = field(default_factory=dict)

    def __post_init__(self):
        dims = tuple(int(n) for n in self.layer_dims)
        if not dims or any(n <= 0 for n in dims):
            raise ValidationError(f"layer dimensions must be positive, got {self.layer_dims}")
        object.__setattr__(self, "layer_dims", dims)
        d = sum(dims)
        table = {}
        for (i, j), targets in dict(self.structure_consts).items():
            if not (0 <= i < d and 0 <= j < d) or i == j:
                raise ValidationError(f"invalid bracket index pair {(i, j)}")
            sign = 1
            if i > j:
                i, j, sign = j, i, -1
            row = table.setdefault((i, j), {})
            for k, c in dict(targets).items():
                c = Fraction(c) * sign
                if c:
                    row[int(k)] = row.get(int(k), 0) + c
        table = {key: row for key, row in table.items() if any(row.values())}
        object.__setattr__(self, "structure_consts", table)
        self._check_grading()
        self._check_jacobi()
        self._check_generation()

    @property
    def dim(self):
        return sum(self.layer_dims)

    @property
    def step(self):
        return len(self.layer_dims)

    @property
    def layer_weights(self):
        """Dilation weight per layer; a stratified algebra has ``nu_i = i``."""
        return tuple(range(1, self.step + 1))

    @property
    def weights(self):
        """Dilation weight of every basis element."""
        return tuple(w for w, n in zip(self.layer_weights, self.layer_dims) for _ in range(n))

    def basis_bracket(self, i, j):
        """Coefficient dict of ``[X_i, X_j]``."""
        if i == j:
            return {}
        if i < j:
            return dict(self.structure_consts.get((i, j), {}))
        return {k: -c for k, c in self.structure_consts.get((j, i), {}).items()}

    def bracket(self, u, v):
        """Lie bracket of two coordinate vectors (generic scalar type)."""
        u, v = tuple(u), tuple(v)
        if len(u) != self.dim or len(v) != self.dim:
            raise ValidationError(f"expected vectors of length {self.dim}")
        symbolic = _is_symbolic(u + v)
        out = [0] * self.dim
        for (i, j), targets in self.structure_consts.items():
            coeff = u[i] * v[j] - u[j] * v[i]
            if not symbolic and coeff == 0:
                continue
            for k, c in targets.items():
                c = sp.Rational(c.numerator, c.denominator) if symbolic else c
                out[k] = out[k] + c * coeff
        return tuple(out)

    def _check_grading(self):
        w = self.weights
        for (i, j), targets in self.structure_consts.items():
            for k in targets:
                if w[k] != w[i] + w[j]:
                    raise ValidationError(
                        f"[X_{i + 1}, X_{j + 1}] has a component in layer {w[k]}, "
                        f"expected layer {w[i] + w[j]}"
                    )

    def _check_jacobi(self):
        d = self.dim
        basis = [tuple(Fraction(int(a == b)) for b in range(d)) for a in range(d)]
        for i, j, k in itertools.combinations(range(d), 3):
            x, y, z = basis[i], basis[j], basis[k]
            terms = (
                self.bracket(x, self.bracket(y, z)),
                self.bracket(y, self.bracket(z, x)),
                self.bracket(z, self.bracket(x, y)),
            )
            if any(sum(t[m] for t in terms) != 0 for m in range(d)):
                raise ValidationError(f"Jacobi identity fails on (X_{i + 1}, X_{j + 1}, X_{k + 1})")

    def _check_generation(self):
        d1, d = self.layer_dims[0], self.dim
        gens = [tuple(Fraction(int(a == b)) for b in range(d)) for a in range(d1)]
        rows, current = list(gens), list(gens)
        for _ in range(self.step):
            current = [v for v in (self.bracket(g, w) for g in gens for w in current) if any(v)]
            if not current:
                break
            rows.extend(current)
        if sp.Matrix([[sp.Rational(c.numerator, c.denominator) for c in r] for r in rows]).rank() != d:
            raise ValidationError("the first layer does not generate the algebra")

    def __repr__(self):
        rel = ", ".join(
            f"[X{i + 1},X{j + 1}]=" + "+".join(f"{c}*X{k + 1}" for k, c in t.items())
            for (i, j), t in sorted(self.structure_consts.items())
        )
        return f"StratifiedAlgebra(layers={self.layer_dims}, {rel or 'abelian'})"


def make_heisenberg():
    """Three-dimensional Heisenberg algebra, ``[X, Y] = Z`` with ``Z`` central."""
    return StratifiedAlgebra((2, 1), {(0, 1): {2: 1}})


def make_abelian(d):
    return StratifiedAlgebra((d,), {})


def make_engel():
    """Four-dimensional Engel algebra, layers (2, 1, 1)."""
    return StratifiedAlgebra((2, 1, 1), {(0, 1): {2: 1}, (0, 2): {3: 1}})


def homogeneous_dimension(a):
    """``D = sum_i nu_i dim g^(i)`` with ``nu_i = i``."""
    return sum(w * n for w, n in zip(a.layer_weights, a.layer_dims))


# -- Baker-Campbell-Hausdorff --------------------------------------------------


@lru_cache(maxsize=None)
def _dynkin_terms(order):
    """Dynkin's series truncated at total degree ``order``.

    Returns a tuple of ``(word, coefficient)`` where ``word`` is a string over
    ``{'X', 'Y'}`` standing for the right-nested bracket
    ``[w_1, [w_2, ... [w_{m-1}, w_m]]]``.
    """
    acc = {}
    pairs = [(r, s) for r in range(order + 1) for s in range(order + 1) if 0 < r + s <= order]

    def extend(seq, total):
        n = len(seq)
        if n:
            denom = total
            for r, s in seq:
                denom *= math.factorial(r) * math.factorial(s)
            word = "".join("X" * r + "Y" * s for r, s in seq)
            # right-nested brackets ending in a repeated letter vanish
            if len(word) == 1 or word[-1] != word[-2]:
                acc[word] = acc.get(word, 0) + Fraction((-1) ** (n - 1), n) / denom
        for r, s in pairs:
            if total + r + s <= order:
                extend(seq + ((r, s),), total + r + s)

    extend((), 0)
    return tuple((w, c) for w, c in sorted(acc.items()) if c)


def bch_product(a, u, v):
    """Group law ``u * v = H(u, v)`` in exponential coordinates.

    The Dynkin series is truncated at the nilpotency step, where it is
    exact.  Works for ``Fraction``, ``float``, ``int`` and ``sympy`` inputs.
    """
    u, v = tuple(u), tuple(v)
    if len(u) != a.dim or len(v) != a.dim:
        raise ValidationError(
            f"dimension mismatch: algebra has dim {a.dim}, got {len(u)} and {len(v)}"
        )
    symbolic = _is_symbolic(u + v)
    letters = {"X": u, "Y": v}
    out = [ui + vi for ui, vi in zip(u, v)]
    cache = {}

    def nested(word):
        if word not in cache:
            if len(word) == 1:
                cache[word] = letters[word]
            else:
                cache[word] = a.bracket(letters[word[0]], nested(word[1:]))
        return cache[word]

    for word, coeff in _dynkin_terms(a.step):
        if len(word) == 1:
            continue
        c = sp.Rational(coeff.numerator, coeff.denominator) if symbolic else coeff
        out = [o + c * t for o, t in zip(out, nested(word))]
    if symbolic:
        out = [sp.expand(o) for o in out]
    return tuple(out)


def group_inverse(u):
    """In exponential coordinates the inverse of ``exp(X)`` is ``exp(-X)``."""
    return tuple(-x for x in u)


def dilate(a, eps, u):
    """Apply the automorphism ``delta_eps``: layer ``i`` scales by ``eps**i``."""
    if not eps > 0:
        raise ValidationError(f"dilation parameter must be positive, got {eps}")
    u = tuple(u)
    if len(u) != a.dim:
        raise ValidationError(f"dimension mismatch: algebra has dim {a.dim}, got {len(u)}")
    return tuple(x * eps**w for x, w in zip(u, a.weights))


# -- polynomial differential operators ----------------------------------------


class PolyDiffOp:
    """First-order differential operator ``sum_k V_k d/dx_k + p``.

    Coefficients ``V_k`` and ``p`` are polynomials with exact rational
    coefficients in ``variables``.
    """

    __slots__ = ("variables", "vector", "scalar")

    def __init__(self, variables, vector=None, scalar=0):
        self.variables = tuple(variables)
        n = len(self.variables)
        vector = (0,) * n if vector is None else tuple(vector)
        if len(vector) != n:
            raise ValidationError(f"expected {n} vector components, got {len(vector)}")
        self.vector = tuple(sp.expand(sp.nsimplify(c, rational=True)) for c in vector)
        self.scalar = sp.expand(sp.nsimplify(scalar, rational=True))

    @classmethod
    def derivative(cls, variables, k):
        return cls(variables, [int(i == k) for i in range(len(variables))])

    @classmethod
    def multiplication(cls, variables, poly):
        return cls(variables, None, poly)

    @property
    def order(self):
        if any(c != 0 for c in self.vector):
            return 1
        return 0 if self.scalar != 0 else -1

    def __call__(self, f):
        f = sp.sympify(f)
        return sp.expand(self._derive(f) + self.scalar * f)

    def _derive(self, f):
        return sp.expand(sum(c * sp.diff(f, x) for c, x in zip(self.vector, self.variables)))

    def _check(self, other):
        if not isinstance(other, PolyDiffOp) or other.variables != self.variables:
            raise ValidationError("operators must share the same variables")

    def commutator(self, other):
        """``[self, other] = self*other - other*self``."""
        self._check(other)
        vec = [self._derive(w) - other._derive(v) for v, w in zip(self.vector, other.vector)]
        sca = self._derive(other.scalar) - other._derive(self.scalar)
        return PolyDiffOp(self.variables, vec, sca)

    def __add__(self, other):
        self._check(other)
        return PolyDiffOp(
            self.variables,
            [a + b for a, b in zip(self.vector, other.vector)],
            self.scalar + other.scalar,
        )

    def __neg__(self):
        return PolyDiffOp(self.variables, [-c for c in self.vector], -self.scalar)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, k):
        k = sp.nsimplify(k, rational=True)
        return PolyDiffOp(self.variables, [k * c for c in self.vector], k * self.scalar)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, PolyDiffOp) or other.variables != self.variables:
            return NotImplemented
        return (self - other).is_zero()

    __hash__ = None

    def is_zero(self):
        return all(c == 0 for c in self.vector) and self.scalar == 0

    def coefficients(self):
        """Flat ``{(slot, monomial): rational}`` expansion; slot ``-1`` is the scalar part."""
        out = {}
        for slot, expr in [(-1, self.scalar)] + list(enumerate(self.vector)):
            if expr == 0:
                continue
            for monom, c in sp.Poly(expr, *self.variables).terms():
                if c != 0:
                    out[(slot, monom)] = sp.Rational(c)
        return out

    def pushforward(self, forward, inverse):
        """Rewrite the operator in new coordinates ``u = forward(x)``.

        ``forward`` and ``inverse`` are sequences of polynomials in
        ``self.variables`` giving ``u(x)`` and ``x(u)``; the new operator uses
        the same symbols for the new coordinates.
        """
        subs = dict(zip(self.variables, inverse))
        vec = [sp.expand(self._derive(phi).xreplace(subs)) for phi in forward]
        sca = sp.expand(sp.sympify(self.scalar).xreplace(subs))
        return PolyDiffOp(self.variables, vec, sca)

    def __repr__(self):
        parts = []
        for c, x in zip(self.vector, self.variables):
            if c != 0:
                parts.append(f"d/d{x}" if c == 1 else f"({c})*d/d{x}")
        if self.scalar != 0:
            parts.append(f"({self.scalar})")
        return " + ".join(parts) if parts else "0"


def _variables(n, names=None):
    if names is None:
        names = [f"x{i + 1}" for i in range(n)]
    return tuple(sp.Symbol(s, real=True) for s in names)


def _heisenberg_like(a):
    return a.layer_dims == (2, 1) and a.structure_consts == {(0, 1): {2: Fraction(1)}}


def invariant_fields(a, side="left", coords="exponential"):
    """Invariant vector fields of the basis elements as :class:`PolyDiffOp`.

    ``side='left'`` gives ``(A_i psi)(g) = d/dt psi(exp(-t X_i) g)`` and
    ``side='right'`` gives ``(A_i psi)(g) = d/dt psi(g exp(t X_i))``.  With
    ``coords='matrix'`` (Heisenberg only) the fields are expressed in the
    upper-triangular matrix coordinates ``(x, y, z)``, where
    ``-A_1 = d/dx + y d/dz``, ``-A_2 = d/dy``, ``-A_3 = d/dz``.
    """
    if side not in ("left", "right"):
        raise ValidationError(f"side must be 'left' or 'right', got {side!r}")
    if coords not in ("exponential", "matrix"):
        raise ValidationError(f"unknown coordinates {coords!r}")
    if coords == "matrix" and not _heisenberg_like(a):
        raise ValidationError("matrix coordinates are only defined for the Heisenberg algebra")
    eta = _variables(a.dim, ["x", "y", "z"] if coords == "matrix" else None)
    t = sp.Symbol("t", real=True)
    fields = []
    for i in range(a.dim):
        e = [0] * a.dim
        if side == "left":
            e[i] = -t
            moved = bch_product(a, e, eta)
        else:
            e[i] = t
            moved = bch_product(a, eta, e)
        fields.append(PolyDiffOp(eta, [sp.diff(m, t).subs(t, 0) for m in moved]))
    if coords == "matrix":
        x, y, z = eta
        # the matrix entry z equals c + ab/2 for exp(aX + bY + cZ)
        forward = (x, y, z + x * y / 2)
        inverse = (x, y, z - x * y / 2)
        fields = [f.pushforward(forward, inverse) for f in fields]
    return tuple(fields)


def coordinate_functions(a, coords="exponential"):
    """Polynomials ``y_1, ..., y_{d_1}``: the first-layer exponential coordinates.

    They vanish at the identity and satisfy ``-A^(l)_i y_j = A^(r)_i y_j =
    delta_ij`` for ``i, j <= d_1``.
    """
    if coords == "matrix" and not _heisenberg_like(a):
        raise ValidationError("matrix coordinates are only defined for the Heisenberg algebra")
    eta = _variables(a.dim, ["x", "y", "z"] if coords == "matrix" else None)
    return tuple(eta[: a.layer_dims[0]])


# -- nilpotent closure of magnetic Hamiltonians -------------------------------


@dataclass(frozen=True, eq=False)
class MagneticClosure:
    """Result of :func:`magnetic_closure`.

    ``basis`` lists the operators layer by layer, ``step`` is the length of
    the lower central series and ``structure_consts`` maps ``(i, j)`` with
    ``i < j`` to the coefficients of ``[basis_i, basis_j]``.  ``algebra`` is
    set when the layers grade the closure.
    """

    basis: tuple
    layer_dims: tuple
    step: int
    structure_consts: dict
    algebra: StratifiedAlgebra | None

    @property
    def dimension(self):
        return len(self.basis)


def _coefficient_matrix(ops):
    coeffs = [op.coefficients() for op in ops]
    keys = sorted({k for c in coeffs for k in c}, key=repr)
    return sp.Matrix([[c.get(k, 0) for c in coeffs] for k in keys])


def _rank(ops):
    nonzero = [op for op in ops if not op.is_zero()]
    return _coefficient_matrix(nonzero).rank() if nonzero else 0


def _express(op, basis):
    """Coefficients of ``op`` in ``basis``; raises if ``op`` is outside the span."""
    if op.is_zero():
        return [0] * len(basis)
    mat = _coefficient_matrix(list(basis) + [op])
    sol, params = mat[:, :-1].gauss_jordan_solve(mat[:, -1])
    if params.shape[0]:
        sol = sol.subs({p: 0 for p in params})
    return [sp.Rational(s) for s in sol]


def _parse_polynomial(comp, x):
    local = {f"x{i + 1}": x[i] for i in range(3)}
    local.update({"x": x[0], "y": x[1], "z": x[2]})
    expr = sp.sympify(comp, locals=local)
    expr = expr.xreplace({sp.Symbol(name): v for name, v in local.items()})
    if expr.free_symbols - set(x) or not expr.is_polynomial(*x):
        raise ValidationError(f"vector potential component {comp!r} is not a polynomial in x1, x2, x3")
    return sp.nsimplify(sp.expand(expr), rational=True)


def magnetic_closure(potential, coupling=1, max_rounds=None):
    """Lie algebra generated by ``X_i = d/dx_i - coupling * a_i``, ``i = 1, 2, 3``.

    ``potential`` is a sequence of three polynomials (``sympy`` expressions or
    strings in ``x1, x2, x3``).  Commutators with the generators are taken
    round by round until the lower central series vanishes, which happens
    after at most ``max degree + 1`` rounds because each bracket
    differentiates the potential once more.
    """
    if len(potential) != 3:
        raise ValidationError("the vector potential must have three components")
    x = _variables(3)
    polys = [_parse_polynomial(comp, x) for comp in potential]
    kappa = sp.nsimplify(repr(coupling) if isinstance(coupling, float) else coupling, rational=True)
    gens = [PolyDiffOp.derivative(x, i) - PolyDiffOp.multiplication(x, kappa * polys[i]) for i in range(3)]
    if max_rounds is None:
        degree = max((sp.Poly(p, *x).total_degree() for p in polys if p != 0), default=0)
        max_rounds = degree + 2

    layers = [list(gens)]
    basis = list(gens)
    current = list(gens)
    step = 1
    for _ in range(max_rounds):
        span = []
        for g in gens:
            for v in current:
                b = g.commutator(v)
                if not b.is_zero() and _rank(span + [b]) > len(span):
                    span.append(b)
        if not span:
            break
        step += 1
        added = []
        for b in span:
            if _rank(basis + added + [b]) > len(basis) + len(added):
                added.append(b)
        if added:
            layers.append(added)
            basis.extend(added)
        current = span
    else:
        raise ValidationError("commutator closure did not terminate within the degree bound")

    consts = {}
    for i, j in itertools.combinations(range(len(basis)), 2):
        coeffs = _express(basis[i].commutator(basis[j]), basis)
        row = {k: c for k, c in enumerate(coeffs) if c != 0}
        if row:
            consts[(i, j)] = row

    dims = tuple(len(layer) for layer in layers)
    algebra = None
    if len(dims) == step:
        try:
            algebra = StratifiedAlgebra(
                dims,
                {k: {m: Fraction(int(c.p), int(c.q)) for m, c in v.items()} for k, v in consts.items()},
            )
        except ValidationError:
            algebra = None
    return MagneticClosure(tuple(basis), dims, step, consts, algebra)
