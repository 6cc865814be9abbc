"""Arithmetic in the truncated algebra on d+1 graded generators.

Generators are e_0, ..., e_d.  A word is a tuple of letters in {0..d}; its
degree is the letter count with every 0 counted twice, so e_0 behaves like a
quadratic (time-like) symbol.  All products truncate words of degree > m.
Elements are stored as sparse word -> coefficient maps; dense vectors over
the graded-lexicographic basis are available for linear solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ContextMismatchError, DomainError, InvalidWordError

Word = tuple[int, ...]

EMPTY_WORD: Word = ()


def word_degree(word, d=None):
    """Degree of a multi-index: length plus the number of zeros.

    Letters must be non-negative integers; if ``d`` is given they must not
    exceed it.  The empty word has degree 0.
    """
    deg = 0
    for letter in word:
        if letter < 0 or (d is not None and letter > d):
            raise InvalidWordError(f"letter {letter} outside 0..{d} in word {word}")
        deg += 2 if letter == 0 else 1
    return deg


class AlgebraContext:
    """Basis bookkeeping for fixed driver count d and truncation degree m.

    The basis is every word of degree <= m in graded-lexicographic order
    (degree first, then tuple order).  Contexts compare equal by (d, m).
    """

    def __init__(self, d, m):
        if d < 1:
            raise DomainError(f"need at least one driver, got d={d}")
        if m < 1:
            raise DomainError(f"truncation degree must be >= 1, got m={m}")
        self.d = int(d)
        self.m = int(m)
        words = [EMPTY_WORD]
        frontier = [EMPTY_WORD]
        degrees = {EMPTY_WORD: 0}
        while frontier:
            nxt = []
            for w in frontier:
                for letter in range(self.d + 1):
                    nw = w + (letter,)
                    deg = degrees[w] + (2 if letter == 0 else 1)
                    if deg <= self.m:
                        degrees[nw] = deg
                        nxt.append(nw)
            words.extend(nxt)
            frontier = nxt
        words.sort(key=lambda w: (degrees[w], w))
        self.basis = tuple(words)
        self.index = {w: i for i, w in enumerate(words)}
        self._degrees = degrees

    @property
    def dim(self):
        return len(self.basis)

    def degree(self, word):
        try:
            return self._degrees[word]
        except KeyError:
            return word_degree(word, self.d)

    def check_word(self, word):
        if word not in self.index:
            # distinguish bad letters from over-degree words
            deg = word_degree(word, self.d)
            raise InvalidWordError(f"word {word} has degree {deg} > m={self.m}")
        return word

    def __eq__(self, other):
        return isinstance(other, AlgebraContext) and (self.d, self.m) == (other.d, other.m)

    def __hash__(self):
        return hash((self.d, self.m))

    def __repr__(self):
        return f"AlgebraContext(d={self.d}, m={self.m})"


@lru_cache(maxsize=None)
def context(d, m):
    """Shared context instance for (d, m)."""
    return AlgebraContext(d, m)


class TensorElement:
    """Sparse element of the truncated algebra: word -> coefficient.

    Instances are immutable by convention; every operation returns a new
    element and never mutates its inputs.
    """

    __slots__ = ("context", "coeffs")

    def __init__(self, ctx, coeffs=None):
        self.context = ctx
        clean = {}
        if coeffs:
            for w, c in coeffs.items():
                w = tuple(w)
                ctx.check_word(w)
                c = float(c)
                if c != 0.0:
                    clean[w] = c
        self.coeffs = clean

    def coeff(self, word):
        return self.coeffs.get(tuple(word), 0.0)

    def __add__(self, other):
        _check_same_context(self, other)
        out = dict(self.coeffs)
        for w, c in other.coeffs.items():
            out[w] = out.get(w, 0.0) + c
        return TensorElement(self.context, out)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return TensorElement(self.context, {w: -c for w, c in self.coeffs.items()})

    def __mul__(self, other):
        if isinstance(other, TensorElement):
            return mul(self, other)
        s = float(other)
        return TensorElement(self.context, {w: s * c for w, c in self.coeffs.items()})

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, s):
        return self * (1.0 / float(s))

    def __eq__(self, other):
        return (
            isinstance(other, TensorElement)
            and self.context == other.context
            and self.coeffs == other.coeffs
        )

    def __hash__(self):
        return hash((self.context, frozenset(self.coeffs.items())))

    def graded_part(self, n):
        """Projection onto the span of degree-n words."""
        deg = self.context.degree
        return TensorElement(
            self.context, {w: c for w, c in self.coeffs.items() if deg(w) == n}
        )

    def __repr__(self):
        if not self.coeffs:
            return "TensorElement(0)"
        parts = []
        for w in sorted(self.coeffs, key=lambda w: (self.context.degree(w), w)):
            name = "1" if not w else "e" + "".join(str(i) for i in w)
            parts.append(f"{self.coeffs[w]:+.6g}*{name}")
        return "TensorElement(" + " ".join(parts) + ")"


def _check_same_context(x, y):
    if x.context != y.context:
        raise ContextMismatchError(f"contexts differ: {x.context} vs {y.context}")


def zero(ctx):
    return TensorElement(ctx, {})


def unit(ctx):
    return TensorElement(ctx, {EMPTY_WORD: 1.0})


def generator(ctx, i):
    if not 0 <= i <= ctx.d:
        raise InvalidWordError(f"no generator e_{i} for d={ctx.d}")
    return TensorElement(ctx, {(i,): 1.0})


def mul(x, y):
    """Concatenation product, truncating words of degree > m."""
    _check_same_context(x, y)
    ctx = x.context
    m = ctx.m
    deg = ctx.degree
    out = {}
    for wx, cx in x.coeffs.items():
        dx = deg(wx)
        for wy, cy in y.coeffs.items():
            if dx + deg(wy) <= m:
                w = wx + wy
                out[w] = out.get(w, 0.0) + cx * cy
    return TensorElement(ctx, out)


def exp(x):
    """Exponential series of a nilpotent element (zero constant term)."""
    if x.coeff(EMPTY_WORD) != 0.0:
        raise DomainError("exp requires zero coefficient on the empty word")
    ctx = x.context
    result = unit(ctx)
    term = unit(ctx)
    for i in range(1, ctx.m + 1):
        term = mul(term, x) / i
        if not term.coeffs:
            break
        result = result + term
    return result


def log(x):
    """Logarithm of an element with positive constant term.

    For constant term c the value is log(c)*1 plus the finite alternating
    series in (x - c)/c, which is nilpotent.
    """
    ctx = x.context
    c0 = x.coeff(EMPTY_WORD)
    if c0 <= 0.0:
        raise DomainError(f"log requires positive constant term, got {c0}")
    u = (x - c0 * unit(ctx)) / c0
    result = TensorElement(ctx, {EMPTY_WORD: math.log(c0)})
    power = u
    for i in range(1, ctx.m + 1):
        if not power.coeffs:
            break
        sign = 1.0 if i % 2 == 1 else -1.0
        result = result + power * (sign / i)
        power = mul(power, u)
    return result


def dilate(s, x):
    """Grading automorphism: scale every degree-n coefficient by s**n."""
    if s <= 0.0:
        raise DomainError(f"dilation parameter must be positive, got {s}")
    deg = x.context.degree
    return TensorElement(x.context, {w: (s ** deg(w)) * c for w, c in x.coeffs.items()})


def bracket(x, y):
    """Commutator xy - yx."""
    return mul(x, y) - mul(y, x)


def adjoint(g, w):
    """Conjugation g w g^{-1} of a Lie element by a group-like element."""
    c0 = g.coeff(EMPTY_WORD)
    if c0 == 0.0:
        raise DomainError("adjoint requires an invertible element (nonzero constant term)")
    if w.coeff(EMPTY_WORD) != 0.0:
        raise DomainError("adjoint direction must have zero constant term")
    gn = g / c0
    g_inv = exp(-log(gn))
    return mul(mul(gn, w), g_inv)


def heat_element(ctx, t):
    """exp(t*(e_0 + 1/2 sum_i e_i^2)), the expected truncated Brownian signature.

    The exponent has degree 2, so at m=1 the element degenerates to 1.
    """
    if t <= 0.0:
        raise DomainError(f"time horizon must be positive, got {t}")
    if ctx.m < 2:
        return unit(ctx)
    exponent = {(0,): t}
    for i in range(1, ctx.d + 1):
        exponent[(i, i)] = 0.5 * t
    return exp(TensorElement(ctx, exponent))


def bracket_monomial(ctx, word):
    """Right-nested bracket [e_{i1}, [e_{i2}, [..., e_{ik}]...]] for a word."""
    if len(word) == 0:
        raise InvalidWordError("bracket monomial needs a nonempty word")
    elt = generator(ctx, word[-1])
    for letter in reversed(word[:-1]):
        elt = bracket(generator(ctx, letter), elt)
    return elt


@dataclass(frozen=True)
class LieBasis:
    """An independent spanning set of bracket monomials, with dense columns."""

    context: AlgebraContext
    words: tuple
    elements: tuple
    matrix: np.ndarray  # (dim A, dim Lie), columns in `words` order

    @property
    def dim(self):
        return len(self.words)


@lru_cache(maxsize=None)
def lie_basis(ctx):
    """Greedily select independent right-nested bracket monomials of degree <= m.

    Candidates run over nonempty basis words in graded-lex order; a candidate
    is kept if its component orthogonal to the current span exceeds 1e-10
    relative to its own norm (modified Gram-Schmidt pivoting).
    """
    columns = []
    kept_words = []
    kept_elements = []
    ortho = []
    for w in ctx.basis:
        if len(w) == 0:
            continue
        elt = bracket_monomial(ctx, w)
        col = to_dense(elt)
        norm = np.linalg.norm(col)
        if norm <= 1e-14:
            continue
        r = col.copy()
        for q in ortho:
            r -= (q @ r) * q
        if np.linalg.norm(r) > 1e-10 * norm:
            ortho.append(r / np.linalg.norm(r))
            kept_words.append(w)
            kept_elements.append(elt)
            columns.append(col)
    matrix = np.column_stack(columns) if columns else np.zeros((ctx.dim, 0))
    matrix.setflags(write=False)
    return LieBasis(ctx, tuple(kept_words), tuple(kept_elements), matrix)


def lie_coordinates(basis, x):
    """Least-squares coordinates of x in the Lie basis and the max-abs residual."""
    vec = to_dense(x)
    coords, *_ = np.linalg.lstsq(basis.matrix, vec, rcond=None)
    residual = np.max(np.abs(basis.matrix @ coords - vec)) if basis.dim else np.max(np.abs(vec), initial=0.0)
    return coords, float(residual)


def to_dense(x):
    """Coefficient vector over the context basis (graded-lex order)."""
    vec = np.zeros(x.context.dim)
    index = x.context.index
    for w, c in x.coeffs.items():
        vec[index[w]] = c
    return vec


def from_dense(ctx, vec):
    if len(vec) != ctx.dim:
        raise DomainError(f"dense vector length {len(vec)} != basis size {ctx.dim}")
    return TensorElement(ctx, {w: v for w, v in zip(ctx.basis, vec)})


def max_abs_diff(x, y):
    """Largest coefficient difference between two elements."""
    _check_same_context(x, y)
    words = set(x.coeffs) | set(y.coeffs)
    return max((abs(x.coeff(w) - y.coeff(w)) for w in words), default=0.0)


def element_to_dict(x, threshold=1e-15):
    """JSON-friendly form: words in basis order, near-zero coefficients omitted."""
    coeffs = [
        {"word": list(w), "c": x.coeffs[w]}
        for w in x.context.basis
        if w in x.coeffs and abs(x.coeffs[w]) >= threshold
    ]
    return {"d": x.context.d, "m": x.context.m, "coeffs": coeffs}


def element_from_dict(data):
    ctx = context(int(data["d"]), int(data["m"]))
    coeffs = {tuple(item["word"]): float(item["c"]) for item in data["coeffs"]}
    return TensorElement(ctx, coeffs)
