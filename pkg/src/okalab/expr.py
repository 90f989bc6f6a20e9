"""Scalar expression parsing and exact first/second derivatives.

Expressions are parsed into an immutable AST and evaluated with
second-order forward-mode differentiation: every node propagates
(value, gradient, Hessian) so that derivatives are exact to machine
precision.  Finite differences are never used here; the downstream
curvature formulas divide by ||grad F||^3 and cannot tolerate noise.

Grammar (EBNF, also documented in the README):

    expr    = term , { ("+" | "-") , term } ;
    term    = unary , { ("*" | "/") , unary } ;
    unary   = "-" , unary | power ;
    power   = atom , [ "^" , unary ]        (* exponent must fold to a constant *) ;
    atom    = number | variable | call | "(" , expr , ")" ;
    call    = ("sqrt" | "exp" | "log") , "(" , expr , ")"
            | "normsq" , "(" , integer , "," , integer , ")" ;
    variable = "x" , integer                 (* 1-based, bounded by the declared dim *) ;

`normsq(i,j)` is the abs-squared composite x_i^2 + ... + x_j^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvaluationDomainError, NonFiniteError, ParseError


# ---------------------------------------------------------------------------
# AST node types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class Add:
    left: object
    right: object


@dataclass(frozen=True)
class Sub:
    left: object
    right: object


@dataclass(frozen=True)
class Mul:
    left: object
    right: object


@dataclass(frozen=True)
class Div:
    left: object
    right: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: float  # constant by construction


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class Sqrt:
    operand: object


@dataclass(frozen=True)
class Exp:
    operand: object


@dataclass(frozen=True)
class Log:
    operand: object


@dataclass(frozen=True)
class NormSq:
    lo: int
    hi: int


@dataclass(frozen=True)
class ExpressionAst:
    """A parsed expression together with the ambient dimension it refers to."""

    root: object
    declared_dim: int


@dataclass(frozen=True)
class Jet2:
    """Value, gradient and symmetric Hessian of a scalar field at one point."""

    value: float
    gradient: np.ndarray
    hessian: np.ndarray


def node_count(ast) -> int:
    root = ast.root if isinstance(ast, ExpressionAst) else ast
    if isinstance(root, (Const, Var, NormSq)):
        return 1
    if isinstance(root, (Neg, Sqrt, Exp, Log)):
        return 1 + node_count(root.operand)
    if isinstance(root, Pow):
        return 1 + node_count(root.base)
    return 1 + node_count(root.left) + node_count(root.right)


# ---------------------------------------------------------------------------
# Tokenizer / recursive-descent parser
# ---------------------------------------------------------------------------

_FUNCTIONS = ("sqrt", "exp", "log", "normsq")


class _Tokenizer:
    def __init__(self, source: str):
        self.source = source
        self.pos = 0
        self.tokens = []
        self._scan()
        self.cursor = 0

    def _scan(self):
        s = self.source
        i = 0
        n = len(s)
        while i < n:
            c = s[i]
            if c.isspace():
                i += 1
                continue
            if c in "+-*/^(),":
                self.tokens.append((c, c, i))
                i += 1
                continue
            if c.isdigit() or c == ".":
                j = i
                while j < n and (s[j].isdigit() or s[j] == "."):
                    j += 1
                # scientific notation
                if j < n and s[j] in "eE":
                    k = j + 1
                    if k < n and s[k] in "+-":
                        k += 1
                    if k < n and s[k].isdigit():
                        while k < n and s[k].isdigit():
                            k += 1
                        j = k
                text = s[i:j]
                try:
                    value = float(text)
                except ValueError:
                    raise ParseError(f"invalid number {text!r}", i)
                self.tokens.append(("num", value, i))
                i = j
                continue
            if c.isalpha() or c == "_":
                j = i
                while j < n and (s[j].isalnum() or s[j] == "_"):
                    j += 1
                self.tokens.append(("ident", s[i:j], i))
                i = j
                continue
            raise ParseError(f"unexpected character {c!r}", i)
        self.tokens.append(("end", None, n))

    def peek(self):
        return self.tokens[self.cursor]

    def next(self):
        tok = self.tokens[self.cursor]
        if tok[0] != "end":
            self.cursor += 1
        return tok


class _Parser:
    def __init__(self, source: str, dim: int):
        self.tz = _Tokenizer(source)
        self.dim = dim

    def parse(self):
        node = self._expr()
        kind, _, pos = self.tz.peek()
        if kind != "end":
            raise ParseError("unexpected trailing input", pos)
        return node

    def _expr(self):
        node = self._term()
        while True:
            kind, _, _ = self.tz.peek()
            if kind == "+":
                self.tz.next()
                node = Add(node, self._term())
            elif kind == "-":
                self.tz.next()
                node = Sub(node, self._term())
            else:
                return node

    def _term(self):
        node = self._unary()
        while True:
            kind, _, _ = self.tz.peek()
            if kind == "*":
                self.tz.next()
                node = Mul(node, self._unary())
            elif kind == "/":
                self.tz.next()
                node = Div(node, self._unary())
            else:
                return node

    def _unary(self):
        kind, _, _ = self.tz.peek()
        if kind == "-":
            self.tz.next()
            return Neg(self._unary())
        return self._power()

    def _power(self):
        base = self._atom()
        kind, _, pos = self.tz.peek()
        if kind != "^":
            return base
        self.tz.next()
        _, _, exp_pos = self.tz.peek()
        exponent_node = self._unary()
        exponent = _fold_constant(exponent_node)
        if exponent is None:
            raise ParseError("exponent of '^' must be a constant expression", exp_pos)
        return Pow(base, float(exponent))

    def _atom(self):
        kind, value, pos = self.tz.next()
        if kind == "num":
            return Const(float(value))
        if kind == "(":
            node = self._expr()
            kind, _, pos2 = self.tz.next()
            if kind != ")":
                raise ParseError("expected ')'", pos2)
            return node
        if kind == "ident":
            return self._ident(value, pos)
        if kind == "end":
            raise ParseError("unexpected end of input", pos)
        raise ParseError(f"unexpected token {value!r}", pos)

    def _ident(self, name: str, pos: int):
        if name in _FUNCTIONS:
            kind, _, p = self.tz.next()
            if kind != "(":
                raise ParseError(f"expected '(' after {name}", p)
            if name == "normsq":
                lo = self._int_literal()
                kind, _, p = self.tz.next()
                if kind != ",":
                    raise ParseError("normsq takes two integer arguments", p)
                hi = self._int_literal()
                kind, _, p = self.tz.next()
                if kind != ")":
                    raise ParseError("expected ')'", p)
                if not (1 <= lo <= hi <= self.dim):
                    raise ParseError(
                        f"normsq({lo},{hi}) out of range for dim {self.dim}", pos
                    )
                return NormSq(lo, hi)
            arg = self._expr()
            kind, _, p = self.tz.next()
            if kind != ")":
                raise ParseError("expected ')'", p)
            return {"sqrt": Sqrt, "exp": Exp, "log": Log}[name](arg)
        if name.startswith("x") and name[1:].isdigit():
            index = int(name[1:])
            if not (1 <= index <= self.dim):
                raise ParseError(
                    f"variable x{index} out of range for dim {self.dim}", pos
                )
            return Var(index)
        raise ParseError(f"unknown identifier {name!r}", pos)

    def _int_literal(self):
        kind, value, pos = self.tz.next()
        if kind != "num" or float(value) != int(value):
            raise ParseError("expected an integer literal", pos)
        return int(value)


def _fold_constant(node):
    """Return the float value of a variable-free subtree, or None."""
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Neg):
        v = _fold_constant(node.operand)
        return None if v is None else -v
    if isinstance(node, (Add, Sub, Mul, Div)):
        a = _fold_constant(node.left)
        b = _fold_constant(node.right)
        if a is None or b is None:
            return None
        if isinstance(node, Add):
            return a + b
        if isinstance(node, Sub):
            return a - b
        if isinstance(node, Mul):
            return a * b
        if b == 0:
            return None
        return a / b
    if isinstance(node, Pow):
        a = _fold_constant(node.base)
        return None if a is None else a ** node.exponent
    return None


def _intern(node, registry):
    """Share structurally equal subtrees so evaluation memoizes by identity."""
    if isinstance(node, (Neg, Sqrt, Exp, Log)):
        node = type(node)(_intern(node.operand, registry))
    elif isinstance(node, Pow):
        node = Pow(_intern(node.base, registry), node.exponent)
    elif isinstance(node, (Add, Sub, Mul, Div)):
        node = type(node)(
            _intern(node.left, registry), _intern(node.right, registry)
        )
    canonical = registry.get(node)
    if canonical is None:
        registry[node] = node
        return node
    return canonical


def parse_expression(source: str, dim: int) -> ExpressionAst:
    """Parse `source` into an AST over variables x1..x<dim>.

    Raises ParseError with a character offset on malformed input, unknown
    identifiers, or variable indices outside [1, dim].
    """
    if not source or not source.strip():
        raise ParseError("empty expression", 0)
    if dim < 1:
        raise ParseError(f"dim must be >= 1, got {dim}", 0)
    root = _Parser(source, dim).parse()
    return ExpressionAst(_intern(root, {}), dim)


# ---------------------------------------------------------------------------
# Pretty printer (round-trips through parse_expression)
# ---------------------------------------------------------------------------

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _prec(node):
    return _PREC.get(type(node), 5)


def to_source(ast) -> str:
    node = ast.root if isinstance(ast, ExpressionAst) else ast
    return _fmt(node)


def _fmt_child(child, parent_prec, tight=False):
    text = _fmt(child)
    child_prec = _prec(child)
    if child_prec < parent_prec or (tight and child_prec == parent_prec):
        return f"({text})"
    return text


def _fmt(node):
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, NormSq):
        return f"normsq({node.lo},{node.hi})"
    if isinstance(node, Add):
        return f"{_fmt_child(node.left, 1)} + {_fmt_child(node.right, 1)}"
    if isinstance(node, Sub):
        return f"{_fmt_child(node.left, 1)} - {_fmt_child(node.right, 1, tight=True)}"
    if isinstance(node, Mul):
        return f"{_fmt_child(node.left, 2)} * {_fmt_child(node.right, 2)}"
    if isinstance(node, Div):
        return f"{_fmt_child(node.left, 2)} / {_fmt_child(node.right, 2, tight=True)}"
    if isinstance(node, Neg):
        return f"-{_fmt_child(node.operand, 3, tight=True)}"
    if isinstance(node, Pow):
        return f"{_fmt_child(node.base, 5)}^({repr(node.exponent)})"
    if isinstance(node, Sqrt):
        return f"sqrt({_fmt(node.operand)})"
    if isinstance(node, Exp):
        return f"exp({_fmt(node.operand)})"
    if isinstance(node, Log):
        return f"log({_fmt(node.operand)})"
    raise TypeError(f"unknown node {node!r}")


# ---------------------------------------------------------------------------
# Forward-mode jet evaluation (batched)
# ---------------------------------------------------------------------------
#
# Jets are triples (value, gradient, hessian) of arrays broadcastable to
# (n,), (n, m), (n, m, m).  Two shortcuts keep the hot loops off the memory
# wall: `None` stands for an exactly-zero gradient/Hessian, and constant
# derivatives keep a leading broadcast axis of length 1.  Structurally equal
# subtrees are evaluated once per call through a per-call memo table.

def _outer_sym(ga, gb):
    # symmetric product grad_a grad_b^T + grad_b grad_a^T, broadcast-safe
    ab = np.einsum("...i,...j->...ij", ga, gb)
    return ab + np.swapaxes(ab, -1, -2)


def _check_finite(v, where):
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"non-finite value while evaluating {where}")


def _combine(a, b, sign):
    if a is None:
        return b if sign > 0 else (None if b is None else -b)
    if b is None:
        return a
    return a + b if sign > 0 else a - b


def _scaled(factor, arr, extra_axes):
    if arr is None:
        return None
    return factor.reshape(factor.shape + (1,) * extra_axes) * arr


def _chain(u, order, value, d1, d2):
    """Unary chain rule: f(u) with f'(u)=d1, f''(u)=d2 (arrays)."""
    v, g, h = value, None, None
    if order >= 1:
        g = _scaled(d1, u[1], 1)
    if order >= 2:
        h = _scaled(d1, u[2], 2)
        if u[1] is not None:
            outer = np.einsum("...i,...j->...ij", u[1], u[1])
            h = _combine(h, _scaled(d2, outer, 2), +1)
    return v, g, h


def _product(a, b, order):
    v = a[0] * b[0]
    g = h = None
    if order >= 1:
        g = _combine(_scaled(b[0], a[1], 1), _scaled(a[0], b[1], 1), +1)
    if order >= 2:
        h = _combine(_scaled(b[0], a[2], 2), _scaled(a[0], b[2], 2), +1)
        if a[1] is not None and b[1] is not None:
            h = _combine(h, _outer_sym(a[1], b[1]), +1)
    return v, g, h


def _eval(node, X, order, cache):
    hit = cache.get(id(node))
    if hit is not None:
        return hit
    result = _eval_node(node, X, order, cache)
    cache[id(node)] = result
    return result


def _eval_node(node, X, order, cache):
    n, m = X.shape
    if isinstance(node, Const):
        return np.array([node.value]), None, None
    if isinstance(node, Var):
        i = node.index - 1
        g = None
        if order >= 1:
            g = np.zeros((1, m))
            g[0, i] = 1.0
        return X[:, i].copy(), g, None
    if isinstance(node, NormSq):
        lo, hi = node.lo - 1, node.hi
        block = X[:, lo:hi]
        v = np.einsum("ni,ni->n", block, block)
        g = h = None
        if order >= 1:
            g = np.zeros((n, m))
            g[:, lo:hi] = 2.0 * block
        if order >= 2:
            h = np.zeros((1, m, m))
            idx = np.arange(lo, hi)
            h[0, idx, idx] = 2.0
        return v, g, h
    if isinstance(node, Neg):
        a = _eval(node.operand, X, order, cache)
        return (
            -a[0],
            None if a[1] is None else -a[1],
            None if a[2] is None else -a[2],
        )
    if isinstance(node, (Add, Sub)):
        sign = +1 if isinstance(node, Add) else -1
        a = _eval(node.left, X, order, cache)
        b = _eval(node.right, X, order, cache)
        v = a[0] + b[0] if sign > 0 else a[0] - b[0]
        return v, _combine(a[1], b[1], sign), _combine(a[2], b[2], sign)
    if isinstance(node, Mul):
        a = _eval(node.left, X, order, cache)
        b = _eval(node.right, X, order, cache)
        return _product(a, b, order)
    if isinstance(node, Div):
        a = _eval(node.left, X, order, cache)
        b = _eval(node.right, X, order, cache)
        if np.any(b[0] == 0.0):
            raise EvaluationDomainError("division by zero")
        inv = 1.0 / b[0]
        r = _chain(b, order, inv, -inv * inv, 2.0 * inv**3)
        return _product(a, r, order)
    if isinstance(node, Pow):
        p = node.exponent
        u = _eval(node.base, X, order, cache)
        if p == 0.0:
            return np.array([1.0]), None, None
        if p == 1.0:
            return u
        if float(p).is_integer():
            if p < 0 and np.any(u[0] == 0.0):
                raise EvaluationDomainError("zero base with negative exponent")
        elif np.any(u[0] <= 0.0):
            raise EvaluationDomainError(
                f"non-positive base for non-integer exponent {p}"
            )
        v = u[0] ** p
        d1 = p * u[0] ** (p - 1.0)
        d2 = p * (p - 1.0) * u[0] ** (p - 2.0)
        return _chain(u, order, v, d1, d2)
    if isinstance(node, Sqrt):
        u = _eval(node.operand, X, order, cache)
        if np.any(u[0] <= 0.0):
            raise EvaluationDomainError("sqrt of a non-positive value")
        v = np.sqrt(u[0])
        d1 = 0.5 / v
        d2 = -0.25 / (u[0] * v)
        return _chain(u, order, v, d1, d2)
    if isinstance(node, Exp):
        u = _eval(node.operand, X, order, cache)
        v = np.exp(u[0])
        _check_finite(v, "exp")
        return _chain(u, order, v, v, v)
    if isinstance(node, Log):
        u = _eval(node.operand, X, order, cache)
        if np.any(u[0] <= 0.0):
            raise EvaluationDomainError("log of a non-positive value")
        v = np.log(u[0])
        inv = 1.0 / u[0]
        return _chain(u, order, v, inv, -inv * inv)
    raise TypeError(f"unknown node {node!r}")


def _materialize(arr, shape):
    if arr is None:
        return np.zeros(shape)
    if arr.shape == shape:
        return arr
    return np.ascontiguousarray(np.broadcast_to(arr, shape))


def eval_jets(ast: ExpressionAst, X: np.ndarray, order: int = 2):
    """Evaluate value/gradient/Hessian on a batch of points.

    X has shape (n, dim).  Returns (value (n,), grad (n, dim) or None,
    hess (n, dim, dim) or None) depending on `order` in {0, 1, 2}.
    Aborts with NonFiniteError instead of returning inf or nan.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != ast.declared_dim:
        raise ValueError(
            f"expected points of shape (n, {ast.declared_dim}), got {X.shape}"
        )
    n, m = X.shape
    with np.errstate(all="ignore"):
        v, g, h = _eval(ast.root, X, order, {})
    v = _materialize(v, (n,))
    _check_finite(v, "expression")
    if order >= 1:
        g = _materialize(g, (n, m))
        _check_finite(g, "gradient")
    if order >= 2:
        h = _materialize(h, (n, m, m))
        _check_finite(h, "hessian")
    return v, g, h


def eval_jet2(ast: ExpressionAst, x) -> Jet2:
    """Value, gradient and Hessian at a single point (exact derivatives)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (ast.declared_dim,):
        raise ValueError(f"expected a point of length {ast.declared_dim}")
    v, g, h = eval_jets(ast, x[None, :], order=2)
    return Jet2(float(v[0]), g[0], 0.5 * (h[0] + h[0].T))
