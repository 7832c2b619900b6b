"""Hash-consed expression DAG in position (x<k>) and velocity (v<k>) variables.

Nodes are interned: building a node that is structurally identical to a live
one returns the existing object, so identity is structural equality and
subexpressions are shared for free.  Smart constructors apply the cheap
identities (constant folding, 0/1 elimination) as nodes are built.
"""

from __future__ import annotations

import math
import re
import threading
import weakref
from fractions import Fraction
from typing import Iterable, Mapping

# opcodes, shared with the tape kernels
CONST, VAR, ADD, SUB, MUL, DIV, NEG, POW, SQRT, EXP, LOG, SIN, COS = range(13)

OP_NAMES = {
    CONST: "const", VAR: "var", ADD: "+", SUB: "-", MUL: "*", DIV: "/", NEG: "neg",
    POW: "^", SQRT: "sqrt", EXP: "exp", LOG: "log", SIN: "sin", COS: "cos",
}
UNARY_FUNCS = {"sqrt": SQRT, "exp": EXP, "log": LOG, "sin": SIN, "cos": COS}

_VAR_RE = re.compile(r"^([xv])([1-9][0-9]*)$")


class EvalDomainError(ArithmeticError):
    """Raised by :func:`apply_op`; carries nothing, callers attach the node."""


class Expr:
    """One interned DAG node.  Build with the module-level constructors."""

    __slots__ = ("op", "args", "payload", "__weakref__")

    op: int
    args: tuple["Expr", ...]
    payload: object  # float for CONST, str for VAR, Fraction for POW

    def __repr__(self) -> str:
        return f"Expr({to_string(self)})"

    def __str__(self) -> str:
        return to_string(self)

    # arithmetic sugar so expressions can be assembled in Python code
    def __add__(self, o):
        return add(self, _lift(o))

    def __radd__(self, o):
        return add(_lift(o), self)

    def __sub__(self, o):
        return sub(self, _lift(o))

    def __rsub__(self, o):
        return sub(_lift(o), self)

    def __mul__(self, o):
        return mul(self, _lift(o))

    def __rmul__(self, o):
        return mul(_lift(o), self)

    def __truediv__(self, o):
        return div(self, _lift(o))

    def __rtruediv__(self, o):
        return div(_lift(o), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    @property
    def is_const(self) -> bool:
        return self.op == CONST

    @property
    def value(self) -> float:
        if self.op != CONST:
            raise TypeError("not a constant node")
        return self.payload  # type: ignore[return-value]

    @property
    def free_variables(self) -> frozenset[str]:
        return free_variables(self)


_TABLE: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()
_LOCK = threading.RLock()


def _intern(op: int, args: tuple[Expr, ...], payload, key_payload) -> Expr:
    key = (op, tuple(id(a) for a in args), key_payload)
    with _LOCK:
        node = _TABLE.get(key)
        if node is not None:
            return node
        node = Expr.__new__(Expr)
        node.op = op
        node.args = args
        node.payload = payload
        _TABLE[key] = node
        # the table holds nodes weakly; parents keep children alive, so ids in
        # a live key always refer to live children
        return node


def _lift(o) -> Expr:
    if isinstance(o, Expr):
        return o
    if isinstance(o, (int, float, Fraction)):
        return const(float(o))
    raise TypeError(f"cannot use {type(o).__name__} in an expression")


def const(c: float) -> Expr:
    c = float(c)
    if math.isnan(c):
        raise ValueError("NaN constants are not representable")
    return _intern(CONST, (), c, c.hex())


def var(name: str) -> Expr:
    if not _VAR_RE.match(name):
        raise ValueError(f"variable names look like x3 or v1, got {name!r}")
    return _intern(VAR, (), name, name)


def variable_role(name: str) -> str:
    return "position" if name[0] == "x" else "velocity"


def variable_index(name: str) -> int:
    return int(name[1:])


ZERO = const(0.0)
ONE = const(1.0)
TWO = const(2.0)


def _is(e: Expr, c: float) -> bool:
    return e.op == CONST and e.payload == c


# semantics of every operation, shared by the naive evaluator and the
# pure-Python tape so the compiled kernel has one reference to match
def apply_op(op: int, a: float, b: float, p: float) -> float:
    if op == ADD:
        return a + b
    if op == SUB:
        return a - b
    if op == MUL:
        return a * b
    if op == DIV:
        if b == 0.0:
            raise EvalDomainError
        return a / b
    if op == NEG:
        return -a
    if op == POW:
        if p == 2.0:
            return a * a
        if a < 0.0 and p != math.floor(p):
            raise EvalDomainError
        if a == 0.0 and p < 0.0:
            raise EvalDomainError
        try:
            return math.pow(a, p)
        except OverflowError:
            return math.inf
    if op == SQRT:
        if a < 0.0:
            raise EvalDomainError
        return math.sqrt(a)
    if op == EXP:
        try:
            return math.exp(a)
        except OverflowError:
            return math.inf
    if op == LOG:
        if a <= 0.0:
            raise EvalDomainError
        return math.log(a)
    if op == SIN:
        return math.sin(a)
    if op == COS:
        return math.cos(a)
    raise ValueError(f"bad opcode {op}")


def _fold(op: int, args: tuple[Expr, ...], p: float = 0.0) -> Expr | None:
    """Fold an all-constant node, or None when folding would hit a domain error."""
    a = args[0].payload
    b = args[1].payload if len(args) > 1 else 0.0
    try:
        r = apply_op(op, a, b, p)  # type: ignore[arg-type]
    except EvalDomainError:
        return None
    if math.isnan(r):
        return None
    return const(r)


def add(a: Expr, b: Expr) -> Expr:
    if a.op == CONST and b.op == CONST:
        return _fold(ADD, (a, b))  # type: ignore[return-value]
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if b.op == NEG:
        return sub(a, b.args[0])
    return _intern(ADD, (a, b), None, None)


def sub(a: Expr, b: Expr) -> Expr:
    if a.op == CONST and b.op == CONST:
        return _fold(SUB, (a, b))  # type: ignore[return-value]
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    if a is b:
        return ZERO
    if b.op == NEG:
        return add(a, b.args[0])
    return _intern(SUB, (a, b), None, None)


def mul(a: Expr, b: Expr) -> Expr:
    if a.op == CONST and b.op == CONST:
        return _fold(MUL, (a, b))  # type: ignore[return-value]
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return neg(b)
    if _is(b, -1.0):
        return neg(a)
    if b.op == CONST:
        a, b = b, a
    if a.op == CONST:
        if b.op == NEG:
            return mul(const(-a.payload), b.args[0])  # type: ignore[operator]
        if b.op == MUL and b.args[0].op == CONST:
            return mul(_fold(MUL, (a, b.args[0])) or const(a.payload * b.args[0].payload), b.args[1])  # type: ignore[operator]
    return _intern(MUL, (a, b), None, None)


def div(a: Expr, b: Expr) -> Expr:
    if a.op == CONST and b.op == CONST:
        r = _fold(DIV, (a, b))
        if r is not None:
            return r
    if _is(a, 0.0):
        return ZERO
    if _is(b, 1.0):
        return a
    if _is(b, -1.0):
        return neg(a)
    if b.op == CONST:
        if a.op == NEG:
            return neg(div(a.args[0], b))
        if a.op == MUL and a.args[0].op == CONST:
            return mul(const(a.args[0].payload / b.payload), a.args[1])  # type: ignore[operator]
    return _intern(DIV, (a, b), None, None)


def neg(a: Expr) -> Expr:
    if a.op == CONST:
        return const(-a.payload)  # type: ignore[operator]
    if a.op == NEG:
        return a.args[0]
    return _intern(NEG, (a,), None, None)


def power(a: Expr, p) -> Expr:
    p = Fraction(p).limit_denominator(10**6) if isinstance(p, float) else Fraction(p)
    if p == 0:
        return ONE
    if p == 1:
        return a
    if a.op == CONST:
        r = _fold(POW, (a,), float(p))
        if r is not None:
            return r
    if a.op == POW and p.denominator == 1:
        return power(a.args[0], a.payload * p)  # type: ignore[operator]
    return _intern(POW, (a,), p, p)


def _unary(op: int, a: Expr) -> Expr:
    if a.op == CONST:
        r = _fold(op, (a,))
        if r is not None:
            return r
    return _intern(op, (a,), None, None)


def sqrt(a: Expr) -> Expr:
    return _unary(SQRT, a)


def exp(a: Expr) -> Expr:
    if a.op == LOG:
        pass  # exp(log u) = u only where u > 0; keep the node to preserve the domain
    return _unary(EXP, a)


def log(a: Expr) -> Expr:
    return _unary(LOG, a)


def sin(a: Expr) -> Expr:
    return _unary(SIN, a)


def cos(a: Expr) -> Expr:
    return _unary(COS, a)


_BUILDERS = {ADD: add, SUB: sub, MUL: mul, DIV: div}
_UNARY_BUILDERS = {NEG: neg, SQRT: sqrt, EXP: exp, LOG: log, SIN: sin, COS: cos}


def topological(roots: Iterable[Expr]) -> list[Expr]:
    """Nodes reachable from ``roots``, children before parents."""
    order: list[Expr] = []
    seen: set[int] = set()
    for root in roots:
        if id(root) in seen:
            continue
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for c in reversed(node.args):
                if id(c) not in seen:
                    stack.append((c, False))
    return order


def node_count(*roots: Expr) -> int:
    return len(topological(roots))


def free_variables(e: Expr) -> frozenset[str]:
    return frozenset(n.payload for n in topological([e]) if n.op == VAR)  # type: ignore[misc]


def evaluate(e: Expr, bindings: Mapping[str, float]) -> float:
    """Naive recursive evaluation; the reference the tapes must reproduce."""
    from ..errors import DomainError

    memo: dict[int, float] = {}

    def rec(n: Expr) -> float:
        k = id(n)
        if k in memo:
            return memo[k]
        if n.op == CONST:
            r = n.payload
        elif n.op == VAR:
            try:
                r = float(bindings[n.payload])  # type: ignore[index]
            except KeyError:
                raise KeyError(f"no binding for {n.payload}") from None
        else:
            a = rec(n.args[0])
            b = rec(n.args[1]) if len(n.args) > 1 else 0.0
            p = float(n.payload) if n.op == POW else 0.0
            try:
                r = apply_op(n.op, a, b, p)
            except EvalDomainError:
                raise DomainError(
                    f"{OP_NAMES[n.op]} outside its domain in {to_string(n)}", node=n, bindings=bindings
                ) from None
        memo[k] = r  # type: ignore[assignment]
        return r  # type: ignore[return-value]

    old = _recursion_guard(e)
    try:
        return rec(e)
    finally:
        _restore_recursion(old)


def _recursion_guard(e: Expr):
    import sys

    old = sys.getrecursionlimit()
    need = 4 * _depth(e) + 100
    if need > old:
        sys.setrecursionlimit(need)
    return old


def _restore_recursion(old):
    import sys

    sys.setrecursionlimit(old)


def _depth(e: Expr) -> int:
    d: dict[int, int] = {}
    for n in topological([e]):
        d[id(n)] = 1 + max((d[id(c)] for c in n.args), default=0)
    return d[id(e)]


_DERIV_CACHE: dict[tuple[int, str], tuple[Expr, Expr]] = {}
_DERIV_LOCK = threading.Lock()


def differentiate(e: Expr, name: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to variable ``name``."""
    var(name)  # validates the identifier
    for n in topological([e]):
        key = (id(n), name)
        if key in _DERIV_CACHE and _DERIV_CACHE[key][0] is n:
            continue
        d = _derive_node(n, name)
        with _DERIV_LOCK:
            # the cached pair keeps n alive so its id cannot be recycled
            _DERIV_CACHE[key] = (n, d)
    return _DERIV_CACHE[(id(e), name)][1]


def _d(n: Expr, name: str) -> Expr:
    return _DERIV_CACHE[(id(n), name)][1]


def _derive_node(n: Expr, name: str) -> Expr:
    op = n.op
    if op == CONST:
        return ZERO
    if op == VAR:
        return ONE if n.payload == name else ZERO
    a = n.args[0]
    da = _d(a, name)
    if op in (ADD, SUB, MUL, DIV):
        b = n.args[1]
        db = _d(b, name)
        if op == ADD:
            return add(da, db)
        if op == SUB:
            return sub(da, db)
        if op == MUL:
            return add(mul(da, b), mul(a, db))
        # (a/b)' = (a' - (a/b) b') / b
        return div(sub(da, mul(n, db)), b)
    if _is(da, 0.0):
        return ZERO
    if op == NEG:
        return neg(da)
    if op == POW:
        p: Fraction = n.payload  # type: ignore[assignment]
        return mul(mul(const(float(p)), power(a, p - 1)), da)
    if op == SQRT:
        return div(da, mul(TWO, n))
    if op == EXP:
        return mul(n, da)
    if op == LOG:
        return div(da, a)
    if op == SIN:
        return mul(cos(a), da)
    if op == COS:
        return neg(mul(sin(a), da))
    raise ValueError(f"bad opcode {op}")


def simplify(e: Expr) -> Expr:
    """Rebuild bottom-up through the smart constructors."""
    out: dict[int, Expr] = {}
    for n in topological([e]):
        if n.op in (CONST, VAR):
            r = n
        elif n.op in _BUILDERS:
            r = _BUILDERS[n.op](out[id(n.args[0])], out[id(n.args[1])])
        elif n.op == POW:
            r = power(out[id(n.args[0])], n.payload)
        else:
            r = _UNARY_BUILDERS[n.op](out[id(n.args[0])])
        out[id(n)] = r
    r = out[id(e)]
    # the constructors only ever shrink, but guard the contract explicitly
    return r if node_count(r) <= node_count(e) else e


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions."""
    out: dict[int, Expr] = {}
    for n in topological([e]):
        if n.op == CONST:
            r = n
        elif n.op == VAR:
            r = mapping.get(n.payload, n)  # type: ignore[arg-type]
        elif n.op in _BUILDERS:
            r = _BUILDERS[n.op](out[id(n.args[0])], out[id(n.args[1])])
        elif n.op == POW:
            r = power(out[id(n.args[0])], n.payload)
        else:
            r = _UNARY_BUILDERS[n.op](out[id(n.args[0])])
        out[id(n)] = r
    return out[id(e)]


_PREC = {ADD: 1, SUB: 1, MUL: 2, DIV: 2, NEG: 3, POW: 4}


def to_string(e: Expr) -> str:
    """Render back to the input grammar (parseable, fully parenthesized where needed)."""
    memo: dict[int, tuple[str, int]] = {}
    for n in topological([e]):
        if n.op == CONST:
            c = n.payload
            s = repr(c) if c >= 0 else f"({c!r})"  # type: ignore[operator]
            if s.endswith(".0"):
                s = s[:-2]
            memo[id(n)] = (s, 5)
        elif n.op == VAR:
            memo[id(n)] = (n.payload, 5)  # type: ignore[assignment]
        elif n.op in (ADD, SUB, MUL, DIV):
            (sa, pa), (sb, pb) = memo[id(n.args[0])], memo[id(n.args[1])]
            pr = _PREC[n.op]
            if pa < pr:
                sa = f"({sa})"
            if pb <= pr and not (n.op in (ADD, MUL) and pb == pr):
                sb = f"({sb})"
            memo[id(n)] = (f"{sa} {OP_NAMES[n.op]} {sb}", pr)
        elif n.op == NEG:
            sa, pa = memo[id(n.args[0])]
            memo[id(n)] = (f"-({sa})" if pa < 5 else f"-{sa}", 3)
        elif n.op == POW:
            sa, pa = memo[id(n.args[0])]
            p: Fraction = n.payload  # type: ignore[assignment]
            ps = str(p.numerator) if p.denominator == 1 else f"{p.numerator}/{p.denominator}"
            if p.denominator != 1 or p < 0:
                ps = f"({ps})"
            memo[id(n)] = (f"({sa})^{ps}", 4)
        else:
            sa, _ = memo[id(n.args[0])]
            memo[id(n)] = (f"{OP_NAMES[n.op]}({sa})", 5)
    return memo[id(e)][0]
