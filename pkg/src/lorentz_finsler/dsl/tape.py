"""Compile expression DAGs into flat SSA tapes and evaluate them.

Each reachable node becomes one instruction writing its own register, in
topological order.  The interpreter loop lives in a compiled extension when it
is available; ``LORENTZ_FINSLER_PURE_PYTHON=1`` forces the Python fallback.
"""

from __future__ import annotations

import os
import threading
from typing import Mapping, Sequence

import numpy as np

from ..errors import DomainError
from . import expr as E

if os.environ.get("LORENTZ_FINSLER_PURE_PYTHON", "") not in ("", "0"):
    from ._tape_py import run_tape as _run_tape

    BACKEND = "python"
else:
    try:
        from ._tape_kernel import run_tape as _run_tape  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:  # extension not built
        from ._tape_py import run_tape as _run_tape

        BACKEND = "python"


class CompiledTape:
    """A flat instruction list with named input slots and output registers."""

    __slots__ = ("ops", "arg0", "arg1", "fconst", "nodes", "input_slots", "variables", "out_slots", "n_out", "_kernel")

    def __init__(self, roots: Sequence[E.Expr], variables: Sequence[str], kernel=None):
        self.variables = tuple(variables)
        self.input_slots = {name: i for i, name in enumerate(self.variables)}
        nodes = E.topological(roots)
        index = {id(n): i for i, n in enumerate(nodes)}
        m = len(nodes)
        ops = np.empty(m, dtype=np.int32)
        a0 = np.zeros(m, dtype=np.int32)
        a1 = np.zeros(m, dtype=np.int32)
        fc = np.zeros(m, dtype=np.float64)
        for i, n in enumerate(nodes):
            ops[i] = n.op
            if n.op == E.CONST:
                fc[i] = n.payload
            elif n.op == E.VAR:
                if n.payload not in self.input_slots:
                    raise KeyError(f"tape inputs do not cover variable {n.payload}")
                a0[i] = self.input_slots[n.payload]
            else:
                a0[i] = index[id(n.args[0])]
                if len(n.args) > 1:
                    a1[i] = index[id(n.args[1])]
                if n.op == E.POW:
                    fc[i] = float(n.payload)
        self.ops, self.arg0, self.arg1, self.fconst = ops, a0, a1, fc
        self.nodes = nodes
        self.out_slots = np.array([index[id(r)] for r in roots], dtype=np.int32)
        self.n_out = len(roots)
        self._kernel = kernel or _run_tape

    def __len__(self) -> int:
        return len(self.nodes)

    def run(self, inputs) -> np.ndarray:
        """Evaluate at an input vector ordered like ``variables``."""
        inp = np.ascontiguousarray(inputs, dtype=np.float64)
        if inp.shape != (len(self.variables),):
            raise ValueError(f"expected {len(self.variables)} inputs, got shape {inp.shape}")
        regs = np.empty(len(self.nodes), dtype=np.float64)
        out = np.empty(self.n_out, dtype=np.float64)
        bad = self._kernel(self.ops, self.arg0, self.arg1, self.fconst, inp, regs, self.out_slots, out)
        if bad >= 0:
            node = self.nodes[bad]
            bindings = dict(zip(self.variables, inp.tolist()))
            raise DomainError(
                f"{E.OP_NAMES[node.op]} outside its domain in {E.to_string(node)}", node=node, bindings=bindings
            )
        return out

    def evaluate(self, bindings: Mapping[str, float]) -> np.ndarray:
        try:
            inp = [float(bindings[name]) for name in self.variables]
        except KeyError as exc:
            raise KeyError(f"no binding for {exc.args[0]}") from None
        return self.run(inp)


_CACHE: dict[tuple, tuple[tuple[E.Expr, ...], CompiledTape]] = {}
_CACHE_LOCK = threading.Lock()


def compile_tape(roots: Sequence[E.Expr], variables: Sequence[str] | None = None) -> CompiledTape:
    """Compile (cached on root identity and input order)."""
    roots = tuple(roots)
    if variables is None:
        names: set[str] = set()
        for r in roots:
            names |= E.free_variables(r)
        variables = sorted(names, key=lambda s: (s[0], int(s[1:])))
    key = (tuple(id(r) for r in roots), tuple(variables))
    hit = _CACHE.get(key)
    if hit is not None and all(a is b for a, b in zip(hit[0], roots)):
        return hit[1]
    tape = CompiledTape(roots, variables)
    with _CACHE_LOCK:
        # storing the roots keeps their ids from being recycled
        _CACHE[key] = (roots, tape)
    return tape


def compile_and_evaluate(e: E.Expr, bindings: Mapping[str, float]) -> float:
    names = sorted(E.free_variables(e), key=lambda s: (s[0], int(s[1:])))
    return float(compile_tape([e], names).evaluate(bindings)[0])
