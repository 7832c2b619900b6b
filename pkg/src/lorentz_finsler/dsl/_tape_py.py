"""Pure-Python tape interpreter (fallback when the compiled kernel is absent)."""

from __future__ import annotations

from .expr import ADD, CONST, DIV, MUL, NEG, SUB, VAR, EvalDomainError, apply_op


def run_tape(ops, arg0, arg1, fconst, inputs, regs, out_slots, out) -> int:
    """Execute the tape; return -1 on success or the failing instruction index."""
    ops = ops.tolist()
    a0 = arg0.tolist()
    a1 = arg1.tolist()
    fc = fconst.tolist()
    inp = inputs.tolist()
    r = [0.0] * len(ops)
    for i, op in enumerate(ops):
        if op == CONST:
            r[i] = fc[i]
        elif op == VAR:
            r[i] = inp[a0[i]]
        elif op == ADD:
            r[i] = r[a0[i]] + r[a1[i]]
        elif op == SUB:
            r[i] = r[a0[i]] - r[a1[i]]
        elif op == MUL:
            r[i] = r[a0[i]] * r[a1[i]]
        elif op == NEG:
            r[i] = -r[a0[i]]
        elif op == DIV:
            b = r[a1[i]]
            if b == 0.0:
                return i
            r[i] = r[a0[i]] / b
        else:
            try:
                r[i] = apply_op(op, r[a0[i]], 0.0, fc[i])
            except EvalDomainError:
                return i
    for k, s in enumerate(out_slots.tolist()):
        out[k] = r[s]
    return -1
