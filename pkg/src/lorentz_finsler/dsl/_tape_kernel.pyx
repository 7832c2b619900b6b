# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tape interpreter.  Semantics mirror expr.apply_op exactly."""

from libc.math cimport pow, sqrt, exp, log, sin, cos, floor


cdef Py_ssize_t _execute(const int[::1] ops, const int[::1] arg0, const int[::1] arg1,
                         const double[::1] fconst, const double[::1] inputs,
                         double[::1] regs, const int[::1] out_slots, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, n = ops.shape[0], k
    cdef int op
    cdef double a, b, p
    if True:
        for i in range(n):
            op = ops[i]
            if op == 0:
                regs[i] = fconst[i]
            elif op == 1:
                regs[i] = inputs[arg0[i]]
            elif op == 2:
                regs[i] = regs[arg0[i]] + regs[arg1[i]]
            elif op == 3:
                regs[i] = regs[arg0[i]] - regs[arg1[i]]
            elif op == 4:
                regs[i] = regs[arg0[i]] * regs[arg1[i]]
            elif op == 5:
                b = regs[arg1[i]]
                if b == 0.0:
                    return i
                regs[i] = regs[arg0[i]] / b
            elif op == 6:
                regs[i] = -regs[arg0[i]]
            elif op == 7:
                a = regs[arg0[i]]
                p = fconst[i]
                if p == 2.0:
                    regs[i] = a * a
                else:
                    if a < 0.0 and p != floor(p):
                        return i
                    if a == 0.0 and p < 0.0:
                        return i
                    regs[i] = pow(a, p)
            elif op == 8:
                a = regs[arg0[i]]
                if a < 0.0:
                    return i
                regs[i] = sqrt(a)
            elif op == 9:
                regs[i] = exp(regs[arg0[i]])
            elif op == 10:
                a = regs[arg0[i]]
                if a <= 0.0:
                    return i
                regs[i] = log(a)
            elif op == 11:
                regs[i] = sin(regs[arg0[i]])
            elif op == 12:
                regs[i] = cos(regs[arg0[i]])
            else:
                return i
        for k in range(out_slots.shape[0]):
            out[k] = regs[out_slots[k]]
    return -1


def run_tape(const int[::1] ops, const int[::1] arg0, const int[::1] arg1,
             const double[::1] fconst, const double[::1] inputs,
             double[::1] regs, const int[::1] out_slots, double[::1] out):
    """Execute the tape; return -1 on success or the failing instruction index."""
    cdef Py_ssize_t r
    with nogil:
        r = _execute(ops, arg0, arg1, fconst, inputs, regs, out_slots, out)
    return r
