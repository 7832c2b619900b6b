import math
import random
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lorentz_finsler.dsl import (
    compile_and_evaluate,
    compile_tape,
    differentiate,
    evaluate,
    node_count,
    parse,
    simplify,
    to_string,
)
from lorentz_finsler.dsl import expr as E
from lorentz_finsler.dsl._tape_py import run_tape as py_kernel
from lorentz_finsler.dsl.tape import CompiledTape
from lorentz_finsler.errors import DomainError, ExprSyntaxError, UnknownVariable

RANDERS = "-(sqrt(v1^2 - v2^2) + 0.3*v1)^2/2"
SAMPLES = [
    "-(v1^2)/2 + (v2^2)/2",
    "(-v1^2 + exp(2*x1)*v2^2)/2",
    RANDERS,
    "0.5*(-v1^2+v2^2) + 0.1*exp(x1)*v2^4/(v1^2+v2^2)",
    "log(x1)*v1 - (x2^2 + 1)^(-1/2)*v2^3",
    "(-v1^2 + (1 + 0.5*sin(x2)^2)*v2^2)/2",
]


def fd5(f, x, h):
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)


def test_parse_examples():
    e = parse("-(v1^2)/2 + (v2^2)/2")
    assert e.free_variables == {"v1", "v2"}
    assert compile_and_evaluate(e, {"v1": 1.0, "v2": 0.0}) == -0.5
    e = parse("exp(-x1)*((v1^2-v2^2))")
    assert e.free_variables == {"x1", "v1", "v2"}
    assert compile_and_evaluate(e, {"x1": 0.0, "v1": 2.0, "v2": 1.0}) == 3.0
    assert compile_and_evaluate(parse("log(x1)*v1"), {"x1": math.e, "v1": 2.0}) == pytest.approx(2.0, rel=1e-15)


def test_syntax_error_offset_and_expected():
    with pytest.raises(ExprSyntaxError) as err:
        parse("v1 +")
    assert err.value.offset == 4
    assert "number" in err.value.expected and "identifier" in err.value.expected
    with pytest.raises(ExprSyntaxError) as err:
        parse("(v1 * 2")
    assert err.value.offset == 7 and ")" in err.value.expected
    with pytest.raises(SyntaxError):
        parse("v1 $ 2")


def test_byte_offsets_count_utf8():
    with pytest.raises(ExprSyntaxError) as err:
        parse("v1 + é")
    assert err.value.offset == 5
    with pytest.raises(ExprSyntaxError) as err:
        parse("é")
    assert err.value.offset == 0


def test_unknown_variable_and_parameters():
    with pytest.raises(UnknownVariable) as err:
        parse("a*v1")
    assert err.value.name == "a"
    with pytest.raises(UnknownVariable):
        parse("x0 + v1")
    e = parse("a*v1^2", parameters={"a": 3.0})
    assert compile_and_evaluate(e, {"v1": 2.0}) == 12.0


def test_precedence_and_exponents():
    ev = lambda s, **b: compile_and_evaluate(parse(s), b)
    assert ev("1 + 2*3") == 7
    assert ev("v1^2/2", v1=3.0) == 4.5
    assert ev("-v1^2", v1=3.0) == -9.0
    assert ev("2*v1^(-1)", v1=4.0) == 0.5
    assert ev("v1^(3/2)", v1=4.0) == pytest.approx(8.0, rel=1e-15)
    assert ev("8/4/2") == 1.0
    assert ev("8-4-2") == 2.0


def test_differentiate_examples():
    d = differentiate(parse("-(v1^2)/2"), "v1")
    assert to_string(d) == "-v1"
    d = differentiate(parse("v2^2"), "x1")
    assert d.is_const and d.value == 0.0
    d = parse("v1^4")
    for _ in range(4):
        d = differentiate(d, "v1")
    for x in (-1.3, 0.2, 2.0):
        assert compile_and_evaluate(d, {"v1": x}) == pytest.approx(24.0, rel=1e-14)


def test_fourth_derivative_against_finite_differences():
    f = parse(RANDERS)
    d = f
    for name in ("v1", "v1", "v2", "v2"):
        d = differentiate(d, name)
    # d^2/dv2^2 of the symbolic d^2/dv1^2 by a fourth-order central stencil
    d2 = differentiate(differentiate(f, "v1"), "v1")
    g = lambda v2: compile_and_evaluate(d2, {"v1": 1.0, "v2": v2})
    h, y = 2e-3, 0.1
    fd_r = (-g(y + 2 * h) + 16 * g(y + h) - 30 * g(y) + 16 * g(y - h) - g(y - 2 * h)) / (12 * h * h)
    exact = compile_and_evaluate(d, {"v1": 1.0, "v2": 0.1})
    assert fd_r == pytest.approx(exact, rel=1e-6)


def test_first_derivatives_match_five_point_stencil():
    rng = random.Random(1)
    for src in SAMPLES:
        e = parse(src)
        names = sorted(e.free_variables)
        for _ in range(20):
            b = {n: rng.uniform(0.5, 1.0) for n in names}
            if "v2" in b:
                b["v2"] = rng.uniform(-0.4, 0.4)
            for n in names:
                exact = compile_and_evaluate(differentiate(e, n), b)

                def f(t):
                    bb = dict(b)
                    bb[n] = t
                    return compile_and_evaluate(e, bb)

                h = 1e-4 * (abs(b[n]) + 1)
                assert fd5(f, b[n], h) == pytest.approx(exact, rel=1e-6, abs=1e-8)


def test_clairaut_symmetry():
    rng = random.Random(2)
    for src in SAMPLES:
        e = parse(src)
        names = sorted(e.free_variables)
        for a in names:
            for b in names:
                if a >= b:
                    continue
                ab = differentiate(differentiate(e, a), b)
                ba = differentiate(differentiate(e, b), a)
                for _ in range(100):
                    pt = {n: rng.uniform(0.6, 1.0) for n in names}
                    pt["v2"] = rng.uniform(-0.4, 0.4) if "v2" in pt else 0.0
                    x, y = compile_and_evaluate(ab, pt), compile_and_evaluate(ba, pt)
                    assert x == pytest.approx(y, rel=1e-12, abs=1e-13)


def test_linearity_of_differentiation():
    rng = random.Random(3)
    f, g = parse(SAMPLES[1]), parse(SAMPLES[3])
    a, b = 1.7, -0.4
    lhs = differentiate(E.add(E.mul(E.const(a), f), E.mul(E.const(b), g)), "x1")
    df, dg = differentiate(f, "x1"), differentiate(g, "x1")
    for _ in range(50):
        pt = {"x1": rng.uniform(-1, 1), "v1": rng.uniform(1, 2), "v2": rng.uniform(-0.5, 0.5)}
        want = a * compile_and_evaluate(df, pt) + b * compile_and_evaluate(dg, pt)
        assert compile_and_evaluate(lhs, pt) == pytest.approx(want, rel=1e-12, abs=1e-14)


def test_simplify_examples():
    assert to_string(simplify(parse("0*v1 + x1"))) == "x1"
    s = simplify(parse("2*3"))
    assert s.is_const and s.value == 6.0
    raw = differentiate(parse("v1^2 - v2^2"), "v1")
    simp = simplify(raw)
    rng = random.Random(4)
    for _ in range(100):
        pt = {"v1": rng.uniform(-5, 5), "v2": rng.uniform(-5, 5)}
        assert compile_and_evaluate(simp, pt) == pytest.approx(compile_and_evaluate(raw, pt), rel=1e-12)


def test_hash_consing_shares_structure():
    a = parse("sqrt(v1^2 - v2^2) * sqrt(v1^2 - v2^2)")
    assert a.args[0] is a.args[1]
    assert parse("exp(x1)*v1") is parse("exp( x1 ) * v1")
    assert node_count(a) == node_count(a.args[0]) + 1


def test_domain_errors_name_the_node():
    with pytest.raises(DomainError) as err:
        compile_and_evaluate(parse("sqrt(v1^2 - v2^2)"), {"v1": 1.0, "v2": 2.0})
    assert err.value.node.op == E.SQRT
    assert err.value.bindings == {"v1": 1.0, "v2": 2.0}
    with pytest.raises(DomainError):
        compile_and_evaluate(parse("log(x1)"), {"x1": 0.0})
    with pytest.raises(DomainError):
        compile_and_evaluate(parse("1/(x1 - 1)"), {"x1": 1.0})
    with pytest.raises(DomainError):
        compile_and_evaluate(parse("x1^(1/2)"), {"x1": -1.0})
    with pytest.raises(DomainError):
        evaluate(parse("log(x1)"), {"x1": -1.0})


def _tape_all_derivatives(src):
    e = parse(src)
    names = sorted(e.free_variables)
    roots = [e] + [differentiate(e, n) for n in names]
    roots += [differentiate(differentiate(e, a), b) for a in names for b in names]
    return roots, names


def test_tape_bit_identical_to_naive_evaluation():
    rng = random.Random(5)
    for src in SAMPLES:
        roots, names = _tape_all_derivatives(src)
        tape = compile_tape(roots, names)
        py_tape = CompiledTape(roots, names, kernel=py_kernel)
        for _ in range(30):
            pt = {n: rng.uniform(0.6, 1.2) for n in names}
            pt["v2"] = rng.uniform(-0.5, 0.5) if "v2" in pt else 0.0
            got = tape.evaluate(pt)
            got_py = py_tape.evaluate(pt)
            want = np.array([evaluate(r, pt) for r in roots])
            assert got.tobytes() == want.tobytes()
            assert got_py.tobytes() == want.tobytes()


def test_compile_cache_is_reused_and_thread_safe():
    e = parse(RANDERS)
    t1 = compile_tape([e], ["v1", "v2"])
    assert compile_tape([e], ["v1", "v2"]) is t1
    results = []

    def work(k):
        tape = compile_tape([differentiate(e, "v1")], ["v1", "v2"])
        results.append(tape.evaluate({"v1": 1.0, "v2": 0.1 * (k % 3)})[0])

    threads = [threading.Thread(target=work, args=(k,)) for k in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(results) == 16 and len(set(results)) == 3


_leaf = st.one_of(
    st.sampled_from(["x1", "v1", "v2"]),
    st.floats(-3, 3, allow_nan=False).map(lambda c: f"({c!r})"),
    st.sampled_from(["0", "1"]),
)


def _compose(children):
    return st.one_of(
        st.tuples(children, st.sampled_from("+-*"), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(st.sampled_from(["exp", "sin", "cos"]), children).map(lambda t: f"{t[0]}({t[1]})"),
        children.map(lambda c: f"({c})^2"),
        children.map(lambda c: f"-({c})"),
    )


exprs = st.recursive(_leaf, _compose, max_leaves=12)


@settings(max_examples=150, deadline=None)
@given(exprs, st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_simplify_never_grows_and_preserves_value(src, x1, v1, v2):
    e = parse(src)
    s = simplify(e)
    assert node_count(s) <= node_count(e)
    pt = {"x1": x1, "v1": v1, "v2": v2}
    a, b = evaluate(e, pt), evaluate(s, pt)
    if math.isfinite(a):
        assert b == pytest.approx(a, rel=1e-9, abs=1e-9)


@settings(max_examples=150, deadline=None)
@given(exprs, st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_printed_form_round_trips(src, x1, v1, v2):
    e = parse(src)
    again = parse(to_string(e))
    pt = {"x1": x1, "v1": v1, "v2": v2}
    a, b = evaluate(e, pt), evaluate(again, pt)
    if math.isfinite(a):
        assert b == pytest.approx(a, rel=1e-12, abs=1e-12)
