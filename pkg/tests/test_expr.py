import numpy as np
import pytest

from okalab.errors import EvaluationDomainError, NonFiniteError, ParseError
from okalab.expr import (
    ExpressionAst,
    eval_jet2,
    eval_jets,
    node_count,
    parse_expression,
    to_source,
)


def test_parse_unit_circle_node_count():
    ast = parse_expression("x1^2 + x2^2 - 1", 2)
    assert isinstance(ast, ExpressionAst)
    assert ast.declared_dim == 2
    assert node_count(ast) == 7


def test_parse_syntax_error_position():
    with pytest.raises(ParseError) as err:
        parse_expression("x1 +", 1)
    assert err.value.position == 4


def test_parse_variable_out_of_range():
    with pytest.raises(ParseError, match="out of range"):
        parse_expression("x3", 2)


def test_parse_unknown_identifier():
    with pytest.raises(ParseError, match="unknown identifier"):
        parse_expression("x1 + foo", 2)


def test_parse_rejects_non_constant_exponent():
    with pytest.raises(ParseError, match="constant"):
        parse_expression("x1^x2", 2)


def test_parse_constant_exponent_expression():
    ast = parse_expression("x1^(-3/2)", 1)
    v, _, _ = eval_jets(ast, np.array([[4.0]]), order=0)
    assert v[0] == pytest.approx(4.0 ** -1.5)


def test_jet_unit_circle():
    ast = parse_expression("x1^2 + x2^2 - 1", 2)
    jet = eval_jet2(ast, [0.6, 0.8])
    assert jet.value == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(jet.gradient, [1.2, 1.6])
    assert np.allclose(jet.hessian, 2.0 * np.eye(2))


def test_jet_linear():
    ast = parse_expression("x1", 3)
    jet = eval_jet2(ast, [2.0, -1.0, 5.0])
    assert jet.value == 2.0
    assert np.allclose(jet.gradient, [1.0, 0.0, 0.0])
    assert np.allclose(jet.hessian, 0.0)


def test_jet_log():
    ast = parse_expression("log(x1)", 1)
    jet = eval_jet2(ast, [1.0])
    assert jet.value == 0.0
    assert np.allclose(jet.gradient, [1.0])
    assert np.allclose(jet.hessian, [[-1.0]])


def test_normsq_block():
    ast = parse_expression("normsq(2,3) - 1", 4)
    jet = eval_jet2(ast, [5.0, 1.0, 2.0, 7.0])
    assert jet.value == pytest.approx(4.0)
    assert np.allclose(jet.gradient, [0.0, 2.0, 4.0, 0.0])
    expect = np.zeros((4, 4))
    expect[1, 1] = expect[2, 2] = 2.0
    assert np.allclose(jet.hessian, expect)


@pytest.mark.parametrize(
    "source,x,err",
    [
        ("log(x1)", [-1.0], EvaluationDomainError),
        ("sqrt(x1)", [-2.0], EvaluationDomainError),
        ("1/x1", [0.0], EvaluationDomainError),
        ("x1^(-1)", [0.0], EvaluationDomainError),
        ("x1^0.5", [-1.0], EvaluationDomainError),
        ("exp(x1)", [1e9], NonFiniteError),
    ],
)
def test_domain_and_overflow_errors(source, x, err):
    ast = parse_expression(source, 1)
    with pytest.raises(err):
        eval_jet2(ast, x)


def _random_poly_ast(rng, dim, max_degree=4, n_terms=6):
    """Random polynomial as source text; returns (source, coeff/exponent list)."""
    terms = []
    for _ in range(n_terms):
        coeff = rng.integers(-4, 5)
        if coeff == 0:
            coeff = 1
        exps = rng.integers(0, max_degree + 1, size=dim)
        while exps.sum() > max_degree:
            exps[rng.integers(0, dim)] = 0
        terms.append((int(coeff), tuple(int(e) for e in exps)))
    parts = []
    for coeff, exps in terms:
        factors = [str(coeff)]
        for i, e in enumerate(exps):
            if e == 1:
                factors.append(f"x{i + 1}")
            elif e > 1:
                factors.append(f"x{i + 1}^{e}")
        parts.append(" * ".join(factors))
    return " + ".join(parts)


def test_gradient_hessian_match_finite_differences():
    rng = np.random.default_rng(20240517)
    step = 1e-4
    for _ in range(25):
        dim = int(rng.integers(1, 5))
        source = _random_poly_ast(rng, dim)
        ast = parse_expression(source, dim)
        x = rng.uniform(-1.0, 1.0, size=dim)
        jet = eval_jet2(ast, x)

        def value(pt):
            v, _, _ = eval_jets(ast, np.asarray(pt)[None, :], order=0)
            return v[0]

        scale = max(1.0, abs(jet.value))
        for i in range(dim):
            e = np.zeros(dim)
            e[i] = step
            fd = (value(x + e) - value(x - e)) / (2 * step)
            assert fd == pytest.approx(jet.gradient[i], rel=1e-6, abs=1e-6 * scale)
            fd2 = (value(x + e) - 2 * jet.value + value(x - e)) / step**2
            assert fd2 == pytest.approx(jet.hessian[i, i], rel=1e-6, abs=1e-5 * scale)
        for i in range(dim):
            for j in range(i + 1, dim):
                ei = np.zeros(dim)
                ej = np.zeros(dim)
                ei[i] = step
                ej[j] = step
                fd = (
                    value(x + ei + ej)
                    - value(x + ei - ej)
                    - value(x - ei + ej)
                    + value(x - ei - ej)
                ) / (4 * step**2)
                assert fd == pytest.approx(
                    jet.hessian[i, j], rel=1e-6, abs=1e-5 * scale
                )


def test_round_trip_pretty_print():
    sources = [
        "x1^2 + x2^2 - 1",
        "(normsq(1,3) - 0.01) * (normsq(1,3) - 1)",
        "exp(-2 * log(1.1 - normsq(1,3)^0.5))",
        "-x1 / (x2 - 3) + sqrt(x1 + 2) * x2^(-2)",
        "1 - x1 - x2 - 2",
    ]
    for source in sources:
        ast = parse_expression(source, 3)
        again = parse_expression(to_source(ast), 3)
        assert ast == again


def test_deterministic_evaluation():
    ast = parse_expression("exp(x1) * log(x2 + 3) / sqrt(x1^2 + 1)", 2)
    X = np.array([[0.3, 0.7], [1.1, -0.4]])
    a = eval_jets(ast, X, order=2)
    b = eval_jets(ast, X, order=2)
    assert a[0].tobytes() == b[0].tobytes()
    assert a[1].tobytes() == b[1].tobytes()
    assert a[2].tobytes() == b[2].tobytes()


def test_batch_matches_single_point():
    ast = parse_expression("x1 * x2 + sqrt(x2 + 2)", 2)
    X = np.array([[0.5, 1.5], [-0.25, 0.75]])
    v, g, h = eval_jets(ast, X, order=2)
    for k in range(2):
        jet = eval_jet2(ast, X[k])
        assert jet.value == pytest.approx(v[k])
        assert np.allclose(jet.gradient, g[k])
        assert np.allclose(jet.hessian, h[k])
