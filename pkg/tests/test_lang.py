import pytest

from matfuse.corpus import TABLE_KERNELS, kernel_source
from matfuse.lang import (
    Assign, BinOp, DeclaredType, KernelSpecError, KernelSyntaxError,
    Transpose, Var, parse_kernel, print_kernel,
)

from conftest import BATAX_SRC


def test_batax_parses_to_expected_spec():
    spec = parse_kernel(BATAX_SRC)
    assert spec.name == "BATAX"
    assert spec.inputs == (
        ("x", DeclaredType("vector", "column")),
        ("beta", DeclaredType("scalar")),
        ("A", DeclaredType("matrix", "row")),
    )
    assert spec.outputs == (("y", DeclaredType("vector", "column")),)
    assert len(spec.statements) == 1
    stmt = spec.statements[0]
    assert stmt.target == "y"
    # beta * A' * (A * x), * left-associated, ' tighter than *
    assert stmt.value == BinOp(
        "*",
        BinOp("*", Var("beta"), Transpose(Var("A"))),
        BinOp("*", Var("A"), Var("x")),
    )


def test_scalar_identity_kernel_one_line():
    spec = parse_kernel("T in: a : scalar out: b : scalar { b = a }")
    assert spec.name == "T"
    assert spec.statements == (Assign("b", Var("a")),)


def test_gemver_three_statements_with_reuse():
    spec = parse_kernel(kernel_source("gemver"))
    assert len(spec.statements) == 3
    targets = [s.target for s in spec.statements]
    assert targets == ["B", "x", "w"]
    # B is produced by statement 1 and read by statements 2 and 3
    def reads(e):
        if isinstance(e, Var):
            return {e.name}
        if isinstance(e, Transpose):
            return reads(e.operand)
        return reads(e.left) | reads(e.right)

    assert "B" in reads(spec.statements[1].value)
    assert "B" in reads(spec.statements[2].value)


def test_parentheses_and_precedence():
    spec = parse_kernel(
        "P in: a : scalar, b : scalar, c : scalar out: d : scalar "
        "{ d = a * (b + c)' }"
    )
    # transpose binds to the parenthesized group only
    assert spec.statements[0].value == BinOp(
        "*", Var("a"), Transpose(BinOp("+", Var("b"), Var("c")))
    )


@pytest.mark.parametrize("name", TABLE_KERNELS + ("batax",))
def test_print_parse_round_trip_corpus(name):
    spec = parse_kernel(kernel_source(name))
    assert parse_kernel(print_kernel(spec)) == spec


def test_round_trip_is_stable():
    spec = parse_kernel(BATAX_SRC)
    once = print_kernel(spec)
    assert print_kernel(parse_kernel(once)) == once


def test_syntax_error_carries_position():
    with pytest.raises(KernelSyntaxError) as err:
        parse_kernel("K in: a : scalar out: b : scalar {\n b = a +\n}")
    assert err.value.line == 3


def test_unknown_type_rejected():
    with pytest.raises(KernelSyntaxError):
        parse_kernel("K in: a : tensor out: b : scalar { b = a }")


def test_undeclared_identifier_rejected():
    with pytest.raises(KernelSpecError, match="c"):
        parse_kernel("K in: a : scalar out: b : scalar { b = c }")


def test_output_never_assigned_rejected():
    with pytest.raises(KernelSpecError, match="never assigned"):
        parse_kernel("K in: a : scalar out: b : scalar { c = a }")


def test_double_assignment_rejected():
    with pytest.raises(KernelSpecError, match="more than once"):
        parse_kernel(
            "K in: a : scalar out: b : scalar { b = a\n b = a }"
        )


def test_assignment_to_input_rejected():
    with pytest.raises(KernelSpecError, match="input"):
        parse_kernel("K in: a : scalar out: b : scalar { a = a\n b = a }")


def test_statement_defined_intermediate_allowed():
    spec = parse_kernel(
        "K in: a : scalar out: b : scalar { t = a\n b = t }"
    )
    assert [s.target for s in spec.statements] == ["t", "b"]


def test_vector_needs_orientation():
    with pytest.raises(KernelSyntaxError):
        parse_kernel("K in: x : vector out: b : scalar { b = x' * x }")


class TestRandomRoundTrip:
    """print/parse is the identity on arbitrary grammatical kernels (type
    checking happens later, so expressions only need to be well formed)."""

    def build_spec(self, rng):
        kinds = [DeclaredType("scalar"), DeclaredType("vector", "row"),
                 DeclaredType("vector", "column"), DeclaredType("matrix", "row"),
                 DeclaredType("matrix", "column")]
        n_in = rng.randint(1, 4)
        n_out = rng.randint(1, 2)
        inputs = tuple((f"in{i}", rng.choice(kinds)) for i in range(n_in))
        outputs = tuple((f"out{i}", rng.choice(kinds)) for i in range(n_out))

        defined = [n for n, _ in inputs]

        def expr(depth):
            if depth == 0 or rng.random() < 0.3:
                return Var(rng.choice(defined))
            roll = rng.random()
            if roll < 0.2:
                return Transpose(expr(depth - 1))
            op = rng.choice(["+", "-", "*", "*"])
            return BinOp(op, expr(depth - 1), expr(depth - 1))

        statements = []
        for i in range(rng.randint(0, 2)):  # intermediate temps
            statements.append(Assign(f"tmp{i}", expr(3)))
            defined.append(f"tmp{i}")
        for name, _ in outputs:
            statements.append(Assign(name, expr(3)))
            defined.append(name)
        from matfuse.lang import KernelSpec

        return KernelSpec("RAND", inputs, outputs, tuple(statements))

    def test_thousand_random_specs(self):
        import random

        for seed in range(1000):
            spec = self.build_spec(random.Random(seed))
            text = print_kernel(spec)
            assert parse_kernel(text) == spec, text
