"""Reference evaluator: direct dense interpretation of kernel statements.

This is the numerical oracle for generated code.  It works on the parsed
statements, not on the operation graph or any lowering, so it shares no
code path with the compiler backend: expressions evaluate with numpy in
double precision, statement by statement, exactly as written.
"""

from __future__ import annotations

import numpy as np

from .lang import Expr, KernelSpec, Transpose, Var


class EvaluationError(ValueError):
    pass


class _Val:
    """A value with its logical kind: scalar, column/row vector, or matrix."""

    __slots__ = ("kind", "data")

    def __init__(self, kind: str, data):
        self.kind = kind  # "scalar" | "col" | "row" | "mat"
        self.data = data


def _lift(name: str, decl, value) -> _Val:
    if decl.kind == "scalar":
        return _Val("scalar", float(value))
    arr = np.asarray(value, dtype=np.float64)
    if decl.kind == "vector":
        if arr.ndim != 1:
            raise EvaluationError(f"{name!r} must be 1-D, got shape {arr.shape}")
        return _Val("col" if decl.orientation == "column" else "row", arr)
    if arr.ndim != 2:
        raise EvaluationError(f"{name!r} must be 2-D, got shape {arr.shape}")
    return _Val("mat", arr)


def _transpose(v: _Val) -> _Val:
    if v.kind == "scalar":
        raise EvaluationError("cannot transpose a scalar")
    if v.kind == "col":
        return _Val("row", v.data)
    if v.kind == "row":
        return _Val("col", v.data)
    return _Val("mat", v.data.T)


def _add(op: str, a: _Val, b: _Val) -> _Val:
    if a.kind != b.kind:
        raise EvaluationError(f"cannot {op} {a.kind} and {b.kind}")
    if a.kind != "scalar" and a.data.shape != b.data.shape:
        raise EvaluationError(
            f"extent mismatch: {a.data.shape} vs {b.data.shape}"
        )
    data = a.data + b.data if op == "+" else a.data - b.data
    return _Val(a.kind, data)


def _mul(a: _Val, b: _Val) -> _Val:
    if a.kind == "scalar" or b.kind == "scalar":
        s, v = (a, b) if a.kind == "scalar" else (b, a)
        if v.kind == "scalar":
            return _Val("scalar", s.data * v.data)
        return _Val(v.kind, s.data * v.data)
    if a.kind == "row" and b.kind == "col":
        if a.data.shape != b.data.shape:
            raise EvaluationError("dot product extent mismatch")
        return _Val("scalar", float(np.dot(a.data, b.data)))
    if a.kind == "col" and b.kind == "row":
        return _Val("mat", np.outer(a.data, b.data))
    if a.kind == "mat" and b.kind == "col":
        if a.data.shape[1] != b.data.shape[0]:
            raise EvaluationError(
                f"matrix-vector extent mismatch: {a.data.shape} x "
                f"{b.data.shape}"
            )
        return _Val("col", a.data @ b.data)
    raise EvaluationError(f"cannot multiply {a.kind} by {b.kind}")


def _eval(e: Expr, env: dict[str, _Val]) -> _Val:
    if isinstance(e, Var):
        if e.name not in env:
            raise EvaluationError(f"{e.name!r} has no value")
        return env[e.name]
    if isinstance(e, Transpose):
        return _transpose(_eval(e.operand, env))
    left = _eval(e.left, env)
    right = _eval(e.right, env)
    if e.op == "*":
        return _mul(left, right)
    return _add(e.op, left, right)


def reference_evaluate(spec: KernelSpec, inputs: dict) -> dict:
    """Run the kernel statements on concrete inputs, return the outputs.

    inputs maps each declared input name to a float (scalar), 1-D array
    (vector) or 2-D array (matrix).  Raises EvaluationError on missing
    inputs or extent mismatches.
    """
    declared = dict(spec.inputs)
    missing = [n for n in declared if n not in inputs]
    if missing:
        raise EvaluationError(f"missing inputs: {missing}")
    env = {n: _lift(n, declared[n], inputs[n]) for n in declared}
    out_decl = dict(spec.outputs)
    for stmt in spec.statements:
        val = _eval(stmt.value, env)
        if stmt.target in out_decl:
            want = _lift(stmt.target, out_decl[stmt.target], val.data)
            if want.kind != val.kind and val.kind != "scalar":
                raise EvaluationError(
                    f"{stmt.target!r} declared {want.kind}, computed {val.kind}"
                )
        env[stmt.target] = val
    result = {}
    for name, decl in spec.outputs:
        val = env[name]
        result[name] = (
            float(val.data) if decl.kind == "scalar"
            else np.array(val.data, dtype=np.float64)
        )
    return result
