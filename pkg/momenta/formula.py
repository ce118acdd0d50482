"""Polynomial formulas in x, y, z.

The grammar is the usual infix arithmetic with `+`, `-`, `*`, integer powers written
with `^`, division by constants, the constant `pi` and `sqrt(...)` of a constant.
Multiplication is always explicit: `3*x*y^2`, never `3xy^2`.
"""

from __future__ import annotations

import ast
import math
import operator
import re
from typing import Any, Callable, Dict, List, Optional, Tuple

from momenta.moments import PolynomialField

MAX_POWER = 64


class PolynomialParseError(ValueError):
    """Raised when a formula is not a polynomial we can read.

    Attributes:
        position: 0-based offset into the formula, if known.
    """

    def __init__(self, message: str, formula: str = "", position: Optional[int] = None):
        if position is not None:
            message = f"{message} at position {position} in {formula!r}"
        elif formula:
            message = f"{message} in {formula!r}"
        super().__init__(message)
        self.position = position


_ALLOWED_BINOPS: Dict[Any, Callable[[Any, Any], Any]] = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
}

_ALLOWED_UNARYOPS: Dict[Any, Callable[[Any], Any]] = {
    ast.UAdd: operator.pos,
    ast.USub: operator.neg,
}

_VARIABLES = ("x", "y", "z")

_CONSTANTS = {
    "pi": math.pi,
}


def _to_python(formula: str) -> Tuple[str, List[int]]:
    """Replace `^` with `**`. Returns the new text and, for every character of it, the
    offset of the character it came from."""
    text = []
    origin = []
    for i, ch in enumerate(formula):
        if ch == "^":
            text.append("**")
            origin += [i, i]
        else:
            text.append(ch)
            origin.append(i)
    origin.append(len(formula))
    return "".join(text), origin


def parse_polynomial(formula: str) -> PolynomialField:
    """Parse a formula into its canonical polynomial."""
    stripped = formula.strip()
    if not stripped:
        raise PolynomialParseError("Empty formula", formula)
    match = re.search(r"\*\*", formula)
    if match:
        raise PolynomialParseError("Use ^ for powers, not **", formula, match.start())

    text, origin = _to_python(formula)
    lead = len(text) - len(text.lstrip())

    def position(node: ast.AST) -> int:
        return origin[min(lead + getattr(node, "col_offset", 0), len(origin) - 1)]

    try:
        expression = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        offset = (exc.offset or 1) - 1
        raise PolynomialParseError(
            f"Invalid expression ({exc.msg})",
            formula,
            origin[min(lead + offset, len(origin) - 1)],
        ) from exc

    def _constant(node: ast.AST, what: str) -> float:
        value = _eval(node)
        if not value.is_constant():
            raise PolynomialParseError(f"{what} must be a constant", formula, position(node))
        return value.constant_value()

    def _eval(node: ast.AST) -> PolynomialField:
        if isinstance(node, ast.Constant):
            if isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
                return PolynomialField.constant(float(node.value))
            raise PolynomialParseError(
                f"Unsupported constant {node.value!r}", formula, position(node)
            )
        if isinstance(node, ast.Name):
            if node.id in _VARIABLES:
                return PolynomialField.variable(node.id)
            if node.id in _CONSTANTS:
                return PolynomialField.constant(_CONSTANTS[node.id])
            raise PolynomialParseError(f"Unknown name {node.id!r}", formula, position(node))
        if isinstance(node, ast.BinOp):
            op = type(node.op)
            if op == ast.Pow:
                exponent = _constant(node.right, "An exponent")
                if exponent != int(exponent) or not 0 <= exponent <= MAX_POWER:
                    raise PolynomialParseError(
                        f"Exponents must be integers in [0, {MAX_POWER}], got {exponent}",
                        formula,
                        position(node.right),
                    )
                return _eval(node.left) ** int(exponent)
            if op == ast.Div:
                divisor = _constant(node.right, "A divisor")
                if divisor == 0.0:
                    raise PolynomialParseError("Division by zero", formula, position(node.right))
                return _eval(node.left) * (1.0 / divisor)
            if op not in _ALLOWED_BINOPS:
                raise PolynomialParseError(
                    f"Unsupported operator {op.__name__}", formula, position(node)
                )
            return _ALLOWED_BINOPS[op](_eval(node.left), _eval(node.right))
        if isinstance(node, ast.UnaryOp):
            unary_op = type(node.op)
            if unary_op not in _ALLOWED_UNARYOPS:
                raise PolynomialParseError(
                    f"Unsupported operator {unary_op.__name__}", formula, position(node)
                )
            return _ALLOWED_UNARYOPS[unary_op](_eval(node.operand))
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id != "sqrt":
                # Also catches implicit multiplication like 2(x + 1).
                raise PolynomialParseError(
                    "Unsupported function call (only sqrt of a constant is allowed)",
                    formula,
                    position(node),
                )
            if node.keywords or len(node.args) != 1:
                raise PolynomialParseError(
                    "sqrt() takes exactly one argument", formula, position(node)
                )
            value = _constant(node.args[0], "The argument of sqrt()")
            if value < 0:
                raise PolynomialParseError(
                    "sqrt() of a negative number", formula, position(node.args[0])
                )
            return PolynomialField.constant(math.sqrt(value))
        raise PolynomialParseError(
            f"Unsupported expression {ast.unparse(node)!r}", formula, position(node)
        )

    return _eval(expression.body)
