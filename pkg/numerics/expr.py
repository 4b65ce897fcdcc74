"""
Expression language for coefficient functions.

Every coefficient of a problem (r, p, p_hat, q, a, a_k, m, eta, psi, b, tau,
initial data) is supplied as a small math expression over the variables
t, x and k. This module parses those strings into an immutable AST,
evaluates it on floats or numpy arrays, and differentiates numerically.

Grammar (EBNF):

    sum     = product { ("+" | "-") product } ;
    product = unary { ("*" | "/") unary } ;
    unary   = "-" unary | "+" unary | power ;
    power   = atom [ "^" unary ] ;              (right associative)
    atom    = NUMBER | "pi" | VAR | FUNC "(" sum ")" | "(" sum ")" ;
    VAR     = "t" | "x" | "k" ;
    FUNC    = "sin" | "cos" | "exp" | "ln" | "sqrt" | "abs" ;
"""

import math
import logging
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Union

import numpy as np
from lark import Lark, Tree, Token
from lark.exceptions import UnexpectedInput, UnexpectedToken

logger = logging.getLogger(__name__)

VARIABLES = ("t", "x", "k")
FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt", "abs")
NAMED_CONSTANTS = {"pi": math.pi}

GRAMMAR = r"""
?start: sum

?sum: product
    | sum "+" product   -> add
    | sum "-" product   -> sub

?product: unary
    | product "*" unary -> mul
    | product "/" unary -> div

?unary: power
    | "-" unary         -> neg
    | "+" unary

?power: atom
    | atom "^" unary    -> pow

?atom: NUMBER                          -> number
    | NAME "(" sum ("," sum)* ")"      -> call
    | NAME                             -> var
    | "(" sum ")"

%import common.NUMBER
%import common.CNAME -> NAME
%import common.WS
%ignore WS
"""

_parser = Lark(GRAMMAR, parser="lalr", propagate_positions=True)


# ─── Errors ───


class ExprError(ValueError):
    """Base class for expression parse errors. Carries a byte offset."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class ExprSyntaxError(ExprError):
    pass


class ExprUnknownIdentifier(ExprError):
    pass


class ExprArityError(ExprError):
    pass


class ExprDomainError(ArithmeticError):
    """Raised when an expression is evaluated outside its domain."""


# ─── AST ───


@dataclass(frozen=True)
class Constant:
    value: float


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or a name from FUNCTIONS
    child: "ExprAst"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * / ^
    left: "ExprAst"
    right: "ExprAst"


ExprAst = Union[Constant, Variable, Unary, Binary]
Bindings = Mapping[str, Union[float, np.ndarray]]


# ─── Parsing ───


def parse_expression(src: str) -> ExprAst:
    """
    Parse an expression string into an AST.

    Raises ExprSyntaxError, ExprUnknownIdentifier or ExprArityError, each
    carrying the byte offset of the offending input.
    """
    if not src or not src.strip():
        raise ExprSyntaxError("empty expression", 0)

    try:
        tree = _parser.parse(src)
    except UnexpectedToken as e:
        pos = len(src) if e.token.type == "$END" else e.token.start_pos
        raise ExprSyntaxError(f"unexpected {e.token.type} in {src!r}", _byte_offset(src, pos)) from None
    except UnexpectedInput as e:
        pos = getattr(e, "pos_in_stream", None)
        pos = len(src) if pos is None else pos
        raise ExprSyntaxError(f"unexpected input in {src!r}", _byte_offset(src, pos)) from None

    return _build(tree, src)


def _byte_offset(src: str, char_pos: int) -> int:
    return len(src[:char_pos].encode("utf-8"))


def _build(node, src: str) -> ExprAst:
    if isinstance(node, Token):
        # A bare token only reaches here through an inlined rule.
        return _build(Tree("number", [node]), src)

    kind = node.data
    if kind == "number":
        return Constant(float(node.children[0]))

    if kind == "var":
        token = node.children[0]
        name = str(token)
        if name in NAMED_CONSTANTS:
            return Constant(NAMED_CONSTANTS[name])
        if name not in VARIABLES:
            raise ExprUnknownIdentifier(
                f"unknown identifier {name!r}; variables are {', '.join(VARIABLES)}",
                _byte_offset(src, token.start_pos),
            )
        return Variable(name)

    if kind == "call":
        token, *args = node.children
        name = str(token)
        offset = _byte_offset(src, token.start_pos)
        if name not in FUNCTIONS:
            raise ExprUnknownIdentifier(f"unknown function {name!r}", offset)
        if len(args) != 1:
            raise ExprArityError(f"{name}() takes 1 argument, got {len(args)}", offset)
        return Unary(name, _build(args[0], src))

    if kind == "neg":
        return Unary("neg", _build(node.children[0], src))

    ops = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}
    if kind in ops:
        left, right = node.children
        built = Binary(ops[kind], _build(left, src), _build(right, src))
        if kind == "pow":
            _check_power(built, src, node)
        return built

    raise ExprSyntaxError(f"unsupported construct {kind!r}", 0)


def _check_power(power: Binary, src: str, node: Tree) -> None:
    """A variable exponent is only allowed on a base that cannot go negative."""
    if free_variables(power.right) and may_be_negative(power.left):
        offset = node.meta.start_pos if not node.meta.empty else 0
        raise ExprSyntaxError(
            f"'^' with a variable exponent needs a base that cannot be negative: {unparse(power)}",
            _byte_offset(src, offset),
        )


def _walk(ast: ExprAst):
    yield ast
    if isinstance(ast, Unary):
        yield from _walk(ast.child)
    elif isinstance(ast, Binary):
        yield from _walk(ast.left)
        yield from _walk(ast.right)


def free_variables(ast: ExprAst) -> frozenset[str]:
    return frozenset(n.name for n in _walk(ast) if isinstance(n, Variable))


def may_be_negative(ast: ExprAst) -> bool:
    """
    Conservative sign analysis. False means the expression is provably
    non-negative for t >= 0, integer k >= 1 and any x.
    """
    if isinstance(ast, Constant):
        return ast.value < 0
    if isinstance(ast, Variable):
        return ast.name == "x"
    if isinstance(ast, Unary):
        if ast.op in ("exp", "abs", "sqrt"):
            return False
        if ast.op == "neg":
            return not (isinstance(ast.child, Constant) and ast.child.value <= 0)
        return True
    if ast.op in ("+", "*", "/"):
        return may_be_negative(ast.left) or may_be_negative(ast.right)
    if ast.op == "^":
        if not may_be_negative(ast.left):
            return False
        exponent = ast.right
        if isinstance(exponent, Constant) and float(exponent.value).is_integer():
            return int(exponent.value) % 2 != 0
        return True
    return True


# ─── Unparsing ───

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}
_ATOM = 5


def _precedence(ast: ExprAst) -> int:
    if isinstance(ast, Binary):
        return _PRECEDENCE[ast.op]
    if isinstance(ast, Unary) and ast.op == "neg":
        return _PRECEDENCE["neg"]
    return _ATOM


def _format_number(value: float) -> str:
    if value == math.pi:
        return "pi"
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def unparse(ast: ExprAst) -> str:
    """Render an AST back to source. parse(unparse(e)) == e."""
    if isinstance(ast, Constant):
        text = _format_number(ast.value)
        return f"({text})" if ast.value < 0 else text
    if isinstance(ast, Variable):
        return ast.name
    if isinstance(ast, Unary):
        if ast.op == "neg":
            inner = unparse(ast.child)
            if _precedence(ast.child) < _PRECEDENCE["neg"]:
                inner = f"({inner})"
            return f"-{inner}"
        return f"{ast.op}({unparse(ast.child)})"

    prec = _PRECEDENCE[ast.op]
    left, right = unparse(ast.left), unparse(ast.right)
    if ast.op == "^":
        if _precedence(ast.left) < _ATOM:
            left = f"({left})"
        if _precedence(ast.right) < prec:
            right = f"({right})"
        return f"{left}^{right}"

    if _precedence(ast.left) < prec:
        left = f"({left})"
    if _precedence(ast.right) <= prec:
        right = f"({right})"
    return f"{left}{ast.op}{right}"


# ─── Evaluation ───

_FUNCS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "ln": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}


def evaluate(ast: ExprAst, bindings: Bindings):
    """
    Evaluate an expression. Scalars in give a float out; any numpy array in
    the bindings gives an array broadcast over all bound arrays.
    """
    arrays = [v for v in bindings.values() if isinstance(v, np.ndarray)]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        value = _eval(ast, bindings)
    if not arrays:
        return float(value)
    shape = np.broadcast_shapes(*(a.shape for a in arrays))
    return np.broadcast_to(np.asarray(value, dtype=float), shape).copy()


def _eval(ast: ExprAst, b: Bindings):
    if isinstance(ast, Constant):
        return ast.value
    if isinstance(ast, Variable):
        try:
            return b[ast.name]
        except KeyError:
            raise ExprDomainError(f"variable {ast.name!r} is not bound") from None

    if isinstance(ast, Unary):
        v = _eval(ast.child, b)
        if ast.op == "neg":
            return -v
        if ast.op == "ln" and np.any(np.asarray(v) <= 0):
            raise ExprDomainError(f"ln of non-positive value in {unparse(ast)}")
        if ast.op == "sqrt" and np.any(np.asarray(v) < 0):
            raise ExprDomainError(f"sqrt of negative value in {unparse(ast)}")
        return _FUNCS[ast.op](v)

    left = _eval(ast.left, b)
    right = _eval(ast.right, b)
    if ast.op == "+":
        return np.add(left, right)
    if ast.op == "-":
        return np.subtract(left, right)
    if ast.op == "*":
        return np.multiply(left, right)
    if ast.op == "/":
        if np.any(np.asarray(right) == 0):
            raise ExprDomainError(f"division by zero in {unparse(ast)}")
        return np.divide(left, right)

    base = np.asarray(left, dtype=float)
    exponent = np.asarray(right, dtype=float)
    fractional = exponent != np.floor(exponent)
    if np.any((base < 0) & fractional):
        raise ExprDomainError(f"negative base with fractional exponent in {unparse(ast)}")
    if np.any((base == 0) & (exponent < 0)):
        raise ExprDomainError(f"division by zero in {unparse(ast)}")
    return np.power(base, exponent)


def spow(u, exponent: float):
    """Signed power sign(u)*|u|^exponent, used for u^alpha with odd-ratio alpha."""
    result = np.sign(u) * np.abs(u) ** float(exponent)
    return float(result) if np.ndim(result) == 0 else result


def default_step(at):
    return np.maximum(1e-6, 1e-6 * np.abs(at))


def diff_numeric(
    ast: ExprAst,
    var: str,
    at,
    h: Optional[float] = None,
    bindings: Optional[Bindings] = None,
):
    """Central difference d/d(var) of the expression at the given point(s)."""
    step = default_step(at) if h is None else h
    plus = dict(bindings or {})
    minus = dict(bindings or {})
    plus[var] = at + step
    minus[var] = at - step
    return (evaluate(ast, plus) - evaluate(ast, minus)) / (2 * step)


class ExprFunction:
    """
    An expression viewed as a function of one variable, other variables
    fixed. Accepts floats or numpy arrays.
    """

    def __init__(self, ast: ExprAst, var: str = "t", **fixed):
        self.ast = ast
        self.var = var
        self.fixed = fixed

    def __call__(self, value):
        return evaluate(self.ast, {**self.fixed, self.var: value})

    def derivative(self, value, h: Optional[float] = None):
        return diff_numeric(self.ast, self.var, value, h=h, bindings=self.fixed)

    def __repr__(self) -> str:
        return f"ExprFunction({unparse(self.ast)!r}, var={self.var!r})"


def as_function(expr: Union[ExprAst, str, Callable], var: str = "t", **fixed) -> Callable:
    """Turn an AST, a source string, or an existing callable into a callable of `var`."""
    if isinstance(expr, str):
        expr = parse_expression(expr)
    if isinstance(expr, (Constant, Variable, Unary, Binary)):
        return ExprFunction(expr, var, **fixed)
    return expr
