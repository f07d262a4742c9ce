"""
Symbolic terms, constraint problems and SMT-LIB2 emission.

Terms are immutable trees over Bool, Real and Int. The helpers below fold
constants eagerly and refuse any construction that would leave linear
arithmetic, so every emitted script stays in QF_LRA / QF_LIRA.
All numeric constants are exact rationals (fractions.Fraction).
"""

import logging
import operator
import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from utils.errors import ConstructionError, DecodeError, LinearityError, SortError

logger = logging.getLogger(__name__)


class Sort(str, Enum):
    BOOL = "Bool"
    REAL = "Real"
    INT = "Int"


_SYMBOL = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")
_RESERVED = {"true", "false", "and", "or", "not", "ite", "let", "distinct", "assert"}
_SMT_OP = {"implies": "=>"}
_CMP = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge}


@dataclass(frozen=True, eq=False)
class Term:
    """
    One node of a symbolic expression.

    op is "const", "var" or an operator name; payload holds the constant value
    (bool or Fraction) or the variable name. Equality is object identity, so
    the comparison operators are free to build symbolic terms.
    """
    op: str
    sort: Sort
    args: tuple = ()
    payload: object = None

    @property
    def is_const(self):
        return self.op == "const"

    @property
    def is_var(self):
        return self.op == "var"

    @property
    def name(self):
        return self.payload if self.op == "var" else None

    @property
    def value(self):
        return self.payload if self.op == "const" else None

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(-1, self)

    def __lt__(self, other):
        return lt(self, other)

    def __le__(self, other):
        return le(self, other)

    def __gt__(self, other):
        return gt(self, other)

    def __ge__(self, other):
        return ge(self, other)

    def __and__(self, other):
        return and_(self, other)

    def __rand__(self, other):
        return and_(other, self)

    def __or__(self, other):
        return or_(self, other)

    def __ror__(self, other):
        return or_(other, self)

    def __invert__(self):
        return not_(self)

    def __bool__(self):
        raise TypeError("a symbolic Term has no truth value; combine it with and_/or_/ite")

    def __repr__(self):
        text = to_sexpr(self)
        if len(text) > 120:
            text = text[:117] + "..."
        return f"Term<{self.sort.value}>({text})"


TRUE = Term("const", Sort.BOOL, payload=True)
FALSE = Term("const", Sort.BOOL, payload=False)


# --- Leaves ---

def const(value, sort=None):
    """Wrap a Python bool/int/Fraction as a constant Term (Real unless told otherwise)."""
    if isinstance(value, Term):
        return value
    if isinstance(value, bool):
        if sort not in (None, Sort.BOOL):
            raise SortError(f"boolean constant used where {sort.value} is expected")
        return TRUE if value else FALSE
    if isinstance(value, float):
        raise SortError("binary floats are not accepted as constants; pass a Fraction")
    if isinstance(value, (int, Fraction)):
        number = Fraction(value)
        sort = sort or Sort.REAL
        if sort is Sort.BOOL:
            raise SortError(f"numeric constant {number} used where Bool is expected")
        if sort is Sort.INT and number.denominator != 1:
            raise SortError(f"{number} is not an integer constant")
        return Term("const", sort, payload=number)
    raise SortError(f"cannot build a constant from {value!r}")


def var(name, sort):
    if not isinstance(sort, Sort):
        raise SortError(f"unknown sort {sort!r}")
    if not isinstance(name, str) or not _SYMBOL.match(name) or name in _RESERVED:
        raise ConstructionError(f"invalid variable name {name!r}")
    return Term("var", sort, payload=name)


# --- Sort plumbing ---

def _as_sort(value, sort):
    if isinstance(value, Term):
        if value.sort is sort:
            return value
        if value.is_const and value.sort is not Sort.BOOL and sort is not Sort.BOOL:
            return const(value.payload, sort)
        raise SortError(f"expected {sort.value}, got {value.sort.value} term {value!r}")
    return const(value, sort)


def _is_boolish(value):
    return isinstance(value, bool) or (isinstance(value, Term) and value.sort is Sort.BOOL)


def _unify(args, what):
    if any(_is_boolish(a) for a in args):
        raise SortError(f"'{what}' expects numeric operands")
    var_sorts = {a.sort for a in args if isinstance(a, Term) and not a.is_const}
    if len(var_sorts) > 1:
        raise SortError(f"'{what}' mixes Int and Real operands")
    if var_sorts:
        sort = var_sorts.pop()
    else:
        const_sorts = {a.sort for a in args if isinstance(a, Term)}
        sort = Sort.INT if const_sorts == {Sort.INT} else Sort.REAL
    return sort, [_as_sort(a, sort) for a in args]


def _bool(value):
    term = const(value) if isinstance(value, bool) else value
    if not isinstance(term, Term) or term.sort is not Sort.BOOL:
        raise SortError(f"expected a Bool term, got {value!r}")
    return term


def _flatten(args):
    for item in args:
        if isinstance(item, (list, tuple)):
            yield from _flatten(item)
        else:
            yield item


# --- Boolean connectives ---

def and_(*args):
    parts = []
    for item in _flatten(args):
        term = _bool(item)
        if term.is_const:
            if not term.payload:
                return FALSE
            continue
        parts.append(term)
    if not parts:
        return TRUE
    if len(parts) == 1:
        return parts[0]
    return Term("and", Sort.BOOL, tuple(parts))


def or_(*args):
    parts = []
    for item in _flatten(args):
        term = _bool(item)
        if term.is_const:
            if term.payload:
                return TRUE
            continue
        parts.append(term)
    if not parts:
        return FALSE
    if len(parts) == 1:
        return parts[0]
    return Term("or", Sort.BOOL, tuple(parts))


def not_(value):
    term = _bool(value)
    if term.is_const:
        return FALSE if term.payload else TRUE
    if term.op == "not":
        return term.args[0]
    return Term("not", Sort.BOOL, (term,))


def implies(a, b):
    x, y = _bool(a), _bool(b)
    if x.is_const:
        return y if x.payload else TRUE
    if y.is_const:
        return TRUE if y.payload else not_(x)
    return Term("implies", Sort.BOOL, (x, y))


def ite(cond, a, b, sort=None):
    c = _bool(cond)
    if _is_boolish(a) or _is_boolish(b) or sort is Sort.BOOL:
        x, y = _bool(a), _bool(b)
        result_sort = Sort.BOOL
    elif sort is not None:
        x, y = _as_sort(a, sort), _as_sort(b, sort)
        result_sort = sort
    else:
        result_sort, (x, y) = _unify((a, b), "ite")
    if c.is_const:
        return x if c.payload else y
    if x is y or (x.is_const and y.is_const and x.payload == y.payload):
        return x
    if result_sort is Sort.BOOL and x.is_const and y.is_const:
        return c if x.payload else not_(c)
    return Term("ite", result_sort, (c, x, y))


# --- Comparisons ---

def eq(a, b):
    if _is_boolish(a) or _is_boolish(b):
        x, y = _bool(a), _bool(b)
        if x.is_const and y.is_const:
            return const(x.payload == y.payload)
        if x is y:
            return TRUE
        if x.is_const:
            x, y = y, x
        if y.is_const:
            return x if y.payload else not_(x)
        return Term("=", Sort.BOOL, (x, y))
    _, (x, y) = _unify((a, b), "=")
    if x.is_const and y.is_const:
        return const(x.payload == y.payload)
    if x is y:
        return TRUE
    return Term("=", Sort.BOOL, (x, y))


def ne(a, b):
    return not_(eq(a, b))


def _compare(op, a, b):
    _, (x, y) = _unify((a, b), op)
    if x.is_const and y.is_const:
        return const(_CMP[op](x.payload, y.payload))
    return Term(op, Sort.BOOL, (x, y))


def lt(a, b):
    return _compare("<", a, b)


def le(a, b):
    return _compare("<=", a, b)


def gt(a, b):
    return _compare(">", a, b)


def ge(a, b):
    return _compare(">=", a, b)


def lex_lt(a, b):
    """Strict lexicographic order over equal-length tuples of terms."""
    a, b = tuple(a), tuple(b)
    if len(a) != len(b):
        raise ConstructionError(f"cannot compare keys of width {len(a)} and {len(b)}")
    result = FALSE
    for x, y in reversed(list(zip(a, b))):
        result = or_(lt(x, y), and_(eq(x, y), result))
    return result


def lex_le(a, b):
    a, b = tuple(a), tuple(b)
    if len(a) != len(b):
        raise ConstructionError(f"cannot compare keys of width {len(a)} and {len(b)}")
    result = TRUE
    for x, y in reversed(list(zip(a, b))):
        result = or_(lt(x, y), and_(eq(x, y), result))
    return result


# --- Arithmetic ---

def add(*args):
    items = list(_flatten(args))
    if not items:
        return const(0)
    sort, terms = _unify(items, "+")
    total = Fraction(0)
    rest = []
    for term in terms:
        if term.is_const:
            total += term.payload
        else:
            rest.append(term)
    if not rest:
        return const(total, sort)
    if total != 0:
        rest.append(const(total, sort))
    if len(rest) == 1:
        return rest[0]
    return Term("+", sort, tuple(rest))


def sub(a, b):
    sort, (x, y) = _unify((a, b), "-")
    if x.is_const and y.is_const:
        return const(x.payload - y.payload, sort)
    if y.is_const and y.payload == 0:
        return x
    if x is y:
        return const(0, sort)
    return Term("-", sort, (x, y))


def mul(a, b):
    sort, (x, y) = _unify((a, b), "*")
    if x.is_const and y.is_const:
        return const(x.payload * y.payload, sort)
    if not x.is_const and not y.is_const:
        raise LinearityError(f"product of two non-constant terms: {x!r} * {y!r}")
    k, t = (x, y) if x.is_const else (y, x)
    if k.payload == 0:
        return const(0, sort)
    if k.payload == 1:
        return t
    return Term("*", sort, (k, t))


def _extremum(op, args):
    items = list(_flatten(args))
    if not items:
        raise ConstructionError(f"{op} of nothing")
    sort, terms = _unify(items, op)
    consts = [t.payload for t in terms if t.is_const]
    rest = [t for t in terms if not t.is_const]
    pick = min if op == "min" else max
    if consts:
        rest.append(const(pick(consts), sort))
    if len(rest) == 1:
        return rest[0]
    return Term(op, sort, tuple(rest))


def minimum(*args):
    return _extremum("min", args)


def maximum(*args):
    return _extremum("max", args)


def count(flags):
    """Number of true flags, as an Int term."""
    return add(*[ite(f, 1, 0, sort=Sort.INT) for f in flags]) if flags else const(0, Sort.INT)


# --- Selection ---

def argmin_formulas(values, validity):
    """
    Closed-form selection formulas: formula i holds iff candidate i is valid,
    its key is minimal among valid candidates, and no smaller index ties it.
    A value may be a tuple of terms, compared lexicographically.
    """
    if not values:
        raise ConstructionError("argmin needs at least one candidate")
    if len(values) != len(validity):
        raise ConstructionError(
            f"argmin got {len(values)} values but {len(validity)} validity flags")
    keys = [tuple(v) if isinstance(v, (tuple, list)) else (v,) for v in values]
    if len({len(k) for k in keys}) != 1:
        raise ConstructionError("argmin keys must all have the same width")
    valid = [_bool(flag) for flag in validity]

    formulas = []
    for i, key in enumerate(keys):
        parts = [valid[i]]
        for j, other in enumerate(keys):
            if j == i:
                continue
            beats = lex_lt(key, other) if j < i else lex_le(key, other)
            parts.append(or_(not_(valid[j]), beats))
        formulas.append(and_(*parts))
    return formulas


def build_argmin(values, validity, prefix="argmin"):
    """
    Returns (index_vars, side_constraints). Ineligible candidates never win;
    when nothing is eligible every index var is false.
    """
    formulas = argmin_formulas(values, validity)
    index_vars = [var(f"{prefix}_{i}", Sort.BOOL) for i in range(len(formulas))]
    side = [eq(v, f) for v, f in zip(index_vars, formulas)]
    return index_vars, side


# --- Traversal and evaluation ---

def _walk(term):
    seen = set()
    stack = [term]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        yield node
        stack.extend(node.args)


def free_vars(term):
    """Mapping name -> Sort of every variable in the term."""
    return {node.payload: node.sort for node in _walk(term) if node.is_var}


def uses_int(term):
    return any(node.sort is Sort.INT for node in _walk(term))


_APPLY = {
    "and": all,
    "or": any,
    "not": lambda vs: not vs[0],
    "implies": lambda vs: (not vs[0]) or vs[1],
    "ite": lambda vs: vs[1] if vs[0] else vs[2],
    "=": lambda vs: vs[0] == vs[1],
    "<": lambda vs: vs[0] < vs[1],
    "<=": lambda vs: vs[0] <= vs[1],
    ">": lambda vs: vs[0] > vs[1],
    ">=": lambda vs: vs[0] >= vs[1],
    "+": lambda vs: sum(vs, Fraction(0)),
    "-": lambda vs: vs[0] - vs[1],
    "*": lambda vs: vs[0] * vs[1],
    "min": min,
    "max": max,
}


def evaluate(term, env, memo=None):
    """Exact value of a term under a name -> value mapping."""
    memo = {} if memo is None else memo
    key = id(term)
    if key in memo:
        return memo[key]
    if term.op == "const":
        value = term.payload
    elif term.op == "var":
        if term.payload not in env:
            raise DecodeError(f"no value for variable {term.payload!r}")
        raw = env[term.payload]
        value = bool(raw) if term.sort is Sort.BOOL else Fraction(raw)
    else:
        value = _APPLY[term.op]([evaluate(a, env, memo) for a in term.args])
    memo[key] = value
    return value


# --- Emission ---

def _fmt_number(value, sort):
    if sort is Sort.INT:
        n = int(value)
        return str(n) if n >= 0 else f"(- {-n})"
    num, den = value.numerator, value.denominator
    body = f"{abs(num)}.0" if den == 1 else f"(/ {abs(num)}.0 {den}.0)"
    return body if num >= 0 else f"(- {body})"


def to_sexpr(term, memo=None):
    memo = {} if memo is None else memo
    key = id(term)
    if key in memo:
        return memo[key]
    if term.op == "const":
        if term.sort is Sort.BOOL:
            text = "true" if term.payload else "false"
        else:
            text = _fmt_number(term.payload, term.sort)
    elif term.op == "var":
        text = term.payload
    elif term.op in ("min", "max"):
        cmp = "<=" if term.op == "min" else ">="
        parts = [to_sexpr(a, memo) for a in term.args]
        text = parts[0]
        for nxt in parts[1:]:
            text = f"(ite ({cmp} {text} {nxt}) {text} {nxt})"
    elif term.op in _APPLY:
        children = " ".join(to_sexpr(a, memo) for a in term.args)
        text = f"({_SMT_OP.get(term.op, term.op)} {children})"
    else:
        raise ConstructionError(f"internal error: unsupported operator {term.op!r}")
    memo[key] = text
    return text


class Problem:
    """
    Declarations plus assertions. Auxiliary variables introduced through
    define() are remembered so their values can be recomputed later.
    """

    def __init__(self, name="problem", metadata=None):
        self.name = name
        self.declarations = {}
        self.assertions = []
        self.definitions = {}
        self.metadata = dict(metadata or {})
        self.referenced = set()
        self._vars = {}
        self._has_int = False

    def declare(self, name, sort):
        if name in self.declarations:
            raise ConstructionError(f"variable {name!r} is already declared")
        term = var(name, sort)
        self.declarations[name] = sort
        self._vars[name] = term
        if sort is Sort.INT:
            self._has_int = True
        return term

    def get(self, name):
        try:
            return self._vars[name]
        except KeyError:
            raise ConstructionError(f"variable {name!r} is not declared") from None

    def _check(self, term):
        term = _bool(term)
        for name, sort in free_vars(term).items():
            declared = self.declarations.get(name)
            if declared is None:
                raise ConstructionError(f"assertion references undeclared variable {name!r}")
            if declared is not sort:
                raise SortError(f"variable {name!r} declared {declared.value}, used as {sort.value}")
        return term

    def add(self, *constraints):
        for item in _flatten(constraints):
            term = self._check(item)
            if term is TRUE:
                continue
            self.referenced.update(free_vars(term))
            if not self._has_int and uses_int(term):
                self._has_int = True
            self.assertions.append(term)

    def define(self, name, term):
        """Name a term. Constants and plain variables are returned as they are."""
        term = const(term) if not isinstance(term, Term) else term
        if term.is_const or term.is_var:
            return term
        handle = self.declare(name, term.sort)
        self.definitions[name] = term
        self.add(eq(handle, term))
        return handle

    def argmin(self, prefix, values, validity):
        formulas = argmin_formulas(values, validity)
        return [self.define(f"{prefix}_{i}", f) for i, f in enumerate(formulas)]

    def copy(self):
        clone = Problem(self.name, self.metadata)
        clone.declarations = dict(self.declarations)
        clone.assertions = list(self.assertions)
        clone.definitions = dict(self.definitions)
        clone.referenced = set(self.referenced)
        clone._vars = dict(self._vars)
        clone._has_int = self._has_int
        return clone

    @property
    def logic(self):
        return "QF_LIRA" if self._has_int else "QF_LRA"

    def complete(self, assignment):
        """Fill sort defaults for declared variables no assertion mentions."""
        filled = dict(assignment)
        for name, sort in self.declarations.items():
            if name not in filled and name not in self.referenced:
                filled[name] = False if sort is Sort.BOOL else Fraction(0)
        return filled

    def __repr__(self):
        return (f"Problem({self.name!r}, {len(self.declarations)} declarations, "
                f"{len(self.assertions)} assertions)")


def emit_smtlib(problem, goal=None):
    """Complete SMT-LIB2 script; byte-identical for identical problems."""
    logic = problem.logic
    goal_term = None
    if goal is not None:
        goal_term = problem._check(goal)
        if uses_int(goal_term):
            logic = "QF_LIRA"

    lines = []
    for key, value in problem.metadata.items():
        lines.append(f"; {key}: {' '.join(str(value).split())}")
    lines.append("(set-option :produce-models true)")
    lines.append(f"(set-logic {logic})")
    for name, sort in problem.declarations.items():
        lines.append(f"(declare-const {name} {sort.value})")
    memo = {}
    for assertion in problem.assertions:
        lines.append(f"(assert {to_sexpr(assertion, memo)})")
    if goal_term is not None:
        lines.append(f"(assert {to_sexpr(goal_term, memo)})")
    lines.append("(check-sat)")
    lines.append("(get-model)")
    script = "\n".join(lines) + "\n"
    logger.debug("emitted %s: %d declarations, %d assertions, %d bytes",
                 problem.name, len(problem.declarations), len(problem.assertions), len(script))
    return script
