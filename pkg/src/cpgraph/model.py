"""In-memory representation of a combinatorial problem instance.

An instance is a set of integer/boolean variables with finite domains, a
list of constraints (expression trees, tables, element, sum, allDifferent)
and an optional objective. Values are immutable after construction, so
instances can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

BOOLEAN = "boolean"
INTEGER = "integer"
VAR_KINDS = (BOOLEAN, INTEGER)

MINIMIZE = "minimize"
MAXIMIZE = "maximize"
SATISFY = "satisfy"

# Operator alphabet for expression trees. Comparators may only appear at
# the root of an intension constraint.
ARITH_OPS = ("add", "sub", "mul", "div", "mod", "neg", "abs", "dist")
LOGIC_OPS = ("and", "or", "not", "xor")
COMPARISON_OPS = ("lt", "le", "gt", "ge", "eq", "ne")
ALL_OPS = ARITH_OPS + LOGIC_OPS + COMPARISON_OPS

UNARY_OPS = frozenset({"neg", "abs", "not"})
BINARY_OPS = frozenset({"sub", "div", "mod", "dist"}) | frozenset(COMPARISON_OPS)
NARY_OPS = frozenset({"add", "mul", "and", "or", "xor"})


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class Op:
    kind: str
    children: tuple["Expr", ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))


Expr = Union[Const, VarRef, Op]


@dataclass(frozen=True)
class VarDecl:
    """A decision variable with an explicit, strictly increasing domain."""

    name: str
    domain: tuple[int, ...]
    kind: str = INTEGER

    def __post_init__(self):
        object.__setattr__(self, "domain", tuple(self.domain))


@dataclass(frozen=True)
class Intension:
    id: str
    expr: Expr


@dataclass(frozen=True)
class TablePositive:
    id: str
    scope: tuple[str, ...]
    tuples: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(self.scope))
        object.__setattr__(self, "tuples", tuple(tuple(t) for t in self.tuples))


@dataclass(frozen=True)
class TableNegative:
    id: str
    scope: tuple[str, ...]
    tuples: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(self.scope))
        object.__setattr__(self, "tuples", tuple(tuple(t) for t in self.tuples))


@dataclass(frozen=True)
class TableShort:
    """Positive table whose tuples may contain wildcard cells (None)."""

    id: str
    scope: tuple[str, ...]
    tuples: tuple[tuple[Optional[int], ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(self.scope))
        object.__setattr__(self, "tuples", tuple(tuple(t) for t in self.tuples))


@dataclass(frozen=True)
class Element:
    """items[index] == value, where index and value are expressions."""

    id: str
    items: tuple[Expr, ...]
    index: Expr
    value: Expr

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))


@dataclass(frozen=True)
class Sum:
    """sum(coeffs[i] * vars[i])  <comparator>  rhs."""

    id: str
    coeffs: tuple[int, ...]
    vars: tuple[str, ...]
    comparator: str
    rhs: Expr

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(self.coeffs))
        object.__setattr__(self, "vars", tuple(self.vars))


@dataclass(frozen=True)
class AllDifferent:
    id: str
    scope: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(self.scope))


Constraint = Union[
    Intension, TablePositive, TableNegative, TableShort, Element, Sum, AllDifferent
]

TABLE_KINDS = (TablePositive, TableNegative, TableShort)


@dataclass(frozen=True)
class Objective:
    direction: str = SATISFY
    expr: Optional[Expr] = None


@dataclass(frozen=True)
class Instance:
    vars: tuple[VarDecl, ...]
    constraints: tuple[Constraint, ...]
    objective: Objective = Objective()
    metadata: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "vars", tuple(self.vars))
        object.__setattr__(self, "constraints", tuple(self.constraints))

    def var_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.vars)

    def var(self, name: str) -> VarDecl:
        for v in self.vars:
            if v.name == name:
                return v
        raise KeyError(name)


def make_instance(
    vars: Iterable[VarDecl],
    constraints: Iterable[Constraint],
    objective: Objective = Objective(),
    metadata: str = "",
) -> Instance:
    """Build an instance, auto-assigning missing constraint ids as c0, c1, ..."""
    fixed = []
    for i, c in enumerate(constraints):
        if not c.id:
            c = type(c)(**{**c.__dict__, "id": f"c{i}"})
        fixed.append(c)
    return Instance(tuple(vars), tuple(fixed), objective, metadata)


@dataclass(frozen=True)
class Violation:
    path: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, path: str, message: str) -> None:
        self.violations.append(Violation(path, message))

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "\n".join(f"{v.path}: {v.message}" for v in self.violations)


class InvalidInstanceError(ValueError):
    """Raised when an operation requires a valid instance but validation failed."""

    def __init__(self, report: ValidationReport):
        super().__init__(str(report))
        self.report = report


def free_variables(expr: Expr) -> list[str]:
    """Variable names referenced by `expr`, in first-occurrence order, no duplicates."""
    seen: dict[str, None] = {}

    def walk(e: Expr) -> None:
        if isinstance(e, VarRef):
            seen.setdefault(e.name, None)
        elif isinstance(e, Op):
            for child in e.children:
                walk(child)

    walk(expr)
    return list(seen)


def _check_expr(report: ValidationReport, expr: Expr, path: str, names: set, root: bool) -> None:
    if isinstance(expr, Const):
        return
    if isinstance(expr, VarRef):
        if expr.name not in names:
            report.add(path, f"unresolved variable reference '{expr.name}'")
        return
    if not isinstance(expr, Op):
        report.add(path, f"unknown expression node {expr!r}")
        return
    if expr.kind not in ALL_OPS:
        report.add(path, f"unknown operator '{expr.kind}'")
        return
    if expr.kind in COMPARISON_OPS and not root:
        report.add(path, f"comparison operator '{expr.kind}' below an intension root")
    n = len(expr.children)
    if expr.kind in UNARY_OPS and n != 1:
        report.add(path, f"operator '{expr.kind}' expects 1 operand, got {n}")
    elif expr.kind in BINARY_OPS and n != 2:
        report.add(path, f"operator '{expr.kind}' expects 2 operands, got {n}")
    elif expr.kind in NARY_OPS and n < 2:
        report.add(path, f"operator '{expr.kind}' expects >=2 operands, got {n}")
    for i, child in enumerate(expr.children):
        _check_expr(report, child, f"{path}/{expr.kind}[{i}]", names, root=False)


def validate(instance: Instance) -> ValidationReport:
    """Check every structural invariant; violations are reported, not raised."""
    report = ValidationReport()
    if not instance.vars:
        report.add("vars", "instance has no variables")
    names: set[str] = set()
    for i, v in enumerate(instance.vars):
        path = f"vars[{i}]({v.name})"
        if v.name in names:
            report.add(path, "duplicate variable id")
        names.add(v.name)
        if v.kind not in VAR_KINDS:
            report.add(path, f"unknown variable kind '{v.kind}'")
        if not v.domain:
            report.add(path, "empty domain")
        elif any(a >= b for a, b in zip(v.domain, v.domain[1:])):
            report.add(path, "domain values not strictly increasing")

    ids: set[str] = set()
    for i, c in enumerate(instance.constraints):
        path = f"constraints[{i}]({c.id})"
        if not c.id:
            report.add(path, "missing constraint id")
        elif c.id in ids:
            report.add(path, "duplicate constraint id")
        ids.add(c.id)
        if isinstance(c, Intension):
            _check_expr(report, c.expr, path, names, root=True)
        elif isinstance(c, TABLE_KINDS):
            for s in c.scope:
                if s not in names:
                    report.add(path, f"unresolved scope variable '{s}'")
            for j, t in enumerate(c.tuples):
                if len(t) != len(c.scope):
                    report.add(f"{path}/tuple[{j}]",
                               f"arity {len(t)} does not match scope size {len(c.scope)}")
                if not isinstance(c, TableShort) and any(cell is None for cell in t):
                    report.add(f"{path}/tuple[{j}]", "wildcard cell in a plain table")
        elif isinstance(c, Element):
            for j, item in enumerate(c.items):
                if not isinstance(item, (Const, VarRef)):
                    report.add(f"{path}/items[{j}]", "element items must be constants or variables")
                else:
                    _check_expr(report, item, f"{path}/items[{j}]", names, root=False)
            if not c.items:
                report.add(path, "element list is empty")
            _check_expr(report, c.index, f"{path}/index", names, root=False)
            _check_expr(report, c.value, f"{path}/value", names, root=False)
        elif isinstance(c, Sum):
            if len(c.coeffs) != len(c.vars):
                report.add(path, f"{len(c.coeffs)} coefficients for {len(c.vars)} variables")
            if not c.vars:
                report.add(path, "sum over no variables")
            for s in c.vars:
                if s not in names:
                    report.add(path, f"unresolved sum variable '{s}'")
            if c.comparator not in COMPARISON_OPS:
                report.add(path, f"unknown comparator '{c.comparator}'")
            _check_expr(report, c.rhs, f"{path}/rhs", names, root=False)
        elif isinstance(c, AllDifferent):
            if len(c.scope) < 2:
                report.add(path, "allDifferent needs at least 2 variables")
            for s in c.scope:
                if s not in names:
                    report.add(path, f"unresolved scope variable '{s}'")
            if len(set(c.scope)) != len(c.scope):
                report.add(path, "repeated variable in allDifferent scope")
        else:
            report.add(path, f"unknown constraint {type(c).__name__}")

    obj = instance.objective
    if obj.direction not in (MINIMIZE, MAXIMIZE, SATISFY):
        report.add("objective", f"unknown direction '{obj.direction}'")
    if obj.direction == SATISFY and obj.expr is not None:
        report.add("objective", "satisfy objective must not carry an expression")
    if obj.direction in (MINIMIZE, MAXIMIZE):
        if obj.expr is None:
            report.add("objective", f"{obj.direction} objective needs an expression")
        else:
            _check_expr(report, obj.expr, "objective", names, root=False)
    return report


def require_valid(instance: Instance) -> None:
    report = validate(instance)
    if not report.ok:
        raise InvalidInstanceError(report)
