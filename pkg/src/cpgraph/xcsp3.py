"""XCSP3-core subset parser and serializer.

Supports exactly the surface needed by the instance builders: integer
variables with range or list domains, intension constraints in functional
syntax, extension tables (supports / conflicts, `*` wildcards), element,
sum with a comparison condition, allDifferent, and minimize/maximize
objectives. Anything else raises `UnsupportedConstraintError` naming the
offending tag, so downstream consumers never see partial instances.
"""

from __future__ import annotations

import xml.parsers.expat
from dataclasses import dataclass, field
from typing import Optional
from xml.sax.saxutils import escape

from .model import (
    ALL_OPS,
    BOOLEAN,
    COMPARISON_OPS,
    INTEGER,
    MAXIMIZE,
    MINIMIZE,
    SATISFY,
    AllDifferent,
    Const,
    Constraint,
    Element,
    Expr,
    Instance,
    Intension,
    Objective,
    Op,
    Sum,
    TableNegative,
    TablePositive,
    TableShort,
    VarDecl,
    VarRef,
    require_valid,
)


@dataclass(frozen=True)
class SourceSpan:
    begin: int
    end: int

    def __post_init__(self):
        if self.begin > self.end:
            object.__setattr__(self, "end", self.begin)


class XcspError(Exception):
    def __init__(self, message: str, span: Optional[SourceSpan] = None):
        super().__init__(message)
        self.span = span


class XmlSyntaxError(XcspError):
    pass


class ExprParseError(XcspError):
    pass


class UnknownOperatorError(ExprParseError):
    pass


class UnsupportedConstraintError(XcspError):
    def __init__(self, tag: str, span: Optional[SourceSpan] = None):
        super().__init__(f"unsupported constraint element <{tag}>", span)
        self.tag = tag


class UnresolvedVariableError(XcspError):
    def __init__(self, name: str, span: Optional[SourceSpan] = None):
        super().__init__(f"unresolved variable '{name}'", span)
        self.name = name


@dataclass
class _Node:
    tag: str
    attrib: dict
    begin: int
    end: int = 0
    text_begin: int = -1
    text: str = ""
    children: list = field(default_factory=list)

    def child(self, tag: str) -> Optional["_Node"]:
        for c in self.children:
            if c.tag == tag:
                return c
        return None

    @property
    def span(self) -> SourceSpan:
        return SourceSpan(self.begin, self.end)

    def text_span(self, offset: int = 0, length: int = 1) -> SourceSpan:
        base = self.text_begin if self.text_begin >= 0 else self.begin
        return SourceSpan(base + offset, base + offset + length)


def _parse_xml(data: bytes) -> _Node:
    parser = xml.parsers.expat.ParserCreate()
    root: list[_Node] = []
    stack: list[_Node] = []

    def start(tag, attrib):
        node = _Node(tag=tag, attrib=dict(attrib), begin=parser.CurrentByteIndex)
        if stack:
            stack[-1].children.append(node)
        else:
            root.append(node)
        stack.append(node)

    def end(tag):
        node = stack.pop()
        node.end = min(parser.CurrentByteIndex + len(tag) + 3, len(data))
        node.text = node.text.strip()

    def chars(text):
        if stack:
            if stack[-1].text_begin < 0 and text.strip():
                stack[-1].text_begin = parser.CurrentByteIndex
            stack[-1].text += text

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = chars
    try:
        parser.Parse(data, True)
    except xml.parsers.expat.ExpatError as exc:
        pos = min(max(parser.ErrorByteIndex, 0), max(len(data) - 1, 0))
        raise XmlSyntaxError(f"XML syntax error: {exc}", SourceSpan(pos, pos + 1)) from None
    if not root:
        raise XmlSyntaxError("empty document", SourceSpan(0, 0))
    return root[0]


# --- functional expression syntax ------------------------------------------


def parse_functional_expr(s: str, base_offset: int = 0) -> Expr:
    """Parse XCSP3 functional syntax, e.g. ``le(mul(3,x1),mul(4,x2))``.

    `base_offset` shifts reported error positions, so that errors inside an
    XML document point into the document rather than the extracted text.
    """
    if not s or not s.strip():
        raise ExprParseError("empty expression", SourceSpan(base_offset, base_offset + 1))
    pos = 0

    def err(msg: str, at: int, cls=ExprParseError):
        raise cls(msg, SourceSpan(base_offset + at, base_offset + at + 1))

    def skip_ws():
        nonlocal pos
        while pos < len(s) and s[pos].isspace():
            pos += 1

    def parse_term() -> Expr:
        nonlocal pos
        skip_ws()
        if pos >= len(s):
            err("unexpected end of expression", pos)
        start = pos
        ch = s[pos]
        if ch == "-" or ch.isdigit():
            pos += 1
            while pos < len(s) and s[pos].isdigit():
                pos += 1
            token = s[start:pos]
            if token == "-":
                err("lone '-' is not a number", start)
            return Const(int(token))
        if ch.isalpha() or ch == "_":
            while pos < len(s) and (s[pos].isalnum() or s[pos] == "_"):
                pos += 1
            name = s[start:pos]
            skip_ws()
            if pos < len(s) and s[pos] == "(":
                if name not in ALL_OPS:
                    err(f"unknown operator '{name}'", start, UnknownOperatorError)
                pos += 1
                children = [parse_term()]
                skip_ws()
                while pos < len(s) and s[pos] == ",":
                    pos += 1
                    children.append(parse_term())
                    skip_ws()
                if pos >= len(s) or s[pos] != ")":
                    err("expected ',' or ')'", pos)
                pos += 1
                return Op(name, tuple(children))
            return VarRef(name)
        err(f"unexpected character {ch!r}", pos)

    expr = parse_term()
    skip_ws()
    if pos != len(s):
        err(f"trailing input starting at {s[pos]!r}", pos)
    return expr


def format_expr(e: Expr) -> str:
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, VarRef):
        return e.name
    return f"{e.kind}({','.join(format_expr(c) for c in e.children)})"


# --- document -> Instance ---------------------------------------------------


def _parse_domain(text: str, node: _Node) -> tuple[int, ...]:
    values: list[int] = []
    for token in text.split():
        if ".." in token:
            lo_s, hi_s = token.split("..", 1)
            try:
                lo, hi = int(lo_s), int(hi_s)
            except ValueError:
                raise XmlSyntaxError(f"bad range '{token}'", node.text_span()) from None
            if hi < lo:
                raise XmlSyntaxError(f"descending range '{token}'", node.text_span())
            values.extend(range(lo, hi + 1))
        else:
            try:
                values.append(int(token))
            except ValueError:
                raise XmlSyntaxError(f"bad domain value '{token}'", node.text_span()) from None
    return tuple(sorted(set(values)))


def _infer_kind(domain: tuple[int, ...]) -> str:
    return BOOLEAN if set(domain) <= {0, 1} else INTEGER


def _parse_tuples(text: str, node: _Node, allow_wildcard: bool):
    """Parse '(1,2)(2,3)' tuple lists; bare integers mean unary tuples."""
    text = text.strip()
    if not text:
        return (), False
    if "(" not in text:
        cells = [(_parse_cell(tok, node, allow_wildcard),) for tok in text.split()]
        saw_wild = any(c[0] is None for c in cells)
        return tuple(cells), saw_wild
    tuples = []
    saw_wild = False
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch != "(":
            raise XmlSyntaxError(f"expected '(' in tuple list, got {ch!r}", node.text_span(i))
        close = text.find(")", i)
        if close < 0:
            raise XmlSyntaxError("unterminated tuple", node.text_span(i))
        body = text[i + 1 : close]
        cells = tuple(
            _parse_cell(tok.strip(), node, allow_wildcard)
            for tok in body.split(",")
        )
        saw_wild = saw_wild or any(c is None for c in cells)
        tuples.append(cells)
        i = close + 1
    return tuple(tuples), saw_wild


def _parse_cell(token: str, node: _Node, allow_wildcard: bool) -> Optional[int]:
    if token == "*":
        if not allow_wildcard:
            raise UnsupportedConstraintError("conflicts-with-wildcard", node.span)
        return None
    try:
        return int(token)
    except ValueError:
        raise XmlSyntaxError(f"bad tuple cell '{token}'", node.text_span()) from None


def _parse_condition(text: str, node: _Node, names: set) -> tuple[str, Expr]:
    text = text.strip()
    if not (text.startswith("(") and text.endswith(")")):
        raise XmlSyntaxError(f"bad condition '{text}'", node.text_span())
    parts = [p.strip() for p in text[1:-1].split(",")]
    if len(parts) != 2:
        raise XmlSyntaxError(f"bad condition '{text}'", node.text_span())
    op, operand = parts
    if op not in COMPARISON_OPS:
        raise UnsupportedConstraintError(f"condition operator '{op}'", node.span)
    try:
        rhs: Expr = Const(int(operand))
    except ValueError:
        if operand not in names:
            raise UnresolvedVariableError(operand, node.text_span()) from None
        rhs = VarRef(operand)
    return op, rhs


def _names_in(text: str, node: _Node, names: set) -> tuple[str, ...]:
    out = []
    for token in text.split():
        if token not in names:
            raise UnresolvedVariableError(token, node.text_span())
        out.append(token)
    return tuple(out)


_SUPPORTED_CONSTRAINTS = {"intension", "extension", "element", "sum", "allDifferent"}


def _parse_constraint(node: _Node, cid: str, names: set) -> Constraint:
    tag = node.tag
    if tag not in _SUPPORTED_CONSTRAINTS:
        raise UnsupportedConstraintError(tag, node.span)
    if tag == "intension":
        expr = parse_functional_expr(node.text, max(node.text_begin, 0))
        _resolve_expr(expr, node, names)
        return Intension(cid, expr)
    if tag == "extension":
        list_node = node.child("list")
        if list_node is None:
            raise XmlSyntaxError("extension without <list>", node.span)
        scope = _names_in(list_node.text, list_node, names)
        supports = node.child("supports")
        conflicts = node.child("conflicts")
        if supports is not None and conflicts is not None:
            raise XmlSyntaxError("extension with both supports and conflicts", node.span)
        if supports is not None:
            tuples, wild = _parse_tuples(supports.text, supports, allow_wildcard=True)
            if wild:
                return TableShort(cid, scope, tuples)
            return TablePositive(cid, scope, tuples)
        if conflicts is not None:
            tuples, _ = _parse_tuples(conflicts.text, conflicts, allow_wildcard=False)
            return TableNegative(cid, scope, tuples)
        raise XmlSyntaxError("extension without supports or conflicts", node.span)
    if tag == "element":
        list_node = node.child("list")
        index_node = node.child("index")
        value_node = node.child("value")
        if list_node is None or index_node is None or value_node is None:
            raise XmlSyntaxError("element needs <list>, <index> and <value>", node.span)
        items: list[Expr] = []
        for token in list_node.text.split():
            try:
                items.append(Const(int(token)))
            except ValueError:
                if token not in names:
                    raise UnresolvedVariableError(token, list_node.text_span()) from None
                items.append(VarRef(token))
        index = parse_functional_expr(index_node.text, max(index_node.text_begin, 0))
        value = parse_functional_expr(value_node.text, max(value_node.text_begin, 0))
        _resolve_expr(index, index_node, names)
        _resolve_expr(value, value_node, names)
        return Element(cid, tuple(items), index, value)
    if tag == "sum":
        list_node = node.child("list")
        if list_node is None:
            raise XmlSyntaxError("sum without <list>", node.span)
        vars_ = _names_in(list_node.text, list_node, names)
        coeffs_node = node.child("coeffs")
        if coeffs_node is not None:
            try:
                coeffs = tuple(int(t) for t in coeffs_node.text.split())
            except ValueError:
                raise XmlSyntaxError("bad coefficient list", coeffs_node.text_span()) from None
        else:
            coeffs = tuple(1 for _ in vars_)
        cond_node = node.child("condition")
        if cond_node is None:
            raise XmlSyntaxError("sum without <condition>", node.span)
        op, rhs = _parse_condition(cond_node.text, cond_node, names)
        return Sum(cid, coeffs, vars_, op, rhs)
    # allDifferent: scope either as direct text or a <list> child
    list_node = node.child("list")
    scope_text = list_node.text if list_node is not None else node.text
    scope_node = list_node if list_node is not None else node
    return AllDifferent(cid, _names_in(scope_text, scope_node, names))


def _resolve_expr(expr: Expr, node: _Node, names: set) -> None:
    if isinstance(expr, VarRef):
        if expr.name not in names:
            raise UnresolvedVariableError(expr.name, node.span)
    elif isinstance(expr, Op):
        for child in expr.children:
            _resolve_expr(child, node, names)


def parse_instance(text) -> Instance:
    """Parse an XCSP3 document (str or bytes) into a validated Instance."""
    data = text.encode("utf-8") if isinstance(text, str) else bytes(text)
    root = _parse_xml(data)
    if root.tag != "instance":
        raise XmlSyntaxError(f"root element is <{root.tag}>, expected <instance>", root.span)

    variables: list[VarDecl] = []
    names: set[str] = set()
    vars_node = root.child("variables")
    if vars_node is not None:
        for child in vars_node.children:
            if child.tag != "var":
                raise UnsupportedConstraintError(child.tag, child.span)
            vid = child.attrib.get("id")
            if not vid:
                raise XmlSyntaxError("<var> without id", child.span)
            domain = _parse_domain(child.text, child)
            if not domain:
                raise XmlSyntaxError(f"variable '{vid}' has an empty domain", child.span)
            variables.append(VarDecl(vid, domain, _infer_kind(domain)))
            names.add(vid)

    constraints: list[Constraint] = []
    cons_node = root.child("constraints")
    if cons_node is not None:
        for i, child in enumerate(cons_node.children):
            cid = child.attrib.get("id") or f"c{i}"
            constraints.append(_parse_constraint(child, cid, names))

    objective = Objective()
    obj_node = root.child("objectives")
    if obj_node is not None and obj_node.children:
        if len(obj_node.children) > 1:
            raise UnsupportedConstraintError("multiple objectives", obj_node.span)
        first = obj_node.children[0]
        if first.tag not in ("minimize", "maximize"):
            raise UnsupportedConstraintError(first.tag, first.span)
        expr = parse_functional_expr(first.text, max(first.text_begin, 0))
        _resolve_expr(expr, first, names)
        direction = MINIMIZE if first.tag == "minimize" else MAXIMIZE
        objective = Objective(direction, expr)

    instance = Instance(tuple(variables), tuple(constraints), objective,
                        metadata="xcsp3")
    require_valid(instance)
    return instance


# --- Instance -> document ---------------------------------------------------


def _format_domain(domain: tuple[int, ...]) -> str:
    parts = []
    i = 0
    while i < len(domain):
        j = i
        while j + 1 < len(domain) and domain[j + 1] == domain[j] + 1:
            j += 1
        if j > i:
            parts.append(f"{domain[i]}..{domain[j]}")
        else:
            parts.append(str(domain[i]))
        i = j + 1
    return " ".join(parts)


def _format_tuples(tuples) -> str:
    def cell(c):
        return "*" if c is None else str(c)

    return "".join("(" + ",".join(cell(c) for c in t) + ")" for t in tuples)


def serialize_instance(instance: Instance) -> str:
    """Render an instance as a deterministic XCSP3 document.

    `parse_instance(serialize_instance(i))` is structurally equal to `i`
    for every valid instance whose variable kinds follow the domain rule
    (boolean iff the domain is within {0, 1}).
    """
    require_valid(instance)
    itype = "CSP" if instance.objective.direction == SATISFY else "COP"
    lines = [f'<instance format="XCSP3" type="{itype}">', "  <variables>"]
    for v in instance.vars:
        lines.append(f'    <var id="{escape(v.name)}">{_format_domain(v.domain)}</var>')
    lines.append("  </variables>")
    lines.append("  <constraints>")
    for c in instance.constraints:
        cid = escape(c.id)
        if isinstance(c, Intension):
            lines.append(f'    <intension id="{cid}">{format_expr(c.expr)}</intension>')
        elif isinstance(c, (TablePositive, TableShort)):
            lines.append(f'    <extension id="{cid}">')
            lines.append(f"      <list>{' '.join(c.scope)}</list>")
            lines.append(f"      <supports>{_format_tuples(c.tuples)}</supports>")
            lines.append("    </extension>")
        elif isinstance(c, TableNegative):
            lines.append(f'    <extension id="{cid}">')
            lines.append(f"      <list>{' '.join(c.scope)}</list>")
            lines.append(f"      <conflicts>{_format_tuples(c.tuples)}</conflicts>")
            lines.append("    </extension>")
        elif isinstance(c, Element):
            lines.append(f'    <element id="{cid}">')
            lines.append(f"      <list>{' '.join(format_expr(item) for item in c.items)}</list>")
            lines.append(f"      <index>{format_expr(c.index)}</index>")
            lines.append(f"      <value>{format_expr(c.value)}</value>")
            lines.append("    </element>")
        elif isinstance(c, Sum):
            lines.append(f'    <sum id="{cid}">')
            lines.append(f"      <list>{' '.join(c.vars)}</list>")
            lines.append(f"      <coeffs>{' '.join(str(k) for k in c.coeffs)}</coeffs>")
            lines.append(f"      <condition>({c.comparator},{format_expr(c.rhs)})</condition>")
            lines.append("    </sum>")
        elif isinstance(c, AllDifferent):
            lines.append(f'    <allDifferent id="{cid}">{" ".join(c.scope)}</allDifferent>')
        else:
            raise XcspError(f"cannot serialize constraint {type(c).__name__}")
    lines.append("  </constraints>")
    if instance.objective.direction != SATISFY:
        tag = "minimize" if instance.objective.direction == MINIMIZE else "maximize"
        lines.append("  <objectives>")
        lines.append(f"    <{tag}>{format_expr(instance.objective.expr)}</{tag}>")
        lines.append("  </objectives>")
    lines.append("</instance>")
    return "\n".join(lines) + "\n"
