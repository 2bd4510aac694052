"""AST node types for the acquisition expression language."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union


@dataclass(frozen=True)
class Num:
    value: float
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Name:
    id: str
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class ListLit:
    items: tuple["Node", ...]
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Neg:
    operand: "Node"
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Node", ...]
    pos: int = field(default=-1, compare=False, repr=False)


Node = Union[Num, Name, ListLit, Neg, BinOp, Call]


@dataclass(frozen=True)
class Assign:
    name: str
    value: Node
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Module:
    """A program: zero or more single assignments, then a result expression."""

    assigns: tuple[Assign, ...]
    result: Node


def iter_nodes(node):
    """Pre-order traversal over expression nodes (and module parts)."""
    if isinstance(node, Module):
        for a in node.assigns:
            yield from iter_nodes(a.value)
        yield from iter_nodes(node.result)
        return
    yield node
    if isinstance(node, Neg):
        yield from iter_nodes(node.operand)
    elif isinstance(node, BinOp):
        yield from iter_nodes(node.left)
        yield from iter_nodes(node.right)
    elif isinstance(node, (Call, ListLit)):
        children = node.args if isinstance(node, Call) else node.items
        for c in children:
            yield from iter_nodes(c)


def count_nodes(node) -> int:
    return sum(1 for _ in iter_nodes(node))
