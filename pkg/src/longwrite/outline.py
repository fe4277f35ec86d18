"""Outline tree, markdown heading parser/serializer and edit operations.

Outlines travel between pipeline stages (and to and from the LLM) as plain
markdown heading text::

    # History
    ## Early years
    # Reception

Parsing is total: deep level jumps are clamped instead of rejected, so noisy
model output still yields a usable tree.
"""

from __future__ import annotations

import copy
import enum
import re
from dataclasses import dataclass, field

from .errors import EmptyOutline, NoOperations

_HEADING_RE = re.compile(r"^\s{0,3}(#{1,6})\s+(.*?)(?:\s+#+)?\s*$")
_NUMBERING_RE = re.compile(r"^(?:\d+(?:\.\d+)+[.)]?|\d+[.)]|[IVXLCDM]+[.)])(?:\s+|$)")
_WS_RE = re.compile(r"\s+")


def normalize_title(t: str) -> str:
    """Canonical form used for every title comparison.

    Strips leading '#' marks and list numbering ("1.", "2.3)", "IV."),
    collapses whitespace and case-folds.
    """
    s = t.strip()
    while True:
        before = s
        s = s.lstrip("#").strip()
        s = _NUMBERING_RE.sub("", s, count=1).strip()
        if s == before:
            break
    return _WS_RE.sub(" ", s).casefold()


@dataclass
class SectionNode:
    title: str
    level: int = 1
    children: list[SectionNode] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.title = self.title.strip()
        if not self.title:
            raise ValueError("section title must be nonempty")
        if self.title.startswith("#"):
            raise ValueError(f"section title may not start with '#': {self.title!r}")
        if self.level < 1:
            raise ValueError("section level must be >= 1")
        for child in self.children:
            if child.level != self.level + 1:
                raise ValueError(
                    f"child {child.title!r} has level {child.level}, expected {self.level + 1}"
                )

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()

    def subsection_titles(self) -> list[str]:
        return [n.title for n in self.walk()][1:]


@dataclass
class Outline:
    roots: list[SectionNode] = field(default_factory=list)

    def __post_init__(self) -> None:
        for r in self.roots:
            if r.level != 1:
                raise ValueError("outline roots must be level 1")

    def walk(self):
        for r in self.roots:
            yield from r.walk()

    def titles(self) -> list[str]:
        """All titles at every level, preorder."""
        return [n.title for n in self.walk()]

    def find(self, title: str) -> SectionNode | None:
        key = normalize_title(title)
        for node in self.walk():
            if normalize_title(node.title) == key:
                return node
        return None

    def __len__(self) -> int:
        return sum(1 for _ in self.walk())


def _relevel(node: SectionNode, level: int) -> SectionNode:
    return SectionNode(node.title, level, [_relevel(c, level + 1) for c in node.children])


def _dedupe_siblings(nodes: list[SectionNode]) -> list[SectionNode]:
    # later duplicates are folded into the first occurrence
    seen: dict[str, SectionNode] = {}
    out: list[SectionNode] = []
    for node in nodes:
        key = normalize_title(node.title)
        if key in seen:
            seen[key].children.extend(node.children)
        else:
            seen[key] = node
            out.append(node)
    for node in out:
        node.children = _dedupe_siblings(node.children)
    return out


def parse_outline(text: str) -> Outline:
    """Parse markdown heading text into an :class:`Outline`.

    Non-heading lines are ignored. A heading deeper than one level below the
    previous heading is clamped to ``previous + 1``.

    Raises:
        EmptyOutline: if ``text`` holds no heading line.
    """
    roots: list[SectionNode] = []
    stack: list[SectionNode] = []
    for line in text.splitlines():
        m = _HEADING_RE.match(line)
        if not m:
            continue
        title = m.group(2).strip().lstrip("#").strip()
        if not title:
            continue
        prev = stack[-1].level if stack else 0
        level = min(len(m.group(1)), prev + 1)
        while stack and stack[-1].level >= level:
            stack.pop()
        node = SectionNode(title, level)
        if stack:
            stack[-1].children.append(node)
        else:
            roots.append(node)
        stack.append(node)
    if not roots:
        raise EmptyOutline("no heading line found")
    return Outline(_dedupe_siblings(roots))


def render_outline(o: Outline) -> str:
    return "\n".join(f"{'#' * n.level} {n.title}" for n in o.walk())


def first_level_sections(o: Outline) -> list[str]:
    return [r.title for r in o.roots]


def drop_titles(o: Outline, title: str) -> Outline:
    """Remove every node (with its subtree) whose normalized title equals ``title``.

    Children of a removed root are promoted one level so that a reply such as
    ``# <topic>\\n## A`` still yields ``A`` as a first-level section.
    """
    key = normalize_title(title)

    def prune(nodes: list[SectionNode], level: int) -> list[SectionNode]:
        out = []
        for n in nodes:
            if normalize_title(n.title) == key:
                if level == 1:
                    out.extend(prune([_relevel(c, 1) for c in n.children], 1))
                continue
            out.append(SectionNode(n.title, level, prune(n.children, level + 1)))
        return out

    return Outline(_dedupe_siblings(prune(o.roots, 1)))


class OpKind(enum.Enum):
    ADD = "add section"
    DELETE = "delete section"
    NOTHING = "do nothing"


@dataclass(frozen=True)
class EditOperation:
    kind: OpKind
    target: str | None = None

    def __post_init__(self) -> None:
        if self.kind is OpKind.NOTHING:
            if self.target is not None:
                raise ValueError("DoNothing carries no target")
        elif not (self.target and self.target.strip()):
            raise ValueError(f"{self.kind.value} requires a target title")

    def render(self) -> str:
        if self.kind is OpKind.NOTHING:
            return "-[do nothing]"
        return f"-[{self.kind.value}] : {self.target}"


def add_section(title: str) -> EditOperation:
    return EditOperation(OpKind.ADD, title.strip())


def delete_section(title: str) -> EditOperation:
    return EditOperation(OpKind.DELETE, title.strip())


DO_NOTHING = EditOperation(OpKind.NOTHING)

_OP_RE = re.compile(
    r"^\s*[-*]?\s*\[\s*(add section|delete section|do nothing)\s*\]\s*(?::\s*(.*?))?\s*$",
    re.IGNORECASE,
)


def parse_operations(text: str) -> tuple[list[EditOperation], int]:
    """Parse operation lines from an LLM reply.

    Returns the operations in order and the number of nonblank lines that did
    not match the operation grammar.

    Raises:
        NoOperations: if no line parses.
    """
    ops: list[EditOperation] = []
    skipped = 0
    for line in text.splitlines():
        if not line.strip():
            continue
        m = _OP_RE.match(line)
        if not m:
            skipped += 1
            continue
        kind = OpKind(" ".join(m.group(1).lower().split()))
        target = (m.group(2) or "").strip()
        if kind is OpKind.NOTHING:
            ops.append(DO_NOTHING)
        elif target:
            ops.append(EditOperation(kind, target))
        else:
            skipped += 1
    if not ops:
        raise NoOperations(f"no operation line parsed ({skipped} skipped)")
    return ops, skipped


def render_operations(ops: list[EditOperation]) -> str:
    return "\n".join(op.render() for op in ops)


def _delete_first(nodes: list[SectionNode], key: str) -> bool:
    for i, n in enumerate(nodes):
        if normalize_title(n.title) == key:
            del nodes[i]
            return True
        if _delete_first(n.children, key):
            return True
    return False


def apply_operations(
    o: Outline, ops: list[EditOperation], notes: list[str] | None = None
) -> Outline:
    """Apply edit operations in order and return a new outline.

    AddSection appends a first-level section unless a root with the same
    normalized title exists. DeleteSection removes the first preorder match
    at any depth together with its subtree. No-ops are appended to ``notes``.
    """
    roots = copy.deepcopy(o.roots)
    for op in ops:
        if op.kind is OpKind.NOTHING:
            continue
        key = normalize_title(op.target)
        if op.kind is OpKind.ADD:
            if any(normalize_title(r.title) == key for r in roots):
                if notes is not None:
                    notes.append(f"add skipped, already present: {op.target}")
                continue
            roots.append(SectionNode(op.target, 1))
        else:
            if len(roots) == 1 and normalize_title(roots[0].title) == key:
                if notes is not None:
                    notes.append(f"delete skipped, would empty outline: {op.target}")
                continue
            if not _delete_first(roots, key) and notes is not None:
                notes.append(f"delete skipped, not found: {op.target}")
    return Outline(roots)
