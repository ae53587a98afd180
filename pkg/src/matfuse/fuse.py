"""Fuse-set trees: the search-space representation.

A candidate program version (an *organism*) is a forest of iteration
trees over the operation graph.  Loop nodes share loops between the
operations beneath them; partition nodes add an outermost data-parallel
level that cuts one axis into per-thread blocks.  Writing the forest in
brace notation, one brace per loop with the axis subscripted::

    {_i{_j 1}}{_i{_j 2}}{_j 3}            three unfused roots
    {_{p(i)}{_i{_j 1}{_j 2}}}{_{p(j)}{_j 3}}   partitioned and outer-fused

Because fusion is expressed by sharing a tree node, the fusion relation
is an equivalence relation at every depth by construction, and every
operation under one partition node shares that node's thread count.
Those two properties remove the bulk of the illegal points a flat digit
encoding would generate (digit_space_size computes the size of that
legacy encoding for comparison).

Structural invariants (enforced by fusion_legal):

- every operation appears exactly once, at a leaf below exactly the
  loops of its canonical nest, in nest order;
- partition nodes appear only at root position, outside every loop, and
  their axis is an iteration axis of every operation beneath them;
- roots and siblings are ordered topologically.

Semantic legality on top of that:

- dependence convexity: no dataflow path between two operations in a
  fused set may pass through an operation outside the set;
- reduction barrier: an operation may not be fused at or inside the loop
  (or partition) level of a producer's reduction axis when it reads the
  reduced result;
- profitability pruning (on by default): every fused set must be
  connected by shared operands.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .graph import DataflowGraph, OpNode


class NotationError(ValueError):
    pass


class SpaceError(ValueError):
    """Kernel too large for exhaustive enumeration."""


# ---------------------------------------------------------------------------
# Tree nodes

@dataclass(frozen=True)
class OpLeaf:
    op_id: int


@dataclass(frozen=True)
class LoopNode:
    axis: str
    children: tuple["IterNode", ...]


@dataclass(frozen=True)
class PartitionNode:
    axis: str
    slot: int  # index into Organism.threads
    children: tuple["IterNode", ...]


IterNode = OpLeaf | LoopNode | PartitionNode


@dataclass(frozen=True)
class Organism:
    forest: tuple[IterNode, ...]
    threads: tuple[int, ...]  # one count per partition node, preorder

    def partition_count(self) -> int:
        return len(self.threads)


def ops_under(node: IterNode) -> list[int]:
    if isinstance(node, OpLeaf):
        return [node.op_id]
    out: list[int] = []
    for child in node.children:
        out.extend(ops_under(child))
    return out


@dataclass(frozen=True)
class Diagnostic:
    rule: str  # "structure" | "order" | "dependence" | "reduction" | "shared-operand"
    message: str
    ops: tuple[int, ...] = ()
    axis: str | None = None

    def __str__(self):
        return f"[{self.rule}] {self.message}"


@dataclass(frozen=True)
class PartitionChoice:
    """One way to cut a single operation's iteration space for threads."""

    op_id: int
    axis: str
    sliced: tuple[str, ...]  # data nodes cut along the axis (result included)
    replicated: tuple[str, ...]  # data nodes every thread sees whole
    parallel_reduction: bool  # result needs a join before consumption


# ---------------------------------------------------------------------------
# Construction helpers

def full_nest(op: OpNode, from_depth: int = 0) -> IterNode:
    node: IterNode = OpLeaf(op.op_id)
    for axis in reversed(op.nest.labels()[from_depth:]):
        node = LoopNode(axis, (node,))
    return node


def initial_forest(graph: DataflowGraph) -> Organism:
    """Fully unfused, unpartitioned organism: one root per operation."""
    return Organism(tuple(full_nest(op) for op in graph.ops), ())


# ---------------------------------------------------------------------------
# Canonical form

def _dep_between(a_ops: list[int], b_ops: list[int], graph: DataflowGraph) -> bool:
    return any(graph.reaches(a, b) for a in a_ops for b in b_ops)


def _order_children(children: list[IterNode], graph: DataflowGraph) -> list[IterNode]:
    """Topological order of sibling subtrees, ties broken by smallest op id."""
    remaining = list(children)
    opsets = {id(c): ops_under(c) for c in remaining}
    out: list[IterNode] = []
    while remaining:
        ready = [
            c for c in remaining
            if not any(
                _dep_between(opsets[id(o)], opsets[id(c)], graph)
                for o in remaining if o is not c
            )
        ]
        if not ready:  # dependence cycle between siblings: leave order as-is
            out.extend(remaining)
            break
        pick = min(ready, key=lambda c: min(opsets[id(c)]))
        out.append(pick)
        remaining.remove(pick)
    return out


def canonicalize(org: Organism, graph: DataflowGraph) -> Organism:
    """Sort siblings canonically and renumber partition slots in preorder."""
    thread_of: dict[int, int] = dict(enumerate(org.threads))
    new_threads: list[int] = []

    def walk(node: IterNode) -> IterNode:
        if isinstance(node, OpLeaf):
            return node
        children = tuple(walk(c) for c in _order_children(list(node.children), graph))
        if isinstance(node, PartitionNode):
            new_threads.append(thread_of.get(node.slot, 1))
            return PartitionNode(node.axis, len(new_threads) - 1, children)
        return LoopNode(node.axis, children)

    roots = tuple(walk(r) for r in _order_children(list(org.forest), graph))
    return Organism(roots, tuple(new_threads))


# ---------------------------------------------------------------------------
# Notation

def _fmt_node(node: IterNode) -> str:
    if isinstance(node, OpLeaf):
        return f" {node.op_id}"
    body = "".join(_fmt_node(c) for c in node.children)
    if isinstance(node, PartitionNode):
        return "{_{p(" + node.axis + ")}" + body + "}"
    return "{_" + node.axis + body + "}"


def format_notation(org: Organism) -> str:
    """Canonical brace text for the forest (thread counts ride separately)."""
    parts = []
    for root in org.forest:
        if isinstance(root, OpLeaf):
            parts.append(str(root.op_id))
        else:
            parts.append(_fmt_node(root))
    return "".join(parts)


def canonical_key(org: Organism) -> str:
    """Cache/duplicate-elimination key: notation plus thread assignment."""
    key = format_notation(org)
    if org.threads:
        key += ";t=" + ",".join(str(t) for t in org.threads)
    return key


class _NotationParser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, msg: str):
        raise NotationError(f"at {self.pos}: {msg}")

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def parse_forest(self) -> list:
        roots = []
        self.skip_ws()
        while self.pos < len(self.text):
            c = self.text[self.pos]
            if c == "{":
                roots.append(self.parse_node())
            elif c.isdigit():
                roots.append(self.parse_int())
            else:
                self.error(f"unexpected {c!r}")
            self.skip_ws()
        return roots

    def parse_int(self) -> int:
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        return int(self.text[start:self.pos])

    def parse_node(self):
        assert self.text[self.pos] == "{"
        self.pos += 1
        axis = None
        partition = False
        if self.pos < len(self.text) and self.text[self.pos] == "_":
            self.pos += 1
            if self.text[self.pos] == "{":  # _{p(i)}
                self.pos += 1
                if not self.text.startswith("p(", self.pos):
                    self.error("expected p(axis)")
                self.pos += 2
                axis = self.parse_name()
                if not self.text.startswith(")}", self.pos):
                    self.error("expected ')}' after partition axis")
                self.pos += 2
                partition = True
            else:
                axis = self.parse_name()
        children = []
        self.skip_ws()
        while True:
            if self.pos >= len(self.text):
                self.error("unbalanced braces")
            c = self.text[self.pos]
            if c == "}":
                self.pos += 1
                break
            if c == "{":
                children.append(self.parse_node())
            elif c.isdigit():
                children.append(self.parse_int())
            else:
                self.error(f"unexpected {c!r}")
            self.skip_ws()
        return {"axis": axis, "partition": partition, "children": children}

    def parse_name(self) -> str:
        # axis labels are single lowercase letters; op ids may follow with
        # no separating space ({_j1}), so stop at the first non-letter
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isalpha():
            self.pos += 1
        if start == self.pos:
            self.error("expected axis name")
        return self.text[start:self.pos]


def parse_notation(
    text: str,
    graph: DataflowGraph,
    threads: int | tuple[int, ...] | None = None,
) -> Organism:
    """Parse brace notation into a canonical Organism.

    Unsubscripted braces (``{{1}} {{2}}``) get their axes from each
    operation's canonical nest.  ``threads`` supplies per-partition counts
    (a single int applies globally; default 1).
    """
    raw_roots = _NotationParser(text).parse_forest()
    known = set(graph.op_ids())
    n_partitions = 0

    def singleton_chain(item) -> int | None:
        # {{3}} written schematically: unsubscripted braces around one op id
        while (isinstance(item, dict) and item["axis"] is None
               and not item["partition"] and len(item["children"]) == 1):
            item = item["children"][0]
        return item if isinstance(item, int) else None

    normalized = []
    for item in raw_roots:
        op_id = singleton_chain(item)
        if op_id is not None and isinstance(item, dict):
            if op_id not in known:
                raise NotationError(f"unknown op id {op_id}")
            normalized.append(full_nest(graph.op(op_id)))
        else:
            normalized.append(item)
    raw_roots = normalized

    def build(item, loop_depth: int, at_root: bool = False) -> IterNode:
        nonlocal n_partitions
        if isinstance(item, (OpLeaf, LoopNode)):
            return item  # pre-normalized full nest
        if isinstance(item, int):
            if item not in known:
                raise NotationError(f"unknown op id {item}")
            op = graph.op(item)
            if len(op.nest.labels()) != loop_depth:
                raise NotationError(
                    f"op {item} sits under {loop_depth} loops, its nest has "
                    f"{len(op.nest.labels())}"
                )
            return OpLeaf(item)
        if item["partition"]:
            if loop_depth != 0 or not at_root:
                raise NotationError("partition must be outermost")
            slot = n_partitions
            n_partitions += 1
            children = tuple(build(c, loop_depth) for c in item["children"])
            return PartitionNode(item["axis"], slot, children)
        # loop node: infer axis from any descendant op when unsubscripted
        axis = item["axis"]
        children = tuple(build(c, loop_depth + 1) for c in item["children"])
        node = LoopNode(axis or "?", children)
        if axis is None:
            for op_id in ops_under(node):
                labels = graph.op(op_id).nest.labels()
                want = labels[loop_depth]
                if axis is None:
                    axis = want
                elif axis != want:
                    raise NotationError(
                        f"ops under one brace disagree on axis at depth "
                        f"{loop_depth}"
                    )
            node = LoopNode(axis, children)
        else:
            for op_id in ops_under(node):
                labels = graph.op(op_id).nest.labels()
                if loop_depth >= len(labels) or labels[loop_depth] != axis:
                    raise NotationError(
                        f"axis {axis!r} is not op {op_id}'s axis at depth "
                        f"{loop_depth}"
                    )
        return node

    forest = tuple(build(r, 0, at_root=True) for r in raw_roots)
    seen: list[int] = []
    for root in forest:
        seen.extend(ops_under(root))
    if sorted(seen) != sorted(known):
        raise NotationError(
            f"notation covers ops {sorted(seen)}, kernel has {sorted(known)}"
        )
    if threads is None:
        tup = (1,) * n_partitions
    elif isinstance(threads, int):
        tup = (threads,) * n_partitions
    else:
        tup = tuple(threads)
        if len(tup) != n_partitions:
            raise NotationError(
                f"{len(tup)} thread counts for {n_partitions} partitions"
            )
    return canonicalize(Organism(forest, tup), graph)


# ---------------------------------------------------------------------------
# Partitioning analysis

def enumerate_partitionings(op_id: int, graph: DataflowGraph) -> list[PartitionChoice]:
    """All single-level cuts of one operation's iteration axes."""
    op = graph.op(op_id)
    choices = []
    for ax in op.nest.axes:
        names: list[str] = [ref.name for ref in op.operands] + [op.result]
        sliced, replicated = [], []
        for name, labels in zip(
            names, list(op.nest.operand_axes) + [op.nest.result_axes]
        ):
            bucket = sliced if ax.label in labels else replicated
            if name not in bucket:
                bucket.append(name)
        choices.append(
            PartitionChoice(
                op_id, ax.label, tuple(sliced), tuple(replicated),
                parallel_reduction=ax.reduction,
            )
        )
    return choices


def joint_partitions(
    op_ids: list[int] | tuple[int, ...], graph: DataflowGraph
) -> list[dict[int, PartitionChoice]]:
    """Consistent partition assignments for a set of fused operations.

    All operations must cut the same physical axis (shared operands are
    then sliced identically), and no choice may put a parallel reduction
    ahead of a consumer inside the same set.  An empty list means
    partitioned fusion is impossible here.
    """
    ids = sorted(set(op_ids))
    per_op = {i: enumerate_partitionings(i, graph) for i in ids}
    assignments = []
    axes: list[str] = []
    for i in ids:
        for choice in per_op[i]:
            if choice.axis not in axes:
                axes.append(choice.axis)
    for axis in axes:
        picked = {}
        for i in ids:
            match = [c for c in per_op[i] if c.axis == axis]
            if not match:
                break
            picked[i] = match[0]
        else:
            ok = True
            for i in ids:
                if not picked[i].parallel_reduction:
                    continue
                result = graph.op(i).result
                consumers = {c.op_id for c in graph.consumers_of(result)}
                if consumers & set(ids):
                    ok = False
                    break
            if ok:
                assignments.append(picked)
    return assignments


def joint_axes(op_ids, graph) -> list[str]:
    return [next(iter(a.values())).axis for a in joint_partitions(op_ids, graph)]


# ---------------------------------------------------------------------------
# Legality

def _leaf_paths(org: Organism) -> dict[int, tuple[IterNode, ...]]:
    paths: dict[int, tuple[IterNode, ...]] = {}

    def walk(node: IterNode, above: tuple[IterNode, ...]):
        if isinstance(node, OpLeaf):
            paths[node.op_id] = above
            return
        for child in node.children:
            walk(child, above + (node,))

    for root in org.forest:
        walk(root, ())
    return paths


def fusion_legal(
    org: Organism,
    graph: DataflowGraph,
    require_shared_operand: bool = True,
    partial: bool = False,
) -> Diagnostic | None:
    """None when the organism is legal, else the violated rule.

    partial=True relaxes only the every-op-present requirement (used while
    growing a child organism op by op); all other rules still apply.
    """
    # -- structure ---------------------------------------------------------
    seen: list[int] = []
    for root in org.forest:
        seen.extend(ops_under(root))
    covered = sorted(seen)
    if partial:
        if len(set(covered)) != len(covered) or not set(covered) <= set(
                graph.op_ids()):
            return Diagnostic("structure", "ops must appear at most once each",
                              tuple(covered))
    elif covered != graph.op_ids():
        return Diagnostic("structure", "ops must appear exactly once each",
                          tuple(covered))
    slots: list[int] = []

    def check_node(node: IterNode, loop_path: tuple[str, ...],
                   at_root: bool) -> Diagnostic | None:
        if isinstance(node, OpLeaf):
            labels = graph.op(node.op_id).nest.labels()
            if loop_path != labels:
                return Diagnostic(
                    "structure",
                    f"op {node.op_id} under loops {loop_path}, nest is {labels}",
                    (node.op_id,),
                )
            return None
        if isinstance(node, PartitionNode):
            if not at_root:
                return Diagnostic("structure",
                                  "partition nodes appear only at root level")
            slots.append(node.slot)
            for op_id in ops_under(node):
                if node.axis not in graph.op(op_id).nest.labels():
                    return Diagnostic(
                        "structure",
                        f"partition axis {node.axis} is not an iteration axis "
                        f"of op {op_id}",
                        (op_id,), node.axis,
                    )
            for child in node.children:
                d = check_node(child, loop_path, False)
                if d:
                    return d
            return None
        for child in node.children:
            d = check_node(child, loop_path + (node.axis,), False)
            if d:
                return d
        return None

    for root in org.forest:
        d = check_node(root, (), True)
        if d:
            return d
    if sorted(slots) != list(range(len(org.threads))):
        return Diagnostic("structure", "partition slots must index threads densely")
    if any(t < 1 for t in org.threads):
        return Diagnostic("structure", "thread counts must be positive")

    # -- fused-set rules ----------------------------------------------------
    groups: list[tuple[IterNode, list[int]]] = []

    def collect(node: IterNode):
        if isinstance(node, OpLeaf):
            return
        ops = ops_under(node)
        if len(ops) > 1:
            groups.append((node, ops))
        for child in node.children:
            collect(child)

    for root in org.forest:
        collect(root)

    for node, ops in groups:
        # dependence convexity: no path may leave and re-enter the set
        inside = set(ops)
        for a in ops:
            for b in ops:
                if a == b or not graph.reaches(a, b):
                    continue
                for x in graph.op_ids():
                    if x in inside:
                        continue
                    if graph.reaches(a, x) and graph.reaches(x, b):
                        return Diagnostic(
                            "dependence",
                            f"ops {a} and {b} are fused but depend through "
                            f"op {x} outside the fused set",
                            (a, x, b),
                        )
        if require_shared_operand and not _share_connected(ops, graph):
            return Diagnostic(
                "shared-operand",
                f"fused ops {ops} do not share operands",
                tuple(ops),
            )

    # -- sibling and root order is topological -----------------------------
    def check_order(children: tuple[IterNode, ...]) -> Diagnostic | None:
        sets = [ops_under(c) for c in children]
        for later in range(len(sets)):
            for earlier in range(later):
                if _dep_between(sets[later], sets[earlier], graph):
                    return Diagnostic(
                        "order",
                        f"subtree with ops {sets[later]} must run before "
                        f"ops {sets[earlier]}",
                    )
        for child in children:
            if not isinstance(child, OpLeaf):
                d = check_order(child.children)
                if d:
                    return d
        return None

    d = check_order(org.forest)
    if d:
        return d

    # -- reduction barrier ---------------------------------------------------
    paths = _leaf_paths(org)
    for op in graph.ops:
        red = op.nest.reduction_axis
        if red is None or op.op_id not in paths:
            continue
        for consumer in graph.consumers_of(op.result):
            if consumer.op_id not in paths:
                continue
            common = _common_prefix(paths[op.op_id], paths[consumer.op_id])
            for node in common:
                if not isinstance(node, OpLeaf) and node.axis == red:
                    return Diagnostic(
                        "reduction",
                        f"op {consumer.op_id} reads {op.result}, the "
                        f"destination of op {op.op_id}'s accumulation over "
                        f"{red}, inside that {red} level",
                        (op.op_id, consumer.op_id), red,
                    )
    return None


def _common_prefix(a: tuple, b: tuple) -> tuple:
    out = []
    for x, y in zip(a, b):
        if x is y:
            out.append(x)
        else:
            break
    return tuple(out)


def _share_connected(ops: list[int], graph: DataflowGraph) -> bool:
    if len(ops) <= 1:
        return True
    todo = {ops[0]}
    seen = set()
    rest = set(ops)
    while todo:
        cur = todo.pop()
        seen.add(cur)
        for other in rest - seen:
            if graph.share_operand(cur, other):
                todo.add(other)
    return seen == rest


# ---------------------------------------------------------------------------
# Array contraction analysis (shared by the cost model and code generation)

def contracted_temporaries(org: Organism, graph: DataflowGraph) -> set[str]:
    """Temporary arrays demoted to scalars under this organism.

    A temporary contracts when its producer and every consumer share the
    loops for all axes indexing it (then one element is live at a time).
    Inputs and outputs never contract; array contraction requires fusion.
    """
    paths = _leaf_paths(org)
    out: set[str] = set()
    for name, node in graph.data.items():
        if node.role != "temp" or not node.dims:
            continue
        producer = graph.producer_of(name)
        consumers = graph.consumers_of(name)
        if producer is None or not consumers:
            continue
        if producer.op_id not in paths or any(
                c.op_id not in paths for c in consumers):
            continue
        labels = {graph._label_of[d] for d in node.dims}
        common = paths[producer.op_id]
        for consumer in consumers:
            common = _common_prefix(common, paths[consumer.op_id])
        shared_loops = {
            n.axis for n in common if isinstance(n, LoopNode)
        }
        if labels <= shared_loops:
            out.add(name)
    return out


# ---------------------------------------------------------------------------
# Exhaustive enumeration

@dataclass(frozen=True)
class Limits:
    max_ops: int = 4
    max_threads: int = 8
    thread_mode: str = "global"  # "global" | "exhaustive" | "const"
    core_count: int = 8  # thread count used by "const" mode
    partitions: bool = True
    require_shared_operand: bool = True


def _set_partitions(items: list[int]):
    """All partitions of a list into nonempty unordered groups."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for sub in _set_partitions(rest):
        yield [[first]] + sub
        for i in range(len(sub)):
            yield sub[:i] + [[first] + sub[i]] + sub[i + 1:]


def _group_trees(ops: list[int], depth: int, graph: DataflowGraph):
    """All loop trees fusing `ops` at `depth` (they share this level's loop)."""
    labels = [graph.op(i).nest.labels() for i in ops]
    if any(len(l) <= depth for l in labels):
        return
    axis = labels[0][depth]
    if any(l[depth] != axis for l in labels):
        return
    for parts in _set_partitions(ops):
        ok = True
        options = []
        for part in parts:
            if len(part) == 1:
                op = graph.op(part[0])
                if len(op.nest.labels()) == depth + 1:
                    options.append([OpLeaf(part[0])])
                else:
                    options.append([full_nest(op, depth + 1)])
            else:
                subtrees = list(_group_trees(part, depth + 1, graph))
                if not subtrees:
                    ok = False
                    break
                options.append(subtrees)
        if not ok:
            continue
        for combo in itertools.product(*options):
            yield LoopNode(axis, tuple(combo))


def _root_shapes(ops: list[int], graph: DataflowGraph, limits: Limits):
    """All root subtrees over one fused group (bare and partition-wrapped)."""
    if len(ops) == 1:
        op = graph.op(ops[0])
        bare = full_nest(op)
        yield bare
        if limits.partitions:
            for choice in enumerate_partitionings(ops[0], graph):
                yield PartitionNode(choice.axis, -1, (bare,))
        return
    for tree in _group_trees(ops, 0, graph):
        yield tree
    if limits.partitions:
        axes = joint_axes(ops, graph)
        for axis in axes:
            for parts in _set_partitions(ops):
                options = []
                ok = True
                for part in parts:
                    if len(part) == 1:
                        options.append([full_nest(graph.op(part[0]))])
                    else:
                        subtrees = list(_group_trees(part, 0, graph))
                        if not subtrees:
                            ok = False
                            break
                        options.append(subtrees)
                if not ok:
                    continue
                for combo in itertools.product(*options):
                    yield PartitionNode(axis, -1, tuple(combo))


def enumerate_space(graph: DataflowGraph, limits: Limits | None = None):
    """Yield every legal organism, duplicate-free, within limits.

    Thread handling follows limits.thread_mode: "global" assigns one
    shared count (1..max_threads) to all partitions, "exhaustive" sweeps
    per-partition counts independently, "const" pins core_count.
    """
    limits = limits or Limits()
    n = len(graph.ops)
    if n > limits.max_ops:
        raise SpaceError(
            f"kernel has {n} operations; exhaustive enumeration is limited "
            f"to {limits.max_ops} (raise max_ops to override)"
        )
    seen: set[str] = set()
    for grouping in _set_partitions(graph.op_ids()):
        shape_options = [list(_root_shapes(g, graph, limits)) for g in grouping]
        if any(not opts for opts in shape_options):
            continue
        for combo in itertools.product(*shape_options):
            forest = _assign_slots(combo)
            n_parts = sum(1 for node in forest if isinstance(node, PartitionNode))
            for threads in _thread_tuples(n_parts, limits):
                org = canonicalize(Organism(forest, threads), graph)
                key = canonical_key(org)
                if key in seen:
                    continue
                if fusion_legal(org, graph, limits.require_shared_operand) is None:
                    seen.add(key)
                    yield org


def _assign_slots(roots) -> tuple[IterNode, ...]:
    """Renumber partition slots 0..P-1 in preorder (roots are never nested)."""
    out = []
    slot = 0
    for node in roots:
        if isinstance(node, PartitionNode):
            out.append(PartitionNode(node.axis, slot, node.children))
            slot += 1
        else:
            out.append(node)
    return tuple(out)


def _thread_tuples(n_partitions: int, limits: Limits):
    if n_partitions == 0:
        yield ()
        return
    if limits.thread_mode == "const":
        yield (limits.core_count,) * n_partitions
    elif limits.thread_mode == "global":
        for t in range(1, limits.max_threads + 1):
            yield (t,) * n_partitions
    elif limits.thread_mode == "exhaustive":
        yield from itertools.product(
            range(1, limits.max_threads + 1), repeat=n_partitions
        )
    else:
        raise ValueError(f"unknown thread mode {limits.thread_mode!r}")


def digit_space_size(n: int, max_depth: int, max_threads: int) -> int:
    """Size of the legacy flat digit encoding of the same search space.

    One fusion-depth digit per operation pair plus a (direction, thread
    count) digit pair per operation, ignoring every interaction between
    digits: (max_depth+1)^(n(n-1)/2) * (3*(max_threads+1))^n.
    """
    if n < 1:
        raise ValueError("need at least one operation")
    pairs = n * (n - 1) // 2
    return (max_depth + 1) ** pairs * (3 * (max_threads + 1)) ** n
