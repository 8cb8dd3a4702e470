"""Feature transformation graphs, connected components and canonical keys."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Mapping

from ..errors import InvalidGraph, MissingInput, Unsupported


@dataclass(frozen=True)
class OpDef:
    arity: int
    commutative: bool
    fn: Callable


def _unigrams(x):
    seen = set()
    out = []
    for tok in x:
        if tok not in seen:
            seen.add(tok)
            out.append(tok)
    return out


def _intersect(x, y):
    ys = set(y)
    return [t for t in x if t in ys]


# commutative = output is independent of operand order
OPS = {
    "read": OpDef(0, False, None),
    "unigrams": OpDef(1, False, lambda p, x: _unigrams(x)),
    "lower": OpDef(1, False, lambda p, x: [t.lower() for t in x]),
    "truncate": OpDef(1, False, lambda p, x: list(x[: int(p.get("n", 1))])),
    "intersect": OpDef(2, False, lambda p, x, y: _intersect(x, y)),
    "concat": OpDef(2, False, lambda p, x, y: list(x) + list(y)),
    "set_union": OpDef(2, True, lambda p, x, y: sorted(set(x) | set(y))),
    "set_intersect": OpDef(2, True, lambda p, x, y: sorted(set(x) & set(y))),
}


@dataclass(frozen=True)
class Node:
    id: str
    op: str
    params: Mapping = field(default_factory=dict)
    inputs: tuple = ()

    def to_dict(self):
        d = {"id": self.id, "op": self.op}
        if self.params:
            d["params"] = dict(self.params)
        if self.inputs:
            d["inputs"] = list(self.inputs)
        return d


class TransformGraph:
    """A labeled DAG; ``outputs`` lists one node per model input."""

    def __init__(self, nodes, outputs, mutable=False):
        self.nodes = {}
        for n in nodes:
            if not isinstance(n, Node):
                n = Node(str(n["id"]), n["op"], dict(n.get("params", {})), tuple(str(i) for i in n.get("inputs", ())))
            if n.id in self.nodes:
                raise InvalidGraph(f"duplicate node id {n.id!r}")
            self.nodes[n.id] = n
        self.outputs = [str(o) for o in outputs]
        self.mutable = bool(mutable)
        self._validate()

    def _validate(self):
        for n in self.nodes.values():
            op = OPS.get(n.op)
            if op is None:
                raise InvalidGraph(f"node {n.id!r}: unknown op {n.op!r}")
            if len(n.inputs) != op.arity:
                raise InvalidGraph(f"node {n.id!r}: op {n.op!r} takes {op.arity} inputs, got {len(n.inputs)}")
            if n.op == "read" and "field" not in n.params:
                raise InvalidGraph(f"node {n.id!r}: read needs a 'field' param")
            for i in n.inputs:
                if i not in self.nodes:
                    raise InvalidGraph(f"node {n.id!r}: unknown input {i!r}")
        for o in self.outputs:
            if o not in self.nodes:
                raise InvalidGraph(f"unknown output node {o!r}")
        self.topo_order()

    def topo_order(self):
        indeg = {k: len(n.inputs) for k, n in self.nodes.items()}
        users = {k: [] for k in self.nodes}
        for n in self.nodes.values():
            for i in n.inputs:
                users[i].append(n.id)
        ready = sorted(k for k, d in indeg.items() if d == 0)
        order = []
        while ready:
            k = ready.pop()
            order.append(k)
            for u in users[k]:
                indeg[u] -= 1
                if indeg[u] == 0:
                    ready.append(u)
        if len(order) != len(self.nodes):
            raise InvalidGraph("graph has a cycle")
        return order

    @property
    def raw_reads(self):
        return sorted({n.params["field"] for n in self.nodes.values() if n.op == "read"})

    def is_mutable(self):
        return self.mutable or any(n.params.get("mutable") for n in self.nodes.values() if n.op == "read")

    def to_dict(self):
        d = {"nodes": [n.to_dict() for n in self.nodes.values()], "outputs": list(self.outputs)}
        if self.mutable:
            d["mutable"] = True
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("nodes", []), d.get("outputs", []), d.get("mutable", False))

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True)
class ConnectedComponent:
    graph: TransformGraph = field(compare=False)
    output: str

    @property
    def raw_reads(self):
        return self.graph.raw_reads


def extract_components(graph: TransformGraph):
    """Split into weakly connected components, each with exactly one output.

    Components without an output are dropped. Order: by smallest raw field
    read, then by canonical key.
    """
    graph.topo_order()
    parent = {k: k for k in graph.nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for n in graph.nodes.values():
        for i in n.inputs:
            a, b = find(n.id), find(i)
            if a != b:
                parent[max(a, b)] = min(a, b)
    members = {}
    for k in graph.nodes:
        members.setdefault(find(k), []).append(k)
    outs_by_root = {}
    for o in graph.outputs:
        outs_by_root.setdefault(find(o), set()).add(o)
    comps = []
    for root, ids in members.items():
        outs = outs_by_root.get(root)
        if not outs:
            continue
        if len(outs) > 1:
            raise InvalidGraph(f"component containing {sorted(outs)} feeds more than one model input")
        sub = TransformGraph([graph.nodes[i] for i in ids], list(outs))
        comps.append(ConnectedComponent(sub, next(iter(outs))))
    comps.sort(key=lambda c: (c.raw_reads[0] if c.raw_reads else "", canonical_key(c)))
    return comps


def _h(payload):
    return hashlib.sha256(json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def node_digests(graph: TransformGraph):
    """Merkle digest of every node; node ids never enter the hash."""
    digests = {}
    for k in graph.topo_order():
        n = graph.nodes[k]
        children = [digests[i] for i in n.inputs]
        if OPS[n.op].commutative:
            children.sort()
        digests[k] = _h([n.op, dict(n.params), children])
    return digests


def canonical_key(component: ConnectedComponent) -> str:
    """256-bit hex digest of the component's output node."""
    return node_digests(component.graph)[component.output]


def eval_transform(component: ConnectedComponent, raw_record: Mapping[str, str]):
    """Evaluate the component's output for one raw record (field -> text)."""
    g = component.graph
    values = {}
    for k in g.topo_order():
        n = g.nodes[k]
        if n.op == "read":
            f = n.params["field"]
            if f not in raw_record:
                raise MissingInput(f)
            values[k] = str(raw_record[f]).split()
        else:
            values[k] = OPS[n.op].fn(n.params, *(values[i] for i in n.inputs))
    return values[component.output]


def reject_mutable(graph: TransformGraph):
    if graph.is_mutable():
        raise Unsupported("mutable or late-arriving data cannot be memoized; use local input generation")
