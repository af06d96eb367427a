"""Agglomerative clustering of completed-matrix profiles.

Rows (solutes) and columns (solvents) of the completed matrix are
clustered separately: complete linkage over Euclidean distances, merged
greedily with ties broken toward the lexicographically smallest cluster-id
pair.  Cluster ids follow the usual convention: 0..n-1 are leaves, and the
t-th merge creates id n + t.  Because complete linkage only ever takes
maxima of existing distances, every inter-cluster distance stays an exact
copy of some leaf-pair distance, so tie behavior is reproducible and merge
heights never decrease.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    size: int


class LinkageTree:
    """Full merge history of one agglomerative run."""

    def __init__(self, n_leaves: int, merges, keys=None):
        if n_leaves < 1:
            raise ContractError("n_leaves must be >= 1")
        merges = [
            m if isinstance(m, Merge) else Merge(int(m[0]), int(m[1]), float(m[2]), int(m[3]))
            for m in merges
        ]
        if len(merges) != n_leaves - 1:
            raise ContractError(
                f"expected {n_leaves - 1} merges for {n_leaves} leaves, got {len(merges)}"
            )
        sizes = [1] * n_leaves
        consumed = set()
        prev_height = 0.0
        for t, m in enumerate(merges):
            limit = n_leaves + t
            if not (0 <= m.left < limit and 0 <= m.right < limit):
                raise ContractError(f"merge {t} references cluster id outside [0, {limit})")
            if m.left == m.right:
                raise ContractError(f"merge {t} joins cluster {m.left} with itself")
            if m.left in consumed or m.right in consumed:
                raise ContractError(f"merge {t} reuses an already-merged cluster")
            consumed.add(m.left)
            consumed.add(m.right)
            if not (np.isfinite(m.height) and m.height >= 0):
                raise ContractError(f"merge {t} has invalid height {m.height}")
            if m.height < prev_height:
                raise ContractError(f"merge {t} height {m.height} below previous {prev_height}")
            prev_height = m.height
            if m.size != sizes[m.left] + sizes[m.right]:
                raise ContractError(f"merge {t} size {m.size} != sum of child sizes")
            sizes.append(m.size)
        if merges and merges[-1].size != n_leaves:
            raise ContractError("final merge must cover all leaves")
        if keys is not None:
            keys = list(keys)
            if len(keys) != n_leaves:
                raise ContractError("key list length does not match n_leaves")
        self.n_leaves = n_leaves
        self.merges = merges
        self.keys = keys

    def children(self, cluster_id: int):
        """(left, right) of an internal cluster id."""
        t = cluster_id - self.n_leaves
        if not 0 <= t < len(self.merges):
            raise ContractError(f"{cluster_id} is not an internal cluster id")
        m = self.merges[t]
        return m.left, m.right

    def to_json_obj(self) -> dict:
        obj = {
            "n_leaves": self.n_leaves,
            "merges": [[m.left, m.right, m.height, m.size] for m in self.merges],
        }
        if self.keys is not None:
            obj["keys"] = self.keys
        return obj

    @classmethod
    def from_json_obj(cls, obj) -> "LinkageTree":
        try:
            return cls(int(obj["n_leaves"]), obj["merges"], obj.get("keys"))
        except (KeyError, TypeError, IndexError) as exc:
            raise ContractError(f"malformed linkage object: {exc}") from None

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LinkageTree":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_obj(json.load(fh))


class ClassAssignment:
    """Flat clustering of leaves into classes 0..n_classes-1.

    Class numbers follow first appearance when scanning leaves in id
    order, so the labeling is canonical for a given partition.
    """

    def __init__(self, labels, n_classes: int, keys=None):
        labels = [int(x) for x in labels]
        if n_classes < 1:
            raise ContractError("n_classes must be >= 1")
        seen = []
        for x in labels:
            if not 0 <= x < n_classes:
                raise ContractError(f"label {x} outside [0, {n_classes})")
            if x not in seen:
                if x != len(seen):
                    raise ContractError("labels must be numbered by first appearance")
                seen.append(x)
        if len(seen) != n_classes:
            raise ContractError("every class must be non-empty")
        if keys is not None:
            keys = list(keys)
            if len(keys) != len(labels):
                raise ContractError("key list length does not match labels")
        self.labels = labels
        self.n_classes = n_classes
        self.keys = keys

    def __len__(self):
        return len(self.labels)

    def members(self, class_id: int) -> list:
        if not 0 <= class_id < self.n_classes:
            raise ContractError(f"class {class_id} outside [0, {self.n_classes})")
        return [i for i, x in enumerate(self.labels) if x == class_id]

    def to_json_obj(self) -> dict:
        obj = {"n_classes": self.n_classes, "labels": self.labels}
        if self.keys is not None:
            obj["keys"] = self.keys
        return obj

    @classmethod
    def from_json_obj(cls, obj) -> "ClassAssignment":
        try:
            return cls(obj["labels"], int(obj["n_classes"]), obj.get("keys"))
        except (KeyError, TypeError) as exc:
            raise ContractError(f"malformed class object: {exc}") from None

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ClassAssignment":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_obj(json.load(fh))


def row_profiles(completed) -> list:
    """Rows of the completed matrix, one vector per solute."""
    completed = _checked_dense(completed)
    return [completed[i].copy() for i in range(completed.shape[0])]


def col_profiles(completed) -> list:
    """Columns of the completed matrix, one vector per solvent."""
    completed = _checked_dense(completed)
    return [completed[:, j].copy() for j in range(completed.shape[1])]


def _checked_dense(completed) -> np.ndarray:
    completed = np.asarray(completed, dtype=float)
    if completed.ndim != 2:
        raise ContractError("completed matrix must be 2-d")
    if not np.all(np.isfinite(completed)):
        raise ContractError("completed matrix must be finite")
    return completed


def _pointwise_distances(points: np.ndarray) -> np.ndarray:
    n = points.shape[0]
    dist = np.empty((n, n))
    for i in range(n):
        diff = points - points[i]
        # (a-b)^2 sums in the same axis order for (i,j) and (j,i), so the
        # matrix is symmetric bitwise
        dist[i] = np.sqrt(np.einsum("nd,nd->n", diff, diff))
    return dist


def hac_complete(profiles, keys=None) -> LinkageTree:
    """Complete-linkage agglomerative clustering over Euclidean distances.

    At every step the two active clusters at minimal distance merge; the
    candidate with the lexicographically smallest (left, right) id pair,
    left < right, wins ties.  Inter-cluster distances follow the
    max-update rule, so each one equals some exact pointwise distance.
    """
    points = np.asarray(profiles, dtype=float)
    if points.ndim != 2:
        raise ContractError("profiles must be a list of equal-length vectors")
    n = points.shape[0]
    if n < 2:
        raise ContractError("need at least 2 profiles")
    if not np.all(np.isfinite(points)):
        raise ContractError("profiles must be finite")

    total = 2 * n - 1
    dist = np.full((total, total), np.inf)
    dist[:n, :n] = _pointwise_distances(points)
    np.fill_diagonal(dist, np.inf)

    sizes = np.ones(total, dtype=int)
    merges = []
    prev_height = 0.0
    for t in range(n - 1):
        # first row holding the global minimum, then first column within
        # that row: exactly the lexicographically smallest minimal pair
        row_mins = dist.min(axis=1)
        a = int(np.argmin(row_mins))
        b = int(np.argmin(dist[a]))
        height = float(dist[a, b])
        if height < prev_height:
            raise AssertionError(
                f"complete-linkage height decreased at merge {t}: {height} < {prev_height}"
            )
        prev_height = height

        new = n + t
        sizes[new] = sizes[a] + sizes[b]
        merges.append(Merge(a, b, height, int(sizes[new])))

        new_row = np.maximum(dist[a], dist[b])
        dist[a, :] = np.inf
        dist[:, a] = np.inf
        dist[b, :] = np.inf
        dist[:, b] = np.inf
        new_row[new] = np.inf
        dist[new, :] = new_row
        dist[:, new] = new_row
    return LinkageTree(n, merges, keys)


def cut_tree(tree: LinkageTree, n_classes: int) -> ClassAssignment:
    """Undo the last n_classes-1 merges and label the remaining subtrees.

    Equivalent to applying only the first n_leaves - n_classes merges.
    Labels are renumbered by first appearance in leaf id order.
    """
    n = tree.n_leaves
    if not 1 <= n_classes <= n:
        raise ContractError(f"n_classes {n_classes} outside [1, {n}]")
    parent = list(range(2 * n - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for t in range(n - n_classes):
        m = tree.merges[t]
        new = n + t
        parent[find(m.left)] = new
        parent[find(m.right)] = new

    relabel = {}
    labels = []
    for leaf in range(n):
        root = find(leaf)
        if root not in relabel:
            relabel[root] = len(relabel)
        labels.append(relabel[root])
    return ClassAssignment(labels, n_classes, tree.keys)


def sorted_order(tree: LinkageTree) -> list:
    """Left-to-right leaf order of the dendrogram drawing.

    At each internal node, subtrees that are themselves merges come before
    bare leaves, ordered by creation; among two leaves the smaller id
    leads.  This is the order that blocks similar components together when
    the completed matrix is permuted for display.
    """
    n = tree.n_leaves
    if not tree.merges:
        return [0]
    order = []
    stack = [2 * n - 2]
    while stack:
        node = stack.pop()
        if node < n:
            order.append(node)
            continue
        left, right = tree.children(node)
        first, second = _display_order(left, right, n)
        stack.append(second)
        stack.append(first)
    return order


def _display_order(left: int, right: int, n_leaves: int):
    left_is_leaf = left < n_leaves
    right_is_leaf = right < n_leaves
    if left_is_leaf == right_is_leaf:
        return (left, right) if left < right else (right, left)
    if left_is_leaf:
        return right, left
    return left, right
