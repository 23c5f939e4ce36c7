"""Categorizing units and scoring each category against its own frontier.

Benchmarking only makes sense among units facing comparable conditions.
This module produces category assignments two ways - a variance-reduction
regression tree fitted on environmental features against the scores, and
a fixed expert rule table over population and travel distance - and then
re-scores each category separately, so every unit is compared only to
peers from a similar operating environment.  Scores stay comparable
across categories thanks to the frontier model's built-in normalization.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .dea import EfficiencyScore, Panel, ReturnsToScale, score_all
from .exceptions import DomainError

_INF = float("inf")


# ---------------------------------------------------------------------------
# regression tree
# ---------------------------------------------------------------------------


class TreeNode:
    """One node of a fitted tree.

    Internal nodes carry ``(feature_index, feature, threshold)`` and two
    children; units with ``value < threshold`` go left, ``>= threshold``
    go right.  Leaves carry a category ``label``, the training ``count``
    and the ``mean`` target.  ``improvement`` is the sum-of-squares
    reduction the split achieved when the tree was grown.
    """

    __slots__ = (
        "feature_index",
        "feature",
        "threshold",
        "left",
        "right",
        "label",
        "count",
        "mean",
        "improvement",
        "node_id",
        "depth",
    )

    def __init__(self, count, mean, depth, node_id):
        self.feature_index = None
        self.feature = None
        self.threshold = None
        self.left = None
        self.right = None
        self.label = None
        self.count = count
        self.mean = mean
        self.improvement = 0.0
        self.depth = depth
        self.node_id = node_id

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_leaf(self):
        self.feature_index = None
        self.feature = None
        self.threshold = None
        self.left = None
        self.right = None
        self.improvement = 0.0

    def leaves(self):
        if self.is_leaf:
            return [self]
        return self.left.leaves() + self.right.leaves()

    def max_depth(self) -> int:
        if self.is_leaf:
            return self.depth
        return max(self.left.max_depth(), self.right.max_depth())


@dataclass
class RegressionTree:
    """Fitted tree plus the metadata needed to route and serialize."""

    root: TreeNode
    feature_names: tuple
    min_bucket: int
    max_depth: int
    warning: str | None = None

    def leaves(self):
        return self.root.leaves()

    @property
    def n_leaves(self) -> int:
        return len(self.root.leaves())


def best_split(features, target, min_bucket):
    """Best ``(feature_index, threshold, improvement)`` for one node.

    Thresholds are midpoints between consecutive distinct sorted values.
    Improvement is the reduction in total within-children sum of squares;
    exact ties break toward the lower feature index, then the lower
    threshold.  Returns None when no split leaves ``min_bucket`` units on
    both sides or none improves.
    """
    n = target.shape[0]
    if n < 2 * min_bucket or np.ptp(target) == 0.0:
        return None
    best = None
    for j in range(features.shape[1]):
        column = features[:, j]
        order = np.argsort(column, kind="stable")
        xs = column[order]
        ys = target[order]
        csum = np.cumsum(ys)
        total_sum = csum[-1]

        # candidate cut after position i (left = first i+1 sorted units)
        cuts = np.flatnonzero(xs[1:] > xs[:-1])
        if cuts.size == 0:
            continue
        n_left = cuts + 1
        valid = (n_left >= min_bucket) & (n - n_left >= min_bucket)
        if not valid.any():
            continue
        cuts = cuts[valid]
        n_left = n_left[valid]
        sum_left = csum[cuts]
        n_right = n - n_left
        sum_right = total_sum - sum_left
        # SSE(parent) - SSE(L) - SSE(R) collapses to the means term
        improvement = (
            sum_left * sum_left / n_left
            + sum_right * sum_right / n_right
            - total_sum * total_sum / n
        )
        pos = int(np.argmax(improvement))
        gain = float(improvement[pos])
        if gain <= 0.0:
            continue
        lo = xs[cuts[pos]]
        hi = xs[cuts[pos] + 1]
        threshold = 0.5 * (lo + hi)
        if threshold <= lo:  # midpoint rounded down onto the left value
            threshold = hi
        if best is None or gain > best[2]:
            best = (j, float(threshold), gain)
    return best


def fit_regression_tree(
    features,
    target,
    min_bucket: int = 138,
    max_depth: int = 7,
    n_leaves: int | None = 11,
    feature_names=None,
) -> RegressionTree:
    """Grow a variance-reduction tree, then prune back to ``n_leaves``.

    Growth is greedy: each node takes the split with the largest
    sum-of-squares reduction, subject to ``min_bucket`` units per child
    and ``max_depth`` levels below the root.  Pruning then repeatedly
    collapses the weakest split (smallest improvement among nodes whose
    children are both leaves) until at most ``n_leaves`` leaves remain.
    Leaves are labelled D01, D02, ... in left-to-right order.

    A sample too small to split at all (fewer than ``2 * min_bucket``
    units) yields a single-leaf tree with a ``warning`` set.
    """
    features = np.asarray(features, dtype=float)
    target = np.asarray(target, dtype=float)
    if features.ndim == 1:
        features = features[:, None]
    n, k = features.shape
    if target.shape != (n,):
        raise DomainError("one target value per row of features is required")
    if not (np.isfinite(features).all() and np.isfinite(target).all()):
        raise DomainError("tree inputs must be finite")
    if n < 1 or k < 1:
        raise DomainError("tree needs at least one unit and one feature")
    if min_bucket < 1:
        raise DomainError("min_bucket must be at least 1")
    if feature_names is None:
        feature_names = tuple(f"x{j}" for j in range(k))
    else:
        feature_names = tuple(str(f) for f in feature_names)
        if len(feature_names) != k:
            raise DomainError("one name per feature column is required")

    counter = [0]

    def new_node(rows, depth):
        node = TreeNode(rows.size, float(target[rows].mean()), depth, counter[0])
        counter[0] += 1
        return node

    warning = None
    all_rows = np.arange(n)
    root = new_node(all_rows, 0)
    if n < 2 * min_bucket:
        warning = (
            f"sample of {n} units cannot honour min_bucket={min_bucket}; "
            "returning a single leaf"
        )
    else:
        stack = [(root, all_rows)]
        while stack:
            node, rows = stack.pop()
            if node.depth >= max_depth or rows.size < 2 * min_bucket:
                continue
            found = best_split(features[rows], target[rows], min_bucket)
            if found is None:
                continue
            j, threshold, gain = found
            go_left = features[rows, j] < threshold
            left_rows = rows[go_left]
            right_rows = rows[~go_left]
            node.feature_index = j
            node.feature = feature_names[j]
            node.threshold = threshold
            node.improvement = gain
            node.left = new_node(left_rows, node.depth + 1)
            node.right = new_node(right_rows, node.depth + 1)
            # right pushed first so the left subtree grows first (ids in
            # preorder), purely for deterministic node numbering
            stack.append((node.right, right_rows))
            stack.append((node.left, left_rows))

    if n_leaves is not None:
        _prune_to(root, n_leaves)
    _label_leaves(root)
    return RegressionTree(root, feature_names, min_bucket, max_depth, warning)


def _prune_to(root, n_leaves):
    if n_leaves < 1:
        raise DomainError("n_leaves must be at least 1")
    while len(root.leaves()) > n_leaves:
        weakest = None
        for node in _internal_nodes(root):
            if node.left.is_leaf and node.right.is_leaf:
                key = (node.improvement, -node.node_id)
                if weakest is None or key < weakest[0]:
                    weakest = (key, node)
        weakest[1].to_leaf()


def _internal_nodes(node):
    if node.is_leaf:
        return
    yield node
    yield from _internal_nodes(node.left)
    yield from _internal_nodes(node.right)


def _label_leaves(root, prefix="D"):
    for idx, leaf in enumerate(root.leaves(), start=1):
        leaf.label = f"{prefix}{idx:02d}"


def assign_category(tree, features_of_unit) -> str:
    """Route one unit down the tree to its leaf label."""
    node = tree.root if isinstance(tree, RegressionTree) else tree
    values = np.asarray(features_of_unit, dtype=float).reshape(-1)
    while not node.is_leaf:
        if values[node.feature_index] < node.threshold:
            node = node.left
        else:
            node = node.right
    return node.label


def tree_to_text(tree: RegressionTree) -> str:
    """Serialize a fitted tree to an indented plain-text form.

    One node per line, two spaces of indent per level.  Numbers use
    ``repr`` so the round-trip through :func:`tree_from_text` is
    bit-exact.
    """
    lines = [
        "tree v1 features=%s min_bucket=%d max_depth=%d"
        % (",".join(tree.feature_names), tree.min_bucket, tree.max_depth)
    ]

    def walk(node, indent):
        pad = "  " * indent
        if node.is_leaf:
            lines.append(
                f"{pad}leaf label={node.label} count={node.count} mean={node.mean!r}"
            )
        else:
            lines.append(
                f"{pad}split feature={node.feature} threshold={node.threshold!r} "
                f"count={node.count} mean={node.mean!r} improvement={node.improvement!r}"
            )
            walk(node.left, indent + 1)
            walk(node.right, indent + 1)

    walk(tree.root, 0)
    return "\n".join(lines) + "\n"


_HEADER_RE = re.compile(
    r"^tree v1 features=(?P<features>\S+) min_bucket=(?P<mb>\d+) max_depth=(?P<md>\d+)$"
)
_LEAF_RE = re.compile(
    r"^(?P<pad> *)leaf label=(?P<label>\S+) count=(?P<count>\d+) mean=(?P<mean>\S+)$"
)
_SPLIT_RE = re.compile(
    r"^(?P<pad> *)split feature=(?P<feature>\S+) threshold=(?P<thr>\S+) "
    r"count=(?P<count>\d+) mean=(?P<mean>\S+) improvement=(?P<imp>\S+)$"
)


def tree_from_text(text: str) -> RegressionTree:
    """Parse the output of :func:`tree_to_text`."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DomainError("empty tree serialization")
    header = _HEADER_RE.match(lines[0])
    if header is None:
        raise DomainError(f"bad tree header: {lines[0]!r}")
    feature_names = tuple(header.group("features").split(","))
    index_of = {name: j for j, name in enumerate(feature_names)}

    counter = [0]

    def parse(pos, depth):
        if pos >= len(lines):
            raise DomainError("truncated tree serialization")
        line = lines[pos]
        leaf = _LEAF_RE.match(line)
        if leaf and len(leaf.group("pad")) == 2 * depth:
            node = TreeNode(int(leaf.group("count")), float(leaf.group("mean")), depth, counter[0])
            counter[0] += 1
            node.label = leaf.group("label")
            return node, pos + 1
        split = _SPLIT_RE.match(line)
        if split and len(split.group("pad")) == 2 * depth:
            node = TreeNode(int(split.group("count")), float(split.group("mean")), depth, counter[0])
            counter[0] += 1
            feature = split.group("feature")
            if feature not in index_of:
                raise DomainError(f"unknown split feature {feature!r}")
            node.feature = feature
            node.feature_index = index_of[feature]
            node.threshold = float(split.group("thr"))
            node.improvement = float(split.group("imp"))
            node.left, pos = parse(pos + 1, depth + 1)
            node.right, pos = parse(pos, depth + 1)
            return node, pos
        raise DomainError(f"cannot parse tree line: {line!r}")

    root, pos = parse(1, 0)
    if pos != len(lines):
        raise DomainError("trailing content after tree serialization")
    depth = root.max_depth()
    return RegressionTree(root, feature_names, 1, depth, None)


# ---------------------------------------------------------------------------
# expert rule table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CategoryRule:
    """Half-open population bin crossed with a distance condition.

    ``zero_distance`` rules match exactly distance == 0 (administrative
    centres are their own travel destination and form a category of
    their own, whatever their population).
    """

    label: str
    population_lo: float
    population_hi: float
    distance_lo: float
    distance_hi: float
    zero_distance: bool = False

    def matches(self, population: float, distance: float) -> bool:
        if self.zero_distance:
            return distance == 0.0
        if distance == 0.0:
            return False
        if not self.population_lo <= population < self.population_hi:
            return False
        if self.distance_lo == 0.0:  # bin that abuts the zero-distance rule
            return distance < self.distance_hi
        return self.distance_lo <= distance < self.distance_hi


_POP_BINS = ((0.0, 200.0), (200.0, 500.0), (500.0, 1000.0), (1000.0, 2000.0), (2000.0, _INF))
_DIST_BINS = ((0.0, 15.0), (15.0, _INF))

EXPERT_RULES = tuple(
    CategoryRule(
        label=f"E{2 * p_idx + d_idx + 1:02d}",
        population_lo=plo,
        population_hi=phi,
        distance_lo=dlo,
        distance_hi=dhi,
    )
    for p_idx, (plo, phi) in enumerate(_POP_BINS)
    for d_idx, (dlo, dhi) in enumerate(_DIST_BINS)
) + (
    CategoryRule(
        label="E11",
        population_lo=0.0,
        population_hi=_INF,
        distance_lo=0.0,
        distance_hi=0.0,
        zero_distance=True,
    ),
)


def assign_expert_category(population: float, distance: float) -> str:
    """Expert category for one unit: E11 at distance zero, otherwise the
    population bin {[0,200), [200,500), [500,1000), [1000,2000),
    [2000,inf)} crossed with the distance bin {(0,15), [15,inf)}."""
    population = float(population)
    distance = float(distance)
    if population <= 0:
        raise DomainError("population must be positive")
    if distance < 0:
        raise DomainError("distance must be nonnegative")
    matches = [rule.label for rule in EXPERT_RULES if rule.matches(population, distance)]
    if len(matches) != 1:  # pragma: no cover - the rule table partitions the domain
        raise DomainError(
            f"expert rules matched {len(matches)} categories for "
            f"(population={population}, distance={distance})"
        )
    return matches[0]


# ---------------------------------------------------------------------------
# assignments and separated scoring
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CategoryAssignment:
    """Mapping of every DMU to its category label."""

    labels: dict
    sizes: dict = field(default_factory=dict)

    def __post_init__(self):
        sizes = {}
        for label in self.labels.values():
            sizes[label] = sizes.get(label, 0) + 1
        object.__setattr__(self, "sizes", sizes)

    @property
    def n_units(self) -> int:
        return len(self.labels)

    @property
    def categories(self) -> tuple:
        return tuple(sorted(self.sizes))


def assign_tree_categories(tree: RegressionTree, features, dmu_ids) -> CategoryAssignment:
    """Route every unit through a fitted tree."""
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features[:, None]
    labels = {
        dmu_id: assign_category(tree, features[j]) for j, dmu_id in enumerate(dmu_ids)
    }
    return CategoryAssignment(labels)


def assign_expert_categories(population, distance, dmu_ids) -> CategoryAssignment:
    """Apply the expert rule table to every unit."""
    population = np.asarray(population, dtype=float)
    distance = np.asarray(distance, dtype=float)
    labels = {
        dmu_id: assign_expert_category(population[j], distance[j])
        for j, dmu_id in enumerate(dmu_ids)
    }
    return CategoryAssignment(labels)


def separated_scores(
    panel: Panel,
    assignment: CategoryAssignment,
    rts: ReturnsToScale = ReturnsToScale.VRS,
    method: str = "linear",
    threads: int = 1,
) -> list[EfficiencyScore]:
    """Score every DMU against only the peers in its own category.

    Output order matches the panel.  Shrinking each reference set can
    only relax the per-unit programs, so every separated score is at
    least the full-sample score of the same unit.
    """
    missing = [d for d in panel.dmu_ids if d not in assignment.labels]
    if missing:
        raise DomainError(f"assignment is missing {len(missing)} DMUs, e.g. {missing[0]!r}")
    by_label: dict = {}
    for idx, dmu_id in enumerate(panel.dmu_ids):
        by_label.setdefault(assignment.labels[dmu_id], []).append(idx)

    results: list = [None] * panel.n_dmus
    for label in sorted(by_label):
        indices = by_label[label]
        sub = panel.subset(indices)
        for idx, score in zip(indices, score_all(sub, rts, method, threads)):
            results[idx] = score
    return results
