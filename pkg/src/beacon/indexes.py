"""Secondary index structures: an ordered index and an R-tree.

Both support O(n) structural clone() so dataset snapshots can share frozen
generations copy-on-write.  The R-tree probe returns candidates whose
bounding boxes intersect the query box; callers refine with exact geometry.
"""

from __future__ import annotations

import bisect

from .values import bbox_of, boxes_intersect, sort_key


class OrderedIndex:
    """Sorted (field value, primary key) pairs with range scans.

    Range scans return primary keys in ascending field-value order; ties are
    broken by key order so scans are deterministic.
    """

    def __init__(self):
        self._entries: list[tuple] = []  # (value sort key, pk sort key, pk)

    def clone(self) -> "OrderedIndex":
        other = OrderedIndex.__new__(OrderedIndex)
        other._entries = list(self._entries)
        return other

    def __len__(self):
        return len(self._entries)

    def add(self, value, key) -> None:
        bisect.insort(self._entries, (sort_key(value), sort_key(key), key))

    def remove(self, value, key) -> None:
        entry = (sort_key(value), sort_key(key), key)
        i = bisect.bisect_left(self._entries, entry)
        if i < len(self._entries) and self._entries[i] == entry:
            del self._entries[i]

    def scan(self, low, high, low_inclusive: bool, high_inclusive: bool) -> list:
        """Primary keys in the given value range; high=None means unbounded."""
        lo_k = sort_key(low)
        hi_k = sort_key(high) if high is not None else None
        if low_inclusive:
            start = bisect.bisect_left(self._entries, (lo_k,))
        else:
            # (inf,) sorts above every (rank, value) pk sort key
            start = bisect.bisect_right(self._entries, (lo_k, (float("inf"),)))
        out = []
        for i in range(start, len(self._entries)):
            vk = self._entries[i][0]
            if hi_k is not None and (vk > hi_k or (vk == hi_k and not high_inclusive)):
                break
            out.append(self._entries[i][2])
        return out

    def exact(self, value) -> list:
        return self.scan(value, value, True, True)


class _Node:
    __slots__ = ("leaf", "entries")

    def __init__(self, leaf: bool):
        self.leaf = leaf
        self.entries: list[list] = []  # [box, key-or-child]

    def box(self):
        boxes = [e[0] for e in self.entries]
        return (
            min(b[0] for b in boxes),
            min(b[1] for b in boxes),
            max(b[2] for b in boxes),
            max(b[3] for b in boxes),
        )

    def clone(self) -> "_Node":
        n = _Node(self.leaf)
        if self.leaf:
            n.entries = [list(e) for e in self.entries]
        else:
            n.entries = [[e[0], e[1].clone()] for e in self.entries]
        return n


def _area(b):
    return (b[2] - b[0]) * (b[3] - b[1])


def _merge(a, b):
    return (min(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), max(a[3], b[3]))


def _enlargement(box, add):
    return _area(_merge(box, add)) - _area(box)


class RTree:
    """Guttman R-tree with quadratic split (fan-out 16 by default)."""

    def __init__(self, max_entries: int = 16):
        self._max = max_entries
        self._min = max(2, max_entries // 4)
        self._root = _Node(leaf=True)
        self._size = 0

    def __len__(self):
        return self._size

    def clone(self) -> "RTree":
        other = RTree.__new__(RTree)
        other._max = self._max
        other._min = self._min
        other._root = self._root.clone()
        other._size = self._size
        return other

    # -- insertion --------------------------------------------------------

    def add(self, geometry, key) -> None:
        self._insert(bbox_of(geometry), key)
        self._size += 1

    def _insert(self, box, key) -> None:
        path = [self._root]
        node = self._root
        while not node.leaf:
            best = min(node.entries, key=lambda e: (_enlargement(e[0], box), _area(e[0])))
            best[0] = _merge(best[0], box)
            node = best[1]
            path.append(node)
        node.entries.append([box, key])
        self._split_along(path)

    def _split_along(self, path: list[_Node]) -> None:
        for depth in range(len(path) - 1, -1, -1):
            node = path[depth]
            if len(node.entries) <= self._max:
                continue
            a, b = self._split(node)
            if depth == 0:
                new_root = _Node(leaf=False)
                new_root.entries = [[a.box(), a], [b.box(), b]]
                self._root = new_root
            else:
                parent = path[depth - 1]
                parent.entries = [e for e in parent.entries if e[1] is not node]
                parent.entries.append([a.box(), a])
                parent.entries.append([b.box(), b])

    def _split(self, node: _Node) -> tuple[_Node, _Node]:
        entries = node.entries
        # quadratic pick-seeds: the pair wasting the most area together
        worst, seeds = None, (0, 1)
        for i in range(len(entries)):
            for j in range(i + 1, len(entries)):
                waste = (
                    _area(_merge(entries[i][0], entries[j][0]))
                    - _area(entries[i][0])
                    - _area(entries[j][0])
                )
                if worst is None or waste > worst:
                    worst, seeds = waste, (i, j)
        a = _Node(node.leaf)
        b = _Node(node.leaf)
        a.entries.append(entries[seeds[0]])
        b.entries.append(entries[seeds[1]])
        rest = [e for i, e in enumerate(entries) if i not in seeds]
        while rest:
            # force assignment once a group needs every remaining entry
            if len(a.entries) + len(rest) <= self._min:
                a.entries.extend(rest)
                break
            if len(b.entries) + len(rest) <= self._min:
                b.entries.extend(rest)
                break
            box_a, box_b = a.box(), b.box()
            best_i, best_diff, prefer_a = 0, None, True
            for i, e in enumerate(rest):
                da = _enlargement(box_a, e[0])
                db = _enlargement(box_b, e[0])
                diff = abs(da - db)
                if best_diff is None or diff > best_diff:
                    best_i, best_diff = i, diff
                    prefer_a = da < db or (da == db and _area(box_a) <= _area(box_b))
            entry = rest.pop(best_i)
            (a if prefer_a else b).entries.append(entry)
        return a, b

    # -- deletion ---------------------------------------------------------

    def remove(self, geometry, key) -> bool:
        box = bbox_of(geometry)
        path = self._find_leaf(self._root, box, key)
        if path is None:
            return False
        leaf = path[-1]
        leaf.entries = [e for e in leaf.entries if not (e[1] == key and e[0] == box)]
        self._size -= 1
        self._condense(path)
        while not self._root.leaf and len(self._root.entries) == 1:
            self._root = self._root.entries[0][1]
        if not self._root.leaf and not self._root.entries:
            self._root = _Node(leaf=True)
        return True

    def _find_leaf(self, node: _Node, box, key) -> list[_Node] | None:
        if node.leaf:
            for e in node.entries:
                if e[1] == key and e[0] == box:
                    return [node]
            return None
        for e in node.entries:
            if boxes_intersect(e[0], box):
                sub = self._find_leaf(e[1], box, key)
                if sub is not None:
                    return [node] + sub
        return None

    def _condense(self, path: list[_Node]) -> None:
        orphans: list[_Node] = []
        for depth in range(len(path) - 1, 0, -1):
            node = path[depth]
            parent = path[depth - 1]
            if len(node.entries) < self._min:
                parent.entries = [e for e in parent.entries if e[1] is not node]
                orphans.append(node)
            else:
                for e in parent.entries:
                    if e[1] is node:
                        e[0] = node.box()
        for orphan in orphans:
            for box, key in self._leaf_entries(orphan):
                self._insert(box, key)

    def _leaf_entries(self, node: _Node) -> list[list]:
        if node.leaf:
            return list(node.entries)
        out = []
        for _, child in node.entries:
            out.extend(self._leaf_entries(child))
        return out

    # -- queries ------------------------------------------------------------

    def probe(self, region) -> list:
        """Keys whose stored boxes intersect the region's bounding box."""
        query = bbox_of(region)
        out = []
        stack = [self._root]
        while stack:
            node = stack.pop()
            for box, item in node.entries:
                if boxes_intersect(box, query):
                    if node.leaf:
                        out.append(item)
                    else:
                        stack.append(item)
        return out

    def all_keys(self) -> list:
        out = []
        stack = [self._root]
        while stack:
            node = stack.pop()
            if node.leaf:
                out.extend(e[1] for e in node.entries)
            else:
                stack.extend(e[1] for e in node.entries)
        return out
