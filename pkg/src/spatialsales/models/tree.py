"""Greedy least-squares regression trees with learned missing-value routing.

Each split minimizes the summed squared error of its two children over a
random subset of columns (or all columns when boosting). Rows with a
missing value in the split column are routed to whichever side reduced
training error more; the direction is stored per split so prediction is
deterministic on unseen missing patterns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_EPS_GAIN = 1e-12


@dataclass
class RegressionTree:
    """Flat-array binary tree. feature[i] == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    missing_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def _route(self, X: np.ndarray) -> np.ndarray:
        idx = np.zeros(len(X), dtype=np.int64)
        while True:
            feat = self.feature[idx]
            active = feat >= 0
            if not active.any():
                return idx
            rows = np.flatnonzero(active)
            f = feat[rows]
            v = X[rows, f]
            thr = self.threshold[idx[rows]]
            mleft = self.missing_left[idx[rows]]
            nan = np.isnan(v)
            go_left = np.where(nan, mleft, v <= thr)
            idx[rows] = np.where(go_left, self.left[idx[rows]], self.right[idx[rows]])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self._route(X)]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf node index per row."""
        return self._route(X)


def _best_split_column(v: np.ndarray, y: np.ndarray, min_node: int):
    """Best threshold for one column: (sse_children, threshold, missing_left).

    Uses prefix sums over the sorted present values; the block of missing
    rows is attached to the left or right side, whichever is better.
    Returns None when no valid split exists.
    """
    miss = np.isnan(v)
    n = len(v)
    if miss.any():
        vp = v[~miss]
        yp = y[~miss]
        ym = y[miss]
        nm = n - len(vp)
        sm = float(ym.sum())
        qm = float((ym * ym).sum())
    else:
        vp, yp = v, y
        nm, sm, qm = 0, 0.0, 0.0
    npres = len(vp)
    if npres < 2:
        return None
    order = np.argsort(vp)
    vs = vp[order]
    ys = yp[order]
    cs = np.cumsum(ys)
    cq = np.cumsum(ys * ys)
    ks = np.flatnonzero(vs[:-1] < vs[1:]) + 1  # split after position k-1
    if len(ks) == 0:
        return None
    total_s = cs[-1] + sm
    total_q = cq[-1] + qm
    sl = cs[ks - 1]
    ql = cq[ks - 1]

    best = None
    for missing_left in (True, False) if nm else (True,):
        nl = ks + (nm if missing_left else 0)
        sl_ = sl + (sm if missing_left else 0.0)
        ql_ = ql + (qm if missing_left else 0.0)
        nr = n - nl
        sr_ = total_s - sl_
        qr_ = total_q - ql_
        ok = (nl >= min_node) & (nr >= min_node)
        if not ok.any():
            continue
        sse = (ql_ - sl_ * sl_ / nl) + (qr_ - sr_ * sr_ / nr)
        sse = np.where(ok, sse, np.inf)
        j = int(np.argmin(sse))
        if best is None or sse[j] < best[0]:
            k = ks[j]
            thr = (vs[k - 1] + vs[k]) / 2.0
            best = (float(sse[j]), thr, missing_left)
    return best


def fit_regression_tree(
    X: np.ndarray,
    y: np.ndarray,
    min_node: int = 1,
    max_depth: int | None = None,
    m_try: int | None = None,
    rng: np.random.Generator | None = None,
    col_gains: np.ndarray | None = None,
) -> RegressionTree:
    """Grow a tree by recursive best-split search.

    m_try columns are sampled per node when given (random forest); None
    scans every column (boosting). col_gains, when provided, accumulates
    each column's total squared-error reduction for importance reports.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if n < min_node:
        raise ValueError(f"need at least min_node={min_node} rows, got {n}")
    if rng is None:
        rng = np.random.default_rng(0)

    feature: list[int] = []
    threshold: list[float] = []
    missing_left: list[bool] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        missing_left.append(True)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, rows, depth = stack.pop()
        ysub = y[rows]
        mean = float(ysub.mean())
        value[node] = mean
        if (
            len(rows) < 2 * min_node
            or (max_depth is not None and depth >= max_depth)
            or np.ptp(ysub) == 0.0
        ):
            continue
        parent_sse = float(((ysub - mean) ** 2).sum())
        if m_try is not None and m_try < p:
            cols = np.sort(rng.choice(p, size=m_try, replace=False))
        else:
            cols = np.arange(p)
        best = None
        for c in cols:
            res = _best_split_column(X[rows, c], ysub, min_node)
            if res is None:
                continue
            sse, thr, mleft = res
            if best is None or sse < best[0]:
                best = (sse, int(c), thr, mleft)
        if best is None:
            continue
        sse, c, thr, mleft = best
        gain = parent_sse - sse
        if gain <= _EPS_GAIN:
            continue
        v = X[rows, c]
        nan = np.isnan(v)
        go_left = np.where(nan, mleft, v <= thr)
        lrows = rows[go_left]
        rrows = rows[~go_left]
        if len(lrows) == 0 or len(rrows) == 0:
            continue
        if col_gains is not None:
            col_gains[c] += gain
        feature[node] = c
        threshold[node] = thr
        # when the node saw no missing values, send future missing rows
        # with the larger child (deterministic default)
        missing_left[node] = bool(mleft if nan.any() else len(lrows) >= len(rrows))
        lid = new_node()
        rid = new_node()
        left[node] = lid
        right[node] = rid
        stack.append((rid, rrows, depth + 1))
        stack.append((lid, lrows, depth + 1))

    return RegressionTree(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold, dtype=np.float64),
        missing_left=np.array(missing_left, dtype=bool),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        value=np.array(value, dtype=np.float64),
    )


def tree_to_dict(t: RegressionTree) -> dict:
    return {
        "feature": t.feature.tolist(),
        "threshold": t.threshold.tolist(),
        "missing_left": t.missing_left.tolist(),
        "left": t.left.tolist(),
        "right": t.right.tolist(),
        "value": t.value.tolist(),
    }


def tree_from_dict(d: dict) -> RegressionTree:
    return RegressionTree(
        feature=np.array(d["feature"], dtype=np.int32),
        threshold=np.array(d["threshold"], dtype=np.float64),
        missing_left=np.array(d["missing_left"], dtype=bool),
        left=np.array(d["left"], dtype=np.int32),
        right=np.array(d["right"], dtype=np.int32),
        value=np.array(d["value"], dtype=np.float64),
    )
