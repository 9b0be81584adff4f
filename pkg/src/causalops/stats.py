"""Statistical primitives: Fisher-z conditional independence, IAMB Markov
blanket discovery, additive-noise-model direction testing, and a PC baseline.

All randomness flows through explicit seeds; every operation is pure given
(data, parameters, seed).
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import stats as sps

from .agents import MetricNode
from .dataset import TelemetryDataset
from .graphbuild import CausalGraph

DEFAULT_ALPHA = 0.05
DEGENERATE_STD = 1e-12

X_TO_Y = "x_to_y"
Y_TO_X = "y_to_x"
UNDECIDED = "undecided"


@dataclass
class CITestResult:
    statistic: float
    p_value: float
    independent: bool
    degenerate: bool = False
    pinv_fallback: bool = False


@dataclass
class MarkovBlanket:
    target: str
    members: set[str]


@dataclass
class DirectionJudgment:
    pair: tuple[str, str]
    preferred: str
    score_forward: float
    score_backward: float
    degenerate: bool = False


def _columns(data, names):
    if isinstance(data, TelemetryDataset):
        return data.select(list(names))
    return np.column_stack([np.asarray(data[n], dtype=float) for n in names])


def _column_names(data):
    if isinstance(data, TelemetryDataset):
        return list(data.columns)
    return list(data.keys())


def ci_test(data, x: str, y: str, conditioning_set=(), alpha: float = DEFAULT_ALPHA) -> CITestResult:
    """Fisher-z partial-correlation test of x ⊥ y | S.

    Constant columns carry no statistical signal and are reported independent
    with a ``degenerate`` flag.
    """
    cond = sorted(c for c in set(conditioning_set) if c not in (x, y))
    lo, hi = sorted((x, y))
    mat = _columns(data, [lo, hi] + cond)
    n = mat.shape[0]
    stds = mat.std(axis=0)
    if stds[0] < DEGENERATE_STD or stds[1] < DEGENERATE_STD:
        return CITestResult(0.0, 1.0, True, degenerate=True)
    keep = [0, 1] + [i + 2 for i in range(len(cond)) if stds[i + 2] >= DEGENERATE_STD]
    mat = mat[:, keep]
    k = mat.shape[1] - 2
    if n <= k + 3:
        raise ValueError(f"need n > |S| + 3 samples (n={n}, |S|={k})")

    corr = np.corrcoef(mat, rowvar=False)
    pinv_fallback = False
    if k == 0:
        r = corr[0, 1]
    else:
        try:
            prec = np.linalg.inv(corr)
        except np.linalg.LinAlgError:
            prec = np.linalg.pinv(corr)
            pinv_fallback = True
        if not np.isfinite(prec).all():
            prec = np.linalg.pinv(corr)
            pinv_fallback = True
        denom = prec[0, 0] * prec[1, 1]
        r = -prec[0, 1] / np.sqrt(denom) if denom > 0 else 0.0
    r = float(np.clip(r, -0.9999999, 0.9999999))
    if not np.isfinite(r):
        r = 0.0
    z = 0.5 * np.log((1 + r) / (1 - r))
    statistic = np.sqrt(n - k - 3) * abs(z)
    p_value = float(2 * (1 - sps.norm.cdf(statistic)))
    return CITestResult(
        statistic=float(statistic),
        p_value=p_value,
        independent=p_value > alpha,
        pinv_fallback=pinv_fallback,
    )


def is_degenerate(data, name: str) -> bool:
    return float(_columns(data, [name]).std()) < DEGENERATE_STD


def markov_blanket(data, target: str, alpha: float = DEFAULT_ALPHA) -> MarkovBlanket:
    """IAMB: grow by max conditional association while dependent, then shrink
    members independent of the target given the rest.  Ties break by column
    order, so the result is deterministic."""
    names = _column_names(data)
    if target not in names:
        raise KeyError(target)
    candidates = [c for c in names if c != target and not is_degenerate(data, c)]
    blanket: list[str] = []

    changed = True
    while changed:
        changed = False
        best, best_stat = None, 0.0
        for c in candidates:
            if c in blanket:
                continue
            res = ci_test(data, target, c, blanket, alpha)
            if not res.independent and res.statistic > best_stat:
                best, best_stat = c, res.statistic
        if best is not None:
            blanket.append(best)
            changed = True

    for c in list(blanket):
        rest = [m for m in blanket if m != c]
        if ci_test(data, target, c, rest, alpha).independent:
            blanket.remove(c)

    return MarkovBlanket(target=target, members=set(blanket))


# ---------------------------------------------------------------------------
# Additive noise model direction test


def _piecewise_linear_fit(x: np.ndarray, y: np.ndarray, knots: int = 8) -> np.ndarray:
    """Least-squares fit of y on a hinge basis of x; returns fitted values."""
    qs = np.linspace(0, 1, knots + 2)[1:-1]
    ks = np.quantile(x, qs)
    ks = np.unique(ks)
    basis = [np.ones_like(x), x] + [np.maximum(0.0, x - k) for k in ks]
    design = np.column_stack(basis)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return design @ coef


def _dcov_parts(v: np.ndarray) -> np.ndarray:
    d = np.abs(v[:, None] - v[None, :])
    return d - d.mean(axis=0, keepdims=True) - d.mean(axis=1, keepdims=True) + d.mean()


def distance_correlation_pvalue(
    x: np.ndarray,
    y: np.ndarray,
    permutations: int = 200,
    seed: int = 0,
    max_n: int = 500,
) -> float:
    """Permutation p-value for dependence between x and y using distance
    covariance.  Subsamples to ``max_n`` rows for tractability."""
    rng = np.random.default_rng(seed)
    n = len(x)
    if n > max_n:
        idx = rng.choice(n, size=max_n, replace=False)
        x, y = x[idx], y[idx]
        n = max_n
    A = _dcov_parts(x)
    B = _dcov_parts(y)
    obs = float((A * B).mean())
    count = 0
    for _ in range(permutations):
        perm = rng.permutation(n)
        if float((A * B[np.ix_(perm, perm)]).mean()) >= obs:
            count += 1
    return (1 + count) / (permutations + 1)


def anm_direction(
    data,
    x: str,
    y: str,
    margin: float = 1.5,
    permutations: int = 200,
    seed: int = 0,
    alpha: float = DEFAULT_ALPHA,
) -> DirectionJudgment:
    """Additive-noise direction test: regress each way, score by independence
    of residuals from the regressor, prefer the direction with the clearly
    larger independence p-value."""
    xs = _columns(data, [x]).ravel()
    ys = _columns(data, [y]).ravel()
    if len(xs) < 200:
        raise ValueError("anm_direction needs n >= 200")
    if xs.std() < DEGENERATE_STD or ys.std() < DEGENERATE_STD:
        return DirectionJudgment((x, y), UNDECIDED, 1.0, 1.0, degenerate=True)
    xs = (xs - xs.mean()) / xs.std()
    ys = (ys - ys.mean()) / ys.std()

    resid_f = ys - _piecewise_linear_fit(xs, ys)
    resid_b = xs - _piecewise_linear_fit(ys, xs)
    score_f = distance_correlation_pvalue(xs, resid_f, permutations, seed)
    score_b = distance_correlation_pvalue(ys, resid_b, permutations, seed)

    eps = 1.0 / (permutations + 1)
    ratio_f = (score_f + eps) / (score_b + eps)
    ratio_b = (score_b + eps) / (score_f + eps)
    # A direction is claimed only when it clearly beats the other AND the
    # losing direction's residuals are actually dependent at alpha; when both
    # residual tests pass the pair is treated as unidentifiable.
    if ratio_f > margin and score_b < alpha:
        preferred = X_TO_Y
    elif ratio_b > margin and score_f < alpha:
        preferred = Y_TO_X
    else:
        preferred = UNDECIDED
    return DirectionJudgment((x, y), preferred, score_f, score_b)


# ---------------------------------------------------------------------------
# PC baseline


def pc_baseline(data, alpha: float = DEFAULT_ALPHA, max_cond: int = 3) -> CausalGraph:
    """PC: skeleton by adjacency search, collider orientation, Meek rules,
    then a deterministic acyclic extension of the leftover undirected edges."""
    names = _column_names(data)
    if isinstance(data, TelemetryDataset) and data.n_rows <= 50:
        raise ValueError("pc_baseline needs more than 50 rows")
    adjacent: dict[str, set[str]] = {v: set() for v in names}
    usable = [v for v in names if not is_degenerate(data, v)]
    for a, b in combinations(usable, 2):
        adjacent[a].add(b)
        adjacent[b].add(a)
    sepset: dict[frozenset, set[str]] = {}

    level = 0
    while level <= max_cond and any(len(adjacent[v]) > level for v in names):
        for a in names:
            for b in sorted(adjacent[a]):
                others = sorted(adjacent[a] - {b})
                if len(others) < level:
                    continue
                for S in combinations(others, level):
                    if ci_test(data, a, b, S, alpha).independent:
                        adjacent[a].discard(b)
                        adjacent[b].discard(a)
                        sepset[frozenset((a, b))] = set(S)
                        break
                if b not in adjacent[a]:
                    continue
        level += 1

    # Collider orientation: a - c - b with a,b non-adjacent and c not in
    # sepset(a, b) orients a -> c <- b.
    directed: set[tuple[str, str]] = set()
    undirected = {frozenset((a, b)) for a in names for b in adjacent[a]}
    for c in names:
        for a, b in combinations(sorted(adjacent[c]), 2):
            if b in adjacent[a]:
                continue
            if c not in sepset.get(frozenset((a, b)), set()):
                for parent in (a, b):
                    if (c, parent) not in directed:
                        directed.add((parent, c))
                        undirected.discard(frozenset((parent, c)))

    def meek_pass() -> bool:
        changed = False
        for e in list(undirected):
            a, b = sorted(e)
            for x_, y_ in ((a, b), (b, a)):
                # Rule 1: z -> x_, z,y_ non-adjacent  =>  x_ -> y_
                r1 = any(
                    (z, x_) in directed and y_ not in adjacent[z] and z != y_
                    for z in names
                )
                # Rule 2: x_ -> z -> y_  =>  x_ -> y_
                r2 = any((x_, z) in directed and (z, y_) in directed for z in names)
                if r1 or r2:
                    directed.add((x_, y_))
                    undirected.discard(e)
                    changed = True
                    break
        return changed

    while meek_pass():
        pass

    # Deterministic acyclic extension by column order.
    order = {v: i for i, v in enumerate(names)}
    for e in sorted(undirected, key=lambda e: sorted(e)):
        a, b = sorted(e, key=lambda v: order[v])
        if _creates_cycle(directed, a, b):
            directed.add((b, a))
        else:
            directed.add((a, b))

    nodes = {
        v: MetricNode(
            id=v,
            instance_id=v.split(".", 1)[0],
            metric_name=v.split(".", 1)[-1],
            level="",
            description="",
            observed=True,
        )
        for v in names
    }
    g = CausalGraph(nodes=nodes)
    for s, d in directed:
        g.edges[(s, d)] = ((),)
    return g


def _creates_cycle(edges: set[tuple[str, str]], src: str, dst: str) -> bool:
    # Would src -> dst close a directed cycle (path dst ~> src)?
    stack, seen = [dst], set()
    while stack:
        cur = stack.pop()
        if cur == src:
            return True
        if cur in seen:
            continue
        seen.add(cur)
        stack.extend(d for s, d in edges if s == cur)
    return False
