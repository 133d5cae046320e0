"""Pixel-level segmentation: saliency-seeded trimaps and iterated graph cuts.

Foreground seeds are pixels inside the target box whose saliency reaches a
fraction of the map maximum; background seeds form a ring around the box.
Segmentation alternates between fitting per-label Gaussian-mixture color
models on the current labeling and relabeling unknown pixels with an exact
minimum cut (hard seeds throughout), so the energy never increases.
"""

from dataclasses import dataclass, field

import numpy as np

from saltrack.errors import InvariantError
from saltrack.localization import TargetState

UNKNOWN, FG_SEED, BG_SEED = 0, 1, 2

GAMMA = 50.0            # pairwise contrast weight
N_COMPONENTS = 5        # color mixture size per label
VAR_FLOOR = 1e-4        # eigenvalue floor for degenerate color models
HARD_LINK = 1e18        # terminal capacity pinning seed pixels


@dataclass
class Trimap:
    labels: np.ndarray  # uint8 grid of UNKNOWN / FG_SEED / BG_SEED

    @property
    def solvable(self) -> bool:
        return bool((self.labels == FG_SEED).any() and (self.labels == BG_SEED).any())


def seeds_from_saliency(saliency: np.ndarray, box: TargetState,
                        fg_frac: float = 0.7, bg_margin: int = 50) -> Trimap:
    """Foreground seeds: in-box pixels at >= fg_frac of the map maximum.
    Background seeds: the ring around the box up to bg_margin pixels.
    In-box pixels below the threshold stay unknown."""
    h, w = saliency.shape
    labels = np.zeros((h, w), dtype=np.uint8)
    x0, y0, bw, bh = box.footprint()
    ix0, iy0 = max(x0, 0), max(y0, 0)
    ix1, iy1 = min(x0 + bw, w), min(y0 + bh, h)

    rx0, ry0 = max(x0 - bg_margin, 0), max(y0 - bg_margin, 0)
    rx1, ry1 = min(x0 + bw + bg_margin, w), min(y0 + bh + bg_margin, h)
    labels[ry0:ry1, rx0:rx1] = BG_SEED
    labels[iy0:iy1, ix0:ix1] = UNKNOWN

    peak = float(saliency.max())
    if peak > 0.0 and ix1 > ix0 and iy1 > iy0:
        inside = saliency[iy0:iy1, ix0:ix1]
        sub = labels[iy0:iy1, ix0:ix1]
        sub[inside >= fg_frac * peak] = FG_SEED
    return Trimap(labels=labels)


# ---------------------------------------------------------------------------
# exact max-flow (Dinic) behind a plain network datatype


@dataclass
class FlowNetwork:
    node_count: int
    edges: list = field(default_factory=list)  # (u, v, capacity)
    source: int = 0
    sink: int = 1

    def add_edge(self, u: int, v: int, capacity: float) -> None:
        if capacity < 0:
            raise ValueError("capacity must be nonnegative")
        self.edges.append((u, v, float(capacity)))


def max_flow(net: FlowNetwork):
    """Exact maximum flow and the source side of a minimum cut.

    Returns (flow_value, labels) where labels is a bool array over nodes,
    True on the source side.  Integral capacities give an integral flow.
    """
    if net.source == net.sink:
        raise ValueError("source and sink must differ")
    n = net.node_count
    heads = [[] for _ in range(n)]
    to, cap = [], []
    for u, v, c in net.edges:
        heads[u].append(len(to))
        to.append(v)
        cap.append(c)
        heads[v].append(len(to))
        to.append(u)
        cap.append(0.0)

    s, t = net.source, net.sink
    total = 0.0
    level = [0] * n
    it = [0] * n

    def bfs():
        for i in range(n):
            level[i] = -1
        level[s] = 0
        queue = [s]
        for u in queue:
            for e in heads[u]:
                v = to[e]
                if cap[e] > 0 and level[v] < 0:
                    level[v] = level[u] + 1
                    queue.append(v)
        return level[t] >= 0

    def dfs(u, limit):
        if u == t:
            return limit
        while it[u] < len(heads[u]):
            e = heads[u][it[u]]
            v = to[e]
            if cap[e] > 0 and level[v] == level[u] + 1:
                pushed = dfs(v, min(limit, cap[e]))
                if pushed > 0:
                    cap[e] -= pushed
                    cap[e ^ 1] += pushed
                    return pushed
            it[u] += 1
        return 0.0

    import sys
    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, n + 100))
    try:
        while bfs():
            it[:] = [0] * n
            while True:
                pushed = dfs(s, float("inf"))
                if pushed <= 0:
                    break
                total += pushed
    finally:
        sys.setrecursionlimit(old_limit)

    labels = np.zeros(n, dtype=bool)
    labels[s] = True
    stack = [s]
    while stack:
        u = stack.pop()
        for e in heads[u]:
            v = to[e]
            if cap[e] > 0 and not labels[v]:
                labels[v] = True
                stack.append(v)
    return total, labels


# ---------------------------------------------------------------------------
# color models


class ColorModel:
    """Hard-assignment Gaussian mixture over RGB with a variance floor."""

    def __init__(self, pixels: np.ndarray, n_components: int = N_COMPONENTS):
        from sklearn.cluster import KMeans
        pixels = pixels.reshape(-1, 3)
        k = min(n_components, len(np.unique(pixels, axis=0)))
        k = max(k, 1)
        km = KMeans(n_clusters=k, n_init=1, random_state=0).fit(pixels)
        self.fit(pixels, km.labels_, k)

    def fit(self, pixels, assignment, k=None):
        k = k if k is not None else len(self.weights)
        self.means = np.zeros((k, 3))
        self.inv_covs = np.zeros((k, 3, 3))
        self.log_norms = np.full(k, np.inf)
        self.weights = np.zeros(k)
        for comp in range(k):
            members = pixels[assignment == comp]
            if len(members) == 0:
                continue
            self.weights[comp] = len(members) / len(pixels)
            mu = members.mean(axis=0)
            diff = members - mu
            cov = diff.T @ diff / max(len(members) - 1, 1)
            vals, vecs = np.linalg.eigh(cov)
            vals = np.maximum(vals, VAR_FLOOR)
            cov = (vecs * vals) @ vecs.T
            self.means[comp] = mu
            self.inv_covs[comp] = np.linalg.inv(cov)
            self.log_norms[comp] = (-np.log(self.weights[comp])
                                    + 0.5 * float(np.sum(np.log(vals)))
                                    + 1.5 * np.log(2 * np.pi))

    def component_costs(self, pixels: np.ndarray) -> np.ndarray:
        """-log(weight * N(z; mu, cov)) per pixel per component."""
        pixels = pixels.reshape(-1, 3)
        k = len(self.weights)
        costs = np.full((len(pixels), k), np.inf)
        for comp in range(k):
            if self.weights[comp] <= 0:
                continue
            diff = pixels - self.means[comp]
            maha = np.einsum("ij,jk,ik->i", diff, self.inv_covs[comp], diff)
            costs[:, comp] = self.log_norms[comp] + 0.5 * maha
        return costs

    def assign(self, pixels: np.ndarray) -> np.ndarray:
        return self.component_costs(pixels).argmin(axis=1)

    def cost(self, pixels: np.ndarray) -> np.ndarray:
        """Best-component cost per pixel."""
        return self.component_costs(pixels).min(axis=1)


# ---------------------------------------------------------------------------
# GrabCut-style iterated segmentation


def _neighbor_offsets():
    return [(0, 1, 1.0), (1, 0, 1.0), (1, 1, 1 / np.sqrt(2.0)),
            (1, -1, 1 / np.sqrt(2.0))]


def _pairwise_terms(image):
    """(dy, dx, weights, span) per neighbor direction, contrast-sensitive."""
    h, w = image.shape[:2]
    terms = []
    total, count = 0.0, 0
    for dy, dx, scale in _neighbor_offsets():
        ys0, ys1 = (0, h - dy) if dy >= 0 else (-dy, h)
        xs0, xs1 = (0, w - dx) if dx >= 0 else (-dx, w)
        a = image[ys0:ys1, xs0:xs1]
        b = image[ys0 + dy:ys1 + dy, xs0 + dx:xs1 + dx]
        sq = np.sum((a - b) ** 2, axis=2)
        terms.append((dy, dx, sq, scale, (ys0, ys1, xs0, xs1)))
        total += float(sq.sum())
        count += sq.size
    beta = 0.0 if total <= 0 else 1.0 / (2.0 * total / count)
    out = []
    for dy, dx, sq, scale, span in terms:
        out.append((dy, dx, GAMMA * scale * np.exp(-beta * sq), span))
    return out


def _segment_energy(image, fg_mask, fg_model, bg_model, pairwise):
    flat = image.reshape(-1, 3)
    fg_flat = fg_mask.ravel()
    unary = 0.0
    if fg_flat.any():
        unary += float(fg_model.cost(flat[fg_flat]).sum())
    if (~fg_flat).any():
        unary += float(bg_model.cost(flat[~fg_flat]).sum())
    pair = 0.0
    for dy, dx, wgt, (ys0, ys1, xs0, xs1) in pairwise:
        a = fg_mask[ys0:ys1, xs0:xs1]
        b = fg_mask[ys0 + dy:ys1 + dy, xs0 + dx:xs1 + dx]
        pair += float(wgt[a != b].sum())
    return unary + pair


def grabcut(image: np.ndarray, trimap: Trimap, iterations: int = 5,
            return_energy: bool = False):
    """Iterated graph-cut segmentation with hard seeds.

    Fits foreground/background color models (on seeds first, then on the
    evolving labeling), builds unary terms from model costs and
    contrast-sensitive pairwise terms on 8-neighborhoods, and relabels
    unknown pixels by an exact minimum cut.  iterations=0 still performs the
    single seed-model cut.  Returns the boolean foreground mask, plus the
    per-cut energy trace when return_energy is set.
    """
    if not trimap.solvable:
        raise InvariantError("unsolvable trimap: need both seed kinds")
    h, w = trimap.labels.shape
    image = np.asarray(image, dtype=float)
    if image.shape[:2] != (h, w):
        raise ValueError(f"image {image.shape[:2]} != trimap {(h, w)}")

    labels = trimap.labels
    fg_seed = labels == FG_SEED
    bg_seed = labels == BG_SEED
    unknown = labels == UNKNOWN
    if not unknown.any():
        mask = fg_seed.copy()
        return (mask, []) if return_energy else mask

    pairwise = _pairwise_terms(image)
    flat = image.reshape(-1, 3)
    fg_mask = fg_seed.copy()  # current labeling; unknowns start background
    energies = []

    for sweep in range(max(1, iterations)):
        if sweep == 0:
            fg_model = ColorModel(image[fg_seed])
            bg_model = ColorModel(image[bg_seed])
        else:
            fg_model.fit(flat[fg_mask.ravel()],
                         fg_model.assign(flat[fg_mask.ravel()]))
            bg_model.fit(flat[~fg_mask.ravel()],
                         bg_model.assign(flat[~fg_mask.ravel()]))

        fg_cost = fg_model.cost(flat).reshape(h, w)
        bg_cost = bg_model.cost(flat).reshape(h, w)
        shift = np.minimum(fg_cost, bg_cost)  # per-pixel shift keeps caps >= 0
        fg_cost = fg_cost - shift
        bg_cost = bg_cost - shift

        net = FlowNetwork(node_count=h * w + 2, source=h * w, sink=h * w + 1)
        pid = np.arange(h * w).reshape(h, w)
        src_cap = np.where(bg_seed, 0.0, np.where(fg_seed, HARD_LINK, bg_cost))
        snk_cap = np.where(fg_seed, 0.0, np.where(bg_seed, HARD_LINK, fg_cost))
        for p, sc, tc in zip(pid.ravel(), src_cap.ravel(), snk_cap.ravel()):
            if sc > 0:
                net.add_edge(net.source, int(p), float(sc))
            if tc > 0:
                net.add_edge(int(p), net.sink, float(tc))
        for dy, dx, wgt, (ys0, ys1, xs0, xs1) in pairwise:
            a = pid[ys0:ys1, xs0:xs1].ravel()
            b = pid[ys0 + dy:ys1 + dy, xs0 + dx:xs1 + dx].ravel()
            for u, v, c in zip(a, b, wgt.ravel()):
                if c > 0:
                    net.add_edge(int(u), int(v), float(c))
                    net.add_edge(int(v), int(u), float(c))
        _, side = max_flow(net)
        fg_mask = side[:h * w].reshape(h, w)
        fg_mask[fg_seed] = True
        fg_mask[bg_seed] = False
        energies.append(_segment_energy(image, fg_mask, fg_model, bg_model,
                                        pairwise))
    return (fg_mask, energies) if return_energy else fg_mask


def mask_overlap(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two boolean masks."""
    inter = float(np.logical_and(a, b).sum())
    union = float(np.logical_or(a, b).sum())
    return inter / union if union else 0.0
