"""Bias/MSE contour grids over the signed SOO sensitivity parameters.

Axes are r_z = R_{Z~U|W_Z,W_Y} (x) and r_y = R_{Y~U|Z,W_Z,W_Y} (y). Every cell
carries the SOO bias, the implied true effect and the label of the strategy
closest to it.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .bias import soo_sd_ratio
from .estimators import STRATEGIES, as_taus, taus_from_moments
from .io_ingest import ObservedMoments

COLORS = {"soo": "#4477aa", "iv": "#ee6677", "prox": "#228833"}


@dataclass(frozen=True)
class GridSpec:
    range_z: tuple[float, float] = (-0.995, 0.995)
    range_y: tuple[float, float] = (-0.995, 0.995)
    resolution: tuple[int, int] = (201, 201)   # (n along r_z, n along r_y)
    n_levels: int = 8

    def __post_init__(self):
        for lo, hi in (self.range_z, self.range_y):
            if not -1 < lo < hi < 1:
                raise ValueError(f"range ({lo}, {hi}) must satisfy -1 < lo < hi < 1")
        if min(self.resolution) < 3:
            raise ValueError("resolution must be at least 3 in each direction")
        if self.n_levels < 1:
            raise ValueError("need at least one contour level")

    def axes(self):
        # snap round-off at the origin so the centre cell is exactly unconfounded
        ax = (np.linspace(*self.range_z, self.resolution[0]),
              np.linspace(*self.range_y, self.resolution[1]))
        return tuple(np.where(np.abs(a) < 1e-12, 0.0, a) for a in ax)


@dataclass
class ContourGrid:
    r_z: np.ndarray
    r_y: np.ndarray
    bias: np.ndarray                 # shape (len(r_y), len(r_z))
    tau_true: np.ndarray
    labels: np.ndarray | None = None  # indices into STRATEGIES
    taus: dict = field(default_factory=dict)
    ses: dict | None = None
    mode: str = "bias"
    levels: list = field(default_factory=list)
    contours: dict = field(default_factory=dict)      # level -> polylines
    zero_bias: dict = field(default_factory=dict)     # strategy -> polylines
    warnings: list = field(default_factory=list)
    benchmarks: list = field(default_factory=list)    # dicts: name, r_z, r_y

    @property
    def cell_size(self) -> float:
        return float(max(np.diff(self.r_z).max(), np.diff(self.r_y).max()))

    def label_names(self) -> np.ndarray:
        return np.asarray(STRATEGIES)[self.labels]

    def to_dict(self) -> dict:
        return {
            "r_z": self.r_z.tolist(), "r_y": self.r_y.tolist(),
            "bias": self.bias.tolist(), "tau_true": self.tau_true.tolist(),
            "labels": None if self.labels is None else self.label_names().tolist(),
            "taus": self.taus, "ses": self.ses, "mode": self.mode,
            "levels": list(self.levels),
            "contours": [{"level": lv, "polylines": _pl(p)} for lv, p in self.contours.items()],
            "zero_bias": {k: _pl(v) for k, v in self.zero_bias.items()},
            "warnings": list(self.warnings), "benchmarks": list(self.benchmarks),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ContourGrid":
        lab = d.get("labels")
        idx = {s: k for k, s in enumerate(STRATEGIES)}
        return cls(
            r_z=np.array(d["r_z"]), r_y=np.array(d["r_y"]),
            bias=np.array(d["bias"]), tau_true=np.array(d["tau_true"]),
            labels=None if lab is None else np.vectorize(idx.get)(np.array(lab)),
            taus=dict(d.get("taus", {})), ses=d.get("ses"), mode=d.get("mode", "bias"),
            levels=list(d.get("levels", [])),
            contours={c["level"]: [np.array(p) for p in c["polylines"]] for c in d.get("contours", [])},
            zero_bias={k: [np.array(p) for p in v] for k, v in d.get("zero_bias", {}).items()},
            warnings=list(d.get("warnings", [])), benchmarks=list(d.get("benchmarks", [])),
        )


def _pl(polys):
    return [np.asarray(p).tolist() for p in polys]


# ---------------------------------------------------------------- layers

def soo_bias_surface(m: ObservedMoments, r_z, r_y) -> np.ndarray:
    """SOO bias on the outer grid r_y (rows) x r_z (columns)."""
    sy, sz = soo_sd_ratio(m)
    rz = np.asarray(r_z)[None, :]
    ry = np.asarray(r_y)[:, None]
    return ry * rz / np.sqrt(1 - rz**2) * (sy / sz)


def soo_bias_grid(m: ObservedMoments, spec: GridSpec = GridSpec(),
                  tau_soo: float | None = None) -> ContourGrid:
    if tau_soo is None:
        tau_soo = taus_from_moments(m)["soo"]
    rz, ry = spec.axes()
    bias = soo_bias_surface(m, rz, ry)
    return ContourGrid(rz, ry, bias, tau_soo - bias)


def _argmin_labels(scores: np.ndarray) -> np.ndarray:
    # np.argmin keeps the first minimum, i.e. soo before iv before prox
    return np.argmin(scores, axis=0)


def dominance_labels(tau_soo: float, tau_iv: float, tau_prox: float,
                     grid: ContourGrid) -> np.ndarray:
    est = np.array([tau_soo, tau_iv, tau_prox])[:, None, None]
    grid.labels = _argmin_labels(np.abs(est - grid.tau_true[None]))
    grid.taus = {"soo": tau_soo, "iv": tau_iv, "prox": tau_prox}
    grid.mode = "bias"
    return grid.labels


def mse_labels(estimates: Mapping[str, float], ses: Mapping[str, float],
               grid: ContourGrid) -> np.ndarray:
    est = np.array([estimates[s] for s in STRATEGIES])[:, None, None]
    se2 = np.array([ses[s] for s in STRATEGIES], dtype=float) ** 2
    grid.labels = _argmin_labels((est - grid.tau_true[None]) ** 2 + se2[:, None, None])
    grid.taus = {s: float(estimates[s]) for s in STRATEGIES}
    grid.ses = {s: float(ses[s]) for s in STRATEGIES}
    grid.mode = "mse"
    return grid.labels


def dominance_intervals(estimates: Mapping[str, float]) -> list[tuple[float, str, str]]:
    """Boundaries of the midpoint rule on the tau_true line.

    Returns ``(boundary, label_below, label_above)`` sorted by boundary.
    """
    order = sorted(STRATEGIES, key=lambda s: (estimates[s], STRATEGIES.index(s)))
    out = []
    prev = order[0]
    for s in order[1:]:
        if estimates[s] == estimates[prev]:
            continue  # tie: the earlier strategy keeps the point
        out.append(((estimates[prev] + estimates[s]) / 2, prev, s))
        prev = s
    return out


# ---------------------------------------------------------------- level sets

def marching_squares(f: np.ndarray, xs: Sequence[float], ys: Sequence[float],
                     level: float) -> list[np.ndarray]:
    """Polylines of ``f == level`` (f indexed [y, x]) with linear interpolation.

    Ambiguous saddle cells are resolved with the cell-centre average.
    Returned polylines are arrays of (x, y) vertices.
    """
    f = np.asarray(f, dtype=float)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    ny, nx = f.shape
    above = f >= level

    def point(key):
        kind, i, j = key
        if kind == "h":   # between (i, j) and (i, j+1)
            a, b = f[i, j], f[i, j + 1]
            t = (level - a) / (b - a)
            return xs[j] + t * (xs[j + 1] - xs[j]), ys[i]
        a, b = f[i, j], f[i + 1, j]
        t = (level - a) / (b - a)
        return xs[j], ys[i] + t * (ys[i + 1] - ys[i])

    adj: dict = {}

    def link(k1, k2):
        adj.setdefault(k1, []).append(k2)
        adj.setdefault(k2, []).append(k1)

    code = (above[:-1, :-1].astype(int) | (above[:-1, 1:] << 1)
            | (above[1:, 1:] << 2) | (above[1:, :-1] << 3))
    cells = np.argwhere((code > 0) & (code < 15))
    for i, j in cells:
        c = int(code[i, j])
        # edges: bottom (row i), right (col j+1), top (row i+1), left (col j)
        B, R, T, L = ("h", i, j), ("v", i, j + 1), ("h", i + 1, j), ("v", i, j)
        table = {1: [(L, B)], 2: [(B, R)], 3: [(L, R)], 4: [(R, T)], 6: [(B, T)],
                 7: [(L, T)], 8: [(T, L)], 9: [(T, B)], 11: [(T, R)], 12: [(R, L)],
                 13: [(R, B)], 14: [(B, L)]}
        if c in (5, 10):
            centre = f[i:i + 2, j:j + 2].mean() >= level
            # centre above: the two "above" corners connect through the middle
            cut_below = centre
            if c == 5:
                segs = [(L, T), (B, R)] if cut_below else [(L, B), (R, T)]
            else:
                segs = [(B, L), (R, T)] if cut_below else [(B, R), (T, L)]
        else:
            segs = table[c]
        for a, b in segs:
            link(a, b)

    seen = set()
    lines = []
    # open chains first (degree-1 ends), then closed loops
    starts = [k for k, v in adj.items() if len(v) == 1] + list(adj)
    for s in starts:
        if s in seen:
            continue
        chain = [s]
        seen.add(s)
        cur = s
        while True:
            nxt = [k for k in adj[cur] if k not in seen]
            if not nxt:
                break
            cur = nxt[0]
            seen.add(cur)
            chain.append(cur)
        if len(adj[s]) == 2 and s in adj[chain[-1]] and len(chain) > 2:
            chain.append(s)  # close the loop
        pts = np.array([point(k) for k in chain])
        # collapse zero-length steps (crossings that hit grid nodes exactly)
        keep = np.r_[True, np.any(np.diff(pts, axis=0) != 0, axis=1)]
        lines.append(pts[keep])
    return lines


def zero_bias_level(strategy: str, estimates) -> float:
    taus = as_taus(estimates)
    return taus["soo"] - taus[strategy]


def zero_bias_contour(strategy: str, m: ObservedMoments, estimates,
                      spec: GridSpec = GridSpec(), grid: ContourGrid | None = None):
    """Locus on the grid where ``strategy`` is unbiased.

    Returns ``(polylines, warning)``; ``warning`` is None unless the level is
    outside the grid's bias range, in which case the polyline list is empty.
    """
    if strategy not in ("iv", "prox"):
        raise ValueError("zero-bias contours exist for iv and prox")
    level = zero_bias_level(strategy, estimates)
    if grid is None:
        rz, ry = spec.axes()
        bias = soo_bias_surface(m, rz, ry)
    else:
        rz, ry, bias = grid.r_z, grid.r_y, grid.bias
    if not bias.min() <= level <= bias.max():
        return [], f"{strategy}: zero-bias level {level:.6g} is outside the grid bias range"
    return marching_squares(bias, rz, ry, level), None


def min_treatment_confounding(level: float, m: ObservedMoments, r_y: float = 0.995) -> float:
    """Smallest |R_{Z~U|W_Z,W_Y}| that produces SOO bias ``level`` when |r_y| <= ``r_y``."""
    sy, sz = soo_sd_ratio(m)
    q = abs(level) / (abs(r_y) * sy / sz)
    return q / math.sqrt(1 + q * q)


def signed_log_levels(bias: np.ndarray, k: int) -> list[float]:
    hi = float(np.abs(bias).max())
    if hi == 0:
        return []
    mags = np.geomspace(hi * 1e-2, hi * 0.9, k)
    return [float(-v) for v in mags[::-1]] + [float(v) for v in mags]


def build_contour(m: ObservedMoments, estimates, spec: GridSpec = GridSpec(),
                  ses: Mapping[str, float] | None = None, mse: bool = False,
                  benchmarks=()) -> ContourGrid:
    """Full contour artifact: layers, labels, level sets and benchmark points."""
    taus = as_taus(estimates)
    g = soo_bias_grid(m, spec, taus["soo"])
    if mse:
        if ses is None:
            raise ValueError("MSE labels need standard errors")
        mse_labels(taus, ses, g)
    else:
        dominance_labels(taus["soo"], taus["iv"], taus["prox"], g)
    g.levels = signed_log_levels(g.bias, spec.n_levels)
    g.contours = {lv: marching_squares(g.bias, g.r_z, g.r_y, lv) for lv in g.levels}
    for st in ("iv", "prox"):
        lines, warn = zero_bias_contour(st, m, taus, spec, g)
        g.zero_bias[st] = lines
        if warn:
            g.warnings.append(warn)
    for row in benchmarks:
        if getattr(row, "rho_hat", None) is not None:
            g.benchmarks.append({"name": row.covariate, "r_z": row.rho_hat.r3,
                                 "r_y": row.rho_hat.r4})
    return g


# ---------------------------------------------------------------- output

def emit(grid: ContourGrid, fmt: str, path, metadata: Mapping | None = None) -> Path:
    path = Path(path)
    try:
        if fmt == "csv":
            _emit_csv(grid, path)
        elif fmt == "json":
            d = grid.to_dict()
            if metadata is not None:
                d = {"metadata": dict(metadata), **d}
            path.write_text(json.dumps(d) + "\n", encoding="utf-8")
        elif fmt == "svg":
            path.write_text(render_svg(grid), encoding="utf-8")
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _emit_csv(grid: ContourGrid, path: Path):
    names = grid.label_names() if grid.labels is not None else None
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["r_z", "r_y", "bias", "tau_true", "label"])
        for i, ry in enumerate(grid.r_y):
            for j, rz in enumerate(grid.r_z):
                w.writerow([repr(float(rz)), repr(float(ry)), repr(float(grid.bias[i, j])),
                            repr(float(grid.tau_true[i, j])),
                            "" if names is None else names[i, j]])


def render_svg(grid: ContourGrid, size: int = 560, pad: int = 50) -> str:
    x0, x1 = grid.r_z[0], grid.r_z[-1]
    y0, y1 = grid.r_y[0], grid.r_y[-1]

    def X(v):
        return pad + (v - x0) / (x1 - x0) * size

    def Y(v):
        return pad + (y1 - v) / (y1 - y0) * size

    def d_of(polys):
        parts = []
        for p in polys:
            if len(p) < 2:
                continue
            parts.append("M" + " L".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in p))
        return " ".join(parts)

    W = size + 2 * pad
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{W}" '
           f'viewBox="0 0 {W} {W}" font-family="sans-serif" font-size="11">']
    out.append('<g class="regions" fill-opacity="0.25">')
    if grid.labels is not None:
        # cell edges halfway between grid nodes
        ex = np.r_[x0, (grid.r_z[1:] + grid.r_z[:-1]) / 2, x1]
        ey = np.r_[y0, (grid.r_y[1:] + grid.r_y[:-1]) / 2, y1]
        for i in range(len(grid.r_y)):
            row = grid.labels[i]
            j = 0
            while j < len(row):
                k = j
                while k + 1 < len(row) and row[k + 1] == row[j]:
                    k += 1
                out.append(
                    f'<rect x="{X(ex[j]):.2f}" y="{Y(ey[i + 1]):.2f}" '
                    f'width="{X(ex[k + 1]) - X(ex[j]):.2f}" height="{Y(ey[i]) - Y(ey[i + 1]):.2f}" '
                    f'fill="{COLORS[STRATEGIES[row[j]]]}"/>')
                j = k + 1
    out.append("</g>")
    out.append('<g class="levels" fill="none" stroke="#555" stroke-width="0.7">')
    for lv in grid.levels:
        dash = ' stroke-dasharray="3,2"' if lv < 0 else ""
        out.append(f'<path class="level" data-level="{lv:.6g}"{dash} d="{d_of(grid.contours.get(lv, []))}"/>')
    out.append("</g>")
    for st, polys in grid.zero_bias.items():
        out.append(f'<path class="zero-bias" data-strategy="{st}" fill="none" '
                   f'stroke="{COLORS[st]}" stroke-width="2.2" d="{d_of(polys)}"/>')
    out.append('<g class="benchmarks" stroke="black" stroke-width="1.4">')
    for b in grid.benchmarks:
        cx, cy = X(b["r_z"]), Y(b["r_y"])
        out.append(f'<g class="benchmark"><path d="M{cx - 4:.2f},{cy - 4:.2f} L{cx + 4:.2f},{cy + 4:.2f} '
                   f'M{cx - 4:.2f},{cy + 4:.2f} L{cx + 4:.2f},{cy - 4:.2f}"/>'
                   f'<text x="{cx + 6:.2f}" y="{cy - 6:.2f}" stroke="none">{_esc(b["name"])}</text></g>')
    out.append("</g>")
    out.append(f'<rect x="{pad}" y="{pad}" width="{size}" height="{size}" fill="none" stroke="black"/>')
    out.append(f'<text x="{pad + size / 2}" y="{W - 12}" text-anchor="middle">R(Z~U | W_Z, W_Y)</text>')
    out.append(f'<text x="14" y="{pad + size / 2}" text-anchor="middle" '
               f'transform="rotate(-90 14 {pad + size / 2})">R(Y~U | Z, W_Z, W_Y)</text>')
    for v in (x0, 0.0, x1):
        out.append(f'<text x="{X(v):.2f}" y="{pad + size + 16}" text-anchor="middle">{v:.2f}</text>')
    for v in (y0, 0.0, y1):
        out.append(f'<text x="{pad - 6}" y="{Y(v) + 4:.2f}" text-anchor="end">{v:.2f}</text>')
    out.append("</svg>\n")
    return "\n".join(out)


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
