"""Visual artifacts: Sammon projection, unit coloring, feature planes, SVG.

The map figure colors every unit by a joint 2-D Sammon embedding of all
reference vectors (projection axis 1 drives hue, axis 2 drives lightness), so
similar units get similar colors across the whole sequence. Feature planes
show one input component over the same grid on a single-hue blue ramp, darker
meaning higher. All output is standalone SVG 1.1 or CSV with floats at six
significant digits; rendering is deterministic, byte for byte.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

from .core import SotmModel

_EPS = 1e-12

# Color encoding of the 2-D projection.
_HUE_RANGE = (0.0, 0.83)
_LIGHT_RANGE = (0.35, 0.75)
_SATURATION = 0.8

# Endpoints of the blue ramp used by feature planes (light = low, dark = high).
_BLUE_LO = np.array([0.9686, 0.9843, 1.0])
_BLUE_HI = np.array([0.0314, 0.1882, 0.4196])


@dataclass
class Projection:
    """2-D embedding of a vector set with its final stress value."""

    coords: np.ndarray  # (n, dims)
    stress: float
    stress_history: list[float] = field(default_factory=list)


@dataclass
class FeaturePlane:
    """One input component across all (slice, unit) cells."""

    feature_index: int
    values: np.ndarray  # (T, M)
    vmin: float
    vmax: float


# ---------------------------------------------------------------------------
# Sammon mapping
# ---------------------------------------------------------------------------

def _pairwise_distances(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _pca_scores(vectors: np.ndarray, dims: int) -> np.ndarray:
    centered = vectors - vectors.mean(axis=0)
    cov = centered.T @ centered / vectors.shape[0]
    _, eigvecs = np.linalg.eigh(cov)
    scores = np.zeros((vectors.shape[0], dims))
    available = min(dims, vectors.shape[1])
    for k in range(available):
        direction = eigvecs[:, -(k + 1)]
        lead = int(np.argmax(np.abs(direction)))
        if direction[lead] < 0.0:
            direction = -direction
        scores[:, k] = centered @ direction
    return scores


def sammon_project(
    vectors: np.ndarray,
    dims: int = 2,
    max_iters: int = 500,
    tol: float = 1e-9,
) -> Projection:
    """Minimize Sammon stress by gradient descent with step halving.

    Stress is sum((delta - d)^2 / delta) / sum(delta) over pairs, where delta
    are input-space and d output-space distances. The embedding starts from
    the first principal components; a step that would raise the stress is
    rejected and retried at half the length, so accepted iterations never
    increase stress. Coincident input vectors are tolerated by clamping
    delta in denominators.
    """
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim != 2 or vectors.shape[0] < 2:
        raise ValueError(f"need at least 2 vectors, got shape {vectors.shape}")
    if np.all(vectors == vectors[0]):
        raise ValueError("all input vectors are identical")

    delta = _pairwise_distances(vectors)
    total = float(delta.sum()) / 2.0  # each pair counted once
    total = max(total, _EPS)
    delta_safe = np.maximum(delta, _EPS)

    def stress(y: np.ndarray) -> float:
        d = _pairwise_distances(y)
        sq = (delta - d) ** 2 / delta_safe
        return float(sq.sum()) / 2.0 / total

    def gradient(y: np.ndarray) -> np.ndarray:
        d = _pairwise_distances(y)
        d_safe = np.maximum(d, _EPS)
        factor = (d - delta) / (delta_safe * d_safe)
        np.fill_diagonal(factor, 0.0)
        return (2.0 / total) * (factor.sum(axis=1)[:, None] * y - factor @ y)

    y = _pca_scores(vectors, dims)
    current = stress(y)
    history = [current]

    n = vectors.shape[0]
    mean_delta = 2.0 * total / (n * (n - 1))
    step = n * mean_delta * mean_delta

    for _ in range(max_iters):
        if current <= _EPS * _EPS:
            break
        grad = gradient(y)
        improved = False
        for _ in range(60):
            candidate = y - step * grad
            value = stress(candidate)
            if value < current:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        relative_drop = (current - value) / current
        y, current = candidate, value
        history.append(current)
        step *= 1.5
        if relative_drop <= tol:
            break

    return Projection(coords=y, stress=current, stress_history=history)


# ---------------------------------------------------------------------------
# Unit coloring and feature planes
# ---------------------------------------------------------------------------

def project_units(model: SotmModel, max_iters: int = 500, tol: float = 1e-9) -> Projection:
    """Joint 2-D embedding of all T*M reference vectors, slice-major order.

    A model whose units are all identical has no geometry to embed; it maps
    to a single central point with zero stress.
    """
    vectors = np.vstack([arr.units for arr in model.arrays])
    if np.all(vectors == vectors[0]):
        coords = np.full((vectors.shape[0], 2), 0.5)
        return Projection(coords=coords, stress=0.0, stress_history=[0.0])
    return sammon_project(vectors, dims=2, max_iters=max_iters, tol=tol)


def _rescale_to_unit_square(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Isotropic affine map into the unit square.

    Both axes shrink by the same factor (the larger range) and the shorter
    axis is centered, preserving the embedding's aspect ratio so nearby
    points stay nearby in color space.
    """
    lo = coords.min(axis=0)
    spans = coords.max(axis=0) - lo
    scale = float(spans.max())
    if scale <= 0.0:
        return np.full(coords.shape[0], 0.5), np.full(coords.shape[0], 0.5)
    scaled = (coords - lo) / scale + (1.0 - spans / scale) / 2.0
    return scaled[:, 0], scaled[:, 1]


def unit_colors(model: SotmModel, projection: Projection | None = None) -> np.ndarray:
    """RGB color per (slice, unit) cell, shape (T, M, 3), values in [0, 1].

    Projection axis 1 maps to hue, axis 2 to lightness; identical units get
    identical colors, and a fully degenerate model gets the map's center
    color everywhere.
    """
    if projection is None:
        projection = project_units(model)
    a1, a2 = _rescale_to_unit_square(projection.coords)
    hue = _HUE_RANGE[0] + a1 * (_HUE_RANGE[1] - _HUE_RANGE[0])
    light = _LIGHT_RANGE[0] + a2 * (_LIGHT_RANGE[1] - _LIGHT_RANGE[0])
    rgb = np.array(
        [colorsys.hls_to_rgb(h, l, _SATURATION) for h, l in zip(hue, light)]
    )
    return rgb.reshape(model.n_slices, model.n_units, 3)


def feature_plane(model: SotmModel, feature_index: int) -> FeaturePlane:
    """Extract one component of every reference vector as a (T, M) matrix."""
    if not 0 <= feature_index < model.dim:
        raise IndexError(
            f"feature index {feature_index} out of range [0, {model.dim - 1}]"
        )
    values = np.array(
        [[arr.units[i, feature_index] for i in range(model.n_units)]
         for arr in model.arrays]
    )
    return FeaturePlane(
        feature_index=feature_index,
        values=values,
        vmin=float(values.min()),
        vmax=float(values.max()),
    )


def _blue_ramp(fraction: float) -> np.ndarray:
    return _BLUE_LO + fraction * (_BLUE_HI - _BLUE_LO)


def _hex_color(rgb: np.ndarray) -> str:
    r, g, b = (int(round(min(max(v, 0.0), 1.0) * 255)) for v in rgb)
    return f"#{r:02x}{g:02x}{b:02x}"


# ---------------------------------------------------------------------------
# SVG rendering
# ---------------------------------------------------------------------------

_CELL = 24
_MARGIN_LEFT = 34
_MARGIN_TOP = 16
_MARGIN_BOTTOM = 58
_LEGEND_GAP = 26
_FONT = 'font-family="Helvetica, Arial, sans-serif"'


def _f(value: float) -> str:
    """Floats at six significant digits, no trailing noise."""
    return f"{value:.6g}"


def _grid_cells(parts: list[str], fills: list[list[str]], n_cols: int, n_rows: int) -> None:
    for col in range(n_cols):
        for row in range(n_rows):
            x = _MARGIN_LEFT + col * _CELL
            y = _MARGIN_TOP + row * _CELL
            parts.append(
                f'<rect class="cell" x="{_f(x)}" y="{_f(y)}" width="{_f(_CELL)}" '
                f'height="{_f(_CELL)}" fill="{fills[col][row]}"/>'
            )


def _time_labels(parts: list[str], time_keys: list, n_rows: int) -> None:
    base_y = _MARGIN_TOP + n_rows * _CELL + 12
    for col, key in enumerate(time_keys):
        x = _MARGIN_LEFT + col * _CELL + _CELL / 2
        parts.append(
            f'<text class="tick" x="{_f(x)}" y="{_f(base_y)}" {_FONT} font-size="9" '
            f'text-anchor="end" transform="rotate(-55 {_f(x)} {_f(base_y)})">'
            f"{escape(str(key))}</text>"
        )


def _axis_titles(parts: list[str], n_cols: int, n_rows: int) -> None:
    mid_y = _MARGIN_TOP + n_rows * _CELL / 2
    parts.append(
        f'<text class="axis" x="12" y="{_f(mid_y)}" {_FONT} font-size="10" '
        f'text-anchor="middle" transform="rotate(-90 12 {_f(mid_y)})">units</text>'
    )
    mid_x = _MARGIN_LEFT + n_cols * _CELL / 2
    bottom = _MARGIN_TOP + n_rows * _CELL + _MARGIN_BOTTOM - 8
    parts.append(
        f'<text class="axis" x="{_f(mid_x)}" y="{_f(bottom)}" {_FONT} '
        f'font-size="10" text-anchor="middle">time</text>'
    )


def _svg_document(parts: list[str], width: float, height: float) -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_f(width)}" height="{_f(height)}" '
        f'viewBox="0 0 {_f(width)} {_f(height)}">'
    )
    return head + "\n" + "\n".join(parts) + "\n</svg>\n"


def render_map_svg(model: SotmModel, colors: np.ndarray | None = None) -> str:
    """Colored grid of the whole sequence: one column per slice, one row per unit.

    Includes the time axis labels and a two-axis color legend (hue swatches
    horizontally, lightness vertically).
    """
    if colors is None:
        colors = unit_colors(model)
    t, m = model.n_slices, model.n_units
    if colors.shape != (t, m, 3):
        raise ValueError(f"colors shape {colors.shape} != ({t}, {m}, 3)")

    fills = [[_hex_color(colors[col, row]) for row in range(m)] for col in range(t)]
    parts: list[str] = []
    _grid_cells(parts, fills, t, m)
    _time_labels(parts, model.time_keys, m)
    _axis_titles(parts, t, m)

    # 2-D legend: hue left-to-right, lightness bottom-to-top.
    steps = 6
    swatch = 10
    lx = _MARGIN_LEFT + t * _CELL + _LEGEND_GAP
    ly = _MARGIN_TOP
    for i in range(steps):
        for j in range(steps):
            hue = _HUE_RANGE[0] + (i / (steps - 1)) * (_HUE_RANGE[1] - _HUE_RANGE[0])
            light = _LIGHT_RANGE[0] + (1 - j / (steps - 1)) * (
                _LIGHT_RANGE[1] - _LIGHT_RANGE[0]
            )
            color = _hex_color(np.array(colorsys.hls_to_rgb(hue, light, _SATURATION)))
            parts.append(
                f'<rect class="legend" x="{_f(lx + i * swatch)}" '
                f'y="{_f(ly + j * swatch)}" width="{_f(swatch)}" '
                f'height="{_f(swatch)}" fill="{color}"/>'
            )
    label_y = ly + steps * swatch + 12
    parts.append(
        f'<text class="legend-label" x="{_f(lx)}" y="{_f(label_y)}" {_FONT} '
        f'font-size="9">projection axes</text>'
    )

    width = lx + steps * swatch + _LEGEND_GAP + 40
    height = _MARGIN_TOP + m * _CELL + _MARGIN_BOTTOM
    return _svg_document(parts, width, height)


def render_plane_svg(model: SotmModel, plane: FeaturePlane) -> str:
    """One feature's plane on a blue ramp, darker for higher values."""
    t, m = model.n_slices, model.n_units
    if plane.values.shape != (t, m):
        raise ValueError(f"plane shape {plane.values.shape} != ({t}, {m})")

    span = plane.vmax - plane.vmin
    fills = []
    for col in range(t):
        column = []
        for row in range(m):
            frac = 0.5 if span <= 0.0 else (plane.values[col, row] - plane.vmin) / span
            column.append(_hex_color(_blue_ramp(frac)))
        fills.append(column)

    parts: list[str] = []
    _grid_cells(parts, fills, t, m)
    _time_labels(parts, model.time_keys, m)
    _axis_titles(parts, t, m)

    name = model.feature_names[plane.feature_index]
    parts.append(
        f'<text class="title" x="{_f(_MARGIN_LEFT)}" y="11" {_FONT} '
        f'font-size="11">{escape(name)}</text>'
    )

    # Vertical ramp legend with the value range.
    bars = 24
    bar_h = m * _CELL / bars
    lx = _MARGIN_LEFT + t * _CELL + _LEGEND_GAP
    for j in range(bars):
        frac = 1.0 - j / (bars - 1)
        parts.append(
            f'<rect class="legend" x="{_f(lx)}" y="{_f(_MARGIN_TOP + j * bar_h)}" '
            f'width="12" height="{_f(bar_h + 0.5)}" fill="{_hex_color(_blue_ramp(frac))}"/>'
        )
    parts.append(
        f'<text class="legend-label" x="{_f(lx + 16)}" y="{_f(_MARGIN_TOP + 8)}" '
        f'{_FONT} font-size="9">{_f(plane.vmax)}</text>'
    )
    parts.append(
        f'<text class="legend-label" x="{_f(lx + 16)}" '
        f'y="{_f(_MARGIN_TOP + m * _CELL)}" {_FONT} font-size="9">'
        f"{_f(plane.vmin)}</text>"
    )

    width = lx + 70
    height = _MARGIN_TOP + m * _CELL + _MARGIN_BOTTOM
    return _svg_document(parts, width, height)


def projection_csv(model: SotmModel, projection: Projection | None = None) -> str:
    """Per-unit projected coordinates over time, for external line plots."""
    if projection is None:
        projection = project_units(model)
    coords = projection.coords.reshape(model.n_slices, model.n_units, 2)
    lines = ["time_key,unit,x,y"]
    for t, key in enumerate(model.time_keys):
        for i in range(model.n_units):
            lines.append(f"{key},{i},{_f(coords[t, i, 0])},{_f(coords[t, i, 1])}")
    return "\n".join(lines) + "\n"


def plane_csv(model: SotmModel, plane: FeaturePlane) -> str:
    """One feature's cell values as rows, for external tools."""
    lines = ["time_key,unit,value"]
    for t, key in enumerate(model.time_keys):
        for i in range(model.n_units):
            lines.append(f"{key},{i},{_f(plane.values[t, i])}")
    return "\n".join(lines) + "\n"
