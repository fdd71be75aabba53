"""Polyline routes and the helpers used to build road layouts."""
from __future__ import annotations

import math

import numpy as np


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


class Route:
    """A polyline with arc-length bookkeeping and local projection."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("a route needs at least two 2-D points")
        keep = np.concatenate([[True], np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-9])
        pts = pts[keep]
        if len(pts) < 2:
            raise ValueError("route points are all identical")
        self.points = pts
        d = np.diff(pts, axis=0)
        self.seg_len = np.linalg.norm(d, axis=1)
        self.cum = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.headings = np.arctan2(d[:, 1], d[:, 0])
        # plain lists are faster than numpy for the scalar inner loop
        self._px = pts[:, 0].tolist()
        self._py = pts[:, 1].tolist()
        self._ux = (d[:, 0] / self.seg_len).tolist()
        self._uy = (d[:, 1] / self.seg_len).tolist()
        self._len = self.seg_len.tolist()
        self._cum = self.cum.tolist()
        self._hd = self.headings.tolist()

    @property
    def length(self) -> float:
        return float(self.cum[-1])

    @property
    def n_segments(self) -> int:
        return len(self._len)

    def _project_segment(self, i: int, x: float, y: float):
        dx, dy = x - self._px[i], y - self._py[i]
        ux, uy = self._ux[i], self._uy[i]
        t = dx * ux + dy * uy
        tc = min(max(t, 0.0), self._len[i])
        ex, ey = dx - tc * ux, dy - tc * uy
        return ex * ex + ey * ey, t, ux * dy - uy * dx

    def project(self, x: float, y: float, hint: int | None = None, window: int = 8):
        """Closest point on the route.

        Returns ``(s, lateral, heading, segment)`` where ``lateral`` is positive
        to the left of the travel direction and ``s`` is extrapolated past the
        end points.
        """
        n = self.n_segments
        if hint is None:
            lo, hi = 0, n
        else:
            lo, hi = max(0, hint - 2), min(n, hint + window)
        best_i, best = lo, None
        for i in range(lo, hi):
            d2, t, lat = self._project_segment(i, x, y)
            if best is None or d2 < best[0]:
                best_i, best = i, (d2, t, lat)
        if hint is not None and (best_i == hi - 1 and hi < n or best_i == lo and lo > 0):
            # drifted outside the search window
            return self.project(x, y, None)
        _, t, lat = best
        if 0 < best_i < n - 1 or (best_i == 0 and t >= 0) or (best_i == n - 1 and t <= self._len[-1]):
            t = min(max(t, 0.0), self._len[best_i])
        return self._cum[best_i] + t, lat, self._hd[best_i], best_i

    def segment_at(self, s: float) -> int:
        i = int(np.searchsorted(self.cum, s, side="right")) - 1
        return min(max(i, 0), self.n_segments - 1)

    def point_at(self, s: float) -> tuple[float, float]:
        i = self.segment_at(s)
        t = s - self._cum[i]
        return self._px[i] + t * self._ux[i], self._py[i] + t * self._uy[i]

    def heading_at(self, s: float) -> float:
        return self._hd[self.segment_at(s)]


def straight(p0, p1, step: float = 1.0) -> np.ndarray:
    p0, p1 = np.asarray(p0, dtype=np.float64), np.asarray(p1, dtype=np.float64)
    n = max(1, int(math.ceil(np.linalg.norm(p1 - p0) / step)))
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    return p0 + t * (p1 - p0)


def arc(center, radius: float, start_angle: float, end_angle: float, step: float = 0.5) -> np.ndarray:
    n = max(2, int(math.ceil(abs(end_angle - start_angle) * radius / step)))
    a = np.linspace(start_angle, end_angle, n + 1)
    return np.column_stack([center[0] + radius * np.cos(a), center[1] + radius * np.sin(a)])


def smoothstep5(u):
    """Quintic blend with zero slope and curvature at both ends."""
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (10.0 - 15.0 * u + 6.0 * u * u)


def lateral_blend(origin, heading: float, length: float, offset: float, step: float = 1.0) -> np.ndarray:
    """Points of a quintic lateral shift by ``offset`` over ``length`` metres."""
    n = max(2, int(math.ceil(length / step)))
    s = np.linspace(0.0, length, n + 1)
    lat = offset * smoothstep5(s / length)
    c, sn = math.cos(heading), math.sin(heading)
    return np.column_stack([origin[0] + s * c - lat * sn, origin[1] + s * sn + lat * c])


def join(*parts) -> np.ndarray:
    out = [np.asarray(parts[0], dtype=np.float64)]
    for p in parts[1:]:
        p = np.asarray(p, dtype=np.float64)
        if np.linalg.norm(out[-1][-1] - p[0]) < 1e-9:
            p = p[1:]
        out.append(p)
    return np.concatenate(out)
