"""Mesh preprocessing: clustering, quadric decimation, visibility culling, UV atlas.

Turns an arbitrary triangle soup into the clean, UV-parameterized scaffold the
renderer needs. Counts never grow along cluster -> decimate -> cull, and the
built-in chart generator guarantees collision-free texel ownership (an
externally UV'd mesh bypasses it entirely).
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass

import numpy as np

from ._kernels_py import coverage_counts
from .errors import DataError, ValidationError
from .raster import geometry_pass
from .scene import Camera, TexturedMesh

log = logging.getLogger(__name__)


@dataclass
class DecimationConfig:
    target_vertices: int
    cell_size: float = 0.01  # meters, vertex-clustering grid
    boundary_weight: float = 1.0

    def validate(self) -> "DecimationConfig":
        if self.target_vertices < 4:
            raise ValidationError("decimation target must be >= 4", field="decimate.target")
        if self.cell_size <= 0:
            raise ValidationError("cluster cell size must be > 0", field="decimate.cell_size")
        if self.boundary_weight < 0:
            raise ValidationError("boundary weight must be >= 0", field="decimate.boundary_weight")
        return self


def _canonical_faces(faces: np.ndarray) -> np.ndarray:
    """Drop degenerate faces and duplicates (same oriented cycle), keeping order."""
    if not len(faces):
        return faces.reshape(0, 3).astype(np.int32)
    f = faces
    ok = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
    f = f[ok]
    if not len(f):
        return f.astype(np.int32)
    # Rotate each cycle so the smallest index leads; opposite windings stay distinct.
    shift = np.argmin(f, axis=1)
    rolled = np.stack([f[np.arange(len(f)), (shift + k) % 3] for k in range(3)], axis=1)
    _, first = np.unique(rolled, axis=0, return_index=True)
    return f[np.sort(first)].astype(np.int32)


def cluster_vertices(mesh: TexturedMesh, cell: float) -> TexturedMesh:
    """Merge vertices that share a uniform grid cell to their centroid."""
    if cell <= 0:
        raise ValidationError("cluster cell size must be > 0", field="cell")
    v = mesh.vertices.astype(np.float64)
    if not len(v):
        return TexturedMesh(vertices=mesh.vertices.copy(), faces=mesh.faces.copy())
    keys = np.floor((v - v.min(axis=0)) / cell).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    sums = np.zeros((len(uniq), 3))
    np.add.at(sums, inverse, v)
    counts = np.bincount(inverse, minlength=len(uniq)).astype(np.float64)
    centroids = (sums / counts[:, None]).astype(np.float32)
    faces = _canonical_faces(inverse[mesh.faces.astype(np.int64)])
    return TexturedMesh(vertices=centroids, faces=faces).validate()


# -- quadric edge-collapse decimation ---------------------------------------------

def _face_plane_quadric(p0, p1, p2):
    n = np.cross(p1 - p0, p2 - p0)
    norm = np.linalg.norm(n)
    if norm < 1e-20:
        return None, None
    n = n / norm
    plane = np.array([n[0], n[1], n[2], -n @ p0])
    return np.outer(plane, plane), n


def _collapse_candidates(quadric, va, vb):
    """Candidate positions sorted by quadric cost (optimal solve first when stable)."""
    a = quadric[:3, :3]
    b = -quadric[:3, 3]
    candidates = []
    if abs(np.linalg.det(a)) > 1e-12 * max(1.0, np.trace(a) ** 3):
        candidates.append(np.linalg.solve(a, b))
    candidates.extend([0.5 * (va + vb), va, vb])
    scored = []
    for c in candidates:
        h = np.append(c, 1.0)
        scored.append((max(0.0, float(h @ quadric @ h)), c))
    scored.sort(key=lambda t: t[0])
    return scored


def decimate(mesh: TexturedMesh, cfg: DecimationConfig) -> TexturedMesh:
    """Greedy quadric-error edge collapse down to <= target vertices.

    Non-manifold edges simply sum their incident-face quadrics; boundary edges
    (one incident face) add a perpendicular-plane penalty scaled by
    cfg.boundary_weight and the squared edge length. Collapses that would flip
    or flatten a surviving face are rejected.
    """
    cfg.validate()
    n = mesh.n_vertices
    if cfg.target_vertices > n:
        log.warning("decimation target %d above vertex count %d; returning input",
                    cfg.target_vertices, n)
        return mesh
    if cfg.target_vertices == n or mesh.n_faces == 0:
        return TexturedMesh(vertices=mesh.vertices.copy(), faces=mesh.faces.copy())

    pos = mesh.vertices.astype(np.float64).copy()
    faces = {fi: list(map(int, f)) for fi, f in enumerate(mesh.faces)}
    vert_faces: list[set[int]] = [set() for _ in range(n)]
    for fi, f in faces.items():
        for vi in f:
            vert_faces[vi].add(fi)

    quadrics = np.zeros((n, 4, 4))
    normals = {}
    for fi, (a, b, c) in faces.items():
        q, nrm = _face_plane_quadric(pos[a], pos[b], pos[c])
        if q is None:
            continue
        normals[fi] = nrm
        for vi in (a, b, c):
            quadrics[vi] += q

    edge_faces: dict[tuple[int, int], list[int]] = {}
    for fi, f in faces.items():
        for k in range(3):
            e = tuple(sorted((f[k], f[(k + 1) % 3])))
            edge_faces.setdefault(e, []).append(fi)
    if cfg.boundary_weight > 0:
        for (a, b), incident in edge_faces.items():
            if len(incident) != 1 or incident[0] not in normals:
                continue
            edge = pos[b] - pos[a]
            length = np.linalg.norm(edge)
            if length < 1e-20:
                continue
            nb = np.cross(edge / length, normals[incident[0]])
            nb_norm = np.linalg.norm(nb)
            if nb_norm < 1e-12:
                continue
            nb = nb / nb_norm
            plane = np.array([nb[0], nb[1], nb[2], -nb @ pos[a]])
            q = cfg.boundary_weight * (length * length) * np.outer(plane, plane)
            quadrics[a] += q
            quadrics[b] += q

    alive = np.ones(n, dtype=bool)
    version = np.zeros(n, dtype=np.int64)
    heap: list = []
    counter = 0

    def push_edge(a: int, b: int):
        nonlocal counter
        cost = _collapse_candidates(quadrics[a] + quadrics[b], pos[a], pos[b])[0][0]
        heapq.heappush(heap, (cost, counter, a, b, int(version[a]), int(version[b])))
        counter += 1

    for a, b in edge_faces:
        push_edge(a, b)

    bbox = mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)
    area_eps = 1e-12 * max(float(bbox @ bbox), 1e-12)

    def face_area2(fi) -> float:
        t = faces[fi]
        return float(
            np.linalg.norm(np.cross(pos[t[1]] - pos[t[0]], pos[t[2]] - pos[t[0]]))
        )

    def drop_face(fi):
        for vi in faces[fi]:
            vert_faces[vi].discard(fi)
        del faces[fi]

    def flips_face(a, b, moved, vbar) -> bool:
        for fi in moved:
            tri = faces[fi]
            old = [pos[v] for v in tri]
            new = [vbar if v in (a, b) else pos[v] for v in tri]
            n_old = np.cross(old[1] - old[0], old[2] - old[0])
            if np.linalg.norm(n_old) < area_eps:
                continue  # already degenerate: it cannot constrain the collapse
            n_new = np.cross(new[1] - new[0], new[2] - new[0])
            if np.linalg.norm(n_new) < area_eps or n_old @ n_new <= 0.0:
                return True
        return False

    # Coincidence hash: collapses can land a vertex exactly on another one that
    # shares no edge with it; such pairs can only merge as Garland-style
    # virtual (non-edge) pairs, which we register on position collisions.
    pair_eps = 1e-9 * max(float(np.sqrt(bbox @ bbox)), 1e-12)
    cells: dict[tuple, set[int]] = {}

    def cell_key(p) -> tuple:
        return tuple(np.floor(p / max(pair_eps, 1e-300)).astype(np.int64))

    for vi in range(n):
        cells.setdefault(cell_key(pos[vi]), set()).add(vi)

    def move_vertex(vi, new_pos) -> set[int]:
        """Update the coincidence hash; returns alive vertices within pair_eps."""
        cells[cell_key(pos[vi])].discard(vi)
        pos[vi] = new_pos
        key = cell_key(pos[vi])
        coincident = set()
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    bucket = cells.get((key[0] + dx, key[1] + dy, key[2] + dz))
                    if not bucket:
                        continue
                    for other in bucket:
                        if (
                            other != vi
                            and alive[other]
                            and float(np.abs(pos[other] - new_pos).max()) <= pair_eps
                        ):
                            coincident.add(other)
        cells.setdefault(key, set()).add(vi)
        return coincident

    def retire_vertex(vi):
        cells[cell_key(pos[vi])].discard(vi)

    alive_count = n
    while alive_count > cfg.target_vertices and heap:
        _, _, a, b, va, vb = heapq.heappop(heap)
        if not (alive[a] and alive[b]) or version[a] != va or version[b] != vb:
            continue
        shared = vert_faces[a] & vert_faces[b]
        moved = (vert_faces[a] | vert_faces[b]) - shared
        # Try candidate positions cheapest-first; reject ones that flip or
        # flatten a surviving face.
        vbar = None
        for _, cand in _collapse_candidates(quadrics[a] + quadrics[b], pos[a], pos[b]):
            if not flips_face(a, b, moved, cand):
                vbar = cand
                break
        if vbar is None:
            continue

        retire_vertex(b)
        coincident = move_vertex(a, vbar)
        quadrics[a] = quadrics[a] + quadrics[b]
        alive[b] = False
        alive_count -= 1
        for fi in shared:
            drop_face(fi)
        for fi in list(vert_faces[b]):
            f = faces[fi]
            faces[fi] = [a if v == b else v for v in f]
            vert_faces[b].discard(fi)
            vert_faces[a].add(fi)
        vert_faces[b] = set()
        version[a] += 1
        neighbors = set()
        for fi in vert_faces[a]:
            neighbors.update(faces[fi])
        neighbors.discard(a)
        neighbors.update(coincident)
        for nb_v in sorted(neighbors):
            push_edge(a, nb_v)

    if alive_count > cfg.target_vertices:
        log.warning("decimation stalled at %d vertices (target %d)", alive_count,
                    cfg.target_vertices)

    kept = [fi for fi in faces if face_area2(fi) >= area_eps]
    used = sorted({v for fi in kept for v in faces[fi]})
    remap = {old: i for i, old in enumerate(used)}
    new_faces = _canonical_faces(
        np.array([[remap[v] for v in faces[fi]] for fi in kept], dtype=np.int64).reshape(-1, 3)
    )
    return TexturedMesh(
        vertices=pos[used].astype(np.float32),
        faces=new_faces,
    ).validate()


# -- visibility culling -------------------------------------------------------------

def cull_invisible(
    mesh: TexturedMesh,
    cameras: list[Camera],
    *,
    supersample: int = 2,
    cull_backfaces: bool = True,
) -> TexturedMesh:
    """Keep a face iff some camera rasterizes at least one unoccluded fragment of it."""
    if not cameras:
        raise ValidationError("visibility culling needs at least one camera", field="cameras")
    kept = np.zeros(mesh.n_faces, dtype=bool)
    for cam in cameras:
        tri, _, _, _ = geometry_pass(mesh, cam, cull_backfaces=cull_backfaces, scale=supersample)
        ids = np.unique(tri)
        kept[ids[ids >= 0]] = True
    faces = mesh.faces[kept]
    used = np.unique(faces)
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TexturedMesh(
        vertices=mesh.vertices[used],
        faces=remap[faces.astype(np.int64)].astype(np.int32),
        uvs=mesh.uvs[used] if mesh.uvs is not None else None,
    ).validate()


# -- UV atlas generation --------------------------------------------------------------

def _face_normals_areas(verts: np.ndarray, faces: np.ndarray):
    p = verts[faces]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    norm = np.linalg.norm(cross, axis=1)
    safe = np.maximum(norm, 1e-30)
    return cross / safe[:, None], 0.5 * norm


def _grow_charts(faces: np.ndarray, normals: np.ndarray, areas: np.ndarray, cos_thresh: float):
    """Greedy near-planar connected charts (seed-normal reference)."""
    edge_map: dict[tuple[int, int], list[int]] = {}
    for fi, f in enumerate(faces):
        for k in range(3):
            e = tuple(sorted((int(f[k]), int(f[(k + 1) % 3]))))
            edge_map.setdefault(e, []).append(fi)
    neighbors: list[set[int]] = [set() for _ in range(len(faces))]
    for fs in edge_map.values():
        for a in fs:
            for b in fs:
                if a != b:
                    neighbors[a].add(b)
    assigned = np.full(len(faces), -1, dtype=np.int64)
    order = np.argsort(-areas, kind="stable")
    charts: list[list[int]] = []
    for seed in order:
        if assigned[seed] >= 0:
            continue
        cid = len(charts)
        chart = [int(seed)]
        assigned[seed] = cid
        queue = [int(seed)]
        n_seed = normals[seed]
        while queue:
            cur = queue.pop(0)
            for nb in sorted(neighbors[cur]):
                if assigned[nb] < 0 and normals[nb] @ n_seed >= cos_thresh:
                    assigned[nb] = cid
                    chart.append(nb)
                    queue.append(nb)
        charts.append(chart)
    return charts


def _project_chart(verts: np.ndarray, faces: np.ndarray, chart: list[int],
                   normals: np.ndarray, areas: np.ndarray):
    """Project a chart onto its best-fit plane; returns per-vertex 2D coords.

    Returns (vertex ids, coords (M, 2)) or None when the projection folds.
    """
    n = (normals[chart] * areas[chart, None]).sum(axis=0)
    if np.linalg.norm(n) < 1e-20:
        n = normals[chart[0]]
    n = n / np.linalg.norm(n)
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = np.cross(n, helper)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    vids = sorted({int(v) for fi in chart for v in faces[fi]})
    vmap = {v: i for i, v in enumerate(vids)}
    p = verts[vids]
    coords = np.stack([p @ t1, p @ t2], axis=1)
    tri2 = np.array([[vmap[int(v)] for v in faces[fi]] for fi in chart])
    a = coords[tri2[:, 0]]
    b = coords[tri2[:, 1]]
    c = coords[tri2[:, 2]]
    signed = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    if signed.sum() < 0:
        coords[:, 1] *= -1.0
        signed = -signed
    if (signed <= 1e-14).any():
        return None
    # Raster overlap test at a modest local resolution catches folded charts
    # that keep positive orientation.
    res = 128
    lo = coords.min(axis=0)
    span = np.maximum(coords.max(axis=0) - lo, 1e-12)
    scale = (res - 2) / span.max()
    tri_px = (coords[tri2] - lo) * scale + 1.0
    counts = coverage_counts(
        np.ascontiguousarray(tri_px[..., 0]), np.ascontiguousarray(tri_px[..., 1]), res, res
    )
    if (counts > 1).any():
        return None
    return vids, coords, tri2


class _Skyline:
    """Bottom-left skyline rectangle packer on an integer grid."""

    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.segments: list[list[int]] = [[0, 0, width]]  # x, y, width

    def place(self, w: int, h: int) -> tuple[int, int] | None:
        best = None
        for i in range(len(self.segments)):
            x = self.segments[i][0]
            if x + w > self.width:
                continue
            y = 0
            span = 0
            j = i
            while span < w:
                y = max(y, self.segments[j][1])
                span += self.segments[j][2]
                j += 1
                if span < w and j >= len(self.segments):
                    break
            if span < w or y + h > self.height:
                continue
            if best is None or (y, x) < best[:2]:
                best = (y, x, i)
        if best is None:
            return None
        y, x, i = best
        # Rebuild skyline with the new plateau.
        new_seg = [x, y + h, w]
        out = []
        for seg in self.segments:
            sx, sy, sw = seg
            if sx + sw <= x or sx >= x + w:
                out.append(seg)
                continue
            if sx < x:
                out.append([sx, sy, x - sx])
            if sx + sw > x + w:
                out.append([x + w, sy, sx + sw - (x + w)])
        out.append(new_seg)
        out.sort()
        merged = []
        for seg in out:
            if merged and merged[-1][1] == seg[1] and merged[-1][0] + merged[-1][2] == seg[0]:
                merged[-1][2] += seg[2]
            else:
                merged.append(seg)
        self.segments = merged
        return x, y


def generate_uv_atlas(
    mesh: TexturedMesh,
    *,
    atlas_resolution: int = 1024,
    padding: int = 2,
    angle_threshold_deg: float = 40.0,
) -> TexturedMesh:
    """Unfold the mesh into non-overlapping charts packed inside [0, 1]^2.

    Charts are near-planar connected face groups projected to their best-fit
    plane; charts that fold are split into per-face charts. Vertices shared by
    several charts are duplicated. Raises DataError (reporting the required
    scale) when the charts cannot be packed at the requested padding.
    """
    mesh.validate()
    if mesh.n_faces == 0:
        raise ValidationError("cannot parameterize an empty mesh", field="mesh.faces")
    verts = mesh.vertices.astype(np.float64)
    faces = mesh.faces.astype(np.int64)
    normals, areas = _face_normals_areas(verts, faces)
    charts = _grow_charts(faces, normals, areas, np.cos(np.radians(angle_threshold_deg)))

    projected = []
    for chart in charts:
        proj = _project_chart(verts, faces, chart, normals, areas)
        if proj is not None:
            projected.append((chart, *proj))
            continue
        for fi in chart:  # folded chart: fall back to one chart per face
            single = _project_chart(verts, faces, [fi], normals, areas)
            if single is None:
                raise DataError(f"face {fi} is degenerate in UV projection", field="mesh.faces")
            projected.append(([fi], *single))

    rects = []
    for chart, vids, coords, tri2 in projected:
        lo = coords.min(axis=0)
        size = coords.max(axis=0) - lo
        rects.append((size[0], size[1]))

    res = atlas_resolution
    inner = res - 1

    def try_pack(scale: float):
        packer = _Skyline(inner, inner)
        order = sorted(
            range(len(rects)), key=lambda i: (-(rects[i][1] * scale), -(rects[i][0] * scale), i)
        )
        placements: dict[int, tuple[int, int]] = {}
        for i in order:
            w = int(np.ceil(rects[i][0] * scale)) + 1 + 2 * padding
            h = int(np.ceil(rects[i][1] * scale)) + 1 + 2 * padding
            spot = packer.place(w, h)
            if spot is None:
                return None
            placements[i] = (spot[0] + padding, spot[1] + padding)
        return placements

    max_dim = max(max(w, h) for w, h in rects) if rects else 1.0
    hi = (inner - 1 - 2 * padding) / max(max_dim, 1e-12)
    placements = try_pack(hi)
    scale = hi
    if placements is None:
        lo_s, hi_s = 0.0, hi
        placements = None
        for _ in range(48):
            mid = 0.5 * (lo_s + hi_s)
            got = try_pack(mid)
            if got is not None:
                lo_s = mid
                placements = got
                scale = mid
            else:
                hi_s = mid
        if placements is None:
            raise DataError(
                f"chart packing failed at {res}x{res} with padding {padding}; "
                f"a resolution of ~{int(res * np.sqrt(len(rects)))} would be required",
                field="atlas_resolution",
            )

    out_pos, out_uv, out_faces = [], [], []
    for i, (chart, vids, coords, tri2) in enumerate(projected):
        ox, oy = placements[i]
        lo = coords.min(axis=0)
        uv = (coords - lo) * scale
        uv[:, 0] += ox
        uv[:, 1] += oy
        uv /= res
        base = len(out_pos)
        out_pos.extend(verts[vids])
        out_uv.extend(uv)
        for row, fi in zip(tri2, chart):
            out_faces.append([base + int(v) for v in row])

    return TexturedMesh(
        vertices=np.array(out_pos, dtype=np.float32),
        faces=np.array(out_faces, dtype=np.int32),
        uvs=np.clip(np.array(out_uv, dtype=np.float32), 0.0, 1.0),
    ).validate()


def uv_ownership_collisions(mesh: TexturedMesh, resolution: int = 1024) -> int:
    """Count texels claimed by more than one face when rasterizing all charts."""
    if mesh.uvs is None:
        raise ValidationError("mesh has no uvs", field="mesh.uvs")
    tri = mesh.uvs.astype(np.float64)[mesh.faces.astype(np.int64)] * resolution
    counts = coverage_counts(
        np.ascontiguousarray(tri[..., 0]), np.ascontiguousarray(tri[..., 1]),
        resolution, resolution,
    )
    return int((counts > 1).sum())
