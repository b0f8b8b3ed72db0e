#!/usr/bin/env python3
"""Generates the small OBJ meshes bundled under data/."""

import os
import sys

import numpy as np


def write_obj(path, verts, faces):
    with open(path, "w") as f:
        for v in verts:
            f.write("v {:.17g} {:.17g} {:.17g}\n".format(*v))
        for a, b, c in faces:
            f.write(f"f {a + 1} {b + 1} {c + 1}\n")
    print(f"{path}: {len(verts)} vertices, {len(faces)} faces")


def quad():
    verts = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)]
    faces = [(0, 1, 2), (0, 2, 3)]
    return verts, faces


def triangle():
    return [(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)]


def tetra():
    # closed surface: no boundary loop, rejected by the loader
    verts = [(0, 0, 0), (1, 0, 0), (0.5, 1, 0), (0.5, 0.5, 1)]
    faces = [(0, 2, 1), (0, 1, 3), (1, 2, 3), (2, 0, 3)]
    return verts, faces


def disk_rings(nrings):
    """Polar triangulation of the unit disk: ring r has 6r vertices."""
    verts = [(0.0, 0.0)]
    ring_start = [0]
    for r in range(1, nrings + 1):
        ring_start.append(len(verts))
        n = 6 * r
        rad = r / nrings
        for i in range(n):
            a = 2 * np.pi * i / n
            verts.append((rad * np.cos(a), rad * np.sin(a)))
    faces = []
    # center fan
    for i in range(6):
        faces.append((0, ring_start[1] + i, ring_start[1] + (i + 1) % 6))
    # ring bands
    for r in range(1, nrings):
        ni, no = 6 * r, 6 * (r + 1)
        si, so = ring_start[r], ring_start[r + 1]
        # walk both rings by angle, stitching triangles
        ii, io = 0, 0
        while ii < ni or io < no:
            ai = (ii + 1) / ni if ii < ni else 2.0
            ao = (io + 1) / no if io < no else 2.0
            vi = si + ii % ni
            vo = so + io % no
            if ao <= ai and io < no:
                faces.append((vi, vo, so + (io + 1) % no))
                io += 1
            else:
                faces.append((vi, vo, si + (ii + 1) % ni))
                ii += 1
    return np.array(verts), faces


def hemisphere(nrings=13, radius=1.0):
    uv, faces = disk_rings(nrings)
    xy = uv * radius * 0.999  # keep sqrt positive on the rim
    z = np.sqrt(np.maximum(radius * radius - (xy ** 2).sum(axis=1), 0.0))
    verts = [(x, y, zz) for (x, y), zz in zip(xy, z)]
    return verts, faces


def saddle(n=12, a=1.0):
    verts = []
    for j in range(n + 1):
        for i in range(n + 1):
            x = i / n - 0.5
            y = j / n - 0.5
            verts.append((x, y, a * x * y))
    faces = []
    for j in range(n):
        for i in range(n):
            v = j * (n + 1) + i
            faces.append((v, v + 1, v + n + 2))
            faces.append((v, v + n + 2, v + n + 1))
    return verts, faces


def icosphere(subdiv=2):
    t = (1 + np.sqrt(5)) / 2
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    verts = [np.array(v) / np.linalg.norm(v) for v in verts]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    cache = {}

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        if key not in cache:
            m = verts[a] + verts[b]
            verts.append(m / np.linalg.norm(m))
            cache[key] = len(verts) - 1
        return cache[key]

    for _ in range(subdiv):
        out = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            out += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = out
    return verts, faces


def icosphere_cut(subdiv=2, zmax=0.55):
    verts, faces = icosphere(subdiv)
    kept = [f for f in faces if max(verts[i][2] for i in f) < zmax]
    return [tuple(v) for v in verts], kept


def main(outdir):
    os.makedirs(outdir, exist_ok=True)
    write_obj(os.path.join(outdir, "quad.obj"), *quad())
    write_obj(os.path.join(outdir, "triangle.obj"), *triangle())
    write_obj(os.path.join(outdir, "tetra.obj"), *tetra())
    write_obj(os.path.join(outdir, "hemisphere.obj"), *hemisphere())
    write_obj(os.path.join(outdir, "saddle.obj"), *saddle())
    write_obj(os.path.join(outdir, "icosphere_cut.obj"), *icosphere_cut())


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data")
