"""ASCII PLY export of a segmented cloud with joint axis segments."""
import numpy as np

PALETTE = np.array([
    [31, 119, 180], [255, 127, 14], [148, 103, 189], [140, 86, 75],
    [227, 119, 194], [127, 127, 127], [188, 189, 34], [23, 190, 207],
], dtype=np.uint8)
PRED_COLOR = (255, 0, 0)
GT_COLOR = (0, 255, 0)

HEADER = """ply
format ascii 1.0
element vertex {nv}
property float x
property float y
property float z
property uchar red
property uchar green
property uchar blue
element edge {ne}
property int vertex1
property int vertex2
end_header
"""


def write_ply(path, points, labels, pred_axes=(), gt_axes=(), half_length=None):
    """Write points colored by ``labels`` plus one edge per axis.

    Axes are ``(direction, pivot)`` pairs; predicted ones are red, ground
    truth green. Each segment is centred on the pivot.
    """
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if half_length is None:
        half_length = 0.5 * float(np.ptp(points, axis=0).max() or 1.0)
    verts = [(p, PALETTE[l % len(PALETTE)]) for p, l in zip(points, labels)]
    edges = []
    for axes, color in ((pred_axes, PRED_COLOR), (gt_axes, GT_COLOR)):
        for direction, pivot in axes:
            d = np.asarray(direction, dtype=np.float64)
            q = np.asarray(pivot, dtype=np.float64)
            edges.append((len(verts), len(verts) + 1))
            verts.append((q - half_length * d, color))
            verts.append((q + half_length * d, color))
    lines = [HEADER.format(nv=len(verts), ne=len(edges))]
    for p, c in verts:
        lines.append(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {int(c[0])} {int(c[1])} {int(c[2])}\n")
    for a, b in edges:
        lines.append(f"{a} {b}\n")
    with open(path, "w") as fh:
        fh.write("".join(lines))
