"""
Rotating points about an arbitrary axis
=======================================

Rodrigues rotation, point-to-axis distances, and the distance between two
axes used to score joint position.
"""
import numpy as np

from capt.geometry import (Line3, line_to_line_distance, point_to_line_distance,
                           project_point_to_line, rodrigues_rotate)

hinge = Line3.through(pivot=[0.0, 0.5, 0.0], direction=[1.0, 0.0, 0.0])
points = np.array([[0.0, 0.5, 1.0], [0.3, 0.5, 0.4], [0.2, 0.9, 0.0]])

# a quarter turn about the hinge keeps every distance to the hinge
turned = rodrigues_rotate(points, hinge, np.pi / 2)
print("rotated\n", turned.round(6))
print("distance before", point_to_line_distance(points, hinge.pivot, hinge.direction))
print("distance after ", point_to_line_distance(turned, hinge.pivot, hinge.direction))

# the foot direction and distance reconstruct a point on the axis
foot, pdir, dist = project_point_to_line(points, hinge)
print("p + dist * pdir == foot:", np.allclose(points + dist[:, None] * pdir, foot))

# axis error ignores where along the axis the pivot sits
slid = Line3(hinge.direction, hinge.pivot + 7.0 * hinge.direction)
print("slid pivot, same axis:", line_to_line_distance(hinge, slid))
tilted = Line3.through([0.0, 0.5, 0.1], [1.0, 0.1, 0.0])
print("tilted axis distance:", line_to_line_distance(hinge, tilted))
