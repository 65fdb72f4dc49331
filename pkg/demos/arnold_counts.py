"""
Lines and a ruled quadric in projective space
=============================================

For the quadric of signature (2, 2), a line that is not tangent meets it in
as many points as there are tangent planes through it.  Lines on the quadric
are rulings and give infinite counts.
"""
import numpy as np

from ccbody.arnoldcount import (
    HomogeneousQuadric,
    ProjectiveLine,
    arnold_certificates,
    line_quadric_intersections,
    tangent_planes_through_line,
)

S = HomogeneousQuadric(np.diag([1.0, 1.0, -1.0, -1.0]))
examples = {
    "axis": ([0, 0, 1, 0], [0, 0, 0, 1]),
    "secant": ([1, 0, 0, 0], [0, 0, 1, 0]),
    "ruling": ([1, 0, 0, 1], [0, 1, 1, 0]),
}
for name, (p, q) in examples.items():
    L = ProjectiveLine(np.array(p, float), np.array(q, float))
    print(f"{name:7s} points={line_quadric_intersections(S, L)} tangent planes={tangent_planes_through_line(S, L)}")

cert = arnold_certificates(S, 1000)
for part in cert.details["parts"]:
    print(f"{part['name']:22s} passed={part['passed']}")
