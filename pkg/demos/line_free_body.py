"""
A line-free convex-concave body
===============================

Build the perturbed strip, glue it to the quasi-cone and measure how far the
result is from containing a line.  The unperturbed strip is ruled, so its
minimax line distance is zero; the perturbation pushes it above zero.
The full smoothing run is left to ``ccbody run``.
"""
from ccbody.glue_smooth import glue, quasicone_field
from ccbody.linefree import line_search
from ccbody.strip import build_strip, default_g, degenerate_strip, strip_field, strip_model_checks

Z_MAX = 12.0

strip, info = build_strip(default_g(Z_MAX))
print("perturbation kernel dimension", info.kernel_dim, "residual", info.residual)
for cert in strip_model_checks(strip):
    print(f"  {cert.name:14s} passed={cert.passed}")

S = strip_field(strip, Z_MAX, z_step=1 / 64, n_theta=128)
E = glue(S, quasicone_field(S.z, S.theta))

flat = strip_field(degenerate_strip(Z_MAX), Z_MAX, z_step=1 / 64, n_theta=128)
print("ruled strip margin:   ", line_search(flat, budget=4).margin)

rep = line_search(E, budget=8)
print("glued body margin:    ", rep.margin)
print("closest line:         ", rep.best_line.to_dict())
