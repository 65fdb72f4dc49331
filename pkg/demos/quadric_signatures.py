"""
Signatures of quadrics and the Rolle field
==========================================

Restricting a nondegenerate form to a hyperplane drops one sign, and the
sign of the dual form on the covector says which one.  The level sets of a
(k, l) form then carry second forms of signature (k-1, l) or (k, l-1).
"""
import numpy as np

from ccbody.gaussmap import (
    hyperbolicity_certificate,
    quadric_oracle,
    rolle_identity_certificate,
)
from ccbody.quadforms import (
    Signature,
    dual_value,
    predict_restricted_signature,
    restrict_to_hyperplane,
    signature_law_certificate,
    standard_form,
)

# a (2, 2) form and two covectors, one on each side of the dual cone
q = standard_form(2, 2)
for ell in (np.array([1.0, 0.0, 0.3, 0.0]), np.array([0.2, 0.0, 1.0, 0.0])):
    _, actual = restrict_to_hyperplane(q, ell)
    print("q*(l,l) =", round(dual_value(q, ell), 3), " predicted", predict_restricted_signature(q, ell).as_tuple(),
          " computed", actual.as_tuple())

# the same law on 500 random forms
cert = signature_law_certificate(500)
print("signature law:", cert.passed, cert.details["dual_sign_counts"])

# second forms of the level sets Q = +1 and Q = -1 of a (2, 1) form
for level, expected in ((1.0, Signature(1, 1)), (-1.0, Signature(2, 0))):
    c = hyperbolicity_certificate(quadric_oracle(standard_form(2, 1), level), [[-3, 3]] * 3, 100, expected,
                                  unordered=False)
    print(f"Q = {level:+.0f}: signature {expected.as_tuple()[:2]} at 100 points:", c.passed)

# the Rolle function keeps its gradient parallel to the quadric's
r = rolle_identity_certificate(2, 2, 0.1, 1000)
print("Rolle identity: max angle", r.details["max_angle"], "max level residual", r.details["max_level_residual"])
