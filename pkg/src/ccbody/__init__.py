"""Line-free (1,1)-hyperbolic bodies from convex-concave sets, with numerical certificates."""
from .certificate import Certificate, bundle
from .errors import CCBodyError, PreconditionError
from .quadforms import QuadraticForm, Signature, dual_form, signature_of
from .supportgeo import SupportField
from .strip import StripModel, build_strip, degenerate_strip, strip_field
from .glue_smooth import glue, make_kernel, quasicone_field, smooth
from .linefree import Line3, line_search, maxdist
from .arnoldcount import HomogeneousQuadric, ProjectiveLine
from .pipeline import PipelineConfig, RunReport, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "Certificate", "bundle", "CCBodyError", "PreconditionError", "QuadraticForm", "Signature", "dual_form",
    "signature_of", "SupportField", "StripModel", "build_strip", "degenerate_strip", "strip_field", "glue",
    "make_kernel", "quasicone_field", "smooth", "Line3", "line_search", "maxdist", "HomogeneousQuadric",
    "ProjectiveLine", "PipelineConfig", "RunReport", "run_pipeline",
]
