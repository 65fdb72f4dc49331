"""End-to-end construction of a line-free (1,1)-hyperbolic body and its certificates.

Stages: strip construction, strip certificates, strip field, gluing with
the quasi-cone, line search on the glued body (margin ``c``), choice of the
smoothing width with certified closeness below ``c``, smoothing, smoothed
certificates, line search on the smoothed body, export.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .certificate import Certificate, bundle, jsonable
from .errors import CCBodyError, PreconditionError
from .glue_smooth import (
    certified_closeness,
    export_mesh,
    glue,
    kernel_certificate,
    make_kernel,
    quasicone_field,
    smooth,
    smoothed_certificates,
)
from .linefree import line_search, linefree_certificate
from .strip import (
    StripModel,
    construct_rho,
    default_g,
    nonconstancy_certificate,
    nonproportionality_residual,
    rescale_for_cone,
    solve_even_odd,
    solve_u,
    strip_cc_certificate,
    strip_field,
    strip_model_checks,
    zero_function,
)
from .supportgeo import field_sup_distance, z_convexity_certificate

HINTS = {
    "strip": "increase the basis size m or refine the ODE step",
    "glue": "check the rescaling of the strip against the cone",
    "linefree_E": "the strip contains a line; the perturbation must be nonzero",
    "epsilon": "decrease epsilon further or refine the grid",
    "smooth": "enlarge Z_max so the field is affine at the grid ends",
    "smoothed": "refine the grid or decrease epsilon",
}


@dataclass
class PipelineConfig:
    """Parameters of a pipeline run."""

    z_step: float = 1.0 / 256.0
    z_max: float = 12.0
    n_theta: int = 256
    ode_step: float = 1.0 / 1024.0
    ode_tol: float = 1e-8
    m: int = 8
    rho_scale: float = 1.0
    g_kind: str = "default"
    epsilon: float = 0.05
    delta: float = 0.1
    floor_fraction: float = 0.25
    max_halvings: int = 40
    budget: int = 32
    seed: int = 0
    z_window: tuple = (-10.0, 10.0)
    mesh_window: tuple = (-3.0, 3.0)
    mesh_stride: int = 4
    n_mesh_samples: int = 500
    spectral: bool = False
    output_dir: Optional[str] = None

    def validate(self) -> None:
        for name in ("z_step", "ode_step", "ode_tol", "epsilon", "delta", "z_max"):
            if not getattr(self, name) > 0:
                raise PreconditionError(f"{name} must be positive")
        if self.z_max < 12:
            raise PreconditionError("z_max must be at least 12")
        if self.spectral and self.n_theta & (self.n_theta - 1):
            raise PreconditionError("n_theta must be a power of two for spectral differentiation")
        if self.g_kind not in ("default", "zero"):
            raise PreconditionError("g_kind must be 'default' or 'zero'")
        if self.budget < 1 or self.m < 2:
            raise PreconditionError("budget must be >= 1 and m >= 2")
        if not 0 <= self.floor_fraction < 1:
            raise PreconditionError("floor_fraction must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise PreconditionError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for k in ("z_window", "mesh_window"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunReport:
    """Stage results, headline margins, artifacts and timings of a run."""

    config: dict
    stages: dict = field(default_factory=dict)
    margins: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    wall_times: dict = field(default_factory=dict)
    required: list = field(default_factory=list)
    failed_stage: Optional[str] = None
    error: Optional[str] = None
    hint: Optional[str] = None

    @property
    def passed(self) -> bool:
        if self.failed_stage is not None:
            return False
        return all(self.stages[name]["passed"] for name in self.required if name in self.stages) and all(
            name in self.stages for name in self.required)

    def to_dict(self, include_times: bool = True) -> dict:
        d = {
            "passed": self.passed, "config": self.config, "stages": self.stages, "margins": self.margins,
            "artifacts": self.artifacts, "required": self.required, "failed_stage": self.failed_stage,
            "error": self.error, "hint": self.hint,
        }
        if include_times:
            d["wall_times"] = self.wall_times
        return jsonable(d)

    def to_json(self, include_times: bool = True) -> str:
        return json.dumps(self.to_dict(include_times), indent=2, sort_keys=True)


class _Stage:
    def __init__(self, report: RunReport, name: str):
        self.report, self.name = report, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.report.wall_times[self.name] = time.perf_counter() - self.t0
        if exc_type is not None and issubclass(exc_type, CCBodyError):
            self.report.failed_stage = self.name
            self.report.error = f"{exc_type.__name__}: {exc}"
            self.report.hint = HINTS.get(self.name.split(":")[0])
            return True
        return False


def _record(report: RunReport, cert: Certificate, required: bool = True) -> Certificate:
    report.stages[cert.name] = cert.to_dict()
    if required and cert.name not in report.required:
        report.required.append(cert.name)
    return cert


def choose_epsilon(E, c: float, config: PipelineConfig):
    """Halve epsilon until the certified closeness is below both ``delta`` and ``c``."""
    eps = config.epsilon
    trail = []
    for _ in range(config.max_halvings + 1):
        kernel = make_kernel(eps, config.z_step, config.n_theta, config.floor_fraction)
        D = smooth(E, kernel)
        close = certified_closeness(D, E, kernel, config.z_window)
        trail.append({"epsilon": eps, "certified": close["certified"]})
        if close["certified"] < min(config.delta, c):
            return eps, kernel, D, close, trail
        eps /= 2.0
    raise PreconditionError("no epsilon in the halving schedule meets the closeness bound")


def run_pipeline(config: PipelineConfig) -> RunReport:
    """Run all stages; stops at the first stage error and records it."""
    config.validate()
    report = RunReport(config=config.to_dict())
    out = Path(config.output_dir) if config.output_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    with _Stage(report, "strip"):
        if config.g_kind == "zero":
            g = zero_function(config.z_max, config.ode_step)
        else:
            g = default_g(config.z_max, config.ode_step)
        f1, f2 = solve_even_odd(g, tol=config.ode_tol)
        f1, f2, s = rescale_for_cone(f1, f2)
        info = None
        if np.any(g.values != 0) and config.rho_scale != 0:
            info = construct_rho(g, f1, f2, config.m)
            rho = info.rho.scaled(config.rho_scale)
        else:
            rho = zero_function(config.z_max, config.ode_step)
        u1, u2 = solve_u(rho, f1, f2, tol=config.ode_tol)
        strip = StripModel(g, rho, f1, f2, u1, u2, s)
        report.margins["cone_rescale"] = s
        if info is not None:
            report.margins["rho_kernel_dim"] = info.kernel_dim
            report.margins["rho_residual"] = info.residual
    if report.failed_stage:
        return _finish(report, out)

    with _Stage(report, "strip_certificates"):
        parts = strip_model_checks(strip, config.ode_tol)
        parts.append(strip_cc_certificate(strip, config.n_theta))
        _record(report, bundle("strip_model", parts))
        _record(report, nonconstancy_certificate(strip), required=False)
        if np.any(g.values != 0):
            report.margins["nonproportionality"] = nonproportionality_residual(rho, g)

    with _Stage(report, "glue"):
        S = strip_field(strip, config.z_max, config.z_step, config.n_theta)
        cert_s = z_convexity_certificate(S)
        cert_s.name = "cc_strip_field"
        _record(report, cert_s)
        K = quasicone_field(S.z, S.theta)
        E = glue(S, K)
        cert_e = z_convexity_certificate(E)
        cert_e.name = "cc_glued"
        _record(report, cert_e)
        report.margins["cc_strip"] = cert_s.margin
        report.margins["cc_glued"] = cert_e.margin
    if report.failed_stage:
        return _finish(report, out)

    with _Stage(report, "linefree_E"):
        rep_e = line_search(E, config.z_window, config.budget, config.seed)
        cert = linefree_certificate(E, 0.0, config.z_window, report=rep_e)
        cert.name = "linefree_glued"
        _record(report, cert)
        c = rep_e.margin
        report.margins["linefree_glued"] = c
        if not cert.passed:
            raise PreconditionError(
                f"glued body contains a line up to {c:.3g}: {rep_e.best_line.to_dict()}")
    if report.failed_stage:
        return _finish(report, out)

    with _Stage(report, "epsilon"):
        eps, kernel, D, close, trail = choose_epsilon(E, c, config)
        report.margins["epsilon"] = eps
        report.margins["closeness_grid"] = close["grid"]
        report.margins["closeness_certified"] = close["certified"]
        report.stages["epsilon_schedule"] = {"passed": True, "trail": trail, "closeness": close}
        _record(report, kernel_certificate(kernel))
    if report.failed_stage:
        return _finish(report, out)

    with _Stage(report, "smoothed"):
        sc = smoothed_certificates(D, E, config.delta, kernel, config.n_mesh_samples, config.seed, config.z_window)
        for part in sc.details["parts"]:
            report.stages[part["name"]] = part
            report.required.append(part["name"])
        by_name = {p["name"]: p for p in sc.details["parts"]}
        report.margins["curvature"] = by_name["curvature_positivity"]["margin"]
        report.margins["cc_smoothed_strict"] = by_name["strict_z_convexity"]["margin"]
        report.margins["delta_closeness"] = close["certified"]
        closeness_vs_c = Certificate("closeness_below_margin", field_sup_distance(D, E, config.z_window) < c
                                     and close["certified"] < c, c - close["certified"], None,
                                     {"grid": close["grid"], "certified": close["certified"], "margin_glued": c})
        _record(report, closeness_vs_c)
    if report.failed_stage:
        return _finish(report, out)

    with _Stage(report, "linefree_D"):
        rep_d = line_search(D, config.z_window, config.budget, config.seed)
        cert = linefree_certificate(D, 0.0, config.z_window, report=rep_d)
        cert.name = "linefree_smoothed"
        cert.details["sharp_bound"] = close["sharp_bound"]
        cert.details["off_grid_bound"] = close["sharp_bound"] + close["between_nodes"]
        cert.details["margin_lower_bound"] = rep_d.margin - close["sharp_bound"] - close["between_nodes"]
        _record(report, cert)
        report.margins["linefree_smoothed"] = rep_d.margin
        report.margins["linefree_smoothed_lower_bound"] = cert.details["margin_lower_bound"]

    if out is not None and not report.failed_stage:
        with _Stage(report, "export"):
            (out / "strip.json").write_text(strip.to_json())
            S.to_binary(out / "strip.bin")
            E.to_binary(out / "glued.bin")
            D.to_binary(out / "smoothed.bin")
            export_mesh(D, config.mesh_window, config.mesh_stride, out / "mesh.obj")
            report.artifacts = {k: str(out / v) for k, v in (
                ("strip_model", "strip.json"), ("strip_field", "strip.bin"), ("glued_field", "glued.bin"),
                ("smoothed_field", "smoothed.bin"), ("mesh", "mesh.obj"), ("report", "report.json"))}
    return _finish(report, out)


def _finish(report: RunReport, out: Optional[Path]) -> RunReport:
    if out is not None:
        (out / "report.json").write_text(report.to_json())
    return report
