"""Tolerances and key=value configuration files."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import GraphFlowError


@dataclass(frozen=True)
class Tolerances:
    h: float = 1e-3               # RK4 step
    eps: float = 1e-4             # capture radius around critical points
    t_max: float = 50.0           # time cap for limit searches
    grid: int = 64                # critical-point seeds per chart side
    dedup: float = 1e-6           # critical-point merge radius
    grad_tol: float = 1e-10       # |grad f| at an accepted critical point
    degenerate: float = 1e-6      # minimal |Hessian eigenvalue|
    branch_offset: float = 1e-5   # start offset along eigendirections
    seed_grid: int = 16           # solver seeds per chart side
    newton_tol: float = 1e-8      # accepted residual norm
    newton_maxiter: int = 60
    dedup_radius: float = 1e-5    # solution merge radius
    fd_step: float = 1e-7         # finite-difference step for Jacobians

    def with_overrides(self, **kw):
        names = {f.name: f.type for f in fields(self)}
        clean = {}
        for k, v in kw.items():
            if k not in names:
                raise GraphFlowError(f"unknown tolerance {k!r}")
            cur = getattr(self, k)
            clean[k] = type(cur)(float(v)) if isinstance(cur, int) else float(v)
        return replace(self, **clean)


DEFAULT_TOL = Tolerances()

# solver config keys and the tolerance each maps onto
SOLVER_KEYS = {
    "seed.grid": "seed_grid",
    "newton.tol": "newton_tol",
    "newton.maxiter": "newton_maxiter",
    "dedup.radius": "dedup_radius",
}


def read_kv(text):
    """Parse ``key=value`` lines ('#' comments allowed) into an ordered dict."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise GraphFlowError(f"line {lineno}: expected key=value")
        k, v = line.split("=", 1)
        k, v = k.strip(), v.strip()
        if k in out:
            raise GraphFlowError(f"line {lineno}: duplicate key {k!r}")
        out[k] = v
    return out
