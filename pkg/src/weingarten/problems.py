"""Problem-definition files: parsing, validation, and assembly into solver specs.

The format is plain key-value lines grouped into [sections]; '#' starts a
comment.  Unknown sections or keys are rejected with their line number, and
the parse keeps raw strings so the file serializes losslessly to JSON.
See the README for the full schema and an annotated example.
"""

import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import charts as ch
from . import grids
from .continuity import HomotopyConfig, ProblemSpec
from .errors import ParseError, SemanticError
from .expressions import Expression, parse_expression
from .spaceform import SpaceFormParams, ranges

_TOP_KEYS = {"space_form", "curvature_order", "dimension"}
_SECTION_KEYS = {
    "domain": {"kind", "theta0", "h", "chart", "center", "mask_file", "origin", "radius"},
    "psi": {"expr"},
    "boundary": {"rho"},
    "subsolution": {"rho", "sphere", "file"},
    "exact": {"rho"},
    "solver": {
        "newton_tol", "max_newton", "dt_init", "dt_min", "dt_growth",
        "epsilon", "delta1", "delta2", "t_exponent", "eps_target_factor",
        "theta_N", "boundary_match_factor", "perturb_seed", "t_samples",
    },
}

# variables an expression may reference, per field role
_GEOM_VARS = {"rho", "u", "v", "gradnorm", "nu_rad"}


def _point_vars(n):
    out = {f"y{i+1}" for i in range(n)}
    out |= {f"p{i+1}" for i in range(n)}
    out |= {f"nu_tan{i+1}" for i in range(n)}
    return out


@dataclass
class ProblemFile:
    """Validated problem definition; `raw` preserves the original strings."""

    space_form: int
    curvature_order: int
    dimension: int
    domain: dict
    psi: Expression
    boundary: Expression
    subsolution: dict           # {"kind": "expr"|"sphere"|"file", ...}
    exact: Expression | None
    solver: dict
    raw: dict = dc_field(default_factory=dict)

    def to_json(self):
        return json.dumps(self.raw, indent=1)


def parse_problem(text) -> ProblemFile:
    """Parse and validate; raises ParseError / SemanticError with locations."""
    raw = {"_top": {}}
    section = "_top"
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ParseError("unterminated section header", line=lineno)
            section = stripped[1:-1].strip()
            if section not in _SECTION_KEYS:
                raise ParseError(f"unknown section [{section}]", line=lineno)
            raw.setdefault(section, {})
            continue
        if "=" not in stripped:
            raise ParseError("expected key = value", line=lineno)
        key, value = (s.strip() for s in stripped.split("=", 1))
        allowed = _TOP_KEYS if section == "_top" else _SECTION_KEYS[section]
        if key not in allowed:
            raise ParseError(f"unknown key {key!r} in [{section}]", line=lineno)
        if key in raw.get(section, {}):
            raise ParseError(f"duplicate key {key!r}", line=lineno)
        raw.setdefault(section, {})[key] = value
    return _validate(raw)


def _need(raw, section, key):
    if section not in raw or key not in raw[section]:
        raise SemanticError(f"missing required key {key!r} in [{section}]")
    return raw[section][key]


def _validate(raw) -> ProblemFile:
    top = raw.get("_top", {})
    if "space_form" not in top:
        raise SemanticError("missing required key 'space_form'")
    K = int(top["space_form"])
    if K not in (-1, 0, 1):
        raise SemanticError(f"space_form must be -1, 0 or 1, got {K}")
    n = int(top.get("dimension", 2))
    if n < 2:
        raise SemanticError("dimension must be >= 2")
    k = int(top.get("curvature_order", n))
    if not 1 <= k <= n:
        raise SemanticError(f"curvature_order {k} outside 1..{n}")

    dom_raw = raw.get("domain", {})
    kind = dom_raw.get("kind", "cap")
    if kind not in ("cap", "mask"):
        raise SemanticError(f"domain kind must be cap or mask, got {kind!r}")
    if "h" not in dom_raw:
        raise SemanticError("missing required key 'h' in [domain]")
    domain = {"kind": kind, "h": float(dom_raw["h"]), "chart": dom_raw.get("chart", "gnomonic")}
    if domain["chart"] not in (ch.GNOMONIC, ch.PLANE):
        raise SemanticError(f"chart must be gnomonic or plane, got {domain['chart']!r}")
    if kind == "cap":
        theta0 = float(_need(raw, "domain", "theta0"))
        if not 0.0 < theta0 < np.pi / 2:
            raise SemanticError(
                f"theta0={theta0} outside (0, pi/2): the domain may not contain a hemisphere"
            )
        domain["theta0"] = theta0
    else:
        domain["mask_file"] = _need(raw, "domain", "mask_file")
        domain["radius"] = float(dom_raw["radius"]) if "radius" in dom_raw else None
        if "origin" in dom_raw:
            domain["origin"] = [float(v) for v in dom_raw["origin"].split()]
    if "center" in dom_raw:
        domain["center"] = [float(v) for v in dom_raw["center"].split()]
        if len(domain["center"]) != n + 1:
            raise SemanticError(f"chart center needs {n + 1} components")

    psi = parse_expression(_need(raw, "psi", "expr"))
    boundary = parse_expression(_need(raw, "boundary", "rho"))
    allowed = _point_vars(n) | _GEOM_VARS
    for label, expr, extra in (("psi", psi, set()), ("boundary", boundary, set())):
        bad = expr.variables - allowed - extra
        if bad:
            raise SemanticError(f"[{label}] references unknown variable(s) {sorted(bad)}")
    # boundary / subsolution / exact are graphs over the chart: position only
    pos_only = _point_vars(n) - {f"p{i+1}" for i in range(n)} - {f"nu_tan{i+1}" for i in range(n)}
    for label, expr in (("boundary", boundary),):
        bad = expr.variables - pos_only
        if bad:
            raise SemanticError(f"[{label}] may only reference chart coordinates, not {sorted(bad)}")

    sub_raw = raw.get("subsolution", {})
    given = [key for key in ("rho", "sphere", "file") if key in sub_raw]
    if len(given) != 1:
        raise SemanticError("[subsolution] needs exactly one of rho = / sphere = / file =")
    if given[0] == "rho":
        expr = parse_expression(sub_raw["rho"])
        bad = expr.variables - pos_only
        if bad:
            raise SemanticError(
                f"[subsolution] may only reference chart coordinates, not {sorted(bad)}"
            )
        subsolution = {"kind": "expr", "expr": expr}
    elif given[0] == "sphere":
        vals = [float(v) for v in sub_raw["sphere"].split()]
        if len(vals) != n + 2:
            raise SemanticError(
                f"[subsolution] sphere needs R and {n + 1} center components"
            )
        subsolution = {"kind": "sphere", "radius": vals[0], "center": vals[1:]}
    else:
        subsolution = {"kind": "file", "path": sub_raw["file"]}

    exact = None
    if "exact" in raw and "rho" in raw["exact"]:
        exact = parse_expression(raw["exact"]["rho"])
        bad = exact.variables - pos_only
        if bad:
            raise SemanticError(f"[exact] may only reference chart coordinates, not {sorted(bad)}")

    solver = {}
    for key, val in raw.get("solver", {}).items():
        if key in ("max_newton", "t_exponent", "perturb_seed", "t_samples"):
            solver[key] = int(val)
        else:
            solver[key] = float(val)

    return ProblemFile(
        space_form=K, curvature_order=k, dimension=n, domain=domain,
        psi=psi, boundary=boundary, subsolution=subsolution, exact=exact,
        solver=solver, raw=raw,
    )


def load_problem(path) -> ProblemFile:
    with open(path) as fh:
        return parse_problem(fh.read())


# ---------------------------------------------------------------------------
# mask files

def load_mask(path):
    """Mask file: header lines `h`, `origin`, `rows`, `cols`, then 0/1 rows."""
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    header = {}
    i = 0
    while i < len(raw) and raw[i][0].isalpha():
        parts = raw[i].split()
        header[parts[0]] = parts[1:]
        i += 1
    h = float(header["h"][0])
    origin = [float(v) for v in header["origin"]]
    rows = int(header["rows"][0])
    cols = int(header["cols"][0])
    grid_rows = raw[i : i + rows]
    if len(grid_rows) != rows:
        raise ParseError(f"mask file lists {len(grid_rows)} rows, header says {rows}")
    mask = np.zeros((rows, cols), dtype=bool)
    for r, row in enumerate(grid_rows):
        if len(row) != cols:
            raise ParseError(f"mask row {r} has {len(row)} columns, header says {cols}")
        mask[r] = np.array([c == "1" for c in row])
    return mask, h, np.asarray(origin)


# ---------------------------------------------------------------------------
# assembly

def _chart_point_env(grid):
    env = {}
    for i in range(grid.dim):
        env[f"y{i+1}"] = grid.coords[:, i]
    return env


def sphere_builder_rho(grid, radius, center):
    """Radial graph of the ambient-coordinate sphere |x - c| = R over the chart."""
    z = ch.embed(grid.chart, grid.coords)
    c = np.asarray(center, dtype=float)
    cz = z @ c
    disc = radius**2 - float(c @ c) + cz**2
    if np.any(disc <= 0.0):
        raise SemanticError("sphere builder: some rays miss the sphere (discriminant <= 0)")
    rho = cz + np.sqrt(disc)
    if np.any(rho <= 0.0):
        raise SemanticError("sphere builder produced non-positive radial values")
    return rho


def build_grid(pf: ProblemFile, h_override=None) -> grids.Grid:
    h = float(h_override) if h_override is not None else pf.domain["h"]
    center = np.asarray(pf.domain["center"]) if "center" in pf.domain else None
    if pf.domain["kind"] == "cap":
        if pf.domain["chart"] != ch.GNOMONIC:
            raise SemanticError("cap domains use the gnomonic chart")
        return grids.build_cap_domain(pf.domain["theta0"], h, n=pf.dimension, center=center)
    mask, h_mask, origin = load_mask(pf.domain["mask_file"])
    if h_override is not None:
        raise SemanticError("h override is not supported for mask domains")
    chart = (
        ch.gnomonic_chart(pf.dimension, center)
        if pf.domain["chart"] == ch.GNOMONIC
        else ch.plane_chart(pf.dimension)
    )
    return grids.build_from_mask(
        mask, h_mask, pf.domain.get("origin", origin), chart=chart,
        max_radius=pf.domain.get("radius"),
    )


def build_problem(pf: ProblemFile, h_override=None):
    """ProblemFile -> (ProblemSpec, HomotopyConfig, exact rho array or None)."""
    grid = build_grid(pf, h_override)
    sf = SpaceFormParams(pf.space_form)
    env = _chart_point_env(grid)
    rho_data = pf.boundary.evaluate(env) + np.zeros(grid.n_nodes)
    _range_check_rho(sf, rho_data, "boundary")
    if pf.subsolution["kind"] == "expr":
        rho_sub = pf.subsolution["expr"].evaluate(env) + np.zeros(grid.n_nodes)
    elif pf.subsolution["kind"] == "sphere":
        rho_sub = sphere_builder_rho(grid, pf.subsolution["radius"], pf.subsolution["center"])
    else:
        _, fld, _ = grids.load_grid(pf.subsolution["path"])
        if fld is None or fld.representation != "rho":
            raise SemanticError("subsolution grid file must carry a rho-representation field")
        if fld.values.shape[0] != grid.n_nodes:
            raise SemanticError("subsolution grid file does not match the problem grid")
        rho_sub = fld.values
    _range_check_rho(sf, rho_sub, "subsolution")
    spec = ProblemSpec(
        sf=sf, k=pf.curvature_order, grid=grid,
        psi_sigma=pf.psi.evaluate,
        boundary_rho=rho_data, subsolution_rho=rho_sub,
    )
    cfg = HomotopyConfig(**pf.solver)
    exact = pf.exact.evaluate(env) + np.zeros(grid.n_nodes) if pf.exact is not None else None
    return spec, cfg, exact


def _range_check_rho(sf, rho, label):
    upper = ranges(sf).rho_upper
    if np.any(rho <= 0.0) or (np.isfinite(upper) and np.any(rho >= upper)):
        raise SemanticError(f"[{label}] leaves the range (0, {upper}) for K={sf.K}")
