"""Scenario files: parsing, validation, canonical formatting.

A scenario is a YAML document.  Complex numbers are written ``a+bi``;
matrices are row-major lists of rows; an element is a list of blocks, the
word ``identity``, or ``{unit: [block, i, j]}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from . import gallery
from .algebra import Algebra, Element, make_algebra
from .errors import NotCertifiedPositive, ParseError, ShapeMismatch, ValidationError
from .superop import SuperOp, certify, from_kraus, from_matrix

ANALYSES = (
    "classify_mixing",
    "classify_completely_mixing",
    "rho_bar",
    "smoothing_profile",
    "dichotomy",
    "verify_ksn",
    "spectrum",
)
RANDOMIZED = {"classify_completely_mixing", "rho_bar", "verify_ksn"}
ELEMENT_ANALYSES = {"smoothing_profile", "dichotomy", "verify_ksn"}

DEFAULT_TOLERANCES = {
    "hermitian": 1e-10,
    "positivity": 1e-8,
    "contraction": 1e-9,
    "mixing": 1e-8,
    "decay": 1e-9,
    "fixed_point": 1e-8,
    "stop": 1e-12,
}

_ANALYSIS_PARAMS = {
    "classify_mixing": set(),
    "classify_completely_mixing": set(),
    "rho_bar": {"method"},
    "smoothing_profile": {"element", "deltas", "n_max"},
    "dichotomy": {"element", "n_max"},
    "verify_ksn": {"element", "n_max"},
    "spectrum": set(),
}


def parse_complex(token) -> complex:
    """Parse ``a+bi``, ``a``, ``bi`` (and plain numbers) into a complex."""
    if isinstance(token, bool):
        raise ValidationError(f"not a number: {token!r}")
    if isinstance(token, (int, float)):
        return complex(float(token), 0.0)
    if not isinstance(token, str):
        raise ValidationError(f"not a complex number: {token!r}")
    s = token.strip().replace(" ", "")
    try:
        return complex(float(s), 0.0)
    except ValueError:
        pass
    if s.endswith("i"):
        try:
            return complex(s[:-1] + "j")
        except ValueError:
            body = s[:-1]
            if body in ("", "+", "-"):
                return complex(0.0, -1.0 if body == "-" else 1.0)
            if body[-1] in "+-":
                try:
                    return complex(body + "1j")
                except ValueError:
                    pass
    raise ValidationError(f"not a complex number: {token!r}")


def format_complex(z: complex) -> str:
    re_, im = float(z.real), float(z.imag)
    sign = "-" if (im < 0 or (im == 0 and np.signbit(im))) else "+"
    return f"{re_!r}{sign}{abs(im)!r}i"


def _matrix(rows, where: str) -> np.ndarray:
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ValidationError(f"{where}: expected a list of rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValidationError(f"{where}: rows of unequal length")
    try:
        return np.array([[parse_complex(t) for t in r] for r in rows], dtype=np.complex128)
    except ValidationError as e:
        raise ValidationError(f"{where}: {e}") from None


def _format_matrix(m) -> list:
    return [[format_complex(z) for z in row] for row in np.asarray(m)]


def _tupled(m: np.ndarray):
    return tuple(tuple(complex(z) for z in row) for row in m)


# -- model --------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioSpec:
    algebra: Optional[dict]
    map: dict
    initial_elements: dict = field(default_factory=dict)
    analyses: tuple = ()
    tolerances: dict = field(default_factory=dict)
    seed: Optional[int] = None
    outputs: dict = field(default_factory=dict)

    def resolved_tolerances(self) -> dict:
        out = dict(DEFAULT_TOLERANCES)
        out.update(self.tolerances)
        return out


def _element_spec(raw, where):
    if raw == "identity":
        return ("identity",)
    if isinstance(raw, dict) and set(raw) == {"unit"}:
        u = raw["unit"]
        if not (isinstance(u, list) and len(u) == 3 and all(isinstance(k, int) and k >= 0 for k in u)):
            raise ValidationError(f"{where}: unit needs [block, i, j]")
        return ("unit", tuple(u))
    if isinstance(raw, list):
        return ("blocks", tuple(_tupled(_matrix(b, f"{where}[{k}]")) for k, b in enumerate(raw)))
    raise ValidationError(f"{where}: element must be 'identity', {{unit: [b, i, j]}} or a list of blocks")


def _element_doc(spec):
    if spec[0] == "identity":
        return "identity"
    if spec[0] == "unit":
        return {"unit": list(spec[1])}
    return [_format_matrix(b) for b in spec[1]]


def _map_spec(raw):
    if not isinstance(raw, dict) or len(raw) != 1:
        raise ValidationError("map: exactly one of kraus, matrix, gallery is required")
    (kind, body), = raw.items()
    if kind == "gallery":
        if not isinstance(body, dict) or "name" not in body:
            raise ValidationError("map.gallery needs a name")
        params = body.get("params") or {}
        if not isinstance(params, dict):
            raise ValidationError("map.gallery.params must be a mapping")
        spec = gallery.GallerySpec(str(body["name"]), dict(params))
        gallery.validate_spec(spec)
        if spec.name in ("truncated_shift", "diagonal_expectation") and "n" not in params:
            raise ValidationError(f"map.gallery: {spec.name} needs parameter n")
        return {"gallery": {"name": spec.name, "params": tuple(sorted(params.items()))}}
    if kind == "kraus":
        if not isinstance(body, dict) or "operators" not in body:
            raise ValidationError("map.kraus needs operators")
        ops = []
        for k, op in enumerate(body["operators"]):
            where = f"map.kraus.operators[{k}]"
            if isinstance(op, dict) and set(op) == {"full"}:
                ops.append(("full", _tupled(_matrix(op["full"], where))))
            elif isinstance(op, list):
                ops.append(("blocks", tuple(_tupled(_matrix(b, f"{where}[{j}]")) for j, b in enumerate(op))))
            else:
                raise ValidationError(f"{where}: operator must be a list of blocks or {{full: matrix}}")
        return {"kraus": {"operators": tuple(ops), "scale": float(body.get("scale", 1.0))}}
    if kind == "matrix":
        return {"matrix": _tupled(_matrix(body, "map.matrix"))}
    raise ValidationError(f"map: unknown kind {kind!r}")


def _map_doc(m):
    (kind, body), = m.items()
    if kind == "gallery":
        out = {"name": body["name"]}
        if body["params"]:
            out["params"] = dict(body["params"])
        return {"gallery": out}
    if kind == "kraus":
        ops = []
        for tag, data in body["operators"]:
            ops.append({"full": _format_matrix(data)} if tag == "full" else [_format_matrix(b) for b in data])
        return {"kraus": {"operators": ops, "scale": body["scale"]}}
    return {"matrix": _format_matrix(body)}


def from_document(doc) -> ScenarioSpec:
    if not isinstance(doc, dict):
        raise ValidationError("scenario must be a mapping")
    unknown = set(doc) - {"algebra", "map", "initial_elements", "analyses", "tolerances", "seed", "outputs"}
    if unknown:
        raise ValidationError(f"unknown scenario keys: {sorted(unknown)}")
    alg = doc.get("algebra")
    if alg is not None:
        if not isinstance(alg, dict) or "dims" not in alg or "weights" not in alg:
            raise ValidationError("algebra needs dims and weights")
        alg = {"dims": tuple(alg["dims"]), "weights": tuple(float(w) for w in alg["weights"]),
               "normalize": bool(alg.get("normalize", False))}
        make_algebra(alg["dims"], alg["weights"], alg["normalize"])
    if "map" not in doc:
        raise ValidationError("scenario needs a map")
    mp = _map_spec(doc["map"])
    elements = {}
    for name, raw in (doc.get("initial_elements") or {}).items():
        elements[str(name)] = _element_spec(raw, f"initial_elements.{name}")
    analyses = []
    for k, item in enumerate(doc.get("analyses") or []):
        if isinstance(item, str):
            name, params = item, {}
        elif isinstance(item, dict) and len(item) == 1:
            (name, params), = item.items()
            params = params or {}
        else:
            raise ValidationError(f"analyses[{k}]: expected a name or {{name: params}}")
        if name not in ANALYSES:
            raise ValidationError(f"analyses[{k}]: unknown analysis {name!r}")
        extra = set(params) - _ANALYSIS_PARAMS[name]
        if extra:
            raise ValidationError(f"analyses[{k}]: {name} does not accept {sorted(extra)}")
        if "element" in params and params["element"] not in elements:
            raise ValidationError(f"analyses[{k}]: unknown element {params['element']!r}")
        if name in ELEMENT_ANALYSES and "element" not in params and not elements:
            raise ValidationError(f"analyses[{k}]: {name} needs an initial element")
        if name == "rho_bar" and params.get("method", "spectral") not in ("spectral", "search"):
            raise ValidationError(f"analyses[{k}]: rho_bar method must be spectral or search")
        if "deltas" in params:
            params = dict(params, deltas=tuple(float(d) for d in params["deltas"]))
        analyses.append((name, tuple(sorted(params.items()))))
    tols = {}
    for name, value in (doc.get("tolerances") or {}).items():
        if name not in DEFAULT_TOLERANCES:
            raise ValidationError(f"tolerances: unknown name {name!r}")
        tols[name] = float(value)
    seed = doc.get("seed")
    if seed is not None:
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
    outputs = dict(doc.get("outputs") or {})
    spec = ScenarioSpec(alg, mp, elements, tuple(analyses), tols, seed, outputs)
    _check_consistency(spec)
    return spec


def _check_consistency(spec: ScenarioSpec):
    alg = resolve_algebra(spec)
    needs_seed = any(a[0] in RANDOMIZED for a in spec.analyses)
    if "gallery" in spec.map and spec.map["gallery"]["name"] == "random_positive_contraction":
        needs_seed = needs_seed or "seed" not in dict(spec.map["gallery"]["params"])
    if needs_seed and spec.seed is None:
        raise ValidationError("seed is required when randomized analyses are requested")
    if "matrix" in spec.map and len(spec.map["matrix"]) != alg.coord_dim:
        raise ShapeMismatch(f"map.matrix must be {alg.coord_dim}x{alg.coord_dim}")
    for name, el in spec.initial_elements.items():
        build_element(el, alg)


def to_document(spec: ScenarioSpec) -> dict:
    doc = {}
    if spec.algebra is not None:
        doc["algebra"] = {"dims": list(spec.algebra["dims"]), "weights": list(spec.algebra["weights"]),
                          "normalize": spec.algebra["normalize"]}
    doc["map"] = _map_doc(spec.map)
    if spec.initial_elements:
        doc["initial_elements"] = {k: _element_doc(v) for k, v in spec.initial_elements.items()}
    doc["analyses"] = [name if not params else {name: {k: list(v) if isinstance(v, tuple) else v
                                                       for k, v in params}}
                       for name, params in spec.analyses]
    if spec.tolerances:
        doc["tolerances"] = dict(spec.tolerances)
    if spec.seed is not None:
        doc["seed"] = spec.seed
    if spec.outputs:
        doc["outputs"] = dict(spec.outputs)
    return doc


def dumps(spec: ScenarioSpec) -> str:
    return yaml.safe_dump(to_document(spec), sort_keys=False, default_flow_style=None, width=100)


def loads(text: str) -> ScenarioSpec:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        if mark is not None:
            raise ParseError(f"malformed scenario: {getattr(e, 'problem', e)}", mark.line + 1, mark.column + 1) from None
        raise ParseError(f"malformed scenario: {e}") from None
    return from_document(doc)


def load(path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


# -- instantiation ------------------------------------------------------------------

def resolve_algebra(spec: ScenarioSpec) -> Algebra:
    forced = None
    if "gallery" in spec.map:
        g = spec.map["gallery"]
        forced = gallery.gallery_algebra(gallery.GallerySpec(g["name"], dict(g["params"])))
    given = None
    if spec.algebra is not None:
        given = make_algebra(spec.algebra["dims"], spec.algebra["weights"], spec.algebra["normalize"])
    if forced is not None:
        if given is not None and given != forced:
            raise ValidationError(f"algebra {given.to_dict()} does not match the construction's {forced.to_dict()}")
        return forced
    if given is None:
        raise ValidationError("scenario needs an algebra")
    return given


def build_element(spec, alg: Algebra) -> Element:
    if spec[0] == "identity":
        return alg.identity()
    if spec[0] == "unit":
        b, i, j = spec[1]
        if b >= alg.n_blocks or i >= alg.dims[b] or j >= alg.dims[b]:
            raise ShapeMismatch(f"unit {list(spec[1])} outside the algebra")
        return alg.unit(b, i, j)
    return Element(alg, tuple(np.array(b, dtype=np.complex128) for b in spec[1]))


def build_map(spec: ScenarioSpec, alg: Algebra, seed: Optional[int] = None) -> SuperOp:
    (kind, body), = spec.map.items()
    if kind == "gallery":
        return gallery.build(gallery.GallerySpec(body["name"], dict(body["params"])), alg, seed)
    if kind == "kraus":
        ops = []
        for tag, data in body["operators"]:
            if tag == "full":
                ops.append(np.array(data, dtype=np.complex128))
            else:
                ops.append(Element(alg, tuple(np.array(b, dtype=np.complex128) for b in data)))
        return from_kraus(alg, ops, body["scale"])
    T = from_matrix(alg, np.array(body, dtype=np.complex128))
    try:
        return certify(T)
    except NotCertifiedPositive:
        return T
