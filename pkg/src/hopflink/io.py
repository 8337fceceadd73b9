"""File formats: stable JSON, npz lattices with a JSON header, OBJ polylines, manifold specs."""
from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .current import CurrentLattice, JacobianLattice, OmegaLattice
from .defects import DefectCurve
from .fieldlab import DirectionLattice, GridSpec, UnitSphereLattice, VectorLattice
from .linking import ParametricManifold, RoundSphere, polyline_manifold, torus_link_curve

LATTICE_TYPES = {
    cls.__name__: cls
    for cls in (VectorLattice, UnitSphereLattice, DirectionLattice, CurrentLattice, OmegaLattice, JacobianLattice)
}


# --------------------------------------------------------------------------
# stable JSON


def _encode(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or obj is True or obj is False:
        return json.dumps(obj)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return json.dumps(str(x))
        text = format(x, ".17g")
        return text if any(ch in text for ch in ".e") else text + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number, bool)) or v is None for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "to_dict"):
        return _encode(obj.to_dict(), indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_stable(obj: Any, indent: int = 2) -> str:
    """JSON with every float written at 17 significant digits; byte-stable for equal inputs."""
    return _encode(obj, indent, 0) + "\n"


def write_json(path: str | os.PathLike, obj: Any) -> None:
    Path(path).write_text(dumps_stable(obj))


def read_json(path: str | os.PathLike) -> Any:
    return json.loads(Path(path).read_text())


# --------------------------------------------------------------------------
# lattices


def save_lattice(path: str | os.PathLike, lattice, config: dict | None = None) -> None:
    header = {
        "type": type(lattice).__name__,
        "grid": lattice.grid.to_dict(),
        "version": __version__,
        "config": config,
    }
    arrays = {"values": np.asarray(lattice.values)}
    bv = getattr(lattice, "boundary_value", None)
    if bv is not None:
        arrays["boundary_value"] = np.asarray(bv)
    mask = getattr(lattice, "mask", None)
    if mask is not None:
        arrays["mask"] = np.asarray(mask)
    if isinstance(lattice, DirectionLattice):
        header["floor"] = lattice.floor
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(dumps_stable(header)), **arrays)


def load_lattice(path: str | os.PathLike):
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        cls = LATTICE_TYPES[header["type"]]
        grid = GridSpec.from_dict(header["grid"])
        kw = {}
        if "boundary_value" in z.files:
            kw["boundary_value"] = z["boundary_value"]
        if "mask" in z.files:
            kw["mask"] = z["mask"]
        if "floor" in header:
            kw["floor"] = header["floor"]
        return cls(grid, z["values"], **kw)


# --------------------------------------------------------------------------
# curves


def curves_to_dict(curves: list[DefectCurve]) -> dict:
    return {"version": __version__, "curves": [c.to_dict() for c in curves]}


def curves_from_dict(d: dict) -> list[DefectCurve]:
    return [DefectCurve.from_dict(c) for c in d["curves"]]


def obj_polylines(curves: list[DefectCurve], include_pushoffs: bool = False) -> str:
    """Wavefront OBJ text: ``v`` vertices and one ``l`` element per curve."""
    lines, base = [], 1
    items = []
    for i, c in enumerate(curves):
        items.append((f"defect_{i}", c))
        if include_pushoffs and c.pushoff is not None:
            items.append((f"pushoff_{i}", c.pushoff))
    for name, c in items:
        lines.append(f"o {name}")
        for v in c.vertices:
            lines.append("v " + " ".join(format(float(x), ".17g") for x in v))
        idx = list(range(base, base + len(c)))
        if c.closed:
            idx.append(base)
        lines.append("l " + " ".join(map(str, idx)))
        base += len(c)
    return "\n".join(lines) + "\n"


def read_obj_polylines(text: str) -> list[np.ndarray]:
    """Vertex arrays of every ``l`` element; a repeated first index marks a closed loop and is dropped."""
    verts, out = [], []
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "l":
            idx = [int(x.split("/")[0]) - 1 for x in parts[1:]]
            if len(idx) > 2 and idx[0] == idx[-1]:
                idx = idx[:-1]
            out.append(np.array([verts[i] for i in idx]))
    return out


# --------------------------------------------------------------------------
# manifolds


def manifold_from_dict(d: dict) -> ParametricManifold:
    kind = d.get("kind", "polyline")
    if kind == "polyline":
        man = polyline_manifold(np.asarray(d["vertices"], float), int(d.get("points_per_segment", 4)))
    elif kind == "sphere":
        res = d.get("resolution")
        man = RoundSphere(d["center"], float(d["radius"]), d["axes"], None if res is None else tuple(res))
    elif kind == "torus_link":
        man = torus_link_curve(int(d["component"]), int(d.get("p", 2)), int(d.get("q", 4)), float(d.get("R", 2.0)), float(d.get("r", 1.0)))
    else:
        raise ValueError(f"unknown manifold kind {kind!r}")
    if d.get("reversed"):
        man = man.reversed()
    return man


def load_manifold(path: str | os.PathLike) -> ParametricManifold:
    p = Path(path)
    if p.suffix.lower() == ".obj":
        lines = read_obj_polylines(p.read_text())
        if len(lines) != 1:
            raise ValueError(f"{p} holds {len(lines)} polylines; expected one")
        return polyline_manifold(lines[0])
    return manifold_from_dict(read_json(p))
