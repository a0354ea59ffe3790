"""CSV emission for record dataclasses (exact float round trip) and run metadata."""

import csv
import dataclasses
import json
import math
import platform

import numba
import numpy as np

from .. import __version__


def _format(value):
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return repr(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _parse(text, kind):
    if kind is float:
        return float(text)
    if kind is int:
        return int(text)
    if kind is bool:
        return text == "True"
    return text


def write_records(path, records, cls):
    names = [f.name for f in dataclasses.fields(cls)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for rec in records:
            w.writerow([_format(getattr(rec, n)) for n in names])


def read_records(path, cls):
    fields = dataclasses.fields(cls)
    kinds = {f.name: _KINDS.get(f.type, str) for f in fields}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != [f.name for f in fields]:
            raise ValueError(f"{path}: columns {reader.fieldnames} do not match {cls.__name__}")
        return [cls(**{k: _parse(v, kinds[k]) for k, v in row.items()}) for row in reader]


_KINDS = {float: float, int: int, bool: bool, str: str, "float": float, "int": int, "bool": bool, "str": str}


def build_id():
    return {
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "numba": numba.__version__,
        "machine": platform.machine(),
    }


def write_metadata(path, command, config, seed, extra=None):
    doc = {"command": command, "seed": seed, "config": config, "build": build_id()}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
