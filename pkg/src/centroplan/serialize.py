"""Canonical document serialization: sorted keys, 17-significant-digit floats.

All on-disk YAML documents go through :func:`canonical_yaml` so that
re-running a command with identical inputs produces byte-identical files.
"""

from __future__ import annotations

import csv
import io

import numpy as np
import yaml

__all__ = ["canonical_yaml", "load_yaml", "write_csv", "to_plain"]


class _CanonicalDumper(yaml.SafeDumper):
    pass


def _float_representer(dumper, value):
    if value != value:  # NaN
        return dumper.represent_scalar("tag:yaml.org,2002:float", ".nan")
    if value in (float("inf"), float("-inf")):
        text = ".inf" if value > 0 else "-.inf"
        return dumper.represent_scalar("tag:yaml.org,2002:float", text)
    text = format(value, ".17g")
    # make sure the scalar stays a YAML float
    if not any(c in text for c in ".eE") and "inf" not in text and "nan" not in text:
        text += ".0"
    return dumper.represent_scalar("tag:yaml.org,2002:float", text)


_CanonicalDumper.add_representer(float, _float_representer)


def to_plain(obj):
    """Recursively convert numpy containers/scalars to plain Python types."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_yaml(doc) -> str:
    """Serialize a document deterministically (sorted keys, fixed float format)."""
    return yaml.dump(
        to_plain(doc),
        Dumper=_CanonicalDumper,
        sort_keys=True,
        default_flow_style=False,
        width=100000,
    )


def load_yaml(text_or_stream):
    return yaml.safe_load(text_or_stream)


def write_csv(path, header, rows):
    """CSV with a fixed float format matching the YAML serializer."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(
            [format(v, ".17g") if isinstance(v, (float, np.floating)) else v for v in row]
        )
    with open(path, "w") as fh:
        fh.write(buf.getvalue())
