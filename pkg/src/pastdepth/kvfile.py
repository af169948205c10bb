"""Tiny key-value text format used by camera, pose and scene descriptors.

One ``key = value`` pair per line.  Blank lines and lines starting with
``#`` are skipped.  Keys may repeat; every occurrence is kept in order so
list-valued fields (scene boxes, route points) stay cheap to express.
"""

from __future__ import annotations

from .errors import FormatError


def parse_kv_text(text: str, source: str = "<string>") -> list[tuple[str, str]]:
    """Parse descriptor text into an ordered (key, value) list."""
    pairs: list[tuple[str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise FormatError(f"{source}:{lineno}: empty key")
        pairs.append((key, value))
    return pairs


def read_kv_file(path) -> list[tuple[str, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_kv_text(fh.read(), source=str(path))


def kv_to_dict(pairs: list[tuple[str, str]], source: str = "<string>") -> dict[str, str]:
    """Collapse pairs to a dict, rejecting duplicate keys."""
    out: dict[str, str] = {}
    for key, value in pairs:
        if key in out:
            raise FormatError(f"{source}: duplicate key {key!r}")
        out[key] = value
    return out


def require_keys(d: dict[str, str], keys: tuple[str, ...], source: str) -> None:
    missing = [k for k in keys if k not in d]
    if missing:
        raise FormatError(f"{source}: missing keys: {', '.join(missing)}")


def parse_float(d: dict[str, str], key: str, source: str) -> float:
    try:
        return float(d[key])
    except ValueError:
        raise FormatError(f"{source}: key {key!r} is not a number: {d[key]!r}") from None


def parse_int(d: dict[str, str], key: str, source: str) -> int:
    try:
        return int(d[key])
    except ValueError:
        raise FormatError(f"{source}: key {key!r} is not an integer: {d[key]!r}") from None
