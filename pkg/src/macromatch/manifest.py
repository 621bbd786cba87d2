"""Line-oriented corpus manifests.

Layout::

    MMAN1
    key=value            # parameter block, one per line
    <blank line>
    id<TAB>path<TAB>template_id<TAB>text_id[<TAB>member,member,..]

``-`` marks an absent optional field. Paths are relative to the manifest.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

MAGIC = "MMAN1"
VERSION = "1"


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Entry:
    target_id: str
    path: str
    template_id: int | None = None
    text_id: str | None = None
    members: tuple = ()


@dataclass
class Manifest:
    entries: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    version: str = VERSION
    root: Path = Path(".")

    @property
    def global_mean(self) -> float | None:
        v = self.params.get("global_mean")
        return None if v is None else float(v)

    def resolve(self, entry: Entry) -> Path:
        return self.root / entry.path

    def format(self) -> str:
        lines = [MAGIC, f"version={self.version}"]
        for key in sorted(self.params):
            lines.append(f"{key}={self.params[key]}")
        lines.append("")
        seen = set()
        for e in self.entries:
            if e.target_id in seen:
                raise ManifestError(f"duplicate id {e.target_id!r}")
            seen.add(e.target_id)
            row = [e.target_id, e.path,
                   "-" if e.template_id is None else str(e.template_id),
                   e.text_id or "-"]
            if e.members:
                row.append(",".join(e.members))
            lines.append("\t".join(row))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.format(), encoding="utf-8")


def load_manifest(path, check_files: bool = True) -> Manifest:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    if not lines or lines[0].strip() != MAGIC:
        raise ManifestError(f"{path}:1: expected '{MAGIC}' header")
    params = {}
    lineno = 1
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            break
        if line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ManifestError(f"{path}:{lineno}: expected key=value")
        params[key.strip()] = value.strip()
    else:
        lineno += 1
    version = params.pop("version", VERSION)

    entries, seen = [], set()
    for n, line in enumerate(lines[lineno:], start=lineno + 1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if not 2 <= len(cols) <= 5:
            raise ManifestError(f"{path}:{n}: expected 2-5 tab-separated fields")
        cols += ["-"] * (5 - len(cols))
        tid, rel, tpl, text, members = cols
        if tid in seen:
            raise ManifestError(f"{path}:{n}: duplicate id {tid!r}")
        seen.add(tid)
        try:
            tpl_id = None if tpl == "-" else int(tpl)
        except ValueError as exc:
            raise ManifestError(f"{path}:{n}: bad template id {tpl!r}") from exc
        if check_files and not (path.parent / rel).is_file():
            raise ManifestError(f"{path}:{n}: missing file {rel}")
        entries.append(Entry(tid, rel, tpl_id, None if text == "-" else text,
                             () if members == "-" else tuple(members.split(","))))
    return Manifest(entries, params, version, path.parent)
