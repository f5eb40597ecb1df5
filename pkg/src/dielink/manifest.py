"""Dataset manifests: ``coin_id,image_path,die_label,dataset_id`` CSV files."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from .cluster import Partition

FIELDS = ["coin_id", "image_path", "die_label", "dataset_id"]
UNKNOWN = "unknown"


class ManifestError(ValueError):
    """Validation failure; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class Entry:
    coin_id: str
    image_path: Path
    die_label: str = UNKNOWN


@dataclass
class Manifest:
    dataset_id: str
    entries: list = field(default_factory=list)

    @property
    def ids(self) -> list:
        return [e.coin_id for e in self.entries]

    @property
    def n_pairs(self) -> int:
        n = len(self.entries)
        return n * (n - 1) // 2

    def labeled(self) -> list:
        return [e for e in self.entries if e.die_label != UNKNOWN]

    def truth(self) -> Partition:
        """Ground-truth partition over the labeled coins."""
        return Partition({e.coin_id: e.die_label for e in self.labeled()})

    @property
    def n_links(self) -> int:
        return self.truth().n_positive_pairs()

    def items(self) -> list:
        return [(e.coin_id, e.image_path) for e in self.entries]

    def summary(self) -> dict:
        return {"dataset_id": self.dataset_id, "n_coins": len(self.entries),
                "n_pairs": self.n_pairs, "n_labeled": len(self.labeled()),
                "n_links": self.n_links}

    def write(self, path) -> None:
        """Write the manifest with image paths relative to its directory when possible."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        base = path.parent.resolve()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(FIELDS)
            for e in self.entries:
                p = Path(e.image_path).resolve()
                try:
                    p = p.relative_to(base)
                except ValueError:
                    pass
                w.writerow([e.coin_id, p.as_posix(), e.die_label, self.dataset_id])


def ingest(path, check_files: bool = True) -> Manifest:
    """Read and validate a manifest.

    Relative image paths are resolved against the manifest's directory.
    Every problem (missing columns, malformed rows, duplicate ids, missing
    files, mixed dataset ids) is collected before raising ManifestError.
    """
    path = Path(path)
    errors = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ManifestError([f"cannot open manifest {path}: {exc}"]) from exc
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing_cols = [c for c in FIELDS[:2] if c not in header]
        if missing_cols:
            raise ManifestError([f"missing column(s): {', '.join(missing_cols)}"])
        rows = list(reader)

    entries, seen, dataset_ids = [], set(), set()
    for lineno, row in enumerate(rows, start=2):
        cid = (row.get("coin_id") or "").strip()
        img = (row.get("image_path") or "").strip()
        if None in row or not cid or not img:
            errors.append(f"line {lineno}: malformed row")
            continue
        if cid in seen:
            errors.append(f"line {lineno}: duplicate coin_id {cid!r}")
            continue
        seen.add(cid)
        p = Path(img)
        if not p.is_absolute():
            p = path.parent / p
        if check_files and not p.is_file():
            errors.append(f"line {lineno}: image not found for {cid!r}: {p}")
        label = (row.get("die_label") or "").strip() or UNKNOWN
        ds = (row.get("dataset_id") or "").strip()
        if ds:
            dataset_ids.add(ds)
        entries.append(Entry(cid, p, label))

    if len(dataset_ids) > 1:
        errors.append(f"several dataset ids in one manifest: {sorted(dataset_ids)}")
    if not entries and not errors:
        errors.append("manifest has no entries")
    if errors:
        raise ManifestError(errors)
    dataset_id = dataset_ids.pop() if dataset_ids else path.stem
    return Manifest(dataset_id, entries)


IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp")


def from_folders(root, dataset_id: str | None = None) -> Manifest:
    """Adapter for image folders laid out as ``root/<die_label>/<image>``.

    Images placed directly in ``root`` get the ``unknown`` label. Coin ids
    are file stems, prefixed with the folder name when stems collide.
    """
    root = Path(root)
    if not root.is_dir():
        raise ManifestError([f"not a directory: {root}"])
    files = sorted(p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise ManifestError([f"no images under {root}"])
    stems = [p.stem for p in files]
    entries = []
    for p in files:
        rel = p.relative_to(root)
        label = rel.parts[0] if len(rel.parts) > 1 else UNKNOWN
        cid = p.stem if stems.count(p.stem) == 1 else "_".join(rel.with_suffix("").parts)
        entries.append(Entry(cid, p, label))
    return Manifest(dataset_id or root.name, entries)
