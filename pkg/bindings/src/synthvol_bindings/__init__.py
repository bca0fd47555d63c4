"""Seeded, iterable batch source over the synthvol generator.

A thin in-process bridge for training loops: same JSON config as the CLI,
same batch order (iteration-major, subjects sorted), and bit-identical
values - every array is produced by the synthvol engine itself, exposed
as a read-only numpy view of the bundle volumes (zero-copy).

    it = open_generator("config.json", "subjects/", iterations=10)
    for batch in it:
        for input_array, targets, provenance in batch:
            ...

Target arrays are keyed by the same stems the CLI uses for its NIfTI
export (seg, atlas_coords, bias, dist_<name>, <modality>), so a training
pipeline can switch between file-based and in-process feeding without
remapping anything.
"""

from pathlib import Path

from synthvol.config import load_config
from synthvol.errors import InputError
from synthvol.generator import generate_batch, load_subject

__version__ = "0.1.0"

__all__ = ["BatchIterator", "open_generator", "next_batch"]


def _as_arrays(bundle):
    """(input array, target arrays, provenance) for one sample; views, not copies."""
    targets = {"seg": bundle.targets.seg.labels,
               "atlas_coords": bundle.targets.atlas_coords.data,
               "bias": bundle.targets.bias_gt.data}
    for name, vol in sorted(bundle.targets.dist.items()):
        targets[f"dist_{name}"] = vol.data
    for name, vol in sorted(bundle.targets.modality_targets.items()):
        targets[name] = vol.data
    return bundle.input.data, targets, bundle.provenance


class BatchIterator:
    """Iterates (iteration, subject) batches in the CLI's canonical order."""

    def __init__(self, config, subject_dirs, iterations, threads=1):
        self.config = config
        self._subject_dirs = list(subject_dirs)
        self._subjects = {}
        self.iterations = iterations
        self.threads = threads
        self._cursor = 0

    def __len__(self):
        return self.iterations * len(self._subject_dirs)

    def __iter__(self):
        return self

    def _subject(self, path):
        if path not in self._subjects:
            self._subjects[path] = load_subject(path)
        return self._subjects[path]

    def __next__(self):
        if self._cursor >= len(self):
            raise StopIteration
        iteration, index = divmod(self._cursor, len(self._subject_dirs))
        self._cursor += 1
        subject = self._subject(self._subject_dirs[index])
        bundles = generate_batch(subject, self.config, iteration, threads=self.threads)
        return [_as_arrays(b) for b in bundles]


def open_generator(config_path, subjects_dir, iterations: int = 1,
                   threads: int = 1) -> BatchIterator:
    """Build a BatchIterator from the CLI's JSON config and subject layout."""
    config = load_config(config_path)
    subjects_dir = Path(subjects_dir)
    if not subjects_dir.is_dir():
        raise InputError(f"{subjects_dir}: not a directory")
    dirs = sorted(p for p in subjects_dir.iterdir() if p.is_dir())
    if not dirs:
        raise InputError(f"{subjects_dir}: contains no subject directories")
    return BatchIterator(config, dirs, iterations, threads)


def next_batch(iterator: BatchIterator):
    """Advance the iterator one batch; StopIteration signals exhaustion."""
    return next(iterator)
