"""Cohort loading, severity labels, and a deterministic synthetic cohort.

On-disk layout: one ``manifest.json`` mapping each patient id to five
per-band matrix CSVs (84 rows x 84 comma-separated decimals, no header)
plus a ``labels.csv`` with columns ``patient_id,nihss,stroke_side``.
Weights are serialized with 9 significant digits, so save -> load is an
exact round trip for cohorts produced by this module.

The synthetic generator substitutes for the private clinical cohort: it
plants a contiguous "lesion" node window whose intra-window coherence in
the alpha/beta bands is attenuated in proportion to the severity score,
which gives the downstream model a real, recoverable signal.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DataError, IngestError
from .graphs import (
    N_AREAS,
    BrodmannArea,
    ConnectivityMatrix,
    FrequencyBand,
    default_areas,
    validate_areas,
)

NIHSS_MIN, NIHSS_MAX = 2, 42

LOAD_SYMMETRY_TOL = 1e-6


class StrokeSide(Enum):
    left = "left"
    right = "right"
    unknown = "unknown"


class SeverityClass(Enum):
    """Coarse severity bins used for per-class error analysis (A < B < C)."""

    A = 0
    B = 1
    C = 2

    def __lt__(self, other: "SeverityClass") -> bool:
        return self.value < other.value


def class_of(nihss: int) -> SeverityClass:
    """Bin a severity score: A below 9, B in [9, 16), C at 16 and above."""
    if nihss < 0:
        raise ValueError(f"nihss must be non-negative, got {nihss}")
    if nihss < 9:
        return SeverityClass.A
    if nihss < 16:
        return SeverityClass.B
    return SeverityClass.C


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    matrices: dict[FrequencyBand, ConnectivityMatrix]
    nihss: int
    stroke_side: StrokeSide = StrokeSide.unknown

    def __post_init__(self):
        missing = [b.name for b in FrequencyBand if b not in self.matrices]
        if missing:
            raise DataError(f"patient {self.patient_id}: missing bands {missing}")
        if not NIHSS_MIN <= self.nihss <= NIHSS_MAX:
            raise DataError(
                f"patient {self.patient_id}: nihss {self.nihss} outside "
                f"clinical range {NIHSS_MIN}..{NIHSS_MAX}"
            )

    @property
    def severity_class(self) -> SeverityClass:
        return class_of(self.nihss)


@dataclass(frozen=True)
class Cohort:
    patients: tuple[PatientRecord, ...]
    areas: tuple[BrodmannArea, ...]

    def __post_init__(self):
        validate_areas(self.areas)
        ids = [p.patient_id for p in self.patients]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate patient ids in cohort")
        n = len(self.areas)
        for p in self.patients:
            for band, m in p.matrices.items():
                if m.n_nodes != n:
                    raise DataError(
                        f"patient {p.patient_id} band {band.name}: matrix is "
                        f"{m.n_nodes}x{m.n_nodes}, cohort has {n} areas"
                    )

    def __len__(self) -> int:
        return len(self.patients)

    def class_histogram(self) -> dict[str, int]:
        hist = {c.name: 0 for c in SeverityClass}
        for p in self.patients:
            hist[p.severity_class.name] += 1
        return hist


# ---------------------------------------------------------------------------
# Disk format
# ---------------------------------------------------------------------------

def _format_weight(x: float) -> str:
    return f"{x:.9g}"


def _write_matrix_csv(path: Path, weights: np.ndarray) -> None:
    lines = [",".join(_format_weight(x) for x in row) for row in weights]
    path.write_text("\n".join(lines) + "\n")


def _read_matrix_csv(path: Path, n_expected: int) -> np.ndarray:
    rows = []
    for line in path.read_text().splitlines():
        if line.strip():
            rows.append([float(cell) for cell in line.split(",")])
    arr = np.array(rows, dtype=float)
    if arr.ndim != 2 or arr.shape != (n_expected, n_expected):
        raise DataError(
            f"{path.name}: expected {n_expected}x{n_expected}, got {arr.shape}"
        )
    return arr


def _symmetrize(raw: np.ndarray, origin: str) -> np.ndarray:
    """Average out serialization noise up to the load tolerance, reject beyond."""
    asym = float(np.max(np.abs(raw - raw.T), initial=0.0))
    if asym > LOAD_SYMMETRY_TOL:
        raise DataError(f"{origin}: asymmetry {asym:.3g} exceeds {LOAD_SYMMETRY_TOL}")
    return (raw + raw.T) / 2.0


def save_cohort(cohort: Cohort, out_dir: str | Path) -> Path:
    """Write manifest, per-band matrices, and labels; returns the manifest path."""
    out = Path(out_dir)
    (out / "matrices").mkdir(parents=True, exist_ok=True)
    manifest: dict = {"labels": "labels.csv", "patients": {}}
    label_rows = []
    for p in cohort.patients:
        band_paths = {}
        for band in FrequencyBand:
            rel = f"matrices/{p.patient_id}_{band.name}.csv"
            _write_matrix_csv(out / rel, p.matrices[band].weights)
            band_paths[band.name] = rel
        manifest["patients"][p.patient_id] = band_paths
        side = "" if p.stroke_side is StrokeSide.unknown else p.stroke_side.value
        label_rows.append((p.patient_id, p.nihss, side))
    with (out / "labels.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "nihss", "stroke_side"])
        writer.writerows(label_rows)
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest_path


def _read_labels(path: Path) -> dict[str, tuple[int, StrokeSide]]:
    if not path.exists():
        raise IngestError(f"label file not found: {path}")
    out: dict[str, tuple[int, StrokeSide]] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"patient_id", "nihss", "stroke_side"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise DataError(f"{path.name}: header must contain {sorted(required)}")
        for row in reader:
            side = StrokeSide(row["stroke_side"]) if row["stroke_side"] else StrokeSide.unknown
            out[row["patient_id"]] = (int(row["nihss"]), side)
    return out


def load_cohort(manifest_path: str | Path, areas: list[BrodmannArea] | None = None) -> Cohort:
    """Load and validate a cohort; raises on the first violation.

    Matrices with asymmetry at or below ``LOAD_SYMMETRY_TOL`` are silently
    symmetrized as ``(M + M') / 2``; larger asymmetry is rejected.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise IngestError(f"manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    base = manifest_path.parent
    areas = default_areas() if areas is None else areas
    labels = _read_labels(base / manifest["labels"])
    patients = []
    for pid, band_paths in manifest["patients"].items():
        if pid not in labels:
            raise IngestError(f"patient {pid}: no row in label file")
        matrices = {}
        for band in FrequencyBand:
            if band.name not in band_paths:
                raise IngestError(f"patient {pid}: band {band.name} missing from manifest")
            mpath = base / band_paths[band.name]
            if not mpath.exists():
                raise IngestError(f"patient {pid}: band {band.name} file not found: {mpath}")
            raw = _read_matrix_csv(mpath, len(areas))
            sym = _symmetrize(raw, f"patient {pid} band {band.name}")
            matrices[band] = ConnectivityMatrix(band, sym)
        nihss, side = labels[pid]
        patients.append(PatientRecord(pid, matrices, nihss, side))
    return Cohort(tuple(patients), tuple(areas))


def validate_cohort_files(manifest_path: str | Path,
                          n_areas: int = N_AREAS) -> tuple[dict, list[str]]:
    """Scan cohort files and collect every violation instead of failing fast.

    Returns (summary, violations); the summary counts patients, matrices,
    and severity classes among the cleanly parsed records.
    """
    manifest_path = Path(manifest_path)
    violations: list[str] = []
    summary = {"patients": 0, "matrices": 0, "classes": {c.name: 0 for c in SeverityClass}}
    if not manifest_path.exists():
        return summary, [f"manifest not found: {manifest_path}"]
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        return summary, [f"manifest is not valid JSON: {exc}"]
    base = manifest_path.parent

    labels: dict[str, tuple[int, StrokeSide]] = {}
    try:
        labels = _read_labels(base / manifest.get("labels", "labels.csv"))
    except (DataError, IngestError, ValueError) as exc:
        violations.append(str(exc))

    for pid, band_paths in manifest.get("patients", {}).items():
        patient_clean = True
        for band in FrequencyBand:
            if band.name not in band_paths:
                violations.append(f"patient {pid}: band {band.name} missing from manifest")
                patient_clean = False
                continue
            mpath = base / band_paths[band.name]
            if not mpath.exists():
                violations.append(f"patient {pid}: band {band.name} file not found: {mpath.name}")
                patient_clean = False
                continue
            try:
                raw = _read_matrix_csv(mpath, n_areas)
                sym = _symmetrize(raw, f"patient {pid} band {band.name}")
                ConnectivityMatrix(band, sym)
                summary["matrices"] += 1
            except (DataError, ValueError) as exc:
                violations.append(f"{mpath.name}: {exc}")
                patient_clean = False
        if pid not in labels:
            violations.append(f"patient {pid}: no row in label file")
            patient_clean = False
        else:
            nihss, _side = labels[pid]
            if not NIHSS_MIN <= nihss <= NIHSS_MAX:
                violations.append(
                    f"patient {pid}: nihss {nihss} outside clinical range "
                    f"{NIHSS_MIN}..{NIHSS_MAX}"
                )
                patient_clean = False
        if patient_clean:
            summary["patients"] += 1
            summary["classes"][class_of(labels[pid][0]).name] += 1
    return summary, violations


# ---------------------------------------------------------------------------
# Synthetic cohort
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Knobs of the synthetic generator.

    The lesion is a contiguous window of ``lesion_size`` areas starting at
    ``lesion_offset`` within the stroke-side hemisphere.  Intra-window
    weights in ``affected_bands`` are scaled by
    ``1 - severity_gain * (nihss - 2) / 20``, so higher scores mean weaker
    local coherence.  ``noise`` adds symmetric per-patient jitter.
    """

    lesion_size: int = 12
    lesion_offset: int = 10
    noise: float = 0.05
    severity_gain: float = 0.8
    affected_bands: tuple[FrequencyBand, ...] = (
        FrequencyBand.alpha1,
        FrequencyBand.alpha2,
        FrequencyBand.beta1,
    )
    distance_scale_mm: float = 50.0
    texture: float = 0.10

    def __post_init__(self):
        if not 0 < self.lesion_size <= N_AREAS // 2:
            raise ValueError("lesion_size must be in 1..42")
        if not 0 <= self.lesion_offset <= N_AREAS // 2 - self.lesion_size:
            raise ValueError("lesion window must fit inside one hemisphere")
        if not 0 <= self.severity_gain < 1:
            raise ValueError("severity_gain must be in [0, 1)")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")


# Class sequence used to stratify severity across A/B/C; B dominates, C is
# rare, mirroring the skew typical of hospitalization cohorts.
_CLASS_PATTERN = (
    SeverityClass.A,
    SeverityClass.B,
    SeverityClass.B,
    SeverityClass.C,
    SeverityClass.A,
    SeverityClass.B,
)

_CLASS_NIHSS_RANGE = {
    SeverityClass.A: (2, 8),
    SeverityClass.B: (9, 15),
    SeverityClass.C: (16, 22),
}


def _round_sig9(arr: np.ndarray) -> np.ndarray:
    """Quantize weights to their 9-significant-digit serialized form."""
    flat = [float(_format_weight(x)) for x in arr.ravel()]
    return np.array(flat).reshape(arr.shape)


def _hemisphere_symmetric_noise(rng: np.random.Generator, half: int) -> np.ndarray:
    """Symmetric (n, n) standard-normal texture, invariant to hemisphere swap."""
    a = rng.standard_normal((half, half))
    ll = (a + a.T) / 2.0
    b = rng.standard_normal((half, half))
    lr = (b + b.T) / 2.0
    return np.block([[ll, lr], [lr, ll]])


def _symmetric_uniform(rng: np.random.Generator, n: int) -> np.ndarray:
    """Symmetric jitter with entries in [-1, 1]."""
    p = rng.random((n, n))
    return (p + p.T) - 1.0


def severity_attenuation(nihss: int, gain: float) -> float:
    """Multiplier applied to intra-lesion coherence; 1.0 at nihss=2."""
    return 1.0 - gain * (nihss - 2) / 20.0


def synth_cohort(n_patients: int, seed: int, config: SynthConfig = SynthConfig()) -> Cohort:
    """Generate a deterministic cohort with a planted severity signal.

    Band templates are shared by all patients and symmetric under
    hemisphere swap, so at ``noise=0`` the mean intra-lesion coherence
    depends on the severity score alone.
    """
    if n_patients < 1:
        raise ValueError("n_patients must be >= 1")
    rng = np.random.default_rng(seed)
    areas = default_areas()
    half = N_AREAS // 2
    coords = np.array([a.centroid for a in areas])
    dist = np.sqrt(((coords[:, None, :] - coords[None, :, :]) ** 2).sum(-1))
    proximity = np.exp(-dist / config.distance_scale_mm)

    templates = {}
    for band in FrequencyBand:
        texture = _hemisphere_symmetric_noise(rng, half)
        t = 0.15 + 0.55 * proximity + config.texture * texture
        templates[band] = np.clip(t, 0.02, 0.98)

    patients = []
    for i in range(n_patients):
        cls = _CLASS_PATTERN[i % len(_CLASS_PATTERN)]
        lo, hi = _CLASS_NIHSS_RANGE[cls]
        nihss = int(rng.integers(lo, hi + 1))
        side = StrokeSide.left if rng.random() < 0.5 else StrokeSide.right
        start = config.lesion_offset + (0 if side is StrokeSide.left else half)
        lesion = np.arange(start, start + config.lesion_size)
        g = severity_attenuation(nihss, config.severity_gain)

        matrices = {}
        for band in FrequencyBand:
            w = templates[band].copy()
            if config.noise > 0:
                w = w + config.noise * _symmetric_uniform(rng, N_AREAS)
            if band in config.affected_bands:
                block = np.ix_(lesion, lesion)
                w[block] = w[block] * g
            w = np.clip(w, 0.0, 1.0)
            np.fill_diagonal(w, 0.0)
            matrices[band] = ConnectivityMatrix(band, _round_sig9(w))
        patients.append(PatientRecord(f"p{i:03d}", matrices, nihss, side))
    return Cohort(tuple(patients), tuple(areas))


def lesion_window(record: PatientRecord, config: SynthConfig = SynthConfig()) -> np.ndarray:
    """Node indices of the planted lesion for a synthetic patient."""
    half = N_AREAS // 2
    start = config.lesion_offset + (0 if record.stroke_side is StrokeSide.left else half)
    return np.arange(start, start + config.lesion_size)
