"""Readability benchmark harness.

Corrupts clean codes over a blur x noise parameter grid with seeded noise
realizations, scores each realization with an external decoder command twice
(the raw corrupted image and the pipeline output), and aggregates per-cell
readable fractions into phase diagrams emitted as CSV plus grayscale
heatmaps. Also provides a lambda1 sweep and an unprocessed/D/UPSF/FPSF
variant comparison over a case list.

Results are deterministic for a fixed master seed: every realization derives
its noise seed from (master seed, cell indices, realization index) alone, and
aggregation is keyed by cell, so worker count and completion order never
change the output.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import shlex
import subprocess
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .degrade import BlurSpec, CorruptionSpec, NoiseSpec, corrupt
from .imgops import read_image, write_image
from .pipeline import PipelineConfig, clean
from .qrgeom import infer_geometry

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 10.0


class DecoderConfigError(RuntimeError):
    """The external decoder command is missing or malformed."""


@dataclass(frozen=True)
class DecoderAdapter:
    """External decoder invocation: a command template containing {path}.

    Success means exit status 0 with non-empty stdout; when an expected
    payload is supplied the stdout text must match it exactly. The adapter
    holds no state between invocations.
    """

    command: str
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self):
        if "{path}" not in self.command:
            raise DecoderConfigError(
                f"decoder command needs a {{path}} placeholder: {self.command!r}")
        if self.timeout <= 0:
            raise ValueError(f"timeout must be positive, got {self.timeout}")

    def argv_for(self, path: str) -> list[str]:
        return [tok.replace("{path}", path) for tok in shlex.split(self.command)]


def bundled_decoder_command() -> str:
    """Command template for the decoder shipped with this package."""
    return f"{sys.executable} -m qrclean.decoders {{path}}"


def score_readability(img: np.ndarray, adapter: DecoderAdapter,
                      expected_payload: str | None = None) -> bool:
    """Write img to a temp file, run the decoder, and report success."""
    fd, path = tempfile.mkstemp(suffix=".png", prefix="qrclean-score-")
    os.close(fd)
    try:
        write_image(path, img)
        try:
            proc = subprocess.run(
                adapter.argv_for(path), capture_output=True, text=True,
                timeout=adapter.timeout)
        except FileNotFoundError as exc:
            raise DecoderConfigError(
                f"decoder command not found: {adapter.command!r}") from exc
        except subprocess.TimeoutExpired:
            log.warning("decoder timed out after %.1fs on %s",
                        adapter.timeout, path)
            return False
        payload = proc.stdout.strip()
        if proc.returncode != 0 or not payload:
            return False
        if expected_payload is not None and payload != expected_payload:
            return False
        return True
    finally:
        os.unlink(path)


@dataclass(frozen=True)
class SweepSpec:
    """Declarative sweep description: codes x blur axis x noise axis."""

    codes: tuple[str, ...]
    blur: tuple[BlurSpec, ...]
    noise: tuple[NoiseSpec, ...]
    realizations: int = 10
    variant: str = "FPSF"
    lambda1: float = 10000.0
    payloads: tuple[str | None, ...] = ()

    def __post_init__(self):
        if not self.codes or not self.blur or not self.noise:
            raise ValueError("codes, blur axis, and noise axis must be non-empty")
        if self.realizations < 1:
            raise ValueError(f"realizations must be >= 1, got {self.realizations}")
        if self.payloads and len(self.payloads) != len(self.codes):
            raise ValueError("payloads, when given, must align with codes")

    def payload_for(self, code_index: int) -> str | None:
        return self.payloads[code_index] if self.payloads else None

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(variant=self.variant, lambda1=self.lambda1)


@dataclass
class PhaseDiagram:
    """Readable fractions per grid cell, for raw and cleaned images."""

    code_id: str
    blur_labels: list[str]
    noise_labels: list[str]
    unprocessed: list[list[float | None]]
    cleaned: list[list[float | None]]
    realizations: int
    metadata: dict[str, str]
    errors: list[str] = field(default_factory=list)


def realization_seed(master_seed: int, code_index: int, blur_index: int,
                     noise_index: int, realization: int) -> int:
    """Derive the noise seed for one realization from its grid position."""
    ss = np.random.SeedSequence(
        [master_seed, code_index, blur_index, noise_index, realization])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _eval_cell(task):
    """Score one grid cell (all realizations); top-level for pickling.

    The raw (control) scores are finished before the pipeline ever runs, so
    a pipeline failure leaves the unprocessed fraction intact and only the
    cleaned fraction becomes NA.
    """
    (code_index, blur_index, noise_index, z, blur, noise, realizations,
     cfg, adapter, payload, master_seed) = task
    raw_ok = 0
    corrupted = []
    try:
        g = infer_geometry(z)
        for r in range(realizations):
            seed = realization_seed(master_seed, code_index, blur_index,
                                    noise_index, r)
            f = corrupt(z, CorruptionSpec(blur, noise.with_seed(seed)))
            corrupted.append(f)
            if score_readability(f, adapter, payload):
                raw_ok += 1
    except DecoderConfigError:
        raise
    except Exception as exc:
        return (code_index, blur_index, noise_index, None, None,
                f"{type(exc).__name__}: {exc}")
    cleaned_ok = 0
    try:
        for f in corrupted:
            out = clean(f, z, g, cfg).u3_final
            if score_readability(out, adapter, payload):
                cleaned_ok += 1
    except DecoderConfigError:
        raise
    except Exception as exc:
        return (code_index, blur_index, noise_index, raw_ok, None,
                f"{type(exc).__name__}: {exc}")
    return (code_index, blur_index, noise_index, raw_ok, cleaned_ok, None)


def _run_tasks(fn, tasks, workers: int):
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def run_sweep(spec: SweepSpec, cfg: PipelineConfig, adapter: DecoderAdapter,
              master_seed: int = 0, workers: int = 1) -> list[PhaseDiagram]:
    """Evaluate the full grid; one PhaseDiagram per code."""
    codes = [read_image(p) for p in spec.codes]
    tasks = []
    for ci, z in enumerate(codes):
        for bi, blur in enumerate(spec.blur):
            for ni, noise in enumerate(spec.noise):
                tasks.append((ci, bi, ni, z, blur, noise, spec.realizations,
                              cfg, adapter, spec.payload_for(ci), master_seed))
    results = {}
    for ci, bi, ni, raw_ok, cleaned_ok, err in _run_tasks(_eval_cell, tasks, workers):
        results[(ci, bi, ni)] = (raw_ok, cleaned_ok, err)

    diagrams = []
    for ci, path in enumerate(spec.codes):
        nb, nn = len(spec.blur), len(spec.noise)
        unproc = [[None] * nn for _ in range(nb)]
        cleaned = [[None] * nn for _ in range(nb)]
        errors = []
        for bi in range(nb):
            for ni in range(nn):
                raw_ok, cleaned_ok, err = results[(ci, bi, ni)]
                if err is not None:
                    errors.append(f"cell ({bi},{ni}): {err}")
                if raw_ok is not None:
                    unproc[bi][ni] = raw_ok / spec.realizations
                if cleaned_ok is not None:
                    cleaned[bi][ni] = cleaned_ok / spec.realizations
        diagrams.append(PhaseDiagram(
            code_id=os.path.splitext(os.path.basename(path))[0],
            blur_labels=[b.label() for b in spec.blur],
            noise_labels=[n.label() for n in spec.noise],
            unprocessed=unproc,
            cleaned=cleaned,
            realizations=spec.realizations,
            metadata={
                "variant": cfg.variant,
                "lambda1": repr(cfg.lambda1),
                "master_seed": str(master_seed),
                "decoder": adapter.command,
                "qrclean": __version__,
            },
            errors=errors,
        ))
    return diagrams


def _eval_lambda1(task):
    """Score one (lambda1, realization) pipeline run; top-level for pickling."""
    (li, r, z, blur, noise, lam1, variant, master_seed, adapter, payload) = task
    g = infer_geometry(z)
    seed = realization_seed(master_seed, 0, 0, 0, r)
    f = corrupt(z, CorruptionSpec(blur, noise.with_seed(seed)))
    cfg = PipelineConfig(variant=variant, lambda1=lam1)
    out = clean(f, z, g, cfg).u3_final
    return (li, r, score_readability(out, adapter, payload))


# default grid for fidelity-weight sensitivity studies
LAMBDA1_STUDY_GRID = tuple(
    [10.0 ** e for e in range(-6, 3)] + [1e3, 5e3, 1e4, 1.5e4, 1e5, 1e6])


def lambda1_sweep(code_path: str, blur: BlurSpec, noise: NoiseSpec,
                  lambda1_list, realizations: int, adapter: DecoderAdapter,
                  master_seed: int = 0, workers: int = 1,
                  expected_payload: str | None = None,
                  variant: str = "FPSF"):
    """Readability-vs-lambda1 curve on identical noise realizations.

    Every lambda1 value sees the same corrupted inputs (seeds depend only on
    the realization index), so curve differences isolate the parameter.
    Returns (unprocessed_fraction, [(lambda1, fraction), ...]).
    """
    lam_list = list(lambda1_list)
    if not lam_list:
        raise ValueError("lambda1_list must be non-empty")
    z = read_image(code_path)
    raw_ok = 0
    for r in range(realizations):
        seed = realization_seed(master_seed, 0, 0, 0, r)
        f = corrupt(z, CorruptionSpec(blur, noise.with_seed(seed)))
        if score_readability(f, adapter, expected_payload):
            raw_ok += 1
    tasks = [(li, r, z, blur, noise, lam1, variant, master_seed, adapter,
              expected_payload)
             for li, lam1 in enumerate(lam_list) for r in range(realizations)]
    counts = [0] * len(lam_list)
    for li, _r, ok in _run_tasks(_eval_lambda1, tasks, workers):
        counts[li] += int(ok)
    curve = [(lam1, counts[li] / realizations) for li, lam1 in enumerate(lam_list)]
    return raw_ok / realizations, curve


def _eval_variant(task):
    """Score one (case, variant-or-raw, realization); top-level for pickling."""
    (ci, column, r, z, blur, noise, lam1, master_seed, adapter, payload) = task
    g = infer_geometry(z)
    seed = realization_seed(master_seed, ci, 0, 0, r)
    f = corrupt(z, CorruptionSpec(blur, noise.with_seed(seed)))
    if column == "U":
        return (ci, column, lam1, r, score_readability(f, adapter, payload))
    variant = "FPSF" if column == "FPSF" else column
    cfg = PipelineConfig(variant=variant,
                         lambda1=lam1 if lam1 is not None else 10000.0)
    out = clean(f, z, g, cfg).u3_final
    return (ci, column, lam1, r, score_readability(out, adapter, payload))


def variant_table(cases, realizations: int, adapter: DecoderAdapter,
                  lambda1_list, master_seed: int = 0, workers: int = 1,
                  payloads=None):
    """Readable counts per case for U, D, UPSF, and FPSF at each lambda1.

    cases: list of (code_path, BlurSpec, NoiseSpec). Returns one dict per
    case with per-column counts out of `realizations`; the FPSF columns are
    keyed by lambda1 and summarized by a best-lambda1 count.
    """
    lam_list = list(lambda1_list)
    if not lam_list:
        raise ValueError("lambda1_list must be non-empty")
    payloads = list(payloads) if payloads is not None else [None] * len(cases)
    if len(payloads) != len(cases):
        raise ValueError("payloads must align with cases")

    tasks = []
    for ci, (path, blur, noise) in enumerate(cases):
        z = read_image(path)
        for r in range(realizations):
            tasks.append((ci, "U", r, z, blur, noise, None, master_seed,
                          adapter, payloads[ci]))
            tasks.append((ci, "D", r, z, blur, noise, None, master_seed,
                          adapter, payloads[ci]))
            tasks.append((ci, "UPSF", r, z, blur, noise, None, master_seed,
                          adapter, payloads[ci]))
            for lam1 in lam_list:
                tasks.append((ci, "FPSF", r, z, blur, noise, lam1,
                              master_seed, adapter, payloads[ci]))

    counts: dict[tuple, int] = {}
    for ci, column, lam1, _r, ok in _run_tasks(_eval_variant, tasks, workers):
        key = (ci, column, lam1)
        counts[key] = counts.get(key, 0) + int(ok)

    rows = []
    for ci, (path, blur, noise) in enumerate(cases):
        fpsf = {lam1: counts.get((ci, "FPSF", lam1), 0) for lam1 in lam_list}
        rows.append({
            "code": os.path.splitext(os.path.basename(path))[0],
            "blur": blur.label(),
            "noise": noise.label(),
            "U": counts.get((ci, "U", None), 0),
            "D": counts.get((ci, "D", None), 0),
            "UPSF": counts.get((ci, "UPSF", None), 0),
            "FPSF": fpsf,
            "FPSF_best": max(fpsf.values()),
            "realizations": realizations,
        })
    return rows


def _fraction_text(v: float | None) -> str:
    return "NA" if v is None else repr(v)


def emit_phase_diagram(pd: PhaseDiagram, out_dir: str) -> dict[str, str]:
    """Write cells.csv, the two heatmap PGMs, and a manifest record."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "cells": os.path.join(out_dir, "cells.csv"),
        "heatmap_unprocessed": os.path.join(out_dir, "heatmap_unprocessed.pgm"),
        "heatmap_cleaned": os.path.join(out_dir, "heatmap_cleaned.pgm"),
        "manifest": os.path.join(out_dir, "manifest.json"),
    }

    with open(paths["cells"], "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# code: {pd.code_id}\n")
        fh.write(f"# realizations: {pd.realizations}\n")
        for key in sorted(pd.metadata):
            fh.write(f"# {key}: {pd.metadata[key]}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["blur", "noise", "unprocessed", "cleaned"])
        for bi, blabel in enumerate(pd.blur_labels):
            for ni, nlabel in enumerate(pd.noise_labels):
                writer.writerow([
                    blabel, nlabel,
                    _fraction_text(pd.unprocessed[bi][ni]),
                    _fraction_text(pd.cleaned[bi][ni])])

    for name, grid in (("heatmap_unprocessed", pd.unprocessed),
                       ("heatmap_cleaned", pd.cleaned)):
        arr = np.array([[0.0 if v is None else v for v in row] for row in grid],
                       dtype=np.float64)
        write_image(paths[name], arr)

    record = {
        "code": pd.code_id,
        "blur_axis": pd.blur_labels,
        "noise_axis": pd.noise_labels,
        "realizations": pd.realizations,
        "metadata": pd.metadata,
        "errors": pd.errors,
        "versions": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "qrclean": __version__,
        },
    }
    with open(paths["manifest"], "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def parse_phase_diagram_csv(path: str) -> PhaseDiagram:
    """Inverse of the cells.csv emission (metadata from # comments)."""
    metadata = {}
    data_lines = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                key, _, value = stripped[1:].partition(":")
                metadata[key.strip()] = value.strip()
            else:
                data_lines.append(line)
    rows = [row for row in csv.reader(data_lines)
            if row != ["blur", "noise", "unprocessed", "cleaned"]]
    blur_labels = list(dict.fromkeys(r[0] for r in rows))
    noise_labels = list(dict.fromkeys(r[1] for r in rows))

    def parse_fraction(text):
        return None if text == "NA" else float(text)

    nb, nn = len(blur_labels), len(noise_labels)
    unproc = [[None] * nn for _ in range(nb)]
    cleaned = [[None] * nn for _ in range(nb)]
    for blabel, nlabel, utext, ctext in rows:
        bi = blur_labels.index(blabel)
        ni = noise_labels.index(nlabel)
        unproc[bi][ni] = parse_fraction(utext)
        cleaned[bi][ni] = parse_fraction(ctext)
    code_id = metadata.pop("code", "")
    realizations = int(metadata.pop("realizations", "0"))
    return PhaseDiagram(code_id=code_id, blur_labels=blur_labels,
                        noise_labels=noise_labels, unprocessed=unproc,
                        cleaned=cleaned, realizations=realizations,
                        metadata=metadata)


def _load_toml(path: str) -> dict:
    try:
        import tomllib
    except ImportError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def parse_sweep_toml(path: str) -> SweepSpec:
    """Read a declarative sweep description.

    Expected shape::

        [sweep]
        codes = ["codes/code1.png"]
        payloads = ["Code 1"]            # optional, aligned with codes
        blur = ["motion:3", "motion:11"]
        noise = ["sp:0.1", "sp:0.2"]
        realizations = 10
        variant = "FPSF"
        lambda1 = 10000.0
    """
    data = _load_toml(path)
    if "sweep" not in data:
        raise ValueError(f"missing [sweep] table in {path}")
    table = data["sweep"]
    known = {"codes", "payloads", "blur", "noise", "realizations",
             "variant", "lambda1"}
    extra = set(table) - known
    if extra:
        raise ValueError(f"unknown sweep keys: {sorted(extra)}")
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    return SweepSpec(
        codes=tuple(resolve(p) for p in table["codes"]),
        payloads=tuple(table.get("payloads", ())),
        blur=tuple(BlurSpec.from_string(s) for s in table["blur"]),
        noise=tuple(NoiseSpec.from_string(s) for s in table["noise"]),
        realizations=int(table.get("realizations", 10)),
        variant=str(table.get("variant", "FPSF")),
        lambda1=float(table.get("lambda1", 10000.0)),
    )


PRESETS = ("mini", "full")


def preset_spec(name: str, codes, payloads=None) -> SweepSpec:
    """Built-in sweep grids at two scales.

    mini: 3x4 motion x salt&pepper grid, 5 realizations (desk scale).
    full: 5x11 motion x salt&pepper grid, 10 realizations.
    """
    payloads = tuple(payloads) if payloads else ()
    if name == "mini":
        return SweepSpec(
            codes=tuple(codes), payloads=payloads,
            blur=tuple(BlurSpec.motion(l) for l in (3, 11, 19)),
            noise=tuple(NoiseSpec("salt_pepper", d)
                        for d in (0.0, 0.1, 0.2, 0.4)),
            realizations=5)
    if name == "full":
        return SweepSpec(
            codes=tuple(codes), payloads=payloads,
            blur=tuple(BlurSpec.motion(l) for l in (3, 7, 11, 15, 19)),
            noise=tuple(NoiseSpec("salt_pepper", round(0.1 * i, 1))
                        for i in range(11)),
            realizations=10)
    raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")
