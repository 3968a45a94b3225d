"""Structured text formats for scenarios, measurements, solutions, reports,
and start packs, plus the JSON run manifest.

Every file is human-readable line-oriented text: a version line
``dopploc <kind> v1`` first, then ``[section]`` blocks of ``key = value``
pairs. Numbers are serialized with 17 significant digits so doubles
round-trip exactly, and every block carrying dimensioned quantities states
its units explicitly. All values are SI; internal solver scaling never
reaches a file. Start packs end with a sha256 checksum block covering all
preceding bytes; a mismatch raises CorruptPackError.

Timestamps appear only in the manifest side file, never in a primary
output, so identical runs produce byte-identical primary files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .exceptions import CorruptPackError, FamilyMismatchError, FormatError
from .model import Receiver, TransmitterState
from .monodromy import StartPack

__all__ = [
    "MeasurementSet",
    "SolutionRecord",
    "save_scenario",
    "load_scenario",
    "save_measurement",
    "load_measurement",
    "save_solution",
    "load_solution",
    "save_report",
    "load_report",
    "save_pack",
    "load_pack",
    "write_manifest",
    "sha256_file",
]

_VERSION = 1
_MISSING = object()


# ---------------------------------------------------------------------------
# primitives

def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def _fmt_vec(v) -> str:
    return " ".join(_fmt(x) for x in np.asarray(v, dtype=float))


def _fmt_opt(x: float | None) -> str:
    return "none" if x is None else _fmt(x)


def _fmt_bool(b: bool) -> str:
    return "true" if b else "false"


@dataclass
class _Block:
    name: str
    pairs: list  # list of (key, value-string)

    def get(self, key: str, path, default=_MISSING) -> str:
        found = [v for k, v in self.pairs if k == key]
        if not found:
            if default is not _MISSING:
                return default
            raise FormatError(f"{path}: [{self.name}] is missing '{key}'")
        if len(found) > 1:
            raise FormatError(f"{path}: [{self.name}] repeats '{key}'")
        return found[0]

    def get_all(self, key: str) -> list:
        return [v for k, v in self.pairs if k == key]


def _parse_float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise FormatError(f"{where}: expected a number, got {text!r}") from None


def _parse_int(text: str, where: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise FormatError(f"{where}: expected an integer, got {text!r}") from None


def _parse_vec(text: str, where: str, n: int = 3) -> np.ndarray:
    parts = text.split()
    if len(parts) != n:
        raise FormatError(f"{where}: expected {n} numbers, got {len(parts)}")
    return np.array([_parse_float(p, where) for p in parts])


def _parse_bool(text: str, where: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise FormatError(f"{where}: expected true/false, got {text!r}")


def _parse_opt_float(text: str, where: str) -> float | None:
    return None if text == "none" else _parse_float(text, where)


def _parse_blocks(text: str, kind: str, path) -> list:
    """Split file text into blocks after validating the version line."""
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file")
    head = lines[0].strip().split()
    if len(head) != 3 or head[0] != "dopploc" or not head[2].startswith("v"):
        raise FormatError(f"{path}: first line must be 'dopploc <kind> v<N>', got {lines[0]!r}")
    if head[1] != kind:
        raise FormatError(f"{path}: expected a {kind} file, found {head[1]!r}")
    if head[2] != f"v{_VERSION}":
        raise FormatError(f"{path}: unsupported format version {head[2]!r}")
    blocks: list[_Block] = []
    current: _Block | None = None
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = _Block(line[1:-1], [])
            blocks.append(current)
            continue
        if current is None:
            raise FormatError(f"{path}:{lineno}: data before the first [section]")
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        current.pairs.append((key.strip(), value.strip()))
    return blocks


def _read_text(path) -> str:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"{path}: no such file")
    return path.read_text()


def _blocks_by_name(blocks, name: str) -> list:
    return [b for b in blocks if b.name == name]


def _single_block(blocks, name: str, path) -> _Block:
    found = _blocks_by_name(blocks, name)
    if len(found) != 1:
        raise FormatError(f"{path}: expected exactly one [{name}] block, found {len(found)}")
    return found[0]


_STATE_UNITS = "r:m v:m/s f:Hz"


def _receiver_lines(rx: Receiver) -> list:
    return [
        "[receiver]",
        f"group = {rx.group}",
        f"r = {_fmt_vec(rx.r)}",
        f"v = {_fmt_vec(rx.v)}",
        f"f = {_fmt_opt(rx.f)}",
        f"units = {_STATE_UNITS}",
        "",
    ]


def _parse_receiver(block: _Block, path) -> Receiver:
    f = _parse_opt_float(block.get("f", path, "none"), path)
    return Receiver(
        r=_parse_vec(block.get("r", path), path),
        v=_parse_vec(block.get("v", path), path),
        f=f,
        group=block.get("group", path, "default"),
    )


# ---------------------------------------------------------------------------
# scenario files

def save_scenario(scenario, path) -> None:
    """Write a Scenario (truth, receivers, medium constants) as text."""
    lines = [
        f"dopploc scenario v{_VERSION}",
        "",
        "[scenario]",
        f"medium = {scenario.medium}",
        f"known_frequency = {_fmt_bool(scenario.known_frequency)}",
        f"c = {_fmt(scenario.c)}",
        f"mu = {_fmt_opt(scenario.mu)}",
        "units = c:m/s mu:m^3/s^2",
        "",
        "[truth]",
        f"r = {_fmt_vec(scenario.truth.r)}",
        f"v = {_fmt_vec(scenario.truth.v)}",
        f"f = {_fmt(scenario.truth.f)}",
        f"units = {_STATE_UNITS}",
        "",
    ]
    for rx in scenario.receivers:
        lines.extend(_receiver_lines(rx))
    Path(path).write_text("\n".join(lines))


def load_scenario(path):
    """Read a scenario file back into a Scenario."""
    from .scenarios import Scenario

    blocks = _parse_blocks(_read_text(path), "scenario", path)
    meta = _single_block(blocks, "scenario", path)
    truth_block = _single_block(blocks, "truth", path)
    truth = TransmitterState(
        r=_parse_vec(truth_block.get("r", path), path),
        v=_parse_vec(truth_block.get("v", path), path),
        f=_parse_float(truth_block.get("f", path), path),
    )
    receivers = [_parse_receiver(b, path) for b in _blocks_by_name(blocks, "receiver")]
    return Scenario(
        truth=truth,
        receivers=receivers,
        c=_parse_float(meta.get("c", path), path),
        known_frequency=_parse_bool(meta.get("known_frequency", path), path),
        medium=meta.get("medium", path, "synthetic"),
        mu=_parse_opt_float(meta.get("mu", path, "none"), path),
    )


# ---------------------------------------------------------------------------
# measurement files

@dataclass(frozen=True)
class MeasurementSet:
    """Solver input: measured receivers plus medium constants.

    known_frequency carries the a-priori transmit frequency when the
    source's frequency is known, else None.
    """

    receivers: list
    c: float
    known_frequency: float | None = None
    medium: str = "synthetic"


def save_measurement(measurement: MeasurementSet, path) -> None:
    """Write measured receiver states and frequencies as text."""
    lines = [
        f"dopploc measurement v{_VERSION}",
        "",
        "[measurement]",
        f"medium = {measurement.medium}",
        f"c = {_fmt(measurement.c)}",
        f"transmit_frequency = {_fmt_opt(measurement.known_frequency)}",
        "units = c:m/s transmit_frequency:Hz",
        "",
    ]
    for rx in measurement.receivers:
        if rx.f is None:
            raise FormatError("measurement files require every receiver to carry a frequency")
        lines.extend(_receiver_lines(rx))
    Path(path).write_text("\n".join(lines))


def load_measurement(path) -> MeasurementSet:
    blocks = _parse_blocks(_read_text(path), "measurement", path)
    meta = _single_block(blocks, "measurement", path)
    receivers = [_parse_receiver(b, path) for b in _blocks_by_name(blocks, "receiver")]
    for rx in receivers:
        if rx.f is None:
            raise FormatError(f"{path}: measurement receiver without a frequency")
    return MeasurementSet(
        receivers=receivers,
        c=_parse_float(meta.get("c", path), path),
        known_frequency=_parse_opt_float(meta.get("transmit_frequency", path, "none"), path),
        medium=meta.get("medium", path, "synthetic"),
    )


# ---------------------------------------------------------------------------
# solution files

@dataclass(frozen=True)
class SolutionRecord:
    """What a solve run writes: ranked candidates plus diagnostics.

    candidates: list of (TransmitterState, squared_residual, unsquared_max,
    extra_residual-or-None) in rank order. stats: the per-stage endpoint
    counts as a dict. Residual scores are dimensionless (solver scale).
    """

    candidates: list
    stats: dict
    c: float
    known_frequency: float | None
    stationary: bool
    paths_tracked: int

    @classmethod
    def from_result(cls, result, c: float, known_frequency: float | None) -> "SolutionRecord":
        from dataclasses import asdict

        return cls(
            candidates=[
                (cand.state, cand.squared_residual, cand.unsquared_max, cand.extra_residual)
                for cand in result.candidates
            ],
            stats=asdict(result.stats),
            c=c,
            known_frequency=known_frequency,
            stationary=result.system.stationary,
            paths_tracked=result.paths_tracked,
        )


def save_solution(record: SolutionRecord, path) -> None:
    lines = [
        f"dopploc solution v{_VERSION}",
        "",
        "[solve]",
        f"c = {_fmt(record.c)}",
        f"transmit_frequency = {_fmt_opt(record.known_frequency)}",
        f"stationary = {_fmt_bool(record.stationary)}",
        f"paths_tracked = {record.paths_tracked}",
        "units = c:m/s transmit_frequency:Hz",
        "",
        "[stats]",
    ]
    lines.extend(f"{key} = {int(value)}" for key, value in record.stats.items())
    lines.append("")
    for rank, (state, sq, unsq, extra) in enumerate(record.candidates, start=1):
        lines.extend(
            [
                "[candidate]",
                f"rank = {rank}",
                f"r = {_fmt_vec(state.r)}",
                f"v = {_fmt_vec(state.v)}",
                f"f = {_fmt(state.f)}",
                f"squared_residual = {_fmt(sq)}",
                f"unsquared_max = {_fmt(unsq)}",
                f"extra_residual = {_fmt_opt(extra)}",
                f"units = {_STATE_UNITS} residuals:dimensionless",
                "",
            ]
        )
    Path(path).write_text("\n".join(lines))


def load_solution(path) -> SolutionRecord:
    blocks = _parse_blocks(_read_text(path), "solution", path)
    meta = _single_block(blocks, "solve", path)
    stats_block = _single_block(blocks, "stats", path)
    stats = {key: _parse_int(value, path) for key, value in stats_block.pairs}
    candidates = []
    for block in _blocks_by_name(blocks, "candidate"):
        state = TransmitterState(
            r=_parse_vec(block.get("r", path), path),
            v=_parse_vec(block.get("v", path), path),
            f=_parse_float(block.get("f", path), path),
        )
        candidates.append(
            (
                state,
                _parse_float(block.get("squared_residual", path), path),
                _parse_float(block.get("unsquared_max", path), path),
                _parse_opt_float(block.get("extra_residual", path), path),
            )
        )
    return SolutionRecord(
        candidates=candidates,
        stats=stats,
        c=_parse_float(meta.get("c", path), path),
        known_frequency=_parse_opt_float(meta.get("transmit_frequency", path), path),
        stationary=_parse_bool(meta.get("stationary", path), path),
        paths_tracked=_parse_int(meta.get("paths_tracked", path), path),
    )


# ---------------------------------------------------------------------------
# Monte Carlo report files

_TRIAL_COLUMNS = ("trial", "success", "gated", "position_error", "velocity_error", "frequency_error")
_ELEMENT_KEYS = ("a", "e", "inc", "raan", "argp", "nu")


def save_report(report, path) -> None:
    """Write a MonteCarloReport: run block, summary, per-trial table, and a
    plot-ready long-format section (quantity, trial, error)."""
    has_elements = any(rec.element_errors for rec in report.records)
    lines = [
        f"dopploc report v{_VERSION}",
        "",
        "[montecarlo]",
        f"trials = {report.trials}",
        f"failures = {report.failures}",
        f"rng_seed = {report.rng_seed}",
        "",
        "[summary]",
    ]
    for metric in sorted(report.summary):
        for q in ("median", "p95"):
            lines.append(f"{metric}_{q} = {_fmt(report.summary[metric][q])}")
    lines.append(
        "units = position:m velocity:m/s frequency:Hz element_a:m element_e:1 element_angles:deg"
    )
    lines.append("")

    columns = list(_TRIAL_COLUMNS)
    if has_elements:
        columns += [f"element_{k}" for k in _ELEMENT_KEYS]
    lines.append("[trials]")
    lines.append(f"columns = {' '.join(columns)}")
    for rec in report.records:
        row = [
            str(rec.trial),
            "1" if rec.success else "0",
            "1" if rec.gated else "0",
            _fmt(rec.position_error),
            _fmt(rec.velocity_error),
            _fmt(rec.frequency_error),
        ]
        if has_elements:
            el = rec.element_errors or {}
            row.extend(_fmt(el.get(k, np.nan)) for k in _ELEMENT_KEYS)
        lines.append(f"row = {' '.join(row)}")
    lines.append("units = position_error:m velocity_error:m/s frequency_error:Hz")
    lines.append("")

    lines.append("[long]")
    lines.append("columns = quantity trial error")
    for rec in report.records:
        if not rec.success:
            continue
        entries = [
            ("position", rec.position_error),
            ("velocity", rec.velocity_error),
            ("frequency", rec.frequency_error),
        ]
        if rec.element_errors:
            entries += [(f"element_{k}", rec.element_errors[k]) for k in _ELEMENT_KEYS]
        for quantity, err in entries:
            lines.append(f"row = {quantity} {rec.trial} {_fmt(err)}")
    lines.append("")
    Path(path).write_text("\n".join(lines))


def load_report(path):
    """Read a report file back into a MonteCarloReport (the long-format
    section is derived data and is not re-read)."""
    from .scenarios import MonteCarloReport, TrialRecord

    blocks = _parse_blocks(_read_text(path), "report", path)
    meta = _single_block(blocks, "montecarlo", path)
    summary_block = _single_block(blocks, "summary", path)
    summary: dict = {}
    for key, value in summary_block.pairs:
        if key == "units":
            continue
        metric, _, quantile = key.rpartition("_")
        if quantile not in ("median", "p95"):
            raise FormatError(f"{path}: unrecognized summary key {key!r}")
        summary.setdefault(metric, {})[quantile] = _parse_float(value, path)

    table = _single_block(blocks, "trials", path)
    columns = table.get("columns", path).split()
    records = []
    for row in table.get_all("row"):
        parts = row.split()
        if len(parts) != len(columns):
            raise FormatError(f"{path}: trial row has {len(parts)} fields, expected {len(columns)}")
        data = dict(zip(columns, parts))
        element_cols = {k: v for k, v in data.items() if k.startswith("element_")}
        element_errors = None
        if element_cols:
            element_errors = {
                k.removeprefix("element_"): _parse_float(v, path) for k, v in element_cols.items()
            }
        records.append(
            TrialRecord(
                trial=_parse_int(data["trial"], path),
                success=data["success"] == "1",
                position_error=_parse_float(data["position_error"], path),
                velocity_error=_parse_float(data["velocity_error"], path),
                frequency_error=_parse_float(data["frequency_error"], path),
                element_errors=element_errors,
                gated=data["gated"] == "1",
            )
        )
    return MonteCarloReport(
        records=records,
        summary=summary,
        trials=_parse_int(meta.get("trials", path), path),
        failures=_parse_int(meta.get("failures", path), path),
        rng_seed=_parse_int(meta.get("rng_seed", path), path),
    )


# ---------------------------------------------------------------------------
# start-pack files

def _complex_pair(z: complex) -> str:
    return f"{_fmt(z.real)} {_fmt(z.imag)}"


def save_pack(pack: StartPack, path) -> None:
    """Write a start pack with a trailing sha256 over all preceding bytes."""
    lines = [
        f"dopploc pack v{_VERSION}",
        "",
        "[family]",
        f"n_obs = {pack.n_obs}",
        f"known_frequency = {_fmt_bool(pack.known_frequency)}",
        f"stationary = {_fmt_bool(pack.stationary)}",
        f"halved = {_fmt_bool(pack.halved)}",
        f"rng_seed = {pack.rng_seed}",
        f"root_count = {pack.root_count}",
        "",
        "[params]",
        f"count = {len(pack.start_params)}",
    ]
    lines.extend(f"p = {_complex_pair(z)}" for z in pack.start_params)
    lines.append("")
    dim = pack.solutions.shape[1]
    lines.extend(["[solutions]", f"count = {len(pack.solutions)}", f"dim = {dim}"])
    lines.extend(
        "s = " + " ".join(_complex_pair(z) for z in row) for row in pack.solutions
    )
    lines.append("")
    payload = "\n".join(lines)
    digest = hashlib.sha256(payload.encode()).hexdigest()
    payload += f"\n[checksum]\nsha256 = {digest}\n"
    Path(path).write_text(payload)


def load_pack(path, family=None, validate: bool = False) -> StartPack:
    """Read and checksum-verify a start pack.

    family: optional DopplerSystem (or family tuple) the pack must match,
    else FamilyMismatchError. validate: additionally re-verify that every
    stored solution satisfies the stored start instance.
    """
    path = Path(path)
    if not path.is_file():
        raise CorruptPackError(f"{path}: no such file")
    text = path.read_text()
    marker = "\n[checksum]\n"
    cut = text.rfind(marker)
    if cut < 0:
        raise CorruptPackError(f"{path}: missing checksum block")
    payload, tail = text[:cut], text[cut + len(marker):]
    stated = None
    for line in tail.splitlines():
        key, _, value = line.partition("=")
        if key.strip() == "sha256":
            stated = value.strip()
    if stated is None:
        raise CorruptPackError(f"{path}: checksum block has no sha256 entry")
    actual = hashlib.sha256(payload.encode()).hexdigest()
    if actual != stated:
        raise CorruptPackError(f"{path}: sha256 mismatch (file is corrupt or was edited)")

    try:
        blocks = _parse_blocks(payload, "pack", path)
        fam = _single_block(blocks, "family", path)
        params_block = _single_block(blocks, "params", path)
        sols_block = _single_block(blocks, "solutions", path)

        n_params = _parse_int(params_block.get("count", path), path)
        raw_params = params_block.get_all("p")
        if len(raw_params) != n_params:
            raise FormatError(f"{path}: expected {n_params} parameter lines, found {len(raw_params)}")
        start_params = np.empty(n_params, dtype=complex)
        for i, entry in enumerate(raw_params):
            re_s, im_s = (entry.split() + ["", ""])[:2]
            start_params[i] = complex(_parse_float(re_s, path), _parse_float(im_s, path))

        n_sols = _parse_int(sols_block.get("count", path), path)
        dim = _parse_int(sols_block.get("dim", path), path)
        raw_sols = sols_block.get_all("s")
        if len(raw_sols) != n_sols:
            raise FormatError(f"{path}: expected {n_sols} solution lines, found {len(raw_sols)}")
        solutions = np.empty((n_sols, dim), dtype=complex)
        for i, entry in enumerate(raw_sols):
            parts = entry.split()
            if len(parts) != 2 * dim:
                raise FormatError(f"{path}: solution line {i} has {len(parts)} numbers, expected {2 * dim}")
            vals = [_parse_float(p, path) for p in parts]
            solutions[i] = [complex(vals[2 * j], vals[2 * j + 1]) for j in range(dim)]

        pack = StartPack(
            n_obs=_parse_int(fam.get("n_obs", path), path),
            known_frequency=_parse_bool(fam.get("known_frequency", path), path),
            stationary=_parse_bool(fam.get("stationary", path), path),
            start_params=start_params,
            solutions=solutions,
            rng_seed=_parse_int(fam.get("rng_seed", path), path),
            halved=_parse_bool(fam.get("halved", path), path),
        )
        if pack.root_count != _parse_int(fam.get("root_count", path), path):
            raise FormatError(f"{path}: root_count disagrees with the stored solution count")
    except FormatError as exc:
        raise CorruptPackError(str(exc)) from None

    if family is not None:
        want = family.family_key if hasattr(family, "family_key") else tuple(family)
        if pack.family_key != want:
            raise FamilyMismatchError(
                f"start pack family {pack.family_key} does not match requested family {want}"
            )
    if validate:
        pack.validate()
    return pack


# ---------------------------------------------------------------------------
# run manifests

def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_path, command: str, seed, config: dict, inputs=(), outputs=()) -> Path:
    """Write ``<out_path>.manifest.json`` describing one CLI run.

    The manifest carries the command, the RNG seed, a digest of the full
    configuration, digests of every input and output file, the tool
    version, and the (only) timestamp. Primary outputs stay timestamp-free
    so reruns are byte-identical.
    """
    from . import __version__

    config_text = json.dumps(config, sort_keys=True, default=str)
    manifest = {
        "tool": "dopploc",
        "version": __version__,
        "command": command,
        "rng_seed": seed,
        "config": json.loads(config_text),
        "config_digest": hashlib.sha256(config_text.encode()).hexdigest(),
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(p): sha256_file(p) for p in outputs},
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    manifest_path = Path(str(out_path) + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path
