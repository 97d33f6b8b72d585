"""Experiment orchestration: scenario sweeps, seeding, CSV persistence.

An :class:`ExperimentSpec` names a scenario (SE vs SNR, BER vs SNR,
NMSE vs iterations, or one of the complexity views), a base
:class:`SystemConfig`, a sweep, the methods to compare, and the
ensemble size.  ``run_experiment`` evaluates every sweep point x
method, writes one long-format CSV per scenario with full provenance
columns plus a manifest, and optionally renders the matching figure.

Seeding is hierarchical: every Monte-Carlo trial draws from a stream
keyed by (seed, purpose tag, sweep point, trial), so results are
identical across runs and across worker-thread counts.
"""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .channel import ChannelSampler
from .config import CorrelationModel, CorrelationSpec, Normalization, SystemConfig
from .kaczmarz import exact_weights, rka_solve_block
from .metrics import (
    MetricsReport,
    ber_mc,
    complexity_count,
    nmse,
    sinr_hardening,
    sum_se,
)
from .precoding import PrecoderMethod, build_all_precoders, selection_mode_for

__all__ = [
    "Scenario",
    "ExperimentSpec",
    "ExperimentResult",
    "SpecError",
    "parse_spec",
    "spec_to_document",
    "spec_to_json",
    "config_hash",
    "substream",
    "run_experiment",
]

SCHEMA_VERSION = 1

#: purpose tags for the hierarchical seed derivation
_TAG_CHANNEL = 0
_TAG_PRECODER = 1
_TAG_BER = 2
_TAG_NMSE = 3

_METHOD_TAG = {
    PrecoderMethod.RZF_DIRECT: 0,
    PrecoderMethod.RKA: 1,
    PrecoderMethod.SWOR_RKA: 2,
    PrecoderMethod.SWOR_RKA_IID: 3,
}


class SpecError(ValueError):
    """Raised for malformed experiment documents, with the key path."""


class Scenario(str, Enum):
    """The supported experiment sweeps."""

    SE_VS_SNR = "se_vs_snr"
    BER_VS_SNR = "ber_vs_snr"
    NMSE_VS_ITER = "nmse_vs_iter"
    COMPLEXITY_VS_USERS = "complexity_vs_users"
    COMPLEXITY_VS_ANTENNAS = "complexity_vs_antennas"
    COMPLEXITY_TABLE = "complexity_table"


#: the one sweepable config field per scenario (None = no sweep)
_SWEEP_AXIS = {
    Scenario.SE_VS_SNR: "snr_db",
    Scenario.BER_VS_SNR: "snr_db",
    Scenario.NMSE_VS_ITER: "T",
    Scenario.COMPLEXITY_VS_USERS: "K",
    Scenario.COMPLEXITY_VS_ANTENNAS: "M",
    Scenario.COMPLEXITY_TABLE: None,
}

_DEFAULT_METHODS = (
    PrecoderMethod.RZF_DIRECT,
    PrecoderMethod.RKA,
    PrecoderMethod.SWOR_RKA,
)


def _default_sweep(scenario: Scenario, base: SystemConfig) -> tuple | None:
    if scenario in (Scenario.SE_VS_SNR,):
        return (5.0, 10.0, 15.0, 20.0)
    if scenario is Scenario.BER_VS_SNR:
        return (5.0, 8.0, 11.0, 14.0, 17.0, 20.0)
    if scenario is Scenario.NMSE_VS_ITER:
        return tuple(range(1, base.T + 1))
    if scenario is Scenario.COMPLEXITY_VS_USERS:
        return tuple(range(10, 101, 10))
    if scenario is Scenario.COMPLEXITY_VS_ANTENNAS:
        return tuple(range(32, 257, 32))
    return None


@dataclass(frozen=True)
class ExperimentSpec:
    """Validated description of one experiment run."""

    scenario: Scenario = Scenario.SE_VS_SNR
    base: SystemConfig = SystemConfig()
    sweep_values: tuple | None = None
    methods: tuple[PrecoderMethod, ...] = _DEFAULT_METHODS
    trials: int = 100
    ber_symbols: int = 1_000_000
    out_dir: str | None = None

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise SpecError(f"trials: must be >= 1, got {self.trials}")
        if self.ber_symbols < 1:
            raise SpecError(f"ber_symbols: must be >= 1, got {self.ber_symbols}")
        if not self.methods:
            raise SpecError("methods: at least one method is required")
        if self.sweep_values is None:
            object.__setattr__(
                self, "sweep_values", _default_sweep(self.scenario, self.base)
            )

    @property
    def sweep_axis(self) -> str | None:
        return _SWEEP_AXIS[self.scenario]


def substream(seed: int, *path: int) -> np.random.Generator:
    """Deterministic child generator keyed by (seed, *path).

    Uses SeedSequence spawn keys, so streams for distinct paths are
    independent and the derivation does not depend on creation order.
    """
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=tuple(path))
    )


# ---------------------------------------------------------------------------
# spec document parsing
# ---------------------------------------------------------------------------

_SYSTEM_KEYS = {
    "M": int, "S": int, "K": int,
    "snr_db": float, "sigma2": float, "tau": float, "T": int,
    "seed": int, "array_type": str, "carrier_freq_ghz": float,
}


def _require(cond: bool, path: str, reason: str) -> None:
    if not cond:
        raise SpecError(f"{path}: {reason}")


def _coerce(value: Any, kind: type, path: str) -> Any:
    if kind is float:
        _require(isinstance(value, (int, float)) and not isinstance(value, bool),
                 path, f"expected a number, got {value!r}")
        return float(value)
    if kind is int:
        _require(isinstance(value, int) and not isinstance(value, bool),
                 path, f"expected an integer, got {value!r}")
        return value
    _require(isinstance(value, str), path, f"expected a string, got {value!r}")
    return value


def _parse_system(doc: dict, path: str = "system") -> SystemConfig:
    kwargs: dict[str, Any] = {}
    for key, value in doc.items():
        kpath = f"{path}.{key}"
        if key in _SYSTEM_KEYS:
            kwargs[key] = _coerce(value, _SYSTEM_KEYS[key], kpath)
        elif key == "normalization":
            name = _coerce(value, str, kpath)
            try:
                kwargs[key] = Normalization(name)
            except ValueError:
                raise SpecError(
                    f"{kpath}: unknown normalization {name!r}; valid: "
                    f"{[n.value for n in Normalization]}"
                ) from None
        elif key == "correlation":
            _require(isinstance(value, dict), kpath, "expected an object")
            extra = set(value) - {"model", "rho"}
            _require(not extra, kpath, f"unknown keys {sorted(extra)}")
            try:
                model = CorrelationModel(value.get("model", "exponential"))
            except ValueError:
                raise SpecError(
                    f"{kpath}.model: unknown model {value.get('model')!r}"
                ) from None
            rho = _coerce(value.get("rho", 0.5), float, f"{kpath}.rho")
            try:
                kwargs[key] = CorrelationSpec(model=model, rho=rho)
            except ValueError as exc:
                raise SpecError(f"{kpath}: {exc}") from None
        elif key == "k_per_subarray":
            _require(isinstance(value, list), kpath, "expected a list of integers")
            kwargs[key] = tuple(_coerce(v, int, f"{kpath}[{i}]")
                                for i, v in enumerate(value))
        elif key == "vr_range":
            _require(isinstance(value, list) and len(value) == 2, kpath,
                     "expected a two-element list [min, max]")
            kwargs[key] = tuple(_coerce(v, int, f"{kpath}[{i}]")
                                for i, v in enumerate(value))
        else:
            raise SpecError(f"{kpath}: unknown key")
    try:
        return SystemConfig(**kwargs)
    except ValueError as exc:
        raise SpecError(f"{path}: {exc}") from None


def parse_spec(text: str) -> ExperimentSpec:
    """Parse and validate a JSON experiment document.

    An empty document resolves to the reference-scenario defaults.
    Every violation is reported with the offending key path.
    """
    try:
        doc = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise SpecError(f"document is not valid JSON: {exc}") from None
    _require(isinstance(doc, dict), "document", "top level must be an object")

    known = {"schema_version", "scenario", "system", "sweep", "methods",
             "trials", "ber_symbols", "out_dir"}
    for key in doc:
        _require(key in known, key, "unknown key")

    version = doc.get("schema_version", SCHEMA_VERSION)
    _require(version == SCHEMA_VERSION, "schema_version",
             f"unsupported version {version!r} (expected {SCHEMA_VERSION})")

    try:
        scenario = Scenario(doc.get("scenario", Scenario.SE_VS_SNR.value))
    except ValueError:
        raise SpecError(
            f"scenario: unknown scenario {doc.get('scenario')!r}; valid: "
            f"{[s.value for s in Scenario]}"
        ) from None

    base = _parse_system(doc.get("system", {}))

    sweep_values: tuple | None = None
    if "sweep" in doc:
        sweep = doc["sweep"]
        _require(isinstance(sweep, dict), "sweep", "expected an object")
        extra = set(sweep) - {"axis", "values"}
        _require(not extra, "sweep", f"unknown keys {sorted(extra)}")
        axis = sweep.get("axis")
        expected = _SWEEP_AXIS[scenario]
        _require(expected is not None, "sweep",
                 f"scenario {scenario.value!r} does not take a sweep")
        _require(axis == expected, "sweep.axis",
                 f"scenario {scenario.value!r} sweeps {expected!r}, got {axis!r}")
        values = sweep.get("values")
        _require(isinstance(values, list) and values, "sweep.values",
                 "expected a nonempty list")
        if expected == "snr_db":
            sweep_values = tuple(_coerce(v, float, f"sweep.values[{i}]")
                                 for i, v in enumerate(values))
        else:
            parsed = tuple(_coerce(v, int, f"sweep.values[{i}]")
                           for i, v in enumerate(values))
            _require(all(v >= 1 for v in parsed), "sweep.values",
                     "entries must be positive")
            sweep_values = parsed

    methods = _DEFAULT_METHODS
    if "methods" in doc:
        raw = doc["methods"]
        _require(isinstance(raw, list) and raw, "methods",
                 "expected a nonempty list of method names")
        parsed_methods = []
        for i, name in enumerate(raw):
            try:
                parsed_methods.append(PrecoderMethod(_coerce(name, str, f"methods[{i}]")))
            except ValueError:
                raise SpecError(
                    f"methods[{i}]: unknown method {name!r}; valid: "
                    f"{[m.value for m in PrecoderMethod]}"
                ) from None
        methods = tuple(dict.fromkeys(parsed_methods))

    kwargs: dict[str, Any] = {"scenario": scenario, "base": base,
                              "sweep_values": sweep_values, "methods": methods}
    if "trials" in doc:
        kwargs["trials"] = _coerce(doc["trials"], int, "trials")
    if "ber_symbols" in doc:
        kwargs["ber_symbols"] = _coerce(doc["ber_symbols"], int, "ber_symbols")
    if "out_dir" in doc:
        kwargs["out_dir"] = _coerce(doc["out_dir"], str, "out_dir")
    return ExperimentSpec(**kwargs)


def spec_to_document(spec: ExperimentSpec) -> dict:
    """Resolved spec as a plain document; parse(json(doc)) reproduces it."""
    base = spec.base
    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "scenario": spec.scenario.value,
        "system": {
            "M": base.M, "S": base.S, "K": base.K,
            "snr_db": base.snr_db, "sigma2": base.sigma2, "tau": base.tau,
            "T": base.T,
            "normalization": base.normalization.value,
            "correlation": {"model": base.correlation.model.value,
                            "rho": base.correlation.rho},
            "seed": base.seed,
            "array_type": base.array_type,
            "carrier_freq_ghz": base.carrier_freq_ghz,
        },
        "methods": [m.value for m in spec.methods],
        "trials": spec.trials,
        "ber_symbols": spec.ber_symbols,
    }
    if base.k_per_subarray is not None:
        doc["system"]["k_per_subarray"] = list(base.k_per_subarray)
    if base.vr_range is not None:
        doc["system"]["vr_range"] = list(base.vr_range)
    if spec.sweep_axis is not None:
        doc["sweep"] = {"axis": spec.sweep_axis, "values": list(spec.sweep_values)}
    if spec.out_dir is not None:
        doc["out_dir"] = spec.out_dir
    return doc


def spec_to_json(spec: ExperimentSpec) -> str:
    """Canonical JSON serialization of a resolved spec."""
    return json.dumps(spec_to_document(spec), indent=2, sort_keys=True)


def config_hash(spec: ExperimentSpec) -> str:
    """Short stable hash of the resolved spec, for provenance columns."""
    canonical = json.dumps(spec_to_document(spec), sort_keys=True,
                           separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


# ---------------------------------------------------------------------------
# scenario runners
# ---------------------------------------------------------------------------

def _parallel_map(fn: Callable[[int], Any], n: int, threads: int) -> list:
    """Apply fn to 0..n-1, preserving index order regardless of scheduling."""
    if threads <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


def _fmt(value: Any) -> str:
    """Deterministic CSV cell formatting ('.' decimal, shortest repr)."""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _error_status(exc: Exception) -> str:
    return f"error: {type(exc).__name__}: {exc}"


def _provenance(spec: ExperimentSpec) -> dict[str, Any]:
    return {"seed": spec.base.seed, "trials": spec.trials,
            "config_hash": config_hash(spec)}


def _se_rows(spec: ExperimentSpec, threads: int) -> list[dict]:
    rows: list[dict] = []
    prov = _provenance(spec)
    for pi, snr in enumerate(spec.sweep_values):
        cfg = replace(spec.base, snr_db=float(snr))
        sampler = ChannelSampler(cfg)
        realizations = _parallel_map(
            lambda ti: sampler.sample(substream(cfg.seed, _TAG_CHANNEL, pi, ti),
                                      seed=cfg.seed),
            spec.trials, threads)
        for method in spec.methods:
            tag = _METHOD_TAG[method]
            row = {"scenario": spec.scenario.value, "method": method.value,
                   "snr_db": float(snr), "tau": 0.0, **prov}
            try:
                precoders = _parallel_map(
                    lambda ti: build_all_precoders(
                        realizations[ti], cfg, method,
                        substream(cfg.seed, _TAG_PRECODER, pi, tag, ti),
                        use_estimated=False),
                    spec.trials, threads)
                sinr = sinr_hardening(list(zip(realizations, precoders)),
                                      p=1.0, sigma2=cfg.sigma2)
                se_list, se_total = sum_se(sinr)
                report = MetricsReport(sinr=sinr, se=se_list, se_total=se_total,
                                       trials=spec.trials, seed=cfg.seed)
                row.update(status="ok", se_total=report.se_total,
                           se_subarrays=";".join(_fmt(v) for v in report.se))
            except Exception as exc:
                row.update(status=_error_status(exc), se_total="", se_subarrays="")
            rows.append(row)
    return rows


def _ber_rows(spec: ExperimentSpec, threads: int) -> list[dict]:
    del threads  # trial loop is already vectorized per realization
    rows: list[dict] = []
    prov = _provenance(spec)
    taus = [0.0] + ([spec.base.tau] if spec.base.tau > 0 else [])
    for pi, snr in enumerate(spec.sweep_values):
        for method in spec.methods:
            for wi, tau in enumerate(taus):
                cfg = replace(spec.base, snr_db=float(snr), tau=tau)
                row = {"scenario": spec.scenario.value, "method": method.value,
                       "snr_db": float(snr), "tau": tau, **prov}
                try:
                    # common random numbers: the stream ignores the
                    # sweep point and method, so every curve sees the
                    # same channel/symbol/noise draws and differences
                    # along and across curves are paired
                    est = ber_mc(cfg, method, spec.ber_symbols,
                                 substream(cfg.seed, _TAG_BER, wi),
                                 trials=spec.trials)
                    row.update(status="ok", ber=est.ber,
                               bit_errors=est.bit_errors, n_bits=est.n_bits)
                except Exception as exc:
                    row.update(status=_error_status(exc), ber="",
                               bit_errors="", n_bits="")
                rows.append(row)
    return rows


def _nmse_rows(spec: ExperimentSpec, threads: int) -> list[dict]:
    cfg = spec.base
    checkpoints = tuple(sorted({int(v) for v in spec.sweep_values}))
    t_max = max(checkpoints)
    methods = [m for m in spec.methods if m is not PrecoderMethod.RZF_DIRECT]
    sampler = ChannelSampler(cfg)

    def one_trial(ti: int) -> dict[PrecoderMethod, np.ndarray]:
        realization = sampler.sample(substream(cfg.seed, _TAG_CHANNEL, 0, ti))
        acc = {m: np.zeros(len(checkpoints)) for m in methods}
        for s in range(cfg.S):
            h_local = realization.local(s)
            w_ref = exact_weights(h_local, cfg.xi)
            for method in methods:
                block = rka_solve_block(
                    h_local, cfg.xi, t_max, selection_mode_for(method),
                    substream(cfg.seed, _TAG_NMSE, _METHOD_TAG[method], ti, s),
                    snapshots=checkpoints)
                for ci, t in enumerate(checkpoints):
                    acc[method][ci] += nmse(block.snapshots[t][1], w_ref)
        return acc

    rows: list[dict] = []
    prov = _provenance(spec)
    if not methods:
        rows.append({"scenario": spec.scenario.value, "method": "", "snr_db":
                     cfg.snr_db, "tau": 0.0, **prov,
                     "status": "error: ValueError: no iterative method requested",
                     "t": "", "nmse": ""})
        return rows
    per_trial = _parallel_map(one_trial, spec.trials, threads)
    denom = spec.trials * cfg.S
    for method in methods:
        stacked = np.stack([trial[method] for trial in per_trial])
        means = stacked.sum(axis=0) / denom
        report = MetricsReport(
            nmse_curve=[(t, float(means[ci])) for ci, t in enumerate(checkpoints)],
            trials=spec.trials, seed=cfg.seed)
        for t, value in report.nmse_curve:
            rows.append({"scenario": spec.scenario.value,
                         "method": method.value, "snr_db": cfg.snr_db,
                         "tau": 0.0, **prov, "status": "ok",
                         "t": t, "nmse": value})
    return rows


_COMPLEXITY_SCHEMES = (
    PrecoderMethod.RZF_DIRECT,
    PrecoderMethod.RKA,
    PrecoderMethod.SWOR_RKA,
)


def _complexity_rows(spec: ExperimentSpec) -> list[dict]:
    # Per-subarray symbols follow the published table's convention:
    # M is the subarray size and K the per-subarray user count taken
    # directly from config.K.
    base = spec.base
    prov = _provenance(spec)
    if spec.scenario is Scenario.COMPLEXITY_TABLE:
        combos = [(base.m_sub, base.K)]
    elif spec.scenario is Scenario.COMPLEXITY_VS_USERS:
        combos = [(base.m_sub, int(v)) for v in spec.sweep_values]
    else:
        combos = [(int(v), base.K) for v in spec.sweep_values]
    rows: list[dict] = []
    for m_sym, k_sym in combos:
        for scheme in _COMPLEXITY_SCHEMES:
            row = {"scenario": spec.scenario.value, "scheme": scheme.value,
                   "M": m_sym, "K": k_sym, "S": base.S, "T": base.T, **prov}
            try:
                ops = complexity_count(scheme, m_sym, k_sym, base.S, base.T)
                row.update(status="ok", ops=ops)
            except Exception as exc:
                row.update(status=_error_status(exc), ops="")
            rows.append(row)
    return rows


_CSV_COLUMNS = {
    Scenario.SE_VS_SNR: ["scenario", "method", "snr_db", "tau", "trials",
                         "seed", "config_hash", "status", "se_total",
                         "se_subarrays"],
    Scenario.BER_VS_SNR: ["scenario", "method", "snr_db", "tau", "trials",
                          "seed", "config_hash", "status", "ber",
                          "bit_errors", "n_bits"],
    Scenario.NMSE_VS_ITER: ["scenario", "method", "snr_db", "tau", "trials",
                            "seed", "config_hash", "status", "t", "nmse"],
    Scenario.COMPLEXITY_VS_USERS: ["scenario", "scheme", "M", "K", "S", "T",
                                   "trials", "seed", "config_hash", "status",
                                   "ops"],
}
_CSV_COLUMNS[Scenario.COMPLEXITY_VS_ANTENNAS] = _CSV_COLUMNS[Scenario.COMPLEXITY_VS_USERS]
_CSV_COLUMNS[Scenario.COMPLEXITY_TABLE] = _CSV_COLUMNS[Scenario.COMPLEXITY_VS_USERS]


@dataclass
class ExperimentResult:
    """Rows and files produced by one run."""

    spec: ExperimentSpec
    rows: list[dict]
    csv_path: Path
    manifest_path: Path
    figure_paths: list[Path]


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(col, "")) for col in columns])


def run_experiment(
    spec: ExperimentSpec,
    out_dir: str | Path | None = None,
    threads: int = 1,
    make_figures: bool = True,
) -> ExperimentResult:
    """Run one experiment end to end.

    Writes ``<scenario>.csv`` plus ``manifest.json`` (and the scenario
    figure unless disabled) under ``out_dir``, falling back to the
    spec's own out_dir and then the working directory.  Identical
    (spec, seed) produce byte-identical CSV and manifest files for any
    thread count.
    """
    if spec.scenario is Scenario.SE_VS_SNR:
        rows = _se_rows(spec, threads)
    elif spec.scenario is Scenario.BER_VS_SNR:
        rows = _ber_rows(spec, threads)
    elif spec.scenario is Scenario.NMSE_VS_ITER:
        rows = _nmse_rows(spec, threads)
    else:
        rows = _complexity_rows(spec)

    target = Path(out_dir if out_dir is not None else (spec.out_dir or "."))
    target.mkdir(parents=True, exist_ok=True)
    csv_path = target / f"{spec.scenario.value}.csv"
    _write_csv(csv_path, _CSV_COLUMNS[spec.scenario], rows)

    figure_paths: list[Path] = []
    if make_figures:
        from .figures import render_figures

        figure_paths = render_figures(spec.scenario, rows, target)

    manifest = {
        "tool": "xlmp",
        "version": __version__,
        "seed": spec.base.seed,
        "config_hash": config_hash(spec),
        "spec": spec_to_document(spec),
        "files": [csv_path.name] + [p.name for p in figure_paths],
    }
    manifest_path = target / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")
    return ExperimentResult(spec=spec, rows=rows, csv_path=csv_path,
                            manifest_path=manifest_path,
                            figure_paths=figure_paths)
