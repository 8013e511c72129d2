"""Configuration, orchestration and result emission.

A run is described by one JSON document::

    {
      "post_selection": {"mu_max": 0.359},
      "channel": {"loss_db": 6.0},
      "N": 1e10,
      "eps": 1e-20,
      "mode": "expected",
      "scan": {"axis": "loss", "values": [2, 4, 6, 8, 10, 12]},
      "optimize_mu_max": false
    }

Every field is optional; omitted physical constants take the experimental
values (``det_eff = 0.125``, ``p_dark = 6e-7``, ``q_x = 0.25``, ``e_Z = 3.4%``).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Any, Mapping, Sequence

from scipy.optimize import minimize_scalar

from fpqkd.errors import DomainError, PipelineError
from fpqkd.estimator import KeyRateReport, Observables, estimate_key_rate, source_stats
from fpqkd.fock import N_CUT, td_table
from fpqkd.simulator import ChannelModel, calibrate_misalignment, expected_observables, sample_observables
from fpqkd.source import INTERVALS, PostSelectionConfig

COLUMNS = (
    "loss_db",
    "N",
    "mu_max",
    "M_Z_alpha",
    "M_Z_beta",
    "M_Z_gamma",
    "M_X_alpha",
    "M_X_beta",
    "M_X_gamma",
    "m_X_alpha",
    "m_X_beta",
    "m_X_gamma",
    "e_Z",
    "y1_L",
    "y1_U",
    "M_Z1_L",
    "M_Z1_U",
    "e_ph_U",
    "lambda_EC",
    "key_len",
    "skr",
)

MU_MAX_BOUNDS = (0.05, 0.8)


class UsageError(ValueError):
    """Malformed configuration or command line."""


@dataclass(frozen=True)
class RunConfig:
    post_selection: PostSelectionConfig = field(default_factory=PostSelectionConfig)
    channel: ChannelModel = field(default_factory=ChannelModel)
    eps: float = 1e-20
    N: float = 1e10
    mode: str = "expected"
    seed: int = 0
    scan_axis: str | None = None
    scan_values: tuple[float, ...] = ()
    optimize_mu_max: bool = False
    # e_mis is fitted to this key-basis error rate unless None
    calibrate_e_z: float | None = 0.034
    # fit once at this loss instead of at every point
    calibration_loss_db: float | None = None
    n_cut: int = N_CUT
    observables: str | None = None
    output: str | None = None
    format: str = "csv"

    def __post_init__(self):
        if self.mode not in ("expected", "sampled"):
            raise UsageError(f"mode must be 'expected' or 'sampled', got {self.mode!r}")
        if self.format not in ("csv", "json"):
            raise UsageError(f"format must be 'csv' or 'json', got {self.format!r}")
        if not 0.0 < self.eps <= 1.0:
            raise UsageError(f"eps must lie in (0, 1], got {self.eps}")
        if self.N < 0:
            raise UsageError(f"N must be non-negative, got {self.N}")
        if self.scan_axis is not None:
            if self.scan_axis not in ("loss", "n"):
                raise UsageError(f"scan axis must be 'loss' or 'n', got {self.scan_axis!r}")
            if not self.scan_values:
                raise UsageError("scan values must be non-empty")
            if list(self.scan_values) != sorted(self.scan_values):
                raise UsageError("scan values must be sorted")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        data = dict(data)
        known = {f for f in cls.__dataclass_fields__} | {"scan"}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        try:
            kwargs: dict[str, Any] = {}
            if "post_selection" in data:
                kwargs["post_selection"] = PostSelectionConfig(**data.pop("post_selection"))
            if "channel" in data:
                kwargs["channel"] = ChannelModel(**data.pop("channel"))
            scan = data.pop("scan", None)
            if scan is not None:
                kwargs["scan_axis"] = scan["axis"]
                kwargs["scan_values"] = tuple(float(v) for v in scan["values"])
            if "scan_values" in data:
                data["scan_values"] = tuple(float(v) for v in data["scan_values"])
            kwargs.update(data)
            return cls(**kwargs)
        except (TypeError, KeyError, DomainError) as exc:
            raise UsageError(f"invalid config: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc

    def at(self, *, loss_db: float | None = None, N: float | None = None, mu_max: float | None = None):
        """Copy with one operating-point coordinate replaced."""
        out = self
        if loss_db is not None:
            out = replace(out, channel=replace(out.channel, loss_db=float(loss_db)))
        if N is not None:
            out = replace(out, N=float(N))
        if mu_max is not None:
            out = replace(out, post_selection=out.post_selection.with_mu_max(float(mu_max)))
        return out


@dataclass
class PointResult:
    loss_db: float
    N: float
    mu_max: float
    e_mis: float
    report: KeyRateReport | None
    error: str | None = None

    def row(self) -> dict[str, float]:
        out = {"loss_db": self.loss_db, "N": self.N, "mu_max": self.mu_max}
        obs = self.report.observables if self.report is not None else None
        counts = obs.as_dict() if obs is not None else {}
        for name in COLUMNS[3:13]:
            out[name] = float(counts.get(name, math.nan))
        rep = self.report.as_dict() if self.report is not None else {}
        for name in COLUMNS[13:]:
            out[name] = float(rep.get(name, math.nan))
        return out

    @property
    def skr(self) -> float:
        return self.report.skr if self.report is not None else 0.0


@lru_cache(maxsize=32)
def _precompute(ps: PostSelectionConfig, n_cut: int):
    return source_stats(ps, n_cut), td_table(ps, n_cut)


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as exc:  # noqa: BLE001 - any module failure is reported with its stage
        raise PipelineError(name, exc) from exc


def _calibrated_channel(cfg: RunConfig) -> ChannelModel:
    ch = cfg.channel
    if cfg.calibrate_e_z is None:
        return ch
    at = ch if cfg.calibration_loss_db is None else replace(ch, loss_db=cfg.calibration_loss_db)
    e_mis = _stage("calibration", calibrate_misalignment, cfg.post_selection, at, cfg.calibrate_e_z)
    return replace(ch, e_mis=e_mis)


def _evaluate(cfg: RunConfig, observables: Observables | None) -> PointResult:
    ps = cfg.post_selection
    ch = cfg.channel if observables is not None else _calibrated_channel(cfg)
    stats, td = _stage("source statistics", _precompute, ps, cfg.n_cut)
    if observables is not None:
        obs, guesses = observables, None
    else:
        expected = _stage("simulation", expected_observables, ps, ch, cfg.N)
        if cfg.mode == "expected":
            obs, guesses = expected, None
        else:
            obs = _stage("simulation", sample_observables, ps, ch, int(cfg.N), cfg.seed)
            guesses = expected
    report = _stage(
        "estimation",
        estimate_key_rate,
        obs,
        ps,
        ch.q_x,
        cfg.eps,
        guesses=guesses,
        n_cut=cfg.n_cut,
        stats=stats,
        td=td,
    )
    return PointResult(ch.loss_db, obs.N, ps.mu_max, ch.e_mis, report)


def run_point(cfg: RunConfig, observables: Observables | None = None) -> PointResult:
    """Evaluate one operating point; optionally maximize the rate over ``mu_max``.

    ``observables`` bypasses the simulator (and the misalignment fit).
    """
    if not cfg.optimize_mu_max or observables is not None:
        return _evaluate(cfg, observables)

    def neg_skr(mu_max: float) -> float:
        return -_evaluate(cfg.at(mu_max=mu_max), None).skr

    best = minimize_scalar(neg_skr, bounds=MU_MAX_BOUNDS, method="bounded", options={"xatol": 2e-3})
    return _evaluate(cfg.at(mu_max=float(best.x)), None)


def run_scan(cfg: RunConfig, observables: Observables | None = None) -> list[PointResult]:
    """One point per scan value, ordered by axis value; failures stay in-row."""
    if cfg.scan_axis is None:
        return [run_point(cfg, observables)]
    rows = []
    for value in sorted(cfg.scan_values):
        point = cfg.at(loss_db=value) if cfg.scan_axis == "loss" else cfg.at(N=value)
        try:
            rows.append(run_point(point, observables))
        except PipelineError as exc:
            ch = point.channel
            rows.append(PointResult(ch.loss_db, point.N, point.post_selection.mu_max, ch.e_mis, None, str(exc)))
    return rows


# ---------------------------------------------------------------------------
# emission


def emit(results: Sequence[PointResult], fmt: str = "csv", path: str | Path | None = None) -> str:
    """Serialize results with 17 significant digits; write to ``path`` if given."""
    if not results:
        raise UsageError("nothing to emit: empty result list")
    rows = [r.row() for r in results]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow(["%.17g" % row[c] for c in COLUMNS])
        text = buf.getvalue()
    elif fmt == "json":
        records = []
        for res, row in zip(results, rows):
            rec = {c: row[c] for c in COLUMNS}
            rec["e_mis"] = res.e_mis
            rec["status"] = res.error if res.error is not None else res.report.status
            if res.report is not None:
                rep = res.report.as_dict()
                rec.update({k: rep[k] for k in ("e_X1_ideal_U", "M_X1_ideal_L", "m_X1_ideal_U")})
            records.append(rec)
        # repr of a float round-trips exactly
        text = json.dumps(records, indent=2) + "\n"
    else:
        raise UsageError(f"unknown format {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def parse(text: str, fmt: str = "csv") -> list[dict[str, Any]]:
    """Inverse of :func:`emit` (values as floats)."""
    if fmt == "csv":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise UsageError("unexpected CSV header")
        return [{k: float(v) for k, v in row.items()} for row in reader]
    if fmt == "json":
        return json.loads(text)
    raise UsageError(f"unknown format {fmt!r}")


# ---------------------------------------------------------------------------
# command line


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fpqkd", description="Finite-key rates of fully passive time-bin QKD.")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--loss-db", type=float, help="override the channel loss")
    p.add_argument("--n-pulses", type=float, help="override the number of rounds N")
    p.add_argument("--mode", choices=("expected", "sampled"))
    p.add_argument("--seed", type=int)
    p.add_argument("--scan", choices=("loss", "n"), help="scan axis (values from the config)")
    p.add_argument("--optimize-mu-max", action="store_true", help="maximize the rate over mu_max")
    p.add_argument("--observables", help="JSON observables; bypasses the simulator")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"))
    return p


def _apply_flags(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    changes: dict[str, Any] = {}
    if args.mode is not None:
        changes["mode"] = args.mode
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.optimize_mu_max:
        changes["optimize_mu_max"] = True
    if args.format is not None:
        changes["format"] = args.format
    if args.out is not None:
        changes["output"] = args.out
    if args.observables is not None:
        changes["observables"] = args.observables
    if args.scan is not None:
        if args.scan != cfg.scan_axis:
            raise UsageError(f"--scan {args.scan} needs scan values for that axis in the config")
    elif cfg.scan_axis is not None and (args.loss_db is not None or args.n_pulses is not None):
        # an explicit point overrides the configured scan
        changes["scan_axis"], changes["scan_values"] = None, ()
    cfg = replace(cfg, **changes)
    return cfg.at(loss_db=args.loss_db, N=args.n_pulses)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_flags(RunConfig.load(args.config), args)
        observables = None
        if cfg.observables is not None:
            try:
                observables = Observables.load(cfg.observables)
            except (OSError, json.JSONDecodeError, DomainError) as exc:
                raise UsageError(f"cannot read observables {cfg.observables}: {exc}") from exc
    except UsageError as exc:
        print(f"fpqkd: error: {exc}", file=sys.stderr)
        return 1
    try:
        results = run_scan(cfg, observables)
        failed = [r.error for r in results if r.error is not None]
        text = emit(results, cfg.format, cfg.output)
    except PipelineError as exc:
        print(f"fpqkd: pipeline error in {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"fpqkd: cannot write output: {exc}", file=sys.stderr)
        return 2
    if cfg.output is None:
        sys.stdout.write(text)
    for msg in failed:
        print(f"fpqkd: point failed: {msg}", file=sys.stderr)
    return 2 if failed and len(failed) == len(results) else 0


def config_dict(cfg: RunConfig) -> dict:
    out = asdict(cfg)
    out["scan_values"] = list(cfg.scan_values)
    return out


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
