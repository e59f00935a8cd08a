"""Command-line batch driver.

Runs the randomized estimator and the exact oracle over a grid of times and
writes one CSV row per time::

    lindrand --model atom.json --time 0.1 --time 1 --shots 20000 --mode shots --seed 7

Exit codes:
    0 success, 2 usage, 3 invalid configuration, 4 invalid model,
    5 file I/O, 6 run precondition violated (e.g. too few segments).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass
from typing import Any, Sequence

import numpy as np

from . import __version__
from .errors import CapacityError, ConfigurationError, DomainError, LindrandError, ModelError, PauliParseError
from .model import LindbladModel, load_model
from .oracle import exact_expectation
from .pauli import PauliSum
from .sampler import auto_segments
from .simulator import MODES, estimate

log = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_MODEL, EXIT_IO, EXIT_PRECONDITION = 0, 2, 3, 4, 5, 6

COLUMNS = ("t", "r", "Q", "C", "estimate", "exact", "abs_error", "hoeffding_95")

DEFAULTS = {
    "times": [1.0],
    "segments": "auto",
    "delta": 1e-2,
    "shots": 1000,
    "mode": "exact",
    "seed": None,
    "observable": None,
    "initial": None,
    "out": None,
}


class RunConfigError(LindrandError, ValueError):
    """A run configuration value is missing or invalid."""


@dataclass(frozen=True)
class RunConfig:
    model: str
    times: tuple[float, ...]
    segments: int | str
    delta: float
    shots: int
    mode: str
    seed: int
    observable: str | None
    initial: str | None
    out: str | None

    def __post_init__(self):
        if not self.times or any(not math.isfinite(t) or t < 0 for t in self.times):
            raise RunConfigError("times must be a non-empty list of non-negative numbers")
        bad_int = isinstance(self.segments, bool) or not isinstance(self.segments, int) or self.segments < 1
        if self.segments != "auto" and bad_int:
            raise RunConfigError(f"segments must be a positive integer or 'auto', got {self.segments!r}")
        if not 0 < self.delta < 1 / math.e:
            raise RunConfigError(f"delta must lie in (0, 1/e), got {self.delta}")
        if self.shots < 1:
            raise RunConfigError(f"shots must be positive, got {self.shots}")
        if self.mode not in MODES:
            raise RunConfigError(f"mode must be one of {MODES}, got {self.mode!r}")

    def digest(self) -> str:
        """Hash of every setting that affects the numbers (the output path does not)."""
        fields = {k: v for k, v in asdict(self).items() if k != "out"}
        doc = json.dumps(fields, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(doc.encode()).hexdigest()


def _segments(value: Any) -> int | str:
    if value == "auto":
        return "auto"
    try:
        return int(value)
    except (TypeError, ValueError):
        raise RunConfigError(f"segments must be a positive integer or 'auto', got {value!r}") from None


def build_config(args: argparse.Namespace) -> RunConfig:
    """Merge the optional config file with flags; flags win on conflict."""
    merged = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise RunConfigError(f"{args.config}: invalid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise RunConfigError("config file must hold a JSON object")
        unknown = set(doc) - set(DEFAULTS) - {"model"}
        if unknown:
            raise RunConfigError(f"unknown config field(s) {sorted(unknown)}")
        merged.update(doc)
    flags = {
        "model": args.model,
        "times": args.time,
        "segments": args.segments,
        "delta": args.delta,
        "shots": args.shots,
        "mode": args.mode,
        "seed": args.seed,
        "observable": args.observable,
        "initial": args.initial,
        "out": args.out,
    }
    merged.update({k: v for k, v in flags.items() if v is not None})
    if not merged.get("model"):
        raise RunConfigError("a model is required (--model or 'model' in the config file)")
    seed = merged["seed"]
    if seed is None:
        seed = int(np.random.SeedSequence().entropy)
        log.info("no seed given; using %d", seed)
    try:
        return RunConfig(
            model=str(merged["model"]),
            times=tuple(float(t) for t in merged["times"]),
            segments=_segments(merged["segments"]),
            delta=float(merged["delta"]),
            shots=int(merged["shots"]),
            mode=str(merged["mode"]),
            seed=int(seed),
            observable=merged["observable"],
            initial=merged["initial"],
            out=merged["out"],
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, RunConfigError):
            raise
        raise RunConfigError(f"invalid configuration value: {exc}") from exc


def load_observable(spec: str | None, n: int) -> np.ndarray:
    """``proj0..0`` (or ``None``) for ``|0..0><0..0|``, else a JSON Pauli-sum file.

    The file holds a list of ``{"pauli": label, "coeff": real}`` terms.
    """
    dim = 1 << n
    if spec is None or spec == "proj" + "0" * n:
        out = np.zeros((dim, dim), dtype=complex)
        out[0, 0] = 1
        return out
    if spec.startswith("proj"):
        raise RunConfigError(f"projector shorthand must be 'proj{'0' * n}' for n={n}")
    with open(spec, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise RunConfigError(f"{spec}: invalid JSON ({exc})") from exc
    if not isinstance(doc, list) or not all(isinstance(t, dict) and set(t) == {"pauli", "coeff"} for t in doc):
        raise RunConfigError("observable must be a list of {'pauli', 'coeff'} objects")
    if any(isinstance(t["coeff"], bool) or not isinstance(t["coeff"], (int, float)) for t in doc):
        raise RunConfigError("observable coefficients must be real numbers")
    try:
        return PauliSum.from_list([(t["pauli"], t["coeff"]) for t in doc], n=n).to_matrix()
    except PauliParseError as exc:
        raise RunConfigError(f"observable: {exc}") from exc


def initial_state(spec: str | None, n: int) -> np.ndarray:
    """Computational basis state from a bitstring; defaults to all zeros."""
    bits = spec if spec is not None else "0" * n
    if len(bits) != n or set(bits) - {"0", "1"}:
        raise RunConfigError(f"initial state must be a bitstring of length {n}, got {bits!r}")
    idx = int(bits, 2)
    rho = np.zeros((1 << n, 1 << n), dtype=complex)
    rho[idx, idx] = 1
    return rho


def run(cfg: RunConfig, model: LindbladModel | None = None) -> list[dict[str, float]]:
    """Estimate and oracle value at every time of ``cfg``."""
    m = model if model is not None else load_model(cfg.model)
    obs = load_observable(cfg.observable, m.n)
    rho0 = initial_state(cfg.initial, m.n)
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(cfg.times))
    rows = []
    for t, seed in zip(cfg.times, seeds):
        r = auto_segments(m, t) if cfg.segments == "auto" else cfg.segments
        rep = estimate(m, rho0, obs, t, r, cfg.delta, cfg.shots, rng=seed, mode=cfg.mode)
        if cfg.segments == "auto" and 2 * m.pauli_norm**2 * t**2 >= 1 and rep.c_total > math.e:
            log.warning("t=%g: C=%g exceeds e under the auto segment rule", t, rep.c_total)
        exact = exact_expectation(m, rho0, obs, t)
        rows.append(
            {
                "t": t,
                "r": rep.r,
                "Q": rep.q_order,
                "C": rep.c_total,
                "estimate": rep.estimate,
                "exact": exact,
                "abs_error": abs(rep.estimate - exact),
                "hoeffding_95": rep.hoeffding_95,
            }
        )
    return rows


def format_rows(cfg: RunConfig, rows: Sequence[dict[str, float]]) -> str:
    buf = io.StringIO()
    buf.write(f"# lindrand {__version__}\n# config_sha256 {cfg.digest()}\n# seed {cfg.seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow([v if isinstance(v, int) else f"{v:.17g}" for v in (row[c] for c in COLUMNS)])
    return buf.getvalue()


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lindrand", description="Randomized Lindblad simulation driver.")
    p.add_argument("--model", help="JSON model document")
    p.add_argument("--time", type=float, action="append", help="evaluation time (repeatable)")
    p.add_argument("--segments", help="number of segments r, or 'auto'")
    p.add_argument("--delta", type=float, help="truncation error target in (0, 1/e)")
    p.add_argument("--shots", type=int, help="number of sampled circuits N")
    p.add_argument("--mode", choices=MODES, help="exact: per-circuit trace; shots: one measurement per circuit")
    p.add_argument("--seed", type=int, help="root seed (recorded in the output)")
    p.add_argument("--observable", help="'proj0..0' or a JSON Pauli-sum file")
    p.add_argument("--initial", help="initial computational basis state as a bitstring")
    p.add_argument("--out", help="output CSV path (default stdout)")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = make_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        text = format_rows(cfg, run(cfg))
        if cfg.out:
            with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except RunConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigurationError, DomainError, CapacityError) as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
