"""``effmem`` command line: verify, approx, bench, flops.

Exit codes: 0 success, 1 a verification check failed, 2 bad configuration,
3 output could not be written. Settings come from defaults, then an optional
``--config`` JSON file, then command-line flags (highest priority).

``EFFMEM_NUM_THREADS`` caps the BLAS thread pool.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
from dataclasses import dataclass, field

from .analysis import attention_ratio, compare_variants, flop_breakdown, time_call
from .errors import EffMemError
from .kernels import AttentionVariant, PoolingSpec, Variant, attend
from .synthetic import gen_projected_bank, gen_queries
from .verify import run_suite

THREADS_ENV = "EFFMEM_NUM_THREADS"
COMMANDS = ("verify", "approx", "bench", "flops")


class ConfigError(Exception):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"config error in '{field_name}': {message}")
        self.field_name = field_name


@dataclass
class RunConfig:
    command: str = "verify"
    L: int = 64
    w: int = 8
    h: int = 8
    frames: int = 2
    P: int = 4
    d: int = 32
    d_q: int = 32
    pooling: list = field(default_factory=lambda: [(2, 2)])
    variants: list = field(default_factory=lambda: ["EfficientRebalanced"])
    bandwidths: list = field(default_factory=lambda: [2])
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    segments: int = 4
    repeats: int = 5
    warmup: int = 2
    out: str | None = None
    format: str = "csv"

    @property
    def n(self) -> int:
        return self.frames * self.w * self.h

    def pooling_specs(self) -> list[PoolingSpec]:
        return [PoolingSpec(lw, lh) for lw, lh in self.pooling]

    def variant_cells(self) -> list[tuple[AttentionVariant, PoolingSpec]]:
        """Cartesian (variant x pooling) cells in config order."""
        return [
            (AttentionVariant.make(tag, spec, self.segments), spec)
            for tag in self.variants
            for spec in self.pooling_specs()
        ]

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError("command", f"must be one of {', '.join(COMMANDS)}")
        for name in ("L", "w", "h", "frames", "d", "d_q", "segments", "repeats"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(name, f"must be an integer >= 1, got {value!r}")
        for name in ("P", "warmup"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ConfigError(name, f"must be an integer >= 0, got {value!r}")
        if self.format not in ("csv", "json"):
            raise ConfigError("format", f"must be csv or json, got {self.format!r}")
        pooling = []
        for item in self.pooling:
            try:
                lw, lh = (int(v) for v in item)
                spec = PoolingSpec(lw, lh)
            except (TypeError, ValueError, EffMemError) as exc:
                raise ConfigError("pooling", f"bad window {item!r}: {exc}") from None
            if self.w % lw or self.h % lh:
                raise ConfigError(
                    "pooling",
                    f"window {lw}x{lh} does not divide the grid (w={self.w}, h={self.h}, l_w={lw}, l_h={lh})",
                )
            pooling.append((spec.l_w, spec.l_h))
        self.pooling = pooling
        try:
            self.variants = [Variant(v).value for v in self.variants]
        except ValueError as exc:
            raise ConfigError("variants", str(exc)) from None
        if Variant.LOCAL_WINDOWED.value in self.variants and (
            self.L % self.segments or (self.n + self.P) % self.segments
        ):
            raise ConfigError("segments", f"{self.segments} segments must divide L={self.L} and n+P={self.n + self.P}")
        for b in self.bandwidths:
            if not isinstance(b, int) or isinstance(b, bool) or b < 1:
                raise ConfigError("bandwidths", f"must be integers >= 1, got {b!r}")
        for s in self.seeds:
            if not isinstance(s, int) or isinstance(s, bool) or s < 0:
                raise ConfigError("seeds", f"must be non-negative integers, got {s!r}")
        if not self.seeds:
            raise ConfigError("seeds", "at least one seed is required")
        return self


# ---------------------------------------------------------------------------
# argument parsing


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _pooling_list(text: str) -> list[tuple[int, int]]:
    out = []
    for t in text.split(","):
        t = t.strip().lower()
        if not t:
            continue
        lw, _, lh = t.partition("x")
        out.append((int(lw), int(lh or lw)))
    return out


def _name_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="effmem", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("verify", "run the equivalence suite"),
        ("approx", "sweep approximation error against exact attention"),
        ("bench", "time each variant against exact attention"),
        ("flops", "print analytic operation counts"),
    ):
        p = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file with RunConfig fields")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--seeds", type=_int_list, help="comma-separated seeds")
        for dim in ("L", "w", "h", "frames", "P", "d"):
            p.add_argument(f"--{dim}", type=int)
        p.add_argument("--d-q", dest="d_q", type=int)
        p.add_argument("--pooling", type=_pooling_list, help="e.g. 2x2,4x4")
        p.add_argument("--variants", type=_name_list, help="e.g. Exact,EfficientRebalanced")
        p.add_argument("--bandwidths", type=_int_list)
        p.add_argument("--segments", type=int)
        p.add_argument("--repeats", type=int)
        p.add_argument("--warmup", type=int)
    return parser


def load_config(argv=None) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    merged: dict = {}
    config_path = args.pop("config", None)
    if config_path is not None:
        try:
            with open(config_path) as fh:
                merged.update(json.load(fh))
        except OSError as exc:
            raise ConfigError("config", f"cannot read {config_path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{config_path} is not valid JSON: {exc}") from None
    merged.update(args)
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(merged) - known)
    if unknown:
        raise ConfigError(unknown[0], "unknown field")
    return RunConfig(**merged).validate()


# ---------------------------------------------------------------------------
# output


def render(rows: list[dict], columns: list[str], fmt: str) -> str:
    if fmt == "json":
        return json.dumps([{c: r[c] for c in columns} for r in rows], indent=1) + "\n"
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def emit(cfg: RunConfig, rows: list[dict], columns: list[str]) -> None:
    text = render(rows, columns, cfg.format)
    if cfg.out is None:
        sys.stdout.write(text)
        return
    with open(cfg.out, "w") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# commands


def cmd_verify(cfg: RunConfig) -> int:
    results = run_suite(
        cfg.L, cfg.w, cfg.h, cfg.frames, cfg.P, cfg.d, cfg.d_q,
        cfg.pooling_specs(), cfg.seeds, bandwidth=cfg.bandwidths[0], segments=cfg.segments,
    )
    for r in results:
        print(r.line())
    if cfg.out is not None:
        rows = [{"check": r.name, "passed": r.passed, "worst": r.worst, "tolerance": r.tolerance, "cases": r.cases} for r in results]
        emit(cfg, rows, ["check", "passed", "worst", "tolerance", "cases"])
    return 0 if all(r.passed for r in results) else 1


APPROX_COLUMNS = [
    "variant", "l_w", "l_h", "bandwidth", "seed", "L", "n", "P", "d",
    "rel_frobenius", "max_row_rel", "locality_c", "wall_ns_exact", "wall_ns_variant",
]


def approx_rows(cfg: RunConfig) -> list[dict]:
    cells = cfg.variant_cells()
    variants = [v for v, _ in cells]
    results = {}
    for bw in cfg.bandwidths:
        for seed in cfg.seeds:
            q = gen_queries(cfg.L, cfg.d, seed)
            bank = gen_projected_bank(cfg.frames, cfg.w, cfg.h, cfg.P, cfg.d, seed, bw)
            reports = compare_variants(q, bank, variants, cfg.repeats, cfg.warmup) if variants else []
            for i, rep in enumerate(reports):
                results[i, bw, seed] = rep
    rows = []
    for i, (variant, spec) in enumerate(cells):
        for bw in cfg.bandwidths:
            for seed in cfg.seeds:
                row = results[i, bw, seed].as_dict()
                row.update(variant=variant.tag.value, l_w=spec.l_w, l_h=spec.l_h, bandwidth=bw, seed=seed)
                rows.append(row)
    return rows


def cmd_approx(cfg: RunConfig) -> int:
    emit(cfg, approx_rows(cfg), APPROX_COLUMNS)
    return 0


BENCH_COLUMNS = ["variant", "l_w", "l_h", "L", "n", "P", "d", "wall_ns", "wall_ns_exact", "speedup_vs_exact"]


def bench_rows(cfg: RunConfig) -> list[dict]:
    cells = cfg.variant_cells()
    if not cells:
        return []
    seed = cfg.seeds[0]
    q = gen_queries(cfg.L, cfg.d, seed)
    bank = gen_projected_bank(cfg.frames, cfg.w, cfg.h, cfg.P, cfg.d, seed, None)
    exact = AttentionVariant(Variant.EXACT)
    t_exact, _ = time_call(lambda: attend(q, bank, exact), cfg.repeats, cfg.warmup)
    rows = []
    for variant, spec in cells:
        t, _ = time_call(lambda v=variant: attend(q, bank, v), cfg.repeats, cfg.warmup)
        rows.append(dict(
            variant=variant.tag.value, l_w=spec.l_w, l_h=spec.l_h, L=cfg.L, n=cfg.n, P=cfg.P, d=cfg.d,
            wall_ns=t, wall_ns_exact=t_exact, speedup_vs_exact=t_exact / t,
        ))
    return rows


def cmd_bench(cfg: RunConfig) -> int:
    emit(cfg, bench_rows(cfg), BENCH_COLUMNS)
    return 0


FLOPS_COLUMNS = [
    "variant", "l_w", "l_h", "L", "n", "P", "d",
    "attention_flops", "normalize_flops", "pooling_flops", "total_flops", "attention_ratio",
]


def flops_rows(cfg: RunConfig) -> list[dict]:
    rows = []
    for variant, spec in cfg.variant_cells():
        fb = flop_breakdown(variant, cfg.L, cfg.n, cfg.P, cfg.d)
        rows.append(dict(
            variant=variant.tag.value, l_w=spec.l_w, l_h=spec.l_h, L=cfg.L, n=cfg.n, P=cfg.P, d=cfg.d,
            attention_flops=fb.attention, normalize_flops=fb.normalize, pooling_flops=fb.pooling,
            total_flops=fb.total, attention_ratio=attention_ratio(variant, cfg.L, cfg.n, cfg.P, cfg.d),
        ))
    return rows


def cmd_flops(cfg: RunConfig) -> int:
    emit(cfg, flops_rows(cfg), FLOPS_COLUMNS)
    return 0


HANDLERS = {"verify": cmd_verify, "approx": cmd_approx, "bench": cmd_bench, "flops": cmd_flops}


def _thread_limit():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return None
    try:
        n = int(value)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(THREADS_ENV, f"must be a positive integer, got {value!r}") from None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    try:
        cfg = load_config(argv)
        limiter = _thread_limit()
    except ConfigError as exc:
        print(f"effmem: {exc}", file=sys.stderr)
        return 2
    try:
        return HANDLERS[cfg.command](cfg)
    except OSError as exc:
        print(f"effmem: cannot write output: {exc}", file=sys.stderr)
        return 3
    except EffMemError as exc:
        print(f"effmem: {exc}", file=sys.stderr)
        return 2
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
