"""Monte-Carlo NMSE benchmarking of ChannelComp against AirComp and OFDMA.

Every trial draws from its own generator,
``trial_rng(master_seed, scheme_label, snr_index, trial_index)``, so results
are reproducible bit for bit and independent of evaluation order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .baselines import aircomp_estimate, aircomp_scale, nomographic_map, ofdma_detect, ofdma_estimate
from .channel import ChannelConfig, draw_fading, mac_transmit, power_control, sigma_from_snr, trial_rng
from .design import InfeasibleDesign, ModulationDesign, design_modulation, load_design, verify_exact_feasibility
from .functions import FunctionSpec, enumerate_multiset_classes, load_value_table, make_function
from .modem import DecoderTable, Encoder, Quantizer, build_decoder_table, decode

__all__ = [
    "SCHEMES",
    "CSV_COLUMNS",
    "ConfigError",
    "ExperimentConfig",
    "NmseRow",
    "NmseReport",
    "DigitalLink",
    "nmse",
    "quantization_nmse",
    "prepare_link",
    "run_monte_carlo",
    "preset",
    "run_design_batch",
]

logger = logging.getLogger(__name__)

SCHEMES = ("channelcomp", "aircomp", "ofdma")
CSV_COLUMNS = ("scheme", "snr_db", "nmse", "trials", "clamp_count")
DEFAULT_SNR_GRID = tuple(float(s) for s in range(-5, 28, 4))


class ConfigError(ValueError):
    pass


def nmse(truths, estimates, variant: str = "standard") -> float:
    """Normalized mean squared error.

    ``standard``: ``sum (f - f_hat)^2 / sum f^2`` with ``0/0 = 0`` and ``+inf``
    when the truths are all zero but the estimates are not.  ``mean``:
    ``sum (f - f_hat)^2 / (N |mean f|)``, the unsquared-denominator form.
    """
    f = np.asarray(truths, dtype=float)
    fh = np.asarray(estimates, dtype=float)
    if f.shape != fh.shape or f.size == 0:
        raise ValueError("truths and estimates must be equal-length and non-empty")
    err = float(np.sum((f - fh) ** 2))
    if variant == "standard":
        den = float(np.sum(f**2))
    elif variant == "mean":
        den = f.size * abs(float(np.mean(f)))
    else:
        raise ValueError(f"unknown NMSE variant {variant!r}")
    if den == 0:
        return 0.0 if err == 0 else math.inf
    return err / den


@dataclass
class ExperimentConfig:
    functions: list[str] = field(default_factory=lambda: ["sum"])
    K: int = 4
    schemes: list[str] = field(default_factory=lambda: list(SCHEMES))
    snr_db: list[float] = field(default_factory=lambda: list(DEFAULT_SNR_GRID))
    trials: int = 100
    input_model: str = "discrete"
    lo: float = 0.0
    hi: float = 7.0
    q: list[int] = field(default_factory=lambda: [8])
    master_seed: int = 0
    designs: dict[str, str] = field(default_factory=dict)
    P: float | None = None
    n_rand: int = 1000
    allow_infeasible: bool = False
    delta: float = 1e-3
    temperature: float | None = None
    fading: str = "none"
    gain_floor: float = 0.05
    nmse_variant: str = "standard"

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.snr_db:
            raise ConfigError("SNR grid must be non-empty")
        if not self.functions:
            raise ConfigError("at least one function is required")
        bad = set(self.schemes) - set(SCHEMES)
        if bad or not self.schemes:
            raise ConfigError(f"schemes must be a non-empty subset of {SCHEMES}, got {self.schemes}")
        if self.input_model not in ("discrete", "continuous"):
            raise ConfigError(f"unknown input model {self.input_model!r}")
        if self.input_model == "discrete" and len(self.q) != 1:
            raise ConfigError("discrete inputs need exactly one quantizer size")
        if not self.q or any(int(v) < 2 for v in self.q):
            raise ConfigError("quantizer sizes must be >= 2")
        if not self.lo < self.hi:
            raise ConfigError("need lo < hi")
        if self.K < 2:
            raise ConfigError("K must be >= 2")
        if self.nmse_variant not in ("standard", "mean"):
            raise ConfigError(f"unknown NMSE variant {self.nmse_variant!r}")
        self.snr_db = [float(s) for s in self.snr_db]
        self.q = [int(v) for v in self.q]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class NmseRow:
    scheme: str
    snr_db: float
    nmse: float
    trials: int
    clamp_count: int
    channel_uses: int


@dataclass
class NmseReport:
    rows: list[NmseRow]
    metadata: dict

    def get(self, scheme: str, snr_db: float) -> float:
        for r in self.rows:
            if r.scheme == scheme and r.snr_db == snr_db:
                return r.nmse
        raise KeyError((scheme, snr_db))

    def curve(self, scheme: str) -> tuple[np.ndarray, np.ndarray]:
        rows = [r for r in self.rows if r.scheme == scheme]
        return np.array([r.snr_db for r in rows]), np.array([r.nmse for r in rows])

    @property
    def schemes(self) -> list[str]:
        return list(dict.fromkeys(r.scheme for r in self.rows))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r.scheme, repr(r.snr_db), repr(r.nmse), r.trials, r.clamp_count])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    def to_json(self) -> str:
        return json.dumps({"rows": [asdict(r) for r in self.rows], "metadata": self.metadata}, indent=2)

    def write_json(self, path) -> None:
        Path(path).write_text(self.to_json())


@dataclass
class DigitalLink:
    """Everything the digital schemes need for one (function, q) pair."""

    spec: FunctionSpec
    quantizer: Quantizer
    design: ModulationDesign
    table: DecoderTable
    classes: list = field(default_factory=list, repr=False)
    encoder: Encoder = field(init=False)

    def __post_init__(self):
        self.encoder = Encoder(self.design.x)
        self._value = {c.counts: c.value for c in self.classes}

    def class_value(self, levels) -> float:
        """``f`` of a level tuple exactly as the decoder table sees it."""
        return self._value[tuple(np.bincount(levels, minlength=self.quantizer.q).tolist())]

    @property
    def x_norm(self) -> float:
        return float(np.linalg.norm(self.design.x))


def _function(name: str, K: int, q: int, levels) -> FunctionSpec:
    if name.endswith(".json"):
        spec = load_value_table(name)
        if spec.K != K or spec.q != q:
            raise ConfigError(f"value table {name} has K={spec.K}, q={spec.q}; config needs K={K}, q={q}")
        return spec
    try:
        return make_function(name, K, q, level_values=levels)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _label(name: str) -> str:
    return Path(name).stem if name.endswith(".json") else name


def prepare_link(cfg: ExperimentConfig, name: str, q: int) -> DigitalLink:
    """Build (or load) the modulation design and decoder for one function and q."""
    Q = Quantizer(cfg.lo, cfg.hi, q)
    spec = _function(name, cfg.K, q, Q.levels)
    classes = enumerate_multiset_classes(spec)
    key = f"{_label(name)}-q{q}"
    if key in cfg.designs:
        design = load_design(cfg.designs[key])
        if design.q != q:
            raise ConfigError(f"design {cfg.designs[key]} has q={design.q}, expected {q}")
        design.exact_feasible = bool(design.exact_feasible and verify_exact_feasibility(design.x, classes).passed)
    else:
        design = design_modulation(classes, P=cfg.P, n_rand=cfg.n_rand, seed=cfg.master_seed)
    if not design.exact_feasible and not cfg.allow_infeasible:
        raise InfeasibleDesign(f"design for {key} is not exactly feasible (margin {design.margin:.3g})")
    return DigitalLink(spec, Q, design, build_decoder_table(design.x, classes), classes)


def quantization_nmse(spec_name: str, K: int, q: int, lo: float, hi: float, n: int, seed: int = 0) -> float:
    """Channel-free NMSE of quantize -> dequantize -> f on uniform inputs."""
    rng = np.random.default_rng(seed)
    Q = Quantizer(lo, hi, q)
    spec = make_function(spec_name, K, q)
    v = rng.uniform(lo, hi, size=(n, K))
    truth = np.array([spec.evaluate_raw(row) for row in v])
    est = np.array([spec.evaluate_raw(row) for row in Q.dequantize(Q.quantize(v))])
    return nmse(truth, est)


def _draw_inputs(cfg: ExperimentConfig, rng: np.random.Generator, ref: DigitalLink) -> tuple[np.ndarray, float]:
    """Raw input values and the true function value."""
    if cfg.input_model == "discrete":
        levels = rng.integers(0, ref.quantizer.q, size=cfg.K)
        # class value avoids summation-order rounding against the decoder table
        return ref.quantizer.dequantize(levels), ref.class_value(levels)
    v = rng.uniform(cfg.lo, cfg.hi, size=cfg.K)
    return v, ref.spec.evaluate_raw(v)


def run_monte_carlo(cfg: ExperimentConfig, links: dict[tuple[str, int], DigitalLink] | None = None) -> NmseReport:
    """NMSE of every scheme at every SNR point.

    ``links`` may carry prepared designs keyed by ``(function, q)``; missing
    ones are solved or loaded as the config says.  AirComp is referenced to the
    first quantizer size: its noise level and peak amplitude come from that
    design, so all schemes share one noise convention per SNR point.
    """
    links = dict(links or {})
    channel = ChannelConfig(0.0, cfg.fading, cfg.gain_floor)
    multi_q = len(cfg.q) > 1
    rows: list[NmseRow] = []
    meta_designs = {}
    for name in cfg.functions:
        for q in cfg.q:
            if (name, q) not in links:
                links[(name, q)] = prepare_link(cfg, name, q)
            link = links[(name, q)]
            meta_designs[f"{_label(name)}-q{q}"] = {
                "margin": link.design.margin if np.isfinite(link.design.margin) else None,
                "exact_feasible": link.design.exact_feasible,
                "provenance": link.design.provenance,
                "P": link.design.P,
                "table_points": len(link.table),
            }
        ref = links[(name, cfg.q[0])]
        truth_spec = ref.spec
        nmap = None
        if "aircomp" in cfg.schemes:
            try:
                nmap = nomographic_map(truth_spec.name, cfg.lo, cfg.hi, cfg.delta, cfg.temperature)
            except ValueError as exc:
                raise ConfigError(f"AirComp needs a nomographic preset: {exc}") from exc
        for scheme in cfg.schemes:
            qs = cfg.q if scheme != "aircomp" else [cfg.q[0]]
            for q in qs:
                link = links[(name, q)]
                label = f"{scheme}-{_label(name)}" + (f"-q{q}" if multi_q and scheme != "aircomp" else "")
                for si, snr in enumerate(cfg.snr_db):
                    sigma = sigma_from_snr(snr, link.x_norm)
                    truths = np.empty(cfg.trials)
                    ests = np.empty(cfg.trials)
                    clamps: Counter = Counter()
                    for t in range(cfg.trials):
                        rng = trial_rng(cfg.master_seed, label, si, t)
                        values, truths[t] = _draw_inputs(cfg, rng, ref)
                        if scheme == "aircomp":
                            scale = aircomp_scale(link.design.x, nmap)
                            ests[t] = aircomp_estimate(values, nmap, sigma, scale, rng, clamps)
                            continue
                        levels = link.quantizer.quantize(values)
                        if scheme == "channelcomp":
                            h = draw_fading(cfg.K, channel, rng)
                            y = mac_transmit(link.encoder(levels), h, power_control(h), sigma, rng)
                            ests[t] = decode(y, link.table).value
                        elif cfg.input_model == "discrete":
                            ests[t] = link.class_value(ofdma_detect(levels, link.encoder, sigma, rng))
                        else:
                            ests[t] = ofdma_estimate(levels, link.encoder, link.spec, sigma, rng,
                                                     quantizer=link.quantizer)
                    rows.append(NmseRow(
                        scheme=label,
                        snr_db=snr,
                        nmse=nmse(truths, ests, cfg.nmse_variant),
                        trials=cfg.trials,
                        clamp_count=int(sum(clamps.values())),
                        channel_uses=cfg.K if scheme == "ofdma" else 1,
                    ))
                logger.info("%s done", label)
    meta = {"config": cfg.to_dict(), "designs": meta_designs, "seed": cfg.master_seed}
    return NmseReport(rows, meta)


def preset(name: str) -> ExperimentConfig:
    """Experiment presets.

    ``fig4``: design batch for sum/max/product/quadratic with K=2, q=8.
    ``fig5``: discrete inputs {0..7}, K=4, sum and product, all schemes.
    ``fig6``: continuous inputs on [0, 7], K=4, sum, q in {4, 16}.
    """
    if name == "fig4":
        return ExperimentConfig(functions=["sum", "max", "product", "quadratic"], K=2, q=[8],
                                schemes=["channelcomp"], snr_db=[math.inf], trials=1)
    if name == "fig5":
        return ExperimentConfig(functions=["sum", "product"], K=4, q=[8], trials=100, input_model="discrete")
    if name == "fig6":
        return ExperimentConfig(functions=["sum"], K=4, q=[4, 16], trials=100, input_model="continuous")
    raise ConfigError(f"unknown preset {name!r}; choose fig4, fig5 or fig6")


def run_design_batch(cfg: ExperimentConfig, outdir=None) -> dict[str, DigitalLink]:
    """Design every (function, q) of ``cfg``; optionally write design and constellation files.

    For each design ``<function>-q<q>.json`` holds the modulation vector and
    ``<function>-q<q>-points.csv`` the received constellation table.
    """
    from .design import save_design

    out = {}
    for name in cfg.functions:
        for q in cfg.q:
            key = f"{_label(name)}-q{q}"
            link = prepare_link(ExperimentConfig(**{**cfg.to_dict(), "allow_infeasible": True}), name, q)
            out[key] = link
            if outdir is not None:
                outdir = Path(outdir)
                outdir.mkdir(parents=True, exist_ok=True)
                save_design(link.design, outdir / f"{key}.json")
                write_points_csv(link.table, outdir / f"{key}-points.csv")
    return out


def write_points_csv(table: DecoderTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "re", "im", "value"])
        for k, (p, v) in enumerate(zip(table.points, table.values)):
            w.writerow([k, repr(float(p.real)), repr(float(p.imag)), repr(float(v))])
