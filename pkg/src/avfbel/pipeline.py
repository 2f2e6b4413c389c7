"""End-to-end ablation runs: data, cortical encoders, fusion, BEL, metrics.

Every random choice is derived from ``RunConfig.seed`` by name, so two runs
with the same configuration write byte-identical artifacts.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import auditory_cortex as ac
from . import bel
from . import checkpoint
from . import dataset as ds
from . import fusion as fu
from . import metrics as mt
from . import plotting
from . import visual_cortex as vc
from .numkernel import derive_seed

log = logging.getLogger(__name__)

VARIANTS = ("BEL-m", "BEL-a", "M-BEL", "A-BEL", "AVF-BEL")
SLUGS = {"BEL-m": "bel_m", "BEL-a": "bel_a", "M-BEL": "m_bel", "A-BEL": "a_bel", "AVF-BEL": "avf"}
# which stimulus each variant learns from, and through which encoder
TARGET = {"BEL-m": "music", "BEL-a": "animation", "M-BEL": "music", "A-BEL": "animation",
          "AVF-BEL": "fused"}
TABLE_COLUMNS = ("variant", "precision", "recall", "f1", "similarity")


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    samples: str = ""  # CSV path; empty means synthetic data
    pairs: str = ""
    synthetic_n: int = 760
    render_noise: float = 0.05
    rating_noise: float = 0.05
    music_proportion: float = 0.5
    train_fraction: float = 0.8
    variants: tuple[str, ...] = VARIANTS
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 1e-4
    dropout: float = 0.1
    bel_alpha: float = 0.2
    bel_beta: float = 0.02
    bel_epochs: int = 50
    bel_tol: float = 0.0  # run every epoch so U settles; V halts on its own
    bel_window: int = 4
    thalamic_amplitude: float = 1.0
    gamma: float = 1.0
    threshold: float = 0.5
    svg: bool = True

    def __post_init__(self):
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown:
            raise PipelineError(f"unknown variant(s) {', '.join(unknown)}; choose from {VARIANTS}")
        if not self.variants:
            raise PipelineError("no variants selected")

    @classmethod
    def from_text(cls, text: str, **overrides) -> "RunConfig":
        """Parse flat ``key = value`` lines (``#`` starts a comment)."""
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise PipelineError(f"config line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise PipelineError(f"config line {lineno}: unknown key {key!r}")
            values[key] = _parse_value(types[key], value, lineno)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            v = ",".join(v) if isinstance(v, tuple) else str(v).lower() if isinstance(v, bool) else v
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def bel_config(self, seed: int) -> bel.BelConfig:
        return bel.BelConfig(
            alpha=self.bel_alpha, beta=self.bel_beta, epochs=self.bel_epochs, tol=self.bel_tol,
            window=self.bel_window, thalamic_amplitude=self.thalamic_amplitude, gamma=self.gamma,
            seed=seed,
        )

    def train_config(self, seed: int) -> fu.TrainConfig:
        return fu.TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                              weight_decay=self.weight_decay, dropout=self.dropout, seed=seed)


def _parse_value(kind, value: str, lineno: int):
    kind = kind if isinstance(kind, str) else kind.__name__
    try:
        if kind.startswith("tuple"):
            return tuple(v.strip() for v in value.split(",") if v.strip())
        if kind == "bool":
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return value.lower() in ("true", "1", "yes")
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        return value
    except ValueError:
        raise PipelineError(f"config line {lineno}: bad {kind} value {value!r}") from None


# --------------------------------------------------------------------------
# data and encoders
# --------------------------------------------------------------------------

@dataclass
class Prepared:
    """Dataset arrays and split shared by all variants of one run."""

    data: ds.PairedDataset
    train: np.ndarray
    test: np.ndarray
    features: dict  # modality -> (n, 5)
    targets: dict  # "animation" | "music" | "fused" -> normalized EPP (n,)
    _x_m: np.ndarray | None = None

    def x_m(self, config: RunConfig) -> np.ndarray:
        """Auditory cortex rates (n, 3); jitter seeds follow the music sample ids."""
        if self._x_m is None:
            seeds = [derive_seed(config.seed, "audio", p.music.id) for p in self.data.pairs]
            self._x_m = ac.encode(self.features["music"], seeds=seeds)
        return self._x_m


def load_data(config: RunConfig) -> ds.PairedDataset:
    if config.samples:
        return ds.load_dataset(config.samples, config.pairs or None,
                               music_proportion=config.music_proportion)
    return ds.generate_synthetic(config.synthetic_n, derive_seed(config.seed, "data"),
                                 noise=config.rating_noise, render_noise=config.render_noise,
                                 music_proportion=config.music_proportion)


def prepare(config: RunConfig, data: ds.PairedDataset | None = None) -> Prepared:
    data = load_data(config) if data is None else data
    if len(data) < 2:
        raise PipelineError("need at least two pairs to split into train and test")
    order = np.random.default_rng(derive_seed(config.seed, "split")).permutation(len(data))
    n_train = min(max(int(round(len(data) * config.train_fraction)), 1), len(data) - 1)
    pairs = data.pairs
    feats = {
        "animation": np.array([p.animation.features for p in pairs]),
        "music": np.array([p.music.features for p in pairs]),
    }
    targets = {
        "animation": ds.normalize_epp([p.animation.epp_target for p in pairs]),
        "music": ds.normalize_epp([p.music.epp_target for p in pairs]),
        "fused": ds.normalize_epp([p.epp_target for p in pairs]),
    }
    return Prepared(data, order[:n_train], order[n_train:], feats, targets)


def _min_max(x, train):
    lo, hi = x[train].min(axis=0), x[train].max(axis=0)
    return lo, np.where(hi > lo, hi - lo, 1.0)


def _scale(x, lo, span):
    return np.clip((x - lo) / span, 0.0, 1.0)


@dataclass
class VariantResult:
    variant: str
    report: mt.EvalReport
    weights: bel.BelWeights
    trace: bel.TrainTrace
    state: dict = field(default_factory=dict)  # everything needed to re-run inference


def _encode_inputs(variant: str, prep: Prepared, config: RunConfig):
    """Train the variant's encoders on the train split and return
    ``(inputs (n, d), encoder state)``."""
    tr = prep.train
    vcfg = vc.VisualConfig(seed=derive_seed(config.seed, variant, "visual"))
    tcfg = config.train_config(derive_seed(config.seed, variant, "train"))
    if variant == "BEL-m":
        return prep.features["music"], {}
    if variant == "BEL-a":
        return prep.features["animation"], {}
    if variant == "M-BEL":
        return prep.x_m(config), {}
    if variant == "A-BEL":
        visual, head, history, initial = fu.pretrain_visual(
            prep.features["animation"][tr], prep.targets["animation"][tr], vc.init(vcfg), tcfg, vcfg)
        x = vc.encode(prep.features["animation"], visual, vcfg)
        return x, {"visual": visual, "readout": head, "visual_seed": vcfg.seed,
                   "history": [(0, initial)] + history}
    fcfg = fu.FusionConfig(seed=derive_seed(config.seed, variant, "fusion"))
    x_m = prep.x_m(config)
    res = fu.fit(prep.features["animation"][tr], x_m[tr], prep.targets["fused"][tr],
                 vc.init(vcfg), fu.init(fcfg), tcfg, vcfg)
    x_a = vc.encode(prep.features["animation"], res.visual, vcfg)
    x_am, _ = fu.forward(x_a, x_m, res.fusion)
    return x_am, {"visual": res.visual, "fusion": res.fusion, "visual_seed": vcfg.seed,
                  "history": [(0, res.initial_mse)] + res.history}


def run_variant(variant: str, config: RunConfig, prep: Prepared | None = None) -> VariantResult:
    if variant not in VARIANTS:
        raise PipelineError(f"unknown variant {variant!r}")
    prep = prepare(config) if prep is None else prep
    try:
        x, state = _encode_inputs(variant, prep, config)
        target = prep.targets[TARGET[variant]]
        tr, te = prep.train, prep.test
        lo, span = _min_max(x, tr)
        z = _scale(x, lo, span)
        bcfg = config.bel_config(derive_seed(config.seed, variant, "bel"))
        weights, trace = bel.fit(z[tr], target[tr], bcfg)
        re_min, re_max = float(target[tr].min()), float(target[tr].max())
        gen = bel.normalize_output(bel.infer(z[te], weights, bcfg), re_min, re_max)
    except (ValueError, RuntimeError) as exc:
        raise PipelineError(f"{variant}: {exc}") from exc
    ids = [prep.data.pairs[i].id for i in te]
    report = mt.evaluate(variant, ids, target[te], gen, config.threshold)
    state.update({"scale_lo": lo, "scale_span": span, "re_min": re_min, "re_max": re_max})
    log.info("%s: similarity %.2f%%  F1 %.3f  (%d BEL epochs)",
             variant, report.similarity, report.f1, trace.epochs)
    return VariantResult(variant, report, weights, trace, state)


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------

def _checkpoint_payload(result: VariantResult, config: RunConfig) -> dict:
    w = result.weights
    return {
        "variant": result.variant,
        "config": config.to_text(),
        "bel": {"V": w.V, "U": w.U, "gamma": w.gamma, "R": w.R},
        "trace": dataclasses.asdict(result.trace),
        "state": result.state,
    }


def write_variant(result: VariantResult, config: RunConfig, out: Path) -> None:
    slug = SLUGS[result.variant]
    out.mkdir(parents=True, exist_ok=True)
    (out / f"report_{slug}.json").write_text(result.report.to_json())
    (out / f"epp_comparison_{slug}.csv").write_text(result.report.comparison_csv())
    (out / f"heatmap_{slug}.csv").write_text(bel.heatmap_csv(result.weights))
    checkpoint.save(out / f"checkpoint_{slug}.json", _checkpoint_payload(result, config))
    if "history" in result.state:
        rows = "".join(f"{int(e)},{float(m)!r}\n" for e, m in result.state["history"])
        (out / f"loss_{slug}.csv").write_text("epoch,mse\n" + rows)


def table_rows(reports) -> list[dict]:
    return [{"variant": r.variant, "precision": r.precision, "recall": r.recall, "f1": r.f1,
             "similarity": r.similarity} for r in reports]


def table_csv(rows) -> str:
    out = [",".join(TABLE_COLUMNS)]
    out += [",".join([r["variant"]] + [repr(float(r[c])) for c in TABLE_COLUMNS[1:]]) for r in rows]
    return "\n".join(out) + "\n"


def table_text(rows) -> str:
    head = f"{'Variant':<9} {'Precision':>9} {'Recall':>9} {'F1-score':>9} {'Avg. similarity':>16}"
    body = [f"{r['variant']:<9} {r['precision']:>9.4f} {r['recall']:>9.4f} {r['f1']:>9.4f} "
            f"{r['similarity']:>15.2f}%" for r in rows]
    return "\n".join([head] + body) + "\n"


def write_raster(prep: Prepared, config: RunConfig, out: Path) -> ac.SpikeRecord:
    """Spike raster of the first test pair's music stimulus."""
    pair = prep.data.pairs[prep.test[0]]
    currents = ac.map_currents(np.array(pair.music.features))
    record = ac.simulate(currents, seed=derive_seed(config.seed, "audio", pair.music.id))
    (out / "raster.csv").write_text(ac.raster_csv(record))
    return record


def run_all(config: RunConfig, out=None, data: ds.PairedDataset | None = None) -> list[dict]:
    """Run every configured variant; with ``out`` write all artifacts there."""
    prep = prepare(config, data)
    results = [run_variant(v, config, prep) for v in config.variants]
    rows = table_rows([r.report for r in results])
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(config.to_text())
        for r in results:
            write_variant(r, config, out)
        summary = {
            "dataset": prep.data.metadata,
            "split": {"train": int(len(prep.train)), "test": int(len(prep.test))},
            "table": rows,
            "reports": {r.variant: json.loads(r.report.to_json()) for r in results},
        }
        (out / "results.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        (out / "ablation.csv").write_text(table_csv(rows))
        (out / "ablation.txt").write_text(table_text(rows))
        write_raster(prep, config, out)
        if config.svg:
            render_plots(out)
    return rows


# --------------------------------------------------------------------------
# evaluation from a checkpoint
# --------------------------------------------------------------------------

def evaluate_checkpoint(path, config: RunConfig | None = None,
                        data: ds.PairedDataset | None = None) -> mt.EvalReport:
    """Re-run inference for a saved variant on the test split of ``config``'s data."""
    payload = checkpoint.load(path)
    variant = payload["variant"]
    config = RunConfig.from_text(payload["config"]) if config is None else config
    prep = prepare(config, data)
    state = payload["state"]
    if variant in ("BEL-m", "BEL-a"):
        x = prep.features["music" if variant == "BEL-m" else "animation"]
    elif variant == "M-BEL":
        x = prep.x_m(config)
    else:
        vcfg = vc.VisualConfig(seed=int(state["visual_seed"]))
        x = vc.encode(prep.features["animation"], state["visual"], vcfg)
        if variant == "AVF-BEL":
            x, _ = fu.forward(x, prep.x_m(config), state["fusion"])
    z = _scale(x, state["scale_lo"], state["scale_span"])
    b = payload["bel"]
    weights = bel.BelWeights(b["V"], b["U"], float(b["gamma"]), b["R"])
    bcfg = config.bel_config(derive_seed(config.seed, variant, "bel"))
    gen = bel.normalize_output(bel.infer(z[prep.test], weights, bcfg),
                               state["re_min"], state["re_max"])
    target = prep.targets[TARGET[variant]]
    ids = [prep.data.pairs[i].id for i in prep.test]
    return mt.evaluate(variant, ids, target[prep.test], gen, config.threshold)


# --------------------------------------------------------------------------
# plots
# --------------------------------------------------------------------------

def _read_csv_columns(path: Path) -> dict:
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    cols = {h: [] for h in header}
    for line in lines[1:]:
        for h, v in zip(header, line.split(",")):
            cols[h].append(v)
    return cols


def render_plots(out) -> list[Path]:
    """Draw SVGs next to the comparison, heatmap and raster CSVs in ``out``."""
    out = Path(out)
    written = []
    for variant, slug in SLUGS.items():
        comp = out / f"epp_comparison_{slug}.csv"
        if comp.exists():
            c = _read_csv_columns(comp)
            t = np.array(c["epp_true"], float)
            g = np.array(c["epp_gen"], float)
            svg = plotting.lines({"true EPP": t, "generated EPP": g},
                                 f"{variant}: true vs generated EPP", "test sample", "EPP")
            written.append(out / f"epp_comparison_{slug}.svg")
            written[-1].write_text(svg)
            svg = plotting.scatter(t, g, f"{variant}: generated vs true", "true EPP",
                                   "generated EPP", limits=((0, 1), (0, 1)), diagonal=True)
            written.append(out / f"epp_scatter_{slug}.svg")
            written[-1].write_text(svg)
        loss = out / f"loss_{slug}.csv"
        if loss.exists():
            c = _read_csv_columns(loss)
            written.append(out / f"loss_{slug}.svg")
            written[-1].write_text(plotting.lines({"train MSE": np.array(c["mse"], float)},
                                                  f"{variant}: encoder training loss",
                                                  "checkpoint", "MSE"))
        heat = out / f"heatmap_{slug}.csv"
        if heat.exists():
            c = _read_csv_columns(heat)
            rows = [(int(r), int(k), float(v)) for m, r, k, v in
                    zip(c["matrix"], c["row"], c["col"], c["value"]) if m != "R"]
            vu = np.zeros((2, max(k for _, k, _ in rows) + 1))
            for (m, r, k, v) in zip(c["matrix"], c["row"], c["col"], c["value"]):
                if m in ("V", "U"):
                    vu[0 if m == "V" else 1, int(k)] = float(v)
            written.append(out / f"heatmap_{slug}.svg")
            written[-1].write_text(plotting.heatmap(vu, f"{variant}: V (top) and U (bottom)"))
    raster = out / "raster.csv"
    if raster.exists():
        c = _read_csv_columns(raster)
        offsets, y = {}, []
        for pop, idx in zip(c["population"], c["neuron_index"]):
            if pop not in offsets:
                offsets[pop] = sum(p.size for p in ac.DEFAULT_POPULATIONS[:len(offsets)])
            y.append(offsets[pop] + int(idx))
        times = np.array(c["spike_time_ms"], float)
        if len(times):
            svg = plotting.scatter(times, y, "Auditory cortex spike raster", "time (ms)", "neuron",
                                   limits=((0, 1000), (0, ac.AuditoryConfig().n_neurons)), radius=0.6)
            written.append(out / "raster.svg")
            written[-1].write_text(svg)
    return written
