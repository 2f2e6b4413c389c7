"""Leaky integrate-and-fire model of primary auditory cortex.

Three uncoupled populations (PYR, PV, SOM) receive constant input currents
derived from the five acoustic features. Membrane potentials follow
``dv/dt = (I - v) / tau`` integrated with the exact exponential step; a
neuron spikes when ``v > threshold`` and is reset.

Because each neuron's drive is constant, its discrete-time trajectory is
periodic: the time to the first spike from ``v = 0`` and the period from
``v = reset`` fix the whole spike train. ``spike_counts`` uses this to
process many stimuli at once and is checked against ``simulate``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .numkernel import make_rng


@dataclass(frozen=True)
class PopulationSpec:
    name: str
    size: int
    baseline: float
    weights: tuple[float, ...]
    tau: float = 10.0
    threshold: float = 0.5
    reset: float = 0.0

    def __post_init__(self):
        if self.size < 1 or self.tau <= 0 or self.threshold <= self.reset:
            raise ValueError(f"invalid population spec {self.name}")
        if len(self.weights) != 5:
            raise ValueError(f"{self.name}: need one weight per acoustic feature")


DEFAULT_POPULATIONS = (
    PopulationSpec("PYR", 400, 0.60, (0.3, 0.1, 0.3, 0.2, 0.1)),
    PopulationSpec("PV", 200, 0.60, (0.2, 0.2, 0.2, 0.2, 0.2)),
    PopulationSpec("SOM", 200, 0.65, (0.1, 0.3, 0.1, 0.2, 0.3)),
)


@dataclass(frozen=True)
class AuditoryConfig:
    populations: tuple[PopulationSpec, ...] = DEFAULT_POPULATIONS
    gain: float = 0.2
    duration: float = 1000.0  # ms
    dt: float = 0.1  # ms
    jitter: float = 0.01
    rate_cap: float = 100.0  # Hz

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def n_neurons(self) -> int:
        return sum(p.size for p in self.populations)


@dataclass(frozen=True)
class SpikeRecord:
    """Spikes of every population as parallel (neuron index, time) arrays."""

    names: tuple[str, ...]
    sizes: tuple[int, ...]
    spike_neurons: tuple[np.ndarray, ...]
    spike_times: tuple[np.ndarray, ...]
    duration: float
    dt: float
    v_trace: dict = field(default_factory=dict)

    def _index(self, name):
        return self.names.index(name)

    def counts(self, name: str) -> np.ndarray:
        i = self._index(name)
        return np.bincount(self.spike_neurons[i], minlength=self.sizes[i])

    def times(self, name: str, neuron: int) -> np.ndarray:
        i = self._index(name)
        return self.spike_times[i][self.spike_neurons[i] == neuron]

    @property
    def total_counts(self) -> dict[str, int]:
        return {n: int(len(t)) for n, t in zip(self.names, self.spike_times)}


def map_currents(features, config: AuditoryConfig = AuditoryConfig()) -> np.ndarray:
    """Affine map of the 5 features to one current per population (volts).

    Centred so that all-0.5 features give exactly the baseline currents.
    Accepts a single vector or an (n, 5) batch.
    """
    f = np.asarray(features, dtype=np.float64)
    if f.shape[-1] != 5:
        raise ValueError(f"expected 5 acoustic features, got shape {f.shape}")
    if np.any(f < 0.0) or np.any(f > 1.0) or not np.all(np.isfinite(f)):
        raise ValueError("acoustic features must lie in [0, 1]")
    w = np.array([p.weights for p in config.populations])
    base = np.array([p.baseline for p in config.populations])
    return base + config.gain * (f @ w.T - 0.5 * w.sum(axis=1))


def neuron_currents(currents, config: AuditoryConfig, seed, jitter=None) -> np.ndarray:
    """Per-neuron drive: population current plus fixed uniform jitter."""
    jitter = config.jitter if jitter is None else jitter
    currents = np.asarray(currents, dtype=np.float64)
    drive = np.concatenate([np.full(p.size, c) for p, c in zip(config.populations, currents)])
    if jitter:
        drive = drive + make_rng(seed).uniform(-jitter, jitter, size=drive.shape)
    return drive


def _check_dt(config):
    if config.duration <= 0 or config.dt <= 0:
        raise ValueError("duration and dt must be positive")
    for p in config.populations:
        if config.dt > p.tau / 10.0:
            raise ValueError(f"dt={config.dt} ms too coarse for {p.name} tau={p.tau} ms")


def _population_arrays(config):
    tau = np.concatenate([np.full(p.size, p.tau) for p in config.populations])
    theta = np.concatenate([np.full(p.size, p.threshold) for p in config.populations])
    reset = np.concatenate([np.full(p.size, p.reset) for p in config.populations])
    return tau, theta, reset


def simulate(currents, config: AuditoryConfig = AuditoryConfig(), seed=0, jitter=None,
             record_v: bool = False) -> SpikeRecord:
    """Step every neuron for ``duration`` ms and collect spike times.

    With ``record_v`` the membrane potential of neuron 0 of each population
    is stored after every step (post-reset).
    """
    _check_dt(config)
    drive = neuron_currents(currents, config, seed, jitter)
    tau, theta, reset = _population_arrays(config)
    decay = np.exp(-config.dt / tau)
    v = np.zeros_like(drive)
    steps, neurons = [], []
    starts = np.cumsum([0] + [p.size for p in config.populations])
    trace = np.empty((config.n_steps, len(config.populations))) if record_v else None
    for n in range(1, config.n_steps + 1):
        v = drive + (v - drive) * decay
        fired = v > theta
        if fired.any():
            idx = np.flatnonzero(fired)
            steps.append(np.full(idx.size, n))
            neurons.append(idx)
            v[idx] = reset[idx]
        if record_v:
            trace[n - 1] = v[starts[:-1]]
    all_steps = np.concatenate(steps) if steps else np.zeros(0, dtype=int)
    all_neurons = np.concatenate(neurons) if neurons else np.zeros(0, dtype=int)
    sp_n, sp_t = [], []
    for i in range(len(config.populations)):
        sel = (all_neurons >= starts[i]) & (all_neurons < starts[i + 1])
        local = all_neurons[sel] - starts[i]
        order = np.lexsort((all_steps[sel], local))
        sp_n.append(local[order])
        sp_t.append(all_steps[sel][order] * config.dt)
    v_trace = {}
    if record_v:
        v_trace = {p.name: trace[:, i] for i, p in enumerate(config.populations)}
    return SpikeRecord(
        tuple(p.name for p in config.populations),
        tuple(p.size for p in config.populations),
        tuple(sp_n), tuple(sp_t), config.duration, config.dt, v_trace,
    )


def _steps_to_spike(drive, v0, theta, decay, max_steps):
    """First step index (1-based) at which v crosses theta, or max_steps + 1."""
    out = np.full(drive.shape, max_steps + 1, dtype=np.int64)
    active = np.flatnonzero(drive > theta)  # sub-threshold drive never fires
    v = np.broadcast_to(v0, drive.shape)[active].astype(np.float64)
    d, th, dec = drive[active], theta[active], decay[active]
    for n in range(1, max_steps + 1):
        if active.size == 0:
            break
        v = d + (v - d) * dec
        fired = v > th
        if fired.any():
            out[active[fired]] = n
            keep = ~fired
            active, v, d, th, dec = active[keep], v[keep], d[keep], th[keep], dec[keep]
    return out


def spike_counts(currents, config: AuditoryConfig = AuditoryConfig(), seeds=None, jitter=None):
    """Per-neuron spike counts for a batch of current triples.

    ``currents`` has shape (n, 3); ``seeds`` gives one jitter seed per row.
    Returns an (n, n_neurons) integer array identical to counting the spikes
    of ``simulate`` row by row.
    """
    _check_dt(config)
    currents = np.atleast_2d(np.asarray(currents, dtype=np.float64))
    if seeds is None:
        seeds = [0] * len(currents)
    drive = np.stack([neuron_currents(c, config, s, jitter) for c, s in zip(currents, seeds)])
    tau, theta, reset = _population_arrays(config)
    decay = np.broadcast_to(np.exp(-config.dt / tau), drive.shape).ravel()
    theta_b = np.broadcast_to(theta, drive.shape).ravel()
    flat = drive.ravel()
    n = config.n_steps
    first = _steps_to_spike(flat, 0.0, theta_b, decay, n)
    if np.all(reset == 0.0):
        period = first
    else:
        period = _steps_to_spike(flat, np.broadcast_to(reset, drive.shape).ravel(), theta_b, decay, n)
    counts = np.where(first <= n, 1 + (n - first) // np.maximum(period, 1), 0)
    return counts.reshape(drive.shape)


def rates_from_counts(counts, config: AuditoryConfig = AuditoryConfig()) -> np.ndarray:
    """Population-mean rate / rate_cap, clamped to [0, 1]; shape (n, n_pops)."""
    counts = np.atleast_2d(counts)
    starts = np.cumsum([0] + [p.size for p in config.populations])
    seconds = config.duration / 1000.0
    rates = np.stack(
        [counts[:, starts[i]:starts[i + 1]].mean(axis=1) for i in range(len(config.populations))],
        axis=1,
    ) / seconds
    return np.clip(rates / config.rate_cap, 0.0, 1.0)


def extract_features(record: SpikeRecord, rate_cap: float = 100.0) -> np.ndarray:
    seconds = record.duration / 1000.0
    rates = np.array([len(t) / size / seconds for t, size in zip(record.spike_times, record.sizes)])
    return np.clip(rates / rate_cap, 0.0, 1.0)


def encode(features, config: AuditoryConfig = AuditoryConfig(), seeds=None) -> np.ndarray:
    """Acoustic features (n, 5) -> ``X_m`` (n, 3) via the fast counting path."""
    currents = map_currents(np.atleast_2d(features), config)
    return rates_from_counts(spike_counts(currents, config, seeds), config)


def raster_csv(record: SpikeRecord) -> str:
    buf = io.StringIO()
    buf.write("population,neuron_index,spike_time_ms\n")
    for name, neurons, times in zip(record.names, record.spike_neurons, record.spike_times):
        for i, t in zip(neurons, times):
            buf.write(f"{name},{int(i)},{float(t)!r}\n")
    return buf.getvalue()
