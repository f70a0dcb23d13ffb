"""Synthetic detector time-tag streams for the three detection channels.

Events come from a marked Poisson pair process: pairs are created at
pair_rate_per_mw * P, the partner photon is converted with probability
eta_int(P) and routed to the UV channel or stays infrared, and every photon
survives its detection path with an independent per-path probability. The
generator samples the five detectable thinnings of that process directly
(coincident and single-detection branches), which is statistically exact
and avoids materializing undetected pairs. Uncorrelated backgrounds (dark
counts, pump-induced luminescence, converted input light) are independent
Poisson streams merged in afterwards. Per-tag Gaussian timing jitter and a
non-paralyzable detector dead time are applied last.

Determinism: the acquisition is generated in fixed 1 s slices, each seeded
by SeedSequence(seed, slice_index, stream_index). Slices can therefore be
produced in any order (or concurrently) with bitwise-identical results;
`generate_streams` itself runs them serially.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import dead_time_mask
from .spectral import band_fraction, conversion_efficiency

CHANNELS = ("signal", "idler", "output")
CHANNEL_IDS = {"signal": 0, "idler": 1, "output": 2}

_PS = 1_000_000_000_000  # ps per second
_SLICE_S = 1.0
_MAX_EXPECTED = 2.0 ** 62


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class TagStream:
    """Time-ordered detector events on one channel, timestamps in integer ps."""

    channel: int
    tags: np.ndarray
    duration_s: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        tags = np.ascontiguousarray(self.tags, dtype=np.int64)
        object.__setattr__(self, "tags", tags)
        if self.duration_s < 0:
            raise ValueError("duration must be >= 0")
        if len(tags):
            if tags[0] < 0:
                raise ValueError("timestamps must be nonnegative")
            if np.any(np.diff(tags) < 0):
                raise ValueError("timestamps must be sorted")
            if tags[-1] >= int(self.duration_s * _PS):
                raise ValueError("timestamps must be below the acquisition duration")

    def __len__(self):
        return len(self.tags)

    @property
    def rate_hz(self):
        if self.duration_s == 0:
            return 0.0
        return len(self.tags) / self.duration_s


@dataclass(frozen=True)
class ChannelConfig:
    """Detection-path description for one channel."""

    losses: object
    filters: tuple = ()
    jitter_fwhm_ps: float = 350.0
    dead_time_ns: float = 50.0
    dark_hz: float = 0.0
    luminescence_hz_per_mw: float = 0.0
    center_nm: float = None          # spectral center of this channel's band
    bandwidth_ghz: float = None      # pair-photon spectral width at this channel

    def __post_init__(self):
        if self.jitter_fwhm_ps < 0 or self.dead_time_ns < 0:
            raise ValueError("jitter and dead time must be >= 0")
        if self.dark_hz < 0 or self.luminescence_hz_per_mw < 0:
            raise ValueError("background rates must be >= 0")


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulated acquisition: pump power, optional input flux, channels."""

    pump_power_mw: float
    duration_s: float
    seed: int
    channels: dict
    input_flux_hz: float = 0.0

    def __post_init__(self):
        if self.duration_s < 0:
            raise ValueError("duration must be >= 0")
        if self.pump_power_mw < 0 or self.input_flux_hz < 0:
            raise ValueError("pump power and input flux must be >= 0")
        unknown = set(self.channels) - set(CHANNELS)
        if unknown:
            raise ValueError(f"unknown channels {sorted(unknown)}")


def _pair_acceptance(cfg, model, channel):
    """Spectral fraction of pair photons passing a channel's filter stack."""
    if not cfg.filters:
        return 1.0
    center = cfg.center_nm
    if center is None:
        center = {"signal": model.lambda_signal_nm,
                  "idler": model.lambda_input_nm,
                  "output": model.lambda_output_nm}[channel]
    bw = cfg.bandwidth_ghz if cfg.bandwidth_ghz is not None else model.noise_bandwidth_ghz
    return band_fraction(cfg.filters, center, bw)


def branch_rates(scenario, model):
    """Expected rates (Hz) of every generated Poisson component.

    Keys: coincident branches ('s+o', 's+i'), singles branches ('s_only',
    'o_only', 'i_only'), per-channel backgrounds ('bg_<channel>') and the
    converted-input stream ('input_o').
    """
    p = scenario.pump_power_mw
    pair_rate = model.pair_rate_per_mw * p
    eta = conversion_efficiency(p, model, internal=True) if p > 0 else 0.0

    def path(channel):
        cfg = scenario.channels.get(channel)
        if cfg is None:
            return None, 0.0
        t = cfg.losses.eta_loss(with_etalon=False) * _pair_acceptance(cfg, model, channel)
        return cfg, t

    cfg_s, t_s = path("signal")
    cfg_i, t_i = path("idler")
    cfg_o, t_o = path("output")

    p_uv = eta * t_o
    p_ir = (1.0 - eta) * t_i
    rates = {
        "s+o": pair_rate * t_s * p_uv,
        "s+i": pair_rate * t_s * p_ir,
        "s_only": pair_rate * t_s * (1.0 - p_uv - p_ir),
        "o_only": pair_rate * (1.0 - t_s) * p_uv,
        "i_only": pair_rate * (1.0 - t_s) * p_ir,
    }
    for name, cfg in (("signal", cfg_s), ("idler", cfg_i), ("output", cfg_o)):
        if cfg is not None:
            rates[f"bg_{name}"] = cfg.dark_hz + cfg.luminescence_hz_per_mw * p
    if scenario.input_flux_hz > 0 and cfg_o is not None:
        with_etalon = any(f.kind == "etalon" for f in cfg_o.filters)
        eta_ext = conversion_efficiency(p, model, internal=False, losses=cfg_o.losses)
        rates["input_o"] = scenario.input_flux_hz * cfg_o.losses.eta_loss(with_etalon) * eta_ext
    return rates


def expected_rates(scenario, model):
    """Expected detected singles rate per channel, before dead-time losses."""
    r = branch_rates(scenario, model)
    out = {}
    if "signal" in scenario.channels:
        out["signal"] = r["s+o"] + r["s+i"] + r["s_only"] + r["bg_signal"]
    if "idler" in scenario.channels:
        out["idler"] = r["s+i"] + r["i_only"] + r["bg_idler"]
    if "output" in scenario.channels:
        out["output"] = r["s+o"] + r["o_only"] + r["bg_output"] + r.get("input_o", 0.0)
    return out


_STREAM_ORDER = ("s+o", "s+i", "s_only", "o_only", "i_only",
                 "bg_signal", "bg_idler", "bg_output", "input_o",
                 "jitter_signal", "jitter_idler", "jitter_output")


def _slice_rng(seed, slice_index, stream_index):
    return np.random.default_rng(np.random.SeedSequence((seed, slice_index, stream_index)))


def _poisson_times(rng, rate_hz, t0_s, t1_s):
    n = rng.poisson(rate_hz * (t1_s - t0_s))
    return rng.uniform(t0_s * _PS, t1_s * _PS, n)


_BRANCH_CHANNELS = {
    "s+o": ("signal", "output"),
    "s+i": ("signal", "idler"),
    "s_only": ("signal",),
    "o_only": ("output",),
    "i_only": ("idler",),
    "bg_signal": ("signal",),
    "bg_idler": ("idler",),
    "bg_output": ("output",),
    "input_o": ("output",),
}


def generate_streams(scenario, model):
    """Simulate one acquisition; returns {channel_name: TagStream}.

    Deterministic for a fixed seed: identical streams across runs and
    platforms (numpy Generator bit streams are specified).
    """
    rates = branch_rates(scenario, model)
    for name, rate in rates.items():
        if rate * scenario.duration_s > _MAX_EXPECTED:
            raise ConfigurationError(
                f"expected event count for {name} exceeds 2^62; reduce rate or duration")

    n_slices = max(1, math.ceil(scenario.duration_s / _SLICE_S))
    per_channel = {name: [] for name in scenario.channels}

    for k in range(n_slices):
        t0 = k * _SLICE_S
        t1 = min((k + 1) * _SLICE_S, scenario.duration_s)
        slice_tags = {name: [] for name in scenario.channels}
        for si, stream in enumerate(_STREAM_ORDER):
            if stream.startswith("jitter"):
                continue
            rate = rates.get(stream, 0.0)
            channels = [c for c in _BRANCH_CHANNELS[stream] if c in scenario.channels]
            if rate <= 0 or not channels:
                continue
            times = _poisson_times(_slice_rng(scenario.seed, k, si), rate, t0, t1)
            for c in channels:
                slice_tags[c].append(times)
        for c in scenario.channels:
            if not slice_tags[c]:
                continue
            raw = np.concatenate(slice_tags[c])
            jit_fwhm = scenario.channels[c].jitter_fwhm_ps
            if jit_fwhm > 0:
                si = _STREAM_ORDER.index(f"jitter_{c}")
                rng = _slice_rng(scenario.seed, k, si)
                raw = raw + rng.normal(0.0, jit_fwhm / 2.3548200450309493, len(raw))
            per_channel[c].append(raw)

    duration_ps = int(scenario.duration_s * _PS)
    out = {}
    for c, cfg in scenario.channels.items():
        if per_channel[c]:
            t = np.concatenate(per_channel[c])
        else:
            t = np.empty(0)
        t = np.sort(np.rint(t)).astype(np.int64)
        t = t[(t >= 0) & (t < duration_ps)]
        if cfg.dead_time_ns > 0 and len(t):
            t = t[dead_time_mask(t, int(round(cfg.dead_time_ns * 1e3)))]
        out[c] = TagStream(CHANNEL_IDS[c], t, scenario.duration_s,
                           meta={"channel_name": c, "pump_power_mw": scenario.pump_power_mw,
                                 "seed": scenario.seed})
    return out


def thin_stream(stream, transmission, seed):
    """Bernoulli loss: keep each tag independently with the given probability."""
    if not 0.0 <= transmission <= 1.0:
        raise ValueError("transmission must be in [0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    keep = rng.random(len(stream.tags)) < transmission
    return TagStream(stream.channel, stream.tags[keep], stream.duration_s,
                     meta=dict(stream.meta, thinned=transmission))


def merge_streams(a, b):
    """Sorted merge of two streams on the same channel (a before b at ties)."""
    if a.channel != b.channel:
        raise ValueError(f"cannot merge channels {a.channel} and {b.channel}")
    tags = np.concatenate([a.tags, b.tags])
    order = np.argsort(tags, kind="stable")
    return TagStream(a.channel, tags[order], max(a.duration_s, b.duration_s),
                     meta=dict(a.meta))
