"""Scenario runner: wires the physics, generator and analysis modules into
reproducible figure-style studies with CSV artifacts.

Scenario kinds:

* efficiency_sweep  conversion efficiency vs pump power
* snr_sweep         simulated signal-to-noise vs pump power, narrow filtering
* noise_sweep       background scaling vs pump power, with/without etalon
* noise_spectrum    spectrally resolved background, with/without etalon
* coincidence_si    signal/infrared pair correlations at low pump
* coincidence_so    signal/upconverted-output correlations at high pump
* fock_demo         cascaded-state amplitudes from the Fock engine

Every scenario is deterministic for a fixed manifest seed: per-scenario
seeds derive from sha256(global_seed, scenario name), and all randomness
flows through numpy Generators seeded from those. CSV artifacts embed the
tool version, the seed and the content hash of the active calibration.
"""

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import (bundled_losses, bundled_model, config_hash, config_to_dict,
                     load_config, narrowline_filter, uv_spectrometer, uv_stack)
from .fock import CouplingParams, FockBasis, cascaded_evolution
from .montecarlo import ChannelConfig, ScenarioConfig, generate_streams
from .spectral import (LossBudget, SpectralFilter, conversion_efficiency,
                       detected_signal_rate, noise_rate, noise_spectrum)
from .tagcorr import (cauchy_schwarz_test, coincidence_histogram,
                      g2_from_histogram, power_law_fit)

KINDS = ("efficiency_sweep", "snr_sweep", "noise_sweep", "noise_spectrum",
         "coincidence_si", "coincidence_so", "fock_demo")


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScenarioError(f"unknown scenario kind {self.kind!r}")


@dataclass
class RunManifest:
    scenarios: list
    seed: int = 12345
    output_dir: str = "out"
    config_path: str = None
    schema_version: int = 1

    def __post_init__(self):
        if self.schema_version != 1:
            raise ScenarioError(f"unrecognized manifest schema_version "
                                f"{self.schema_version!r}")
        names = [s.name for s in self.scenarios]
        if len(set(names)) != len(names):
            raise ScenarioError("scenario names must be unique within a manifest")


def manifest_from_dict(data):
    scenarios = [Scenario(s["name"], s["kind"], s.get("params", {}))
                 for s in data.get("scenarios", [])]
    return RunManifest(scenarios, seed=data.get("seed", 12345),
                       output_dir=data.get("output_dir", "out"),
                       config_path=data.get("config_path"),
                       schema_version=data.get("schema_version", 1))


def load_manifest(path):
    return manifest_from_dict(json.loads(Path(path).read_text()))


def default_manifest(output_dir="out", seed=12345):
    """One scenario per kind, quick desk-scale defaults."""
    return RunManifest([Scenario(k, k) for k in KINDS], seed=seed,
                       output_dir=output_dir)


def derive_seed(global_seed, name):
    digest = hashlib.sha256(f"{global_seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


# ---------------------------------------------------------------------------
# channel setups for the coincidence scenarios

def signal_channel(model, vbg=False):
    filters = [SpectralFilter.bandpass_nm(model.lambda_signal_nm, 4.0,
                                          peak_transmission=0.95, out_of_band_od=6.0)]
    if vbg:
        filters.append(SpectralFilter.vbg_nm(model.lambda_signal_nm, 1.0,
                                             peak_transmission=0.9))
    losses = LossBudget(external_optics=0.78, fiber_coupling=0.69,
                        detector_efficiency=0.45, etalon_transmission=0.5,
                        mode_matching=0.5)
    return ChannelConfig(losses=losses, filters=tuple(filters),
                         dark_hz=300.0, luminescence_hz_per_mw=100.0)


def idler_channel(model):
    losses = LossBudget(external_optics=0.78, fiber_coupling=0.69,
                        detector_efficiency=0.10, etalon_transmission=0.5,
                        mode_matching=0.5)
    return ChannelConfig(losses=losses, filters=(),
                         dark_hz=20_000.0, luminescence_hz_per_mw=200.0)


def output_channel(model, losses, etalon=False):
    return ChannelConfig(losses=losses, filters=uv_stack(model, etalon=etalon),
                         dark_hz=model.dark_count_rate_hz,
                         luminescence_hz_per_mw=model.detector_stray_hz_per_mw)


# ---------------------------------------------------------------------------
# checks

def _check(name, passed, detail):
    return {"name": name, "passed": bool(passed), "detail": detail}


def _fmt(x):
    return format(float(x), ".6g")


# ---------------------------------------------------------------------------
# scenario computations (pure; file writing happens in run_scenario)

def compute_efficiency_sweep(model, losses, params, seed):
    powers = params.get("powers_mw", [12.5 * k for k in range(0, 33)])
    if len(powers) == 0:
        raise ScenarioError("empty sweep list")
    rows = []
    for p in powers:
        ei = conversion_efficiency(p, model, internal=True)
        ee = conversion_efficiency(p, model, internal=False, losses=losses)
        rows.append((p, ei, ee))
    ei200 = conversion_efficiency(200.0, model, internal=True)
    ee200 = conversion_efficiency(200.0, model, internal=False, losses=losses)
    max_ei = max(r[1] for r in rows)
    checks = [
        _check("eta_ext_200mw", abs(ee200 - 0.055) <= 0.005,
               f"eta_ext(200 mW) = {_fmt(ee200)} (target 0.055 +- 0.005)"),
        _check("eta_int_200mw", abs(ei200 - 0.105) <= 0.010,
               f"eta_int(200 mW) = {_fmt(ei200)} (target 0.105 +- 0.010)"),
        _check("eta_int_below_pulsed_ceiling", max_ei < 0.30,
               f"max eta_int over sweep = {_fmt(max_ei)} (< 0.30)"),
    ]
    return {"tables": {"efficiency": (("pump_mw", "eta_int", "eta_ext"), rows)},
            "checks": checks}


def compute_snr_sweep(model, losses, params, seed):
    powers = params.get("powers_mw",
                        [25, 50, 75, 100, 125, 150, 175, 200, 250, 300, 350, 400])
    if len(powers) == 0:
        raise ScenarioError("empty sweep list")
    t_acq = params.get("acquisition_s", 5.0)
    stack = uv_stack(model, etalon=params.get("etalon", True))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    rows = []
    for p in powers:
        s_model = detected_signal_rate(model, p, losses, stack)
        n_model = noise_rate(p, stack, model)
        s_sim = rng.poisson(s_model * t_acq) / t_acq
        n_sim = rng.poisson(n_model * t_acq) / t_acq
        rows.append((p, s_sim, n_sim, s_sim / n_sim, s_model / n_model))
    below = [r for r in rows if r[0] <= 200.0]
    above = [r for r in rows if r[0] >= 200.0]
    ok_below = all(r[3] >= 2.0 for r in below)
    sim_above = [r[3] for r in above]
    ok_above = all(b < a for a, b in zip(sim_above, sim_above[1:]))
    checks = [
        _check("snr_above_2_up_to_200mw", ok_below,
               "simulated SNR >= 2 for all P <= 200 mW: "
               + ", ".join(f"{r[0]:g}:{r[3]:.2f}" for r in below)),
        _check("snr_degrades_beyond_200mw", ok_above,
               "simulated SNR strictly decreasing for P >= 200 mW: "
               + ", ".join(f"{r[0]:g}:{r[3]:.2f}" for r in above)),
    ]
    return {"tables": {"snr": (("pump_mw", "rate_with_input_hz", "rate_without_hz",
                                "snr_sim", "snr_model"), rows)},
            "checks": checks}


def compute_noise_sweep(model, losses, params, seed):
    powers = params.get("powers_mw", [25, 40, 63, 100, 158, 251, 400])
    if len(powers) == 0:
        raise ScenarioError("empty sweep list")
    t_acq = params.get("acquisition_s", 5.0)
    n_seeds = params.get("n_seeds", 20)
    floor = model.dark_count_rate_hz
    tables = {}
    checks = []
    slope_rows = []
    for label, etalon, (lo, hi) in (("unfiltered", False, (1.85, 2.15)),
                                    ("etalon", True, (0.85, 1.15))):
        stack = uv_stack(model, etalon=etalon)
        rates = np.array([noise_rate(p, stack, model) for p in powers])
        rows = [(p, r) for p, r in zip(powers, rates)]
        tables[f"rates_{label}"] = (("pump_mw", "noise_hz"), rows)
        exps = []
        for s in range(n_seeds):
            rng = np.random.default_rng(np.random.SeedSequence((seed, label == "etalon", s)))
            sampled = rng.poisson(rates * t_acq) / t_acq
            exp, err = power_law_fit(list(zip(powers, sampled)), subtract_floor=floor)
            exps.append(exp)
            slope_rows.append((label, s, exp, err))
        exps = np.array(exps)
        ok = bool(np.all((exps >= lo) & (exps <= hi)))
        checks.append(_check(
            f"noise_exponent_{label}", ok,
            f"{label}: fitted exponents over {n_seeds} seeds span "
            f"[{exps.min():.3f}, {exps.max():.3f}] (required [{lo}, {hi}])"))
    tables["fitted_exponents"] = (("stack", "seed", "exponent", "stderr"), slope_rows)

    n0 = noise_rate(0.0, uv_stack(model), model)
    line = noise_rate(200.0, (uv_stack(model)[0], narrowline_filter(model)),
                      model, include_detector=False)
    checks.append(_check("dark_floor", n0 == model.dark_count_rate_hz,
                         f"noise(P=0) = {_fmt(n0)} Hz (dark rate exactly)"))
    checks.append(_check("narrowline_noise", abs(line - 1.3) <= 0.3,
                         f"20 MHz-line background at 200 mW = {_fmt(line)} Hz "
                         "(target 1.3 +- 0.3)"))
    return {"tables": tables, "checks": checks}


def compute_noise_spectrum(model, losses, params, seed):
    p = params.get("pump_power_mw", 200.0)
    floor = params.get("floor_per_bin_hz", 40.0)
    lam0 = model.lambda_output_nm
    res = uv_spectrometer(model)

    coarse = lam0 - 0.25 + 0.5 * np.arange(-8, 10)
    spectra = {}
    for label, etalon in (("unfiltered", False), ("etalon", True)):
        stack = uv_stack(model, etalon=etalon) + (res,)
        spectra[label] = noise_spectrum(p, stack, model, coarse, floor_per_bin_hz=floor)

    ratio_u = spectra["unfiltered"].peak_to_floor()
    ratio_e = spectra["etalon"].peak_to_floor()
    reduction = ratio_u / ratio_e

    fine_edges = np.arange(lam0 - 4.0, lam0 + 4.05, 0.1)
    fine = noise_spectrum(p, uv_stack(model) + (res,), model, fine_edges)
    peak_nm = fine.peak_wavelength_nm()

    # independent envelope oracle: box-clipped sinc^2 sampled at bin centers
    from .config import uv_bandpass
    from .spectral import C_NM_GHZ, _sinc2_shape
    centers = fine.centers_nm
    dnu = C_NM_GHZ / centers - C_NM_GHZ / lam0
    oracle = _sinc2_shape(dnu, model.noise_bandwidth_ghz)
    oracle[np.abs(dnu) > 0.5 * uv_bandpass(model).fwhm_ghz] = 0.0
    corr = float(np.corrcoef(fine.rates_hz, oracle)[0, 1])

    rows = [(c, u, e) for c, u, e in zip(spectra["unfiltered"].centers_nm,
                                         spectra["unfiltered"].rates_hz,
                                         spectra["etalon"].rates_hz)]
    fine_rows = list(zip(fine.centers_nm, fine.rates_hz, oracle))
    checks = [
        _check("spectrum_peak_position", abs(peak_nm - 369.5) <= 0.3,
               f"peak at {peak_nm:.3f} nm (expected 369.5 +- 0.3)"),
        _check("spectrum_sinc2_envelope", corr >= 0.99,
               f"correlation with phase-matching envelope = {corr:.5f} (>= 0.99)"),
        _check("etalon_peak_suppression", reduction >= 100.0,
               f"peak-to-floor reduced {reduction:.0f}x by the etalon "
               f"({ratio_u:.0f} -> {ratio_e:.1f}; required >= 100x)"),
    ]
    return {"tables": {"spectrum": (("wavelength_nm", "unfiltered_hz_per_bin",
                                     "etalon_hz_per_bin"), rows),
                       "spectrum_fine": (("wavelength_nm", "rate_hz_per_bin",
                                          "envelope_oracle"), fine_rows)},
            "checks": checks}


def _coincidence_common(model, losses, params, seed, high_pump):
    p = params.get("pump_power_mw", 200.0 if high_pump else 0.4)
    duration = params.get("duration_s", 20.0 if high_pump else 30.0)
    bin_ps = params.get("bin_width_ps", 165)
    half_ns = params.get("window_ns", 20.0)
    half_ps = int(round(half_ns * 1e3 / bin_ps)) * bin_ps

    channels = {"signal": signal_channel(model, vbg=high_pump),
                "output" if high_pump else "idler":
                    output_channel(model, losses) if high_pump else idler_channel(model)}
    scenario = ScenarioConfig(pump_power_mw=p, duration_s=duration, seed=seed,
                              channels=channels)
    streams = generate_streams(scenario, model)
    other = "output" if high_pump else "idler"
    hist = coincidence_histogram(streams["signal"], streams[other], bin_ps,
                                 (-half_ps, half_ps))
    corr = g2_from_histogram(hist)
    violated, nsig = cauchy_schwarz_test(corr)
    rows = list(zip(hist.bin_centers_ps(), hist.counts))
    meta = {"pump_power_mw": float(p), "duration_s": float(duration),
            "singles_signal_hz": float(streams["signal"].rate_hz),
            f"singles_{other}_hz": float(streams[other].rate_hz),
            "g2": float(corr.g2), "sigma": float(corr.sigma),
            "cs_violated": bool(violated), "cs_sigma": float(nsig)}
    table_comment = (f"# bin_width_ps={hist.bin_width_ps} "
                     f"tau_range_ps=[{hist.tau_min_ps},{hist.tau_max_ps}) "
                     f"acquisition_s={hist.acquisition_time_s:g} "
                     f"singles_a={hist.singles['a']} singles_b={hist.singles['b']}\n")
    return hist, corr, violated, nsig, rows, meta, table_comment


def compute_coincidence_si(model, losses, params, seed):
    hist, corr, violated, nsig, rows, meta, note = _coincidence_common(
        model, losses, params, seed, high_pump=False)
    margin = (corr.g2 - 10.0) / corr.sigma if corr.sigma > 0 else math.inf
    checks = [
        _check("g2_signal_idler_above_10", corr.g2 > 10.0 and margin >= 3.0,
               f"g2 = {corr.g2:.1f} +- {corr.sigma:.1f} "
               f"({margin:.1f} sigma above 10; required > 10 at >= 3 sigma)"),
        _check("cauchy_schwarz_violated_si", violated,
               f"classicality bound exceeded by {nsig:.1f} sigma"),
    ]
    return {"tables": {"histogram": (("tau_ps", "counts"), rows)},
            "table_comments": {"histogram": note},
            "checks": checks, "meta": meta}


def compute_coincidence_so(model, losses, params, seed):
    hist, corr, violated, nsig, rows, meta, note = _coincidence_common(
        model, losses, params, seed, high_pump=True)
    checks = [
        _check("g2_signal_output_above_2", corr.g2 > 2.0,
               f"g2 = {corr.g2:.2f} +- {corr.sigma:.2f} (required > 2)"),
        _check("cauchy_schwarz_violated_so", violated and nsig >= 5.0,
               f"classicality bound exceeded by {nsig:.1f} sigma (required >= 5)"),
    ]
    return {"tables": {"histogram": (("tau_ps", "counts"), rows)},
            "table_comments": {"histogram": note},
            "checks": checks, "meta": meta}


def compute_fock_demo(model, losses, params, seed):
    amps = params.get("pump_amplitudes", [0.005, 0.00707, 0.01, 0.01414, 0.02])
    if len(amps) == 0:
        raise ScenarioError("empty sweep list")
    kappa = params.get("kappa", 1.0)
    gamma = params.get("gamma", 1.0)
    t = params.get("interaction_time", 1.0)
    basis = FockBasis(n_max=params.get("n_max", 3))
    rows = []
    for a in amps:
        st = cascaded_evolution(basis, CouplingParams(kappa, gamma, a, t))
        a_pair = abs(st.amplitude(1, 1, 0))
        a_conv = abs(st.amplitude(1, 0, 1))
        rows.append((a, a * a, a_pair, a_conv, a_conv / a_pair,
                     st.population(1, 0, 1)))
    exponent, err = power_law_fit([(r[1], r[5]) for r in rows])
    ratio_err = max(abs(r[4] / (kappa * r[0] * t) - 1.0) for r in rows)
    checks = [
        _check("converted_population_quadratic", abs(exponent - 2.0) <= 0.02,
               f"population exponent vs pump power = {exponent:.4f} +- {err:.4f} "
               "(expected 2.0)"),
        _check("amplitude_ratio_linear_in_pump", ratio_err <= 0.01,
               f"amplitude ratio matches kappa*A*t within {ratio_err:.2%}"),
    ]
    return {"tables": {"amplitudes": (("pump_amplitude", "pump_power_au",
                                       "amp_pair", "amp_converted",
                                       "amp_ratio", "pop_converted"), rows)},
            "checks": checks}


_COMPUTE = {
    "efficiency_sweep": compute_efficiency_sweep,
    "snr_sweep": compute_snr_sweep,
    "noise_sweep": compute_noise_sweep,
    "noise_spectrum": compute_noise_spectrum,
    "coincidence_si": compute_coincidence_si,
    "coincidence_so": compute_coincidence_so,
    "fock_demo": compute_fock_demo,
}


# ---------------------------------------------------------------------------
# artifact output

def _write_table(path, comment, columns, rows):
    def cell(v):
        if isinstance(v, (bool, np.bool_)):
            return "1" if v else "0"
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return format(float(v), ".12g")
        return str(v)

    with open(path, "w", newline="") as fh:
        fh.write(comment)
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(cell(v) for v in row) + "\n")


def read_table(path):
    """Read back a scenario CSV: (meta_comment, columns, float rows)."""
    with open(path) as fh:
        comment = ""
        line = fh.readline()
        while line.startswith("#"):
            comment += line
            line = fh.readline()
        columns = line.strip().split(",")
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            vals = []
            for v in line.split(","):
                try:
                    vals.append(float(v))
                except ValueError:
                    vals.append(v)
            rows.append(vals)
    return comment, columns, rows


def run_scenario(scenario, model=None, losses=None, output_dir="out",
                 global_seed=12345, plot=False):
    """Execute one scenario: artifacts on disk plus a summary record.

    Artifacts are deterministic for a fixed manifest seed (plot images
    exempt). On write failure, this scenario's partial outputs are removed.
    """
    model = model if model is not None else bundled_model()
    losses = losses if losses is not None else bundled_losses()
    compute = _COMPUTE[scenario.kind]
    seed = derive_seed(global_seed, scenario.name)
    result = compute(model, losses, scenario.params, seed)

    cfg_hash = config_hash(config_to_dict(model, losses))
    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    comment = (f"# qfclab v{__version__} scenario={scenario.name} "
               f"kind={scenario.kind} seed={seed} config={cfg_hash}\n")

    written = []
    try:
        for table_name, (columns, rows) in result["tables"].items():
            path = outdir / f"{scenario.name}_{table_name}.csv"
            extra = result.get("table_comments", {}).get(table_name, "")
            _write_table(path, comment + extra, columns, rows)
            written.append(path)
        summary = {
            "name": scenario.name,
            "kind": scenario.kind,
            "seed": seed,
            "config": cfg_hash,
            "version": __version__,
            "checks": result["checks"],
            "passed": all(c["passed"] for c in result["checks"]),
            "meta": result.get("meta", {}),
            "artifacts": [p.name for p in written] ,
        }
        spath = outdir / f"{scenario.name}_summary.json"
        spath.write_text(json.dumps(summary, indent=2, sort_keys=True,
                                    default=float) + "\n")
        written.append(spath)
        if plot:
            _plot_scenario(scenario, result, outdir)
    except Exception:
        for p in written:
            try:
                p.unlink()
            except OSError:
                pass
        raise
    return summary


def _plot_scenario(scenario, result, outdir):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        warnings.warn("matplotlib not installed; skipping plots", stacklevel=2)
        return
    for table_name, (columns, rows) in result["tables"].items():
        if not rows or len(columns) < 2:
            continue
        arr = np.array([[v for v in row if isinstance(v, (int, float, np.number))]
                        for row in rows], dtype=float)
        if arr.shape[1] < 2:
            continue
        fig, ax = plt.subplots(figsize=(5, 3.4))
        for k in range(1, arr.shape[1]):
            ax.plot(arr[:, 0], arr[:, k], marker=".", label=columns[k])
        ax.set_xlabel(columns[0])
        ax.legend(fontsize=7)
        ax.set_title(f"{scenario.name}: {table_name}", fontsize=9)
        fig.tight_layout()
        fig.savefig(outdir / f"{scenario.name}_{table_name}.png", dpi=120)
        plt.close(fig)


def run_manifest(manifest, model=None, losses=None, plot=False):
    """Run every scenario in a manifest; returns the list of summaries."""
    if manifest.config_path:
        model, losses = load_config(manifest.config_path)
    summaries = []
    for sc in manifest.scenarios:
        summaries.append(run_scenario(sc, model=model, losses=losses,
                                      output_dir=manifest.output_dir,
                                      global_seed=manifest.seed, plot=plot))
    return summaries
