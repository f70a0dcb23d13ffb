"""Deterministic device physics: energy bookkeeping, quasi-phase-matching,
conversion efficiency with pump-induced saturation, spectral filters, and the
pump-power scaling of the background counts.

Unit conventions, fixed at this module's boundary: vacuum wavelengths in nm,
frequencies in GHz (THz only where a signature says so), pump powers in mW,
lengths in mm, poling period in um, rates in Hz. Everything here is a pure
function of immutable inputs and safe for concurrent use.

Background-count model
----------------------
Three components, calibrated against the bundled device anchors:

* a pair-cascade component quadratic in pump power, spectrally shaped like
  the phase-matching response (sinc^2, FWHM = ``noise_bandwidth_ghz``),
* a weak in-band luminescence floor linear in pump power, spectrally flat,
* a detector-path term (dark counts plus stray fluorescence linear in pump
  power) that never passes through the spectral filter stack.

Rates through a filter stack are spectral-density quadratures, so the rate
model and the sampled spectra are consistent by construction. The analytic
quadratic coefficient describes the cascade in its low-gain regime; the
event-level generator (montecarlo) instead scales the cascade as
pump_power * conversion_efficiency(pump_power), which bends below quadratic
once conversion saturates. Both agree where the device anchors live.
"""

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.ndimage import gaussian_filter1d

C_NM_GHZ = 2.99792458e8          # c expressed as nm * GHz
HC_EV_NM = 1239.8419843320025    # h*c/e in eV*nm
_HALF_SINC2 = 1.39155737825151   # sinc^2(x) = 1/2 at this x
_LN16 = 4.0 * math.log(2.0)


class DispersionRangeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# wavelength / energy bookkeeping

def sfg_output_wavelength(lambda_input_nm, lambda_pump_nm):
    """Upconverted wavelength from photon-energy addition: 1/lo = 1/li + 1/lp."""
    if lambda_input_nm <= 0 or lambda_pump_nm <= 0:
        raise ValueError("wavelengths must be positive")
    return 1.0 / (1.0 / lambda_input_nm + 1.0 / lambda_pump_nm)


_SIGNAL_VALIDITY_NM = (250.0, 5000.0)


def spdc_signal_wavelength(lambda_pump_nm, lambda_idler_nm):
    """Energy-conserving partner of a pair: 1/ls = 1/lp - 1/li.

    Requires lambda_idler > lambda_pump (otherwise no energy-conserving
    partner exists). Results far outside the device band are returned but
    flagged with a warning.
    """
    if lambda_pump_nm <= 0:
        raise ValueError("pump wavelength must be positive")
    if lambda_idler_nm <= lambda_pump_nm:
        raise ValueError("idler wavelength must exceed the pump wavelength")
    ls = 1.0 / (1.0 / lambda_pump_nm - 1.0 / lambda_idler_nm)
    if not _SIGNAL_VALIDITY_NM[0] <= ls <= _SIGNAL_VALIDITY_NM[1]:
        warnings.warn(f"partner wavelength {ls:.4g} nm outside the model validity "
                      f"window {_SIGNAL_VALIDITY_NM}", stacklevel=2)
    return ls


def energy_gap(lambda_a_nm, lambda_b_nm):
    """Signed photon-energy difference as (eV, THz)."""
    if lambda_a_nm <= 0 or lambda_b_nm <= 0:
        raise ValueError("wavelengths must be positive")
    inv = 1.0 / lambda_a_nm - 1.0 / lambda_b_nm
    return HC_EV_NM * inv, C_NM_GHZ * inv / 1e3


@dataclass(frozen=True)
class WavelengthTriple:
    """The four coupled vacuum wavelengths of the device (nm)."""

    lambda_input: float
    lambda_pump: float
    lambda_output: float
    lambda_signal: float

    def __post_init__(self):
        for v in (self.lambda_input, self.lambda_pump, self.lambda_output, self.lambda_signal):
            if v <= 0:
                raise ValueError("wavelengths must be positive")
        if abs(1 / self.lambda_output - 1 / self.lambda_input - 1 / self.lambda_pump) > 1e-9:
            raise ValueError("output wavelength violates energy conservation")
        if abs(1 / self.lambda_signal - (1 / self.lambda_pump - 1 / self.lambda_input)) > 1e-9:
            raise ValueError("signal wavelength violates energy conservation")

    @classmethod
    def from_input_pump(cls, lambda_input_nm, lambda_pump_nm):
        return cls(lambda_input_nm, lambda_pump_nm,
                   sfg_output_wavelength(lambda_input_nm, lambda_pump_nm),
                   spdc_signal_wavelength(lambda_pump_nm, lambda_input_nm))


# ---------------------------------------------------------------------------
# device model / loss budget / filters

@dataclass(frozen=True)
class ConverterModel:
    """All physical parameters of the waveguide converter.

    eta_nor_per_mw_mm2 is the normalized conversion coefficient entering
    sin^2(sqrt(eta_nor * P_eff) * L) with L in mm;
    uv_absorption_per_mw is the saturation coefficient of
    P_eff = P * exp(-c * P) (phenomenological pump-induced UV absorption).
    Background coefficients are detector-plane values (fixed path losses
    folded in); see the module docstring for the component layout.
    """

    length_mm: float = 9.6
    poling_period_um: float = 2.535
    lambda_input_nm: float = 1311.0
    lambda_pump_nm: float = 514.5
    eta_nor_per_mw_mm2: float = 8.813664923135374e-06
    uv_absorption_per_mw: float = 0.002
    pair_rate_per_mw: float = 2.5e5
    noise_bandwidth_ghz: float = 13140.0
    noise_quad_hz_per_mw2: float = 15.344318531165154
    noise_floor_density_hz_per_ghz_mw: float = 7.610350076103501e-05
    detector_stray_hz_per_mw: float = 20.0
    input_flux_hz: float = 6.0e6
    dark_count_rate_hz: float = 13.0

    def __post_init__(self):
        if self.length_mm <= 0 or self.poling_period_um <= 0:
            raise ValueError("length and poling period must be positive")
        for name in ("eta_nor_per_mw_mm2", "uv_absorption_per_mw", "pair_rate_per_mw",
                     "noise_quad_hz_per_mw2", "noise_floor_density_hz_per_ghz_mw",
                     "detector_stray_hz_per_mw", "input_flux_hz", "dark_count_rate_hz"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def lambda_output_nm(self):
        return sfg_output_wavelength(self.lambda_input_nm, self.lambda_pump_nm)

    @property
    def lambda_signal_nm(self):
        return spdc_signal_wavelength(self.lambda_pump_nm, self.lambda_input_nm)

    @property
    def output_center_ghz(self):
        return C_NM_GHZ / self.lambda_output_nm

    def wavelengths(self):
        return WavelengthTriple.from_input_pump(self.lambda_input_nm, self.lambda_pump_nm)


@dataclass(frozen=True)
class LossBudget:
    """Multiplicative transmission chain between crystal facet and detector.

    mode_matching is the waveguide in-coupling fraction; it links the
    external and internal efficiencies (eta_ext = eta_int * mode_matching)
    and is deliberately not part of eta_loss, which covers only the
    detection path: bulk optics, fiber coupling, detector efficiency and,
    when present, the narrow etalon.
    """

    external_optics: float = 0.78
    fiber_coupling: float = 0.69
    detector_efficiency: float = 0.14
    etalon_transmission: float = 0.50
    mode_matching: float = 0.055 / 0.105

    def __post_init__(self):
        for name in ("external_optics", "fiber_coupling", "detector_efficiency",
                     "etalon_transmission", "mode_matching"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")

    def eta_loss(self, with_etalon=False):
        t = self.external_optics * self.fiber_coupling * self.detector_efficiency
        if with_etalon:
            t *= self.etalon_transmission
        return t


FILTER_KINDS = ("etalon", "bandpass", "vbg", "lorentzian_line", "gaussian_spectrometer")


@dataclass(frozen=True)
class SpectralFilter:
    """Transmission-vs-frequency model for one optical element.

    kinds: etalon (Airy comb times a single-order selection envelope),
    bandpass (flat top, out-of-band 10^-OD), vbg and gaussian_spectrometer
    (Gaussian), lorentzian_line (Lorentzian, e.g. an atomic transition used
    as a filter).

    The etalon envelope models the downstream single-transverse-mode
    coupling, which accepts only the interference order aligned with the
    optical axis; its FWHM defaults to one free spectral range. Set
    order_envelope_fwhm_ghz = inf for a bare Airy comb.
    """

    kind: str
    center_nm: float
    fwhm_ghz: float
    fsr_ghz: float = None
    peak_transmission: float = 1.0
    out_of_band_od: float = None
    order_envelope_fwhm_ghz: float = None

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.center_nm <= 0 or self.fwhm_ghz <= 0:
            raise ValueError("center and fwhm must be positive")
        if not 0.0 < self.peak_transmission <= 1.0:
            raise ValueError("peak_transmission must be in (0, 1]")
        if self.kind == "etalon":
            if self.fsr_ghz is None or not 0 < self.fwhm_ghz < self.fsr_ghz:
                raise ValueError("etalon requires 0 < fwhm < fsr")
        if self.kind == "bandpass" and self.out_of_band_od is None:
            raise ValueError("bandpass requires out_of_band_od")

    @property
    def center_ghz(self):
        return C_NM_GHZ / self.center_nm

    @property
    def finesse(self):
        if self.kind != "etalon":
            raise ValueError("finesse is defined for etalons only")
        return self.fsr_ghz / self.fwhm_ghz

    # -- constructors for the common elements -------------------------------
    @classmethod
    def etalon(cls, center_nm, fsr_ghz=340.0, fwhm_ghz=5.5, peak_transmission=0.50,
               order_envelope_fwhm_ghz=None):
        return cls("etalon", center_nm, fwhm_ghz, fsr_ghz=fsr_ghz,
                   peak_transmission=peak_transmission,
                   order_envelope_fwhm_ghz=order_envelope_fwhm_ghz)

    @classmethod
    def bandpass_nm(cls, center_nm, fwhm_nm, peak_transmission=1.0, out_of_band_od=22.0):
        return cls("bandpass", center_nm, fwhm_nm * C_NM_GHZ / center_nm ** 2,
                   peak_transmission=peak_transmission, out_of_band_od=out_of_band_od)

    @classmethod
    def vbg_nm(cls, center_nm, fwhm_nm, peak_transmission=0.9):
        return cls("vbg", center_nm, fwhm_nm * C_NM_GHZ / center_nm ** 2,
                   peak_transmission=peak_transmission)

    @classmethod
    def line_mhz(cls, center_nm, fwhm_mhz, peak_transmission=1.0):
        return cls("lorentzian_line", center_nm, fwhm_mhz / 1e3,
                   peak_transmission=peak_transmission)

    @classmethod
    def spectrometer_nm(cls, center_nm, resolution_fwhm_nm=0.15):
        return cls("gaussian_spectrometer", center_nm,
                   resolution_fwhm_nm * C_NM_GHZ / center_nm ** 2)

    # ------------------------------------------------------------------------
    def transmission_at_offset(self, dnu_ghz):
        """Transmission at a detuning (GHz) from this filter's own center."""
        dnu = np.asarray(dnu_ghz, dtype=float)
        if self.kind == "etalon":
            coeff = (2.0 * self.finesse / np.pi) ** 2
            t = self.peak_transmission / (1.0 + coeff * np.sin(np.pi * dnu / self.fsr_ghz) ** 2)
            env = self.order_envelope_fwhm_ghz
            if env is None:
                env = self.fsr_ghz
            if np.isfinite(env):
                t = t * np.exp(-_LN16 * (dnu / env) ** 2)
            return t
        if self.kind == "bandpass":
            floor = self.peak_transmission * 10.0 ** (-self.out_of_band_od)
            return np.where(np.abs(dnu) <= 0.5 * self.fwhm_ghz,
                            self.peak_transmission, floor)
        if self.kind in ("vbg", "gaussian_spectrometer"):
            return self.peak_transmission * np.exp(-_LN16 * (dnu / self.fwhm_ghz) ** 2)
        # lorentzian_line
        return self.peak_transmission / (1.0 + (2.0 * dnu / self.fwhm_ghz) ** 2)


def filter_transmission(filt, frequency_thz):
    """Transmission of one filter at an absolute optical frequency (THz)."""
    return filt.transmission_at_offset(frequency_thz * 1e3 - filt.center_ghz)


def stack_transmission(filters, frequency_ghz):
    """Product of all filter transmissions at absolute frequency (GHz).

    Commutative/multiplicative by construction: order never matters.
    """
    freq = np.asarray(frequency_ghz, dtype=float)
    t = np.ones_like(freq)
    for f in filters:
        t = t * f.transmission_at_offset(freq - f.center_ghz)
    return t


# ---------------------------------------------------------------------------
# quasi-phase-matching

@dataclass(frozen=True)
class BandLinearDispersion:
    """Piecewise-linear effective index, one segment per wavelength band.

    bands: tuple of (lo_nm, hi_nm, ref_nm, n_ref, slope_per_nm). This is a
    calibration construct, not a material model: the output-band anchor is
    chosen so the mismatch vanishes at the operating point and the infrared
    slope is tuned to reproduce the device's observed acceptance bandwidth.
    A Sellmeier-style function can be passed anywhere a dispersion callable
    is accepted.
    """

    bands: tuple

    def __call__(self, lambda_nm):
        for lo, hi, ref, n_ref, slope in self.bands:
            if lo <= lambda_nm <= hi:
                return n_ref + slope * (lambda_nm - ref)
        raise DispersionRangeError(f"dispersion undefined at {lambda_nm} nm")


def qpm_mismatch(triple, model, dispersion):
    """Residual wavevector mismatch after grating compensation, rad/mm."""
    n_o = dispersion(triple.lambda_output)
    n_p = dispersion(triple.lambda_pump)
    n_i = dispersion(triple.lambda_input)
    per_nm = (n_o / triple.lambda_output - n_p / triple.lambda_pump
              - n_i / triple.lambda_input - 1.0 / (model.poling_period_um * 1e3))
    return 2.0 * math.pi * per_nm * 1e6


def phasematching_response(delta_k_rad_mm, length_mm):
    """Normalized sinc^2(delta_k * L / 2) efficiency envelope."""
    if length_mm <= 0:
        raise ValueError("length must be positive")
    x = np.asarray(delta_k_rad_mm, dtype=float) * length_mm / 2.0
    out = np.ones_like(x)
    nz = x != 0
    out[nz] = (np.sin(x[nz]) / x[nz]) ** 2
    if out.ndim == 0:
        return float(out)
    return out


def _tuned_ir_slope(model, n_i_ref, n_p_ref, b_uv):
    """Infrared index slope giving the configured acceptance bandwidth.

    The mismatch at the half-response point is linear in the slope, so the
    tuning is solved in closed form: of the two slopes putting the half
    point at |dk| L/2 = 1.3916, the smaller-magnitude one is used.
    """
    lam_i0 = model.lambda_input_nm
    lam_o0 = model.lambda_output_nm
    # half-width of the response in output frequency
    dnu_half = model.noise_bandwidth_ghz / 2.0
    lam_o_half = C_NM_GHZ / (C_NM_GHZ / lam_o0 + dnu_half)
    lam_i_half = 1.0 / (1.0 / lam_o_half - 1.0 / model.lambda_pump_nm)
    dk_half = 2.0 * _HALF_SINC2 / model.length_mm

    n_o_ref = lam_o0 * (1.0 / (model.poling_period_um * 1e3)
                        + n_p_ref / model.lambda_pump_nm + n_i_ref / lam_i0)

    def mismatch(b_ir):
        disp = BandLinearDispersion((
            (300.0, 450.0, lam_o0, n_o_ref, b_uv),
            (450.0, 600.0, model.lambda_pump_nm, n_p_ref, -3.0e-4),
            (1000.0, 1700.0, lam_i0, n_i_ref, b_ir),
        ))
        tr = WavelengthTriple.from_input_pump(lam_i_half, model.lambda_pump_nm)
        return qpm_mismatch(tr, model, disp)

    dk0 = mismatch(0.0)
    slope = (mismatch(-1e-4) - dk0) / -1e-4
    candidates = [(dk_half - dk0) / slope, (-dk_half - dk0) / slope]
    return n_o_ref, min(candidates, key=abs)


@lru_cache(maxsize=8)
def _bundled_dispersion_cached(key):
    model = ConverterModel(*key)
    n_i_ref, n_p_ref, b_uv = 1.816, 1.889, -2.5e-3
    n_o_ref, b_ir = _tuned_ir_slope(model, n_i_ref, n_p_ref, b_uv)
    return BandLinearDispersion((
        (300.0, 450.0, model.lambda_output_nm, n_o_ref, b_uv),
        (450.0, 600.0, model.lambda_pump_nm, n_p_ref, -3.0e-4),
        (1000.0, 1700.0, model.lambda_input_nm, n_i_ref, b_ir),
    ))


def bundled_dispersion(model):
    """Linearized dispersion calibrated to the model's operating point.

    Anchored so the mismatch is exactly zero at the nominal wavelengths and
    the sinc^2 acceptance FWHM (in output frequency) equals
    model.noise_bandwidth_ghz.
    """
    from dataclasses import astuple
    return _bundled_dispersion_cached(astuple(model))


# ---------------------------------------------------------------------------
# conversion efficiency

def conversion_efficiency(pump_power_mw, model, internal=True, losses=None):
    """Pump-power-dependent conversion efficiency.

    internal=True gives the in-waveguide efficiency
    sin^2(sqrt(eta_nor * P_eff) * L) with the saturating effective power
    P_eff = P * exp(-c * P); internal=False multiplies by the mode-matching
    fraction of the loss budget, referencing the efficiency to photons at
    the input facet instead. Detection-path losses are never included here.
    """
    p = np.asarray(pump_power_mw, dtype=float)
    if np.any(p < 0):
        raise ValueError("pump power must be >= 0")
    p_eff = p * np.exp(-model.uv_absorption_per_mw * p)
    eta = np.sin(np.sqrt(model.eta_nor_per_mw_mm2 * p_eff) * model.length_mm) ** 2
    if not internal:
        if losses is None:
            raise ValueError("external efficiency requires a LossBudget (mode_matching)")
        eta = eta * losses.mode_matching
    if eta.ndim == 0:
        return float(eta)
    return eta


def saturation_turnover_mw(model):
    """Pump power where the effective power P*exp(-c*P) peaks."""
    if model.uv_absorption_per_mw == 0:
        return math.inf
    return 1.0 / model.uv_absorption_per_mw


# ---------------------------------------------------------------------------
# background-count model

def _sinc2_shape(dnu_ghz, bandwidth_ghz):
    alpha = 2.0 * _HALF_SINC2 / bandwidth_ghz
    x = alpha * np.asarray(dnu_ghz, dtype=float)
    out = np.ones_like(x)
    nz = x != 0
    out[nz] = (np.sin(x[nz]) / x[nz]) ** 2
    return out


def _shape_norm_ghz(bandwidth_ghz):
    # integral of the unit-peak sinc^2 shape over all frequencies
    return np.pi * bandwidth_ghz / (2.0 * _HALF_SINC2)

_FLOOR_EXTENT = 1.5       # flat floor spans +- this many bandwidths
_BASE_STEP_GHZ = 0.25     # resolves 5.5 GHz etalon teeth
_GRID_SPAN = 3.2          # quadrature span in bandwidths


def _quadrature_grid(model, filters):
    nu0 = model.output_center_ghz
    half = _GRID_SPAN * model.noise_bandwidth_ghz
    grids = [np.arange(nu0 - half, nu0 + half, _BASE_STEP_GHZ)]
    for f in filters:
        if f.kind in ("etalon", "gaussian_spectrometer"):
            continue
        if f.fwhm_ghz < 20 * _BASE_STEP_GHZ:
            fc = f.center_ghz
            if abs(fc - nu0) < half:
                grids.append(np.arange(fc - 80 * f.fwhm_ghz, fc + 80 * f.fwhm_ghz,
                                       f.fwhm_ghz / 40.0))
    return np.unique(np.concatenate(grids))


def _optical_density(nu_ghz, pump_power_mw, model):
    """In-band background spectral density (Hz/GHz) at the detector plane."""
    dnu = nu_ghz - model.output_center_ghz
    bw = model.noise_bandwidth_ghz
    quad_total = model.noise_quad_hz_per_mw2 * pump_power_mw ** 2
    dens = quad_total * _sinc2_shape(dnu, bw) / _shape_norm_ghz(bw)
    floor = model.noise_floor_density_hz_per_ghz_mw * pump_power_mw
    dens = dens + np.where(np.abs(dnu) <= _FLOOR_EXTENT * bw, floor, 0.0)
    return dens


def cascade_rate(pump_power_mw, filters, model):
    """Quadratic cascade background through a filter stack (Hz)."""
    if pump_power_mw == 0:
        return 0.0
    nu = _quadrature_grid(model, filters)
    bw = model.noise_bandwidth_ghz
    quad_total = model.noise_quad_hz_per_mw2 * pump_power_mw ** 2
    dens = quad_total * _sinc2_shape(nu - model.output_center_ghz, bw) / _shape_norm_ghz(bw)
    return float(np.trapezoid(dens * stack_transmission(filters, nu), nu))


def inband_floor_rate(pump_power_mw, filters, model):
    """Flat in-band luminescence floor through a filter stack (Hz)."""
    if pump_power_mw == 0:
        return 0.0
    nu = _quadrature_grid(model, filters)
    dnu = nu - model.output_center_ghz
    bw = model.noise_bandwidth_ghz
    dens = np.where(np.abs(dnu) <= _FLOOR_EXTENT * bw,
                    model.noise_floor_density_hz_per_ghz_mw * pump_power_mw, 0.0)
    return float(np.trapezoid(dens * stack_transmission(filters, nu), nu))


def noise_rate(pump_power_mw, filters, model, include_detector=True):
    """Detector count rate without any input light (Hz).

    include_detector=True adds the detector-path terms (dark counts and
    stray fluorescence that bypasses the spectral stack); set it False for
    projections where a narrow spectral acceptor replaces the detector,
    e.g. estimating the background an atomic line would admit.
    """
    if pump_power_mw < 0:
        raise ValueError("pump power must be >= 0")
    rate = cascade_rate(pump_power_mw, filters, model) \
        + inband_floor_rate(pump_power_mw, filters, model)
    if include_detector:
        rate += model.dark_count_rate_hz \
            + model.detector_stray_hz_per_mw * pump_power_mw
    return rate


def band_fraction(filters, center_nm, bandwidth_ghz):
    """Fraction of a sinc^2 band (FWHM bandwidth, centered at center_nm)
    that a filter stack transmits. Pump-power independent."""
    nu0 = C_NM_GHZ / center_nm
    half = _GRID_SPAN * bandwidth_ghz
    grids = [np.arange(nu0 - half, nu0 + half, _BASE_STEP_GHZ)]
    for f in filters:
        if f.kind in ("etalon", "gaussian_spectrometer"):
            continue
        if f.fwhm_ghz < 20 * _BASE_STEP_GHZ and abs(f.center_ghz - nu0) < half:
            grids.append(np.arange(f.center_ghz - 80 * f.fwhm_ghz,
                                   f.center_ghz + 80 * f.fwhm_ghz, f.fwhm_ghz / 40.0))
    nu = np.unique(np.concatenate(grids))
    shape = _sinc2_shape(nu - nu0, bandwidth_ghz)
    return float(np.trapezoid(shape * stack_transmission(filters, nu), nu)
                 / _shape_norm_ghz(bandwidth_ghz))


def broadband_stack_factor(filters, model):
    """Fraction of the cascade spectrum a stack transmits (vs no filtering).

    Used by the event generator to thin converted cascade photons; equals
    cascade_rate / (quad coefficient * P^2) and is pump-power independent.
    """
    return band_fraction(filters, model.lambda_output_nm, model.noise_bandwidth_ghz)


def detected_signal_rate(model, pump_power_mw, losses, filters):
    """Predicted detector rate with the nominal input flux present (Hz).

    input_flux * eta_loss * eta_ext(P) + noise_rate(P); the etalon factor
    joins eta_loss only when an etalon is actually in the stack.
    """
    with_etalon = any(f.kind == "etalon" for f in filters)
    eta_ext = conversion_efficiency(pump_power_mw, model, internal=False, losses=losses)
    s_minus_n = model.input_flux_hz * losses.eta_loss(with_etalon) * eta_ext
    return s_minus_n + noise_rate(pump_power_mw, filters, model)


# ---------------------------------------------------------------------------
# spectrally resolved background

@dataclass(frozen=True)
class BinnedSpectrum:
    """Per-bin detector rates over a wavelength grid (ascending nm edges)."""

    edges_nm: np.ndarray
    rates_hz: np.ndarray
    pump_power_mw: float
    resolution_fwhm_nm: float
    floor_per_bin_hz: float

    @property
    def centers_nm(self):
        return 0.5 * (self.edges_nm[:-1] + self.edges_nm[1:])

    def peak_bin(self):
        return int(np.argmax(self.rates_hz))

    def peak_wavelength_nm(self):
        return float(self.centers_nm[self.peak_bin()])

    def peak_to_floor(self, exclude_nm=3.3):
        """Max bin over the median of bins detuned more than exclude_nm."""
        center = self.centers_nm[self.peak_bin()]
        outer = self.rates_hz[np.abs(self.centers_nm - center) > exclude_nm]
        if len(outer) == 0:
            raise ValueError("no bins outside the exclusion window")
        floor = float(np.median(outer))
        if floor <= 0:
            raise ValueError("spectrum floor is zero; set a floor_per_bin")
        return float(self.rates_hz.max()) / floor


DEFAULT_RESOLUTION_FWHM_NM = 0.15


def noise_spectrum(pump_power_mw, filters, model, grid_edges_nm, floor_per_bin_hz=0.0):
    """Background spectrum binned onto a wavelength grid (Hz per bin).

    The in-band optical density is passed through the stack, convolved with
    the spectrometer response (a gaussian_spectrometer entry in `filters` if
    present, else 0.15 nm FWHM), integrated over each grid bin, and offset
    by the instrument floor. grid_edges_nm are ascending bin edges.
    """
    edges = np.asarray(grid_edges_nm, dtype=float)
    if edges.size < 2:
        raise ValueError("grid must contain at least two bin edges")
    if np.any(np.diff(edges) <= 0):
        raise ValueError("grid edges must be strictly ascending")

    stack = [f for f in filters if f.kind != "gaussian_spectrometer"]
    spectrometers = [f for f in filters if f.kind == "gaussian_spectrometer"]
    if spectrometers:
        res_fwhm_ghz = spectrometers[0].fwhm_ghz
    else:
        res_fwhm_ghz = DEFAULT_RESOLUTION_FWHM_NM * C_NM_GHZ / model.lambda_output_nm ** 2
    sigma_ghz = res_fwhm_ghz / (2.0 * math.sqrt(2.0 * math.log(2.0)))

    nu_edges = C_NM_GHZ / edges          # descending
    lo = nu_edges.min() - 5 * sigma_ghz
    hi = nu_edges.max() + 5 * sigma_ghz
    nu = np.arange(lo, hi, _BASE_STEP_GHZ)
    dens = _optical_density(nu, pump_power_mw, model) * stack_transmission(stack, nu)
    dens = gaussian_filter1d(dens, sigma_ghz / _BASE_STEP_GHZ, mode="constant")

    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(nu))])
    cum_at = np.interp(nu_edges, nu, cum)
    # per-bin integral; wavelength bin k spans nu_edges[k+1] .. nu_edges[k]
    rates = cum_at[:-1] - cum_at[1:]
    rates = np.abs(rates) + floor_per_bin_hz
    return BinnedSpectrum(edges, rates, pump_power_mw,
                          res_fwhm_ghz * model.lambda_output_nm ** 2 / C_NM_GHZ,
                          floor_per_bin_hz)
