"""Monte Carlo of the pulsed coincidence-counting experiment.

A mode-locked pump fires every ``1 / rep_rate`` seconds. In each pulse a
photon pair is detected as a cross-detector coincidence with probability
``p_c = 2 pair_prob eta1 eta2 P(tau)``, and each detector independently fires
on uncorrelated light with probability ``s1`` or ``s2``. Detection times get
Gaussian jitter and the start-stop differences t2 - t1 form a comb of peaks
spaced by the pulse period. Correlated pairs only ever land in the central
peak; the side peaks measure the accidental background.

Events are additive (no dead time), so per pulse detector i fires
``C + B_i`` times and the expected peak integrals are

    side:    N (p_c + s1) (p_c + s2)
    central: N (p_c + p_c s1 + p_c s2 + s1 s2)

whose difference ``N p_c (1 - p_c)`` is the pair signal recovered by
side-peak subtraction.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy.special import ndtr

from .errors import (
    InsufficientSidePeaksError,
    InvalidInputError,
    MissingSeedError,
    ModelValidityError,
    PeakOverlapError,
    SuspiciousSubtractionWarning,
)
from .spectral_core import DelayGrid, FringePattern, _frozen

GENERATOR_ID = "numpy.random.PCG64"
MAX_EVENT_PROB = 0.1
BINS_PER_PERIOD = 100
HALF_SPAN_PERIODS = 3.5
# peaks simulated on each side; the outermost only leak into the span via jitter
SIMULATED_LAGS = 4
METHODS = ("events", "peaks")


@dataclass(frozen=True)
class SourceConfig:
    """Pulsed pair source plus two detectors; probabilities are per pump pulse."""

    pair_prob_per_pulse: float
    detector_efficiency_1: float = 1.0
    detector_efficiency_2: float = 1.0
    uncorrelated_singles_prob_1: float = 0.0
    uncorrelated_singles_prob_2: float = 0.0
    timing_jitter_sigma: float = 0.3e-9  # s
    dwell_time: float = 5.0  # s
    rep_rate: float = 76e6  # Hz

    def __post_init__(self):
        if not (math.isfinite(self.rep_rate) and self.rep_rate > 0):
            raise InvalidInputError("rep_rate must be > 0")
        if not (math.isfinite(self.dwell_time) and self.dwell_time > 0):
            raise InvalidInputError("dwell_time must be > 0")
        if not (math.isfinite(self.timing_jitter_sigma) and self.timing_jitter_sigma >= 0):
            raise InvalidInputError("timing_jitter_sigma must be >= 0")
        for name in ("pair_prob_per_pulse", "uncorrelated_singles_prob_1", "uncorrelated_singles_prob_2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1], got {v}")
        for name in ("detector_efficiency_1", "detector_efficiency_2"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise InvalidInputError(f"{name} must lie in (0, 1], got {v}")
        products = {
            "2 x pair_prob x efficiencies": 2.0 * self.max_coincidence_prob,
            "uncorrelated_singles_prob_1": self.uncorrelated_singles_prob_1,
            "uncorrelated_singles_prob_2": self.uncorrelated_singles_prob_2,
        }
        for name, v in products.items():
            if v >= MAX_EVENT_PROB:
                raise ModelValidityError(
                    f"{name} = {v:.3g} per pulse; the at-most-one-pair model needs < {MAX_EVENT_PROB}"
                )

    @property
    def max_coincidence_prob(self) -> float:
        """pair_prob eta1 eta2, the coincidence probability at P = 1/2."""
        return self.pair_prob_per_pulse * self.detector_efficiency_1 * self.detector_efficiency_2

    @property
    def pulse_period(self) -> float:
        return 1.0 / self.rep_rate

    @property
    def n_pulses(self) -> int:
        return int(round(self.rep_rate * self.dwell_time))

    def coincidence_prob(self, p_interference: float) -> float:
        return min(1.0, 2.0 * self.max_coincidence_prob * p_interference)

    @classmethod
    def from_rates(
        cls,
        coincidence_rate: float = 1600.0,
        singles_rate_1: float = 650e3,
        singles_rate_2: float | None = None,
        detector_efficiency_1: float = 0.1,
        detector_efficiency_2: float = 0.1,
        **kwargs,
    ) -> "SourceConfig":
        """Calibrate to measured rates.

        ``coincidence_rate`` is the pair-coincidence rate at P = 1/2 (away from
        the dip, or the NOON fringe mean), in counts per second. The singles
        rates are totals per detector; the pair contribution
        ``pair_prob eta_i`` is removed to get the uncorrelated part.
        """
        rep = kwargs.pop("rep_rate", 76e6)
        singles_rate_2 = singles_rate_1 if singles_rate_2 is None else singles_rate_2
        if coincidence_rate < 0 or singles_rate_1 < 0 or singles_rate_2 < 0:
            raise InvalidInputError("rates must be nonnegative")
        pair = coincidence_rate / rep / (detector_efficiency_1 * detector_efficiency_2)
        s1 = max(singles_rate_1 / rep - pair * detector_efficiency_1, 0.0)
        s2 = max(singles_rate_2 / rep - pair * detector_efficiency_2, 0.0)
        return cls(
            pair_prob_per_pulse=pair,
            detector_efficiency_1=detector_efficiency_1,
            detector_efficiency_2=detector_efficiency_2,
            uncorrelated_singles_prob_1=s1,
            uncorrelated_singles_prob_2=s2,
            rep_rate=rep,
            **kwargs,
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class HistogramData:
    """Start-stop histogram of t2 - t1; bin ``k`` covers ``[start + k w, start + (k+1) w)``."""

    bin_width: float  # s
    counts: np.ndarray
    pulse_period: float  # s
    start: float  # s, left edge of the first bin
    timing_jitter_sigma: float | None = None  # s, per detector
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1 or c.size == 0:
            raise InvalidInputError("histogram counts must be a non-empty 1-D array")
        if not np.all(np.isfinite(c)) or np.any(c < 0) or np.any(c != np.round(c)):
            raise InvalidInputError("histogram counts must be nonnegative integers")
        if not (self.bin_width > 0 and self.pulse_period > 0):
            raise InvalidInputError("bin_width and pulse_period must be > 0")
        object.__setattr__(self, "counts", _frozen(c, dtype=np.int64))
        if self.n_side_lags < 3:
            raise InsufficientSidePeaksError(
                "histogram must span at least three side peaks on each side of zero delay"
            )

    def __eq__(self, other):
        if not isinstance(other, HistogramData):
            return NotImplemented
        return (
            self.bin_width == other.bin_width
            and self.pulse_period == other.pulse_period
            and self.start == other.start
            and np.array_equal(self.counts, other.counts)
        )

    __hash__ = None

    @property
    def bin_centers(self) -> np.ndarray:
        return self.start + self.bin_width * (np.arange(self.counts.size) + 0.5)

    @property
    def bins_per_period(self) -> int:
        ratio = self.pulse_period / self.bin_width
        n = int(round(ratio))
        if abs(ratio - n) > 1e-6 * ratio:
            raise InvalidInputError("pulse_period must be an integer number of bins")
        return n

    def _peak_window(self, lag: int) -> tuple[int, int]:
        """Bin index range [lo, hi) of the one-period window centred on ``lag`` periods."""
        n = self.bins_per_period
        lo = int(round(((lag - 0.5) * self.pulse_period - self.start) / self.bin_width))
        return lo, lo + n

    @property
    def n_side_lags(self) -> int:
        """Largest L such that every peak window with |lag| <= L lies inside the histogram."""
        lag = 0
        while True:
            lo, hi = self._peak_window(-(lag + 1))
            lo2, hi2 = self._peak_window(lag + 1)
            if lo < 0 or hi2 > self.counts.size:
                return lag
            lag += 1

    def peak_integral(self, lag: int) -> int:
        lo, hi = self._peak_window(lag)
        if lo < 0 or hi > self.counts.size:
            raise InsufficientSidePeaksError(f"peak at lag {lag} is not fully inside the histogram")
        return int(self.counts[lo:hi].sum())


def _generator(seed) -> np.random.Generator:
    if seed is None:
        raise MissingSeedError("a seed is required; ambient randomness is not used")
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    if isinstance(seed, (int, np.integer)) and not isinstance(seed, bool):
        return np.random.Generator(np.random.PCG64(int(seed)))
    raise InvalidInputError(f"seed must be an int or SeedSequence, got {type(seed).__name__}")


def _bin_edges(period: float):
    width = period / BINS_PER_PERIOD
    n_bins = int(round(2 * HALF_SPAN_PERIODS * BINS_PER_PERIOD))
    start = -HALF_SPAN_PERIODS * period
    return width, n_bins, start


def _bernoulli_pulses(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    """Sorted indices of the pulses (out of ``n``) in which a rare event fires."""
    if p <= 0:
        return np.empty(0, dtype=np.int64)
    k = rng.binomial(n, p)
    # a uniformly random k-subset, sorted: exact for independent Bernoulli trials
    return np.sort(rng.choice(n, size=k, replace=False)) if k < n // 64 else np.nonzero(rng.random(n) < p)[0]


def _simulate_events(config: SourceConfig, p_c: float, rng: np.random.Generator) -> np.ndarray:
    n = config.n_pulses
    period = config.pulse_period
    width, n_bins, start = _bin_edges(period)
    pairs = _bernoulli_pulses(rng, n, p_c)
    bg1 = _bernoulli_pulses(rng, n, config.uncorrelated_singles_prob_1)
    bg2 = _bernoulli_pulses(rng, n, config.uncorrelated_singles_prob_2)
    p1 = np.concatenate([pairs, bg1])
    p2 = np.concatenate([pairs, bg2])
    o1 = np.argsort(p1, kind="stable")
    o2 = np.argsort(p2, kind="stable")
    p1, p2 = p1[o1], p2[o2]
    sig = config.timing_jitter_sigma
    j1 = rng.normal(0.0, sig, p1.size) if sig > 0 else np.zeros(p1.size)
    j2 = rng.normal(0.0, sig, p2.size) if sig > 0 else np.zeros(p2.size)

    counts = np.zeros(n_bins, dtype=np.int64)
    for lag in range(-SIMULATED_LAGS, SIMULATED_LAGS + 1):
        target = p1 + lag
        lo = np.searchsorted(p2, target, "left")
        hi = np.searchsorted(p2, target, "right")
        mult = hi - lo
        for m in range(int(mult.max()) if mult.size else 0):
            sel = np.nonzero(mult > m)[0]
            dt = lag * period + j2[lo[sel] + m] - j1[sel]
            idx = np.floor((dt - start) / width).astype(np.int64)
            idx = idx[(idx >= 0) & (idx < n_bins)]
            counts += np.bincount(idx, minlength=n_bins)
    return counts


def _peak_profile(center: float, sigma_dt: float, width: float, n_bins: int, start: float) -> np.ndarray:
    """Probability of each bin (plus a trailing 'outside' cell) for a jittered peak."""
    edges = start + width * np.arange(n_bins + 1)
    if sigma_dt > 0:
        cdf = ndtr((edges - center) / sigma_dt)
        probs = np.diff(cdf)
    else:
        probs = np.zeros(n_bins)
        k = int(math.floor((center - start) / width))
        if 0 <= k < n_bins:
            probs[k] = 1.0
    probs = np.clip(probs, 0.0, 1.0)
    return np.append(probs, max(0.0, 1.0 - probs.sum()))


def _simulate_peaks(config: SourceConfig, p_c: float, rng: np.random.Generator) -> np.ndarray:
    n = config.n_pulses
    period = config.pulse_period
    width, n_bins, start = _bin_edges(period)
    s1 = config.uncorrelated_singles_prob_1
    s2 = config.uncorrelated_singles_prob_2
    sigma_dt = math.sqrt(2.0) * config.timing_jitter_sigma
    counts = np.zeros(n_bins, dtype=np.int64)
    for lag in range(-SIMULATED_LAGS, SIMULATED_LAGS + 1):
        if lag == 0:
            total = rng.binomial(n, p_c) + rng.poisson(n * (p_c * (s1 + s2) + s1 * s2))
        else:
            total = rng.poisson(n * (p_c + s1) * (p_c + s2))
        profile = _peak_profile(lag * period, sigma_dt, width, n_bins, start)
        counts += rng.multinomial(total, profile)[:-1]
    return counts


def simulate_histogram(
    config: SourceConfig, p_interference: float, seed, method: str = "events"
) -> HistogramData:
    """Start-stop histogram for one delay setting.

    ``method='events'`` simulates every firing pulse and histograms all
    start-stop pairs; ``method='peaks'`` draws each peak's total from its
    exact per-pulse expectation and spreads it with the jitter profile, which
    is orders of magnitude faster for long scans. Both share the model in the
    module docstring.
    """
    if not 0.0 <= p_interference <= 1.0:
        raise InvalidInputError(f"p_interference must lie in [0, 1], got {p_interference}")
    if method not in METHODS:
        raise InvalidInputError(f"method must be one of {METHODS}")
    period = config.pulse_period
    if config.timing_jitter_sigma > period / 6.0:
        raise PeakOverlapError(
            f"jitter {config.timing_jitter_sigma:.3g} s exceeds pulse_period/6 = {period / 6:.3g} s"
        )
    rng = _generator(seed)
    p_c = config.coincidence_prob(p_interference)
    counts = (_simulate_events if method == "events" else _simulate_peaks)(config, p_c, rng)
    width, _, start = _bin_edges(period)
    md = {
        "generator": GENERATOR_ID,
        "seed": _seed_record(seed),
        "method": method,
        "p_interference": float(p_interference),
        "n_pulses": config.n_pulses,
        "config": config.to_dict(),
    }
    return HistogramData(width, counts, period, start, config.timing_jitter_sigma, md)


def _seed_record(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
    return int(seed)


@dataclass(frozen=True)
class AccidentalEstimate:
    mean: float  # counts per peak
    stderr: float
    n_side: int
    side_counts: tuple


def _jitter_from_side_peaks(hist: HistogramData) -> float:
    """Per-detector jitter estimated from the folded side-peak profile."""
    n = hist.bins_per_period
    offsets = (np.arange(n) + 0.5 - n / 2) * hist.bin_width
    folded = np.zeros(n)
    for lag in range(1, hist.n_side_lags + 1):
        for s in (-lag, lag):
            lo, hi = hist._peak_window(s)
            folded += hist.counts[lo:hi]
    if folded.sum() == 0:
        return 0.0
    var = np.sum(folded * offsets**2) / folded.sum()
    return math.sqrt(var / 2.0)


def estimate_accidentals(hist: HistogramData) -> AccidentalEstimate:
    """Mean integrated side-peak count, one pulse period per peak, centre excluded."""
    sigma = hist.timing_jitter_sigma
    if sigma is None:
        sigma = _jitter_from_side_peaks(hist)
    if sigma > hist.pulse_period / 6.0:
        raise PeakOverlapError(
            f"jitter {sigma:.3g} s exceeds pulse_period/6; side peaks overlap the central peak"
        )
    lags = [s for lag in range(1, hist.n_side_lags + 1) for s in (-lag, lag)]
    if len(lags) < 4:
        raise InsufficientSidePeaksError(f"need at least 4 side peaks, found {len(lags)}")
    side = np.array([hist.peak_integral(s) for s in lags], dtype=float)
    mean = float(side.mean())
    # Poisson standard error of the mean; robust even when all side peaks are 0
    stderr = math.sqrt(mean / side.size)
    return AccidentalEstimate(mean, stderr, side.size, tuple(int(v) for v in side))


@dataclass(frozen=True)
class CorrectedCounts:
    signal: float
    sigma: float
    central: int
    accidentals: float
    n_side: int


def corrected_coincidences(hist: HistogramData) -> CorrectedCounts:
    """Central-peak integral minus the side-peak accidental estimate.

    sigma = sqrt(C + A (1 + 1/n_side)) with C the central count and A the mean
    side-peak count.
    """
    acc = estimate_accidentals(hist)
    central = hist.peak_integral(0)
    signal = central - acc.mean
    sigma = math.sqrt(central + acc.mean * (1.0 + 1.0 / acc.n_side))
    if signal < -3.0 * sigma:
        warnings.warn(
            f"corrected signal {signal:.1f} is more than 3 sigma below zero",
            SuspiciousSubtractionWarning,
            stacklevel=2,
        )
    return CorrectedCounts(float(signal), sigma, central, acc.mean, acc.n_side)


def point_seed(seed, index: int) -> np.random.SeedSequence:
    """Per-delay-point seed derived from (seed, point index), independent of scheduling."""
    if seed is None:
        raise MissingSeedError("a seed is required; ambient randomness is not used")
    return np.random.SeedSequence([int(seed), int(index)])


def scan_experiment(
    config: SourceConfig,
    fringe: FringePattern,
    seed,
    method: str = "peaks",
    subtract_accidentals: bool = True,
    workers: int = 1,
    keep_histograms: bool = False,
):
    """Simulate a full delay scan and return a count-domain fringe with sigma.

    Each delay point gets its own histogram seeded by ``(seed, index)``. With
    ``subtract_accidentals`` the values are corrected coincidences, otherwise
    raw central-peak integrals with sigma = sqrt(C). Returns the fringe, or
    ``(fringe, histograms)`` when ``keep_histograms`` is set.
    """
    if seed is None:
        raise MissingSeedError("a seed is required; ambient randomness is not used")
    p = np.asarray(fringe.values, dtype=float)
    if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
        raise InvalidInputError("fringe values must be probabilities in [0, 1]")
    p = np.clip(p, 0.0, 1.0)

    def run(i):
        return simulate_histogram(config, float(p[i]), point_seed(seed, i), method)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            hists = list(pool.map(run, range(p.size)))
    else:
        hists = [run(i) for i in range(p.size)]

    values = np.empty(p.size)
    sigma = np.empty(p.size)
    for i, h in enumerate(hists):
        if subtract_accidentals:
            with warnings.catch_warnings():
                # individual negative points are expected deep in a dip; keep them
                warnings.simplefilter("ignore", SuspiciousSubtractionWarning)
                c = corrected_coincidences(h)
            values[i], sigma[i] = c.signal, c.sigma
        else:
            central = h.peak_integral(0)
            values[i], sigma[i] = central, math.sqrt(central)
    md = dict(fringe.metadata)
    md.update(
        {
            "generator": GENERATOR_ID,
            "seed": int(seed),
            "method": method,
            "subtract_accidentals": subtract_accidentals,
            "config": config.to_dict(),
        }
    )
    out = FringePattern(DelayGrid(fringe.grid.start, fringe.grid.step, fringe.grid.count), values, fringe.kind, sigma, md)
    return (out, hists) if keep_histograms else out
