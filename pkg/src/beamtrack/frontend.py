"""Frame analysis, noise/SNR/reverberation weighting and whitened cross-correlations."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np

MAG_FLOOR = 1e-12
UPSAMPLE = 16  # lag resolution of the interpolated correlation used for refinement
NOISE_FLOOR = 1e-20


class ConfigMismatch(ValueError):
    pass


@dataclass
class StftConfig:
    frame_length: int = 1024
    hop: int = 512
    sample_rate: int = 48000
    frames_per_update: int = 4
    window: str = "hann"  # "hann" (periodic, sums to one at 50% overlap) or "rect"

    def __post_init__(self):
        L = self.frame_length
        if L < 2 or L & (L - 1):
            raise ConfigMismatch(f"frame_length must be a power of two, got {L}")
        if self.hop * 2 != L:
            raise ConfigMismatch(f"hop must be frame_length/2, got hop={self.hop} L={L}")
        if self.frames_per_update < 1:
            raise ConfigMismatch("frames_per_update must be >= 1")
        if self.window not in ("hann", "rect"):
            raise ConfigMismatch(f"unknown window {self.window!r}")

    @property
    def n_bins(self) -> int:
        return self.frame_length // 2 + 1

    @property
    def update_period(self) -> float:
        """Seconds between two emitted correlation sets."""
        return self.frames_per_update * self.hop / self.sample_rate

    def analysis_window(self) -> np.ndarray:
        L = self.frame_length
        if self.window == "rect":
            return np.ones(L)
        return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(L) / L)


@dataclass
class FrontendConfig:
    alpha_d: float = 0.1  # decision-directed adaptation rate
    gamma: float = 0.65  # reverberation decay per frame
    delta: float = 1.0  # reverberation level
    whiten: bool = True
    snr_weighting: bool = True
    # simplified MCRA
    mcra_alpha_s: float = 0.8
    mcra_alpha_d: float = 0.95
    mcra_alpha_p: float = 0.2
    mcra_ratio: float = 5.0
    mcra_bias: float = 1.5
    mcra_window_s: float = 1.0

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if not 0 < self.alpha_d <= 1:
            raise ValueError(f"alpha_d must lie in (0, 1], got {self.alpha_d}")


def analyze_frame(frame: np.ndarray, config: StftConfig) -> np.ndarray:
    """Window an (M, L) frame and return its (M, L/2+1) one-sided spectra."""
    frame = np.atleast_2d(np.asarray(frame, dtype=float))
    if frame.shape[-1] != config.frame_length:
        raise ConfigMismatch(f"frame length {frame.shape[-1]} != configured {config.frame_length}")
    return np.fft.rfft(frame * config.analysis_window(), axis=-1)


class NoiseTracker:
    """Minima-controlled recursive noise average, per channel and bin.

    The smoothed PSD is compared to its running minimum (times ``bias``); bins
    where the ratio exceeds ``ratio`` are treated as signal and the noise estimate
    is frozen there, otherwise it follows the PSD recursively.
    """

    def __init__(self, config: FrontendConfig, frames_per_window: int):
        self.cfg = config
        self.window = max(int(frames_per_window), 1)
        self.n = 0
        self.smoothed = None
        self.minimum = None
        self.candidate = None
        self.presence = None
        self.noise = None

    def update(self, psd: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        psd = np.maximum(np.asarray(psd, dtype=float), 0.0)
        if self.noise is None:
            self.smoothed = psd.copy()
            self.minimum = psd.copy()
            self.candidate = psd.copy()
            self.presence = np.zeros_like(psd)
            self.noise = np.maximum(psd, NOISE_FLOOR)
            self.n = 1
            return self.noise
        self.smoothed = cfg.mcra_alpha_s * self.smoothed + (1 - cfg.mcra_alpha_s) * psd
        if self.n % self.window == 0:
            self.minimum = np.minimum(self.candidate, self.smoothed)
            self.candidate = self.smoothed.copy()
        else:
            self.minimum = np.minimum(self.minimum, self.smoothed)
            self.candidate = np.minimum(self.candidate, self.smoothed)
        floor = cfg.mcra_bias * self.minimum
        speech = self.smoothed > cfg.mcra_ratio * np.maximum(floor, NOISE_FLOOR)
        self.presence = cfg.mcra_alpha_p * self.presence + (1 - cfg.mcra_alpha_p) * speech
        # freeze at once on a detected onset rather than waiting for the smoothed presence
        a = cfg.mcra_alpha_d + (1 - cfg.mcra_alpha_d) * np.maximum(self.presence, speech)
        self.noise = np.maximum(a * self.noise + (1 - a) * psd, NOISE_FLOOR)
        self.n += 1
        return self.noise


def update_noise_estimate(tracker: NoiseTracker, psd: np.ndarray) -> np.ndarray:
    return tracker.update(psd)


def snr_weight(xi):
    """Wiener-like mask xi / (xi + 1)."""
    xi = np.asarray(xi, dtype=float)
    return xi / (xi + 1.0)


@dataclass
class ChannelSpectralState:
    """Per-channel recursive state; arrays are (M, bins)."""

    noise_psd: np.ndarray
    reverb_psd: np.ndarray
    prev_weight: np.ndarray
    prev_power: np.ndarray

    @classmethod
    def zeros(cls, n_channels: int, n_bins: int) -> "ChannelSpectralState":
        z = np.zeros((n_channels, n_bins))
        return cls(z.copy(), z.copy(), z.copy(), z.copy())


def compute_snr_weights(state: ChannelSpectralState, spectrum: np.ndarray, noise: np.ndarray,
                        alpha_d: float = 0.1) -> np.ndarray:
    """Decision-directed a priori SNR and its mask for the current frame.

    Updates ``state.prev_weight`` and ``state.prev_power`` for the next frame.
    """
    power = np.abs(spectrum) ** 2
    noise = np.maximum(noise, NOISE_FLOOR)
    xi = ((1 - alpha_d) * state.prev_weight ** 2 * state.prev_power + alpha_d * power) / noise
    zeta = snr_weight(xi)
    state.prev_weight = zeta
    state.prev_power = power
    return zeta


def update_reverb_estimate(state: ChannelSpectralState, weighted_prev: np.ndarray, gamma: float,
                           delta: float) -> np.ndarray:
    """Exponential reverberation tail; returns the new reverberation PSD."""
    state.reverb_psd = gamma * state.reverb_psd + (1 - gamma) * delta * np.abs(weighted_prev) ** 2
    return state.reverb_psd


@dataclass(frozen=True)
class CrossCorrelationSet:
    """Weighted cross-correlations for one update.

    ``values[p, tau mod L]`` holds the correlation of pair ``pairs[p]`` at lag tau;
    ``spectra[p]`` is the averaged one-sided weighted cross-spectrum it came from.
    """

    values: np.ndarray
    spectra: np.ndarray
    pairs: tuple
    frame_length: int
    timestamp: float = 0.0

    def at(self, pair_index: int, tau: int) -> float:
        return float(self.values[pair_index, tau % self.frame_length])

    def copy(self) -> "CrossCorrelationSet":
        return CrossCorrelationSet(self.values.copy(), self.spectra, self.pairs, self.frame_length,
                                   self.timestamp)

    def evaluate(self, taus: np.ndarray) -> np.ndarray:
        """Correlation at fractional lags, band-limited from the cross-spectra.

        ``taus`` has shape (K, n_pairs); returns (K, n_pairs). Exact but slow;
        :meth:`interpolate` is the fast path.
        """
        L = self.frame_length
        k = np.arange(self.spectra.shape[1])
        coef = np.full(k.shape, 2.0)
        coef[0] = 1.0
        coef[-1] = 1.0
        phase = np.exp(2j * np.pi * taus[..., None] * k / L)
        return np.real(np.einsum("kpb,pb->kp", phase, self.spectra * coef))

    @cached_property
    def upsampled(self) -> np.ndarray:
        """Band-limited correlations on a 1/UPSAMPLE lag grid, (n_pairs, L * UPSAMPLE)."""
        L = self.frame_length
        n = L * UPSAMPLE
        padded = np.zeros((self.spectra.shape[0], n // 2 + 1), dtype=complex)
        padded[:, :L // 2 + 1] = self.spectra
        padded[:, L // 2] *= 0.5  # the old Nyquist bin becomes an interior bin counted twice
        return np.fft.irfft(padded, n=n, axis=-1) * n

    def interpolate(self, taus: np.ndarray) -> np.ndarray:
        """Linear interpolation of :attr:`upsampled` at fractional lags; same shape rules as evaluate."""
        up = self.upsampled
        n = up.shape[1]
        pos = np.asarray(taus, dtype=float) * UPSAMPLE
        i0 = np.floor(pos)
        frac = pos - i0
        i0 = i0.astype(np.int64) % n
        cols = np.arange(up.shape[0])
        return (1 - frac) * up[cols, i0] + frac * up[cols, (i0 + 1) % n]


def cross_spectra(weighted: np.ndarray, pairs) -> np.ndarray:
    """conj(Z_i) * Z_j for each pair; the lag of the resulting peak matches the far-field TDOA sign."""
    ii, jj = np.array(pairs).T
    return np.conj(weighted[ii]) * weighted[jj]


def correlate(spectra: np.ndarray, frame_length: int) -> np.ndarray:
    """Full-band lag-domain correlations (sum over all L bins, no 1/L)."""
    return np.fft.irfft(spectra, n=frame_length, axis=-1) * frame_length


class SpectralFrontend:
    """Streaming conversion of (M, hop) sample blocks into CrossCorrelationSets."""

    def __init__(self, n_channels: int, stft: StftConfig | None = None, config: FrontendConfig | None = None):
        self.stft = stft or StftConfig()
        self.cfg = config or FrontendConfig()
        self.n_channels = n_channels
        self.pairs = tuple(combinations(range(n_channels), 2))
        frames_per_sec = self.stft.sample_rate / self.stft.hop
        self.noise = NoiseTracker(self.cfg, round(self.cfg.mcra_window_s * frames_per_sec))
        self.state = ChannelSpectralState.zeros(n_channels, self.stft.n_bins)
        self._buffer = np.zeros((n_channels, self.stft.frame_length))
        self._acc = np.zeros((len(self.pairs), self.stft.n_bins), dtype=complex)
        self._count = 0
        self._frames = 0
        self._window = self.stft.analysis_window()

    def weights(self, spectrum: np.ndarray) -> np.ndarray:
        """SNR/reverberation mask for one frame of spectra; advances the channel state."""
        cfg, st = self.cfg, self.state
        power = np.abs(spectrum) ** 2
        if not cfg.snr_weighting:
            return np.ones_like(power)
        noise = self.noise.update(power)
        st.noise_psd = noise
        prev_power = st.prev_power
        effective = noise + st.reverb_psd
        zeta = compute_snr_weights(st, spectrum, effective, cfg.alpha_d)
        update_reverb_estimate(st, zeta * np.sqrt(prev_power), cfg.gamma, cfg.delta)
        return zeta

    def process_frame(self, frame: np.ndarray):
        """Feed one full (M, L) frame; returns a CrossCorrelationSet every ``frames_per_update`` frames."""
        spectrum = np.fft.rfft(frame * self._window, axis=-1)
        zeta = self.weights(spectrum)
        if self.cfg.whiten:
            z = zeta * spectrum / np.maximum(np.abs(spectrum), MAG_FLOOR)
        else:
            z = zeta * spectrum
        self._acc += cross_spectra(z, self.pairs)
        self._count += 1
        self._frames += 1
        if self._count < self.stft.frames_per_update:
            return None
        spectra = self._acc / self._count
        self._acc = np.zeros_like(self._acc)
        self._count = 0
        n_upd = self._frames // self.stft.frames_per_update - 1
        out = CrossCorrelationSet(correlate(spectra, self.stft.frame_length), spectra, self.pairs,
                                  self.stft.frame_length, update_timestamp(n_upd, self.stft))
        return out

    def push(self, block: np.ndarray):
        """Feed one (M, hop) block of new samples; returns a CrossCorrelationSet or None."""
        hop = self.stft.hop
        self._buffer[:, :-hop] = self._buffer[:, hop:]
        self._buffer[:, -hop:] = block
        return self.process_frame(self._buffer)


def update_timestamp(index: int, stft: StftConfig) -> float:
    """Centre time (s) of the samples spanned by update ``index``."""
    n0 = index * stft.frames_per_update
    start = (n0 - 1) * stft.hop
    end = start + (stft.frames_per_update - 1) * stft.hop + stft.frame_length
    return 0.5 * (start + end) / stft.sample_rate


def stream(signal: np.ndarray, frontend: SpectralFrontend):
    """Yield CrossCorrelationSets for an (M, T) signal."""
    hop = frontend.stft.hop
    for start in range(0, signal.shape[1] - hop + 1, hop):
        out = frontend.push(signal[:, start:start + hop])
        if out is not None:
            yield out


def accumulate_cross_correlations(spectra_stream, weights_stream, pairs, frame_length: int,
                                  frames_per_update: int = 4, whiten: bool = True):
    """Batch form: average weighted, whitened cross-spectra over groups of frames.

    ``spectra_stream``/``weights_stream`` yield (M, bins) arrays; a trailing
    incomplete group produces nothing.
    """
    acc, count, out = None, 0, []
    for X, zeta in zip(spectra_stream, weights_stream):
        z = zeta * X / np.maximum(np.abs(X), MAG_FLOOR) if whiten else zeta * X
        c = cross_spectra(z, pairs)
        acc = c if acc is None else acc + c
        count += 1
        if count == frames_per_update:
            spectra = acc / count
            out.append(CrossCorrelationSet(correlate(spectra, frame_length), spectra, tuple(pairs), frame_length))
            acc, count = None, 0
    return out
