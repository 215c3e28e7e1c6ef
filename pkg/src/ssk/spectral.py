"""STFT realized as real/imaginary convolution kernels, its inverse, and LPS.

The analysis step is a plain frame/matmul formulation of

    K_real[m, n] = w[n] * cos(2*pi*n*m / N)
    K_imag[m, n] = -w[n] * sin(2*pi*n*m / N)

so ``frames @ K.T`` equals the windowed, zero-padded N-point DFT of each
frame. The constant per-frame phase factor of the convolutional STFT is
omitted throughout: it has unit magnitude and cancels in every inter-channel
phase difference, which is all the downstream features consume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import check_COLA


class StftConfigError(ValueError):
    """Raised for analysis configurations that cannot reconstruct."""


def hann_periodic(length: int) -> np.ndarray:
    """Periodic Hann window, COLA at hop length/2."""
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


@dataclass(frozen=True, eq=False)
class StftConfig:
    """Analysis window, FFT size and hop. Defaults follow the 2.5 ms / 1.25 ms
    kernel: 40-sample periodic Hann, hop 20, 64-point FFT, 33 bins."""

    window: np.ndarray
    fft_size: int = 64
    hop: int = 20
    sample_rate: int = 16000

    def __post_init__(self) -> None:
        win = np.asarray(self.window, dtype=float).ravel()
        if win.size < 1:
            raise StftConfigError("window must be non-empty")
        if not np.all(np.isfinite(win)):
            raise StftConfigError("window must be finite")
        if self.hop < 1 or self.hop > win.size:
            raise StftConfigError(f"hop {self.hop} must be in [1, {win.size}]")
        if self.fft_size < win.size:
            raise StftConfigError(f"fft_size {self.fft_size} < window length {win.size}")
        if self.sample_rate <= 0:
            raise StftConfigError("sample_rate must be positive")
        object.__setattr__(self, "window", win)

    @classmethod
    def default(cls, sample_rate: int = 16000) -> "StftConfig":
        return cls(window=hann_periodic(40), fft_size=64, hop=20, sample_rate=sample_rate)

    @classmethod
    def oracle_mask_default(cls, sample_rate: int = 16000) -> "StftConfig":
        """16 ms Hann / 256-point FFT / 50% hop used for oracle masks."""
        return cls(window=hann_periodic(256), fft_size=256, hop=128, sample_rate=sample_rate)

    @property
    def win_len(self) -> int:
        return int(self.window.size)

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def freqs(self) -> np.ndarray:
        """Bin center frequencies in Hz."""
        return np.arange(self.num_bins) * self.sample_rate / self.fft_size

    def matches(self, other: "StftConfig") -> bool:
        return (self.fft_size == other.fft_size and self.hop == other.hop
                and self.sample_rate == other.sample_rate
                and self.window.size == other.window.size
                and np.array_equal(self.window, other.window))

    def num_frames(self, num_samples: int) -> int:
        if num_samples < self.win_len:
            return 0
        return 1 + (num_samples - self.win_len) // self.hop


@dataclass(frozen=True, eq=False)
class StftKernel:
    """Real/imaginary analysis kernels, each (num_bins, win_len)."""

    real: np.ndarray
    imag: np.ndarray
    config: StftConfig


@dataclass(frozen=True, eq=False)
class ComplexSpectrogram:
    """Frames x bins complex T-F representation of one channel."""

    data: np.ndarray
    config: StftConfig

    @property
    def num_frames(self) -> int:
        return int(self.data.shape[0])

    @property
    def num_bins(self) -> int:
        return int(self.data.shape[1])

    def magnitude(self) -> np.ndarray:
        return np.abs(self.data)

    def phase(self) -> np.ndarray:
        return np.angle(self.data)


def build_kernel(cfg: StftConfig) -> StftKernel:
    """Build the analysis kernels for ``cfg``.

    Raises :class:`StftConfigError` when the window does not satisfy
    constant overlap-add at the configured hop, since such configurations
    cannot be inverted by overlap-add.
    """
    noverlap = cfg.win_len - cfg.hop
    if not check_COLA(cfg.window, cfg.win_len, noverlap):
        raise StftConfigError(
            f"window of length {cfg.win_len} violates COLA at hop {cfg.hop}")
    n = np.arange(cfg.win_len)
    m = np.arange(cfg.num_bins)
    phase = 2.0 * np.pi * np.outer(m, n) / cfg.fft_size
    real = cfg.window[None, :] * np.cos(phase)
    imag = -cfg.window[None, :] * np.sin(phase)
    return StftKernel(real=real, imag=imag, config=cfg)


def _frame(signal: np.ndarray, win_len: int, hop: int) -> np.ndarray:
    frames = np.lib.stride_tricks.sliding_window_view(signal, win_len)[::hop]
    return np.ascontiguousarray(frames)


def stft(signal: np.ndarray, kernel: StftKernel) -> ComplexSpectrogram:
    """Analyze a single-channel waveform; frame t covers samples
    [t*hop, t*hop + win_len), no boundary padding."""
    x = np.asarray(signal, dtype=float).ravel()
    cfg = kernel.config
    if x.size < cfg.win_len:
        raise ValueError(f"signal of {x.size} samples is shorter than one frame ({cfg.win_len})")
    frames = _frame(x, cfg.win_len, cfg.hop)
    real = frames @ kernel.real.T
    imag = frames @ kernel.imag.T
    return ComplexSpectrogram(data=real + 1j * imag, config=cfg)


def istft(spec: ComplexSpectrogram, kernel: StftKernel) -> np.ndarray:
    """Weighted overlap-add inverse; reproduces interior samples of the
    analyzed signal (the first/last window length is boundary-distorted)."""
    cfg = kernel.config
    if not spec.config.matches(cfg):
        raise ValueError("spectrogram config does not match kernel config")
    num_frames = spec.num_frames
    out_len = (num_frames - 1) * cfg.hop + cfg.win_len if num_frames else 0
    out = np.zeros(out_len)
    norm = np.zeros(out_len)
    # Frame waveforms via the inverse rfft of the zero-padded spectrum.
    frames = np.fft.irfft(spec.data, n=cfg.fft_size, axis=1)[:, :cfg.win_len]
    win = cfg.window
    win_sq = win * win
    for t in range(num_frames):
        start = t * cfg.hop
        out[start:start + cfg.win_len] += frames[t] * win
        norm[start:start + cfg.win_len] += win_sq
    return np.where(norm > 1e-10, out / np.maximum(norm, 1e-10), 0.0)


LPS_FLOOR = 1e-12


def lps(spec: ComplexSpectrogram) -> np.ndarray:
    """Log power spectrum in dB: 10*log10(re^2 + im^2 + floor)."""
    power = spec.data.real ** 2 + spec.data.imag ** 2
    return 10.0 * np.log10(power + LPS_FLOOR)
