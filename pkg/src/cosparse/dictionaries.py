"""Analysis dictionaries: band collections, wavelet transforms, concatenation.

A :class:`CompositeDictionary` is an ordered list of analysis bands (each a
:class:`~cosparse.linops.LinOp` sharing the signal dimension) together with
the bookkeeping the reweighting algorithms need: band sizes, stacked row
offsets, and per-band field constants (1 for real-valued band outputs, 2
for complex).
"""

from __future__ import annotations

import numpy as np

from .linops import LinOp, make_finite_difference

__all__ = [
    "CompositeDictionary",
    "concat_dictionaries",
    "daubechies_lowpass",
    "highpass_from_lowpass",
    "make_owt",
    "make_uwt",
    "make_finite_difference_dictionary",
]


class StackedOp(LinOp):
    """Vertical stack of dictionary bands as a single operator."""

    def __init__(self, dictionary: "CompositeDictionary"):
        field = "complex" if dictionary.field == "complex" else "real"
        super().__init__(dictionary.total_rows, dictionary.cols, field)
        self._dict = dictionary

    def forward(self, x):
        return self._dict.analyze(x)

    def adjoint(self, z):
        return self._dict.synthesize(z)


class CompositeDictionary:
    """Ordered collection of analysis bands over a common signal space.

    Parameters
    ----------
    bands : sequence of LinOp
        The sub-dictionaries; all must share ``cols``.
    signal_field : str
        Field of the signals this dictionary will analyze.  Band outputs
        are complex when either the band or the signal is complex, which
        determines the per-band field constants.
    """

    def __init__(self, bands, signal_field: str = "real",
                 frame_constant: float | None = None):
        bands = list(bands)
        if not bands:
            raise ValueError("dictionary needs at least one band")
        cols = bands[0].cols
        for b in bands:
            if b.cols != cols:
                raise ValueError(
                    f"band column mismatch: {b.cols} != {cols}; all bands must "
                    "share the signal dimension"
                )
        if signal_field not in ("real", "complex"):
            raise ValueError(f"invalid signal_field {signal_field!r}")
        self.bands = bands
        self.signal_field = signal_field
        self.cols = cols
        self.band_sizes = np.array([b.rows for b in bands], dtype=np.intp)
        self.offsets = np.concatenate([[0], np.cumsum(self.band_sizes)])
        self.total_rows = int(self.offsets[-1])
        # Psi^T Psi = frame_constant * I when set; enables direct solvers.
        self.frame_constant = frame_constant
        # all-convolutional dictionaries share one spectrum per apply
        self._conv_transfers = None
        self._conv_shape = None
        if all(isinstance(b, UwtBandOp) for b in bands):
            shapes = {b.shape for b in bands}
            if len(shapes) == 1:
                self._conv_shape = bands[0].shape
                self._conv_transfers = np.stack([b._transfer for b in bands])

    @property
    def n_bands(self) -> int:
        return len(self.bands)

    @property
    def field(self) -> str:
        """Field of the stacked analysis coefficients."""
        if self.signal_field == "complex" or any(b.field == "complex" for b in self.bands):
            return "complex"
        return "real"

    @property
    def field_constants(self) -> np.ndarray:
        """Per-band constants: 1 for real band outputs, 2 for complex."""
        return np.array(
            [2 if (b.field == "complex" or self.signal_field == "complex") else 1
             for b in self.bands],
            dtype=np.intp,
        )

    def with_signal_field(self, signal_field: str) -> "CompositeDictionary":
        return CompositeDictionary(self.bands, signal_field=signal_field,
                                   frame_constant=self.frame_constant)

    def band_slice(self, d: int) -> slice:
        """Stacked-row slice of band ``d`` (the index set of that band)."""
        return slice(int(self.offsets[d]), int(self.offsets[d + 1]))

    def analyze(self, x: np.ndarray) -> np.ndarray:
        """Stacked analysis coefficients of all bands, in band order."""
        if self._conv_transfers is not None:
            img = np.asarray(x).reshape(self._conv_shape)
            spec = np.fft.fft2(img)
            out = np.fft.ifft2(self._conv_transfers * spec[None], axes=(1, 2))
            if not np.iscomplexobj(img):
                out = out.real
            return out.reshape(-1)
        return np.concatenate([b.forward(x) for b in self.bands])

    def synthesize(self, z: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`analyze`: sum of per-band adjoints."""
        if self._conv_transfers is not None:
            n1, n2 = self._conv_shape
            imgs = np.asarray(z).reshape(-1, n1, n2)
            spec = np.fft.fft2(imgs, axes=(1, 2))
            acc = np.einsum("bij,bij->ij", np.conj(self._conv_transfers), spec)
            out = np.fft.ifft2(acc)
            if not np.iscomplexobj(z):
                out = out.real
            return out.reshape(-1)
        out = self.bands[0].adjoint(z[self.band_slice(0)])
        for d in range(1, self.n_bands):
            out = out + self.bands[d].adjoint(z[self.band_slice(d)])
        return out

    def split(self, z: np.ndarray) -> list[np.ndarray]:
        """Views of stacked coefficients, one per band."""
        return [z[self.band_slice(d)] for d in range(self.n_bands)]

    def stacked(self) -> StackedOp:
        return StackedOp(self)

    def band_l1_norms(self, x: np.ndarray) -> np.ndarray:
        z = np.abs(self.analyze(x))
        return np.array([z[self.band_slice(d)].sum() for d in range(self.n_bands)])


def concat_dictionaries(parts) -> CompositeDictionary:
    """Concatenate dictionaries band-wise; stacked indices are renumbered.

    Frame constants add: a concatenation of tight frames is a tight frame.
    """
    parts = list(parts)
    if not parts:
        raise ValueError("need at least one dictionary")
    cols = parts[0].cols
    for p in parts:
        if p.cols != cols:
            raise ValueError(f"signal dimension mismatch: {p.cols} != {cols}")
    bands = [b for p in parts for b in p.bands]
    constants = [p.frame_constant for p in parts]
    frame_constant = None if any(c is None for c in constants) else float(sum(constants))
    return CompositeDictionary(bands, signal_field=parts[0].signal_field,
                               frame_constant=frame_constant)


def make_finite_difference_dictionary(n1: int, n2: int) -> CompositeDictionary:
    """Vertical + horizontal finite differences as a two-band dictionary."""
    return CompositeDictionary(
        [make_finite_difference(n1, n2, "vertical"),
         make_finite_difference(n1, n2, "horizontal")]
    )


# ---------------------------------------------------------------------------
# Daubechies filter bank
# ---------------------------------------------------------------------------

_SQRT2 = float(np.sqrt(2.0))


def daubechies_lowpass(name: str) -> np.ndarray:
    """Orthonormal Daubechies analysis lowpass taps (sum sqrt(2), energy 1)."""
    if name == "db1":
        return np.array([1.0, 1.0]) / _SQRT2
    if name == "db2":
        s3 = np.sqrt(3.0)
        return np.array([1.0 + s3, 3.0 + s3, 3.0 - s3, 1.0 - s3]) / (4.0 * _SQRT2)
    if name == "db3":
        s10 = np.sqrt(10.0)
        b = np.sqrt(5.0 + 2.0 * s10)
        return np.array(
            [
                1.0 + s10 + b,
                5.0 + s10 + 3.0 * b,
                10.0 - 2.0 * s10 + 2.0 * b,
                10.0 - 2.0 * s10 - 2.0 * b,
                5.0 + s10 - 3.0 * b,
                1.0 + s10 - b,
            ]
        ) / (16.0 * _SQRT2)
    raise ValueError(f"unsupported wavelet filter {name!r} (expected db1/db2/db3)")


def highpass_from_lowpass(h: np.ndarray) -> np.ndarray:
    """Quadrature-mirror highpass by alternating flip of the lowpass."""
    g = h[::-1].copy()
    g[1::2] *= -1.0
    return g


# ---------------------------------------------------------------------------
# Orthonormal decimated 2D wavelet transform (periodic boundary)
# ---------------------------------------------------------------------------


def _down_convolve(x: np.ndarray, f: np.ndarray, axis: int) -> np.ndarray:
    """Periodic convolution with stride-2 downsampling along ``axis``."""
    x = np.moveaxis(x, axis, 0)
    n = x.shape[0]
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(len(f))[None, :]) % n
    out = np.tensordot(f, x[idx], axes=(0, 1))
    return np.moveaxis(out, 0, axis)

def _up_correlate(y: np.ndarray, f: np.ndarray, n: int, axis: int) -> np.ndarray:
    """Adjoint of :func:`_down_convolve`: upsample by 2 and scatter taps."""
    y = np.moveaxis(y, axis, 0)
    out = np.zeros((n,) + y.shape[1:], dtype=y.dtype)
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(len(f))[None, :]) % n
    for k in range(len(f)):
        # indices within one tap are distinct (stride 2 < n), so += is safe
        out[idx[:, k]] += f[k] * y
    return np.moveaxis(out, 0, axis)


def _dwt2_analyze(img: np.ndarray, h: np.ndarray, g: np.ndarray, levels: int):
    """Decimated separable 2D analysis; returns per-level details + approx.

    Output order: [LH1, HL1, HH1, LH2, ..., HHJ, A_J] where the first
    letter filters rows (axis 0) and the second filters columns.
    """
    bands = []
    a = img
    for _ in range(levels):
        lo0 = _down_convolve(a, h, 0)
        hi0 = _down_convolve(a, g, 0)
        ll = _down_convolve(lo0, h, 1)
        lh = _down_convolve(lo0, g, 1)
        hl = _down_convolve(hi0, h, 1)
        hh = _down_convolve(hi0, g, 1)
        bands.extend([lh, hl, hh])
        a = ll
    bands.append(a)
    return bands


def _dwt2_synthesize_band(coeff: np.ndarray, h: np.ndarray, g: np.ndarray,
                          level: int, kind: str, shape: tuple[int, int]) -> np.ndarray:
    """Adjoint of extracting one sub-band from the analysis cascade."""
    n1 = shape[0] >> (level - 1)
    n2 = shape[1] >> (level - 1)
    f0, f1 = {
        "lh": (h, g),
        "hl": (g, h),
        "hh": (g, g),
        "a": (h, h),
    }[kind]
    x = _up_correlate(coeff, f1, n2, 1)
    x = _up_correlate(x, f0, n1, 0)
    for lev in range(level - 1, 0, -1):
        m1 = shape[0] >> (lev - 1)
        m2 = shape[1] >> (lev - 1)
        x = _up_correlate(x, h, m2, 1)
        x = _up_correlate(x, h, m1, 0)
    return x


class OwtBandOp(LinOp):
    """One sub-band of an orthonormal decimated 2D wavelet transform."""

    def __init__(self, shape: tuple[int, int], h: np.ndarray, level: int, kind: str):
        n1, n2 = shape
        r1 = n1 >> level
        r2 = n2 >> level
        super().__init__(r1 * r2, n1 * n2, "real")
        self.shape = shape
        self.level = level
        self.kind = kind
        self._h = h
        self._g = highpass_from_lowpass(h)

    def forward(self, x):
        a = np.asarray(x).reshape(self.shape)
        for _ in range(self.level - 1):
            a = _down_convolve(_down_convolve(a, self._h, 0), self._h, 1)
        f0, f1 = {
            "lh": (self._h, self._g),
            "hl": (self._g, self._h),
            "hh": (self._g, self._g),
            "a": (self._h, self._h),
        }[self.kind]
        return _down_convolve(_down_convolve(a, f0, 0), f1, 1).ravel()

    def adjoint(self, z):
        r = self.shape[0] >> self.level
        c = self.shape[1] >> self.level
        coeff = np.asarray(z).reshape(r, c)
        return _dwt2_synthesize_band(
            coeff, self._h, self._g, self.level, self.kind, self.shape
        ).ravel()


def make_owt(filter_name: str, levels: int, n1: int, n2: int) -> CompositeDictionary:
    """Orthonormal separable 2D wavelet analysis with periodic boundary.

    One band per detail sub-band per level plus the final approximation
    band; the stacked operator satisfies ``Psi^T Psi = I``.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if n1 % (1 << levels) or n2 % (1 << levels):
        raise ValueError(
            f"image sides ({n1}, {n2}) must be divisible by 2^levels = {1 << levels}"
        )
    h = daubechies_lowpass(filter_name)
    bands: list[LinOp] = []
    for lev in range(1, levels + 1):
        for kind in ("lh", "hl", "hh"):
            bands.append(OwtBandOp((n1, n2), h, lev, kind))
    bands.append(OwtBandOp((n1, n2), h, levels, "a"))
    return CompositeDictionary(bands, frame_constant=1.0)


# ---------------------------------------------------------------------------
# Undecimated (a-trous) 2D wavelet transform (periodic boundary)
# ---------------------------------------------------------------------------


class UwtBandOp(LinOp):
    """One sub-band of an undecimated 2D transform as circular convolution."""

    def __init__(self, shape: tuple[int, int], transfer: np.ndarray):
        n1, n2 = shape
        super().__init__(n1 * n2, n1 * n2, "real")
        self.shape = shape
        self._transfer = transfer

    def _apply(self, x, transfer):
        img = np.asarray(x).reshape(self.shape)
        out = np.fft.ifft2(np.fft.fft2(img) * transfer)
        if not np.iscomplexobj(img):
            out = out.real
        return out.ravel()

    def forward(self, x):
        return self._apply(x, self._transfer)

    def adjoint(self, z):
        return self._apply(z, np.conj(self._transfer))


def _filter_transfer(f: np.ndarray, n: int, dilation: int) -> np.ndarray:
    """Frequency response of the a-trous filter ``f`` upsampled by ``dilation``."""
    k = np.arange(len(f))[:, None] * dilation
    w = np.arange(n)[None, :]
    return (f[:, None] * np.exp(-2j * np.pi * k * w / n)).sum(axis=0)


def make_uwt(filter_name: str, levels: int, n1: int, n2: int) -> CompositeDictionary:
    """Undecimated (a-trous) 2D wavelet analysis, periodic boundary.

    Per-level filters carry a 1/sqrt(2) normalization per axis, which makes
    the stacked operator a tight frame with constant ``c = 1`` at every
    level count: ``Psi^T Psi = I``.  Each sub-band has ``n1*n2`` rows; one
    level yields 4 bands (3 details + approximation), J levels ``3J + 1``.
    """
    if filter_name not in ("db1", "db2"):
        raise ValueError(f"unsupported UWT filter {filter_name!r} (expected db1/db2)")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if n1 % (1 << levels) or n2 % (1 << levels):
        raise ValueError(
            f"image sides ({n1}, {n2}) must be divisible by 2^levels = {1 << levels}"
        )
    h = daubechies_lowpass(filter_name) / _SQRT2
    g = highpass_from_lowpass(daubechies_lowpass(filter_name)) / _SQRT2

    bands: list[LinOp] = []
    approx1 = np.ones(n1, dtype=np.complex128)
    approx2 = np.ones(n2, dtype=np.complex128)
    for lev in range(1, levels + 1):
        dil = 1 << (lev - 1)
        h1 = _filter_transfer(h, n1, dil)
        g1 = _filter_transfer(g, n1, dil)
        h2 = _filter_transfer(h, n2, dil)
        g2 = _filter_transfer(g, n2, dil)
        for t1, t2 in ((h1, g2), (g1, h2), (g1, g2)):
            bands.append(UwtBandOp((n1, n2), np.outer(approx1 * t1, approx2 * t2)))
        approx1 = approx1 * h1
        approx2 = approx2 * h2
    bands.append(UwtBandOp((n1, n2), np.outer(approx1, approx2)))
    return CompositeDictionary(bands, frame_constant=1.0)
