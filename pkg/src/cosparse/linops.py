"""Matrix-free linear operators for compressive measurement models.

Every operator exposes ``forward``/``adjoint`` with explicit row/column
counts and a scalar field tag.  Operators are immutable after construction
and safe to share across concurrent solvers; ``apply`` methods never mutate
internal state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .seeds import rng_from

__all__ = [
    "LinOp",
    "MatrixOp",
    "IdentityOp",
    "SamplingPattern",
    "dft",
    "make_spread_spectrum",
    "split_real",
    "make_finite_difference",
    "make_partial_fourier_video",
]


class LinOp:
    """A linear map ``C^cols -> C^rows`` (or real) with an explicit adjoint.

    Subclasses implement ``forward`` and ``adjoint``; ``field`` is
    ``"real"`` or ``"complex"`` and names the scalar field of the range.
    Real-field operators map real vectors to real vectors.
    """

    rows: int
    cols: int
    field: str

    def __init__(self, rows: int, cols: int, field: str):
        if field not in ("real", "complex"):
            raise ValueError(f"field must be 'real' or 'complex', got {field!r}")
        self.rows = int(rows)
        self.cols = int(cols)
        self.field = field

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def normal(self, x: np.ndarray) -> np.ndarray:
        """Apply the normal operator ``A^H A``.  Subclasses may fuse this."""
        return self.adjoint(self.forward(x))

    def gram_diagonal(self) -> np.ndarray | None:
        """Diagonal of ``A A^H`` when that matrix is diagonal, else None.

        Solvers use this for closed-form quadratic updates; returning None
        just disables the fast path.
        """
        return None

    def transpose_gram_diagonal(self) -> np.ndarray | None:
        """Diagonal of ``A A^T`` (no conjugate) when diagonal, else None."""
        return None

    def to_dense(self) -> np.ndarray:
        """Materialize the matrix column by column (small operators only)."""
        dtype = np.complex128 if self.field == "complex" else np.float64
        out = np.empty((self.rows, self.cols), dtype=dtype)
        e = np.zeros(self.cols)
        for j in range(self.cols):
            e[j] = 1.0
            out[:, j] = self.forward(e)
            e[j] = 0.0
        return out


class MatrixOp(LinOp):
    """Dense-matrix operator, mostly for tests and small oracles."""

    def __init__(self, a: np.ndarray):
        a = np.asarray(a)
        field = "complex" if np.iscomplexobj(a) else "real"
        super().__init__(a.shape[0], a.shape[1], field)
        self._a = a

    def forward(self, x):
        return self._a @ x

    def adjoint(self, y):
        return self._a.conj().T @ y


class IdentityOp(LinOp):
    def __init__(self, n: int, field: str = "real"):
        super().__init__(n, n, field)

    def forward(self, x):
        return np.asarray(x).copy()

    def adjoint(self, y):
        return np.asarray(y).copy()

    def gram_diagonal(self):
        return np.ones(self.rows)


def dft(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Unitary discrete Fourier transform (scale ``1/sqrt(n)`` both ways).

    Arbitrary lengths are supported; length-1 input is returned unchanged.
    """
    x = np.asarray(x)
    if x.shape[-1] == 1:
        return x.astype(np.complex128)
    if inverse:
        return np.fft.ifft(x, norm="ortho")
    return np.fft.fft(x, norm="ortho")


def _conjugate_partner(k: np.ndarray | int, n: int):
    """Index of the DFT row conjugate to row ``k`` for real-valued input."""
    return (-k) % n


def _select_conjugate_free(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Pick ``m`` DFT rows uniformly with at most one row per conjugate pair.

    Frequencies are partitioned into self-conjugate bins (0 and, for even
    ``n``, ``n/2``) and two-element pairs; a random scan keeps an index only
    if its partner has not been kept yet.
    """
    admissible = n // 2 + 1 if n % 2 == 0 else (n - 1) // 2 + 1
    if m > admissible:
        raise ValueError(
            f"cannot select {m} rows of a {n}-point DFT with the conjugate-pair "
            f"rule; at most {admissible} are admissible"
        )
    taken = np.zeros(n, dtype=bool)
    kept = []
    for k in rng.permutation(n):
        if taken[k]:
            continue
        kept.append(k)
        taken[k] = True
        taken[_conjugate_partner(k, n)] = True
        if len(kept) == m:
            break
    return np.sort(np.asarray(kept, dtype=np.intp))


@dataclass(frozen=True)
class SamplingPattern:
    """Selected DFT row indices, one sorted array per time frame."""

    frames: tuple
    seed: int
    density_sigma: float | None = None

    @property
    def total_rows(self) -> int:
        return int(sum(len(f) for f in self.frames))

    def to_json(self) -> str:
        return json.dumps(
            {
                "frames": [np.asarray(f).tolist() for f in self.frames],
                "seed": self.seed,
                "density_sigma": self.density_sigma,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SamplingPattern":
        obj = json.loads(text)
        frames = tuple(np.asarray(f, dtype=np.intp) for f in obj["frames"])
        return cls(frames=frames, seed=obj["seed"], density_sigma=obj["density_sigma"])


class SpreadSpectrumOp(LinOp):
    """Row-subsampled unitary DFT of a random sign flip of the input."""

    def __init__(self, signs: np.ndarray, rows_kept: np.ndarray, conjugate_free: bool = False):
        n = signs.shape[0]
        super().__init__(len(rows_kept), n, "complex")
        self._signs = signs
        self._rows = rows_kept
        self._mask = np.zeros(n, dtype=bool)
        self._mask[rows_kept] = True
        self._conjugate_free = conjugate_free

    @property
    def signs(self) -> np.ndarray:
        return self._signs

    @property
    def rows_kept(self) -> np.ndarray:
        return self._rows

    def forward(self, x):
        return np.fft.fft(self._signs * x, norm="ortho")[self._rows]

    def adjoint(self, y):
        spec = np.zeros(self.cols, dtype=np.complex128)
        spec[self._rows] = y
        return self._signs * np.fft.ifft(spec, norm="ortho")

    def normal(self, x):
        spec = np.fft.fft(self._signs * x, norm="ortho")
        spec[~self._mask] = 0.0
        return self._signs * np.fft.ifft(spec, norm="ortho")

    def gram_diagonal(self):
        # rows of a unitary matrix: A A^H = I
        return np.ones(self.rows)

    def transpose_gram_diagonal(self):
        # with at most one row per conjugate pair, A A^T is diagonal with
        # ones exactly at the self-conjugate frequencies
        if not self._conjugate_free:
            return None
        n = self.cols
        return np.where(self._rows == _conjugate_partner(self._rows, n), 1.0, 0.0)


def make_spread_spectrum(
    n: int,
    m: int,
    seed: int,
    exclude_conjugate_pairs: bool = True,
) -> tuple[SpreadSpectrumOp, SamplingPattern]:
    """Random sign flip, unitary DFT, then uniform row selection.

    With ``exclude_conjugate_pairs`` (the default, appropriate for real
    signals) at most one row of each complex-conjugate frequency pair is
    kept.  Construction is a pure function of ``(n, m, seed)``.
    """
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = rng_from(seed)
    signs = np.where(rng.integers(0, 2, size=n) == 0, -1.0, 1.0)
    if exclude_conjugate_pairs:
        rows = _select_conjugate_free(n, m, rng)
    else:
        rows = np.sort(rng.choice(n, size=m, replace=False))
    pattern = SamplingPattern(frames=(rows,), seed=seed)
    return SpreadSpectrumOp(signs, rows, conjugate_free=exclude_conjugate_pairs), pattern


class RealSplitOp(LinOp):
    """Real view of a complex-range operator: stacked real and imaginary parts."""

    def __init__(self, inner: LinOp):
        if inner.field != "complex":
            raise ValueError("split_real expects an operator with complex output")
        super().__init__(2 * inner.rows, inner.cols, "real")
        self._inner = inner

    @property
    def inner(self) -> LinOp:
        return self._inner

    def forward(self, x):
        z = self._inner.forward(np.asarray(x, dtype=np.float64))
        return np.concatenate([z.real, z.imag])

    def adjoint(self, y):
        m = self._inner.rows
        z = np.asarray(y[:m]) + 1j * np.asarray(y[m:])
        return self._inner.adjoint(z).real

    def normal(self, x):
        return self._inner.normal(np.asarray(x, dtype=np.float64)).real

    def gram_diagonal(self):
        ag = self._inner.gram_diagonal()
        s = self._inner.transpose_gram_diagonal()
        if ag is None or s is None:
            return None
        # [Re; Im] stacking of B with diagonal B B^H and B B^T
        return np.concatenate([(ag + s) / 2.0, (ag - s) / 2.0])


def split_real(op: LinOp, y: np.ndarray | None = None):
    """Turn a complex-range operator (and measurement vector) into real form.

    Returns the ``2M x N`` stacked real/imaginary operator and, when ``y``
    is given, the correspondingly split measurement vector.  Euclidean norms
    and real inner products are preserved.
    """
    split_op = RealSplitOp(op)
    if y is None:
        return split_op
    y = np.asarray(y, dtype=np.complex128)
    if y.shape[0] != op.rows:
        raise ValueError(f"measurement length {y.shape[0]} != operator rows {op.rows}")
    return split_op, np.concatenate([y.real, y.imag])


class FiniteDifferenceOp(LinOp):
    """First-order difference along one axis of a vectorized n1 x n2 image.

    Non-circular boundary: ``(n1-1)*n2`` rows for the vertical axis,
    ``n1*(n2-1)`` for the horizontal axis.
    """

    def __init__(self, n1: int, n2: int, axis: str):
        if axis not in ("vertical", "horizontal"):
            raise ValueError(f"axis must be 'vertical' or 'horizontal', got {axis!r}")
        if axis == "vertical" and n1 < 2:
            raise ValueError("vertical differences need n1 >= 2")
        if axis == "horizontal" and n2 < 2:
            raise ValueError("horizontal differences need n2 >= 2")
        rows = (n1 - 1) * n2 if axis == "vertical" else n1 * (n2 - 1)
        super().__init__(rows, n1 * n2, "real")
        self.n1 = n1
        self.n2 = n2
        self.axis = axis

    def forward(self, x):
        img = np.asarray(x).reshape(self.n1, self.n2)
        if self.axis == "vertical":
            return (img[1:, :] - img[:-1, :]).ravel()
        return (img[:, 1:] - img[:, :-1]).ravel()

    def adjoint(self, y):
        out = np.zeros((self.n1, self.n2), dtype=np.asarray(y).dtype)
        if self.axis == "vertical":
            d = np.asarray(y).reshape(self.n1 - 1, self.n2)
            out[1:, :] += d
            out[:-1, :] -= d
        else:
            d = np.asarray(y).reshape(self.n1, self.n2 - 1)
            out[:, 1:] += d
            out[:, :-1] -= d
        return out.ravel()


def make_finite_difference(n1: int, n2: int, axis: str) -> FiniteDifferenceOp:
    """First-order finite-difference operator on a vectorized image."""
    return FiniteDifferenceOp(n1, n2, axis)


class PartialFourierVideoOp(LinOp):
    """Per-frame row-subsampled unitary DFT over the columns of an image.

    The input vector is the row-major flattening of an ``(n1, T)`` array
    whose columns are time frames; each frame is measured with its own DFT
    row subset, giving a block-diagonal operator with ``sum_t m_t`` rows.
    """

    def __init__(self, n1: int, pattern: SamplingPattern):
        frames = pattern.frames
        t_count = len(frames)
        m1 = len(frames[0])
        if any(len(f) != m1 for f in frames):
            raise ValueError("all frames must select the same number of rows")
        super().__init__(m1 * t_count, n1 * t_count, "complex")
        self.n1 = n1
        self.t_count = t_count
        self.pattern = pattern
        # (T, m1) gather index matrix
        self._idx = np.stack([np.asarray(f, dtype=np.intp) for f in frames])
        self._mask = np.zeros((t_count, n1), dtype=bool)
        np.put_along_axis(self._mask, self._idx, True, axis=1)

    def forward(self, x):
        img = np.asarray(x).reshape(self.n1, self.t_count)
        spec = np.fft.fft(img, axis=0, norm="ortho").T  # (T, n1)
        return np.take_along_axis(spec, self._idx, axis=1).ravel()

    def adjoint(self, y):
        vals = np.asarray(y, dtype=np.complex128).reshape(self.t_count, -1)
        spec = np.zeros((self.t_count, self.n1), dtype=np.complex128)
        np.put_along_axis(spec, self._idx, vals, axis=1)
        return np.fft.ifft(spec.T, axis=0, norm="ortho").ravel()

    def normal(self, x):
        img = np.asarray(x).reshape(self.n1, self.t_count)
        spec = np.fft.fft(img, axis=0, norm="ortho")
        spec[~self._mask.T] = 0.0
        return np.fft.ifft(spec, axis=0, norm="ortho").ravel()

    def gram_diagonal(self):
        return np.ones(self.rows)

    def transpose_gram_diagonal(self):
        idx = self._idx
        partners = _conjugate_partner(idx, self.n1)
        doubly = np.take_along_axis(self._mask, partners, axis=1) & (partners != idx)
        if np.any(doubly):
            return None
        return np.where(idx == partners, 1.0, 0.0).ravel()


def make_partial_fourier_video(
    n1: int,
    t_count: int,
    m1: int,
    density_sigma: float = 0.15,
    seed: int = 0,
    exclude_conjugate_pairs: bool = True,
) -> tuple[PartialFourierVideoOp, SamplingPattern]:
    """Variable-density partial-Fourier measurements with per-frame patterns.

    Per frame, ``m1`` frequency rows are drawn without replacement with
    probability proportional to ``exp(-f^2 / (2 (density_sigma * n1)^2))``
    (denser at low frequency); DC is always kept, the conjugate-pair rule is
    honored, and each frame uses an independent sub-stream of ``seed``.
    """
    if m1 < 1:
        raise ValueError("m1 must be >= 1")
    if exclude_conjugate_pairs:
        candidates = np.arange(n1 // 2 + 1 if n1 % 2 == 0 else (n1 + 1) // 2)
    else:
        candidates = np.arange(n1)
    if m1 > len(candidates):
        raise ValueError(
            f"m1={m1} exceeds the {len(candidates)} admissible rows per frame"
        )
    freq = np.minimum(candidates, n1 - candidates)  # signed-frequency magnitude
    weights = np.exp(-(freq.astype(np.float64) ** 2) / (2.0 * (density_sigma * n1) ** 2))

    frames = []
    for t in range(t_count):
        rng = rng_from(seed, t)
        keep = [0]  # DC always kept
        rest = candidates[1:]
        if m1 > 1:
            p = weights[1:] / weights[1:].sum()
            drawn = rng.choice(rest, size=m1 - 1, replace=False, p=p)
            keep.extend(int(k) for k in drawn)
        frames.append(np.sort(np.asarray(keep, dtype=np.intp)))
    pattern = SamplingPattern(frames=tuple(frames), seed=seed, density_sigma=density_sigma)
    return PartialFourierVideoOp(n1, pattern), pattern
