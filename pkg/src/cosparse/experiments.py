"""Signal generators, noise injection, metrics, and trial runners.

The trial runner realizes one (signal, operator, noise) triple per derived
seed and runs every requested algorithm on the identical realization, so
algorithm comparisons are seed-paired and the output tables are independent
of execution order.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .dictionaries import (
    CompositeDictionary,
    concat_dictionaries,
    make_finite_difference_dictionary,
    make_owt,
    make_uwt,
)
from .inner import InnerConfig
from .linops import make_partial_fourier_video, make_spread_spectrum, split_real
from .reweighting import EpsSearch, OuterConfig, RecoveryResult, run_recovery
from .seeds import child_seed, rng_from

__all__ = [
    "gen_finite_diff_2d",
    "gen_shepp_logan",
    "load_image_pgm",
    "write_pgm",
    "gen_dmri_profile",
    "add_awgn",
    "recovery_snr_db",
    "ExperimentSpec",
    "TrialRecord",
    "TrialTable",
    "run_trials",
    "results_to_csv",
    "medians_to_csv",
]


# ---------------------------------------------------------------------------
# Signal generators
# ---------------------------------------------------------------------------


def _piecewise_constant(n: int, transitions: int, rng: np.random.Generator) -> np.ndarray:
    """Length-n signal with the given number of unit-variance Gaussian jumps
    at distinct uniformly random interior locations."""
    positions = rng.choice(n - 1, size=transitions, replace=False) + 1
    jumps = rng.standard_normal(transitions)
    x = np.zeros(n)
    for p, j in zip(positions, jumps):
        x[p:] += j
    return x


def split_transition_counts(alpha: float, total: int) -> tuple[int, int]:
    """Split ``total`` transitions in ratio ``alpha`` (round half up)."""
    k1 = int(math.floor(total * alpha / (alpha + 1.0) + 0.5))
    k1 = min(max(k1, 1), total - 1)
    return k1, total - k1


def gen_finite_diff_2d(alpha: float, total_transitions: int, n: int, seed: int) -> np.ndarray:
    """Rank-style 2D signal ``x1 1^T + 1 x2^T`` with piecewise-constant
    factors; the vertical/horizontal transition counts split ``total`` in
    ratio ``alpha``.  Returns the vectorized n x n image."""
    k1, k2 = split_transition_counts(alpha, total_transitions)
    if k1 >= n or k2 >= n:
        raise ValueError(f"transition counts ({k1}, {k2}) must be < n = {n}")
    rng = rng_from(seed)
    x1 = _piecewise_constant(n, k1, rng)
    x2 = _piecewise_constant(n, k2, rng)
    img = np.outer(x1, np.ones(n)) + np.outer(np.ones(n), x2)
    return img.ravel()


# Standard head-phantom ellipse table (value, a, b, x0, y0, phi_deg); the
# low-contrast variant with peak intensity 1.0.
_PHANTOM_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)


def gen_shepp_logan(n1: int, n2: int, complex_valued: bool = False) -> np.ndarray:
    """Analytic 10-ellipse head phantom rasterized at pixel centers.

    With ``complex_valued`` the imaginary part is set equal to the real
    part.  Returns an (n1, n2) array.
    """
    if n1 < 16 or n2 < 16:
        raise ValueError("phantom needs sides >= 16")
    ys = 1.0 - (2.0 * np.arange(n1) + 1.0) / n1
    xs = (2.0 * np.arange(n2) + 1.0) / n2 - 1.0
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    img = np.zeros((n1, n2))
    for value, a, b, x0, y0, phi_deg in _PHANTOM_ELLIPSES:
        phi = math.radians(phi_deg)
        c, s = math.cos(phi), math.sin(phi)
        xr = (xx - x0) * c + (yy - y0) * s
        yr = -(xx - x0) * s + (yy - y0) * c
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += value
    # the exact phantom is nonnegative; remove summation roundoff
    img = np.maximum(img, 0.0)
    if complex_valued:
        return img + 1j * img
    return img


def load_image_pgm(path, crop: tuple[int, int] | None = None) -> np.ndarray:
    """Read an 8- or 16-bit PGM (P2 or P5), scaled to [0, 1].

    ``crop`` center-crops to the requested (rows, cols).
    """
    with open(path, "rb") as fh:
        data = fh.read()

    tokens = []
    pos = 0
    while len(tokens) < 4:
        # header tokens with '#' comments skipped
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise ValueError(f"{path}: not a PGM file (magic {magic!r})")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if not 0 < maxval < 65536:
        raise ValueError(f"{path}: unsupported maxval {maxval}")

    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.uint8
        count = width * height
        raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
        if raw.size != count:
            raise ValueError(f"{path}: truncated pixel data")
        img = raw.reshape(height, width).astype(np.float64)
    else:
        values = data[pos:].split()
        if len(values) < width * height:
            raise ValueError(f"{path}: truncated pixel data")
        img = np.array(values[: width * height], dtype=np.float64).reshape(height, width)
    img /= maxval

    if crop is not None:
        r, c = crop
        if r > height or c > width:
            raise ValueError(f"crop {crop} exceeds image size {(height, width)}")
        r0 = (height - r) // 2
        c0 = (width - c) // 2
        img = img[r0 : r0 + r, c0 : c0 + c]
    return img


def write_pgm(path, img: np.ndarray, normalize: bool = False) -> None:
    """Write a binary 8-bit PGM.  Complex input is dumped as magnitude.

    Without ``normalize`` values are assumed in [0, 1] and scaled by 255
    exactly (so a read/write round trip is the identity); with it the value
    range is stretched to [0, 255].
    """
    arr = np.abs(img) if np.iscomplexobj(img) else np.asarray(img, dtype=np.float64)
    if normalize:
        lo, hi = float(arr.min()), float(arr.max())
        arr = (arr - lo) / (hi - lo) if hi > lo else np.zeros_like(arr)
    pix = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{pix.shape[1]} {pix.shape[0]}\n255\n".encode())
        fh.write(pix.tobytes())


def gen_dmri_profile(n1: int, t_count: int, seed: int) -> np.ndarray:
    """Synthetic spatio-temporal profile: a smooth static background plus a
    few bright bands whose edges oscillate periodically in time.

    Temporal structure is deliberately stronger (smoother) than spatial, so
    the temporal total variation is below the spatial one.  Returns an
    (n1, t_count) array with space along axis 0 and time along axis 1.
    """
    if n1 < 32 or t_count < 8:
        raise ValueError("profile needs n1 >= 32 and t_count >= 8")
    rng = rng_from(seed)
    s = np.arange(n1, dtype=np.float64)
    t = np.arange(t_count, dtype=np.float64)

    background = np.full(n1, 0.15)
    for _ in range(2):
        center = rng.uniform(0.2, 0.8) * n1
        width = rng.uniform(0.15, 0.3) * n1
        background += rng.uniform(0.05, 0.15) * np.exp(-((s - center) ** 2) / (2 * width**2))

    profile = np.tile(background[:, None], (1, t_count))
    softness = 1.2
    for _ in range(int(rng.integers(2, 4))):
        center = rng.uniform(0.25, 0.75) * n1
        base_hw = rng.uniform(0.04, 0.10) * n1
        osc_amp = rng.uniform(0.02, 0.05) * n1
        cycles = int(rng.integers(1, 3))
        phase = rng.uniform(0.0, 2.0 * np.pi)
        value = rng.uniform(0.4, 0.8)
        halfwidth = base_hw + osc_amp * np.sin(2.0 * np.pi * cycles * t / t_count + phase)
        dist = np.abs(s[:, None] - center)
        profile += value / (1.0 + np.exp(-(halfwidth[None, :] - dist) / softness))
    return profile


# ---------------------------------------------------------------------------
# Noise and metrics
# ---------------------------------------------------------------------------


def add_awgn(y_clean: np.ndarray, target_snr_db: float, seed: int, field_name: str):
    """Add white Gaussian noise hitting the target measurement SNR.

    The SNR definition is ``||y||^2 / (M sigma^2)`` with the noisy ``y``;
    the variance is chosen so that the definition equals the target in
    expectation.  Complex noise is circular (independent real/imaginary
    halves of variance ``sigma^2 / 2``).  Returns ``(y, sigma^2)``.
    """
    y_clean = np.asarray(y_clean)
    energy = float(np.vdot(y_clean, y_clean).real)
    if energy == 0.0:
        raise ValueError("cannot scale noise to an all-zero measurement vector")
    if math.isinf(target_snr_db):
        return y_clean.copy(), 0.0
    snr_lin = 10.0 ** (target_snr_db / 10.0)
    if snr_lin <= 1.0:
        raise ValueError("target SNR must exceed 0 dB under the noisy-signal definition")
    m = y_clean.shape[0]
    sigma2 = energy / (m * (snr_lin - 1.0))
    rng = rng_from(seed)
    if field_name == "complex":
        w = math.sqrt(sigma2 / 2.0) * (rng.standard_normal(m) + 1j * rng.standard_normal(m))
    else:
        w = math.sqrt(sigma2) * rng.standard_normal(m)
    return y_clean + w, sigma2


def measurement_snr_db(y: np.ndarray, sigma2: float) -> float:
    if sigma2 == 0.0:
        return math.inf
    energy = float(np.vdot(y, y).real)
    return 10.0 * math.log10(energy / (len(y) * sigma2))


def recovery_snr_db(x_true: np.ndarray, x_hat: np.ndarray) -> float:
    """``10 log10(||x||^2 / ||x - x_hat||^2)``; +inf for exact recovery."""
    x_true = np.asarray(x_true)
    num = float(np.vdot(x_true, x_true).real)
    if num == 0.0:
        raise ValueError("reference signal is zero")
    err = np.asarray(x_hat) - x_true
    den = float(np.vdot(err, err).real)
    if den == 0.0:
        return math.inf
    return 10.0 * math.log10(num / den)


# ---------------------------------------------------------------------------
# Trial specification and runner
# ---------------------------------------------------------------------------


@dataclass
class ExperimentSpec:
    """Declarative description of one trial family.

    ``sweep_param`` names a generator or sampling parameter that takes each
    value in ``sweep_values``; ``outer`` carries overrides for
    :class:`~cosparse.reweighting.OuterConfig` fields and ``inner`` for the
    inner solver.
    """

    name: str
    generator: str
    gen_params: dict
    operator: str
    sampling_ratio: float
    measurement_snr_db: float
    algorithms: tuple
    trials: int
    base_seed: int
    dictionary: str
    dict_params: dict = field(default_factory=dict)
    density_sigma: float = 0.15
    sweep_param: str | None = None
    sweep_values: tuple | None = None
    outer: dict = field(default_factory=dict)
    inner: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0.0 < self.sampling_ratio <= 1.0:
            raise ValueError("sampling ratio must be in (0, 1]")
        self.algorithms = tuple(self.algorithms)
        if self.sweep_values is not None:
            self.sweep_values = tuple(self.sweep_values)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentSpec":
        obj = dict(obj)
        if obj.get("sweep_values") is not None:
            obj["sweep_values"] = tuple(obj["sweep_values"])
        obj["algorithms"] = tuple(obj["algorithms"])
        return cls(**obj)


@dataclass
class TrialRecord:
    experiment: str
    algorithm: str
    sweep_value: object
    trial_index: int
    seed: int
    recovery_snr_db: float
    measurement_snr_db: float
    outer_iterations: int
    wall_time_s: float
    failed: bool = False


@dataclass
class TrialTable:
    records: list
    medians: dict  # (algorithm, sweep_value) -> {"median_snr_db", "median_wall_time_s", "trial_count"}


def _generate_signal(spec: ExperimentSpec, sweep_value, seed: int):
    """Returns (x_true vector, image shape, complex flag)."""
    params = dict(spec.gen_params)
    if spec.sweep_param and spec.sweep_param not in ("sampling_ratio", "dictionary"):
        params[spec.sweep_param] = sweep_value
    gen = spec.generator
    if gen == "finite_diff_2d":
        n = int(params["n"])
        x = gen_finite_diff_2d(params["alpha"], int(params["total_transitions"]), n, seed)
        return x, (n, n), False
    if gen == "shepp_logan":
        img = gen_shepp_logan(int(params["n1"]), int(params["n2"]), bool(params.get("complex", False)))
        return img.ravel(), img.shape, bool(params.get("complex", False))
    if gen == "image_file":
        img = load_image_pgm(params["path"], crop=tuple(params["crop"]) if params.get("crop") else None)
        return img.ravel(), img.shape, False
    if gen == "dmri_profile":
        img = gen_dmri_profile(int(params["n1"]), int(params["t_count"]), seed=int(params.get("seed", 0)))
        return img.ravel(), img.shape, False
    if gen == "dmri_file":
        img = _load_dmri_file(params["path"])
        return img.ravel(), img.shape, False
    raise ValueError(f"unknown generator {gen!r}")


def _load_dmri_file(path: str) -> np.ndarray:
    if str(path).endswith(".pgm"):
        return load_image_pgm(path)
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    raw = np.fromfile(path, dtype=np.float32)
    return raw.reshape(int(meta["n1"]), int(meta["t_count"])).astype(np.float64)


def parse_dictionary_spec(text: str) -> dict:
    """Parse a compact dictionary spec: ``kind:filter+filter:levels``,
    e.g. ``uwt:db1+db2:1`` or ``fd`` for finite differences."""
    parts = text.split(":")
    if parts[0] in ("fd", "finite_difference"):
        return {"kind": "finite_difference"}
    if parts[0] not in ("owt", "uwt"):
        raise ValueError(f"unknown dictionary kind {parts[0]!r}")
    filters = parts[1].split("+") if len(parts) > 1 and parts[1] else ["db1"]
    levels = int(parts[2]) if len(parts) > 2 else 1
    return {"kind": parts[0], "filters": filters, "levels": levels}


def _build_dictionary(spec: ExperimentSpec, sweep_value, shape, complex_signal: bool) -> CompositeDictionary:
    kind = spec.dictionary
    params = dict(spec.dict_params)
    if spec.sweep_param == "dictionary":
        params = parse_dictionary_spec(sweep_value)
        kind = params.pop("kind")
    n1, n2 = shape
    if kind == "finite_difference":
        dic = make_finite_difference_dictionary(n1, n2)
    elif kind in ("owt", "uwt"):
        maker = make_owt if kind == "owt" else make_uwt
        levels = int(params.get("levels", 1))
        filters = params.get("filters", ["db1"])
        dic = concat_dictionaries([maker(f, levels, n1, n2) for f in filters])
    else:
        raise ValueError(f"unknown dictionary {kind!r}")
    if complex_signal:
        dic = dic.with_signal_field("complex")
    return dic


def _build_measurements(spec: ExperimentSpec, sweep_value, x, shape, complex_signal, trial_seed):
    """Realize operator and noisy measurements; split to real form when the
    signal is real.  Returns (phi, y, sigma2, realized_snr_db)."""
    ratio = sweep_value if spec.sweep_param == "sampling_ratio" else spec.sampling_ratio
    op_seed = child_seed(trial_seed, 0)
    noise_seed = child_seed(trial_seed, 2)
    n = x.size
    if spec.operator == "spread_spectrum":
        m = max(1, int(round(ratio * n)))
        phi_c, _ = make_spread_spectrum(n, m, op_seed)
    elif spec.operator == "partial_fourier_video":
        n1, t_count = shape
        m1 = max(1, int(round(0.5 * ratio * n1)))
        phi_c, _ = make_partial_fourier_video(
            n1, t_count, m1, density_sigma=spec.density_sigma, seed=op_seed
        )
    else:
        raise ValueError(f"unknown operator {spec.operator!r}")

    y_clean = phi_c.forward(x)
    y, sigma2 = add_awgn(y_clean, spec.measurement_snr_db, noise_seed, "complex")
    realized = measurement_snr_db(y, sigma2)
    if complex_signal:
        return phi_c, y, sigma2, realized
    phi, y_split = split_real(phi_c, y)
    return phi, y_split, sigma2, realized


def _outer_config(spec: ExperimentSpec, algorithm: str, dictionary: CompositeDictionary,
                  gamma: float) -> OuterConfig:
    outer = dict(spec.outer)
    inner = InnerConfig(**spec.inner) if spec.inner else InnerConfig()
    algo = "irw_l1" if algorithm == "l1" else algorithm
    max_outer = int(outer.pop("max_outer", 16))
    if algorithm == "l1":
        max_outer = 1
    eps_d = outer.pop("eps_d", None)
    if algo == "co_irw_l1_eps" and eps_d is not None and np.isscalar(eps_d):
        eps_d = np.full(dictionary.n_bands, float(eps_d))
    search = outer.pop("eps_search", None)
    if isinstance(search, dict):
        search = EpsSearch(**search)
    kwargs = {} if search is None else {"eps_search": search}
    return OuterConfig(
        algorithm=algo,
        gamma=gamma,
        max_outer=max_outer,
        eps_d=eps_d,
        inner=inner,
        **kwargs,
        **outer,
    )


def run_single_trial(spec: ExperimentSpec, sweep_value, trial_index: int):
    """One (signal, operator, noise) realization, all algorithms on it."""
    sweep_idx = 0 if spec.sweep_values is None else list(spec.sweep_values).index(sweep_value)
    trial_seed = child_seed(spec.base_seed, sweep_idx, trial_index)
    x, shape, complex_signal = _generate_signal(spec, sweep_value, child_seed(trial_seed, 1))
    dictionary = _build_dictionary(spec, sweep_value, shape, complex_signal)
    phi, y, sigma2, realized = _build_measurements(
        spec, sweep_value, x, shape, complex_signal, trial_seed
    )
    if sigma2 == 0.0:
        raise ValueError("noiseless trials need an explicit gamma; set a finite SNR")
    gamma = 1.0 / sigma2

    records = []
    results = {}
    for algorithm in spec.algorithms:
        cfg = _outer_config(spec, algorithm, dictionary, gamma)
        t0 = time.perf_counter()
        try:
            result: RecoveryResult = run_recovery(y, phi, dictionary, cfg)
            elapsed = time.perf_counter() - t0
            snr = recovery_snr_db(x, result.x_hat)
            records.append(
                TrialRecord(
                    experiment=spec.name,
                    algorithm=algorithm,
                    sweep_value=sweep_value,
                    trial_index=trial_index,
                    seed=trial_seed,
                    recovery_snr_db=snr,
                    measurement_snr_db=realized,
                    outer_iterations=len(result.trace),
                    wall_time_s=elapsed,
                )
            )
            results[algorithm] = result
        except (ValueError, FloatingPointError) as exc:
            elapsed = time.perf_counter() - t0
            records.append(
                TrialRecord(
                    experiment=spec.name,
                    algorithm=algorithm,
                    sweep_value=sweep_value,
                    trial_index=trial_index,
                    seed=trial_seed,
                    recovery_snr_db=math.nan,
                    measurement_snr_db=realized,
                    outer_iterations=0,
                    wall_time_s=elapsed,
                    failed=True,
                )
            )
            results[algorithm] = exc
    return records, results, x, shape


def run_trials(spec: ExperimentSpec, threads: int = 1, dump_dir=None) -> TrialTable:
    """Run ``trials`` realizations per sweep value with derived seeds.

    Seeds are paired across algorithms; failed trials are recorded and
    excluded from medians, never silently dropped.  With ``dump_dir`` each
    reconstruction is written as a (magnitude) PGM named
    ``{experiment}_{algorithm}_{sweep}_{seed}.pgm``.
    """
    sweep_values = spec.sweep_values if spec.sweep_values is not None else (None,)
    units = [(sv, t) for sv in sweep_values for t in range(spec.trials)]

    def work(unit):
        sv, t = unit
        recs, results, _, shape = run_single_trial(spec, sv, t)
        if dump_dir is not None:
            import os

            for rec in recs:
                if rec.failed:
                    continue
                name = f"{spec.name}_{rec.algorithm}_{rec.sweep_value}_{rec.seed}.pgm"
                img = np.asarray(results[rec.algorithm].x_hat).reshape(shape)
                write_pgm(os.path.join(dump_dir, name), img, normalize=True)
        return recs

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(work, units))
    else:
        chunks = [work(u) for u in units]

    records = [rec for chunk in chunks for rec in chunk]
    order = {a: i for i, a in enumerate(spec.algorithms)}
    sv_order = {sv: i for i, sv in enumerate(sweep_values)}
    records.sort(key=lambda r: (sv_order[r.sweep_value], r.trial_index, order[r.algorithm]))

    medians = {}
    for algorithm in spec.algorithms:
        for sv in sweep_values:
            good = [
                r for r in records
                if r.algorithm == algorithm and r.sweep_value == sv and not r.failed
            ]
            if good:
                medians[(algorithm, sv)] = {
                    "median_snr_db": float(np.median([r.recovery_snr_db for r in good])),
                    "median_wall_time_s": float(np.median([r.wall_time_s for r in good])),
                    "trial_count": len(good),
                }
    return TrialTable(records=records, medians=medians)


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def results_to_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["experiment", "algorithm", "sweep_param", "trial_seed",
             "recovery_snr_db", "outer_iters", "wall_time_s"]
        )
        for r in records:
            writer.writerow(
                [r.experiment, r.algorithm, r.sweep_value, r.seed,
                 repr(r.recovery_snr_db), r.outer_iterations, repr(r.wall_time_s)]
            )


def medians_to_csv(table: TrialTable, experiment: str, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["experiment", "algorithm", "sweep_param", "median_snr_db", "trial_count"])
        for (algorithm, sv), stats in table.medians.items():
            writer.writerow(
                [experiment, algorithm, sv, repr(stats["median_snr_db"]), stats["trial_count"]]
            )
