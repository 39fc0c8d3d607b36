"""Monte-Carlo coincidence ghost imaging under intercept-resend jamming.

A scene holds two binary objects: the true object seen by legitimate
photon pairs and the false object the intruder imposes on the fraction r
of pairs it intercepts.  Expected coincidence counts per pixel combine the
two with a uniform dark-count floor; sampled images draw independent
Poisson counts per pixel.  Recovery subtracts the images formed with two
legitimate states, which cancels the (state-independent) false term.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import poisson

from .errors import DegenerateRegionError, InvalidArgumentError
from .polarization import AnalyzerConfig, as_state, detection_probability

ILLUM_TOL = 1e-9

# Canonical scale: 34 x 34 pixels puts 1e4 dark counts at ~8.65 per pixel.
DEFAULT_SIZE = 34
DEFAULT_PHOTONS = 1e5
DEFAULT_DARK = 1e4


def _segment_distance(rows, cols, a, b):
    """Distance from each (row, col) to the segment a-b."""
    ar, ac = a
    br, bc = b
    dr, dc = br - ar, bc - ac
    t = ((rows - ar) * dr + (cols - ac) * dc) / (dr * dr + dc * dc)
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(rows - (ar + t * dr), cols - (ac + t * dc))


def default_masks(width: int = DEFAULT_SIZE, height: int = DEFAULT_SIZE):
    """Block-letter Lambda (true object) and T (false object).

    Glyph coordinates are laid out on a 34 x 34 design grid and scaled to
    the requested size.  The T's crossbar cuts both Lambda legs, which
    gives the overlap region; the T stem sits between the legs.
    """
    rows, cols = np.mgrid[0:height, 0:width].astype(float)
    rows = rows * (DEFAULT_SIZE / height)
    cols = cols * (DEFAULT_SIZE / width)
    apex = (5.0, 16.5)
    legs = [(28.0, 5.0), (28.0, 28.0)]
    lam = np.zeros((height, width), dtype=bool)
    for foot in legs:
        lam |= _segment_distance(rows, cols, apex, foot) <= 1.3
    bar = (rows >= 14) & (rows < 17) & (cols >= 7) & (cols < 27)
    stem = (rows >= 14) & (rows < 29) & (cols >= 15) & (cols < 19)
    return lam, bar | stem


@dataclass(frozen=True, eq=False)
class Scene:
    width: int
    height: int
    mask_true: np.ndarray
    mask_false: np.ndarray
    illumination: np.ndarray
    photons: float = DEFAULT_PHOTONS
    dark_total: float = DEFAULT_DARK

    def __post_init__(self):
        shape = (self.height, self.width)
        if self.width < 1 or self.height < 1:
            raise InvalidArgumentError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        arrays = {}
        for name in ("mask_true", "mask_false"):
            m = np.array(getattr(self, name), dtype=bool)
            if m.shape != shape:
                raise InvalidArgumentError(f"{name} has shape {m.shape}, grid is {shape}")
            arrays[name] = m
        illum = np.array(self.illumination, dtype=float)
        if illum.shape != shape:
            raise InvalidArgumentError(f"illumination has shape {illum.shape}, grid is {shape}")
        if np.any(illum < 0) or abs(illum.sum() - 1.0) > ILLUM_TOL:
            raise InvalidArgumentError("illumination must be non-negative and sum to 1")
        arrays["illumination"] = illum
        if not (self.photons >= 0 and np.isfinite(self.photons)):
            raise InvalidArgumentError(f"photon count must be >= 0, got {self.photons}")
        if not (self.dark_total >= 0 and np.isfinite(self.dark_total)):
            raise InvalidArgumentError(f"dark_total must be >= 0, got {self.dark_total}")
        for name, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def default(cls, width: int = DEFAULT_SIZE, height: int = DEFAULT_SIZE,
                photons: float = DEFAULT_PHOTONS, dark_total: float = DEFAULT_DARK) -> "Scene":
        lam, tee = default_masks(width, height)
        return cls(width, height, lam, tee, uniform_illumination(width, height), photons, dark_total)

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    # Regions used by the metrics.
    @property
    def lambda_only(self):
        return self.mask_true & ~self.mask_false

    @property
    def t_only(self):
        return self.mask_false & ~self.mask_true

    @property
    def overlap(self):
        return self.mask_true & self.mask_false

    @property
    def object_free(self):
        return ~(self.mask_true | self.mask_false)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.width}x{self.height};{self.photons!r};{self.dark_total!r}".encode())
        for arr in (self.mask_true, self.mask_false):
            h.update(np.packbits(arr).tobytes())
        h.update(np.ascontiguousarray(self.illumination, dtype="<f8").tobytes())
        return h.hexdigest()


def uniform_illumination(width: int, height: int) -> np.ndarray:
    return np.full((height, width), 1.0 / (width * height))


@dataclass(frozen=True)
class Intrusion:
    """The intruder's side of a jamming scenario.

    `brightness` scales the false-object term separately for the j=1 and
    j=2 exposures; (1, 1) is the time-independent intruder, anything else
    models an intruder whose intensity drifts between settings.
    """

    rho_e: object
    r: float
    brightness: tuple = (1.0, 1.0)

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise InvalidArgumentError(f"r must lie in [0, 1], got {self.r}")
        if len(self.brightness) != 2 or min(self.brightness) < 0:
            raise InvalidArgumentError("brightness must be two non-negative factors")


@dataclass(frozen=True, eq=False)
class CountImage:
    counts: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64)
        if np.any(c < 0):
            raise InvalidArgumentError("counts must be non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def shape(self):
        return self.counts.shape


@dataclass(frozen=True, eq=False)
class RecoveryResult:
    image: np.ndarray
    weight_used: float


@dataclass(frozen=True)
class ImageMetrics:
    mean_dark_per_pixel: float
    noise_level: float
    signal_mean: float
    snr: float
    residual_false_mean: float

    def as_dict(self):
        return {k: float(v) for k, v in self.__dict__.items()}


def _check_config(config) -> AnalyzerConfig:
    if not isinstance(config, AnalyzerConfig):
        config = AnalyzerConfig(tuple(config))
    if config.arity != 2:
        raise InvalidArgumentError(f"ghost imaging needs two analyzer angles, got {config.arity}")
    return config


def expected_counts(scene: Scene, legit_state, intrusion: Intrusion | None, config,
                    exposure: int = 0) -> np.ndarray:
    """Mean coincidence counts per pixel for one legitimate state.

    `exposure` picks the intruder brightness factor (0 for j=1, 1 for j=2).
    """
    config = _check_config(config)
    p_legit = detection_probability(as_state(legit_state), config)
    base = scene.photons * scene.illumination
    r = 0.0 if intrusion is None else intrusion.r
    out = base * ((1.0 - r) * p_legit) * scene.mask_true
    if intrusion is not None and r > 0:
        p_e = detection_probability(as_state(intrusion.rho_e), config)
        out = out + base * (r * p_e * intrusion.brightness[exposure]) * scene.mask_false
    return out + scene.dark_total / scene.n_pixels


# Counter-based per-pixel uniforms: a SplitMix64-style mix of the pixel
# index keyed by the seed.  Every pixel gets its own value independent of
# evaluation order, so chunking across threads cannot change the result.
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(x: np.ndarray) -> np.ndarray:
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def pixel_uniforms(seed: int, stream: int, indices: np.ndarray) -> np.ndarray:
    """Uniforms in (0, 1), one per pixel index, for the given (seed, stream)."""
    k0, k1 = np.random.SeedSequence(seed, spawn_key=(stream,)).generate_state(2, np.uint64)
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = _mix64((idx + np.uint64(1)) * _GOLDEN ^ k0)
        x = _mix64(x ^ k1)
    return ((x >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def _poisson_chunk(mean, seed, stream, lo, hi):
    u = pixel_uniforms(seed, stream, np.arange(lo, hi))
    m = mean[lo:hi]
    out = np.zeros(hi - lo, dtype=np.int64)
    live = m > 0
    out[live] = poisson.ppf(u[live], m[live]).astype(np.int64)
    return out


def sample_counts(expected: np.ndarray, seed: int, stream: int = 0, threads: int = 1,
                  meta: dict | None = None) -> CountImage:
    """Independent Poisson draw per pixel by inverse-CDF sampling.

    Pixel p uses a uniform derived from (seed, stream, p) only.
    """
    expected = np.asarray(expected, dtype=float)
    if not np.all(np.isfinite(expected)) or np.any(expected < 0):
        raise InvalidArgumentError("expected counts must be finite and non-negative")
    if seed < 0:
        raise InvalidArgumentError(f"seed must be non-negative, got {seed}")
    flat = expected.ravel()
    n = flat.size
    workers = max(1, int(threads))
    if workers == 1 or n < 4096:
        counts = _poisson_chunk(flat, seed, stream, 0, n)
    else:
        edges = np.linspace(0, n, workers + 1).astype(int)
        with ThreadPoolExecutor(workers) as pool:
            parts = pool.map(lambda ab: _poisson_chunk(flat, seed, stream, *ab), zip(edges[:-1], edges[1:]))
            counts = np.concatenate(list(parts))
    info = {"seed": int(seed), "stream": int(stream)}
    if meta:
        info.update(meta)
    return CountImage(counts.reshape(expected.shape), info)


def simulate_pair(scene: Scene, rho1, rho2, intrusion: Intrusion | None, config, seed: int,
                  threads: int = 1):
    """Jammed images for the two legitimate states, with independent noise."""
    digest = scene.digest()
    out = []
    for j, rho in enumerate((rho1, rho2)):
        mean = expected_counts(scene, rho, intrusion, config, exposure=j)
        out.append(sample_counts(mean, seed, stream=j + 1, threads=threads,
                                 meta={"scene": digest, "j": j + 1}))
    return tuple(out)


def simulate_clean(scene: Scene, rho, config, seed: int, threads: int = 1) -> CountImage:
    """Reference image with no intruder (its own noise stream)."""
    mean = expected_counts(scene, rho, None, config)
    return sample_counts(mean, seed, stream=0, threads=threads, meta={"scene": scene.digest(), "j": 0})


def _counts(img):
    return np.asarray(img.counts if isinstance(img, CountImage) else img, dtype=float)


def _same_shape(a, b):
    if a.shape != b.shape:
        raise InvalidArgumentError(f"image shapes differ: {a.shape} vs {b.shape}")


def recover(img1, img2, weight: float = 1.0) -> RecoveryResult:
    a, b = _counts(img1), _counts(img2)
    _same_shape(a, b)
    if not np.isfinite(weight) or weight < 0:
        raise InvalidArgumentError(f"weight must be finite and non-negative, got {weight}")
    return RecoveryResult(np.abs(a - weight * b), float(weight))


def _region(region, shape):
    mask = np.asarray(region, dtype=bool)
    if mask.shape != shape:
        raise InvalidArgumentError(f"region has shape {mask.shape}, image is {shape}")
    if not mask.any():
        raise DegenerateRegionError("region is empty")
    return mask


def _background(img, background):
    if background is None:
        return 0.0
    return float(img[_region(background, img.shape)].mean())


def estimate_weight(img1, img2, region, background=None) -> float:
    """Ratio of mean counts over a false-object-only region.

    With `background` (an object-free region), each image's mean background
    is removed first so the ratio reflects the false object alone.
    """
    a, b = _counts(img1), _counts(img2)
    _same_shape(a, b)
    mask = _region(region, a.shape)
    num = a[mask].mean() - _background(a, background)
    den = b[mask].mean() - _background(b, background)
    if den <= 0:
        raise DegenerateRegionError("second image has no counts above background in the region")
    return float(num / den)


def measure_region_visibility(img1, img2, region, background=None) -> float:
    """Visibility of the summed counts over a region.

    With `background`, the per-pixel mean of that region is subtracted from
    each image first (floored at zero).
    """
    a, b = _counts(img1), _counts(img2)
    _same_shape(a, b)
    mask = _region(region, a.shape)
    n = mask.sum()
    s1 = max(a[mask].sum() - n * _background(a, background), 0.0)
    s2 = max(b[mask].sum() - n * _background(b, background), 0.0)
    total = s1 + s2
    return 0.0 if total == 0 else abs(s1 - s2) / total


def compute_metrics(recovered, clean, scene: Scene) -> ImageMetrics:
    """Image-quality figures for a recovered image against a clean reference.

    mean_dark_per_pixel comes from the clean image's object-free pixels;
    everything else is read off the recovered image.
    """
    rec = recovered.image if isinstance(recovered, RecoveryResult) else _counts(recovered)
    ref = _counts(clean)
    _same_shape(rec, ref)
    if rec.shape != scene.shape:
        raise InvalidArgumentError(f"images are {rec.shape}, scene is {scene.shape}")
    return image_metrics(rec, scene, dark_source=ref)


def image_metrics(image, scene: Scene, dark_source=None) -> ImageMetrics:
    """Metrics of one image: noise on object-free pixels, signal on Lambda-only."""
    img = _counts(image)
    free = _region(scene.object_free, img.shape)
    lam = _region(scene.lambda_only, img.shape)
    tee = _region(scene.t_only, img.shape)
    dark = _counts(dark_source) if dark_source is not None else img
    noise = float(img[free].mean())
    signal = float(img[lam].mean())
    snr = signal / noise if noise > 0 else float("inf")
    return ImageMetrics(float(dark[free].mean()), noise, signal, snr, float(img[tee].mean()))
