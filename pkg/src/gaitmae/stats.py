"""Statistical comparison of gait trajectories.

Builds the normative mean +/- k*sigma band over time-normalized cycles,
scores trajectories against it with a wrap-aware RMSE, and runs the paired
protocol used to compare original vs. reconstructed kinematics: bootstrap
equivalence (TOST-style), Shapiro-Wilk normality, Wilcoxon signed-rank with
Holm family-wise correction, and rank-biserial effect sizes.

Angles are radians internally; every reported number is degrees. Negative
paired differences (reconstructed minus original) mean the reconstruction
sits closer to the band.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from .errors import DataError
from .rotations import wrap_angle

BAND_K = 2.0
DELTA_DEG = 1.5            # equivalence margin
BOOTSTRAP_ITERS = 20000
CI_LEVEL = 0.90
EXACT_WILCOXON_MAX_N = 25

# The four angle channels the protocol reports on, as (label, joint, axis).
ANALYZED_ANGLES = (
    ("pelvis_flex_ext", "pelvis", 1),
    ("r_hip_abd_add", "r_hip", 0),
    ("r_hip_flex_ext", "r_hip", 1),
    ("r_knee_flex_ext", "r_knee", 1),
)
ANGLE_LABELS = tuple(a[0] for a in ANALYZED_ANGLES)


def select_analyzed(angle_seq: np.ndarray) -> np.ndarray:
    """Pick the four analyzed channels from (..., 12, 3) angle arrays."""
    from .skeleton import JID

    cols = [(JID[j], ax) for _, j, ax in ANALYZED_ANGLES]
    out = np.stack([angle_seq[..., j, ax] for j, ax in cols], axis=-1)
    return out


# =============================================================================
# Normative band
# =============================================================================


def align_to_reference(cycles: np.ndarray) -> np.ndarray:
    """Map each cycle onto the branch of the first one.

    cycles: (n, T, ...) wrapped radians. The first cycle is unwrapped along
    time; every cycle is then shifted by whole turns so it sits within pi of
    that reference at every frame. Gait curves never straddle more than half
    a turn inside one cycle, so this preserves plain arithmetic averaging.
    """
    cycles = np.asarray(cycles, dtype=float)
    ref = np.unwrap(cycles[0], axis=0)
    return ref + wrap_angle(cycles - ref)


def mean_cycle(cycles: np.ndarray) -> np.ndarray:
    """Arithmetic mean trajectory of wrapped cycles (n, T, ...) -> (T, ...)."""
    if cycles.ndim < 2 or cycles.shape[0] < 1:
        raise DataError("mean_cycle needs at least one cycle")
    return wrap_angle(align_to_reference(cycles).mean(axis=0))


@dataclass
class NormativeBand:
    """Per-frame mean and spread of normative cycles, band = mu +/- k*sigma."""

    mu: np.ndarray               # (T, C) radians, wrapped
    sigma: np.ndarray            # (T, C) radians, >= 0
    k: float = BAND_K
    labels: tuple = ANGLE_LABELS

    def __post_init__(self):
        self.mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if self.mu.shape != self.sigma.shape:
            raise DataError(f"band mu/sigma shapes differ: {self.mu.shape} vs {self.sigma.shape}")
        if np.any(self.sigma < 0.0):
            raise DataError("band sigma must be nonnegative")

    @property
    def lower(self) -> np.ndarray:
        return self.mu - self.k * self.sigma

    @property
    def upper(self) -> np.ndarray:
        return self.mu + self.k * self.sigma


def build_band(cycles: np.ndarray, k: float = BAND_K,
               labels: tuple = ANGLE_LABELS) -> NormativeBand:
    """Band from stacked normalized cycles (n, T, C); needs n >= 2."""
    cycles = np.asarray(cycles, dtype=float)
    if cycles.ndim == 2:
        cycles = cycles[..., None]
    if cycles.shape[0] < 2:
        raise DataError(f"band needs at least 2 cycles, got {cycles.shape[0]}")
    aligned = align_to_reference(cycles)
    mu = wrap_angle(aligned.mean(axis=0))
    sigma = aligned.std(axis=0)
    return NormativeBand(mu=mu, sigma=sigma, k=k, labels=labels)


def rmse_deg(test: np.ndarray, band: NormativeBand) -> np.ndarray:
    """Wrap-aware RMSE of a trajectory against the band center, in degrees.

    test: (T,) or (T, C) wrapped radians on the band's frame grid.
    Returns one value per channel (scalar for a single-channel test).
    """
    test = np.asarray(test, dtype=float)
    single = test.ndim == 1
    t2 = test[:, None] if single else test
    if t2.shape != band.mu.shape:
        raise DataError(f"trajectory shaped {t2.shape} vs band {band.mu.shape}")
    d = wrap_angle(t2 - band.mu)
    out = np.degrees(np.sqrt((d * d).mean(axis=0)))
    return float(out[0]) if single else out


# =============================================================================
# Bootstrap equivalence (TOST-style)
# =============================================================================


@dataclass
class EquivalenceResult:
    mean: float            # mean paired difference (deg)
    ci_lo: float           # 90% bootstrap CI (deg), order statistics
    ci_hi: float
    delta: float           # margin (deg)
    equivalent: bool       # CI fully inside [-delta, +delta]
    p_equiv: float         # larger of the two one-sided tail probabilities
    n: int = 0
    iters: int = BOOTSTRAP_ITERS


def bootstrap_equivalence(diffs, delta: float = DELTA_DEG,
                          iters: int = BOOTSTRAP_ITERS, ci: float = CI_LEVEL,
                          rng=None) -> EquivalenceResult:
    """Percentile-bootstrap equivalence test on paired differences (degrees).

    Resamples the differences with replacement, takes the mean of each
    resample, and reads the CI straight off the sorted resample means. The
    pair is declared equivalent when the whole CI sits inside [-delta,
    +delta]; p_equiv is the larger bootstrap tail probability that the mean
    lies at or beyond either margin.
    """
    diffs = np.asarray(diffs, dtype=float).ravel()
    n = diffs.size
    if n < 3:
        raise DataError(f"bootstrap equivalence needs n >= 3, got {n}")
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    idx = rng.integers(0, n, size=(iters, n))
    means = np.sort(diffs[idx].mean(axis=1))
    alpha = (1.0 - ci) / 2.0
    lo = float(means[int(np.floor(alpha * iters))])
    hi = float(means[int(np.ceil((1.0 - alpha) * iters)) - 1])
    p_hi = float(np.mean(means >= delta))
    p_lo = float(np.mean(means <= -delta))
    return EquivalenceResult(
        mean=float(diffs.mean()), ci_lo=lo, ci_hi=hi, delta=float(delta),
        equivalent=bool(-delta <= lo and hi <= delta),
        p_equiv=max(p_hi, p_lo), n=n, iters=iters,
    )


# =============================================================================
# Normality
# =============================================================================


def shapiro_wilk(sample) -> tuple:
    """Shapiro-Wilk W and p (Royston's algorithm via scipy)."""
    x = np.asarray(sample, dtype=float).ravel()
    if not 3 <= x.size <= 5000:
        raise DataError(f"Shapiro-Wilk defined for 3 <= n <= 5000, got {x.size}")
    if np.ptp(x) == 0.0:
        raise DataError("Shapiro-Wilk is degenerate on a constant sample")
    w, p = scipy.stats.shapiro(x)
    return float(w), float(p)


# =============================================================================
# Wilcoxon signed-rank
# =============================================================================


def _signed_ranks(diffs):
    """Drop zeros, midrank |d|; returns (ranks, signs, n)."""
    d = np.asarray(diffs, dtype=float).ravel()
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        raise DataError("all paired differences are zero")
    ranks = scipy.stats.rankdata(np.abs(d))
    return ranks, np.sign(d), n


def _exact_sf_table(ranks: np.ndarray) -> np.ndarray:
    """Null distribution of the positive-rank sum by subset-sum counting.

    Ranks are doubled so midranks become integers; entry [s] counts the sign
    assignments whose (doubled) positive-rank sum equals s. Total mass 2^n.
    """
    r2 = np.rint(2.0 * ranks).astype(np.int64)
    total = int(r2.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in r2:
        counts[r:] += counts[: total + 1 - r].copy()
    return counts


def wilcoxon_signed_rank(diffs, method: str = "auto") -> tuple:
    """Paired signed-rank test: (W, two-sided p).

    W is the smaller of the positive/negative rank sums. The null is
    enumerated exactly (all sign patterns over the observed ranks) up to
    n = 25; larger samples use the normal approximation with tie and
    continuity corrections. ``method`` forces a branch for cross-checking.
    """
    ranks, signs, n = _signed_ranks(diffs)
    if n < 5:
        raise DataError(f"signed-rank test needs n >= 5 nonzero differences, got {n}")
    w_pos = float(ranks[signs > 0].sum())
    w_neg = float(ranks[signs < 0].sum())
    w = min(w_pos, w_neg)

    if method == "auto":
        method = "exact" if n <= EXACT_WILCOXON_MAX_N else "normal"
    if method == "exact":
        counts = _exact_sf_table(ranks)
        w2 = int(np.rint(2.0 * w_pos))
        mass = 2.0 ** n
        p_low = counts[: w2 + 1].sum() / mass
        p_high = counts[w2:].sum() / mass
        p = min(1.0, 2.0 * min(p_low, p_high))
    elif method == "normal":
        mu = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var -= float(((tie_counts ** 3 - tie_counts) / 48.0).sum())
        if var <= 0.0:
            raise DataError("signed-rank variance vanished (all ranks tied)")
        dev = w_pos - mu
        z = (dev - 0.5 * np.sign(dev)) / np.sqrt(var) if dev != 0.0 else 0.0
        p = min(1.0, 2.0 * float(scipy.stats.norm.sf(abs(z))))
    else:
        raise DataError(f"unknown method {method!r}; use auto|exact|normal")
    return w, p


def rank_biserial(diffs) -> float:
    """Matched-pairs rank-biserial correlation in [-1, 1].

    (positive rank sum - negative rank sum) / total rank sum; negative when
    differences (reconstructed minus original) are predominantly negative.
    """
    ranks, signs, _ = _signed_ranks(diffs)
    r_pos = ranks[signs > 0].sum()
    r_neg = ranks[signs < 0].sum()
    return float((r_pos - r_neg) / (r_pos + r_neg))


def holm_bonferroni(p_values, alpha: float = 0.05) -> tuple:
    """Step-down family-wise correction.

    Returns (adjusted p in input order, reject flags). Sorted ascending,
    p_(i) is scaled by (m - i), made monotone nondecreasing, clipped to 1;
    rejection walks the sorted list until the first adjusted p > alpha.
    """
    p = np.asarray(p_values, dtype=float).ravel()
    if p.size == 0:
        return np.array([]), np.array([], dtype=bool)
    if np.any((p < 0.0) | (p > 1.0)):
        raise DataError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    adj_sorted = np.minimum(1.0, np.maximum.accumulate(p[order] * (m - np.arange(m))))
    adjusted = np.empty(m)
    adjusted[order] = adj_sorted
    reject_sorted = np.zeros(m, dtype=bool)
    for i in range(m):
        if adj_sorted[i] > alpha:
            break
        reject_sorted[i] = True
    reject = np.empty(m, dtype=bool)
    reject[order] = reject_sorted
    return adjusted, reject


# =============================================================================
# Participant-condition evaluation
# =============================================================================


@dataclass
class CurveSet:
    """Normalized cycles for one (participant, condition) unit.

    original/reconstructed: (n_cycles, T, C) wrapped radians over the
    analyzed channels.
    """

    participant: str
    condition: str
    original: np.ndarray
    reconstructed: np.ndarray

    def __post_init__(self):
        self.original = np.asarray(self.original, dtype=float)
        self.reconstructed = np.asarray(self.reconstructed, dtype=float)
        if self.original.ndim != 3 or self.reconstructed.ndim != 3:
            raise DataError("curve sets must be (n_cycles, T, C)")
        if self.original.shape[1:] != self.reconstructed.shape[1:]:
            raise DataError("original/reconstructed grids differ")


@dataclass
class RmseRecord:
    participant: str
    condition: str
    angle: str
    rmse_original: float        # degrees
    rmse_reconstructed: float   # degrees


@dataclass
class PairedTestResult:
    angle: str
    w: float
    p: float
    p_adjusted: float
    r_rb: float
    n: int
    shapiro_p: float | None = None


@dataclass
class EvaluationReport:
    records: list = field(default_factory=list)        # RmseRecord
    equivalence: dict = field(default_factory=dict)    # angle -> EquivalenceResult
    tests: list = field(default_factory=list)          # PairedTestResult
    alpha: float = 0.05


def evaluate(curve_sets: list, band: NormativeBand, *, delta: float = DELTA_DEG,
             iters: int = BOOTSTRAP_ITERS, alpha: float = 0.05,
             seed: int = 0) -> EvaluationReport:
    """Score every participant-condition unit against the band and run the
    paired protocol.

    Each unit's cycles are averaged into one mean trajectory per channel;
    RMSE against the band center is computed for the original and the
    reconstruction. Normative units feed the equivalence suite; deviation
    units feed the signed-rank suite, Holm-corrected across channels.
    """
    labels = band.labels
    n_ch = band.mu.shape[1]
    report = EvaluationReport(alpha=alpha)
    norm_diffs = {a: [] for a in labels}
    anom_diffs = {a: [] for a in labels}

    for cs in curve_sets:
        if cs.original.shape[2] != n_ch:
            raise DataError(
                f"{cs.participant}/{cs.condition}: {cs.original.shape[2]} channels, "
                f"band has {n_ch}"
            )
        r_orig = rmse_deg(mean_cycle(cs.original), band)
        r_reco = rmse_deg(mean_cycle(cs.reconstructed), band)
        sink = norm_diffs if cs.condition == "normative" else anom_diffs
        for c, a in enumerate(labels):
            report.records.append(RmseRecord(cs.participant, cs.condition, a,
                                             float(r_orig[c]), float(r_reco[c])))
            sink[a].append(float(r_reco[c]) - float(r_orig[c]))

    rng = np.random.default_rng(seed)
    for a in labels:
        if len(norm_diffs[a]) >= 3:
            report.equivalence[a] = bootstrap_equivalence(
                norm_diffs[a], delta=delta, iters=iters, rng=rng)

    testable = [a for a in labels
                if len([d for d in anom_diffs[a] if d != 0.0]) >= 5]
    raw = {}
    for a in testable:
        w, p = wilcoxon_signed_rank(anom_diffs[a])
        raw[a] = (w, p)
    if testable:
        adjusted, _ = holm_bonferroni([raw[a][1] for a in testable], alpha=alpha)
        for a, adj in zip(testable, adjusted):
            d = np.asarray(anom_diffs[a])
            try:
                sp = shapiro_wilk(d)[1]
            except DataError:
                sp = None
            report.tests.append(PairedTestResult(
                angle=a, w=raw[a][0], p=raw[a][1], p_adjusted=float(adj),
                r_rb=rank_biserial(d), n=int(np.sum(d != 0.0)), shapiro_p=sp))
    return report


# =============================================================================
# Report files
# =============================================================================


def write_rmse_csv(path, records: list) -> None:
    """One row per (participant, condition, angle) with both RMSE values."""
    with open(path, "w") as fh:
        fh.write("participant,condition,angle,rmse_original_deg,rmse_reconstructed_deg\n")
        for r in records:
            fh.write(f"{r.participant},{r.condition},{r.angle},"
                     f"{r.rmse_original:.9g},{r.rmse_reconstructed:.9g}\n")


def write_stats_json(path, report: EvaluationReport) -> None:
    doc = {
        "alpha": report.alpha,
        "equivalence": {
            a: {
                "mean_deg": e.mean, "ci90_deg": [e.ci_lo, e.ci_hi],
                "delta_deg": e.delta, "equivalent": e.equivalent,
                "p_equiv": e.p_equiv, "n": e.n, "iters": e.iters,
                "method": "bootstrap-TOST",
            }
            for a, e in report.equivalence.items()
        },
        "signed_rank": [
            {
                "angle": t.angle, "w": t.w, "p": t.p, "p_holm": t.p_adjusted,
                "r_rb": t.r_rb, "n": t.n, "shapiro_p": t.shapiro_p,
            }
            for t in report.tests
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_band_csv(path, band: NormativeBand) -> None:
    """Plot-ready band: frame index plus mu/sigma/lower/upper in degrees."""
    mu = np.degrees(band.mu)
    sd = np.degrees(band.sigma)
    lo = np.degrees(band.lower)
    hi = np.degrees(band.upper)
    with open(path, "w") as fh:
        cols = []
        for a in band.labels:
            cols += [f"{a}_mu", f"{a}_sigma", f"{a}_lo", f"{a}_hi"]
        fh.write("frame," + ",".join(cols) + "\n")
        for f in range(mu.shape[0]):
            vals = []
            for c in range(mu.shape[1]):
                vals += [mu[f, c], sd[f, c], lo[f, c], hi[f, c]]
            fh.write(f"{f}," + ",".join(f"{v:.9g}" for v in vals) + "\n")
