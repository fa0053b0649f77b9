"""Statistics of sorted softmax outputs: simulation, MLE fits, fit metrics, SNR.

The pipeline: simulate (or collect) the average sorted prediction over the
top K ranks, fit truncated Zipf / exponential / log-normal models to it by
weighted maximum likelihood, then score each fit with a battery of metrics
(log-space R^2, KL, JS, chi-square, KS). The SNR curve measures how reliable
each rank position is across samples.

All three model families are normalized over the finite support 1..K, so
their likelihoods and fit metrics are directly comparable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special

from .numerics import InvalidInputError, SeededRng, js_divergence, kl_divergence

FAMILIES = ("zipf", "exponential", "lognormal")

# Parameter search brackets. The lower alpha/lambda edge sits at 0 because the
# truncated families are well defined there (both reduce to uniform) and the
# MLE of uniform data is exactly 0.
ALPHA_BRACKET = (0.0, 10.0)
LAMBDA_BRACKET = (0.0, 10.0)
MU_BRACKET = (-10.0, 10.0)
SIGMA_BRACKET = (1e-4, 10.0)
GOLDEN_TOL = 1e-8
_BOUNDARY_SLACK = 1e-6


class ConvergenceError(RuntimeError):
    """A numeric search failed to reach its tolerance within the iteration cap."""


@dataclass(frozen=True)
class EmpiricalRankDistribution:
    """Average sorted prediction per rank; optionally the per-sample matrix.

    mean_probs[r-1] is the mean of the r-th largest softmax entry across
    samples. per_sample_probs (n_samples x K) is kept when available so the
    SNR curve can be computed.
    """

    mean_probs: np.ndarray
    per_sample_probs: np.ndarray | None = None

    def __post_init__(self):
        mp = np.asarray(self.mean_probs, dtype=np.float64)
        if mp.ndim != 1 or mp.size < 1:
            raise InvalidInputError(f"mean_probs must be a 1-D vector, got shape {mp.shape}")
        if not np.all(np.isfinite(mp)) or np.any(mp <= 0.0):
            raise InvalidInputError("mean_probs entries must be finite and > 0")
        # Rank-sorted sources produce non-increasing values, but fitting also
        # accepts model-generated curves with an interior mode, so ordering is
        # not enforced here.
        object.__setattr__(self, "mean_probs", mp)
        if self.per_sample_probs is not None:
            ps = np.asarray(self.per_sample_probs, dtype=np.float64)
            if ps.ndim != 2 or ps.shape[1] != mp.shape[0]:
                raise InvalidInputError(
                    f"per_sample_probs must be n_samples x {mp.shape[0]}, got {ps.shape}"
                )
            object.__setattr__(self, "per_sample_probs", ps)

    @property
    def top_k(self) -> int:
        return self.mean_probs.shape[0]

    def weights(self) -> np.ndarray:
        """mean_probs normalized to a distribution over ranks 1..K."""
        return self.mean_probs / self.mean_probs.sum()

    def to_csv(self, path) -> None:
        """Write (rank, mean_prob[, std]) rows; std only with per-sample data."""
        has_std = self.per_sample_probs is not None and self.per_sample_probs.shape[0] >= 2
        header = "rank,mean_prob,std" if has_std else "rank,mean_prob"
        lines = [header]
        stds = self.per_sample_probs.std(axis=0, ddof=1) if has_std else None
        for r in range(self.top_k):
            row = f"{r + 1},{self.mean_probs[r]:.17g}"
            if has_std:
                row += f",{stds[r]:.17g}"
            lines.append(row)
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "EmpiricalRankDistribution":
        """Read (rank, mean_prob[, ...]) rows; extra columns are ignored."""
        text = Path(path).read_text()
        lines = [line for line in text.splitlines() if line.strip()]
        if len(lines) < 2:
            raise InvalidInputError(f"{path}: no data rows")
        header = [h.strip() for h in lines[0].split(",")]
        if header[:2] != ["rank", "mean_prob"]:
            raise InvalidInputError(f"{path}: expected 'rank,mean_prob[,...]' header, got {lines[0]!r}")
        probs = []
        for lineno, line in enumerate(lines[1:], start=2):
            parts = line.split(",")
            if len(parts) < 2:
                raise InvalidInputError(f"{path}:{lineno}: expected at least 2 columns")
            try:
                rank = int(parts[0])
                prob = float(parts[1])
            except ValueError as exc:
                raise InvalidInputError(f"{path}:{lineno}: {exc}") from exc
            if rank != lineno - 1:
                raise InvalidInputError(f"{path}:{lineno}: ranks must run 1..K in order")
            probs.append(prob)
        return cls(mean_probs=np.asarray(probs))


def simulate_gaussian_softmax(
    rng: SeededRng, n_samples: int, n_classes: int, top_k: int
) -> EmpiricalRankDistribution:
    """Sorted-softmax-of-Gaussian-logits simulation.

    Draw n_samples x n_classes standard normal logits, sort each row in
    descending order, softmax, average across samples, keep the top_k ranks.
    """
    if n_samples < 1 or n_classes < 2:
        raise InvalidInputError("need n_samples >= 1 and n_classes >= 2")
    if not 1 <= top_k <= n_classes:
        raise InvalidInputError(f"top_k must be in 1..{n_classes}, got {top_k}")
    logits = rng.standard_normal((n_samples, n_classes))
    logits.sort(axis=1)
    logits = logits[:, ::-1]
    shifted = logits - logits[:, :1]  # row max is column 0 after the sort
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    kept = probs[:, :top_k]
    return EmpiricalRankDistribution(mean_probs=kept.mean(axis=0), per_sample_probs=kept)


def golden_section_max(f, lo: float, hi: float, tol: float = GOLDEN_TOL, max_iters: int = 300):
    """Maximize a unimodal scalar function on [lo, hi] to interval width tol."""
    if not lo < hi:
        raise InvalidInputError(f"bad bracket [{lo}, {hi}]")
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iters):
        if b - a < tol:
            return 0.5 * (a + b)
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    raise ConvergenceError(
        f"golden-section search did not reach width {tol} in {max_iters} iterations "
        f"(bracket [{lo}, {hi}], current [{a}, {b}])"
    )


def zipf_model_pmf(alpha: float, support_size: int) -> np.ndarray:
    """r^(-alpha), normalized over ranks 1..K."""
    ranks = np.arange(1, support_size + 1, dtype=np.float64)
    w = ranks ** -float(alpha)
    return w / w.sum()


def exponential_model_pmf(lam: float, support_size: int) -> np.ndarray:
    """exp(-lam * r), normalized over ranks 1..K."""
    ranks = np.arange(1, support_size + 1, dtype=np.float64)
    w = np.exp(-float(lam) * (ranks - 1.0))  # shift by r=1 for overflow safety; cancels
    return w / w.sum()


def lognormal_model_pmf(mu: float, sigma: float, support_size: int) -> np.ndarray:
    """(1/r) exp(-(ln r - mu)^2 / (2 sigma^2)), normalized over ranks 1..K."""
    if sigma <= 0:
        raise InvalidInputError(f"sigma must be > 0, got {sigma}")
    log_ranks = np.log(np.arange(1, support_size + 1, dtype=np.float64))
    exponent = -((log_ranks - float(mu)) ** 2) / (2.0 * float(sigma) ** 2)
    w = np.exp(exponent - exponent.max()) / np.exp(log_ranks)
    return w / w.sum()


def model_pmf(family: str, params: dict, support_size: int) -> np.ndarray:
    if family == "zipf":
        return zipf_model_pmf(params["alpha"], support_size)
    if family == "exponential":
        return exponential_model_pmf(params["lam"], support_size)
    if family == "lognormal":
        return lognormal_model_pmf(params["mu"], params["sigma"], support_size)
    raise InvalidInputError(f"unknown family {family!r}; expected one of {FAMILIES}")


def _weighted_log_likelihood(weights: np.ndarray, model: np.ndarray) -> float:
    return float(np.sum(weights * np.log(model)))


def fit_zipf_mle(emp: EmpiricalRankDistribution) -> float:
    """Exponent maximizing the weighted log-likelihood of the truncated Zipf."""
    if emp.top_k < 2:
        raise InvalidInputError("need at least 2 ranks to fit")
    w = emp.weights()
    k = emp.top_k
    return golden_section_max(
        lambda a: _weighted_log_likelihood(w, zipf_model_pmf(a, k)), *ALPHA_BRACKET
    )


def fit_exponential_mle(emp: EmpiricalRankDistribution) -> float:
    """Rate maximizing the weighted log-likelihood of the truncated exponential."""
    if emp.top_k < 2:
        raise InvalidInputError("need at least 2 ranks to fit")
    w = emp.weights()
    k = emp.top_k
    return golden_section_max(
        lambda lam: _weighted_log_likelihood(w, exponential_model_pmf(lam, k)), *LAMBDA_BRACKET
    )


def fit_lognormal_mle(emp: EmpiricalRankDistribution) -> tuple[float, float]:
    """(mu, sigma) by nested scalar searches: sigma solved inside each mu step."""
    if emp.top_k < 3:
        raise InvalidInputError("need at least 3 ranks to fit a log-normal")
    w = emp.weights()
    k = emp.top_k

    def best_sigma(mu: float) -> float:
        return golden_section_max(
            lambda s: _weighted_log_likelihood(w, lognormal_model_pmf(mu, s, k)),
            *SIGMA_BRACKET,
            tol=GOLDEN_TOL * 0.1,
        )

    mu_hat = golden_section_max(
        lambda m: _weighted_log_likelihood(w, lognormal_model_pmf(m, best_sigma(m), k)),
        *MU_BRACKET,
    )
    return mu_hat, best_sigma(mu_hat)


def fit_params(emp: EmpiricalRankDistribution, family: str) -> dict:
    """MLE parameters for one family, as a name -> value dict."""
    if family == "zipf":
        return {"alpha": fit_zipf_mle(emp)}
    if family == "exponential":
        return {"lam": fit_exponential_mle(emp)}
    if family == "lognormal":
        mu, sigma = fit_lognormal_mle(emp)
        return {"mu": mu, "sigma": sigma}
    raise InvalidInputError(f"unknown family {family!r}; expected one of {FAMILIES}")


@dataclass(frozen=True)
class FitReport:
    """One family's fitted parameters and goodness-of-fit metrics."""

    family: str
    params: dict
    r_squared: float
    kl: float
    js: float
    chi_square: float
    chi_square_dof: int
    ks_d: float
    ks_p: float
    n_mc_samples: int
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": dict(self.params),
            "r_squared": self.r_squared,
            "kl": self.kl,
            "js": self.js,
            "chi_square": self.chi_square,
            "chi_square_dof": self.chi_square_dof,
            "ks_d": self.ks_d,
            "ks_p": self.ks_p,
            "n_mc_samples": self.n_mc_samples,
            "notes": list(self.notes),
        }


def _log_space_r_squared(weights: np.ndarray, model: np.ndarray, notes: list[str]) -> float:
    """Coefficient of determination between log empirical and log model probs."""
    y = np.log(weights)
    yhat = np.log(model)
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        # constant empirical curve: degenerate variance, fall back to residual form
        notes.append("constant log-empirical data; r_squared = 1 - ss_res")
        return 1.0 - ss_res
    return 1.0 - ss_res / ss_tot


def goodness_battery(
    emp: EmpiricalRankDistribution,
    family: str,
    params: dict,
    rng: SeededRng,
    n_mc_samples: int = 100_000,
) -> FitReport:
    """Score a fitted model against the empirical rank distribution.

    R^2 is computed in log space between the normalized empirical and model
    pmfs; KL/JS on the same pair. Chi-square and KS run on n_mc_samples
    categorical draws from the empirical distribution, as if re-observing it;
    chi-square tail cells with expected count < 5 are merged (noted), and the
    KS p-value uses the asymptotic Kolmogorov distribution.
    """
    if n_mc_samples < 1:
        raise InvalidInputError("n_mc_samples must be >= 1")
    k = emp.top_k
    w = emp.weights()
    model = model_pmf(family, params, k)
    notes: list[str] = [f"r_squared in log space; families truncated to ranks 1..{k}"]
    for name, value in params.items():
        if _at_boundary(name, value):
            notes.append(f"{name} at search-bracket boundary ({value:.6g})")

    r_squared = _log_space_r_squared(w, model, notes)
    kl = kl_divergence(w, model)
    js = js_divergence(w, model)

    draws = rng.categorical(w, n_mc_samples)
    observed = np.bincount(draws, minlength=k).astype(np.float64)

    # chi-square with tail merging until every expected cell >= 5
    obs_cells = observed.copy()
    exp_cells = n_mc_samples * model
    merged = 0
    while exp_cells.shape[0] > 2 and exp_cells[-1] < 5.0:
        exp_cells = np.concatenate([exp_cells[:-2], [exp_cells[-2] + exp_cells[-1]]])
        obs_cells = np.concatenate([obs_cells[:-2], [obs_cells[-2] + obs_cells[-1]]])
        merged += 1
    if merged:
        notes.append(f"merged {merged} chi-square tail cells (expected < 5)")
    chi_square = float(np.sum((obs_cells - exp_cells) ** 2 / exp_cells))
    dof = obs_cells.shape[0] - 1

    ecdf = np.cumsum(observed) / n_mc_samples
    mcdf = np.cumsum(model)
    ks_d = float(np.max(np.abs(ecdf - mcdf)))
    ks_p = float(special.kolmogorov(ks_d * np.sqrt(n_mc_samples)))

    report = FitReport(
        family=family,
        params=dict(params),
        r_squared=r_squared,
        kl=kl,
        js=js,
        chi_square=chi_square,
        chi_square_dof=dof,
        ks_d=ks_d,
        ks_p=ks_p,
        n_mc_samples=n_mc_samples,
        notes=tuple(notes),
    )
    for metric in ("r_squared", "kl", "js", "chi_square", "ks_d", "ks_p"):
        if not np.isfinite(getattr(report, metric)):
            raise ConvergenceError(f"non-finite {metric} in {family} fit report")
    return report


def _at_boundary(name: str, value: float) -> bool:
    bracket = {
        "alpha": ALPHA_BRACKET,
        "lam": LAMBDA_BRACKET,
        "mu": MU_BRACKET,
        "sigma": SIGMA_BRACKET,
    }.get(name)
    if bracket is None:
        return False
    lo, hi = bracket
    # the lower alpha/lambda edge is a legitimate estimate (uniform data)
    return abs(value - hi) < _BOUNDARY_SLACK or (lo != 0.0 and abs(value - lo) < _BOUNDARY_SLACK)


def fit_report(
    emp: EmpiricalRankDistribution,
    family: str,
    rng: SeededRng,
    n_mc_samples: int = 100_000,
) -> FitReport:
    """Fit one family by weighted MLE and run the full goodness battery."""
    return goodness_battery(emp, family, fit_params(emp, family), rng, n_mc_samples)


def write_reports_json(reports: list[FitReport], path) -> None:
    Path(path).write_text(json.dumps([r.to_dict() for r in reports], indent=2) + "\n")


@dataclass(frozen=True)
class SnrCurve:
    """Per-rank mean, std (ddof=1), and their ratio across samples.

    Ranks where the std is exactly 0 carry snr = +inf as the defined marker.
    """

    mean: np.ndarray
    std: np.ndarray
    snr: np.ndarray

    @property
    def top_k(self) -> int:
        return self.mean.shape[0]

    def above_unity_prefix(self) -> tuple[int, bool]:
        """(number of leading ranks with SNR > 1, whether {SNR > 1} is a prefix)."""
        above = self.snr > 1.0
        below = np.flatnonzero(~above)
        crossing = int(below[0]) if below.size else self.top_k
        return crossing, not bool(np.any(above[crossing:]))

    def to_csv(self, path) -> None:
        lines = ["rank,mean,std,snr"]
        for r in range(self.top_k):
            lines.append(
                f"{r + 1},{self.mean[r]:.17g},{self.std[r]:.17g},{self.snr[r]:.17g}"
            )
        Path(path).write_text("\n".join(lines) + "\n")


def snr_curve(per_sample_probs: np.ndarray) -> SnrCurve:
    """Signal-to-noise of each rank: mean over samples / std over samples."""
    ps = np.asarray(per_sample_probs, dtype=np.float64)
    if ps.ndim != 2 or ps.shape[0] < 2:
        raise InvalidInputError(f"need an n_samples x K matrix with n >= 2, got {ps.shape}")
    if not np.all(np.isfinite(ps)):
        raise InvalidInputError("per-sample probabilities must be finite")
    mean = ps.mean(axis=0)
    std = ps.std(axis=0, ddof=1)
    with np.errstate(divide="ignore"):
        snr = np.where(std > 0.0, mean / np.where(std > 0.0, std, 1.0), np.inf)
    return SnrCurve(mean=mean, std=std, snr=snr)


def collect_model_rank_distribution(net, dataset, top_k: int | None = None) -> EmpiricalRankDistribution:
    """Sorted softmax predictions of a trained net over its test split, averaged."""
    probs = net.global_probs(dataset.test_images)
    probs = np.sort(probs, axis=1)[:, ::-1]
    k = probs.shape[1] if top_k is None else top_k
    if not 1 <= k <= probs.shape[1]:
        raise InvalidInputError(f"top_k must be in 1..{probs.shape[1]}, got {top_k}")
    kept = probs[:, :k]
    return EmpiricalRankDistribution(mean_probs=kept.mean(axis=0), per_sample_probs=kept)
