"""Convergence diagnostics and posterior summaries."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np


class DiagnosticError(ValueError):
    pass


def _stack(chains, param: Optional[str]) -> np.ndarray:
    """``(n_chains, n_draws)`` array from ChainDraws objects or raw arrays."""
    cols = []
    for c in chains:
        cols.append(np.asarray(c[param] if param is not None else c, dtype=float).ravel())
    lengths = {x.size for x in cols}
    if len(lengths) != 1:
        raise DiagnosticError(f"chains have unequal lengths {sorted(lengths)}")
    return np.vstack(cols)


def gelman_rubin(chains: Sequence, param: Optional[str] = None) -> float:
    """Split R-hat: every chain is halved, then the between/within variance ratio is taken."""
    x = _stack(chains, param)
    m, n = x.shape
    if m < 2:
        raise DiagnosticError("gelman_rubin needs at least 2 chains")
    if n < 10:
        raise DiagnosticError("gelman_rubin needs at least 10 draws per chain")
    half = n // 2
    # odd lengths drop the middle draw
    split = np.vstack([x[:, :half], x[:, n - half:]])
    n = half
    means = split.mean(axis=1)
    W = split.var(axis=1, ddof=1).mean()
    if not W > 0:
        raise DiagnosticError("zero within-chain variance")
    B = n * means.var(ddof=1)
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    xc = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(xc, size, axis=-1)
    return np.fft.irfft(f * np.conj(f), size, axis=-1)[..., :n] / n


def effective_sample_size(chains: Sequence, param: Optional[str] = None) -> float:
    """Multi-chain ESS with Geyer's initial positive sequence truncation."""
    x = _stack(chains, param)
    m, n = x.shape
    if n < 4:
        raise DiagnosticError("effective_sample_size needs at least 4 draws per chain")
    acov = _autocov(x)
    chain_var = acov[:, 0] * n / (n - 1)
    W = chain_var.mean()
    if not W > 0:
        raise DiagnosticError("zero within-chain variance")
    var_plus = W * (n - 1) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # Geyer: sum consecutive pairs while positive, enforce monotone decrease
    total = 0.0
    prev = np.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        total += pair
        prev = pair
        t += 2
    tau = -1.0 + 2.0 * total
    tau = max(tau, 1.0 / np.log10(m * n)) if m * n > 10 else max(tau, 1e-12)
    return float(min(m * n / tau, m * n))


def bayes_p(draws) -> float:
    """Two-sided posterior tail probability ``2 * min(P(x <= 0), P(x >= 0))``, capped at 1."""
    x = np.asarray(draws, dtype=float).ravel()
    if x.size == 0:
        raise DiagnosticError("bayes_p needs at least one draw")
    lower = np.mean(x <= 0)
    upper = np.mean(x >= 0)
    return float(min(1.0, 2.0 * min(lower, upper)))


def quantile(x, q):
    return np.quantile(x, q, method="linear")


@dataclass
class ParameterSummary:
    name: str
    mean: float
    sd: float
    q025: float
    q975: float
    rhat: float
    ess: float
    bayes_p: float
    n_draws: int

    @property
    def p_floor(self) -> float:
        """Resolution of :attr:`bayes_p`; a reported 0 means ``< p_floor``."""
        return 2.0 / self.n_draws


SUMMARY_COLUMNS = ("parameter", "mean", "sd", "q025", "q975", "rhat", "ess", "bayes_p", "n_draws")


@dataclass
class PosteriorSummary:
    rows: Dict[str, ParameterSummary]
    label: str = ""
    meta: Dict[str, object] = field(default_factory=dict)

    def __getitem__(self, name: str) -> ParameterSummary:
        return self.rows[name]

    def __contains__(self, name: str) -> bool:
        return name in self.rows

    def table(self) -> List[dict]:
        return [{"parameter": r.name, "mean": r.mean, "sd": r.sd, "q025": r.q025,
                 "q975": r.q975, "rhat": r.rhat, "ess": r.ess, "bayes_p": r.bayes_p,
                 "n_draws": r.n_draws} for r in self.rows.values()]


def summarize_draws(name: str, per_chain: np.ndarray) -> ParameterSummary:
    pooled = per_chain.ravel()
    try:
        rhat = gelman_rubin(per_chain)
    except DiagnosticError:
        rhat = float("nan")
    try:
        ess = effective_sample_size(per_chain)
    except DiagnosticError:
        ess = float("nan")
    return ParameterSummary(
        name=name, mean=float(pooled.mean()),
        sd=float(pooled.std(ddof=1)) if pooled.size > 1 else 0.0,
        q025=float(quantile(pooled, 0.025)), q975=float(quantile(pooled, 0.975)),
        rhat=rhat, ess=ess, bayes_p=bayes_p(pooled), n_draws=int(pooled.size))


def summarize(chains: Sequence, scale: Optional[float] = None,
              scaled_name: str = "alpha_scaled") -> PosteriorSummary:
    """Summaries of every parameter, pooling chains.

    With ``scale`` set and an ``alpha`` column present, an extra row
    ``scaled_name`` summarizes ``alpha * scale`` (the association per
    ``scale`` units of the source outcome).
    """
    if not chains:
        raise DiagnosticError("summarize needs at least one chain")
    names = chains[0].names
    if any(c.names != names for c in chains):
        raise DiagnosticError("chains have different parameters")
    if chains[0].n_draws == 0:
        raise DiagnosticError("chains have no retained draws")
    rows = {}
    for name in names:
        rows[name] = summarize_draws(name, _stack(chains, name))
    if scale is not None and "alpha" in names:
        rows[scaled_name] = summarize_draws(scaled_name, _stack(chains, "alpha") * scale)
    meta = {"n_chains": len(chains), "scale": scale}
    return PosteriorSummary(rows, meta=meta)
