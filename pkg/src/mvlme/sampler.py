"""Blocked Gibbs sampler for the multivariate mixed model.

Update order within a sweep: fixed effects of each outcome, the association
parameter, all subjects' random effects, error precisions, the random-effect
precision matrix (one Wishart per block), then its diagonal scale hyperparameters.

Priors::

    beta_k ~ N(0, v_beta I)        alpha ~ N(0, v_alpha)
    tau_k  ~ Gamma(a_tau, b_tau)   (shape, rate)
    D^-1   ~ Wishart(nu, (m * diag(a))^-1),   nu = block size + offset
    a_l    ~ Gamma(a_hyp, b_hyp)

The Wishart's inverse scale ``m * diag(a)`` keeps every ``a_l`` conjugate.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .design import ChainState, DesignSet, association_covariate, random_part
from .model import ModelSpec

log = logging.getLogger(__name__)

BLOCKS = ("beta", "alpha", "b", "tau", "D_inv", "scale_hyper")
JITTER = 1e-10


class NumericalError(RuntimeError):
    """A positive-definite factorization or likelihood evaluation failed."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


@dataclass
class ChainDraws:
    names: Tuple[str, ...]
    draws: np.ndarray
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.names = tuple(self.names)
        if len(set(self.names)) != len(self.names):
            raise ValueError("parameter names must be unique")
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim != 2 or self.draws.shape[1] != len(self.names):
            raise ValueError("draws must be (n_retained, n_parameters)")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.draws[:, self.names.index(name)]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]


def chain_rng(seed: int, chain_index: int) -> np.random.Generator:
    """Generator determined by ``(seed, chain_index)`` alone."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(chain_index),)))


def spec_hash(spec: ModelSpec) -> str:
    from .config import spec_to_dict
    blob = json.dumps(spec_to_dict(spec), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _chol(prec, iteration, what):
    try:
        return np.linalg.cholesky(prec), False
    except np.linalg.LinAlgError:
        eye = np.eye(prec.shape[-1])
        log.warning("%s matrix not positive definite at iteration %s; retrying with jitter",
                    what, iteration)
        try:
            return np.linalg.cholesky(prec + JITTER * eye), True
        except np.linalg.LinAlgError:
            raise NumericalError(f"{what} matrix is not positive definite", iteration) from None


def _gaussian_draw(mean, chol, rng):
    z = rng.standard_normal(mean.shape)
    return mean + np.linalg.solve(chol.T, z)


def sample_wishart(df: float, scale: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Bartlett draw from Wishart(df, scale); mean is ``df * scale``."""
    p = scale.shape[0]
    L = np.linalg.cholesky(scale)
    A = np.zeros((p, p))
    A[np.diag_indices(p)] = np.sqrt(rng.chisquare(df - np.arange(p)))
    rows, cols = np.tril_indices(p, -1)
    A[rows, cols] = rng.standard_normal(rows.size)
    LA = L @ A
    return LA @ LA.T


class GibbsSampler:
    """Full conditionals and one-sweep updates for a fixed design.

    Each ``*_conditional`` method returns the exact conditional's parameters on
    a given state; the matching ``update_*`` method draws from it.
    """

    def __init__(self, design: DesignSet, spec: ModelSpec):
        self.design = design
        self.spec = spec
        self.priors = spec.priors
        self.K = design.n_outcomes
        self.n = design.n_subjects
        self.r = design.n_random
        self.q = design.source
        self.t = design.target
        self.blocks = self._re_blocks()
        self.jitter_events = 0
        self.iteration = None
        d = design
        self._XtX = [o.X.T @ o.X for o in d.outcomes]
        self._S = [sparse.csr_matrix((np.ones(o.n_obs), (o.subject, np.arange(o.n_obs))),
                                     shape=(self.n, o.n_obs)) for o in d.outcomes]
        # per-subject cross products in the stacked random-effect coordinates
        self._G = []
        for k, o in enumerate(d.outcomes):
            W = self._embed(o.Z, k)
            self._G.append(self._subject_outer(W, W, k))
        if d.association.active:
            tgt = d.outcomes[self.t]
            Wt = self._embed(tgt.Z, self.t)
            Wq = self._embed(d.Fz, self.q)
            cross = self._subject_outer(Wt, Wq, self.t)
            self._A1 = cross + np.swapaxes(cross, 1, 2)
            self._A2 = self._subject_outer(Wq, Wq, self.t)
            self._FxtFx = d.Fx.T @ d.Fx
            self._FxtFz = self._per_subject(d.Fx, d.Fz, self.t)
            self._FztFz = self._per_subject(d.Fz, d.Fz, self.t)
        self._XtZ = [self._per_subject(o.X, o.Z, k) for k, o in enumerate(d.outcomes)]
        self._ZtZ = [self._per_subject(o.Z, o.Z, k) for k, o in enumerate(d.outcomes)]

    # -- helpers ---------------------------------------------------------
    def _embed(self, M, k):
        W = np.zeros((M.shape[0], self.r))
        W[:, self.design.re_slice(k)] = M
        return W

    def _subject_outer(self, U, V, k):
        out = np.zeros((self.n, self.r, self.r))
        np.add.at(out, self.design.outcomes[k].subject, U[:, :, None] * V[:, None, :])
        return out

    def _per_subject(self, U, V, k):
        out = np.zeros((self.n, U.shape[1], V.shape[1]))
        np.add.at(out, self.design.outcomes[k].subject, U[:, :, None] * V[:, None, :])
        return out

    def _re_blocks(self) -> List[slice]:
        d = self.design
        if self.r == 0:
            return []
        if self.spec.re_cross_outcome_correlation:
            return [slice(0, self.r)]
        return [d.re_slice(k) for k in range(self.K) if d.re_slice(k).stop > d.re_slice(k).start]

    def _target_offset(self, state):
        """``alpha * g`` at target rows (zeros when there is no association)."""
        return state.alpha * association_covariate(self.design, state)

    # -- initial state ----------------------------------------------------
    def initial_state(self) -> ChainState:
        beta, tau = [], []
        for o in self.design.outcomes:
            coef = np.linalg.lstsq(o.X, o.y, rcond=None)[0]
            resid = o.y - o.X @ coef
            dof = o.n_obs - o.layout.n_fixed
            var = float(resid @ resid / dof) if dof > 0 else 0.0
            beta.append(coef)
            tau.append(1.0 / var if var > 0 else 1.0)
        alpha = 0.0 if self.design.association.active else None
        return ChainState(beta, alpha, np.zeros((self.n, self.r)), np.array(tau),
                          np.eye(self.r), np.ones(self.r))

    # -- fixed effects ----------------------------------------------------
    def fixed_effects_conditional(self, state: ChainState, k: int):
        """Mean and precision of ``beta_k | rest``."""
        d = self.design
        o = d.outcomes[k]
        prec = np.eye(o.layout.n_fixed) / self.priors.beta_prior_variance + state.tau[k] * self._XtX[k]
        work = o.y - random_part(d, state.b, k)
        if k == self.t:
            work = work - self._target_offset(state)
        rhs = state.tau[k] * (o.X.T @ work)
        if k == self.q and state.alpha is not None:
            tgt = d.outcomes[self.t]
            a = state.alpha
            resid = tgt.y - tgt.X @ state.beta[self.t] - random_part(d, state.b, self.t)
            if d.Fz.shape[1]:
                resid = resid - a * np.einsum("nj,nj->n", d.Fz, state.b[tgt.subject, d.re_slice(self.q)])
            prec = prec + state.tau[self.t] * a * a * self._FxtFx
            rhs = rhs + state.tau[self.t] * a * (d.Fx.T @ resid)
        mean = np.linalg.solve(prec, rhs)
        return mean, prec

    def update_fixed_effects(self, state: ChainState, k: int, rng) -> np.ndarray:
        mean, prec = self.fixed_effects_conditional(state, k)
        L, jit = _chol(prec, self.iteration, f"fixed effects of {self.design.outcomes[k].name!r}")
        self.jitter_events += jit
        return _gaussian_draw(mean, L, rng)

    # -- association ------------------------------------------------------
    def association_conditional(self, state: ChainState):
        """Mean and precision of ``alpha | rest``."""
        d = self.design
        tgt = d.outcomes[self.t]
        g = association_covariate(d, state)
        resid = tgt.y - tgt.X @ state.beta[self.t] - random_part(d, state.b, self.t)
        prec = 1.0 / self.priors.alpha_prior_variance + state.tau[self.t] * float(g @ g)
        mean = state.tau[self.t] * float(g @ resid) / prec
        return mean, prec

    def update_association(self, state: ChainState, rng) -> float:
        if state.alpha is None:
            raise ValueError("model has no association parameter")
        mean, prec = self.association_conditional(state)
        return float(mean + rng.standard_normal() / np.sqrt(prec))

    # -- random effects ---------------------------------------------------
    def random_effects_conditional(self, state: ChainState):
        """Per-subject means ``(n, r)`` and precisions ``(n, r, r)`` of ``b_i | rest``."""
        d = self.design
        prec = np.broadcast_to(state.D_inv, (self.n, self.r, self.r)).copy()
        rhs = np.zeros((self.n, self.r))
        for k, o in enumerate(d.outcomes):
            tau = state.tau[k]
            prec += tau * self._G[k]
            work = o.y - o.X @ state.beta[k]
            if k == self.t and state.alpha is not None:
                a = state.alpha
                work = work - a * (d.Fx @ state.beta[self.q])
                prec += tau * (a * self._A1 + a * a * self._A2)
                if d.Fz.shape[1]:
                    rhs[:, d.re_slice(self.q)] += tau * a * (self._S[k] @ (d.Fz * work[:, None]))
            if o.layout.n_random:
                rhs[:, d.re_slice(k)] += tau * (self._S[k] @ (o.Z * work[:, None]))
        mean = np.linalg.solve(prec, rhs[:, :, None])[:, :, 0]
        return mean, prec

    def update_random_effects(self, state: ChainState, rng) -> np.ndarray:
        if self.r == 0:
            return state.b
        mean, prec = self.random_effects_conditional(state)
        L, jit = _chol(prec, self.iteration, "random effects")
        self.jitter_events += jit
        z = rng.standard_normal(mean.shape)
        return mean + np.linalg.solve(np.swapaxes(L, 1, 2), z[:, :, None])[:, :, 0]

    # -- collapsed outcome blocks ----------------------------------------
    def _conditional_re_mean(self, state, k):
        """Prior mean of ``b_ik`` given the subject's other random effects."""
        blk = self.design.re_slice(k)
        rk = blk.stop - blk.start
        if not self.spec.re_cross_outcome_correlation or rk == self.r:
            return np.zeros((self.n, rk))
        other = np.r_[0:blk.start, blk.stop:self.r]
        Lkk = state.D_inv[blk, blk]
        return -np.linalg.solve(Lkk, state.D_inv[blk][:, other] @ state.b[:, other].T).T

    def collapsed_conditional(self, state: ChainState, k: int):
        """``theta_k | rest`` with ``b_k`` integrated out.

        ``theta_k`` is ``beta_k``, extended by ``alpha`` for the target outcome.
        Returns ``(mean, prec, parts)``; ``parts`` carries the per-subject
        pieces needed to draw ``b_k`` given the new ``theta_k``.
        """
        d = self.design
        o = d.outcomes[k]
        blk = d.re_slice(k)
        rk = blk.stop - blk.start
        tau = state.tau
        joint = k == self.t and state.alpha is not None
        m = self._conditional_re_mean(state, k)
        yt = o.y - (np.einsum("nj,nj->n", o.Z, m[o.subject]) if rk else 0.0)
        if joint:
            g = association_covariate(d, state)
            M = np.column_stack([o.X, g])
            Xg = o.X.T @ g
            MtM = np.block([[self._XtX[k], Xg[:, None]], [Xg[None, :], np.array([[g @ g]])]])
            gtZ = self._S[k] @ (o.Z * g[:, None])
            MtU = np.concatenate([self._XtZ[k], gtZ[:, None, :]], axis=1)
        else:
            M = o.X
            MtM = self._XtX[k]
            MtU = self._XtZ[k]
        tk = tau[k]
        MtWM = tk * MtM
        MtWy = tk * (M.T @ yt)
        MtWU = tk * MtU
        UtWU = tk * self._ZtZ[k]
        UtWy = tk * (self._S[k] @ (o.Z * yt[:, None]))
        if k == self.q and state.alpha is not None:
            a = state.alpha
            tK = tau[self.t]
            tgt = d.outcomes[self.t]
            yt2 = tgt.y - tgt.X @ state.beta[self.t] - random_part(d, state.b, self.t)
            if rk:
                yt2 = yt2 - a * np.einsum("nj,nj->n", d.Fz, m[tgt.subject])
            MtWM = MtWM + tK * a * a * self._FxtFx
            MtWy = MtWy + tK * a * (d.Fx.T @ yt2)
            MtWU = MtWU + tK * a * a * self._FxtFz
            UtWU = UtWU + tK * a * a * self._FztFz
            UtWy = UtWy + tK * a * (self._S[self.t] @ (d.Fz * yt2[:, None]))
        p = M.shape[1]
        prior = np.full(p, 1.0 / self.priors.beta_prior_variance)
        if joint:
            prior[-1] = 1.0 / self.priors.alpha_prior_variance
        prec = np.diag(prior) + MtWM
        rhs = MtWy
        P_inv = None
        if rk:
            try:
                P_inv = np.linalg.inv(state.D_inv[blk, blk] + UtWU)
            except np.linalg.LinAlgError:
                raise NumericalError(f"random-effect precision of {o.name!r} is singular",
                                     self.iteration) from None
            UtWM = np.swapaxes(MtWU, 1, 2)
            PiM = P_inv @ UtWM
            prec = prec - np.einsum("npr,nrq->pq", MtWU, PiM)
            rhs = rhs - np.einsum("nrp,nr->p", PiM, UtWy)
        prec = 0.5 * (prec + prec.T)
        mean = np.linalg.solve(prec, rhs)
        return mean, prec, {"P_inv": P_inv, "m": m, "MtWU": MtWU, "UtWy": UtWy}

    def update_collapsed(self, state: ChainState, k: int, rng) -> None:
        """Joint draw of ``(theta_k, b_k)``: ``theta_k`` marginally, then ``b_k | theta_k``."""
        d = self.design
        mean, prec, parts = self.collapsed_conditional(state, k)
        L, jit = _chol(prec, self.iteration, f"collapsed block of {d.outcomes[k].name!r}")
        self.jitter_events += jit
        theta = _gaussian_draw(mean, L, rng)
        if k == self.t and state.alpha is not None:
            state.beta[k] = theta[:-1]
            state.alpha = float(theta[-1])
        else:
            state.beta[k] = theta
        P_inv = parts["P_inv"]
        if P_inv is None:
            return
        # covariance factor of b_k | theta_k, rest
        C, jit = _chol(P_inv, self.iteration, f"random effects of {d.outcomes[k].name!r}")
        self.jitter_events += jit
        rhs = parts["UtWy"] - np.swapaxes(parts["MtWU"], 1, 2) @ theta
        z = rng.standard_normal(rhs.shape)
        b_k = parts["m"] + ((P_inv @ rhs[:, :, None]) + (C @ z[:, :, None]))[:, :, 0]
        b = state.b.copy()
        b[:, d.re_slice(k)] = b_k
        state.b = b

    # -- error precisions -------------------------------------------------
    def residuals(self, state: ChainState, k: int) -> np.ndarray:
        d = self.design
        o = d.outcomes[k]
        res = o.y - o.X @ state.beta[k] - random_part(d, state.b, k)
        if k == self.t and state.alpha is not None:
            res = res - self._target_offset(state)
        return res

    def error_precision_conditional(self, state: ChainState):
        """Gamma shapes and rates of ``tau_k | rest``."""
        shape = np.empty(self.K)
        rate = np.empty(self.K)
        for k, o in enumerate(self.design.outcomes):
            res = self.residuals(state, k)
            ssr = float(res @ res)
            if ssr < 0:
                raise NumericalError("negative residual sum of squares", self.iteration)
            shape[k] = self.priors.error_precision_shape + 0.5 * o.n_obs
            rate[k] = self.priors.error_precision_rate + 0.5 * ssr
        return shape, rate

    def update_error_precisions(self, state: ChainState, rng) -> np.ndarray:
        shape, rate = self.error_precision_conditional(state)
        return rng.gamma(shape, 1.0 / rate)

    # -- random-effect precision -----------------------------------------
    def prior_df(self, block: slice) -> float:
        return (block.stop - block.start) + self.priors.wishart_df_offset

    def re_precision_conditional(self, state: ChainState):
        """``[(block, df, scale), ...]`` of the Wishart conditional per block."""
        out = []
        for blk in self.blocks:
            bb = state.b[:, blk]
            inv_scale = np.diag(self.priors.scale_hyper_multiplier * state.scale_hyper[blk]) + bb.T @ bb
            scale = np.linalg.inv(inv_scale)
            out.append((blk, self.prior_df(blk) + self.n, 0.5 * (scale + scale.T)))
        return out

    def update_re_precision(self, state: ChainState, rng) -> np.ndarray:
        D_inv = np.zeros((self.r, self.r))
        for blk, df, scale in self.re_precision_conditional(state):
            D_inv[blk, blk] = sample_wishart(df, scale, rng)
        return D_inv

    def scale_hyper_conditional(self, state: ChainState):
        """Gamma shapes and rates of the Wishart scale hyperparameters."""
        p = self.priors
        shape = np.empty(self.r)
        for blk in self.blocks:
            shape[blk] = p.scale_hyper_shape + 0.5 * self.prior_df(blk)
        rate = p.scale_hyper_rate + 0.5 * p.scale_hyper_multiplier * np.diag(state.D_inv)
        return shape, rate

    def update_scale_hyper(self, state: ChainState, rng) -> np.ndarray:
        shape, rate = self.scale_hyper_conditional(state)
        return rng.gamma(shape, 1.0 / rate)

    # -- likelihood -------------------------------------------------------
    def log_likelihood(self, state: ChainState) -> float:
        total = 0.0
        for k, o in enumerate(self.design.outcomes):
            res = self.residuals(state, k)
            tau = state.tau[k]
            total += 0.5 * o.n_obs * np.log(tau / (2 * np.pi)) - 0.5 * tau * float(res @ res)
        if not np.isfinite(total):
            raise NumericalError("non-finite log-likelihood", self.iteration)
        return total

    # -- sweep ------------------------------------------------------------
    def sweep(self, state: ChainState, rng, freeze: Iterable[str] = ()) -> ChainState:
        """One Gibbs cycle; the collapsed scheme needs beta, alpha and b all free."""
        freeze = set(freeze)
        if self.spec.mcmc.scheme == "collapsed" and not freeze & {"beta", "alpha", "b"}:
            for k in range(self.K):
                self.update_collapsed(state, k, rng)
            self._update_variances(state, rng, freeze)
            return state
        if "beta" not in freeze:
            for k in range(self.K):
                state.beta[k] = self.update_fixed_effects(state, k, rng)
        if state.alpha is not None and "alpha" not in freeze:
            state.alpha = self.update_association(state, rng)
        if "b" not in freeze:
            state.b = self.update_random_effects(state, rng)
        self._update_variances(state, rng, freeze)
        return state

    def _update_variances(self, state, rng, freeze):
        if "tau" not in freeze:
            state.tau = self.update_error_precisions(state, rng)
        if self.r and "D_inv" not in freeze:
            state.D_inv = self.update_re_precision(state, rng)
        if self.r and "scale_hyper" not in freeze:
            state.scale_hyper = self.update_scale_hyper(state, rng)

    # -- recording --------------------------------------------------------
    def parameter_names(self) -> List[str]:
        d = self.design
        names = [f"beta.{o.name}.{c}" for o in d.outcomes for c in o.layout.names]
        if d.association.active:
            names.append("alpha")
        names += [f"sigma.{o.name}" for o in d.outcomes]
        names += [f"D_{i + 1}_{j + 1}" for i, j in self._d_entries()]
        return names

    def _d_entries(self):
        out = []
        for blk in self.blocks:
            for i in range(blk.start, blk.stop):
                for j in range(blk.start, i + 1):
                    out.append((i, j))
        return out

    def record(self, state: ChainState) -> np.ndarray:
        parts = [np.concatenate(state.beta)]
        if state.alpha is not None:
            parts.append([state.alpha])
        parts.append(1.0 / np.sqrt(state.tau))
        if self.r:
            D = np.zeros((self.r, self.r))
            for blk in self.blocks:
                D[blk, blk] = np.linalg.inv(state.D_inv[blk, blk])
            entries = self._d_entries()
            parts.append([D[i, j] for i, j in entries])
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def run_chain(design: DesignSet, spec: ModelSpec, chain_index: int,
              init: Optional[ChainState] = None, freeze: Sequence[str] = (),
              progress: bool = False) -> ChainDraws:
    """Run one chain and return its retained draws.

    ``init`` overrides the default start (OLS fixed effects, alpha = 0, zero
    random effects, identity ``D^-1``); blocks named in ``freeze`` keep their
    initial values, which lets sub-models with known parameters be sampled.
    """
    unknown = set(freeze) - set(BLOCKS)
    if unknown:
        raise ValueError(f"unknown blocks in freeze: {sorted(unknown)}")
    mc = spec.mcmc
    sampler = GibbsSampler(design, spec)
    state = (init.copy() if init is not None else sampler.initial_state())
    rng = chain_rng(mc.seed, chain_index)
    names = sampler.parameter_names()
    out = np.empty((mc.n_retained, len(names)))
    row = 0
    start = mc.adapt + mc.burn_in
    for it in range(mc.n_sweeps):
        sampler.iteration = it
        sampler.sweep(state, rng, freeze)
        kept = it - start
        if kept >= 0 and (kept + 1) % mc.thin == 0 and row < out.shape[0]:
            out[row] = sampler.record(state)
            row += 1
        if progress and (it + 1) % 1000 == 0:
            log.info("chain %d: %d/%d sweeps", chain_index, it + 1, mc.n_sweeps)
    loglik = sampler.log_likelihood(state)
    meta = {
        "seed": int(mc.seed), "chain_index": int(chain_index),
        "n_iter": mc.n_iter, "burn_in": mc.burn_in, "thin": mc.thin, "adapt": mc.adapt,
        "jitter_events": int(sampler.jitter_events),
        "final_log_likelihood": float(loglik),
        "re_labels": design.re_labels(),
        "config_hash": spec_hash(spec),
    }
    return ChainDraws(tuple(names), out, meta)


def run_chains(design: DesignSet, spec: ModelSpec, workers: int = 1) -> List[ChainDraws]:
    """All chains of ``spec.mcmc``; chains may run in worker processes."""
    idx = list(range(spec.mcmc.n_chains))
    if workers <= 1 or len(idx) == 1:
        return [run_chain(design, spec, i) for i in idx]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=min(workers, len(idx))) as ex:
        return list(ex.map(run_chain, [design] * len(idx), [spec] * len(idx), idx))
