"""Pretraining of the base dictionary and statistics decoder.

The objective for a batch of graphs is

    L = mean_i L_gw(i) + alpha * mean_i L_rec(i) + beta * L_div

where ``L_gw`` is the GW discrepancy between a graph and the linear surrogate
of the dictionary at its coordinates, ``L_rec`` is the mean squared error of
the decoded statistics and ``L_div`` the diversity hinge. Every GW term is
differentiated with its coupling held fixed (envelope gradients).
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import ot
from .bases import (BaseDictionary, diversity_loss, init_dictionary, linear_surrogate,
                    project_constraints, softmax_weights)
from .decoder import Decoder, decode, decode_backward, init_decoder
from .errors import CheckpointError, ScgfmError
from .graph import Graph, MmSpace, generate_er, to_mm_space
from .stats import SCHEMA, STAT_DIM, feature_extract

CHECKPOINT_VERSION = "scgfm-checkpoint/1"


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of a pretraining run.

    The ``gw_*`` fields configure the entropic solver used during training.
    Plans are cold-started from the product coupling in the first epoch and
    warm-started from the previous epoch's plan afterwards, with at most
    ``warm_outer`` outer iterations (``warm_outer=0`` always cold-starts).
    Cold starts use ``gw_restarts`` extra starts; the first one is the
    north-west-corner start, which frees regular graphs from the product
    coupling (a stationary point for them).
    """

    k: int = 16
    m_nodes: int = 32
    slices: int = 50
    temperature: float = 0.3
    alpha: float = 2.0
    beta: float = 0.05
    margin: float = 10.0
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 0.01
    seed: int = 42
    solver: str = "entropic"
    stop_grad_weights: bool = False
    optimizer: str = "adam"
    hidden: int = 64
    embed_dim: int = 8
    gw_epsilon: float = 0.01
    gw_tol: float = 1e-7
    gw_max_outer: int = 50
    gw_max_inner: int = 100
    gw_restarts: int = 1
    gw_damping: float = 0.7
    warm_outer: int = 10
    threads: int = 1

    def __post_init__(self):
        positive = ("k", "m_nodes", "slices", "temperature", "batch_size", "learning_rate",
                    "hidden", "embed_dim", "gw_epsilon", "gw_tol", "gw_max_outer",
                    "gw_max_inner", "threads")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.m_nodes < 2:
            raise ValueError("m_nodes must be >= 2")
        for name in ("alpha", "beta", "margin", "epochs", "gw_restarts", "warm_outer"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0 < self.gw_damping <= 1:
            raise ValueError("gw_damping must lie in (0, 1]")
        if self.solver not in ("entropic", "sliced"):
            raise ValueError(f"training solver must be entropic or sliced, got {self.solver!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be adam or sgd, got {self.optimizer!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# forward / backward


@dataclass
class LossReport:
    gw: float
    rec: float
    div: float
    total: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class Gradients:
    bases: np.ndarray
    decoder: tuple[np.ndarray, ...]


@dataclass
class GraphPlans:
    """Couplings of one graph: one per base plus the surrogate plan."""

    bases: list[np.ndarray]
    surrogate: np.ndarray


class _Solver:
    """Training-time GW evaluations with optional warm starts."""

    def __init__(self, cfg: TrainConfig, init_floor: float = 1e-3):
        self.cfg = cfg
        self.init_floor = init_floor
        self.slices = ot.SliceSet.make(cfg.slices, cfg.embed_dim, cfg.seed)

    def __call__(self, a: MmSpace, b: MmSpace, init: np.ndarray | None = None) -> ot.GwResult:
        cfg = self.cfg
        if cfg.solver == "sliced":
            return ot.sliced_gw(a, b, self.slices)
        opts = dict(epsilon=cfg.gw_epsilon, tol=cfg.gw_tol, max_inner=cfg.gw_max_inner,
                    damping=cfg.gw_damping)
        if init is not None and cfg.warm_outer > 0:
            return ot.entropic_gw(a, b, max_outer=cfg.warm_outer, init=init,
                                  init_floor=self.init_floor, **opts)
        return ot.entropic_gw(a, b, max_outer=cfg.gw_max_outer, restarts=cfg.gw_restarts,
                              symmetric=cfg.gw_restarts > 0, **opts)


def _graph_terms(a: MmSpace, target: np.ndarray, dictionary: BaseDictionary,
                 spaces: Sequence[MmSpace], dec: Decoder, cfg: TrainConfig, solve: _Solver,
                 frozen: GraphPlans | None, warm: GraphPlans | None,
                 c_gw: float, c_rec: float):
    """Loss terms and gradients of a single graph.

    With ``frozen`` the given plans are used as-is (no solver calls), which
    makes the returned loss an exactly differentiable function of the
    parameters; this is what the finite-difference check relies on.
    """
    K = dictionary.k
    deltas = np.empty(K)
    plans = []
    for k in range(K):
        if frozen is not None:
            T = frozen.bases[k]
            deltas[k] = ot.gw_cost_at(a, spaces[k], T)
        else:
            try:
                res = solve(a, spaces[k], None if warm is None else warm.bases[k])
            except ScgfmError as exc:
                raise type(exc)(f"base {k}: {exc}") from exc
            T = res.coupling.plan
            deltas[k] = res.cost
        plans.append(np.asarray(T.todense()) if hasattr(T, "todense") else T)
    w = softmax_weights(deltas, dictionary.temperature)
    S = linear_surrogate(dictionary, w)
    s_space = MmSpace.uniform(S)
    if frozen is not None:
        Ts = frozen.surrogate
        l_gw = ot.gw_cost_at(a, s_space, Ts)
    else:
        res = solve(a, s_space, None if warm is None else warm.surrogate)
        Ts = res.coupling.plan
        Ts = np.asarray(Ts.todense()) if hasattr(Ts, "todense") else Ts
        l_gw = res.cost

    f = decode(dec, w)
    resid = f - target
    l_rec = float(np.mean(resid * resid))
    up = 2.0 * resid / resid.size
    dec_grads, gw_rec = decode_backward(dec, w, up)

    g_s = c_gw * ot.gw_gradient_b(a, s_space, Ts)
    g_bases = w[:, None, None] * g_s[None]
    if not cfg.stop_grad_weights:
        # dL/dw, then through the softmax and the envelope gradients of delta
        g_w = np.tensordot(dictionary.bases, g_s, axes=([1, 2], [0, 1])) + c_rec * gw_rec
        g_delta = -(w / dictionary.temperature) * (g_w - w @ g_w)
        for k in range(K):
            if g_delta[k] != 0.0:
                g_bases[k] += g_delta[k] * ot.gw_gradient_b(a, spaces[k], plans[k])
    dec_grads = tuple(c_rec * g for g in dec_grads)
    return l_gw, l_rec, g_bases, dec_grads, GraphPlans(plans, Ts), w


def total_loss(batch: Sequence[tuple[MmSpace, np.ndarray]], dictionary: BaseDictionary,
               dec: Decoder, cfg: TrainConfig, frozen: Sequence[GraphPlans] | None = None,
               warm: Sequence[GraphPlans | None] | None = None, solve: _Solver | None = None,
               pool: ThreadPoolExecutor | None = None,
               coefficients: tuple[float, float, float] | None = None):
    """Loss components and gradients for a batch of ``(space, FE target)`` pairs.

    ``coefficients`` overrides the weights ``(1, alpha, beta)`` of the three
    components in the returned gradients (used to isolate one component).

    Returns
    -------
    report : LossReport
    grads : Gradients
        Gradients of ``report.total`` with respect to every base entry and
        every decoder parameter.
    plans : list of GraphPlans
        Couplings used, reusable as warm starts or frozen plans.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    solve = solve or _Solver(cfg)
    spaces = dictionary.spaces()
    c_gw, c_rec, c_div = coefficients or (1.0, cfg.alpha, cfg.beta)

    def one(i):
        a, target = batch[i]
        return _graph_terms(a, target, dictionary, spaces, dec, cfg, solve,
                            None if frozen is None else frozen[i],
                            None if warm is None else warm[i], c_gw, c_rec)

    idx = range(len(batch))
    results = list(pool.map(one, idx)) if pool is not None else [one(i) for i in idx]
    n = len(batch)
    g_bases = np.zeros_like(dictionary.bases)
    g_dec = [np.zeros_like(p) for p in dec.params()]
    l_gw = l_rec = 0.0
    for gw_i, rec_i, gb, gd, _, _ in results:  # ordered reduction
        l_gw += gw_i
        l_rec += rec_i
        g_bases += gb
        for acc, g in zip(g_dec, gd):
            acc += g
    l_gw /= n
    l_rec /= n
    g_bases /= n
    g_dec = tuple(g / n for g in g_dec)
    l_div, g_div = diversity_loss(dictionary)
    g_bases += c_div * g_div
    total = l_gw + cfg.alpha * l_rec + cfg.beta * l_div
    report = LossReport(float(l_gw), float(l_rec), float(l_div), float(total))
    return report, Gradients(g_bases, g_dec), [r[4] for r in results]


# ---------------------------------------------------------------------------
# optimizers


class Adam:
    def __init__(self, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g
            out.append(p - self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps))
        return out


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params, grads):
        return [p - self.lr * g for p, g in zip(params, grads)]


# ---------------------------------------------------------------------------
# checkpoint


@dataclass(eq=False)
class Checkpoint:
    config: TrainConfig
    dictionary: BaseDictionary
    decoder: Decoder
    fe_schema: dict = field(default_factory=lambda: dict(SCHEMA))
    log: list = field(default_factory=list)
    version: str = CHECKPOINT_VERSION

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "config": asdict(self.config),
            "fe_schema": self.fe_schema,
            "embedding_layout": {"order": ["coords", "decoded", "features"],
                                 "features_vec": "row-major"},
            "dictionary": {
                "k": self.dictionary.k,
                "m": self.dictionary.m,
                "temperature": self.dictionary.temperature,
                "margin": self.dictionary.margin,
                "bases": self.dictionary.bases.tolist(),
            },
            "decoder": {
                "hidden": self.decoder.hidden,
                "activation": "relu",
                "w1": self.decoder.w1.tolist(),
                "b1": self.decoder.b1.tolist(),
                "w2": self.decoder.w2.tolist(),
                "b2": self.decoder.b2.tolist(),
            },
            "log": self.log,
        }

    def dumps(self) -> str:
        # repr-based float output is the shortest string that round-trips exactly
        return json.dumps(self.to_dict(), indent=1, allow_nan=False) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "Checkpoint":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from exc
        if not isinstance(d, dict) or d.get("version") != CHECKPOINT_VERSION:
            got = d.get("version") if isinstance(d, dict) else None
            raise CheckpointError(f"unsupported checkpoint version {got!r}")
        try:
            dd, dc = d["dictionary"], d["decoder"]
            dictionary = BaseDictionary(np.array(dd["bases"], dtype=np.float64),
                                        float(dd["temperature"]), float(dd["margin"]))
            decoder = Decoder.from_params([dc["w1"], dc["b1"], dc["w2"], dc["b2"]])
            return cls(TrainConfig.from_dict(d["config"]), dictionary, decoder,
                       d["fe_schema"], d["log"], d["version"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"malformed checkpoint: {exc}") from exc

    @classmethod
    def load(cls, path) -> "Checkpoint":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        return cls.loads(text)


# ---------------------------------------------------------------------------
# training loop


def pretrain(corpus: Sequence[Graph], cfg: TrainConfig,
             metrics: Callable[[dict], None] | None = None,
             on_step: Callable[[BaseDictionary], None] | None = None) -> Checkpoint:
    """Train the dictionary and decoder on ``corpus``.

    Parameters
    ----------
    metrics : callable, optional
        Receives one record per epoch (mean loss components and wall time).
    on_step : callable, optional
        Called with the projected dictionary after every optimizer step.
    """
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    rng = np.random.default_rng(cfg.seed)
    dictionary = init_dictionary(cfg.k, cfg.m_nodes, int(rng.integers(2**31)),
                                 cfg.temperature, cfg.margin)
    dec = init_decoder(cfg.k, int(rng.integers(2**31)), cfg.hidden)
    spaces = [to_mm_space(g) for g in corpus]
    targets = [feature_extract(g) for g in corpus]
    opt = Adam(cfg.learning_rate) if cfg.optimizer == "adam" else Sgd(cfg.learning_rate)
    solve = _Solver(cfg)
    warm: list[GraphPlans | None] = [None] * len(corpus)
    log = []
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            order = rng.permutation(len(corpus))
            sums = np.zeros(4)
            for start in range(0, len(order), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                batch = [(spaces[i], targets[i]) for i in idx]
                try:
                    rep, grads, plans = total_loss(batch, dictionary, dec, cfg,
                                                   warm=[warm[i] for i in idx], solve=solve,
                                                   pool=pool)
                except ScgfmError as exc:
                    raise type(exc)(f"epoch {epoch}, batch at {start}: {exc}") from exc
                for i, pl in zip(idx, plans):
                    warm[i] = pl
                sums += np.array([rep.gw, rep.rec, rep.div, rep.total]) * len(idx)
                params = [dictionary.bases, *dec.params()]
                new = opt.step(params, [grads.bases, *grads.decoder])
                dictionary = dictionary.with_bases(project_constraints(new[0]))
                dec = Decoder(*new[1:])
                if on_step is not None:
                    on_step(dictionary)
            mean = sums / len(corpus)
            rec = {"epoch": epoch, "gw": mean[0], "rec": mean[1], "div": mean[2],
                   "total": mean[3], "seconds": round(time.perf_counter() - t0, 3)}
            log.append({k: v for k, v in rec.items() if k != "seconds"})
            if metrics is not None:
                metrics({k: (float(v) if isinstance(v, np.floating) else v)
                         for k, v in rec.items()})
    finally:
        if pool is not None:
            pool.shutdown()
    log = [{k: (float(v) if isinstance(v, np.floating) else v) for k, v in r.items()}
           for r in log]
    return Checkpoint(cfg, dictionary, dec, dict(SCHEMA), log)


# ---------------------------------------------------------------------------
# diagnostics


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = float(np.max(np.abs(numeric)))
    diff = float(np.max(np.abs(analytic - numeric)))
    if scale == 0.0:
        return diff
    return diff / scale


@dataclass
class GradCheckReport:
    rec: float
    div: float
    gw: float
    gw_frozen: float
    decoder: float
    seed: int
    epsilon: float

    REC_TOL = 1e-4
    DIV_TOL = 1e-4
    GW_TOL = 5e-2

    @property
    def passed(self) -> bool:
        return (self.rec < self.REC_TOL and self.div < self.DIV_TOL and self.decoder < self.REC_TOL
                and self.gw < self.GW_TOL)

    def as_dict(self) -> dict:
        return {"rec": self.rec, "div": self.div, "gw": self.gw, "gw_frozen": self.gw_frozen,
                "decoder": self.decoder, "seed": self.seed, "epsilon": self.epsilon,
                "passed": self.passed}


class _Memo:
    """Reuse solver results for repeated (graph, base) inputs."""

    def __init__(self, solve: _Solver):
        self.solve = solve
        self.cache: dict = {}

    def __call__(self, a, b, init=None):
        key = (id(a), b.structure.tobytes())
        if key not in self.cache:
            self.cache[key] = self.solve(a, b, init)
        return self.cache[key]


def grad_check(cfg: TrainConfig, seed: int, h: float = 1e-5, h_solved: float = 1e-3,
               epsilon: float = 1e-3, damping: float = 0.1) -> GradCheckReport:
    """Compare analytic gradients with central differences on a small instance.

    The instance uses ``K = min(cfg.k, 4)`` bases of ``M = min(cfg.m_nodes, 6)``
    points and three random graphs with 5 to 8 nodes. Bases are perturbed on
    symmetric entry pairs, matching their constraint set.

    Components
    ----------
    rec, div, gw_frozen
        Differences taken with every coupling frozen, so they test the
        chain rule exactly (``rec`` includes the decoder parameters).
    gw
        Differences of ``L_gw`` with the couplings re-solved at every
        evaluation; this measures the envelope approximation. Each
        re-solve is warm-started from the reference plans so it tracks the
        same local optimum instead of jumping between basins.

    Couplings are solved to tight tolerance at regularization ``epsilon``.
    At small ``epsilon`` the undamped fixed-point map can cycle with period
    two; ``damping`` (which leaves the fixed points unchanged) is lowered
    until the solves converge.
    The re-solved differences use the larger step ``h_solved`` so that the
    solver's convergence error (around 1e-6 in the loss) stays negligible.
    The envelope gradient ignores how the entropy of the plan moves with the
    bases, so its error grows with ``epsilon`` (about 0.1 relative at 0.01).
    """
    rng = np.random.default_rng(seed)
    k, m = min(cfg.k, 4), min(cfg.m_nodes, 6)
    small = replace(cfg, k=k, m_nodes=m, warm_outer=0, threads=1, gw_epsilon=epsilon,
                    gw_tol=1e-8, gw_max_outer=3000, gw_max_inner=3000, gw_restarts=0,
                    gw_damping=damping)
    graphs = []
    while len(graphs) < 3:
        g = generate_er(int(rng.integers(5, 9)), 0.5, int(rng.integers(2**31)))
        if g.edge_count:
            graphs.append(g)
    batch = [(to_mm_space(g), feature_extract(g)) for g in graphs]
    dictionary = init_dictionary(k, m, int(rng.integers(2**31)), small.temperature,
                                 small.margin)
    dec = init_decoder(k, int(rng.integers(2**31)), small.hidden)
    solve = _Solver(small)
    _, _, plans = total_loss(batch, dictionary, dec, small, solve=solve)
    # re-solved evaluations follow the local optimum the plans sit in
    follow = _Memo(_Solver(replace(small, warm_outer=small.gw_max_outer), init_floor=0.0))
    _, _, plans = total_loss(batch, dictionary, dec, small, warm=plans, solve=follow)

    def loss(bases, params, frozen):
        d = dictionary.with_bases(bases)
        if frozen is None:
            r, _, _ = total_loss(batch, d, Decoder(*params), small, warm=plans, solve=follow)
        else:
            r, _, _ = total_loss(batch, d, Decoder(*params), small, frozen=frozen, solve=solve)
        return r

    comps = {"rec": ([], []), "div": ([], []), "gw_frozen": ([], []), "gw": ([], [])}
    iso = {"rec": (0.0, 1.0, 0.0), "div": (0.0, 0.0, 1.0), "gw_frozen": (1.0, 0.0, 0.0)}
    analytic = {}
    for name, c in iso.items():
        _, g, _ = total_loss(batch, dictionary, dec, small, frozen=plans, solve=solve,
                             coefficients=c)
        analytic[name] = g
    analytic["gw"] = analytic["gw_frozen"]
    pick = {"rec": lambda r: r.rec, "div": lambda r: r.div, "gw_frozen": lambda r: r.gw,
            "gw": lambda r: r.gw}
    iu = np.triu_indices(m, 1)
    params = [p.copy() for p in dec.params()]
    for b in range(k):
        for i, j in zip(*iu):
            evals = {}
            for step, frz in ((h, plans), (h_solved, None)):
                plus = dictionary.bases.copy()
                minus = dictionary.bases.copy()
                plus[b, i, j] += step
                plus[b, j, i] += step
                minus[b, i, j] -= step
                minus[b, j, i] -= step
                evals[frz is None] = (loss(minus, params, frz), loss(plus, params, frz), step)
            for name in comps:
                lo, hi, step = evals[name == "gw"]
                num = (pick[name](hi) - pick[name](lo)) / (2 * step)
                g = analytic[name].bases
                comps[name][0].append(g[b, i, j] + g[b, j, i])
                comps[name][1].append(num)
    # decoder parameters only enter L_rec
    dec_a, dec_n = [], []
    g_rec = analytic["rec"].decoder
    for pi, p in enumerate(params):
        for idx in np.ndindex(p.shape):
            hp = [q.copy() for q in params]
            hm = [q.copy() for q in params]
            hp[pi][idx] += h
            hm[pi][idx] -= h
            num = (loss(dictionary.bases, hp, plans).rec
                   - loss(dictionary.bases, hm, plans).rec) / (2 * h)
            dec_a.append(g_rec[pi][idx])
            dec_n.append(num)
    errs = {name: _rel_err(np.array(a), np.array(n)) for name, (a, n) in comps.items()}
    return GradCheckReport(errs["rec"], errs["div"], errs["gw"], errs["gw_frozen"],
                           _rel_err(np.array(dec_a), np.array(dec_n)), seed, epsilon)


def surrogate_vs_barycenter(corpus: Sequence[MmSpace], dictionary: BaseDictionary,
                            slices: ot.SliceSet | None = None, iterations: int = 20) -> dict:
    """Compare the linear surrogate with a fixed-point GW barycenter.

    For every graph the coordinates ``w`` come from sliced GW against the
    bases. The barycenter starts at the surrogate ``sum_k w_k B_k`` and
    alternates sliced couplings ``T_k`` to every base with the structure
    update ``C = sum_k w_k T_k B_k T_k^T / (q q^T)`` (``q`` uniform), projected
    onto the base constraints. Both reconstructions are scored by their
    sliced GW cost to the graph; timings exclude the shared coordinate step
    and the scoring.
    """
    from .bases import structural_coordinates

    slices = slices or ot.SliceSet.make(50, 8, 0)
    spaces = dictionary.spaces()
    embeds = [ot.spectral_embed(s, slices.dim) for s in spaces]
    m = dictionary.m
    rows = []
    for gi, a in enumerate(corpus):
        w = structural_coordinates(a, dictionary, "sliced", slices).weights
        t0 = time.perf_counter()
        S = linear_surrogate(dictionary, w)
        t_sur = time.perf_counter() - t0

        t0 = time.perf_counter()
        C = S.copy()
        for _ in range(iterations):
            c_space = MmSpace.uniform(C)
            c_embed = ot.spectral_embed(c_space, slices.dim)
            acc = np.zeros((m, m))
            for k in range(dictionary.k):
                T = ot.sliced_gw(c_space, spaces[k], slices, c_embed, embeds[k]).coupling.plan
                acc += w[k] * (T @ dictionary.bases[k] @ T.T)
            C = project_constraints(acc * (m * m))
        t_bar = time.perf_counter() - t0

        e_sur = ot.sliced_gw(a, MmSpace.uniform(S), slices).cost
        e_bar = ot.sliced_gw(a, MmSpace.uniform(C), slices).cost
        rows.append({"graph": gi, "surrogate_error": e_sur, "barycenter_error": e_bar,
                     "surrogate_seconds": t_sur, "barycenter_seconds": t_bar})
    mean = {key: float(np.mean([r[key] for r in rows])) for key in rows[0] if key != "graph"}
    return {"rows": rows, **{f"mean_{k}": v for k, v in mean.items()}}
