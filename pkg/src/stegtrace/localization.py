"""Rank candidate steganography sources by how blur grows with distance.

For each candidate node the hop distance to every probe is rank-correlated
with that probe's blur metrics. The true source sees sharp timing at nearby
probes and progressively blurred timing further away, so it maximises the
correlation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import norm, rankdata

from .analysis import BlurMetrics, analyze_stream
from .errors import InsufficientDataError
from .simulator import RunResult
from .topology import NodeId, Topology
from .traffic import analytic_gap_profile

DEFAULT_TAU = 0.5
DEFAULT_DELTA = 0.1
DEFAULT_ALPHA = 0.05
MIN_PROBES = 3
EXACT_PERMUTATION_LIMIT = 8


@dataclass(frozen=True)
class CandidateScore:
    candidate: NodeId
    score: float
    probes_used: int


@dataclass(frozen=True)
class LocalizationResult:
    """Candidates sorted by score, best first, plus the confidence verdict.

    ``runner_up`` is the best rival peak of the score over the topology (None
    when there is none) and ``margin`` the top score's lead over it.
    ``p_value`` is the chance of a top score this high if blur were unrelated
    to distance.
    """

    ranking: tuple[CandidateScore, ...]
    confident: bool
    tau: float
    delta: float
    alpha: float
    probes_used: int
    p_value: float
    runner_up: NodeId | None
    margin: float

    @property
    def top(self) -> CandidateScore:
        return self.ranking[0]

    def to_dict(self) -> dict:
        return {
            "ranking": [{"node": c.candidate, "score": round(c.score, 12)} for c in self.ranking],
            "confident": self.confident,
            "tau": self.tau,
            "delta": self.delta,
            "alpha": self.alpha,
            "probes_used": self.probes_used,
            "p_value": round(self.p_value, 12),
            "runner_up": self.runner_up,
            "margin": round(self.margin, 12),
        }


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank correlation with average ranks for ties; 0 when either side is constant."""
    rx = rankdata(x)
    ry = rankdata(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = math.sqrt(float((rx * rx).sum() * (ry * ry).sum()))
    if denom == 0:
        return 0.0
    return float((rx * ry).sum() / denom)


def _metric_matrix(blur: Sequence[BlurMetrics]) -> np.ndarray:
    # separation falls as blur grows, so it enters with its sign flipped
    return np.array([[b.gap_stddev, b.histogram_entropy, -b.separation_score] for b in blur], dtype=float)


def _centered_ranks(a: np.ndarray) -> np.ndarray:
    r = rankdata(a, axis=0)
    return r - r.mean(axis=0)


def _scores(dist_ranks: np.ndarray, metric_ranks: np.ndarray) -> np.ndarray:
    """Mean rank correlation over metrics.

    dist_ranks: (..., n) centred ranks, metric_ranks: (n, 3) centred ranks.
    """
    num = dist_ranks @ metric_ranks
    dnorm = np.sqrt((dist_ranks**2).sum(axis=-1))[..., None]
    mnorm = np.sqrt((metric_ranks**2).sum(axis=0))
    denom = dnorm * mnorm
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(denom > 0, num / np.where(denom > 0, denom, 1), 0.0)
    return rho.mean(axis=-1)


def _p_value(dist_ranks: np.ndarray, metric_ranks: np.ndarray, observed: float) -> float:
    """Probability of a score >= observed when probes' metrics are shuffled."""
    n = len(dist_ranks)
    if n <= EXACT_PERMUTATION_LIMIT:
        perms = np.array(list(itertools.permutations(range(n))))
        null = _scores(dist_ranks[perms], metric_ranks)
        return float((null >= observed - 1e-12).mean())
    # each rank correlation has null variance 1/(n-1); averaging can only shrink it
    return float(norm.sf(observed * math.sqrt(n - 1)))


def _rival_peak(scores: dict[NodeId, float], topo: Topology, delta: float) -> NodeId | None:
    """Best local maximum, other than the global one, that rises at least ``delta``.

    Candidates are visited from the highest score down and grouped into
    connected hills; when two hills meet the younger one ends and its
    prominence is its peak minus the meeting score. Hills that never meet the
    main one are measured against the lowest possible score, -1.
    """
    order = sorted(scores, key=lambda c: (-scores[c], c))
    parent: dict[NodeId, NodeId] = {}

    def find(x: NodeId) -> NodeId:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    birth: dict[NodeId, int] = {}  # root -> position of its peak in ``order``
    prominence: dict[NodeId, float] = {}
    for pos, c in enumerate(order):
        parent[c] = c
        roots = sorted({find(v) for v in topo.adjacency[c] if v in parent}, key=lambda r: birth[r])
        if not roots:
            birth[c] = pos
            continue
        elder = roots[0]
        parent[c] = elder
        for r in roots[1:]:
            prominence[order[birth[r]]] = scores[order[birth[r]]] - scores[c]
            parent[r] = elder
    top = order[0]
    for c in order:
        if find(c) == c and order[birth[c]] != top:
            prominence[order[birth[c]]] = scores[order[birth[c]]] + 1.0
    rivals = [p for p, prom in prominence.items() if p != top and prom >= delta]
    if not rivals:
        return None
    return min(rivals, key=lambda c: (-scores[c], c))


def localize(
    blur: Mapping[NodeId, BlurMetrics] | Iterable[BlurMetrics],
    topo: Topology,
    candidates: Iterable[NodeId] | None = None,
    tau: float = DEFAULT_TAU,
    delta: float = DEFAULT_DELTA,
    alpha: float = DEFAULT_ALPHA,
) -> LocalizationResult:
    """Score every candidate and decide whether the top one is a clear winner.

    The verdict is confident when the top score reaches ``tau``, no rival peak
    comes within ``delta`` of it, and the top score is significant at level
    ``alpha`` given how few probes there are.
    """
    items = list(blur.values()) if isinstance(blur, Mapping) else list(blur)
    items.sort(key=lambda b: b.probe)
    if len(items) < MIN_PROBES:
        raise InsufficientDataError(f"localization needs at least {MIN_PROBES} probes, got {len(items)}")
    cands = sorted(set(range(topo.node_count) if candidates is None else candidates))
    if not cands:
        raise InsufficientDataError("no candidate nodes")
    probes = [b.probe for b in items]
    metric_ranks = _centered_ranks(_metric_matrix(items))
    dist_ranks = np.array(
        [_centered_ranks(np.array([topo.distances_from(c)[p] for p in probes], dtype=float)) for c in cands]
    )
    raw = _scores(dist_ranks, metric_ranks)
    # rounding lets candidates with identical rank vectors tie exactly
    scores = {c: round(float(s), 12) for c, s in zip(cands, raw)}
    ranking = tuple(
        CandidateScore(c, scores[c], len(probes)) for c in sorted(cands, key=lambda c: (-scores[c], c))
    )
    top = ranking[0]
    rival = _rival_peak(scores, topo, delta)
    margin = top.score - (scores[rival] if rival is not None else -1.0)
    p_value = _p_value(dist_ranks[cands.index(top.candidate)], metric_ranks, top.score)
    confident = top.score >= tau and margin >= delta and p_value <= alpha
    return LocalizationResult(ranking, bool(confident), tau, delta, alpha, len(probes), p_value, rival, margin)


@dataclass(frozen=True)
class SourceLocalization:
    """Localization for all streams sharing one source node."""

    source: NodeId
    stream_ids: tuple[str, ...]
    result: LocalizationResult | None
    errors: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"source": self.source, "streams": list(self.stream_ids)}
        if self.result is not None:
            out.update(self.result.to_dict())
        else:
            out["ranking"] = None
        if self.errors:
            out["errors"] = dict(sorted(self.errors.items()))
        return out


def _fuse(per_stream: list[dict[NodeId, BlurMetrics]]) -> dict[NodeId, BlurMetrics]:
    """Average each metric per probe over the streams that crossed it."""
    pooled: dict[NodeId, list[BlurMetrics]] = {}
    for blur in per_stream:
        for probe, m in blur.items():
            pooled.setdefault(probe, []).append(m)
    return {
        p: BlurMetrics(
            p,
            float(np.mean([m.gap_stddev for m in ms])),
            float(np.mean([m.separation_score for m in ms])),
            float(np.mean([m.histogram_entropy for m in ms])),
        )
        for p, ms in sorted(pooled.items())
    }


def per_stream_localize(
    run: RunResult,
    tau: float = DEFAULT_TAU,
    delta: float = DEFAULT_DELTA,
    alpha: float = DEFAULT_ALPHA,
) -> list[SourceLocalization]:
    """Analyze every stream of a run and localize each source.

    Streams from the same source are pooled: their probes are scored together
    against candidates drawn from all of their routes. A stream that cannot be
    analyzed is reported in ``errors`` without affecting the others.
    """
    by_source: dict[NodeId, list] = {}
    for stream in run.config.streams:
        by_source.setdefault(stream.spec.source, []).append(stream)

    reports = []
    for source, streams in by_source.items():
        errors: dict[str, str] = {}
        blurs: list[dict[NodeId, BlurMetrics]] = []
        candidates: set[NodeId] = set()
        for stream in streams:
            sid = stream.spec.stream_id
            per_probe = {p: run.series[(sid, p)] for p in run.probes_for(sid)}
            try:
                analysis = analyze_stream(per_probe, sid, analytic_gap_profile(stream.method, stream.spec.T1))
            except InsufficientDataError as exc:
                errors[sid] = str(exc)
                continue
            blurs.append(analysis.blur)
            candidates.update(run.routes[sid])
        result = None
        if blurs:
            try:
                result = localize(_fuse(blurs), run.config.topology, candidates, tau, delta, alpha)
            except InsufficientDataError as exc:
                errors["*"] = str(exc)
        reports.append(SourceLocalization(source, tuple(s.spec.stream_id for s in streams), result, errors))
    return reports
