"""Semi-Markov (segmental) CRF.

A hypothesis is a label sequence plus a segmentation tiling the frames;
consecutive segments must change label.  Each edge e carries its span
[t(e), T(e)], its left (previous) label and its right (current) label, and
is scored as the dot product of the weight vector with the registered
feature functions.  The segmentation is a latent variable: the probability
of a label sequence sums over all segmentations consistent with it, either
over the full bounded-duration space (first-pass mode) or over the
candidate segmentations of a lattice (rescoring mode).

Inference is exact: forward/backward recursions over (boundary frame,
label) in log-space with per-label duration ranges, and the matching max
recursion for decoding.  When no registered feature reads the left label,
edge scores collapse to a (start, duration, label) table and the
recursions run fully vectorized; left-dependent features (the LM feature)
take an exact slower path sized for lattices and small instances.

Training maximizes conditional log-likelihood by (sub)gradient ascent with
L2 and proximal (clip-at-zero) L1 steps; the gradient is the clamped
(reference label sequence) feature expectation minus the free one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .alphabet import BEGIN_SILENCE, END_SILENCE
from .segments import Segment, check_tiling

START_LABEL = "<start>"
NEG_INF = -np.inf


@dataclass(frozen=True)
class SegmentEdge:
    start: int   # t(e), inclusive
    end: int     # T(e), inclusive
    left: str    # s_l: previous label, START_LABEL on the first edge
    right: str   # s_r: label of the segment

    @property
    def duration(self):
        return self.end + 1 - self.start


def edges_of(labels, segments):
    prev = START_LABEL
    out = []
    for label, seg in zip(labels, segments):
        out.append(SegmentEdge(seg.start, seg.end, prev, label))
        prev = label
    return out


# ---------------------------------------------------------------------------
# Per-sequence inputs that feature functions may read

@dataclass
class FeatureContext:
    num_frames: int
    letter_posteriors: np.ndarray = None    # (T, C)
    feature_posteriors: dict = field(default_factory=dict)
    descriptors: np.ndarray = None          # (T, d)
    lm: object = None
    baseline_frames: list = None            # length-T labels from the 1-best baseline
    _peak_curve: np.ndarray = None

    def __post_init__(self):
        for name, arr in [("letter_posteriors", self.letter_posteriors),
                          ("descriptors", self.descriptors)]:
            if arr is not None and len(arr) != self.num_frames:
                raise ValueError("%s has %d frames, expected %d"
                                 % (name, len(arr), self.num_frames))
        if self.baseline_frames is not None and len(self.baseline_frames) != self.num_frames:
            raise ValueError("baseline labeling length mismatch")

    @property
    def peak_curve(self):
        if self._peak_curve is None:
            if self.descriptors is None:
                raise ValueError("peak curve requires descriptors")
            self._peak_curve = smoothed_derivative(self.descriptors)
        return self._peak_curve


def smoothed_derivative(descriptors, window=5):
    """L2 norms of consecutive-frame differences (length T-1), smoothed by a
    centered moving average; windows shrink at the edges."""
    x = np.asarray(descriptors, dtype=np.float64)
    diffs = np.linalg.norm(np.diff(x, axis=0), axis=1)
    half = window // 2
    out = np.empty_like(diffs)
    for i in range(len(diffs)):
        lo, hi = max(0, i - half), min(len(diffs), i + half + 1)
        out[i] = diffs[lo:hi].mean()
    return out


def count_interior_minima(curve):
    """Strict interior local minima; a flat plateau of equal minimal values
    counts once, and runs touching either end are never minima."""
    c = np.asarray(curve, dtype=np.float64)
    m = len(c)
    count = 0
    i = 0
    while i < m:
        j = i
        while j + 1 < m and c[j + 1] == c[i]:
            j += 1
        if i > 0 and j < m - 1 and c[i - 1] > c[i] and c[j + 1] > c[j]:
            count += 1
        i = j + 1
    return count


def delta_peak(ctx, start, end):
    """1 iff the smoothed derivative restricted to the span has exactly one
    interior local minimum."""
    return 1.0 if count_interior_minima(ctx.peak_curve[start:end]) == 1 else 0.0


def segment_thirds(n):
    """Sizes of the three contiguous thirds: ceil(n/3) first, remainder split
    evenly with the earlier part larger."""
    a = -(-n // 3)
    rest = n - a
    b = -(-rest // 2)
    return a, b, rest - b


# ---------------------------------------------------------------------------
# Feature functions.  A feature is either lexicalized (a per-span base
# vector placed in the block of the edge's right label) or global (its
# eval() is called per edge).  Only the LM feature reads the left label.

class LmFeature:
    """Smoothed bigram probability of the labels across the edge (or its
    log, when configured).  Pairs outside the LM's domain score neutrally."""

    name = "lm"
    left_dependent = True
    lexicalized = False
    dim = 1

    def __init__(self, use_log=False):
        self.use_log = use_log

    def eval(self, edge, ctx):
        try:
            p = ctx.lm.prob(edge.left, edge.right)
        except (KeyError, AttributeError):
            p = 1.0
        return np.array([math.log(p) if self.use_log else p])


class BaselineFeature:
    """+1 iff the span covers exactly one baseline label run and that label
    matches the edge's right label; -1 otherwise."""

    name = "baseline"
    left_dependent = False
    lexicalized = False
    dim = 1

    def eval(self, edge, ctx):
        span = ctx.baseline_frames[edge.start:edge.end + 1]
        ok = len(set(span)) == 1 and span[0] == edge.right
        return np.array([1.0 if ok else -1.0])


class _Lexicalized:
    left_dependent = False
    lexicalized = True

    def __init__(self, labels):
        self.labels = list(labels)
        self._index = {l: i for i, l in enumerate(self.labels)}

    def label_index(self, label):
        return self._index.get(label)

    def eval(self, edge, ctx):
        bd = self.block_size(ctx)
        out = np.zeros(len(self.labels) * bd)
        idx = self._index.get(edge.right)
        if idx is not None:
            out[idx * bd:(idx + 1) * bd] = self.base_vector(ctx, edge.start, edge.end)
        return out

    def dimension(self, ctx):
        return len(self.labels) * self.block_size(ctx)


class ClassifierStatFeature(_Lexicalized):
    """Lexicalized span statistics of one frame classifier's outputs.

    kind 'mean'/'max' give one value per (label, classifier value); the
    'div_s'/'div_m' kinds give three, one per contiguous third of the span
    (empty thirds contribute zeros).
    """

    def __init__(self, labels, kind, classifier="letter"):
        super().__init__(labels)
        if kind not in ("mean", "max", "div_s", "div_m"):
            raise ValueError("unknown statistic kind %r" % (kind,))
        self.kind = kind
        self.classifier = classifier
        self.name = "classifier_%s_%s" % (classifier, kind)

    def _posteriors(self, ctx):
        post = ctx.letter_posteriors if self.classifier == "letter" \
            else ctx.feature_posteriors.get(self.classifier)
        if post is None:
            raise ValueError("classifier outputs %r missing from context"
                             % (self.classifier,))
        return post

    def block_size(self, ctx):
        per = 3 if self.kind.startswith("div") else 1
        return per * self._posteriors(ctx).shape[1]

    def base_vector(self, ctx, start, end):
        g = self._posteriors(ctx)[start:end + 1]
        if self.kind == "mean":
            return g.mean(axis=0)
        if self.kind == "max":
            return g.max(axis=0)
        a, b, c = segment_thirds(len(g))
        parts = [g[0:a], g[a:a + b], g[a + b:a + b + c]]
        op = np.mean if self.kind == "div_s" else np.max
        return np.concatenate([op(p, axis=0) if len(p) else np.zeros(g.shape[1])
                               for p in parts])


class PeakFeature(_Lexicalized):
    """Lexicalized single-peak indicator: entry y is delta(label = y) times
    whether the span's smoothed derivative has exactly one local minimum."""

    name = "peak"

    def block_size(self, ctx):
        return 1

    def base_vector(self, ctx, start, end):
        return np.array([delta_peak(ctx, start, end)])


class FirstPassFeatures(_Lexicalized):
    """The first-pass feature set: per right label, the average classifier
    posterior over the span, posterior samples at the first/middle/last
    frames, posteriors at the two boundary frames, a duration one-hot
    (bucketed at L_max) and a bias, all lexicalized."""

    name = "firstpass"

    def __init__(self, labels, num_classes, max_duration):
        super().__init__(labels)
        self.num_classes = num_classes
        self.max_duration = max_duration
        self.block = 6 * num_classes + max_duration + 1

    def block_size(self, ctx):
        return self.block

    def base_vector(self, ctx, start, end):
        g = ctx.letter_posteriors
        c = self.num_classes
        out = np.zeros(self.block)
        out[0:c] = g[start:end + 1].mean(axis=0)
        out[c:2 * c] = g[start]
        out[2 * c:3 * c] = g[(start + end) // 2]
        out[3 * c:4 * c] = g[end]
        out[4 * c:5 * c] = g[start]
        out[5 * c:6 * c] = g[end]
        out[6 * c + min(end + 1 - start, self.max_duration) - 1] = 1.0
        out[-1] = 1.0
        return out

    def span_matrix(self, ctx, dmax):
        """Base vectors for every (start, duration): (T, dmax, block)."""
        g = np.asarray(ctx.letter_posteriors, dtype=np.float64)
        t_len, c = g.shape
        cums = np.vstack([np.zeros(c), np.cumsum(g, axis=0)])
        phi = np.zeros((t_len, dmax, self.block))
        t0 = np.arange(t_len)
        for d in range(1, dmax + 1):
            s = t0[t0 + d <= t_len]
            if len(s) == 0:
                break
            e = s + d - 1
            mean = (cums[e + 1] - cums[s]) / d
            mid = (s + e) // 2
            phi[s, d - 1, :6 * c] = np.concatenate(
                [mean, g[s], g[mid], g[e], g[s], g[e]], axis=1)
            phi[s, d - 1, 6 * c + min(d, self.max_duration) - 1] = 1.0
            phi[s, d - 1, -1] = 1.0
        return phi


class FirstPassScoreFeature:
    """Edge score under a trained first-pass model; summed over a
    segmentation this reproduces that model's total score."""

    lexicalized = False
    name = "firstpass_score"
    dim = 1

    def __init__(self, model):
        self.model = model
        self.left_dependent = model.left_dependent

    def eval(self, edge, ctx):
        return np.array([self.model.edge_score(edge, ctx)])


class SegmentClassifierFeature:
    """Posterior of a segment-level classifier for the hypothesized label,
    from a fixed-dimension summary: the means of the span's three thirds."""

    lexicalized = False   # the value depends on the label itself
    left_dependent = False
    name = "segment_classifier"

    def __init__(self, labels, mlp):
        self.labels = list(labels)
        self._index = {l: i for i, l in enumerate(self.labels)}
        self.mlp = mlp
        self.dim = len(self.labels)

    def summary(self, ctx, start, end):
        g = ctx.letter_posteriors[start:end + 1]
        a, b, c = segment_thirds(len(g))
        parts = [g[0:a], g[a:a + b], g[a + b:a + b + c]]
        return np.concatenate([p.mean(axis=0) if len(p) else np.zeros(g.shape[1])
                               for p in parts])

    def eval(self, edge, ctx):
        out = np.zeros(self.dim)
        idx = self._index.get(edge.right)
        if idx is not None:
            probs = self.mlp.predict_proba(self.summary(ctx, edge.start, edge.end))[0]
            out[idx] = probs[idx]
        return out


# ---------------------------------------------------------------------------
# Model

class ManifestError(ValueError):
    pass


class SegmentalModel:
    """Feature registry plus weights, label set and duration bounds.

    Durations are bounded by ``max_duration`` except for the boundary
    silences, which are exempt; letters may also get a minimum duration.
    Optional structural constraints pin which labels may start or end a
    segmentation (used to keep boundary silences at the sequence edges).
    """

    def __init__(self, labels, features, dims, max_duration=40, min_letter_duration=1,
                 initial_labels=None, final_labels=None, weights=None):
        self.labels = list(labels)
        self.features = list(features)
        self.dims = [int(d) for d in dims]
        if len(self.dims) != len(self.features):
            raise ValueError("need one dimension per feature function")
        self.offsets = np.concatenate([[0], np.cumsum(self.dims)]).astype(int)
        self.total_dim = int(self.offsets[-1])
        self.weights = np.zeros(self.total_dim) if weights is None else \
            np.asarray(weights, dtype=np.float64)
        if len(self.weights) != self.total_dim:
            raise ValueError("weight vector length %d != feature dimensionality %d"
                             % (len(self.weights), self.total_dim))
        self.max_duration = max_duration
        self.min_letter_duration = min_letter_duration
        self.initial_labels = set(initial_labels) if initial_labels is not None else None
        self.final_labels = set(final_labels) if final_labels is not None else None
        self._label_index = {l: i for i, l in enumerate(self.labels)}

    @property
    def left_dependent(self):
        return any(f.left_dependent for f in self.features)

    def min_dur(self, label):
        if label in (BEGIN_SILENCE, END_SILENCE):
            return 1
        return self.min_letter_duration

    def max_dur(self, label, num_frames):
        if label in (BEGIN_SILENCE, END_SILENCE):
            return num_frames
        return min(self.max_duration, num_frames)

    def transition_ok(self, prev, nxt):
        if prev == nxt:
            return False
        if nxt == BEGIN_SILENCE or prev == END_SILENCE:
            return False
        return True

    def initial_ok(self, label):
        return self.initial_labels is None or label in self.initial_labels

    def final_ok(self, label):
        return self.final_labels is None or label in self.final_labels

    def feature_vector(self, edge, ctx):
        return np.concatenate([np.asarray(f.eval(edge, ctx), dtype=np.float64)
                               for f in self.features])

    def edge_score(self, edge, ctx, weights=None):
        w = self.weights if weights is None else weights
        total = 0.0
        for f, off, dim in zip(self.features, self.offsets[:-1], self.dims):
            if f.lexicalized:
                idx = f.label_index(edge.right)
                if idx is None:
                    continue
                bd = f.block_size(ctx)
                total += float(np.dot(w[off + idx * bd: off + (idx + 1) * bd],
                                      f.base_vector(ctx, edge.start, edge.end)))
            else:
                total += float(np.dot(w[off:off + dim], f.eval(edge, ctx)))
        return total

    def score(self, labels, segments, ctx, weights=None):
        """Total weighted feature score of one labeled segmentation."""
        check_tiling(segments, ctx.num_frames)
        if len(labels) != len(segments):
            raise ValueError("label/segment count mismatch")
        for seg, label in zip(segments, labels):
            if seg.duration > self.max_dur(label, ctx.num_frames):
                raise ValueError("segment %r exceeds the duration bound" % (seg,))
        return sum(self.edge_score(e, ctx, weights) for e in edges_of(labels, segments))

    def masks(self):
        nl = len(self.labels)
        trans = np.zeros((nl, nl), dtype=bool)
        for i, p in enumerate(self.labels):
            for j, nx in enumerate(self.labels):
                trans[i, j] = self.transition_ok(p, nx)
        init = np.array([0.0 if self.initial_ok(l) else NEG_INF for l in self.labels])
        final = np.array([0.0 if self.final_ok(l) else NEG_INF for l in self.labels])
        return trans, init, final

    # -- serialization ------------------------------------------------------

    def manifest(self):
        return [{"name": f.name, "dim": int(d)} for f, d in zip(self.features, self.dims)]

    def save(self, path):
        from .fileio import write_json
        write_json(path, {
            "schema": "segspell-scrf-1",
            "labels": self.labels,
            "manifest": self.manifest(),
            "max_duration": self.max_duration,
            "min_letter_duration": self.min_letter_duration,
            "initial_labels": sorted(self.initial_labels) if self.initial_labels is not None else None,
            "final_labels": sorted(self.final_labels) if self.final_labels is not None else None,
            "weights": self.weights.tolist(),
        })

    def load_weights(self, path):
        """Load weights; fails unless the stored manifest matches this
        model's registered feature functions and dimensions."""
        from .fileio import read_json
        obj = read_json(path)
        if obj.get("manifest") != self.manifest():
            raise ManifestError("feature manifest mismatch: stored %r vs registered %r"
                                % (obj.get("manifest"), self.manifest()))
        weights = np.asarray(obj["weights"], dtype=np.float64)
        if len(weights) != self.total_dim:
            raise ManifestError("stored weight length does not match manifest")
        self.weights = weights
        return self


# ---------------------------------------------------------------------------
# Log-space helpers

def _logsumexp(values):
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return NEG_INF
    m = float(np.max(values))
    if m == NEG_INF:
        return NEG_INF
    return m + math.log(float(np.sum(np.exp(values - m))))


def _lse_axis0(values):
    """logsumexp along axis 0 of a 2-D array; all -inf columns stay -inf."""
    m = values.max(axis=0)
    safe = np.where(m == NEG_INF, 0.0, m)
    s = np.exp(values - safe[None]).sum(axis=0)
    out = np.full(values.shape[1], NEG_INF)
    good = m > NEG_INF
    out[good] = m[good] + np.log(s[good])
    return out


def _masked_lse(vector, mask):
    """out[j] = logsumexp over i with mask[i, j] of vector[i]."""
    vals = np.where(mask, vector[:, None], NEG_INF)
    return _lse_axis0(vals)


# ---------------------------------------------------------------------------
# Score tables

@dataclass
class Tables:
    table: np.ndarray        # (T, dmax, L): left-independent edge scores
    dmax: int
    span_matrices: dict      # feature position -> (T, dmax, block) bases


def compute_tables(model, ctx, weights=None):
    """Left-independent edge scores for every (start, duration-1, label);
    infeasible spans are -inf.  Left-dependent features are added inside the
    recursions."""
    w_all = model.weights if weights is None else weights
    t_len = ctx.num_frames
    dmax = min(max(model.max_dur(l, t_len) for l in model.labels), t_len)
    nl = len(model.labels)
    table = np.zeros((t_len, dmax, nl))
    span_matrices = {}
    for fi, (f, off, dim) in enumerate(zip(model.features, model.offsets[:-1], model.dims)):
        if f.left_dependent:
            continue
        w = w_all[off:off + dim]
        if isinstance(f, FirstPassFeatures):
            phi = f.span_matrix(ctx, dmax)
            span_matrices[fi] = phi
            wm = np.zeros((nl, f.block))
            for li, label in enumerate(model.labels):
                idx = f.label_index(label)
                if idx is not None:
                    wm[li] = w[idx * f.block:(idx + 1) * f.block]
            table += phi @ wm.T
        elif f.lexicalized:
            bd = f.block_size(ctx)
            for t0 in range(t_len):
                for d in range(1, min(dmax, t_len - t0) + 1):
                    base = f.base_vector(ctx, t0, t0 + d - 1)
                    for li, label in enumerate(model.labels):
                        idx = f.label_index(label)
                        if idx is not None:
                            table[t0, d - 1, li] += float(
                                np.dot(w[idx * bd:(idx + 1) * bd], base))
        else:
            for t0 in range(t_len):
                for d in range(1, min(dmax, t_len - t0) + 1):
                    for li, label in enumerate(model.labels):
                        e = SegmentEdge(t0, t0 + d - 1, START_LABEL, label)
                        table[t0, d - 1, li] += float(np.dot(w, f.eval(e, ctx)))
    for li, label in enumerate(model.labels):
        lo = model.min_dur(label)
        hi = model.max_dur(label, t_len)
        if lo > 1:
            table[:, :lo - 1, li] = NEG_INF
        if hi < dmax:
            table[:, hi:, li] = NEG_INF
    for t0 in range(t_len):
        if t_len - t0 < dmax:
            table[t0, t_len - t0:, :] = NEG_INF
    return Tables(table, dmax, span_matrices)


def span_score_table(model, ctx, weights=None):
    tabs = compute_tables(model, ctx, weights)
    return tabs.table, tabs.dmax


def _left_scores(model, ctx, start, end, right_label, weights):
    """Left-dependent feature contribution per previous label; index 0 is
    the START context, then one entry per label."""
    w_all = model.weights if weights is None else weights
    out = np.zeros(len(model.labels) + 1)
    for f, off, dim in zip(model.features, model.offsets[:-1], model.dims):
        if not f.left_dependent:
            continue
        w = w_all[off:off + dim]
        out[0] += float(np.dot(w, f.eval(SegmentEdge(start, end, START_LABEL, right_label), ctx)))
        for li, prev in enumerate(model.labels):
            out[li + 1] += float(np.dot(w, f.eval(SegmentEdge(start, end, prev, right_label), ctx)))
    return out


# ---------------------------------------------------------------------------
# Exact inference over the full segmentation space

def forward_pass(model, ctx, weights=None, tabs=None):
    """alpha[t, y]: log-sum over partial hypotheses covering frames [0, t)
    whose final segment has label y; prev_lse[t, y]: log-sum over contexts
    allowed to precede a segment starting at t labeled y (START at t=0)."""
    if tabs is None:
        tabs = compute_tables(model, ctx, weights)
    table, dmax = tabs.table, tabs.dmax
    t_len = ctx.num_frames
    nl = len(model.labels)
    trans, init_mask, _ = model.masks()
    left_dep = model.left_dependent
    alpha = np.full((t_len + 1, nl), NEG_INF)
    prev_lse = np.full((t_len + 1, nl), NEG_INF)
    prev_lse[0] = init_mask
    for t in range(1, t_len + 1):
        n_d = min(dmax, t)
        starts = t - np.arange(1, n_d + 1)
        if left_dep:
            acc = np.full((n_d, nl), NEG_INF)
            for di, a in enumerate(starts):
                for li in range(nl):
                    base = table[a, t - a - 1, li]
                    if base == NEG_INF:
                        continue
                    ls = _left_scores(model, ctx, a, t - 1, model.labels[li], weights)
                    if a == 0:
                        acc[di, li] = base + ls[0] + init_mask[li]
                    else:
                        cand = np.where(trans[:, li], alpha[a] + ls[1:], NEG_INF)
                        acc[di, li] = base + _logsumexp(cand)
        else:
            acc = table[starts, t - starts - 1, :] + prev_lse[starts]
        alpha[t] = _lse_axis0(acc)
        if t < t_len:
            prev_lse[t] = _masked_lse(alpha[t], trans)
    return alpha, prev_lse, tabs


def backward_pass(model, ctx, tabs, weights=None):
    """tail[t, y]: log-sum over completions of frames [t, T) given the
    previous segment ended at t with label y.  tail[T] folds in the final-
    label mask, so tail is directly usable in edge marginals."""
    table, dmax = tabs.table, tabs.dmax
    t_len = ctx.num_frames
    nl = len(model.labels)
    trans, init_mask, final_mask = model.masks()
    left_dep = model.left_dependent
    tail = np.full((t_len + 1, nl), NEG_INF)
    tail[t_len] = final_mask
    for t in range(t_len - 1, -1, -1):
        n_d = min(dmax, t_len - t)
        ends = t + np.arange(1, n_d + 1)
        if left_dep:
            for lp in range(nl):
                vals = []
                for li in range(nl):
                    if not trans[lp, li]:
                        continue
                    for d in range(1, n_d + 1):
                        b = t + d
                        base = table[t, d - 1, li]
                        if base == NEG_INF or tail[b, li] == NEG_INF:
                            continue
                        ls = _left_scores(model, ctx, t, b - 1, model.labels[li], weights)
                        vals.append(base + ls[lp + 1] + tail[b, li])
                tail[t, lp] = _logsumexp(np.array(vals)) if vals else NEG_INF
        else:
            v = table[t, :n_d, :] + tail[ends]      # (n_d, nl)
            w_next = _lse_axis0(v)
            tail[t] = _masked_lse(w_next, trans.T)
    return tail


def start_mass(model, ctx, tabs, tail, weights=None):
    """log-sum over complete hypotheses (equals logZ), computed from the
    START context; useful as a cross-check of the forward pass."""
    table, dmax = tabs.table, tabs.dmax
    t_len = ctx.num_frames
    _, init_mask, _ = model.masks()
    n_d = min(dmax, t_len)
    if model.left_dependent:
        vals = []
        for li, label in enumerate(model.labels):
            if init_mask[li] == NEG_INF:
                continue
            for d in range(1, n_d + 1):
                base = table[0, d - 1, li]
                if base == NEG_INF or tail[d, li] == NEG_INF:
                    continue
                ls = _left_scores(model, ctx, 0, d - 1, label, weights)
                vals.append(base + ls[0] + tail[d, li])
        return _logsumexp(np.array(vals)) if vals else NEG_INF
    v = table[0, :n_d, :] + tail[1:n_d + 1]
    return _logsumexp(_lse_axis0(v) + init_mask)


def log_partition(model, ctx, mode="full", lattice=None, weights=None):
    """log sum over in-scope labeled segmentations of exp(score)."""
    if mode == "lattice":
        if lattice is None or not lattice.hypotheses:
            raise ValueError("lattice mode requires a non-empty lattice")
        scores = [model.score(list(h.labels), h.segments, ctx, weights)
                  for h in lattice.hypotheses]
        return _logsumexp(np.array(scores))
    if mode != "full":
        raise ValueError("mode must be 'full' or 'lattice'")
    alpha, _, _ = forward_pass(model, ctx, weights)
    _, _, final_mask = model.masks()
    return _logsumexp(alpha[ctx.num_frames] + final_mask)


def viterbi(model, ctx, weights=None):
    """Best labeled segmentation under the duration bounds.

    With left-dependent features, equal scores break toward fewer segments,
    then the lower previous-label index, then the earlier segment start; the
    vectorized left-independent path resolves exact ties by the shortest
    final segment, then the lowest previous-label index.
    """
    if model.left_dependent:
        return _viterbi_generic(model, ctx, weights)
    tabs = compute_tables(model, ctx, weights)
    table, dmax = tabs.table, tabs.dmax
    t_len = ctx.num_frames
    nl = len(model.labels)
    trans, init_mask, final_mask = model.masks()
    trans_add = np.where(trans, 0.0, NEG_INF)
    best = np.full((t_len + 1, nl), NEG_INF)
    # best over allowed previous labels, and that label's index
    prev_best = np.full((t_len + 1, nl), NEG_INF)
    prev_arg = np.zeros((t_len + 1, nl), dtype=int)
    prev_best[0] = init_mask
    prev_arg[0] = -1
    back_d = np.zeros((t_len + 1, nl), dtype=int)
    for t in range(1, t_len + 1):
        n_d = min(dmax, t)
        starts = t - np.arange(1, n_d + 1)
        cand = table[starts, t - starts - 1, :] + prev_best[starts]  # (n_d, nl)
        di = np.argmax(cand, axis=0)
        best[t] = cand[di, np.arange(nl)]
        back_d[t] = di + 1
        if t < t_len:
            scores = best[t][:, None] + trans_add  # (prev, next)
            prev_arg[t] = np.argmax(scores, axis=0)
            prev_best[t] = scores[prev_arg[t], np.arange(nl)]
    finals = best[t_len] + final_mask
    li = int(np.argmax(finals))
    if finals[li] == NEG_INF:
        raise ValueError("no legal segmentation (check duration bounds)")
    final_score = float(finals[li])
    labels, segments = [], []
    t = t_len
    while t > 0:
        d = int(back_d[t, li])
        a = t - d
        labels.append(model.labels[li])
        segments.append(Segment(model.labels[li], a, t - 1))
        li = int(prev_arg[a, li])
        t = a
    labels.reverse()
    segments.reverse()
    return labels, segments, final_score


def _viterbi_generic(model, ctx, weights=None):
    tabs = compute_tables(model, ctx, weights)
    table, dmax = tabs.table, tabs.dmax
    t_len = ctx.num_frames
    nl = len(model.labels)
    trans, init_mask, final_mask = model.masks()
    best = np.full((t_len + 1, nl), NEG_INF)
    nseg = np.zeros((t_len + 1, nl), dtype=int)
    back = {}
    for t in range(1, t_len + 1):
        for li in range(nl):
            cand = []  # (score, nseg, prev_li, start)
            for d in range(1, min(dmax, t) + 1):
                a = t - d
                base = table[a, d - 1, li]
                if base == NEG_INF:
                    continue
                ls = _left_scores(model, ctx, a, t - 1, model.labels[li], weights)
                if a == 0:
                    if init_mask[li] == NEG_INF:
                        continue
                    cand.append((base + ls[0], 1, -1, a))
                else:
                    for lp in range(nl):
                        if not trans[lp, li] or best[a, lp] == NEG_INF:
                            continue
                        cand.append((best[a, lp] + base + ls[lp + 1],
                                     nseg[a, lp] + 1, lp, a))
            if not cand:
                continue
            cand.sort(key=lambda c: (-c[0], c[1], c[2], c[3]))
            sc, k, lp, a = cand[0]
            best[t, li] = sc
            nseg[t, li] = k
            back[(t, li)] = (a, lp)
    finals = best[t_len] + final_mask
    order = sorted(range(nl), key=lambda li: (-finals[li], nseg[t_len, li], li))
    li = order[0]
    if finals[li] == NEG_INF:
        raise ValueError("no legal segmentation (check duration bounds)")
    final_score = float(finals[li])
    labels, segments = [], []
    t = t_len
    while t > 0:
        a, lp = back[(t, li)]
        labels.append(model.labels[li])
        segments.append(Segment(model.labels[li], a, t - 1))
        t, li = a, lp
    labels.reverse()
    segments.reverse()
    return labels, segments, final_score


def edge_marginals(model, ctx, weights=None, tabs=None):
    """Posterior probability of each (start, duration, right label) edge
    (summed over the left label), shape (T, dmax, L), plus logZ."""
    alpha, prev_lse, tabs = forward_pass(model, ctx, weights, tabs)
    tail = backward_pass(model, ctx, tabs, weights)
    table, dmax = tabs.table, tabs.dmax
    t_len = ctx.num_frames
    nl = len(model.labels)
    trans, init_mask, final_mask = model.masks()
    logz = _logsumexp(alpha[t_len] + final_mask)
    marg = np.zeros((t_len, dmax, nl))
    if model.left_dependent:
        for a in range(t_len):
            for d in range(1, min(dmax, t_len - a) + 1):
                b = a + d
                for li in range(nl):
                    base = table[a, d - 1, li]
                    if base == NEG_INF or tail[b, li] == NEG_INF:
                        continue
                    ls = _left_scores(model, ctx, a, b - 1, model.labels[li], weights)
                    if a == 0:
                        head = init_mask[li] + ls[0]
                    else:
                        head = _logsumexp(np.where(trans[:, li], alpha[a] + ls[1:], NEG_INF))
                    if head == NEG_INF:
                        continue
                    marg[a, d - 1, li] = math.exp(head + base + tail[b, li] - logz)
    else:
        with np.errstate(invalid="ignore"):
            for d in range(1, dmax + 1):
                amax = t_len - d
                if amax < 0:
                    break
                rows = np.arange(0, amax + 1)
                vals = prev_lse[rows] + table[rows, d - 1, :] + tail[rows + d] - logz
                marg[rows, d - 1, :] = np.where(np.isfinite(vals), np.exp(vals), 0.0)
    return marg, logz


# ---------------------------------------------------------------------------
# Training: conditional log-likelihood

@dataclass
class TrainingExample:
    ctx: FeatureContext
    ref_labels: list
    ref_segments: list
    lattice: object = None


class ReferenceNotInLattice(RuntimeError):
    pass


def candidate_feature_totals(model, ctx, hyp):
    total = np.zeros(model.total_dim)
    for e in edges_of(list(hyp.labels), hyp.segments):
        total += model.feature_vector(e, ctx)
    return total


def _accumulate_edge(model, ctx, edge, weight, expect):
    """expect += weight * f(edge), exploiting lexicalized block structure."""
    for f, off, dim in zip(model.features, model.offsets[:-1], model.dims):
        if f.lexicalized:
            idx = f.label_index(edge.right)
            if idx is None:
                continue
            bd = f.block_size(ctx)
            expect[off + idx * bd: off + (idx + 1) * bd] += \
                weight * f.base_vector(ctx, edge.start, edge.end)
        else:
            expect[off:off + dim] += weight * f.eval(edge, ctx)


def clamped_expectation(model, ctx, ref_labels, weights=None, tabs=None):
    """(expected features, log-partition) over segmentations consistent with
    the reference label sequence (constrained forward-backward)."""
    if tabs is None:
        tabs = compute_tables(model, ctx, weights)
    table, dmax = tabs.table, tabs.dmax
    t_len = ctx.num_frames
    k = len(ref_labels)
    nl = len(model.labels)
    left_dep = model.left_dependent
    lidx = [model._label_index[l] for l in ref_labels]
    lo = [model.min_dur(l) for l in ref_labels]
    hi = [min(model.max_dur(l, t_len), dmax) for l in ref_labels]

    def edge_extra(i, s, e):
        if not left_dep:
            return 0.0
        ls = _left_scores(model, ctx, s, e, ref_labels[i], weights)
        return ls[0] if i == 0 else ls[model._label_index[ref_labels[i - 1]] + 1]

    a = np.full((k + 1, t_len + 1), NEG_INF)
    a[0, 0] = 0.0
    for i in range(1, k + 1):
        li = lidx[i - 1]
        for t in range(1, t_len + 1):
            vals = []
            for d in range(lo[i - 1], min(hi[i - 1], t) + 1):
                s = t - d
                base = table[s, d - 1, li]
                if base == NEG_INF or a[i - 1, s] == NEG_INF:
                    continue
                vals.append(a[i - 1, s] + base + edge_extra(i - 1, s, t - 1))
            if vals:
                a[i, t] = _logsumexp(np.array(vals))
    logz_c = a[k, t_len]
    if logz_c == NEG_INF:
        return None, NEG_INF
    b = np.full((k + 1, t_len + 1), NEG_INF)
    b[k, t_len] = 0.0
    for i in range(k - 1, -1, -1):
        li = lidx[i]
        for t in range(0, t_len + 1):
            vals = []
            for d in range(lo[i], min(hi[i], t_len - t) + 1):
                base = table[t, d - 1, li]
                if base == NEG_INF or b[i + 1, t + d] == NEG_INF:
                    continue
                vals.append(b[i + 1, t + d] + base + edge_extra(i, t, t + d - 1))
            if vals:
                b[i, t] = _logsumexp(np.array(vals))

    expect = np.zeros(model.total_dim)
    # per-position edge posteriors, then vectorized accumulation
    for i in range(k):
        li = lidx[i]
        left = START_LABEL if i == 0 else ref_labels[i - 1]
        pc = np.zeros((t_len, dmax))
        for t in range(t_len):
            if a[i, t] == NEG_INF:
                continue
            for d in range(lo[i], min(hi[i], t_len - t) + 1):
                base = table[t, d - 1, li]
                if base == NEG_INF or b[i + 1, t + d] == NEG_INF:
                    continue
                pc[t, d - 1] = math.exp(a[i, t] + base + edge_extra(i, t, t + d - 1)
                                        + b[i + 1, t + d] - logz_c)
        _accumulate_span_posteriors(model, ctx, tabs, pc, li, left, expect)
    return expect, float(logz_c)


def _accumulate_span_posteriors(model, ctx, tabs, pc, li, left, expect):
    """expect += sum over spans of pc[span] * f(span with right label li)."""
    label = model.labels[li]
    for fi, (f, off, dim) in enumerate(zip(model.features, model.offsets[:-1], model.dims)):
        if isinstance(f, FirstPassFeatures) and fi in tabs.span_matrices:
            idx = f.label_index(label)
            if idx is None:
                continue
            contrib = np.einsum("td,tdb->b", pc, tabs.span_matrices[fi])
            expect[off + idx * f.block: off + (idx + 1) * f.block] += contrib
        else:
            nz = np.argwhere(pc > 1e-14)
            if f.lexicalized:
                idx = f.label_index(label)
                if idx is None:
                    continue
                bd = f.block_size(ctx)
                for t, dm in nz:
                    expect[off + idx * bd: off + (idx + 1) * bd] += \
                        pc[t, dm] * f.base_vector(ctx, t, t + dm)
            else:
                for t, dm in nz:
                    e = SegmentEdge(int(t), int(t + dm), left, label)
                    expect[off:off + dim] += pc[t, dm] * f.eval(e, ctx)


def free_expectation(model, ctx, weights=None, tabs=None):
    """(expected features, logZ) over the full segmentation space."""
    if tabs is None:
        tabs = compute_tables(model, ctx, weights)
    marg, logz = edge_marginals(model, ctx, weights, tabs)
    t_len, dmax, nl = marg.shape
    expect = np.zeros(model.total_dim)
    for fi, (f, off, dim) in enumerate(zip(model.features, model.offsets[:-1], model.dims)):
        if f.left_dependent:
            continue
        if isinstance(f, FirstPassFeatures) and fi in tabs.span_matrices:
            phi = tabs.span_matrices[fi]
            for li, label in enumerate(model.labels):
                idx = f.label_index(label)
                if idx is None:
                    continue
                contrib = np.einsum("td,tdb->b", marg[:, :, li], phi)
                expect[off + idx * f.block: off + (idx + 1) * f.block] += contrib
        elif f.lexicalized:
            bd = f.block_size(ctx)
            nz = np.argwhere(marg.sum(axis=2) > 1e-14)
            for t, dm in nz:
                base = f.base_vector(ctx, t, t + dm)
                for li, label in enumerate(model.labels):
                    idx = f.label_index(label)
                    if idx is not None and marg[t, dm, li] > 0:
                        expect[off + idx * bd: off + (idx + 1) * bd] += \
                            marg[t, dm, li] * base
        else:
            nz = np.argwhere(marg > 1e-14)
            for t, dm, li in nz:
                e = SegmentEdge(int(t), int(t + dm), START_LABEL, model.labels[li])
                expect[off:off + dim] += marg[t, dm, li] * f.eval(e, ctx)
    if model.left_dependent:
        expect += _left_dep_expectation(model, ctx, weights, tabs)
    return expect, logz


def _left_dep_expectation(model, ctx, weights, tabs):
    """Exact (left, right) pair marginals for the left-dependent features;
    runs only when such features are registered (small instances)."""
    alpha, _, tabs = forward_pass(model, ctx, weights, tabs)
    tail = backward_pass(model, ctx, tabs, weights)
    table, dmax = tabs.table, tabs.dmax
    t_len = ctx.num_frames
    nl = len(model.labels)
    trans, init_mask, final_mask = model.masks()
    logz = _logsumexp(alpha[t_len] + final_mask)
    expect = np.zeros(model.total_dim)
    for a in range(t_len):
        for d in range(1, min(dmax, t_len - a) + 1):
            b = a + d
            for li in range(nl):
                base = table[a, d - 1, li]
                if base == NEG_INF or tail[b, li] == NEG_INF:
                    continue
                ls = _left_scores(model, ctx, a, b - 1, model.labels[li], weights)
                pairs = []
                if a == 0:
                    if init_mask[li] > NEG_INF:
                        pairs.append((None, ls[0]))
                else:
                    for lp in range(nl):
                        if trans[lp, li] and alpha[a, lp] > NEG_INF:
                            pairs.append((lp, alpha[a, lp] + ls[lp + 1]))
                for lp, head in pairs:
                    p = math.exp(head + base + tail[b, li] - logz)
                    if p < 1e-14:
                        continue
                    left = START_LABEL if lp is None else model.labels[lp]
                    edge = SegmentEdge(a, b - 1, left, model.labels[li])
                    for f, off, dim in zip(model.features, model.offsets[:-1], model.dims):
                        if f.left_dependent:
                            expect[off:off + dim] += p * f.eval(edge, ctx)
    return expect


def example_gradient(model, example, mode, ref_policy="add-ground-truth"):
    """(CLL gradient, log p(S_ref | O)) for one example."""
    ctx = example.ctx
    if mode == "full":
        tabs = compute_tables(model, ctx)
        emp, logz_c = clamped_expectation(model, ctx, example.ref_labels, tabs=tabs)
        if emp is None:
            raise ValueError("reference labels admit no segmentation")
        exp_free, logz = free_expectation(model, ctx, tabs=tabs)
        return emp - exp_free, logz_c - logz
    if mode != "lattice":
        raise ValueError("mode must be 'full' or 'lattice'")
    lattice = _lattice_with_reference(example, ref_policy)
    if lattice is None:  # dropped example
        return np.zeros(model.total_dim), 0.0
    if example.lattice is not lattice:
        example.lattice = lattice
    feats = getattr(example, "_feat_cache", None)
    if feats is None or len(feats) != len(lattice.hypotheses):
        feats = [candidate_feature_totals(model, ctx, h) for h in lattice.hypotheses]
        example._feat_cache = feats
    scores = np.array([float(np.dot(model.weights, f)) for f in feats])
    ref = list(example.ref_labels)
    in_ref = np.array([list(h.labels) == ref for h in lattice.hypotheses])
    logz = _logsumexp(scores)
    logz_c = _logsumexp(np.where(in_ref, scores, NEG_INF))
    p_free = np.exp(scores - logz)
    p_clamped = np.where(in_ref, np.exp(scores - logz_c), 0.0)
    grad = np.zeros(model.total_dim)
    for pc, pf, f in zip(p_clamped, p_free, feats):
        grad += (pc - pf) * f
    return grad, float(logz_c - logz)


def _lattice_with_reference(example, policy):
    from .hmm import Hypothesis, CandidateLattice
    lattice = example.lattice
    ref = list(example.ref_labels)
    if any(list(h.labels) == ref for h in lattice.hypotheses):
        return lattice
    if policy == "fail":
        raise ReferenceNotInLattice("reference %r not among candidates" % ("".join(ref),))
    if policy == "drop-example":
        return None
    if policy in ("add-ground-truth", "add-forced-alignment"):
        # with the forced-alignment policy the caller puts aligned spans in
        # ref_segments; ground truth uses the annotated segmentation
        hyp = Hypothesis(ref, list(example.ref_segments), 0.0)
        return CandidateLattice(list(lattice.hypotheses) + [hyp], lattice.baseline_frames)
    if policy == "use-best-match":
        from .metrics import align
        best = min(lattice.hypotheses,
                   key=lambda h: align(ref, list(h.labels)).total_errors)
        example.ref_labels = list(best.labels)
        return lattice
    raise ValueError("unknown reference policy %r" % (policy,))


def train_cll(model, data, l1=0.0, l2=0.0, learning_rate=0.5, epochs=10,
              mode="lattice", ref_policy="add-ground-truth"):
    """Subgradient ascent on mean log p(S|O) - l2||w||^2 - l1||w||_1.

    Step size decays as 1/(1+epoch); the L1 term applies as a proximal
    clip-at-zero step per coordinate.  Returns per-epoch objectives."""
    history = []
    n = max(len(data), 1)
    for epoch in range(epochs):
        lr = learning_rate / (1.0 + epoch)
        grad = np.zeros(model.total_dim)
        cll = 0.0
        for example in data:
            g, ll = example_gradient(model, example, mode, ref_policy)
            grad += g
            cll += ll
        grad /= n
        step = model.weights + lr * (grad - 2.0 * l2 * model.weights)
        if l1 > 0:
            step = np.sign(step) * np.maximum(np.abs(step) - lr * l1, 0.0)
        model.weights = step
        history.append(cll / n - l2 * float(np.sum(model.weights ** 2))
                       - l1 * float(np.sum(np.abs(model.weights))))
    return history


def sequence_log_posterior(model, ctx, ref_labels):
    """log p(S_ref | O) in full mode."""
    tabs = compute_tables(model, ctx)
    _, logz_c = clamped_expectation(model, ctx, ref_labels, tabs=tabs)
    if logz_c == NEG_INF:
        return NEG_INF
    return logz_c - log_partition(model, ctx, "full")


# ---------------------------------------------------------------------------
# First-pass N-best, rescoring, and the two-pass cascade

def nbest_decode(model, ctx, n):
    """Top-n labeled segmentations by score; hypotheses are distinct
    (label sequence, segmentation) pairs by construction."""
    from .hmm import Hypothesis, lattice_from_hypotheses
    if model.left_dependent:
        raise NotImplementedError("first-pass N-best requires left-independent features")
    tabs = compute_tables(model, ctx)
    table, dmax = tabs.table, tabs.dmax
    t_len = ctx.num_frames
    nl = len(model.labels)
    trans, init_mask, final_mask = model.masks()
    # rank-n scores per (boundary, label); back[t, li, r] = (start, prev label,
    # prev rank); merged[t, li, r] = r-th best over allowed previous labels
    cell_s = np.full((t_len + 1, nl, n), NEG_INF)
    cell_bp = np.full((t_len + 1, nl, n, 3), -1, dtype=int)
    merged_s = np.full((t_len + 1, nl, n), NEG_INF)
    merged_bp = np.zeros((t_len + 1, nl, n, 2), dtype=int)
    merged_s[0, init_mask == 0.0, 0] = 0.0
    merged_bp[0] = -1
    for t in range(1, t_len + 1):
        n_d = min(dmax, t)
        starts = t - np.arange(1, n_d + 1)
        bases = table[starts, t - starts - 1, :]            # (n_d, nl)
        for li in range(nl):
            cand = bases[:, li][:, None] + merged_s[starts, li, :]   # (n_d, n)
            flat = cand.ravel()
            k = min(n, flat.size)
            top = np.argpartition(flat, -k)[-k:]
            top = top[np.argsort(flat[top], kind="stable")[::-1]]
            good = flat[top] > NEG_INF
            top = top[good]
            cell_s[t, li, :len(top)] = flat[top]
            di, ri = np.unravel_index(top, cand.shape)
            for r, (d_idx, rank) in enumerate(zip(di, ri)):
                a = int(starts[d_idx])
                lp, pr = merged_bp[a, li, rank]
                cell_bp[t, li, r] = (a, lp, pr)
        if t < t_len:
            for li in range(nl):
                allowed = np.where(trans[:, li])[0]
                if len(allowed) == 0:
                    continue
                pool = cell_s[t, allowed, :].ravel()
                k = min(n, pool.size)
                top = np.argpartition(pool, -k)[-k:]
                top = top[np.argsort(pool[top], kind="stable")[::-1]]
                good = pool[top] > NEG_INF
                top = top[good]
                merged_s[t, li, :len(top)] = pool[top]
                pi, ri = np.unravel_index(top, (len(allowed), n))
                merged_bp[t, li, :len(top), 0] = allowed[pi]
                merged_bp[t, li, :len(top), 1] = ri
    finals = []
    for li in range(nl):
        if final_mask[li] == NEG_INF:
            continue
        for r in range(n):
            if cell_s[t_len, li, r] > NEG_INF:
                finals.append((float(cell_s[t_len, li, r]), li, r))
    finals.sort(key=lambda c: -c[0])
    finals = finals[:n]
    if not finals:
        raise ValueError("no legal segmentation for N-best decode")
    hyps = []
    for sc, li, r in finals:
        segments = []
        t = t_len
        while t > 0:
            a, lp, pr = cell_bp[t, li, r]
            segments.append(Segment(model.labels[li], int(a), t - 1))
            t, li, r = int(a), int(lp), int(pr)
        segments.reverse()
        hyps.append(Hypothesis([s.label for s in segments], segments, sc))
    return lattice_from_hypotheses(hyps, t_len)


def rescore(model, lattice, ctx):
    """Best lattice label sequence: argmax over label sequences of the
    log-sum-exp of their candidate segmentation scores.  Ties keep the
    earlier lattice entry.  Returns (labels, best candidate, sequence
    log-score)."""
    if lattice is None or not lattice.hypotheses:
        raise ValueError("empty lattice")
    groups = {}
    order = []
    for h in lattice.hypotheses:
        key = tuple(h.labels)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(h)
    best_key, best_score, best_hyp = None, NEG_INF, None
    for key in order:
        scores = [model.score(list(h.labels), h.segments, ctx) for h in groups[key]]
        seq_score = _logsumexp(np.array(scores))
        if seq_score > best_score:
            best_key, best_score = key, seq_score
            best_hyp = groups[key][int(np.argmax(scores))]
    return list(best_key), best_hyp, float(best_score)


def build_second_pass(first_model, labels, segment_mlp=None):
    """Second-pass model over first-pass lattices: first-pass score,
    segment-classifier posteriors, and peak features."""
    feats = [FirstPassScoreFeature(first_model)]
    dims = [1]
    if segment_mlp is not None:
        f = SegmentClassifierFeature(labels, segment_mlp)
        feats.append(f)
        dims.append(f.dim)
    pk = PeakFeature(labels)
    feats.append(pk)
    dims.append(len(labels))
    model = SegmentalModel(labels, feats, dims,
                           max_duration=first_model.max_duration,
                           min_letter_duration=first_model.min_letter_duration,
                           initial_labels=first_model.initial_labels,
                           final_labels=first_model.final_labels)
    model.weights[0] = 1.0  # start from the first-pass ranking
    return model


def cascade_second_pass(second_model, lattice, ctx):
    """Apply a trained second-pass model over a first-pass lattice."""
    return rescore(second_model, lattice, ctx)
