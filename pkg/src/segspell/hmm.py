"""Gaussian-mixture HMM recognizer over tandem observations.

Each letter is a left-to-right chain of three emitting states (no skips);
the begin/end silences get their own longer chains.  Emissions are
diagonal-covariance GMMs.  Decoding runs over a composite graph
silence - letter loop - silence with bigram-LM-weighted letter transitions
and a per-letter insertion penalty; boundary silences may be skipped so
sequences need not start or end with non-signing frames.

Training supports two modes: segmented (each unit trained on its annotated
spans, initialized from a uniform within-span state split) and flat-start
(embedded EM over whole-word composite chains from a global-statistics
initialization).  Per-iteration total log-likelihood is recorded and is
non-decreasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .alphabet import BEGIN_SILENCE, END_SILENCE
from .segments import Segment, check_tiling

LOG_ZERO = -1e30
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class DecodeConfig:
    lm_weight: float = 1.0
    penalty: float = 0.0       # per decoded letter; larger means fewer letters
    beam: float = None         # prune states below best-at-frame minus beam
    nbest: int = 1

    def __post_init__(self):
        if self.nbest < 1:
            raise ValueError("N for N-best must be at least 1")


class NoPathError(RuntimeError):
    pass


class LetterHmm:
    SCHEMA = "segspell-hmm-1"

    def __init__(self, letters, dim, letter_states=3, silence_states=9,
                 components=2, var_floor=1e-4):
        self.letters = tuple(letters)
        self.units = self.letters + (BEGIN_SILENCE, END_SILENCE)
        self.dim = dim
        self.letter_states = letter_states
        self.silence_states = silence_states
        self.components = components
        self.var_floor = var_floor

        counts = [letter_states] * len(self.letters) + [silence_states] * 2
        self.unit_nstates = dict(zip(self.units, counts))
        self.unit_first = {}
        offset = 0
        unit_of = []
        pos_of = []
        for u, c in zip(self.units, counts):
            self.unit_first[u] = offset
            unit_of.extend([u] * c)
            pos_of.extend(range(c))
            offset += c
        self.n_states = offset
        self.state_unit = unit_of
        self.state_pos = np.array(pos_of)
        self.is_last = np.array([pos_of[i] == self.unit_nstates[unit_of[i]] - 1
                                 for i in range(offset)])

        self.means = np.zeros((offset, components, dim))
        self.variances = np.ones((offset, components, dim))
        self.log_weights = np.full((offset, components), -math.log(components))
        # two-outcome transitions per state: stay vs advance (advance from a
        # unit's final state means leaving the unit)
        self.log_self = np.full(offset, math.log(0.5))
        self.log_next = np.full(offset, math.log(0.5))

    def unit_states(self, unit):
        first = self.unit_first[unit]
        return range(first, first + self.unit_nstates[unit])

    def emission_logprobs(self, seq):
        seq = np.asarray(seq, dtype=np.float64)
        if seq.ndim != 2 or seq.shape[1] != self.dim:
            raise ValueError("observation dim %s does not match model dim %d"
                             % (seq.shape[1:], self.dim))
        diff = seq[:, None, None, :] - self.means[None]
        ll = -0.5 * (np.sum(diff * diff / self.variances[None], axis=3)
                     + np.sum(np.log(self.variances), axis=2)[None]
                     + self.dim * LOG_2PI)
        ll = ll + self.log_weights[None]
        m = ll.max(axis=2)
        return m + np.log(np.sum(np.exp(ll - m[:, :, None]), axis=2))

    def emission_logprobs_subset(self, seq, states):
        """Per-component and total emission log-probs for selected states.

        Returns (ll_comp, ll_tot) with shapes (T, k, M) and (T, k)."""
        seq = np.asarray(seq, dtype=np.float64)
        diff = seq[:, None, None, :] - self.means[None, states]
        ll = -0.5 * (np.sum(diff * diff / self.variances[None, states], axis=3)
                     + np.sum(np.log(self.variances[states]), axis=2)[None]
                     + self.dim * LOG_2PI)
        ll = ll + self.log_weights[None, states]
        m = ll.max(axis=2)
        tot = m + np.log(np.sum(np.exp(ll - m[:, :, None]), axis=2))
        return ll, tot

    def to_jsonable(self):
        return {
            "schema": self.SCHEMA,
            "letters": list(self.letters),
            "dim": self.dim,
            "letter_states": self.letter_states,
            "silence_states": self.silence_states,
            "components": self.components,
            "var_floor": self.var_floor,
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "log_weights": self.log_weights.tolist(),
            "log_self": self.log_self.tolist(),
            "log_next": self.log_next.tolist(),
        }

    @classmethod
    def from_jsonable(cls, obj):
        if obj.get("schema") != cls.SCHEMA:
            raise ValueError("unsupported model schema: %r" % obj.get("schema"))
        model = cls(obj["letters"], obj["dim"], obj["letter_states"],
                    obj["silence_states"], obj["components"], obj["var_floor"])
        model.means = np.array(obj["means"])
        model.variances = np.array(obj["variances"])
        model.log_weights = np.array(obj["log_weights"])
        model.log_self = np.array(obj["log_self"])
        model.log_next = np.array(obj["log_next"])
        return model

    def save(self, path):
        from .fileio import write_json
        write_json(path, self.to_jsonable())

    @classmethod
    def load(cls, path):
        from .fileio import read_json
        return cls.from_jsonable(read_json(path))


# ---------------------------------------------------------------------------
# Training

def _global_init(model, sequences):
    allx = np.concatenate([np.asarray(s, dtype=np.float64) for s in sequences])
    mean = allx.mean(axis=0)
    var = np.maximum(allx.var(axis=0), model.var_floor)
    std = np.sqrt(var)
    for m in range(model.components):
        shift = (m - (model.components - 1) / 2.0) * 0.2
        model.means[:, m, :] = mean + shift * std
    model.variances[:] = var
    model.log_weights[:] = -math.log(model.components)
    model.log_self[:] = math.log(0.5)
    model.log_next[:] = math.log(0.5)


def _floored_log(num, den):
    if den <= 0 or num <= 0:
        return None
    return math.log(num / den)


class _Accumulator:
    def __init__(self, model):
        s, m, d = model.means.shape
        self.gamma = np.zeros((s, m))
        self.mean_acc = np.zeros((s, m, d))
        self.sq_acc = np.zeros((s, m, d))
        self.self_count = np.zeros(s)
        self.advance_count = np.zeros(s)

    def apply(self, model):
        occ = self.gamma.sum(axis=1)
        for s in range(len(occ)):
            if occ[s] <= 0:
                continue  # unseen state keeps its current parameters
            w = np.maximum(self.gamma[s], 1e-12)
            model.log_weights[s] = np.log(w / w.sum())
            means = self.mean_acc[s] / w[:, None]
            model.means[s] = means
            model.variances[s] = np.maximum(self.sq_acc[s] / w[:, None] - means ** 2,
                                            model.var_floor)
            total = self.self_count[s] + self.advance_count[s]
            if total > 0:
                p_self = min(max(self.self_count[s] / total, 1e-4), 1 - 1e-4)
                model.log_self[s] = math.log(p_self)
                model.log_next[s] = math.log(1.0 - p_self)


def _chain_forward_backward(model, states, emis, acc):
    """Exact forward-backward on a left-to-right chain entered at its first
    state and exited (one 'advance') after the final frame.  Returns the
    chain log-likelihood and fills the accumulator."""
    k = len(states)
    t_len = emis.shape[0]
    if t_len < k:
        raise NoPathError("span of %d frames cannot traverse %d states" % (t_len, k))
    log_self = model.log_self[states]
    log_next = model.log_next[states]
    alpha = np.full((t_len, k), LOG_ZERO)
    alpha[0, 0] = emis[0, 0]
    for t in range(1, t_len):
        stay = alpha[t - 1] + log_self
        move = np.full(k, LOG_ZERO)
        move[1:] = alpha[t - 1, :-1] + log_next[:-1]
        alpha[t] = emis[t] + np.logaddexp(stay, move)
    ll = alpha[t_len - 1, k - 1] + log_next[k - 1]

    beta = np.full((t_len, k), LOG_ZERO)
    beta[t_len - 1, k - 1] = log_next[k - 1]
    for t in range(t_len - 2, -1, -1):
        stay = beta[t + 1] + log_self + emis[t + 1]
        move = np.full(k, LOG_ZERO)
        move[:-1] = beta[t + 1, 1:] + log_next[:-1] + emis[t + 1, 1:]
        beta[t] = np.logaddexp(stay, move)

    log_gamma = alpha + beta - ll
    gamma = np.exp(np.minimum(log_gamma, 0.0))
    # transition posteriors; np.add.at because composite chains may visit the
    # same global state in several chain positions (repeated letters)
    for t in range(t_len - 1):
        stay = np.exp(np.minimum(alpha[t] + log_self + emis[t + 1] + beta[t + 1] - ll, 0.0))
        np.add.at(acc.self_count, states, stay)
        adv = np.exp(np.minimum(alpha[t, :-1] + log_next[:-1] + emis[t + 1, 1:]
                                + beta[t + 1, 1:] - ll, 0.0))
        np.add.at(acc.advance_count, states[:-1], adv)
    acc.advance_count[states[-1]] += 1.0  # the final exit
    return ll, gamma


def _accumulate_span(model, unit_states_list, seq, acc):
    """Forward-backward over a (possibly composite) chain and GMM stats."""
    states = np.concatenate(unit_states_list)
    ll_comp, emis = model.emission_logprobs_subset(seq, states)
    ll, gamma = _chain_forward_backward(model, states, emis, acc)
    resp = gamma[:, :, None] * np.exp(np.minimum(ll_comp - emis[:, :, None], 0.0))
    np.add.at(acc.gamma, states, resp.sum(axis=0))
    x = np.asarray(seq, dtype=np.float64)
    np.add.at(acc.mean_acc, states, np.einsum("tsm,td->smd", resp, x))
    np.add.at(acc.sq_acc, states, np.einsum("tsm,td->smd", resp, x * x))
    return ll


def _segmented_init(model, sequences, segmentations):
    """Closed-form fit from a uniform within-span state split."""
    s, m, d = model.means.shape
    frames = [[] for _ in range(s)]
    runs = np.zeros(s)
    seen_units = set()
    for seq, segs in zip(sequences, segmentations):
        seq = np.asarray(seq, dtype=np.float64)
        check_tiling(segs, len(seq))
        for seg in segs:
            if seg.label not in model.unit_nstates:
                raise ValueError("segment label %r has no model" % (seg.label,))
            seen_units.add(seg.label)
            span = seq[seg.start:seg.end + 1]
            parts = np.array_split(span, model.unit_nstates[seg.label])
            for j, part in enumerate(parts):
                if len(part) == 0:
                    continue
                state = model.unit_first[seg.label] + j
                frames[state].append(part)
                runs[state] += 1
    allx = np.concatenate([np.asarray(s_, dtype=np.float64) for s_ in sequences])
    gmean, gvar = allx.mean(axis=0), np.maximum(allx.var(axis=0), model.var_floor)
    gstd = np.sqrt(gvar)
    for state in range(s):
        if frames[state]:
            x = np.concatenate(frames[state])
            mean = x.mean(axis=0)
            var = np.maximum(x.var(axis=0), model.var_floor) if len(x) > 1 else gvar
            n = len(x)
            p_self = min(max((n - runs[state]) / n if n > 0 else 0.5, 1e-4), 1 - 1e-4)
        else:
            # units with no annotated spans are pushed far from the data so
            # decoding never hypothesizes them
            mean, var, p_self = gmean + 100.0 * gstd, gvar, 0.5
        std = np.sqrt(var)
        for comp in range(m):
            shift = (comp - (m - 1) / 2.0) * 0.2
            model.means[state, comp] = mean + shift * (std if frames[state] else gstd)
        model.variances[state] = var
        model.log_weights[state] = -math.log(m)
        model.log_self[state] = math.log(p_self)
        model.log_next[state] = math.log(1.0 - p_self)


def train_em(sequences, transcriptions, letters, dim, segmentations=None,
             iters=2, letter_states=3, silence_states=9, components=2,
             var_floor=1e-4):
    """Train a LetterHmm; returns (model, per-iteration log-likelihoods).

    With segmentations, each unit is trained on its own spans (segmented
    mode); without, embedded EM runs over whole-word composite chains
    (flat-start).  iters=0 returns the mode's initialization.
    """
    if not sequences:
        raise ValueError("no training sequences")
    if len(sequences) != len(transcriptions):
        raise ValueError("sequence/transcription count mismatch")
    model = LetterHmm(letters, dim, letter_states, silence_states,
                      components, var_floor)
    if segmentations is not None:
        if len(segmentations) != len(sequences):
            raise ValueError("sequence/segmentation count mismatch")
        _segmented_init(model, sequences, segmentations)
    else:
        _global_init(model, sequences)

    loglik_curve = []
    for _ in range(iters):
        acc = _Accumulator(model)
        total = 0.0
        if segmentations is not None:
            for seq, segs in zip(sequences, segmentations):
                seq = np.asarray(seq, dtype=np.float64)
                for seg in segs:
                    if seg.duration < model.unit_nstates[seg.label]:
                        continue  # span shorter than its chain; fixed set, so
                                  # skipping keeps the EM curve comparable
                    states = [np.array(list(model.unit_states(seg.label)))]
                    total += _accumulate_span(model, states, seq[seg.start:seg.end + 1], acc)
        else:
            for seq, word in zip(sequences, transcriptions):
                chain = [np.array(list(model.unit_states(BEGIN_SILENCE)))]
                chain += [np.array(list(model.unit_states(l))) for l in word]
                chain += [np.array(list(model.unit_states(END_SILENCE)))]
                total += _accumulate_span(model, chain, np.asarray(seq, dtype=np.float64), acc)
        acc.apply(model)
        loglik_curve.append(total)
    if iters > 0 and segmentations is None:
        # flat-start: units never seen in any transcription keep their broad
        # global-statistics emissions; push them away from the data so they
        # are never decoded
        occ = acc.gamma.sum(axis=1)
        unseen = occ == 0
        if unseen.any():
            allx = np.concatenate([np.asarray(s, dtype=np.float64) for s in sequences])
            offset = 100.0 * np.sqrt(np.maximum(allx.var(axis=0), model.var_floor))
            model.means[unseen] += offset[None, None, :]
    return model, loglik_curve


# ---------------------------------------------------------------------------
# Decoding graph

def build_decode_graph(model, lm, cfg):
    """Dense log-transition matrix plus initial/final vectors.

    Letter-to-letter moves carry the weighted bigram log-probability and the
    insertion penalty; boundary silences are skippable, in which case the
    LM boundary terms attach to the direct entry/exit."""
    s = model.n_states
    a = np.full((s, s), LOG_ZERO)
    idx = np.arange(s)
    a[idx, idx] = model.log_self
    inner = idx[~model.is_last]
    a[inner, inner + 1] = model.log_next[inner]

    lw = cfg.lm_weight
    pen = cfg.penalty
    beg_last = model.unit_first[BEGIN_SILENCE] + model.unit_nstates[BEGIN_SILENCE] - 1
    end_first = model.unit_first[END_SILENCE]
    end_last = end_first + model.unit_nstates[END_SILENCE] - 1

    pi = np.full(s, LOG_ZERO)
    omega = np.full(s, LOG_ZERO)
    pi[model.unit_first[BEGIN_SILENCE]] = 0.0
    omega[end_last] = model.log_next[end_last]

    for l1 in model.letters:
        last1 = model.unit_first[l1] + model.unit_nstates[l1] - 1
        exit1 = model.log_next[last1]
        for l2 in model.letters:
            if model.unit_first[l2] == last1:
                # single-state unit: re-entry is indistinguishable from the
                # self-loop, which keeps its within-unit probability
                continue
            a[last1, model.unit_first[l2]] = (exit1 + lw * lm.logprob(l1, l2) - pen)
        a[last1, end_first] = exit1 + lw * lm.logprob(l1, END_SILENCE)
        # skipped end silence: leave the graph straight from the letter
        omega[last1] = exit1 + lw * lm.logprob(l1, END_SILENCE)
        # entry from begin silence, and direct entry when it is skipped
        a[beg_last, model.unit_first[l1]] = (model.log_next[beg_last]
                                             + lw * lm.logprob(BEGIN_SILENCE, l1) - pen)
        pi[model.unit_first[l1]] = lw * lm.logprob(BEGIN_SILENCE, l1) - pen
    return a, pi, omega


def _states_to_segments(model, state_path):
    segs = []
    start = 0
    for t in range(1, len(state_path) + 1):
        boundary = (t == len(state_path)
                    or model.state_unit[state_path[t]] != model.state_unit[state_path[t - 1]]
                    or state_path[t] < state_path[t - 1])
        if boundary:
            segs.append(Segment(model.state_unit[state_path[start]], start, t - 1))
            start = t
    return segs


def viterbi_decode(model, lm, seq, cfg=None):
    """Best path through the composite decode graph.

    Returns (letter sequence without silences, segmentation including any
    decoded boundary silences, total log score)."""
    if cfg is None:
        cfg = DecodeConfig()
    a, pi, omega = build_decode_graph(model, lm, cfg)
    emis = model.emission_logprobs(seq)
    t_len = len(emis)
    score = pi + emis[0]
    bps = np.zeros((t_len, model.n_states), dtype=int)
    for t in range(1, t_len):
        cand = score[:, None] + a
        bps[t] = np.argmax(cand, axis=0)
        score = cand[bps[t], np.arange(model.n_states)] + emis[t]
        if cfg.beam is not None:
            score = np.where(score < score.max() - cfg.beam, LOG_ZERO, score)
    final = score + omega
    best_end = int(np.argmax(final))
    best = float(final[best_end])
    if best <= LOG_ZERO / 2:
        raise NoPathError("no legal path (sequence too short for any letter sequence?)")
    path = [best_end]
    for t in range(t_len - 1, 0, -1):
        path.append(int(bps[t, path[-1]]))
    path.reverse()
    segs = _states_to_segments(model, path)
    letters = [s.label for s in segs if s.label not in (BEGIN_SILENCE, END_SILENCE)]
    return letters, segs, best


def forced_align(model, seq, letters, include_silences="optional"):
    """Best state path constrained to the given letter sequence.

    Boundary silences are optional-length ('optional'), mandatory ('always'),
    or absent ('never').  Scoring uses emissions and HMM transitions only.
    Returns the segmentation (spans tile the sequence)."""
    if not letters:
        raise ValueError("empty letter sequence")
    seq = np.asarray(seq, dtype=np.float64)
    t_len = len(seq)
    units = [BEGIN_SILENCE] + list(letters) + [END_SILENCE]
    states = np.concatenate([np.array(list(model.unit_states(u))) for u in units])
    k = len(states)
    unit_id = np.concatenate([np.full(model.unit_nstates[u], i)
                              for i, u in enumerate(units)])
    emis = model.emission_logprobs(seq)[:, states]
    log_self = model.log_self[states]
    log_next = model.log_next[states]

    nb = model.unit_nstates[BEGIN_SILENCE]
    ne = model.unit_nstates[END_SILENCE]
    if include_silences == "always":
        starts, ends = [0], [k - 1]
    elif include_silences == "optional":
        starts, ends = [0, nb], [k - 1, k - 1 - ne]
    elif include_silences == "never":
        starts, ends = [nb], [k - 1 - ne]
    else:
        raise ValueError("include_silences must be optional/always/never")
    if t_len < len(list(letters)) * model.letter_states:
        raise NoPathError("sequence of %d frames too short for %d letters"
                          % (t_len, len(list(letters))))

    score = np.full(k, LOG_ZERO)
    for s0 in starts:
        score[s0] = emis[0, s0]
    bps = np.zeros((t_len, k), dtype=int)
    for t in range(1, t_len):
        stay = score + log_self
        move = np.full(k, LOG_ZERO)
        move[1:] = score[:-1] + log_next[:-1]
        take_move = move > stay
        bps[t] = np.where(take_move, np.arange(k) - 1, np.arange(k))
        score = np.maximum(stay, move) + emis[t]
    finals = {e: score[e] + model.log_next[states[e]] for e in ends}
    best_end = max(finals, key=lambda e: (finals[e], -e))
    if finals[best_end] <= LOG_ZERO / 2:
        raise NoPathError("no alignment path for the constrained sequence")
    path = [best_end]
    for t in range(t_len - 1, 0, -1):
        path.append(int(bps[t, path[-1]]))
    path.reverse()
    segs = []
    start = 0
    for t in range(1, t_len + 1):
        if t == t_len or unit_id[path[t]] != unit_id[path[t - 1]]:
            segs.append(Segment(units[unit_id[path[start]]], start, t - 1))
            start = t
    return segs, float(finals[best_end])


# ---------------------------------------------------------------------------
# N-best lattices

@dataclass
class Hypothesis:
    labels: list
    segments: list
    score: float

    @property
    def letters(self):
        return [l for l in self.labels if l not in (BEGIN_SILENCE, END_SILENCE)]


@dataclass
class CandidateLattice:
    hypotheses: list
    baseline_frames: list

    def __post_init__(self):
        if not self.hypotheses:
            raise ValueError("empty lattice")


def lattice_from_hypotheses(hyps, num_frames):
    from .segments import frame_labels
    return CandidateLattice(hyps, frame_labels(hyps[0].segments, num_frames))


def nbest(model, lm, seq, cfg):
    """Top-N distinct (label sequence, segmentation) hypotheses by score.

    Time-synchronous rank-N search; partial paths that realize the same
    labeled segmentation prefix are merged keeping the best score, so
    within-unit state wiggles never produce duplicate hypotheses."""
    n = cfg.nbest
    a, pi, omega = build_decode_graph(model, lm, cfg)
    emis = model.emission_logprobs(seq)
    t_len = len(emis)
    s_count = model.n_states
    # prefix table: id -> (parent_id, unit, start, end); 0 is the empty root
    prefixes = {0: None}
    intern = {}

    def close(prefix_id, unit, start, end):
        key = (prefix_id, unit, start, end)
        pid = intern.get(key)
        if pid is None:
            pid = len(prefixes)
            intern[key] = pid
            prefixes[pid] = key
        return pid

    # cells[s]: dict (prefix_id, entry_t) -> score
    cells = [dict() for _ in range(s_count)]
    for s in range(s_count):
        if pi[s] > LOG_ZERO / 2:
            cells[s][(0, 0)] = pi[s] + emis[0, s]

    cross_by_src = {}
    for s in range(s_count):
        if not model.is_last[s]:
            continue
        for t in range(s_count):
            if model.state_pos[t] == 0 and t != s and a[s, t] > LOG_ZERO / 2:
                cross_by_src.setdefault(s, []).append(t)

    for t in range(1, t_len):
        nxt = [dict() for _ in range(s_count)]
        for s in range(s_count):
            cell = cells[s]
            if not cell:
                continue
            stay = a[s, s]
            for (pid, entry), sc in cell.items():
                # stay in the same state
                if stay > LOG_ZERO / 2:
                    key = (pid, entry)
                    val = sc + stay + emis[t, s]
                    if val > nxt[s].get(key, LOG_ZERO * 2):
                        nxt[s][key] = val
                # advance within the unit
                if not model.is_last[s]:
                    key = (pid, entry)
                    val = sc + a[s, s + 1] + emis[t, s + 1]
                    if val > nxt[s + 1].get(key, LOG_ZERO * 2):
                        nxt[s + 1][key] = val
                else:
                    for dst in cross_by_src.get(s, ()):
                        new_pid = close(pid, model.state_unit[s], entry, t - 1)
                        key = (new_pid, t)
                        val = sc + a[s, dst] + emis[t, dst]
                        if val > nxt[dst].get(key, LOG_ZERO * 2):
                            nxt[dst][key] = val
        for s in range(s_count):
            if len(nxt[s]) > n:
                top = sorted(nxt[s].items(), key=lambda kv: -kv[1])[:n]
                nxt[s] = dict(top)
        cells = nxt

    finals = {}
    for s in range(s_count):
        if omega[s] <= LOG_ZERO / 2:
            continue
        for (pid, entry), sc in cells[s].items():
            full = close(pid, model.state_unit[s], entry, t_len - 1)
            val = sc + omega[s]
            if val > finals.get(full, LOG_ZERO * 2):
                finals[full] = val
    if not finals:
        raise NoPathError("no legal path for N-best search")
    ranked = sorted(finals.items(), key=lambda kv: -kv[1])[:n]
    hyps = []
    for pid, sc in ranked:
        segs = []
        node = prefixes[pid]
        while node is not None:
            parent, unit, start, end = node
            segs.append(Segment(unit, start, end))
            node = prefixes[parent]
        segs.reverse()
        hyps.append(Hypothesis([g.label for g in segs], segs, float(sc)))
    return lattice_from_hypotheses(hyps, t_len)


# ---------------------------------------------------------------------------
# Lattice serialization (JSON lines, one hypothesis per line)

def save_lattice(path, lattice):
    import json
    from .fileio import atomic_write_text
    from .segments import to_jsonable
    lines = [json.dumps({"labels": h.labels, "spans": to_jsonable(h.segments),
                         "score": h.score}, sort_keys=True)
             for h in lattice.hypotheses]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_lattice(path):
    import json
    from .segments import from_jsonable
    hyps = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            segs = from_jsonable(obj["spans"])
            hyps.append(Hypothesis([s.label for s in segs], segs, float(obj["score"])))
    num_frames = hyps[0].segments[-1].end + 1
    return lattice_from_hypotheses(hyps, num_frames)
