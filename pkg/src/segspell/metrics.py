"""Letter-error-rate scoring with deletion/substitution/insertion breakdown.

LER = (D + S + I) / N * 100 where N is the reference length and D, S, I
come from a unit-cost Levenshtein alignment.  Corpus scores pool the raw
counts over all word pairs (they are not averages of per-word rates).
"""

from __future__ import annotations

from dataclasses import dataclass, field

GAP = None  # alignment gap marker


@dataclass
class ErrorDecomposition:
    deletions: int
    substitutions: int
    insertions: int
    ref_length: int
    alignment: list = field(default_factory=list)  # (ref symbol | None, hyp symbol | None)

    @property
    def total_errors(self):
        return self.deletions + self.substitutions + self.insertions

    @property
    def matches(self):
        return sum(1 for r, h in self.alignment if r is not None and r == h)


def align(ref, hyp):
    """Unit-cost Levenshtein alignment of two symbol sequences.

    Among minimal-cost alignments the one with the most matches is chosen
    (which makes the D/S/I decomposition canonical and mirror-symmetric);
    the backtrace then prefers match > substitution > deletion > insertion.
    """
    ref = list(ref)
    hyp = list(hyp)
    n, m = len(ref), len(hyp)
    # value per cell: (cost, -matches), lexicographically minimized
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    nmat = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = i
    for j in range(1, m + 1):
        cost[0][j] = j
    for i in range(1, n + 1):
        crow, cprev = cost[i], cost[i - 1]
        mrow, mprev = nmat[i], nmat[i - 1]
        ri = ref[i - 1]
        for j in range(1, m + 1):
            eq = ri == hyp[j - 1]
            best = (cprev[j - 1] + (not eq), -(mprev[j - 1] + eq))
            dele = (cprev[j] + 1, -mprev[j])
            if dele < best:
                best = dele
            ins = (crow[j - 1] + 1, -mrow[j - 1])
            if ins < best:
                best = ins
            crow[j], mrow[j] = best[0], -best[1]
    pairs = []
    i, j = n, m
    d = s = ins_count = 0
    while i > 0 or j > 0:
        here = (cost[i][j], -nmat[i][j])
        if i > 0 and j > 0:
            eq = ref[i - 1] == hyp[j - 1]
            if (cost[i - 1][j - 1] + (not eq), -(nmat[i - 1][j - 1] + eq)) == here:
                if not eq:
                    s += 1
                pairs.append((ref[i - 1], hyp[j - 1]))
                i -= 1
                j -= 1
                continue
        if i > 0 and (cost[i - 1][j] + 1, -nmat[i - 1][j]) == here:
            d += 1
            pairs.append((ref[i - 1], GAP))
            i -= 1
        else:
            ins_count += 1
            pairs.append((GAP, hyp[j - 1]))
            j -= 1
    pairs.reverse()
    return ErrorDecomposition(d, s, ins_count, n, pairs)


def ler(decomp):
    """Letter error rate in percent; undefined for an empty reference."""
    if decomp.ref_length <= 0:
        raise ValueError("LER undefined for empty reference")
    return 100.0 * decomp.total_errors / decomp.ref_length


def score_corpus(pairs):
    """Pooled corpus scores over (ref, hyp) sequence pairs.

    Returns a dict with the corpus LER, pooled counts, D/S/I as percentages
    of the pooled reference length, and a per-word table.
    """
    pooled_d = pooled_s = pooled_i = pooled_n = 0
    table = []
    for idx, (ref, hyp) in enumerate(pairs):
        ref = list(ref)
        if not ref:
            raise ValueError("empty reference at pair %d" % idx)
        dec = align(ref, hyp)
        pooled_d += dec.deletions
        pooled_s += dec.substitutions
        pooled_i += dec.insertions
        pooled_n += dec.ref_length
        table.append({
            "ref": list(ref),
            "hyp": list(hyp),
            "D": dec.deletions,
            "S": dec.substitutions,
            "I": dec.insertions,
            "N": dec.ref_length,
            "ler": ler(dec),
            "alignment": dec.alignment,
        })
    return {
        "ler": 100.0 * (pooled_d + pooled_s + pooled_i) / pooled_n,
        "D": pooled_d,
        "S": pooled_s,
        "I": pooled_i,
        "N": pooled_n,
        "D_rate": 100.0 * pooled_d / pooled_n,
        "S_rate": 100.0 * pooled_s / pooled_n,
        "I_rate": 100.0 * pooled_i / pooled_n,
        "words": table,
    }


def format_alignment(dec):
    """Three-line display of one alignment with D/S/I tags."""
    ref_row, hyp_row, tag_row = [], [], []
    for r, h in dec.alignment:
        rs = "*" if r is None else str(r)
        hs = "*" if h is None else str(h)
        if r is None:
            tag = "I"
        elif h is None:
            tag = "D"
        elif r != h:
            tag = "S"
        else:
            tag = " "
        width = max(len(rs), len(hs), 1)
        ref_row.append(rs.rjust(width))
        hyp_row.append(hs.rjust(width))
        tag_row.append(tag.rjust(width))
    return "REF: %s\nHYP: %s\n     %s" % (" ".join(ref_row), " ".join(hyp_row),
                                          " ".join(tag_row))


def format_report(scores):
    """Human-readable corpus report with per-word alignments."""
    lines = []
    lines.append("corpus LER %.4f%%  (D %d, S %d, I %d, N %d)"
                 % (scores["ler"], scores["D"], scores["S"], scores["I"], scores["N"]))
    lines.append("rates vs reference: D %.4f%%  S %.4f%%  I %.4f%%"
                 % (scores["D_rate"], scores["S_rate"], scores["I_rate"]))
    for i, w in enumerate(scores["words"]):
        lines.append("")
        lines.append("[%d] LER %.2f%% (D %d, S %d, I %d, N %d)"
                     % (i, w["ler"], w["D"], w["S"], w["I"], w["N"]))
        dec = ErrorDecomposition(w["D"], w["S"], w["I"], w["N"], w["alignment"])
        lines.append(format_alignment(dec))
    return "\n".join(lines) + "\n"
