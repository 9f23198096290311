"""Experiment engine: tandem recognizer assembly, splits, adaptation runs,
and the full evaluation protocol (dependent / independent / adapted rows).

A recognizer bundle is (frame classifier, PCA pair, letter HMM, bigram LM)
plus the frontend settings used to build tandem observations.  The
protocol mirrors the recording-and-evaluation design: per-signer 10-fold
signer-dependent runs reported over 8 folds, leave-one-signer-out
signer-independent runs, and signer-adapted runs that fine-tune only the
frame classifiers on a fraction of the test signer's data labeled either
from ground truth or from forced alignments.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .alphabet import BEGIN_SILENCE, END_SILENCE, LetterAlphabet
from .classifier import (AdaptationModel, FramePosteriors, TrainConfig, adapt,
                         build_tandem_observation, train_mlp)
from .hmm import DecodeConfig, forced_align, nbest, train_em, viterbi_decode
from .lm import train_bigram
from .metrics import score_corpus
from .segments import frame_labels, letters_only
from .vision import fit_pca, stack_windows


@dataclass
class FrontendConfig:
    window: int = 5
    pca_classifier: int = 12
    pca_image: int = 10
    transform: str = "linear"     # 'linear' or 'log' classifier outputs
    mode: str = "letter"          # tandem classifier block: 'letter'/'feature'


@dataclass
class PipelineConfig:
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    arch: tuple = (64, 64)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(
        learning_rate=0.02, momentum=0.9, batch_size=100, max_epochs=14,
        weight_decay=1e-5, dropout=0.0, validation_fraction=0.1))
    adapt_train: TrainConfig = field(default_factory=lambda: TrainConfig(
        learning_rate=0.01, momentum=0.9, batch_size=100, max_epochs=16,
        weight_decay=1e-5, dropout=0.0, validation_fraction=0.0))
    letter_states: int = 3
    silence_states: int = 9
    gmm_components: int = 2
    em_iters: int = 2
    decode: DecodeConfig = field(default_factory=lambda: DecodeConfig(
        lm_weight=1.0, penalty=0.0, nbest=8))
    folds: int = 10
    report_folds: int = 8
    adapt_fraction: float = 0.2
    seed: int = 20160825


@dataclass
class Recognizer:
    classifier: object           # MlpModel or AdaptationModel
    pca_post: object
    pca_image: object
    hmm: object
    lm: object
    cfg: PipelineConfig

    def posteriors(self, word):
        windows = stack_windows(word.descriptors, self.cfg.frontend.window)
        return self.classifier.predict_proba(windows)

    def observations(self, word):
        post = self.posteriors(word)
        fe = self.cfg.frontend
        rows = [build_tandem_observation(FramePosteriors(letters=post[t]),
                                         word.descriptors[t], fe.mode,
                                         self.pca_post, self.pca_image, fe.transform)
                for t in range(len(post))]
        return np.asarray(rows)

    def with_classifier(self, classifier):
        return replace(self, classifier=classifier)


def class_labels(alphabet):
    return list(alphabet.symbols)


def frame_dataset(words, alphabet, window):
    """Stacked windows and integer frame labels from ground-truth
    segmentations, pooled over words."""
    xs, ys = [], []
    for w in words:
        xs.append(stack_windows(w.descriptors, window))
        labels = frame_labels(w.segments, w.num_frames)
        ys.extend(alphabet.letter_index(l) for l in labels)
    return np.concatenate(xs), np.asarray(ys, dtype=int)


def train_frame_classifier(words, alphabet, cfg, seed_offset=0):
    x, y = frame_dataset(words, alphabet, cfg.frontend.window)
    tcfg = replace(cfg.train, seed=cfg.seed + seed_offset)
    model, history = train_mlp((x, y), tcfg, list(cfg.arch), class_labels(alphabet))
    return model, history


def fit_frontend_pcas(words, classifier, cfg):
    """Separate PCA models for the classifier block and the image block,
    fit on the training portion."""
    posts, descs = [], []
    for w in words:
        windows = stack_windows(w.descriptors, cfg.frontend.window)
        posts.append(classifier.predict_proba(windows))
        descs.append(w.descriptors)
    posts = np.concatenate(posts)
    descs = np.concatenate(descs)
    if cfg.frontend.transform == "log":
        posts = np.log(np.maximum(posts, 1e-10))
    k1 = min(cfg.frontend.pca_classifier, posts.shape[1], len(posts) - 1)
    k2 = min(cfg.frontend.pca_image, descs.shape[1], len(descs) - 1)
    return fit_pca(posts, k1), fit_pca(descs, k2)


def build_recognizer(train_words, alphabet, cfg, lm_words=None, seed_offset=0):
    """Train the full tandem recognizer on one training set."""
    classifier, _ = train_frame_classifier(train_words, alphabet, cfg, seed_offset)
    pca_post, pca_img = fit_frontend_pcas(train_words, classifier, cfg)
    rec = Recognizer(classifier, pca_post, pca_img, None, None, cfg)
    seqs = [rec.observations(w) for w in train_words]
    hmm_model, _ = train_em(
        seqs, [w.letters for w in train_words], list(alphabet.letters)
        + list(alphabet.doubled), seqs[0].shape[1],
        segmentations=[w.segments for w in train_words],
        iters=cfg.em_iters, letter_states=cfg.letter_states,
        silence_states=cfg.silence_states, components=cfg.gmm_components)
    words_for_lm = lm_words if lm_words is not None else \
        sorted({w.word for w in train_words})
    lm = train_bigram(words_for_lm, alphabet)
    return replace(rec, hmm=hmm_model, lm=lm)


def decode_words(recognizer, words, threads=1):
    """Tandem Viterbi decode; returns [(reference letters, hypothesis
    letters)] with boundary silences stripped.  Decoding is pure per
    sequence, so worker threads collect results in input order and the
    output is independent of the thread count."""
    def one(w):
        obs = recognizer.observations(w)
        letters, _, _ = viterbi_decode(recognizer.hmm, recognizer.lm, obs,
                                       recognizer.cfg.decode)
        return (w.letters, letters)

    if threads and threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, words))
    return [one(w) for w in words]


def evaluate(recognizer, words):
    return score_corpus(decode_words(recognizer, words))


# ---------------------------------------------------------------------------
# Splits

def dependent_folds(words, n_folds, seed):
    """Deterministic shuffle of one signer's word tokens into folds."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xF01D)))
    order = rng.permutation(len(words))
    folds = [[] for _ in range(n_folds)]
    for i, idx in enumerate(order):
        folds[i % n_folds].append(words[idx])
    return folds


def adaptation_split(words, fraction, seed):
    """Adaptation subset vs evaluation remainder for one signer."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xADA7)))
    order = rng.permutation(len(words))
    n_adapt = int(round(fraction * len(words)))
    adapt_idx = set(order[:n_adapt].tolist())
    adapt_words = [words[i] for i in sorted(adapt_idx)]
    eval_words = [words[i] for i in range(len(words)) if i not in adapt_idx]
    return adapt_words, eval_words


# ---------------------------------------------------------------------------
# Adaptation

def ground_truth_frame_labels(word, alphabet):
    return [alphabet.letter_index(l) for l in frame_labels(word.segments, word.num_frames)]


def forced_alignment_frame_labels(recognizer, word, alphabet):
    obs = recognizer.observations(word)
    segs, _ = forced_align(recognizer.hmm, obs, word.letters)
    return [alphabet.letter_index(l) for l in frame_labels(segs, word.num_frames)]


def adapt_recognizer(recognizer, adapt_words, alphabet, mode="fine-tune",
                     label_source="GT", seed_offset=0):
    """Adapt the frame classifier only; PCA, HMM and LM stay fixed."""
    cfg = recognizer.cfg
    xs, ys = [], []
    for w in adapt_words:
        xs.append(stack_windows(w.descriptors, cfg.frontend.window))
        if label_source == "GT":
            ys.extend(ground_truth_frame_labels(w, alphabet))
        elif label_source == "FA":
            ys.extend(forced_alignment_frame_labels(recognizer, w, alphabet))
        else:
            raise ValueError("label_source must be 'GT' or 'FA'")
    x = np.concatenate(xs)
    y = np.asarray(ys, dtype=int)
    base = recognizer.classifier
    if isinstance(base, AdaptationModel):
        base = base.base
    tcfg = replace(cfg.adapt_train, seed=cfg.seed + 7000 + seed_offset)
    static_dim = adapt_words[0].descriptors.shape[1]
    adapted, history = adapt(base, (x, y), mode, tcfg,
                             cfg.frontend.window, static_dim)
    return recognizer.with_classifier(adapted), history


def realign_adapt(recognizer, adapt_words, eval_words, alphabet, iters=2):
    """Iterated forced-alignment adaptation: align with the current
    recognizer, fine-tune the classifier from its signer-independent
    initialization on those labels, re-align with the adapted recognizer,
    and repeat.  Returns (final recognizer, per-iteration LER list)."""
    lers = []
    current = recognizer
    for it in range(iters):
        adapted, _ = adapt_recognizer(current, adapt_words, alphabet,
                                      mode="fine-tune", label_source="FA",
                                      seed_offset=100 + it)
        # the recognizer (HMM/LM/PCA) never changes; only the classifier does
        adapted = replace(adapted, cfg=recognizer.cfg)
        lers.append(evaluate(adapted, eval_words)["ler"])
        current = adapted
    return current, lers


# ---------------------------------------------------------------------------
# Protocol

def split_by_signer(corpus):
    out = {}
    for s in corpus.signers:
        out[s.signer_id] = corpus.by_signer(s.signer_id)
    return out


def run_protocol(corpus, cfg=None, alphabet=None, rows=("independent", "FA", "GT", "dependent"),
                 progress=None):
    """The full evaluation protocol on a synthetic corpus.

    Emits a table shaped like the headline letter-error-rate table: one row
    per training condition (signer-independent, forced-alignment adapted,
    ground-truth adapted, signer-dependent), one column per signer plus the
    mean, each cell a letter error rate with its D/S/I decomposition.
    """
    cfg = cfg or PipelineConfig()
    alphabet = alphabet or LetterAlphabet()
    by_signer = split_by_signer(corpus)
    signer_ids = [s.signer_id for s in corpus.signers]
    lm_words = corpus.word_list
    results = {row: {} for row in rows}
    details = {row: {} for row in rows}

    def note(msg):
        if progress:
            progress(msg)

    if "dependent" in rows:
        for si, sid in enumerate(signer_ids):
            folds = dependent_folds(by_signer[sid], cfg.folds, cfg.seed + si)
            fold_scores = []
            pooled = []
            for f in range(cfg.report_folds):
                test = folds[f]
                train = [w for g, fold in enumerate(folds) if g != f
                         and g != (f + 1) % cfg.folds for w in fold]
                rec = build_recognizer(train, alphabet, cfg, lm_words,
                                       seed_offset=si * 100 + f)
                pairs = decode_words(rec, test)
                pooled.extend(pairs)
                fold_scores.append(score_corpus(pairs)["ler"])
                note("dependent %s fold %d: LER %.2f" % (sid, f, fold_scores[-1]))
            scores = score_corpus(pooled)
            results["dependent"][sid] = scores["ler"]
            details["dependent"][sid] = scores

    independents = {}
    if any(r in rows for r in ("independent", "FA", "GT")):
        for si, sid in enumerate(signer_ids):
            train = [w for other in signer_ids if other != sid
                     for w in by_signer[other]]
            independents[sid] = build_recognizer(train, alphabet, cfg, lm_words,
                                                 seed_offset=1000 + si)
            note("independent recognizer for %s trained" % sid)

    if "independent" in rows:
        for sid in signer_ids:
            scores = evaluate(independents[sid], by_signer[sid])
            results["independent"][sid] = scores["ler"]
            details["independent"][sid] = scores
            note("independent %s: LER %.2f" % (sid, scores["ler"]))

    for row, source in (("GT", "GT"), ("FA", "FA")):
        if row not in rows:
            continue
        for si, sid in enumerate(signer_ids):
            adapt_words, eval_words = adaptation_split(
                by_signer[sid], cfg.adapt_fraction, cfg.seed + si)
            adapted, _ = adapt_recognizer(independents[sid], adapt_words,
                                          alphabet, "fine-tune", source,
                                          seed_offset=si)
            scores = evaluate(adapted, eval_words)
            results[row][sid] = scores["ler"]
            details[row][sid] = scores
            note("%s-adapted %s: LER %.2f" % (source, sid, scores["ler"]))

    for row in rows:
        vals = [results[row][sid] for sid in signer_ids]
        results[row]["Mean"] = float(np.mean(vals))
    return {"rows": list(rows), "signers": signer_ids,
            "ler": results, "details": {
                row: {sid: {k: details[row][sid][k]
                            for k in ("ler", "D_rate", "S_rate", "I_rate", "N")}
                      for sid in signer_ids}
                for row in rows}}


ROW_TITLES = {"independent": "Signer-independent",
              "FA": "Forced align.",
              "GT": "Ground truth",
              "dependent": "Signer-dependent"}


def format_protocol_table(report):
    signers = report["signers"]
    header = ["%-20s" % "Condition"] + ["%8s" % s for s in signers] + ["%8s" % "Mean"]
    lines = ["".join(header)]
    for row in report["rows"]:
        cells = ["%-20s" % ROW_TITLES.get(row, row)]
        cells += ["%8.2f" % report["ler"][row][s] for s in signers]
        cells += ["%8.2f" % report["ler"][row]["Mean"]]
        lines.append("".join(cells))
    lines.append("")
    lines.append("D/S/I decomposition (%% of reference letters):")
    for row in report["rows"]:
        for s in signers:
            d = report["details"][row][s]
            lines.append("  %-18s %s  D %6.2f  S %6.2f  I %6.2f"
                         % (ROW_TITLES.get(row, row), s,
                            d["D_rate"], d["S_rate"], d["I_rate"]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Lattices for the segmental models

def nbest_lattices(recognizer, words, n=None):
    out = []
    cfg = recognizer.cfg.decode
    if n is not None:
        cfg = replace(cfg, nbest=n)
    for w in words:
        obs = recognizer.observations(w)
        out.append(nbest(recognizer.hmm, recognizer.lm, obs, cfg))
    return out


# ---------------------------------------------------------------------------
# Segmental models: first-pass training, rescoring, and the cascade

@dataclass
class ScrfConfig:
    max_duration: int = 40
    min_letter_duration: int = 2
    learning_rate: float = 2.0
    epochs: int = 10
    l1: float = 0.0
    l2: float = 1e-4
    nbest: int = 8
    init_scale: float = 8.0
    rescoring_kinds: tuple = ("mean", "max")
    ref_policy: str = "add-ground-truth"


def scrf_labels(alphabet):
    return list(alphabet.letters) + list(alphabet.doubled) \
        + [BEGIN_SILENCE, END_SILENCE]


def make_context(recognizer, word, lm=None, baseline_frames=None):
    from .scrf import FeatureContext
    return FeatureContext(word.num_frames,
                          letter_posteriors=recognizer.posteriors(word),
                          descriptors=word.descriptors,
                          lm=lm, baseline_frames=baseline_frames)


def _has_adjacent_repeat(labels):
    return any(a == b for a, b in zip(labels, labels[1:]))


def build_firstpass_model(alphabet, num_classes, scfg):
    """First-pass segmental model; the average-posterior weight of each
    label's own classifier class starts positive, so the initial model is
    already a per-segment posterior decoder that training then refines."""
    from .scrf import FirstPassFeatures, SegmentalModel
    labels = scrf_labels(alphabet)
    feat = FirstPassFeatures(labels, num_classes, scfg.max_duration)
    model = SegmentalModel(labels, [feat], [len(labels) * feat.block],
                          max_duration=scfg.max_duration,
                          min_letter_duration=scfg.min_letter_duration,
                          initial_labels={BEGIN_SILENCE},
                          final_labels={END_SILENCE})
    for li, label in enumerate(labels):
        if li < num_classes:
            model.weights[li * feat.block + li] = scfg.init_scale
    return model


def train_firstpass(recognizer, train_words, alphabet, scfg=None):
    """First-pass segmental model trained by full-space CLL.

    Words whose reference label sequence has adjacent identical letters are
    dropped: a segment boundary must change the label, so such references
    admit no segmentation (doubled-letter tokens cover that case when
    enabled)."""
    from .scrf import TrainingExample, train_cll
    scfg = scfg or ScrfConfig()
    num_classes = len(recognizer.classifier.class_names)
    model = build_firstpass_model(alphabet, num_classes, scfg)
    data = []
    for w in train_words:
        if _has_adjacent_repeat(w.labels):
            continue
        ctx = make_context(recognizer, w)
        data.append(TrainingExample(ctx, list(w.labels), list(w.segments)))
    history = train_cll(model, data, l1=scfg.l1, l2=scfg.l2,
                        learning_rate=scfg.learning_rate, epochs=scfg.epochs,
                        mode="full")
    return model, history


def firstpass_decode(model, recognizer, words):
    from .scrf import viterbi as scrf_viterbi
    pairs = []
    for w in words:
        ctx = make_context(recognizer, w)
        labels, _, _ = scrf_viterbi(model, ctx)
        pairs.append((w.letters, letters_only(labels)))
    return pairs


def build_rescoring_model(alphabet, num_classes, scfg):
    """Rescoring segmental model over baseline lattices: LM probability,
    baseline-consistency, lexicalized classifier span statistics, and peak
    detection features."""
    from .scrf import (BaselineFeature, ClassifierStatFeature, LmFeature,
                       PeakFeature, SegmentalModel)
    labels = scrf_labels(alphabet)
    feats = [LmFeature(), BaselineFeature()]
    dims = [1, 1]
    for kind in scfg.rescoring_kinds:
        f = ClassifierStatFeature(labels, kind)
        feats.append(f)
        per = 3 if kind.startswith("div") else 1
        dims.append(len(labels) * per * num_classes)
    pk = PeakFeature(labels)
    feats.append(pk)
    dims.append(len(labels))
    model = SegmentalModel(labels, feats, dims,
                           max_duration=scfg.max_duration,
                           min_letter_duration=scfg.min_letter_duration)
    model.weights[0] = 1.0   # start from the LM
    model.weights[1] = 0.5   # and trust the baseline a little
    return model


def train_rescoring(recognizer, train_words, alphabet, scfg=None, lattices=None):
    """Rescoring SCRF trained by lattice-restricted CLL over baseline
    N-best lattices (generated here when not supplied)."""
    from .scrf import TrainingExample, train_cll
    scfg = scfg or ScrfConfig()
    num_classes = len(recognizer.classifier.class_names)
    model = build_rescoring_model(alphabet, num_classes, scfg)
    if lattices is None:
        lattices = nbest_lattices(recognizer, train_words, scfg.nbest)
    data = []
    for w, lattice in zip(train_words, lattices):
        ctx = make_context(recognizer, w, lm=recognizer.lm,
                           baseline_frames=lattice.baseline_frames)
        data.append(TrainingExample(ctx, list(w.labels), list(w.segments), lattice))
    history = train_cll(model, data, l1=scfg.l1, l2=scfg.l2,
                        learning_rate=scfg.learning_rate, epochs=scfg.epochs,
                        mode="lattice", ref_policy=scfg.ref_policy)
    return model, history


def rescore_words(model, recognizer, words, lattices=None):
    from .scrf import rescore
    if lattices is None:
        lattices = nbest_lattices(recognizer, words)
    pairs = []
    for w, lattice in zip(words, lattices):
        ctx = make_context(recognizer, w, lm=recognizer.lm,
                           baseline_frames=lattice.baseline_frames)
        labels, _, _ = rescore(model, lattice, ctx)
        pairs.append((w.letters, letters_only(labels)))
    return pairs


def load_scrf(path, recognizer, alphabet, scfg=None):
    """Rebuild a saved segmental model: the feature registry comes from the
    stored manifest (first-pass or rescoring feature set), then the weights
    load with a manifest check."""
    from .fileio import read_json
    scfg = scfg or ScrfConfig()
    obj = read_json(path)
    names = [m["name"] for m in obj.get("manifest", [])]
    num_classes = len(recognizer.classifier.class_names)
    scfg = replace(scfg, max_duration=obj.get("max_duration", scfg.max_duration),
                   min_letter_duration=obj.get("min_letter_duration",
                                               scfg.min_letter_duration))
    if names == ["firstpass"]:
        model = build_firstpass_model(alphabet, num_classes, scfg)
    else:
        kinds = tuple(n.split("_")[-1] for n in names
                      if n.startswith("classifier_letter_"))
        kinds = tuple("div_" + k if k in ("s", "m") else k for k in kinds)
        model = build_rescoring_model(alphabet, num_classes,
                                      replace(scfg, rescoring_kinds=kinds))
    model.load_weights(path)
    return model


def train_segment_classifier(recognizer, train_words, alphabet, cfg, seed_offset=0):
    """Segment-level classifier on ground-truth segments: input is the
    fixed-dimension summary (means of the span's thirds of the frame
    posteriors), output the segment label."""
    from .scrf import SegmentClassifierFeature
    labels = scrf_labels(alphabet)
    probe = SegmentClassifierFeature(labels, None)
    xs, ys = [], []
    index = {l: i for i, l in enumerate(labels)}
    for w in train_words:
        ctx = make_context(recognizer, w)
        for seg in w.segments:
            xs.append(probe.summary(ctx, seg.start, seg.end))
            ys.append(index[seg.label])
    tcfg = replace(cfg.adapt_train, seed=cfg.seed + 9000 + seed_offset)
    model, _ = train_mlp((np.asarray(xs), np.asarray(ys, dtype=int)), tcfg,
                         list(cfg.arch), labels)
    return model


def run_cascade(recognizer_train, recognizer_eval, train_words, eval_words,
                alphabet, cfg, scfg=None):
    """Two-pass discriminative segmental cascade.

    The first-pass model and the second-pass features train on the training
    signers' recognizer; evaluation runs with the (possibly adapted)
    recognizer for the test signer.  Returns first- and second-pass LERs.
    """
    from .scrf import (TrainingExample, build_second_pass, nbest_decode,
                       rescore, train_cll)
    scfg = scfg or ScrfConfig()
    first, _ = train_firstpass(recognizer_train, train_words, alphabet, scfg)

    seg_mlp = train_segment_classifier(recognizer_train, train_words, alphabet, cfg)
    second = build_second_pass(first, scrf_labels(alphabet), seg_mlp)
    data = []
    for w in train_words:
        if _has_adjacent_repeat(w.labels):
            continue
        ctx = make_context(recognizer_train, w)
        lattice = nbest_decode(first, ctx, scfg.nbest)
        data.append(TrainingExample(ctx, list(w.labels), list(w.segments), lattice))
    train_cll(second, data, l1=scfg.l1, l2=scfg.l2,
              learning_rate=scfg.learning_rate, epochs=scfg.epochs,
              mode="lattice", ref_policy=scfg.ref_policy)

    first_pairs, second_pairs = [], []
    for w in eval_words:
        ctx = make_context(recognizer_eval, w)
        lattice = nbest_decode(first, ctx, scfg.nbest)
        first_pairs.append((w.letters, letters_only(list(lattice.hypotheses[0].labels))))
        labels, _, _ = rescore(second, lattice, ctx)
        second_pairs.append((w.letters, letters_only(labels)))
    return {"first_ler": score_corpus(first_pairs)["ler"],
            "second_ler": score_corpus(second_pairs)["ler"],
            "first_pairs": first_pairs, "second_pairs": second_pairs}


# ---------------------------------------------------------------------------
# Recognizer bundles on disk

def save_recognizer(rec, directory):
    import os
    from .fileio import write_json
    os.makedirs(directory, exist_ok=True)
    rec.classifier.save(os.path.join(directory, "classifier.json"))
    write_json(os.path.join(directory, "pca.json"),
               {"classifier_block": rec.pca_post.to_jsonable(),
                "image_block": rec.pca_image.to_jsonable()})
    rec.hmm.save(os.path.join(directory, "hmm.json"))
    rec.lm.save(os.path.join(directory, "lm.arpa"))
    write_json(os.path.join(directory, "frontend.json"), {
        "window": rec.cfg.frontend.window,
        "pca_classifier": rec.cfg.frontend.pca_classifier,
        "pca_image": rec.cfg.frontend.pca_image,
        "transform": rec.cfg.frontend.transform,
        "mode": rec.cfg.frontend.mode,
        "decode": {"lm_weight": rec.cfg.decode.lm_weight,
                   "penalty": rec.cfg.decode.penalty,
                   "nbest": rec.cfg.decode.nbest},
    })


def load_recognizer(directory, cfg=None):
    import os
    from .classifier import load_classifier
    from .fileio import read_json
    from .hmm import LetterHmm
    from .lm import load_arpa
    from .vision import PcaModel
    cfg = cfg or PipelineConfig()
    fe = read_json(os.path.join(directory, "frontend.json"))
    cfg = replace(cfg,
                  frontend=FrontendConfig(window=fe["window"],
                                          pca_classifier=fe["pca_classifier"],
                                          pca_image=fe["pca_image"],
                                          transform=fe["transform"],
                                          mode=fe["mode"]),
                  decode=DecodeConfig(lm_weight=fe["decode"]["lm_weight"],
                                      penalty=fe["decode"]["penalty"],
                                      nbest=fe["decode"]["nbest"]))
    classifier = load_classifier(os.path.join(directory, "classifier.json"))
    pcas = read_json(os.path.join(directory, "pca.json"))
    return Recognizer(classifier,
                      PcaModel.from_jsonable(pcas["classifier_block"]),
                      PcaModel.from_jsonable(pcas["image_block"]),
                      LetterHmm.load(os.path.join(directory, "hmm.json")),
                      load_arpa(os.path.join(directory, "lm.arpa")), cfg)
