"""Command-line surface: reproducible experiment pipelines.

Every subcommand writes its artifacts atomically plus a run-record JSON
(config hash, seed, input hashes, wall time).  Exit codes: 0 on success,
2 on configuration errors, 3 on data errors (a missing upstream artifact
names the subcommand that produces it).  The environment variable
SEGSPELL_SEED overrides the configured seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import pipeline, synthgen
from .alphabet import LetterAlphabet
from .classifier import TrainConfig, load_classifier
from .fileio import read_json, sha256_file, write_json, atomic_write_text
from .hmm import DecodeConfig
from .metrics import format_report, score_corpus
from .pipeline import (FrontendConfig, PipelineConfig, ScrfConfig,
                       load_recognizer, save_recognizer)
from .segments import to_jsonable


class ConfigError(Exception):
    exit_code = 2


class DataError(Exception):
    exit_code = 3


def require(path, producer):
    if not os.path.exists(path):
        raise DataError("missing artifact %s: run `segspell %s` first" % (path, producer))
    return path


# ---------------------------------------------------------------------------
# Configuration

def load_config(path=None, overrides=None):
    cfg = {}
    if path:
        try:
            cfg = read_json(require(path, "(write a config file)"))
        except json.JSONDecodeError as e:
            raise ConfigError("config %s is not valid JSON: %s" % (path, e))
    if overrides:
        cfg.update({k: v for k, v in overrides.items() if v is not None})
    seed_env = os.environ.get("SEGSPELL_SEED")
    if seed_env is not None:
        try:
            cfg["seed"] = int(seed_env)
        except ValueError:
            raise ConfigError("SEGSPELL_SEED must be an integer, got %r" % seed_env)
    return cfg


def pipeline_config(cfg):
    try:
        fe = cfg.get("frontend", {})
        cl = cfg.get("classifier", {})
        hm = cfg.get("hmm", {})
        ad = cfg.get("adaptation", {})
        dec = hm.get("decode", {})
        frac = float(ad.get("fraction", 0.2))
        if not 0.0 < frac < 1.0:
            raise ConfigError("adaptation fraction must be in (0, 1), got %r" % frac)
        pcfg = PipelineConfig(
            frontend=FrontendConfig(
                window=int(fe.get("window", 5)),
                pca_classifier=int(fe.get("pca_classifier", 12)),
                pca_image=int(fe.get("pca_image", 10)),
                transform=fe.get("transform", "linear"),
                mode=fe.get("mode", "letter")),
            arch=tuple(cl.get("arch", (64, 64))),
            train=TrainConfig(
                learning_rate=float(cl.get("learning_rate", 0.02)),
                momentum=float(cl.get("momentum", 0.9)),
                batch_size=int(cl.get("batch_size", 100)),
                max_epochs=int(cl.get("max_epochs", 14)),
                weight_decay=float(cl.get("weight_decay", 1e-5)),
                dropout=float(cl.get("dropout", 0.0)),
                validation_fraction=float(cl.get("validation_fraction", 0.1))),
            adapt_train=TrainConfig(
                learning_rate=float(ad.get("learning_rate", 0.01)),
                momentum=float(ad.get("momentum", 0.9)),
                batch_size=int(ad.get("batch_size", 100)),
                max_epochs=int(ad.get("max_epochs", 16)),
                weight_decay=float(ad.get("weight_decay", 1e-5)),
                dropout=0.0, validation_fraction=0.0),
            letter_states=int(hm.get("letter_states", 3)),
            silence_states=int(hm.get("silence_states", 9)),
            gmm_components=int(hm.get("gmm_components", 2)),
            em_iters=int(hm.get("em_iters", 2)),
            decode=DecodeConfig(lm_weight=float(dec.get("lm_weight", 1.0)),
                                penalty=float(dec.get("penalty", 0.0)),
                                nbest=int(dec.get("nbest", 8))),
            folds=int(cfg.get("folds", 10)),
            report_folds=int(cfg.get("report_folds", 8)),
            adapt_fraction=frac,
            seed=int(cfg.get("seed", 20160825)))
        return pcfg
    except (TypeError, ValueError) as e:
        raise ConfigError("bad configuration value: %s" % e)


def scrf_config(cfg):
    sc = cfg.get("scrf", {})
    return ScrfConfig(
        max_duration=int(sc.get("max_duration", 40)),
        min_letter_duration=int(sc.get("min_letter_duration", 2)),
        learning_rate=float(sc.get("learning_rate", 2.0)),
        epochs=int(sc.get("epochs", 10)),
        l1=float(sc.get("l1", 0.0)),
        l2=float(sc.get("l2", 1e-4)),
        nbest=int(sc.get("nbest", 8)),
        init_scale=float(sc.get("init_scale", 8.0)),
        ref_policy=sc.get("ref_policy", "add-ground-truth"))


def generator_config(cfg):
    g = cfg.get("generator", {})
    kwargs = {}
    for key in ("letter_duration", "doubled_scale", "jitter", "wobble_circles",
                "wobble_step", "dwell_ramp", "peak_hold", "min_transition",
                "appearance_strength", "bias_strength", "speed_ratio", "image_size"):
        if key in g:
            val = g[key]
            kwargs[key] = tuple(val) if isinstance(val, list) else val
    return synthgen.GeneratorConfig(**kwargs)


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def write_run_record(out, subcommand, cfg, inputs, outputs, t0):
    record = {
        "subcommand": subcommand,
        "config_hash": config_hash(cfg),
        "seed": cfg.get("seed", 20160825),
        "inputs": {p: sha256_file(p) for p in inputs if os.path.isfile(p)},
        "outputs": sorted(outputs),
        "wall_time_s": round(time.time() - t0, 3),
    }
    path = os.path.join(out, "run_record.json") if os.path.isdir(out) \
        else out + ".run.json"
    write_json(path, record)


# ---------------------------------------------------------------------------
# Corpus helpers

def builtin_wordlist(which):
    from importlib import resources
    name = {"1": "wordlist1.txt", "2": "wordlist2.txt"}[which]
    with resources.files("segspell.data").joinpath(name).open("r", encoding="utf-8") as f:
        return [w.strip() for w in f if w.strip()]


def resolve_words(args, cfg):
    data = cfg.get("data", {})
    wordlist = getattr(args, "wordlist", None) or data.get("wordlist", "1")
    if os.path.exists(str(wordlist)):
        with open(wordlist, "r", encoding="utf-8") as f:
            words = [w.strip().upper() for w in f if w.strip()]
    elif str(wordlist) in ("1", "2"):
        words = builtin_wordlist(str(wordlist))
    elif str(wordlist) == "both":
        words = builtin_wordlist("1") + builtin_wordlist("2")
    else:
        raise ConfigError("unknown wordlist %r (use 1, 2, both, or a file)" % (wordlist,))
    n = getattr(args, "words", None) or data.get("words")
    if n:
        words = words[:int(n)]
    if not words:
        raise ConfigError("empty word list")
    return words


def load_corpus_words(directory, signers=None):
    require(os.path.join(directory, "manifest.json"), "gen-data")
    manifest, words = synthgen.load_corpus(directory)
    stems = [e["stem"] for e in manifest["entries"]]
    if signers:
        keep = set(signers.split(","))
        pairs = [(w, s) for w, s in zip(words, stems) if w.signer_id in keep]
        if not pairs:
            raise DataError("no sequences for signers %s in %s" % (signers, directory))
        words = [w for w, _ in pairs]
        stems = [s for _, s in pairs]
    manifest = dict(manifest)
    manifest["stems"] = stems
    return manifest, words


def group_words(words):
    out = {}
    for w in words:
        out.setdefault(w.signer_id, []).append(w)
    return out


def write_hyps(path, pairs_with_ids):
    lines = ["%s %s" % (wid, "".join(h)) for wid, h in pairs_with_ids]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_labeled_file(path):
    out = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            parts = line.split(None, 1)
            out[parts[0]] = list(parts[1]) if len(parts) > 1 else []
    return out


# ---------------------------------------------------------------------------
# Subcommands

def cmd_gen_data(args):
    t0 = time.time()
    cfg = load_config(args.config, {"seed": args.seed})
    words = resolve_words(args, cfg)
    seed = int(cfg.get("seed", 20160825))
    gcfg = generator_config(cfg)
    n_signers = args.signers or int(cfg.get("data", {}).get("signers", 4))
    reps = args.reps or int(cfg.get("data", {}).get("repetitions", 2))
    signers = synthgen.make_signers(n_signers, seed, gcfg)
    corpus = synthgen.generate_corpus(words, signers, seed, repetitions=reps, cfg=gcfg)
    synthgen.save_corpus(corpus, args.out)
    outputs = [os.path.join(args.out, "manifest.json")]
    if args.images:
        from .fileio import write_png
        img_dir = os.path.join(args.out, "images")
        os.makedirs(img_dir, exist_ok=True)
        for i, w in enumerate(corpus.words):
            signer = next(s for s in signers if s.signer_id == w.signer_id)
            frames, masks = synthgen.render_frames(w, signer, gcfg)
            stem = os.path.join(img_dir, "%s_w%04d" % (w.signer_id, i))
            os.makedirs(stem, exist_ok=True)
            for t, (frame, mask) in enumerate(zip(frames, masks)):
                write_png(os.path.join(stem, "f%04d.png" % t), frame)
                write_png(os.path.join(stem, "m%04d.png" % t),
                          (mask * 255).astype(np.uint8))
    print("wrote %d sequences (%d signers x %d words x %d reps) to %s"
          % (len(corpus.words), n_signers, len(words), reps, args.out))
    write_run_record(args.out, "gen-data", cfg, [], outputs, t0)
    return 0


def cmd_extract_features(args):
    t0 = time.time()
    cfg = load_config(args.config, {"seed": args.seed})
    manifest, words = load_corpus_words(args.corpus)
    img_root = require(os.path.join(args.corpus, "images"), "gen-data --images")
    from .fileio import read_png, write_matrix
    from .vision import (HogConfig, fit_hand_color_model, hog_descriptor,
                         segment_hand, fit_pca, apply_pca)
    hog_cfg = HogConfig()
    k = int(cfg.get("frontend", {}).get("hog_pca", 40))
    per_signer_model = {}
    all_desc = []
    word_desc = []
    entries = {e["stem"]: e for e in manifest["entries"]}
    stems = sorted(entries)
    for stem in stems:
        img_dir = os.path.join(img_root, stem)
        require(img_dir, "gen-data --images")
        signer = entries[stem]["signer"]
        frames = []
        masks = []
        t = 0
        while os.path.exists(os.path.join(img_dir, "f%04d.png" % t)):
            frames.append(read_png(os.path.join(img_dir, "f%04d.png" % t)))
            masks.append(read_png(os.path.join(img_dir, "m%04d.png" % t)) > 127)
            t += 1
        if signer not in per_signer_model:
            per_signer_model[signer] = fit_hand_color_model(frames[:30], masks[:30])
        model = per_signer_model[signer]
        descs = []
        for frame in frames:
            mask = segment_hand(frame, model)
            if not mask.any():
                descs.append(np.zeros(hog_cfg.dimension))
            else:
                descs.append(hog_descriptor(frame, mask, hog_cfg))
        word_desc.append((stem, np.asarray(descs)))
        all_desc.append(word_desc[-1][1])
    stacked = np.concatenate(all_desc)
    pca = fit_pca(stacked, min(k, stacked.shape[1], len(stacked) - 1))
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    for stem, descs in word_desc:
        reduced = apply_pca(pca, descs)
        out_path = os.path.join(args.out, stem + ".fmat")
        write_matrix(out_path, reduced)
        meta = read_json(os.path.join(args.corpus, stem + ".json"))
        write_json(os.path.join(args.out, stem + ".json"), meta)
        outputs.append(out_path)
    write_json(os.path.join(args.out, "manifest.json"), manifest)
    print("extracted HOG+PCA descriptors for %d sequences into %s"
          % (len(word_desc), args.out))
    write_run_record(args.out, "extract-features", cfg,
                     [os.path.join(args.corpus, "manifest.json")], outputs, t0)
    return 0


def cmd_train_lm(args):
    t0 = time.time()
    cfg = load_config(args.config, {"seed": args.seed})
    words = resolve_words(args, cfg)
    from .lm import train_bigram
    lm = train_bigram(words, LetterAlphabet())
    lm.save(args.out)
    print("trained bigram LM on %d words -> %s" % (len(words), args.out))
    write_run_record(args.out, "train-lm", cfg, [], [args.out], t0)
    return 0


def cmd_train_classifier(args):
    t0 = time.time()
    cfg = load_config(args.config, {"seed": args.seed})
    pcfg = pipeline_config(cfg)
    _, words = load_corpus_words(args.corpus, args.signers)
    alphabet = LetterAlphabet()
    model, history = pipeline.train_frame_classifier(words, alphabet, pcfg)
    model.save(args.out)
    outputs = [args.out]
    if args.curve:
        from .classifier import history_csv
        atomic_write_text(args.curve, history_csv(history))
        outputs.append(args.curve)
    print("trained classifier on %d sequences -> %s (final val error %.3f)"
          % (len(words), args.out, history[-1]["val_error"] if history else float("nan")))
    write_run_record(args.out, "train-classifier", cfg,
                     [os.path.join(args.corpus, "manifest.json")], outputs, t0)
    return 0


def cmd_train_hmm(args):
    t0 = time.time()
    cfg = load_config(args.config, {"seed": args.seed})
    pcfg = pipeline_config(cfg)
    _, words = load_corpus_words(args.corpus, args.signers)
    alphabet = LetterAlphabet()
    classifier = load_classifier(require(args.classifier, "train-classifier"))
    pca_post, pca_img = pipeline.fit_frontend_pcas(words, classifier, pcfg)
    rec = pipeline.Recognizer(classifier, pca_post, pca_img, None, None, pcfg)
    seqs = [rec.observations(w) for w in words]
    from .hmm import train_em
    hmm_model, loglik = train_em(
        seqs, [w.letters for w in words],
        list(alphabet.letters) + list(alphabet.doubled), seqs[0].shape[1],
        segmentations=[w.segments for w in words], iters=pcfg.em_iters,
        letter_states=pcfg.letter_states, silence_states=pcfg.silence_states,
        components=pcfg.gmm_components)
    if args.lm:
        from .lm import load_arpa
        lm = load_arpa(require(args.lm, "train-lm"))
    else:
        from .lm import train_bigram
        lm = train_bigram(sorted({w.word for w in words}), alphabet)
    rec = replace(rec, hmm=hmm_model, lm=lm)
    save_recognizer(rec, args.out)
    print("trained HMM on %d sequences (EM log-lik %s) -> %s"
          % (len(words), ["%.0f" % v for v in loglik], args.out))
    write_run_record(args.out, "train-hmm", cfg,
                     [os.path.join(args.corpus, "manifest.json"), args.classifier],
                     [os.path.join(args.out, "hmm.json")], t0)
    return 0


def cmd_adapt(args):
    t0 = time.time()
    cfg = load_config(args.config, {"seed": args.seed})
    pcfg = pipeline_config(cfg)
    rec = load_recognizer(require(args.recognizer, "train-hmm"), pcfg)
    _, words = load_corpus_words(args.corpus, args.signer)
    alphabet = LetterAlphabet()
    fraction = args.fraction or pcfg.adapt_fraction
    adapt_words, _ = pipeline.adaptation_split(words, fraction, pcfg.seed)
    adapted, history = pipeline.adapt_recognizer(rec, adapt_words, alphabet,
                                                 mode=args.mode,
                                                 label_source=args.labels)
    save_recognizer(adapted, args.out)
    print("adapted (%s, %s labels, %.0f%% = %d words) -> %s; loss %.4f -> %.4f"
          % (args.mode, args.labels, 100 * fraction, len(adapt_words), args.out,
             history[0]["loss"], min(h["loss"] for h in history)))
    write_run_record(args.out, "adapt", cfg,
                     [os.path.join(args.recognizer, "classifier.json"),
                      os.path.join(args.corpus, "manifest.json")],
                     [os.path.join(args.out, "classifier.json")], t0)
    return 0


def cmd_align(args):
    t0 = time.time()
    cfg = load_config(args.config, {"seed": args.seed})
    pcfg = pipeline_config(cfg)
    rec = load_recognizer(require(args.recognizer, "train-hmm"), pcfg)
    manifest, words = load_corpus_words(args.corpus, args.signers)
    from .hmm import forced_align
    lines = []
    stems = manifest["stems"]
    for w, stem in zip(words, stems):
        obs = rec.observations(w)
        segs, score = forced_align(rec.hmm, obs, w.letters)
        lines.append(json.dumps({"stem": stem, "word": w.word,
                                 "spans": to_jsonable(segs), "score": score},
                                sort_keys=True))
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    print("aligned %d sequences -> %s" % (len(words), args.out))
    write_run_record(args.out, "align", cfg,
                     [os.path.join(args.corpus, "manifest.json")], [args.out], t0)
    return 0


def cmd_nbest(args):
    t0 = time.time()
    cfg = load_config(args.config, {"seed": args.seed})
    pcfg = pipeline_config(cfg)
    rec = load_recognizer(require(args.recognizer, "train-hmm"), pcfg)
    manifest, words = load_corpus_words(args.corpus, args.signers)
    from .hmm import save_lattice
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    lattices = pipeline.nbest_lattices(rec, words, args.n)
    stems = manifest["stems"]
    for stem, lattice in zip(stems, lattices):
        path = os.path.join(args.out, stem + ".lat.jsonl")
        save_lattice(path, lattice)
        outputs.append(path)
    print("wrote %d lattices (N=%d) to %s" % (len(lattices), args.n or pcfg.decode.nbest, args.out))
    write_run_record(args.out, "nbest", cfg,
                     [os.path.join(args.corpus, "manifest.json")], outputs, t0)
    return 0


def cmd_train_scrf(args):
    t0 = time.time()
    cfg = load_config(args.config, {"seed": args.seed})
    pcfg = pipeline_config(cfg)
    scfg = scrf_config(cfg)
    rec = load_recognizer(require(args.recognizer, "train-hmm"), pcfg)
    _, words = load_corpus_words(args.corpus, args.signers)
    alphabet = LetterAlphabet()
    if args.mode == "firstpass":
        model, history = pipeline.train_firstpass(rec, words, alphabet, scfg)
    elif args.mode == "rescoring":
        model, history = pipeline.train_rescoring(rec, words, alphabet, scfg)
    else:
        raise ConfigError("scrf mode must be firstpass or rescoring")
    model.save(args.out)
    print("trained %s SCRF on %d sequences -> %s (objective %s)"
          % (args.mode, len(words), args.out,
             ["%.3f" % h for h in history[-3:]]))
    write_run_record(args.out, "train-scrf", cfg,
                     [os.path.join(args.corpus, "manifest.json")], [args.out], t0)
    return 0


def cmd_decode(args):
    t0 = time.time()
    cfg = load_config(args.config, {"seed": args.seed})
    pcfg = pipeline_config(cfg)
    scfg = scrf_config(cfg)
    rec = load_recognizer(require(args.recognizer, "train-hmm"), pcfg)
    manifest, words = load_corpus_words(args.corpus, args.signers)
    alphabet = LetterAlphabet()
    stems = manifest["stems"]
    hyps = []
    if args.scrf and args.lattices:
        require(args.scrf, "train-scrf")
        model = pipeline.load_scrf(args.scrf, rec, alphabet, scfg)
        from .hmm import load_lattice
        from .scrf import rescore
        from .segments import letters_only
        for w, stem in zip(words, stems):
            lattice = load_lattice(require(
                os.path.join(args.lattices, stem + ".lat.jsonl"), "nbest"))
            ctx = pipeline.make_context(rec, w, lm=rec.lm,
                                        baseline_frames=lattice.baseline_frames)
            labels, _, _ = rescore(model, lattice, ctx)
            hyps.append((stem, letters_only(labels)))
    elif args.scrf:
        require(args.scrf, "train-scrf")
        model = pipeline.load_scrf(args.scrf, rec, alphabet, scfg)
        from .scrf import viterbi as scrf_viterbi
        from .segments import letters_only
        for w, stem in zip(words, stems):
            ctx = pipeline.make_context(rec, w)
            labels, _, _ = scrf_viterbi(model, ctx)
            hyps.append((stem, letters_only(labels)))
    else:
        pairs = pipeline.decode_words(rec, words, threads=getattr(args, "threads", 1))
        for (ref, hyp), stem in zip(pairs, stems):
            hyps.append((stem, hyp))
    write_hyps(args.out, hyps)
    outputs = [args.out]
    if args.refs:
        write_hyps(args.refs, [(stem, w.letters) for stem, w in zip(stems, words)])
        outputs.append(args.refs)
    print("decoded %d sequences -> %s" % (len(words), args.out))
    write_run_record(args.out, "decode", cfg,
                     [os.path.join(args.corpus, "manifest.json")], outputs, t0)
    return 0


def cmd_cascade(args):
    t0 = time.time()
    cfg = load_config(args.config, {"seed": args.seed})
    pcfg = pipeline_config(cfg)
    scfg = scrf_config(cfg)
    _, words = load_corpus_words(args.corpus)
    alphabet = LetterAlphabet()
    by_signer = group_words(words)
    eval_signer = args.eval_signer
    if eval_signer not in by_signer:
        raise DataError("signer %s not in corpus (have %s)"
                        % (eval_signer, ",".join(sorted(by_signer))))
    train_ids = [s for s in sorted(by_signer) if s != eval_signer]
    train_words = [w for s in train_ids for w in by_signer[s]]
    rec_train = pipeline.build_recognizer(train_words, alphabet, pcfg)
    adapt_words, eval_words = pipeline.adaptation_split(
        by_signer[eval_signer], pcfg.adapt_fraction, pcfg.seed)
    rec_eval, _ = pipeline.adapt_recognizer(rec_train, adapt_words, alphabet,
                                            "fine-tune", "GT")
    result = pipeline.run_cascade(rec_train, rec_eval, train_words, eval_words,
                                  alphabet, pcfg, scfg)
    report = {"first_pass_ler": result["first_ler"],
              "second_pass_ler": result["second_ler"],
              "eval_signer": eval_signer, "train_signers": train_ids,
              "eval_sequences": len(eval_words)}
    write_json(args.out, report)
    print("cascade: first pass LER %.2f%% -> second pass %.2f%% (%s)"
          % (result["first_ler"], result["second_ler"], args.out))
    write_run_record(args.out, "cascade", cfg,
                     [os.path.join(args.corpus, "manifest.json")], [args.out], t0)
    return 0


def cmd_realign_adapt(args):
    t0 = time.time()
    cfg = load_config(args.config, {"seed": args.seed})
    pcfg = pipeline_config(cfg)
    rec = load_recognizer(require(args.recognizer, "train-hmm"), pcfg)
    _, words = load_corpus_words(args.corpus, args.signer)
    alphabet = LetterAlphabet()
    adapt_words, eval_words = pipeline.adaptation_split(words, pcfg.adapt_fraction,
                                                        pcfg.seed)
    _, lers = pipeline.realign_adapt(rec, adapt_words, eval_words, alphabet,
                                     iters=args.iters)
    report = {"signer": args.signer, "iterations": args.iters,
              "ler_per_iteration": lers}
    write_json(args.out, report)
    print("realign-adapt %s: " % args.signer
          + "  ".join("iter %d LER %.2f%%" % (i + 1, l) for i, l in enumerate(lers)))
    write_run_record(args.out, "realign-adapt", cfg,
                     [os.path.join(args.corpus, "manifest.json")], [args.out], t0)
    return 0


def cmd_score(args):
    t0 = time.time()
    cfg = load_config(args.config, {"seed": args.seed})
    refs = read_labeled_file(require(args.ref, "decode --refs"))
    hyps = read_labeled_file(require(args.hyp, "decode"))
    missing = sorted(set(refs) - set(hyps))
    if missing:
        raise DataError("hypotheses missing for ids: %s" % ", ".join(missing[:5]))
    pairs = [(refs[k], hyps[k]) for k in sorted(refs)]
    scores = score_corpus(pairs)
    print("LER %.4f%%  (D %d, S %d, I %d, N %d)"
          % (scores["ler"], scores["D"], scores["S"], scores["I"], scores["N"]))
    outputs = []
    if args.json:
        slim = dict(scores)
        slim["words"] = [{k: v for k, v in w.items() if k != "alignment"}
                         for w in scores["words"]]
        write_json(args.json, slim)
        outputs.append(args.json)
    if args.report:
        atomic_write_text(args.report, format_report(scores))
        outputs.append(args.report)
    if outputs:
        write_run_record(outputs[0], "score", cfg, [args.ref, args.hyp], outputs, t0)
    return 0


def cmd_run_protocol(args):
    t0 = time.time()
    cfg = load_config(args.config, {"seed": args.seed})
    pcfg = pipeline_config(cfg)
    manifest, words = load_corpus_words(args.corpus)
    gcfg = generator_config(cfg)
    signers = synthgen.make_signers(len(manifest["signers"]), manifest["seed"], gcfg)
    corpus = synthgen.Corpus(words, signers, manifest["word_list"],
                             manifest["seed"], gcfg)
    if len(manifest["signers"]) < 2:
        raise DataError("protocol needs at least 2 signers for leave-one-out")
    rows = tuple(args.rows.split(",")) if args.rows else ("independent", "FA", "GT", "dependent")
    progress = print if args.verbose else None
    report = pipeline.run_protocol(corpus, pcfg, rows=rows, progress=progress)
    table = pipeline.format_protocol_table(report)
    write_json(args.out, report)
    table_path = os.path.splitext(args.out)[0] + ".txt"
    atomic_write_text(table_path, table)
    print(table)
    write_run_record(args.out, "run-protocol", cfg,
                     [os.path.join(args.corpus, "manifest.json")],
                     [args.out, table_path], t0)
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(
        prog="segspell",
        description="Fingerspelling sequence recognition experiments on "
                    "synthetic data: tandem GMM-HMM and segmental CRF "
                    "recognizers with signer adaptation.")
    p.add_argument("--threads", type=int, default=os.cpu_count(),
                   help="worker threads for per-sequence work")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="experiment config JSON")
        sp.add_argument("--seed", type=int, help="override the config seed")

    sp = sub.add_parser("gen-data", help="generate a synthetic corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--words", type=int, help="use the first N list words")
    sp.add_argument("--wordlist", help="1, 2, both, or a word file")
    sp.add_argument("--signers", type=int)
    sp.add_argument("--reps", type=int)
    sp.add_argument("--images", action="store_true", help="also render toy frames")
    common(sp)

    sp = sub.add_parser("extract-features", help="hand segmentation + HOG + PCA "
                                                 "descriptors from rendered frames")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)
    common(sp)

    sp = sub.add_parser("train-lm", help="train the bigram letter LM (ARPA out)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--wordlist", help="1, 2, both, or a word file")
    sp.add_argument("--words", type=int)
    common(sp)

    sp = sub.add_parser("train-classifier", help="train the frame MLP")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--signers", help="comma-separated signer ids to train on")
    sp.add_argument("--curve", help="write the learning-curve CSV here")
    common(sp)

    sp = sub.add_parser("train-hmm", help="fit tandem PCAs + GMM-HMM; writes a "
                                          "recognizer bundle directory")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--classifier", required=True)
    sp.add_argument("--lm", help="ARPA LM (default: train on corpus words)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--signers")
    common(sp)

    sp = sub.add_parser("adapt", help="adapt the frame classifier to a signer")
    sp.add_argument("--recognizer", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--signer", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mode", default="fine-tune",
                    choices=["fine-tune", "LIN+UP", "LIN+LON"])
    sp.add_argument("--labels", default="GT", choices=["GT", "FA"])
    sp.add_argument("--fraction", type=float)
    common(sp)

    sp = sub.add_parser("align", help="forced-align transcriptions to frames")
    sp.add_argument("--recognizer", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--signers")
    common(sp)

    sp = sub.add_parser("nbest", help="N-best lattices from the tandem recognizer")
    sp.add_argument("--recognizer", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--n", type=int)
    sp.add_argument("--signers")
    common(sp)

    sp = sub.add_parser("train-scrf", help="train a segmental CRF")
    sp.add_argument("--recognizer", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mode", default="firstpass", choices=["firstpass", "rescoring"])
    sp.add_argument("--signers")
    common(sp)

    sp = sub.add_parser("decode", help="decode a corpus (tandem or first-pass SCRF)")
    sp.add_argument("--recognizer", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--refs", help="also write reference transcriptions here")
    sp.add_argument("--scrf", help="segmental model weights JSON")
    sp.add_argument("--lattices", help="lattice directory (rescoring decode)")
    sp.add_argument("--signers")
    common(sp)

    sp = sub.add_parser("cascade", help="two-pass segmental cascade experiment")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--eval-signer", required=True)
    sp.add_argument("--out", required=True)
    common(sp)

    sp = sub.add_parser("realign-adapt", help="iterated forced-alignment adaptation")
    sp.add_argument("--recognizer", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--signer", required=True)
    sp.add_argument("--iters", type=int, default=2)
    sp.add_argument("--out", required=True)
    common(sp)

    sp = sub.add_parser("score", help="letter error rate with D/S/I decomposition")
    sp.add_argument("--ref", required=True)
    sp.add_argument("--hyp", required=True)
    sp.add_argument("--json", help="write the JSON report here")
    sp.add_argument("--report", help="write the aligned text report here")
    common(sp)

    sp = sub.add_parser("run-protocol", help="dependent / independent / adapted table")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--rows", help="comma list from independent,FA,GT,dependent")
    sp.add_argument("--verbose", action="store_true")
    common(sp)
    return p


COMMANDS = {
    "gen-data": cmd_gen_data,
    "extract-features": cmd_extract_features,
    "train-lm": cmd_train_lm,
    "train-classifier": cmd_train_classifier,
    "train-hmm": cmd_train_hmm,
    "adapt": cmd_adapt,
    "align": cmd_align,
    "nbest": cmd_nbest,
    "train-scrf": cmd_train_scrf,
    "decode": cmd_decode,
    "cascade": cmd_cascade,
    "realign-adapt": cmd_realign_adapt,
    "score": cmd_score,
    "run-protocol": cmd_run_protocol,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DataError) as e:
        print("error: %s" % e, file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print("error: %s" % e, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
