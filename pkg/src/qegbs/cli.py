"""Command-line entry point: ``qegbs <subcommand> ...``.

Settings come from built-in defaults, then an optional JSON file given with
``--config``, then command-line flags, later sources winning.  Config keys
are the long flag names with dashes turned into underscores, for example
``{"decoder": "gbs", "match_mode": "word", "beam": 5, "lambda": 0.25}``.

Exit codes: 0 success, 1 usage or configuration error, 2 bad input data,
3 one or more instances failed to decode.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

from . import __version__
from .decoders import TOP_K_PRESETS, DecodeConfig
from .errors import MalformedTable, ParseError, QEGBSError, SchemaError
from .gbs import MatchMode
from .harness import (
    SYSTEMS,
    ExperimentConfig,
    SyntheticConfig,
    TaggedInstance,
    auto_max_len,
    dump_jsonl,
    fingerprint,
    instance_constraints,
    instance_seed,
    instance_word_tags,
    load_jsonl,
    make_synthetic,
    run_decode,
    run_experiment,
    write_records,
)
from .metrics import bleu_corpus, ter
from .oracle import DEFAULT_CAP, brute_force_constrained
from .qesim import NoiseSpec, oracle_tags, perturb_tags
from .scoring import NGramScorer, ScoreContext, copy_bias_wrap, ngram_train, table_scorer_load
from .text import detokenize, load_vocabulary, save_lexicon, save_vocabulary

log = logging.getLogger("qegbs")

DEFAULTS = {
    "decoder": "beam",
    "match_mode": "word",
    "beam": 5,
    "top_k": TOP_K_PRESETS["en-de"],
    "beta": 1.0,
    "max_len": 0,
    "seed": 0,
    "p_fp": 0.0,
    "p_fn": 0.0,
    "scorer": "copy-bias",
    "base": "ngram",
    "lambda": 0.25,
    "tag_level": "word",
    "lift_rule": "all",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _settings(args, keys) -> dict:
    out = {k: DEFAULTS[k] for k in keys if k in DEFAULTS}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as f:
                file_cfg = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from None
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        out.update(file_cfg)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


# -- shared argument groups ------------------------------------------------


def _add_config(p):
    p.add_argument("--config", help="JSON settings file (overridden by flags)")


def _add_vocab(p):
    p.add_argument("--vocab", required=True, help="vocabulary file ('#eos <tok>' header, one token per line)")
    p.add_argument("--lexicon", help="word-to-pieces file, 'word<TAB>piece piece'")


def _add_scorer(p):
    p.add_argument("--scorer", choices=["table", "ngram", "copy-bias"])
    p.add_argument("--model", required=True, help="table or n-gram model file")
    p.add_argument("--base", choices=["table", "ngram"], help="model type wrapped by copy-bias (default ngram)")
    p.add_argument("--lambda", dest="lambda", type=float, help="copy-bias mixing weight on the base model")


def _add_decoder(p):
    p.add_argument("--decoder", choices=["greedy", "beam", "sample", "topk", "gbs", "soft-penalty"])
    p.add_argument("--match-mode", choices=["token", "word"])
    p.add_argument("--beam", type=int)
    p.add_argument("--top-k", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--max-len", type=int, help="0 picks a length from the MT")
    p.add_argument("--seed", type=int)


def _add_tags(p):
    p.add_argument("--tag-level", choices=["word", "token"], help="default tag level of input lines")
    p.add_argument("--lift-rule", choices=["all", "any"], help="token-to-word tag rule")


def _vocab(args):
    return load_vocabulary(args.vocab, lexicon=args.lexicon)


def _scorer(args, s, vocab):
    kind = s["scorer"]
    base_kind = kind if kind != "copy-bias" else s["base"]
    if base_kind == "table":
        base = table_scorer_load(args.model, vocab)
    elif base_kind == "ngram":
        base = NGramScorer.load(args.model, vocab)
    else:
        raise UsageError(f"unknown base model type {base_kind!r}")
    if kind == "copy-bias":
        return copy_bias_wrap(base, s["lambda"])
    return base


def _decode_config(s) -> DecodeConfig:
    try:
        return DecodeConfig(
            decoder=s["decoder"], max_len=s["max_len"], beam=s["beam"], top_k=s["top_k"],
            seed=s["seed"], beta=s["beta"], match_mode=MatchMode(s["match_mode"]).value,
        )
    except ValueError as e:
        raise UsageError(str(e)) from None


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, ensure_ascii=False, sort_keys=True, indent=2)
        f.write("\n")


# -- subcommands -----------------------------------------------------------

DECODE_KEYS = ("decoder", "match_mode", "beam", "top_k", "beta", "max_len", "seed",
               "scorer", "base", "lambda", "tag_level", "lift_rule")


def cmd_decode(args):
    s = _settings(args, DECODE_KEYS)
    cfg = _decode_config(s)
    vocab = _vocab(args)
    scorer = _scorer(args, s, vocab)
    instances = load_jsonl(args.input, s["tag_level"])
    tags = None
    if s["lift_rule"] != "all":
        tags = {i.id: instance_word_tags(i, vocab, s["lift_rule"]) for i in instances}
    records = run_decode(instances, scorer, cfg, tags, args.output)
    failed = sum(r["error"] is not None for r in records)
    print(f"decoded {len(records) - failed}/{len(records)} instances with {cfg.decoder.value}")
    return 3 if failed else 0


def cmd_extract(args):
    s = _settings(args, ("tag_level", "lift_rule"))
    vocab = _vocab(args)
    out = []
    for inst in load_jsonl(args.input, s["tag_level"]):
        cs = instance_constraints(inst, vocab, rule=s["lift_rule"])
        out.append({
            "id": inst.id,
            "constraints": [c.surface for c in cs],
            "tokens": [vocab.strings(c.tokens) for c in cs],
            "source_spans": [list(c.source_span) for c in cs],
        })
    write_records(out, args.output)
    print(f"wrote constraints for {len(out)} instances")
    return 0


def _raw_lines(path):
    with open(path, encoding="utf-8") as f:
        for n, raw in enumerate(f, 1):
            if raw.strip():
                try:
                    yield n, json.loads(raw)
                except json.JSONDecodeError as e:
                    raise ParseError(n, str(e)) from None


def cmd_tag_oracle(args):
    out = []
    for n, d in _raw_lines(args.input):
        for key in ("id", "mt", "pe"):
            if key not in d:
                raise SchemaError(key, f"line {n}: field missing")
        if not d["pe"]:
            raise SchemaError("pe", f"instance {d['id']!r}: empty post-edit")
        d = dict(d)
        d["tags"] = [str(t) for t in oracle_tags(d["mt"], d["pe"])]
        d["tag_level"] = "word"
        d.pop("mt_tokens", None)
        out.append(d)
    write_records(out, args.output)
    print(f"tagged {len(out)} instances")
    return 0


def cmd_perturb(args):
    s = _settings(args, ("p_fp", "p_fn", "seed", "tag_level"))
    instances = load_jsonl(args.input, s["tag_level"])
    try:
        for i, inst in enumerate(instances):
            inst.tags = perturb_tags(inst.tags, NoiseSpec(s["p_fp"], s["p_fn"], instance_seed(s["seed"], i)))
    except ValueError as e:
        raise UsageError(str(e)) from None
    dump_jsonl(instances, args.output)
    print(f"perturbed tags of {len(instances)} instances (p_fp={s['p_fp']}, p_fn={s['p_fn']})")
    return 0


def evaluate_records(hyps: dict, refs: list[TaggedInstance]):
    """Per-instance TER rows plus a corpus summary; hyps maps id to words or None."""
    rows = []
    outs, pes, mts = [], [], []
    for inst in refs:
        if not inst.pe:
            raise SchemaError("pe", f"instance {inst.id!r}: evaluation needs a post-edit")
        out = hyps.get(inst.id)
        if out is None:
            out = []
        t, m = ter(out, inst.pe), ter(inst.mt, inst.pe)
        rows.append({"id": inst.id, "edits": t.edits, "ref_len": t.ref_len, "ter": t.score, "mt_ter": m.score,
                     "insertions": t.insertions, "deletions": t.deletions,
                     "substitutions": t.substitutions, "shifts": t.shifts})
        outs.append(out)
        pes.append(inst.pe)
        mts.append(inst.mt)
    summary = {
        "ter": sum(r["edits"] for r in rows) / sum(r["ref_len"] for r in rows),
        "bleu": bleu_corpus(outs, pes).score,
        "deterioration": sum(r["ter"] > r["mt_ter"] for r in rows) / len(rows),
        "mt_ter": sum(r["mt_ter"] * r["ref_len"] for r in rows) / sum(r["ref_len"] for r in rows),
        "instances": len(rows),
        "missing": sum(hyps.get(i.id) is None for i in refs),
    }
    return rows, summary


def cmd_evaluate(args):
    refs = load_jsonl(args.refs)
    hyps = {}
    for n, d in _raw_lines(args.hyps):
        if "id" not in d or "output" not in d:
            raise SchemaError("output", f"line {n}: hypothesis lines need 'id' and 'output'")
        hyps[d["id"]] = d["output"]
    rows, summary = evaluate_records(hyps, refs)
    write_records(rows, args.output)
    if args.summary:
        _write_json(summary, args.summary)
    print(f"{'instances':<14}{summary['instances']}")
    print(f"{'TER':<14}{100 * summary['ter']:.2f}")
    print(f"{'MT TER':<14}{100 * summary['mt_ter']:.2f}")
    print(f"{'BLEU':<14}{summary['bleu']:.2f}")
    print(f"{'deterioration':<14}{100 * summary['deterioration']:.1f}%")
    return 0


def cmd_experiment(args):
    s = _settings(args, ("beam", "top_k", "beta", "max_len", "seed", "p_fp", "p_fn",
                         "scorer", "base", "lambda", "tag_level", "systems"))
    try:
        systems = s.get("systems") or SYSTEMS
        if isinstance(systems, str):
            systems = systems.split(",")
        cfg = ExperimentConfig(systems=tuple(systems), beam=s["beam"], top_k=s["top_k"], beta=s["beta"],
                               max_len=s["max_len"], seed=s["seed"], p_fp=s["p_fp"], p_fn=s["p_fn"])
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from None
    vocab = _vocab(args)
    scorer = _scorer(args, s, vocab)
    instances = load_jsonl(args.input, s["tag_level"])
    scorer_desc = {k: s[k] for k in ("scorer", "base", "lambda")}
    fp = fingerprint(args.input, args.model, scorer_desc, asdict(cfg), cfg.seed)
    report = run_experiment(instances, scorer, cfg, dataset_fingerprint=fp)
    out = report.to_json()
    out["config"] = dict(asdict(cfg), **scorer_desc)
    _write_json(out, args.output)
    table = report.table()
    if args.table:
        Path(args.table).write_text(table + "\n", encoding="utf-8")
    print(table)
    return 3 if report.partial else 0


def cmd_make_synthetic(args):
    knobs = {f.name for f in fields(SyntheticConfig)}
    given = {}
    if args.config:
        try:
            given.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from None
    for k in knobs:
        v = getattr(args, k, None)
        if v is not None:
            given[k] = v
    unknown = set(given) - knobs
    if unknown:
        raise UsageError(f"unknown synthetic settings {sorted(unknown)}")
    try:
        cfg = SyntheticConfig(**given)
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from None
    corpus = make_synthetic(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_jsonl(corpus.instances, out / "data.jsonl")
    save_vocabulary(corpus.vocab, out / "vocab.txt")
    save_lexicon(corpus.lexicon, out / "lexicon.tsv")
    with open(out / "lm_corpus.txt", "w", encoding="utf-8") as f:
        for seq in corpus.lm_corpus:
            f.write(" ".join(seq[:-1]) + "\n")
    _write_json(asdict(cfg), out / "synthetic_config.json")
    print(f"wrote {len(corpus.instances)} instances and {len(corpus.lm_corpus)} LM sentences to {out}")
    return 0


def cmd_train_lm(args):
    vocab = _vocab(args)
    corpus = []
    with open(args.corpus, encoding="utf-8") as f:
        for line in f:
            toks = line.split()
            if not toks:
                continue
            if toks[-1] != vocab.eos:
                toks.append(vocab.eos)
            corpus.append(vocab.ids(toks))
    model = ngram_train(corpus, args.order, args.add_k, vocab)
    model.save(args.output)
    print(f"trained order-{args.order} model on {len(corpus)} sentences")
    return 0


def cmd_oracle_decode(args):
    s = _settings(args, ("scorer", "base", "lambda", "tag_level", "max_len", "match_mode"))
    vocab = _vocab(args)
    scorer = _scorer(args, s, vocab)
    out = []
    failed = 0
    for inst in load_jsonl(args.input, s["tag_level"]):
        cs = instance_constraints(inst, vocab)
        max_len = s["max_len"] or auto_max_len(inst, vocab, cs.total_tokens)
        ctx = ScoreContext(tuple(inst.src), tuple(inst.mt))
        try:
            res = brute_force_constrained(scorer, ctx, cs, max_len, s["match_mode"] == "word", args.cap)
        except QEGBSError as e:
            failed += 1
            out.append({"id": inst.id, "output": None, "error": f"{type(e).__name__}: {e}"})
            continue
        rec = {"id": inst.id, "enumerated": res.enumerated, "error": None}
        if res.feasible:
            rec.update(output=detokenize(res.tokens, vocab), tokens=vocab.strings(res.tokens), score=res.score)
        else:
            rec.update(output=None, tokens=None, score=None)
        out.append(rec)
    write_records(out, args.output)
    print(f"searched {len(out)} instances exhaustively")
    return 3 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qegbs", description="QE-constrained decoding for post-editing experiments")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("decode", help="decode a JSONL dataset")
    d.add_argument("--input", required=True)
    d.add_argument("--output", required=True)
    _add_config(d), _add_vocab(d), _add_scorer(d), _add_decoder(d), _add_tags(d)
    d.set_defaults(func=cmd_decode)

    e = sub.add_parser("extract-constraints", help="list the constraints implied by each instance's tags")
    e.add_argument("--input", required=True)
    e.add_argument("--output", required=True)
    _add_config(e), _add_vocab(e), _add_tags(e)
    e.set_defaults(func=cmd_extract)

    t = sub.add_parser("tag-oracle", help="tag MT words OK/BAD against the post-edit")
    t.add_argument("--input", required=True)
    t.add_argument("--output", required=True)
    t.set_defaults(func=cmd_tag_oracle)

    n = sub.add_parser("perturb-tags", help="flip tags at the given rates")
    n.add_argument("--input", required=True)
    n.add_argument("--output", required=True)
    n.add_argument("--p-fp", type=float, help="chance a BAD tag is reported OK")
    n.add_argument("--p-fn", type=float, help="chance an OK tag is reported BAD")
    n.add_argument("--seed", type=int)
    _add_config(n)
    n.add_argument("--tag-level", choices=["word", "token"])
    n.set_defaults(func=cmd_perturb)

    v = sub.add_parser("evaluate", help="TER/BLEU of decoded outputs against post-edits")
    v.add_argument("--hyps", required=True, help="decode output JSONL")
    v.add_argument("--refs", required=True, help="dataset JSONL with pe")
    v.add_argument("--output", required=True, help="per-instance JSONL")
    v.add_argument("--summary", help="write corpus scores as JSON")
    v.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("experiment", help="run the decoder comparison matrix")
    x.add_argument("--input", required=True)
    x.add_argument("--output", required=True, help="report JSON")
    x.add_argument("--table", help="also write the text table here")
    x.add_argument("--systems", help="comma-separated system names")
    x.add_argument("--beam", type=int)
    x.add_argument("--top-k", type=int)
    x.add_argument("--beta", type=float)
    x.add_argument("--max-len", type=int)
    x.add_argument("--seed", type=int)
    x.add_argument("--p-fp", type=float)
    x.add_argument("--p-fn", type=float)
    x.add_argument("--tag-level", choices=["word", "token"])
    _add_config(x), _add_vocab(x), _add_scorer(x)
    x.set_defaults(func=cmd_experiment)

    m = sub.add_parser("make-synthetic", help="generate a seeded synthetic corpus")
    m.add_argument("--out-dir", required=True)
    for f in fields(SyntheticConfig):
        m.add_argument("--" + f.name.replace("_", "-"), type=type(f.default))
    _add_config(m)
    m.set_defaults(func=cmd_make_synthetic)

    lm = sub.add_parser("train-lm", help="train an add-k n-gram model")
    lm.add_argument("--corpus", required=True, help="one space-separated token sequence per line")
    lm.add_argument("--output", required=True)
    lm.add_argument("--order", type=int, default=3)
    lm.add_argument("--add-k", type=float, default=0.001)
    _add_vocab(lm)
    lm.set_defaults(func=cmd_train_lm)

    o = sub.add_parser("oracle-decode", help="exhaustive constrained search (tiny problems only)")
    o.add_argument("--input", required=True)
    o.add_argument("--output", required=True)
    o.add_argument("--max-len", type=int)
    o.add_argument("--match-mode", choices=["token", "word"])
    o.add_argument("--cap", type=int, default=DEFAULT_CAP)
    _add_config(o), _add_vocab(o), _add_scorer(o), _add_tags(o)
    o.set_defaults(func=cmd_oracle_decode)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"qegbs: error: {e}", file=sys.stderr)
        return 1
    except (QEGBSError, MalformedTable, ValueError, KeyError, OSError) as e:
        print(f"qegbs: data error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
