"""Command-line driver for the offline workflows.

Usage errors exit 2 (argparse), data errors exit 1 with a diagnostic on
stderr. Every subcommand is re-runnable: the same inputs produce the same
outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import annotations, embedding, genai, linker, metrics, retrieval, service, terminology
from .errors import MedctError


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MedctError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="medct", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a release into a binary graph snapshot")
    _release_flags(p, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("embed-index", help="build the concept embedding index")
    p.add_argument("--graph", required=True, help="graph snapshot from ingest")
    p.add_argument("--out", required=True)
    p.add_argument("--embedder", choices=["builtin", "remote"], default="builtin")
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--url", default=None, help="remote embedder URL")
    p.add_argument("--languages", default=None, help="comma-separated language filter")
    p.add_argument("--parallelism", type=int, default=1)
    p.set_defaults(func=cmd_embed_index)

    p = sub.add_parser("build-dict", help="build the static mention dictionary")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_dict)

    p = sub.add_parser("link", help="link entity mentions in text")
    _pipeline_flags(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--text")
    group.add_argument("--input", help="JSONL of {note_id, text}")
    p.add_argument("--out", default=None, help="output JSONL (default stdout)")
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("tag-corpus", help="attach concept ids to a corpus")
    _pipeline_flags(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tag_corpus)

    p = sub.add_parser("index", help="build the search index over a tagged corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="query the search index (ad hoc or evaluated)")
    _pipeline_flags(p)
    p.add_argument("--index", required=True, help="search index from the index subcommand")
    p.add_argument("--q", default=None, help="single query text")
    p.add_argument("--queries", default=None, help="queries JSONL")
    p.add_argument("--judgments", default=None, help="judgments JSONL (enables evaluation)")
    p.add_argument("--mode", default="concept_filter", choices=retrieval.SEARCH_MODES)
    p.add_argument("--modes", default=None, help="comma-separated modes for evaluation")
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--w-c", type=float, default=10.0)
    p.add_argument("--out", default=None, help="write JSONL records here too (evaluation)")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval-search", help="macro P/R/F1 retrieval evaluation per mode")
    _pipeline_flags(p)
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--judgments", required=True)
    p.add_argument("--modes", default=",".join(retrieval.SEARCH_MODES))
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--w-c", type=float, default=10.0)
    p.add_argument("--out", default=None, help="write JSONL records here too")
    p.set_defaults(func=cmd_eval_search)

    p = sub.add_parser("eval-nel", help="character-level IoU of predictions vs gold")
    p.add_argument("--pred", required=True, help="JSONL of {note_id,start,end,concept_id}")
    p.add_argument("--gold", required=True, help="JSONL of {note_id,start,end,concept_id}")
    p.add_argument("--pool-notes", action="store_true",
                   help="pool character sets per concept across notes")
    p.add_argument("--out", default=None, help="write JSONL records here too")
    p.set_defaults(func=cmd_eval_nel)

    p = sub.add_parser("prompt", help="render one of the prompt templates")
    prompt_sub = p.add_subparsers(dest="prompt_kind", required=True)

    pt = prompt_sub.add_parser("translation")
    pt.add_argument("--graph", required=True)
    pt.add_argument("--concept-id", default=None)
    pt.add_argument("--synonym", default=None)
    pt.add_argument("--language", required=True)
    pt.add_argument("--languages", default=None,
                    help="source-language filter for --batch-out")
    pt.add_argument("--batch-out", default=None,
                    help="write run-batch-ready prompts JSONL for every synonym")
    pt.set_defaults(func=cmd_prompt_translation)

    pn = prompt_sub.add_parser("ner")
    group = pn.add_mutually_exclusive_group(required=True)
    group.add_argument("--text")
    group.add_argument("--input", help="file whose contents become the note")
    pn.set_defaults(func=cmd_prompt_ner)

    ps = prompt_sub.add_parser("summary")
    ps.add_argument("--mode", choices=["zero", "guided"], default="zero")
    ps.add_argument("--input", required=True, help="file with the input notes")
    ps.add_argument("--entities", default=None, help="file with one mention per line")
    ps.set_defaults(func=cmd_prompt_summary)

    p = sub.add_parser("run-batch", help="run prompts through a chat-completion service")
    p.add_argument("--prompts", required=True, help="JSONL of {prompt_id, prompt}")
    p.add_argument("--base-url", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--out", required=True, help="JSONL of {prompt_id, output|error}")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--max-tokens", type=int, default=1024)
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument("--descriptions-out", default=None,
                   help="also emit translated outputs as descriptions.tsv rows")
    p.add_argument("--lang", default="zh",
                   help="language tag for --descriptions-out rows")
    p.set_defaults(func=cmd_run_batch)

    p = sub.add_parser("eval-summaries", help="pairwise cosine evaluation of summary sets")
    p.add_argument("--raw", required=True, help="JSONL of {text}")
    p.add_argument("--human", required=True)
    p.add_argument("--llm", required=True)
    p.add_argument("--medct", required=True)
    p.add_argument("--dim", type=int, default=512)
    p.set_defaults(func=cmd_eval_summaries)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--config", default=None, help="key=value config file (or MEDCT_CONFIG)")
    p.set_defaults(func=cmd_serve)

    return parser


def _release_flags(p: argparse.ArgumentParser, required: bool = False) -> None:
    p.add_argument("--concepts", required=required)
    p.add_argument("--descriptions", required=required)
    p.add_argument("--relationships", required=required)


def _pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--graph", required=True, help="graph snapshot from ingest")
    p.add_argument("--concept-index", required=True, help="index from embed-index")
    p.add_argument("--dict", default=None, help="static dictionary from build-dict")
    p.add_argument("--no-static", action="store_true", help="disable static dictionary lookup")
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--languages", default=None)


def _load_pipeline(args) -> linker.MedLinkPipeline:
    graph = terminology.load_graph(args.graph)
    index = linker.load_concept_index(args.concept_index)
    embedder = embedding.config_from_fingerprint(index.fingerprint)
    dictionary = linker.StaticDictionary.load(args.dict) if args.dict else None
    languages = args.languages.split(",") if args.languages else None
    return linker.MedLinkPipeline(
        graph,
        index,
        embedder,
        dictionary,
        use_static=not args.no_static,
        top_k=args.top_k,
        languages=languages,
    )


def _entity_record(entity: linker.LinkedEntity) -> dict:
    return {
        "note_id": entity.note_id,
        "start": entity.start,
        "end": entity.end,
        "hierarchy": entity.hierarchy.value if entity.hierarchy else None,
        "candidates": [{"concept_id": c, "score": s} for c, s in entity.candidates],
        "source": entity.source,
    }


def cmd_ingest(args) -> int:
    graph = terminology.parse_release(args.concepts, args.descriptions, args.relationships)
    terminology.save_graph(graph, args.out)
    counts = {h.value: graph.counts[h].concepts for h in terminology.Hierarchy}
    print(f"parsed {len(graph)} concepts {counts} -> {args.out}")
    return 0


def cmd_embed_index(args) -> int:
    graph = terminology.load_graph(args.graph)
    config = embedding.EmbedderConfig(
        kind=args.embedder,
        dim=args.dim,
        remote_url=args.url,
        parallelism=args.parallelism,
    )
    languages = args.languages.split(",") if args.languages else None
    index = linker.build_concept_index(graph, config, languages)
    linker.save_concept_index(index, args.out)
    print(f"embedded {len(index)} concepts (dim={index.dim}) -> {args.out}")
    return 0


def cmd_build_dict(args) -> int:
    notes = annotations.load_annotations(args.annotations)
    dictionary = linker.build_static_dictionary(notes)
    dictionary.save(args.out)
    print(f"built dictionary with {len(dictionary)} mentions -> {args.out}")
    return 0


def cmd_link(args) -> int:
    pipeline = _load_pipeline(args)
    if args.text is not None:
        items = [("", args.text)]
    else:
        items = []
        with open(args.input, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    record = json.loads(line)
                    items.append((record.get("note_id", ""), record["text"]))
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for note_id, text in items:
            for entity in pipeline.link_text(text, note_id=note_id):
                out.write(json.dumps(_entity_record(entity), ensure_ascii=False) + "\n")
    finally:
        if args.out:
            out.close()
    return 0


def cmd_tag_corpus(args) -> int:
    pipeline = _load_pipeline(args)
    docs = retrieval.load_corpus(args.corpus)
    report = retrieval.tag_corpus(docs, pipeline)
    retrieval.save_corpus(args.out, report.docs)
    print(f"tagged {len(report.docs)} documents ({report.failed} failed) -> {args.out}")
    return 0


def cmd_index(args) -> int:
    docs = retrieval.load_corpus(args.corpus)
    index = retrieval.index_documents(docs, {"k1": args.k1, "b": args.b})
    retrieval.save_index(index, args.out)
    print(f"indexed {index.n_docs} documents -> {args.out}")
    return 0


def cmd_search(args) -> int:
    if args.judgments:
        if not args.queries:
            print("error: --judgments requires --queries", file=sys.stderr)
            return 2
        return _run_eval_search(args)
    if args.q is None:
        print("error: provide --q, or --queries with --judgments", file=sys.stderr)
        return 2
    pipeline = _load_pipeline(args)
    index = retrieval.load_index(args.index)
    annotated = retrieval.annotate_query(args.q, pipeline)
    results = retrieval.search(index, annotated, mode=args.mode, top_n=args.top_n, w_c=args.w_c)
    print(f"query_concepts\t{','.join(sorted(annotated.concept_ids)) or '-'}")
    for r in results:
        print(f"{r.note_id}\t{r.score:.4f}\t{','.join(r.matched_concepts) or '-'}")
    return 0


def cmd_eval_search(args) -> int:
    return _run_eval_search(args)


def _run_eval_search(args) -> int:
    pipeline = _load_pipeline(args)
    index = retrieval.load_index(args.index)
    queries = {
        qid: retrieval.annotate_query(text, pipeline)
        for qid, text in retrieval.load_queries(args.queries).items()
    }
    judgments = retrieval.load_judgments(args.judgments)
    modes = args.modes.split(",") if args.modes else list(retrieval.SEARCH_MODES)
    reports = retrieval.evaluate_retrieval(
        index, queries, judgments, modes=modes, k=args.k, w_c=args.w_c
    )
    sys.stdout.write(metrics.render_prf_table(reports, args.k))
    if getattr(args, "out", None):
        metrics.write_records(
            args.out,
            [
                {"method": label, "k": args.k, "precision": r.precision,
                 "recall": r.recall, "f1": r.f1}
                for label, r in reports.items()
            ],
        )
    return 0


def _load_assignment(path: str) -> metrics.CharAssignment:
    assignment: metrics.CharAssignment = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            if "concept_id" in record:
                concept_id = record["concept_id"]
            else:  # linked-entity record: take the top candidate
                candidates = record.get("candidates") or []
                if not candidates:
                    continue
                concept_id = candidates[0]["concept_id"]
            key = (record["note_id"], concept_id)
            assignment.setdefault(key, set()).update(range(record["start"], record["end"]))
    return assignment


def cmd_eval_nel(args) -> int:
    pred = _load_assignment(args.pred)
    gold = _load_assignment(args.gold)
    report = metrics.iou_all(pred, gold, pool_notes=args.pool_notes)
    sys.stdout.write(metrics.render_iou_report(report))
    if args.out:
        metrics.write_records(args.out, metrics.iou_report_records(report))
    return 0


def cmd_prompt_translation(args) -> int:
    graph = terminology.load_graph(args.graph)
    if args.batch_out:
        languages = args.languages.split(",") if args.languages else None
        batch = genai.build_translation_batch(graph, args.language, languages)
        with open(args.batch_out, "w", encoding="utf-8") as fh:
            for prompt_id, prompt, concept_id in batch:
                fh.write(json.dumps(
                    {"prompt_id": prompt_id, "prompt": prompt, "concept_id": concept_id},
                    ensure_ascii=False,
                ) + "\n")
        print(f"wrote {len(batch)} translation prompts -> {args.batch_out}")
        return 0
    if not args.concept_id or not args.synonym:
        print("error: provide --concept-id and --synonym, or --batch-out", file=sys.stderr)
        return 2
    sys.stdout.write(
        genai.build_translation_prompt(graph, args.concept_id, args.synonym, args.language)
    )
    sys.stdout.write("\n")
    return 0


def cmd_prompt_ner(args) -> int:
    note = args.text if args.text is not None else Path(args.input).read_text(encoding="utf-8")
    sys.stdout.write(genai.build_ner_fewshot_prompt(note))
    sys.stdout.write("\n")
    return 0


def cmd_prompt_summary(args) -> int:
    notes = Path(args.input).read_text(encoding="utf-8")
    entities = None
    if args.mode == "guided":
        if args.entities is None:
            print("error: guided mode requires --entities", file=sys.stderr)
            return 2
        entities = [
            line for line in Path(args.entities).read_text(encoding="utf-8").splitlines() if line
        ]
    sys.stdout.write(genai.build_summary_prompt(notes, mode=args.mode, entities=entities))
    sys.stdout.write("\n")
    return 0


def cmd_run_batch(args) -> int:
    prompts = []
    with open(args.prompts, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                record = json.loads(line)
                prompts.append((str(record["prompt_id"]), record["prompt"]))
    client = genai.LlmClientConfig(
        base_url=args.base_url,
        model_name=args.model,
        max_output_tokens=args.max_tokens,
        temperature=args.temperature,
        timeout=args.timeout,
        parallelism=args.parallelism,
    )
    results = genai.run_batch(prompts, client, checkpoint_path=args.checkpoint)
    with open(args.out, "w", encoding="utf-8") as fh:
        for result in results:
            record: dict = {"prompt_id": result.prompt_id}
            if result.ok:
                record["output"] = result.output
            else:
                record["error"] = result.error
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    if args.descriptions_out:
        rows = genai.translations_to_description_rows(results, args.lang)
        with open(args.descriptions_out, "w", encoding="utf-8") as fh:
            fh.write("id\tconcept_id\tlang\ttype\tterm\n")
            for row in rows:
                fh.write(row + "\n")
        print(f"wrote {len(rows)} description rows -> {args.descriptions_out}")
    failures = sum(1 for r in results if not r.ok)
    print(f"ran {len(results)} prompts, {failures} failed -> {args.out}")
    return 0


def _load_texts(path: str) -> list[str]:
    texts = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                texts.append(json.loads(line)["text"])
    return texts


def cmd_eval_summaries(args) -> int:
    report = genai.evaluate_summary_sets(
        _load_texts(args.raw),
        _load_texts(args.human),
        _load_texts(args.llm),
        _load_texts(args.medct),
        embedders=[embedding.EmbedderConfig(kind="builtin", dim=args.dim)],
    )
    sys.stdout.write(report.render())
    return 0


def cmd_serve(args) -> int:
    import os

    config_path = args.config or os.environ.get("MEDCT_CONFIG")
    if not config_path:
        print("error: provide --config or set MEDCT_CONFIG", file=sys.stderr)
        return 2
    config = service.ServiceConfig.parse(config_path)
    service.serve_forever(service.MedctService.from_config(config))
    return 0


if __name__ == "__main__":
    sys.exit(main())
