"""Shared fixtures: hand-authored release files and a builtin embedder."""

from __future__ import annotations

import pytest

from medct import embedding, linker, terminology


def pytest_runtest_logreport(report):
    # One visible pass/fail line per acceptance criterion.
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        outcome = "PASS" if report.passed else "FAIL"
        print(f"\nACCEPTANCE {outcome}: {name}", flush=True)

TABLE1_CONCEPTS = """\
id\thierarchy\tfsn
35259002\tbody\tDeltoid muscle
50070009\tprocedure\tUmbilectomy
91936005\tfinding\tAllergy to penicillin
"""

TABLE1_DESCRIPTIONS = """\
id\tconcept_id\tlang\ttype\tterm
d1\t35259002\ten\tFSN\tDeltoid muscle
d2\t35259002\tzh\tSYN\t三角肌
d3\t50070009\ten\tFSN\tUmbilectomy
d4\t50070009\tzh\tSYN\t切除脐带
d5\t91936005\ten\tFSN\tAllergy to penicillin
d6\t91936005\tzh\tSYN\t青霉素过敏
"""

TABLE1_RELATIONSHIPS = """\
id\tsource_id\tdest_id\ttype_id
"""

FIG4_CONCEPTS = """\
id\thierarchy\tfsn
432504007\tfinding\tCerebral infarction
128601007\tfinding\tPulmonary infection
44054006\tfinding\tDiabetes mellitus type II
"""

FIG4_DESCRIPTIONS = """\
id\tconcept_id\tlang\ttype\tterm
d1\t432504007\ten\tFSN\tCerebral infarction
d2\t432504007\tzh\tSYN\t脑梗死
d3\t128601007\ten\tFSN\tPulmonary infection
d4\t128601007\tzh\tSYN\t肺部感染
d5\t44054006\ten\tFSN\tDiabetes mellitus type II
d6\t44054006\tzh\tSYN\tII型糖尿病
"""


def write_release(tmp_path, concepts: str, descriptions: str, relationships: str):
    paths = []
    for name, content in (
        ("concepts.tsv", concepts),
        ("descriptions.tsv", descriptions),
        ("relationships.tsv", relationships),
    ):
        path = tmp_path / name
        path.write_text(content, encoding="utf-8")
        paths.append(path)
    return tuple(paths)


@pytest.fixture
def table1_files(tmp_path):
    return write_release(tmp_path, TABLE1_CONCEPTS, TABLE1_DESCRIPTIONS, TABLE1_RELATIONSHIPS)


@pytest.fixture
def table1_graph(table1_files):
    return terminology.parse_release(*table1_files)


@pytest.fixture
def fig4_graph(tmp_path):
    files = write_release(tmp_path, FIG4_CONCEPTS, FIG4_DESCRIPTIONS, TABLE1_RELATIONSHIPS)
    return terminology.parse_release(*files)


@pytest.fixture
def builtin64():
    return embedding.EmbedderConfig(kind="builtin", dim=64)


@pytest.fixture
def fig4_pipeline(fig4_graph, builtin64):
    index = linker.build_concept_index(fig4_graph, builtin64)
    return linker.MedLinkPipeline(fig4_graph, index, builtin64)
