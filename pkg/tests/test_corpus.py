import json

import pytest
from hypothesis import given, settings, strategies as st

from inventor_linker.cache import ResponseCache
from inventor_linker.corpus import (
    DEFAULT_CORPORA,
    CorpusSpec,
    LiveSource,
    OpsAdapter,
    canonicalize,
    fetch_patents,
    load_corpus_specs,
    record_from_json,
    validate_query,
)
from inventor_linker.errors import (
    FixtureNotFound,
    InvalidCorpusSpec,
    MalformedQuery,
    RecordParseError,
)
from inventor_linker.transport import HttpTransport


@pytest.mark.parametrize("spec", DEFAULT_CORPORA, ids=lambda s: s.corpus_id)
def test_builtin_queries_validate(spec):
    validate_query(spec.query)


@pytest.mark.parametrize("query", [
    "ic=A61 AND pd=2013 AND pr=FR",
    "(ic=A63 OR IC=A62) AND (pd within \"2014, 2016\")",
    "pa=univ* and not ic=A61",
    "PA any \"univ institut\"",
])
def test_valid_queries(query):
    validate_query(query)


@pytest.mark.parametrize("query", [
    "",
    "(ic=A61",
    "ic=A61)",
    "ic=A61 AND pd within \"2014",
    "xx=A61",
    "ic=A61 AND",
    "AND ic=A61",
    "ic= ",
    "ic=A61 pd=2013",
])
def test_malformed_queries(query):
    with pytest.raises(MalformedQuery):
        validate_query(query)


def test_malformed_query_reports_position():
    with pytest.raises(MalformedQuery) as info:
        validate_query("ic=A61 AND zz=1")
    assert info.value.position == 11


def test_corpus_spec_validation():
    with pytest.raises(InvalidCorpusSpec):
        CorpusSpec("bad id", "ic=A61")
    with pytest.raises(InvalidCorpusSpec):
        CorpusSpec("ok", "  ")


def test_load_corpus_specs(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[corpus:Test]\nquery = ic=A61 AND pr=FR\ndescription = x\nperiod = 2014-2016\n")
    (spec,) = load_corpus_specs(ini)
    assert spec.corpus_id == "Test" and spec.period == (2014, 2016)


def rec(number, **kw):
    base = {"publication_number": number, "title": "t", "abstract": "a",
            "ipc_codes": ["A61K 31/00"], "inventors": ["X Y"], "applicants": [],
            "publication_date": "2015-01-01", "priority_country": "FR"}
    base.update(kw)
    return base


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path


def test_record_parsing():
    r = record_from_json(rec("FR1", ipc_codes=["A61K31/00", "A61K 31/00", "A61P 35/00"]))
    assert [c.symbol for c in r.ipc_codes] == ["A61K31/00", "A61P35/00"]
    assert not r.abstract_missing
    empty = record_from_json(rec("FR2", abstract=""))
    assert empty.abstract_missing and empty.text == "t"


@pytest.mark.parametrize("bad", [
    rec(""), rec("FR1", ipc_codes=["Z99"]), rec("FR1", publication_date="2015-13-01"),
    rec("FR1", inventors="X"), rec("FR1", priority_country="FRA"),
])
def test_record_parse_errors(bad):
    with pytest.raises(RecordParseError):
        record_from_json(bad, index=4)


def test_fixture_dedup_sort_and_skip(tmp_path):
    path = write_jsonl(tmp_path / "p.jsonl", [rec("FR3"), rec("FR1"), rec("FR3"), rec("", title="broken")])
    with open(path, "a") as fh:
        fh.write("{not json\n")
    spec = CorpusSpec("T", "ic=A61")
    records = fetch_patents(spec, path)
    assert [r.publication_number for r in records] == ["FR1", "FR3"]
    assert all(r.corpus_id == "T" for r in records)
    with pytest.raises(RecordParseError):
        fetch_patents(spec, path, strict=True)


def test_missing_fixture(tmp_path):
    with pytest.raises(FixtureNotFound):
        fetch_patents(CorpusSpec("T", "ic=A61"), tmp_path / "nope.jsonl")


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["FR1", "FR2", "FR3", "FR4"]),
                          st.sampled_from(["t1", "t2", "t3"])), min_size=1, max_size=12),
       st.randoms())
def test_canonicalize_ignores_input_order(rows, rnd):
    records = [record_from_json(rec(n, title=t)) for n, t in rows]
    shuffled = records[:]
    rnd.shuffle(shuffled)
    out = canonicalize(records)
    assert out == canonicalize(shuffled)
    numbers = [r.publication_number for r in out]
    assert numbers == sorted(set(numbers))


OPS_PAGE = """<?xml version="1.0" encoding="UTF-8"?>
<ops:world-patent-data xmlns:ops="http://ops.epo.org" xmlns="http://www.epo.org/exchange">
 <ops:biblio-search total-result-count="{total}">
  <ops:search-result>
   <exchange-documents>
    <exchange-document country="FR" doc-number="{num}" kind="A1">
     <bibliographic-data>
      <publication-reference>
       <document-id document-id-type="docdb"><country>FR</country><doc-number>{num}</doc-number><kind>A1</kind><date>20150306</date></document-id>
      </publication-reference>
      <classifications-ipcr>
       <classification-ipcr sequence="1"><text>A61K  31/00        A I</text></classification-ipcr>
       <classification-ipcr sequence="2"><text>A61P  35/00        A I</text></classification-ipcr>
      </classifications-ipcr>
      <priority-claims>
       <priority-claim sequence="1"><document-id document-id-type="epodoc"><doc-number>FR20130001</doc-number></document-id></priority-claim>
      </priority-claims>
      <parties>
       <applicants><applicant sequence="1" data-format="epodoc"><applicant-name><name>UNIV TOULON [FR]</name></applicant-name></applicant></applicants>
       <inventors>
        <inventor sequence="1" data-format="epodoc"><inventor-name><name>REYMOND DAVID [FR]</name></inventor-name></inventor>
        <inventor sequence="1" data-format="original"><inventor-name><name>REYMOND, David</name></inventor-name></inventor>
       </inventors>
      </parties>
      <invention-title lang="fr">Composition</invention-title>
      <invention-title lang="en">Composition for tumours</invention-title>
     </bibliographic-data>
     <abstract lang="en"><p>A composition.</p></abstract>
    </exchange-document>
   </exchange-documents>
  </ops:search-result>
 </ops:biblio-search>
</ops:world-patent-data>"""


class PagedSession:
    def __init__(self, total):
        self.total = total
        self.ranges = []

    def request(self, method, url, params=None, **kw):
        self.ranges.append(params["Range"])
        start = int(params["Range"].split("-")[0])
        body = OPS_PAGE.format(total=self.total, num=3000000 + start).encode()
        return type("R", (), {"status_code": 200, "content": body})()


def test_ops_adapter_parse():
    total, docs = OpsAdapter().parse_page(OPS_PAGE.format(total=1, num=3000001).encode())
    assert total == 1
    (d,) = docs
    assert d["publication_number"] == "FR3000001A1"
    assert d["ipc_codes"] == ["A61K 31/00", "A61P 35/00"]
    assert d["inventors"] == ["REYMOND, David"]
    assert d["title"] == "Composition for tumours"
    assert d["publication_date"] == "2015-03-06"
    assert d["priority_country"] == "FR"
    record_from_json(d)


def test_live_source_pages_and_replays(tmp_path):
    session = PagedSession(total=250)
    transport = HttpTransport(ResponseCache(tmp_path), session=session)
    spec = CorpusSpec("T", "ic=A61 AND pr=FR")
    records = fetch_patents(spec, LiveSource(transport, OpsAdapter(), workers=3))
    assert sorted(session.ranges) == ["1-100", "101-200", "201-300"]
    assert len(records) == 3
    offline = HttpTransport(ResponseCache(tmp_path), offline=True, session=PagedSession(0))
    assert fetch_patents(spec, LiveSource(offline, OpsAdapter())) == records
