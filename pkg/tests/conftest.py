import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import desk_table  # noqa: E402

from skipstore.encoding import (  # noqa: E402
    Chunk,
    ChunkDictionary,
    ColumnChunk,
    ElementsEncoding,
    GlobalDictionary,
    Shard,
)
from skipstore.ingest import build_store  # noqa: E402
from skipstore.partition import PartitionSpec  # noqa: E402
from skipstore.store import Store  # noqa: E402
from skipstore.values import Field, Kind, Schema  # noqa: E402


@pytest.fixture
def desk_store():
    """Six rows, three country chunks of two rows each."""
    schema, columns = desk_table()
    return build_store(schema, columns, PartitionSpec(["country"], max_chunk_rows=2))


@pytest.fixture
def desk_columns():
    return desk_table()


# The walkthrough shard mirrors the layout of the worked single-column
# example: 13 dictionary entries, three chunks whose chunk-dictionaries
# contain exactly these global-ids. One value (rank 9) exists in the
# dictionary but in no chunk, so a restriction on it must skip everything.
WALKTHROUGH_VALUES = [
    "ab in den Urlaub", "amazon", "chaussures", "cheap flights",
    "cheap tickets", "ebay", "fashingskostüme", "immobilienscout",
    "karnevalskostüme", "la redoute", "pages jaunes", "voyages snfc",
    "yellow pages",
]
WALKTHROUGH_CHUNK_DICTS = [
    [1, 2, 4, 5, 12],
    [0, 2, 5, 6, 7, 8],
    [1, 3, 5, 10, 11],
]
WALKTHROUGH_ELEMENTS = [
    [3, 2, 0, 4, 0, 0, 2, 1, 3, 2],
    [5, 2, 1, 4, 3, 0, 0, 0, 1, 5, 5],
    [0, 0, 2, 4, 3, 4, 4, 1, 2, 1, 0],
]


@pytest.fixture
def walkthrough_store():
    schema = Schema("data", [Field("search_string", Kind.STR, nullable=False)])
    gdict = GlobalDictionary(Kind.STR, WALKTHROUGH_VALUES, has_null=False)
    chunks = []
    for ci, (dict_ids, elems) in enumerate(
        zip(WALKTHROUGH_CHUNK_DICTS, WALKTHROUGH_ELEMENTS)
    ):
        cc = ColumnChunk(
            dict=ChunkDictionary(np.asarray(dict_ids, dtype=np.uint32)),
            elems=ElementsEncoding.from_ids(np.asarray(elems), len(dict_ids)),
        )
        chunks.append(Chunk(ci, len(elems), {"search_string": cc}))
    shard = Shard(0, schema, {"search_string": gdict}, chunks)
    return Store.from_shards([shard], table="data")


def walkthrough_rows():
    rows = []
    for dict_ids, elems in zip(WALKTHROUGH_CHUNK_DICTS, WALKTHROUGH_ELEMENTS):
        rows.extend(WALKTHROUGH_VALUES[dict_ids[e]] for e in elems)
    return rows
