import numpy as np
import pytest

from laygraph.geometry import Document, Quad, Token


def make_doc(boxes, texts=None, doc_id="doc", page=(1000.0, 1000.0), entities=()):
    """Document from a list of axis-aligned (x0, y0, x1, y1) boxes or Quads."""
    tokens = []
    for i, box in enumerate(boxes):
        quad = box if isinstance(box, Quad) else Quad.from_aabb(*box)
        text = texts[i] if texts is not None else f"w{i}"
        tokens.append(Token(i, text, quad))
    return Document(doc_id, tuple(tokens), page[0], page[1], tuple(entities))


def random_doc(rng, n, page=1000.0, max_side=40.0, doc_id="rand"):
    """Random document with non-degenerate axis-aligned boxes."""
    boxes = []
    for _ in range(n):
        x0 = rng.uniform(0, page - max_side)
        y0 = rng.uniform(0, page - max_side)
        w = rng.uniform(2.0, max_side)
        h = rng.uniform(2.0, max_side)
        boxes.append((x0, y0, x0 + w, y0 + h))
    return make_doc(boxes, doc_id=doc_id, page=(page, page))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
