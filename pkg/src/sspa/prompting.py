"""Category prompting: LLM prompt templates, description assembly, the toy
differentiable text encoder with learnable prompt tokens, and the dynamic
semantic filtering block that conditions text embeddings on visual context.

The real text encoder lives outside this package; category embeddings may
instead be ingested from a feature bundle file (see :func:`load_label_semantics`).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import DiffNode
from .alignments import CmaParams, cma, init_cma
from .layers import (
    LayerNormParams,
    MlpParams,
    init_layer_norm,
    init_mlp,
    layer_norm,
    mlp_apply,
    uniform_weight,
)

DESCRIPTION_JOINER = ". A photo of a "


@dataclass
class LlmPromptTemplate:
    """Structured prompt for harvesting category descriptions from an LLM."""

    domain_description: str
    in_context_examples: list[tuple[str, str]] = field(default_factory=list)
    answer_constraints: str = ""
    category_slot: str = "{category}"


NATURAL_IMAGE_TEMPLATE = LlmPromptTemplate(
    domain_description=(
        "You annotate everyday photographs. For a given object category, "
        "describe its typical shape, size, color and the objects it commonly "
        "appears with."
    ),
    in_context_examples=[
        (
            "bicycle",
            "Bicycle is a two-wheeled frame with handlebars and pedals, "
            "often seen on streets next to cars and riders",
        ),
        (
            "couch",
            "Couch is a wide upholstered seat with cushions and armrests, "
            "usually placed in living rooms near tables and televisions",
        ),
    ],
    answer_constraints=(
        "Answer with exactly one sentence, no list, no trailing period, "
        "starting with the category name."
    ),
)


def render_llm_prompt(template: LlmPromptTemplate, category: str) -> str:
    """Deterministically render the query prompt for one category.

    Section order: domain description, in-context examples, answer
    constraints, category query.  The category appears exactly once, in the
    query slot.
    """
    if not category:
        raise ValueError("category must be non-empty")
    sections = [template.domain_description]
    if template.in_context_examples:
        lines = [f"{name}: {desc}" for name, desc in template.in_context_examples]
        sections.append("Examples:\n" + "\n".join(lines))
    if template.answer_constraints:
        sections.append(template.answer_constraints)
    query = f"Now give one such description for {template.category_slot}."
    sections.append(query.replace(template.category_slot, category))
    return "\n\n".join(sections)


@dataclass
class CategoryDescription:
    category_name: str
    llm_text: str
    full_text: str


def assemble_description(llm_text: str, category: str) -> CategoryDescription:
    """Concatenate the harvested description with the fixed photo template."""
    llm_text = llm_text.strip()
    if llm_text.endswith("."):
        llm_text = llm_text[:-1]
    if not llm_text:
        warnings.warn(f"empty description for category '{category}'", stacklevel=2)
    full = f"{llm_text}{DESCRIPTION_JOINER}{category}."
    return CategoryDescription(category_name=category, llm_text=llm_text, full_text=full)


def parse_description(full_text: str) -> tuple[str, str]:
    """Recover (llm_text, category) from an assembled full_text."""
    head, _, tail = full_text.rpartition(DESCRIPTION_JOINER)
    if not tail.endswith("."):
        raise ValueError(f"not an assembled description: {full_text!r}")
    return head, tail[:-1]


def save_descriptions(path, descriptions: list[CategoryDescription]) -> None:
    rows = [
        {"category": d.category_name, "llm_text": d.llm_text, "full_text": d.full_text}
        for d in descriptions
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2)


def load_descriptions(path) -> list[CategoryDescription]:
    with open(path, encoding="utf-8") as fh:
        rows = json.load(fh)
    if not isinstance(rows, list):
        raise ValueError("description cache must be a JSON array")
    out = []
    for row in rows:
        if set(row) != {"category", "llm_text", "full_text"}:
            raise ValueError(f"bad description row keys: {sorted(row)}")
        out.append(CategoryDescription(row["category"], row["llm_text"], row["full_text"]))
    return out


# ---------------------------------------------------------------------------
# learnable prompt tokens and the toy text encoder


@dataclass
class PromptBank:
    """L learnable tokens shared across categories plus per-category word embeddings."""

    tokens: DiffNode
    word_embeddings: DiffNode

    @property
    def num_tokens(self) -> int:
        return self.tokens.shape[0]

    @property
    def num_categories(self) -> int:
        return self.word_embeddings.shape[0]


def init_prompt_bank(
    rng: np.random.Generator, num_categories: int, d_tok: int, num_tokens: int = 4
) -> PromptBank:
    tokens = ad.parameter(rng.normal(0.0, 0.02, size=(num_tokens, d_tok)))
    words = ad.constant(rng.normal(0.0, 1.0 / np.sqrt(d_tok), size=(num_categories, d_tok)))
    return PromptBank(tokens=tokens, word_embeddings=words)


def init_encoder_projection(rng: np.random.Generator, d_tok: int, d: int) -> DiffNode:
    """Frozen projection of the toy encoder (the encoder itself is not trained)."""
    proj = uniform_weight(rng, d_tok, (d_tok, d))
    proj.requires_grad = False
    return proj


def toy_text_encode_all(bank: PromptBank, proj: DiffNode) -> DiffNode:
    """Encode every category: mean of [tokens..., word_j], layer-normalized,
    linearly projected to the visual width.  Differentiable w.r.t. tokens."""
    count = bank.num_tokens + 1
    token_sum = ad.sum_(bank.tokens, axis=0, keepdims=True)
    pooled = ad.mul(ad.add(token_sum, bank.word_embeddings), 1.0 / count)
    return ad.matmul(layer_norm(pooled), proj)


def toy_text_encode(bank: PromptBank, category_index: int, proj: DiffNode) -> DiffNode:
    """Encode a single category; see :func:`toy_text_encode_all`."""
    if not 0 <= category_index < bank.num_categories:
        raise IndexError(f"category index {category_index} out of range")
    row = ad.narrow(bank.word_embeddings, 0, category_index, category_index + 1)
    count = bank.num_tokens + 1
    token_sum = ad.sum_(bank.tokens, axis=0, keepdims=True)
    pooled = ad.mul(ad.add(token_sum, row), 1.0 / count)
    return ad.reshape(ad.matmul(layer_norm(pooled), proj), (proj.shape[1],))


# ---------------------------------------------------------------------------
# dynamic semantic filtering


@dataclass
class DsfParams:
    """Attention-over-patches block that filters text embeddings by context."""

    cma: CmaParams
    mlp: MlpParams
    ln_attn: LayerNormParams
    ln_mlp: LayerNormParams


def init_dsf(rng: np.random.Generator, d: int) -> DsfParams:
    return DsfParams(
        cma=init_cma(rng, d),
        mlp=init_mlp(rng, d, d, d),
        ln_attn=init_layer_norm(d),
        ln_mlp=init_layer_norm(d),
    )


def cap_forward(t_ln, x, params: DsfParams) -> DiffNode:
    """Filter learnable text embeddings through the visual context.

    filtered = cma(norm(t_ln), x) + t_ln; out = mlp(norm(filtered)) + filtered.
    """
    t_ln, x = ad.as_node(t_ln), ad.as_node(x)
    if x.shape[-2] == 0:
        raise ValueError("empty visual context")
    filtered = ad.add(cma(layer_norm(t_ln, params.ln_attn), x, params.cma), t_ln)
    return ad.add(mlp_apply(params.mlp, layer_norm(filtered, params.ln_mlp)), filtered)


def load_label_semantics(path, expected_c: int | None = None, expected_d: int | None = None):
    """Read category embeddings from a feature bundle file.

    Returns (embeddings, manifest) where manifest carries the header fields.
    Raises :class:`~sspa.errors.DataFormatError` on malformed files and
    ValueError when dimensions disagree with the expectation.
    """
    from .bundleio import read_bundle

    bundle = read_bundle(path)
    if bundle.t_ka is None:
        raise ValueError(f"{path}: bundle carries no category embedding block")
    t_ka = bundle.t_ka
    if expected_c is not None and t_ka.shape[0] != expected_c:
        raise ValueError(f"category count mismatch: file {t_ka.shape[0]}, expected {expected_c}")
    if expected_d is not None and t_ka.shape[1] != expected_d:
        raise ValueError(f"feature width mismatch: file {t_ka.shape[1]}, expected {expected_d}")
    manifest = {"C": bundle.c, "M": bundle.m, "d": bundle.d, "n": bundle.n}
    return t_ka, manifest
