"""Prompt templates for every LLM stage of the pipeline.

Placeholders use ``string.Template`` syntax (``${name}``); rendering with a
missing binding raises :class:`TemplateError`.
"""

from __future__ import annotations

import enum
import string
from dataclasses import dataclass
from typing import Mapping

from ..errors import TemplateError


class TemplateId(str, enum.Enum):
    TOPIC_SUMMARIZATION = "TopicSummarization"
    RAG_OUTLINE_GENERATION = "RagOutlineGeneration"
    ATTRIBUTES_EXTRACTION = "AttributesExtraction"
    ATTRIBUTES_TO_QUERIES = "AttributesToQueries"
    QUERIES_MERGING = "QueriesMerging"
    OPERATION_GENERATION = "OperationGeneration"
    OUTLINE_REFINEMENT = "OutlineRefinement"
    PLAN_GENERATION = "PlanGeneration"
    SECTION_WRITING = "SectionWriting"


@dataclass(frozen=True)
class PromptTemplate:
    id: TemplateId
    body: str
    # binding used as the lookup key by mock providers and transcripts
    key_field: str = "topic"

    @property
    def placeholders(self) -> set[str]:
        names = set()
        for m in string.Template.pattern.finditer(self.body):
            name = m.group("named") or m.group("braced")
            if name:
                names.add(name)
        return names

    def render(self, bindings: Mapping[str, str]) -> str:
        missing = sorted(self.placeholders - set(bindings))
        if missing:
            raise TemplateError(f"{self.id.value}: unbound placeholders {missing}")
        try:
            return string.Template(self.body).substitute({k: str(v) for k, v in bindings.items()})
        except (KeyError, ValueError) as exc:
            raise TemplateError(f"{self.id.value}: {exc}") from exc


_TOPIC_SUMMARIZATION = """\
You are compiling material for an encyclopedia page and have just run a web \
search for its topic. Check whether the topic is ambiguous or could refer to \
several different things. Then, using the search results, write a short \
introduction that pins down what the topic is, so later writing steps stay \
on target. Keep the introduction to at most three sentences.

Topic: ${topic}

Search results:
${search_results}

Reply with the introduction only."""

_RAG_OUTLINE_GENERATION = """\
Draft the section outline of an encyclopedia page.
Formatting rules:
1. Mark a section with "# Title", a subsection with "## Title", a \
subsubsection with "### Title", and so on.
2. Output headings only, nothing else.
3. The topic name itself must not appear as a heading.

Topic: ${topic}

Short introduction: ${brief}

Search context:
${search_results}

Outlines of related topics:
${exemplars}

Outline for the topic:"""

_ATTRIBUTES_EXTRACTION = """\
List the attributes someone would need to research in order to write the \
encyclopedia page for this topic, based on its outline. Keep every attribute \
simple: one indivisible aspect per attribute.
Formatting rules:
1. One attribute per line, without bullets, numbers or other markup.
2. Output attributes only, nothing else.
3. The topic name itself must not appear in the list.

Topic: ${topic}

Outline:
${outline}

Attributes:"""

_ATTRIBUTES_TO_QUERIES = """\
You will look up the attributes below with a web search engine. Write the \
search queries you would enter, one per line, in this format:
- first query
- second query
- ...

Topic: ${topic}

Attributes:
${attributes}

Reply with the queries only."""

_QUERIES_MERGING = """\
You are researching an encyclopedia article. Below are the topic, the \
current list of search queries, and the queries used for some related \
topics. Revise the list: keep useful queries, improve weak ones and add \
missing angles suggested by the related topics, so that the final list \
covers what the article needs and works well in a web search engine.
Reply in this format only:
- first query
- second query
- ...

Topic: ${topic}

Current queries:
${queries}

Related topics and their queries:
${similar_queries}

Final queries:"""

_OPERATION_GENERATION = """\
You are revising the outline of an encyclopedia page. You get a draft \
outline and the titles of pages found by a web search. Allowed edits:
-[add section] : section_title
-[delete section] : section_title
If the outline needs no change, reply with the single line:
-[do nothing]

List the edits one per line and write nothing else.

Topic: ${topic}

Draft outline:
${outline}

Search result titles:
${titles}

Edits:"""

_OUTLINE_REFINEMENT = """\
You are revising the outline of an encyclopedia page. Apply the listed edits \
(-[add section], -[delete section], -[do nothing]) to the draft outline, then \
polish the outline as a whole. Reply with the revised outline only, using \
"#" headings.

Topic: ${topic}

Draft outline:
${outline}

Edits:
${operations}

Revised outline:"""

_PLAN_GENERATION = """\
You plan the writing order of an encyclopedia article. For each first-level \
section, list the first-level sections that should be written before it \
because their content helps it read coherently. Foundational sections such \
as "Background" usually need nothing; summarising sections such as \
"Introduction" or "Conclusion" usually need everything else. Write "None" \
when a section needs no other section. Join a section and its prerequisites \
with '<-', only use first-level section titles from the outline, and keep \
the plan acyclic. Output the plan only.

Example:
${example}

Topic: ${topic}

Outline:
${outline}

Plan:"""

_SECTION_WRITING = """\
Write one section of an encyclopedia page from the numbered sources below.
1. Mark the section with "# Title", subsections with "## Title", and so on.
2. Cite sources inline by number, e.g. "Paris is the capital of France.[1][3]".
Do not add a references or sources list.

Sources:
${collected_info}

Page topic: ${topic}

Already written sections:
${other_sections}

Section to write: ${section_title}

Section outline:
${section_outline}

Begin with "# ${section_title}" and write only this section:"""

PLAN_EXAMPLE = """\
Topic: Eiffel Tower
Outline:
# Design
# Construction
# Reception
# Legacy
Plan:
Design <- None
Construction <- Design
Reception <- Design <- Construction
Legacy <- Construction <- Reception"""

TEMPLATES: dict[TemplateId, PromptTemplate] = {
    t.id: t
    for t in (
        PromptTemplate(TemplateId.TOPIC_SUMMARIZATION, _TOPIC_SUMMARIZATION),
        PromptTemplate(TemplateId.RAG_OUTLINE_GENERATION, _RAG_OUTLINE_GENERATION),
        PromptTemplate(TemplateId.ATTRIBUTES_EXTRACTION, _ATTRIBUTES_EXTRACTION),
        PromptTemplate(TemplateId.ATTRIBUTES_TO_QUERIES, _ATTRIBUTES_TO_QUERIES),
        PromptTemplate(TemplateId.QUERIES_MERGING, _QUERIES_MERGING),
        PromptTemplate(TemplateId.OPERATION_GENERATION, _OPERATION_GENERATION),
        PromptTemplate(TemplateId.OUTLINE_REFINEMENT, _OUTLINE_REFINEMENT),
        PromptTemplate(TemplateId.PLAN_GENERATION, _PLAN_GENERATION),
        PromptTemplate(TemplateId.SECTION_WRITING, _SECTION_WRITING, key_field="section_title"),
    )
}


def get_template(template_id: TemplateId | str) -> PromptTemplate:
    try:
        return TEMPLATES[TemplateId(template_id)]
    except ValueError as exc:
        raise TemplateError(f"unknown template {template_id!r}") from exc
