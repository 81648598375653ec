"""distill-forge: dataset machinery for distilling document understanding skills.

The package covers the data side of a teacher/student distillation loop:
loading OCR corpora, rendering pages to layout-preserving text, building
JSON-answer prompts, collecting teacher labels from an OpenAI-compatible
endpoint, sampling difficulty-ordered epoch datasets, and scoring student
predictions.
"""

__version__ = "0.1.0"
