"""Export VLM page/query embeddings as hybridoc dump files."""

from .config import (AdapterConfig, AdapterError, PROMPT_PRESETS,  # noqa: F401
                     load_config)
from .encoders import (MockEncoder, PageDecodeError, PageEncoder,  # noqa: F401
                       register_encoder)
from .export import ExportStats, export_corpus, export_queries  # noqa: F401
