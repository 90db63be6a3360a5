"""Exception hierarchy; every error the CLI surfaces derives from TableScoutError."""


class TableScoutError(Exception):
    """Base class for all tablescout failures."""

    code = "error"


class CorpusError(TableScoutError):
    code = "corpus"


class EmbeddingError(TableScoutError):
    code = "embeddings"


class SamplingError(TableScoutError):
    code = "sampling"


class ModelError(TableScoutError):
    code = "model"


class TrainerError(TableScoutError):
    code = "trainer"


class SearchIndexError(TableScoutError):
    code = "index"


class SerializationError(TableScoutError):
    code = "serialization"


class EvalError(TableScoutError):
    code = "eval"


class Bm25Error(TableScoutError):
    code = "bm25"
