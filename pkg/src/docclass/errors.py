"""Exception hierarchy shared by all docclass modules."""


class DocClassError(Exception):
    """Base class for every error raised by this package."""


# dataset
class MissingFile(DocClassError):
    pass


class MalformedManifest(DocClassError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class UnknownLabel(DocClassError):
    def __init__(self, doc_id, label=None):
        self.doc_id = doc_id
        self.label = label
        super().__init__(doc_id)


class DuplicateDocId(DocClassError):
    def __init__(self, doc_id):
        self.doc_id = doc_id
        super().__init__(doc_id)


class UnsupportedFormat(DocClassError):
    pass


class CorruptDocument(DocClassError):
    pass


class RasterizerUnavailable(DocClassError):
    pass


# vector algebra / metrics
class DimensionMismatch(DocClassError):
    pass


class ZeroVector(DocClassError):
    pass


class EmptyInput(DocClassError):
    pass


class DegenerateCentroid(DocClassError):
    def __init__(self, label):
        self.label = label
        super().__init__(f"centroid of class {label!r} has zero norm")


class TooFewClasses(DocClassError):
    pass


# classification
class EmptyClassSet(DocClassError):
    pass


class MissingPlaceholder(DocClassError):
    pass


class Unparseable(DocClassError):
    pass


# providers
class ProviderError(DocClassError):
    """An inference endpoint call failed.

    ``kind`` is one of ``timeout``, ``http_status``, ``decode`` or ``config``.
    """

    def __init__(self, message, kind="http_status", http_status=None, context=None):
        self.kind = kind
        self.http_status = http_status
        self.context = context
        if context:
            message = f"{context}: {message}"
        super().__init__(message)

    def with_context(self, context):
        return type(self)(str(self), kind=self.kind, http_status=self.http_status, context=context)


class ContentFiltered(ProviderError):
    def __init__(self, message="endpoint refused the request", kind="content_filter", http_status=None, context=None):
        super().__init__(message, kind=kind, http_status=http_status, context=context)


class InvalidRequest(DocClassError):
    pass


# evaluation
class UnknownDoc(DocClassError):
    pass


class DuplicatePrediction(DocClassError):
    pass


class DuplicateKey(DocClassError):
    pass


class IoError(DocClassError):
    pass


# cli
class StageError(DocClassError):
    def __init__(self, message, stage=None):
        self.stage = stage
        super().__init__(message)
