class HspimError(Exception):
    """Base class for every error raised by the scoring engine."""


class ConfigError(HspimError):
    pass


# Corpus

class CorpusError(HspimError):
    pass


class DatasetNotFound(CorpusError):
    pass


class UnknownFormat(CorpusError):
    pass


class MalformedRecord(CorpusError):
    def __init__(self, paper_id, field, detail=''):
        self.paper_id = paper_id
        self.field = field
        message = f'paper {paper_id!r}: invalid field {field!r}'
        if detail:
            message = f'{message} ({detail})'
        super().__init__(message)


class MissingReviews(CorpusError):
    def __init__(self, paper_id):
        self.paper_id = paper_id
        super().__init__(f'paper {paper_id!r} has no reviews')


# Segmentation and classification

class SegmentationError(HspimError):
    pass


class ClassificationError(HspimError):
    def __init__(self, message, paper_id=None, chunk_index=None):
        self.paper_id = paper_id
        self.chunk_index = chunk_index
        super().__init__(message)


# Gateway

class GatewayError(HspimError):
    pass


class TransportError(GatewayError):
    def __init__(self, message, attempts=0):
        self.attempts = attempts
        super().__init__(message)


class AuthenticationFailed(GatewayError):
    pass


class BudgetExceeded(GatewayError):
    pass


class JSONContractError(GatewayError):
    def __init__(self, message, text=''):
        self.text = text
        super().__init__(message)


# Questions, pipeline, aggregation

class QuestionError(HspimError):
    pass


class PipelineError(HspimError):
    def __init__(self, message, paper_id=None, chunk_index=None):
        self.paper_id = paper_id
        self.chunk_index = chunk_index
        if paper_id is None:
            super().__init__(message)
            return
        where = f'paper {paper_id!r}'
        if chunk_index is not None:
            where = f'{where}, chunk {chunk_index}'
        super().__init__(f'{where}: {message}')


class AggregationError(HspimError):
    pass


class NoSurvivingChunks(AggregationError):
    def __init__(self, message='no surviving chunks'):
        super().__init__(message)


# Metrics and optimization

class MetricsError(HspimError):
    pass


class KeyMismatch(MetricsError):
    def __init__(self, missing_predictions, missing_labels):
        self.missing_predictions = sorted(missing_predictions)
        self.missing_labels = sorted(missing_labels)
        super().__init__(
            f'prediction/label keys differ: only labeled {self.missing_predictions}, '
            f'only predicted {self.missing_labels}'
        )


class OptimizerError(HspimError):
    def __init__(self, message, partial_report=None):
        self.partial_report = partial_report
        super().__init__(message)
