"""Exception types shared across the pipeline.

ValidationError covers anything wrong with inputs or on-disk artifacts
(CLI exit code 2). TeacherServiceError covers upstream chat-API failures
that survived the retry budget (CLI exit code 3).
"""


class DistillForgeError(Exception):
    pass


class ValidationError(DistillForgeError):
    pass


class TeacherServiceError(DistillForgeError):
    pass
