import functools
import logging


log = logging.getLogger(__name__)


class AnlException(Exception):
    """Base error of the package.

    ``exit_code`` is the process exit status the command line reports for the error,
    ``code`` a stable numeric identifier (2xxxx config, 3xxxx data, 4xxxx numerical).
    """

    def __new__(cls, message, exit_code, code, cause=None):
        if cls == AnlException:
            subclass = _subclass_for_exit_code.get(exit_code)
            if subclass is not None:
                return subclass(message, exit_code, code, cause)
        return super().__new__(cls, message, exit_code, code, cause)

    def __init__(self, message, exit_code, code, cause=None):
        super().__init__()
        self.message = message
        self.code = code
        self.exit_code = exit_code
        self.cause = cause

    def __str__(self):
        str = '%s %s' % (self.code, self.message)
        if self.cause is not None:
            str += ' (cause: %s)' % self.cause
        return str

    def with_stage(self, stage):
        """Prefix the message with the pipeline stage that failed."""
        if not self.message.startswith(stage + ':'):
            self.message = '%s: %s' % (stage, self.message)
        return self

    @staticmethod
    def from_exception(e):
        if isinstance(e, AnlException):
            return e
        return AnlException("Unexpected exception: %s" % e, 1, 10000, cause=e)

    @staticmethod
    def from_dict(value: dict):
        return AnlException(value.get('message'), value.get('exitCode'), value.get('code'))

    def to_dict(self):
        return {
            'message': self.message,
            'exitCode': self.exit_code,
            'code': self.code,
        }


def catch_all(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except Exception as e:
            if not isinstance(e, AnlException):
                log.exception(e)
            raise AnlException.from_exception(e)

    return wrapper


class ConfigException(AnlException):
    pass


class DataException(AnlException):
    pass


class NumericalException(AnlException):
    pass


class LookaheadException(DataException):
    pass


_subclass_for_exit_code = {
    2: ConfigException,
    3: DataException,
    4: NumericalException,
}
