import logging
from typing import NamedTuple

from anl.data.io import write_frame
from anl.types.forecast import access_frame

log = logging.getLogger(__name__)


class AuditResult(NamedTuple):
    passed: bool
    violations: list
    checked: int

    @property
    def message(self):
        if self.passed:
            return 'passed (%d accesses)' % self.checked
        first = self.violations[0]
        return ('%s at %s consumed observation of %s (%d violations)'
                % (first.kind, first.timestamp, first.consumed_timestamp, len(self.violations)))

    def to_dict(self):
        return {
            'passed': self.passed,
            'checked': self.checked,
            'violations': [v.to_dict() for v in self.violations],
        }


def newest_allowed(record, delay):
    """Newest grid position the access may read.

    An update at time t may consume observations up to t - delay. A feature read for the
    forecast at t may use values up to t - delay, and never t itself.
    """
    if record.is_update:
        return record.position - delay
    return record.position - max(delay, 1)


def audit_no_lookahead(access_log, delay):
    """Check that no access read an observation newer than its delay allows."""
    delay = int(delay)
    access_log = list(access_log)
    violations = [r for r in access_log if r.consumed > newest_allowed(r, delay)]
    result = AuditResult(not violations, violations, len(access_log))
    if violations:
        log.warning('audit_no_lookahead(): %s', result.message)
    else:
        log.debug('audit_no_lookahead(): %s', result.message)
    return result


def write_access_log(access_log, path):
    write_frame(access_frame(access_log), path)
